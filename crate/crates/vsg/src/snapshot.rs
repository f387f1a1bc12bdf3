//! Versioned binary container for session snapshots.
//!
//! Layout: 8-byte magic, `u32` LE format version, `u32` LE manifest length,
//! the JSON manifest, then the JSON session body. The manifest records the
//! body length and SHA-256 so truncation and corruption are detected.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use vsg_core::session::CaptureSession;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"VSGSNAP\0";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub body_len: usize,
    pub body_sha256: String,
    pub frames: usize,
    pub keyframes: usize,
    pub spheres: usize,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn snapshot(session: &CaptureSession) -> Vec<u8> {
    let body = serde_json::to_vec(session).expect("session state serializes");
    let manifest = Manifest {
        format: "vsg-session".into(),
        version: VERSION,
        body_len: body.len(),
        body_sha256: hex(&Sha256::digest(&body)),
        frames: session.frames().len(),
        keyframes: session.keyframes().len(),
        spheres: session.spheres().len(),
    };
    let manifest = serde_json::to_vec(&manifest).expect("manifest serializes");
    let mut out = Vec::with_capacity(16 + manifest.len() + body.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(manifest.len() as u32).to_le_bytes());
    out.extend_from_slice(&manifest);
    out.extend_from_slice(&body);
    out
}

fn take<'a>(bytes: &mut &'a [u8], n: usize, what: &str) -> Result<&'a [u8]> {
    if bytes.len() < n {
        return Err(Error::Snapshot(format!("truncated {what}")));
    }
    let (head, tail) = bytes.split_at(n);
    *bytes = tail;
    Ok(head)
}

pub fn read_manifest(bytes: &[u8]) -> Result<(Manifest, &[u8])> {
    let mut rest = bytes;
    if take(&mut rest, 8, "magic")? != MAGIC {
        return Err(Error::Snapshot("not a session snapshot".into()));
    }
    let version = u32::from_le_bytes(take(&mut rest, 4, "version")?.try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(Error::Snapshot(format!("unsupported version {version}")));
    }
    let len = u32::from_le_bytes(take(&mut rest, 4, "manifest length")?.try_into().expect("4 bytes")) as usize;
    let manifest: Manifest =
        serde_json::from_slice(take(&mut rest, len, "manifest")?).map_err(|e| Error::Snapshot(e.to_string()))?;
    Ok((manifest, rest))
}

pub fn restore(bytes: &[u8]) -> Result<CaptureSession> {
    let (manifest, rest) = read_manifest(bytes)?;
    let mut rest = rest;
    let body = take(&mut rest, manifest.body_len, "body")?;
    if !rest.is_empty() {
        return Err(Error::Snapshot("trailing bytes after body".into()));
    }
    if hex(&Sha256::digest(body)) != manifest.body_sha256 {
        return Err(Error::Snapshot("body checksum mismatch".into()));
    }
    serde_json::from_slice(body).map_err(|e| Error::Snapshot(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use vsg_core::session::SessionConfig;

    fn fresh() -> CaptureSession {
        CaptureSession::new(SessionConfig::new(*crate::bundled::desk_scene().bounds())).unwrap()
    }

    #[test]
    fn fresh_round_trip() {
        let s = fresh();
        let bytes = snapshot(&s);
        assert_eq!(restore(&bytes).unwrap(), s);
        assert_eq!(snapshot(&restore(&bytes).unwrap()), bytes);
    }

    #[test]
    fn truncation_and_corruption_are_errors() {
        let bytes = snapshot(&fresh());
        for cut in [0, 5, 12, 40, bytes.len() - 1] {
            assert!(restore(&bytes[..cut]).is_err(), "cut at {cut}");
        }
        let mut flipped = bytes.clone();
        let last = flipped.len() - 2;
        flipped[last] ^= 0x01;
        assert!(restore(&flipped).is_err());
        let mut extended = bytes;
        extended.push(b' ');
        assert!(restore(&extended).is_err());
    }
}
