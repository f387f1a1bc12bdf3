//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::time::{Duration, Instant};

use axum::body::{Body, Bytes};
use axum::http::{Request, StatusCode};
use futures::StreamExt;
use http_body_util::BodyExt;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tokio_tungstenite::tungstenite::Message;
use tower::ServiceExt;
use vsg::server::{router, AppState, KeyframeRequest, StateMessage, StreamMessage};
use vsg_core::detection::{Detection, Mask, SyntheticDetector};
use vsg_core::eval::{align_rigid, nearest_view_angle, nearest_view_distance, AnglePairing};
use vsg_core::frame::{CameraFrame, Raster};
use vsg_core::geometry::{axis_angle, back_project, project, Aabb, Mat3};
use vsg_core::scoring::{is_complex, DEFAULT_THRESHOLD};
use vsg_core::session::{CaptureSession, Pipeline, SessionConfig, SessionEvent};
use vsg_core::sim::{Scene, Trajectory};
use vsg_core::sphere::{
    display_mode, distribute_subsurfaces, generate_sphere, merge, occlusion_alpha, DisplayConfig,
    MergeConfig, SphereProxy, DEFAULT_DEPTH_TOLERANCE, DEFAULT_RADIUS_SCALE,
};
use vsg_core::state::StateSnapshot;
use vsg_core::{Intrinsics, Pose, Vec3};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    check(elapsed < limit, || format!("took {elapsed:?}, limit {limit:?}"))
}

fn unit(rng: &mut ChaCha8Rng) -> Vec3 {
    loop {
        let v = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            return v / n;
        }
    }
}

fn random_pose(rng: &mut ChaCha8Rng) -> Pose {
    let angle = rng.random_range(-3.1..3.1);
    let t = Vec3::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
    Pose::new(axis_angle(&unit(rng), angle), t).unwrap()
}

fn merge_formula() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let dirs = distribute_subsurfaces(32).unwrap();
    let cfg = MergeConfig::default();
    let (mut worst, mut absorbed) = (0.0f64, 0);
    for i in 0..1000u64 {
        let r1: f64 = rng.random_range(0.05..1.0);
        let r2: f64 = rng.random_range(0.05..1.0);
        let c1 = Vec3::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
        let c2 = c1 + unit(&mut rng) * (rng.random_range(0.0..0.999) * (r1 + r2));
        let a = SphereProxy::new(2 * i, c1, r1, &dirs, 0.0, "vase").unwrap();
        let b = SphereProxy::new(2 * i + 1, c2, r2, &dirs, 1.0, "bottle").unwrap();
        let m = merge(&a, &b, &cfg).map_err(|e| e.to_string())?;
        let d = (c1 - c2).norm();
        let (large, small) = if r1 >= r2 { (&a, &b) } else { (&b, &a) };
        if d + small.radius <= large.radius {
            absorbed += 1;
            check(m == *large, || format!("pair {i}: containment did not return the larger sphere"))?;
            continue;
        }
        let c = (c1 + c2) / 2.0;
        let r = (r1 + r2 + d) / 2.0;
        worst = worst.max((m.center - c).norm()).max((m.radius - r).abs());
        check(m.radius != large.radius || m.center != large.center, || format!("pair {i}: absorbed without containment"))?;
    }
    check(worst <= 1e-12, || format!("max error {worst:e}"))?;
    // boundary: d + r_small == r_large exactly
    let big = SphereProxy::new(1, Vec3::zeros(), 1.0, &dirs, 0.0, "vase").unwrap();
    let edge = SphereProxy::new(2, Vec3::new(0.5, 0.0, 0.0), 0.5, &dirs, 1.0, "vase").unwrap();
    let past = SphereProxy::new(3, Vec3::new(0.5, 0.0, 0.0), 0.5000001, &dirs, 1.0, "vase").unwrap();
    check(merge(&big, &edge, &cfg).unwrap() == big, || "boundary containment not absorbed".into())?;
    check(merge(&big, &past, &cfg).unwrap() != big, || "absorbed just past the boundary".into())?;
    within(start.elapsed(), Duration::from_secs(1))?;
    Ok(format!("1000 pairs ({absorbed} contained), max error {worst:.1e}, {:?}", start.elapsed()))
}

fn back_projection() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let (w, h) = (rng.random_range(16..2000u32), rng.random_range(16..2000u32));
        let fy = rng.random_range(20.0..3000.0);
        let intr = Intrinsics::new(
            fy * rng.random_range(0.5..2.0),
            fy,
            rng.random_range(0.0..f64::from(w - 1)),
            rng.random_range(0.0..f64::from(h - 1)),
            w,
            h,
        )
        .unwrap();
        let pose = random_pose(&mut rng);
        let (u, v, d) = (rng.random_range(0.0..f64::from(w)), rng.random_range(0.0..f64::from(h)), rng.random_range(0.05..50.0));
        let p = back_project(u, v, d, &intr, &pose).map_err(|e| e.to_string())?;
        let (u2, v2, d2) = project(&p, &intr, &pose).map_err(|e| e.to_string())?;
        let rel = ((u2 - u).abs() / u.abs().max(1.0))
            .max((v2 - v).abs() / v.abs().max(1.0))
            .max((d2 - d).abs() / d);
        worst = worst.max(rel);
    }
    check(worst <= 1e-9, || format!("round trip relative error {worst:e}"))?;

    let mut chain = 0.0f64;
    for _ in 0..200 {
        let side = rng.random_range(2..60u32);
        let (u0, v0) = (rng.random_range(side..300), rng.random_range(side..200));
        let pixels: Vec<(u32, u32)> = (v0..v0 + side).flat_map(|v| (u0..u0 + side).map(move |u| (u, v))).collect();
        let det = Detection::from_mask(Mask::new(pixels).unwrap(), "vase", 1.0).unwrap();
        // principal point on the mask centroid
        let c = f64::from(side - 1) / 2.0;
        let f = rng.random_range(100.0..1500.0);
        let intr = Intrinsics::new(f, f, f64::from(u0) + c, f64::from(v0) + c, 480, 360).unwrap();
        let d = f64::from(rng.random_range(0.2f32..8.0));
        let frame = CameraFrame::new(
            Raster::filled(480, 360, [0; 3]),
            Raster::filled(480, 360, d as f32),
            intr,
            random_pose(&mut rng),
            0.0,
        )
        .unwrap();
        let s = generate_sphere(&det, &frame, DEFAULT_RADIUS_SCALE, 32).map_err(|e| e.to_string())?;
        let extent = f64::from(side - 1);
        let expected = d * DEFAULT_RADIUS_SCALE * extent / f;
        chain = chain.max((s.radius - expected).abs() / expected);
    }
    check(chain <= 1e-9, || format!("radius chain relative error {chain:e}"))?;
    within(start.elapsed(), Duration::from_secs(1))?;
    Ok(format!("round trip {worst:.1e}, radius chain {chain:.1e}, {:?}", start.elapsed()))
}

fn alpha_values() -> Outcome {
    let t = DEFAULT_DEPTH_TOLERANCE;
    check(t == 0.05, || format!("default tolerance {t}"))?;
    // gaps measured from a zero scene depth stay exact
    let got: Vec<f64> = [-t, 0.0, t / 2.0, t, 2.0 * t].iter().map(|g| occlusion_alpha(*g, 0.0, t)).collect();
    check(got == [1.0, 1.0, 0.5, 0.0, 0.0], || format!("alpha values {got:?}"))?;
    Ok(format!("{got:?} at t = {t} m"))
}

fn display_thresholds() -> Outcome {
    let cfg = DisplayConfig::default();
    let vfov = 60f64.to_radians();
    let r = 0.3;
    let sphere = SphereProxy::new(1, Vec3::zeros(), r, &distribute_subsurfaces(8).unwrap(), 0.0, "vase").unwrap();
    let mode = |dist: f64| display_mode(&sphere, &Pose::from_translation(Vec3::new(0.0, 0.0, -dist)), vfov, &cfg);
    // distance where the sphere fills half the view splits the two boundaries
    let split = r / (0.25 * vfov).sin();
    let mut lines = Vec::new();
    for (fraction, mut lo, mut hi) in [(0.20, split, 100.0), (1.00, r * 1.0001, split)] {
        let (near, far) = (mode(lo), mode(hi));
        check(near != far, || format!("no boundary bracketed for {fraction}"))?;
        while hi - lo > 1e-10 {
            let mid = (lo + hi) / 2.0;
            if mode(mid) == near {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let analytic = r / (fraction * vfov / 2.0).sin();
        let err = (hi - analytic).abs();
        check(err <= 1e-6, || format!("boundary {fraction}: found {hi}, analytic {analytic}"))?;
        lines.push(format!("{near:?}/{far:?} at {analytic:.6} m (err {err:.1e})"));
    }
    Ok(lines.join(", "))
}

fn subsurface_uniformity() -> Outcome {
    let start = Instant::now();
    let dirs = distribute_subsurfaces(256).map_err(|e| e.to_string())?;
    let nearest: Vec<f64> = dirs
        .iter()
        .enumerate()
        .map(|(i, a)| {
            dirs.iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, b)| a.dot(b).clamp(-1.0, 1.0).acos())
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    let n = nearest.len() as f64;
    let mean = nearest.iter().sum::<f64>() / n;
    let sd = (nearest.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
    let cv = sd / mean;
    check(cv < 0.25, || format!("cv {cv}"))?;
    within(start.elapsed(), Duration::from_secs(1))?;
    Ok(format!("n = 256, cv = {cv:.4}, {:?}", start.elapsed()))
}

fn cadence() -> Outcome {
    let bounds = Aabb::new(Vec3::new(-1.0, -1.0, -1.0), Vec3::new(1.0, 1.0, 1.0)).unwrap();
    let scene = Scene::new(bounds, Vec::new(), None, None).map_err(|e| e.to_string())?;
    let detector = SyntheticDetector::new(scene);
    let table = vsg::bundled::prior_table();
    let pipeline = Pipeline {
        detector: &detector,
        table: &table,
    };
    let mut cfg = SessionConfig::new(bounds);
    cfg.processing_width = 4;
    cfg.processing_height = 3;
    let mut session = CaptureSession::new(cfg).map_err(|e| e.to_string())?;
    let intr = Intrinsics::from_vertical_fov(4, 3, 1.0).unwrap();
    let (mut oracle_frames, mut oracle_keys) = (0, 0);
    for k in 0..=600u32 {
        let t = f64::from(k) * 0.1;
        let frame = CameraFrame::new(Raster::filled(4, 3, [0; 3]), Raster::filled(4, 3, 0.0), intr, Pose::identity(), t).unwrap();
        session.ingest(&frame, pipeline).map_err(|e| e.to_string())?;
        oracle_frames += usize::from(k % 2 == 0);
        oracle_keys += usize::from(k % 50 == 0);
    }
    let (frames, keys) = (session.frames().len(), session.keyframes().len());
    check((frames, keys) == (301, 13), || format!("{frames} frames, {keys} keyframes"))?;
    check((frames, keys) == (oracle_frames, oracle_keys), || "disagrees with counting oracle".into())?;
    Ok(format!("{frames} frames, {keys} keyframes over 601 inputs"))
}

fn end_to_end() -> Outcome {
    let scene = vsg::bundled::desk_scene();
    let orbit = vsg::bundled::desk_orbit();
    let table = vsg::bundled::prior_table();
    let mut snaps = Vec::new();
    let mut times = Vec::new();
    let mut last = None;
    for _ in 0..2 {
        let start = Instant::now();
        let session = vsg::runner::simulate(&scene, &orbit, &table, vsg::runner::session_config(&scene), None)
            .map_err(|e| e.to_string())?;
        times.push(start.elapsed());
        snaps.push(vsg::snapshot::snapshot(&session));
        last = Some(session);
    }
    let session = last.unwrap();
    let status = session.completion_status();
    check(status.spheres.len() == 1, || format!("{} spheres", status.spheres.len()))?;
    let merges = session.events().iter().filter(|e| matches!(e, SessionEvent::SpheresMerged { .. })).count();
    check(merges > 0, || "the sphere was never merged".into())?;
    let covered = 1.0 - status.remaining_subsurfaces as f64 / status.total_subsurfaces as f64;
    check(covered >= 0.95, || format!("covered {covered}"))?;
    check(status.unobserved_fraction < 0.05, || format!("unobserved {}", status.unobserved_fraction))?;
    check(snaps[0] == snaps[1], || "snapshots differ between runs".into())?;
    for t in &times {
        within(*t, Duration::from_secs(60))?;
    }
    Ok(format!(
        "1 sphere ({}, {merges} merges), {:.1}% covered, unobserved {:.4}, snapshots identical ({} bytes), runs {:?} / {:?}",
        status.spheres[0].category,
        100.0 * covered,
        status.unobserved_fraction,
        snaps[0].len(),
        times[0],
        times[1]
    ))
}

fn scoring_gate() -> Outcome {
    let table = vsg::bundled::prior_table();
    let mut parts = Vec::new();
    for (category, want) in [("vase", true), ("bottle", true), ("cellphone", true), ("desk", false), ("floor", false), ("wall", false)] {
        let got = is_complex(category, &table, DEFAULT_THRESHOLD).map_err(|e| e.to_string())?;
        check(got == want, || format!("{category} complex = {got}"))?;
        parts.push(format!("{category} {:.0}", table.score(category).unwrap()));
    }
    Ok(format!("threshold {DEFAULT_THRESHOLD}: {}", parts.join(", ")))
}

fn oracle_stats(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = if values.len() > 1 {
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

fn angle_deg(a: &Mat3, b: &Mat3) -> f64 {
    (((a.transpose() * b).trace() - 1.0) / 2.0).clamp(-1.0, 1.0).acos().to_degrees()
}

fn evaluation_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let train: Vec<Pose> = (0..rng.random_range(1..40)).map(|_| random_pose(&mut rng)).collect();
        let gt: Vec<Pose> = (0..rng.random_range(1..40)).map(|_| random_pose(&mut rng)).collect();
        let mut dists = Vec::new();
        let mut angles = Vec::new();
        for g in &gt {
            let mut best = (f64::INFINITY, 0);
            for (j, t) in train.iter().enumerate() {
                let d = (t.position() - g.position()).norm();
                if d < best.0 {
                    best = (d, j);
                }
            }
            dists.push(best.0);
            angles.push(angle_deg(g.rotation(), train[best.1].rotation()));
        }
        let (dm, ds) = oracle_stats(&dists);
        let (am, asd) = oracle_stats(&angles);
        let d = nearest_view_distance(&train, &gt).map_err(|e| e.to_string())?;
        let a = nearest_view_angle(&train, &gt, AnglePairing::NearestPosition).map_err(|e| e.to_string())?;
        worst = worst
            .max((d.mean - dm).abs())
            .max((d.sd - ds).abs())
            .max((a.mean - am).abs())
            .max((a.sd - asd).abs());
    }
    check(worst <= 1e-9, || format!("oracle disagreement {worst:e}"))?;

    let set: Vec<Pose> = (0..50).map(|_| random_pose(&mut rng)).collect();
    let d = nearest_view_distance(&set, &set).unwrap();
    let a = nearest_view_angle(&set, &set, AnglePairing::NearestPosition).unwrap();
    check(d.mean == 0.0 && d.sd == 0.0 && a.mean.abs() < 1e-9 && a.sd.abs() < 1e-9, || format!("identical sets: {d:?} {a:?}"))?;

    let mut align = 0.0f64;
    for _ in 0..100 {
        let pts: Vec<Vec3> = (0..rng.random_range(4..40))
            .map(|_| Vec3::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)))
            .collect();
        let rot = axis_angle(&unit(&mut rng), rng.random_range(-3.1..3.1));
        let scale = rng.random_range(0.2..5.0);
        let shift = Vec3::new(rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0));
        let moved: Vec<Vec3> = pts.iter().map(|p| scale * (rot * p) + shift).collect();
        let sim = align_rigid(&pts, &moved).map_err(|e| e.to_string())?;
        align = align
            .max((sim.scale - scale).abs() / scale)
            .max((sim.rotation - rot).abs().max())
            .max((sim.translation - shift).norm() / shift.norm().max(1.0));
    }
    check(align <= 1e-9, || format!("alignment error {align:e}"))?;
    Ok(format!("100 sets, max oracle error {worst:.1e}; identical sets 0 ± 0; alignment error {align:.1e}"))
}

async fn post(app: &AppState, uri: &str, body: String) -> (StatusCode, Bytes) {
    let req = Request::post(uri).header("content-type", "application/json").body(Body::from(body)).unwrap();
    let resp = router(app.clone()).oneshot(req).await.unwrap();
    let status = resp.status();
    (status, resp.into_body().collect().await.unwrap().to_bytes())
}

async fn get_state(app: &AppState, id: &str) -> StateMessage {
    let req = Request::get(format!("/v1/session/{id}/state")).body(Body::empty()).unwrap();
    let resp = router(app.clone()).oneshot(req).await.unwrap();
    serde_json::from_slice(&resp.into_body().collect().await.unwrap().to_bytes()).unwrap()
}

async fn protocol_async() -> Outcome {
    // record a short dataset, then replay it through the server
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let scene = vsg::bundled::desk_scene();
    let table = vsg::bundled::prior_table();
    let short = Trajectory::new(vsg::bundled::desk_orbit().samples()[..24].to_vec()).map_err(|e| e.to_string())?;
    let mut writer = vsg::dataset::DatasetWriter::create(dir.path()).map_err(|e| e.to_string())?;
    vsg::runner::simulate(&scene, &short, &table, vsg::runner::session_config(&scene), Some(&mut writer))
        .map_err(|e| e.to_string())?;
    writer.finish().map_err(|e| e.to_string())?;
    let frames = vsg::dataset::read_dataset(dir.path()).map_err(|e| e.to_string())?;

    let app = AppState::new(table.clone());
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    let (stop, stopped) = tokio::sync::oneshot::channel::<()>();
    let server = tokio::spawn(vsg::server::serve(listener, app.clone(), async {
        let _ = stopped.await;
    }));
    let (status, created) = post(&app, "/v1/session", "{}".into()).await;
    check(status == StatusCode::OK, || "session creation failed".into())?;
    let id = serde_json::from_slice::<serde_json::Value>(&created).unwrap()["id"].as_str().unwrap().to_string();
    let (mut ws, _) = tokio_tungstenite::connect_async(format!("ws://{addr}/v1/session/{id}/events"))
        .await
        .map_err(|e| e.to_string())?;

    let uri = format!("/v1/session/{id}/keyframe");
    let mut duplicates = 0;
    for (meta, frame) in &frames {
        let body = serde_json::to_string(&KeyframeRequest::from_frame(meta.index, frame)).unwrap();
        let first = post(&app, &uri, body.clone()).await;
        check(first.0 == StatusCode::OK, || format!("keyframe {} -> {}", meta.index, first.0))?;
        if meta.keyframe {
            let again = post(&app, &uri, body).await;
            check(again == first, || format!("duplicate of frame {} not byte-identical", meta.index))?;
            duplicates += 1;
        }
    }

    let mut offline = CaptureSession::new(vsg::runner::session_config(&scene)).unwrap();
    let detector = SyntheticDetector::new(scene.clone());
    for (_, frame) in &frames {
        offline
            .ingest_keyframe(frame, Pipeline { detector: &detector, table: &table })
            .map_err(|e| e.to_string())?;
    }

    let direct = get_state(&app, &id).await;
    let mut reduced: Option<StateSnapshot> = None;
    let mut stream_events = Vec::new();
    while stream_events.len() < direct.seq as usize {
        let msg = tokio::time::timeout(Duration::from_secs(30), ws.next())
            .await
            .map_err(|_| "event stream stalled".to_string())?
            .ok_or("event stream closed")?
            .map_err(|e| e.to_string())?;
        let Message::Text(text) = msg else { continue };
        match serde_json::from_str::<StreamMessage>(&text).map_err(|e| e.to_string())? {
            StreamMessage::Snapshot(s) => reduced = Some(s.state),
            StreamMessage::Delta(d) => {
                check(d.seq as usize == stream_events.len(), || "delta out of sequence".into())?;
                reduced.as_mut().ok_or("delta before snapshot")?.apply(&d.event);
                stream_events.push(d.event);
            }
        }
    }
    let _ = stop.send(());
    server.await.unwrap().map_err(|e| e.to_string())?;

    let reduced = reduced.ok_or("no snapshot received")?;
    check(reduced == direct.state, || "reduced stream differs from GET /state".into())?;
    check(reduced == StateSnapshot::from_session(&offline), || "server state differs from offline replay".into())?;
    check(stream_events == offline.events(), || "stream differs from offline event log".into())?;
    Ok(format!(
        "{} dataset frames replayed, {duplicates} duplicate keyframes byte-identical, {} deltas reduce to GET /state ({} spheres)",
        frames.len(),
        stream_events.len(),
        reduced.spheres.len()
    ))
}

fn protocol() -> Outcome {
    tokio::runtime::Builder::new_multi_thread()
        .worker_threads(2)
        .enable_all()
        .build()
        .unwrap()
        .block_on(protocol_async())
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("merge formula exactness", merge_formula),
        ("back-projection round trip and radius chain", back_projection),
        ("occlusion alpha breakpoints", alpha_values),
        ("display mode thresholds", display_thresholds),
        ("subsurface uniformity", subsurface_uniformity),
        ("capture and keyframe cadence", cadence),
        ("end-to-end desk orbit", end_to_end),
        ("scoring gate", scoring_gate),
        ("evaluation oracle", evaluation_oracle),
        ("protocol idempotence and reconstruction", protocol),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("PASS [{}] {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL [{}] {name}: {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
