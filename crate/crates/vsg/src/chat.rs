//! Rebuilding the prior table from any chat-style model.
//!
//! The model is asked the scoring prompt once per metric and must answer one
//! `id: score` line per category (extra text on a line is ignored; the last
//! integer on the line is taken as the score).

use vsg_core::scoring::{render_prompt, CategoryScores, Metric, PriorTable, VOCABULARY};

use crate::error::{Error, Result};

/// One prompt in, one reply out.
pub trait ChatSession {
    fn ask(&mut self, prompt: &str) -> Result<String>;
}

/// Prompt per metric over `categories`, in [`Metric::ALL`] order.
pub fn prompts(categories: &[&str]) -> Vec<(Metric, String)> {
    Metric::ALL
        .iter()
        .map(|m| (*m, render_prompt(m.name(), categories).expect("metric names are valid parameters")))
        .collect()
}

fn last_integer(s: &str) -> Option<u32> {
    s.split(|c: char| !c.is_ascii_digit())
        .rfind(|t| !t.is_empty())
        .and_then(|t| t.parse().ok())
}

/// Parse a reply into one score per category, indexed like `categories`.
pub fn parse_reply(reply: &str, categories: &[&str]) -> Result<Vec<u8>> {
    let mut scores: Vec<Option<u8>> = vec![None; categories.len()];
    for line in reply.lines() {
        let Some((id, rest)) = line.split_once(':') else { continue };
        let Ok(id) = id.trim().trim_start_matches(['-', '*', ' ']).parse::<usize>() else {
            continue;
        };
        let (Some(slot), Some(value)) = (scores.get_mut(id), last_integer(rest)) else {
            continue;
        };
        if value > 100 {
            return Err(Error::malformed("chat reply", format!("score {value} for id {id} exceeds 100")));
        }
        *slot = Some(value as u8);
    }
    scores
        .into_iter()
        .zip(categories)
        .map(|(s, c)| s.ok_or_else(|| Error::malformed("chat reply", format!("no score for {c:?}"))))
        .collect()
}

/// Ask `chat` for every metric over the full vocabulary.
pub fn regenerate_table(chat: &mut dyn ChatSession, provenance: &str) -> Result<PriorTable> {
    let mut columns = Vec::with_capacity(Metric::ALL.len());
    for (_, prompt) in prompts(VOCABULARY) {
        columns.push(parse_reply(&chat.ask(&prompt)?, VOCABULARY)?);
    }
    let rows = VOCABULARY
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let v: Vec<u8> = columns.iter().map(|col| col[i]).collect();
            Ok((c.to_string(), CategoryScores::new(v[0], v[1], v[2], v[3], v[4])?))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PriorTable::new(rows, provenance)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Answers from the bundled table, with chatty decoration.
    struct Replay {
        table: PriorTable,
        asked: Vec<String>,
    }

    impl ChatSession for Replay {
        fn ask(&mut self, prompt: &str) -> Result<String> {
            let metric = Metric::ALL
                .into_iter()
                .find(|m| prompt.contains(&format!("contain {}?", m.name())))
                .expect("prompt names a metric");
            self.asked.push(prompt.to_string());
            let mut out = String::from("Sure! Here are the scores:\n");
            for (i, c) in VOCABULARY.iter().enumerate() {
                out.push_str(&format!("- {i}: {c} (score {})\n", self.table.get(c).unwrap().get(metric)));
            }
            Ok(out)
        }
    }

    #[test]
    fn regenerates_the_table_it_is_fed() {
        let table = crate::bundled::prior_table();
        let mut chat = Replay {
            table: table.clone(),
            asked: Vec::new(),
        };
        let back = regenerate_table(&mut chat, table.provenance()).unwrap();
        assert_eq!(back, table);
        assert_eq!(chat.asked.len(), 5);
        assert!(chat.asked[0].contains("0: backpack"));
    }

    #[test]
    fn incomplete_or_out_of_range_replies_fail() {
        assert!(parse_reply("0: 10\n", &["a", "b"]).is_err());
        assert!(parse_reply("0: 101\n1: 5", &["a", "b"]).is_err());
        assert_eq!(parse_reply("1: b 7\n0: a 12\nnoise", &["a", "b"]).unwrap(), vec![12, 7]);
    }
}
