use std::collections::HashSet;
use std::path::Path;

use chrono::{DateTime, Utc};
use serde_json::Value;

use super::{parse_timestamp, Channel, FeedbackRecord, ParseOutcome, Reject};
use crate::error::{Error, Result};

/// The agency's official handles.
pub const DEFAULT_HANDLES: [&str; 4] = ["@wmata", "@wmatagm", "@metrobusinfo", "@metrorailinfo"];

fn is_handle_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_'
}

/// True when `text` contains `@handle` not followed by another handle character.
pub(crate) fn mentions(text: &str, handles: &HashSet<String>) -> bool {
    let lower = text.to_lowercase();
    let bytes = lower.as_bytes();
    lower.match_indices('@').any(|(start, _)| {
        let end = lower[start + 1..]
            .find(|c: char| !is_handle_char(c))
            .map_or(lower.len(), |off| start + 1 + off);
        end > start + 1 && handles.contains(std::str::from_utf8(&bytes[start..end]).unwrap_or(""))
    })
}

// Twitter API v1 style, e.g. "Wed Oct 10 20:19:24 +0000 2018"
fn parse_created_at(raw: &str) -> Option<DateTime<Utc>> {
    parse_timestamp(raw, None).or_else(|| {
        DateTime::parse_from_str(raw.trim(), "%a %b %d %H:%M:%S %z %Y")
            .ok()
            .map(|t| t.with_timezone(&Utc))
    })
}

fn string_field(obj: &Value, key: &str) -> Option<String> {
    match obj.get(key)? {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

/// Read tweets from JSON lines and keep those mentioning any of `handles`.
///
/// Each line needs `id` (string or integer), `text` and `created_at`; an
/// optional `user_name` (or `user.name`) becomes the record author. Blank
/// lines are skipped and do not count as rows.
pub fn parse_tweets_jsonl(path: &Path, handles: &[&str]) -> Result<ParseOutcome> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(parse_tweets_str(&text, handles))
}

pub(crate) fn parse_tweets_str(text: &str, handles: &[&str]) -> ParseOutcome {
    let handles: HashSet<String> = handles
        .iter()
        .map(|h| {
            let h = h.trim().to_lowercase();
            if h.starts_with('@') { h } else { format!("@{h}") }
        })
        .collect();
    let mut out = ParseOutcome::default();
    let mut seen = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let reject = |reason: &str| Reject {
            row: i + 1,
            reason: reason.to_string(),
        };
        let obj: Value = match serde_json::from_str(line) {
            Ok(v @ Value::Object(_)) => v,
            Ok(_) => {
                out.rejects.push(reject("not a JSON object"));
                continue;
            }
            Err(e) => {
                out.rejects.push(reject(&format!("malformed JSON: {e}")));
                continue;
            }
        };
        let (Some(id), Some(body)) = (string_field(&obj, "id"), string_field(&obj, "text")) else {
            out.rejects.push(reject("missing id or text"));
            continue;
        };
        let Some(timestamp) = string_field(&obj, "created_at").and_then(|s| parse_created_at(&s)) else {
            out.rejects.push(reject("unparseable created_at"));
            continue;
        };
        if body.trim().is_empty() {
            out.rejects.push(reject("empty text"));
            continue;
        }
        if !mentions(&body, &handles) {
            out.filtered += 1;
            continue;
        }
        if !seen.insert(id.clone()) {
            out.rejects.push(reject("duplicate id"));
            continue;
        }
        let author = string_field(&obj, "user_name")
            .or_else(|| obj.get("user").and_then(|u| string_field(u, "name")));
        out.records.push(FeedbackRecord {
            id,
            text: body,
            channel: Channel::Twitter,
            timestamp,
            problem_category: None,
            mode_hint: None,
            author,
        });
    }
    out
}
