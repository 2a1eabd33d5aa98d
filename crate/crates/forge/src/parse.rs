//! Tolerant parsers for model replies.
//!
//! The role prompts ask for small `{'Key': 'value'}` objects, but models mix
//! single and double quotes, wrap objects in prose or code fences, and drop
//! trailing commas. Parsing tries strict JSON on every balanced brace span
//! (last span first, where models usually put the final answer), then falls
//! back to a per-key scan that tolerates single quotes and embedded
//! apostrophes.


/// Extracts the given keys (case-insensitive) from the reply. Returns values
/// in key order, or `None` when any key is missing.
pub fn extract_object_fields(text: &str, keys: &[&str]) -> Option<Vec<String>> {
    for span in brace_spans(text).into_iter().rev() {
        if let Some(values) = json_fields(span, keys) {
            return Some(values);
        }
    }
    keys.iter()
        .map(|key| scan_key_value(text, key))
        .collect::<Option<Vec<_>>>()
}

/// Balanced top-level `{...}` spans in appearance order.
fn brace_spans(text: &str) -> Vec<&str> {
    let bytes = text.as_bytes();
    let mut spans = Vec::new();
    let mut start = None;
    let mut depth = 0usize;
    for (i, b) in bytes.iter().enumerate() {
        match b {
            b'{' => {
                if depth == 0 {
                    start = Some(i);
                }
                depth += 1;
            }
            b'}' if depth > 0 => {
                depth -= 1;
                if depth == 0 {
                    if let Some(s) = start.take() {
                        spans.push(&text[s..=i]);
                    }
                }
            }
            _ => {}
        }
    }
    spans
}

fn json_fields(span: &str, keys: &[&str]) -> Option<Vec<String>> {
    let value: serde_json::Value = serde_json::from_str(span).ok()?;
    let object = value.as_object()?;
    keys.iter()
        .map(|key| {
            object.iter().find_map(|(k, v)| {
                if k.eq_ignore_ascii_case(key) {
                    match v {
                        serde_json::Value::String(s) => Some(s.clone()),
                        other => Some(other.to_string()),
                    }
                } else {
                    None
                }
            })
        })
        .collect()
}

/// Finds `'key': 'value'` (or double-quoted, or unquoted-key) and captures
/// the value up to a closing quote that is followed by a delimiter, so
/// apostrophes inside the value survive.
fn scan_key_value(text: &str, key: &str) -> Option<String> {
    let lower = text.to_lowercase();
    let key_lower = key.to_lowercase();
    let mut from = 0;
    while let Some(rel) = lower[from..].find(&key_lower) {
        let key_pos = from + rel;
        let after_key = key_pos + key_lower.len();
        let rest = &text[after_key..];
        // Skip an optional closing quote around the key, whitespace, colon.
        let mut seen_colon = false;
        let mut value_start = None;
        for (i, c) in rest.char_indices() {
            match c {
                '\'' | '"' if !seen_colon => {}
                ':' if !seen_colon => seen_colon = true,
                c if c.is_whitespace() => {}
                _ if seen_colon => {
                    value_start = Some(after_key + i);
                    break;
                }
                _ => break,
            }
        }
        let Some(value_start) = value_start else {
            from = after_key;
            continue;
        };
        let value_text = &text[value_start..];
        let mut value_chars = value_text.chars();
        let first = value_chars.next()?;
        if first == '\'' || first == '"' {
            if let Some(v) = quoted_value(&value_text[first.len_utf8()..], first) {
                return Some(v);
            }
        } else {
            // Unquoted value: take the rest of the line, trimming object
            // punctuation.
            let line = value_text.lines().next().unwrap_or(value_text);
            let trimmed = line.trim_end_matches(['}', ','].as_ref()).trim();
            if !trimmed.is_empty() {
                return Some(trimmed.to_string());
            }
        }
        from = after_key;
    }
    None
}

/// Captures up to the closing quote that precedes a delimiter (`,`, `}`, a
/// newline, or end of text).
fn quoted_value(text: &str, quote: char) -> Option<String> {
    let chars: Vec<char> = text.chars().collect();
    for (i, c) in chars.iter().enumerate() {
        if *c != quote {
            continue;
        }
        if i > 0 && chars[i - 1] == '\\' {
            continue;
        }
        let mut rest = chars[i + 1..].iter().skip_while(|c| **c == ' ' || **c == '\t');
        match rest.next() {
            None | Some(',') | Some('}') | Some('\n') | Some('\r') => {
                let value: String = chars[..i].iter().collect();
                return Some(value.replace("\\'", "'").replace("\\\"", "\""));
            }
            _ => {}
        }
    }
    None
}

/// Requester reply: `{'Thought': ..., 'Question': ...}`.
pub fn parse_requester_reply(text: &str) -> Option<(String, String)> {
    let fields = extract_object_fields(text, &["thought", "question"])?;
    let [thought, question] = <[String; 2]>::try_from(fields).ok()?;
    let question = question.trim();
    if question.is_empty() {
        return None;
    }
    Some((thought.trim().to_string(), question.to_string()))
}

/// Summarizer reply: `Thought: ...` then `Final Answer: ...`.
pub fn parse_summarizer_reply(text: &str) -> Option<(String, String)> {
    let lower = text.to_lowercase();
    let marker = "final answer";
    let pos = lower.rfind(marker)?;
    let after = &text[pos + marker.len()..];
    let after = after.trim_start().strip_prefix(':').unwrap_or(after).trim_start();
    let answer_line = after.lines().next().unwrap_or("").trim();
    let answer = answer_line.trim_matches(['"', '\''].as_ref()).trim();
    if answer.is_empty() {
        return None;
    }
    let mut thought = text[..pos].trim();
    thought = thought.trim_end_matches(['\n', '\r'].as_ref());
    let thought = thought
        .trim_start()
        .strip_prefix("Thought:")
        .unwrap_or(thought)
        .trim();
    Some((thought.to_string(), answer.to_string()))
}

/// Cohesion reply: `{'Thought': ..., 'Final answer': '\boxed{...}'}`.
pub fn parse_cohesion_reply(text: &str) -> Option<(String, String)> {
    let fields = extract_object_fields(text, &["thought", "final answer"])?;
    let [thought, final_answer] = <[String; 2]>::try_from(fields).ok()?;
    Some((thought.trim().to_string(), final_answer.trim().to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strict_json_replies() {
        let (t, q) =
            parse_requester_reply(r#"{"Thought": "t1", "Question": "What color is it?"}"#).unwrap();
        assert_eq!(t, "t1");
        assert_eq!(q, "What color is it?");
    }

    #[test]
    fn single_quoted_replies() {
        let (t, q) =
            parse_requester_reply("{'Thought': 'analyze here', 'Question':'How many bars?'}")
                .unwrap();
        assert_eq!(t, "analyze here");
        assert_eq!(q, "How many bars?");
    }

    #[test]
    fn apostrophes_inside_values_survive() {
        let (t, q) = parse_requester_reply(
            "{'Thought': 'I can't see the chart yet', 'Question': 'What's on the x axis?'}",
        )
        .unwrap();
        assert_eq!(t, "I can't see the chart yet");
        assert_eq!(q, "What's on the x axis?");
    }

    #[test]
    fn object_embedded_in_prose() {
        let reply = "Sure! Here is my request:\n{'Thought': 'need the legend', 'Question': 'What does the legend say?'}\nThanks.";
        let (_, q) = parse_requester_reply(reply).unwrap();
        assert_eq!(q, "What does the legend say?");
    }

    #[test]
    fn last_object_wins() {
        let reply = r#"{"Thought": "draft", "Question": "old?"} ignore that {"Thought": "final", "Question": "new?"}"#;
        let (t, q) = parse_requester_reply(reply).unwrap();
        assert_eq!(t, "final");
        assert_eq!(q, "new?");
    }

    #[test]
    fn unparseable_is_none() {
        assert!(parse_requester_reply("no structure at all").is_none());
        assert!(parse_requester_reply("{'Thought': 'only one field'}").is_none());
    }

    #[test]
    fn summarizer_format() {
        let (t, a) = parse_summarizer_reply(
            "Thought: the bars say 3, 5, 9 so the tallest is the last.\nFinal Answer: \"B\"",
        )
        .unwrap();
        assert!(t.starts_with("the bars"));
        assert_eq!(a, "B");

        let (_, a) = parse_summarizer_reply("blah\nfinal answer: C").unwrap();
        assert_eq!(a, "C");
        assert!(parse_summarizer_reply("no verdict here").is_none());
    }

    #[test]
    fn cohesion_format() {
        let (t, a) = parse_cohesion_reply(
            "{'Thought': 'First ... Let's check the image again ... so B', 'Final answer':'\\boxed{B}'}",
        )
        .unwrap();
        assert!(t.contains("check the image again"));
        assert_eq!(a, "\\boxed{B}");
    }
}
