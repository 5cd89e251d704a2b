//! Reply parsers for the generative agents.
//!
//! Imagination replies carry two blocks split by [`CAPTION_DELIMITER`]:
//!
//! ```text
//! - increase dog size
//! === CAPTION ===
//! multiple medium dogs, transformed from several smaller dogs
//! ```
//!
//! For the vision agent each line of the first block is `attribute: yes|no`.
//! Question replies carry one `statement => True|False` pair per line.

use crate::domain::Attribute;

pub const CAPTION_DELIMITER: &str = "=== CAPTION ===";
pub const ANSWER_SEPARATOR: &str = "=>";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{0}")]
pub struct ParseError(pub String);

fn strip_fences(reply: &str) -> impl Iterator<Item = &str> {
    reply.lines().filter(|l| !l.trim_start().starts_with("```"))
}

fn strip_bullet(line: &str) -> &str {
    let line = line.trim();
    let line = line.trim_start_matches(['-', '*', '•']);
    // "1." / "2)" numbering
    let digits = line.len() - line.trim_start_matches(|c: char| c.is_ascii_digit()).len();
    let line = if digits > 0 && line[digits..].starts_with(['.', ')']) {
        &line[digits + 1..]
    } else {
        line
    };
    line.trim()
}

/// Splits a reply into its list lines and its caption.
fn split_blocks(reply: &str) -> Result<(Vec<&str>, String), ParseError> {
    let lines: Vec<&str> = strip_fences(reply).collect();
    let Some(pos) = lines.iter().position(|l| l.trim() == CAPTION_DELIMITER) else {
        return Err(ParseError(format!("missing {CAPTION_DELIMITER:?} delimiter line")));
    };
    let items = lines[..pos]
        .iter()
        .map(|l| strip_bullet(l))
        .filter(|l| !l.is_empty())
        .collect();
    let caption = lines[pos + 1..]
        .iter()
        .map(|l| l.trim())
        .filter(|l| !l.is_empty())
        .collect::<Vec<_>>()
        .join(" ");
    if caption.is_empty() {
        return Err(ParseError("empty caption block".into()));
    }
    Ok((items, caption))
}

/// Parses a text-imagination reply into (edits, caption).
pub fn parse_text_imagination(reply: &str) -> Result<(Vec<String>, String), ParseError> {
    let (items, caption) = split_blocks(reply)?;
    if items.is_empty() {
        return Err(ParseError("empty edit block".into()));
    }
    Ok((items.into_iter().map(str::to_string).collect(), caption))
}

/// Parses a vision-imagination reply into (attributes, caption).
pub fn parse_vision_imagination(reply: &str) -> Result<(Vec<Attribute>, String), ParseError> {
    let (items, caption) = split_blocks(reply)?;
    let attributes = items
        .into_iter()
        .map(parse_attribute)
        .collect::<Result<Vec<_>, _>>()?;
    Ok((attributes, caption))
}

fn parse_attribute(line: &str) -> Result<Attribute, ParseError> {
    let (name, flag) = line
        .rsplit_once(':')
        .ok_or_else(|| ParseError(format!("attribute line without ':' {line:?}")))?;
    let name = name.trim();
    if name.is_empty() {
        return Err(ParseError(format!("attribute line without a name {line:?}")));
    }
    let present = match normalize_token(flag).as_str() {
        "yes" | "true" | "present" => true,
        "no" | "false" | "absent" => false,
        other => return Err(ParseError(format!("bad attribute flag {other:?}"))),
    };
    Ok(Attribute {
        attribute: name.to_string(),
        present,
    })
}

fn normalize_token(s: &str) -> String {
    s.trim()
        .chars()
        .filter(|c| c.is_alphanumeric())
        .flat_map(char::to_lowercase)
        .collect()
}

/// Reads a True/False verdict from the first whitespace token of a reply.
pub fn parse_verdict(reply: &str) -> Option<bool> {
    let first = reply.split_whitespace().next()?;
    match normalize_token(first).as_str() {
        "true" => Some(true),
        "false" => Some(false),
        _ => None,
    }
}

/// Extracts every well-formed `statement => answer` pair, skipping the rest.
pub fn parse_question_pairs(reply: &str) -> Vec<(String, bool)> {
    strip_fences(reply)
        .filter_map(|line| {
            let (statement, answer) = line.rsplit_once(ANSWER_SEPARATOR)?;
            let statement = strip_bullet(statement);
            if statement.is_empty() {
                return None;
            }
            Some((statement.to_string(), parse_verdict(answer)?))
        })
        .collect()
}

/// Renders attributes the way the question agent receives them.
pub fn render_attributes(attributes: &[Attribute]) -> String {
    attributes
        .iter()
        .map(|a| format!("{}: {}", a.attribute, if a.present { "yes" } else { "no" }))
        .collect::<Vec<_>>()
        .join("\n")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_imagination_round_trip() {
        let reply = "- increase dog size\n=== CAPTION ===\nmultiple medium dogs, transformed from several smaller dogs\n";
        let (edits, caption) = parse_text_imagination(reply).unwrap();
        assert_eq!(edits, vec!["increase dog size"]);
        assert_eq!(caption, "multiple medium dogs, transformed from several smaller dogs");
    }

    #[test]
    fn fenced_reply_is_accepted() {
        let reply = "```\n1. make dogs larger\n2) keep grass\n=== CAPTION ===\nbig dogs\n```";
        let (edits, _) = parse_text_imagination(reply).unwrap();
        assert_eq!(edits, vec!["make dogs larger", "keep grass"]);
    }

    #[test]
    fn missing_delimiter_is_a_parse_error() {
        assert!(parse_text_imagination("no delimiter here").is_err());
        assert!(parse_text_imagination("=== CAPTION ===\ncap").is_err(), "empty edits");
        assert!(parse_text_imagination("- a\n=== CAPTION ===\n  \n").is_err());
    }

    #[test]
    fn vision_attributes_parse_exactly() {
        let reply = "outdoors: yes\nleash: no\n=== CAPTION ===\noutdoors, multiple medium dogs";
        let (attrs, caption) = parse_vision_imagination(reply).unwrap();
        assert_eq!(
            attrs,
            vec![
                Attribute { attribute: "outdoors".into(), present: true },
                Attribute { attribute: "leash".into(), present: false },
            ]
        );
        assert_eq!(caption, "outdoors, multiple medium dogs");
        assert!(parse_vision_imagination("outdoors: maybe\n=== CAPTION ===\nx").is_err());
        assert_eq!(render_attributes(&attrs), "outdoors: yes\nleash: no");
    }

    #[test]
    fn verdict_normalization() {
        assert_eq!(parse_verdict("FALSE."), Some(false));
        assert_eq!(parse_verdict("  True, the dogs are large"), Some(true));
        assert_eq!(parse_verdict("maybe"), None);
        assert_eq!(parse_verdict(""), None);
        assert_eq!(parse_verdict("truely"), None);
    }

    #[test]
    fn question_pairs_skip_garbage() {
        let reply = "1. The image contains large dogs => True\nnonsense line\nThe dogs are indoors => false.\n => true\nx => perhaps";
        assert_eq!(
            parse_question_pairs(reply),
            vec![
                ("The image contains large dogs".to_string(), true),
                ("The dogs are indoors".to_string(), false),
            ]
        );
    }
}
