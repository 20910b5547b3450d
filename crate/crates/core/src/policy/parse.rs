use serde_json::{Map, Value};
use thiserror::Error;

use crate::domain::{validate_action, Action, ActionKind, AnchorType, Direction, DistanceHint, Relation, COORD_MAX};
use crate::memory::{strip_tag, AnchorProposal, HistoryMode, LinkProposal};

use super::PolicyDecision;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("no JSON object found")]
    NoJsonObject,
    #[error("{field}: {reason}")]
    Schema { field: String, reason: String },
    #[error("invalid action: {}", .0.join("; "))]
    InvalidAction(Vec<String>),
}

fn schema(field: &str, reason: impl Into<String>) -> ParseError {
    ParseError::Schema { field: field.to_string(), reason: reason.into() }
}

/// Byte range of the balanced `{...}` starting at `start`, skipping braces
/// inside string literals.
fn balanced_end(text: &str, start: usize) -> Option<usize> {
    let bytes = text.as_bytes();
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (i, &b) in bytes.iter().enumerate().skip(start) {
        if in_string {
            match b {
                _ if escaped => escaped = false,
                b'\\' => escaped = true,
                b'"' => in_string = false,
                _ => {}
            }
            continue;
        }
        match b {
            b'"' => in_string = true,
            b'{' => depth += 1,
            b'}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(i + 1);
                }
            }
            _ => {}
        }
    }
    None
}

/// First balanced `{...}` span in `text` that parses as a JSON object.
/// Leading and trailing prose (and code fences) are ignored.
pub fn extract_json_object(text: &str) -> Option<Map<String, Value>> {
    let mut from = 0;
    while let Some(offset) = text[from..].find('{') {
        let start = from + offset;
        if let Some(end) = balanced_end(text, start) {
            if let Ok(Value::Object(map)) = serde_json::from_str::<Value>(&text[start..end]) {
                return Some(map);
            }
        }
        from = start + 1;
    }
    None
}

fn coord(obj: &Map<String, Value>, key: &str) -> Result<u16, ParseError> {
    let field = format!("action.{key}");
    let raw = match obj.get(key) {
        None | Some(Value::Null) => return Ok(0),
        Some(Value::Number(n)) => n.as_f64(),
        Some(Value::String(s)) if s.trim().is_empty() => return Ok(0),
        Some(Value::String(s)) => s.trim().parse::<f64>().ok(),
        Some(_) => None,
    };
    let Some(v) = raw.filter(|v| v.is_finite()) else {
        return Err(schema(&field, "expected integer coordinate"));
    };
    let rounded = v.round();
    if !(0.0..=f64::from(COORD_MAX)).contains(&rounded) {
        return Err(schema(&field, "coordinate out of range 0-1000"));
    }
    Ok(rounded as u16)
}

fn text_field(obj: &Map<String, Value>, key: &str, field: &str) -> Result<Option<String>, ParseError> {
    match obj.get(key) {
        None | Some(Value::Null) => Ok(None),
        Some(Value::String(s)) => Ok(Some(s.clone())),
        Some(Value::Number(n)) => Ok(Some(n.to_string())),
        Some(_) => Err(schema(field, "expected string")),
    }
}

fn non_empty(s: Option<String>) -> Option<String> {
    s.filter(|s| !s.trim().is_empty())
}

fn parse_action(value: Option<&Value>) -> Result<Action, ParseError> {
    let obj = match value {
        Some(Value::Object(o)) => o,
        Some(_) => return Err(schema("action", "expected object")),
        None => return Err(schema("action", "missing")),
    };
    let name = match obj.get("action") {
        Some(Value::String(s)) => s,
        Some(_) => return Err(schema("action.action", "expected string")),
        None => return Err(schema("action.action", "missing")),
    };
    if name.trim().eq_ignore_ascii_case("need_feedback") {
        return Err(schema("action.action", "need_feedback is unavailable in offline evaluation"));
    }
    let kind =
        ActionKind::parse_loose(name).ok_or_else(|| schema("action.action", "action kind not in action space"))?;

    let direction = match non_empty(text_field(obj, "direction", "action.direction")?) {
        Some(d) => Some(Direction::parse(&d).ok_or_else(|| schema("action.direction", "unknown direction"))?),
        None => None,
    };
    let distance_raw = match text_field(obj, "distance", "action.distance")? {
        Some(d) => Some(d),
        None => text_field(obj, "distance_hint", "action.distance_hint")?,
    };
    let distance_hint = match non_empty(distance_raw) {
        Some(d) => Some(DistanceHint::parse(&d).ok_or_else(|| schema("action.distance", "unknown distance"))?),
        None => None,
    };

    let action = Action {
        kind,
        x: coord(obj, "x")?,
        y: coord(obj, "y")?,
        x_end: coord(obj, "x_end")?,
        y_end: coord(obj, "y_end")?,
        value: text_field(obj, "value", "action.value")?.unwrap_or_default(),
        direction,
        distance_hint,
    }
    .normalized();
    let violations = validate_action(&action);
    if violations.is_empty() {
        Ok(action)
    } else {
        Err(ParseError::InvalidAction(violations))
    }
}

/// `[dependency] copied 42` → (Some("dependency"), "copied 42").
fn split_tag(text: &str) -> (Option<&str>, &str) {
    let t = text.trim_start();
    if t.starts_with('[') {
        if let Some(end) = t.find(']') {
            return (Some(t[1..end].trim()), strip_tag(t));
        }
    }
    (None, t)
}

fn parse_relation(raw: &str) -> Option<Relation> {
    Relation::parse(raw.trim().trim_start_matches('[').trim_end_matches(']'))
}

fn parse_link(value: &Value) -> Result<Option<LinkProposal>, ParseError> {
    let obj = match value {
        Value::Null => return Ok(None),
        Value::Object(o) => o,
        _ => return Err(schema("causal_link", "expected object")),
    };
    let source = text_field(obj, "source", "causal_link.source")?.unwrap_or_default();
    let relation = text_field(obj, "relation", "causal_link.relation")?.unwrap_or_default();
    let source = source.trim();
    let relation = relation.trim();
    if source.is_empty() && relation.is_empty() {
        return Ok(None);
    }
    if source.is_empty() {
        return Err(schema("causal_link.source", "missing"));
    }
    let relation =
        parse_relation(relation).ok_or_else(|| schema("causal_link.relation", "relation not in link set"))?;
    Ok(Some(LinkProposal { source: source.to_string(), relation }))
}

fn parse_proposal(obj: &Map<String, Value>) -> Result<Option<AnchorProposal>, ParseError> {
    let Some(content) = non_empty(text_field(obj, "content_en", "content_en")?) else {
        return Ok(None);
    };
    let (tag, body) = split_tag(&content);
    let kind = match non_empty(text_field(obj, "type", "type")?) {
        Some(t) => AnchorType::parse(t.trim_start_matches('[').trim_end_matches(']'))
            .ok_or_else(|| schema("type", "anchor type not in taxonomy"))?,
        None => match tag {
            Some(t) => AnchorType::parse(t).ok_or_else(|| schema("content_en", "anchor type not in taxonomy"))?,
            None => return Err(schema("content_en", "missing [category] tag")),
        },
    };
    if body.trim().is_empty() {
        return Err(schema("content_en", "empty anchor content"));
    }
    let mut proposal = AnchorProposal::new(kind, body.trim());
    proposal.description = text_field(obj, "description_en", "description_en")?.unwrap_or_default();
    match obj.get("causal_link") {
        None => {}
        Some(Value::Array(items)) => {
            for item in items {
                proposal.links.extend(parse_link(item)?);
            }
        }
        Some(other) => proposal.links.extend(parse_link(other)?),
    }
    proposal.invalidate = non_empty(text_field(obj, "invalidate", "invalidate")?);
    proposal.extracted_value = non_empty(text_field(obj, "extracted_value", "extracted_value")?);
    Ok(Some(proposal))
}

/// Extracts the first JSON object from a model reply and validates it
/// against the output schema of `mode`.
pub fn parse_decision(raw_text: &str, mode: HistoryMode) -> Result<PolicyDecision, ParseError> {
    let obj = extract_json_object(raw_text).ok_or(ParseError::NoJsonObject)?;
    let action = parse_action(obj.get("action"))?;
    let mut decision = PolicyDecision { action, summary_text: None, anchor_proposal: None };
    match mode {
        HistoryMode::Raw => {}
        HistoryMode::Summary => {
            let summary =
                text_field(&obj, "summary_en", "summary_en")?.ok_or_else(|| schema("summary_en", "missing"))?;
            if summary.trim().is_empty() {
                return Err(schema("summary_en", "empty"));
            }
            decision.summary_text = Some(summary);
        }
        HistoryMode::Asm => decision.anchor_proposal = parse_proposal(&obj)?,
    }
    Ok(decision)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plain_tap() {
        let d = parse_decision(
            r#"{"action":{"action":"tap","x":500,"y":300,"value":"","x_end":0,"y_end":0}}"#,
            HistoryMode::Raw,
        )
        .unwrap();
        assert_eq!(d.action, Action::tap(500, 300));
    }

    #[test]
    fn unknown_kind_named() {
        let err = parse_decision(r#"{"action":{"action":"fly","x":0,"y":0}}"#, HistoryMode::Raw).unwrap_err();
        assert_eq!(err, schema("action.action", "action kind not in action space"));
        assert!(err.to_string().contains("action kind not in action space"));
    }

    #[test]
    fn prose_and_fences_ignored() {
        let text =
            "Sure! I will tap {the button}.\n```json\n{\"action\": {\"action\": \"tap\", \"x\": 10, \"y\": 20}}\n```";
        assert_eq!(parse_decision(text, HistoryMode::Raw).unwrap().action, Action::tap(10, 20));
    }

    #[test]
    fn braces_inside_strings() {
        let text = r#"{"action":{"action":"text","value":"a}b{c"}}"#;
        assert_eq!(parse_decision(text, HistoryMode::Raw).unwrap().action, Action::input_text("a}b{c"));
    }

    #[test]
    fn extractor_cases() {
        assert!(extract_json_object("no json here").is_none());
        assert!(extract_json_object("{unclosed").is_none());
        assert!(extract_json_object("[1,2]").is_none());
        let m = extract_json_object("x {bad} y {\"a\":1} {\"b\":2}").unwrap();
        assert_eq!(m.get("a"), Some(&Value::from(1)));
    }

    #[test]
    fn coordinate_coercion() {
        let d = parse_decision(r#"{"action":{"action":"tap","x":"499.6","y":300.2}}"#, HistoryMode::Raw).unwrap();
        assert_eq!(d.action, Action::tap(500, 300));
        let err = parse_decision(r#"{"action":{"action":"tap","x":1001,"y":3}}"#, HistoryMode::Raw).unwrap_err();
        assert!(matches!(err, ParseError::Schema { ref field, .. } if field == "action.x"));
        let err = parse_decision(r#"{"action":{"action":"tap","x":-2,"y":3}}"#, HistoryMode::Raw).unwrap_err();
        assert!(matches!(err, ParseError::Schema { .. }));
    }

    #[test]
    fn unused_fields_cleared() {
        let d = parse_decision(r#"{"action":{"action":"wait","x":400,"y":1,"value":"x"}}"#, HistoryMode::Raw).unwrap();
        assert_eq!(d.action, Action::bare(ActionKind::Wait));
    }

    #[test]
    fn swipe_requires_direction() {
        let err = parse_decision(r#"{"action":{"action":"swipe","x":5,"y":5}}"#, HistoryMode::Raw).unwrap_err();
        assert_eq!(err, ParseError::InvalidAction(vec!["swipe requires direction".into()]));
        let ok = parse_decision(
            r#"{"action":{"action":"swipe","x":5,"y":5,"direction":"UP","distance":"long"}}"#,
            HistoryMode::Raw,
        )
        .unwrap();
        assert_eq!(ok.action, Action::swipe(5, 5, Direction::Up, Some(DistanceHint::Long)));
    }

    #[test]
    fn need_feedback_rejected() {
        let err = parse_decision(r#"{"action":{"action":"need_feedback","value":"?"}}"#, HistoryMode::Raw).unwrap_err();
        assert!(matches!(err, ParseError::Schema { .. }));
    }

    #[test]
    fn summary_required_in_summary_mode() {
        let body = r#"{"action":{"action":"back"}}"#;
        assert_eq!(parse_decision(body, HistoryMode::Summary).unwrap_err(), schema("summary_en", "missing"));
        let ok =
            parse_decision(r#"{"action":{"action":"back"},"summary_en":"went back"}"#, HistoryMode::Summary).unwrap();
        assert_eq!(ok.summary_text.as_deref(), Some("went back"));
    }

    #[test]
    fn anchor_proposal_from_tag() {
        let text = r#"{"action":{"action":"long_press","x":500,"y":400},
            "content_en":"[dependency] copied price 42","description_en":"needed later",
            "causal_link":{"source":"m1","relation":"[enables]"}}"#;
        let d = parse_decision(text, HistoryMode::Asm).unwrap();
        let p = d.anchor_proposal.unwrap();
        assert_eq!(p.kind, AnchorType::Dependency);
        assert_eq!(p.content, "copied price 42");
        assert_eq!(p.links, vec![LinkProposal { source: "m1".into(), relation: Relation::Enables }]);
    }

    #[test]
    fn placeholder_link_ignored_and_bad_relation_named() {
        let ok = r#"{"action":{"action":"back"},"content_en":"[subgoal] x","causal_link":{"source":"","relation":""}}"#;
        assert!(parse_decision(ok, HistoryMode::Asm).unwrap().anchor_proposal.unwrap().links.is_empty());
        let bad = r#"{"action":{"action":"back"},"content_en":"[subgoal] x","causal_link":{"source":"m1","relation":"causes"}}"#;
        assert_eq!(
            parse_decision(bad, HistoryMode::Asm).unwrap_err(),
            schema("causal_link.relation", "relation not in link set")
        );
        let untagged = r#"{"action":{"action":"back"},"content_en":"x"}"#;
        assert!(parse_decision(untagged, HistoryMode::Asm).is_err());
        let unknown = r#"{"action":{"action":"back"},"content_en":"[milestone] x"}"#;
        assert_eq!(
            parse_decision(unknown, HistoryMode::Asm).unwrap_err(),
            schema("content_en", "anchor type not in taxonomy")
        );
    }

    #[test]
    fn empty_content_means_no_anchor() {
        let d = parse_decision(r#"{"action":{"action":"home"},"content_en":""}"#, HistoryMode::Asm).unwrap();
        assert!(d.anchor_proposal.is_none());
    }
}
