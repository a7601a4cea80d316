use serde_json::{Map, Value};
use thiserror::Error;

use super::{OrderSelection, WorkHoursDecision};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("empty reply")]
    Empty,
    #[error("no json object found in reply")]
    NoObject,
    #[error("missing key `{0}`")]
    MissingKey(&'static str),
    #[error("`{key}` must be a time string such as \"9:00\", got {value}")]
    NotATime { key: &'static str, value: String },
    #[error("`{key}`: minutes must be 00, got \"{value}\"")]
    MinutesNotZero { key: &'static str, value: String },
    #[error("`{key}`: hour {hour} is outside 0-23")]
    HourOutOfRange { key: &'static str, hour: u64 },
    #[error("`order_list` must be a list of integer order ids")]
    BadOrderList,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PayloadSchema {
    WorkHours,
    OrderSelection,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Decision {
    WorkHours(WorkHoursDecision),
    OrderSelection(OrderSelection),
}

/// Remove reasoning blocks delimited by `open`/`close`. A dangling close tag
/// (reply started inside the block) drops everything before it; a dangling
/// open tag drops everything after it.
pub fn strip_think(raw: &str, open: &str, close: &str) -> String {
    let mut rest = raw;
    if let (Some(c), o) = (rest.find(close), rest.find(open)) {
        if o.is_none_or(|o| c < o) {
            rest = &rest[c + close.len()..];
        }
    }
    let mut out = String::with_capacity(rest.len());
    while let Some(o) = rest.find(open) {
        out.push_str(&rest[..o]);
        let after = &rest[o + open.len()..];
        match after.find(close) {
            Some(c) => rest = &after[c + close.len()..],
            None => {
                rest = "";
                break;
            }
        }
    }
    out.push_str(rest);
    out
}

/// Start offset and contents of the last top-level JSON object in `text`.
fn last_object(text: &str) -> Option<(usize, Map<String, Value>)> {
    let bytes = text.as_bytes();
    let mut best = None;
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'{' {
            let mut stream = serde_json::Deserializer::from_str(&text[i..]).into_iter::<Value>();
            if let Some(Ok(Value::Object(map))) = stream.next() {
                let end = i + stream.byte_offset();
                best = Some((i, map));
                i = end;
                continue;
            }
        }
        i += 1;
    }
    best
}

/// The reasoning text of a reply: the contents of the think block if there is
/// one, otherwise the prose before the final structured payload.
pub fn extract_thought(response: &str, open: &str, close: &str) -> Option<String> {
    let text = if let Some(c) = response.find(close) {
        let start = response[..c].find(open).map(|o| o + open.len()).unwrap_or(0);
        response[start..c].to_string()
    } else {
        match last_object(response) {
            Some((start, _)) => response[..start].to_string(),
            None => response.to_string(),
        }
    };
    let text = text.trim();
    (!text.is_empty()).then(|| text.to_string())
}

fn parse_hour(obj: &Map<String, Value>, key: &'static str) -> Result<u8, ParseError> {
    let value = obj.get(key).ok_or(ParseError::MissingKey(key))?;
    let Value::String(s) = value else {
        return Err(ParseError::NotATime {
            key,
            value: value.to_string(),
        });
    };
    let not_a_time = || ParseError::NotATime {
        key,
        value: format!("\"{s}\""),
    };
    let (h, m) = s.trim().split_once(':').ok_or_else(not_a_time)?;
    if h.is_empty() || h.len() > 2 || !h.bytes().all(|b| b.is_ascii_digit()) {
        return Err(not_a_time());
    }
    if m.len() != 2 || !m.bytes().all(|b| b.is_ascii_digit()) {
        return Err(not_a_time());
    }
    if m != "00" {
        return Err(ParseError::MinutesNotZero {
            key,
            value: s.clone(),
        });
    }
    let hour: u64 = h.parse().map_err(|_| not_a_time())?;
    if hour > 23 {
        return Err(ParseError::HourOutOfRange { key, hour });
    }
    Ok(hour as u8)
}

fn object_of(raw: &str) -> Result<Map<String, Value>, ParseError> {
    if raw.trim().is_empty() {
        return Err(ParseError::Empty);
    }
    let stripped = strip_think(raw, "<think>", "</think>");
    last_object(&stripped).map(|(_, m)| m).ok_or(ParseError::NoObject)
}

pub fn parse_work_hours(raw: &str) -> Result<WorkHoursDecision, ParseError> {
    let obj = object_of(raw)?;
    let start = parse_hour(&obj, "go_to_work_time")?;
    let end = parse_hour(&obj, "get_off_work_time")?;
    Ok(WorkHoursDecision::new(start, end))
}

pub fn parse_order_selection(raw: &str) -> Result<OrderSelection, ParseError> {
    let obj = object_of(raw)?;
    let list = obj.get("order_list").ok_or(ParseError::MissingKey("order_list"))?;
    let Value::Array(items) = list else {
        return Err(ParseError::BadOrderList);
    };
    let order_ids = items
        .iter()
        .map(|v| v.as_u64().ok_or(ParseError::BadOrderList))
        .collect::<Result<_, _>>()?;
    Ok(OrderSelection { order_ids })
}

pub fn parse_decision_payload(raw: &str, schema: PayloadSchema) -> Result<Decision, ParseError> {
    match schema {
        PayloadSchema::WorkHours => parse_work_hours(raw).map(Decision::WorkHours),
        PayloadSchema::OrderSelection => parse_order_selection(raw).map(Decision::OrderSelection),
    }
}

/// The reply a well-behaved model would give for `decision`.
pub fn render_payload(decision: &Decision) -> String {
    match decision {
        Decision::WorkHours(h) => format!(
            "{{\"go_to_work_time\":\"{}:00\",\"get_off_work_time\":\"{}:00\"}}",
            h.go_to_work_hour, h.get_off_work_hour
        ),
        Decision::OrderSelection(s) => {
            serde_json::json!({ "order_list": s.order_ids }).to_string()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn work_hours_reply() {
        let d = parse_work_hours(r#"{"go_to_work_time":"10:00","get_off_work_time":"18:00"}"#).unwrap();
        assert_eq!(d, WorkHoursDecision::new(10, 18));
        let d = parse_work_hours(r#"{"go_to_work_time":"8:00","get_off_work_time":"17:00"}"#).unwrap();
        assert_eq!(d, WorkHoursDecision::new(8, 17));
    }

    #[test]
    fn order_list_reply() {
        let s = parse_order_selection(r#"{"order_list":[3,7]}"#).unwrap();
        assert_eq!(s.order_ids, vec![3, 7]);
        let s = parse_order_selection(r#"I thought about it. {"order_list":[]}"#).unwrap();
        assert!(s.order_ids.is_empty());
    }

    #[test]
    fn minutes_must_be_zero() {
        let err = parse_work_hours(r#"{"go_to_work_time":"8:30","get_off_work_time":"17:00"}"#).unwrap_err();
        assert!(matches!(err, ParseError::MinutesNotZero { key: "go_to_work_time", .. }));
        assert!(err.to_string().contains("minutes must be 00"));
    }

    #[test]
    fn typed_failures() {
        assert_eq!(parse_work_hours("   "), Err(ParseError::Empty));
        assert_eq!(parse_work_hours("no json here"), Err(ParseError::NoObject));
        assert_eq!(
            parse_work_hours(r#"{"go_to_work_time":"8:00"}"#),
            Err(ParseError::MissingKey("get_off_work_time"))
        );
        assert!(matches!(
            parse_work_hours(r#"{"go_to_work_time":"24:00","get_off_work_time":"1:00"}"#),
            Err(ParseError::HourOutOfRange { hour: 24, .. })
        ));
        assert!(matches!(
            parse_work_hours(r#"{"go_to_work_time":9,"get_off_work_time":"1:00"}"#),
            Err(ParseError::NotATime { .. })
        ));
        assert_eq!(
            parse_order_selection(r#"{"order_list":["a"]}"#),
            Err(ParseError::BadOrderList)
        );
        assert_eq!(
            parse_order_selection(r#"{"order_list":[-1]}"#),
            Err(ParseError::BadOrderList)
        );
    }

    #[test]
    fn last_object_wins_and_think_is_ignored() {
        let raw = r#"<think>maybe {"order_list":[1]}</think> draft {"order_list":[2]} final {"order_list":[4,5]}"#;
        assert_eq!(parse_order_selection(raw).unwrap().order_ids, vec![4, 5]);
        let nested = r#"{"order_list":[9],"meta":{"x":1}}"#;
        assert_eq!(parse_order_selection(nested).unwrap().order_ids, vec![9]);
    }

    #[test]
    fn thought_extraction() {
        assert_eq!(extract_thought("<think>ABC</think>{\"a\":1}", "<think>", "</think>").as_deref(), Some("ABC"));
        assert_eq!(extract_thought("XYZ {\"order_list\":[]}", "<think>", "</think>").as_deref(), Some("XYZ"));
        assert_eq!(extract_thought("only reasoning </think>{}", "<think>", "</think>").as_deref(), Some("only reasoning"));
        assert_eq!(extract_thought("{\"a\":1}", "<think>", "</think>"), None);
        assert_eq!(extract_thought("<think>  </think>{}", "<think>", "</think>"), None);
    }

    #[test]
    fn strip_handles_dangling_tags() {
        assert_eq!(strip_think("a<think>b</think>c", "<think>", "</think>"), "ac");
        assert_eq!(strip_think("b</think>c", "<think>", "</think>"), "c");
        assert_eq!(strip_think("a<think>b", "<think>", "</think>"), "a");
    }

    proptest! {
        #[test]
        fn never_panics(raw in ".{0,200}") {
            let _ = parse_decision_payload(&raw, PayloadSchema::WorkHours);
            let _ = parse_decision_payload(&raw, PayloadSchema::OrderSelection);
            let _ = extract_thought(&raw, "<think>", "</think>");
        }

        #[test]
        fn never_panics_near_json(raw in r#"[{}\[\]":,0-9a-z_ <>/]{0,120}"#) {
            let _ = parse_decision_payload(&raw, PayloadSchema::WorkHours);
            let _ = parse_decision_payload(&raw, PayloadSchema::OrderSelection);
        }

        #[test]
        fn render_then_parse_round_trips(
            start in 0u8..24, end in 0u8..24,
            ids in proptest::collection::vec(0u64..1_000_000, 0..8),
            prose in "[a-zA-Z .,]{0,40}",
        ) {
            let hours = Decision::WorkHours(WorkHoursDecision::new(start, end));
            let reply = format!("<think>{prose}</think>{prose} {}", render_payload(&hours));
            prop_assert_eq!(parse_decision_payload(&reply, PayloadSchema::WorkHours).unwrap(), hours);
            let sel = Decision::OrderSelection(OrderSelection { order_ids: ids });
            let reply = format!("{prose} {}", render_payload(&sel));
            prop_assert_eq!(parse_decision_payload(&reply, PayloadSchema::OrderSelection).unwrap(), sel);
        }
    }
}
