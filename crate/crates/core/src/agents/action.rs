//! Wire format for agent actions: `{"LABOR": x}`, `{"DELTA": [..]}`, `{"VOTE": id}`.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ActionKind {
    Labor,
    Delta,
    Vote,
}

impl ActionKind {
    pub fn key(self) -> &'static str {
        match self {
            ActionKind::Labor => "LABOR",
            ActionKind::Delta => "DELTA",
            ActionKind::Vote => "VOTE",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Labor(f64),
    /// Percentage-point moves, one per bracket.
    Delta(Vec<f64>),
    Vote(u32),
}

impl Action {
    pub fn kind(&self) -> ActionKind {
        match self {
            Action::Labor(_) => ActionKind::Labor,
            Action::Delta(_) => ActionKind::Delta,
            Action::Vote(_) => ActionKind::Vote,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionMessage {
    pub action: Action,
    pub raw_text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("no JSON object found")]
    NoJsonFound,
    #[error("no JSON object has the key {0}")]
    WrongKey(&'static str),
    #[error("expected {expected} values, got {got}")]
    WrongArity { expected: usize, got: usize },
    #[error("value for {0} is not numeric")]
    NonNumeric(&'static str),
}

/// Every JSON object that parses starting at some `{` in `text`, in order of
/// their opening brace.
fn json_objects(text: &str) -> Vec<Map<String, Value>> {
    let mut out = Vec::new();
    for (i, _) in text.match_indices('{') {
        let mut stream = serde_json::Deserializer::from_str(&text[i..]).into_iter::<Value>();
        if let Some(Ok(Value::Object(map))) = stream.next() {
            out.push(map);
        }
    }
    out
}

/// Extract the last well-formed JSON object carrying the key for `kind`.
/// `arity` is only checked for `Delta`.
pub fn parse_action(raw: &str, kind: ActionKind, arity: usize) -> Result<ActionMessage, ParseError> {
    let objects = json_objects(raw);
    if objects.is_empty() {
        return Err(ParseError::NoJsonFound);
    }
    let key = kind.key();
    let value = objects
        .iter()
        .rev()
        .find_map(|m| m.get(key))
        .ok_or(ParseError::WrongKey(key))?;
    let action = match kind {
        ActionKind::Labor => Action::Labor(finite(value).ok_or(ParseError::NonNumeric(key))?),
        ActionKind::Delta => {
            let items = value.as_array().ok_or(ParseError::NonNumeric(key))?;
            let nums = items
                .iter()
                .map(finite)
                .collect::<Option<Vec<f64>>>()
                .ok_or(ParseError::NonNumeric(key))?;
            if nums.len() != arity {
                return Err(ParseError::WrongArity { expected: arity, got: nums.len() });
            }
            Action::Delta(nums)
        }
        ActionKind::Vote => {
            let v = finite(value).ok_or(ParseError::NonNumeric(key))?;
            if v < 0.0 || v.fract() != 0.0 || v > u32::MAX as f64 {
                return Err(ParseError::NonNumeric(key));
            }
            Action::Vote(v as u32)
        }
    };
    Ok(ActionMessage { action, raw_text: raw.to_string() })
}

fn finite(v: &Value) -> Option<f64> {
    v.as_f64().filter(|x| x.is_finite())
}

/// Canonical text for an action, e.g. `{"LABOR": 35.5}`.
pub fn render_action(action: &Action) -> String {
    let num = |x: f64| serde_json::to_string(&x).expect("finite number");
    match action {
        Action::Labor(x) => format!("{{\"LABOR\": {}}}", num(*x)),
        Action::Delta(xs) => {
            let body: Vec<String> = xs.iter().map(|x| num(*x)).collect();
            format!("{{\"DELTA\": [{}]}}", body.join(", "))
        }
        Action::Vote(id) => format!("{{\"VOTE\": {id}}}"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn extraction_examples() {
        let m = parse_action("I will work hard. {\"LABOR\": 35.5}", ActionKind::Labor, 1).unwrap();
        assert_eq!(m.action, Action::Labor(35.5));
        assert_eq!(
            parse_action("{\"DELTA\":[1,2]}", ActionKind::Delta, 3),
            Err(ParseError::WrongArity { expected: 3, got: 2 })
        );
        assert_eq!(
            parse_action("{\"LABOR\":\"forty\"}", ActionKind::Labor, 1),
            Err(ParseError::NonNumeric("LABOR"))
        );
        assert_eq!(parse_action("forty hours", ActionKind::Labor, 1), Err(ParseError::NoJsonFound));
        assert_eq!(
            parse_action("{\"HOURS\": 40}", ActionKind::Labor, 1),
            Err(ParseError::WrongKey("LABOR"))
        );
    }

    #[test]
    fn last_object_with_key_wins() {
        let text = "First {\"LABOR\": 10} then {\"note\": 1} finally {\"LABOR\": 42} {\"x\": {}}";
        assert_eq!(parse_action(text, ActionKind::Labor, 1).unwrap().action, Action::Labor(42.0));
        let broken = "{\"LABOR\": 12} and then {\"LABOR\": 4";
        assert_eq!(parse_action(broken, ActionKind::Labor, 1).unwrap().action, Action::Labor(12.0));
    }

    #[test]
    fn delta_and_vote() {
        let m = parse_action("Plan: {\"DELTA\":[5,-10,0]}", ActionKind::Delta, 3).unwrap();
        assert_eq!(m.action, Action::Delta(vec![5.0, -10.0, 0.0]));
        assert_eq!(
            parse_action("{\"DELTA\":[5,\"x\",0]}", ActionKind::Delta, 3),
            Err(ParseError::NonNumeric("DELTA"))
        );
        assert_eq!(parse_action("{\"VOTE\": 2}", ActionKind::Vote, 0).unwrap().action, Action::Vote(2));
        assert!(parse_action("{\"VOTE\": 1.5}", ActionKind::Vote, 0).is_err());
    }

    fn arb_action() -> impl Strategy<Value = Action> {
        prop_oneof![
            (0.0f64..100.0).prop_map(Action::Labor),
            prop::collection::vec(-20.0f64..20.0, 1..8).prop_map(Action::Delta),
            (0u32..1000).prop_map(Action::Vote),
        ]
    }

    proptest! {
        #[test]
        fn parse_inverts_render(action in arb_action(), prefix in "[a-zA-Z .,]{0,40}") {
            let text = format!("{prefix}{}", render_action(&action));
            let arity = match &action { Action::Delta(d) => d.len(), _ => 1 };
            let parsed = parse_action(&text, action.kind(), arity).unwrap();
            prop_assert_eq!(parsed.action, action);
        }
    }
}
