//! JSON bodies of the HTTP protocol.

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::{Answer, Point};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CreateSessionRequest {
    pub suite_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CreateSessionResponse {
    pub session_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NextResponse {
    /// `query`, `storyline_start`, `scene_start` or `done`.
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query_xml: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scene: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub storyline: Option<String>,
    /// Queries skipped since the previous response.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub skipped: Vec<String>,
}

/// `{"type": ..., "value": ...}` answer encoding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireAnswer {
    #[serde(rename = "type")]
    pub ty: String,
    #[serde(default)]
    pub value: Value,
}

impl From<&Answer> for WireAnswer {
    fn from(a: &Answer) -> Self {
        let value = match a {
            Answer::Bool(b) => json!(b),
            Answer::Unable => Value::Null,
            Answer::Label(l) => json!(l),
            Answer::TimeInterval { start, end } => json!([start, end]),
            Answer::Polygon(ring) => Value::Array(ring.iter().map(|p| json!([p.x, p.y])).collect()),
        };
        WireAnswer { ty: a.type_name().to_string(), value }
    }
}

fn number(v: &Value) -> Result<f64, String> {
    v.as_f64().ok_or_else(|| format!("`{v}` is not a number"))
}

fn pair(v: &Value) -> Result<(f64, f64), String> {
    match v.as_array().map(Vec::as_slice) {
        Some([a, b]) => Ok((number(a)?, number(b)?)),
        _ => Err(format!("`{v}` is not a pair of numbers")),
    }
}

impl TryFrom<&WireAnswer> for Answer {
    type Error = String;

    fn try_from(w: &WireAnswer) -> Result<Self, String> {
        match w.ty.as_str() {
            "bool" => w.value.as_bool().map(Answer::Bool).ok_or_else(|| "bool answer needs true or false".into()),
            "unable" => Ok(Answer::Unable),
            "label" => w.value.as_str().map(|s| Answer::Label(s.to_string())).ok_or_else(|| "label answer needs a string".into()),
            "interval" => pair(&w.value).map(|(start, end)| Answer::TimeInterval { start, end }),
            "polygon" => {
                let pts = w.value.as_array().ok_or("polygon answer needs a list of points")?;
                pts.iter().map(|p| pair(p).map(|(x, y)| Point::new(x, y))).collect::<Result<_, _>>().map(Answer::Polygon)
            }
            other => Err(format!("unknown answer type `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerRequest {
    pub query_id: String,
    pub answer: WireAnswer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerResponse {
    pub verdict: String,
    pub ground_truth: WireAnswer,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorResponse {
    /// Stable machine-readable error code, e.g. `already_answered`.
    pub code: String,
    pub error: String,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn answers_roundtrip_through_json() {
        let cases = [
            Answer::Bool(true),
            Answer::Unable,
            Answer::Label("male".into()),
            Answer::TimeInterval { start: 1.5, end: 4.0 },
            Answer::Polygon(vec![Point::new(0.0, 0.0), Point::new(1.0, 0.0), Point::new(0.0, 1.0)]),
        ];
        for a in cases {
            let w = WireAnswer::from(&a);
            let text = serde_json::to_string(&w).unwrap();
            let back: WireAnswer = serde_json::from_str(&text).unwrap();
            assert_eq!(Answer::try_from(&back).unwrap(), a);
        }
    }

    #[test]
    fn wire_shapes() {
        let w = WireAnswer::from(&Answer::TimeInterval { start: 1.0, end: 2.0 });
        assert_eq!(serde_json::to_string(&w).unwrap(), r#"{"type":"interval","value":[1.0,2.0]}"#);
        let w: WireAnswer = serde_json::from_str(r#"{"type":"unable"}"#).unwrap();
        assert_eq!(Answer::try_from(&w).unwrap(), Answer::Unable);
        let w: WireAnswer = serde_json::from_str(r#"{"type":"bool","value":"yes"}"#).unwrap();
        assert!(Answer::try_from(&w).is_err());
        let w: WireAnswer = serde_json::from_str(r#"{"type":"interval","value":[1]}"#).unwrap();
        assert!(Answer::try_from(&w).is_err());
    }

    #[test]
    fn next_response_omits_absent_fields() {
        let r = NextResponse {
            kind: "done".into(),
            query_id: None,
            query_xml: None,
            scene: None,
            storyline: None,
            skipped: vec![],
        };
        assert_eq!(serde_json::to_string(&r).unwrap(), r#"{"kind":"done"}"#);
    }
}
