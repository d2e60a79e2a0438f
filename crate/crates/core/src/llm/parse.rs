//! Constrained-output schema and response parsing.

use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::optimizer::Validity;
use crate::space::{Assignment, ParameterSpace};

/// Name of the function the model is forced to call.
pub const TOOL_NAME: &str = "suggest_experiments";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParseError {
    #[error("response is not a JSON object")]
    NotJson,
    #[error("field `{0}` is missing or not a string")]
    TextField(&'static str),
    #[error("`suggestions` must be an array of {expected} objects, got {got}")]
    Count { expected: usize, got: String },
    #[error("suggestion {index} lacks a string value for `{parameter}`")]
    Parameter { index: usize, parameter: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedResponse {
    pub analysis: String,
    pub hypothesis: String,
    pub reasoning: String,
    /// Labels exactly as returned, in parameter order.
    pub assignments: Vec<Assignment>,
    pub validity: Vec<Validity>,
}

/// JSON schema for the function arguments: the three text fields plus `count`
/// suggestions with one enum-constrained field per parameter.
pub fn response_schema(space: &ParameterSpace, count: usize) -> Value {
    let mut props = Map::new();
    for p in space.parameters() {
        props.insert(p.name.clone(), json!({ "type": "string", "enum": p.options }));
    }
    let names: Vec<&str> = space.parameters().iter().map(|p| p.name.as_str()).collect();
    json!({
        "type": "object",
        "properties": {
            "analysis": { "type": "string", "description": "Trends in the observed data." },
            "hypothesis": { "type": "string", "description": "Hypothesis about the important factors." },
            "reasoning": { "type": "string", "description": "Reasoning for the next suggestion." },
            "suggestions": {
                "type": "array",
                "minItems": count,
                "maxItems": count,
                "items": {
                    "type": "object",
                    "properties": props,
                    "required": names,
                    "additionalProperties": false
                }
            }
        },
        "required": ["analysis", "hypothesis", "reasoning", "suggestions"],
        "additionalProperties": false
    })
}

/// Finds the JSON object in a reply, tolerating code fences or surrounding prose.
fn extract_object(text: &str) -> Option<Map<String, Value>> {
    if let Ok(Value::Object(m)) = serde_json::from_str(text.trim()) {
        return Some(m);
    }
    let start = text.find('{')?;
    let end = text.rfind('}')?;
    match serde_json::from_str(text.get(start..=end)?) {
        Ok(Value::Object(m)) => Some(m),
        _ => None,
    }
}

fn text_field(obj: &Map<String, Value>, key: &'static str) -> Result<String, ParseError> {
    obj.get(key)
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or(ParseError::TextField(key))
}

pub fn parse_response(text: &str, space: &ParameterSpace, count: usize) -> Result<ParsedResponse, ParseError> {
    let obj = extract_object(text).ok_or(ParseError::NotJson)?;
    let analysis = text_field(&obj, "analysis")?;
    let hypothesis = text_field(&obj, "hypothesis")?;
    let reasoning = text_field(&obj, "reasoning")?;
    let items = match obj.get("suggestions") {
        Some(Value::Array(a)) if a.len() == count => a,
        Some(Value::Array(a)) => {
            return Err(ParseError::Count {
                expected: count,
                got: a.len().to_string(),
            })
        }
        other => {
            return Err(ParseError::Count {
                expected: count,
                got: other.map_or("nothing".into(), |v| v.to_string()),
            })
        }
    };

    let mut assignments = Vec::with_capacity(count);
    let mut validity = Vec::with_capacity(count);
    for (index, item) in items.iter().enumerate() {
        let mut labels = Vec::with_capacity(space.len());
        let mut ok = true;
        for p in space.parameters() {
            let Some(label) = item.get(&p.name).and_then(Value::as_str) else {
                return Err(ParseError::Parameter {
                    index,
                    parameter: p.name.clone(),
                });
            };
            ok &= p.option_index(label).is_some();
            labels.push(label.to_string());
        }
        assignments.push(Assignment::new(labels));
        validity.push(if ok { Validity::Valid } else { Validity::InvalidOption });
    }
    Ok(ParsedResponse {
        analysis,
        hypothesis,
        reasoning,
        assignments,
        validity,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::Parameter;

    fn space() -> ParameterSpace {
        ParameterSpace::new(vec![
            Parameter::new("solvent", ["DMF", "THF"]),
            Parameter::new("base", ["K2CO3", "NEt3", "DBU"]),
        ])
        .unwrap()
    }

    fn reply(items: Value) -> String {
        json!({"analysis": "a", "hypothesis": "h", "reasoning": "r", "suggestions": items}).to_string()
    }

    #[test]
    fn schema_has_enum_per_parameter() {
        let s = response_schema(&space(), 2);
        let items = &s["properties"]["suggestions"];
        assert_eq!(items["minItems"], 2);
        assert_eq!(items["items"]["properties"]["base"]["enum"], json!(["K2CO3", "NEt3", "DBU"]));
        assert_eq!(items["items"]["required"], json!(["solvent", "base"]));
    }

    #[test]
    fn conforming_reply_is_valid() {
        let p = parse_response(&reply(json!([{"base": "DBU", "solvent": "THF"}])), &space(), 1).unwrap();
        assert_eq!(p.assignments[0].labels(), vec!["THF", "DBU"]);
        assert_eq!(p.validity, vec![Validity::Valid]);
        assert_eq!((p.analysis.as_str(), p.hypothesis.as_str(), p.reasoning.as_str()), ("a", "h", "r"));
    }

    #[test]
    fn schema_escape_flagged_not_corrected() {
        let p = parse_response(&reply(json!([{"solvent": "dmf", "base": "DBU"}])), &space(), 1).unwrap();
        assert_eq!(p.assignments[0].labels()[0], "dmf");
        assert_eq!(p.validity, vec![Validity::InvalidOption]);
    }

    #[test]
    fn fenced_reply_accepted() {
        let text = format!("Sure:\n```json\n{}\n```", reply(json!([{"solvent": "DMF", "base": "NEt3"}])));
        assert!(parse_response(&text, &space(), 1).is_ok());
    }

    #[test]
    fn malformed_replies_rejected() {
        let s = space();
        assert_eq!(parse_response("no json here", &s, 1), Err(ParseError::NotJson));
        assert!(matches!(parse_response(&reply(json!([])), &s, 1), Err(ParseError::Count { .. })));
        assert!(matches!(
            parse_response(&reply(json!([{"solvent": "DMF"}])), &s, 1),
            Err(ParseError::Parameter { .. })
        ));
        assert!(matches!(
            parse_response(r#"{"analysis": "a", "suggestions": []}"#, &s, 0),
            Err(ParseError::TextField("hypothesis"))
        ));
    }
}
