use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmReply {
    pub raw_text: String,
    /// Canonical class name, when the reply named one.
    pub parsed_result: Option<String>,
    pub justification: Option<String>,
}

/// First JSON object embedded anywhere in `text`.
fn first_object(text: &str) -> Option<serde_json::Map<String, Value>> {
    text.char_indices()
        .filter(|&(_, c)| c == '{')
        .find_map(|(i, _)| {
            let mut stream = serde_json::Deserializer::from_str(&text[i..]).into_iter::<Value>();
            match stream.next() {
                Some(Ok(Value::Object(map))) => Some(map),
                _ => None,
            }
        })
}

/// Never fails: an unusable reply yields `parsed_result: None`.
pub fn parse_reply(raw_text: &str, class_names: &[String]) -> LlmReply {
    let object = first_object(raw_text);
    let parsed_result = object
        .as_ref()
        .and_then(|m| m.get("result"))
        .and_then(Value::as_str)
        .and_then(|r| {
            let r = r.trim();
            class_names.iter().find(|c| c.trim().eq_ignore_ascii_case(r)).cloned()
        });
    let justification = object
        .as_ref()
        .and_then(|m| m.get("justification"))
        .and_then(Value::as_str)
        .map(str::to_string);
    LlmReply {
        raw_text: raw_text.to_string(),
        parsed_result,
        justification,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn classes() -> Vec<String> {
        vec!["Obstructive".into(), "Healthy".into()]
    }

    #[test]
    fn example_reply() {
        let r = parse_reply(
            r#"{"result":"Obstructive","justification":"Expiratory wheezes with COPD/asthma indicate airway obstruction."}"#,
            &classes(),
        );
        assert_eq!(r.parsed_result.as_deref(), Some("Obstructive"));
        assert!(r.justification.unwrap().starts_with("Expiratory"));
    }

    #[test]
    fn case_and_space_folded() {
        let r = parse_reply(r#"{"result":"obstructive "}"#, &classes());
        assert_eq!(r.parsed_result.as_deref(), Some("Obstructive"));
    }

    #[test]
    fn failures_encoded() {
        assert_eq!(parse_reply("I think it is COPD", &classes()).parsed_result, None);
        assert_eq!(parse_reply(r#"{"result":"COPD"}"#, &classes()).parsed_result, None);
        assert_eq!(parse_reply(r#"{"result":3}"#, &classes()).parsed_result, None);
        assert_eq!(parse_reply("{broken", &classes()).parsed_result, None);
    }

    #[test]
    fn object_found_inside_prose() {
        let r = parse_reply(
            "Sure {not json} here: ```{\"result\": \"Healthy\", \"justification\": \"clear\"}``` done",
            &classes(),
        );
        assert_eq!(r.parsed_result.as_deref(), Some("Healthy"));
    }
}
