//! SQL to question conversion and back, with round-trip validation.

use serde::{Deserialize, Serialize};

use crate::error::LlmError;
use crate::llm::{ChatModel, EndpointConfig};
use crate::metadata::MetadataDatabase;
use crate::prompts;
use crate::template::{execute_query, serialize_answer, InstantiatedQuery};

pub const DEFAULT_MAX_ATTEMPTS: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConversionPayload {
    pub sql: String,
    pub question: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    SqlToNl,
    NlToSql,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConversionAttempt {
    pub direction: Direction,
    pub input: String,
    pub raw_output: String,
    pub payload: Option<ConversionPayload>,
    pub success: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ConversionError {
    /// The reply was not a usable JSON payload. Counts as a failed attempt.
    Parse(String),
    /// The endpoint failed after its own retries.
    Endpoint(LlmError),
}

fn payload_from(text: &str) -> Result<ConversionPayload, String> {
    let v: serde_json::Value = serde_json::from_str(text).map_err(|e| format!("invalid JSON: {e}"))?;
    let obj = v.as_object().ok_or("JSON reply is not an object")?;
    let field = |k: &str| -> Result<String, String> {
        match obj.get(k) {
            Some(serde_json::Value::String(s)) => Ok(s.clone()),
            Some(_) => Err(format!("field `{k}` is not a string")),
            None => Err(format!("missing field `{k}`")),
        }
    };
    Ok(ConversionPayload { sql: field("sql")?, question: field("question")? })
}

/// Accepts a bare JSON object, a single fenced code block holding one, or one
/// object with prose before and after it.
pub fn extract_json(raw: &str) -> Result<ConversionPayload, String> {
    let t = raw.trim();
    if t.starts_with('{') {
        if let Ok(p) = payload_from(t) {
            return Ok(p);
        }
    }
    let fences = t.matches("```").count();
    if fences == 2 {
        let start = t.find("```").unwrap() + 3;
        let end = start + t[start..].find("```").unwrap();
        let inner = &t[start..end];
        let inner = inner.strip_prefix("json").or_else(|| inner.strip_prefix("JSON")).unwrap_or(inner);
        return payload_from(inner.trim());
    }
    if fences != 0 {
        return Err(format!("expected at most one fenced block, found {} fences", fences));
    }
    match (t.find('{'), t.rfind('}')) {
        (Some(a), Some(b)) if a < b => payload_from(&t[a..=b]),
        _ => Err("no JSON object in reply".into()),
    }
}

fn convert(
    direction: Direction,
    input: &str,
    model: &dyn ChatModel,
    ep: &EndpointConfig,
) -> (Result<ConversionPayload, ConversionError>, ConversionAttempt) {
    let prompt = match direction {
        Direction::SqlToNl => prompts::sql_to_question(input),
        Direction::NlToSql => prompts::question_to_sql(input),
    };
    let mut attempt = ConversionAttempt {
        direction,
        input: input.to_string(),
        raw_output: String::new(),
        payload: None,
        success: false,
    };
    let raw = match model.complete(&ep.request(prompt)) {
        Ok(r) => r,
        Err(e) => return (Err(ConversionError::Endpoint(e)), attempt),
    };
    attempt.raw_output = raw.clone();
    match extract_json(&raw) {
        Ok(p) => {
            attempt.payload = Some(p.clone());
            attempt.success = true;
            (Ok(p), attempt)
        }
        Err(m) => (Err(ConversionError::Parse(m)), attempt),
    }
}

pub fn sql_to_question(
    sql: &str,
    model: &dyn ChatModel,
    ep: &EndpointConfig,
) -> (Result<String, ConversionError>, ConversionAttempt) {
    let (r, a) = convert(Direction::SqlToNl, sql, model, ep);
    (r.map(|p| p.question), a)
}

pub fn question_to_sql(
    question: &str,
    model: &dyn ChatModel,
    ep: &EndpointConfig,
) -> (Result<String, ConversionError>, ConversionAttempt) {
    let (r, a) = convert(Direction::NlToSql, question, model, ep);
    (r.map(|p| p.sql), a)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundTripAttempt {
    pub attempt: usize,
    pub question: Option<String>,
    pub back_sql: Option<String>,
    pub back_answer: Option<String>,
    pub error: Option<String>,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Validation {
    Accepted { question: String, back_sql: String, gold_answer: String, log: Vec<RoundTripAttempt> },
    Discarded { gold_answer: String, log: Vec<RoundTripAttempt> },
}

impl Validation {
    pub fn attempts(&self) -> usize {
        match self {
            Validation::Accepted { log, .. } | Validation::Discarded { log, .. } => log.len(),
        }
    }

    pub fn is_accepted(&self) -> bool {
        matches!(self, Validation::Accepted { .. })
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("converter endpoint failed: {0}")]
pub struct EndpointFailure(pub LlmError);

/// Question generation followed by back-translation, accepted when both
/// queries serialize to the same answer on `db`.
pub fn round_trip_validate(
    q: &InstantiatedQuery,
    db: &MetadataDatabase,
    model: &dyn ChatModel,
    ep: &EndpointConfig,
    max_attempts: usize,
) -> Result<Validation, EndpointFailure> {
    let gold = match execute_query(db, &q.sql) {
        Ok(r) => serialize_answer(&r),
        Err(e) => {
            let log = vec![RoundTripAttempt {
                attempt: 1,
                question: None,
                back_sql: None,
                back_answer: None,
                error: Some(format!("original query failed: {e}")),
                accepted: false,
            }];
            return Ok(Validation::Discarded { gold_answer: String::new(), log });
        }
    };
    let mut log = Vec::new();
    for attempt in 1..=max_attempts {
        let mut rec = RoundTripAttempt {
            attempt,
            question: None,
            back_sql: None,
            back_answer: None,
            error: None,
            accepted: false,
        };
        match sql_to_question(&q.sql, model, ep).0 {
            Err(ConversionError::Endpoint(e)) => return Err(EndpointFailure(e)),
            Err(ConversionError::Parse(m)) => rec.error = Some(format!("sql_to_nl: {m}")),
            Ok(question) => {
                rec.question = Some(question.clone());
                match question_to_sql(&question, model, ep).0 {
                    Err(ConversionError::Endpoint(e)) => return Err(EndpointFailure(e)),
                    Err(ConversionError::Parse(m)) => rec.error = Some(format!("nl_to_sql: {m}")),
                    Ok(back) => {
                        rec.back_sql = Some(back.clone());
                        match execute_query(db, &back) {
                            Err(e) => rec.error = Some(format!("back-translated query failed: {e}")),
                            Ok(r) => {
                                let ans = serialize_answer(&r);
                                rec.accepted = ans == gold;
                                rec.back_answer = Some(ans);
                                if rec.accepted {
                                    log.push(rec);
                                    return Ok(Validation::Accepted {
                                        question,
                                        back_sql: back,
                                        gold_answer: gold,
                                        log,
                                    });
                                }
                            }
                        }
                    }
                }
            }
        }
        log.push(rec);
    }
    Ok(Validation::Discarded { gold_answer: gold, log })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn extraction_rules() {
        let ok = ConversionPayload { sql: "S".into(), question: "Q".into() };
        assert_eq!(extract_json(r#"{"sql": "S", "question": "Q"}"#).unwrap(), ok);
        assert_eq!(extract_json("```json\n{\"sql\": \"S\", \"question\": \"Q\"}\n```").unwrap(), ok);
        assert_eq!(extract_json("Here you go:\n{\"question\": \"Q\", \"sql\": \"S\"}\nThanks").unwrap(), ok);
        assert!(extract_json(r#"{"sql": "S"}"#).unwrap_err().contains("question"));
        assert!(extract_json("no json here").is_err());
        assert!(extract_json("```{\"sql\":\"S\",\"question\":\"Q\"}``` ```x```").is_err());
        assert!(extract_json(r#"{"sql": "S", "question": "Q"} {"sql": "T", "question": "R"}"#).is_err());
        assert!(extract_json(r#"{"sql": 3, "question": "Q"}"#).is_err());
    }
}
