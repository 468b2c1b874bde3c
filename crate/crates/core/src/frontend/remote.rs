//! Blocking client for a chat-completions-style JSON endpoint.
//!
//! The prompt is a versioned text asset; the reply must be a JSON object
//! `{"affordance": ..., "part": ...}` with the affordance validated against
//! the closed five-type set. Transport errors are retried once, then fail —
//! there is no silent fallback to the offline analyzer.

use serde::Deserialize;
use serde_json::json;

use crate::dataset::AffordanceType;

use super::{FrontendError, GraspDirective, TaskInstruction};

/// Versioned prompt template; `{instruction}` is substituted.
pub static PROMPT_TEMPLATE: &str = include_str!("../../assets/prompt_template.txt");

#[derive(Debug, Clone)]
pub struct RemoteConfig {
    /// Chat-completions endpoint URL.
    pub endpoint: String,
    pub model: String,
    /// API key value (callers read it from the environment; it never goes
    /// through flags or config files).
    pub api_key: String,
    pub timeout_secs: u64,
}

#[derive(Deserialize)]
struct ChatReply {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: Message,
}

#[derive(Deserialize)]
struct Message {
    content: String,
}

#[derive(Deserialize)]
struct DirectiveReply {
    affordance: String,
    part: String,
}

/// Sends the instruction through the prompt template and parses the model's
/// JSON directive. Retries once on transport failure.
pub fn analyze_instruction_remote(
    instr: &TaskInstruction,
    cfg: &RemoteConfig,
) -> Result<GraspDirective, FrontendError> {
    let prompt = PROMPT_TEMPLATE.replace("{instruction}", &instr.text);
    let body = json!({
        "model": cfg.model,
        "messages": [
            {"role": "user", "content": prompt}
        ],
        "temperature": 0.0,
    });
    let client = reqwest::blocking::Client::builder()
        .timeout(std::time::Duration::from_secs(cfg.timeout_secs))
        .build()
        .map_err(|e| FrontendError::Transport {
            endpoint: cfg.endpoint.clone(),
            detail: e.to_string(),
        })?;

    let mut last_err = None;
    for _ in 0..2 {
        match client
            .post(&cfg.endpoint)
            .bearer_auth(&cfg.api_key)
            .json(&body)
            .send()
        {
            Ok(resp) => {
                let status = resp.status();
                let text = resp.text().map_err(|e| FrontendError::Transport {
                    endpoint: cfg.endpoint.clone(),
                    detail: e.to_string(),
                })?;
                if !status.is_success() {
                    return Err(FrontendError::Protocol {
                        detail: format!("HTTP {status}"),
                        raw: text,
                    });
                }
                return parse_reply(&text);
            }
            Err(e) => last_err = Some(e.to_string()),
        }
    }
    Err(FrontendError::Transport {
        endpoint: cfg.endpoint.clone(),
        detail: last_err.unwrap_or_else(|| "unknown".into()),
    })
}

fn parse_reply(raw: &str) -> Result<GraspDirective, FrontendError> {
    let chat: ChatReply = serde_json::from_str(raw).map_err(|e| FrontendError::Protocol {
        detail: format!("reply is not a chat completion: {e}"),
        raw: raw.to_string(),
    })?;
    let content = chat
        .choices
        .first()
        .map(|c| c.message.content.as_str())
        .ok_or_else(|| FrontendError::Protocol {
            detail: "no choices in reply".into(),
            raw: raw.to_string(),
        })?;
    // tolerate markdown code fences around the JSON
    let trimmed = content
        .trim()
        .trim_start_matches("```json")
        .trim_start_matches("```")
        .trim_end_matches("```")
        .trim();
    let directive: DirectiveReply =
        serde_json::from_str(trimmed).map_err(|e| FrontendError::Protocol {
            detail: format!("directive is not valid JSON: {e}"),
            raw: content.to_string(),
        })?;
    let affordance = AffordanceType::parse(&directive.affordance)
        .map_err(|_| FrontendError::Validation(format!(
            "affordance {:?} is outside the five-type set",
            directive.affordance
        )))?;
    GraspDirective::new(affordance, directive.part)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{Read, Write};
    use std::net::TcpListener;

    /// One-shot HTTP server returning a fixed chat-completion body.
    fn mock_server(content_json: String) -> (String, std::thread::JoinHandle<()>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let handle = std::thread::spawn(move || {
            if let Ok((mut stream, _)) = listener.accept() {
                let mut buf = [0u8; 65536];
                let _ = stream.read(&mut buf);
                let body = serde_json::json!({
                    "choices": [{"message": {"role": "assistant", "content": content_json}}]
                })
                .to_string();
                let reply = format!(
                    "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{}",
                    body.len(),
                    body
                );
                let _ = stream.write_all(reply.as_bytes());
            }
        });
        (format!("http://{addr}/v1/chat/completions"), handle)
    }

    fn cfg(endpoint: String) -> RemoteConfig {
        RemoteConfig {
            endpoint,
            model: "test-model".into(),
            api_key: "test-key".into(),
            timeout_secs: 5,
        }
    }

    #[test]
    fn kettle_instruction_maps_to_handle_grip() {
        let (endpoint, h) = mock_server(
            r#"{"affordance": "handle-grasp", "part": "handle"}"#.to_string(),
        );
        let instr =
            TaskInstruction::new("could you please hold the kettle to pour some tea?").unwrap();
        let d = analyze_instruction_remote(&instr, &cfg(endpoint)).unwrap();
        assert_eq!(d.affordance, AffordanceType::HandleGrip);
        assert_eq!(d.part_name, "handle");
        h.join().unwrap();
    }

    #[test]
    fn affordance_outside_set_is_a_validation_error() {
        let (endpoint, h) = mock_server(r#"{"affordance": "point", "part": "tip"}"#.to_string());
        let instr = TaskInstruction::new("point at the tip").unwrap();
        let err = analyze_instruction_remote(&instr, &cfg(endpoint)).unwrap_err();
        assert!(matches!(err, FrontendError::Validation(_)), "{err:?}");
        h.join().unwrap();
    }

    #[test]
    fn mocked_round_trip_echoes_directive() {
        let (endpoint, h) =
            mock_server(r#"{"affordance": "base-support", "part": "base"}"#.to_string());
        let instr = TaskInstruction::new("hold the bowl steady").unwrap();
        let d = analyze_instruction_remote(&instr, &cfg(endpoint)).unwrap();
        assert_eq!(
            d,
            GraspDirective::new(AffordanceType::BaseSupport, "base").unwrap()
        );
        h.join().unwrap();
    }

    #[test]
    fn unparseable_reply_carries_raw_text() {
        let (endpoint, h) = mock_server("the hand should grab the thing".to_string());
        let instr = TaskInstruction::new("grab it").unwrap();
        let err = analyze_instruction_remote(&instr, &cfg(endpoint)).unwrap_err();
        match err {
            FrontendError::Protocol { raw, .. } => {
                assert!(raw.contains("grab the thing"));
            }
            other => panic!("expected protocol error, got {other:?}"),
        }
        h.join().unwrap();
    }

    #[test]
    fn unreachable_endpoint_is_a_transport_error() {
        let instr = TaskInstruction::new("hold it").unwrap();
        let err = analyze_instruction_remote(
            &instr,
            &cfg("http://127.0.0.1:1/v1/chat/completions".into()),
        )
        .unwrap_err();
        assert!(matches!(err, FrontendError::Transport { .. }));
    }
}
