//! Provider-agnostic model interface and the offline extractor.

use std::collections::{BTreeSet, VecDeque};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::text::content_words;

pub const REFUSAL_TOKEN: &str = "INSUFFICIENT_CONTEXT";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    User,
    Assistant,
    Tool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn user(content: impl Into<String>) -> Self {
        Message { role: Role::User, content: content.into() }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Message { role: Role::Assistant, content: content.into() }
    }

    pub fn tool(content: impl Into<String>) -> Self {
        Message { role: Role::Tool, content: content.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolSpec {
    pub name: String,
    pub description: String,
    pub parameters: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ModelRequest {
    pub system_text: String,
    pub messages: Vec<Message>,
    pub tools: Vec<ToolSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelResponse {
    Text(String),
    ToolCall { name: String, arguments: serde_json::Value },
}

#[derive(Debug, Clone, thiserror::Error, PartialEq, Eq)]
#[error("model backend error: {0}")]
pub struct ModelError(pub String);

pub trait ModelClient: Send + Sync {
    fn complete(&self, req: &ModelRequest) -> Result<ModelResponse, ModelError>;
}

pub const SYNTHESIS_SYSTEM_TEXT: &str = "Answer the question using only the numbered context passages. \
Cite every passage you use with its number in square brackets, e.g. [1]. \
If the passages do not contain the answer, reply with exactly INSUFFICIENT_CONTEXT.";

/// The grounded-answer prompt: the raw question, the field intent and the
/// numbered context passages. Continuation lines of a passage are indented
/// so that passage text can never be mistaken for a new `[n]` header.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynthesisPrompt {
    pub question: String,
    pub intent: String,
    pub passages: Vec<String>,
}

impl SynthesisPrompt {
    pub fn render(&self) -> String {
        let mut out = format!("Question: {}\nIntent: {}\nContext:\n", one_line(&self.question), one_line(&self.intent));
        for (i, p) in self.passages.iter().enumerate() {
            let body = p.lines().collect::<Vec<_>>().join("\n    ");
            out.push_str(&format!("[{}] {}\n", i + 1, body));
        }
        out
    }

    pub fn to_request(&self) -> ModelRequest {
        ModelRequest { system_text: SYNTHESIS_SYSTEM_TEXT.into(), messages: vec![Message::user(self.render())], tools: vec![] }
    }

    pub fn parse(text: &str) -> Option<Self> {
        let mut lines = text.lines();
        let question = lines.next()?.strip_prefix("Question: ")?.to_owned();
        let intent = lines.next()?.strip_prefix("Intent: ")?.to_owned();
        if lines.next()? != "Context:" {
            return None;
        }
        let mut passages: Vec<String> = Vec::new();
        for line in lines {
            if let Some(rest) = line.strip_prefix("    ") {
                let last = passages.last_mut()?;
                last.push('\n');
                last.push_str(rest);
            } else {
                let (num, body) = line.strip_prefix('[')?.split_once("] ")?;
                if num.parse::<usize>().ok()? != passages.len() + 1 {
                    return None;
                }
                passages.push(body.to_owned());
            }
        }
        Some(SynthesisPrompt { question, intent, passages })
    }
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Sentences of a passage, as verbatim substrings. A sentence ends at a line
/// break or at `.`, `!` or `?` followed by whitespace.
pub fn sentences(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    for line in text.lines() {
        let mut start = 0;
        let bytes = line.as_bytes();
        for (i, &b) in bytes.iter().enumerate() {
            if matches!(b, b'.' | b'!' | b'?') && bytes.get(i + 1).is_some_and(|n| n.is_ascii_whitespace()) {
                push_trimmed(&mut out, &line[start..=i]);
                start = i + 1;
            }
        }
        push_trimmed(&mut out, &line[start..]);
    }
    out
}

fn push_trimmed<'a>(out: &mut Vec<&'a str>, s: &'a str) {
    let t = s.trim().trim_start_matches(['#', '-', ' ']);
    if !t.is_empty() {
        out.push(t);
    }
}

/// Offline model that answers by extraction: it picks the context sentence
/// sharing the most content words with the question and intent, and cites
/// every passage containing that sentence verbatim. With no shared words it
/// refuses.
#[derive(Debug, Default, Clone, Copy)]
pub struct DeterministicExtractor;

impl DeterministicExtractor {
    pub fn answer(prompt: &SynthesisPrompt) -> String {
        let query: BTreeSet<String> =
            content_words(&format!("{} {}", prompt.question, prompt.intent)).into_iter().collect();
        // (shared words, overlap ratio, -passage, -position)
        let mut best: Option<((usize, f64), &str)> = None;
        for passage in &prompt.passages {
            for sentence in sentences(passage) {
                let words: BTreeSet<String> = content_words(sentence).into_iter().collect();
                let shared = words.intersection(&query).count();
                if shared == 0 {
                    continue;
                }
                let ratio = shared as f64 / words.len() as f64;
                let better = match best {
                    None => true,
                    Some(((s, r), _)) => shared > s || (shared == s && ratio > r),
                };
                if better {
                    best = Some(((shared, ratio), sentence));
                }
            }
        }
        let Some((_, sentence)) = best else { return REFUSAL_TOKEN.into() };
        let markers: String = prompt
            .passages
            .iter()
            .enumerate()
            .filter(|(_, p)| p.contains(sentence))
            .map(|(i, _)| format!("[{}]", i + 1))
            .collect();
        format!("{sentence} {markers}")
    }
}

impl ModelClient for DeterministicExtractor {
    fn complete(&self, req: &ModelRequest) -> Result<ModelResponse, ModelError> {
        let prompt = req.messages.iter().rev().find(|m| m.role == Role::User).and_then(|m| SynthesisPrompt::parse(&m.content));
        Ok(ModelResponse::Text(match prompt {
            Some(p) => Self::answer(&p),
            None => REFUSAL_TOKEN.into(),
        }))
    }
}

/// Replays canned responses; once the script is exhausted it repeats the
/// fallback, or refuses.
#[derive(Debug, Default)]
pub struct ScriptedModel {
    script: Mutex<VecDeque<ModelResponse>>,
    fallback: Option<ModelResponse>,
    calls: AtomicUsize,
    requests: Mutex<Vec<ModelRequest>>,
}

impl ScriptedModel {
    pub fn new(script: Vec<ModelResponse>) -> Self {
        ScriptedModel { script: Mutex::new(script.into()), ..Default::default() }
    }

    pub fn repeating(response: ModelResponse) -> Self {
        ScriptedModel { fallback: Some(response), ..Default::default() }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn requests(&self) -> Vec<ModelRequest> {
        self.requests.lock().unwrap().clone()
    }
}

impl ModelClient for ScriptedModel {
    fn complete(&self, req: &ModelRequest) -> Result<ModelResponse, ModelError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.requests.lock().unwrap().push(req.clone());
        let next = self.script.lock().unwrap().pop_front();
        Ok(next.or_else(|| self.fallback.clone()).unwrap_or_else(|| ModelResponse::Text(REFUSAL_TOKEN.into())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn prompt(q: &str, passages: &[&str]) -> SynthesisPrompt {
        SynthesisPrompt { question: q.into(), intent: String::new(), passages: passages.iter().map(|s| s.to_string()).collect() }
    }

    #[test]
    fn prompt_round_trip() {
        let p = SynthesisPrompt {
            question: "What is your GPA?".into(),
            intent: "grade point average".into(),
            passages: vec!["line one\n[2] tricky\nline three".into(), "second".into()],
        };
        assert_eq!(SynthesisPrompt::parse(&p.render()), Some(p));
    }

    #[test]
    fn sentence_split() {
        assert_eq!(sentences("# Transcript\nCumulative GPA: 3.72\nA b. C d! e"), ["Transcript", "Cumulative GPA: 3.72", "A b.", "C d!", "e"]);
        assert_eq!(sentences("GPA 3.72 overall."), ["GPA 3.72 overall."]);
    }

    #[test]
    fn extracts_gpa_line() {
        let p = prompt("What is your cumulative GPA?", &["Student ID: 123456\nCumulative GPA: 3.72\nCredits: 8.0"]);
        assert_eq!(DeterministicExtractor::answer(&p), "Cumulative GPA: 3.72 [1]");
    }

    #[test]
    fn refuses_without_overlap() {
        let p = prompt("What is your cumulative GPA?", &["Robotics club captain."]);
        assert_eq!(DeterministicExtractor::answer(&p), REFUSAL_TOKEN);
        assert_eq!(DeterministicExtractor::answer(&prompt("GPA?", &[])), REFUSAL_TOKEN);
    }

    #[test]
    fn cites_every_passage_with_the_sentence() {
        let p = prompt("cumulative gpa", &["x\nCumulative GPA: 3.72", "Other text.", "Cumulative GPA: 3.72\ny"]);
        assert_eq!(DeterministicExtractor::answer(&p), "Cumulative GPA: 3.72 [1][3]");
    }

    #[test]
    fn unparseable_prompt_refuses() {
        let req = ModelRequest { messages: vec![Message::user("hello")], ..Default::default() };
        assert_eq!(DeterministicExtractor.complete(&req).unwrap(), ModelResponse::Text(REFUSAL_TOKEN.into()));
    }

    #[test]
    fn scripted_model_replays_then_falls_back() {
        let m = ScriptedModel::new(vec![ModelResponse::Text("a".into())]);
        let req = ModelRequest::default();
        assert_eq!(m.complete(&req).unwrap(), ModelResponse::Text("a".into()));
        assert_eq!(m.complete(&req).unwrap(), ModelResponse::Text(REFUSAL_TOKEN.into()));
        assert_eq!(m.calls(), 2);
    }
}
