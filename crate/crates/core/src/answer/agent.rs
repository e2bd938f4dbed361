//! Tool-using loop for open-ended questions.

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::chunker::SourceType;
use crate::index::tree::OverlapSelector;
use crate::index::{tiered_retrieve, tree_navigate, DocTree, LexicalIndex, RetrievalRequest};
use crate::model::{Message, ModelClient, ModelError, ModelRequest, ModelResponse, ToolSpec, REFUSAL_TOKEN};

pub const SEARCH_TOOL: &str = "search_knowledge_base";
pub const LIST_TOOL: &str = "list_documents";

pub const AGENT_SYSTEM_TEXT: &str = "You help a student answer application questions. \
Use the tools to look things up before answering. Answer only from tool results. \
If they do not contain the answer, reply with exactly INSUFFICIENT_CONTEXT.";

#[derive(Debug, thiserror::Error)]
pub enum AgentError {
    #[error("model called undeclared tool `{0}`")]
    UnknownTool(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// What the tools can reach.
pub struct AgentTools<'a> {
    pub index: &'a LexicalIndex,
    /// Named personal documents.
    pub documents: &'a [(String, DocTree)],
    pub user: Option<&'a str>,
    pub top_k: usize,
    pub tau: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActivityEvent {
    pub iteration: usize,
    pub tool: String,
    pub description: String,
    pub documents: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentOutcome {
    pub final_text: String,
    pub activity_log: Vec<ActivityEvent>,
    /// Model calls made.
    pub iterations: usize,
    pub refused: bool,
}

pub fn tool_specs() -> Vec<ToolSpec> {
    vec![
        ToolSpec {
            name: SEARCH_TOOL.into(),
            description: "Search personal documents or institution pages.".into(),
            parameters: json!({
                "type": "object",
                "properties": {
                    "query": {"type": "string"},
                    "scope": {"type": "string", "enum": ["personal", "public"]}
                },
                "required": ["query"]
            }),
        },
        ToolSpec {
            name: LIST_TOOL.into(),
            description: "List the student's uploaded documents.".into(),
            parameters: json!({"type": "object", "properties": {}}),
        },
    ]
}

/// Runs model turns until a text answer or `max_iters` model calls. Every
/// tool call is executed, logged and fed back as a tool message.
pub fn run_agent_loop(
    mut conversation: Vec<Message>,
    tools: &AgentTools<'_>,
    model: &dyn ModelClient,
    max_iters: usize,
) -> Result<AgentOutcome, AgentError> {
    let specs = tool_specs();
    let mut log = Vec::new();
    for iteration in 1..=max_iters {
        let req = ModelRequest { system_text: AGENT_SYSTEM_TEXT.into(), messages: conversation.clone(), tools: specs.clone() };
        match model.complete(&req)? {
            ModelResponse::Text(t) => {
                let refused = t.trim() == REFUSAL_TOKEN;
                return Ok(AgentOutcome { final_text: t, activity_log: log, iterations: iteration, refused });
            }
            ModelResponse::ToolCall { name, arguments } => {
                let (event, result) = match name.as_str() {
                    SEARCH_TOOL => search(tools, &arguments, iteration),
                    LIST_TOOL => list(tools, iteration),
                    _ => return Err(AgentError::UnknownTool(name)),
                };
                tracing::debug!(tool = %name, "{}", event.description);
                conversation.push(Message::assistant(format!("{name} {arguments}")));
                conversation.push(Message::tool(result));
                log.push(event);
            }
        }
    }
    Ok(AgentOutcome { final_text: REFUSAL_TOKEN.into(), activity_log: log, iterations: max_iters, refused: true })
}

fn search(tools: &AgentTools<'_>, args: &serde_json::Value, iteration: usize) -> (ActivityEvent, String) {
    let query = args.get("query").and_then(|q| q.as_str()).unwrap_or_default().to_owned();
    let personal = args.get("scope").and_then(|s| s.as_str()) == Some("personal");
    let mut lines = Vec::new();
    let mut documents = Vec::new();
    let description;
    if personal {
        description = format!("Searching personal documents for '{query}'");
        for (name, tree) in tools.documents {
            let hits = tree_navigate(tree, &query, &OverlapSelector::default());
            if !hits.is_empty() {
                documents.push(name.clone());
            }
            for h in hits {
                lines.push(format!("[{name}#{}] {}", h.node_id, h.extracted_text));
            }
        }
        if let Some(user) = tools.user {
            let req = RetrievalRequest::new(&query, tools.top_k).scoped(user).only(&[SourceType::Personal]);
            for h in tools.index.lexical_search(&req) {
                if !documents.contains(&h.chunk.source_url) {
                    documents.push(h.chunk.source_url.clone());
                }
                lines.push(format!("[{}] {}", h.chunk.id, h.chunk.text));
            }
        }
    } else {
        description = format!("Searching institution pages for '{query}'");
        let mut req = RetrievalRequest::new(&query, tools.top_k);
        req.user_scope = tools.user.map(str::to_owned);
        req.source_filter = Some(SourceType::PUBLIC_TIERS.into_iter().collect());
        for h in tiered_retrieve(tools.index, &req, tools.tau) {
            if !documents.contains(&h.chunk.source_url) {
                documents.push(h.chunk.source_url.clone());
            }
            lines.push(format!("[{}] {}", h.chunk.id, h.chunk.text));
        }
    }
    let result = if lines.is_empty() { "No results.".to_owned() } else { lines.join("\n") };
    (ActivityEvent { iteration, tool: SEARCH_TOOL.into(), description, documents }, result)
}

fn list(tools: &AgentTools<'_>, iteration: usize) -> (ActivityEvent, String) {
    let names: Vec<String> = tools.documents.iter().map(|(n, _)| n.clone()).collect();
    let result = if names.is_empty() { "No documents.".to_owned() } else { names.join("\n") };
    (ActivityEvent { iteration, tool: LIST_TOOL.into(), description: "Listing personal documents".into(), documents: names }, result)
}
