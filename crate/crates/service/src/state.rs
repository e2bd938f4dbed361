use std::collections::BTreeMap;
use std::sync::{Arc, Mutex, RwLock};

use serde::{Deserialize, Serialize};

use groundform_core::answer::FillConfig;
use groundform_core::clock::{Clock, SystemClock};
use groundform_core::condlogic::{build_dependency_graph, CondError, DepGraph};
use groundform_core::fieldmap::{ConfigError, FieldMapper};
use groundform_core::index::LexicalIndex;
use groundform_core::model::ModelClient;
use groundform_core::schema::CanonicalSchema;

use crate::auth::TokenSigner;
use crate::edit::{Reviser, RuleReviser};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceConfig {
    pub token_ttl_s: u64,
    /// Largest accepted document text, in bytes.
    pub max_document_bytes: usize,
    /// Retrieval and formatting settings for suggestions. `user` is
    /// overwritten with the caller on every request.
    pub fill: FillConfig,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig { token_ttl_s: 3600, max_document_bytes: 1 << 20, fill: FillConfig::default() }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum StateError {
    #[error(transparent)]
    Conditions(#[from] CondError),
    #[error(transparent)]
    Mapping(#[from] ConfigError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentStatus {
    pub doc_name: String,
    /// `processing` while chunking, then `indexed` or `failed`.
    pub status: String,
    pub chunks_indexed: usize,
    pub uploaded_at: u64,
}

/// Shared state behind every handler. The index has a single writer (document
/// uploads) and many readers; uploads for one user are serialized by the
/// per-user document list lock.
pub struct AppState {
    pub(crate) users: BTreeMap<String, String>,
    pub(crate) signer: TokenSigner,
    pub(crate) clock: Arc<dyn Clock>,
    pub(crate) schema: Arc<CanonicalSchema>,
    pub(crate) graph: DepGraph,
    pub(crate) mapper: FieldMapper,
    pub(crate) index: RwLock<LexicalIndex>,
    pub(crate) documents: Mutex<BTreeMap<String, Vec<DocumentStatus>>>,
    pub(crate) model: Arc<dyn ModelClient>,
    pub(crate) reviser: Arc<dyn Reviser>,
    pub(crate) cfg: ServiceConfig,
}

impl AppState {
    pub fn new(
        schema: CanonicalSchema,
        index: LexicalIndex,
        model: Arc<dyn ModelClient>,
        signing_key: impl Into<Vec<u8>>,
    ) -> Result<Self, StateError> {
        let schema = Arc::new(schema);
        let cfg = ServiceConfig::default();
        Ok(AppState {
            users: BTreeMap::new(),
            signer: TokenSigner::new(signing_key),
            clock: Arc::new(SystemClock),
            graph: build_dependency_graph(&schema)?,
            mapper: FieldMapper::new(schema.clone(), cfg.fill.mapping.clone())?,
            schema,
            index: RwLock::new(index),
            documents: Mutex::new(BTreeMap::new()),
            model,
            reviser: Arc::new(RuleReviser),
            cfg,
        })
    }

    pub fn with_user(mut self, user_id: &str, secret: &str) -> Self {
        self.users.insert(user_id.to_owned(), secret.to_owned());
        self
    }

    pub fn with_clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = clock;
        self
    }

    pub fn with_reviser(mut self, reviser: Arc<dyn Reviser>) -> Self {
        self.reviser = reviser;
        self
    }

    pub fn with_config(mut self, cfg: ServiceConfig) -> Result<Self, StateError> {
        self.mapper = FieldMapper::new(self.schema.clone(), cfg.fill.mapping.clone())?;
        self.cfg = cfg;
        Ok(self)
    }

    pub fn now(&self) -> u64 {
        self.clock.now_secs().max(0.0) as u64
    }

    /// Fingerprint of the shared index, for checking that reads left it untouched.
    pub fn index_fingerprint(&self) -> String {
        self.index.read().expect("index lock").fingerprint()
    }
}
