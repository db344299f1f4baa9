//! Upload envelopes and manifest records.
//!
//! Manifest records serialize with fields in declaration order; that order is
//! part of the on-disk format.

use serde::{Deserialize, Serialize};

use crate::design::SearchCategory;
use crate::engines::PageKind;
use crate::time::Timestamp;

/// One page as sent by an agent's tracker.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PageUpload {
    /// Credential key issued at registration.
    pub token: String,
    pub agent_id: String,
    pub region: String,
    pub browser_id: String,
    pub timestamp: Timestamp,
    pub engine_id: String,
    pub category: Option<SearchCategory>,
    pub intended_query: String,
    pub effective_query: String,
    pub page_index: u32,
    pub kind: PageKind,
    /// Per-agent routine counter; `None` for pages outside a routine.
    pub routine_seq: Option<u32>,
    #[serde(skip)]
    pub payload: Vec<u8>,
}

/// The metadata part of an upload, as sent over HTTP ahead of the raw payload.
pub type UploadEnvelope = PageUpload;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PageClass {
    Unclassified,
    EffectiveResult,
    Home,
    Consent,
    Captcha,
    Dummy,
    PostExperiment,
    UnintendedQuery,
}

impl PageClass {
    pub const ASSIGNABLE: [PageClass; 7] = [
        PageClass::EffectiveResult,
        PageClass::Home,
        PageClass::Consent,
        PageClass::Captcha,
        PageClass::Dummy,
        PageClass::PostExperiment,
        PageClass::UnintendedQuery,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PageClass::Unclassified => "unclassified",
            PageClass::EffectiveResult => "effective_result",
            PageClass::Home => "home",
            PageClass::Consent => "consent",
            PageClass::Captcha => "captcha",
            PageClass::Dummy => "dummy",
            PageClass::PostExperiment => "post_experiment",
            PageClass::UnintendedQuery => "unintended_query",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PageRecord {
    pub token: String,
    pub agent_id: String,
    pub region: String,
    pub browser_id: String,
    pub timestamp: Timestamp,
    pub engine_id: String,
    pub category: Option<SearchCategory>,
    pub intended_query: String,
    pub effective_query: String,
    pub page_index: u32,
    pub kind: PageKind,
    pub routine_seq: Option<u32>,
    pub byte_size: u64,
    /// Relative to the collection directory.
    pub storage_path: String,
    pub ingest_sequence: u64,
    pub classification: PageClass,
}

impl PageRecord {
    pub fn from_upload(upload: &PageUpload, storage_path: String, ingest_sequence: u64) -> Self {
        PageRecord {
            token: upload.token.clone(),
            agent_id: upload.agent_id.clone(),
            region: upload.region.clone(),
            browser_id: upload.browser_id.clone(),
            timestamp: upload.timestamp,
            engine_id: upload.engine_id.clone(),
            category: upload.category,
            intended_query: upload.intended_query.clone(),
            effective_query: upload.effective_query.clone(),
            page_index: upload.page_index,
            kind: upload.kind,
            routine_seq: upload.routine_seq,
            byte_size: upload.payload.len() as u64,
            storage_path,
            ingest_sequence,
            classification: PageClass::Unclassified,
        }
    }
}
