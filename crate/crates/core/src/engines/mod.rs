//! Deterministic simulated search engines with injectable faults.

pub mod http;
pub mod payload;
pub mod size;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::design::{CaptchaPolicy, EncodingPolicy, EngineProfile, SearchCategory};
use crate::error::{Error, Result};
use crate::seed;
use payload::PageSpec;
pub use size::{size_model, SizeGenerator, SizeModel, SizeTable};

/// Size of the small non-result pages (home, consent, captcha, terminal).
pub const AUX_PAGE_BYTES: usize = 2048;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PageKind {
    Result,
    Home,
    Consent,
    Captcha,
    Dummy,
}

impl PageKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PageKind::Result => "result",
            PageKind::Home => "home",
            PageKind::Consent => "consent",
            PageKind::Captcha => "captcha",
            PageKind::Dummy => "dummy",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [
            PageKind::Result,
            PageKind::Home,
            PageKind::Consent,
            PageKind::Captcha,
            PageKind::Dummy,
        ]
        .into_iter()
        .find(|k| k.as_str() == s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RequestKind {
    Home,
    Consent,
    Search,
    Dummy,
}

/// The "IP" an engine sees: one per (region, agent).
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SourceIdentity {
    pub region: String,
    pub agent: String,
}

impl SourceIdentity {
    pub fn new(region: impl Into<String>, agent: impl Into<String>) -> Self {
        SourceIdentity {
            region: region.into(),
            agent: agent.into(),
        }
    }
}

impl fmt::Display for SourceIdentity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.region, self.agent)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EngineRequest {
    pub engine_id: String,
    pub kind: RequestKind,
    pub category: Option<SearchCategory>,
    pub query: String,
    /// Result page (paginated) or section (continuous) number, starting at 1.
    pub index: u32,
    pub source: SourceIdentity,
}

impl EngineRequest {
    pub fn home(engine: &str, source: &SourceIdentity) -> Self {
        EngineRequest {
            engine_id: engine.to_string(),
            kind: RequestKind::Home,
            category: None,
            query: String::new(),
            index: 0,
            source: source.clone(),
        }
    }

    pub fn consent(engine: &str, source: &SourceIdentity) -> Self {
        EngineRequest {
            kind: RequestKind::Consent,
            ..Self::home(engine, source)
        }
    }

    pub fn search(
        engine: &str,
        category: SearchCategory,
        query: &str,
        index: u32,
        source: &SourceIdentity,
    ) -> Self {
        EngineRequest {
            engine_id: engine.to_string(),
            kind: RequestKind::Search,
            category: Some(category),
            query: query.to_string(),
            index,
            source: source.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnginePage {
    pub kind: PageKind,
    pub category: Option<SearchCategory>,
    /// Query the engine actually answered, after autocorrection and encoding.
    pub effective_query: String,
    pub page_index: u32,
    /// More pages or sections follow this one.
    pub has_next: bool,
    /// "No more results" page served past the end of a category.
    pub terminal: bool,
    #[serde(skip)]
    pub payload: Vec<u8>,
}

impl EnginePage {
    pub fn byte_size(&self) -> usize {
        self.payload.len()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureMode {
    /// The request fails immediately with a transport error.
    Error,
    /// The request never completes.
    Hang,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Latency {
    pub base_ms: u64,
    pub jitter_ms: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FaultPolicy {
    pub latency: Latency,
    pub failure_rate: f64,
    pub failure_mode: FailureMode,
    pub captcha_policy: Option<CaptchaPolicy>,
    pub autocorrect_map: BTreeMap<String, String>,
    pub encoding_policy: EncodingPolicy,
    pub seed: u64,
}

impl FaultPolicy {
    /// Fault-free policy carrying the profile's own quirks.
    pub fn for_profile(profile: &EngineProfile, seed: u64) -> Self {
        FaultPolicy {
            latency: Latency::default(),
            failure_rate: 0.0,
            failure_mode: FailureMode::Error,
            captcha_policy: profile.captcha_policy.clone(),
            autocorrect_map: profile.autocorrect_map.clone(),
            encoding_policy: profile.encoding_policy,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.failure_rate) {
            return Err(Error::Config(format!(
                "failure_rate {} outside [0, 1]",
                self.failure_rate
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum TransportFailure {
    /// Injected connection or server error.
    Network,
    /// The engine does not serve this category.
    NotFound,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ServeOutcome {
    Page(EnginePage),
    Failure(TransportFailure),
    /// The response never arrives.
    Stall,
}

/// What an engine does with one request: the outcome plus how long it takes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Served {
    pub outcome: ServeOutcome,
    pub latency: Duration,
}

/// Replaces each run of non-ASCII characters by its UTF-8 byte count as two
/// digits followed by `00`, so "manifestação" becomes "manifesta0400o".
pub fn corrupt_accents(query: &str) -> String {
    let mut out = String::with_capacity(query.len());
    let mut run_bytes = 0usize;
    for ch in query.chars() {
        if ch.is_ascii() {
            if run_bytes > 0 {
                let _ = std::fmt::Write::write_fmt(&mut out, format_args!("{:02}00", run_bytes % 100));
                run_bytes = 0;
            }
            out.push(ch);
        } else {
            run_bytes += ch.len_utf8();
        }
    }
    if run_bytes > 0 {
        let _ = std::fmt::Write::write_fmt(&mut out, format_args!("{:02}00", run_bytes % 100));
    }
    out
}

#[derive(Debug, Default, Clone, Copy)]
struct SourceCounters {
    /// Requests counted toward the captcha threshold.
    throttle: u64,
    /// Requests drawn from this source's fault stream.
    stream: u64,
}

/// One simulated engine.
#[derive(Debug)]
pub struct MockEngine {
    profile: EngineProfile,
    fault: FaultPolicy,
    sizes: BTreeMap<SearchCategory, SizeGenerator>,
    counters: Mutex<HashMap<SourceIdentity, SourceCounters>>,
}

impl MockEngine {
    pub fn new(profile: EngineProfile, fault: FaultPolicy, sizes: &SizeTable) -> Self {
        let generators = SearchCategory::ALL
            .into_iter()
            .map(|c| {
                let model = sizes.model(&profile.engine_id, c);
                (c, size_model(&profile.engine_id, c, model, fault.seed))
            })
            .collect();
        MockEngine {
            profile,
            fault,
            sizes: generators,
            counters: Mutex::new(HashMap::new()),
        }
    }

    pub fn profile(&self) -> &EngineProfile {
        &self.profile
    }

    pub fn fault(&self) -> &FaultPolicy {
        &self.fault
    }

    pub fn effective_query(&self, query: &str) -> String {
        let corrected = self
            .fault
            .autocorrect_map
            .get(query)
            .cloned()
            .unwrap_or_else(|| query.to_string());
        match self.fault.encoding_policy {
            EncodingPolicy::Faithful => corrected,
            EncodingPolicy::LatinAccentCorrupting => corrupt_accents(&corrected),
        }
    }

    /// Clears per-source throttle and fault-stream counters.
    pub fn reset_throttles(&self) {
        self.counters.lock().expect("counter lock").clear();
    }

    /// Throttle counter for a source, for inspection in tests.
    pub fn throttle_count(&self, source: &SourceIdentity) -> u64 {
        self.counters
            .lock()
            .expect("counter lock")
            .get(source)
            .map(|c| c.throttle)
            .unwrap_or(0)
    }

    fn page(&self, kind: PageKind, request: &EngineRequest, effective_query: String) -> EnginePage {
        let spec = PageSpec {
            kind,
            engine: &self.profile.engine_id,
            category: request.category,
            query: &effective_query,
            page_index: request.index,
            terminal: false,
            target_bytes: AUX_PAGE_BYTES,
            seed: self.fault.seed,
        };
        EnginePage {
            kind,
            category: request.category,
            payload: payload::render(&spec),
            effective_query,
            page_index: request.index,
            has_next: false,
            terminal: false,
        }
    }

    fn search(&self, request: &EngineRequest, throttle_count: u64) -> ServeOutcome {
        let Some(category) = request.category else {
            return ServeOutcome::Failure(TransportFailure::NotFound);
        };
        let Some(mode) = self.profile.per_category.get(&category) else {
            return ServeOutcome::Failure(TransportFailure::NotFound);
        };
        if let Some(policy) = &self.fault.captcha_policy {
            if policy.blocked_categories.contains(&category) && throttle_count > policy.threshold {
                return ServeOutcome::Page(self.page(PageKind::Captcha, request, request.query.clone()));
            }
        }
        let effective_query = self.effective_query(&request.query);
        let units = mode.units();
        let index = request.index.max(1);
        let terminal = index > units;
        let target_bytes = if terminal {
            AUX_PAGE_BYTES
        } else {
            self.sizes[&category].size_for(&effective_query, index)
        };
        let spec = PageSpec {
            kind: PageKind::Result,
            engine: &self.profile.engine_id,
            category: Some(category),
            query: &effective_query,
            page_index: index,
            terminal,
            target_bytes,
            seed: self.fault.seed,
        };
        ServeOutcome::Page(EnginePage {
            kind: PageKind::Result,
            category: Some(category),
            payload: payload::render(&spec),
            effective_query,
            page_index: index,
            has_next: index < units,
            terminal,
        })
    }

    /// Answers one request. Deterministic given the seed and the sequence of
    /// requests from the same source; other sources do not influence it.
    pub fn serve(&self, request: &EngineRequest) -> Served {
        let (throttle, stream) = {
            let mut counters = self.counters.lock().expect("counter lock");
            let c = counters.entry(request.source.clone()).or_default();
            c.stream += 1;
            if request.kind != RequestKind::Dummy {
                c.throttle += 1;
            }
            (c.throttle, c.stream)
        };
        let mut rng = seed::rng(
            self.fault.seed,
            &[
                b"fault",
                self.profile.engine_id.as_bytes(),
                request.source.region.as_bytes(),
                request.source.agent.as_bytes(),
                &stream.to_le_bytes(),
            ],
        );
        let jitter = if self.fault.latency.jitter_ms > 0 {
            rng.random_range(0..=self.fault.latency.jitter_ms)
        } else {
            0
        };
        let latency = Duration::from_millis(self.fault.latency.base_ms + jitter);
        let failed = self.fault.failure_rate > 0.0 && rng.random::<f64>() < self.fault.failure_rate;
        if failed && request.kind != RequestKind::Dummy {
            let outcome = match self.fault.failure_mode {
                FailureMode::Error => ServeOutcome::Failure(TransportFailure::Network),
                FailureMode::Hang => ServeOutcome::Stall,
            };
            return Served { outcome, latency };
        }
        let outcome = match request.kind {
            RequestKind::Home => ServeOutcome::Page(self.page(PageKind::Home, request, String::new())),
            RequestKind::Consent => ServeOutcome::Page(self.page(PageKind::Consent, request, String::new())),
            RequestKind::Dummy => ServeOutcome::Page(self.page(PageKind::Dummy, request, String::new())),
            RequestKind::Search => self.search(request, throttle),
        };
        Served { outcome, latency }
    }
}

/// All engines of an experiment, keyed by id.
#[derive(Debug, Default)]
pub struct EngineFleet {
    engines: BTreeMap<String, Arc<MockEngine>>,
}

impl EngineFleet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Fleet with fault-free policies derived from each profile.
    pub fn from_profiles(profiles: &[EngineProfile], sizes: &SizeTable, seed: u64) -> Self {
        let mut fleet = Self::new();
        for p in profiles {
            fleet.insert(MockEngine::new(p.clone(), FaultPolicy::for_profile(p, seed), sizes));
        }
        fleet
    }

    pub fn insert(&mut self, engine: MockEngine) {
        self.engines
            .insert(engine.profile.engine_id.clone(), Arc::new(engine));
    }

    pub fn get(&self, engine_id: &str) -> Option<&Arc<MockEngine>> {
        self.engines.get(engine_id)
    }

    pub fn engine_ids(&self) -> impl Iterator<Item = &str> {
        self.engines.keys().map(String::as_str)
    }

    pub fn serve(&self, request: &EngineRequest) -> Result<Served> {
        self.engines
            .get(&request.engine_id)
            .map(|e| e.serve(request))
            .ok_or_else(|| Error::UnknownEngine(request.engine_id.clone()))
    }

    pub fn reset_throttles(&self) {
        for engine in self.engines.values() {
            engine.reset_throttles();
        }
    }
}
