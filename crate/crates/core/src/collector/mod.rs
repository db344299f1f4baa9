//! Page collection server: registration, list distribution, ingestion and
//! manifest-backed storage.
//!
//! Layout under the root directory:
//!
//! ```text
//! collections/{id}/manifest.log
//! collections/{id}/pages/{agent}/{ingest_sequence}.html
//! ```

pub mod http;
pub mod manifest;

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::design::ExperimentDesign;
use crate::error::{Error, Result};
use crate::record::{PageRecord, PageUpload};
use crate::time::Timestamp;
use manifest::{ManifestWriter, MANIFEST_FILE};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Credentials {
    pub agent_key: String,
}

/// Capacity limits on ingestion. With no bandwidth limit every upload is
/// acknowledged immediately.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IngestLimits {
    pub bandwidth_bytes_per_sec: Option<u64>,
    pub max_queue_depth: Option<usize>,
    pub retry_after_ms: u64,
}

impl Default for IngestLimits {
    fn default() -> Self {
        IngestLimits {
            bandwidth_bytes_per_sec: None,
            max_queue_depth: None,
            retry_after_ms: 1000,
        }
    }
}

/// Single-server FIFO queue in collector time: uploads are served one after
/// another at the configured bandwidth and shed once too many are waiting.
#[derive(Debug, Default)]
struct IngestGate {
    limits: IngestLimits,
    busy_until_ms: f64,
    in_queue: VecDeque<f64>,
}

impl IngestGate {
    /// Returns when the upload is acknowledged, or `RetryLater`.
    fn admit(&mut self, now: Timestamp, bytes: usize) -> Result<Timestamp> {
        let Some(bw) = self.limits.bandwidth_bytes_per_sec else {
            return Ok(now);
        };
        let now_ms = now.millis() as f64;
        while self.in_queue.front().is_some_and(|&done| done <= now_ms) {
            self.in_queue.pop_front();
        }
        if let Some(depth) = self.limits.max_queue_depth {
            if self.in_queue.len() >= depth {
                return Err(Error::RetryLater {
                    retry_after_ms: self.limits.retry_after_ms,
                });
            }
        }
        let start = self.busy_until_ms.max(now_ms);
        let done = start + bytes as f64 * 1000.0 / bw.max(1) as f64;
        self.busy_until_ms = done;
        self.in_queue.push_back(done);
        Ok(Timestamp::from_millis(done.ceil() as i64))
    }
}

/// Collection settings served to agents.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CollectionConfig {
    pub collection_id: String,
    pub engines: Vec<String>,
    pub queries: Vec<String>,
    pub allowed_tokens: BTreeSet<String>,
}

impl CollectionConfig {
    pub fn from_design(design: &ExperimentDesign, tokens: impl IntoIterator<Item = String>) -> Self {
        CollectionConfig {
            collection_id: design.collection_id.clone(),
            engines: design.engines.iter().map(|e| e.engine_id.clone()).collect(),
            queries: design.queries.clone(),
            allowed_tokens: tokens.into_iter().collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EngineList {
    pub engines: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryList {
    pub queries: Vec<String>,
}

/// An acknowledged upload.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Ingested {
    pub record: PageRecord,
    /// When the acknowledgment reaches the agent.
    pub ack_at: Timestamp,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CollectorStatus {
    pub collection_id: String,
    pub records: u64,
    pub bytes: u64,
    pub shed: u64,
    pub by_agent: BTreeMap<String, u64>,
    pub by_engine: BTreeMap<String, u64>,
    pub by_category: BTreeMap<String, u64>,
}

/// Point-in-time, immutable view of a collection.
#[derive(Clone, Debug)]
pub struct ManifestView {
    pub collection_id: String,
    records: Arc<[PageRecord]>,
}

impl ManifestView {
    pub fn records(&self) -> &[PageRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

struct Store {
    dir: PathBuf,
    writer: Option<ManifestWriter>,
    next_sequence: u64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CollectorOptions {
    /// fsync payloads and manifest lines before acknowledging.
    pub sync: bool,
    pub limits: IngestLimits,
}

impl Default for CollectorOptions {
    fn default() -> Self {
        CollectorOptions {
            sync: true,
            limits: IngestLimits::default(),
        }
    }
}

pub struct Collector {
    root: PathBuf,
    options: CollectorOptions,
    config: Option<CollectionConfig>,
    /// agent_key -> token
    keys: HashMap<String, String>,
    store: Mutex<Store>,
    records: RwLock<Vec<PageRecord>>,
    gate: Mutex<IngestGate>,
    shed: std::sync::atomic::AtomicU64,
}

fn agent_key(collection_id: &str, token: &str) -> String {
    let mut h = Sha256::new();
    h.update(collection_id.as_bytes());
    h.update([0]);
    h.update(token.as_bytes());
    let digest = h.finalize();
    let hex: String = digest[..12].iter().map(|b| format!("{b:02x}")).collect();
    format!("key-{hex}")
}

fn safe_component(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' { c } else { '_' })
        .collect()
}

pub fn collection_dir(root: &Path, collection_id: &str) -> PathBuf {
    root.join("collections").join(safe_component(collection_id))
}

impl Collector {
    /// Opens (or creates) the collection in `config` under `root`, replaying its manifest.
    pub fn open(root: impl Into<PathBuf>, config: CollectionConfig, options: CollectorOptions) -> Result<Self> {
        let root = root.into();
        let dir = collection_dir(&root, &config.collection_id);
        fs::create_dir_all(dir.join("pages")).map_err(|e| Error::io(&dir, e))?;
        let manifest_path = dir.join(MANIFEST_FILE);
        let replayed = manifest::replay(&manifest_path)?;
        let writer = ManifestWriter::open(&manifest_path, replayed.valid_len, options.sync)?;
        let next_sequence = replayed
            .records
            .iter()
            .map(|r| r.ingest_sequence + 1)
            .max()
            .unwrap_or(0);
        let keys = config
            .allowed_tokens
            .iter()
            .map(|t| (agent_key(&config.collection_id, t), t.clone()))
            .collect();
        Ok(Collector {
            root,
            options,
            keys,
            store: Mutex::new(Store {
                dir,
                writer: Some(writer),
                next_sequence,
            }),
            records: RwLock::new(replayed.records),
            gate: Mutex::new(IngestGate {
                limits: options.limits,
                ..Default::default()
            }),
            config: Some(config),
            shed: Default::default(),
        })
    }

    /// A server with no collection configured; everything but status fails.
    pub fn unconfigured(root: impl Into<PathBuf>) -> Self {
        let root = root.into();
        let dir = root.join("collections").join("_unconfigured");
        Collector {
            options: CollectorOptions::default(),
            config: None,
            keys: HashMap::new(),
            store: Mutex::new(Store {
                writer: None,
                dir,
                next_sequence: 0,
            }),
            records: RwLock::new(Vec::new()),
            gate: Mutex::new(IngestGate::default()),
            root,
            shed: Default::default(),
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn collection_id(&self) -> Option<&str> {
        self.config.as_ref().map(|c| c.collection_id.as_str())
    }

    pub fn collection_dir(&self) -> PathBuf {
        self.store.lock().expect("store lock").dir.clone()
    }

    pub fn register(&self, token: &str) -> Result<Credentials> {
        let config = self.config.as_ref().ok_or(Error::Unconfigured)?;
        if token.is_empty() || !config.allowed_tokens.contains(token) {
            return Err(Error::Rejected(format!("unknown token {token:?}")));
        }
        Ok(Credentials {
            agent_key: agent_key(&config.collection_id, token),
        })
    }

    pub fn get_lists(&self) -> Result<(EngineList, QueryList)> {
        match &self.config {
            Some(c) if !c.engines.is_empty() && !c.queries.is_empty() => Ok((
                EngineList {
                    engines: c.engines.clone(),
                },
                QueryList {
                    queries: c.queries.clone(),
                },
            )),
            _ => Err(Error::Unconfigured),
        }
    }

    /// Stores an upload arriving at `now`. The record is durable when this returns.
    pub fn ingest(&self, upload: &PageUpload, now: Timestamp) -> Result<Ingested> {
        if self.config.is_none() {
            return Err(Error::Unconfigured);
        }
        if !self.keys.contains_key(&upload.token) {
            return Err(Error::Rejected("invalid credentials".into()));
        }
        if upload.payload.is_empty() {
            return Err(Error::InvalidArgument("empty payload".into()));
        }
        let ack_at = match self.gate.lock().expect("gate lock").admit(now, upload.payload.len()) {
            Ok(t) => t,
            Err(e) => {
                self.shed.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                return Err(e);
            }
        };

        let mut store = self.store.lock().expect("store lock");
        let store = &mut *store;
        let writer = store.writer.as_mut().ok_or(Error::Unconfigured)?;
        let seq = store.next_sequence;
        let agent_dir = format!("pages/{}", safe_component(&upload.agent_id));
        let rel = format!("{agent_dir}/{seq}.html");
        let abs_dir = store.dir.join(&agent_dir);
        let abs = store.dir.join(&rel);
        fs::create_dir_all(&abs_dir).map_err(|e| Error::io(&abs_dir, e))?;
        let write = || -> std::io::Result<()> {
            let mut f = fs::File::create(&abs)?;
            f.write_all(&upload.payload)?;
            if self.options.sync {
                f.sync_data()?;
            }
            Ok(())
        };
        if let Err(e) = write() {
            let _ = fs::remove_file(&abs);
            return Err(Error::io(&abs, e));
        }
        let record = PageRecord::from_upload(upload, rel, seq);
        if let Err(e) = writer.append(&record) {
            let _ = fs::remove_file(&abs);
            return Err(e);
        }
        store.next_sequence += 1;
        self.records.write().expect("records lock").push(record.clone());
        Ok(Ingested { record, ack_at })
    }

    pub fn snapshot(&self, collection_id: &str) -> Result<ManifestView> {
        match self.collection_id() {
            Some(id) if id == collection_id => Ok(ManifestView {
                collection_id: id.to_string(),
                records: self.records.read().expect("records lock").as_slice().into(),
            }),
            _ => Err(Error::UnknownCollection(collection_id.to_string())),
        }
    }

    pub fn status(&self) -> CollectorStatus {
        let records = self.records.read().expect("records lock");
        let mut status = CollectorStatus {
            collection_id: self.collection_id().unwrap_or_default().to_string(),
            shed: self.shed.load(std::sync::atomic::Ordering::Relaxed),
            ..Default::default()
        };
        for r in records.iter() {
            status.records += 1;
            status.bytes += r.byte_size;
            *status.by_agent.entry(r.agent_id.clone()).or_default() += 1;
            *status.by_engine.entry(r.engine_id.clone()).or_default() += 1;
            let cat = r.category.map(|c| c.as_str()).unwrap_or("none");
            *status.by_category.entry(cat.to_string()).or_default() += 1;
        }
        status
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::SearchCategory;
    use crate::engines::PageKind;

    fn config() -> CollectionConfig {
        CollectionConfig {
            collection_id: "c1".into(),
            engines: vec!["google".into(), "bing".into()],
            queries: vec!["q1".into(), "q2".into()],
            allowed_tokens: ["t1", "t2"].iter().map(|s| s.to_string()).collect(),
        }
    }

    fn fast() -> CollectorOptions {
        CollectorOptions {
            sync: false,
            ..Default::default()
        }
    }

    pub(crate) fn upload(key: &str, agent: &str, bytes: usize) -> PageUpload {
        PageUpload {
            token: key.into(),
            agent_id: agent.into(),
            region: "eu".into(),
            browser_id: "chrome-like".into(),
            timestamp: Timestamp::from_secs(100),
            engine_id: "google".into(),
            category: Some(SearchCategory::Text),
            intended_query: "q1".into(),
            effective_query: "q1".into(),
            page_index: 1,
            kind: PageKind::Result,
            routine_seq: Some(0),
            payload: vec![b'x'; bytes],
        }
    }

    #[test]
    fn register_idempotent_and_rejects_unknown() {
        let dir = tempfile::tempdir().unwrap();
        let c = Collector::open(dir.path(), config(), fast()).unwrap();
        let a = c.register("t1").unwrap();
        assert_eq!(a, c.register("t1").unwrap());
        assert_ne!(a, c.register("t2").unwrap());
        assert!(matches!(c.register("nope"), Err(Error::Rejected(_))));
    }

    #[test]
    fn lists_are_stable() {
        let dir = tempfile::tempdir().unwrap();
        let c = Collector::open(dir.path(), config(), fast()).unwrap();
        let (e, q) = c.get_lists().unwrap();
        assert_eq!(e.engines, vec!["google", "bing"]);
        assert_eq!(
            serde_json::to_vec(&c.get_lists().unwrap().1).unwrap(),
            serde_json::to_vec(&q).unwrap()
        );
        assert!(matches!(Collector::unconfigured(dir.path()).get_lists(), Err(Error::Unconfigured)));
        let mut empty = config();
        empty.queries.clear();
        let c = Collector::open(dir.path(), empty, fast()).unwrap();
        assert!(c.get_lists().is_err());
    }

    #[test]
    fn ingest_echoes_size_and_stores_payload() {
        let dir = tempfile::tempdir().unwrap();
        let c = Collector::open(dir.path(), config(), fast()).unwrap();
        let key = c.register("t1").unwrap().agent_key;
        let rec = c.ingest(&upload(&key, "a1", 204_800), Timestamp::from_secs(100)).unwrap().record;
        assert_eq!(rec.byte_size, 204_800);
        let on_disk = fs::metadata(c.collection_dir().join(&rec.storage_path)).unwrap().len();
        assert_eq!(on_disk, 204_800);
    }

    #[test]
    fn bad_credentials_store_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let c = Collector::open(dir.path(), config(), fast()).unwrap();
        assert!(matches!(
            c.ingest(&upload("t1", "a1", 10), Timestamp::from_secs(1)),
            Err(Error::Rejected(_))
        ));
        assert_eq!(c.snapshot("c1").unwrap().len(), 0);
        assert_eq!(fs::metadata(c.collection_dir().join(MANIFEST_FILE)).unwrap().len(), 0);
    }

    #[test]
    fn storage_failure_leaves_no_manifest_line() {
        let dir = tempfile::tempdir().unwrap();
        let c = Collector::open(dir.path(), config(), fast()).unwrap();
        let key = c.register("t1").unwrap().agent_key;
        // A plain file where the agent's page directory belongs.
        fs::write(c.collection_dir().join("pages").join("blocked"), b"").unwrap();
        assert!(matches!(
            c.ingest(&upload(&key, "blocked", 10), Timestamp::from_secs(1)),
            Err(Error::Io { .. })
        ));
        assert_eq!(fs::metadata(c.collection_dir().join(MANIFEST_FILE)).unwrap().len(), 0);
        // The next upload still gets sequence 0.
        let ok = c.ingest(&upload(&key, "a1", 10), Timestamp::from_secs(1)).unwrap();
        assert_eq!(ok.record.ingest_sequence, 0);
    }

    #[test]
    fn duplicates_are_kept() {
        let dir = tempfile::tempdir().unwrap();
        let c = Collector::open(dir.path(), config(), fast()).unwrap();
        let key = c.register("t1").unwrap().agent_key;
        let u = upload(&key, "a1", 10);
        c.ingest(&u, Timestamp::from_secs(1)).unwrap();
        c.ingest(&u, Timestamp::from_secs(1)).unwrap();
        assert_eq!(c.snapshot("c1").unwrap().len(), 2);
    }

    #[test]
    fn snapshots_are_point_in_time() {
        let dir = tempfile::tempdir().unwrap();
        let c = Collector::open(dir.path(), config(), fast()).unwrap();
        assert!(c.snapshot("c1").unwrap().is_empty());
        assert!(matches!(c.snapshot("other"), Err(Error::UnknownCollection(_))));
        let key = c.register("t1").unwrap().agent_key;
        for _ in 0..10 {
            c.ingest(&upload(&key, "a1", 10), Timestamp::from_secs(1)).unwrap();
        }
        let view = c.snapshot("c1").unwrap();
        for _ in 0..5 {
            c.ingest(&upload(&key, "a1", 10), Timestamp::from_secs(1)).unwrap();
        }
        assert_eq!(view.len(), 10);
        assert_eq!(c.snapshot("c1").unwrap().len(), 15);
    }

    #[test]
    fn gate_without_limits_acks_immediately() {
        let mut g = IngestGate::default();
        assert_eq!(g.admit(Timestamp(5), 1_000_000).unwrap(), Timestamp(5));
    }

    #[test]
    fn gate_queues_and_sheds() {
        let mut g = IngestGate {
            limits: IngestLimits {
                bandwidth_bytes_per_sec: Some(1000),
                max_queue_depth: Some(2),
                retry_after_ms: 250,
            },
            ..Default::default()
        };
        // 500 bytes at 1000 B/s take 500 ms each.
        assert_eq!(g.admit(Timestamp(0), 500).unwrap(), Timestamp(500));
        assert_eq!(g.admit(Timestamp(0), 500).unwrap(), Timestamp(1000));
        assert!(matches!(g.admit(Timestamp(0), 500), Err(Error::RetryLater { retry_after_ms: 250 })));
        // After the first upload drains there is room again.
        assert_eq!(g.admit(Timestamp(600), 500).unwrap(), Timestamp(1500));
    }

    #[test]
    fn status_counts() {
        let dir = tempfile::tempdir().unwrap();
        let c = Collector::open(dir.path(), config(), fast()).unwrap();
        let key = c.register("t1").unwrap().agent_key;
        c.ingest(&upload(&key, "a1", 10), Timestamp::from_secs(1)).unwrap();
        c.ingest(&upload(&key, "a2", 30), Timestamp::from_secs(1)).unwrap();
        let s = c.status();
        assert_eq!((s.records, s.bytes), (2, 40));
        assert_eq!(s.by_agent["a2"], 1);
        assert_eq!(s.by_category["text"], 2);
    }
}
