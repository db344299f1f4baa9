#![allow(dead_code)]

use std::path::Path;

use serp_audit_core::collector::manifest::{read_manifest, MANIFEST_FILE};
use serp_audit_core::config::FaultsFile;
use serp_audit_core::design::{BrowserProfile, EngineProfile, ExperimentDesign};
use serp_audit_core::fleet::{run_simulated, RunOutcome};
use serp_audit_core::record::PageRecord;
use serp_audit_core::time::Timestamp;

pub fn start() -> Timestamp {
    Timestamp::parse_rfc3339("2021-03-15T12:00:30Z").unwrap()
}

pub fn queries(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix} {i}")).collect()
}

pub fn design(id: &str, engines: &[&str], queries: Vec<String>, agents: u32, browsers: usize) -> ExperimentDesign {
    let profiles = engines
        .iter()
        .map(|e| EngineProfile::builtin(e).expect("builtin engine"))
        .collect();
    let mut d = ExperimentDesign::new(id, profiles, queries, agents, start());
    d.browsers = [BrowserProfile::chrome_like(), BrowserProfile::firefox_like()][..browsers].to_vec();
    d
}

/// The 12-agent, 6-engine, 2-browser, 10-query reference design.
pub fn reference_design() -> ExperimentDesign {
    let engines = ["baidu", "bing", "duckduckgo", "google", "yahoo", "yandex"];
    design("reference", &engines, queries("reference query", 10), 12, 2)
}

pub fn quiet_faults() -> FaultsFile {
    let mut f = FaultsFile::default();
    f.collector.sync = false;
    f
}

pub fn run(design: &ExperimentDesign, faults: &FaultsFile, seed: u64, root: &Path) -> (RunOutcome, Vec<PageRecord>) {
    let out = run_simulated(design, faults, seed, root).expect("run");
    let records = read_manifest(&out.collection_dir.join(MANIFEST_FILE)).expect("manifest");
    (out, records)
}
