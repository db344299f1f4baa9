//! TOML design and fault files.
//!
//! A design file names engines and browsers by id; built-in profiles fill in
//! the rest unless a `[profiles.<id>]` table supplies a full profile:
//!
//! ```toml
//! collection_id = "ref"
//! engines = ["google", "yandex"]
//! queries = ["climate", "election"]
//! agents = 4
//! browsers = ["chrome", "firefox"]
//! start_epoch = "2021-03-15T12:00:30Z"
//! ```
//!
//! A faults file overlays latency, failures, captchas, autocorrection and
//! encoding on the engines, sets page sizes and limits collector ingestion:
//!
//! ```toml
//! [engines.yandex.captcha]
//! threshold = 2
//! blocked_categories = ["text", "news"]
//!
//! [collector]
//! bandwidth_bytes_per_sec = 200000
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::collector::{CollectorOptions, IngestLimits};
use crate::design::{
    BrowserProfile, CaptchaPolicy, EncodingPolicy, EngineProfile, ExperimentDesign,
    DEFAULT_CYCLE_SECONDS, DEFAULT_MAX_RELOADS, DEFAULT_PAGE_LOAD_TIMEOUT_SECONDS,
    DEFAULT_READINESS_CHECK_SECONDS, DEFAULT_ROUTINE_BUDGET_SECONDS,
};
use crate::engines::size::SizeTable;
use crate::engines::{EngineFleet, FailureMode, FaultPolicy, MockEngine};
use crate::error::{Error, Result};
use crate::seed;
use crate::time::Timestamp;

fn default_regions() -> Vec<String> {
    vec!["region-1".into()]
}
fn default_browsers() -> Vec<String> {
    vec!["chrome".into()]
}
fn one() -> u32 {
    1
}
fn cycle() -> u64 {
    DEFAULT_CYCLE_SECONDS
}
fn budget() -> u64 {
    DEFAULT_ROUTINE_BUDGET_SECONDS
}
fn readiness() -> u64 {
    DEFAULT_READINESS_CHECK_SECONDS
}
fn reloads() -> u32 {
    DEFAULT_MAX_RELOADS
}
fn page_timeout() -> u64 {
    DEFAULT_PAGE_LOAD_TIMEOUT_SECONDS
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignFile {
    pub collection_id: String,
    pub engines: Vec<String>,
    pub queries: Vec<String>,
    pub agents: u32,
    #[serde(default = "default_regions")]
    pub regions: Vec<String>,
    #[serde(default = "default_browsers")]
    pub browsers: Vec<String>,
    #[serde(default = "one")]
    pub iterations: u32,
    #[serde(default = "cycle")]
    pub cycle_seconds: u64,
    #[serde(default = "budget")]
    pub routine_budget_seconds: u64,
    #[serde(default = "readiness")]
    pub readiness_check_seconds: u64,
    #[serde(default = "reloads")]
    pub max_reloads: u32,
    #[serde(default = "page_timeout")]
    pub page_load_timeout_seconds: u64,
    #[serde(default)]
    pub shutdown_grace_seconds: u64,
    pub start_epoch: Timestamp,
    /// Defaults to the end of the last scheduled cycle.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub end_epoch: Option<Timestamp>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub profiles: BTreeMap<String, EngineProfile>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub browser_profiles: BTreeMap<String, BrowserProfile>,
}

impl DesignFile {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("design file: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("design file serializes")
    }

    /// Resolves engine and browser ids into profiles.
    pub fn into_design(self) -> Result<ExperimentDesign> {
        let mut engines = Vec::with_capacity(self.engines.len());
        for id in &self.engines {
            let profile = match self.profiles.get(id) {
                Some(p) => p.clone(),
                None => EngineProfile::builtin(id)
                    .ok_or_else(|| Error::Config(format!("unknown engine {id} and no [profiles.{id}]")))?,
            };
            if profile.engine_id != *id {
                return Err(Error::Config(format!(
                    "profile for {id} declares engine_id {}",
                    profile.engine_id
                )));
            }
            engines.push(profile);
        }
        let mut browsers = Vec::with_capacity(self.browsers.len());
        for id in &self.browsers {
            let profile = match self.browser_profiles.get(id) {
                Some(p) => p.clone(),
                None => BrowserProfile::builtin(id)
                    .ok_or_else(|| Error::Config(format!("unknown browser {id}")))?,
            };
            browsers.push(profile);
        }
        let mut design = ExperimentDesign {
            collection_id: self.collection_id,
            engines,
            queries: self.queries,
            agents: self.agents,
            regions: self.regions,
            browsers,
            iterations: self.iterations,
            cycle_seconds: self.cycle_seconds,
            routine_budget_seconds: self.routine_budget_seconds,
            readiness_check_seconds: self.readiness_check_seconds,
            max_reloads: self.max_reloads,
            page_load_timeout_seconds: self.page_load_timeout_seconds,
            shutdown_grace_seconds: self.shutdown_grace_seconds,
            start_epoch: self.start_epoch,
            end_epoch: self.start_epoch,
        };
        design.end_epoch = self.end_epoch.unwrap_or_else(|| design.planned_end());
        Ok(design)
    }

    /// File describing `design`; profiles that differ from built-ins are written out.
    pub fn from_design(design: &ExperimentDesign) -> Self {
        let profiles = design
            .engines
            .iter()
            .filter(|p| EngineProfile::builtin(&p.engine_id).as_ref() != Some(*p))
            .map(|p| (p.engine_id.clone(), p.clone()))
            .collect();
        let browser_profiles = design
            .browsers
            .iter()
            .filter(|b| BrowserProfile::builtin(&b.browser_id).as_ref() != Some(*b))
            .map(|b| (b.browser_id.clone(), b.clone()))
            .collect();
        DesignFile {
            collection_id: design.collection_id.clone(),
            engines: design.engines.iter().map(|e| e.engine_id.clone()).collect(),
            queries: design.queries.clone(),
            agents: design.agents,
            regions: design.regions.clone(),
            browsers: design.browsers.iter().map(|b| b.browser_id.clone()).collect(),
            iterations: design.iterations,
            cycle_seconds: design.cycle_seconds,
            routine_budget_seconds: design.routine_budget_seconds,
            readiness_check_seconds: design.readiness_check_seconds,
            max_reloads: design.max_reloads,
            page_load_timeout_seconds: design.page_load_timeout_seconds,
            shutdown_grace_seconds: design.shutdown_grace_seconds,
            start_epoch: design.start_epoch,
            end_epoch: Some(design.end_epoch),
            profiles,
            browser_profiles,
        }
    }
}

pub fn load_design(path: &Path) -> Result<ExperimentDesign> {
    DesignFile::load(path)?.into_design()
}

/// Fault settings for one engine; unset fields keep the engine's defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultOverlay {
    pub latency_ms: Option<u64>,
    pub jitter_ms: Option<u64>,
    pub failure_rate: Option<f64>,
    pub failure_mode: Option<FailureMode>,
    pub captcha: Option<CaptchaPolicy>,
    pub autocorrect: Option<BTreeMap<String, String>>,
    pub encoding: Option<EncodingPolicy>,
}

impl FaultOverlay {
    pub fn apply(&self, policy: &mut FaultPolicy) {
        if let Some(v) = self.latency_ms {
            policy.latency.base_ms = v;
        }
        if let Some(v) = self.jitter_ms {
            policy.latency.jitter_ms = v;
        }
        if let Some(v) = self.failure_rate {
            policy.failure_rate = v;
        }
        if let Some(v) = self.failure_mode {
            policy.failure_mode = v;
        }
        if let Some(v) = &self.captcha {
            policy.captcha_policy = Some(v.clone());
        }
        if let Some(v) = &self.autocorrect {
            policy.autocorrect_map.extend(v.clone());
        }
        if let Some(v) = self.encoding {
            policy.encoding_policy = v;
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CollectorSettings {
    #[serde(default)]
    pub bandwidth_bytes_per_sec: Option<u64>,
    #[serde(default)]
    pub max_queue_depth: Option<usize>,
    #[serde(default = "retry_after")]
    pub retry_after_ms: u64,
    /// fsync before acknowledging.
    #[serde(default = "yes")]
    pub sync: bool,
}

fn retry_after() -> u64 {
    IngestLimits::default().retry_after_ms
}
fn yes() -> bool {
    true
}

impl Default for CollectorSettings {
    fn default() -> Self {
        CollectorSettings {
            bandwidth_bytes_per_sec: None,
            max_queue_depth: None,
            retry_after_ms: retry_after(),
            sync: true,
        }
    }
}

impl CollectorSettings {
    pub fn options(&self) -> CollectorOptions {
        CollectorOptions {
            sync: self.sync,
            limits: IngestLimits {
                bandwidth_bytes_per_sec: self.bandwidth_bytes_per_sec,
                max_queue_depth: self.max_queue_depth,
                retry_after_ms: self.retry_after_ms,
            },
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultsFile {
    #[serde(default)]
    pub collector: CollectorSettings,
    #[serde(default)]
    pub sizes: SizeTable,
    /// Applied to every engine before its own entry.
    #[serde(default)]
    pub all_engines: FaultOverlay,
    #[serde(default)]
    pub engines: BTreeMap<String, FaultOverlay>,
}

impl FaultsFile {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("faults file: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("faults file serializes")
    }

    /// The fault policy an engine of `design` runs under.
    pub fn policy_for(&self, profile: &EngineProfile, run_seed: u64) -> Result<FaultPolicy> {
        let mut policy =
            FaultPolicy::for_profile(profile, seed::derive(run_seed, &[b"engine", profile.engine_id.as_bytes()]));
        self.all_engines.apply(&mut policy);
        if let Some(overlay) = self.engines.get(&profile.engine_id) {
            overlay.apply(&mut policy);
        }
        policy.validate()?;
        Ok(policy)
    }

    /// Mock engines for every engine in `design`.
    pub fn build_fleet(&self, design: &ExperimentDesign, run_seed: u64) -> Result<EngineFleet> {
        for id in self.engines.keys() {
            if design.engine(id).is_none() {
                return Err(Error::Config(format!("faults name engine {id} outside the design")));
            }
        }
        let mut fleet = EngineFleet::new();
        for profile in &design.engines {
            let policy = self.policy_for(profile, run_seed)?;
            fleet.insert(MockEngine::new(profile.clone(), policy, &self.sizes));
        }
        Ok(fleet)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::{validate_design, SearchCategory};
    use crate::engines::size::SizeModel;

    const DESIGN: &str = r#"
collection_id = "ref"
engines = ["google", "yandex"]
queries = ["climate", "election"]
agents = 4
browsers = ["chrome", "firefox"]
start_epoch = "2021-03-15T12:00:30Z"
"#;

    #[test]
    fn design_defaults() {
        let d = DesignFile::parse(DESIGN).unwrap().into_design().unwrap();
        assert_eq!(d.cycle_seconds, 420);
        assert_eq!(d.regions, vec!["region-1"]);
        assert_eq!(d.browsers[1], BrowserProfile::firefox_like());
        assert_eq!(d.end_epoch, d.planned_end());
        assert!(validate_design(&d).is_empty(), "{:?}", validate_design(&d));
    }

    #[test]
    fn design_round_trip() {
        let mut d = DesignFile::parse(DESIGN).unwrap().into_design().unwrap();
        d.engines[1] = d.engines[1].clone().with_captcha(2, &[SearchCategory::Text]);
        let text = DesignFile::from_design(&d).to_toml();
        let back = DesignFile::parse(&text).unwrap().into_design().unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn unknown_engine_rejected() {
        let text = DESIGN.replace("\"yandex\"", "\"altavista\"");
        assert!(DesignFile::parse(&text).unwrap().into_design().is_err());
        assert!(DesignFile::parse("collection_id = 3").is_err());
    }

    #[test]
    fn faults_overlay() {
        let faults = FaultsFile::parse(
            r#"
[collector]
bandwidth_bytes_per_sec = 1000
sync = false

[sizes.default]
model = "deterministic"
bytes = 4096

[all_engines]
latency_ms = 100

[engines.yandex]
failure_rate = 1.0
failure_mode = "hang"

[engines.yandex.captcha]
threshold = 2
blocked_categories = ["text", "news"]
"#,
        )
        .unwrap();
        let d = DesignFile::parse(DESIGN).unwrap().into_design().unwrap();
        let p = faults.policy_for(&d.engines[1], 1).unwrap();
        assert_eq!(p.latency.base_ms, 100);
        assert_eq!(p.failure_mode, FailureMode::Hang);
        assert_eq!(p.captcha_policy.unwrap().threshold, 2);
        assert!(faults.policy_for(&d.engines[0], 1).unwrap().captcha_policy.is_none());
        assert_eq!(faults.sizes.model("google", SearchCategory::Text), SizeModel::Deterministic { bytes: 4096 });
        assert!(!faults.collector.options().sync);
        assert!(faults.build_fleet(&d, 1).is_ok());

        let mut bad = faults.clone();
        bad.engines.insert("bing".into(), FaultOverlay::default());
        assert!(bad.build_fleet(&d, 1).is_err());
        bad.engines.clear();
        bad.all_engines.failure_rate = Some(2.0);
        assert!(bad.build_fleet(&d, 1).is_err());
    }
}
