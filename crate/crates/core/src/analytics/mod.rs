//! Post-hoc metrics over a manifest snapshot: page classification, coverage,
//! dataset sizes, per-section statistics and size estimates.
//!
//! Every function here is pure: the same records and design always give the
//! same output.

pub mod bootstrap;
pub mod report;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::design::{expected_snapshots, ExperimentDesign, SearchCategory};
use crate::engines::PageKind;
use crate::error::{Error, Result};
use crate::fleet::{plan_fleet, planned_routines};
use crate::record::{PageClass, PageRecord};
use bootstrap::{bootstrap_mean_ci, DEFAULT_CONFIDENCE};

pub use report::{analyze, AnalysisOptions, AnalysisReport};

fn nfc(s: &str) -> String {
    s.nfc().collect()
}

/// Class of one record with respect to `design`.
pub fn classify_record(record: &PageRecord, design: &ExperimentDesign, queries: &BTreeSet<String>) -> PageClass {
    match record.kind {
        PageKind::Home => return PageClass::Home,
        PageKind::Consent => return PageClass::Consent,
        PageKind::Captcha => return PageClass::Captcha,
        PageKind::Dummy => return PageClass::Dummy,
        PageKind::Result => {}
    }
    if record.timestamp < design.start_epoch || record.timestamp > design.end_epoch {
        return PageClass::PostExperiment;
    }
    let intended = nfc(&record.intended_query);
    let in_design = design.engine(&record.engine_id).is_some_and(|e| {
        record.category.is_some_and(|c| e.per_category.contains_key(&c))
    }) && queries.contains(&intended);
    if !in_design || record.effective_query != intended {
        return PageClass::UnintendedQuery;
    }
    PageClass::EffectiveResult
}

/// Assigns a class to every record.
pub fn classify(records: &[PageRecord], design: &ExperimentDesign) -> Vec<PageRecord> {
    let queries: BTreeSet<String> = design.queries.iter().map(|q| nfc(q)).collect();
    records
        .iter()
        .map(|r| {
            let mut r = r.clone();
            r.classification = classify_record(&r, design, &queries);
            r
        })
        .collect()
}

/// Bytes per class; sums to the full size.
pub fn class_bytes(classified: &[PageRecord]) -> BTreeMap<PageClass, u64> {
    let mut out: BTreeMap<PageClass, u64> = PageClass::ASSIGNABLE.iter().map(|c| (*c, 0)).collect();
    for r in classified {
        *out.entry(r.classification).or_default() += r.byte_size;
    }
    out
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Condition {
    pub browser_id: String,
    pub engine_id: String,
    pub category: SearchCategory,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverageCell {
    pub condition: Condition,
    pub succeeded: u32,
    pub assigned: u32,
    pub coverage: f64,
}

/// Share of the agents assigned to each (browser, engine, category) that
/// collected at least one effective result page. Categories an engine lacks
/// have no cell.
pub fn coverage(classified: &[PageRecord], design: &ExperimentDesign) -> Result<Vec<CoverageCell>> {
    let plan = plan_fleet(design);
    let mut assigned: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for a in &plan {
        assigned.entry(a.browser_id.as_str()).or_default().insert(a.agent_id.as_str());
    }
    let mut succeeded: BTreeMap<Condition, BTreeSet<&str>> = BTreeMap::new();
    for r in classified {
        if r.classification != PageClass::EffectiveResult {
            continue;
        }
        let Some(category) = r.category else { continue };
        let member = assigned
            .get(r.browser_id.as_str())
            .is_some_and(|agents| agents.contains(r.agent_id.as_str()));
        if !member {
            continue;
        }
        succeeded
            .entry(Condition {
                browser_id: r.browser_id.clone(),
                engine_id: r.engine_id.clone(),
                category,
            })
            .or_default()
            .insert(r.agent_id.as_str());
    }

    let mut cells = Vec::new();
    for browser in &design.browsers {
        let n = assigned.get(browser.browser_id.as_str()).map_or(0, |s| s.len()) as u32;
        for engine in &design.engines {
            for category in SearchCategory::ALL {
                if !engine.per_category.contains_key(&category) {
                    continue;
                }
                let condition = Condition {
                    browser_id: browser.browser_id.clone(),
                    engine_id: engine.engine_id.clone(),
                    category,
                };
                if n == 0 {
                    return Err(Error::DesignInconsistency(format!(
                        "no agents assigned to browser {}",
                        browser.browser_id
                    )));
                }
                let s = succeeded.get(&condition).map_or(0, |s| s.len()) as u32;
                cells.push(CoverageCell {
                    condition,
                    succeeded: s,
                    assigned: n,
                    coverage: s as f64 / n as f64,
                });
            }
        }
    }
    Ok(cells)
}

/// One category of one routine: the unit snapshot counts are checked against.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SectionKey {
    pub agent_id: String,
    pub engine_id: String,
    pub category: SearchCategory,
    pub query: String,
    pub routine_seq: Option<u32>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Section {
    pub key: SectionKey,
    pub snapshots: u32,
    pub bytes: u64,
    pub exact: bool,
}

/// Groups effective results into sections and marks those whose snapshot count
/// is one the engine's plan expects.
pub fn sections(classified: &[PageRecord], design: &ExperimentDesign) -> Vec<Section> {
    let mut groups: BTreeMap<SectionKey, (u32, u64)> = BTreeMap::new();
    for r in classified {
        if r.classification != PageClass::EffectiveResult {
            continue;
        }
        let Some(category) = r.category else { continue };
        let entry = groups
            .entry(SectionKey {
                agent_id: r.agent_id.clone(),
                engine_id: r.engine_id.clone(),
                category,
                query: nfc(&r.intended_query),
                routine_seq: r.routine_seq,
            })
            .or_default();
        entry.0 += 1;
        entry.1 += r.byte_size;
    }
    groups
        .into_iter()
        .map(|(key, (snapshots, bytes))| {
            let exact = design
                .engine(&key.engine_id)
                .and_then(|p| expected_snapshots(p, key.category).ok())
                .is_some_and(|set| set.contains(&snapshots));
            Section {
                key,
                snapshots,
                bytes,
                exact,
            }
        })
        .collect()
}

/// Size metrics of a classified collection; the estimates are filled in by the caller.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SizeReport {
    pub full_bytes: u64,
    pub effective_bytes: u64,
    pub exact_case_bytes: u64,
    pub in_sample_estimate: Option<u64>,
    pub out_of_sample_estimate: Option<u64>,
    /// Why an estimate is missing.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

/// The first three size rows; estimates are left empty.
pub fn sizes(classified: &[PageRecord], design: &ExperimentDesign) -> SizeReport {
    let full_bytes = classified.iter().map(|r| r.byte_size).sum();
    let effective_bytes = classified
        .iter()
        .filter(|r| r.classification == PageClass::EffectiveResult)
        .map(|r| r.byte_size)
        .sum();
    let exact_case_bytes = sections(classified, design)
        .iter()
        .filter(|s| s.exact)
        .map(|s| s.bytes)
        .sum();
    SizeReport {
        full_bytes,
        effective_bytes,
        exact_case_bytes,
        in_sample_estimate: None,
        out_of_sample_estimate: None,
        notes: Vec::new(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SectionStats {
    pub engine_id: String,
    pub category: SearchCategory,
    pub mean_bytes: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Exact-case sections averaged.
    pub n: u64,
    /// Byte total of those sections; `mean_bytes` is `total_bytes / n`.
    pub total_bytes: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SectionStatsReport {
    pub stats: Vec<SectionStats>,
    /// Engine/category pairs of the design with no exact-case section.
    pub omitted: Vec<String>,
}

/// Mean exact-case section size per engine and category, with a seeded
/// percentile bootstrap interval.
pub fn section_stats(
    sections: &[Section],
    design: &ExperimentDesign,
    resamples: usize,
    seed: u64,
) -> SectionStatsReport {
    let mut by_pair: BTreeMap<(String, SearchCategory), Vec<u64>> = BTreeMap::new();
    for s in sections.iter().filter(|s| s.exact) {
        by_pair
            .entry((s.key.engine_id.clone(), s.key.category))
            .or_default()
            .push(s.bytes);
    }
    let mut stats = Vec::new();
    let mut omitted = Vec::new();
    for engine in &design.engines {
        for category in SearchCategory::ALL {
            if !engine.per_category.contains_key(&category) {
                continue;
            }
            let Some(values) = by_pair.get(&(engine.engine_id.clone(), category)) else {
                omitted.push(format!("{}/{category}", engine.engine_id));
                continue;
            };
            let as_f64: Vec<f64> = values.iter().map(|&v| v as f64).collect();
            let total: u64 = values.iter().sum();
            let mean = total as f64 / values.len() as f64;
            let pair_seed = crate::seed::derive(seed, &[engine.engine_id.as_bytes(), category.as_str().as_bytes()]);
            let ci = bootstrap_mean_ci(&as_f64, resamples, DEFAULT_CONFIDENCE, pair_seed)
                .expect("non-empty sample");
            stats.push(SectionStats {
                engine_id: engine.engine_id.clone(),
                category,
                mean_bytes: mean,
                ci_low: ci.low.min(mean),
                ci_high: ci.high.max(mean),
                n: values.len() as u64,
                total_bytes: total,
            });
        }
    }
    SectionStatsReport { stats, omitted }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimateMode {
    InSample,
    OutOfSample,
}

/// Planned number of sections per engine/category: one per scheduled routine.
pub fn planned_sections(design: &ExperimentDesign) -> BTreeMap<(String, SearchCategory), u64> {
    let routines = planned_routines(design);
    let mut out = BTreeMap::new();
    for engine in &design.engines {
        for category in engine.per_category.keys() {
            out.insert((engine.engine_id.clone(), *category), routines[&engine.engine_id]);
        }
    }
    out
}

/// Size the design would have had if every planned section were collected at
/// its mean size: the sum over engine/category of mean x planned sections.
///
/// `source` holds the sections the means come from. In-sample uses this
/// collection's own exact cases; out-of-sample keeps only sections whose query
/// is not in `design` and fails with [`Error::NoDisjointData`] when none remain.
/// Means are applied as `total * planned / n`, rounded to the nearest byte,
/// so zero-variance inputs give exact results.
pub fn estimate_size(source: &[Section], design: &ExperimentDesign, mode: EstimateMode) -> Result<(u64, Vec<String>)> {
    let own: BTreeSet<String> = design.queries.iter().map(|q| nfc(q)).collect();
    let mut totals: BTreeMap<(String, SearchCategory), (u128, u128)> = BTreeMap::new();
    for s in source.iter().filter(|s| s.exact) {
        if mode == EstimateMode::OutOfSample && own.contains(&s.key.query) {
            continue;
        }
        let e = totals
            .entry((s.key.engine_id.clone(), s.key.category))
            .or_default();
        e.0 += s.bytes as u128;
        e.1 += 1;
    }
    if mode == EstimateMode::OutOfSample && totals.is_empty() {
        return Err(Error::NoDisjointData);
    }
    let mut estimate: u128 = 0;
    let mut missing = Vec::new();
    for ((engine, category), planned) in planned_sections(design) {
        match totals.get(&(engine.clone(), category)) {
            Some(&(sum, n)) => estimate += (2 * sum * planned as u128 + n) / (2 * n),
            None => missing.push(format!("{engine}/{category}")),
        }
    }
    Ok((estimate as u64, missing))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::EngineProfile;
    use crate::time::Timestamp;

    fn design() -> ExperimentDesign {
        let mut d = ExperimentDesign::new(
            "c",
            vec![EngineProfile::google(), EngineProfile::baidu()],
            vec!["manifestação".into(), "vote".into()],
            2,
            Timestamp::from_secs(1_600_000_000),
        );
        d.end_epoch = Timestamp::from_secs(1_600_010_000);
        d
    }

    fn rec(kind: PageKind, engine: &str, cat: Option<SearchCategory>, q: &str, eff: &str, t: i64, bytes: u64) -> PageRecord {
        PageRecord {
            token: "k".into(),
            agent_id: "agent-000".into(),
            region: "region-1".into(),
            browser_id: "chrome-like".into(),
            timestamp: Timestamp::from_secs(t),
            engine_id: engine.into(),
            category: cat,
            intended_query: q.into(),
            effective_query: eff.into(),
            page_index: 1,
            kind,
            routine_seq: Some(0),
            byte_size: bytes,
            storage_path: String::new(),
            ingest_sequence: 0,
            classification: PageClass::Unclassified,
        }
    }

    const T: i64 = 1_600_000_100;

    #[test]
    fn classification_rules() {
        let d = design();
        let text = Some(SearchCategory::Text);
        let cases = [
            (rec(PageKind::Result, "google", text, "vote", "vote", T, 1), PageClass::EffectiveResult),
            (rec(PageKind::Result, "google", text, "vote", "vote", 1_600_010_001, 1), PageClass::PostExperiment),
            (rec(PageKind::Result, "baidu", text, "manifestação", "manifesta0400o", T, 1), PageClass::UnintendedQuery),
            (rec(PageKind::Result, "bing", text, "vote", "vote", T, 1), PageClass::UnintendedQuery),
            (rec(PageKind::Result, "google", text, "other", "other", T, 1), PageClass::UnintendedQuery),
            (rec(PageKind::Home, "google", None, "", "", T, 1), PageClass::Home),
            (rec(PageKind::Dummy, "google", None, "vote", "", T, 1), PageClass::Dummy),
            (rec(PageKind::Captcha, "google", text, "vote", "vote", T, 1), PageClass::Captcha),
        ];
        let records: Vec<PageRecord> = cases.iter().map(|(r, _)| r.clone()).collect();
        let classified = classify(&records, &d);
        for ((_, want), got) in cases.iter().zip(&classified) {
            assert_eq!(got.classification, *want, "{got:?}");
        }
    }

    #[test]
    fn decomposed_intended_query_matches_after_normalization() {
        let d = design();
        // "manifestação" with combining cedilla and tilde.
        let decomposed = "manifestac\u{327}a\u{303}o";
        let r = rec(PageKind::Result, "google", Some(SearchCategory::Text), decomposed, "manifestação", T, 1);
        assert_eq!(classify(&[r], &d)[0].classification, PageClass::EffectiveResult);
        // The effective query is taken verbatim.
        let r = rec(PageKind::Result, "google", Some(SearchCategory::Text), "manifestação", decomposed, T, 1);
        assert_eq!(classify(&[r], &d)[0].classification, PageClass::UnintendedQuery);
    }

    #[test]
    fn truncated_section_not_exact() {
        let d = design();
        let records: Vec<PageRecord> = (1..=4)
            .map(|i| {
                let mut r = rec(PageKind::Result, "google", Some(SearchCategory::Text), "vote", "vote", T, 100);
                r.page_index = i;
                r
            })
            .collect();
        let classified = classify(&records, &d);
        let s = sizes(&classified, &d);
        assert_eq!((s.full_bytes, s.effective_bytes, s.exact_case_bytes), (400, 400, 0));
    }

    #[test]
    fn zero_coverage() {
        let d = design();
        let cells = coverage(&[], &d).unwrap();
        assert!(cells.iter().all(|c| c.coverage == 0.0 && c.assigned == 2));
        // google has 4 categories, baidu 4.
        assert_eq!(cells.len(), 8);
    }

    #[test]
    fn out_of_sample_needs_disjoint_queries() {
        let d = design();
        let records: Vec<PageRecord> = (1..=5)
            .map(|i| {
                let mut r = rec(PageKind::Result, "google", Some(SearchCategory::Text), "vote", "vote", T, 100);
                r.page_index = i;
                r
            })
            .collect();
        let secs = sections(&classify(&records, &d), &d);
        assert!(matches!(
            estimate_size(&secs, &d, EstimateMode::OutOfSample),
            Err(Error::NoDisjointData)
        ));
        let (est, missing) = estimate_size(&secs, &d, EstimateMode::InSample).unwrap();
        // Two agents, two queries: each engine gets 2 routines.
        assert_eq!(est, 500 * 2);
        assert_eq!(missing.len(), 7);
    }
}
