//! The combined analysis report and its text rendering.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::bootstrap::DEFAULT_RESAMPLES;
use super::{
    class_bytes, classify, coverage, estimate_size, section_stats, sections, sizes, CoverageCell,
    EstimateMode, SectionStats, SizeReport,
};
use crate::design::ExperimentDesign;
use crate::error::{Error, Result};
use crate::record::{PageClass, PageRecord};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnalysisOptions {
    pub resamples: usize,
    pub seed: u64,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        AnalysisOptions {
            resamples: DEFAULT_RESAMPLES,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub collection_id: String,
    pub records: u64,
    pub class_bytes: BTreeMap<PageClass, u64>,
    pub coverage: Vec<CoverageCell>,
    pub section_stats: Vec<SectionStats>,
    pub section_stats_omitted: Vec<String>,
    pub sizes: SizeReport,
}

/// Runs every metric on `records`. `holdout` supplies records from another
/// collection, with its own design, for the out-of-sample estimate.
pub fn analyze(
    records: &[PageRecord],
    design: &ExperimentDesign,
    holdout: Option<(&[PageRecord], &ExperimentDesign)>,
    options: AnalysisOptions,
) -> Result<AnalysisReport> {
    let classified = classify(records, design);
    let cells = coverage(&classified, design)?;
    let own_sections = sections(&classified, design);
    let stats = section_stats(&own_sections, design, options.resamples, options.seed);
    let mut size = sizes(&classified, design);

    let (in_sample, missing) = estimate_size(&own_sections, design, EstimateMode::InSample)?;
    size.in_sample_estimate = Some(in_sample);
    if !missing.is_empty() {
        size.notes
            .push(format!("in-sample estimate lacks exact cases for {}", missing.join(", ")));
    }
    match holdout {
        None => size
            .notes
            .push("out-of-sample estimate unavailable: no held-out collection".into()),
        Some((held_records, held_design)) => {
            let held = classify(held_records, held_design);
            let held_sections = sections(&held, held_design);
            match estimate_size(&held_sections, design, EstimateMode::OutOfSample) {
                Ok((estimate, missing)) => {
                    size.out_of_sample_estimate = Some(estimate);
                    if !missing.is_empty() {
                        size.notes.push(format!(
                            "out-of-sample estimate lacks held-out exact cases for {}",
                            missing.join(", ")
                        ));
                    }
                }
                Err(Error::NoDisjointData) => size.notes.push(
                    "out-of-sample estimate unavailable: held-out collection shares every query".into(),
                ),
                Err(e) => return Err(e),
            }
        }
    }

    Ok(AnalysisReport {
        collection_id: design.collection_id.clone(),
        records: records.len() as u64,
        class_bytes: class_bytes(&classified),
        coverage: cells,
        section_stats: stats.stats,
        section_stats_omitted: stats.omitted,
        sizes: size,
    })
}

fn mb(bytes: f64) -> String {
    format!("{:.3}", bytes / 1_048_576.0)
}

impl AnalysisReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Plain-text tables: coverage grid, section sizes, size rows.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "collection {} ({} records)", self.collection_id, self.records);

        let _ = writeln!(out, "\ncoverage");
        let _ = writeln!(
            out,
            "{:<14} {:<12} {:<8} {:>9} {:>8} {:>8}",
            "browser", "engine", "category", "succeeded", "assigned", "coverage"
        );
        for c in &self.coverage {
            let _ = writeln!(
                out,
                "{:<14} {:<12} {:<8} {:>9} {:>8} {:>8.3}",
                c.condition.browser_id,
                c.condition.engine_id,
                c.condition.category.as_str(),
                c.succeeded,
                c.assigned,
                c.coverage
            );
        }

        let _ = writeln!(out, "\nsection size (MB, 99% bootstrap interval)");
        let _ = writeln!(
            out,
            "{:<12} {:<8} {:>6} {:>10} {:>10} {:>10}",
            "engine", "category", "n", "mean", "low", "high"
        );
        for s in &self.section_stats {
            let _ = writeln!(
                out,
                "{:<12} {:<8} {:>6} {:>10} {:>10} {:>10}",
                s.engine_id,
                s.category.as_str(),
                s.n,
                mb(s.mean_bytes),
                mb(s.ci_low),
                mb(s.ci_high)
            );
        }
        for pair in &self.section_stats_omitted {
            let _ = writeln!(out, "  omitted {pair}: no exact-case sections");
        }

        let _ = writeln!(out, "\nsize (bytes)");
        let row = |out: &mut String, name: &str, v: Option<u64>| {
            let value = v.map_or_else(|| "unavailable".to_string(), |b| b.to_string());
            let _ = writeln!(out, "{name:<24} {value:>16}");
        };
        row(&mut out, "full", Some(self.sizes.full_bytes));
        row(&mut out, "effective", Some(self.sizes.effective_bytes));
        row(&mut out, "exact cases", Some(self.sizes.exact_case_bytes));
        row(&mut out, "in-sample estimate", self.sizes.in_sample_estimate);
        row(&mut out, "out-of-sample estimate", self.sizes.out_of_sample_estimate);
        for note in &self.sizes.notes {
            let _ = writeln!(out, "  note: {note}");
        }

        let _ = writeln!(out, "\nbytes by page class");
        for (class, bytes) in &self.class_bytes {
            let _ = writeln!(out, "{:<24} {bytes:>16}", class.as_str());
        }
        out
    }
}
