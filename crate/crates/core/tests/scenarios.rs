mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serp_audit_core::agent::{AgentEvent, CategoryOutcome, StopReason};
use serp_audit_core::analytics::{analyze, AnalysisOptions};
use serp_audit_core::collector::{CollectionConfig, Collector, CollectorOptions};
use serp_audit_core::config::FaultOverlay;
use serp_audit_core::design::{ContinuousSnapshots, SearchCategory};
use serp_audit_core::engines::{FailureMode, PageKind};
use serp_audit_core::fleet::simulate;

#[test]
fn unknown_tokens_abort_every_agent() {
    let design = common::design("closed", &["google", "bing"], common::queries("q", 2), 2, 1);
    let faults = common::quiet_faults();
    let dir = tempfile::tempdir().unwrap();
    let config = CollectionConfig {
        collection_id: "closed".into(),
        engines: vec!["google".into(), "bing".into()],
        queries: design.queries.clone(),
        allowed_tokens: BTreeSet::new(),
    };
    let collector = Arc::new(Collector::open(dir.path(), config, CollectorOptions::default()).unwrap());
    let logs = simulate(&design, faults.build_fleet(&design, 1).unwrap(), collector.clone()).unwrap();
    assert_eq!(logs.len(), 2);
    for log in &logs {
        assert!(log.aborted().unwrap().contains("registration"), "{:?}", log.aborted());
        assert!(log.routines.is_empty());
    }
    assert_eq!(collector.status().records, 0);
}

#[test]
fn overloaded_collector_sheds_without_duplicates() {
    let design = common::reference_design();
    let mut faults = common::quiet_faults();
    faults.collector.bandwidth_bytes_per_sec = Some(20_000);
    faults.collector.max_queue_depth = Some(2);
    faults.collector.retry_after_ms = 500;
    let dir = tempfile::tempdir().unwrap();
    let (out, records) = common::run(&design, &faults, 2, dir.path());
    assert!(out.status.shed > 0);
    let mut seen = BTreeSet::new();
    for r in records.iter().filter(|r| r.kind == PageKind::Result) {
        let key = (r.agent_id.clone(), r.routine_seq, r.category, r.page_index);
        assert!(seen.insert(key.clone()), "duplicate upload {key:?}");
    }
}

#[test]
fn final_page_mode_uploads_one_snapshot() {
    let mut design = common::design("final", &["duckduckgo"], common::queries("q", 3), 1, 1);
    let faults = common::quiet_faults();
    let dir = tempfile::tempdir().unwrap();
    let (_, per_section) = common::run(&design, &faults, 5, &dir.path().join("sections"));
    design.engines[0].continuous_snapshots = ContinuousSnapshots::FinalPage;
    let (_, final_page) = common::run(&design, &faults, 5, &dir.path().join("final"));

    let totals = |records: &[serp_audit_core::record::PageRecord]| {
        let mut m: BTreeMap<(Option<u32>, Option<SearchCategory>), (u64, u32)> = BTreeMap::new();
        for r in records.iter().filter(|r| r.kind == PageKind::Result) {
            let e = m.entry((r.routine_seq, r.category)).or_default();
            e.0 += r.byte_size;
            e.1 += 1;
        }
        m
    };
    let sections = totals(&per_section);
    let finals = totals(&final_page);
    assert_eq!(sections.len(), 3 * 4);
    assert_eq!(sections.keys().collect::<Vec<_>>(), finals.keys().collect::<Vec<_>>());
    for (key, (bytes, count)) in &finals {
        assert_eq!(*count, 1, "{key:?}");
        assert_eq!(*bytes, sections[key].0, "{key:?}");
        assert!(sections[key].1 > 1);
    }

    let report = analyze(&final_page, &design, None, AnalysisOptions::default()).unwrap();
    assert!(report.coverage.iter().all(|c| c.coverage == 1.0));
    assert_eq!(report.sizes.exact_case_bytes, report.sizes.effective_bytes);
}

#[test]
fn slow_engine_runs_over_budget_without_reset() {
    let design = common::design("slow", &["google"], common::queries("q", 2), 1, 1);
    let mut faults = common::quiet_faults();
    faults.engines.insert(
        "google".into(),
        FaultOverlay {
            latency_ms: Some(15_000),
            ..Default::default()
        },
    );
    let dir = tempfile::tempdir().unwrap();
    let (out, _) = common::run(&design, &faults, 1, dir.path());
    let log = &out.logs[0];
    assert_eq!(log.routines.len(), 2);
    assert_eq!(log.readiness_resets(), 0);
    for r in &log.routines {
        assert!(r.over_budget);
        assert!(!r.aborted);
        assert!(r.per_category.values().all(|c| c.outcome == CategoryOutcome::Complete));
        let secs = r.ended_at.since(r.started_at).as_secs();
        assert!(secs > design.routine_budget_seconds && secs < design.readiness_check_seconds, "{secs}");
    }
}

#[test]
fn hanging_landing_is_bounded_by_first_trigger() {
    let mut design = common::design("landing", &["yandex", "google"], common::queries("q", 2), 2, 1);
    design.end_epoch = design.end_epoch.plus_secs(600.0);
    let mut faults = common::quiet_faults();
    faults.engines.insert(
        "yandex".into(),
        FaultOverlay {
            failure_rate: Some(1.0),
            failure_mode: Some(FailureMode::Hang),
            ..Default::default()
        },
    );
    let dir = tempfile::tempdir().unwrap();
    let (out, _) = common::run(&design, &faults, 1, dir.path());
    let log = out.logs.iter().find(|l| l.agent_id == "agent-000").unwrap();
    let landed = log
        .events
        .iter()
        .find_map(|e| match e {
            AgentEvent::Landed { at, ok, .. } => Some((*at, *ok)),
            _ => None,
        })
        .unwrap();
    assert!(!landed.1);
    let triggers = log.triggers();
    assert!(triggers[0].is_minute_boundary());
    assert!(landed.0 < triggers[0]);
    // The google routine after the failed landing still completes.
    let google = log.routines.iter().find(|r| r.engine_id == "google").unwrap();
    assert!(google.per_category.values().all(|c| c.outcome == CategoryOutcome::Complete));
    assert_eq!(log.stop_reason(), Some(StopReason::ScheduleComplete));
}

#[test]
fn early_end_stops_agents() {
    let mut design = common::design("early", &["google", "bing"], common::queries("q", 4), 2, 1);
    let first = design.start_epoch.next_minute_boundary();
    design.end_epoch = first.plus_secs(1.5 * design.cycle_seconds as f64);
    let dir = tempfile::tempdir().unwrap();
    let (out, _) = common::run(&design, &common::quiet_faults(), 1, dir.path());
    for log in &out.logs {
        assert_eq!(log.routines.len(), 2, "{}", log.agent_id);
        assert_eq!(log.stop_reason(), Some(StopReason::EndEpoch));
    }
}
