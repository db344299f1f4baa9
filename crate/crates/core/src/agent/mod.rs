//! The agent: a scripted browser that registers, downloads its lists and then
//! runs routines on a fixed cycle until its schedule or the experiment ends.

pub mod clients;
pub mod routine;
pub mod session;

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::design::{routine_plan, BrowserProfile, EngineProfile, ExperimentDesign};
use crate::engines::{EngineRequest, PageKind};
use crate::rotation::pair_at;
use crate::time::{next_trigger_time, ClockHandle, Timestamp};
use clients::{EngineClient, TrackerClient};
use routine::{
    execute_routine, fetch_with_retries, make_upload, upload_page, AgentIdentity, RoutineEnv,
    RoutineLimits, RoutineResult, UploadFields,
};
use session::{clean_browser, SessionState};

pub use routine::{CategoryOutcome, CategoryResult, SkipReason, TruncationReason};

pub const DEFAULT_DUMMY_URL: &str = "http://localhost:8000/";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentConfig {
    pub agent_id: String,
    pub region: String,
    pub browser_id: String,
    /// Index into the downloaded engine list of the first engine visited.
    pub start_offset: usize,
    pub token: String,
    pub dummy_url: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    ScheduleComplete,
    EndEpoch,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum AgentEvent {
    Registered { at: Timestamp },
    ListsDownloaded { at: Timestamp, engines: usize, queries: usize },
    Cleaned { at: Timestamp },
    Landed { at: Timestamp, engine_id: String, ok: bool },
    Triggered { at: Timestamp, routine_seq: u32, engine_id: String, query: String },
    RoutineFinished { at: Timestamp, routine_seq: u32 },
    ReadinessReset { at: Timestamp, routine_seq: u32 },
    Stopped { at: Timestamp, reason: StopReason },
    Aborted { at: Timestamp, reason: String },
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentLog {
    pub agent_id: String,
    pub events: Vec<AgentEvent>,
    pub routines: Vec<RoutineResult>,
    /// Pages acknowledged by the collector, including landing pages.
    pub uploads: u64,
    pub uploads_dropped: u64,
}

impl AgentLog {
    pub fn triggers(&self) -> Vec<Timestamp> {
        self.events
            .iter()
            .filter_map(|e| match e {
                AgentEvent::Triggered { at, .. } => Some(*at),
                _ => None,
            })
            .collect()
    }

    pub fn readiness_resets(&self) -> usize {
        self.events
            .iter()
            .filter(|e| matches!(e, AgentEvent::ReadinessReset { .. }))
            .count()
    }

    pub fn stop_reason(&self) -> Option<StopReason> {
        self.events.iter().find_map(|e| match e {
            AgentEvent::Stopped { reason, .. } => Some(*reason),
            _ => None,
        })
    }

    pub fn aborted(&self) -> Option<&str> {
        self.events.iter().find_map(|e| match e {
            AgentEvent::Aborted { reason, .. } => Some(reason.as_str()),
            _ => None,
        })
    }
}

fn resolve_profile(design: &ExperimentDesign, engine_id: &str) -> Option<EngineProfile> {
    design
        .engine(engine_id)
        .cloned()
        .or_else(|| EngineProfile::builtin(engine_id))
}

fn resolve_browser(design: &ExperimentDesign, browser_id: &str) -> Option<BrowserProfile> {
    design
        .browser(browser_id)
        .cloned()
        .or_else(|| BrowserProfile::builtin(browser_id))
}

/// Loads an engine's home page and accepts its consent banner if one is shown.
async fn land(
    env: &RoutineEnv<'_>,
    session: &mut SessionState,
    profile: &EngineProfile,
    design: &ExperimentDesign,
    deadline: Timestamp,
    log: &mut AgentLog,
) -> bool {
    let source = env.identity.source();
    let timeout = Duration::from_secs(design.page_load_timeout_seconds);
    let origin = profile
        .base_url
        .trim_start_matches("https://")
        .trim_start_matches("http://")
        .to_string();

    let home = fetch_with_retries(
        env.engines,
        env.clock,
        &EngineRequest::home(&profile.engine_id, &source),
        design.max_reloads,
        deadline,
        timeout,
    )
    .await;
    let Ok(page) = home.result else {
        return false;
    };
    session.visit(&format!("{}/", profile.base_url), &origin);
    let kind = page.kind;
    let fields = UploadFields {
        engine_id: &profile.engine_id,
        category: None,
        intended_query: "",
        effective_query: "",
        page_index: 0,
        kind,
        routine_seq: None,
    };
    let upload = make_upload(env, fields, page.payload);
    tally(log, upload_page(env, &upload).await);
    if kind == PageKind::Captcha {
        return false;
    }

    if profile.consent_banner && !session.consent_accepted {
        let consent = fetch_with_retries(
            env.engines,
            env.clock,
            &EngineRequest::consent(&profile.engine_id, &source),
            design.max_reloads,
            deadline,
            timeout,
        )
        .await;
        let Ok(page) = consent.result else {
            return false;
        };
        let kind = page.kind;
        let fields = UploadFields {
            engine_id: &profile.engine_id,
            category: None,
            intended_query: "",
            effective_query: "",
            page_index: 0,
            kind,
            routine_seq: None,
        };
        let upload = make_upload(env, fields, page.payload);
        tally(log, upload_page(env, &upload).await);
        if kind == PageKind::Consent {
            session.store("cookies", format!("{origin}#consent"));
            session.consent_accepted = true;
        }
    }
    true
}

fn tally(log: &mut AgentLog, ok: bool) {
    if ok {
        log.uploads += 1;
    } else {
        log.uploads_dropped += 1;
    }
}

/// Runs one agent from registration until it stops.
pub async fn run_agent(
    config: &AgentConfig,
    design: &ExperimentDesign,
    clock: &dyn ClockHandle,
    engines: &dyn EngineClient,
    tracker: &dyn TrackerClient,
) -> AgentLog {
    let mut log = AgentLog {
        agent_id: config.agent_id.clone(),
        ..AgentLog::default()
    };
    macro_rules! abort {
        ($($arg:tt)*) => {{
            log.events.push(AgentEvent::Aborted { at: clock.now(), reason: format!($($arg)*) });
            return log;
        }};
    }

    let credentials = match tracker.register(&config.token).await {
        Ok(c) => c,
        Err(e) => abort!("registration failed: {e}"),
    };
    log.events.push(AgentEvent::Registered { at: clock.now() });

    let (engine_ids, queries) = match (tracker.engine_list().await, tracker.query_list().await) {
        (Ok(e), Ok(q)) => (e, q),
        (Err(e), _) | (_, Err(e)) => abort!("list download failed: {e}"),
    };
    log.events.push(AgentEvent::ListsDownloaded {
        at: clock.now(),
        engines: engine_ids.len(),
        queries: queries.len(),
    });
    if engine_ids.is_empty() || queries.is_empty() {
        abort!("empty engine or query list");
    }
    if config.start_offset >= engine_ids.len() {
        abort!("start offset {} outside engine list", config.start_offset);
    }
    let mut profiles = Vec::with_capacity(engine_ids.len());
    for id in &engine_ids {
        match resolve_profile(design, id) {
            Some(p) => profiles.push(p),
            None => abort!("no profile for engine {id}"),
        }
    }
    let Some(browser) = resolve_browser(design, &config.browser_id) else {
        abort!("unknown browser {}", config.browser_id);
    };

    let identity = AgentIdentity {
        agent_id: config.agent_id.clone(),
        region: config.region.clone(),
        browser,
        agent_key: credentials.agent_key,
        dummy_url: config.dummy_url.clone(),
    };
    let env = RoutineEnv {
        identity: &identity,
        clock,
        engines,
        tracker,
    };

    let mut session = clean_browser(SessionState::new(), &identity.browser);
    log.events.push(AgentEvent::Cleaned { at: clock.now() });

    let stop_at = design.end_epoch.plus_secs(design.shutdown_grace_seconds as f64);
    let total = queries.len() * design.iterations as usize;
    let (e_len, q_len) = (profiles.len(), queries.len());

    let first = pair_at(e_len, q_len, config.start_offset, 0);
    let ok = land(&env, &mut session, &profiles[first.engine], design, stop_at, &mut log).await;
    log.events.push(AgentEvent::Landed {
        at: clock.now(),
        engine_id: profiles[first.engine].engine_id.clone(),
        ok,
    });
    let landed_at = clock.now();

    let mut previous: Option<Timestamp> = None;
    let mut k = 0usize;
    loop {
        let trigger = next_trigger_time(landed_at, previous, design.cycle_seconds);
        if trigger >= stop_at {
            log.events.push(AgentEvent::Stopped {
                at: clock.now(),
                reason: StopReason::EndEpoch,
            });
            break;
        }
        clock.sleep_until(trigger).await;
        previous = Some(trigger);

        let pair = pair_at(e_len, q_len, config.start_offset, k);
        let profile = &profiles[pair.engine];
        let query = &queries[pair.query];
        let seq = k as u32;
        log.events.push(AgentEvent::Triggered {
            at: clock.now(),
            routine_seq: seq,
            engine_id: profile.engine_id.clone(),
            query: query.clone(),
        });

        let plan = routine_plan(profile);
        let readiness_at = trigger.plus_secs(design.readiness_check_seconds as f64);
        let limits = RoutineLimits {
            max_reloads: design.max_reloads,
            page_load_timeout: Duration::from_secs(design.page_load_timeout_seconds),
            deadline: readiness_at,
            budget: Duration::from_secs(design.routine_budget_seconds),
        };
        let mut result = RoutineResult::new(seq, &profile.engine_id, query, &plan, clock.now());
        let finished = {
            let routine =
                execute_routine(&env, &mut session, profile, query, &plan, &limits, &mut result);
            tokio::select! {
                biased;
                _ = routine => true,
                _ = clock.sleep_until(readiness_at) => false,
            }
        };
        if finished {
            log.events.push(AgentEvent::RoutineFinished {
                at: clock.now(),
                routine_seq: seq,
            });
        } else {
            // The browser is reset: whatever the routine left behind is wiped.
            session = clean_browser(std::mem::take(&mut session), &identity.browser);
            result.aborted = true;
            result.ended_at = clock.now();
            result.over_budget = true;
            log.events.push(AgentEvent::ReadinessReset {
                at: clock.now(),
                routine_seq: seq,
            });
        }
        log.uploads += result.uploads as u64;
        log.uploads_dropped += result.uploads_dropped as u64;
        log.routines.push(result);

        k += 1;
        if k >= total {
            log.events.push(AgentEvent::Stopped {
                at: clock.now(),
                reason: StopReason::ScheduleComplete,
            });
            break;
        }

        // Move to the next engine, but never past the next trigger.
        let next_trigger = next_trigger_time(landed_at, previous, design.cycle_seconds);
        let next = pair_at(e_len, q_len, config.start_offset, k);
        let bound = next_trigger.min(stop_at);
        let landed = {
            let landing = land(&env, &mut session, &profiles[next.engine], design, bound, &mut log);
            tokio::select! {
                biased;
                ok = landing => ok,
                _ = clock.sleep_until(bound) => false,
            }
        };
        log.events.push(AgentEvent::Landed {
            at: clock.now(),
            engine_id: profiles[next.engine].engine_id.clone(),
            ok: landed,
        });
    }
    log
}
