//! One search routine: query every category of an engine, upload each visited
//! page, then clean up on the dummy page.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::clients::{EngineClient, FetchError, TrackError, TrackerClient};
use super::session::{clean_browser, SessionState};
use crate::design::{BrowserProfile, EngineProfile, NavigationMode, Quirk, SearchCategory};
use crate::design::ContinuousSnapshots;
use crate::engines::payload::{self, PageSpec};
use crate::engines::{EnginePage, EngineRequest, PageKind, SourceIdentity, AUX_PAGE_BYTES};
use crate::record::PageUpload;
use crate::time::{ClockHandle, Timestamp};

/// Pause after reaching the bottom of a page with [`Quirk::WaitAfterScroll`].
pub const SCROLL_WAIT: Duration = Duration::from_secs(2);
/// Upload attempts before a page is given up.
pub const UPLOAD_ATTEMPTS: u32 = 5;
const UPLOAD_RETRY_PAUSE: Duration = Duration::from_secs(1);

/// Who the agent is, as seen by engines and the collector.
#[derive(Clone, Debug)]
pub struct AgentIdentity {
    pub agent_id: String,
    pub region: String,
    pub browser: BrowserProfile,
    pub agent_key: String,
    pub dummy_url: String,
}

impl AgentIdentity {
    pub fn source(&self) -> SourceIdentity {
        SourceIdentity::new(&self.region, &self.agent_id)
    }
}

/// Everything a routine talks to.
pub struct RoutineEnv<'a> {
    pub identity: &'a AgentIdentity,
    pub clock: &'a dyn ClockHandle,
    pub engines: &'a dyn EngineClient,
    pub tracker: &'a dyn TrackerClient,
}

#[derive(Clone, Copy, Debug)]
pub struct RoutineLimits {
    pub max_reloads: u32,
    pub page_load_timeout: Duration,
    /// No fetch attempt starts at or after this instant.
    pub deadline: Timestamp,
    /// Target routine length.
    pub budget: Duration,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TruncationReason {
    Network,
    Timeout,
    Deadline,
}

impl From<&FetchError> for TruncationReason {
    fn from(e: &FetchError) -> Self {
        match e {
            FetchError::Transport(_) => TruncationReason::Network,
            FetchError::Timeout => TruncationReason::Timeout,
            FetchError::Deadline => TruncationReason::Deadline,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkipReason {
    Captcha,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "outcome", content = "reason")]
pub enum CategoryOutcome {
    Complete,
    Truncated(TruncationReason),
    Skipped(SkipReason),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryResult {
    pub snapshots_uploaded: u32,
    pub outcome: CategoryOutcome,
    /// Requests sent to the engine for this category.
    pub requests: u32,
    /// Most attempts spent on a single page or section.
    pub max_attempts_per_fetch: u32,
}

impl CategoryResult {
    /// State of a category that has not finished; an interrupted routine keeps it.
    fn unfinished() -> Self {
        CategoryResult {
            snapshots_uploaded: 0,
            outcome: CategoryOutcome::Truncated(TruncationReason::Deadline),
            requests: 0,
            max_attempts_per_fetch: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoutineResult {
    pub routine_seq: u32,
    pub engine_id: String,
    pub query: String,
    pub per_category: BTreeMap<SearchCategory, CategoryResult>,
    pub started_at: Timestamp,
    pub ended_at: Timestamp,
    /// Cut short by the readiness check.
    pub aborted: bool,
    pub over_budget: bool,
    pub uploads: u32,
    pub uploads_dropped: u32,
}

impl RoutineResult {
    pub fn new(
        routine_seq: u32,
        engine_id: &str,
        query: &str,
        plan: &[(SearchCategory, NavigationMode)],
        started_at: Timestamp,
    ) -> Self {
        RoutineResult {
            routine_seq,
            engine_id: engine_id.to_string(),
            query: query.to_string(),
            per_category: plan
                .iter()
                .map(|(c, _)| (*c, CategoryResult::unfinished()))
                .collect(),
            started_at,
            ended_at: started_at,
            aborted: false,
            over_budget: false,
            uploads: 0,
            uploads_dropped: 0,
        }
    }

    pub fn outcome(&self, category: SearchCategory) -> Option<CategoryOutcome> {
        self.per_category.get(&category).map(|c| c.outcome)
    }
}

/// Result of [`fetch_with_retries`], with the number of requests it sent.
#[derive(Debug)]
pub struct FetchOutcome {
    pub result: Result<EnginePage, FetchError>,
    pub attempts: u32,
}

/// Fetches a page, reloading after failures or slow loads.
///
/// Sends at most `max_reloads` requests and starts none once `deadline` has
/// passed. An attempt in flight at the deadline is not interrupted.
pub async fn fetch_with_retries(
    engines: &dyn EngineClient,
    clock: &dyn ClockHandle,
    request: &EngineRequest,
    max_reloads: u32,
    deadline: Timestamp,
    page_load_timeout: Duration,
) -> FetchOutcome {
    let mut attempts = 0;
    let mut last = FetchError::Deadline;
    while attempts < max_reloads {
        if clock.now() >= deadline {
            return FetchOutcome {
                result: Err(FetchError::Deadline),
                attempts,
            };
        }
        attempts += 1;
        let res = tokio::select! {
            biased;
            r = engines.fetch(request) => r,
            _ = clock.sleep(page_load_timeout) => Err(FetchError::Timeout),
        };
        match res {
            Ok(page) => {
                return FetchOutcome {
                    result: Ok(page),
                    attempts,
                }
            }
            Err(e) => last = e,
        }
    }
    FetchOutcome {
        result: Err(last),
        attempts,
    }
}

/// Uploads a page, waiting out "retry later" answers. Returns whether it was acknowledged.
pub(crate) async fn upload_page(env: &RoutineEnv<'_>, upload: &PageUpload) -> bool {
    for _ in 0..UPLOAD_ATTEMPTS {
        match env.tracker.track(upload).await {
            Ok(_) => return true,
            Err(TrackError::RetryLater { retry_after_ms }) => {
                env.clock.sleep(Duration::from_millis(retry_after_ms)).await
            }
            Err(TrackError::Unavailable(_)) => env.clock.sleep(UPLOAD_RETRY_PAUSE).await,
            Err(TrackError::Rejected(_)) => return false,
        }
    }
    false
}

pub(crate) struct UploadFields<'a> {
    pub engine_id: &'a str,
    pub category: Option<SearchCategory>,
    pub intended_query: &'a str,
    pub effective_query: &'a str,
    pub page_index: u32,
    pub kind: PageKind,
    pub routine_seq: Option<u32>,
}

pub(crate) fn make_upload(env: &RoutineEnv<'_>, f: UploadFields<'_>, payload: Vec<u8>) -> PageUpload {
    PageUpload {
        token: env.identity.agent_key.clone(),
        agent_id: env.identity.agent_id.clone(),
        region: env.identity.region.clone(),
        browser_id: env.identity.browser.browser_id.clone(),
        timestamp: env.clock.now(),
        engine_id: f.engine_id.to_string(),
        category: f.category,
        intended_query: f.intended_query.to_string(),
        effective_query: f.effective_query.to_string(),
        page_index: f.page_index,
        kind: f.kind,
        routine_seq: f.routine_seq,
        payload,
    }
}

fn search_url(profile: &EngineProfile, category: SearchCategory, query: &str, index: u32) -> String {
    let q: String = url::form_urlencoded::byte_serialize(query.as_bytes()).collect();
    format!("{}/search?c={category}&q={q}&p={index}", profile.base_url)
}

fn origin(profile: &EngineProfile) -> String {
    profile
        .base_url
        .trim_start_matches("https://")
        .trim_start_matches("http://")
        .to_string()
}

/// Searches every planned category for one engine and query, then visits the dummy page.
///
/// `result` is updated as the routine progresses so a caller that abandons
/// the future still sees what was done.
#[allow(clippy::too_many_arguments)]
pub async fn execute_routine(
    env: &RoutineEnv<'_>,
    session: &mut SessionState,
    profile: &EngineProfile,
    query: &str,
    plan: &[(SearchCategory, NavigationMode)],
    limits: &RoutineLimits,
    result: &mut RoutineResult,
) {
    let source = env.identity.source();
    let seq = result.routine_seq;
    let mut skipped: BTreeSet<SearchCategory> = BTreeSet::new();
    let final_page_only = profile.continuous_snapshots == ContinuousSnapshots::FinalPage;

    for (category, mode) in plan {
        let category = *category;
        if skipped.contains(&category) {
            let entry = result.per_category.get_mut(&category).expect("plan category");
            entry.outcome = CategoryOutcome::Skipped(SkipReason::Captcha);
            continue;
        }
        let accumulate = final_page_only && mode.is_continuous();
        let mut accumulated: Vec<u8> = Vec::new();
        let mut last_effective = String::new();
        let mut last_index = 0;
        let mut outcome = CategoryOutcome::Complete;

        for index in 1..=mode.units() {
            let request = EngineRequest::search(&profile.engine_id, category, query, index, &source);
            let fetched = fetch_with_retries(
                env.engines,
                env.clock,
                &request,
                limits.max_reloads,
                limits.deadline,
                limits.page_load_timeout,
            )
            .await;
            {
                let entry = result.per_category.get_mut(&category).expect("plan category");
                entry.requests += fetched.attempts;
                entry.max_attempts_per_fetch = entry.max_attempts_per_fetch.max(fetched.attempts);
            }
            let page = match fetched.result {
                Ok(p) => p,
                Err(e) => {
                    outcome = CategoryOutcome::Truncated((&e).into());
                    break;
                }
            };
            let url = search_url(profile, category, query, index);
            session.visit(&url, &origin(profile));

            if page.kind == PageKind::Captcha {
                let upload = make_upload(
                    env,
                    UploadFields {
                        engine_id: &profile.engine_id,
                        category: Some(category),
                        intended_query: query,
                        effective_query: &page.effective_query,
                        page_index: index,
                        kind: PageKind::Captcha,
                        routine_seq: Some(seq),
                    },
                    page.payload,
                );
                let ok = upload_page(env, &upload).await;
                result.uploads += ok as u32;
                result.uploads_dropped += !ok as u32;
                outcome = CategoryOutcome::Skipped(SkipReason::Captcha);
                // Jump past every category the engine blocks.
                match &profile.captcha_policy {
                    Some(policy) => skipped.extend(policy.blocked_categories.iter().copied()),
                    None => skipped.extend([SearchCategory::Text, SearchCategory::News]),
                }
                break;
            }

            for quirk in &mode.quirks {
                match quirk {
                    Quirk::WaitAfterScroll => env.clock.sleep(SCROLL_WAIT).await,
                    Quirk::PushStateUrl => session.current_url = format!("{url}#pushstate"),
                    Quirk::Redirect => {
                        session.current_url =
                            format!("https://video.{}.example/?q={index}", profile.engine_id)
                    }
                }
            }

            let has_next = page.has_next;
            if accumulate {
                accumulated.extend_from_slice(&page.payload);
                last_effective = page.effective_query;
                last_index = index;
            } else {
                let upload = make_upload(
                    env,
                    UploadFields {
                        engine_id: &profile.engine_id,
                        category: Some(category),
                        intended_query: query,
                        effective_query: &page.effective_query,
                        page_index: index,
                        kind: PageKind::Result,
                        routine_seq: Some(seq),
                    },
                    page.payload,
                );
                let ok = upload_page(env, &upload).await;
                result.uploads += ok as u32;
                result.uploads_dropped += !ok as u32;
                if ok {
                    result
                        .per_category
                        .get_mut(&category)
                        .expect("plan category")
                        .snapshots_uploaded += 1;
                }
            }
            if !has_next {
                break;
            }
        }

        if accumulate && !accumulated.is_empty() {
            let upload = make_upload(
                env,
                UploadFields {
                    engine_id: &profile.engine_id,
                    category: Some(category),
                    intended_query: query,
                    effective_query: &last_effective,
                    page_index: last_index,
                    kind: PageKind::Result,
                    routine_seq: Some(seq),
                },
                accumulated,
            );
            let ok = upload_page(env, &upload).await;
            result.uploads += ok as u32;
            result.uploads_dropped += !ok as u32;
            if ok {
                result
                    .per_category
                    .get_mut(&category)
                    .expect("plan category")
                    .snapshots_uploaded += 1;
            }
        }
        result.per_category.get_mut(&category).expect("plan category").outcome = outcome;
    }

    // The dummy page is served locally; cleaning happens there.
    let dummy = render_dummy(&env.identity.agent_id);
    session.visit(&env.identity.dummy_url, "localhost:8000");
    let upload = make_upload(
        env,
        UploadFields {
            engine_id: &profile.engine_id,
            category: None,
            intended_query: query,
            effective_query: "",
            page_index: 0,
            kind: PageKind::Dummy,
            routine_seq: Some(seq),
        },
        dummy,
    );
    let ok = upload_page(env, &upload).await;
    result.uploads += ok as u32;
    result.uploads_dropped += !ok as u32;
    *session = clean_browser(std::mem::take(session), &env.identity.browser);

    result.ended_at = env.clock.now();
    result.over_budget = result.ended_at.since(result.started_at) > limits.budget;
}

pub(crate) fn render_dummy(agent_id: &str) -> Vec<u8> {
    payload::render(&PageSpec {
        kind: PageKind::Dummy,
        engine: "localhost",
        category: None,
        query: agent_id,
        page_index: 0,
        terminal: false,
        target_bytes: AUX_PAGE_BYTES,
        seed: 0,
    })
}
