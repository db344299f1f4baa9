//! Domain types for an experiment design and its engine and browser profiles.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::time::Timestamp;

/// Result section of a search engine. Routines always visit sections in
/// declaration order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchCategory {
    Text,
    News,
    Images,
    Videos,
}

impl SearchCategory {
    pub const ALL: [SearchCategory; 4] = [
        SearchCategory::Text,
        SearchCategory::News,
        SearchCategory::Images,
        SearchCategory::Videos,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SearchCategory::Text => "text",
            SearchCategory::News => "news",
            SearchCategory::Images => "images",
            SearchCategory::Videos => "videos",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.as_str() == s)
    }
}

impl fmt::Display for SearchCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quirk {
    /// Wait after reaching the bottom so late content (ads, navigation) loads.
    WaitAfterScroll,
    /// The URL bar changes through `history.pushState` instead of navigation.
    PushStateUrl,
    /// The category redirects to another host.
    Redirect,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum NavigationKind {
    /// Click through `pages` result pages.
    Paginated { pages: u32 },
    /// Scroll and load `sections` dynamically loaded chunks.
    Continuous { sections: u32 },
    /// Like `Continuous`, with a "load more" click in each scroll.
    ContinuousWithClick { sections: u32 },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NavigationMode {
    #[serde(flatten)]
    pub kind: NavigationKind,
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub quirks: BTreeSet<Quirk>,
}

impl NavigationMode {
    pub fn paginated(pages: u32) -> Self {
        NavigationMode {
            kind: NavigationKind::Paginated { pages },
            quirks: BTreeSet::new(),
        }
    }

    pub fn continuous(sections: u32) -> Self {
        NavigationMode {
            kind: NavigationKind::Continuous { sections },
            quirks: BTreeSet::new(),
        }
    }

    pub fn continuous_with_click(sections: u32) -> Self {
        NavigationMode {
            kind: NavigationKind::ContinuousWithClick { sections },
            quirks: BTreeSet::new(),
        }
    }

    pub fn with_quirk(mut self, quirk: Quirk) -> Self {
        self.quirks.insert(quirk);
        self
    }

    /// Number of pages or sections the routine fetches.
    pub fn units(&self) -> u32 {
        match self.kind {
            NavigationKind::Paginated { pages } => pages,
            NavigationKind::Continuous { sections }
            | NavigationKind::ContinuousWithClick { sections } => sections,
        }
    }

    pub fn is_continuous(&self) -> bool {
        !matches!(self.kind, NavigationKind::Paginated { .. })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaptchaPolicy {
    /// Requests a single source may send before blocked categories answer with captchas.
    pub threshold: u64,
    pub blocked_categories: BTreeSet<SearchCategory>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncodingPolicy {
    #[default]
    Faithful,
    /// Non-ASCII characters in the query are replaced by digit noise.
    LatinAccentCorrupting,
}

/// How continuous-scroll categories are recorded.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContinuousSnapshots {
    /// One upload per loaded section.
    #[default]
    PerSection,
    /// One upload of the fully loaded page after the last section.
    FinalPage,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EngineProfile {
    pub engine_id: String,
    pub base_url: String,
    pub per_category: BTreeMap<SearchCategory, NavigationMode>,
    pub expected_counts: BTreeMap<SearchCategory, BTreeSet<u32>>,
    #[serde(default)]
    pub consent_banner: bool,
    #[serde(default)]
    pub captcha_policy: Option<CaptchaPolicy>,
    #[serde(default)]
    pub autocorrect_map: BTreeMap<String, String>,
    #[serde(default)]
    pub encoding_policy: EncodingPolicy,
    #[serde(default)]
    pub continuous_snapshots: ContinuousSnapshots,
}

impl EngineProfile {
    fn builder(id: &str, base_url: &str) -> Self {
        EngineProfile {
            engine_id: id.to_string(),
            base_url: base_url.to_string(),
            per_category: BTreeMap::new(),
            expected_counts: BTreeMap::new(),
            consent_banner: false,
            captcha_policy: None,
            autocorrect_map: BTreeMap::new(),
            encoding_policy: EncodingPolicy::Faithful,
            continuous_snapshots: ContinuousSnapshots::PerSection,
        }
    }

    /// Adds a category whose expected snapshot count equals its unit count.
    fn category(mut self, category: SearchCategory, mode: NavigationMode) -> Self {
        self.expected_counts
            .insert(category, BTreeSet::from([mode.units()]));
        self.per_category.insert(category, mode);
        self
    }

    fn consent(mut self) -> Self {
        self.consent_banner = true;
        self
    }

    pub fn with_captcha(mut self, threshold: u64, blocked: &[SearchCategory]) -> Self {
        self.captcha_policy = Some(CaptchaPolicy {
            threshold,
            blocked_categories: blocked.iter().copied().collect(),
        });
        self
    }

    /// Largest acceptable snapshot count for a category.
    pub fn max_expected(&self, category: SearchCategory) -> Option<u32> {
        self.expected_counts
            .get(&category)
            .and_then(|s| s.iter().next_back().copied())
    }

    pub fn google() -> Self {
        use SearchCategory::*;
        Self::builder("google", "https://google.com")
            .consent()
            .category(Text, NavigationMode::paginated(5))
            .category(News, NavigationMode::paginated(5))
            .category(Images, NavigationMode::continuous(3))
            .category(Videos, NavigationMode::paginated(5))
    }

    pub fn bing() -> Self {
        use SearchCategory::*;
        let mut p = Self::builder("bing", "https://bing.com")
            .consent()
            .category(Text, NavigationMode::paginated(8))
            .category(News, NavigationMode::continuous(10))
            .category(Images, NavigationMode::continuous(10))
            .category(Videos, NavigationMode::continuous(14));
        // Bing text yields seven or eight result pages depending on the query.
        p.expected_counts.insert(Text, BTreeSet::from([7, 8]));
        p
    }

    pub fn duckduckgo() -> Self {
        use SearchCategory::*;
        Self::builder("duckduckgo", "https://duckduckgo.com")
            .category(Text, NavigationMode::continuous(3))
            .category(News, NavigationMode::continuous(3))
            .category(Images, NavigationMode::continuous(4))
            .category(Videos, NavigationMode::continuous(3))
    }

    pub fn yahoo() -> Self {
        use SearchCategory::*;
        Self::builder("yahoo", "https://search.yahoo.com")
            .consent()
            .category(Text, NavigationMode::paginated(5))
            .category(News, NavigationMode::paginated(5))
            .category(Images, NavigationMode::continuous_with_click(5))
            .category(Videos, NavigationMode::continuous_with_click(3))
    }

    /// Text and news are limited to the first page.
    pub fn yandex() -> Self {
        use SearchCategory::*;
        Self::builder("yandex", "https://yandex.ru")
            .consent()
            .category(Text, NavigationMode::paginated(1))
            .category(News, NavigationMode::paginated(1))
            .category(Images, NavigationMode::continuous(3))
            .category(Videos, NavigationMode::continuous_with_click(3))
    }

    pub fn baidu() -> Self {
        use SearchCategory::*;
        let mut p = Self::builder("baidu", "https://baidu.com")
            .category(Text, NavigationMode::paginated(5))
            .category(News, NavigationMode::paginated(5))
            .category(Images, NavigationMode::continuous(7))
            .category(Videos, NavigationMode::continuous(7));
        p.encoding_policy = EncodingPolicy::LatinAccentCorrupting;
        p
    }

    pub fn sogou() -> Self {
        use SearchCategory::*;
        Self::builder("sogou", "https://sogou.com")
            .category(Text, NavigationMode::paginated(5))
            .category(Images, NavigationMode::continuous(6))
            .category(
                Videos,
                NavigationMode::paginated(5).with_quirk(Quirk::PushStateUrl),
            )
    }

    pub fn so() -> Self {
        use SearchCategory::*;
        Self::builder("so", "https://so.com")
            .category(
                Text,
                NavigationMode::paginated(5).with_quirk(Quirk::WaitAfterScroll),
            )
            .category(Images, NavigationMode::continuous(10))
            .category(
                Videos,
                NavigationMode::paginated(5).with_quirk(Quirk::Redirect),
            )
    }

    /// Built-in profile by id.
    pub fn builtin(id: &str) -> Option<Self> {
        Some(match id {
            "google" => Self::google(),
            "bing" => Self::bing(),
            "duckduckgo" => Self::duckduckgo(),
            "yahoo" => Self::yahoo(),
            "yandex" => Self::yandex(),
            "baidu" => Self::baidu(),
            "sogou" => Self::sogou(),
            "so" => Self::so(),
            _ => return None,
        })
    }

    /// The six engines present in every reference collection.
    pub fn reference_fleet() -> Vec<Self> {
        vec![
            Self::baidu(),
            Self::bing(),
            Self::duckduckgo(),
            Self::google(),
            Self::yahoo(),
            Self::yandex(),
        ]
    }
}

pub const CHROME_CLEAN_LIST: [&str; 13] = [
    "appcache",
    "cache",
    "cacheStorage",
    "cookies",
    "fileSystems",
    "formData",
    "history",
    "indexedDB",
    "localStorage",
    "pluginData",
    "passwords",
    "serviceWorkers",
    "webSQL",
];

pub const FIREFOX_CLEAN_LIST: [&str; 8] = [
    "cache",
    "cookies",
    "formData",
    "history",
    "indexedDB",
    "localStorage",
    "pluginData",
    "passwords",
];

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BrowserProfile {
    pub browser_id: String,
    pub clean_data_types: Vec<String>,
}

impl BrowserProfile {
    pub fn chrome_like() -> Self {
        BrowserProfile {
            browser_id: "chrome-like".into(),
            clean_data_types: CHROME_CLEAN_LIST.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn firefox_like() -> Self {
        BrowserProfile {
            browser_id: "firefox-like".into(),
            clean_data_types: FIREFOX_CLEAN_LIST.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn builtin(id: &str) -> Option<Self> {
        match id {
            "chrome" | "chrome-like" => Some(Self::chrome_like()),
            "firefox" | "firefox-like" => Some(Self::firefox_like()),
            _ => None,
        }
    }

    fn matches_known_list(&self) -> bool {
        let list: Vec<&str> = self.clean_data_types.iter().map(String::as_str).collect();
        list == CHROME_CLEAN_LIST || list == FIREFOX_CLEAN_LIST
    }
}

pub const DEFAULT_CYCLE_SECONDS: u64 = 420;
pub const DEFAULT_ROUTINE_BUDGET_SECONDS: u64 = 240;
pub const DEFAULT_READINESS_CHECK_SECONDS: u64 = 375;
pub const DEFAULT_MAX_RELOADS: u32 = 5;
pub const DEFAULT_PAGE_LOAD_TIMEOUT_SECONDS: u64 = 30;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentDesign {
    pub collection_id: String,
    pub engines: Vec<EngineProfile>,
    pub queries: Vec<String>,
    pub agents: u32,
    pub regions: Vec<String>,
    pub browsers: Vec<BrowserProfile>,
    pub iterations: u32,
    pub cycle_seconds: u64,
    pub routine_budget_seconds: u64,
    pub readiness_check_seconds: u64,
    pub max_reloads: u32,
    /// How long a single page load may take before it is reloaded.
    pub page_load_timeout_seconds: u64,
    /// Agents keep running this long after `end_epoch` before they are stopped.
    pub shutdown_grace_seconds: u64,
    pub start_epoch: Timestamp,
    pub end_epoch: Timestamp,
}

impl ExperimentDesign {
    /// Design with default timing whose end leaves room for every scheduled routine.
    pub fn new(
        collection_id: impl Into<String>,
        engines: Vec<EngineProfile>,
        queries: Vec<String>,
        agents: u32,
        start_epoch: Timestamp,
    ) -> Self {
        let mut design = ExperimentDesign {
            collection_id: collection_id.into(),
            engines,
            queries,
            agents,
            regions: vec!["region-1".into()],
            browsers: vec![BrowserProfile::chrome_like()],
            iterations: 1,
            cycle_seconds: DEFAULT_CYCLE_SECONDS,
            routine_budget_seconds: DEFAULT_ROUTINE_BUDGET_SECONDS,
            readiness_check_seconds: DEFAULT_READINESS_CHECK_SECONDS,
            max_reloads: DEFAULT_MAX_RELOADS,
            page_load_timeout_seconds: DEFAULT_PAGE_LOAD_TIMEOUT_SECONDS,
            shutdown_grace_seconds: 0,
            start_epoch,
            end_epoch: start_epoch,
        };
        design.end_epoch = design.planned_end();
        design
    }

    pub fn engine(&self, engine_id: &str) -> Option<&EngineProfile> {
        self.engines.iter().find(|e| e.engine_id == engine_id)
    }

    pub fn engine_index(&self, engine_id: &str) -> Option<usize> {
        self.engines.iter().position(|e| e.engine_id == engine_id)
    }

    pub fn browser(&self, browser_id: &str) -> Option<&BrowserProfile> {
        self.browsers.iter().find(|b| b.browser_id == browser_id)
    }

    /// Number of routines each agent runs.
    pub fn routines_per_agent(&self) -> usize {
        self.queries.len() * self.iterations as usize
    }

    /// End of the last scheduled routine cycle for a fleet started at `start_epoch`.
    ///
    /// Agents land right after start, so the first trigger is the next minute
    /// boundary after `start_epoch`.
    pub fn planned_end(&self) -> Timestamp {
        let first = self.start_epoch.next_minute_boundary();
        Timestamp(first.0 + (self.routines_per_agent() as i64) * self.cycle_seconds as i64 * 1000)
    }
}

/// One reason a design is not runnable.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub field: String,
    pub reason: String,
}

impl Violation {
    fn new(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Violation {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.reason)
    }
}

fn validate_profile(profile: &EngineProfile, out: &mut Vec<Violation>) {
    let field = |name: &str| format!("engines[{}].{name}", profile.engine_id);
    for (category, mode) in &profile.per_category {
        if mode.units() == 0 {
            out.push(Violation::new(
                field("per_category"),
                format!("{category} must fetch at least one page or section"),
            ));
        }
        match profile.expected_counts.get(category) {
            Some(set) if !set.is_empty() => {
                if set.iter().any(|&c| c == 0 || c > mode.units()) {
                    out.push(Violation::new(
                        field("expected_counts"),
                        format!("{category} expects counts outside 1..={}", mode.units()),
                    ));
                }
            }
            _ => out.push(Violation::new(
                field("expected_counts"),
                format!("no expected snapshot count for {category}"),
            )),
        }
    }
    for category in profile.expected_counts.keys() {
        if !profile.per_category.contains_key(category) {
            out.push(Violation::new(
                field("expected_counts"),
                format!("{category} has expected counts but no navigation plan"),
            ));
        }
    }
    if let Some(policy) = &profile.captcha_policy {
        if policy
            .blocked_categories
            .iter()
            .any(|c| !matches!(c, SearchCategory::Text | SearchCategory::News))
        {
            out.push(Violation::new(
                field("captcha_policy"),
                "captchas may only block text and news",
            ));
        }
    }
}

/// Every invariant violation of `design`; an empty list means the design is valid.
pub fn validate_design(design: &ExperimentDesign) -> Vec<Violation> {
    let mut out = Vec::new();
    if design.collection_id.trim().is_empty() {
        out.push(Violation::new("collection_id", "empty collection id"));
    }
    if design.queries.is_empty() {
        out.push(Violation::new("queries", "empty query list"));
    }
    if design.engines.is_empty() {
        out.push(Violation::new("engines", "empty engine list"));
    }
    let mut seen = BTreeSet::new();
    for engine in &design.engines {
        if !seen.insert(engine.engine_id.as_str()) {
            out.push(Violation::new(
                "engines",
                format!("duplicate engine id {}", engine.engine_id),
            ));
        }
        validate_profile(engine, &mut out);
    }
    if design.regions.is_empty() {
        out.push(Violation::new("regions", "empty region list"));
    }
    if design.browsers.is_empty() {
        out.push(Violation::new("browsers", "empty browser list"));
    }
    for browser in &design.browsers {
        if !browser.matches_known_list() {
            out.push(Violation::new(
                format!("browsers[{}]", browser.browser_id),
                "clean_data_types must match the chrome-like or firefox-like list",
            ));
        }
    }
    let cells = design.regions.len().max(1) * design.browsers.len().max(1);
    let needed = design.engines.len() * cells;
    if (design.agents as usize) < needed {
        out.push(Violation::new(
            "agents",
            format!(
                "{} agents cannot cover {} starting engines in each of {} region x browser cells (need {needed})",
                design.agents,
                design.engines.len(),
                cells
            ),
        ));
    }
    if design.iterations == 0 {
        out.push(Violation::new("iterations", "at least one iteration required"));
    }
    if design.max_reloads == 0 {
        out.push(Violation::new("max_reloads", "at least one attempt required"));
    }
    if design.page_load_timeout_seconds == 0 {
        out.push(Violation::new(
            "page_load_timeout_seconds",
            "page load timeout must be positive",
        ));
    }
    if !(design.cycle_seconds > design.readiness_check_seconds
        && design.readiness_check_seconds > design.routine_budget_seconds)
    {
        out.push(Violation::new(
            "cycle_seconds",
            format!(
                "ordering cycle ({}) > readiness_check ({}) > routine_budget ({}) does not hold",
                design.cycle_seconds, design.readiness_check_seconds, design.routine_budget_seconds
            ),
        ));
    }
    if design.end_epoch <= design.start_epoch {
        out.push(Violation::new("end_epoch", "end_epoch must be after start_epoch"));
    }
    out
}

/// Categories and navigation modes in visiting order.
pub fn routine_plan(profile: &EngineProfile) -> Vec<(SearchCategory, NavigationMode)> {
    SearchCategory::ALL
        .into_iter()
        .filter_map(|c| profile.per_category.get(&c).map(|m| (c, m.clone())))
        .collect()
}

/// Acceptable snapshot counts for a category; a section is an exact case when
/// its count is in this set.
pub fn expected_snapshots(profile: &EngineProfile, category: SearchCategory) -> Result<BTreeSet<u32>> {
    if !profile.per_category.contains_key(&category) {
        return Err(Error::AbsentCategory {
            engine: profile.engine_id.clone(),
            category,
        });
    }
    let counts = profile
        .expected_counts
        .get(&category)
        .cloned()
        .unwrap_or_default();
    Ok(match profile.continuous_snapshots {
        ContinuousSnapshots::FinalPage if profile.per_category[&category].is_continuous() => {
            BTreeSet::from([1])
        }
        _ => counts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use SearchCategory::*;

    fn design() -> ExperimentDesign {
        let mut d = ExperimentDesign::new(
            "t",
            EngineProfile::reference_fleet(),
            vec!["a".into(), "b".into()],
            6,
            Timestamp::parse_rfc3339("2021-03-15T12:00:00Z").unwrap(),
        );
        d.agents = 6;
        d
    }

    #[test]
    fn default_timing_is_valid() {
        let d = design();
        assert_eq!(
            (d.cycle_seconds, d.readiness_check_seconds, d.routine_budget_seconds),
            (420, 375, 240)
        );
        assert_eq!(validate_design(&d), vec![]);
    }

    #[test]
    fn empty_queries_flagged() {
        let mut d = design();
        d.queries.clear();
        let v = validate_design(&d);
        assert!(v.iter().any(|v| v.field == "queries" && v.reason.contains("empty query list")));
    }

    #[test]
    fn readiness_after_cycle_flagged() {
        let mut d = design();
        d.readiness_check_seconds = 500;
        let v = validate_design(&d);
        assert_eq!(v.len(), 1);
        assert!(v[0].reason.contains("ordering"));
    }

    #[test]
    fn too_few_agents_flagged() {
        let mut d = design();
        d.agents = 5;
        assert!(validate_design(&d).iter().any(|v| v.field == "agents"));
        d.agents = 6;
        d.browsers.push(BrowserProfile::firefox_like());
        assert!(validate_design(&d).iter().any(|v| v.field == "agents"));
    }

    #[test]
    fn captcha_on_images_flagged() {
        let mut d = design();
        d.engines[5] = EngineProfile::yandex().with_captcha(2, &[Text, Images]);
        assert!(validate_design(&d)
            .iter()
            .any(|v| v.field.ends_with("captcha_policy")));
    }

    #[test]
    fn browser_lists_match_table() {
        assert_eq!(BrowserProfile::chrome_like().clean_data_types.len(), 13);
        assert_eq!(BrowserProfile::firefox_like().clean_data_types.len(), 8);
        let mut d = design();
        d.browsers[0].clean_data_types.pop();
        assert_eq!(validate_design(&d).len(), 1);
    }

    #[test]
    fn google_plan() {
        let plan = routine_plan(&EngineProfile::google());
        assert_eq!(
            plan,
            vec![
                (Text, NavigationMode::paginated(5)),
                (News, NavigationMode::paginated(5)),
                (Images, NavigationMode::continuous(3)),
                (Videos, NavigationMode::paginated(5)),
            ]
        );
    }

    #[test]
    fn sogou_plan_skips_news() {
        let plan = routine_plan(&EngineProfile::sogou());
        assert_eq!(
            plan.iter().map(|(c, _)| *c).collect::<Vec<_>>(),
            vec![Text, Images, Videos]
        );
        assert_eq!(routine_plan(&EngineProfile::so()).len(), 3);
    }

    #[test]
    fn empty_profile_has_empty_plan() {
        assert!(routine_plan(&EngineProfile::builder("x", "http://x")).is_empty());
    }

    #[test]
    fn expected_counts() {
        assert_eq!(
            expected_snapshots(&EngineProfile::bing(), Text).unwrap(),
            BTreeSet::from([7, 8])
        );
        assert_eq!(
            expected_snapshots(&EngineProfile::yandex(), Text).unwrap(),
            BTreeSet::from([1])
        );
        assert_eq!(
            expected_snapshots(&EngineProfile::google(), Images).unwrap(),
            BTreeSet::from([3])
        );
        assert!(matches!(
            expected_snapshots(&EngineProfile::sogou(), News),
            Err(Error::AbsentCategory { .. })
        ));
    }

    #[test]
    fn final_page_snapshots_expect_one() {
        let mut p = EngineProfile::google();
        p.continuous_snapshots = ContinuousSnapshots::FinalPage;
        assert_eq!(expected_snapshots(&p, Images).unwrap(), BTreeSet::from([1]));
        assert_eq!(expected_snapshots(&p, Text).unwrap(), BTreeSet::from([5]));
    }

    #[test]
    fn builtins_validate() {
        for id in ["google", "bing", "duckduckgo", "yahoo", "yandex", "baidu", "sogou", "so"] {
            let p = EngineProfile::builtin(id).unwrap();
            let mut v = Vec::new();
            validate_profile(&p, &mut v);
            assert!(v.is_empty(), "{id}: {v:?}");
        }
    }

    #[test]
    fn validation_is_pure() {
        let mut d = design();
        d.queries.clear();
        d.iterations = 0;
        let before = d.clone();
        let first = validate_design(&d);
        assert_eq!(first, validate_design(&d));
        assert_eq!(d, before);
    }
}
