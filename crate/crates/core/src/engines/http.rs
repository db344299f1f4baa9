//! HTTP front end for the engine fleet and the matching engine client.
//!
//! Routes: `GET /{engine}/`, `GET /{engine}/consent`,
//! `GET /{engine}/search?c={category}&q={query}&p={index}`. The caller's
//! identity travels in `x-source-region` / `x-source-agent` headers; page
//! metadata comes back in `x-page-*` headers.

use std::collections::HashMap;
use std::sync::Arc;

use async_trait::async_trait;
use axum::extract::{Path, Query, State};
use axum::http::{HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::Router;

use crate::agent::clients::{EngineClient, FetchError};
use crate::design::SearchCategory;
use crate::engines::{
    EngineFleet, EnginePage, EngineRequest, PageKind, RequestKind, ServeOutcome, SourceIdentity,
    TransportFailure,
};
use crate::time::ClockHandle;

const H_REGION: &str = "x-source-region";
const H_AGENT: &str = "x-source-agent";
const H_KIND: &str = "x-page-kind";
const H_QUERY: &str = "x-page-effective-query";
const H_INDEX: &str = "x-page-index";
const H_HAS_NEXT: &str = "x-page-has-next";
const H_TERMINAL: &str = "x-page-terminal";

fn encode(s: &str) -> String {
    url::form_urlencoded::byte_serialize(s.as_bytes()).collect()
}

fn decode(s: &str) -> String {
    url::form_urlencoded::parse(format!("v={s}").as_bytes())
        .next()
        .map(|(_, v)| v.into_owned())
        .unwrap_or_default()
}

#[derive(Clone)]
struct AppState {
    fleet: Arc<EngineFleet>,
    clock: Arc<dyn ClockHandle>,
}

fn source(headers: &HeaderMap) -> SourceIdentity {
    let h = |name| {
        headers
            .get(name)
            .and_then(|v: &HeaderValue| v.to_str().ok())
            .map(decode)
            .unwrap_or_default()
    };
    SourceIdentity::new(h(H_REGION), h(H_AGENT))
}

async fn answer(state: &AppState, request: EngineRequest) -> Response {
    let served = match state.fleet.serve(&request) {
        Ok(s) => s,
        Err(e) => return (StatusCode::NOT_FOUND, e.to_string()).into_response(),
    };
    tokio::time::sleep(state.clock.to_runtime(served.latency)).await;
    match served.outcome {
        ServeOutcome::Page(page) => {
            let mut headers = HeaderMap::new();
            let put = |h: &mut HeaderMap, k: &'static str, v: String| {
                h.insert(k, HeaderValue::from_str(&v).expect("encoded header value"));
            };
            put(&mut headers, H_KIND, page.kind.as_str().to_string());
            put(&mut headers, H_QUERY, encode(&page.effective_query));
            put(&mut headers, H_INDEX, page.page_index.to_string());
            put(&mut headers, H_HAS_NEXT, page.has_next.to_string());
            put(&mut headers, H_TERMINAL, page.terminal.to_string());
            (StatusCode::OK, headers, page.payload).into_response()
        }
        ServeOutcome::Failure(TransportFailure::NotFound) => {
            (StatusCode::NOT_FOUND, "no such category").into_response()
        }
        ServeOutcome::Failure(TransportFailure::Network) => {
            (StatusCode::BAD_GATEWAY, "injected network failure").into_response()
        }
        ServeOutcome::Stall => std::future::pending().await,
    }
}

async fn home(State(s): State<AppState>, Path(engine): Path<String>, headers: HeaderMap) -> Response {
    answer(&s, EngineRequest::home(&engine, &source(&headers))).await
}

async fn consent(State(s): State<AppState>, Path(engine): Path<String>, headers: HeaderMap) -> Response {
    answer(&s, EngineRequest::consent(&engine, &source(&headers))).await
}

async fn search(
    State(s): State<AppState>,
    Path(engine): Path<String>,
    Query(params): Query<HashMap<String, String>>,
    headers: HeaderMap,
) -> Response {
    let Some(category) = params.get("c").and_then(|c| SearchCategory::parse(c)) else {
        return (StatusCode::BAD_REQUEST, "missing or unknown category").into_response();
    };
    let query = params.get("q").cloned().unwrap_or_default();
    let index = params.get("p").and_then(|p| p.parse().ok()).unwrap_or(1);
    answer(
        &s,
        EngineRequest::search(&engine, category, &query, index, &source(&headers)),
    )
    .await
}

pub fn router(fleet: Arc<EngineFleet>, clock: Arc<dyn ClockHandle>) -> Router {
    Router::new()
        .route("/{engine}/", get(home))
        .route("/{engine}/consent", get(consent))
        .route("/{engine}/search", get(search))
        .with_state(AppState { fleet, clock })
}

/// Engine client speaking to [`router`] over HTTP.
#[derive(Clone, Debug)]
pub struct HttpEngineClient {
    base: String,
    client: reqwest::Client,
}

impl HttpEngineClient {
    pub fn new(base_url: impl Into<String>) -> Self {
        HttpEngineClient {
            base: base_url.into().trim_end_matches('/').to_string(),
            client: reqwest::Client::new(),
        }
    }

    fn url(&self, request: &EngineRequest) -> String {
        let engine = encode(&request.engine_id);
        match request.kind {
            RequestKind::Home | RequestKind::Dummy => format!("{}/{engine}/", self.base),
            RequestKind::Consent => format!("{}/{engine}/consent", self.base),
            RequestKind::Search => format!(
                "{}/{engine}/search?c={}&q={}&p={}",
                self.base,
                request.category.map(|c| c.as_str()).unwrap_or(""),
                encode(&request.query),
                request.index
            ),
        }
    }
}

#[async_trait]
impl EngineClient for HttpEngineClient {
    async fn fetch(&self, request: &EngineRequest) -> Result<EnginePage, FetchError> {
        let resp = self
            .client
            .get(self.url(request))
            .header(H_REGION, encode(&request.source.region))
            .header(H_AGENT, encode(&request.source.agent))
            .send()
            .await
            .map_err(|e| FetchError::Transport(e.to_string()))?;
        if !resp.status().is_success() {
            return Err(FetchError::Transport(format!("status {}", resp.status())));
        }
        let h = |name: &str| {
            resp.headers()
                .get(name)
                .and_then(|v| v.to_str().ok())
                .unwrap_or_default()
                .to_string()
        };
        let kind = PageKind::parse(&h(H_KIND))
            .ok_or_else(|| FetchError::Transport("missing page kind".into()))?;
        let effective_query = decode(&h(H_QUERY));
        let page_index = h(H_INDEX).parse().unwrap_or(request.index);
        let has_next = h(H_HAS_NEXT) == "true";
        let terminal = h(H_TERMINAL) == "true";
        let payload = resp
            .bytes()
            .await
            .map_err(|e| FetchError::Transport(e.to_string()))?
            .to_vec();
        Ok(EnginePage {
            kind,
            category: request.category,
            effective_query,
            page_index,
            has_next,
            terminal,
            payload,
        })
    }
}
