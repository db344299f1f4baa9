//! HTTP front end of the collector and the matching tracker client.
//!
//! `POST /api/track` bodies are one JSON envelope line (a [`PageUpload`]
//! without payload) followed by `\n` and the raw page bytes.

use std::sync::Arc;

use async_trait::async_trait;
use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, State};
use axum::http::{HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use crate::agent::clients::{TrackError, TrackerClient};
use crate::collector::{Collector, Credentials, EngineList, QueryList};
use crate::error::Error;
use crate::record::PageUpload;
use crate::time::ClockHandle;

pub const RETRY_AFTER_HEADER: &str = "x-retry-after-ms";

#[derive(Clone)]
struct AppState {
    collector: Arc<Collector>,
    clock: Arc<dyn ClockHandle>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RegisterRequest {
    pub token: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TrackResponse {
    pub ingest_sequence: u64,
    pub byte_size: u64,
}

fn error_response(err: Error) -> Response {
    match err {
        Error::Rejected(msg) => (StatusCode::UNAUTHORIZED, msg).into_response(),
        Error::Unconfigured => (StatusCode::SERVICE_UNAVAILABLE, err.to_string()).into_response(),
        Error::RetryLater { retry_after_ms } => {
            let mut headers = HeaderMap::new();
            headers.insert(RETRY_AFTER_HEADER, HeaderValue::from(retry_after_ms));
            (StatusCode::SERVICE_UNAVAILABLE, headers, "retry later").into_response()
        }
        Error::InvalidArgument(msg) => (StatusCode::BAD_REQUEST, msg).into_response(),
        other => (StatusCode::INTERNAL_SERVER_ERROR, other.to_string()).into_response(),
    }
}

async fn register(State(s): State<AppState>, Json(req): Json<RegisterRequest>) -> Response {
    match s.collector.register(&req.token) {
        Ok(c) => Json(c).into_response(),
        Err(e) => error_response(e),
    }
}

async fn engines(State(s): State<AppState>) -> Response {
    match s.collector.get_lists() {
        Ok((e, _)) => Json(e).into_response(),
        Err(e) => error_response(e),
    }
}

async fn queries(State(s): State<AppState>) -> Response {
    match s.collector.get_lists() {
        Ok((_, q)) => Json(q).into_response(),
        Err(e) => error_response(e),
    }
}

async fn status(State(s): State<AppState>) -> Response {
    Json(s.collector.status()).into_response()
}

/// Splits a track body into envelope and payload.
pub fn decode_track_body(body: &[u8]) -> Result<PageUpload, Error> {
    let split = body
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::InvalidArgument("track body lacks envelope terminator".into()))?;
    let mut upload: PageUpload = serde_json::from_slice(&body[..split])
        .map_err(|e| Error::InvalidArgument(format!("bad envelope: {e}")))?;
    upload.payload = body[split + 1..].to_vec();
    Ok(upload)
}

pub fn encode_track_body(upload: &PageUpload) -> Vec<u8> {
    let mut body = serde_json::to_vec(upload).expect("envelope serializes");
    body.push(b'\n');
    body.extend_from_slice(&upload.payload);
    body
}

async fn track(State(s): State<AppState>, body: Bytes) -> Response {
    let upload = match decode_track_body(&body) {
        Ok(u) => u,
        Err(e) => return error_response(e),
    };
    let collector = s.collector.clone();
    let now = s.clock.now();
    let res = tokio::task::spawn_blocking(move || collector.ingest(&upload, now)).await;
    match res {
        Ok(Ok(ingested)) => {
            s.clock.sleep_until(ingested.ack_at).await;
            Json(TrackResponse {
                ingest_sequence: ingested.record.ingest_sequence,
                byte_size: ingested.record.byte_size,
            })
            .into_response()
        }
        Ok(Err(e)) => error_response(e),
        Err(join) => (StatusCode::INTERNAL_SERVER_ERROR, join.to_string()).into_response(),
    }
}

pub fn router(collector: Arc<Collector>, clock: Arc<dyn ClockHandle>) -> Router {
    Router::new()
        .route("/api/register", post(register))
        .route("/api/config/engines", get(engines))
        .route("/api/config/queries", get(queries))
        .route("/api/track", post(track))
        .route("/api/status", get(status))
        .layer(DefaultBodyLimit::max(256 * 1024 * 1024))
        .with_state(AppState { collector, clock })
}

/// Tracker speaking to a collector over HTTP.
#[derive(Clone, Debug)]
pub struct HttpTrackerClient {
    base: String,
    client: reqwest::Client,
}

impl HttpTrackerClient {
    pub fn new(base_url: impl Into<String>) -> Self {
        HttpTrackerClient {
            base: base_url.into().trim_end_matches('/').to_string(),
            client: reqwest::Client::new(),
        }
    }

    async fn classify(resp: reqwest::Response) -> Result<reqwest::Response, TrackError> {
        let status = resp.status();
        if status.is_success() {
            return Ok(resp);
        }
        if status == StatusCode::UNAUTHORIZED || status == StatusCode::FORBIDDEN {
            return Err(TrackError::Rejected(resp.text().await.unwrap_or_default()));
        }
        if let Some(ms) = resp
            .headers()
            .get(RETRY_AFTER_HEADER)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.parse().ok())
        {
            return Err(TrackError::RetryLater { retry_after_ms: ms });
        }
        Err(TrackError::Unavailable(format!(
            "{status}: {}",
            resp.text().await.unwrap_or_default()
        )))
    }

    fn transport(e: reqwest::Error) -> TrackError {
        TrackError::Unavailable(e.to_string())
    }
}

#[async_trait]
impl TrackerClient for HttpTrackerClient {
    async fn register(&self, token: &str) -> Result<Credentials, TrackError> {
        let resp = self
            .client
            .post(format!("{}/api/register", self.base))
            .json(&RegisterRequest {
                token: token.to_string(),
            })
            .send()
            .await
            .map_err(Self::transport)?;
        Self::classify(resp).await?.json().await.map_err(Self::transport)
    }

    async fn engine_list(&self) -> Result<Vec<String>, TrackError> {
        let resp = self
            .client
            .get(format!("{}/api/config/engines", self.base))
            .send()
            .await
            .map_err(Self::transport)?;
        let list: EngineList = Self::classify(resp).await?.json().await.map_err(Self::transport)?;
        Ok(list.engines)
    }

    async fn query_list(&self) -> Result<Vec<String>, TrackError> {
        let resp = self
            .client
            .get(format!("{}/api/config/queries", self.base))
            .send()
            .await
            .map_err(Self::transport)?;
        let list: QueryList = Self::classify(resp).await?.json().await.map_err(Self::transport)?;
        Ok(list.queries)
    }

    async fn track(&self, upload: &PageUpload) -> Result<u64, TrackError> {
        let resp = self
            .client
            .post(format!("{}/api/track", self.base))
            .body(encode_track_body(upload))
            .send()
            .await
            .map_err(Self::transport)?;
        let ack: TrackResponse = Self::classify(resp).await?.json().await.map_err(Self::transport)?;
        Ok(ack.ingest_sequence)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::SearchCategory;
    use crate::engines::PageKind;
    use crate::time::Timestamp;

    #[test]
    fn track_body_round_trip() {
        let upload = PageUpload {
            token: "k".into(),
            agent_id: "a".into(),
            region: "r".into(),
            browser_id: "b".into(),
            timestamp: Timestamp::from_secs(5),
            engine_id: "google".into(),
            category: Some(SearchCategory::News),
            intended_query: "manifestação\nnewline".into(),
            effective_query: "x".into(),
            page_index: 3,
            kind: PageKind::Result,
            routine_seq: Some(2),
            payload: b"<html>\n\n</html>".to_vec(),
        };
        let decoded = decode_track_body(&encode_track_body(&upload)).unwrap();
        assert_eq!(decoded, upload);
        assert!(decode_track_body(b"no newline").is_err());
    }
}
