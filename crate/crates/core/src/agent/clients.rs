//! Interfaces an agent talks through, with in-process implementations.

use std::sync::Arc;

use async_trait::async_trait;
use thiserror::Error;

use crate::collector::{Collector, Credentials};
use crate::engines::{EngineFleet, EnginePage, EngineRequest, ServeOutcome, TransportFailure};
use crate::error::Error;
use crate::record::PageUpload;
use crate::time::ClockHandle;

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum FetchError {
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("page load timed out")]
    Timeout,
    #[error("budget deadline passed")]
    Deadline,
}

#[async_trait]
pub trait EngineClient: Send + Sync {
    async fn fetch(&self, request: &EngineRequest) -> Result<EnginePage, FetchError>;
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum TrackError {
    #[error("rejected: {0}")]
    Rejected(String),
    #[error("collector busy, retry after {retry_after_ms} ms")]
    RetryLater { retry_after_ms: u64 },
    #[error("collector unavailable: {0}")]
    Unavailable(String),
}

impl From<Error> for TrackError {
    fn from(e: Error) -> Self {
        match e {
            Error::Rejected(m) => TrackError::Rejected(m),
            Error::RetryLater { retry_after_ms } => TrackError::RetryLater { retry_after_ms },
            other => TrackError::Unavailable(other.to_string()),
        }
    }
}

/// The tracker side of an agent: registration, list download, page upload.
#[async_trait]
pub trait TrackerClient: Send + Sync {
    async fn register(&self, token: &str) -> Result<Credentials, TrackError>;
    async fn engine_list(&self) -> Result<Vec<String>, TrackError>;
    async fn query_list(&self) -> Result<Vec<String>, TrackError>;
    /// Uploads one page; returns its ingest sequence once acknowledged.
    async fn track(&self, upload: &PageUpload) -> Result<u64, TrackError>;
}

/// Calls the fleet directly; latency becomes clock time.
pub struct InProcessEngines {
    fleet: Arc<EngineFleet>,
    clock: Arc<dyn ClockHandle>,
}

impl InProcessEngines {
    pub fn new(fleet: Arc<EngineFleet>, clock: Arc<dyn ClockHandle>) -> Self {
        InProcessEngines { fleet, clock }
    }
}

#[async_trait]
impl EngineClient for InProcessEngines {
    async fn fetch(&self, request: &EngineRequest) -> Result<EnginePage, FetchError> {
        let served = self
            .fleet
            .serve(request)
            .map_err(|e| FetchError::Transport(e.to_string()))?;
        if !served.latency.is_zero() {
            self.clock.sleep(served.latency).await;
        }
        match served.outcome {
            ServeOutcome::Page(p) => Ok(p),
            ServeOutcome::Failure(TransportFailure::Network) => {
                Err(FetchError::Transport("network failure".into()))
            }
            ServeOutcome::Failure(TransportFailure::NotFound) => {
                Err(FetchError::Transport("not found".into()))
            }
            ServeOutcome::Stall => std::future::pending().await,
        }
    }
}

/// Calls the collector directly. Acknowledgments arrive when the collector's
/// ingest queue says so.
pub struct InProcessTracker {
    collector: Arc<Collector>,
    clock: Arc<dyn ClockHandle>,
}

impl InProcessTracker {
    pub fn new(collector: Arc<Collector>, clock: Arc<dyn ClockHandle>) -> Self {
        InProcessTracker { collector, clock }
    }
}

#[async_trait]
impl TrackerClient for InProcessTracker {
    async fn register(&self, token: &str) -> Result<Credentials, TrackError> {
        Ok(self.collector.register(token)?)
    }

    async fn engine_list(&self) -> Result<Vec<String>, TrackError> {
        Ok(self.collector.get_lists()?.0.engines)
    }

    async fn query_list(&self) -> Result<Vec<String>, TrackError> {
        Ok(self.collector.get_lists()?.1.queries)
    }

    async fn track(&self, upload: &PageUpload) -> Result<u64, TrackError> {
        let ingested = self.collector.ingest(upload, self.clock.now())?;
        if ingested.ack_at > self.clock.now() {
            self.clock.sleep_until(ingested.ack_at).await;
        }
        Ok(ingested.record.ingest_sequence)
    }
}
