//! Fleet planning and whole-experiment runs.
//!
//! Agent `i` lands in region x browser cell `i mod (R * B)` and starts at
//! engine `(i / (R * B)) mod E`, so every cell sees every starting engine once
//! the fleet has at least `E * R * B` agents.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::agent::clients::{EngineClient, InProcessEngines, InProcessTracker, TrackerClient};
use crate::agent::{run_agent, AgentConfig, AgentLog, DEFAULT_DUMMY_URL};
use crate::collector::{self, CollectionConfig, Collector, CollectorStatus};
use crate::config::FaultsFile;
use crate::design::{validate_design, ExperimentDesign};
use crate::engines::EngineFleet;
use crate::error::{Error, Result};
use crate::rotation::pair_at;
use crate::time::{ClockHandle, SimClock, WallClock};

/// Agent configurations for every agent of `design`, in agent order.
pub fn plan_fleet(design: &ExperimentDesign) -> Vec<AgentConfig> {
    let regions = design.regions.len().max(1);
    let browsers = design.browsers.len().max(1);
    let cells = regions * browsers;
    let engines = design.engines.len().max(1);
    (0..design.agents as usize)
        .map(|i| {
            let cell = i % cells;
            let agent_id = format!("agent-{i:03}");
            AgentConfig {
                token: format!("{}:{agent_id}", design.collection_id),
                agent_id,
                region: design.regions.get(cell / browsers).cloned().unwrap_or_default(),
                browser_id: design
                    .browsers
                    .get(cell % browsers)
                    .map(|b| b.browser_id.clone())
                    .unwrap_or_default(),
                start_offset: (i / cells) % engines,
                dummy_url: DEFAULT_DUMMY_URL.to_string(),
            }
        })
        .collect()
}

/// Scheduled routines per engine over the whole fleet.
pub fn planned_routines(design: &ExperimentDesign) -> BTreeMap<String, u64> {
    let mut out: BTreeMap<String, u64> = design
        .engines
        .iter()
        .map(|e| (e.engine_id.clone(), 0))
        .collect();
    let (e, q) = (design.engines.len(), design.queries.len());
    if e == 0 || q == 0 {
        return out;
    }
    for agent in plan_fleet(design) {
        for k in 0..design.routines_per_agent() {
            let pair = pair_at(e, q, agent.start_offset, k);
            *out.get_mut(&design.engines[pair.engine].engine_id).expect("engine") += 1;
        }
    }
    out
}

pub fn collection_config(design: &ExperimentDesign) -> CollectionConfig {
    CollectionConfig::from_design(design, plan_fleet(design).into_iter().map(|a| a.token))
}

fn check(design: &ExperimentDesign) -> Result<()> {
    let violations = validate_design(design);
    if violations.is_empty() {
        return Ok(());
    }
    let list: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
    Err(Error::InvalidArgument(format!("invalid design: {}", list.join("; "))))
}

#[derive(Debug)]
pub struct RunOutcome {
    pub logs: Vec<AgentLog>,
    pub collection_dir: PathBuf,
    pub status: CollectorStatus,
}

/// Runs every planned agent to completion against the given clients.
pub async fn drive_agents(
    design: &ExperimentDesign,
    clock: &dyn ClockHandle,
    engines: &dyn EngineClient,
    tracker: &dyn TrackerClient,
) -> Vec<AgentLog> {
    let plan = plan_fleet(design);
    futures::future::join_all(
        plan.iter()
            .map(|cfg| run_agent(cfg, design, clock, engines, tracker)),
    )
    .await
}

/// Runs the fleet in virtual time against in-process engines and collector.
pub fn simulate(design: &ExperimentDesign, fleet: EngineFleet, collector: Arc<Collector>) -> Result<Vec<AgentLog>> {
    let runtime = tokio::runtime::Builder::new_current_thread()
        .enable_time()
        .start_paused(true)
        .build()
        .map_err(|e| Error::Transport(format!("runtime: {e}")))?;
    let fleet = Arc::new(fleet);
    Ok(runtime.block_on(async {
        let clock: Arc<dyn ClockHandle> = Arc::new(SimClock::starting_at(design.start_epoch));
        let engines = InProcessEngines::new(fleet, clock.clone());
        let tracker = InProcessTracker::new(collector, clock.clone());
        drive_agents(design, clock.as_ref(), &engines, &tracker).await
    }))
}

/// Full simulated run: collection under `root`, engines built from `faults`.
pub fn run_simulated(design: &ExperimentDesign, faults: &FaultsFile, seed: u64, root: &Path) -> Result<RunOutcome> {
    check(design)?;
    let fleet = faults.build_fleet(design, seed)?;
    let collector = Arc::new(Collector::open(root, collection_config(design), faults.collector.options())?);
    let logs = simulate(design, fleet, collector.clone())?;
    Ok(RunOutcome {
        logs,
        collection_dir: collector::collection_dir(root, &design.collection_id),
        status: collector.status(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WallOptions {
    /// 0 picks a free port.
    pub collector_port: u16,
    pub engine_port: u16,
    /// Clock seconds per real second.
    pub time_scale: f64,
}

impl Default for WallOptions {
    fn default() -> Self {
        WallOptions {
            collector_port: 0,
            engine_port: 0,
            time_scale: 1.0,
        }
    }
}

/// Real-time run over HTTP: collector and engines listen on localhost and
/// agents talk to them with HTTP clients. The clock starts at `start_epoch`.
pub fn run_wallclock(
    design: &ExperimentDesign,
    faults: &FaultsFile,
    seed: u64,
    root: &Path,
    options: WallOptions,
) -> Result<RunOutcome> {
    check(design)?;
    let fleet = Arc::new(faults.build_fleet(design, seed)?);
    let collector = Arc::new(Collector::open(root, collection_config(design), faults.collector.options())?);
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| Error::Transport(format!("runtime: {e}")))?;
    let logs = runtime.block_on(async {
        let clock: Arc<dyn ClockHandle> = Arc::new(WallClock::scaled_from(design.start_epoch, options.time_scale));
        let bind = |port: u16| async move {
            let addr = SocketAddr::from(([127, 0, 0, 1], port));
            tokio::net::TcpListener::bind(addr)
                .await
                .map_err(|e| Error::Transport(format!("bind {addr}: {e}")))
        };
        let collector_listener = bind(options.collector_port).await?;
        let engine_listener = bind(options.engine_port).await?;
        let collector_addr = collector_listener.local_addr().map_err(|e| Error::Transport(e.to_string()))?;
        let engine_addr = engine_listener.local_addr().map_err(|e| Error::Transport(e.to_string()))?;

        let (stop_tx, stop_rx) = tokio::sync::watch::channel(false);
        let serve = |listener: tokio::net::TcpListener, app: axum::Router| {
            let mut rx = stop_rx.clone();
            tokio::spawn(async move {
                axum::serve(listener, app)
                    .with_graceful_shutdown(async move {
                        let _ = rx.wait_for(|stop| *stop).await;
                    })
                    .await
            })
        };
        let collector_task = serve(
            collector_listener,
            collector::http::router(collector.clone(), clock.clone()),
        );
        let engine_task = serve(engine_listener, crate::engines::http::router(fleet, clock.clone()));

        let engines = crate::engines::http::HttpEngineClient::new(format!("http://{engine_addr}"));
        let tracker = collector::http::HttpTrackerClient::new(format!("http://{collector_addr}"));
        let logs = drive_agents(design, clock.as_ref(), &engines, &tracker).await;

        // Graceful shutdown waits for in-flight requests.
        let _ = stop_tx.send(true);
        for task in [collector_task, engine_task] {
            match task.await {
                Ok(Ok(())) => {}
                Ok(Err(e)) => return Err(Error::Transport(format!("server: {e}"))),
                Err(e) => return Err(Error::Transport(format!("server task: {e}"))),
            }
        }
        Ok(logs)
    })?;
    Ok(RunOutcome {
        logs,
        collection_dir: collector::collection_dir(root, &design.collection_id),
        status: collector.status(),
    })
}
