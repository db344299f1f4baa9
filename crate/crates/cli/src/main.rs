use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use serp_audit_core::analytics::{analyze, AnalysisOptions};
use serp_audit_core::collector::collection_dir;
use serp_audit_core::collector::manifest::{read_manifest, MANIFEST_FILE};
use serp_audit_core::config::{DesignFile, FaultsFile};
use serp_audit_core::design::{validate_design, ExperimentDesign};
use serp_audit_core::fleet::{run_simulated, run_wallclock, RunOutcome, WallOptions};
use serp_audit_core::record::PageRecord;

const DESIGN_COPY: &str = "design.toml";
const FAULTS_COPY: &str = "faults.toml";
const AGENT_LOGS: &str = "agents.json";
const REPORT_FILE: &str = "report.json";
const COLLECTOR_PORT_ENV: &str = "SERP_AUDIT_COLLECTOR_PORT";
const ENGINE_PORT_ENV: &str = "SERP_AUDIT_ENGINE_PORT";

#[derive(Parser)]
#[command(name = "serp-audit", version, about = "Run and analyze search engine audits with virtual agents")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Mode {
    /// Virtual time; finishes as fast as the machine allows.
    Sim,
    /// Real time over HTTP on localhost.
    Wall,
}

#[derive(Subcommand)]
enum Command {
    /// Check a design file for invariant violations.
    Validate {
        #[arg(long)]
        design: PathBuf,
    },
    /// Run an experiment and leave the collection on disk.
    Run {
        #[arg(long)]
        design: PathBuf,
        #[arg(long, value_enum, default_value = "sim")]
        mode: Mode,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        faults: Option<PathBuf>,
        /// Run directory; receives the collection, copies of the input files and agent logs.
        #[arg(long)]
        out: PathBuf,
        /// Wall mode only: clock seconds per real second.
        #[arg(long, default_value_t = 1.0)]
        time_scale: f64,
    },
    /// Compute coverage, section statistics and sizes for a collection.
    Analyze {
        /// Run directory written by `run`, or a collection directory holding a manifest.
        collection: PathBuf,
        /// Defaults to the design copy in the run directory.
        #[arg(long)]
        design: Option<PathBuf>,
        /// Run directory of a collection with other queries, for the out-of-sample estimate.
        #[arg(long)]
        holdout: Option<PathBuf>,
        /// Seed for the bootstrap.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Directory for report.json; defaults to the analyzed directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_design(path: &Path) -> Result<ExperimentDesign> {
    let file = DesignFile::load(path).with_context(|| format!("reading design {}", path.display()))?;
    Ok(file.into_design()?)
}

fn validate(design: &Path) -> Result<ExitCode> {
    let design = load_design(design)?;
    let violations = validate_design(&design);
    if violations.is_empty() {
        println!("OK");
        return Ok(ExitCode::SUCCESS);
    }
    for v in &violations {
        println!("violation: {v}");
    }
    Ok(ExitCode::from(1))
}

fn port_from_env(name: &str) -> Result<u16> {
    match std::env::var(name) {
        Ok(v) => v.parse().with_context(|| format!("{name}={v} is not a port")),
        Err(_) => Ok(0),
    }
}

fn run(design_path: &Path, mode: Mode, seed: u64, faults_path: Option<&Path>, out: &Path, time_scale: f64) -> Result<ExitCode> {
    let design = load_design(design_path)?;
    let violations = validate_design(&design);
    if !violations.is_empty() {
        for v in &violations {
            eprintln!("violation: {v}");
        }
        bail!("design is not runnable");
    }
    let faults = match faults_path {
        Some(p) => FaultsFile::load(p).with_context(|| format!("reading faults {}", p.display()))?,
        None => FaultsFile::default(),
    };
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    fs::copy(design_path, out.join(DESIGN_COPY)).context("copying design file")?;
    if let Some(p) = faults_path {
        fs::copy(p, out.join(FAULTS_COPY)).context("copying faults file")?;
    }

    let outcome: RunOutcome = match mode {
        Mode::Sim => run_simulated(&design, &faults, seed, out)?,
        Mode::Wall => {
            let options = WallOptions {
                collector_port: port_from_env(COLLECTOR_PORT_ENV)?,
                engine_port: port_from_env(ENGINE_PORT_ENV)?,
                time_scale,
            };
            run_wallclock(&design, &faults, seed, out, options)?
        }
    };
    fs::write(out.join(AGENT_LOGS), serde_json::to_vec_pretty(&outcome.logs)?).context("writing agent logs")?;

    let routines: usize = outcome.logs.iter().map(|l| l.routines.len()).sum();
    let resets: usize = outcome.logs.iter().map(|l| l.readiness_resets()).sum();
    println!(
        "collection {}: {} agents, {} routines, {} readiness resets, {} records, {} bytes",
        design.collection_id,
        outcome.logs.len(),
        routines,
        resets,
        outcome.status.records,
        outcome.status.bytes
    );
    println!("manifest {}", outcome.collection_dir.join(MANIFEST_FILE).display());

    let aborted: Vec<String> = outcome
        .logs
        .iter()
        .filter_map(|l| l.aborted().map(|r| format!("{}: {r}", l.agent_id)))
        .collect();
    if !aborted.is_empty() {
        for a in &aborted {
            eprintln!("agent aborted: {a}");
        }
        return Ok(ExitCode::from(3));
    }
    Ok(ExitCode::SUCCESS)
}

/// Design and manifest records for a run or collection directory.
fn open_collection(dir: &Path, design: Option<&Path>) -> Result<(ExperimentDesign, Vec<PageRecord>)> {
    let design = match design {
        Some(p) => load_design(p)?,
        None => {
            let p = dir.join(DESIGN_COPY);
            if !p.exists() {
                bail!("{} has no {DESIGN_COPY}; pass --design", dir.display());
            }
            load_design(&p)?
        }
    };
    let manifest = if dir.join(MANIFEST_FILE).exists() {
        dir.join(MANIFEST_FILE)
    } else {
        collection_dir(dir, &design.collection_id).join(MANIFEST_FILE)
    };
    if !manifest.exists() {
        bail!("missing manifest under {}", dir.display());
    }
    let records = read_manifest(&manifest)?;
    Ok((design, records))
}

fn analyze_cmd(collection: &Path, design: Option<&Path>, holdout: Option<&Path>, seed: u64, out: Option<&Path>) -> Result<ExitCode> {
    let (design, records) = open_collection(collection, design)?;
    let held = match holdout {
        Some(dir) => Some(open_collection(dir, None)?),
        None => None,
    };
    let report = analyze(
        &records,
        &design,
        held.as_ref().map(|(d, r)| (r.as_slice(), d)),
        AnalysisOptions {
            seed,
            ..AnalysisOptions::default()
        },
    )?;
    print!("{}", report.render_text());
    let out = out.unwrap_or(collection);
    fs::create_dir_all(out)?;
    fs::write(out.join(REPORT_FILE), report.to_json()).context("writing report")?;
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Validate { design } => validate(design),
        Command::Run {
            design,
            mode,
            seed,
            faults,
            out,
            time_scale,
        } => run(design, *mode, *seed, faults.as_deref(), out, *time_scale),
        Command::Analyze {
            collection,
            design,
            holdout,
            seed,
            out,
        } => analyze_cmd(collection, design.as_deref(), holdout.as_deref(), *seed, out.as_deref()),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
