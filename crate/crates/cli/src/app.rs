//! Subcommand implementations and exit-code mapping.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};
use unilab_core::experiments::{
    classicality_criteria, convergence_suite, run_protocol_with, CriterionResult, ResumePoint, CODE_VERSION,
};
use unilab_core::{Error, ExperimentRecord, Result, StateVector};

use crate::acceptance::{self, AcceptanceOutcome};
use crate::checkpoint::{checkpoint_read, checkpoint_write, CheckpointMeta};
use crate::config::{parse_config, ConfigEcho, RunConfig};
use crate::output::{distribution_csv, distribution_svg, timeseries_csv, timeseries_svg, write_file};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_ACCEPTANCE: i32 = 4;

pub const TIMESERIES_CSV: &str = "timeseries.csv";
pub const DISTRIBUTION_CSV: &str = "distribution.csv";
pub const TIMESERIES_SVG: &str = "timeseries.svg";
pub const DISTRIBUTION_SVG: &str = "distribution.svg";
pub const MANIFEST: &str = "manifest.json";
pub const FINAL_STATE: &str = "final_state.bin";

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Usage(_) => EXIT_USAGE,
        Error::NumericalBreakdown(_) => EXIT_NUMERICAL,
        Error::Config(_) | Error::Resource(_) | Error::InvalidState(_) => EXIT_CONFIG,
    }
}

#[derive(Debug, Parser)]
#[command(name = "unilab", version, about = "Closed-universe qubit / spin bath / observer simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args, Default)]
pub struct Overrides {
    /// Directory for all emitted files (overrides `output_dir`).
    #[arg(long, global = true)]
    pub output_dir: Option<PathBuf>,
    /// Environment seed (overrides `seed`).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Skip SVG plots.
    #[arg(long, global = true)]
    pub no_svg: bool,
    /// Write a checkpoint every N snapshots.
    #[arg(long, global = true, value_name = "N")]
    pub checkpoint_every: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Execute the configured protocol and write CSV, SVG and manifest files.
    Run {
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Parse a configuration and print a resource estimate.
    Validate {
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Run the convergence suite and write `convergence.json`.
    Converge {
        config: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
        /// Skip the N_x = 128 vs 256 full-model comparison.
        #[arg(long)]
        skip_grid: bool,
    },
    /// Run the full acceptance battery; exit 4 if any criterion fails.
    Accept {
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Continue a run from a checkpoint.
    Resume {
        checkpoint: PathBuf,
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
}

pub fn load_config(path: &Path, o: &Overrides) -> Result<RunConfig> {
    let mut cfg = parse_config(path)?;
    apply_overrides(&mut cfg, o);
    Ok(cfg)
}

pub fn apply_overrides(cfg: &mut RunConfig, o: &Overrides) {
    if let Some(d) = &o.output_dir {
        cfg.output_dir = d.clone();
    }
    if let Some(s) = o.seed {
        cfg.protocol.env_seed = s;
    }
    if o.no_svg {
        cfg.emit_svg = false;
    }
    if let Some(n) = o.checkpoint_every {
        cfg.checkpoint_interval = n;
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FileEntry {
    pub name: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct FinalSummary {
    pub qubit_purity: f64,
    pub observer_purity: f64,
    pub mean_x: f64,
    pub p_left: f64,
    pub p_right: f64,
    pub coherence: f64,
    pub redundancy: Option<f64>,
    pub stability_metric: Option<f64>,
    pub norm_drift: f64,
    pub relative_energy_drift: f64,
    pub sigma_z_drift: f64,
    pub matvecs: usize,
    pub substeps: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub config: ConfigEcho,
    pub code_version: String,
    pub parameter_hash: String,
    pub started: String,
    pub finished: String,
    pub resumed_from: Option<String>,
    pub summary: FinalSummary,
    pub criteria: Vec<CriterionResult>,
    pub files: Vec<FileEntry>,
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::Resource(format!("cannot read {}: {e}", path.display())))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Resource(format!("cannot create {}: {e}", dir.display())))
}

pub fn checkpoint_name(snapshot_index: usize) -> String {
    format!("checkpoint_{snapshot_index:06}.bin")
}

#[derive(Debug, Clone)]
pub struct RunOutputs {
    pub record: ExperimentRecord,
    pub final_state: StateVector,
    pub files: Vec<PathBuf>,
    pub manifest: PathBuf,
}

/// Executes a configured run, optionally from a checkpoint, and writes all
/// outputs into `cfg.output_dir`.
pub fn execute_run(cfg: &RunConfig, resume: Option<&Path>) -> Result<RunOutputs> {
    let started = now();
    let dir = cfg.output_dir.clone();
    create_dir(&dir)?;
    let protocol = &cfg.protocol;
    let layout = protocol.layout()?;

    let resume_point = match resume {
        Some(path) => {
            let (state, meta) = checkpoint_read(path, Some(&layout))?;
            let step = meta.snapshot_index as usize * protocol.prop.record_stride;
            let expected_time = step as f64 * protocol.prop.dt;
            if step > protocol.prop.n_steps() || (expected_time - meta.time).abs() > 1e-9 * expected_time.max(1.0) {
                return Err(Error::InvalidState(format!(
                    "corrupt checkpoint: snapshot {} at t = {} is inconsistent with dt = {} and record_stride = {}",
                    meta.snapshot_index, meta.time, protocol.prop.dt, protocol.prop.record_stride
                )));
            }
            Some(ResumePoint { state, step })
        }
        None => None,
    };

    let interval = cfg.checkpoint_interval;
    let n_steps = protocol.prop.n_steps();
    let (record, final_state) = run_protocol_with(protocol, resume_point, |snap| {
        if interval > 0 && snap.index > 0 && snap.index % interval == 0 && snap.step < n_steps {
            let path = dir.join(checkpoint_name(snap.index));
            let meta = CheckpointMeta {
                snapshot_index: snap.index as u64,
                time: snap.time,
            };
            checkpoint_write(snap.state, meta, &path)?;
        }
        Ok(())
    })?;
    let mut checkpoints = Vec::new();
    if interval > 0 {
        let mut names: Vec<PathBuf> = std::fs::read_dir(&dir)
            .map_err(|e| Error::Resource(format!("cannot list {}: {e}", dir.display())))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.file_name()
                    .and_then(|n| n.to_str())
                    .is_some_and(|n| n.starts_with("checkpoint_") && n.ends_with(".bin"))
            })
            .collect();
        names.sort();
        checkpoints.extend(names);
        let last = record.times.len().saturating_sub(1);
        let path = dir.join(FINAL_STATE);
        let meta = CheckpointMeta {
            snapshot_index: n_steps.div_ceil(protocol.prop.record_stride) as u64,
            time: record.times.get(last).copied().unwrap_or(0.0),
        };
        checkpoint_write(&final_state, meta, &path)?;
        checkpoints.push(path);
    }

    let ts = dir.join(TIMESERIES_CSV);
    write_file(&ts, timeseries_csv(&record).as_bytes())?;
    let dist = dir.join(DISTRIBUTION_CSV);
    write_file(&dist, distribution_csv(&record).as_bytes())?;
    let mut files = vec![ts, dist];
    if cfg.emit_svg {
        for (name, svg) in [(TIMESERIES_SVG, timeseries_svg(&record)), (DISTRIBUTION_SVG, distribution_svg(&record))] {
            let p = dir.join(name);
            write_file(&p, svg.as_bytes())?;
            files.push(p);
        }
    }
    files.extend(checkpoints);

    let criteria = if protocol.kind.tracks_redundancy() && protocol.params.n_env() >= 8 {
        classicality_criteria(&record)
    } else {
        Vec::new()
    };
    let inventory = files
        .iter()
        .map(|p| {
            Ok(FileEntry {
                name: p.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_string(),
                bytes: std::fs::metadata(p).map(|m| m.len()).unwrap_or(0),
                sha256: sha256_file(p)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let r = &record.final_report;
    let manifest = RunManifest {
        config: cfg.echo(),
        code_version: CODE_VERSION.to_string(),
        parameter_hash: record.provenance.parameter_hash.clone(),
        started,
        finished: now(),
        resumed_from: resume.map(|p| p.display().to_string()),
        summary: FinalSummary {
            qubit_purity: r.qubit_purity,
            observer_purity: r.observer_purity,
            mean_x: r.mean_x,
            p_left: r.p_left,
            p_right: r.p_right,
            coherence: r.coherence,
            redundancy: r.redundancy,
            stability_metric: record.stability(),
            norm_drift: record.norm_drift(),
            relative_energy_drift: record.relative_energy_drift(),
            sigma_z_drift: record.sigma_z_drift(),
            matvecs: record.stats.matvecs,
            substeps: record.stats.substeps,
        },
        criteria,
        files: inventory,
    };
    let manifest_path = dir.join(MANIFEST);
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write_file(&manifest_path, format!("{json}\n").as_bytes())?;
    Ok(RunOutputs {
        record,
        final_state,
        files,
        manifest: manifest_path,
    })
}

/// `validate`: dimensions and memory estimate without allocating the state.
pub fn validate_report(cfg: &RunConfig) -> Result<String> {
    let p = &cfg.protocol;
    let n_env = p.params.n_env();
    let n_x = p.params.grid_points;
    let dim = 2usize
        .checked_mul(1usize.checked_shl(n_env as u32).unwrap_or(0))
        .and_then(|d| d.checked_mul(n_x))
        .filter(|&d| d > 0)
        .ok_or_else(|| Error::Resource(format!("dimension 2 × 2^{n_env} × {n_x} overflows")))?;
    let mib = |bytes: f64| bytes / (1024.0 * 1024.0);
    let state = dim as f64 * 16.0;
    let working = state * (p.prop.krylov_dim as f64 + 4.0);
    Ok(format!(
        "protocol = {}\n\
         dim = 2 × 2^{n_env} × {n_x} = {dim}\n\
         state vector: {:.2} MiB\n\
         estimated peak memory (Krylov dim {}): {:.2} MiB\n\
         steps = {}, snapshots = {}\n",
        p.kind,
        mib(state),
        p.prop.krylov_dim,
        mib(working),
        p.prop.n_steps(),
        p.prop.n_steps().div_ceil(p.prop.record_stride) + 1,
    ))
}

#[derive(Debug, Serialize)]
struct AcceptanceFile<'a> {
    code_version: &'a str,
    started: String,
    finished: String,
    criteria: &'a [AcceptanceOutcome],
}

fn run_command(cmd: Command) -> Result<i32> {
    match cmd {
        Command::Run { config, overrides } => {
            let cfg = load_config(&config, &overrides)?;
            let out = execute_run(&cfg, None)?;
            report_run(&out);
            Ok(EXIT_OK)
        }
        Command::Resume {
            checkpoint,
            config,
            overrides,
        } => {
            let cfg = load_config(&config, &overrides)?;
            let out = execute_run(&cfg, Some(&checkpoint))?;
            report_run(&out);
            Ok(EXIT_OK)
        }
        Command::Validate { config, overrides } => {
            let cfg = load_config(&config, &overrides)?;
            print!("{}", validate_report(&cfg)?);
            Ok(EXIT_OK)
        }
        Command::Converge {
            config,
            overrides,
            skip_grid,
        } => {
            let dir = match &config {
                Some(p) => load_config(p, &overrides)?.output_dir,
                None => overrides.output_dir.clone().unwrap_or_else(|| PathBuf::from(crate::config::DEFAULT_OUTPUT_DIR)),
            };
            create_dir(&dir)?;
            let report = convergence_suite(!skip_grid)?;
            let path = dir.join("convergence.json");
            let json = serde_json::to_string_pretty(&report).expect("report serializes");
            write_file(&path, format!("{json}\n").as_bytes())?;
            println!("{json}");
            println!("wrote {}", path.display());
            Ok(if report.passed { EXIT_OK } else { EXIT_ACCEPTANCE })
        }
        Command::Accept { overrides } => {
            let dir = overrides
                .output_dir
                .clone()
                .unwrap_or_else(|| PathBuf::from("unilab_acceptance"));
            create_dir(&dir)?;
            let started = now();
            let outcomes = acceptance::run_battery(&dir, |o| println!("{o}"))?;
            let file = AcceptanceFile {
                code_version: CODE_VERSION,
                started,
                finished: now(),
                criteria: &outcomes,
            };
            let json = serde_json::to_string_pretty(&file).expect("acceptance report serializes");
            write_file(&dir.join("acceptance.json"), format!("{json}\n").as_bytes())?;
            let failed = outcomes.iter().filter(|o| !o.passed).count();
            println!("{} of {} criteria passed", outcomes.len() - failed, outcomes.len());
            Ok(if failed == 0 { EXIT_OK } else { EXIT_ACCEPTANCE })
        }
    }
}

fn report_run(out: &RunOutputs) {
    let r = &out.record.final_report;
    println!(
        "{}: t = {}, qubit purity {:.4}, observer purity {:.4}, <x> {:.4}, p_L {:.4}, p_R {:.4}",
        out.record.protocol.kind,
        out.record.times.last().copied().unwrap_or(0.0),
        r.qubit_purity,
        r.observer_purity,
        r.mean_x,
        r.p_left,
        r.p_right
    );
    for f in &out.files {
        println!("wrote {}", f.display());
    }
    println!("wrote {}", out.manifest.display());
}

/// Caps the global rayon pool from `UNILAB_THREADS` (0 or unset = automatic).
pub fn configure_threads() -> Result<()> {
    let Ok(v) = std::env::var("UNILAB_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .map_err(|_| Error::Usage(format!("UNILAB_THREADS must be a non-negative integer, got {v:?}")))?;
    if n > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Resource(format!("cannot size thread pool: {e}")))?;
    }
    Ok(())
}

/// Entry point shared by the binary and the tests.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let t0 = Instant::now();
    let result = configure_threads().and_then(|_| run_command(cli.command));
    match result {
        Ok(code) => {
            eprintln!("elapsed {:.1} s", t0.elapsed().as_secs_f64());
            code
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
