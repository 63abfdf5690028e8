//! Run configuration: built-in defaults, overridden by a TOML file, overridden
//! by flags (and `HPLIST_OUT` for the output directory).

use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::Args;
use hplist::workbench::{builtin_workloads, WorkloadSpec};
use serde::{Deserialize, Serialize};

use crate::Failure;

#[derive(Debug, Clone, Default, Args)]
pub struct GlobalArgs {
    /// Seed for every random stream.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Penalty factor for unreached targets.
    #[arg(long, global = true)]
    pub tau: Option<f64>,
    /// Output directory.
    #[arg(long, global = true, env = "HPLIST_OUT")]
    pub out: Option<PathBuf>,
    /// Worker threads for trial execution.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// TOML configuration file. Flags take precedence over its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
}

/// Workload selection: the bundled set, a subset of it by id, or specs read
/// from a TOML file with `[[workload]]` tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WorkloadSelection {
    Named(String),
    Ids(Vec<String>),
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    seed: Option<u64>,
    tau: Option<f64>,
    k: Option<usize>,
    sample_count: Option<usize>,
    workloads: Option<WorkloadSelection>,
    workloads_file: Option<PathBuf>,
    out: Option<PathBuf>,
    jobs: Option<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub seed: u64,
    pub tau: f64,
    pub k: usize,
    pub sample_count: usize,
    pub workloads: WorkloadSelection,
    pub workloads_file: Option<PathBuf>,
    pub out: PathBuf,
    pub jobs: usize,
}

#[derive(Deserialize)]
struct WorkloadsFile {
    workload: Vec<WorkloadSpec>,
}

impl RunConfig {
    pub fn resolve(args: &GlobalArgs) -> Result<Self, Failure> {
        let file = match &args.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading config {}", path.display()))
                    .map_err(Failure::Data)?;
                toml::from_str::<FileConfig>(&text)
                    .with_context(|| format!("parsing config {}", path.display()))
                    .map_err(Failure::Data)?
            }
            None => FileConfig::default(),
        };
        let cfg = RunConfig {
            seed: args.seed.or(file.seed).unwrap_or(0),
            tau: args.tau.or(file.tau).unwrap_or(hplist::scoring::DEFAULT_TAU),
            k: file.k.unwrap_or(5),
            sample_count: file.sample_count.unwrap_or(200),
            workloads: file.workloads.unwrap_or(WorkloadSelection::Named("builtin".into())),
            workloads_file: file.workloads_file,
            out: args.out.clone().or(file.out).unwrap_or_else(|| PathBuf::from("out")),
            jobs: args
                .jobs
                .or(file.jobs)
                .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get())),
        };
        if cfg.jobs == 0 {
            return Err(Failure::Usage("--jobs must be at least 1".into()));
        }
        if !(cfg.tau >= 1.0 && cfg.tau.is_finite()) {
            return Err(Failure::Usage(format!("--tau must be finite and at least 1, got {}", cfg.tau)));
        }
        Ok(cfg)
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    pub fn input_or(&self, given: &Option<PathBuf>, default: &str) -> PathBuf {
        given.clone().unwrap_or_else(|| self.path(default))
    }

    /// The workload specs this run uses, in column order.
    pub fn workload_specs(&self) -> Result<Vec<WorkloadSpec>, Failure> {
        let pool = match &self.workloads_file {
            Some(path) => read_workloads_file(path)?,
            None => builtin_workloads(),
        };
        let specs = match &self.workloads {
            WorkloadSelection::Named(name) if name == "builtin" || name == "all" => pool,
            WorkloadSelection::Named(list) => select(&pool, list.split(',').map(str::trim))?,
            WorkloadSelection::Ids(ids) => select(&pool, ids.iter().map(String::as_str))?,
        };
        for s in &specs {
            s.validate().map_err(|e| Failure::Data(e.into()))?;
        }
        Ok(specs)
    }
}

fn select<'a>(pool: &[WorkloadSpec], ids: impl Iterator<Item = &'a str>) -> Result<Vec<WorkloadSpec>, Failure> {
    let mut out: Vec<WorkloadSpec> = Vec::new();
    for id in ids.filter(|s| !s.is_empty()) {
        let spec = pool
            .iter()
            .find(|s| s.id == id)
            .ok_or_else(|| Failure::Usage(format!("unknown workload {id:?}")))?;
        if out.iter().any(|s| s.id == id) {
            return Err(Failure::Usage(format!("workload {id:?} selected twice")));
        }
        out.push(spec.clone());
    }
    if out.is_empty() {
        return Err(Failure::Usage("no workloads selected".into()));
    }
    Ok(out)
}

fn read_workloads_file(path: &Path) -> Result<Vec<WorkloadSpec>, Failure> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading workloads {}", path.display()))
        .map_err(Failure::Data)?;
    let parsed: WorkloadsFile = toml::from_str(&text)
        .with_context(|| format!("parsing workloads {}", path.display()))
        .map_err(Failure::Data)?;
    Ok(parsed.workload)
}
