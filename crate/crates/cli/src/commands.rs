use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use anyhow::Context;
use hplist::evalkit::{bundled_final_list, evaluate_list, tuning_curve, write_curve, ComparisonTable};
use hplist::hpspace::{default_space, parse_space, read_points, sample as draw, write_points};
use hplist::listbuild::{
    ablate_penalty, exhaustive_build, greedy_build, heldout_successes, leave_one_out_directed, read_list_csv,
    size_sweep as sweep, tau_grid, write_list_csv, FoldResult,
};
use hplist::scoring::CostParams;
use hplist::trialstore::{ingest, parse_records, write_records, RecordLine, TrialMatrix};
use hplist::workbench::{builtin_workloads, calibrate_targets, run_trial, WorkloadSpec};
use hplist::{HyperparameterPoint, MetricDirection, PointId};
use rayon::prelude::*;
use serde_json::json;

use crate::artifacts::Artifacts;
use crate::config::RunConfig;
use crate::{Failure, MatrixInputs};

type Outcome = Result<(), Failure>;

fn read_text(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(Failure::Data)
}

fn load_points(path: &Path) -> Result<Vec<HyperparameterPoint>, Failure> {
    let file = File::open(path)
        .with_context(|| format!("opening {}", path.display()))
        .map_err(Failure::Data)?;
    Ok(read_points(file, path)?)
}

fn positive(name: &str, value: usize) -> Result<usize, Failure> {
    if value == 0 {
        Err(Failure::Usage(format!("--{name} must be at least 1")))
    } else {
        Ok(value)
    }
}

fn float(x: f64) -> String {
    if x.is_infinite() {
        "inf".into()
    } else {
        format!("{x:?}")
    }
}

fn join_ids(ids: &[PointId]) -> String {
    ids.iter().map(ToString::to_string).collect::<Vec<_>>().join(";")
}

struct Loaded {
    matrix: TrialMatrix,
    records: PathBuf,
    points: PathBuf,
}

fn load_matrix(cfg: &RunConfig, inputs: &MatrixInputs) -> Result<Loaded, Failure> {
    let records = cfg.input_or(&inputs.records, "records.csv");
    let points = cfg.input_or(&inputs.points, "points.csv");
    let matrix = ingest(&records, &points)?;
    Ok(Loaded { matrix, records, points })
}

impl Loaded {
    fn register(&self, a: &mut Artifacts) {
        a.input(&self.records);
        a.input(&self.points);
    }
}

/// Metric direction per matrix column, taken from the known workload specs.
/// Unknown workloads are assumed to minimise.
fn directions(cfg: &RunConfig, m: &TrialMatrix) -> Result<Vec<MetricDirection>, Failure> {
    let mut known = builtin_workloads();
    if cfg.workloads_file.is_some() {
        known = cfg.workload_specs()?;
    }
    Ok(m.workloads()
        .iter()
        .map(|w| {
            known
                .iter()
                .find(|s| s.id == w.id)
                .map_or(MetricDirection::Minimize, |s| s.metric_direction)
        })
        .collect())
}

fn params(cfg: &RunConfig) -> Result<CostParams<f64>, Failure> {
    CostParams::new(cfg.tau).map_err(|e| Failure::Usage(e.to_string()))
}

pub fn sample(cfg: &RunConfig, count: Option<usize>, space: Option<&Path>) -> Outcome {
    let count = positive("count", count.unwrap_or(cfg.sample_count))?;
    let mut a = Artifacts::new("sample", cfg)?;
    let space = match space {
        Some(path) => {
            a.input(path);
            parse_space(&read_text(path)?, path)?
        }
        None => default_space(),
    };
    let points = draw(&space, count, cfg.seed)?;
    let mut buf = Vec::new();
    write_points(&mut buf, &points).map_err(|e| Failure::Internal(e.into()))?;
    let path = a.write("points.csv", &buf)?;
    a.finish(json!({ "count": count }))?;
    println!("wrote {count} points to {}", path.display());
    Ok(())
}

/// Writes every known record in point-major, workload-minor order, replacing
/// the file atomically.
fn write_canonical(
    path: &Path,
    points: &[HyperparameterPoint],
    specs: &[WorkloadSpec],
    done: &HashMap<(PointId, String), RecordLine>,
) -> Outcome {
    let ordered: Vec<RecordLine> = points
        .iter()
        .flat_map(|p| specs.iter().filter_map(move |s| done.get(&(p.id, s.id.clone())).cloned()))
        .collect();
    let mut buf = Vec::new();
    write_records(&mut buf, &ordered).map_err(|e| Failure::Internal(e.into()))?;
    let tmp = path.with_extension("csv.tmp");
    fs::write(&tmp, &buf)
        .and_then(|()| fs::rename(&tmp, path))
        .with_context(|| format!("writing {}", path.display()))
        .map_err(Failure::Data)
}

fn existing_records(
    path: &Path,
    points: &[HyperparameterPoint],
    specs: &[WorkloadSpec],
) -> Result<HashMap<(PointId, String), RecordLine>, Failure> {
    let mut done = HashMap::new();
    if !path.exists() {
        return Ok(done);
    }
    let parsed = parse_records(&read_text(path)?, path, true)?;
    for r in parsed.records {
        if !points.iter().any(|p| p.id == r.point_id) {
            return Err(Failure::Data(anyhow::anyhow!(
                "{}: record for point {} not in the points file",
                path.display(),
                r.point_id
            )));
        }
        let Some(spec) = specs.iter().find(|s| s.id == r.workload_id) else {
            return Err(Failure::Data(anyhow::anyhow!(
                "{}: record for unselected workload {:?}",
                path.display(),
                r.workload_id
            )));
        };
        if spec.total_steps != r.budget {
            return Err(Failure::Data(anyhow::anyhow!(
                "{}: workload {:?} recorded with budget {}, expected {}",
                path.display(),
                r.workload_id,
                r.budget,
                spec.total_steps
            )));
        }
        if done.insert((r.point_id, r.workload_id.clone()), r.clone()).is_some() {
            return Err(hplist::Error::DuplicateCell { point: r.point_id, workload: r.workload_id }.into());
        }
    }
    Ok(done)
}

pub fn run(cfg: &RunConfig, points: Option<PathBuf>, records: Option<PathBuf>, max_trials: Option<usize>) -> Outcome {
    let points_path = cfg.input_or(&points, "points.csv");
    let records_path = cfg.input_or(&records, "records.csv");
    let points = load_points(&points_path)?;
    let specs = cfg.workload_specs()?;
    let mut a = Artifacts::new("run", cfg)?;
    a.input(&points_path);
    let mut done = existing_records(&records_path, &points, &specs)?;
    let resumed = done.len();
    let mut jobs: Vec<(usize, usize)> = (0..points.len())
        .flat_map(|p| (0..specs.len()).map(move |w| (p, w)))
        .filter(|&(p, w)| !done.contains_key(&(points[p].id, specs[w].id.clone())))
        .collect();
    if let Some(limit) = max_trials {
        jobs.truncate(limit);
    }
    write_canonical(&records_path, &points, &specs, &done)?;

    let appender = OpenOptions::new()
        .append(true)
        .open(&records_path)
        .with_context(|| format!("opening {}", records_path.display()))
        .map_err(Failure::Data)?;
    let appender = Mutex::new(appender);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| Failure::Internal(e.into()))?;
    let fresh: Vec<RecordLine> = pool.install(|| {
        jobs.par_iter()
            .map(|&(p, w)| {
                let line = run_trial(&specs[w], &points[p])?.to_record_line();
                let mut f = appender.lock().expect("appender lock");
                writeln!(f, "{}", line.to_line())
                    .and_then(|()| f.flush())
                    .with_context(|| format!("appending to {}", records_path.display()))
                    .map_err(Failure::Data)?;
                Ok(line)
            })
            .collect::<Result<_, Failure>>()
    })?;
    let new = fresh.len();
    for r in fresh {
        done.insert((r.point_id, r.workload_id.clone()), r);
    }
    write_canonical(&records_path, &points, &specs, &done)?;
    a.output(&records_path);
    let total = points.len() * specs.len();
    a.finish(json!({ "new_trials": new, "resumed_cells": resumed, "cells": done.len(), "expected_cells": total }))?;
    println!("{new} new trials; {}/{total} cells recorded in {}", done.len(), records_path.display());
    Ok(())
}

pub fn calibrate(cfg: &RunConfig, points: Option<PathBuf>, quantile: f64) -> Outcome {
    let points_path = cfg.input_or(&points, "points.csv");
    let pts = load_points(&points_path)?;
    let specs = cfg.workload_specs()?;
    let mut a = Artifacts::new("calibrate", cfg)?;
    a.input(&points_path);
    let (calibrated, rows) = calibrate_targets(&specs, &pts, quantile)?;
    let mut csv = String::from("workload,target,successes,diverged,points\n");
    for r in &rows {
        writeln!(csv, "{},{:?},{},{},{}", r.workload, r.target, r.successes, r.diverged, r.points).unwrap();
    }
    a.write("calibration.csv", csv.as_bytes())?;
    #[derive(serde::Serialize)]
    struct Out<'a> {
        workload: &'a [WorkloadSpec],
    }
    let toml = toml::to_string(&Out { workload: &calibrated }).map_err(|e| Failure::Internal(e.into()))?;
    a.write("workloads.toml", toml.as_bytes())?;
    a.finish(json!({ "quantile": quantile }))?;
    print!("{csv}");
    Ok(())
}

pub fn build(cfg: &RunConfig, inputs: &MatrixInputs, k: Option<usize>) -> Outcome {
    let k = positive("k", k.unwrap_or(cfg.k))?;
    let l = load_matrix(cfg, inputs)?;
    let mut a = Artifacts::new("build", cfg)?;
    l.register(&mut a);
    let list = greedy_build(&l.matrix, k, &params(cfg)?)?;
    let points: Vec<&HyperparameterPoint> =
        list.entries.iter().map(|&id| l.matrix.point(id)).collect::<hplist::Result<_>>()?;
    let mut buf = Vec::new();
    write_list_csv(&mut buf, &points).map_err(|e| Failure::Internal(e.into()))?;
    a.write("list.csv", &buf)?;
    let mut costs = String::from("rank,point_id,prefix_cost\n");
    for (i, (id, c)) in list.entries.iter().zip(&list.prefix_costs).enumerate() {
        writeln!(costs, "{},{id},{c:?}", i + 1).unwrap();
    }
    a.write("list_costs.csv", costs.as_bytes())?;
    a.finish(json!({ "k": k, "matrix_hash": l.matrix.content_hash() }))?;
    print!("{costs}");
    Ok(())
}

pub fn exhaustive(cfg: &RunConfig, inputs: &MatrixInputs, k: Option<usize>, cap: u128) -> Outcome {
    let k = positive("k", k.unwrap_or(cfg.k))?;
    let l = load_matrix(cfg, inputs)?;
    let mut a = Artifacts::new("exhaustive", cfg)?;
    l.register(&mut a);
    let p = params(cfg)?;
    let best = exhaustive_build(&l.matrix, k, &p, cap)?;
    let greedy = greedy_build(&l.matrix, k, &p)?;
    let greedy_cost = *greedy.prefix_costs.last().expect("non-empty list");
    let summary = json!({
        "k": k,
        "tau": cfg.tau,
        "subset": best.ids.iter().map(|id| id.0).collect::<Vec<_>>(),
        "cost": best.cost,
        "greedy": greedy.entries.iter().map(|id| id.0).collect::<Vec<_>>(),
        "greedy_cost": greedy_cost,
    });
    let text = serde_json::to_string_pretty(&summary).map_err(|e| Failure::Internal(e.into()))?;
    a.write("exhaustive.json", (text.clone() + "\n").as_bytes())?;
    a.finish(json!({ "k": k, "cap": cap.to_string() }))?;
    println!("{text}");
    Ok(())
}

fn fold_csv(folds: &[FoldResult<f64>]) -> String {
    let mut csv = String::from("held_out,list,first_target_step,step_fraction,best_metric,success\n");
    for f in folds {
        writeln!(
            csv,
            "{},{},{},{:?},{:?},{}",
            f.held_out,
            join_ids(&f.list.entries),
            f.best.encode(),
            f.step_fraction,
            f.best_metric,
            f.success()
        )
        .unwrap();
    }
    csv
}

pub fn loo(cfg: &RunConfig, inputs: &MatrixInputs, k: Option<usize>) -> Outcome {
    let k = positive("k", k.unwrap_or(cfg.k))?;
    let l = load_matrix(cfg, inputs)?;
    let mut a = Artifacts::new("loo", cfg)?;
    l.register(&mut a);
    let dirs = directions(cfg, &l.matrix)?;
    let folds = leave_one_out_directed(&l.matrix, k, &params(cfg)?, &dirs)?;
    let csv = fold_csv(&folds);
    a.write("loo.csv", csv.as_bytes())?;
    let successes = heldout_successes(&folds);
    a.finish(json!({ "k": k, "successes": successes }))?;
    print!("{csv}");
    println!("{successes}/{} held-out workloads reached", folds.len());
    Ok(())
}

fn parse_grid(spec: &str) -> Result<Vec<f64>, Failure> {
    let bad = || Failure::Usage(format!("--tau-grid expects lo:hi:count, got {spec:?}"));
    let parts: Vec<&str> = spec.split(':').collect();
    let [lo, hi, n] = parts[..] else { return Err(bad()) };
    let lo: f64 = lo.trim().parse().map_err(|_| bad())?;
    let hi: f64 = hi.trim().parse().map_err(|_| bad())?;
    let n: usize = n.trim().parse().map_err(|_| bad())?;
    tau_grid(lo, hi, n).map_err(|e| Failure::Usage(e.to_string()))
}

pub fn ablate(cfg: &RunConfig, inputs: &MatrixInputs, k: Option<usize>, grid: &str) -> Outcome {
    let k = positive("k", k.unwrap_or(cfg.k))?;
    let taus = parse_grid(grid)?;
    let l = load_matrix(cfg, inputs)?;
    let mut a = Artifacts::new("ablate", cfg)?;
    l.register(&mut a);
    let rows = ablate_penalty(&l.matrix, k, &taus)?;
    let ids: Vec<&str> = l.matrix.workloads().iter().map(|w| w.id.as_str()).collect();
    let mut csv = format!("tau,successes,{}\n", ids.join(","));
    for r in &rows {
        let cells: Vec<String> = r
            .folds
            .iter()
            .map(|f| if f.success() { float(f.step_fraction) } else { "inf".into() })
            .collect();
        writeln!(csv, "{:?},{},{}", r.tau, r.successes, cells.join(",")).unwrap();
    }
    a.write("ablation.csv", csv.as_bytes())?;
    a.finish(json!({ "k": k, "tau_grid": taus }))?;
    print!("{csv}");
    Ok(())
}

pub fn size_sweep(cfg: &RunConfig, inputs: &MatrixInputs, k_max: Option<usize>) -> Outcome {
    let l = load_matrix(cfg, inputs)?;
    let k_max = positive("k-max", k_max.unwrap_or_else(|| l.matrix.num_points().min(10)))?;
    let mut a = Artifacts::new("size-sweep", cfg)?;
    l.register(&mut a);
    let rows = sweep(&l.matrix, k_max, &params(cfg)?)?;
    let mut csv = String::from("k,successes,mean_heldout_cost\n");
    for r in &rows {
        writeln!(csv, "{},{},{:?}", r.k, r.successes, r.mean_heldout_cost).unwrap();
    }
    a.write("size_sweep.csv", csv.as_bytes())?;
    a.finish(json!({ "k_max": k_max }))?;
    print!("{csv}");
    Ok(())
}

pub fn curves(cfg: &RunConfig, inputs: &MatrixInputs, k: Option<usize>, budget: usize, confidence: f64) -> Outcome {
    let k = positive("k", k.unwrap_or(cfg.k))?;
    let budget = positive("budget", budget)?;
    let l = load_matrix(cfg, inputs)?;
    let mut a = Artifacts::new("curves", cfg)?;
    l.register(&mut a);
    let dirs = directions(cfg, &l.matrix)?;
    let folds = leave_one_out_directed(&l.matrix, k, &params(cfg)?, &dirs)?;
    let mut summary = String::from("workload,direction,list_best_metric,central,low,high,list_at_least_as_good\n");
    for (w, info) in l.matrix.workloads().iter().enumerate() {
        let dir = dirs[w];
        let curve = tuning_curve(&l.matrix.column_metrics(w), budget, confidence, dir)?;
        let mut buf = Vec::new();
        write_curve(&mut buf, &curve).map_err(|e| Failure::Internal(e.into()))?;
        a.write(&format!("curves/{}.csv", info.id), &buf)?;
        let i = budget - 1;
        let list_best = folds[w].best_metric;
        writeln!(
            summary,
            "{},{},{list_best:?},{:?},{:?},{:?},{}",
            info.id,
            dir,
            curve.central[i],
            curve.band_low[i],
            curve.band_high[i],
            !dir.better(curve.central[i], list_best)
        )
        .unwrap();
    }
    a.write("curves_summary.csv", summary.as_bytes())?;
    a.finish(json!({ "k": k, "budget": budget, "confidence": confidence, "bands": "order statistics" }))?;
    print!("{summary}");
    Ok(())
}

pub fn eval(cfg: &RunConfig, list: &str, repeats: usize) -> Outcome {
    let repeats = positive("repeats", repeats)?;
    if repeats.is_multiple_of(2) {
        return Err(Failure::Usage(format!("--repeats must be odd, got {repeats}")));
    }
    let specs = cfg.workload_specs()?;
    let mut a = Artifacts::new("eval", cfg)?;
    let points = if list == "bundled" {
        bundled_final_list()
    } else {
        let path = Path::new(list);
        a.input(path);
        let file = File::open(path)
            .with_context(|| format!("opening {}", path.display()))
            .map_err(Failure::Data)?;
        read_list_csv(file, path)?
    };
    let evals = evaluate_list(&points, &specs, repeats)?;
    let mut csv = String::from("workload,budget,median_step,step_fraction,per_repeat\n");
    for e in &evals {
        let per: Vec<String> = e.per_repeat.iter().map(|s| s.encode().to_string()).collect();
        writeln!(csv, "{},{},{},{},{}", e.workload, e.budget, e.median.encode(), float(e.step_fraction), per.join(";")).unwrap();
    }
    a.write("eval.csv", csv.as_bytes())?;
    let mut table = ComparisonTable::new(evals.iter().map(|e| e.workload.clone()).collect());
    table.push(format!("list{}", points.len()), evals.iter().map(|e| e.step_fraction).collect())?;
    let mut buf = Vec::new();
    table.write_csv(&mut buf).map_err(|e| Failure::Internal(e.into()))?;
    a.write("comparison.csv", &buf)?;
    a.write("comparison.txt", table.to_text().as_bytes())?;
    a.finish(json!({ "list": list, "repeats": repeats, "entries": points.len() }))?;
    print!("{}", table.to_text());
    Ok(())
}

pub fn transfer_counts(cfg: &RunConfig, inputs: &MatrixInputs) -> Outcome {
    let l = load_matrix(cfg, inputs)?;
    let mut a = Artifacts::new("transfer-counts", cfg)?;
    l.register(&mut a);
    let mut csv = String::from("workload,successes,also_one_other,also_two_others\n");
    for t in l.matrix.transfer_counts() {
        writeln!(csv, "{},{},{},{}", t.workload, t.successes, t.also_one_other, t.also_two_others).unwrap();
    }
    a.write("transfer_counts.csv", csv.as_bytes())?;
    a.finish(json!({}))?;
    print!("{csv}");
    Ok(())
}
