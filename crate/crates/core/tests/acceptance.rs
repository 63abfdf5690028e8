//! Acceptance gate: one PASS/FAIL line per criterion. Exits non-zero if any
//! criterion fails.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::*;
use hplist::evalkit::{bundled_final_list, expected_best, tuning_curve, DEFAULT_CONFIDENCE};
use hplist::hpspace::{default_space, sample};
use hplist::listbuild::{
    ablate_penalty, exhaustive_build, greedy_build, heldout_successes, leave_one_out, leave_one_out_directed,
    size_sweep, write_list_csv, DEFAULT_ENUMERATION_CAP,
};
use hplist::nadamw::{nadamw_step, nadamw_update, NadamwConfig, OptimizerState, ScheduleSpec};
use hplist::scoring::{costs_tie, list_cost, CostParams};
use hplist::trialstore::{Cell, TargetStep, TrialMatrix, WorkloadInfo};
use hplist::workbench::{builtin_workloads, calibrate_targets, matrix_from_trials, run_grid};
use hplist::{HyperparameterPoint, MetricDirection, PointId};
use num_rational::Ratio;
use rand::seq::SliceRandom;
use rand::Rng;

/// Relative tolerance for the cost golden test.
const COST_RTOL: f64 = 1e-12;
/// Absolute tolerance for optimizer trajectories against the scalar reference.
const OPTIMIZER_TOL: f64 = 1e-10;
/// Absolute tolerance for schedule endpoints.
const SCHEDULE_TOL: f64 = 1e-12;

type Outcome = Result<String, String>;

struct Gate {
    failures: usize,
}

impl Gate {
    fn check(&mut self, id: &str, name: &str, limit: Duration, f: impl FnOnce() -> Outcome) {
        let start = Instant::now();
        let result = f();
        let elapsed = start.elapsed();
        let result = match result {
            Ok(detail) if elapsed > limit => Err(format!("{detail}; took {elapsed:.2?}, limit {limit:?}")),
            other => other,
        };
        match result {
            Ok(detail) => println!("PASS [{id}] {name}: {detail} ({elapsed:.2?})"),
            Err(detail) => {
                self.failures += 1;
                println!("FAIL [{id}] {name}: {detail} ({elapsed:.2?})");
            }
        }
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn cost_golden() -> Outcome {
    let fractions = [Some(0.75886), None, Some(0.949664), Some(0.809714), Some(0.82), Some(0.79), Some(0.58), Some(0.659837)];
    let budget = 1_000_000u64;
    let infos: Vec<WorkloadInfo> = (0..8).map(|i| WorkloadInfo { id: format!("w{i}"), budget }).collect();
    let cells: Vec<Cell> = fractions
        .iter()
        .map(|f| Cell {
            first_target_step: f.map_or(TargetStep::Never, |f| TargetStep::At((f * budget as f64).round() as u64)),
            best_metric: 0.0,
        })
        .collect();
    let point = sample(&default_space(), 1, 0).map_err(|e| e.to_string())?;
    let m = TrialMatrix::new(point, infos, cells).map_err(|e| e.to_string())?;
    let got: f64 = list_cost(&m, &[PointId(0)], &CostParams::new(2.0).unwrap()).map_err(|e| e.to_string())?;
    let want = cost_oracle(&fractions, 2.0);
    let rel = ((got - want) / want).abs();
    ensure(rel < COST_RTOL, || format!("cost {got} vs oracle {want}, rel {rel:e}"))?;
    Ok(format!("cost {got:.12} matches oracle, rel err {rel:.1e}"))
}

fn table_fidelity() -> Outcome {
    let golden = include_str!("../data/final_list.csv");
    let list = bundled_final_list();
    let refs: Vec<&HyperparameterPoint> = list.iter().collect();
    let mut buf = Vec::new();
    write_list_csv(&mut buf, &refs).map_err(|e| e.to_string())?;
    let written = String::from_utf8(buf).unwrap();
    ensure(written == golden, || format!("written list differs:\n{written}"))?;
    let mut fields = 0;
    for (line, p) in golden.lines().skip(1).zip(&list) {
        let cells: Vec<&str> = line.split(',').collect();
        let ours = [p.base_lr, p.warmup_fraction, p.beta1, p.beta2, p.weight_decay, p.dropout, p.label_smoothing];
        for (text, value) in cells[1..].iter().zip(ours) {
            ensure(text.parse::<f64>().ok() == Some(value), || format!("field {text} vs {value:?}"))?;
            fields += 1;
        }
    }
    ensure(fields == 35, || format!("compared {fields} fields"))?;
    Ok("35 fields identical".into())
}

fn greedy_vs_exhaustive() -> Outcome {
    let mut rng = rng(3);
    let params = CostParams::new(2.0).unwrap();
    let mut equal = 0;
    for case in 0..100 {
        let m = random_matrix(&mut rng, 8, 4, 0.35);
        let g = greedy_build(&m, 3, &params).map_err(|e| e.to_string())?;
        let e = exhaustive_build(&m, 3, &params, DEFAULT_ENUMERATION_CAP).map_err(|e| e.to_string())?;
        let gc = g.prefix_costs[2];
        ensure(e.cost <= gc || costs_tie(e.cost, gc), || format!("case {case}: exhaustive {} > greedy {gc}", e.cost))?;
        if costs_tie(e.cost, gc) {
            equal += 1;
        }
        let oracle = greedy_oracle(&m, 3, 2.0);
        ensure(g.entries == oracle, || format!("case {case}: greedy {:?} vs oracle {oracle:?}", g.entries))?;
        let (ids, cost) = exhaustive_oracle(&m, 3, 2.0);
        ensure(e.ids == ids && costs_tie(e.cost, cost), || format!("case {case}: exhaustive {:?} vs oracle {ids:?}", e.ids))?;
    }
    ensure(equal >= 1, || "greedy never matched exhaustive".into())?;
    Ok(format!("100 matrices, greedy optimal in {equal}"))
}

fn scoring_properties() -> Outcome {
    let mut rng = rng(4);
    for case in 0..1000 {
        let m = random_matrix(&mut rng, 6, 5, 0.4);
        let mut ids: Vec<PointId> = m.point_ids().collect();
        ids.shuffle(&mut rng);
        let len = rng.random_range(0..6);
        let list = &ids[..len];
        let extra = ids[len];
        let tau = 1.0 + rng.random::<f64>() * 3.0;
        let params = CostParams::new(tau).unwrap();
        let c: f64 = list_cost(&m, list, &params).unwrap();
        let mut grown = list.to_vec();
        grown.push(extra);
        let cg: f64 = list_cost(&m, &grown, &params).unwrap();
        ensure(cg <= c || costs_tie(cg, c), || format!("case {case}: growth raised cost {c} -> {cg}"))?;
        ensure(c > 0.0 && (c <= tau || costs_tie(c, tau)), || format!("case {case}: cost {c} outside (0, {tau}]"))?;
        let higher = CostParams::new(tau + 0.5).unwrap();
        let ch: f64 = list_cost(&m, list, &higher).unwrap();
        ensure(ch >= c || costs_tie(ch, c), || format!("case {case}: raising tau lowered cost {c} -> {ch}"))?;
        let mut perm = list.to_vec();
        perm.shuffle(&mut rng);
        let cp: f64 = list_cost(&m, &perm, &params).unwrap();
        ensure(cp == c, || format!("case {case}: permutation changed cost {c} -> {cp}"))?;
        let oracle = list_cost_oracle(&m, list, tau);
        ensure(((c - oracle) / oracle).abs() < 1e-12, || format!("case {case}: cost {c} vs oracle {oracle}"))?;
    }
    Ok("monotone, bounded, tau-monotone and permutation-invariant on 1000 matrices".into())
}

fn optimizer_oracle() -> Outcome {
    // f(p) = a/2 (p - c)^2
    let (a, c) = (3.0, 0.7);
    let grad = |p: f64| a * (p - c);
    let mut worst: f64 = 0.0;
    for &(b1, b2, wd) in &[(0.9, 0.999, 0.0), (0.95, 0.99, 0.1), (0.8, 0.9, 0.5)] {
        let cfg = NadamwConfig::new(b1, b2, wd);
        let (q, _) = nadamw_update(&[2.0], &[grad(2.0)], &OptimizerState::new(1), 0.01, &cfg).unwrap();
        let r = ScalarNadamw::new(b1, b2, wd).step(2.0, grad(2.0), 0.01);
        worst = worst.max((q[0] - r).abs());

        let sched = ScheduleSpec::new(0.05, 0.1, 100).unwrap();
        let mut p = [2.0];
        let mut s = OptimizerState::new(1);
        let mut reference = ScalarNadamw::new(b1, b2, wd);
        let mut rp = 2.0;
        for step in 0..100 {
            let lr = sched.lr(step).unwrap();
            let g = grad(p[0]);
            nadamw_step(&mut p, &[g], &mut s, lr, &cfg).unwrap();
            rp = reference.step(rp, grad(rp), lr);
            worst = worst.max((p[0] - rp).abs());
        }
    }
    ensure(worst < OPTIMIZER_TOL, || format!("max deviation {worst:e}"))?;
    let p = [1.25, -3.0];
    let (q, _) = nadamw_update(&p, &[0.0, 0.0], &OptimizerState::new(2), 0.1, &NadamwConfig::new(0.9, 0.999, 0.0)).unwrap();
    ensure(q == p, || format!("zero gradient moved params to {q:?}"))?;
    let (q, _) = nadamw_update(&p, &[0.0, 0.0], &OptimizerState::new(2), 0.1, &NadamwConfig::new(0.9, 0.999, 0.25)).unwrap();
    ensure(q[0] == p[0] - 0.1 * 0.25 * p[0] && q[1] == p[1] - 0.1 * 0.25 * p[1], || format!("pure decay gave {q:?}"))?;
    Ok(format!("max trajectory deviation {worst:.1e}; identities exact"))
}

fn schedule_endpoints() -> Outcome {
    let mut rng = rng(6);
    let mut worst: f64 = 0.0;
    for case in 0..50 {
        let base = 10f64.powf(rng.random_range(-5.0..0.0));
        let frac = rng.random_range(0.01..0.5);
        let total = rng.random_range(10u64..200_000);
        let Ok(spec) = ScheduleSpec::new(base, frac, total) else {
            return Err(format!("case {case}: spec rejected"));
        };
        let w = spec.warmup_steps();
        let ends = [spec.lr(0).unwrap(), spec.lr(w).unwrap() - base, spec.lr(total).unwrap()];
        let mid = rng.random_range(0..=total);
        let dev = (spec.lr(mid).unwrap() - schedule_oracle(base, frac, total, mid)).abs();
        worst = ends.iter().fold(worst, |acc, e| acc.max(e.abs())).max(dev);
        ensure(worst < SCHEDULE_TOL, || format!("case {case}: deviation {worst:e}"))?;
    }
    Ok(format!("50 specs, max deviation {worst:.1e}"))
}

struct Bench {
    matrix: TrialMatrix,
    directions: Vec<MetricDirection>,
}

fn bench() -> Result<Bench, String> {
    let points = sample(&default_space(), 200, 0).map_err(|e| e.to_string())?;
    let specs = builtin_workloads();
    let trials = run_grid(&specs, &points).map_err(|e| e.to_string())?;
    let matrix = matrix_from_trials(&specs, points, &trials).map_err(|e| e.to_string())?;
    Ok(Bench {
        matrix,
        directions: specs.iter().map(|s| s.metric_direction).collect(),
    })
}

fn bench_checks(gate: &mut Gate) {
    let start = Instant::now();
    let b = match bench() {
        Ok(b) => b,
        Err(e) => {
            gate.check("7", "bench", Duration::MAX, || Err(e));
            return;
        }
    };
    let m = &b.matrix;
    let params = CostParams::new(2.0).unwrap();
    let minutes = Duration::from_secs(30 * 60);
    gate.check("7.cal", "bench calibration regime", minutes, || {
        let counts: Vec<usize> = m.transfer_counts().iter().map(|t| t.successes).collect();
        ensure(counts.iter().all(|c| (10..=30).contains(c)), || format!("successes per workload {counts:?}"))?;
        Ok(format!("successes per workload {counts:?} out of 200"))
    });
    gate.check("7.q", "calibration to 24 of 200", minutes, || {
        let spec: Vec<_> = builtin_workloads().into_iter().filter(|s| s.id == "logreg").collect();
        let (_, rows) = calibrate_targets(&spec, m.points(), 0.12).map_err(|e| e.to_string())?;
        let n = rows[0].successes;
        ensure(n == 24, || format!("{n} successes"))?;
        Ok(format!("{n} of 200 points reach the calibrated logreg target"))
    });
    gate.check("7.i", "held-out successes at K=5", minutes, || {
        let folds = leave_one_out(m, 5, &params).map_err(|e| e.to_string())?;
        let n = heldout_successes(&folds);
        ensure(n >= 6, || format!("{n} of 8"))?;
        Ok(format!("{n} of 8 held-out workloads reached"))
    });
    gate.check("7.ii", "penalty ablation", minutes, || {
        let rows = ablate_penalty(m, 5, &[1.0, 2.0]).map_err(|e| e.to_string())?;
        let (one, two) = (rows[0].successes, rows[1].successes);
        ensure(two >= one, || format!("tau=2: {two} < tau=1: {one}"))?;
        Ok(format!("tau=1: {one}, tau=2: {two}"))
    });
    gate.check("7.iii", "list-size sweep reaches every workload", minutes, || {
        let rows = size_sweep(m, 8, &params).map_err(|e| e.to_string())?;
        let counts: Vec<usize> = rows.iter().map(|r| r.successes).collect();
        let k = rows.iter().find(|r| r.successes == m.num_workloads()).map(|r| r.k);
        let k = k.ok_or_else(|| format!("successes by K {counts:?}"))?;
        let costs: Vec<f64> = rows.iter().map(|r| r.mean_heldout_cost).collect();
        ensure(costs.windows(2).all(|w| w[1] <= w[0]), || format!("mean held-out cost by K {costs:?}"))?;
        Ok(format!("all 8 reached at K={k}; successes by K {counts:?}"))
    });
    gate.check("7.iv", "list vs random-search tuning curves", minutes, || {
        let folds = leave_one_out_directed(m, 5, &params, &b.directions).map_err(|e| e.to_string())?;
        let (mut at5, mut at15) = (0, 0);
        for (w, fold) in folds.iter().enumerate() {
            let dir = b.directions[w];
            let curve = tuning_curve(&m.column_metrics(w), 15, DEFAULT_CONFIDENCE, dir).map_err(|e| e.to_string())?;
            at5 += usize::from(!dir.better(curve.at(5).unwrap(), fold.best_metric));
            at15 += usize::from(!dir.better(curve.at(15).unwrap(), fold.best_metric));
        }
        ensure(at5 >= 5 && at15 >= 3, || format!("budget 5: {at5}, budget 15: {at15}"))?;
        Ok(format!("at least as good as central(5) on {at5}/8, central(15) on {at15}/8"))
    });
    let elapsed = start.elapsed();
    gate.check("7", "bench runtime", minutes, || Ok(format!("bench and analyses in {elapsed:.1?}")));
}

fn tuning_curve_oracle() -> Outcome {
    let scores: Vec<Ratio<i64>> = [4, 3, 2, 1].iter().map(|&x| Ratio::from_integer(x)).collect();
    let mut sum = Ratio::from_integer(0);
    for a in &scores {
        for b in &scores {
            for c in &scores {
                for d in &scores {
                    sum += *a.min(b).min(c).min(d);
                }
            }
        }
    }
    let enumerated = sum / Ratio::from_integer(256);
    let closed = expected_best(&scores, 4, MetricDirection::Minimize).map_err(|e| e.to_string())?;
    ensure(closed == enumerated, || format!("{closed} vs {enumerated}"))?;
    let float = expected_best(&[4.0, 3.0, 2.0, 1.0], 4, MetricDirection::Minimize).map_err(|e| e.to_string())?;
    ensure(float == 354.0 / 256.0, || format!("f64 closed form {float}"))?;
    Ok(format!("expected best of 4 = {enumerated} by enumeration and closed form"))
}

fn loo_hygiene() -> Outcome {
    let mut rng = rng(9);
    let params = CostParams::new(2.0).unwrap();
    for case in 0..20 {
        let m = random_matrix(&mut rng, 10, 5, 0.35);
        let base = leave_one_out(&m, 3, &params).map_err(|e| e.to_string())?;
        for w in 0..m.num_workloads() {
            let id = m.workloads()[w].id.clone();
            let budget = m.workloads()[w].budget;
            let perturbed = m
                .map_column(&id, |_, _| Cell {
                    first_target_step: if rng.random::<bool>() {
                        TargetStep::At(rng.random_range(1..=budget))
                    } else {
                        TargetStep::Never
                    },
                    best_metric: rng.random(),
                })
                .map_err(|e| e.to_string())?;
            let again = leave_one_out(&perturbed, 3, &params).map_err(|e| e.to_string())?;
            ensure(again[w].list.entries == base[w].list.entries, || {
                format!("case {case}, held-out {id}: list changed")
            })?;
        }
    }
    Ok("20 matrices, every fold's list unchanged".into())
}

fn main() -> ExitCode {
    let mut gate = Gate { failures: 0 };
    let second = Duration::from_secs(1);
    let ten = Duration::from_secs(10);
    gate.check("1", "cost golden value", second, cost_golden);
    gate.check("2", "bundled list fidelity", second, table_fidelity);
    gate.check("3", "greedy vs exhaustive oracle", ten, greedy_vs_exhaustive);
    gate.check("4", "scoring properties", ten, scoring_properties);
    gate.check("5", "optimizer oracle", second, optimizer_oracle);
    gate.check("6", "schedule endpoints", second, schedule_endpoints);
    bench_checks(&mut gate);
    gate.check("8", "tuning-curve oracle", second, tuning_curve_oracle);
    gate.check("9", "leave-one-out hygiene", ten, loo_hygiene);
    if gate.failures == 0 {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {} criteria failed", gate.failures);
        ExitCode::FAILURE
    }
}
