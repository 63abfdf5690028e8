//! Independent reference implementations used by the integration tests.
#![allow(dead_code)]

use hplist::hpspace::{default_space, sample};
use hplist::trialstore::{Cell, TargetStep, TrialMatrix, WorkloadInfo};
use hplist::PointId;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Cost as a plain product: `(prod_i min(f_i, tau))^(1/N)`, where `None`
/// means the target was never reached.
pub fn cost_oracle(fractions: &[Option<f64>], tau: f64) -> f64 {
    if fractions.is_empty() {
        return tau;
    }
    let product: f64 = fractions.iter().map(|f| f.map_or(tau, |f| f.min(tau))).product();
    product.powf(1.0 / fractions.len() as f64)
}

/// Step fractions of a list on a matrix, straight from the cells.
pub fn fractions(m: &TrialMatrix, list: &[PointId]) -> Vec<Option<f64>> {
    (0..m.num_workloads())
        .map(|w| {
            let budget = m.workloads()[w].budget as f64;
            list.iter()
                .filter_map(|&id| m.cell(m.point_index(id).unwrap(), w).first_target_step.step())
                .min()
                .map(|s| s as f64 / budget)
        })
        .collect()
}

pub fn list_cost_oracle(m: &TrialMatrix, list: &[PointId], tau: f64) -> f64 {
    if list.is_empty() {
        return tau;
    }
    cost_oracle(&fractions(m, list), tau)
}

fn ties(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs())
}

/// Greedy list by trying every extension each round; ties to the smaller id.
pub fn greedy_oracle(m: &TrialMatrix, k: usize, tau: f64) -> Vec<PointId> {
    let ids: Vec<PointId> = m.point_ids().collect();
    let mut list = Vec::new();
    for _ in 0..k {
        let scored: Vec<(f64, PointId)> = ids
            .iter()
            .filter(|id| !list.contains(*id))
            .map(|&id| {
                let mut ext = list.clone();
                ext.push(id);
                (list_cost_oracle(m, &ext, tau), id)
            })
            .collect();
        let min = scored.iter().map(|s| s.0).fold(f64::INFINITY, f64::min);
        let pick = scored
            .iter()
            .filter(|s| s.0 <= min || ties(s.0, min))
            .map(|s| s.1)
            .min()
            .unwrap();
        list.push(pick);
    }
    list
}

/// Cheapest `k`-subset by recursion over sorted ids.
pub fn exhaustive_oracle(m: &TrialMatrix, k: usize, tau: f64) -> (Vec<PointId>, f64) {
    fn go(ids: &[PointId], k: usize, start: usize, cur: &mut Vec<PointId>, m: &TrialMatrix, tau: f64, best: &mut Option<(Vec<PointId>, f64)>) {
        if cur.len() == k {
            let c = list_cost_oracle(m, cur, tau);
            if best.as_ref().is_none_or(|(_, b)| c < *b && !ties(c, *b)) {
                *best = Some((cur.clone(), c));
            }
            return;
        }
        for i in start..ids.len() {
            cur.push(ids[i]);
            go(ids, k, i + 1, cur, m, tau, best);
            cur.pop();
        }
    }
    let mut ids: Vec<PointId> = m.point_ids().collect();
    ids.sort();
    let mut best = None;
    go(&ids, k, 0, &mut Vec::new(), m, tau, &mut best);
    best.unwrap()
}

/// Random matrix: each cell reaches its target with probability `p_reach`
/// at a uniform step in `1..=budget`.
pub fn random_matrix(rng: &mut ChaCha8Rng, points: usize, workloads: usize, p_reach: f64) -> TrialMatrix {
    let pts = sample(&default_space(), points, rng.random()).unwrap();
    let infos: Vec<WorkloadInfo> = (0..workloads)
        .map(|w| WorkloadInfo {
            id: format!("w{w}"),
            budget: [50u64, 100, 1000, 4096][rng.random_range(0..4)],
        })
        .collect();
    let mut cells = Vec::with_capacity(points * workloads);
    for _ in 0..points {
        for info in &infos {
            let first_target_step = if rng.random::<f64>() < p_reach {
                TargetStep::At(rng.random_range(1..=info.budget))
            } else {
                TargetStep::Never
            };
            cells.push(Cell {
                first_target_step,
                best_metric: rng.random(),
            });
        }
    }
    TrialMatrix::new(pts, infos, cells).unwrap()
}

/// NAdamW for a single scalar parameter, written from the update equations.
pub struct ScalarNadamw {
    pub b1: f64,
    pub b2: f64,
    pub eps: f64,
    pub wd: f64,
    pub m: f64,
    pub v: f64,
    pub t: i32,
}

impl ScalarNadamw {
    pub fn new(b1: f64, b2: f64, wd: f64) -> Self {
        Self { b1, b2, eps: 1e-8, wd, m: 0.0, v: 0.0, t: 0 }
    }

    pub fn step(&mut self, p: f64, g: f64, lr: f64) -> f64 {
        self.t += 1;
        self.m = self.b1 * self.m + (1.0 - self.b1) * g;
        self.v = self.b2 * self.v + (1.0 - self.b2) * g * g;
        let m_next = self.m / (1.0 - self.b1.powi(self.t + 1));
        let g_hat = g / (1.0 - self.b1.powi(self.t));
        let nesterov = self.b1 * m_next + (1.0 - self.b1) * g_hat;
        let v_hat = self.v / (1.0 - self.b2.powi(self.t));
        p - lr * (nesterov / (v_hat.sqrt() + self.eps) + self.wd * p)
    }
}

/// Warmup/cosine schedule from its definition.
pub fn schedule_oracle(base: f64, warmup_fraction: f64, total: u64, step: u64) -> f64 {
    let w = ((warmup_fraction * total as f64).round() as u64).max(1);
    if step < w {
        base * step as f64 / w as f64
    } else {
        let p = (step - w) as f64 / (total - w) as f64;
        base * 0.5 * (1.0 + (std::f64::consts::PI * p).cos())
    }
}
