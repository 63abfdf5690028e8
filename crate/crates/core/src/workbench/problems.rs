//! Synthetic datasets and the models trained on them.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::nadamw::smooth_labels;
use crate::seeds;

/// Per-trial training context: the minibatch/dropout stream and the
/// regularisation hyperparameters the model honours.
pub(crate) struct StepCtx {
    pub rng: ChaCha8Rng,
    pub label_smoothing: f64,
    pub dropout: f64,
}

pub(crate) trait Problem: Send + Sync {
    fn init(&self, rng: &mut ChaCha8Rng) -> Vec<f64>;
    /// Minibatch training loss; writes the gradient into `grad`.
    fn loss_grad(&self, params: &[f64], grad: &mut [f64], ctx: &mut StepCtx) -> f64;
    /// Validation metric of `params`.
    fn metric(&self, params: &[f64]) -> f64;
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn batch_indices(rng: &mut ChaCha8Rng, n: usize, size: usize) -> Vec<usize> {
    (0..size).map(|_| rng.random_range(0..n)).collect()
}

// ---------------------------------------------------------------------------
// Quadratic bowl

/// `floor + sum(l_i (x_i - o_i)^2) / 2` with gradient noise scaled by
/// `sqrt(l_i)` per coordinate.
pub(crate) struct Bowl {
    curvature: Vec<f64>,
    optimum: Vec<f64>,
    start: Vec<f64>,
    pub floor: f64,
    noise: f64,
}

impl Bowl {
    pub const DIM: usize = 12;
    pub const FLOOR: f64 = 1.0;
    pub const START_EXCESS: f64 = 0.5;

    pub fn new(seed: u64) -> Self {
        let mut rng = seeds::rng(seed, "data", 0);
        let d = Self::DIM;
        // Curvatures log-spaced over eight decades.
        let curvature: Vec<f64> = (0..d)
            .map(|i| 10f64.powf(8.0 * i as f64 / (d - 1) as f64))
            .collect();
        let optimum: Vec<f64> = (0..d).map(|_| normal(&mut rng)).collect();
        // Each coordinate starts with an equal share of the initial excess.
        let excess = Self::START_EXCESS;
        let start = curvature
            .iter()
            .zip(&optimum)
            .map(|(&l, &x)| {
                let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                x + sign * (2.0 * excess / (d as f64 * l)).sqrt()
            })
            .collect();
        Self {
            curvature,
            optimum,
            start,
            floor: Self::FLOOR,
            noise: 1.0,
        }
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.floor
            + 0.5
                * x.iter()
                    .zip(&self.optimum)
                    .zip(&self.curvature)
                    .map(|((x, o), l)| l * (x - o) * (x - o))
                    .sum::<f64>()
    }
}

impl Problem for Bowl {
    fn init(&self, _rng: &mut ChaCha8Rng) -> Vec<f64> {
        self.start.clone()
    }

    fn loss_grad(&self, x: &[f64], grad: &mut [f64], ctx: &mut StepCtx) -> f64 {
        for i in 0..x.len() {
            grad[i] = self.curvature[i] * (x[i] - self.optimum[i]);
            grad[i] += self.noise * self.curvature[i].sqrt() * normal(&mut ctx.rng);
        }
        self.value(x)
    }

    fn metric(&self, x: &[f64]) -> f64 {
        self.value(x)
    }
}

// ---------------------------------------------------------------------------
// Linear regression

struct Regression {
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
}

pub(crate) struct LinReg {
    train: Regression,
    val: Regression,
    batch: usize,
}

impl LinReg {
    const DIM: usize = 16;

    pub fn new(seed: u64) -> Self {
        let mut rng = seeds::rng(seed, "data", 0);
        let d = Self::DIM;
        let scales: Vec<f64> = (0..d)
            .map(|i| 0.3 * 10f64.powf(i as f64 / (d - 1) as f64))
            .collect();
        let w: Vec<f64> = (0..d).map(|_| 0.25 * normal(&mut rng)).collect();
        let mut draw = |n: usize| {
            let mut x = Vec::with_capacity(n);
            let mut y = Vec::with_capacity(n);
            for _ in 0..n {
                let row: Vec<f64> = scales.iter().map(|s| s * normal(&mut rng)).collect();
                let clean: f64 = row.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() + 0.25;
                y.push(clean + 2.0 * normal(&mut rng));
                x.push(row);
            }
            Regression { x, y }
        };
        let train = draw(128);
        let val = draw(1000);
        Self {
            train,
            val,
            batch: 16,
        }
    }

    fn predict(params: &[f64], x: &[f64]) -> f64 {
        let d = x.len();
        params[..d].iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + params[d]
    }
}

impl Problem for LinReg {
    fn init(&self, _rng: &mut ChaCha8Rng) -> Vec<f64> {
        vec![0.0; Self::DIM + 1]
    }

    fn loss_grad(&self, params: &[f64], grad: &mut [f64], ctx: &mut StepCtx) -> f64 {
        grad.fill(0.0);
        let d = Self::DIM;
        let idx = batch_indices(&mut ctx.rng, self.train.y.len(), self.batch);
        let scale = 1.0 / idx.len() as f64;
        let mut loss = 0.0;
        for i in idx {
            let x = &self.train.x[i];
            let r = Self::predict(params, x) - self.train.y[i];
            loss += 0.5 * r * r * scale;
            for j in 0..d {
                grad[j] += r * x[j] * scale;
            }
            grad[d] += r * scale;
        }
        loss
    }

    /// Validation R².
    fn metric(&self, params: &[f64]) -> f64 {
        let n = self.val.y.len() as f64;
        let mean = self.val.y.iter().sum::<f64>() / n;
        let mut sse = 0.0;
        let mut sst = 0.0;
        for (x, &y) in self.val.x.iter().zip(&self.val.y) {
            let r = Self::predict(params, x) - y;
            sse += r * r;
            sst += (y - mean) * (y - mean);
        }
        1.0 - sse / sst
    }
}

// ---------------------------------------------------------------------------
// Classifiers: softmax regression or a one-hidden-layer MLP.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Activation {
    Relu,
    Tanh,
}

struct Labeled {
    x: Vec<Vec<f64>>,
    y: Vec<usize>,
}

pub(crate) struct Classifier {
    inputs: usize,
    hidden: Option<(usize, Activation)>,
    classes: usize,
    train: Labeled,
    val: Labeled,
    batch: usize,
    uses_dropout: bool,
}

struct Layout {
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
    len: usize,
}

fn log_softmax_ce(logits: &[f64], target: &[f64], dlogits: &mut [f64]) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = logits.iter().map(|l| (l - max).exp()).sum();
    let lse = max + z.ln();
    let mut loss = 0.0;
    for k in 0..logits.len() {
        let p = (logits[k] - lse).exp();
        loss -= target[k] * (logits[k] - lse);
        dlogits[k] = p - target[k];
    }
    loss
}

impl Classifier {
    fn layout(&self) -> Layout {
        match self.hidden {
            Some((h, _)) => {
                let w1 = 0;
                let b1 = w1 + h * self.inputs;
                let w2 = b1 + h;
                let b2 = w2 + self.classes * h;
                Layout { w1, b1, w2, b2, len: b2 + self.classes }
            }
            None => {
                let w2 = 0;
                let b2 = self.classes * self.inputs;
                Layout { w1: 0, b1: 0, w2, b2, len: b2 + self.classes }
            }
        }
    }

    /// Forward pass into `logits`. `act` receives the hidden activations
    /// before dropout, `hidden` after it.
    fn forward(
        &self,
        p: &[f64],
        x: &[f64],
        mask: Option<&[f64]>,
        act: &mut Vec<f64>,
        hidden: &mut Vec<f64>,
        logits: &mut [f64],
    ) {
        let l = self.layout();
        let features: &[f64] = match self.hidden {
            Some((h, kind)) => {
                act.clear();
                hidden.clear();
                for j in 0..h {
                    let row = &p[l.w1 + j * self.inputs..l.w1 + (j + 1) * self.inputs];
                    let a = row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + p[l.b1 + j];
                    let u = match kind {
                        Activation::Relu => a.max(0.0),
                        Activation::Tanh => a.tanh(),
                    };
                    act.push(u);
                    let mut u = u;
                    if let Some(m) = mask {
                        u *= m[j];
                    }
                    hidden.push(u);
                }
                hidden
            }
            None => x,
        };
        let width = features.len();
        for k in 0..self.classes {
            let row = &p[l.w2 + k * width..l.w2 + (k + 1) * width];
            logits[k] = row.iter().zip(features).map(|(w, v)| w * v).sum::<f64>() + p[l.b2 + k];
        }
    }
}

impl Problem for Classifier {
    fn init(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let l = self.layout();
        let mut p = vec![0.0; l.len];
        if let Some((h, _)) = self.hidden {
            let n1 = Normal::new(0.0, (2.0 / self.inputs as f64).sqrt()).expect("positive sd");
            for w in &mut p[l.w1..l.w1 + h * self.inputs] {
                *w = n1.sample(rng);
            }
            let n2 = Normal::new(0.0, (1.0 / h as f64).sqrt()).expect("positive sd");
            for w in &mut p[l.w2..l.b2] {
                *w = n2.sample(rng);
            }
        }
        p
    }

    fn loss_grad(&self, p: &[f64], grad: &mut [f64], ctx: &mut StepCtx) -> f64 {
        grad.fill(0.0);
        let l = self.layout();
        let c = self.classes;
        let targets: Vec<Vec<f64>> = (0..c)
            .map(|k| {
                let mut onehot = vec![0.0; c];
                onehot[k] = 1.0;
                smooth_labels(&onehot, ctx.label_smoothing).expect("smoothing validated with the point")
            })
            .collect();
        let idx = batch_indices(&mut ctx.rng, self.train.y.len(), self.batch);
        let scale = 1.0 / idx.len() as f64;
        let (mut act, mut hidden) = (Vec::new(), Vec::new());
        let mut logits = vec![0.0; c];
        let mut dlogits = vec![0.0; c];
        let mut mask = Vec::new();
        let mut loss = 0.0;
        for i in idx {
            let x = &self.train.x[i];
            let mask = match self.hidden {
                Some((h, _)) if self.uses_dropout && ctx.dropout > 0.0 => {
                    let keep = 1.0 - ctx.dropout;
                    mask.clear();
                    mask.extend((0..h).map(|_| {
                        if ctx.rng.random::<f64>() < keep {
                            1.0 / keep
                        } else {
                            0.0
                        }
                    }));
                    Some(mask.as_slice())
                }
                _ => None,
            };
            self.forward(p, x, mask, &mut act, &mut hidden, &mut logits);
            loss += scale * log_softmax_ce(&logits, &targets[self.train.y[i]], &mut dlogits);
            let features: &[f64] = if self.hidden.is_some() { &hidden } else { x };
            let width = features.len();
            for k in 0..c {
                let g = dlogits[k] * scale;
                grad[l.b2 + k] += g;
                for (gw, f) in grad[l.w2 + k * width..l.w2 + (k + 1) * width].iter_mut().zip(features) {
                    *gw += g * f;
                }
            }
            if let Some((h, kind)) = self.hidden {
                for j in 0..h {
                    let mut back: f64 = (0..c).map(|k| dlogits[k] * p[l.w2 + k * h + j]).sum::<f64>() * scale;
                    if let Some(m) = mask {
                        back *= m[j];
                    }
                    back *= match kind {
                        Activation::Relu => f64::from(u8::from(act[j] > 0.0)),
                        Activation::Tanh => 1.0 - act[j] * act[j],
                    };
                    grad[l.b1 + j] += back;
                    for (gw, v) in grad[l.w1 + j * self.inputs..l.w1 + (j + 1) * self.inputs].iter_mut().zip(x) {
                        *gw += back * v;
                    }
                }
            }
        }
        loss
    }

    /// Mean validation cross-entropy against clean labels, without dropout.
    fn metric(&self, p: &[f64]) -> f64 {
        let c = self.classes;
        let (mut act, mut hidden) = (Vec::new(), Vec::new());
        let mut logits = vec![0.0; c];
        let mut scratch = vec![0.0; c];
        let mut onehot = vec![0.0; c];
        let mut total = 0.0;
        for (x, &y) in self.val.x.iter().zip(&self.val.y) {
            self.forward(p, x, None, &mut act, &mut hidden, &mut logits);
            onehot.fill(0.0);
            onehot[y] = 1.0;
            total += log_softmax_ce(&logits, &onehot, &mut scratch);
        }
        total / self.val.y.len() as f64
    }
}

fn two_moons(rng: &mut ChaCha8Rng, n: usize, noise: f64) -> Labeled {
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let label = i % 2;
        let t = std::f64::consts::PI * rng.random::<f64>();
        let (a, b) = if label == 0 {
            (t.cos(), t.sin())
        } else {
            (1.0 - t.cos(), 0.5 - t.sin())
        };
        x.push(vec![a + noise * normal(rng), b + noise * normal(rng)]);
        y.push(label);
    }
    Labeled { x, y }
}

fn blobs(rng: &mut ChaCha8Rng, centers: &[Vec<f64>], n: usize, spread: f64) -> Labeled {
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let label = i % centers.len();
        x.push(centers[label].iter().map(|c| c + spread * normal(rng)).collect());
        y.push(label);
    }
    Labeled { x, y }
}

fn random_centers(rng: &mut ChaCha8Rng, count: usize, dim: usize, scale: f64) -> Vec<Vec<f64>> {
    (0..count)
        .map(|_| (0..dim).map(|_| scale * normal(rng)).collect())
        .collect()
}

impl Classifier {
    pub fn logreg(seed: u64) -> Self {
        let mut rng = seeds::rng(seed, "data", 0);
        let d = 8;
        let mu: Vec<f64> = (0..d).map(|_| 0.35 * normal(&mut rng)).collect();
        let centers = vec![mu.clone(), mu.iter().map(|m| -m).collect()];
        Self {
            inputs: d,
            hidden: None,
            classes: 2,
            train: blobs(&mut rng, &centers, 256, 1.0),
            val: blobs(&mut rng, &centers, 512, 1.0),
            batch: 32,
            uses_dropout: false,
        }
    }

    pub fn moons(seed: u64, activation: Activation) -> Self {
        let mut rng = seeds::rng(seed, "data", 0);
        Self {
            inputs: 2,
            hidden: Some((16, activation)),
            classes: 2,
            train: two_moons(&mut rng, 256, 0.25),
            val: two_moons(&mut rng, 512, 0.25),
            batch: 32,
            uses_dropout: true,
        }
    }

    pub fn softmax10(seed: u64) -> Self {
        let mut rng = seeds::rng(seed, "data", 0);
        let centers = random_centers(&mut rng, 10, 16, 0.6);
        Self {
            inputs: 16,
            hidden: None,
            classes: 10,
            train: blobs(&mut rng, &centers, 500, 1.0),
            val: blobs(&mut rng, &centers, 500, 1.0),
            batch: 32,
            uses_dropout: false,
        }
    }

    /// Four classes with a fraction of training labels resampled uniformly.
    pub fn noisy_mlp(seed: u64) -> Self {
        let mut rng = seeds::rng(seed, "data", 0);
        let centers = random_centers(&mut rng, 4, 6, 1.0);
        let mut train = blobs(&mut rng, &centers, 400, 1.0);
        for y in &mut train.y {
            if rng.random::<f64>() < 0.3 {
                *y = rng.random_range(0..4);
            }
        }
        Self {
            inputs: 6,
            hidden: Some((16, Activation::Relu)),
            classes: 4,
            train,
            val: blobs(&mut rng, &centers, 500, 1.0),
            batch: 32,
            uses_dropout: true,
        }
    }
}

// ---------------------------------------------------------------------------
// Matrix factorisation

pub(crate) struct MatFact {
    rows: usize,
    cols: usize,
    train: Vec<(usize, usize, f64)>,
    val: Vec<(usize, usize, f64)>,
}

impl MatFact {
    const RANK: usize = 4;

    pub fn new(seed: u64) -> Self {
        let mut rng = seeds::rng(seed, "data", 0);
        let (rows, cols, true_rank) = (20, 16, 3);
        let a: Vec<f64> = (0..rows * true_rank).map(|_| normal(&mut rng)).collect();
        let b: Vec<f64> = (0..cols * true_rank).map(|_| normal(&mut rng)).collect();
        let mut entries = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                let clean: f64 = (0..true_rank).map(|r| a[i * true_rank + r] * b[j * true_rank + r]).sum();
                entries.push((i, j, clean + 0.3 * normal(&mut rng)));
            }
        }
        entries.shuffle(&mut rng);
        let val = entries.split_off(entries.len() * 7 / 10);
        Self {
            rows,
            cols,
            train: entries,
            val,
        }
    }

    fn predict(&self, p: &[f64], i: usize, j: usize) -> f64 {
        let r = Self::RANK;
        let v0 = self.rows * r;
        (0..r).map(|k| p[i * r + k] * p[v0 + j * r + k]).sum()
    }

    fn mse(&self, p: &[f64], entries: &[(usize, usize, f64)]) -> f64 {
        entries
            .iter()
            .map(|&(i, j, m)| (self.predict(p, i, j) - m).powi(2))
            .sum::<f64>()
            / entries.len() as f64
    }
}

impl Problem for MatFact {
    fn init(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..(self.rows + self.cols) * Self::RANK)
            .map(|_| 0.3 * normal(rng))
            .collect()
    }

    fn loss_grad(&self, p: &[f64], grad: &mut [f64], _ctx: &mut StepCtx) -> f64 {
        grad.fill(0.0);
        let r = Self::RANK;
        let v0 = self.rows * r;
        let scale = 1.0 / self.train.len() as f64;
        let mut loss = 0.0;
        for &(i, j, m) in &self.train {
            let e = self.predict(p, i, j) - m;
            loss += 0.5 * e * e * scale;
            for k in 0..r {
                grad[i * r + k] += e * p[v0 + j * r + k] * scale;
                grad[v0 + j * r + k] += e * p[i * r + k] * scale;
            }
        }
        loss
    }

    /// Mean squared error on held-out entries.
    fn metric(&self, p: &[f64]) -> f64 {
        self.mse(p, &self.val)
    }
}
