//! Small feed-forward networks trained with Levenberg-Marquardt.
//!
//! Parameters are flattened layer by layer: the weight matrix (row-major,
//! `out x in`), then the bias vector. Inputs and the target are mapped to
//! [-1, 1] before training and all errors are measured in that space.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NnError {
    #[error("feature {feature} has a degenerate range [{min}, {max}]")]
    DegenerateRange { feature: usize, min: f64, max: f64 },
    #[error("dataset has {rows} rows, need at least {min}")]
    TooSmall { rows: usize, min: usize },
    #[error("input has {found} features, network expects {expected}")]
    InputSize { found: usize, expected: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Tanh,
    Logistic,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Logistic => 1.0 / (1.0 + (-z).exp()),
        }
    }

    /// Derivative expressed through the activation value.
    fn slope(self, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Logistic => a * (1.0 - a),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    /// Layer widths including input and output.
    pub layers: Vec<usize>,
    pub activation: Activation,
}

/// Hidden layer width used throughout.
pub const HIDDEN: usize = 10;

impl MlpSpec {
    /// `[n_in, 10, 10, 1]` with tanh hidden units.
    pub fn standard(n_in: usize) -> MlpSpec {
        MlpSpec { layers: vec![n_in, HIDDEN, HIDDEN, 1], activation: Activation::Tanh }
    }

    pub fn n_in(&self) -> usize {
        self.layers[0]
    }

    pub fn n_params(&self) -> usize {
        self.layers.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    pub fn check(&self) -> Result<(), NnError> {
        if self.layers.len() < 2 || self.layers.contains(&0) || *self.layers.last().unwrap() != 1 {
            return Err(NnError::Config(format!("bad layer sizes {:?}", self.layers)));
        }
        Ok(())
    }
}

/// Per-feature affine map `(x - center) / half_range`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub center: Vec<f64>,
    pub half_range: Vec<f64>,
}

impl Normalization {
    pub fn identity(n: usize) -> Normalization {
        Normalization { center: vec![0.0; n], half_range: vec![1.0; n] }
    }

    /// Map each feature's [min, max] to [-1, 1]. `rows` are feature vectors.
    pub fn fit<'a>(rows: impl IntoIterator<Item = &'a [f64]>, n: usize) -> Result<Normalization, NnError> {
        let (lo, hi) = min_max(rows, n);
        for f in 0..n {
            if !(hi[f] > lo[f]) {
                return Err(NnError::DegenerateRange { feature: f, min: lo[f], max: hi[f] });
            }
        }
        Ok(Normalization {
            center: (0..n).map(|f| (hi[f] + lo[f]) / 2.0).collect(),
            half_range: (0..n).map(|f| (hi[f] - lo[f]) / 2.0).collect(),
        })
    }

    /// As [`Normalization::fit`], but a constant feature is only centred.
    pub fn fit_or_center<'a>(rows: impl IntoIterator<Item = &'a [f64]>, n: usize) -> Normalization {
        let (lo, hi) = min_max(rows, n);
        Normalization {
            center: (0..n).map(|f| (hi[f] + lo[f]) / 2.0).collect(),
            half_range: (0..n).map(|f| if hi[f] > lo[f] { (hi[f] - lo[f]) / 2.0 } else { 1.0 }).collect(),
        }
    }

    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = (x[i] - self.center[i]) / self.half_range[i];
        }
    }

    pub fn apply1(&self, x: f64) -> f64 {
        (x - self.center[0]) / self.half_range[0]
    }

    pub fn invert1(&self, z: f64) -> f64 {
        z * self.half_range[0] + self.center[0]
    }

    pub fn invert(&self, z: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = z[i] * self.half_range[i] + self.center[i];
        }
    }

    /// Original-unit range seen during fitting.
    pub fn range(&self, feature: usize) -> (f64, f64) {
        (self.center[feature] - self.half_range[feature], self.center[feature] + self.half_range[feature])
    }
}

fn min_max<'a>(rows: impl IntoIterator<Item = &'a [f64]>, n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut lo = vec![f64::INFINITY; n];
    let mut hi = vec![f64::NEG_INFINITY; n];
    for r in rows {
        for f in 0..n {
            lo[f] = lo[f].min(r[f]);
            hi[f] = hi[f].max(r[f]);
        }
    }
    (lo, hi)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub spec: MlpSpec,
    pub weights: Vec<f64>,
    pub input_norm: Normalization,
    pub output_norm: Normalization,
}

impl Mlp {
    pub fn zeros(spec: MlpSpec) -> Mlp {
        let n = spec.n_params();
        let n_in = spec.n_in();
        Mlp { spec, weights: vec![0.0; n], input_norm: Normalization::identity(n_in), output_norm: Normalization::identity(1) }
    }

    /// Uniform initialisation in `[-0.5, 0.5] * 2 / sqrt(fan_in)`.
    pub fn init(spec: MlpSpec, seed: u64) -> Mlp {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut net = Mlp::zeros(spec);
        let mut k = 0;
        for w in net.spec.layers.clone().windows(2) {
            let scale = 2.0 / (w[0] as f64).sqrt();
            for _ in 0..w[0] * w[1] + w[1] {
                net.weights[k] = rng.random_range(-0.5..0.5) * scale;
                k += 1;
            }
        }
        net
    }

    /// Output for an already normalized input.
    pub fn forward_normalized(&self, z: &[f64]) -> f64 {
        let mut a = z.to_vec();
        let mut k = 0;
        let n_layers = self.spec.layers.len() - 1;
        for (l, w) in self.spec.layers.windows(2).enumerate() {
            let (n_in, n_out) = (w[0], w[1]);
            let (wm, rest) = self.weights[k..].split_at(n_in * n_out);
            let b = &rest[..n_out];
            let mut next = vec![0.0; n_out];
            for (i, o) in next.iter_mut().enumerate() {
                let row = &wm[i * n_in..(i + 1) * n_in];
                let s = b[i] + row.iter().zip(&a).map(|(x, y)| x * y).sum::<f64>();
                *o = if l + 1 < n_layers { self.spec.activation.apply(s) } else { s };
            }
            a = next;
            k += n_in * n_out + n_out;
        }
        a[0]
    }

    /// Denormalized output.
    pub fn forward(&self, x: &[f64]) -> f64 {
        let mut z = vec![0.0; x.len()];
        self.input_norm.apply(x, &mut z);
        self.output_norm.invert1(self.forward_normalized(&z))
    }

    /// Output and its gradient with respect to all parameters, for a
    /// normalized input. `grad` must have `n_params` entries.
    fn forward_grad(&self, z: &[f64], grad: &mut [f64], acts: &mut Vec<Vec<f64>>) -> f64 {
        let layers = &self.spec.layers;
        let n_layers = layers.len() - 1;
        acts.clear();
        acts.push(z.to_vec());
        let mut offsets = Vec::with_capacity(n_layers);
        let mut k = 0;
        for (l, w) in layers.windows(2).enumerate() {
            let (n_in, n_out) = (w[0], w[1]);
            offsets.push(k);
            let wm = &self.weights[k..k + n_in * n_out];
            let b = &self.weights[k + n_in * n_out..k + n_in * n_out + n_out];
            let prev = &acts[l];
            let next: Vec<f64> = (0..n_out)
                .map(|i| {
                    let s = b[i] + wm[i * n_in..(i + 1) * n_in].iter().zip(prev).map(|(x, y)| x * y).sum::<f64>();
                    if l + 1 < n_layers {
                        self.spec.activation.apply(s)
                    } else {
                        s
                    }
                })
                .collect();
            acts.push(next);
            k += n_in * n_out + n_out;
        }
        let y = acts[n_layers][0];
        // backward: delta = dy/dz for the layer's pre-activations
        let mut delta = vec![1.0];
        for l in (0..n_layers).rev() {
            let (n_in, n_out) = (layers[l], layers[l + 1]);
            let off = offsets[l];
            let prev = &acts[l];
            for i in 0..n_out {
                for j in 0..n_in {
                    grad[off + i * n_in + j] = delta[i] * prev[j];
                }
                grad[off + n_in * n_out + i] = delta[i];
            }
            if l > 0 {
                let wm = &self.weights[off..off + n_in * n_out];
                delta = (0..n_in)
                    .map(|j| {
                        let s: f64 = (0..n_out).map(|i| wm[i * n_in + j] * delta[i]).sum();
                        s * self.spec.activation.slope(prev[j])
                    })
                    .collect();
            }
        }
        y
    }
}

/// Rows of inputs (row-major, `n_in` wide) with one target each.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub n_in: usize,
    pub inputs: Vec<f64>,
    pub targets: Vec<f64>,
}

impl Dataset {
    pub fn new(n_in: usize) -> Dataset {
        Dataset { n_in, inputs: Vec::new(), targets: Vec::new() }
    }

    pub fn push(&mut self, x: &[f64], t: f64) {
        debug_assert_eq!(x.len(), self.n_in);
        self.inputs.extend_from_slice(x);
        self.targets.push(t);
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.n_in..(i + 1) * self.n_in]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.inputs.chunks_exact(self.n_in.max(1))
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        let mut d = Dataset::new(self.n_in);
        for &i in idx {
            d.push(self.row(i), self.targets[i]);
        }
        d
    }
}

/// Residual Jacobian `J[i][k] = d(t_i - y_i)/d w_k` and residuals
/// `e_i = t_i - y_i`, both in the network's normalized space.
pub fn jacobian(net: &Mlp, data: &Dataset) -> (DMatrix<f64>, DVector<f64>) {
    let p = net.spec.n_params();
    let n = data.len();
    let mut j = DMatrix::zeros(n, p);
    let mut e = DVector::zeros(n);
    let mut z = vec![0.0; data.n_in];
    let mut g = vec![0.0; p];
    let mut acts = Vec::new();
    for i in 0..n {
        net.input_norm.apply(data.row(i), &mut z);
        let y = net.forward_grad(&z, &mut g, &mut acts);
        e[i] = net.output_norm.apply1(data.targets[i]) - y;
        for k in 0..p {
            j[(i, k)] = -g[k];
        }
    }
    (j, e)
}

/// Normal-equation pieces accumulated over row chunks.
struct Normal {
    jtj: DMatrix<f64>,
    jte: DVector<f64>,
    sse: f64,
}

const CHUNK: usize = 256;

fn normal_equations(net: &Mlp, data: &Dataset) -> Normal {
    let p = net.spec.n_params();
    let mut jtj = DMatrix::zeros(p, p);
    let mut jte = DVector::zeros(p);
    let mut sse = 0.0;
    let mut z = vec![0.0; data.n_in];
    let mut g = vec![0.0; p];
    let mut acts = Vec::new();
    let mut start = 0;
    while start < data.len() {
        let end = (start + CHUNK).min(data.len());
        let rows = end - start;
        let mut jb = DMatrix::zeros(rows, p);
        let mut eb = DVector::zeros(rows);
        for r in 0..rows {
            let i = start + r;
            net.input_norm.apply(data.row(i), &mut z);
            let y = net.forward_grad(&z, &mut g, &mut acts);
            let e = net.output_norm.apply1(data.targets[i]) - y;
            eb[r] = e;
            sse += e * e;
            for k in 0..p {
                jb[(r, k)] = -g[k];
            }
        }
        accumulate_lower(&mut jtj, &jb);
        jte.gemv_tr(1.0, &jb, &eb, 1.0);
        start = end;
    }
    jtj.fill_upper_triangle_with_lower_triangle();
    Normal { jtj, jte, sse }
}

const BLOCKS: usize = 4;

/// `acc += jbᵀ jb` on the block lower triangle only; the caller mirrors it.
fn accumulate_lower(acc: &mut DMatrix<f64>, jb: &DMatrix<f64>) {
    let p = jb.ncols();
    let step = p.div_ceil(BLOCKS);
    for r0 in (0..p).step_by(step) {
        let rs = step.min(p - r0);
        for c0 in (0..=r0).step_by(step) {
            let cs = step.min(p - c0);
            acc.view_mut((r0, c0), (rs, cs)).gemm_tr(1.0, &jb.columns(r0, rs), &jb.columns(c0, cs), 1.0);
        }
    }
}

/// Mean squared error in normalized target units.
pub fn mse(net: &Mlp, data: &Dataset) -> f64 {
    if data.is_empty() {
        return f64::NAN;
    }
    let mut z = vec![0.0; data.n_in];
    let mut s = 0.0;
    for i in 0..data.len() {
        net.input_norm.apply(data.row(i), &mut z);
        let e = net.output_norm.apply1(data.targets[i]) - net.forward_normalized(&z);
        s += e * e;
    }
    s / data.len() as f64
}

/// Solve `(JtJ + mu I) dw = Jte`; `None` when the system is not positive definite.
fn solve_damped(jtj: &DMatrix<f64>, jte: &DVector<f64>, mu: f64) -> Option<DVector<f64>> {
    let mut a = jtj.clone();
    for k in 0..a.nrows() {
        a[(k, k)] += mu;
    }
    let dw = Cholesky::new(a)?.solve(jte);
    dw.iter().all(|v| v.is_finite()).then_some(dw)
}

/// One damped Gauss-Newton step. Returns the candidate network and `dw`;
/// the candidate's weights are `w - dw`.
pub fn lm_step(net: &Mlp, j: &DMatrix<f64>, e: &DVector<f64>, mu: f64) -> Option<(Mlp, DVector<f64>)> {
    let jtj = j.tr_mul(j);
    let jte = j.tr_mul(e);
    let dw = solve_damped(&jtj, &jte, mu)?;
    Some((with_step(net, &dw), dw))
}

fn with_step(net: &Mlp, dw: &DVector<f64>) -> Mlp {
    let mut cand = net.clone();
    for (w, d) in cand.weights.iter_mut().zip(dw.iter()) {
        *w -= d;
    }
    cand
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub max_epochs: usize,
    /// Train, validation, test fractions.
    pub split: (f64, f64, f64),
    pub mu0: f64,
    pub mu_increase: f64,
    pub mu_decrease: f64,
    pub mu_max: f64,
    /// Consecutive validation failures before stopping.
    pub patience: usize,
    pub min_gradient: f64,
    /// Stop once train MSE reaches this value.
    pub goal: f64,
    pub seed: u64,
    /// Disable validation-based stopping.
    pub no_early_stop: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            max_epochs: 1000,
            split: (0.6, 0.2, 0.2),
            mu0: 1e-3,
            mu_increase: 10.0,
            mu_decrease: 10.0,
            mu_max: 1e10,
            patience: 6,
            min_gradient: 1e-7,
            goal: 0.0,
            seed: 1,
            no_early_stop: false,
        }
    }
}

impl TrainConfig {
    pub fn check(&self) -> Result<(), NnError> {
        let (a, b, c) = self.split;
        if (a + b + c - 1.0).abs() > 1e-9 || a <= 0.0 || b < 0.0 || c < 0.0 {
            return Err(NnError::Config(format!("split {:?} must be non-negative and sum to 1", self.split)));
        }
        if !(self.mu0 > 0.0) || self.patience == 0 || self.max_epochs == 0 {
            return Err(NnError::Config("mu0 > 0, patience >= 1 and max_epochs >= 1 required".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxEpochs,
    ValidationStop,
    MuOverflow,
    MinGradient,
    Goal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    /// Entry 0 is the initial network; entry k follows epoch k.
    pub train_mse: Vec<f64>,
    pub val_mse: Vec<f64>,
    pub test_mse: Vec<f64>,
    pub stop_reason: StopReason,
    pub epochs: usize,
    pub best_epoch: usize,
}

/// Validation-based stopping: stop after `patience` consecutive epochs
/// whose validation error exceeds the best seen so far.
#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStopping {
    pub patience: usize,
    pub best: f64,
    pub best_epoch: usize,
    pub fails: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping { patience, best: f64::INFINITY, best_epoch: 0, fails: 0 }
    }

    /// Record the validation error of `epoch`; true means stop.
    pub fn update(&mut self, epoch: usize, val: f64) -> bool {
        if val < self.best {
            self.best = val;
            self.best_epoch = epoch;
            self.fails = 0;
        } else if val > self.best {
            self.fails += 1;
        }
        self.fails >= self.patience
    }
}

/// Row labels for a 60/20/20-style split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subset {
    Train,
    Validation,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub labels: Vec<Subset>,
    pub seed: u64,
}

impl SplitAssignment {
    pub fn indices(&self, s: Subset) -> Vec<usize> {
        self.labels.iter().enumerate().filter(|(_, &l)| l == s).map(|(i, _)| i).collect()
    }

    pub fn count(&self, s: Subset) -> usize {
        self.labels.iter().filter(|&&l| l == s).count()
    }
}

/// Minimum rows for [`split_rows`] and [`train`].
pub const MIN_ROWS: usize = 10;

/// Random split with counts `round(a n)`, `round(b n)` and the remainder.
pub fn split_rows(n_rows: usize, proportions: (f64, f64, f64), seed: u64) -> Result<SplitAssignment, NnError> {
    if n_rows < MIN_ROWS {
        return Err(NnError::TooSmall { rows: n_rows, min: MIN_ROWS });
    }
    let n_train = (proportions.0 * n_rows as f64).round() as usize;
    let n_val = ((proportions.1 * n_rows as f64).round() as usize).min(n_rows - n_train);
    let mut order: Vec<usize> = (0..n_rows).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut labels = vec![Subset::Test; n_rows];
    for (k, &i) in order.iter().enumerate() {
        labels[i] = if k < n_train {
            Subset::Train
        } else if k < n_train + n_val {
            Subset::Validation
        } else {
            Subset::Test
        };
    }
    Ok(SplitAssignment { labels, seed })
}

/// Levenberg-Marquardt training on a fresh network. Normalization is fitted
/// to the training rows; a constant feature or target is only centred.
pub fn train(spec: MlpSpec, data: &Dataset, cfg: &TrainConfig) -> Result<(Mlp, TrainHistory), NnError> {
    spec.check()?;
    cfg.check()?;
    if data.n_in != spec.n_in() {
        return Err(NnError::InputSize { found: data.n_in, expected: spec.n_in() });
    }
    if data.len() < MIN_ROWS {
        return Err(NnError::TooSmall { rows: data.len(), min: MIN_ROWS });
    }
    let split = split_rows(data.len(), cfg.split, cfg.seed)?;
    let tr = data.subset(&split.indices(Subset::Train));
    let va = data.subset(&split.indices(Subset::Validation));
    let te = data.subset(&split.indices(Subset::Test));
    let mut net = Mlp::init(spec, cfg.seed.wrapping_add(0x9e37_79b9));
    net.input_norm = Normalization::fit_or_center(tr.rows(), tr.n_in);
    net.output_norm = Normalization::fit_or_center(tr.targets.iter().map(std::slice::from_ref), 1);
    let hist = train_from(&mut net, &tr, &va, &te, cfg);
    Ok((net, hist))
}

/// LM loop on an initialised network; `net` ends at the best-validation
/// weights (or the last accepted weights when there is no validation data).
pub fn train_from(net: &mut Mlp, tr: &Dataset, va: &Dataset, te: &Dataset, cfg: &TrainConfig) -> TrainHistory {
    let use_val = !cfg.no_early_stop && !va.is_empty();
    let mut mu = cfg.mu0;
    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut best = net.clone();
    let mut hist = TrainHistory {
        train_mse: vec![mse(net, tr)],
        val_mse: vec![mse(net, va)],
        test_mse: vec![mse(net, te)],
        stop_reason: StopReason::MaxEpochs,
        epochs: 0,
        best_epoch: 0,
    };
    if use_val {
        stopper.update(0, hist.val_mse[0]);
    }
    let n = tr.len() as f64;
    let mut epoch = 0;
    'epochs: while epoch < cfg.max_epochs {
        let ne = normal_equations(net, tr);
        let perf = ne.sse / n;
        if perf <= cfg.goal {
            hist.stop_reason = StopReason::Goal;
            break;
        }
        if 2.0 * ne.jte.norm() / n < cfg.min_gradient {
            hist.stop_reason = StopReason::MinGradient;
            break;
        }
        loop {
            if let Some(dw) = solve_damped(&ne.jtj, &ne.jte, mu) {
                let cand = with_step(net, &dw);
                let cand_perf = mse(&cand, tr);
                if cand_perf < perf {
                    *net = cand;
                    mu = (mu / cfg.mu_decrease).max(1e-20);
                    epoch += 1;
                    hist.train_mse.push(cand_perf);
                    hist.val_mse.push(mse(net, va));
                    hist.test_mse.push(mse(net, te));
                    hist.epochs = epoch;
                    if use_val {
                        let stop = stopper.update(epoch, hist.val_mse[epoch]);
                        if stopper.best_epoch == epoch {
                            best = net.clone();
                        }
                        if stop {
                            hist.stop_reason = StopReason::ValidationStop;
                            break 'epochs;
                        }
                    }
                    break;
                }
            }
            mu *= cfg.mu_increase;
            if mu > cfg.mu_max {
                hist.stop_reason = StopReason::MuOverflow;
                break 'epochs;
            }
        }
    }
    if use_val {
        *net = best;
        hist.best_epoch = stopper.best_epoch;
    } else {
        hist.best_epoch = hist.epochs;
    }
    hist
}

/// Versioned on-disk form of a trained network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub version: u32,
    pub net: Mlp,
    pub seed: u64,
    pub epochs: usize,
    pub best_epoch: usize,
    pub stop_reason: StopReason,
    pub final_train_mse: f64,
    pub final_val_mse: f64,
    pub final_test_mse: f64,
    /// Choices not fixed by the reference method.
    pub assumptions: Vec<String>,
}

pub const MODEL_VERSION: u32 = 1;

impl ModelFile {
    pub fn new(net: Mlp, seed: u64, hist: &TrainHistory) -> ModelFile {
        let at = |v: &[f64]| v.get(hist.best_epoch).copied().unwrap_or(f64::NAN);
        ModelFile {
            version: MODEL_VERSION,
            seed,
            epochs: hist.epochs,
            best_epoch: hist.best_epoch,
            stop_reason: hist.stop_reason,
            final_train_mse: at(&hist.train_mse),
            final_val_mse: at(&hist.val_mse),
            final_test_mse: at(&hist.test_mse),
            assumptions: vec![
                format!("hidden activation: {:?}", net.spec.activation).to_lowercase(),
                "levenberg-marquardt: mu0 1e-3, x10 on reject, /10 on accept, abort above 1e10".into(),
                "early stop after 6 validation failures, best weights restored".into(),
                "inputs and target min-max normalized to [-1, 1] on training rows".into(),
            ],
            net,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Straightforward re-implementation used as an oracle.
    fn oracle_forward(net: &Mlp, x: &[f64]) -> f64 {
        let mut a: Vec<f64> = x.iter().enumerate().map(|(i, v)| (v - net.input_norm.center[i]) / net.input_norm.half_range[i]).collect();
        let mut k = 0;
        let l = &net.spec.layers;
        for layer in 0..l.len() - 1 {
            let w = DMatrix::from_row_slice(l[layer + 1], l[layer], &net.weights[k..k + l[layer] * l[layer + 1]]);
            k += l[layer] * l[layer + 1];
            let b = DVector::from_row_slice(&net.weights[k..k + l[layer + 1]]);
            k += l[layer + 1];
            let z = w * DVector::from_vec(a) + b;
            a = if layer + 2 < l.len() { z.iter().map(|v| v.tanh()).collect() } else { z.iter().copied().collect() };
        }
        a[0] * net.output_norm.half_range[0] + net.output_norm.center[0]
    }

    fn random_net(seed: u64, n_in: usize) -> Mlp {
        let mut net = Mlp::init(MlpSpec::standard(n_in), seed);
        net.input_norm = Normalization { center: vec![0.3; n_in], half_range: vec![2.0; n_in] };
        net.output_norm = Normalization { center: vec![-1.0], half_range: vec![3.0] };
        net
    }

    #[test]
    fn zero_network_outputs_zero() {
        let net = Mlp::zeros(MlpSpec::standard(3));
        assert_eq!(net.forward(&[1.0, 2.0, 3.0]), 0.0);
        assert_eq!(MlpSpec::standard(3).n_params(), 3 * 10 + 10 + 100 + 10 + 10 + 1);
    }

    #[test]
    fn tiny_network_closed_form() {
        // [1, 1, 1]: y = w2 * tanh(w1 x + b1) + b2
        let mut net = Mlp::zeros(MlpSpec { layers: vec![1, 1, 1], activation: Activation::Tanh });
        net.weights = vec![1.0, 0.5, 1.0, 0.25];
        assert!((net.forward(&[0.0]) - (0.5f64.tanh() + 0.25)).abs() < 1e-15);
    }

    #[test]
    fn forward_matches_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for s in 0..20 {
            let net = random_net(s, 3);
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-5.0..5.0)).collect();
            assert!((net.forward(&x) - oracle_forward(&net, &x)).abs() < 1e-12);
        }
    }

    #[test]
    fn linear_neuron_jacobian() {
        let mut net = Mlp::zeros(MlpSpec { layers: vec![1, 1], activation: Activation::Tanh });
        net.weights = vec![0.7, -0.2];
        let mut d = Dataset::new(1);
        d.push(&[2.0], 1.0);
        d.push(&[-3.0], 0.0);
        let (j, e) = jacobian(&net, &d);
        assert_eq!(j[(0, 0)], -2.0);
        assert_eq!(j[(0, 1)], -1.0);
        assert_eq!(j[(1, 0)], 3.0);
        assert!((e[0] - (1.0 - 1.2)).abs() < 1e-15);
    }

    #[test]
    fn zero_input_zeroes_first_layer_weight_columns() {
        let net = Mlp::init(MlpSpec::standard(3), 5);
        let mut d = Dataset::new(3);
        d.push(&[0.0, 0.0, 0.0], 0.3);
        let (j, _) = jacobian(&net, &d);
        for k in 0..30 {
            assert_eq!(j[(0, k)], 0.0);
        }
        assert!(j[(0, 30)] != 0.0);
    }

    #[test]
    fn chunked_normal_equations_match_dense() {
        let net = random_net(9, 3);
        let mut d = Dataset::new(3);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..(2 * CHUNK + 37) {
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-3.0..3.0)).collect();
            d.push(&x, rng.random_range(-4.0..2.0));
        }
        let (j, e) = jacobian(&net, &d);
        let ne = normal_equations(&net, &d);
        let dense = j.tr_mul(&j);
        assert!((&ne.jtj - &dense).abs().max() <= 1e-9 * dense.abs().max());
        assert!((&ne.jte - j.tr_mul(&e)).abs().max() <= 1e-9 * ne.jte.abs().max());
        assert!((ne.sse - e.norm_squared()).abs() <= 1e-9 * ne.sse);
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for s in 0..10 {
            let net = random_net(100 + s, 3);
            let mut d = Dataset::new(3);
            for _ in 0..4 {
                let x: Vec<f64> = (0..3).map(|_| rng.random_range(-3.0..3.0)).collect();
                d.push(&x, rng.random_range(-1.0..1.0));
            }
            let (j, _) = jacobian(&net, &d);
            let h = 1e-6;
            for k in 0..net.weights.len() {
                let (mut p, mut m) = (net.clone(), net.clone());
                p.weights[k] += h;
                m.weights[k] -= h;
                let (_, ep) = jacobian(&p, &d);
                let (_, em) = jacobian(&m, &d);
                for i in 0..d.len() {
                    let fd = (ep[i] - em[i]) / (2.0 * h);
                    let err = (fd - j[(i, k)]).abs() / fd.abs().max(j[(i, k)].abs()).max(1e-6);
                    assert!(err <= 1e-4, "net {s} w{k} row {i}: {fd} vs {}", j[(i, k)]);
                }
            }
        }
    }

    #[test]
    fn lm_step_reaches_least_squares_optimum() {
        // single linear neuron with 2 inputs: y = a x1 + b x2 + c
        let net = Mlp::zeros(MlpSpec { layers: vec![2, 1], activation: Activation::Tanh });
        let mut d = Dataset::new(2);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..30 {
            let x = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            d.push(&x, 0.8 * x[0] - 1.3 * x[1] + 0.4 + rng.random_range(-0.1..0.1));
        }
        let (j, e) = jacobian(&net, &d);
        let (cand, _) = lm_step(&net, &j, &e, 1e-14).unwrap();
        let a = DMatrix::from_fn(d.len(), 3, |i, k| if k < 2 { d.row(i)[k] } else { 1.0 });
        let t = DVector::from_vec(d.targets.clone());
        let opt = (a.transpose() * &a).cholesky().unwrap().solve(&(a.transpose() * t));
        for k in 0..3 {
            assert!((cand.weights[k] - opt[k]).abs() < 1e-8, "{k}");
        }
    }

    #[test]
    fn lm_step_gradient_regime_and_zero_error() {
        let net = random_net(4, 2);
        let mut d = Dataset::new(2);
        for i in 0..12 {
            d.push(&[i as f64 * 0.1, 1.0 - i as f64 * 0.05], (i as f64).sin());
        }
        let (j, e) = jacobian(&net, &d);
        let mu = 1e6;
        let (_, dw) = lm_step(&net, &j, &e, mu).unwrap();
        let g = j.tr_mul(&e) / mu;
        assert!((&dw - &g).norm() <= 1e-3 * g.norm());
        let (_, dw0) = lm_step(&net, &j, &DVector::zeros(d.len()), 1e-3).unwrap();
        assert_eq!(dw0.norm(), 0.0);
    }

    #[test]
    fn normalization_rules() {
        let rows: Vec<Vec<f64>> = vec![vec![0.0], vec![10.0], vec![3.0]];
        let n = Normalization::fit(rows.iter().map(|r| r.as_slice()), 1).unwrap();
        assert_eq!(n.apply1(5.0), 0.0);
        for x in [-3.7, 0.0, 2.2, 12.5] {
            assert!((n.invert1(n.apply1(x)) - x).abs() < 1e-12);
        }
        let c: Vec<Vec<f64>> = vec![vec![2.0], vec![2.0]];
        assert!(matches!(Normalization::fit(c.iter().map(|r| r.as_slice()), 1), Err(NnError::DegenerateRange { feature: 0, .. })));
        let fc = Normalization::fit_or_center(c.iter().map(|r| r.as_slice()), 1);
        assert_eq!(fc.apply1(2.0), 0.0);
    }

    #[test]
    fn split_counts() {
        let s = split_rows(100, (0.6, 0.2, 0.2), 1).unwrap();
        assert_eq!((s.count(Subset::Train), s.count(Subset::Validation), s.count(Subset::Test)), (60, 20, 20));
        let s = split_rows(10, (0.6, 0.2, 0.2), 1).unwrap();
        assert_eq!((s.count(Subset::Train), s.count(Subset::Validation), s.count(Subset::Test)), (6, 2, 2));
        assert_eq!(split_rows(57, (0.6, 0.2, 0.2), 9).unwrap(), split_rows(57, (0.6, 0.2, 0.2), 9).unwrap());
        assert!(matches!(split_rows(9, (0.6, 0.2, 0.2), 1), Err(NnError::TooSmall { .. })));
    }

    #[test]
    fn early_stopping_rule() {
        let mut es = EarlyStopping::new(6);
        let series = [5.0, 4.0, 3.0, 3.5, 3.6, 3.7, 3.8, 3.9, 4.0, 4.1];
        let stop_at = series.iter().enumerate().find(|&(e, &v)| es.update(e, v)).map(|(e, _)| e);
        assert_eq!(stop_at, Some(2 + 6));
        assert_eq!(es.best_epoch, 2);
    }

    #[test]
    fn constant_target_is_fit_quickly() {
        let mut d = Dataset::new(1);
        for i in 0..40 {
            d.push(&[i as f64], 2.5);
        }
        let (net, h) = train(MlpSpec::standard(1), &d, &TrainConfig::default()).unwrap();
        assert!(h.epochs <= 50);
        assert!(*h.train_mse.last().unwrap() < 1e-10, "{:?}", h.train_mse.last());
        assert!((net.forward(&[7.0]) - 2.5).abs() < 1e-4);
    }

    #[test]
    fn accepted_epochs_never_increase_train_error() {
        let mut d = Dataset::new(1);
        for i in 0..60 {
            let x = -3.0 + 6.0 * i as f64 / 59.0;
            d.push(&[x], x.sin() + 0.3 * x);
        }
        let cfg = TrainConfig { max_epochs: 40, no_early_stop: true, ..Default::default() };
        let (_, h) = train(MlpSpec::standard(1), &d, &cfg).unwrap();
        assert!(h.train_mse.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn training_is_reproducible() {
        let mut d = Dataset::new(2);
        for i in 0..50 {
            let x = i as f64 / 10.0;
            d.push(&[x, x * x], x.cos());
        }
        let cfg = TrainConfig { max_epochs: 30, ..Default::default() };
        let a = train(MlpSpec::standard(2), &d, &cfg).unwrap();
        let b = train(MlpSpec::standard(2), &d, &cfg).unwrap();
        assert_eq!(a, b);
    }
}
