//! Binary-crossbar training.
//!
//! Forward passes use the binarized crossbar `cbin = [c > 0.5]`. Each neuron's
//! input is treated as a Gaussian with
//!
//! ```text
//! μ_j  = b_j + Σ_i x_i cbin_ij s_ij
//! σ_j² = Σ_i x_i cbin_ij (1 - x_i cbin_ij) s_ij²      (floored at sigmaFloor²)
//! n̄_j  = Φ(μ_j / σ_j)
//! ```
//!
//! which is the probability that the deployed step neuron (`I_j > 0`) fires.
//! The backward pass follows μ only: `∂n̄/∂μ = φ(μ/σ)/σ`, and the crossbar is
//! passed straight through (`∂μ_j/∂c_ij = x_i s_ij`). Updates go to the
//! continuous `c`, clamped back into `[0, 1]`.

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{augment, stream_rng, AugmentConfig, ImageBatch, StreamKind};
use crate::model::{SynapseTemplate, AXONS, NEURONS};
use crate::netfile::{AnyNetwork, NetworkDocument, RngState, TrainingState};
use crate::network::{ContinuousNetwork, NetworkError};
use crate::normal::{std_normal_cdf, std_normal_pdf};
use crate::topology::{TopologyPlan, TopologySpec};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("non-finite {quantity} at layer {layer}, core {core}, neuron {neuron}")]
    NonFinite { quantity: &'static str, layer: usize, core: usize, neuron: usize },
    #[error("loss diverged at iteration {iteration}")]
    Diverged { iteration: u64, last_good: Box<TrainRun> },
    #[error("input has {got} values, topology expects {expected}")]
    InputShape { expected: usize, got: usize },
    #[error("label {label} outside {classes} classes")]
    BadLabel { label: usize, classes: usize },
    #[error("training set is empty")]
    EmptyDataset,
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Network(#[from] NetworkError),
}

/// Hyperparameters of a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub lr0: f64,
    pub lr_decay_factor: f64,
    pub lr_decay_every: u64,
    pub total_iterations: u64,
    pub sigma_floor: f64,
    pub seed: u64,
    pub augment: Option<AugmentConfig>,
    pub template: SynapseTemplate,
    /// Loss is averaged and logged every this many iterations.
    pub log_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 100,
            lr0: 0.1,
            lr_decay_factor: 0.1,
            lr_decay_every: 1_000_000,
            total_iterations: 0,
            sigma_floor: 1e-3,
            seed: 0,
            augment: None,
            template: SynapseTemplate::s1(),
            log_every: 100,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.to_string()));
        if self.batch_size == 0 {
            return bad("batchSize must be at least 1");
        }
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return bad("lr0 must be positive");
        }
        if !(self.sigma_floor > 0.0 && self.sigma_floor.is_finite()) {
            return bad("sigmaFloor must be positive");
        }
        if !(self.lr_decay_factor > 0.0 && self.lr_decay_factor.is_finite()) {
            return bad("lrDecayFactor must be positive");
        }
        if self.lr_decay_every == 0 {
            return bad("lrDecayEvery must be at least 1");
        }
        if self.log_every == 0 {
            return bad("logEvery must be at least 1");
        }
        if let Some(a) = &self.augment {
            if !a.is_valid() {
                return bad("augmentation bounds must be finite and non-negative");
            }
        }
        Ok(())
    }
}

/// Step-decayed learning rate: `lr0 · factor^⌊iteration / every⌋`.
pub fn lr_at(iteration: u64, cfg: &TrainConfig) -> f64 {
    let steps = iteration / cfg.lr_decay_every;
    cfg.lr0 * cfg.lr_decay_factor.powi(steps.min(i32::MAX as u64) as i32)
}

/// Softmax cross-entropy of `scores` against `label`.
pub fn loss(scores: &[f64], label: usize) -> f64 {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = scores.iter().map(|z| (z - max).exp()).sum();
    (max + sum.ln()) - scores[label]
}

/// Gradient of [`loss`] with respect to the scores: `softmax(z) - onehot(label)`.
pub fn loss_grad(scores: &[f64], label: usize) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = scores.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exp.iter().sum();
    exp.iter().enumerate().map(|(k, e)| e / sum - if k == label { 1.0 } else { 0.0 }).collect()
}

/// Outputs of one core for a batch; every array is `batch × neurons`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoreActivity {
    pub mu: Array2<f64>,
    pub sigma: Array2<f64>,
    pub nbar: Array2<f64>,
}

/// Gaussian-approximation forward pass of one core over a batch.
///
/// `x` is `batch × axons`, `conn` is `axons × neurons` (the binarized
/// crossbar as 0/1, or any real connection matrix), `axon_weights` holds
/// `s_i` per axon.
pub fn core_forward_batch(
    x: ArrayView2<f64>,
    conn: ArrayView2<f64>,
    axon_weights: &[f64],
    bias: &[f64],
    sigma_floor: f64,
) -> CoreActivity {
    let weights = Array1::from(axon_weights.to_vec());
    let w = &conn * &weights.view().insert_axis(Axis(1));
    let w2 = &w * &weights.view().insert_axis(Axis(1));
    let mut mu = x.dot(&w);
    mu += &Array1::from(bias.to_vec());
    let var = core_variance(x, conn, &w2);
    let floor2 = sigma_floor * sigma_floor;
    let sigma = var.mapv(|v| v.max(floor2).sqrt());
    let nbar = Zip::from(&mu).and(&sigma).map_collect(|&m, &s| std_normal_cdf(m / s));
    CoreActivity { mu, sigma, nbar }
}

fn core_variance(x: ArrayView2<f64>, conn: ArrayView2<f64>, w2: &Array2<f64>) -> Array2<f64> {
    let binary = conn.iter().all(|&c| c == 0.0 || c == 1.0);
    if binary {
        // cbin² = cbin, so Σ x·cbin(1 - x·cbin)s² = (x - x²)·(cbin s²)
        let xx = x.mapv(|v| v - v * v);
        xx.dot(w2)
    } else {
        // Σ x c (1 - x c) s² = x·(c s²) - x²·(c² s²)
        let c2w2 = w2 * &conn;
        x.dot(w2) - x.mapv(|v| v * v).dot(&c2w2)
    }
}

/// Single-input form of [`core_forward_batch`], written out as plain sums.
pub fn core_forward_train(
    x: &[f64],
    conn: &[f64],
    neurons: usize,
    axon_weights: &[f64],
    bias: &[f64],
    sigma_floor: f64,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let axons = x.len();
    let mut mu = bias[..neurons].to_vec();
    let mut var = vec![0.0; neurons];
    for i in 0..axons {
        if x[i] == 0.0 {
            continue;
        }
        let s = axon_weights[i];
        for j in 0..neurons {
            let xc = x[i] * conn[i * neurons + j];
            mu[j] += xc * s;
            var[j] += xc * (1.0 - xc) * s * s;
        }
    }
    let sigma: Vec<f64> = var.iter().map(|&v| v.max(sigma_floor * sigma_floor).sqrt()).collect();
    let nbar = mu.iter().zip(&sigma).map(|(&m, &s)| std_normal_cdf(m / s)).collect();
    (mu, sigma, nbar)
}

/// Parameter and input gradients of one core.
#[derive(Debug, Clone, PartialEq)]
pub struct CoreGrads {
    /// `axons × neurons`
    pub c: Array2<f64>,
    pub b: Array1<f64>,
    /// `batch × axons`
    pub x: Array2<f64>,
}

/// Backward pass of one core given `∂ℓ/∂n̄` (`batch × neurons`).
pub fn core_backward_batch(
    x: ArrayView2<f64>,
    conn: ArrayView2<f64>,
    axon_weights: &[f64],
    activity: &CoreActivity,
    dnbar: ArrayView2<f64>,
    need_input_grad: bool,
) -> CoreGrads {
    let dmu = Zip::from(&dnbar)
        .and(&activity.mu)
        .and(&activity.sigma)
        .map_collect(|&g, &m, &s| g * std_normal_pdf(m / s) / s);
    let weights = Array1::from(axon_weights.to_vec());
    let mut c = x.t().dot(&dmu);
    c *= &weights.view().insert_axis(Axis(1));
    let b = dmu.sum_axis(Axis(0));
    let x_grad = if need_input_grad {
        let w = &conn * &weights.view().insert_axis(Axis(1));
        dmu.dot(&w.t())
    } else {
        Array2::zeros((0, 0))
    };
    CoreGrads { c, b, x: x_grad }
}

/// How the forward pass treats the crossbar.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Crossbar {
    /// `cbin = [c > 0.5]`, as in training and deployment.
    Binarized,
    /// The continuous `c` itself; a smooth surrogate used for gradient checks.
    Surrogate,
}

/// Per-core state kept from a forward pass for the backward pass.
#[derive(Debug, Clone)]
pub struct CoreTrace {
    pub x: Array2<f64>,
    pub conn: Array2<f64>,
    pub activity: CoreActivity,
}

/// Everything the backward pass needs, for a batch of inputs.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub layers: Vec<Vec<CoreTrace>>,
    /// `batch × classes`
    pub scores: Array2<f64>,
}

fn conn_matrix(core: &crate::model::CoreParams, mode: Crossbar) -> Array2<f64> {
    let mut m = Array2::zeros((AXONS, NEURONS));
    for i in 0..core.used_axons() {
        for j in 0..core.used_neurons() {
            let c = core.c_at(i, j);
            m[[i, j]] = match mode {
                Crossbar::Binarized => f64::from(u8::from(c > 0.5)),
                Crossbar::Surrogate => c,
            };
        }
    }
    m
}

fn gather(source: &Array2<f64>, indices: &[Option<usize>]) -> Array2<f64> {
    let batch = source.nrows();
    let mut x = Array2::zeros((batch, AXONS));
    for (a, idx) in indices.iter().enumerate() {
        if let Some(k) = *idx {
            x.column_mut(a).assign(&source.column(k));
        }
    }
    x
}

fn check_finite(act: &CoreActivity, layer: usize, core: usize) -> Result<(), TrainError> {
    for (quantity, arr) in [("mean", &act.mu), ("sigma", &act.sigma), ("activation", &act.nbar)] {
        if let Some((idx, _)) = arr.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(TrainError::NonFinite { quantity, layer, core, neuron: idx.1 });
        }
    }
    Ok(())
}

/// Forward pass of a whole network over a batch (`batch × pixels`).
pub fn network_forward_batch(
    net: &ContinuousNetwork,
    inputs: &Array2<f64>,
    sigma_floor: f64,
    mode: Crossbar,
) -> Result<ForwardTrace, TrainError> {
    let plan = &net.plan;
    let expected = plan.input_shape().len();
    if inputs.ncols() != expected {
        return Err(TrainError::InputShape { expected, got: inputs.ncols() });
    }
    net.check_shape()?;
    let mut layers = Vec::with_capacity(plan.layers.len());
    let mut previous = inputs.clone();
    for (l, cores) in net.layers.iter().enumerate() {
        let gathers = plan.gather_indices(l);
        let traces = cores
            .par_iter()
            .zip(gathers.par_iter())
            .enumerate()
            .map(|(k, (core, idx))| {
                let x = gather(&previous, idx);
                let conn = conn_matrix(core, mode);
                let weights: Vec<f64> = core.axon_weights().iter().map(|&s| f64::from(s)).collect();
                let activity = core_forward_batch(x.view(), conn.view(), &weights, &core.b, sigma_floor);
                check_finite(&activity, l, k)?;
                Ok(CoreTrace { x, conn, activity })
            })
            .collect::<Result<Vec<_>, TrainError>>()?;
        let mut next = Array2::zeros((inputs.nrows(), traces.len() * NEURONS));
        for (k, t) in traces.iter().enumerate() {
            next.slice_mut(ndarray::s![.., k * NEURONS..(k + 1) * NEURONS]).assign(&t.activity.nbar);
        }
        previous = next;
        layers.push(traces);
    }
    let scores = class_scores(plan, &previous);
    Ok(ForwardTrace { layers, scores })
}

/// Sums output-layer activations per class.
fn class_scores(plan: &TopologyPlan, output: &Array2<f64>) -> Array2<f64> {
    let mut scores = Array2::zeros((output.nrows(), plan.num_classes()));
    for (n, &class) in plan.class_assignment.iter().enumerate() {
        let mut col = scores.column_mut(class);
        col += &output.column(n);
    }
    scores
}

/// Class scores and trace for one image.
pub fn network_forward_train(
    net: &ContinuousNetwork,
    image: &[f64],
    sigma_floor: f64,
) -> Result<(Vec<f64>, ForwardTrace), TrainError> {
    let inputs = Array2::from_shape_vec((1, image.len()), image.to_vec())
        .expect("one row always matches the slice length");
    let trace = network_forward_batch(net, &inputs, sigma_floor, Crossbar::Binarized)?;
    Ok((trace.scores.row(0).to_vec(), trace))
}

/// Gradients for every core, mirroring the network layout.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub layers: Vec<Vec<(Array2<f64>, Array1<f64>)>>,
}

/// Reverse pass from `∂ℓ/∂scores` (`batch × classes`).
pub fn backward_from_scores(
    net: &ContinuousNetwork,
    trace: &ForwardTrace,
    dscores: &Array2<f64>,
) -> Result<Gradients, TrainError> {
    let plan = &net.plan;
    let batch = dscores.nrows();
    let out_cores = plan.output_layer().num_cores();
    let mut dnbar = Array2::zeros((batch, out_cores * NEURONS));
    for (n, &class) in plan.class_assignment.iter().enumerate() {
        dnbar.column_mut(n).assign(&dscores.column(class));
    }
    let mut layers = vec![Vec::new(); plan.layers.len()];
    for l in (0..plan.layers.len()).rev() {
        let traces = &trace.layers[l];
        let need_input = l > 0;
        let grads: Vec<CoreGrads> = traces
            .par_iter()
            .enumerate()
            .map(|(k, t)| {
                let upstream = dnbar.slice(ndarray::s![.., k * NEURONS..(k + 1) * NEURONS]);
                let weights: Vec<f64> = net.layers[l][k].axon_weights().iter().map(|&s| f64::from(s)).collect();
                let mut g = core_backward_batch(t.x.view(), t.conn.view(), &weights, &t.activity, upstream, need_input);
                let core = &net.layers[l][k];
                for i in 0..AXONS {
                    for j in 0..NEURONS {
                        if i >= core.used_axons() || j >= core.used_neurons() {
                            g.c[[i, j]] = 0.0;
                        }
                    }
                }
                for j in core.used_neurons()..NEURONS {
                    g.b[j] = 0.0;
                }
                g
            })
            .collect();
        for (k, g) in grads.iter().enumerate() {
            if let Some(((i, j), _)) = g.c.indexed_iter().find(|(_, v)| !v.is_finite()) {
                let _ = i;
                return Err(TrainError::NonFinite { quantity: "gradient", layer: l, core: k, neuron: j });
            }
        }
        if need_input {
            let prev_cores = plan.layers[l - 1].num_cores();
            let mut prev = Array2::zeros((batch, prev_cores * NEURONS));
            for (g, idx) in grads.iter().zip(plan.gather_indices(l)) {
                for (a, src) in idx.iter().enumerate() {
                    if let Some(k) = *src {
                        let mut col = prev.column_mut(k);
                        col += &g.x.column(a);
                    }
                }
            }
            dnbar = prev;
        }
        layers[l] = grads.into_iter().map(|g| (g.c, g.b)).collect();
    }
    Ok(Gradients { layers })
}

/// Gradients of the mean batch loss with respect to every `c` and `b`.
pub fn backward(
    net: &ContinuousNetwork,
    trace: &ForwardTrace,
    labels: &[usize],
) -> Result<Gradients, TrainError> {
    let batch = labels.len();
    let classes = net.plan.num_classes();
    let mut dscores = Array2::zeros((batch, classes));
    for (r, &label) in labels.iter().enumerate() {
        if label >= classes {
            return Err(TrainError::BadLabel { label, classes });
        }
        let g = loss_grad(trace.scores.row(r).as_slice().expect("row is contiguous"), label);
        for (k, v) in g.into_iter().enumerate() {
            dscores[[r, k]] = v / batch as f64;
        }
    }
    backward_from_scores(net, trace, &dscores)
}

/// `c ← clamp(c - lr·∂c, 0, 1)`, `b ← b - lr·∂b`.
pub fn sgd_update(net: &mut ContinuousNetwork, grads: &Gradients, lr: f64) {
    for (cores, g_layer) in net.layers.iter_mut().zip(&grads.layers) {
        for (core, (gc, gb)) in cores.iter_mut().zip(g_layer) {
            for (c, g) in core.c.iter_mut().zip(gc.iter()) {
                *c = (*c - lr * g).clamp(0.0, 1.0);
            }
            for (b, g) in core.b.iter_mut().zip(gb.iter()) {
                *b -= lr * g;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistoryEntry {
    pub iteration: u64,
    pub loss: f64,
    pub accuracy: Option<f64>,
}

/// Progress record emitted every `log_every` iterations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogEntry {
    pub iteration: u64,
    pub lr: f64,
    pub mean_loss: f64,
}

impl LogEntry {
    pub const CSV_HEADER: &'static str = "iteration,lr,mean_loss";

    pub fn csv_row(&self) -> String {
        format!("{},{},{:.6}", self.iteration, self.lr, self.mean_loss)
    }
}

/// State of a training run: parameters, position, and loss history.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainRun {
    pub network: ContinuousNetwork,
    pub iteration: u64,
    pub history: Vec<HistoryEntry>,
    pub rng_state: RngState,
}

impl TrainRun {
    /// Freshly initialized run for `spec` with the template from `cfg`.
    pub fn new(spec: &TopologySpec, cfg: &TrainConfig) -> Result<Self, TrainError> {
        let spec = spec.clone().with_template(cfg.template.clone());
        let network = ContinuousNetwork::initialize(&spec, cfg.seed)?;
        Ok(Self { network, iteration: 0, history: Vec::new(), rng_state: RngState { seed: cfg.seed, next_sample: 0 } })
    }

    pub fn to_document(&self) -> NetworkDocument {
        NetworkDocument {
            network: AnyNetwork::Continuous(self.network.clone()),
            training: Some(TrainingState {
                iteration: self.iteration,
                rng_state: self.rng_state,
                history: self.history.clone(),
            }),
        }
    }

    pub fn from_document(doc: NetworkDocument) -> Result<Self, String> {
        let AnyNetwork::Continuous(network) = doc.network else {
            return Err("a checkpoint must hold a continuous network".into());
        };
        let t = doc.training.unwrap_or(TrainingState {
            iteration: 0,
            rng_state: RngState { seed: network.seed, next_sample: 0 },
            history: Vec::new(),
        });
        Ok(Self { network, iteration: t.iteration, history: t.history, rng_state: t.rng_state })
    }
}

/// Deterministic sample order: each epoch is a seeded shuffle of the dataset.
struct SampleOrder {
    seed: u64,
    len: usize,
    epoch: u64,
    perm: Vec<usize>,
}

impl SampleOrder {
    fn new(seed: u64, len: usize) -> Self {
        Self { seed, len, epoch: u64::MAX, perm: Vec::new() }
    }

    /// `(epoch, dataset index)` of global sample position `pos`.
    fn at(&mut self, pos: u64) -> (u64, usize) {
        let epoch = pos / self.len as u64;
        if epoch != self.epoch {
            let mut perm: Vec<usize> = (0..self.len).collect();
            perm.shuffle(&mut stream_rng(self.seed, StreamKind::Shuffle, epoch, 0));
            self.perm = perm;
            self.epoch = epoch;
        }
        (epoch, self.perm[(pos % self.len as u64) as usize])
    }
}

fn build_batch(
    data: &ImageBatch,
    order: &mut SampleOrder,
    start: u64,
    size: usize,
    seed: u64,
    augment_cfg: Option<&AugmentConfig>,
) -> (Array2<f64>, Vec<usize>) {
    let picks: Vec<(u64, usize)> = (0..size as u64).map(|k| order.at(start + k)).collect();
    let width = data.shape.len();
    let rows: Vec<Vec<f32>> = picks
        .par_iter()
        .map(|&(epoch, idx)| match augment_cfg {
            Some(cfg) => {
                let mut rng = stream_rng(seed, StreamKind::Augment, epoch, idx as u64);
                augment(data.image(idx), data.shape, cfg, &mut rng)
            }
            None => data.image(idx).to_vec(),
        })
        .collect();
    let mut x = Array2::zeros((size, width));
    for (r, row) in rows.iter().enumerate() {
        for (c, &v) in row.iter().enumerate() {
            x[[r, c]] = f64::from(v);
        }
    }
    (x, picks.iter().map(|&(_, idx)| data.labels[idx] as usize).collect())
}

/// Runs SGD until `cfg.total_iterations`.
///
/// `on_log` is called every `cfg.log_every` iterations with the current run
/// and the averaged loss; it may return a held-out accuracy to record.
pub fn train<F>(
    cfg: &TrainConfig,
    spec: &TopologySpec,
    data: &ImageBatch,
    on_log: F,
) -> Result<TrainRun, TrainError>
where
    F: FnMut(&TrainRun, &LogEntry) -> Option<f64>,
{
    let run = TrainRun::new(spec, cfg)?;
    continue_training(run, cfg, data, on_log)
}

/// Resumes `run` and trains until `cfg.total_iterations`.
pub fn continue_training<F>(
    mut run: TrainRun,
    cfg: &TrainConfig,
    data: &ImageBatch,
    mut on_log: F,
) -> Result<TrainRun, TrainError>
where
    F: FnMut(&TrainRun, &LogEntry) -> Option<f64>,
{
    cfg.validate()?;
    if run.iteration >= cfg.total_iterations {
        return Ok(run);
    }
    if data.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let expected = run.network.plan.input_shape().len();
    if data.shape.len() != expected {
        return Err(TrainError::InputShape { expected, got: data.shape.len() });
    }
    let mut order = SampleOrder::new(run.rng_state.seed, data.len());
    let mut loss_sum = 0.0;
    let mut loss_count = 0u64;
    while run.iteration < cfg.total_iterations {
        let (x, labels) = build_batch(
            data,
            &mut order,
            run.rng_state.next_sample,
            cfg.batch_size,
            run.rng_state.seed,
            cfg.augment.as_ref(),
        );
        let trace = network_forward_batch(&run.network, &x, cfg.sigma_floor, Crossbar::Binarized)?;
        let batch_loss = labels
            .iter()
            .enumerate()
            .map(|(r, &y)| loss(trace.scores.row(r).as_slice().expect("contiguous"), y))
            .sum::<f64>()
            / labels.len() as f64;
        if !batch_loss.is_finite() {
            return Err(TrainError::Diverged { iteration: run.iteration, last_good: Box::new(run) });
        }
        let grads = match backward(&run.network, &trace, &labels) {
            Ok(g) => g,
            Err(TrainError::NonFinite { .. }) => {
                return Err(TrainError::Diverged { iteration: run.iteration, last_good: Box::new(run) })
            }
            Err(e) => return Err(e),
        };
        let lr = lr_at(run.iteration, cfg);
        sgd_update(&mut run.network, &grads, lr);
        run.iteration += 1;
        run.rng_state.next_sample += cfg.batch_size as u64;
        loss_sum += batch_loss;
        loss_count += 1;
        if run.iteration.is_multiple_of(cfg.log_every) || run.iteration == cfg.total_iterations {
            let entry = LogEntry { iteration: run.iteration, lr, mean_loss: loss_sum / loss_count as f64 };
            let accuracy = on_log(&run, &entry);
            run.history.push(HistoryEntry { iteration: run.iteration, loss: entry.mean_loss, accuracy });
            loss_sum = 0.0;
            loss_count = 0;
        }
    }
    Ok(run)
}
