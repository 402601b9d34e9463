//! Deployment to discrete cores and the tick-based spiking simulator.
//!
//! Neurons are stateless: every tick each core computes
//! `I_j = leak_j + Σ_i x_i cbin_ij s_ij` in integer arithmetic and fires iff
//! `I_j > 0`. Layers are evaluated in order within a tick. Output spikes are
//! tallied per class over all ticks.

use rayon::prelude::*;
use thiserror::Error;

use crate::data::{rate_encode, ImageBatch, SpikeFrames};
use crate::model::{DeployedCore, ModelError, NEURONS};
use crate::network::{ContinuousNetwork, DeployedNetwork, NetworkError};

#[derive(Debug, Error)]
pub enum DeployError {
    #[error("layer {layer}, core {core}: {source}")]
    Core { layer: usize, core: usize, source: ModelError },
    #[error(transparent)]
    Network(#[from] NetworkError),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SimError {
    #[error("frame has {got} inputs, network expects {expected}")]
    Shape { expected: usize, got: usize },
    #[error("ensemble is empty")]
    EmptyEnsemble,
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("ensemble members disagree: {0}")]
    Mismatch(String),
    #[error("tick count must be at least 1")]
    ZeroTicks,
}

/// Binarizes every crossbar and turns every bias into an integer leak.
pub fn deploy(net: &ContinuousNetwork) -> Result<DeployedNetwork, DeployError> {
    net.check_shape()?;
    let layers = net
        .layers
        .iter()
        .enumerate()
        .map(|(l, cores)| {
            cores
                .iter()
                .enumerate()
                .map(|(k, p)| DeployedCore::from_params(p).map_err(|source| DeployError::Core { layer: l, core: k, source }))
                .collect::<Result<Vec<_>, _>>()
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(DeployedNetwork { plan: net.plan.clone(), layers, seed: net.seed })
}

/// One tick of one core. Reference form; the simulator uses a compiled copy.
pub fn core_tick(x: &[bool], core: &DeployedCore) -> Vec<bool> {
    let mut potential: Vec<i32> = core.leak.clone();
    for (i, &spike) in x.iter().enumerate().take(core.used_axons()) {
        if spike {
            for (j, p) in potential.iter_mut().enumerate().take(core.used_neurons()) {
                *p += core.weight(i, j);
            }
        }
    }
    potential.iter().map(|&p| p > 0).collect()
}

struct CompiledCore {
    /// Effective weights, axon-major, `used_neurons` per row.
    weights: Vec<i32>,
    leak: Vec<i32>,
    used_neurons: usize,
    gather: Vec<Option<usize>>,
}

impl CompiledCore {
    fn tick(&self, input: &[bool], potential: &mut Vec<i32>, out: &mut [bool]) {
        potential.clear();
        potential.extend_from_slice(&self.leak[..self.used_neurons]);
        let n = self.used_neurons;
        for (a, src) in self.gather.iter().enumerate() {
            if let Some(k) = *src {
                if input[k] {
                    let row = &self.weights[a * n..(a + 1) * n];
                    for (p, w) in potential.iter_mut().zip(row) {
                        *p += *w;
                    }
                }
            }
        }
        out.iter_mut().for_each(|o| *o = false);
        for (o, &p) in out.iter_mut().zip(potential.iter()) {
            *o = p > 0;
        }
    }
}

/// Output of one tick.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TickResult {
    /// Spikes of every layer, `core * NEURONS + neuron`.
    pub layers: Vec<Vec<bool>>,
    pub class_spikes: Vec<u64>,
}

/// Per-image simulation totals.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimResult {
    pub class_counts: Vec<u64>,
    /// Spikes emitted by all neurons of all cores over all ticks.
    pub neuron_spikes: u64,
    pub ticks: usize,
}

/// A deployed network prepared for fast repeated simulation.
pub struct Simulator {
    layers: Vec<Vec<CompiledCore>>,
    class_assignment: Vec<usize>,
    classes: usize,
    input_width: usize,
    cores: usize,
}

impl Simulator {
    pub fn new(net: &DeployedNetwork) -> Self {
        let layers = net
            .layers
            .iter()
            .enumerate()
            .map(|(l, cores)| {
                let gathers = net.plan.gather_indices(l);
                cores
                    .iter()
                    .zip(gathers)
                    .map(|(core, gather)| {
                        let n = core.used_neurons();
                        let mut weights = vec![0; gather.len() * n];
                        for a in 0..core.used_axons().min(gather.len()) {
                            for j in 0..n {
                                weights[a * n + j] = core.weight(a, j);
                            }
                        }
                        let gather = gather.into_iter().enumerate().map(|(a, g)| g.filter(|_| a < core.used_axons())).collect();
                        CompiledCore { weights, leak: core.leak.clone(), used_neurons: n, gather }
                    })
                    .collect()
            })
            .collect();
        Self {
            layers,
            class_assignment: net.plan.class_assignment.clone(),
            classes: net.plan.num_classes(),
            input_width: net.plan.input_shape().len(),
            cores: net.plan.total_cores(),
        }
    }

    pub fn num_classes(&self) -> usize {
        self.classes
    }

    pub fn num_cores(&self) -> usize {
        self.cores
    }

    /// Propagates one binary frame through every layer.
    pub fn tick(&self, frame: &[bool]) -> Result<TickResult, SimError> {
        if frame.len() != self.input_width {
            return Err(SimError::Shape { expected: self.input_width, got: frame.len() });
        }
        let mut potential = Vec::with_capacity(NEURONS);
        let mut layers = Vec::with_capacity(self.layers.len());
        let mut input: &[bool] = frame;
        for cores in &self.layers {
            let mut out = vec![false; cores.len() * NEURONS];
            for (k, core) in cores.iter().enumerate() {
                core.tick(input, &mut potential, &mut out[k * NEURONS..k * NEURONS + core.used_neurons]);
            }
            layers.push(out);
            input = layers.last().expect("just pushed");
        }
        let mut class_spikes = vec![0u64; self.classes];
        let output = layers.last().expect("at least one layer");
        for (n, &class) in self.class_assignment.iter().enumerate() {
            class_spikes[class] += u64::from(output[n]);
        }
        Ok(TickResult { layers, class_spikes })
    }

    /// Runs every frame and sums output spikes per class.
    pub fn simulate(&self, frames: &SpikeFrames) -> Result<SimResult, SimError> {
        let mut class_counts = vec![0u64; self.classes];
        let mut neuron_spikes = 0u64;
        for t in 0..frames.ticks() {
            let r = self.tick(frames.frame(t))?;
            for (total, s) in class_counts.iter_mut().zip(&r.class_spikes) {
                *total += s;
            }
            neuron_spikes += r.layers.iter().flatten().filter(|&&s| s).count() as u64;
        }
        Ok(SimResult { class_counts, neuron_spikes, ticks: frames.ticks() })
    }
}

/// Class spike totals of `net` over `frames`.
pub fn simulate(net: &DeployedNetwork, frames: &SpikeFrames) -> Result<Vec<u64>, SimError> {
    Ok(Simulator::new(net).simulate(frames)?.class_counts)
}

/// Argmax; ties go to the lowest class index.
pub fn classify(counts: &[u64]) -> usize {
    let mut best = 0;
    for (k, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = k;
        }
    }
    best
}

/// Element-wise sum of member class counts.
pub fn ensemble_counts(members: &[Vec<u64>]) -> Result<Vec<u64>, SimError> {
    let first = members.first().ok_or(SimError::EmptyEnsemble)?;
    let mut sum = vec![0u64; first.len()];
    for m in members {
        if m.len() != sum.len() {
            return Err(SimError::Mismatch(format!("{} vs {} classes", m.len(), sum.len())));
        }
        for (s, c) in sum.iter_mut().zip(m) {
            *s += c;
        }
    }
    Ok(sum)
}

pub fn ensemble_classify(members: &[Vec<u64>]) -> Result<usize, SimError> {
    Ok(classify(&ensemble_counts(members)?))
}

/// Accuracy and spike statistics of an ensemble at a fixed tick count.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub ticks: usize,
    pub ensemble_size: usize,
    /// Cores per member network.
    pub cores: usize,
    pub total: usize,
    pub correct: usize,
    pub accuracy: f64,
    /// `confusion[true][predicted]`
    pub confusion: Vec<Vec<u64>>,
    /// Mean number of neuron spikes per core per tick, over all members.
    pub spikes_per_core_tick: f64,
}

impl EvalReport {
    pub fn from_predictions(
        ticks: usize,
        ensemble_size: usize,
        cores: usize,
        classes: usize,
        outcomes: &[(usize, usize, u64)],
    ) -> Self {
        let mut confusion = vec![vec![0u64; classes]; classes];
        let mut spikes = 0u64;
        for &(label, predicted, s) in outcomes {
            confusion[label][predicted] += 1;
            spikes += s;
        }
        let total = outcomes.len();
        let correct = outcomes.iter().filter(|(l, p, _)| l == p).count();
        let core_ticks = (total * ticks * cores * ensemble_size) as f64;
        Self {
            ticks,
            ensemble_size,
            cores,
            total,
            correct,
            accuracy: if total == 0 { 0.0 } else { correct as f64 / total as f64 },
            confusion,
            spikes_per_core_tick: if core_ticks > 0.0 { spikes as f64 / core_ticks } else { 0.0 },
        }
    }
}

/// Every member must share the topology and class assignment of the first.
pub fn check_members(nets: &[DeployedNetwork]) -> Result<(), SimError> {
    let first = nets.first().ok_or(SimError::EmptyEnsemble)?;
    for (k, n) in nets.iter().enumerate().skip(1) {
        if n.plan.layers != first.plan.layers || n.plan.spec.input != first.plan.spec.input {
            return Err(SimError::Mismatch(format!("member {k} has a different topology")));
        }
        if n.plan.class_assignment != first.plan.class_assignment || n.plan.num_classes() != first.plan.num_classes() {
            return Err(SimError::Mismatch(format!("member {k} has a different class assignment")));
        }
    }
    Ok(())
}

/// Rate-encodes every image at `ticks`, simulates each member and classifies
/// by summed class counts.
pub fn evaluate(nets: &[DeployedNetwork], data: &ImageBatch, ticks: usize) -> Result<EvalReport, SimError> {
    check_members(nets)?;
    if data.is_empty() {
        return Err(SimError::EmptyDataset);
    }
    if ticks == 0 {
        return Err(SimError::ZeroTicks);
    }
    let sims: Vec<Simulator> = nets.iter().map(Simulator::new).collect();
    let classes = sims[0].num_classes();
    let outcomes = (0..data.len())
        .into_par_iter()
        .map(|i| {
            let frames = rate_encode(data.image(i), ticks).map_err(|_| SimError::ZeroTicks)?;
            let mut counts = Vec::with_capacity(sims.len());
            let mut spikes = 0;
            for sim in &sims {
                let r = sim.simulate(&frames)?;
                spikes += r.neuron_spikes;
                counts.push(r.class_counts);
            }
            Ok((data.labels[i] as usize, ensemble_classify(&counts)?, spikes))
        })
        .collect::<Result<Vec<_>, SimError>>()?;
    Ok(EvalReport::from_predictions(ticks, nets.len(), sims[0].num_cores(), classes, &outcomes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CoreParams, SynapseTemplate, AXONS, SYNAPSES};
    use crate::topology::TopologySpec;

    fn tiny_core(weights: Vec<i32>, cbin_on: &[usize], leak0: i32) -> DeployedCore {
        let mut cbin = vec![false; SYNAPSES];
        for &i in cbin_on {
            cbin[i * NEURONS] = true;
        }
        let mut leak = vec![0; NEURONS];
        leak[0] = leak0;
        DeployedCore::new(SynapseTemplate::new(weights).unwrap(), cbin, leak, AXONS, NEURONS).unwrap()
    }

    #[test]
    fn core_tick_examples() {
        let mut x = vec![false; AXONS];
        x[0] = true;
        x[1] = true;
        assert!(!core_tick(&x, &tiny_core(vec![-1, 1], &[0, 1], 0))[0]);

        let mut x = vec![false; AXONS];
        x[0] = true;
        assert!(core_tick(&x, &tiny_core(vec![2], &[0], -1))[0]);

        assert!(core_tick(&[false; AXONS], &tiny_core(vec![1], &[], 0)).iter().all(|&s| !s));
    }

    #[test]
    fn deploy_examples() {
        let mut net = ContinuousNetwork::zeros(&TopologySpec::mnist_small(), 0).unwrap();
        net.layers[0][0].c[0] = 0.7;
        net.layers[0][0].b[0] = -0.6;
        let d = deploy(&net).unwrap();
        assert!(d.layers[0][0].cbin[0]);
        assert_eq!(d.layers[0][0].leak[0], -1);
        assert_eq!(deploy(&net).unwrap(), d);
    }

    #[test]
    fn fresh_network_has_about_half_connections() {
        let net = ContinuousNetwork::initialize(&TopologySpec::mnist_small(), 21).unwrap();
        let d = deploy(&net).unwrap();
        for core in d.layers.iter().flatten() {
            let ones = core.cbin.iter().filter(|&&b| b).count() as f64;
            // binomial(65536, 0.5): sd = 128, allow 6 sd
            assert!((ones - 32768.0).abs() < 6.0 * 128.0, "{ones}");
        }
    }

    #[test]
    fn compiled_tick_matches_reference() {
        let net = ContinuousNetwork::initialize(&TopologySpec::mnist_small(), 2).unwrap();
        let d = deploy(&net).unwrap();
        let sim = Simulator::new(&d);
        let frame: Vec<bool> = (0..784).map(|k| (k * 31) % 5 == 0).collect();
        let r = sim.tick(&frame).unwrap();
        for (k, core) in d.layers[0].iter().enumerate() {
            let x: Vec<bool> = d.plan.gather_indices(0)[k].iter().map(|g| g.is_some_and(|i| frame[i])).collect();
            assert_eq!(core_tick(&x, core), r.layers[0][k * NEURONS..(k + 1) * NEURONS]);
        }
        let x: Vec<bool> = d.plan.gather_indices(1)[0].iter().map(|g| g.is_some_and(|i| r.layers[0][i])).collect();
        assert_eq!(core_tick(&x, &d.layers[1][0]), r.layers[1]);
    }

    #[test]
    fn repeated_frames_scale_counts() {
        let net = ContinuousNetwork::initialize(&TopologySpec::mnist_small(), 8).unwrap();
        let d = deploy(&net).unwrap();
        let frame: Vec<bool> = (0..784).map(|k| k % 3 == 0).collect();
        let one = simulate(&d, &SpikeFrames::from_frames(vec![frame.clone()])).unwrap();
        let two = simulate(&d, &SpikeFrames::from_frames(vec![frame.clone(), frame])).unwrap();
        assert_eq!(two, one.iter().map(|c| 2 * c).collect::<Vec<_>>());
        assert!(simulate(&d, &SpikeFrames::from_frames(vec![vec![true; 5]])).is_err());
    }

    #[test]
    fn classify_examples() {
        assert_eq!(classify(&[0, 7, 3]), 1);
        assert_eq!(classify(&[5, 5, 0]), 0);
        assert_eq!(classify(&[0, 0, 0]), 0);
    }

    #[test]
    fn ensemble_examples() {
        assert_eq!(ensemble_classify(&[vec![3, 1], vec![1, 4]]), Ok(1));
        assert_eq!(ensemble_classify(&[vec![2, 9, 1]]), Ok(classify(&[2, 9, 1])));
        assert_eq!(ensemble_classify(&[vec![4, 3], vec![4, 3]]), Ok(0));
        assert_eq!(ensemble_classify(&[]), Err(SimError::EmptyEnsemble));
        assert!(ensemble_counts(&[vec![1], vec![1, 2]]).is_err());
    }

    #[test]
    fn accuracy_definition() {
        let outcomes: Vec<(usize, usize, u64)> = (0..10).map(|k| (k % 2, if k == 3 { 0 } else { k % 2 }, 0)).collect();
        let r = EvalReport::from_predictions(1, 1, 5, 2, &outcomes);
        assert_eq!(r.accuracy, 0.9);
        assert_eq!(r.confusion, vec![vec![5, 0], vec![1, 4]]);
    }

    #[test]
    fn evaluate_is_deterministic_and_checks_members() {
        let data = {
            let pixels = (0..20 * 784).map(|k| ((k * 13) % 256) as f32 / 255.0).collect();
            ImageBatch::new(crate::topology::InputShape { h: 28, w: 28, ch: 1 }, pixels, (0..20).map(|k| k % 10).collect())
        };
        let a = deploy(&ContinuousNetwork::initialize(&TopologySpec::mnist_small(), 1).unwrap()).unwrap();
        let b = deploy(&ContinuousNetwork::initialize(&TopologySpec::mnist_small(), 2).unwrap()).unwrap();
        let r1 = evaluate(&[a.clone(), b.clone()], &data, 4).unwrap();
        let r2 = evaluate(&[a.clone(), b], &data, 4).unwrap();
        assert_eq!(r1, r2);
        assert_eq!(r1.total, 20);
        let large = deploy(&ContinuousNetwork::initialize(&TopologySpec::mnist_large(), 1).unwrap()).unwrap();
        assert!(matches!(evaluate(&[a.clone(), large], &data, 1), Err(SimError::Mismatch(_))));
        assert_eq!(evaluate(&[], &data, 1), Err(SimError::EmptyEnsemble));
        assert_eq!(evaluate(&[a], &data, 0), Err(SimError::ZeroTicks));
    }

    #[test]
    fn deploy_rejects_corrupt_params() {
        let mut net = ContinuousNetwork::zeros(&TopologySpec::mnist_small(), 0).unwrap();
        net.layers[1][0] = CoreParams::zeros(SynapseTemplate::s1(), AXONS, NEURONS).unwrap();
        net.layers[1][0].b[0] = f64::NAN;
        assert!(matches!(deploy(&net), Err(DeployError::Core { layer: 1, core: 0, .. })));
    }
}
