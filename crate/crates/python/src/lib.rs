//! Python bindings: topology planning, training, deployment, simulation and
//! the energy model.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use neurocore::analysis::{energy_estimate as energy, EnergyModel};
use neurocore::data::{load_idx, rate_encode as encode, AugmentConfig, ImageBatch};
use neurocore::deploy::Simulator;
use neurocore::netfile::{self, AnyNetwork};
use neurocore::topology::{plan_network, validate, InputShape};
use neurocore::trainer::{self, TrainConfig, TrainError};
use neurocore::{model, SynapseTemplate};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse_template(name: &str) -> PyResult<SynapseTemplate> {
    SynapseTemplate::parse(name).map_err(value_err)
}

/// Layer specification and synapse template of a network.
#[pyclass(module = "neurocore_py", frozen)]
struct Topology {
    spec: neurocore::TopologySpec,
}

#[pymethods]
impl Topology {
    /// "mnist-small" or "mnist-large".
    #[staticmethod]
    #[pyo3(signature = (name, template = "s1"))]
    fn preset(name: &str, template: &str) -> PyResult<Self> {
        let spec = neurocore::TopologySpec::preset(name).map_err(value_err)?;
        Ok(Self { spec: spec.with_template(parse_template(template)?) })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self { spec: serde_json::from_str(text).map_err(value_err)? })
    }

    fn to_json(&self) -> String {
        serde_json::to_string(&self.spec).expect("spec serializes")
    }

    /// `[(rows, cols), ...]` per layer.
    fn grids(&self) -> PyResult<Vec<(usize, usize)>> {
        let plan = plan_network(&self.spec).map_err(value_err)?;
        Ok(plan.layers.iter().map(|l| (l.grid_rows, l.grid_cols)).collect())
    }

    fn total_cores(&self) -> PyResult<usize> {
        Ok(plan_network(&self.spec).map_err(value_err)?.total_cores())
    }

    /// Human-readable plan; raises ValueError listing any violated core constraint.
    fn summary(&self) -> PyResult<String> {
        let plan = plan_network(&self.spec).map_err(value_err)?;
        if let Err(v) = validate(&plan) {
            let lines: Vec<String> = v.iter().map(ToString::to_string).collect();
            return Err(PyValueError::new_err(lines.join("\n")));
        }
        Ok(plan.summary())
    }

    fn hash(&self) -> String {
        self.spec.hash()
    }

    fn __repr__(&self) -> String {
        format!("Topology(layers={}, template={})", self.spec.layers.len(), self.spec.template.name())
    }
}

/// Labelled images with pixel values in [0, 1].
#[pyclass(module = "neurocore_py", frozen)]
struct Dataset {
    batch: ImageBatch,
}

#[pymethods]
impl Dataset {
    /// `images` is a list of flat pixel lists of length `height * width`.
    #[new]
    #[pyo3(signature = (images, labels, height = 28, width = 28))]
    fn new(images: Vec<Vec<f32>>, labels: Vec<u8>, height: usize, width: usize) -> PyResult<Self> {
        if images.len() != labels.len() {
            return Err(PyValueError::new_err(format!("{} images but {} labels", images.len(), labels.len())));
        }
        let shape = InputShape { h: height, w: width, ch: 1 };
        if let Some(bad) = images.iter().position(|im| im.len() != shape.len()) {
            return Err(PyValueError::new_err(format!("image {bad} does not have {} pixels", shape.len())));
        }
        if images.iter().flatten().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(PyValueError::new_err("pixel values must lie in [0, 1]"));
        }
        Ok(Self { batch: ImageBatch::new(shape, images.concat(), labels) })
    }

    /// Reads an IDX image/label pair, optionally keeping only the first `limit`.
    #[staticmethod]
    #[pyo3(signature = (images, labels, limit = None))]
    fn load_idx(images: PathBuf, labels: PathBuf, limit: Option<usize>) -> PyResult<Self> {
        let batch = load_idx(&images, &labels).map_err(|e| PyIOError::new_err(e.to_string()))?;
        Ok(Self { batch: limit.map_or(batch.clone(), |n| batch.take(n)) })
    }

    fn __len__(&self) -> usize {
        self.batch.len()
    }

    fn image(&self, index: usize) -> PyResult<Vec<f32>> {
        self.check(index)?;
        Ok(self.batch.image(index).to_vec())
    }

    fn label(&self, index: usize) -> PyResult<u8> {
        self.check(index)?;
        Ok(self.batch.labels[index])
    }
}

impl Dataset {
    fn check(&self, index: usize) -> PyResult<()> {
        if index >= self.batch.len() {
            return Err(pyo3::exceptions::PyIndexError::new_err(index));
        }
        Ok(())
    }
}

/// A continuous network together with its training position.
#[pyclass(module = "neurocore_py")]
struct TrainRun {
    run: trainer::TrainRun,
}

#[pymethods]
impl TrainRun {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self { run: netfile::load_checkpoint(&path).map_err(|e| PyIOError::new_err(e.to_string()))? })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        netfile::save_checkpoint(&path, &self.run).map_err(|e| PyIOError::new_err(e.to_string()))
    }

    #[getter]
    fn iteration(&self) -> u64 {
        self.run.iteration
    }

    /// `[(iteration, mean_loss), ...]`
    #[getter]
    fn history(&self) -> Vec<(u64, f64)> {
        self.run.history.iter().map(|h| (h.iteration, h.loss)).collect()
    }

    /// Training-mode class scores of one image.
    #[pyo3(signature = (image, sigma_floor = 1e-3))]
    fn scores(&self, image: Vec<f64>, sigma_floor: f64) -> PyResult<Vec<f64>> {
        let (scores, _) = trainer::network_forward_train(&self.run.network, &image, sigma_floor).map_err(value_err)?;
        Ok(scores)
    }

    fn deploy(&self) -> PyResult<DeployedNetwork> {
        let net = neurocore::deploy(&self.run.network).map_err(value_err)?;
        Ok(DeployedNetwork::wrap(net))
    }
}

fn train_error(e: TrainError) -> PyErr {
    match e {
        TrainError::Diverged { .. } | TrainError::NonFinite { .. } => PyRuntimeError::new_err(e.to_string()),
        _ => value_err(e),
    }
}

/// Trains a fresh network, or continues `resume` up to `iterations`.
#[pyfunction]
#[pyo3(signature = (
    data, iterations, topology = None, batch = 100, lr0 = 0.1, aug = "none", template = "s1",
    seed = 0, sigma_floor = 1e-3, log_every = 100, resume = None
))]
#[allow(clippy::too_many_arguments)]
fn train(
    py: Python<'_>,
    data: &Dataset,
    iterations: u64,
    topology: Option<&Topology>,
    batch: usize,
    lr0: f64,
    aug: &str,
    template: &str,
    seed: u64,
    sigma_floor: f64,
    log_every: u64,
    resume: Option<&TrainRun>,
) -> PyResult<TrainRun> {
    let cfg = TrainConfig {
        batch_size: batch,
        lr0,
        total_iterations: iterations,
        sigma_floor,
        seed,
        augment: AugmentConfig::preset(aug).ok_or_else(|| value_err(format!("unknown augmentation {aug:?}")))?,
        template: parse_template(template)?,
        log_every,
        ..TrainConfig::default()
    };
    cfg.validate().map_err(train_error)?;
    let run = match resume {
        Some(r) => r.run.clone(),
        None => {
            let spec = topology.map_or_else(neurocore::TopologySpec::mnist_small, |t| t.spec.clone());
            trainer::TrainRun::new(&spec, &cfg).map_err(train_error)?
        }
    };
    let batch_data = &data.batch;
    let run = py
        .detach(|| trainer::continue_training(run, &cfg, batch_data, |_, _| None))
        .map_err(train_error)?;
    Ok(TrainRun { run })
}

/// A fully discrete network ready for simulation.
#[pyclass(module = "neurocore_py", frozen)]
struct DeployedNetwork {
    net: neurocore::DeployedNetwork,
    sim: Simulator,
}

impl DeployedNetwork {
    fn wrap(net: neurocore::DeployedNetwork) -> Self {
        let sim = Simulator::new(&net);
        Self { net, sim }
    }
}

#[pymethods]
impl DeployedNetwork {
    /// Loads a deployed file; continuous checkpoints are binarized on load.
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let doc = netfile::load_network(&path).map_err(|e| PyIOError::new_err(e.to_string()))?;
        let net = match doc.network {
            AnyNetwork::Deployed(n) => n,
            AnyNetwork::Continuous(n) => neurocore::deploy(&n).map_err(value_err)?,
        };
        Ok(Self::wrap(net))
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        netfile::save_deployed(&path, &self.net).map_err(|e| PyIOError::new_err(e.to_string()))
    }

    #[getter]
    fn num_cores(&self) -> usize {
        self.sim.num_cores()
    }

    #[getter]
    fn template(&self) -> String {
        self.net.template_name()
    }

    /// Per-class spike counts of one image over `ticks`.
    #[pyo3(signature = (image, ticks = 1))]
    fn simulate(&self, image: Vec<f32>, ticks: usize) -> PyResult<Vec<u64>> {
        let frames = encode(&image, ticks).map_err(value_err)?;
        Ok(self.sim.simulate(&frames).map_err(value_err)?.class_counts)
    }

    #[pyo3(signature = (image, ticks = 1))]
    fn classify(&self, image: Vec<f32>, ticks: usize) -> PyResult<usize> {
        Ok(neurocore::classify(&self.simulate(image, ticks)?))
    }

    /// `{synapse value: count}` over all used synapses.
    fn weight_counts<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let h = neurocore::analysis::weight_histogram(&self.net);
        let d = PyDict::new(py);
        for layer in &h.layers {
            for (v, c) in layer {
                let prev: u64 = d.get_item(v)?.map(|x| x.extract()).transpose()?.unwrap_or(0);
                d.set_item(v, prev + c)?;
            }
        }
        Ok(d)
    }
}

/// Accuracy of an ensemble (one or more networks) at `ticks`.
#[pyfunction]
#[pyo3(signature = (networks, data, ticks = 1))]
fn evaluate<'py>(
    py: Python<'py>,
    networks: Vec<PyRef<'py, DeployedNetwork>>,
    data: &Dataset,
    ticks: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let nets: Vec<neurocore::DeployedNetwork> = networks.iter().map(|n| n.net.clone()).collect();
    let batch = &data.batch;
    let r = py.detach(|| neurocore::evaluate(&nets, batch, ticks)).map_err(value_err)?;
    let d = PyDict::new(py);
    d.set_item("ticks", r.ticks)?;
    d.set_item("ensemble_size", r.ensemble_size)?;
    d.set_item("cores", r.cores)?;
    d.set_item("total", r.total)?;
    d.set_item("correct", r.correct)?;
    d.set_item("accuracy", r.accuracy)?;
    d.set_item("spikes_per_core_tick", r.spikes_per_core_tick)?;
    d.set_item("confusion", r.confusion)?;
    Ok(d)
}

/// Deterministic rate code: one list of booleans per tick.
#[pyfunction]
fn rate_encode(pixels: Vec<f32>, ticks: usize) -> PyResult<Vec<Vec<bool>>> {
    let frames = encode(&pixels, ticks).map_err(value_err)?;
    Ok((0..frames.ticks()).map(|t| frames.frame(t).to_vec()).collect())
}

#[pyfunction]
fn quantize_bias(b: f64) -> PyResult<i32> {
    model::quantize_bias(b).map_err(value_err)
}

#[pyfunction]
#[pyo3(signature = (cores, ticks, ensemble_size, mean_spikes, e_static = 1.0, e_spike = 0.0))]
fn energy_estimate(
    cores: usize,
    ticks: usize,
    ensemble_size: usize,
    mean_spikes: f64,
    e_static: f64,
    e_spike: f64,
) -> PyResult<f64> {
    let m = EnergyModel::new(e_static, e_spike).map_err(value_err)?;
    Ok(energy(&m, cores, ticks, ensemble_size, mean_spikes))
}

#[pymodule]
fn neurocore_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Topology>()?;
    m.add_class::<Dataset>()?;
    m.add_class::<TrainRun>()?;
    m.add_class::<DeployedNetwork>()?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(rate_encode, m)?)?;
    m.add_function(wrap_pyfunction!(quantize_bias, m)?)?;
    m.add_function(wrap_pyfunction!(energy_estimate, m)?)?;
    Ok(())
}
