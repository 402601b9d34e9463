//! Whole networks: a compiled topology plus one parameter set per core.

use rand::Rng;

use crate::data::{stream_rng, StreamKind};
use crate::model::{CoreParams, DeployedCore, ModelError, NEURONS};
use crate::topology::{plan_network, TopologyError, TopologyPlan, TopologySpec};

#[derive(Debug, thiserror::Error)]
pub enum NetworkError {
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error("layer {layer}, core {core}: {source}")]
    Core { layer: usize, core: usize, source: ModelError },
    #[error("network shape does not match its topology: {0}")]
    Mismatch(String),
}

/// Trainable network: continuous connections and biases for every core.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousNetwork {
    pub plan: TopologyPlan,
    /// `layers[l][k]` is core `k` (row-major) of layer `l`.
    pub layers: Vec<Vec<CoreParams>>,
    pub seed: u64,
}

impl ContinuousNetwork {
    /// Zero connections and biases on every core.
    pub fn zeros(spec: &TopologySpec, seed: u64) -> Result<Self, NetworkError> {
        let plan = plan_network(spec)?;
        let layers = plan
            .layers
            .iter()
            .enumerate()
            .map(|(l, layer)| {
                layer
                    .cores
                    .iter()
                    .enumerate()
                    .map(|(k, core)| {
                        CoreParams::zeros(spec.template.clone(), core.used_axons, core.used_neurons)
                            .map_err(|source| NetworkError::Core { layer: l, core: k, source })
                    })
                    .collect::<Result<Vec<_>, _>>()
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { plan, layers, seed })
    }

    /// `c ~ U[0, 1]` on the used region of every core, `b = 0`.
    pub fn initialize(spec: &TopologySpec, seed: u64) -> Result<Self, NetworkError> {
        let mut net = Self::zeros(spec, seed)?;
        for (l, layer) in net.layers.iter_mut().enumerate() {
            for (k, core) in layer.iter_mut().enumerate() {
                let mut rng = stream_rng(seed, StreamKind::Init, l as u64, k as u64);
                for i in 0..core.used_axons() {
                    for j in 0..core.used_neurons() {
                        core.c[i * NEURONS + j] = rng.random::<f64>();
                    }
                }
            }
        }
        Ok(net)
    }

    pub fn spec(&self) -> &TopologySpec {
        &self.plan.spec
    }

    pub fn check_shape(&self) -> Result<(), NetworkError> {
        check_layers(&self.plan, self.layers.iter().map(|l| l.iter().map(|c| (c.used_axons(), c.used_neurons()))))
    }
}

/// Discrete network ready for the tick simulator.
#[derive(Debug, Clone, PartialEq)]
pub struct DeployedNetwork {
    pub plan: TopologyPlan,
    pub layers: Vec<Vec<DeployedCore>>,
    pub seed: u64,
}

impl DeployedNetwork {
    pub fn spec(&self) -> &TopologySpec {
        &self.plan.spec
    }

    pub fn template_name(&self) -> String {
        self.plan.spec.template.name()
    }

    pub fn topology_hash(&self) -> String {
        self.plan.spec.hash()
    }

    pub fn check_shape(&self) -> Result<(), NetworkError> {
        check_layers(&self.plan, self.layers.iter().map(|l| l.iter().map(|c| (c.used_axons(), c.used_neurons()))))
    }

    /// Continuous view (`c ∈ {0, 1}`, `b = leak`) sharing this network's plan.
    pub fn to_continuous(&self) -> ContinuousNetwork {
        ContinuousNetwork {
            plan: self.plan.clone(),
            layers: self.layers.iter().map(|l| l.iter().map(DeployedCore::to_params).collect()).collect(),
            seed: self.seed,
        }
    }
}

fn check_layers<I, J>(plan: &TopologyPlan, layers: I) -> Result<(), NetworkError>
where
    I: ExactSizeIterator<Item = J>,
    J: ExactSizeIterator<Item = (usize, usize)>,
{
    if layers.len() != plan.layers.len() {
        return Err(NetworkError::Mismatch(format!("{} layers, plan has {}", layers.len(), plan.layers.len())));
    }
    for (l, (cores, planned)) in layers.zip(&plan.layers).enumerate() {
        if cores.len() != planned.cores.len() {
            return Err(NetworkError::Mismatch(format!(
                "layer {} has {} cores, plan has {}",
                l + 1,
                cores.len(),
                planned.cores.len()
            )));
        }
        for (k, ((axons, neurons), core)) in cores.zip(&planned.cores).enumerate() {
            if axons != core.used_axons || neurons != core.used_neurons {
                return Err(NetworkError::Mismatch(format!("layer {} core {k} uses {axons}x{neurons}", l + 1)));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn initialization_is_seeded_and_bounded() {
        let a = ContinuousNetwork::initialize(&TopologySpec::mnist_small(), 11).unwrap();
        let b = ContinuousNetwork::initialize(&TopologySpec::mnist_small(), 11).unwrap();
        let c = ContinuousNetwork::initialize(&TopologySpec::mnist_small(), 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.layers[0][0].c, c.layers[0][0].c);
        assert!(a.layers.iter().flatten().all(|core| core.c.iter().all(|v| (0.0..1.0).contains(v))));
        assert!(a.layers.iter().flatten().all(|core| core.b.iter().all(|&v| v == 0.0)));
        a.check_shape().unwrap();
    }

    #[test]
    fn shape_check_catches_missing_core() {
        let mut a = ContinuousNetwork::zeros(&TopologySpec::mnist_small(), 0).unwrap();
        a.layers[0].pop();
        assert!(matches!(a.check_shape(), Err(NetworkError::Mismatch(_))));
    }
}
