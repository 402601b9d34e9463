//! Training and deployment of networks built from 256-axon × 256-neuron
//! crossbar cores.
//!
//! - [`model`]: core types, binarization, effective weights, bias quantization
//! - [`topology`]: block/stride specifications compiled into core graphs
//! - [`data`]: MNIST IDX loading, affine augmentation, rate-code encoding
//! - [`trainer`]: binarized forward pass, straight-through backward pass, SGD
//! - [`deploy`]: discrete networks and the tick-based spiking simulator
//! - [`analysis`]: weight histograms, accuracy tables, energy model
//! - [`netfile`]: the JSON network/checkpoint format

pub mod analysis;
pub mod data;
pub mod deploy;
pub mod model;
pub mod netfile;
pub mod network;
pub mod normal;
pub mod topology;
pub mod trainer;

pub use deploy::{classify, core_tick, deploy, ensemble_classify, evaluate, simulate, EvalReport, Simulator};
pub use model::{effective_weight, quantize_bias, CoreParams, DeployedCore, SynapseTemplate, AXONS, NEURONS};
pub use network::{ContinuousNetwork, DeployedNetwork};
pub use topology::{plan_network, validate, LayerSpec, TopologyPlan, TopologySpec};
pub use trainer::{train, TrainConfig, TrainRun};
