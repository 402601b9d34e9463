//! Compiles block/stride layer specifications into a graph of crossbar cores.
//!
//! Layer 1 tiles the input image in pixels; every later layer tiles the core
//! grid of the layer below. Each block becomes one core. Between layers, each
//! lower core splits its neurons into `blockCores²` contiguous groups and sends
//! group `dr * blockCores + dc` to the upper core that sees it at relative
//! position `(dr, dc)`. Groups with no such upper core stay unrouted.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::model::{SynapseTemplate, AXONS, NEURONS};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TopologyError {
    #[error("layer {layer}: block {block} does not fit extent {extent}")]
    BlockTooLarge { layer: usize, block: usize, extent: usize },
    #[error("layer {layer}: block size and stride must be positive")]
    ZeroSize { layer: usize },
    #[error("layer {layer}: stride {stride} exceeds block size {block}")]
    StrideExceedsBlock { layer: usize, block: usize, stride: usize },
    #[error("layer {layer}: expected unit {expected:?}")]
    WrongUnit { layer: usize, expected: Unit },
    #[error("layer {layer}: {axons} axons per core exceeds the limit of {AXONS}")]
    TooManyAxons { layer: usize, axons: usize },
    #[error("layer {layer}: {groups} neuron groups do not divide {NEURONS} neurons")]
    GroupsDoNotDivide { layer: usize, groups: usize },
    #[error("network needs at least one layer")]
    NoLayers,
    #[error("input shape must be positive, got {h}x{w}x{ch}")]
    BadInput { h: usize, w: usize, ch: usize },
    #[error("cannot spread {classes} classes over {neurons} output neurons")]
    BadClassCount { classes: usize, neurons: usize },
    #[error("unknown preset {0:?}")]
    UnknownPreset(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Unit {
    Pixels,
    Cores,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LayerSpec {
    pub block_size: usize,
    pub stride: usize,
    pub unit: Unit,
}

impl LayerSpec {
    pub fn pixels(block_size: usize, stride: usize) -> Self {
        Self { block_size, stride, unit: Unit::Pixels }
    }

    pub fn cores(block_size: usize, stride: usize) -> Self {
        Self { block_size, stride, unit: Unit::Cores }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct InputShape {
    pub h: usize,
    pub w: usize,
    pub ch: usize,
}

impl InputShape {
    pub fn len(&self) -> usize {
        self.h * self.w * self.ch
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flat index of pixel `(row, col, channel)`, channel fastest.
    pub fn index(&self, row: usize, col: usize, channel: usize) -> usize {
        (row * self.w + col) * self.ch + channel
    }
}

/// The topology file: input shape, layers, synapse template and class count.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TopologySpec {
    pub input: InputShape,
    pub layers: Vec<LayerSpec>,
    pub template: SynapseTemplate,
    pub classes: usize,
}

impl TopologySpec {
    /// Two layers, five cores.
    pub fn mnist_small() -> Self {
        Self {
            input: InputShape { h: 28, w: 28, ch: 1 },
            layers: vec![LayerSpec::pixels(16, 12), LayerSpec::cores(2, 1)],
            template: SynapseTemplate::s1(),
            classes: 10,
        }
    }

    /// Four layers, thirty cores.
    pub fn mnist_large() -> Self {
        Self {
            input: InputShape { h: 28, w: 28, ch: 1 },
            layers: vec![
                LayerSpec::pixels(16, 4),
                LayerSpec::cores(2, 1),
                LayerSpec::cores(2, 1),
                LayerSpec::cores(2, 1),
            ],
            template: SynapseTemplate::s1(),
            classes: 10,
        }
    }

    pub fn preset(name: &str) -> Result<Self, TopologyError> {
        match name {
            "mnist-small" => Ok(Self::mnist_small()),
            "mnist-large" => Ok(Self::mnist_large()),
            other => Err(TopologyError::UnknownPreset(other.to_string())),
        }
    }

    pub fn with_template(mut self, template: SynapseTemplate) -> Self {
        self.template = template;
        self
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("topology spec serializes");
        hex_digest(json.as_bytes())
    }
}

pub(crate) fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Where an axon's input comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AxonSource {
    Pixel { row: usize, col: usize, channel: usize },
    Neuron { layer: usize, core_row: usize, core_col: usize, neuron: usize },
    Unused,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorePlan {
    pub row: usize,
    pub col: usize,
    pub axon_sources: Vec<AxonSource>,
    pub used_axons: usize,
    pub used_neurons: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerPlan {
    pub grid_rows: usize,
    pub grid_cols: usize,
    /// Row-major.
    pub cores: Vec<CorePlan>,
}

impl LayerPlan {
    pub fn core(&self, row: usize, col: usize) -> &CorePlan {
        &self.cores[row * self.grid_cols + col]
    }

    pub fn num_cores(&self) -> usize {
        self.cores.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TopologyPlan {
    pub spec: TopologySpec,
    pub layers: Vec<LayerPlan>,
    /// Class of each output-layer neuron, indexed by `core * NEURONS + neuron`.
    pub class_assignment: Vec<usize>,
}

impl TopologyPlan {
    pub fn input_shape(&self) -> InputShape {
        self.spec.input
    }

    pub fn num_classes(&self) -> usize {
        self.spec.classes
    }

    pub fn total_cores(&self) -> usize {
        self.layers.iter().map(LayerPlan::num_cores).sum()
    }

    pub fn output_layer(&self) -> &LayerPlan {
        self.layers.last().expect("plan has at least one layer")
    }

    /// Output neurons assigned to each class.
    pub fn neurons_per_class(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes()];
        for &c in &self.class_assignment {
            counts[c] += 1;
        }
        counts
    }

    /// Flat input indices per core of `layer`: pixel index for layer 0, index
    /// `core * NEURONS + neuron` into the previous layer otherwise. `None` marks
    /// an unused axon.
    pub fn gather_indices(&self, layer: usize) -> Vec<Vec<Option<usize>>> {
        let shape = self.input_shape();
        let prev_cols = if layer > 0 { self.layers[layer - 1].grid_cols } else { 0 };
        self.layers[layer]
            .cores
            .iter()
            .map(|core| {
                core.axon_sources
                    .iter()
                    .map(|src| match *src {
                        AxonSource::Pixel { row, col, channel } => Some(shape.index(row, col, channel)),
                        AxonSource::Neuron { core_row, core_col, neuron, .. } => {
                            Some((core_row * prev_cols + core_col) * NEURONS + neuron)
                        }
                        AxonSource::Unused => None,
                    })
                    .collect()
            })
            .collect()
    }

    pub fn summary(&self) -> String {
        let mut out = String::new();
        for (k, layer) in self.layers.iter().enumerate() {
            out.push_str(&format!(
                "layer {}: grid {}x{} ({} cores)\n",
                k + 1,
                layer.grid_rows,
                layer.grid_cols,
                layer.num_cores()
            ));
        }
        out.push_str(&format!("layers: {}, cores: {}\n", self.layers.len(), self.total_cores()));
        out
    }
}

/// Block offsets `0, stride, 2*stride, ...` with `offset + block <= extent`.
pub fn tile_positions(extent: usize, block: usize, stride: usize) -> Result<Vec<usize>, TopologyError> {
    tile_positions_for_layer(1, extent, block, stride)
}

fn tile_positions_for_layer(
    layer: usize,
    extent: usize,
    block: usize,
    stride: usize,
) -> Result<Vec<usize>, TopologyError> {
    if block == 0 || stride == 0 {
        return Err(TopologyError::ZeroSize { layer });
    }
    if block > extent {
        return Err(TopologyError::BlockTooLarge { layer, block, extent });
    }
    Ok((0..=extent - block).step_by(stride).collect())
}

/// One inter-layer connection: lower neuron to upper axon.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Route {
    pub lower_core: (usize, usize),
    pub neuron: usize,
    pub upper_core: (usize, usize),
    pub axon: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Routing {
    pub upper_rows: usize,
    pub upper_cols: usize,
    pub routes: Vec<Route>,
}

/// `((core_row, core_col), neuron or axon)`
pub type Endpoint = ((usize, usize), usize);

impl Routing {
    /// Lookup from lower `(core, neuron)` to upper `(core, axon)`.
    pub fn by_lower(&self) -> HashMap<Endpoint, Endpoint> {
        self.routes.iter().map(|r| ((r.lower_core, r.neuron), (r.upper_core, r.axon))).collect()
    }
}

/// Routes lower-core neurons to upper-core axons for a `block_cores` /
/// `stride` tiling of a `lower_rows x lower_cols` core grid.
pub fn route_interlayer(
    lower_rows: usize,
    lower_cols: usize,
    block_cores: usize,
    stride: usize,
) -> Result<Routing, TopologyError> {
    route_for_layer(2, lower_rows, lower_cols, block_cores, stride)
}

fn route_for_layer(
    layer: usize,
    lower_rows: usize,
    lower_cols: usize,
    block_cores: usize,
    stride: usize,
) -> Result<Routing, TopologyError> {
    let rows = tile_positions_for_layer(layer, lower_rows, block_cores, stride)?;
    let cols = tile_positions_for_layer(layer, lower_cols, block_cores, stride)?;
    let groups = block_cores * block_cores;
    if !NEURONS.is_multiple_of(groups) {
        return Err(TopologyError::GroupsDoNotDivide { layer, groups });
    }
    let group_size = NEURONS / groups;
    let mut routes = Vec::with_capacity(rows.len() * cols.len() * NEURONS);
    for (ur, &r0) in rows.iter().enumerate() {
        for (uc, &c0) in cols.iter().enumerate() {
            for dr in 0..block_cores {
                for dc in 0..block_cores {
                    let group = dr * block_cores + dc;
                    for k in 0..group_size {
                        routes.push(Route {
                            lower_core: (r0 + dr, c0 + dc),
                            neuron: group * group_size + k,
                            upper_core: (ur, uc),
                            axon: group * group_size + k,
                        });
                    }
                }
            }
        }
    }
    Ok(Routing { upper_rows: rows.len(), upper_cols: cols.len(), routes })
}

/// Round-robin class readout: neuron `n` reports class `n mod classes`.
pub fn assign_classes(output_neurons: usize, classes: usize) -> Result<Vec<usize>, TopologyError> {
    if classes == 0 || classes > output_neurons {
        return Err(TopologyError::BadClassCount { classes, neurons: output_neurons });
    }
    Ok((0..output_neurons).map(|n| n % classes).collect())
}

pub fn plan_network(spec: &TopologySpec) -> Result<TopologyPlan, TopologyError> {
    let InputShape { h, w, ch } = spec.input;
    if h == 0 || w == 0 || ch == 0 {
        return Err(TopologyError::BadInput { h, w, ch });
    }
    let Some(first) = spec.layers.first() else {
        return Err(TopologyError::NoLayers);
    };
    for (k, layer) in spec.layers.iter().enumerate() {
        let expected = if k == 0 { Unit::Pixels } else { Unit::Cores };
        if layer.unit != expected {
            return Err(TopologyError::WrongUnit { layer: k + 1, expected });
        }
        if layer.block_size == 0 || layer.stride == 0 {
            return Err(TopologyError::ZeroSize { layer: k + 1 });
        }
        if layer.stride > layer.block_size {
            return Err(TopologyError::StrideExceedsBlock {
                layer: k + 1,
                block: layer.block_size,
                stride: layer.stride,
            });
        }
    }

    let axons = first.block_size * first.block_size * ch;
    if axons > AXONS {
        return Err(TopologyError::TooManyAxons { layer: 1, axons });
    }
    let rows = tile_positions_for_layer(1, h, first.block_size, first.stride)?;
    let cols = tile_positions_for_layer(1, w, first.block_size, first.stride)?;
    let mut cores = Vec::with_capacity(rows.len() * cols.len());
    for (gr, &r0) in rows.iter().enumerate() {
        for (gc, &c0) in cols.iter().enumerate() {
            let mut sources = Vec::with_capacity(AXONS);
            for dy in 0..first.block_size {
                for dx in 0..first.block_size {
                    for channel in 0..ch {
                        sources.push(AxonSource::Pixel { row: r0 + dy, col: c0 + dx, channel });
                    }
                }
            }
            sources.resize(AXONS, AxonSource::Unused);
            cores.push(CorePlan { row: gr, col: gc, axon_sources: sources, used_axons: axons, used_neurons: NEURONS });
        }
    }
    let mut layers = vec![LayerPlan { grid_rows: rows.len(), grid_cols: cols.len(), cores }];

    for (k, spec_layer) in spec.layers.iter().enumerate().skip(1) {
        let lower = layers.last().expect("at least one layer");
        let routing =
            route_for_layer(k + 1, lower.grid_rows, lower.grid_cols, spec_layer.block_size, spec_layer.stride)?;
        let mut cores: Vec<CorePlan> = (0..routing.upper_rows * routing.upper_cols)
            .map(|n| CorePlan {
                row: n / routing.upper_cols,
                col: n % routing.upper_cols,
                axon_sources: vec![AxonSource::Unused; AXONS],
                used_axons: 0,
                used_neurons: NEURONS,
            })
            .collect();
        for route in &routing.routes {
            let core = &mut cores[route.upper_core.0 * routing.upper_cols + route.upper_core.1];
            core.axon_sources[route.axon] = AxonSource::Neuron {
                layer: k - 1,
                core_row: route.lower_core.0,
                core_col: route.lower_core.1,
                neuron: route.neuron,
            };
            core.used_axons += 1;
        }
        layers.push(LayerPlan { grid_rows: routing.upper_rows, grid_cols: routing.upper_cols, cores });
    }

    let output_neurons: usize = layers.last().map(|l| l.cores.iter().map(|c| c.used_neurons).sum()).unwrap_or(0);
    let class_assignment = assign_classes(output_neurons, spec.classes)?;
    Ok(TopologyPlan { spec: spec.clone(), layers, class_assignment })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ViolationKind {
    TooManyAxons(usize),
    TooManyNeurons(usize),
    UsedAxonCount { declared: usize, actual: usize },
    /// Neuron `(core_row, core_col, neuron)` of the previous layer feeds more than one axon.
    FanOut { core_row: usize, core_col: usize, neuron: usize },
    DanglingSource { axon: usize },
    PixelOutOfRange { axon: usize },
    ClassAssignment,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    /// 1-based layer number.
    pub layer: usize,
    pub core: Option<(usize, usize)>,
    pub kind: ViolationKind,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "layer {}", self.layer)?;
        if let Some((r, c)) = self.core {
            write!(f, " core ({r},{c})")?;
        }
        match &self.kind {
            ViolationKind::TooManyAxons(n) => write!(f, ": {n} axons exceed {AXONS}"),
            ViolationKind::TooManyNeurons(n) => write!(f, ": {n} neurons exceed {NEURONS}"),
            ViolationKind::UsedAxonCount { declared, actual } => {
                write!(f, ": declares {declared} used axons but {actual} have sources")
            }
            ViolationKind::FanOut { core_row, core_col, neuron } => {
                write!(f, ": neuron {neuron} of core ({core_row},{core_col}) feeds more than one axon")
            }
            ViolationKind::DanglingSource { axon } => write!(f, ": axon {axon} refers to a missing neuron"),
            ViolationKind::PixelOutOfRange { axon } => write!(f, ": axon {axon} refers to a pixel outside the input"),
            ViolationKind::ClassAssignment => write!(f, ": class assignment does not cover the output neurons"),
        }
    }
}

/// Audits core limits, fan-out and source completeness.
pub fn validate(plan: &TopologyPlan) -> Result<(), Vec<Violation>> {
    let mut violations = Vec::new();
    let shape = plan.input_shape();
    for (k, layer) in plan.layers.iter().enumerate() {
        let mut fed: HashMap<(usize, usize, usize), usize> = HashMap::new();
        for core in &layer.cores {
            let at = |kind| Violation { layer: k + 1, core: Some((core.row, core.col)), kind };
            if core.axon_sources.len() > AXONS {
                violations.push(at(ViolationKind::TooManyAxons(core.axon_sources.len())));
            }
            if core.used_neurons > NEURONS {
                violations.push(at(ViolationKind::TooManyNeurons(core.used_neurons)));
            }
            let actual = core.axon_sources.iter().filter(|s| **s != AxonSource::Unused).count();
            if actual != core.used_axons {
                violations.push(at(ViolationKind::UsedAxonCount { declared: core.used_axons, actual }));
            }
            for (axon, src) in core.axon_sources.iter().enumerate() {
                match *src {
                    AxonSource::Pixel { row, col, channel } => {
                        if k != 0 || row >= shape.h || col >= shape.w || channel >= shape.ch {
                            violations.push(at(ViolationKind::PixelOutOfRange { axon }));
                        }
                    }
                    AxonSource::Neuron { layer, core_row, core_col, neuron } => {
                        let exists = k > 0
                            && layer + 1 == k
                            && core_row < plan.layers[k - 1].grid_rows
                            && core_col < plan.layers[k - 1].grid_cols
                            && neuron < plan.layers[k - 1].core(core_row, core_col).used_neurons;
                        if !exists {
                            violations.push(at(ViolationKind::DanglingSource { axon }));
                        } else {
                            *fed.entry((core_row, core_col, neuron)).or_default() += 1;
                        }
                    }
                    AxonSource::Unused => {}
                }
            }
        }
        let mut fan_out: Vec<_> = fed.into_iter().filter(|&(_, n)| n > 1).map(|(key, _)| key).collect();
        fan_out.sort_unstable();
        for (core_row, core_col, neuron) in fan_out {
            violations.push(Violation {
                layer: k,
                core: Some((core_row, core_col)),
                kind: ViolationKind::FanOut { core_row, core_col, neuron },
            });
        }
    }
    let output_neurons: usize = plan.output_layer().cores.iter().map(|c| c.used_neurons).sum();
    if plan.class_assignment.len() != output_neurons || plan.class_assignment.iter().any(|&c| c >= plan.num_classes())
    {
        violations.push(Violation { layer: plan.layers.len(), core: None, kind: ViolationKind::ClassAssignment });
    }
    if violations.is_empty() {
        Ok(())
    } else {
        Err(violations)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::HashSet;

    fn grids(plan: &TopologyPlan) -> Vec<(usize, usize)> {
        plan.layers.iter().map(|l| (l.grid_rows, l.grid_cols)).collect()
    }

    #[test]
    fn tile_examples() {
        assert_eq!(tile_positions(28, 16, 12).unwrap(), vec![0, 12]);
        assert_eq!(tile_positions(28, 16, 4).unwrap(), vec![0, 4, 8, 12]);
        assert_eq!(tile_positions(2, 2, 1).unwrap(), vec![0]);
        assert_eq!(tile_positions(28, 20, 12).unwrap(), vec![0]);
        assert!(matches!(tile_positions(10, 11, 1), Err(TopologyError::BlockTooLarge { .. })));
        assert!(tile_positions(10, 2, 0).is_err());
    }

    #[test]
    fn presets_match_published_core_counts() {
        let small = plan_network(&TopologySpec::mnist_small()).unwrap();
        assert_eq!(grids(&small), vec![(2, 2), (1, 1)]);
        assert_eq!(small.total_cores(), 5);
        let large = plan_network(&TopologySpec::mnist_large()).unwrap();
        assert_eq!(grids(&large), vec![(4, 4), (3, 3), (2, 2), (1, 1)]);
        assert_eq!(large.total_cores(), 30);
        assert!(validate(&small).is_ok());
        assert!(validate(&large).is_ok());
    }

    #[test]
    fn two_channel_block_exceeds_axons() {
        let mut spec = TopologySpec::mnist_small();
        spec.input.ch = 2;
        assert_eq!(plan_network(&spec), Err(TopologyError::TooManyAxons { layer: 1, axons: 512 }));
    }

    #[test]
    fn unit_and_stride_rules() {
        let mut spec = TopologySpec::mnist_small();
        spec.layers[1].unit = Unit::Pixels;
        assert!(matches!(plan_network(&spec), Err(TopologyError::WrongUnit { layer: 2, .. })));
        let mut spec = TopologySpec::mnist_small();
        spec.layers[0].stride = 17;
        assert!(matches!(plan_network(&spec), Err(TopologyError::StrideExceedsBlock { layer: 1, .. })));
        let mut spec = TopologySpec::mnist_small();
        spec.layers[1] = LayerSpec::cores(3, 1);
        assert!(matches!(plan_network(&spec), Err(TopologyError::BlockTooLarge { layer: 2, .. })));
        let mut spec = TopologySpec::mnist_large();
        spec.layers[1] = LayerSpec::cores(3, 1);
        assert_eq!(plan_network(&spec), Err(TopologyError::GroupsDoNotDivide { layer: 2, groups: 9 }));
        let mut spec = TopologySpec::mnist_small();
        spec.layers.clear();
        assert_eq!(plan_network(&spec), Err(TopologyError::NoLayers));
    }

    #[test]
    fn routing_single_upper_core() {
        let r = route_interlayer(2, 2, 2, 1).unwrap();
        assert_eq!((r.upper_rows, r.upper_cols), (1, 1));
        assert_eq!(r.routes.len(), 256);
        for lower in [(0, 0), (0, 1), (1, 0), (1, 1)] {
            let group: Vec<_> = r.routes.iter().filter(|x| x.lower_core == lower).collect();
            assert_eq!(group.len(), 64);
            let g = lower.0 * 2 + lower.1;
            assert!(group.iter().all(|x| x.neuron / 64 == g));
        }
        let axons: HashSet<_> = r.routes.iter().map(|x| x.axon).collect();
        assert_eq!(axons.len(), 256);
    }

    #[test]
    fn routing_four_by_four_audit() {
        let r = route_interlayer(4, 4, 2, 1).unwrap();
        assert_eq!((r.upper_rows, r.upper_cols), (3, 3));
        // fan-out <= 1
        let mut seen = HashSet::new();
        for x in &r.routes {
            assert!(seen.insert((x.lower_core, x.neuron)), "neuron routed twice: {x:?}");
        }
        // every upper core saturated
        for ur in 0..3 {
            for uc in 0..3 {
                let axons: HashSet<_> =
                    r.routes.iter().filter(|x| x.upper_core == (ur, uc)).map(|x| x.axon).collect();
                assert_eq!(axons.len(), 256);
            }
        }
        // interior lower cores route all four groups, corners one
        let routed = |lc: (usize, usize)| r.routes.iter().filter(|x| x.lower_core == lc).count();
        assert_eq!(routed((1, 1)), 256);
        assert_eq!(routed((2, 2)), 256);
        assert_eq!(routed((0, 0)), 64);
        assert_eq!(routed((0, 1)), 128);
    }

    #[test]
    fn routing_identity_for_single_core() {
        let r = route_interlayer(1, 1, 1, 1).unwrap();
        assert_eq!(r.routes.len(), 256);
        assert!(r.routes.iter().all(|x| x.neuron == x.axon));
    }

    #[test]
    fn class_assignment_examples() {
        let a = assign_classes(256, 10).unwrap();
        let mut counts = [0; 10];
        a.iter().for_each(|&c| counts[c] += 1);
        assert_eq!(counts, [26, 26, 26, 26, 26, 26, 25, 25, 25, 25]);
        assert_eq!(assign_classes(10, 10).unwrap(), (0..10).collect::<Vec<_>>());
        assert!(assign_classes(256, 2).unwrap().iter().filter(|&&c| c == 0).count() == 128);
        assert!(assign_classes(5, 0).is_err());
        assert!(assign_classes(5, 6).is_err());
    }

    #[test]
    fn validate_reports_axon_overflow() {
        let mut plan = plan_network(&TopologySpec::mnist_small()).unwrap();
        let core = &mut plan.layers[0].cores[1];
        core.axon_sources.push(AxonSource::Pixel { row: 0, col: 0, channel: 0 });
        core.used_axons += 1;
        let v = validate(&plan).unwrap_err();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].layer, 1);
        assert_eq!(v[0].core, Some((0, 1)));
        assert_eq!(v[0].kind, ViolationKind::TooManyAxons(257));
    }

    #[test]
    fn validate_reports_fan_out() {
        let mut plan = plan_network(&TopologySpec::mnist_small()).unwrap();
        let dup = plan.layers[1].cores[0].axon_sources[0];
        plan.layers[1].cores[0].axon_sources[1] = dup;
        let v = validate(&plan).unwrap_err();
        assert!(v.iter().any(|x| matches!(x.kind, ViolationKind::FanOut { neuron: 0, .. })), "{v:?}");
        assert!(v[0].to_string().contains("more than one axon"));
    }

    #[test]
    fn validate_reports_dangling_source() {
        let mut plan = plan_network(&TopologySpec::mnist_small()).unwrap();
        plan.layers[1].cores[0].axon_sources[3] =
            AxonSource::Neuron { layer: 0, core_row: 5, core_col: 0, neuron: 0 };
        let v = validate(&plan).unwrap_err();
        assert!(v.iter().any(|x| x.kind == ViolationKind::DanglingSource { axon: 3 }));
    }

    #[test]
    fn spec_json_shape() {
        let json = serde_json::to_value(TopologySpec::mnist_small()).unwrap();
        assert_eq!(json["input"]["h"], 28);
        assert_eq!(json["layers"][0]["blockSize"], 16);
        assert_eq!(json["layers"][1]["unit"], "cores");
        assert_eq!(json["template"], "s1");
        let back: TopologySpec = serde_json::from_value(json).unwrap();
        assert_eq!(back, TopologySpec::mnist_small());
        assert_ne!(TopologySpec::mnist_small().hash(), TopologySpec::mnist_large().hash());
    }

    #[test]
    fn gather_indices_layer_one() {
        let plan = plan_network(&TopologySpec::mnist_small()).unwrap();
        let idx = plan.gather_indices(0);
        assert_eq!(idx[1][0], Some(12));
        assert_eq!(idx[2][0], Some(12 * 28));
        let upper = plan.gather_indices(1);
        assert_eq!(upper[0][64], Some(256 + 64));
    }

    proptest! {
        #[test]
        fn tiling_covers_prefix(extent in 1usize..80, block in 1usize..40, stride in 1usize..40) {
            prop_assume!(block <= extent);
            let pos = tile_positions(extent, block, stride).unwrap();
            prop_assert!(!pos.is_empty());
            let last = *pos.last().unwrap();
            prop_assert!(last + block <= extent);
            if stride <= block {
                let mut covered = vec![false; last + block];
                for &o in &pos {
                    covered[o..o + block].iter_mut().for_each(|c| *c = true);
                }
                prop_assert!(covered.iter().all(|&c| c));
            }
        }

        #[test]
        fn routing_partitions_neurons(rows in 1usize..6, cols in 1usize..6, block in 1usize..3, stride in 1usize..3) {
            prop_assume!(block <= rows && block <= cols && stride <= block);
            let r = route_interlayer(rows, cols, block, stride).unwrap();
            let mut seen = HashSet::new();
            for x in &r.routes {
                prop_assert!(seen.insert((x.lower_core, x.neuron)));
            }
            let mut axons = HashSet::new();
            for x in &r.routes {
                prop_assert!(axons.insert((x.upper_core, x.axon)));
            }
            prop_assert_eq!(axons.len(), r.upper_rows * r.upper_cols * 256);
        }
    }
}
