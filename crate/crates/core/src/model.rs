//! Crossbar core types in continuous (training) and discrete (deployed) form.
//!
//! A core has [`AXONS`] input axons and [`NEURONS`] output neurons. Matrices are
//! stored axon-major: entry `(i, j)` lives at `i * NEURONS + j`.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const AXONS: usize = 256;
pub const NEURONS: usize = 256;
pub const SYNAPSES: usize = AXONS * NEURONS;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("synapse template must not be empty")]
    EmptyTemplate,
    #[error("cannot parse synapse template {0:?}")]
    BadTemplate(String),
    #[error("synapse template weight {0} is outside [-8, 8] or zero")]
    BadTemplateWeight(i32),
    #[error("connection value {value} at axon {axon}, neuron {neuron} is outside [0, 1]")]
    ConnectionOutOfRange { axon: usize, neuron: usize, value: f64 },
    #[error("bias value {0} is not finite")]
    NonFiniteBias(f64),
    #[error("matrix has {got} entries, expected {expected}")]
    Shape { expected: usize, got: usize },
    #[error("used count {used} exceeds {max}")]
    UsedCount { used: usize, max: usize },
}

/// Per-axon synaptic strengths shared by every neuron on a core.
///
/// Axon `i` takes `weights[i % weights.len()]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "TemplateRepr", into = "TemplateRepr")]
pub struct SynapseTemplate {
    weights: Vec<i32>,
}

impl SynapseTemplate {
    /// `s = [-1, 1]`
    pub fn s1() -> Self {
        Self { weights: vec![-1, 1] }
    }

    /// `s = [-2, -1, 1, 2]`
    pub fn s2() -> Self {
        Self { weights: vec![-2, -1, 1, 2] }
    }

    pub fn new(weights: Vec<i32>) -> Result<Self, ModelError> {
        if weights.is_empty() {
            return Err(ModelError::EmptyTemplate);
        }
        if let Some(&w) = weights.iter().find(|&&w| w == 0 || !(-8..=8).contains(&w)) {
            return Err(ModelError::BadTemplateWeight(w));
        }
        Ok(Self { weights })
    }

    /// Parses `"s1"`, `"s2"`, or a comma separated list such as `"-2,-1,1,2"`.
    pub fn parse(name: &str) -> Result<Self, ModelError> {
        match name {
            "s1" => Ok(Self::s1()),
            "s2" => Ok(Self::s2()),
            other => {
                let weights = other
                    .split(',')
                    .filter(|p| !p.trim().is_empty())
                    .map(|p| p.trim().parse::<i32>().map_err(|_| ModelError::BadTemplate(other.to_string())))
                    .collect::<Result<Vec<_>, _>>()?;
                Self::new(weights)
            }
        }
    }

    pub fn weights(&self) -> &[i32] {
        &self.weights
    }

    /// Short name: `s1`, `s2`, or the weight list.
    pub fn name(&self) -> String {
        if *self == Self::s1() {
            "s1".into()
        } else if *self == Self::s2() {
            "s2".into()
        } else {
            self.weights.iter().map(i32::to_string).collect::<Vec<_>>().join(",")
        }
    }

    pub fn max_abs(&self) -> i32 {
        self.weights.iter().map(|w| w.abs()).max().unwrap_or(0)
    }

    pub fn weight_for_axon(&self, axon: usize) -> i32 {
        self.weights[axon % self.weights.len()]
    }

    /// The strength of every axon on a core.
    pub fn axon_weights(&self) -> Vec<i32> {
        (0..AXONS).map(|i| self.weight_for_axon(i)).collect()
    }
}

impl fmt::Display for SynapseTemplate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum TemplateRepr {
    Named(String),
    Weights(Vec<i32>),
}

impl TryFrom<TemplateRepr> for SynapseTemplate {
    type Error = ModelError;

    fn try_from(value: TemplateRepr) -> Result<Self, Self::Error> {
        match value {
            TemplateRepr::Named(name) => SynapseTemplate::parse(&name),
            TemplateRepr::Weights(w) => SynapseTemplate::new(w),
        }
    }
}

impl From<SynapseTemplate> for TemplateRepr {
    fn from(t: SynapseTemplate) -> Self {
        if t == SynapseTemplate::s1() || t == SynapseTemplate::s2() {
            TemplateRepr::Named(t.name())
        } else {
            TemplateRepr::Weights(t.weights)
        }
    }
}

/// `template_weights`: the strength assigned to an axon by the cyclic rule.
pub fn template_weights(template: &SynapseTemplate, axon: usize) -> i32 {
    template.weight_for_axon(axon)
}

/// Synapse value seen by a neuron: `cbin * s`.
#[inline]
pub fn effective_weight(cbin: bool, s: i32) -> i32 {
    if cbin {
        s
    } else {
        0
    }
}

#[inline]
pub fn binarize(c: f64) -> bool {
    c > 0.5
}

/// Thresholds a connection matrix at 0.5 (strict). Any entry outside `[0, 1]`
/// (including NaN) is rejected.
pub fn binarize_crossbar(c: &[f64], neurons: usize) -> Result<Vec<bool>, ModelError> {
    c.iter()
        .enumerate()
        .map(|(k, &v)| {
            if (0.0..=1.0).contains(&v) {
                Ok(binarize(v))
            } else {
                Err(ModelError::ConnectionOutOfRange {
                    axon: k / neurons.max(1),
                    neuron: k % neurons.max(1),
                    value: v,
                })
            }
        })
        .collect()
}

/// Rounds to the nearest integer with ties away from zero.
pub fn quantize_bias(b: f64) -> Result<i32, ModelError> {
    if !b.is_finite() {
        return Err(ModelError::NonFiniteBias(b));
    }
    Ok(b.round() as i32)
}

/// Trainable state of one core.
#[derive(Debug, Clone, PartialEq)]
pub struct CoreParams {
    /// Connection values in `[0, 1]`, axon-major.
    pub c: Vec<f64>,
    pub b: Vec<f64>,
    template: SynapseTemplate,
    axon_weights: Vec<i32>,
    used_axons: usize,
    used_neurons: usize,
}

impl CoreParams {
    /// All-zero connections and biases.
    pub fn zeros(template: SynapseTemplate, used_axons: usize, used_neurons: usize) -> Result<Self, ModelError> {
        Self::from_parts(template, vec![0.0; SYNAPSES], vec![0.0; NEURONS], used_axons, used_neurons)
    }

    pub fn from_parts(
        template: SynapseTemplate,
        c: Vec<f64>,
        b: Vec<f64>,
        used_axons: usize,
        used_neurons: usize,
    ) -> Result<Self, ModelError> {
        if c.len() != SYNAPSES {
            return Err(ModelError::Shape { expected: SYNAPSES, got: c.len() });
        }
        if b.len() != NEURONS {
            return Err(ModelError::Shape { expected: NEURONS, got: b.len() });
        }
        if used_axons > AXONS {
            return Err(ModelError::UsedCount { used: used_axons, max: AXONS });
        }
        if used_neurons > NEURONS {
            return Err(ModelError::UsedCount { used: used_neurons, max: NEURONS });
        }
        if let Some(k) = c.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(ModelError::ConnectionOutOfRange { axon: k / NEURONS, neuron: k % NEURONS, value: c[k] });
        }
        if let Some(&v) = b.iter().find(|v| !v.is_finite()) {
            return Err(ModelError::NonFiniteBias(v));
        }
        let axon_weights = template.axon_weights();
        Ok(Self { c, b, template, axon_weights, used_axons, used_neurons })
    }

    pub fn template(&self) -> &SynapseTemplate {
        &self.template
    }

    /// Strength `s_i` of axon `i`; `s_ij` is the same for every neuron `j`.
    pub fn axon_weights(&self) -> &[i32] {
        &self.axon_weights
    }

    pub fn s(&self, axon: usize, _neuron: usize) -> i32 {
        self.axon_weights[axon]
    }

    pub fn used_axons(&self) -> usize {
        self.used_axons
    }

    pub fn used_neurons(&self) -> usize {
        self.used_neurons
    }

    #[inline]
    pub fn c_at(&self, axon: usize, neuron: usize) -> f64 {
        self.c[axon * NEURONS + neuron]
    }

    /// Binary crossbar with unused rows and columns forced to 0.
    pub fn cbin(&self) -> Vec<bool> {
        let mut out = vec![false; SYNAPSES];
        for i in 0..self.used_axons {
            for j in 0..self.used_neurons {
                out[i * NEURONS + j] = binarize(self.c[i * NEURONS + j]);
            }
        }
        out
    }

    /// Zeroes connections on unused axons and neurons.
    pub fn clear_unused(&mut self) {
        for i in 0..AXONS {
            for j in 0..NEURONS {
                if i >= self.used_axons || j >= self.used_neurons {
                    self.c[i * NEURONS + j] = 0.0;
                }
            }
        }
        for j in self.used_neurons..NEURONS {
            self.b[j] = 0.0;
        }
    }
}

/// Fully discrete core: binary crossbar, per-axon strengths, integer leaks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeployedCore {
    pub cbin: Vec<bool>,
    pub leak: Vec<i32>,
    template: SynapseTemplate,
    axon_weights: Vec<i32>,
    used_axons: usize,
    used_neurons: usize,
}

impl DeployedCore {
    pub fn new(
        template: SynapseTemplate,
        cbin: Vec<bool>,
        leak: Vec<i32>,
        used_axons: usize,
        used_neurons: usize,
    ) -> Result<Self, ModelError> {
        if cbin.len() != SYNAPSES {
            return Err(ModelError::Shape { expected: SYNAPSES, got: cbin.len() });
        }
        if leak.len() != NEURONS {
            return Err(ModelError::Shape { expected: NEURONS, got: leak.len() });
        }
        if used_axons > AXONS {
            return Err(ModelError::UsedCount { used: used_axons, max: AXONS });
        }
        if used_neurons > NEURONS {
            return Err(ModelError::UsedCount { used: used_neurons, max: NEURONS });
        }
        let axon_weights = template.axon_weights();
        Ok(Self { cbin, leak, template, axon_weights, used_axons, used_neurons })
    }

    /// Binarizes `c` and quantizes `b` of a trained core.
    pub fn from_params(params: &CoreParams) -> Result<Self, ModelError> {
        binarize_crossbar(&params.c, NEURONS)?;
        let leak = params.b.iter().map(|&b| quantize_bias(b)).collect::<Result<Vec<_>, _>>()?;
        Self::new(params.template().clone(), params.cbin(), leak, params.used_axons(), params.used_neurons())
    }

    pub fn template(&self) -> &SynapseTemplate {
        &self.template
    }

    pub fn axon_weights(&self) -> &[i32] {
        &self.axon_weights
    }

    pub fn used_axons(&self) -> usize {
        self.used_axons
    }

    pub fn used_neurons(&self) -> usize {
        self.used_neurons
    }

    /// Effective weight of synapse `(axon, neuron)`.
    #[inline]
    pub fn weight(&self, axon: usize, neuron: usize) -> i32 {
        effective_weight(self.cbin[axon * NEURONS + neuron], self.axon_weights[axon])
    }

    /// Effective weight matrix, axon-major, zero outside the used region.
    pub fn effective_weights(&self) -> Vec<i32> {
        let mut w = vec![0; SYNAPSES];
        for i in 0..self.used_axons {
            for j in 0..self.used_neurons {
                w[i * NEURONS + j] = self.weight(i, j);
            }
        }
        w
    }

    /// Continuous view with `c ∈ {0, 1}` and `b = leak`.
    pub fn to_params(&self) -> CoreParams {
        let c = self.cbin.iter().map(|&on| if on { 1.0 } else { 0.0 }).collect();
        let b = self.leak.iter().map(|&l| l as f64).collect();
        CoreParams::from_parts(self.template.clone(), c, b, self.used_axons, self.used_neurons)
            .expect("deployed core always maps to valid params")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn effective_weight_examples() {
        assert_eq!(effective_weight(false, -2), 0);
        assert_eq!(effective_weight(true, -1), -1);
        assert_eq!(effective_weight(true, 2), 2);
    }

    #[test]
    fn binarize_threshold_is_strict() {
        let out = binarize_crossbar(&[0.51, 0.5, 0.0, 1.0], 4).unwrap();
        assert_eq!(out, vec![true, false, false, true]);
    }

    #[test]
    fn binarize_rejects_out_of_range() {
        let err = binarize_crossbar(&[0.2, 1.5], 2).unwrap_err();
        assert!(matches!(err, ModelError::ConnectionOutOfRange { neuron: 1, .. }));
        assert!(binarize_crossbar(&[f64::NAN], 1).is_err());
        assert!(binarize_crossbar(&[-0.01], 1).is_err());
    }

    #[test]
    fn template_cyclic_assignment() {
        assert_eq!(template_weights(&SynapseTemplate::s1(), 0), -1);
        assert_eq!(template_weights(&SynapseTemplate::s1(), 5), 1);
        assert_eq!(template_weights(&SynapseTemplate::s2(), 6), 1);
    }

    #[test]
    fn template_validation() {
        assert_eq!(SynapseTemplate::new(vec![]), Err(ModelError::EmptyTemplate));
        assert_eq!(SynapseTemplate::new(vec![1, 0]), Err(ModelError::BadTemplateWeight(0)));
        assert_eq!(SynapseTemplate::new(vec![9]), Err(ModelError::BadTemplateWeight(9)));
        assert_eq!(SynapseTemplate::parse("-3,4").unwrap().weights(), &[-3, 4]);
        assert_eq!(SynapseTemplate::parse("s2").unwrap(), SynapseTemplate::s2());
    }

    #[test]
    fn template_serde_names() {
        assert_eq!(serde_json::to_string(&SynapseTemplate::s1()).unwrap(), "\"s1\"");
        let t: SynapseTemplate = serde_json::from_str("[-3,3]").unwrap();
        assert_eq!(t.weights(), &[-3, 3]);
        assert!(serde_json::from_str::<SynapseTemplate>("[]").is_err());
    }

    #[test]
    fn quantize_bias_rounds_half_away() {
        assert_eq!(quantize_bias(0.4), Ok(0));
        assert_eq!(quantize_bias(-0.6), Ok(-1));
        assert_eq!(quantize_bias(0.5), Ok(1));
        assert_eq!(quantize_bias(-0.5), Ok(-1));
        assert!(quantize_bias(f64::INFINITY).is_err());
        assert!(quantize_bias(f64::NAN).is_err());
    }

    #[test]
    fn unused_region_never_binarizes_on() {
        let mut p = CoreParams::zeros(SynapseTemplate::s1(), 3, 2).unwrap();
        p.c.iter_mut().for_each(|c| *c = 0.9);
        let cbin = p.cbin();
        assert_eq!(cbin.iter().filter(|&&b| b).count(), 6);
        p.clear_unused();
        assert_eq!(p.c.iter().filter(|&&c| c > 0.0).count(), 6);
    }

    #[test]
    fn deployed_from_params() {
        let mut p = CoreParams::zeros(SynapseTemplate::s2(), AXONS, NEURONS).unwrap();
        p.c[0] = 0.7;
        p.b[0] = -0.6;
        let d = DeployedCore::from_params(&p).unwrap();
        assert!(d.cbin[0]);
        assert_eq!(d.leak[0], -1);
        assert_eq!(d.weight(0, 0), -2);
        assert_eq!(d.to_params().c[0], 1.0);
    }

    proptest! {
        #[test]
        fn binarize_flip_changes_one_bit(values in prop::collection::vec(0.0f64..=1.0, 1..64), idx in any::<prop::sample::Index>()) {
            let base = binarize_crossbar(&values, 8).unwrap();
            let k = idx.index(values.len());
            let mut flipped = values.clone();
            flipped[k] = if values[k] > 0.5 { 0.25 } else { 0.75 };
            let after = binarize_crossbar(&flipped, 8).unwrap();
            for (n, (a, b)) in base.iter().zip(&after).enumerate() {
                prop_assert_eq!(a != b, n == k);
            }
            let as_float: Vec<f64> = base.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
            prop_assert_eq!(binarize_crossbar(&as_float, 8).unwrap(), base);
        }

        #[test]
        fn effective_weight_bounded(c in 0.0f64..=1.0, axon in 0usize..AXONS, s2 in any::<bool>()) {
            let t = if s2 { SynapseTemplate::s2() } else { SynapseTemplate::s1() };
            let w = effective_weight(binarize(c), t.weight_for_axon(axon));
            prop_assert!(w.abs() <= t.max_abs());
            if c <= 0.5 {
                prop_assert_eq!(w, 0);
            }
        }
    }
}
