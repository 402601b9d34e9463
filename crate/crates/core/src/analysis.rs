//! Weight/bias histograms, evaluation tables and a linear energy model.

use std::collections::BTreeMap;
use std::io;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::deploy::EvalReport;
use crate::network::DeployedNetwork;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("energy model constants must be finite and non-negative")]
    NegativeEnergy,
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] io::Error),
}

pub const BIAS_MIN: f64 = -4.0;
pub const BIAS_MAX: f64 = 4.0;
pub const BIAS_STEP: f64 = 0.25;
pub const BIAS_BINS: usize = 32;

/// Counts of values in `[-4, 4)` by 0.25-wide bins, plus under/overflow.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct BiasHistogram {
    pub underflow: u64,
    pub bins: Vec<u64>,
    pub overflow: u64,
}

impl BiasHistogram {
    pub fn from_values<I: IntoIterator<Item = f64>>(values: I) -> Self {
        let mut h = Self { underflow: 0, bins: vec![0; BIAS_BINS], overflow: 0 };
        for v in values {
            if v < BIAS_MIN {
                h.underflow += 1;
            } else if v >= BIAS_MAX {
                h.overflow += 1;
            } else {
                let k = ((v - BIAS_MIN) / BIAS_STEP).floor() as usize;
                h.bins[k.min(BIAS_BINS - 1)] += 1;
            }
        }
        h
    }

    pub fn total(&self) -> u64 {
        self.underflow + self.overflow + self.bins.iter().sum::<u64>()
    }
}

/// Effective-weight counts per layer and a histogram of the leaks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WeightHistogram {
    pub layers: Vec<BTreeMap<i32, u64>>,
    pub bias: BiasHistogram,
}

impl WeightHistogram {
    pub fn zero_fraction(&self) -> f64 {
        let total: u64 = self.layers.iter().flat_map(|l| l.values()).sum();
        let zeros: u64 = self.layers.iter().map(|l| l.get(&0).copied().unwrap_or(0)).sum();
        if total == 0 {
            0.0
        } else {
            zeros as f64 / total as f64
        }
    }

    /// `layer,value,count` rows.
    pub fn weights_csv(&self) -> String {
        let mut out = String::from("layer,value,count\n");
        for (l, counts) in self.layers.iter().enumerate() {
            for (v, c) in counts {
                out.push_str(&format!("{},{v},{c}\n", l + 1));
            }
        }
        out
    }

    /// `lower,upper,count` rows; the open-ended bins use `-inf` / `inf`.
    pub fn bias_csv(&self) -> String {
        let mut out = String::from("lower,upper,count\n");
        out.push_str(&format!("-inf,{BIAS_MIN},{}\n", self.bias.underflow));
        for (k, c) in self.bias.bins.iter().enumerate() {
            let lo = BIAS_MIN + k as f64 * BIAS_STEP;
            out.push_str(&format!("{lo},{},{c}\n", lo + BIAS_STEP));
        }
        out.push_str(&format!("{BIAS_MAX},inf,{}\n", self.bias.overflow));
        out
    }
}

/// Tallies `cbin · s` over every used synapse, per layer, and bins the leaks
/// of every used neuron.
pub fn weight_histogram(net: &DeployedNetwork) -> WeightHistogram {
    let layers = net
        .layers
        .iter()
        .map(|cores| {
            let mut counts = BTreeMap::new();
            for core in cores {
                for i in 0..core.used_axons() {
                    for j in 0..core.used_neurons() {
                        *counts.entry(core.weight(i, j)).or_insert(0) += 1;
                    }
                }
            }
            counts
        })
        .collect();
    let bias = BiasHistogram::from_values(
        net.layers.iter().flatten().flat_map(|core| core.leak[..core.used_neurons()].iter().map(|&l| f64::from(l))),
    );
    WeightHistogram { layers, bias }
}

/// Static cost per core-tick plus a cost per spike.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct EnergyModel {
    pub e_static_per_core_tick: f64,
    pub e_per_spike: f64,
}

impl EnergyModel {
    pub fn new(e_static_per_core_tick: f64, e_per_spike: f64) -> Result<Self, AnalysisError> {
        let ok = |v: f64| v.is_finite() && v >= 0.0;
        if !ok(e_static_per_core_tick) || !ok(e_per_spike) {
            return Err(AnalysisError::NegativeEnergy);
        }
        Ok(Self { e_static_per_core_tick, e_per_spike })
    }
}

impl Default for EnergyModel {
    fn default() -> Self {
        Self { e_static_per_core_tick: 1.0, e_per_spike: 0.0 }
    }
}

/// `E = m·T·C·e_static + m·T·C·spikes·e_spike` for an ensemble of `m`
/// members of `C` cores run for `T` ticks.
pub fn energy_estimate(model: &EnergyModel, cores: usize, ticks: usize, ensemble_size: usize, mean_spikes: f64) -> f64 {
    let core_ticks = (ensemble_size * ticks * cores) as f64;
    core_ticks * model.e_static_per_core_tick + core_ticks * mean_spikes * model.e_per_spike
}

/// One line of an evaluation CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub ticks: usize,
    pub ensemble_id: String,
    pub members: usize,
    pub cores: usize,
    pub total: usize,
    pub correct: usize,
    pub accuracy: f64,
    pub mean_spikes_per_core_tick: f64,
}

impl EvalRow {
    pub fn from_report(ensemble_id: &str, r: &EvalReport) -> Self {
        Self {
            ticks: r.ticks,
            ensemble_id: ensemble_id.to_string(),
            members: r.ensemble_size,
            cores: r.cores,
            total: r.total,
            correct: r.correct,
            accuracy: r.accuracy,
            mean_spikes_per_core_tick: r.spikes_per_core_tick,
        }
    }
}

pub fn write_eval_csv(rows: &[EvalRow]) -> Result<String, AnalysisError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row)?;
    }
    if rows.is_empty() {
        w.write_record(["ticks", "ensemble_id", "members", "cores", "total", "correct", "accuracy", "mean_spikes_per_core_tick"])?;
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn read_eval_csv<R: io::Read>(reader: R) -> Result<Vec<EvalRow>, AnalysisError> {
    csv::Reader::from_reader(reader).deserialize().collect::<Result<Vec<_>, _>>().map_err(Into::into)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct ReportRow<'a> {
    ticks: usize,
    config: &'a str,
    ensemble_size: usize,
    cores: usize,
    accuracy: String,
    mean_spikes_per_core_tick: String,
    energy: String,
}

/// Table of accuracy and modelled energy, sorted by configuration, ensemble
/// size and ticks.
pub fn accuracy_report(rows: &[EvalRow], model: &EnergyModel) -> Result<String, AnalysisError> {
    let mut sorted: Vec<&EvalRow> = rows.iter().collect();
    sorted.sort_by(|a, b| (&a.ensemble_id, a.members, a.ticks).cmp(&(&b.ensemble_id, b.members, b.ticks)));
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(["ticks", "config", "ensemble_size", "cores", "accuracy", "mean_spikes_per_core_tick", "energy"])?;
    for r in sorted {
        let energy = energy_estimate(model, r.cores, r.ticks, r.members, r.mean_spikes_per_core_tick);
        w.serialize(ReportRow {
            ticks: r.ticks,
            config: &r.ensemble_id,
            ensemble_size: r.members,
            cores: r.cores,
            accuracy: format!("{:.6}", r.accuracy),
            mean_spikes_per_core_tick: format!("{:.6}", r.mean_spikes_per_core_tick),
            energy: format!("{energy:.6}"),
        })?;
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}
