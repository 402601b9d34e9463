//! JSON network documents for continuous checkpoints and deployed networks.
//!
//! ```text
//! { formatVersion, template, topologySpec,
//!   layers: [ { cores: [ { cbin: [256 × "0101…"], leak: [256 ints] }
//!                      | { c: [256 × [256 numbers]], b: [256 numbers] } ] } ],
//!   classAssignment, seed, meta, training?, checksum }
//! ```
//!
//! `checksum` is the hex SHA-256 of the compact, key-sorted JSON of every
//! other field. Floats are written in shortest round-trip form, so a load of a
//! saved document reproduces every value bit for bit.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::model::{CoreParams, DeployedCore, SynapseTemplate, AXONS, NEURONS};
use crate::network::{ContinuousNetwork, DeployedNetwork};
use crate::topology::{hex_digest, plan_network, TopologyError, TopologySpec};
use crate::trainer::{HistoryEntry, TrainRun};

pub const FORMAT_VERSION: u64 = 1;

#[derive(Debug, Error)]
pub enum NetFileError {
    #[error("cannot access {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("malformed network document: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("unsupported format version {found} (expected {FORMAT_VERSION})")]
    Version { found: String },
    #[error("schema violation at {at}: {detail}")]
    Schema { at: String, detail: String },
    #[error("checksum mismatch: file says {stored}, content hashes to {computed}")]
    Checksum { stored: String, computed: String },
    #[error("topology: {0}")]
    Topology(#[from] TopologyError),
}

fn schema(at: impl Into<String>, detail: impl Into<String>) -> NetFileError {
    NetFileError::Schema { at: at.into(), detail: detail.into() }
}

/// Position in the deterministic sample stream; together with the seed it
/// fully determines the shuffling and augmentation draws that follow.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngState {
    pub seed: u64,
    pub next_sample: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingState {
    pub iteration: u64,
    pub rng_state: RngState,
    pub history: Vec<HistoryEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum AnyNetwork {
    Continuous(ContinuousNetwork),
    Deployed(DeployedNetwork),
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkDocument {
    pub network: AnyNetwork,
    pub training: Option<TrainingState>,
}

impl NetworkDocument {
    fn spec(&self) -> &TopologySpec {
        match &self.network {
            AnyNetwork::Continuous(n) => n.spec(),
            AnyNetwork::Deployed(n) => n.spec(),
        }
    }
}

fn cbin_rows(core: &DeployedCore) -> Value {
    Value::Array(
        (0..AXONS)
            .map(|i| {
                Value::String(core.cbin[i * NEURONS..(i + 1) * NEURONS].iter().map(|&b| if b { '1' } else { '0' }).collect())
            })
            .collect(),
    )
}

fn to_value(doc: &NetworkDocument) -> Value {
    let spec = doc.spec();
    let (plan, seed, layers) = match &doc.network {
        AnyNetwork::Deployed(net) => {
            let layers: Vec<Value> = net
                .layers
                .iter()
                .map(|cores| {
                    json!({ "cores": cores.iter().map(|core| json!({
                        "cbin": cbin_rows(core),
                        "leak": core.leak,
                    })).collect::<Vec<_>>() })
                })
                .collect();
            (&net.plan, net.seed, layers)
        }
        AnyNetwork::Continuous(net) => {
            let layers: Vec<Value> = net
                .layers
                .iter()
                .map(|cores| {
                    json!({ "cores": cores.iter().map(|core| json!({
                        "c": core.c.chunks(NEURONS).collect::<Vec<_>>(),
                        "b": core.b,
                    })).collect::<Vec<_>>() })
                })
                .collect();
            (&net.plan, net.seed, layers)
        }
    };
    let mut root = json!({
        "formatVersion": FORMAT_VERSION,
        "template": spec.template,
        "topologySpec": spec,
        "layers": layers,
        "classAssignment": plan.class_assignment,
        "seed": seed,
        "meta": { "templateName": spec.template.name(), "topologyHash": spec.hash() },
    });
    if let Some(t) = &doc.training {
        root["training"] = json!({
            "iteration": t.iteration,
            "rngState": { "seed": t.rng_state.seed, "nextSample": t.rng_state.next_sample },
            "history": t.history.iter().map(|h| json!({
                "iteration": h.iteration,
                "loss": h.loss,
                "accuracy": h.accuracy,
            })).collect::<Vec<_>>(),
        });
    }
    root
}

fn checksum(payload: &Value) -> String {
    hex_digest(serde_json::to_string(payload).expect("value serializes").as_bytes())
}

/// Serializes a document (checksum included) to a JSON string.
pub fn to_json(doc: &NetworkDocument) -> String {
    let mut value = to_value(doc);
    let sum = checksum(&value);
    value["checksum"] = Value::String(sum);
    serde_json::to_string(&value).expect("value serializes")
}

/// Writes atomically: the document goes to a sibling temp file first.
pub fn save_network(path: &Path, doc: &NetworkDocument) -> Result<(), NetFileError> {
    write_atomic(path, to_json(doc).as_bytes())
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), NetFileError> {
    let io = |source| NetFileError::Io { path: path.to_path_buf(), source };
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    let mut f = fs::File::create(&tmp).map_err(io)?;
    f.write_all(bytes).map_err(io)?;
    f.sync_all().map_err(io)?;
    fs::rename(&tmp, path).map_err(io)
}

pub fn load_network(path: &Path) -> Result<NetworkDocument, NetFileError> {
    let text = fs::read_to_string(path).map_err(|source| NetFileError::Io { path: path.to_path_buf(), source })?;
    from_json(&text)
}

pub fn from_json(text: &str) -> Result<NetworkDocument, NetFileError> {
    let mut value: Value = serde_json::from_str(text)?;
    let obj = value.as_object_mut().ok_or_else(|| schema("$", "document is not an object"))?;
    match obj.get("formatVersion") {
        Some(v) if v.as_u64() == Some(FORMAT_VERSION) => {}
        Some(v) => return Err(NetFileError::Version { found: v.to_string() }),
        None => return Err(schema("formatVersion", "missing")),
    }
    let stored = match obj.remove("checksum") {
        Some(Value::String(s)) => s,
        _ => return Err(schema("checksum", "missing or not a string")),
    };
    let computed = checksum(&value);
    if stored != computed {
        return Err(NetFileError::Checksum { stored, computed });
    }
    parse_document(value.as_object().expect("checked above"))
}

fn field<'a>(obj: &'a Map<String, Value>, key: &str, at: &str) -> Result<&'a Value, NetFileError> {
    obj.get(key).ok_or_else(|| schema(format!("{at}.{key}"), "missing"))
}

fn u64_field(obj: &Map<String, Value>, key: &str, at: &str) -> Result<u64, NetFileError> {
    field(obj, key, at)?.as_u64().ok_or_else(|| schema(format!("{at}.{key}"), "expected an unsigned integer"))
}

fn array<'a>(v: &'a Value, at: &str, len: Option<usize>) -> Result<&'a Vec<Value>, NetFileError> {
    let arr = v.as_array().ok_or_else(|| schema(at, "expected an array"))?;
    if let Some(n) = len {
        if arr.len() != n {
            return Err(schema(at, format!("expected {n} entries, found {}", arr.len())));
        }
    }
    Ok(arr)
}

fn f64_array(v: &Value, at: &str, len: usize) -> Result<Vec<f64>, NetFileError> {
    array(v, at, Some(len))?
        .iter()
        .enumerate()
        .map(|(k, x)| x.as_f64().ok_or_else(|| schema(format!("{at}[{k}]"), "expected a number")))
        .collect()
}

fn parse_document(obj: &Map<String, Value>) -> Result<NetworkDocument, NetFileError> {
    let spec: TopologySpec = serde_json::from_value(field(obj, "topologySpec", "$")?.clone())
        .map_err(|e| schema("$.topologySpec", e.to_string()))?;
    let template: SynapseTemplate =
        serde_json::from_value(field(obj, "template", "$")?.clone()).map_err(|e| schema("$.template", e.to_string()))?;
    if template != spec.template {
        return Err(schema("$.template", "differs from the topology spec template"));
    }
    let plan = plan_network(&spec)?;
    let classes: Vec<usize> = serde_json::from_value(field(obj, "classAssignment", "$")?.clone())
        .map_err(|e| schema("$.classAssignment", e.to_string()))?;
    if classes != plan.class_assignment {
        return Err(schema("$.classAssignment", "does not match the topology"));
    }
    let seed = u64_field(obj, "seed", "$")?;

    let layers = array(field(obj, "layers", "$")?, "$.layers", Some(plan.layers.len()))?;
    let first_core = layers
        .first()
        .and_then(|l| l.get("cores"))
        .and_then(Value::as_array)
        .and_then(|c| c.first())
        .and_then(Value::as_object)
        .ok_or_else(|| schema("$.layers[0].cores[0]", "missing"))?;
    let deployed = match (first_core.contains_key("cbin"), first_core.contains_key("c")) {
        (true, false) => true,
        (false, true) => false,
        _ => return Err(schema("$.layers[0].cores[0]", "exactly one of cbin or c must be present")),
    };

    let mut dep_layers = Vec::new();
    let mut cont_layers = Vec::new();
    for (l, (layer, planned)) in layers.iter().zip(&plan.layers).enumerate() {
        let at = format!("$.layers[{l}].cores");
        let cores = array(layer.get("cores").unwrap_or(&Value::Null), &at, Some(planned.cores.len()))?;
        let mut dep = Vec::new();
        let mut cont = Vec::new();
        for (k, (core, cp)) in cores.iter().zip(&planned.cores).enumerate() {
            let at = format!("{at}[{k}]");
            let core = core.as_object().ok_or_else(|| schema(&at, "expected an object"))?;
            if deployed {
                dep.push(parse_deployed_core(core, &at, &template, cp.used_axons, cp.used_neurons)?);
            } else {
                cont.push(parse_continuous_core(core, &at, &template, cp.used_axons, cp.used_neurons)?);
            }
        }
        dep_layers.push(dep);
        cont_layers.push(cont);
    }

    let network = if deployed {
        AnyNetwork::Deployed(DeployedNetwork { plan, layers: dep_layers, seed })
    } else {
        AnyNetwork::Continuous(ContinuousNetwork { plan, layers: cont_layers, seed })
    };
    let training = obj.get("training").map(parse_training).transpose()?;
    Ok(NetworkDocument { network, training })
}

fn parse_deployed_core(
    core: &Map<String, Value>,
    at: &str,
    template: &SynapseTemplate,
    used_axons: usize,
    used_neurons: usize,
) -> Result<DeployedCore, NetFileError> {
    if core.contains_key("c") || core.contains_key("b") {
        return Err(schema(at, "continuous fields in a deployed network"));
    }
    let rows = array(field(core, "cbin", at)?, &format!("{at}.cbin"), Some(AXONS))?;
    let mut cbin = Vec::with_capacity(AXONS * NEURONS);
    for (i, row) in rows.iter().enumerate() {
        let at = format!("{at}.cbin[{i}]");
        let s = row.as_str().ok_or_else(|| schema(&at, "expected a string of bits"))?;
        if s.len() != NEURONS {
            return Err(schema(&at, format!("expected {NEURONS} bits, found {}", s.len())));
        }
        for (j, ch) in s.chars().enumerate() {
            match ch {
                '0' => cbin.push(false),
                '1' => cbin.push(true),
                other => return Err(schema(&at, format!("entry {j} is {other:?}, not a bit"))),
            }
        }
    }
    let leak = array(field(core, "leak", at)?, &format!("{at}.leak"), Some(NEURONS))?
        .iter()
        .enumerate()
        .map(|(j, v)| {
            v.as_i64()
                .and_then(|x| i32::try_from(x).ok())
                .ok_or_else(|| schema(format!("{at}.leak[{j}]"), "expected a 32-bit integer"))
        })
        .collect::<Result<Vec<_>, _>>()?;
    DeployedCore::new(template.clone(), cbin, leak, used_axons, used_neurons).map_err(|e| schema(at, e.to_string()))
}

fn parse_continuous_core(
    core: &Map<String, Value>,
    at: &str,
    template: &SynapseTemplate,
    used_axons: usize,
    used_neurons: usize,
) -> Result<CoreParams, NetFileError> {
    if core.contains_key("cbin") || core.contains_key("leak") {
        return Err(schema(at, "deployed fields in a continuous network"));
    }
    let rows = array(field(core, "c", at)?, &format!("{at}.c"), Some(AXONS))?;
    let mut c = Vec::with_capacity(AXONS * NEURONS);
    for (i, row) in rows.iter().enumerate() {
        c.extend(f64_array(row, &format!("{at}.c[{i}]"), NEURONS)?);
    }
    let b = f64_array(field(core, "b", at)?, &format!("{at}.b"), NEURONS)?;
    CoreParams::from_parts(template.clone(), c, b, used_axons, used_neurons).map_err(|e| schema(at, e.to_string()))
}

fn parse_training(v: &Value) -> Result<TrainingState, NetFileError> {
    let at = "$.training";
    let obj = v.as_object().ok_or_else(|| schema(at, "expected an object"))?;
    let rng = field(obj, "rngState", at)?.as_object().ok_or_else(|| schema("$.training.rngState", "expected an object"))?;
    let rng_state = RngState {
        seed: u64_field(rng, "seed", "$.training.rngState")?,
        next_sample: u64_field(rng, "nextSample", "$.training.rngState")?,
    };
    let history = array(field(obj, "history", at)?, "$.training.history", None)?
        .iter()
        .enumerate()
        .map(|(k, h)| {
            let at = format!("$.training.history[{k}]");
            let h = h.as_object().ok_or_else(|| schema(&at, "expected an object"))?;
            let loss = field(h, "loss", &at)?.as_f64().ok_or_else(|| schema(&at, "loss must be a number"))?;
            let accuracy = match h.get("accuracy") {
                None | Some(Value::Null) => None,
                Some(a) => Some(a.as_f64().ok_or_else(|| schema(&at, "accuracy must be a number"))?),
            };
            Ok(HistoryEntry { iteration: u64_field(h, "iteration", &at)?, loss, accuracy })
        })
        .collect::<Result<Vec<_>, NetFileError>>()?;
    Ok(TrainingState { iteration: u64_field(obj, "iteration", at)?, rng_state, history })
}

pub fn save_deployed(path: &Path, net: &DeployedNetwork) -> Result<(), NetFileError> {
    save_network(path, &NetworkDocument { network: AnyNetwork::Deployed(net.clone()), training: None })
}

/// Loads a deployed network; continuous documents are rejected.
pub fn load_deployed(path: &Path) -> Result<DeployedNetwork, NetFileError> {
    match load_network(path)?.network {
        AnyNetwork::Deployed(net) => Ok(net),
        AnyNetwork::Continuous(_) => Err(schema("$.layers", "expected a deployed network (cbin), found continuous (c)")),
    }
}

pub fn save_checkpoint(path: &Path, run: &TrainRun) -> Result<(), NetFileError> {
    save_network(path, &run.to_document())
}

pub fn load_checkpoint(path: &Path) -> Result<TrainRun, NetFileError> {
    let doc = load_network(path)?;
    TrainRun::from_document(doc).map_err(|detail| schema("$", detail))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trainer::HistoryEntry;

    fn deployed_small() -> DeployedNetwork {
        let cont = ContinuousNetwork::initialize(&TopologySpec::mnist_small(), 5).unwrap();
        crate::deploy::deploy(&cont).unwrap()
    }

    #[test]
    fn deployed_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.json");
        let net = deployed_small();
        save_deployed(&path, &net).unwrap();
        assert_eq!(load_deployed(&path).unwrap(), net);
    }

    #[test]
    fn continuous_round_trip_is_bit_exact() {
        let mut net = ContinuousNetwork::initialize(&TopologySpec::mnist_small(), u64::MAX).unwrap();
        net.layers[1][0].b[3] = -0.1 + 1e-17;
        net.layers[1][0].b[4] = 1.0 / 3.0;
        net.layers[0][2].c[7] = f64::MIN_POSITIVE;
        let doc = NetworkDocument {
            network: AnyNetwork::Continuous(net),
            training: Some(TrainingState {
                iteration: 42,
                rng_state: RngState { seed: u64::MAX, next_sample: 4200 },
                history: vec![
                    HistoryEntry { iteration: 10, loss: 2.25, accuracy: None },
                    HistoryEntry { iteration: 20, loss: 0.1 + 0.2, accuracy: Some(0.875) },
                ],
            }),
        };
        let back = from_json(&to_json(&doc)).unwrap();
        assert_eq!(back, doc);
        let (AnyNetwork::Continuous(a), AnyNetwork::Continuous(b)) = (&back.network, &doc.network) else {
            panic!("kind changed")
        };
        for (x, y) in a.layers.iter().flatten().zip(b.layers.iter().flatten()) {
            assert!(x.c.iter().zip(&y.c).all(|(p, q)| p.to_bits() == q.to_bits()));
            assert!(x.b.iter().zip(&y.b).all(|(p, q)| p.to_bits() == q.to_bits()));
        }
    }

    fn tamper(json: &str, f: impl FnOnce(&mut Value)) -> String {
        let mut v: Value = serde_json::from_str(json).unwrap();
        v.as_object_mut().unwrap().remove("checksum");
        f(&mut v);
        let sum = checksum(&v);
        v["checksum"] = Value::String(sum);
        v.to_string()
    }

    #[test]
    fn bad_bit_is_schema_violation() {
        let doc = NetworkDocument { network: AnyNetwork::Deployed(deployed_small()), training: None };
        let json = tamper(&to_json(&doc), |v| {
            let row = v["layers"][0]["cores"][0]["cbin"][3].as_str().unwrap().to_string();
            v["layers"][0]["cores"][0]["cbin"][3] = Value::String(format!("2{}", &row[1..]));
        });
        let err = from_json(&json).unwrap_err();
        assert!(matches!(err, NetFileError::Schema { .. }), "{err}");
        assert!(err.to_string().contains("cbin[3]"));
    }

    #[test]
    fn version_checksum_and_truncation_are_distinct() {
        let doc = NetworkDocument { network: AnyNetwork::Deployed(deployed_small()), training: None };
        let json = to_json(&doc);

        let newer = tamper(&json, |v| v["formatVersion"] = json!(2));
        assert!(matches!(from_json(&newer).unwrap_err(), NetFileError::Version { .. }));

        let mut v: Value = serde_json::from_str(&json).unwrap();
        v["seed"] = json!(6);
        assert!(matches!(from_json(&v.to_string()).unwrap_err(), NetFileError::Checksum { .. }));

        let truncated = &json[..json.len() / 2];
        assert!(matches!(from_json(truncated).unwrap_err(), NetFileError::Parse(_)));

        let mixed = tamper(&json, |v| v["layers"][1]["cores"][0]["c"] = json!([]));
        assert!(matches!(from_json(&mixed).unwrap_err(), NetFileError::Schema { .. }));

        let short_leak = tamper(&json, |v| v["layers"][0]["cores"][1]["leak"] = json!([1, 2]));
        assert!(matches!(from_json(&short_leak).unwrap_err(), NetFileError::Schema { .. }));
    }

    #[test]
    fn out_of_range_connection_rejected() {
        let net = ContinuousNetwork::zeros(&TopologySpec::mnist_small(), 0).unwrap();
        let doc = NetworkDocument { network: AnyNetwork::Continuous(net), training: None };
        let json = tamper(&to_json(&doc), |v| v["layers"][0]["cores"][0]["c"][0][0] = json!(1.5));
        assert!(matches!(from_json(&json).unwrap_err(), NetFileError::Schema { .. }));
    }

    #[test]
    fn load_deployed_rejects_checkpoint() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.json");
        let net = ContinuousNetwork::zeros(&TopologySpec::mnist_small(), 0).unwrap();
        save_network(&path, &NetworkDocument { network: AnyNetwork::Continuous(net), training: None }).unwrap();
        assert!(load_deployed(&path).is_err());
    }
}
