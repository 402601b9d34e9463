use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use neurocore::analysis::{accuracy_report, read_eval_csv, weight_histogram, write_eval_csv, EnergyModel, EvalRow};
use neurocore::data::{load_idx, AugmentConfig, ImageBatch};
use neurocore::deploy::{check_members, SimError};
use neurocore::netfile::{
    load_network, save_checkpoint, save_deployed, write_atomic, AnyNetwork, NetFileError,
};
use neurocore::topology::{plan_network, tile_positions, validate, TopologySpec};
use neurocore::trainer::{continue_training, LogEntry, TrainConfig, TrainError, TrainRun};
use neurocore::{deploy, evaluate, DeployedNetwork, SynapseTemplate};

use crate::manifest::RunManifest;
use crate::{CliError, Exit};

#[derive(Debug, Parser)]
#[command(name = "neurocore", version, about = "Train and simulate binary-crossbar spiking networks")]
pub struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Where to write the run manifest (default: next to the output).
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compile a topology and print its core grids.
    Plan(PlanArgs),
    /// Train a network and write checkpoints and a loss log.
    Train(TrainArgs),
    /// Binarize a checkpoint into a deployable network.
    Deploy(DeployArgs),
    /// Simulate one network or an ensemble on labelled data.
    Eval(EvalArgs),
    /// Merge evaluation CSVs into an accuracy/energy table.
    Report(ReportArgs),
    /// Histogram the synapse values and leaks of a deployed network.
    Hist(HistArgs),
}

#[derive(Debug, Args)]
pub struct PlanArgs {
    /// Preset name (mnist-small, mnist-large) or path to a topology JSON file.
    pub topology: String,
    #[arg(long)]
    pub template: Option<String>,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Directory holding the four MNIST IDX files.
    #[arg(long, default_value = "data/mnist")]
    pub data_dir: PathBuf,
    #[arg(long)]
    pub images: Option<PathBuf>,
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Use only the first N examples.
    #[arg(long)]
    pub limit: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub iterations: u64,
    /// JSON file with training fields and an optional "topology".
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Preset name or topology JSON file (default mnist-small).
    #[arg(long)]
    pub topology: Option<String>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub lr0: Option<f64>,
    /// none, aug1 or aug2
    #[arg(long)]
    pub aug: Option<String>,
    /// s1, s2 or a comma-separated weight list
    #[arg(long)]
    pub template: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub log_every: Option<u64>,
    /// Write a checkpoint every N iterations (0 disables).
    #[arg(long, default_value_t = 1000)]
    pub checkpoint_every: u64,
    /// Continue from this checkpoint.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DeployArgs {
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Network files; several form an ensemble.
    pub networks: Vec<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "1")]
    pub ticks: Vec<usize>,
    /// Also evaluate ensembles of the first K members, for each K given.
    #[arg(long, value_delimiter = ',')]
    pub sizes: Vec<usize>,
    /// Value of the ensemble_id column (default: template and topology hash).
    #[arg(long)]
    pub id: Option<String>,
    #[command(flatten)]
    pub data: DataArgs,
    /// Output CSV (default stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    pub inputs: Vec<PathBuf>,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    pub e_static: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub e_spike: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct HistArgs {
    pub network: PathBuf,
    /// Directory for weights.csv and bias.csv.
    #[arg(long)]
    pub out: PathBuf,
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::data(format!("{}: {e}", path.display()))
}

fn netfile_err(e: NetFileError) -> CliError {
    match e {
        NetFileError::Topology(_) => CliError::validation(e.to_string()),
        _ => CliError::data(e.to_string()),
    }
}

fn train_err(e: TrainError) -> CliError {
    match e {
        TrainError::Diverged { .. } | TrainError::NonFinite { .. } => CliError::new(Exit::Divergence, e.to_string()),
        TrainError::InputShape { .. } | TrainError::BadLabel { .. } | TrainError::EmptyDataset => {
            CliError::data(e.to_string())
        }
        TrainError::Config(_) | TrainError::Network(_) => CliError::validation(e.to_string()),
    }
}

fn sim_err(e: SimError) -> CliError {
    match e {
        SimError::Shape { .. } | SimError::EmptyDataset => CliError::data(e.to_string()),
        SimError::EmptyEnsemble => CliError::usage(e.to_string()),
        SimError::Mismatch(_) | SimError::ZeroTicks => CliError::validation(e.to_string()),
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    write_atomic(path, bytes).map_err(netfile_err)
}

fn parse_template(s: &str) -> Result<SynapseTemplate, CliError> {
    SynapseTemplate::parse(s).map_err(|e| CliError::validation(format!("template {s:?}: {e}")))
}

/// A preset name, or a path to a topology JSON file.
pub fn load_topology(arg: &str) -> Result<TopologySpec, CliError> {
    if let Ok(spec) = TopologySpec::preset(arg) {
        return Ok(spec);
    }
    let path = Path::new(arg);
    if !path.exists() {
        return Err(CliError::usage(format!("{arg:?} is neither a preset (mnist-small, mnist-large) nor a file")));
    }
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::validation(format!("{}: {e}", path.display())))
}

fn load_data(args: &DataArgs, train: bool) -> Result<ImageBatch, CliError> {
    let (img, lbl) = if train {
        ("train-images-idx3-ubyte", "train-labels-idx1-ubyte")
    } else {
        ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte")
    };
    let images = args.images.clone().unwrap_or_else(|| args.data_dir.join(img));
    let labels = args.labels.clone().unwrap_or_else(|| args.data_dir.join(lbl));
    let data = load_idx(&images, &labels).map_err(|e| CliError::data(e.to_string()))?;
    Ok(match args.limit {
        Some(n) => data.take(n),
        None => data,
    })
}

/// Loads a deployed network, binarizing continuous documents on the way.
pub fn load_any_deployed(path: &Path) -> Result<DeployedNetwork, CliError> {
    let doc = load_network(path).map_err(netfile_err)?;
    match doc.network {
        AnyNetwork::Deployed(net) => Ok(net),
        AnyNetwork::Continuous(net) => {
            deploy(&net).map_err(|e| CliError::validation(format!("{}: {e}", path.display())))
        }
    }
}

/// Training config file: every `TrainConfig` field plus an optional topology.
#[derive(Debug, Default, Deserialize)]
#[serde(rename_all = "camelCase")]
struct RunConfig {
    topology: Option<TopologyRef>,
    #[serde(flatten)]
    train: TrainConfig,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum TopologyRef {
    Preset(String),
    Spec(TopologySpec),
}

struct Session {
    manifest: RunManifest,
    path: Option<PathBuf>,
}

impl Session {
    fn begin(command: &str, args: Vec<String>, path: Option<PathBuf>) -> Result<Self, CliError> {
        let s = Self { manifest: RunManifest::start(command, args), path };
        s.save()?;
        Ok(s)
    }

    fn save(&self) -> Result<(), CliError> {
        match &self.path {
            Some(p) => self.manifest.write(p).map_err(netfile_err),
            None => Ok(()),
        }
    }

    fn end<T>(mut self, result: Result<T, CliError>) -> Result<T, CliError> {
        self.manifest.finish(result.is_ok());
        self.save()?;
        result
    }
}

fn manifest_beside(explicit: &Option<PathBuf>, out: Option<&Path>) -> Option<PathBuf> {
    explicit.clone().or_else(|| {
        out.map(|o| {
            let mut name = o.file_name().map(|n| n.to_os_string()).unwrap_or_default();
            name.push(".manifest.json");
            o.with_file_name(name)
        })
    })
}

pub fn dispatch(cli: Cli, raw_args: Vec<String>) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::usage("--threads must be at least 1"));
        }
        // Fails only if a pool already exists, e.g. when called twice in-process.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let manifest = cli.manifest;
    match cli.command {
        Command::Plan(a) => {
            let session = Session::begin("plan", raw_args, manifest)?;
            let r = cmd_plan(&a);
            session.end(r)
        }
        Command::Train(a) => {
            fs::create_dir_all(&a.out).map_err(|e| io_err(&a.out, e))?;
            let path = manifest.unwrap_or_else(|| a.out.join("manifest.json"));
            let mut session = Session::begin("train", raw_args, Some(path))?;
            session.manifest.config_path = a.config.clone();
            session.manifest.output = Some(a.out.clone());
            let r = cmd_train(&a, &mut session.manifest);
            session.end(r)
        }
        Command::Deploy(a) => {
            let mut session = Session::begin("deploy", raw_args, manifest_beside(&manifest, Some(&a.out)))?;
            session.manifest.output = Some(a.out.clone());
            let r = cmd_deploy(&a, &mut session.manifest);
            session.end(r)
        }
        Command::Eval(a) => {
            let mut session = Session::begin("eval", raw_args, manifest_beside(&manifest, a.out.as_deref()))?;
            session.manifest.output = a.out.clone();
            let r = cmd_eval(&a, &mut session.manifest);
            session.end(r)
        }
        Command::Report(a) => {
            let mut session = Session::begin("report", raw_args, manifest_beside(&manifest, a.out.as_deref()))?;
            session.manifest.output = a.out.clone();
            let r = cmd_report(&a, &mut session.manifest);
            session.end(r)
        }
        Command::Hist(a) => {
            fs::create_dir_all(&a.out).map_err(|e| io_err(&a.out, e))?;
            let path = manifest.unwrap_or_else(|| a.out.join("manifest.json"));
            let mut session = Session::begin("hist", raw_args, Some(path))?;
            session.manifest.output = Some(a.out.clone());
            let r = cmd_hist(&a, &mut session.manifest);
            session.end(r)
        }
    }
}

fn cmd_plan(a: &PlanArgs) -> Result<(), CliError> {
    let mut spec = load_topology(&a.topology)?;
    if let Some(t) = &a.template {
        spec = spec.with_template(parse_template(t)?);
    }
    let plan = match plan_network(&spec) {
        Ok(plan) => plan,
        Err(e) => {
            print!("{}", grid_summary(&spec));
            return Err(CliError::validation(e.to_string()));
        }
    };
    print!("{}", plan.summary());
    if let Err(violations) = validate(&plan) {
        for v in &violations {
            eprintln!("{v}");
        }
        return Err(CliError::validation(format!("{} constraint violation(s)", violations.len())));
    }
    Ok(())
}

/// Grid dimensions from the tiling rule alone, for specs that do not compile.
fn grid_summary(spec: &TopologySpec) -> String {
    let mut out = String::new();
    let (mut rows, mut cols) = (spec.input.h, spec.input.w);
    for (k, layer) in spec.layers.iter().enumerate() {
        let r = tile_positions(rows, layer.block_size, layer.stride).map(|p| p.len());
        let c = tile_positions(cols, layer.block_size, layer.stride).map(|p| p.len());
        let (Ok(r), Ok(c)) = (r, c) else {
            out.push_str(&format!("layer {}: no valid tiling\n", k + 1));
            break;
        };
        out.push_str(&format!("layer {}: grid {r}x{c} ({} cores)\n", k + 1, r * c));
        (rows, cols) = (r, c);
    }
    out
}

fn train_config(a: &TrainArgs) -> Result<(TrainConfig, Option<TopologySpec>), CliError> {
    let file: RunConfig = match &a.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| io_err(p, e))?;
            serde_json::from_str(&text).map_err(|e| CliError::validation(format!("{}: {e}", p.display())))?
        }
        None => RunConfig::default(),
    };
    let mut cfg = file.train;
    cfg.total_iterations = a.iterations;
    if let Some(v) = a.batch {
        cfg.batch_size = v;
    }
    if let Some(v) = a.lr0 {
        cfg.lr0 = v;
    }
    if let Some(v) = &a.aug {
        cfg.augment = AugmentConfig::preset(v)
            .ok_or_else(|| CliError::usage(format!("--aug must be none, aug1 or aug2, not {v:?}")))?;
    }
    if let Some(v) = &a.template {
        cfg.template = parse_template(v)?;
    }
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    if let Some(v) = a.log_every {
        cfg.log_every = v;
    }
    cfg.validate().map_err(train_err)?;
    let topology = match (&a.topology, file.topology) {
        (Some(t), _) => Some(load_topology(t)?),
        (None, Some(TopologyRef::Preset(name))) => Some(load_topology(&name)?),
        (None, Some(TopologyRef::Spec(spec))) => Some(spec),
        (None, None) => None,
    };
    Ok((cfg, topology))
}

fn cmd_train(a: &TrainArgs, manifest: &mut RunManifest) -> Result<(), CliError> {
    let (cfg, topology) = train_config(a)?;
    let run = match &a.resume {
        Some(p) => {
            let run = neurocore::netfile::load_checkpoint(p).map_err(netfile_err)?;
            if run.network.spec().template != cfg.template && a.template.is_some() {
                return Err(CliError::validation("--template differs from the resumed checkpoint"));
            }
            run
        }
        None => {
            let spec = topology.unwrap_or_else(TopologySpec::mnist_small);
            let plan = plan_network(&spec.clone().with_template(cfg.template.clone()))
                .map_err(|e| CliError::validation(e.to_string()))?;
            if let Err(v) = validate(&plan) {
                let lines: Vec<String> = v.iter().map(ToString::to_string).collect();
                return Err(CliError::validation(lines.join("; ")));
            }
            TrainRun::new(&spec, &cfg).map_err(train_err)?
        }
    };
    manifest.seed = Some(run.rng_state.seed);
    let final_path = a.out.join("final.json");
    let log_path = a.out.join("train_log.csv");
    if cfg.total_iterations <= run.iteration {
        save_checkpoint(&final_path, &run).map_err(netfile_err)?;
        manifest.add_artifact(&final_path);
        return Ok(());
    }
    let data = load_data(&a.data, true)?;

    let mut log = format!("{}\n", LogEntry::CSV_HEADER);
    let mut last_ckpt = run.iteration;
    let mut failure: Option<CliError> = None;
    let mut checkpoints = Vec::new();
    let result = continue_training(run, &cfg, &data, |run, entry| {
        log.push_str(&entry.csv_row());
        log.push('\n');
        eprintln!("iteration {} lr {} loss {:.4}", entry.iteration, entry.lr, entry.mean_loss);
        if failure.is_none() {
            if let Err(e) = write_file(&log_path, log.as_bytes()) {
                failure = Some(e);
            }
        }
        let every = a.checkpoint_every;
        if every > 0 && run.iteration / every > last_ckpt / every && run.iteration < cfg.total_iterations {
            last_ckpt = run.iteration;
            let p = a.out.join(format!("checkpoint-{:08}.json", run.iteration));
            match save_checkpoint(&p, run) {
                Ok(()) => checkpoints.push(p),
                Err(e) => failure = failure.take().or(Some(netfile_err(e))),
            }
        }
        None
    });
    if let Some(e) = failure {
        return Err(e);
    }
    for p in &checkpoints {
        manifest.add_artifact(p);
    }
    match result {
        Ok(run) => {
            write_file(&log_path, log.as_bytes())?;
            save_checkpoint(&final_path, &run).map_err(netfile_err)?;
            manifest.add_artifact(&log_path);
            manifest.add_artifact(&final_path);
            Ok(())
        }
        Err(TrainError::Diverged { iteration, last_good }) => {
            let p = a.out.join("last_good.json");
            save_checkpoint(&p, &last_good).map_err(netfile_err)?;
            manifest.add_artifact(&p);
            Err(CliError::new(
                Exit::Divergence,
                format!("loss diverged at iteration {iteration}; last good state saved to {}", p.display()),
            ))
        }
        Err(e) => Err(train_err(e)),
    }
}

fn cmd_deploy(a: &DeployArgs, manifest: &mut RunManifest) -> Result<(), CliError> {
    let net = load_any_deployed(&a.checkpoint)?;
    manifest.seed = Some(net.seed);
    save_deployed(&a.out, &net).map_err(netfile_err)?;
    manifest.add_artifact(&a.out);
    Ok(())
}

/// Evaluation rows for each ensemble size (default: all members) and tick count.
pub fn eval_rows(
    nets: &[DeployedNetwork],
    data: &ImageBatch,
    ticks: &[usize],
    sizes: &[usize],
    id: &str,
) -> Result<Vec<EvalRow>, CliError> {
    let all = [nets.len()];
    let sizes = if sizes.is_empty() { &all[..] } else { sizes };
    let mut rows = Vec::new();
    for &m in sizes {
        if m == 0 || m > nets.len() {
            return Err(CliError::usage(format!("ensemble size {m} is not in 1..={}", nets.len())));
        }
        for &t in ticks {
            let report = evaluate(&nets[..m], data, t).map_err(sim_err)?;
            rows.push(EvalRow::from_report(id, &report));
        }
    }
    Ok(rows)
}

fn cmd_eval(a: &EvalArgs, manifest: &mut RunManifest) -> Result<(), CliError> {
    if a.networks.is_empty() {
        return Err(CliError::usage("eval needs at least one network file"));
    }
    if a.ticks.contains(&0) {
        return Err(CliError::usage("--ticks values must be at least 1"));
    }
    let nets = a.networks.iter().map(|p| load_any_deployed(p)).collect::<Result<Vec<_>, _>>()?;
    check_members(&nets).map_err(sim_err)?;
    manifest.seed = Some(nets[0].seed);
    let data = load_data(&a.data, false)?;
    let id = a.id.clone().unwrap_or_else(|| format!("{}-{}", nets[0].template_name(), &nets[0].topology_hash()[..8]));
    let rows = eval_rows(&nets, &data, &a.ticks, &a.sizes, &id)?;
    let csv = write_eval_csv(&rows).map_err(|e| CliError::data(e.to_string()))?;
    match &a.out {
        Some(p) => {
            write_file(p, csv.as_bytes())?;
            manifest.add_artifact(p);
        }
        None => print!("{csv}"),
    }
    Ok(())
}

fn cmd_report(a: &ReportArgs, manifest: &mut RunManifest) -> Result<(), CliError> {
    if a.inputs.is_empty() {
        return Err(CliError::usage("report needs at least one evaluation CSV"));
    }
    let model = EnergyModel::new(a.e_static, a.e_spike).map_err(|e| CliError::validation(e.to_string()))?;
    let mut rows = Vec::new();
    for p in &a.inputs {
        let f = fs::File::open(p).map_err(|e| io_err(p, e))?;
        rows.extend(read_eval_csv(f).map_err(|e| CliError::data(format!("{}: {e}", p.display())))?);
    }
    let report = accuracy_report(&rows, &model).map_err(|e| CliError::data(e.to_string()))?;
    match &a.out {
        Some(p) => {
            write_file(p, report.as_bytes())?;
            manifest.add_artifact(p);
        }
        None => print!("{report}"),
    }
    Ok(())
}

fn cmd_hist(a: &HistArgs, manifest: &mut RunManifest) -> Result<(), CliError> {
    let net = load_any_deployed(&a.network)?;
    let h = weight_histogram(&net);
    let w = a.out.join("weights.csv");
    let b = a.out.join("bias.csv");
    write_file(&w, h.weights_csv().as_bytes())?;
    write_file(&b, h.bias_csv().as_bytes())?;
    manifest.add_artifact(&w);
    manifest.add_artifact(&b);
    println!("zero synapses: {:.4}", h.zero_fraction());
    Ok(())
}
