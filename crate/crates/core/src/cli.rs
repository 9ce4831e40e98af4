//! Command implementations behind the `brainpinn` binary: config handling,
//! run directories, figure presets and DOT export.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::activations::ActivationKind;
use crate::bimt::{PhaseSchedule, RegularizerConfig};
use crate::modular::{build_modular, extract_template, ModularError, ModuleTemplate};
use crate::network::{Architecture, GeometricNetwork, NetworkError, NetworkSnapshot};
use crate::problems::{CollocationCounts, ProblemError, ProblemSpec};
use crate::trainer::{
    init_network, metrics_csv, train_instances, GradientEngine, RunRecord, TrainConfig, TrainError,
};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Config(String),
    #[error("bad override `{0}`: expected key=value")]
    Override(String),
    #[error("no output directory: pass --out or set output_dir")]
    NoOutputDir,
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Modular(#[from] ModularError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error("malformed snapshot: {0}")]
    Snapshot(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::write(path, contents).map_err(io_err(path))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).expect("serializable");
    write_file(path, text + "\n")
}

/// Every knob of a run in one flat JSON object. Missing keys take the
/// defaults below; unknown keys are rejected.
///
/// | key | default |
/// |---|---|
/// | `problem` | `"poisson_harmonic"` (or `"logistic"`) |
/// | `coefficients` | `[1, 4, 9, 16]` |
/// | `logistic_rate`, `logistic_x0` | `1.0`, `0.5` |
/// | `t_lo`, `t_hi` | `null` (problem's own domain: `[0, 2π]` or `[0, 5]`) |
/// | `n_interior`, `n_boundary`, `n_test` | `1000`, `50`, `100` |
/// | `hidden_layers`, `hidden_units` | `1`, `21` |
/// | `activation`, `final_activation` | `"sinlu"`, `false` |
/// | `A` | `2.0` |
/// | `epochs`, `learning_rate` | `100000`, `0.002` |
/// | `beta1`, `beta2`, `epsilon`, `weight_decay` | `0.9`, `0.999`, `1e-8`, `0.0` |
/// | `seed` | `0` |
/// | `bimt_enabled` | `true` |
/// | `lambda_phase1`, `lambda_phase2`, `lambda_phase3` | `0.001`, `0.01`, `0.001` |
/// | `bias_penalty_in_phase3` | `true` |
/// | `swap_interval`, `prune_threshold` | `200`, `0.001` |
/// | `snapshot_every`, `metrics_every` | `10000`, `100` (0 disables snapshots) |
/// | `engine` | `"fused"` (or `"tape"`) |
/// | `template`, `modules` | `null`, `1`; a template path trains `modules` summed copies |
/// | `output_dir` | `null` |
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub problem: String,
    pub coefficients: Vec<f64>,
    pub logistic_rate: f64,
    pub logistic_x0: f64,
    pub t_lo: Option<f64>,
    pub t_hi: Option<f64>,
    pub n_interior: usize,
    pub n_boundary: usize,
    pub n_test: usize,
    pub hidden_layers: usize,
    pub hidden_units: usize,
    pub activation: ActivationKind,
    pub final_activation: bool,
    #[serde(rename = "A")]
    pub a: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
    pub seed: u64,
    pub bimt_enabled: bool,
    pub lambda_phase1: f64,
    pub lambda_phase2: f64,
    pub lambda_phase3: f64,
    pub bias_penalty_in_phase3: bool,
    pub swap_interval: usize,
    pub prune_threshold: f64,
    pub snapshot_every: usize,
    pub metrics_every: usize,
    pub engine: GradientEngine,
    pub template: Option<PathBuf>,
    pub modules: usize,
    pub output_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let train = TrainConfig::default();
        let counts = CollocationCounts::default();
        Self {
            problem: "poisson_harmonic".into(),
            coefficients: vec![1.0, 4.0, 9.0, 16.0],
            logistic_rate: 1.0,
            logistic_x0: 0.5,
            t_lo: None,
            t_hi: None,
            n_interior: counts.interior,
            n_boundary: counts.boundary,
            n_test: counts.test,
            hidden_layers: 1,
            hidden_units: 21,
            activation: ActivationKind::SinLU,
            final_activation: false,
            a: 2.0,
            epochs: train.epochs,
            learning_rate: train.learning_rate,
            beta1: train.beta1,
            beta2: train.beta2,
            epsilon: train.epsilon,
            weight_decay: train.weight_decay,
            seed: train.seed,
            bimt_enabled: train.bimt_enabled,
            lambda_phase1: train.schedule.lambda_phase1,
            lambda_phase2: train.schedule.lambda_phase2,
            lambda_phase3: train.schedule.lambda_phase3,
            bias_penalty_in_phase3: train.schedule.bias_penalty_in_phase3,
            swap_interval: train.reg.swap_interval,
            prune_threshold: train.prune_threshold,
            snapshot_every: 10_000,
            metrics_every: train.metrics_every,
            engine: GradientEngine::Fused,
            template: None,
            modules: 1,
            output_dir: None,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Parses `text` and applies `key=value` overrides. Values are read as
    /// JSON where possible and as bare strings otherwise.
    pub fn from_json_with_overrides(text: &str, overrides: &[String]) -> Result<Self, CliError> {
        let mut value: Value =
            serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        let obj = value
            .as_object_mut()
            .ok_or_else(|| CliError::Config("top level must be an object".into()))?;
        for item in overrides {
            let (key, raw) = item
                .split_once('=')
                .ok_or_else(|| CliError::Override(item.clone()))?;
            let key = key.trim();
            if key.is_empty() {
                return Err(CliError::Override(item.clone()));
            }
            let parsed =
                serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
            obj.insert(key.to_string(), parsed);
        }
        serde_json::from_value(value).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable")
    }

    pub fn problem_spec(&self) -> Result<ProblemSpec, CliError> {
        let spec = match self.problem.as_str() {
            "poisson_harmonic" => ProblemSpec::poisson_harmonic(self.coefficients.clone())?,
            "logistic" => ProblemSpec::logistic(self.logistic_rate, self.logistic_x0),
            other => {
                return Err(CliError::Config(format!(
                    "unknown problem `{other}` (expected poisson_harmonic or logistic)"
                )))
            }
        };
        let (lo, hi) = spec.domain;
        match (self.t_lo, self.t_hi) {
            (None, None) => Ok(spec),
            (a, b) => Ok(spec.with_domain(a.unwrap_or(lo), b.unwrap_or(hi))?),
        }
    }

    pub fn architecture(&self) -> Result<Architecture, CliError> {
        Ok(Architecture::mlp(
            self.hidden_layers,
            self.hidden_units,
            self.activation,
            self.a,
        )
        .and_then(|a| {
            Architecture::new(
                a.layer_sizes,
                self.activation,
                self.final_activation,
                self.a,
            )
        })?)
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
            weight_decay: self.weight_decay,
            seed: self.seed,
            bimt_enabled: self.bimt_enabled,
            schedule: PhaseSchedule {
                total_epochs: self.epochs,
                lambda_phase1: self.lambda_phase1,
                lambda_phase2: self.lambda_phase2,
                lambda_phase3: self.lambda_phase3,
                bias_penalty_in_phase3: self.bias_penalty_in_phase3,
            },
            reg: RegularizerConfig {
                swap_interval: self.swap_interval,
            },
            prune_threshold: self.prune_threshold,
            snapshot_every: self.snapshot_every,
            metrics_every: self.metrics_every,
            collocation: CollocationCounts {
                interior: self.n_interior,
                boundary: self.n_boundary,
                test: self.n_test,
            },
            engine: self.engine,
        }
    }

    /// Initial networks: one fresh MLP, or `modules` copies of a template.
    pub fn initial_instances(&self) -> Result<Vec<GeometricNetwork>, CliError> {
        match &self.template {
            None => Ok(vec![init_network(self.architecture()?, self.seed)]),
            Some(path) => {
                let text = fs::read_to_string(path).map_err(io_err(path))?;
                let template: ModuleTemplate = serde_json::from_str(&text)
                    .map_err(|e| CliError::Config(format!("template {}: {e}", path.display())))?;
                Ok(build_modular(&template, self.modules, self.seed)?.instances)
            }
        }
    }

    /// Checks everything that can be checked before any output is written.
    pub fn validate(&self) -> Result<(), CliError> {
        self.problem_spec()?;
        if self.template.is_none() {
            self.architecture()?;
            if self.modules != 1 {
                return Err(CliError::Config("modules > 1 needs a template".into()));
            }
        }
        self.train_config().validate()?;
        Ok(())
    }
}

/// Where a finished run left its results.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub dir: PathBuf,
    pub record: RunRecord,
}

fn snapshot_name(epoch: usize, instance: usize, instances: usize) -> String {
    if instances == 1 {
        format!("snapshot_{epoch}.json")
    } else {
        format!("snapshot_{epoch}_{instance}.json")
    }
}

/// Writes `metrics.csv`, snapshots, `final_report.json` and, when a single
/// network keeps an input-to-output path, its `template.json`.
pub fn write_run(dir: &Path, record: &RunRecord) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    write_file(&dir.join("metrics.csv"), metrics_csv(&record.metrics))?;
    for set in &record.snapshots {
        let n = set.instances.len();
        for (j, snap) in set.instances.iter().enumerate() {
            write_json(&dir.join(snapshot_name(set.epoch, j, n)), snap)?;
        }
    }
    write_json(&dir.join("final_report.json"), &record.final_report)?;
    if let [net] = record.instances.as_slice() {
        if let Ok((template, _)) = extract_template(net) {
            write_json(&dir.join("template.json"), &template)?;
        }
    }
    Ok(())
}

/// Trains per `config` into `dir`. On divergence the metrics collected so
/// far are still written before the error is returned.
pub fn run_config(config: &RunConfig, dir: &Path) -> Result<RunOutput, CliError> {
    config.validate()?;
    let spec = config.problem_spec()?;
    let train_config = config.train_config();
    let instances = config.initial_instances()?;
    let train_config = if instances.len() > 1 {
        train_config.plain()
    } else {
        train_config
    };
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    write_file(&dir.join("config.json"), config.to_json() + "\n")?;
    match train_instances(instances, &spec, &train_config) {
        Ok(record) => {
            write_run(dir, &record)?;
            Ok(RunOutput {
                dir: dir.to_path_buf(),
                record,
            })
        }
        Err(TrainError::Diverged { epoch, metrics }) => {
            write_file(&dir.join("metrics.csv"), metrics_csv(&metrics))?;
            Err(TrainError::Diverged { epoch, metrics }.into())
        }
        Err(e) => Err(e.into()),
    }
}

/// `train --config <path> [--set key=value]... [--out dir]`
pub fn cmd_train(
    config_path: &Path,
    overrides: &[String],
    out: Option<&Path>,
) -> Result<RunOutput, CliError> {
    let text = fs::read_to_string(config_path).map_err(io_err(config_path))?;
    let config = RunConfig::from_json_with_overrides(&text, overrides)?;
    config.validate()?;
    let dir = out
        .map(Path::to_path_buf)
        .or_else(|| config.output_dir.clone())
        .ok_or(CliError::NoOutputDir)?;
    run_config(&config, &dir)
}

/// Expected number of metrics rows for a run of `epochs`.
pub fn expected_metrics_rows(epochs: usize, metrics_every: usize) -> usize {
    let regular = (epochs - 1) / metrics_every + 1;
    if (epochs - 1).is_multiple_of(metrics_every) {
        regular
    } else {
        regular + 1
    }
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Fig2,
    Fig4,
    Fig5,
}

impl std::str::FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fig2" => Ok(Preset::Fig2),
            "fig4" => Ok(Preset::Fig4),
            "fig5" => Ok(Preset::Fig5),
            other => Err(format!(
                "unknown preset `{other}` (expected fig2, fig4 or fig5)"
            )),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct PresetOptions {
    pub epochs: Option<usize>,
    pub seeds: Option<usize>,
    /// fig5 only: module template to use instead of deriving one.
    pub template: Option<PathBuf>,
}

impl Preset {
    pub fn default_epochs(self) -> usize {
        match self {
            Preset::Fig2 => 400_000,
            Preset::Fig4 | Preset::Fig5 => 100_000,
        }
    }

    pub fn default_seeds(self) -> usize {
        match self {
            Preset::Fig2 => 1,
            Preset::Fig4 | Preset::Fig5 => 3,
        }
    }
}

/// The single-harmonic and logistic problems swept by fig4, by name.
pub fn fig4_problems() -> Vec<(&'static str, RunConfig)> {
    let mut out = Vec::new();
    let logistic = RunConfig {
        problem: "logistic".into(),
        ..RunConfig::default()
    };
    out.push(("logistic", logistic));
    for (k, name) in [(1, "k1"), (2, "k2"), (3, "k3"), (4, "k4")] {
        let mut coefficients = vec![0.0; k];
        coefficients[k - 1] = (k * k) as f64;
        out.push((
            name,
            RunConfig {
                coefficients,
                ..RunConfig::default()
            },
        ));
    }
    out
}

/// One row of the fig4 table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Fig4Row {
    pub problem: String,
    pub depth: usize,
    pub seed: u64,
    pub active_hidden_units: usize,
    pub active_units_per_layer: Vec<usize>,
    pub nonzero_weights: usize,
    pub total_weights: usize,
    pub test_euclidean: f64,
}

pub fn fig4_csv(rows: &[Fig4Row]) -> String {
    let mut out = String::from(
        "problem,depth,seed,active_hidden_units,active_units_per_layer,nonzero_weights,total_weights,test_euclidean\n",
    );
    for r in rows {
        let per: Vec<String> = r
            .active_units_per_layer
            .iter()
            .map(|u| u.to_string())
            .collect();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.problem,
            r.depth,
            r.seed,
            r.active_hidden_units,
            per.join("|"),
            r.nonzero_weights,
            r.total_weights,
            r.test_euclidean
        );
    }
    out
}

/// Median active hidden units per (problem, depth), in sweep order.
pub fn fig4_medians(rows: &[Fig4Row]) -> Vec<(String, usize, f64)> {
    let mut keys: Vec<(String, usize)> = Vec::new();
    for r in rows {
        let key = (r.problem.clone(), r.depth);
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    keys.into_iter()
        .map(|(p, d)| {
            let v: Vec<f64> = rows
                .iter()
                .filter(|r| r.problem == p && r.depth == d)
                .map(|r| r.active_hidden_units as f64)
                .collect();
            let m = median(&v);
            (p, d, m)
        })
        .collect()
}

fn progress(msg: &str) {
    eprintln!("{msg}");
}

fn error_summary(record: &RunRecord) -> Value {
    let f = &record.final_report;
    serde_json::json!({
        "test_mse": f.error.mse,
        "test_euclidean": f.error.euclidean,
        "active_hidden_units": f.active_hidden_units,
        "nonzero_weights": f.nonzero_weights,
        "total_weights": f.total_weights,
    })
}

pub fn cmd_preset(preset: Preset, out: &Path, opts: &PresetOptions) -> Result<(), CliError> {
    let epochs = opts.epochs.unwrap_or(preset.default_epochs());
    let seeds = opts.seeds.unwrap_or(preset.default_seeds()) as u64;
    if epochs == 0 || seeds == 0 {
        return Err(CliError::Config(
            "epochs and seeds must be at least 1".into(),
        ));
    }
    fs::create_dir_all(out).map_err(io_err(out))?;
    let base = RunConfig {
        epochs,
        ..RunConfig::default()
    };
    match preset {
        Preset::Fig2 => {
            let mut summary = serde_json::Map::new();
            for seed in 0..seeds {
                for (name, bimt) in [("bimt", true), ("dense", false)] {
                    let config = RunConfig {
                        hidden_layers: 2,
                        bimt_enabled: bimt,
                        seed,
                        ..base.clone()
                    };
                    let dir = out.join(format!("{name}_s{seed}"));
                    progress(&format!("fig2 {name} seed {seed}: {epochs} epochs"));
                    let run = run_config(&config, &dir)?;
                    summary.insert(format!("{name}_s{seed}"), error_summary(&run.record));
                }
            }
            write_json(&out.join("summary.json"), &summary)?;
        }
        Preset::Fig4 => {
            let mut rows = Vec::new();
            for (name, problem) in fig4_problems() {
                for depth in [1, 2] {
                    for seed in 0..seeds {
                        let config = RunConfig {
                            hidden_layers: depth,
                            seed,
                            epochs,
                            snapshot_every: 0,
                            ..problem.clone()
                        };
                        progress(&format!("fig4 {name} depth {depth} seed {seed}"));
                        let dir = out.join(format!("{name}_d{depth}_s{seed}"));
                        let run = run_config(&config, &dir)?;
                        let f = &run.record.final_report;
                        rows.push(Fig4Row {
                            problem: name.to_string(),
                            depth,
                            seed,
                            active_hidden_units: f.active_hidden_units,
                            active_units_per_layer: f.prune[0].active_units_per_layer.clone(),
                            nonzero_weights: f.nonzero_weights,
                            total_weights: f.total_weights,
                            test_euclidean: f.error.euclidean,
                        });
                        write_file(&out.join("fig4.csv"), fig4_csv(&rows))?;
                    }
                }
            }
            let mut medians = String::from("problem,depth,median_active_hidden_units\n");
            for (p, d, m) in fig4_medians(&rows) {
                let _ = writeln!(medians, "{p},{d},{m}");
            }
            write_file(&out.join("fig4_medians.csv"), medians)?;
        }
        Preset::Fig5 => {
            let template_path = match &opts.template {
                Some(p) => p.clone(),
                None => {
                    // Derive the module from a BIMT run on the sin(t) source.
                    let config = RunConfig {
                        coefficients: vec![1.0],
                        snapshot_every: 0,
                        ..base.clone()
                    };
                    progress("fig5 deriving module template from the k=1 problem");
                    let dir = out.join("primitive");
                    let run = run_config(&config, &dir)?;
                    let (template, _) = extract_template(&run.record.instances[0])?;
                    let path = dir.join("template.json");
                    write_json(&path, &template)?;
                    path
                }
            };
            let mut table =
                String::from("seed,modular_mse,modular_euclidean,dense_mse,dense_euclidean\n");
            let (mut mm, mut me, mut dm, mut de) = (vec![], vec![], vec![], vec![]);
            for seed in 0..seeds {
                let modular = RunConfig {
                    bimt_enabled: false,
                    template: Some(template_path.clone()),
                    modules: 3,
                    seed,
                    snapshot_every: 0,
                    ..base.clone()
                };
                let dense = RunConfig {
                    bimt_enabled: false,
                    hidden_units: 9,
                    seed,
                    snapshot_every: 0,
                    ..base.clone()
                };
                progress(&format!("fig5 seed {seed}: modular vs dense 1-9-1"));
                let m = run_config(&modular, &out.join(format!("modular_s{seed}")))?;
                let d = run_config(&dense, &out.join(format!("dense_s{seed}")))?;
                let (me_, de_) = (&m.record.final_report.error, &d.record.final_report.error);
                let _ = writeln!(
                    table,
                    "{seed},{},{},{},{}",
                    me_.mse, me_.euclidean, de_.mse, de_.euclidean
                );
                mm.push(me_.mse);
                me.push(me_.euclidean);
                dm.push(de_.mse);
                de.push(de_.euclidean);
            }
            write_file(&out.join("fig5.csv"), table)?;
            write_json(
                &out.join("summary.json"),
                &serde_json::json!({
                    "median_modular_mse": median(&mm),
                    "median_modular_euclidean": median(&me),
                    "median_dense_mse": median(&dm),
                    "median_dense_euclidean": median(&de),
                }),
            )?;
        }
    }
    Ok(())
}

/// Graphviz drawing of a snapshot. Nodes sit at their stored coordinates;
/// edges are colored by weight sign with width proportional to |w|.
pub fn export_dot(snapshot_json: &str) -> Result<String, CliError> {
    let snap: NetworkSnapshot =
        serde_json::from_str(snapshot_json).map_err(|e| CliError::Snapshot(e.to_string()))?;
    let net =
        GeometricNetwork::from_snapshot(&snap).map_err(|e| CliError::Snapshot(e.to_string()))?;
    Ok(network_dot(&net))
}

pub fn network_dot(net: &GeometricNetwork) -> String {
    let sizes = net.layer_sizes();
    let last = sizes.len() - 1;
    let present: Vec<Vec<bool>> = sizes
        .iter()
        .enumerate()
        .map(|(l, &n)| {
            (0..n)
                .map(|u| l == 0 || l == last || net.unit_is_active(l, u))
                .collect()
        })
        .collect();
    let mut out = String::new();
    out.push_str("digraph pinn {\n");
    out.push_str("  layout=neato;\n");
    out.push_str("  node [shape=circle, label=\"\", width=0.15, style=filled, fillcolor=black];\n");
    out.push_str("  edge [arrowhead=none];\n");
    for (l, units) in present.iter().enumerate() {
        for (u, &shown) in units.iter().enumerate() {
            if shown {
                let [x, y] = net.coords()[l][u];
                let _ = writeln!(out, "  n{l}_{u} [pos=\"{x},{y}!\"];");
            }
        }
    }
    for (l, span) in net.spans().iter().enumerate() {
        for r in 0..span.outputs {
            for c in 0..span.inputs {
                let i = span.weight(r, c);
                let w = net.params()[i];
                if !net.mask()[i] || w == 0.0 || !present[l][c] || !present[l + 1][r] {
                    continue;
                }
                let color = if w > 0.0 { "red" } else { "blue" };
                let width = (5.0 * w.abs()).clamp(0.2, 5.0);
                let _ = writeln!(
                    out,
                    "  n{l}_{c} -> n{}_{r} [color={color}, penwidth={width}];",
                    l + 1
                );
            }
        }
    }
    out.push_str("}\n");
    out
}

pub fn cmd_export_dot(snapshot: &Path, output: Option<&Path>) -> Result<String, CliError> {
    let text = fs::read_to_string(snapshot).map_err(io_err(snapshot))?;
    let dot = export_dot(&text)?;
    if let Some(path) = output {
        write_file(path, &dot)?;
    }
    Ok(dot)
}
