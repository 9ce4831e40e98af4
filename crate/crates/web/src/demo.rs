//! Plain-Rust side of the browser demo. Everything here runs natively too,
//! which is how it is tested; `lib.rs` only adds the JS bindings.

use brainpinn::cli::RunConfig;
use brainpinn::modular::extract_template;
use brainpinn::network::GeometricNetwork;
use brainpinn::problems::uniform_grid;
use brainpinn::trainer::{composite_value, LossBreakdown, Trainer};
use brainpinn::ActivationKind;
use serde::Serialize;

/// Points used to draw the solution curves.
pub const PLOT_POINTS: usize = 200;

#[derive(Debug, Serialize)]
pub struct ActivationCurve {
    pub x: Vec<f64>,
    pub a: Vec<f64>,
    pub da: Vec<f64>,
    pub dda: Vec<f64>,
}

pub fn activation_curve(kind: &str, lo: f64, hi: f64, n: usize) -> Result<ActivationCurve, String> {
    let kind: ActivationKind = kind.parse()?;
    if n < 2 || !(hi > lo) {
        return Err("need n >= 2 and hi > lo".into());
    }
    let x = uniform_grid(lo, hi, n);
    let d: Vec<[f64; 4]> = x.iter().map(|&x| kind.derivatives(x)).collect();
    Ok(ActivationCurve {
        a: d.iter().map(|d| d[0]).collect(),
        da: d.iter().map(|d| d[1]).collect(),
        dda: d.iter().map(|d| d[2]).collect(),
        x,
    })
}

#[derive(Debug, Serialize)]
pub struct Edge {
    pub from: [f64; 2],
    pub to: [f64; 2],
    pub w: f64,
}

#[derive(Debug, Serialize)]
pub struct SessionState {
    pub epoch: usize,
    pub total_epochs: usize,
    pub lambda: f64,
    /// `[epoch, total, pde, bc, reg, test_euclidean]` per recorded row.
    pub losses: Vec<[f64; 6]>,
    pub t: Vec<f64>,
    pub prediction: Vec<f64>,
    pub analytic: Vec<f64>,
    pub nodes: Vec<[f64; 2]>,
    pub edges: Vec<Edge>,
    pub active_units: Vec<usize>,
}

/// A training run advanced a few epochs at a time.
pub struct Session {
    trainer: Trainer,
    last: LossBreakdown,
}

impl Session {
    /// `config_json` uses the same keys as the command-line config files.
    pub fn new(config_json: &str) -> Result<Self, String> {
        let config = RunConfig::from_json(config_json).map_err(|e| e.to_string())?;
        config.validate().map_err(|e| e.to_string())?;
        let spec = config.problem_spec().map_err(|e| e.to_string())?;
        let instances = config.initial_instances().map_err(|e| e.to_string())?;
        let trainer =
            Trainer::new(instances, &spec, &config.train_config()).map_err(|e| e.to_string())?;
        Ok(Self {
            trainer,
            last: LossBreakdown::default(),
        })
    }

    pub fn is_done(&self) -> bool {
        self.trainer.is_done()
    }

    /// Runs up to `epochs` more epochs. Returns how many ran.
    pub fn step(&mut self, epochs: usize) -> Result<usize, String> {
        let mut ran = 0;
        while ran < epochs && !self.trainer.is_done() {
            self.last = self.trainer.step().map_err(|e| e.to_string())?;
            ran += 1;
        }
        Ok(ran)
    }

    pub fn loss(&self) -> LossBreakdown {
        self.last
    }

    pub fn network(&self) -> &GeometricNetwork {
        &self.trainer.instances()[0]
    }

    pub fn state(&self) -> SessionState {
        let spec = self.trainer.spec();
        let config = self.trainer.config();
        let epoch = self.trainer.epoch();
        let (lo, hi) = spec.domain;
        let t = uniform_grid(lo, hi, PLOT_POINTS);
        let instances = self.trainer.instances();
        let net = self.network();
        let lambda = if config.bimt_enabled {
            config
                .schedule
                .lambda_at(epoch.min(config.epochs.saturating_sub(1)))
                .0
        } else {
            0.0
        };
        let mut edges = Vec::new();
        for (l, span) in net.spans().iter().enumerate() {
            for r in 0..span.outputs {
                for c in 0..span.inputs {
                    let i = span.weight(r, c);
                    let w = net.params()[i];
                    if net.mask()[i] && w != 0.0 {
                        edges.push(Edge {
                            from: net.coords()[l][c],
                            to: net.coords()[l + 1][r],
                            w,
                        });
                    }
                }
            }
        }
        let (_, stats) = net.pruned(config.prune_threshold);
        SessionState {
            epoch,
            total_epochs: config.epochs,
            lambda,
            losses: self
                .trainer
                .metrics()
                .iter()
                .map(|r| {
                    [
                        r.epoch as f64,
                        r.total_loss,
                        r.pde_loss,
                        r.bc_loss,
                        r.reg_loss,
                        r.test_euclidean,
                    ]
                })
                .collect(),
            prediction: t.iter().map(|&t| composite_value(instances, t)).collect(),
            analytic: t.iter().map(|&t| spec.analytic_solution(t)).collect(),
            t,
            nodes: net.coords().iter().flatten().copied().collect(),
            edges,
            active_units: stats.active_units_per_layer,
        }
    }

    /// Connectivity of the current network after pruning, as template JSON.
    pub fn template_json(&self) -> Result<String, String> {
        let (pruned, _) = self.network().pruned(self.trainer.config().prune_threshold);
        let (template, _) = extract_template(&pruned).map_err(|e| e.to_string())?;
        serde_json::to_string(&template).map_err(|e| e.to_string())
    }
}
