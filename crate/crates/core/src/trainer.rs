//! PINN training loop.
//!
//! A model is one or more [`GeometricNetwork`]s whose outputs are summed
//! (a single network is the one-instance case). Each epoch evaluates the
//! composite loss over every collocation point, adds the scheduled locality
//! penalty, takes one AdamW step and, every `swap_interval` epochs, runs a
//! swap pass. After the last epoch the networks are pruned and scored
//! against the analytic solution.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{Scalar, Tape};
use crate::bimt::{try_swaps, LocalityCost, PhaseSchedule, RegularizerConfig};
use crate::network::{Architecture, GeometricNetwork, JetWorkspace, NetworkSnapshot, PruneStats};
use crate::problems::{
    test_error, CollocationCounts, CollocationSet, ErrorReport, ProblemError, ProblemSpec,
};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error("loss became non-finite at epoch {epoch}")]
    Diverged {
        epoch: usize,
        /// Metrics recorded before the divergence.
        metrics: Vec<MetricsRow>,
    },
}

/// How parameter gradients are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GradientEngine {
    /// Hand-unrolled reverse sweep through the jets, no tape allocation.
    #[default]
    Fused,
    /// Full scalar tape per epoch. Slow; serves as the reference.
    Tape,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
    pub seed: u64,
    pub bimt_enabled: bool,
    pub schedule: PhaseSchedule,
    pub reg: RegularizerConfig,
    pub prune_threshold: f64,
    /// 0 disables snapshots.
    pub snapshot_every: usize,
    pub metrics_every: usize,
    pub collocation: CollocationCounts,
    pub engine: GradientEngine,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::with_epochs(100_000)
    }
}

impl TrainConfig {
    pub fn with_epochs(epochs: usize) -> Self {
        Self {
            epochs,
            learning_rate: 0.002,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 0.0,
            seed: 0,
            bimt_enabled: true,
            schedule: PhaseSchedule::new(epochs),
            reg: RegularizerConfig::default(),
            prune_threshold: 1e-3,
            snapshot_every: 0,
            metrics_every: 100,
            collocation: CollocationCounts::default(),
            engine: GradientEngine::Fused,
        }
    }

    /// Same settings without the locality penalty or swaps.
    pub fn plain(mut self) -> Self {
        self.bimt_enabled = false;
        self
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::InvalidConfig(m));
        if self.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        if !(self.learning_rate > 0.0) {
            return bad(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            ));
        }
        if self.schedule.total_epochs != self.epochs {
            return bad(format!(
                "schedule spans {} epochs but training runs {}",
                self.schedule.total_epochs, self.epochs
            ));
        }
        if self.reg.swap_interval == 0 {
            return bad("swap_interval must be at least 1".into());
        }
        if self.metrics_every == 0 {
            return bad("metrics_every must be at least 1".into());
        }
        if !(self.prune_threshold > 0.0) {
            return bad("prune_threshold must be positive".into());
        }
        let s = &self.schedule;
        if [s.lambda_phase1, s.lambda_phase2, s.lambda_phase3]
            .iter()
            .any(|l| !(*l >= 0.0))
        {
            return bad("λ values must be non-negative".into());
        }
        Ok(())
    }

    fn lambda_at(&self, epoch: usize) -> (f64, bool) {
        if self.bimt_enabled {
            self.schedule.lambda_at(epoch)
        } else {
            (0.0, false)
        }
    }
}

/// Decoupled-weight-decay Adam over one flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

impl AdamW {
    pub fn new(n: usize, config: &TrainConfig) -> Self {
        Self {
            beta1: config.beta1,
            beta2: config.beta2,
            epsilon: config.epsilon,
            weight_decay: config.weight_decay,
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn moments(&self) -> (&[f64], &[f64]) {
        (&self.m, &self.v)
    }

    /// One update. Masked entries, and their moments, are left untouched.
    pub fn step(&mut self, params: &mut [f64], mask: &[bool], grads: &[f64], lr: f64) {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step as i32);
        let c2 = 1.0 - self.beta2.powi(self.step as i32);
        for i in 0..params.len() {
            if !mask[i] {
                continue;
            }
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] *= 1.0 - lr * self.weight_decay;
            params[i] -= lr * m_hat / (v_hat.sqrt() + self.epsilon);
        }
    }

    /// Moves moment state along with swapped parameters.
    pub fn permute(&mut self, pairs: &[(usize, usize)]) {
        for &(a, b) in pairs {
            self.m.swap(a, b);
            self.v.swap(a, b);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub pde: f64,
    pub bc: f64,
    pub reg: f64,
}

/// Composite PINN loss on `tape` for summed `instances`, whose parameter
/// scalars come from [`GeometricNetwork::record_params`]. Returns the loss
/// scalar and its three terms as plain values.
pub fn pinn_loss<'t>(
    tape: &'t Tape,
    instances: &[GeometricNetwork],
    params: &[Vec<Scalar<'t>>],
    spec: &ProblemSpec,
    colloc: &CollocationSet,
) -> (Scalar<'t>, LossBreakdown) {
    let eval = |t: f64| {
        instances
            .iter()
            .zip(params)
            .map(|(net, p)| net.forward_jet(tape, p, t))
            .reduce(|a, b| a + b)
            .expect("at least one instance")
    };
    let squares: Vec<Scalar<'t>> = colloc
        .interior
        .iter()
        .map(|&t| spec.residual(&eval(t), t).square())
        .collect();
    let pde = tape.sum(&squares).scale(1.0 / colloc.interior.len() as f64);
    let mut bc_terms = Vec::with_capacity(colloc.boundary.len());
    for (which, points) in colloc.boundary.iter().enumerate() {
        let squares: Vec<Scalar<'t>> = points
            .iter()
            .map(|&t| spec.boundary_residual(eval(t).u, which).square())
            .collect();
        bc_terms.push(tape.sum(&squares).scale(1.0 / points.len() as f64));
    }
    let bc = tape.sum(&bc_terms);
    let total = pde + bc;
    (
        total,
        LossBreakdown {
            total: total.value(),
            pde: pde.value(),
            bc: bc.value(),
            reg: 0.0,
        },
    )
}

/// Loss and per-instance gradients through the tape, penalty included.
pub fn tape_loss_and_gradient(
    instances: &[GeometricNetwork],
    costs: &[LocalityCost],
    spec: &ProblemSpec,
    colloc: &CollocationSet,
    lambda: f64,
    bias_on: bool,
) -> (LossBreakdown, Vec<Vec<f64>>) {
    let tape = Tape::new();
    let params: Vec<Vec<Scalar<'_>>> = instances.iter().map(|n| n.record_params(&tape)).collect();
    let (fit, mut breakdown) = pinn_loss(&tape, instances, &params, spec, colloc);
    let total = if lambda > 0.0 {
        let pens: Vec<Scalar<'_>> = instances
            .iter()
            .zip(costs)
            .zip(&params)
            .map(|((net, cost), p)| cost.record(&tape, net, p, lambda, bias_on))
            .collect();
        let reg = tape.sum(&pens);
        breakdown.reg = reg.value();
        fit + reg
    } else {
        fit
    };
    breakdown.total = total.value();
    let g = tape.backward(total);
    let grads = instances
        .iter()
        .zip(&params)
        .map(|(net, p)| {
            p.iter()
                .zip(net.mask())
                .map(|(s, &m)| if m { g.wrt(*s) } else { 0.0 })
                .collect()
        })
        .collect();
    (breakdown, grads)
}

/// Loss and per-instance gradients through the fused jet pass. Produces the
/// same numbers as [`tape_loss_and_gradient`] up to rounding.
pub fn fused_loss_and_gradient(
    instances: &[GeometricNetwork],
    costs: &[LocalityCost],
    spec: &ProblemSpec,
    colloc: &CollocationSet,
    lambda: f64,
    bias_on: bool,
) -> (LossBreakdown, Vec<Vec<f64>>) {
    let mut workspaces: Vec<JetWorkspace> = instances.iter().map(JetWorkspace::new).collect();
    let mut grads: Vec<Vec<f64>> = instances
        .iter()
        .map(|n| vec![0.0; n.param_count()])
        .collect();
    let breakdown = fused_into(
        instances,
        costs,
        spec,
        colloc,
        lambda,
        bias_on,
        &mut workspaces,
        &mut grads,
    );
    (breakdown, grads)
}

#[allow(clippy::too_many_arguments)]
fn fused_into(
    instances: &[GeometricNetwork],
    costs: &[LocalityCost],
    spec: &ProblemSpec,
    colloc: &CollocationSet,
    lambda: f64,
    bias_on: bool,
    workspaces: &mut [JetWorkspace],
    grads: &mut [Vec<f64>],
) -> LossBreakdown {
    for g in grads.iter_mut() {
        g.fill(0.0);
    }
    let forward = |t: f64, workspaces: &mut [JetWorkspace]| {
        let mut jet = [0.0; 3];
        for (ws, net) in workspaces.iter_mut().zip(instances) {
            let j = ws.forward(net, t);
            for k in 0..3 {
                jet[k] += j[k];
            }
        }
        jet
    };
    let n = colloc.interior.len() as f64;
    let mut pde = 0.0;
    for &t in &colloc.interior {
        let jet = forward(t, workspaces);
        let (r, dr) = spec.residual_f64(jet, t);
        pde += r * r;
        let s = 2.0 * r / n;
        let adj = [s * dr[0], s * dr[1], s * dr[2]];
        for ((ws, net), g) in workspaces.iter_mut().zip(instances).zip(grads.iter_mut()) {
            ws.backward(net, adj, g);
        }
    }
    pde /= n;
    let mut bc = 0.0;
    for (which, points) in colloc.boundary.iter().enumerate() {
        let nb = points.len() as f64;
        let mut term = 0.0;
        for &t in points {
            let jet = forward(t, workspaces);
            let r = spec.boundary_residual_f64(jet[0], which);
            term += r * r;
            let adj = [2.0 * r / nb, 0.0, 0.0];
            for ((ws, net), g) in workspaces.iter_mut().zip(instances).zip(grads.iter_mut()) {
                ws.backward(net, adj, g);
            }
        }
        bc += term / nb;
    }
    let mut reg = 0.0;
    for ((net, cost), g) in instances.iter().zip(costs).zip(grads.iter_mut()) {
        for (gi, &m) in g.iter_mut().zip(net.mask()) {
            if !m {
                *gi = 0.0;
            }
        }
        if lambda > 0.0 {
            reg += cost.breakdown(net, lambda, bias_on).total();
            cost.add_subgradient(net, lambda, bias_on, g);
        }
    }
    LossBreakdown {
        total: pde + bc + reg,
        pde,
        bc,
        reg,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub epoch: usize,
    pub total_loss: f64,
    pub pde_loss: f64,
    pub bc_loss: f64,
    pub reg_loss: f64,
    pub test_mse: f64,
    pub test_euclidean: f64,
    /// Active hidden units if the network were pruned now.
    pub active_units: usize,
    /// Weights that would survive pruning now.
    pub nonzero_weights: usize,
    /// Swaps committed since the previous row.
    pub swaps_made: usize,
}

pub const METRICS_HEADER: &str =
    "epoch,total_loss,pde_loss,bc_loss,reg_loss,test_mse,test_euclidean,active_units,nonzero_weights,swaps_made";

impl MetricsRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.epoch,
            self.total_loss,
            self.pde_loss,
            self.bc_loss,
            self.reg_loss,
            self.test_mse,
            self.test_euclidean,
            self.active_units,
            self.nonzero_weights,
            self.swaps_made
        )
    }
}

pub fn metrics_csv(rows: &[MetricsRow]) -> String {
    let mut out = String::with_capacity(64 * (rows.len() + 1));
    out.push_str(METRICS_HEADER);
    out.push('\n');
    for row in rows {
        out.push_str(&row.csv_line());
        out.push('\n');
    }
    out
}

/// Snapshots of every instance at one epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotSet {
    pub epoch: usize,
    pub instances: Vec<NetworkSnapshot>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalReport {
    pub epochs: usize,
    pub error: ErrorReport,
    /// Post-prune statistics, one per instance.
    pub prune: Vec<PruneStats>,
    pub active_hidden_units: usize,
    pub nonzero_weights: usize,
    pub total_weights: usize,
}

impl FinalReport {
    pub fn nonzero_weight_fraction(&self) -> f64 {
        self.nonzero_weights as f64 / self.total_weights.max(1) as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub metrics: Vec<MetricsRow>,
    pub snapshots: Vec<SnapshotSet>,
    pub final_report: FinalReport,
    /// Pruned networks after the last epoch.
    pub instances: Vec<GeometricNetwork>,
    pub collocation: CollocationSet,
}

/// Sum of instance outputs at `t`.
pub fn composite_value(instances: &[GeometricNetwork], t: f64) -> f64 {
    instances.iter().map(|n| n.forward_value(t)).sum()
}

pub fn evaluate(
    instances: &[GeometricNetwork],
    spec: &ProblemSpec,
    colloc: &CollocationSet,
) -> ErrorReport {
    test_error(spec, colloc, |t| composite_value(instances, t))
}

/// Collocation points for `seed`. Initialization uses a separate stream of
/// the same seed, so runs that share a seed share their points.
pub fn collocation_for(
    spec: &ProblemSpec,
    config: &TrainConfig,
) -> Result<CollocationSet, TrainError> {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    Ok(CollocationSet::sample_with(
        spec,
        config.collocation,
        &mut rng,
    )?)
}

/// Xavier-initialized network for `config.seed`.
pub fn init_network(arch: Architecture, seed: u64) -> GeometricNetwork {
    GeometricNetwork::init_xavier(arch, seed)
}

pub fn train(
    arch: Architecture,
    spec: &ProblemSpec,
    config: &TrainConfig,
) -> Result<RunRecord, TrainError> {
    let net = init_network(arch, config.seed);
    train_instances(vec![net], spec, config)
}

/// Incremental trainer; [`train_instances`] drives it to completion.
pub struct Trainer {
    spec: ProblemSpec,
    config: TrainConfig,
    colloc: CollocationSet,
    instances: Vec<GeometricNetwork>,
    optimizers: Vec<AdamW>,
    costs: Vec<LocalityCost>,
    workspaces: Vec<JetWorkspace>,
    grads: Vec<Vec<f64>>,
    epoch: usize,
    swaps_since_row: usize,
    metrics: Vec<MetricsRow>,
    snapshots: Vec<SnapshotSet>,
}

impl Trainer {
    pub fn new(
        instances: Vec<GeometricNetwork>,
        spec: &ProblemSpec,
        config: &TrainConfig,
    ) -> Result<Self, TrainError> {
        config.validate()?;
        if instances.is_empty() {
            return Err(TrainError::InvalidConfig("no networks to train".into()));
        }
        let colloc = collocation_for(spec, config)?;
        Ok(Self {
            spec: spec.clone(),
            config: config.clone(),
            colloc,
            optimizers: instances
                .iter()
                .map(|n| AdamW::new(n.param_count(), config))
                .collect(),
            costs: instances.iter().map(LocalityCost::new).collect(),
            workspaces: instances.iter().map(JetWorkspace::new).collect(),
            grads: instances
                .iter()
                .map(|n| vec![0.0; n.param_count()])
                .collect(),
            instances,
            epoch: 0,
            swaps_since_row: 0,
            metrics: Vec::new(),
            snapshots: Vec::new(),
        })
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn is_done(&self) -> bool {
        self.epoch >= self.config.epochs
    }

    pub fn instances(&self) -> &[GeometricNetwork] {
        &self.instances
    }

    pub fn collocation(&self) -> &CollocationSet {
        &self.colloc
    }

    pub fn metrics(&self) -> &[MetricsRow] {
        &self.metrics
    }

    pub fn spec(&self) -> &ProblemSpec {
        &self.spec
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    fn loss_and_gradient(&mut self, lambda: f64, bias_on: bool) -> LossBreakdown {
        match self.config.engine {
            GradientEngine::Fused => fused_into(
                &self.instances,
                &self.costs,
                &self.spec,
                &self.colloc,
                lambda,
                bias_on,
                &mut self.workspaces,
                &mut self.grads,
            ),
            GradientEngine::Tape => {
                let (b, g) = tape_loss_and_gradient(
                    &self.instances,
                    &self.costs,
                    &self.spec,
                    &self.colloc,
                    lambda,
                    bias_on,
                );
                self.grads = g;
                b
            }
        }
    }

    fn record_row(&mut self, loss: LossBreakdown) {
        let error = evaluate(&self.instances, &self.spec, &self.colloc);
        let (mut active, mut nonzero) = (0, 0);
        for net in &self.instances {
            let (_, stats) = net.pruned(self.config.prune_threshold);
            active += stats.active_hidden_units();
            nonzero += stats.nonzero_weights;
        }
        self.metrics.push(MetricsRow {
            epoch: self.epoch,
            total_loss: loss.total,
            pde_loss: loss.pde,
            bc_loss: loss.bc,
            reg_loss: loss.reg,
            test_mse: error.mse,
            test_euclidean: error.euclidean,
            active_units: active,
            nonzero_weights: nonzero,
            swaps_made: self.swaps_since_row,
        });
        self.swaps_since_row = 0;
    }

    fn snapshot(&mut self, epoch: usize) {
        self.snapshots.push(SnapshotSet {
            epoch,
            instances: self
                .instances
                .iter()
                .map(|n| n.to_snapshot(epoch))
                .collect(),
        });
    }

    /// Runs one epoch. Returns the loss evaluated before the update.
    pub fn step(&mut self) -> Result<LossBreakdown, TrainError> {
        let epoch = self.epoch;
        let (lambda, bias_on) = self.config.lambda_at(epoch);
        let loss = self.loss_and_gradient(lambda, bias_on);
        if !loss.total.is_finite() || self.grads.iter().flatten().any(|g| !g.is_finite()) {
            return Err(TrainError::Diverged {
                epoch,
                metrics: self.metrics.clone(),
            });
        }
        let last = epoch + 1 == self.config.epochs;
        if epoch.is_multiple_of(self.config.metrics_every) || last {
            self.record_row(loss);
        }
        if self.config.snapshot_every > 0 && epoch.is_multiple_of(self.config.snapshot_every) {
            self.snapshot(epoch);
        }
        let lr = self.config.learning_rate;
        for ((net, opt), g) in self
            .instances
            .iter_mut()
            .zip(&mut self.optimizers)
            .zip(&self.grads)
        {
            let (params, mask) = net.params_and_mask_mut();
            opt.step(params, mask, g, lr);
        }
        if self.config.bimt_enabled && (epoch + 1).is_multiple_of(self.config.reg.swap_interval) {
            for (net, opt) in self.instances.iter_mut().zip(&mut self.optimizers) {
                self.swaps_since_row += try_swaps(net, lambda, |pairs| opt.permute(pairs));
            }
        }
        self.epoch += 1;
        Ok(loss)
    }

    /// Prunes, scores and hands back the record.
    pub fn finish(mut self) -> RunRecord {
        let prune: Vec<PruneStats> = self
            .instances
            .iter_mut()
            .map(|n| n.prune(self.config.prune_threshold))
            .collect();
        if self.config.snapshot_every > 0 {
            self.snapshot(self.epoch);
        }
        let error = evaluate(&self.instances, &self.spec, &self.colloc);
        let final_report = FinalReport {
            epochs: self.epoch,
            error,
            active_hidden_units: prune.iter().map(|p| p.active_hidden_units()).sum(),
            nonzero_weights: prune.iter().map(|p| p.nonzero_weights).sum(),
            total_weights: prune.iter().map(|p| p.total_weights).sum(),
            prune,
        };
        RunRecord {
            metrics: self.metrics,
            snapshots: self.snapshots,
            final_report,
            instances: self.instances,
            collocation: self.colloc,
        }
    }
}

/// Trains summed `instances` (one network for a plain PINN).
pub fn train_instances(
    instances: Vec<GeometricNetwork>,
    spec: &ProblemSpec,
    config: &TrainConfig,
) -> Result<RunRecord, TrainError> {
    let mut trainer = Trainer::new(instances, spec, config)?;
    while !trainer.is_done() {
        trainer.step()?;
    }
    Ok(trainer.finish())
}
