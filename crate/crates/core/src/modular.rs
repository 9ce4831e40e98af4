//! Extracting the bare-minimum circuit of a pruned network and composing
//! several fresh copies of it into one summed model.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::activations::ActivationKind;
use crate::autodiff::{Jet, Scalar, Tape};
use crate::network::{Architecture, GeometricNetwork, NetworkError, SnapshotMask};
use crate::problems::ProblemSpec;
use crate::trainer::{train_instances, RunRecord, TrainConfig, TrainError};

/// Geometry scale given to rebuilt modules. They are trained without the
/// locality penalty, so it only affects drawings.
pub const MODULE_GEOMETRY_SCALE: f64 = 2.0;

#[derive(Debug, Error)]
pub enum ModularError {
    #[error("no active path from input to output survives pruning")]
    NoActivePath,
    #[error("a modular network needs at least one module")]
    NoModules,
    #[error("template mask does not match its layer sizes")]
    MalformedTemplate,
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Train(#[from] TrainError),
}

/// Shape and connectivity of a module, without weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModuleTemplate {
    pub layer_sizes: Vec<usize>,
    pub activation: ActivationKind,
    #[serde(default)]
    pub final_activation: bool,
    pub mask: SnapshotMask,
}

impl ModuleTemplate {
    /// A template with every connection present.
    pub fn dense(
        layer_sizes: Vec<usize>,
        activation: ActivationKind,
        final_activation: bool,
    ) -> Result<Self, ModularError> {
        let arch = Architecture::new(layer_sizes, activation, final_activation, 0.0)?;
        let net = GeometricNetwork::zeros(arch);
        Ok(Self::from_network(&net))
    }

    fn from_network(net: &GeometricNetwork) -> Self {
        let snap = net.to_snapshot(0);
        Self {
            layer_sizes: snap.layer_sizes,
            activation: snap.activation,
            final_activation: snap.final_activation,
            mask: snap.mask,
        }
    }

    pub fn architecture(&self) -> Result<Architecture, ModularError> {
        Ok(Architecture::new(
            self.layer_sizes.clone(),
            self.activation,
            self.final_activation,
            MODULE_GEOMETRY_SCALE,
        )?)
    }

    fn flat_mask(&self) -> Result<Vec<bool>, ModularError> {
        let l = self.layer_sizes.len().saturating_sub(1);
        if self.mask.weights.len() != l || self.mask.biases.len() != l {
            return Err(ModularError::MalformedTemplate);
        }
        let mut mask = Vec::new();
        for k in 0..l {
            let (inputs, outputs) = (self.layer_sizes[k], self.layer_sizes[k + 1]);
            let w = &self.mask.weights[k];
            if w.len() != outputs
                || w.iter().any(|r| r.len() != inputs)
                || self.mask.biases[k].len() != outputs
            {
                return Err(ModularError::MalformedTemplate);
            }
            mask.extend(w.iter().flatten());
            mask.extend(&self.mask.biases[k]);
        }
        Ok(mask)
    }

    /// Parameters a single fresh module trains.
    pub fn trainable_count(&self) -> Result<usize, ModularError> {
        Ok(self.flat_mask()?.iter().filter(|&&m| m).count())
    }

    /// A freshly initialized module: Xavier draws from `rng`, with the
    /// template's missing connections masked off.
    pub fn instantiate<R: rand::Rng>(&self, rng: &mut R) -> Result<GeometricNetwork, ModularError> {
        let mask = self.flat_mask()?;
        let net = GeometricNetwork::init_xavier_with(self.architecture()?, rng);
        let params = net.params().to_vec();
        Ok(GeometricNetwork::from_parts(
            net.architecture().clone(),
            params,
            mask,
        )?)
    }
}

/// Keeps the listed units of every neuron layer and drops the rest.
fn compact(net: &GeometricNetwork, keep: &[Vec<usize>]) -> Result<GeometricNetwork, NetworkError> {
    let old = net.architecture();
    let sizes: Vec<usize> = keep.iter().map(Vec::len).collect();
    let arch = Architecture::new(
        sizes,
        old.activation,
        old.final_activation,
        old.geometry_scale,
    )?;
    let mut params = Vec::with_capacity(net.param_count());
    let mut mask = Vec::with_capacity(net.param_count());
    for (l, span) in net.spans().iter().enumerate() {
        for &r in &keep[l + 1] {
            for &c in &keep[l] {
                let i = span.weight(r, c);
                params.push(net.params()[i]);
                mask.push(net.mask()[i]);
            }
        }
        for &r in &keep[l + 1] {
            let i = span.bias(r);
            params.push(net.params()[i]);
            mask.push(net.mask()[i]);
        }
    }
    GeometricNetwork::from_parts(arch, params, mask)
}

fn live(net: &GeometricNetwork, i: usize) -> bool {
    net.mask()[i] && net.params()[i] != 0.0
}

/// Whether the input reaches the output through live weights.
fn has_input_path(net: &GeometricNetwork) -> bool {
    let mut reach = vec![true];
    for span in net.spans() {
        reach = (0..span.outputs)
            .map(|r| (0..span.inputs).any(|c| reach[c] && live(net, span.weight(r, c))))
            .collect();
    }
    reach[0]
}

/// Strips inactive units from a pruned network until every remaining
/// hidden unit is active. Returns the connectivity template and the compact
/// network, which computes the same function as `net`.
pub fn extract_template(
    net: &GeometricNetwork,
) -> Result<(ModuleTemplate, GeometricNetwork), ModularError> {
    let mut current = net.clone();
    loop {
        let sizes = current.layer_sizes().to_vec();
        let last = sizes.len() - 1;
        let keep: Vec<Vec<usize>> = sizes
            .iter()
            .enumerate()
            .map(|(l, &n)| {
                if l == 0 || l == last {
                    (0..n).collect()
                } else {
                    (0..n).filter(|&u| current.unit_is_active(l, u)).collect()
                }
            })
            .collect();
        if keep.iter().any(Vec::is_empty) {
            return Err(ModularError::NoActivePath);
        }
        if keep.iter().zip(&sizes).all(|(k, &n)| k.len() == n) {
            break;
        }
        current = compact(&current, &keep)?;
    }
    if !has_input_path(&current) {
        return Err(ModularError::NoActivePath);
    }
    Ok((ModuleTemplate::from_network(&current), current))
}

/// `k` copies of one template whose outputs are summed.
#[derive(Debug, Clone, PartialEq)]
pub struct ModularNetwork {
    pub template: ModuleTemplate,
    pub instances: Vec<GeometricNetwork>,
}

/// Fresh modules initialized one after another from a single seeded stream.
pub fn build_modular(
    template: &ModuleTemplate,
    k: usize,
    seed: u64,
) -> Result<ModularNetwork, ModularError> {
    if k == 0 {
        return Err(ModularError::NoModules);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let instances = (0..k)
        .map(|_| template.instantiate(&mut rng))
        .collect::<Result<_, _>>()?;
    Ok(ModularNetwork {
        template: template.clone(),
        instances,
    })
}

impl ModularNetwork {
    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn forward_value(&self, t: f64) -> f64 {
        self.instances.iter().map(|n| n.forward_value(t)).sum()
    }

    pub fn forward_jet_f64(&self, t: f64) -> [f64; 3] {
        let mut out = [0.0; 3];
        for net in &self.instances {
            let j = net.forward_jet_f64(t);
            for k in 0..3 {
                out[k] += j[k];
            }
        }
        out
    }

    /// Sum of instance jets on the tape; `params[i]` belongs to instance `i`.
    pub fn forward_jet<'t>(&self, tape: &'t Tape, params: &[Vec<Scalar<'t>>], t: f64) -> Jet<'t> {
        self.instances
            .iter()
            .zip(params)
            .map(|(net, p)| net.forward_jet(tape, p, t))
            .reduce(|a, b| a + b)
            .expect("modular network has instances")
    }

    /// Free parameters of the composite function. Output biases of all
    /// instances only ever appear as their sum, so together they count once.
    pub fn effective_parameter_count(&self) -> usize {
        let mut count = 0;
        let mut output_bias = false;
        for net in &self.instances {
            let out = *net.spans().last().expect("at least one layer");
            for i in 0..net.param_count() {
                if !net.mask()[i] {
                    continue;
                }
                if out.biases().contains(&i) {
                    output_bias = true;
                } else {
                    count += 1;
                }
            }
        }
        count + usize::from(output_bias)
    }
}

/// Trains the composite model without the locality penalty or swaps.
pub fn train_modular(
    model: ModularNetwork,
    spec: &ProblemSpec,
    config: &TrainConfig,
) -> Result<RunRecord, ModularError> {
    let config = config.clone().plain();
    Ok(train_instances(model.instances, spec, &config)?)
}
