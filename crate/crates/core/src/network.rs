//! Geometric multilayer perceptron.
//!
//! Parameters live in one flat vector, layer by layer, each layer storing
//! its weight matrix row-major (`out × in`) followed by its bias vector.
//! A parallel boolean mask marks which entries are still trainable; a
//! masked entry is exactly `0.0` forever.
//!
//! Neuron layer `ℓ` (0 = input) sits at `y = ℓ`. Unit `k` of an `n`-unit
//! layer sits at `x = A·(k − (n−1)/2)/max(n−1, 1)`, so each layer spans a
//! width of `A` centred on the axis.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::activations::ActivationKind;
use crate::autodiff::{jet_chain, jet_seed, Jet, Scalar, Tape};

pub const INITIAL_BIAS: f64 = 0.01;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetworkError {
    #[error("invalid architecture: {0}")]
    InvalidArchitecture(String),
    #[error("layer {layer} is not a hidden layer (network has {neuron_layers} neuron layers)")]
    NotHidden { layer: usize, neuron_layers: usize },
    #[error("unit {unit} out of range for layer {layer} of width {width}")]
    UnitOutOfRange {
        layer: usize,
        unit: usize,
        width: usize,
    },
    #[error("cannot swap unit {0} with itself")]
    SameUnit(usize),
    #[error("units must lie in adjacent layers (got {0} and {1})")]
    NotAdjacent(usize, usize),
    #[error("malformed snapshot: {0}")]
    MalformedSnapshot(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub layer_sizes: Vec<usize>,
    pub activation: ActivationKind,
    pub final_activation: bool,
    /// Width of every layer in the 2D embedding.
    pub geometry_scale: f64,
}

impl Architecture {
    pub fn new(
        layer_sizes: Vec<usize>,
        activation: ActivationKind,
        final_activation: bool,
        geometry_scale: f64,
    ) -> Result<Self, NetworkError> {
        if layer_sizes.len() < 3 {
            return Err(NetworkError::InvalidArchitecture(format!(
                "need input, output and at least one hidden layer, got {layer_sizes:?}"
            )));
        }
        if layer_sizes.contains(&0) {
            return Err(NetworkError::InvalidArchitecture(format!(
                "layer sizes must be positive, got {layer_sizes:?}"
            )));
        }
        if !(geometry_scale >= 0.0 && geometry_scale.is_finite()) {
            return Err(NetworkError::InvalidArchitecture(format!(
                "geometry scale must be finite and non-negative, got {geometry_scale}"
            )));
        }
        Ok(Self {
            layer_sizes,
            activation,
            final_activation,
            geometry_scale,
        })
    }

    /// Scalar-in, scalar-out MLP with `hidden_layers` layers of `width` units.
    pub fn mlp(
        hidden_layers: usize,
        width: usize,
        activation: ActivationKind,
        geometry_scale: f64,
    ) -> Result<Self, NetworkError> {
        let mut sizes = vec![1];
        sizes.extend(std::iter::repeat_n(width, hidden_layers));
        sizes.push(1);
        Self::new(sizes, activation, false, geometry_scale)
    }

    pub fn weight_layers(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    pub fn hidden_layers(&self) -> std::ops::Range<usize> {
        1..self.layer_sizes.len() - 1
    }

    pub fn hidden_units(&self) -> usize {
        self.layer_sizes[self.hidden_layers()].iter().sum()
    }
}

/// Where a weight layer's entries live in the flat parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSpan {
    pub inputs: usize,
    pub outputs: usize,
    pub offset: usize,
}

impl LayerSpan {
    #[inline]
    pub fn weight(&self, row: usize, col: usize) -> usize {
        self.offset + row * self.inputs + col
    }

    #[inline]
    pub fn bias(&self, row: usize) -> usize {
        self.offset + self.outputs * self.inputs + row
    }

    pub fn weights(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.outputs * self.inputs
    }

    pub fn biases(&self) -> std::ops::Range<usize> {
        let start = self.offset + self.outputs * self.inputs;
        start..start + self.outputs
    }

    pub fn len(&self) -> usize {
        self.outputs * (self.inputs + 1)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneStats {
    pub zeroed_weights: usize,
    pub zeroed_biases: usize,
    pub nonzero_weights: usize,
    pub total_weights: usize,
    /// Active units in each hidden layer, input side first.
    pub active_units_per_layer: Vec<usize>,
}

impl PruneStats {
    pub fn active_hidden_units(&self) -> usize {
        self.active_units_per_layer.iter().sum()
    }

    pub fn nonzero_weight_fraction(&self) -> f64 {
        self.nonzero_weights as f64 / self.total_weights.max(1) as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeometricNetwork {
    arch: Architecture,
    spans: Vec<LayerSpan>,
    params: Vec<f64>,
    mask: Vec<bool>,
    coords: Vec<Vec<[f64; 2]>>,
}

fn layout(sizes: &[usize]) -> (Vec<LayerSpan>, usize) {
    let mut offset = 0;
    let spans = sizes
        .windows(2)
        .map(|w| {
            let span = LayerSpan {
                inputs: w[0],
                outputs: w[1],
                offset,
            };
            offset += span.len();
            span
        })
        .collect();
    (spans, offset)
}

pub fn layer_coords(sizes: &[usize], scale: f64) -> Vec<Vec<[f64; 2]>> {
    sizes
        .iter()
        .enumerate()
        .map(|(layer, &n)| {
            let centre = (n as f64 - 1.0) / 2.0;
            let span = (n.max(2) - 1) as f64;
            (0..n)
                .map(|k| [scale * (k as f64 - centre) / span, layer as f64])
                .collect()
        })
        .collect()
}

impl GeometricNetwork {
    /// All parameters zero, mask all-true.
    pub fn zeros(arch: Architecture) -> Self {
        let (spans, n) = layout(&arch.layer_sizes);
        let coords = layer_coords(&arch.layer_sizes, arch.geometry_scale);
        Self {
            arch,
            spans,
            params: vec![0.0; n],
            mask: vec![true; n],
            coords,
        }
    }

    /// Glorot-uniform weights, constant biases of 0.01.
    pub fn init_xavier(arch: Architecture, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::init_xavier_with(arch, &mut rng)
    }

    pub fn init_xavier_with<R: Rng>(arch: Architecture, rng: &mut R) -> Self {
        let mut net = Self::zeros(arch);
        for span in net.spans.clone() {
            let bound = (6.0 / (span.inputs + span.outputs) as f64).sqrt();
            for i in span.weights() {
                net.params[i] = rng.gen_range(-bound..bound);
            }
            for i in span.biases() {
                net.params[i] = INITIAL_BIAS;
            }
        }
        net
    }

    /// Parameters taken from `params`; entries outside `mask` are forced to
    /// zero.
    pub fn from_parts(
        arch: Architecture,
        mut params: Vec<f64>,
        mask: Vec<bool>,
    ) -> Result<Self, NetworkError> {
        let (spans, n) = layout(&arch.layer_sizes);
        if params.len() != n || mask.len() != n {
            return Err(NetworkError::InvalidArchitecture(format!(
                "expected {n} parameters, got {} values and {} mask entries",
                params.len(),
                mask.len()
            )));
        }
        for (p, &m) in params.iter_mut().zip(&mask) {
            if !m {
                *p = 0.0;
            }
        }
        let coords = layer_coords(&arch.layer_sizes, arch.geometry_scale);
        Ok(Self {
            arch,
            spans,
            params,
            mask,
            coords,
        })
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.arch.layer_sizes
    }

    pub fn spans(&self) -> &[LayerSpan] {
        &self.spans
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn coords(&self) -> &[Vec<[f64; 2]>] {
        &self.coords
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn trainable_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// Mutable view of parameters and mask together. Callers must keep
    /// masked entries at zero.
    pub fn params_and_mask_mut(&mut self) -> (&mut [f64], &[bool]) {
        (&mut self.params, &self.mask)
    }

    /// Sets one parameter, respecting the mask. Returns `false` (and leaves
    /// the value at zero) if the entry is masked.
    pub fn set_param(&mut self, index: usize, value: f64) -> bool {
        if self.mask[index] {
            self.params[index] = value;
            true
        } else {
            false
        }
    }

    /// Masks an entry off and zeroes it.
    pub fn mask_off(&mut self, index: usize) {
        self.mask[index] = false;
        self.params[index] = 0.0;
    }

    pub fn weight(&self, layer: usize, row: usize, col: usize) -> f64 {
        self.params[self.spans[layer].weight(row, col)]
    }

    pub fn bias(&self, layer: usize, row: usize) -> f64 {
        self.params[self.spans[layer].bias(row)]
    }

    fn has_activation(&self, weight_layer: usize) -> bool {
        weight_layer + 1 < self.spans.len() || self.arch.final_activation
    }

    /// Output value only.
    pub fn forward_value(&self, t: f64) -> f64 {
        let act = self.arch.activation;
        let mut h = vec![t];
        for (l, span) in self.spans.iter().enumerate() {
            let w = &self.params[span.weights()];
            let b = &self.params[span.biases()];
            let activate = self.has_activation(l);
            h = (0..span.outputs)
                .map(|r| {
                    let row = &w[r * span.inputs..(r + 1) * span.inputs];
                    let z = row.iter().zip(&h).fold(b[r], |acc, (w, x)| acc + w * x);
                    if activate {
                        act.value(z)
                    } else {
                        z
                    }
                })
                .collect();
        }
        h[0]
    }

    /// Records every parameter on `tape`: trainable entries as variables,
    /// masked entries as constant zeros.
    pub fn record_params<'t>(&self, tape: &'t Tape) -> Vec<Scalar<'t>> {
        self.params
            .iter()
            .zip(&self.mask)
            .map(|(&p, &m)| {
                if m {
                    tape.variable(p)
                } else {
                    tape.constant(0.0)
                }
            })
            .collect()
    }

    /// Jet of the network output at `t`, recorded on `tape` against the
    /// parameter scalars from [`record_params`](Self::record_params).
    pub fn forward_jet<'t>(&self, tape: &'t Tape, params: &[Scalar<'t>], t: f64) -> Jet<'t> {
        assert_eq!(params.len(), self.params.len());
        let act = self.arch.activation;
        let mut h = vec![jet_seed(tape, t)];
        for (l, span) in self.spans.iter().enumerate() {
            let activate = self.has_activation(l);
            h = (0..span.outputs)
                .map(|r| {
                    let bias = params[span.bias(r)];
                    let mut u = bias;
                    let mut du: Option<Scalar<'t>> = None;
                    let mut ddu: Option<Scalar<'t>> = None;
                    for (c, x) in h.iter().enumerate() {
                        let i = span.weight(r, c);
                        if !self.mask[i] {
                            continue;
                        }
                        let w = params[i];
                        u = u + w * x.u;
                        du = Some(du.map_or(w * x.du, |acc| acc + w * x.du));
                        ddu = Some(ddu.map_or(w * x.ddu, |acc| acc + w * x.ddu));
                    }
                    let z = Jet {
                        u,
                        du: du.unwrap_or_else(|| tape.constant(0.0)),
                        ddu: ddu.unwrap_or_else(|| tape.constant(0.0)),
                    };
                    if activate {
                        jet_chain(act.eval2(z.u), &z)
                    } else {
                        z
                    }
                })
                .collect();
        }
        h[0]
    }

    /// `(x̃, dx̃/dt, d²x̃/dt²)` at `t` in plain floating point.
    pub fn forward_jet_f64(&self, t: f64) -> [f64; 3] {
        let mut ws = JetWorkspace::new(self);
        ws.forward(self, t)
    }

    /// Importance of each unit in hidden layer `layer`: the sum of absolute
    /// incoming and outgoing weights.
    pub fn importance(&self, layer: usize) -> Result<Vec<f64>, NetworkError> {
        self.check_hidden(layer)?;
        let inc = self.spans[layer - 1];
        let out = self.spans[layer];
        Ok((0..inc.outputs)
            .map(|i| {
                let a: f64 = (0..inc.inputs)
                    .map(|j| self.params[inc.weight(i, j)].abs())
                    .sum();
                let b: f64 = (0..out.outputs)
                    .map(|k| self.params[out.weight(k, i)].abs())
                    .sum();
                a + b
            })
            .collect())
    }

    fn check_hidden(&self, layer: usize) -> Result<(), NetworkError> {
        if self.arch.hidden_layers().contains(&layer) {
            Ok(())
        } else {
            Err(NetworkError::NotHidden {
                layer,
                neuron_layers: self.arch.layer_sizes.len(),
            })
        }
    }

    fn check_unit(&self, layer: usize, unit: usize) -> Result<(), NetworkError> {
        let width = self.arch.layer_sizes[layer];
        if unit < width {
            Ok(())
        } else {
            Err(NetworkError::UnitOutOfRange { layer, unit, width })
        }
    }

    /// Flat-index pairs exchanged by swapping units `i` and `j` of hidden
    /// layer `layer`: incoming rows, biases, outgoing columns.
    pub fn swap_pairs(
        &self,
        layer: usize,
        i: usize,
        j: usize,
    ) -> Result<Vec<(usize, usize)>, NetworkError> {
        self.check_hidden(layer)?;
        self.check_unit(layer, i)?;
        self.check_unit(layer, j)?;
        if i == j {
            return Err(NetworkError::SameUnit(i));
        }
        let inc = self.spans[layer - 1];
        let out = self.spans[layer];
        let mut pairs = Vec::with_capacity(inc.inputs + out.outputs + 1);
        pairs.extend((0..inc.inputs).map(|c| (inc.weight(i, c), inc.weight(j, c))));
        pairs.push((inc.bias(i), inc.bias(j)));
        pairs.extend((0..out.outputs).map(|r| (out.weight(r, i), out.weight(r, j))));
        Ok(pairs)
    }

    /// Exchanges two units of a hidden layer. Coordinates stay with the
    /// slots, so the network function is unchanged while its geometry is.
    pub fn swap(&mut self, layer: usize, i: usize, j: usize) -> Result<(), NetworkError> {
        for (a, b) in self.swap_pairs(layer, i, j)? {
            self.params.swap(a, b);
            self.mask.swap(a, b);
        }
        Ok(())
    }

    /// Zeroes and permanently masks every entry with `|v| < threshold`.
    pub fn prune(&mut self, threshold: f64) -> PruneStats {
        assert!(threshold > 0.0, "prune threshold must be positive");
        for (p, m) in self.params.iter_mut().zip(self.mask.iter_mut()) {
            if p.abs() < threshold {
                *p = 0.0;
                *m = false;
            }
        }
        self.stats()
    }

    pub fn pruned(&self, threshold: f64) -> (Self, PruneStats) {
        let mut net = self.clone();
        let stats = net.prune(threshold);
        (net, stats)
    }

    /// Counts of the current network without modifying it.
    pub fn stats(&self) -> PruneStats {
        let mut zeroed_weights = 0;
        let mut zeroed_biases = 0;
        let mut nonzero_weights = 0;
        let mut total_weights = 0;
        for span in &self.spans {
            for i in span.weights() {
                total_weights += 1;
                if self.live(i) {
                    nonzero_weights += 1;
                } else {
                    zeroed_weights += 1;
                }
            }
            zeroed_biases += span.biases().filter(|&i| !self.live(i)).count();
        }
        PruneStats {
            zeroed_weights,
            zeroed_biases,
            nonzero_weights,
            total_weights,
            active_units_per_layer: self.active_units(),
        }
    }

    #[inline]
    fn live(&self, index: usize) -> bool {
        self.mask[index] && self.params[index] != 0.0
    }

    /// A unit is active when it has a live outgoing weight and either a live
    /// incoming weight or a nonzero bias.
    pub fn unit_is_active(&self, layer: usize, unit: usize) -> bool {
        let inc = self.spans[layer - 1];
        let out = self.spans[layer];
        let outgoing = (0..out.outputs).any(|r| self.live(out.weight(r, unit)));
        let incoming =
            (0..inc.inputs).any(|c| self.live(inc.weight(unit, c))) || self.live(inc.bias(unit));
        outgoing && incoming
    }

    pub fn active_units(&self) -> Vec<usize> {
        self.arch
            .hidden_layers()
            .map(|l| {
                (0..self.arch.layer_sizes[l])
                    .filter(|&u| self.unit_is_active(l, u))
                    .count()
            })
            .collect()
    }

    /// Euclidean distance between `(layer, unit)` pairs in adjacent layers.
    pub fn distance(&self, a: (usize, usize), b: (usize, usize)) -> Result<f64, NetworkError> {
        if a.0.abs_diff(b.0) != 1 {
            return Err(NetworkError::NotAdjacent(a.0, b.0));
        }
        for &(layer, unit) in &[a, b] {
            if layer >= self.coords.len() {
                return Err(NetworkError::NotHidden {
                    layer,
                    neuron_layers: self.coords.len(),
                });
            }
            self.check_unit(layer, unit)?;
        }
        let [xa, ya] = self.coords[a.0][a.1];
        let [xb, yb] = self.coords[b.0][b.1];
        Ok(((xa - xb).powi(2) + (ya - yb).powi(2)).sqrt())
    }

    /// Distance for every weight entry of weight layer `layer`, row-major.
    pub fn edge_distances(&self, layer: usize) -> Vec<f64> {
        let span = self.spans[layer];
        let mut d = Vec::with_capacity(span.outputs * span.inputs);
        for r in 0..span.outputs {
            let [xo, yo] = self.coords[layer + 1][r];
            for c in 0..span.inputs {
                let [xi, yi] = self.coords[layer][c];
                d.push(((xo - xi).powi(2) + (yo - yi).powi(2)).sqrt());
            }
        }
        d
    }

    pub fn to_snapshot(&self, epoch: usize) -> NetworkSnapshot {
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        let mut mask_w = Vec::new();
        let mut mask_b = Vec::new();
        for span in &self.spans {
            let rows = |v: &[f64]| -> Vec<Vec<f64>> {
                v.chunks(span.inputs).map(|r| r.to_vec()).collect()
            };
            let mrows = |v: &[bool]| -> Vec<Vec<bool>> {
                v.chunks(span.inputs).map(|r| r.to_vec()).collect()
            };
            weights.push(rows(&self.params[span.weights()]));
            biases.push(self.params[span.biases()].to_vec());
            mask_w.push(mrows(&self.mask[span.weights()]));
            mask_b.push(self.mask[span.biases()].to_vec());
        }
        NetworkSnapshot {
            epoch,
            layer_sizes: self.arch.layer_sizes.clone(),
            activation: self.arch.activation,
            final_activation: self.arch.final_activation,
            a: self.arch.geometry_scale,
            coords: self.coords.clone(),
            weights,
            biases,
            mask: SnapshotMask {
                weights: mask_w,
                biases: mask_b,
            },
        }
    }

    pub fn from_snapshot(snap: &NetworkSnapshot) -> Result<Self, NetworkError> {
        let arch = Architecture::new(
            snap.layer_sizes.clone(),
            snap.activation,
            snap.final_activation,
            snap.a,
        )?;
        let (spans, n) = layout(&arch.layer_sizes);
        let bad = |what: &str| NetworkError::MalformedSnapshot(what.to_string());
        let l = spans.len();
        if snap.weights.len() != l
            || snap.biases.len() != l
            || snap.mask.weights.len() != l
            || snap.mask.biases.len() != l
        {
            return Err(bad("per-layer arrays do not match layer_sizes"));
        }
        let mut params: Vec<f64> = Vec::with_capacity(n);
        let mut mask = Vec::with_capacity(n);
        for (k, span) in spans.iter().enumerate() {
            let w = &snap.weights[k];
            let mw = &snap.mask.weights[k];
            if w.len() != span.outputs
                || mw.len() != span.outputs
                || w.iter().any(|r| r.len() != span.inputs)
                || mw.iter().any(|r| r.len() != span.inputs)
            {
                return Err(bad("weight matrix shape mismatch"));
            }
            if snap.biases[k].len() != span.outputs || snap.mask.biases[k].len() != span.outputs {
                return Err(bad("bias vector length mismatch"));
            }
            params.extend(w.iter().flatten());
            mask.extend(mw.iter().flatten());
            params.extend(&snap.biases[k]);
            mask.extend(&snap.mask.biases[k]);
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(bad("non-finite parameter"));
        }
        let mut net = Self::from_parts(arch, params, mask)?;
        if snap.coords.len() == net.coords.len()
            && snap
                .coords
                .iter()
                .zip(&net.coords)
                .all(|(a, b)| a.len() == b.len())
        {
            net.coords = snap.coords.clone();
        } else {
            return Err(bad("coords do not match layer_sizes"));
        }
        Ok(net)
    }
}

/// JSON form of a network at some epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSnapshot {
    pub epoch: usize,
    pub layer_sizes: Vec<usize>,
    pub activation: ActivationKind,
    #[serde(default)]
    pub final_activation: bool,
    #[serde(rename = "A")]
    pub a: f64,
    pub coords: Vec<Vec<[f64; 2]>>,
    /// Per weight layer, `out` rows of `in` entries.
    pub weights: Vec<Vec<Vec<f64>>>,
    pub biases: Vec<Vec<f64>>,
    pub mask: SnapshotMask,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SnapshotMask {
    pub weights: Vec<Vec<Vec<bool>>>,
    pub biases: Vec<Vec<bool>>,
}

/// Scratch buffers for the fused jet forward/reverse pass.
///
/// The fused pass computes exactly what the tape would for one collocation
/// point, with the reverse sweep through `jet_chain` written out by hand.
/// It needs `a'''` of the activation, which the tape gets for free by
/// differentiating the recorded `a''`.
#[derive(Debug, Clone)]
pub struct JetWorkspace {
    // Post-activation jets per neuron layer (layer 0 is the input).
    h: Vec<Vec<f64>>,
    dh: Vec<Vec<f64>>,
    ddh: Vec<Vec<f64>>,
    // Pre-activation jets and activation derivatives per weight layer.
    z: Vec<Vec<f64>>,
    dz: Vec<Vec<f64>>,
    ddz: Vec<Vec<f64>>,
    act: Vec<Vec<[f64; 4]>>,
    // Adjoint buffers, sized to the widest layer.
    bar_h: [Vec<f64>; 3],
    bar_in: [Vec<f64>; 3],
}

impl JetWorkspace {
    pub fn new(net: &GeometricNetwork) -> Self {
        let sizes = &net.arch.layer_sizes;
        let per_layer = |s: &[usize]| s.iter().map(|&n| vec![0.0; n]).collect::<Vec<_>>();
        let widest = *sizes.iter().max().unwrap_or(&1);
        Self {
            h: per_layer(sizes),
            dh: per_layer(sizes),
            ddh: per_layer(sizes),
            z: per_layer(&sizes[1..]),
            dz: per_layer(&sizes[1..]),
            ddz: per_layer(&sizes[1..]),
            act: sizes[1..].iter().map(|&n| vec![[0.0; 4]; n]).collect(),
            bar_h: std::array::from_fn(|_| vec![0.0; widest]),
            bar_in: std::array::from_fn(|_| vec![0.0; widest]),
        }
    }

    /// Forward pass at `t`; keeps every intermediate for [`backward`](Self::backward).
    pub fn forward(&mut self, net: &GeometricNetwork, t: f64) -> [f64; 3] {
        let act = net.arch.activation;
        self.h[0][0] = t;
        self.dh[0][0] = 1.0;
        self.ddh[0][0] = 0.0;
        for (l, span) in net.spans.iter().enumerate() {
            let w = &net.params[span.weights()];
            let b = &net.params[span.biases()];
            let activate = net.has_activation(l);
            let (lower, upper) = (l, l + 1);
            for r in 0..span.outputs {
                let row = &w[r * span.inputs..(r + 1) * span.inputs];
                let (mut z, mut dz, mut ddz) = (b[r], 0.0, 0.0);
                for c in 0..span.inputs {
                    let wv = row[c];
                    z += wv * self.h[lower][c];
                    dz += wv * self.dh[lower][c];
                    ddz += wv * self.ddh[lower][c];
                }
                self.z[l][r] = z;
                self.dz[l][r] = dz;
                self.ddz[l][r] = ddz;
                if activate {
                    let d = act.derivatives(z);
                    self.act[l][r] = d;
                    self.h[upper][r] = d[0];
                    self.dh[upper][r] = d[1] * dz;
                    self.ddh[upper][r] = d[2] * dz * dz + d[1] * ddz;
                } else {
                    self.h[upper][r] = z;
                    self.dh[upper][r] = dz;
                    self.ddh[upper][r] = ddz;
                }
            }
        }
        let last = self.h.len() - 1;
        [self.h[last][0], self.dh[last][0], self.ddh[last][0]]
    }

    /// Accumulates into `grad` the gradient of `adj · (u, du, ddu)` with
    /// respect to every parameter, for the point of the last
    /// [`forward`](Self::forward) call. Masked entries are not filtered
    /// here; callers zero them.
    pub fn backward(&mut self, net: &GeometricNetwork, adj: [f64; 3], grad: &mut [f64]) {
        let n_layers = net.spans.len();
        for k in 0..3 {
            self.bar_h[k][0] = adj[k];
        }
        for l in (0..n_layers).rev() {
            let span = net.spans[l];
            let activate = net.has_activation(l);
            // Adjoints of the pre-activation jet, stored in bar_h in place.
            if activate {
                for r in 0..span.outputs {
                    let [_, a1, a2, a3] = self.act[l][r];
                    let (dz, ddz) = (self.dz[l][r], self.ddz[l][r]);
                    let (bu, bdu, bddu) = (self.bar_h[0][r], self.bar_h[1][r], self.bar_h[2][r]);
                    self.bar_h[0][r] = bu * a1 + bdu * a2 * dz + bddu * (a3 * dz * dz + a2 * ddz);
                    self.bar_h[1][r] = bdu * a1 + bddu * 2.0 * a2 * dz;
                    self.bar_h[2][r] = bddu * a1;
                }
            }
            let lower = l;
            for r in 0..span.outputs {
                let (bz, bdz, bddz) = (self.bar_h[0][r], self.bar_h[1][r], self.bar_h[2][r]);
                let base = span.weight(r, 0);
                for c in 0..span.inputs {
                    grad[base + c] +=
                        bz * self.h[lower][c] + bdz * self.dh[lower][c] + bddz * self.ddh[lower][c];
                }
                grad[span.bias(r)] += bz;
            }
            if l > 0 {
                for k in 0..3 {
                    self.bar_in[k][..span.inputs].fill(0.0);
                }
                for r in 0..span.outputs {
                    let base = span.weight(r, 0);
                    let row = &net.params[base..base + span.inputs];
                    for (c, &w) in row.iter().enumerate() {
                        for k in 0..3 {
                            self.bar_in[k][c] += w * self.bar_h[k][r];
                        }
                    }
                }
                std::mem::swap(&mut self.bar_h, &mut self.bar_in);
            }
        }
    }
}
