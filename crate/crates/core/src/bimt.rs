//! Brain-inspired modular training: a distance-weighted L1 penalty whose
//! strength follows a three-phase schedule, and periodic unit swaps that
//! shorten heavy connections.

use serde::{Deserialize, Serialize};

use crate::autodiff::{sign, Scalar, Tape};
use crate::network::GeometricNetwork;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseSchedule {
    pub total_epochs: usize,
    pub lambda_phase1: f64,
    pub lambda_phase2: f64,
    pub lambda_phase3: f64,
    pub bias_penalty_in_phase3: bool,
}

impl PhaseSchedule {
    pub fn new(total_epochs: usize) -> Self {
        Self {
            total_epochs,
            lambda_phase1: 0.001,
            lambda_phase2: 0.01,
            lambda_phase3: 0.001,
            bias_penalty_in_phase3: true,
        }
    }

    /// First epoch of phase 2.
    pub fn boundary1(&self) -> usize {
        self.total_epochs / 4
    }

    /// First epoch of phase 3.
    pub fn boundary2(&self) -> usize {
        3 * self.total_epochs / 4
    }

    /// `(λ, bias penalty on)` for `epoch`.
    pub fn lambda_at(&self, epoch: usize) -> (f64, bool) {
        if epoch < self.boundary1() {
            (self.lambda_phase1, false)
        } else if epoch < self.boundary2() {
            (self.lambda_phase2, false)
        } else {
            (self.lambda_phase3, self.bias_penalty_in_phase3)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularizerConfig {
    /// Epochs between swap passes.
    pub swap_interval: usize,
}

impl Default for RegularizerConfig {
    fn default() -> Self {
        Self { swap_interval: 200 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltyBreakdown {
    /// `Σ d_ij |w_ij|` over trainable weights.
    pub weight_term: f64,
    /// `Σ |b_i|` over trainable biases (zero when the bias penalty is off).
    pub bias_term: f64,
    pub lambda: f64,
}

impl PenaltyBreakdown {
    pub fn total(&self) -> f64 {
        self.lambda * (self.weight_term + self.bias_term)
    }
}

/// Per-parameter penalty coefficients aligned with the flat parameter
/// vector: edge distance for weights, 1 for biases. Coordinates never move,
/// so this is computed once per network layout.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalityCost {
    coeff: Vec<f64>,
    is_bias: Vec<bool>,
}

impl LocalityCost {
    pub fn new(net: &GeometricNetwork) -> Self {
        let mut coeff = vec![0.0; net.param_count()];
        let mut is_bias = vec![false; net.param_count()];
        for (l, span) in net.spans().iter().enumerate() {
            for (i, d) in span.weights().zip(net.edge_distances(l)) {
                coeff[i] = d;
            }
            for i in span.biases() {
                coeff[i] = 1.0;
                is_bias[i] = true;
            }
        }
        Self { coeff, is_bias }
    }

    pub fn breakdown(
        &self,
        net: &GeometricNetwork,
        lambda: f64,
        bias_on: bool,
    ) -> PenaltyBreakdown {
        let mut weight_term = 0.0;
        let mut bias_term = 0.0;
        for (i, (&p, &m)) in net.params().iter().zip(net.mask()).enumerate() {
            if !m {
                continue;
            }
            if self.is_bias[i] {
                if bias_on {
                    bias_term += p.abs();
                }
            } else {
                weight_term += self.coeff[i] * p.abs();
            }
        }
        PenaltyBreakdown {
            weight_term,
            bias_term,
            lambda,
        }
    }

    /// Adds the penalty subgradient `λ·c_i·sign(p_i)` to `grad`.
    pub fn add_subgradient(
        &self,
        net: &GeometricNetwork,
        lambda: f64,
        bias_on: bool,
        grad: &mut [f64],
    ) {
        if lambda == 0.0 {
            return;
        }
        for (i, (&p, &m)) in net.params().iter().zip(net.mask()).enumerate() {
            if m && (bias_on || !self.is_bias[i]) {
                grad[i] += lambda * self.coeff[i] * sign(p);
            }
        }
    }

    /// The penalty recorded on `tape` against the parameter scalars of
    /// [`GeometricNetwork::record_params`].
    pub fn record<'t>(
        &self,
        tape: &'t Tape,
        net: &GeometricNetwork,
        params: &[Scalar<'t>],
        lambda: f64,
        bias_on: bool,
    ) -> Scalar<'t> {
        let terms: Vec<Scalar<'t>> = params
            .iter()
            .enumerate()
            .filter(|&(i, _)| net.mask()[i] && (bias_on || !self.is_bias[i]))
            .map(|(i, p)| p.abs().scale(self.coeff[i]))
            .collect();
        tape.sum(&terms).scale(lambda)
    }
}

/// `λ·(Σ d_ij|w_ij| + [bias_on]·Σ|b_i|)` as a tape scalar.
pub fn reg_penalty<'t>(
    tape: &'t Tape,
    net: &GeometricNetwork,
    params: &[Scalar<'t>],
    lambda: f64,
    bias_on: bool,
) -> Scalar<'t> {
    LocalityCost::new(net).record(tape, net, params, lambda, bias_on)
}

/// Distance-weighted weight term of every weight touching units of hidden
/// layer `layer`, if the unit currently in slot `unit` were moved to slot
/// `slot`.
fn placement_cost(net: &GeometricNetwork, layer: usize, unit: usize, slot: usize) -> f64 {
    let inc = net.spans()[layer - 1];
    let out = net.spans()[layer];
    let coords = net.coords();
    let [xs, ys] = coords[layer][slot];
    let dist = |p: [f64; 2]| ((p[0] - xs).powi(2) + (p[1] - ys).powi(2)).sqrt();
    let params = net.params();
    let mut cost = 0.0;
    for c in 0..inc.inputs {
        cost += params[inc.weight(unit, c)].abs() * dist(coords[layer - 1][c]);
    }
    for r in 0..out.outputs {
        cost += params[out.weight(r, unit)].abs() * dist(coords[layer + 1][r]);
    }
    cost
}

/// Change in the weight term if units in slots `i` and `j` of `layer` were
/// exchanged. Units of one layer are never connected to each other, so only
/// their own incident edges move.
pub fn swap_delta(net: &GeometricNetwork, layer: usize, i: usize, j: usize) -> f64 {
    placement_cost(net, layer, i, j) + placement_cost(net, layer, j, i)
        - placement_cost(net, layer, i, i)
        - placement_cost(net, layer, j, j)
}

/// Relative size below which a cost reduction is treated as rounding noise.
const SWAP_TOLERANCE: f64 = 1e-12;

/// Greedy locality pass over every hidden layer.
///
/// Units are visited in descending importance. Each one is exchanged with
/// whichever other unit of its layer lowers the weight term the most, if
/// any exchange lowers it at all. `on_swap` receives the flat-index pairs of
/// each committed swap so that state aligned with the parameters (optimizer
/// moments) can follow. Returns the number of committed swaps.
pub fn try_swaps(
    net: &mut GeometricNetwork,
    lambda: f64,
    mut on_swap: impl FnMut(&[(usize, usize)]),
) -> usize {
    if lambda <= 0.0 {
        return 0;
    }
    let mut swaps = 0;
    for layer in net.architecture().hidden_layers() {
        let width = net.layer_sizes()[layer];
        if width < 2 {
            continue;
        }
        let importance = net.importance(layer).expect("hidden layer");
        let mut order: Vec<usize> = (0..width).collect();
        // Stable sort keeps slot order among ties.
        order.sort_by(|&a, &b| importance[b].total_cmp(&importance[a]));
        // slot_of[u]: current slot of the unit that started in slot u.
        let mut slot_of: Vec<usize> = (0..width).collect();
        let mut unit_at: Vec<usize> = (0..width).collect();
        for &unit in &order {
            let from = slot_of[unit];
            let scale = placement_cost(net, layer, from, from).max(f64::MIN_POSITIVE);
            let mut best: Option<(usize, f64)> = None;
            for to in (0..width).filter(|&s| s != from) {
                let delta = swap_delta(net, layer, from, to);
                if delta < best.map_or(0.0, |b| b.1) {
                    best = Some((to, delta));
                }
            }
            if let Some((to, delta)) = best {
                if -delta > SWAP_TOLERANCE * scale.max(1.0) {
                    let pairs = net.swap_pairs(layer, from, to).expect("valid swap");
                    net.swap(layer, from, to).expect("valid swap");
                    on_swap(&pairs);
                    let other = unit_at[to];
                    unit_at.swap(from, to);
                    slot_of[unit] = to;
                    slot_of[other] = from;
                    swaps += 1;
                }
            }
        }
    }
    swaps
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activations::ActivationKind;
    use crate::network::Architecture;
    use proptest::prelude::*;

    fn net(sizes: &[usize], a: f64, seed: u64) -> GeometricNetwork {
        let arch = Architecture::new(sizes.to_vec(), ActivationKind::SinLU, false, a).unwrap();
        GeometricNetwork::init_xavier(arch, seed)
    }

    #[test]
    fn schedule_phases() {
        let s = PhaseSchedule::new(100_000);
        assert_eq!(s.lambda_at(0), (0.001, false));
        assert_eq!(s.lambda_at(24_999), (0.001, false));
        assert_eq!(s.lambda_at(25_000), (0.01, false));
        assert_eq!(s.lambda_at(50_000), (0.01, false));
        assert_eq!(s.lambda_at(74_999), (0.01, false));
        assert_eq!(s.lambda_at(75_000), (0.001, true));
        assert_eq!(s.lambda_at(90_000), (0.001, true));
        let tiny = PhaseSchedule::new(3);
        assert!(tiny.boundary1() <= tiny.boundary2() && tiny.boundary2() <= 3);
    }

    #[test]
    fn penalty_zero_lambda_and_plain_lasso() {
        let n = net(&[1, 5, 1], 0.0, 4);
        let cost = LocalityCost::new(&n);
        assert_eq!(cost.breakdown(&n, 0.0, true).total(), 0.0);
        let plain: f64 = n
            .spans()
            .iter()
            .flat_map(|s| s.weights())
            .map(|i| n.params()[i].abs())
            .sum();
        let b = cost.breakdown(&n, 0.01, false);
        assert_eq!(b.bias_term, 0.0);
        assert!((b.total() - 0.01 * plain).abs() < 1e-15);
    }

    #[test]
    fn two_edge_penalty() {
        // Edge lengths (1, 2) set by hand.
        let arch = Architecture::new(vec![1, 2, 1], ActivationKind::SinLU, false, 0.0).unwrap();
        let mut n = GeometricNetwork::zeros(arch);
        let inc = n.spans()[0];
        n.set_param(inc.weight(0, 0), 0.5);
        n.set_param(inc.weight(1, 0), -0.25);
        let mut cost = LocalityCost::new(&n);
        cost.coeff[inc.weight(0, 0)] = 1.0;
        cost.coeff[inc.weight(1, 0)] = 2.0;
        let b = cost.breakdown(&n, 0.01, false);
        assert!((b.total() - 0.01).abs() < 1e-15);
    }

    #[test]
    fn tape_penalty_gradient_is_scaled_sign() {
        let mut n = net(&[1, 4, 3, 1], 2.0, 21);
        let inc = n.spans()[0];
        n.mask_off(inc.weight(2, 0));
        n.set_param(inc.bias(1), 0.0);
        let cost = LocalityCost::new(&n);
        for bias_on in [false, true] {
            let tape = Tape::new();
            let p = n.record_params(&tape);
            let pen = cost.record(&tape, &n, &p, 0.01, bias_on);
            let b = cost.breakdown(&n, 0.01, bias_on);
            assert!((pen.value() - b.total()).abs() < 1e-15);
            let g = tape.backward(pen);
            let mut direct = vec![0.0; n.param_count()];
            cost.add_subgradient(&n, 0.01, bias_on, &mut direct);
            for (i, s) in p.iter().enumerate() {
                let taped = if n.mask()[i] { g.wrt(*s) } else { 0.0 };
                assert!((taped - direct[i]).abs() < 1e-16, "param {i}");
            }
            assert_eq!(direct[inc.weight(2, 0)], 0.0);
            assert_eq!(direct[inc.bias(1)], 0.0);
        }
        let tape = Tape::new();
        let reg = reg_penalty(&tape, &n, &n.record_params(&tape), 0.0, true);
        assert_eq!(reg.value(), 0.0);
    }

    #[test]
    fn no_swaps_without_locality() {
        let mut n = net(&[1, 21, 21, 1], 0.0, 8);
        assert_eq!(try_swaps(&mut n, 0.01, |_| {}), 0);
        let mut n = net(&[1, 21, 1], 2.0, 8);
        assert_eq!(try_swaps(&mut n, 0.0, |_| {}), 0);
    }

    #[test]
    fn heavy_unit_moves_next_to_output() {
        // Hidden slots at x = -1 and x = 1; the heavy unit sits in slot 0
        // but feeds the output unit at x = 1.
        let arch = Architecture::new(vec![1, 2, 2], ActivationKind::SinLU, false, 2.0).unwrap();
        let mut n = GeometricNetwork::zeros(arch);
        let inc = n.spans()[0];
        let out = n.spans()[1];
        n.set_param(inc.weight(0, 0), 1.0);
        n.set_param(out.weight(1, 0), 3.0);
        n.set_param(inc.weight(1, 0), 0.1);
        n.set_param(out.weight(1, 1), 0.1);
        let brute =
            |n: &GeometricNetwork| LocalityCost::new(n).breakdown(n, 1.0, false).weight_term;
        let before = brute(&n);
        let mut alt = n.clone();
        alt.swap(1, 0, 1).unwrap();
        let after = brute(&alt);
        assert!(after < before);
        assert!((swap_delta(&n, 1, 0, 1) - (after - before)).abs() < 1e-12);
        let mut seen = Vec::new();
        let swaps = try_swaps(&mut n, 0.01, |p| seen.push(p.to_vec()));
        assert_eq!(swaps, 1);
        assert_eq!(n, alt);
        assert_eq!(seen.len(), 1);
        assert_eq!(try_swaps(&mut n, 0.01, |_| {}), 0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn swaps_lower_cost_and_keep_function(seed in 0u64..10_000, w1 in 2usize..9, w2 in 2usize..9) {
            let mut n = net(&[1, w1, w2, 1], 2.0, seed);
            let reference = n.clone();
            let cost = LocalityCost::new(&n);
            let before = cost.breakdown(&n, 1.0, false).weight_term;
            try_swaps(&mut n, 0.01, |_| {});
            let after = cost.breakdown(&n, 1.0, false).weight_term;
            prop_assert!(after <= before);
            for i in 0..100 {
                let t = 0.0628 * i as f64;
                prop_assert!((n.forward_value(t) - reference.forward_value(t)).abs() < 1e-12);
            }
            // Iterate to a local optimum, then one more pass is a no-op.
            let mut guard = 0;
            while try_swaps(&mut n, 0.01, |_| {}) > 0 {
                guard += 1;
                prop_assert!(guard < 1000);
            }
            prop_assert_eq!(try_swaps(&mut n, 0.01, |_| {}), 0);
        }

        #[test]
        fn swap_delta_matches_brute_force(seed in 0u64..10_000, i in 0usize..6, j in 0usize..6) {
            prop_assume!(i != j);
            let n = net(&[1, 6, 4, 1], 2.0, seed);
            let cost = LocalityCost::new(&n);
            for layer in 1..3 {
                let w = n.layer_sizes()[layer];
                if i >= w || j >= w { continue; }
                let mut s = n.clone();
                s.swap(layer, i, j).unwrap();
                let brute = cost.breakdown(&s, 1.0, false).weight_term
                    - cost.breakdown(&n, 1.0, false).weight_term;
                prop_assert!((swap_delta(&n, layer, i, j) - brute).abs() < 1e-12);
            }
        }

        #[test]
        fn penalty_is_non_negative(seed in 0u64..10_000, lambda in 0.0f64..1.0, bias_on: bool) {
            let n = net(&[1, 5, 3, 1], 2.0, seed);
            let b = LocalityCost::new(&n).breakdown(&n, lambda, bias_on);
            prop_assert!(b.weight_term >= 0.0 && b.bias_term >= 0.0);
            prop_assert!(b.total() >= 0.0);
        }
    }
}
