//! Differential equations, collocation sampling and analytic oracles.

use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{Jet, Scalar};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProblemError {
    #[error("invalid domain [{0}, {1}]")]
    InvalidDomain(f64, f64),
    #[error("collocation counts must be positive (interior {interior}, boundary {boundary}, test {test})")]
    EmptyCollocation {
        interior: usize,
        boundary: usize,
        test: usize,
    },
    #[error("{boundary} boundary points cannot be split evenly across {conditions} conditions")]
    UnevenBoundary { boundary: usize, conditions: usize },
    #[error("poisson problem needs at least one source coefficient")]
    NoCoefficients,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProblemKind {
    /// `x'' = Σ_k c_k sin(k t)`, with `coefficients[k-1] = c_k`.
    PoissonHarmonic { coefficients: Vec<f64> },
    /// `x' = r·x·(1 − x)`, `x(t_lo) = x0`.
    Logistic { rate: f64, x0: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub kind: ProblemKind,
    pub domain: (f64, f64),
    /// `(t, x(t))` pairs imposed as soft constraints.
    pub boundary_conditions: Vec<(f64, f64)>,
}

/// `sin(k·t)` with exact zeros at integer multiples of π, so boundary values
/// at `0` and `2π` vanish identically.
fn sin_multiple(k: f64, t: f64) -> f64 {
    let half_turns = (k * t / PI) % 2.0;
    if half_turns == 0.0 || half_turns.abs() == 1.0 {
        0.0
    } else {
        (half_turns * PI).sin()
    }
}

impl ProblemSpec {
    /// Poisson problem on `[0, 2π]` with `x(0) = x(2π) = 0`.
    pub fn poisson_harmonic(coefficients: Vec<f64>) -> Result<Self, ProblemError> {
        if coefficients.is_empty() {
            return Err(ProblemError::NoCoefficients);
        }
        Ok(Self {
            kind: ProblemKind::PoissonHarmonic { coefficients },
            domain: (0.0, TAU),
            boundary_conditions: vec![(0.0, 0.0), (TAU, 0.0)],
        })
    }

    /// The four-harmonic source `sin t + 4 sin 2t + 9 sin 3t + 16 sin 4t`.
    pub fn four_harmonics() -> Self {
        Self::poisson_harmonic(vec![1.0, 4.0, 9.0, 16.0]).expect("non-empty")
    }

    /// Single harmonic `k² sin(k t)`, whose solution is `−sin(k t)`.
    pub fn single_harmonic(k: usize) -> Self {
        let mut c = vec![0.0; k];
        c[k - 1] = (k * k) as f64;
        Self::poisson_harmonic(c).expect("non-empty")
    }

    /// Logistic growth on `[0, 5]` from `x(0) = x0`.
    pub fn logistic(rate: f64, x0: f64) -> Self {
        Self {
            kind: ProblemKind::Logistic { rate, x0 },
            domain: (0.0, 5.0),
            boundary_conditions: vec![(0.0, x0)],
        }
    }

    /// Replaces the domain. Boundary conditions move to the new endpoints;
    /// Poisson conditions take the analytic solution's values there and the
    /// logistic initial value is kept.
    pub fn with_domain(mut self, lo: f64, hi: f64) -> Result<Self, ProblemError> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(ProblemError::InvalidDomain(lo, hi));
        }
        self.domain = (lo, hi);
        self.boundary_conditions = match &self.kind {
            ProblemKind::PoissonHarmonic { .. } => vec![
                (lo, self.analytic_solution(lo)),
                (hi, self.analytic_solution(hi)),
            ],
            ProblemKind::Logistic { x0, .. } => vec![(lo, *x0)],
        };
        Ok(self)
    }

    /// Forcing term of the Poisson equation at `t` (zero for logistic).
    pub fn source(&self, t: f64) -> f64 {
        match &self.kind {
            ProblemKind::PoissonHarmonic { coefficients } => coefficients
                .iter()
                .enumerate()
                .map(|(i, c)| c * sin_multiple((i + 1) as f64, t))
                .sum(),
            ProblemKind::Logistic { .. } => 0.0,
        }
    }

    pub fn residual<'t>(&self, jet: &Jet<'t>, t: f64) -> Scalar<'t> {
        match &self.kind {
            ProblemKind::PoissonHarmonic { .. } => jet.ddu - self.source(t),
            ProblemKind::Logistic { rate, .. } => {
                let growth = (jet.u * jet.u.scale(-1.0).shift(1.0)).scale(*rate);
                jet.du - growth
            }
        }
    }

    /// Residual at `t` from a plain jet, with its partials with respect to
    /// `(u, du, ddu)`.
    #[inline]
    pub fn residual_f64(&self, jet: [f64; 3], t: f64) -> (f64, [f64; 3]) {
        let [u, du, ddu] = jet;
        match &self.kind {
            ProblemKind::PoissonHarmonic { .. } => (ddu - self.source(t), [0.0, 0.0, 1.0]),
            ProblemKind::Logistic { rate, .. } => (
                du - rate * u * (1.0 - u),
                [-rate * (1.0 - 2.0 * u), 1.0, 0.0],
            ),
        }
    }

    pub fn boundary_residual<'t>(&self, value: Scalar<'t>, which: usize) -> Scalar<'t> {
        value - self.boundary_conditions[which].1
    }

    pub fn boundary_residual_f64(&self, value: f64, which: usize) -> f64 {
        value - self.boundary_conditions[which].1
    }

    pub fn analytic_solution(&self, t: f64) -> f64 {
        match &self.kind {
            ProblemKind::PoissonHarmonic { coefficients } => -coefficients
                .iter()
                .enumerate()
                .map(|(i, c)| {
                    let k = (i + 1) as f64;
                    c / (k * k) * sin_multiple(k, t)
                })
                .sum::<f64>(),
            ProblemKind::Logistic { rate, x0 } => {
                let t0 = self.boundary_conditions.first().map_or(0.0, |bc| bc.0);
                let e = (rate * (t - t0)).exp();
                x0 * e / (1.0 - x0 + x0 * e)
            }
        }
    }

    pub fn name(&self) -> String {
        match &self.kind {
            ProblemKind::PoissonHarmonic { coefficients } => {
                let c: Vec<String> = coefficients.iter().map(|c| format!("{c}")).collect();
                format!("poisson[{}]", c.join(","))
            }
            ProblemKind::Logistic { rate, x0 } => format!("logistic[r={rate},x0={x0}]"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CollocationCounts {
    pub interior: usize,
    pub boundary: usize,
    pub test: usize,
}

impl Default for CollocationCounts {
    fn default() -> Self {
        Self {
            interior: 1000,
            boundary: 50,
            test: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollocationSet {
    pub interior: Vec<f64>,
    /// Sample locations for each boundary condition, in condition order.
    pub boundary: Vec<Vec<f64>>,
    pub test: Vec<f64>,
}

impl CollocationSet {
    pub fn sample(
        spec: &ProblemSpec,
        counts: CollocationCounts,
        seed: u64,
    ) -> Result<Self, ProblemError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::sample_with(spec, counts, &mut rng)
    }

    pub fn sample_with<R: Rng>(
        spec: &ProblemSpec,
        counts: CollocationCounts,
        rng: &mut R,
    ) -> Result<Self, ProblemError> {
        let CollocationCounts {
            interior,
            boundary,
            test,
        } = counts;
        if interior == 0 || boundary == 0 || test < 2 {
            return Err(ProblemError::EmptyCollocation {
                interior,
                boundary,
                test,
            });
        }
        let conditions = spec.boundary_conditions.len();
        if boundary % conditions != 0 {
            return Err(ProblemError::UnevenBoundary {
                boundary,
                conditions,
            });
        }
        let (lo, hi) = spec.domain;
        let interior = (0..interior)
            .map(|_| loop {
                let t = rng.gen_range(lo..hi);
                if t > lo {
                    break t;
                }
            })
            .collect();
        let per = boundary / conditions;
        let boundary = spec
            .boundary_conditions
            .iter()
            .map(|&(t, _)| vec![t; per])
            .collect();
        Ok(Self {
            interior,
            boundary,
            test: uniform_grid(lo, hi, test),
        })
    }
}

/// `n` evenly spaced points including both endpoints.
pub fn uniform_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let step = (hi - lo) / (n - 1) as f64;
    (0..n)
        .map(|i| if i + 1 == n { hi } else { lo + step * i as f64 })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub mse: f64,
    /// ℓ2 norm of the pointwise error over the test grid.
    pub euclidean: f64,
}

impl ErrorReport {
    pub fn from_errors(errors: impl IntoIterator<Item = f64>) -> Self {
        let mut n = 0usize;
        let mut sq = 0.0;
        for e in errors {
            n += 1;
            sq += e * e;
        }
        Self {
            mse: sq / n.max(1) as f64,
            euclidean: sq.sqrt(),
        }
    }
}

/// Error of `model` against the analytic solution on the test grid.
pub fn test_error(
    spec: &ProblemSpec,
    colloc: &CollocationSet,
    model: impl Fn(f64) -> f64,
) -> ErrorReport {
    ErrorReport::from_errors(
        colloc
            .test
            .iter()
            .map(|&t| model(t) - spec.analytic_solution(t)),
    )
}
