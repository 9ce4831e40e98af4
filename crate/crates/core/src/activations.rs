//! Activation functions with closed-form derivatives.
//!
//! Jets need `a`, `a'` and `a''`; reverse-mode through a jet additionally
//! needs `a'''`, which [`ActivationKind::derivatives`] supplies for the
//! fused training path.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::autodiff::{sigmoid, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActivationKind {
    /// `x · sin(x) · σ(x)`
    SinLU,
    Tanh,
    Identity,
}

impl ActivationKind {
    /// `(a(x), a'(x), a''(x))` recorded on the tape of `x`, so parameter
    /// gradients flow through all three.
    pub fn eval2<'t>(self, x: Scalar<'t>) -> (Scalar<'t>, Scalar<'t>, Scalar<'t>) {
        let tape = x.tape();
        match self {
            ActivationKind::SinLU => {
                let s = x.sin();
                let c = x.cos();
                let sg = x.sigmoid();
                let sg1 = sg - sg.square();
                let sg2 = sg1 * sg.scale(-2.0).shift(1.0);
                // f = x·σ and its derivatives; a = f·sin(x) by Leibniz.
                let f = x * sg;
                let f1 = sg + x * sg1;
                let f2 = sg1.scale(2.0) + x * sg2;
                let a = f * s;
                let a1 = f1 * s + f * c;
                let a2 = f2 * s + (f1 * c).scale(2.0) - f * s;
                (a, a1, a2)
            }
            ActivationKind::Tanh => {
                // tanh(x) = 2σ(2x) − 1
                let a = x.scale(2.0).sigmoid().scale(2.0).shift(-1.0);
                let a1 = a.square().scale(-1.0).shift(1.0);
                let a2 = (a * a1).scale(-2.0);
                (a, a1, a2)
            }
            ActivationKind::Identity => (x, tape.constant(1.0), tape.constant(0.0)),
        }
    }

    pub fn value(self, x: f64) -> f64 {
        match self {
            ActivationKind::SinLU => x * x.sin() * sigmoid(x),
            ActivationKind::Tanh => x.tanh(),
            ActivationKind::Identity => x,
        }
    }

    /// `[a, a', a'', a''']` at `x`.
    #[inline]
    pub fn derivatives(self, x: f64) -> [f64; 4] {
        match self {
            ActivationKind::SinLU => {
                let (s, c) = x.sin_cos();
                let sg = sigmoid(x);
                let sg1 = sg * (1.0 - sg);
                let sg2 = sg1 * (1.0 - 2.0 * sg);
                let sg3 = sg2 * (1.0 - 2.0 * sg) - 2.0 * sg1 * sg1;
                let f = x * sg;
                let f1 = sg + x * sg1;
                let f2 = 2.0 * sg1 + x * sg2;
                let f3 = 3.0 * sg2 + x * sg3;
                // g = sin: (s, c, -s, -c)
                [
                    f * s,
                    f1 * s + f * c,
                    f2 * s + 2.0 * f1 * c - f * s,
                    f3 * s + 3.0 * f2 * c - 3.0 * f1 * s - f * c,
                ]
            }
            ActivationKind::Tanh => {
                let a = x.tanh();
                let a1 = 1.0 - a * a;
                let a2 = -2.0 * a * a1;
                let a3 = -2.0 * (a1 * a1 + a * a2);
                [a, a1, a2, a3]
            }
            ActivationKind::Identity => [x, 1.0, 0.0, 0.0],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ActivationKind::SinLU => "sinlu",
            ActivationKind::Tanh => "tanh",
            ActivationKind::Identity => "identity",
        }
    }
}

impl fmt::Display for ActivationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ActivationKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "sinlu" => Ok(ActivationKind::SinLU),
            "tanh" => Ok(ActivationKind::Tanh),
            "identity" | "linear" => Ok(ActivationKind::Identity),
            other => Err(format!("unknown activation `{other}`")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tape;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    const KINDS: [ActivationKind; 3] = [
        ActivationKind::SinLU,
        ActivationKind::Tanh,
        ActivationKind::Identity,
    ];

    #[test]
    fn sinlu_reference_values() {
        let k = ActivationKind::SinLU;
        assert_eq!(k.value(0.0), 0.0);
        assert!(k.value(PI).abs() < 1e-15);
        // (π/2)·σ(π/2), evaluated at 30 digits.
        assert!((k.value(PI / 2.0) - 1.300_457_725_711_843_3).abs() < 1e-14);
        // Taylor x²/2 + x³/4 at the origin.
        let d = k.derivatives(0.0);
        assert_eq!(d[0], 0.0);
        assert_eq!(d[1], 0.0);
        assert!((d[2] - 1.0).abs() < 1e-15);
        assert!((d[3] - 1.5).abs() < 1e-15);
        // 30-digit derivatives at x = 1.3.
        let d = k.derivatives(1.3);
        let want = [
            0.984_357_049_387_189_9,
            1.241_285_493_164_961_9,
            -0.243_072_161_263_760_4,
            -3.287_743_712_107_175_4,
        ];
        for (got, want) in d.iter().zip(want) {
            assert!((got - want).abs() < 1e-13, "{got} vs {want}");
        }
    }

    #[test]
    fn identity_is_exact() {
        let tape = Tape::new();
        let x = tape.variable(-2.75);
        let (a, a1, a2) = ActivationKind::Identity.eval2(x);
        assert_eq!((a.value(), a1.value(), a2.value()), (-2.75, 1.0, 0.0));
        assert_eq!(
            ActivationKind::Identity.derivatives(-2.75),
            [-2.75, 1.0, 0.0, 0.0]
        );
    }

    #[test]
    fn tape_and_closed_form_agree() {
        for kind in KINDS {
            for i in 0..41 {
                let x = -10.0 + 0.5 * i as f64;
                let tape = Tape::new();
                let (a, a1, a2) = kind.eval2(tape.variable(x));
                let d = kind.derivatives(x);
                assert!((a.value() - d[0]).abs() < 1e-12);
                assert!((a1.value() - d[1]).abs() < 1e-12);
                assert!((a2.value() - d[2]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn tape_records_third_derivative() {
        // Differentiating the recorded a'' reproduces the closed-form a'''.
        for kind in KINDS {
            for x in [-3.1, -0.4, 0.0, 0.9, 4.2] {
                let tape = Tape::new();
                let xv = tape.variable(x);
                let (_, _, a2) = kind.eval2(xv);
                let g = tape.backward(a2);
                assert!((g.wrt(xv) - kind.derivatives(x)[3]).abs() < 1e-12);
            }
        }
    }

    fn close(got: f64, want: f64, rel: f64, abs: f64) -> bool {
        let err = (got - want).abs();
        err <= abs || err <= rel * want.abs()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn derivatives_match_finite_differences(x in -10.0f64..10.0) {
            let h = 1e-5;
            for kind in KINDS {
                let d = kind.derivatives(x);
                let dp = kind.derivatives(x + h);
                let dm = kind.derivatives(x - h);
                let fd1 = (kind.value(x + h) - kind.value(x - h)) / (2.0 * h);
                let fd2 = (dp[1] - dm[1]) / (2.0 * h);
                let fd3 = (dp[2] - dm[2]) / (2.0 * h);
                prop_assert!(close(d[1], fd1, 1e-5, 1e-7), "{kind} a' at {x}: {} vs {fd1}", d[1]);
                prop_assert!(close(d[2], fd2, 1e-5, 1e-7), "{kind} a'' at {x}: {} vs {fd2}", d[2]);
                prop_assert!(close(d[3], fd3, 1e-5, 1e-7), "{kind} a''' at {x}: {} vs {fd3}", d[3]);
            }
        }
    }
}
