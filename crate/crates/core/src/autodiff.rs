//! Scalar reverse-mode tape and second-order forward jets.
//!
//! Every differentiable quantity of the training loss is a [`Scalar`]
//! recorded on a [`Tape`]. Input derivatives (d/dt, d²/dt²) are carried
//! forward as [`Jet`]s whose three components are themselves tape scalars,
//! so a single reverse sweep yields parameter gradients of a loss that
//! contains second derivatives of the network output.

use std::cell::RefCell;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AutodiffError {
    #[error("division by zero (numerator {numerator})")]
    DivisionByZero { numerator: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UnaryOp {
    Neg,
    Sin,
    Cos,
    Exp,
    Square,
    Sigmoid,
    /// Subgradient `sign(x)` with `sign(0) = 0`.
    Abs,
    /// Multiplication by a constant.
    Scale(f64),
    /// Addition of a constant.
    Shift(f64),
}

const NO_PARENT: u32 = u32::MAX;

#[derive(Debug, Clone, Copy)]
struct Node {
    parents: [u32; 2],
    partials: [f64; 2],
}

/// Append-only record of a computation. Node order is topological by
/// construction, so reverse order is a valid backward schedule.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

impl fmt::Debug for Tape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tape").field("len", &self.len()).finish()
    }
}

#[derive(Clone, Copy)]
pub struct Scalar<'t> {
    tape: &'t Tape,
    id: u32,
    value: f64,
}

impl fmt::Debug for Scalar<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Scalar(#{} = {})", self.id, self.value)
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(n: usize) -> Self {
        Self {
            nodes: RefCell::new(Vec::with_capacity(n)),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: f64, parents: [u32; 2], partials: [f64; 2]) -> Scalar<'_> {
        let mut nodes = self.nodes.borrow_mut();
        let id = u32::try_from(nodes.len()).expect("tape exceeds u32::MAX nodes");
        nodes.push(Node { parents, partials });
        Scalar {
            tape: self,
            id,
            value,
        }
    }

    /// Records a leaf whose adjoint is reported by [`Tape::backward`].
    pub fn variable(&self, value: f64) -> Scalar<'_> {
        self.push(value, [NO_PARENT; 2], [0.0; 2])
    }

    /// A leaf that is not meant to be differentiated. Structurally identical
    /// to a variable; its adjoint is simply never read.
    pub fn constant(&self, value: f64) -> Scalar<'_> {
        self.variable(value)
    }

    pub fn binary<'t>(
        &'t self,
        op: BinaryOp,
        a: Scalar<'t>,
        b: Scalar<'t>,
    ) -> Result<Scalar<'t>, AutodiffError> {
        assert!(
            std::ptr::eq(a.tape, self) && std::ptr::eq(b.tape, self),
            "operands recorded on a different tape"
        );
        let (x, y) = (a.value, b.value);
        let (value, da, db) = match op {
            BinaryOp::Add => (x + y, 1.0, 1.0),
            BinaryOp::Sub => (x - y, 1.0, -1.0),
            BinaryOp::Mul => (x * y, y, x),
            BinaryOp::Div => {
                if y == 0.0 {
                    return Err(AutodiffError::DivisionByZero { numerator: x });
                }
                (x / y, 1.0 / y, -x / (y * y))
            }
        };
        Ok(self.push(value, [a.id, b.id], [da, db]))
    }

    pub fn unary<'t>(&'t self, op: UnaryOp, x: Scalar<'t>) -> Scalar<'t> {
        assert!(
            std::ptr::eq(x.tape, self),
            "operand recorded on a different tape"
        );
        let v = x.value;
        let (value, d) = match op {
            UnaryOp::Neg => (-v, -1.0),
            UnaryOp::Sin => (v.sin(), v.cos()),
            UnaryOp::Cos => (v.cos(), -v.sin()),
            UnaryOp::Exp => {
                let e = v.exp();
                (e, e)
            }
            UnaryOp::Square => (v * v, 2.0 * v),
            UnaryOp::Sigmoid => {
                let s = sigmoid(v);
                (s, s * (1.0 - s))
            }
            UnaryOp::Abs => (v.abs(), sign(v)),
            UnaryOp::Scale(k) => (k * v, k),
            UnaryOp::Shift(k) => (v + k, 1.0),
        };
        self.push(value, [x.id, NO_PARENT], [d, 0.0])
    }

    /// Reverse sweep from `root`. The tape is left untouched, so the sweep
    /// can be repeated for other roots.
    pub fn backward(&self, root: Scalar<'_>) -> Gradients {
        assert!(
            std::ptr::eq(root.tape, self),
            "root recorded on a different tape"
        );
        let nodes = self.nodes.borrow();
        let mut adjoints = vec![0.0; nodes.len()];
        adjoints[root.id as usize] = 1.0;
        for i in (0..=root.id as usize).rev() {
            let a = adjoints[i];
            if a == 0.0 {
                continue;
            }
            let node = nodes[i];
            for k in 0..2 {
                let p = node.parents[k];
                if p != NO_PARENT {
                    adjoints[p as usize] += a * node.partials[k];
                }
            }
        }
        Gradients { adjoints }
    }

    /// Sum of scalars in slice order (left fold).
    pub fn sum<'t>(&'t self, terms: &[Scalar<'t>]) -> Scalar<'t> {
        let mut iter = terms.iter().copied();
        match iter.next() {
            None => self.constant(0.0),
            Some(first) => iter.fold(first, |acc, x| acc + x),
        }
    }
}

/// Adjoints of every node with respect to one backward root.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    adjoints: Vec<f64>,
}

impl Gradients {
    pub fn wrt(&self, x: Scalar<'_>) -> f64 {
        self.adjoints[x.id as usize]
    }

    pub fn by_id(&self, id: u32) -> f64 {
        self.adjoints[id as usize]
    }
}

impl<'t> Scalar<'t> {
    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn id(&self) -> u32 {
        self.id
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn sin(self) -> Self {
        self.tape.unary(UnaryOp::Sin, self)
    }

    pub fn cos(self) -> Self {
        self.tape.unary(UnaryOp::Cos, self)
    }

    pub fn exp(self) -> Self {
        self.tape.unary(UnaryOp::Exp, self)
    }

    pub fn square(self) -> Self {
        self.tape.unary(UnaryOp::Square, self)
    }

    pub fn sigmoid(self) -> Self {
        self.tape.unary(UnaryOp::Sigmoid, self)
    }

    pub fn abs(self) -> Self {
        self.tape.unary(UnaryOp::Abs, self)
    }

    pub fn scale(self, k: f64) -> Self {
        self.tape.unary(UnaryOp::Scale(k), self)
    }

    pub fn shift(self, k: f64) -> Self {
        self.tape.unary(UnaryOp::Shift(k), self)
    }

    pub fn checked_div(self, rhs: Self) -> Result<Self, AutodiffError> {
        self.tape.binary(BinaryOp::Div, self, rhs)
    }
}

macro_rules! scalar_binop {
    ($trait:ident, $method:ident, $op:expr) => {
        impl<'t> $trait for Scalar<'t> {
            type Output = Scalar<'t>;
            fn $method(self, rhs: Self) -> Self::Output {
                self.tape
                    .binary($op, self, rhs)
                    .expect("only division can fail")
            }
        }
    };
}

scalar_binop!(Add, add, BinaryOp::Add);
scalar_binop!(Sub, sub, BinaryOp::Sub);
scalar_binop!(Mul, mul, BinaryOp::Mul);

impl<'t> Neg for Scalar<'t> {
    type Output = Scalar<'t>;
    fn neg(self) -> Self::Output {
        self.tape.unary(UnaryOp::Neg, self)
    }
}

impl<'t> Mul<f64> for Scalar<'t> {
    type Output = Scalar<'t>;
    fn mul(self, k: f64) -> Self::Output {
        self.scale(k)
    }
}

impl<'t> Add<f64> for Scalar<'t> {
    type Output = Scalar<'t>;
    fn add(self, k: f64) -> Self::Output {
        self.shift(k)
    }
}

impl<'t> Sub<f64> for Scalar<'t> {
    type Output = Scalar<'t>;
    fn sub(self, k: f64) -> Self::Output {
        self.shift(-k)
    }
}

/// Value and first two derivatives with respect to the collocation
/// coordinate `t`.
#[derive(Debug, Clone, Copy)]
pub struct Jet<'t> {
    pub u: Scalar<'t>,
    pub du: Scalar<'t>,
    pub ddu: Scalar<'t>,
}

/// The identity map at `t`: `(t, 1, 0)`.
pub fn jet_seed(tape: &Tape, t: f64) -> Jet<'_> {
    Jet {
        u: tape.constant(t),
        du: tape.constant(1.0),
        ddu: tape.constant(0.0),
    }
}

/// Pushes `z` through a scalar function given its value and first two
/// derivatives evaluated at `z.u`:
/// `(a, a'·z', a''·z'² + a'·z'')`.
pub fn jet_chain<'t>(a: (Scalar<'t>, Scalar<'t>, Scalar<'t>), z: &Jet<'t>) -> Jet<'t> {
    let (a0, a1, a2) = a;
    Jet {
        u: a0,
        du: a1 * z.du,
        ddu: a2 * z.du.square() + a1 * z.ddu,
    }
}

impl<'t> Jet<'t> {
    pub fn square(&self) -> Jet<'t> {
        let tape = self.u.tape;
        let two_u = self.u.scale(2.0);
        jet_chain((self.u.square(), two_u, tape.constant(2.0)), self)
    }
}

impl<'t> Add for Jet<'t> {
    type Output = Jet<'t>;
    fn add(self, rhs: Self) -> Self::Output {
        Jet {
            u: self.u + rhs.u,
            du: self.du + rhs.du,
            ddu: self.ddu + rhs.ddu,
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}
