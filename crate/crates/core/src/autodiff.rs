//! Tape-based reverse-mode automatic differentiation and a central
//! finite-difference oracle.
//!
//! A [`Tape`] is an append-only list of scalar operations. Each node stores
//! up to two parents, the local partial derivative with respect to each, the
//! forward value and (for operations with one constant operand) that constant,
//! so the tape can be replayed. [`Var`] is a cheap `Copy` handle into a tape;
//! a `Var` created with [`Var::constant`] carries no tape and is never
//! recorded.
//!
//! ```
//! use difftrace::autodiff::Tape;
//!
//! let tape = Tape::<f64>::new();
//! let x = tape.var(2.0);
//! let y = tape.var(3.0);
//! let f = x * y + x;
//! let adj = tape.backward(f);
//! assert_eq!(adj.wrt(x), 4.0);
//! assert_eq!(adj.wrt(y), 2.0);
//! ```

use std::cell::RefCell;
use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use crate::error::{Error, Result};
use crate::math::{Real, Scalar};

const NO_PARENT: u32 = u32::MAX;

/// Kind of primitive operation recorded on a tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Op {
    Input,
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    Sqrt,
    Abs,
    Max,
    Min,
    Pow,
    Tan,
}

impl fmt::Display for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// One recorded operation.
#[derive(Clone, Copy, Debug)]
pub struct Node<F> {
    pub op: Op,
    /// Parent node indices; `u32::MAX` marks a constant operand (or none).
    pub parents: [u32; 2],
    pub partials: [F; 2],
    pub value: F,
    /// The constant operand of a binary op whose other operand is a variable.
    pub aux: F,
}

impl<F> Node<F> {
    pub fn parent(&self, k: usize) -> Option<usize> {
        (self.parents[k] != NO_PARENT).then_some(self.parents[k] as usize)
    }
}

/// Append-only recording of scalar operations.
pub struct Tape<F> {
    nodes: RefCell<Vec<Node<F>>>,
}

impl<F: Real> Default for Tape<F> {
    fn default() -> Self {
        Self::new()
    }
}

impl<F: Real> Tape<F> {
    pub fn new() -> Self {
        Tape {
            nodes: RefCell::new(Vec::new()),
        }
    }

    pub fn with_capacity(n: usize) -> Self {
        Tape {
            nodes: RefCell::new(Vec::with_capacity(n)),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Snapshot of node `i`.
    pub fn node(&self, i: usize) -> Node<F> {
        self.nodes.borrow()[i]
    }

    /// Creates an independent input variable.
    pub fn var(&self, value: F) -> Var<'_, F> {
        let idx = self.push(Node {
            op: Op::Input,
            parents: [NO_PARENT; 2],
            partials: [F::of(0.0); 2],
            value,
            aux: F::of(0.0),
        });
        Var {
            tape: Some(self),
            idx,
            value,
        }
    }

    fn push(&self, node: Node<F>) -> u32 {
        let mut nodes = self.nodes.borrow_mut();
        let idx = u32::try_from(nodes.len()).expect("tape exceeds u32 nodes");
        assert!(idx != NO_PARENT, "tape exceeds u32 nodes");
        nodes.push(node);
        idx
    }

    /// Records an operation with explicit forward value and local partials.
    ///
    /// `inputs` holds one or two operands; `partials[k]` is the derivative of
    /// the result with respect to `inputs[k]`. Operands that carry no tape are
    /// constants: they are not linked, and for binary ops the first such
    /// constant is kept in `aux` for replay. If no operand lives on a tape the
    /// result is itself a constant.
    ///
    /// # Panics
    ///
    /// Panics when an operand belongs to a different tape.
    pub fn record<'t>(&'t self, op: Op, inputs: &[Var<'t, F>], value: F, partials: &[F]) -> Var<'t, F> {
        assert!(!inputs.is_empty() && inputs.len() <= 2, "1 or 2 operands");
        assert_eq!(inputs.len(), partials.len(), "one partial per operand");
        let mut node = Node {
            op,
            parents: [NO_PARENT; 2],
            partials: [F::of(0.0); 2],
            value,
            aux: F::of(0.0),
        };
        let mut linked = false;
        for (k, input) in inputs.iter().enumerate() {
            match input.tape {
                Some(t) => {
                    assert!(
                        std::ptr::eq(t, self),
                        "Var from a different tape combined with this tape"
                    );
                    node.parents[k] = input.idx;
                    node.partials[k] = partials[k];
                    linked = true;
                }
                None => node.aux = input.value,
            }
        }
        if !linked {
            return Var::constant(value);
        }
        Var {
            tape: Some(self),
            idx: self.push(node),
            value,
        }
    }

    /// Reverse sweep from `output`: one pass over the nodes in reverse order.
    pub fn backward(&self, output: Var<'_, F>) -> Adjoints<F> {
        let nodes = self.nodes.borrow();
        let mut adj = vec![F::of(0.0); nodes.len()];
        match output.tape {
            Some(t) => {
                assert!(std::ptr::eq(t, self), "output belongs to a different tape");
            }
            None => return Adjoints { adj },
        }
        let out = output.idx as usize;
        adj[out] = F::of(1.0);
        for i in (0..=out).rev() {
            let a = adj[i];
            if a == F::of(0.0) {
                continue;
            }
            let node = &nodes[i];
            for k in 0..2 {
                if let Some(p) = node.parent(k) {
                    adj[p] += a * node.partials[k];
                }
            }
        }
        Adjoints { adj }
    }

    /// Recomputes every node value from the inputs and the recorded ops.
    pub fn replay(&self) -> Vec<F> {
        let nodes = self.nodes.borrow();
        let mut vals: Vec<F> = Vec::with_capacity(nodes.len());
        for node in nodes.iter() {
            let operand = |k: usize| match node.parent(k) {
                Some(p) => vals[p],
                None => node.aux,
            };
            let v = match node.op {
                Op::Input => node.value,
                Op::Add => operand(0) + operand(1),
                Op::Sub => operand(0) - operand(1),
                Op::Mul => operand(0) * operand(1),
                Op::Div => operand(0) / operand(1),
                Op::Neg => -operand(0),
                Op::Sqrt => num_traits::Float::sqrt(operand(0)),
                Op::Abs => num_traits::Float::abs(operand(0)),
                Op::Max => Scalar::max(operand(0), operand(1)),
                Op::Min => Scalar::min(operand(0), operand(1)),
                Op::Pow => num_traits::Float::powf(operand(0), operand(1)),
                Op::Tan => num_traits::Float::tan(operand(0)),
            };
            vals.push(v);
        }
        vals
    }

    /// First node whose forward value is NaN.
    pub fn first_nan(&self) -> Option<(usize, Op)> {
        self.nodes
            .borrow()
            .iter()
            .enumerate()
            .find(|(_, n)| n.value.is_nan())
            .map(|(i, n)| (i, n.op))
    }
}

/// Adjoint of every tape node after a reverse sweep.
#[derive(Clone, Debug)]
pub struct Adjoints<F> {
    adj: Vec<F>,
}

impl<F: Real> Adjoints<F> {
    /// Derivative of the output with respect to `v` (zero for constants).
    pub fn wrt(&self, v: Var<'_, F>) -> F {
        match v.tape {
            Some(_) => self.adj.get(v.idx as usize).copied().unwrap_or(F::of(0.0)),
            None => F::of(0.0),
        }
    }

    pub fn as_slice(&self) -> &[F] {
        &self.adj
    }
}

/// Handle to a value on a [`Tape`], or a tape-free constant.
#[derive(Clone, Copy)]
pub struct Var<'t, F> {
    tape: Option<&'t Tape<F>>,
    idx: u32,
    value: F,
}

impl<F: fmt::Debug> fmt::Debug for Var<'_, F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.tape {
            Some(_) => write!(f, "Var(#{} = {:?})", self.idx, self.value),
            None => write!(f, "Const({:?})", self.value),
        }
    }
}

impl<'t, F: Real> Var<'t, F> {
    pub fn constant(value: F) -> Self {
        Var {
            tape: None,
            idx: NO_PARENT,
            value,
        }
    }

    pub fn is_constant(&self) -> bool {
        self.tape.is_none()
    }

    /// Node index on the owning tape, if any.
    pub fn index(&self) -> Option<usize> {
        self.tape.map(|_| self.idx as usize)
    }

    fn tape_of(a: Self, b: Self) -> Option<&'t Tape<F>> {
        match (a.tape, b.tape) {
            (Some(x), Some(y)) => {
                assert!(std::ptr::eq(x, y), "Vars from different tapes mixed");
                Some(x)
            }
            (Some(x), None) | (None, Some(x)) => Some(x),
            (None, None) => None,
        }
    }

    fn unary(self, op: Op, value: F, partial: F) -> Self {
        match self.tape {
            Some(t) => t.record(op, &[self], value, &[partial]),
            None => Var::constant(value),
        }
    }

    fn binary(self, other: Self, op: Op, value: F, pa: F, pb: F) -> Self {
        match Self::tape_of(self, other) {
            Some(t) => t.record(op, &[self, other], value, &[pa, pb]),
            None => Var::constant(value),
        }
    }
}

impl<F: Real> PartialEq for Var<'_, F> {
    fn eq(&self, other: &Self) -> bool {
        self.value == other.value
    }
}

impl<F: Real> PartialOrd for Var<'_, F> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        self.value.partial_cmp(&other.value)
    }
}

impl<F: Real> Add for Var<'_, F> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        let one = F::of(1.0);
        self.binary(o, Op::Add, self.value + o.value, one, one)
    }
}

impl<F: Real> Sub for Var<'_, F> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        self.binary(o, Op::Sub, self.value - o.value, F::of(1.0), F::of(-1.0))
    }
}

impl<F: Real> Mul for Var<'_, F> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        self.binary(o, Op::Mul, self.value * o.value, o.value, self.value)
    }
}

impl<F: Real> Div for Var<'_, F> {
    type Output = Self;
    fn div(self, o: Self) -> Self {
        let q = self.value / o.value;
        self.binary(o, Op::Div, q, F::of(1.0) / o.value, -q / o.value)
    }
}

impl<F: Real> Neg for Var<'_, F> {
    type Output = Self;
    fn neg(self) -> Self {
        self.unary(Op::Neg, -self.value, F::of(-1.0))
    }
}

impl<'t, F: Real> Scalar for Var<'t, F> {
    type Real = F;

    fn from_real(x: F) -> Self {
        Var::constant(x)
    }

    fn value(self) -> F {
        self.value
    }

    fn sqrt(self) -> Self {
        let r = num_traits::Float::sqrt(self.value);
        // Subgradient 0 at the origin keeps infinities off the tape.
        let d = if r > F::of(0.0) {
            F::of(0.5) / r
        } else {
            F::of(0.0)
        };
        self.unary(Op::Sqrt, r, d)
    }

    fn abs(self) -> Self {
        let d = if self.value >= F::of(0.0) {
            F::of(1.0)
        } else {
            F::of(-1.0)
        };
        self.unary(Op::Abs, num_traits::Float::abs(self.value), d)
    }

    fn max(self, o: Self) -> Self {
        let (v, pa, pb) = if self.value >= o.value {
            (self.value, F::of(1.0), F::of(0.0))
        } else {
            (o.value, F::of(0.0), F::of(1.0))
        };
        self.binary(o, Op::Max, v, pa, pb)
    }

    fn min(self, o: Self) -> Self {
        let (v, pa, pb) = if self.value <= o.value {
            (self.value, F::of(1.0), F::of(0.0))
        } else {
            (o.value, F::of(0.0), F::of(1.0))
        };
        self.binary(o, Op::Min, v, pa, pb)
    }

    fn powf(self, e: Self) -> Self {
        use num_traits::Float;
        let zero = F::of(0.0);
        let v = Float::powf(self.value, e.value);
        let pa = if self.value == zero {
            if e.value == F::of(1.0) {
                F::of(1.0)
            } else {
                zero
            }
        } else {
            e.value * Float::powf(self.value, e.value - F::of(1.0))
        };
        let pb = if self.value > zero { v * self.value.ln() } else { zero };
        self.binary(e, Op::Pow, v, pa, pb)
    }

    fn tan(self) -> Self {
        let t = num_traits::Float::tan(self.value);
        self.unary(Op::Tan, t, F::of(1.0) + t * t)
    }
}

/// Step configuration for [`finite_difference_gradient`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradConfig<F> {
    pub delta: F,
}

impl<F: Real> Default for GradConfig<F> {
    fn default() -> Self {
        GradConfig {
            delta: F::of(F::DEFAULT_FD_DELTA),
        }
    }
}

impl<F: Real> GradConfig<F> {
    pub fn new(delta: F) -> Result<Self> {
        if !(delta > F::of(0.0)) || !delta.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "finite-difference delta must be positive, got {delta}"
            )));
        }
        Ok(GradConfig { delta })
    }
}

/// Gradient of `f` at `params` by one forward recording and one reverse
/// sweep.
///
/// Returns an error naming the first NaN-valued node kind if the forward pass
/// produced NaN.
pub fn gradient<F, Func>(f: Func, params: &[F]) -> Result<(F, Vec<F>)>
where
    F: Real,
    Func: for<'t> Fn(&[Var<'t, F>]) -> Var<'t, F>,
{
    let tape = Tape::new();
    let vars: Vec<Var<'_, F>> = params.iter().map(|&p| tape.var(p)).collect();
    let out = f(&vars);
    if let Some((node, op)) = tape.first_nan() {
        return Err(Error::NanInForward { node, op });
    }
    if out.value.is_nan() {
        return Err(Error::NanInForward {
            node: out.idx as usize,
            op: Op::Input,
        });
    }
    let adj = tape.backward(out);
    Ok((out.value, vars.iter().map(|&v| adj.wrt(v)).collect()))
}

/// Per-parameter central differences `(f(x+δ) − f(x−δ)) / 2δ`; exactly
/// `2·params.len()` evaluations of `f`.
pub fn finite_difference_gradient<F, Func>(mut f: Func, params: &[F], cfg: GradConfig<F>) -> Vec<F>
where
    F: Real,
    Func: FnMut(&[F]) -> F,
{
    let mut x = params.to_vec();
    let two_delta = cfg.delta + cfg.delta;
    (0..params.len())
        .map(|i| {
            x[i] = params[i] + cfg.delta;
            let hi = f(&x);
            x[i] = params[i] - cfg.delta;
            let lo = f(&x);
            x[i] = params[i];
            (hi - lo) / two_delta
        })
        .collect()
}
