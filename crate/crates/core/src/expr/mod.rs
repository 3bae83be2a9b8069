//! Symbolic scalar expressions over state and input variables.
//!
//! An [`Expr`] is an immutable, reference-counted DAG. The same expression
//! type carries the open-loop dynamics, the closed-loop vector field, a
//! compiled Lyapunov candidate and its Lie derivative, so the learner and the
//! falsifier always look at one function.
//!
//! Evaluation goes through a [`Tape`], a flattened instruction list with
//! shared subexpressions deduplicated. A tape can be evaluated over plain
//! `f64` ([`Tape::eval_point`]), over outward-rounded [`Interval`]s
//! ([`Tape::eval_interval`]), or over any other [`EvalDomain`], which is how
//! the reverse-mode training graph reuses the dynamics.

mod diff;
mod interval;
mod sexpr;
mod tape;

use std::collections::HashMap;
use std::fmt;
use std::ops;
use std::sync::Arc;

use thiserror::Error;

pub use interval::{Interval, StateBox};
pub use sexpr::{parse_sexps, ParseError, SExp};
pub use tape::{EvalDomain, IntervalDomain, PointDomain, Tape};

/// Failure while evaluating an expression.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("evaluation produced a non-finite value")]
    NonFiniteResult,
    /// Interval division by an interval containing zero.
    #[error("divisor interval {0} contains zero")]
    DomainError(Interval),
    #[error("state variable x{index} is not bound (dimension {dim})")]
    UnboundVariable { index: usize, dim: usize },
    #[error("input variable u{index} is not bound (dimension {dim})")]
    UnboundInput { index: usize, dim: usize },
}

/// Node of an expression DAG.
#[derive(Debug)]
pub enum Node {
    Const(f64),
    /// State variable `x_i`.
    Var(usize),
    /// Control input `u_j`; only present in open-loop dynamics.
    Input(usize),
    Neg(Expr),
    Add(Expr, Expr),
    Sub(Expr, Expr),
    Mul(Expr, Expr),
    Div(Expr, Expr),
    Pow(Expr, u32),
    Sin(Expr),
    Cos(Expr),
    Tanh(Expr),
}

/// Immutable symbolic expression. Cloning is cheap (reference count bump).
#[derive(Clone)]
pub struct Expr(Arc<Node>);

impl Expr {
    pub fn node(&self) -> &Node {
        &self.0
    }

    pub(crate) fn ptr(&self) -> *const Node {
        Arc::as_ptr(&self.0)
    }

    fn from_node(node: Node) -> Expr {
        Expr(Arc::new(node))
    }

    pub fn constant(c: f64) -> Expr {
        Expr::from_node(Node::Const(c))
    }

    pub fn zero() -> Expr {
        Expr::constant(0.0)
    }

    pub fn one() -> Expr {
        Expr::constant(1.0)
    }

    pub fn var(index: usize) -> Expr {
        Expr::from_node(Node::Var(index))
    }

    pub fn input(index: usize) -> Expr {
        Expr::from_node(Node::Input(index))
    }

    /// The constant value, if this node is a constant.
    pub fn as_const(&self) -> Option<f64> {
        match *self.0 {
            Node::Const(c) => Some(c),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.as_const() == Some(0.0)
    }

    pub fn is_one(&self) -> bool {
        self.as_const() == Some(1.0)
    }

    pub fn neg(&self) -> Expr {
        match self.node() {
            Node::Const(c) => Expr::constant(-c),
            Node::Neg(inner) => inner.clone(),
            _ => Expr::from_node(Node::Neg(self.clone())),
        }
    }

    pub fn add(&self, rhs: &Expr) -> Expr {
        match (self.as_const(), rhs.as_const()) {
            (Some(a), Some(b)) => Expr::constant(a + b),
            (Some(a), _) if a == 0.0 => rhs.clone(),
            (_, Some(b)) if b == 0.0 => self.clone(),
            _ => Expr::from_node(Node::Add(self.clone(), rhs.clone())),
        }
    }

    pub fn sub(&self, rhs: &Expr) -> Expr {
        match (self.as_const(), rhs.as_const()) {
            (Some(a), Some(b)) => Expr::constant(a - b),
            (Some(a), _) if a == 0.0 => rhs.neg(),
            (_, Some(b)) if b == 0.0 => self.clone(),
            _ => Expr::from_node(Node::Sub(self.clone(), rhs.clone())),
        }
    }

    pub fn mul(&self, rhs: &Expr) -> Expr {
        match (self.as_const(), rhs.as_const()) {
            (Some(a), Some(b)) => Expr::constant(a * b),
            (Some(a), _) if a == 0.0 => Expr::zero(),
            (_, Some(b)) if b == 0.0 => Expr::zero(),
            (Some(a), _) if a == 1.0 => rhs.clone(),
            (_, Some(b)) if b == 1.0 => self.clone(),
            (Some(a), _) if a == -1.0 => rhs.neg(),
            (_, Some(b)) if b == -1.0 => self.neg(),
            _ => Expr::from_node(Node::Mul(self.clone(), rhs.clone())),
        }
    }

    /// Quotient. A constant zero divisor is kept symbolic so that evaluation
    /// reports [`EvalError::DivisionByZero`] instead of folding to infinity.
    pub fn div(&self, rhs: &Expr) -> Expr {
        match (self.as_const(), rhs.as_const()) {
            (_, Some(b)) if b == 0.0 => Expr::from_node(Node::Div(self.clone(), rhs.clone())),
            (Some(a), Some(b)) => Expr::constant(a / b),
            (Some(a), _) if a == 0.0 => Expr::zero(),
            (_, Some(b)) if b == 1.0 => self.clone(),
            _ => Expr::from_node(Node::Div(self.clone(), rhs.clone())),
        }
    }

    pub fn powi(&self, exponent: u32) -> Expr {
        match (exponent, self.as_const()) {
            (0, _) => Expr::one(),
            (1, _) => self.clone(),
            (_, Some(c)) => Expr::constant(c.powi(exponent as i32)),
            _ => Expr::from_node(Node::Pow(self.clone(), exponent)),
        }
    }

    pub fn sin(&self) -> Expr {
        match self.as_const() {
            Some(c) => Expr::constant(c.sin()),
            None => Expr::from_node(Node::Sin(self.clone())),
        }
    }

    pub fn cos(&self) -> Expr {
        match self.as_const() {
            Some(c) => Expr::constant(c.cos()),
            None => Expr::from_node(Node::Cos(self.clone())),
        }
    }

    pub fn tanh(&self) -> Expr {
        match self.as_const() {
            Some(c) => Expr::constant(c.tanh()),
            None => Expr::from_node(Node::Tanh(self.clone())),
        }
    }

    /// Left-folded sum; the empty sum is `0`.
    pub fn sum<'a, I>(terms: I) -> Expr
    where
        I: IntoIterator<Item = &'a Expr>,
    {
        terms.into_iter().fold(Expr::zero(), |acc, t| acc.add(t))
    }

    /// Exact symbolic partial derivative with respect to `x_index`.
    ///
    /// Only constant folding and 0/1 identities are applied; shared
    /// subexpressions of `self` stay shared in the result.
    pub fn differentiate(&self, var_index: usize) -> Expr {
        diff::differentiate(self, var_index)
    }

    /// Replaces every `Input(j)` by `inputs[j]`.
    pub fn substitute_inputs(&self, inputs: &[Expr]) -> Result<Expr, EvalError> {
        let mut memo = HashMap::new();
        substitute(self, inputs, &mut memo)
    }

    /// One past the largest state-variable index, or 0 when there is none.
    pub fn var_bound(&self) -> usize {
        let mut bound = 0;
        self.visit(&mut |n| {
            if let Node::Var(i) = n {
                bound = bound.max(i + 1);
            }
        });
        bound
    }

    /// One past the largest input index, or 0 when there is none.
    pub fn input_bound(&self) -> usize {
        let mut bound = 0;
        self.visit(&mut |n| {
            if let Node::Input(j) = n {
                bound = bound.max(j + 1);
            }
        });
        bound
    }

    /// Number of distinct nodes in the DAG.
    pub fn node_count(&self) -> usize {
        let mut count = 0;
        self.visit(&mut |_| count += 1);
        count
    }

    /// Visits every distinct node once, children before parents.
    fn visit(&self, f: &mut impl FnMut(&Node)) {
        fn go(e: &Expr, seen: &mut std::collections::HashSet<*const Node>, f: &mut impl FnMut(&Node)) {
            if !seen.insert(e.ptr()) {
                return;
            }
            for child in e.children() {
                go(child, seen, f);
            }
            f(e.node());
        }
        let mut seen = std::collections::HashSet::new();
        go(self, &mut seen, f);
    }

    pub fn children(&self) -> Vec<&Expr> {
        match self.node() {
            Node::Const(_) | Node::Var(_) | Node::Input(_) => vec![],
            Node::Neg(a) | Node::Pow(a, _) | Node::Sin(a) | Node::Cos(a) | Node::Tanh(a) => vec![a],
            Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) | Node::Div(a, b) => vec![a, b],
        }
    }

    /// Point evaluation in IEEE double precision.
    pub fn eval_point(&self, x: &[f64]) -> Result<f64, EvalError> {
        Tape::compile(std::slice::from_ref(self)).eval_point(x).map(|v| v[0])
    }

    /// Outward-rounded interval enclosure of the range of `self` over `b`.
    pub fn eval_interval(&self, b: &StateBox) -> Result<Interval, EvalError> {
        Tape::compile(std::slice::from_ref(self)).eval_interval(b).map(|v| v[0])
    }

    /// Parses a single expression in s-expression syntax.
    pub fn parse(text: &str) -> Result<Expr, ParseError> {
        let forms = parse_sexps(text)?;
        match forms.as_slice() {
            [one] => Expr::from_sexp(one),
            _ => Err(ParseError::Syntax(format!("expected one expression, found {}", forms.len()))),
        }
    }

    pub fn from_sexp(s: &SExp) -> Result<Expr, ParseError> {
        sexpr::expr_from_sexp(s)
    }
}

fn substitute(
    e: &Expr,
    inputs: &[Expr],
    memo: &mut HashMap<*const Node, Expr>,
) -> Result<Expr, EvalError> {
    if let Some(done) = memo.get(&e.ptr()) {
        return Ok(done.clone());
    }
    let out = match e.node() {
        Node::Const(_) | Node::Var(_) => e.clone(),
        Node::Input(j) => inputs
            .get(*j)
            .cloned()
            .ok_or(EvalError::UnboundInput { index: *j, dim: inputs.len() })?,
        Node::Neg(a) => substitute(a, inputs, memo)?.neg(),
        Node::Add(a, b) => substitute(a, inputs, memo)?.add(&substitute(b, inputs, memo)?),
        Node::Sub(a, b) => substitute(a, inputs, memo)?.sub(&substitute(b, inputs, memo)?),
        Node::Mul(a, b) => substitute(a, inputs, memo)?.mul(&substitute(b, inputs, memo)?),
        Node::Div(a, b) => substitute(a, inputs, memo)?.div(&substitute(b, inputs, memo)?),
        Node::Pow(a, n) => substitute(a, inputs, memo)?.powi(*n),
        Node::Sin(a) => substitute(a, inputs, memo)?.sin(),
        Node::Cos(a) => substitute(a, inputs, memo)?.cos(),
        Node::Tanh(a) => substitute(a, inputs, memo)?.tanh(),
    };
    memo.insert(e.ptr(), out.clone());
    Ok(out)
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.node() {
            Node::Const(c) => write!(f, "{c:?}"),
            Node::Var(i) => write!(f, "(var {i})"),
            Node::Input(j) => write!(f, "(input {j})"),
            Node::Neg(a) => write!(f, "(neg {a})"),
            Node::Add(a, b) => write!(f, "(add {a} {b})"),
            Node::Sub(a, b) => write!(f, "(sub {a} {b})"),
            Node::Mul(a, b) => write!(f, "(mul {a} {b})"),
            Node::Div(a, b) => write!(f, "(div {a} {b})"),
            Node::Pow(a, n) => write!(f, "(pow {a} {n})"),
            Node::Sin(a) => write!(f, "(sin {a})"),
            Node::Cos(a) => write!(f, "(cos {a})"),
            Node::Tanh(a) => write!(f, "(tanh {a})"),
        }
    }
}

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl std::str::FromStr for Expr {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Expr::parse(s)
    }
}

impl From<f64> for Expr {
    fn from(c: f64) -> Self {
        Expr::constant(c)
    }
}

macro_rules! binop {
    ($trait:ident, $method:ident) => {
        impl ops::$trait<Expr> for Expr {
            type Output = Expr;
            fn $method(self, rhs: Expr) -> Expr {
                Expr::$method(&self, &rhs)
            }
        }
        impl ops::$trait<&Expr> for &Expr {
            type Output = Expr;
            fn $method(self, rhs: &Expr) -> Expr {
                Expr::$method(self, rhs)
            }
        }
        impl ops::$trait<f64> for Expr {
            type Output = Expr;
            fn $method(self, rhs: f64) -> Expr {
                Expr::$method(&self, &Expr::constant(rhs))
            }
        }
        impl ops::$trait<f64> for &Expr {
            type Output = Expr;
            fn $method(self, rhs: f64) -> Expr {
                Expr::$method(self, &Expr::constant(rhs))
            }
        }
        impl ops::$trait<Expr> for f64 {
            type Output = Expr;
            fn $method(self, rhs: Expr) -> Expr {
                Expr::$method(&Expr::constant(self), &rhs)
            }
        }
    };
}

binop!(Add, add);
binop!(Sub, sub);
binop!(Mul, mul);
binop!(Div, div);

impl ops::Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::neg(&self)
    }
}

impl ops::Neg for &Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::neg(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn x(i: usize) -> Expr {
        Expr::var(i)
    }

    #[test]
    fn point_examples() {
        assert_eq!(x(0).sin().eval_point(&[0.0]).unwrap(), 0.0);
        assert_eq!(x(0).tanh().eval_point(&[0.0]).unwrap(), 0.0);
        let e = &x(0) * &x(0) - x(1);
        assert_eq!(e.eval_point(&[3.0, 2.0]).unwrap(), 7.0);
    }

    #[test]
    fn division_by_exact_zero_is_an_error() {
        let e = Expr::one() / x(0);
        assert_eq!(e.eval_point(&[0.0]), Err(EvalError::DivisionByZero));
        let folded = Expr::one() / Expr::zero();
        assert_eq!(folded.eval_point(&[]), Err(EvalError::DivisionByZero));
    }

    #[test]
    fn overflow_is_non_finite() {
        let e = x(0).powi(400);
        assert_eq!(e.eval_point(&[10.0]), Err(EvalError::NonFiniteResult));
    }

    #[test]
    fn unbound_variable() {
        let e = x(3).sin();
        assert!(matches!(e.eval_point(&[1.0]), Err(EvalError::UnboundVariable { index: 3, .. })));
    }

    #[test]
    fn folding_identities() {
        assert!((Expr::zero() * x(0).sin()).is_zero());
        assert_eq!(format!("{}", Expr::one() * x(1)), "(var 1)");
        assert_eq!(format!("{}", x(0) + 0.0), "(var 0)");
        assert_eq!((Expr::constant(2.0) + Expr::constant(3.0)).as_const(), Some(5.0));
        assert!(x(0).powi(0).is_one());
    }

    #[test]
    fn substitution_removes_inputs() {
        let f = x(1) + Expr::input(0);
        let u = Expr::constant(-1.0) * x(0) - Expr::constant(2.0) * x(1);
        let g = f.substitute_inputs(&[u]).unwrap();
        assert_eq!(g.input_bound(), 0);
        assert_eq!(g.eval_point(&[1.0, 1.0]).unwrap(), 1.0 - 1.0 - 2.0);
        assert!(f.substitute_inputs(&[]).is_err());
    }

    #[test]
    fn bounds_and_counts() {
        let t = x(2).tanh();
        let e = &t * &t + Expr::input(1);
        assert_eq!(e.var_bound(), 3);
        assert_eq!(e.input_bound(), 2);
        // var, tanh, mul, input, add
        assert_eq!(e.node_count(), 5);
    }
}
