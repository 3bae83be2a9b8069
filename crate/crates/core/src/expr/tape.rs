use std::collections::HashMap;

use super::{EvalError, Expr, Interval, Node, StateBox};

/// Arithmetic a [`Tape`] can be evaluated over.
pub trait EvalDomain {
    type Value: Clone;

    fn constant(&mut self, c: f64) -> Self::Value;
    fn neg(&mut self, a: &Self::Value) -> Self::Value;
    fn add(&mut self, a: &Self::Value, b: &Self::Value) -> Self::Value;
    fn sub(&mut self, a: &Self::Value, b: &Self::Value) -> Self::Value;
    fn mul(&mut self, a: &Self::Value, b: &Self::Value) -> Self::Value;
    fn div(&mut self, a: &Self::Value, b: &Self::Value) -> Result<Self::Value, EvalError>;
    fn powi(&mut self, a: &Self::Value, n: u32) -> Self::Value;
    fn sin(&mut self, a: &Self::Value) -> Self::Value;
    fn cos(&mut self, a: &Self::Value) -> Self::Value;
    fn tanh(&mut self, a: &Self::Value) -> Self::Value;
}

/// IEEE double evaluation.
#[derive(Debug, Default, Clone, Copy)]
pub struct PointDomain;

impl EvalDomain for PointDomain {
    type Value = f64;

    fn constant(&mut self, c: f64) -> f64 {
        c
    }
    fn neg(&mut self, a: &f64) -> f64 {
        -a
    }
    fn add(&mut self, a: &f64, b: &f64) -> f64 {
        a + b
    }
    fn sub(&mut self, a: &f64, b: &f64) -> f64 {
        a - b
    }
    fn mul(&mut self, a: &f64, b: &f64) -> f64 {
        a * b
    }
    fn div(&mut self, a: &f64, b: &f64) -> Result<f64, EvalError> {
        if *b == 0.0 {
            Err(EvalError::DivisionByZero)
        } else {
            Ok(a / b)
        }
    }
    fn powi(&mut self, a: &f64, n: u32) -> f64 {
        a.powi(n as i32)
    }
    fn sin(&mut self, a: &f64) -> f64 {
        a.sin()
    }
    fn cos(&mut self, a: &f64) -> f64 {
        a.cos()
    }
    fn tanh(&mut self, a: &f64) -> f64 {
        a.tanh()
    }
}

/// Outward-rounded interval evaluation.
#[derive(Debug, Default, Clone, Copy)]
pub struct IntervalDomain;

impl EvalDomain for IntervalDomain {
    type Value = Interval;

    fn constant(&mut self, c: f64) -> Interval {
        Interval::point(c)
    }
    fn neg(&mut self, a: &Interval) -> Interval {
        a.neg()
    }
    fn add(&mut self, a: &Interval, b: &Interval) -> Interval {
        a.add(*b)
    }
    fn sub(&mut self, a: &Interval, b: &Interval) -> Interval {
        a.sub(*b)
    }
    fn mul(&mut self, a: &Interval, b: &Interval) -> Interval {
        a.mul(*b)
    }
    fn div(&mut self, a: &Interval, b: &Interval) -> Result<Interval, EvalError> {
        a.div(*b)
    }
    fn powi(&mut self, a: &Interval, n: u32) -> Interval {
        a.powi(n)
    }
    fn sin(&mut self, a: &Interval) -> Interval {
        a.sin()
    }
    fn cos(&mut self, a: &Interval) -> Interval {
        a.cos()
    }
    fn tanh(&mut self, a: &Interval) -> Interval {
        a.tanh()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Instr {
    /// Bit pattern of the constant, so instructions can be hashed.
    Const(u64),
    Var(usize),
    Input(usize),
    Neg(usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    Pow(usize, u32),
    Sin(usize),
    Cos(usize),
    Tanh(usize),
}

/// A set of expressions flattened into one straight-line program.
///
/// Nodes shared by pointer, and structurally identical subterms built
/// independently, are evaluated once.
#[derive(Debug, Clone)]
pub struct Tape {
    instrs: Vec<Instr>,
    outputs: Vec<usize>,
    n_vars: usize,
    n_inputs: usize,
}

impl Tape {
    pub fn compile(exprs: &[Expr]) -> Tape {
        let mut builder = Builder::default();
        let outputs = exprs.iter().map(|e| builder.lower(e)).collect();
        let (mut n_vars, mut n_inputs) = (0, 0);
        for ins in &builder.instrs {
            match ins {
                Instr::Var(i) => n_vars = n_vars.max(i + 1),
                Instr::Input(j) => n_inputs = n_inputs.max(j + 1),
                _ => {}
            }
        }
        Tape { instrs: builder.instrs, outputs, n_vars, n_inputs }
    }

    pub fn len(&self) -> usize {
        self.instrs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instrs.is_empty()
    }

    pub fn n_outputs(&self) -> usize {
        self.outputs.len()
    }

    /// One past the largest state-variable index used.
    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn n_inputs(&self) -> usize {
        self.n_inputs
    }

    /// Evaluates every output over domain `d`. `scratch` is reused between
    /// calls to avoid allocation in hot loops.
    pub fn eval_in<D: EvalDomain>(
        &self,
        d: &mut D,
        vars: &[D::Value],
        inputs: &[D::Value],
        scratch: &mut Vec<D::Value>,
    ) -> Result<Vec<D::Value>, EvalError> {
        self.run(d, vars, inputs, scratch)?;
        Ok(self.outputs.iter().map(|&o| scratch[o].clone()).collect())
    }

    fn run<D: EvalDomain>(
        &self,
        d: &mut D,
        vars: &[D::Value],
        inputs: &[D::Value],
        slots: &mut Vec<D::Value>,
    ) -> Result<(), EvalError> {
        if vars.len() < self.n_vars {
            return Err(EvalError::UnboundVariable { index: self.n_vars - 1, dim: vars.len() });
        }
        if inputs.len() < self.n_inputs {
            return Err(EvalError::UnboundInput { index: self.n_inputs - 1, dim: inputs.len() });
        }
        slots.clear();
        slots.reserve(self.instrs.len());
        for ins in &self.instrs {
            let v = match *ins {
                Instr::Const(bits) => d.constant(f64::from_bits(bits)),
                Instr::Var(i) => vars[i].clone(),
                Instr::Input(j) => inputs[j].clone(),
                Instr::Neg(a) => d.neg(&slots[a]),
                Instr::Add(a, b) => d.add(&slots[a], &slots[b]),
                Instr::Sub(a, b) => d.sub(&slots[a], &slots[b]),
                Instr::Mul(a, b) => d.mul(&slots[a], &slots[b]),
                Instr::Div(a, b) => d.div(&slots[a], &slots[b])?,
                Instr::Pow(a, n) => d.powi(&slots[a], n),
                Instr::Sin(a) => d.sin(&slots[a]),
                Instr::Cos(a) => d.cos(&slots[a]),
                Instr::Tanh(a) => d.tanh(&slots[a]),
            };
            slots.push(v);
        }
        Ok(())
    }

    /// Point evaluation of all outputs; state variables only.
    pub fn eval_point(&self, x: &[f64]) -> Result<Vec<f64>, EvalError> {
        let mut scratch = Vec::new();
        self.eval_point_with(x, &[], &mut scratch)
    }

    pub fn eval_point_with(
        &self,
        x: &[f64],
        u: &[f64],
        scratch: &mut Vec<f64>,
    ) -> Result<Vec<f64>, EvalError> {
        self.run(&mut PointDomain, x, u, scratch)?;
        self.outputs
            .iter()
            .map(|&o| {
                let v = scratch[o];
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(EvalError::NonFiniteResult)
                }
            })
            .collect()
    }

    pub fn eval_interval(&self, b: &StateBox) -> Result<Vec<Interval>, EvalError> {
        let mut scratch = Vec::new();
        self.eval_interval_with(b, &mut scratch)
    }

    /// Interval evaluation of all outputs. An enclosure with an infinite
    /// bound is reported as [`EvalError::NonFiniteResult`].
    pub fn eval_interval_with(
        &self,
        b: &StateBox,
        scratch: &mut Vec<Interval>,
    ) -> Result<Vec<Interval>, EvalError> {
        self.run(&mut IntervalDomain, b.intervals(), &[], scratch)?;
        self.outputs
            .iter()
            .map(|&o| {
                let v = scratch[o];
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(EvalError::NonFiniteResult)
                }
            })
            .collect()
    }
}

#[derive(Default)]
struct Builder {
    instrs: Vec<Instr>,
    by_ptr: HashMap<*const Node, usize>,
    by_instr: HashMap<Instr, usize>,
}

impl Builder {
    fn lower(&mut self, e: &Expr) -> usize {
        if let Some(&slot) = self.by_ptr.get(&e.ptr()) {
            return slot;
        }
        let ins = match e.node() {
            Node::Const(c) => Instr::Const(c.to_bits()),
            Node::Var(i) => Instr::Var(*i),
            Node::Input(j) => Instr::Input(*j),
            Node::Neg(a) => Instr::Neg(self.lower(a)),
            Node::Add(a, b) => Instr::Add(self.lower(a), self.lower(b)),
            Node::Sub(a, b) => Instr::Sub(self.lower(a), self.lower(b)),
            Node::Mul(a, b) => Instr::Mul(self.lower(a), self.lower(b)),
            Node::Div(a, b) => Instr::Div(self.lower(a), self.lower(b)),
            Node::Pow(a, n) => Instr::Pow(self.lower(a), *n),
            Node::Sin(a) => Instr::Sin(self.lower(a)),
            Node::Cos(a) => Instr::Cos(self.lower(a)),
            Node::Tanh(a) => Instr::Tanh(self.lower(a)),
        };
        let slot = match self.by_instr.get(&ins) {
            Some(&slot) => slot,
            None => {
                self.instrs.push(ins);
                let slot = self.instrs.len() - 1;
                self.by_instr.insert(ins, slot);
                slot
            }
        };
        self.by_ptr.insert(e.ptr(), slot);
        slot
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn structural_sharing_dedups() {
        let a = Expr::var(0).sin();
        let b = Expr::var(0).sin();
        let tape = Tape::compile(&[&a + &b]);
        // var, sin, add
        assert_eq!(tape.len(), 3);
    }

    #[test]
    fn multiple_outputs() {
        let x = Expr::var(0);
        let tape = Tape::compile(&[x.clone(), &x * &x, x.tanh()]);
        let v = tape.eval_point(&[2.0]).unwrap();
        assert_eq!(v, vec![2.0, 4.0, 2f64.tanh()]);
        assert_eq!(tape.n_vars(), 1);
    }

    #[test]
    fn inputs_must_be_bound() {
        let f = Expr::var(0) + Expr::input(0);
        let tape = Tape::compile(&[f]);
        assert!(matches!(tape.eval_point(&[1.0]), Err(EvalError::UnboundInput { .. })));
        let mut s = Vec::new();
        assert_eq!(tape.eval_point_with(&[1.0], &[2.0], &mut s).unwrap(), vec![3.0]);
    }

    #[test]
    fn interval_example_tanh() {
        let e = Expr::var(0).tanh();
        let r = e.eval_interval(&StateBox::new(vec![Interval::new(0.0, 1.0)])).unwrap();
        assert!(r.lo <= 0.0 && r.hi >= 0.761_594_155_955_764_9);
        assert!(r.hi < 0.761_594_155_955_765_2);
    }

    #[test]
    fn interval_division_through_zero() {
        let e = Expr::one() / Expr::var(0);
        let r = e.eval_interval(&StateBox::cube(1, 1.0));
        assert!(matches!(r, Err(EvalError::DomainError(_))));
    }
}
