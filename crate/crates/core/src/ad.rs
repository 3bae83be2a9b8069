//! Reverse-mode automatic differentiation over a flat Wengert list.
//!
//! Every node stores its value and the local partials with respect to at most
//! two parents; [`Graph::backward`] sweeps the list once in reverse. The graph
//! implements [`EvalDomain`], so compiled dynamics tapes can be evaluated on
//! it directly.

use crate::expr::{EvalDomain, EvalError};

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(u32);

#[derive(Debug, Clone, Copy)]
struct AdNode {
    value: f64,
    parents: [u32; 2],
    partials: [f64; 2],
    arity: u8,
}

#[derive(Debug, Default, Clone)]
pub struct Graph {
    nodes: Vec<AdNode>,
}

impl Graph {
    pub fn new() -> Graph {
        Graph::default()
    }

    /// Drops all nodes but keeps the allocation.
    pub fn clear(&mut self) {
        self.nodes.clear();
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: f64, parents: [u32; 2], partials: [f64; 2], arity: u8) -> Var {
        let id = self.nodes.len() as u32;
        self.nodes.push(AdNode { value, parents, partials, arity });
        Var(id)
    }

    /// An independent variable (or a constant; the distinction only matters
    /// for which adjoints the caller reads back).
    pub fn leaf(&mut self, value: f64) -> Var {
        self.push(value, [0, 0], [0.0, 0.0], 0)
    }

    fn unary(&mut self, a: Var, value: f64, partial: f64) -> Var {
        self.push(value, [a.0, 0], [partial, 0.0], 1)
    }

    fn binary(&mut self, a: Var, b: Var, value: f64, pa: f64, pb: f64) -> Var {
        self.push(value, [a.0, b.0], [pa, pb], 2)
    }

    pub fn value(&self, v: Var) -> f64 {
        self.nodes[v.0 as usize].value
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) + self.value(b);
        self.binary(a, b, v, 1.0, 1.0)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) - self.value(b);
        self.binary(a, b, v, 1.0, -1.0)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (self.value(a), self.value(b));
        self.binary(a, b, x * y, y, x)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var, EvalError> {
        let (x, y) = (self.value(a), self.value(b));
        if y == 0.0 {
            return Err(EvalError::DivisionByZero);
        }
        Ok(self.binary(a, b, x / y, 1.0 / y, -x / (y * y)))
    }

    pub fn neg(&mut self, a: Var) -> Var {
        let v = -self.value(a);
        self.unary(a, v, -1.0)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let v = c * self.value(a);
        self.unary(a, v, c)
    }

    pub fn add_const(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a) + c;
        self.unary(a, v, 1.0)
    }

    pub fn powi(&mut self, a: Var, n: u32) -> Var {
        let x = self.value(a);
        match n {
            0 => self.leaf(1.0),
            1 => a,
            _ => {
                let v = x.powi(n as i32);
                let d = f64::from(n) * x.powi(n as i32 - 1);
                self.unary(a, v, d)
            }
        }
    }

    pub fn sin(&mut self, a: Var) -> Var {
        let x = self.value(a);
        self.unary(a, x.sin(), x.cos())
    }

    pub fn cos(&mut self, a: Var) -> Var {
        let x = self.value(a);
        self.unary(a, x.cos(), -x.sin())
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let t = self.value(a).tanh();
        self.unary(a, t, 1.0 - t * t)
    }

    /// `max(0, a)` with subgradient 0 at the kink.
    pub fn relu(&mut self, a: Var) -> Var {
        let x = self.value(a);
        if x > 0.0 {
            self.unary(a, x, 1.0)
        } else {
            self.unary(a, 0.0, 0.0)
        }
    }

    /// Sum of many nodes as a balanced binary tree, keeping the reduction
    /// order fixed for a given input length.
    pub fn sum(&mut self, terms: &[Var]) -> Var {
        match terms.len() {
            0 => self.leaf(0.0),
            1 => terms[0],
            n => {
                let (l, r) = terms.split_at(n / 2);
                let a = self.sum(l);
                let b = self.sum(r);
                self.add(a, b)
            }
        }
    }

    /// Adjoints of every node with respect to `output`.
    pub fn backward(&self, output: Var) -> Vec<f64> {
        let mut adj = vec![0.0; self.nodes.len()];
        adj[output.0 as usize] = 1.0;
        for i in (0..=output.0 as usize).rev() {
            let a = adj[i];
            if a == 0.0 {
                continue;
            }
            let node = &self.nodes[i];
            for k in 0..node.arity as usize {
                adj[node.parents[k] as usize] += a * node.partials[k];
            }
        }
        adj
    }
}

impl Var {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl EvalDomain for Graph {
    type Value = Var;

    fn constant(&mut self, c: f64) -> Var {
        self.leaf(c)
    }
    fn neg(&mut self, a: &Var) -> Var {
        Graph::neg(self, *a)
    }
    fn add(&mut self, a: &Var, b: &Var) -> Var {
        Graph::add(self, *a, *b)
    }
    fn sub(&mut self, a: &Var, b: &Var) -> Var {
        Graph::sub(self, *a, *b)
    }
    fn mul(&mut self, a: &Var, b: &Var) -> Var {
        Graph::mul(self, *a, *b)
    }
    fn div(&mut self, a: &Var, b: &Var) -> Result<Var, EvalError> {
        Graph::div(self, *a, *b)
    }
    fn powi(&mut self, a: &Var, n: u32) -> Var {
        Graph::powi(self, *a, n)
    }
    fn sin(&mut self, a: &Var) -> Var {
        Graph::sin(self, *a)
    }
    fn cos(&mut self, a: &Var) -> Var {
        Graph::cos(self, *a)
    }
    fn tanh(&mut self, a: &Var) -> Var {
        Graph::tanh(self, *a)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gradient_of_product_and_sin() {
        let mut g = Graph::new();
        let x = g.leaf(0.7);
        let y = g.leaf(-1.3);
        let s = g.sin(x);
        let p = g.mul(s, y);
        let out = g.add(p, x);
        let adj = g.backward(out);
        assert!((adj[x.index()] - (0.7f64.cos() * -1.3 + 1.0)).abs() < 1e-15);
        assert!((adj[y.index()] - 0.7f64.sin()).abs() < 1e-15);
    }

    #[test]
    fn relu_kink_has_zero_subgradient() {
        let mut g = Graph::new();
        let x = g.leaf(0.0);
        let r = g.relu(x);
        assert_eq!(g.backward(r)[x.index()], 0.0);
    }

    #[test]
    fn reused_node_accumulates() {
        let mut g = Graph::new();
        let x = g.leaf(3.0);
        let sq = g.mul(x, x);
        let t = g.tanh(x);
        let terms = [sq, t, x];
        let out = g.sum(&terms);
        let adj = g.backward(out);
        let want = 6.0 + (1.0 - 3f64.tanh().powi(2)) + 1.0;
        assert!((adj[x.index()] - want).abs() < 1e-14);
    }
}
