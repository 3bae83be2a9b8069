use std::collections::HashMap;

use super::{Expr, Node};

pub(super) fn differentiate(e: &Expr, var_index: usize) -> Expr {
    let mut memo = HashMap::new();
    d(e, var_index, &mut memo)
}

fn d(e: &Expr, i: usize, memo: &mut HashMap<*const Node, Expr>) -> Expr {
    if let Some(done) = memo.get(&e.ptr()) {
        return done.clone();
    }
    let out = match e.node() {
        Node::Const(_) | Node::Input(_) => Expr::zero(),
        Node::Var(j) => {
            if *j == i {
                Expr::one()
            } else {
                Expr::zero()
            }
        }
        Node::Neg(a) => d(a, i, memo).neg(),
        Node::Add(a, b) => d(a, i, memo).add(&d(b, i, memo)),
        Node::Sub(a, b) => d(a, i, memo).sub(&d(b, i, memo)),
        Node::Mul(a, b) => {
            let (da, db) = (d(a, i, memo), d(b, i, memo));
            da.mul(b).add(&a.mul(&db))
        }
        Node::Div(a, b) => {
            // (a/b)' = a'/b - a b' / b^2
            let (da, db) = (d(a, i, memo), d(b, i, memo));
            da.div(b).sub(&a.mul(&db).div(&b.powi(2)))
        }
        Node::Pow(a, n) => {
            let da = d(a, i, memo);
            Expr::constant(f64::from(*n)).mul(&a.powi(n - 1)).mul(&da)
        }
        Node::Sin(a) => a.cos().mul(&d(a, i, memo)),
        Node::Cos(a) => a.sin().neg().mul(&d(a, i, memo)),
        // tanh' = 1 - tanh^2, reusing this node.
        Node::Tanh(a) => Expr::one().sub(&e.powi(2)).mul(&d(a, i, memo)),
    };
    memo.insert(e.ptr(), out.clone());
    out
}
