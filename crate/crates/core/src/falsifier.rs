//! Interval branch-and-prune search for states violating the Lyapunov
//! conditions.
//!
//! The constraint searched is
//!
//! ```text
//! |x|^2 >= eps  and  x in D  and  ( V(x) <= 0  or  LieV(x) >= 0 )
//! ```
//!
//! An `Unsat` answer is a proof: every box of the domain was discarded by
//! outward-rounded interval evaluation. A `DeltaSat` answer carries a
//! witness that satisfies the weakened constraint `V <= delta or
//! LieV >= -delta`, checked by direct evaluation before it is returned.

use std::io::Write;
use std::path::Path;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{EvalError, Expr, Interval, StateBox, Tape};
use crate::network::{LinearController, LyapunovNet, NetworkError};
use crate::system::{Domain, SystemSpec};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FalsifierError {
    #[error("invalid falsification problem: {0}")]
    InvalidProblem(String),
    #[error("search budget exhausted after {boxes} boxes and {elapsed_s:.1} s")]
    BudgetExhausted { boxes: u64, elapsed_s: f64 },
    /// A box shrank to floating-point resolution without being refuted or
    /// yielding a witness.
    #[error("search could not decide the box {0:?}")]
    Inconclusive(StateBox),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Budget {
    pub max_boxes: u64,
    #[serde(with = "secs")]
    pub max_time: Duration,
}

impl Default for Budget {
    fn default() -> Self {
        Budget { max_boxes: 10_000_000, max_time: Duration::from_secs(30 * 60) }
    }
}

mod secs {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let v = f64::deserialize(d)?;
        Duration::try_from_secs_f64(v).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SearchStats {
    pub boxes: u64,
    pub elapsed_s: f64,
}

/// A constraint searched by [`search`].
pub trait BoxPredicate {
    type Witness;

    /// True only if no point of `b` can satisfy the constraint.
    fn excludes(&mut self, b: &StateBox) -> bool;

    /// Weakened point check.
    fn witness(&mut self, x: &[f64]) -> Option<Self::Witness>;
}

/// Depth-first branch and prune. Boxes that survive down to `w_min` are
/// point-checked at their midpoint; if that fails they keep splitting.
pub fn search<P: BoxPredicate>(
    pred: &mut P,
    root: StateBox,
    w_min: f64,
    budget: &Budget,
) -> Result<(Option<(P::Witness, Vec<f64>, StateBox)>, SearchStats), FalsifierError> {
    let start = Instant::now();
    let mut stats = SearchStats::default();
    let mut stack = vec![root];
    while let Some(b) = stack.pop() {
        stats.boxes += 1;
        if stats.boxes > budget.max_boxes || (stats.boxes % 4096 == 0 && start.elapsed() > budget.max_time) {
            return Err(FalsifierError::BudgetExhausted { boxes: stats.boxes - 1, elapsed_s: start.elapsed().as_secs_f64() });
        }
        if pred.excludes(&b) {
            continue;
        }
        let (axis, width) = b.widest();
        if width <= w_min {
            let mid = b.midpoint();
            if let Some(w) = pred.witness(&mid) {
                stats.elapsed_s = start.elapsed().as_secs_f64();
                return Ok((Some((w, mid, b.clone())), stats));
            }
        }
        let iv = b.get(axis);
        if width <= 1e-12 * iv.mag().max(1.0) {
            for corner in corners(&b) {
                if let Some(w) = pred.witness(&corner) {
                    stats.elapsed_s = start.elapsed().as_secs_f64();
                    return Ok((Some((w, corner, b.clone())), stats));
                }
            }
            return Err(FalsifierError::Inconclusive(b));
        }
        let (lo, hi) = b.split(axis);
        stack.push(hi);
        stack.push(lo);
    }
    stats.elapsed_s = start.elapsed().as_secs_f64();
    Ok((None, stats))
}

fn corners(b: &StateBox) -> Vec<Vec<f64>> {
    let n = b.dim().min(12);
    (0..1usize << n)
        .map(|mask| {
            b.intervals()
                .iter()
                .enumerate()
                .map(|(i, iv)| if i < n && mask >> i & 1 == 1 { iv.hi } else { iv.lo })
                .collect()
        })
        .collect()
}

/// Which Lyapunov condition a witness breaks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Violation {
    /// `V(x) <= 0`.
    Positivity,
    /// `LieV(x) >= 0`.
    Decrease,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Violation::Positivity => "positivity",
            Violation::Decrease => "decrease",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Counterexample {
    pub witness: Vec<f64>,
    pub region: StateBox,
    pub violated: Violation,
    pub v: f64,
    pub lie_v: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FalsificationOutcome {
    Unsat,
    DeltaSat(Counterexample),
}

impl FalsificationOutcome {
    pub fn is_unsat(&self) -> bool {
        matches!(self, FalsificationOutcome::Unsat)
    }
}

#[derive(Debug, Clone)]
pub struct FalsificationProblem {
    v: Expr,
    lie_v: Expr,
    domain: Domain,
    n_states: usize,
    epsilon: f64,
    delta: f64,
    relaxation: f64,
}

impl FalsificationProblem {
    /// Requires `0 < delta <= epsilon / 10`.
    pub fn new(
        v: Expr,
        lie_v: Expr,
        domain: Domain,
        n_states: usize,
        epsilon: f64,
        delta: f64,
    ) -> Result<FalsificationProblem, FalsifierError> {
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(FalsifierError::InvalidProblem(format!("epsilon must be positive, got {epsilon}")));
        }
        if !(delta.is_finite() && delta > 0.0 && delta <= epsilon / 10.0) {
            return Err(FalsifierError::InvalidProblem(format!(
                "delta must be positive and at most epsilon/10 = {}, got {delta}",
                epsilon / 10.0
            )));
        }
        if n_states == 0 {
            return Err(FalsifierError::InvalidProblem("state dimension must be positive".into()));
        }
        for (name, e) in [("V", &v), ("LieV", &lie_v)] {
            if e.var_bound() > n_states {
                let i = e.var_bound() - 1;
                return Err(FalsifierError::InvalidProblem(format!("{name} uses x{i} with {n_states} states")));
            }
            if e.input_bound() > 0 {
                return Err(FalsifierError::InvalidProblem(format!("{name} still refers to control inputs")));
            }
        }
        if let Domain::Box { bounds } = &domain {
            if bounds.dim() != n_states {
                return Err(FalsifierError::InvalidProblem("domain box dimension differs from state count".into()));
            }
        }
        Ok(FalsificationProblem { v, lie_v, domain, n_states, epsilon, delta, relaxation: 0.0 })
    }

    /// Weakens the decrease condition to `LieV < relaxation`.
    pub fn with_relaxation(mut self, relaxation: f64) -> Result<FalsificationProblem, FalsifierError> {
        if !(relaxation.is_finite() && relaxation >= 0.0) {
            return Err(FalsifierError::InvalidProblem("relaxation must be non-negative".into()));
        }
        self.relaxation = relaxation;
        Ok(self)
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn relaxation(&self) -> f64 {
        self.relaxation
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    /// Box side below which surviving boxes are point-checked.
    pub fn w_min(&self) -> f64 {
        self.delta / 4.0
    }

    /// Non-fatal warnings, such as an epsilon-ball that is not small
    /// compared with the domain.
    pub fn warnings(&self) -> Vec<String> {
        let scale = self.domain.inner_radius().min(1.0);
        if self.epsilon.sqrt() >= scale {
            vec![format!("sqrt(epsilon) = {} is not small compared with the domain ({scale})", self.epsilon.sqrt())]
        } else {
            Vec::new()
        }
    }
}

struct LyapunovPredicate<'a> {
    p: &'a FalsificationProblem,
    tape: Tape,
    iscratch: Vec<Interval>,
    pscratch: Vec<f64>,
}

impl BoxPredicate for LyapunovPredicate<'_> {
    type Witness = (Violation, f64, f64);

    fn excludes(&mut self, b: &StateBox) -> bool {
        let r2 = b.norm_sq();
        if r2.hi < self.p.epsilon {
            return true;
        }
        if let Some(r) = self.p.domain.radius() {
            if r2.lo > r * r {
                return true;
            }
        }
        match self.tape.eval_interval_with(b, &mut self.iscratch) {
            Ok(out) => out[0].lo > 0.0 && out[1].hi < self.p.relaxation,
            Err(_) => false,
        }
    }

    fn witness(&mut self, x: &[f64]) -> Option<(Violation, f64, f64)> {
        let r2: f64 = x.iter().map(|v| v * v).sum();
        if r2 < self.p.epsilon || !self.p.domain.contains(x) {
            return None;
        }
        let out = self.tape.eval_point_with(x, &[], &mut self.pscratch).ok()?;
        let (v, lie) = (out[0], out[1]);
        if v <= self.p.delta {
            Some((Violation::Positivity, v, lie))
        } else if lie >= self.p.relaxation - self.p.delta {
            Some((Violation::Decrease, v, lie))
        } else {
            None
        }
    }
}

pub fn check(p: &FalsificationProblem, budget: &Budget) -> Result<FalsificationOutcome, FalsifierError> {
    check_with_stats(p, budget).map(|(o, _)| o)
}

pub fn check_with_stats(
    p: &FalsificationProblem,
    budget: &Budget,
) -> Result<(FalsificationOutcome, SearchStats), FalsifierError> {
    let mut pred = LyapunovPredicate {
        p,
        tape: Tape::compile(&[p.v.clone(), p.lie_v.clone()]),
        iscratch: Vec::new(),
        pscratch: Vec::new(),
    };
    let root = p.domain.bounding_box(p.n_states);
    let (found, stats) = search(&mut pred, root, p.w_min(), budget)?;
    let outcome = match found {
        None => FalsificationOutcome::Unsat,
        Some(((violated, v, lie_v), witness, region)) => {
            FalsificationOutcome::DeltaSat(Counterexample { witness, region, violated, v, lie_v })
        }
    };
    Ok((outcome, stats))
}

/// Builds the falsification problem for a network/controller pair.
pub fn lyapunov_problem(
    net: &LyapunovNet,
    ctrl: &LinearController,
    system: &SystemSpec,
    epsilon: f64,
    delta: f64,
) -> Result<FalsificationProblem, FalsifierError> {
    let v = net.compile_v();
    let lie_v = net.compile_lie_v(system, ctrl)?;
    FalsificationProblem::new(v, lie_v, system.domain.clone(), system.n_states(), epsilon, delta)
}

pub fn verify_lyapunov(
    net: &LyapunovNet,
    ctrl: &LinearController,
    system: &SystemSpec,
    epsilon: f64,
    delta: f64,
    budget: &Budget,
) -> Result<FalsificationOutcome, FalsifierError> {
    check(&lyapunov_problem(net, ctrl, system, epsilon, delta)?, budget)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterexampleRecord {
    pub cegis_iteration: usize,
    pub witness: Vec<f64>,
    pub violated: Violation,
}

/// Counterexamples in the order they were found.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CounterexampleLog {
    pub records: Vec<CounterexampleRecord>,
}

impl CounterexampleLog {
    /// CSV with columns `cegis_iteration, x0, .., x{n-1}, violated`.
    pub fn write_csv<W: Write>(&self, n_states: usize, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["cegis_iteration".to_string()];
        header.extend((0..n_states).map(|i| format!("x{i}")));
        header.push("violated".into());
        out.write_record(&header)?;
        for r in &self.records {
            let mut row = vec![r.cegis_iteration.to_string()];
            row.extend(r.witness.iter().map(|x| x.to_string()));
            row.push(r.violated.to_string());
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, n_states: usize, path: &Path) -> csv::Result<()> {
        self.write_csv(n_states, std::fs::File::create(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{lie_derivative_expr, Architecture};

    fn x(i: usize) -> Expr {
        Expr::var(i)
    }

    fn quadratic_decay(sign: f64) -> FalsificationProblem {
        let v = (x(0).powi(2) + x(1).powi(2)) * sign;
        let lie = lie_derivative_expr(&v, &[-x(0), -x(1)]);
        FalsificationProblem::new(v, lie, Domain::ball(6.0), 2, 0.04, 0.004).unwrap()
    }

    #[test]
    fn quadratic_on_stable_linear_system_is_unsat() {
        let (out, stats) = check_with_stats(&quadratic_decay(1.0), &Budget::default()).unwrap();
        assert_eq!(out, FalsificationOutcome::Unsat);
        assert!(stats.boxes > 1);
    }

    #[test]
    fn negated_quadratic_is_delta_sat() {
        match check(&quadratic_decay(-1.0), &Budget::default()).unwrap() {
            FalsificationOutcome::DeltaSat(c) => {
                let r2: f64 = c.witness.iter().map(|v| v * v).sum();
                assert!(r2 >= 0.04 && r2 <= 36.0);
                assert!(c.v <= 0.004);
                assert!(c.region.contains(&c.witness));
            }
            other => panic!("expected DeltaSat, got {other:?}"),
        }
    }

    #[test]
    fn delta_bound_is_enforced() {
        let v = x(0).powi(2);
        let err = FalsificationProblem::new(v.clone(), v.clone(), Domain::ball(1.0), 1, 0.04, 0.01);
        assert!(matches!(err, Err(FalsifierError::InvalidProblem(_))));
        assert!(FalsificationProblem::new(v.clone(), v.clone(), Domain::ball(1.0), 1, 0.04, 0.004).is_ok());
        let bad_var = FalsificationProblem::new(x(3), v, Domain::ball(1.0), 2, 0.04, 0.004);
        assert!(bad_var.is_err());
    }

    #[test]
    fn huge_epsilon_is_vacuous() {
        let p = FalsificationProblem::new(-x(0), x(0), Domain::ball(6.0), 2, 100.0, 1.0).unwrap();
        assert!(!p.warnings().is_empty());
        assert_eq!(check(&p, &Budget::default()).unwrap(), FalsificationOutcome::Unsat);
    }

    #[test]
    fn worked_example_matches_grid_oracle() {
        // V = tanh(x0 + x1) with x0' = -x1^2, x1' = sin(x0) on [-1, 1]^2.
        let v = (x(0) + x(1)).tanh();
        let field = [-x(1).powi(2), x(0).sin()];
        let lie = lie_derivative_expr(&v, &field);
        let bounds = StateBox::cube(2, 1.0);
        let (eps, delta) = (0.04, 0.004);
        let p = FalsificationProblem::new(v.clone(), lie.clone(), Domain::Box { bounds }, 2, eps, delta).unwrap();
        let c = match check(&p, &Budget::default()).unwrap() {
            FalsificationOutcome::DeltaSat(c) => c,
            other => panic!("expected DeltaSat, got {other:?}"),
        };
        let tape = Tape::compile(&[v, lie]);
        let n = 400;
        let step = 2.0 / (n - 1) as f64;
        let mut nearest = f64::INFINITY;
        let mut violations = 0;
        for i in 0..n {
            for j in 0..n {
                let g = [-1.0 + i as f64 * step, -1.0 + j as f64 * step];
                if g[0] * g[0] + g[1] * g[1] < eps {
                    continue;
                }
                let out = tape.eval_point(&g).unwrap();
                if out[0] <= 0.0 || out[1] >= 0.0 {
                    violations += 1;
                    let d = ((g[0] - c.witness[0]).powi(2) + (g[1] - c.witness[1]).powi(2)).sqrt();
                    nearest = nearest.min(d);
                }
            }
        }
        assert!(violations > 0);
        let reach = step * 2f64.sqrt() + c.region.max_width() * 2f64.sqrt();
        assert!(nearest <= reach, "witness {:?} is {nearest} from the nearest grid violation", c.witness);
    }

    #[test]
    fn zero_network_is_falsified() {
        let sys = SystemSpec::new("d", 2, 1, vec![-x(0), -x(1) + Expr::input(0)], Domain::ball(1.0)).unwrap();
        let net = LyapunovNet::zeros(Architecture::default_for(2));
        let out = verify_lyapunov(&net, &LinearController::zeros(1, 2), &sys, 0.04, 0.004, &Budget::default()).unwrap();
        assert!(matches!(out, FalsificationOutcome::DeltaSat(Counterexample { violated: Violation::Positivity, .. })));
    }

    #[test]
    fn budget_exhaustion_is_reported() {
        let budget = Budget { max_boxes: 3, ..Default::default() };
        let err = check(&quadratic_decay(1.0), &budget).unwrap_err();
        assert!(matches!(err, FalsifierError::BudgetExhausted { boxes: 3, .. }));
    }

    #[test]
    fn relaxation_admits_slow_growth() {
        // LieV = 0.001 |x|^2 fails strictly but passes with relaxation 1.
        let v = x(0).powi(2);
        let lie = x(0).powi(2) * 0.001;
        let p = FalsificationProblem::new(v, lie, Domain::ball(2.0), 1, 0.04, 0.004).unwrap();
        assert!(!check(&p, &Budget::default()).unwrap().is_unsat());
        let relaxed = p.with_relaxation(1.0).unwrap();
        assert!(check(&relaxed, &Budget::default()).unwrap().is_unsat());
    }

    #[test]
    fn counterexample_csv() {
        let log = CounterexampleLog {
            records: vec![CounterexampleRecord { cegis_iteration: 2, witness: vec![0.5, -1.0], violated: Violation::Decrease }],
        };
        let mut buf = Vec::new();
        log.write_csv(2, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "cegis_iteration,x0,x1,violated\n2,0.5,-1,decrease\n");
    }
}
