//! Empirical Lyapunov risk and the gradient-descent learner.
//!
//! The risk over samples `x_1..x_N` is
//!
//! ```text
//! (1/N) sum_i [ max(0, m_V |x_i|^2 - V(x_i)) + max(0, LieV(x_i) + m_L |x_i|^2) ] + V(0)^2
//!   [ + (1/N) sum_i (|x_i| - alpha V(x_i))   when the regulator is on ]
//! ```
//!
//! With both margins at their default of zero this is exactly the hinge
//! risk; positive margins ask for quadratic room that an interval proof can
//! use near the origin.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ad::{Graph, Var};
use crate::expr::{EvalDomain, EvalError, Tape};
use crate::network::{LinearController, LyapunovNet, NetworkError};
use crate::system::{Domain, SystemSpec};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrainingError {
    #[error("risk is not finite (parameters are exploding)")]
    NonFiniteRisk,
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("point {0:?} lies outside the domain")]
    OutOfDomain(Vec<f64>),
    #[error("sample has {got} coordinates, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    InitialSample,
    Counterexample,
}

/// Sampled states with a record of where each came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSet {
    dim: usize,
    points: Vec<Vec<f64>>,
    provenance: Vec<Provenance>,
}

impl TrainingSet {
    pub fn new(dim: usize) -> TrainingSet {
        TrainingSet { dim, points: Vec::new(), provenance: Vec::new() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn provenance(&self) -> &[Provenance] {
        &self.provenance
    }

    pub fn n_counterexamples(&self) -> usize {
        self.provenance.iter().filter(|&&p| p == Provenance::Counterexample).count()
    }

    /// Appends a point after checking it lies in `domain`.
    pub fn push(&mut self, x: Vec<f64>, provenance: Provenance, domain: &Domain) -> Result<(), TrainingError> {
        if x.len() != self.dim {
            return Err(TrainingError::DimensionMismatch { expected: self.dim, got: x.len() });
        }
        if !domain.contains(&x) {
            return Err(TrainingError::OutOfDomain(x));
        }
        self.points.push(x);
        self.provenance.push(provenance);
        Ok(())
    }
}

/// `n` points of dimension `dim` drawn i.i.d. uniformly from `domain`;
/// balls use rejection sampling from the bounding box.
pub fn sample_states(n: usize, dim: usize, domain: &Domain, seed: u64) -> Result<TrainingSet, TrainingError> {
    if n == 0 {
        return Err(TrainingError::InvalidConfig("at least one sample is required".into()));
    }
    let bbox = domain.bounding_box(dim);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut set = TrainingSet::new(bbox.dim());
    while set.len() < n {
        let x: Vec<f64> = bbox.intervals().iter().map(|iv| rng.gen_range(iv.lo..=iv.hi)).collect();
        if domain.contains(&x) {
            set.points.push(x);
            set.provenance.push(Provenance::InitialSample);
        }
    }
    Ok(set)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RiskConfig {
    pub learning_rate: f64,
    pub roa_regulator_enabled: bool,
    pub roa_alpha: f64,
    /// `m_V`: positivity hinge is `max(0, m_V |x|^2 - V)`.
    pub positivity_margin: f64,
    /// `m_L`: decrease hinge is `max(0, LieV + m_L |x|^2)`.
    pub decrease_margin: f64,
}

impl Default for RiskConfig {
    fn default() -> Self {
        RiskConfig {
            learning_rate: 0.01,
            roa_regulator_enabled: false,
            roa_alpha: 0.0,
            positivity_margin: 0.0,
            decrease_margin: 0.0,
        }
    }
}

impl RiskConfig {
    pub fn validate(&self) -> Result<(), TrainingError> {
        let bad = |m: &str| Err(TrainingError::InvalidConfig(m.into()));
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        if !(self.roa_alpha.is_finite() && self.roa_alpha >= 0.0) {
            return bad("roa_alpha must be non-negative");
        }
        if !(self.positivity_margin.is_finite() && self.positivity_margin >= 0.0)
            || !(self.decrease_margin.is_finite() && self.decrease_margin >= 0.0)
        {
            return bad("margins must be non-negative");
        }
        Ok(())
    }
}

/// The risk split into its terms.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RiskBreakdown {
    pub positivity: f64,
    pub decrease: f64,
    pub origin: f64,
    pub regulator: f64,
}

impl RiskBreakdown {
    /// Hinge terms plus `V(0)^2`, without the regulator.
    pub fn lyapunov(&self) -> f64 {
        self.positivity + self.decrease + self.origin
    }

    pub fn total(&self) -> f64 {
        self.lyapunov() + self.regulator
    }
}

fn norm_sq(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

/// Risk of an arbitrary candidate: `v` returns `(V(x), dV/dx)` and `field`
/// the closed-loop vector field.
pub fn risk_of<Fv, Ff>(v: Fv, field: Ff, points: &[Vec<f64>], cfg: &RiskConfig) -> Result<RiskBreakdown, TrainingError>
where
    Fv: Fn(&[f64]) -> (f64, Vec<f64>),
    Ff: Fn(&[f64]) -> Vec<f64>,
{
    if points.is_empty() {
        return Err(TrainingError::InvalidConfig("empty training set".into()));
    }
    let dim = points[0].len();
    let n = points.len() as f64;
    let mut r = RiskBreakdown::default();
    for x in points {
        let (vx, grad) = v(x);
        let fx = field(x);
        let lie: f64 = grad.iter().zip(&fx).map(|(g, f)| g * f).sum();
        let s2 = norm_sq(x);
        r.positivity += (cfg.positivity_margin * s2 - vx).max(0.0);
        r.decrease += (lie + cfg.decrease_margin * s2).max(0.0);
        if cfg.roa_regulator_enabled {
            r.regulator += s2.sqrt() - cfg.roa_alpha * vx;
        }
    }
    r.positivity /= n;
    r.decrease /= n;
    r.regulator /= n;
    r.origin = v(&vec![0.0; dim]).0.powi(2);
    if [r.positivity, r.decrease, r.origin, r.regulator].iter().all(|t| t.is_finite()) {
        Ok(r)
    } else {
        Err(TrainingError::NonFiniteRisk)
    }
}

fn check_shapes(net: &LyapunovNet, ctrl: &LinearController, system: &SystemSpec, ts: &TrainingSet) -> Result<(), TrainingError> {
    let n = system.n_states();
    if net.n_inputs() != n || ctrl.n_states() != n || ctrl.n_inputs() != system.n_inputs() || ts.dim() != n {
        return Err(TrainingError::DimensionMismatch { expected: n, got: ts.dim() });
    }
    Ok(())
}

pub fn empirical_risk(
    net: &LyapunovNet,
    ctrl: &LinearController,
    system: &SystemSpec,
    ts: &TrainingSet,
    cfg: &RiskConfig,
) -> Result<RiskBreakdown, TrainingError> {
    check_shapes(net, ctrl, system, ts)?;
    let tape = system.open_loop_tape();
    let eval_err = std::cell::Cell::new(None);
    let field = |x: &[f64]| {
        let mut scratch = Vec::new();
        match tape.eval_point_with(x, &ctrl.apply(x), &mut scratch) {
            Ok(f) => f,
            Err(e) => {
                eval_err.set(Some(e));
                vec![f64::NAN; x.len()]
            }
        }
    };
    let r = risk_of(|x| net.value_and_grad(x), field, ts.points(), cfg);
    match eval_err.into_inner() {
        Some(EvalError::NonFiniteResult) => Err(TrainingError::NonFiniteRisk),
        Some(e) => Err(e.into()),
        None => r,
    }
}

/// Gradient of the total risk with respect to network parameters and
/// controller gains.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskGradient {
    pub risk: RiskBreakdown,
    pub d_params: Vec<f64>,
    pub d_gain: Vec<f64>,
}

/// Reverse-mode gradient evaluator; keeps the compiled dynamics and the
/// graph allocation between steps.
pub struct RiskGradientEvaluator {
    dynamics: Tape,
    graph: Graph,
    scratch: Vec<Var>,
}

impl RiskGradientEvaluator {
    pub fn new(system: &SystemSpec) -> RiskGradientEvaluator {
        RiskGradientEvaluator { dynamics: system.open_loop_tape(), graph: Graph::new(), scratch: Vec::new() }
    }

    pub fn eval(
        &mut self,
        net: &LyapunovNet,
        ctrl: &LinearController,
        ts: &TrainingSet,
        cfg: &RiskConfig,
    ) -> Result<RiskGradient, TrainingError> {
        if ts.is_empty() {
            return Err(TrainingError::InvalidConfig("empty training set".into()));
        }
        let g = &mut self.graph;
        g.clear();
        let arch = net.arch();
        let (n_states, n_inputs) = (ctrl.n_states(), ctrl.n_inputs());
        let theta: Vec<Var> = net.params().iter().map(|&p| g.leaf(p)).collect();
        let gain: Vec<Var> = ctrl.gain().iter().map(|&k| g.leaf(k)).collect();
        let inv_n = 1.0 / ts.len() as f64;

        let mut pos_terms = Vec::with_capacity(ts.len());
        let mut dec_terms = Vec::with_capacity(ts.len());
        let mut reg_terms = Vec::new();
        for x in ts.points() {
            let xv: Vec<Var> = x.iter().map(|&c| g.constant(c)).collect();
            let (v, grad) = LyapunovNet::value_and_grad_in(arch, g, &theta, &xv);
            let u: Vec<Var> = (0..n_inputs)
                .map(|j| {
                    let terms: Vec<Var> = (0..n_states).map(|i| g.mul(gain[j * n_states + i], xv[i])).collect();
                    g.sum(&terms)
                })
                .collect();
            let f = self.dynamics.eval_in(g, &xv, &u, &mut self.scratch)?;
            let prods: Vec<Var> = grad.iter().zip(&f).map(|(&a, &b)| g.mul(a, b)).collect();
            let lie = g.sum(&prods);
            let s2 = norm_sq(x);
            let neg_v = g.neg(v);
            let pos_arg = g.add_const(neg_v, cfg.positivity_margin * s2);
            pos_terms.push(g.relu(pos_arg));
            let dec_arg = g.add_const(lie, cfg.decrease_margin * s2);
            dec_terms.push(g.relu(dec_arg));
            if cfg.roa_regulator_enabled {
                let scaled = g.scale(v, -cfg.roa_alpha);
                reg_terms.push(g.add_const(scaled, s2.sqrt()));
            }
        }
        let zero: Vec<Var> = (0..n_states).map(|_| g.constant(0.0)).collect();
        let (v0, _) = LyapunovNet::value_and_grad_in(arch, g, &theta, &zero);

        let pos_sum = g.sum(&pos_terms);
        let pos = g.scale(pos_sum, inv_n);
        let dec_sum = g.sum(&dec_terms);
        let dec = g.scale(dec_sum, inv_n);
        let origin = g.powi(v0, 2);
        let mut parts = vec![pos, dec, origin];
        let mut regulator = 0.0;
        if cfg.roa_regulator_enabled {
            let reg_sum = g.sum(&reg_terms);
            let reg = g.scale(reg_sum, inv_n);
            regulator = g.value(reg);
            parts.push(reg);
        }
        let total = g.sum(&parts);
        let risk = RiskBreakdown { positivity: g.value(pos), decrease: g.value(dec), origin: g.value(origin), regulator };
        if !g.value(total).is_finite() {
            return Err(TrainingError::NonFiniteRisk);
        }
        let adj = g.backward(total);
        let d_params: Vec<f64> = theta.iter().map(|v| adj[v.index()]).collect();
        let d_gain: Vec<f64> = gain.iter().map(|v| adj[v.index()]).collect();
        if d_params.iter().chain(&d_gain).any(|d| !d.is_finite()) {
            return Err(TrainingError::NonFiniteRisk);
        }
        Ok(RiskGradient { risk, d_params, d_gain })
    }
}

pub fn risk_gradient(
    net: &LyapunovNet,
    ctrl: &LinearController,
    system: &SystemSpec,
    ts: &TrainingSet,
    cfg: &RiskConfig,
) -> Result<RiskGradient, TrainingError> {
    check_shapes(net, ctrl, system, ts)?;
    RiskGradientEvaluator::new(system).eval(net, ctrl, ts, cfg)
}

/// When the learner declares convergence: the hinge terms are at most
/// `threshold` and `V(0)^2` at most `origin_tolerance`, for `patience`
/// consecutive steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StopCriterion {
    pub threshold: f64,
    pub origin_tolerance: f64,
    pub patience: usize,
    pub max_iters: usize,
}

impl Default for StopCriterion {
    fn default() -> Self {
        StopCriterion { threshold: 0.0, origin_tolerance: 1e-6, patience: 10, max_iters: 2000 }
    }
}

impl StopCriterion {
    pub fn is_met(&self, r: &RiskBreakdown) -> bool {
        r.positivity + r.decrease <= self.threshold && r.origin <= self.origin_tolerance
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub iteration: usize,
    pub risk: f64,
    pub wall_time_s: f64,
}

/// Per-step risk history; iterations count across every `learn` call that
/// shares the log.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub rows: Vec<LogRow>,
    #[serde(skip)]
    elapsed_s: f64,
}

impl TrainingLog {
    pub fn new() -> TrainingLog {
        TrainingLog::default()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for row in &self.rows {
            out.serialize(row)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> csv::Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

#[derive(Debug, Clone)]
pub struct LearnOutcome {
    pub net: LyapunovNet,
    pub ctrl: LinearController,
    pub iterations: usize,
    pub wall_time_s: f64,
    pub final_risk: RiskBreakdown,
    /// False when `max_iters` was reached first.
    pub converged: bool,
}

/// Full-batch gradient descent on network parameters and controller gains
/// together, at a fixed learning rate.
pub fn learn(
    net: &LyapunovNet,
    ctrl: &LinearController,
    system: &SystemSpec,
    ts: &TrainingSet,
    cfg: &RiskConfig,
    stop: &StopCriterion,
    log: &mut TrainingLog,
) -> Result<LearnOutcome, TrainingError> {
    cfg.validate()?;
    check_shapes(net, ctrl, system, ts)?;
    let start = Instant::now();
    let mut params = net.params().to_vec();
    let mut gain = ctrl.gain().to_vec();
    let mut evaluator = RiskGradientEvaluator::new(system);
    let mut cur_net = net.clone();
    let mut cur_ctrl = ctrl.clone();
    let mut streak = 0;
    let mut iterations = 0;
    let mut converged = false;
    let mut last_risk = None;
    while iterations < stop.max_iters {
        let grad = evaluator.eval(&cur_net, &cur_ctrl, ts, cfg)?;
        iterations += 1;
        log.rows.push(LogRow {
            iteration: log.rows.len(),
            risk: grad.risk.total(),
            wall_time_s: log.elapsed_s + start.elapsed().as_secs_f64(),
        });
        last_risk = Some(grad.risk);
        streak = if stop.is_met(&grad.risk) { streak + 1 } else { 0 };
        if streak >= stop.patience.max(1) {
            converged = true;
            break;
        }
        for (p, d) in params.iter_mut().zip(&grad.d_params) {
            *p -= cfg.learning_rate * d;
        }
        for (k, d) in gain.iter_mut().zip(&grad.d_gain) {
            *k -= cfg.learning_rate * d;
        }
        cur_net = cur_net.with_params(params.clone())?;
        cur_ctrl = LinearController::new(ctrl.n_inputs(), ctrl.n_states(), gain.clone())
            .map_err(|_| TrainingError::NonFiniteRisk)?;
        last_risk = None;
    }
    let final_risk = match last_risk {
        Some(r) => r,
        None => empirical_risk(&cur_net, &cur_ctrl, system, ts, cfg)?,
    };
    let wall_time_s = start.elapsed().as_secs_f64();
    log.elapsed_s += wall_time_s;
    Ok(LearnOutcome { net: cur_net, ctrl: cur_ctrl, iterations, wall_time_s, final_risk, converged })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Expr;
    use crate::network::Architecture;

    fn decay_system(n: usize) -> SystemSpec {
        let dynamics = (0..n).map(|i| -Expr::var(i) + Expr::input(0) * 0.0).collect();
        SystemSpec::new("decay", n, 1, dynamics, Domain::ball(2.0)).unwrap()
    }

    fn pendulum_like() -> SystemSpec {
        let x0 = Expr::var(0);
        let x1 = Expr::var(1);
        let dyn1 = x0.sin() * 9.81 - &x1 * 0.1 + Expr::input(0);
        SystemSpec::new("p", 2, 1, vec![x1, dyn1], Domain::ball(6.0)).unwrap()
    }

    #[test]
    fn sampling_respects_domain_and_seed() {
        let d = Domain::ball(6.0);
        let a = sample_states(500, 2, &d, 7).unwrap();
        assert_eq!(a.len(), 500);
        assert!(a.points().iter().all(|x| norm_sq(x).sqrt() <= 6.0));
        assert_eq!(a, sample_states(500, 2, &d, 7).unwrap());
        assert_ne!(a, sample_states(500, 2, &d, 8).unwrap());
        assert_eq!(sample_states(1, 2, &d, 0).unwrap().len(), 1);
        assert!(sample_states(0, 2, &d, 0).is_err());
    }

    #[test]
    fn push_rejects_points_outside() {
        let d = Domain::ball(1.0);
        let mut ts = TrainingSet::new(2);
        assert!(ts.push(vec![0.5, 0.5], Provenance::Counterexample, &d).is_ok());
        assert!(matches!(ts.push(vec![1.0, 1.0], Provenance::Counterexample, &d), Err(TrainingError::OutOfDomain(_))));
        assert_eq!(ts.n_counterexamples(), 1);
    }

    #[test]
    fn zero_network_has_zero_risk() {
        let sys = pendulum_like();
        let net = LyapunovNet::zeros(Architecture::default_for(2));
        let ts = sample_states(50, sys.n_states(), &sys.domain, 1).unwrap();
        let r = empirical_risk(&net, &LinearController::zeros(1, 2), &sys, &ts, &RiskConfig::default()).unwrap();
        assert_eq!(r.total(), 0.0);
    }

    #[test]
    fn quadratic_for_stable_linear_system_is_a_global_minimiser() {
        let ts = sample_states(200, 2, &Domain::ball(3.0), 3).unwrap();
        let mut points = ts.points().to_vec();
        points.push(vec![0.0]);
        let pts: Vec<Vec<f64>> = points.iter().map(|p| vec![p[0]]).collect();
        let r = risk_of(|x| (x[0] * x[0], vec![2.0 * x[0]]), |x| vec![-x[0]], &pts, &RiskConfig::default()).unwrap();
        assert_eq!(r.total(), 0.0);
    }

    #[test]
    fn negated_candidate_pays_positivity_hinge() {
        let r = risk_of(|x| (-x[0] * x[0], vec![-2.0 * x[0]]), |x| vec![-x[0]], &[vec![1.0]], &RiskConfig::default())
            .unwrap();
        assert_eq!(r.positivity, 1.0);
        // LieV = (-2x)(-x) = 2 at x = 1.
        assert_eq!(r.decrease, 2.0);
    }

    fn finite_difference_check(cfg: &RiskConfig, seed: u64) {
        let sys = pendulum_like();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let arch = Architecture { n_inputs: 2, hidden: vec![4], output_tanh: seed % 2 == 0 };
        let net = LyapunovNet::random(arch, &mut rng);
        let ctrl = LinearController::new(1, 2, vec![rng.gen_range(-3.0..0.0), rng.gen_range(-3.0..0.0)]).unwrap();
        let ts = sample_states(10, 2, &Domain::ball(2.0), seed).unwrap();
        let grad = risk_gradient(&net, &ctrl, &sys, &ts, cfg).unwrap();
        let risk_at = |n: &LyapunovNet, c: &LinearController| empirical_risk(n, c, &sys, &ts, cfg).unwrap();
        let pattern = |n: &LyapunovNet, c: &LinearController| -> Vec<(bool, bool)> {
            let mut ev = crate::network::LieEvaluator::new(n, &sys, c).unwrap();
            ts.points()
                .iter()
                .map(|x| {
                    let (v, l) = ev.eval(x).unwrap();
                    let s2 = norm_sq(x);
                    (cfg.positivity_margin * s2 - v > 0.0, l + cfg.decrease_margin * s2 > 0.0)
                })
                .collect()
        };
        let h = 1e-5;
        let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(1e-4);
        let mut checked = 0;
        for i in 0..net.params().len() {
            let mut p = net.params().to_vec();
            p[i] += h;
            let plus = net.with_params(p.clone()).unwrap();
            p[i] -= 2.0 * h;
            let minus = net.with_params(p).unwrap();
            if pattern(&plus, &ctrl) != pattern(&minus, &ctrl) {
                continue;
            }
            let fd = (risk_at(&plus, &ctrl).total() - risk_at(&minus, &ctrl).total()) / (2.0 * h);
            assert!(rel(fd, grad.d_params[i]) <= 1e-5, "param {i}: fd {fd} ad {}", grad.d_params[i]);
            checked += 1;
        }
        for j in 0..2 {
            let mut k = ctrl.gain().to_vec();
            k[j] += h;
            let plus = LinearController::new(1, 2, k.clone()).unwrap();
            k[j] -= 2.0 * h;
            let minus = LinearController::new(1, 2, k).unwrap();
            if pattern(&net, &plus) != pattern(&net, &minus) {
                continue;
            }
            let fd = (risk_at(&net, &plus).total() - risk_at(&net, &minus).total()) / (2.0 * h);
            assert!(rel(fd, grad.d_gain[j]) <= 1e-5, "gain {j}: fd {fd} ad {}", grad.d_gain[j]);
            checked += 1;
        }
        assert!(checked > 10);
    }

    #[test]
    fn gradient_matches_central_differences() {
        for seed in 0..4 {
            finite_difference_check(&RiskConfig::default(), seed);
            let cfg = RiskConfig {
                roa_regulator_enabled: true,
                roa_alpha: 0.3,
                positivity_margin: 0.05,
                decrease_margin: 0.1,
                ..Default::default()
            };
            finite_difference_check(&cfg, seed + 10);
        }
    }

    /// `V = 2 tanh(1) - tanh(1 + x) - tanh(1 - x)`: zero at 0, increasing in |x|.
    fn bowl() -> LyapunovNet {
        let arch = Architecture { n_inputs: 1, hidden: vec![2], output_tanh: false };
        LyapunovNet::from_params(arch, vec![1.0, -1.0, 1.0, 1.0, -1.0, -1.0, 2.0 * 1f64.tanh()]).unwrap()
    }

    #[test]
    fn inactive_hinges_leave_only_origin_and_regulator() {
        let sys = decay_system(1);
        let mut ts = TrainingSet::new(1);
        for p in [0.5, -1.0, 1.5] {
            ts.push(vec![p], Provenance::InitialSample, &sys.domain).unwrap();
        }
        let ctrl = LinearController::zeros(1, 1);
        let g = risk_gradient(&bowl(), &ctrl, &sys, &ts, &RiskConfig::default()).unwrap();
        assert_eq!(g.risk.total(), 0.0);
        assert!(g.d_params.iter().all(|&d| d == 0.0));

        let cfg = RiskConfig { roa_regulator_enabled: true, roa_alpha: 0.0, ..Default::default() };
        let g = risk_gradient(&bowl(), &ctrl, &sys, &ts, &cfg).unwrap();
        assert!(g.d_params.iter().all(|&d| d == 0.0));
        assert!((g.risk.regulator - 1.0).abs() < 1e-15);
    }

    #[test]
    fn learn_edge_cases() {
        let sys = decay_system(1);
        let sq = bowl();
        let ctrl = LinearController::zeros(1, 1);
        let ts = sample_states(20, sys.n_states(), &sys.domain, 4).unwrap();
        let cfg = RiskConfig::default();
        let mut log = TrainingLog::new();
        let out = learn(&sq, &ctrl, &sys, &ts, &cfg, &StopCriterion::default(), &mut log).unwrap();
        assert!(out.converged);
        assert_eq!(out.iterations, 10);
        assert_eq!(out.net.params(), sq.params());
        assert_eq!(log.rows.len(), 10);

        let stop = StopCriterion { max_iters: 0, ..Default::default() };
        let out = learn(&sq, &ctrl, &sys, &ts, &cfg, &stop, &mut log).unwrap();
        assert!(!out.converged);
        assert_eq!(out.iterations, 0);
        assert_eq!(out.net.params(), sq.params());
    }

    #[test]
    fn learning_reduces_risk_and_is_deterministic() {
        let sys = pendulum_like();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let net = LyapunovNet::random(Architecture::default_for(2), &mut rng);
        let ctrl = LinearController::new(1, 2, vec![-20.0, -6.0]).unwrap();
        let ts = sample_states(100, sys.n_states(), &sys.domain, 5).unwrap();
        let cfg = RiskConfig::default();
        let stop = StopCriterion { max_iters: 200, ..Default::default() };
        let before = empirical_risk(&net, &ctrl, &sys, &ts, &cfg).unwrap().total();
        let mut log = TrainingLog::new();
        let a = learn(&net, &ctrl, &sys, &ts, &cfg, &stop, &mut log).unwrap();
        let b = learn(&net, &ctrl, &sys, &ts, &cfg, &stop, &mut TrainingLog::new()).unwrap();
        assert!(a.final_risk.total() < before);
        assert_eq!(a.net.params(), b.net.params());
        assert_eq!(a.ctrl.gain(), b.ctrl.gain());
        let mut buf = Vec::new();
        log.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("iteration,risk,wall_time_s\n"));
        assert_eq!(text.lines().count(), 1 + a.iterations);
    }
}
