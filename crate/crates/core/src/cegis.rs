//! The learner/falsifier loop.
//!
//! Starting from the LQR gain and a random network, the loop trains on the
//! current sample set, asks the falsifier for a violating state, appends it
//! and retrains, until the falsifier proves every stage of the epsilon
//! schedule unsatisfiable.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bench::BenchmarkDef;
use crate::falsifier::{
    check_with_stats, lyapunov_problem, Budget, CounterexampleLog, CounterexampleRecord, FalsificationOutcome,
    FalsifierError,
};
use crate::lqr::{lqr_for_system, LqrError};
use crate::network::{Architecture, LinearController, LyapunovNet, NetworkError, NetworkParams};
use crate::system::{SystemError, SystemSpec};
use crate::training::{learn, sample_states, Provenance, RiskConfig, StopCriterion, TrainingError, TrainingLog};

#[derive(Debug, Error)]
pub enum CegisError {
    #[error("LQR initialisation failed: {0}")]
    LqrInitFailed(#[from] LqrError),
    #[error("invalid synthesis configuration: {0}")]
    InvalidConfig(String),
    /// The falsifier ran out of budget; the report holds the state reached.
    #[error("falsifier budget exhausted at CEGIS iteration {}", .report.n_cegis_iterations)]
    FalsifierBudget { report: Box<SynthesisReport>, source: FalsifierError },
    #[error(transparent)]
    Falsifier(#[from] FalsifierError),
    #[error(transparent)]
    Training(#[from] TrainingError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    System(#[from] SystemError),
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CegisError + '_ {
    move |source| CegisError::Io { path: path.to_path_buf(), source }
}

/// Everything `synthesize` needs besides the system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthesisConfig {
    pub hidden: Vec<usize>,
    pub output_tanh: bool,
    pub risk: RiskConfig,
    pub stop: StopCriterion,
    pub n_samples: usize,
    pub seed: u64,
    /// Verified in order; the last entry is the target.
    pub epsilon_schedule: Vec<f64>,
    /// Capped at `epsilon / 10` for each stage.
    pub delta: f64,
    pub max_cegis_iterations: usize,
    pub max_wall_time_s: f64,
    pub budget: Budget,
    /// Keep training from the current parameters after a counterexample;
    /// when false, every round restarts from the initial network and gain.
    pub continue_training: bool,
    pub lqr_q: Option<Vec<Vec<f64>>>,
    pub lqr_r: Option<Vec<Vec<f64>>>,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        SynthesisConfig {
            hidden: vec![6],
            output_tanh: false,
            risk: RiskConfig::default(),
            stop: StopCriterion::default(),
            n_samples: 500,
            seed: 0,
            epsilon_schedule: vec![0.25, 0.04],
            delta: 0.01,
            max_cegis_iterations: 100,
            max_wall_time_s: 7200.0,
            budget: Budget::default(),
            continue_training: true,
            lqr_q: None,
            lqr_r: None,
        }
    }
}

fn matrix(rows: &[Vec<f64>], n: usize, what: &str) -> Result<DMatrix<f64>, CegisError> {
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        return Err(CegisError::InvalidConfig(format!("{what} must be {n}x{n}")));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

impl SynthesisConfig {
    /// Defaults for a built-in benchmark: its sample count, an epsilon
    /// schedule ending at its target, and quadratic risk margins.
    pub fn for_benchmark(def: &BenchmarkDef) -> SynthesisConfig {
        let first = 0.25f64.max(def.target_epsilon);
        let schedule = if first > def.target_epsilon { vec![first, def.target_epsilon] } else { vec![first] };
        SynthesisConfig {
            n_samples: def.n_samples,
            epsilon_schedule: schedule,
            risk: RiskConfig { positivity_margin: 0.1, decrease_margin: 0.1, ..Default::default() },
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), CegisError> {
        let bad = |m: String| Err(CegisError::InvalidConfig(m));
        if self.epsilon_schedule.is_empty() {
            return bad("epsilon schedule is empty".into());
        }
        for w in self.epsilon_schedule.windows(2) {
            if w[1] > w[0] {
                return bad(format!("epsilon schedule must be non-increasing, got {:?}", self.epsilon_schedule));
            }
        }
        if self.epsilon_schedule.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
            return bad("epsilon values must be positive".into());
        }
        let first = self.epsilon_schedule[0];
        if !(self.delta > 0.0 && self.delta <= first / 10.0) {
            return bad(format!("delta = {} must be positive and at most epsilon/10 = {}", self.delta, first / 10.0));
        }
        if self.n_samples == 0 {
            return bad("n_samples must be at least 1".into());
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad("hidden layer sizes must be positive".into());
        }
        if !(self.max_wall_time_s > 0.0) {
            return bad("max_wall_time_s must be positive".into());
        }
        self.risk.validate()?;
        Ok(())
    }

    /// The `delta` used at a given epsilon.
    pub fn delta_for(&self, epsilon: f64) -> f64 {
        self.delta.min(epsilon / 10.0)
    }

    fn weights(&self, system: &SystemSpec) -> Result<(Option<DMatrix<f64>>, Option<DMatrix<f64>>), CegisError> {
        let q = self.lqr_q.as_ref().map(|q| matrix(q, system.n_states(), "Q")).transpose()?;
        let r = self.lqr_r.as_ref().map(|r| matrix(r, system.n_inputs(), "R")).transpose()?;
        Ok((q, r))
    }
}

/// LQR gain in the `u = K x` convention.
pub fn lqr_controller(system: &SystemSpec, cfg: &SynthesisConfig) -> Result<LinearController, CegisError> {
    let (q, r) = cfg.weights(system)?;
    let (_, sol) = lqr_for_system(system, q.as_ref(), r.as_ref())?;
    Ok(sol.controller())
}

/// LQR baseline `x^T P x` for the configured weights.
pub fn lqr_baseline(system: &SystemSpec, cfg: &SynthesisConfig) -> Result<crate::lqr::LqrSolution, CegisError> {
    let (q, r) = cfg.weights(system)?;
    Ok(lqr_for_system(system, q.as_ref(), r.as_ref())?.1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum SynthesisOutcome {
    Certified { epsilon: f64 },
    /// Iteration or wall-clock cap reached.
    Exhausted,
    /// Training diverged (non-finite risk).
    LearnerStuck,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageResult {
    pub epsilon: f64,
    pub delta: f64,
    pub cegis_iteration: usize,
    pub boxes: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthesisReport {
    pub system: String,
    pub outcome: SynthesisOutcome,
    /// Set when the certificate only holds with `LieV < relaxation`.
    pub relaxation: Option<f64>,
    pub network: NetworkParams,
    pub controller: LinearController,
    pub initial_controller: LinearController,
    pub learning_time_s: f64,
    pub falsification_time_s: f64,
    pub total_time_s: f64,
    pub n_samples: usize,
    pub n_counterexamples: usize,
    pub n_cegis_iterations: usize,
    pub learner_iterations: usize,
    pub epsilon_schedule: Vec<f64>,
    pub certified_stages: Vec<StageResult>,
    #[serde(skip)]
    pub counterexamples: CounterexampleLog,
    #[serde(skip)]
    pub training_log: TrainingLog,
}

impl SynthesisReport {
    pub fn is_certified(&self) -> bool {
        matches!(self.outcome, SynthesisOutcome::Certified { .. })
    }

    pub fn net(&self) -> Result<LyapunovNet, NetworkError> {
        LyapunovNet::from_layer_params(&self.network)
    }

    pub fn checkpoint(&self, system: &SystemSpec) -> Checkpoint {
        let (epsilon, delta) = match self.certified_stages.last() {
            Some(s) if self.is_certified() => (Some(s.epsilon), Some(s.delta)),
            _ => (None, None),
        };
        Checkpoint {
            system: system.to_sexp_string(),
            network: self.network.clone(),
            controller: self.controller.clone(),
            epsilon,
            delta,
            relaxation: self.relaxation,
        }
    }

    /// Human-readable summary in `key: value` lines.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let outcome = match self.outcome {
            SynthesisOutcome::Certified { epsilon } => format!("certified (epsilon = {epsilon})"),
            SynthesisOutcome::Exhausted => "exhausted".into(),
            SynthesisOutcome::LearnerStuck => "learner stuck".into(),
        };
        let _ = writeln!(s, "system: {}", self.system);
        let _ = writeln!(s, "outcome: {outcome}");
        if let Some(r) = self.relaxation {
            let _ = writeln!(s, "relaxed: LieV < {r}");
        }
        let _ = writeln!(s, "epsilon_schedule: {:?}", self.epsilon_schedule);
        let _ = writeln!(s, "cegis_iterations: {}", self.n_cegis_iterations);
        let _ = writeln!(s, "learner_iterations: {}", self.learner_iterations);
        let _ = writeln!(s, "samples: {} ({} counterexamples)", self.n_samples, self.n_counterexamples);
        let _ = writeln!(s, "learning_time_s: {:.3}", self.learning_time_s);
        let _ = writeln!(s, "falsification_time_s: {:.3}", self.falsification_time_s);
        let _ = writeln!(s, "total_time_s: {:.3}", self.total_time_s);
        let _ = writeln!(s, "initial_gain: {:?}", self.initial_controller.gain());
        let _ = writeln!(s, "final_gain: {:?}", self.controller.gain());
        for st in &self.certified_stages {
            let _ = writeln!(
                s,
                "stage: epsilon = {} delta = {} unsat at iteration {} ({} boxes)",
                st.epsilon, st.delta, st.cegis_iteration, st.boxes
            );
        }
        s
    }
}

/// Self-contained network/controller pair with the system it was trained
/// on, stored as JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    /// The system in s-expression form.
    pub system: String,
    pub network: NetworkParams,
    pub controller: LinearController,
    pub epsilon: Option<f64>,
    pub delta: Option<f64>,
    pub relaxation: Option<f64>,
}

impl Checkpoint {
    pub fn load(path: &Path) -> Result<Checkpoint, CegisError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        serde_json::from_str(&text).map_err(|e| CegisError::Checkpoint(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<(), CegisError> {
        let text = serde_json::to_string_pretty(self).map_err(|e| CegisError::Checkpoint(e.to_string()))?;
        fs::write(path, text).map_err(io_err(path))
    }

    pub fn parts(&self) -> Result<(SystemSpec, LyapunovNet, LinearController), CegisError> {
        let system = SystemSpec::parse(&self.system)?;
        let net = LyapunovNet::from_layer_params(&self.network)?;
        if net.n_inputs() != system.n_states()
            || self.controller.n_states() != system.n_states()
            || self.controller.n_inputs() != system.n_inputs()
        {
            return Err(CegisError::Checkpoint("network, controller and system dimensions disagree".into()));
        }
        Ok((system, net, self.controller.clone()))
    }
}

/// Output directory of a synthesis run.
pub struct RunDir {
    root: PathBuf,
}

impl RunDir {
    pub fn create(root: &Path) -> Result<RunDir, CegisError> {
        fs::create_dir_all(root.join("checkpoints")).map_err(io_err(root))?;
        Ok(RunDir { root: root.to_path_buf() })
    }

    pub fn path(&self) -> &Path {
        &self.root
    }

    fn checkpoint_path(&self, iteration: usize) -> PathBuf {
        self.root.join("checkpoints").join(format!("iter_{iteration:04}.json"))
    }

    pub fn final_checkpoint_path(&self) -> PathBuf {
        self.root.join("checkpoint.json")
    }

    pub fn write_config<T: Serialize>(&self, config: &T) -> Result<(), CegisError> {
        let path = self.root.join("config.json");
        let text = serde_json::to_string_pretty(config).map_err(|e| CegisError::InvalidConfig(e.to_string()))?;
        fs::write(&path, text).map_err(io_err(&path))
    }

    fn write_report(&self, report: &SynthesisReport, system: &SystemSpec) -> Result<(), CegisError> {
        let path = self.root.join("report.txt");
        fs::write(&path, report.to_text()).map_err(io_err(&path))?;
        let path = self.root.join("report.json");
        let json = serde_json::to_string_pretty(report).map_err(|e| CegisError::Checkpoint(e.to_string()))?;
        fs::write(&path, json).map_err(io_err(&path))?;
        let path = self.root.join("counterexamples.csv");
        report.counterexamples.save_csv(system.n_states(), &path).map_err(|e| csv_err(&path, e))?;
        let path = self.root.join("training_log.csv");
        report.training_log.save_csv(&path).map_err(|e| csv_err(&path, e))?;
        report.checkpoint(system).save(&self.final_checkpoint_path())
    }
}

fn csv_err(path: &Path, e: csv::Error) -> CegisError {
    CegisError::Io { path: path.to_path_buf(), source: std::io::Error::other(e.to_string()) }
}

fn initial_net(system: &SystemSpec, cfg: &SynthesisConfig) -> LyapunovNet {
    let arch = Architecture { n_inputs: system.n_states(), hidden: cfg.hidden.clone(), output_tanh: cfg.output_tanh };
    LyapunovNet::random(arch, &mut ChaCha8Rng::seed_from_u64(cfg.seed))
}

/// Runs the CEGIS loop. When `run_dir` is given, per-iteration
/// checkpoints, logs and the final report are written there.
pub fn synthesize(
    system: &SystemSpec,
    cfg: &SynthesisConfig,
    run_dir: Option<&RunDir>,
) -> Result<SynthesisReport, CegisError> {
    cfg.validate()?;
    let start = Instant::now();
    let wall_cap = Duration::from_secs_f64(cfg.max_wall_time_s);
    let init_ctrl = lqr_controller(system, cfg)?;
    let init_net = initial_net(system, cfg);
    let mut net = init_net.clone();
    let mut ctrl = init_ctrl.clone();
    let mut ts = sample_states(cfg.n_samples, system.n_states(), &system.domain, cfg.seed.wrapping_add(1))?;
    let mut report = SynthesisReport {
        system: system.name.clone(),
        outcome: SynthesisOutcome::Exhausted,
        relaxation: None,
        network: net.to_layer_params(),
        controller: ctrl.clone(),
        initial_controller: init_ctrl.clone(),
        learning_time_s: 0.0,
        falsification_time_s: 0.0,
        total_time_s: 0.0,
        n_samples: ts.len(),
        n_counterexamples: 0,
        n_cegis_iterations: 0,
        learner_iterations: 0,
        epsilon_schedule: cfg.epsilon_schedule.clone(),
        certified_stages: Vec::new(),
        counterexamples: CounterexampleLog::default(),
        training_log: TrainingLog::new(),
    };
    let mut stage = 0;

    let finish = |mut report: SynthesisReport, outcome, net: &LyapunovNet, ctrl: &LinearController| {
        report.outcome = outcome;
        report.network = net.to_layer_params();
        report.controller = ctrl.clone();
        report.total_time_s = start.elapsed().as_secs_f64();
        if let Some(dir) = run_dir {
            dir.write_report(&report, system)?;
        }
        Ok(report)
    };

    loop {
        if report.n_cegis_iterations >= cfg.max_cegis_iterations || start.elapsed() >= wall_cap {
            return finish(report, SynthesisOutcome::Exhausted, &net, &ctrl);
        }
        let iteration = report.n_cegis_iterations + 1;
        let (from_net, from_ctrl) = if cfg.continue_training { (&net, &ctrl) } else { (&init_net, &init_ctrl) };
        let learned = match learn(from_net, from_ctrl, system, &ts, &cfg.risk, &cfg.stop, &mut report.training_log) {
            Ok(l) => l,
            Err(TrainingError::NonFiniteRisk) => return finish(report, SynthesisOutcome::LearnerStuck, &net, &ctrl),
            Err(e) => return Err(e.into()),
        };
        report.learning_time_s += learned.wall_time_s;
        report.learner_iterations += learned.iterations;
        report.n_cegis_iterations = iteration;
        net = learned.net;
        ctrl = learned.ctrl;
        if let Some(dir) = run_dir {
            let ck = Checkpoint {
                system: system.to_sexp_string(),
                network: net.to_layer_params(),
                controller: ctrl.clone(),
                epsilon: None,
                delta: None,
                relaxation: None,
            };
            ck.save(&dir.checkpoint_path(iteration))?;
        }

        // Verify down the schedule from the current stage. Stages already
        // passed are implied: a smaller epsilon only enlarges the region.
        let mut witness = None;
        while stage < cfg.epsilon_schedule.len() {
            let eps = cfg.epsilon_schedule[stage];
            let delta = cfg.delta_for(eps);
            let problem = lyapunov_problem(&net, &ctrl, system, eps, delta)?;
            let remaining = wall_cap.saturating_sub(start.elapsed());
            let budget = Budget { max_time: cfg.budget.max_time.min(remaining), ..cfg.budget };
            let checked = check_with_stats(&problem, &budget);
            let (outcome, stats) = match checked {
                Ok(r) => r,
                Err(e @ FalsifierError::BudgetExhausted { .. }) => {
                    report.network = net.to_layer_params();
                    report.controller = ctrl.clone();
                    report.total_time_s = start.elapsed().as_secs_f64();
                    if let Some(dir) = run_dir {
                        dir.write_report(&report, system)?;
                    }
                    return Err(CegisError::FalsifierBudget { report: Box::new(report), source: e });
                }
                Err(e) => return Err(e.into()),
            };
            report.falsification_time_s += stats.elapsed_s;
            match outcome {
                FalsificationOutcome::Unsat => {
                    report.certified_stages.push(StageResult { epsilon: eps, delta, cegis_iteration: iteration, boxes: stats.boxes });
                    stage += 1;
                }
                FalsificationOutcome::DeltaSat(c) => {
                    witness = Some(c);
                    break;
                }
            }
        }
        match witness {
            None => {
                let eps = *cfg.epsilon_schedule.last().expect("validated non-empty");
                return finish(report, SynthesisOutcome::Certified { epsilon: eps }, &net, &ctrl);
            }
            Some(c) => {
                report.counterexamples.records.push(CounterexampleRecord {
                    cegis_iteration: iteration,
                    witness: c.witness.clone(),
                    violated: c.violated,
                });
                ts.push(c.witness, Provenance::Counterexample, &system.domain)?;
                report.n_samples = ts.len();
                report.n_counterexamples = ts.n_counterexamples();
            }
        }
    }
}

/// Re-verifies the final pair of `report` with the decrease condition
/// weakened to `LieV < relaxation`; a success is tagged as relaxed.
pub fn relax_and_retry(
    report: &SynthesisReport,
    system: &SystemSpec,
    cfg: &SynthesisConfig,
    relaxation: f64,
) -> Result<SynthesisReport, CegisError> {
    cfg.validate()?;
    let net = report.net()?;
    let start = Instant::now();
    let mut out = report.clone();
    out.certified_stages.clear();
    for &eps in &cfg.epsilon_schedule {
        let delta = cfg.delta_for(eps);
        let problem = lyapunov_problem(&net, &report.controller, system, eps, delta)?.with_relaxation(relaxation)?;
        let (outcome, stats) = check_with_stats(&problem, &cfg.budget)?;
        out.falsification_time_s += stats.elapsed_s;
        if !outcome.is_unsat() {
            out.total_time_s += start.elapsed().as_secs_f64();
            return Ok(out);
        }
        out.certified_stages.push(StageResult { epsilon: eps, delta, cegis_iteration: report.n_cegis_iterations, boxes: stats.boxes });
    }
    out.outcome = SynthesisOutcome::Certified { epsilon: *cfg.epsilon_schedule.last().expect("validated non-empty") };
    out.relaxation = (relaxation > 0.0).then_some(relaxation);
    out.total_time_s += start.elapsed().as_secs_f64();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Expr;
    use crate::falsifier::verify_lyapunov;
    use crate::system::Domain;

    fn damped() -> SystemSpec {
        // x0' = x1, x1' = -x0 - x1 + sin(x0)/2 + u
        let (x0, x1) = (Expr::var(0), Expr::var(1));
        let acc = -&x0 - x1.clone() + x0.sin() * 0.5 + Expr::input(0);
        SystemSpec::new("damped", 2, 1, vec![x1, acc], Domain::ball(1.0)).unwrap()
    }

    fn quick_config() -> SynthesisConfig {
        SynthesisConfig {
            n_samples: 100,
            epsilon_schedule: vec![0.1, 0.04],
            delta: 0.004,
            stop: StopCriterion { max_iters: 300, ..Default::default() },
            risk: RiskConfig { positivity_margin: 0.01, decrease_margin: 0.01, ..Default::default() },
            max_cegis_iterations: 30,
            ..Default::default()
        }
    }

    #[test]
    fn zero_iteration_cap_is_exhausted() {
        let cfg = SynthesisConfig { max_cegis_iterations: 0, ..quick_config() };
        let report = synthesize(&damped(), &cfg, None).unwrap();
        assert_eq!(report.outcome, SynthesisOutcome::Exhausted);
        assert_eq!(report.n_cegis_iterations, 0);
        assert_eq!(report.n_samples, 100);
        assert!(report.to_text().contains("outcome: exhausted"));
    }

    #[test]
    fn config_validation() {
        let cfg = SynthesisConfig { delta: 0.5, ..quick_config() };
        assert!(matches!(cfg.validate(), Err(CegisError::InvalidConfig(_))));
        let cfg = SynthesisConfig { epsilon_schedule: vec![0.04, 0.25], ..quick_config() };
        assert!(cfg.validate().is_err());
        let cfg = SynthesisConfig::default();
        assert!(cfg.validate().is_ok());
        assert_eq!(cfg.delta_for(0.04), 0.004);
        assert_eq!(cfg.delta_for(0.25), 0.01);
    }

    #[test]
    fn certifies_a_mildly_nonlinear_plant_and_writes_a_run_dir() {
        let sys = damped();
        let tmp = tempfile::tempdir().unwrap();
        let dir = RunDir::create(tmp.path()).unwrap();
        let report = synthesize(&sys, &quick_config(), Some(&dir)).unwrap();
        assert_eq!(report.outcome, SynthesisOutcome::Certified { epsilon: 0.04 });
        // The certificate stands on its own.
        let (sys2, net, ctrl) = Checkpoint::load(&dir.final_checkpoint_path()).unwrap().parts().unwrap();
        let out = verify_lyapunov(&net, &ctrl, &sys2, 0.04, 0.004, &Budget::default()).unwrap();
        assert!(out.is_unsat());
        for name in ["report.txt", "report.json", "counterexamples.csv", "training_log.csv", "checkpoint.json"] {
            assert!(tmp.path().join(name).exists(), "{name}");
        }
        assert!(tmp.path().join("checkpoints/iter_0001.json").exists());
        assert_eq!(report.n_samples, 100 + report.n_counterexamples);
    }

    #[test]
    fn relaxation_zero_matches_plain_verification() {
        let sys = damped();
        let cfg = SynthesisConfig { max_cegis_iterations: 0, ..quick_config() };
        let report = synthesize(&sys, &cfg, None).unwrap();
        let retried = relax_and_retry(&report, &sys, &cfg, 0.0).unwrap();
        let direct = verify_lyapunov(&report.net().unwrap(), &report.controller, &sys, 0.1, 0.004, &Budget::default()).unwrap();
        assert_eq!(retried.is_certified(), direct.is_unsat() && {
            let d2 = verify_lyapunov(&report.net().unwrap(), &report.controller, &sys, 0.04, 0.004, &Budget::default());
            d2.unwrap().is_unsat()
        });
        assert_eq!(retried.relaxation, None);
    }
}
