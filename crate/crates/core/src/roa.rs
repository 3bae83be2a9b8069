//! Regions of attraction: certified sublevel sets, their volume, and
//! closed-loop simulation.

use std::io::Write;
use std::path::Path;

use rand::distributions::Uniform;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{EvalError, Expr, Interval, StateBox, Tape};
use crate::falsifier::{check, search, BoxPredicate, Budget, FalsificationProblem, FalsifierError};
use crate::network::{LinearController, NetworkError};
use crate::system::{Domain, SystemError, SystemSpec};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RoaError {
    #[error("no level above {floor:e} could be certified (last tried {last_tried:e})")]
    CannotCertify { floor: f64, last_tried: f64 },
    #[error("state became non-finite at t = {t}")]
    NonFiniteState { t: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Falsifier(#[from] FalsifierError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    System(#[from] SystemError),
    #[error(transparent)]
    Network(#[from] NetworkError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoaMethod {
    Certified,
    Sampled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoaCertificate {
    pub beta: f64,
    /// Minimum of `V` over the sampled boundary sphere.
    pub sampled_beta: f64,
    pub radius: f64,
    pub method: RoaMethod,
    pub volume: Option<VolumeEstimate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LevelConfig {
    /// Relative shrink applied to the sampled boundary minimum.
    pub margin: f64,
    /// Shell half-thickness on `|x|^2`, relative to the radius.
    pub boundary_tol: f64,
    pub n_boundary_samples: usize,
    /// Point-check slack of the shell search.
    pub delta: f64,
    /// Certification gives up once the bisection falls below this level.
    pub floor: f64,
    pub seed: u64,
    pub budget: Budget,
}

impl Default for LevelConfig {
    fn default() -> Self {
        LevelConfig {
            margin: 1e-3,
            boundary_tol: 1e-3,
            n_boundary_samples: 20_000,
            delta: 1e-6,
            floor: 1e-9,
            seed: 0,
            budget: Budget { max_boxes: 2_000_000, ..Default::default() },
        }
    }
}

/// Uniform samples on the sphere of radius `r` in `n` dimensions.
pub fn sphere_samples(n: usize, r: f64, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| loop {
            let g: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
            let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 1e-12 {
                break g.into_iter().map(|v| r * v / norm).collect();
            }
        })
        .collect()
}

struct ShellPredicate {
    tape: Tape,
    beta: f64,
    r2: f64,
    tol: f64,
    delta: f64,
    scratch: Vec<Interval>,
    pscratch: Vec<f64>,
}

impl BoxPredicate for ShellPredicate {
    type Witness = f64;

    fn excludes(&mut self, b: &StateBox) -> bool {
        let n2 = b.norm_sq();
        if n2.hi < self.r2 - self.tol || n2.lo > self.r2 + self.tol {
            return true;
        }
        match self.tape.eval_interval_with(b, &mut self.scratch) {
            Ok(out) => out[0].lo > self.beta,
            Err(_) => false,
        }
    }

    fn witness(&mut self, x: &[f64]) -> Option<f64> {
        let n2: f64 = x.iter().map(|v| v * v).sum();
        if (n2 - self.r2).abs() > self.tol + self.delta {
            return None;
        }
        let v = self.tape.eval_point_with(x, &[], &mut self.pscratch).ok()?[0];
        (v <= self.beta + self.delta).then_some(v)
    }
}

/// Proves that no point of the shell `| |x|^2 - r^2 | <= tol` has
/// `V <= beta`.
pub fn certify_level(v: &Expr, n: usize, radius: f64, beta: f64, cfg: &LevelConfig) -> Result<bool, RoaError> {
    let mut pred = ShellPredicate {
        tape: Tape::compile(std::slice::from_ref(v)),
        beta,
        r2: radius * radius,
        tol: cfg.boundary_tol * radius,
        delta: cfg.delta,
        scratch: Vec::new(),
        pscratch: Vec::new(),
    };
    let outer = (pred.r2 + pred.tol + cfg.delta).sqrt() * (1.0 + 1e-9);
    let root = StateBox::cube(n, outer);
    let (found, _) = search(&mut pred, root, (cfg.delta / 4.0).max(radius * 1e-9), &cfg.budget)?;
    Ok(found.is_none())
}

/// Largest certified `beta` with `{V <= beta}` inside the ball of
/// `radius`, starting from the sampled boundary minimum and bisecting down
/// on failure.
pub fn certified_level(v: &Expr, n: usize, radius: f64, cfg: &LevelConfig) -> Result<RoaCertificate, RoaError> {
    if !(radius.is_finite() && radius > 0.0) {
        return Err(RoaError::InvalidArgument(format!("radius must be positive, got {radius}")));
    }
    let tape = Tape::compile(std::slice::from_ref(v));
    let mut scratch = Vec::new();
    let mut sampled = f64::INFINITY;
    for x in sphere_samples(n, radius, cfg.n_boundary_samples.max(1), cfg.seed) {
        sampled = sampled.min(tape.eval_point_with(&x, &[], &mut scratch)?[0]);
    }
    let mut hi = (1.0 - cfg.margin) * sampled;
    if !(hi > cfg.floor) {
        return Err(RoaError::CannotCertify { floor: cfg.floor, last_tried: hi });
    }
    if certify_level(v, n, radius, hi, cfg)? {
        return Ok(RoaCertificate { beta: hi, sampled_beta: sampled, radius, method: RoaMethod::Certified, volume: None });
    }
    let mut lo = 0.0;
    let mut best = None;
    while hi - lo > 1e-3 * hi {
        let mid = 0.5 * (lo + hi);
        if mid < cfg.floor {
            break;
        }
        if certify_level(v, n, radius, mid, cfg)? {
            lo = mid;
            best = Some(mid);
        } else {
            hi = mid;
        }
    }
    match best {
        Some(beta) => Ok(RoaCertificate { beta, sampled_beta: sampled, radius, method: RoaMethod::Certified, volume: None }),
        None => Err(RoaError::CannotCertify { floor: cfg.floor, last_tried: hi }),
    }
}

/// Largest ball radius `r <= r_max` on which `v` passes the Lyapunov check,
/// found by bisection to `rel_tol * r_max`. Each radius is checked with
/// `eps = min(epsilon, r^2 / 100)` and `delta = eps / 10`; a run that hits
/// the budget counts as a failure. `None` when nothing above
/// `rel_tol * r_max` verifies.
pub fn largest_verified_radius(
    v: &Expr,
    lie_v: &Expr,
    n: usize,
    r_max: f64,
    epsilon: f64,
    budget: &Budget,
    rel_tol: f64,
) -> Result<Option<f64>, RoaError> {
    if !(r_max.is_finite() && r_max > 0.0 && rel_tol > 0.0 && rel_tol < 1.0) {
        return Err(RoaError::InvalidArgument(format!("need r_max > 0 and 0 < rel_tol < 1, got {r_max}, {rel_tol}")));
    }
    let verifies = |r: f64| -> Result<bool, RoaError> {
        let eps = epsilon.min(r * r / 100.0);
        let p = FalsificationProblem::new(v.clone(), lie_v.clone(), Domain::ball(r), n, eps, eps / 10.0)?;
        match check(&p, budget) {
            Ok(outcome) => Ok(outcome.is_unsat()),
            Err(FalsifierError::BudgetExhausted { .. } | FalsifierError::Inconclusive(_)) => Ok(false),
            Err(e) => Err(e.into()),
        }
    };
    if verifies(r_max)? {
        return Ok(Some(r_max));
    }
    let (mut lo, mut hi) = (0.0, r_max);
    while hi - lo > rel_tol * r_max {
        let mid = 0.5 * (lo + hi);
        if verifies(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((lo > 0.0).then_some(lo))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VolumeEstimate {
    pub volume: f64,
    pub std_error: f64,
    pub n_samples: usize,
}

/// Monte Carlo volume of `{x in D : V(x) <= beta}`.
pub fn region_volume(v: &Expr, beta: f64, domain: &Domain, n: usize, n_mc: usize, seed: u64) -> Result<VolumeEstimate, RoaError> {
    if n_mc < 10_000 {
        return Err(RoaError::InvalidArgument(format!("at least 10^4 Monte Carlo samples are required, got {n_mc}")));
    }
    let tape = Tape::compile(std::slice::from_ref(v));
    let bbox = domain.bounding_box(n);
    let dists: Vec<Uniform<f64>> = bbox.intervals().iter().map(|iv| Uniform::new_inclusive(iv.lo, iv.hi)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut scratch = Vec::new();
    let (mut drawn, mut inside) = (0usize, 0usize);
    let mut x = vec![0.0; n];
    while drawn < n_mc {
        for (xi, d) in x.iter_mut().zip(&dists) {
            *xi = d.sample(&mut rng);
        }
        if !domain.contains(&x) {
            continue;
        }
        drawn += 1;
        if tape.eval_point_with(&x, &[], &mut scratch)?[0] <= beta {
            inside += 1;
        }
    }
    let p = inside as f64 / n_mc as f64;
    let vol = domain.volume(n);
    Ok(VolumeEstimate { volume: p * vol, std_error: vol * (p * (1.0 - p) / n_mc as f64).sqrt(), n_samples: n_mc })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub dt: f64,
    pub states: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    pub fn final_state(&self) -> &[f64] {
        self.states.last().expect("trajectory has at least the initial state")
    }

    /// First sample index at which `inside` fails.
    pub fn exit_index(&self, inside: impl Fn(&[f64]) -> bool) -> Option<usize> {
        self.states.iter().position(|x| !inside(x))
    }

    pub fn converged(&self, tol: f64) -> bool {
        self.final_state().iter().map(|v| v * v).sum::<f64>().sqrt() <= tol
    }
}

/// Fixed-step RK4 integrator for a closed loop.
pub struct Simulator {
    tape: Tape,
    scratch: Vec<f64>,
}

impl Simulator {
    pub fn new(system: &SystemSpec, ctrl: &LinearController) -> Result<Simulator, RoaError> {
        Ok(Simulator::from_field(&system.closed_loop(ctrl)?))
    }

    pub fn from_field(field: &[Expr]) -> Simulator {
        Simulator { tape: Tape::compile(field), scratch: Vec::new() }
    }

    fn f(&mut self, x: &[f64]) -> Result<Vec<f64>, EvalError> {
        self.tape.eval_point_with(x, &[], &mut self.scratch)
    }

    pub fn run(&mut self, x0: &[f64], dt: f64, horizon: f64) -> Result<Trajectory, RoaError> {
        if !(dt > 0.0 && dt.is_finite() && horizon > 0.0 && horizon.is_finite()) {
            return Err(RoaError::InvalidArgument(format!("dt and T must be positive, got {dt} and {horizon}")));
        }
        let steps = (horizon / dt).round() as usize;
        let mut states = Vec::with_capacity(steps + 1);
        states.push(x0.to_vec());
        let mut x = x0.to_vec();
        let axpy = |x: &[f64], k: &[f64], h: f64| -> Vec<f64> { x.iter().zip(k).map(|(a, b)| a + h * b).collect() };
        for step in 0..steps {
            let t = (step + 1) as f64 * dt;
            let blowup = |_| RoaError::NonFiniteState { t };
            let k1 = self.f(&x).map_err(blowup)?;
            let k2 = self.f(&axpy(&x, &k1, dt / 2.0)).map_err(blowup)?;
            let k3 = self.f(&axpy(&x, &k2, dt / 2.0)).map_err(blowup)?;
            let k4 = self.f(&axpy(&x, &k3, dt)).map_err(blowup)?;
            for i in 0..x.len() {
                x[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
            if x.iter().any(|v| !v.is_finite()) {
                return Err(RoaError::NonFiniteState { t });
            }
            states.push(x.clone());
        }
        Ok(Trajectory { dt, states })
    }
}

pub fn simulate(system: &SystemSpec, ctrl: &LinearController, x0: &[f64], dt: f64, horizon: f64) -> Result<Trajectory, RoaError> {
    Simulator::new(system, ctrl)?.run(x0, dt, horizon)
}

/// Trajectories as CSV with columns `trajectory, t, x0, .., x{n-1}`.
pub fn write_trajectories_csv<W: Write>(trajs: &[Trajectory], w: W) -> csv::Result<()> {
    let n = trajs.first().map_or(0, |t| t.states[0].len());
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["trajectory".to_string(), "t".to_string()];
    header.extend((0..n).map(|i| format!("x{i}")));
    out.write_record(&header)?;
    for (id, traj) in trajs.iter().enumerate() {
        for (k, x) in traj.states.iter().enumerate() {
            let mut row = vec![id.to_string(), traj.time(k).to_string()];
            row.extend(x.iter().map(|v| v.to_string()));
            out.write_record(&row)?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn save_trajectories_csv(trajs: &[Trajectory], path: &Path) -> csv::Result<()> {
    write_trajectories_csv(trajs, std::fs::File::create(path)?)
}

/// `V` over a `grid_n x grid_n` grid on the `(x0, x1)` plane of the
/// domain's bounding box, other coordinates zero. Columns are
/// `x0, .., x{n-1}, v, in_region`.
pub fn write_roa_grid_csv<W: Write>(
    v: &Expr,
    beta: f64,
    domain: &Domain,
    n: usize,
    grid_n: usize,
    w: W,
) -> Result<(), RoaError> {
    let csv_err = |e: csv::Error| RoaError::InvalidArgument(format!("writing grid: {e}"));
    if n < 2 || grid_n < 2 {
        return Err(RoaError::InvalidArgument("the grid needs two state dimensions and at least 2 points per axis".into()));
    }
    let tape = Tape::compile(std::slice::from_ref(v));
    let bbox = domain.bounding_box(n);
    let mut out = csv::Writer::from_writer(w);
    let mut header: Vec<String> = (0..n).map(|i| format!("x{i}")).collect();
    header.push("v".into());
    header.push("in_region".into());
    out.write_record(&header).map_err(csv_err)?;
    let (a, b) = (bbox.get(0), bbox.get(1));
    let mut scratch = Vec::new();
    let mut x = vec![0.0; n];
    for i in 0..grid_n {
        for j in 0..grid_n {
            x[0] = a.lo + a.width() * i as f64 / (grid_n - 1) as f64;
            x[1] = b.lo + b.width() * j as f64 / (grid_n - 1) as f64;
            let val = tape.eval_point_with(&x, &[], &mut scratch)?[0];
            let inside = domain.contains(&x) && val <= beta;
            let mut row: Vec<String> = x.iter().map(|v| v.to_string()).collect();
            row.push(val.to_string());
            row.push(u8::from(inside).to_string());
            out.write_record(&row).map_err(csv_err)?;
        }
    }
    out.flush().map_err(|e| RoaError::InvalidArgument(format!("writing grid: {e}")))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::{pendulum, PendulumParams, ReferenceRegion};
    use crate::lqr::lqr_for_system;

    fn x(i: usize) -> Expr {
        Expr::var(i)
    }

    #[test]
    fn spherical_level() {
        let v = x(0).powi(2) + x(1).powi(2);
        let cert = certified_level(&v, 2, 6.0, &LevelConfig::default()).unwrap();
        assert!((cert.beta - 36.0 * (1.0 - 1e-3)).abs() < 1e-9);
        assert!(cert.beta <= cert.sampled_beta);
    }

    #[test]
    fn elliptic_level() {
        let v = x(0).powi(2) + x(1).powi(2) * 4.0;
        let cert = certified_level(&v, 2, 2.0, &LevelConfig::default()).unwrap();
        assert!((cert.sampled_beta - 4.0).abs() < 1e-3, "{}", cert.sampled_beta);
        assert!((cert.beta - 4.0 * (1.0 - 1e-3)).abs() < 5e-3);
        assert!(cert.beta <= cert.sampled_beta);
    }

    #[test]
    fn verified_radius_stops_at_the_cubic_boundary() {
        // x' = -x + x^3 with V = x^2 decreases exactly on |x| < 1.
        let v = x(0).powi(2);
        let lie = (x(0) * 2.0) * (x(0).powi(3) - x(0));
        let r = largest_verified_radius(&v, &lie, 1, 3.0, 0.04, &Budget::default(), 1e-3).unwrap().unwrap();
        assert!(r > 0.99 && r <= 1.0 + 3e-3, "{r}");
        let whole = largest_verified_radius(&v, &lie, 1, 0.5, 0.04, &Budget::default(), 1e-3).unwrap();
        assert_eq!(whole, Some(0.5));
        let growing = x(0).powi(2) * 2.0;
        assert_eq!(largest_verified_radius(&v, &growing, 1, 1.0, 0.04, &Budget::default(), 1e-2).unwrap(), None);
    }

    #[test]
    fn too_high_level_bisects_down() {
        // beta = 4.5 is above the true boundary minimum 4; bisection must
        // land below it.
        let v = x(0).powi(2) + x(1).powi(2) * 4.0;
        assert!(!certify_level(&v, 2, 2.0, 4.5, &LevelConfig::default()).unwrap());
        assert!(certify_level(&v, 2, 2.0, 3.9, &LevelConfig::default()).unwrap());
    }

    #[test]
    fn lqr_quadratic_level_matches_dense_sphere() {
        let sys = pendulum(&PendulumParams::default()).unwrap();
        let (_, sol) = lqr_for_system(&sys, None, None).unwrap();
        let v = sol.quadratic_expr();
        let cert = certified_level(&v, 2, 6.0, &LevelConfig::default()).unwrap();
        let tape = Tape::compile(std::slice::from_ref(&v));
        let dense = (0..200_000)
            .map(|k| {
                let a = k as f64 / 200_000.0 * std::f64::consts::TAU;
                tape.eval_point(&[6.0 * a.cos(), 6.0 * a.sin()]).unwrap()[0]
            })
            .fold(f64::INFINITY, f64::min);
        assert!((cert.beta - dense).abs() <= 0.01 * dense, "{} vs {dense}", cert.beta);
        assert!(cert.beta <= dense);
    }

    #[test]
    fn negative_candidate_cannot_be_certified() {
        let v = -(x(0).powi(2) + x(1).powi(2));
        assert!(matches!(certified_level(&v, 2, 1.0, &LevelConfig::default()), Err(RoaError::CannotCertify { .. })));
    }

    #[test]
    fn volumes() {
        let v = x(0).powi(2) + x(1).powi(2);
        let d = Domain::ball(2.0);
        let full = region_volume(&v, 4.0, &d, 2, 20_000, 1).unwrap();
        assert!((full.volume - 4.0 * std::f64::consts::PI).abs() < 1e-9);
        assert_eq!(region_volume(&v, 0.0, &d, 2, 20_000, 1).unwrap().volume, 0.0);
        assert!(region_volume(&v, 1.0, &d, 2, 10, 1).is_err());
    }

    #[test]
    fn published_lqr_ellipse_area() {
        let e = ReferenceRegion { label: "lqr".into(), diameters: [6.0, 0.1] };
        let v = (x(0) / 3.0).powi(2) + (x(1) / 0.05).powi(2);
        let est = region_volume(&v, 1.0, &Domain::ball(3.0), 2, 400_000, 9).unwrap();
        assert!((est.volume - e.area()).abs() <= 3.0 * est.std_error, "{est:?}");
    }

    #[test]
    fn rk4_matches_exponential_decay() {
        let mut sim = Simulator::from_field(&[-x(0)]);
        let traj = sim.run(&[1.0], 1e-3, 1.0).unwrap();
        assert_eq!(traj.states.len(), 1001);
        assert!((traj.final_state()[0] - (-1f64).exp()).abs() <= 1e-6);
        let mut err = |dt: f64| (sim.run(&[1.0], dt, 1.0).unwrap().final_state()[0] - (-1f64).exp()).abs();
        let ratio = err(0.1) / err(0.05);
        assert!((ratio - 16.0).abs() < 1.0, "{ratio}");
        let rest = sim.run(&[0.0], 1e-2, 1.0).unwrap();
        assert!(rest.states.iter().all(|s| s[0] == 0.0));
    }

    #[test]
    fn blow_up_is_reported() {
        let mut sim = Simulator::from_field(&[x(0).powi(2)]);
        assert!(matches!(sim.run(&[10.0], 0.1, 10.0), Err(RoaError::NonFiniteState { .. })));
    }

    #[test]
    fn csv_shapes() {
        let v = x(0).powi(2) + x(1).powi(2);
        let mut buf = Vec::new();
        write_roa_grid_csv(&v, 1.0, &Domain::ball(2.0), 2, 11, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + 121);
        assert!(text.starts_with("x0,x1,v,in_region\n"));

        let mut sim = Simulator::from_field(&[-x(0), -x(1)]);
        let trajs = vec![sim.run(&[1.0, 0.0], 0.5, 1.0).unwrap(), sim.run(&[0.0, 1.0], 0.5, 1.0).unwrap()];
        let mut buf = Vec::new();
        write_trajectories_csv(&trajs, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + 6);
        assert!(text.starts_with("trajectory,t,x0,x1\n0,0,1,0\n"));
    }
}
