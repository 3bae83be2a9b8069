//! Built-in benchmark systems.
//!
//! All models are textbook forms with every physical constant exposed:
//!
//! * `pendulum`: `θ'' = (g/ℓ) sin θ - b/(mℓ²) θ' + u/(mℓ²)`, upright at 0.
//! * `path_following`: kinematic bicycle in Frenet error coordinates
//!   `(d_e, θ_e)` around a circular path of curvature `κ` at speed `v`. The
//!   input is the path-curvature correction on top of the feedforward `κ`:
//!   `d_e' = v sin θ_e`, `θ_e' = v (κ + u) - v κ cos θ_e / (1 - κ d_e)`.
//! * `ducted_fan`: planar ducted fan (PVTOL) in hover, states
//!   `(x, y, θ, x', y', θ')`, body forces `u1` (lateral) and `mg + u2`
//!   (thrust): `m x'' = -d x' + u1 cos θ - (mg + u2) sin θ`,
//!   `m y'' = -d y' + u1 sin θ + (mg + u2) cos θ - mg`, `J θ'' = r u1`.
//! * `nlink(n)`: planar chain of `n` point-mass links balanced upright,
//!   absolute link angles from vertical, one generalised torque per link
//!   and viscous damping `b`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::Expr;
use crate::system::{Domain, SystemError, SystemSpec};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BenchError {
    #[error("unknown benchmark `{0}` (known: pendulum, path_following, ducted_fan, nlink(n))")]
    UnknownBenchmark(String),
    #[error("bad benchmark parameters: {0}")]
    BadParams(String),
    #[error("no reference regions are available for `{0}`")]
    NoReferenceData(String),
    #[error(transparent)]
    System(#[from] SystemError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PendulumParams {
    pub gravity: f64,
    pub mass: f64,
    pub length: f64,
    pub friction: f64,
}

impl Default for PendulumParams {
    fn default() -> Self {
        PendulumParams { gravity: 9.81, mass: 1.0, length: 1.0, friction: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PathFollowingParams {
    pub velocity: f64,
    /// Curvature of the reference path; 1 is the unit circle.
    pub curvature: f64,
}

impl Default for PathFollowingParams {
    fn default() -> Self {
        PathFollowingParams { velocity: 1.0, curvature: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DuctedFanParams {
    pub gravity: f64,
    pub mass: f64,
    pub inertia: f64,
    /// Moment arm of the lateral force.
    pub arm: f64,
    pub drag: f64,
}

impl Default for DuctedFanParams {
    fn default() -> Self {
        DuctedFanParams { gravity: 9.81, mass: 1.0, inertia: 1.0, arm: 1.0, drag: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NLinkParams {
    pub links: usize,
    pub gravity: f64,
    /// Per-link masses; a single entry is broadcast to every link.
    pub masses: Vec<f64>,
    pub lengths: Vec<f64>,
    pub damping: f64,
}

impl Default for NLinkParams {
    fn default() -> Self {
        NLinkParams { links: 2, gravity: 9.81, masses: vec![1.0], lengths: vec![1.0], damping: 0.1 }
    }
}

/// Which benchmark to build and with what constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum BenchmarkParams {
    Pendulum(PendulumParams),
    PathFollowing(PathFollowingParams),
    DuctedFan(DuctedFanParams),
    Nlink(NLinkParams),
}

impl BenchmarkParams {
    /// Default parameters for a benchmark name. `nlink(n)` selects the link
    /// count; bare `nlink` means two links.
    pub fn from_name(name: &str) -> Result<BenchmarkParams, BenchError> {
        let name = name.trim();
        match name {
            "pendulum" | "inverted_pendulum" => Ok(BenchmarkParams::Pendulum(Default::default())),
            "path_following" => Ok(BenchmarkParams::PathFollowing(Default::default())),
            "ducted_fan" => Ok(BenchmarkParams::DuctedFan(Default::default())),
            "nlink" => Ok(BenchmarkParams::Nlink(Default::default())),
            _ => {
                let links = name
                    .strip_prefix("nlink(")
                    .and_then(|rest| rest.strip_suffix(')'))
                    .ok_or_else(|| BenchError::UnknownBenchmark(name.to_string()))?;
                let links: usize = links
                    .trim()
                    .parse()
                    .map_err(|_| BenchError::BadParams(format!("link count `{links}` is not a non-negative integer")))?;
                Ok(BenchmarkParams::Nlink(NLinkParams { links, ..Default::default() }))
            }
        }
    }

    pub fn name(&self) -> String {
        match self {
            BenchmarkParams::Pendulum(_) => "pendulum".into(),
            BenchmarkParams::PathFollowing(_) => "path_following".into(),
            BenchmarkParams::DuctedFan(_) => "ducted_fan".into(),
            BenchmarkParams::Nlink(p) => format!("nlink({})", p.links),
        }
    }
}

/// A built benchmark with its default run settings.
#[derive(Debug, Clone)]
pub struct BenchmarkDef {
    pub name: String,
    pub system: SystemSpec,
    pub target_epsilon: f64,
    pub n_samples: usize,
}

pub const BENCHMARK_NAMES: [&str; 4] = ["pendulum", "path_following", "ducted_fan", "nlink(n)"];

pub fn build_named(name: &str) -> Result<BenchmarkDef, BenchError> {
    build(&BenchmarkParams::from_name(name)?)
}

pub fn build(params: &BenchmarkParams) -> Result<BenchmarkDef, BenchError> {
    let def = match params {
        BenchmarkParams::Pendulum(p) => BenchmarkDef {
            name: params.name(),
            system: pendulum(p)?,
            target_epsilon: 0.04,
            n_samples: 500,
        },
        BenchmarkParams::PathFollowing(p) => BenchmarkDef {
            name: params.name(),
            system: path_following(p)?,
            target_epsilon: 0.01,
            n_samples: 500,
        },
        BenchmarkParams::DuctedFan(p) => BenchmarkDef {
            name: params.name(),
            system: ducted_fan(p)?,
            target_epsilon: 0.01,
            n_samples: 1000,
        },
        BenchmarkParams::Nlink(p) => BenchmarkDef {
            name: params.name(),
            system: nlink(p)?,
            target_epsilon: 0.01,
            n_samples: 1000,
        },
    };
    let residual = def.system.equilibrium_residual()?;
    if residual > 1e-9 {
        return Err(BenchError::BadParams(format!("origin is not an equilibrium (|f(0)| = {residual:e})")));
    }
    Ok(def)
}

fn positive(what: &str, v: f64) -> Result<f64, BenchError> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(BenchError::BadParams(format!("{what} must be positive, got {v}")))
    }
}

fn non_negative(what: &str, v: f64) -> Result<f64, BenchError> {
    if v.is_finite() && v >= 0.0 {
        Ok(v)
    } else {
        Err(BenchError::BadParams(format!("{what} must be non-negative, got {v}")))
    }
}

fn c(v: f64) -> Expr {
    Expr::constant(v)
}

fn x(i: usize) -> Expr {
    Expr::var(i)
}

fn u(j: usize) -> Expr {
    Expr::input(j)
}

pub fn pendulum(p: &PendulumParams) -> Result<SystemSpec, BenchError> {
    let g = positive("gravity", p.gravity)?;
    let m = positive("mass", p.mass)?;
    let l = positive("length", p.length)?;
    let b = non_negative("friction", p.friction)?;
    let inertia = m * l * l;
    let accel = c(g / l) * x(0).sin() - c(b / inertia) * x(1) + c(1.0 / inertia) * u(0);
    Ok(SystemSpec::new("pendulum", 2, 1, vec![x(1), accel], Domain::ball(6.0))?)
}

pub fn path_following(p: &PathFollowingParams) -> Result<SystemSpec, BenchError> {
    let v = positive("velocity", p.velocity)?;
    let k = positive("curvature", p.curvature)?;
    // d_e' = v sin θ_e ; θ_e' = v (κ + u) - v κ cos θ_e / (1 - κ d_e)
    let d_dot = c(v) * x(1).sin();
    let path_rate = c(v * k) * x(1).cos() / (c(1.0) - c(k) * x(0));
    let theta_dot = c(v * k) + c(v) * u(0) - path_rate;
    Ok(SystemSpec::new("path_following", 2, 1, vec![d_dot, theta_dot], Domain::ball(0.8))?)
}

pub fn ducted_fan(p: &DuctedFanParams) -> Result<SystemSpec, BenchError> {
    let g = positive("gravity", p.gravity)?;
    let m = positive("mass", p.mass)?;
    let j = positive("inertia", p.inertia)?;
    let r = positive("arm", p.arm)?;
    let d = non_negative("drag", p.drag)?;
    let (th, cos, sin) = (x(2), x(2).cos(), x(2).sin());
    let _ = th;
    let thrust = c(m * g) + u(1);
    let xdd = (c(-d) * x(3) + u(0) * cos.clone() - thrust.clone() * sin.clone()) / c(m);
    let ydd = (c(-d) * x(4) + u(0) * sin + thrust * cos - c(m * g)) / c(m);
    let thdd = c(r / j) * u(0);
    Ok(SystemSpec::new(
        "ducted_fan",
        6,
        2,
        vec![x(3), x(4), x(5), xdd, ydd, thdd],
        Domain::ball(1.0),
    )?)
}

fn broadcast(what: &str, v: &[f64], n: usize) -> Result<Vec<f64>, BenchError> {
    let out = match v.len() {
        1 => vec![v[0]; n],
        len if len == n => v.to_vec(),
        len => return Err(BenchError::BadParams(format!("{len} {what} given for {n} links"))),
    };
    for &val in &out {
        positive(what, val)?;
    }
    Ok(out)
}

/// Mass matrix, velocity terms and gravity for the chain, in absolute angles.
pub(crate) struct ChainModel {
    pub n: usize,
    pub masses: Vec<f64>,
    pub lengths: Vec<f64>,
    pub gravity: f64,
    pub damping: f64,
}

impl ChainModel {
    fn from_params(p: &NLinkParams) -> Result<ChainModel, BenchError> {
        if p.links == 0 {
            return Err(BenchError::BadParams("nlink needs at least one link".into()));
        }
        Ok(ChainModel {
            n: p.links,
            masses: broadcast("masses", &p.masses, p.links)?,
            lengths: broadcast("lengths", &p.lengths, p.links)?,
            gravity: positive("gravity", p.gravity)?,
            damping: non_negative("damping", p.damping)?,
        })
    }

    /// Total mass carried beyond joint `max(i, j)`.
    fn tail_mass(&self, i: usize, j: usize) -> f64 {
        self.masses[i.max(j)..].iter().sum()
    }

    fn angle(&self, i: usize) -> Expr {
        x(i)
    }

    fn rate(&self, i: usize) -> Expr {
        x(self.n + i)
    }

    pub fn mass_matrix(&self) -> Vec<Vec<Expr>> {
        (0..self.n)
            .map(|i| {
                (0..self.n)
                    .map(|j| {
                        let k = self.tail_mass(i, j) * self.lengths[i] * self.lengths[j];
                        if i == j {
                            c(k)
                        } else {
                            c(k) * (self.angle(i) - self.angle(j)).cos()
                        }
                    })
                    .collect()
            })
            .collect()
    }

    /// Right-hand side `tau - b q' - C(q, q') + gravity torque`.
    fn forcing(&self) -> Vec<Expr> {
        (0..self.n)
            .map(|i| {
                let mut terms = vec![u(i), c(-self.damping) * self.rate(i)];
                for j in 0..self.n {
                    if j == i {
                        continue;
                    }
                    let k = self.tail_mass(i, j) * self.lengths[i] * self.lengths[j];
                    terms.push(c(-k) * (self.angle(i) - self.angle(j)).sin() * self.rate(j).powi(2));
                }
                let gk = self.gravity * self.lengths[i] * self.tail_mass(i, i);
                terms.push(c(gk) * self.angle(i).sin());
                Expr::sum(&terms)
            })
            .collect()
    }

    /// Total mechanical energy (kinetic plus potential).
    pub fn energy(&self) -> Expr {
        let m = self.mass_matrix();
        let mut kinetic = Vec::new();
        for i in 0..self.n {
            for j in 0..self.n {
                kinetic.push(c(0.5) * m[i][j].clone() * self.rate(i) * self.rate(j));
            }
        }
        let potential: Vec<Expr> = (0..self.n)
            .map(|i| c(self.gravity * self.lengths[i] * self.tail_mass(i, i)) * self.angle(i).cos())
            .collect();
        Expr::sum(&kinetic) + Expr::sum(&potential)
    }

    fn dynamics(&self) -> Vec<Expr> {
        let accel = solve_symbolic(self.mass_matrix(), self.forcing());
        (0..self.n).map(|i| self.rate(i)).chain(accel).collect()
    }
}

/// Solves `M a = rhs` by Gaussian elimination without pivoting; `M` must be
/// symmetric positive definite so the pivots never vanish.
fn solve_symbolic(mut m: Vec<Vec<Expr>>, mut rhs: Vec<Expr>) -> Vec<Expr> {
    let n = rhs.len();
    for k in 0..n {
        for i in k + 1..n {
            let factor = m[i][k].clone() / m[k][k].clone();
            for j in k..n {
                m[i][j] = m[i][j].clone() - factor.clone() * m[k][j].clone();
            }
            rhs[i] = rhs[i].clone() - factor * rhs[k].clone();
        }
    }
    let mut sol = vec![Expr::zero(); n];
    for i in (0..n).rev() {
        let mut acc = rhs[i].clone();
        for j in i + 1..n {
            acc = acc - m[i][j].clone() * sol[j].clone();
        }
        sol[i] = acc / m[i][i].clone();
    }
    sol
}

pub fn nlink(p: &NLinkParams) -> Result<SystemSpec, BenchError> {
    let model = ChainModel::from_params(p)?;
    let radius = if p.links <= 2 { 0.5 } else { 0.3 };
    Ok(SystemSpec::new(format!("nlink({})", p.links), 2 * p.links, p.links, model.dynamics(), Domain::ball(radius))?)
}

/// Energy function of the `nlink` chain, for consistency checks.
pub fn nlink_energy(p: &NLinkParams) -> Result<Expr, BenchError> {
    Ok(ChainModel::from_params(p)?.energy())
}

/// Axis-aligned ellipse centred at the origin, given by its full diameters
/// along `x_0` and `x_1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceRegion {
    pub label: String,
    pub diameters: [f64; 2],
}

impl ReferenceRegion {
    pub fn semi_axes(&self) -> [f64; 2] {
        [self.diameters[0] / 2.0, self.diameters[1] / 2.0]
    }

    pub fn area(&self) -> f64 {
        let [a, b] = self.semi_axes();
        PI * a * b
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.level(x) <= 1.0
    }

    /// `(x0/a)^2 + (x1/b)^2`; the boundary is level 1.
    pub fn level(&self, x: &[f64]) -> f64 {
        let [a, b] = self.semi_axes();
        (x[0] / a).powi(2) + (x[1] / b).powi(2)
    }
}

/// Published comparison regions. Only the pendulum has them: the SOS
/// estimate (diameters 1.75 x 1.2) and the LQR ellipse obtained when the
/// linearisation error is ignored (6 x 0.1). Orientation is not published;
/// both are taken with the long axis along the angle.
pub fn reference_regions(name: &str) -> Result<Vec<ReferenceRegion>, BenchError> {
    match name {
        "pendulum" | "inverted_pendulum" => Ok(vec![
            ReferenceRegion { label: "sos".into(), diameters: [1.75, 1.2] },
            ReferenceRegion { label: "lqr_linearized".into(), diameters: [6.0, 0.1] },
        ]),
        _ => Err(BenchError::NoReferenceData(name.to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Tape;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn dimensions() {
        let p = build_named("pendulum").unwrap();
        assert_eq!((p.system.n_states(), p.system.n_inputs()), (2, 1));
        assert_eq!(p.system.domain, Domain::ball(6.0));
        assert_eq!(p.target_epsilon, 0.04);
        let pf = build_named("path_following").unwrap();
        assert_eq!(pf.system.domain, Domain::ball(0.8));
        let fan = build_named("ducted_fan").unwrap();
        assert_eq!((fan.system.n_states(), fan.system.n_inputs()), (6, 2));
        let two = build_named("nlink(2)").unwrap();
        assert_eq!((two.system.n_states(), two.system.n_inputs()), (4, 2));
        assert_eq!(two.system.domain, Domain::ball(0.5));
        let three = build_named("nlink(3)").unwrap();
        assert_eq!(three.system.n_states(), 6);
    }

    #[test]
    fn errors() {
        assert!(matches!(build_named("nlink(0)"), Err(BenchError::BadParams(_))));
        assert!(matches!(build_named("cartpole"), Err(BenchError::UnknownBenchmark(_))));
        let bad = BenchmarkParams::Pendulum(PendulumParams { mass: 0.0, ..Default::default() });
        assert!(matches!(build(&bad), Err(BenchError::BadParams(_))));
        let bad = BenchmarkParams::Nlink(NLinkParams { lengths: vec![1.0, -1.0], ..Default::default() });
        assert!(matches!(build(&bad), Err(BenchError::BadParams(_))));
    }

    #[test]
    fn every_benchmark_is_at_equilibrium() {
        for name in ["pendulum", "path_following", "ducted_fan", "nlink(1)", "nlink(2)", "nlink(3)"] {
            let def = build_named(name).unwrap();
            assert!(def.system.equilibrium_residual().unwrap() <= 1e-9, "{name}");
        }
    }

    #[test]
    fn nlink_energy_balance() {
        // dE/dt = tau . q' - b |q'|^2 along the dynamics.
        for links in [1, 2, 3] {
            let params = NLinkParams {
                links,
                masses: vec![1.0, 0.7, 1.3][..links].to_vec(),
                lengths: vec![0.9, 1.1, 0.6][..links].to_vec(),
                ..Default::default()
            };
            let sys = nlink(&params).unwrap();
            let energy = nlink_energy(&params).unwrap();
            let grads: Vec<Expr> = (0..2 * links).map(|i| energy.differentiate(i)).collect();
            let grad_tape = Tape::compile(&grads);
            let dyn_tape = sys.open_loop_tape();
            let mut rng = ChaCha8Rng::seed_from_u64(links as u64);
            for _ in 0..10 {
                let xs: Vec<f64> = (0..2 * links).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let us: Vec<f64> = (0..links).map(|_| rng.gen_range(-2.0..2.0)).collect();
                let mut s = Vec::new();
                let f = dyn_tape.eval_point_with(&xs, &us, &mut s).unwrap();
                let g = grad_tape.eval_point(&xs).unwrap();
                let rate: f64 = g.iter().zip(&f).map(|(a, b)| a * b).sum();
                let qd = &xs[links..];
                let power: f64 = us.iter().zip(qd).map(|(t, w)| t * w).sum::<f64>()
                    - params.damping * qd.iter().map(|w| w * w).sum::<f64>();
                assert!((rate - power).abs() <= 1e-6 * (1.0 + power.abs()), "links {links}: {rate} vs {power}");
            }
        }
    }

    #[test]
    fn pendulum_matches_hand_formula() {
        let p = PendulumParams::default();
        let sys = pendulum(&p).unwrap();
        let f = sys.eval_open_loop(&[0.5, -1.0], &[2.0]).unwrap();
        let want = 9.81 * 0.5f64.sin() + 0.1 + 2.0;
        assert_eq!(f[0], -1.0);
        assert!((f[1] - want).abs() < 1e-14);
    }

    #[test]
    fn reference_ellipses() {
        let regions = reference_regions("pendulum").unwrap();
        assert!((regions[0].area() - 1.649_336_143_134_695).abs() < 1e-12);
        assert!((regions[1].area() - 0.471_238_898_038_469).abs() < 1e-12);
        assert!(regions[0].contains(&[0.8, 0.0]) && !regions[0].contains(&[0.0, 0.7]));
        assert!(matches!(reference_regions("path_following"), Err(BenchError::NoReferenceData(_))));
    }

    #[test]
    fn params_serialize_by_name() {
        let p = BenchmarkParams::from_name("nlink(3)").unwrap();
        let json = serde_json::to_string(&p).unwrap();
        assert!(json.contains("\"name\":\"nlink\""));
        let back: BenchmarkParams = serde_json::from_str(&json).unwrap();
        assert_eq!(back, p);
        let partial: BenchmarkParams = serde_json::from_str(r#"{"name":"pendulum","mass":2.0}"#).unwrap();
        assert_eq!(partial, BenchmarkParams::Pendulum(PendulumParams { mass: 2.0, ..Default::default() }));
    }
}
