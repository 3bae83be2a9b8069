//! Learned region of attraction against the LQR quadratic, both
//! certified by the same falsifier and level search.

use neural_lyapunov::bench::{reference_regions, ReferenceRegion};
use neural_lyapunov::cegis::{lqr_baseline, SynthesisConfig};
use neural_lyapunov::expr::{Expr, Tape};
use neural_lyapunov::falsifier::Budget;
use neural_lyapunov::network::{lie_derivative_expr, LyapunovNet};
use neural_lyapunov::roa::{certified_level, largest_verified_radius, region_volume, LevelConfig, RoaCertificate};
use neural_lyapunov::system::{Domain, SystemSpec};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone)]
pub struct RoaOptions {
    pub mc_samples: usize,
    pub seed: u64,
    /// Epsilon of the baseline's Lyapunov check, normally the one the
    /// learned pair was certified at.
    pub epsilon: f64,
    pub budget: Budget,
    pub level: LevelConfig,
    /// Supplies the LQR weights.
    pub synthesis: SynthesisConfig,
}

impl Default for RoaOptions {
    fn default() -> Self {
        RoaOptions {
            mc_samples: 100_000,
            seed: 0,
            epsilon: 0.04,
            budget: Budget::default(),
            level: LevelConfig::default(),
            synthesis: SynthesisConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BaselineRegion {
    /// Largest ball on which `x^T P x` passes the Lyapunov check.
    pub verified_radius: f64,
    pub certificate: RoaCertificate,
    pub gain: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReferenceRow {
    pub label: String,
    pub area: f64,
    /// Fraction of the reference ellipse inside the learned region.
    pub learned_coverage: f64,
    pub baseline_coverage: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RoaComparison {
    pub learned: RoaCertificate,
    pub baseline: Option<BaselineRegion>,
    /// Learned volume over baseline volume.
    pub ratio: Option<f64>,
    pub references: Vec<ReferenceRow>,
}

impl RoaComparison {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let vol = |c: &RoaCertificate| c.volume.map_or("-".to_string(), |v| format!("{:.6} +- {:.6}", v.volume, v.std_error));
        s += &format!(
            "learned: beta = {:.6} (sampled boundary min {:.6}) on radius {}, volume {}\n",
            self.learned.beta,
            self.learned.sampled_beta,
            self.learned.radius,
            vol(&self.learned)
        );
        match &self.baseline {
            Some(b) => {
                s += &format!(
                    "lqr baseline: verified radius {:.6}, beta = {:.6}, volume {}\n",
                    b.verified_radius,
                    b.certificate.beta,
                    vol(&b.certificate)
                );
            }
            None => s += "lqr baseline: no radius verified\n",
        }
        if let Some(r) = self.ratio {
            s += &format!("volume ratio learned/lqr: {r:.3}\n");
        }
        for row in &self.references {
            let base = row.baseline_coverage.map_or("-".to_string(), |c| format!("{:.1}%", 100.0 * c));
            s += &format!(
                "reference {}: area {:.6}, covered {:.1}% by learned, {} by lqr\n",
                row.label,
                row.area,
                100.0 * row.learned_coverage,
                base
            );
        }
        s
    }
}

/// The radius levels are certified on: the ball itself, or the largest
/// ball inside a box domain.
pub fn level_radius(domain: &Domain) -> f64 {
    domain.radius().unwrap_or_else(|| domain.inner_radius())
}

/// Certifies the learned level on the domain ball and the LQR quadratic
/// on the largest ball where its own check passes. The learned pair must
/// already be verified on the domain.
pub fn compare_roa(
    system: &SystemSpec,
    net: &LyapunovNet,
    opts: &RoaOptions,
) -> Result<RoaComparison, CliError> {
    let n = system.n_states();
    let radius = level_radius(&system.domain);
    let v = net.compile_v();
    let mut learned = certified_level(&v, n, radius, &opts.level)?;
    learned.volume = Some(region_volume(&v, learned.beta, &Domain::ball(radius), n, opts.mc_samples, opts.seed)?);

    let lqr = lqr_baseline(system, &opts.synthesis)?;
    let q = lqr.quadratic_expr();
    let field = system.closed_loop(&lqr.controller()).map_err(|e| CliError::Numerical(e.to_string()))?;
    let lie = lie_derivative_expr(&q, &field);
    let baseline = match largest_verified_radius(&q, &lie, n, radius, opts.epsilon, &opts.budget, 1e-3)? {
        Some(r) => {
            let mut cert = certified_level(&q, n, r, &opts.level)?;
            cert.volume = Some(region_volume(&q, cert.beta, &Domain::ball(r), n, opts.mc_samples, opts.seed)?);
            Some(BaselineRegion { verified_radius: r, certificate: cert, gain: lqr.controller().gain().to_vec() })
        }
        None => None,
    };
    let ratio = baseline.as_ref().and_then(|b| {
        let (l, q) = (learned.volume?.volume, b.certificate.volume?.volume);
        (q > 0.0).then_some(l / q)
    });
    let references = match reference_regions(&system.name) {
        Ok(regions) if n == 2 => regions
            .iter()
            .map(|region| ReferenceRow {
                label: region.label.clone(),
                area: region.area(),
                learned_coverage: coverage(region, &v, learned.beta),
                baseline_coverage: baseline.as_ref().map(|b| coverage(region, &q, b.certificate.beta)),
            })
            .collect(),
        _ => Vec::new(),
    };
    Ok(RoaComparison { learned, baseline, ratio, references })
}

/// Fraction of a 201 x 201 grid over the ellipse where `v <= beta`.
fn coverage(region: &ReferenceRegion, v: &Expr, beta: f64) -> f64 {
    let tape = Tape::compile(std::slice::from_ref(v));
    let [a, b] = region.semi_axes();
    let (mut total, mut inside) = (0usize, 0usize);
    let mut scratch = Vec::new();
    for i in 0..=200 {
        for j in 0..=200 {
            let x = [a * (i as f64 / 100.0 - 1.0), b * (j as f64 / 100.0 - 1.0)];
            if !region.contains(&x) {
                continue;
            }
            total += 1;
            if tape.eval_point_with(&x, &[], &mut scratch).is_ok_and(|o| o[0] <= beta) {
                inside += 1;
            }
        }
    }
    inside as f64 / total.max(1) as f64
}
