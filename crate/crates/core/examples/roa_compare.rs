//! Learned versus LQR region of attraction on the pendulum.

use neural_lyapunov::bench::{build_named, reference_regions};
use neural_lyapunov::cegis::{lqr_baseline, synthesize, SynthesisConfig};
use neural_lyapunov::falsifier::{check, Budget, FalsificationProblem};
use neural_lyapunov::network::lie_derivative_expr;
use neural_lyapunov::roa::{certified_level, region_volume, LevelConfig};
use neural_lyapunov::system::Domain;

fn main() {
    let def = build_named("pendulum").unwrap();
    let sys = &def.system;
    let cfg = SynthesisConfig::for_benchmark(&def);
    let report = synthesize(sys, &cfg, None).unwrap();
    assert!(report.is_certified());
    let net = report.net().unwrap();
    let v = net.compile_v();
    let level = certified_level(&v, 2, 6.0, &LevelConfig::default()).unwrap();
    let vol = region_volume(&v, level.beta, &sys.domain, 2, 200_000, 1).unwrap();
    println!("learned beta {} sampled {} volume {:?}", level.beta, level.sampled_beta, vol);

    let lqr = lqr_baseline(sys, &cfg).unwrap();
    let q = lqr.quadratic_expr();
    let field = sys.closed_loop(&lqr.controller()).unwrap();
    let lie = lie_derivative_expr(&q, &field);
    let (mut lo, mut hi) = (0.0f64, 6.0f64);
    for _ in 0..30 {
        let r = 0.5 * (lo + hi);
        let eps = (0.04f64).min(r * r / 100.0);
        let p = FalsificationProblem::new(q.clone(), lie.clone(), Domain::ball(r), 2, eps, eps / 10.0).unwrap();
        match check(&p, &Budget::default()) {
            Ok(o) if o.is_unsat() => lo = r,
            _ => hi = r,
        }
    }
    let lqr_level = certified_level(&q, 2, lo, &LevelConfig::default()).unwrap();
    let lqr_vol = region_volume(&q, lqr_level.beta, &Domain::ball(lo), 2, 200_000, 1).unwrap();
    println!("lqr radius {lo} beta {} volume {:?}", lqr_level.beta, lqr_vol);
    println!("ratio {}", vol.volume / lqr_vol.volume);
    let sos = &reference_regions("pendulum").unwrap()[0];
    let tape = neural_lyapunov::expr::Tape::compile(&[v]);
    let (mut inside_sos, mut outside_roa) = (0, 0);
    for i in 0..200 {
        for j in 0..200 {
            let x = [-0.875 + 1.75 * i as f64 / 199.0, -0.6 + 1.2 * j as f64 / 199.0];
            if sos.contains(&x) {
                inside_sos += 1;
                if tape.eval_point(&x).unwrap()[0] > level.beta {
                    outside_roa += 1;
                }
            }
        }
    }
    println!("sos grid points {inside_sos}, outside learned roa {outside_roa}");
}
