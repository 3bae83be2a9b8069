//! Invariants of a full synthesis run, checked from the files it writes.

use std::fs;

use neural_lyapunov::bench::build_named;
use neural_lyapunov::cegis::{synthesize, Checkpoint, RunDir, SynthesisConfig};
use neural_lyapunov::falsifier::{verify_lyapunov, Budget};

#[test]
fn run_directory_invariants() {
    let def = build_named("path_following").unwrap();
    let cfg = SynthesisConfig::for_benchmark(&def);
    let tmp = tempfile::tempdir().unwrap();
    let dir = RunDir::create(tmp.path()).unwrap();
    let report = synthesize(&def.system, &cfg, Some(&dir)).unwrap();
    assert!(report.is_certified(), "{}", report.to_text());

    // The saved certificate passes an independent re-verification.
    let ck = Checkpoint::load(&dir.final_checkpoint_path()).unwrap();
    let (system, net, ctrl) = ck.parts().unwrap();
    for &eps in &cfg.epsilon_schedule {
        let outcome = verify_lyapunov(&net, &ctrl, &system, eps, cfg.delta_for(eps), &Budget::default()).unwrap();
        assert!(outcome.is_unsat(), "epsilon {eps}");
    }

    // Counterexamples arrive in iteration order, one per failed round, and
    // each violates the weakened conditions for the parameters it refuted.
    let mut rows = csv::Reader::from_path(tmp.path().join("counterexamples.csv")).unwrap();
    let header = rows.headers().unwrap().clone();
    assert_eq!(header.iter().collect::<Vec<_>>(), ["cegis_iteration", "x0", "x1", "violated"]);
    let mut last = 0;
    let mut count = 0;
    let eps_min = *cfg.epsilon_schedule.last().unwrap();
    for row in rows.records() {
        let row = row.unwrap();
        let iteration: usize = row[0].parse().unwrap();
        assert!(iteration > last, "one witness per iteration, in order");
        last = iteration;
        count += 1;
        let x: Vec<f64> = (1..3).map(|i| row[i].parse().unwrap()).collect();
        let at = Checkpoint::load(&tmp.path().join("checkpoints").join(format!("iter_{iteration:04}.json"))).unwrap();
        let (_, net_k, ctrl_k) = at.parts().unwrap();
        let v = net_k.forward(&x);
        let lie = net_k.lie_derivative_at(&system, &ctrl_k, &x).unwrap();
        let r2: f64 = x.iter().map(|t| t * t).sum();
        assert!(r2 >= eps_min && system.domain.contains(&x));
        assert!(v <= cfg.delta || lie >= -cfg.delta, "witness {x:?} at iteration {iteration}: V = {v}, LieV = {lie}");
        match &row[3] {
            "positivity" => assert!(v <= cfg.delta),
            "decrease" => assert!(lie >= -cfg.delta),
            other => panic!("unknown violation {other}"),
        }
    }
    assert_eq!(count, report.n_counterexamples);
    assert_eq!(report.n_samples, cfg.n_samples + count);
    assert!(last < report.n_cegis_iterations, "the certifying round adds no witness");
    assert!(fs::read_to_string(tmp.path().join("report.txt")).unwrap().contains("certified"));
}
