use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use neural_lyapunov::cegis::Checkpoint;
use neural_lyapunov::network::{Architecture, LyapunovNet};

fn nlc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nlc")).args(args).output().expect("binary runs")
}

fn text(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned() + &String::from_utf8_lossy(&o.stderr)
}

fn shipped() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data/pendulum_certified.json")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn help_and_bench_list() {
    let o = nlc(&["--help"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(text(&o).contains("synthesize"));
    let o = nlc(&["bench-list"]);
    assert_eq!(o.status.code(), Some(0));
    let t = text(&o);
    for name in ["pendulum", "path_following", "ducted_fan", "nlink(2)"] {
        assert!(t.contains(name), "{t}");
    }
    assert_eq!(nlc(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn shipped_checkpoint_verifies() {
    let o = nlc(&["verify", p(&shipped())]);
    assert_eq!(o.status.code(), Some(0), "{}", text(&o));
    assert!(text(&o).starts_with("unsat (epsilon = 0.04"));
}

#[test]
fn zero_network_is_refuted_with_a_witness() {
    let ck = Checkpoint::load(&shipped()).unwrap();
    let arch = Architecture { n_inputs: 2, hidden: vec![6], output_tanh: false };
    let zero = Checkpoint { network: LyapunovNet::zeros(arch).to_layer_params(), ..ck };
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("zero.json");
    zero.save(&path).unwrap();
    let o = nlc(&["verify", p(&path), "--epsilon", "0.04"]);
    assert_eq!(o.status.code(), Some(1));
    let t = text(&o);
    assert!(t.contains("delta-sat") && t.contains("positivity violated at x = ["), "{t}");
}

#[test]
fn io_and_validation_errors() {
    let o = nlc(&["verify", "/definitely/not/here.json"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(text(&o).contains("i/o error"));

    let dir = tempfile::tempdir().unwrap();
    let garbage = dir.path().join("garbage.json");
    fs::write(&garbage, "{ not json").unwrap();
    assert_eq!(nlc(&["verify", p(&garbage)]).status.code(), Some(2));

    let cfg = dir.path().join("bad.json");
    let out = dir.path().join("run");
    fs::write(&cfg, r#"{"benchmark": "pendulum", "synthesis": {"delta": 0.5}}"#).unwrap();
    let o = nlc(&["synthesize", "--config", p(&cfg), "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(text(&o).contains("delta"));
    assert!(!out.exists(), "no run directory for an invalid config");
}

#[test]
fn zero_iteration_cap_is_not_certified() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = nlc(&["synthesize", "--bench", "pendulum", "--max-cegis", "0", "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(text(&o).contains("outcome: exhausted"));
    let report = fs::read_to_string(out.join("report.json")).unwrap();
    assert!(report.contains(r#""status": "exhausted""#));
}

#[test]
fn roa_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let o = nlc(&["roa", p(&shipped()), "--out", p(dir.path()), "--grid-n", "21", "--mc-samples", "20000", "--trajectories", "5"]);
    assert_eq!(o.status.code(), Some(0), "{}", text(&o));
    let t = text(&o);
    assert!(t.contains("volume ratio learned/lqr") && t.contains("reference sos"), "{t}");
    let grid = fs::read_to_string(dir.path().join("roa_grid.csv")).unwrap();
    assert_eq!(grid.lines().count(), 21 * 21 + 1);
    assert_eq!(grid.lines().next(), Some("x0,x1,v,in_region"));
    let traj = fs::read_to_string(dir.path().join("trajectories.csv")).unwrap();
    assert_eq!(traj.lines().next(), Some("trajectory,t,x0,x1"));
    assert_eq!(traj.lines().count(), 5 * 2001 + 1);
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("roa.json")).unwrap()).unwrap();
    let learned = &summary["comparison"]["learned"];
    assert!(learned["beta"].as_f64().unwrap() <= learned["sampled_beta"].as_f64().unwrap());
    assert_eq!(summary["left_region"], 0);
}

#[test]
fn simulate_writes_csv() {
    let o = nlc(&["simulate", "--bench", "pendulum", "--x0", "0.3,0", "--horizon", "1", "--dt", "0.1"]);
    assert_eq!(o.status.code(), Some(0));
    let t = String::from_utf8(o.stdout).unwrap();
    assert_eq!(t.lines().count(), 1 + 11);
    assert!(t.starts_with("trajectory,t,x0,x1\n0,0,0.3,0\n"));
    let o = nlc(&["simulate", p(&shipped()), "--x0", "1,2,3"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn system_file_runs_write_a_reloadable_config() {
    let dir = tempfile::tempdir().unwrap();
    let sys = dir.path().join("damped.sexp");
    fs::write(
        &sys,
        "; a damped oscillator with a sine nonlinearity\n\
         (system (name damped) (states 2) (inputs 1) (domain (ball 1.0))\n\
           (dynamics (var 1) (add (neg (var 0)) (neg (var 1)) (mul 0.5 (sin (var 0))) (input 0))))\n",
    )
    .unwrap();
    let out = dir.path().join("run");
    let o = nlc(&["synthesize", "--system", p(&sys), "--max-cegis", "1", "--out", p(&out)]);
    assert!(matches!(o.status.code(), Some(0 | 1)), "{}", text(&o));
    assert!(out.join("system.sexp").exists());
    let again = dir.path().join("again");
    let o = nlc(&["synthesize", "--config", p(&out.join("config.json")), "--out", p(&again)]);
    assert!(matches!(o.status.code(), Some(0 | 1)), "{}", text(&o));
    assert_eq!(fs::read(out.join("checkpoint.json")).unwrap(), fs::read(again.join("checkpoint.json")).unwrap());
}

/// Everything except wall-clock fields is identical across two runs.
#[test]
fn runs_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let runs: Vec<PathBuf> = ["a", "b"].iter().map(|n| dir.path().join(n)).collect();
    for out in &runs {
        let o = nlc(&["synthesize", "--bench", "path_following", "--out", p(out)]);
        assert_eq!(o.status.code(), Some(0), "{}", text(&o));
    }
    let read = |dir: &Path, f: &str| fs::read_to_string(dir.join(f)).unwrap();
    for f in ["checkpoint.json", "counterexamples.csv"] {
        assert_eq!(read(&runs[0], f), read(&runs[1], f), "{f}");
    }
    let strip_time = |s: String| -> Vec<String> {
        s.lines().map(|l| l.rsplit_once(',').map_or(l, |(head, _)| head).to_string()).collect()
    };
    assert_eq!(strip_time(read(&runs[0], "training_log.csv")), strip_time(read(&runs[1], "training_log.csv")));
    let report = |dir: &Path| {
        let mut v: serde_json::Value = serde_json::from_str(&read(dir, "report.json")).unwrap();
        for k in ["learning_time_s", "falsification_time_s", "total_time_s"] {
            v.as_object_mut().unwrap().remove(k);
        }
        v
    };
    assert_eq!(report(&runs[0]), report(&runs[1]));
    let it = |dir: &Path| fs::read_dir(dir.join("checkpoints")).unwrap().count();
    assert_eq!(it(&runs[0]), it(&runs[1]));
}
