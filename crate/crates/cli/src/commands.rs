use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use neural_lyapunov::bench::{build, build_named, BenchmarkParams};
use neural_lyapunov::cegis::{lqr_controller, synthesize as run_cegis, CegisError, Checkpoint, RunDir, SynthesisConfig, SynthesisOutcome};
use neural_lyapunov::expr::Tape;
use neural_lyapunov::falsifier::{check_with_stats, lyapunov_problem, Budget, FalsificationOutcome};
use neural_lyapunov::network::LinearController;
use neural_lyapunov::roa::{save_trajectories_csv, simulate as run_sim, write_roa_grid_csv, write_trajectories_csv, Trajectory};
use neural_lyapunov::system::{Domain, SystemSpec};
use neural_lyapunov::training::sample_states;
use serde::Serialize;

use crate::cli::{RoaArgs, SimulateArgs, SynthesizeArgs, VerifyArgs};
use crate::compare::{compare_roa, level_radius, RoaComparison, RoaOptions};
use crate::config::{BenchmarkSelect, RunConfig};
use crate::{exit, io_error, CliError};

type CmdResult = Result<u8, CliError>;

fn say(out: &mut dyn Write, text: &str) -> Result<(), CliError> {
    out.write_all(text.as_bytes()).map_err(io_error("<stdout>"))
}

pub fn synthesize(args: &SynthesizeArgs, out: &mut dyn Write) -> CmdResult {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(bench) = &args.bench {
        cfg.benchmark = Some(BenchmarkSelect::Name(bench.clone()));
        cfg.system_file = None;
    }
    if let Some(system) = &args.system {
        cfg.system_file = Some(system.clone());
        cfg.benchmark = None;
    }
    let overrides = cfg.synthesis.as_object_mut_or_insert();
    if let Some(n) = args.max_cegis {
        overrides.insert("max_cegis_iterations".into(), n.into());
    }
    if let Some(seed) = args.seed {
        overrides.insert("seed".into(), seed.into());
    }
    if let Some(dir) = &args.out {
        cfg.output_dir = Some(dir.clone());
    }
    // Everything is validated before the run directory exists.
    let run = cfg.resolve()?;
    let dir = RunDir::create(&run.output_dir)?;
    dir.write_config(&run.snapshot(dir.path())?)?;
    say(out, &format!("run directory: {}\n", dir.path().display()))?;
    let report = match run_cegis(&run.system, &run.synthesis, Some(&dir)) {
        Ok(report) => report,
        Err(CegisError::FalsifierBudget { report, source }) => {
            say(out, &report.to_text())?;
            say(out, &format!("falsifier stopped: {source}\n"))?;
            return Ok(exit::BUDGET);
        }
        Err(e) => return Err(e.into()),
    };
    say(out, &report.to_text())?;
    say(out, &format!("checkpoint: {}\n", dir.final_checkpoint_path().display()))?;
    Ok(match report.outcome {
        SynthesisOutcome::Certified { .. } => exit::SUCCESS,
        SynthesisOutcome::Exhausted => exit::NOT_CERTIFIED,
        SynthesisOutcome::LearnerStuck => exit::LEARNER_STUCK,
    })
}

trait ObjectExt {
    fn as_object_mut_or_insert(&mut self) -> &mut serde_json::Map<String, serde_json::Value>;
}

impl ObjectExt for serde_json::Value {
    fn as_object_mut_or_insert(&mut self) -> &mut serde_json::Map<String, serde_json::Value> {
        if !self.is_object() {
            *self = serde_json::Value::Object(Default::default());
        }
        self.as_object_mut().expect("just made an object")
    }
}

fn budget(max_boxes: Option<u64>, max_time: Option<f64>) -> Result<Budget, CliError> {
    let mut b = Budget::default();
    if let Some(n) = max_boxes {
        b.max_boxes = n;
    }
    if let Some(t) = max_time {
        b.max_time = Duration::try_from_secs_f64(t).map_err(|e| CliError::Config(format!("--max-time: {e}")))?;
    }
    Ok(b)
}

pub fn verify(args: &VerifyArgs, out: &mut dyn Write) -> CmdResult {
    let ck = Checkpoint::load(&args.checkpoint)?;
    let (system, net, ctrl) = ck.parts()?;
    let epsilon = args
        .epsilon
        .or(ck.epsilon)
        .ok_or_else(|| CliError::Config("the checkpoint records no epsilon; pass --epsilon".into()))?;
    let delta = match (args.delta, args.epsilon) {
        (Some(d), _) => d,
        (None, None) if ck.delta.is_some() => ck.delta.expect("checked"),
        _ => 0.01f64.min(epsilon / 10.0),
    };
    let relaxation = args.relaxation.or(ck.relaxation).unwrap_or(0.0);
    let problem = lyapunov_problem(&net, &ctrl, &system, epsilon, delta)?.with_relaxation(relaxation)?;
    for w in problem.warnings() {
        say(out, &format!("warning: {w}\n"))?;
    }
    let (outcome, stats) = check_with_stats(&problem, &budget(args.max_boxes, args.max_time)?)?;
    let setting = format!("epsilon = {epsilon}, delta = {delta}, relaxation = {relaxation}");
    match outcome {
        FalsificationOutcome::Unsat => {
            say(out, &format!("unsat ({setting}); {} boxes in {:.3} s\n", stats.boxes, stats.elapsed_s))?;
            Ok(exit::SUCCESS)
        }
        FalsificationOutcome::DeltaSat(c) => {
            say(
                out,
                &format!(
                    "delta-sat ({setting}): {} violated at x = {:?} (V = {:e}, LieV = {:e}); {} boxes\n",
                    c.violated, c.witness, c.v, c.lie_v, stats.boxes
                ),
            )?;
            Ok(exit::NOT_CERTIFIED)
        }
    }
}

#[derive(Debug, Serialize)]
struct RoaSummary<'a> {
    comparison: &'a RoaComparison,
    trajectories: usize,
    left_region: usize,
    converged: usize,
}

pub fn roa(args: &RoaArgs, out: &mut dyn Write) -> CmdResult {
    let ck = Checkpoint::load(&args.checkpoint)?;
    let (system, net, ctrl) = ck.parts()?;
    let synthesis = match &args.config {
        Some(path) => RunConfig::load(path)?.resolve()?.synthesis,
        None => SynthesisConfig::default(),
    };
    let opts = RoaOptions {
        mc_samples: args.mc_samples,
        seed: args.seed,
        epsilon: ck.epsilon.unwrap_or(0.04),
        synthesis,
        ..Default::default()
    };
    let cmp = compare_roa(&system, &net, &opts)?;
    say(out, &cmp.to_text())?;

    let dir = match &args.out {
        Some(d) => d.clone(),
        None => args.checkpoint.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from(".")),
    };
    fs::create_dir_all(&dir).map_err(io_error(&dir))?;
    let v = net.compile_v();
    let beta = cmp.learned.beta;
    let n = system.n_states();
    let ball = Domain::ball(level_radius(&system.domain));
    if n >= 2 {
        let path = dir.join("roa_grid.csv");
        let file = fs::File::create(&path).map_err(io_error(&path))?;
        write_roa_grid_csv(&v, beta, &ball, n, args.grid_n, std::io::BufWriter::new(file))?;
    }

    // Initial states drawn uniformly from the certified region.
    let tape = Tape::compile(std::slice::from_ref(&v));
    let pool = sample_states(args.trajectories.max(1) * 200, n, &ball, args.seed)
        .map_err(|e| CliError::Numerical(e.to_string()))?;
    let starts: Vec<Vec<f64>> = pool
        .points()
        .iter()
        .filter(|x| tape.eval_point(x).is_ok_and(|o| o[0] <= beta))
        .take(args.trajectories)
        .cloned()
        .collect();
    let mut trajs = Vec::with_capacity(starts.len());
    let (mut left, mut converged) = (0, 0);
    for x0 in &starts {
        let t = run_sim(&system, &ctrl, x0, args.dt, args.horizon)?;
        if t.exit_index(|x| tape.eval_point(x).is_ok_and(|o| o[0] <= beta + 1e-9)).is_some() {
            left += 1;
        }
        if t.converged(1e-3) {
            converged += 1;
        }
        trajs.push(t);
    }
    let path = dir.join("trajectories.csv");
    save_trajectories_csv(&trajs, &path).map_err(|e| CliError::Io { path: path.clone(), source: e.into() })?;
    say(
        out,
        &format!("trajectories: {} from inside the region, {left} left it, {converged} reached |x| <= 1e-3\n", trajs.len()),
    )?;
    let summary = RoaSummary { comparison: &cmp, trajectories: trajs.len(), left_region: left, converged };
    let path = dir.join("roa.json");
    let json = serde_json::to_string_pretty(&summary).map_err(|e| CliError::Numerical(e.to_string()))?;
    fs::write(&path, json).map_err(io_error(&path))?;
    say(out, &format!("wrote roa_grid.csv, trajectories.csv and roa.json to {}\n", dir.display()))?;
    Ok(exit::SUCCESS)
}

fn parse_state(text: &str, n: usize) -> Result<Vec<f64>, CliError> {
    let x: Vec<f64> = text
        .split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::Config(format!("--x0 `{text}`: {e}")))?;
    if x.len() != n {
        return Err(CliError::Config(format!("--x0 `{text}` has {} entries, the system has {n} states", x.len())));
    }
    Ok(x)
}

pub fn simulate(args: &SimulateArgs, out: &mut dyn Write) -> CmdResult {
    let (system, ctrl): (SystemSpec, LinearController) = match (&args.checkpoint, &args.bench) {
        (Some(path), _) => {
            let (system, _, ctrl) = Checkpoint::load(path)?.parts()?;
            (system, ctrl)
        }
        (None, Some(name)) => {
            let def = build_named(name).map_err(|e| CliError::Config(e.to_string()))?;
            let ctrl = lqr_controller(&def.system, &SynthesisConfig::for_benchmark(&def))?;
            (def.system, ctrl)
        }
        (None, None) => return Err(CliError::Config("give a checkpoint or --bench".into())),
    };
    let mut trajs: Vec<Trajectory> = Vec::new();
    for text in &args.x0 {
        let x0 = parse_state(text, system.n_states())?;
        trajs.push(run_sim(&system, &ctrl, &x0, args.dt, args.horizon)?);
    }
    match &args.out {
        Some(path) => {
            save_trajectories_csv(&trajs, path).map_err(|e| CliError::Io { path: path.clone(), source: e.into() })?;
            for (i, t) in trajs.iter().enumerate() {
                let x = t.final_state();
                let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                say(out, &format!("trajectory {i}: final state {x:?}, |x| = {norm:e}\n"))?;
            }
        }
        None => write_trajectories_csv(&trajs, out).map_err(|e| CliError::Io { path: "<stdout>".into(), source: e.into() })?,
    }
    Ok(exit::SUCCESS)
}

pub fn bench_list(out: &mut dyn Write) -> CmdResult {
    let mut s = format!("{:<16}{:>8}{:>8}  {:<14}{:>10}{:>9}\n", "name", "states", "inputs", "domain", "epsilon", "samples");
    for name in ["pendulum", "path_following", "ducted_fan", "nlink(2)", "nlink(3)"] {
        let def = build(&BenchmarkParams::from_name(name).map_err(|e| CliError::Config(e.to_string()))?)
            .map_err(|e| CliError::Config(e.to_string()))?;
        let domain = match &def.system.domain {
            Domain::Ball { radius } => format!("|x| <= {radius}"),
            Domain::Box { .. } => "box".to_string(),
        };
        s += &format!(
            "{:<16}{:>8}{:>8}  {:<14}{:>10}{:>9}\n",
            def.name,
            def.system.n_states(),
            def.system.n_inputs(),
            domain,
            def.target_epsilon,
            def.n_samples
        );
    }
    s += "nlink(n) accepts any n >= 1; parameters are set through a --config file.\n";
    say(out, &s)?;
    Ok(exit::SUCCESS)
}
