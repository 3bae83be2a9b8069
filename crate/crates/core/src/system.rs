//! Controlled dynamical systems `dx/dt = f(x, u)` and their verification
//! domains.

use std::f64::consts::PI;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{parse_sexps, EvalError, Expr, Interval, ParseError, SExp, StateBox, Tape};
use crate::network::LinearController;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SystemError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("dynamics reference {kind} {index} but the system declares {declared}")]
    VariableOutOfRange { kind: &'static str, index: usize, declared: usize },
    #[error("invalid domain: {0}")]
    InvalidDomain(String),
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("malformed system file: {0}")]
    Format(String),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Verification domain: a Euclidean ball centred at the origin or a box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    Ball { radius: f64 },
    Box { bounds: StateBox },
}

impl Domain {
    pub fn ball(radius: f64) -> Domain {
        Domain::Ball { radius }
    }

    pub fn radius(&self) -> Option<f64> {
        match self {
            Domain::Ball { radius } => Some(*radius),
            Domain::Box { .. } => None,
        }
    }

    pub fn bounding_box(&self, n: usize) -> StateBox {
        match self {
            Domain::Ball { radius } => StateBox::cube(n, *radius),
            Domain::Box { bounds } => bounds.clone(),
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            Domain::Ball { radius } => x.iter().map(|v| v * v).sum::<f64>() <= radius * radius,
            Domain::Box { bounds } => bounds.contains(x),
        }
    }

    /// Lebesgue measure of the domain in `n` dimensions.
    pub fn volume(&self, n: usize) -> f64 {
        match self {
            Domain::Ball { radius } => unit_ball_volume(n) * radius.powi(n as i32),
            Domain::Box { bounds } => bounds.volume(),
        }
    }

    /// Euclidean size used for the `sqrt(eps) << min(1, |D|)` sanity check:
    /// the radius for balls, the inscribed radius for boxes.
    pub fn inner_radius(&self) -> f64 {
        match self {
            Domain::Ball { radius } => *radius,
            Domain::Box { bounds } => bounds
                .intervals()
                .iter()
                .map(|iv| iv.lo.abs().min(iv.hi.abs()))
                .fold(f64::INFINITY, f64::min),
        }
    }

    fn validate(&self, n: usize) -> Result<(), SystemError> {
        match self {
            Domain::Ball { radius } if !(radius.is_finite() && *radius > 0.0) => {
                Err(SystemError::InvalidDomain(format!("ball radius must be positive, got {radius}")))
            }
            Domain::Box { bounds } if bounds.dim() != n => Err(SystemError::InvalidDomain(format!(
                "box has {} sides for a {n}-state system",
                bounds.dim()
            ))),
            Domain::Box { bounds } if !bounds.contains(&vec![0.0; n]) => {
                Err(SystemError::InvalidDomain("box must contain the origin".into()))
            }
            _ => Ok(()),
        }
    }
}

/// Volume of the unit ball in `n` dimensions.
pub fn unit_ball_volume(n: usize) -> f64 {
    match n {
        0 => 1.0,
        1 => 2.0,
        _ => unit_ball_volume(n - 2) * 2.0 * PI / n as f64,
    }
}

/// Open-loop dynamics over states `x_0..x_{n-1}` and inputs `u_0..u_{m-1}`,
/// together with the domain the Lyapunov conditions are checked on.
#[derive(Debug, Clone)]
pub struct SystemSpec {
    pub name: String,
    n_states: usize,
    n_inputs: usize,
    dynamics: Vec<Expr>,
    pub domain: Domain,
}

impl SystemSpec {
    pub fn new(
        name: impl Into<String>,
        n_states: usize,
        n_inputs: usize,
        dynamics: Vec<Expr>,
        domain: Domain,
    ) -> Result<SystemSpec, SystemError> {
        if n_states == 0 {
            return Err(SystemError::DimensionMismatch("a system needs at least one state".into()));
        }
        if dynamics.len() != n_states {
            return Err(SystemError::DimensionMismatch(format!(
                "{} dynamics components for {n_states} states",
                dynamics.len()
            )));
        }
        for f in &dynamics {
            let vb = f.var_bound();
            if vb > n_states {
                return Err(SystemError::VariableOutOfRange { kind: "state", index: vb - 1, declared: n_states });
            }
            let ib = f.input_bound();
            if ib > n_inputs {
                return Err(SystemError::VariableOutOfRange { kind: "input", index: ib - 1, declared: n_inputs });
            }
        }
        domain.validate(n_states)?;
        Ok(SystemSpec { name: name.into(), n_states, n_inputs, dynamics, domain })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_inputs(&self) -> usize {
        self.n_inputs
    }

    pub fn dynamics(&self) -> &[Expr] {
        &self.dynamics
    }

    pub fn with_domain(&self, domain: Domain) -> Result<SystemSpec, SystemError> {
        domain.validate(self.n_states)?;
        Ok(SystemSpec { domain, ..self.clone() })
    }

    /// Tape over the open-loop dynamics; evaluate with both state and input
    /// values bound.
    pub fn open_loop_tape(&self) -> Tape {
        Tape::compile(&self.dynamics)
    }

    pub fn eval_open_loop(&self, x: &[f64], u: &[f64]) -> Result<Vec<f64>, SystemError> {
        self.check_dims(x, u)?;
        let mut scratch = Vec::new();
        Ok(self.open_loop_tape().eval_point_with(x, u, &mut scratch)?)
    }

    fn check_dims(&self, x: &[f64], u: &[f64]) -> Result<(), SystemError> {
        if x.len() != self.n_states || u.len() != self.n_inputs {
            return Err(SystemError::DimensionMismatch(format!(
                "got state of length {} and input of length {}, expected {} and {}",
                x.len(),
                u.len(),
                self.n_states,
                self.n_inputs
            )));
        }
        Ok(())
    }

    /// Closed-loop vector field with every input `u_j` replaced by
    /// `sum_i K[j][i] x_i`. The result mentions state variables only.
    pub fn closed_loop(&self, ctrl: &LinearController) -> Result<Vec<Expr>, SystemError> {
        if ctrl.n_states() != self.n_states || ctrl.n_inputs() != self.n_inputs {
            return Err(SystemError::DimensionMismatch(format!(
                "controller is {}x{}, system has {} inputs and {} states",
                ctrl.n_inputs(),
                ctrl.n_states(),
                self.n_inputs,
                self.n_states
            )));
        }
        let u = ctrl.exprs();
        self.dynamics
            .iter()
            .map(|f| f.substitute_inputs(&u).map_err(SystemError::from))
            .collect()
    }

    /// `max_i |f_i(0, 0)|`.
    pub fn equilibrium_residual(&self) -> Result<f64, SystemError> {
        let f = self.eval_open_loop(&vec![0.0; self.n_states], &vec![0.0; self.n_inputs])?;
        Ok(f.iter().fold(0.0, |m, v| m.max(v.abs())))
    }

    /// Reads the s-expression system format:
    ///
    /// ```text
    /// (system
    ///   (name damped)
    ///   (states 1) (inputs 1)
    ///   (domain (ball 2.0))           ; or (domain (box (-1 1) ...))
    ///   (dynamics (add (neg (var 0)) (input 0))))
    /// ```
    pub fn parse(text: &str) -> Result<SystemSpec, SystemError> {
        let forms = parse_sexps(text)?;
        let [form] = forms.as_slice() else {
            return Err(SystemError::Format("expected a single (system ...) form".into()));
        };
        let Some(("system", fields)) = form.head() else {
            return Err(SystemError::Format("top-level form must be (system ...)".into()));
        };
        let mut name = String::from("custom");
        let (mut states, mut inputs) = (None, 0usize);
        let mut domain = None;
        let mut dynamics = None;
        for field in fields {
            let Some((key, args)) = field.head() else {
                return Err(SystemError::Format(format!("unexpected field {field}")));
            };
            match key {
                "name" => name = single_atom(key, args)?.to_string(),
                "states" => states = Some(parse_count(key, args)?),
                "inputs" => inputs = parse_count(key, args)?,
                "domain" => domain = Some(parse_domain(args)?),
                "dynamics" => {
                    dynamics = Some(args.iter().map(Expr::from_sexp).collect::<Result<Vec<_>, _>>()?)
                }
                other => return Err(SystemError::Format(format!("unknown field `{other}`"))),
            }
        }
        let states = states.ok_or_else(|| SystemError::Format("missing (states n)".into()))?;
        let domain = domain.ok_or_else(|| SystemError::Format("missing (domain ...)".into()))?;
        let dynamics = dynamics.ok_or_else(|| SystemError::Format("missing (dynamics ...)".into()))?;
        SystemSpec::new(name, states, inputs, dynamics, domain)
    }

    /// Inverse of [`SystemSpec::parse`].
    pub fn to_sexp_string(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "(system");
        let _ = writeln!(s, "  (name {})", self.name);
        let _ = writeln!(s, "  (states {}) (inputs {})", self.n_states, self.n_inputs);
        match &self.domain {
            Domain::Ball { radius } => {
                let _ = writeln!(s, "  (domain (ball {radius:?}))");
            }
            Domain::Box { bounds } => {
                let sides: Vec<String> =
                    bounds.intervals().iter().map(|iv| format!("({:?} {:?})", iv.lo, iv.hi)).collect();
                let _ = writeln!(s, "  (domain (box {}))", sides.join(" "));
            }
        }
        let _ = writeln!(s, "  (dynamics");
        for f in &self.dynamics {
            let _ = writeln!(s, "    {f}");
        }
        s.push_str("  ))\n");
        s
    }
}

fn single_atom<'a>(key: &str, args: &'a [SExp]) -> Result<&'a str, SystemError> {
    match args {
        [SExp::Atom(a)] => Ok(a),
        _ => Err(SystemError::Format(format!("({key} ...) takes one atom"))),
    }
}

fn parse_count(key: &str, args: &[SExp]) -> Result<usize, SystemError> {
    single_atom(key, args)?
        .parse()
        .map_err(|_| SystemError::Format(format!("({key} n) needs a non-negative integer")))
}

fn parse_f64(s: &SExp) -> Result<f64, SystemError> {
    s.as_atom()
        .and_then(|a| a.parse::<f64>().ok())
        .filter(|v| v.is_finite())
        .ok_or_else(|| SystemError::Format(format!("expected a number, got {s}")))
}

fn parse_domain(args: &[SExp]) -> Result<Domain, SystemError> {
    let [spec] = args else {
        return Err(SystemError::Format("(domain ...) takes one form".into()));
    };
    match spec.head() {
        Some(("ball", [r])) => Ok(Domain::ball(parse_f64(r)?)),
        Some(("box", sides)) => {
            let ivs = sides
                .iter()
                .map(|side| match side.as_list() {
                    Some([lo, hi]) => {
                        let (lo, hi) = (parse_f64(lo)?, parse_f64(hi)?);
                        if lo > hi {
                            return Err(SystemError::InvalidDomain(format!("empty side ({lo} {hi})")));
                        }
                        Ok(Interval::new(lo, hi))
                    }
                    _ => Err(SystemError::Format(format!("box side must be (lo hi), got {side}"))),
                })
                .collect::<Result<Vec<_>, _>>()?;
            Ok(Domain::Box { bounds: StateBox::new(ivs) })
        }
        _ => Err(SystemError::Format(format!("unknown domain {spec}"))),
    }
}
