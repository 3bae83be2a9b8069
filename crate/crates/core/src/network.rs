//! Hypothesis classes: the tanh Lyapunov network `V` and the linear feedback
//! controller `u(x) = K x`.
//!
//! The network forward pass and its input gradient are written once,
//! generically over [`EvalDomain`]. Evaluated on `f64` they give `V(x)` and
//! `grad V(x)`; on the autodiff [`Graph`](crate::ad::Graph) they give the
//! training graph; on [`ExprBuilder`] they produce the closed-form expression
//! the falsifier reasons about.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{EvalDomain, EvalError, Expr, Tape};
use crate::system::{SystemError, SystemSpec};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NetworkError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("malformed parameters: {0}")]
    Malformed(String),
    #[error(transparent)]
    System(#[from] SystemError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Shape of a Lyapunov network: `n_inputs -> hidden[0] -> ... -> 1`, tanh on
/// every hidden layer, optionally tanh on the scalar output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub n_inputs: usize,
    pub hidden: Vec<usize>,
    pub output_tanh: bool,
}

impl Architecture {
    /// One hidden layer of 6 units, linear output.
    pub fn default_for(n_inputs: usize) -> Architecture {
        Architecture { n_inputs, hidden: vec![6], output_tanh: false }
    }

    /// `(outputs, inputs)` of every layer including the output layer.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut shapes = Vec::with_capacity(self.hidden.len() + 1);
        let mut fan_in = self.n_inputs;
        for &h in &self.hidden {
            shapes.push((h, fan_in));
            fan_in = h;
        }
        shapes.push((1, fan_in));
        shapes
    }

    pub fn n_params(&self) -> usize {
        self.layer_shapes().iter().map(|(o, i)| o * i + o).sum()
    }
}

/// Feedforward tanh network with scalar output.
///
/// Parameters are stored flat: for each layer, the row-major weight matrix
/// (`outputs x inputs`) followed by the bias vector.
#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovNet {
    arch: Architecture,
    params: Vec<f64>,
}

/// One layer in the checkpoint representation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerParams {
    pub inputs: usize,
    pub outputs: usize,
    /// Row-major, `outputs x inputs`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkParams {
    pub output_tanh: bool,
    pub layers: Vec<LayerParams>,
}

impl LyapunovNet {
    pub fn from_params(arch: Architecture, params: Vec<f64>) -> Result<LyapunovNet, NetworkError> {
        if arch.n_inputs == 0 {
            return Err(NetworkError::Malformed("network needs at least one input".into()));
        }
        if arch.hidden.contains(&0) {
            return Err(NetworkError::Malformed("hidden layers must be non-empty".into()));
        }
        if params.len() != arch.n_params() {
            return Err(NetworkError::Malformed(format!(
                "{} parameters for an architecture with {}",
                params.len(),
                arch.n_params()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(NetworkError::Malformed("non-finite parameter".into()));
        }
        Ok(LyapunovNet { arch, params })
    }

    pub fn zeros(arch: Architecture) -> LyapunovNet {
        let n = arch.n_params();
        LyapunovNet { arch, params: vec![0.0; n] }
    }

    /// Uniform `U(-1/sqrt(fan_in), 1/sqrt(fan_in))` initialisation of weights
    /// and biases.
    pub fn random<R: Rng>(arch: Architecture, rng: &mut R) -> LyapunovNet {
        let mut params = Vec::with_capacity(arch.n_params());
        for (out, fan_in) in arch.layer_shapes() {
            let bound = 1.0 / (fan_in as f64).sqrt();
            for _ in 0..out * fan_in + out {
                params.push(rng.gen_range(-bound..bound));
            }
        }
        LyapunovNet { arch, params }
    }

    pub fn arch(&self) -> &Architecture {
        &self.arch
    }

    pub fn n_inputs(&self) -> usize {
        self.arch.n_inputs
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn with_params(&self, params: Vec<f64>) -> Result<LyapunovNet, NetworkError> {
        LyapunovNet::from_params(self.arch.clone(), params)
    }

    pub fn to_layer_params(&self) -> NetworkParams {
        let mut layers = Vec::new();
        let mut off = 0;
        for (out, fan_in) in self.arch.layer_shapes() {
            let weights = self.params[off..off + out * fan_in].to_vec();
            off += out * fan_in;
            let bias = self.params[off..off + out].to_vec();
            off += out;
            layers.push(LayerParams { inputs: fan_in, outputs: out, weights, bias });
        }
        NetworkParams { output_tanh: self.arch.output_tanh, layers }
    }

    pub fn from_layer_params(p: &NetworkParams) -> Result<LyapunovNet, NetworkError> {
        let (last, hidden) = p
            .layers
            .split_last()
            .ok_or_else(|| NetworkError::Malformed("no layers".into()))?;
        if last.outputs != 1 {
            return Err(NetworkError::Malformed("output layer must have width 1".into()));
        }
        let n_inputs = p.layers[0].inputs;
        let mut fan_in = n_inputs;
        let mut params = Vec::new();
        for layer in &p.layers {
            if layer.inputs != fan_in
                || layer.weights.len() != layer.inputs * layer.outputs
                || layer.bias.len() != layer.outputs
            {
                return Err(NetworkError::Malformed(format!(
                    "inconsistent layer {}x{} with {} weights and {} biases",
                    layer.outputs,
                    layer.inputs,
                    layer.weights.len(),
                    layer.bias.len()
                )));
            }
            params.extend_from_slice(&layer.weights);
            params.extend_from_slice(&layer.bias);
            fan_in = layer.outputs;
        }
        let arch = Architecture {
            n_inputs,
            hidden: hidden.iter().map(|l| l.outputs).collect(),
            output_tanh: p.output_tanh,
        };
        LyapunovNet::from_params(arch, params)
    }

    /// `V(x)` together with `dV/dx`, computed over an arbitrary domain.
    /// `params` must have the layout of [`LyapunovNet::params`].
    pub fn value_and_grad_in<D: EvalDomain>(
        arch: &Architecture,
        d: &mut D,
        params: &[D::Value],
        x: &[D::Value],
    ) -> (D::Value, Vec<D::Value>) {
        let shapes = arch.layer_shapes();
        let mut acts: Vec<Vec<D::Value>> = Vec::with_capacity(shapes.len());
        let mut offsets = Vec::with_capacity(shapes.len());
        let mut off = 0;
        let mut h: Vec<D::Value> = x.to_vec();
        for (l, &(out, fan_in)) in shapes.iter().enumerate() {
            offsets.push(off);
            let (w, b) = (&params[off..off + out * fan_in], &params[off + out * fan_in..off + out * fan_in + out]);
            off += out * fan_in + out;
            let mut next = Vec::with_capacity(out);
            for k in 0..out {
                let mut z = d.mul(&w[k * fan_in], &h[0]);
                for j in 1..fan_in {
                    let t = d.mul(&w[k * fan_in + j], &h[j]);
                    z = d.add(&z, &t);
                }
                z = d.add(&z, &b[k]);
                let is_output = l + 1 == shapes.len();
                next.push(if !is_output || arch.output_tanh { d.tanh(&z) } else { z });
            }
            if l + 1 < shapes.len() {
                acts.push(next.clone());
            }
            h = next;
        }
        let v = h[0].clone();

        // Backward pass: g holds dV/d(activation of the current layer).
        let (_, last_in) = shapes[shapes.len() - 1];
        let w_out = &params[offsets[shapes.len() - 1]..offsets[shapes.len() - 1] + last_in];
        let mut g: Vec<D::Value> = if arch.output_tanh {
            let one = d.constant(1.0);
            let v2 = d.powi(&v, 2);
            let s = d.sub(&one, &v2);
            w_out.iter().map(|w| d.mul(w, &s)).collect()
        } else {
            w_out.to_vec()
        };
        for l in (0..shapes.len() - 1).rev() {
            let (out, fan_in) = shapes[l];
            let w = &params[offsets[l]..offsets[l] + out * fan_in];
            let one = d.constant(1.0);
            let delta: Vec<D::Value> = (0..out)
                .map(|k| {
                    let h2 = d.powi(&acts[l][k], 2);
                    let s = d.sub(&one, &h2);
                    d.mul(&g[k], &s)
                })
                .collect();
            g = (0..fan_in)
                .map(|j| {
                    let mut acc = d.mul(&w[j], &delta[0]);
                    for k in 1..out {
                        let t = d.mul(&w[k * fan_in + j], &delta[k]);
                        acc = d.add(&acc, &t);
                    }
                    acc
                })
                .collect();
        }
        (v, g)
    }

    pub fn forward(&self, x: &[f64]) -> f64 {
        self.value_and_grad(x).0
    }

    /// `V(x)` and `dV/dx` by backpropagation.
    pub fn value_and_grad(&self, x: &[f64]) -> (f64, Vec<f64>) {
        assert_eq!(x.len(), self.arch.n_inputs, "state dimension mismatch");
        LyapunovNet::value_and_grad_in(&self.arch, &mut crate::expr::PointDomain, &self.params, x)
    }

    /// `V` as a closed-form expression over `x_0..x_{n-1}`.
    pub fn compile_v(&self) -> Expr {
        let mut b = ExprBuilder;
        let params: Vec<Expr> = self.params.iter().map(|&p| Expr::constant(p)).collect();
        let x: Vec<Expr> = (0..self.arch.n_inputs).map(Expr::var).collect();
        LyapunovNet::value_and_grad_in(&self.arch, &mut b, &params, &x).0
    }

    /// Lie derivative `sum_i dV/dx_i * f_i` built by symbolic
    /// differentiation of [`LyapunovNet::compile_v`].
    pub fn compile_lie_v(&self, system: &SystemSpec, ctrl: &LinearController) -> Result<Expr, NetworkError> {
        self.check_system(system)?;
        let f = system.closed_loop(ctrl)?;
        Ok(lie_derivative_expr(&self.compile_v(), &f))
    }

    fn check_system(&self, system: &SystemSpec) -> Result<(), NetworkError> {
        if system.n_states() != self.arch.n_inputs {
            return Err(NetworkError::DimensionMismatch(format!(
                "network takes {} inputs, system has {} states",
                self.arch.n_inputs,
                system.n_states()
            )));
        }
        Ok(())
    }

    /// Lie derivative at a point using the backprop gradient.
    pub fn lie_derivative_at(
        &self,
        system: &SystemSpec,
        ctrl: &LinearController,
        x: &[f64],
    ) -> Result<f64, NetworkError> {
        LieEvaluator::new(self, system, ctrl)?.eval(x).map(|(_, l)| l)
    }
}

/// `sum_i dV/dx_i * f_i` for an arbitrary expression `V`.
pub fn lie_derivative_expr(v: &Expr, field: &[Expr]) -> Expr {
    let terms: Vec<Expr> = field.iter().enumerate().map(|(i, fi)| v.differentiate(i).mul(fi)).collect();
    Expr::sum(&terms)
}

/// Cached pointwise evaluation of `(V(x), LieV(x))` for one network,
/// controller and system.
pub struct LieEvaluator<'a> {
    net: &'a LyapunovNet,
    ctrl: &'a LinearController,
    dynamics: Tape,
    scratch: Vec<f64>,
}

impl<'a> LieEvaluator<'a> {
    pub fn new(
        net: &'a LyapunovNet,
        system: &SystemSpec,
        ctrl: &'a LinearController,
    ) -> Result<LieEvaluator<'a>, NetworkError> {
        net.check_system(system)?;
        if ctrl.n_states() != system.n_states() || ctrl.n_inputs() != system.n_inputs() {
            return Err(NetworkError::DimensionMismatch("controller does not match system".into()));
        }
        Ok(LieEvaluator { net, ctrl, dynamics: system.open_loop_tape(), scratch: Vec::new() })
    }

    pub fn eval(&mut self, x: &[f64]) -> Result<(f64, f64), NetworkError> {
        let (v, g) = self.net.value_and_grad(x);
        let u = self.ctrl.apply(x);
        let f = self.dynamics.eval_point_with(x, &u, &mut self.scratch)?;
        Ok((v, g.iter().zip(&f).map(|(a, b)| a * b).sum()))
    }
}

/// [`EvalDomain`] that builds expressions instead of numbers.
#[derive(Debug, Default, Clone, Copy)]
pub struct ExprBuilder;

impl EvalDomain for ExprBuilder {
    type Value = Expr;

    fn constant(&mut self, c: f64) -> Expr {
        Expr::constant(c)
    }
    fn neg(&mut self, a: &Expr) -> Expr {
        a.neg()
    }
    fn add(&mut self, a: &Expr, b: &Expr) -> Expr {
        a.add(b)
    }
    fn sub(&mut self, a: &Expr, b: &Expr) -> Expr {
        a.sub(b)
    }
    fn mul(&mut self, a: &Expr, b: &Expr) -> Expr {
        a.mul(b)
    }
    fn div(&mut self, a: &Expr, b: &Expr) -> Result<Expr, EvalError> {
        Ok(a.div(b))
    }
    fn powi(&mut self, a: &Expr, n: u32) -> Expr {
        a.powi(n)
    }
    fn sin(&mut self, a: &Expr) -> Expr {
        a.sin()
    }
    fn cos(&mut self, a: &Expr) -> Expr {
        a.cos()
    }
    fn tanh(&mut self, a: &Expr) -> Expr {
        a.tanh()
    }
}

/// Linear state feedback `u = K x` with no bias, so `u(0) = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearController {
    inputs: usize,
    states: usize,
    /// Row-major `inputs x states`.
    gain: Vec<f64>,
}

impl LinearController {
    pub fn new(n_inputs: usize, n_states: usize, gain: Vec<f64>) -> Result<LinearController, NetworkError> {
        if gain.len() != n_inputs * n_states {
            return Err(NetworkError::DimensionMismatch(format!(
                "gain has {} entries, expected {n_inputs}x{n_states}",
                gain.len()
            )));
        }
        if gain.iter().any(|g| !g.is_finite()) {
            return Err(NetworkError::Malformed("non-finite gain".into()));
        }
        Ok(LinearController { inputs: n_inputs, states: n_states, gain })
    }

    pub fn zeros(n_inputs: usize, n_states: usize) -> LinearController {
        LinearController { inputs: n_inputs, states: n_states, gain: vec![0.0; n_inputs * n_states] }
    }

    pub fn n_inputs(&self) -> usize {
        self.inputs
    }

    pub fn n_states(&self) -> usize {
        self.states
    }

    pub fn gain(&self) -> &[f64] {
        &self.gain
    }

    pub fn get(&self, j: usize, i: usize) -> f64 {
        self.gain[j * self.states + i]
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        (0..self.inputs)
            .map(|j| (0..self.states).map(|i| self.get(j, i) * x[i]).sum())
            .collect()
    }

    /// `u_j = sum_i K[j][i] x_i` as expressions.
    pub fn exprs(&self) -> Vec<Expr> {
        (0..self.inputs)
            .map(|j| {
                let terms: Vec<Expr> =
                    (0..self.states).map(|i| Expr::constant(self.get(j, i)).mul(&Expr::var(i))).collect();
                Expr::sum(&terms)
            })
            .collect()
    }
}
