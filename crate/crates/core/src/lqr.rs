//! LQR initialisation: linearise at the origin, solve the continuous
//! algebraic Riccati equation, and check the closed loop is Hurwitz.
//!
//! The CARE is solved with the scaled matrix-sign-function Newton iteration
//! on the Hamiltonian
//!
//! ```text
//!     H = [  A   -B R^-1 B^T ]
//!         [ -Q        -A^T   ]
//! ```
//!
//! whose stable invariant subspace is spanned by `[I; P]`. A few Kleinman
//! (Newton–Lyapunov) sweeps then polish `P` to full precision.

use nalgebra::DMatrix;
use thiserror::Error;

use crate::expr::{EvalError, Expr};
use crate::network::LinearController;
use crate::system::SystemSpec;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LqrError {
    #[error("dynamics cannot be differentiated at the origin: {0}")]
    OriginSingularity(EvalError),
    #[error("origin is not an equilibrium: |f(0, 0)| = {0:e}")]
    NonEquilibrium(f64),
    #[error("pair (A, B) is not stabilizable: {0}")]
    NotStabilizable(String),
    #[error("ill-conditioned problem: {0}")]
    IllConditioned(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

/// Jacobians of the open-loop dynamics at `x = 0, u = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearizedSystem {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LqrSolution {
    /// Stabilizing solution of the Riccati equation.
    pub p: DMatrix<f64>,
    /// Optimal gain for `u = -K x`.
    pub k: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
}

impl LqrSolution {
    /// The controller `u = -K x` in this crate's `u = K' x` convention.
    pub fn controller(&self) -> LinearController {
        let (m, n) = self.k.shape();
        let gain = (0..m).flat_map(|j| (0..n).map(move |i| (j, i))).map(|(j, i)| -self.k[(j, i)]).collect();
        LinearController::new(m, n, gain).expect("gain shape is consistent")
    }

    /// `x^T P x` as an expression.
    pub fn quadratic_expr(&self) -> Expr {
        quadratic_form_expr(&self.p)
    }
}

/// `x^T M x` with the symmetric part of `M`, as an expression.
pub fn quadratic_form_expr(m: &DMatrix<f64>) -> Expr {
    let n = m.nrows();
    let mut terms = Vec::new();
    for i in 0..n {
        terms.push(Expr::constant(m[(i, i)]).mul(&Expr::var(i).powi(2)));
        for j in i + 1..n {
            let c = m[(i, j)] + m[(j, i)];
            terms.push(Expr::constant(c).mul(&Expr::var(i).mul(&Expr::var(j))));
        }
    }
    Expr::sum(&terms)
}

const EQUILIBRIUM_TOL: f64 = 1e-9;

pub fn linearize(system: &SystemSpec) -> Result<LinearizedSystem, LqrError> {
    let (n, m) = (system.n_states(), system.n_inputs());
    // Inputs become extra variables x_n..x_{n+m-1} so one differentiation
    // routine covers both Jacobians.
    let lifted: Vec<Expr> = (0..m).map(|j| Expr::var(n + j)).collect();
    let origin = vec![0.0; n + m];
    let mut a = DMatrix::zeros(n, n);
    let mut b = DMatrix::zeros(n, m);
    for (i, fi) in system.dynamics().iter().enumerate() {
        let f = fi.substitute_inputs(&lifted).map_err(LqrError::OriginSingularity)?;
        let f0 = f.eval_point(&origin).map_err(LqrError::OriginSingularity)?;
        if f0.abs() > EQUILIBRIUM_TOL {
            return Err(LqrError::NonEquilibrium(f0.abs()));
        }
        for j in 0..n + m {
            let d = f.differentiate(j).eval_point(&origin).map_err(LqrError::OriginSingularity)?;
            if j < n {
                a[(i, j)] = d;
            } else {
                b[(i, j - n)] = d;
            }
        }
    }
    Ok(LinearizedSystem { a, b })
}

/// `A^T P + P A - P B R^-1 B^T P + Q`.
pub fn riccati_residual(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    p: &DMatrix<f64>,
) -> Result<DMatrix<f64>, LqrError> {
    let r_inv = r.clone().try_inverse().ok_or_else(|| LqrError::IllConditioned("R is singular".into()))?;
    Ok(a.transpose() * p + p * a - p * b * r_inv * b.transpose() * p + q)
}

fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |acc, v| acc.max(v.abs()))
}

const SIGN_MAX_ITERS: usize = 100;
const SIGN_TOL: f64 = 1e-13;

pub fn solve_care(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Result<LqrSolution, LqrError> {
    let n = a.nrows();
    let m = b.ncols();
    if !a.is_square() || b.nrows() != n || q.shape() != (n, n) || r.shape() != (m, m) {
        return Err(LqrError::DimensionMismatch(format!(
            "A {:?}, B {:?}, Q {:?}, R {:?}",
            a.shape(),
            b.shape(),
            q.shape(),
            r.shape()
        )));
    }
    let r_inv = r.clone().try_inverse().ok_or_else(|| LqrError::IllConditioned("R is singular".into()))?;
    let s = b * &r_inv * b.transpose();

    let mut h = DMatrix::zeros(2 * n, 2 * n);
    h.view_mut((0, 0), (n, n)).copy_from(a);
    h.view_mut((0, n), (n, n)).copy_from(&(-&s));
    h.view_mut((n, 0), (n, n)).copy_from(&(-q));
    h.view_mut((n, n), (n, n)).copy_from(&(-a.transpose()));

    let mut z = h;
    let mut converged = false;
    for _ in 0..SIGN_MAX_ITERS {
        let lu = z.clone().lu();
        let det = lu.determinant();
        let z_inv = lu
            .try_inverse()
            .ok_or_else(|| LqrError::NotStabilizable("Hamiltonian has eigenvalues on the imaginary axis".into()))?;
        // Determinant scaling speeds up the early iterations.
        let c = det.abs().powf(1.0 / (2 * n) as f64);
        let c = if c.is_finite() && c > 0.0 { c } else { 1.0 };
        let next = (&z / c + &z_inv * c) * 0.5;
        let change = max_abs(&(&next - &z));
        let scale = max_abs(&z);
        z = next;
        if !change.is_finite() {
            return Err(LqrError::NotStabilizable("sign iteration diverged".into()));
        }
        if change <= SIGN_TOL * scale.max(1.0) {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(LqrError::NotStabilizable("sign iteration did not converge".into()));
    }

    // (sign(H) + I) [I; P] = 0, solved in the least-squares sense.
    let w11 = z.view((0, 0), (n, n)).into_owned();
    let w12 = z.view((0, n), (n, n)).into_owned();
    let w21 = z.view((n, 0), (n, n)).into_owned();
    let w22 = z.view((n, n), (n, n)).into_owned();
    let eye = DMatrix::<f64>::identity(n, n);
    let mut lhs = DMatrix::zeros(2 * n, n);
    lhs.view_mut((0, 0), (n, n)).copy_from(&w12);
    lhs.view_mut((n, 0), (n, n)).copy_from(&(w22 + &eye));
    let mut rhs = DMatrix::zeros(2 * n, n);
    rhs.view_mut((0, 0), (n, n)).copy_from(&(-(w11 + &eye)));
    rhs.view_mut((n, 0), (n, n)).copy_from(&(-w21));
    let normal = lhs.transpose() * &lhs;
    let p = normal
        .lu()
        .solve(&(lhs.transpose() * rhs))
        .ok_or_else(|| LqrError::IllConditioned("stable subspace is not a graph over the state".into()))?;
    let mut p = (&p + p.transpose()) * 0.5;

    // Kleinman refinement: solve (A - S P)^T X + X (A - S P) = -(Q + P S P).
    let mut best = max_abs(&riccati_residual(a, b, q, r, &p)?);
    for _ in 0..4 {
        if best == 0.0 {
            break;
        }
        let acl = a - &s * &p;
        let rhs = -(q + &p * &s * &p);
        let Some(next) = solve_lyapunov(&acl, &rhs) else { break };
        let next = (&next + next.transpose()) * 0.5;
        let res = max_abs(&riccati_residual(a, b, q, r, &next)?);
        if !(res < best) {
            break;
        }
        best = res;
        p = next;
    }

    if p.iter().any(|v| !v.is_finite()) {
        return Err(LqrError::IllConditioned("non-finite Riccati solution".into()));
    }
    let k = &r_inv * b.transpose() * &p;
    if !hurwitz_check(&(a - b * &k)) {
        return Err(LqrError::NotStabilizable("closed loop A - BK is not Hurwitz".into()));
    }
    Ok(LqrSolution { p, k, q: q.clone(), r: r.clone() })
}

/// Solves `M^T X + X M = C` through the Kronecker formulation.
fn solve_lyapunov(m: &DMatrix<f64>, c: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = m.nrows();
    let eye = DMatrix::<f64>::identity(n, n);
    // vec(M^T X) = (I ⊗ M^T) vec X, vec(X M) = (M^T ⊗ I) vec X (column-major vec).
    let big = eye.kronecker(&m.transpose()) + m.transpose().kronecker(&eye);
    let rhs = DMatrix::from_column_slice(n * n, 1, c.as_slice());
    let sol = big.lu().solve(&rhs)?;
    Some(DMatrix::from_column_slice(n, n, sol.as_slice()))
}

/// Characteristic polynomial coefficients `[1, c1, ..., cn]` of
/// `det(sI - M) = s^n + c1 s^(n-1) + ... + cn` (Faddeev–LeVerrier).
pub fn characteristic_polynomial(m: &DMatrix<f64>) -> Vec<f64> {
    let n = m.nrows();
    let eye = DMatrix::<f64>::identity(n, n);
    let mut coeffs = vec![1.0];
    let mut mk = DMatrix::<f64>::zeros(n, n);
    for k in 1..=n {
        mk = m * &mk + &eye * coeffs[k - 1];
        let ck = -(m * &mk).trace() / k as f64;
        coeffs.push(ck);
    }
    coeffs
}

/// Whether every eigenvalue of `m` has a strictly negative real part,
/// decided by the Routh–Hurwitz criterion.
pub fn hurwitz_check(m: &DMatrix<f64>) -> bool {
    assert!(m.is_square(), "hurwitz_check needs a square matrix");
    let n = m.nrows();
    if n == 0 {
        return true;
    }
    routh_stable(&characteristic_polynomial(m))
}

/// Routh test on `a0 s^n + a1 s^(n-1) + ... + an` with `a0 > 0`.
fn routh_stable(coeffs: &[f64]) -> bool {
    if coeffs.iter().any(|c| !c.is_finite()) || coeffs[0] <= 0.0 {
        return false;
    }
    let n = coeffs.len() - 1;
    let mut prev: Vec<f64> = coeffs.iter().step_by(2).copied().collect();
    let mut cur: Vec<f64> = coeffs.iter().skip(1).step_by(2).copied().collect();
    let get = |v: &[f64], j: usize| v.get(j).copied().unwrap_or(0.0);
    for row in 1..=n {
        let pivot = get(&cur, 0);
        if pivot <= 0.0 {
            return false;
        }
        if row == n {
            break;
        }
        let width = prev.len().saturating_sub(1).max(1);
        let next: Vec<f64> =
            (0..width).map(|j| (pivot * get(&prev, j + 1) - prev[0] * get(&cur, j + 1)) / pivot).collect();
        prev = cur;
        cur = next;
    }
    true
}

/// LQR controller for `system` with weights `q`, `r` (identities when
/// `None`).
pub fn lqr_for_system(
    system: &SystemSpec,
    q: Option<&DMatrix<f64>>,
    r: Option<&DMatrix<f64>>,
) -> Result<(LinearizedSystem, LqrSolution), LqrError> {
    let lin = linearize(system)?;
    let (n, m) = (system.n_states(), system.n_inputs());
    let q = q.cloned().unwrap_or_else(|| DMatrix::identity(n, n));
    let r = r.cloned().unwrap_or_else(|| DMatrix::identity(m, m));
    let sol = solve_care(&lin.a, &lin.b, &q, &r)?;
    Ok((lin, sol))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::Domain;

    fn m(rows: usize, cols: usize, v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(rows, cols, v)
    }

    #[test]
    fn scalar_unstable_plant() {
        // 2P - P^2 + 1 = 0  =>  P = 1 + sqrt(2)
        let s = solve_care(&m(1, 1, &[1.0]), &m(1, 1, &[1.0]), &m(1, 1, &[1.0]), &m(1, 1, &[1.0])).unwrap();
        let want = 1.0 + 2f64.sqrt();
        assert!((s.p[(0, 0)] - want).abs() < 1e-10);
        assert!((s.k[(0, 0)] - want).abs() < 1e-10);
    }

    #[test]
    fn scalar_integrator() {
        let s = solve_care(&m(1, 1, &[0.0]), &m(1, 1, &[1.0]), &m(1, 1, &[1.0]), &m(1, 1, &[1.0])).unwrap();
        assert!((s.p[(0, 0)] - 1.0).abs() < 1e-10);
        assert!((s.k[(0, 0)] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn double_integrator_gain() {
        let a = m(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let b = m(2, 1, &[0.0, 1.0]);
        let s = solve_care(&a, &b, &DMatrix::identity(2, 2), &m(1, 1, &[1.0])).unwrap();
        assert!((s.k[(0, 0)] - 1.0).abs() < 1e-10);
        assert!((s.k[(0, 1)] - 3f64.sqrt()).abs() < 1e-10);
        let res = riccati_residual(&a, &b, &s.q, &s.r, &s.p).unwrap();
        assert!(max_abs(&res) <= 1e-8 * 2.0);
        let c = s.controller();
        assert_eq!(c.gain(), &[-s.k[(0, 0)], -s.k[(0, 1)]]);
    }

    #[test]
    fn uncontrollable_unstable_mode_fails() {
        let a = m(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        let b = m(2, 1, &[0.0, 1.0]);
        let r = solve_care(&a, &b, &DMatrix::identity(2, 2), &m(1, 1, &[1.0]));
        assert!(matches!(r, Err(LqrError::NotStabilizable(_)) | Err(LqrError::IllConditioned(_))), "{r:?}");
    }

    #[test]
    fn hurwitz_examples() {
        assert!(hurwitz_check(&m(1, 1, &[-1.0])));
        assert!(!hurwitz_check(&m(2, 2, &[0.0, 1.0, -1.0, 0.0])));
        assert!(hurwitz_check(&m(2, 2, &[0.0, 1.0, -1.0, -1.0])));
        assert!(!hurwitz_check(&m(1, 1, &[0.5])));
        assert!(!hurwitz_check(&m(3, 3, &[-1.0, 0.0, 0.0, 0.0, -2.0, 0.0, 0.0, 0.0, 0.1])));
        assert!(hurwitz_check(&m(3, 3, &[-1.0, 5.0, 0.0, -5.0, -1.0, 0.0, 0.0, 0.0, -0.1])));
    }

    #[test]
    fn characteristic_polynomial_of_companion() {
        let c = characteristic_polynomial(&m(2, 2, &[0.0, 1.0, -2.0, -3.0]));
        assert_eq!(c, vec![1.0, 3.0, 2.0]);
    }

    #[test]
    fn linearize_scalar_and_errors() {
        let sys = SystemSpec::new("s", 1, 1, vec![-Expr::var(0) + Expr::input(0)], Domain::ball(1.0)).unwrap();
        let lin = linearize(&sys).unwrap();
        assert_eq!((lin.a[(0, 0)], lin.b[(0, 0)]), (-1.0, 1.0));

        let off = SystemSpec::new("o", 1, 0, vec![Expr::var(0) + 1.0], Domain::ball(1.0)).unwrap();
        assert!(matches!(linearize(&off), Err(LqrError::NonEquilibrium(_))));

        let sing = SystemSpec::new("d", 1, 0, vec![Expr::var(0) / Expr::var(0)], Domain::ball(1.0)).unwrap();
        assert!(matches!(linearize(&sing), Err(LqrError::OriginSingularity(_))));
    }

    #[test]
    fn linearize_pendulum() {
        let (g, l) = (9.81, 0.5);
        let sys = SystemSpec::new(
            "p",
            2,
            1,
            vec![Expr::var(1), Expr::constant(g / l) * Expr::var(0).sin() + Expr::input(0)],
            Domain::ball(6.0),
        )
        .unwrap();
        let lin = linearize(&sys).unwrap();
        assert_eq!(lin.a, m(2, 2, &[0.0, 1.0, g / l, 0.0]));
        assert_eq!(lin.b, m(2, 1, &[0.0, 1.0]));
    }

    #[test]
    fn quadratic_form_matches_matrix_product() {
        let p = m(2, 2, &[2.0, 0.5, 0.5, 3.0]);
        let e = quadratic_form_expr(&p);
        let x = [0.7, -1.2];
        let want = 2.0 * 0.49 + 2.0 * 0.5 * 0.7 * -1.2 + 3.0 * 1.44;
        assert!((e.eval_point(&x).unwrap() - want).abs() < 1e-14);
    }
}
