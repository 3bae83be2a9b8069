//! Closed real intervals with outward rounding.
//!
//! Rounding is emulated after the fact: every bound computed in
//! round-to-nearest is pushed one ulp outward with `next_down`/`next_up`.
//! Basic arithmetic is correctly rounded, so the true bound is within half an
//! ulp of the computed one; libm's `sin`, `cos` and `tanh` are accurate to
//! better than one ulp on the platforms we target.

use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::EvalError;

#[derive(Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

#[inline]
fn down(x: f64) -> f64 {
    x.next_down()
}

#[inline]
fn up(x: f64) -> f64 {
    x.next_up()
}

impl Interval {
    /// Panics if `lo > hi` or either bound is NaN.
    pub fn new(lo: f64, hi: f64) -> Interval {
        assert!(lo <= hi, "invalid interval [{lo}, {hi}]");
        Interval { lo, hi }
    }

    pub fn point(x: f64) -> Interval {
        Interval { lo: x, hi: x }
    }

    /// Symmetric interval `[-r, r]`.
    pub fn symmetric(r: f64) -> Interval {
        Interval::new(-r.abs(), r.abs())
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn mid(&self) -> f64 {
        // Avoids overflow for huge bounds.
        self.lo + 0.5 * (self.hi - self.lo)
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn contains_zero(&self) -> bool {
        self.contains(0.0)
    }

    pub fn is_subset_of(&self, other: &Interval) -> bool {
        other.lo <= self.lo && self.hi <= other.hi
    }

    pub fn is_finite(&self) -> bool {
        self.lo.is_finite() && self.hi.is_finite()
    }

    /// Smallest absolute value attained on the interval.
    pub fn mig(&self) -> f64 {
        if self.contains_zero() {
            0.0
        } else {
            self.lo.abs().min(self.hi.abs())
        }
    }

    /// Largest absolute value attained on the interval.
    pub fn mag(&self) -> f64 {
        self.lo.abs().max(self.hi.abs())
    }

    pub fn hull(&self, other: &Interval) -> Interval {
        Interval { lo: self.lo.min(other.lo), hi: self.hi.max(other.hi) }
    }

    pub fn neg(self) -> Interval {
        Interval { lo: -self.hi, hi: -self.lo }
    }

    pub fn add(self, rhs: Interval) -> Interval {
        Interval { lo: down(self.lo + rhs.lo), hi: up(self.hi + rhs.hi) }
    }

    pub fn sub(self, rhs: Interval) -> Interval {
        Interval { lo: down(self.lo - rhs.hi), hi: up(self.hi - rhs.lo) }
    }

    pub fn mul(self, rhs: Interval) -> Interval {
        let p = [self.lo * rhs.lo, self.lo * rhs.hi, self.hi * rhs.lo, self.hi * rhs.hi];
        let lo = p.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = p.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Interval { lo: down(lo), hi: up(hi) }
    }

    pub fn div(self, rhs: Interval) -> Result<Interval, EvalError> {
        if rhs.contains_zero() {
            return Err(EvalError::DomainError(rhs));
        }
        let q = [self.lo / rhs.lo, self.lo / rhs.hi, self.hi / rhs.lo, self.hi / rhs.hi];
        let lo = q.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok(Interval { lo: down(lo), hi: up(hi) })
    }

    /// Exact range of `x^n` (up to rounding), not the product `x * x * ...`.
    pub fn powi(self, n: u32) -> Interval {
        if n == 0 {
            return Interval::point(1.0);
        }
        if n == 1 {
            return self;
        }
        if n % 2 == 1 {
            // Odd powers are monotone.
            return Interval { lo: pow_down(self.lo, n), hi: pow_up(self.hi, n) };
        }
        let (a, b) = (self.mig(), self.mag());
        let lo = if a == 0.0 { 0.0 } else { pow_down(a, n).max(0.0) };
        Interval { lo, hi: pow_up(b, n) }
    }

    pub fn tanh(self) -> Interval {
        Interval { lo: down(self.lo.tanh()).max(-1.0), hi: up(self.hi.tanh()).min(1.0) }
    }

    pub fn sin(self) -> Interval {
        periodic_range(self, f64::sin, FRAC_PI_2, -FRAC_PI_2)
    }

    pub fn cos(self) -> Interval {
        periodic_range(self, f64::cos, 0.0, PI)
    }
}

/// Range of a 2π-periodic function with values in [-1, 1] whose maximum is
/// attained at `max_phase + 2kπ` and minimum at `min_phase + 2kπ`.
fn periodic_range(x: Interval, f: fn(f64) -> f64, max_phase: f64, min_phase: f64) -> Interval {
    if !x.is_finite() || x.width() >= TAU {
        return Interval::new(-1.0, 1.0);
    }
    let (fa, fb) = (f(x.lo), f(x.hi));
    let mut lo = down(fa.min(fb));
    let mut hi = up(fa.max(fb));
    if hits_phase(x, max_phase) {
        hi = 1.0;
    }
    if hits_phase(x, min_phase) {
        lo = -1.0;
    }
    Interval { lo: lo.max(-1.0), hi: hi.min(1.0) }
}

/// Whether some `phase + 2kπ` lies in `x`, erring towards `true` when the
/// candidate lands within rounding distance of an endpoint.
fn hits_phase(x: Interval, phase: f64) -> bool {
    let tol = 1e-12 * (1.0 + x.mag());
    let k = ((x.lo - phase) / TAU).floor();
    [k, k + 1.0, k + 2.0].iter().any(|&k| {
        let p = phase + k * TAU;
        p >= x.lo - tol && p <= x.hi + tol
    })
}

/// `x^n` rounded towards minus infinity.
fn pow_down(x: f64, n: u32) -> f64 {
    if x >= 0.0 {
        pos_pow(x, n, down)
    } else {
        // n is odd whenever a negative base reaches here.
        -pos_pow(-x, n, up)
    }
}

/// `x^n` rounded towards plus infinity.
fn pow_up(x: f64, n: u32) -> f64 {
    if x >= 0.0 {
        pos_pow(x, n, up)
    } else {
        -pos_pow(-x, n, down)
    }
}

/// Repeated multiplication of a non-negative base with a rounding step after
/// each product.
fn pos_pow(x: f64, n: u32, round: fn(f64) -> f64) -> f64 {
    let mut acc = x;
    for _ in 1..n {
        acc = round(acc * x).max(0.0);
    }
    acc
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{:?}, {:?}]", self.lo, self.hi)
    }
}

impl fmt::Debug for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

/// Axis-aligned box in state space, one interval per state variable.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct StateBox {
    dims: Vec<Interval>,
}

impl StateBox {
    pub fn new(dims: Vec<Interval>) -> StateBox {
        StateBox { dims }
    }

    /// The cube `[-r, r]^n`.
    pub fn cube(n: usize, r: f64) -> StateBox {
        StateBox { dims: vec![Interval::symmetric(r); n] }
    }

    pub fn dim(&self) -> usize {
        self.dims.len()
    }

    pub fn intervals(&self) -> &[Interval] {
        &self.dims
    }

    pub fn get(&self, i: usize) -> Interval {
        self.dims[i]
    }

    pub fn midpoint(&self) -> Vec<f64> {
        self.dims.iter().map(Interval::mid).collect()
    }

    /// Index and width of the widest side.
    pub fn widest(&self) -> (usize, f64) {
        self.dims
            .iter()
            .enumerate()
            .map(|(i, iv)| (i, iv.width()))
            .fold((0, f64::NEG_INFINITY), |best, cur| if cur.1 > best.1 { cur } else { best })
    }

    pub fn max_width(&self) -> f64 {
        self.widest().1
    }

    pub fn volume(&self) -> f64 {
        self.dims.iter().map(Interval::width).product()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dims.len() && self.dims.iter().zip(x).all(|(iv, &v)| iv.contains(v))
    }

    pub fn is_subset_of(&self, other: &StateBox) -> bool {
        self.dim() == other.dim() && self.dims.iter().zip(&other.dims).all(|(a, b)| a.is_subset_of(b))
    }

    /// Bisects dimension `i` at its midpoint.
    pub fn split(&self, i: usize) -> (StateBox, StateBox) {
        let iv = self.dims[i];
        let m = iv.mid();
        let mut left = self.clone();
        let mut right = self.clone();
        left.dims[i] = Interval { lo: iv.lo, hi: m };
        right.dims[i] = Interval { lo: m, hi: iv.hi };
        (left, right)
    }

    /// Outward-rounded enclosure of the squared Euclidean norm over the box.
    pub fn norm_sq(&self) -> Interval {
        self.dims
            .iter()
            .fold(Interval::point(0.0), |acc, iv| acc.add(iv.powi(2)))
    }
}

impl fmt::Debug for StateBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(&self.dims).finish()
    }
}
