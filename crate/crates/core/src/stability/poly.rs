//! Scalar types the net-flow expression can be evaluated over.

use std::ops::{Add, Mul, Sub};

/// Minimal ring interface shared by point values, quadratics and intervals.
pub trait Scalar:
    Clone + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Mul<f64, Output = Self>
{
    fn constant(c: f64) -> Self;
}

impl Scalar for f64 {
    #[inline]
    fn constant(c: f64) -> Self {
        c
    }
}

pub const MAX_VARS: usize = 3;

/// Quadratic `c + g.x + x'Hx / 2` in at most three variables.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Poly2 {
    pub c: f64,
    pub g: [f64; MAX_VARS],
    pub h: [[f64; MAX_VARS]; MAX_VARS],
}

impl Poly2 {
    pub fn affine(c: f64, var: Option<usize>, slope: f64) -> Self {
        let mut p = Self::constant(c);
        if let Some(i) = var {
            p.g[i] = slope;
        }
        p
    }

    fn is_affine(&self) -> bool {
        self.h.iter().flatten().all(|&x| x == 0.0)
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let mut v = self.c;
        for i in 0..MAX_VARS {
            v += self.g[i] * x[i];
            for j in 0..MAX_VARS {
                v += 0.5 * self.h[i][j] * x[i] * x[j];
            }
        }
        v
    }
}

impl Scalar for Poly2 {
    fn constant(c: f64) -> Self {
        Self {
            c,
            g: [0.0; MAX_VARS],
            h: [[0.0; MAX_VARS]; MAX_VARS],
        }
    }
}

impl Add for Poly2 {
    type Output = Self;
    fn add(mut self, o: Self) -> Self {
        self.c += o.c;
        for i in 0..MAX_VARS {
            self.g[i] += o.g[i];
            for j in 0..MAX_VARS {
                self.h[i][j] += o.h[i][j];
            }
        }
        self
    }
}

impl Sub for Poly2 {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        self + o * -1.0
    }
}

impl Mul<f64> for Poly2 {
    type Output = Self;
    fn mul(mut self, k: f64) -> Self {
        self.c *= k;
        for i in 0..MAX_VARS {
            self.g[i] *= k;
            for j in 0..MAX_VARS {
                self.h[i][j] *= k;
            }
        }
        self
    }
}

impl Mul for Poly2 {
    type Output = Self;
    /// Product of two affine functions.
    fn mul(self, o: Self) -> Self {
        debug_assert!(self.is_affine() && o.is_affine());
        let mut p = Self::constant(self.c * o.c);
        for i in 0..MAX_VARS {
            p.g[i] = self.c * o.g[i] + o.c * self.g[i];
            for j in 0..MAX_VARS {
                p.h[i][j] = self.g[i] * o.g[j] + self.g[j] * o.g[i];
            }
        }
        p
    }
}

/// Closed interval with outward arithmetic, used for pruning bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(a: f64, b: f64) -> Self {
        Self { lo: a.min(b), hi: a.max(b) }
    }

    pub fn min(self, o: Self) -> Self {
        Self { lo: self.lo.min(o.lo), hi: self.hi.min(o.hi) }
    }
}

impl Scalar for Interval {
    fn constant(c: f64) -> Self {
        Self { lo: c, hi: c }
    }
}

impl Add for Interval {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self { lo: self.lo + o.lo, hi: self.hi + o.hi }
    }
}

impl Sub for Interval {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self { lo: self.lo - o.hi, hi: self.hi - o.lo }
    }
}

impl Mul<f64> for Interval {
    type Output = Self;
    fn mul(self, k: f64) -> Self {
        Self::new(self.lo * k, self.hi * k)
    }
}

impl Mul for Interval {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        let p = [self.lo * o.lo, self.lo * o.hi, self.hi * o.lo, self.hi * o.hi];
        Self {
            lo: p.iter().copied().fold(f64::INFINITY, f64::min),
            hi: p.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}
