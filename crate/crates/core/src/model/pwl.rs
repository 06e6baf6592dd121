//! Continuous piecewise-linear functions on a closed interval.

/// Continuous piecewise-linear function given by its knots.
#[derive(Debug, Clone, PartialEq)]
pub struct Pwl {
    xs: Vec<f64>,
    ys: Vec<f64>,
}

fn knot_tol(lo: f64, hi: f64) -> f64 {
    1e-12 * (1.0 + lo.abs().max(hi.abs()))
}

impl Pwl {
    /// `y = a + b x` on `[lo, hi]`.
    pub fn affine(lo: f64, hi: f64, a: f64, b: f64) -> Self {
        if hi - lo <= knot_tol(lo, hi) {
            Self {
                xs: vec![lo],
                ys: vec![a + b * lo],
            }
        } else {
            Self {
                xs: vec![lo, hi],
                ys: vec![a + b * lo, a + b * hi],
            }
        }
    }

    pub fn constant(lo: f64, hi: f64, c: f64) -> Self {
        Self::affine(lo, hi, c, 0.0)
    }

    pub fn knots(&self) -> &[f64] {
        &self.xs
    }

    pub fn values(&self) -> &[f64] {
        &self.ys
    }

    pub fn lo(&self) -> f64 {
        self.xs[0]
    }

    pub fn hi(&self) -> f64 {
        *self.xs.last().unwrap()
    }

    /// Evaluates with linear extrapolation past the ends.
    pub fn eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if n == 1 {
            return self.ys[0];
        }
        let i = match self.xs.partition_point(|&k| k <= x) {
            0 => 0,
            p if p >= n => n - 2,
            p => p - 1,
        };
        let (x0, x1, y0, y1) = (self.xs[i], self.xs[i + 1], self.ys[i], self.ys[i + 1]);
        y0 + (y1 - y0) * (x - x0) / (x1 - x0)
    }

    /// Slope on the segment containing `x` (right derivative at knots).
    pub fn slope_at(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if n == 1 {
            return 0.0;
        }
        let i = self.xs.partition_point(|&k| k <= x).clamp(1, n - 1) - 1;
        (self.ys[i + 1] - self.ys[i]) / (self.xs[i + 1] - self.xs[i])
    }

    fn merged_knots(&self, other: &Self) -> Vec<f64> {
        let (lo, hi) = (self.lo(), self.hi());
        let tol = knot_tol(lo, hi);
        let mut xs: Vec<f64> = self
            .xs
            .iter()
            .chain(other.xs.iter().filter(|&&x| x > lo && x < hi))
            .copied()
            .collect();
        xs.sort_by(f64::total_cmp);
        xs.dedup_by(|a, b| (*a - *b).abs() <= tol);
        xs
    }

    fn combine(&self, other: &Self, crossings: bool, op: impl Fn(f64, f64) -> f64) -> Self {
        let mut xs = self.merged_knots(other);
        if crossings && xs.len() > 1 {
            let mut with_cross = Vec::with_capacity(xs.len() * 2);
            for w in xs.windows(2) {
                with_cross.push(w[0]);
                let d0 = self.eval(w[0]) - other.eval(w[0]);
                let d1 = self.eval(w[1]) - other.eval(w[1]);
                if d0 * d1 < 0.0 {
                    let x = w[0] + (w[1] - w[0]) * d0 / (d0 - d1);
                    if x > w[0] && x < w[1] {
                        with_cross.push(x);
                    }
                }
            }
            with_cross.push(*xs.last().unwrap());
            xs = with_cross;
        }
        let ys = xs.iter().map(|&x| op(self.eval(x), other.eval(x))).collect();
        Self { xs, ys }.simplified()
    }

    pub fn min(&self, other: &Self) -> Self {
        self.combine(other, true, f64::min)
    }

    pub fn max(&self, other: &Self) -> Self {
        self.combine(other, true, f64::max)
    }

    pub fn add(&self, other: &Self) -> Self {
        self.combine(other, false, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.combine(other, false, |a, b| a - b)
    }

    pub fn scale(&self, c: f64) -> Self {
        Self {
            xs: self.xs.clone(),
            ys: self.ys.iter().map(|y| y * c).collect(),
        }
    }

    pub fn min_const(&self, c: f64) -> Self {
        self.min(&Self::constant(self.lo(), self.hi(), c))
    }

    pub fn max_const(&self, c: f64) -> Self {
        self.max(&Self::constant(self.lo(), self.hi(), c))
    }

    /// Smallest value and where it is attained (leftmost on ties).
    pub fn minimum(&self) -> (f64, f64) {
        let mut best = (self.xs[0], self.ys[0]);
        for (&x, &y) in self.xs.iter().zip(&self.ys) {
            if y < best.1 {
                best = (x, y);
            }
        }
        best
    }

    /// Largest value and where it is attained (leftmost on ties).
    pub fn maximum(&self) -> (f64, f64) {
        let mut best = (self.xs[0], self.ys[0]);
        for (&x, &y) in self.xs.iter().zip(&self.ys) {
            if y > best.1 {
                best = (x, y);
            }
        }
        best
    }

    /// Leftmost zero, found exactly on the first sign-changing segment.
    pub fn first_root(&self) -> Option<f64> {
        if self.ys[0] == 0.0 {
            return Some(self.xs[0]);
        }
        for i in 0..self.xs.len() - 1 {
            let (y0, y1) = (self.ys[i], self.ys[i + 1]);
            if y1 == 0.0 {
                return Some(self.xs[i + 1]);
            }
            if y0.signum() != y1.signum() {
                let (x0, x1) = (self.xs[i], self.xs[i + 1]);
                return Some(x0 + (x1 - x0) * y0 / (y0 - y1));
            }
        }
        None
    }

    /// Drops knots where the function is locally linear.
    fn simplified(self) -> Self {
        let n = self.xs.len();
        if n <= 2 {
            return self;
        }
        let scale = self.ys.iter().fold(1.0f64, |m, y| m.max(y.abs()));
        let mut xs = vec![self.xs[0]];
        let mut ys = vec![self.ys[0]];
        for i in 1..n - 1 {
            let (x0, y0) = (*xs.last().unwrap(), *ys.last().unwrap());
            let (x2, y2) = (self.xs[i + 1], self.ys[i + 1]);
            let interp = y0 + (y2 - y0) * (self.xs[i] - x0) / (x2 - x0);
            if (interp - self.ys[i]).abs() > 1e-12 * scale {
                xs.push(self.xs[i]);
                ys.push(self.ys[i]);
            }
        }
        xs.push(self.xs[n - 1]);
        ys.push(self.ys[n - 1]);
        Self { xs, ys }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn min_inserts_crossing() {
        let a = Pwl::affine(0.0, 10.0, 0.0, 1.0);
        let b = Pwl::constant(0.0, 10.0, 4.0);
        let m = a.min(&b);
        assert_eq!(m.knots(), &[0.0, 4.0, 10.0]);
        assert_abs_diff_eq!(m.eval(7.0), 4.0);
        assert_abs_diff_eq!(m.eval(2.5), 2.5);
    }

    #[test]
    fn root_of_decreasing_function() {
        let f = Pwl::affine(0.0, 100.0, 50.0, -2.0).max_const(-10.0);
        assert_abs_diff_eq!(f.first_root().unwrap(), 25.0);
        assert!(Pwl::constant(0.0, 1.0, 3.0).first_root().is_none());
    }

    #[test]
    fn degenerate_interval() {
        let f = Pwl::affine(3.0, 3.0, 1.0, 2.0);
        assert_eq!(f.knots().len(), 1);
        assert_eq!(f.eval(3.0), 7.0);
        assert_eq!(f.min_const(5.0).eval(3.0), 5.0);
    }

    proptest! {
        #[test]
        fn pointwise_ops_agree(
            a0 in -50.0..50.0f64, a1 in -5.0..5.0f64,
            b0 in -50.0..50.0f64, b1 in -5.0..5.0f64,
            c in -20.0..20.0f64, x in 0.0..20.0f64,
        ) {
            let f = Pwl::affine(0.0, 20.0, a0, a1).min_const(c);
            let g = Pwl::affine(0.0, 20.0, b0, b1).max_const(-c);
            let fx = (a0 + a1 * x).min(c);
            let gx = (b0 + b1 * x).max(-c);
            let tol = 1e-9 * (1.0 + fx.abs() + gx.abs());
            prop_assert!((f.min(&g).eval(x) - fx.min(gx)).abs() < tol);
            prop_assert!((f.max(&g).eval(x) - fx.max(gx)).abs() < tol);
            prop_assert!((f.sub(&g).eval(x) - (fx - gx)).abs() < tol);
            prop_assert!((f.add(&g).scale(0.5).eval(x) - 0.5 * (fx + gx)).abs() < tol);
        }
    }
}
