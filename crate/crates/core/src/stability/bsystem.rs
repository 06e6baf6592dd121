use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::markov::{check_generator_rank, generator};
use crate::model::MarkovCapacityModel;

/// Mode offsets `b[s][k]` that turn per-mode drifts into their steady-state mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovCertificate {
    pub b: Vec<Vec<f64>>,
    pub residual: f64,
}

/// Residual of `z[s][k] + sum_t rate[s][t] (b[t][k] - b[s][k]) = sum_t p[t] z[t][k]`.
pub fn b_system_residual(z: &[Vec<f64>], rates: &[Vec<f64>], p: &[f64], b: &[Vec<f64>]) -> f64 {
    let m = rates.len();
    let cells = z.first().map_or(0, Vec::len);
    let mut worst = 0.0f64;
    for k in 0..cells {
        let mean: f64 = (0..m).map(|t| p[t] * z[t][k]).sum();
        for s in 0..m {
            let jump: f64 = (0..m).map(|t| rates[s][t] * (b[t][k] - b[s][k])).sum();
            worst = worst.max((z[s][k] + jump - mean).abs());
        }
    }
    worst
}

/// Solves the offset system for per-mode drifts `z` (modes x buffers) and
/// shifts each column so its minimum is zero.
pub fn solve_b_system(
    z: &[Vec<f64>],
    markov: &MarkovCapacityModel,
    p: &[f64],
) -> Result<LyapunovCertificate> {
    let m = markov.mode_count();
    if z.len() != m {
        return Err(Error::validation("z", format!("expected {m} rows")));
    }
    let cells = z[0].len();
    let q = generator(markov.rates());
    check_generator_rank(&q)?;
    let mut b = vec![vec![0.0; cells]; m];
    if m > 1 {
        // Pin b[0] = 0. Removing one state from an irreducible generator
        // leaves a nonsingular matrix; the dropped balance row then holds
        // because p is stationary.
        let reduced = q.view((1, 1), (m - 1, m - 1)).into_owned().lu();
        for k in 0..cells {
            let mean: f64 = (0..m).map(|t| p[t] * z[t][k]).sum();
            let rhs = DVector::from_fn(m - 1, |s, _| mean - z[s + 1][k]);
            let mut x = reduced
                .solve(&rhs)
                .ok_or_else(|| Error::SingularChain("reduced generator is singular".into()))?;
            // One step of iterative refinement.
            let r = &rhs - q.view((1, 1), (m - 1, m - 1)) * &x;
            if let Some(dx) = reduced.solve(&r) {
                x += dx;
            }
            let mut col: Vec<f64> = std::iter::once(0.0).chain(x.iter().copied()).collect();
            let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
            col.iter_mut().for_each(|v| *v -= lo);
            for s in 0..m {
                b[s][k] = col[s];
            }
        }
    }
    let residual = b_system_residual(z, markov.rates(), p, &b);
    Ok(LyapunovCertificate { b, residual })
}
