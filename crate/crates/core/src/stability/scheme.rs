use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DensityBounds, Pwl};

/// Form of the per-cell weight used for cells at or below the buffer in the
/// partially coordinated drift.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum PcWeight {
    /// The fully coordinated weight: one for cell 1, otherwise
    /// `(n - lower_no_queue) / (upper_blocked - lower_no_queue)`.
    #[default]
    LowerAnchored,
    /// `(n - upper_free) / (upper_blocked - upper_free)`, optionally clamped to `[0, 1]`.
    FreeAnchored { clamp: bool },
}

/// Which drift criterion and which congestion sets to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DesignScheme {
    Localized,
    FullyCoordinated,
    PartiallyCoordinated(PcWeight),
}

impl DesignScheme {
    pub fn name(&self) -> &'static str {
        match self {
            DesignScheme::Localized => "localized",
            DesignScheme::FullyCoordinated => "full",
            DesignScheme::PartiallyCoordinated(_) => "partial",
        }
    }
}

/// Density weight of one cell's storage term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Weight {
    One,
    Zero,
    /// `(n - lo) / (hi - lo)`.
    Affine { lo: f64, hi: f64 },
    /// Affine, clamped to `[0, 1]`.
    Clamped { lo: f64, hi: f64 },
}

impl Weight {
    #[inline]
    pub fn eval(&self, n: f64) -> f64 {
        match *self {
            Weight::One => 1.0,
            Weight::Zero => 0.0,
            Weight::Affine { lo, hi } => (n - lo) / (hi - lo),
            Weight::Clamped { lo, hi } => ((n - lo) / (hi - lo)).clamp(0.0, 1.0),
        }
    }

    pub fn pwl(&self, a: f64, b: f64) -> Pwl {
        match *self {
            Weight::One => Pwl::constant(a, b, 1.0),
            Weight::Zero => Pwl::constant(a, b, 0.0),
            Weight::Affine { lo, hi } => Pwl::affine(a, b, -lo / (hi - lo), 1.0 / (hi - lo)),
            Weight::Clamped { lo, hi } => Pwl::affine(a, b, -lo / (hi - lo), 1.0 / (hi - lo))
                .max_const(0.0)
                .min_const(1.0),
        }
    }

    fn affine(cell: usize, lo: f64, hi: f64) -> Result<Self> {
        if (hi - lo).abs() <= 1e-12 * (1.0 + hi.abs()) {
            Err(Error::DegenerateWeight { cell: cell + 1 })
        } else {
            Ok(Weight::Affine { lo, hi })
        }
    }
}

/// Fraction of cell `j`'s outflow that reaches cell `k` (`j <= k`, 0-based).
pub fn gamma(j: usize, k: usize, betas: &[f64]) -> f64 {
    betas[j..k].iter().product()
}

/// Coefficients multiplying each cell's net flow in the drift of buffer `k`.
pub fn coefficients(k: usize, betas: &[f64]) -> Vec<f64> {
    (0..betas.len())
        .map(|j| if j < k { gamma(j, k, betas) } else { gamma(k, j, betas) })
        .collect()
}

/// Weights for the drift of buffer `k` under `scheme`.
pub fn weights(scheme: DesignScheme, k: usize, bounds: &DensityBounds) -> Result<Vec<Weight>> {
    let cells = bounds.lower_no_queue.len();
    let lb = &bounds.lower_no_queue;
    let bar = &bounds.upper_free;
    let tilde = &bounds.upper_blocked;
    (0..cells)
        .map(|j| match scheme {
            DesignScheme::Localized => {
                if j == 0 {
                    Ok(Weight::One)
                } else {
                    Weight::affine(j, lb[j], bar[j])
                }
            }
            DesignScheme::FullyCoordinated => {
                if j == 0 {
                    Ok(Weight::One)
                } else {
                    Weight::affine(j, lb[j], tilde[j])
                }
            }
            DesignScheme::PartiallyCoordinated(form) => {
                if j < k {
                    return Ok(Weight::One);
                }
                match form {
                    PcWeight::LowerAnchored if j == 0 => Ok(Weight::One),
                    PcWeight::LowerAnchored => Weight::affine(j, lb[j], tilde[j]),
                    PcWeight::FreeAnchored { clamp: false } => Weight::affine(j, bar[j], tilde[j]),
                    PcWeight::FreeAnchored { clamp: true } => {
                        if (tilde[j] - bar[j]).abs() <= 1e-12 * (1.0 + tilde[j].abs()) {
                            // The set never exceeds the free bound, so the clamped weight vanishes.
                            Ok(Weight::Zero)
                        } else {
                            Ok(Weight::Clamped { lo: bar[j], hi: tilde[j] })
                        }
                    }
                }
            }
        })
        .collect()
}
