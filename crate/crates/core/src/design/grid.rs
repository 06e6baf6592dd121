use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default cap on the number of candidate policies in one grid.
pub const DEFAULT_GRID_CAP: u64 = 1_000_000;

/// Inclusive arithmetic range; `lo == hi` gives a single value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

impl Range {
    pub fn new(lo: f64, hi: f64, step: f64) -> Self {
        Self { lo, hi, step }
    }

    pub fn fixed(value: f64) -> Self {
        Self::new(value, value, 1.0)
    }

    pub fn validate(&self, field: &str) -> Result<()> {
        if !(self.lo.is_finite() && self.hi.is_finite() && self.step.is_finite()) {
            return Err(Error::validation(field, "bounds and step must be finite"));
        }
        if self.lo > self.hi || self.step <= 0.0 {
            return Err(Error::validation(field, "need lo <= hi and step > 0"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        ((self.hi - self.lo) / self.step + 1e-9).floor() as usize + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Grid values computed as `lo + i * step` so they are reproducible.
    pub fn values(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.lo + i as f64 * self.step).collect()
    }
}

/// Per-ramp ranges for the two gains of an affine policy (ramps `2..=K`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub u: Vec<Range>,
    pub kappa: Vec<Range>,
    #[serde(default = "default_cap")]
    pub cap: u64,
}

fn default_cap() -> u64 {
    DEFAULT_GRID_CAP
}

impl GridSpec {
    pub fn new(u: Vec<Range>, kappa: Vec<Range>) -> Self {
        Self {
            u,
            kappa,
            cap: DEFAULT_GRID_CAP,
        }
    }

    /// u in [2500, 6000] step 50 and kappa in [0, 50] step 1 on every ramp.
    pub fn standard(ramps: usize) -> Self {
        Self::new(
            vec![Range::new(2500.0, 6000.0, 50.0); ramps],
            vec![Range::new(0.0, 50.0, 1.0); ramps],
        )
    }

    pub fn ramps(&self) -> usize {
        self.u.len()
    }

    /// Ranges of one ramp.
    pub fn ramp(&self, i: usize) -> GridSpec {
        GridSpec {
            u: vec![self.u[i]],
            kappa: vec![self.kappa[i]],
            cap: self.cap,
        }
    }

    pub fn size(&self) -> f64 {
        self.u
            .iter()
            .zip(&self.kappa)
            .map(|(u, k)| u.len() as f64 * k.len() as f64)
            .product()
    }

    /// Checks ramp count and ranges but not the total size, for designs that
    /// search one ramp at a time.
    pub fn validate_ranges(&self, ramps: usize) -> Result<()> {
        if self.u.len() != ramps || self.kappa.len() != ramps {
            return Err(Error::validation("grid", format!("need ranges for {ramps} ramps")));
        }
        for (i, (u, k)) in self.u.iter().zip(&self.kappa).enumerate() {
            u.validate(&format!("grid u[{}]", i + 2))?;
            k.validate(&format!("grid kappa[{}]", i + 2))?;
            if u.lo <= 0.0 {
                return Err(Error::validation(format!("grid u[{}]", i + 2), "must be > 0"));
            }
            if k.lo < 0.0 {
                return Err(Error::validation(format!("grid kappa[{}]", i + 2), "must be >= 0"));
            }
        }
        Ok(())
    }

    pub fn validate(&self, ramps: usize) -> Result<()> {
        self.validate_ranges(ramps)?;
        let size = self.size();
        if size > self.cap as f64 {
            return Err(Error::GridTooLarge {
                points: size as u64,
                cap: self.cap,
            });
        }
        Ok(())
    }

    /// Every candidate as `(u, kappa)` vectors, ordered lexicographically by
    /// ramp 2's u, then its kappa, then ramp 3's u, and so on.
    pub fn candidates(&self) -> Vec<(Vec<f64>, Vec<f64>)> {
        let axes: Vec<Vec<(f64, f64)>> = self
            .u
            .iter()
            .zip(&self.kappa)
            .map(|(u, k)| {
                let ks = k.values();
                u.values()
                    .into_iter()
                    .flat_map(|x| ks.iter().map(move |&y| (x, y)))
                    .collect()
            })
            .collect();
        let mut out = vec![(Vec::new(), Vec::new())];
        for axis in &axes {
            out = out
                .into_iter()
                .flat_map(|(us, ks)| {
                    axis.iter().map(move |&(u, k)| {
                        let mut us = us.clone();
                        let mut ks = ks.clone();
                        us.push(u);
                        ks.push(k);
                        (us, ks)
                    })
                })
                .collect();
        }
        out
    }
}
