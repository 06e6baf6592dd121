use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Geometry and triangular fundamental diagram of one mainline cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellParams {
    pub length_km: f64,
    pub free_flow_speed_kmh: f64,
    pub congestion_wave_speed_kmh: f64,
    pub jam_density_veh_per_km: f64,
    /// Share of the cell outflow that stays on the mainline.
    pub mainline_ratio: f64,
}

impl CellParams {
    /// Sending function `v n`.
    #[inline]
    pub fn sending(&self, density: f64) -> f64 {
        self.free_flow_speed_kmh * density
    }

    /// Receiving function `w (n_jam - n)`.
    #[inline]
    pub fn receiving(&self, density: f64) -> f64 {
        self.congestion_wave_speed_kmh * (self.jam_density_veh_per_km - density)
    }
}

/// Buffer feeding a cell: the upstream mainline for cell 1, an on-ramp otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BufferParams {
    pub capacity_veh_per_hr: f64,
    pub demand_veh_per_hr: f64,
}

/// Static description of a K-cell highway and its K buffers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HighwayConfig {
    cells: Vec<CellParams>,
    buffers: Vec<BufferParams>,
}

fn positive(field: String, x: f64) -> Result<()> {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        Err(Error::validation(field, format!("must be finite and > 0, got {x}")))
    }
}

impl HighwayConfig {
    pub fn new(cells: Vec<CellParams>, buffers: Vec<BufferParams>) -> Result<Self> {
        if cells.is_empty() {
            return Err(Error::validation("cells", "at least one cell is required"));
        }
        if cells.len() != buffers.len() {
            return Err(Error::validation(
                "buffers",
                format!("expected {} buffers, got {}", cells.len(), buffers.len()),
            ));
        }
        let k = cells.len();
        for (i, c) in cells.iter().enumerate() {
            let id = i + 1;
            positive(format!("cell {id} length_km"), c.length_km)?;
            positive(format!("cell {id} free_flow_speed_kmh"), c.free_flow_speed_kmh)?;
            positive(
                format!("cell {id} congestion_wave_speed_kmh"),
                c.congestion_wave_speed_kmh,
            )?;
            positive(format!("cell {id} jam_density_veh_per_km"), c.jam_density_veh_per_km)?;
            let b = c.mainline_ratio;
            if !(0.0..=1.0).contains(&b) {
                return Err(Error::validation(
                    format!("cell {id} mainline_ratio"),
                    format!("must lie in [0, 1], got {b}"),
                ));
            }
            if id == k && b != 0.0 {
                return Err(Error::validation(
                    format!("cell {id} mainline_ratio"),
                    "the last cell must have a mainline ratio of 0",
                ));
            }
            if id < k && b == 0.0 {
                return Err(Error::DivisionByZeroRatio { cell: id });
            }
        }
        for (i, b) in buffers.iter().enumerate() {
            let id = i + 1;
            positive(format!("buffer {id} capacity_veh_per_hr"), b.capacity_veh_per_hr)?;
            let a = b.demand_veh_per_hr;
            if !(a.is_finite() && a >= 0.0 && a <= b.capacity_veh_per_hr) {
                return Err(Error::validation(
                    format!("buffer {id} demand_veh_per_hr"),
                    format!("must lie in [0, {}], got {a}", b.capacity_veh_per_hr),
                ));
            }
        }
        Ok(Self { cells, buffers })
    }

    pub fn cells(&self) -> &[CellParams] {
        &self.cells
    }

    pub fn buffers(&self) -> &[BufferParams] {
        &self.buffers
    }

    pub fn cell_count(&self) -> usize {
        self.cells.len()
    }

    pub fn cell(&self, k: usize) -> &CellParams {
        &self.cells[k]
    }

    pub fn buffer(&self, k: usize) -> &BufferParams {
        &self.buffers[k]
    }

    pub fn demands(&self) -> Vec<f64> {
        self.buffers.iter().map(|b| b.demand_veh_per_hr).collect()
    }

    pub fn betas(&self) -> Vec<f64> {
        self.cells.iter().map(|c| c.mainline_ratio).collect()
    }

    /// Copy with the demand vector replaced, revalidated.
    pub fn with_demands(&self, demands: &[f64]) -> Result<Self> {
        if demands.len() != self.cells.len() {
            return Err(Error::validation(
                "demand",
                format!("expected {} entries, got {}", self.cells.len(), demands.len()),
            ));
        }
        let buffers = self
            .buffers
            .iter()
            .zip(demands)
            .map(|(b, &a)| BufferParams {
                capacity_veh_per_hr: b.capacity_veh_per_hr,
                demand_veh_per_hr: a,
            })
            .collect();
        Self::new(self.cells.clone(), buffers)
    }

    /// Copy with one buffer replaced, revalidated.
    pub fn with_buffer(&self, k: usize, buffer: BufferParams) -> Result<Self> {
        let mut buffers = self.buffers.clone();
        buffers[k] = buffer;
        Self::new(self.cells.clone(), buffers)
    }

    /// Contiguous sub-section `[first, last]`; the last cell of the slice gets ratio 0.
    pub fn section(&self, first: usize, last: usize) -> Result<Self> {
        if first > last || last >= self.cells.len() {
            return Err(Error::validation("section", format!("bad range {first}..={last}")));
        }
        let mut cells = self.cells[first..=last].to_vec();
        if let Some(c) = cells.last_mut() {
            c.mainline_ratio = 0.0;
        }
        Self::new(cells, self.buffers[first..=last].to_vec())
    }
}

/// Ramp-metering gains `mu(n) = u - kappa n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RampGain {
    pub u_veh_per_hr: f64,
    pub kappa_kmh: f64,
}

impl RampGain {
    pub fn new(u: f64, kappa: f64) -> Result<Self> {
        positive("u".into(), u)?;
        if !(kappa.is_finite() && kappa >= 0.0) {
            return Err(Error::validation("kappa", format!("must be finite and >= 0, got {kappa}")));
        }
        Ok(Self {
            u_veh_per_hr: u,
            kappa_kmh: kappa,
        })
    }

    /// Metering rate clamped at zero.
    #[inline]
    pub fn rate(&self, density: f64) -> f64 {
        (self.u_veh_per_hr - self.kappa_kmh * density).max(0.0)
    }
}

/// Anything that assigns a density-feedback metering rate to ramps `2..=K`.
///
/// `gain(k)` uses 0-based cell indices; `None` means the ramp is unmetered.
pub trait Metering {
    fn gain(&self, k: usize) -> Option<RampGain>;

    fn metering_rate(&self, k: usize, density: f64) -> Option<f64> {
        self.gain(k).map(|g| g.rate(density))
    }
}

/// No metering on any ramp.
#[derive(Debug, Clone, Copy, Default)]
pub struct Unmetered;

impl Metering for Unmetered {
    fn gain(&self, _k: usize) -> Option<RampGain> {
        None
    }
}

/// Affine policy with one gain pair per on-ramp (cells `2..=K`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineControlPolicy {
    gains: Vec<RampGain>,
}

impl AffineControlPolicy {
    pub fn new(gains: Vec<RampGain>) -> Result<Self> {
        for (i, g) in gains.iter().enumerate() {
            RampGain::new(g.u_veh_per_hr, g.kappa_kmh).map_err(|e| match e {
                Error::Validation { field, reason } => {
                    Error::validation(format!("ramp {} {field}", i + 2), reason)
                }
                other => other,
            })?;
        }
        Ok(Self { gains })
    }

    pub fn from_pairs(u: &[f64], kappa: &[f64]) -> Result<Self> {
        if u.len() != kappa.len() {
            return Err(Error::validation("policy", "u and kappa lengths differ"));
        }
        Self::new(
            u.iter()
                .zip(kappa)
                .map(|(&u, &kappa)| RampGain {
                    u_veh_per_hr: u,
                    kappa_kmh: kappa,
                })
                .collect(),
        )
    }

    pub fn gains(&self) -> &[RampGain] {
        &self.gains
    }

    /// Number of cells this policy fits.
    pub fn cell_count(&self) -> usize {
        self.gains.len() + 1
    }

    pub fn u(&self) -> Vec<f64> {
        self.gains.iter().map(|g| g.u_veh_per_hr).collect()
    }

    pub fn kappa(&self) -> Vec<f64> {
        self.gains.iter().map(|g| g.kappa_kmh).collect()
    }
}

impl Metering for AffineControlPolicy {
    fn gain(&self, k: usize) -> Option<RampGain> {
        if k == 0 {
            None
        } else {
            self.gains.get(k - 1).copied()
        }
    }
}

/// Policy where only some ramps are metered, used while assembling a
/// downstream-to-upstream design.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PartialPolicy {
    pub gains: Vec<Option<RampGain>>,
}

impl PartialPolicy {
    pub fn unmetered(cells: usize) -> Self {
        Self {
            gains: vec![None; cells],
        }
    }

    /// Snapshot of any metering over `cells` cells.
    pub fn from_metering<M: Metering + ?Sized>(metering: &M, cells: usize) -> Self {
        Self {
            gains: (0..cells).map(|k| metering.gain(k)).collect(),
        }
    }

    pub fn set(&mut self, k: usize, g: RampGain) {
        self.gains[k] = Some(g);
    }

    /// Converts to a full policy if every ramp is metered.
    pub fn complete(&self) -> Option<AffineControlPolicy> {
        let gains: Option<Vec<RampGain>> = self.gains.iter().skip(1).copied().collect();
        gains.and_then(|g| AffineControlPolicy::new(g).ok())
    }
}

impl Metering for PartialPolicy {
    fn gain(&self, k: usize) -> Option<RampGain> {
        if k == 0 {
            None
        } else {
            self.gains.get(k).copied().flatten()
        }
    }
}

impl<M: Metering + ?Sized> Metering for &M {
    fn gain(&self, k: usize) -> Option<RampGain> {
        (**self).gain(k)
    }
}

/// Hybrid state: capacity mode, buffer queues and cell densities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HybridState {
    /// 0-based mode index.
    pub mode: usize,
    pub queues_veh: Vec<f64>,
    pub densities_veh_per_km: Vec<f64>,
}

impl HybridState {
    pub fn new(mode: usize, queues: Vec<f64>, densities: Vec<f64>) -> Self {
        Self {
            mode,
            queues_veh: queues,
            densities_veh_per_km: densities,
        }
    }

    pub fn empty(cells: usize) -> Self {
        Self::new(0, vec![0.0; cells], vec![0.0; cells])
    }

    pub fn validate(&self, cfg: &HighwayConfig, modes: usize) -> Result<()> {
        let k = cfg.cell_count();
        if self.queues_veh.len() != k || self.densities_veh_per_km.len() != k {
            return Err(Error::validation("state", format!("expected {k} queues and densities")));
        }
        if self.mode >= modes {
            return Err(Error::validation("state mode", format!("must be < {modes}")));
        }
        for (i, (&q, &n)) in self.queues_veh.iter().zip(&self.densities_veh_per_km).enumerate() {
            if !(q.is_finite() && q >= 0.0) {
                return Err(Error::validation(format!("state queue {}", i + 1), "must be >= 0"));
            }
            let jam = cfg.cell(i).jam_density_veh_per_km;
            if !(n.is_finite() && (0.0..=jam).contains(&n)) {
                return Err(Error::validation(
                    format!("state density {}", i + 1),
                    format!("must lie in [0, {jam}]"),
                ));
            }
        }
        Ok(())
    }
}
