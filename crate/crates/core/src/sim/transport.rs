//! Explicit heat transport: first-order upwind advection of the pore-water
//! temperature, central-difference conduction and a mixing source at the well.
//!
//! Per cell, with pore volume `φV`, face fluxes `F` and well rate `Q`:
//!
//! ```text
//! φV dT/dt = Σ_inflow |F| (T_up − T) + Q (T_inj − T) + φV D ∇²T
//! ```
//!
//! For mass-conservative fluxes this is the conservative upwind scheme. Every
//! update is a convex combination of neighbor, ambient and injection values
//! whenever `dt` respects [`TransportOperator::stable_dt`], so temperatures
//! stay inside `[ambient, injection]`.

use crate::error::{Error, Result};
use crate::field::{Grid, ScalarField};
use crate::sim::pressure::FaceFlux;

/// Precomputed per-cell exchange rates (1/s) for a fixed flow field.
#[derive(Debug, Clone)]
pub struct TransportOperator {
    grid: Grid,
    /// Up to four (neighbor, rate) couplings per cell.
    neighbors: Vec<[(u32, f64); 4]>,
    /// Rate of exchange with the ambient inflow boundary.
    ambient_rate: Vec<f64>,
    source_cell: Option<usize>,
    source_rate: f64,
    total_rate: Vec<f64>,
}

impl TransportOperator {
    /// `source` is the injection `(cell, volumetric rate m³/s)`.
    pub fn new(
        flux: &FaceFlux,
        source: Option<(usize, f64)>,
        porosity: f64,
        diffusivity: f64,
    ) -> Result<Self> {
        let g = flux.grid;
        if !(porosity > 0.0 && porosity <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "porosity must be in (0, 1], got {porosity}"
            )));
        }
        if !(diffusivity >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "diffusivity must be non-negative, got {diffusivity}"
            )));
        }
        let pore = porosity * g.cell_volume();
        let dx2 = diffusivity / (g.dx * g.dx);
        let dy2 = diffusivity / (g.dy * g.dy);
        let n = g.len();
        let mut neighbors = vec![[(0u32, 0.0); 4]; n];
        let mut ambient_rate = vec![0.0; n];
        for j in 0..g.ny {
            for i in 0..g.nx {
                let c = g.index(i, j);
                let fw = flux.xf(i, j);
                let fe = flux.xf(i + 1, j);
                let fs = flux.yf(i, j);
                let fn_ = flux.yf(i, j + 1);
                // (neighbor cell or None for boundary, inflow rate, conduction rate)
                let faces = [
                    (if i > 0 { Some(c - 1) } else { None }, fw.max(0.0), dx2),
                    (
                        if i + 1 < g.nx { Some(c + 1) } else { None },
                        (-fe).max(0.0),
                        dx2,
                    ),
                    (if j > 0 { Some(c - g.nx) } else { None }, fs.max(0.0), dy2),
                    (
                        if j + 1 < g.ny { Some(c + g.nx) } else { None },
                        (-fn_).max(0.0),
                        dy2,
                    ),
                ];
                for (slot, (nb, inflow, cond)) in faces.into_iter().enumerate() {
                    match nb {
                        Some(nb) => neighbors[c][slot] = (nb as u32, inflow / pore + cond),
                        None => ambient_rate[c] += inflow / pore,
                    }
                }
            }
        }
        let (source_cell, source_rate) = match source {
            Some((cell, q)) if q > 0.0 => {
                if cell >= n {
                    return Err(Error::InvalidParameter(format!(
                        "source cell {cell} outside grid"
                    )));
                }
                (Some(cell), q / pore)
            }
            _ => (None, 0.0),
        };
        let total_rate = (0..n)
            .map(|c| {
                neighbors[c].iter().map(|x| x.1).sum::<f64>()
                    + ambient_rate[c]
                    + if source_cell == Some(c) {
                        source_rate
                    } else {
                        0.0
                    }
            })
            .collect();
        Ok(Self {
            grid: g,
            neighbors,
            ambient_rate,
            source_cell,
            source_rate,
            total_rate,
        })
    }

    /// Largest time step keeping every update a convex combination.
    pub fn stable_dt(&self) -> f64 {
        let max_rate = self.total_rate.iter().copied().fold(0.0, f64::max);
        if max_rate > 0.0 {
            1.0 / max_rate
        } else {
            f64::INFINITY
        }
    }

    /// One explicit step. Writes into `out` and returns the largest |ΔT|.
    pub fn step_into(
        &self,
        t: &[f64],
        out: &mut [f64],
        ambient: f64,
        injection: f64,
        dt: f64,
    ) -> Result<f64> {
        let limit = self.stable_dt();
        if !(dt > 0.0) || dt > limit * (1.0 + 1e-12) {
            return Err(Error::CflViolation { dt, limit });
        }
        let mut max_change = 0.0_f64;
        for c in 0..t.len() {
            let tc = t[c];
            let mut rate = self.ambient_rate[c] * (ambient - tc);
            for &(nb, w) in &self.neighbors[c] {
                if w != 0.0 {
                    rate += w * (t[nb as usize] - tc);
                }
            }
            if self.source_cell == Some(c) {
                rate += self.source_rate * (injection - tc);
            }
            let delta = dt * rate;
            out[c] = tc + delta;
            max_change = max_change.max(delta.abs());
        }
        Ok(max_change)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }
}

/// A single explicit transport step of a temperature field (°C).
#[allow(clippy::too_many_arguments)]
pub fn advance_temperature(
    t: &ScalarField,
    flux: &FaceFlux,
    source: Option<(usize, f64)>,
    porosity: f64,
    diffusivity: f64,
    ambient: f64,
    injection: f64,
    dt: f64,
) -> Result<ScalarField> {
    if *t.grid() != flux.grid {
        return Err(Error::GridMismatch);
    }
    let op = TransportOperator::new(flux, source, porosity, diffusivity)?;
    let mut out = vec![0.0; t.values().len()];
    op.step_into(t.values(), &mut out, ambient, injection, dt)?;
    ScalarField::new(*t.grid(), out, t.unit())
}
