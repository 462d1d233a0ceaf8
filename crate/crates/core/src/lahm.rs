//! Analytical moving-line-source plume (LAHM) under uniform ambient flow.
//!
//! ```text
//! ΔT(x, y, t) = ΔT_inj Q / (4 n b v √(π α_T x)) · exp(−y² / (4 α_T x))
//!             · erfc((r − v t / R) / (2 √(v α_L t / R)))
//! ```
//!
//! with seepage velocity `v = q / n`, `r = √(x² + y² α_L / α_T)` and `x` along
//! the flow direction. The plume is zero for `x ≤ 0`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{Grid, ScalarField};
use crate::sim::{ScenarioSpec, SimParams, TransportConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LahmParams {
    /// Injection rate (m³/s).
    pub injection_rate: f64,
    /// Temperature surplus of the injected water (K).
    pub delta_t_inj: f64,
    /// Ambient Darcy speed (m/s).
    pub velocity: f64,
    /// Longitudinal dispersivity (m).
    pub alpha_l: f64,
    /// Transverse dispersivity (m).
    pub alpha_t: f64,
    /// Aquifer thickness (m).
    pub thickness: f64,
    pub porosity: f64,
    /// Time since injection start (s).
    pub time: f64,
    #[serde(default = "default_retardation")]
    pub retardation: f64,
    #[serde(default = "default_ambient")]
    pub ambient_temperature: f64,
}

fn default_retardation() -> f64 {
    2.0
}

fn default_ambient() -> f64 {
    10.0
}

impl LahmParams {
    /// Defaults for the 64 x 64 heat-pump scenario at a given ambient Darcy speed.
    pub fn with_velocity(velocity: f64) -> Self {
        Self {
            injection_rate: 0.05 / 997.063,
            delta_t_inj: 5.0,
            velocity,
            alpha_l: 1.8,
            alpha_t: 0.18,
            thickness: 1.0,
            porosity: 0.2,
            time: 720.0 * 86_400.0,
            retardation: default_retardation(),
            ambient_temperature: default_ambient(),
        }
    }

    /// Well, aquifer and duration of a simulated scenario; the velocity is
    /// left for the caller.
    pub fn for_scenario(
        spec: &ScenarioSpec,
        sim: &SimParams,
        transport: &TransportConfig,
        velocity: f64,
    ) -> Self {
        Self {
            injection_rate: spec.well.volumetric_rate(sim),
            delta_t_inj: spec.well.injection_temperature - transport.ambient_temperature,
            velocity,
            thickness: spec.grid.thickness,
            porosity: sim.porosity,
            time: transport.total_time_days * crate::sim::SECONDS_PER_DAY,
            ambient_temperature: transport.ambient_temperature,
            ..Self::with_velocity(velocity)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("injection_rate", self.injection_rate),
            ("delta_t_inj", self.delta_t_inj),
            ("velocity", self.velocity),
            ("alpha_t", self.alpha_t),
            ("thickness", self.thickness),
            ("time", self.time),
            ("retardation", self.retardation),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "LAHM {name} must be positive, got {v}"
                )));
            }
        }
        if !(self.alpha_l.is_finite() && self.alpha_l >= self.alpha_t) {
            return Err(Error::InvalidParameter(format!(
                "LAHM needs alpha_l >= alpha_t, got {} < {}",
                self.alpha_l, self.alpha_t
            )));
        }
        if !(self.porosity > 0.0 && self.porosity < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "LAHM porosity must be in (0, 1), got {}",
                self.porosity
            )));
        }
        if !self.ambient_temperature.is_finite() {
            return Err(Error::InvalidParameter(
                "LAHM ambient temperature must be finite".into(),
            ));
        }
        Ok(())
    }

    pub fn seepage_velocity(&self) -> f64 {
        self.velocity / self.porosity
    }
}

/// Temperature surplus (K) at `(x, y)` relative to the injection point, `x`
/// along the ambient flow. Not capped; see [`lahm_field`].
pub fn lahm_delta_t(params: &LahmParams, x: f64, y: f64) -> Result<f64> {
    params.validate()?;
    Ok(delta_t_unchecked(params, x, y))
}

fn delta_t_unchecked(p: &LahmParams, x: f64, y: f64) -> f64 {
    if !(x > 0.0) {
        return 0.0;
    }
    let v = p.seepage_velocity();
    let steady = p.delta_t_inj * p.injection_rate
        / (4.0 * p.porosity * p.thickness * v * (std::f64::consts::PI * p.alpha_t * x).sqrt())
        * (-(y * y) / (4.0 * p.alpha_t * x)).exp();
    let r = (x * x + y * y * p.alpha_l / p.alpha_t).sqrt();
    let front = v * p.time / p.retardation;
    let spread = 2.0 * (v * p.alpha_l * p.time / p.retardation).sqrt();
    steady * libm::erfc((r - front) / spread)
}

/// Absolute temperature field (°C) of the analytical plume from `well_cell`
/// with the flow pointing along `flow_angle` (radians from +x). The surplus is
/// capped at `delta_t_inj`; the well cell carries the injection temperature.
pub fn lahm_field(
    params: &LahmParams,
    grid: &Grid,
    well_cell: (usize, usize),
    flow_angle: f64,
) -> Result<ScalarField> {
    params.validate()?;
    let (wx, wy) = grid.cell_center(well_cell.0, well_cell.1)?;
    let (s, c) = flow_angle.sin_cos();
    let ambient = params.ambient_temperature;
    let mut values = Vec::with_capacity(grid.len());
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            if (i, j) == well_cell {
                values.push(ambient + params.delta_t_inj);
                continue;
            }
            let dx = (i as f64 + 0.5) * grid.dx - wx;
            let dy = (j as f64 + 0.5) * grid.dy - wy;
            let along = dx * c + dy * s;
            let across = -dx * s + dy * c;
            let dt = delta_t_unchecked(params, along, across).clamp(0.0, params.delta_t_inj);
            values.push(ambient + dt);
        }
    }
    ScalarField::new(*grid, values, "degC")
}
