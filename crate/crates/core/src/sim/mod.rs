//! High-fidelity data generator: steady pressure, Darcy velocity, and heat
//! transport integrated to a pseudo steady state.

pub mod pressure;
pub mod transport;

use serde::{Deserialize, Serialize};

pub use pressure::{
    darcy_velocity, face_fluxes, solve_pressure_with, FaceFlux, PressureSolution, SolverOptions,
};
pub use transport::{advance_temperature, TransportOperator};

use crate::error::{Error, Result};
use crate::field::{Grid, ScalarField, VectorField};
use crate::geogen::{self, GeologySpec};

/// Molar mass of water (kg/mol).
pub const WATER_MOLAR_MASS: f64 = 0.018_015_28;
pub const SECONDS_PER_DAY: f64 = 86_400.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimParams {
    /// Molar density of water (kmol/m³).
    pub eta: f64,
    /// Thermal conductivity (W/(m·K)).
    pub kappa: f64,
    /// Specific enthalpy of water at 10 °C (kJ/mol).
    pub enthalpy_ref: f64,
    /// Volumetric heat capacity (J/(m³·K)).
    pub heat_capacity: f64,
    pub porosity: f64,
}

impl Default for SimParams {
    fn default() -> Self {
        Self {
            eta: 55.345_401_054_7,
            kappa: 0.5,
            enthalpy_ref: 1.134_945,
            heat_capacity: 4.0e6,
            porosity: 0.2,
        }
    }
}

impl SimParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("eta", self.eta),
            ("kappa", self.kappa),
            ("enthalpy_ref", self.enthalpy_ref),
            ("heat_capacity", self.heat_capacity),
            ("porosity", self.porosity),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        if self.porosity > 1.0 {
            return Err(Error::InvalidParameter(format!(
                "porosity must be <= 1, got {}",
                self.porosity
            )));
        }
        Ok(())
    }

    /// Thermal diffusivity κ / c (m²/s).
    pub fn diffusivity(&self) -> f64 {
        self.kappa / self.heat_capacity
    }

    /// Molar density in mol/m³.
    pub fn molar_density(&self) -> f64 {
        self.eta * 1000.0
    }

    /// Mass density of water implied by the molar density (kg/m³).
    pub fn mass_density(&self) -> f64 {
        self.molar_density() * WATER_MOLAR_MASS
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WellSpec {
    pub cell: (usize, usize),
    /// Injected mass rate (kg/s).
    pub mass_rate: f64,
    /// Injection temperature (°C).
    pub injection_temperature: f64,
}

impl WellSpec {
    /// The default heat pump at the injection cell of `grid`: 0.05 kg/s at 15 °C.
    pub fn centered(grid: &Grid) -> Self {
        Self {
            cell: grid.center_cell_index(),
            mass_rate: 0.05,
            injection_temperature: 15.0,
        }
    }

    pub fn validate(&self, grid: &Grid, ambient: f64) -> Result<()> {
        grid.checked_index(self.cell.0, self.cell.1)?;
        if !(self.mass_rate.is_finite() && self.mass_rate > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "mass_rate must be positive, got {}",
                self.mass_rate
            )));
        }
        if !(self.injection_temperature.is_finite() && self.injection_temperature > ambient) {
            return Err(Error::InvalidParameter(format!(
                "injection_temperature must exceed ambient {ambient} °C, got {}",
                self.injection_temperature
            )));
        }
        Ok(())
    }

    /// Molar injection rate (mol/s).
    pub fn molar_rate(&self) -> f64 {
        self.mass_rate / WATER_MOLAR_MASS
    }

    /// Volumetric injection rate (m³/s).
    pub fn volumetric_rate(&self, params: &SimParams) -> f64 {
        self.molar_rate() / params.molar_density()
    }

    /// Enthalpy carried in above the 10 °C reference (W), using the
    /// volumetric heat capacity of the pore water.
    pub fn heat_rate(&self, params: &SimParams, ambient: f64) -> f64 {
        self.volumetric_rate(params) * params.heat_capacity * (self.injection_temperature - ambient)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransportConfig {
    pub total_time_days: f64,
    /// Fraction of the stability limit used as time step.
    pub cfl: f64,
    /// Optional upper bound on the step (s).
    pub max_dt: Option<f64>,
    /// Pseudo steady state once the largest per-step change drops below this (K).
    pub steady_tol: f64,
    pub ambient_temperature: f64,
}

impl Default for TransportConfig {
    fn default() -> Self {
        Self {
            total_time_days: 720.0,
            cfl: 0.9,
            max_dt: None,
            steady_tol: 1e-6,
            ambient_temperature: 10.0,
        }
    }
}

impl TransportConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.total_time_days.is_finite() && self.total_time_days > 0.0) {
            return Err(Error::InvalidParameter(
                "total_time_days must be positive".into(),
            ));
        }
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "cfl must be in (0, 1], got {}",
                self.cfl
            )));
        }
        if let Some(m) = self.max_dt {
            if !(m > 0.0) {
                return Err(Error::InvalidParameter("max_dt must be positive".into()));
            }
        }
        if !(self.steady_tol >= 0.0) || !self.ambient_temperature.is_finite() {
            return Err(Error::InvalidParameter(
                "invalid steady_tol or ambient temperature".into(),
            ));
        }
        Ok(())
    }
}

/// Everything that determines one simulation besides the numerical settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub grid: Grid,
    pub geology: GeologySpec,
    pub well: WellSpec,
    /// Overrides the seeded control values (row-major lattice).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub control_values: Option<Vec<f64>>,
}

impl ScenarioSpec {
    pub fn new(grid: Grid, geology: GeologySpec) -> Self {
        Self {
            grid,
            geology,
            well: WellSpec::centered(&grid),
            control_values: None,
        }
    }

    pub fn validate(&self, ambient: f64) -> Result<()> {
        self.grid.validate()?;
        self.geology.validate()?;
        self.well.validate(&self.grid, ambient)
    }

    pub fn permeability(&self) -> Result<ScalarField> {
        let points = match &self.control_values {
            Some(v) => geogen::control_points_with_values(&self.geology, &self.grid, v.clone())?,
            None => geogen::sample_control_points(&self.geology, &self.grid)?,
        };
        geogen::tps_interpolate(&points, &self.grid, self.geology.perm_min / 10.0)
    }

    /// Dirichlet pressure on the boundary: `P = gx x + gy y`.
    pub fn boundary_pressure(&self) -> impl Fn(f64, f64) -> f64 {
        let (gx, gy) = (self.geology.gradient_x, self.geology.gradient_y);
        move |x, y| gx * x + gy * y
    }
}

/// Steady pressure with a linear regional gradient and one injection well.
pub fn solve_pressure(
    k: &ScalarField,
    gradient: (f64, f64),
    well: Option<&WellSpec>,
    params: &SimParams,
) -> Result<PressureSolution> {
    params.validate()?;
    let g = *k.grid();
    let mut source = vec![0.0; g.len()];
    if let Some(w) = well {
        source[g.checked_index(w.cell.0, w.cell.1)?] = w.volumetric_rate(params);
    }
    let (gx, gy) = gradient;
    solve_pressure_with(
        k,
        &move |x, y| gx * x + gy * y,
        &source,
        SolverOptions::default(),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub converged: bool,
    pub steps: usize,
    pub simulated_days: f64,
    pub final_max_change: f64,
    pub pressure_iterations: usize,
    pub pressure_relative_residual: f64,
}

/// The flow part of a scenario (no heat transport).
#[derive(Debug, Clone)]
pub struct FlowSolution {
    pub permeability: ScalarField,
    pub pressure: PressureSolution,
    pub velocity: VectorField,
}

pub fn solve_flow(spec: &ScenarioSpec, params: &SimParams) -> Result<FlowSolution> {
    let permeability = spec.permeability()?;
    let pressure = solve_pressure(
        &permeability,
        (spec.geology.gradient_x, spec.geology.gradient_y),
        Some(&spec.well),
        params,
    )?;
    let velocity = pressure.flux.cell_velocity()?;
    Ok(FlowSolution {
        permeability,
        pressure,
        velocity,
    })
}

#[derive(Debug, Clone)]
pub struct Sample {
    pub spec: ScenarioSpec,
    pub permeability: ScalarField,
    pub pressure: ScalarField,
    pub velocity: VectorField,
    pub temperature: ScalarField,
    pub report: RunReport,
}

/// Integrates heat transport on a fixed flow field until pseudo steady state
/// or `total_time_days`.
pub fn integrate_transport(
    flux: &FaceFlux,
    well: &WellSpec,
    params: &SimParams,
    config: &TransportConfig,
) -> Result<(ScalarField, RunReport)> {
    config.validate()?;
    params.validate()?;
    let g = flux.grid;
    let cell = g.checked_index(well.cell.0, well.cell.1)?;
    let op = TransportOperator::new(
        flux,
        Some((cell, well.volumetric_rate(params))),
        params.porosity,
        params.diffusivity(),
    )?;
    let mut dt = op.stable_dt() * config.cfl;
    if let Some(m) = config.max_dt {
        dt = dt.min(m);
    }
    let total = config.total_time_days * SECONDS_PER_DAY;
    dt = dt.min(total);

    let mut t = vec![config.ambient_temperature; g.len()];
    let mut next = t.clone();
    let mut time = 0.0;
    let mut steps = 0;
    let mut converged = false;
    let mut max_change = f64::INFINITY;
    while time < total * (1.0 - 1e-12) {
        let h = dt.min(total - time);
        max_change = op.step_into(
            &t,
            &mut next,
            config.ambient_temperature,
            well.injection_temperature,
            h,
        )?;
        std::mem::swap(&mut t, &mut next);
        time += h;
        steps += 1;
        if max_change < config.steady_tol {
            converged = true;
            break;
        }
    }
    let report = RunReport {
        converged,
        steps,
        simulated_days: time / SECONDS_PER_DAY,
        final_max_change: max_change,
        pressure_iterations: 0,
        pressure_relative_residual: 0.0,
    };
    Ok((ScalarField::new(g, t, "degC")?, report))
}

/// geology → pressure → velocity → transport.
pub fn run_scenario(
    spec: &ScenarioSpec,
    params: &SimParams,
    config: &TransportConfig,
) -> Result<Sample> {
    spec.validate(config.ambient_temperature)?;
    let flow = solve_flow(spec, params)?;
    let (temperature, mut report) =
        integrate_transport(&flow.pressure.flux, &spec.well, params, config)?;
    report.pressure_iterations = flow.pressure.iterations;
    report.pressure_relative_residual = flow.pressure.relative_residual;
    Ok(Sample {
        spec: spec.clone(),
        permeability: flow.permeability,
        pressure: flow.pressure.pressure,
        velocity: flow.velocity,
        temperature,
        report,
    })
}
