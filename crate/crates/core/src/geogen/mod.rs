//! Random geology: permeability fields from thin-plate-spline interpolation of
//! coarse random control lattices, and random regional pressure gradients.
//!
//! All randomness comes from ChaCha8 seeded with the scenario seed. Separate
//! streams keep the control values, the gradient and the lattice size
//! independent of each other.

mod tps;

use rand::distributions::{Distribution, Uniform};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use tps::{tps_kernel, ThinPlateSpline};

use crate::error::{Error, Result};
use crate::field::{Grid, ScalarField};

pub const PERM_MIN: f64 = 2.1e-9;
pub const PERM_MAX: f64 = 4.1e-8;
pub const CONTROL_GRID_SIZES: [usize; 3] = [4, 6, 8];

const STREAM_CONTROL_VALUES: u64 = 0;
const STREAM_GRADIENT: u64 = 1;
const STREAM_LATTICE: u64 = 2;

pub(crate) fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Geology of one scenario. Permeability values act directly as the Darcy
/// coefficient in `q = -K ∇P` (viscosity folded in).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeologySpec {
    pub seed: u64,
    pub control_grid_size: usize,
    pub perm_min: f64,
    pub perm_max: f64,
    /// Regional pressure gradient, x component (Pa/m).
    pub gradient_x: f64,
    /// Regional pressure gradient, y component (Pa/m).
    pub gradient_y: f64,
}

impl GeologySpec {
    pub fn new(seed: u64, control_grid_size: usize, gradient_x: f64, gradient_y: f64) -> Self {
        Self {
            seed,
            control_grid_size,
            perm_min: PERM_MIN,
            perm_max: PERM_MAX,
            gradient_x,
            gradient_y,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !CONTROL_GRID_SIZES.contains(&self.control_grid_size) {
            return Err(Error::InvalidParameter(format!(
                "control_grid_size must be one of {:?}, got {}",
                CONTROL_GRID_SIZES, self.control_grid_size
            )));
        }
        if !(self.perm_min.is_finite()
            && self.perm_max.is_finite()
            && self.perm_min > 0.0
            && self.perm_min < self.perm_max)
        {
            return Err(Error::InvalidParameter(format!(
                "need 0 < perm_min < perm_max, got [{}, {}]",
                self.perm_min, self.perm_max
            )));
        }
        if !(self.gradient_x.is_finite() && self.gradient_y.is_finite()) {
            return Err(Error::InvalidParameter(
                "pressure gradient must be finite".into(),
            ));
        }
        Ok(())
    }
}

/// Per-component uniform range of the regional pressure gradient (Pa/m).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GradientRange {
    pub min: f64,
    pub max: f64,
}

impl Default for GradientRange {
    fn default() -> Self {
        Self {
            min: -DEFAULT_GRADIENT_MAGNITUDE,
            max: DEFAULT_GRADIENT_MAGNITUDE,
        }
    }
}

/// Largest regional gradient component (Pa/m). Calibrated against the
/// simulator so that mid-range permeability gives plumes a few tens of meters
/// wide that reach pseudo steady state well inside 720 days.
pub const DEFAULT_GRADIENT_MAGNITUDE: f64 = 150.0;

impl GradientRange {
    pub fn validate(&self) -> Result<()> {
        if !(self.min.is_finite() && self.max.is_finite() && self.min <= self.max) {
            return Err(Error::InvalidParameter(format!(
                "invalid gradient range [{}, {}]",
                self.min, self.max
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlPointSet {
    pub positions: Vec<(f64, f64)>,
    pub values: Vec<f64>,
}

/// Even `n x n` lattice over the domain with a half-spacing margin, row-major.
pub fn control_lattice(n: usize, grid: &Grid) -> Vec<(f64, f64)> {
    let sx = grid.extent_x() / n as f64;
    let sy = grid.extent_y() / n as f64;
    let mut out = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            out.push(((i as f64 + 0.5) * sx, (j as f64 + 0.5) * sy));
        }
    }
    out
}

pub fn sample_control_points(spec: &GeologySpec, grid: &Grid) -> Result<ControlPointSet> {
    spec.validate()?;
    let n = spec.control_grid_size;
    let mut rng = rng_for(spec.seed, STREAM_CONTROL_VALUES);
    let dist = Uniform::new_inclusive(spec.perm_min, spec.perm_max);
    let values = (0..n * n).map(|_| dist.sample(&mut rng)).collect();
    Ok(ControlPointSet {
        positions: control_lattice(n, grid),
        values,
    })
}

/// Control points with caller-supplied values on the standard lattice.
pub fn control_points_with_values(
    spec: &GeologySpec,
    grid: &Grid,
    values: Vec<f64>,
) -> Result<ControlPointSet> {
    spec.validate()?;
    let n = spec.control_grid_size;
    if values.len() != n * n {
        return Err(Error::InvalidParameter(format!(
            "expected {} control values, got {}",
            n * n,
            values.len()
        )));
    }
    if let Some(v) = values
        .iter()
        .find(|v| !(v.is_finite() && **v >= spec.perm_min && **v <= spec.perm_max))
    {
        return Err(Error::InvalidParameter(format!(
            "control value {v} outside [{}, {}]",
            spec.perm_min, spec.perm_max
        )));
    }
    Ok(ControlPointSet {
        positions: control_lattice(n, grid),
        values,
    })
}

/// Samples the TPS interpolant of `points` at every cell center, clamping
/// from below at `floor` (> 0).
pub fn tps_interpolate(points: &ControlPointSet, grid: &Grid, floor: f64) -> Result<ScalarField> {
    if !(floor > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "clamp floor must be positive, got {floor}"
        )));
    }
    let tps = ThinPlateSpline::fit(&points.positions, &points.values)?;
    ScalarField::from_fn(*grid, "m^2/(Pa s)", |x, y| tps.evaluate(x, y).max(floor))
}

/// Permeability field of a geology spec: sampled control points, TPS,
/// clamped at `perm_min / 10`.
pub fn permeability_field(spec: &GeologySpec, grid: &Grid) -> Result<ScalarField> {
    let points = sample_control_points(spec, grid)?;
    tps_interpolate(&points, grid, spec.perm_min / 10.0)
}

pub fn sample_pressure_gradient(seed: u64, range: &GradientRange) -> Result<(f64, f64)> {
    range.validate()?;
    let mut rng = rng_for(seed, STREAM_GRADIENT);
    if range.min == range.max {
        return Ok((range.min, range.min));
    }
    let dist = Uniform::new_inclusive(range.min, range.max);
    Ok((dist.sample(&mut rng), dist.sample(&mut rng)))
}

/// A complete random geology for `seed`: lattice size uniform over {4, 6, 8},
/// gradient uniform in `range`, default permeability bounds.
pub fn random_geology(seed: u64, range: &GradientRange) -> Result<GeologySpec> {
    let mut rng = rng_for(seed, STREAM_LATTICE);
    let size = CONTROL_GRID_SIZES[rng.gen_range(0..CONTROL_GRID_SIZES.len())];
    let (gx, gy) = sample_pressure_gradient(seed, range)?;
    let spec = GeologySpec::new(seed, size, gx, gy);
    spec.validate()?;
    Ok(spec)
}

/// Scenario seed for item `index` of a dataset generated from `base_seed`
/// (SplitMix64 finalizer over the pair).
pub fn derive_seed(base_seed: u64, index: u64) -> u64 {
    let mut z = base_seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
