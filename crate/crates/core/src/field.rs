//! Structured-grid geometry and cell-centered field containers.
//!
//! Fields are stored row-major with the x index running fastest:
//! `flat = j * nx + i`. Cell `(i, j)` has its center at
//! `((i + 0.5) dx, (j + 0.5) dy)` with the origin at the lower-left corner.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub nx: usize,
    pub ny: usize,
    /// Cell size in x (m).
    pub dx: f64,
    /// Cell size in y (m).
    pub dy: f64,
    /// Domain thickness (m).
    pub thickness: f64,
}

impl Default for Grid {
    /// 64 x 64 cells of 2 m covering 128 m x 128 m x 1 m.
    fn default() -> Self {
        Self {
            nx: 64,
            ny: 64,
            dx: 2.0,
            dy: 2.0,
            thickness: 1.0,
        }
    }
}

impl Grid {
    pub fn new(nx: usize, ny: usize, dx: f64, dy: f64, thickness: f64) -> Result<Self> {
        let grid = Self {
            nx,
            ny,
            dx,
            dy,
            thickness,
        };
        grid.validate()?;
        Ok(grid)
    }

    /// Square grid of `n` cells per side spanning `length` meters, unit thickness.
    pub fn square(n: usize, length: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidGrid("cell count must be at least 1".into()));
        }
        Self::new(n, n, length / n as f64, length / n as f64, 1.0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.nx < 1 || self.ny < 1 {
            return Err(Error::InvalidGrid(format!(
                "cell counts must be >= 1, got {}x{}",
                self.nx, self.ny
            )));
        }
        for (name, v) in [
            ("dx", self.dx),
            ("dy", self.dy),
            ("thickness", self.thickness),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidGrid(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        Ok(())
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn extent_x(&self) -> f64 {
        self.nx as f64 * self.dx
    }

    pub fn extent_y(&self) -> f64 {
        self.ny as f64 * self.dy
    }

    pub fn cell_volume(&self) -> f64 {
        self.dx * self.dy * self.thickness
    }

    pub fn is_square(&self) -> bool {
        self.nx == self.ny && self.dx == self.dy
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.nx && j < self.ny);
        j * self.nx + i
    }

    #[inline]
    pub fn coords(&self, flat: usize) -> (usize, usize) {
        (flat % self.nx, flat / self.nx)
    }

    pub fn checked_index(&self, i: usize, j: usize) -> Result<usize> {
        if i >= self.nx || j >= self.ny {
            return Err(Error::IndexOutOfRange {
                i,
                j,
                nx: self.nx,
                ny: self.ny,
            });
        }
        Ok(self.index(i, j))
    }

    /// Physical center of cell `(i, j)`.
    pub fn cell_center(&self, i: usize, j: usize) -> Result<(f64, f64)> {
        self.checked_index(i, j)?;
        Ok(((i as f64 + 0.5) * self.dx, (j as f64 + 0.5) * self.dy))
    }

    /// The injection cell. Even-sized grids have no exact center; this picks
    /// `(nx / 2, ny / 2)`, half a cell up and right of the geometric center.
    pub fn center_cell_index(&self) -> (usize, usize) {
        (self.nx / 2, self.ny / 2)
    }
}

fn check_values(grid: &Grid, values: &[f64]) -> Result<()> {
    if values.len() != grid.len() {
        return Err(Error::LengthMismatch {
            expected: grid.len(),
            got: values.len(),
        });
    }
    if let Some(index) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { index });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarField {
    grid: Grid,
    values: Vec<f64>,
    unit: String,
}

impl ScalarField {
    pub fn new(grid: Grid, values: Vec<f64>, unit: impl Into<String>) -> Result<Self> {
        grid.validate()?;
        check_values(&grid, &values)?;
        Ok(Self {
            grid,
            values,
            unit: unit.into(),
        })
    }

    pub fn constant(grid: Grid, value: f64, unit: impl Into<String>) -> Result<Self> {
        Self::new(grid, vec![value; grid.len()], unit)
    }

    pub fn from_fn(
        grid: Grid,
        unit: impl Into<String>,
        mut f: impl FnMut(f64, f64) -> f64,
    ) -> Result<Self> {
        let mut values = Vec::with_capacity(grid.len());
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                values.push(f((i as f64 + 0.5) * grid.dx, (j as f64 + 0.5) * grid.dy));
            }
        }
        Self::new(grid, values, unit)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn unit(&self) -> &str {
        &self.unit
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.index(i, j)]
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Applies `f` to every value, keeping grid and unit.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(
            self.grid,
            self.values.iter().map(|&v| f(v)).collect(),
            self.unit.clone(),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorField {
    grid: Grid,
    x_values: Vec<f64>,
    y_values: Vec<f64>,
    unit: String,
}

impl VectorField {
    pub fn new(
        grid: Grid,
        x_values: Vec<f64>,
        y_values: Vec<f64>,
        unit: impl Into<String>,
    ) -> Result<Self> {
        grid.validate()?;
        check_values(&grid, &x_values)?;
        check_values(&grid, &y_values)?;
        Ok(Self {
            grid,
            x_values,
            y_values,
            unit: unit.into(),
        })
    }

    pub fn uniform(grid: Grid, vx: f64, vy: f64, unit: impl Into<String>) -> Result<Self> {
        Self::new(grid, vec![vx; grid.len()], vec![vy; grid.len()], unit)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn x(&self) -> &[f64] {
        &self.x_values
    }

    pub fn y(&self) -> &[f64] {
        &self.y_values
    }

    pub fn unit(&self) -> &str {
        &self.unit
    }

    pub fn at(&self, i: usize, j: usize) -> (f64, f64) {
        let k = self.grid.index(i, j);
        (self.x_values[k], self.y_values[k])
    }

    /// Domain-averaged vector.
    pub fn mean(&self) -> (f64, f64) {
        let n = self.grid.len() as f64;
        (
            self.x_values.iter().sum::<f64>() / n,
            self.y_values.iter().sum::<f64>() / n,
        )
    }

    pub fn max_magnitude(&self) -> f64 {
        self.x_values
            .iter()
            .zip(&self.y_values)
            .map(|(x, y)| x.hypot(*y))
            .fold(0.0, f64::max)
    }
}
