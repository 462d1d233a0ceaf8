//! Steady mass balance `∇·q = s`, `q = -K ∇P` on the cell-centered grid.
//!
//! Two-point flux approximation: interior faces use the harmonic mean of the
//! adjacent permeabilities, boundary faces see a Dirichlet value at the face
//! center half a cell away. The resulting matrix is symmetric positive
//! definite and is solved with Jacobi-preconditioned conjugate gradients.

use crate::error::{Error, Result};
use crate::field::{Grid, ScalarField, VectorField};

/// Volumetric face fluxes (m³/s), positive in the +x / +y direction.
///
/// `x` holds `(nx + 1) * ny` values, face `i` of row `j` at `j * (nx + 1) + i`
/// sits at `x = i dx`. `y` holds `nx * (ny + 1)` values, face `j` of column `i`
/// at `j * nx + i` sits at `y = j dy`.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceFlux {
    pub grid: Grid,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl FaceFlux {
    pub fn zeros(grid: Grid) -> Self {
        Self {
            grid,
            x: vec![0.0; (grid.nx + 1) * grid.ny],
            y: vec![0.0; grid.nx * (grid.ny + 1)],
        }
    }

    #[inline]
    pub fn xf(&self, i: usize, j: usize) -> f64 {
        self.x[j * (self.grid.nx + 1) + i]
    }

    #[inline]
    pub fn yf(&self, i: usize, j: usize) -> f64 {
        self.y[j * self.grid.nx + i]
    }

    /// Face fluxes from a cell-centered Darcy velocity by averaging the two
    /// adjacent cells; boundary faces take the value of their only cell.
    /// Only mass-conservative when the velocity field is divergence-free in
    /// the discrete sense (e.g. uniform).
    pub fn from_cell_velocity(q: &VectorField) -> Self {
        let g = *q.grid();
        let mut out = Self::zeros(g);
        let ax = g.dy * g.thickness;
        let ay = g.dx * g.thickness;
        for j in 0..g.ny {
            for i in 0..=g.nx {
                let v = match (i, i == g.nx) {
                    (0, _) => q.x()[g.index(0, j)],
                    (_, true) => q.x()[g.index(g.nx - 1, j)],
                    _ => 0.5 * (q.x()[g.index(i - 1, j)] + q.x()[g.index(i, j)]),
                };
                out.x[j * (g.nx + 1) + i] = v * ax;
            }
        }
        for j in 0..=g.ny {
            for i in 0..g.nx {
                let v = if j == 0 {
                    q.y()[g.index(i, 0)]
                } else if j == g.ny {
                    q.y()[g.index(i, g.ny - 1)]
                } else {
                    0.5 * (q.y()[g.index(i, j - 1)] + q.y()[g.index(i, j)])
                };
                out.y[j * g.nx + i] = v * ay;
            }
        }
        out
    }

    /// Net outflow of every cell (m³/s).
    pub fn net_outflow(&self) -> Vec<f64> {
        let g = self.grid;
        let mut out = vec![0.0; g.len()];
        for j in 0..g.ny {
            for i in 0..g.nx {
                out[g.index(i, j)] =
                    self.xf(i + 1, j) - self.xf(i, j) + self.yf(i, j + 1) - self.yf(i, j);
            }
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.x
            .iter()
            .chain(&self.y)
            .fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Cell-centered Darcy velocity: each component is the mean of the two
    /// opposing face fluxes divided by the face area.
    pub fn cell_velocity(&self) -> Result<VectorField> {
        let g = self.grid;
        let ax = g.dy * g.thickness;
        let ay = g.dx * g.thickness;
        let mut qx = Vec::with_capacity(g.len());
        let mut qy = Vec::with_capacity(g.len());
        for j in 0..g.ny {
            for i in 0..g.nx {
                qx.push(0.5 * (self.xf(i, j) + self.xf(i + 1, j)) / ax);
                qy.push(0.5 * (self.yf(i, j) + self.yf(i, j + 1)) / ay);
            }
        }
        VectorField::new(g, qx, qy, "m/s")
    }
}

/// Face transmissibilities (m³/(s·Pa)) for a permeability field.
#[derive(Debug, Clone)]
struct Transmissibility {
    x: Vec<f64>,
    y: Vec<f64>,
}

fn harmonic(a: f64, b: f64) -> f64 {
    2.0 * a * b / (a + b)
}

fn transmissibility(k: &ScalarField) -> Result<Transmissibility> {
    let g = *k.grid();
    if let Some(idx) = k.values().iter().position(|v| !(*v > 0.0)) {
        return Err(Error::InvalidParameter(format!(
            "permeability must be strictly positive, got {} at cell {:?}",
            k.values()[idx],
            g.coords(idx)
        )));
    }
    let ax = g.dy * g.thickness / g.dx;
    let ay = g.dx * g.thickness / g.dy;
    let mut tx = vec![0.0; (g.nx + 1) * g.ny];
    let mut ty = vec![0.0; g.nx * (g.ny + 1)];
    for j in 0..g.ny {
        for i in 0..=g.nx {
            tx[j * (g.nx + 1) + i] = if i == 0 {
                2.0 * k.at(0, j) * ax
            } else if i == g.nx {
                2.0 * k.at(g.nx - 1, j) * ax
            } else {
                harmonic(k.at(i - 1, j), k.at(i, j)) * ax
            };
        }
    }
    for j in 0..=g.ny {
        for i in 0..g.nx {
            ty[j * g.nx + i] = if j == 0 {
                2.0 * k.at(i, 0) * ay
            } else if j == g.ny {
                2.0 * k.at(i, g.ny - 1) * ay
            } else {
                harmonic(k.at(i, j - 1), k.at(i, j)) * ay
            };
        }
    }
    Ok(Transmissibility { x: tx, y: ty })
}

/// Dirichlet pressure at the four boundary face rows/columns.
struct BoundaryValues {
    west: Vec<f64>,
    east: Vec<f64>,
    south: Vec<f64>,
    north: Vec<f64>,
}

impl BoundaryValues {
    fn sample(g: &Grid, bc: &dyn Fn(f64, f64) -> f64) -> Self {
        let (lx, ly) = (g.extent_x(), g.extent_y());
        let ys: Vec<f64> = (0..g.ny).map(|j| (j as f64 + 0.5) * g.dy).collect();
        let xs: Vec<f64> = (0..g.nx).map(|i| (i as f64 + 0.5) * g.dx).collect();
        Self {
            west: ys.iter().map(|&y| bc(0.0, y)).collect(),
            east: ys.iter().map(|&y| bc(lx, y)).collect(),
            south: xs.iter().map(|&x| bc(x, 0.0)).collect(),
            north: xs.iter().map(|&x| bc(x, ly)).collect(),
        }
    }
}

fn fluxes_from(g: &Grid, t: &Transmissibility, p: &[f64], bv: &BoundaryValues) -> FaceFlux {
    let mut f = FaceFlux::zeros(*g);
    for j in 0..g.ny {
        for i in 0..=g.nx {
            let k = j * (g.nx + 1) + i;
            f.x[k] = if i == 0 {
                t.x[k] * (bv.west[j] - p[g.index(0, j)])
            } else if i == g.nx {
                t.x[k] * (p[g.index(g.nx - 1, j)] - bv.east[j])
            } else {
                t.x[k] * (p[g.index(i - 1, j)] - p[g.index(i, j)])
            };
        }
    }
    for j in 0..=g.ny {
        for i in 0..g.nx {
            let k = j * g.nx + i;
            f.y[k] = if j == 0 {
                t.y[k] * (bv.south[i] - p[g.index(i, 0)])
            } else if j == g.ny {
                t.y[k] * (p[g.index(i, g.ny - 1)] - bv.north[i])
            } else {
                t.y[k] * (p[g.index(i, j - 1)] - p[g.index(i, j)])
            };
        }
    }
    f
}

/// Face fluxes implied by a pressure field, with Dirichlet data `bc` on the
/// boundary faces.
pub fn face_fluxes(
    k: &ScalarField,
    p: &ScalarField,
    bc: &dyn Fn(f64, f64) -> f64,
) -> Result<FaceFlux> {
    if k.grid() != p.grid() {
        return Err(Error::GridMismatch);
    }
    let g = *k.grid();
    let t = transmissibility(k)?;
    Ok(fluxes_from(
        &g,
        &t,
        p.values(),
        &BoundaryValues::sample(&g, bc),
    ))
}

/// Darcy velocity `q = -K ∇P` at cell centers: harmonic-mean face fluxes
/// averaged over opposing faces.
pub fn darcy_velocity(
    k: &ScalarField,
    p: &ScalarField,
    bc: &dyn Fn(f64, f64) -> f64,
) -> Result<VectorField> {
    face_fluxes(k, p, bc)?.cell_velocity()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Stop once every cell imbalance is below this fraction of the flux scale.
    pub flux_tolerance: f64,
    pub max_iterations: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            flux_tolerance: 1e-13,
            max_iterations: 50_000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PressureSolution {
    pub pressure: ScalarField,
    pub flux: FaceFlux,
    pub iterations: usize,
    /// `‖b − A p‖₂ / ‖b‖₂` of the returned solution.
    pub relative_residual: f64,
}

/// Solves `Σ_faces F = source` in every cell, where `source` is a volumetric
/// rate per cell (m³/s, positive for injection).
pub fn solve_pressure_with(
    k: &ScalarField,
    bc: &dyn Fn(f64, f64) -> f64,
    source: &[f64],
    opts: SolverOptions,
) -> Result<PressureSolution> {
    let g = *k.grid();
    if g.nx < 2 || g.ny < 2 {
        return Err(Error::InvalidGrid(format!(
            "pressure solve needs at least 2x2 cells, got {}x{}",
            g.nx, g.ny
        )));
    }
    if source.len() != g.len() {
        return Err(Error::LengthMismatch {
            expected: g.len(),
            got: source.len(),
        });
    }
    let t = transmissibility(k)?;
    let bv = BoundaryValues::sample(&g, bc);
    let n = g.len();

    let mut diag = vec![0.0; n];
    let mut rhs = source.to_vec();
    for j in 0..g.ny {
        for i in 0..g.nx {
            let c = g.index(i, j);
            let tw = t.x[j * (g.nx + 1) + i];
            let te = t.x[j * (g.nx + 1) + i + 1];
            let ts = t.y[j * g.nx + i];
            let tn = t.y[(j + 1) * g.nx + i];
            diag[c] = tw + te + ts + tn;
            if i == 0 {
                rhs[c] += tw * bv.west[j];
            }
            if i == g.nx - 1 {
                rhs[c] += te * bv.east[j];
            }
            if j == 0 {
                rhs[c] += ts * bv.south[i];
            }
            if j == g.ny - 1 {
                rhs[c] += tn * bv.north[i];
            }
        }
    }

    let apply = |x: &[f64], out: &mut [f64]| {
        for j in 0..g.ny {
            for i in 0..g.nx {
                let c = g.index(i, j);
                let mut v = diag[c] * x[c];
                if i > 0 {
                    v -= t.x[j * (g.nx + 1) + i] * x[c - 1];
                }
                if i + 1 < g.nx {
                    v -= t.x[j * (g.nx + 1) + i + 1] * x[c + 1];
                }
                if j > 0 {
                    v -= t.y[j * g.nx + i] * x[c - g.nx];
                }
                if j + 1 < g.ny {
                    v -= t.y[(j + 1) * g.nx + i] * x[c + g.nx];
                }
                out[c] = v;
            }
        }
    };

    // Start from the boundary data extended to the interior.
    let mut x: Vec<f64> = (0..n)
        .map(|c| {
            let (i, j) = g.coords(c);
            bc((i as f64 + 0.5) * g.dx, (j as f64 + 0.5) * g.dy)
        })
        .collect();

    let flux_scale = fluxes_from(&g, &t, &x, &bv)
        .max_abs()
        .max(source.iter().fold(0.0_f64, |m, v| m.max(v.abs())));
    let threshold = opts.flux_tolerance * flux_scale;

    let mut ax = vec![0.0; n];
    apply(&x, &mut ax);
    let mut r: Vec<f64> = rhs.iter().zip(&ax).map(|(b, a)| b - a).collect();
    let mut z: Vec<f64> = r.iter().zip(&diag).map(|(r, d)| r / d).collect();
    let mut p = z.clone();
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    let mut ap = vec![0.0; n];
    let mut iterations = 0;

    let max_abs = |v: &[f64]| v.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    while max_abs(&r) > threshold {
        if iterations >= opts.max_iterations {
            let rn = r.iter().map(|v| v * v).sum::<f64>().sqrt();
            let bn = rhs
                .iter()
                .map(|v| v * v)
                .sum::<f64>()
                .sqrt()
                .max(f64::MIN_POSITIVE);
            return Err(Error::SolverDiverged {
                iterations,
                residual: rn / bn,
            });
        }
        apply(&p, &mut ap);
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        if !(pap > 0.0) {
            break;
        }
        let alpha = rz / pap;
        for c in 0..n {
            x[c] += alpha * p[c];
            r[c] -= alpha * ap[c];
        }
        for c in 0..n {
            z[c] = r[c] / diag[c];
        }
        let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let beta = rz_new / rz;
        rz = rz_new;
        for c in 0..n {
            p[c] = z[c] + beta * p[c];
        }
        iterations += 1;
        // Refresh the recursive residual now and then to avoid drift.
        if iterations % 200 == 0 {
            apply(&x, &mut ax);
            for c in 0..n {
                r[c] = rhs[c] - ax[c];
            }
        }
    }

    apply(&x, &mut ax);
    let rn = rhs
        .iter()
        .zip(&ax)
        .map(|(b, a)| (b - a) * (b - a))
        .sum::<f64>()
        .sqrt();
    let bn = rhs.iter().map(|v| v * v).sum::<f64>().sqrt();
    let relative_residual = if bn > 0.0 { rn / bn } else { rn };

    let flux = fluxes_from(&g, &t, &x, &bv);
    Ok(PressureSolution {
        pressure: ScalarField::new(g, x, "Pa")?,
        flux,
        iterations,
        relative_residual,
    })
}
