//! Thin-plate spline interpolation in two dimensions.
//!
//! The interpolant is `s(x) = Σ wᵢ φ(‖x − xᵢ‖) + a₀ + a₁x + a₂y` with
//! `φ(r) = r² ln r`, subject to the side conditions `Σ wᵢ = Σ wᵢxᵢ = Σ wᵢyᵢ = 0`.
//!
//! The saddle-point system is solved in the null space of the affine
//! constraints: with `P = [1 x y]` factored as `P = Q [R; 0]`, the weights are
//! `w = Q₂ γ` where `(Q₂ᵀ A Q₂) γ = Q₂ᵀ f`. The reduced matrix is positive
//! definite for distinct, non-collinear centers, so a Cholesky factorization
//! suffices and doubles as a singularity check.

use crate::error::{Error, Result};

/// `r² ln r`, continuously extended with `φ(0) = 0`.
#[inline]
pub fn tps_kernel(r: f64) -> f64 {
    if r <= 0.0 {
        0.0
    } else {
        r * r * r.ln()
    }
}

#[derive(Debug, Clone)]
pub struct ThinPlateSpline {
    centers: Vec<(f64, f64)>,
    weights: Vec<f64>,
    affine: [f64; 3],
}

impl ThinPlateSpline {
    pub fn fit(centers: &[(f64, f64)], values: &[f64]) -> Result<Self> {
        let n = centers.len();
        if n != values.len() {
            return Err(Error::InvalidParameter(format!(
                "{} centers but {} values",
                n,
                values.len()
            )));
        }
        if n < 3 {
            return Err(Error::SingularSystem(format!(
                "need at least 3 centers, got {n}"
            )));
        }
        if centers.iter().any(|c| !c.0.is_finite() || !c.1.is_finite())
            || values.iter().any(|v| !v.is_finite())
        {
            return Err(Error::InvalidParameter("non-finite center or value".into()));
        }

        // Householder QR of the n x 3 affine block.
        let mut p: Vec<[f64; 3]> = centers.iter().map(|&(x, y)| [1.0, x, y]).collect();
        let reflectors = householder_qr(&mut p)?;
        let r = [
            [p[0][0], p[0][1], p[0][2]],
            [0.0, p[1][1], p[1][2]],
            [0.0, 0.0, p[2][2]],
        ];

        let scale = centers
            .iter()
            .map(|&(x, y)| x.abs().max(y.abs()))
            .fold(1.0_f64, f64::max);
        for k in 0..3 {
            if r[k][k].abs() <= 1e-12 * scale * (n as f64).sqrt() {
                return Err(Error::SingularSystem("centers are collinear".into()));
            }
        }

        // A = [φ(|xi - xj|)]
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..i {
                let d = (centers[i].0 - centers[j].0).hypot(centers[i].1 - centers[j].1);
                let v = tps_kernel(d);
                a[i * n + j] = v;
                a[j * n + i] = v;
            }
        }

        // M = Qᵀ A Q, using symmetry of A.
        let mut m = a.clone();
        for col in 0..n {
            let mut c: Vec<f64> = (0..n).map(|row| m[row * n + col]).collect();
            apply_qt(&reflectors, &mut c);
            for row in 0..n {
                m[row * n + col] = c[row];
            }
        }
        for row in 0..n {
            apply_qt(&reflectors, &mut m[row * n..(row + 1) * n]);
        }

        let k = n - 3;
        let mut gamma = values.to_vec();
        apply_qt(&reflectors, &mut gamma);
        let mut gamma: Vec<f64> = gamma[3..].to_vec();

        if k > 0 {
            let mut reduced = vec![0.0; k * k];
            for i in 0..k {
                for j in 0..k {
                    reduced[i * k + j] = m[(i + 3) * n + (j + 3)];
                }
            }
            cholesky_solve(&mut reduced, k, &mut gamma)?;
        }

        let mut weights = vec![0.0; n];
        weights[3..].copy_from_slice(&gamma);
        apply_q(&reflectors, &mut weights);

        // R a = (Qᵀ (f - A w))[..3]
        let mut resid: Vec<f64> = (0..n)
            .map(|i| values[i] - (0..n).map(|j| a[i * n + j] * weights[j]).sum::<f64>())
            .collect();
        apply_qt(&reflectors, &mut resid);
        let mut affine = [0.0; 3];
        for i in (0..3).rev() {
            let mut s = resid[i];
            for j in i + 1..3 {
                s -= r[i][j] * affine[j];
            }
            affine[i] = s / r[i][i];
        }

        Ok(Self {
            centers: centers.to_vec(),
            weights,
            affine,
        })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Affine coefficients `(a₀, a₁, a₂)`.
    pub fn affine(&self) -> [f64; 3] {
        self.affine
    }

    pub fn evaluate(&self, x: f64, y: f64) -> f64 {
        let radial: f64 = self
            .centers
            .iter()
            .zip(&self.weights)
            .map(|(&(cx, cy), &w)| w * tps_kernel((x - cx).hypot(y - cy)))
            .sum();
        radial + self.affine[0] + self.affine[1] * x + self.affine[2] * y
    }
}

struct Reflector {
    v: Vec<f64>,
    beta: f64,
}

/// In-place Householder QR of an n x 3 matrix. On return the upper triangle
/// holds R.
fn householder_qr(p: &mut [[f64; 3]]) -> Result<Vec<Reflector>> {
    let n = p.len();
    let mut out = Vec::with_capacity(3);
    for k in 0..3 {
        let norm = (k..n).map(|i| p[i][k] * p[i][k]).sum::<f64>().sqrt();
        let mut v = vec![0.0; n];
        if norm == 0.0 {
            return Err(Error::SingularSystem("degenerate affine block".into()));
        }
        let alpha = if p[k][k] > 0.0 { -norm } else { norm };
        for i in k..n {
            v[i] = p[i][k];
        }
        v[k] -= alpha;
        let vtv: f64 = v.iter().map(|x| x * x).sum();
        let beta = if vtv == 0.0 { 0.0 } else { 2.0 / vtv };
        for col in k..3 {
            let dot: f64 = (k..n).map(|i| v[i] * p[i][col]).sum();
            for i in k..n {
                p[i][col] -= beta * v[i] * dot;
            }
        }
        out.push(Reflector { v, beta });
    }
    Ok(out)
}

fn apply_reflector(h: &Reflector, x: &mut [f64]) {
    let dot: f64 = h.v.iter().zip(x.iter()).map(|(a, b)| a * b).sum();
    let s = h.beta * dot;
    for (xi, vi) in x.iter_mut().zip(&h.v) {
        *xi -= s * vi;
    }
}

fn apply_qt(hs: &[Reflector], x: &mut [f64]) {
    for h in hs {
        apply_reflector(h, x);
    }
}

fn apply_q(hs: &[Reflector], x: &mut [f64]) {
    for h in hs.iter().rev() {
        apply_reflector(h, x);
    }
}

fn cholesky_solve(m: &mut [f64], k: usize, rhs: &mut [f64]) -> Result<()> {
    let diag_scale = (0..k)
        .map(|i| m[i * k + i].abs())
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    for j in 0..k {
        let mut d = m[j * k + j];
        for p in 0..j {
            d -= m[j * k + p] * m[j * k + p];
        }
        if !(d > 1e-13 * diag_scale) {
            return Err(Error::SingularSystem(
                "reduced kernel matrix is not positive definite (coincident centers?)".into(),
            ));
        }
        let d = d.sqrt();
        m[j * k + j] = d;
        for i in j + 1..k {
            let mut s = m[i * k + j];
            for p in 0..j {
                s -= m[i * k + p] * m[j * k + p];
            }
            m[i * k + j] = s / d;
        }
    }
    for i in 0..k {
        let mut s = rhs[i];
        for p in 0..i {
            s -= m[i * k + p] * rhs[p];
        }
        rhs[i] = s / m[i * k + i];
    }
    for i in (0..k).rev() {
        let mut s = rhs[i];
        for p in i + 1..k {
            s -= m[p * k + i] * rhs[p];
        }
        rhs[i] = s / m[i * k + i];
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lattice(n: usize, spacing: f64) -> Vec<(f64, f64)> {
        let mut c = Vec::new();
        for j in 0..n {
            for i in 0..n {
                c.push(((i as f64 + 0.5) * spacing, (j as f64 + 0.5) * spacing));
            }
        }
        c
    }

    #[test]
    fn kernel_values() {
        assert_eq!(tps_kernel(0.0), 0.0);
        assert_eq!(tps_kernel(1.0), 0.0);
        assert!((tps_kernel(2.0) - 4.0 * 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn side_conditions_hold() {
        let c = lattice(4, 32.0);
        let v: Vec<f64> = (0..16).map(|k| ((k * 37) % 11) as f64).collect();
        let tps = ThinPlateSpline::fit(&c, &v).unwrap();
        let w = tps.weights();
        let sw: f64 = w.iter().sum();
        let sx: f64 = w.iter().zip(&c).map(|(w, p)| w * p.0).sum();
        let sy: f64 = w.iter().zip(&c).map(|(w, p)| w * p.1).sum();
        let scale = w.iter().map(|x| x.abs()).sum::<f64>() * 128.0;
        assert!(sw.abs() < 1e-12 * scale && sx.abs() < 1e-12 * scale && sy.abs() < 1e-12 * scale);
    }

    #[test]
    fn three_points_give_the_plane() {
        let c = [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)];
        let tps = ThinPlateSpline::fit(&c, &[1.0, 3.0, -2.0]).unwrap();
        assert!(tps.weights().iter().all(|w| w.abs() < 1e-14));
        let [a0, a1, a2] = tps.affine();
        assert!((a0 - 1.0).abs() < 1e-14 && (a1 - 2.0).abs() < 1e-14 && (a2 + 3.0).abs() < 1e-14);
    }

    #[test]
    fn coincident_and_collinear_centers_are_singular() {
        let c = [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 0.0)];
        assert!(matches!(
            ThinPlateSpline::fit(&c, &[1.0, 2.0, 3.0, 2.0]),
            Err(Error::SingularSystem(_))
        ));
        let c = [(0.0, 0.0), (1.0, 1.0), (2.0, 2.0), (3.0, 3.0)];
        assert!(matches!(
            ThinPlateSpline::fit(&c, &[1.0, 2.0, 3.0, 4.0]),
            Err(Error::SingularSystem(_))
        ));
        assert!(ThinPlateSpline::fit(&c[..2], &[1.0, 2.0]).is_err());
    }
}
