//! Oracles and measurements shared by the test targets.
#![allow(dead_code)]

use std::f64::consts::PI;

use gwhp_core::geogen::tps_kernel;
use gwhp_core::lahm::LahmParams;
use gwhp_core::nn::{ModelConfig, UNet};
use gwhp_core::sim::{solve_pressure_with, SolverOptions};
use gwhp_core::{Grid, ScalarField};

pub const L: f64 = 128.0;

/// Solves −∇·(K∇P) = f with Dirichlet P = P* for the manufactured pair
/// (k, p) and returns the max-norm error on an n×n grid.
pub fn mms_error(
    n: usize,
    k: &dyn Fn(f64, f64) -> (f64, f64, f64),
    p: &dyn Fn(f64, f64) -> [f64; 5],
) -> f64 {
    let grid = Grid::square(n, L).unwrap();
    let kf = ScalarField::from_fn(grid, "K", |x, y| k(x, y).0).unwrap();
    let vol = grid.cell_volume();
    let source: Vec<f64> = (0..grid.len())
        .map(|c| {
            let (i, j) = grid.coords(c);
            let (x, y) = grid.cell_center(i, j).unwrap();
            let (kv, kx, ky) = k(x, y);
            let [_, px, py, pxx, pyy] = p(x, y);
            -(kx * px + kv * pxx + ky * py + kv * pyy) * vol
        })
        .collect();
    let bc = |x: f64, y: f64| p(x, y)[0];
    let sol = solve_pressure_with(&kf, &bc, &source, SolverOptions::default()).unwrap();
    sol.pressure
        .values()
        .iter()
        .enumerate()
        .map(|(c, v)| {
            let (i, j) = grid.coords(c);
            let (x, y) = grid.cell_center(i, j).unwrap();
            (v - p(x, y)[0]).abs()
        })
        .fold(0.0, f64::max)
}

/// P* = sin(πx/L) sin(πy/L) with value and first/second derivatives.
pub fn sine_mode(x: f64, y: f64) -> [f64; 5] {
    let a = PI / L;
    let (sx, cx) = (a * x).sin_cos();
    let (sy, cy) = (a * y).sin_cos();
    [
        sx * sy,
        a * cx * sy,
        a * sx * cy,
        -a * a * sx * sy,
        -a * a * sx * sy,
    ]
}

/// Dense Gaussian elimination with partial pivoting on the full saddle system
/// `[A P; Pᵀ 0] [w; a] = [v; 0]`.
pub fn dense_tps(centers: &[(f64, f64)], values: &[f64]) -> (Vec<f64>, [f64; 3]) {
    let n = centers.len();
    let m = n + 3;
    let mut a = vec![vec![0.0; m + 1]; m];
    for i in 0..n {
        for j in 0..n {
            let (dx, dy) = (centers[i].0 - centers[j].0, centers[i].1 - centers[j].1);
            a[i][j] = tps_kernel((dx * dx + dy * dy).sqrt());
        }
        let row = [1.0, centers[i].0, centers[i].1];
        for k in 0..3 {
            a[i][n + k] = row[k];
            a[n + k][i] = row[k];
        }
        a[i][m] = values[i];
    }
    for col in 0..m {
        let piv = (col..m)
            .max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))
            .unwrap();
        a.swap(col, piv);
        for r in col + 1..m {
            let f = a[r][col] / a[col][col];
            if f != 0.0 {
                for c in col..=m {
                    a[r][c] -= f * a[col][c];
                }
            }
        }
    }
    let mut x = vec![0.0; m];
    for r in (0..m).rev() {
        let s: f64 = (r + 1..m).map(|c| a[r][c] * x[c]).sum();
        x[r] = (a[r][m] - s) / a[r][r];
    }
    (x[..n].to_vec(), [x[n], x[n + 1], x[n + 2]])
}

pub fn dense_eval(centers: &[(f64, f64)], w: &[f64], a: [f64; 3], x: f64, y: f64) -> f64 {
    let mut v = a[0] + a[1] * x + a[2] * y;
    for (c, wi) in centers.iter().zip(w) {
        v += wi * tps_kernel(((x - c.0).powi(2) + (y - c.1).powi(2)).sqrt());
    }
    v
}

/// erfc by composite Simpson quadrature of the Gaussian tail.
pub fn erfc_quadrature(z: f64) -> f64 {
    let (a, b) = if z >= 0.0 { (z, z + 12.0) } else { (0.0, 12.0) };
    let n = 200_000;
    let h = (b - a) / n as f64;
    let f = |s: f64| (-s * s).exp();
    let mut sum = f(a) + f(b);
    for k in 1..n {
        sum += f(a + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
    }
    let tail = 2.0 / std::f64::consts::PI.sqrt() * sum * h / 3.0;
    if z >= 0.0 {
        tail
    } else {
        // erfc(z) = 1 + erf(|z|) = 2 − erfc(|z|)
        2.0 - erfc_quadrature(-z)
    }
}

pub fn formula_with_quadrature(p: &LahmParams, x: f64, y: f64) -> f64 {
    let v = p.velocity / p.porosity;
    let steady = p.delta_t_inj * p.injection_rate
        / (4.0 * p.porosity * p.thickness * v * (std::f64::consts::PI * p.alpha_t * x).sqrt())
        * (-(y * y) / (4.0 * p.alpha_t * x)).exp();
    let r = (x * x + y * y * p.alpha_l / p.alpha_t).sqrt();
    let arg =
        (r - v * p.time / p.retardation) / (2.0 * (v * p.alpha_l * p.time / p.retardation).sqrt());
    steady * erfc_quadrature(arg)
}

pub fn tiny_net(skip: bool) -> UNet {
    UNet::new(ModelConfig {
        input_size: 8,
        in_channels: 2,
        out_channels: 1,
        channel_schedule: vec![3, 4],
        kernel_size: 4,
        skip_connections: skip,
    })
    .unwrap()
}

pub fn pseudo_random(n: usize, salt: u64) -> Vec<f64> {
    (0..n as u64)
        .map(|i| {
            let z = gwhp_core::geogen::derive_seed(salt, i);
            (z >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
        })
        .collect()
}

pub fn loss(net: &UNet, p: &[f64], x: &[f64], t: &[f64], batch: usize) -> (f64, Vec<bool>) {
    let tape = net.forward_tape(p, x, batch).unwrap();
    let l = tape
        .output()
        .iter()
        .zip(t)
        .map(|(y, t)| 0.5 * (y - t) * (y - t))
        .sum();
    let mask = net
        .layers
        .iter()
        .zip(&tape.outputs)
        .filter(|(layer, _)| layer.relu)
        .flat_map(|(_, o)| o.iter().map(|&v| v > 0.0))
        .collect();
    (l, mask)
}

pub struct GradCheck {
    pub params: usize,
    pub checked: usize,
    pub significant: usize,
    /// Largest |numeric − analytic| / max(|numeric|, |analytic|) over
    /// parameters whose gradient exceeds 1e-7 in magnitude.
    pub worst_relative: f64,
}

/// Central differences against backpropagation on the tiny network, in f64.
/// Parameters whose perturbation flips a ReLU are skipped.
pub fn gradient_check(skip: bool) -> GradCheck {
    let net = tiny_net(skip);
    let batch = 2;
    let mut p: Vec<f64> = net.init_params(3);
    for (v, r) in p.iter_mut().zip(pseudo_random(net.param_count(), 11)) {
        *v += 0.05 * r;
    }
    let x = pseudo_random(2 * batch * 64, 5);
    let t = pseudo_random(batch * 64, 7);

    let tape = net.forward_tape(&p, &x, batch).unwrap();
    let dout: Vec<f64> = tape.output().iter().zip(&t).map(|(y, t)| y - t).collect();
    let mut grad = vec![0.0; net.param_count()];
    net.backward(&p, &tape, dout, &mut grad).unwrap();

    let significant = grad.iter().filter(|g| g.abs() > 1e-4).count();
    let (_, mask0) = loss(&net, &p, &x, &t, batch);
    let h = 1e-6;
    let (mut checked, mut worst) = (0, 0.0_f64);
    for i in 0..p.len() {
        let mut pp = p.clone();
        pp[i] += h;
        let (lp, mp) = loss(&net, &pp, &x, &t, batch);
        pp[i] -= 2.0 * h;
        let (lm, mm) = loss(&net, &pp, &x, &t, batch);
        if mp != mask0 || mm != mask0 {
            continue;
        }
        let numeric = (lp - lm) / (2.0 * h);
        let scale = numeric.abs().max(grad[i].abs());
        let diff = (numeric - grad[i]).abs();
        // tiny gradients are dominated by finite-difference noise
        if scale >= 1e-5 || diff >= 1e-7 {
            worst = worst.max(diff / scale);
        }
        checked += 1;
    }
    GradCheck {
        params: p.len(),
        checked,
        significant,
        worst_relative: worst,
    }
}

pub fn centroid_offset(t: &ScalarField, well: (usize, usize)) -> (f64, f64) {
    let g = t.grid();
    let (mut sx, mut sy, mut m) = (0.0, 0.0, 0.0);
    for j in 0..g.ny {
        for i in 0..g.nx {
            let w = t.at(i, j) - 10.0;
            sx += w * (i as f64 - well.0 as f64);
            sy += w * (j as f64 - well.1 as f64);
            m += w;
        }
    }
    (sx / m, sy / m)
}

/// L1 asymmetry of the temperature excess under x-mirror, y-mirror and a
/// quarter turn about the well, each relative to the excess mass compared.
pub fn asymmetry(t: &ScalarField, well: (usize, usize)) -> [f64; 3] {
    let g = *t.grid();
    let (wi, wj) = (well.0 as isize, well.1 as isize);
    let excess = |i: isize, j: isize| t.at(i as usize, j as usize) - 10.0;
    let inside = |i: isize, j: isize| i >= 0 && j >= 0 && i < g.nx as isize && j < g.ny as isize;
    let maps: [fn(isize, isize) -> (isize, isize); 3] =
        [|x, y| (-x, y), |x, y| (x, -y), |x, y| (-y, x)];
    maps.map(|map| {
        let (mut diff, mut mass) = (0.0, 0.0);
        for j in 0..g.ny as isize {
            for i in 0..g.nx as isize {
                let (di, dj) = map(i - wi, j - wj);
                if inside(wi + di, wj + dj) {
                    diff += (excess(i, j) - excess(wi + di, wj + dj)).abs();
                    mass += excess(i, j).abs();
                }
            }
        }
        diff / mass
    })
}
