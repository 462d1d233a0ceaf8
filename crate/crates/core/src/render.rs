//! PNG comparison panels with fixed color scales.

use std::path::Path;

use image::{Rgb, RgbImage};

use crate::error::{Error, Result};

/// Temperature scale of the panels (°C).
pub const TEMPERATURE_RANGE: (f64, f64) = (10.0, 15.0);
/// Signed error scale (K), symmetric around zero.
pub const ERROR_RANGE: f64 = 2.0;

const PIXELS_PER_CELL: u32 = 4;
const GAP: u32 = 8;
const BAR_HEIGHT: u32 = 12;
const OUTLINE: Rgb<u8> = Rgb([128, 128, 128]);

/// Piecewise-linear sequential map, dark purple to pale yellow.
const SEQUENTIAL: [(f64, [u8; 3]); 5] = [
    (0.0, [0, 0, 4]),
    (0.25, [87, 16, 110]),
    (0.5, [188, 55, 84]),
    (0.75, [249, 142, 9]),
    (1.0, [252, 255, 164]),
];

const DIVERGING: [(f64, [u8; 3]); 3] = [
    (0.0, [33, 102, 172]),
    (0.5, [247, 247, 247]),
    (1.0, [178, 24, 43]),
];

fn lerp_map(stops: &[(f64, [u8; 3])], s: f64) -> Rgb<u8> {
    let s = if s.is_finite() {
        s.clamp(0.0, 1.0)
    } else {
        0.0
    };
    for w in stops.windows(2) {
        let (a, ca) = w[0];
        let (b, cb) = w[1];
        if s <= b {
            let f = (s - a) / (b - a);
            let c = |k: usize| (ca[k] as f64 + f * (cb[k] as f64 - ca[k] as f64)).round() as u8;
            return Rgb([c(0), c(1), c(2)]);
        }
    }
    let c = stops[stops.len() - 1].1;
    Rgb(c)
}

pub fn temperature_color(t: f64) -> Rgb<u8> {
    lerp_map(
        &SEQUENTIAL,
        (t - TEMPERATURE_RANGE.0) / (TEMPERATURE_RANGE.1 - TEMPERATURE_RANGE.0),
    )
}

pub fn error_color(e: f64) -> Rgb<u8> {
    lerp_map(&DIVERGING, 0.5 + e / (2.0 * ERROR_RANGE))
}

/// Prediction | target | signed error, each with its scale bar underneath.
/// `outline` marks cells on the edge of the analytical plume on the first two
/// panels. Images use y up (row 0 of the field at the bottom).
pub fn render_triptych(
    nx: usize,
    ny: usize,
    predicted: &[f64],
    target: &[f64],
    outline: Option<&[bool]>,
    path: &Path,
) -> Result<()> {
    let n = nx * ny;
    if predicted.len() != n || target.len() != n || outline.is_some_and(|o| o.len() != n) {
        return Err(Error::LengthMismatch {
            expected: n,
            got: predicted.len(),
        });
    }
    let pw = nx as u32 * PIXELS_PER_CELL;
    let ph = ny as u32 * PIXELS_PER_CELL;
    let width = 3 * pw + 4 * GAP;
    let height = ph + BAR_HEIGHT + 3 * GAP;
    let mut img = RgbImage::from_pixel(width, height, Rgb([255, 255, 255]));
    let error: Vec<f64> = predicted.iter().zip(target).map(|(p, t)| p - t).collect();

    let edge = outline.map(|o| outline_edges(o, nx, ny));
    let panels: [(&[f64], fn(f64) -> Rgb<u8>, bool); 3] = [
        (predicted, temperature_color, true),
        (target, temperature_color, true),
        (&error, error_color, false),
    ];
    for (k, (values, cmap, overlay)) in panels.into_iter().enumerate() {
        let x0 = GAP + k as u32 * (pw + GAP);
        for j in 0..ny {
            for i in 0..nx {
                let flat = j * nx + i;
                let mut c = cmap(values[flat]);
                if overlay && edge.as_ref().is_some_and(|e| e[flat]) {
                    c = OUTLINE;
                }
                let py = GAP + (ny - 1 - j) as u32 * PIXELS_PER_CELL;
                for dy in 0..PIXELS_PER_CELL {
                    for dx in 0..PIXELS_PER_CELL {
                        img.put_pixel(x0 + i as u32 * PIXELS_PER_CELL + dx, py + dy, c);
                    }
                }
            }
        }
        let by = GAP + ph + GAP;
        for x in 0..pw {
            let s = x as f64 / (pw - 1).max(1) as f64;
            let c = if overlay {
                temperature_color(
                    TEMPERATURE_RANGE.0 + s * (TEMPERATURE_RANGE.1 - TEMPERATURE_RANGE.0),
                )
            } else {
                error_color((2.0 * s - 1.0) * ERROR_RANGE)
            };
            for y in 0..BAR_HEIGHT {
                img.put_pixel(x0 + x, by + y, c);
            }
        }
    }
    img.save(path)?;
    Ok(())
}

/// Cells inside the region with at least one 4-neighbor outside it.
fn outline_edges(inside: &[bool], nx: usize, ny: usize) -> Vec<bool> {
    let mut out = vec![false; inside.len()];
    for j in 0..ny {
        for i in 0..nx {
            let f = j * nx + i;
            if !inside[f] {
                continue;
            }
            let outside = |ii: isize, jj: isize| {
                ii < 0
                    || jj < 0
                    || ii >= nx as isize
                    || jj >= ny as isize
                    || !inside[jj as usize * nx + ii as usize]
            };
            let (ii, jj) = (i as isize, j as isize);
            out[f] = outside(ii - 1, jj)
                || outside(ii + 1, jj)
                || outside(ii, jj - 1)
                || outside(ii, jj + 1);
        }
    }
    out
}
