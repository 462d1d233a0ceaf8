//! Error metrics, evaluation reports and comparisons with the analytical plume.

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dataset::{TrainingPair, TEMPERATURE_OFFSET};
use crate::error::{Error, Result};
use crate::field::{Grid, ScalarField, VectorField};
use crate::lahm::{lahm_field, LahmParams};
use crate::render::render_triptych;
use crate::surrogate::SurrogateModel;

/// `Σ|p − t| / Σ|t|` over raw values.
pub fn relative_error_values(predicted: &[f64], target: &[f64]) -> Result<f64> {
    if predicted.len() != target.len() {
        return Err(Error::LengthMismatch {
            expected: target.len(),
            got: predicted.len(),
        });
    }
    let den: f64 = target.iter().map(|t| t.abs()).sum();
    if !(den > 0.0) {
        return Err(Error::UndefinedMetric(
            "target field is identically zero".into(),
        ));
    }
    let num: f64 = predicted
        .iter()
        .zip(target)
        .map(|(p, t)| (p - t).abs())
        .sum();
    Ok(num / den)
}

/// Relative error of offset temperature fields (T − 10 °C); the target is
/// the denominator.
pub fn relative_error(predicted: &ScalarField, target: &ScalarField) -> Result<f64> {
    if predicted.grid() != target.grid() {
        return Err(Error::GridMismatch);
    }
    relative_error_values(predicted.values(), target.values())
}

/// Signed per-cell `predicted − target` (K).
pub fn error_map(predicted: &ScalarField, target: &ScalarField) -> Result<ScalarField> {
    if predicted.grid() != target.grid() {
        return Err(Error::GridMismatch);
    }
    let v = predicted
        .values()
        .iter()
        .zip(target.values())
        .map(|(p, t)| p - t)
        .collect();
    ScalarField::new(*predicted.grid(), v, "K")
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub count: usize,
    pub mean_ms: f64,
    pub p50_ms: f64,
    pub p90_ms: f64,
    pub p99_ms: f64,
    pub max_ms: f64,
}

impl LatencyStats {
    pub fn from_samples(ms: &[f64]) -> Self {
        if ms.is_empty() {
            return Self::default();
        }
        let mut s = ms.to_vec();
        s.sort_by(f64::total_cmp);
        let pct = |p: f64| s[((p * (s.len() - 1) as f64).round() as usize).min(s.len() - 1)];
        Self {
            count: s.len(),
            mean_ms: s.iter().sum::<f64>() / s.len() as f64,
            p50_ms: pct(0.5),
            p90_ms: pct(0.9),
            p99_ms: pct(0.99),
            max_ms: s[s.len() - 1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleEval {
    pub source_id: u64,
    pub relative_error: f64,
    pub max_abs_error: f64,
    /// Cell of the largest absolute error.
    pub max_error_cell: (usize, usize),
    pub predicted_min: f64,
    pub predicted_max: f64,
    /// Relative error of the analytical plume against the same target.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lahm_relative_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub samples: Vec<SampleEval>,
    /// Metric over all cells of all samples at once.
    pub aggregate_relative_error: f64,
    pub mean_relative_error: f64,
    pub max_abs_error: f64,
    pub predicted_min: f64,
    pub predicted_max: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lahm_aggregate_relative_error: Option<f64>,
    pub latency: LatencyStats,
    /// Signed error fields in sample order (not serialized).
    #[serde(skip)]
    pub error_fields: Vec<ScalarField>,
}

/// One prediction/target pair in °C, with the velocity that produced it.
#[derive(Debug, Clone)]
pub struct EvalCase {
    pub source_id: u64,
    pub predicted: ScalarField,
    pub target: ScalarField,
    pub velocity: Option<VectorField>,
}

/// Analytical plume for the domain-mean velocity of `velocity`, or `None`
/// when the mean flow vanishes.
pub fn lahm_for_velocity(
    velocity: &VectorField,
    well_cell: (usize, usize),
    template: &LahmParams,
) -> Result<Option<ScalarField>> {
    let (mx, my) = velocity.mean();
    let speed = mx.hypot(my);
    if !(speed > 0.0) {
        return Ok(None);
    }
    let params = LahmParams {
        velocity: speed,
        ..*template
    };
    Ok(Some(lahm_field(
        &params,
        velocity.grid(),
        well_cell,
        my.atan2(mx),
    )?))
}

fn offset(values: &[f64]) -> Vec<f64> {
    values.iter().map(|v| v - TEMPERATURE_OFFSET).collect()
}

/// Metrics over prepared cases. With `lahm`, each case with a velocity is also
/// scored against the analytical plume; with `render_dir`, triptych PNGs are
/// written there.
pub fn evaluate_cases(
    cases: &[EvalCase],
    lahm: Option<&LahmParams>,
    render_dir: Option<&Path>,
    latencies_ms: &[f64],
) -> Result<EvalReport> {
    if cases.is_empty() {
        return Err(Error::InsufficientData("no test cases to evaluate".into()));
    }
    let (mut num, mut den) = (0.0, 0.0);
    let (mut lnum, mut lden, mut lahm_all) = (0.0, 0.0, lahm.is_some());
    let mut samples = Vec::with_capacity(cases.len());
    let mut error_fields = Vec::with_capacity(cases.len());
    for case in cases {
        let g = *case.target.grid();
        let p = offset(case.predicted.values());
        let t = offset(case.target.values());
        let rel = relative_error_values(&p, &t)?;
        num += p.iter().zip(&t).map(|(a, b)| (a - b).abs()).sum::<f64>();
        den += t.iter().map(|v| v.abs()).sum::<f64>();
        let err = error_map(&case.predicted, &case.target)?;
        let (flat, max_abs) = err
            .values()
            .iter()
            .enumerate()
            .map(|(k, e)| (k, e.abs()))
            .fold(
                (0, 0.0),
                |best, cur| if cur.1 > best.1 { cur } else { best },
            );

        let well = g.center_cell_index();
        let analytical = match (lahm, &case.velocity) {
            (Some(params), Some(v)) => lahm_for_velocity(v, well, params)?,
            _ => None,
        };
        let lahm_rel = match &analytical {
            Some(a) => {
                let ao = offset(a.values());
                lnum += ao.iter().zip(&t).map(|(x, y)| (x - y).abs()).sum::<f64>();
                lden += t.iter().map(|v| v.abs()).sum::<f64>();
                Some(relative_error_values(&ao, &t)?)
            }
            None => {
                lahm_all = false;
                None
            }
        };
        if let Some(dir) = render_dir {
            let outline: Option<Vec<bool>> = analytical.as_ref().map(|a| {
                a.values()
                    .iter()
                    .map(|v| v - TEMPERATURE_OFFSET >= 1.0)
                    .collect()
            });
            render_triptych(
                g.nx,
                g.ny,
                case.predicted.values(),
                case.target.values(),
                outline.as_deref(),
                &dir.join(format!("triptych_{:016x}.png", case.source_id)),
            )?;
        }
        samples.push(SampleEval {
            source_id: case.source_id,
            relative_error: rel,
            max_abs_error: max_abs,
            max_error_cell: g.coords(flat),
            predicted_min: case.predicted.min(),
            predicted_max: case.predicted.max(),
            lahm_relative_error: lahm_rel,
        });
        error_fields.push(err);
    }
    if !(den > 0.0) {
        return Err(Error::UndefinedMetric(
            "all targets are at ambient temperature".into(),
        ));
    }
    Ok(EvalReport {
        aggregate_relative_error: num / den,
        mean_relative_error: samples.iter().map(|s| s.relative_error).sum::<f64>()
            / samples.len() as f64,
        max_abs_error: samples.iter().map(|s| s.max_abs_error).fold(0.0, f64::max),
        predicted_min: samples
            .iter()
            .map(|s| s.predicted_min)
            .fold(f64::INFINITY, f64::min),
        predicted_max: samples
            .iter()
            .map(|s| s.predicted_max)
            .fold(f64::NEG_INFINITY, f64::max),
        lahm_aggregate_relative_error: (lahm_all && lden > 0.0).then(|| lnum / lden),
        latency: LatencyStats::from_samples(latencies_ms),
        samples,
        error_fields,
    })
}

/// Runs the surrogate on every test pair (timing each inference) and scores
/// it against the simulated temperatures. `grid` supplies the cell size.
pub fn evaluate_test_set(
    model: &SurrogateModel,
    test: &[TrainingPair],
    grid: &Grid,
    lahm: Option<&LahmParams>,
    render_dir: Option<&Path>,
) -> Result<EvalReport> {
    let mut cases = Vec::with_capacity(test.len());
    let mut latencies = Vec::with_capacity(test.len());
    for pair in test {
        if (pair.nx, pair.ny) != (grid.nx, grid.ny) {
            return Err(Error::GridMismatch);
        }
        let (qx, qy, t) = pair.denormalize();
        let velocity = VectorField::new(*grid, qx, qy, "m/s")?;
        let start = Instant::now();
        let predicted = model.infer(&velocity)?;
        latencies.push(start.elapsed().as_secs_f64() * 1e3);
        cases.push(EvalCase {
            source_id: pair.source_id,
            predicted,
            target: ScalarField::new(*grid, t, "degC")?,
            velocity: Some(velocity),
        });
    }
    evaluate_cases(&cases, lahm, render_dir, &latencies)
}
