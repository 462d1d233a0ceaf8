//! Training data: normalization, quarter-turn augmentation, splits and the
//! on-disk sample layout.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::container::FieldContainer;
use crate::error::{Error, Result};
use crate::field::{Grid, ScalarField, VectorField};
use crate::geogen::{derive_seed, random_geology, GradientRange};
use crate::sim::{run_scenario, RunReport, Sample, ScenarioSpec, SimParams, TransportConfig};

/// Temperature subtracted before normalization (°C).
pub const TEMPERATURE_OFFSET: f64 = 10.0;

pub const SAMPLE_CHANNELS: [&str; 5] = ["permeability", "pressure", "qx", "qy", "temperature"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub center: f64,
    pub scale: f64,
}

impl ChannelStats {
    pub fn from_range(min: f64, max: f64) -> Self {
        let scale = (max - min) / 2.0;
        Self {
            center: (max + min) / 2.0,
            scale: if scale > 0.0 { scale } else { 1.0 },
        }
    }

    #[inline]
    pub fn normalize(&self, v: f64) -> f64 {
        (v - self.center) / self.scale
    }

    #[inline]
    pub fn denormalize(&self, v: f64) -> f64 {
        v * self.scale + self.center
    }
}

/// Per-channel min/max normalization of `(qx, qy, T − 10 °C)` onto `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub qx: ChannelStats,
    pub qy: ChannelStats,
    pub t: ChannelStats,
}

impl NormStats {
    /// Quarter turns map normalized pairs onto normalized pairs exactly when
    /// both velocity channels share a zero-centered scale.
    pub fn is_rotation_closed(&self) -> bool {
        self.qx == self.qy && self.qx.center == 0.0
    }

    pub fn validate(&self) -> Result<()> {
        for c in [self.qx, self.qy, self.t] {
            if !(c.center.is_finite() && c.scale.is_finite() && c.scale > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "invalid normalization {c:?}"
                )));
            }
        }
        Ok(())
    }
}

fn extrema(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        (lo.min(v), hi.max(v))
    })
}

pub fn fit_norm_stats(samples: &[Sample]) -> Result<NormStats> {
    if samples.is_empty() {
        return Err(Error::InsufficientData(
            "cannot fit normalization on zero samples".into(),
        ));
    }
    let (xl, xh) = extrema(samples.iter().flat_map(|s| s.velocity.x().iter().copied()));
    let (yl, yh) = extrema(samples.iter().flat_map(|s| s.velocity.y().iter().copied()));
    let (tl, th) = extrema(samples.iter().flat_map(|s| {
        s.temperature
            .values()
            .iter()
            .map(|t| t - TEMPERATURE_OFFSET)
    }));
    Ok(NormStats {
        qx: ChannelStats::from_range(xl, xh),
        qy: ChannelStats::from_range(yl, yh),
        t: ChannelStats::from_range(tl, th),
    })
}

/// Statistics fitted over the quarter-turn orbit of `samples`: both velocity
/// channels get the symmetric range `[-m, m]` with `m` the largest velocity
/// component magnitude, so rotated pairs stay exactly normalized.
pub fn fit_norm_stats_rotation_closed(samples: &[Sample]) -> Result<NormStats> {
    let base = fit_norm_stats(samples)?;
    let m = samples
        .iter()
        .flat_map(|s| s.velocity.x().iter().chain(s.velocity.y()))
        .fold(0.0_f64, |m, v| m.max(v.abs()));
    let q = ChannelStats::from_range(-m, m);
    Ok(NormStats {
        qx: q,
        qy: q,
        t: base.t,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingPair {
    pub nx: usize,
    pub ny: usize,
    /// Normalized `qx` then `qy`, each `nx * ny` row-major.
    pub input: Vec<f64>,
    /// Normalized temperature offset.
    pub target: Vec<f64>,
    pub source_id: u64,
    /// Rotation in degrees (multiple of 90).
    pub rotation: u16,
    /// Some normalized value lies outside `[-1, 1]`.
    pub out_of_range: bool,
    pub stats: NormStats,
}

impl TrainingPair {
    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn qx(&self) -> &[f64] {
        &self.input[..self.len()]
    }

    pub fn qy(&self) -> &[f64] {
        &self.input[self.len()..]
    }

    fn flag_range(&mut self) {
        self.out_of_range = self.input.iter().chain(&self.target).any(|v| v.abs() > 1.0);
    }

    /// Raw `(qx, qy, T)` with T in °C.
    pub fn denormalize(&self) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let s = &self.stats;
        (
            self.qx().iter().map(|&v| s.qx.denormalize(v)).collect(),
            self.qy().iter().map(|&v| s.qy.denormalize(v)).collect(),
            self.target
                .iter()
                .map(|&v| s.t.denormalize(v) + TEMPERATURE_OFFSET)
                .collect(),
        )
    }

    /// Normalized channels `qx`, `qy`, `temperature` as a field container.
    pub fn to_container(&self) -> Result<FieldContainer> {
        FieldContainer::new(self.nx, self.ny)?
            .with("qx", self.qx())?
            .with("qy", self.qy())?
            .with("temperature", &self.target)
    }
}

fn normalize_channels(
    qx: &[f64],
    qy: &[f64],
    t: &[f64],
    stats: &NormStats,
) -> (Vec<f64>, Vec<f64>) {
    let mut input = Vec::with_capacity(2 * qx.len());
    input.extend(qx.iter().map(|&v| stats.qx.normalize(v)));
    input.extend(qy.iter().map(|&v| stats.qy.normalize(v)));
    let target = t
        .iter()
        .map(|&v| stats.t.normalize(v - TEMPERATURE_OFFSET))
        .collect();
    (input, target)
}

/// Normalized input for a raw velocity field.
pub fn normalize_velocity(velocity: &VectorField, stats: &NormStats) -> Vec<f64> {
    let mut input = Vec::with_capacity(2 * velocity.x().len());
    input.extend(velocity.x().iter().map(|&v| stats.qx.normalize(v)));
    input.extend(velocity.y().iter().map(|&v| stats.qy.normalize(v)));
    input
}

pub fn preprocess(sample: &Sample, stats: &NormStats) -> TrainingPair {
    let g = sample.temperature.grid();
    let (input, target) = normalize_channels(
        sample.velocity.x(),
        sample.velocity.y(),
        sample.temperature.values(),
        stats,
    );
    let mut pair = TrainingPair {
        nx: g.nx,
        ny: g.ny,
        input,
        target,
        source_id: sample.spec.geology.seed,
        rotation: 0,
        out_of_range: false,
        stats: *stats,
    };
    pair.flag_range();
    pair
}

/// Rotates an `n x n` row-major image counter-clockwise by 90°.
pub fn rotate_quarter(src: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; src.len()];
    for j in 0..n {
        for i in 0..n {
            out[i * n + (n - 1 - j)] = src[j * n + i];
        }
    }
    out
}

fn rotate_vectors_once(qx: &[f64], qy: &[f64], n: usize) -> (Vec<f64>, Vec<f64>) {
    let nqx: Vec<f64> = qy.iter().map(|v| -v).collect();
    (rotate_quarter(&nqx, n), rotate_quarter(qx, n))
}

/// Rotates a pair counter-clockwise by `quarter_turns` × 90°. Velocity
/// components co-rotate (`qx' = −qy`, `qy' = qx` per turn).
pub fn augment_rotate(pair: &TrainingPair, quarter_turns: u32) -> Result<TrainingPair> {
    if pair.nx != pair.ny {
        return Err(Error::InvalidGrid(format!(
            "rotation needs a square grid, got {}x{}",
            pair.nx, pair.ny
        )));
    }
    if quarter_turns > 3 {
        return Err(Error::InvalidParameter(format!(
            "quarter_turns must be in 0..=3, got {quarter_turns}"
        )));
    }
    let n = pair.nx;
    let mut out = pair.clone();
    if quarter_turns == 0 {
        return Ok(out);
    }
    let exact = pair.stats.is_rotation_closed();
    let (mut qx, mut qy, t) = if exact {
        (pair.qx().to_vec(), pair.qy().to_vec(), pair.target.clone())
    } else {
        pair.denormalize()
    };
    let mut t = t;
    for _ in 0..quarter_turns {
        (qx, qy) = rotate_vectors_once(&qx, &qy, n);
        t = rotate_quarter(&t, n);
    }
    if exact {
        out.input = [qx, qy].concat();
        out.target = t;
    } else {
        (out.input, out.target) = normalize_channels(&qx, &qy, &t, &pair.stats);
    }
    out.rotation = ((pair.rotation as u32 + 90 * quarter_turns) % 360) as u16;
    out.flag_range();
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitConfig {
    pub seed: u64,
    /// Fraction of the non-test sources whose pairs go to validation.
    pub val_fraction: f64,
    pub test_count: usize,
    /// Extra rotated copies per non-test source (distinct turns, at most 3).
    pub augment_per_sample: usize,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            val_fraction: 192.0 / 959.0,
            test_count: 40,
            augment_per_sample: 3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DatasetSplit {
    pub train: Vec<TrainingPair>,
    pub validation: Vec<TrainingPair>,
    pub test: Vec<TrainingPair>,
    pub stats: NormStats,
    pub assignment: SplitAssignment,
}

/// Which source went where.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub seed: u64,
    pub train_sources: Vec<u64>,
    pub validation_sources: Vec<u64>,
    pub test_sources: Vec<u64>,
}

/// Holds out `test_count` sources, fits rotation-closed statistics on the
/// training sources, augments every non-test source with distinct random
/// quarter turns and assigns whole source groups to validation.
pub fn build_splits(samples: &[Sample], cfg: &SplitConfig) -> Result<DatasetSplit> {
    if cfg.test_count >= samples.len() {
        return Err(Error::InsufficientData(format!(
            "test_count {} needs more than {} samples",
            cfg.test_count,
            samples.len()
        )));
    }
    if cfg.augment_per_sample > 3 {
        return Err(Error::InvalidParameter(format!(
            "augment_per_sample must be at most 3 distinct quarter turns, got {}",
            cfg.augment_per_sample
        )));
    }
    if !(0.0..1.0).contains(&cfg.val_fraction) {
        return Err(Error::InvalidParameter(format!(
            "val_fraction must be in [0, 1), got {}",
            cfg.val_fraction
        )));
    }
    let mut seen = HashSet::new();
    for s in samples {
        if !seen.insert(s.spec.geology.seed) {
            return Err(Error::InvalidParameter(format!(
                "duplicate source id {}",
                s.spec.geology.seed
            )));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.shuffle(&mut rng);
    let (test_idx, rest) = order.split_at(cfg.test_count);
    let n_val = (cfg.val_fraction * rest.len() as f64).round() as usize;
    let (val_idx, train_idx) = rest.split_at(n_val.min(rest.len() - 1));

    let train_samples: Vec<Sample> = train_idx.iter().map(|&i| samples[i].clone()).collect();
    let stats = fit_norm_stats_rotation_closed(&train_samples)?;

    let augmented = |idx: &[usize], rng: &mut ChaCha8Rng| -> Result<Vec<TrainingPair>> {
        let mut out = Vec::with_capacity(idx.len() * (1 + cfg.augment_per_sample));
        for &i in idx {
            let base = preprocess(&samples[i], &stats);
            let mut turns = [1u32, 2, 3];
            turns.shuffle(rng);
            for &k in &turns[..cfg.augment_per_sample] {
                out.push(augment_rotate(&base, k)?);
            }
            out.insert(out.len() - cfg.augment_per_sample, base);
        }
        Ok(out)
    };
    let train = augmented(train_idx, &mut rng)?;
    let validation = augmented(val_idx, &mut rng)?;
    let test = test_idx
        .iter()
        .map(|&i| preprocess(&samples[i], &stats))
        .collect();
    let ids = |idx: &[usize]| idx.iter().map(|&i| samples[i].spec.geology.seed).collect();
    Ok(DatasetSplit {
        train,
        validation,
        test,
        stats,
        assignment: SplitAssignment {
            seed: cfg.seed,
            train_sources: ids(train_idx),
            validation_sources: ids(val_idx),
            test_sources: ids(test_idx),
        },
    })
}

/// Sidecar metadata stored next to each sample container.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleMeta {
    pub index: u64,
    pub spec: ScenarioSpec,
    pub report: RunReport,
}

pub fn sample_container(sample: &Sample) -> Result<FieldContainer> {
    let g = sample.spec.grid;
    FieldContainer::new(g.nx, g.ny)?
        .with("permeability", sample.permeability.values())?
        .with("pressure", sample.pressure.values())?
        .with("qx", sample.velocity.x())?
        .with("qy", sample.velocity.y())?
        .with("temperature", sample.temperature.values())
}

pub fn sample_stem(index: u64) -> String {
    format!("sample_{index:05}")
}

/// Writes `<stem>.gwhp` and `<stem>.json` into `dir`; returns the container path.
pub fn write_sample(dir: &Path, index: u64, sample: &Sample) -> Result<PathBuf> {
    let stem = sample_stem(index);
    let path = dir.join(format!("{stem}.gwhp"));
    sample_container(sample)?.write(&path)?;
    let meta = SampleMeta {
        index,
        spec: sample.spec.clone(),
        report: sample.report,
    };
    fs::write(
        dir.join(format!("{stem}.json")),
        serde_json::to_vec_pretty(&meta)?,
    )?;
    Ok(path)
}

/// Reads a sample container and its sidecar. Values come back rounded to f32.
pub fn read_sample(path: &Path) -> Result<(SampleMeta, Sample)> {
    let meta: SampleMeta = serde_json::from_slice(&fs::read(path.with_extension("json"))?)?;
    let c = FieldContainer::read(path)?;
    let g: Grid = meta.spec.grid;
    if (c.nx, c.ny) != (g.nx, g.ny) {
        return Err(Error::Corrupt(format!(
            "{}: container is {}x{} but sidecar grid is {}x{}",
            path.display(),
            c.nx,
            c.ny,
            g.nx,
            g.ny
        )));
    }
    let sample = Sample {
        spec: meta.spec.clone(),
        permeability: ScalarField::new(g, c.channel_f64("permeability")?, "m^2/(Pa s)")?,
        pressure: ScalarField::new(g, c.channel_f64("pressure")?, "Pa")?,
        velocity: VectorField::new(g, c.channel_f64("qx")?, c.channel_f64("qy")?, "m/s")?,
        temperature: ScalarField::new(g, c.channel_f64("temperature")?, "degC")?,
        report: meta.report,
    };
    Ok((meta, sample))
}

/// All `*.gwhp` samples in `dir`, sorted by file name.
pub fn load_samples(dir: &Path) -> Result<Vec<Sample>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "gwhp") && p.with_extension("json").exists())
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::InsufficientData(format!(
            "no samples in {}",
            dir.display()
        )));
    }
    paths
        .iter()
        .map(|p| read_sample(p).map(|(_, s)| s))
        .collect()
}

/// Scenario `index` of a dataset generated from `seed`: random geology with
/// the well at the domain center.
pub fn scenario_for_index(
    seed: u64,
    index: u64,
    grid: &Grid,
    range: &GradientRange,
) -> Result<ScenarioSpec> {
    let geology = random_geology(derive_seed(seed, index), range)?;
    Ok(ScenarioSpec::new(*grid, geology))
}

/// Runs scenarios `0..count` on `workers` threads. Results are in index order
/// and do not depend on the worker count.
pub fn generate_samples(
    count: usize,
    seed: u64,
    grid: &Grid,
    range: &GradientRange,
    params: &SimParams,
    config: &TransportConfig,
    workers: usize,
) -> Result<Vec<Result<Sample>>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
    Ok(pool.install(|| {
        (0..count as u64)
            .into_par_iter()
            .map(|i| run_scenario(&scenario_for_index(seed, i, grid, range)?, params, config))
            .collect()
    }))
}
