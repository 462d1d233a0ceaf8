//! The velocity → temperature surrogate: model container, training loop,
//! inference and the `GWNN` model file.
//!
//! Model file layout (little-endian):
//!
//! | bytes     | content                                             |
//! |-----------|-----------------------------------------------------|
//! | 4         | magic `GWNN`                                        |
//! | 2         | format version (`u16`)                              |
//! | 4 + len   | metadata JSON (`u32` length, then UTF-8)            |
//! | 4         | tensor count (`u32`)                                |
//! | per tensor| name (`u16` length + UTF-8), rank (`u8`), dims (`u32` each), `f32` data |

use std::fs;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{
    normalize_velocity, DatasetSplit, NormStats, SplitAssignment, TrainingPair, TEMPERATURE_OFFSET,
};
use crate::error::{Error, Result};
use crate::field::{ScalarField, VectorField};
use crate::nn::{Adam, ModelConfig, UNet};

pub const MODEL_MAGIC: &[u8; 4] = b"GWNN";
pub const MODEL_VERSION: u16 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Emit a checkpoint every this many epochs (0 disables).
    #[serde(default)]
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 4e-4,
            batch_size: 64,
            epochs: 2000,
            seed: 0,
            checkpoint_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidParameter(
                "batch_size must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// What the model was trained on and how it went.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingInfo {
    pub init_seed: u64,
    #[serde(default)]
    pub train_config: Option<TrainConfig>,
    #[serde(default)]
    pub epochs_run: usize,
    #[serde(default)]
    pub best_epoch: usize,
    #[serde(default)]
    pub best_validation_loss: Option<f64>,
    #[serde(default)]
    pub split: Option<SplitAssignment>,
}

#[derive(Debug, Clone)]
pub struct SurrogateModel {
    pub net: UNet,
    pub params: Vec<f32>,
    pub stats: NormStats,
    pub info: TrainingInfo,
}

#[derive(Serialize, Deserialize)]
struct ModelMeta {
    model: ModelConfig,
    norm_stats: NormStats,
    param_count: usize,
    training: TrainingInfo,
}

/// A fresh, deterministically initialized model.
pub fn build_model(config: ModelConfig, stats: NormStats, seed: u64) -> Result<SurrogateModel> {
    stats.validate()?;
    let net = UNet::new(config)?;
    let params = net.init_params(seed);
    Ok(SurrogateModel {
        net,
        params,
        stats,
        info: TrainingInfo {
            init_seed: seed,
            ..Default::default()
        },
    })
}

impl SurrogateModel {
    pub fn config(&self) -> &ModelConfig {
        &self.net.config
    }

    pub fn param_count(&self) -> usize {
        self.net.param_count()
    }

    /// Raw network on normalized `[C][N][H][W]` input.
    pub fn forward_batch(&self, input: &[f32], batch: usize) -> Result<Vec<f32>> {
        self.net.forward(&self.params, input, batch)
    }

    /// Raw network on one normalized `[C][H][W]` input.
    pub fn forward(&self, input: &[f32]) -> Result<Vec<f32>> {
        self.forward_batch(input, 1)
    }

    /// Normalized temperature offset for a normalized pair input.
    pub fn predict_normalized(&self, input: &[f64]) -> Result<Vec<f64>> {
        let x: Vec<f32> = input.iter().map(|&v| v as f32).collect();
        Ok(self.forward(&x)?.into_iter().map(f64::from).collect())
    }

    /// Temperature (°C) from a raw Darcy velocity field.
    pub fn infer(&self, velocity: &VectorField) -> Result<ScalarField> {
        let g = velocity.grid();
        let n = self.config().input_size;
        if (g.nx, g.ny) != (n, n) {
            return Err(Error::ShapeMismatch {
                expected: format!("{n}x{n} grid"),
                got: format!("{}x{}", g.nx, g.ny),
            });
        }
        let out = self.predict_normalized(&normalize_velocity(velocity, &self.stats))?;
        let t = out
            .into_iter()
            .map(|v| self.stats.t.denormalize(v) + TEMPERATURE_OFFSET)
            .collect();
        ScalarField::new(*g, t, "degC")
    }

    /// Temperature (°C) for a stored pair.
    pub fn infer_pair(&self, pair: &TrainingPair) -> Result<Vec<f64>> {
        let out = self.predict_normalized(&pair.input)?;
        Ok(out
            .into_iter()
            .map(|v| pair.stats.t.denormalize(v) + TEMPERATURE_OFFSET)
            .collect())
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let meta = ModelMeta {
            model: self.net.config.clone(),
            norm_stats: self.stats,
            param_count: self.param_count(),
            training: self.info.clone(),
        };
        let blob = serde_json::to_vec(&meta)?;
        let mut out = Vec::with_capacity(blob.len() + 4 * self.params.len() + 1024);
        out.extend_from_slice(MODEL_MAGIC);
        out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
        out.extend_from_slice(&(blob.len() as u32).to_le_bytes());
        out.extend_from_slice(&blob);
        let tensors = &self.net.layout.tensors;
        out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
        for t in tensors {
            out.extend_from_slice(&(t.name.len() as u16).to_le_bytes());
            out.extend_from_slice(t.name.as_bytes());
            out.push(t.shape.len() as u8);
            for &d in &t.shape {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for v in &self.params[t.offset..t.offset + t.len()] {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MODEL_MAGIC {
            return Err(Error::Corrupt("bad model magic".into()));
        }
        let version = r.u16()?;
        if version != MODEL_VERSION {
            return Err(Error::Version {
                found: version,
                expected: MODEL_VERSION,
            });
        }
        let blob_len = r.u32()? as usize;
        let meta: ModelMeta = serde_json::from_slice(r.take(blob_len)?)
            .map_err(|e| Error::Corrupt(format!("model metadata: {e}")))?;
        let net = UNet::new(meta.model)?;
        if net.param_count() != meta.param_count {
            return Err(Error::Corrupt(format!(
                "metadata declares {} parameters, architecture has {}",
                meta.param_count,
                net.param_count()
            )));
        }
        let count = r.u32()? as usize;
        if count != net.layout.tensors.len() {
            return Err(Error::Corrupt(format!(
                "expected {} tensors, found {count}",
                net.layout.tensors.len()
            )));
        }
        let mut params = vec![0.0f32; net.param_count()];
        let mut filled = vec![false; count];
        for _ in 0..count {
            let name_len = r.u16()? as usize;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|_| Error::Corrupt("tensor name".into()))?;
            let rank = r.take(1)?[0] as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(r.u32()? as usize);
            }
            let idx = net
                .layout
                .tensors
                .iter()
                .position(|t| t.name == name)
                .ok_or_else(|| Error::Corrupt(format!("unknown tensor {name:?}")))?;
            let spec = &net.layout.tensors[idx];
            if spec.shape != shape || filled[idx] {
                return Err(Error::Corrupt(format!(
                    "tensor {name:?} has shape {shape:?}, expected {:?}",
                    spec.shape
                )));
            }
            let data = r.take(4 * spec.len())?;
            for (dst, c) in params[spec.offset..spec.offset + spec.len()]
                .iter_mut()
                .zip(data.chunks_exact(4))
            {
                *dst = f32::from_le_bytes([c[0], c[1], c[2], c[3]]);
            }
            filled[idx] = true;
        }
        if r.pos != bytes.len() {
            return Err(Error::Corrupt(format!(
                "{} trailing bytes after model",
                bytes.len() - r.pos
            )));
        }
        meta.norm_stats.validate()?;
        Ok(Self {
            net,
            params,
            stats: meta.norm_stats,
            info: meta.training,
        })
    }

    /// SHA-256 of the encoded model, hex.
    pub fn fingerprint(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(self.encode()?)))
    }

    /// Short identifier derived from the fingerprint.
    pub fn version_tag(&self) -> Result<String> {
        Ok(format!(
            "gwnn{}-{}",
            MODEL_VERSION,
            &self.fingerprint()?[..12]
        ))
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Corrupt(format!(
                "model file truncated at byte {}",
                self.bytes.len()
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        let b = self.take(2)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

pub fn save_model(model: &SurrogateModel, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, model.encode()?)?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<SurrogateModel> {
    SurrogateModel::decode(&fs::read(path)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    /// `None` when the split has no validation pairs.
    pub validation_loss: Option<f64>,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    /// Validation loss of the untrained model.
    pub initial_validation_loss: Option<f64>,
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_loss: f64,
}

pub enum TrainEvent<'a> {
    Epoch(&'a EpochRecord),
    /// Current (not best) weights after `epoch`.
    Checkpoint {
        epoch: usize,
        model: &'a SurrogateModel,
    },
}

/// Packs pairs into a `[C][N][H][W]` input batch and `[N][H][W]` target.
fn pack(pairs: &[&TrainingPair], channels: usize) -> (Vec<f32>, Vec<f32>) {
    let n = pairs.len();
    let hw = pairs[0].len();
    let mut x = vec![0.0f32; channels * n * hw];
    let mut t = Vec::with_capacity(n * hw);
    for (b, p) in pairs.iter().enumerate() {
        for c in 0..channels {
            let dst = &mut x[(c * n + b) * hw..][..hw];
            for (d, &s) in dst.iter_mut().zip(&p.input[c * hw..(c + 1) * hw]) {
                *d = s as f32;
            }
        }
        t.extend(p.target.iter().map(|&v| v as f32));
    }
    (x, t)
}

fn check_pairs(model: &SurrogateModel, pairs: &[TrainingPair]) -> Result<()> {
    let cfg = model.config();
    let n = cfg.input_size;
    for p in pairs {
        if p.nx != n
            || p.ny != n
            || p.input.len() != cfg.in_channels * n * n
            || p.target.len() != n * n
        {
            return Err(Error::ShapeMismatch {
                expected: format!("{}x{n}x{n} pairs", cfg.in_channels),
                got: format!("{}x{}", p.nx, p.ny),
            });
        }
    }
    Ok(())
}

/// Mean squared error of the model over `pairs` (normalized units).
pub fn evaluate_loss(
    model: &SurrogateModel,
    pairs: &[TrainingPair],
    batch_size: usize,
) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::InsufficientData("no pairs to evaluate".into()));
    }
    check_pairs(model, pairs)?;
    let refs: Vec<&TrainingPair> = pairs.iter().collect();
    let mut sum = 0.0f64;
    let mut count = 0usize;
    for chunk in refs.chunks(batch_size.max(1)) {
        let (x, t) = pack(chunk, model.config().in_channels);
        let y = model.forward_batch(&x, chunk.len())?;
        sum += y
            .iter()
            .zip(&t)
            .map(|(a, b)| ((a - b) as f64).powi(2))
            .sum::<f64>();
        count += t.len();
    }
    Ok(sum / count as f64)
}

/// Adam on the mean squared error over shuffled mini-batches. The returned
/// model carries the weights of the epoch with the lowest validation loss
/// (training loss when there is no validation set).
pub fn train(
    mut model: SurrogateModel,
    split: &DatasetSplit,
    tc: &TrainConfig,
    mut on_event: impl FnMut(TrainEvent<'_>) -> Result<()>,
) -> Result<(SurrogateModel, TrainHistory)> {
    tc.validate()?;
    if split.train.is_empty() {
        return Err(Error::InsufficientData("training split is empty".into()));
    }
    check_pairs(&model, &split.train)?;
    model.stats = split.stats;
    let channels = model.config().in_channels;
    let mut rng = ChaCha8Rng::seed_from_u64(tc.seed);
    let mut opt = Adam::new(model.param_count(), tc.learning_rate);
    let mut grads = vec![0.0f32; model.param_count()];
    let has_val = !split.validation.is_empty();

    let mut history = TrainHistory {
        initial_validation_loss: if has_val {
            Some(evaluate_loss(&model, &split.validation, tc.batch_size)?)
        } else {
            None
        },
        ..Default::default()
    };
    let mut best = (f64::INFINITY, 0usize, model.params.clone());
    if let Some(v) = history.initial_validation_loss {
        best.0 = v;
    }

    let mut order: Vec<usize> = (0..split.train.len()).collect();
    for epoch in 1..=tc.epochs {
        let start = Instant::now();
        order.shuffle(&mut rng);
        let mut sum = 0.0f64;
        let mut count = 0usize;
        for (batch_id, idx) in order.chunks(tc.batch_size).enumerate() {
            let pairs: Vec<&TrainingPair> = idx.iter().map(|&i| &split.train[i]).collect();
            let (x, t) = pack(&pairs, channels);
            let tape = model.net.forward_tape(&model.params, &x, pairs.len())?;
            let y = tape.output();
            let scale = 2.0 / t.len() as f32;
            let mut batch_loss = 0.0f64;
            let dout: Vec<f32> = y
                .iter()
                .zip(&t)
                .map(|(a, b)| {
                    let d = a - b;
                    batch_loss += (d as f64) * (d as f64);
                    scale * d
                })
                .collect();
            if !batch_loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: batch_id,
                    learning_rate: tc.learning_rate,
                });
            }
            sum += batch_loss;
            count += t.len();
            grads.fill(0.0);
            model.net.backward(&model.params, &tape, dout, &mut grads)?;
            opt.update(&mut model.params, &grads);
        }
        let train_loss = sum / count as f64;
        let validation_loss = if has_val {
            Some(evaluate_loss(&model, &split.validation, tc.batch_size)?)
        } else {
            None
        };
        let score = validation_loss.unwrap_or(train_loss);
        if !score.is_finite() {
            return Err(Error::NonFiniteLoss {
                epoch,
                batch: usize::MAX,
                learning_rate: tc.learning_rate,
            });
        }
        if score < best.0 {
            best = (score, epoch, model.params.clone());
        }
        let record = EpochRecord {
            epoch,
            train_loss,
            validation_loss,
            seconds: start.elapsed().as_secs_f64(),
        };
        history.epochs.push(record);
        on_event(TrainEvent::Epoch(&record))?;
        if tc.checkpoint_every > 0 && epoch % tc.checkpoint_every == 0 {
            on_event(TrainEvent::Checkpoint {
                epoch,
                model: &model,
            })?;
        }
    }

    history.best_epoch = best.1;
    history.best_loss = best.0;
    model.params = best.2;
    model.info.train_config = Some(*tc);
    model.info.epochs_run = tc.epochs;
    model.info.best_epoch = best.1;
    model.info.best_validation_loss = if has_val { Some(best.0) } else { None };
    model.info.split = Some(split.assignment.clone());
    Ok((model, history))
}
