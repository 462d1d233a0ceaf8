use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{gemm, ConvGeom, Scalar};
use crate::error::{Error, Result};

/// Encoder-decoder layout. Every encoder level halves the resolution with a
/// stride-2 convolution; every decoder level doubles it with a stride-2
/// transposed convolution and (optionally) concatenates the encoder features
/// of the same resolution.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub input_size: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    /// Output channels per encoder level; its length is the depth.
    pub channel_schedule: Vec<usize>,
    pub kernel_size: usize,
    pub skip_connections: bool,
}

impl Default for ModelConfig {
    /// 64×64, two velocity channels in, one temperature channel out, four
    /// levels down to a 4×4 bottleneck; 480 393 parameters.
    fn default() -> Self {
        Self {
            input_size: 64,
            in_channels: 2,
            out_channels: 1,
            channel_schedule: vec![20, 40, 80, 112],
            kernel_size: 4,
            skip_connections: true,
        }
    }
}

impl ModelConfig {
    pub fn levels(&self) -> usize {
        self.channel_schedule.len()
    }

    pub fn base_channels(&self) -> usize {
        self.channel_schedule.first().copied().unwrap_or(0)
    }

    /// Spatial size at the bottom of the encoder.
    pub fn bottleneck_spatial(&self) -> usize {
        self.input_size >> self.levels()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.levels() == 0 || self.channel_schedule.contains(&0) {
            return bad(format!(
                "channel schedule must be non-empty and positive, got {:?}",
                self.channel_schedule
            ));
        }
        if self.in_channels == 0 || self.out_channels == 0 {
            return bad("channel counts must be positive".into());
        }
        if self.kernel_size < 2 || self.kernel_size % 2 != 0 {
            return bad(format!(
                "kernel size must be even and >= 2, got {}",
                self.kernel_size
            ));
        }
        if self.levels() >= usize::BITS as usize || self.input_size % (1 << self.levels()) != 0 {
            return bad(format!(
                "input size {} is not divisible by 2^{}",
                self.input_size,
                self.levels()
            ));
        }
        if self.bottleneck_spatial() <= 1 {
            return bad(format!(
                "bottleneck would be {0}x{0} pixels; reduce the depth or enlarge the input",
                self.bottleneck_spatial()
            ));
        }
        Ok(())
    }

    fn padding(&self) -> usize {
        (self.kernel_size - 2) / 2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LayerKind {
    Conv,
    ConvTranspose,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub name: String,
    pub kind: LayerKind,
    pub in_channels: usize,
    pub out_channels: usize,
    pub relu: bool,
    /// Spatial size of the layer input.
    pub in_size: usize,
    weight: usize,
    bias: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl TensorSpec {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Names, shapes and offsets of all tensors in the flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamLayout {
    pub tensors: Vec<TensorSpec>,
    pub total: usize,
}

impl ParamLayout {
    pub fn get(&self, name: &str) -> Option<&TensorSpec> {
        self.tensors.iter().find(|t| t.name == name)
    }
}

/// Saved activations of one forward pass.
#[derive(Debug, Clone)]
pub struct Tape<T> {
    pub batch: usize,
    /// Layer inputs (for transposed convolutions) or im2col matrices (for
    /// convolutions), in layer order.
    saved: Vec<Vec<T>>,
    /// Post-activation outputs in layer order.
    pub outputs: Vec<Vec<T>>,
}

impl<T> Tape<T> {
    pub fn output(&self) -> &[T] {
        self.outputs.last().map(|v| v.as_slice()).unwrap_or(&[])
    }
}

/// The network structure; parameters live in a separate flat slice.
#[derive(Debug, Clone)]
pub struct UNet {
    pub config: ModelConfig,
    pub layers: Vec<LayerSpec>,
    pub layout: ParamLayout,
}

impl UNet {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let k = config.kernel_size;
        let s = &config.channel_schedule;
        let l = s.len();
        let mut layers = Vec::with_capacity(2 * l);
        let mut tensors = Vec::new();
        let mut offset = 0;
        let mut push = |name: String, kind, cin: usize, cout: usize, relu, in_size| {
            let wshape = match kind {
                LayerKind::Conv => vec![cout, cin, k, k],
                LayerKind::ConvTranspose => vec![cin, cout, k, k],
            };
            let wlen: usize = wshape.iter().product();
            tensors.push(TensorSpec {
                name: format!("{name}.weight"),
                shape: wshape,
                offset,
            });
            tensors.push(TensorSpec {
                name: format!("{name}.bias"),
                shape: vec![cout],
                offset: offset + wlen,
            });
            layers.push(LayerSpec {
                name,
                kind,
                in_channels: cin,
                out_channels: cout,
                relu,
                in_size,
                weight: offset,
                bias: offset + wlen,
            });
            offset += wlen + cout;
        };
        let mut cin = config.in_channels;
        let mut size = config.input_size;
        for (i, &c) in s.iter().enumerate() {
            push(format!("enc{}", i + 1), LayerKind::Conv, cin, c, true, size);
            cin = c;
            size /= 2;
        }
        for i in (0..l).rev() {
            let input = if i == l - 1 {
                s[l - 1]
            } else if config.skip_connections {
                2 * s[i]
            } else {
                s[i]
            };
            let (out, relu) = if i == 0 {
                (config.out_channels, false)
            } else {
                (s[i - 1], true)
            };
            push(
                format!("dec{}", i + 1),
                LayerKind::ConvTranspose,
                input,
                out,
                relu,
                size,
            );
            size *= 2;
        }
        Ok(Self {
            config,
            layers,
            layout: ParamLayout {
                tensors,
                total: offset,
            },
        })
    }

    pub fn param_count(&self) -> usize {
        self.layout.total
    }

    /// Fan-in scaled uniform weights `U(−√(6/fan_in), √(6/fan_in))`, zero
    /// biases. The fan-in of a transposed stride-2 convolution counts the
    /// taps that actually reach one output pixel.
    pub fn init_params<T: Scalar>(&self, seed: u64) -> Vec<T> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = vec![T::ZERO; self.layout.total];
        let k = self.config.kernel_size;
        for layer in &self.layers {
            let fan_in = match layer.kind {
                LayerKind::Conv => layer.in_channels * k * k,
                LayerKind::ConvTranspose => layer.in_channels * k * k / 4,
            };
            let bound = (6.0 / fan_in as f64).sqrt();
            let dist = Uniform::new_inclusive(-bound, bound);
            let n = layer.in_channels * layer.out_channels * k * k;
            for w in &mut p[layer.weight..layer.weight + n] {
                *w = T::from_f64(dist.sample(&mut rng));
            }
        }
        p
    }

    fn geom(&self, layer: &LayerSpec, batch: usize) -> ConvGeom {
        let k = self.config.kernel_size;
        let pad = self.config.padding();
        match layer.kind {
            LayerKind::Conv => ConvGeom::new(
                layer.in_channels,
                batch,
                layer.in_size,
                layer.in_size,
                k,
                2,
                pad,
            ),
            LayerKind::ConvTranspose => ConvGeom::new(
                layer.out_channels,
                batch,
                2 * layer.in_size,
                2 * layer.in_size,
                k,
                2,
                pad,
            ),
        }
    }

    /// Runs one layer; returns (saved tensor, output).
    fn layer_forward<T: Scalar>(
        &self,
        layer: &LayerSpec,
        params: &[T],
        x: Vec<T>,
        batch: usize,
    ) -> (Vec<T>, Vec<T>) {
        let g = self.geom(layer, batch);
        let k2 = g.k * g.k;
        let w = &params[layer.weight..layer.weight + layer.in_channels * layer.out_channels * k2];
        let b = &params[layer.bias..layer.bias + layer.out_channels];
        let (saved, mut y, plane) = match layer.kind {
            LayerKind::Conv => {
                let mut cols = vec![T::ZERO; g.col_rows() * g.col_cols()];
                g.im2col(&x, &mut cols);
                let mut y = vec![T::ZERO; layer.out_channels * g.col_cols()];
                gemm(
                    false,
                    false,
                    layer.out_channels,
                    g.col_cols(),
                    g.col_rows(),
                    w,
                    &cols,
                    T::ZERO,
                    &mut y,
                );
                (cols, y, g.col_cols())
            }
            LayerKind::ConvTranspose => {
                let mut cols = vec![T::ZERO; g.col_rows() * g.col_cols()];
                gemm(
                    true,
                    false,
                    g.col_rows(),
                    g.col_cols(),
                    layer.in_channels,
                    w,
                    &x,
                    T::ZERO,
                    &mut cols,
                );
                let mut y = vec![T::ZERO; layer.out_channels * batch * g.h * g.w];
                g.col2im(&cols, &mut y);
                (x, y, batch * g.h * g.w)
            }
        };
        for (c, chunk) in y.chunks_mut(plane).enumerate() {
            let bc = b[c];
            for v in chunk {
                *v += bc;
                if layer.relu && *v < T::ZERO {
                    *v = T::ZERO;
                }
            }
        }
        (saved, y)
    }

    /// Gradient of one layer. `dy` is the gradient w.r.t. the post-activation
    /// output; returns the gradient w.r.t. the layer input when requested.
    #[allow(clippy::too_many_arguments)]
    fn layer_backward<T: Scalar>(
        &self,
        layer: &LayerSpec,
        params: &[T],
        grads: &mut [T],
        saved: &[T],
        y: &[T],
        mut dy: Vec<T>,
        batch: usize,
        need_input_grad: bool,
    ) -> Option<Vec<T>> {
        if layer.relu {
            for (d, &v) in dy.iter_mut().zip(y) {
                if !(v > T::ZERO) {
                    *d = T::ZERO;
                }
            }
        }
        let g = self.geom(layer, batch);
        let k2 = g.k * g.k;
        let wlen = layer.in_channels * layer.out_channels * k2;
        let w = &params[layer.weight..layer.weight + wlen];
        let plane = dy.len() / layer.out_channels;
        {
            let db = &mut grads[layer.bias..layer.bias + layer.out_channels];
            for (c, chunk) in dy.chunks(plane).enumerate() {
                let mut s = T::ZERO;
                for &v in chunk {
                    s += v;
                }
                db[c] += s;
            }
        }
        let dw = &mut grads[layer.weight..layer.weight + wlen];
        match layer.kind {
            LayerKind::Conv => {
                let (rows, cols) = (g.col_rows(), g.col_cols());
                gemm(
                    false,
                    true,
                    layer.out_channels,
                    rows,
                    cols,
                    &dy,
                    saved,
                    T::from_f64(1.0),
                    dw,
                );
                if !need_input_grad {
                    return None;
                }
                let mut dcols = vec![T::ZERO; rows * cols];
                gemm(
                    true,
                    false,
                    rows,
                    cols,
                    layer.out_channels,
                    w,
                    &dy,
                    T::ZERO,
                    &mut dcols,
                );
                let mut dx = vec![T::ZERO; g.c * batch * g.h * g.w];
                g.col2im(&dcols, &mut dx);
                Some(dx)
            }
            LayerKind::ConvTranspose => {
                let (rows, cols) = (g.col_rows(), g.col_cols());
                let mut dcols = vec![T::ZERO; rows * cols];
                g.im2col(&dy, &mut dcols);
                gemm(
                    false,
                    true,
                    layer.in_channels,
                    rows,
                    cols,
                    saved,
                    &dcols,
                    T::from_f64(1.0),
                    dw,
                );
                if !need_input_grad {
                    return None;
                }
                let mut dx = vec![T::ZERO; layer.in_channels * cols];
                gemm(
                    false,
                    false,
                    layer.in_channels,
                    cols,
                    rows,
                    w,
                    &dcols,
                    T::ZERO,
                    &mut dx,
                );
                Some(dx)
            }
        }
    }

    fn check_input<T>(&self, params: &[T], input: &[T], batch: usize) -> Result<()> {
        if params.len() != self.layout.total {
            return Err(Error::ShapeMismatch {
                expected: format!("{} parameters", self.layout.total),
                got: params.len().to_string(),
            });
        }
        let n = self.config.input_size;
        let expected = self.config.in_channels * batch * n * n;
        if batch == 0 || input.len() != expected {
            return Err(Error::ShapeMismatch {
                expected: format!(
                    "{}x{batch}x{n}x{n} = {expected} values",
                    self.config.in_channels
                ),
                got: input.len().to_string(),
            });
        }
        Ok(())
    }

    /// Forward pass over a `[C][N][H][W]` batch, keeping what backward needs.
    pub fn forward_tape<T: Scalar>(
        &self,
        params: &[T],
        input: &[T],
        batch: usize,
    ) -> Result<Tape<T>> {
        self.check_input(params, input, batch)?;
        let l = self.config.levels();
        let mut saved = Vec::with_capacity(2 * l);
        let mut outputs: Vec<Vec<T>> = Vec::with_capacity(2 * l);
        let mut x = input.to_vec();
        for (idx, layer) in self.layers.iter().enumerate() {
            if idx > l && self.config.skip_connections {
                // decoder input: previous decoder output ++ matching encoder features
                let enc = &outputs[2 * l - idx - 1];
                x.extend_from_slice(enc);
            }
            let (s, y) = self.layer_forward(layer, params, x, batch);
            saved.push(s);
            x = y.clone();
            outputs.push(y);
        }
        Ok(Tape {
            batch,
            saved,
            outputs,
        })
    }

    pub fn forward<T: Scalar>(&self, params: &[T], input: &[T], batch: usize) -> Result<Vec<T>> {
        self.check_input(params, input, batch)?;
        let l = self.config.levels();
        let mut encoder: Vec<Vec<T>> = Vec::with_capacity(l);
        let mut x = input.to_vec();
        for (idx, layer) in self.layers.iter().enumerate() {
            if idx > l && self.config.skip_connections {
                x.extend_from_slice(&encoder[2 * l - idx - 1]);
            }
            let (_, y) = self.layer_forward(layer, params, x, batch);
            if idx < l {
                encoder.push(y.clone());
            }
            x = y;
        }
        Ok(x)
    }

    /// Accumulates into `grads` the gradient of `Σ dout · output` for the
    /// forward pass recorded in `tape`.
    pub fn backward<T: Scalar>(
        &self,
        params: &[T],
        tape: &Tape<T>,
        dout: Vec<T>,
        grads: &mut [T],
    ) -> Result<()> {
        if grads.len() != self.layout.total || dout.len() != tape.output().len() {
            return Err(Error::ShapeMismatch {
                expected: format!(
                    "{} grads / {} outputs",
                    self.layout.total,
                    tape.output().len()
                ),
                got: format!("{} / {}", grads.len(), dout.len()),
            });
        }
        let l = self.config.levels();
        let nl = self.layers.len();
        let batch = tape.batch;
        // gradient w.r.t. encoder outputs collected from skip paths
        let mut enc_grad: Vec<Option<Vec<T>>> = vec![None; l];
        let mut g = dout;
        for idx in (0..nl).rev() {
            let layer = &self.layers[idx];
            let need = idx > 0;
            let dx = self.layer_backward(
                layer,
                params,
                grads,
                &tape.saved[idx],
                &tape.outputs[idx],
                g,
                batch,
                need,
            );
            let Some(mut dx) = dx else { break };
            if idx > l && self.config.skip_connections {
                let e = 2 * l - idx - 1;
                let own = dx.len() - tape.outputs[e].len();
                let skip = dx.split_off(own);
                add_into(&mut enc_grad[e], skip);
            }
            if idx <= l {
                // idx - 1 is an encoder layer: merge the skip gradient
                if let Some(extra) = enc_grad[idx - 1].take() {
                    for (a, b) in dx.iter_mut().zip(extra) {
                        *a += b;
                    }
                }
            }
            g = dx;
        }
        Ok(())
    }
}

fn add_into<T: Scalar>(slot: &mut Option<Vec<T>>, v: Vec<T>) {
    match slot {
        Some(acc) => {
            for (a, b) in acc.iter_mut().zip(v) {
                *a += b;
            }
        }
        None => *slot = Some(v),
    }
}
