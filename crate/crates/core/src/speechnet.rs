//! SpeechNet: a 2-D CNN over a `[N_s, D]` acoustic feature window followed
//! by a leaky-ReLU affine chain and a softmax over `k` cluster labels.
//!
//! The layer stack is data ([`SpeechArch`]) so that the full-size layout and
//! small desk-scale layouts share one implementation.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::{
    leaky_relu_backward, leaky_relu_inplace, maxpool2x2_backward, maxpool2x2_forward,
    maxpool2x2_shape, relu_backward, relu_inplace, softmax, Conv2d, Linear, ParamSet, Shape2d,
    Tensor,
};
use crate::real::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SpeechLayer {
    /// Valid convolution followed by ReLU.
    Conv {
        channels: usize,
        kernel: [usize; 2],
        #[serde(default = "unit_stride")]
        stride: [usize; 2],
    },
    /// 2x2 max pooling, stride 2, floor on odd extents.
    MaxPool,
}

fn unit_stride() -> [usize; 2] {
    [1, 1]
}

impl SpeechLayer {
    pub const fn conv(channels: usize, kh: usize, kw: usize) -> Self {
        SpeechLayer::Conv {
            channels,
            kernel: [kh, kw],
            stride: [1, 1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpeechArch {
    pub layers: Vec<SpeechLayer>,
    /// Hidden widths of the affine chain between flatten and the output layer.
    pub hidden: Vec<usize>,
}

impl SpeechArch {
    /// Full-size layout for `[99, 1024]` inputs. The second 3x3 convolution
    /// steps by 2 along the feature axis, which is what takes the map from
    /// 4x119 to 2x59 before the final pool to 1x29.
    pub fn full() -> Self {
        use SpeechLayer::MaxPool;
        Self {
            layers: vec![
                SpeechLayer::conv(32, 7, 7),
                MaxPool,
                SpeechLayer::conv(64, 7, 7),
                MaxPool,
                SpeechLayer::conv(128, 5, 5),
                SpeechLayer::conv(256, 5, 5),
                MaxPool,
                SpeechLayer::conv(512, 3, 3),
                SpeechLayer::Conv {
                    channels: 512,
                    kernel: [3, 3],
                    stride: [1, 2],
                },
                MaxPool,
            ],
            hidden: vec![1024, 512, 128, 64],
        }
    }

    /// Small layout for low-dimensional features (D >= 10).
    pub fn compact() -> Self {
        use SpeechLayer::MaxPool;
        Self {
            layers: vec![
                SpeechLayer::conv(4, 5, 3),
                MaxPool,
                SpeechLayer::conv(8, 5, 3),
                MaxPool,
            ],
            hidden: vec![32],
        }
    }

    /// Output shape after every layer, starting from a single-channel
    /// `height x width` input.
    pub fn trace(&self, height: usize, width: usize) -> Result<Vec<Shape2d>> {
        let mut shape = Shape2d {
            channels: 1,
            height,
            width,
        };
        let mut shapes = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let next = match *layer {
                SpeechLayer::Conv {
                    channels,
                    kernel,
                    stride,
                } => {
                    if channels == 0 || kernel.contains(&0) || stride.contains(&0) {
                        return Err(Error::Config(format!("layer {i}: degenerate convolution")));
                    }
                    crate::layers::valid_extent(shape.height, kernel[0], stride[0]).and_then(
                        |h| {
                            crate::layers::valid_extent(shape.width, kernel[1], stride[1]).map(
                                |w| Shape2d {
                                    channels,
                                    height: h,
                                    width: w,
                                },
                            )
                        },
                    )
                }
                SpeechLayer::MaxPool => maxpool2x2_shape(shape),
            };
            shape = next.ok_or_else(|| {
                Error::Config(format!(
                    "layer {i} ({layer:?}) does not fit a {}x{} map",
                    shape.height, shape.width
                ))
            })?;
            shapes.push(shape);
        }
        Ok(shapes)
    }

    pub fn flatten_len(&self, height: usize, width: usize) -> Result<usize> {
        Ok(self
            .trace(height, width)?
            .last()
            .map_or(height * width, Shape2d::len))
    }
}

/// Layout selection as written in configuration files.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SpeechArchChoice {
    /// Full-size layout when the input is large enough, compact otherwise.
    #[default]
    Auto,
    Full,
    Compact,
    Custom(SpeechArch),
}

impl SpeechArchChoice {
    pub fn resolve(&self, height: usize, width: usize) -> Result<SpeechArch> {
        let arch = match self {
            SpeechArchChoice::Auto => {
                let full = SpeechArch::full();
                if full.trace(height, width).is_ok() {
                    full
                } else {
                    SpeechArch::compact()
                }
            }
            SpeechArchChoice::Full => SpeechArch::full(),
            SpeechArchChoice::Compact => SpeechArch::compact(),
            SpeechArchChoice::Custom(a) => a.clone(),
        };
        arch.trace(height, width)?;
        Ok(arch)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeechNetConfig {
    /// `N_s`
    pub frames: usize,
    /// `D`
    pub feature_dim: usize,
    pub classes: usize,
    pub arch: SpeechArch,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Stage<F> {
    Conv(Conv2d<F>),
    MaxPool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpeechNet<F> {
    pub config: SpeechNetConfig,
    pub stages: Vec<Stage<F>>,
    /// Hidden layers then the output layer.
    pub fcs: Vec<Linear<F>>,
}

#[derive(Debug, Clone)]
pub struct SpeechCache<F> {
    /// `acts[0]` is the input; `acts[i + 1]` the output of stage `i`.
    acts: Vec<Vec<F>>,
    shapes: Vec<Shape2d>,
    argmax: Vec<Option<Vec<usize>>>,
    /// Input to every affine layer.
    fc_in: Vec<Vec<F>>,
    /// Pre-activation of every hidden affine layer.
    fc_pre: Vec<Vec<F>>,
}

#[derive(Debug, Clone)]
pub struct SpeechOutput<F> {
    pub logits: Vec<F>,
    pub probs: Vec<F>,
    pub cache: SpeechCache<F>,
}

impl<F> SpeechOutput<F> {
    /// Shapes of the feature maps after every convolution/pooling stage.
    pub fn stage_shapes(&self) -> &[Shape2d] {
        &self.cache.shapes[1..]
    }
}

impl<F: Real> SpeechNet<F> {
    pub fn new<R: Rng + ?Sized>(config: SpeechNetConfig, rng: &mut R) -> Result<Self> {
        if config.classes < 1 {
            return Err(Error::Config("SpeechNet needs at least one class".into()));
        }
        let shapes = config.arch.trace(config.frames, config.feature_dim)?;
        let mut in_channels = 1;
        let mut stages = Vec::with_capacity(config.arch.layers.len());
        for layer in &config.arch.layers {
            match *layer {
                SpeechLayer::Conv {
                    channels,
                    kernel,
                    stride,
                } => {
                    stages.push(Stage::Conv(Conv2d::new(
                        in_channels,
                        channels,
                        (kernel[0], kernel[1]),
                        (stride[0], stride[1]),
                        rng,
                    )));
                    in_channels = channels;
                }
                SpeechLayer::MaxPool => stages.push(Stage::MaxPool),
            }
        }
        let mut width = shapes
            .last()
            .map_or(config.frames * config.feature_dim, Shape2d::len);
        let mut fcs = Vec::with_capacity(config.arch.hidden.len() + 1);
        for &h in &config.arch.hidden {
            fcs.push(Linear::new(width, h, rng));
            width = h;
        }
        fcs.push(Linear::new(width, config.classes, rng));
        Ok(Self {
            config,
            stages,
            fcs,
        })
    }

    /// Rebuilds a network from stored `(name, shape, data)` tensors, which
    /// must match the layout `config` describes.
    pub fn from_params(config: SpeechNetConfig, params: &[(String, Vec<usize>, Vec<F>)]) -> Result<Self> {
        let mut net = Self::new(config, &mut rand_chacha::ChaCha8Rng::seed_from_u64(0))?;
        net.assign_tensors(params)?;
        Ok(net)
    }

    pub fn classes(&self) -> usize {
        self.config.classes
    }

    /// Forward pass over a row-major `[N_s, D]` window. SpeechNet has no
    /// dropout, so training and evaluation share this path.
    pub fn forward(&self, window: &[F]) -> Result<SpeechOutput<F>> {
        let expected = self.config.frames * self.config.feature_dim;
        if window.len() != expected {
            return Err(Error::Shape(format!(
                "speech window has {} values, SpeechNet expects {}x{}",
                window.len(),
                self.config.frames,
                self.config.feature_dim
            )));
        }
        let mut shape = Shape2d {
            channels: 1,
            height: self.config.frames,
            width: self.config.feature_dim,
        };
        let mut acts = Vec::with_capacity(self.stages.len() + 1);
        let mut shapes = Vec::with_capacity(self.stages.len() + 1);
        let mut argmax = Vec::with_capacity(self.stages.len());
        acts.push(window.to_vec());
        shapes.push(shape);
        for stage in &self.stages {
            let input = acts.last().expect("input present");
            let (out, out_shape, am) = match stage {
                Stage::Conv(conv) => {
                    let (mut out, s) = conv.forward(input, shape);
                    relu_inplace(&mut out);
                    (out, s, None)
                }
                Stage::MaxPool => {
                    let (out, am, s) = maxpool2x2_forward(input, shape);
                    (out, s, Some(am))
                }
            };
            shape = out_shape;
            acts.push(out);
            shapes.push(shape);
            argmax.push(am);
        }

        let mut x = acts.last().expect("at least the input").clone();
        let mut fc_in = Vec::with_capacity(self.fcs.len());
        let mut fc_pre = Vec::with_capacity(self.fcs.len() - 1);
        let last = self.fcs.len() - 1;
        for (j, fc) in self.fcs.iter().enumerate() {
            let mut y = fc.forward(&x);
            fc_in.push(core::mem::take(&mut x));
            if j < last {
                fc_pre.push(y.clone());
                leaky_relu_inplace(&mut y);
            }
            x = y;
        }
        let probs = softmax(&x);
        Ok(SpeechOutput {
            logits: x,
            probs,
            cache: SpeechCache {
                acts,
                shapes,
                argmax,
                fc_in,
                fc_pre,
            },
        })
    }

    pub fn backward(&self, out: &SpeechOutput<F>, grad_logits: &[F], grads: &mut Self) {
        let cache = &out.cache;
        let mut g = grad_logits.to_vec();
        for j in (0..self.fcs.len()).rev() {
            if j < self.fcs.len() - 1 {
                leaky_relu_backward(&cache.fc_pre[j], &mut g);
            }
            g = self.fcs[j].backward(&cache.fc_in[j], &g, &mut grads.fcs[j]);
        }
        for i in (0..self.stages.len()).rev() {
            let input = &cache.acts[i];
            let in_shape = cache.shapes[i];
            match (&self.stages[i], &mut grads.stages[i]) {
                (Stage::Conv(conv), Stage::Conv(gconv)) => {
                    relu_backward(&cache.acts[i + 1], &mut g);
                    if i == 0 {
                        conv.backward(input, in_shape, &g, gconv, None);
                        g = Vec::new();
                    } else {
                        let mut gi = vec![F::zero(); input.len()];
                        conv.backward(input, in_shape, &g, gconv, Some(&mut gi));
                        g = gi;
                    }
                }
                (Stage::MaxPool, Stage::MaxPool) => {
                    let mut gi = vec![F::zero(); input.len()];
                    let am = cache.argmax[i].as_ref().expect("pool stores argmax");
                    maxpool2x2_backward(&g, am, &mut gi);
                    g = gi;
                }
                _ => unreachable!("gradient holder has a different layout"),
            }
        }
    }

    pub fn cast<G: Real>(&self) -> SpeechNet<G> {
        SpeechNet {
            config: self.config.clone(),
            stages: self
                .stages
                .iter()
                .map(|s| match s {
                    Stage::Conv(c) => Stage::Conv(Conv2d {
                        in_channels: c.in_channels,
                        out_channels: c.out_channels,
                        kernel: c.kernel,
                        stride: c.stride,
                        weight: c.weight.cast(),
                        bias: c.bias.cast(),
                    }),
                    Stage::MaxPool => Stage::MaxPool,
                })
                .collect(),
            fcs: self
                .fcs
                .iter()
                .map(|f| Linear {
                    inputs: f.inputs,
                    outputs: f.outputs,
                    weight: f.weight.cast(),
                    bias: f.bias.cast(),
                })
                .collect(),
        }
    }
}

impl<F: Real> ParamSet<F> for SpeechNet<F> {
    fn tensors(&self) -> Vec<(String, &Tensor<F>)> {
        let mut out = Vec::new();
        for (i, s) in self.stages.iter().enumerate() {
            if let Stage::Conv(c) = s {
                out.push((format!("stage{i}.weight"), &c.weight));
                out.push((format!("stage{i}.bias"), &c.bias));
            }
        }
        for (j, f) in self.fcs.iter().enumerate() {
            out.push((format!("fc{j}.weight"), &f.weight));
            out.push((format!("fc{j}.bias"), &f.bias));
        }
        out
    }

    fn tensors_mut(&mut self) -> Vec<(String, &mut Tensor<F>)> {
        let mut out = Vec::new();
        for (i, s) in self.stages.iter_mut().enumerate() {
            if let Stage::Conv(c) = s {
                out.push((format!("stage{i}.weight"), &mut c.weight));
                out.push((format!("stage{i}.bias"), &mut c.bias));
            }
        }
        for (j, f) in self.fcs.iter_mut().enumerate() {
            out.push((format!("fc{j}.weight"), &mut f.weight));
            out.push((format!("fc{j}.bias"), &mut f.bias));
        }
        out
    }
}
