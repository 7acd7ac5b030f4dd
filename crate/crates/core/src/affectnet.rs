//! AffectNet: three 1-D convolutions (32, 16, 8 channels, kernel 3, valid
//! padding) over an affect contour, global average pooling to an
//! 8-dimensional latent, and an affine head to `k` class probabilities.
//!
//! Dropout follows the first two convolutions. There is no decoder: the
//! encoder is trained only through the classification head.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::{relu_backward, relu_inplace, softmax, Conv1d, Linear, ParamSet, Tensor};
use crate::real::Real;

pub const LATENT_DIM: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffectNetConfig {
    /// Contour length `N_a`.
    pub contour_len: usize,
    pub channels: [usize; 3],
    pub kernel: usize,
    pub classes: usize,
    pub dropout: f64,
}

impl AffectNetConfig {
    pub fn new(contour_len: usize, classes: usize) -> Self {
        Self {
            contour_len,
            channels: [32, 16, LATENT_DIM],
            kernel: 3,
            classes,
            dropout: 0.25,
        }
    }

    pub fn latent_dim(&self) -> usize {
        self.channels[2]
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes < 1 {
            return Err(Error::Config("AffectNet needs at least one class".into()));
        }
        if self.kernel == 0 || self.contour_len < 3 * (self.kernel - 1) + 1 {
            return Err(Error::Config(format!(
                "contour length {} is too short for three kernel-{} convolutions",
                self.contour_len, self.kernel
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout rate {} not in [0, 1)", self.dropout)));
        }
        if self.channels.contains(&0) {
            return Err(Error::Config("channel counts must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AffectNet<F> {
    pub config: AffectNetConfig,
    pub conv1: Conv1d<F>,
    pub conv2: Conv1d<F>,
    pub conv3: Conv1d<F>,
    pub head: Linear<F>,
}

/// Intermediate activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct AffectCache<F> {
    input: Vec<F>,
    h1: Vec<F>,
    mask1: Option<Vec<F>>,
    h2: Vec<F>,
    mask2: Option<Vec<F>>,
    h3: Vec<F>,
}

#[derive(Debug, Clone)]
pub struct AffectOutput<F> {
    pub logits: Vec<F>,
    pub probs: Vec<F>,
    pub latent: Vec<F>,
    pub cache: AffectCache<F>,
}

impl<F: Real> AffectNet<F> {
    pub fn new<R: Rng + ?Sized>(config: AffectNetConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let [c1, c2, c3] = config.channels;
        let k = config.kernel;
        Ok(Self {
            conv1: Conv1d::new(1, c1, k, rng),
            conv2: Conv1d::new(c1, c2, k, rng),
            conv3: Conv1d::new(c2, c3, k, rng),
            head: Linear::new(c3, config.classes, rng),
            config,
        })
    }

    /// Rebuilds a network from stored `(name, shape, data)` tensors, which
    /// must match the layout `config` describes.
    pub fn from_params(config: AffectNetConfig, params: &[(String, Vec<usize>, Vec<F>)]) -> Result<Self> {
        let mut net = Self::new(config, &mut rand_chacha::ChaCha8Rng::seed_from_u64(0))?;
        net.assign_tensors(params)?;
        Ok(net)
    }

    pub fn classes(&self) -> usize {
        self.config.classes
    }

    fn lengths(&self) -> [usize; 3] {
        let l1 = self.conv1.output_len(self.config.contour_len);
        let l2 = self.conv2.output_len(l1);
        [l1, l2, self.conv3.output_len(l2)]
    }

    /// Forward pass. Dropout is applied only when `dropout_rng` is given
    /// (training mode); evaluation mode is a pure function of the inputs.
    pub fn forward(
        &self,
        contour: &[F],
        mut dropout_rng: Option<&mut (dyn RngCore + 'static)>,
    ) -> Result<AffectOutput<F>> {
        if contour.len() != self.config.contour_len {
            return Err(Error::Shape(format!(
                "contour has {} samples, AffectNet expects {}",
                contour.len(),
                self.config.contour_len
            )));
        }
        let [l1, l2, l3] = self.lengths();
        let rate = self.config.dropout;

        let mut h1 = self.conv1.forward(contour, contour.len());
        relu_inplace(&mut h1);
        let mask1 = dropout_rng.as_deref_mut().map(|r| apply_dropout(&mut h1, rate, r));

        let mut h2 = self.conv2.forward(&h1, l1);
        relu_inplace(&mut h2);
        let mask2 = dropout_rng.map(|r| apply_dropout(&mut h2, rate, r));

        let mut h3 = self.conv3.forward(&h2, l2);
        relu_inplace(&mut h3);
        let scale = F::of(1.0 / l3 as f64);
        let latent: Vec<F> = h3
            .chunks_exact(l3)
            .map(|c| c.iter().copied().sum::<F>() * scale)
            .collect();

        let logits = self.head.forward(&latent);
        let probs = softmax(&logits);
        Ok(AffectOutput {
            logits,
            probs,
            latent,
            cache: AffectCache {
                input: contour.to_vec(),
                h1,
                mask1,
                h2,
                mask2,
                h3,
            },
        })
    }

    /// Evaluation-mode latent only.
    pub fn encode(&self, contour: &[F]) -> Result<Vec<F>> {
        Ok(self.forward(contour, None)?.latent)
    }

    /// Backpropagates `grad_logits` (d loss / d logits) and accumulates
    /// parameter gradients into `grads`.
    pub fn backward(&self, out: &AffectOutput<F>, grad_logits: &[F], grads: &mut Self) {
        let [l1, l2, l3] = self.lengths();
        let cache = &out.cache;
        let g_latent = self.head.backward(&out.latent, grad_logits, &mut grads.head);

        let scale = F::of(1.0 / l3 as f64);
        let mut g3: Vec<F> = g_latent
            .iter()
            .flat_map(|&g| core::iter::repeat_n(g * scale, l3))
            .collect();
        relu_backward(&cache.h3, &mut g3);

        let mut g2 = vec![F::zero(); cache.h2.len()];
        self.conv3
            .backward(&cache.h2, l2, &g3, &mut grads.conv3, Some(&mut g2));
        if let Some(m) = &cache.mask2 {
            g2.iter_mut().zip(m).for_each(|(g, &m)| *g = *g * m);
        }
        relu_backward(&cache.h2, &mut g2);

        let mut g1 = vec![F::zero(); cache.h1.len()];
        self.conv2
            .backward(&cache.h1, l1, &g2, &mut grads.conv2, Some(&mut g1));
        if let Some(m) = &cache.mask1 {
            g1.iter_mut().zip(m).for_each(|(g, &m)| *g = *g * m);
        }
        relu_backward(&cache.h1, &mut g1);

        self.conv1.backward(
            &cache.input,
            self.config.contour_len,
            &g1,
            &mut grads.conv1,
            None,
        );
    }

    pub fn cast<G: Real>(&self) -> AffectNet<G> {
        AffectNet {
            config: self.config.clone(),
            conv1: cast_conv1d(&self.conv1),
            conv2: cast_conv1d(&self.conv2),
            conv3: cast_conv1d(&self.conv3),
            head: Linear {
                inputs: self.head.inputs,
                outputs: self.head.outputs,
                weight: self.head.weight.cast(),
                bias: self.head.bias.cast(),
            },
        }
    }
}

fn cast_conv1d<F: Real, G: Real>(c: &Conv1d<F>) -> Conv1d<G> {
    Conv1d {
        in_channels: c.in_channels,
        out_channels: c.out_channels,
        kernel: c.kernel,
        weight: c.weight.cast(),
        bias: c.bias.cast(),
    }
}

/// Inverted dropout: zeroes each unit with probability `rate` and rescales
/// survivors by `1 / (1 - rate)`. Returns the mask that was applied.
fn apply_dropout<F: Real>(x: &mut [F], rate: f64, rng: &mut dyn RngCore) -> Vec<F> {
    let keep = F::of(1.0 / (1.0 - rate));
    let mask: Vec<F> = (0..x.len())
        .map(|_| {
            if rate > 0.0 && rng.random_bool(rate) {
                F::zero()
            } else {
                keep
            }
        })
        .collect();
    x.iter_mut().zip(&mask).for_each(|(v, &m)| *v = *v * m);
    mask
}

impl<F: Real> ParamSet<F> for AffectNet<F> {
    fn tensors(&self) -> Vec<(String, &Tensor<F>)> {
        vec![
            ("conv1.weight".into(), &self.conv1.weight),
            ("conv1.bias".into(), &self.conv1.bias),
            ("conv2.weight".into(), &self.conv2.weight),
            ("conv2.bias".into(), &self.conv2.bias),
            ("conv3.weight".into(), &self.conv3.weight),
            ("conv3.bias".into(), &self.conv3.bias),
            ("head.weight".into(), &self.head.weight),
            ("head.bias".into(), &self.head.bias),
        ]
    }

    fn tensors_mut(&mut self) -> Vec<(String, &mut Tensor<F>)> {
        vec![
            ("conv1.weight".into(), &mut self.conv1.weight),
            ("conv1.bias".into(), &mut self.conv1.bias),
            ("conv2.weight".into(), &mut self.conv2.weight),
            ("conv2.bias".into(), &mut self.conv2.bias),
            ("conv3.weight".into(), &mut self.conv3.weight),
            ("conv3.bias".into(), &mut self.conv3.bias),
            ("head.weight".into(), &mut self.head.weight),
            ("head.bias".into(), &mut self.head.bias),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn net(k: usize) -> AffectNet<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        AffectNet::new(AffectNetConfig::new(50, k), &mut rng).unwrap()
    }

    fn contour() -> Vec<f64> {
        (0..50).map(|i| (i as f64 * 0.2).sin() * 0.5).collect()
    }

    #[test]
    fn probs_on_simplex_and_latent_is_eight_dims() {
        let out = net(4).forward(&contour(), None).unwrap();
        assert_eq!(out.probs.len(), 4);
        assert!((out.probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(out.probs.iter().all(|&p| p >= 0.0));
        assert_eq!(out.latent.len(), LATENT_DIM);
    }

    #[test]
    fn zero_head_gives_uniform_probs() {
        let mut n = net(4);
        n.head.weight.fill_zero();
        n.head.bias.fill_zero();
        let out = n.forward(&contour(), None).unwrap();
        assert!(out.probs.iter().all(|&p| (p - 0.25).abs() < 1e-15));
    }

    #[test]
    fn latent_ignores_head_parameters() {
        let a = net(4);
        let mut b = a.clone();
        b.head.weight.data.iter_mut().for_each(|w| *w = *w * -3.0 + 1.0);
        b.head.bias.data.iter_mut().for_each(|w| *w = 2.0);
        let c = contour();
        assert_eq!(a.encode(&c).unwrap(), b.encode(&c).unwrap());
    }

    #[test]
    fn eval_mode_is_deterministic() {
        let n = net(4);
        let c = contour();
        let x = n.forward(&c, None).unwrap();
        let y = n.forward(&c, None).unwrap();
        assert_eq!(x.probs, y.probs);
        assert_eq!(x.latent, y.latent);
    }

    #[test]
    fn dropout_only_in_training_mode() {
        let n = net(4);
        let c = contour();
        let eval = n.forward(&c, None).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let train = n.forward(&c, Some(&mut rng)).unwrap();
        assert_ne!(eval.latent, train.latent);
    }

    #[test]
    fn wrong_length_is_shape_error() {
        assert!(matches!(
            net(4).forward(&[0.0; 49], None),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn parameter_layout() {
        let n = net(4);
        let shapes: Vec<Vec<usize>> = n.tensors().into_iter().map(|(_, t)| t.shape.clone()).collect();
        assert_eq!(shapes[0], vec![32, 1, 3]);
        assert_eq!(shapes[2], vec![16, 32, 3]);
        assert_eq!(shapes[4], vec![8, 16, 3]);
        assert_eq!(shapes[6], vec![4, 8]);
    }
}
