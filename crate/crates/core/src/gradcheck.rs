//! Central finite-difference checks of the analytic gradients.
//!
//! The reduced networks here keep every layer type of the full models but
//! are small enough to perturb each parameter one at a time.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::affectnet::{AffectNet, AffectNetConfig};
use crate::layers::{log_softmax_nll, ParamSet};
use crate::speechnet::{SpeechArch, SpeechLayer, SpeechNet, SpeechNetConfig};
use crate::trainer::batch_gradients;
use crate::Result;

/// Discrepancy for one parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorError {
    pub name: String,
    /// `|g_analytic - g_numeric| / max(|g_analytic|, |g_numeric|)` in the L2 norm.
    pub relative: f64,
}

/// A batch plus the two networks under test.
#[derive(Debug, Clone)]
pub struct GradProblem {
    pub affect: AffectNet<f64>,
    pub speech: SpeechNet<f64>,
    pub contours: Vec<Vec<f64>>,
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub alpha: f64,
}

/// AffectNet with `N_a = 10` and channels 4/3/2.
pub fn reduced_affectnet<R: Rng + ?Sized>(classes: usize, rng: &mut R) -> Result<AffectNet<f64>> {
    let config = AffectNetConfig {
        channels: [4, 3, 2],
        ..AffectNetConfig::new(10, classes)
    };
    AffectNet::new(config, rng)
}

/// SpeechNet over a 12x16 input: six convolutions and two pools ending in
/// a 16x1x2 map, then a 32 -> 16 -> k head.
pub fn reduced_speech_arch() -> SpeechArch {
    use SpeechLayer::MaxPool;
    SpeechArch {
        layers: vec![
            SpeechLayer::conv(4, 3, 3),
            MaxPool,
            SpeechLayer::conv(4, 2, 2),
            SpeechLayer::conv(8, 2, 2),
            SpeechLayer::conv(8, 2, 2),
            SpeechLayer::conv(16, 1, 1),
            SpeechLayer::conv(16, 1, 1),
            MaxPool,
        ],
        hidden: vec![16],
    }
}

pub fn reduced_speechnet<R: Rng + ?Sized>(classes: usize, rng: &mut R) -> Result<SpeechNet<f64>> {
    let config = SpeechNetConfig {
        frames: 12,
        feature_dim: 16,
        classes,
        arch: reduced_speech_arch(),
    };
    SpeechNet::new(config, rng)
}

impl GradProblem {
    /// Reduced networks, a batch of 4 random windows and `k = 3`.
    pub fn reduced(seed: u64, alpha: f64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = 3;
        let mut affect = reduced_affectnet(k, &mut rng)?;
        let mut speech = reduced_speechnet(k, &mut rng)?;
        // Zero biases put dead units exactly on the ReLU kink, where the
        // central difference and the subgradient legitimately disagree.
        let biases = affect
            .tensors_mut()
            .into_iter()
            .chain(speech.tensors_mut())
            .filter(|(name, _)| name.ends_with("bias"));
        for (_, t) in biases {
            t.data.iter_mut().for_each(|b| *b = rng.random_range(-0.1..0.1));
        }
        let batch = 4;
        let contours = (0..batch)
            .map(|_| (0..10).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let features = (0..batch)
            .map(|_| (0..12 * 16).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let labels = (0..batch).map(|_| rng.random_range(0..k)).collect();
        Ok(Self {
            affect,
            speech,
            contours,
            features,
            labels,
            alpha,
        })
    }

    /// Batch-mean joint loss in evaluation mode.
    pub fn loss(&self) -> Result<f64> {
        let n = self.labels.len() as f64;
        let (mut la, mut ls) = (0.0, 0.0);
        for ((c, f), &y) in self.contours.iter().zip(&self.features).zip(&self.labels) {
            la += log_softmax_nll(&self.affect.forward(c, None)?.logits, y);
            ls += log_softmax_nll(&self.speech.forward(f)?.logits, y);
        }
        Ok(self.alpha * la / n + (1.0 - self.alpha) * ls / n)
    }

    /// Relative error of every AffectNet and SpeechNet parameter tensor.
    pub fn check(&self, eps: f64) -> Result<Vec<TensorError>> {
        let contours: Vec<&[f64]> = self.contours.iter().map(Vec::as_slice).collect();
        let features: Vec<&[f64]> = self.features.iter().map(Vec::as_slice).collect();
        let grads = batch_gradients(
            Some(&self.affect),
            &self.speech,
            &contours,
            &features,
            &self.labels,
            self.alpha,
            None,
        )?;
        let affect_grads = grads.affect.expect("affect gradients requested");

        let mut probe = self.clone();
        let mut out = Vec::new();
        for (ti, (name, g)) in affect_grads.tensors().into_iter().enumerate() {
            let numeric = probe.numeric_grad(Net::Affect, ti, eps)?;
            out.push(compare(alloc::format!("affect.{name}"), &g.data, &numeric));
        }
        for (ti, (name, g)) in grads.speech.tensors().into_iter().enumerate() {
            let numeric = probe.numeric_grad(Net::Speech, ti, eps)?;
            out.push(compare(alloc::format!("speech.{name}"), &g.data, &numeric));
        }
        Ok(out)
    }

    fn param(&mut self, net: Net, tensor: usize, index: usize) -> &mut f64 {
        let t = match net {
            Net::Affect => self.affect.tensors_mut().swap_remove(tensor).1,
            Net::Speech => self.speech.tensors_mut().swap_remove(tensor).1,
        };
        &mut t.data[index]
    }

    fn numeric_grad(&mut self, net: Net, tensor: usize, eps: f64) -> Result<Vec<f64>> {
        let len = match net {
            Net::Affect => self.affect.tensors()[tensor].1.len(),
            Net::Speech => self.speech.tensors()[tensor].1.len(),
        };
        let mut grad = Vec::with_capacity(len);
        for j in 0..len {
            let original = *self.param(net, tensor, j);
            *self.param(net, tensor, j) = original + eps;
            let up = self.loss()?;
            *self.param(net, tensor, j) = original - eps;
            let down = self.loss()?;
            *self.param(net, tensor, j) = original;
            grad.push((up - down) / (2.0 * eps));
        }
        Ok(grad)
    }
}

#[derive(Debug, Clone, Copy)]
enum Net {
    Affect,
    Speech,
}

fn compare(name: String, analytic: &[f64], numeric: &[f64]) -> TensorError {
    let norm = |v: &mut dyn Iterator<Item = f64>| libm::sqrt(v.map(|x| x * x).sum::<f64>());
    let diff = norm(&mut analytic.iter().zip(numeric).map(|(a, n)| a - n));
    let scale = norm(&mut analytic.iter().copied()).max(norm(&mut numeric.iter().copied()));
    let relative = if scale < 1e-12 { diff } else { diff / scale };
    TensorError { name, relative }
}
