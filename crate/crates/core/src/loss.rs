//! Cross-entropy against pseudo-labels and the weighted joint loss
//! `L = alpha * L_a + (1 - alpha) * L_s`.

use crate::error::{Error, Result};

/// `-ln(probs[label])`. Used for both the affect (`L_a`) and speech (`L_s`) heads.
pub fn cross_entropy(probs: &[f64], label: usize) -> Result<f64> {
    let p = *probs.get(label).ok_or(Error::LabelOutOfRange {
        label,
        k: probs.len(),
    })?;
    // -ln(1) is -0.0; keep the loss non-negative in sign as well.
    Ok(-libm::log(p) + 0.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointLoss {
    pub total: f64,
    pub affect: f64,
    pub speech: f64,
}

impl JointLoss {
    pub fn combine(alpha: f64, affect: f64, speech: f64) -> Self {
        Self {
            total: alpha * affect + (1.0 - alpha) * speech,
            affect,
            speech,
        }
    }
}

pub fn joint_loss(probs_a: &[f64], probs_s: &[f64], label: usize, alpha: f64) -> Result<JointLoss> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Config(alloc::format!(
            "alpha must lie in [0, 1], got {alpha}"
        )));
    }
    if probs_a.len() != probs_s.len() {
        return Err(Error::Shape(alloc::format!(
            "affect head has {} classes, speech head has {}",
            probs_a.len(),
            probs_s.len()
        )));
    }
    Ok(JointLoss::combine(
        alpha,
        cross_entropy(probs_a, label)?,
        cross_entropy(probs_s, label)?,
    ))
}
