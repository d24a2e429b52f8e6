//! Polynomial hinge loss, the summed empirical loss and the training error.

use crate::augment::Augmentation;
use crate::autodiff::Real;
use crate::error::{LabError, Result};

/// Smallest hinge exponent for which the loss is twice continuously
/// differentiable.
pub const MIN_HINGE_POWER: u32 = 3;

/// `ℓ(z) = max(z + 1, 0)^p`: zero for `z ≤ −1`, a polynomial beyond.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct HingeLoss {
    power: u32,
}

impl Default for HingeLoss {
    fn default() -> Self {
        HingeLoss {
            power: MIN_HINGE_POWER,
        }
    }
}

impl HingeLoss {
    pub fn new(power: u32) -> Result<Self> {
        if power < MIN_HINGE_POWER {
            return Err(LabError::InvalidHingePower(power));
        }
        Ok(HingeLoss { power })
    }

    pub fn power(&self) -> u32 {
        self.power
    }

    pub fn value(&self, z: f64) -> f64 {
        let t = (z + 1.0).max(0.0);
        t.powi(self.power as i32)
    }

    pub fn grad(&self, z: f64) -> f64 {
        let t = (z + 1.0).max(0.0);
        f64::from(self.power) * t.powi(self.power as i32 - 1)
    }

    pub fn hess(&self, z: f64) -> f64 {
        let t = (z + 1.0).max(0.0);
        let p = f64::from(self.power);
        p * (p - 1.0) * t.powi(self.power as i32 - 2)
    }

    /// Generic evaluation used inside differentiated objectives.
    pub fn eval<S: Real>(&self, z: S) -> S {
        if z.value() > -1.0 {
            (z + 1.0).powi(self.power as i32)
        } else {
            z * 0.0
        }
    }
}

pub fn hinge_value(z: f64, p: u32) -> Result<f64> {
    Ok(HingeLoss::new(p)?.value(z))
}

pub fn hinge_grad(z: f64, p: u32) -> Result<f64> {
    Ok(HingeLoss::new(p)?.grad(z))
}

pub fn hinge_hess(z: f64, p: u32) -> Result<f64> {
    Ok(HingeLoss::new(p)?.hess(z))
}

/// Loss, regularizer weight and augmentation of a training objective.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EmpiricalLossConfig {
    pub base_loss: HingeLoss,
    pub lambda: f64,
    pub augmentation: Augmentation,
}

impl EmpiricalLossConfig {
    /// Validates `λ ≥ 0`, and `λ > 0` whenever a special neuron is present.
    pub fn new(base_loss: HingeLoss, lambda: f64, augmentation: Augmentation) -> Result<Self> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(LabError::invalid(format!(
                "lambda must be a finite non-negative number, got {lambda}"
            )));
        }
        if augmentation != Augmentation::None && lambda <= 0.0 {
            return Err(LabError::invalid(
                "lambda must be positive when a special neuron is added",
            ));
        }
        Ok(EmpiricalLossConfig {
            base_loss,
            lambda,
            augmentation,
        })
    }

    /// Plain hinge loss on an unaugmented network.
    pub fn plain(base_loss: HingeLoss) -> Self {
        EmpiricalLossConfig {
            base_loss,
            lambda: 0.0,
            augmentation: Augmentation::None,
        }
    }
}

fn check_lengths(scores: usize, labels: usize) -> Result<()> {
    if scores != labels {
        return Err(LabError::DimensionMismatch {
            what: "scores vs labels",
            expected: labels,
            got: scores,
        });
    }
    if labels == 0 {
        return Err(LabError::invalid("at least one sample is required"));
    }
    Ok(())
}

/// `Σ_i ℓ(−y_i · score_i)`, summed rather than averaged. Regularizers are
/// added by the augmentation layer.
pub fn empirical_loss(scores: &[f64], labels: &[f64], cfg: &EmpiricalLossConfig) -> Result<f64> {
    check_lengths(scores.len(), labels.len())?;
    Ok(summed_hinge(scores, labels, &cfg.base_loss))
}

pub(crate) fn summed_hinge<S: Real>(scores: &[S], labels: &[f64], loss: &HingeLoss) -> S {
    let mut total = S::zero();
    for (s, &y) in scores.iter().zip(labels) {
        total = total + loss.eval(s.clone() * -y);
    }
    total
}

/// Sign with `sgn(0) = +1`.
pub fn predicted_label(score: f64) -> f64 {
    if score >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

/// Fraction of samples whose label differs from the sign of the score.
pub fn misclassification_rate(scores: &[f64], labels: &[f64]) -> Result<f64> {
    check_lengths(scores.len(), labels.len())?;
    let wrong = scores
        .iter()
        .zip(labels)
        .filter(|(&s, &y)| predicted_label(s) != y)
        .count();
    Ok(wrong as f64 / labels.len() as f64)
}
