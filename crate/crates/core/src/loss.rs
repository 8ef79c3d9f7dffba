//! Cross-entropy, label-smoothing cross-entropy and the hybrid objective
//! `alpha * LSCE(mixed) + beta * CE(full)`.

use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

use crate::augment::SetTag;
use crate::error::{Error, Result};
use crate::grade::Grade;

/// Smallest probability fed to `ln`.
pub const LOG_FLOOR: f64 = 1e-12;

static FLOOR_HITS: AtomicUsize = AtomicUsize::new(0);

/// How many times a probability was clamped to [`LOG_FLOOR`] in this process.
pub fn log_floor_hits() -> usize {
    FLOOR_HITS.load(Ordering::Relaxed)
}

fn floored_ln(p: f64) -> f64 {
    if p < LOG_FLOOR {
        if FLOOR_HITS.fetch_add(1, Ordering::Relaxed) == 0 {
            log::warn!("probability {p:e} clamped to {LOG_FLOOR:e} before log");
        }
        LOG_FLOOR.ln()
    } else {
        p.ln()
    }
}

fn check_probs(probs: &[f64; 2]) -> Result<()> {
    if probs.iter().any(|p| !p.is_finite() || *p < 0.0) || ((probs[0] + probs[1]) - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!("{probs:?} is not a probability vector")));
    }
    Ok(())
}

fn check_one_hot(one_hot: &[f64; 2]) -> Result<()> {
    if !matches!(one_hot, [1.0, 0.0] | [0.0, 1.0]) {
        return Err(Error::invalid(format!("{one_hot:?} is not a two-class one-hot vector")));
    }
    Ok(())
}

/// Per-class targets after smoothing.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SmoothedTarget {
    pub weights: [f64; 2],
    pub epsilon: f64,
}

impl SmoothedTarget {
    /// The degenerate `epsilon = 0` target, i.e. the one-hot vector itself.
    pub fn unsmoothed(one_hot: [f64; 2]) -> Result<Self> {
        check_one_hot(&one_hot)?;
        Ok(SmoothedTarget {
            weights: one_hot,
            epsilon: 0.0,
        })
    }
}

/// `y * (1 - eps) + eps / 2`, elementwise.
pub fn smooth_labels(one_hot: [f64; 2], epsilon: f64) -> Result<SmoothedTarget> {
    check_one_hot(&one_hot)?;
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::invalid(format!("smoothing {epsilon} outside (0, 1)")));
    }
    Ok(SmoothedTarget {
        weights: one_hot.map(|y| y * (1.0 - epsilon) + epsilon / 2.0),
        epsilon,
    })
}

pub fn ce_loss(probs: [f64; 2], one_hot: [f64; 2]) -> Result<f64> {
    check_probs(&probs)?;
    check_one_hot(&one_hot)?;
    Ok(-probs.iter().zip(one_hot).map(|(p, y)| y * floored_ln(*p)).sum::<f64>())
}

pub fn lsce_loss(probs: [f64; 2], smoothed: &SmoothedTarget) -> Result<f64> {
    check_probs(&probs)?;
    Ok(-probs
        .iter()
        .zip(smoothed.weights)
        .map(|(p, y)| if y == 0.0 { 0.0 } else { y * floored_ln(*p) })
        .sum::<f64>())
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reduction {
    /// Each subset's loss is averaged over its members.
    #[default]
    Mean,
    /// Plain sums over each subset.
    Sum,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HybridLossConfig {
    pub epsilon: f64,
    pub alpha: f64,
    pub beta: f64,
    pub reduction: Reduction,
}

impl Default for HybridLossConfig {
    fn default() -> Self {
        HybridLossConfig {
            epsilon: 0.2,
            alpha: 0.3,
            beta: 0.7,
            reduction: Reduction::Mean,
        }
    }
}

impl HybridLossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::Config(format!("epsilon {} outside (0, 1)", self.epsilon)));
        }
        if !(0.0..=1.0).contains(&self.alpha) || !(0.0..=1.0).contains(&self.beta) {
            return Err(Error::Config("alpha and beta must lie in [0, 1]".into()));
        }
        if (self.alpha + self.beta - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "alpha + beta must equal 1, got {} + {}",
                self.alpha, self.beta
            )));
        }
        Ok(())
    }

    /// Soft target and loss weight for every batch member such that
    /// `sum_i weight_i * CE(p_i, target_i)` equals [`hybrid_loss`].
    pub fn targets(&self, members: &[(Grade, SetTag)]) -> Result<Vec<([f64; 2], f64)>> {
        self.validate()?;
        let mixed = members.iter().filter(|m| m.1 == SetTag::MixedKl).count();
        let full = members.len() - mixed;
        let per = |weight: f64, n: usize| match self.reduction {
            Reduction::Mean if n > 0 => weight / n as f64,
            _ => weight,
        };
        let (w_mixed, w_full) = (per(self.alpha, mixed), per(self.beta, full));
        members
            .iter()
            .map(|&(grade, tag)| match tag {
                SetTag::MixedKl => Ok((smooth_labels(grade.one_hot(), self.epsilon)?.weights, w_mixed)),
                SetTag::FullKl => Ok((grade.one_hot(), w_full)),
            })
            .collect()
    }
}

/// `alpha * LSCE` over mixed members plus `beta * CE` over full members.
/// An empty subset contributes zero.
pub fn hybrid_loss(batch: &[([f64; 2], Grade, SetTag)], config: &HybridLossConfig) -> Result<f64> {
    config.validate()?;
    let (mut lsce, mut ce) = (0.0, 0.0);
    let (mut n_mixed, mut n_full) = (0usize, 0usize);
    for &(probs, grade, tag) in batch {
        match tag {
            SetTag::MixedKl => {
                lsce += lsce_loss(probs, &smooth_labels(grade.one_hot(), config.epsilon)?)?;
                n_mixed += 1;
            }
            SetTag::FullKl => {
                ce += ce_loss(probs, grade.one_hot())?;
                n_full += 1;
            }
        }
    }
    if config.reduction == Reduction::Mean {
        if n_mixed > 0 {
            lsce /= n_mixed as f64;
        }
        if n_full > 0 {
            ce /= n_full as f64;
        }
    }
    Ok(config.alpha * lsce + config.beta * ce)
}

#[cfg(test)]
mod tests {
    use super::*;

    const EPS: f64 = 1e-4;

    #[test]
    fn smoothing_examples() {
        let s = smooth_labels([1.0, 0.0], 0.2).unwrap();
        assert!((s.weights[0] - 0.9).abs() < 1e-12 && (s.weights[1] - 0.1).abs() < 1e-12);
        let s = smooth_labels([0.0, 1.0], 0.05).unwrap();
        assert!((s.weights[0] - 0.025).abs() < 1e-12 && (s.weights[1] - 0.975).abs() < 1e-12);
        let s = smooth_labels([0.0, 1.0], 1e-12).unwrap();
        assert!((s.weights[1] - 1.0).abs() < 1e-11);
        assert!(smooth_labels([1.0, 0.0], 0.0).is_err());
        assert!(smooth_labels([1.0, 0.0], 1.0).is_err());
    }

    #[test]
    fn ce_examples() {
        assert!(ce_loss([1.0, 0.0], [1.0, 0.0]).unwrap().abs() < 1e-12);
        assert!((ce_loss([0.5, 0.5], [0.0, 1.0]).unwrap() - std::f64::consts::LN_2).abs() < EPS);
        assert!((ce_loss([0.9, 0.1], [0.0, 1.0]).unwrap() - std::f64::consts::LN_10).abs() < 1e-12);
    }

    #[test]
    fn zero_probability_is_floored() {
        let before = log_floor_hits();
        let v = ce_loss([1.0, 0.0], [0.0, 1.0]).unwrap();
        assert!((v - 12.0 * std::f64::consts::LN_10).abs() < 1e-9);
        assert!(log_floor_hits() > before);
    }

    #[test]
    fn lsce_examples() {
        let s = smooth_labels([1.0, 0.0], 0.2).unwrap();
        assert!((lsce_loss([0.9, 0.1], &s).unwrap() - 0.3251).abs() < EPS);
        let plain = SmoothedTarget::unsmoothed([0.0, 1.0]).unwrap();
        assert_eq!(lsce_loss([0.3, 0.7], &plain).unwrap(), ce_loss([0.3, 0.7], [0.0, 1.0]).unwrap());
    }

    #[test]
    fn lsce_minimiser_is_the_smoothed_target() {
        let s = smooth_labels([1.0, 0.0], 0.2).unwrap();
        // descend on q = p[0] over the open simplex
        let mut q: f64 = 0.5;
        for _ in 0..20_000 {
            let grad = -s.weights[0] / q + s.weights[1] / (1.0 - q);
            q = (q - 1e-3 * grad).clamp(1e-6, 1.0 - 1e-6);
        }
        assert!((q - 0.9).abs() < 1e-6, "{q}");
    }

    #[test]
    fn hybrid_examples() {
        let cfg = HybridLossConfig::default();
        let full = [([0.8, 0.2], Grade::Kl0, SetTag::FullKl), ([0.3, 0.7], Grade::Kl2, SetTag::FullKl)];
        let sum_ce = ce_loss([0.8, 0.2], [1.0, 0.0]).unwrap() + ce_loss([0.3, 0.7], [0.0, 1.0]).unwrap();
        let sum_cfg = HybridLossConfig { reduction: Reduction::Sum, ..cfg };
        assert!((hybrid_loss(&full, &sum_cfg).unwrap() - 0.7 * sum_ce).abs() < 1e-12);

        let mixed_and_full = [
            ([0.6, 0.4], Grade::Kl2, SetTag::MixedKl),
            ([0.8, 0.2], Grade::Kl0, SetTag::FullKl),
        ];
        assert!((hybrid_loss(&mixed_and_full, &cfg).unwrap() - 0.4189).abs() < 1e-3);

        let ce_only = HybridLossConfig { alpha: 0.0, beta: 1.0, ..cfg };
        let v = hybrid_loss(&mixed_and_full, &ce_only).unwrap();
        assert!((v - ce_loss([0.8, 0.2], [1.0, 0.0]).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn weights_must_sum_to_one() {
        let bad = HybridLossConfig { alpha: 0.5, beta: 0.6, ..Default::default() };
        assert!(hybrid_loss(&[], &bad).is_err());
        assert!(HybridLossConfig::default().validate().is_ok());
    }

    #[test]
    fn targets_reproduce_hybrid_loss() {
        let batch: [([f64; 2], Grade, SetTag); 3] = [
            ([0.6, 0.4], Grade::Kl2, SetTag::MixedKl),
            ([0.2, 0.8], Grade::Kl2, SetTag::MixedKl),
            ([0.8, 0.2], Grade::Kl0, SetTag::FullKl),
        ];
        for reduction in [Reduction::Mean, Reduction::Sum] {
            let cfg = HybridLossConfig { reduction, ..Default::default() };
            let members: Vec<_> = batch.iter().map(|b| (b.1, b.2)).collect();
            let via_targets: f64 = cfg
                .targets(&members)
                .unwrap()
                .iter()
                .zip(&batch)
                .map(|((t, w), b)| -w * (t[0] * b.0[0].ln() + t[1] * b.0[1].ln()))
                .sum();
            assert!((via_targets - hybrid_loss(&batch, &cfg).unwrap()).abs() < 1e-12);
        }
    }
}
