use serde::{Deserialize, Serialize};

use crate::augment::PositionPlan;
use crate::encoder::{encode, EncoderParams, TokenGrid};
use crate::error::Result;
use crate::grade::Grade;

/// Binary confusion counts with KL-2 as the positive class.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

impl Confusion {
    pub fn record(&mut self, truth: Grade, predicted: Grade) {
        match (truth, predicted) {
            (Grade::Kl2, Grade::Kl2) => self.tp += 1,
            (Grade::Kl0, Grade::Kl2) => self.fp += 1,
            (Grade::Kl2, Grade::Kl0) => self.fn_ += 1,
            (Grade::Kl0, Grade::Kl0) => self.tn += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn accuracy(&self) -> f64 {
        if self.total() == 0 {
            return 0.0;
        }
        (self.tp + self.tn) as f64 / self.total() as f64
    }

    pub fn precision(&self) -> Option<f64> {
        let d = self.tp + self.fp;
        (d > 0).then(|| self.tp as f64 / d as f64)
    }

    pub fn recall(&self) -> Option<f64> {
        let d = self.tp + self.fn_;
        (d > 0).then(|| self.tp as f64 / d as f64)
    }

    /// `2PR / (P + R)`; zero, with a warning, when undefined.
    pub fn f1(&self) -> f64 {
        match (self.precision(), self.recall()) {
            (Some(p), Some(r)) if p + r > 0.0 => 2.0 * p * r / (p + r),
            _ => {
                log::warn!("F1 undefined for {self:?}; reporting 0");
                0.0
            }
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub f1: f64,
    pub confusion: Confusion,
    /// Mean training loss per epoch.
    pub loss_curve: Vec<f64>,
    /// Validation accuracy per epoch (drives checkpoint selection).
    pub val_accuracy_curve: Vec<f64>,
    /// Test accuracy per epoch.
    pub accuracy_curve: Vec<f64>,
    pub best_epoch: Option<usize>,
    /// First 1-based epoch whose test accuracy reaches 90% of the final epoch's.
    pub epochs_to_90pct: Option<usize>,
    /// Wall-clock seconds; kept out of persisted reports so they stay reproducible.
    #[serde(skip)]
    pub runtime_seconds: f64,
}

impl MetricsReport {
    pub fn from_confusion(confusion: Confusion) -> Self {
        MetricsReport {
            accuracy: confusion.accuracy(),
            f1: confusion.f1(),
            confusion,
            ..Default::default()
        }
    }
}

/// First 1-based index at which `curve` reaches 90% of its last value.
pub fn epochs_to_fraction(curve: &[f64], fraction: f64) -> Option<usize> {
    let last = *curve.last()?;
    curve.iter().position(|&a| a >= fraction * last).map(|i| i + 1)
}

pub fn predict(params: &EncoderParams, tokens: &TokenGrid) -> Result<Grade> {
    let plan = PositionPlan::identity(tokens.positions());
    let logits = encode(tokens, &params.position, &plan, params)?;
    Ok(if logits[1] > logits[0] { Grade::Kl2 } else { Grade::Kl0 })
}

/// Accuracy and F1 over `items`, always with the identity plan.
pub fn evaluate<'a, I>(params: &EncoderParams, items: I) -> Result<MetricsReport>
where
    I: IntoIterator<Item = (&'a TokenGrid, Grade)>,
{
    let mut confusion = Confusion::default();
    for (tokens, truth) in items {
        confusion.record(truth, predict(params, tokens)?);
    }
    if confusion.total() == 0 {
        log::warn!("evaluating an empty split");
    }
    Ok(MetricsReport::from_confusion(confusion))
}
