use std::time::Instant;

use rand::seq::{index::sample as sample_indices, SliceRandom};
use serde::Serialize;

use super::config::{ExperimentConfig, OptimizerConfig, OptimizerKind, SspeMode};
use super::metrics::{epochs_to_fraction, evaluate, MetricsReport};
use crate::augment::{
    bootstrap_oversample, conventional_augment, exchange_key_patches, make_sspe_plan, original_sequence,
    pe_dropout_plan, shuffle_all_plan, KeySource, LabeledGrid, LabeledSequence, PositionPlan, SetTag,
};
use crate::data::{Sample, Split};
use crate::encoder::{batch_gradients, embed_patches, EncoderParams, WeightedSequence};
use crate::error::{Error, Result};
use crate::numerics::Matrix;
use crate::raster::Raster;
use crate::rng::{derive_seed, rng_for, stream};

/// First-order optimiser state.
pub struct Optimizer {
    config: OptimizerConfig,
    first: Vec<Matrix>,
    second: Vec<Matrix>,
    steps: i32,
}

impl Optimizer {
    pub fn new(config: OptimizerConfig, params: &EncoderParams) -> Self {
        Optimizer {
            config,
            first: params.zeros_like(),
            second: params.zeros_like(),
            steps: 0,
        }
    }

    pub fn step(&mut self, params: &mut EncoderParams, grads: &[Matrix]) {
        self.steps += 1;
        let lr = self.config.learning_rate;
        match self.config.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.matrices_mut().into_iter().zip(grads) {
                    for (w, d) in p.data_mut().iter_mut().zip(g.data()) {
                        *w -= lr * d;
                    }
                }
            }
            OptimizerKind::Adam => {
                let (b1, b2, eps) = (self.config.beta1, self.config.beta2, self.config.eps);
                let c1 = 1.0 - b1.powi(self.steps);
                let c2 = 1.0 - b2.powi(self.steps);
                for (((p, g), m), v) in params
                    .matrices_mut()
                    .into_iter()
                    .zip(grads)
                    .zip(&mut self.first)
                    .zip(&mut self.second)
                {
                    let it = p
                        .data_mut()
                        .iter_mut()
                        .zip(g.data())
                        .zip(m.data_mut())
                        .zip(v.data_mut());
                    for (((w, &d), m), v) in it {
                        *m = b1 * *m + (1.0 - b1) * d;
                        *v = b2 * *v + (1.0 - b2) * d * d;
                        *w -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
                    }
                }
            }
        }
    }
}

/// One line of the JSON-lines training log.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss: f64,
    pub val_accuracy: f64,
    pub test_accuracy: f64,
    pub sequences: usize,
    pub full_kl: usize,
    pub mixed_kl: usize,
    /// Key slots filled from a candidate.
    pub exchanged_slots: usize,
    /// Combined fingerprint of every position plan drawn this epoch.
    pub plan_hash: u64,
}

pub struct TrainOutcome {
    /// Parameters from the epoch with the best validation accuracy.
    pub params: EncoderParams,
    pub report: MetricsReport,
    pub log: Vec<EpochLog>,
}

fn masked(image: &Raster, cells: &[usize], patch: usize) -> Raster {
    let mut out = image.clone();
    let grid = image.width() / patch;
    for &k in cells {
        out.zero_cell(patch, (k - 1) / grid, (k - 1) % grid);
    }
    out
}

/// Embeds one split with the configured cells masked.
pub fn embed_split(config: &ExperimentConfig, samples: &[Sample], split: Split) -> Result<Vec<LabeledGrid>> {
    samples
        .iter()
        .filter(|s| s.split == split)
        .map(|s| {
            let img = masked(&s.image, &config.mask_cells, config.model.patch_pixels);
            Ok(LabeledGrid {
                id: s.id,
                tokens: embed_patches(&img, config.model.patch_pixels)?,
                grade: s.grade,
            })
        })
        .collect()
}

pub fn evaluate_grids(params: &EncoderParams, grids: &[LabeledGrid]) -> Result<MetricsReport> {
    evaluate(params, grids.iter().map(|g| (&g.tokens, g.grade)))
}

fn plan_for(config: &ExperimentConfig, epoch: usize, index: usize) -> Result<Vec<Option<usize>>> {
    let positions = config.model.positions();
    let mut rng = rng_for(config.seed, &[stream::PLAN, epoch as u64, index as u64]);
    let plan = match config.sspe {
        SspeMode::Off => PositionPlan::identity(positions),
        SspeMode::Keys => make_sspe_plan(positions, &config.key_set, &mut rng)?,
        SspeMode::All => shuffle_all_plan(positions, &mut rng),
    };
    if config.pe_dropout > 0.0 {
        let mut rng = rng_for(config.seed, &[stream::DROPOUT, epoch as u64, index as u64]);
        Ok(pe_dropout_plan(&plan, &config.key_set, config.pe_dropout, &mut rng)?
            .slots()
            .to_vec())
    } else {
        Ok(plan.slots())
    }
}

/// Builds the epoch's training sequences: oversampling, conventional
/// augmentation, then key-patch exchange against `exchange_n` candidates.
pub fn epoch_sequences(config: &ExperimentConfig, train: &[Sample], epoch: usize) -> Result<Vec<LabeledSequence>> {
    let e = epoch as u64;
    let patch = config.model.patch_pixels;
    let pool_src: Vec<&Sample> = if config.oversample {
        let mut rng = rng_for(config.seed, &[stream::OVERSAMPLE, e]);
        bootstrap_oversample(&train.iter().collect::<Vec<_>>(), |s| s.grade, &mut rng)?
    } else {
        train.iter().collect()
    };
    let pool = pool_src
        .iter()
        .enumerate()
        .map(|(j, s)| {
            let mut rng = rng_for(config.seed, &[stream::AUGMENT, e, j as u64]);
            let img = masked(&s.image, &config.mask_cells, patch);
            let img = conventional_augment(&img, &mut rng, &config.augment);
            Ok(LabeledGrid {
                id: s.id,
                tokens: embed_patches(&img, patch)?,
                grade: s.grade,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let n = config.exchange_n;
    let originals = train.len();
    let mut out = Vec::with_capacity(pool.len() * (1 << config.key_set.len()) * n.max(1));
    for (j, target) in pool.iter().enumerate() {
        if n == 0 {
            out.push(original_sequence(target, &config.key_set));
            continue;
        }
        let eligible: Vec<usize> = (0..originals).filter(|&i| pool[i].id != target.id).collect();
        if eligible.len() < n {
            return Err(Error::Config(format!(
                "match number {n} exceeds the {} available candidates",
                eligible.len()
            )));
        }
        let mut rng = if config.resample_candidates {
            rng_for(config.seed, &[stream::CANDIDATES, e, j as u64])
        } else {
            rng_for(config.seed, &[stream::CANDIDATES, target.id])
        };
        let candidates: Vec<&LabeledGrid> = sample_indices(&mut rng, eligible.len(), n)
            .into_iter()
            .map(|i| &pool[eligible[i]])
            .collect();
        out.extend(exchange_key_patches(target, &candidates, &config.key_set, config.dedupe_identity)?);
    }
    Ok(out)
}

/// Trains one model and reports test metrics of the best-validation epoch.
pub fn train(config: &ExperimentConfig, samples: &[Sample]) -> Result<TrainOutcome> {
    train_with_observer(config, samples, |_| {})
}

pub fn train_with_observer(
    config: &ExperimentConfig,
    samples: &[Sample],
    mut observer: impl FnMut(&EpochLog),
) -> Result<TrainOutcome> {
    config.validate()?;
    let started = Instant::now();
    let train: Vec<Sample> = samples.iter().filter(|s| s.split == Split::Train).cloned().collect();
    let val = embed_split(config, samples, Split::Val)?;
    let test = embed_split(config, samples, Split::Test)?;
    if train.is_empty() || test.is_empty() {
        return Err(Error::Config("training and test splits must be non-empty".into()));
    }

    let mut params = EncoderParams::init(config.model.clone(), &mut rng_for(config.seed, &[stream::INIT]))?;
    let mut optimizer = Optimizer::new(config.optimizer.clone(), &params);
    let mut best: Option<(f64, usize, EncoderParams)> = None;
    let mut log = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        let sequences = epoch_sequences(config, &train, epoch)?;
        let slots = (0..sequences.len())
            .map(|i| plan_for(config, epoch, i))
            .collect::<Result<Vec<_>>>()?;
        let plan_hash = slots.iter().fold(0u64, |h, s| {
            let fp = s.iter().fold(0u64, |a, r| derive_seed(a, &[r.map_or(0, |r| r as u64 + 1)]));
            derive_seed(h, &[fp])
        });

        let mut order: Vec<usize> = (0..sequences.len()).collect();
        order.shuffle(&mut rng_for(config.seed, &[stream::SHUFFLE, epoch as u64]));
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(config.batch_size) {
            let members: Vec<_> = chunk.iter().map(|&i| (sequences[i].label, sequences[i].set_tag)).collect();
            let targets = config.loss.targets(&members)?;
            let batch: Vec<WeightedSequence<'_>> = chunk
                .iter()
                .zip(targets)
                .map(|(&i, (target, weight))| WeightedSequence {
                    tokens: &sequences[i].tokens,
                    slots: slots[i].clone(),
                    target,
                    weight,
                })
                .collect();
            let (loss, grads) = batch_gradients(&params, &batch).map_err(|e| match e {
                Error::NonFinite(what) => Error::Diverged {
                    epoch: epoch + 1,
                    detail: format!("non-finite {what}"),
                },
                other => other,
            })?;
            optimizer.step(&mut params, &grads);
            loss_sum += loss;
            batches += 1;
        }
        let epoch_loss = loss_sum / batches as f64;
        if !epoch_loss.is_finite() || !params.matrices().iter().all(|m| m.is_finite()) {
            return Err(Error::Diverged {
                epoch: epoch + 1,
                detail: format!("loss {epoch_loss}"),
            });
        }

        let val_acc = if val.is_empty() {
            0.0
        } else {
            evaluate_grids(&params, &val)?.accuracy
        };
        let test_acc = evaluate_grids(&params, &test)?.accuracy;
        if best.as_ref().is_none_or(|(acc, _, _)| val_acc > *acc) {
            best = Some((val_acc, epoch + 1, params.clone()));
        }
        let entry = EpochLog {
            epoch: epoch + 1,
            loss: epoch_loss,
            val_accuracy: val_acc,
            test_accuracy: test_acc,
            sequences: sequences.len(),
            full_kl: sequences.iter().filter(|s| s.set_tag == SetTag::FullKl).count(),
            mixed_kl: sequences.iter().filter(|s| s.set_tag == SetTag::MixedKl).count(),
            exchanged_slots: sequences
                .iter()
                .flat_map(|s| &s.provenance.key_sources)
                .filter(|(_, src)| *src == KeySource::Candidate)
                .count(),
            plan_hash,
        };
        log::info!(
            "epoch {} loss {:.4} val {:.3} test {:.3}",
            entry.epoch,
            entry.loss,
            entry.val_accuracy,
            entry.test_accuracy
        );
        observer(&entry);
        log.push(entry);
    }

    let (_, best_epoch, best_params) = best.expect("at least one epoch");
    let mut report = evaluate_grids(&best_params, &test)?;
    report.loss_curve = log.iter().map(|e| e.loss).collect();
    report.val_accuracy_curve = log.iter().map(|e| e.val_accuracy).collect();
    report.accuracy_curve = log.iter().map(|e| e.test_accuracy).collect();
    report.best_epoch = Some(best_epoch);
    report.epochs_to_90pct = epochs_to_fraction(&report.accuracy_curve, 0.9);
    report.runtime_seconds = started.elapsed().as_secs_f64();
    Ok(TrainOutcome {
        params: best_params,
        report,
        log,
    })
}
