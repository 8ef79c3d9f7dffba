//! Fixtures shared by the integration tests and the acceptance run.
#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, StudentsT};

use sspe_vit::augment::{exchange_key_patches, make_sspe_plan, pe_dropout_plan, KeySet, LabeledGrid, SetTag};
use sspe_vit::encoder::{batch_gradients, encode_slots, EncoderParams, ModelConfig, PeKind, TokenGrid, WeightedSequence};
use sspe_vit::loss::{hybrid_loss, HybridLossConfig, Reduction};
use sspe_vit::numerics::{grad_check_coordinates, softmax_rows, Coordinate, Matrix};
use sspe_vit::Grade;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tokens(rng: &mut impl Rng, grid: usize, patch: usize) -> TokenGrid {
    let m = Matrix::from_fn(grid * grid, patch * patch, |_, _| rng.gen::<f64>());
    TokenGrid::new(grid, grid, patch, m).unwrap()
}

pub fn random_grade(rng: &mut impl Rng) -> Grade {
    if rng.gen::<bool>() {
        Grade::Kl2
    } else {
        Grade::Kl0
    }
}

/// Default toy geometry with the given position embedding.
pub fn model(kind: PeKind, learnable: bool, rng: &mut impl Rng) -> EncoderParams {
    let config = ModelConfig {
        pe_kind: kind,
        pe_learnable: learnable,
        ..ModelConfig::default()
    };
    let mut params = EncoderParams::init(config, rng).unwrap();
    // Move norms and biases off their initial constants so every path is exercised.
    for m in params.matrices_mut() {
        for v in m.data_mut() {
            *v += rng.gen_range(-0.1..0.1);
        }
    }
    params
}

pub fn random_permutation(rng: &mut impl Rng, n: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (1..=n).collect();
    order.shuffle(rng);
    order
}

const GRAD_CASES: [(PeKind, bool); 5] = [
    (PeKind::Sinusoidal1d, false),
    (PeKind::Grid2d, true),
    (PeKind::Relative, false),
    (PeKind::None, false),
    (PeKind::Sinusoidal1d, true),
];

/// Outcome of one full-model gradient check.
pub struct GradReport {
    pub kind: PeKind,
    pub worst_relative_error: f64,
    /// Difference between the tape's loss and the loss module's value.
    pub value_gap: f64,
    pub coordinates: usize,
}

/// Central-difference check of the analytic gradient of encode followed by
/// the hybrid loss, for a random model, batch, plan and loss setting.
pub fn full_model_grad_check(case: u64) -> GradReport {
    let mut rng = rng(7_000 + case);
    let (kind, learnable) = GRAD_CASES[case as usize % GRAD_CASES.len()];
    let params = model(kind, learnable, &mut rng);
    let keys = KeySet::new(vec![4, 6]).unwrap();
    let alpha = rng.gen_range(0.1..0.9);
    let loss_cfg = HybridLossConfig {
        epsilon: rng.gen_range(0.05..0.3),
        alpha,
        beta: 1.0 - alpha,
        reduction: if case.is_multiple_of(2) { Reduction::Mean } else { Reduction::Sum },
    };

    let batch = 4;
    let tokens: Vec<TokenGrid> = (0..batch).map(|_| random_tokens(&mut rng, 3, 16)).collect();
    let members: Vec<(Grade, SetTag)> = (0..batch)
        .map(|i| {
            let tag = if i % 2 == 0 { SetTag::MixedKl } else { SetTag::FullKl };
            (random_grade(&mut rng), tag)
        })
        .collect();
    let slots: Vec<Vec<Option<usize>>> = (0..batch)
        .map(|i| {
            let plan = make_sspe_plan(9, &keys, &mut rng).unwrap();
            if i == 3 {
                pe_dropout_plan(&plan, &keys, 0.3, &mut rng).unwrap().slots().to_vec()
            } else {
                plan.slots()
            }
        })
        .collect();
    let targets = loss_cfg.targets(&members).unwrap();
    let seqs: Vec<WeightedSequence<'_>> = (0..batch)
        .map(|i| WeightedSequence {
            tokens: &tokens[i],
            slots: slots[i].clone(),
            target: targets[i].0,
            weight: targets[i].1,
        })
        .collect();
    let (value, grads) = batch_gradients(&params, &seqs).unwrap();

    // Independent path: logits, then softmax, then the loss module.
    let loss_of = |p: &EncoderParams| -> sspe_vit::Result<f64> {
        let mut rows = Vec::with_capacity(batch);
        for i in 0..batch {
            let logits = encode_slots(&tokens[i], &p.position, &slots[i], p)?;
            let probs = softmax_rows(&Matrix::row_vector(&logits))?;
            rows.push(([probs.get(0, 0), probs.get(0, 1)], members[i].0, members[i].1));
        }
        hybrid_loss(&rows, &loss_cfg)
    };
    let value_gap = (loss_of(&params).unwrap() - value).abs();

    let point: Vec<Matrix> = params.matrices().into_iter().cloned().collect();
    let mut coords = Vec::new();
    for (m, mat) in point.iter().enumerate() {
        for _ in 0..4.min(mat.len()) {
            coords.push(Coordinate {
                matrix: m,
                offset: rng.gen_range(0..mat.len()),
            });
        }
    }
    for _ in 0..100 {
        let m = rng.gen_range(0..point.len());
        coords.push(Coordinate {
            matrix: m,
            offset: rng.gen_range(0..point[m].len()),
        });
    }
    let worst = grad_check_coordinates(
        |mats: &[Matrix]| loss_of(&params.with_matrices(mats)?),
        &point,
        &grads,
        &coords,
        1e-5,
    )
    .unwrap();
    GradReport {
        kind,
        worst_relative_error: worst,
        value_gap,
        coordinates: coords.len(),
    }
}

/// Largest logit change when tokens and their position rows are permuted together.
pub fn joint_permutation_delta(kind: PeKind, seed: u64) -> f64 {
    let mut rng = rng(seed);
    let params = model(kind, false, &mut rng);
    let tokens = random_tokens(&mut rng, 3, 16);
    let keys = KeySet::new(vec![4, 6]).unwrap();
    let slots = make_sspe_plan(9, &keys, &mut rng).unwrap().slots();
    let order = random_permutation(&mut rng, 9);
    let moved = tokens.permuted(&order).unwrap();
    let moved_slots: Vec<Option<usize>> = order.iter().map(|&k| slots[k - 1]).collect();
    let a = encode_slots(&tokens, &params.position, &slots, &params).unwrap();
    let b = encode_slots(&moved, &params.position, &moved_slots, &params).unwrap();
    (a[0] - b[0]).abs().max((a[1] - b[1]).abs())
}

/// Largest logit change when only the tokens are permuted, with no position embedding.
pub fn unpositioned_permutation_delta(seed: u64) -> f64 {
    let mut rng = rng(seed);
    let params = model(PeKind::None, false, &mut rng);
    let tokens = random_tokens(&mut rng, 3, 16);
    let identity: Vec<Option<usize>> = (1..=9).map(Some).collect();
    let moved = tokens.permuted(&random_permutation(&mut rng, 9)).unwrap();
    let a = encode_slots(&tokens, &params.position, &identity, &params).unwrap();
    let b = encode_slots(&moved, &params.position, &identity, &params).unwrap();
    (a[0] - b[0]).abs().max((a[1] - b[1]).abs())
}

/// Counts placements of each non-key token over `draws` SSPE plans and
/// returns the largest deviation of an empirical frequency from uniform.
pub fn sspe_uniformity_deviation(keys: &KeySet, positions: usize, draws: usize, seed: u64) -> f64 {
    let mut rng = rng(seed);
    let free: Vec<usize> = (1..=positions).filter(|k| !keys.contains(*k)).collect();
    let mut counts = vec![vec![0usize; positions + 1]; positions + 1];
    for _ in 0..draws {
        let plan = make_sspe_plan(positions, keys, &mut rng).unwrap();
        for &k in &free {
            counts[k][plan.get(k)] += 1;
        }
    }
    let expect = 1.0 / free.len() as f64;
    let mut worst = 0.0f64;
    for &k in &free {
        for &row in &free {
            worst = worst.max((counts[k][row] as f64 / draws as f64 - expect).abs());
        }
    }
    worst
}

/// Checks one random exchange against a brute-force enumeration of every
/// key-source combination. Returns a description of the first violation.
pub fn exchange_violation(seed: u64) -> Option<String> {
    let mut rng = rng(seed);
    let size = rng.gen_range(1..=3);
    let mut pool: Vec<usize> = (1..=9).collect();
    pool.shuffle(&mut rng);
    let keys = KeySet::new(pool[..size].to_vec()).unwrap();
    let n = rng.gen_range(1..=4);
    let grid = |id: u64, rng: &mut ChaCha8Rng| LabeledGrid {
        id,
        tokens: random_tokens(rng, 3, 4),
        grade: random_grade(rng),
    };
    let target = grid(0, &mut rng);
    let cands: Vec<LabeledGrid> = (1..=n as u64).map(|id| grid(id, &mut rng)).collect();
    let refs: Vec<&LabeledGrid> = cands.iter().collect();
    let out = exchange_key_patches(&target, &refs, &keys, false).unwrap();
    let combos = 1usize << keys.len();
    if out.len() != n * combos {
        return Some(format!("{} sequences for N={n}, |keys|={}", out.len(), keys.len()));
    }
    for (ci, cand) in cands.iter().enumerate() {
        for mask in 0..combos {
            let seq = &out[ci * combos + mask];
            let grades: Vec<Grade> = (0..keys.len())
                .map(|b| if mask >> b & 1 == 1 { cand.grade } else { target.grade })
                .collect();
            let expect = if grades.contains(&Grade::Kl2) {
                Grade::Kl2
            } else {
                Grade::Kl0
            };
            if seq.label != expect {
                return Some(format!("label {:?} != {:?} for mask {mask:b}", seq.label, expect));
            }
            let full = grades.iter().all(|&g| g == grades[0]);
            if (seq.set_tag == SetTag::FullKl) != full {
                return Some(format!("set tag {:?} for mask {mask:b}", seq.set_tag));
            }
            for k in 1..=9 {
                let from_cand = keys
                    .indices()
                    .iter()
                    .position(|&key| key == k)
                    .is_some_and(|b| mask >> b & 1 == 1);
                let src = if from_cand { &cand.tokens } else { &target.tokens };
                let same_bits = seq
                    .tokens
                    .token(k)
                    .iter()
                    .zip(src.token(k))
                    .all(|(a, b)| a.to_bits() == b.to_bits());
                if !same_bits {
                    return Some(format!("token {k} has the wrong source for mask {mask:b}"));
                }
            }
        }
    }
    None
}

/// Two-sided p-value of Welch's two-sample t-test on the means.
pub fn welch_p_value(a: &[f64], b: &[f64]) -> f64 {
    let moments = |x: &[f64]| {
        let n = x.len() as f64;
        let mean = x.iter().sum::<f64>() / n;
        let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (n, mean, var)
    };
    let (na, ma, va) = moments(a);
    let (nb, mb, vb) = moments(b);
    let (sa, sb) = (va / na, vb / nb);
    let t = (ma - mb) / (sa + sb).sqrt();
    let df = (sa + sb).powi(2) / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df).unwrap();
    2.0 * (1.0 - dist.cdf(t.abs()))
}

/// Class-balanced logistic regression trained by full-batch gradient
/// descent on standardised features. Returns test accuracy.
pub fn linear_probe_accuracy(train: &[(Vec<f64>, Grade)], test: &[(Vec<f64>, Grade)]) -> f64 {
    let dim = train[0].0.len();
    let n = train.len() as f64;
    let mean: Vec<f64> = (0..dim).map(|j| train.iter().map(|s| s.0[j]).sum::<f64>() / n).collect();
    let sd: Vec<f64> = (0..dim)
        .map(|j| {
            let v = train.iter().map(|s| (s.0[j] - mean[j]).powi(2)).sum::<f64>() / n;
            v.sqrt().max(1e-9)
        })
        .collect();
    let z = |x: &[f64]| -> Vec<f64> { x.iter().enumerate().map(|(j, v)| (v - mean[j]) / sd[j]).collect() };
    let train: Vec<(Vec<f64>, f64)> = train
        .iter()
        .map(|(x, g)| (z(x), if *g == Grade::Kl2 { 1.0 } else { 0.0 }))
        .collect();
    let positives = train.iter().filter(|s| s.1 == 1.0).count() as f64;
    let class_weight = |y: f64| if y == 1.0 { n / (2.0 * positives) } else { n / (2.0 * (n - positives)) };
    let (mut w, mut b) = (vec![0.0; dim], 0.0);
    let (lr, l2) = (0.1, 1e-2);
    for _ in 0..300 {
        let mut gw = vec![0.0; dim];
        let mut gb = 0.0;
        for (x, y) in &train {
            let s = b + x.iter().zip(&w).map(|(a, c)| a * c).sum::<f64>();
            let err = (1.0 / (1.0 + (-s).exp()) - y) * class_weight(*y);
            gb += err;
            for (g, xi) in gw.iter_mut().zip(x) {
                *g += err * xi;
            }
        }
        b -= lr * gb / n;
        for (wi, g) in w.iter_mut().zip(gw) {
            *wi -= lr * (g / n + l2 * *wi);
        }
    }
    let correct = test
        .iter()
        .filter(|(x, g)| {
            let s = b + z(x).iter().zip(&w).map(|(a, c)| a * c).sum::<f64>();
            (s > 0.0) == (*g == Grade::Kl2)
        })
        .count();
    correct as f64 / test.len() as f64
}
