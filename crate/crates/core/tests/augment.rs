mod common;

use common::*;
use proptest::prelude::*;
use rand::Rng;
use sspe_vit::augment::{
    bootstrap_oversample, conventional_augment, exchange_key_patches, make_sspe_plan, pe_dropout_plan,
    shuffle_all_plan, AugmentConfig, KeySet, LabeledGrid, PositionPlan,
};
use sspe_vit::{Error, Grade, Raster};

#[test]
fn sspe_plans_fix_keys_and_permute_the_rest() {
    let mut rng = rng(1);
    for draw in 0..1000 {
        let keys = match draw % 3 {
            0 => KeySet::new(vec![4, 6]),
            1 => KeySet::new(vec![1, 2, 3]),
            _ => KeySet::new(vec![5]),
        }
        .unwrap();
        let plan = make_sspe_plan(9, &keys, &mut rng).unwrap();
        PositionPlan::new(plan.assignment().to_vec()).unwrap();
        for &k in keys.indices() {
            assert_eq!(plan.get(k), k);
        }
    }
}

#[test]
fn sspe_placement_is_uniform() {
    for (keys, seed) in [(vec![4, 6], 10), (vec![1, 2, 3], 11), (vec![7, 8, 9], 12)] {
        let dev = sspe_uniformity_deviation(&KeySet::new(keys).unwrap(), 9, 10_000, seed);
        assert!(dev < 0.02, "deviation {dev}");
    }
}

#[test]
fn shuffle_all_moves_everything_uniformly() {
    let mut rng = rng(3);
    let mut counts = [[0usize; 10]; 10];
    let draws = 20_000;
    for _ in 0..draws {
        let plan = shuffle_all_plan(9, &mut rng);
        for k in 1..=9 {
            counts[k][plan.get(k)] += 1;
        }
    }
    for row in counts.iter().skip(1) {
        for &c in row.iter().skip(1) {
            assert!((c as f64 / draws as f64 - 1.0 / 9.0).abs() < 0.02);
        }
    }
}

#[test]
fn exchange_matches_brute_force() {
    for seed in 0..500 {
        if let Some(v) = exchange_violation(seed) {
            panic!("seed {seed}: {v}");
        }
    }
}

#[test]
fn exchange_rejects_self_and_mismatched_geometry() {
    let mut rng = rng(4);
    let keys = KeySet::default();
    let target = LabeledGrid {
        id: 1,
        tokens: random_tokens(&mut rng, 3, 4),
        grade: Grade::Kl0,
    };
    let twin = target.clone();
    assert!(matches!(
        exchange_key_patches(&target, &[&twin], &keys, false),
        Err(Error::SelfCandidate(_))
    ));
    let odd = LabeledGrid {
        id: 2,
        tokens: random_tokens(&mut rng, 3, 2),
        grade: Grade::Kl2,
    };
    assert!(exchange_key_patches(&target, &[&odd], &keys, false).is_err());
    let far = KeySet::new(vec![10]).unwrap();
    let other = LabeledGrid { id: 3, ..odd.clone() };
    assert!(matches!(
        exchange_key_patches(&target, &[&other], &far, false),
        Err(Error::KeyOutOfRange { .. })
    ));
}

#[test]
fn dedupe_emits_identity_once() {
    let mut rng = rng(5);
    let grid = |id, rng: &mut _| LabeledGrid {
        id,
        tokens: random_tokens(rng, 3, 4),
        grade: Grade::Kl0,
    };
    let target = grid(0, &mut rng);
    let cands: Vec<LabeledGrid> = (1..=3).map(|i| grid(i, &mut rng)).collect();
    let refs: Vec<&LabeledGrid> = cands.iter().collect();
    let out = exchange_key_patches(&target, &refs, &KeySet::default(), true).unwrap();
    assert_eq!(out.len(), 3 * 4 - 2);
    let identical = out.iter().filter(|s| s.tokens == target.tokens).count();
    assert_eq!(identical, 1);
}

#[test]
fn dropout_rate_is_respected_on_non_keys_only() {
    let mut rng = rng(6);
    let keys = KeySet::default();
    for rate in [0.0, 0.2, 0.5] {
        let (mut dropped, mut total) = (0usize, 0usize);
        for _ in 0..5000 {
            let plan = make_sspe_plan(9, &keys, &mut rng).unwrap();
            let d = pe_dropout_plan(&plan, &keys, rate, &mut rng).unwrap();
            for (i, s) in d.slots().iter().enumerate() {
                if keys.contains(i + 1) {
                    assert_eq!(*s, Some(i + 1));
                } else {
                    total += 1;
                    dropped += usize::from(s.is_none());
                }
            }
        }
        assert!((dropped as f64 / total as f64 - rate).abs() < 0.01);
    }
    let plan = PositionPlan::identity(9);
    assert!(pe_dropout_plan(&plan, &keys, 1.0, &mut rng).is_err());
}

#[test]
fn oversampling_balances_and_keeps_originals() {
    let mut rng = rng(7);
    let items: Vec<(u32, Grade)> = (0..50).map(|i| (i, if i < 35 { Grade::Kl0 } else { Grade::Kl2 })).collect();
    let out = bootstrap_oversample(&items, |x| x.1, &mut rng).unwrap();
    assert_eq!(&out[..50], &items[..]);
    assert_eq!(out.len(), 70);
    assert!(out[50..].iter().all(|x| x.1 == Grade::Kl2));
}

#[test]
fn identity_augment_is_a_no_op() {
    let mut rng = rng(8);
    let img = Raster::new(16, 16, (0..256).map(|_| rng.gen()).collect()).unwrap();
    let out = conventional_augment(&img, &mut rng, &AugmentConfig::identity());
    assert_eq!(out, img);
}

proptest! {
    #[test]
    fn augment_stays_in_unit_range(seed in 0u64..1000, side in 4usize..24) {
        let mut rng = rng(seed);
        let img = Raster::new(side, side, (0..side * side).map(|_| rng.gen()).collect()).unwrap();
        let cfg = AugmentConfig { rotation_degrees: 30.0, brightness: (0.5, 1.5), contrast: (0.5, 1.5) };
        let out = conventional_augment(&img, &mut rng, &cfg);
        prop_assert_eq!((out.width(), out.height()), (side, side));
        prop_assert!(out.pixels().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn sspe_plan_is_a_permutation(seed in 0u64..10_000, mask in 1u16..512) {
        let keys: Vec<usize> = (1..=9).filter(|k| mask >> (k - 1) & 1 == 1).collect();
        let keys = KeySet::new(keys).unwrap();
        let plan = make_sspe_plan(9, &keys, &mut rng(seed)).unwrap();
        let mut rows = plan.assignment().to_vec();
        rows.sort_unstable();
        prop_assert_eq!(rows, (1..=9).collect::<Vec<_>>());
        for &k in keys.indices() {
            prop_assert_eq!(plan.get(k), k);
        }
    }
}
