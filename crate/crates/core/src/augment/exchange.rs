use serde::Serialize;

use super::plan::KeySet;
use crate::encoder::TokenGrid;
use crate::error::{Error, Result};
use crate::grade::Grade;

/// A token grid with its sample id and grade.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledGrid {
    pub id: u64,
    pub tokens: TokenGrid,
    pub grade: Grade,
}

/// Whether a sequence's key patches share one grade.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SetTag {
    FullKl,
    MixedKl,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum KeySource {
    Target,
    Candidate,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Provenance {
    pub target: u64,
    pub candidate: Option<u64>,
    /// `(key index, source)` for every key slot.
    pub key_sources: Vec<(usize, KeySource)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledSequence {
    pub tokens: TokenGrid,
    pub label: Grade,
    pub set_tag: SetTag,
    pub provenance: Provenance,
}

/// KL-0 iff every key patch is KL-0, KL-2 otherwise.
pub fn assign_label(key_labels: &[Grade]) -> Grade {
    if key_labels.iter().all(|&g| g == Grade::Kl0) {
        Grade::Kl0
    } else {
        Grade::Kl2
    }
}

fn set_tag(key_labels: &[Grade]) -> SetTag {
    if key_labels.windows(2).all(|w| w[0] == w[1]) {
        SetTag::FullKl
    } else {
        SetTag::MixedKl
    }
}

/// The target itself as a sequence (no exchange).
pub fn original_sequence(target: &LabeledGrid, key_set: &KeySet) -> LabeledSequence {
    LabeledSequence {
        tokens: target.tokens.clone(),
        label: target.grade,
        set_tag: SetTag::FullKl,
        provenance: Provenance {
            target: target.id,
            candidate: None,
            key_sources: key_set.indices().iter().map(|&k| (k, KeySource::Target)).collect(),
        },
    }
}

/// Fills every key slot from either the target or a candidate, at the same
/// token index, for every candidate and every one of the `2^|keys|` source
/// combinations. Non-key tokens always come from the target.
///
/// With `dedupe_identity` the all-target combination is emitted once rather
/// than once per candidate.
pub fn exchange_key_patches(
    target: &LabeledGrid,
    candidates: &[&LabeledGrid],
    key_set: &KeySet,
    dedupe_identity: bool,
) -> Result<Vec<LabeledSequence>> {
    key_set.check_range(target.tokens.positions())?;
    let keys = key_set.indices();
    if keys.len() >= usize::BITS as usize {
        return Err(Error::invalid("too many key patches"));
    }
    for c in candidates {
        if !c.tokens.same_geometry(&target.tokens) {
            return Err(Error::shape(format!(
                "candidate {} geometry differs from target {}",
                c.id, target.id
            )));
        }
        if c.id == target.id {
            return Err(Error::SelfCandidate(c.id.to_string()));
        }
    }
    let combos = 1usize << keys.len();
    let mut out = Vec::with_capacity(candidates.len() * combos);
    for (ci, cand) in candidates.iter().enumerate() {
        for mask in 0..combos {
            if mask == 0 && dedupe_identity && ci > 0 {
                continue;
            }
            let mut tokens = target.tokens.clone();
            let mut grades = Vec::with_capacity(keys.len());
            let mut sources = Vec::with_capacity(keys.len());
            for (bit, &k) in keys.iter().enumerate() {
                if mask >> bit & 1 == 1 {
                    tokens.copy_token_from(&cand.tokens, k);
                    grades.push(cand.grade);
                    sources.push((k, KeySource::Candidate));
                } else {
                    grades.push(target.grade);
                    sources.push((k, KeySource::Target));
                }
            }
            out.push(LabeledSequence {
                tokens,
                label: assign_label(&grades),
                set_tag: set_tag(&grades),
                provenance: Provenance {
                    target: target.id,
                    candidate: Some(cand.id),
                    key_sources: sources,
                },
            });
        }
    }
    Ok(out)
}
