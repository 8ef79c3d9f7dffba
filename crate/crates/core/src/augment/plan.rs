use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Token indices (1-based) whose content carries the class signal.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct KeySet(Vec<usize>);

impl KeySet {
    pub fn new(mut indices: Vec<usize>) -> Result<Self> {
        indices.sort_unstable();
        indices.dedup();
        if indices.is_empty() {
            return Err(Error::invalid("key set must not be empty"));
        }
        if indices[0] == 0 {
            return Err(Error::KeyOutOfRange {
                index: 0,
                positions: 0,
            });
        }
        Ok(KeySet(indices))
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, k: usize) -> bool {
        self.0.binary_search(&k).is_ok()
    }

    pub fn check_range(&self, positions: usize) -> Result<()> {
        match self.0.iter().find(|&&k| k > positions) {
            Some(&index) => Err(Error::KeyOutOfRange { index, positions }),
            None => Ok(()),
        }
    }

    /// Concatenated digits, e.g. `46` for `{4, 6}`.
    pub fn label(&self) -> String {
        self.0.iter().map(|k| k.to_string()).collect::<Vec<_>>().join("")
    }
}

impl Default for KeySet {
    fn default() -> Self {
        KeySet(vec![4, 6])
    }
}

impl TryFrom<Vec<usize>> for KeySet {
    type Error = Error;

    fn try_from(v: Vec<usize>) -> Result<Self> {
        KeySet::new(v)
    }
}

impl From<KeySet> for Vec<usize> {
    fn from(k: KeySet) -> Self {
        k.0
    }
}

/// Assignment of position-embedding rows to tokens: token `#k` receives
/// row `assignment[k-1]`. Rows are 1-based; row 0 belongs to the class token.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PositionPlan {
    assignment: Vec<usize>,
}

impl PositionPlan {
    pub fn new(assignment: Vec<usize>) -> Result<Self> {
        let p = assignment.len();
        let mut seen = vec![false; p + 1];
        for &row in &assignment {
            if row == 0 || row > p || std::mem::replace(&mut seen[row], true) {
                return Err(Error::NotAPermutation(format!(
                    "{assignment:?} is not a permutation of 1..={p}"
                )));
            }
        }
        Ok(PositionPlan { assignment })
    }

    pub fn identity(positions: usize) -> Self {
        PositionPlan {
            assignment: (1..=positions).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }

    /// Row given to 1-based token `k`.
    pub fn get(&self, k: usize) -> usize {
        self.assignment[k - 1]
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn is_identity(&self) -> bool {
        self.assignment.iter().enumerate().all(|(i, &r)| r == i + 1)
    }

    pub fn slots(&self) -> Vec<Option<usize>> {
        self.assignment.iter().copied().map(Some).collect()
    }

    /// FNV-1a hash of the assignment, for logging.
    pub fn fingerprint(&self) -> u64 {
        self.assignment.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, &r| {
            (h ^ r as u64).wrapping_mul(0x0000_0100_0000_01b3)
        })
    }
}

/// Keeps every key token on its own row and draws a uniform random
/// permutation of the remaining rows over the remaining tokens.
pub fn make_sspe_plan<R: Rng + ?Sized>(positions: usize, key_set: &KeySet, rng: &mut R) -> Result<PositionPlan> {
    key_set.check_range(positions)?;
    let free: Vec<usize> = (1..=positions).filter(|k| !key_set.contains(*k)).collect();
    let mut rows = free.clone();
    rows.shuffle(rng);
    let mut assignment: Vec<usize> = (1..=positions).collect();
    for (slot, row) in free.into_iter().zip(rows) {
        assignment[slot - 1] = row;
    }
    Ok(PositionPlan { assignment })
}

/// Uniform random permutation of every row.
pub fn shuffle_all_plan<R: Rng + ?Sized>(positions: usize, rng: &mut R) -> PositionPlan {
    let mut assignment: Vec<usize> = (1..=positions).collect();
    assignment.shuffle(rng);
    PositionPlan { assignment }
}

/// Plan in which some tokens receive no position embedding at all.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DroppedPlan {
    slots: Vec<Option<usize>>,
}

impl DroppedPlan {
    pub fn slots(&self) -> &[Option<usize>] {
        &self.slots
    }

    pub fn dropped(&self) -> usize {
        self.slots.iter().filter(|s| s.is_none()).count()
    }
}

/// Independently drops each non-key token's position row with probability `rate`.
pub fn pe_dropout_plan<R: Rng + ?Sized>(
    plan: &PositionPlan,
    key_set: &KeySet,
    rate: f64,
    rng: &mut R,
) -> Result<DroppedPlan> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::invalid(format!("dropout rate {rate} outside [0, 1)")));
    }
    key_set.check_range(plan.len())?;
    let slots = plan
        .assignment
        .iter()
        .enumerate()
        .map(|(i, &row)| {
            // Draw for every non-key slot so the stream does not depend on rate.
            if key_set.contains(i + 1) {
                Some(row)
            } else if rng.gen::<f64>() < rate {
                None
            } else {
                Some(row)
            }
        })
        .collect();
    Ok(DroppedPlan { slots })
}
