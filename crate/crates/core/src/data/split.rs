use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grade::Grade;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::Config(format!("unknown split {other:?}"))),
        }
    }
}

/// Train/validation/test proportions as positive integers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitRatio {
    pub train: u32,
    pub val: u32,
    pub test: u32,
}

impl Default for SplitRatio {
    fn default() -> Self {
        SplitRatio {
            train: 7,
            val: 1,
            test: 2,
        }
    }
}

/// Minimum members per class for a stratified split.
pub const MIN_CLASS_SIZE: usize = 10;

/// Stratified random split. Within each grade, validation and test sizes are
/// `floor(n * share)` and the remainder goes to training. Output order
/// follows the input.
pub fn split_dataset<R: Rng + ?Sized>(
    entries: &[(u64, Grade)],
    ratio: SplitRatio,
    rng: &mut R,
) -> Result<Vec<(u64, Grade, Split)>> {
    if ratio.train == 0 || ratio.val == 0 || ratio.test == 0 {
        return Err(Error::invalid("split ratio parts must be positive"));
    }
    let total = (ratio.train + ratio.val + ratio.test) as usize;
    let mut split = vec![Split::Train; entries.len()];
    for grade in [Grade::Kl0, Grade::Kl2] {
        let mut members: Vec<usize> = (0..entries.len()).filter(|&i| entries[i].1 == grade).collect();
        if members.is_empty() {
            continue;
        }
        if members.len() < MIN_CLASS_SIZE {
            return Err(Error::invalid(format!(
                "class {grade} has {} items, need at least {MIN_CLASS_SIZE}",
                members.len()
            )));
        }
        members.shuffle(rng);
        let n = members.len();
        let n_val = n * ratio.val as usize / total;
        let n_test = n * ratio.test as usize / total;
        for &i in &members[..n_val] {
            split[i] = Split::Val;
        }
        for &i in &members[n_val..n_val + n_test] {
            split[i] = Split::Test;
        }
    }
    Ok(entries
        .iter()
        .zip(split)
        .map(|(&(id, g), s)| (id, g, s))
        .collect())
}
