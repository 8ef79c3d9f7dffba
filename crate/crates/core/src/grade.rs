use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Kellgren-Lawrence grade; only the two classes used here.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Grade {
    #[serde(rename = "KL-0")]
    Kl0,
    #[serde(rename = "KL-2")]
    Kl2,
}

impl Grade {
    /// Class index: KL-0 is 0, KL-2 is 1 (the positive class).
    pub fn index(self) -> usize {
        match self {
            Grade::Kl0 => 0,
            Grade::Kl2 => 1,
        }
    }

    pub fn from_index(i: usize) -> Grade {
        if i == 0 {
            Grade::Kl0
        } else {
            Grade::Kl2
        }
    }

    pub fn one_hot(self) -> [f64; 2] {
        match self {
            Grade::Kl0 => [1.0, 0.0],
            Grade::Kl2 => [0.0, 1.0],
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Grade::Kl0 => "KL-0",
            Grade::Kl2 => "KL-2",
        }
    }
}

impl std::fmt::Display for Grade {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Grade {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "KL-0" | "0" => Ok(Grade::Kl0),
            "KL-2" | "2" => Ok(Grade::Kl2),
            other => Err(Error::invalid(format!("unknown grade {other:?}"))),
        }
    }
}
