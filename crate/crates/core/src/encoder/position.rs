use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PeKind {
    None,
    #[serde(rename = "1d")]
    Sinusoidal1d,
    #[serde(rename = "2d")]
    Grid2d,
    Relative,
}

impl PeKind {
    pub fn is_absolute(self) -> bool {
        matches!(self, PeKind::Sinusoidal1d | PeKind::Grid2d)
    }

    pub fn label(self) -> &'static str {
        match self {
            PeKind::None => "none",
            PeKind::Sinusoidal1d => "1d",
            PeKind::Grid2d => "2d",
            PeKind::Relative => "relative",
        }
    }
}

impl std::str::FromStr for PeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(PeKind::None),
            "1d" | "sinusoidal-1d" => Ok(PeKind::Sinusoidal1d),
            "2d" | "grid-2d" => Ok(PeKind::Grid2d),
            "relative" => Ok(PeKind::Relative),
            other => Err(Error::Config(format!("unknown position embedding kind {other:?}"))),
        }
    }
}

/// Position embedding table.
///
/// Absolute kinds hold `P + 1` rows of width `d`, row 0 belonging to the
/// class token. The relative kind holds one row per 2-D offset between grid
/// cells plus a final row shared by every pair involving the class token (or
/// a token whose position was dropped); each column is the additive
/// attention-logit bias for one head.
#[derive(Clone, Debug, PartialEq)]
pub struct PositionTable {
    kind: PeKind,
    table: Matrix,
    grid_rows: usize,
    grid_cols: usize,
}

impl PositionTable {
    pub fn none(grid_rows: usize, grid_cols: usize) -> Self {
        PositionTable {
            kind: PeKind::None,
            table: Matrix::zeros(0, 0),
            grid_rows,
            grid_cols,
        }
    }

    pub(crate) fn from_parts(kind: PeKind, table: Matrix, grid_rows: usize, grid_cols: usize) -> Self {
        PositionTable {
            kind,
            table,
            grid_rows,
            grid_cols,
        }
    }

    pub fn kind(&self) -> PeKind {
        self.kind
    }

    pub fn table(&self) -> &Matrix {
        &self.table
    }

    pub(crate) fn table_mut(&mut self) -> &mut Matrix {
        &mut self.table
    }

    pub fn grid(&self) -> (usize, usize) {
        (self.grid_rows, self.grid_cols)
    }

    /// Row of the relative table for the offset between two zero-based cells.
    pub fn offset_row(&self, from: (usize, usize), to: (usize, usize)) -> usize {
        let dr = from.0 + self.grid_rows - 1 - to.0;
        let dc = from.1 + self.grid_cols - 1 - to.1;
        dr * (2 * self.grid_cols - 1) + dc
    }

    /// Row of the relative table shared by the class token.
    pub fn class_offset_row(&self) -> usize {
        (2 * self.grid_rows - 1) * (2 * self.grid_cols - 1)
    }
}

/// Sinusoidal value for position `i`, dimension `j` of a `d`-wide table.
#[inline]
pub fn sinusoidal_entry(i: usize, j: usize, d: usize) -> f64 {
    let i = i as f64;
    let d = d as f64;
    if j.is_multiple_of(2) {
        (i / 10000f64.powf(2.0 * j as f64 / d)).sin()
    } else {
        (i / 10000f64.powf(2.0 * (j as f64 - 1.0) / d)).cos()
    }
}

fn sinusoidal_matrix(num_positions: usize, d: usize) -> Result<Matrix> {
    if d == 0 || !d.is_multiple_of(2) {
        return Err(Error::invalid(format!("embedding width {d} must be even")));
    }
    Ok(Matrix::from_fn(num_positions, d, |i, j| sinusoidal_entry(i, j, d)))
}

/// Fixed 1-D sinusoidal table with `num_positions` rows (row 0 is the class token).
pub fn sinusoidal_pe(num_positions: usize, d: usize) -> Result<PositionTable> {
    let table = sinusoidal_matrix(num_positions, d)?;
    Ok(PositionTable::from_parts(PeKind::Sinusoidal1d, table, 1, num_positions.saturating_sub(1)))
}

/// 2-D table: the first `d/2` columns encode the grid row, the last `d/2`
/// the grid column. Row 0 (class token) is zero.
pub fn grid_2d_pe(grid_rows: usize, grid_cols: usize, d: usize) -> Result<PositionTable> {
    if d == 0 || !d.is_multiple_of(4) {
        return Err(Error::invalid(format!("2-D embedding width {d} must be divisible by 4")));
    }
    let half = d / 2;
    let rows = sinusoidal_matrix(grid_rows, half)?;
    let cols = sinusoidal_matrix(grid_cols, half)?;
    let mut table = Matrix::zeros(grid_rows * grid_cols + 1, d);
    for r in 0..grid_rows {
        for c in 0..grid_cols {
            let out = table.row_mut(1 + r * grid_cols + c);
            out[..half].copy_from_slice(rows.row(r));
            out[half..].copy_from_slice(cols.row(c));
        }
    }
    Ok(PositionTable::from_parts(PeKind::Grid2d, table, grid_rows, grid_cols))
}

/// Learnable relative-offset bias table, initialised from `N(0, 0.02²)`.
pub fn relative_pe<R: Rng + ?Sized>(
    grid_rows: usize,
    grid_cols: usize,
    heads: usize,
    rng: &mut R,
) -> Result<PositionTable> {
    if grid_rows == 0 || grid_cols == 0 || heads == 0 {
        return Err(Error::invalid("relative table needs a non-empty grid and at least one head"));
    }
    let offsets = (2 * grid_rows - 1) * (2 * grid_cols - 1);
    let normal = Normal::new(0.0, 0.02).expect("valid sd");
    let table = Matrix::from_fn(offsets + 1, heads, |_, _| normal.sample(rng));
    Ok(PositionTable::from_parts(PeKind::Relative, table, grid_rows, grid_cols))
}
