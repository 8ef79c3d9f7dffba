use crate::error::{Error, Result};
use crate::numerics::Matrix;
use crate::raster::Raster;

/// An image cut into non-overlapping square patches, one token per row in
/// raster order. Token `#k` (1-based) sits at grid cell
/// `((k-1) / grid_cols, (k-1) % grid_cols)`.
#[derive(Clone, Debug, PartialEq)]
pub struct TokenGrid {
    grid_rows: usize,
    grid_cols: usize,
    patch_pixels: usize,
    tokens: Matrix,
}

impl TokenGrid {
    pub fn new(grid_rows: usize, grid_cols: usize, patch_pixels: usize, tokens: Matrix) -> Result<Self> {
        if tokens.shape() != (grid_rows * grid_cols, patch_pixels * patch_pixels) {
            return Err(Error::shape(format!(
                "token matrix {:?} does not fit a {grid_rows}x{grid_cols} grid of {patch_pixels}px patches",
                tokens.shape()
            )));
        }
        Ok(TokenGrid {
            grid_rows,
            grid_cols,
            patch_pixels,
            tokens,
        })
    }

    pub fn grid_rows(&self) -> usize {
        self.grid_rows
    }

    pub fn grid_cols(&self) -> usize {
        self.grid_cols
    }

    pub fn patch_pixels(&self) -> usize {
        self.patch_pixels
    }

    /// Number of patch tokens, `P`.
    pub fn positions(&self) -> usize {
        self.grid_rows * self.grid_cols
    }

    pub fn tokens(&self) -> &Matrix {
        &self.tokens
    }

    /// Zero-based grid cell of 1-based token `k`.
    pub fn cell_of(&self, k: usize) -> (usize, usize) {
        ((k - 1) / self.grid_cols, (k - 1) % self.grid_cols)
    }

    /// Pixels of 1-based token `k`.
    pub fn token(&self, k: usize) -> &[f64] {
        self.tokens.row(k - 1)
    }

    pub fn same_geometry(&self, other: &TokenGrid) -> bool {
        self.grid_rows == other.grid_rows
            && self.grid_cols == other.grid_cols
            && self.patch_pixels == other.patch_pixels
    }

    /// Overwrites token `k` (1-based) with the same token of `source`.
    pub fn copy_token_from(&mut self, source: &TokenGrid, k: usize) {
        self.tokens.row_mut(k - 1).copy_from_slice(source.token(k));
    }

    /// Reorders tokens so that new token `i` is old token `order[i]` (both 1-based).
    pub fn permuted(&self, order: &[usize]) -> Result<TokenGrid> {
        if order.len() != self.positions() {
            return Err(Error::shape("permutation length differs from token count"));
        }
        let mut tokens = Matrix::zeros(self.tokens.rows(), self.tokens.cols());
        for (i, &src) in order.iter().enumerate() {
            tokens.row_mut(i).copy_from_slice(self.token(src));
        }
        TokenGrid::new(self.grid_rows, self.grid_cols, self.patch_pixels, tokens)
    }
}

/// Cuts `image` into `patch_pixels`-square tiles in row-major order.
pub fn embed_patches(image: &Raster, patch_pixels: usize) -> Result<TokenGrid> {
    let (w, h) = (image.width(), image.height());
    if patch_pixels == 0 || w % patch_pixels != 0 || h % patch_pixels != 0 || w == 0 || h == 0 {
        return Err(Error::shape(format!(
            "{w}x{h} image is not divisible into {patch_pixels}px patches"
        )));
    }
    let (grid_rows, grid_cols) = (h / patch_pixels, w / patch_pixels);
    let area = patch_pixels * patch_pixels;
    let mut tokens = Matrix::zeros(grid_rows * grid_cols, area);
    for gr in 0..grid_rows {
        for gc in 0..grid_cols {
            let row = tokens.row_mut(gr * grid_cols + gc);
            for py in 0..patch_pixels {
                for px in 0..patch_pixels {
                    let v = image.get(gc * patch_pixels + px, gr * patch_pixels + py);
                    row[py * patch_pixels + px] = v.clamp(0.0, 1.0);
                }
            }
        }
    }
    TokenGrid::new(grid_rows, grid_cols, patch_pixels, tokens)
}
