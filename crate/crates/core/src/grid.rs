//! Feature grids and the geometry shared by every reduction stage.
//!
//! Understanding-side tokens, raw VAE latents and pooled latent anchors are
//! all row-major `height x width` grids of `dim`-long `f32` vectors. They share
//! one representation, [`Grid`], tagged with a zero-sized marker so the three
//! roles cannot be mixed up at call sites.

use std::fmt;
use std::marker::PhantomData;

use crate::error::{Error, Result};

/// Marker for understanding-encoder tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tokens {}

/// Marker for raw generation-branch (VAE) latents.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Latents {}

/// Marker for 2x2-pooled latent anchors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Anchors {}

pub type TokenGrid = Grid<Tokens>;
pub type LatentGrid = Grid<Latents>;
pub type AnchorGrid = Grid<Anchors>;

#[derive(Clone, PartialEq)]
pub struct Grid<K> {
    height: usize,
    width: usize,
    dim: usize,
    data: Vec<f32>,
    _kind: PhantomData<K>,
}

impl<K> fmt::Debug for Grid<K> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid")
            .field("height", &self.height)
            .field("width", &self.width)
            .field("dim", &self.dim)
            .field("len", &self.data.len())
            .finish()
    }
}

impl<K> Grid<K> {
    pub fn new(height: usize, width: usize, dim: usize, data: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 || dim == 0 {
            return Err(Error::InvalidShape {
                what: "grid",
                reason: format!("dimensions must be >= 1, got {height}x{width}x{dim}"),
            });
        }
        let expected = height
            .checked_mul(width)
            .and_then(|n| n.checked_mul(dim))
            .ok_or_else(|| Error::InvalidShape {
                what: "grid",
                reason: "element count overflows".into(),
            })?;
        if data.len() != expected {
            return Err(Error::DimensionMismatch {
                what: "grid data length",
                expected,
                actual: data.len(),
            });
        }
        Ok(Self {
            height,
            width,
            dim,
            data,
            _kind: PhantomData,
        })
    }

    /// Builds a grid from row-major vectors.
    pub fn from_vectors(height: usize, width: usize, vectors: &[Vec<f32>]) -> Result<Self> {
        let dim = vectors.first().map_or(0, Vec::len);
        if let Some(bad) = vectors.iter().find(|v| v.len() != dim) {
            return Err(Error::DimensionMismatch {
                what: "grid vector",
                expected: dim,
                actual: bad.len(),
            });
        }
        Self::new(height, width, dim, vectors.concat())
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of cells (`height * width`).
    pub fn len(&self) -> usize {
        self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn vector(&self, index: usize) -> &[f32] {
        &self.data[index * self.dim..(index + 1) * self.dim]
    }

    pub fn at(&self, row: usize, col: usize) -> &[f32] {
        self.vector(row * self.width + col)
    }

    pub fn vectors(&self) -> impl ExactSizeIterator<Item = &[f32]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    /// Grid position `(row, col)` of a flat index.
    pub fn position(&self, index: usize) -> (usize, usize) {
        (index / self.width, index % self.width)
    }

    fn retag<K2>(self) -> Grid<K2> {
        Grid {
            height: self.height,
            width: self.width,
            dim: self.dim,
            data: self.data,
            _kind: PhantomData,
        }
    }
}

/// Cell of the anchor grid a token maps to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AnchorCoord {
    pub row: usize,
    pub col: usize,
}

/// Dense linear map applied to row vectors: `v (len rows) -> v * M (len cols)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

impl ProjectionMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidShape {
                what: "projection",
                reason: format!("dimensions must be >= 1, got {rows}x{cols}"),
            });
        }
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                what: "projection data length",
                expected: rows * cols,
                actual: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn identity(n: usize) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
        }
        Self {
            rows: n,
            cols: n,
            data,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn project_vector(&self, v: &[f32], out: &mut Vec<f32>) {
        debug_assert_eq!(v.len(), self.rows);
        let mut acc = vec![0.0f64; self.cols];
        for (r, &x) in v.iter().enumerate() {
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            for (a, &m) in acc.iter_mut().zip(row) {
                *a += f64::from(x) * f64::from(m);
            }
        }
        out.extend(acc.into_iter().map(|a| a as f32));
    }

    /// Projects every vector of a grid.
    pub fn apply<K>(&self, grid: &Grid<K>) -> Result<Grid<K>> {
        if grid.dim != self.rows {
            return Err(Error::DimensionMismatch {
                what: "projection input dim",
                expected: self.rows,
                actual: grid.dim,
            });
        }
        let mut data = Vec::with_capacity(grid.len() * self.cols);
        for v in grid.vectors() {
            self.project_vector(v, &mut data);
        }
        Grid::new(grid.height, grid.width, self.cols, data)
    }
}

/// Averages non-overlapping 2x2 windows of the latent grid into anchors.
///
/// Odd-sized grids keep a partial window on the bottom/right edge, averaged
/// over the cells that exist.
pub fn pool_latents(latents: &LatentGrid) -> AnchorGrid {
    let out_h = latents.height.div_ceil(2);
    let out_w = latents.width.div_ceil(2);
    let dim = latents.dim;
    let mut data = Vec::with_capacity(out_h * out_w * dim);
    let mut acc = vec![0.0f64; dim];
    for gr in 0..out_h {
        for gc in 0..out_w {
            acc.iter_mut().for_each(|a| *a = 0.0);
            let mut count = 0u32;
            for r in (2 * gr)..(2 * gr + 2).min(latents.height) {
                for c in (2 * gc)..(2 * gc + 2).min(latents.width) {
                    for (a, &x) in acc.iter_mut().zip(latents.at(r, c)) {
                        *a += f64::from(x);
                    }
                    count += 1;
                }
            }
            let n = f64::from(count);
            data.extend(acc.iter().map(|a| (a / n) as f32));
        }
    }
    Grid {
        height: out_h,
        width: out_w,
        dim,
        data,
        _kind: PhantomData,
    }
}

/// Brings anchors to the token feature width.
///
/// Without a projection the anchors must already have `token_dim` features
/// and are returned unchanged.
pub fn align_anchors(
    anchors: AnchorGrid,
    proj: Option<&ProjectionMatrix>,
    token_dim: usize,
) -> Result<AnchorGrid> {
    match proj {
        None if anchors.dim == token_dim => Ok(anchors),
        None => Err(Error::DimensionMismatch {
            what: "anchor dim (no projection)",
            expected: token_dim,
            actual: anchors.dim,
        }),
        Some(p) if p.cols != token_dim => Err(Error::DimensionMismatch {
            what: "projection output dim",
            expected: token_dim,
            actual: p.cols,
        }),
        Some(p) => p.apply(&anchors),
    }
}

/// Anchor cell for the token at `(row, col)` of a `token_h x token_w` grid.
pub fn map_token_to_anchor(
    row: usize,
    col: usize,
    token_h: usize,
    token_w: usize,
    anchor_h: usize,
    anchor_w: usize,
) -> AnchorCoord {
    debug_assert!(row < token_h && col < token_w);
    AnchorCoord {
        row: row * anchor_h / token_h,
        col: col * anchor_w / token_w,
    }
}

/// Anchor cell of every token, in token index order.
pub fn anchor_map(tokens: &TokenGrid, anchor_h: usize, anchor_w: usize) -> Vec<AnchorCoord> {
    (0..tokens.len())
        .map(|i| {
            let (p, q) = tokens.position(i);
            map_token_to_anchor(p, q, tokens.height, tokens.width, anchor_h, anchor_w)
        })
        .collect()
}

impl TokenGrid {
    /// Reinterprets the grid as anchors, e.g. when a host already supplies pooled anchors.
    pub fn into_anchors(self) -> AnchorGrid {
        self.retag()
    }
}

impl LatentGrid {
    pub fn into_anchors_unpooled(self) -> AnchorGrid {
        self.retag()
    }
}
