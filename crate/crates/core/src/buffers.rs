//! Reduction on caller-owned contiguous buffers with string-keyed options.
//!
//! This is the surface an in-process language binding wraps. It performs no
//! numeric work of its own: the buffers are validated, copied into grids and
//! handed to [`pipeline::reduce`](crate::pipeline::reduce), so results match
//! the command-line tool bit for bit.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::grid::{LatentGrid, ProjectionMatrix, TokenGrid};
use crate::guidance::{SideInputs, Strategy};
use crate::merging::MergeReport;
use crate::pipeline::{reduce, ReductionConfig, ReductionInput};

/// Read-only `(height, width, dim)` view over row-major `f32` data.
#[derive(Debug, Clone, Copy)]
pub struct BufferView<'a> {
    pub height: usize,
    pub width: usize,
    pub dim: usize,
    pub data: &'a [f32],
}

impl<'a> BufferView<'a> {
    pub fn new(height: usize, width: usize, dim: usize, data: &'a [f32]) -> Self {
        Self {
            height,
            width,
            dim,
            data,
        }
    }
}

/// Optional side buffers.
#[derive(Debug, Clone, Copy, Default)]
pub struct SideBuffers<'a> {
    /// `n_text x d_u`, row-major.
    pub text: Option<&'a [f32]>,
    /// One value per token.
    pub attention: Option<&'a [f32]>,
    /// `d_z x d_u`, row-major.
    pub projection: Option<&'a [f32]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BufferResult {
    pub retained: Vec<usize>,
    /// Newly allocated `K x dim` merged features.
    pub merged: Vec<f32>,
    pub dim: usize,
    pub scores: Vec<f64>,
    pub assignment: Vec<(usize, usize)>,
    pub report: MergeReport,
}

pub fn version() -> &'static str {
    env!("CARGO_PKG_VERSION")
}

/// Parses `rho`, `kmin`, `lambda`, `strategy` and `seed`; other keys are rejected.
pub fn parse_options(options: &BTreeMap<String, String>) -> Result<ReductionConfig> {
    fn num<T: std::str::FromStr>(field: &'static str, v: &str) -> Result<T> {
        v.trim()
            .parse()
            .map_err(|_| Error::config(field, format!("cannot parse `{v}`")))
    }
    let mut cfg = ReductionConfig::default();
    for (key, value) in options {
        match key.as_str() {
            "rho" => cfg.rho = num("rho", value)?,
            "kmin" => cfg.k_min = num("kmin", value)?,
            "lambda" => cfg.lambda = num("lambda", value)?,
            "seed" => cfg.seed = num("seed", value)?,
            "strategy" => cfg.strategy = value.parse::<Strategy>()?,
            _ => return Err(Error::config("options", format!("unknown option `{key}`"))),
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn reduce_buffers(
    tokens: BufferView<'_>,
    latents: BufferView<'_>,
    side: SideBuffers<'_>,
    options: &BTreeMap<String, String>,
) -> Result<BufferResult> {
    let cfg = parse_options(options)?;
    let token_grid = TokenGrid::new(
        tokens.height,
        tokens.width,
        tokens.dim,
        tokens.data.to_vec(),
    )?;
    let latent_grid = LatentGrid::new(
        latents.height,
        latents.width,
        latents.dim,
        latents.data.to_vec(),
    )?;
    let d_u = tokens.dim;
    let text_embeddings = match side.text {
        Some(t) if t.len() % d_u != 0 => {
            return Err(Error::DimensionMismatch {
                what: "text buffer length (multiple of d_u)",
                expected: t.len() / d_u * d_u,
                actual: t.len(),
            })
        }
        Some(t) => Some(t.chunks_exact(d_u).map(<[f32]>::to_vec).collect()),
        None => None,
    };
    let side_inputs = SideInputs {
        text_embeddings,
        attention_importance: side.attention.map(<[f32]>::to_vec),
    };
    let projection = side
        .projection
        .map(|p| ProjectionMatrix::new(latents.dim, d_u, p.to_vec()))
        .transpose()?;
    let input = ReductionInput::new(&token_grid, &latent_grid, &side_inputs)
        .with_projection(projection.as_ref());
    let r = reduce(&input, &cfg)?;
    Ok(BufferResult {
        retained: r.retained.indices().to_vec(),
        merged: r.compressed.features().to_vec(),
        dim: d_u,
        scores: r.scores.into_inner(),
        assignment: r.assignment.pairs().to_vec(),
        report: r.report,
    })
}
