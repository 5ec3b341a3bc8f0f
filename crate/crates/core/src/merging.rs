//! Folding removed tokens into their nearest retained neighbour, plus the
//! reconstruction-error bookkeeping used to compare merging with plain pruning.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::TokenGrid;
use crate::guidance::{cosine_from_parts, ScoreVector};
use crate::selection::RetainedSet;

/// Removed token -> retained token it was folded into, ordered by removed index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MergeAssignment {
    pairs: Vec<(usize, usize)>,
}

impl MergeAssignment {
    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn target_of(&self, removed: usize) -> Option<usize> {
        self.pairs
            .binary_search_by_key(&removed, |&(i, _)| i)
            .ok()
            .map(|p| self.pairs[p].1)
    }

    /// Checks that the assignment covers exactly the complement of `retained`
    /// and only points at retained tokens.
    pub fn validate(&self, retained: &RetainedSet, n_tokens: usize) -> Result<()> {
        let removed = retained.complement(n_tokens);
        if removed.len() != self.pairs.len()
            || removed.iter().zip(&self.pairs).any(|(&r, &(i, _))| r != i)
        {
            return Err(Error::config(
                "assignment",
                "domain must be exactly the removed tokens",
            ));
        }
        if let Some(&(i, j)) = self.pairs.iter().find(|&&(_, j)| !retained.contains(j)) {
            return Err(Error::config(
                "assignment",
                format!("token {i} is assigned to {j}, which is not retained"),
            ));
        }
        Ok(())
    }
}

/// Merged retained tokens, in ascending retained-index order.
#[derive(Debug, Clone, PartialEq)]
pub struct CompressedTokens {
    indices: Vec<usize>,
    dim: usize,
    features: Vec<f32>,
    lambda: f64,
}

impl CompressedTokens {
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Flat `K x dim` feature buffer.
    pub fn features(&self) -> &[f32] {
        &self.features
    }

    pub fn feature(&self, j: usize) -> &[f32] {
        &self.features[j * self.dim..(j + 1) * self.dim]
    }

    /// Merged vector of the retained token with original index `index`.
    pub fn feature_of(&self, index: usize) -> Option<&[f32]> {
        self.indices
            .binary_search(&index)
            .ok()
            .map(|j| self.feature(j))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MergeReport {
    /// Sum of retained scores.
    pub surrogate: f64,
    /// L2 distance between the tokens and the merged expansion.
    pub merge_error: f64,
    /// Same distance when removed tokens are simply dropped.
    pub prune_error: f64,
}

fn norm(v: &[f32]) -> f64 {
    v.iter()
        .map(|&x| f64::from(x) * f64::from(x))
        .sum::<f64>()
        .sqrt()
}

fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| f64::from(x) * f64::from(y))
        .sum()
}

/// Assigns each removed token to the retained token with the highest cosine
/// similarity; ties go to the lower retained index.
pub fn assign_nearest(tokens: &TokenGrid, retained: &RetainedSet) -> MergeAssignment {
    let kept = retained.indices();
    let kept_norms: Vec<f64> = kept.iter().map(|&j| norm(tokens.vector(j))).collect();
    let pairs = retained
        .complement(tokens.len())
        .into_par_iter()
        .map(|i| {
            let u = tokens.vector(i);
            let nu = norm(u);
            let mut best = (kept[0], f64::NEG_INFINITY);
            for (&j, &nj) in kept.iter().zip(&kept_norms) {
                let c = cosine_from_parts(dot(u, tokens.vector(j)), nu, nj);
                if c > best.1 {
                    best = (j, c);
                }
            }
            (i, best.0)
        })
        .collect();
    MergeAssignment { pairs }
}

/// `(lambda * u_j + sum of absorbed u_i) / (lambda + absorbed count)` for
/// every retained `j`. Retained tokens that absorb nothing pass through
/// unchanged.
pub fn merge(
    tokens: &TokenGrid,
    retained: &RetainedSet,
    assignment: &MergeAssignment,
    lambda: f64,
) -> Result<CompressedTokens> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::config(
            "lambda",
            format!("must be > 0, got {lambda}"),
        ));
    }
    assignment.validate(retained, tokens.len())?;
    let kept = retained.indices();
    let d = tokens.dim();
    let mut sums = vec![0.0f64; kept.len() * d];
    let mut counts = vec![0usize; kept.len()];
    for &(i, j) in assignment.pairs() {
        let slot = kept
            .binary_search(&j)
            .map_err(|_| Error::Internal(format!("assignment target {j} not retained")))?;
        counts[slot] += 1;
        for (s, &x) in sums[slot * d..(slot + 1) * d]
            .iter_mut()
            .zip(tokens.vector(i))
        {
            *s += f64::from(x);
        }
    }
    let mut features = Vec::with_capacity(kept.len() * d);
    for (slot, &j) in kept.iter().enumerate() {
        let u = tokens.vector(j);
        if counts[slot] == 0 {
            features.extend_from_slice(u);
            continue;
        }
        let denom = lambda + counts[slot] as f64;
        let acc = &sums[slot * d..(slot + 1) * d];
        features.extend(
            u.iter()
                .zip(acc)
                .map(|(&x, &s)| ((lambda * f64::from(x) + s) / denom) as f32),
        );
    }
    Ok(CompressedTokens {
        indices: kept.to_vec(),
        dim: d,
        features,
        lambda,
    })
}

pub fn surrogate_score(scores: &ScoreVector, retained: &RetainedSet) -> f64 {
    retained.indices().iter().map(|&i| scores.get(i)).sum()
}

/// Expands the merged tokens back to the full grid: retained positions get
/// their merged vector, removed positions the merged vector of their target.
pub fn expand_merged(
    tokens: &TokenGrid,
    compressed: &CompressedTokens,
    assignment: &MergeAssignment,
) -> Result<TokenGrid> {
    expand_with(tokens, assignment, |j| compressed.feature_of(j))
}

/// Expansion used by plain pruning: unmerged retained vectors, copied onto
/// the removed positions that point at them.
pub fn expand_pruned(tokens: &TokenGrid, assignment: &MergeAssignment) -> Result<TokenGrid> {
    expand_with(tokens, assignment, |j| Some(tokens.vector(j)))
}

fn expand_with<'s>(
    tokens: &TokenGrid,
    assignment: &MergeAssignment,
    source: impl Fn(usize) -> Option<&'s [f32]>,
) -> Result<TokenGrid> {
    let n = tokens.len();
    let mut target: Vec<usize> = (0..n).collect();
    for &(i, j) in assignment.pairs() {
        target[i] = j;
    }
    let mut data = Vec::with_capacity(tokens.data().len());
    for &j in &target {
        let v = source(j).ok_or_else(|| {
            Error::config("assignment", format!("token {j} has no retained feature"))
        })?;
        data.extend_from_slice(v);
    }
    TokenGrid::new(tokens.height(), tokens.width(), tokens.dim(), data)
}

/// Frobenius norm of the difference of two equally shaped grids, in `f64`.
pub fn grid_distance(a: &TokenGrid, b: &TokenGrid) -> f64 {
    a.data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| {
            let d = f64::from(x) - f64::from(y);
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

/// Returns `(merge_error, prune_error)`.
pub fn merge_error(
    tokens: &TokenGrid,
    compressed: &CompressedTokens,
    assignment: &MergeAssignment,
) -> Result<(f64, f64)> {
    let merged = expand_merged(tokens, compressed, assignment)?;
    let pruned = expand_pruned(tokens, assignment)?;
    Ok((
        grid_distance(tokens, &merged),
        grid_distance(tokens, &pruned),
    ))
}

pub fn merge_report(
    tokens: &TokenGrid,
    scores: &ScoreVector,
    retained: &RetainedSet,
    compressed: &CompressedTokens,
    assignment: &MergeAssignment,
) -> Result<MergeReport> {
    let (merge_error, prune_error) = merge_error(tokens, compressed, assignment)?;
    Ok(MergeReport {
        surrogate: surrogate_score(scores, retained),
        merge_error,
        prune_error,
    })
}
