//! Token budget and balanced two-stage selection.
//!
//! Selection first keeps the best token of every non-empty anchor cell
//! (bounded by the budget), then tops the set up once from everything not yet
//! chosen. Every ranking orders by descending score and breaks ties by the
//! lower token index, so results are reproducible without a seed.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::grid::{map_token_to_anchor, AnchorCoord};
use crate::guidance::ScoreVector;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Budget {
    pub k: usize,
    pub rho: f64,
    pub k_min: usize,
}

/// `K = min(N, max(K_min, round(rho * N)))`, rounding halves away from zero.
pub fn compute_budget(rho: f64, n_tokens: usize, k_min: usize) -> Result<Budget> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::config(
            "rho",
            format!("must lie in [0, 1], got {rho}"),
        ));
    }
    if k_min < 1 {
        return Err(Error::config("k_min", "must be >= 1"));
    }
    if n_tokens < 1 {
        return Err(Error::config("n_tokens", "must be >= 1"));
    }
    let target = (rho * n_tokens as f64).round() as usize;
    Ok(Budget {
        k: n_tokens.min(k_min.max(target)),
        rho,
        k_min,
    })
}

/// Grid geometry needed to bucket tokens into anchor cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CellLayout {
    pub token_h: usize,
    pub token_w: usize,
    pub anchor_h: usize,
    pub anchor_w: usize,
}

impl CellLayout {
    pub fn n_tokens(&self) -> usize {
        self.token_h * self.token_w
    }

    pub fn cell_of(&self, index: usize) -> AnchorCoord {
        map_token_to_anchor(
            index / self.token_w,
            index % self.token_w,
            self.token_h,
            self.token_w,
            self.anchor_h,
            self.anchor_w,
        )
    }
}

/// Result of balanced selection.
#[derive(Debug, Clone, PartialEq)]
pub struct RetainedSet {
    indices: Vec<usize>,
    per_anchor_best: BTreeMap<AnchorCoord, usize>,
}

impl RetainedSet {
    /// Builds a set from arbitrary indices, e.g. for keep-all or externally chosen sets.
    pub fn from_indices(mut indices: Vec<usize>, n_tokens: usize) -> Result<Self> {
        indices.sort_unstable();
        indices.dedup();
        if indices.is_empty() {
            return Err(Error::config("retained", "must contain at least one index"));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= n_tokens) {
            return Err(Error::config(
                "retained",
                format!("index {bad} out of range for {n_tokens} tokens"),
            ));
        }
        Ok(Self {
            indices,
            per_anchor_best: BTreeMap::new(),
        })
    }

    /// Retained token indices, strictly increasing.
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, index: usize) -> bool {
        self.indices.binary_search(&index).is_ok()
    }

    pub fn per_anchor_best(&self) -> &BTreeMap<AnchorCoord, usize> {
        &self.per_anchor_best
    }

    /// Indices in `[0, n)` that were not retained, ascending.
    pub fn complement(&self, n: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(n.saturating_sub(self.indices.len()));
        let mut kept = self.indices.iter().peekable();
        for i in 0..n {
            if kept.peek() == Some(&&i) {
                kept.next();
            } else {
                out.push(i);
            }
        }
        out
    }
}

/// Descending score, then ascending index.
fn rank(scores: &[f64], a: usize, b: usize) -> Ordering {
    scores[b].total_cmp(&scores[a]).then(a.cmp(&b))
}

fn top_k(scores: &[f64], mut pool: Vec<usize>, k: usize) -> Vec<usize> {
    if k < pool.len() {
        if k > 0 {
            pool.select_nth_unstable_by(k - 1, |&a, &b| rank(scores, a, b));
        }
        pool.truncate(k);
    }
    pool
}

/// Highest-scoring token of each non-empty anchor cell (lowest index on ties).
pub fn per_anchor_best(scores: &ScoreVector, layout: CellLayout) -> BTreeMap<AnchorCoord, usize> {
    debug_assert_eq!(scores.len(), layout.n_tokens());
    let s = scores.as_slice();
    let mut best: BTreeMap<AnchorCoord, usize> = BTreeMap::new();
    for i in 0..s.len() {
        best.entry(layout.cell_of(i))
            .and_modify(|b| {
                if rank(s, i, *b) == Ordering::Less {
                    *b = i;
                }
            })
            .or_insert(i);
    }
    best
}

/// Two-stage selection: up to `K` cell representatives, then a single fill
/// pass over the remaining tokens.
pub fn balanced_select(
    scores: &ScoreVector,
    candidates: &BTreeMap<AnchorCoord, usize>,
    budget: &Budget,
) -> Result<RetainedSet> {
    let n = scores.len();
    let k = budget.k;
    if k < 1 || k > n {
        return Err(Error::config(
            "budget",
            format!("K = {k} is not in [1, {n}]"),
        ));
    }
    let s = scores.as_slice();
    let reps: Vec<usize> = candidates.values().copied().collect();
    let mut chosen = top_k(s, reps, k.min(candidates.len()));
    if chosen.len() < k {
        let mut taken = vec![false; n];
        for &i in &chosen {
            taken[i] = true;
        }
        let rest: Vec<usize> = (0..n).filter(|&i| !taken[i]).collect();
        let fill = top_k(s, rest, k - chosen.len());
        chosen.extend(fill);
    }
    chosen.sort_unstable();
    if chosen.len() != k {
        return Err(Error::Internal(format!(
            "selected {} tokens for budget {k}",
            chosen.len()
        )));
    }
    Ok(RetainedSet {
        indices: chosen,
        per_anchor_best: candidates.clone(),
    })
}

/// Budget, cell representatives and balanced selection in one call.
pub fn select(
    scores: &ScoreVector,
    layout: CellLayout,
    rho: f64,
    k_min: usize,
) -> Result<RetainedSet> {
    if scores.len() != layout.n_tokens() {
        return Err(Error::DimensionMismatch {
            what: "score vector length",
            expected: layout.n_tokens(),
            actual: scores.len(),
        });
    }
    let budget = compute_budget(rho, scores.len(), k_min)?;
    let best = per_anchor_best(scores, layout);
    balanced_select(scores, &best, &budget)
}
