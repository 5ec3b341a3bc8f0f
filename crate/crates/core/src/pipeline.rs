//! End-to-end reduction: score, budget, balanced selection, merge and report.

use crate::error::{Error, Result};
use crate::grid::{LatentGrid, ProjectionMatrix, TokenGrid};
use crate::guidance::{
    GuidanceSource, ScoreVector, ScoringInput, SideInputs, Strategy, TokenScorer,
};
use crate::merging::{
    assign_nearest, merge, merge_report, CompressedTokens, MergeAssignment, MergeReport,
};
use crate::selection::{
    balanced_select, compute_budget, per_anchor_best, Budget, CellLayout, RetainedSet,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReductionConfig {
    /// Keep ratio.
    pub rho: f64,
    /// Minimum number of retained tokens.
    pub k_min: usize,
    /// Weight of the retained token in its merged mean.
    pub lambda: f64,
    pub strategy: Strategy,
    /// Seed for the random strategy.
    pub seed: u64,
}

impl Default for ReductionConfig {
    fn default() -> Self {
        Self {
            rho: 0.5,
            k_min: 1,
            lambda: 1.0,
            strategy: Strategy::Latent,
            seed: 0,
        }
    }
}

impl ReductionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.rho) {
            return Err(Error::config(
                "rho",
                format!("must lie in [0, 1], got {}", self.rho),
            ));
        }
        if self.k_min < 1 {
            return Err(Error::config("kmin", "must be >= 1"));
        }
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return Err(Error::config(
                "lambda",
                format!("must be > 0, got {}", self.lambda),
            ));
        }
        Ok(())
    }

    pub fn guidance(&self) -> GuidanceSource {
        GuidanceSource::from_strategy(self.strategy, self.seed)
    }
}

/// Borrowed encoder outputs for one image.
#[derive(Debug, Clone, Copy)]
pub struct ReductionInput<'a> {
    pub tokens: &'a TokenGrid,
    pub latents: &'a LatentGrid,
    pub side: &'a SideInputs,
    pub projection: Option<&'a ProjectionMatrix>,
}

impl<'a> ReductionInput<'a> {
    pub fn new(tokens: &'a TokenGrid, latents: &'a LatentGrid, side: &'a SideInputs) -> Self {
        Self {
            tokens,
            latents,
            side,
            projection: None,
        }
    }

    pub fn with_projection(mut self, projection: Option<&'a ProjectionMatrix>) -> Self {
        self.projection = projection;
        self
    }

    /// Token grid against the pooled anchor grid.
    pub fn cell_layout(&self) -> CellLayout {
        CellLayout {
            token_h: self.tokens.height(),
            token_w: self.tokens.width(),
            anchor_h: self.latents.height().div_ceil(2),
            anchor_w: self.latents.width().div_ceil(2),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReductionResult {
    pub config: ReductionConfig,
    pub scores: ScoreVector,
    pub budget: Budget,
    pub retained: RetainedSet,
    pub assignment: MergeAssignment,
    pub compressed: CompressedTokens,
    pub report: MergeReport,
}

/// Runs the whole reduction with the scorer named by `config.strategy`.
pub fn reduce(input: &ReductionInput<'_>, config: &ReductionConfig) -> Result<ReductionResult> {
    reduce_with(input, config, &config.guidance())
}

/// Runs the whole reduction with a caller-provided scorer; `config.strategy`
/// and `config.seed` are only echoed.
pub fn reduce_with(
    input: &ReductionInput<'_>,
    config: &ReductionConfig,
    scorer: &dyn TokenScorer,
) -> Result<ReductionResult> {
    config.validate()?;
    let tokens = input.tokens;
    let scores = scorer.score(&ScoringInput {
        tokens,
        latents: input.latents,
        projection: input.projection,
        side: input.side,
    })?;
    if scores.len() != tokens.len() {
        return Err(Error::Internal(format!(
            "scorer `{}` returned {} scores for {} tokens",
            scorer.name(),
            scores.len(),
            tokens.len()
        )));
    }
    let budget = compute_budget(config.rho, tokens.len(), config.k_min)?;
    let candidates = per_anchor_best(&scores, input.cell_layout());
    let retained = balanced_select(&scores, &candidates, &budget)?;
    let assignment = assign_nearest(tokens, &retained);
    let compressed = merge(tokens, &retained, &assignment, config.lambda)?;
    let report = merge_report(tokens, &scores, &retained, &compressed, &assignment)?;
    Ok(ReductionResult {
        config: *config,
        scores,
        budget,
        retained,
        assignment,
        compressed,
        report,
    })
}
