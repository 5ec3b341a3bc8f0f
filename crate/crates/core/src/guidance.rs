//! Per-token importance scores.
//!
//! The latent-alignment scorer compares each understanding token with the
//! pooled VAE anchor covering its grid cell. Three baseline sources (random,
//! host-supplied attention importance, text similarity) sit behind the same
//! [`TokenScorer`] interface so selection and merging can be run unchanged on
//! any of them.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{
    align_anchors, anchor_map, pool_latents, AnchorGrid, LatentGrid, ProjectionMatrix, TokenGrid,
};

const NORM_EPS: f64 = 1e-12;

/// One importance value per token, in token index order.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreVector(Vec<f64>);

impl ScoreVector {
    pub fn new(scores: Vec<f64>) -> Result<Self> {
        if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
            return Err(Error::config("scores", format!("score {i} is not finite")));
        }
        Ok(Self(scores))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, i: usize) -> f64 {
        self.0[i]
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// Optional inputs used only by the baseline scorers.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SideInputs {
    /// Text embeddings, each of the token feature width.
    pub text_embeddings: Option<Vec<Vec<f32>>>,
    /// Non-negative per-token importance supplied by the host pipeline.
    pub attention_importance: Option<Vec<f32>>,
}

/// Cosine similarity accumulated in `f64`. Zero-norm inputs score 0.
pub fn cosine(a: &[f32], b: &[f32]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            what: "cosine operands",
            expected: a.len(),
            actual: b.len(),
        });
    }
    Ok(cosine_unchecked(a, b))
}

pub(crate) fn cosine_unchecked(a: &[f32], b: &[f32]) -> f64 {
    let (mut dot, mut na, mut nb) = (0.0f64, 0.0f64, 0.0f64);
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (f64::from(x), f64::from(y));
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    cosine_from_parts(dot, na.sqrt(), nb.sqrt())
}

pub(crate) fn cosine_from_parts(dot: f64, norm_a: f64, norm_b: f64) -> f64 {
    if norm_a < NORM_EPS || norm_b < NORM_EPS {
        return 0.0;
    }
    (dot / (norm_a * norm_b)).clamp(-1.0, 1.0)
}

/// Cosine of every token with the anchor of its grid cell.
pub fn score_latent(tokens: &TokenGrid, anchors: &AnchorGrid) -> Result<ScoreVector> {
    if anchors.dim() != tokens.dim() {
        return Err(Error::DimensionMismatch {
            what: "anchor dim (align anchors before scoring)",
            expected: tokens.dim(),
            actual: anchors.dim(),
        });
    }
    let cells = anchor_map(tokens, anchors.height(), anchors.width());
    let scores = tokens
        .vectors()
        .zip(cells)
        .map(|(u, c)| cosine_unchecked(u, anchors.at(c.row, c.col)))
        .collect();
    Ok(ScoreVector(scores))
}

/// SplitMix64 stream mapped to uniform `[0, 1)` doubles via the top 53 bits.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

pub fn score_random(n: usize, seed: u64) -> ScoreVector {
    let mut rng = SplitMix64::new(seed);
    ScoreVector((0..n).map(|_| rng.next_f64()).collect())
}

/// Returns the host-supplied importance vector verbatim.
pub fn score_attention_proxy(n_tokens: usize, side: &SideInputs) -> Result<ScoreVector> {
    let attn = side
        .attention_importance
        .as_ref()
        .ok_or(Error::MissingSideInput("attention importance"))?;
    if attn.len() != n_tokens {
        return Err(Error::DimensionMismatch {
            what: "attention importance length",
            expected: n_tokens,
            actual: attn.len(),
        });
    }
    if let Some(i) = attn.iter().position(|a| !(a.is_finite() && *a >= 0.0)) {
        return Err(Error::config(
            "attention_importance",
            format!("entry {i} must be finite and non-negative, got {}", attn[i]),
        ));
    }
    Ok(ScoreVector(attn.iter().map(|&a| f64::from(a)).collect()))
}

/// Cosine of every token with the mean text embedding.
pub fn score_text_similarity(tokens: &TokenGrid, side: &SideInputs) -> Result<ScoreVector> {
    let text = side
        .text_embeddings
        .as_ref()
        .filter(|t| !t.is_empty())
        .ok_or(Error::MissingSideInput("text embeddings"))?;
    let d = tokens.dim();
    let mut mean = vec![0.0f64; d];
    for t in text {
        if t.len() != d {
            return Err(Error::DimensionMismatch {
                what: "text embedding dim",
                expected: d,
                actual: t.len(),
            });
        }
        for (m, &x) in mean.iter_mut().zip(t) {
            *m += f64::from(x);
        }
    }
    let n = text.len() as f64;
    let mean: Vec<f32> = mean.into_iter().map(|m| (m / n) as f32).collect();
    Ok(ScoreVector(
        tokens
            .vectors()
            .map(|u| cosine_unchecked(u, &mean))
            .collect(),
    ))
}

/// Everything a scorer may look at.
#[derive(Debug, Clone, Copy)]
pub struct ScoringInput<'a> {
    pub tokens: &'a TokenGrid,
    /// Raw generation-branch latents; pooled and aligned by the latent scorer.
    pub latents: &'a LatentGrid,
    pub projection: Option<&'a ProjectionMatrix>,
    pub side: &'a SideInputs,
}

impl ScoringInput<'_> {
    /// Pooled anchors brought to the token feature width.
    pub fn aligned_anchors(&self) -> Result<AnchorGrid> {
        align_anchors(
            pool_latents(self.latents),
            self.projection,
            self.tokens.dim(),
        )
    }
}

/// Source of per-token importance. Implementations must return exactly one
/// finite score per token.
pub trait TokenScorer {
    fn name(&self) -> &str;
    fn score(&self, input: &ScoringInput<'_>) -> Result<ScoreVector>;
}

/// The built-in guidance sources.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GuidanceSource {
    LatentAlignment,
    Random { seed: u64 },
    AttentionProxy,
    TextSimilarity,
}

impl GuidanceSource {
    pub fn from_strategy(strategy: Strategy, seed: u64) -> Self {
        match strategy {
            Strategy::Latent => GuidanceSource::LatentAlignment,
            Strategy::Random => GuidanceSource::Random { seed },
            Strategy::Attn => GuidanceSource::AttentionProxy,
            Strategy::TextSim => GuidanceSource::TextSimilarity,
        }
    }

    pub fn strategy(&self) -> Strategy {
        match self {
            GuidanceSource::LatentAlignment => Strategy::Latent,
            GuidanceSource::Random { .. } => Strategy::Random,
            GuidanceSource::AttentionProxy => Strategy::Attn,
            GuidanceSource::TextSimilarity => Strategy::TextSim,
        }
    }
}

impl TokenScorer for GuidanceSource {
    fn name(&self) -> &str {
        self.strategy().as_str()
    }

    fn score(&self, input: &ScoringInput<'_>) -> Result<ScoreVector> {
        match *self {
            GuidanceSource::LatentAlignment => {
                score_latent(input.tokens, &input.aligned_anchors()?)
            }
            GuidanceSource::Random { seed } => Ok(score_random(input.tokens.len(), seed)),
            GuidanceSource::AttentionProxy => score_attention_proxy(input.tokens.len(), input.side),
            GuidanceSource::TextSimilarity => score_text_similarity(input.tokens, input.side),
        }
    }
}

/// Strategy names as they appear on the command line and in result files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Strategy {
    #[serde(rename = "latent")]
    Latent,
    #[serde(rename = "random")]
    Random,
    #[serde(rename = "attn")]
    Attn,
    #[serde(rename = "textsim")]
    TextSim,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [
        Strategy::Latent,
        Strategy::Random,
        Strategy::Attn,
        Strategy::TextSim,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Strategy::Latent => "latent",
            Strategy::Random => "random",
            Strategy::Attn => "attn",
            Strategy::TextSim => "textsim",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| {
                Error::config(
                    "strategy",
                    format!("unknown strategy `{s}` (expected latent|random|attn|textsim)"),
                )
            })
    }
}
