//! JSON documents emitted by the `reduce` and `compare` commands.

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::guidance::Strategy;
use crate::layout::{RebuiltSequence, Scaffold, VisualSlot};
use crate::pipeline::{ReductionConfig, ReductionResult};

use super::json::{sig9, sig9_vec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    #[serde(serialize_with = "sig9")]
    pub rho: f64,
    pub kmin: usize,
    #[serde(serialize_with = "sig9")]
    pub lambda: f64,
    pub strategy: Strategy,
    pub seed: u64,
}

impl From<&ReductionConfig> for ConfigEcho {
    fn from(c: &ReductionConfig) -> Self {
        Self {
            rho: c.rho,
            kmin: c.k_min,
            lambda: c.lambda,
            strategy: c.strategy,
            seed: c.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutDoc {
    pub scaffold: Scaffold,
    pub visual_slots: Vec<VisualSlot>,
}

/// Merged `K x dim` features as little-endian `f32`, inline or in a sidecar file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "encoding", rename_all = "snake_case")]
pub enum MergedFeatures {
    InlineBase64F32le {
        count: usize,
        dim: usize,
        data: String,
    },
    SidecarF32le {
        count: usize,
        dim: usize,
        path: String,
    },
}

impl MergedFeatures {
    pub fn inline(count: usize, dim: usize, features: &[f32]) -> Self {
        MergedFeatures::InlineBase64F32le {
            count,
            dim,
            data: BASE64.encode(f32_le_bytes(features)),
        }
    }

    /// Decodes inline features; sidecar references return `None`.
    pub fn decode_inline(&self) -> Result<Option<Vec<f32>>> {
        match self {
            MergedFeatures::InlineBase64F32le { data, .. } => {
                let raw = BASE64
                    .decode(data)
                    .map_err(|e| Error::config("merged_features", e.to_string()))?;
                Ok(Some(f32s_from_le(&raw)?))
            }
            MergedFeatures::SidecarF32le { .. } => Ok(None),
        }
    }
}

pub fn f32_le_bytes(xs: &[f32]) -> Vec<u8> {
    xs.iter().flat_map(|x| x.to_le_bytes()).collect()
}

pub fn f32s_from_le(raw: &[u8]) -> Result<Vec<f32>> {
    if !raw.len().is_multiple_of(4) {
        return Err(Error::LengthMismatch {
            expected: raw.len() / 4 * 4,
            actual: raw.len(),
        });
    }
    Ok(raw
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReductionResultDoc {
    pub config: ConfigEcho,
    pub n_tokens: usize,
    pub k: usize,
    #[serde(serialize_with = "sig9_vec")]
    pub scores: Vec<f64>,
    pub retained: Vec<usize>,
    /// `[removed, retained]` pairs, ascending by removed index.
    pub assignment: Vec<[usize; 2]>,
    #[serde(serialize_with = "sig9")]
    pub surrogate: f64,
    #[serde(serialize_with = "sig9")]
    pub merge_error: f64,
    #[serde(serialize_with = "sig9")]
    pub prune_error: f64,
    pub layout: LayoutDoc,
    pub merged_features: MergedFeatures,
}

impl ReductionResultDoc {
    pub fn new(
        result: &ReductionResult,
        rebuilt: &RebuiltSequence,
        merged_features: MergedFeatures,
    ) -> Self {
        Self {
            config: ConfigEcho::from(&result.config),
            n_tokens: result.scores.len(),
            k: result.retained.len(),
            scores: result.scores.as_slice().to_vec(),
            retained: result.retained.indices().to_vec(),
            assignment: result
                .assignment
                .pairs()
                .iter()
                .map(|&(i, j)| [i, j])
                .collect(),
            surrogate: result.report.surrogate,
            merge_error: result.report.merge_error,
            prune_error: result.report.prune_error,
            layout: LayoutDoc {
                scaffold: rebuilt.scaffold.clone(),
                visual_slots: rebuilt.visual_slots.clone(),
            },
            merged_features,
        }
    }
}

/// One guidance source in a comparison run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyRow {
    pub strategy: Strategy,
    pub retained: Vec<usize>,
    #[serde(serialize_with = "sig9")]
    pub surrogate: f64,
    #[serde(serialize_with = "sig9")]
    pub merge_error: f64,
    #[serde(serialize_with = "sig9")]
    pub prune_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Overlap {
    pub a: Strategy,
    pub b: Strategy,
    /// `|S_a ∩ S_b| / K`.
    #[serde(serialize_with = "sig9")]
    pub overlap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Warning {
    pub strategy: Strategy,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonDoc {
    #[serde(serialize_with = "sig9")]
    pub rho: f64,
    pub kmin: usize,
    #[serde(serialize_with = "sig9")]
    pub lambda: f64,
    pub seed: u64,
    pub n_tokens: usize,
    pub k: usize,
    pub rows: Vec<StrategyRow>,
    pub overlaps: Vec<Overlap>,
    pub warnings: Vec<Warning>,
}

/// Fraction of `a` also present in `b`, relative to `k`. Both must be sorted.
pub fn overlap_fraction(a: &[usize], b: &[usize], k: usize) -> f64 {
    let (mut i, mut j, mut common) = (0, 0, 0usize);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                common += 1;
                i += 1;
                j += 1;
            }
        }
    }
    common as f64 / k as f64
}
