//! Sequence layout rebuilding.
//!
//! After reduction an image contributes `K` visual slots instead of `N_u`.
//! The surrounding text and image boundary tokens stay as they are; input
//! ids, attention mask and position ids are regenerated, and sequences of a
//! batch are right-padded to a common length. Feature injection into the
//! placeholder slots is left to the host model.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::merging::CompressedTokens;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Segment {
    Text { ids: Vec<u32> },
    ImageStart,
    VisualSpan { count: usize },
    ImageEnd,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SequenceSpec {
    pub segments: Vec<Segment>,
    pub pad_token_id: u32,
    pub img_context_token_id: u32,
    pub image_start_token_id: u32,
    pub image_end_token_id: u32,
}

impl SequenceSpec {
    /// Ids used when the host does not supply its own layout.
    pub const DEFAULT_PAD: u32 = 0;
    pub const DEFAULT_IMAGE_START: u32 = 1;
    pub const DEFAULT_IMAGE_END: u32 = 2;
    pub const DEFAULT_IMG_CONTEXT: u32 = 3;

    /// `[ImageStart, VisualSpan(n_visual), ImageEnd]` with the default ids.
    pub fn single_image(n_visual: usize) -> Self {
        Self {
            segments: vec![
                Segment::ImageStart,
                Segment::VisualSpan { count: n_visual },
                Segment::ImageEnd,
            ],
            pad_token_id: Self::DEFAULT_PAD,
            img_context_token_id: Self::DEFAULT_IMG_CONTEXT,
            image_start_token_id: Self::DEFAULT_IMAGE_START,
            image_end_token_id: Self::DEFAULT_IMAGE_END,
        }
    }

    /// Checks that every visual span is enclosed by exactly one start/end pair.
    pub fn validate(&self) -> Result<()> {
        let segs = &self.segments;
        for (i, seg) in segs.iter().enumerate() {
            let prev = i.checked_sub(1).map(|p| &segs[p]);
            let next = segs.get(i + 1);
            match seg {
                Segment::Text { ids } if ids.is_empty() => {
                    return Err(Error::MalformedSpec(format!("text segment {i} is empty")));
                }
                Segment::Text { .. } => {}
                Segment::VisualSpan { count: 0 } => {
                    return Err(Error::MalformedSpec(format!("visual span {i} is empty")));
                }
                Segment::VisualSpan { .. } => {
                    if !matches!(prev, Some(Segment::ImageStart)) {
                        return Err(Error::MalformedSpec(format!(
                            "visual span {i} is not preceded by an image start"
                        )));
                    }
                    if !matches!(next, Some(Segment::ImageEnd)) {
                        return Err(Error::MalformedSpec(format!(
                            "visual span {i} is not followed by an image end"
                        )));
                    }
                }
                Segment::ImageStart if !matches!(next, Some(Segment::VisualSpan { .. })) => {
                    return Err(Error::MalformedSpec(format!(
                        "image start {i} is not followed by a visual span"
                    )));
                }
                Segment::ImageEnd if !matches!(prev, Some(Segment::VisualSpan { .. })) => {
                    return Err(Error::MalformedSpec(format!(
                        "image end {i} is not preceded by a visual span"
                    )));
                }
                Segment::ImageStart | Segment::ImageEnd => {}
            }
        }
        Ok(())
    }

    pub fn visual_span_count(&self) -> usize {
        self.segments
            .iter()
            .filter(|s| matches!(s, Segment::VisualSpan { .. }))
            .count()
    }

    pub fn text_token_count(&self) -> usize {
        self.segments
            .iter()
            .map(|s| match s {
                Segment::Text { ids } => ids.len(),
                _ => 0,
            })
            .sum()
    }

    pub fn boundary_token_count(&self) -> usize {
        self.segments
            .iter()
            .filter(|s| matches!(s, Segment::ImageStart | Segment::ImageEnd))
            .count()
    }

    pub fn total_len(&self) -> usize {
        self.segments
            .iter()
            .map(|s| match s {
                Segment::Text { ids } => ids.len(),
                Segment::VisualSpan { count } => *count,
                Segment::ImageStart | Segment::ImageEnd => 1,
            })
            .sum()
    }

    /// Ids, mask and positions of the layout as written, without padding.
    pub fn scaffold(&self) -> Result<Scaffold> {
        self.validate()?;
        let mut input_ids = Vec::with_capacity(self.total_len());
        for seg in &self.segments {
            match seg {
                Segment::Text { ids } => input_ids.extend_from_slice(ids),
                Segment::ImageStart => input_ids.push(self.image_start_token_id),
                Segment::ImageEnd => input_ids.push(self.image_end_token_id),
                Segment::VisualSpan { count } => {
                    input_ids.extend(std::iter::repeat_n(self.img_context_token_id, *count))
                }
            }
        }
        Ok(Scaffold::unpadded(input_ids))
    }
}

/// Model inputs for one sequence. Real tokens come first; trailing slots
/// (if any) are padding with mask 0 and position 0.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scaffold {
    pub input_ids: Vec<u32>,
    pub attention_mask: Vec<u8>,
    pub position_ids: Vec<u32>,
}

impl Scaffold {
    fn unpadded(input_ids: Vec<u32>) -> Self {
        let n = input_ids.len();
        Self {
            input_ids,
            attention_mask: vec![1; n],
            position_ids: (0..n as u32).collect(),
        }
    }

    /// Number of slots with mask 1.
    pub fn real_len(&self) -> usize {
        self.attention_mask.iter().filter(|&&m| m == 1).count()
    }

    pub fn len(&self) -> usize {
        self.input_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.input_ids.is_empty()
    }
}

/// Placement of one reduced image inside the rebuilt sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VisualSlot {
    pub start: usize,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RebuiltSequence {
    /// The layout with visual span counts replaced by the retained counts.
    pub spec: SequenceSpec,
    pub scaffold: Scaffold,
    pub visual_slots: Vec<VisualSlot>,
    /// Merged features for all visual slots, in slot order, flat.
    pub visual_features: Vec<f32>,
    pub feature_dim: usize,
}

/// Rebuilds a single-image sequence around its merged tokens.
pub fn rebuild(spec: &SequenceSpec, compressed: &CompressedTokens) -> Result<RebuiltSequence> {
    rebuild_spans(spec, &[compressed])
}

/// Rebuilds a sequence whose visual spans are reduced to `spans`, in order.
pub fn rebuild_spans(spec: &SequenceSpec, spans: &[&CompressedTokens]) -> Result<RebuiltSequence> {
    spec.validate()?;
    let n_spans = spec.visual_span_count();
    if n_spans != spans.len() {
        return Err(Error::MalformedSpec(format!(
            "spec has {n_spans} visual spans but {} reduced images were given",
            spans.len()
        )));
    }
    let feature_dim = spans.first().map_or(0, |c| c.dim());
    if spans.iter().any(|c| c.dim() != feature_dim) {
        return Err(Error::MalformedSpec(
            "reduced images disagree on feature width".into(),
        ));
    }

    let mut out = spec.clone();
    let mut next = spans.iter();
    let mut visual_features = Vec::new();
    for seg in &mut out.segments {
        if let Segment::VisualSpan { count } = seg {
            let c = next
                .next()
                .ok_or_else(|| Error::Internal("visual span iterator exhausted".into()))?;
            if c.is_empty() || c.len() > *count {
                return Err(Error::MalformedSpec(format!(
                    "visual span of {count} tokens cannot hold {} retained tokens",
                    c.len()
                )));
            }
            *count = c.len();
            visual_features.extend_from_slice(c.features());
        }
    }

    let scaffold = out.scaffold()?;
    let mut visual_slots = Vec::with_capacity(n_spans);
    let mut pos = 0;
    for seg in &out.segments {
        match seg {
            Segment::Text { ids } => pos += ids.len(),
            Segment::ImageStart | Segment::ImageEnd => pos += 1,
            Segment::VisualSpan { count } => {
                visual_slots.push(VisualSlot {
                    start: pos,
                    len: *count,
                });
                pos += count;
            }
        }
    }
    Ok(RebuiltSequence {
        spec: out,
        scaffold,
        visual_slots,
        visual_features,
        feature_dim,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PaddedBatch {
    pub padded_len: usize,
    pub rows: Vec<Scaffold>,
}

/// Right-pads every sequence with its own pad id to the longest real length.
pub fn pad_batch(sequences: &[RebuiltSequence]) -> Result<PaddedBatch> {
    if sequences.is_empty() {
        return Err(Error::config("batch", "needs at least one sequence"));
    }
    let padded_len = sequences
        .iter()
        .map(|s| s.scaffold.real_len())
        .max()
        .unwrap_or(0);
    let rows = sequences
        .iter()
        .map(|s| {
            let mut row = s.scaffold.clone();
            let pad = padded_len - row.len();
            row.input_ids
                .extend(std::iter::repeat_n(s.spec.pad_token_id, pad));
            row.attention_mask.extend(std::iter::repeat_n(0, pad));
            row.position_ids.extend(std::iter::repeat_n(0, pad));
            row
        })
        .collect();
    Ok(PaddedBatch { padded_len, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::TokenGrid;
    use crate::merging::{assign_nearest, merge};
    use crate::selection::RetainedSet;

    fn compressed(n: usize, keep: Vec<usize>) -> CompressedTokens {
        let tokens = TokenGrid::new(1, n, 1, (0..n).map(|x| x as f32 + 1.0).collect()).unwrap();
        let r = RetainedSet::from_indices(keep, n).unwrap();
        let a = assign_nearest(&tokens, &r);
        merge(&tokens, &r, &a, 1.0).unwrap()
    }

    fn text_image_text(n_visual: usize) -> SequenceSpec {
        SequenceSpec {
            segments: vec![
                Segment::Text { ids: vec![100] },
                Segment::ImageStart,
                Segment::VisualSpan { count: n_visual },
                Segment::ImageEnd,
                Segment::Text { ids: vec![101] },
            ],
            ..SequenceSpec::single_image(n_visual)
        }
    }

    #[test]
    fn rebuild_hand_layout() {
        let spec = text_image_text(4);
        assert_eq!(spec.total_len(), 8);
        let r = rebuild(&spec, &compressed(4, vec![0, 3])).unwrap();
        assert_eq!(r.scaffold.input_ids, vec![100, 1, 3, 3, 2, 101]);
        assert_eq!(r.scaffold.attention_mask, vec![1; 6]);
        assert_eq!(r.scaffold.position_ids, vec![0, 1, 2, 3, 4, 5]);
        assert_eq!(r.visual_slots, vec![VisualSlot { start: 2, len: 2 }]);
        assert_eq!(r.spec.segments[2], Segment::VisualSpan { count: 2 });
    }

    #[test]
    fn rebuild_keep_all_is_identity() {
        let spec = text_image_text(4);
        let r = rebuild(&spec, &compressed(4, vec![0, 1, 2, 3])).unwrap();
        assert_eq!(r.spec, spec);
        assert_eq!(r.scaffold, spec.scaffold().unwrap());
    }

    #[test]
    fn rebuild_is_idempotent() {
        let c = compressed(4, vec![1, 2]);
        let once = rebuild(&text_image_text(4), &c).unwrap();
        let twice = rebuild(&once.spec, &c).unwrap();
        assert_eq!(once.scaffold, twice.scaffold);
        assert_eq!(once.spec, twice.spec);
    }

    #[test]
    fn malformed_specs() {
        let mut spec = text_image_text(4);
        spec.segments.remove(3);
        assert!(matches!(spec.validate(), Err(Error::MalformedSpec(_))));
        let c = compressed(4, vec![0]);
        assert!(matches!(rebuild(&spec, &c), Err(Error::MalformedSpec(_))));

        let mut no_start = text_image_text(4);
        no_start.segments.remove(1);
        assert!(no_start.validate().is_err());

        // too many retained tokens for the span
        assert!(rebuild(&text_image_text(1), &compressed(2, vec![0, 1])).is_err());
        // wrong number of images
        assert!(rebuild_spans(&text_image_text(4), &[]).is_err());
    }

    #[test]
    fn pad_examples() {
        let long = rebuild(&text_image_text(4), &compressed(4, vec![0, 3])).unwrap();
        let short = rebuild(&SequenceSpec::single_image(4), &compressed(4, vec![0, 3])).unwrap();
        assert_eq!(short.scaffold.len(), 4);

        let single = pad_batch(std::slice::from_ref(&long)).unwrap();
        assert_eq!(single.rows, vec![long.scaffold.clone()]);

        let b = pad_batch(&[long.clone(), short]).unwrap();
        assert_eq!(b.padded_len, 6);
        assert_eq!(b.rows[1].input_ids, vec![1, 3, 3, 2, 0, 0]);
        assert_eq!(b.rows[1].attention_mask, vec![1, 1, 1, 1, 0, 0]);
        assert_eq!(b.rows[1].position_ids, vec![0, 1, 2, 3, 0, 0]);

        let same = pad_batch(&[long.clone(), long.clone()]).unwrap();
        assert!(same.rows.iter().all(|r| r.len() == 6 && r.real_len() == 6));
        assert!(pad_batch(&[]).is_err());
    }

    #[test]
    fn multi_image_rebuild() {
        let spec = SequenceSpec {
            segments: vec![
                Segment::ImageStart,
                Segment::VisualSpan { count: 4 },
                Segment::ImageEnd,
                Segment::Text { ids: vec![7, 8] },
                Segment::ImageStart,
                Segment::VisualSpan { count: 3 },
                Segment::ImageEnd,
            ],
            ..SequenceSpec::single_image(0)
        };
        let a = compressed(4, vec![0, 2]);
        let b = compressed(3, vec![1]);
        let r = rebuild_spans(&spec, &[&a, &b]).unwrap();
        assert_eq!(r.scaffold.len(), spec.total_len() - 2 - 2);
        assert_eq!(
            r.visual_slots,
            vec![
                VisualSlot { start: 1, len: 2 },
                VisualSlot { start: 7, len: 1 }
            ]
        );
        assert_eq!(r.visual_features.len(), 3);
    }

    #[test]
    fn spec_json_shape() {
        let json = serde_json::to_string(&SequenceSpec::single_image(2)).unwrap();
        assert!(
            json.contains(r#"{"kind":"visual_span","count":2}"#),
            "{json}"
        );
        let back: SequenceSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back, SequenceSpec::single_image(2));
    }
}
