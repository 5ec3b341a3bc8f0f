mod common;

use proptest::prelude::*;
use rand::Rng;

use common::*;
use tokenreduce::costmodel::{compare, kv_bytes, prefill_flops, ModelCostSpec};
use tokenreduce::grid::{
    map_token_to_anchor, pool_latents, AnchorGrid, LatentGrid, ProjectionMatrix, TokenGrid,
};
use tokenreduce::guidance::{score_latent, score_random, ScoreVector};
use tokenreduce::io::dump::FeatureDump;
use tokenreduce::layout::{rebuild, Segment, SequenceSpec};
use tokenreduce::merging::{assign_nearest, merge, merge_error, surrogate_score};
use tokenreduce::selection::{compute_budget, per_anchor_best, select, CellLayout, RetainedSet};

// ---------------------------------------------------------------- grid

#[test]
fn pooling_matches_double_loop_up_to_8x8() {
    let mut r = rng(11);
    for h in 1..=8 {
        for w in 1..=8 {
            for d in 1..=4 {
                let g = random_latents(&mut r, h, w, d);
                let pooled = pool_latents(&g);
                let expected = naive_pool(h, w, d, g.data());
                assert_eq!(pooled.data().len(), expected.len());
                for (a, b) in pooled.data().iter().zip(&expected) {
                    assert!((f64::from(*a) - b).abs() <= 1e-6, "{h}x{w}x{d}: {a} vs {b}");
                }
            }
        }
    }
}

#[test]
fn mapping_total_in_bounds_and_monotone() {
    for hu in 1..=64 {
        for hg in 1..=64 {
            let mut prev = 0;
            for p in 0..hu {
                // rows and columns use the same rule, so one axis covers both
                let c = map_token_to_anchor(p, 0, hu, 1, hg, 1);
                assert!(c.row < hg && c.col == 0);
                assert!(c.row >= prev, "non-monotone at p={p} hu={hu} hg={hg}");
                prev = c.row;
                let t = map_token_to_anchor(0, p, 1, hu, 1, hg);
                assert_eq!(t.col, c.row);
            }
        }
    }
}

#[test]
fn pool_then_project_equals_project_then_pool() {
    let mut r = rng(5);
    for _ in 0..200 {
        let (h, w) = (r.gen_range(1..=8), r.gen_range(1..=8));
        let (dz, du) = (r.gen_range(1..=6), r.gen_range(1..=6));
        let g = random_latents(&mut r, h, w, dz);
        let p = ProjectionMatrix::new(dz, du, random_vec(&mut r, dz * du)).unwrap();
        let a = p.apply(&pool_latents(&g)).unwrap();
        let b = pool_latents(&p.apply(&g).unwrap());
        for (x, y) in a.data().iter().zip(b.data()) {
            assert!((x - y).abs() <= 1e-5, "{x} vs {y}");
        }
    }
}

// ---------------------------------------------------------------- guidance

fn grid_strategy() -> impl Strategy<Value = (TokenGrid, AnchorGrid)> {
    (1usize..=8, 1usize..=8, 1usize..=4, 1usize..=4, 1usize..=5).prop_flat_map(
        |(h, w, gh, gw, d)| {
            (
                prop::collection::vec(-1.0f32..1.0, h * w * d),
                prop::collection::vec(-1.0f32..1.0, gh * gw * d),
            )
                .prop_map(move |(t, a)| {
                    (
                        TokenGrid::new(h, w, d, t).unwrap(),
                        TokenGrid::new(gh, gw, d, a).unwrap().into_anchors(),
                    )
                })
        },
    )
}

proptest! {
    #[test]
    fn latent_scores_bounded((tokens, anchors) in grid_strategy()) {
        let s = score_latent(&tokens, &anchors).unwrap();
        prop_assert_eq!(s.len(), tokens.len());
        for &x in s.as_slice() {
            prop_assert!((-1.0 - 1e-6..=1.0 + 1e-6).contains(&x));
        }
    }

    #[test]
    fn latent_scores_scale_invariant((tokens, anchors) in grid_strategy(), scale in 0.01f32..100.0, which in 0usize..64) {
        let base = score_latent(&tokens, &anchors).unwrap();
        let i = which % tokens.len();
        let d = tokens.dim();
        let mut data = tokens.data().to_vec();
        data[i * d..(i + 1) * d].iter_mut().for_each(|x| *x *= scale);
        let scaled = TokenGrid::new(tokens.height(), tokens.width(), d, data).unwrap();
        let mut adata = anchors.data().to_vec();
        adata.iter_mut().for_each(|x| *x *= scale);
        let scaled_anchors = TokenGrid::new(anchors.height(), anchors.width(), d, adata).unwrap().into_anchors();
        let s = score_latent(&scaled, &scaled_anchors).unwrap();
        for (a, b) in base.as_slice().iter().zip(s.as_slice()) {
            prop_assert!((a - b).abs() <= 1e-5);
        }
    }

    #[test]
    fn permuting_tokens_within_a_cell_permutes_scores((tokens, anchors) in grid_strategy(), seed in any::<u64>()) {
        let layout = CellLayout { token_h: tokens.height(), token_w: tokens.width(), anchor_h: anchors.height(), anchor_w: anchors.width() };
        let n = tokens.len();
        let d = tokens.dim();
        // swap two random tokens that share a cell
        let mut r = rng(seed);
        let i = r.gen_range(0..n);
        let mates: Vec<usize> = (0..n).filter(|&j| layout.cell_of(j) == layout.cell_of(i)).collect();
        let j = mates[r.gen_range(0..mates.len())];
        let mut data = tokens.data().to_vec();
        for k in 0..d {
            data.swap(i * d + k, j * d + k);
        }
        let swapped = TokenGrid::new(tokens.height(), tokens.width(), d, data).unwrap();
        let a = score_latent(&tokens, &anchors).unwrap();
        let b = score_latent(&swapped, &anchors).unwrap();
        let mut expect = a.as_slice().to_vec();
        expect.swap(i, j);
        prop_assert_eq!(b.as_slice(), &expect[..]);
    }

    #[test]
    fn random_scores_are_bit_stable(n in 1usize..500, seed in any::<u64>()) {
        let a = score_random(n, seed);
        let b = score_random(n, seed);
        prop_assert_eq!(a.len(), n);
        let bits = |s: &ScoreVector| s.as_slice().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        prop_assert_eq!(bits(&a), bits(&b));
    }
}

// ---------------------------------------------------------------- selection

fn random_instance(r: &mut rand::rngs::StdRng) -> (Vec<f64>, CellLayout, f64) {
    let layout = CellLayout {
        token_h: r.gen_range(1..=8),
        token_w: r.gen_range(1..=8),
        anchor_h: r.gen_range(1..=4),
        anchor_w: r.gen_range(1..=4),
    };
    // coarse scores so ties actually occur
    let scores = (0..layout.n_tokens())
        .map(|_| f64::from(r.gen_range(0..20)) / 10.0 - 1.0)
        .collect();
    (scores, layout, f64::from(r.gen_range(0..=10)) / 10.0)
}

#[test]
fn selection_size_coverage_and_oracle() {
    let mut r = rng(2024);
    for _ in 0..500 {
        let (scores, layout, rho) = random_instance(&mut r);
        let sv = ScoreVector::new(scores.clone()).unwrap();
        let k = compute_budget(rho, scores.len(), 1).unwrap().k;
        let s = select(&sv, layout, rho, 1).unwrap();
        assert_eq!(s.len(), k);
        assert!(s.indices().windows(2).all(|w| w[0] < w[1]));

        let cells: std::collections::BTreeSet<_> =
            s.indices().iter().map(|&i| layout.cell_of(i)).collect();
        let non_empty = per_anchor_best(&sv, layout).len();
        assert!(cells.len() >= k.min(non_empty));

        let oracle = naive_balanced_select(
            &scores,
            layout.token_h,
            layout.token_w,
            layout.anchor_h,
            layout.anchor_w,
            k,
        );
        assert_eq!(s.indices(), &oracle[..]);

        // best-per-cell entries really are cell maxima
        for (cell, &b) in per_anchor_best(&sv, layout).iter() {
            for i in 0..scores.len() {
                if layout.cell_of(i) == *cell {
                    assert!(scores[b] >= scores[i]);
                }
            }
        }
    }
}

#[test]
fn selection_ignores_constant_shift_and_is_deterministic() {
    let mut r = rng(99);
    for _ in 0..300 {
        let (scores, layout, rho) = random_instance(&mut r);
        let shift = f64::from(r.gen_range(-5..=5)) * 0.5;
        let shifted: Vec<f64> = scores.iter().map(|s| s + shift).collect();
        let a = select(&ScoreVector::new(scores.clone()).unwrap(), layout, rho, 1).unwrap();
        let b = select(&ScoreVector::new(shifted).unwrap(), layout, rho, 1).unwrap();
        let again = select(&ScoreVector::new(scores).unwrap(), layout, rho, 1).unwrap();
        assert_eq!(a.indices(), b.indices());
        assert_eq!(a, again);
    }
}

// ---------------------------------------------------------------- merging

#[test]
fn assignment_matches_brute_force() {
    let mut r = rng(7);
    for _ in 0..500 {
        let n = r.gen_range(1..=64);
        let d = r.gen_range(1..=8);
        let tokens = random_tokens(&mut r, 1, n, d);
        let k = r.gen_range(1..=n);
        let kept = random_subset(&mut r, n, k);
        let retained = RetainedSet::from_indices(kept.clone(), n).unwrap();
        let rows: Vec<Vec<f32>> = tokens.vectors().map(<[f32]>::to_vec).collect();
        let (pairs, _) = naive_merge(&rows, &kept, 1.0);
        assert_eq!(assign_nearest(&tokens, &retained).pairs(), &pairs[..]);
    }
}

#[test]
fn merged_rows_are_convex_combinations() {
    let mut r = rng(8);
    for _ in 0..200 {
        let n = r.gen_range(2..=32);
        let d = r.gen_range(1..=6);
        let tokens = random_tokens(&mut r, 1, n, d);
        let kept = {
            let k = r.gen_range(1..n);
            random_subset(&mut r, n, k)
        };
        let retained = RetainedSet::from_indices(kept.clone(), n).unwrap();
        let lambda = r.gen_range(0.1..5.0);
        let a = assign_nearest(&tokens, &retained);
        let c = merge(&tokens, &retained, &a, lambda).unwrap();
        for (slot, &j) in kept.iter().enumerate() {
            let members: Vec<usize> = std::iter::once(j)
                .chain(a.pairs().iter().filter(|p| p.1 == j).map(|p| p.0))
                .collect();
            let m = members.len() - 1;
            let total = lambda + m as f64;
            let weights: Vec<f64> = std::iter::once(lambda / total)
                .chain(std::iter::repeat_n(1.0 / total, m))
                .collect();
            assert!(weights.iter().all(|&w| w >= 0.0));
            assert!((weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            for k in 0..d {
                let lo = members
                    .iter()
                    .map(|&i| tokens.vector(i)[k])
                    .fold(f32::INFINITY, f32::min);
                let hi = members
                    .iter()
                    .map(|&i| tokens.vector(i)[k])
                    .fold(f32::NEG_INFINITY, f32::max);
                let v = c.feature(slot)[k];
                assert!(v >= lo - 1e-6 && v <= hi + 1e-6);
                let combo: f64 = members
                    .iter()
                    .zip(&weights)
                    .map(|(&i, w)| w * f64::from(tokens.vector(i)[k]))
                    .sum();
                assert!((f64::from(v) - combo).abs() <= 1e-6 * combo.abs().max(1.0));
            }
        }
        let (me, pe) = merge_error(&tokens, &c, &a).unwrap();
        assert!(me >= 0.0 && pe >= 0.0 && me.is_finite() && pe.is_finite());
    }
}

#[test]
fn merge_is_invariant_to_reordering_removed_tokens() {
    // Reordering tokens that are removed and fold into the same target (a
    // permutation of the grid that keeps retained positions fixed) must not
    // change any merged row.
    let mut r = rng(21);
    for _ in 0..200 {
        let n = r.gen_range(3..=24);
        let d = r.gen_range(1..=5);
        let tokens = random_tokens(&mut r, 1, n, d);
        let kept = {
            let k = r.gen_range(1..n);
            random_subset(&mut r, n, k)
        };
        let retained = RetainedSet::from_indices(kept.clone(), n).unwrap();
        let a = assign_nearest(&tokens, &retained);
        let c = merge(&tokens, &retained, &a, 1.0).unwrap();

        let removed: Vec<usize> = retained.complement(n);
        let mut shuffled = removed.clone();
        for i in (1..shuffled.len()).rev() {
            shuffled.swap(i, r.gen_range(0..=i));
        }
        let mut data = tokens.data().to_vec();
        for (&to, &from) in removed.iter().zip(&shuffled) {
            data[to * d..(to + 1) * d].copy_from_slice(tokens.vector(from));
        }
        let permuted = TokenGrid::new(1, n, d, data).unwrap();
        let a2 = assign_nearest(&permuted, &retained);
        let c2 = merge(&permuted, &retained, &a2, 1.0).unwrap();
        for slot in 0..kept.len() {
            for (x, y) in c.feature(slot).iter().zip(c2.feature(slot)) {
                assert!((x - y).abs() <= 1e-6, "{x} vs {y}");
            }
        }
    }
}

#[test]
fn surrogate_is_sum_over_retained() {
    let mut r = rng(3);
    for _ in 0..100 {
        let n = r.gen_range(1..=50);
        let scores: Vec<f64> = (0..n).map(|_| r.gen_range(-1.0..1.0)).collect();
        let kept = {
            let k = r.gen_range(1..=n);
            random_subset(&mut r, n, k)
        };
        let expect: f64 = kept.iter().map(|&i| scores[i]).sum();
        let got = surrogate_score(
            &ScoreVector::new(scores).unwrap(),
            &RetainedSet::from_indices(kept, n).unwrap(),
        );
        assert!((got - expect).abs() < 1e-12);
    }
}

// ---------------------------------------------------------------- layout

proptest! {
    #[test]
    fn rebuild_conserves_text_and_boundaries(
        before in prop::collection::vec(1u32..1000, 0..6),
        after in prop::collection::vec(1u32..1000, 0..6),
        n in 1usize..40,
        seed in any::<u64>(),
    ) {
        let mut segments = Vec::new();
        if !before.is_empty() { segments.push(Segment::Text { ids: before.clone() }); }
        segments.extend([Segment::ImageStart, Segment::VisualSpan { count: n }, Segment::ImageEnd]);
        if !after.is_empty() { segments.push(Segment::Text { ids: after.clone() }); }
        let spec = SequenceSpec { segments, ..SequenceSpec::single_image(n) };

        let mut r = rng(seed);
        let tokens = random_tokens(&mut r, 1, n, 2);
        let kept = { let k = r.gen_range(1..=n); random_subset(&mut r, n, k) };
        let retained = RetainedSet::from_indices(kept.clone(), n).unwrap();
        let a = assign_nearest(&tokens, &retained);
        let c = merge(&tokens, &retained, &a, 1.0).unwrap();
        let out = rebuild(&spec, &c).unwrap();

        let k = kept.len();
        prop_assert_eq!(out.spec.text_token_count(), spec.text_token_count());
        prop_assert_eq!(out.spec.boundary_token_count(), 2);
        prop_assert_eq!(out.scaffold.real_len(), before.len() + after.len() + 2 + k);
        prop_assert_eq!(out.scaffold.len(), spec.total_len() - (n - k));
        prop_assert_eq!(&out.scaffold.input_ids[..before.len()], &before[..]);
        prop_assert_eq!(&out.scaffold.input_ids[out.scaffold.len() - after.len()..], &after[..]);
        prop_assert_eq!(out.scaffold.position_ids.clone(), (0..out.scaffold.len() as u32).collect::<Vec<_>>());
        prop_assert_eq!(&out.visual_features[..], c.features());

        let again = rebuild(&out.spec, &c).unwrap();
        prop_assert_eq!(again.scaffold, out.scaffold);
    }
}

// ---------------------------------------------------------------- cost model

fn reference_flops(s: &ModelCostSpec, t: u64) -> u64 {
    let mut per_layer = 0u64;
    per_layer += 4 * (2 * t * s.hidden * s.hidden); // q, k, v, o
    per_layer += 2 * t * t * s.hidden; // scores
    per_layer += 2 * t * t * s.hidden; // weighted values
    per_layer += s.mlp_factor * t * s.hidden * s.ffn;
    s.layers * per_layer
}

proptest! {
    #[test]
    fn flops_match_term_by_term(
        layers in 1u64..8, hidden in 1u64..64, ffn in 1u64..256, gated in any::<bool>(), t in 0u64..=10_000,
    ) {
        let spec = ModelCostSpec { layers, hidden, ffn, kv_heads: 1, head_dim: 1, mlp_factor: if gated { 6 } else { 4 }, bytes_per_element: 2 };
        prop_assert_eq!(prefill_flops(&spec, t), u128::from(reference_flops(&spec, t)));
    }

    #[test]
    fn flops_ratio_increases_with_k(text in 0u64..2000, visual in 2u64..5000, k in 0u64..4999) {
        let k = k % visual;
        let s = ModelCostSpec::REFERENCE;
        let lo = compare(&s, text, visual, k).unwrap();
        let hi = compare(&s, text, visual, k + 1).unwrap();
        prop_assert!(hi.flops_ratio > lo.flops_ratio);
        prop_assert!(lo.flops_ratio <= 1.0);
    }

    #[test]
    fn kv_is_linear(t in 0u64..100_000, u in 0u64..100_000) {
        let s = ModelCostSpec::REFERENCE;
        prop_assert_eq!(kv_bytes(&s, t) + kv_bytes(&s, u), kv_bytes(&s, t + u));
    }
}

// ---------------------------------------------------------------- dumps

proptest! {
    #[test]
    fn dump_roundtrips_bit_exact(
        hu in 1usize..6, wu in 1usize..6, du in 1usize..5,
        hz in 1usize..6, wz in 1usize..6, dz in 1usize..5,
        n_text in 0usize..3, attn in any::<bool>(), proj in any::<bool>(), seed in any::<u64>(),
    ) {
        let mut r = rng(seed);
        let mut dump = FeatureDump::new(random_tokens(&mut r, hu, wu, du), random_latents(&mut r, hz, wz, dz));
        if n_text > 0 {
            dump.side.text_embeddings = Some((0..n_text).map(|_| random_vec(&mut r, du)).collect());
        }
        if attn {
            dump.side.attention_importance = Some((0..hu * wu).map(|_| r.gen_range(0.0f32..1.0)).collect());
        }
        if proj {
            dump.projection = Some(ProjectionMatrix::new(dz, du, random_vec(&mut r, dz * du)).unwrap());
        }
        let bytes = dump.encode().unwrap();
        let back = FeatureDump::decode(&bytes).unwrap();
        prop_assert_eq!(back.encode().unwrap(), bytes);
        prop_assert_eq!(back, dump);
    }
}

#[test]
fn latents_grid_rejects_wrong_length() {
    assert!(LatentGrid::new(2, 2, 2, vec![0.0; 7]).is_err());
}
