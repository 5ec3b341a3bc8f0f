//! Reference implementations and generators shared by the integration tests.
//!
//! The oracles here are direct, unoptimised transcriptions of the selection
//! and merge rules. They work on plain `Vec`s in `f64` and do not call into the
//! library's selection or merging code.

#![allow(dead_code)]

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use tokenreduce::grid::{LatentGrid, TokenGrid};

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

pub fn random_vec(rng: &mut StdRng, n: usize) -> Vec<f32> {
    (0..n).map(|_| rng.gen_range(-1.0f32..1.0)).collect()
}

pub fn random_tokens(rng: &mut StdRng, h: usize, w: usize, d: usize) -> TokenGrid {
    TokenGrid::new(h, w, d, random_vec(rng, h * w * d)).unwrap()
}

pub fn random_latents(rng: &mut StdRng, h: usize, w: usize, d: usize) -> LatentGrid {
    LatentGrid::new(h, w, d, random_vec(rng, h * w * d)).unwrap()
}

/// Mean of each 2x2 block (partial at odd edges) by explicit double loop.
pub fn naive_pool(h: usize, w: usize, d: usize, data: &[f32]) -> Vec<f64> {
    let mut out = Vec::new();
    let mut r = 0;
    while r < h {
        let mut c = 0;
        while c < w {
            for k in 0..d {
                let mut sum = 0.0f64;
                let mut n = 0.0f64;
                for dr in 0..2 {
                    for dc in 0..2 {
                        if r + dr < h && c + dc < w {
                            sum += data[((r + dr) * w + (c + dc)) * d + k] as f64;
                            n += 1.0;
                        }
                    }
                }
                out.push(sum / n);
            }
            c += 2;
        }
        r += 2;
    }
    out
}

pub fn naive_cosine(a: &[f32], b: &[f32]) -> f64 {
    let mut dot = 0.0f64;
    let mut na = 0.0f64;
    let mut nb = 0.0f64;
    for k in 0..a.len() {
        dot += a[k] as f64 * b[k] as f64;
        na += a[k] as f64 * a[k] as f64;
        nb += b[k] as f64 * b[k] as f64;
    }
    let (na, nb) = (na.sqrt(), nb.sqrt());
    if na < 1e-12 || nb < 1e-12 {
        0.0
    } else {
        (dot / (na * nb)).clamp(-1.0, 1.0)
    }
}

/// Sorted copy of `pool`: score descending, index ascending.
fn ranked(scores: &[f64], pool: &[usize]) -> Vec<usize> {
    let mut v = pool.to_vec();
    v.sort_by(|&a, &b| {
        if scores[a] > scores[b] {
            std::cmp::Ordering::Less
        } else if scores[a] < scores[b] {
            std::cmp::Ordering::Greater
        } else {
            a.cmp(&b)
        }
    });
    v
}

/// Best token per non-empty cell, then top candidates, then one fill pass.
pub fn naive_balanced_select(
    scores: &[f64],
    token_h: usize,
    token_w: usize,
    anchor_h: usize,
    anchor_w: usize,
    k: usize,
) -> Vec<usize> {
    let n = token_h * token_w;
    let mut candidates = Vec::new();
    for gr in 0..anchor_h {
        for gc in 0..anchor_w {
            let members: Vec<usize> = (0..n)
                .filter(|&i| {
                    let (p, q) = (i / token_w, i % token_w);
                    p * anchor_h / token_h == gr && q * anchor_w / token_w == gc
                })
                .collect();
            if let Some(&best) = ranked(scores, &members).first() {
                candidates.push(best);
            }
        }
    }
    let take = k.min(candidates.len());
    let mut s0: Vec<usize> = ranked(scores, &candidates)[..take].to_vec();
    if s0.len() < k {
        let rest: Vec<usize> = (0..n).filter(|i| !s0.contains(i)).collect();
        let need = k - s0.len();
        s0.extend_from_slice(&ranked(scores, &rest)[..need]);
    }
    s0.sort();
    s0
}

/// `(removed, target)` pairs and merged rows for retained `kept`, in `f64`.
pub fn naive_merge(
    tokens: &[Vec<f32>],
    kept: &[usize],
    lambda: f64,
) -> (Vec<(usize, usize)>, Vec<Vec<f64>>) {
    let n = tokens.len();
    let mut pairs = Vec::new();
    for i in 0..n {
        if kept.contains(&i) {
            continue;
        }
        let mut best = kept[0];
        let mut best_c = f64::NEG_INFINITY;
        for &j in kept {
            let c = naive_cosine(&tokens[i], &tokens[j]);
            if c > best_c {
                best_c = c;
                best = j;
            }
        }
        pairs.push((i, best));
    }
    let d = tokens[0].len();
    let merged = kept
        .iter()
        .map(|&j| {
            let absorbed: Vec<usize> = pairs.iter().filter(|p| p.1 == j).map(|p| p.0).collect();
            (0..d)
                .map(|k| {
                    let mut num = lambda * tokens[j][k] as f64;
                    for &i in &absorbed {
                        num += tokens[i][k] as f64;
                    }
                    num / (lambda + absorbed.len() as f64)
                })
                .collect()
        })
        .collect();
    (pairs, merged)
}

/// Random subset of `[0, n)` of size `k`, sorted.
pub fn random_subset(rng: &mut StdRng, n: usize, k: usize) -> Vec<usize> {
    let mut all: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = rng.gen_range(i..n);
        all.swap(i, j);
    }
    let mut s = all[..k].to_vec();
    s.sort();
    s
}
