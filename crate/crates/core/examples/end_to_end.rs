// Whole pipeline on one image: score, select, merge, rebuild, cost.
//
//     cargo run --example end_to_end

use tokenreduce::costmodel::{compare, ModelCostSpec};
use tokenreduce::grid::{LatentGrid, TokenGrid};
use tokenreduce::guidance::{SideInputs, SplitMix64};
use tokenreduce::layout::{rebuild, RebuiltSequence, Segment, SequenceSpec};
use tokenreduce::pipeline::{reduce, ReductionConfig, ReductionInput};

pub fn run_example() -> tokenreduce::Result<RebuiltSequence> {
    let mut rng = SplitMix64::new(1);
    // 16x16 understanding tokens over a 16x16 latent grid (8x8 anchors)
    let tokens = TokenGrid::new(
        16,
        16,
        32,
        (0..16 * 16 * 32)
            .map(|_| rng.next_f64() as f32 - 0.5)
            .collect(),
    )?;
    let latents = LatentGrid::new(
        16,
        16,
        32,
        (0..16 * 16 * 32)
            .map(|_| rng.next_f64() as f32 - 0.5)
            .collect(),
    )?;
    let side = SideInputs::default();

    let config = ReductionConfig::default();
    let result = reduce(&ReductionInput::new(&tokens, &latents, &side), &config)?;
    println!(
        "kept {} of {} tokens (rho {}), merge error {:.3} vs prune error {:.3}",
        result.retained.len(),
        tokens.len(),
        config.rho,
        result.report.merge_error,
        result.report.prune_error
    );

    let spec = SequenceSpec {
        segments: vec![
            Segment::Text {
                ids: vec![1001, 1002, 1003],
            },
            Segment::ImageStart,
            Segment::VisualSpan {
                count: tokens.len(),
            },
            Segment::ImageEnd,
            Segment::Text {
                ids: vec![1004, 1005],
            },
        ],
        ..SequenceSpec::single_image(tokens.len())
    };
    let rebuilt = rebuild(&spec, &result.compressed)?;
    println!(
        "sequence {} -> {} tokens",
        spec.total_len(),
        rebuilt.scaffold.len()
    );

    let text = spec.text_token_count() as u64;
    let cost = compare(
        &ModelCostSpec::REFERENCE,
        text,
        tokens.len() as u64,
        result.retained.len() as u64,
    )?;
    println!(
        "prefill flops x{:.3}, kv cache {}",
        cost.flops_ratio, cost.kv_reduction
    );
    Ok(rebuilt)
}

fn main() {
    if let Err(e) = run_example() {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
