// Rebuild a prompt around a shortened visual span and right-pad a batch.
//
//     cargo run --example layout_rebuild

use tokenreduce::grid::TokenGrid;
use tokenreduce::layout::{pad_batch, rebuild, PaddedBatch, Segment, SequenceSpec};
use tokenreduce::merging::{assign_nearest, merge};
use tokenreduce::selection::RetainedSet;

pub fn run_example() -> tokenreduce::Result<PaddedBatch> {
    let tokens = TokenGrid::new(2, 3, 2, (0..12).map(|x| x as f32).collect())?;
    let prompt = |before: Vec<u32>, after: Vec<u32>| SequenceSpec {
        segments: vec![
            Segment::Text { ids: before },
            Segment::ImageStart,
            Segment::VisualSpan { count: 6 },
            Segment::ImageEnd,
            Segment::Text { ids: after },
        ],
        ..SequenceSpec::single_image(6)
    };

    let mut rebuilt = Vec::new();
    for (spec, kept) in [
        (prompt(vec![101, 102], vec![103]), vec![0, 4]),
        (prompt(vec![101], vec![104, 105, 106]), vec![1, 2, 5]),
    ] {
        let retained = RetainedSet::from_indices(kept, tokens.len())?;
        let assignment = assign_nearest(&tokens, &retained);
        let compressed = merge(&tokens, &retained, &assignment, 1.0)?;
        let seq = rebuild(&spec, &compressed)?;
        println!(
            "{} -> {} tokens, visual slots {:?}",
            spec.total_len(),
            seq.scaffold.len(),
            seq.visual_slots
        );
        rebuilt.push(seq);
    }

    let batch = pad_batch(&rebuilt)?;
    for row in &batch.rows {
        println!("ids {:?}\nmask {:?}", row.input_ids, row.attention_mask);
    }
    Ok(batch)
}

fn main() {
    if let Err(e) = run_example() {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
