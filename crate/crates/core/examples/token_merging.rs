// Merge removed tokens into their nearest retained neighbour and compare the
// reconstruction error against plain pruning.
//
//     cargo run --example token_merging

use tokenreduce::grid::TokenGrid;
use tokenreduce::guidance::ScoreVector;
use tokenreduce::merging::{assign_nearest, merge, merge_report, MergeReport};
use tokenreduce::selection::RetainedSet;

pub fn run_example() -> tokenreduce::Result<MergeReport> {
    #[rustfmt::skip]
    let tokens = TokenGrid::new(1, 5, 2, vec![
        1.0, 0.0,
        0.0, 1.0,
        1.0, 0.1,
        0.9, -0.1,
        0.1, 0.9,
    ])?;
    let scores = ScoreVector::new(vec![0.9, 0.8, 0.3, 0.2, 0.1])?;
    let retained = RetainedSet::from_indices(vec![0, 1], tokens.len())?;

    let assignment = assign_nearest(&tokens, &retained);
    for &(i, j) in assignment.pairs() {
        println!("token {i} -> {j}");
    }
    let compressed = merge(&tokens, &retained, &assignment, 1.0)?;
    for (slot, &j) in compressed.indices().iter().enumerate() {
        println!("merged {j}: {:?}", compressed.feature(slot));
    }
    let report = merge_report(&tokens, &scores, &retained, &compressed, &assignment)?;
    println!(
        "surrogate {:.3}  merge error {:.4}  prune error {:.4}",
        report.surrogate, report.merge_error, report.prune_error
    );
    Ok(report)
}

fn main() {
    if let Err(e) = run_example() {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
