// Run every guidance strategy on the same dump and compare what they keep.
//
//     cargo run --example guidance_ablation

use tokenreduce::cli::compare_strategies;
use tokenreduce::grid::{LatentGrid, TokenGrid};
use tokenreduce::guidance::SplitMix64;
use tokenreduce::io::dump::FeatureDump;
use tokenreduce::io::result::ComparisonDoc;
use tokenreduce::pipeline::ReductionConfig;

pub fn run_example() -> tokenreduce::Result<ComparisonDoc> {
    let mut rng = SplitMix64::new(42);
    let mut noise =
        |n: usize| -> Vec<f32> { (0..n).map(|_| rng.next_f64() as f32 - 0.5).collect() };
    let mut dump = FeatureDump::new(
        TokenGrid::new(6, 6, 4, noise(144))?,
        LatentGrid::new(6, 6, 4, noise(144))?,
    );
    dump.side.text_embeddings = Some(vec![noise(4), noise(4)]);
    dump.side.attention_importance = Some(noise(36).into_iter().map(f32::abs).collect());

    let doc = compare_strategies(
        &dump,
        &ReductionConfig {
            rho: 0.25,
            ..ReductionConfig::default()
        },
    )?;
    println!("keeping {} of {}", doc.k, doc.n_tokens);
    for row in &doc.rows {
        println!(
            "{:<8} merge error {:.4}  prune error {:.4}  {:?}",
            row.strategy.as_str(),
            row.merge_error,
            row.prune_error,
            row.retained
        );
    }
    for o in &doc.overlaps {
        println!("overlap {} / {}: {:.2}", o.a, o.b, o.overlap);
    }
    Ok(doc)
}

fn main() {
    if let Err(e) = run_example() {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
