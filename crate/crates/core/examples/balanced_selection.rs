// Budgeted selection with per-cell coverage.
//
//     cargo run --example balanced_selection

use tokenreduce::guidance::ScoreVector;
use tokenreduce::selection::{
    balanced_select, compute_budget, per_anchor_best, CellLayout, RetainedSet,
};

pub fn run_example() -> tokenreduce::Result<Vec<RetainedSet>> {
    // 4 tokens in a row, two per anchor cell
    let layout = CellLayout {
        token_h: 1,
        token_w: 4,
        anchor_h: 1,
        anchor_w: 2,
    };
    let scores = ScoreVector::new(vec![0.9, 0.85, 0.1, 0.2])?;
    let best = per_anchor_best(&scores, layout);
    println!("best per cell: {:?}", best.values().collect::<Vec<_>>());

    let mut kept = Vec::new();
    for rho in [0.25, 0.5, 0.75, 1.0] {
        let budget = compute_budget(rho, layout.n_tokens(), 1)?;
        let s = balanced_select(&scores, &best, &budget)?;
        // plain top-K would keep {0, 1} at K=2 and leave the right cell empty
        println!("rho {rho:<4}  K={}  retained {:?}", budget.k, s.indices());
        kept.push(s);
    }
    Ok(kept)
}

fn main() {
    if let Err(e) = run_example() {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
