// Pool a latent grid into anchors, project it into token space and score
// every token by cosine similarity to its anchor.
//
//     cargo run --example anchor_scoring

use tokenreduce::grid::{
    align_anchors, anchor_map, pool_latents, LatentGrid, ProjectionMatrix, TokenGrid,
};
use tokenreduce::guidance::score_latent;

pub fn run_example() -> tokenreduce::Result<Vec<f64>> {
    // 2x4 tokens of dim 2, a 2x4 latent grid of dim 3
    #[rustfmt::skip]
    let tokens = TokenGrid::new(2, 4, 2, vec![
        1.0, 0.0,  0.9, 0.2,  0.0, 1.0,  0.3, 0.9,
        0.8, 0.1,  -1.0, 0.0, 0.1, 1.0,  0.0, -1.0,
    ])?;
    #[rustfmt::skip]
    let latents = LatentGrid::new(2, 4, 3, vec![
        1.0, 0.0, 0.5,  1.0, 0.0, 0.5,  0.0, 1.0, 0.5,  0.0, 1.0, 0.5,
        1.0, 0.0, 0.5,  1.0, 0.0, 0.5,  0.0, 1.0, 0.5,  0.0, 1.0, 0.5,
    ])?;
    // drops the third latent channel
    let projection = ProjectionMatrix::new(3, 2, vec![1.0, 0.0, 0.0, 1.0, 0.0, 0.0])?;

    let pooled = pool_latents(&latents);
    println!(
        "anchors: {}x{} (from {}x{} latents)",
        pooled.height(),
        pooled.width(),
        latents.height(),
        latents.width()
    );
    let anchors = align_anchors(pooled, Some(&projection), tokens.dim())?;
    let cells = anchor_map(&tokens, anchors.height(), anchors.width());

    let scores = score_latent(&tokens, &anchors)?;
    for (i, (s, cell)) in scores.as_slice().iter().zip(&cells).enumerate() {
        let (row, col) = tokens.position(i);
        println!(
            "token ({row},{col}) -> anchor ({},{})  score {s:+.3}",
            cell.row, cell.col
        );
    }
    Ok(scores.into_inner())
}

fn main() {
    if let Err(e) = run_example() {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
