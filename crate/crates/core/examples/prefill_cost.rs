// Prefill FLOPs and KV-cache accounting for a reduced visual span.
//
//     cargo run --example prefill_cost

use tokenreduce::costmodel::{compare, CostReport, ModelCostSpec};
use tokenreduce::selection::compute_budget;

pub fn run_example() -> tokenreduce::Result<Vec<CostReport>> {
    let spec = ModelCostSpec::REFERENCE;
    let (text, visual) = (256, 4608);
    println!(
        "quadratic attention share of the full prefill: {:.1}%",
        100.0 * spec.quadratic_share(text + visual)
    );

    let mut reports = Vec::new();
    for rho in [1.0, 0.75, 0.5, 0.25] {
        let k = compute_budget(rho, visual as usize, 1)?.k as u64;
        let r = compare(&spec, text, visual, k)?;
        println!(
            "rho {rho:<4} visual {:>4}  flops {:.4} ({})  kv {:.1} MiB ({})",
            k,
            r.flops_ratio,
            r.flops_speedup,
            r.kv_bytes_reduced as f64 / (1 << 20) as f64,
            r.kv_reduction
        );
        reports.push(r);
    }
    Ok(reports)
}

fn main() {
    if let Err(e) = run_example() {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
