// Write a feature dump, read it back and reject a corrupted copy.
//
//     cargo run --example feature_dump

use tokenreduce::grid::{LatentGrid, TokenGrid};
use tokenreduce::guidance::SplitMix64;
use tokenreduce::io::dump::{read_dump, write_dump, FeatureDump};

fn noise(rng: &mut SplitMix64, n: usize) -> Vec<f32> {
    (0..n).map(|_| rng.next_f64() as f32 * 2.0 - 1.0).collect()
}

pub fn run_example() -> tokenreduce::Result<FeatureDump> {
    let mut rng = SplitMix64::new(7);
    let mut dump = FeatureDump::new(
        TokenGrid::new(4, 4, 8, noise(&mut rng, 128))?,
        LatentGrid::new(4, 4, 8, noise(&mut rng, 128))?,
    );
    dump.side.attention_importance = Some((0..16).map(|i| i as f32 / 16.0).collect());

    let dir = std::env::temp_dir().join(format!("tokenreduce-example-{}", std::process::id()));
    std::fs::create_dir_all(&dir).map_err(|e| tokenreduce::Error::io(&dir, e))?;
    let path = dir.join("sample.g2fd");
    write_dump(&path, &dump)?;
    let back = read_dump(&path)?;
    assert_eq!(back, dump);
    println!(
        "{}: {} bytes, round-trip ok",
        path.display(),
        dump.encode()?.len()
    );

    let mut bytes = dump.encode()?;
    bytes.truncate(bytes.len() - 1);
    match FeatureDump::decode(&bytes) {
        Err(e) => println!("short file rejected: {e}"),
        Ok(_) => unreachable!("a truncated dump decoded"),
    }
    let _ = std::fs::remove_dir_all(&dir);
    Ok(back)
}

fn main() {
    if let Err(e) = run_example() {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
