//! Command-line front end: `reduce`, `cost` and `compare`.
//!
//! Exit codes: 0 on success, 2 for bad input or flags, 1 when an internal
//! invariant breaks.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use crate::costmodel::{compare, CostReport, ModelCostSpec};
use crate::error::{Error, Result};
use crate::guidance::Strategy;
use crate::io::dump::{read_dump, FeatureDump};
use crate::io::json::{sig9, to_pretty};
use crate::io::mask::write_mask;
use crate::io::result::{
    f32_le_bytes, overlap_fraction, ComparisonDoc, MergedFeatures, Overlap, ReductionResultDoc,
    StrategyRow, Warning,
};
use crate::io::{read_file, write_atomic};
use crate::layout::{rebuild, Segment, SequenceSpec};
use crate::pipeline::{reduce, ReductionConfig, ReductionInput};
use crate::selection::compute_budget;

#[derive(Debug, Parser)]
#[command(
    name = "tokenreduce",
    version,
    about = "Latent-guided visual token reduction"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Reduce the visual tokens of one dump (or every *.g2fd file in a directory).
    Reduce(ReduceArgs),
    /// Prefill FLOPs and KV-cache accounting for a token mix.
    Cost(CostArgs),
    /// Run every guidance strategy on one dump and compare the retained sets.
    Compare(CompareArgs),
}

#[derive(Debug, Args)]
pub struct ReduceArgs {
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    pub rho: f64,
    #[arg(long, default_value_t = 1)]
    pub kmin: usize,
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
    #[arg(long, default_value = "latent")]
    pub strategy: Strategy,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Result JSON; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Retained-token mask (binary PGM).
    #[arg(long)]
    pub mask: Option<PathBuf>,
    /// Raw little-endian f32 sidecar for merged features instead of inline base64.
    #[arg(long)]
    pub merged_out: Option<PathBuf>,
    /// Sequence layout JSON with a single visual span; defaults to a bare image.
    #[arg(long)]
    pub layout: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CostArgs {
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long)]
    pub text: u64,
    #[arg(long)]
    pub visual: u64,
    #[arg(long, default_value_t = 0.5)]
    pub rho: f64,
    #[arg(long, default_value_t = 1)]
    pub kmin: usize,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    pub rho: f64,
    #[arg(long, default_value_t = 1)]
    pub kmin: usize,
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind::{DisplayHelp, DisplayVersion};
            let shown = e.render().to_string();
            return if matches!(e.kind(), DisplayHelp | DisplayVersion) {
                let _ = stdout.write_all(shown.as_bytes());
                0
            } else {
                let _ = stderr.write_all(shown.as_bytes());
                2
            };
        }
    };
    let result = match &cli.command {
        Command::Reduce(a) => cmd_reduce(a, stdout, stderr),
        Command::Cost(a) => cmd_cost(a, stdout),
        Command::Compare(a) => cmd_compare(a, stdout),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}

fn emit(out: Option<&Path>, text: &str, stdout: &mut dyn Write) -> Result<()> {
    match out {
        Some(p) => write_atomic(p, text.as_bytes()),
        None => stdout
            .write_all(text.as_bytes())
            .map_err(|e| Error::io("<stdout>", e)),
    }
}

impl ReduceArgs {
    fn config(&self) -> ReductionConfig {
        ReductionConfig {
            rho: self.rho,
            k_min: self.kmin,
            lambda: self.lambda,
            strategy: self.strategy,
            seed: self.seed,
        }
    }
}

struct ReduceTargets<'a> {
    out: Option<&'a Path>,
    mask: Option<&'a Path>,
    merged_out: Option<&'a Path>,
}

fn load_layout(path: Option<&Path>, n_tokens: usize) -> Result<SequenceSpec> {
    let Some(path) = path else {
        return Ok(SequenceSpec::single_image(n_tokens));
    };
    let spec: SequenceSpec = serde_json::from_slice(&read_file(path)?)?;
    let spans: Vec<usize> = spec
        .segments
        .iter()
        .filter_map(|s| match s {
            Segment::VisualSpan { count } => Some(*count),
            _ => None,
        })
        .collect();
    if spans != [n_tokens] {
        return Err(Error::MalformedSpec(format!(
            "layout must contain exactly one visual span of {n_tokens} tokens, found {spans:?}"
        )));
    }
    Ok(spec)
}

/// Runs the reduction for one dump and returns the result JSON.
fn reduce_dump(
    dump: &FeatureDump,
    config: &ReductionConfig,
    layout: Option<&Path>,
    targets: &ReduceTargets<'_>,
) -> Result<String> {
    let input = ReductionInput::new(&dump.tokens, &dump.latents, &dump.side)
        .with_projection(dump.projection.as_ref());
    let result = reduce(&input, config)?;
    let spec = load_layout(layout, dump.tokens.len())?;
    let rebuilt = rebuild(&spec, &result.compressed)?;
    if rebuilt.visual_slots.iter().map(|s| s.len).sum::<usize>() != result.retained.len() {
        return Err(Error::Internal(
            "rebuilt visual span does not match K".into(),
        ));
    }

    let c = &result.compressed;
    let merged = match targets.merged_out {
        Some(p) => {
            write_atomic(p, &f32_le_bytes(c.features()))?;
            MergedFeatures::SidecarF32le {
                count: c.len(),
                dim: c.dim(),
                path: p.display().to_string(),
            }
        }
        None => MergedFeatures::inline(c.len(), c.dim(), c.features()),
    };
    if let Some(p) = targets.mask {
        write_mask(
            p,
            dump.tokens.height(),
            dump.tokens.width(),
            result.retained.indices(),
        )?;
    }
    to_pretty(&ReductionResultDoc::new(&result, &rebuilt, merged))
}

fn cmd_reduce(args: &ReduceArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<()> {
    let config = args.config();
    config.validate()?;
    if args.features.is_dir() {
        return reduce_directory(args, &config, stderr);
    }
    let dump = read_dump(&args.features)?;
    let targets = ReduceTargets {
        out: args.out.as_deref(),
        mask: args.mask.as_deref(),
        merged_out: args.merged_out.as_deref(),
    };
    let json = reduce_dump(&dump, &config, args.layout.as_deref(), &targets)?;
    emit(targets.out, &json, stdout)
}

/// Every `*.g2fd` file of the directory, processed in parallel. Outputs land in
/// the `--out` directory (and the `--mask` / `--merged-out` directories when
/// given) under the input's file stem.
fn reduce_directory(
    args: &ReduceArgs,
    config: &ReductionConfig,
    stderr: &mut dyn Write,
) -> Result<()> {
    let out_dir = args
        .out
        .as_deref()
        .ok_or_else(|| Error::config("out", "a directory of features needs an --out directory"))?;
    let mut inputs: Vec<PathBuf> = std::fs::read_dir(&args.features)
        .map_err(|e| Error::io(&args.features, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "g2fd") && p.is_file())
        .collect();
    inputs.sort();
    let mut dirs = vec![out_dir];
    dirs.extend(args.mask.as_deref());
    dirs.extend(args.merged_out.as_deref());
    for d in dirs {
        std::fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
    }

    let outcomes: Vec<(PathBuf, Result<()>)> = inputs
        .par_iter()
        .map(|input| {
            let stem = input
                .file_stem()
                .unwrap_or_default()
                .to_string_lossy()
                .into_owned();
            let out = out_dir.join(format!("{stem}.json"));
            let mask = args.mask.as_ref().map(|d| d.join(format!("{stem}.pgm")));
            let merged = args
                .merged_out
                .as_ref()
                .map(|d| d.join(format!("{stem}.f32")));
            let targets = ReduceTargets {
                out: Some(&out),
                mask: mask.as_deref(),
                merged_out: merged.as_deref(),
            };
            let run = || -> Result<()> {
                let dump = read_dump(input)?;
                let json = reduce_dump(&dump, config, args.layout.as_deref(), &targets)?;
                write_atomic(&out, json.as_bytes())
            };
            (input.clone(), run())
        })
        .collect();

    let mut first_err = None;
    for (input, outcome) in outcomes {
        if let Err(e) = outcome {
            let _ = writeln!(stderr, "error: {}: {e}", input.display());
            first_err.get_or_insert(e);
        }
    }
    first_err.map_or(Ok(()), Err)
}

#[derive(Debug, serde::Serialize)]
pub struct CostDoc {
    pub spec: ModelCostSpec,
    #[serde(serialize_with = "sig9")]
    pub rho: f64,
    pub kmin: usize,
    pub report: CostReport,
}

pub fn cost_doc(
    spec: &ModelCostSpec,
    text: u64,
    visual: u64,
    rho: f64,
    kmin: usize,
) -> Result<CostDoc> {
    spec.validate()?;
    if visual < 1 {
        return Err(Error::config("visual", "must be >= 1"));
    }
    let n_visual = usize::try_from(visual).map_err(|_| Error::config("visual", "too large"))?;
    let k = compute_budget(rho, n_visual, kmin)?.k as u64;
    Ok(CostDoc {
        spec: *spec,
        rho,
        kmin,
        report: compare(spec, text, visual, k)?,
    })
}

fn cmd_cost(args: &CostArgs, stdout: &mut dyn Write) -> Result<()> {
    let spec: ModelCostSpec = serde_json::from_slice(&read_file(&args.spec)?)?;
    let doc = cost_doc(&spec, args.text, args.visual, args.rho, args.kmin)?;
    emit(None, &to_pretty(&doc)?, stdout)
}

pub fn compare_strategies(dump: &FeatureDump, base: &ReductionConfig) -> Result<ComparisonDoc> {
    base.validate()?;
    let input = ReductionInput::new(&dump.tokens, &dump.latents, &dump.side)
        .with_projection(dump.projection.as_ref());
    let mut rows = Vec::new();
    let mut warnings = Vec::new();
    for strategy in Strategy::ALL {
        let config = ReductionConfig { strategy, ..*base };
        match reduce(&input, &config) {
            Ok(r) => rows.push(StrategyRow {
                strategy,
                retained: r.retained.indices().to_vec(),
                surrogate: r.report.surrogate,
                merge_error: r.report.merge_error,
                prune_error: r.report.prune_error,
            }),
            Err(Error::MissingSideInput(what)) => warnings.push(Warning {
                strategy,
                message: format!("skipped: dump has no {what} section"),
            }),
            Err(e) => return Err(e),
        }
    }
    let k = compute_budget(base.rho, dump.tokens.len(), base.k_min)?.k;
    let mut overlaps = Vec::new();
    for (i, a) in rows.iter().enumerate() {
        for b in &rows[i + 1..] {
            overlaps.push(Overlap {
                a: a.strategy,
                b: b.strategy,
                overlap: overlap_fraction(&a.retained, &b.retained, k),
            });
        }
    }
    Ok(ComparisonDoc {
        rho: base.rho,
        kmin: base.k_min,
        lambda: base.lambda,
        seed: base.seed,
        n_tokens: dump.tokens.len(),
        k,
        rows,
        overlaps,
        warnings,
    })
}

fn cmd_compare(args: &CompareArgs, stdout: &mut dyn Write) -> Result<()> {
    let dump = read_dump(&args.features)?;
    let base = ReductionConfig {
        rho: args.rho,
        k_min: args.kmin,
        lambda: args.lambda,
        strategy: Strategy::Latent,
        seed: args.seed,
    };
    let doc = compare_strategies(&dump, &base)?;
    emit(args.out.as_deref(), &to_pretty(&doc)?, stdout)
}
