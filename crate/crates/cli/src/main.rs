//! `ptp`: command-line front end for the token-pruning engine.
//!
//! Exit codes: 0 on success, 1 for usage errors (bad flags or flag values),
//! 2 for data errors (unreadable or inconsistent bundles, specs, reports).

mod mask;
mod report;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::anyhow;
use clap::{Parser, Subcommand};
use ptp_core::baselines::{self, compare, score_mass, RANDOM_GENERATOR};
use ptp_core::fusion::prune_traced;
use ptp_core::synth::{generate, SynthSpec};
use ptp_core::tiling::{DEFAULT_MAX_TILES, DEFAULT_TILE_PX, DEFAULT_TOKENS_PER_TILE};
use ptp_core::{
    plan_grid, AttentionBundle, EfficiencyReport, HeadMode, LlmProfile, PruneConfig, Strategy,
    TokenMode,
};

use report::{CompareReport, CompareRow, Efficiency, RatioOverlaps, RunReport};

const PROFILE_ENV: &str = "PTP_PROFILE";

#[derive(Debug, Parser)]
#[command(
    name = "ptp",
    version,
    about = "Visual token pruning for tiled vision-language inputs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, clap::Args)]
struct PruneArgs {
    /// Fraction of visual tokens to remove, in [0, 1).
    #[arg(long, default_value_t = 0.5)]
    ratio: f64,
    /// Weight of the instruction signal, in [0, 1].
    #[arg(long, default_value_t = 0.5)]
    alpha: f32,
    #[arg(long, default_value = "mean")]
    head_mode: HeadMode,
    #[arg(long, default_value = "max")]
    token_mode: TokenMode,
    #[arg(long, default_value = "mean")]
    llm_head_mode: HeadMode,
    /// Worker threads for per-region work (defaults to all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// LLM profile JSON; falls back to $PTP_PROFILE, then the built-in 2B profile.
    #[arg(long)]
    profile: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic bundle from a spec file.
    Synth {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Prune a bundle and write a JSON run report.
    Prune {
        #[arg(long)]
        bundle: PathBuf,
        #[command(flatten)]
        args: PruneArgs,
        #[arg(long, default_value = "ptp")]
        strategy: Strategy,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render a run report's kept set as a PGM image.
    Mask {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare pruning strategies on one bundle across ratios.
    Compare {
        #[arg(long)]
        bundle: PathBuf,
        /// Pruning ratio; repeat for several.
        #[arg(long = "ratio", default_values_t = vec![0.5])]
        ratios: Vec<f64>,
        #[arg(long, default_value_t = 0.5)]
        alpha: f32,
        /// Number of random-baseline seeds.
        #[arg(long, default_value_t = 100)]
        seeds: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Strategies to tabulate; repeat for several.
        #[arg(long = "strategy", default_values_t = vec![Strategy::Ptp, Strategy::Random, Strategy::Spatial])]
        strategies: Vec<Strategy>,
        #[arg(long, default_value = "mean")]
        head_mode: HeadMode,
        #[arg(long, default_value = "max")]
        token_mode: TokenMode,
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Print FLOPs and KV-cache size for visual token counts.
    Flops {
        /// Token count; repeat for several.
        #[arg(long = "tokens", required = true)]
        tokens: Vec<u64>,
        #[arg(long)]
        profile: Option<PathBuf>,
    },
    /// Plan the sub-image grid for an image size.
    Grid {
        #[arg(long)]
        width: u32,
        #[arg(long)]
        height: u32,
        #[arg(long, default_value_t = DEFAULT_MAX_TILES)]
        max_tiles: usize,
        #[arg(long, default_value_t = DEFAULT_TILE_PX)]
        tile_px: u32,
        #[arg(long, default_value_t = DEFAULT_TOKENS_PER_TILE)]
        tokens_per_tile: usize,
        #[arg(long)]
        no_thumbnail: bool,
    },
}

#[derive(Debug)]
enum CliError {
    Usage(anyhow::Error),
    Data(anyhow::Error),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
        }
    }
}

type CliResult<T> = Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(anyhow!(msg.into()))
}

trait DataContext<T> {
    fn data(self, what: impl FnOnce() -> String) -> CliResult<T>;
}

impl<T, E: Into<anyhow::Error>> DataContext<T> for Result<T, E> {
    fn data(self, what: impl FnOnce() -> String) -> CliResult<T> {
        self.map_err(|e| CliError::Data(e.into().context(what())))
    }
}

fn check_ratio(r: f64) -> CliResult<()> {
    if r.is_finite() && (0.0..1.0).contains(&r) {
        Ok(())
    } else {
        Err(usage(format!("--ratio must lie in [0, 1), got {r}")))
    }
}

fn check_alpha(a: f32) -> CliResult<()> {
    if a.is_finite() && (0.0..=1.0).contains(&a) {
        Ok(())
    } else {
        Err(usage(format!("--alpha must lie in [0, 1], got {a}")))
    }
}

fn load_profile(path: Option<&Path>) -> CliResult<LlmProfile> {
    let path = match path {
        Some(p) => Some(p.to_path_buf()),
        None => std::env::var_os(PROFILE_ENV).map(PathBuf::from),
    };
    match path {
        None => Ok(LlmProfile::default()),
        Some(p) => {
            let text =
                std::fs::read_to_string(&p).data(|| format!("reading profile {}", p.display()))?;
            LlmProfile::from_json(&text).data(|| format!("parsing profile {}", p.display()))
        }
    }
}

fn load_bundle(dir: &Path) -> CliResult<AttentionBundle> {
    AttentionBundle::load(dir).data(|| format!("loading bundle {}", dir.display()))
}

fn thread_pool(threads: Option<usize>) -> CliResult<Option<rayon::ThreadPool>> {
    match threads {
        None => Ok(None),
        Some(0) => Err(usage("--threads must be at least 1")),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map(Some)
            .map_err(|e| CliError::Usage(e.into())),
    }
}

fn in_pool<T: Send>(pool: &Option<rayon::ThreadPool>, f: impl FnOnce() -> T + Send) -> T {
    match pool {
        Some(p) => p.install(f),
        None => f(),
    }
}

fn cmd_synth(spec: &Path, out: &Path) -> CliResult<()> {
    let text = std::fs::read_to_string(spec).data(|| format!("reading spec {}", spec.display()))?;
    let spec = SynthSpec::from_json(&text).data(|| "parsing synth spec".to_string())?;
    let bundle = generate(&spec).data(|| "generating bundle".to_string())?;
    bundle
        .save(out)
        .data(|| format!("writing bundle {}", out.display()))?;
    println!(
        "wrote {} ({} regions x {} tokens = {})",
        out.display(),
        bundle.grid.regions(),
        bundle.grid.tokens_per_tile,
        bundle.grid.total_tokens()
    );
    Ok(())
}

fn cmd_prune(
    bundle_dir: &Path,
    args: &PruneArgs,
    strategy: Strategy,
    seed: u64,
    out: &Path,
) -> CliResult<()> {
    check_ratio(args.ratio)?;
    check_alpha(args.alpha)?;
    let pool = thread_pool(args.threads)?;
    let profile = load_profile(args.profile.as_deref())?;
    let bundle = load_bundle(bundle_dir)?;
    let config = PruneConfig {
        ratio: args.ratio,
        alpha: args.alpha,
        strategy,
        seed,
        head_mode: args.head_mode,
        token_mode: args.token_mode,
        llm_head_mode: args.llm_head_mode,
    };

    let trace = in_pool(&pool, || prune_traced(&bundle, &config)).data(|| "pruning".to_string())?;
    let grid = bundle.grid;
    let k = trace.result.total_budget;
    let random =
        baselines::random_prune(grid.total_tokens(), k, seed).data(|| "random baseline".into())?;
    let spatial = baselines::spatial_prune(&grid, k).data(|| "spatial baseline".into())?;
    let mut overlap = BTreeMap::new();
    for (name, kept) in [("random", random), ("spatial", spatial)] {
        let rep = compare(&trace.result.kept, &kept, &trace.fused.s, &grid)
            .data(|| format!("comparing with {name}"))?;
        overlap.insert(name.to_string(), rep);
    }

    let report = RunReport {
        schema: report::REPORT_SCHEMA.to_string(),
        config,
        grid,
        vision_layer: bundle.vision_layer,
        llm_block: bundle.llm_block,
        efficiency: Efficiency::new(grid.total_tokens(), trace.result.kept.len(), profile),
        result: trace.result,
        overlap,
        random_generator: RANDOM_GENERATOR.to_string(),
    };
    report::write_json(out, &report).data(|| format!("writing {}", out.display()))?;
    println!(
        "kept {} of {} tokens; {:.2} TFLOPs, {:.1} MB KV cache",
        report.result.total_budget,
        report.result.total_tokens,
        ptp_core::efficiency::round_to(report.efficiency.pruned.tflops, 2),
        ptp_core::efficiency::round_to(report.efficiency.pruned.kv_cache_mb, 1),
    );
    Ok(())
}

fn cmd_mask(bundle_dir: &Path, report_path: &Path, out: &Path) -> CliResult<()> {
    let bundle = load_bundle(bundle_dir)?;
    let text = std::fs::read_to_string(report_path)
        .data(|| format!("reading report {}", report_path.display()))?;
    let report: RunReport =
        serde_json::from_str(&text).data(|| format!("parsing report {}", report_path.display()))?;
    if report.grid != bundle.grid || report.result.total_tokens != bundle.grid.total_tokens() {
        return Err(CliError::Data(anyhow!(
            "report grid {:?} does not match bundle grid {:?}",
            report.grid,
            bundle.grid
        )));
    }
    if let Some(&bad) = report
        .result
        .kept
        .iter()
        .find(|&&i| i >= bundle.grid.total_tokens())
    {
        return Err(CliError::Data(anyhow!(
            "kept index {bad} outside the bundle"
        )));
    }
    let bytes = mask::render(&bundle.grid, &report.result.mask()).map_err(CliError::Data)?;
    report::write_atomic(out, &bytes).data(|| format!("writing {}", out.display()))?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_compare(
    bundle_dir: &Path,
    ratios: &[f64],
    alpha: f32,
    seeds: usize,
    base_seed: u64,
    strategies: &[Strategy],
    head_mode: HeadMode,
    token_mode: TokenMode,
    threads: Option<usize>,
    out: &Path,
    csv_path: Option<&Path>,
) -> CliResult<()> {
    for &r in ratios {
        check_ratio(r)?;
    }
    check_alpha(alpha)?;
    if seeds == 0 {
        return Err(usage("--seeds must be at least 1"));
    }
    let pool = thread_pool(threads)?;
    let bundle = load_bundle(bundle_dir)?;
    let grid = bundle.grid;
    let base = PruneConfig {
        alpha,
        head_mode,
        token_mode,
        ..PruneConfig::default()
    };

    let mut rows = Vec::new();
    let mut per_ratio = Vec::new();
    for &ratio in ratios {
        let ptp_cfg = base.with_ratio(ratio).with_strategy(Strategy::Ptp);
        let ptp = in_pool(&pool, || prune_traced(&bundle, &ptp_cfg)).data(|| "pruning".into())?;
        let s = &ptp.fused.s;
        let mut overlaps = BTreeMap::new();

        for &strategy in strategies {
            let runs: Vec<u64> = if strategy == Strategy::Random {
                (0..seeds as u64)
                    .map(|i| base_seed.wrapping_add(i))
                    .collect()
            } else {
                vec![base_seed]
            };
            let mut masses = Vec::with_capacity(runs.len());
            let mut jaccards = Vec::with_capacity(runs.len());
            let mut kept_len = 0;
            for (i, &seed) in runs.iter().enumerate() {
                let cfg = base
                    .with_ratio(ratio)
                    .with_strategy(strategy)
                    .with_seed(seed);
                let kept = in_pool(&pool, || prune_traced(&bundle, &cfg))
                    .data(|| format!("pruning with {strategy}"))?
                    .result
                    .kept;
                masses.push(score_mass(&kept, s).data(|| "score mass".into())?);
                jaccards.push(baselines::jaccard(&ptp.result.kept, &kept));
                if i == 0 {
                    let rep = compare(&ptp.result.kept, &kept, s, &grid)
                        .data(|| format!("comparing with {strategy}"))?;
                    overlaps.insert(strategy.to_string(), rep);
                }
                kept_len = kept.len();
            }
            let n = masses.len() as f64;
            let mean = masses.iter().sum::<f64>() / n;
            let var = masses.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / n;
            rows.push(CompareRow {
                strategy: strategy.to_string(),
                ratio,
                kept: kept_len,
                score_mass_retained: mean,
                score_mass_std: var.sqrt(),
                jaccard_vs_ptp: jaccards.iter().sum::<f64>() / n,
                runs: masses.len(),
            });
        }
        per_ratio.push(RatioOverlaps { ratio, overlaps });
    }

    let rep = CompareReport {
        schema: report::COMPARE_SCHEMA.to_string(),
        alpha,
        seeds,
        base_seed,
        random_generator: RANDOM_GENERATOR.to_string(),
        rows,
        per_ratio,
    };
    report::write_json(out, &rep).data(|| format!("writing {}", out.display()))?;
    if let Some(path) = csv_path {
        let mut w = csv::Writer::from_writer(Vec::new());
        for row in &rep.rows {
            w.serialize(row).data(|| "encoding csv".into())?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| CliError::Data(anyhow!(e.to_string())))?;
        report::write_atomic(path, &bytes).data(|| format!("writing {}", path.display()))?;
    }
    for row in &rep.rows {
        println!(
            "{:<16} r={:<5} kept={:<6} mass={:.4} jaccard={:.4}",
            row.strategy, row.ratio, row.kept, row.score_mass_retained, row.jaccard_vs_ptp
        );
    }
    Ok(())
}

fn cmd_flops(tokens: &[u64], profile: Option<&Path>) -> CliResult<()> {
    let profile = load_profile(profile)?;
    println!("tokens, tflops, kv_cache_mb");
    for &n in tokens {
        println!("{}", EfficiencyReport::new(n, &profile).table_row());
    }
    Ok(())
}

fn cmd_grid(
    width: u32,
    height: u32,
    max_tiles: usize,
    tile_px: u32,
    tokens_per_tile: usize,
    no_thumbnail: bool,
) -> CliResult<()> {
    if tokens_per_tile == 0 {
        return Err(usage("--tokens-per-tile must be positive"));
    }
    let grid = plan_grid(width, height, max_tiles, tile_px)
        .with_tokens_per_tile(tokens_per_tile)
        .with_thumbnail(!no_thumbnail);
    let value = serde_json::json!({
        "grid": grid,
        "sub_images": grid.sub_images(),
        "total_tokens": grid.total_tokens(),
    });
    println!(
        "{}",
        serde_json::to_string_pretty(&value).expect("grid serializes")
    );
    Ok(())
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Synth { spec, out } => cmd_synth(&spec, &out),
        Command::Prune {
            bundle,
            args,
            strategy,
            seed,
            out,
        } => cmd_prune(&bundle, &args, strategy, seed, &out),
        Command::Mask {
            bundle,
            report,
            out,
        } => cmd_mask(&bundle, &report, &out),
        Command::Compare {
            bundle,
            ratios,
            alpha,
            seeds,
            seed,
            strategies,
            head_mode,
            token_mode,
            threads,
            out,
            csv,
        } => cmd_compare(
            &bundle,
            &ratios,
            alpha,
            seeds,
            seed,
            &strategies,
            head_mode,
            token_mode,
            threads,
            &out,
            csv.as_deref(),
        ),
        Command::Flops { tokens, profile } => cmd_flops(&tokens, profile.as_deref()),
        Command::Grid {
            width,
            height,
            max_tiles,
            tile_px,
            tokens_per_tile,
            no_thumbnail,
        } => cmd_grid(
            width,
            height,
            max_tiles,
            tile_px,
            tokens_per_tile,
            no_thumbnail,
        ),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let code = err.code();
            let (CliError::Usage(e) | CliError::Data(e)) = err;
            eprintln!("error: {e:#}");
            ExitCode::from(code)
        }
    }
}
