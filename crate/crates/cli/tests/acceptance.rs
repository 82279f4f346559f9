//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.
//!
//! cargo test -p ptp-cli --test acceptance

#[path = "../../core/tests/support/oracle.rs"]
mod oracle;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use ptp_core::efficiency::round_to;
use ptp_core::fusion::{allocate_budgets, compute_signals, prune_scores};
use ptp_core::synth::{generate, planted_dominance_threshold, SynthSpec};
use ptp_core::tensor_store::{read_bundle, write_bundle, TensorEntry, TensorManifest, TensorMap};
use ptp_core::{EfficiencyReport, LlmProfile, PruneConfig, RegionScores, TileGrid};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(elapsed: Duration, limit: Duration, detail: String) -> Outcome {
    if elapsed < limit {
        Ok(format!("{detail}; {:.3}s", elapsed.as_secs_f64()))
    } else {
        Err(format!(
            "{detail}; took {:.3}s, limit {:?}",
            elapsed.as_secs_f64(),
            limit
        ))
    }
}

fn efficiency_table() -> Outcome {
    let start = Instant::now();
    let profile = LlmProfile::default();
    let rows = [
        (1792, 6.40, 336.0),
        (896, 3.04, 168.0),
        (716, 2.41, 134.3),
        (537, 1.79, 100.7),
        (358, 1.18, 67.1),
        (179, 0.58, 33.6),
    ];
    let mut bad = Vec::new();
    for (n, tflops, kv) in rows {
        let r = EfficiencyReport::new(n, &profile);
        let (t, m) = (round_to(r.tflops, 2), round_to(r.kv_cache_mb, 1));
        if t != tflops || m != kv {
            bad.push(format!(
                "n={n}: got ({t:.2}, {m:.1}), want ({tflops:.2}, {kv:.1})"
            ));
        }
    }
    if !bad.is_empty() {
        return Err(bad.join("; "));
    }
    within(start.elapsed(), Duration::from_secs(1), "6/6 rows".into())
}

fn token_counts() -> Outcome {
    let grid = TileGrid::new(2, 3).with_tokens_per_tile(256);
    let mut rng = ChaCha8Rng::seed_from_u64(0x70c);
    let mut bad = Vec::new();
    for (ratio, want) in [(0.5, 896), (0.6, 716), (0.7, 537), (0.8, 358), (0.9, 179)] {
        for trial in 0..20 {
            let mut a: Vec<f32> = (0..6).map(|_| rng.gen_range(-1.0..=1.0)).collect();
            if trial == 0 {
                a.fill(0.5);
            }
            a.push(1.0);
            let alloc =
                allocate_budgets(&RegionScores { a }, &grid, ratio).map_err(|e| e.to_string())?;
            let sum: usize = alloc.quotas.iter().sum();
            if alloc.total_budget != want || sum != want {
                bad.push(format!(
                    "r={ratio}: K={} sum={sum}, want {want}",
                    alloc.total_budget
                ));
            }
        }
    }
    check(
        bad.is_empty(),
        if bad.is_empty() {
            "5 ratios x 20 region draws".into()
        } else {
            bad.join("; ")
        },
    )
}

fn random_instance(rng: &mut ChaCha8Rng) -> oracle::Instance {
    let sub_images = rng.gen_range(1..=4);
    let n = rng.gen_range(1..=16);
    let total = (sub_images + 1) * n;
    let tied = rng.gen_bool(0.5);
    let score = |rng: &mut ChaCha8Rng| -> f32 {
        if tied {
            rng.gen_range(0..=4) as f32 / 4.0
        } else {
            rng.gen()
        }
    };
    let b = (0..total).map(|_| score(rng)).collect();
    let c = (0..total).map(|_| score(rng)).collect();
    let alpha = match rng.gen_range(0..10) {
        0 => 0.0,
        1 => 1.0,
        _ => rng.gen(),
    };
    oracle::Instance {
        sub_images,
        n,
        a: (0..sub_images).map(|_| rng.gen_range(-1.0..=1.0)).collect(),
        b,
        c,
        alpha,
        ratio: rng.gen_range(0.0..1.0),
    }
}

fn oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1000);
    let mut mismatches = 0;
    for _ in 0..1000 {
        let inst = random_instance(&mut rng);
        let grid = TileGrid::new(1, inst.sub_images).with_tokens_per_tile(inst.n);
        let config = PruneConfig::default()
            .with_ratio(inst.ratio)
            .with_alpha(inst.alpha);
        let a = [inst.a.as_slice(), &[1.0]].concat();
        let trace = prune_scores(&grid, &RegionScores { a }, &inst.b, &inst.c, &config)
            .map_err(|e| e.to_string())?;
        let (kept, _) = oracle::prune(&inst);
        if trace.result.kept != kept {
            mismatches += 1;
        }
    }
    if mismatches > 0 {
        return Err(format!(
            "{mismatches}/1000 instances differ from the oracle"
        ));
    }
    within(
        start.elapsed(),
        Duration::from_secs(10),
        "1000/1000 match".into(),
    )
}

fn budget_conservation() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10_000);
    let mut violations = 0;
    for _ in 0..10_000 {
        let grid = TileGrid::new(rng.gen_range(1..=4), rng.gen_range(1..=4))
            .with_tokens_per_tile(rng.gen_range(1..=64))
            .with_thumbnail(rng.gen_bool(0.8));
        let mut a: Vec<f32> = (0..grid.sub_images())
            .map(|_| rng.gen_range(-1.0..=1.0))
            .collect();
        if grid.has_thumbnail {
            a.push(1.0);
        }
        let ratio = rng.gen_range(0.0..1.0);
        let k = oracle::budget(grid.total_tokens(), ratio);
        match allocate_budgets(&RegionScores { a }, &grid, ratio) {
            Ok(alloc)
                if alloc.total_budget == k
                    && alloc.quotas.iter().sum::<usize>() == k
                    && alloc.quotas.iter().all(|&q| q <= grid.tokens_per_tile) => {}
            _ => violations += 1,
        }
    }
    check(
        violations == 0,
        format!("{violations} violations in 10000 draws"),
    )
}

fn random_spec(rng: &mut ChaCha8Rng, seed: u64) -> SynthSpec {
    let side = rng.gen_range(2..=4);
    let grid =
        TileGrid::new(rng.gen_range(1..=3), rng.gen_range(1..=3)).with_tokens_per_tile(side * side);
    let mut spec = SynthSpec::new(grid, seed);
    spec.d = rng.gen_range(4..=32);
    spec.query_len = rng.gen_range(1..=6);
    spec.vision_heads = rng.gen_range(1..=4);
    spec.llm_heads = rng.gen_range(1..=4);
    spec.concentration = rng.gen_range(0.0..5.0);
    spec.hot_tiles = (0..grid.sub_images())
        .filter(|_| rng.gen_bool(0.3))
        .collect();
    spec
}

fn alpha_extremes() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    let mut violations = 0;
    for seed in 0..100 {
        let bundle = generate(&random_spec(&mut rng, seed)).map_err(|e| e.to_string())?;
        let ratio = rng.gen_range(0.0..1.0);
        for alpha in [0.0f32, 1.0] {
            let config = PruneConfig::default().with_ratio(ratio).with_alpha(alpha);
            let sig = compute_signals(&bundle, &config).map_err(|e| e.to_string())?;
            let (b, c) = (sig.bottom_up.b.clone(), sig.top_down.c.clone());
            let run = |b: &[f32], c: &[f32]| {
                prune_scores(&bundle.grid, &sig.regions, b, c, &config).map(|t| t.result.kept)
            };
            let base = run(&b, &c).map_err(|e| e.to_string())?;
            for _ in 0..5 {
                let (mut b2, mut c2) = (b.clone(), c.clone());
                if alpha == 0.0 {
                    c2.shuffle(&mut rng);
                } else {
                    b2.shuffle(&mut rng);
                }
                if run(&b2, &c2).map_err(|e| e.to_string())? != base {
                    violations += 1;
                }
            }
        }
    }
    check(
        violations == 0,
        format!("{violations} violations over 100 bundles x 2 extremes x 5 permutations"),
    )
}

fn planted_recall() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5a1);
    let (mut found, mut planted, mut skipped) = (0usize, 0usize, Vec::new());
    for seed in 0..100u64 {
        let grid =
            TileGrid::new(rng.gen_range(1..=3), rng.gen_range(1..=3)).with_tokens_per_tile(64);
        let mut spec = SynthSpec::new(grid, seed);
        spec.concentration = 1e3;
        spec.hot_tiles = (0..grid.sub_images())
            .filter(|_| rng.gen_bool(0.3))
            .collect();
        let mut hot = BTreeMap::new();
        for region in 0..grid.regions() {
            if rng.gen_bool(0.7) {
                let count = rng.gen_range(1..=6);
                hot.insert(
                    region,
                    (0..count)
                        .map(|_| rng.gen_range(0..64))
                        .collect::<BTreeSet<usize>>(),
                );
            }
        }
        spec.hot_patches = hot.clone();
        let bundle = generate(&spec).map_err(|e| e.to_string())?;
        let config = PruneConfig::default()
            .with_alpha(0.0)
            .with_ratio(rng.gen_range(0.3..0.8));
        let sig = compute_signals(&bundle, &config).map_err(|e| e.to_string())?;
        let trace = prune_scores(
            &grid,
            &sig.regions,
            &sig.bottom_up.b,
            &sig.top_down.c,
            &config,
        )
        .map_err(|e| e.to_string())?;
        let kept: BTreeSet<usize> = trace.result.kept.into_iter().collect();
        for (&region, patches) in &hot {
            if spec.concentration <= planted_dominance_threshold(64, patches.len())
                || trace.allocation.quotas[region] < patches.len()
            {
                skipped.push(format!("seed {seed} region {region}"));
                continue;
            }
            planted += patches.len();
            found += patches
                .iter()
                .filter(|&&p| kept.contains(&(region * 64 + p)))
                .count();
        }
    }
    if !skipped.is_empty() {
        return Err(format!("precondition unmet for {}", skipped.join(", ")));
    }
    check(
        found == planted && planted > 0,
        format!("recall {found}/{planted} over 100 seeds"),
    )
}

fn ptp(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_ptp"))
        .args(args)
        .env_remove("PTP_PROFILE")
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!(
            "ptp {args:?}: {}",
            String::from_utf8_lossy(&out.stderr).trim()
        ))
    }
}

fn cli_run(
    dir: &Path,
    bundle: &Path,
    tag: &str,
    extra: &[&str],
) -> Result<(Vec<u8>, Vec<u8>), String> {
    let report = dir.join(format!("{tag}.json"));
    let mask = dir.join(format!("{tag}.pgm"));
    let (b, r, m) = (
        bundle.to_str().unwrap(),
        report.to_str().unwrap(),
        mask.to_str().unwrap(),
    );
    let mut args = vec!["prune", "--bundle", b, "--out", r, "--ratio", "0.7"];
    args.extend_from_slice(extra);
    ptp(&args)?;
    ptp(&["mask", "--bundle", b, "--report", r, "--out", m])?;
    let read = |p: &Path| std::fs::read(p).map_err(|e| e.to_string());
    Ok((read(&report)?, read(&mask)?))
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let spec = concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/tests/golden/reference_spec.json"
    );
    let bundle = dir.path().join("bundle");
    ptp(&["synth", "--spec", spec, "--out", bundle.to_str().unwrap()])?;

    let mut bad = Vec::new();
    for strategy in ["ptp", "random"] {
        let base = ["--strategy", strategy, "--seed", "7"];
        let runs = [
            cli_run(dir.path(), &bundle, &format!("{strategy}-a"), &base)?,
            cli_run(dir.path(), &bundle, &format!("{strategy}-b"), &base)?,
            cli_run(
                dir.path(),
                &bundle,
                &format!("{strategy}-t1"),
                &[&base[..], &["--threads", "1"]].concat(),
            )?,
            cli_run(
                dir.path(),
                &bundle,
                &format!("{strategy}-t4"),
                &[&base[..], &["--threads", "4"]].concat(),
            )?,
        ];
        for (i, r) in runs.iter().enumerate().skip(1) {
            if r != &runs[0] {
                bad.push(format!("{strategy} run {i} differs"));
            }
        }
    }
    check(
        bad.is_empty(),
        if bad.is_empty() {
            "report + mask identical across 4 runs x 2 strategies (threads 1/4/default)".into()
        } else {
            bad.join("; ")
        },
    )
}

fn interchange_round_trip() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xb175);
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut mismatched = 0;
    for batch in 0..10 {
        let mut manifest = TensorManifest::default();
        let mut map = TensorMap::new();
        for i in 0..100 {
            let rank = rng.gen_range(1..=4);
            let shape: Vec<usize> = (0..rank).map(|_| rng.gen_range(1..=6)).collect();
            let len: usize = shape.iter().product();
            let data: Vec<f32> = (0..len)
                .map(|_| loop {
                    let v = f32::from_bits(rng.gen());
                    if v.is_finite() {
                        break v;
                    }
                })
                .collect();
            let name = format!("t{batch}_{i}");
            manifest.tensors.push(TensorEntry::f32(&name, shape));
            map.insert(name, data);
        }
        let path = dir.path().join(format!("b{batch}"));
        write_bundle(&manifest, &map, &path).map_err(|e| e.to_string())?;
        let (m2, back) = read_bundle(&path).map_err(|e| e.to_string())?;
        if m2 != manifest {
            return Err(format!("manifest of batch {batch} changed"));
        }
        for (name, data) in &map {
            let same = back.get(name).is_some_and(|got| {
                got.len() == data.len()
                    && got
                        .iter()
                        .zip(data)
                        .all(|(x, y)| x.to_bits() == y.to_bits())
            });
            if !same {
                mismatched += 1;
            }
        }
    }
    check(
        mismatched == 0,
        format!("{}/1000 tensors bitwise identical", 1000 - mismatched),
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("efficiency table reproduction", efficiency_table),
        ("token-count reproduction", token_counts),
        ("oracle equivalence", oracle_equivalence),
        ("budget conservation", budget_conservation),
        ("alpha-extreme invariance", alpha_extremes),
        ("planted-saliency recall", planted_recall),
        ("cli determinism", determinism),
        ("interchange round-trip", interchange_round_trip),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        match run() {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail}");
            }
        }
    }
    println!("{} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
