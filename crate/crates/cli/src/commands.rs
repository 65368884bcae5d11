use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use serde::Serialize;

use chanfsl_core::analysis::{
    dataset_level_distance, dataset_mmc, image_level_distance, msd, normalized_msd, parse_scatter_csv,
    save_scatter_csv, scatter_rows, task_level_distance, MmcMode, DISTANCE_REPORT_SCALE,
};
use chanfsl_core::classify::{ClassifierKind, LinearConfig};
use chanfsl_core::episodes::{
    gen_gaussian_task_counted, inject_bias, run_evaluation_parallel, BiasInjection, EpisodeConfig, EvalConfig,
    FeatureTransform, SyntheticTaskSpec,
};
use chanfsl_core::io::{load_features, save_features_binary, save_features_csv};
use chanfsl_core::numfmt::{format_f64, to_json_g17};
use chanfsl_core::oracle::OracleConfig;
use chanfsl_core::report::{mean_and_ci95, save_report};
use chanfsl_core::theory::{
    format_table, mc_margin, run_suite, CheckFamily, CheckStatus, SuiteConfig, RECOMMENDED_MIN_TRIALS,
};
use chanfsl_core::transforms::Transform;
use chanfsl_core::{Error, Result, TransformSpec};

use crate::{
    Classifier, EpisodeArgs, EvaluateArgs, Family, FileFormat, MmcModeArg, MmcReportArgs, SweepArgs, SynthArgs,
    TableArgs, TableKind, TransformArgs, TransformKind, VerifyArgs,
};

const CHECK_FAILED: u8 = 1;
const USAGE: u8 = 2;
const IO: u8 = 3;
const DEFAULT_X0: f64 = 0.05;

/// 2 for configuration and data-domain problems, 3 for anything wrong with
/// reading or writing files.
pub fn exit_code(e: &Error) -> ExitCode {
    ExitCode::from(match e.root() {
        Error::Io { .. }
        | Error::Parse { .. }
        | Error::Empty(_)
        | Error::Format(_)
        | Error::Truncated(_)
        | Error::Json(_) => IO,
        _ => USAGE,
    })
}

fn config_error(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

fn feature_transform(args: &TransformArgs) -> Result<(FeatureTransform, OracleConfig)> {
    let unused = |flag: &str, set: bool, kinds: &str| {
        if set {
            Err(config_error(format!("--{flag} only applies to --transform {kinds}")))
        } else {
            Ok(())
        }
    };
    let kind = args.transform;
    unused("a", args.a.is_some() && kind != TransformKind::Log, "log")?;
    unused(
        "lambda0",
        args.lambda0.is_some() && kind != TransformKind::Piecewise,
        "piecewise",
    )?;
    unused("x0", args.x0.is_some() && kind != TransformKind::Piecewise, "piecewise")?;
    unused("r", args.r.is_some() && kind != TransformKind::Offset, "offset")?;

    let k = args.k;
    let spec = match kind {
        TransformKind::Oracle => {
            let oracle = OracleConfig { alpha: args.alpha, ..Default::default() };
            oracle.validate()?;
            return Ok((FeatureTransform::Oracle, oracle));
        }
        TransformKind::None => TransformSpec::None,
        TransformKind::Simple => TransformSpec::Simple { k },
        TransformKind::Extended => TransformSpec::Extended { k },
        TransformKind::Power => TransformSpec::Power { k },
        TransformKind::Log => TransformSpec::Log {
            a: args.a.ok_or_else(|| config_error("--transform log needs --a"))?,
        },
        TransformKind::Piecewise => TransformSpec::Piecewise {
            k,
            lambda0: args
                .lambda0
                .ok_or_else(|| config_error("--transform piecewise needs --lambda0"))?,
            x0: args.x0.unwrap_or(DEFAULT_X0),
        },
        TransformKind::Offset => TransformSpec::Offset { k, r: args.r.unwrap_or(0.0) },
    };
    spec.validate()?;
    Ok((FeatureTransform::Channelwise(spec), OracleConfig::default()))
}

fn eval_config(args: &EpisodeArgs, seed: u64, transform: FeatureTransform, oracle: OracleConfig) -> Result<EvalConfig> {
    if args.threads == 0 {
        return Err(config_error("--threads must be at least 1"));
    }
    let cfg = EvalConfig {
        episodes: EpisodeConfig {
            n_way: args.n_way,
            k_shot: args.k_shot,
            m_query: args.m_query,
            episodes: args.episodes,
            seed,
        },
        transform,
        classifier: match args.classifier {
            Classifier::Ncc => ClassifierKind::Ncc,
            Classifier::Lc => ClassifierKind::Lc,
        },
        linear: LinearConfig {
            l2_strength: args.l2_strength,
            learning_rate: args.learning_rate,
            max_iters: args.max_iters,
            tol: args.tol,
        },
        oracle,
    };
    cfg.validate()?;
    Ok(cfg)
}

/// `dir/r.json` becomes `dir/r.seed3.json`.
fn seeded_path(path: &Path, seed: u64) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match path.extension() {
        Some(ext) => format!("{stem}.seed{seed}.{}", ext.to_string_lossy()),
        None => format!("{stem}.seed{seed}"),
    };
    path.with_file_name(name)
}

fn percent(x: f64) -> String {
    format!("{:.2}%", 100.0 * x)
}

pub fn evaluate(args: EvaluateArgs) -> Result<ExitCode> {
    let (transform, oracle) = feature_transform(&args.transform)?;
    let seeds = args.seed_list.clone().unwrap_or_else(|| vec![args.seed]);
    if seeds.is_empty() {
        return Err(config_error("--seed-list is empty"));
    }
    let configs = seeds
        .iter()
        .map(|&s| eval_config(&args.episodes, s, transform.clone(), oracle))
        .collect::<Result<Vec<_>>>()?;
    let dataset = load_features(&args.features)?;

    let mut means = Vec::with_capacity(seeds.len());
    for cfg in &configs {
        let report = run_evaluation_parallel(&dataset, cfg, args.episodes.threads)?;
        let path = if args.seed_list.is_some() {
            seeded_path(&args.output, cfg.episodes.seed)
        } else {
            args.output.clone()
        };
        save_report(&report, &path)?;
        println!(
            "seed {}: accuracy {} ± {} over {} episodes -> {}",
            cfg.episodes.seed,
            percent(report.mean_accuracy),
            percent(report.ci95_halfwidth),
            report.per_episode_accuracy.len(),
            path.display()
        );
        means.push(report.mean_accuracy);
    }
    if means.len() > 1 {
        let (mean, ci) = mean_and_ci95(&means);
        println!("across {} seeds: accuracy {} ± {}", means.len(), percent(mean), percent(ci));
    }
    Ok(ExitCode::SUCCESS)
}

pub fn sweep_k(args: SweepArgs) -> Result<ExitCode> {
    let mut ks = args.k_list.clone();
    if ks.iter().any(|k| !k.is_finite()) {
        return Err(config_error("--k-list values must be finite"));
    }
    ks.sort_by(f64::total_cmp);
    ks.dedup();
    let configs = ks
        .iter()
        .map(|&k| {
            let spec = if args.extended {
                TransformSpec::Extended { k }
            } else {
                TransformSpec::Simple { k }
            };
            spec.validate()?;
            eval_config(
                &args.episodes,
                args.seed,
                FeatureTransform::Channelwise(spec),
                OracleConfig::default(),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let dataset = load_features(&args.features)?;

    let mut csv = String::from("k,mean_accuracy,ci95_halfwidth\n");
    for (k, cfg) in ks.iter().zip(&configs) {
        let report = run_evaluation_parallel(&dataset, cfg, args.episodes.threads)?;
        println!("k={k}: {} ± {}", percent(report.mean_accuracy), percent(report.ci95_halfwidth));
        let _ = writeln!(
            csv,
            "{},{},{}",
            format_f64(*k),
            format_f64(report.mean_accuracy),
            format_f64(report.ci95_halfwidth)
        );
    }
    fs::write(&args.output, csv).map_err(|e| Error::Io { path: args.output.clone(), source: e })?;
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct DistanceRow {
    level: &'static str,
    measure: &'static str,
    comparison: String,
    /// Value after the reporting scale.
    value: Option<f64>,
    scale: f64,
    note: Option<String>,
}

fn mmc_mode(mode: MmcModeArg, k: f64, alpha: f64) -> MmcMode {
    match mode {
        MmcModeArg::Original => MmcMode::Original,
        MmcModeArg::Simple => MmcMode::Transformed { transform: TransformSpec::Simple { k } },
        MmcModeArg::Extended => MmcMode::Transformed { transform: TransformSpec::Extended { k } },
        MmcModeArg::Oracle => MmcMode::Oracle {
            config: OracleConfig { alpha, ..Default::default() },
        },
    }
}

/// The per-feature transform behind a mode, if it has one.
fn mode_transform(mode: &MmcMode) -> Option<TransformSpec> {
    match mode {
        MmcMode::Original => Some(TransformSpec::None),
        MmcMode::Transformed { transform } => Some(transform.clone()),
        MmcMode::Oracle { .. } => None,
    }
}

fn print_rows(rows: &[DistanceRow]) {
    println!("{:<8} {:<15} {:<36} {:>16}", "level", "measure", "comparison", "value");
    for r in rows {
        let measure = if r.scale != 1.0 {
            format!("{} x{:e}", r.measure, r.scale)
        } else {
            r.measure.to_string()
        };
        let value = match (r.value, &r.note) {
            (Some(v), _) => format!("{v:.6}"),
            (None, Some(note)) => note.clone(),
            (None, None) => "-".into(),
        };
        println!("{:<8} {:<15} {:<36} {:>16}", r.level, measure, r.comparison, value);
    }
}

fn write_json<T: Serialize + ?Sized>(value: &T, path: &Path) -> Result<()> {
    fs::write(path, to_json_g17(value)?).map_err(|e| Error::Io { path: path.to_path_buf(), source: e })
}

pub fn mmc_report(args: MmcReportArgs) -> Result<ExitCode> {
    if !args.mmc_pair.is_empty() {
        return mmc_pairs(&args);
    }
    let features = args.features.as_ref().expect("clap requires --features here");
    let before = mmc_mode(args.before, args.k, args.alpha);
    let after = mmc_mode(args.after, args.k, args.alpha);
    if let MmcMode::Oracle { config } = &before {
        config.validate()?;
    }
    if let MmcMode::Oracle { config } = &after {
        config.validate()?;
    }
    let dataset = load_features(features)?;
    let reference = args.reference.as_ref().map(load_features).transpose()?;

    let versus = format!("{} vs {}", before.label(), after.label());
    let mmc_before = dataset_mmc(&dataset, &before)?;
    let mmc_after = dataset_mmc(&dataset, &after)?;
    let mut rows = Vec::new();
    if let Some(reference) = &reference {
        let ref_mmc = dataset_mmc(reference, &MmcMode::Original)?;
        let own = dataset_mmc(&dataset, &MmcMode::Original)?;
        rows.push(DistanceRow {
            level: "dataset",
            measure: "normalized_msd",
            comparison: "reference original vs original".into(),
            value: Some(dataset_level_distance(&ref_mmc, &own)?),
            scale: 1.0,
            note: None,
        });
    }
    rows.push(DistanceRow {
        level: "dataset",
        measure: "normalized_msd",
        comparison: versus.clone(),
        value: Some(dataset_level_distance(&mmc_before, &mmc_after)?),
        scale: 1.0,
        note: None,
    });
    rows.push(DistanceRow {
        level: "dataset",
        measure: "msd",
        comparison: versus.clone(),
        value: Some(msd(mmc_before.weights.weights(), mmc_after.weights.weights())?),
        scale: 1.0,
        note: None,
    });
    rows.push(DistanceRow {
        level: "task",
        measure: "msd",
        comparison: versus.clone(),
        value: Some(DISTANCE_REPORT_SCALE * task_level_distance(&dataset, &before, &after)?),
        scale: DISTANCE_REPORT_SCALE,
        note: None,
    });
    let image = match (mode_transform(&before), mode_transform(&after)) {
        (Some(a), Some(b)) => DistanceRow {
            level: "image",
            measure: "msd",
            comparison: versus,
            value: Some(DISTANCE_REPORT_SCALE * image_level_distance(&dataset, &a, &b)?),
            scale: DISTANCE_REPORT_SCALE,
            note: None,
        },
        _ => DistanceRow {
            level: "image",
            measure: "msd",
            comparison: versus,
            value: None,
            scale: DISTANCE_REPORT_SCALE,
            note: Some("n/a (per-task weights)".into()),
        },
    };
    rows.push(image);
    print_rows(&rows);

    if let Some(path) = &args.scatter_out {
        save_scatter_csv(&scatter_rows(&mmc_before.weights, &mmc_after.weights)?, path)?;
    }
    if let Some(path) = &args.json_out {
        write_json(&rows, path)?;
    }
    Ok(ExitCode::SUCCESS)
}

fn mmc_pairs(args: &MmcReportArgs) -> Result<ExitCode> {
    let mut rows = Vec::new();
    for path in &args.mmc_pair {
        let text = fs::read_to_string(path).map_err(|e| Error::Io { path: path.clone(), source: e })?;
        let scatter = parse_scatter_csv(&text)?;
        let x: Vec<f64> = scatter.iter().map(|r| r.mmc_before).collect();
        let y: Vec<f64> = scatter.iter().map(|r| r.mmc_after).collect();
        let name = path.display().to_string();
        rows.push(DistanceRow {
            level: "pair",
            measure: "normalized_msd",
            comparison: name.clone(),
            value: Some(normalized_msd(&x, &y)?),
            scale: 1.0,
            note: None,
        });
        rows.push(DistanceRow {
            level: "pair",
            measure: "msd",
            comparison: name,
            value: Some(msd(&x, &y)?),
            scale: 1.0,
            note: None,
        });
    }
    print_rows(&rows);
    if let Some(path) = &args.json_out {
        write_json(&rows, path)?;
    }
    Ok(ExitCode::SUCCESS)
}

pub fn verify_theory(args: VerifyArgs) -> Result<ExitCode> {
    if args.trials == 0 {
        return Err(config_error("--trials must be positive"));
    }
    if args.trials < RECOMMENDED_MIN_TRIALS {
        eprintln!(
            "warning: --trials {} is below {RECOMMENDED_MIN_TRIALS}; the Monte Carlo margin 3/sqrt(trials) = {:.4} is loose",
            args.trials,
            mc_margin(args.trials)
        );
    }
    let only: Vec<CheckFamily> = args
        .only
        .iter()
        .map(|f| match f {
            Family::Cantelli => CheckFamily::Cantelli,
            Family::Lemma => CheckFamily::Lemma,
            Family::RiskBound => CheckFamily::RiskBound,
        })
        .collect();
    let cfg = SuiteConfig {
        seed: args.seed,
        trials: args.trials,
        ..Default::default()
    };
    let results = run_suite(&cfg, &only)?;
    print!("{}", format_table(&results));
    if let Some(path) = &args.json {
        write_json(&results, path)?;
    }
    let failed: Vec<&str> = results
        .iter()
        .filter(|r| r.status == CheckStatus::Fail)
        .map(|r| r.name.as_str())
        .collect();
    let skipped = results.iter().filter(|r| r.status == CheckStatus::Skipped).count();
    println!(
        "{} checks: {} passed, {} failed, {skipped} skipped",
        results.len(),
        results.len() - failed.len() - skipped,
        failed.len()
    );
    if failed.is_empty() {
        Ok(ExitCode::SUCCESS)
    } else {
        for name in failed {
            eprintln!("failed: {name}");
        }
        Ok(ExitCode::from(CHECK_FAILED))
    }
}

pub fn transform_table(args: TableArgs) -> Result<ExitCode> {
    let (lo, hi, step) = (args.lambda_min, args.lambda_max, args.lambda_step);
    if !(lo.is_finite() && hi.is_finite() && step.is_finite()) || step <= 0.0 || hi < lo {
        return Err(config_error(format!(
            "invalid grid: need finite lambda_min <= lambda_max and lambda_step > 0 (got {lo}, {hi}, {step})"
        )));
    }
    if args.params.is_empty() {
        return Err(config_error("--params is empty"));
    }
    let steps = ((hi - lo) / step + 1e-9).floor() as usize;
    let transforms = args
        .params
        .iter()
        .map(|&p| {
            Transform::new(match args.transform {
                TableKind::Simple => TransformSpec::Simple { k: p },
                TableKind::Extended => TransformSpec::Extended { k: p },
                TableKind::Power => TransformSpec::Power { k: p },
                TableKind::Log => TransformSpec::Log { a: p },
                TableKind::Offset => TransformSpec::Offset { k: p, r: args.r },
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut csv = String::from("lambda");
    for t in &transforms {
        csv.push(',');
        csv.push_str(&t.spec().label());
    }
    csv.push('\n');
    for i in 0..=steps {
        let x = lo + i as f64 * step;
        csv.push_str(&format_f64(x));
        for t in &transforms {
            csv.push(',');
            csv.push_str(&format_f64(t.eval(x)?));
        }
        csv.push('\n');
    }
    match &args.output {
        Some(path) => fs::write(path, csv).map_err(|e| Error::Io { path: path.clone(), source: e })?,
        None => print!("{csv}"),
    }
    Ok(ExitCode::SUCCESS)
}

pub fn synth_gen(args: SynthArgs) -> Result<ExitCode> {
    let spec = SyntheticTaskSpec::random(
        args.classes,
        args.d,
        args.base_mean,
        args.relative_spread,
        args.std,
        !args.no_margin_rule,
        args.seed,
    )?;
    let (mut dataset, clipped, total) = gen_gaussian_task_counted(&spec, args.n, args.seed)?;
    if let Some(factor) = args.bias_factor {
        let bias = BiasInjection::log_uniform(args.d, factor, args.seed)?;
        dataset = inject_bias(&dataset, &bias)?;
        println!("bias scales span a factor of {:.3}", bias.spread());
    }
    match args.format {
        FileFormat::Csv => save_features_csv(&dataset, &args.output)?,
        FileFormat::Binary => save_features_binary(&dataset, &args.output)?,
    }
    println!(
        "wrote {} vectors ({} classes, d={}) to {}; {clipped} of {total} draws clipped at 0",
        dataset.num_vectors(),
        dataset.num_classes(),
        dataset.dimensionality(),
        args.output.display()
    );
    Ok(ExitCode::SUCCESS)
}
