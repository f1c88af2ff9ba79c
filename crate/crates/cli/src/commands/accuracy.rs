//! `playstyle accuracy`: style-identification accuracy against a
//! directory of candidate datasets.

use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Args;

use playstyle_core::dataset::load_dataset;
use playstyle_core::experiment::{run_accuracy, AccuracyProtocol, TargetSource};
use playstyle_core::metric::MetricConfig;
use playstyle_core::sim::{GridEntry, SimConfig, StyleSpec};

use crate::common::{
    parse_aggregation, parse_distance, parse_list, parse_mapper, read_manifest, ConfigFile,
};

#[derive(Args, Debug)]
pub struct AccuracyArgs {
    /// Directory holding candidate `.psty` files and `manifest.csv`.
    #[arg(long)]
    pub candidates: PathBuf,
    /// State mapper: `pixel`, `lrd:HxW:DIV`, or `hsd:PATH:HIERARCHY`.
    /// Repeat the flag to evaluate several mappers (e.g. independently
    /// seeded models); the report then also carries their mean.
    #[arg(long)]
    pub mapper: Vec<String>,
    /// Comma-separated visit thresholds to sweep.
    #[arg(long)]
    pub thresholds: Option<String>,
    /// Trials per candidate style.
    #[arg(long)]
    pub trials: Option<usize>,
    /// Target dataset size per trial.
    #[arg(long)]
    pub samples: Option<usize>,
    /// `fresh` simulates new targets per trial; `resample` subsamples the
    /// candidate datasets themselves.
    #[arg(long)]
    pub target_mode: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Per-state distance: `w2`, `w1`, `kl`, or `mkl`.
    #[arg(long)]
    pub distance: Option<String>,
    /// `expected` or `uniform`.
    #[arg(long)]
    pub aggregation: Option<String>,
    /// Write the per-threshold report as CSV here.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Optional key=value config file (flags take precedence).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Print the effective settings before running.
    #[arg(long)]
    pub print_config: bool,
}

pub fn run(args: &AccuracyArgs) -> Result<()> {
    let file = ConfigFile::load(args.config.as_deref())?;
    let mapper_specs: Vec<String> = if args.mapper.is_empty() {
        vec![file.resolve(None, "mapper", "lrd:8x8:64".into())?]
    } else {
        args.mapper.clone()
    };
    let mappers: Vec<(String, playstyle_core::discretizer::StateMapper)> = mapper_specs
        .iter()
        .map(|spec| Ok((spec.clone(), parse_mapper(spec)?)))
        .collect::<Result<_>>()?;
    let thresholds: Vec<usize> =
        parse_list(&file.resolve(args.thresholds.clone(), "thresholds", "2".into())?, "threshold")?;
    let trials = file.resolve(args.trials, "trials", 100)?;
    let samples = file.resolve(args.samples, "samples", 1024)?;
    let target_mode = file.resolve(args.target_mode.clone(), "target_mode", "fresh".into())?;
    let seed = file.resolve(args.seed, "seed", 7u64)?;
    let metric = MetricConfig {
        distance: parse_distance(&file.resolve(args.distance.clone(), "distance", "w2".into())?)?,
        aggregation: parse_aggregation(
            &file.resolve(args.aggregation.clone(), "aggregation", "expected".into())?,
        )?,
        visit_threshold: thresholds[0],
        squared_mean_term: false,
    };

    // Load the candidate grid through its manifest.
    let manifest = read_manifest(&args.candidates.join("manifest.csv"))?;
    let mut candidates = Vec::with_capacity(manifest.len());
    for row in &manifest {
        let path = args.candidates.join(&row.file);
        let dataset =
            load_dataset(&path).with_context(|| format!("loading {}", path.display()))?;
        candidates.push(GridEntry {
            id: row.id.clone(),
            style: StyleSpec {
                target_speed: row.speed,
                sigma_steer: row.sigma_steer,
                sigma_accel: row.sigma_accel,
            },
            noise_level: row.noise_level,
            dataset,
        });
    }

    let targets = match target_mode.as_str() {
        "fresh" => TargetSource::Fresh { sim: SimConfig::default() },
        "resample" => TargetSource::Resample {
            pools: candidates.iter().map(|e| e.dataset.clone()).collect(),
        },
        other => bail!("unknown target mode {other:?} (fresh or resample)"),
    };

    if args.print_config {
        println!("candidates  = {} ({} styles)", args.candidates.display(), candidates.len());
        for (spec, mapper) in &mappers {
            println!("mapper      = {} ({spec})", mapper.describe());
        }
        println!("thresholds  = {thresholds:?}");
        println!("trials      = {trials}");
        println!("samples     = {samples}");
        println!("target_mode = {target_mode}");
        println!("seed        = {seed}");
        println!("distance    = {}", metric.distance);
        println!("aggregation = {}", metric.aggregation);
    }

    let mut csv = String::from("mapper,threshold,style,accuracy,undefined_rate,mean_intersection\n");
    // overall accuracy per (threshold index, mapper index), for the mean rows
    let mut overalls: Vec<Vec<f64>> = vec![Vec::new(); thresholds.len()];
    for (spec, mapper) in &mappers {
        let protocol = AccuracyProtocol {
            candidates: &candidates,
            mapper: mapper.clone(),
            metric: metric.clone(),
            thresholds: thresholds.clone(),
            trials,
            samples,
            seed,
            targets: targets.clone(),
        };
        let reports = run_accuracy(&protocol)?;
        for (ti, r) in reports.iter().enumerate() {
            println!(
                "{spec} t={}: overall {:.2}% (undefined {:.1}%, mean intersection {:.1})",
                r.threshold,
                r.overall,
                100.0 * r.undefined_rate,
                r.mean_intersection
            );
            writeln!(
                csv,
                "{spec},{},overall,{:.4},{:.4},{:.2}",
                r.threshold, r.overall, r.undefined_rate, r.mean_intersection
            )?;
            let mut styles = r.per_style.clone();
            styles.sort_by(|a, b| a.id.cmp(&b.id));
            for s in &styles {
                println!("    {}: {:.2}%", s.id, s.accuracy);
                writeln!(csv, "{spec},{},{},{:.4},,", r.threshold, s.id, s.accuracy)?;
            }
            overalls[ti].push(r.overall);
        }
    }
    if mappers.len() > 1 {
        for (ti, t) in thresholds.iter().enumerate() {
            let mean = overalls[ti].iter().sum::<f64>() / overalls[ti].len() as f64;
            println!("mean over {} mappers t={t}: overall {mean:.2}%", mappers.len());
            writeln!(csv, "mean,{t},overall,{mean:.4},,")?;
        }
    }
    if let Some(path) = &args.out {
        fs::write(path, csv).with_context(|| format!("writing {}", path.display()))?;
        println!("report written to {}", path.display());
    }
    Ok(())
}
