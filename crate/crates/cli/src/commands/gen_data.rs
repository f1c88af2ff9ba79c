//! `playstyle gen-data`: simulate a grid of styled datasets.

use std::fs;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;

use playstyle_core::dataset::save_dataset;
use playstyle_core::sim::{generate_style_grid, SimConfig};

use crate::common::{
    dataset_path, parse_list, parse_ranged_list, write_manifest, ConfigFile, ManifestRow,
    UsageError,
};

#[derive(Args, Debug)]
pub struct GenDataArgs {
    /// Output directory for the `.psty` files and `manifest.csv`.
    #[arg(long)]
    pub out: PathBuf,
    /// Comma-separated target speeds.
    #[arg(long)]
    pub speeds: Option<String>,
    /// Noise levels (0 = deterministic controller); accepts commas and
    /// inclusive ranges, e.g. `0,2` or `1..5`.
    #[arg(long)]
    pub noise_levels: Option<String>,
    /// Samples per dataset.
    #[arg(long)]
    pub samples: Option<usize>,
    /// Base seed; every grid cell derives its own stream from it.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Optional key=value config file (flags take precedence).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Print the effective settings before running.
    #[arg(long)]
    pub print_config: bool,
}

pub fn run(args: &GenDataArgs) -> Result<()> {
    let file = ConfigFile::load(args.config.as_deref())?;
    let speeds: Vec<f64> = parse_list(
        &file.resolve(args.speeds.clone(), "speeds", "60,65,70,75,80".into())?,
        "speed",
    )?;
    let noise_levels: Vec<u32> = parse_ranged_list(
        &file.resolve(args.noise_levels.clone(), "noise_levels", "0".into())?,
        "noise level",
    )?;
    let samples = file.resolve(args.samples, "samples", 1024)?;
    if samples == 0 {
        return Err(UsageError("--samples must be positive".into()).into());
    }
    let seed = file.resolve(args.seed, "seed", 42u64)?;
    let sim = SimConfig::default();

    if args.print_config {
        println!("out            = {}", args.out.display());
        println!("speeds         = {speeds:?}");
        println!("noise_levels   = {noise_levels:?}");
        println!("samples        = {samples}");
        println!("seed           = {seed}");
        println!("observation    = {}", sim.obs_shape());
    }

    fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    let grid = generate_style_grid(&sim, &speeds, &noise_levels, samples, seed)?;

    let mut rows = Vec::with_capacity(grid.len());
    for entry in &grid {
        let path = dataset_path(&args.out, &entry.id);
        save_dataset(&entry.dataset, &path)
            .with_context(|| format!("writing {}", path.display()))?;
        rows.push(ManifestRow {
            id: entry.id.clone(),
            file: format!("{}.psty", entry.id),
            speed: entry.style.target_speed,
            noise_level: entry.noise_level,
            sigma_steer: entry.style.sigma_steer,
            sigma_accel: entry.style.sigma_accel,
            samples,
            seed,
        });
        println!("wrote {} ({} samples)", path.display(), entry.dataset.len());
    }
    rows.sort_by(|a, b| a.id.cmp(&b.id));
    write_manifest(&args.out.join("manifest.csv"), &rows)?;
    println!("manifest.csv lists {} datasets", rows.len());
    Ok(())
}
