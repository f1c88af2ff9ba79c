//! `playstyle train-hsd`: fit a discretization model to a dataset.

use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;

use playstyle_core::dataset::{load_dataset, PlayDataset};
use playstyle_core::hsd::{save_model, train, HsdConfig, HsdModel};

use crate::common::ConfigFile;

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Training dataset: a `.psty` file, or a directory whose `.psty`
    /// files are pooled (sorted by name) into one training set.
    #[arg(long)]
    pub data: PathBuf,
    /// Where to write the trained model (`.hsdm`).
    #[arg(long)]
    pub out: PathBuf,
    /// Optional CSV of per-step losses.
    #[arg(long)]
    pub loss_log: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learn_rate: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Width of the top-level latent code.
    #[arg(long)]
    pub latent_width: Option<usize>,
    /// Number of top-level code cells.
    #[arg(long, visible_alias = "B")]
    pub cells: Option<usize>,
    /// Top codebook entries per cell.
    #[arg(long, visible_alias = "K")]
    pub codebook: Option<usize>,
    /// Base codebook entries.
    #[arg(long)]
    pub base_codebook: Option<usize>,
    /// Std of training pixel noise on the 0-255 scale.
    #[arg(long)]
    pub pixel_noise: Option<f64>,
    /// Optional key=value config file (flags take precedence).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Print the effective settings before running.
    #[arg(long)]
    pub print_config: bool,
}

pub fn run(args: &TrainArgs) -> Result<()> {
    let file = ConfigFile::load(args.config.as_deref())?;
    let ds = load_training_data(&args.data)?;

    let defaults = HsdConfig::new(ds.obs_shape().clone(), ds.action_space());
    let mut cfg = defaults.clone();
    cfg.epochs = file.resolve(args.epochs, "epochs", defaults.epochs)?;
    cfg.batch_size = file.resolve(args.batch_size, "batch_size", defaults.batch_size)?;
    cfg.learn_rate = file.resolve(args.learn_rate, "learn_rate", defaults.learn_rate)?;
    cfg.seed = file.resolve(args.seed, "seed", defaults.seed)?;
    cfg.latent_width = file.resolve(args.latent_width, "latent_width", defaults.latent_width)?;
    cfg.cells = file.resolve(args.cells, "cells", defaults.cells)?;
    cfg.codebook = file.resolve(args.codebook, "codebook", defaults.codebook)?;
    cfg.base_codebook =
        file.resolve(args.base_codebook, "base_codebook", defaults.base_codebook)?;
    cfg.pixel_noise_std =
        file.resolve(args.pixel_noise, "pixel_noise", defaults.pixel_noise_std)?;

    if args.print_config {
        println!("data           = {} ({} samples)", args.data.display(), ds.len());
        println!("out            = {}", args.out.display());
        println!("observation    = {}", cfg.obs_shape);
        println!("epochs         = {}", cfg.epochs);
        println!("batch_size     = {}", cfg.batch_size);
        println!("learn_rate     = {}", cfg.learn_rate);
        println!("seed           = {}", cfg.seed);
        println!("latent_width   = {}", cfg.latent_width);
        println!("cells          = {}", cfg.cells);
        println!("codebook       = {}", cfg.codebook);
        println!("base_codebook  = {}", cfg.base_codebook);
        println!("pixel_noise    = {}", cfg.pixel_noise_std);
    }

    let model = HsdModel::init(cfg)?;
    let (model, log) = train(model, &ds)?;
    save_model(&model, &args.out)
        .with_context(|| format!("writing {}", args.out.display()))?;

    if let Some(path) = &args.loss_log {
        let mut csv = String::from("step,L_rec,L_vq0,L_vq1,L_pi\n");
        for s in &log.steps {
            writeln!(
                csv,
                "{},{},{},{},{}",
                s.step, s.losses.l_rec, s.losses.l_vq0, s.losses.l_vq1, s.losses.l_pi
            )?;
        }
        fs::write(path, csv).with_context(|| format!("writing {}", path.display()))?;
    }

    if let Some((head, tail)) = log.head_tail_mean(20) {
        println!(
            "trained {} steps; mean total loss {head:.5} (first 20) -> {tail:.5} (last 20)",
            log.steps.len()
        );
    }
    println!("model written to {}", args.out.display());
    Ok(())
}

/// Loads one `.psty` file, or pools every `.psty` in a directory (sorted
/// by file name) into a single training dataset.
fn load_training_data(path: &std::path::Path) -> Result<PlayDataset> {
    if !path.is_dir() {
        return load_dataset(path).with_context(|| format!("loading {}", path.display()));
    }
    let mut files: Vec<PathBuf> = fs::read_dir(path)
        .with_context(|| format!("reading {}", path.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "psty"))
        .collect();
    files.sort();
    if files.is_empty() {
        anyhow::bail!("{} holds no .psty files", path.display());
    }
    let mut samples = Vec::new();
    let mut first: Option<PlayDataset> = None;
    for f in &files {
        let ds = load_dataset(f).with_context(|| format!("loading {}", f.display()))?;
        samples.extend_from_slice(ds.samples());
        if first.is_none() {
            first = Some(ds);
        }
    }
    let first = first.expect("at least one file");
    let pool =
        PlayDataset::new("train-pool", first.obs_shape().clone(), first.action_space(), samples)
            .with_context(|| format!("pooling the datasets in {}", path.display()))?;
    println!("pooled {} files into {} training samples", files.len(), pool.len());
    Ok(pool)
}
