//! `playstyle codebook-usage`: distinct discrete states a dataset
//! occupies under a trained model.

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;

use playstyle_core::dataset::load_dataset;
use playstyle_core::hsd::{codebook_usage, load_model};

#[derive(Args, Debug)]
pub struct UsageArgs {
    /// Trained model (`.hsdm`).
    #[arg(long)]
    pub model: PathBuf,
    /// Dataset to encode (`.psty`).
    #[arg(long)]
    pub data: PathBuf,
    /// Hierarchy level: 0 (base) or 1 (top).
    #[arg(long, default_value_t = 1)]
    pub hierarchy: usize,
}

pub fn run(args: &UsageArgs) -> Result<()> {
    let model = load_model(&args.model)
        .with_context(|| format!("loading {}", args.model.display()))?;
    let ds = load_dataset(&args.data)
        .with_context(|| format!("loading {}", args.data.display()))?;
    let usage = codebook_usage(&model, &ds, args.hierarchy)?;
    println!(
        "{} distinct states at hierarchy {} over {} samples",
        usage,
        args.hierarchy,
        ds.len()
    );
    Ok(())
}
