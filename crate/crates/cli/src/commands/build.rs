//! `build`: turn two class directories of .hdr images into a block dataset
//! with manifest, splits, and normalization statistics.

use std::path::PathBuf;

use hdrsource::pipeline::{build_dataset, collect_class_images, BuildConfig, Conditioning};

use crate::config::{ConfigFile, Resolved};
use crate::exit::{usage, CliError};
use crate::BuildArgs;

pub fn run(args: &BuildArgs) -> Result<(), CliError> {
    let file = ConfigFile::load(args.config.as_deref())?;
    let mut resolved = Resolved::default();
    let mhdr_dir: PathBuf = resolved.resolve_path("mhdr-dir", args.mhdr_dir.clone(), &file)?;
    let ihdr_dir: PathBuf = resolved.resolve_path("ihdr-dir", args.ihdr_dir.clone(), &file)?;
    let out_dir: PathBuf = resolved.resolve_path("out", args.out.clone(), &file)?;
    let seed: u64 = resolved.resolve("seed", args.seed, &file, None)?;
    let verify_images: usize =
        resolved.resolve("verify-images", args.verify_images, &file, Some(10))?;
    let train_blocks: usize =
        resolved.resolve("train-blocks", args.train_blocks, &file, Some(10_000))?;
    let max_dim: usize = resolved.resolve("max-dim", args.max_dim, &file, Some(1024))?;
    let conditioning_name: String = resolved.resolve(
        "conditioning",
        args.conditioning.clone(),
        &file,
        Some("log_ln".to_string()),
    )?;
    file.finish()?;
    let conditioning = Conditioning::parse(&conditioning_name)
        .map_err(|e| usage(format!("--conditioning: {e}")))?;

    // iHDR inputs default to "unknown" when no tags.tsv names their operator;
    // mHDR inputs are fused stacks.
    let mhdr = collect_class_images(&mhdr_dir, "fused")?;
    let ihdr = collect_class_images(&ihdr_dir, "unknown")?;

    let cfg = BuildConfig {
        seed,
        verify_images_per_class: verify_images,
        train_blocks_total: train_blocks,
        max_dim,
        conditioning,
    };
    let output = build_dataset(&mhdr, &ihdr, &out_dir, &cfg)?;

    resolved.write(&out_dir)?;
    crate::config::log_run(&out_dir, "build", "ok");
    for warning in &output.warnings {
        eprintln!("warning: {warning}");
    }
    println!(
        "build: {} mHDR + {} iHDR image(s) -> {} (train {}, verify1 {}, verify2 {} blocks)",
        mhdr.len(),
        ihdr.len(),
        out_dir.display(),
        output.split_counts[0],
        output.split_counts[1],
        output.split_counts[2],
    );
    Ok(())
}
