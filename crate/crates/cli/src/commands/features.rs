//! `features`: extract baseline descriptors (HOG / LBP / SPAM) from a built
//! dataset split into binary feature files for the SVM arm.

use std::path::PathBuf;

use hdrsource::features::{extract, save_feature_set, FeatureKind, FeatureRecord, FeatureSet};
use hdrsource::pipeline::builder::load_split_blocks;
use hdrsource::pipeline::Split;

use crate::config::{ConfigFile, Resolved};
use crate::exit::{data, usage, CliError};
use crate::FeaturesArgs;

pub fn run(args: &FeaturesArgs) -> Result<(), CliError> {
    let file = ConfigFile::load(args.config.as_deref())?;
    let mut resolved = Resolved::default();
    let data_dir: PathBuf = resolved.resolve_path("data", args.data.clone(), &file)?;
    let out_dir: PathBuf = resolved.resolve_path("out", args.out.clone(), &file)?;
    let split_name: String = resolved.resolve("split", args.split.clone(), &file, None)?;
    let kind_name: String =
        resolved.resolve("kind", args.kind.clone(), &file, Some("all".to_string()))?;
    file.finish()?;

    let split = Split::parse(&split_name).map_err(|e| usage(format!("--split: {e}")))?;
    let kinds: Vec<FeatureKind> = if kind_name.eq_ignore_ascii_case("all") {
        FeatureKind::ALL.to_vec()
    } else {
        vec![FeatureKind::parse(&kind_name).map_err(|e| usage(format!("--kind: {e}")))?]
    };

    let manifest = super::load_manifest(&data_dir)?;
    // Descriptors are shift/scale invariant by construction, so they read
    // the raw (unstandardized) log-luminance blocks.
    let blocks = load_split_blocks(&data_dir, &manifest, split, false)?;
    if blocks.is_empty() {
        return Err(data(format!("split {} holds no blocks", split.name())));
    }

    std::fs::create_dir_all(&out_dir)
        .map_err(|e| data(format!("creating {}: {e}", out_dir.display())))?;
    for kind in &kinds {
        let mut records = Vec::with_capacity(blocks.len());
        for b in &blocks {
            let fv = extract(*kind, &b.pixels)?;
            records.push(FeatureRecord {
                source_id: b.source_id,
                label: b.label,
                origin: b.origin,
                values: fv.values.iter().map(|&v| v as f32).collect(),
            });
        }
        let set = FeatureSet::new(*kind, records)?;
        let path = out_dir.join(format!("{}-{}.feat", kind.name(), split.name()));
        save_feature_set(&path, &set)?;
        println!(
            "features: {} x {} {} vector(s) -> {}",
            blocks.len(),
            kind.dims(),
            kind.name(),
            path.display()
        );
    }
    resolved.write(&out_dir)?;
    crate::config::log_run(&out_dir, "features", "ok");
    Ok(())
}
