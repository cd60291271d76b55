//! `svm`: grid-search and train a linear SVM on an extracted feature file.

use std::path::PathBuf;

use hdrsource::features::{load_feature_set, save_svm_model, svm_train, SVM_C_GRID};

use crate::config::{ConfigFile, Resolved};
use crate::exit::{usage, CliError};
use crate::SvmArgs;

fn parse_grid(text: &str) -> Result<Vec<f64>, CliError> {
    let mut grid = Vec::new();
    for part in text.split(',') {
        let c: f64 = part
            .trim()
            .parse()
            .map_err(|_| usage(format!("--grid: {part:?} is not a number")))?;
        if !(c.is_finite() && c > 0.0) {
            return Err(usage(format!("--grid: C must be positive and finite, got {c}")));
        }
        grid.push(c);
    }
    // Ascending order makes the tie rule (first strict improvement wins)
    // independent of how the user listed the values.
    grid.sort_by(|a, b| a.partial_cmp(b).unwrap());
    grid.dedup();
    if grid.is_empty() {
        return Err(usage("--grid: no C values given".to_string()));
    }
    Ok(grid)
}

pub fn run(args: &SvmArgs) -> Result<(), CliError> {
    let file = ConfigFile::load(args.config.as_deref())?;
    let mut resolved = Resolved::default();
    let features_path: PathBuf =
        resolved.resolve_path("features", args.features.clone(), &file)?;
    let out_dir: PathBuf = resolved.resolve_path("out", args.out.clone(), &file)?;
    let seed: u64 = resolved.resolve("seed", args.seed, &file, None)?;
    let grid_text: Option<String> = resolved.resolve_opt("grid", args.grid.clone(), &file)?;
    file.finish()?;
    let grid = match &grid_text {
        Some(t) => parse_grid(t)?,
        None => SVM_C_GRID.to_vec(),
    };

    let set = load_feature_set(&features_path)?;
    let model = svm_train(&set.rows_f64(), &set.labels(), &grid, seed)?;

    std::fs::create_dir_all(&out_dir)
        .map_err(|e| CliError::Data(format!("creating {}: {e}", out_dir.display())))?;
    let model_path = out_dir.join("svm.model");
    save_svm_model(&model_path, &model, set.kind)?;
    super::write_artifact(
        &out_dir,
        "svm.csv",
        &format!(
            "kind,dims,examples,chosen_c\n{},{},{},{}\n",
            set.kind.name(),
            set.kind.dims(),
            set.records.len(),
            model.c
        ),
    )?;
    resolved.write(&out_dir)?;
    crate::config::log_run(&out_dir, "svm", "ok");
    println!(
        "svm: trained {} model on {} example(s), grid chose C = {}",
        set.kind.name(),
        set.records.len(),
        model.c
    );
    Ok(())
}
