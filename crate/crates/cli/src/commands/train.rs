//! `train`: fit a block classifier on a built dataset, producing resumable
//! checkpoints and a per-epoch history.
//!
//! Artifacts in the output directory:
//!
//! * `last.ckpt`   — weights after the final completed epoch (resume point)
//! * `best.ckpt`   — weights at the best verification accuracy so far
//! * `state.train` — optimizer moments and progress for `--resume`
//! * `history.csv` — one row per epoch; resumed runs append rows

use std::path::PathBuf;

use hdrsource::models::{
    build_model, load_checkpoint, save_checkpoint, train_from_manifest, Architecture, Checkpoint,
    ModelSpec, TrainConfig, TrainState,
};

use crate::config::{ConfigFile, Resolved};
use crate::exit::{data, usage, CliError};
use crate::TrainArgs;

pub fn run(args: &TrainArgs) -> Result<(), CliError> {
    let file = ConfigFile::load(args.config.as_deref())?;
    let mut resolved = Resolved::default();
    let data_dir: PathBuf = resolved.resolve_path("data", args.data.clone(), &file)?;
    let out_dir: PathBuf = resolved.resolve_path("out", args.out.clone(), &file)?;
    let arch_name: String = resolved.resolve("arch", args.arch.clone(), &file, None)?;
    let seed: u64 = resolved.resolve("seed", args.seed, &file, None)?;
    let epochs: usize = resolved.resolve("epochs", args.epochs, &file, Some(50))?;
    let batch: usize = resolved.resolve("batch", args.batch, &file, Some(64))?;
    let lr: f64 = resolved.resolve("lr", args.lr, &file, Some(1e-3))?;
    let dropout: f64 = resolved.resolve("dropout", args.dropout, &file, Some(0.5))?;
    let metrics_every: usize =
        resolved.resolve("metrics-every", args.metrics_every, &file, Some(1))?;
    let stop_at_train_acc: Option<f64> =
        resolved.resolve_opt("stop-at-train-acc", args.stop_at_train_acc, &file)?;
    resolved.put("resume", args.resume);
    file.finish()?;

    let architecture = Architecture::parse(&arch_name).map_err(|e| usage(format!("--arch: {e}")))?;
    let manifest = super::load_manifest(&data_dir)?;

    let mut config = TrainConfig::new(seed);
    config.epochs = epochs;
    config.batch = batch;
    config.lr = lr;
    config.metrics_every = metrics_every;
    config.stop_at_train_acc = stop_at_train_acc;
    config.validate()?;

    let last_path = out_dir.join("last.ckpt");
    let best_path = out_dir.join("best.ckpt");
    let state_path = out_dir.join("state.train");
    let history_path = out_dir.join("history.csv");

    // A fresh run builds from the seed; a resumed one reloads the last
    // checkpoint and optimizer state and checks they belong to this dataset
    // and architecture.
    let (mut model, prior_state) = if args.resume {
        let ckpt = load_checkpoint(&last_path)?;
        if ckpt.model.spec.architecture != architecture {
            return Err(usage(format!(
                "--resume: {} holds a {} model but --arch is {}",
                last_path.display(),
                ckpt.model.spec.architecture.name(),
                architecture.name()
            )));
        }
        if ckpt.norm_mean != manifest.norm_mean || ckpt.norm_std != manifest.norm_std {
            return Err(data(format!(
                "--resume: checkpoint normalization ({}, {}) does not match the dataset \
                 manifest ({}, {}); was it trained on different data?",
                ckpt.norm_mean, ckpt.norm_std, manifest.norm_mean, manifest.norm_std
            )));
        }
        let state = TrainState::load(&state_path)?;
        (ckpt.model, Some(state))
    } else {
        for stale in [&last_path, &state_path] {
            if stale.exists() {
                return Err(data(format!(
                    "{} already exists; pass --resume to continue it or choose a fresh \
                     output directory",
                    stale.display()
                )));
            }
        }
        let spec = ModelSpec {
            architecture,
            dropout,
        };
        (build_model(&spec, seed)?, None)
    };

    std::fs::create_dir_all(&out_dir)
        .map_err(|e| data(format!("creating {}: {e}", out_dir.display())))?;
    resolved.write(&out_dir)?;

    let outcome = train_from_manifest(&data_dir, &manifest, &mut model, &config, prior_state.as_ref())?;

    // Artifacts are written even after a numerical abort so the run can be
    // diagnosed; the checkpoint then holds the last healthy weights.
    save_checkpoint(
        &last_path,
        &Checkpoint {
            model: model.clone(),
            norm_mean: manifest.norm_mean,
            norm_std: manifest.norm_std,
        },
    )?;
    outcome.state.save(&state_path)?;
    if let Some((acc, best)) = &outcome.best_in_run {
        save_checkpoint(
            &best_path,
            &Checkpoint {
                model: best.clone(),
                norm_mean: manifest.norm_mean,
                norm_std: manifest.norm_std,
            },
        )?;
        println!("train: new best verification accuracy {acc:.4}");
    }

    let csv = outcome.history.to_csv();
    if args.resume && history_path.exists() {
        // Append only the data rows; the header is already in place.
        let rows = csv.split_once('\n').map(|(_, r)| r).unwrap_or("");
        let existing = std::fs::read_to_string(&history_path)
            .map_err(|e| data(format!("reading {}: {e}", history_path.display())))?;
        std::fs::write(&history_path, format!("{existing}{rows}"))
            .map_err(|e| data(format!("writing {}: {e}", history_path.display())))?;
    } else {
        std::fs::write(&history_path, &csv)
            .map_err(|e| data(format!("writing {}: {e}", history_path.display())))?;
    }

    if let Some(diag) = outcome.aborted {
        crate::config::log_run(&out_dir, "train", "aborted");
        return Err(CliError::Numeric(format!(
            "training aborted: {diag} (artifacts written to {})",
            out_dir.display()
        )));
    }
    crate::config::log_run(&out_dir, "train", "ok");
    let last = outcome.history.epochs.last();
    println!(
        "train: {} epoch(s) done, train acc {}, verify acc {}",
        outcome.state.epochs_completed,
        last.map(|e| format!("{:.4}", e.train_acc)).unwrap_or_else(|| "-".into()),
        outcome
            .state
            .best_verify_acc
            .map(|a| format!("{a:.4} (best)"))
            .unwrap_or_else(|| "-".into()),
    );
    Ok(())
}
