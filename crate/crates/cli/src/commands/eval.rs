//! `eval`: score one split of a built dataset with a trained model (CNN
//! checkpoint or SVM model, distinguished by file magic) and emit the
//! metrics table, ROC polyline, and vote record.
//!
//! Output names carry the model stem, the manifest seed, and the split
//! (e.g. `report-best-s7-verify1.csv`), so several evaluations can share a
//! directory without clobbering each other.

use std::path::PathBuf;

use hdrsource::eval::{evaluate_blocks, report_csv, roc_csv, roc_svg, BlockScore, SplitReport};
use hdrsource::features::{extract, load_svm_model};
use hdrsource::models::{load_checkpoint, predict_blocks};
use hdrsource::pipeline::builder::load_split_blocks;
use hdrsource::pipeline::{Block, DatasetManifest, Split};

use crate::config::{ConfigFile, Resolved};
use crate::exit::{data, usage, CliError};
use crate::EvalArgs;

const CKPT_MAGIC: &[u8; 8] = b"HDRCKPT1";
const SVM_MAGIC: &[u8; 8] = b"HDRSVM01";

fn cnn_scores(
    model_path: &PathBuf,
    blocks: &mut [Block<f32>],
) -> Result<Vec<BlockScore>, CliError> {
    let mut ckpt = load_checkpoint(model_path)?;
    // Standardize with the statistics stored in the checkpoint: the weights
    // are only meaningful relative to the training distribution, even if the
    // dataset under evaluation was built later.
    if !(ckpt.norm_std > 0.0) {
        return Err(data(format!(
            "checkpoint {} has non-positive normalization std {}",
            model_path.display(),
            ckpt.norm_std
        )));
    }
    let (mean, std) = (ckpt.norm_mean as f32, ckpt.norm_std as f32);
    for b in blocks.iter_mut() {
        for v in &mut b.pixels {
            *v = (*v - mean) / std;
        }
    }
    let refs: Vec<&Block<f32>> = blocks.iter().collect();
    let probs = predict_blocks(&mut ckpt.model, &refs)?;
    Ok(refs
        .iter()
        .zip(probs)
        .map(|(b, (pm, pi))| BlockScore {
            source_id: b.source_id,
            label: b.label,
            p_mhdr: pm as f64,
            p_ihdr: pi as f64,
        })
        .collect())
}

fn svm_scores(model_path: &PathBuf, blocks: &[Block<f32>]) -> Result<Vec<BlockScore>, CliError> {
    let (model, kind) = load_svm_model(model_path)?;
    let mut out = Vec::with_capacity(blocks.len());
    for b in blocks {
        let feature = extract(kind, &b.pixels)?;
        let (_, margin) = model.predict(&feature.values)?;
        // The margin is an iHDR score; squash it to (0, 1) so votes and ROC
        // code can treat it like a class probability.
        let p_ihdr = 1.0 / (1.0 + (-margin).exp());
        out.push(BlockScore {
            source_id: b.source_id,
            label: b.label,
            p_mhdr: 1.0 - p_ihdr,
            p_ihdr,
        });
    }
    Ok(out)
}

fn votes_csv(report: &SplitReport, manifest: &DatasetManifest) -> Result<String, CliError> {
    let mut out = String::from("source_id,label,votes_mhdr,votes_ihdr,final,correct,tie_broken\n");
    for v in &report.votes {
        let entry = manifest
            .entries
            .get(v.source_id as usize)
            .ok_or_else(|| data(format!("vote for unknown image id {}", v.source_id)))?;
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            v.source_id,
            entry.class.name(),
            v.votes_mhdr,
            v.votes_ihdr,
            v.final_class.name(),
            v.final_class == entry.class,
            v.tie_broken
        ));
    }
    Ok(out)
}

/// Per-class metrics table in the style of a verification results table:
/// block accuracy in percent with the image-level majority-vote accuracy in
/// brackets.
fn print_verify1_table(report: &SplitReport) {
    println!("  class   blocks  accuracy% [mvs%]      auc  images");
    for c in &report.per_class {
        println!(
            "  {:<6} {:>7}  {:>6.2} [{:>6.2}]  {:>7.4}  {:>6}",
            c.class.name(),
            c.block_count,
            100.0 * c.block_accuracy,
            100.0 * c.mvs_accuracy,
            c.auc,
            c.image_count
        );
    }
    let blocks: usize = report.per_class.iter().map(|c| c.block_count).sum();
    let images: usize = report.per_class.iter().map(|c| c.image_count).sum();
    println!(
        "  {:<6} {:>7}  {:>6.2} [{:>6.2}]  {:>7.4}  {:>6}",
        "all",
        blocks,
        100.0 * report.block_accuracy,
        100.0 * report.mvs_accuracy,
        report.roc.auc,
        images
    );
}

pub fn run(args: &EvalArgs) -> Result<(), CliError> {
    let file = ConfigFile::load(args.config.as_deref())?;
    let mut resolved = Resolved::default();
    let data_dir: PathBuf = resolved.resolve_path("data", args.data.clone(), &file)?;
    let model_path: PathBuf = resolved.resolve_path("model", args.model.clone(), &file)?;
    let split_name: String = resolved.resolve("split", args.split.clone(), &file, None)?;
    let out_dir: PathBuf = resolved.resolve_path("out", args.out.clone(), &file)?;
    file.finish()?;
    let split = Split::parse(&split_name).map_err(|e| usage(format!("--split: {e}")))?;

    let manifest = super::load_manifest(&data_dir)?;
    let mut blocks = load_split_blocks(&data_dir, &manifest, split, false)?;
    if blocks.is_empty() {
        return Err(data(format!("split {} holds no blocks", split.name())));
    }

    let mut magic = [0u8; 8];
    {
        use std::io::Read;
        let mut f = std::fs::File::open(&model_path)
            .map_err(|e| data(format!("opening {}: {e}", model_path.display())))?;
        f.read_exact(&mut magic)
            .map_err(|e| data(format!("reading {}: {e}", model_path.display())))?;
    }
    let scores = if &magic == CKPT_MAGIC {
        cnn_scores(&model_path, &mut blocks)?
    } else if &magic == SVM_MAGIC {
        svm_scores(&model_path, &blocks)?
    } else {
        return Err(data(format!(
            "{} is neither a checkpoint nor an SVM model (unknown magic)",
            model_path.display()
        )));
    };

    let report = evaluate_blocks(&scores)?;
    let stem = model_path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("model");
    let base = format!("{stem}-s{}-{}", manifest.seed, split.name());

    match split {
        Split::Verify2 => {
            // The held-out leftover split reports one pooled block accuracy.
            super::write_artifact(
                &out_dir,
                &format!("report-{base}.csv"),
                &format!("blocks,accuracy\n{},{}\n", scores.len(), report.block_accuracy),
            )?;
            println!(
                "eval: {} on {}: block accuracy {:.2}% over {} blocks",
                stem,
                split.name(),
                100.0 * report.block_accuracy,
                scores.len()
            );
        }
        _ => {
            super::write_artifact(&out_dir, &format!("report-{base}.csv"), &report_csv(&report))?;
            super::write_artifact(
                &out_dir,
                &format!("votes-{base}.csv"),
                &votes_csv(&report, &manifest)?,
            )?;
            println!("eval: {} on {}:", stem, split.name());
            print_verify1_table(&report);
        }
    }
    super::write_artifact(&out_dir, &format!("roc-{base}.csv"), &roc_csv(&report.roc))?;
    super::write_artifact(&out_dir, &format!("roc-{base}.svg"), &roc_svg(&report.roc))?;
    resolved.write(&out_dir)?;
    crate::config::log_run(&out_dir, "eval", "ok");
    Ok(())
}
