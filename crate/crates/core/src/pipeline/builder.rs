//! Dataset builder: turns two directories of HDR images into a manifest plus
//! per-split binary block shards.
//!
//! The builder makes two passes over the corpus. Pass one preprocesses each
//! image just far enough to count its blocks; split assignment then runs on
//! the counts. Pass two re-runs the (pure) preprocessing and routes blocks
//! into their split shards, so peak memory stays near the shard sizes rather
//! than the whole conditioned corpus.

use std::path::{Path, PathBuf};

use super::manifest::{
    assign_splits, normalization_stats, Conditioning, DatasetManifest, ImageRecord,
    ManifestEntry, Split, SplitPlan,
};
use super::store::{save_blocks, shard_name};
use super::{
    compute_luminance, log_transform, normalize_pixels_8bit, resize_area, tile_blocks, Block,
    HdrClass, LuminanceMap, BLOCK_SIZE, LOG_EPSILON,
};
use crate::io::read_hdr_file;
use crate::{Error, Result};

/// Parameters of one dataset build.
#[derive(Debug, Clone)]
pub struct BuildConfig {
    pub seed: u64,
    pub verify_images_per_class: usize,
    pub train_blocks_total: usize,
    pub max_dim: usize,
    pub conditioning: Conditioning,
}

/// Build result: the manifest (also written to disk) and any warnings.
#[derive(Debug)]
pub struct BuildOutput {
    pub manifest: DatasetManifest,
    pub warnings: Vec<String>,
    /// Blocks written per split, for reporting.
    pub split_counts: [usize; 3],
}

/// Applies the conditioning chain for one image: luminance, log or min-max
/// conditioning, then the size cap.
pub fn preprocess_image(
    img: &crate::io::HdrImage<f32>,
    conditioning: Conditioning,
    max_dim: usize,
) -> Result<LuminanceMap<f32>> {
    let conditioned = match conditioning {
        Conditioning::LogLn => log_transform(&compute_luminance(img), LOG_EPSILON)?,
        Conditioning::PixelMinMax => normalize_pixels_8bit(img),
    };
    resize_area(&conditioned, max_dim)
}

/// Lists the HDR images of one class directory in sorted order, attaching
/// operator tags from an optional `tags.tsv` (`file<TAB>tag` per line).
pub fn collect_class_images(dir: &Path, default_tag: &str) -> Result<Vec<(PathBuf, String)>> {
    let mut tags = std::collections::BTreeMap::new();
    let tag_file = dir.join("tags.tsv");
    if tag_file.is_file() {
        let text = std::fs::read_to_string(&tag_file).map_err(|e| Error::io(&tag_file, e))?;
        for line in text.lines() {
            if line.is_empty() {
                continue;
            }
            let (file, tag) = line.split_once('\t').ok_or_else(|| {
                Error::Data(format!("{}: malformed tag line {line:?}", tag_file.display()))
            })?;
            tags.insert(file.to_owned(), tag.to_owned());
        }
    }
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| {
            matches!(
                p.extension().and_then(|e| e.to_str()),
                Some("hdr") | Some("pfm") | Some("rgbe")
            )
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::Data(format!(
            "{}: no .hdr or .pfm images found",
            dir.display()
        )));
    }
    Ok(files
        .into_iter()
        .map(|p| {
            let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("").to_owned();
            let tag = tags.get(&name).cloned().unwrap_or_else(|| default_tag.to_owned());
            (p, tag)
        })
        .collect())
}

/// Builds the dataset: preprocess, assign splits, compute normalization
/// statistics over the TRAIN blocks, and write `manifest.tsv` plus the three
/// split shards into `out_dir`.
pub fn build_dataset(
    mhdr: &[(PathBuf, String)],
    ihdr: &[(PathBuf, String)],
    out_dir: &Path,
    cfg: &BuildConfig,
) -> Result<BuildOutput> {
    let mut warnings = Vec::new();

    // Pass one: count blocks per usable image.
    let mut records: Vec<ImageRecord> = Vec::new();
    let mut sources: Vec<&PathBuf> = Vec::new();
    for (class, list) in [(HdrClass::Mhdr, mhdr), (HdrClass::Ihdr, ihdr)] {
        for (path, tag) in list {
            let img = read_hdr_file(path)?;
            let map = preprocess_image(&img, cfg.conditioning, cfg.max_dim)?;
            let tiling = tile_blocks(&map, BLOCK_SIZE, class, 0);
            if tiling.undersized {
                warnings.push(format!(
                    "{}: smaller than one {BLOCK_SIZE}x{BLOCK_SIZE} block after preprocessing; skipped",
                    path.display()
                ));
                continue;
            }
            records.push(ImageRecord {
                path: path.to_string_lossy().into_owned(),
                class,
                operator: tag.clone(),
                num_blocks: tiling.blocks.len(),
            });
            sources.push(path);
        }
    }

    let plan: SplitPlan = assign_splits(
        &records,
        cfg.seed,
        cfg.verify_images_per_class,
        cfg.train_blocks_total,
    )?;

    // Pass two: regenerate blocks and route them into split shards.
    let mut shards: [Vec<Block<f32>>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    for (id, record) in records.iter().enumerate() {
        let img = read_hdr_file(sources[id])?;
        let map = preprocess_image(&img, cfg.conditioning, cfg.max_dim)?;
        let tiling = tile_blocks(&map, BLOCK_SIZE, record.class, id as u32);
        let split = plan.splits[id];
        let dest = match split {
            Split::Train => 0usize,
            Split::Verify1 => 1,
            Split::Verify2 => 2,
        };
        match split {
            Split::Train => {
                let picks = &plan.train_picks[id];
                for &b in picks {
                    shards[dest].push(tiling.blocks[b as usize].clone());
                }
            }
            _ => shards[dest].extend(tiling.blocks),
        }
    }

    let (norm_mean, norm_std) = normalization_stats(&shards[0])?;
    if !(norm_std > 0.0) {
        return Err(Error::Numeric(
            "degenerate dataset: training blocks have zero variance".into(),
        ));
    }

    let manifest = DatasetManifest {
        seed: cfg.seed,
        block_size: BLOCK_SIZE,
        conditioning: cfg.conditioning,
        norm_mean,
        norm_std,
        entries: records
            .iter()
            .enumerate()
            .map(|(id, r)| ManifestEntry {
                path: r.path.clone(),
                class: r.class,
                split: plan.splits[id],
                operator: r.operator.clone(),
            })
            .collect(),
    };

    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    manifest.save(&out_dir.join("manifest.tsv"))?;
    let mut split_counts = [0usize; 3];
    for (i, split) in Split::ALL.iter().enumerate() {
        save_blocks(&out_dir.join(shard_name(*split)), &shards[i], BLOCK_SIZE)?;
        split_counts[i] = shards[i].len();
    }

    Ok(BuildOutput {
        manifest,
        warnings,
        split_counts,
    })
}

/// Loads one split's blocks, optionally standardized with the manifest's
/// TRAIN statistics.
pub fn load_split_blocks(
    dataset_dir: &Path,
    manifest: &DatasetManifest,
    split: Split,
    normalized: bool,
) -> Result<Vec<Block<f32>>> {
    let mut blocks = super::store::load_blocks(&dataset_dir.join(shard_name(split)))?;
    if normalized {
        super::manifest::normalize_blocks(&mut blocks, manifest.norm_mean, manifest.norm_std)?;
    }
    Ok(blocks)
}
