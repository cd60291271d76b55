//! Dataset manifest: split assignment, normalization statistics, and the
//! versioned text file that records both.
//!
//! Split policy: VERIFY1 holds whole images (the majority-vote evaluation
//! needs complete images), selected per class by seeded RNG with the
//! constraint that every operator tag is represented. TRAIN images are drawn
//! from the remainder until they can supply the requested block budget, and
//! the budget is then sampled from their pooled blocks without replacement.
//! Images untouched by either step form VERIFY2, contributing all their
//! blocks. No image ever contributes blocks to more than one split.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Block, HdrClass};
use crate::{Error, Result, Scalar};

/// Dataset split a source image belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Verify1,
    Verify2,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Verify1 => "verify1",
            Split::Verify2 => "verify2",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "verify1" => Ok(Split::Verify1),
            "verify2" => Ok(Split::Verify2),
            other => Err(Error::Data(format!("invalid split name {other:?}"))),
        }
    }

    pub const ALL: [Split; 3] = [Split::Train, Split::Verify1, Split::Verify2];
}

/// One source image as seen by the split assigner.
#[derive(Debug, Clone)]
pub struct ImageRecord {
    pub path: String,
    pub class: HdrClass,
    /// Operator tag: the iTMO name for iHDR images, "fused" for mHDR.
    pub operator: String,
    /// Number of 64x64 blocks the preprocessed image yields (>= 1).
    pub num_blocks: usize,
}

/// Output of [`assign_splits`]: per-image split plus the per-image block
/// indices sampled for TRAIN.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitPlan {
    /// Split of each input image, in input order.
    pub splits: Vec<Split>,
    /// For TRAIN images, the sorted indices of the sampled blocks; empty for
    /// other splits.
    pub train_picks: Vec<Vec<u32>>,
}

/// Assigns splits and samples the TRAIN block budget.
///
/// Deterministic for fixed `(images, seed)`: one ChaCha8 stream is consumed
/// in a fixed order (mHDR verification picks, mHDR training, then iHDR).
pub fn assign_splits(
    images: &[ImageRecord],
    seed: u64,
    verify_images_per_class: usize,
    train_blocks_total: usize,
) -> Result<SplitPlan> {
    if verify_images_per_class == 0 {
        return Err(Error::Parameter(
            "verify_images_per_class must be >= 1".into(),
        ));
    }
    if train_blocks_total == 0 || train_blocks_total % 2 != 0 {
        return Err(Error::Parameter(format!(
            "train_blocks_total must be positive and even (1:1 class ratio), got {train_blocks_total}"
        )));
    }
    let per_class_budget = train_blocks_total / 2;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut splits = vec![Split::Verify2; images.len()];
    let mut train_picks = vec![Vec::new(); images.len()];

    for class in HdrClass::ALL {
        let members: Vec<usize> = (0..images.len())
            .filter(|&i| images[i].class == class)
            .collect();
        if members.len() <= verify_images_per_class {
            return Err(Error::Data(format!(
                "class {} has {} images; need more than {verify_images_per_class}",
                class.name(),
                members.len()
            )));
        }

        // VERIFY1: one image per operator tag, then uniform fill.
        let mut by_tag: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for &i in &members {
            by_tag.entry(images[i].operator.as_str()).or_default().push(i);
        }
        if by_tag.len() > verify_images_per_class {
            return Err(Error::Parameter(format!(
                "class {}: {} operator tags cannot be covered by {verify_images_per_class} verification images",
                class.name(),
                by_tag.len()
            )));
        }
        let mut verify: Vec<usize> = Vec::with_capacity(verify_images_per_class);
        for (_, tagged) in by_tag.iter() {
            let pick = tagged[rand::Rng::gen_range(&mut rng, 0..tagged.len())];
            verify.push(pick);
        }
        let mut pool: Vec<usize> = members
            .iter()
            .copied()
            .filter(|i| !verify.contains(i))
            .collect();
        let fill = verify_images_per_class - verify.len();
        let chosen = rand::seq::index::sample(&mut rng, pool.len(), fill);
        let mut fill_set: Vec<usize> = chosen.iter().map(|k| pool[k]).collect();
        fill_set.sort_unstable();
        for &i in &fill_set {
            verify.push(i);
        }
        pool.retain(|i| !fill_set.contains(i));
        for &i in &verify {
            splits[i] = Split::Verify1;
        }

        // TRAIN: shuffle the remaining images, take whole images until the
        // block budget is reachable, then sample the budget from their pool.
        let available: usize = pool.iter().map(|&i| images[i].num_blocks).sum();
        if available < per_class_budget {
            return Err(Error::Data(format!(
                "class {}: training needs {per_class_budget} blocks but only {available} are available across {} non-verification images",
                class.name(),
                pool.len()
            )));
        }
        pool.shuffle(&mut rng);
        let mut train_images: Vec<usize> = Vec::new();
        let mut cum = 0usize;
        for &i in &pool {
            if cum >= per_class_budget {
                break;
            }
            train_images.push(i);
            cum += images[i].num_blocks;
        }
        for &i in &train_images {
            splits[i] = Split::Train;
        }
        // Flat pool of (image, block) pairs in train_images order.
        let flat: Vec<(usize, u32)> = train_images
            .iter()
            .flat_map(|&i| (0..images[i].num_blocks as u32).map(move |b| (i, b)))
            .collect();
        let sampled = rand::seq::index::sample(&mut rng, flat.len(), per_class_budget);
        for k in sampled.iter() {
            let (img, block) = flat[k];
            train_picks[img].push(block);
        }
        for picks in &mut train_picks {
            picks.sort_unstable();
        }
    }

    Ok(SplitPlan {
        splits,
        train_picks,
    })
}

/// One manifest record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub path: String,
    pub class: HdrClass,
    pub split: Split,
    pub operator: String,
}

/// Input conditioning recorded for reproducibility.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Conditioning {
    /// Natural-log luminance, `ln(L + 1e-6)`.
    LogLn,
    /// Per-image min-max normalized luminance (ablation input).
    PixelMinMax,
}

impl Conditioning {
    pub fn name(self) -> &'static str {
        match self {
            Conditioning::LogLn => "log_ln",
            Conditioning::PixelMinMax => "pixel_minmax",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "log_ln" => Ok(Conditioning::LogLn),
            "pixel_minmax" => Ok(Conditioning::PixelMinMax),
            other => Err(Error::Data(format!("invalid conditioning {other:?}"))),
        }
    }
}

const MANIFEST_MAGIC: &str = "hdrsource-manifest v1";

/// Split assignments plus the normalization statistics of the TRAIN blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub seed: u64,
    pub block_size: usize,
    pub conditioning: Conditioning,
    /// Mean of all TRAIN block pixels (f64 accumulation).
    pub norm_mean: f64,
    /// Population standard deviation of all TRAIN block pixels; > 0.
    pub norm_std: f64,
    /// One entry per source image; `Block::source_id` indexes this list.
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    /// Serializes to the versioned tab-separated text format. Deterministic:
    /// equal manifests produce byte-identical text.
    pub fn to_text(&self) -> Result<String> {
        let mut out = String::new();
        out.push_str(MANIFEST_MAGIC);
        out.push('\n');
        out.push_str(&format!("seed\t{}\n", self.seed));
        out.push_str(&format!("block\t{}\n", self.block_size));
        out.push_str(&format!("conditioning\t{}\n", self.conditioning.name()));
        out.push_str(&format!("norm_mean\t{}\n", self.norm_mean));
        out.push_str(&format!("norm_std\t{}\n", self.norm_std));
        out.push_str(&format!("entries\t{}\n", self.entries.len()));
        for e in &self.entries {
            if e.path.contains('\t') || e.path.contains('\n') {
                return Err(Error::Data(format!(
                    "path {:?} contains tab or newline and cannot be recorded",
                    e.path
                )));
            }
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\n",
                e.path,
                e.class.name(),
                e.split.name(),
                e.operator
            ));
        }
        Ok(out)
    }

    pub fn parse_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let magic = lines
            .next()
            .ok_or_else(|| Error::Data("empty manifest".into()))?;
        if magic != MANIFEST_MAGIC {
            return Err(Error::Data(format!(
                "bad manifest magic {magic:?} (expected {MANIFEST_MAGIC:?})"
            )));
        }
        let mut kv = |key: &str| -> Result<String> {
            let line = lines
                .next()
                .ok_or_else(|| Error::Data(format!("manifest truncated before {key}")))?;
            let (k, v) = line
                .split_once('\t')
                .ok_or_else(|| Error::Data(format!("malformed manifest line {line:?}")))?;
            if k != key {
                return Err(Error::Data(format!(
                    "expected manifest key {key:?}, found {k:?}"
                )));
            }
            Ok(v.to_owned())
        };
        let seed: u64 = kv("seed")?
            .parse()
            .map_err(|_| Error::Data("invalid seed".into()))?;
        let block_size: usize = kv("block")?
            .parse()
            .map_err(|_| Error::Data("invalid block size".into()))?;
        let conditioning = Conditioning::parse(&kv("conditioning")?)?;
        let norm_mean: f64 = kv("norm_mean")?
            .parse()
            .map_err(|_| Error::Data("invalid norm_mean".into()))?;
        let norm_std: f64 = kv("norm_std")?
            .parse()
            .map_err(|_| Error::Data("invalid norm_std".into()))?;
        if !(norm_std > 0.0) {
            return Err(Error::Data(format!(
                "manifest norm_std must be > 0, got {norm_std}"
            )));
        }
        let count: usize = kv("entries")?
            .parse()
            .map_err(|_| Error::Data("invalid entry count".into()))?;
        let mut entries = Vec::with_capacity(count);
        for _ in 0..count {
            let line = lines
                .next()
                .ok_or_else(|| Error::Data("manifest truncated in entry list".into()))?;
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 4 {
                return Err(Error::Data(format!(
                    "manifest entry needs 4 tab-separated fields, got {line:?}"
                )));
            }
            entries.push(ManifestEntry {
                path: fields[0].to_owned(),
                class: HdrClass::parse(fields[1])?,
                split: Split::parse(fields[2])?,
                operator: fields[3].to_owned(),
            });
        }
        if lines.next().is_some() {
            return Err(Error::Data("trailing data after manifest entries".into()));
        }
        Ok(Self {
            seed,
            block_size,
            conditioning,
            norm_mean,
            norm_std,
            entries,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_text(&text)
    }

    /// Indices of images with the given split (and class, if supplied).
    pub fn image_ids(&self, split: Split, class: Option<HdrClass>) -> Vec<u32> {
        self.entries
            .iter()
            .enumerate()
            .filter(|(_, e)| e.split == split && class.map_or(true, |c| e.class == c))
            .map(|(i, _)| i as u32)
            .collect()
    }
}

/// Mean and population standard deviation over all pixels of the given
/// blocks, accumulated in f64.
pub fn normalization_stats<T: Scalar>(blocks: &[Block<T>]) -> Result<(f64, f64)> {
    let n: usize = blocks.iter().map(|b| b.pixels.len()).sum();
    if n == 0 {
        return Err(Error::Data("no blocks to compute statistics over".into()));
    }
    let mut sum = 0f64;
    for b in blocks {
        for v in &b.pixels {
            sum += v.to_f64v();
        }
    }
    let mean = sum / n as f64;
    let mut ss = 0f64;
    for b in blocks {
        for v in &b.pixels {
            let d = v.to_f64v() - mean;
            ss += d * d;
        }
    }
    Ok((mean, (ss / n as f64).sqrt()))
}

/// Standardizes block pixels in place with the TRAIN statistics.
pub fn normalize_blocks<T: Scalar>(blocks: &mut [Block<T>], mean: f64, std: f64) -> Result<()> {
    if !(std > 0.0) {
        return Err(Error::Numeric(format!(
            "degenerate dataset: normalization std is {std}"
        )));
    }
    let (m, s) = (T::from_f64v(mean), T::from_f64v(std));
    for b in blocks {
        for v in &mut b.pixels {
            *v = (*v - m) / s;
        }
    }
    Ok(())
}
