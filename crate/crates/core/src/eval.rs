//! Classification metrics: ROC/AUC, accuracy, confusion counts, and
//! image-level majority voting over block predictions.

use std::collections::BTreeMap;

use crate::pipeline::HdrClass;
use crate::{Error, Result};

/// An ROC curve: `points` runs from exactly (0,0) to exactly (1,1) with both
/// coordinates non-decreasing, and `auc` is its trapezoidal area (equal to
/// the Mann-Whitney statistic with ties counted half).
#[derive(Debug, Clone)]
pub struct RocCurve {
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
}

/// Sweeps thresholds over the distinct score values, treating `true` labels
/// as positive and higher scores as more positive. Tied scores advance the
/// curve diagonally in one step, which is what makes the trapezoidal area
/// count tied positive/negative pairs as one half.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<RocCurve> {
    if scores.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} scores vs {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if let Some((i, s)) = scores
        .iter()
        .enumerate()
        .find(|(_, s)| !s.is_finite())
    {
        return Err(Error::Data(format!("score {i} is not finite: {s}")));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::Data(format!(
            "ROC needs both classes, got {pos} positives and {neg} negatives"
        )));
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap());

    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        // Consume the whole group of equal scores before emitting a point.
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push((fp as f64 / neg as f64, tp as f64 / pos as f64));
    }

    let auc = points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0)
        .sum();
    Ok(RocCurve { points, auc })
}

/// Fraction of predictions equal to labels.
pub fn accuracy(preds: &[HdrClass], labels: &[HdrClass]) -> Result<f64> {
    if preds.len() != labels.len() || preds.is_empty() {
        return Err(Error::Shape(format!(
            "accuracy needs equal non-empty lists, got {} and {}",
            preds.len(),
            labels.len()
        )));
    }
    let correct = preds.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(correct as f64 / preds.len() as f64)
}

/// 2x2 confusion counts indexed `[actual][predicted]` in class-index order
/// (mhdr = 0, ihdr = 1).
pub fn confusion(preds: &[HdrClass], labels: &[HdrClass]) -> Result<[[usize; 2]; 2]> {
    if preds.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} predictions vs {} labels",
            preds.len(),
            labels.len()
        )));
    }
    let mut counts = [[0usize; 2]; 2];
    for (p, l) in preds.iter().zip(labels) {
        counts[l.index()][p.index()] += 1;
    }
    Ok(counts)
}

/// Outcome of majority voting over one image's blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct VoteResult {
    pub source_id: u32,
    /// The (class, confidence) pairs voted on, as given.
    pub block_preds: Vec<(HdrClass, f64)>,
    pub votes_mhdr: usize,
    pub votes_ihdr: usize,
    pub final_class: HdrClass,
    /// True when votes tied and summed confidence decided.
    pub tie_broken: bool,
    /// Mean confidence of the blocks that voted for the final class.
    pub mean_confidence: f64,
}

/// Majority vote with a deterministic tie rule: equal vote counts go to the
/// class with the higher summed confidence (and to mhdr in the measure-zero
/// event that those tie too).
pub fn majority_vote(source_id: u32, block_preds: &[(HdrClass, f64)]) -> Result<VoteResult> {
    if block_preds.is_empty() {
        return Err(Error::Data(format!(
            "image {source_id} has no block predictions to vote on"
        )));
    }
    let mut votes = [0usize; 2];
    let mut conf_sums = [0.0f64; 2];
    for &(class, conf) in block_preds {
        if !conf.is_finite() {
            return Err(Error::Data(format!(
                "non-finite confidence {conf} for image {source_id}"
            )));
        }
        votes[class.index()] += 1;
        conf_sums[class.index()] += conf;
    }
    let (final_class, tie_broken) = if votes[0] != votes[1] {
        (HdrClass::from_index(if votes[0] > votes[1] { 0 } else { 1 })?, false)
    } else {
        (
            if conf_sums[0] >= conf_sums[1] {
                HdrClass::Mhdr
            } else {
                HdrClass::Ihdr
            },
            true,
        )
    };
    let winners = votes[final_class.index()];
    let mean_confidence = if winners == 0 {
        0.0
    } else {
        conf_sums[final_class.index()] / winners as f64
    };
    Ok(VoteResult {
        source_id,
        block_preds: block_preds.to_vec(),
        votes_mhdr: votes[0],
        votes_ihdr: votes[1],
        final_class,
        tie_broken,
        mean_confidence,
    })
}

/// One block's true label and class probabilities (or calibrated scores),
/// tagged with the image it came from.
#[derive(Debug, Clone, Copy)]
pub struct BlockScore {
    pub source_id: u32,
    pub label: HdrClass,
    pub p_mhdr: f64,
    pub p_ihdr: f64,
}

impl BlockScore {
    pub fn predicted(&self) -> HdrClass {
        if self.p_mhdr >= self.p_ihdr {
            HdrClass::Mhdr
        } else {
            HdrClass::Ihdr
        }
    }
}

/// Per-class slice of a split report, in the style of a per-class results
/// table row.
#[derive(Debug, Clone)]
pub struct ClassReport {
    pub class: HdrClass,
    pub block_count: usize,
    pub block_accuracy: f64,
    /// AUC over all blocks with this class as positive.
    pub auc: f64,
    pub image_count: usize,
    /// Fraction of this class's images voted to the correct class.
    pub mvs_accuracy: f64,
}

/// Full evaluation of scored blocks: per-class rows, pooled accuracies, the
/// pooled ROC (iHDR as positive), and every vote.
#[derive(Debug, Clone)]
pub struct SplitReport {
    pub per_class: Vec<ClassReport>,
    pub block_accuracy: f64,
    pub mvs_accuracy: f64,
    pub roc: RocCurve,
    pub votes: Vec<VoteResult>,
}

/// Groups scored blocks by image, votes, and assembles per-class and pooled
/// metrics. Blocks of one image must all carry the same label.
pub fn evaluate_blocks(scores: &[BlockScore]) -> Result<SplitReport> {
    if scores.is_empty() {
        return Err(Error::Data("no block scores to evaluate".into()));
    }
    let mut by_image: BTreeMap<u32, (HdrClass, Vec<(HdrClass, f64)>)> = BTreeMap::new();
    for s in scores {
        if !(s.p_mhdr.is_finite() && s.p_ihdr.is_finite()) {
            return Err(Error::Data(format!(
                "non-finite score for image {}",
                s.source_id
            )));
        }
        let pred = s.predicted();
        let conf = if pred == HdrClass::Mhdr {
            s.p_mhdr
        } else {
            s.p_ihdr
        };
        let entry = by_image
            .entry(s.source_id)
            .or_insert_with(|| (s.label, Vec::new()));
        if entry.0 != s.label {
            return Err(Error::Data(format!(
                "image {} carries blocks with conflicting labels",
                s.source_id
            )));
        }
        entry.1.push((pred, conf));
    }

    let mut votes = Vec::with_capacity(by_image.len());
    let mut image_total = [0usize; 2];
    let mut image_correct = [0usize; 2];
    for (&id, (label, preds)) in &by_image {
        let vote = majority_vote(id, preds)?;
        image_total[label.index()] += 1;
        if vote.final_class == *label {
            image_correct[label.index()] += 1;
        }
        votes.push(vote);
    }

    let mut per_class = Vec::new();
    for class in HdrClass::ALL {
        let class_scores: Vec<&BlockScore> =
            scores.iter().filter(|s| s.label == class).collect();
        if class_scores.is_empty() {
            return Err(Error::Data(format!(
                "no blocks labeled {} in the split",
                class.name()
            )));
        }
        let correct = class_scores
            .iter()
            .filter(|s| s.predicted() == class)
            .count();
        // Per-class AUC: this class is the positive over all block scores.
        let positive_scores: Vec<f64> = scores
            .iter()
            .map(|s| {
                if class == HdrClass::Mhdr {
                    s.p_mhdr
                } else {
                    s.p_ihdr
                }
            })
            .collect();
        let positive_labels: Vec<bool> = scores.iter().map(|s| s.label == class).collect();
        let auc = roc_auc(&positive_scores, &positive_labels)?.auc;
        per_class.push(ClassReport {
            class,
            block_count: class_scores.len(),
            block_accuracy: correct as f64 / class_scores.len() as f64,
            auc,
            image_count: image_total[class.index()],
            mvs_accuracy: image_correct[class.index()] as f64
                / image_total[class.index()].max(1) as f64,
        });
    }

    let block_correct = scores.iter().filter(|s| s.predicted() == s.label).count();
    let pooled_scores: Vec<f64> = scores.iter().map(|s| s.p_ihdr).collect();
    let pooled_labels: Vec<bool> = scores.iter().map(|s| s.label == HdrClass::Ihdr).collect();
    Ok(SplitReport {
        per_class,
        block_accuracy: block_correct as f64 / scores.len() as f64,
        mvs_accuracy: (image_correct[0] + image_correct[1]) as f64
            / (image_total[0] + image_total[1]) as f64,
        roc: roc_auc(&pooled_scores, &pooled_labels)?,
        votes,
    })
}

/// Metrics table as CSV: one row per class plus a pooled row.
pub fn report_csv(report: &SplitReport) -> String {
    let mut out = String::from(
        "class,block_count,block_accuracy,auc,image_count,mvs_accuracy\n",
    );
    for c in &report.per_class {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            c.class.name(),
            c.block_count,
            c.block_accuracy,
            c.auc,
            c.image_count,
            c.mvs_accuracy
        ));
    }
    let images: usize = report.per_class.iter().map(|c| c.image_count).sum();
    let blocks: usize = report.per_class.iter().map(|c| c.block_count).sum();
    out.push_str(&format!(
        "all,{},{},{},{},{}\n",
        blocks, report.block_accuracy, report.roc.auc, images, report.mvs_accuracy
    ));
    out
}

/// ROC polyline as CSV.
pub fn roc_csv(roc: &RocCurve) -> String {
    let mut out = String::from("fpr,tpr\n");
    for (x, y) in &roc.points {
        out.push_str(&format!("{x},{y}\n"));
    }
    out
}

/// Standalone SVG plot of the ROC polyline with a unit box, quarter grid,
/// and the chance diagonal.
pub fn roc_svg(roc: &RocCurve) -> String {
    const W: f64 = 480.0;
    const H: f64 = 480.0;
    const M: f64 = 48.0; // margin on every side
    let sx = |x: f64| M + x * (W - 2.0 * M);
    let sy = |y: f64| H - M - y * (H - 2.0 * M);
    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" \
         viewBox=\"0 0 {W} {H}\">\n"
    ));
    svg.push_str(&format!(
        "  <rect x=\"0\" y=\"0\" width=\"{W}\" height=\"{H}\" fill=\"white\"/>\n"
    ));
    for k in 0..=4 {
        let t = k as f64 / 4.0;
        svg.push_str(&format!(
            "  <line x1=\"{:.1}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"#dddddd\"/>\n",
            sx(t),
            sy(0.0),
            sx(t),
            sy(1.0)
        ));
        svg.push_str(&format!(
            "  <line x1=\"{:.1}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"#dddddd\"/>\n",
            sx(0.0),
            sy(t),
            sx(1.0),
            sy(t)
        ));
        svg.push_str(&format!(
            "  <text x=\"{:.1}\" y=\"{:.1}\" font-size=\"11\" text-anchor=\"middle\">{t}</text>\n",
            sx(t),
            sy(0.0) + 16.0
        ));
        svg.push_str(&format!(
            "  <text x=\"{:.1}\" y=\"{:.1}\" font-size=\"11\" text-anchor=\"end\">{t}</text>\n",
            sx(0.0) - 6.0,
            sy(t) + 4.0
        ));
    }
    svg.push_str(&format!(
        "  <line x1=\"{:.1}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"#999999\" \
         stroke-dasharray=\"4 4\"/>\n",
        sx(0.0),
        sy(0.0),
        sx(1.0),
        sy(1.0)
    ));
    let path: Vec<String> = roc
        .points
        .iter()
        .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
        .collect();
    svg.push_str(&format!(
        "  <polyline points=\"{}\" fill=\"none\" stroke=\"#1f5fbf\" stroke-width=\"2\"/>\n",
        path.join(" ")
    ));
    svg.push_str(&format!(
        "  <text x=\"{:.1}\" y=\"{:.1}\" font-size=\"12\">AUC = {:.4}</text>\n",
        sx(0.55),
        sy(0.08),
        roc.auc
    ));
    svg.push_str(&format!(
        "  <text x=\"{:.1}\" y=\"{:.1}\" font-size=\"12\" text-anchor=\"middle\">false positive rate\
         </text>\n",
        sx(0.5),
        H - 10.0
    ));
    svg.push_str(&format!(
        "  <text x=\"14\" y=\"{:.1}\" font-size=\"12\" text-anchor=\"middle\" \
         transform=\"rotate(-90 14 {:.1})\">true positive rate</text>\n",
        sy(0.5),
        sy(0.5)
    ));
    svg.push_str("</svg>\n");
    svg
}
