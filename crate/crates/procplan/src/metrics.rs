//! Plan-level evaluation metrics, all reported as percentages in [0, 100].
//!
//! The two IoU variants differ on purpose: the set variant compares
//! unordered sets of unique actions, the mask variant is element-wise and
//! therefore sensitive to both order and action frequency.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MASK_EPS: f64 = 1e-9;

/// Aggregate metrics for one evaluation pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub sr: f64,
    pub macc: f64,
    pub miou_set: f64,
    pub miou_mask: f64,
    pub n_instances: usize,
    pub horizon: usize,
    pub mode: String,
}

impl EvalReport {
    pub fn table_row(&self) -> String {
        format!(
            "{:<24} {:>8.2} {:>8.2} {:>8.2} {:>8.2} {:>6}",
            self.mode, self.sr, self.macc, self.miou_set, self.miou_mask, self.n_instances
        )
    }

    pub fn table_header() -> String {
        format!(
            "{:<24} {:>8} {:>8} {:>8} {:>8} {:>6}",
            "mode", "SR", "mAcc", "mIoU-s", "mIoU-m", "n"
        )
    }
}

fn check_pairs(preds: &[Vec<usize>], gts: &[Vec<usize>]) -> Result<()> {
    if preds.is_empty() || preds.len() != gts.len() {
        return Err(Error::InvalidArgument(format!(
            "need equal non-zero counts of predictions and references, got {} vs {}",
            preds.len(),
            gts.len()
        )));
    }
    for (p, g) in preds.iter().zip(gts) {
        if p.len() != g.len() || p.is_empty() {
            return Err(Error::DimensionMismatch(format!(
                "plan lengths differ or are zero: {} vs {}",
                p.len(),
                g.len()
            )));
        }
    }
    Ok(())
}

/// Percentage of plans matching the reference exactly.
pub fn success_rate(preds: &[Vec<usize>], gts: &[Vec<usize>]) -> Result<f64> {
    check_pairs(preds, gts)?;
    let hits = preds.iter().zip(gts).filter(|(p, g)| p == g).count();
    Ok(100.0 * hits as f64 / preds.len() as f64)
}

/// Mean per-step accuracy.
pub fn mean_accuracy(preds: &[Vec<usize>], gts: &[Vec<usize>]) -> Result<f64> {
    check_pairs(preds, gts)?;
    let mut acc = 0.0;
    for (p, g) in preds.iter().zip(gts) {
        let m = p.iter().zip(g).filter(|(a, b)| a == b).count();
        acc += m as f64 / p.len() as f64;
    }
    Ok(100.0 * acc / preds.len() as f64)
}

/// IoU over unordered sets of unique actions, averaged over instances.
pub fn miou_set(preds: &[Vec<usize>], gts: &[Vec<usize>]) -> Result<f64> {
    check_pairs(preds, gts)?;
    let mut acc = 0.0;
    for (p, g) in preds.iter().zip(gts) {
        let ps: BTreeSet<usize> = p.iter().copied().collect();
        let gs: BTreeSet<usize> = g.iter().copied().collect();
        let inter = ps.intersection(&gs).count();
        let union = ps.union(&gs).count();
        acc += inter as f64 / union as f64;
    }
    Ok(100.0 * acc / preds.len() as f64)
}

/// Element-wise IoU over one-hot step masks: each matching timestep
/// contributes 1 to intersection and 1 to union; each mismatching timestep
/// contributes 0 and 2.
pub fn miou_mask(preds: &[Vec<usize>], gts: &[Vec<usize>]) -> Result<f64> {
    check_pairs(preds, gts)?;
    let mut acc = 0.0;
    for (p, g) in preds.iter().zip(gts) {
        let matches = p.iter().zip(g).filter(|(a, b)| a == b).count();
        let mismatches = p.len() - matches;
        let inter = matches as f64;
        let union = matches as f64 + 2.0 * mismatches as f64;
        acc += inter / (union + MASK_EPS);
    }
    Ok(100.0 * acc / preds.len() as f64)
}

pub fn evaluate(preds: &[Vec<usize>], gts: &[Vec<usize>], mode: &str) -> Result<EvalReport> {
    check_pairs(preds, gts)?;
    Ok(EvalReport {
        sr: success_rate(preds, gts)?,
        macc: mean_accuracy(preds, gts)?,
        miou_set: miou_set(preds, gts)?,
        miou_mask: miou_mask(preds, gts)?,
        n_instances: preds.len(),
        horizon: gts[0].len(),
        mode: mode.to_string(),
    })
}
