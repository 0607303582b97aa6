//! Discrimination and calibration metrics for binary risk predictions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Denominator floor for Hosmer-Lemeshow groups whose expected count is 0 or `n_g`.
pub const HL_DENOMINATOR_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub n: usize,
    pub n_positive: usize,
    /// `None` when the metric is undefined on this sample (e.g. a single class).
    pub auroc: Option<f64>,
    pub auprc: Option<f64>,
    pub brier: Option<f64>,
    pub hl_chi2: Option<f64>,
    /// Hosmer-Lemeshow groups whose denominator was clamped.
    #[serde(default)]
    pub hl_clamped_groups: usize,
    pub smr: Option<f64>,
}

/// Computes every metric; undefined ones are reported as `None` rather than
/// failing the whole report.
pub fn evaluate(labels: &[bool], probs: &[f64]) -> Result<EvaluationReport> {
    check_lengths(labels, probs)?;
    check_probabilities(probs)?;
    let hl = hl_chi2_detailed(labels, probs, 10).ok();
    Ok(EvaluationReport {
        n: labels.len(),
        n_positive: labels.iter().filter(|&&y| y).count(),
        auroc: auroc(labels, probs).ok(),
        auprc: auprc(labels, probs).ok(),
        brier: brier(labels, probs).ok(),
        hl_chi2: hl.as_ref().map(|h| h.chi2),
        hl_clamped_groups: hl.map_or(0, |h| h.clamped_groups),
        smr: smr(labels, probs).ok(),
    })
}

fn check_lengths(labels: &[bool], scores: &[f64]) -> Result<()> {
    if labels.len() != scores.len() {
        return Err(Error::Data(format!(
            "{} labels but {} scores",
            labels.len(),
            scores.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Data("scores contain NaN".into()));
    }
    Ok(())
}

fn check_probabilities(probs: &[f64]) -> Result<()> {
    match probs.iter().position(|p| !(0.0..=1.0).contains(p)) {
        Some(i) => Err(Error::Data(format!(
            "probability {} at index {i} is outside [0, 1]",
            probs[i]
        ))),
        None => Ok(()),
    }
}

/// Indices sorted by score ascending, grouped into runs of tied scores.
fn tie_groups(scores: &[f64]) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for i in idx {
        match groups.last_mut() {
            Some(g) if scores[g[0]] == scores[i] => g.push(i),
            _ => groups.push(vec![i]),
        }
    }
    groups
}

/// Probability that a random positive outranks a random negative, ties
/// counting one half (Mann-Whitney U / (n_pos * n_neg)).
pub fn auroc(labels: &[bool], scores: &[f64]) -> Result<f64> {
    check_lengths(labels, scores)?;
    let n_pos = labels.iter().filter(|&&y| y).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedMetric {
            metric: "auroc",
            reason: "both classes must be present".into(),
        });
    }
    // twice the U statistic, kept integral
    let mut twice_u: u128 = 0;
    let mut negatives_below: u128 = 0;
    for group in tie_groups(scores) {
        let pos = group.iter().filter(|&&i| labels[i]).count() as u128;
        let neg = group.len() as u128 - pos;
        twice_u += pos * (2 * negatives_below + neg);
        negatives_below += neg;
    }
    Ok(twice_u as f64 / (2.0 * n_pos as f64 * n_neg as f64))
}

/// Average precision: sum over distinct thresholds of the recall increment
/// times the precision at that threshold.
pub fn auprc(labels: &[bool], scores: &[f64]) -> Result<f64> {
    check_lengths(labels, scores)?;
    let n_pos = labels.iter().filter(|&&y| y).count();
    if n_pos == 0 {
        return Err(Error::UndefinedMetric {
            metric: "auprc",
            reason: "no positive samples".into(),
        });
    }
    let mut ap = 0.0;
    let (mut tp, mut seen) = (0usize, 0usize);
    for group in tie_groups(scores).into_iter().rev() {
        let pos = group.iter().filter(|&&i| labels[i]).count();
        tp += pos;
        seen += group.len();
        if pos > 0 {
            ap += (pos as f64 / n_pos as f64) * (tp as f64 / seen as f64);
        }
    }
    Ok(ap)
}

pub fn brier(labels: &[bool], probs: &[f64]) -> Result<f64> {
    check_lengths(labels, probs)?;
    check_probabilities(probs)?;
    if labels.is_empty() {
        return Err(Error::UndefinedMetric {
            metric: "brier",
            reason: "empty sample".into(),
        });
    }
    let sse: f64 = labels
        .iter()
        .zip(probs)
        .map(|(&y, &p)| {
            let t = if y { 1.0 } else { 0.0 };
            (p - t) * (p - t)
        })
        .sum();
    Ok(sse / labels.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct HosmerLemeshow {
    pub chi2: f64,
    /// Nonempty groups as (size, observed positives, expected positives).
    pub groups: Vec<(usize, f64, f64)>,
    pub clamped_groups: usize,
}

pub fn hl_chi2(labels: &[bool], probs: &[f64], bins: usize) -> Result<f64> {
    hl_chi2_detailed(labels, probs, bins).map(|h| h.chi2)
}

/// Hosmer-Lemeshow C statistic over groups cut at nearest-rank quantiles of the
/// predicted probabilities. Probabilities equal to a cut point fall in the
/// lower group.
pub fn hl_chi2_detailed(labels: &[bool], probs: &[f64], bins: usize) -> Result<HosmerLemeshow> {
    check_lengths(labels, probs)?;
    check_probabilities(probs)?;
    let n = labels.len();
    if bins == 0 || n < bins {
        return Err(Error::UndefinedMetric {
            metric: "hl_chi2",
            reason: format!("need at least {bins} samples, got {n}"),
        });
    }
    let mut sorted = probs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let cuts: Vec<f64> = (1..bins)
        .map(|k| crate::binarize::nearest_rank(&sorted, k, bins))
        .collect();
    let mut size = vec![0usize; bins];
    let mut observed = vec![0.0; bins];
    let mut expected = vec![0.0; bins];
    // accumulate in sorted order so the result does not depend on sample order
    let mut pairs: Vec<(f64, bool)> = probs.iter().copied().zip(labels.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    for &(p, y) in &pairs {
        let g = cuts.partition_point(|&c| c < p);
        size[g] += 1;
        expected[g] += p;
        if y {
            observed[g] += 1.0;
        }
    }
    let mut chi2 = 0.0;
    let mut clamped = 0;
    let mut groups = Vec::new();
    for g in 0..bins {
        if size[g] == 0 {
            continue;
        }
        let ng = size[g] as f64;
        let mut denom = expected[g] * (1.0 - expected[g] / ng);
        if denom < HL_DENOMINATOR_FLOOR {
            denom = HL_DENOMINATOR_FLOOR;
            clamped += 1;
        }
        chi2 += (observed[g] - expected[g]).powi(2) / denom;
        groups.push((size[g], observed[g], expected[g]));
    }
    Ok(HosmerLemeshow {
        chi2,
        groups,
        clamped_groups: clamped,
    })
}

/// Standardized mortality ratio: observed positives over summed predictions.
pub fn smr(labels: &[bool], probs: &[f64]) -> Result<f64> {
    check_lengths(labels, probs)?;
    let mut sorted = probs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let expected: f64 = sorted.iter().sum();
    if expected <= 0.0 {
        return Err(Error::UndefinedMetric {
            metric: "smr",
            reason: "sum of predicted probabilities is zero".into(),
        });
    }
    Ok(labels.iter().filter(|&&y| y).count() as f64 / expected)
}

/// Nondecreasing step function fitted by pool-adjacent-violators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsotonicMap {
    /// Lower input edge of each block, strictly increasing.
    pub thresholds: Vec<f64>,
    /// Fitted level of each block, nondecreasing.
    pub levels: Vec<f64>,
}

impl IsotonicMap {
    pub fn apply(&self, p: f64) -> f64 {
        let k = self.thresholds.partition_point(|&t| t <= p);
        self.levels[k.saturating_sub(1)]
    }
}

pub fn fit_isotonic(probs: &[f64], labels: &[bool]) -> Result<IsotonicMap> {
    check_lengths(labels, probs)?;
    if probs.is_empty() {
        return Err(Error::Data("isotonic fit needs at least one sample".into()));
    }
    // blocks of (lower edge, sum of targets, weight); tied inputs start pooled
    let mut blocks: Vec<(f64, f64, f64)> = Vec::new();
    for group in tie_groups(probs) {
        let x = probs[group[0]];
        let sum = group.iter().filter(|&&i| labels[i]).count() as f64;
        blocks.push((x, sum, group.len() as f64));
        while blocks.len() >= 2 {
            let (_, s1, w1) = blocks[blocks.len() - 1];
            let (x0, s0, w0) = blocks[blocks.len() - 2];
            if s0 / w0 > s1 / w1 {
                blocks.pop();
                *blocks.last_mut().unwrap() = (x0, s0 + s1, w0 + w1);
            } else {
                break;
            }
        }
    }
    Ok(IsotonicMap {
        thresholds: blocks.iter().map(|b| b.0).collect(),
        levels: blocks.iter().map(|b| b.1 / b.2).collect(),
    })
}

pub fn apply_isotonic(map: &IsotonicMap, probs: &[f64]) -> Vec<f64> {
    probs.iter().map(|&p| map.apply(p)).collect()
}
