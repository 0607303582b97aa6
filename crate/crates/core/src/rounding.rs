//! Integer scorecards from continuous solutions: a grid of multipliers, and
//! for each one a greedy floor/ceil rounding of the scaled coefficients.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::binarize::BinarizedDataset;
use crate::error::{Error, Result};
use crate::pool::SolutionPool;
use crate::solver::loss::softplus;
use crate::solver::{check_feasible, logistic_loss, ConstraintSet, ContinuousSolution};

pub const DEFAULT_MULTIPLIERS: usize = 25;

/// Integer coefficients and intercept; risk is `sigmoid((w'x + w0) / multiplier)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegerRiskScore {
    pub w: Vec<i64>,
    pub w0: i64,
    pub multiplier: f64,
    /// Logistic loss of the scaled model on the training data.
    pub loss: f64,
    /// Index of the pool entry this score was rounded from.
    pub provenance: usize,
}

impl IntegerRiskScore {
    pub fn w_f64(&self) -> Vec<f64> {
        self.w.iter().map(|&v| v as f64).collect()
    }

    pub fn support(&self) -> Vec<usize> {
        (0..self.w.len()).filter(|&j| self.w[j] != 0).collect()
    }
}

/// One greedy decision of sequential rounding.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundingStep {
    /// `None` for the intercept.
    pub coordinate: Option<usize>,
    /// Scaled continuous value being rounded.
    pub scaled: f64,
    /// Candidate integers (floor/ceil clipped to the integer box) with the loss
    /// of the rows they affect.
    pub candidates: Vec<(f64, f64)>,
    pub chosen: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundingTrace {
    pub multiplier: f64,
    pub steps: Vec<RoundingStep>,
}

/// `n_m` equally spaced multipliers in `[1, m_max]` with
/// `m_max = max(|a|_inf, |b|_inf) / |w*|_inf`; `{1}` when `m_max <= 1`.
pub fn multiplier_grid(w_star: &[f64], constraints: &ConstraintSet, n_m: usize) -> Vec<f64> {
    let w_inf = w_star.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    if w_inf == 0.0 || n_m <= 1 {
        return vec![1.0];
    }
    let m_max = constraints.box_sup_norm() / w_inf;
    if m_max <= 1.0 {
        return vec![1.0];
    }
    let step = (m_max - 1.0) / (n_m - 1) as f64;
    (0..n_m)
        .map(|k| if k + 1 == n_m { m_max } else { 1.0 + k as f64 * step })
        .collect()
}

pub fn sequential_round(
    sol: &ContinuousSolution,
    data: &BinarizedDataset,
    m: f64,
    constraints: &ConstraintSet,
) -> Result<IntegerRiskScore> {
    sequential_round_traced(sol, data, m, constraints).map(|(s, _)| s)
}

/// Sequential rounding at multiplier `m`, returning the sequence of decisions.
///
/// Support coordinates are visited by decreasing `|m * w_j|` (ties by index),
/// the intercept last. At each step the floor and ceiling of the scaled value,
/// clipped into the integer box, are compared by the loss on `D / m` with all
/// other coordinates at their current values; ties go to the smaller magnitude.
pub fn sequential_round_traced(
    sol: &ContinuousSolution,
    data: &BinarizedDataset,
    m: f64,
    constraints: &ConstraintSet,
) -> Result<(IntegerRiskScore, RoundingTrace)> {
    if !(m > 0.0 && m.is_finite()) {
        return Err(Error::Config(format!("multiplier must be positive, got {m}")));
    }
    check_feasible(constraints, &sol.w, sol.w0, false)?;
    let labels = data.labels();
    let mut current: Vec<f64> = sol.w.iter().map(|&v| v * m).collect();
    let mut intercept = sol.w0 * m;
    let mut margins = data.margins(&current, intercept);

    let mut order = sol.support();
    order.sort_by(|&a, &b| current[b].abs().total_cmp(&current[a].abs()).then(a.cmp(&b)));

    let mut steps = Vec::with_capacity(order.len() + 1);
    for &j in &order {
        let rows = data.column(j);
        let (lo, hi) = constraints.integer_box(j);
        let v = current[j];
        let partial = |c: f64| -> f64 {
            let d = c - v;
            rows.iter()
                .map(|&i| softplus(-labels[i as usize] * (margins[i as usize] + d) / m))
                .sum()
        };
        let (chosen, candidates) = choose(v, lo, hi, partial);
        let d = chosen - v;
        for &i in rows {
            margins[i as usize] += d;
        }
        current[j] = chosen;
        steps.push(RoundingStep {
            coordinate: Some(j),
            scaled: v,
            candidates,
            chosen,
        });
    }
    let (lo, hi) = constraints.integer_intercept_box();
    let v = intercept;
    let partial = |c: f64| -> f64 {
        let d = c - v;
        margins
            .iter()
            .zip(labels)
            .map(|(&z, &y)| softplus(-y * (z + d) / m))
            .sum()
    };
    let (chosen, candidates) = choose(v, lo, hi, partial);
    intercept = chosen;
    steps.push(RoundingStep {
        coordinate: None,
        scaled: v,
        candidates,
        chosen,
    });

    let loss = logistic_loss(&current, intercept, data, m);
    let score = IntegerRiskScore {
        w: current.iter().map(|&v| v as i64).collect(),
        w0: intercept as i64,
        multiplier: m,
        loss,
        provenance: 0,
    };
    Ok((score, RoundingTrace { multiplier: m, steps }))
}

/// Floor/ceil of `v` clipped into `[lo, hi]`, the one with lower `loss`;
/// ties to the smaller magnitude.
fn choose(v: f64, lo: f64, hi: f64, loss: impl Fn(f64) -> f64) -> (f64, Vec<(f64, f64)>) {
    let mut values = vec![v.floor().clamp(lo, hi), v.ceil().clamp(lo, hi)];
    values.dedup();
    let candidates: Vec<(f64, f64)> = values.into_iter().map(|c| (c, loss(c))).collect();
    let best = candidates
        .iter()
        .copied()
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.abs().total_cmp(&b.0.abs())))
        .expect("at least one candidate");
    (best.0, candidates)
}

/// Every multiplier tried for one pool entry and the resulting loss.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSearch {
    pub provenance: usize,
    pub candidates: Vec<(f64, f64)>,
    pub best: IntegerRiskScore,
}

pub fn round_pool(
    pool: &SolutionPool,
    data: &BinarizedDataset,
    constraints: &ConstraintSet,
    n_m: usize,
) -> Result<Vec<IntegerRiskScore>> {
    Ok(round_pool_searched(pool, data, constraints, n_m)?
        .into_iter()
        .map(|g| g.best)
        .collect())
}

/// Rounds every pool entry at every grid multiplier, keeping the lowest-loss
/// multiplier per entry (ties to the smaller multiplier). Sorted by loss.
pub fn round_pool_searched(
    pool: &SolutionPool,
    data: &BinarizedDataset,
    constraints: &ConstraintSet,
    n_m: usize,
) -> Result<Vec<GridSearch>> {
    if pool.is_empty() {
        return Err(Error::Data("cannot round an empty pool".into()));
    }
    let tasks: Vec<(usize, f64)> = pool
        .entries
        .iter()
        .enumerate()
        .flat_map(|(t, e)| {
            multiplier_grid(&e.w, constraints, n_m)
                .into_iter()
                .map(move |m| (t, m))
        })
        .collect();
    let rounded: Vec<Result<IntegerRiskScore>> = tasks
        .par_iter()
        .map(|&(t, m)| {
            sequential_round(&pool.entries[t], data, m, constraints).map(|mut s| {
                s.provenance = t;
                s
            })
        })
        .collect();

    let mut searches: Vec<GridSearch> = Vec::with_capacity(pool.len());
    for r in rounded {
        let score = r?;
        match searches.last_mut() {
            Some(g) if g.provenance == score.provenance => {
                g.candidates.push((score.multiplier, score.loss));
                if score.loss < g.best.loss {
                    g.best = score;
                }
            }
            _ => searches.push(GridSearch {
                provenance: score.provenance,
                candidates: vec![(score.multiplier, score.loss)],
                best: score,
            }),
        }
    }
    searches.sort_by(|a, b| a.best.loss.total_cmp(&b.best.loss).then(a.provenance.cmp(&b.provenance)));
    Ok(searches)
}
