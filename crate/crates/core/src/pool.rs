//! Diverse pool of near-optimal sparse solutions obtained by swapping one
//! feature of the base solution at a time.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::binarize::BinarizedDataset;
use crate::error::Result;
use crate::solver::beam::rank_additions;
use crate::solver::descent::DescentState;
use crate::solver::{check_feasible, logistic_loss, ConstraintSet, ContinuousSolution, DescentOptions};

pub const DEFAULT_EPSILON_U: f64 = 0.3;
pub const DEFAULT_SWAP_CANDIDATES: usize = 10;
pub const DEFAULT_POOL_SIZE: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoolOptions {
    /// Relative loss tolerance `epsilon_u`.
    pub epsilon_u: f64,
    /// Replacement features tried per removed feature (`T`).
    pub swap_candidates: usize,
    /// Maximum pool size (`M`).
    pub max_size: usize,
    /// Swap passes; pass `k + 1` swaps from the solutions found in pass `k`.
    pub passes: usize,
    pub descent: DescentOptions,
}

impl Default for PoolOptions {
    fn default() -> Self {
        Self {
            epsilon_u: DEFAULT_EPSILON_U,
            swap_candidates: DEFAULT_SWAP_CANDIDATES,
            max_size: DEFAULT_POOL_SIZE,
            passes: 1,
            descent: DescentOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionPool {
    /// Sorted by loss, ties by support.
    pub entries: Vec<ContinuousSolution>,
    pub epsilon_u: f64,
    pub base_loss: f64,
}

impl SolutionPool {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Loss threshold every entry must meet.
    pub fn threshold(&self) -> f64 {
        self.base_loss * (1.0 + self.epsilon_u)
    }
}

pub fn generate_pool(
    base: &ContinuousSolution,
    data: &BinarizedDataset,
    constraints: &ConstraintSet,
    epsilon_u: f64,
    swap_candidates: usize,
    max_size: usize,
) -> Result<SolutionPool> {
    generate_pool_with(
        base,
        data,
        constraints,
        PoolOptions {
            epsilon_u,
            swap_candidates,
            max_size,
            ..PoolOptions::default()
        },
    )
}

pub fn generate_pool_with(
    base: &ContinuousSolution,
    data: &BinarizedDataset,
    constraints: &ConstraintSet,
    opts: PoolOptions,
) -> Result<SolutionPool> {
    check_feasible(constraints, &base.w, base.w0, false)?;
    let mut base = base.clone();
    base.loss = logistic_loss(&base.w, base.w0, data, 1.0);
    let threshold = base.loss * (1.0 + opts.epsilon_u.max(0.0));

    // best solution per distinct support; the base is never displaced
    let base_support = base.support();
    let mut found: BTreeMap<Vec<usize>, ContinuousSolution> = BTreeMap::new();
    let mut frontier = vec![base.clone()];
    for _ in 0..opts.passes {
        let mut fresh: BTreeMap<Vec<usize>, ContinuousSolution> = BTreeMap::new();
        for source in &frontier {
            for cand in swaps(source, data, constraints, &opts) {
                if cand.loss > threshold || check_feasible(constraints, &cand.w, cand.w0, false).is_err() {
                    continue;
                }
                let support = cand.support();
                if support == base_support {
                    continue;
                }
                let better = |old: &ContinuousSolution| cand.loss < old.loss;
                if found.get(&support).is_none_or(better) && fresh.get(&support).is_none_or(better) {
                    fresh.insert(support, cand);
                }
            }
        }
        if fresh.is_empty() {
            break;
        }
        frontier = fresh.values().cloned().collect();
        found.extend(fresh);
    }

    let mut others: Vec<(Vec<usize>, ContinuousSolution)> = found.into_iter().collect();
    others.sort_by(|a, b| a.1.loss.total_cmp(&b.1.loss).then_with(|| a.0.cmp(&b.0)));
    others.truncate(opts.max_size.saturating_sub(1));
    let mut entries: Vec<(Vec<usize>, ContinuousSolution)> = others;
    entries.push((base_support, base.clone()));
    entries.sort_by(|a, b| a.1.loss.total_cmp(&b.1.loss).then_with(|| a.0.cmp(&b.0)));
    Ok(SolutionPool {
        entries: entries.into_iter().map(|(_, s)| s).collect(),
        epsilon_u: opts.epsilon_u,
        base_loss: base.loss,
    })
}

/// Every single-feature swap of `source`: for each support feature, zero it,
/// rank outside features by gradient magnitude, and fine-tune the top
/// `swap_candidates` replacements on the swapped support.
fn swaps(
    source: &ContinuousSolution,
    data: &BinarizedDataset,
    constraints: &ConstraintSet,
    opts: &PoolOptions,
) -> Vec<ContinuousSolution> {
    let support = source.support();
    let mut tasks = Vec::new();
    for &removed in &support {
        let mut state = DescentState::from_solution(data, source);
        state.set(data, removed, 0.0);
        let remaining: Vec<usize> = support.iter().copied().filter(|&j| j != removed).collect();
        let added = rank_additions(
            data,
            constraints,
            &remaining,
            &[removed],
            &state.margins,
            opts.swap_candidates,
        );
        let state = std::sync::Arc::new(state);
        for j in added {
            let mut active = remaining.clone();
            let pos = active.binary_search(&j).unwrap_err();
            active.insert(pos, j);
            tasks.push((state.clone(), active));
        }
    }
    tasks
        .into_par_iter()
        .map(|(state, active)| {
            let mut state = (*state).clone();
            state.run(data, &active, constraints, opts.descent);
            state.into_solution(data)
        })
        .collect()
}
