use std::collections::BTreeSet;

use rayon::prelude::*;

use super::constraints::ConstraintSet;
use super::descent::{descend_single, ContinuousSolution, DescentOptions, DescentState};
use super::loss::{column_sum, margin_residuals};
use crate::binarize::BinarizedDataset;
use crate::error::{Error, Result};

pub const DEFAULT_BEAM_WIDTH: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeamOptions {
    pub beam_width: usize,
    pub descent: DescentOptions,
}

impl Default for BeamOptions {
    fn default() -> Self {
        Self {
            beam_width: DEFAULT_BEAM_WIDTH,
            descent: DescentOptions::default(),
        }
    }
}

#[derive(Debug, Clone)]
struct Node {
    /// Index set the coefficients were optimized over (may contain zeros).
    active: Vec<usize>,
    state: DescentState,
}

/// Sparse logistic regression under the full constraint set via beam search
/// over supports with coordinate-descent fine-tuning.
pub fn fit_continuous(
    data: &BinarizedDataset,
    constraints: &ConstraintSet,
    beam_width: usize,
) -> Result<ContinuousSolution> {
    fit_continuous_with(
        data,
        constraints,
        BeamOptions {
            beam_width,
            ..BeamOptions::default()
        },
    )
}

pub fn fit_continuous_with(
    data: &BinarizedDataset,
    constraints: &ConstraintSet,
    opts: BeamOptions,
) -> Result<ContinuousSolution> {
    if opts.beam_width == 0 {
        return Err(Error::Config("beam width must be at least 1".into()));
    }
    if constraints.p() != data.p() {
        return Err(Error::Config("constraints and data disagree on p".into()));
    }
    let mut root = DescentState::new(data, vec![0.0; data.p()], 0.0);
    root.run(data, &[], constraints, opts.descent);
    let mut best = root.clone();
    let mut beam = vec![Node {
        active: Vec::new(),
        state: root,
    }];
    let shortlist = 2 * opts.beam_width;

    for _size in 0..constraints.lambda() {
        // expand every parent by its most promising admissible features
        let mut seen = BTreeSet::new();
        let mut children: Vec<(usize, Vec<usize>, usize)> = Vec::new();
        for (parent_idx, parent) in beam.iter().enumerate() {
            for j in rank_additions(data, constraints, &parent.active, &[], &parent.state.margins, shortlist) {
                let mut active = parent.active.clone();
                let pos = active.binary_search(&j).unwrap_err();
                active.insert(pos, j);
                if seen.insert(active.clone()) {
                    children.push((parent_idx, active, j));
                }
            }
        }
        if children.is_empty() {
            break;
        }
        // screen each child by optimizing only its new coordinate, then fully
        // fine-tune the best `beam_width` of them
        let mut screened: Vec<(f64, usize, Vec<usize>)> = children
            .into_par_iter()
            .map(|(parent_idx, active, j)| {
                let parent = &beam[parent_idx].state;
                let gain = descend_single(data, constraints, parent, j);
                (parent.loss - gain, parent_idx, active)
            })
            .collect();
        screened.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.2.cmp(&b.2)));
        screened.truncate(opts.beam_width);
        let tuned: Vec<Node> = screened
            .into_par_iter()
            .map(|(_, parent_idx, active)| {
                let mut state = beam[parent_idx].state.clone();
                state.run(data, &active, constraints, opts.descent);
                Node { active, state }
            })
            .collect();
        let mut improving: Vec<Node> = tuned
            .into_iter()
            .filter(|child| {
                beam.iter().any(|p| {
                    is_parent(&p.active, &child.active) && child.state.loss < p.state.loss - opts.descent.tol
                })
            })
            .collect();
        if improving.is_empty() {
            break;
        }
        improving.sort_by(|a, b| a.state.loss.total_cmp(&b.state.loss).then_with(|| a.active.cmp(&b.active)));
        improving.truncate(opts.beam_width);
        if improving[0].state.loss < best.loss {
            best = improving[0].state.clone();
        }
        beam = improving;
    }
    Ok(best.into_solution(data))
}

fn is_parent(parent: &[usize], child: &[usize]) -> bool {
    child.len() == parent.len() + 1 && parent.iter().all(|j| child.binary_search(j).is_ok())
}

/// Admissible features outside `active`, ranked by the magnitude of the
/// loss gradient in a feasible direction (ties by index), at most `limit`.
///
/// A feature is admissible when its box allows a nonzero value and adding it
/// keeps the group count within `gamma`. Features whose only descent direction
/// leaves the box score zero and are skipped.
pub(crate) fn rank_additions(
    data: &BinarizedDataset,
    constraints: &ConstraintSet,
    active: &[usize],
    excluded: &[usize],
    margins: &[f64],
    limit: usize,
) -> Vec<usize> {
    let residuals = margin_residuals(margins, data.labels());
    let groups: BTreeSet<usize> = active.iter().map(|&j| constraints.group_of()[j]).collect();
    let group_room = groups.len() < constraints.gamma();
    let mut scored: Vec<(f64, usize)> = (0..data.p())
        .filter(|j| active.binary_search(j).is_err() && !excluded.contains(j))
        .filter(|&j| constraints.admits_nonzero(j))
        .filter(|&j| group_room || groups.contains(&constraints.group_of()[j]))
        .filter_map(|j| {
            let g = column_sum(data.column(j), &residuals);
            let feasible = (g < 0.0 && constraints.upper(j) > 0.0) || (g > 0.0 && constraints.lower(j) < 0.0);
            feasible.then_some((g.abs(), j))
        })
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    scored.truncate(limit);
    scored.into_iter().map(|(_, j)| j).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::constraints::check_feasible;

    #[test]
    fn single_predictive_column_is_selected() {
        let rows: Vec<Vec<u8>> = (0..30).map(|i| vec![(i % 3 == 0) as u8]).collect();
        let labels: Vec<bool> = (0..30).map(|i| i % 3 == 0 || i == 1).collect();
        let d = BinarizedDataset::from_dense(&rows, &labels, vec![0]).unwrap();
        let c = ConstraintSet::builder(d.group_of(), 1).lambda(1).gamma(1).build().unwrap();
        let s = fit_continuous(&d, &c, 3).unwrap();
        assert_eq!(s.support(), vec![0]);
    }

    #[test]
    fn lambda_zero_is_intercept_only() {
        let d = BinarizedDataset::from_dense(&[vec![1], vec![0], vec![0]], &[true, false, true], vec![0]).unwrap();
        let c = ConstraintSet::builder(d.group_of(), 1).lambda(0).build().unwrap();
        let s = fit_continuous(&d, &c, 2).unwrap();
        assert!(s.support().is_empty());
        assert!((s.w0 - 2f64.ln()).abs() < 1e-7);
    }

    #[test]
    fn gamma_one_confines_support_to_a_group() {
        // columns 0,1 in group 0 and 2,3 in group 1; both groups predictive
        let n = 200;
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..n {
            let a = (i % 2) as u8;
            let b = ((i / 2) % 2) as u8;
            let c = ((i / 4) % 2) as u8;
            let e = ((i / 8) % 2) as u8;
            rows.push(vec![a, b, c, e]);
            labels.push((a + b + c + e) as usize + (i % 7 == 0) as usize >= 2);
        }
        let d = BinarizedDataset::from_dense(&rows, &labels, vec![0, 0, 1, 1]).unwrap();
        let c = ConstraintSet::builder(d.group_of(), 2).lambda(3).gamma(1).build().unwrap();
        let s = fit_continuous(&d, &c, 4).unwrap();
        let groups: BTreeSet<usize> = s.support().iter().map(|&j| d.group_of()[j]).collect();
        assert_eq!(groups.len(), 1);
        assert!(s.support().len() >= 2);
        check_feasible(&c, &s.w, s.w0, false).unwrap();
    }

    #[test]
    fn monotone_boxes_are_respected() {
        let rows: Vec<Vec<u8>> = (0..60).map(|i| vec![(i % 2) as u8, (i % 3 == 0) as u8]).collect();
        // column 0 is positively associated; force it nonpos
        let labels: Vec<bool> = (0..60).map(|i| i % 2 == 1 || i % 5 == 0).collect();
        let d = BinarizedDataset::from_dense(&rows, &labels, vec![0, 1]).unwrap();
        let c = ConstraintSet::builder(d.group_of(), 2)
            .monotone(0, crate::solver::constraints::Monotone::Nonpos)
            .build()
            .unwrap();
        let s = fit_continuous(&d, &c, 2).unwrap();
        assert!(s.w[0] <= 0.0);
        check_feasible(&c, &s.w, s.w0, false).unwrap();
    }
}
