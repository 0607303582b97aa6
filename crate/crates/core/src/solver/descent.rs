use serde::{Deserialize, Serialize};

use super::constraints::ConstraintSet;
use super::loss::{logistic_loss, loss_from_margins, softplus};
use crate::binarize::BinarizedDataset;
use crate::error::{Error, Result};

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 100;

/// Real-valued coefficients and intercept with their training loss (`m = 1`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuousSolution {
    pub w: Vec<f64>,
    pub w0: f64,
    pub loss: f64,
}

impl ContinuousSolution {
    /// All-zero model with its loss on `data`.
    pub fn zero(data: &BinarizedDataset) -> Self {
        let w = vec![0.0; data.p()];
        let loss = logistic_loss(&w, 0.0, data, 1.0);
        Self { w, w0: 0.0, loss }
    }

    /// Indices of nonzero coefficients, ascending.
    pub fn support(&self) -> Vec<usize> {
        (0..self.w.len()).filter(|&j| self.w[j] != 0.0).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DescentOptions {
    /// Stop once a full sweep improves the loss by less than this.
    pub tol: f64,
    /// Maximum number of sweeps.
    pub max_iter: usize,
}

impl Default for DescentOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DescentResult {
    pub solution: ContinuousSolution,
    /// Loss at the start and after every accepted sweep.
    pub history: Vec<f64>,
}

/// Box-projected cyclic coordinate descent over `support` and the intercept.
///
/// `init` must be feasible and vanish outside `support`.
pub fn coordinate_descent(
    data: &BinarizedDataset,
    support: &[usize],
    init: &ContinuousSolution,
    constraints: &ConstraintSet,
    opts: DescentOptions,
) -> Result<DescentResult> {
    let mut support = support.to_vec();
    support.sort_unstable();
    support.dedup();
    constraints.check_support(&support)?;
    if init.w.len() != data.p() || constraints.p() != data.p() {
        return Err(Error::violation("dimension", "coefficients, data and constraints disagree on p"));
    }
    for (j, &v) in init.w.iter().enumerate() {
        if v != 0.0 && support.binary_search(&j).is_err() {
            return Err(Error::violation(
                "support",
                format!("initial w[{j}] = {v} is nonzero outside the support"),
            ));
        }
        if v < constraints.lower(j) || v > constraints.upper(j) {
            return Err(Error::violation(
                "box",
                format!("initial w[{j}] = {v} outside [{}, {}]", constraints.lower(j), constraints.upper(j)),
            ));
        }
    }
    let (a0, b0) = constraints.intercept_box();
    if init.w0 < a0 || init.w0 > b0 {
        return Err(Error::violation(
            "intercept box",
            format!("initial w0 = {} outside [{a0}, {b0}]", init.w0),
        ));
    }
    let mut state = DescentState::new(data, init.w.clone(), init.w0);
    let history = state.run(data, &support, constraints, opts);
    Ok(DescentResult {
        solution: state.into_solution(data),
        history,
    })
}

/// Exponentials are cached for margins clamped to this magnitude; beyond it
/// the sigmoid is saturated to machine precision.
const EXP_CLAMP: f64 = 350.0;

/// Working state shared by the beam search and swap procedure: coefficients,
/// cached margins `w'x_i + w0` and their exponentials.
#[derive(Debug, Clone)]
pub(crate) struct DescentState {
    pub w: Vec<f64>,
    pub w0: f64,
    pub margins: Vec<f64>,
    pub loss: f64,
    exp_margins: Vec<f64>,
}

impl DescentState {
    pub fn new(data: &BinarizedDataset, w: Vec<f64>, w0: f64) -> Self {
        let margins = data.margins(&w, w0);
        let loss = loss_from_margins(&margins, data.labels(), 1.0);
        let exp_margins = exp_of(&margins);
        Self {
            w,
            w0,
            margins,
            loss,
            exp_margins,
        }
    }

    pub fn from_solution(data: &BinarizedDataset, s: &ContinuousSolution) -> Self {
        Self::new(data, s.w.clone(), s.w0)
    }

    /// Sets coefficient `j` to `value`, updating margins and loss.
    pub fn set(&mut self, data: &BinarizedDataset, j: usize, value: f64) {
        let delta = value - self.w[j];
        if delta != 0.0 {
            for &i in data.column(j) {
                let i = i as usize;
                self.margins[i] += delta;
                self.exp_margins[i] = self.margins[i].clamp(-EXP_CLAMP, EXP_CLAMP).exp();
            }
            self.w[j] = value;
            self.loss = loss_from_margins(&self.margins, data.labels(), 1.0);
        }
    }

    /// Final solution; its loss is recomputed from scratch so that it equals
    /// `logistic_loss(w, w0, data, 1)` bit for bit.
    pub fn into_solution(self, data: &BinarizedDataset) -> ContinuousSolution {
        let loss = logistic_loss(&self.w, self.w0, data, 1.0);
        ContinuousSolution {
            w: self.w,
            w0: self.w0,
            loss,
        }
    }

    fn shift(&mut self, rows: Rows<'_>, delta: f64) {
        let factor = delta.exp();
        match rows {
            Rows::Column(rows) => {
                for &i in rows {
                    self.margins[i as usize] += delta;
                    self.exp_margins[i as usize] *= factor;
                }
            }
            Rows::All(_) => {
                self.margins.iter_mut().for_each(|z| *z += delta);
                self.exp_margins.iter_mut().for_each(|e| *e *= factor);
            }
        }
    }

    /// Runs sweeps until the improvement drops below `tol`. Returns the loss
    /// history, which is nonincreasing: a sweep that would raise the loss (by
    /// rounding noise) is rolled back and ends the run.
    pub fn run(
        &mut self,
        data: &BinarizedDataset,
        support: &[usize],
        constraints: &ConstraintSet,
        opts: DescentOptions,
    ) -> Vec<f64> {
        let labels = data.labels();
        let mut history = vec![self.loss];
        let (a0, b0) = constraints.intercept_box();
        for _ in 0..opts.max_iter {
            let saved_w = self.w.clone();
            let saved_w0 = self.w0;
            let saved_margins = self.margins.clone();
            for &j in support {
                let rows = Rows::Column(data.column(j));
                let (lo, hi) = (constraints.lower(j), constraints.upper(j));
                let delta = minimize_1d(&rows, &self.exp_margins, labels, lo - self.w[j], hi - self.w[j]);
                let next = (self.w[j] + delta).clamp(lo, hi);
                let delta = next - self.w[j];
                if delta != 0.0 {
                    self.w[j] = next;
                    self.shift(rows, delta);
                }
            }
            let rows = Rows::All(data.n());
            let delta = minimize_1d(&rows, &self.exp_margins, labels, a0 - self.w0, b0 - self.w0);
            let next = (self.w0 + delta).clamp(a0, b0);
            let delta = next - self.w0;
            if delta != 0.0 {
                self.w0 = next;
                self.shift(rows, delta);
            }
            // refresh the multiplicatively updated cache from exact margins
            self.exp_margins = exp_of(&self.margins);
            let loss = loss_from_margins(&self.margins, labels, 1.0);
            if loss > self.loss {
                self.w = saved_w;
                self.w0 = saved_w0;
                self.margins = saved_margins;
                self.exp_margins = exp_of(&self.margins);
                break;
            }
            let improvement = self.loss - loss;
            self.loss = loss;
            history.push(loss);
            if improvement < opts.tol {
                break;
            }
        }
        history
    }
}

fn exp_of(margins: &[f64]) -> Vec<f64> {
    margins
        .iter()
        .map(|z| z.clamp(-EXP_CLAMP, EXP_CLAMP).exp())
        .collect()
}

/// Loss decrease obtained by optimizing coefficient `j` alone from zero,
/// with every other coefficient held fixed.
pub(crate) fn descend_single(
    data: &BinarizedDataset,
    constraints: &ConstraintSet,
    state: &DescentState,
    j: usize,
) -> f64 {
    let rows = Rows::Column(data.column(j));
    let labels = data.labels();
    let delta = minimize_1d(&rows, &state.exp_margins, labels, constraints.lower(j), constraints.upper(j));
    if delta == 0.0 {
        return 0.0;
    }
    let value = |d: f64| -> f64 {
        data.column(j)
            .iter()
            .map(|&i| softplus(-labels[i as usize] * (state.margins[i as usize] + d)))
            .sum()
    };
    (value(0.0) - value(delta)).max(0.0)
}

#[derive(Clone, Copy)]
enum Rows<'a> {
    Column(&'a [u32]),
    All(usize),
}

impl Rows<'_> {
    /// First and second derivative of `delta -> sum_i softplus(-y_i (z_i + delta))`,
    /// from cached `exp(z_i)`.
    fn derivatives(&self, exp_margins: &[f64], labels: &[f64], delta: f64) -> (f64, f64) {
        let factor = delta.exp();
        let term = |i: usize| {
            // q = sigma(-(z + delta)); d/d delta = (1 - q) - [y = +1]
            let q = 1.0 / (1.0 + exp_margins[i] * factor);
            let pos = if labels[i] > 0.0 { 1.0 } else { 0.0 };
            (1.0 - q - pos, q * (1.0 - q))
        };
        let mut d1 = 0.0;
        let mut d2 = 0.0;
        match self {
            Rows::Column(rows) => {
                for &i in rows.iter() {
                    let (a, b) = term(i as usize);
                    d1 += a;
                    d2 += b;
                }
            }
            Rows::All(n) => {
                for i in 0..*n {
                    let (a, b) = term(i);
                    d1 += a;
                    d2 += b;
                }
            }
        }
        (d1, d2)
    }
}

/// Predicted decrease below which a 1-D subproblem counts as solved.
const NEWTON_DECREASE_TOL: f64 = 1e-13;

/// Minimizes the convex scalar loss over `delta in [lo, hi]` (with
/// `lo <= 0 <= hi`) by Newton steps safeguarded with a sign bracket of the
/// derivative; falls back to bisection when a step leaves the bracket.
fn minimize_1d(rows: &Rows<'_>, exp_margins: &[f64], labels: &[f64], lo: f64, hi: f64) -> f64 {
    let lo = lo.min(0.0);
    let hi = hi.max(0.0);
    let (g0, h0) = rows.derivatives(exp_margins, labels, 0.0);
    if g0 == 0.0 || (g0 < 0.0 && hi == 0.0) || (g0 > 0.0 && lo == 0.0) {
        return 0.0;
    }
    if h0 > 0.0 && g0 * g0 / (2.0 * h0) < NEWTON_DECREASE_TOL {
        return 0.0;
    }
    let upward = g0 < 0.0;
    let far = if upward { hi } else { lo };
    // derivative < 0 at `left`, > 0 at `right`
    let (mut left, mut right) = if upward { (0.0, hi) } else { (lo, 0.0) };
    let mut far_checked = false;
    let (mut x, mut g, mut h) = (0.0, g0, h0);
    for _ in 0..100 {
        let newton = if h > 0.0 { x - g / h } else { f64::NAN };
        let next = if newton.is_finite() && newton > left && newton < right {
            newton
        } else {
            if !far_checked {
                far_checked = true;
                let (g_far, _) = rows.derivatives(exp_margins, labels, far);
                if (upward && g_far <= 0.0) || (!upward && g_far >= 0.0) {
                    return far;
                }
            }
            0.5 * (left + right)
        };
        let step = (next - x).abs();
        x = next;
        (g, h) = rows.derivatives(exp_margins, labels, x);
        if g < 0.0 {
            left = x;
        } else if g > 0.0 {
            right = x;
        } else {
            break;
        }
        if step <= 1e-12 * (1.0 + x.abs())
            || right - left <= 1e-12 * (1.0 + x.abs())
            || (h > 0.0 && g * g / (2.0 * h) < NEWTON_DECREASE_TOL)
        {
            break;
        }
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn constraints(data: &BinarizedDataset) -> ConstraintSet {
        ConstraintSet::builder(data.group_of(), data.n_groups()).build().unwrap()
    }

    #[test]
    fn empty_support_balanced_labels_gives_zero_intercept() {
        let d = BinarizedDataset::from_dense(
            &[vec![1], vec![0], vec![1], vec![0], vec![1], vec![1]],
            &[true, false, false, true, true, false],
            vec![0],
        )
        .unwrap();
        let init = ContinuousSolution { w: vec![0.0], w0: 2.0, loss: 0.0 };
        let r = coordinate_descent(&d, &[], &init, &constraints(&d), DescentOptions::default()).unwrap();
        assert!(r.solution.w0.abs() < 1e-9);
        assert_eq!(r.solution.w, vec![0.0]);
    }

    #[test]
    fn intercept_only_matches_log_odds() {
        // 3 positives out of 4 -> w0 = ln 3
        let d = BinarizedDataset::from_dense(
            &[vec![0], vec![0], vec![0], vec![0]],
            &[true, true, true, false],
            vec![0],
        )
        .unwrap();
        let r = coordinate_descent(&d, &[], &ContinuousSolution::zero(&d), &constraints(&d), DescentOptions::default())
            .unwrap();
        assert_relative_eq!(r.solution.w0, 3f64.ln(), epsilon = 1e-8);
    }

    #[test]
    fn separable_column_hits_the_box() {
        let rows: Vec<Vec<u8>> = (0..20).map(|i| vec![(i % 2) as u8]).collect();
        let labels: Vec<bool> = (0..20).map(|i| i % 2 == 1).collect();
        let d = BinarizedDataset::from_dense(&rows, &labels, vec![0]).unwrap();
        let c = constraints(&d);
        let r = coordinate_descent(&d, &[0], &ContinuousSolution::zero(&d), &c, DescentOptions { tol: 1e-10, max_iter: 1000 })
            .unwrap();
        assert_eq!(r.solution.w[0], 5.0);
        // oracle: golden-section minimization of the intercept with w fixed at the bound
        let f = |b: f64| logistic_loss(&[5.0], b, &d, 1.0);
        let (mut a, mut b) = (-100.0f64, 100.0f64);
        let phi = (5f64.sqrt() - 1.0) / 2.0;
        for _ in 0..200 {
            let c1 = b - phi * (b - a);
            let c2 = a + phi * (b - a);
            if f(c1) < f(c2) { b = c2 } else { a = c1 }
        }
        assert!(r.solution.loss <= f(0.5 * (a + b)) + 1e-9);
    }

    #[test]
    fn history_is_monotone_and_loss_matches() {
        let rows: Vec<Vec<u8>> = (0..40u32).map(|i| vec![(i % 2) as u8, (i % 3 == 0) as u8, (i % 5 < 2) as u8]).collect();
        let labels: Vec<bool> = (0..40u32).map(|i| (i * 7 + 3) % 5 < 2 || i % 2 == 0 && i % 3 != 1).collect();
        let d = BinarizedDataset::from_dense(&rows, &labels, vec![0, 1, 2]).unwrap();
        let r = coordinate_descent(&d, &[0, 1, 2], &ContinuousSolution::zero(&d), &constraints(&d), DescentOptions::default())
            .unwrap();
        assert!(r.history.windows(2).all(|w| w[1] <= w[0]));
        assert_relative_eq!(r.solution.loss, logistic_loss(&r.solution.w, r.solution.w0, &d, 1.0), epsilon = 1e-9);
    }

    #[test]
    fn infeasible_init_is_rejected_with_reason() {
        let d = BinarizedDataset::from_dense(&[vec![1, 0], vec![0, 1]], &[true, false], vec![0, 1]).unwrap();
        let c = ConstraintSet::builder(d.group_of(), 2).gamma(1).build().unwrap();
        let bad_box = ContinuousSolution { w: vec![9.0, 0.0], w0: 0.0, loss: 0.0 };
        let outside = ContinuousSolution { w: vec![0.0, 1.0], w0: 0.0, loss: 0.0 };
        let opts = DescentOptions::default();
        let constraint_of = |r: Result<DescentResult>| match r {
            Err(Error::ConstraintViolation { constraint, .. }) => constraint,
            _ => "none",
        };
        assert_eq!(constraint_of(coordinate_descent(&d, &[0], &bad_box, &c, opts)), "box");
        assert_eq!(constraint_of(coordinate_descent(&d, &[0], &outside, &c, opts)), "support");
        assert_eq!(constraint_of(coordinate_descent(&d, &[0, 1], &ContinuousSolution::zero(&d), &c, opts)), "group sparsity");
    }
}
