use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_BOX: (f64, f64) = (-5.0, 5.0);
pub const DEFAULT_INTERCEPT_BOX: (f64, f64) = (-100.0, 100.0);

/// Sign restriction on every coefficient of a group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Monotone {
    #[default]
    Free,
    /// Coefficients `>= 0`: the component function is nonincreasing in the raw value.
    Nonneg,
    /// Coefficients `<= 0`: the component function is nondecreasing in the raw value.
    Nonpos,
}

/// Sparsity, group-sparsity, box and monotonicity constraints.
///
/// Boxes stored here are the effective ones: monotone groups already have their
/// boxes intersected with the allowed half-line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSet {
    lambda: usize,
    gamma: usize,
    lower: Vec<f64>,
    upper: Vec<f64>,
    intercept: (f64, f64),
    group_of: Vec<usize>,
    monotone: Vec<Monotone>,
}

#[derive(Debug, Clone)]
pub struct ConstraintBuilder {
    lambda: usize,
    gamma: usize,
    lower: Vec<f64>,
    upper: Vec<f64>,
    intercept: (f64, f64),
    group_of: Vec<usize>,
    monotone: Vec<Monotone>,
}

impl ConstraintBuilder {
    pub fn lambda(mut self, lambda: usize) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn gamma(mut self, gamma: usize) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn default_box(mut self, lo: f64, hi: f64) -> Self {
        self.lower.iter_mut().for_each(|a| *a = lo);
        self.upper.iter_mut().for_each(|b| *b = hi);
        self
    }

    /// Box for every split of group `g`.
    pub fn group_box(mut self, g: usize, lo: f64, hi: f64) -> Self {
        for j in 0..self.group_of.len() {
            if self.group_of[j] == g {
                self.lower[j] = lo;
                self.upper[j] = hi;
            }
        }
        self
    }

    pub fn coordinate_box(mut self, j: usize, lo: f64, hi: f64) -> Self {
        self.lower[j] = lo;
        self.upper[j] = hi;
        self
    }

    pub fn intercept_box(mut self, lo: f64, hi: f64) -> Self {
        self.intercept = (lo, hi);
        self
    }

    pub fn monotone(mut self, g: usize, dir: Monotone) -> Self {
        if g >= self.monotone.len() {
            self.monotone.resize(g + 1, Monotone::Free);
        }
        self.monotone[g] = dir;
        self
    }

    pub fn build(self) -> Result<ConstraintSet> {
        let p = self.group_of.len();
        let n_groups = self.monotone.len();
        if self.lambda > p {
            return Err(Error::Config(format!(
                "lambda = {} exceeds the number of binary features ({p})",
                self.lambda
            )));
        }
        if self.gamma > n_groups {
            return Err(Error::Config(format!(
                "gamma = {} exceeds the number of variables ({n_groups})",
                self.gamma
            )));
        }
        let mut lower = self.lower;
        let mut upper = self.upper;
        for j in 0..p {
            let (a, b) = (lower[j], upper[j]);
            if !(a.is_finite() && b.is_finite()) || a > b {
                return Err(Error::Config(format!("coefficient {j}: invalid box [{a}, {b}]")));
            }
            match self.monotone[self.group_of[j]] {
                Monotone::Free => {}
                Monotone::Nonneg => {
                    if b < 0.0 {
                        return Err(Error::Config(format!(
                            "coefficient {j}: nonneg monotonicity needs an upper bound >= 0, got {b}"
                        )));
                    }
                    lower[j] = a.max(0.0);
                }
                Monotone::Nonpos => {
                    if a > 0.0 {
                        return Err(Error::Config(format!(
                            "coefficient {j}: nonpos monotonicity needs a lower bound <= 0, got {a}"
                        )));
                    }
                    upper[j] = b.min(0.0);
                }
            }
            if lower[j].ceil() > upper[j].floor() {
                return Err(Error::Config(format!(
                    "coefficient {j}: box [{}, {}] contains no integer",
                    lower[j], upper[j]
                )));
            }
        }
        let (a0, b0) = self.intercept;
        if !(a0.is_finite() && b0.is_finite()) || a0 > b0 || a0.ceil() > b0.floor() {
            return Err(Error::Config(format!(
                "intercept box [{a0}, {b0}] contains no integer"
            )));
        }
        Ok(ConstraintSet {
            lambda: self.lambda,
            gamma: self.gamma,
            lower,
            upper,
            intercept: self.intercept,
            group_of: self.group_of,
            monotone: self.monotone,
        })
    }
}

impl ConstraintSet {
    /// Starts a builder with the default box `[-5, 5]`, intercept box
    /// `[-100, 100]`, `lambda = p` and `gamma = n_groups`.
    pub fn builder(group_of: &[usize], n_groups: usize) -> ConstraintBuilder {
        let p = group_of.len();
        ConstraintBuilder {
            lambda: p,
            gamma: n_groups,
            lower: vec![DEFAULT_BOX.0; p],
            upper: vec![DEFAULT_BOX.1; p],
            intercept: DEFAULT_INTERCEPT_BOX,
            group_of: group_of.to_vec(),
            monotone: vec![Monotone::Free; n_groups],
        }
    }

    pub fn lambda(&self) -> usize {
        self.lambda
    }

    pub fn gamma(&self) -> usize {
        self.gamma
    }

    pub fn p(&self) -> usize {
        self.group_of.len()
    }

    pub fn lower(&self, j: usize) -> f64 {
        self.lower[j]
    }

    pub fn upper(&self, j: usize) -> f64 {
        self.upper[j]
    }

    pub fn intercept_box(&self) -> (f64, f64) {
        self.intercept
    }

    pub fn group_of(&self) -> &[usize] {
        &self.group_of
    }

    pub fn n_groups(&self) -> usize {
        self.monotone.len()
    }

    pub fn monotone(&self, g: usize) -> Monotone {
        self.monotone[g]
    }

    /// Largest absolute box bound over all coefficients.
    pub fn box_sup_norm(&self) -> f64 {
        self.lower
            .iter()
            .chain(&self.upper)
            .fold(0.0f64, |acc, v| acc.max(v.abs()))
    }

    /// Integer range `[ceil(a_j), floor(b_j)]` of coefficient `j`.
    pub fn integer_box(&self, j: usize) -> (f64, f64) {
        (self.lower[j].ceil(), self.upper[j].floor())
    }

    pub fn integer_intercept_box(&self) -> (f64, f64) {
        (self.intercept.0.ceil(), self.intercept.1.floor())
    }

    /// Whether coefficient `j` may take a nonzero value at all.
    pub fn admits_nonzero(&self, j: usize) -> bool {
        self.lower[j] < 0.0 || self.upper[j] > 0.0
    }

    /// Number of distinct groups touched by `support`.
    pub fn groups_used(&self, support: &[usize]) -> usize {
        let mut gs: Vec<usize> = support.iter().map(|&j| self.group_of[j]).collect();
        gs.sort_unstable();
        gs.dedup();
        gs.len()
    }

    /// Checks that an index set respects the sparsity and group limits.
    pub fn check_support(&self, support: &[usize]) -> Result<()> {
        if let Some(&j) = support.iter().find(|&&j| j >= self.p()) {
            return Err(Error::violation("support", format!("index {j} out of range")));
        }
        if support.len() > self.lambda {
            return Err(Error::violation(
                "sparsity",
                format!("{} coefficients exceed lambda = {}", support.len(), self.lambda),
            ));
        }
        let used = self.groups_used(support);
        if used > self.gamma {
            return Err(Error::violation(
                "group sparsity",
                format!("{used} groups exceed gamma = {}", self.gamma),
            ));
        }
        Ok(())
    }
}

/// Independent post-hoc feasibility check of a solution against every
/// constraint: sparsity, group count, boxes, monotone signs, and (optionally)
/// integrality. Works from the coefficient values alone (support is the set of
/// nonzeros) and shares no code with the solvers.
pub fn check_feasible(
    constraints: &ConstraintSet,
    w: &[f64],
    w0: f64,
    integral: bool,
) -> Result<()> {
    if w.len() != constraints.p() {
        return Err(Error::violation("dimension", format!("{} coefficients, expected {}", w.len(), constraints.p())));
    }
    let nonzero: Vec<usize> = (0..w.len()).filter(|&j| w[j] != 0.0).collect();
    if nonzero.len() > constraints.lambda {
        return Err(Error::violation(
            "sparsity",
            format!("{} nonzeros > lambda = {}", nonzero.len(), constraints.lambda),
        ));
    }
    let mut groups = std::collections::BTreeSet::new();
    for &j in &nonzero {
        groups.insert(constraints.group_of[j]);
    }
    if groups.len() > constraints.gamma {
        return Err(Error::violation(
            "group sparsity",
            format!("{} groups > gamma = {}", groups.len(), constraints.gamma),
        ));
    }
    for (j, &v) in w.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::violation("box", format!("w[{j}] is not finite")));
        }
        if v < constraints.lower[j] || v > constraints.upper[j] {
            return Err(Error::violation(
                "box",
                format!("w[{j}] = {v} outside [{}, {}]", constraints.lower[j], constraints.upper[j]),
            ));
        }
        match constraints.monotone[constraints.group_of[j]] {
            Monotone::Nonneg if v < 0.0 => {
                return Err(Error::violation("monotone", format!("w[{j}] = {v} < 0 in a nonneg group")))
            }
            Monotone::Nonpos if v > 0.0 => {
                return Err(Error::violation("monotone", format!("w[{j}] = {v} > 0 in a nonpos group")))
            }
            _ => {}
        }
        if integral && v.fract() != 0.0 {
            return Err(Error::violation("integrality", format!("w[{j}] = {v} is not an integer")));
        }
    }
    let (a0, b0) = constraints.intercept;
    if !w0.is_finite() || w0 < a0 || w0 > b0 {
        return Err(Error::violation("intercept box", format!("w0 = {w0} outside [{a0}, {b0}]")));
    }
    if integral && w0.fract() != 0.0 {
        return Err(Error::violation("integrality", format!("w0 = {w0} is not an integer")));
    }
    Ok(())
}
