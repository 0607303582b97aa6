//! Training configuration: a TOML file, overridden field by field by flags.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::binarize::DEFAULT_BINS_PER_VARIABLE;
use crate::error::{Error, Result};
use crate::pool::{DEFAULT_EPSILON_U, DEFAULT_POOL_SIZE, DEFAULT_SWAP_CANDIDATES};
use crate::rounding::DEFAULT_MULTIPLIERS;
use crate::solver::constraints::{DEFAULT_BOX, DEFAULT_INTERCEPT_BOX};
use crate::solver::{Monotone, DEFAULT_BEAM_WIDTH};

/// Lambda used when neither the file nor a flag sets it (capped at `p`).
pub const DEFAULT_LAMBDA: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Maximum nonzero coefficients; defaults to `min(10, p)`.
    pub lambda: Option<usize>,
    /// Maximum variables used; defaults to the number of variables.
    pub gamma: Option<usize>,
    pub bins_per_variable: usize,
    pub beam_width: usize,
    pub epsilon_u: f64,
    /// Replacement candidates per removed feature in the pool swap step.
    pub swap_candidates: usize,
    pub pool_size: usize,
    pub pool_passes: usize,
    /// Number of multipliers tried when rounding.
    pub multipliers: usize,
    pub coefficient_box: (f64, f64),
    pub intercept_box: (f64, f64),
    /// Box overrides for all splits of a variable.
    pub variable_box: BTreeMap<String, (f64, f64)>,
    pub monotone: BTreeMap<String, Monotone>,
    /// `k >= 2` holds out one of `k` seeded folds as validation data; 0 or 1
    /// trains on every row.
    pub cv_folds: usize,
    pub seed: Option<u64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            lambda: None,
            gamma: None,
            bins_per_variable: DEFAULT_BINS_PER_VARIABLE,
            beam_width: DEFAULT_BEAM_WIDTH,
            epsilon_u: DEFAULT_EPSILON_U,
            swap_candidates: DEFAULT_SWAP_CANDIDATES,
            pool_size: DEFAULT_POOL_SIZE,
            pool_passes: 1,
            multipliers: DEFAULT_MULTIPLIERS,
            coefficient_box: DEFAULT_BOX,
            intercept_box: DEFAULT_INTERCEPT_BOX,
            variable_box: BTreeMap::new(),
            monotone: BTreeMap::new(),
            cv_folds: 1,
            seed: None,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let (line, column) = e
                .span()
                .map(|s| line_column(text, s.start))
                .unwrap_or((0, 0));
            Error::Parse {
                line,
                column,
                message: e.message().to_string(),
            }
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn seed(&self) -> Result<u64> {
        self.seed
            .ok_or_else(|| Error::Config("a seed is required (config `seed` or --seed)".into()))
    }

    /// Range checks that need no data.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.lambda == Some(0) {
            return bad("lambda must be at least 1".into());
        }
        if self.gamma == Some(0) {
            return bad("gamma must be at least 1".into());
        }
        if !(self.epsilon_u >= 0.0 && self.epsilon_u.is_finite()) {
            return bad(format!("epsilon_u must be finite and >= 0, got {}", self.epsilon_u));
        }
        for (name, v) in [
            ("beam_width", self.beam_width),
            ("swap_candidates", self.swap_candidates),
            ("pool_size", self.pool_size),
            ("pool_passes", self.pool_passes),
            ("multipliers", self.multipliers),
        ] {
            if v == 0 {
                return bad(format!("{name} must be at least 1"));
            }
        }
        if self.bins_per_variable < 2 {
            return bad("bins_per_variable must be at least 2".into());
        }
        let boxes = [("coefficient_box", &self.coefficient_box), ("intercept_box", &self.intercept_box)];
        for (name, (a, b)) in boxes.into_iter().chain(self.variable_box.iter().map(|(k, v)| (k.as_str(), v))) {
            if !(a <= b) {
                return bad(format!("box for {name} has lower bound {a} above upper bound {b}"));
            }
        }
        self.seed()?;
        Ok(())
    }
}

fn line_column(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
    (line, column)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sections_and_defaults() {
        let c = RunConfig::from_toml(
            "lambda = 5\nseed = 3\ncoefficient_box = [-3, 3]\n[monotone]\nage = \"nonneg\"\n[variable_box]\nbmi = [0, 2]\n",
        )
        .unwrap();
        assert_eq!(c.lambda, Some(5));
        assert_eq!(c.coefficient_box, (-3.0, 3.0));
        assert_eq!(c.monotone["age"], Monotone::Nonneg);
        assert_eq!(c.variable_box["bmi"], (0.0, 2.0));
        assert_eq!(c.pool_size, DEFAULT_POOL_SIZE);
        c.validate().unwrap();
    }

    #[test]
    fn rejects_bad_values() {
        assert!(matches!(RunConfig::from_toml("lambda = 0\nseed = 1").unwrap().validate(), Err(Error::Config(_))));
        assert!(matches!(RunConfig::from_toml("lambda = 2").unwrap().validate(), Err(Error::Config(_))));
        match RunConfig::from_toml("seed = 1\nbogus = 2\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }
}
