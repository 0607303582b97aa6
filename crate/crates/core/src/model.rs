//! Deployable scorecards: prediction on raw records, plain-text rendering and
//! a versioned JSON document that embeds the binarization.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::binarize::{
    BinarizationMap, BinarizedDataset, RawTable, RawValue, SplitKind, SplitSpec, VariableInfo, VariableKind,
};
use crate::error::{Error, Result};
use crate::metrics::IsotonicMap;
use crate::rounding::IntegerRiskScore;
use crate::solver::{sigmoid, Monotone};

pub const DOCUMENT_VERSION: u32 = 1;

/// Constraints a card was trained under, keyed by variable name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSummary {
    pub lambda: usize,
    pub gamma: usize,
    pub coefficient_box: (f64, f64),
    pub intercept_box: (f64, f64),
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub variable_boxes: BTreeMap<String, (f64, f64)>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub monotone: BTreeMap<String, Monotone>,
}

impl ConstraintSummary {
    pub fn new(lambda: usize, gamma: usize) -> Self {
        Self {
            lambda,
            gamma,
            coefficient_box: (-5.0, 5.0),
            intercept_box: (-100.0, 100.0),
            variable_boxes: BTreeMap::new(),
            monotone: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CardMetadata {
    /// Card label, `GFR-<gamma>`.
    pub name: String,
    pub constraints: ConstraintSummary,
    /// Fingerprint of the training rows.
    pub training_fingerprint: String,
    /// Total scores tabulated in the footer: min, quartiles and max on the
    /// training data.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub score_table: Vec<i64>,
}

impl CardMetadata {
    pub fn new(constraints: ConstraintSummary, training_fingerprint: impl Into<String>) -> Self {
        Self {
            name: format!("GFR-{}", constraints.gamma),
            constraints,
            training_fingerprint: training_fingerprint.into(),
            score_table: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scorecard {
    pub score: IntegerRiskScore,
    pub map: BinarizationMap,
    /// One display name per raw variable.
    pub display_names: Vec<String>,
    pub calibration: Option<IsotonicMap>,
    pub metadata: CardMetadata,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SparsityReport {
    /// Raw variables with a nonzero point value.
    pub group_sparsity: usize,
    /// Nonzero coefficients plus the intercept and the multiplier.
    pub overall_sparsity: usize,
}

/// Bin condition on one raw variable.
#[derive(Debug, Clone, PartialEq)]
pub enum Condition {
    /// `lower < x <= upper`, either side open when `None`.
    Range { lower: Option<f64>, upper: Option<f64> },
    Categories(Vec<String>),
    Missing,
}

impl Condition {
    pub fn matches(&self, value: &RawValue) -> bool {
        match (self, value) {
            (Condition::Missing, RawValue::Missing) => true,
            (Condition::Range { lower, upper }, RawValue::Number(x)) => {
                lower.is_none_or(|l| *x > l) && upper.is_none_or(|u| *x <= u)
            }
            (Condition::Categories(tokens), RawValue::Category(c)) => tokens.contains(c),
            (Condition::Categories(tokens), RawValue::Number(x)) => tokens.contains(&format!("{x}")),
            _ => false,
        }
    }

    pub fn describe(&self, name: &str) -> String {
        match self {
            Condition::Range { lower: None, upper: None } => format!("{name} (any value)"),
            Condition::Range { lower: None, upper: Some(u) } => format!("{name} <= {u}"),
            Condition::Range { lower: Some(l), upper: None } => format!("{name} > {l}"),
            Condition::Range { lower: Some(l), upper: Some(u) } => format!("{l} < {name} <= {u}"),
            Condition::Categories(tokens) => format!("{name} in {{{}}}", tokens.join(", ")),
            Condition::Missing => format!("{name} missing"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bin {
    pub condition: Condition,
    pub points: i64,
}

/// The component function of one variable as disjoint bins.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentFunction {
    pub variable: usize,
    pub name: String,
    pub bins: Vec<Bin>,
    pub missing_points: i64,
}

impl ComponentFunction {
    /// Points for one raw value; unmatched values (unknown categories) score 0.
    pub fn points(&self, value: &RawValue) -> i64 {
        if *value == RawValue::Missing {
            return self.missing_points;
        }
        self.bins
            .iter()
            .find(|b| b.condition.matches(value))
            .map_or(0, |b| b.points)
    }
}

impl Scorecard {
    pub fn new(score: IntegerRiskScore, map: BinarizationMap, metadata: CardMetadata) -> Result<Self> {
        if score.w.len() != map.n_splits() {
            return Err(Error::Data(format!(
                "score has {} coefficients but the binarizer has {} splits",
                score.w.len(),
                map.n_splits()
            )));
        }
        if !(score.multiplier > 0.0 && score.multiplier.is_finite()) {
            return Err(Error::Data(format!("invalid multiplier {}", score.multiplier)));
        }
        let display_names = map.variables().iter().map(|v| v.name.clone()).collect();
        Ok(Self {
            score,
            map,
            display_names,
            calibration: None,
            metadata,
        })
    }

    /// Fills the footer score table from the totals on `data`.
    pub fn with_training_totals(mut self, data: &BinarizedDataset) -> Self {
        let mut totals = self.totals(data);
        totals.sort_unstable();
        self.metadata.score_table = if totals.is_empty() {
            Vec::new()
        } else {
            (0..=4).map(|k| totals[(k * (totals.len() - 1)) / 4]).collect()
        };
        self.metadata.score_table.dedup();
        self
    }

    pub fn with_calibration(mut self, calibration: Option<IsotonicMap>) -> Self {
        self.calibration = calibration;
        self
    }

    pub fn name(&self) -> &str {
        &self.metadata.name
    }

    /// Integer totals `w'x + w0` for every row of `data`.
    pub fn totals(&self, data: &BinarizedDataset) -> Vec<i64> {
        let mut t = vec![self.score.w0; data.n()];
        for (j, &wj) in self.score.w.iter().enumerate() {
            if wj != 0 {
                for &i in data.column(j) {
                    t[i as usize] += wj;
                }
            }
        }
        t
    }

    /// Risk for an integer total, before calibration.
    pub fn risk_of_total(&self, total: i64) -> f64 {
        sigmoid(total as f64 / self.score.multiplier)
    }

    fn finish(&self, total: i64) -> f64 {
        let p = self.risk_of_total(total);
        self.calibration.as_ref().map_or(p, |c| c.apply(p))
    }

    pub fn total_score(&self, names: &[String], record: &[RawValue]) -> Result<i64> {
        let active = self.map.encode_record(names, record)?;
        Ok(self.score.w0 + active.iter().map(|&j| self.score.w[j]).sum::<i64>())
    }

    /// Risk for one raw record laid out as `names`.
    pub fn predict_risk(&self, names: &[String], record: &[RawValue]) -> Result<f64> {
        if record.len() != names.len() {
            return Err(Error::Data(format!(
                "record has {} values for {} names",
                record.len(),
                names.len()
            )));
        }
        Ok(self.finish(self.total_score(names, record)?))
    }

    pub fn predict_table(&self, table: &RawTable) -> Result<Vec<f64>> {
        table
            .rows()
            .iter()
            .map(|r| self.predict_risk(table.names(), r))
            .collect()
    }

    /// Risks for an already binarized dataset.
    pub fn predict_binarized(&self, data: &BinarizedDataset) -> Vec<f64> {
        self.totals(data).into_iter().map(|t| self.finish(t)).collect()
    }

    pub fn sparsity(&self) -> SparsityReport {
        let support = self.score.support();
        let mut groups: Vec<usize> = support.iter().map(|&j| self.map.splits()[j].variable).collect();
        groups.sort_unstable();
        groups.dedup();
        SparsityReport {
            group_sparsity: groups.len(),
            overall_sparsity: support.len() + 2,
        }
    }

    /// Component functions of every variable with a nonzero point value.
    pub fn components(&self) -> Vec<ComponentFunction> {
        (0..self.map.variables().len())
            .filter(|&v| self.map.groups()[v].iter().any(|&j| self.score.w[j] != 0))
            .map(|v| self.component(v))
            .collect()
    }

    pub fn component(&self, v: usize) -> ComponentFunction {
        let info = &self.map.variables()[v];
        let members = &self.map.groups()[v];
        let w = &self.score.w;
        let mut missing_points = 0;
        let mut weighted: Vec<(&SplitKind, i64)> = Vec::new();
        for &j in members {
            match &self.map.splits()[j].kind {
                SplitKind::MissingIndicator => missing_points = w[j],
                kind => weighted.push((kind, w[j])),
            }
        }
        let bins = match info.kind {
            VariableKind::Continuous => {
                // breakpoints at thresholds with nonzero points; a value scores
                // the sum over thresholds at or above it
                let cuts: Vec<(f64, i64)> = weighted
                    .iter()
                    .filter_map(|(k, p)| match k {
                        SplitKind::Threshold(t) if *p != 0 => Some((*t, *p)),
                        _ => None,
                    })
                    .collect();
                let mut bins = Vec::with_capacity(cuts.len() + 1);
                let mut remaining: i64 = cuts.iter().map(|c| c.1).sum();
                let mut lower = None;
                for &(t, p) in &cuts {
                    bins.push(Bin {
                        condition: Condition::Range { lower, upper: Some(t) },
                        points: remaining,
                    });
                    remaining -= p;
                    lower = Some(t);
                }
                bins.push(Bin {
                    condition: Condition::Range { lower, upper: None },
                    points: remaining,
                });
                bins
            }
            VariableKind::Categorical => {
                let mut bins: Vec<Bin> = Vec::new();
                for (rank, token) in info.categories.iter().enumerate() {
                    let points: i64 = weighted
                        .iter()
                        .filter_map(|(k, p)| match k {
                            SplitKind::Category(c) => {
                                let r = info.categories.binary_search(c).ok()?;
                                (rank <= r).then_some(*p)
                            }
                            _ => None,
                        })
                        .sum();
                    match bins.last_mut() {
                        Some(Bin { condition: Condition::Categories(ts), points: last }) if *last == points => {
                            ts.push(token.clone())
                        }
                        _ => bins.push(Bin {
                            condition: Condition::Categories(vec![token.clone()]),
                            points,
                        }),
                    }
                }
                bins
            }
        };
        ComponentFunction {
            variable: v,
            name: self.display_names[v].clone(),
            bins,
            missing_points,
        }
    }

    /// Total score computed from the rendered bins: independent of the
    /// binarizer's split evaluation.
    pub fn total_from_bins(&self, names: &[String], record: &[RawValue]) -> Result<i64> {
        let mut total = self.score.w0;
        for comp in self.components() {
            let var = &self.map.variables()[comp.variable].name;
            let col = names.iter().position(|n| n == var).ok_or_else(|| Error::Schema {
                variable: var.clone(),
                reason: "is missing from the input".into(),
            })?;
            total += comp.points(&record[col]);
        }
        Ok(total)
    }

    fn footer_totals(&self) -> Vec<i64> {
        if !self.metadata.score_table.is_empty() {
            return self.metadata.score_table.clone();
        }
        let comps = self.components();
        let lo = self.score.w0 + comps.iter().map(|c| c.bins.iter().map(|b| b.points).chain([c.missing_points]).min().unwrap_or(0)).sum::<i64>();
        let hi = self.score.w0 + comps.iter().map(|c| c.bins.iter().map(|b| b.points).chain([c.missing_points]).max().unwrap_or(0)).sum::<i64>();
        let mut t: Vec<i64> = (0..=4).map(|k| lo + (hi - lo) * k / 4).collect();
        t.dedup();
        t
    }

    pub fn render(&self) -> String {
        let comps = self.components();
        let mut out = String::new();
        let sp = self.sparsity();
        let _ = writeln!(
            out,
            "{}: {} variables, {} nonzero points",
            self.name(),
            sp.group_sparsity,
            sp.overall_sparsity - 2
        );
        let rows: Vec<(String, String, i64)> = comps
            .iter()
            .flat_map(|c| {
                let mut rows: Vec<(String, String, i64)> = c
                    .bins
                    .iter()
                    .enumerate()
                    .map(|(k, b)| {
                        let label = if k == 0 { c.name.clone() } else { String::new() };
                        (label, b.condition.describe(&c.name), b.points)
                    })
                    .collect();
                if c.missing_points != 0 {
                    rows.push((String::new(), Condition::Missing.describe(&c.name), c.missing_points));
                }
                rows
            })
            .collect();
        let name_w = rows.iter().map(|r| r.0.len()).max().unwrap_or(0).max(8);
        let cond_w = rows.iter().map(|r| r.1.len()).max().unwrap_or(0).max(9);
        if !rows.is_empty() {
            let _ = writeln!(out, "{:<name_w$}  {:<cond_w$}  {:>6}", "Variable", "Condition", "Points");
            let _ = writeln!(out, "{}", "-".repeat(name_w + cond_w + 10));
            for (label, cond, points) in &rows {
                let _ = writeln!(out, "{label:<name_w$}  {cond:<cond_w$}  {points:>6}");
            }
            let _ = writeln!(out, "{}", "-".repeat(name_w + cond_w + 10));
        }
        let _ = writeln!(
            out,
            "Intercept: {}    Multiplier: {}",
            self.score.w0, self.score.multiplier
        );
        let totals = self.footer_totals();
        let risks: Vec<String> = totals
            .iter()
            .map(|&t| format!("{:.1}%", 100.0 * self.finish(t)))
            .collect();
        let width = risks.iter().map(String::len).chain(totals.iter().map(|t| t.to_string().len())).max().unwrap_or(1);
        let _ = writeln!(
            out,
            "Total score: {}",
            totals.iter().map(|t| format!("{t:>width$}")).collect::<Vec<_>>().join("  ")
        );
        let _ = writeln!(
            out,
            "Risk:        {}",
            risks.iter().map(|r| format!("{r:>width$}")).collect::<Vec<_>>().join("  ")
        );
        out
    }

    pub fn to_document(&self) -> CardDocument {
        let variables = self
            .map
            .variables()
            .iter()
            .enumerate()
            .map(|(v, info)| {
                let comp = self.component(v);
                VariableDocument {
                    name: info.name.clone(),
                    display_name: self.display_names[v].clone(),
                    kind: info.kind,
                    categories: info.categories.clone(),
                    bins: comp
                        .bins
                        .iter()
                        .map(|b| BinDocument {
                            condition: b.condition.describe(&info.name),
                            points: b.points,
                        })
                        .collect(),
                    missing_points: comp.missing_points,
                    splits: self.map.groups()[v]
                        .iter()
                        .map(|&j| SplitDocument {
                            split: self.map.splits()[j].kind.clone(),
                            points: self.score.w[j],
                        })
                        .collect(),
                }
            })
            .collect();
        CardDocument {
            version: DOCUMENT_VERSION,
            name: self.metadata.name.clone(),
            multiplier: self.score.multiplier,
            intercept: self.score.w0,
            loss: self.score.loss,
            provenance: self.score.provenance,
            sparsity: self.sparsity(),
            binarizer_fitted_on: self.map.fitted_on().to_string(),
            variables,
            calibration: self.calibration.clone(),
            metadata: self.metadata.clone(),
        }
    }

    pub fn from_document(doc: CardDocument) -> Result<Self> {
        if doc.version != DOCUMENT_VERSION {
            return Err(Error::Version {
                found: doc.version,
                expected: DOCUMENT_VERSION,
            });
        }
        let mut variables = Vec::new();
        let mut splits = Vec::new();
        let mut w = Vec::new();
        let mut display_names = Vec::new();
        for (v, var) in doc.variables.into_iter().enumerate() {
            for s in var.splits {
                splits.push(SplitSpec { variable: v, kind: s.split });
                w.push(s.points);
            }
            display_names.push(var.display_name);
            variables.push(VariableInfo {
                name: var.name,
                kind: var.kind,
                categories: var.categories,
            });
        }
        let map = BinarizationMap::from_parts(variables, splits, doc.binarizer_fitted_on)?;
        let score = IntegerRiskScore {
            w,
            w0: doc.intercept,
            multiplier: doc.multiplier,
            loss: doc.loss,
            provenance: doc.provenance,
        };
        let mut card = Scorecard::new(score, map, doc.metadata)?;
        card.display_names = display_names;
        card.calibration = doc.calibration;
        Ok(card)
    }

    pub fn serialize(&self) -> String {
        serde_json::to_string_pretty(&self.to_document()).expect("card documents always serialize")
    }

    pub fn deserialize(text: &str) -> Result<Self> {
        let raw: serde_json::Value = serde_json::from_str(text)?;
        check_version(&raw)?;
        Self::from_document(serde_json::from_str(text)?)
    }
}

/// Rejects documents whose `version` differs from the supported one.
pub(crate) fn check_version(raw: &serde_json::Value) -> Result<()> {
    match raw.get("version").and_then(serde_json::Value::as_u64) {
        Some(v) if v == DOCUMENT_VERSION as u64 => Ok(()),
        Some(v) => Err(Error::Version {
            found: v as u32,
            expected: DOCUMENT_VERSION,
        }),
        None => Err(Error::Parse {
            line: 1,
            column: 1,
            message: "missing numeric `version` field".into(),
        }),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CardDocument {
    pub version: u32,
    pub name: String,
    pub multiplier: f64,
    pub intercept: i64,
    pub loss: f64,
    pub provenance: usize,
    pub sparsity: SparsityReport,
    /// Fingerprint of the data the binarization was fitted on.
    pub binarizer_fitted_on: String,
    pub variables: Vec<VariableDocument>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration: Option<IsotonicMap>,
    pub metadata: CardMetadata,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableDocument {
    pub name: String,
    pub display_name: String,
    pub kind: VariableKind,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub categories: Vec<String>,
    /// Rendered bins (derived from `splits`, informational).
    pub bins: Vec<BinDocument>,
    pub missing_points: i64,
    pub splits: Vec<SplitDocument>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinDocument {
    pub condition: String,
    pub points: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitDocument {
    pub split: SplitKind,
    pub points: i64,
}
