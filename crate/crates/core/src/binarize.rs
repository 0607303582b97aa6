//! Conversion of raw tabular records into binary split indicators.
//!
//! Every raw variable becomes a group of binary columns:
//!
//! * continuous variables get threshold splits `x <= t` at empirical quantiles,
//! * categorical variables get cumulative splits over the sorted token list
//!   (`token <= c`),
//! * any variable with a missing value gets a missing indicator.
//!
//! Missing values are never imputed: a missing entry switches off every
//! threshold/category split of its variable and switches on the indicator.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const DEFAULT_BINS_PER_VARIABLE: usize = 20;

/// One raw cell.
#[derive(Debug, Clone, PartialEq)]
pub enum RawValue {
    Number(f64),
    Category(String),
    Missing,
}

impl RawValue {
    /// Parses a CSV field. Empty fields and `NA` are missing.
    pub fn parse(field: &str) -> Self {
        let field = field.trim();
        if field.is_empty() || field == "NA" {
            return RawValue::Missing;
        }
        match field.parse::<f64>() {
            Ok(x) if x.is_finite() => RawValue::Number(x),
            _ => RawValue::Category(field.to_string()),
        }
    }

    fn token(&self) -> Option<String> {
        match self {
            RawValue::Number(x) => Some(format!("{x}")),
            RawValue::Category(c) => Some(c.clone()),
            RawValue::Missing => None,
        }
    }
}

/// Named columns of raw values, without labels.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTable {
    names: Vec<String>,
    rows: Vec<Vec<RawValue>>,
}

impl RawTable {
    pub fn new(names: Vec<String>, rows: Vec<Vec<RawValue>>) -> Result<Self> {
        let unique: BTreeSet<&String> = names.iter().collect();
        if unique.len() != names.len() {
            return Err(Error::Data("duplicate variable names".into()));
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != names.len() {
                return Err(Error::Data(format!(
                    "row {i} has {} entries, expected {}",
                    row.len(),
                    names.len()
                )));
            }
        }
        Ok(Self { names, rows })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn rows(&self) -> &[Vec<RawValue>] {
        &self.rows
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_vars(&self) -> usize {
        self.names.len()
    }

    pub fn column(&self, j: usize) -> impl Iterator<Item = &RawValue> + '_ {
        self.rows.iter().map(move |r| &r[j])
    }

    pub fn select_rows(&self, idx: &[usize]) -> Self {
        Self {
            names: self.names.clone(),
            rows: idx.iter().map(|&i| self.rows[i].clone()).collect(),
        }
    }
}

/// Raw records with binary outcomes (`true` = positive class).
#[derive(Debug, Clone, PartialEq)]
pub struct RawDataset {
    table: RawTable,
    labels: Vec<bool>,
}

impl RawDataset {
    pub fn new(table: RawTable, labels: Vec<bool>) -> Result<Self> {
        if labels.len() != table.n_rows() {
            return Err(Error::Data(format!(
                "{} labels for {} rows",
                labels.len(),
                table.n_rows()
            )));
        }
        let pos = labels.iter().filter(|&&y| y).count();
        if pos == 0 || pos == labels.len() {
            return Err(Error::Data(
                "labels must take exactly two distinct values".into(),
            ));
        }
        Ok(Self { table, labels })
    }

    pub fn table(&self) -> &RawTable {
        &self.table
    }

    pub fn labels(&self) -> &[bool] {
        &self.labels
    }

    pub fn n_rows(&self) -> usize {
        self.table.n_rows()
    }

    pub fn select_rows(&self, idx: &[usize]) -> Result<Self> {
        Self::new(
            self.table.select_rows(idx),
            idx.iter().map(|&i| self.labels[i]).collect(),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VariableKind {
    Continuous,
    Categorical,
}

impl fmt::Display for VariableKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VariableKind::Continuous => f.write_str("continuous"),
            VariableKind::Categorical => f.write_str("categorical"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitKind {
    /// Fires when the raw value is `<= t`.
    Threshold(f64),
    /// Fires when the token sorts at or before this category.
    Category(String),
    MissingIndicator,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub variable: usize,
    pub kind: SplitKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableInfo {
    pub name: String,
    pub kind: VariableKind,
    /// Sorted distinct tokens seen while fitting (categorical only).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub categories: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinarizationMap {
    variables: Vec<VariableInfo>,
    splits: Vec<SplitSpec>,
    groups: Vec<Vec<usize>>,
    fitted_on: String,
}

impl BinarizationMap {
    /// Assembles a map from explicit splits. Splits must be listed variable by
    /// variable, thresholds strictly increasing, at most one missing indicator each.
    pub fn from_parts(
        variables: Vec<VariableInfo>,
        splits: Vec<SplitSpec>,
        fitted_on: String,
    ) -> Result<Self> {
        let mut groups = vec![Vec::new(); variables.len()];
        for (j, s) in splits.iter().enumerate() {
            let g = groups
                .get_mut(s.variable)
                .ok_or_else(|| Error::Data(format!("split {j} names unknown variable {}", s.variable)))?;
            g.push(j);
        }
        let map = Self {
            variables,
            splits,
            groups,
            fitted_on,
        };
        map.validate()?;
        Ok(map)
    }

    fn validate(&self) -> Result<()> {
        let mut last_var = 0;
        for (j, s) in self.splits.iter().enumerate() {
            if s.variable < last_var {
                return Err(Error::Data(format!("split {j} is out of variable order")));
            }
            last_var = s.variable;
        }
        for (v, members) in self.groups.iter().enumerate() {
            let info = &self.variables[v];
            let mut last_t = f64::NEG_INFINITY;
            let mut missing = 0;
            for &j in members {
                match &self.splits[j].kind {
                    SplitKind::Threshold(t) => {
                        if info.kind != VariableKind::Continuous || !(t > &last_t) {
                            return Err(Error::Data(format!(
                                "invalid threshold split {j} on `{}`",
                                info.name
                            )));
                        }
                        last_t = *t;
                    }
                    SplitKind::Category(c) => {
                        if info.kind != VariableKind::Categorical || !info.categories.contains(c) {
                            return Err(Error::Data(format!(
                                "invalid category split {j} on `{}`",
                                info.name
                            )));
                        }
                    }
                    SplitKind::MissingIndicator => missing += 1,
                }
            }
            if missing > 1 {
                return Err(Error::Data(format!(
                    "more than one missing indicator on `{}`",
                    info.name
                )));
            }
        }
        Ok(())
    }

    pub fn variables(&self) -> &[VariableInfo] {
        &self.variables
    }

    pub fn splits(&self) -> &[SplitSpec] {
        &self.splits
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    pub fn fitted_on(&self) -> &str {
        &self.fitted_on
    }

    pub fn n_splits(&self) -> usize {
        self.splits.len()
    }

    /// Group (raw variable) index of every split.
    pub fn group_of(&self) -> Vec<usize> {
        self.splits.iter().map(|s| s.variable).collect()
    }

    pub fn variable_index(&self, name: &str) -> Option<usize> {
        self.variables.iter().position(|v| v.name == name)
    }

    /// Human-readable label for split `j`.
    pub fn describe_split(&self, j: usize) -> String {
        let s = &self.splits[j];
        let name = &self.variables[s.variable].name;
        match &s.kind {
            SplitKind::Threshold(t) => format!("{name} <= {t}"),
            SplitKind::Category(c) => format!("{name} <= '{c}'"),
            SplitKind::MissingIndicator => format!("{name} is missing"),
        }
    }

    /// Indices of the splits that fire on one record, ordered as the values
    /// of `record` are laid out in `names`.
    pub fn encode_record(&self, names: &[String], record: &[RawValue]) -> Result<Vec<usize>> {
        let positions = self.resolve_columns(names)?;
        let mut active = Vec::new();
        for (v, &col) in positions.iter().enumerate() {
            self.encode_value(v, &record[col], &mut active)?;
        }
        Ok(active)
    }

    fn resolve_columns(&self, names: &[String]) -> Result<Vec<usize>> {
        self.variables
            .iter()
            .map(|v| {
                names
                    .iter()
                    .position(|n| n == &v.name)
                    .ok_or_else(|| Error::Schema {
                        variable: v.name.clone(),
                        reason: "is missing from the input".into(),
                    })
            })
            .collect()
    }

    fn encode_value(&self, v: usize, value: &RawValue, active: &mut Vec<usize>) -> Result<()> {
        let info = &self.variables[v];
        let members = &self.groups[v];
        match value {
            RawValue::Missing => active.extend(
                members
                    .iter()
                    .copied()
                    .filter(|&j| self.splits[j].kind == SplitKind::MissingIndicator),
            ),
            RawValue::Number(x) if info.kind == VariableKind::Continuous => {
                active.extend(members.iter().copied().filter(|&j| {
                    matches!(self.splits[j].kind, SplitKind::Threshold(t) if *x <= t)
                }))
            }
            RawValue::Category(c) if info.kind == VariableKind::Continuous => {
                return Err(Error::Schema {
                    variable: info.name.clone(),
                    reason: format!("is continuous but got non-numeric value `{c}`"),
                })
            }
            other => {
                let token = other.token().expect("non-missing value");
                match info.categories.binary_search(&token) {
                    Ok(rank) => active.extend(members.iter().copied().filter(|&j| {
                        match &self.splits[j].kind {
                            SplitKind::Category(c) => {
                                info.categories.binary_search(c).map_or(false, |r| rank <= r)
                            }
                            _ => false,
                        }
                    })),
                    Err(_) => warn!(
                        "unknown category `{token}` for variable `{}`; all its category splits are 0",
                        info.name
                    ),
                }
            }
        }
        Ok(())
    }
}

/// Binary design matrix stored column-wise as the sorted row indices where
/// each split fires. Labels are `+1`/`-1`.
#[derive(Debug, Clone, PartialEq)]
pub struct BinarizedDataset {
    n: usize,
    columns: Vec<Vec<u32>>,
    labels: Vec<f64>,
    group_of: Vec<usize>,
    n_groups: usize,
    map: Option<BinarizationMap>,
}

impl BinarizedDataset {
    /// Builds a dataset from column supports and a group index per column.
    /// Used directly by synthetic experiments; `apply_binarizer` is the
    /// normal entry point.
    pub fn from_columns(
        n: usize,
        columns: Vec<Vec<u32>>,
        labels: &[bool],
        group_of: Vec<usize>,
    ) -> Result<Self> {
        if n == 0 || columns.is_empty() {
            return Err(Error::Data("dataset needs n >= 1 and p >= 1".into()));
        }
        if labels.len() != n || group_of.len() != columns.len() {
            return Err(Error::Data("dimension mismatch".into()));
        }
        for (j, col) in columns.iter().enumerate() {
            if col.windows(2).any(|w| w[0] >= w[1]) || col.last().is_some_and(|&r| r as usize >= n) {
                return Err(Error::Data(format!("column {j} has invalid row indices")));
            }
        }
        let n_groups = group_of.iter().max().map_or(0, |g| g + 1);
        Ok(Self {
            n,
            columns,
            labels: labels.iter().map(|&y| if y { 1.0 } else { -1.0 }).collect(),
            group_of,
            n_groups,
            map: None,
        })
    }

    /// Builds a dataset from dense 0/1 rows.
    pub fn from_dense(rows: &[Vec<u8>], labels: &[bool], group_of: Vec<usize>) -> Result<Self> {
        let p = group_of.len();
        let mut columns = vec![Vec::new(); p];
        for (i, row) in rows.iter().enumerate() {
            if row.len() != p {
                return Err(Error::Data(format!("row {i} has wrong width")));
            }
            for (j, &x) in row.iter().enumerate() {
                if x != 0 {
                    columns[j].push(i as u32);
                }
            }
        }
        Self::from_columns(rows.len(), columns, labels, group_of)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.columns.len()
    }

    pub fn column(&self, j: usize) -> &[u32] {
        &self.columns[j]
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn group_of(&self) -> &[usize] {
        &self.group_of
    }

    pub fn n_groups(&self) -> usize {
        self.n_groups
    }

    pub fn map(&self) -> Option<&BinarizationMap> {
        self.map.as_ref()
    }

    /// Dense value of entry (i, j).
    pub fn get(&self, i: usize, j: usize) -> bool {
        self.columns[j].binary_search(&(i as u32)).is_ok()
    }

    /// Splits that never fire on this data.
    pub fn zero_columns(&self) -> Vec<usize> {
        (0..self.p()).filter(|&j| self.columns[j].is_empty()).collect()
    }

    /// Linear scores `w'x_i + w0` for every row.
    pub fn margins(&self, w: &[f64], w0: f64) -> Vec<f64> {
        let mut z = vec![w0; self.n];
        for (j, &wj) in w.iter().enumerate() {
            if wj != 0.0 {
                for &i in &self.columns[j] {
                    z[i as usize] += wj;
                }
            }
        }
        z
    }

    pub fn positives(&self) -> Vec<bool> {
        self.labels.iter().map(|&y| y > 0.0).collect()
    }
}

/// Fits splits for every variable of `raw`.
pub fn fit_binarizer(
    raw: &RawTable,
    bins_per_variable: usize,
    schema_overrides: &BTreeMap<String, VariableKind>,
) -> Result<BinarizationMap> {
    if bins_per_variable < 2 {
        return Err(Error::Config("bins_per_variable must be at least 2".into()));
    }
    if raw.n_rows() == 0 || raw.n_vars() == 0 {
        return Err(Error::Data("cannot fit a binarizer on empty data".into()));
    }
    for name in schema_overrides.keys() {
        if !raw.names().contains(name) {
            return Err(Error::Schema {
                variable: name.clone(),
                reason: "appears in the schema but not in the data".into(),
            });
        }
    }

    let per_variable: Vec<Result<(VariableInfo, Vec<SplitKind>)>> = (0..raw.n_vars())
        .into_par_iter()
        .map(|v| fit_variable(raw, v, bins_per_variable, schema_overrides.get(&raw.names()[v]).copied()))
        .collect();

    let mut variables = Vec::with_capacity(raw.n_vars());
    let mut splits = Vec::new();
    for (v, res) in per_variable.into_iter().enumerate() {
        let (info, kinds) = res?;
        if kinds.is_empty() {
            warn!("variable `{}` has a single value and no missings; no splits", info.name);
        }
        splits.extend(kinds.into_iter().map(|kind| SplitSpec { variable: v, kind }));
        variables.push(info);
    }
    BinarizationMap::from_parts(variables, splits, fingerprint(raw))
}

fn fit_variable(
    raw: &RawTable,
    v: usize,
    bins: usize,
    kind_override: Option<VariableKind>,
) -> Result<(VariableInfo, Vec<SplitKind>)> {
    let name = raw.names()[v].clone();
    let has_missing = raw.column(v).any(|x| *x == RawValue::Missing);
    let all_numeric = raw
        .column(v)
        .all(|x| matches!(x, RawValue::Number(_) | RawValue::Missing));
    let kind = kind_override.unwrap_or(if all_numeric {
        VariableKind::Continuous
    } else {
        VariableKind::Categorical
    });

    let mut kinds = Vec::new();
    let mut categories = Vec::new();
    match kind {
        VariableKind::Continuous => {
            if !all_numeric {
                return Err(Error::Data(format!(
                    "variable `{name}` is declared continuous but has non-numeric values"
                )));
            }
            let mut values: Vec<f64> = raw
                .column(v)
                .filter_map(|x| match x {
                    RawValue::Number(x) => Some(*x),
                    _ => None,
                })
                .collect();
            values.sort_by(f64::total_cmp);
            kinds.extend(quantile_thresholds(&values, bins).into_iter().map(SplitKind::Threshold));
        }
        VariableKind::Categorical => {
            let tokens: BTreeSet<String> = raw.column(v).filter_map(RawValue::token).collect();
            categories = tokens.into_iter().collect();
            // one cumulative split between each adjacent pair of sorted tokens
            if categories.len() >= 2 {
                kinds.extend(
                    categories[..categories.len() - 1]
                        .iter()
                        .cloned()
                        .map(SplitKind::Category),
                );
            }
        }
    }
    if has_missing {
        kinds.push(SplitKind::MissingIndicator);
    }
    Ok((VariableInfo { name, kind, categories }, kinds))
}

/// Nearest-rank quantile of a sorted sample: the value at index `ceil(alpha*n) - 1`
/// for `alpha = k / bins`.
pub fn nearest_rank(sorted: &[f64], k: usize, bins: usize) -> f64 {
    let n = sorted.len();
    let idx = (k * n).div_ceil(bins).max(1) - 1;
    sorted[idx.min(n - 1)]
}

/// Threshold splits for a sorted continuous sample: `bins - 1` nearest-rank
/// quantiles with duplicates collapsed and the sample maximum dropped (a split
/// at the maximum fires on every observed value). A two-valued variable gets
/// the single split between its values.
pub fn quantile_thresholds(sorted: &[f64], bins: usize) -> Vec<f64> {
    if sorted.is_empty() {
        return Vec::new();
    }
    let (lo, hi) = (sorted[0], sorted[sorted.len() - 1]);
    let distinct = {
        let mut d = sorted.to_vec();
        d.dedup();
        d
    };
    if distinct.len() == 2 {
        return vec![lo];
    }
    let mut out: Vec<f64> = (1..bins).map(|k| nearest_rank(sorted, k, bins)).collect();
    out.dedup();
    out.retain(|&t| t < hi);
    out
}

/// Expands `raw` through `map`.
pub fn apply_binarizer(map: &BinarizationMap, raw: &RawDataset) -> Result<BinarizedDataset> {
    let table = raw.table();
    let positions = map.resolve_columns(table.names())?;
    if table.n_vars() != map.variables().len() {
        return Err(Error::Data(format!(
            "data has {} variables, binarizer expects {}",
            table.n_vars(),
            map.variables().len()
        )));
    }
    let n = table.n_rows();
    let mut columns = vec![Vec::new(); map.n_splits()];
    let mut active = Vec::new();
    for (i, row) in table.rows().iter().enumerate() {
        active.clear();
        for (v, &col) in positions.iter().enumerate() {
            map.encode_value(v, &row[col], &mut active)?;
        }
        for &j in &active {
            columns[j].push(i as u32);
        }
    }
    let mut data = BinarizedDataset::from_columns(n, columns, raw.labels(), map.group_of())?;
    data.n_groups = map.variables().len();
    for j in data.zero_columns() {
        warn!("split `{}` never fires on this data", map.describe_split(j));
    }
    data.map = Some(map.clone());
    Ok(data)
}

/// SHA-256 over variable names and cell values.
pub fn fingerprint(raw: &RawTable) -> String {
    let mut h = Sha256::new();
    for name in raw.names() {
        h.update(name.as_bytes());
        h.update([0u8]);
    }
    for row in raw.rows() {
        for x in row {
            match x {
                RawValue::Number(v) => {
                    h.update([1u8]);
                    h.update(v.to_bits().to_le_bytes());
                }
                RawValue::Category(c) => {
                    h.update([2u8]);
                    h.update(c.as_bytes());
                    h.update([0u8]);
                }
                RawValue::Missing => h.update([3u8]),
            }
        }
    }
    hex(&h.finalize())
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
