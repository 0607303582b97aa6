//! Synthetic data drawn from a known integer scorecard.
//!
//! Every row draws its variables in declaration order from one `ChaCha8Rng`
//! seeded with the run seed, then its label from `Bernoulli(true risk)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal};
use serde::{Deserialize, Serialize};

use crate::binarize::{fingerprint, BinarizationMap, RawTable, RawValue, SplitKind, SplitSpec, VariableInfo, VariableKind};
use crate::error::{Error, Result};
use crate::model::{CardMetadata, ConstraintSummary, Scorecard};
use crate::rounding::IntegerRiskScore;
use crate::solver::loss::softplus;

pub const LABEL_COLUMN: &str = "outcome";

/// A ground-truth card together with the distributions of its inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub intercept: i64,
    pub multiplier: f64,
    pub variables: Vec<SynthVariable>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthVariable {
    pub name: String,
    pub sampler: Sampler,
    /// Probability that a value is missing.
    #[serde(default)]
    pub missing_rate: f64,
    #[serde(default)]
    pub missing_points: i64,
    /// Continuous bin edges: bin `r` holds `cuts[r-1] < x <= cuts[r]`.
    #[serde(default)]
    pub cuts: Vec<f64>,
    /// One value per bin (`cuts.len() + 1`), or per token for categorical samplers.
    pub points: Vec<i64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "distribution", rename_all = "lowercase", deny_unknown_fields)]
pub enum Sampler {
    /// Rounded to `decimals` places.
    Normal { mean: f64, sd: f64, decimals: u32 },
    Lognormal { mu: f64, sigma: f64, decimals: u32 },
    Uniform { low: f64, high: f64, decimals: u32 },
    /// Uniform on the integers `low..=high`.
    Integer { low: i64, high: i64 },
    Categorical { tokens: Vec<String>, weights: Vec<f64> },
}

impl Sampler {
    fn sample(&self, rng: &mut ChaCha8Rng) -> RawValue {
        let round = |x: f64, d: u32| {
            let s = 10f64.powi(d as i32);
            (x * s).round() / s
        };
        match self {
            Sampler::Normal { mean, sd, decimals } => {
                RawValue::Number(round(Normal::new(*mean, *sd).expect("validated").sample(rng), *decimals))
            }
            Sampler::Lognormal { mu, sigma, decimals } => {
                RawValue::Number(round(LogNormal::new(*mu, *sigma).expect("validated").sample(rng), *decimals))
            }
            Sampler::Uniform { low, high, decimals } => RawValue::Number(round(rng.random_range(*low..=*high), *decimals)),
            Sampler::Integer { low, high } => RawValue::Number(rng.random_range(*low..=*high) as f64),
            Sampler::Categorical { tokens, weights } => {
                let total: f64 = weights.iter().sum();
                let mut u = rng.random::<f64>() * total;
                for (t, w) in tokens.iter().zip(weights) {
                    if u < *w {
                        return RawValue::Category(t.clone());
                    }
                    u -= w;
                }
                RawValue::Category(tokens.last().expect("validated").clone())
            }
        }
    }
}

impl SynthSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse {
            line: 0,
            column: 0,
            message: format!("synth spec: {}", e.message()),
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |v: &SynthVariable, msg: &str| Err(Error::Config(format!("synth variable `{}`: {msg}", v.name)));
        if !(self.multiplier > 0.0 && self.multiplier.is_finite()) {
            return Err(Error::Config("synth multiplier must be positive".into()));
        }
        for v in &self.variables {
            if !(0.0..1.0).contains(&v.missing_rate) {
                return bad(v, "missing_rate must lie in [0, 1)");
            }
            match &v.sampler {
                Sampler::Categorical { tokens, weights } => {
                    if tokens.is_empty() || tokens.len() != weights.len() || tokens.len() != v.points.len() {
                        return bad(v, "tokens, weights and points must have equal, nonzero length");
                    }
                    if weights.iter().any(|w| !(*w >= 0.0)) || weights.iter().sum::<f64>() <= 0.0 {
                        return bad(v, "weights must be nonnegative with a positive sum");
                    }
                    let mut sorted = tokens.clone();
                    sorted.sort();
                    sorted.dedup();
                    if sorted.len() != tokens.len() {
                        return bad(v, "tokens must be distinct");
                    }
                    if tokens.iter().any(|t| RawValue::parse(t) != RawValue::Category(t.clone())) {
                        return bad(v, "tokens must be non-numeric, non-empty and not `NA`");
                    }
                }
                s => {
                    let ok = match s {
                        Sampler::Normal { sd, .. } => *sd > 0.0,
                        Sampler::Lognormal { sigma, .. } => *sigma > 0.0,
                        Sampler::Uniform { low, high, .. } => low < high,
                        Sampler::Integer { low, high } => low <= high,
                        Sampler::Categorical { .. } => unreachable!(),
                    };
                    if !ok {
                        return bad(v, "invalid distribution parameters");
                    }
                    if v.points.len() != v.cuts.len() + 1 {
                        return bad(v, "points must have one more entry than cuts");
                    }
                    if v.cuts.windows(2).any(|w| !(w[0] < w[1])) {
                        return bad(v, "cuts must be strictly increasing");
                    }
                }
            }
        }
        Ok(())
    }

    /// Points of one raw value under the spec.
    fn points(&self, v: usize, value: &RawValue) -> i64 {
        let var = &self.variables[v];
        match (value, &var.sampler) {
            (RawValue::Missing, _) => var.missing_points,
            (RawValue::Category(c), Sampler::Categorical { tokens, .. }) => {
                tokens.iter().position(|t| t == c).map_or(0, |k| var.points[k])
            }
            (RawValue::Number(x), _) => var.points[var.cuts.iter().take_while(|&&c| *x > c).count()],
            _ => 0,
        }
    }

    /// True risk of one row laid out in variable order.
    pub fn risk(&self, row: &[RawValue]) -> f64 {
        let total = self.intercept + (0..self.variables.len()).map(|v| self.points(v, &row[v])).sum::<i64>();
        crate::solver::sigmoid(total as f64 / self.multiplier)
    }

    /// Draws `n` rows and labels.
    pub fn sample(&self, n: usize, seed: u64) -> Result<(RawTable, Vec<bool>, Vec<f64>)> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        let mut risks = Vec::with_capacity(n);
        for _ in 0..n {
            let row: Vec<RawValue> = self
                .variables
                .iter()
                .map(|v| {
                    let missing = v.missing_rate > 0.0 && rng.random::<f64>() < v.missing_rate;
                    let value = v.sampler.sample(&mut rng);
                    if missing {
                        RawValue::Missing
                    } else {
                        value
                    }
                })
                .collect();
            let risk = self.risk(&row);
            labels.push(rng.random::<f64>() < risk);
            risks.push(risk);
            rows.push(row);
        }
        let table = RawTable::new(self.variables.iter().map(|v| v.name.clone()).collect(), rows)?;
        Ok((table, labels, risks))
    }

    /// The spec as a scorecard over cumulative splits. Bin points become
    /// differences of adjacent bins; the last bin's points move into the intercept.
    pub fn to_scorecard(&self, fitted_on: &RawTable, labels: &[bool]) -> Result<Scorecard> {
        self.validate()?;
        let mut variables = Vec::new();
        let mut splits = Vec::new();
        let mut w = Vec::new();
        let mut w0 = self.intercept;
        for (v, var) in self.variables.iter().enumerate() {
            let (kind, categories, edges, points): (VariableKind, Vec<String>, Vec<SplitKind>, Vec<i64>) = match &var.sampler {
                Sampler::Categorical { tokens, .. } => {
                    let mut order: Vec<usize> = (0..tokens.len()).collect();
                    order.sort_by(|&a, &b| tokens[a].cmp(&tokens[b]));
                    let sorted: Vec<String> = order.iter().map(|&k| tokens[k].clone()).collect();
                    let edges = sorted[..sorted.len() - 1].iter().cloned().map(SplitKind::Category).collect();
                    let points = order.iter().map(|&k| var.points[k]).collect();
                    (VariableKind::Categorical, sorted, edges, points)
                }
                _ => (
                    VariableKind::Continuous,
                    Vec::new(),
                    var.cuts.iter().copied().map(SplitKind::Threshold).collect(),
                    var.points.clone(),
                ),
            };
            let offset = *points.last().expect("validated");
            w0 += offset;
            for (k, edge) in edges.into_iter().enumerate() {
                splits.push(SplitSpec { variable: v, kind: edge });
                w.push(points[k] - points[k + 1]);
            }
            if var.missing_rate > 0.0 || var.missing_points != 0 {
                splits.push(SplitSpec { variable: v, kind: SplitKind::MissingIndicator });
                w.push(var.missing_points - offset);
            }
            variables.push(VariableInfo { name: var.name.clone(), kind, categories });
        }
        let map = BinarizationMap::from_parts(variables, splits, fingerprint(fitted_on))?;
        let nnz = w.iter().filter(|&&x| x != 0).count();
        let score = IntegerRiskScore { w, w0, multiplier: self.multiplier, loss: 0.0, provenance: 0 };
        let mut meta = CardMetadata::new(ConstraintSummary::new(nnz, self.variables.len()), fingerprint(fitted_on));
        meta.name = "reference".into();
        let mut card = Scorecard::new(score, map, meta)?;
        let mut loss = 0.0;
        for (row, &y) in fitted_on.rows().iter().zip(labels) {
            let t = card.total_score(fitted_on.names(), row)? as f64 / self.multiplier;
            loss += softplus(if y { -t } else { t });
        }
        card.score.loss = loss;
        Ok(card)
    }

    /// Ten clinical-style variables with a prevalence near 20%.
    pub fn reference() -> Self {
        let cont = |name: &str, sampler: Sampler, cuts: &[f64], points: &[i64]| SynthVariable {
            name: name.into(),
            sampler,
            missing_rate: 0.0,
            missing_points: 0,
            cuts: cuts.to_vec(),
            points: points.to_vec(),
        };
        let normal = |mean, sd, decimals| Sampler::Normal { mean, sd, decimals };
        let mut lactate = cont(
            "lactate",
            Sampler::Lognormal { mu: 0.4, sigma: 0.5, decimals: 1 },
            &[2.0, 4.0],
            &[0, 1, 3],
        );
        lactate.missing_rate = 0.3;
        let mut creatinine = cont(
            "creatinine",
            Sampler::Lognormal { mu: 0.0, sigma: 0.5, decimals: 2 },
            &[1.2, 2.0],
            &[0, 1, 2],
        );
        creatinine.missing_rate = 0.05;
        creatinine.missing_points = 1;
        Self {
            intercept: -10,
            multiplier: 2.0,
            variables: vec![
                cont("age", normal(62.0, 16.0, 0), &[45.0, 60.0, 75.0], &[0, 1, 2, 3]),
                cont("heart_rate", normal(88.0, 18.0, 0), &[60.0, 100.0, 120.0], &[1, 0, 1, 2]),
                cont("sbp", normal(125.0, 22.0, 0), &[90.0, 100.0], &[3, 1, 0]),
                cont("resp_rate", normal(19.0, 5.0, 0), &[24.0, 30.0], &[0, 1, 2]),
                cont("temperature", normal(37.0, 0.8, 1), &[36.0, 38.5], &[1, 0, 1]),
                cont("gcs", Sampler::Integer { low: 3, high: 15 }, &[8.0, 12.0], &[4, 2, 0]),
                cont("spo2", normal(95.0, 3.5, 0), &[90.0, 94.0], &[2, 1, 0]),
                lactate,
                creatinine,
                SynthVariable {
                    name: "ventilation".into(),
                    sampler: Sampler::Categorical {
                        tokens: vec!["no".into(), "yes".into()],
                        weights: vec![0.7, 0.3],
                    },
                    missing_rate: 0.0,
                    missing_points: 0,
                    cuts: Vec::new(),
                    points: vec![0, 2],
                },
            ],
        }
    }
}

/// CSV fields for one sampled row; numbers use the shortest round-trip form.
pub fn format_value(v: &RawValue) -> String {
    match v {
        RawValue::Number(x) => format!("{x}"),
        RawValue::Category(c) => c.clone(),
        RawValue::Missing => String::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn truth_card_reproduces_spec_risks() {
        let spec = SynthSpec::reference();
        let (table, labels, risks) = spec.sample(2000, 5).unwrap();
        let card = spec.to_scorecard(&table, &labels).unwrap();
        assert!(card.score.loss > 0.0);
        assert_eq!(Scorecard::deserialize(&card.serialize()).unwrap(), card);
        for (row, r) in table.rows().iter().zip(&risks) {
            assert_eq!(card.predict_risk(table.names(), row).unwrap(), *r);
        }
        assert_eq!(card.sparsity().group_sparsity, 10);
    }

    #[test]
    fn same_seed_same_rows() {
        let spec = SynthSpec::reference();
        assert_eq!(spec.sample(300, 9).unwrap(), spec.sample(300, 9).unwrap());
        assert_ne!(spec.sample(300, 9).unwrap().0, spec.sample(300, 10).unwrap().0);
    }

    #[test]
    fn zero_card_is_a_coin_flip() {
        let mut spec = SynthSpec::reference();
        spec.intercept = 0;
        for v in &mut spec.variables {
            v.points.iter_mut().for_each(|p| *p = 0);
            v.missing_points = 0;
        }
        let (_, labels, risks) = spec.sample(20_000, 1).unwrap();
        assert!(risks.iter().all(|&r| r == 0.5));
        let prev = labels.iter().filter(|&&y| y).count() as f64 / labels.len() as f64;
        assert!((prev - 0.5).abs() < 0.02, "{prev}");
    }

    #[test]
    fn prevalence_tracks_mean_risk() {
        let spec = SynthSpec::reference();
        let (_, labels, _) = spec.sample(50_000, 2).unwrap();
        // mean risk estimated on an independent, larger draw
        let (_, _, risks) = spec.sample(200_000, 1234).unwrap();
        let mean_risk = risks.iter().sum::<f64>() / risks.len() as f64;
        let prev = labels.iter().filter(|&&y| y).count() as f64 / labels.len() as f64;
        assert!((prev - mean_risk).abs() < 0.02, "{prev} vs {mean_risk}");
    }

    #[test]
    fn spec_round_trips_through_toml() {
        let spec = SynthSpec::reference();
        let text = toml::to_string(&spec).unwrap();
        assert_eq!(SynthSpec::from_toml(&text).unwrap(), spec);
    }
}
