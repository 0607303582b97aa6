//! The end-to-end training pipeline: binarize, fit, pool, round, wrap.

use std::collections::BTreeMap;

use log::info;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{RunConfig, DEFAULT_LAMBDA};
use crate::binarize::{apply_binarizer, fingerprint, fit_binarizer, BinarizedDataset, RawDataset, VariableKind};
use crate::error::{Error, Result};
use crate::metrics::{evaluate, EvaluationReport};
use crate::model::{check_version, CardDocument, CardMetadata, ConstraintSummary, Scorecard};
use crate::pool::{generate_pool_with, PoolOptions};
use crate::rounding::round_pool;
use crate::solver::{fit_continuous_with, BeamOptions, ConstraintSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolDocument {
    pub version: u32,
    pub name: String,
    /// Configuration with every default resolved.
    pub config: RunConfig,
    pub training: TrainingInfo,
    pub summary: Vec<SummaryRow>,
    pub cards: Vec<PoolEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingInfo {
    pub fingerprint: String,
    pub n_train: usize,
    pub n_validation: usize,
    pub n_variables: usize,
    pub n_splits: usize,
    /// Loss of the best continuous solution.
    pub base_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub rank: usize,
    pub loss: f64,
    pub multiplier: f64,
    pub group_sparsity: usize,
    pub overall_sparsity: usize,
    pub train_auroc: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validation_auroc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolEntry {
    pub card: CardDocument,
    pub train: EvaluationReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validation: Option<EvaluationReport>,
}

impl PoolDocument {
    pub fn parse(text: &str) -> Result<Self> {
        let raw: serde_json::Value = serde_json::from_str(text)?;
        check_version(&raw)?;
        Ok(serde_json::from_str(text)?)
    }

    pub fn scorecard(&self, index: usize) -> Result<Scorecard> {
        let entry = self.cards.get(index).ok_or_else(|| {
            Error::Config(format!("card index {index} out of range (pool has {})", self.cards.len()))
        })?;
        Scorecard::from_document(entry.card.clone())
    }

    pub fn render_summary(&self) -> String {
        let mut out = format!(
            "{}  n_train={} n_validation={} splits={} base_loss={:.4}\n",
            self.name, self.training.n_train, self.training.n_validation, self.training.n_splits, self.training.base_loss
        );
        out.push_str("rank        loss  multiplier  groups  overall  train_auroc  valid_auroc\n");
        let fmt = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{v:.4}"));
        for r in &self.summary {
            out.push_str(&format!(
                "{:>4}  {:>10.4}  {:>10.4}  {:>6}  {:>7}  {:>11}  {:>11}\n",
                r.rank,
                r.loss,
                r.multiplier,
                r.group_sparsity,
                r.overall_sparsity,
                fmt(r.train_auroc),
                fmt(r.validation_auroc)
            ));
        }
        out
    }
}

/// Train/validation row indices from the configured fold count.
fn split_rows(n: usize, config: &RunConfig, seed: u64) -> (Vec<usize>, Vec<usize>) {
    if config.cv_folds < 2 {
        return ((0..n).collect(), Vec::new());
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut validation = idx[..n / config.cv_folds].to_vec();
    let mut train = idx[n / config.cv_folds..].to_vec();
    validation.sort_unstable();
    train.sort_unstable();
    (train, validation)
}

/// Builds the constraint set; unknown variable names and infeasible settings
/// are rejected here, before any optimization.
pub fn build_constraints(
    config: &RunConfig,
    data: &BinarizedDataset,
    variable_names: &[String],
) -> Result<(ConstraintSet, ConstraintSummary)> {
    let p = data.p();
    let n_vars = variable_names.len();
    let lambda = config.lambda.unwrap_or(DEFAULT_LAMBDA.min(p));
    let gamma = config.gamma.unwrap_or(n_vars);
    if lambda == 0 || lambda > p {
        return Err(Error::Config(format!("lambda = {lambda} must lie in [1, {p}] (number of splits)")));
    }
    if gamma == 0 || gamma > n_vars {
        return Err(Error::Config(format!("gamma = {gamma} must lie in [1, {n_vars}] (number of variables)")));
    }
    let group = |name: &String| {
        variable_names.iter().position(|v| v == name).ok_or_else(|| Error::Schema {
            variable: name.clone(),
            reason: "is configured but not present in the data".into(),
        })
    };
    let mut b = ConstraintSet::builder(data.group_of(), n_vars)
        .lambda(lambda)
        .gamma(gamma)
        .default_box(config.coefficient_box.0, config.coefficient_box.1)
        .intercept_box(config.intercept_box.0, config.intercept_box.1);
    for (name, &(lo, hi)) in &config.variable_box {
        b = b.group_box(group(name)?, lo, hi);
    }
    for (name, &dir) in &config.monotone {
        b = b.monotone(group(name)?, dir);
    }
    let constraints = b.build()?;
    let summary = ConstraintSummary {
        lambda,
        gamma,
        coefficient_box: config.coefficient_box,
        intercept_box: config.intercept_box,
        variable_boxes: config.variable_box.clone(),
        monotone: config.monotone.clone(),
    };
    Ok((constraints, summary))
}

/// Runs the whole pipeline on `raw`.
pub fn train(
    raw: &RawDataset,
    config: &RunConfig,
    schema: &BTreeMap<String, VariableKind>,
) -> Result<PoolDocument> {
    config.validate()?;
    let seed = config.seed()?;
    if let Some(gamma) = config.gamma {
        if gamma > raw.table().n_vars() {
            return Err(Error::Config(format!(
                "gamma = {gamma} exceeds the number of variables ({})",
                raw.table().n_vars()
            )));
        }
    }
    let (train_idx, valid_idx) = split_rows(raw.n_rows(), config, seed);
    let train_raw = raw.select_rows(&train_idx)?;
    let valid_raw = if valid_idx.is_empty() {
        None
    } else {
        Some(raw.select_rows(&valid_idx)?)
    };

    let map = fit_binarizer(train_raw.table(), config.bins_per_variable, schema)?;
    let train_data = apply_binarizer(&map, &train_raw)?;
    let valid_data = valid_raw.as_ref().map(|v| apply_binarizer(&map, v)).transpose()?;
    let names: Vec<String> = map.variables().iter().map(|v| v.name.clone()).collect();
    let (constraints, summary) = build_constraints(config, &train_data, &names)?;
    info!(
        "training on {} rows, {} splits over {} variables (lambda={}, gamma={})",
        train_data.n(),
        train_data.p(),
        names.len(),
        summary.lambda,
        summary.gamma
    );

    let base = fit_continuous_with(
        &train_data,
        &constraints,
        BeamOptions {
            beam_width: config.beam_width,
            ..BeamOptions::default()
        },
    )?;
    info!("continuous solution: loss {:.6}, support {:?}", base.loss, base.support());
    let pool = generate_pool_with(
        &base,
        &train_data,
        &constraints,
        PoolOptions {
            epsilon_u: config.epsilon_u,
            swap_candidates: config.swap_candidates,
            max_size: config.pool_size,
            passes: config.pool_passes,
            ..PoolOptions::default()
        },
    )?;
    info!("pool of {} solutions", pool.len());
    let scores = round_pool(&pool, &train_data, &constraints, config.multipliers)?;

    let train_labels = train_raw.labels();
    let mut cards = Vec::with_capacity(scores.len());
    let mut rows = Vec::with_capacity(scores.len());
    let train_fp = fingerprint(train_raw.table());
    for (rank, score) in scores.into_iter().enumerate() {
        let card = Scorecard::new(score, map.clone(), CardMetadata::new(summary.clone(), train_fp.clone()))?
            .with_training_totals(&train_data);
        let train_report = evaluate(train_labels, &card.predict_binarized(&train_data))?;
        let valid_report = match (&valid_data, &valid_raw) {
            (Some(d), Some(r)) => Some(evaluate(r.labels(), &card.predict_binarized(d))?),
            _ => None,
        };
        let sp = card.sparsity();
        rows.push(SummaryRow {
            rank,
            loss: card.score.loss,
            multiplier: card.score.multiplier,
            group_sparsity: sp.group_sparsity,
            overall_sparsity: sp.overall_sparsity,
            train_auroc: train_report.auroc,
            validation_auroc: valid_report.as_ref().and_then(|r| r.auroc),
        });
        cards.push(PoolEntry {
            card: card.to_document(),
            train: train_report,
            validation: valid_report,
        });
    }

    let mut resolved = config.clone();
    resolved.lambda = Some(summary.lambda);
    resolved.gamma = Some(summary.gamma);
    Ok(PoolDocument {
        version: crate::model::DOCUMENT_VERSION,
        name: format!("GFR-{}", summary.gamma),
        config: resolved,
        training: TrainingInfo {
            fingerprint: train_fp,
            n_train: train_data.n(),
            n_validation: valid_idx.len(),
            n_variables: names.len(),
            n_splits: train_data.p(),
            base_loss: pool.base_loss,
        },
        summary: rows,
        cards,
    })
}
