//! Seeded random instances and an independent exhaustive solver for the
//! integration and acceptance tests.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use riskscore::binarize::BinarizedDataset;
use riskscore::solver::{ConstraintSet, Monotone};

pub struct Instance {
    pub data: BinarizedDataset,
    pub constraints: ConstraintSet,
    pub dense: Vec<Vec<u8>>,
    pub labels: Vec<bool>,
}

/// Random binary design with `n_groups` groups, labels from a sparse
/// logistic model, and random sparsity/box/monotone constraints.
pub fn random_instance(seed: u64, max_n: usize, max_p: usize, max_lambda: usize, max_gamma: usize) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(30..=max_n);
    let p = rng.random_range(3..=max_p);
    let n_groups = rng.random_range(1..=p.min(8));
    let mut group_of: Vec<usize> = (0..p).map(|j| if j < n_groups { j } else { rng.random_range(0..n_groups) }).collect();
    group_of.sort_unstable();
    let density: Vec<f64> = (0..p).map(|_| rng.random_range(0.1..0.7)).collect();
    let truth: Vec<f64> = (0..p)
        .map(|_| if rng.random_bool(0.3) { rng.random_range(-2.5..2.5) } else { 0.0 })
        .collect();
    let bias = rng.random_range(-1.0..1.0);
    let mut dense = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    while dense.len() < n {
        let row: Vec<u8> = density.iter().map(|&d| rng.random_bool(d) as u8).collect();
        let s: f64 = bias + row.iter().zip(&truth).map(|(&x, &w)| x as f64 * w).sum::<f64>();
        labels.push(rng.random::<f64>() < 1.0 / (1.0 + (-s).exp()));
        dense.push(row);
    }
    // both classes present
    labels[0] = true;
    labels[1] = false;
    let data = BinarizedDataset::from_dense(&dense, &labels, group_of.clone()).expect("valid instance");

    let lambda = rng.random_range(1..=max_lambda.min(p));
    let gamma = rng.random_range(1..=max_gamma.min(n_groups));
    let bound = [2.0, 3.0, 5.0][rng.random_range(0..3)];
    let mut b = ConstraintSet::builder(&group_of, n_groups)
        .lambda(lambda)
        .gamma(gamma)
        .default_box(-bound, bound)
        .intercept_box(-10.0, 10.0);
    for g in 0..n_groups {
        match rng.random_range(0..5) {
            0 => b = b.monotone(g, Monotone::Nonneg),
            1 => b = b.monotone(g, Monotone::Nonpos),
            2 => b = b.group_box(g, -1.5, 4.0),
            _ => {}
        }
    }
    let constraints = b.build().expect("feasible random constraints");
    Instance { data, constraints, dense, labels }
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Dense logistic loss, written independently of the library.
pub fn dense_loss(inst: &Instance, w: &[f64], w0: f64) -> f64 {
    inst.dense
        .iter()
        .zip(&inst.labels)
        .map(|(row, &y)| {
            let s = w0 + row.iter().zip(w).map(|(&x, &wj)| x as f64 * wj).sum::<f64>();
            softplus(if y { -s } else { s })
        })
        .sum()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Minimizes the loss along one direction: `rows` get `delta` added to their
/// scores; bracketed Newton on the derivative over `[lo, hi]` (offsets from the
/// current value).
fn line_min(scores: &[f64], labels: &[bool], rows: &[usize], lo: f64, hi: f64) -> f64 {
    let deriv = |d: f64| {
        let mut g = 0.0;
        let mut h = 0.0;
        for &i in rows {
            let q = sigmoid(scores[i] + d);
            g += q - if labels[i] { 1.0 } else { 0.0 };
            h += q * (1.0 - q);
        }
        (g, h)
    };
    if rows.is_empty() {
        return 0.0;
    }
    let (glo, _) = deriv(lo);
    if glo >= 0.0 {
        return lo;
    }
    let (ghi, _) = deriv(hi);
    if ghi <= 0.0 {
        return hi;
    }
    let (mut a, mut b) = (lo, hi);
    let mut x = 0.0f64.clamp(lo, hi);
    for _ in 0..200 {
        let (g, h) = deriv(x);
        if g < 0.0 {
            a = x;
        } else {
            b = x;
        }
        let newton = x - g / h.max(1e-300);
        let next = if newton > a && newton < b { newton } else { 0.5 * (a + b) };
        if (next - x).abs() < 1e-14 * (1.0 + x.abs()) || b - a < 1e-14 {
            return next;
        }
        x = next;
    }
    x
}

/// Minimum loss over coefficients supported on `support` inside the boxes,
/// by exact cyclic coordinate minimization on dense rows.
pub fn fit_support(inst: &Instance, support: &[usize]) -> f64 {
    let c = &inst.constraints;
    let n = inst.dense.len();
    let all: Vec<usize> = (0..n).collect();
    let rows_of: Vec<Vec<usize>> = support
        .iter()
        .map(|&j| (0..n).filter(|&i| inst.dense[i][j] == 1).collect())
        .collect();
    let (ilo, ihi) = c.intercept_box();
    let mut w0 = 0.0f64.clamp(ilo, ihi);
    let mut w = vec![0.0; support.len()];
    let mut scores = vec![w0; n];
    let mut loss = f64::INFINITY;
    for _ in 0..10_000 {
        let d = line_min(&scores, &inst.labels, &all, ilo - w0, ihi - w0);
        w0 += d;
        scores.iter_mut().for_each(|s| *s += d);
        for (k, &j) in support.iter().enumerate() {
            let d = line_min(&scores, &inst.labels, &rows_of[k], c.lower(j) - w[k], c.upper(j) - w[k]);
            w[k] += d;
            rows_of[k].iter().for_each(|&i| scores[i] += d);
        }
        let next: f64 = scores
            .iter()
            .zip(&inst.labels)
            .map(|(&s, &y)| softplus(if y { -s } else { s }))
            .sum();
        let done = loss - next < 1e-13 * (1.0 + next);
        loss = loss.min(next);
        if done {
            break;
        }
    }
    loss
}

/// Every support of size at most lambda with at most gamma groups, restricted
/// to coordinates whose box admits a nonzero value.
pub fn feasible_supports(inst: &Instance) -> Vec<Vec<usize>> {
    let c = &inst.constraints;
    let p = inst.data.p();
    let usable: Vec<usize> = (0..p).filter(|&j| c.lower(j) < 0.0 || c.upper(j) > 0.0).collect();
    let mut out = vec![Vec::new()];
    let mut frontier = vec![Vec::<usize>::new()];
    for _ in 0..c.lambda() {
        let mut next = Vec::new();
        for s in &frontier {
            let start = s.last().map_or(0, |&l| usable.iter().position(|&u| u == l).unwrap() + 1);
            for &j in &usable[start..] {
                let mut t = s.clone();
                t.push(j);
                let mut groups: Vec<usize> = t.iter().map(|&k| c.group_of()[k]).collect();
                groups.sort_unstable();
                groups.dedup();
                if groups.len() <= c.gamma() {
                    next.push(t);
                }
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

/// Exhaustive optimum of the constrained problem. Only maximal supports need
/// fitting since subsets are reachable with zero coefficients.
pub fn exhaustive_optimum(inst: &Instance) -> f64 {
    let supports = feasible_supports(inst);
    let maximal: Vec<&Vec<usize>> = supports
        .iter()
        .filter(|s| {
            !supports
                .iter()
                .any(|t| t.len() == s.len() + 1 && s.iter().all(|j| t.contains(j)))
        })
        .collect();
    maximal.into_iter().map(|s| fit_support(inst, s)).fold(f64::INFINITY, f64::min)
}
