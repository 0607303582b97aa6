use crate::binarize::BinarizedDataset;

/// `log(1 + exp(x))` without overflow.
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Logistic loss `sum_i log(1 + exp(-y_i (w'x_i + w0) / m))`.
pub fn logistic_loss(w: &[f64], w0: f64, data: &BinarizedDataset, m: f64) -> f64 {
    assert!(m > 0.0, "multiplier must be positive");
    assert_eq!(w.len(), data.p(), "coefficient dimension mismatch");
    loss_from_margins(&data.margins(w, w0), data.labels(), m)
}

pub fn loss_from_margins(margins: &[f64], labels: &[f64], m: f64) -> f64 {
    margins
        .iter()
        .zip(labels)
        .map(|(&z, &y)| softplus(-y * z / m))
        .sum()
}

/// Per-row derivative of the loss with respect to the margin (`m = 1`):
/// `-y_i * sigma(-y_i z_i)`.
pub fn margin_residuals(margins: &[f64], labels: &[f64]) -> Vec<f64> {
    margins
        .iter()
        .zip(labels)
        .map(|(&z, &y)| -y * sigmoid(-y * z))
        .collect()
}

/// Gradient of the `m = 1` loss with respect to every coefficient, and the
/// intercept.
pub fn gradient(w: &[f64], w0: f64, data: &BinarizedDataset) -> (Vec<f64>, f64) {
    let r = margin_residuals(&data.margins(w, w0), data.labels());
    let g = (0..data.p()).map(|j| column_sum(data.column(j), &r)).collect();
    (g, r.iter().sum())
}

#[inline]
pub(crate) fn column_sum(rows: &[u32], values: &[f64]) -> f64 {
    rows.iter().map(|&i| values[i as usize]).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn single(y: bool) -> BinarizedDataset {
        BinarizedDataset::from_dense(&[vec![1]], &[y], vec![0]).unwrap()
    }

    #[test]
    fn zero_model_costs_ln2_per_row() {
        let d = BinarizedDataset::from_dense(
            &[vec![1], vec![0], vec![1], vec![0]],
            &[true, false, false, true],
            vec![0],
        )
        .unwrap();
        assert_relative_eq!(logistic_loss(&[0.0], 0.0, &d, 1.0), 4.0 * 2f64.ln(), epsilon = 1e-12);
        assert_relative_eq!(logistic_loss(&[0.0], 0.0, &d, 1.0), 2.77259, epsilon = 1e-5);
    }

    #[test]
    fn scalar_cases() {
        let d = single(true);
        assert_relative_eq!(logistic_loss(&[0.0], 0.0, &d, 2.0), 2f64.ln(), epsilon = 1e-15);
        // log(1 + e^-2)
        assert_relative_eq!(logistic_loss(&[1.5], 0.5, &d, 1.0), 0.126928, epsilon = 1e-6);
    }

    #[test]
    fn stable_for_huge_margins() {
        let d = single(false);
        assert_relative_eq!(logistic_loss(&[1000.0], 0.0, &d, 1.0), 1000.0, epsilon = 1e-9);
        assert!(logistic_loss(&[-1000.0], 0.0, &d, 1.0) >= 0.0);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(-800.0) < 1e-300);
        assert_relative_eq!(sigmoid(800.0), 1.0);
    }
}
