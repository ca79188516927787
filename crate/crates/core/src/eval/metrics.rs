use crate::error::{ColfError, Result};

pub use crate::nn::logloss;

/// Tie-aware ROC AUC via the Mann-Whitney rank sum: tied predictions share
/// their average rank, so a tied (positive, negative) pair counts one half.
pub fn auc(preds: &[f64], labels: &[u8]) -> Result<f64> {
    if preds.len() != labels.len() {
        return Err(ColfError::InvalidInput(format!(
            "{} predictions for {} labels",
            preds.len(),
            labels.len()
        )));
    }
    if preds.iter().any(|p| p.is_nan()) {
        return Err(ColfError::InvalidInput("NaN prediction".into()));
    }
    let n_pos = labels.iter().filter(|&&y| y == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(ColfError::UndefinedMetric(format!(
            "AUC needs both classes ({n_pos} positives, {n_neg} negatives)"
        )));
    }

    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_unstable_by(|&a, &b| preds[a].total_cmp(&preds[b]));

    // Twice the positive rank sum keeps average ranks integral.
    let mut rank_sum2: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && preds[order[j]] == preds[order[i]] {
            j += 1;
        }
        // ranks i+1 ..= j, average (i + 1 + j) / 2
        let pos_in_group = order[i..j].iter().filter(|&&k| labels[k] == 1).count() as u128;
        rank_sum2 += pos_in_group * (i as u128 + 1 + j as u128);
        i = j;
    }
    let n_pos_u = n_pos as u128;
    let u2 = rank_sum2 - n_pos_u * (n_pos_u + 1);
    Ok(u2 as f64 / (2.0 * n_pos as f64 * n_neg as f64))
}

/// `(auc_a - auc_b) / auc_b`.
pub fn relative_gain(auc_a: f64, auc_b: f64) -> Result<f64> {
    if auc_b == 0.0 || !auc_b.is_finite() {
        return Err(ColfError::InvalidInput(format!(
            "relative gain against {auc_b}"
        )));
    }
    Ok((auc_a - auc_b) / auc_b)
}

/// `KL(p || q) = sum p ln(p / q)`; terms with `p = 0` contribute nothing.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(ColfError::InvalidInput(format!(
            "distributions of length {} and {}",
            p.len(),
            q.len()
        )));
    }
    let mut total = 0.0;
    for (&pi, &qi) in p.iter().zip(q) {
        if pi < 0.0 || qi < 0.0 {
            return Err(ColfError::InvalidInput("negative probability".into()));
        }
        if pi == 0.0 {
            continue;
        }
        if qi == 0.0 {
            return Ok(f64::INFINITY);
        }
        total += pi * (pi / qi).ln();
    }
    Ok(total.max(0.0))
}

/// Sample mean and (n - 1) standard deviation; the deviation is `None` for
/// fewer than two values.
pub fn mean_std(values: &[f64]) -> (f64, Option<f64>) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, None);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, None);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, Some(var.sqrt()))
}
