//! AUROC and DeLong confidence intervals.

use super::{check_scores, EvalError, Result};

/// Pair counts behind the Mann-Whitney statistic.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairCounts {
    pub positives: u64,
    pub negatives: u64,
    /// Pairs where the positive scores strictly higher.
    pub concordant: u64,
    pub tied: u64,
}

impl PairCounts {
    pub fn auroc(&self) -> f64 {
        (2 * self.concordant + self.tied) as f64 / (2 * self.positives * self.negatives) as f64
    }
}

/// Counts concordant and tied positive/negative pairs in `O(n log n)`.
pub fn pair_counts(scores: &[f64], labels: &[bool]) -> Result<PairCounts> {
    check_scores(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let (mut neg_below, mut concordant, mut tied) = (0u64, 0u64, 0u64);
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        let (mut pos, mut neg) = (0u64, 0u64);
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            if labels[order[j]] {
                pos += 1;
            } else {
                neg += 1;
            }
            j += 1;
        }
        concordant += pos * neg_below;
        tied += pos * neg;
        neg_below += neg;
        i = j;
    }
    let positives = labels.iter().filter(|&&l| l).count() as u64;
    Ok(PairCounts {
        positives,
        negatives: labels.len() as u64 - positives,
        concordant,
        tied,
    })
}

/// `(#concordant + ½ #tied) / (P·N)`.
pub fn auroc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    Ok(pair_counts(scores, labels)?.auroc())
}

/// Inverse of the standard normal CDF (Wichura's AS241, about 1e-16
/// relative accuracy).
///
/// # Panics
///
/// If `p` is not in `(0, 1)`.
pub fn normal_quantile(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "normal quantile needs p in (0, 1), got {p}");
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        return q
            * (((((((2509.0809287301226727 * r + 33430.575583588128105) * r + 67265.770927008700853) * r
                + 45921.953931549871457)
                * r
                + 13731.693765509461125)
                * r
                + 1971.5909503065514427)
                * r
                + 133.14166789178437745)
                * r
                + 3.387132872796366608)
            / (((((((5226.495278852545925 * r + 28729.085735721942674) * r + 39307.89580009271061) * r
                + 21213.794301586595867)
                * r
                + 5394.1960214247511077)
                * r
                + 687.1870074920579083)
                * r
                + 42.313330701600911252)
                * r
                + 1.0);
    }
    let mut r = if q < 0.0 { p } else { 1.0 - p };
    r = (-r.ln()).sqrt();
    let val = if r <= 5.0 {
        r -= 1.6;
        (((((((7.7454501427834140764e-4 * r + 0.0227238449892691845833) * r + 0.24178072517745061177) * r
            + 1.27045825245236838258)
            * r
            + 3.64784832476320460504)
            * r
            + 5.7694972214606914055)
            * r
            + 4.6303378461565452959)
            * r
            + 1.42343711074968357734)
            / (((((((1.05075007164441684324e-9 * r + 5.475938084995344946e-4) * r + 0.0151986665636164571966)
                * r
                + 0.14810397642748007459)
                * r
                + 0.68976733498510000455)
                * r
                + 1.6763848301838038494)
                * r
                + 2.05319162663775882187)
                * r
                + 1.0)
    } else {
        r -= 5.0;
        (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r + 0.0012426609473880784386) * r
            + 0.026532189526576123093)
            * r
            + 0.29656057182850489123)
            * r
            + 1.7848265399172913358)
            * r
            + 5.4637849111641143699)
            * r
            + 6.6579046435011037772)
            / (((((((2.04426310338993978564e-15 * r + 1.4215117583164458887e-7) * r
                + 1.8463183175100546818e-5)
                * r
                + 7.868691311456132591e-4)
                * r
                + 0.0148753612908506148525)
                * r
                + 0.13692988092273580531)
                * r
                + 0.59983220655588793769)
                * r
                + 1.0)
    };
    if q < 0.0 {
        -val
    } else {
        val
    }
}

/// AUROC with a two-sided DeLong interval.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DelongCi {
    pub auroc: f64,
    pub variance: f64,
    pub low: f64,
    pub high: f64,
    /// Variance was zero; the interval collapses to the point estimate.
    pub zero_variance: bool,
}

/// Average ranks (1-based) with ties sharing the mean of their positions.
fn midranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && values[order[j]] == values[order[i]] {
            j += 1;
        }
        let r = (i + j + 1) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = r;
        }
        i = j;
    }
    ranks
}

fn sample_variance(v: &[f64]) -> f64 {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64
}

/// Placement values of positives (`V10`) and negatives (`V01`), computed
/// from midranks in `O(n log n)`.
pub fn placement_values(scores: &[f64], labels: &[bool]) -> Result<(Vec<f64>, Vec<f64>)> {
    check_scores(scores, labels)?;
    let pos: Vec<f64> = (0..scores.len()).filter(|&i| labels[i]).map(|i| scores[i]).collect();
    let neg: Vec<f64> = (0..scores.len()).filter(|&i| !labels[i]).map(|i| scores[i]).collect();
    let (p, n) = (pos.len() as f64, neg.len() as f64);
    let all: Vec<f64> = pos.iter().chain(&neg).copied().collect();
    let r_all = midranks(&all);
    let r_pos = midranks(&pos);
    let r_neg = midranks(&neg);
    let v10 = (0..pos.len()).map(|i| (r_all[i] - r_pos[i]) / n).collect();
    let v01 = (0..neg.len())
        .map(|j| 1.0 - (r_all[pos.len() + j] - r_neg[j]) / p)
        .collect();
    Ok((v10, v01))
}

/// DeLong `1 - alpha` interval, clipped to `[0, 1]`.
pub fn delong_ci(scores: &[f64], labels: &[bool], alpha: f64) -> Result<DelongCi> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(EvalError::InvalidArgument(format!("alpha = {alpha} outside (0, 1]")));
    }
    let counts = pair_counts(scores, labels)?;
    if counts.positives < 2 || counts.negatives < 2 {
        return Err(EvalError::TooFewSamples {
            positives: counts.positives as usize,
            negatives: counts.negatives as usize,
        });
    }
    let auc = counts.auroc();
    let (v10, v01) = placement_values(scores, labels)?;
    let variance = sample_variance(&v10) / v10.len() as f64 + sample_variance(&v01) / v01.len() as f64;
    let z = if alpha >= 1.0 { 0.0 } else { normal_quantile(1.0 - alpha / 2.0) };
    if variance <= 0.0 {
        return Ok(DelongCi {
            auroc: auc,
            variance: 0.0,
            low: auc,
            high: auc,
            zero_variance: true,
        });
    }
    let half = z * variance.sqrt();
    Ok(DelongCi {
        auroc: auc,
        variance,
        low: (auc - half).max(0.0),
        high: (auc + half).min(1.0),
        zero_variance: false,
    })
}
