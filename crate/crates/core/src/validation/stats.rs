use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Largest per-sample size for which the exact null distribution is used.
pub const EXACT_MAX: usize = 10;

/// Midranks of the pooled sample, plus the tie-group sizes.
pub fn midranks(pooled: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut order: Vec<usize> = (0..pooled.len()).collect();
    order.sort_by(|&a, &b| pooled[a].total_cmp(&pooled[b]));
    let mut ranks = vec![0.0; pooled.len()];
    let mut ties = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && pooled[order[j + 1]] == pooled[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        ties.push(j - i + 1);
        i = j + 1;
    }
    (ranks, ties)
}

/// Number of size-`m` subsets of ranks 1..=N with each possible sum.
pub fn rank_sum_counts(m: usize, n_total: usize) -> Vec<f64> {
    let max_sum = n_total * (n_total + 1) / 2;
    // c[k][s]: subsets of size k with sum s among ranks seen so far
    let mut c = vec![vec![0.0f64; max_sum + 1]; m + 1];
    c[0][0] = 1.0;
    for r in 1..=n_total {
        for k in (1..=m.min(r)).rev() {
            for s in (r..=max_sum).rev() {
                c[k][s] += c[k - 1][s - r];
            }
        }
    }
    c.swap_remove(m)
}

/// Two-tailed rank-sum test of `a` against `b`.
///
/// Exact when both samples have at most 10 values and no ties occur;
/// otherwise the normal approximation with tie and continuity correction.
pub fn wilcoxon_rank_sum(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() < 3 || b.len() < 3 {
        return Err(Error::invalid("rank-sum test needs at least 3 values per sample"));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::invalid("rank-sum test input must be finite"));
    }
    let (m, n) = (a.len(), b.len());
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let (ranks, ties) = midranks(&pooled);
    let w: f64 = ranks[..m].iter().sum();
    let n_total = m + n;
    if ties.len() == 1 {
        return Ok(1.0);
    }
    let has_ties = ties.iter().any(|&t| t > 1);
    if m <= EXACT_MAX && n <= EXACT_MAX && !has_ties {
        let counts = rank_sum_counts(m, n_total);
        let total: f64 = counts.iter().sum();
        let w = w.round() as usize;
        let lower: f64 = counts[..=w].iter().sum::<f64>() / total;
        let upper: f64 = counts[w..].iter().sum::<f64>() / total;
        return Ok((2.0 * lower.min(upper)).min(1.0));
    }
    let (mf, nf, nt) = (m as f64, n as f64, n_total as f64);
    let mean = mf * (nt + 1.0) / 2.0;
    let tie_term: f64 = ties.iter().map(|&t| (t * t * t - t) as f64).sum::<f64>() / (nt * (nt - 1.0));
    let var = mf * nf / 12.0 * ((nt + 1.0) - tie_term);
    if var <= 0.0 {
        return Ok(1.0);
    }
    let diff = w - mean;
    let correction = if diff == 0.0 { 0.0 } else { 0.5 * diff.signum() };
    let z = (diff - correction) / var.sqrt();
    let phi = Normal::standard().cdf(z);
    Ok((2.0 * phi.min(1.0 - phi)).min(1.0))
}

/// Benjamini-Hochberg step-up adjustment, returned in input order.
pub fn benjamini_hochberg(p: &[f64]) -> Result<Vec<f64>> {
    if p.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::invalid("p-values must lie in [0, 1]"));
    }
    let m = p.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p[a].total_cmp(&p[b]));
    let mut adj = vec![0.0; m];
    let mut running = 1.0f64;
    for rank in (0..m).rev() {
        let i = order[rank];
        running = running.min(p[i] * m as f64 / (rank + 1) as f64);
        adj[i] = running.min(1.0);
    }
    Ok(adj)
}
