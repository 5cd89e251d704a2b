//! Paired one-sided tests of H1: mean(a) > mean(b).

use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

/// Largest sample size (after dropping zero differences) that uses the exact
/// signed-rank distribution; larger samples use the normal approximation.
pub const EXACT_WILCOXON_MAX_N: usize = 25;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SignificanceError {
    #[error("samples differ in length ({0} vs {1})")]
    Unpaired(usize, usize),
    #[error("need at least 2 pairs, got {0}")]
    TooFew(usize),
    #[error("degenerate input: {0}")]
    DegenerateInput(&'static str),
}

fn differences(a: &[f64], b: &[f64]) -> Result<Vec<f64>, SignificanceError> {
    if a.len() != b.len() {
        return Err(SignificanceError::Unpaired(a.len(), b.len()));
    }
    if a.len() < 2 {
        return Err(SignificanceError::TooFew(a.len()));
    }
    Ok(a.iter().zip(b).map(|(x, y)| x - y).collect())
}

/// Paired t-test, one-sided upper tail. Zero variance of the differences is
/// reported as degenerate rather than as an infinite statistic.
pub fn paired_t_one_sided(a: &[f64], b: &[f64]) -> Result<f64, SignificanceError> {
    let d = differences(a, b)?;
    let n = d.len() as f64;
    let mean = d.iter().sum::<f64>() / n;
    let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    if var == 0.0 || !var.is_finite() {
        return Err(SignificanceError::DegenerateInput("differences have zero variance"));
    }
    let t = mean / (var / n).sqrt();
    let dist = StudentsT::new(0.0, 1.0, n - 1.0).expect("n >= 2 gives positive degrees of freedom");
    Ok(dist.sf(t))
}

/// Average ranks (1-based) of `values`, plus the sizes of tie groups.
fn average_ranks(values: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let mut ranks = vec![0.0; values.len()];
    let mut ties = Vec::new();
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && values[idx[end]] == values[idx[start]] {
            end += 1;
        }
        let avg = (start + 1 + end) as f64 / 2.0;
        for &i in &idx[start..end] {
            ranks[i] = avg;
        }
        if end - start > 1 {
            ties.push(end - start);
        }
        start = end;
    }
    (ranks, ties)
}

/// P(W+ >= observed) under the exact null, given doubled (integer) ranks.
///
/// Enumerates sign assignments by dynamic programming over rank sums, which
/// stays exact when ties produce half-integer midranks.
pub fn wilcoxon_exact_sf(doubled_ranks: &[u64], observed_doubled: u64) -> f64 {
    let total: u64 = doubled_ranks.iter().sum();
    let mut counts = vec![0f64; total as usize + 1];
    counts[0] = 1.0;
    let mut reach = 0usize;
    for &r in doubled_ranks {
        let r = r as usize;
        for s in (0..=reach).rev() {
            if counts[s] != 0.0 {
                counts[s + r] += counts[s];
            }
        }
        reach += r;
    }
    let all: f64 = counts.iter().sum();
    let tail: f64 = counts.iter().skip(observed_doubled as usize).sum();
    tail / all
}

/// Wilcoxon signed-rank test, one-sided upper tail. Zero differences are
/// dropped; exact for up to [`EXACT_WILCOXON_MAX_N`] pairs, otherwise the
/// tie-corrected normal approximation with continuity correction.
pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64]) -> Result<f64, SignificanceError> {
    let d: Vec<f64> = differences(a, b)?.into_iter().filter(|x| *x != 0.0).collect();
    if d.is_empty() {
        return Err(SignificanceError::DegenerateInput("all differences are zero"));
    }
    let abs: Vec<f64> = d.iter().map(|x| x.abs()).collect();
    let (ranks, ties) = average_ranks(&abs);
    let w_plus: f64 = d.iter().zip(&ranks).filter(|(x, _)| **x > 0.0).map(|(_, r)| r).sum();
    let n = d.len();
    if n <= EXACT_WILCOXON_MAX_N {
        let doubled: Vec<u64> = ranks.iter().map(|r| (r * 2.0).round() as u64).collect();
        return Ok(wilcoxon_exact_sf(&doubled, (w_plus * 2.0).round() as u64));
    }
    let nf = n as f64;
    let mean = nf * (nf + 1.0) / 4.0;
    let tie_term: f64 = ties.iter().map(|&t| (t as f64).powi(3) - t as f64).sum::<f64>() / 2.0;
    let sd = ((nf * (nf + 1.0) * (2.0 * nf + 1.0) - tie_term) / 24.0).sqrt();
    let z = (w_plus - mean - 0.5) / sd;
    Ok(Normal::new(0.0, 1.0).expect("standard normal").sf(z))
}
