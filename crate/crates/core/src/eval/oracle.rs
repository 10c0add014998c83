use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::corrupt::{
    ast_span_mask_budgeted, ast_span_mask_free, random_token_mask, span_mask_probability, Eligibility, Rate,
};
use crate::rng::stream_rng;
use crate::tokenize::TokenSpan;

/// Largest span count the enumeration accepts.
pub const MAX_ORACLE_SPANS: usize = 20;

/// Exact distribution of the free strategy's masked count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountDistribution {
    /// `probs[c]` is P(masked count = c), for c in 0..=L.
    pub probs: Vec<f64>,
    pub mean: f64,
    pub variance: f64,
}

/// Enumerates every acceptance pattern of the spans and weights it by
/// Π pᵢ^zᵢ (1 − pᵢ)^(1 − zᵢ). Overlapping accepted spans count their
/// union once, as the free strategy masks it.
pub fn brute_force_masked_count_distribution(
    spans: &[TokenSpan],
    epsilon: f64,
    len: usize,
) -> Result<CountDistribution, EvalError> {
    if spans.len() > MAX_ORACLE_SPANS {
        return Err(EvalError::TooManySpans(spans.len()));
    }
    if let Some(s) = spans.iter().find(|s| s.start >= s.end || s.end > len) {
        return Err(EvalError::Invalid(format!(
            "span [{}, {}) does not fit length {len}",
            s.start, s.end
        )));
    }
    let p: Vec<f64> = spans
        .iter()
        .map(|s| span_mask_probability(epsilon, s.len()))
        .collect::<Result<_, _>>()
        .map_err(|e| EvalError::Invalid(e.to_string()))?;
    let mut probs = vec![0.0; len + 1];
    let mut covered = vec![false; len];
    for pattern in 0u32..(1u32 << spans.len()) {
        let mut weight = 1.0;
        covered.fill(false);
        for (i, span) in spans.iter().enumerate() {
            if pattern >> i & 1 == 1 {
                weight *= p[i];
                covered[span.range()].fill(true);
            } else {
                weight *= 1.0 - p[i];
            }
        }
        let count = covered.iter().filter(|&&c| c).count();
        probs[count] += weight;
    }
    let mean: f64 = probs.iter().enumerate().map(|(c, w)| c as f64 * w).sum();
    let variance = probs
        .iter()
        .enumerate()
        .map(|(c, w)| (c as f64 - mean).powi(2) * w)
        .sum();
    Ok(CountDistribution {
        probs,
        mean,
        variance,
    })
}

/// Kernel exercised by [`monte_carlo_check`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum McStrategy {
    Random,
    Budgeted,
    Free,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McParams {
    pub len: usize,
    pub spans: Vec<TokenSpan>,
    pub epsilon: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub trials: u64,
    pub mean_count: f64,
    pub mean_fraction: f64,
    pub std_dev: f64,
    /// Standard error of `mean_count`.
    pub std_error: f64,
    /// Exact mean from enumeration (free strategy with few spans) or ε·L.
    pub oracle_mean: f64,
    pub oracle_is_exact: bool,
    /// Exact variance of the count, when the oracle knows it.
    pub oracle_variance: Option<f64>,
    pub gap: f64,
    /// |gap| in standard errors of the mean. The error is taken from the
    /// exact variance when known, else from the sample; zero when both the
    /// gap and the error are zero.
    pub gap_in_std_errors: f64,
}

/// Seed of the `i`-th trial.
pub fn trial_seed(base: u64, i: u64) -> u64 {
    base.wrapping_add(i.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Masked count of one trial.
pub fn trial_count(strategy: McStrategy, params: &McParams, eligible: &Eligibility, seed: u64) -> usize {
    let rate = Rate::new(params.epsilon).expect("validated rate");
    let mut rng = stream_rng(seed, 3);
    let mask = match strategy {
        McStrategy::Random => random_token_mask(eligible, rate, &mut rng),
        McStrategy::Budgeted => ast_span_mask_budgeted(eligible, &params.spans, rate, &mut rng),
        McStrategy::Free => ast_span_mask_free(eligible, &params.spans, rate, &mut rng),
    };
    mask.masked_count()
}

/// Runs `trials` seeded trials (in parallel; the result does not depend on
/// the thread count) and compares the mean masked count with the oracle.
pub fn monte_carlo_check(
    strategy: McStrategy,
    trials: u64,
    params: &McParams,
) -> Result<McReport, EvalError> {
    if trials < 2 {
        return Err(EvalError::Invalid("need at least two trials".into()));
    }
    Rate::new(params.epsilon).map_err(|e| EvalError::Invalid(e.to_string()))?;
    let eligible = Eligibility::all(params.len);
    // integer sums keep the result independent of reduction order
    let (sum, sum_sq) = (0..trials)
        .into_par_iter()
        .map(|i| {
            let c = trial_count(strategy, params, &eligible, trial_seed(params.seed, i)) as u128;
            (c, c * c)
        })
        .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    let n = trials as f64;
    let mean = sum as f64 / n;
    let var = ((sum_sq as f64 - sum as f64 * mean) / (n - 1.0)).max(0.0);
    let std_error = (var / n).sqrt();
    let eps = params.epsilon;
    let len = params.len as f64;
    let (oracle_mean, oracle_variance) = match strategy {
        // no spans: the free strategy masks token-wise, so the count is binomial
        McStrategy::Free if params.spans.is_empty() => (eps * len, Some(len * eps * (1.0 - eps))),
        McStrategy::Free if params.spans.len() <= MAX_ORACLE_SPANS => {
            let d = brute_force_masked_count_distribution(&params.spans, eps, params.len)?;
            (d.mean, Some(d.variance.max(0.0)))
        }
        McStrategy::Random => (eps * len, Some(len * eps * (1.0 - eps))),
        _ => (eps * len, None),
    };
    let exact = oracle_variance.is_some();
    let reference_error = oracle_variance.map_or(std_error, |v| (v / n).sqrt());
    let gap = mean - oracle_mean;
    // enumeration sums carry rounding of a few ulps
    let gap_in_std_errors = if reference_error > 1e-12 {
        gap.abs() / reference_error
    } else if gap.abs() <= 1e-9 {
        0.0
    } else {
        f64::INFINITY
    };
    Ok(McReport {
        trials,
        mean_count: mean,
        mean_fraction: if params.len == 0 {
            0.0
        } else {
            mean / params.len as f64
        },
        std_dev: var.sqrt(),
        std_error,
        oracle_mean,
        oracle_is_exact: exact,
        oracle_variance,
        gap,
        gap_in_std_errors,
    })
}
