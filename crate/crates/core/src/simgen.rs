//! Seeded synthetic data generators.
//!
//! Two schemes: a low-rank Gaussian table with MCAR and MAR missingness on
//! its first column (the missing-value study), and a zero-inflated count
//! table with a shared factor structure driving both the zero gate and the
//! non-zero counts (a stand-in for proprietary defect-count data, matched
//! to its reported marginals: per-column zero rates spanning a wide range
//! and long-tailed non-zero values).
//!
//! Every generator is a pure function of its seed; the RNG is ChaCha8,
//! recorded in output manifests as `chacha8`.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};

use crate::error::{Error, Result};

/// Name of the generator recorded in manifests.
pub const RNG_NAME: &str = "chacha8";

/// MCAR selection probability 1 / (1 + exp(1.7)).
pub fn mcar_probability() -> f64 {
    1.0 / (1.0 + 1.7f64.exp())
}

/// One simulated missing-value dataset: the complete low-rank Gaussian
/// table plus MCAR and MAR masks on column 1 with matched missing rates.
#[derive(Debug, Clone)]
pub struct MarDatasetBundle {
    pub complete: Array2<f64>,
    pub truth_w: Array2<f64>,
    pub truth_mu: Vec<f64>,
    pub truth_sigma: Vec<f64>,
    pub mcar_mask: Vec<bool>,
    pub mar_mask: Vec<bool>,
    pub alpha: f64,
    pub seed: u64,
}

impl MarDatasetBundle {
    pub fn n(&self) -> usize {
        self.complete.nrows()
    }

    pub fn mcar_count(&self) -> usize {
        self.mcar_mask.iter().filter(|&&m| m).count()
    }

    pub fn mar_count(&self) -> usize {
        self.mar_mask.iter().filter(|&&m| m).count()
    }
}

/// Draws one bundle: z_i ~ N(0, I_k), e_i ~ N(0, diag(sigma^2)) with each
/// variance uniform on (0.9, 1.1), mu = (1, ..., p), W standard normal, and
/// a_i = W z_i + mu + e_i. Column 1 goes missing with probability
/// 1/(1+exp(1.7)) under MCAR and 1/(1+exp(alpha + a_i2 + a_i3)) under MAR,
/// with alpha calibrated to the realized MCAR rate. The MAR mask is redrawn
/// until its count lands within 0.5% of the MCAR count, so the two
/// empirical rates always agree within the 0.01 tolerance.
pub fn simulate_mar_dataset(seed: u64, n: usize, p: usize, k_true: usize) -> MarDatasetBundle {
    assert!(p >= 3, "the MAR scheme needs at least 3 columns");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let truth_sigma: Vec<f64> = (0..p).map(|_| rng.random_range(0.9..1.1)).collect();
    let truth_mu: Vec<f64> = (1..=p).map(|j| j as f64).collect();
    let truth_w = Array2::from_shape_fn((p, k_true), |_| {
        let v: f64 = StandardNormal.sample(&mut rng);
        v
    });

    let mut complete = Array2::<f64>::zeros((n, p));
    for i in 0..n {
        let z: Vec<f64> = (0..k_true)
            .map(|_| {
                let v: f64 = StandardNormal.sample(&mut rng);
                v
            })
            .collect();
        for j in 0..p {
            let e: f64 = StandardNormal.sample(&mut rng);
            let wz: f64 = (0..k_true).map(|l| truth_w[(j, l)] * z[l]).sum();
            complete[(i, j)] = wz + truth_mu[j] + truth_sigma[j].sqrt() * e;
        }
    }

    let p0 = mcar_probability();
    let mcar_mask: Vec<bool> = (0..n).map(|_| rng.random::<f64>() < p0).collect();
    let mcar_count = mcar_mask.iter().filter(|&&m| m).count();

    let s: Vec<f64> = (0..n)
        .map(|i| complete[(i, 1)] + complete[(i, 2)])
        .collect();
    let target = mcar_count as f64 / n as f64;
    let alpha = calibrate_alpha(&s, target).expect("target rate lies in (0,1)");

    let probs: Vec<f64> = s.iter().map(|&si| crate::loss::sigmoid(-(alpha + si))).collect();
    let tolerance = ((0.005 * n as f64).round() as usize).max(1);
    let mut best_mask: Option<(usize, Vec<bool>)> = None;
    for _ in 0..1000 {
        let mask: Vec<bool> = probs.iter().map(|&pi| rng.random::<f64>() < pi).collect();
        let count = mask.iter().filter(|&&m| m).count();
        let gap = count.abs_diff(mcar_count);
        if best_mask.as_ref().map_or(true, |(g, _)| gap < *g) {
            best_mask = Some((gap, mask));
        }
        if gap <= tolerance {
            break;
        }
    }
    let mar_mask = best_mask.unwrap().1;

    MarDatasetBundle {
        complete,
        truth_w,
        truth_mu,
        truth_sigma,
        mcar_mask,
        mar_mask,
        alpha,
        seed,
    }
}

/// Solves for alpha such that the mean of 1/(1+exp(alpha + s_i)) equals
/// `target_rate`, by bisection on the monotone-decreasing expectation.
pub fn calibrate_alpha(s: &[f64], target_rate: f64) -> Result<f64> {
    if !(target_rate > 0.0 && target_rate < 1.0) {
        return Err(Error::config(format!(
            "target rate must lie in (0, 1), got {target_rate}"
        )));
    }
    if s.is_empty() {
        return Err(Error::config("calibrate_alpha needs at least one value"));
    }
    let rate = |alpha: f64| -> f64 {
        s.iter()
            .map(|&si| crate::loss::sigmoid(-(alpha + si)))
            .sum::<f64>()
            / s.len() as f64
    };
    let s_max = s.iter().cloned().fold(f64::MIN, f64::max);
    let s_min = s.iter().cloned().fold(f64::MAX, f64::min);
    let mut lo = -s_max - 60.0; // rate(lo) ~ 1
    let mut hi = -s_min + 60.0; // rate(hi) ~ 0
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let r = rate(mid);
        if (r - target_rate).abs() <= 1e-9 {
            return Ok(mid);
        }
        if r > target_rate {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-13 * hi.abs().max(1.0) {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Zero-inflated count table. Entry (i, j) is zero when a Bernoulli gate
/// fires (its logit is beta_j + u_i . vb_j with beta_j calibrated so the
/// expected zero rate equals `zero_rates[j]`), else a 1-truncated Poisson
/// draw at rate mean_scale * exp(u_i . vg_j). Both the gate and the counts
/// ride on the same latent factors u_i, so the zero pattern is low-rank
/// structured.
pub fn simulate_zero_inflated(
    seed: u64,
    n: usize,
    p: usize,
    k_true: usize,
    zero_rates: &[f64],
    mean_scale: f64,
) -> Result<Array2<f64>> {
    if zero_rates.len() != p {
        return Err(Error::config("one zero rate per column required"));
    }
    if zero_rates.iter().any(|&r| !(0.0..1.0).contains(&r)) {
        return Err(Error::config("zero rates must lie in [0, 1)"));
    }
    if !(mean_scale > 0.0) {
        return Err(Error::config("mean_scale must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u = Array2::from_shape_fn((n, k_true), |_| {
        let v: f64 = StandardNormal.sample(&mut rng);
        v
    });
    let vb = Array2::from_shape_fn((p, k_true), |_| {
        let v: f64 = StandardNormal.sample(&mut rng);
        v
    });
    let vg = Array2::from_shape_fn((p, k_true), |_| {
        let v: f64 = StandardNormal.sample(&mut rng);
        v
    });

    // Per-column gate intercepts matching the requested zero rates.
    let mut beta = vec![f64::NEG_INFINITY; p];
    for j in 0..p {
        if zero_rates[j] > 0.0 {
            let t: Vec<f64> = (0..n)
                .map(|i| -(0..k_true).map(|l| u[(i, l)] * vb[(j, l)]).sum::<f64>())
                .collect();
            beta[j] = -calibrate_alpha(&t, zero_rates[j])?;
        }
    }

    let log_scale = mean_scale.ln();
    let mut counts = Array2::<f64>::zeros((n, p));
    for i in 0..n {
        for j in 0..p {
            let gate = if beta[j].is_finite() {
                let logit = beta[j] + (0..k_true).map(|l| u[(i, l)] * vb[(j, l)]).sum::<f64>();
                rng.random::<f64>() < crate::loss::sigmoid(logit)
            } else {
                false
            };
            if gate {
                continue;
            }
            let log_rate = log_scale + (0..k_true).map(|l| u[(i, l)] * vg[(j, l)]).sum::<f64>();
            let rate = log_rate.clamp(-30.0, 9.0).exp();
            counts[(i, j)] = truncated_poisson_draw(&mut rng, rate);
        }
    }
    Ok(counts)
}

/// Draws from the Poisson law conditioned on a positive outcome.
fn truncated_poisson_draw(rng: &mut ChaCha8Rng, rate: f64) -> f64 {
    if rate > 30.0 {
        // P(0) < 1e-13: plain Poisson, bumping an (essentially impossible)
        // zero up to the truncation floor.
        let draw: f64 = Poisson::new(rate).expect("positive rate").sample(rng);
        return draw.max(1.0);
    }
    // Inverse-CDF walk over k = 1, 2, ... conditioned on k >= 1.
    let u: f64 = rng.random();
    let p0 = (-rate).exp();
    let mut pmf = rate * p0 / (1.0 - p0);
    let mut cdf = pmf;
    let mut k = 1.0f64;
    while cdf < u && k < 1000.0 {
        k += 1.0;
        pmf *= rate / k;
        cdf += pmf;
    }
    k
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mcar_probability_value() {
        assert!((mcar_probability() - 0.15446526508353467).abs() < 1e-12);
    }

    #[test]
    fn bundles_are_deterministic() {
        let a = simulate_mar_dataset(7, 400, 10, 4);
        let b = simulate_mar_dataset(7, 400, 10, 4);
        assert_eq!(a.complete, b.complete);
        assert_eq!(a.mcar_mask, b.mcar_mask);
        assert_eq!(a.mar_mask, b.mar_mask);
        assert_eq!(a.alpha, b.alpha);
        let c = simulate_mar_dataset(8, 400, 10, 4);
        assert_ne!(a.complete, c.complete);
    }

    #[test]
    fn masks_have_matching_rates() {
        for seed in 0..10 {
            let b = simulate_mar_dataset(seed, 5000, 10, 4);
            let mcar = b.mcar_count() as f64 / b.n() as f64;
            let mar = b.mar_count() as f64 / b.n() as f64;
            assert!((mcar - mar).abs() < 0.01, "seed {seed}: {mcar} vs {mar}");
            // Both near the nominal 0.1545 rate.
            assert!((mcar - mcar_probability()).abs() < 0.03);
        }
    }

    fn point_biserial(mask: &[bool], s: &[f64]) -> f64 {
        let n = mask.len() as f64;
        let mean_m = mask.iter().filter(|&&m| m).count() as f64 / n;
        let mean_s = s.iter().sum::<f64>() / n;
        let mut cov = 0.0;
        let mut var_m = 0.0;
        let mut var_s = 0.0;
        for (mi, si) in mask.iter().zip(s) {
            let m = if *mi { 1.0 } else { 0.0 };
            cov += (m - mean_m) * (si - mean_s);
            var_m += (m - mean_m) * (m - mean_m);
            var_s += (si - mean_s) * (si - mean_s);
        }
        cov / (var_m.sqrt() * var_s.sqrt())
    }

    #[test]
    fn mar_mask_correlates_with_selection_covariates() {
        let mut mcar_abs = Vec::new();
        for seed in 0..30 {
            let b = simulate_mar_dataset(seed, 5000, 10, 4);
            let s: Vec<f64> = (0..b.n())
                .map(|i| b.complete[(i, 1)] + b.complete[(i, 2)])
                .collect();
            let r_mar = point_biserial(&b.mar_mask, &s);
            assert!(r_mar < -0.2, "seed {seed}: MAR correlation {r_mar}");
            mcar_abs.push(point_biserial(&b.mcar_mask, &s).abs());
        }
        let avg = mcar_abs.iter().sum::<f64>() / mcar_abs.len() as f64;
        assert!(avg < 0.05, "average MCAR |r| = {avg}");
    }

    /// Column-1 variance averages E||w_1||^2 + E sigma_1^2 = 4 + 1 = 5.
    #[test]
    fn column_one_variance_monte_carlo() {
        let mut vars = Vec::new();
        for seed in 100..140 {
            let b = simulate_mar_dataset(seed, 2000, 10, 4);
            let col: Vec<f64> = (0..b.n()).map(|i| b.complete[(i, 0)]).collect();
            let m = col.iter().sum::<f64>() / col.len() as f64;
            vars.push(col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (col.len() as f64 - 1.0));
        }
        let avg = vars.iter().sum::<f64>() / vars.len() as f64;
        assert!((avg - 5.0).abs() < 1.0, "average column-1 variance {avg}");
    }

    #[test]
    fn alpha_closed_forms() {
        let zeros = vec![0.0; 100];
        let a = calibrate_alpha(&zeros, 0.5).unwrap();
        assert!(a.abs() < 1e-6);
        let a = calibrate_alpha(&zeros, mcar_probability()).unwrap();
        assert!((a - 1.7).abs() < 1e-6);
    }

    #[test]
    fn alpha_achieves_target_on_random_input() {
        let mut state = 99u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64 * 6.0 - 3.0
        };
        let s: Vec<f64> = (0..5000).map(|_| next()).collect();
        for target in [0.1, 0.15, 0.3, 0.7] {
            let alpha = calibrate_alpha(&s, target).unwrap();
            let achieved = s
                .iter()
                .map(|&si| crate::loss::sigmoid(-(alpha + si)))
                .sum::<f64>()
                / s.len() as f64;
            assert!((achieved - target).abs() < 1e-6);
        }
    }

    #[test]
    fn alpha_rejects_bad_rates() {
        assert!(calibrate_alpha(&[0.0], 0.0).is_err());
        assert!(calibrate_alpha(&[0.0], 1.0).is_err());
    }

    #[test]
    fn zero_inflated_rates_and_determinism() {
        let rates = vec![0.99; 5];
        let t = simulate_zero_inflated(3, 2200, 5, 4, &rates, 2.0).unwrap();
        let zeros = t.iter().filter(|&&v| v == 0.0).count() as f64 / t.len() as f64;
        assert!(zeros >= 0.95, "zero fraction {zeros}");

        let t2 = simulate_zero_inflated(3, 2200, 5, 4, &rates, 2.0).unwrap();
        assert_eq!(t, t2);
    }

    #[test]
    fn zero_inflated_gate_disabled() {
        let rates = vec![0.0; 4];
        let t = simulate_zero_inflated(5, 500, 4, 3, &rates, 2.0).unwrap();
        assert!(t.iter().all(|&v| v >= 1.0 && v.fract() == 0.0));
    }

    #[test]
    fn zero_inflated_matches_requested_rates() {
        let rates = vec![0.05, 0.3, 0.6, 0.9];
        let t = simulate_zero_inflated(11, 4000, 4, 4, &rates, 2.0).unwrap();
        for (j, &r) in rates.iter().enumerate() {
            let z = (0..4000).filter(|&i| t[(i, j)] == 0.0).count() as f64 / 4000.0;
            assert!((z - r).abs() < 0.05, "column {j}: zero rate {z} vs {r}");
        }
    }

    #[test]
    fn zero_inflated_long_tail() {
        let rates = vec![0.5; 6];
        let t = simulate_zero_inflated(13, 2200, 6, 4, &rates, 2.0).unwrap();
        let mut nonzero: Vec<f64> = t.iter().copied().filter(|&v| v > 0.0).collect();
        nonzero.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = nonzero[nonzero.len() / 2];
        let mean = nonzero.iter().sum::<f64>() / nonzero.len() as f64;
        assert!(median <= 4.0, "median {median}");
        assert!(mean > 2.0 * median, "mean {mean} vs median {median}");
    }

    #[test]
    fn zero_inflated_rejects_bad_input() {
        assert!(simulate_zero_inflated(1, 10, 2, 2, &[0.5], 2.0).is_err());
        assert!(simulate_zero_inflated(1, 10, 2, 2, &[0.5, 1.0], 2.0).is_err());
        assert!(simulate_zero_inflated(1, 10, 2, 2, &[0.5, 0.5], 0.0).is_err());
    }
}
