//! Scalar loss catalog: quadratic, logistic, Poisson and zero-truncated
//! Poisson losses as pure functions of the linear score `z` and the target
//! `a`, together with their derivatives, per-column offsets, scales and
//! domain argmins.
//!
//! Every loss is convex in `z` and non-negative, with minimum value 0
//! attained at the score that best describes the target (for the truncated
//! Poisson this requires the normalizer computed by [`tp_normalizer`]).

use crate::error::{Error, Result};

/// Scores are clamped to this bound inside exponentials; IEEE double
/// overflows near 709. Callers that care (the solver) count clamp events
/// and surface them as conditioning warnings.
pub const Z_EXP_CLAMP: f64 = 700.0;

const TP_BRACKET_LO: f64 = 1e-8;
const TP_TOL: f64 = 1e-10;
const NEWTON_CAP: usize = 200;

/// Value domain accepted by a loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    /// Any finite real.
    Reals,
    /// Non-negative integers.
    Counts,
    /// Integers >= 1 (zero-truncated counts).
    PositiveCounts,
    /// Binary targets encoded as -1.0 / +1.0.
    Binary,
}

/// One scalar loss family. The domain is implied by the kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    Quadratic,
    Logistic,
    Poisson,
    TruncatedPoisson,
}

impl Loss {
    pub fn name(self) -> &'static str {
        match self {
            Loss::Quadratic => "quadratic",
            Loss::Logistic => "logistic",
            Loss::Poisson => "poisson",
            Loss::TruncatedPoisson => "truncated_poisson",
        }
    }

    pub fn domain(self) -> Domain {
        match self {
            Loss::Quadratic => Domain::Reals,
            Loss::Logistic => Domain::Binary,
            Loss::Poisson => Domain::Counts,
            Loss::TruncatedPoisson => Domain::PositiveCounts,
        }
    }

    /// Checks that `a` lies in the loss domain.
    pub fn validate_target(self, a: f64) -> Result<()> {
        let ok = match self.domain() {
            Domain::Reals => a.is_finite(),
            Domain::Counts => a.is_finite() && a >= 0.0 && a.fract() == 0.0,
            Domain::PositiveCounts => a.is_finite() && a >= 1.0 && a.fract() == 0.0,
            Domain::Binary => a == 1.0 || a == -1.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::DomainViolation {
                loss: self.name(),
                value: a,
            })
        }
    }

    /// Loss value L(z, a). Non-negative up to roundoff for every kind.
    pub fn eval(self, z: f64, a: f64) -> Result<f64> {
        check_finite(z)?;
        self.validate_target(a)?;
        Ok(match self {
            Loss::Quadratic => (z - a) * (z - a),
            Loss::Logistic => log1p_exp(-a * z),
            Loss::Poisson => exp_clamped(z) - a * z + xlogx(a) - a,
            Loss::TruncatedPoisson => {
                let g = tp_normalizer(a)?;
                log_expm1(exp_clamped(z)) - a * z + a * g.ln() - log_expm1(g)
            }
        })
    }

    /// First and second derivative of L with respect to z.
    /// The curvature is >= 0 for all four (convex) kinds.
    pub fn deriv(self, z: f64, a: f64) -> Result<(f64, f64)> {
        check_finite(z)?;
        self.validate_target(a)?;
        Ok(match self {
            Loss::Quadratic => (2.0 * (z - a), 2.0),
            Loss::Logistic => {
                // d/dz log(1+exp(-a z)) = -a * sigmoid(-a z); a^2 = 1.
                let s = sigmoid(-a * z);
                (-a * s, s * (1.0 - s))
            }
            Loss::Poisson => {
                let t = exp_clamped(z);
                (t - a, t)
            }
            Loss::TruncatedPoisson => {
                let t = exp_clamped(z);
                (tp_rate(t) - a, tp_rate_deriv(t))
            }
        })
    }

    /// Offset: argmin over mu of the summed loss on `values`.
    pub fn offset(self, values: &[f64]) -> Result<f64> {
        if values.is_empty() {
            return Err(Error::config("loss offset requires a non-empty column"));
        }
        for &a in values {
            self.validate_target(a)?;
        }
        match self {
            Loss::Quadratic => Ok(mean(values)),
            Loss::Logistic => {
                let pos = values.iter().filter(|&&a| a == 1.0).count();
                let neg = values.len() - pos;
                if pos == 0 || neg == 0 {
                    return Err(Error::degenerate(
                        "<unnamed>",
                        format!("logistic offset diverges: {pos} positive / {neg} negative targets"),
                    ));
                }
                Ok((pos as f64 / neg as f64).ln())
            }
            Loss::Poisson => {
                let m = mean(values);
                if m <= 0.0 {
                    return Err(Error::degenerate(
                        "<unnamed>",
                        "poisson offset undefined: all values are zero",
                    ));
                }
                Ok(m.ln())
            }
            Loss::TruncatedPoisson => tp_offset(values),
        }
    }

    /// Scale: sigma^2 = sum_i L(offset, a_i) / (n - 1). Dividing each loss
    /// term by this makes the column's offset-only loss equal exactly n - 1.
    pub fn scale(self, offset: f64, values: &[f64]) -> Result<f64> {
        if values.len() < 2 {
            return Err(Error::config("loss scale requires n >= 2 values"));
        }
        let mut total = 0.0;
        for &a in values {
            total += self.eval(offset, a)?;
        }
        let sigma2 = total / (values.len() as f64 - 1.0);
        if sigma2 < 1e-12 {
            return Err(Error::degenerate(
                "<unnamed>",
                "zero loss scale (constant column)",
            ));
        }
        Ok(sigma2)
    }

    /// Domain element minimizing L(z, .), optionally excluding one value.
    /// For continuous domains the exclusion has measure zero and is ignored.
    pub fn argmin(self, z: f64, exclude: Option<f64>) -> Result<f64> {
        check_finite(z)?;
        match self {
            Loss::Quadratic => Ok(z),
            Loss::Logistic => {
                let best = if z >= 0.0 { 1.0 } else { -1.0 };
                match exclude {
                    Some(e) if e == best => Ok(-best),
                    _ => Ok(best),
                }
            }
            Loss::Poisson | Loss::TruncatedPoisson => {
                // Convex in a; the continuous minimizer is exp(z) for the
                // plain Poisson and rate(exp(z)) for the truncated one, so
                // the integer argmin is among its floor/ceil neighbors.
                let t = exp_clamped(z);
                let cont = match self {
                    Loss::Poisson => t,
                    _ => tp_rate(t),
                };
                let lo = match self.domain() {
                    Domain::PositiveCounts => 1.0,
                    _ => {
                        if exclude == Some(0.0) {
                            1.0
                        } else {
                            0.0
                        }
                    }
                };
                let base = cont.floor().max(lo);
                let mut best = f64::NAN;
                let mut best_loss = f64::INFINITY;
                for cand in [base - 1.0, base, base + 1.0, base + 2.0] {
                    if cand < lo || exclude == Some(cand) {
                        continue;
                    }
                    let l = self.eval(z, cand)?;
                    if l < best_loss {
                        best_loss = l;
                        best = cand;
                    }
                }
                Ok(best)
            }
        }
    }
}

/// Numerically stable sigmoid.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// log(1 + exp(x)) without overflow: max(x, 0) + log1p(exp(-|x|)).
pub fn log1p_exp(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// log(exp(t) - 1) for t > 0, stable for both tiny and large t.
fn log_expm1(t: f64) -> f64 {
    if t < 0.5 {
        t.exp_m1().ln()
    } else if t < 36.0 {
        t + (-(-t).exp()).ln_1p()
    } else {
        // exp(-t) below 2^-52: the correction vanishes in double precision.
        t
    }
}

fn exp_clamped(z: f64) -> f64 {
    z.min(Z_EXP_CLAMP).exp()
}

/// a*log(a) with the limit convention 0*log(0) = 0.
fn xlogx(a: f64) -> f64 {
    if a > 0.0 {
        a * a.ln()
    } else {
        0.0
    }
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn check_finite(z: f64) -> Result<()> {
    if z.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite(format!("score z = {z}")))
    }
}

/// Mean of the zero-truncated Poisson at rate t: t / (1 - exp(-t)).
/// Monotone increasing, limit 1 as t -> 0.
fn tp_rate(t: f64) -> f64 {
    if t == 0.0 {
        1.0
    } else {
        t / -(-t).exp_m1()
    }
}

/// d/dz of tp_rate(exp(z)) evaluated via t = exp(z): t * d(tp_rate)/dt.
fn tp_rate_deriv(t: f64) -> f64 {
    if t < 1e-3 {
        // Series of t * d/dt [t / (1 - e^-t)] around 0.
        t * (0.5 + t / 6.0)
    } else {
        let em = -(-t).exp_m1(); // 1 - exp(-t)
        let numer = em - t * (1.0 - em);
        (t * numer / (em * em)).max(0.0)
    }
}

/// Solves the zero-truncated Poisson normalizer g(a): the positive root of
/// a / c = exp(c) / (exp(c) - 1), by safeguarded Newton with bisection
/// fallback on the bracket (1e-8, a + 10).
///
/// For a = 1 the root degenerates to 0+ and the bracket floor is returned;
/// the induced normalizing constant differs from the supremum by under 1e-8.
pub fn tp_normalizer(a: f64) -> Result<f64> {
    Loss::TruncatedPoisson.validate_target(a)?;
    solve_tp_root(a)
}

/// Root of tp_rate(c) = target over c in (1e-8, target + 10).
/// `target` need not be an integer; the truncated-Poisson offset reuses this
/// with the sample mean.
fn solve_tp_root(target: f64) -> Result<f64> {
    let mut lo = TP_BRACKET_LO;
    let mut hi = target + 10.0;
    if tp_rate(lo) - target >= 0.0 {
        return Ok(lo);
    }
    let tol = TP_TOL * target.max(1.0);
    let mut c = target.clamp(lo, hi);
    for _ in 0..NEWTON_CAP {
        let r = tp_rate(c) - target;
        if r.abs() <= tol {
            return Ok(c);
        }
        if r > 0.0 {
            hi = c;
        } else {
            lo = c;
        }
        let d = tp_rate_deriv(c) / c; // d(tp_rate)/dc
        let mut next = c - r / d;
        if !next.is_finite() || next <= lo || next >= hi {
            next = 0.5 * (lo + hi);
        }
        if hi - lo < 1e-15 * hi.max(1.0) {
            return Ok(0.5 * (lo + hi));
        }
        c = next;
    }
    Err(Error::numeric(format!(
        "truncated-poisson normalizer did not converge for target {target}"
    )))
}

/// Truncated-Poisson offset: argmin over mu of the summed loss. The total
/// gradient n*tp_rate(exp(mu)) - sum(a) is monotone in mu, so this is the
/// same root problem as the normalizer at the sample mean.
fn tp_offset(values: &[f64]) -> Result<f64> {
    let m = mean(values);
    Ok(solve_tp_root(m)?.ln())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const ALL: [Loss; 4] = [
        Loss::Quadratic,
        Loss::Logistic,
        Loss::Poisson,
        Loss::TruncatedPoisson,
    ];

    fn sample_target(loss: Loss, u: f64) -> f64 {
        // u in [0,1) mapped into the loss domain.
        match loss.domain() {
            Domain::Reals => 20.0 * u - 10.0,
            Domain::Counts => (u * 30.0).floor(),
            Domain::PositiveCounts => 1.0 + (u * 29.0).floor(),
            Domain::Binary => {
                if u < 0.5 {
                    -1.0
                } else {
                    1.0
                }
            }
        }
    }

    #[test]
    fn eval_known_values() {
        assert!((Loss::Quadratic.eval(2.0, 3.0).unwrap() - 1.0).abs() < 1e-12);
        assert!((Loss::Logistic.eval(0.0, 1.0).unwrap() - 2f64.ln()).abs() < 1e-12);
        assert!(Loss::Poisson.eval(2f64.ln(), 2.0).unwrap().abs() < 1e-12);
        // exp(0) - 2*0 + 2 ln 2 - 2 = 2 ln 2 - 1
        let expect = 2.0 * 2f64.ln() - 1.0;
        assert!((Loss::Poisson.eval(0.0, 2.0).unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn eval_rejects_bad_inputs() {
        assert!(Loss::Poisson.eval(0.0, -1.0).is_err());
        assert!(Loss::Poisson.eval(0.0, 1.5).is_err());
        assert!(Loss::TruncatedPoisson.eval(0.0, 0.0).is_err());
        assert!(Loss::Logistic.eval(0.0, 0.5).is_err());
        assert!(Loss::Quadratic.eval(f64::NAN, 1.0).is_err());
        assert!(Loss::Quadratic.eval(f64::INFINITY, 1.0).is_err());
    }

    #[test]
    fn deriv_known_values() {
        let (g, h) = Loss::Quadratic.deriv(2.0, 3.0).unwrap();
        assert_eq!((g, h), (-2.0, 2.0));
        let (g, h) = Loss::Logistic.deriv(0.0, 1.0).unwrap();
        assert!((g + 0.5).abs() < 1e-12);
        assert!((h - 0.25).abs() < 1e-12);
        let (g, h) = Loss::Poisson.deriv(0.0, 2.0).unwrap();
        assert!((g + 1.0).abs() < 1e-12);
        assert!((h - 1.0).abs() < 1e-12);
    }

    /// Gradient against the central difference of eval, and curvature
    /// against the central difference of the (verified) gradient. The second
    /// difference of eval itself loses too many digits at h = 1e-5 to check
    /// a 1e-6 relative tolerance.
    #[test]
    fn deriv_matches_finite_differences() {
        let h = 1e-5;
        let mut checked = 0;
        for loss in ALL {
            for iz in 0..40 {
                let z = -3.0 + 6.5 * (iz as f64) / 39.0;
                for ia in 0..10 {
                    let a = sample_target(loss, (ia as f64 + 0.3) / 10.0);
                    let (g, c) = loss.deriv(z, a).unwrap();
                    let fd_g = (loss.eval(z + h, a).unwrap() - loss.eval(z - h, a).unwrap())
                        / (2.0 * h);
                    let fd_c = (loss.deriv(z + h, a).unwrap().0
                        - loss.deriv(z - h, a).unwrap().0)
                        / (2.0 * h);
                    let gtol = 1e-6 * g.abs().max(1e-4);
                    let ctol = 1e-6 * c.abs().max(1e-4);
                    assert!(
                        (g - fd_g).abs() < gtol,
                        "{} grad mismatch at z={z} a={a}: {g} vs {fd_g}",
                        loss.name()
                    );
                    assert!(
                        (c - fd_c).abs() < ctol,
                        "{} curv mismatch at z={z} a={a}: {c} vs {fd_c}",
                        loss.name()
                    );
                    assert!(c >= 0.0);
                    checked += 1;
                }
            }
        }
        assert!(checked > 1000);
    }

    #[test]
    fn offset_known_values() {
        let mut col = vec![1.0; 60];
        col.extend(vec![-1.0; 40]);
        let off = Loss::Logistic.offset(&col).unwrap();
        assert!((off - 1.5f64.ln()).abs() < 1e-12);

        assert!((Loss::Quadratic.offset(&[1.0, 2.0, 3.0]).unwrap() - 2.0).abs() < 1e-12);
        assert!((Loss::Poisson.offset(&[1.0, 2.0, 3.0]).unwrap() - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn offset_degenerate_columns() {
        assert!(Loss::Logistic.offset(&[1.0, 1.0, 1.0]).is_err());
        assert!(Loss::Poisson.offset(&[0.0, 0.0]).is_err());
        assert!(Loss::Quadratic.offset(&[]).is_err());
    }

    /// Offsets minimize: nudging by +-1e-3 never reduces the summed loss.
    #[test]
    fn offset_is_minimizer() {
        let cases: Vec<(Loss, Vec<f64>)> = vec![
            (Loss::Quadratic, vec![0.5, -2.0, 3.25, 7.0, 1.0]),
            (
                Loss::Logistic,
                vec![1.0, 1.0, 1.0, -1.0, -1.0, 1.0, -1.0, 1.0],
            ),
            (Loss::Poisson, vec![0.0, 1.0, 4.0, 2.0, 9.0, 0.0]),
            (Loss::TruncatedPoisson, vec![1.0, 2.0, 5.0, 1.0, 3.0]),
        ];
        for (loss, values) in cases {
            let mu = loss.offset(&values).unwrap();
            let total = |m: f64| -> f64 { values.iter().map(|&a| loss.eval(m, a).unwrap()).sum() };
            let at = total(mu);
            assert!(at <= total(mu + 1e-3) + 1e-9, "{}", loss.name());
            assert!(at <= total(mu - 1e-3) + 1e-9, "{}", loss.name());
        }
    }

    #[test]
    fn scale_known_values() {
        let s = Loss::Quadratic.scale(2.0, &[1.0, 2.0, 3.0]).unwrap();
        assert!((s - 1.0).abs() < 1e-12);
        assert!(Loss::Quadratic.scale(5.0, &[5.0, 5.0, 5.0, 5.0]).is_err());
    }

    /// Direct-summation oracle for the logistic scale plus the scaled-column
    /// normalization identity sum L / sigma^2 = n - 1.
    #[test]
    fn scale_logistic_oracle() {
        let mut col = vec![1.0; 60];
        col.extend(vec![-1.0; 40]);
        let off = 1.5f64.ln();
        let expect: f64 = col
            .iter()
            .map(|&a| (1.0 + (-a * off).exp()).ln())
            .sum::<f64>()
            / 99.0;
        let s = Loss::Logistic.scale(off, &col).unwrap();
        assert!((s - expect).abs() < 1e-12);
        let scaled_total: f64 = col
            .iter()
            .map(|&a| Loss::Logistic.eval(off, a).unwrap() / s)
            .sum();
        assert!((scaled_total - 99.0).abs() < 1e-9);
    }

    #[test]
    fn scaled_offset_loss_is_n_minus_1_for_all_kinds() {
        let cases: Vec<(Loss, Vec<f64>)> = vec![
            (Loss::Quadratic, vec![0.5, -2.0, 3.25, 7.0, 1.0]),
            (Loss::Logistic, vec![1.0, 1.0, -1.0, -1.0, 1.0, -1.0]),
            (Loss::Poisson, vec![0.0, 1.0, 4.0, 2.0, 9.0, 0.0]),
            (Loss::TruncatedPoisson, vec![1.0, 2.0, 5.0, 1.0, 3.0, 8.0]),
        ];
        for (loss, values) in cases {
            let mu = loss.offset(&values).unwrap();
            let s2 = loss.scale(mu, &values).unwrap();
            let total: f64 = values.iter().map(|&a| loss.eval(mu, a).unwrap() / s2).sum();
            let n1 = values.len() as f64 - 1.0;
            assert!((total - n1).abs() < 1e-9, "{}: {total}", loss.name());
        }
    }

    #[test]
    fn argmin_known_values() {
        assert_eq!(Loss::Quadratic.argmin(3.7, None).unwrap(), 3.7);
        // Brute force over counts 1..=10 for z = ln 2.4 gives 2.
        let z = 2.4f64.ln();
        let brute = (1..=10)
            .map(|a| (a, Loss::Poisson.eval(z, a as f64).unwrap()))
            .min_by(|x, y| x.1.partial_cmp(&y.1).unwrap())
            .unwrap()
            .0;
        assert_eq!(brute, 2);
        assert_eq!(Loss::Poisson.argmin(z, Some(0.0)).unwrap(), 2.0);
        assert_eq!(Loss::Poisson.argmin(-5.0, Some(0.0)).unwrap(), 1.0);
    }

    #[test]
    fn argmin_agrees_with_brute_force() {
        for iz in 0..200 {
            let z = -3.0 + 9.0 * (iz as f64) / 199.0;
            for exclude in [None, Some(0.0)] {
                let got = Loss::Poisson.argmin(z, exclude).unwrap();
                let lo = if exclude == Some(0.0) { 1 } else { 0 };
                let brute = (lo..=1000u32)
                    .map(|a| (a as f64, Loss::Poisson.eval(z, a as f64).unwrap()))
                    .min_by(|x, y| x.1.partial_cmp(&y.1).unwrap())
                    .unwrap();
                let got_loss = Loss::Poisson.eval(z, got).unwrap();
                assert!(
                    got_loss <= brute.1 + 1e-12,
                    "z={z} exclude={exclude:?}: argmin {got} vs brute {}",
                    brute.0
                );
            }
        }
    }

    #[test]
    fn tp_argmin_agrees_with_brute_force() {
        for iz in 0..60 {
            let z = -2.0 + 7.0 * (iz as f64) / 59.0;
            let got = Loss::TruncatedPoisson.argmin(z, None).unwrap();
            let brute = (1..=1000u32)
                .map(|a| (a as f64, Loss::TruncatedPoisson.eval(z, a as f64).unwrap()))
                .min_by(|x, y| x.1.partial_cmp(&y.1).unwrap())
                .unwrap();
            let got_loss = Loss::TruncatedPoisson.eval(z, got).unwrap();
            assert!(got_loss <= brute.1 + 1e-10, "z={z}: {got} vs {}", brute.0);
        }
    }

    /// Bisection oracle on (1e-8, 50) for the normalizer residual
    /// a/c - exp(c)/(exp(c)-1), following the convention that a root at or
    /// below the bracket floor returns the floor.
    fn bisect_normalizer(a: f64) -> f64 {
        let f = |c: f64| tp_rate(c) - a;
        let (mut lo, mut hi) = (1e-8, 50.0);
        if f(lo) >= 0.0 {
            return lo;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
            if hi - lo < 1e-10 {
                break;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn tp_normalizer_matches_bisection_oracle() {
        for a in [1.0, 2.0, 3.0, 5.0, 10.0, 17.0, 30.0] {
            let got = tp_normalizer(a).unwrap();
            let want = bisect_normalizer(a);
            assert!(
                (got - want).abs() < 1e-8 * want.max(1.0),
                "a={a}: {got} vs {want}"
            );
        }
    }

    #[test]
    fn tp_normalizer_large_a_approaches_a() {
        let g = tp_normalizer(100.0).unwrap();
        assert!((g - 100.0).abs() / 100.0 < 1e-6);
    }

    #[test]
    fn tp_normalizer_rejects_zero() {
        assert!(tp_normalizer(0.0).is_err());
    }

    /// Plugging g(a) into the loss makes the minimum value 0 at z = ln g(a).
    #[test]
    fn tp_loss_zero_at_minimizer() {
        for a in [2.0, 3.0, 7.0, 25.0] {
            let g = tp_normalizer(a).unwrap();
            let at_min = Loss::TruncatedPoisson.eval(g.ln(), a).unwrap();
            assert!(at_min.abs() < 1e-9, "a={a}: {at_min}");
        }
    }

    /// The truncated and ordinary Poisson losses converge: the gap at
    /// a = 50, z = ln 50 is below 1e-6 of the gap at a = 1, z = 0.
    #[test]
    fn tp_converges_to_poisson() {
        let gap = |z: f64, a: f64| {
            (Loss::TruncatedPoisson.eval(z, a).unwrap() - Loss::Poisson.eval(z, a).unwrap()).abs()
        };
        let small = gap(50f64.ln(), 50.0);
        let large = gap(0.0, 1.0);
        assert!(large > 0.1);
        assert!(small < 1e-6 * large, "gap {small} vs {large}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(400))]

        /// Non-negativity across all kinds and randomized (z, a).
        #[test]
        fn prop_nonnegative(kind in 0usize..4, z in -6.0..6.5f64, u in 0.0..1.0f64) {
            let loss = ALL[kind];
            let a = sample_target(loss, u);
            let v = loss.eval(z, a).unwrap();
            prop_assert!(v >= -1e-9, "{} {z} {a} -> {v}", loss.name());
        }

        /// Convexity in z.
        #[test]
        fn prop_convex_in_z(kind in 0usize..4, z1 in -5.0..5.0f64, z2 in -5.0..5.0f64,
                            t in 0.01..0.99f64, u in 0.0..1.0f64) {
            let loss = ALL[kind];
            let a = sample_target(loss, u);
            let mid = loss.eval(t * z1 + (1.0 - t) * z2, a).unwrap();
            let chord = t * loss.eval(z1, a).unwrap() + (1.0 - t) * loss.eval(z2, a).unwrap();
            prop_assert!(mid <= chord + 1e-9);
        }

        /// Scaled normalization identity on randomized columns.
        #[test]
        fn prop_scaled_offset_identity(kind in 0usize..4, seed in 0u64..5000) {
            let loss = ALL[kind];
            let n = 5 + (seed % 40) as usize;
            let mut values: Vec<f64> = (0..n)
                .map(|i| {
                    let u = ((seed
                        .wrapping_mul(6364136223846793005)
                        .wrapping_add((i as u64).wrapping_mul(1442695040888963407)))
                        % 10007) as f64
                        / 10007.0;
                    sample_target(loss, u)
                })
                .collect();
            // Force both classes / non-degenerate content.
            match loss.domain() {
                Domain::Binary => { values[0] = 1.0; values[1] = -1.0; }
                Domain::Counts => { values[0] = 1.0; values[1] = 3.0; }
                Domain::PositiveCounts => { values[0] = 1.0; values[1] = 4.0; }
                Domain::Reals => { values[0] = 0.0; values[1] = 1.0; }
            }
            let mu = loss.offset(&values).unwrap();
            let s2 = loss.scale(mu, &values).unwrap();
            let total: f64 = values.iter().map(|&a| loss.eval(mu, a).unwrap() / s2).sum();
            prop_assert!((total - (n as f64 - 1.0)).abs() < 1e-9);
        }
    }
}
