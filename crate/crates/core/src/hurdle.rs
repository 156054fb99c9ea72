//! Composite hurdle loss.
//!
//! A hurdle column pairs a binary loss on the indicator of the interesting
//! value `nu` with a gated loss on the non-nu values. In full mode the two
//! components receive separate embedded columns (dimension 2); in reduced
//! mode they share one. The component weights lambda1/lambda2 are solved so
//! that the offset-only column loss equals n - 1 with the binary component
//! contributing `c` times the non-nu component.

use crate::error::{Error, Result};
use crate::loss::{sigmoid, Loss};

/// The interesting value: either a domain value or the missingness event.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Nu {
    Value(f64),
    Missing,
}

impl Nu {
    pub fn as_value(&self) -> Option<f64> {
        match self {
            Nu::Value(v) => Some(*v),
            Nu::Missing => None,
        }
    }
}

impl std::fmt::Display for Nu {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Nu::Value(v) => write!(f, "{v}"),
            Nu::Missing => write!(f, "missing"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HurdleMode {
    /// Two embedded columns: one for the indicator, one for the values.
    Full,
    /// One shared embedded column.
    Reduced,
}

/// Hurdle composite loss configuration for one column.
#[derive(Debug, Clone)]
pub struct HurdleSpec {
    pub nu: Nu,
    pub binary_loss: Loss,
    pub g_loss: Loss,
    pub lambda1: f64,
    pub lambda2: f64,
    pub mode: HurdleMode,
}

impl HurdleSpec {
    /// Unweighted spec (lambda1 = lambda2 = 1) with the default logistic
    /// binary loss; weights are filled in by calibration.
    pub fn new(nu: Nu, g_loss: Loss, mode: HurdleMode) -> Self {
        HurdleSpec {
            nu,
            binary_loss: Loss::Logistic,
            g_loss,
            lambda1: 1.0,
            lambda2: 1.0,
            mode,
        }
    }

    pub fn embed_dim(&self) -> usize {
        match self.mode {
            HurdleMode::Full => 2,
            HurdleMode::Reduced => 1,
        }
    }

    fn check_z(&self, z: &[f64]) -> Result<()> {
        if z.len() != self.embed_dim() {
            return Err(Error::Dimension(format!(
                "hurdle embedding has length {}, expected {}",
                z.len(),
                self.embed_dim()
            )));
        }
        Ok(())
    }

    /// Splits an embedding into (z1, z2); reduced mode shares one score.
    fn scores(&self, z: &[f64]) -> (f64, f64) {
        match self.mode {
            HurdleMode::Full => (z[0], z[1]),
            HurdleMode::Reduced => (z[0], z[0]),
        }
    }

    /// True when the g component applies, i.e. `a` is an observed non-nu
    /// value.
    fn gate(&self, a: Option<f64>) -> bool {
        match (self.nu, a) {
            (Nu::Missing, Some(_)) => true,
            (Nu::Missing, None) => false,
            (Nu::Value(v), Some(x)) => x != v,
            (Nu::Value(_), None) => false,
        }
    }

    /// lambda1 * L_b(z1, a*) + I(a != nu) * lambda2 * L_g(z2, a).
    /// When a = nu the result does not depend on z2.
    pub fn eval(&self, z: &[f64], a: Option<f64>) -> Result<f64> {
        self.check_z(z)?;
        let (z1, z2) = self.scores(z);
        let target = self.target_checked(a)?;
        let mut total = self.lambda1 * self.binary_loss.eval(z1, target)?;
        if self.gate(a) {
            total += self.lambda2 * self.g_loss.eval(z2, a.unwrap())?;
        }
        Ok(total)
    }

    /// Per-coordinate gradient and curvature; in reduced mode the two
    /// component contributions sum into the single coordinate.
    pub fn deriv(&self, z: &[f64], a: Option<f64>) -> Result<(Vec<f64>, Vec<f64>)> {
        let dim = self.embed_dim();
        let mut grad = vec![0.0; dim];
        let mut curv = vec![0.0; dim];
        self.deriv_into(z, a, &mut grad, &mut curv)?;
        Ok((grad, curv))
    }

    /// Allocation-free form of [`HurdleSpec::deriv`] for solver inner loops.
    pub fn deriv_into(
        &self,
        z: &[f64],
        a: Option<f64>,
        grad: &mut [f64],
        curv: &mut [f64],
    ) -> Result<()> {
        self.check_z(z)?;
        let (z1, z2) = self.scores(z);
        let target = self.target_checked(a)?;
        let (bg, bc) = self.binary_loss.deriv(z1, target)?;
        let (mut gg, mut gc) = (0.0, 0.0);
        if self.gate(a) {
            let (g, c) = self.g_loss.deriv(z2, a.unwrap())?;
            gg = self.lambda2 * g;
            gc = self.lambda2 * c;
        }
        match self.mode {
            HurdleMode::Full => {
                grad[0] = self.lambda1 * bg;
                grad[1] = gg;
                curv[0] = self.lambda1 * bc;
                curv[1] = gc;
            }
            HurdleMode::Reduced => {
                grad[0] = self.lambda1 * bg + gg;
                curv[0] = self.lambda1 * bc + gc;
            }
        }
        Ok(())
    }

    /// Reconstructed value: nu when predicting nu costs less than the best
    /// non-nu value, per the binary/g loss ratio condition; ties prefer the
    /// informative non-nu value.
    pub fn reconstruct(&self, z: &[f64]) -> Result<ReconstructedCell> {
        self.check_z(z)?;
        let (z1, z2) = self.scores(z);
        let a_tilde = self.g_loss.argmin(z2, self.nu.as_value())?;
        let numer = self.lambda1 * self.binary_loss.eval(z1, -1.0)?
            + self.lambda2 * self.g_loss.eval(z2, a_tilde)?;
        let denom = self.lambda1 * self.binary_loss.eval(z1, 1.0)?;
        Ok(ReconstructedCell {
            prefers_nu: numer > denom,
            a_tilde,
        })
    }

    fn target_checked(&self, a: Option<f64>) -> Result<f64> {
        if a.is_none() && self.nu != Nu::Missing {
            return Err(Error::config(
                "missing target passed to a value-nu hurdle loss",
            ));
        }
        if let Some(x) = a {
            if !x.is_finite() {
                return Err(Error::NonFinite(format!("hurdle target {x}")));
            }
        }
        Ok(encode_indicator(a, self.nu))
    }
}

/// Outcome of the hurdle reverse mapping: whether the condition prefers nu,
/// and the best non-nu value either way (the imputation path always uses
/// `a_tilde`, even when missingness is predicted).
#[derive(Debug, Clone, Copy)]
pub struct ReconstructedCell {
    pub prefers_nu: bool,
    pub a_tilde: f64,
}

impl ReconstructedCell {
    /// Domain value under the reconstruction rule; `None` encodes nu when
    /// nu is the missingness event.
    pub fn value(&self, nu: Nu) -> Option<f64> {
        if self.prefers_nu {
            nu.as_value()
        } else {
            Some(self.a_tilde)
        }
    }
}

/// Indicator embedding a* = 2*I(a = nu) - 1, with missingness itself as the
/// nu event when nu is `Missing`.
pub fn encode_indicator(a: Option<f64>, nu: Nu) -> f64 {
    let is_nu = match (nu, a) {
        (Nu::Missing, None) => true,
        (Nu::Missing, Some(_)) => false,
        (Nu::Value(v), Some(x)) => x == v,
        (Nu::Value(_), None) => false,
    };
    if is_nu {
        1.0
    } else {
        -1.0
    }
}

/// Estimated Pr[a = nu] from the binary-component score (offset included).
pub fn nu_probability(z1: f64) -> f64 {
    sigmoid(z1)
}

/// Exact solution of the weight system: lambda1*S_b + lambda2*S_g = n - 1
/// and lambda1*S_b = c * lambda2*S_g.
pub fn solve_weight_system(s_b: f64, s_g: f64, n: usize, c: f64) -> (f64, f64) {
    let n1 = n as f64 - 1.0;
    let lambda1 = c * n1 / ((c + 1.0) * s_b);
    let lambda2 = n1 / ((c + 1.0) * s_g);
    (lambda1, lambda2)
}

/// The multiplier choice c = n_nu / (n - n_nu).
pub fn ratio_multiplier(n_nu: usize, n_non_nu: usize) -> f64 {
    n_nu as f64 / n_non_nu as f64
}

/// Solved hurdle calibration for one column.
#[derive(Debug, Clone, Copy)]
pub struct HurdleWeights {
    pub lambda1: f64,
    pub lambda2: f64,
    pub mu_b: f64,
    pub mu_g: f64,
    /// Offset-only binary loss sum at mu_b.
    pub s_b: f64,
    /// Offset-only g loss sum at mu_g over non-nu entries.
    pub s_g: f64,
    /// Number of rows the binary component spans (the normalization count).
    pub n: usize,
}

/// Computes component offsets and the exact lambda weights for one column.
///
/// `values` carries the full scope of the binary component: for a value-nu
/// column pass the observed entries; for a missing-nu column pass every row
/// (the indicator is observable even when the value is not). The g offset
/// is computed over non-nu entries only.
pub fn solve_hurdle_weights(
    values: &[Option<f64>],
    nu: Nu,
    c: f64,
    binary_loss: Loss,
    g_loss: Loss,
) -> Result<HurdleWeights> {
    if !(c > 0.0) || !c.is_finite() {
        return Err(Error::config(format!("hurdle multiplier c must be positive, got {c}")));
    }
    let n = values.len();
    let indicators: Vec<f64> = values.iter().map(|&a| encode_indicator(a, nu)).collect();
    let n_nu = indicators.iter().filter(|&&s| s == 1.0).count();
    let non_nu: Vec<f64> = values
        .iter()
        .zip(&indicators)
        .filter(|(_, &s)| s == -1.0)
        .filter_map(|(&a, _)| a)
        .collect();
    if n_nu < 2 || non_nu.len() < 2 {
        return Err(Error::degenerate(
            "<unnamed>",
            format!("hurdle column needs >= 2 nu and >= 2 non-nu entries, got {n_nu} / {}", non_nu.len()),
        ));
    }

    let mu_b = binary_loss.offset(&indicators)?;
    let mu_g = g_loss.offset(&non_nu)?;
    let mut s_b = 0.0;
    for &t in &indicators {
        s_b += binary_loss.eval(mu_b, t)?;
    }
    let mut s_g = 0.0;
    for &a in &non_nu {
        s_g += g_loss.eval(mu_g, a)?;
    }
    if s_b < 1e-12 || s_g < 1e-12 {
        return Err(Error::degenerate(
            "<unnamed>",
            format!("zero offset-only loss (S_b = {s_b}, S_g = {s_g})"),
        ));
    }
    let (lambda1, lambda2) = solve_weight_system(s_b, s_g, n, c);
    Ok(HurdleWeights {
        lambda1,
        lambda2,
        mu_b,
        mu_g,
        s_b,
        s_g,
        n,
    })
}
