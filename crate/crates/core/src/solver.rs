//! Alternating damped-Newton solver for the generalized low-rank model.
//!
//! The objective is the sum of per-entry scaled losses at scores
//! x_i * Y^(j) + mu_j over the observed set, plus quadratic regularization
//! gamma_x ||X||_F^2 + gamma_y ||Y||_F^2. One sweep updates every row of X
//! holding Y fixed, then every embedded column of Y holding X fixed; each
//! block update is a Newton step with step-halving so the objective never
//! increases. Columns flagged for the missing-at-random offset correction
//! get their g-component offset refreshed between sweeps.

use ndarray::{Array2, ArrayView1};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::hurdle::{solve_hurdle_weights, HurdleMode, HurdleSpec, Nu};
use crate::loss::Z_EXP_CLAMP;
use crate::table::{CMultiplier, ColumnModel, ColumnSpan, DataTable};

/// Curvature floor added to the block Hessian diagonal; keeps Newton
/// systems positive definite when a loss goes locally flat.
const CURVATURE_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct FitConfig {
    pub rank: usize,
    pub gamma_x: f64,
    pub gamma_y: f64,
    pub max_sweeps: usize,
    pub rel_tol: f64,
    pub seed: u64,
    /// Step-halving budget per block update.
    pub damping: usize,
    /// Independent restarts; the factorization with the best final
    /// objective wins.
    pub restarts: usize,
    /// Columns whose g-component offset is refreshed to the mean observed
    /// residual after every sweep.
    pub mar_offset_columns: Vec<String>,
}

impl FitConfig {
    pub fn new(rank: usize) -> Self {
        FitConfig {
            rank,
            gamma_x: 0.0,
            gamma_y: 0.0,
            max_sweeps: 500,
            rel_tol: 1e-6,
            seed: 0,
            damping: 20,
            restarts: 1,
            mar_offset_columns: Vec::new(),
        }
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma_x = gamma;
        self.gamma_y = gamma;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// Fitted low-rank model: X (n x k), Y (k x d), offsets mu (length d) and
/// the embedded-column layout.
#[derive(Debug, Clone)]
pub struct Factorization {
    pub x: Array2<f64>,
    pub y: Array2<f64>,
    pub mu: Vec<f64>,
    pub spans: Vec<ColumnSpan>,
}

impl Factorization {
    pub fn rank(&self) -> usize {
        self.x.ncols()
    }

    /// Score vector for cell (row, column): x_i * Y^(j) + mu_j.
    pub fn scores(&self, row: usize, span: &ColumnSpan, out: &mut [f64]) {
        let xi = self.x.row(row);
        for ell in 0..span.dim {
            let c = span.start + ell;
            out[ell] = dot(xi, self.y.column(c)) + self.mu[c];
        }
    }
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub factorization: Factorization,
    /// Objective after initialization and after every sweep; non-increasing.
    pub trace: Vec<f64>,
    pub converged: bool,
    /// Count of factor entries beyond the exp clamp seen during fitting;
    /// nonzero values signal conditioning trouble.
    pub conditioning_warnings: usize,
}

impl FitResult {
    pub fn objective(&self) -> f64 {
        *self.trace.last().unwrap()
    }
}

fn dot(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// Populates every column's offsets and scales in place: plain losses get
/// (offset, sigma^2), hurdle columns get component offsets and the exact
/// lambda weights. After calibration the offset-only model's total loss
/// equals sum_j (n_j - 1).
pub fn calibrate(table: &mut DataTable) -> Result<()> {
    for col in &mut table.columns {
        match &mut col.model {
            ColumnModel::Plain(loss) => {
                let loss = *loss;
                let observed: Vec<f64> = col.values.iter().flatten().copied().collect();
                let mu = loss.offset(&observed).map_err(|e| col.named(e))?;
                let s2 = loss.scale(mu, &observed).map_err(|e| col.named(e))?;
                col.offset = vec![mu];
                col.scale = s2;
            }
            ColumnModel::Hurdle(spec) => {
                let scope: Vec<Option<f64>> = match spec.nu {
                    Nu::Missing => col.values.clone(),
                    Nu::Value(_) => col.values.iter().filter(|v| v.is_some()).copied().collect(),
                };
                let n = scope.len();
                let n_nu = scope
                    .iter()
                    .filter(|&&a| crate::hurdle::encode_indicator(a, spec.nu) == 1.0)
                    .count();
                let c = match col.c_multiplier {
                    CMultiplier::Ratio => {
                        if n_nu == 0 || n_nu == n {
                            return Err(Error::degenerate(
                                &col.name,
                                "ratio multiplier undefined: all or no nu entries",
                            ));
                        }
                        crate::hurdle::ratio_multiplier(n_nu, n - n_nu)
                    }
                    CMultiplier::Fixed(c) => c,
                };
                let w = solve_hurdle_weights(&scope, spec.nu, c, spec.binary_loss, spec.g_loss)
                    .map_err(|e| match e {
                        Error::DegenerateColumn { reason, .. } => Error::DegenerateColumn {
                            column: col.name.clone(),
                            reason,
                        },
                        other => other,
                    })?;
                spec.lambda1 = w.lambda1;
                spec.lambda2 = w.lambda2;
                match spec.mode {
                    HurdleMode::Full => col.offset = vec![w.mu_b, w.mu_g],
                    HurdleMode::Reduced => {
                        // One shared offset: the argmin of the weighted
                        // composite, found by scalar damped Newton.
                        let spec_now = spec.clone();
                        let mu = shared_offset(&spec_now, &scope, 0.5 * (w.mu_b + w.mu_g))?;
                        col.offset = vec![mu];
                    }
                }
                col.scale = 1.0;
            }
        }
        col.calibrated = true;
    }
    Ok(())
}

/// 1-D damped Newton on the weighted composite loss for reduced-mode
/// columns.
fn shared_offset(spec: &HurdleSpec, values: &[Option<f64>], init: f64) -> Result<f64> {
    let total = |m: f64| -> Result<f64> {
        let mut acc = 0.0;
        for &a in values {
            acc += spec.eval(&[m], a)?;
        }
        Ok(acc)
    };
    let mut mu = init;
    let mut f = total(mu)?;
    let mut grad = [0.0f64];
    let mut curv = [0.0f64];
    for _ in 0..100 {
        let mut g = 0.0;
        let mut h = 0.0;
        for &a in values {
            spec.deriv_into(&[mu], a, &mut grad, &mut curv)?;
            g += grad[0];
            h += curv[0];
        }
        if g.abs() < 1e-12 * values.len() as f64 {
            break;
        }
        let mut step = g / h.max(CURVATURE_FLOOR);
        let mut accepted = false;
        for _ in 0..40 {
            let cand = mu - step;
            let fc = total(cand)?;
            if fc < f {
                mu = cand;
                f = fc;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    Ok(mu)
}

/// Data loss plus regularization at the given factorization.
pub fn objective(table: &DataTable, config: &FitConfig, fact: &Factorization) -> Result<f64> {
    let mut total = data_loss(table, fact)?;
    if config.gamma_x > 0.0 {
        total += config.gamma_x * fact.x.iter().map(|v| v * v).sum::<f64>();
    }
    if config.gamma_y > 0.0 {
        total += config.gamma_y * fact.y.iter().map(|v| v * v).sum::<f64>();
    }
    Ok(total)
}

/// Unregularized scaled data loss over the observed set.
pub fn data_loss(table: &DataTable, fact: &Factorization) -> Result<f64> {
    let mut total = 0.0;
    let mut z = [0.0f64; 2];
    for span in &fact.spans {
        let col = &table.columns[span.column];
        for i in 0..table.n_rows {
            fact.scores(i, span, &mut z[..span.dim]);
            total += col.cell_loss(i, &z[..span.dim])?;
        }
    }
    if !total.is_finite() {
        return Err(Error::numeric("non-finite objective"));
    }
    Ok(total)
}

/// Fits the low-rank model by alternating damped Newton sweeps.
pub fn fit(table: &DataTable, config: &FitConfig) -> Result<FitResult> {
    let layout = table.layout();
    let d = layout.total_dim;
    if config.rank == 0 || config.rank >= d {
        return Err(Error::config(format!(
            "rank must satisfy 1 <= k < d (k = {}, d = {d})",
            config.rank
        )));
    }
    if config.rel_tol <= 0.0 {
        return Err(Error::config("rel_tol must be positive"));
    }
    let mut best: Option<FitResult> = None;
    for restart in 0..config.restarts.max(1) {
        let result = fit_once(table, config, config.seed.wrapping_add(restart as u64))?;
        let replace = match &best {
            Some(b) => result.objective() < b.objective(),
            None => true,
        };
        if replace {
            best = Some(result);
        }
    }
    Ok(best.unwrap())
}

fn fit_once(table: &DataTable, config: &FitConfig, seed: u64) -> Result<FitResult> {
    let layout = table.layout();
    let n = table.n_rows;
    let k = config.rank;
    let d = layout.total_dim;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sd = 1.0 / (k as f64).sqrt();
    let mut x = Array2::<f64>::zeros((n, k));
    for v in x.iter_mut() {
        let s: f64 = StandardNormal.sample(&mut rng);
        *v = sd * s;
    }
    let mut y = Array2::<f64>::zeros((k, d));
    for v in y.iter_mut() {
        let s: f64 = StandardNormal.sample(&mut rng);
        *v = sd * s;
    }
    let mu: Vec<f64> = layout
        .spans
        .iter()
        .flat_map(|s| table.columns[s.column].offset.iter().copied())
        .collect();

    let mar_cols: Vec<usize> = config
        .mar_offset_columns
        .iter()
        .map(|name| table.column(name))
        .collect::<Result<_>>()?;

    let mut fact = Factorization {
        x,
        y,
        mu,
        spans: layout.spans.clone(),
    };
    let mut obj = objective(table, config, &fact)?;
    let mut trace = vec![obj];
    let mut converged = false;
    let mut warnings = 0usize;

    let mut scratch = Scratch::new(k);
    for sweep in 0..config.max_sweeps {
        update_rows(table, config, &mut fact, &mut scratch)?;
        update_columns(table, config, &mut fact, &mut scratch)?;
        for &j in &mar_cols {
            mar_refresh_index(table, &mut fact, j)?;
        }
        let new_obj = objective(table, config, &fact)
            .map_err(|_| Error::numeric(format!("objective diverged at sweep {sweep}")))?;
        warnings += clamp_count(&fact);
        trace.push(new_obj);
        if obj - new_obj <= config.rel_tol * obj.abs().max(1e-12) {
            converged = true;
            break;
        }
        obj = new_obj;
    }

    Ok(FitResult {
        factorization: fact,
        trace,
        converged,
        conditioning_warnings: warnings,
    })
}

fn clamp_count(fact: &Factorization) -> usize {
    fact.x
        .iter()
        .chain(fact.y.iter())
        .filter(|v| v.abs() > Z_EXP_CLAMP)
        .count()
}

struct Scratch {
    grad: Vec<f64>,
    hess: Vec<f64>,
    delta: Vec<f64>,
    trial: Vec<f64>,
}

impl Scratch {
    fn new(k: usize) -> Self {
        Scratch {
            grad: vec![0.0; k],
            hess: vec![0.0; k * k],
            delta: vec![0.0; k],
            trial: vec![0.0; k],
        }
    }
}

/// Local objective of one row: all its loss terms plus gamma_x ||x_i||^2.
fn row_local_objective(
    table: &DataTable,
    fact: &Factorization,
    gamma_x: f64,
    row: usize,
    xi: &[f64],
) -> Result<f64> {
    let mut total = gamma_x * xi.iter().map(|v| v * v).sum::<f64>();
    for span in &fact.spans {
        let col = &table.columns[span.column];
        for ell in 0..span.dim {
            let c = span.start + ell;
            let z = xi
                .iter()
                .zip(fact.y.column(c).iter())
                .map(|(a, b)| a * b)
                .sum::<f64>()
                + fact.mu[c];
            if let Some(l) = col.term_loss(row, ell, z)? {
                total += l;
            }
        }
    }
    Ok(total)
}

fn update_rows(
    table: &DataTable,
    config: &FitConfig,
    fact: &mut Factorization,
    s: &mut Scratch,
) -> Result<()> {
    let k = config.rank;
    for i in 0..table.n_rows {
        s.grad.iter_mut().for_each(|v| *v = 0.0);
        s.hess.iter_mut().for_each(|v| *v = 0.0);
        let xi: Vec<f64> = fact.x.row(i).iter().copied().collect();
        for span in &fact.spans {
            let col = &table.columns[span.column];
            for ell in 0..span.dim {
                let c = span.start + ell;
                let ycol = fact.y.column(c);
                let z = xi.iter().zip(ycol.iter()).map(|(a, b)| a * b).sum::<f64>() + fact.mu[c];
                if let Some((g, h)) = col.term_deriv(i, ell, z)? {
                    for (r, yr) in ycol.iter().enumerate() {
                        s.grad[r] += g * yr;
                        for (cc, yc) in ycol.iter().enumerate() {
                            s.hess[r * k + cc] += h * yr * yc;
                        }
                    }
                }
            }
        }
        for r in 0..k {
            s.grad[r] += 2.0 * config.gamma_x * xi[r];
            s.hess[r * k + r] += 2.0 * config.gamma_x + CURVATURE_FLOOR;
        }
        if !solve_spd(&mut s.hess, &s.grad, &mut s.delta) {
            // Fall back to a diagonally preconditioned gradient step.
            for r in 0..k {
                s.delta[r] = s.grad[r] / s.hess[r * k + r].max(CURVATURE_FLOOR);
            }
        }
        let f0 = row_local_objective(table, fact, config.gamma_x, i, &xi)?;
        let mut t = 1.0;
        for _ in 0..=config.damping {
            for r in 0..k {
                s.trial[r] = xi[r] - t * s.delta[r];
            }
            let f1 = row_local_objective(table, fact, config.gamma_x, i, &s.trial)?;
            if f1 <= f0 {
                for r in 0..k {
                    fact.x[(i, r)] = s.trial[r];
                }
                break;
            }
            t *= 0.5;
        }
    }
    Ok(())
}

/// Local objective of one embedded column: its loss terms over all rows
/// plus gamma_y ||y_c||^2.
fn column_local_objective(
    table: &DataTable,
    fact: &Factorization,
    gamma_y: f64,
    span: &ColumnSpan,
    ell: usize,
    ycol: &[f64],
) -> Result<f64> {
    let col = &table.columns[span.column];
    let c = span.start + ell;
    let mut total = gamma_y * ycol.iter().map(|v| v * v).sum::<f64>();
    for i in 0..table.n_rows {
        let z = fact
            .x
            .row(i)
            .iter()
            .zip(ycol.iter())
            .map(|(a, b)| a * b)
            .sum::<f64>()
            + fact.mu[c];
        if let Some(l) = col.term_loss(i, ell, z)? {
            total += l;
        }
    }
    Ok(total)
}

fn update_columns(
    table: &DataTable,
    config: &FitConfig,
    fact: &mut Factorization,
    s: &mut Scratch,
) -> Result<()> {
    let k = config.rank;
    let spans = fact.spans.clone();
    for span in &spans {
        let col = &table.columns[span.column];
        for ell in 0..span.dim {
            let c = span.start + ell;
            s.grad.iter_mut().for_each(|v| *v = 0.0);
            s.hess.iter_mut().for_each(|v| *v = 0.0);
            let ycol: Vec<f64> = fact.y.column(c).iter().copied().collect();
            for i in 0..table.n_rows {
                let xi = fact.x.row(i);
                let z = xi.iter().zip(ycol.iter()).map(|(a, b)| a * b).sum::<f64>() + fact.mu[c];
                if let Some((g, h)) = col.term_deriv(i, ell, z)? {
                    for (r, xr) in xi.iter().enumerate() {
                        s.grad[r] += g * xr;
                        for (cc, xc) in xi.iter().enumerate() {
                            s.hess[r * k + cc] += h * xr * xc;
                        }
                    }
                }
            }
            for r in 0..k {
                s.grad[r] += 2.0 * config.gamma_y * ycol[r];
                s.hess[r * k + r] += 2.0 * config.gamma_y + CURVATURE_FLOOR;
            }
            if !solve_spd(&mut s.hess, &s.grad, &mut s.delta) {
                for r in 0..k {
                    s.delta[r] = s.grad[r] / s.hess[r * k + r].max(CURVATURE_FLOOR);
                }
            }
            let f0 = column_local_objective(table, fact, config.gamma_y, span, ell, &ycol)?;
            let mut t = 1.0;
            for _ in 0..=config.damping {
                for r in 0..k {
                    s.trial[r] = ycol[r] - t * s.delta[r];
                }
                let f1 = column_local_objective(table, fact, config.gamma_y, span, ell, &s.trial)?;
                if f1 <= f0 {
                    for r in 0..k {
                        fact.y[(r, c)] = s.trial[r];
                    }
                    break;
                }
                t *= 0.5;
            }
        }
    }
    Ok(())
}

/// Replaces the g-component offset of `column` by the mean observed
/// residual (1/n_j) sum_{i in Omega} (a_ij - x_i y_g); returns the new
/// offset. This is the exact minimizer over the offset for quadratic g
/// losses, so the objective cannot increase.
pub fn mar_offset_refresh(
    table: &DataTable,
    fact: &mut Factorization,
    column: &str,
) -> Result<f64> {
    let j = table.column(column)?;
    mar_refresh_index(table, fact, j)
}

fn mar_refresh_index(table: &DataTable, fact: &mut Factorization, j: usize) -> Result<f64> {
    let col = &table.columns[j];
    let span = fact.spans[j];
    let g_dim = match &col.model {
        ColumnModel::Hurdle(h) => {
            if h.g_loss != crate::loss::Loss::Quadratic {
                return Err(Error::config(format!(
                    "MAR offset refresh requires a quadratic g loss on column {}",
                    col.name
                )));
            }
            match h.mode {
                HurdleMode::Full => span.start + 1,
                HurdleMode::Reduced => span.start,
            }
        }
        ColumnModel::Plain(crate::loss::Loss::Quadratic) => span.start,
        ColumnModel::Plain(_) => {
            return Err(Error::config(format!(
                "MAR offset refresh requires a quadratic loss on column {}",
                col.name
            )))
        }
    };
    let mut sum = 0.0;
    let mut count = 0usize;
    for i in 0..table.n_rows {
        if let Some(a) = col.values[i] {
            let z = dot(fact.x.row(i), fact.y.column(g_dim));
            sum += a - z;
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::degenerate(&col.name, "no observed entries to refresh"));
    }
    let new_offset = sum / count as f64;
    fact.mu[g_dim] = new_offset;
    Ok(new_offset)
}

/// What `reconstruct_table` should produce for hurdle columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReconstructMode {
    /// The loss-argmin rule: nu when the binary component prefers it.
    /// Cells mapped to nu = missing come back as NaN.
    Rule,
    /// Always the best non-nu value; the variant used for missing-value
    /// imputation.
    Impute,
}

/// Reconstructs the full value table from a fitted factorization.
pub fn reconstruct_table(
    table: &DataTable,
    fact: &Factorization,
    mode: ReconstructMode,
) -> Result<Array2<f64>> {
    let mut out = Array2::<f64>::zeros((table.n_rows, table.columns.len()));
    let mut z = [0.0f64; 2];
    for span in &fact.spans {
        let col = &table.columns[span.column];
        for i in 0..table.n_rows {
            fact.scores(i, span, &mut z[..span.dim]);
            let value = match &col.model {
                ColumnModel::Plain(loss) => loss.argmin(z[0], None)?,
                ColumnModel::Hurdle(h) => {
                    let r = h.reconstruct(&z[..span.dim])?;
                    match mode {
                        ReconstructMode::Impute => r.a_tilde,
                        ReconstructMode::Rule => match r.value(h.nu) {
                            Some(v) => v,
                            None => f64::NAN,
                        },
                    }
                }
            };
            out[(i, span.column)] = value;
        }
    }
    Ok(out)
}

/// Selects the regularization weight by held-out imputation error.
///
/// Extra observed entries are masked completely at random at `holdout_rate`
/// (within columns that already contain missing entries, mirroring how the
/// real missingness arose; if no column has missing entries, all quadratic
/// columns are eligible), the model is fitted at every grid value, and the
/// gamma with the smallest held-out MSE wins. Ties break toward larger
/// gamma.
pub fn select_gamma(
    table: &DataTable,
    config: &FitConfig,
    grid: &[f64],
    holdout_rate: f64,
    seed: u64,
) -> Result<f64> {
    if grid.is_empty() {
        return Err(Error::config("gamma grid must be non-empty"));
    }
    if grid.len() == 1 {
        return Ok(grid[0]);
    }
    if !(0.0..1.0).contains(&holdout_rate) || holdout_rate <= 0.0 {
        return Err(Error::config(format!(
            "holdout rate must lie in (0, 1), got {holdout_rate}"
        )));
    }

    let mut eligible: Vec<usize> = (0..table.columns.len())
        .filter(|&j| table.columns[j].values.iter().any(|v| v.is_none()))
        .collect();
    if eligible.is_empty() {
        eligible = (0..table.columns.len())
            .filter(|&j| {
                matches!(
                    &table.columns[j].model,
                    ColumnModel::Plain(crate::loss::Loss::Quadratic)
                ) || matches!(
                    &table.columns[j].model,
                    ColumnModel::Hurdle(h) if h.g_loss == crate::loss::Loss::Quadratic
                )
            })
            .collect();
    }
    if eligible.is_empty() {
        return Err(Error::config(
            "select_gamma needs at least one quadratic column to hold out",
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut masked = table.clone();
    let mut holdout: Vec<(usize, usize, f64)> = Vec::new();
    for &j in &eligible {
        for i in 0..table.n_rows {
            if let Some(a) = table.columns[j].values[i] {
                let u: f64 = rand::Rng::random(&mut rng);
                if u < holdout_rate {
                    masked.columns[j].values[i] = None;
                    holdout.push((i, j, a));
                }
            }
        }
    }
    if holdout.is_empty() {
        return Err(Error::numeric("holdout mask selected no entries"));
    }
    calibrate(&mut masked)?;

    let mut grid_sorted: Vec<f64> = grid.to_vec();
    grid_sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut best_gamma = grid_sorted[0];
    let mut best_mse = f64::INFINITY;
    for &gamma in &grid_sorted {
        let cfg = FitConfig {
            gamma_x: gamma,
            gamma_y: gamma,
            ..config.clone()
        };
        let result = fit(&masked, &cfg)?;
        let imputed = reconstruct_table(&masked, &result.factorization, ReconstructMode::Impute)?;
        let mse = holdout
            .iter()
            .map(|&(i, j, a)| {
                let e = imputed[(i, j)] - a;
                e * e
            })
            .sum::<f64>()
            / holdout.len() as f64;
        if mse <= best_mse {
            best_mse = mse;
            best_gamma = gamma;
        }
    }
    Ok(best_gamma)
}

/// Cholesky solve of the k x k system H delta = g; `hess` is consumed as
/// workspace. Returns false when H is not positive definite.
fn solve_spd(hess: &mut [f64], grad: &[f64], delta: &mut [f64]) -> bool {
    let k = grad.len();
    // In-place lower Cholesky.
    for c in 0..k {
        for r in c..k {
            let mut sum = hess[r * k + c];
            for m in 0..c {
                sum -= hess[r * k + m] * hess[c * k + m];
            }
            if r == c {
                if sum <= 0.0 {
                    return false;
                }
                hess[c * k + c] = sum.sqrt();
            } else {
                hess[r * k + c] = sum / hess[c * k + c];
            }
        }
    }
    // Forward solve L w = g.
    for r in 0..k {
        let mut sum = grad[r];
        for m in 0..r {
            sum -= hess[r * k + m] * delta[m];
        }
        delta[r] = sum / hess[r * k + r];
    }
    // Back solve L^T delta = w.
    for r in (0..k).rev() {
        let mut sum = delta[r];
        for m in (r + 1)..k {
            sum -= hess[m * k + r] * delta[m];
        }
        delta[r] = sum / hess[r * k + r];
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loss::Loss;
    use crate::table::Column;
    use ndarray::Array2;

    fn quad_table(matrix: &Array2<f64>) -> DataTable {
        let cols = (0..matrix.ncols())
            .map(|j| {
                Column::plain(
                    format!("c{j}"),
                    Loss::Quadratic,
                    matrix.column(j).iter().map(|&v| Some(v)).collect(),
                )
            })
            .collect();
        DataTable::new(cols).unwrap()
    }

    fn random_matrix(n: usize, p: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((n, p), |_| {
            let v: f64 = StandardNormal.sample(&mut rng);
            v
        })
    }

    #[test]
    fn solve_spd_matches_direct_inverse() {
        // H = A A^T + I is SPD; check H delta = g.
        let a = random_matrix(3, 3, 7);
        let mut h = vec![0.0; 9];
        for r in 0..3 {
            for c in 0..3 {
                h[r * 3 + c] = (0..3).map(|m| a[(r, m)] * a[(c, m)]).sum::<f64>()
                    + if r == c { 1.0 } else { 0.0 };
            }
        }
        let h_orig = h.clone();
        let g = [1.0, -2.0, 0.5];
        let mut delta = [0.0; 3];
        assert!(solve_spd(&mut h, &g, &mut delta));
        for r in 0..3 {
            let back: f64 = (0..3).map(|c| h_orig[r * 3 + c] * delta[c]).sum();
            assert!((back - g[r]).abs() < 1e-10);
        }
    }

    #[test]
    fn calibrate_plain_column() {
        let mut t = DataTable::new(vec![Column::plain(
            "a",
            Loss::Quadratic,
            vec![Some(1.0), Some(2.0), Some(3.0)],
        )])
        .unwrap();
        calibrate(&mut t).unwrap();
        assert!((t.columns[0].offset[0] - 2.0).abs() < 1e-12);
        assert!((t.columns[0].scale - 1.0).abs() < 1e-12);
    }

    #[test]
    fn calibrated_offset_only_loss_is_budget() {
        // Mixed table: quadratic, poisson, and a full hurdle column.
        let h = HurdleSpec::new(Nu::Value(0.0), Loss::Poisson, HurdleMode::Full);
        let mut t = DataTable::new(vec![
            Column::plain(
                "q",
                Loss::Quadratic,
                vec![Some(0.2), Some(-1.0), Some(2.5), None, Some(0.7), Some(1.1)],
            ),
            Column::plain(
                "p",
                Loss::Poisson,
                vec![Some(1.0), Some(0.0), Some(4.0), Some(2.0), Some(2.0), None],
            ),
            Column::hurdle(
                "d",
                h,
                vec![Some(0.0), Some(0.0), Some(3.0), Some(1.0), Some(0.0), Some(5.0)],
            ),
        ])
        .unwrap();
        calibrate(&mut t).unwrap();
        let layout = t.layout();
        let config = FitConfig::new(1);
        let fact = Factorization {
            x: Array2::zeros((t.n_rows, 1)),
            y: Array2::zeros((1, layout.total_dim)),
            mu: layout
                .spans
                .iter()
                .flat_map(|s| t.columns[s.column].offset.iter().copied())
                .collect(),
            spans: layout.spans,
        };
        let obj = objective(&t, &config, &fact).unwrap();
        assert!(
            (obj - t.total_loss_budget()).abs() < 1e-6,
            "offset-only loss {obj} vs budget {}",
            t.total_loss_budget()
        );
    }

    #[test]
    fn exact_rank_one_table_fits_to_zero() {
        let matrix = Array2::from_shape_vec((2, 2), vec![1.0, 2.0, 2.0, 4.0]).unwrap();
        // Uncentered/unscaled mode: no calibration at all.
        let t = quad_table(&matrix);
        let config = FitConfig::new(1).with_seed(3);
        let result = fit(&t, &config).unwrap();
        assert!(result.objective() < 1e-6, "objective {}", result.objective());
    }

    #[test]
    fn exact_rank_k_noiseless_fit_reaches_zero() {
        let u = random_matrix(40, 2, 1);
        let v = random_matrix(2, 6, 2);
        let matrix = u.dot(&v);
        let t = quad_table(&matrix);
        let mut config = FitConfig::new(2).with_seed(5);
        config.rel_tol = 1e-12;
        config.max_sweeps = 2000;
        let result = fit(&t, &config).unwrap();
        assert!(result.objective() < 1e-6, "objective {}", result.objective());
    }

    #[test]
    fn trace_is_monotone() {
        let matrix = random_matrix(50, 8, 11);
        let mut t = quad_table(&matrix);
        calibrate(&mut t).unwrap();
        let config = FitConfig::new(3).with_seed(1);
        let result = fit(&t, &config).unwrap();
        for w in result.trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-9, "trace increased: {} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn regularization_adds_frobenius_terms() {
        let matrix = random_matrix(20, 4, 3);
        let mut t = quad_table(&matrix);
        calibrate(&mut t).unwrap();
        let config = FitConfig::new(2).with_seed(9);
        let result = fit(&t, &config).unwrap();
        let fact = &result.factorization;
        let base = objective(&t, &config, fact).unwrap();
        let reg_cfg = FitConfig::new(2).with_gamma(0.5);
        let with_reg = objective(&t, &reg_cfg, fact).unwrap();
        let fro =
            fact.x.iter().map(|v| v * v).sum::<f64>() + fact.y.iter().map(|v| v * v).sum::<f64>();
        assert!((with_reg - base - 0.5 * fro).abs() < 1e-9);
    }

    #[test]
    fn gauge_invariance_of_objective() {
        let matrix = random_matrix(30, 5, 17);
        let mut t = quad_table(&matrix);
        calibrate(&mut t).unwrap();
        let config = FitConfig::new(2).with_seed(2);
        let result = fit(&t, &config).unwrap();
        let fact = result.factorization;
        // G = [[2, 0.3], [-0.4, 1.5]], inverse computed directly.
        let g = [[2.0, 0.3], [-0.4, 1.5]];
        let det = g[0][0] * g[1][1] - g[0][1] * g[1][0];
        let ginv = [
            [g[1][1] / det, -g[0][1] / det],
            [-g[1][0] / det, g[0][0] / det],
        ];
        let mut x2 = fact.x.clone();
        for i in 0..x2.nrows() {
            let xi: Vec<f64> = fact.x.row(i).iter().copied().collect();
            for c in 0..2 {
                x2[(i, c)] = xi[0] * ginv[0][c] + xi[1] * ginv[1][c];
            }
        }
        let mut y2 = fact.y.clone();
        for c in 0..y2.ncols() {
            let yc: Vec<f64> = fact.y.column(c).iter().copied().collect();
            for r in 0..2 {
                y2[(r, c)] = g[r][0] * yc[0] + g[r][1] * yc[1];
            }
        }
        let transformed = Factorization {
            x: x2,
            y: y2,
            mu: fact.mu.clone(),
            spans: fact.spans.clone(),
        };
        let o1 = objective(&t, &config, &fact).unwrap();
        let o2 = objective(&t, &config, &transformed).unwrap();
        assert!((o1 - o2).abs() < 1e-8 * o1.abs().max(1.0));
    }

    #[test]
    fn fit_rejects_bad_rank() {
        let matrix = random_matrix(10, 3, 1);
        let t = quad_table(&matrix);
        assert!(fit(&t, &FitConfig::new(0)).is_err());
        assert!(fit(&t, &FitConfig::new(3)).is_err());
    }

    #[test]
    fn seed_determinism_bitwise() {
        let matrix = random_matrix(25, 5, 21);
        let mut t = quad_table(&matrix);
        calibrate(&mut t).unwrap();
        let config = FitConfig::new(2).with_seed(42);
        let a = fit(&t, &config).unwrap();
        let b = fit(&t, &config).unwrap();
        assert_eq!(a.factorization.x, b.factorization.x);
        assert_eq!(a.factorization.y, b.factorization.y);
        assert_eq!(a.trace, b.trace);
    }

    #[test]
    fn mar_refresh_examples() {
        // X = 0: the refreshed offset equals the observed mean.
        let spec = HurdleSpec::new(Nu::Missing, Loss::Quadratic, HurdleMode::Full);
        let t = DataTable::new(vec![Column::hurdle(
            "a",
            spec,
            vec![Some(1.0), Some(2.0), None, Some(3.0)],
        )])
        .unwrap();
        let layout = t.layout();
        let mut fact = Factorization {
            x: Array2::zeros((4, 1)),
            y: Array2::zeros((1, layout.total_dim)),
            mu: vec![0.0; layout.total_dim],
            spans: layout.spans,
        };
        let mu = mar_offset_refresh(&t, &mut fact, "a").unwrap();
        assert!((mu - 2.0).abs() < 1e-12);
        assert_eq!(fact.mu[1], mu);
    }

    #[test]
    fn mar_refresh_requires_quadratic_g() {
        let spec = HurdleSpec::new(Nu::Value(0.0), Loss::Poisson, HurdleMode::Full);
        let t = DataTable::new(vec![Column::hurdle(
            "d",
            spec,
            vec![Some(0.0), Some(2.0), Some(0.0), Some(1.0)],
        )])
        .unwrap();
        let layout = t.layout();
        let mut fact = Factorization {
            x: Array2::zeros((4, 1)),
            y: Array2::zeros((1, layout.total_dim)),
            mu: vec![0.0; layout.total_dim],
            spans: layout.spans,
        };
        assert!(mar_offset_refresh(&t, &mut fact, "d").is_err());
    }

    #[test]
    fn reconstruct_quadratic_is_identity_scores() {
        let matrix = random_matrix(10, 3, 5);
        let mut t = quad_table(&matrix);
        calibrate(&mut t).unwrap();
        let config = FitConfig::new(2).with_seed(8);
        let result = fit(&t, &config).unwrap();
        let recon = reconstruct_table(&t, &result.factorization, ReconstructMode::Rule).unwrap();
        let fact = &result.factorization;
        for (j, span) in fact.spans.iter().enumerate() {
            for i in 0..t.n_rows {
                let mut z = [0.0];
                fact.scores(i, span, &mut z);
                assert_eq!(recon[(i, j)], z[0]);
            }
        }
    }

    #[test]
    fn select_gamma_singleton_grid() {
        let matrix = random_matrix(15, 4, 2);
        let mut t = quad_table(&matrix);
        calibrate(&mut t).unwrap();
        let g = select_gamma(&t, &FitConfig::new(2), &[0.0], 0.1, 7).unwrap();
        assert_eq!(g, 0.0);
    }

    #[test]
    fn select_gamma_empty_grid_errors() {
        let matrix = random_matrix(15, 4, 2);
        let t = quad_table(&matrix);
        assert!(select_gamma(&t, &FitConfig::new(2), &[], 0.1, 7).is_err());
    }
}
