//! Comparison methods for the imputation study: sample-mean imputation,
//! missing-aware NIPALS, and PCA realized as the unregularized quadratic
//! low-rank model.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::loss::Loss;
use crate::solver::{calibrate, fit, reconstruct_table, FitConfig, ReconstructMode};
use crate::table::{Column, DataTable};

/// Ground truth for scoring an imputation: the complete table and the true
/// per-column offsets.
#[derive(Debug, Clone, Copy)]
pub struct ImputationTruth<'a> {
    pub complete: &'a Array2<f64>,
    pub true_offsets: &'a [f64],
}

/// One baseline run: the completed table plus its scores when ground truth
/// is available. MSEs are `None` when the table has no missing entries or
/// no truth was supplied.
#[derive(Debug, Clone)]
pub struct BaselineResult {
    pub method: String,
    pub imputed: Array2<f64>,
    pub imputation_mse: Option<f64>,
    pub offset_mse: Option<f64>,
    pub converged: bool,
}

/// Scores a completed table: squared error over the truly-missing cells,
/// and squared error of the completed-column mean against the true offset,
/// averaged over columns that had missing entries.
pub fn evaluate_imputation(
    table: &DataTable,
    imputed: &Array2<f64>,
    truth: &ImputationTruth,
) -> (Option<f64>, Option<f64>) {
    let mut se = 0.0;
    let mut missing = 0usize;
    let mut offset_se = 0.0;
    let mut offset_cols = 0usize;
    for (j, col) in table.columns.iter().enumerate() {
        let col_missing = col.values.iter().filter(|v| v.is_none()).count();
        for (i, v) in col.values.iter().enumerate() {
            if v.is_none() {
                let e = imputed[(i, j)] - truth.complete[(i, j)];
                se += e * e;
                missing += 1;
            }
        }
        if col_missing > 0 {
            let mean =
                (0..table.n_rows).map(|i| imputed[(i, j)]).sum::<f64>() / table.n_rows as f64;
            let e = mean - truth.true_offsets[j];
            offset_se += e * e;
            offset_cols += 1;
        }
    }
    let imputation_mse = (missing > 0).then(|| se / missing as f64);
    let offset_mse = (offset_cols > 0).then(|| offset_se / offset_cols as f64);
    (imputation_mse, offset_mse)
}

/// Completed table where observed cells keep their values; missing cells
/// are filled by `fill(i, j)`.
fn complete_with(table: &DataTable, fill: impl Fn(usize, usize) -> f64) -> Array2<f64> {
    let mut out = Array2::<f64>::zeros((table.n_rows, table.columns.len()));
    for (j, col) in table.columns.iter().enumerate() {
        for (i, v) in col.values.iter().enumerate() {
            out[(i, j)] = match v {
                Some(a) => *a,
                None => fill(i, j),
            };
        }
    }
    out
}

fn observed_means(table: &DataTable) -> Result<Vec<f64>> {
    table
        .columns
        .iter()
        .map(|col| {
            let obs: Vec<f64> = col.values.iter().flatten().copied().collect();
            if obs.is_empty() {
                return Err(Error::degenerate(&col.name, "fully-missing column"));
            }
            Ok(obs.iter().sum::<f64>() / obs.len() as f64)
        })
        .collect()
}

/// Replaces each missing entry by its column's observed mean.
pub fn mean_impute(table: &DataTable, truth: Option<&ImputationTruth>) -> Result<BaselineResult> {
    let means = observed_means(table)?;
    let imputed = complete_with(table, |_, j| means[j]);
    let (imputation_mse, offset_mse) = match truth {
        Some(t) => evaluate_imputation(table, &imputed, t),
        None => (None, None),
    };
    Ok(BaselineResult {
        method: "sample_mean".into(),
        imputed,
        imputation_mse,
        offset_mse,
        converged: true,
    })
}

struct NipalsExtraction {
    centers: Vec<f64>,
    scores: Array2<f64>,
    loadings: Array2<f64>,
    converged: bool,
}

/// Sequential rank-1 extraction with missing cells skipped in the inner
/// regressions and deflation between components.
fn nipals_extract(table: &DataTable, k: usize, max_iter: usize, tol: f64) -> Result<NipalsExtraction> {
    let n = table.n_rows;
    let p = table.columns.len();
    if k == 0 || k > p {
        return Err(Error::config(format!(
            "NIPALS rank must satisfy 1 <= k <= {p}"
        )));
    }
    let centers = observed_means(table)?;
    let observed: Vec<Vec<bool>> = (0..p)
        .map(|j| table.columns[j].values.iter().map(|v| v.is_some()).collect())
        .collect();
    let mut r = Array2::<f64>::zeros((n, p));
    for j in 0..p {
        for i in 0..n {
            if let Some(a) = table.columns[j].values[i] {
                r[(i, j)] = a - centers[j];
            }
        }
    }

    let mut scores = Array2::<f64>::zeros((n, k));
    let mut loadings = Array2::<f64>::zeros((p, k));
    let mut converged = true;
    for comp in 0..k {
        // Start from the residual column with the largest sum of squares.
        let start = (0..p)
            .max_by(|&a, &b| {
                let sa: f64 = (0..n).map(|i| r[(i, a)] * r[(i, a)]).sum();
                let sb: f64 = (0..n).map(|i| r[(i, b)] * r[(i, b)]).sum();
                sa.partial_cmp(&sb).unwrap()
            })
            .unwrap();
        let mut t: Vec<f64> = (0..n).map(|i| r[(i, start)]).collect();
        let mut pvec = vec![0.0; p];
        let mut this_converged = false;
        for _ in 0..max_iter {
            for j in 0..p {
                let mut num = 0.0;
                let mut den = 0.0;
                for i in 0..n {
                    if observed[j][i] {
                        num += r[(i, j)] * t[i];
                        den += t[i] * t[i];
                    }
                }
                pvec[j] = if den > 0.0 { num / den } else { 0.0 };
            }
            let norm = pvec.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm == 0.0 {
                break;
            }
            pvec.iter_mut().for_each(|v| *v /= norm);
            let mut t_new = vec![0.0; n];
            for i in 0..n {
                let mut num = 0.0;
                let mut den = 0.0;
                for j in 0..p {
                    if observed[j][i] {
                        num += r[(i, j)] * pvec[j];
                        den += pvec[j] * pvec[j];
                    }
                }
                t_new[i] = if den > 0.0 { num / den } else { 0.0 };
            }
            let diff: f64 = t
                .iter()
                .zip(&t_new)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            let scale: f64 = t_new.iter().map(|v| v * v).sum::<f64>().sqrt();
            t = t_new;
            if diff <= tol * scale.max(1e-12) {
                this_converged = true;
                break;
            }
        }
        converged &= this_converged;
        for i in 0..n {
            scores[(i, comp)] = t[i];
        }
        for j in 0..p {
            loadings[(j, comp)] = pvec[j];
        }
        for i in 0..n {
            for j in 0..p {
                if observed[j][i] {
                    r[(i, j)] -= t[i] * pvec[j];
                }
            }
        }
    }
    Ok(NipalsExtraction {
        centers,
        scores,
        loadings,
        converged,
    })
}

/// Missing-aware NIPALS; the reconstruction imputes missing entries. When
/// an inner iteration stalls, the best iterate is kept and `converged` is
/// reported false.
pub fn nipals_fit(
    table: &DataTable,
    k: usize,
    max_iter: usize,
    tol: f64,
    truth: Option<&ImputationTruth>,
) -> Result<BaselineResult> {
    let ext = nipals_extract(table, k, max_iter, tol)?;
    let imputed = complete_with(table, |i, j| {
        ext.centers[j] + (0..k).map(|c| ext.scores[(i, c)] * ext.loadings[(j, c)]).sum::<f64>()
    });
    let (imputation_mse, offset_mse) = match truth {
        Some(t) => evaluate_imputation(table, &imputed, t),
        None => (None, None),
    };
    Ok(BaselineResult {
        method: "nipals".into(),
        imputed,
        imputation_mse,
        offset_mse,
        converged: ext.converged,
    })
}

/// Loadings of the fitted components (p x k), for subspace checks.
pub fn nipals_loadings(
    table: &DataTable,
    k: usize,
    max_iter: usize,
    tol: f64,
) -> Result<Array2<f64>> {
    Ok(nipals_extract(table, k, max_iter, tol)?.loadings)
}

/// PCA as the unregularized quadratic low-rank model: every column is
/// refitted under plain quadratic loss with the same missing mask, and
/// missing cells are imputed from the reconstruction.
pub fn pca_glrm(
    table: &DataTable,
    k: usize,
    seed: u64,
    truth: Option<&ImputationTruth>,
) -> Result<BaselineResult> {
    quadratic_glrm(table, k, 0.0, seed, truth)
}

/// Quadratic low-rank model at an arbitrary regularization weight; the
/// PPCA-like stand-in when gamma > 0.
pub fn quadratic_glrm(
    table: &DataTable,
    k: usize,
    gamma: f64,
    seed: u64,
    truth: Option<&ImputationTruth>,
) -> Result<BaselineResult> {
    let cols: Vec<Column> = table
        .columns
        .iter()
        .map(|c| Column::plain(c.name.clone(), Loss::Quadratic, c.values.clone()))
        .collect();
    let mut quad = DataTable::new(cols)?;
    calibrate(&mut quad)?;
    let config = FitConfig::new(k).with_gamma(gamma).with_seed(seed);
    let fitted = fit(&quad, &config)?;
    let recon = reconstruct_table(&quad, &fitted.factorization, ReconstructMode::Rule)?;
    let imputed = complete_with(table, |i, j| recon[(i, j)]);
    let (imputation_mse, offset_mse) = match truth {
        Some(t) => evaluate_imputation(table, &imputed, t),
        None => (None, None),
    };
    Ok(BaselineResult {
        method: if gamma == 0.0 { "pca_glrm" } else { "quad_glrm" }.into(),
        imputed,
        imputation_mse,
        offset_mse,
        converged: fitted.converged,
    })
}
