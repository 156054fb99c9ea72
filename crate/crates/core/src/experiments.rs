//! Replication harnesses for the two simulation studies: the missing-value
//! imputation comparison (30 seeded low-rank Gaussian datasets with MCAR
//! and MAR masks on the first column) and the zero-inflated count study
//! (hurdle versus plain quadratic low-rank fits across ranks).
//!
//! Seeds fan out over a thread pool; every per-seed computation is a pure
//! function of its seed, so results are deterministic regardless of the
//! thread schedule.

use ndarray::Array2;
use rayon::prelude::*;

use crate::baselines::{mean_impute, nipals_fit, quadratic_glrm, ImputationTruth};
use crate::diagnostics::{
    column_association, loss_explained, misclassification_rate, roc_auc, weighted_sse,
    AssociationRow,
};
use crate::error::Result;
use crate::hurdle::{nu_probability, HurdleMode, HurdleSpec, Nu};
use crate::loss::Loss;
use crate::simgen::{simulate_mar_dataset, simulate_zero_inflated, MarDatasetBundle};
use crate::solver::{
    calibrate, fit, reconstruct_table, select_gamma, FitConfig, ReconstructMode,
};
use crate::table::{Column, DataTable};

// ---------------------------------------------------------------------------
// Missing-value study
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MissCase {
    Mcar,
    Mar,
}

impl MissCase {
    pub fn name(self) -> &'static str {
        match self {
            MissCase::Mcar => "mcar",
            MissCase::Mar => "mar",
        }
    }
}

#[derive(Debug, Clone)]
pub struct MarStudyConfig {
    pub seeds: Vec<u64>,
    pub n: usize,
    pub p: usize,
    pub k_true: usize,
    pub rank: usize,
    pub gamma_grid: Vec<f64>,
    /// Sweep budget for the gamma-selection fits.
    pub select_max_sweeps: usize,
    pub select_rel_tol: f64,
    /// Sweep budget for the final fits.
    pub fit_max_sweeps: usize,
    pub fit_rel_tol: f64,
}

impl MarStudyConfig {
    pub fn with_seeds(seeds: Vec<u64>) -> Self {
        MarStudyConfig {
            seeds,
            n: 5000,
            p: 10,
            k_true: 4,
            rank: 4,
            gamma_grid: vec![0.0, 1.0, 4.0, 16.0],
            select_max_sweeps: 500,
            select_rel_tol: 1e-6,
            fit_max_sweeps: 500,
            fit_rel_tol: 1e-6,
        }
    }
}

/// Scores of one method on one masked dataset.
#[derive(Debug, Clone, Copy)]
pub struct MethodScores {
    pub imputation_mse: f64,
    pub offset_mse: f64,
}

#[derive(Debug, Clone)]
pub struct MarCaseOutcome {
    pub seed: u64,
    pub case: MissCase,
    pub gamma: f64,
    pub hurdle: MethodScores,
    pub nipals: MethodScores,
    pub sample_mean: MethodScores,
    pub quad_glrm: MethodScores,
    pub auc: f64,
    pub loss_explained: f64,
    /// Association rows sorted by distance (reference column excluded).
    pub association: Vec<AssociationRow>,
    /// ROC curve, kept only for the first seed of each case.
    pub roc: Option<Vec<(f64, f64)>>,
}

#[derive(Debug, Clone)]
pub struct MarStudyOutcome {
    pub outcomes: Vec<MarCaseOutcome>,
}

impl MarStudyOutcome {
    pub fn case_outcomes(&self, case: MissCase) -> impl Iterator<Item = &MarCaseOutcome> {
        self.outcomes.iter().filter(move |o| o.case == case)
    }

    pub fn average(&self, case: MissCase, pick: impl Fn(&MarCaseOutcome) -> f64) -> f64 {
        let values: Vec<f64> = self.case_outcomes(case).map(pick).collect();
        values.iter().sum::<f64>() / values.len() as f64
    }

    /// Fraction of seeds where an interesting column ranks within the
    /// top `top` association distances (reference column excluded).
    pub fn association_hit_rate(&self, case: MissCase, names: &[&str], top: usize) -> f64 {
        let mut hits = 0usize;
        let mut total = 0usize;
        for outcome in self.case_outcomes(case) {
            total += 1;
            let leading: Vec<&str> = outcome
                .association
                .iter()
                .take(top)
                .map(|r| r.column.as_str())
                .collect();
            if names.iter().any(|n| leading.contains(n)) {
                hits += 1;
            }
        }
        hits as f64 / total.max(1) as f64
    }
}

/// Builds the masked table for one case: column a1 is a missing-nu hurdle
/// (logistic indicator, quadratic values), the rest plain quadratic.
pub fn mar_case_table(bundle: &MarDatasetBundle, case: MissCase) -> Result<DataTable> {
    let mask = match case {
        MissCase::Mcar => &bundle.mcar_mask,
        MissCase::Mar => &bundle.mar_mask,
    };
    let n = bundle.n();
    let p = bundle.complete.ncols();
    let mut cols = Vec::with_capacity(p);
    let a1: Vec<Option<f64>> = (0..n)
        .map(|i| {
            if mask[i] {
                None
            } else {
                Some(bundle.complete[(i, 0)])
            }
        })
        .collect();
    cols.push(Column::hurdle(
        "a1",
        HurdleSpec::new(Nu::Missing, Loss::Quadratic, HurdleMode::Full),
        a1,
    ));
    for j in 1..p {
        let values: Vec<Option<f64>> = (0..n).map(|i| Some(bundle.complete[(i, j)])).collect();
        cols.push(Column::plain(format!("a{}", j + 1), Loss::Quadratic, values));
    }
    DataTable::new(cols)
}

fn run_mar_case(
    cfg: &MarStudyConfig,
    bundle: &MarDatasetBundle,
    case: MissCase,
    keep_roc: bool,
) -> Result<MarCaseOutcome> {
    let seed = bundle.seed;
    let mask = match case {
        MissCase::Mcar => &bundle.mcar_mask,
        MissCase::Mar => &bundle.mar_mask,
    };
    let mut table = mar_case_table(bundle, case)?;
    calibrate(&mut table)?;
    let truth = ImputationTruth {
        complete: &bundle.complete,
        true_offsets: &bundle.truth_mu,
    };

    let missing_rate = mask.iter().filter(|&&m| m).count() as f64 / bundle.n() as f64;
    let select_config = FitConfig {
        max_sweeps: cfg.select_max_sweeps,
        rel_tol: cfg.select_rel_tol,
        seed,
        mar_offset_columns: vec!["a1".into()],
        ..FitConfig::new(cfg.rank)
    };
    let mask_seed = seed
        .wrapping_mul(0x9e37_79b9_7f4a_7c15)
        .wrapping_add(case as u64 + 1);
    let gamma = select_gamma(
        &table,
        &select_config,
        &cfg.gamma_grid,
        missing_rate,
        mask_seed,
    )?;

    let fit_config = FitConfig {
        max_sweeps: cfg.fit_max_sweeps,
        rel_tol: cfg.fit_rel_tol,
        seed,
        mar_offset_columns: vec!["a1".into()],
        ..FitConfig::new(cfg.rank).with_gamma(gamma)
    };
    let fitted = fit(&table, &fit_config)?;
    let fact = &fitted.factorization;

    let imputed_raw = reconstruct_table(&table, fact, ReconstructMode::Impute)?;
    // Completed table: observed cells keep their data values.
    let mut imputed = Array2::<f64>::zeros((table.n_rows, table.columns.len()));
    for (j, col) in table.columns.iter().enumerate() {
        for i in 0..table.n_rows {
            imputed[(i, j)] = col.values[i].unwrap_or(imputed_raw[(i, j)]);
        }
    }
    let (imp_mse, off_mse) = crate::baselines::evaluate_imputation(&table, &imputed, &truth);
    let hurdle = MethodScores {
        imputation_mse: imp_mse.unwrap_or(f64::NAN),
        offset_mse: off_mse.unwrap_or(f64::NAN),
    };

    // Missingness scores from the binary component, over every row.
    let span = fact.spans[0];
    let mut scores = Vec::with_capacity(table.n_rows);
    let mut z = [0.0f64; 2];
    for i in 0..table.n_rows {
        fact.scores(i, &span, &mut z);
        scores.push(nu_probability(z[0]));
    }
    let (roc, auc) = roc_auc(&scores, mask)?;

    let le = loss_explained(&table, fact)?;
    let association: Vec<AssociationRow> = column_association(&table, fact, "a1")?
        .into_iter()
        .filter(|r| r.column != "a1:b")
        .collect();

    let to_scores = |r: crate::baselines::BaselineResult| MethodScores {
        imputation_mse: r.imputation_mse.unwrap_or(f64::NAN),
        offset_mse: r.offset_mse.unwrap_or(f64::NAN),
    };
    let nipals = to_scores(nipals_fit(&table, cfg.rank, 500, 1e-9, Some(&truth))?);
    let sample_mean = to_scores(mean_impute(&table, Some(&truth))?);
    let quad = to_scores(quadratic_glrm(&table, cfg.rank, gamma, seed, Some(&truth))?);

    Ok(MarCaseOutcome {
        seed,
        case,
        gamma,
        hurdle,
        nipals,
        sample_mean,
        quad_glrm: quad,
        auc,
        loss_explained: le,
        association,
        roc: keep_roc.then_some(roc),
    })
}

/// Runs the full missing-value study over the configured seeds; per-seed
/// work fans out over the thread pool.
pub fn run_mar_study(cfg: &MarStudyConfig) -> Result<MarStudyOutcome> {
    let first = cfg.seeds.first().copied();
    let outcomes: Vec<Vec<MarCaseOutcome>> = cfg
        .seeds
        .par_iter()
        .map(|&seed| {
            let bundle = simulate_mar_dataset(seed, cfg.n, cfg.p, cfg.k_true);
            let keep = first == Some(seed);
            Ok(vec![
                run_mar_case(cfg, &bundle, MissCase::Mcar, keep)?,
                run_mar_case(cfg, &bundle, MissCase::Mar, keep)?,
            ])
        })
        .collect::<Result<_>>()?;
    Ok(MarStudyOutcome {
        outcomes: outcomes.into_iter().flatten().collect(),
    })
}

// ---------------------------------------------------------------------------
// Zero-inflated study
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct ZeroInflatedStudyConfig {
    pub seed: u64,
    pub n: usize,
    pub p: usize,
    pub k_true: usize,
    pub ks: Vec<usize>,
    pub mean_scale: f64,
    pub max_sweeps: usize,
    pub rel_tol: f64,
}

impl Default for ZeroInflatedStudyConfig {
    fn default() -> Self {
        ZeroInflatedStudyConfig {
            seed: 1,
            n: 2200,
            p: 14,
            k_true: 4,
            ks: vec![1, 2, 4, 6, 8, 10],
            mean_scale: 2.0,
            max_sweeps: 200,
            rel_tol: 1e-5,
        }
    }
}

impl ZeroInflatedStudyConfig {
    /// Per-column zero rates spanning 5% to 99%.
    pub fn zero_rates(&self) -> Vec<f64> {
        (0..self.p)
            .map(|j| 0.05 + (0.99 - 0.05) * j as f64 / (self.p - 1).max(1) as f64)
            .collect()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CurvePoint {
    pub loss_explained: f64,
    pub weighted_sse: f64,
    pub misclassification: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct ZeroInflatedPoint {
    pub k: usize,
    pub hurdle: CurvePoint,
    pub pca: CurvePoint,
}

/// Builds the hurdle view of a count table: every column a full hurdle with
/// nu = 0, logistic indicator and Poisson values.
pub fn zero_inflated_table(counts: &Array2<f64>) -> Result<DataTable> {
    let cols = (0..counts.ncols())
        .map(|j| {
            let values: Vec<Option<f64>> = (0..counts.nrows()).map(|i| Some(counts[(i, j)])).collect();
            Column::hurdle(
                format!("d{}", j + 1),
                HurdleSpec::new(Nu::Value(0.0), Loss::Poisson, HurdleMode::Full),
                values,
            )
        })
        .collect();
    DataTable::new(cols)
}

fn quadratic_view(counts: &Array2<f64>) -> Result<DataTable> {
    let cols = (0..counts.ncols())
        .map(|j| {
            let values: Vec<Option<f64>> = (0..counts.nrows()).map(|i| Some(counts[(i, j)])).collect();
            Column::plain(format!("d{}", j + 1), Loss::Quadratic, values)
        })
        .collect();
    DataTable::new(cols)
}

/// Fits the hurdle and PCA models across ranks and reports the three
/// curves: proportion of loss explained, weighted reconstruction SSE, and
/// zero misclassification rate.
pub fn run_zero_inflated_study(cfg: &ZeroInflatedStudyConfig) -> Result<Vec<ZeroInflatedPoint>> {
    let counts = simulate_zero_inflated(
        cfg.seed,
        cfg.n,
        cfg.p,
        cfg.k_true,
        &cfg.zero_rates(),
        cfg.mean_scale,
    )?;
    let mut hurdle_table = zero_inflated_table(&counts)?;
    calibrate(&mut hurdle_table)?;
    let mut pca_table = quadratic_view(&counts)?;
    calibrate(&mut pca_table)?;
    let sds = pca_table.observed_column_sd()?;

    let points: Vec<ZeroInflatedPoint> = cfg
        .ks
        .par_iter()
        .map(|&k| {
            let config = FitConfig {
                max_sweeps: cfg.max_sweeps,
                rel_tol: cfg.rel_tol,
                seed: cfg.seed,
                ..FitConfig::new(k)
            };
            let hurdle_fit = fit(&hurdle_table, &config)?;
            let hurdle_recon =
                reconstruct_table(&hurdle_table, &hurdle_fit.factorization, ReconstructMode::Rule)?;
            let hurdle = CurvePoint {
                loss_explained: loss_explained(&hurdle_table, &hurdle_fit.factorization)?,
                weighted_sse: weighted_sse(&hurdle_table, &hurdle_recon, &sds)?,
                misclassification: misclassification_rate(&hurdle_table, &hurdle_recon, 0.0)?,
            };

            let pca_fit = fit(&pca_table, &config)?;
            let pca_recon =
                reconstruct_table(&pca_table, &pca_fit.factorization, ReconstructMode::Rule)?;
            let pca = CurvePoint {
                loss_explained: loss_explained(&pca_table, &pca_fit.factorization)?,
                weighted_sse: weighted_sse(&pca_table, &pca_recon, &sds)?,
                misclassification: misclassification_rate(&pca_table, &pca_recon, 0.0)?,
            };
            Ok(ZeroInflatedPoint { k, hurdle, pca })
        })
        .collect::<Result<_>>()?;
    Ok(points)
}
