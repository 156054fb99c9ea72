//! Model quality metrics: loss explained, weighted reconstruction SSE,
//! nu misclassification, ROC/AUC on nu-probability scores, and
//! cosine-similarity column association.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::solver::{data_loss, Factorization};
use crate::table::DataTable;

/// 1 - (unregularized data loss) / sum_j (n_j - 1). Zero for the
/// offset-only model, 1 for a perfect reconstruction of noiseless data.
pub fn loss_explained(table: &DataTable, fact: &Factorization) -> Result<f64> {
    let budget = table.total_loss_budget();
    if budget <= 0.0 {
        return Err(Error::numeric("empty loss budget"));
    }
    Ok(1.0 - data_loss(table, fact)? / budget)
}

/// Sum over observed entries of ((ahat - a) / sd_j)^2, with per-column
/// sample standard deviations of the observed values as weights.
pub fn weighted_sse(table: &DataTable, reconstructed: &Array2<f64>, column_sd: &[f64]) -> Result<f64> {
    if reconstructed.nrows() != table.n_rows || reconstructed.ncols() != table.columns.len() {
        return Err(Error::Dimension(format!(
            "reconstruction is {}x{}, table is {}x{}",
            reconstructed.nrows(),
            reconstructed.ncols(),
            table.n_rows,
            table.columns.len()
        )));
    }
    if column_sd.len() != table.columns.len() {
        return Err(Error::Dimension("one sd per column required".into()));
    }
    if column_sd.iter().any(|&s| !(s > 0.0)) {
        return Err(Error::numeric("non-positive column sd"));
    }
    let mut total = 0.0;
    for (j, col) in table.columns.iter().enumerate() {
        for (i, v) in col.values.iter().enumerate() {
            if let Some(a) = v {
                let e = (reconstructed[(i, j)] - a) / column_sd[j];
                total += e * e;
            }
        }
    }
    Ok(total)
}

/// Fraction of observed entries whose predicted nu indicator disagrees with
/// the actual one. Numeric reconstructions predict nu whenever the value
/// falls below nu + 0.5 (the threshold rule used to map plain low-rank
/// reconstructions of counts onto zero/non-zero outcomes); hurdle
/// reconstructions produce nu exactly and satisfy the same rule.
pub fn misclassification_rate(
    table: &DataTable,
    reconstructed: &Array2<f64>,
    nu: f64,
) -> Result<f64> {
    if reconstructed.nrows() != table.n_rows || reconstructed.ncols() != table.columns.len() {
        return Err(Error::Dimension("reconstruction shape mismatch".into()));
    }
    let mut wrong = 0usize;
    let mut count = 0usize;
    for (j, col) in table.columns.iter().enumerate() {
        for (i, v) in col.values.iter().enumerate() {
            if let Some(a) = v {
                let actual_nu = *a == nu;
                let predicted_nu = reconstructed[(i, j)] < nu + 0.5;
                if actual_nu != predicted_nu {
                    wrong += 1;
                }
                count += 1;
            }
        }
    }
    if count == 0 {
        return Err(Error::numeric("no observed entries"));
    }
    Ok(wrong as f64 / count as f64)
}

/// Disagreement rate between two indicator vectors; invariant under jointly
/// relabeling nu and non-nu in both arguments.
pub fn misclassification_from_flags(predicted: &[bool], actual: &[bool]) -> Result<f64> {
    if predicted.len() != actual.len() || predicted.is_empty() {
        return Err(Error::Dimension("flag vectors must match and be non-empty".into()));
    }
    let wrong = predicted
        .iter()
        .zip(actual)
        .filter(|(p, a)| p != a)
        .count();
    Ok(wrong as f64 / predicted.len() as f64)
}

/// ROC curve (threshold sweep over unique scores, descending) and AUC via
/// the trapezoid rule; ties contribute 1/2, matching the Mann-Whitney
/// statistic.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<(Vec<(f64, f64)>, f64)> {
    if scores.len() != labels.len() {
        return Err(Error::Dimension("scores and labels must match".into()));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::numeric("ROC needs both classes"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap());

    let mut curve = vec![(0.0, 0.0)];
    let mut auc = 0.0;
    let (mut tp, mut fp) = (0usize, 0usize);
    let (mut prev_fpr, mut prev_tpr) = (0.0f64, 0.0f64);
    let mut idx = 0;
    while idx < order.len() {
        // Advance over the whole tie group at this score.
        let score = scores[order[idx]];
        while idx < order.len() && scores[order[idx]] == score {
            if labels[order[idx]] {
                tp += 1;
            } else {
                fp += 1;
            }
            idx += 1;
        }
        let fpr = fp as f64 / neg as f64;
        let tpr = tp as f64 / pos as f64;
        auc += (fpr - prev_fpr) * (tpr + prev_tpr) * 0.5;
        curve.push((fpr, tpr));
        prev_fpr = fpr;
        prev_tpr = tpr;
    }
    Ok((curve, auc))
}

/// Association of one embedded column of Y with the rest.
#[derive(Debug, Clone)]
pub struct AssociationRow {
    pub column: String,
    /// theta = 1 - arccos(cosine similarity) / pi, in [0, 1].
    pub theta: f64,
    /// distance = 1 - 2|theta - 0.5|; near 0 means strong association.
    pub distance: f64,
}

/// Cosine-similarity association between the binary embedded column of the
/// named hurdle variable and every embedded column of Y (itself included,
/// at distance 0), sorted ascending by distance. Embedded columns with zero
/// norm have undefined association and are omitted.
pub fn column_association(
    table: &DataTable,
    fact: &Factorization,
    binary_column: &str,
) -> Result<Vec<AssociationRow>> {
    let j = table.column(binary_column)?;
    match &table.columns[j].model {
        crate::table::ColumnModel::Hurdle(_) => {}
        _ => {
            return Err(Error::config(format!(
                "column {binary_column} carries no hurdle binary component"
            )))
        }
    }
    let ref_dim = fact.spans[j].start;
    let labels = table.embedded_labels();
    let norm = |c: usize| -> f64 {
        fact.y
            .column(c)
            .iter()
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    };
    let ref_norm = norm(ref_dim);
    if ref_norm <= 0.0 {
        return Err(Error::degenerate(
            binary_column,
            "zero-norm binary embedded column: association undefined",
        ));
    }
    let mut rows = Vec::new();
    for c in 0..fact.y.ncols() {
        let n = norm(c);
        if n <= 0.0 {
            continue;
        }
        let dot: f64 = fact
            .y
            .column(ref_dim)
            .iter()
            .zip(fact.y.column(c).iter())
            .map(|(a, b)| a * b)
            .sum();
        let cos = (dot / (ref_norm * n)).clamp(-1.0, 1.0);
        let theta = 1.0 - cos.acos() / std::f64::consts::PI;
        let distance = 1.0 - 2.0 * (theta - 0.5).abs();
        rows.push(AssociationRow {
            column: labels[c].clone(),
            theta,
            distance,
        });
    }
    rows.sort_by(|a, b| a.distance.partial_cmp(&b.distance).unwrap());
    Ok(rows)
}
