//! Column-typed data tables with missing entries.
//!
//! A table holds per-column value arrays where `None` marks a missing entry;
//! the observed-index set is implicit. Each column carries its loss model
//! (a plain scalar loss or a hurdle composite), the embedding layout, and
//! the calibration state (offsets, scale or lambda weights) filled in by
//! `solver::calibrate`.

use crate::error::{Error, Result};
use crate::hurdle::{HurdleMode, HurdleSpec, Nu};
use crate::loss::Loss;

/// How the hurdle multiplier c is chosen for a column.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CMultiplier {
    /// c = n_nu / (n - n_nu), the demonstrated default.
    Ratio,
    Fixed(f64),
}

/// Loss model attached to one column.
#[derive(Debug, Clone)]
pub enum ColumnModel {
    Plain(Loss),
    Hurdle(HurdleSpec),
}

impl ColumnModel {
    pub fn embed_dim(&self) -> usize {
        match self {
            ColumnModel::Plain(_) => 1,
            ColumnModel::Hurdle(h) => h.embed_dim(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Column {
    pub name: String,
    pub model: ColumnModel,
    pub values: Vec<Option<f64>>,
    /// Loss-level offsets, one per embedded dimension; zeros before
    /// calibration (the uncentered/unscaled mode).
    pub offset: Vec<f64>,
    /// sigma^2 divisor for plain columns; hurdle columns keep 1.0 (their
    /// normalization lives in the lambda weights).
    pub scale: f64,
    pub c_multiplier: CMultiplier,
    pub calibrated: bool,
}

impl Column {
    pub fn plain(name: impl Into<String>, loss: Loss, values: Vec<Option<f64>>) -> Self {
        let dim = 1;
        Column {
            name: name.into(),
            model: ColumnModel::Plain(loss),
            values,
            offset: vec![0.0; dim],
            scale: 1.0,
            c_multiplier: CMultiplier::Ratio,
            calibrated: false,
        }
    }

    pub fn hurdle(name: impl Into<String>, spec: HurdleSpec, values: Vec<Option<f64>>) -> Self {
        let dim = spec.embed_dim();
        Column {
            name: name.into(),
            model: ColumnModel::Hurdle(spec),
            values,
            offset: vec![0.0; dim],
            scale: 1.0,
            c_multiplier: CMultiplier::Ratio,
            calibrated: false,
        }
    }

    pub fn with_c(mut self, c: CMultiplier) -> Self {
        self.c_multiplier = c;
        self
    }

    pub fn embed_dim(&self) -> usize {
        self.model.embed_dim()
    }

    /// Number of observed entries.
    pub fn observed_count(&self) -> usize {
        self.values.iter().filter(|v| v.is_some()).count()
    }

    /// Rows the column's loss spans: every row for a missing-nu hurdle
    /// column (the indicator is always observable), observed rows otherwise.
    /// This is the n_j entering the n_j - 1 normalization.
    pub fn loss_count(&self) -> usize {
        match &self.model {
            ColumnModel::Hurdle(h) if h.nu == Nu::Missing => self.values.len(),
            _ => self.observed_count(),
        }
    }

    /// Validates every observed value against the column's loss domain.
    /// For hurdle columns a value must equal nu or lie in the g domain.
    pub fn validate(&self) -> Result<()> {
        match &self.model {
            ColumnModel::Plain(loss) => {
                for &v in self.values.iter().flatten() {
                    loss.validate_target(v).map_err(|e| self.named(e))?;
                }
            }
            ColumnModel::Hurdle(h) => {
                for &v in self.values.iter().flatten() {
                    if Nu::Value(v) == h.nu {
                        continue;
                    }
                    h.g_loss.validate_target(v).map_err(|e| self.named(e))?;
                }
            }
        }
        Ok(())
    }

    /// Rewrites an unnamed degenerate-column error with this column's name.
    pub(crate) fn named(&self, e: Error) -> Error {
        match e {
            Error::DegenerateColumn { reason, .. } => Error::DegenerateColumn {
                column: self.name.clone(),
                reason,
            },
            Error::DomainViolation { loss, value } => Error::Schema(format!(
                "column {}: value {value} outside the {loss} domain",
                self.name
            )),
            other => other,
        }
    }

    /// Scaled loss of one cell given its embedded scores (offsets already
    /// included in `z`). Returns 0 for cells outside the loss scope.
    pub(crate) fn cell_loss(&self, row: usize, z: &[f64]) -> Result<f64> {
        let mut total = 0.0;
        for ell in 0..self.embed_dim() {
            if let Some(l) = self.term_loss(row, ell, z[ell])? {
                total += l;
            }
        }
        Ok(total)
    }

    /// Scaled loss of the (row, local dim) term at score `z`, or None when
    /// the term is absent (missing entry, or gated-off g component).
    pub(crate) fn term_loss(&self, row: usize, ell: usize, z: f64) -> Result<Option<f64>> {
        let a = self.values[row];
        match &self.model {
            ColumnModel::Plain(loss) => match a {
                Some(v) => Ok(Some(loss.eval(z, v)? / self.scale)),
                None => Ok(None),
            },
            ColumnModel::Hurdle(h) => {
                let in_scope = h.nu == Nu::Missing || a.is_some();
                if !in_scope {
                    return Ok(None);
                }
                let gated = match (h.nu, a) {
                    (Nu::Missing, Some(_)) => true,
                    (Nu::Value(v), Some(x)) => x != v,
                    _ => false,
                };
                match (h.mode, ell) {
                    (HurdleMode::Full, 0) => {
                        let t = crate::hurdle::encode_indicator(a, h.nu);
                        Ok(Some(h.lambda1 * h.binary_loss.eval(z, t)?))
                    }
                    (HurdleMode::Full, 1) => {
                        if gated {
                            Ok(Some(h.lambda2 * h.g_loss.eval(z, a.unwrap())?))
                        } else {
                            Ok(None)
                        }
                    }
                    (HurdleMode::Reduced, 0) => {
                        let t = crate::hurdle::encode_indicator(a, h.nu);
                        let mut l = h.lambda1 * h.binary_loss.eval(z, t)?;
                        if gated {
                            l += h.lambda2 * h.g_loss.eval(z, a.unwrap())?;
                        }
                        Ok(Some(l))
                    }
                    _ => Err(Error::Dimension(format!(
                        "embedded dim {ell} out of range for column {}",
                        self.name
                    ))),
                }
            }
        }
    }

    /// Scaled (gradient, curvature) of the (row, local dim) term, matching
    /// `term_loss`.
    pub(crate) fn term_deriv(&self, row: usize, ell: usize, z: f64) -> Result<Option<(f64, f64)>> {
        let a = self.values[row];
        match &self.model {
            ColumnModel::Plain(loss) => match a {
                Some(v) => {
                    let (g, c) = loss.deriv(z, v)?;
                    Ok(Some((g / self.scale, c / self.scale)))
                }
                None => Ok(None),
            },
            ColumnModel::Hurdle(h) => {
                let in_scope = h.nu == Nu::Missing || a.is_some();
                if !in_scope {
                    return Ok(None);
                }
                let gated = match (h.nu, a) {
                    (Nu::Missing, Some(_)) => true,
                    (Nu::Value(v), Some(x)) => x != v,
                    _ => false,
                };
                match (h.mode, ell) {
                    (HurdleMode::Full, 0) => {
                        let t = crate::hurdle::encode_indicator(a, h.nu);
                        let (g, c) = h.binary_loss.deriv(z, t)?;
                        Ok(Some((h.lambda1 * g, h.lambda1 * c)))
                    }
                    (HurdleMode::Full, 1) => {
                        if gated {
                            let (g, c) = h.g_loss.deriv(z, a.unwrap())?;
                            Ok(Some((h.lambda2 * g, h.lambda2 * c)))
                        } else {
                            Ok(None)
                        }
                    }
                    (HurdleMode::Reduced, 0) => {
                        let t = crate::hurdle::encode_indicator(a, h.nu);
                        let (bg, bc) = h.binary_loss.deriv(z, t)?;
                        let (mut g, mut c) = (h.lambda1 * bg, h.lambda1 * bc);
                        if gated {
                            let (gg, gc) = h.g_loss.deriv(z, a.unwrap())?;
                            g += h.lambda2 * gg;
                            c += h.lambda2 * gc;
                        }
                        Ok(Some((g, c)))
                    }
                    _ => Err(Error::Dimension(format!(
                        "embedded dim {ell} out of range for column {}",
                        self.name
                    ))),
                }
            }
        }
    }
}

/// Embedded-column placement of one table column within Y.
#[derive(Debug, Clone, Copy)]
pub struct ColumnSpan {
    pub column: usize,
    pub start: usize,
    pub dim: usize,
}

#[derive(Debug, Clone)]
pub struct Layout {
    pub spans: Vec<ColumnSpan>,
    pub total_dim: usize,
}

#[derive(Debug, Clone)]
pub struct DataTable {
    pub n_rows: usize,
    pub columns: Vec<Column>,
}

impl DataTable {
    pub fn new(columns: Vec<Column>) -> Result<Self> {
        let n_rows = columns
            .first()
            .map(|c| c.values.len())
            .ok_or_else(|| Error::config("a table needs at least one column"))?;
        for col in &columns {
            if col.values.len() != n_rows {
                return Err(Error::Dimension(format!(
                    "column {} has {} rows, expected {n_rows}",
                    col.name,
                    col.values.len()
                )));
            }
            col.validate()?;
        }
        Ok(DataTable { n_rows, columns })
    }

    pub fn column(&self, name: &str) -> Result<usize> {
        self.columns
            .iter()
            .position(|c| c.name == name)
            .ok_or_else(|| Error::Schema(format!("no column named {name}")))
    }

    pub fn layout(&self) -> Layout {
        let mut spans = Vec::with_capacity(self.columns.len());
        let mut start = 0;
        for (j, col) in self.columns.iter().enumerate() {
            let dim = col.embed_dim();
            spans.push(ColumnSpan {
                column: j,
                start,
                dim,
            });
            start += dim;
        }
        Layout {
            spans,
            total_dim: start,
        }
    }

    /// Label per embedded column: plain/reduced columns keep their name,
    /// full hurdle columns expose `name:b` and `name:g`.
    pub fn embedded_labels(&self) -> Vec<String> {
        let mut labels = Vec::new();
        for col in &self.columns {
            match col.embed_dim() {
                1 => labels.push(col.name.clone()),
                _ => {
                    labels.push(format!("{}:b", col.name));
                    labels.push(format!("{}:g", col.name));
                }
            }
        }
        labels
    }

    /// Sum over columns of (n_j - 1): the total loss of the calibrated
    /// offset-only model.
    pub fn total_loss_budget(&self) -> f64 {
        self.columns
            .iter()
            .map(|c| c.loss_count() as f64 - 1.0)
            .sum()
    }

    /// Sample standard deviation of the observed values per column
    /// (hurdle or plain alike), for the weighted reconstruction SSE.
    pub fn observed_column_sd(&self) -> Result<Vec<f64>> {
        self.columns
            .iter()
            .map(|col| {
                let obs: Vec<f64> = col.values.iter().flatten().copied().collect();
                if obs.len() < 2 {
                    return Err(Error::degenerate(&col.name, "fewer than 2 observed values"));
                }
                let m = obs.iter().sum::<f64>() / obs.len() as f64;
                let var =
                    obs.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (obs.len() as f64 - 1.0);
                if var <= 0.0 {
                    return Err(Error::degenerate(&col.name, "zero observed variance"));
                }
                Ok(var.sqrt())
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_ragged_columns() {
        let cols = vec![
            Column::plain("a", Loss::Quadratic, vec![Some(1.0), Some(2.0)]),
            Column::plain("b", Loss::Quadratic, vec![Some(1.0)]),
        ];
        assert!(DataTable::new(cols).is_err());
    }

    #[test]
    fn rejects_domain_violations() {
        let cols = vec![Column::plain(
            "counts",
            Loss::Poisson,
            vec![Some(1.0), Some(-2.0)],
        )];
        assert!(DataTable::new(cols).is_err());
    }

    #[test]
    fn hurdle_values_may_equal_nu_outside_g_domain() {
        // nu = 0 is outside the truncated-Poisson domain but valid data.
        let spec = HurdleSpec::new(Nu::Value(0.0), Loss::TruncatedPoisson, HurdleMode::Full);
        let col = Column::hurdle("d", spec, vec![Some(0.0), Some(2.0), None]);
        let t = DataTable::new(vec![col]).unwrap();
        assert_eq!(t.columns[0].observed_count(), 2);
        assert_eq!(t.columns[0].loss_count(), 2);
    }

    #[test]
    fn missing_nu_loss_count_spans_all_rows() {
        let spec = HurdleSpec::new(Nu::Missing, Loss::Quadratic, HurdleMode::Full);
        let col = Column::hurdle("a", spec, vec![Some(1.0), None, Some(2.0), None]);
        let t = DataTable::new(vec![col]).unwrap();
        assert_eq!(t.columns[0].observed_count(), 2);
        assert_eq!(t.columns[0].loss_count(), 4);
    }

    #[test]
    fn layout_and_labels() {
        let h = HurdleSpec::new(Nu::Value(0.0), Loss::Poisson, HurdleMode::Full);
        let cols = vec![
            Column::plain("x", Loss::Quadratic, vec![Some(0.0); 3]),
            Column::hurdle("d", h, vec![Some(0.0); 3]),
            Column::plain("y", Loss::Quadratic, vec![Some(0.0); 3]),
        ];
        // Bypass validation concerns: values are fine for these models.
        let t = DataTable::new(cols).unwrap();
        let layout = t.layout();
        assert_eq!(layout.total_dim, 4);
        assert_eq!(layout.spans[1].start, 1);
        assert_eq!(layout.spans[1].dim, 2);
        assert_eq!(layout.spans[2].start, 3);
        assert_eq!(t.embedded_labels(), vec!["x", "d:b", "d:g", "y"]);
    }

    #[test]
    fn term_scopes() {
        let spec = HurdleSpec::new(Nu::Missing, Loss::Quadratic, HurdleMode::Full);
        let col = Column::hurdle("a", spec, vec![Some(1.5), None]);
        // Observed row: binary term (a* = -1) and g term both present.
        assert!(col.term_loss(0, 0, 0.0).unwrap().is_some());
        assert!(col.term_loss(0, 1, 0.0).unwrap().is_some());
        // Missing row: binary term present (a* = +1), g term gated off.
        assert!(col.term_loss(1, 0, 0.0).unwrap().is_some());
        assert!(col.term_loss(1, 1, 0.0).unwrap().is_none());

        let plain = Column::plain("p", Loss::Quadratic, vec![Some(2.0), None]);
        assert!(plain.term_loss(0, 0, 0.0).unwrap().is_some());
        assert!(plain.term_loss(1, 0, 0.0).unwrap().is_none());
    }

    #[test]
    fn term_deriv_matches_hurdle_deriv() {
        let mut spec = HurdleSpec::new(Nu::Value(0.0), Loss::Poisson, HurdleMode::Full);
        spec.lambda1 = 0.8;
        spec.lambda2 = 1.7;
        let col = Column::hurdle("d", spec.clone(), vec![Some(0.0), Some(4.0)]);
        for row in 0..2 {
            let z = [0.4, -0.9];
            let (grad, curv) = spec.deriv(&z, col.values[row]).unwrap();
            for ell in 0..2 {
                let got = col.term_deriv(row, ell, z[ell]).unwrap();
                match got {
                    Some((g, c)) => {
                        assert!((g - grad[ell]).abs() < 1e-12);
                        assert!((c - curv[ell]).abs() < 1e-12);
                    }
                    None => {
                        assert_eq!(grad[ell], 0.0);
                        assert_eq!(curv[ell], 0.0);
                    }
                }
            }
        }
    }
}
