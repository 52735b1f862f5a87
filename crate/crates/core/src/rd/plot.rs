//! Binned means with side-wise polynomial and constant fits for RD plots.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{check_cutoff, RdError, RdWindow};
use crate::data::{DataError, Dataset, Variable};
use crate::linalg::{polyfit, polyval};
use crate::stats::{mean, normal_quantile, sample_sd};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotRow {
    pub rank: u32,
    pub n: usize,
    pub bin_mean: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    /// Side-wise global polynomial evaluated at `rank`.
    pub poly_fit: f64,
    /// Side mean inside the constant-fit window; `None` outside it.
    pub const_fit: Option<f64>,
}

/// One row per observed rank. The polynomial degree drops on a side that
/// has too few distinct ranks to support it.
pub fn rd_plot_data(
    ds: &Dataset,
    outcome: Variable,
    cutoff: f64,
    window: &RdWindow,
    poly_degree: usize,
) -> Result<Vec<PlotRow>, RdError> {
    check_cutoff(cutoff)?;
    let mut bins: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
    for r in &ds.records {
        if let Some(y) = outcome.value(r) {
            bins.entry(r.pre_event_rank).or_default().push(y);
        }
    }
    if bins.is_empty() {
        return Err(RdError::Data(DataError::Empty));
    }

    let mut poly = [Vec::new(), Vec::new()];
    let mut constant = [None, None];
    for (k, treated) in [true, false].into_iter().enumerate() {
        let side: Vec<(f64, f64)> = bins
            .iter()
            .filter(|(&rank, _)| (f64::from(rank) < cutoff) == treated)
            .flat_map(|(&rank, ys)| ys.iter().map(move |&y| (f64::from(rank) - cutoff, y)))
            .collect();
        if side.is_empty() {
            continue;
        }
        let distinct = bins
            .keys()
            .filter(|&&rank| (f64::from(rank) < cutoff) == treated)
            .count();
        let (x, y): (Vec<f64>, Vec<f64>) = side.into_iter().unzip();
        poly[k] = polyfit(&x, &y, poly_degree.min(distinct - 1))?;
        let in_window: Vec<f64> = ds
            .records
            .iter()
            .filter(|r| {
                let rank = f64::from(r.pre_event_rank);
                window.contains(rank) && (rank < cutoff) == treated
            })
            .filter_map(|r| outcome.value(r))
            .collect();
        constant[k] = mean(&in_window);
    }

    let z = normal_quantile(0.975);
    Ok(bins
        .into_iter()
        .map(|(rank, ys)| {
            let x = f64::from(rank);
            let k = if x < cutoff { 0 } else { 1 };
            let m = mean(&ys).unwrap_or(f64::NAN);
            let half = z * sample_sd(&ys).unwrap_or(0.0) / (ys.len() as f64).sqrt();
            PlotRow {
                rank,
                n: ys.len(),
                bin_mean: m,
                ci_lo: m - half,
                ci_hi: m + half,
                poly_fit: polyval(&poly[k], x - cutoff),
                const_fit: if window.contains(x) { constant[k] } else { None },
            }
        })
        .collect())
}

/// CSV with columns `rank,bin_mean,ci_lo,ci_hi,poly_fit,const_fit`; an
/// empty `const_fit` marks ranks outside the window.
pub fn write_plot_csv<W: Write>(rows: &[PlotRow], writer: W) -> Result<(), DataError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["rank", "bin_mean", "ci_lo", "ci_hi", "poly_fit", "const_fit"])?;
    for r in rows {
        w.write_record([
            r.rank.to_string(),
            r.bin_mean.to_string(),
            r.ci_lo.to_string(),
            r.ci_hi.to_string(),
            r.poly_fit.to_string(),
            r.const_fit.map(|v| v.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{test_record, Regime};
    use approx::assert_relative_eq;

    fn dataset(value: impl Fn(u32, usize) -> f64) -> Dataset {
        let mut records = Vec::new();
        for e in 0..5 {
            for rank in 1..=50 {
                let mut r = test_record(rank, Regime::After);
                r.round1_total = value(rank, e);
                records.push(r);
            }
        }
        Dataset::new(records, "plot")
    }

    #[test]
    fn constant_outcome() {
        let ds = dataset(|_, _| 0.6);
        let w = RdWindow::symmetric(30.5, 3).unwrap();
        let rows = rd_plot_data(&ds, Variable::Round1Total, 30.5, &w, 3).unwrap();
        assert_eq!(rows.len(), 50);
        for r in &rows {
            assert_relative_eq!(r.bin_mean, 0.6, epsilon = 1e-12);
            assert_relative_eq!(r.poly_fit, 0.6, epsilon = 1e-9);
            assert_eq!(r.ci_lo, r.ci_hi);
        }
    }

    #[test]
    fn constant_fit_is_window_mean() {
        let ds = dataset(|rank, e| f64::from(rank) + e as f64);
        let w = RdWindow::symmetric(30.5, 2).unwrap();
        let rows = rd_plot_data(&ds, Variable::Round1Total, 30.5, &w, 3).unwrap();
        let at = |rank: u32| rows.iter().find(|r| r.rank == rank).unwrap();
        // Ranks 29, 30 with event offsets 0..5: mean 29.5 + 2.
        assert_relative_eq!(at(29).const_fit.unwrap(), 31.5);
        assert_relative_eq!(at(32).const_fit.unwrap(), 33.5);
        assert_eq!(at(28).const_fit, None);
        // Linear truth: cubic fits meet at the cutoff.
        let left = at(30).poly_fit + 0.5;
        let right = at(31).poly_fit - 0.5;
        assert_relative_eq!(left, right, epsilon = 1e-8);
    }

    #[test]
    fn csv_columns() {
        let ds = dataset(|_, _| 1.0);
        let w = RdWindow::symmetric(30.5, 1).unwrap();
        let rows = rd_plot_data(&ds, Variable::Round1Total, 30.5, &w, 3).unwrap();
        let mut buf = Vec::new();
        write_plot_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("rank,bin_mean,ci_lo,ci_hi,poly_fit,const_fit\n"));
        assert_eq!(text.lines().count(), 51);
    }
}
