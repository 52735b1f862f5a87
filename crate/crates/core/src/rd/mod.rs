//! Regression-discontinuity estimation around a half-integer rank cutoff.
//!
//! Treatment is `rank < cutoff`: with the default cutoff 30.5 the treated
//! athletes are those entering Round 1 with pre-event rank 30 or better.

pub mod continuity;
pub mod local;
pub mod plot;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{DataError, Regime};
use crate::linalg::LinalgError;

pub use continuity::{
    diff_in_disc, diff_in_disc_estimate, local_linear_jump, mse_optimal_bandwidth,
    rd_continuity, rd_continuity_estimate, triangular_weight, BandwidthChoice, ClusterBy,
    ContinuitySpec, DiffInDiscResult, Kernel, LocalLinearFit, RdContinuityResult, RdSample,
};
pub use local::{
    diff_in_means, fisher_p, rd_local_estimate, select_window, FisherTest, PermutationMode,
    PermutationOptions, RdLocalResult, WindowSample, WindowSearch, WindowSelection,
};
pub use plot::{rd_plot_data, write_plot_csv, PlotRow};

/// Default elimination cutoff between pre-event ranks 30 and 31.
pub const DEFAULT_CUTOFF: f64 = 30.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Treated,
    Control,
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::Treated => "treated",
            Side::Control => "control",
        })
    }
}

#[derive(Debug, Error)]
pub enum RdError {
    #[error("{side} side of {window} has no observations")]
    EmptySide { side: Side, window: String },
    #[error("{side} side needs {needed} distinct running values with positive weight, found {found}")]
    InsufficientSupport {
        side: Side,
        needed: usize,
        found: usize,
    },
    #[error("{side} side has {found} cluster(s); at least 2 are required")]
    TooFewClusters { side: Side, found: usize },
    #[error("regime `{0}` has no observations inside the bandwidth")]
    MissingRegime(Regime),
    #[error("invalid window: {0}")]
    InvalidWindow(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("enumeration over {0} assignments exceeds the limit")]
    TooManyAssignments(u128),
    #[error("regression failed: {0}")]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Data(#[from] DataError),
}

/// Closed rank window `[lower, upper]` straddling a half-integer cutoff.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RdWindow {
    pub lower: i64,
    pub upper: i64,
    pub cutoff: f64,
}

impl RdWindow {
    pub fn new(lower: i64, upper: i64, cutoff: f64) -> Result<Self, RdError> {
        check_cutoff(cutoff)?;
        let (fl, ce) = (cutoff.floor() as i64, cutoff.ceil() as i64);
        if !(lower <= fl && ce <= upper) {
            return Err(RdError::InvalidWindow(format!(
                "[{lower}, {upper}] does not straddle cutoff {cutoff}"
            )));
        }
        Ok(Self { lower, upper, cutoff })
    }

    /// Window with `half_width` ranks on each side of the cutoff, so
    /// `half_width = 1` around 30.5 is `[30, 31]`.
    pub fn symmetric(cutoff: f64, half_width: u32) -> Result<Self, RdError> {
        check_cutoff(cutoff)?;
        if half_width == 0 {
            return Err(RdError::InvalidWindow("half width must be at least 1".into()));
        }
        let w = i64::from(half_width);
        Self::new(cutoff.floor() as i64 - w + 1, cutoff.ceil() as i64 + w - 1, cutoff)
    }

    pub fn half_width(&self) -> u32 {
        let left = self.cutoff.floor() as i64 - self.lower + 1;
        let right = self.upper - self.cutoff.ceil() as i64 + 1;
        left.min(right).max(0) as u32
    }

    pub fn contains(&self, rank: f64) -> bool {
        rank >= self.lower as f64 && rank <= self.upper as f64
    }

    pub fn side(&self, rank: f64) -> Option<Side> {
        if !self.contains(rank) {
            None
        } else if rank < self.cutoff {
            Some(Side::Treated)
        } else {
            Some(Side::Control)
        }
    }
}

impl fmt::Display for RdWindow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.lower, self.upper)
    }
}

pub(crate) fn check_cutoff(cutoff: f64) -> Result<(), RdError> {
    if !cutoff.is_finite() || cutoff.fract() == 0.0 {
        return Err(RdError::InvalidArgument(format!(
            "cutoff must be a finite non-integer, got {cutoff}"
        )));
    }
    Ok(())
}

/// Integer ranks given positive weight by a symmetric bandwidth `h`, that is
/// ranks with `|rank - cutoff| < h`.
pub fn bandwidth_interval(cutoff: f64, h: f64) -> (i64, i64) {
    let lo = (cutoff - h).floor() as i64 + 1;
    let hi = (cutoff + h).ceil() as i64 - 1;
    (lo, hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetric_windows() {
        assert_eq!(RdWindow::symmetric(30.5, 1).unwrap().to_string(), "[30, 31]");
        assert_eq!(RdWindow::symmetric(30.5, 3).unwrap().to_string(), "[28, 33]");
        assert_eq!(RdWindow::symmetric(30.5, 5).unwrap().to_string(), "[26, 35]");
        assert_eq!(RdWindow::symmetric(20.5, 2).unwrap().to_string(), "[19, 22]");
        assert_eq!(RdWindow::symmetric(30.5, 3).unwrap().half_width(), 3);
    }

    #[test]
    fn invalid_windows() {
        assert!(RdWindow::new(31, 35, 30.5).is_err());
        assert!(RdWindow::new(28, 33, 30.0).is_err());
        assert!(RdWindow::symmetric(30.5, 0).is_err());
    }

    #[test]
    fn sides() {
        let w = RdWindow::symmetric(30.5, 2).unwrap();
        assert_eq!(w.side(30.0), Some(Side::Treated));
        assert_eq!(w.side(31.0), Some(Side::Control));
        assert_eq!(w.side(33.0), None);
    }

    #[test]
    fn bandwidth_rank_interval() {
        assert_eq!(bandwidth_interval(30.5, 6.0), (25, 36));
        assert_eq!(bandwidth_interval(30.5, 5.5), (26, 35));
        assert_eq!(bandwidth_interval(30.5, 5.6), (25, 36));
    }
}
