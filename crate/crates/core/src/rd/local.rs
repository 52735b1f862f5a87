//! Local-randomization inference: difference in means inside a window and
//! Fisherian permutation p-values with the treated count held fixed.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_cutoff, RdError, RdWindow, Side};
use crate::data::{Dataset, Variable};
use crate::rng::{domain, stream_id, substream};

/// Outcomes of the in-window units, split by treatment.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSample {
    pub treated: Vec<f64>,
    pub control: Vec<f64>,
}

impl WindowSample {
    pub fn new(treated: Vec<f64>, control: Vec<f64>) -> Self {
        Self { treated, control }
    }

    /// In-window outcomes of `ds`; rows where the outcome is missing are
    /// dropped.
    pub fn from_dataset(ds: &Dataset, outcome: Variable, window: &RdWindow) -> Self {
        let mut s = Self::new(Vec::new(), Vec::new());
        for r in &ds.records {
            let Some(y) = outcome.value(r) else { continue };
            match window.side(f64::from(r.pre_event_rank)) {
                Some(Side::Treated) => s.treated.push(y),
                Some(Side::Control) => s.control.push(y),
                None => {}
            }
        }
        s
    }

    pub fn ensure_nonempty(&self, window: &str) -> Result<(), RdError> {
        for (side, v) in [(Side::Treated, &self.treated), (Side::Control, &self.control)] {
            if v.is_empty() {
                return Err(RdError::EmptySide {
                    side,
                    window: window.to_string(),
                });
            }
        }
        Ok(())
    }

    /// `mean(treated) - mean(control)`.
    pub fn difference(&self) -> f64 {
        let mt = self.treated.iter().sum::<f64>() / self.treated.len() as f64;
        let mc = self.control.iter().sum::<f64>() / self.control.len() as f64;
        mt - mc
    }

    fn pooled(&self) -> Vec<f64> {
        self.treated.iter().chain(&self.control).copied().collect()
    }

    /// Fisherian p-value of `|difference|` under fixed-margins reassignment.
    pub fn fisher_test(&self, options: &PermutationOptions) -> Result<FisherTest, RdError> {
        self.ensure_nonempty("window")?;
        if options.n_permutations == 0 {
            return Err(RdError::InvalidArgument("n_permutations must be at least 1".into()));
        }
        let pooled = self.pooled();
        let n = pooled.len();
        let k = self.treated.len();
        let total: f64 = pooled.iter().sum();
        let stat = |sum_t: f64| (sum_t / k as f64 - (total - sum_t) / (n - k) as f64).abs();
        let observed = stat(self.treated.iter().sum());
        let scale = 1.0 + pooled.iter().fold(0.0f64, |m, y| m.max(y.abs()));
        let threshold = observed - 1e-10 * scale;

        let assignments = binomial_coefficient(n as u64, k as u64);
        let enumerate = match options.mode {
            PermutationMode::Enumerate => true,
            PermutationMode::Simulate => false,
            PermutationMode::Auto => assignments <= options.n_permutations as u128,
        };
        if enumerate {
            if n > 62 || assignments > ENUMERATION_LIMIT {
                return Err(RdError::TooManyAssignments(assignments));
            }
            let hits = enumerate_hits(&pooled, k, |s| stat(s) >= threshold);
            return Ok(FisherTest {
                observed,
                p_value: hits as f64 / assignments as f64,
                draws: assignments as usize,
                exact: true,
            });
        }

        let m = options.n_permutations;
        let hits: usize = (0..m)
            .into_par_iter()
            .map(|r| {
                let mut rng = substream(options.seed, stream_id(domain::PERMUTATION, 0, r as u64));
                let mut idx: Vec<usize> = (0..n).collect();
                let mut sum_t = 0.0;
                for i in 0..k {
                    let j = rng.random_range(i..n);
                    idx.swap(i, j);
                    sum_t += pooled[idx[i]];
                }
                usize::from(stat(sum_t) >= threshold)
            })
            .sum();
        Ok(FisherTest {
            observed,
            p_value: (1 + hits) as f64 / (1 + m) as f64,
            draws: m,
            exact: false,
        })
    }
}

const ENUMERATION_LIMIT: u128 = 50_000_000;

fn binomial_coefficient(n: u64, k: u64) -> u128 {
    let k = k.min(n - k);
    let mut acc = 1u128;
    for i in 0..k {
        match acc.checked_mul(u128::from(n - i)) {
            Some(v) => acc = v / u128::from(i + 1),
            None => return u128::MAX,
        }
    }
    acc
}

/// Counts `k`-subsets of `values` whose sum satisfies `accept`, walking
/// subsets in bitmask order (Gosper's hack).
fn enumerate_hits(values: &[f64], k: usize, accept: impl Fn(f64) -> bool) -> u64 {
    let n = values.len();
    if k == 0 {
        return u64::from(accept(0.0));
    }
    let mut mask: u64 = (1u64 << k) - 1;
    let limit: u64 = 1u64 << n;
    let mut hits = 0;
    while mask < limit {
        let mut sum = 0.0;
        let mut m = mask;
        while m != 0 {
            let i = m.trailing_zeros() as usize;
            sum += values[i];
            m &= m - 1;
        }
        if accept(sum) {
            hits += 1;
        }
        let c = mask & mask.wrapping_neg();
        let r = mask + c;
        mask = (((r ^ mask) >> 2) / c) | r;
    }
    hits
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PermutationMode {
    /// Enumerate every assignment when there are no more of them than
    /// `n_permutations`, otherwise simulate.
    Auto,
    Simulate,
    Enumerate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PermutationOptions {
    pub n_permutations: usize,
    pub seed: u64,
    pub mode: PermutationMode,
}

impl Default for PermutationOptions {
    fn default() -> Self {
        Self {
            n_permutations: 10_000,
            seed: 20170,
            mode: PermutationMode::Auto,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FisherTest {
    /// Observed `|difference in means|`.
    pub observed: f64,
    /// `(1 + hits) / (1 + draws)` when simulated, `hits / assignments` when
    /// enumerated.
    pub p_value: f64,
    pub draws: usize,
    pub exact: bool,
}

pub fn diff_in_means(ds: &Dataset, outcome: Variable, window: &RdWindow) -> Result<f64, RdError> {
    let s = WindowSample::from_dataset(ds, outcome, window);
    s.ensure_nonempty(&window.to_string())?;
    Ok(s.difference())
}

pub fn fisher_p(
    ds: &Dataset,
    outcome: Variable,
    window: &RdWindow,
    options: &PermutationOptions,
) -> Result<f64, RdError> {
    let s = WindowSample::from_dataset(ds, outcome, window);
    s.ensure_nonempty(&window.to_string())?;
    Ok(s.fisher_test(options)?.p_value)
}

/// Local-randomization estimate laid out like a results table column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RdLocalResult {
    pub outcome_name: String,
    pub window: RdWindow,
    pub estimate: f64,
    pub p_value: f64,
    pub n_treated: usize,
    pub n_control: usize,
    pub permutations: usize,
    pub exact: bool,
}

pub fn rd_local_estimate(
    ds: &Dataset,
    outcome: Variable,
    window: &RdWindow,
    options: &PermutationOptions,
) -> Result<RdLocalResult, RdError> {
    let s = WindowSample::from_dataset(ds, outcome, window);
    s.ensure_nonempty(&window.to_string())?;
    let test = s.fisher_test(options)?;
    Ok(RdLocalResult {
        outcome_name: outcome.name().to_string(),
        window: *window,
        estimate: s.difference(),
        p_value: test.p_value,
        n_treated: s.treated.len(),
        n_control: s.control.len(),
        permutations: test.draws,
        exact: test.exact,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowSearch {
    /// Minimum balance p-value every nested window must reach.
    pub threshold: f64,
    pub max_half_width: u32,
    pub permutations: PermutationOptions,
}

impl Default for WindowSearch {
    fn default() -> Self {
        Self {
            threshold: 0.15,
            max_half_width: 10,
            permutations: PermutationOptions {
                n_permutations: 2_000,
                ..PermutationOptions::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceStep {
    pub half_width: u32,
    pub window: RdWindow,
    pub min_p: f64,
    pub worst_covariate: Option<Variable>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowSelection {
    pub window: RdWindow,
    pub half_width: u32,
    /// False when even the smallest window fails the balance threshold.
    pub balanced: bool,
    pub steps: Vec<BalanceStep>,
}

/// Smallest covariate balance p-value in `window`. Covariates with an empty
/// side after dropping missing values are skipped.
pub fn min_balance_p(
    ds: &Dataset,
    covariates: &[Variable],
    window: &RdWindow,
    options: &PermutationOptions,
) -> Result<(f64, Option<Variable>), RdError> {
    let mut worst = (1.0, None);
    for &cov in covariates {
        let s = WindowSample::from_dataset(ds, cov, window);
        if s.treated.is_empty() || s.control.is_empty() {
            continue;
        }
        let p = s.fisher_test(options)?.p_value;
        if p < worst.0 {
            worst = (p, Some(cov));
        }
    }
    Ok(worst)
}

/// Widens a symmetric window one rank per side at a time and keeps the
/// widest one for which it and every nested window have minimum covariate
/// balance p-value at or above the threshold.
pub fn select_window(
    ds: &Dataset,
    covariates: &[Variable],
    cutoff: f64,
    search: &WindowSearch,
) -> Result<WindowSelection, RdError> {
    check_cutoff(cutoff)?;
    if covariates.is_empty() {
        return Err(RdError::InvalidArgument("at least one covariate is required".into()));
    }
    let (min_rank, max_rank) = ds
        .records
        .iter()
        .fold((u32::MAX, 0), |(lo, hi), r| (lo.min(r.pre_event_rank), hi.max(r.pre_event_rank)));
    let mut steps = Vec::new();
    let mut accepted: Option<u32> = None;
    for w in 1..=search.max_half_width.max(1) {
        let window = RdWindow::symmetric(cutoff, w)?;
        if window.lower < i64::from(min_rank) || window.upper > i64::from(max_rank) {
            break;
        }
        let (min_p, worst) = min_balance_p(ds, covariates, &window, &search.permutations)?;
        steps.push(BalanceStep {
            half_width: w,
            window,
            min_p,
            worst_covariate: worst,
        });
        if min_p >= search.threshold {
            accepted = Some(w);
        } else {
            break;
        }
    }
    let half_width = accepted.unwrap_or(1);
    Ok(WindowSelection {
        window: RdWindow::symmetric(cutoff, half_width)?,
        half_width,
        balanced: accepted.is_some(),
        steps,
    })
}
