//! Continuity-based RD: kernel-weighted local linear fits at the cutoff,
//! plug-in MSE-optimal bandwidth, robust bias correction, clustered
//! standard errors and the difference-in-discontinuities regression.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{bandwidth_interval, check_cutoff, RdError, Side};
use crate::data::{Dataset, Regime, Variable};
use crate::linalg::{clustered_variance, polyfit, wls, Matrix, WlsFit};
use crate::stats::{normal_quantile, normal_two_sided_p, sample_sd};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kernel {
    Triangular,
    Uniform,
}

impl Kernel {
    /// Weight at scaled distance `u = (x - c) / h`; zero for `|u| >= 1`.
    pub fn weight(self, u: f64) -> f64 {
        let a = u.abs();
        match self {
            Kernel::Triangular => (1.0 - a).max(0.0),
            Kernel::Uniform => {
                if a < 1.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Boundary bias constant of the local linear estimator: leading bias
    /// is `h^2 * bias_constant * m''(c) / 2`.
    fn bias_constant(self) -> f64 {
        match self {
            Kernel::Triangular => -0.1,
            Kernel::Uniform => -1.0 / 6.0,
        }
    }

    /// Boundary variance constant: variance of one side's intercept is
    /// `variance_constant * sigma^2 / (f * n * h)`.
    fn variance_constant(self) -> f64 {
        match self {
            Kernel::Triangular => 4.8,
            Kernel::Uniform => 4.0,
        }
    }
}

pub fn triangular_weight(rank: f64, cutoff: f64, h: f64) -> f64 {
    Kernel::Triangular.weight((rank - cutoff) / h)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClusterBy {
    Athlete,
    Event,
    /// Every row is its own cluster (heteroskedasticity-robust SEs).
    Observation,
}

impl std::str::FromStr for ClusterBy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "athlete" | "athlete_id" => Ok(ClusterBy::Athlete),
            "event" | "event_id" => Ok(ClusterBy::Event),
            "observation" | "none" => Ok(ClusterBy::Observation),
            _ => Err(format!("unknown cluster variable `{s}`")),
        }
    }
}

/// Column-oriented estimation sample.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RdSample {
    pub running: Vec<f64>,
    pub outcome: Vec<f64>,
    pub clusters: Vec<usize>,
    /// One vector per covariate, aligned with `running`.
    pub covariates: Vec<Vec<f64>>,
    pub covariate_names: Vec<String>,
    /// `true` for rows in the After regime.
    pub period: Vec<bool>,
}

impl RdSample {
    pub fn new(running: Vec<f64>, outcome: Vec<f64>, clusters: Vec<usize>) -> Self {
        let n = running.len();
        Self {
            running,
            outcome,
            clusters,
            covariates: Vec::new(),
            covariate_names: Vec::new(),
            period: vec![false; n],
        }
    }

    /// Rows of `ds` with the outcome and every covariate present; running
    /// variable is the pre-event rank.
    pub fn from_dataset(
        ds: &Dataset,
        outcome: Variable,
        covariates: &[Variable],
        cluster: ClusterBy,
    ) -> Self {
        let mut s = Self {
            covariates: vec![Vec::new(); covariates.len()],
            covariate_names: covariates.iter().map(|v| v.name().to_string()).collect(),
            ..Self::default()
        };
        let mut ids: HashMap<&str, usize> = HashMap::new();
        for (row, r) in ds.records.iter().enumerate() {
            let Some(y) = outcome.value(r) else { continue };
            let Some(covs) = covariates.iter().map(|v| v.value(r)).collect::<Option<Vec<f64>>>() else {
                continue;
            };
            let cluster_id = match cluster {
                ClusterBy::Athlete => {
                    let next = ids.len();
                    *ids.entry(r.athlete_id.as_str()).or_insert(next)
                }
                ClusterBy::Event => {
                    let next = ids.len();
                    *ids.entry(r.event_id.as_str()).or_insert(next)
                }
                ClusterBy::Observation => row,
            };
            s.running.push(f64::from(r.pre_event_rank));
            s.outcome.push(y);
            s.clusters.push(cluster_id);
            s.period.push(r.regime == Regime::After);
            for (col, v) in s.covariates.iter_mut().zip(covs) {
                col.push(v);
            }
        }
        s
    }

    pub fn len(&self) -> usize {
        self.running.len()
    }

    pub fn is_empty(&self) -> bool {
        self.running.is_empty()
    }

    fn check_shape(&self) -> Result<(), RdError> {
        let n = self.running.len();
        if self.outcome.len() != n
            || self.clusters.len() != n
            || self.period.len() != n
            || self.covariates.iter().any(|c| c.len() != n)
            || self.covariates.len() != self.covariate_names.len()
        {
            return Err(RdError::InvalidArgument("sample columns differ in length".into()));
        }
        Ok(())
    }

    /// Copy with the outcome replaced by `f(y)`.
    pub fn map_outcome(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            outcome: self.outcome.iter().map(|&y| f(y)).collect(),
            ..self.clone()
        }
    }

    /// Rows where `keep` holds.
    pub fn subset(&self, keep: impl Fn(usize) -> bool) -> Self {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| keep(i)).collect();
        let pick = |v: &Vec<f64>| idx.iter().map(|&i| v[i]).collect::<Vec<f64>>();
        Self {
            running: pick(&self.running),
            outcome: pick(&self.outcome),
            clusters: idx.iter().map(|&i| self.clusters[i]).collect(),
            covariates: self.covariates.iter().map(pick).collect(),
            covariate_names: self.covariate_names.clone(),
            period: idx.iter().map(|&i| self.period[i]).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuitySpec {
    pub kernel: Kernel,
    /// Fixed bandwidth; `None` selects the MSE-optimal one.
    pub bandwidth: Option<f64>,
    pub covariates: Vec<Variable>,
    pub cluster: ClusterBy,
}

impl Default for ContinuitySpec {
    fn default() -> Self {
        Self {
            kernel: Kernel::Triangular,
            bandwidth: None,
            covariates: Vec::new(),
            cluster: ClusterBy::Athlete,
        }
    }
}

fn side_of(x: f64, cutoff: f64) -> Side {
    if x < cutoff {
        Side::Treated
    } else {
        Side::Control
    }
}

fn kernel_weights(sample: &RdSample, cutoff: f64, h: f64, kernel: Kernel) -> Vec<f64> {
    sample
        .running
        .iter()
        .map(|&x| kernel.weight((x - cutoff) / h))
        .collect()
}

/// Distinct running values with positive weight on one side.
fn distinct_support(sample: &RdSample, w: &[f64], cutoff: f64, side: Side, rows: &dyn Fn(usize) -> bool) -> usize {
    let mut vals: Vec<f64> = (0..sample.len())
        .filter(|&i| w[i] > 0.0 && rows(i) && side_of(sample.running[i], cutoff) == side)
        .map(|i| sample.running[i])
        .collect();
    vals.sort_by(f64::total_cmp);
    vals.dedup();
    vals.len()
}

fn require_support(
    sample: &RdSample,
    w: &[f64],
    cutoff: f64,
    needed: usize,
    rows: &dyn Fn(usize) -> bool,
) -> Result<(), RdError> {
    for side in [Side::Treated, Side::Control] {
        let found = distinct_support(sample, w, cutoff, side, rows);
        if found < needed {
            return Err(RdError::InsufficientSupport { side, needed, found });
        }
    }
    Ok(())
}

fn effective_counts(sample: &RdSample, w: &[f64], cutoff: f64) -> (usize, usize) {
    let mut t = 0;
    let mut c = 0;
    for i in 0..sample.len() {
        if w[i] > 0.0 {
            match side_of(sample.running[i], cutoff) {
                Side::Treated => t += 1,
                Side::Control => c += 1,
            }
        }
    }
    (t, c)
}

/// Covariates that vary among positive-weight rows; constant ones would
/// be collinear with the intercept.
fn usable_covariates(sample: &RdSample, w: &[f64]) -> Vec<usize> {
    (0..sample.covariates.len())
        .filter(|&j| {
            let col = &sample.covariates[j];
            let mut vals = (0..sample.len()).filter(|&i| w[i] > 0.0).map(|i| col[i]);
            match vals.next() {
                Some(first) => vals.any(|v| v != first),
                None => false,
            }
        })
        .collect()
}

/// Design with columns `1, T, r, T r` (plus `r^2, T r^2` when `quadratic`)
/// followed by the selected covariates.
fn side_design(sample: &RdSample, cutoff: f64, quadratic: bool, covs: &[usize]) -> Matrix<f64> {
    let p = if quadratic { 6 } else { 4 } + covs.len();
    let mut x = Matrix::zeros(sample.len(), p);
    for i in 0..sample.len() {
        let r = sample.running[i] - cutoff;
        let t = if r < 0.0 { 1.0 } else { 0.0 };
        let mut row = vec![1.0, t, r, t * r];
        if quadratic {
            row.extend([r * r, t * r * r]);
        }
        row.extend(covs.iter().map(|&j| sample.covariates[j][i]));
        for (j, v) in row.into_iter().enumerate() {
            x.set(i, j, v);
        }
    }
    x
}

/// Local linear fit at a fixed bandwidth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalLinearFit {
    /// Coefficient on the treatment indicator.
    pub tau: f64,
    /// `[intercept, T, r, T r, covariates...]` with `r = running - cutoff`.
    pub coefficients: Vec<f64>,
    pub h: f64,
    pub effective_n_treated: usize,
    pub effective_n_control: usize,
    pub covariates_used: Vec<String>,
}

struct Fitted {
    x: Matrix<f64>,
    w: Vec<f64>,
    fit: WlsFit<f64>,
    covs: Vec<usize>,
}

fn fit_local(
    sample: &RdSample,
    cutoff: f64,
    h: f64,
    kernel: Kernel,
    quadratic: bool,
) -> Result<Fitted, RdError> {
    sample.check_shape()?;
    check_cutoff(cutoff)?;
    if !(h > 0.0 && h.is_finite()) {
        return Err(RdError::InvalidArgument(format!("bandwidth must be positive, got {h}")));
    }
    let w = kernel_weights(sample, cutoff, h, kernel);
    require_support(sample, &w, cutoff, if quadratic { 3 } else { 2 }, &|_| true)?;
    let covs = usable_covariates(sample, &w);
    let x = side_design(sample, cutoff, quadratic, &covs);
    let fit = wls(&x, &sample.outcome, &w)?;
    Ok(Fitted { x, w, fit, covs })
}

/// Weighted least squares of the outcome on `1, T, r, T r` (and additive
/// covariates) with kernel weights; `tau` is the coefficient on `T`.
pub fn local_linear_jump(
    sample: &RdSample,
    cutoff: f64,
    h: f64,
    kernel: Kernel,
) -> Result<LocalLinearFit, RdError> {
    let f = fit_local(sample, cutoff, h, kernel, false)?;
    let (t, c) = effective_counts(sample, &f.w, cutoff);
    Ok(LocalLinearFit {
        tau: f.fit.coefficients[1],
        coefficients: f.fit.coefficients,
        h,
        effective_n_treated: t,
        effective_n_control: c,
        covariates_used: f.covs.iter().map(|&j| sample.covariate_names[j].clone()).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandwidthChoice {
    pub h: f64,
    /// Bias-estimation bandwidth; equal to `h`.
    pub b: f64,
    pub pilot: f64,
    /// Estimated leading bias constant `B` in `MSE(h) = (h^2 B)^2 + V/(n h)`.
    pub bias: f64,
    pub variance: f64,
    /// True when the plug-in was degenerate and the pilot was used.
    pub fallback: bool,
}

const MIN_PER_SIDE: usize = 20;

/// Twice the distance from the cutoff to the second-closest distinct
/// running value, taking the larger side. Any bandwidth above this leaves
/// at least two mass points with positive weight on each side.
fn support_floor(sample: &RdSample, cutoff: f64) -> Result<f64, RdError> {
    let mut floor: f64 = 0.0;
    for side in [Side::Treated, Side::Control] {
        let mut d: Vec<f64> = sample
            .running
            .iter()
            .filter(|&&x| side_of(x, cutoff) == side)
            .map(|&x| (x - cutoff).abs())
            .collect();
        d.sort_by(f64::total_cmp);
        d.dedup();
        if d.len() < 3 {
            return Err(RdError::InsufficientSupport { side, needed: 3, found: d.len() });
        }
        floor = floor.max(2.0 * d[1]);
    }
    Ok(floor)
}

/// Plug-in bandwidth minimizing `(h^2 B)^2 + V/(n h)`, so
/// `h = (V / (4 n B^2))^(1/5)`.
///
/// `B` is half the kernel bias constant times the jump in second
/// derivatives from side-wise global quartic fits. `V` adds the kernel
/// variance constant times `sigma^2 / f` per side, with `sigma^2` the
/// kernel-weighted residual variance of a side-wise local linear fit and
/// `f` the side density, both at the pilot bandwidth `sd(x) n^(-1/5)`.
pub fn mse_optimal_bandwidth(
    sample: &RdSample,
    cutoff: f64,
    kernel: Kernel,
) -> Result<BandwidthChoice, RdError> {
    sample.check_shape()?;
    check_cutoff(cutoff)?;
    let n = sample.len();
    for side in [Side::Treated, Side::Control] {
        let found = sample.running.iter().filter(|&&x| side_of(x, cutoff) == side).count();
        if found < MIN_PER_SIDE {
            return Err(RdError::InsufficientSupport { side, needed: MIN_PER_SIDE, found });
        }
    }
    let floor = support_floor(sample, cutoff)?;
    let max_dist = sample
        .running
        .iter()
        .fold(0.0f64, |m, &x| m.max((x - cutoff).abs()));
    let nf = n as f64;
    let sd = sample_sd(&sample.running).unwrap_or(0.0);
    let pilot = (sd * nf.powf(-0.2)).max(floor).min(max_dist.max(floor));

    let mut curvature = [0.0; 2];
    let mut variance = 0.0;
    for (k, side) in [Side::Treated, Side::Control].into_iter().enumerate() {
        let rows: Vec<usize> = (0..n)
            .filter(|&i| side_of(sample.running[i], cutoff) == side)
            .collect();
        let r: Vec<f64> = rows.iter().map(|&i| sample.running[i] - cutoff).collect();
        let y: Vec<f64> = rows.iter().map(|&i| sample.outcome[i]).collect();
        let mut distinct = r.clone();
        distinct.sort_by(f64::total_cmp);
        distinct.dedup();
        let degree = 4.min(distinct.len() - 1);
        curvature[k] = if degree >= 2 {
            polyfit(&r, &y, degree).map(|c| 2.0 * c[2]).unwrap_or(0.0)
        } else {
            0.0
        };

        let w: Vec<f64> = r.iter().map(|&ri| kernel.weight(ri / pilot)).collect();
        let x = Matrix::from_rows(&r.iter().map(|&ri| vec![1.0, ri]).collect::<Vec<_>>())?;
        let fit = wls(&x, &y, &w)?;
        let sw: f64 = w.iter().sum();
        let sigma2 = w
            .iter()
            .zip(&fit.residuals)
            .map(|(&wi, &e)| wi * e * e)
            .sum::<f64>()
            / sw;
        let inside = r.iter().filter(|&&ri| ri.abs() < pilot).count() as f64;
        let density = inside / (nf * pilot);
        variance += sigma2 / density;
    }
    let variance = kernel.variance_constant() * variance;
    let bias = 0.5 * kernel.bias_constant() * (curvature[0] - curvature[1]);

    let raw = (variance / (4.0 * nf * bias * bias)).powf(0.2);
    let (h, fallback) = if raw.is_finite() && bias != 0.0 && variance > 0.0 {
        (raw.clamp(floor, max_dist.max(floor)), false)
    } else {
        (pilot, true)
    };
    Ok(BandwidthChoice { h, b: h, pilot, bias, variance, fallback })
}

/// Two-sided normal p; a zero standard error (a noiseless outcome) gives 1
/// for a zero estimate and 0 otherwise.
fn z_test_p(estimate: f64, se: f64) -> f64 {
    if se > 0.0 {
        normal_two_sided_p(estimate / se)
    } else if estimate.abs() < 1e-12 {
        1.0
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RdContinuityResult {
    pub outcome_name: String,
    pub cutoff: f64,
    pub kernel: Kernel,
    pub tau_conventional: f64,
    pub tau_bias_corrected: f64,
    pub se_conventional: f64,
    pub se_robust: f64,
    pub p_conventional: f64,
    pub p_robust: f64,
    /// 95% robust bias-corrected interval.
    pub ci_robust: (f64, f64),
    pub bandwidth_h: f64,
    pub bandwidth_b: f64,
    /// Integer ranks with positive kernel weight.
    pub rank_interval: (i64, i64),
    pub effective_n_treated: usize,
    pub effective_n_control: usize,
    pub clusters_treated: usize,
    pub clusters_control: usize,
    pub covariates_used: Vec<String>,
    pub bandwidth_fallback: bool,
}

fn check_clusters(sample: &RdSample, w: &[f64], cutoff: f64, rows: &dyn Fn(usize) -> bool) -> Result<(usize, usize), RdError> {
    let mut counts = [0usize; 2];
    for (k, side) in [Side::Treated, Side::Control].into_iter().enumerate() {
        let mut ids: Vec<usize> = (0..sample.len())
            .filter(|&i| w[i] > 0.0 && rows(i) && side_of(sample.running[i], cutoff) == side)
            .map(|i| sample.clusters[i])
            .collect();
        ids.sort_unstable();
        ids.dedup();
        if ids.len() < 2 {
            return Err(RdError::TooFewClusters { side, found: ids.len() });
        }
        counts[k] = ids.len();
    }
    Ok((counts[0], counts[1]))
}

fn resolve_bandwidth(
    sample: &RdSample,
    cutoff: f64,
    kernel: Kernel,
    fixed: Option<f64>,
) -> Result<(f64, bool), RdError> {
    match fixed {
        Some(h) => Ok((h, false)),
        None => {
            let bw = mse_optimal_bandwidth(sample, cutoff, kernel)?;
            Ok((bw.h, bw.fallback))
        }
    }
}

/// Conventional and robust bias-corrected RD inference on a prepared
/// sample. Covariates present in the sample enter additively.
///
/// With `b = h` the bias-corrected estimate equals the treatment
/// coefficient of the local quadratic fit at `h`: subtracting the
/// quadratic-fit bias `sum_i a_i (r_i^2 g0 + T_i r_i^2 g1)` from the linear
/// estimate is exactly the partialled-out quadratic coefficient. Its
/// variance uses that fit's influence weights and residuals.
pub fn rd_continuity(
    sample: &RdSample,
    cutoff: f64,
    kernel: Kernel,
    bandwidth: Option<f64>,
    outcome_name: &str,
) -> Result<RdContinuityResult, RdError> {
    sample.check_shape()?;
    check_cutoff(cutoff)?;
    let (h, fallback) = resolve_bandwidth(sample, cutoff, kernel, bandwidth)?;
    let lin = fit_local(sample, cutoff, h, kernel, false)?;
    let quad = fit_local(sample, cutoff, h, kernel, true)?;
    let (clusters_treated, clusters_control) = check_clusters(sample, &lin.w, cutoff, &|_| true)?;

    let a_conv = lin.fit.influence_weights(&lin.x, &lin.w, 1);
    let a_rob = quad.fit.influence_weights(&quad.x, &quad.w, 1);
    let se_conventional = clustered_variance(&a_conv, &lin.fit.residuals, &sample.clusters).sqrt();
    let se_robust = clustered_variance(&a_rob, &quad.fit.residuals, &sample.clusters).sqrt();
    let tau_conventional = lin.fit.coefficients[1];
    let tau_bias_corrected = quad.fit.coefficients[1];
    let z = normal_quantile(0.975);
    let (t, c) = effective_counts(sample, &lin.w, cutoff);
    Ok(RdContinuityResult {
        outcome_name: outcome_name.to_string(),
        cutoff,
        kernel,
        tau_conventional,
        tau_bias_corrected,
        se_conventional,
        se_robust,
        p_conventional: z_test_p(tau_conventional, se_conventional),
        p_robust: z_test_p(tau_bias_corrected, se_robust),
        ci_robust: (tau_bias_corrected - z * se_robust, tau_bias_corrected + z * se_robust),
        bandwidth_h: h,
        bandwidth_b: h,
        rank_interval: bandwidth_interval(cutoff, h),
        effective_n_treated: t,
        effective_n_control: c,
        clusters_treated,
        clusters_control,
        covariates_used: lin.covs.iter().map(|&j| sample.covariate_names[j].clone()).collect(),
        bandwidth_fallback: fallback,
    })
}

pub fn rd_continuity_estimate(
    ds: &Dataset,
    outcome: Variable,
    cutoff: f64,
    spec: &ContinuitySpec,
) -> Result<RdContinuityResult, RdError> {
    let sample = RdSample::from_dataset(ds, outcome, &spec.covariates, spec.cluster);
    rd_continuity(&sample, cutoff, spec.kernel, spec.bandwidth, outcome.name())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodCounts {
    pub treated: usize,
    pub control: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffInDiscResult {
    pub outcome_name: String,
    pub cutoff: f64,
    /// After-minus-Before change in the jump (coefficient on `P T`).
    pub delta_tau: f64,
    pub se: f64,
    pub p_conventional: f64,
    /// Jump implied for each period by the pooled fit.
    pub tau_before: f64,
    pub tau_after: f64,
    pub bandwidth: f64,
    pub rank_interval: (i64, i64),
    pub effective_before: PeriodCounts,
    pub effective_after: PeriodCounts,
    pub covariates_used: Vec<String>,
    pub bandwidth_fallback: bool,
}

/// Pooled weighted regression on `1, T, r, T r, P, P T, P r, P T r` plus
/// additive covariates, `P` the After indicator, with one common bandwidth.
pub fn diff_in_disc(
    sample: &RdSample,
    cutoff: f64,
    kernel: Kernel,
    bandwidth: Option<f64>,
    outcome_name: &str,
) -> Result<DiffInDiscResult, RdError> {
    sample.check_shape()?;
    check_cutoff(cutoff)?;
    let (h, fallback) = resolve_bandwidth(sample, cutoff, kernel, bandwidth)?;
    if !(h > 0.0 && h.is_finite()) {
        return Err(RdError::InvalidArgument(format!("bandwidth must be positive, got {h}")));
    }
    let w = kernel_weights(sample, cutoff, h, kernel);
    let mut counts = Vec::new();
    for (regime, after) in [(Regime::Before, false), (Regime::After, true)] {
        let in_period = |i: usize| sample.period[i] == after;
        if !(0..sample.len()).any(|i| w[i] > 0.0 && in_period(i)) {
            return Err(RdError::MissingRegime(regime));
        }
        require_support(sample, &w, cutoff, 2, &in_period)?;
        check_clusters(sample, &w, cutoff, &in_period)?;
        let mut pc = PeriodCounts { treated: 0, control: 0 };
        for i in (0..sample.len()).filter(|&i| w[i] > 0.0 && in_period(i)) {
            match side_of(sample.running[i], cutoff) {
                Side::Treated => pc.treated += 1,
                Side::Control => pc.control += 1,
            }
        }
        counts.push(pc);
    }

    let covs = usable_covariates(sample, &w);
    let mut x = Matrix::zeros(sample.len(), 8 + covs.len());
    for i in 0..sample.len() {
        let r = sample.running[i] - cutoff;
        let t = if r < 0.0 { 1.0 } else { 0.0 };
        let p = if sample.period[i] { 1.0 } else { 0.0 };
        let base = [1.0, t, r, t * r];
        for (j, &v) in base.iter().enumerate() {
            x.set(i, j, v);
            x.set(i, j + 4, p * v);
        }
        for (k, &j) in covs.iter().enumerate() {
            x.set(i, 8 + k, sample.covariates[j][i]);
        }
    }
    let fit = wls(&x, &sample.outcome, &w)?;
    let a = fit.influence_weights(&x, &w, 5);
    let se = clustered_variance(&a, &fit.residuals, &sample.clusters).sqrt();
    let delta = fit.coefficients[5];
    let after = counts.pop().unwrap();
    let before = counts.pop().unwrap();
    Ok(DiffInDiscResult {
        outcome_name: outcome_name.to_string(),
        cutoff,
        delta_tau: delta,
        se,
        p_conventional: z_test_p(delta, se),
        tau_before: fit.coefficients[1],
        tau_after: fit.coefficients[1] + delta,
        bandwidth: h,
        rank_interval: bandwidth_interval(cutoff, h),
        effective_before: before,
        effective_after: after,
        covariates_used: covs.iter().map(|&j| sample.covariate_names[j].clone()).collect(),
        bandwidth_fallback: fallback,
    })
}

pub fn diff_in_disc_estimate(
    ds: &Dataset,
    outcome: Variable,
    cutoff: f64,
    spec: &ContinuitySpec,
) -> Result<DiffInDiscResult, RdError> {
    let sample = RdSample::from_dataset(ds, outcome, &spec.covariates, spec.cluster);
    diff_in_disc(&sample, cutoff, spec.kernel, spec.bandwidth, outcome.name())
}
