use serde::{Deserialize, Serialize};

use super::{DataError, Dataset, Regime, Variable, MAX_PRE_EVENT_RANK};
use crate::stats::{average_ranks, mean, normal_two_sided_p, sample_sd, welch_t_test, WelchTest};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableSummary {
    pub variable: Variable,
    /// Non-missing observations.
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeSummary {
    pub regime: Regime,
    pub n_records: usize,
    pub n_events: usize,
    pub n_athletes: usize,
    /// Share of records with `advanced == true`.
    pub advancement_share: f64,
    pub variables: Vec<VariableSummary>,
}

const DESCRIBED: [Variable; 8] = [
    Variable::Advanced,
    Variable::Round1Total,
    Variable::Round1DistancePoints,
    Variable::Round1StylePoints,
    Variable::PreEventRank,
    Variable::WcPointsBefore,
    Variable::PreviousEventRank,
    Variable::HomeEvent,
];

fn summarize(values: &[f64], variable: Variable) -> Option<VariableSummary> {
    Some(VariableSummary {
        variable,
        n: values.len(),
        mean: mean(values)?,
        sd: sample_sd(values)?,
        min: values.iter().copied().fold(f64::INFINITY, f64::min),
        max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    })
}

/// Mean, sample SD (0 for a single value), min and max of each variable, per
/// regime present in the data.
pub fn descriptive_table(ds: &Dataset) -> Result<Vec<RegimeSummary>, DataError> {
    if ds.is_empty() {
        return Err(DataError::Empty);
    }
    let mut out = Vec::new();
    for regime in ds.regimes() {
        let sub = ds.filter_regime(regime);
        let variables: Vec<VariableSummary> = DESCRIBED
            .iter()
            .filter_map(|&v| {
                let vals: Vec<f64> = sub.column(v).into_iter().flatten().collect();
                summarize(&vals, v)
            })
            .collect();
        let advancement_share = variables
            .iter()
            .find(|s| s.variable == Variable::Advanced)
            .map_or(0.0, |s| s.mean);
        out.push(RegimeSummary {
            regime,
            n_records: sub.len(),
            n_events: sub.events().len(),
            n_athletes: sub.athletes().len(),
            advancement_share,
            variables,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MannWhitney {
    /// U statistic of the first sample.
    pub u: f64,
    pub z: f64,
    pub p_value: f64,
}

/// Rank-sum test by normal approximation with tie correction and no
/// continuity correction. `z < 0` when the first sample tends to be smaller.
pub fn mann_whitney(a: &[f64], b: &[f64]) -> Result<MannWhitney, DataError> {
    if a.is_empty() || b.is_empty() {
        return Err(DataError::Empty);
    }
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let ranks = average_ranks(&pooled);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let n = na + nb;
    let rank_sum_a: f64 = ranks[..a.len()].iter().sum();
    let u = rank_sum_a - na * (na + 1.0) / 2.0;

    let mut sorted = pooled.clone();
    sorted.sort_by(f64::total_cmp);
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i + 1;
        while j < sorted.len() && sorted[j] == sorted[i] {
            j += 1;
        }
        let t = (j - i) as f64;
        tie_term += t * t * t - t;
        i = j;
    }
    let var = na * nb / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
    if !(var > 0.0) {
        return Ok(MannWhitney { u, z: 0.0, p_value: 1.0 });
    }
    let z = (u - na * nb / 2.0) / var.sqrt();
    Ok(MannWhitney {
        u,
        z,
        p_value: normal_two_sided_p(z),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub n: usize,
    pub mean: Option<f64>,
    pub sd: Option<f64>,
}

impl GroupStats {
    fn of(values: &[f64]) -> Self {
        Self {
            n: values.len(),
            mean: mean(values),
            sd: sample_sd(values),
        }
    }
}

/// One rank bin of a between-regime comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinComparison {
    pub rank_lo: u32,
    pub rank_hi: u32,
    pub first_regime: Regime,
    pub first: GroupStats,
    pub second: GroupStats,
    /// `mean(first) - mean(second)`.
    pub difference: Option<f64>,
    pub welch: Option<WelchTest>,
    pub rank_sum: Option<MannWhitney>,
    /// Set when either regime has fewer than two observations in the bin.
    pub flagged: bool,
}

/// Compares an outcome between regimes within pre-event rank bins of
/// `bin_width` ranks (1-5, 6-10, ... for the default width 5).
pub fn group_compare(
    ds: &Dataset,
    outcome: Variable,
    bin_width: u32,
    first: Regime,
) -> Result<Vec<BinComparison>, DataError> {
    let regimes = ds.regimes();
    for r in Regime::ALL {
        if !regimes.contains(&r) {
            return Err(DataError::MissingRegime(r));
        }
    }
    let bin_width = bin_width.max(1);
    let collect = |regime: Regime, lo: u32, hi: u32| -> Vec<f64> {
        ds.records
            .iter()
            .filter(|r| r.regime == regime && (lo..=hi).contains(&r.pre_event_rank))
            .filter_map(|r| outcome.value(r))
            .collect()
    };
    let mut out = Vec::new();
    let mut lo = 1;
    while lo <= MAX_PRE_EVENT_RANK {
        let hi = (lo + bin_width - 1).min(MAX_PRE_EVENT_RANK);
        let a = collect(first, lo, hi);
        let b = collect(first.other(), lo, hi);
        let (sa, sb) = (GroupStats::of(&a), GroupStats::of(&b));
        let difference = sa.mean.zip(sb.mean).map(|(x, y)| x - y);
        let welch = welch_t_test(&a, &b);
        let rank_sum = mann_whitney(&a, &b).ok();
        out.push(BinComparison {
            rank_lo: lo,
            rank_hi: hi,
            first_regime: first,
            first: sa,
            second: sb,
            difference,
            welch,
            rank_sum,
            flagged: a.len() < 2 || b.len() < 2,
        });
        lo = hi + 1;
    }
    Ok(out)
}
