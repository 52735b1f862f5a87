//! Falsification checks: covariate balance at the cutoff, binomial density
//! tests, placebo cutoffs and counts at the mass points near the cutoff.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Regime, Variable};
use crate::rd::{
    self, local::min_balance_p, rd_continuity, ContinuitySpec, PermutationOptions, RdError,
    RdSample, RdWindow, Side, WindowSample,
};
use crate::stats::binomial_two_sided_half;
use crate::table::{fmt3, TextTable};

/// Balance threshold below which a window is flagged.
pub const BALANCE_THRESHOLD: f64 = 0.15;

pub const DEFAULT_PLACEBO_CUTOFFS: [f64; 2] = [20.5, 40.5];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceCell {
    /// `window [a, b]` or `bandwidth [a, b]`.
    pub specification: String,
    pub estimate: f64,
    pub p_value: f64,
    pub n_treated: usize,
    pub n_control: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceRow {
    pub covariate: Variable,
    pub cells: Vec<BalanceCell>,
}

/// Each covariate treated as an outcome: one local-randomization cell per
/// window and one continuity-based cell (robust p) at the MSE-optimal or
/// given bandwidth. Rows missing the covariate are dropped for that
/// covariate only.
pub fn balance_table(
    ds: &Dataset,
    covariates: &[Variable],
    windows: &[RdWindow],
    spec: &ContinuitySpec,
    permutations: &PermutationOptions,
) -> Result<Vec<BalanceRow>, RdError> {
    if covariates.is_empty() {
        return Err(RdError::InvalidArgument("no covariates given".into()));
    }
    let cutoff = windows.first().map_or(rd::DEFAULT_CUTOFF, |w| w.cutoff);
    let mut rows = Vec::new();
    for &cov in covariates {
        let mut cells = Vec::new();
        for w in windows {
            let r = rd::rd_local_estimate(ds, cov, w, permutations)?;
            cells.push(BalanceCell {
                specification: format!("window {w}"),
                estimate: r.estimate,
                p_value: r.p_value,
                n_treated: r.n_treated,
                n_control: r.n_control,
            });
        }
        let sample = RdSample::from_dataset(ds, cov, &[], spec.cluster);
        let c = rd_continuity(&sample, cutoff, spec.kernel, spec.bandwidth, cov.name())?;
        cells.push(BalanceCell {
            specification: format!("bandwidth [{}, {}]", c.rank_interval.0, c.rank_interval.1),
            estimate: c.tau_bias_corrected,
            p_value: c.p_robust,
            n_treated: c.effective_n_treated,
            n_control: c.effective_n_control,
        });
        rows.push(BalanceRow { covariate: cov, cells });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityTest {
    pub window: RdWindow,
    pub n_treated: u64,
    pub n_control: u64,
    pub p_value: f64,
}

/// Exact two-sided binomial test that an in-window row is equally likely
/// to fall on either side of the cutoff.
pub fn density_binomial(ds: &Dataset, window: &RdWindow) -> Result<DensityTest, RdError> {
    let (mut t, mut c) = (0u64, 0u64);
    for r in &ds.records {
        match window.side(f64::from(r.pre_event_rank)) {
            Some(Side::Treated) => t += 1,
            Some(Side::Control) => c += 1,
            None => {}
        }
    }
    if t + c == 0 {
        return Err(RdError::EmptySide {
            side: Side::Treated,
            window: window.to_string(),
        });
    }
    Ok(DensityTest {
        window: *window,
        n_treated: t,
        n_control: c,
        p_value: binomial_two_sided_half(t, c),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaceboLocal {
    pub window: RdWindow,
    pub estimate: f64,
    pub p_value: f64,
    pub n_treated: usize,
    pub n_control: usize,
    pub balance_min_p: f64,
    /// Window fails the covariate balance threshold.
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaceboRow {
    pub cutoff: f64,
    pub outcome: Variable,
    pub local: Vec<PlaceboLocal>,
    pub continuity: rd::RdContinuityResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaceboOptions {
    pub cutoffs: Vec<f64>,
    pub half_widths: Vec<u32>,
    /// Covariates for the balance flag.
    pub covariates: Vec<Variable>,
    /// The real cutoff; a placebo only uses rows on its own side of it.
    pub true_cutoff: f64,
}

impl Default for PlaceboOptions {
    fn default() -> Self {
        Self {
            cutoffs: DEFAULT_PLACEBO_CUTOFFS.to_vec(),
            half_widths: vec![1, 3],
            covariates: Variable::COVARIATES.to_vec(),
            true_cutoff: rd::DEFAULT_CUTOFF,
        }
    }
}

/// Reruns the local-randomization and continuity estimators at fake
/// cutoffs. Rows across the real cutoff are excluded so its jump cannot
/// leak into the placebo fit.
pub fn placebo_cutoffs(
    ds: &Dataset,
    outcome: Variable,
    options: &PlaceboOptions,
    spec: &ContinuitySpec,
    permutations: &PermutationOptions,
) -> Result<Vec<PlaceboRow>, RdError> {
    let mut out = Vec::new();
    for &cutoff in &options.cutoffs {
        if cutoff == options.true_cutoff {
            return Err(RdError::InvalidArgument(format!("placebo cutoff {cutoff} equals the real cutoff")));
        }
        let below = cutoff < options.true_cutoff;
        let side_ds = Dataset::new(
            ds.records
                .iter()
                .filter(|r| (f64::from(r.pre_event_rank) < options.true_cutoff) == below)
                .cloned()
                .collect(),
            ds.provenance.clone(),
        );
        let (lo, hi) = side_ds
            .records
            .iter()
            .fold((u32::MAX, 0), |(lo, hi), r| (lo.min(r.pre_event_rank), hi.max(r.pre_event_rank)));
        let mut local = Vec::new();
        for &hw in &options.half_widths {
            let window = RdWindow::symmetric(cutoff, hw)?;
            // A window running past the observed ranks has rank positions
            // with no possible observations on that side.
            for (side, outside) in [
                (Side::Treated, window.lower < i64::from(lo)),
                (Side::Control, window.upper > i64::from(hi)),
            ] {
                if outside {
                    return Err(RdError::EmptySide { side, window: window.to_string() });
                }
            }
            let r = rd::rd_local_estimate(&side_ds, outcome, &window, permutations)?;
            let (balance_min_p, _) = min_balance_p(&side_ds, &options.covariates, &window, permutations)?;
            local.push(PlaceboLocal {
                window,
                estimate: r.estimate,
                p_value: r.p_value,
                n_treated: r.n_treated,
                n_control: r.n_control,
                balance_min_p,
                flagged: balance_min_p < BALANCE_THRESHOLD,
            });
        }
        let continuity = rd::rd_continuity_estimate(&side_ds, outcome, cutoff, spec)?;
        out.push(PlaceboRow { cutoff, outcome, local, continuity });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyRow {
    pub rank: u32,
    pub side: Side,
    pub before: usize,
    pub after: usize,
}

/// Observation counts per rank and regime for the `half_width` ranks on
/// each side of the cutoff.
pub fn frequency_table(ds: &Dataset, cutoff: f64, half_width: u32) -> Result<Vec<FrequencyRow>, RdError> {
    let window = RdWindow::symmetric(cutoff, half_width)?;
    let mut rows: Vec<FrequencyRow> = (window.lower..=window.upper)
        .filter(|&k| k >= 1)
        .map(|k| FrequencyRow {
            rank: k as u32,
            side: if (k as f64) < cutoff { Side::Treated } else { Side::Control },
            before: 0,
            after: 0,
        })
        .collect();
    for r in &ds.records {
        if let Some(row) = rows.iter_mut().find(|row| row.rank == r.pre_event_rank) {
            match r.regime {
                Regime::Before => row.before += 1,
                Regime::After => row.after += 1,
            }
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub provenance: String,
    pub balance_rows: Vec<BalanceRow>,
    pub density_tests: Vec<DensityTest>,
    pub placebo_rows: Vec<PlaceboRow>,
    pub frequency_rows: Vec<FrequencyRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationOptions {
    pub cutoff: f64,
    pub covariates: Vec<Variable>,
    pub windows: Vec<RdWindow>,
    pub placebo: PlaceboOptions,
    pub placebo_outcome: Variable,
    pub frequency_half_width: u32,
    pub continuity: ContinuitySpec,
    pub permutations: PermutationOptions,
}

impl ValidationOptions {
    pub fn new(cutoff: f64, windows: Vec<RdWindow>) -> Self {
        Self {
            cutoff,
            covariates: Variable::COVARIATES.to_vec(),
            windows,
            placebo: PlaceboOptions { true_cutoff: cutoff, ..PlaceboOptions::default() },
            placebo_outcome: Variable::Advanced,
            frequency_half_width: 5,
            continuity: ContinuitySpec::default(),
            permutations: PermutationOptions::default(),
        }
    }
}

pub fn validation_report(ds: &Dataset, options: &ValidationOptions) -> Result<ValidationReport, RdError> {
    let balance_rows = balance_table(
        ds,
        &options.covariates,
        &options.windows,
        &options.continuity,
        &options.permutations,
    )?;
    let density_tests = options
        .windows
        .iter()
        .map(|w| density_binomial(ds, w))
        .collect::<Result<Vec<_>, _>>()?;
    let placebo_rows = placebo_cutoffs(
        ds,
        options.placebo_outcome,
        &options.placebo,
        &options.continuity,
        &options.permutations,
    )?;
    let frequency_rows = frequency_table(ds, options.cutoff, options.frequency_half_width)?;
    Ok(ValidationReport {
        provenance: ds.provenance.clone(),
        balance_rows,
        density_tests,
        placebo_rows,
        frequency_rows,
    })
}

impl ValidationReport {
    pub fn tables(&self) -> Vec<TextTable> {
        let mut out = Vec::new();

        let specs: Vec<String> = self
            .balance_rows
            .first()
            .map(|r| {
                r.cells
                    .iter()
                    .map(|c| match c.specification.strip_prefix("bandwidth ") {
                        Some(_) => "MSE bandwidth".to_string(),
                        None => c.specification.clone(),
                    })
                    .collect()
            })
            .unwrap_or_default();
        let mut header = vec!["Covariate".to_string()];
        header.extend(specs);
        let mut t = TextTable {
            title: "Covariate balance at the cutoff".into(),
            header,
            ..TextTable::default()
        };
        for row in &self.balance_rows {
            let mut est = vec![row.covariate.name().to_string()];
            let mut p = vec!["  p-value".to_string()];
            let mut n = vec!["  Eff. obs. (treated / controls)".to_string()];
            let mut span = vec!["  Window / bandwidth".to_string()];
            for c in &row.cells {
                est.push(fmt3(c.estimate));
                p.push(fmt3(c.p_value));
                n.push(format!("{} / {}", c.n_treated, c.n_control));
                span.push(
                    c.specification
                        .trim_start_matches("window ")
                        .trim_start_matches("bandwidth ")
                        .to_string(),
                );
            }
            t.row(est).row(p).row(n).row(span);
        }
        out.push(t);

        let mut t = TextTable::new("Binomial density tests", &["Window", "Treated", "Controls", "p-value"]);
        for d in &self.density_tests {
            t.row(vec![
                d.window.to_string(),
                d.n_treated.to_string(),
                d.n_control.to_string(),
                fmt3(d.p_value),
            ]);
        }
        out.push(t);

        let mut t = TextTable::new(
            "Observations at the mass points near the cutoff",
            &["Rank", "Side", "Before", "After"],
        );
        for f in &self.frequency_rows {
            let side = match f.side {
                Side::Treated => "treated",
                Side::Control => "controls",
            };
            t.row(vec![f.rank.to_string(), side.into(), f.before.to_string(), f.after.to_string()]);
        }
        out.push(t);

        let mut t = TextTable::new("Placebo cutoffs", &["Cutoff", "Specification", "Estimate", "p-value", "Eff. obs."]);
        let mut any_flag = false;
        for p in &self.placebo_rows {
            for l in &p.local {
                any_flag |= l.flagged;
                t.row(vec![
                    format!("{}", p.cutoff),
                    format!("window {}{}", l.window, if l.flagged { "*" } else { "" }),
                    fmt3(l.estimate),
                    fmt3(l.p_value),
                    format!("{} / {}", l.n_treated, l.n_control),
                ]);
            }
            let c = &p.continuity;
            t.row(vec![
                format!("{}", p.cutoff),
                format!("bandwidth [{}, {}]", c.rank_interval.0, c.rank_interval.1),
                fmt3(c.tau_conventional),
                fmt3(c.p_robust),
                format!("{} / {}", c.effective_n_treated, c.effective_n_control),
            ]);
        }
        if any_flag {
            t.note(format!("* window fails covariate balance (minimum p < {BALANCE_THRESHOLD})"));
        }
        out.push(t);
        out
    }

    pub fn render_text(&self) -> String {
        let mut s = String::new();
        for t in self.tables() {
            let _ = writeln!(s, "{t}");
        }
        s
    }
}

/// Sample-level balance p for a covariate equal to the treatment indicator;
/// used to check the smallest attainable p.
pub fn indicator_balance_p(n_treated: usize, n_control: usize, options: &PermutationOptions) -> Result<f64, RdError> {
    let s = WindowSample::new(vec![1.0; n_treated], vec![0.0; n_control]);
    Ok(s.fisher_test(options)?.p_value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::test_record;
    use crate::rd::PermutationMode;
    use crate::rng::substream;
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn synthetic(events: usize, seed: u64, jump30: f64, jump40: f64) -> Dataset {
        let mut rng = substream(seed, 0);
        let mut records = Vec::new();
        for e in 0..events {
            for rank in 1..=50u32 {
                let regime = if e % 2 == 0 { Regime::Before } else { Regime::After };
                let mut r = test_record(rank, regime);
                r.event_id = format!("E{e}");
                r.athlete_id = format!("A{}", rng.random_range(0..70));
                let noise: f64 = StandardNormal.sample(&mut rng);
                r.round1_total = 100.0 - 0.5 * f64::from(rank)
                    + if rank <= 30 { jump30 } else { 0.0 }
                    + if rank <= 40 { jump40 } else { 0.0 }
                    + 2.0 * noise;
                r.wc_points_before = rng.random_range(0.0..100.0);
                r.home_event = rng.random_bool(0.11);
                r.previous_event_rank = Some(rng.random_range(1..=50));
                records.push(r);
            }
        }
        Dataset::new(records, "synthetic")
    }

    #[test]
    fn density_anchors() {
        let mut records = Vec::new();
        for _ in 0..51 {
            records.push(test_record(30, Regime::After));
        }
        for _ in 0..53 {
            records.push(test_record(31, Regime::After));
        }
        let ds = Dataset::new(records, "t");
        let d = density_binomial(&ds, &RdWindow::symmetric(30.5, 1).unwrap()).unwrap();
        assert_eq!((d.n_treated, d.n_control), (51, 53));
        assert!((d.p_value - 0.922).abs() < 5e-4);
        assert!((binomial_two_sided_half(160, 160) - 1.0).abs() < 1e-12);
        assert!((binomial_two_sided_half(47, 42) - 0.672).abs() < 1e-3);
    }

    #[test]
    fn density_symmetry_and_monotonicity() {
        for total in [10u64, 37, 120] {
            let mut last = 2.0;
            for a in (total / 2)..=total {
                let p = binomial_two_sided_half(a, total - a);
                assert_relative_eq!(p, binomial_two_sided_half(total - a, a), epsilon = 1e-12);
                assert!(p <= last + 1e-12);
                last = p;
            }
        }
        assert_eq!(binomial_two_sided_half(25, 25), 1.0);
    }

    #[test]
    fn frequency_counts() {
        let ds = synthetic(6, 1, 0.0, 0.0);
        let rows = frequency_table(&ds, 30.5, 5).unwrap();
        assert_eq!(rows.first().unwrap().rank, 26);
        assert_eq!(rows.last().unwrap().rank, 35);
        assert!(rows.iter().all(|r| r.before == 3 && r.after == 3));
        assert_eq!(rows[4].side, Side::Treated);
        assert_eq!(rows[5].side, Side::Control);

        let mut records = ds.records.clone();
        records.push(test_record(30, Regime::After));
        let tied = frequency_table(&Dataset::new(records, "t"), 30.5, 5).unwrap();
        assert_eq!(tied[4].after, 4);
    }

    #[test]
    fn placebo_edge_is_empty_side() {
        let ds = synthetic(4, 2, 0.0, 0.0);
        let opts = PlaceboOptions { cutoffs: vec![49.5], half_widths: vec![3], ..PlaceboOptions::default() };
        let err = placebo_cutoffs(&ds, Variable::Round1Total, &opts, &ContinuitySpec::default(), &PermutationOptions::default())
            .unwrap_err();
        assert!(matches!(err, RdError::EmptySide { side: Side::Control, .. }), "{err}");
    }

    #[test]
    fn placebo_reuses_estimators() {
        let ds = synthetic(40, 3, 3.0, 0.0);
        let perms = PermutationOptions { n_permutations: 500, ..PermutationOptions::default() };
        let opts = PlaceboOptions::default();
        let rows = placebo_cutoffs(&ds, Variable::Round1Total, &opts, &ContinuitySpec::default(), &perms).unwrap();
        let below = Dataset::new(
            ds.records.iter().filter(|r| r.pre_event_rank <= 30).cloned().collect(),
            "",
        );
        let w = RdWindow::symmetric(20.5, 1).unwrap();
        let direct = rd::rd_local_estimate(&below, Variable::Round1Total, &w, &perms).unwrap();
        assert_eq!(rows[0].local[0].estimate, direct.estimate);
        assert_eq!(rows[0].local[0].p_value, direct.p_value);
        let cont = rd::rd_continuity_estimate(&below, Variable::Round1Total, 20.5, &ContinuitySpec::default()).unwrap();
        assert_eq!(rows[0].continuity, cont);
    }

    #[test]
    fn placebo_detects_planted_jump() {
        let ds = synthetic(60, 4, 0.0, 3.0);
        let perms = PermutationOptions { n_permutations: 999, ..PermutationOptions::default() };
        let rows = placebo_cutoffs(&ds, Variable::Round1Total, &PlaceboOptions::default(), &ContinuitySpec::default(), &perms)
            .unwrap();
        assert!(rows[1].continuity.p_robust < 0.05, "{:?}", rows[1].continuity);
        assert!(rows[1].local[1].p_value < 0.05);
    }

    #[test]
    fn indicator_covariate_hits_minimum_p() {
        let exact = PermutationOptions { mode: PermutationMode::Enumerate, ..PermutationOptions::default() };
        assert_relative_eq!(indicator_balance_p(3, 3, &exact).unwrap(), 2.0 / 20.0);
        let sim = PermutationOptions { n_permutations: 999, mode: PermutationMode::Simulate, seed: 1 };
        assert_relative_eq!(indicator_balance_p(40, 40, &sim).unwrap(), 1.0 / 1000.0);
    }

    #[test]
    fn report_layout() {
        let ds = synthetic(40, 5, 3.0, 0.0);
        let mut opts = ValidationOptions::new(
            30.5,
            vec![RdWindow::symmetric(30.5, 1).unwrap(), RdWindow::symmetric(30.5, 3).unwrap()],
        );
        opts.permutations.n_permutations = 300;
        let report = validation_report(&ds, &opts).unwrap();
        assert_eq!(report.balance_rows.len(), 3);
        assert_eq!(report.balance_rows[0].cells.len(), 3);
        assert!(report.balance_rows[0].cells[2].specification.starts_with("bandwidth"));
        assert_eq!(report.placebo_rows.len(), 2);
        assert_eq!(report.frequency_rows.len(), 10);
        for row in &report.balance_rows {
            for c in &row.cells {
                assert!(c.p_value > 0.0 && c.p_value <= 1.0);
            }
        }
        let text = report.render_text();
        assert!(text.contains("window [28, 33]"));
        assert!(text.contains("Placebo cutoffs"));
        let json = serde_json::to_string(&report).unwrap();
        let back: ValidationReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back.frequency_rows, report.frequency_rows);
    }
}
