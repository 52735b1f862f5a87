//! Text tables for estimation results, one column per specification.

use crate::contest::EquilibriumSolution;
use crate::data::RegimeSummary;
use crate::rd::{DiffInDiscResult, RdContinuityResult, RdLocalResult};
use crate::table::{fmt3, TextTable};

fn with_header(title: &str, labels: &[String]) -> TextTable {
    let mut header = vec![String::new()];
    header.extend(labels.iter().cloned());
    TextTable {
        title: title.into(),
        header,
        ..TextTable::default()
    }
}

fn row(label: &str, cells: impl IntoIterator<Item = String>) -> Vec<String> {
    std::iter::once(label.to_string()).chain(cells).collect()
}

pub fn local_table(title: &str, cols: &[(String, RdLocalResult)]) -> TextTable {
    let labels: Vec<String> = cols.iter().map(|(l, _)| l.clone()).collect();
    let mut t = with_header(title, &labels);
    t.row(row("Outcome", cols.iter().map(|(_, r)| r.outcome_name.clone())));
    t.row(row("Estimate", cols.iter().map(|(_, r)| fmt3(r.estimate))));
    t.row(row("p-value", cols.iter().map(|(_, r)| fmt3(r.p_value))));
    t.row(row("Window", cols.iter().map(|(_, r)| r.window.to_string())));
    t.row(row(
        "Eff. obs. (treated / controls)",
        cols.iter().map(|(_, r)| format!("{} / {}", r.n_treated, r.n_control)),
    ));
    t.note("Difference in means; Fisherian permutation p-values.");
    t
}

pub fn continuity_table(title: &str, cols: &[(String, RdContinuityResult)]) -> TextTable {
    let labels: Vec<String> = cols.iter().map(|(l, _)| l.clone()).collect();
    let mut t = with_header(title, &labels);
    t.row(row("Outcome", cols.iter().map(|(_, r)| r.outcome_name.clone())));
    t.row(row("Estimate", cols.iter().map(|(_, r)| fmt3(r.tau_conventional))));
    t.row(row("  (SE)", cols.iter().map(|(_, r)| format!("({})", fmt3(r.se_conventional)))));
    t.row(row("Bias-corrected estimate", cols.iter().map(|(_, r)| fmt3(r.tau_bias_corrected))));
    t.row(row("Robust p-value", cols.iter().map(|(_, r)| fmt3(r.p_robust))));
    t.row(row(
        "Robust 95% CI",
        cols.iter().map(|(_, r)| format!("[{}, {}]", fmt3(r.ci_robust.0), fmt3(r.ci_robust.1))),
    ));
    t.row(row(
        "Bandwidth",
        cols.iter().map(|(_, r)| format!("[{}, {}]", r.rank_interval.0, r.rank_interval.1)),
    ));
    t.row(row("h", cols.iter().map(|(_, r)| fmt3(r.bandwidth_h))));
    t.row(row(
        "Eff. obs. (treated / controls)",
        cols.iter().map(|(_, r)| format!("{} / {}", r.effective_n_treated, r.effective_n_control)),
    ));
    t.row(row(
        "Covariates",
        cols.iter().map(|(_, r)| {
            if r.covariates_used.is_empty() {
                "no".to_string()
            } else {
                r.covariates_used.join(", ")
            }
        }),
    ));
    t.note("Local linear, triangular kernel unless stated; SEs clustered; robust bias-corrected p-values.");
    if cols.iter().any(|(_, r)| r.bandwidth_fallback) {
        t.note("Plug-in bandwidth was degenerate for at least one column; pilot bandwidth used.");
    }
    t
}

pub fn diffdisc_table(title: &str, cols: &[(String, DiffInDiscResult)]) -> TextTable {
    let labels: Vec<String> = cols.iter().map(|(l, _)| l.clone()).collect();
    let mut t = with_header(title, &labels);
    t.row(row("Outcome", cols.iter().map(|(_, r)| r.outcome_name.clone())));
    t.row(row("Diff-in-disc estimate", cols.iter().map(|(_, r)| fmt3(r.delta_tau))));
    t.row(row("  (SE)", cols.iter().map(|(_, r)| format!("({})", fmt3(r.se)))));
    t.row(row("Conventional p-value", cols.iter().map(|(_, r)| fmt3(r.p_conventional))));
    t.row(row(
        "Bandwidth",
        cols.iter().map(|(_, r)| format!("[{}, {}]", r.rank_interval.0, r.rank_interval.1)),
    ));
    t.row(row(
        "Eff. obs. before (treated / controls)",
        cols.iter().map(|(_, r)| format!("{} / {}", r.effective_before.treated, r.effective_before.control)),
    ));
    t.row(row(
        "Eff. obs. after (treated / controls)",
        cols.iter().map(|(_, r)| format!("{} / {}", r.effective_after.treated, r.effective_after.control)),
    ));
    t.row(row(
        "Covariates",
        cols.iter().map(|(_, r)| {
            if r.covariates_used.is_empty() {
                "no".to_string()
            } else {
                r.covariates_used.join(", ")
            }
        }),
    ));
    t
}

pub fn descriptive_tables(summaries: &[RegimeSummary]) -> Vec<TextTable> {
    let mut size = TextTable::new("Sample size", &["Regime", "Events", "Athletes", "Observations"]);
    for s in summaries {
        size.row(vec![
            s.regime.to_string(),
            s.n_events.to_string(),
            s.n_athletes.to_string(),
            s.n_records.to_string(),
        ]);
    }
    let mut out = vec![size];
    for s in summaries {
        let mut t = TextTable::new(
            format!("Descriptive statistics ({})", s.regime),
            &["Variable", "N", "Mean", "SD", "Min", "Max"],
        );
        for v in &s.variables {
            t.row(vec![
                v.variable.name().to_string(),
                v.n.to_string(),
                fmt3(v.mean),
                fmt3(v.sd),
                fmt3(v.min),
                fmt3(v.max),
            ]);
        }
        out.push(t);
    }
    out
}

pub fn equilibrium_table(sol: &EquilibriumSolution<f64>) -> TextTable {
    let mut t = TextTable::new("Contest equilibrium", &["Quantity", "Value"]);
    let p = &sol.params;
    let rows = [
        ("prize W", p.prize),
        ("loss penalty d", p.loss_penalty),
        ("win bonus u", p.win_bonus),
        ("salience s", f64::from(p.salience)),
        ("stake v1", sol.stake1),
        ("stake v2", sol.stake2),
        ("support upper bound", sol.support_upper),
        ("player 2 atom at zero", sol.atom_at_zero),
        ("payoff player 1", sol.payoff1),
        ("payoff player 2", sol.payoff2),
        ("win probability player 1", sol.win_prob1),
        ("win probability player 2", sol.win_prob2),
        ("expected effort player 1", sol.effort1),
        ("expected effort player 2", sol.effort2),
        ("closed-form effort player 1 (reference)", sol.effort1_printed),
        ("closed-form effort player 2 (reference)", sol.effort2_printed),
    ];
    for (k, v) in rows {
        t.row(vec![k.to_string(), fmt3(v)]);
    }
    t
}
