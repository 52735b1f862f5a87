//! Athlete-event observations and the dataset they form.

mod csv_io;
mod describe;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use csv_io::{load_csv, read_csv, write_csv, write_csv_to, CsvOptions, CSV_HEADER};
pub use describe::{
    descriptive_table, group_compare, mann_whitney, BinComparison, GroupStats, MannWhitney,
    RegimeSummary, VariableSummary,
};

/// Highest pre-event rank: the 50 main-event starters.
pub const MAX_PRE_EVENT_RANK: u32 = 50;
/// Athletes advancing from Round 1 to Round 2.
pub const N_ADVANCE: usize = 30;
/// Offset between nominal qualification rank and effective pre-event rank
/// when the top 10 of the standings are prequalified.
pub const PREQUALIFIED: u32 = 10;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error in row {row}, column `{column}`: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },
    #[error("schema error: {0}")]
    Schema(String),
    #[error("invariant violated in row {row}: {message}")]
    Invariant { row: usize, message: String },
    #[error("dataset is empty")]
    Empty,
    #[error("regime `{0}` has no observations")]
    MissingRegime(Regime),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

/// Qualification regime: before or after the rule change that removed
/// prequalification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Before,
    After,
}

impl Regime {
    pub const ALL: [Regime; 2] = [Regime::Before, Regime::After];

    pub fn as_str(self) -> &'static str {
        match self {
            Regime::Before => "before",
            Regime::After => "after",
        }
    }

    pub fn other(self) -> Regime {
        match self {
            Regime::Before => Regime::After,
            Regime::After => Regime::Before,
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Regime {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "before" => Ok(Regime::Before),
            "after" => Ok(Regime::After),
            other => Err(format!("unknown regime `{other}` (expected before|after)")),
        }
    }
}

/// One athlete's participation in one event's main competition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpRecord {
    pub athlete_id: String,
    pub event_id: String,
    pub season: String,
    pub regime: Regime,
    /// Rank printed in the qualification list; absent for prequalified athletes.
    pub qual_rank_nominal: Option<u32>,
    /// Effective rank entering Round 1, the running variable.
    pub pre_event_rank: u32,
    pub round1_distance_points: f64,
    pub round1_style_points: f64,
    pub round1_total: f64,
    /// Made the top 30 of Round 1.
    pub advanced: bool,
    pub wc_points_before: f64,
    pub previous_event_rank: Option<u32>,
    pub home_event: bool,
}

impl JumpRecord {
    pub fn check(&self) -> Result<(), String> {
        if !(1..=MAX_PRE_EVENT_RANK).contains(&self.pre_event_rank) {
            return Err(format!(
                "pre_event_rank {} outside [1, {MAX_PRE_EVENT_RANK}]",
                self.pre_event_rank
            ));
        }
        if !(self.wc_points_before >= 0.0) {
            return Err(format!("wc_points_before {} is negative", self.wc_points_before));
        }
        if !(0.0..=60.0).contains(&self.round1_style_points) {
            return Err(format!(
                "round1_style_points {} outside [0, 60]",
                self.round1_style_points
            ));
        }
        if self.previous_event_rank == Some(0) || self.qual_rank_nominal == Some(0) {
            return Err("ranks start at 1".into());
        }
        if let Some(nominal) = self.qual_rank_nominal {
            let expected = match self.regime {
                Regime::Before => nominal + PREQUALIFIED,
                Regime::After => nominal,
            };
            if expected != self.pre_event_rank {
                return Err(format!(
                    "regime {} maps nominal rank {nominal} to pre-event rank {expected}, found {}",
                    self.regime, self.pre_event_rank
                ));
            }
        } else if self.regime == Regime::After {
            return Err("qual_rank_nominal is required after the rule change".into());
        }
        Ok(())
    }
}

/// Named column usable as an outcome, covariate or cluster label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variable {
    Advanced,
    Round1Total,
    Round1DistancePoints,
    Round1StylePoints,
    WcPointsBefore,
    PreviousEventRank,
    HomeEvent,
    PreEventRank,
    QualRankNominal,
}

impl Variable {
    pub const ALL: [Variable; 9] = [
        Variable::Advanced,
        Variable::Round1Total,
        Variable::Round1DistancePoints,
        Variable::Round1StylePoints,
        Variable::WcPointsBefore,
        Variable::PreviousEventRank,
        Variable::HomeEvent,
        Variable::PreEventRank,
        Variable::QualRankNominal,
    ];

    /// Predetermined covariates used for balance checks.
    pub const COVARIATES: [Variable; 3] = [
        Variable::WcPointsBefore,
        Variable::HomeEvent,
        Variable::PreviousEventRank,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variable::Advanced => "advanced",
            Variable::Round1Total => "round1_total",
            Variable::Round1DistancePoints => "round1_distance_points",
            Variable::Round1StylePoints => "round1_style_points",
            Variable::WcPointsBefore => "wc_points_before",
            Variable::PreviousEventRank => "previous_event_rank",
            Variable::HomeEvent => "home_event",
            Variable::PreEventRank => "pre_event_rank",
            Variable::QualRankNominal => "qual_rank_nominal",
        }
    }

    pub fn value(self, r: &JumpRecord) -> Option<f64> {
        match self {
            Variable::Advanced => Some(f64::from(u8::from(r.advanced))),
            Variable::Round1Total => Some(r.round1_total),
            Variable::Round1DistancePoints => Some(r.round1_distance_points),
            Variable::Round1StylePoints => Some(r.round1_style_points),
            Variable::WcPointsBefore => Some(r.wc_points_before),
            Variable::PreviousEventRank => r.previous_event_rank.map(f64::from),
            Variable::HomeEvent => Some(f64::from(u8::from(r.home_event))),
            Variable::PreEventRank => Some(f64::from(r.pre_event_rank)),
            Variable::QualRankNominal => r.qual_rank_nominal.map(f64::from),
        }
    }
}

impl fmt::Display for Variable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variable {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = s.trim();
        Variable::ALL
            .into_iter()
            .find(|v| v.name() == key)
            .ok_or_else(|| format!("unknown variable `{key}`"))
    }
}

/// Parses a comma-separated variable list; empty input gives an empty list.
pub fn parse_variables(list: &str) -> Result<Vec<Variable>, String> {
    list.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(str::parse)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub records: Vec<JumpRecord>,
    pub provenance: String,
}

impl Dataset {
    pub fn new(records: Vec<JumpRecord>, provenance: impl Into<String>) -> Self {
        Self {
            records,
            provenance: provenance.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn regimes(&self) -> BTreeSet<Regime> {
        self.records.iter().map(|r| r.regime).collect()
    }

    pub fn filter_regime(&self, regime: Regime) -> Dataset {
        Dataset {
            records: self
                .records
                .iter()
                .filter(|r| r.regime == regime)
                .cloned()
                .collect(),
            provenance: format!("{} [regime={regime}]", self.provenance),
        }
    }

    pub fn events(&self) -> BTreeSet<&str> {
        self.records.iter().map(|r| r.event_id.as_str()).collect()
    }

    pub fn athletes(&self) -> BTreeSet<&str> {
        self.records.iter().map(|r| r.athlete_id.as_str()).collect()
    }

    /// Maps a variable over the records, with `None` for missing values.
    pub fn column(&self, variable: Variable) -> Vec<Option<f64>> {
        self.records.iter().map(|r| variable.value(r)).collect()
    }

    /// Copy of the dataset with `f` applied to every record.
    pub fn map_records(&self, f: impl Fn(&mut JumpRecord)) -> Dataset {
        let mut out = self.clone();
        out.records.iter_mut().for_each(f);
        out
    }

    /// Complete events whose advancement count differs from 30.
    pub fn inconsistent_events(&self) -> Vec<String> {
        let mut out = Vec::new();
        for event in self.events() {
            let rows: Vec<&JumpRecord> =
                self.records.iter().filter(|r| r.event_id == event).collect();
            if rows.len() == MAX_PRE_EVENT_RANK as usize
                && rows.iter().filter(|r| r.advanced).count() != N_ADVANCE
            {
                out.push(event.to_string());
            }
        }
        out
    }
}

#[cfg(test)]
pub(crate) fn test_record(rank: u32, regime: Regime) -> JumpRecord {
    JumpRecord {
        athlete_id: format!("A{rank:03}"),
        event_id: "E1".into(),
        season: "2018-19".into(),
        regime,
        qual_rank_nominal: match regime {
            Regime::Before if rank > PREQUALIFIED => Some(rank - PREQUALIFIED),
            Regime::Before => None,
            Regime::After => Some(rank),
        },
        pre_event_rank: rank,
        round1_distance_points: 60.0,
        round1_style_points: 51.0,
        round1_total: 111.0,
        advanced: rank <= 30,
        wc_points_before: 0.0,
        previous_event_rank: None,
        home_event: false,
    }
}
