//! Synthetic World Cup seasons: persistent abilities, qualification with or
//! without prequalification of the standings leaders, a two-round main
//! event, and an optional treatment effect for pre-event ranks up to 30.

use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::contest::{solve_equilibrium, ContestError, ContestParams};
use crate::data::{Dataset, JumpRecord, Regime, PREQUALIFIED};
use crate::rng::{domain, stream_id, substream};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot parse config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error(transparent)]
    Contest(#[from] ContestError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimulationMode {
    /// Round-1 shift of `injected_effect_tau` for treated ranks.
    ReducedForm,
    /// Shift from the contest model's equilibrium effort gap.
    Structural,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StructuralParams {
    pub prize: f64,
    pub loss_penalty: f64,
    pub win_bonus: f64,
    pub decay_width: f64,
    /// Score units per unit of equilibrium effort.
    pub effort_scale: f64,
}

impl Default for StructuralParams {
    fn default() -> Self {
        Self {
            prize: 1.0,
            loss_penalty: 1.0,
            win_bonus: 0.0,
            decay_width: 6.0,
            effort_scale: 4.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    pub n_seasons: usize,
    /// Events in each season.
    pub events_per_season: Vec<usize>,
    pub n_entrants: usize,
    pub n_qualify: usize,
    pub n_advance: usize,
    /// Regime of each season.
    pub regime_schedule: Vec<Regime>,
    pub ability_sd: f64,
    pub noise_sd: f64,
    pub injected_effect_tau: f64,
    pub effect_regimes: Vec<Regime>,
    pub mode: SimulationMode,
    pub structural: StructuralParams,
    pub home_prob: f64,
    pub seed: u64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        use Regime::{After, Before};
        Self {
            n_seasons: 7,
            events_per_season: vec![13, 14, 13, 13, 15, 14, 15],
            n_entrants: 60,
            n_qualify: 50,
            n_advance: 30,
            regime_schedule: vec![Before, Before, Before, Before, After, After, After],
            ability_sd: 6.0,
            noise_sd: 6.0,
            injected_effect_tau: DEFAULT_TAU,
            effect_regimes: vec![After],
            mode: SimulationMode::ReducedForm,
            structural: StructuralParams::default(),
            home_prob: 0.11,
            seed: 20170,
        }
    }
}

/// Round-1 shift giving an advancement jump of about 0.30 between ranks 30
/// and 31 at the default scales; read off a sweep of
/// `implied_advancement_jump` (tau 5 gives 0.27, tau 6 gives 0.32).
pub const DEFAULT_TAU: f64 = 5.6;

impl SimulationConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, SimError> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, SimError> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidConfig(m));
        if self.events_per_season.len() != self.n_seasons {
            return bad(format!(
                "events_per_season has {} entries for {} seasons",
                self.events_per_season.len(),
                self.n_seasons
            ));
        }
        if self.regime_schedule.len() != self.n_seasons {
            return bad(format!(
                "regime_schedule has {} entries for {} seasons",
                self.regime_schedule.len(),
                self.n_seasons
            ));
        }
        if self.n_qualify as u32 > crate::data::MAX_PRE_EVENT_RANK || self.n_qualify <= PREQUALIFIED as usize {
            return bad(format!("n_qualify must be in ({PREQUALIFIED}, 50], got {}", self.n_qualify));
        }
        if self.n_advance == 0 || self.n_advance >= self.n_qualify {
            return bad(format!("n_advance must be in [1, n_qualify), got {}", self.n_advance));
        }
        if self.n_entrants < self.n_qualify + 5 {
            return bad(format!("n_entrants must be at least n_qualify + 5, got {}", self.n_entrants));
        }
        for (name, v) in [("ability_sd", self.ability_sd), ("noise_sd", self.noise_sd)] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be a finite nonnegative number, got {v}"));
            }
        }
        if !self.injected_effect_tau.is_finite() {
            return bad("injected_effect_tau must be finite".into());
        }
        if !(0.0..=1.0).contains(&self.home_prob) {
            return bad(format!("home_prob must be in [0, 1], got {}", self.home_prob));
        }
        if self.mode == SimulationMode::Structural {
            let s = &self.structural;
            ContestParams::new(s.prize, s.loss_penalty, s.win_bonus, 1)?;
            if !(s.decay_width > 0.0) || !s.effort_scale.is_finite() {
                return bad("structural decay_width must be positive and effort_scale finite".into());
            }
        }
        Ok(())
    }

    pub fn total_events(&self) -> usize {
        self.events_per_season.iter().sum()
    }

    /// Cutoff between the last advancing and first eliminated rank.
    pub fn cutoff(&self) -> f64 {
        self.n_advance as f64 + 0.5
    }

    /// Same settings with every season in `regime`.
    pub fn with_regime(&self, regime: Regime) -> Self {
        Self {
            regime_schedule: vec![regime; self.n_seasons],
            ..self.clone()
        }
    }
}

/// Effective pre-event rank. Before the change the standings leaders fill
/// ranks 1-10 in standings order and qualifiers sit 10 places below their
/// qualification rank; after it the two coincide.
pub fn regime_rank_map(
    regime: Regime,
    nominal_rank: Option<u32>,
    prequalified: bool,
    wc_standing_position: Option<u32>,
) -> Result<u32, SimError> {
    match (regime, prequalified) {
        (Regime::After, true) => Err(SimError::InvalidConfig(
            "no athlete is prequalified after the rule change".into(),
        )),
        (Regime::Before, true) => match wc_standing_position {
            Some(p) if (1..=PREQUALIFIED).contains(&p) => Ok(p),
            other => Err(SimError::InvalidConfig(format!(
                "prequalified athlete needs a standings position in 1..={PREQUALIFIED}, got {other:?}"
            ))),
        },
        (_, false) => {
            let nominal = nominal_rank
                .filter(|&n| n >= 1)
                .ok_or_else(|| SimError::InvalidConfig("qualifier needs a nominal rank".into()))?;
            Ok(match regime {
                Regime::Before => nominal + PREQUALIFIED,
                Regime::After => nominal,
            })
        }
    }
}

/// Round-1 score shift from the contest model: the equilibrium effort gap
/// between the favored and the trailing player, positive for ranks up to
/// the cutoff and negative past it, tapering linearly to zero over
/// `decay_width` ranks.
pub fn structural_effort_boost(
    params: &ContestParams<f64>,
    rank: f64,
    cutoff: f64,
    decay_width: f64,
) -> Result<f64, SimError> {
    if !(decay_width > 0.0) {
        return Err(SimError::InvalidConfig(format!("decay_width must be positive, got {decay_width}")));
    }
    let eq = solve_equilibrium(params)?;
    let gap = eq.effort1 - eq.effort2;
    let taper = (1.0 - (rank - cutoff).abs() / decay_width).max(0.0);
    let sign = if rank <= cutoff.floor() { 1.0 } else { -1.0 };
    Ok(sign * gap * taper)
}

struct Athlete {
    id: String,
    ability: f64,
    points: f64,
    prev_season_points: f64,
    last_rank: Option<u32>,
}

fn season_label(s: usize) -> String {
    format!("S{:02}", s + 1)
}

fn round1_split(score: f64) -> (f64, f64, f64) {
    let total = 111.0 + score;
    let style = (51.0 + 0.2 * score).clamp(0.0, 60.0);
    (total - style, style, total)
}

/// Simulates every season in order. Standings carry across events, so
/// events run sequentially; each draws from its own substream.
pub fn simulate_dataset(config: &SimulationConfig) -> Result<Dataset, SimError> {
    config.validate()?;
    let mut rng = substream(config.seed, stream_id(domain::ABILITY, 0, 0));
    let mut athletes: Vec<Athlete> = (0..config.n_entrants)
        .map(|a| {
            let z: f64 = StandardNormal.sample(&mut rng);
            Athlete {
                id: format!("ATH{:03}", a + 1),
                ability: config.ability_sd * z,
                points: 0.0,
                prev_season_points: 0.0,
                last_rank: None,
            }
        })
        .collect();

    let cutoff = config.cutoff();
    let structural_gap = |regime: Regime, rank: u32| -> Result<f64, SimError> {
        let s = &config.structural;
        let salience = u8::from(regime == Regime::After);
        let params = ContestParams::new(s.prize, s.loss_penalty, s.win_bonus, salience)?;
        Ok(s.effort_scale * structural_effort_boost(&params, f64::from(rank), cutoff, s.decay_width)?)
    };

    let mut records = Vec::with_capacity(config.total_events() * config.n_qualify);
    for season in 0..config.n_seasons {
        let regime = config.regime_schedule[season];
        for a in athletes.iter_mut() {
            a.prev_season_points = a.points;
            a.points = 0.0;
            a.last_rank = None;
        }
        let effect_on = config.effect_regimes.contains(&regime);
        for event in 0..config.events_per_season[season] {
            let mut rng = substream(config.seed, stream_id(domain::EVENT, season as u64, event as u64));
            let n = athletes.len();
            let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };
            let qual: Vec<f64> = (0..n).map(|_| normal()).collect();
            let r1: Vec<f64> = (0..n).map(|_| normal()).collect();
            let r2: Vec<f64> = (0..n).map(|_| normal()).collect();
            let home: Vec<bool> = (0..n).map(|_| rng.random_bool(config.home_prob)).collect();

            // (athlete, nominal qualification rank, effective pre-event rank)
            let mut starters: Vec<(usize, Option<u32>, u32)> = Vec::with_capacity(config.n_qualify);
            let mut pool: Vec<usize> = (0..n).collect();
            if regime == Regime::Before {
                let mut standings: Vec<usize> = (0..n).collect();
                standings.sort_by(|&a, &b| {
                    let (x, y) = (&athletes[a], &athletes[b]);
                    y.points
                        .total_cmp(&x.points)
                        .then(y.prev_season_points.total_cmp(&x.prev_season_points))
                        .then(a.cmp(&b))
                });
                for (pos, &a) in standings.iter().take(PREQUALIFIED as usize).enumerate() {
                    let rank = regime_rank_map(regime, None, true, Some(pos as u32 + 1))?;
                    starters.push((a, None, rank));
                }
                pool = standings[PREQUALIFIED as usize..].to_vec();
            }
            let score = |a: usize| athletes[a].ability + config.noise_sd * qual[a];
            pool.sort_by(|&a, &b| score(b).total_cmp(&score(a)).then(a.cmp(&b)));
            let open_spots = config.n_qualify - starters.len();
            for (i, &a) in pool.iter().take(open_spots).enumerate() {
                let nominal = i as u32 + 1;
                starters.push((a, Some(nominal), regime_rank_map(regime, Some(nominal), false, None)?));
            }

            let mut perf = Vec::with_capacity(starters.len());
            for &(a, _, rank) in &starters {
                let shift = match config.mode {
                    SimulationMode::ReducedForm if effect_on && rank as usize <= config.n_advance => {
                        config.injected_effect_tau
                    }
                    SimulationMode::ReducedForm => 0.0,
                    SimulationMode::Structural => structural_gap(regime, rank)?,
                };
                perf.push(athletes[a].ability + config.noise_sd * r1[a] + shift);
            }
            let mut order: Vec<usize> = (0..starters.len()).collect();
            order.sort_by(|&i, &j| perf[j].total_cmp(&perf[i]).then(starters[i].2.cmp(&starters[j].2)));
            let mut advanced = vec![false; starters.len()];
            for &i in order.iter().take(config.n_advance) {
                advanced[i] = true;
            }
            // Final order: finalists by two-round total, then the rest by
            // Round-1 score.
            let total2 = |i: usize| {
                let a = starters[i].0;
                perf[i] + athletes[a].ability + config.noise_sd * r2[a]
            };
            let mut finalists: Vec<usize> = order[..config.n_advance].to_vec();
            finalists.sort_by(|&i, &j| total2(j).total_cmp(&total2(i)).then(i.cmp(&j)));
            let mut final_rank = vec![0u32; starters.len()];
            for (k, &i) in finalists.iter().chain(&order[config.n_advance..]).enumerate() {
                final_rank[i] = k as u32 + 1;
            }

            let mut by_rank: Vec<usize> = (0..starters.len()).collect();
            by_rank.sort_by_key(|&i| starters[i].2);
            for i in by_rank {
                let (a, nominal, rank) = starters[i];
                let (dist, style, total) = round1_split(perf[i]);
                records.push(JumpRecord {
                    athlete_id: athletes[a].id.clone(),
                    event_id: format!("{}E{:02}", season_label(season), event + 1),
                    season: season_label(season),
                    regime,
                    qual_rank_nominal: nominal,
                    pre_event_rank: rank,
                    round1_distance_points: dist,
                    round1_style_points: style,
                    round1_total: total,
                    advanced: advanced[i],
                    wc_points_before: athletes[a].points,
                    previous_event_rank: athletes[a].last_rank,
                    home_event: home[a],
                });
            }

            let mut started = vec![false; n];
            for (i, &(a, _, _)) in starters.iter().enumerate() {
                started[a] = true;
                athletes[a].points += (31.0 - f64::from(final_rank[i])).max(0.0);
                athletes[a].last_rank = Some(final_rank[i]);
            }
            for (a, s) in started.iter().enumerate() {
                if !s {
                    athletes[a].last_rank = None;
                }
            }
        }
    }
    Ok(Dataset::new(records, format!("simulated (seed {})", config.seed)))
}

/// Monte Carlo advancement rates at the two ranks around the cutoff.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImpliedJump {
    pub p_treated: f64,
    pub p_control: f64,
    pub jump: f64,
    pub events: usize,
}

/// Advancement-probability jump between ranks `n_advance` and
/// `n_advance + 1` implied by the configuration, from `replicates` fresh
/// runs of the generator with every season in `regime`. Seeds are drawn
/// from a stream disjoint from the ones used by `simulate_dataset`.
pub fn implied_advancement_jump(
    config: &SimulationConfig,
    regime: Regime,
    replicates: usize,
    seed: u64,
) -> Result<ImpliedJump, SimError> {
    let base = config.with_regime(regime);
    let k = config.n_advance as u32;
    let counts = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let mut cfg = base.clone();
            cfg.seed = substream(seed, stream_id(domain::CONTEST, 1, r as u64)).random();
            let ds = simulate_dataset(&cfg)?;
            let mut c = [0u64; 4];
            for rec in &ds.records {
                if rec.pre_event_rank == k {
                    c[0] += u64::from(rec.advanced);
                    c[1] += 1;
                } else if rec.pre_event_rank == k + 1 {
                    c[2] += u64::from(rec.advanced);
                    c[3] += 1;
                }
            }
            Ok(c)
        })
        .collect::<Result<Vec<[u64; 4]>, SimError>>()?;
    let mut total = [0u64; 4];
    for c in counts {
        for j in 0..4 {
            total[j] += c[j];
        }
    }
    let p_treated = total[0] as f64 / total[1] as f64;
    let p_control = total[2] as f64 / total[3] as f64;
    Ok(ImpliedJump {
        p_treated,
        p_control,
        jump: p_treated - p_control,
        events: total[1] as usize,
    })
}
