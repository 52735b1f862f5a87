//! Two-player all-pay contest with expectation-based loss aversion and a
//! salience switch.
//!
//! Player 1 holds positive expectations and loses an extra `d * s` when
//! beaten; player 2 holds negative expectations and gains an extra `u * s`
//! when winning. Stakes are `v1 = W + d*s` and `v2 = W + u*s` with
//! `v1 >= v2`, and the unique equilibrium has both players mixing on
//! `[0, v2]`:
//!
//! * `F1(x) = x / v2` (uniform),
//! * `F2(x) = (x + v1 - v2) / v1`, an atom of `(v1 - v2) / v1` at zero.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{domain, stream_id, substream};
use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ContestError {
    #[error("invalid contest parameters: {0}")]
    InvalidParameters(String),
    #[error("verification grid needs at least 50 points, got {0}")]
    GridTooCoarse(usize),
    #[error("empty plot range")]
    EmptyRange,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContestParams<T> {
    /// Prize value `W`.
    pub prize: T,
    /// Loss penalty `d` of the positive-expectation player.
    pub loss_penalty: T,
    /// Win bonus `u` of the negative-expectation player.
    pub win_bonus: T,
    /// Salience flag `s`, 0 or 1.
    pub salience: u8,
}

impl<T: Scalar> ContestParams<T> {
    pub fn new(prize: T, loss_penalty: T, win_bonus: T, salience: u8) -> Result<Self, ContestError> {
        let params = Self {
            prize,
            loss_penalty,
            win_bonus,
            salience,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<(), ContestError> {
        let bad = |msg: String| Err(ContestError::InvalidParameters(msg));
        if !(self.prize > T::zero()) || !self.prize.is_finite() {
            return bad(format!("prize must be positive and finite, got {}", self.prize));
        }
        if !(self.win_bonus >= T::zero()) || !self.win_bonus.is_finite() || !self.loss_penalty.is_finite() {
            return bad(format!("win bonus must be nonnegative, got {}", self.win_bonus));
        }
        if !(self.loss_penalty >= self.win_bonus) {
            return bad(format!(
                "loss penalty {} must be at least the win bonus {}",
                self.loss_penalty, self.win_bonus
            ));
        }
        if self.salience > 1 {
            return bad(format!("salience must be 0 or 1, got {}", self.salience));
        }
        Ok(())
    }

    fn s(&self) -> T {
        if self.salience == 1 {
            T::one()
        } else {
            T::zero()
        }
    }

    /// Same parameters with every utility quantity multiplied by `k`.
    pub fn scaled(&self, k: T) -> Self {
        Self {
            prize: self.prize * k,
            loss_penalty: self.loss_penalty * k,
            win_bonus: self.win_bonus * k,
            salience: self.salience,
        }
    }

    pub fn with_salience(&self, salience: u8) -> Self {
        Self { salience, ..*self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumSolution<T> {
    pub params: ContestParams<T>,
    /// `v1 = W + d*s`.
    pub stake1: T,
    /// `v2 = W + u*s`.
    pub stake2: T,
    pub support_upper: T,
    /// Mass of player 2's effort distribution at zero.
    pub atom_at_zero: T,
    pub payoff1: T,
    pub payoff2: T,
    pub win_prob1: T,
    pub win_prob2: T,
    /// Expected efforts integrated from the equilibrium CDFs.
    pub effort1: T,
    pub effort2: T,
    /// `v1^2 v2 / (v1 + v2)`, the closed form printed alongside the model.
    /// Kept for reference only; it does not follow from the CDFs above.
    pub effort1_printed: T,
    /// `v2^2 v1 / (v1 + v2)`.
    pub effort2_printed: T,
}

pub fn solve_equilibrium<T: Scalar>(
    params: &ContestParams<T>,
) -> Result<EquilibriumSolution<T>, ContestError> {
    params.validate()?;
    let s = params.s();
    let two = T::lit(2.0);
    let v1 = params.prize + params.loss_penalty * s;
    let v2 = params.prize + params.win_bonus * s;
    let win_prob2 = v2 / (two * v1);
    Ok(EquilibriumSolution {
        params: *params,
        stake1: v1,
        stake2: v2,
        support_upper: v2,
        atom_at_zero: (v1 - v2) / v1,
        payoff1: -(params.win_bonus * s),
        payoff2: T::zero(),
        win_prob1: T::one() - win_prob2,
        win_prob2,
        effort1: v2 / two,
        effort2: v2 * v2 / (two * v1),
        effort1_printed: v1 * v1 * v2 / (v1 + v2),
        effort2_printed: v2 * v2 * v1 / (v1 + v2),
    })
}

impl<T: Scalar> EquilibriumSolution<T> {
    /// Player 1's effort CDF; uniform on `[0, v2]`.
    pub fn cdf_player1(&self, x: T) -> T {
        clamp01(x / self.stake2)
    }

    /// Player 2's effort CDF, right-continuous with its atom at zero.
    pub fn cdf_player2(&self, x: T) -> T {
        if x < T::zero() {
            return T::zero();
        }
        clamp01((x + self.stake1 - self.stake2) / self.stake1)
    }

    pub fn quantile_player1(&self, q: T) -> T {
        clamp01(q) * self.stake2
    }

    /// Inverse-transform draw for player 2: draws below the atom map to zero.
    pub fn quantile_player2(&self, q: T) -> T {
        if q < self.atom_at_zero {
            T::zero()
        } else {
            (clamp01(q) * self.stake1 - (self.stake1 - self.stake2)).max(T::zero())
        }
    }

    /// Expected payoff of player 1 from pure effort `x` against player 2's
    /// mixture. Ties count as wins, an upper bound on the deviation payoff.
    pub fn deviation_payoff1(&self, x: T) -> T {
        self.stake1 * self.cdf_player2(x) - self.params.loss_penalty * self.params.s() - x
    }

    pub fn deviation_payoff2(&self, x: T) -> T {
        self.stake2 * self.cdf_player1(x) - x
    }
}

fn clamp01<T: Scalar>(v: T) -> T {
    v.max(T::zero()).min(T::one())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport<T> {
    pub grid_points: usize,
    pub grid_spacing: T,
    pub tolerance: T,
    pub max_improvement1: T,
    pub max_improvement2: T,
    pub passed: bool,
}

impl<T: Scalar> VerificationReport<T> {
    pub fn max_improvement(&self) -> T {
        self.max_improvement1.max(self.max_improvement2)
    }
}

/// Checks that no pure effort on a uniform grid over `[0, 1.1 * v2]` beats
/// either player's equilibrium payoff by more than `tolerance`
/// (default: twice the grid spacing).
pub fn verify_equilibrium<T: Scalar>(
    params: &ContestParams<T>,
    grid_points: usize,
    tolerance: Option<T>,
) -> Result<VerificationReport<T>, ContestError> {
    if grid_points < 50 {
        return Err(ContestError::GridTooCoarse(grid_points));
    }
    let sol = solve_equilibrium(params)?;
    let upper = sol.support_upper * T::lit(1.1);
    let spacing = upper / T::from_usize(grid_points - 1).unwrap();
    let tolerance = tolerance.unwrap_or(spacing * T::lit(2.0));
    let mut best1 = T::neg_infinity();
    let mut best2 = T::neg_infinity();
    for k in 0..grid_points {
        let x = spacing * T::from_usize(k).unwrap();
        best1 = best1.max(sol.deviation_payoff1(x) - sol.payoff1);
        best2 = best2.max(sol.deviation_payoff2(x) - sol.payoff2);
    }
    Ok(VerificationReport {
        grid_points,
        grid_spacing: spacing,
        tolerance,
        max_improvement1: best1,
        max_improvement2: best2,
        passed: best1.max(best2) <= tolerance,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Player {
    One,
    Two,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContestDraw<T> {
    pub effort1: T,
    pub effort2: T,
    pub winner: Player,
}

const DRAWS_PER_STREAM: usize = 4096;

/// Monte Carlo play of the equilibrium. Draws are generated in fixed blocks,
/// each from its own substream of `seed`, so output is independent of the
/// rayon thread count.
pub fn sample_outcomes<T: Scalar>(
    params: &ContestParams<T>,
    n: usize,
    seed: u64,
) -> Result<Vec<ContestDraw<T>>, ContestError> {
    let sol = solve_equilibrium(params)?;
    let blocks = n.div_ceil(DRAWS_PER_STREAM);
    let out: Vec<Vec<ContestDraw<T>>> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = substream(seed, stream_id(domain::CONTEST, 0, b as u64));
            let len = DRAWS_PER_STREAM.min(n - b * DRAWS_PER_STREAM);
            (0..len)
                .map(|_| {
                    let q1: f64 = rng.random();
                    let q2: f64 = rng.random();
                    let effort1 = sol.quantile_player1(T::lit(q1));
                    let effort2 = sol.quantile_player2(T::lit(q2));
                    let winner = if effort1 > effort2 {
                        Player::One
                    } else if effort2 > effort1 {
                        Player::Two
                    } else if rng.random::<bool>() {
                        Player::One
                    } else {
                        Player::Two
                    };
                    ContestDraw {
                        effort1,
                        effort2,
                        winner,
                    }
                })
                .collect()
        })
        .collect();
    Ok(out.into_iter().flatten().collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValuePoint<T> {
    pub x: T,
    pub baseline: T,
    pub pos_expect: T,
    pub neg_expect: T,
}

/// Piecewise-linear value functions through the origin: a baseline with
/// gain slope 1 and loss slope `baseline_loss_slope`, a positive-expectation
/// variant whose loss slope grows by `d`, and a negative-expectation variant
/// whose gain slope grows by `u`.
pub fn figure1_series<T: Scalar>(
    d: T,
    u: T,
    baseline_loss_slope: T,
    x_min: T,
    x_max: T,
    points: usize,
) -> Result<Vec<ValuePoint<T>>, ContestError> {
    if !(baseline_loss_slope > T::one()) {
        return Err(ContestError::InvalidParameters(format!(
            "baseline loss slope must exceed 1, got {baseline_loss_slope}"
        )));
    }
    if !(d >= T::zero()) || !(u >= T::zero()) {
        return Err(ContestError::InvalidParameters("d and u must be nonnegative".into()));
    }
    if points < 2 || !(x_max > x_min) {
        return Err(ContestError::EmptyRange);
    }
    let value = |x: T, gain_slope: T, loss_slope: T| {
        if x >= T::zero() {
            gain_slope * x
        } else {
            loss_slope * x
        }
    };
    let step = (x_max - x_min) / T::from_usize(points - 1).unwrap();
    Ok((0..points)
        .map(|k| {
            let x = x_min + step * T::from_usize(k).unwrap();
            ValuePoint {
                x,
                baseline: value(x, T::one(), baseline_loss_slope),
                pos_expect: value(x, T::one(), baseline_loss_slope + d),
                neg_expect: value(x, T::one() + u, baseline_loss_slope),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn p(w: f64, d: f64, u: f64, s: u8) -> ContestParams<f64> {
        ContestParams::new(w, d, u, s).unwrap()
    }

    /// Discretized oracle: each player's mixture is replaced by point masses
    /// at cell midpoints of a 200-cell grid over `[0, v2]` (plus the atom),
    /// and win probability and mean efforts are summed pairwise with
    /// coin-flip ties. Independent of the closed forms in `solve_equilibrium`
    /// except through the CDFs it discretizes.
    fn discretized_oracle(sol: &EquilibriumSolution<f64>) -> (f64, f64, f64) {
        let cells = 200;
        let h = sol.support_upper / cells as f64;
        let mut m1 = Vec::new();
        let mut m2 = vec![(0.0, sol.cdf_player2(0.0))];
        for k in 0..cells {
            let (a, b) = (k as f64 * h, (k + 1) as f64 * h);
            let mid = 0.5 * (a + b);
            m1.push((mid, sol.cdf_player1(b) - sol.cdf_player1(a)));
            m2.push((mid, sol.cdf_player2(b) - sol.cdf_player2(a)));
        }
        let mut p1 = 0.0;
        for &(x1, w1) in &m1 {
            for &(x2, w2) in &m2 {
                if x1 > x2 {
                    p1 += w1 * w2;
                } else if x1 == x2 {
                    p1 += 0.5 * w1 * w2;
                }
            }
        }
        let e1 = m1.iter().map(|(x, w)| x * w).sum();
        let e2 = m2.iter().map(|(x, w)| x * w).sum();
        (p1, e1, e2)
    }

    #[test]
    fn positive_expectation_example() {
        let sol = solve_equilibrium(&p(1.0, 1.0, 0.0, 1)).unwrap();
        assert_eq!((sol.stake1, sol.stake2), (2.0, 1.0));
        assert_eq!(sol.atom_at_zero, 0.5);
        assert_eq!((sol.win_prob1, sol.win_prob2), (0.75, 0.25));
        assert_eq!((sol.effort1, sol.effort2), (0.5, 0.25));
        assert_eq!(sol.payoff1, 0.0);
        let (p1, e1, e2) = discretized_oracle(&sol);
        assert!((p1 - 0.75).abs() < 5e-3, "oracle p1 {p1}");
        assert!((e1 - 0.5).abs() < 1e-9);
        assert!((e2 - 0.25).abs() < 1e-9);
    }

    #[test]
    fn salience_off_is_symmetric() {
        let sol = solve_equilibrium(&p(1.0, 5.0, 3.0, 0)).unwrap();
        assert_eq!((sol.stake1, sol.stake2), (1.0, 1.0));
        assert_eq!(sol.atom_at_zero, 0.0);
        assert_eq!((sol.win_prob1, sol.win_prob2), (0.5, 0.5));
        assert_eq!((sol.effort1, sol.effort2), (0.5, 0.5));
        assert_eq!(sol.cdf_player2(0.0), 0.0);
    }

    #[test]
    fn win_probability_with_bonus() {
        let sol = solve_equilibrium(&p(1.0, 0.5, 0.2, 1)).unwrap();
        assert_relative_eq!(sol.win_prob2, 0.4, epsilon = 1e-15);
        assert_relative_eq!(sol.win_prob1, 0.6, epsilon = 1e-15);
        let (p1, _, _) = discretized_oracle(&sol);
        assert!((p1 - 0.6).abs() < 5e-3);
    }

    #[test]
    fn printed_efforts_are_reported() {
        let sol = solve_equilibrium(&p(1.0, 1.0, 0.0, 1)).unwrap();
        assert_relative_eq!(sol.effort1_printed, 4.0 / 3.0);
        assert_relative_eq!(sol.effort2_printed, 2.0 / 3.0);
    }

    #[test]
    fn rejects_invalid_parameters() {
        assert!(ContestParams::new(0.0, 1.0, 0.0, 1).is_err());
        assert!(ContestParams::new(1.0, 0.1, 0.2, 1).is_err());
        assert!(ContestParams::new(1.0, 1.0, -0.1, 1).is_err());
        assert!(ContestParams::new(1.0, 1.0, 0.0, 2).is_err());
        let raw = ContestParams { prize: -1.0, loss_penalty: 0.0, win_bonus: 0.0, salience: 0 };
        assert!(solve_equilibrium(&raw).is_err());
    }

    #[test]
    fn cdf_values() {
        let sol = solve_equilibrium(&p(1.0, 1.0, 0.0, 1)).unwrap();
        assert_eq!(sol.cdf_player1(0.5), 0.5);
        assert_eq!(sol.cdf_player2(0.5), 0.75);
        assert_eq!(sol.cdf_player1(1.0), 1.0);
        assert_eq!(sol.cdf_player2(1.0), 1.0);
        assert_eq!(sol.cdf_player2(0.0), 0.5);
        assert_eq!(sol.cdf_player1(7.0), 1.0);
    }

    #[test]
    fn verification_examples() {
        let r = verify_equilibrium(&p(1.0, 1.0, 0.0, 1), 200, None).unwrap();
        assert!(r.passed);
        assert!(r.max_improvement() <= 0.011);
        let r = verify_equilibrium(&p(1.0, 0.0, 0.0, 1), 200, None).unwrap();
        assert!(r.passed);
        let sol = solve_equilibrium(&p(1.0, 0.0, 0.0, 1)).unwrap();
        assert_eq!((sol.payoff1, sol.payoff2), (0.0, 0.0));
        assert!(matches!(
            verify_equilibrium(&p(1.0, 1.0, 0.0, 1), 10, None),
            Err(ContestError::GridTooCoarse(10))
        ));
    }

    #[test]
    fn doubled_parameters_double_quantities() {
        let a = solve_equilibrium(&p(1.0, 1.0, 0.0, 1)).unwrap();
        let b = solve_equilibrium(&p(2.0, 2.0, 0.0, 1)).unwrap();
        assert!(verify_equilibrium(&p(2.0, 2.0, 0.0, 1), 200, None).unwrap().passed);
        assert_eq!(b.stake1, 2.0 * a.stake1);
        assert_eq!(b.effort1, 2.0 * a.effort1);
        assert_eq!(b.effort2, 2.0 * a.effort2);
        assert_eq!((b.win_prob1, b.win_prob2), (a.win_prob1, a.win_prob2));
    }

    #[test]
    fn sampling_is_deterministic() {
        let params = p(1.0, 0.5, 0.2, 1);
        assert_eq!(
            sample_outcomes(&params, 1, 99).unwrap(),
            sample_outcomes(&params, 1, 99).unwrap()
        );
        let a = sample_outcomes(&params, 10_000, 5).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| sample_outcomes(&params, 10_000, 5).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn sampling_win_frequency() {
        let n = 200_000;
        let draws = sample_outcomes(&p(1.0, 1.0, 0.0, 1), n, 11).unwrap();
        let wins = draws.iter().filter(|d| d.winner == Player::One).count() as f64 / n as f64;
        let se = (0.75f64 * 0.25 / n as f64).sqrt();
        assert!((wins - 0.75).abs() < 3.0 * se, "{wins}");
    }

    #[test]
    fn figure1_examples() {
        let pts = figure1_series(1.0, 0.5, 2.0, -1.0, 1.0, 3).unwrap();
        assert_eq!(pts[1].x, 0.0);
        assert_eq!((pts[1].baseline, pts[1].pos_expect, pts[1].neg_expect), (0.0, 0.0, 0.0));
        assert_eq!(pts[0].pos_expect, -3.0);
        assert_eq!(pts[0].baseline, -2.0);
        assert_eq!(pts[0].neg_expect, -2.0);
        assert_eq!(pts[2].neg_expect, 1.5);
        assert_eq!(pts[2].pos_expect, 1.0);
        let flat = figure1_series(0.0, 0.0, 2.0, -2.0, 2.0, 9).unwrap();
        assert!(flat
            .iter()
            .all(|v| v.baseline == v.pos_expect && v.baseline == v.neg_expect));
        assert_eq!(figure1_series(1.0, 0.0, 2.0, 1.0, 1.0, 5), Err(ContestError::EmptyRange));
        assert!(figure1_series(1.0, 0.0, 0.5, -1.0, 1.0, 5).is_err());
    }

    #[test]
    fn works_in_f32() {
        let sol = solve_equilibrium(&ContestParams::new(1.0f32, 1.0, 0.0, 1).unwrap()).unwrap();
        assert_eq!(sol.win_prob1, 0.75f32);
        assert!(verify_equilibrium(&sol.params, 100, None).unwrap().passed);
    }

    proptest! {
        #[test]
        fn equilibrium_invariants(w in 0.1f64..5.0, d in 0.0f64..5.0, frac in 0.0f64..=1.0, s in 0u8..=1) {
            let u = d * frac;
            let sol = solve_equilibrium(&p(w, d, u, s)).unwrap();
            prop_assert!((sol.win_prob1 + sol.win_prob2 - 1.0).abs() < 1e-12);
            prop_assert!(sol.win_prob1 >= 0.5);
            prop_assert_eq!(sol.win_prob1 > 0.5, s == 1 && d > u);
            prop_assert!(sol.effort1 >= sol.effort2 * (1.0 - 1e-12));
            if s == 1 && d > u {
                prop_assert!(sol.effort1 > sol.effort2);
            }
            prop_assert_eq!(sol.payoff2, 0.0);
            prop_assert_eq!(sol.payoff1, -u * s as f64);
            prop_assert!(sol.atom_at_zero >= 0.0 && sol.atom_at_zero < 1.0);
            let mut prev = (0.0, 0.0);
            for k in 0..=40 {
                let x = sol.support_upper * k as f64 / 40.0;
                let c = (sol.cdf_player1(x), sol.cdf_player2(x));
                prop_assert!(c.0 >= prev.0 && c.1 >= prev.1);
                prev = c;
            }
            prop_assert!((prev.0 - 1.0).abs() < 1e-12 && (prev.1 - 1.0).abs() < 1e-12);
        }

        #[test]
        fn scale_equivariance(w in 0.1f64..5.0, d in 0.0f64..5.0, frac in 0.0f64..=1.0, s in 0u8..=1, k in 0.1f64..10.0) {
            let base = p(w, d, d * frac, s);
            let a = solve_equilibrium(&base).unwrap();
            let b = solve_equilibrium(&base.scaled(k)).unwrap();
            let close = |x: f64, y: f64| (x - y).abs() <= 1e-9 * (1.0 + x.abs().max(y.abs()));
            prop_assert!(close(b.stake1, k * a.stake1) && close(b.stake2, k * a.stake2));
            prop_assert!(close(b.effort1, k * a.effort1) && close(b.effort2, k * a.effort2));
            prop_assert!(close(b.payoff1, k * a.payoff1) && close(b.payoff2, k * a.payoff2));
            prop_assert!(close(b.win_prob1, a.win_prob1) && close(b.atom_at_zero, a.atom_at_zero));
        }
    }
}
