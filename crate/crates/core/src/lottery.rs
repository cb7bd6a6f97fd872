//! Raffle implementation of the fixed-budget rebate for finitely many users.
//!
//! Each round one prize R goes to user i with probability x_i / Σx_j, so the
//! expected reward is R·x_i/Σx_j, the finite counterpart of R·x/G. Nobody
//! wins a round when all contributions are zero.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{Binomial, DiscreteCDF};

use crate::equilibrium::best_response;
use crate::error::{Error, Result};
use crate::mechanism::Mechanism;
use crate::model::ReducedModel;

/// Rounds drawn from one RNG stream. Fixed so that results do not depend on
/// how rounds are spread over threads.
pub const CHUNK_ROUNDS: u64 = 4096;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LotterySpec {
    pub contributions: Vec<f64>,
    pub prize: f64,
    pub rounds: u64,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LotteryOutcome {
    pub win_counts: Vec<u64>,
    /// R·wins/rounds per user.
    pub empirical_rewards: Vec<f64>,
    /// Rounds in which the prize was paid.
    pub winning_rounds: u64,
    pub total_paid: f64,
}

fn validate(spec: &LotterySpec) -> Result<()> {
    if spec.rounds == 0 {
        return Err(Error::Lottery("rounds must be at least 1".into()));
    }
    if !(spec.prize >= 0.0 && spec.prize.is_finite()) {
        return Err(Error::Lottery(format!("prize must be finite and non-negative, got {}", spec.prize)));
    }
    if let Some((i, x)) = spec.contributions.iter().enumerate().find(|(_, x)| !(**x >= 0.0 && x.is_finite())) {
        return Err(Error::Lottery(format!("contribution of user {i} is {x}")));
    }
    Ok(())
}

/// Draws `spec.rounds` rounds, in parallel over fixed chunks of rounds.
pub fn run_lottery(spec: &LotterySpec) -> Result<LotteryOutcome> {
    validate(spec)?;
    let n = spec.contributions.len();
    let cumulative: Vec<f64> = spec
        .contributions
        .iter()
        .scan(0.0, |acc, x| {
            *acc += x;
            Some(*acc)
        })
        .collect();
    let total = cumulative.last().copied().unwrap_or(0.0);
    if total <= 0.0 {
        return Ok(LotteryOutcome {
            win_counts: vec![0; n],
            empirical_rewards: vec![0.0; n],
            winning_rounds: 0,
            total_paid: 0.0,
        });
    }
    // A draw that rounds up to the total lands on the last contributor.
    let last = spec.contributions.iter().rposition(|&x| x > 0.0).unwrap_or(n - 1);
    let chunks = spec.rounds.div_ceil(CHUNK_ROUNDS);

    let win_counts = (0..chunks)
        .into_par_iter()
        .fold(
            || vec![0u64; n],
            |mut counts, chunk| {
                let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
                rng.set_stream(chunk);
                let rounds = CHUNK_ROUNDS.min(spec.rounds - chunk * CHUNK_ROUNDS);
                for _ in 0..rounds {
                    let u = rng.random::<f64>() * total;
                    let winner = cumulative.partition_point(|&c| c <= u).min(last);
                    counts[winner] += 1;
                }
                counts
            },
        )
        .reduce(
            || vec![0u64; n],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        );

    let rounds = spec.rounds as f64;
    Ok(LotteryOutcome {
        empirical_rewards: win_counts.iter().map(|&k| spec.prize * k as f64 / rounds).collect(),
        win_counts,
        winning_rounds: spec.rounds,
        total_paid: spec.prize * rounds,
    })
}

/// Central binomial interval of the win count with the given coverage:
/// the (1 − coverage)/2 and (1 + coverage)/2 quantiles of Bin(rounds, p).
pub fn binomial_band(rounds: u64, p: f64, coverage: f64) -> Result<(u64, u64)> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Lottery(format!("win probability {p} outside [0, 1]")));
    }
    if p == 0.0 {
        return Ok((0, 0));
    }
    if p == 1.0 {
        return Ok((rounds, rounds));
    }
    let dist = Binomial::new(p, rounds).map_err(|e| Error::Lottery(e.to_string()))?;
    let tail = 0.5 * (1.0 - coverage);
    Ok((dist.inverse_cdf(tail), dist.inverse_cdf(1.0 - tail)))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BandCheck {
    pub user: usize,
    pub expected_reward: f64,
    pub empirical_reward: f64,
    pub lower_reward: f64,
    pub upper_reward: f64,
    pub inside: bool,
}

/// Compares every user's empirical reward with the binomial band around
/// R·x_i/Σx_j.
pub fn band_checks(spec: &LotterySpec, outcome: &LotteryOutcome, coverage: f64) -> Result<Vec<BandCheck>> {
    let total: f64 = spec.contributions.iter().sum();
    let rounds = spec.rounds as f64;
    spec.contributions
        .iter()
        .enumerate()
        .map(|(user, &x)| {
            let p = if total > 0.0 { (x / total).min(1.0) } else { 0.0 };
            let (lo, hi) = binomial_band(spec.rounds, p, coverage)?;
            let wins = outcome.win_counts[user];
            Ok(BandCheck {
                user,
                expected_reward: spec.prize * p,
                empirical_reward: outcome.empirical_rewards[user],
                lower_reward: spec.prize * lo as f64 / rounds,
                upper_reward: spec.prize * hi as f64 / rounds,
                inside: (lo..=hi).contains(&wins),
            })
        })
        .collect()
}

/// Contributions of `n` users with types drawn from the population, each
/// best-responding to the equilibrium level `g_eq` under `mech`.
pub fn sample_profile(model: &ReducedModel, mech: &Mechanism, g_eq: f64, n: usize, seed: u64) -> Result<Vec<f64>> {
    let grid = model.grid();
    let cumulative = grid.cumulative_weights();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let theta = grid.sample_type(&cumulative, &mut rng);
            best_response(model, mech, theta, g_eq)
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub users: usize,
    pub rounds: u64,
    pub max_abs_error: f64,
    /// max |empirical − expected| / σ over contributing users, with σ the
    /// binomial standard deviation of the reward.
    pub max_normalized_error: f64,
    pub all_inside: bool,
    /// max |R·x_i/Σx_j − R·x_i·μ(Θ)/(N·G)|: distance to the non-atomic reward.
    pub nonatomic_gap: f64,
}

/// Lottery error statistics for each user count in `users`, with profiles
/// drawn from the equilibrium at `g_eq`.
pub fn convergence_study(
    model: &ReducedModel,
    budget: f64,
    g_eq: f64,
    users: &[usize],
    rounds: u64,
    seed: u64,
    coverage: f64,
) -> Result<Vec<ConvergenceRow>> {
    let mech = Mechanism::fbr(budget)?;
    users
        .iter()
        .map(|&n| {
            let contributions = sample_profile(model, &mech, g_eq, n, seed)?;
            let spec = LotterySpec { contributions, prize: budget, rounds, seed };
            let outcome = run_lottery(&spec)?;
            let checks = band_checks(&spec, &outcome, coverage)?;
            let total: f64 = spec.contributions.iter().sum();
            let scale = model.grid().total_mass() / (n as f64 * g_eq);
            let mut row = ConvergenceRow {
                users: n,
                rounds,
                max_abs_error: 0.0,
                max_normalized_error: 0.0,
                all_inside: checks.iter().all(|c| c.inside),
                nonatomic_gap: 0.0,
            };
            for (c, &x) in checks.iter().zip(&spec.contributions) {
                let err = (c.empirical_reward - c.expected_reward).abs();
                row.max_abs_error = row.max_abs_error.max(err);
                let p = x / total;
                if p > 0.0 && p < 1.0 {
                    let sigma = budget * (p * (1.0 - p) / rounds as f64).sqrt();
                    row.max_normalized_error = row.max_normalized_error.max(err / sigma);
                }
                row.nonatomic_gap = row.nonatomic_gap.max((c.expected_reward - budget * x * scale).abs());
            }
            Ok(row)
        })
        .collect()
}
