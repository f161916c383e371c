//! Monte Carlo simulation of the closed-loop reserve and estimation of
//! the expected discounted dividends.
//!
//! Paths are event-driven: the next claim time is drawn exactly from the
//! conditional waiting law given the current clock, the diffusion is
//! advanced by Euler–Maruyama between claims, and the clock resets to
//! zero at each claim. Ruin is the first time the surplus goes strictly
//! negative, checked after every diffusion sub-step and after every
//! jump. Dividends accrue with a trapezoid discount weight per sub-step.
//!
//! Every path owns the stream derived from `(seed, path_index)`, so the
//! estimate is bit-identical for any thread count and a longer run
//! reproduces a shorter run's paths exactly.

use crate::error::{Error, Result};
use crate::model::{ClaimLaw, ModelParams, State, WaitingLaw};
use crate::policy::Policy;
use crate::rng::Stream;
use rayon::prelude::*;

/// Monte Carlo run configuration.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SimConfig {
    /// Euler sub-step between claim events.
    pub dt: f64,
    pub n_paths: usize,
    pub seed: u64,
    pub record_paths: bool,
    pub start: State,
}

impl SimConfig {
    pub fn validate(&self, params: &ModelParams) -> Result<()> {
        if !(self.dt > 0.0) {
            return Err(Error::Config("simulation step dt must be positive".into()));
        }
        if self.n_paths == 0 {
            return Err(Error::Config("simulation needs at least one path".into()));
        }
        if !self.start.in_physical_domain(params.horizon) {
            return Err(Error::Config(format!(
                "start state (s={}, x={}, w={}) is outside the physical domain",
                self.start.s, self.start.x, self.start.w
            )));
        }
        Ok(())
    }

    /// FNV-1a over the fields that determine the estimate.
    pub fn content_hash(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |bits: u64| {
            for b in bits.to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        };
        eat(self.dt.to_bits());
        eat(self.n_paths as u64);
        eat(self.seed);
        eat(self.start.s.to_bits());
        eat(self.start.x.to_bits());
        eat(self.start.w.to_bits());
        h
    }
}

/// A recorded point of a simulated trajectory.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct PathPoint {
    pub t: f64,
    pub x: f64,
    pub w: f64,
    pub gamma: f64,
    pub a: f64,
    pub cum_dividends: f64,
}

/// Outcome of one simulated path.
#[derive(Debug, Clone)]
pub struct PathRecord {
    /// First time the surplus went strictly negative, if it did. A path
    /// started already ruined reports the start time itself.
    pub ruin_time: Option<f64>,
    /// `∫ e^{-c (t - s)} a_t dt` up to ruin or the horizon.
    pub discounted_dividends: f64,
    pub n_claims: usize,
    /// Numeric blow-up: the path is excluded from estimates.
    pub aborted: bool,
    pub trajectory: Option<Vec<PathPoint>>,
}

/// Monte Carlo estimate of the expected discounted dividends.
#[derive(Debug, Clone, serde::Serialize)]
pub struct MCEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n_paths: usize,
    pub n_aborted: usize,
    /// False when more than 1% of paths aborted.
    pub valid: bool,
    pub config_hash: u64,
}

const OVERFLOW_GUARD: f64 = 1e12;

/// Simulates one closed-loop path under the policy.
pub fn simulate_path<P: Policy + ?Sized>(
    policy: &P,
    params: &ModelParams,
    waiting: &WaitingLaw,
    claims: &ClaimLaw,
    cfg: &SimConfig,
    rng: &mut Stream,
) -> Result<PathRecord> {
    let s0 = cfg.start.s;
    let horizon = params.horizon;
    let mut t = s0;
    let mut x = cfg.start.x;
    let mut w = cfg.start.w;
    let mut disc = 0.0;
    let mut n_claims = 0usize;
    let mut trajectory = cfg.record_paths.then(Vec::new);

    if x < 0.0 {
        return Ok(PathRecord {
            ruin_time: Some(s0),
            discounted_dividends: 0.0,
            n_claims: 0,
            aborted: false,
            trajectory,
        });
    }

    let mut until_claim = waiting.sample_first_waiting(w, rng)?;
    let record = |tr: &mut Option<Vec<PathPoint>>, t: f64, x: f64, w: f64, g: f64, a: f64, cum: f64| {
        if let Some(tr) = tr {
            tr.push(PathPoint { t, x, w, gamma: g, a, cum_dividends: cum });
        }
    };
    {
        let (g0, a0) = policy.control(t, x, w);
        record(&mut trajectory, t, x, w, g0, a0, 0.0);
    }

    while t < horizon - 1e-14 {
        let step = cfg.dt.min(horizon - t).min(until_claim.max(1e-14));
        let (gamma, a) = policy.control(t, x, w);
        let drift = params.premium
            + (params.interest + (params.drift - params.interest) * gamma) * x
            - a;
        let vol = params.volatility * gamma * x;
        // trapezoid discount weight over [t, t + step]
        let d_lo = (-params.discount * (t - s0)).exp();
        let d_hi = (-params.discount * (t + step - s0)).exp();
        disc += a * 0.5 * (d_lo + d_hi) * step;
        x += drift * step + vol * step.sqrt() * rng.next_normal();
        t += step;
        w += step;
        until_claim -= step;
        if !x.is_finite() || x.abs() > OVERFLOW_GUARD {
            return Ok(PathRecord {
                ruin_time: None,
                discounted_dividends: disc,
                n_claims,
                aborted: true,
                trajectory,
            });
        }
        if x < 0.0 {
            record(&mut trajectory, t, x, w, gamma, a, disc);
            return Ok(PathRecord {
                ruin_time: Some(t),
                discounted_dividends: disc,
                n_claims,
                aborted: false,
                trajectory,
            });
        }
        if until_claim <= 1e-14 && t < horizon - 1e-14 {
            x -= claims.sample(rng);
            w = 0.0;
            n_claims += 1;
            until_claim = waiting.sample_first_waiting(0.0, rng)?;
            if x < 0.0 {
                record(&mut trajectory, t, x, w, gamma, a, disc);
                return Ok(PathRecord {
                    ruin_time: Some(t),
                    discounted_dividends: disc,
                    n_claims,
                    aborted: false,
                    trajectory,
                });
            }
        }
        record(&mut trajectory, t, x, w, gamma, a, disc);
    }

    Ok(PathRecord { ruin_time: None, discounted_dividends: disc, n_claims, aborted: false, trajectory })
}

/// Runs `n_paths` independent paths and aggregates mean and standard
/// error. Path `i` always uses stream `(seed, i)`; the reduction is a
/// compensated sum in path order, so the result does not depend on the
/// thread count.
pub fn estimate_j<P: Policy + ?Sized>(
    policy: &P,
    params: &ModelParams,
    waiting: &WaitingLaw,
    claims: &ClaimLaw,
    cfg: &SimConfig,
) -> Result<MCEstimate> {
    cfg.validate(params)?;
    let records = simulate_paths(policy, params, waiting, claims, cfg)?;
    let mut n_aborted = 0usize;
    // Kahan-compensated sums over path index order
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    let (mut sum2, mut comp2) = (0.0f64, 0.0f64);
    let mut n_used = 0usize;
    for rec in &records {
        if rec.aborted {
            n_aborted += 1;
            continue;
        }
        n_used += 1;
        let y = rec.discounted_dividends - comp;
        let t = sum + y;
        comp = (t - sum) - y;
        sum = t;
        let y2 = rec.discounted_dividends * rec.discounted_dividends - comp2;
        let t2 = sum2 + y2;
        comp2 = (t2 - sum2) - y2;
        sum2 = t2;
    }
    if n_used == 0 {
        return Err(Error::Numeric("all simulation paths aborted".into()));
    }
    let mean = sum / n_used as f64;
    let var = (sum2 / n_used as f64 - mean * mean).max(0.0);
    let std_error = if n_used > 1 { (var / (n_used - 1) as f64).sqrt() } else { 0.0 };
    Ok(MCEstimate {
        mean,
        std_error,
        n_paths: cfg.n_paths,
        n_aborted,
        valid: (n_aborted as f64) <= 0.01 * cfg.n_paths as f64,
        config_hash: cfg.content_hash(),
    })
}

/// All path records, in path order.
pub fn simulate_paths<P: Policy + ?Sized>(
    policy: &P,
    params: &ModelParams,
    waiting: &WaitingLaw,
    claims: &ClaimLaw,
    cfg: &SimConfig,
) -> Result<Vec<PathRecord>> {
    (0..cfg.n_paths)
        .into_par_iter()
        .map(|i| {
            let mut rng = Stream::new(cfg.seed, i as u64);
            simulate_path(policy, params, waiting, claims, cfg, &mut rng)
        })
        .collect()
}
