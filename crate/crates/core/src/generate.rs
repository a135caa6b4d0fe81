//! Seeded random instances. Every draw is a pure function of
//! (seed, trial index), so any witness can be regenerated bit for bit and
//! parallel trial scheduling cannot change results.

use crate::stepfn::{ExponentProfile, StepFunction, P_MAX};
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GenError {
    #[error("max_pieces must be at least 1")]
    NoPieces,
    #[error("range ({lo}, {hi}) is not ordered or not finite")]
    BadRange { lo: f64, hi: f64 },
    #[error("exponent range must lie inside [1, {P_MAX:e}]")]
    ExponentRange,
    #[error("zero_piece_prob {0} outside [0, 1]")]
    BadProbability(f64),
}

/// Knobs for the instance generator.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct GenConfig {
    pub max_pieces: usize,
    pub f_range: (f64, f64),
    /// Exponents are drawn log-uniformly over this range: linear draws
    /// under-sample the stiff large-p regime.
    pub p_range: (f64, f64),
    pub zero_piece_prob: f64,
    pub seed: u64,
}

impl GenConfig {
    pub fn new(seed: u64) -> Self {
        Self {
            max_pieces: 8,
            f_range: (0.0, 4.0),
            p_range: (1.0, 64.0),
            zero_piece_prob: 0.1,
            seed,
        }
    }

    /// Same shape but exponents up to 10⁴, for the stiff-regime suite.
    pub fn extreme(seed: u64) -> Self {
        Self {
            p_range: (1.0, 1e4),
            ..Self::new(seed)
        }
    }

    pub fn validate(&self) -> Result<(), GenError> {
        if self.max_pieces == 0 {
            return Err(GenError::NoPieces);
        }
        let ordered = |(lo, hi): (f64, f64)| lo.is_finite() && hi.is_finite() && lo <= hi;
        if !ordered(self.f_range) || self.f_range.0 < 0.0 {
            return Err(GenError::BadRange {
                lo: self.f_range.0,
                hi: self.f_range.1,
            });
        }
        if !ordered(self.p_range) {
            return Err(GenError::BadRange {
                lo: self.p_range.0,
                hi: self.p_range.1,
            });
        }
        if self.p_range.0 < 1.0 || self.p_range.1 > P_MAX {
            return Err(GenError::ExponentRange);
        }
        if !(0.0..=1.0).contains(&self.zero_piece_prob) {
            return Err(GenError::BadProbability(self.zero_piece_prob));
        }
        Ok(())
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E3779B97F4A7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D049BB133111EB);
    x ^ (x >> 31)
}

/// Collapse (seed, trial) into one well-mixed sub-seed.
pub fn mix_seed(seed: u64, trial: u64) -> u64 {
    splitmix64(seed ^ splitmix64(trial))
}

/// The per-trial generator; identical across threads and platforms.
pub fn sub_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix_seed(seed, trial))
}

/// Uniform draw in [0, 1) with full 53-bit resolution.
pub fn unit_f64(rng: &mut impl RngCore) -> f64 {
    (rng.next_u64() >> 11) as f64 * 2f64.powi(-53)
}

pub fn uniform_in(rng: &mut impl RngCore, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * unit_f64(rng)
}

/// exp of a uniform draw on [ln lo, ln hi], clamped back into the range so
/// rounding never escapes the configured bounds.
pub fn log_uniform_in(rng: &mut impl RngCore, lo: f64, hi: f64) -> f64 {
    uniform_in(rng, lo.ln(), hi.ln()).exp().clamp(lo, hi)
}

/// In-place Fisher–Yates shuffle.
pub fn shuffle<T>(rng: &mut impl RngCore, xs: &mut [T]) {
    for i in (1..xs.len()).rev() {
        let j = (rng.next_u64() % (i as u64 + 1)) as usize;
        xs.swap(i, j);
    }
}

/// Draw an instance continuing on an existing stream (checks draw further
/// randomness — permutations, cuts — from the same stream afterwards).
pub fn generate_instance_with(
    rng: &mut impl RngCore,
    cfg: &GenConfig,
) -> (StepFunction, ExponentProfile) {
    let n = 1 + (rng.next_u64() % cfg.max_pieces as u64) as usize;
    // Positive raw lengths bounded away from 0 so normalization cannot
    // produce degenerate slivers.
    let raw: Vec<f64> = (0..n).map(|_| 0.05 + unit_f64(rng)).collect();
    let total: f64 = raw.iter().sum();
    let lens: Vec<f64> = raw.iter().map(|x| x / total).collect();
    let values: Vec<f64> = (0..n)
        .map(|_| {
            let v = uniform_in(rng, cfg.f_range.0, cfg.f_range.1);
            if unit_f64(rng) < cfg.zero_piece_prob {
                0.0
            } else {
                v
            }
        })
        .collect();
    let ps: Vec<f64> = (0..n)
        .map(|_| log_uniform_in(rng, cfg.p_range.0, cfg.p_range.1))
        .collect();
    let fp: Vec<(f64, f64)> = lens.iter().copied().zip(values).collect();
    let pp: Vec<(f64, f64)> = lens.iter().copied().zip(ps).collect();
    let f = StepFunction::from_pieces(&fp).expect("generated lengths sum to 1");
    let p = ExponentProfile::from_pieces(&pp).expect("generated exponents in range");
    (f, p)
}

/// The trial's instance as a pure function of (cfg.seed, trial).
pub fn generate_instance(cfg: &GenConfig, trial: u64) -> (StepFunction, ExponentProfile) {
    let mut rng = sub_rng(cfg.seed, trial);
    generate_instance_with(&mut rng, cfg)
}
