//! Modular functionals Σ len·w·(|f|/λ)^p over a common refinement grid.
//!
//! Three weightings share one kernel: the 1/p-weighted form, the unit-weight
//! form, and a general positive step weight. Keeping the kernel shared makes
//! "weighted with w = 1/p" reproduce the 1/p-weighted form bit for bit.

use crate::stepfn::{common_refinement_all, ExponentProfile, StepFunction};
use thiserror::Error;

/// Per-piece exponent magnitude beyond which the term is assembled in log
/// domain; straight powf would clip to 0/inf before len·w could rescale.
const LOG_TERM_THRESHOLD: f64 = 600.0;

#[derive(Debug, Error, PartialEq)]
pub enum ModularError {
    #[error("lambda must be positive, got {lambda}")]
    NonPositiveLambda { lambda: f64 },
    #[error("weight value {value} at piece {index} must be positive and finite")]
    NonPositiveWeight { index: usize, value: f64 },
    #[error("modular exceeds double range; rescale lambda")]
    Overflow,
}

/// Strictly positive step weight w(·).
#[derive(Clone, Debug, PartialEq)]
pub struct WeightProfile(StepFunction);

impl WeightProfile {
    pub fn new(sf: StepFunction) -> Result<Self, ModularError> {
        for (i, &v) in sf.values().iter().enumerate() {
            if !(v > 0.0) || !v.is_finite() {
                return Err(ModularError::NonPositiveWeight { index: i, value: v });
            }
        }
        Ok(Self(sf))
    }

    pub fn constant(w: f64) -> Result<Self, ModularError> {
        Self::new(StepFunction::constant(w))
    }

    /// w = 1/p on p's own grid; always valid since p ∈ [1, P_MAX].
    pub fn reciprocal_exponent(p: &ExponentProfile) -> Self {
        let breaks = p.breakpoints().to_vec();
        let values = p.values().iter().map(|&q| 1.0 / q).collect();
        Self(StepFunction::new(breaks, values).expect("1/p inherits a valid grid"))
    }

    pub fn as_step(&self) -> &StepFunction {
        &self.0
    }

    pub fn values(&self) -> &[f64] {
        self.0.values()
    }

    pub fn breakpoints(&self) -> &[f64] {
        self.0.breakpoints()
    }
}

fn ensure_lambda(lambda: f64) -> Result<(), ModularError> {
    if lambda > 0.0 && lambda.is_finite() {
        Ok(())
    } else {
        Err(ModularError::NonPositiveLambda { lambda })
    }
}

/// One piece's contribution len·w·(|f|/λ)^p. Zero pieces and zero values
/// contribute exactly 0; a term past double range is an overflow error.
pub(crate) fn piece_term(
    len: f64,
    w: f64,
    abs_f: f64,
    p: f64,
    lambda: f64,
) -> Result<f64, ModularError> {
    if len == 0.0 || abs_f == 0.0 {
        return Ok(0.0);
    }
    let x = abs_f / lambda;
    let e = p * x.ln();
    let term = if e.abs() > LOG_TERM_THRESHOLD {
        (len.ln() + w.ln() + e).exp()
    } else {
        len * w * x.powf(p)
    };
    if term.is_finite() {
        Ok(term)
    } else {
        Err(ModularError::Overflow)
    }
}

/// Σ piece_term over pre-refined grids; `weight_of(i)` supplies w on piece i.
fn modular_core(
    f: &StepFunction,
    p: &StepFunction,
    weight_of: impl Fn(usize) -> f64,
    lambda: f64,
) -> Result<f64, ModularError> {
    let mut sum = 0.0;
    for i in 0..f.n_pieces() {
        sum += piece_term(
            f.piece_len(i),
            weight_of(i),
            f.values()[i].abs(),
            p.values()[i],
            lambda,
        )?;
    }
    if sum.is_finite() {
        Ok(sum)
    } else {
        Err(ModularError::Overflow)
    }
}

/// ∫ (1/p(t)) |f(t)/λ|^{p(t)} dt.
pub fn modular_nakano(
    f: &StepFunction,
    p: &ExponentProfile,
    lambda: f64,
) -> Result<f64, ModularError> {
    ensure_lambda(lambda)?;
    let refined = common_refinement_all(&[f, p.as_step()]);
    let pv = refined[1].values().to_vec();
    modular_core(&refined[0], &refined[1], |i| 1.0 / pv[i], lambda)
}

/// ∫ |f(t)/λ|^{p(t)} dt.
pub fn modular_mo(
    f: &StepFunction,
    p: &ExponentProfile,
    lambda: f64,
) -> Result<f64, ModularError> {
    ensure_lambda(lambda)?;
    let refined = common_refinement_all(&[f, p.as_step()]);
    modular_core(&refined[0], &refined[1], |_| 1.0, lambda)
}

/// ∫ w(t) |f(t)/λ|^{p(t)} dt.
pub fn modular_weighted(
    f: &StepFunction,
    p: &ExponentProfile,
    w: &WeightProfile,
    lambda: f64,
) -> Result<f64, ModularError> {
    ensure_lambda(lambda)?;
    let refined = common_refinement_all(&[f, p.as_step(), w.as_step()]);
    let wv = refined[2].values().to_vec();
    modular_core(&refined[0], &refined[1], |i| wv[i], lambda)
}

/// d/dλ of the weighted modular: −λ^{−1} Σ len·w·p·(|f|/λ)^p, term-exact.
/// With w = 1/p and ∫|f|^p dt = 1 this equals −1 at λ = 1.
pub fn modular_lambda_derivative(
    f: &StepFunction,
    p: &ExponentProfile,
    w: &WeightProfile,
    lambda: f64,
) -> Result<f64, ModularError> {
    ensure_lambda(lambda)?;
    let refined = common_refinement_all(&[f, p.as_step(), w.as_step()]);
    let pv = refined[1].values().to_vec();
    let wv = refined[2].values().to_vec();
    let sum = modular_core(&refined[0], &refined[1], |i| wv[i] * pv[i], lambda)?;
    Ok(-sum / lambda)
}
