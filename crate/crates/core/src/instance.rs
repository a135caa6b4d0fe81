//! Instance files: `{"pieces": [{"len": .., "f": .., "p": ..}, ..]}`.
//!
//! Lengths must sum to 1 within 1e−9 and are renormalized to sum exactly 1;
//! a missing "p" defaults to 1. The half-line variant adds a per-piece
//! weight "w" and drops the unit-sum constraint.

use crate::stepfn::{ExponentProfile, StepFnError, StepFunction};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum InstanceError {
    #[error("malformed instance file: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Step(#[from] StepFnError),
    #[error("instance has no pieces")]
    Empty,
    #[error("piece {index} has non-finite or negative fields")]
    BadPiece { index: usize },
}

fn default_p() -> f64 {
    1.0
}

fn default_w() -> f64 {
    1.0
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct PieceSpec {
    pub len: f64,
    pub f: f64,
    #[serde(default = "default_p")]
    pub p: f64,
}

/// A (function, exponent) pair on [0, 1] in file form.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InstanceSpec {
    pub pieces: Vec<PieceSpec>,
}

impl InstanceSpec {
    pub fn from_json(s: &str) -> Result<Self, InstanceError> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data always serializes")
    }

    pub fn to_value(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("plain data always serializes")
    }

    /// Build the step function and exponent profile, renormalizing lengths.
    pub fn to_parts(&self) -> Result<(StepFunction, ExponentProfile), InstanceError> {
        if self.pieces.is_empty() {
            return Err(InstanceError::Empty);
        }
        let fp: Vec<(f64, f64)> = self.pieces.iter().map(|p| (p.len, p.f)).collect();
        let pp: Vec<(f64, f64)> = self.pieces.iter().map(|p| (p.len, p.p)).collect();
        let f = StepFunction::from_pieces(&fp)?;
        let p = ExponentProfile::from_pieces(&pp)?;
        Ok((f, p))
    }

    /// Snapshot of (f, p) on their common refinement.
    pub fn from_parts(f: &StepFunction, p: &ExponentProfile) -> Self {
        let refined = crate::stepfn::common_refinement_all(&[f, p.as_step()]);
        let pieces = (0..refined[0].n_pieces())
            .map(|i| PieceSpec {
                len: refined[0].piece_len(i),
                f: refined[0].values()[i],
                p: refined[1].values()[i],
            })
            .collect();
        Self { pieces }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct HalfLinePieceSpec {
    pub len: f64,
    pub f: f64,
    #[serde(default = "default_p")]
    pub p: f64,
    #[serde(default = "default_w")]
    pub w: f64,
}

/// Weighted pieces on [0, ∞): lengths are free, the tail beyond the last
/// piece is implicitly zero.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HalfLineSpec {
    pub pieces: Vec<HalfLinePieceSpec>,
}

impl HalfLineSpec {
    pub fn from_json(s: &str) -> Result<Self, InstanceError> {
        let spec: Self = serde_json::from_str(s)?;
        for (index, p) in spec.pieces.iter().enumerate() {
            let ok = p.len > 0.0
                && p.len.is_finite()
                && p.f.is_finite()
                && (1.0..=crate::stepfn::P_MAX).contains(&p.p)
                && p.w > 0.0
                && p.w.is_finite();
            if !ok {
                return Err(InstanceError::BadPiece { index });
            }
        }
        Ok(spec)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data always serializes")
    }
}
