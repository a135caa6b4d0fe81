//! Check reports: named margins, witnesses, and the pass/fail convention.
//!
//! Every certified comparison is reduced to a margin that is ≥ 0 on pass.
//! For a one-sided claim lhs ≤ rhs the margin is the normalized headroom
//! plus the allowed slack; for an equality claim it is the tolerance minus
//! the normalized gap. Margins are comparable across checks, so the worst
//! one summarizes a whole run.

use serde::{Deserialize, Serialize};

/// Relative slack granted to every strict inequality: solver tolerance
/// (1e−12) plus fold round-off budget.
pub const SLACK: f64 = 1e-9;

/// Floor for the normalization scale so zero-valued comparisons stay finite.
const SCALE_FLOOR: f64 = 1e-12;

/// Margin for the claim lhs ≤ rhs (with `slack` relative headroom granted).
pub fn one_sided_margin(lhs: f64, rhs: f64, slack: f64) -> f64 {
    let scale = lhs.abs().max(rhs.abs()).max(SCALE_FLOOR);
    (rhs - lhs) / scale + slack
}

/// Margin for the claim lhs = rhs within relative tolerance `tol`.
pub fn equality_margin(lhs: f64, rhs: f64, tol: f64) -> f64 {
    let scale = lhs.abs().max(rhs.abs()).max(SCALE_FLOOR);
    tol - (lhs - rhs).abs() / scale
}

/// One failed comparison with enough context to reproduce it.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Failure {
    /// Trial index; together with the run seed this regenerates the witness.
    pub trial: usize,
    /// The offending instance (or structure) as an inline instance file.
    pub witness: serde_json::Value,
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
}

/// Outcome of one named check over a batch of trials.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CheckReport {
    pub check: String,
    pub trials: usize,
    pub seed: u64,
    /// Minimum margin over all comparisons in all trials.
    pub worst_margin: f64,
    pub failures: Vec<Failure>,
    /// Named observables (worst ratios, chain values, …) for reporting.
    #[serde(default)]
    pub stats: Vec<(String, f64)>,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_sided_margin_signs() {
        assert!(one_sided_margin(1.0, 2.0, 0.0) > 0.0);
        assert!(one_sided_margin(2.0, 1.0, 0.0) < 0.0);
        assert_eq!(one_sided_margin(0.0, 0.0, SLACK), SLACK);
        // Slack rescues a violation inside the budget but not outside it.
        assert!(one_sided_margin(1.0 + 1e-10, 1.0, SLACK) > 0.0);
        assert!(one_sided_margin(1.0 + 1e-8, 1.0, SLACK) < 0.0);
    }

    #[test]
    fn equality_margin_signs() {
        assert!(equality_margin(1.0, 1.0 + 1e-13, 1e-12) > 0.0);
        assert!(equality_margin(1.0, 1.0 + 1e-11, 1e-12) < 0.0);
        assert_eq!(equality_margin(0.0, 0.0, 1e-12), 1e-12);
    }

    #[test]
    fn margins_are_scale_free() {
        let small = one_sided_margin(1e-8, 2e-8, 0.0);
        let large = one_sided_margin(1e8, 2e8, 0.0);
        assert!((small - large).abs() < 1e-15);
    }

    #[test]
    fn report_pass_semantics() {
        let r = CheckReport {
            check: "demo".into(),
            trials: 3,
            seed: 7,
            worst_margin: 0.25,
            failures: vec![],
            stats: vec![],
        };
        assert!(r.passed());
        let json = serde_json::to_string(&r).unwrap();
        let back: CheckReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back.check, "demo");
        assert_eq!(back.worst_margin, 0.25);
    }
}
