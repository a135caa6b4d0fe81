//! The accumulation-driven norm: φ' = (|f|^p/p)·φ^{1−p} with the 0⁺ initial
//! condition, solved exactly for step data.
//!
//! On a piece where f and p are constant the equation separates into
//! d(φ^p)/dt = |f|^p, so φ advances by one ⊞_p step per piece:
//! φ_i = φ_{i−1} ⊞_{p_i} |f_i|·len_i^{1/p_i}. That closed form already
//! realizes the 0⁺ limit — no limiting procedure is needed — and a seeded
//! integrator exists to validate exactly that claim.

use crate::luxemburg::{NormMethod, NormResult};
use crate::modular::WeightProfile;
use crate::scalars::boxplus;
use crate::stepfn::{common_refinement_all, ExponentProfile, StepFunction};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum OdeError {
    #[error("position {t} lies outside [0, 1]")]
    OutOfDomain { t: f64 },
    #[error("initial seed {eps0} must be positive")]
    NonPositiveEps { eps0: f64 },
    #[error("substep count must be at least 1")]
    ZeroSteps,
}

/// The running norm t ↦ φ(t) sampled at grid breakpoints.
#[derive(Clone, Debug, PartialEq)]
pub struct AccumulationCurve {
    breaks: Vec<f64>,
    phi: Vec<f64>,
}

impl AccumulationCurve {
    pub(crate) fn new(breaks: Vec<f64>, phi: Vec<f64>) -> Self {
        debug_assert_eq!(breaks.len(), phi.len());
        Self { breaks, phi }
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breaks
    }

    pub fn phi(&self) -> &[f64] {
        &self.phi
    }

    /// φ at the right end of the domain.
    pub fn terminal(&self) -> f64 {
        *self.phi.last().expect("curves have at least one node")
    }
}

/// One closed-form advance across a piece of length `len`.
fn advance(phi: f64, abs_f: f64, len: f64, p: f64) -> f64 {
    let increment = abs_f * len.powf(1.0 / p);
    boxplus(phi, increment, p).expect("validated inputs never fail")
}

/// Exact accumulation curve on the common refinement of f and p.
pub fn phi_exact_step(f: &StepFunction, p: &ExponentProfile) -> AccumulationCurve {
    let refined = common_refinement_all(&[f, p.as_step()]);
    let (rf, rp) = (&refined[0], &refined[1]);
    let mut phi = Vec::with_capacity(rf.n_pieces() + 1);
    phi.push(0.0);
    let mut cur = 0.0;
    for i in 0..rf.n_pieces() {
        cur = advance(cur, rf.values()[i].abs(), rf.piece_len(i), rp.values()[i]);
        phi.push(cur);
    }
    AccumulationCurve::new(rf.breakpoints().to_vec(), phi)
}

/// φ(1) packaged like the solver results; exact, so the bracket is 0.
pub fn norm_ode(f: &StepFunction, p: &ExponentProfile) -> NormResult {
    let curve = phi_exact_step(f, p);
    NormResult {
        value: curve.terminal(),
        method: NormMethod::Ode,
        bracket_width: 0.0,
        iterations: curve.phi().len() - 1,
    }
}

/// φ(t) for a single position, advancing exactly through the partial piece
/// containing t (not linear interpolation).
pub fn accumulation(f: &StepFunction, p: &ExponentProfile, t: f64) -> Result<f64, OdeError> {
    if !(0.0..=1.0).contains(&t) || t.is_nan() {
        return Err(OdeError::OutOfDomain { t });
    }
    let refined = common_refinement_all(&[f, p.as_step()]);
    let (rf, rp) = (&refined[0], &refined[1]);
    let mut cur = 0.0;
    for i in 0..rf.n_pieces() {
        let (a, b) = (rf.breakpoints()[i], rf.breakpoints()[i + 1]);
        if t >= b {
            cur = advance(cur, rf.values()[i].abs(), b - a, rp.values()[i]);
        } else {
            if t > a {
                cur = advance(cur, rf.values()[i].abs(), t - a, rp.values()[i]);
            }
            break;
        }
    }
    Ok(cur)
}

/// Integration seeded at φ(0) = eps0 > 0 with `steps` equal substeps per
/// piece, every substep using the same closed form. For step inputs the
/// result decreases to the exact curve as eps0 ↓ 0, and the terminal gap is
/// at most eps0 (each ⊞ step is 1-Lipschitz in the accumulator).
pub fn phi_numeric(
    f: &StepFunction,
    p: &ExponentProfile,
    steps: usize,
    eps0: f64,
) -> Result<AccumulationCurve, OdeError> {
    if !(eps0 > 0.0) || !eps0.is_finite() {
        return Err(OdeError::NonPositiveEps { eps0 });
    }
    if steps == 0 {
        return Err(OdeError::ZeroSteps);
    }
    let refined = common_refinement_all(&[f, p.as_step()]);
    let (rf, rp) = (&refined[0], &refined[1]);
    let mut phi = Vec::with_capacity(rf.n_pieces() + 1);
    phi.push(eps0);
    let mut cur = eps0;
    for i in 0..rf.n_pieces() {
        let sub = rf.piece_len(i) / steps as f64;
        for _ in 0..steps {
            cur = advance(cur, rf.values()[i].abs(), sub, rp.values()[i]);
        }
        phi.push(cur);
    }
    Ok(AccumulationCurve::new(rf.breakpoints().to_vec(), phi))
}

/// The localized-scale recursion λ' = w·|f|^p·λ^{1−p}: per piece
/// λ_i = λ_{i−1} ⊞_{p_i} (p_i·w_i)^{1/p_i}·|f_i|·len_i^{1/p_i}.
/// Choosing w = 1/p makes the prefactor 1 and the curve coincides with the
/// accumulation curve (identical recursion up to the 1/p round trip).
pub fn varying_lambda_curve(
    f: &StepFunction,
    p: &ExponentProfile,
    w: &WeightProfile,
) -> AccumulationCurve {
    let refined = common_refinement_all(&[f, p.as_step(), w.as_step()]);
    let (rf, rp, rw) = (&refined[0], &refined[1], &refined[2]);
    let mut lam = Vec::with_capacity(rf.n_pieces() + 1);
    lam.push(0.0);
    let mut cur = 0.0;
    for i in 0..rf.n_pieces() {
        let (pv, wv) = (rp.values()[i], rw.values()[i]);
        let prefactor = (pv * wv).powf(1.0 / pv);
        let increment = prefactor * (rf.values()[i].abs() * rf.piece_len(i).powf(1.0 / pv));
        cur = boxplus(cur, increment, pv).expect("validated inputs never fail");
        lam.push(cur);
    }
    AccumulationCurve::new(rf.breakpoints().to_vec(), lam)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::luxemburg::{norm_nakano, DEFAULT_TOL};
    use crate::scalars::constant_bp;
    use crate::stepfn::{add, PieceSet};
    use proptest::prelude::*;

    /// Direct power-integral oracle for constant exponents.
    fn classical_norm(f: &StepFunction, p0: f64) -> f64 {
        (0..f.n_pieces())
            .map(|i| f.piece_len(i) * f.values()[i].abs().powf(p0))
            .sum::<f64>()
            .powf(1.0 / p0)
    }

    #[test]
    fn constant_exponent_is_classical() {
        let f = StepFunction::from_pieces(&[(0.2, 3.0), (0.5, 0.4), (0.3, 1.1)]).unwrap();
        for p0 in [1.0, 1.5, 2.0, 7.0, 64.0] {
            let p = ExponentProfile::constant(p0).unwrap();
            let got = norm_ode(&f, &p).value;
            let want = classical_norm(&f, p0);
            assert!(
                (got - want).abs() <= 1e-12 * want,
                "p={p0}: {got} vs {want}"
            );
        }
        let c = StepFunction::constant(2.5);
        let p = ExponentProfile::constant(3.0).unwrap();
        assert!((norm_ode(&c, &p).value - 2.5).abs() <= 1e-13);
    }

    #[test]
    fn two_piece_golden_values() {
        let one = StepFunction::constant(1.0);
        let inc = ExponentProfile::from_pieces(&[(0.5, 1.0), (0.5, 2.0)]).unwrap();
        let curve = phi_exact_step(&one, &inc);
        assert!((curve.phi()[1] - 0.5).abs() <= 1e-15);
        // φ(1) = (¼ + ½)^{1/2} = √3/2.
        assert!((curve.terminal() - 0.8660254037844386).abs() <= 1e-15);

        let dec = ExponentProfile::from_pieces(&[(0.5, 2.0), (0.5, 1.0)]).unwrap();
        let curve2 = phi_exact_step(&one, &dec);
        assert!((curve2.phi()[1] - 0.7071067811865476).abs() <= 1e-15);
        // φ(1) = 1/√2 + ½.
        assert!((curve2.terminal() - 1.2071067811865476).abs() <= 1e-15);
    }

    #[test]
    fn norm_result_shape() {
        let one = StepFunction::constant(1.0);
        let p = ExponentProfile::from_pieces(&[(0.5, 1.0), (0.5, 2.0)]).unwrap();
        let r = norm_ode(&one, &p);
        assert_eq!(r.method, NormMethod::Ode);
        assert_eq!(r.bracket_width, 0.0);
        assert_eq!(r.iterations, 2);
    }

    #[test]
    fn curve_matches_prefix_restrictions() {
        let f = StepFunction::from_pieces(&[(0.25, 2.0), (0.25, 0.0), (0.5, 1.3)]).unwrap();
        let p = ExponentProfile::from_pieces(&[(0.5, 1.5), (0.5, 4.0)]).unwrap();
        let curve = phi_exact_step(&f, &p);
        let refined = common_refinement_all(&[&f, p.as_step()]);
        for i in 0..refined[0].n_pieces() {
            let prefix = refined[0].restrict(&PieceSet::new(0..=i)).unwrap();
            let redo = norm_ode(&prefix, &p).value;
            let stored = curve.phi()[i + 1];
            assert!(
                (redo - stored).abs() <= 1e-12 * stored.max(1e-12),
                "piece {i}: {redo} vs {stored}"
            );
        }
        // Non-decreasing from zero.
        assert_eq!(curve.phi()[0], 0.0);
        for w in curve.phi().windows(2) {
            assert!(w[1] >= w[0]);
        }
    }

    #[test]
    fn accumulation_is_sqrt_t_for_unit_square() {
        let one = StepFunction::constant(1.0);
        let p2 = ExponentProfile::constant(2.0).unwrap();
        for t in [0.0, 0.25, 0.5, 0.9, 1.0] {
            let got = accumulation(&one, &p2, t).unwrap();
            assert!((got - t.sqrt()).abs() <= 1e-15, "t={t}");
        }
        let r = norm_ode(&one, &p2);
        assert_eq!(accumulation(&one, &p2, 1.0).unwrap(), r.value);
        assert!(accumulation(&one, &p2, -0.1).is_err());
        assert!(accumulation(&one, &p2, 1.1).is_err());
        assert!(accumulation(&one, &p2, f64::NAN).is_err());
    }

    #[test]
    fn e_bound_and_nakano_sandwich() {
        let one = StepFunction::constant(1.0);
        let p = ExponentProfile::from_pieces(&[(0.5, 1.0), (0.5, 2.0)]).unwrap();
        let ode = norm_ode(&one, &p).value;
        assert!(ode < std::f64::consts::E * one.sup_abs());
        let nak = norm_nakano(&one, &p, DEFAULT_TOL).unwrap().value;
        let b2 = constant_bp(2.0).unwrap();
        assert!(nak <= ode * (1.0 + 1e-9));
        assert!(ode <= b2 * nak * (1.0 + 1e-9));
        // Frozen values: 0.80902 ≤ 0.86603 ≤ 1.30902.
        assert!((nak - 0.8090169943749474).abs() < 1e-10);
        assert!((b2 * nak - 1.3090169943749475).abs() < 1e-9);
    }

    #[test]
    fn numeric_seed_brackets_exact() {
        let cases = [
            StepFunction::from_pieces(&[(0.5, 1.0), (0.5, 1.0)]).unwrap(),
            StepFunction::from_pieces(&[(0.3, 2.0), (0.4, 0.0), (0.3, 0.5)]).unwrap(),
        ];
        let p = ExponentProfile::from_pieces(&[(0.5, 1.0), (0.5, 2.0)]).unwrap();
        for f in cases {
            let exact = phi_exact_step(&f, &p).terminal();
            let mut prev_gap = f64::INFINITY;
            for eps0 in [1e-4, 1e-8, 1e-12] {
                let seeded = phi_numeric(&f, &p, 4, eps0).unwrap().terminal();
                let gap = seeded - exact;
                assert!(gap >= -1e-15, "seeded below exact: {gap}");
                assert!(gap <= eps0, "gap {gap} exceeds seed {eps0}");
                assert!(gap <= prev_gap + 1e-15, "not monotone in eps0");
                prev_gap = gap;
            }
        }
    }

    #[test]
    fn numeric_examples() {
        let one = StepFunction::constant(1.0);
        let p2 = ExponentProfile::constant(2.0).unwrap();
        let v = phi_numeric(&one, &p2, 1, 1e-8).unwrap().terminal();
        assert!((v - (1.0f64 + 1e-16).sqrt()).abs() <= 1e-15);

        let zero = StepFunction::constant(0.0);
        let curve = phi_numeric(&zero, &p2, 3, 1e-4).unwrap();
        for &v in curve.phi() {
            assert_eq!(v, 1e-4);
        }

        assert!(phi_numeric(&one, &p2, 0, 1e-8).is_err());
        assert!(phi_numeric(&one, &p2, 4, 0.0).is_err());
        assert!(phi_numeric(&one, &p2, 4, -1e-9).is_err());
    }

    #[test]
    fn numeric_insensitive_to_substep_count_on_step_input() {
        let f = StepFunction::from_pieces(&[(0.4, 1.5), (0.6, 0.7)]).unwrap();
        let p = ExponentProfile::from_pieces(&[(0.5, 3.0), (0.5, 1.2)]).unwrap();
        let a = phi_numeric(&f, &p, 1, 1e-10).unwrap().terminal();
        let b = phi_numeric(&f, &p, 64, 1e-10).unwrap().terminal();
        assert!((a - b).abs() <= 1e-13 * a);
    }

    #[test]
    fn varying_lambda_hand_case() {
        // w ≡ 1, f ≡ 1, p ≡ 2: λ(t)² = 2t.
        let one = StepFunction::constant(1.0);
        let p2 = ExponentProfile::constant(2.0).unwrap();
        let w1 = WeightProfile::constant(1.0).unwrap();
        let curve = varying_lambda_curve(&one, &p2, &w1);
        let t_end = 2f64.sqrt();
        assert!((curve.terminal() - t_end).abs() <= 1e-15);
    }

    #[test]
    fn varying_lambda_coincides_with_phi_under_reciprocal_weight() {
        let cases = [
            (
                StepFunction::constant(1.0),
                ExponentProfile::constant(3.0).unwrap(),
            ),
            (
                StepFunction::from_pieces(&[(0.3, 2.0), (0.7, 0.6)]).unwrap(),
                ExponentProfile::from_pieces(&[(0.5, 1.0), (0.25, 7.0), (0.25, 2.2)]).unwrap(),
            ),
        ];
        for (f, p) in cases {
            let w = WeightProfile::reciprocal_exponent(&p);
            let lam = varying_lambda_curve(&f, &p, &w);
            let phi = phi_exact_step(&f, &p);
            assert_eq!(lam.breakpoints(), phi.breakpoints());
            for (l, g) in lam.phi().iter().zip(phi.phi()) {
                assert!(
                    (l - g).abs() <= 1e-13 * g.max(1e-300),
                    "curves diverge: {l} vs {g}"
                );
            }
        }
    }

    proptest! {
        #[test]
        fn homogeneity(
            v1 in 0.0..4.0f64, v2 in 0.0..4.0f64,
            q1 in 1.0..32.0f64, q2 in 1.0..32.0f64,
            cut in 0.1..0.9f64, c in 0.01..50.0f64,
        ) {
            let f = StepFunction::new(vec![0.0, cut, 1.0], vec![v1, v2]).unwrap();
            let p = ExponentProfile::new(
                StepFunction::new(vec![0.0, cut, 1.0], vec![q1, q2]).unwrap()).unwrap();
            let base = norm_ode(&f, &p).value;
            let scaled = norm_ode(&f.scale(c).unwrap(), &p).value;
            prop_assert!((scaled - c * base).abs() <= 1e-12 * (c * base).max(1e-300));
        }

        #[test]
        fn triangle_inequality(
            v1 in 0.0..3.0f64, v2 in 0.0..3.0f64,
            u1 in 0.0..3.0f64, u2 in 0.0..3.0f64,
            q1 in 1.0..16.0f64, q2 in 1.0..16.0f64,
        ) {
            let f = StepFunction::from_pieces(&[(0.5, v1), (0.5, v2)]).unwrap();
            let g = StepFunction::from_pieces(&[(0.5, u1), (0.5, u2)]).unwrap();
            let p = ExponentProfile::from_pieces(&[(0.5, q1), (0.5, q2)]).unwrap();
            let s = add(&f, &g).unwrap();
            let nf = norm_ode(&f, &p).value;
            let ng = norm_ode(&g, &p).value;
            let ns = norm_ode(&s, &p).value;
            prop_assert!(ns <= nf + ng + 1e-9);
        }

        #[test]
        fn e_bound_strict(
            v1 in 0.01..5.0f64, v2 in 0.01..5.0f64,
            q1 in 1.0..64.0f64, q2 in 1.0..64.0f64,
        ) {
            let f = StepFunction::from_pieces(&[(0.5, v1), (0.5, v2)]).unwrap();
            let p = ExponentProfile::from_pieces(&[(0.5, q1), (0.5, q2)]).unwrap();
            prop_assert!(norm_ode(&f, &p).value < std::f64::consts::E * f.sup_abs());
        }
    }
}
