//! Luxemburg norms: the infimal λ with modular(f/λ) ≤ 1, found by bracketed
//! bisection on the λ axis.
//!
//! The modular is strictly decreasing and continuous in λ (exponents are
//! capped), so the infimum is the root of modular(λ) = 1 and bisection is
//! exact up to the bracket width. Newton is deliberately avoided: for large
//! exponents the λ-derivative spans hundreds of orders of magnitude.

use crate::modular::{piece_term, ModularError, WeightProfile};
use crate::stepfn::{common_refinement_all, ExponentProfile, StepFunction};
use serde::Serialize;
use thiserror::Error;

/// Default absolute λ tolerance.
pub const DEFAULT_TOL: f64 = 1e-12;
/// Tolerances below this are meaningless in doubles near λ ~ 1.
const MIN_TOL: f64 = 1e-14;
/// Cap on bracket growth/shrink steps before giving up.
const MAX_BRACKET_STEPS: usize = 60;
/// Cap on bisection iterations (bracket halving plus modular tightening).
const MAX_BISECT: usize = 400;

#[derive(Debug, Error, PartialEq)]
pub enum LuxError {
    #[error("tolerance {tol} is below the smallest supported value 1e-14")]
    ToleranceTooSmall { tol: f64 },
    #[error("modular overflowed for every bracket candidate")]
    Overflow,
    #[error("modular never crossed 1 within the bracket search range")]
    BracketExhausted,
    #[error(transparent)]
    Modular(#[from] ModularError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum NormMethod {
    Nakano,
    Mo,
    Weighted,
    Ode,
}

/// A computed norm value with the solver's final uncertainty.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct NormResult {
    pub value: f64,
    pub method: NormMethod,
    /// Final λ-bracket width; 0 for exact results.
    pub bracket_width: f64,
    pub iterations: usize,
}

/// One integrand piece len·w·(|f|/λ)^p, grid-free.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Term {
    pub len: f64,
    pub w: f64,
    pub abs_f: f64,
    pub p: f64,
}

/// Σ of piece terms at a given λ; same kernel and summation order as the
/// modular functions, so values agree bitwise on matching grids.
pub(crate) fn modular_of_terms(terms: &[Term], lambda: f64) -> Result<f64, ModularError> {
    let mut sum = 0.0;
    for t in terms {
        sum += piece_term(t.len, t.w, t.abs_f, t.p, lambda)?;
    }
    if sum.is_finite() {
        Ok(sum)
    } else {
        Err(ModularError::Overflow)
    }
}

/// Root of Σ terms(λ) = 1. Bracket starts at [m/2e, 2em] around the sup m
/// (the norm always lies below e·sup for the weightings in scope), grows or
/// shrinks geometrically until it straddles 1, then bisects. Overflow counts
/// as "modular above 1". Returns the feasible endpoint hi, so the modular at
/// the result is ≤ 1 and — by the second stopping condition — ≥ 1 − 10·tol.
pub(crate) fn solve_terms(
    terms: &[Term],
    method: NormMethod,
    tol: f64,
) -> Result<NormResult, LuxError> {
    if !(tol >= MIN_TOL) || !tol.is_finite() {
        return Err(LuxError::ToleranceTooSmall { tol });
    }
    let m = terms
        .iter()
        .filter(|t| t.len > 0.0)
        .map(|t| t.abs_f)
        .fold(0.0f64, f64::max);
    if m == 0.0 {
        return Ok(NormResult {
            value: 0.0,
            method,
            bracket_width: 0.0,
            iterations: 0,
        });
    }
    // None = overflow, i.e. effectively above 1.
    let eval = |lambda: f64| -> Option<f64> { modular_of_terms(terms, lambda).ok() };

    let e = std::f64::consts::E;
    let mut lo = m / (2.0 * e);
    let mut hi = 2.0 * e * m;
    let mut iterations = 0usize;

    let mut mod_hi = eval(hi);
    let mut grow = 0usize;
    while mod_hi.map_or(true, |v| v > 1.0) {
        if grow == MAX_BRACKET_STEPS {
            return Err(if mod_hi.is_none() {
                LuxError::Overflow
            } else {
                LuxError::BracketExhausted
            });
        }
        lo = hi;
        hi *= 2.0;
        mod_hi = eval(hi);
        grow += 1;
        iterations += 1;
    }
    let mut mod_hi = mod_hi.expect("loop exits only on a finite value");

    let mut shrink = 0usize;
    while eval(lo).map_or(false, |v| v < 1.0) {
        if shrink == MAX_BRACKET_STEPS {
            return Err(LuxError::BracketExhausted);
        }
        hi = lo;
        mod_hi = eval(hi).expect("was finite and < 1");
        lo /= 2.0;
        shrink += 1;
        iterations += 1;
    }

    // Invariant: modular(lo) ≥ 1 (or overflows) and modular(hi) ≤ 1.
    while iterations < MAX_BISECT {
        if hi - lo <= tol && mod_hi >= 1.0 - 10.0 * tol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break; // bracket has collapsed to adjacent doubles
        }
        iterations += 1;
        match eval(mid) {
            Some(v) if v <= 1.0 => {
                hi = mid;
                mod_hi = v;
            }
            _ => lo = mid,
        }
    }

    Ok(NormResult {
        value: hi,
        method,
        bracket_width: hi - lo,
        iterations,
    })
}

fn nakano_terms(f: &StepFunction, p: &ExponentProfile) -> Vec<Term> {
    let refined = common_refinement_all(&[f, p.as_step()]);
    (0..refined[0].n_pieces())
        .map(|i| Term {
            len: refined[0].piece_len(i),
            w: 1.0 / refined[1].values()[i],
            abs_f: refined[0].values()[i].abs(),
            p: refined[1].values()[i],
        })
        .collect()
}

/// Luxemburg norm for the 1/p-weighted modular.
pub fn norm_nakano(
    f: &StepFunction,
    p: &ExponentProfile,
    tol: f64,
) -> Result<NormResult, LuxError> {
    solve_terms(&nakano_terms(f, p), NormMethod::Nakano, tol)
}

/// Luxemburg norm for the unit-weight modular.
pub fn norm_mo(f: &StepFunction, p: &ExponentProfile, tol: f64) -> Result<NormResult, LuxError> {
    let refined = common_refinement_all(&[f, p.as_step()]);
    let terms: Vec<Term> = (0..refined[0].n_pieces())
        .map(|i| Term {
            len: refined[0].piece_len(i),
            w: 1.0,
            abs_f: refined[0].values()[i].abs(),
            p: refined[1].values()[i],
        })
        .collect();
    solve_terms(&terms, NormMethod::Mo, tol)
}

/// Luxemburg norm for a general positive step weight.
pub fn norm_weighted(
    f: &StepFunction,
    p: &ExponentProfile,
    w: &WeightProfile,
    tol: f64,
) -> Result<NormResult, LuxError> {
    let refined = common_refinement_all(&[f, p.as_step(), w.as_step()]);
    let terms: Vec<Term> = (0..refined[0].n_pieces())
        .map(|i| Term {
            len: refined[0].piece_len(i),
            w: refined[2].values()[i],
            abs_f: refined[0].values()[i].abs(),
            p: refined[1].values()[i],
        })
        .collect();
    solve_terms(&terms, NormMethod::Weighted, tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modular::{modular_mo, modular_nakano};
    use crate::stepfn::add;
    use proptest::prelude::*;

    /// Oracle: solve Σ len·w·(f/λ)^p = 1 by naive interval halving with its
    /// own direct power-sum evaluation.
    fn oracle_root(pieces: &[(f64, f64, f64, f64)]) -> f64 {
        let modular = |lam: f64| -> f64 {
            pieces
                .iter()
                .map(|&(len, w, v, p)| len * w * (v / lam).powf(p))
                .sum()
        };
        let (mut lo, mut hi) = (1e-9, 1e9);
        assert!(modular(lo) > 1.0 && modular(hi) < 1.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if modular(mid) > 1.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn nakano_constant_instance() {
        let f = StepFunction::constant(1.0);
        let p = ExponentProfile::constant(2.0).unwrap();
        let r = norm_nakano(&f, &p, DEFAULT_TOL).unwrap();
        // (1/2)λ^{−2} = 1 ⇒ λ = 2^{−1/2}.
        assert!((r.value - 0.7071067811865476).abs() <= 1e-11);
        assert!(r.bracket_width <= DEFAULT_TOL);
        let oracle = oracle_root(&[(1.0, 0.5, 1.0, 2.0)]);
        assert!((r.value - oracle).abs() <= 1e-9);
    }

    #[test]
    fn nakano_two_piece_instance() {
        let f = StepFunction::constant(1.0);
        let p = ExponentProfile::from_pieces(&[(0.5, 1.0), (0.5, 2.0)]).unwrap();
        let r = norm_nakano(&f, &p, DEFAULT_TOL).unwrap();
        // 1/(2λ) + 1/(4λ²) = 1 ⇒ 4λ² − 2λ − 1 = 0 ⇒ λ = (1+√5)/4.
        assert!((r.value - 0.8090169943749474).abs() <= 1e-11);
        let oracle = oracle_root(&[(0.5, 1.0, 1.0, 1.0), (0.5, 0.5, 1.0, 2.0)]);
        assert!((r.value - oracle).abs() <= 1e-9);
    }

    #[test]
    fn zero_function_is_exactly_zero() {
        let f = StepFunction::constant(0.0);
        let p = ExponentProfile::constant(3.0).unwrap();
        let r = norm_nakano(&f, &p, DEFAULT_TOL).unwrap();
        assert_eq!(r.value, 0.0);
        assert_eq!(r.iterations, 0);
        assert_eq!(r.bracket_width, 0.0);
        // Positive value trapped on a zero-length piece is still norm zero.
        let g = StepFunction::new(vec![0.0, 0.0, 1.0], vec![5.0, 0.0]).unwrap();
        assert_eq!(norm_mo(&g, &p, DEFAULT_TOL).unwrap().value, 0.0);
    }

    #[test]
    fn mo_examples() {
        let one = StepFunction::constant(1.0);
        let p = ExponentProfile::from_pieces(&[(0.3, 1.0), (0.7, 4.5)]).unwrap();
        let r = norm_mo(&one, &p, DEFAULT_TOL).unwrap();
        assert!((r.value - 1.0).abs() <= 1e-11);

        let c = StepFunction::constant(2.7);
        let p3 = ExponentProfile::constant(3.0).unwrap();
        let rc = norm_mo(&c, &p3, DEFAULT_TOL).unwrap();
        assert!((rc.value - 2.7).abs() <= 1e-10);
    }

    #[test]
    fn weighted_reproduces_other_methods_bitwise() {
        let f = StepFunction::from_pieces(&[(0.4, 2.0), (0.6, 0.3)]).unwrap();
        let p = ExponentProfile::from_pieces(&[(0.5, 1.2), (0.5, 6.0)]).unwrap();
        let w1 = WeightProfile::constant(1.0).unwrap();
        let wr = WeightProfile::reciprocal_exponent(&p);
        let mo = norm_mo(&f, &p, DEFAULT_TOL).unwrap();
        let wmo = norm_weighted(&f, &p, &w1, DEFAULT_TOL).unwrap();
        assert_eq!(mo.value, wmo.value);
        assert_eq!(mo.iterations, wmo.iterations);
        let nak = norm_nakano(&f, &p, DEFAULT_TOL).unwrap();
        let wnak = norm_weighted(&f, &p, &wr, DEFAULT_TOL).unwrap();
        assert_eq!(nak.value, wnak.value);
        assert_eq!(nak.iterations, wnak.iterations);
    }

    #[test]
    fn weighted_constant_four() {
        let one = StepFunction::constant(1.0);
        let p2 = ExponentProfile::constant(2.0).unwrap();
        let w4 = WeightProfile::constant(4.0).unwrap();
        let r = norm_weighted(&one, &p2, &w4, DEFAULT_TOL).unwrap();
        // 4λ^{−2} = 1 ⇒ λ = 2.
        assert!((r.value - 2.0).abs() <= 1e-11);
        let oracle = oracle_root(&[(1.0, 4.0, 1.0, 2.0)]);
        assert!((r.value - oracle).abs() <= 1e-9);
    }

    #[test]
    fn unit_modular_consistency() {
        let cases = [
            (vec![(0.5, 1.0), (0.5, 1.0)], vec![(0.5, 1.0), (0.5, 2.0)]),
            (vec![(0.2, 3.0), (0.8, 0.7)], vec![(0.6, 1.3), (0.4, 5.0)]),
            (vec![(0.1, 0.01), (0.9, 0.02)], vec![(0.5, 2.0), (0.5, 9.0)]),
            (vec![(0.25, 10.0), (0.75, 4.0)], vec![(0.3, 1.0), (0.7, 64.0)]),
        ];
        for (fspec, pspec) in cases {
            let f = StepFunction::from_pieces(&fspec).unwrap();
            let p = ExponentProfile::from_pieces(&pspec).unwrap();
            let r = norm_nakano(&f, &p, DEFAULT_TOL).unwrap();
            let m = modular_nakano(&f, &p, r.value).unwrap();
            assert!(
                m <= 1.0 + 10.0 * DEFAULT_TOL && m >= 1.0 - 10.0 * DEFAULT_TOL,
                "modular {m} out of band for {fspec:?} {pspec:?}"
            );
            let rm = norm_mo(&f, &p, DEFAULT_TOL).unwrap();
            let mm = modular_mo(&f, &p, rm.value).unwrap();
            assert!(mm <= 1.0 + 10.0 * DEFAULT_TOL && mm >= 1.0 - 10.0 * DEFAULT_TOL);
        }
    }

    #[test]
    fn norm_below_modular_power_bound() {
        // Whenever the modular at λ=1 is ≤ 1, the norm is ≤ modular^{1/p̄}.
        let cases = [
            (vec![(0.5, 0.5), (0.5, 0.8)], vec![(0.5, 2.0), (0.5, 3.0)]),
            (vec![(0.9, 0.95), (0.1, 0.2)], vec![(0.4, 1.5), (0.6, 8.0)]),
        ];
        for (fspec, pspec) in cases {
            let f = StepFunction::from_pieces(&fspec).unwrap();
            let p = ExponentProfile::from_pieces(&pspec).unwrap();
            let m1 = modular_nakano(&f, &p, 1.0).unwrap();
            assert!(m1 <= 1.0, "precondition");
            let r = norm_nakano(&f, &p, DEFAULT_TOL).unwrap();
            let bound = m1.powf(1.0 / p.p_bar());
            assert!(r.value <= bound + 1e-9, "{} > {}", r.value, bound);
        }
    }

    #[test]
    fn tolerance_validation() {
        let f = StepFunction::constant(1.0);
        let p = ExponentProfile::constant(2.0).unwrap();
        assert!(matches!(
            norm_nakano(&f, &p, 1e-15),
            Err(LuxError::ToleranceTooSmall { .. })
        ));
        assert!(norm_nakano(&f, &p, 0.0).is_err());
        assert!(norm_nakano(&f, &p, -1.0).is_err());
        assert!(norm_nakano(&f, &p, f64::NAN).is_err());
        assert!(norm_nakano(&f, &p, 1e-14).is_ok());
    }

    #[test]
    fn large_weight_needs_bracket_growth() {
        let one = StepFunction::constant(1.0);
        let p1 = ExponentProfile::constant(1.0).unwrap();
        let w = WeightProfile::constant(1000.0).unwrap();
        // 1000/λ = 1 ⇒ λ = 1000, far above the initial bracket top 2e.
        let r = norm_weighted(&one, &p1, &w, DEFAULT_TOL).unwrap();
        assert!((r.value - 1000.0).abs() <= 1e-8);
    }

    #[test]
    fn tiny_support_needs_bracket_shrink() {
        // f = 1 on a 1e−9 window: norm ≈ (len/p)^{1/p} = (5e−10)^{1/2}.
        let f = StepFunction::new(vec![0.0, 1e-9, 1.0], vec![1.0, 0.0]).unwrap();
        let p = ExponentProfile::constant(2.0).unwrap();
        let r = norm_nakano(&f, &p, DEFAULT_TOL).unwrap();
        assert!((r.value - (5e-10f64).sqrt()).abs() <= 1e-12);
    }

    #[test]
    fn extreme_exponent_profile_converges() {
        let f = StepFunction::from_pieces(&[(0.5, 3.0), (0.5, 0.5)]).unwrap();
        let p = ExponentProfile::from_pieces(&[(0.5, 1.0), (0.5, 1e4)]).unwrap();
        let r = norm_nakano(&f, &p, DEFAULT_TOL).unwrap();
        let m = modular_nakano(&f, &p, r.value).unwrap();
        assert!(m <= 1.0 + 1e-11 && m >= 1.0 - 1e-11, "modular {m}");
    }

    proptest! {
        #[test]
        fn homogeneity(
            v1 in 0.01..4.0f64, v2 in 0.01..4.0f64,
            q1 in 1.0..32.0f64, q2 in 1.0..32.0f64,
            cut in 0.1..0.9f64, c in 0.01..50.0f64,
        ) {
            let f = StepFunction::new(vec![0.0, cut, 1.0], vec![v1, v2]).unwrap();
            let p = ExponentProfile::new(
                StepFunction::new(vec![0.0, cut, 1.0], vec![q1, q2]).unwrap()).unwrap();
            let base = norm_nakano(&f, &p, DEFAULT_TOL).unwrap().value;
            let scaled = norm_nakano(&f.scale(c).unwrap(), &p, DEFAULT_TOL).unwrap().value;
            prop_assert!((scaled - c * base).abs() <= 1e-10 * (c * base).max(1e-12));
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
            let nf = norm_mo(&f, &p, DEFAULT_TOL).unwrap().value;
            let ng = norm_mo(&g, &p, DEFAULT_TOL).unwrap().value;
            let ns = norm_mo(&s, &p, DEFAULT_TOL).unwrap().value;
            prop_assert!(ns <= nf + ng + 1e-9);
        }
    }
}
