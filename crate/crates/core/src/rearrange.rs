//! Measure-preserving rearrangements at piece granularity.
//!
//! Because the exponent profile is piecewise constant, permuting pieces of a
//! common refinement realizes every measure-preserving transform the
//! rearrangement theory needs: sorting by exponent gives the monotone
//! rearrangements, and random permutations probe the sandwich
//! inc-sorted ≤ permuted ≤ dec-sorted together with the b_p̄ two-sided factor.

use crate::generate::{shuffle, sub_rng};
use crate::instance::InstanceSpec;
use crate::luxemburg::{norm_nakano, DEFAULT_TOL};
use crate::modular::piece_term;
use crate::ode_norm::{norm_ode, phi_exact_step, AccumulationCurve};
use crate::report::{equality_margin, one_sided_margin, CheckReport, Failure, SLACK};
use crate::scalars::{boxplus, constant_bp};
use crate::stepfn::{common_refinement_all, ExponentProfile, StepFunction};
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum RearrangeError {
    #[error("indices are not a permutation of 0..{n}")]
    InvalidPermutation { n: usize },
    #[error("exponent profile is neither non-decreasing nor non-increasing")]
    NotMonotone,
    #[error("piece {index} carries f = 0; the time change needs f ≠ 0 a.e.")]
    ZeroPiece { index: usize },
}

/// A bijection on the pieces of a common refinement.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PiecePermutation {
    perm: Vec<usize>,
}

impl PiecePermutation {
    pub fn identity(n: usize) -> Self {
        Self {
            perm: (0..n).collect(),
        }
    }

    /// `perm[j]` = source index of the piece placed at slot j.
    pub fn new(perm: Vec<usize>) -> Result<Self, RearrangeError> {
        let n = perm.len();
        let mut seen = vec![false; n];
        for &i in &perm {
            if i >= n || seen[i] {
                return Err(RearrangeError::InvalidPermutation { n });
            }
            seen[i] = true;
        }
        Ok(Self { perm })
    }

    pub fn random(rng: &mut impl rand_chacha::rand_core::RngCore, n: usize) -> Self {
        let mut perm: Vec<usize> = (0..n).collect();
        shuffle(rng, &mut perm);
        Self { perm }
    }

    pub fn indices(&self) -> &[usize] {
        &self.perm
    }

    pub fn len(&self) -> usize {
        self.perm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.perm.is_empty()
    }

    pub fn is_identity(&self) -> bool {
        self.perm.iter().enumerate().all(|(i, &j)| i == j)
    }
}

fn rebuild(
    lens: &[f64],
    fv: &[f64],
    pv: &[f64],
    order: &[usize],
) -> (StepFunction, ExponentProfile) {
    let n = order.len();
    let mut breaks = Vec::with_capacity(n + 1);
    breaks.push(0.0);
    let mut acc = 0.0;
    for &i in order {
        acc += lens[i];
        breaks.push(acc);
    }
    // Prefix sums land within ulps of 1; the domain invariant wants 1 exact.
    *breaks.last_mut().unwrap() = 1.0;
    let fvals: Vec<f64> = order.iter().map(|&i| fv[i]).collect();
    let pvals: Vec<f64> = order.iter().map(|&i| pv[i]).collect();
    let f = StepFunction::new(breaks.clone(), fvals).expect("permuted grid stays valid");
    let p = ExponentProfile::new(StepFunction::new(breaks, pvals).expect("permuted grid"))
        .expect("permuted exponents unchanged");
    (f, p)
}

/// Simultaneously reorder the pieces of f and p. Values move bit-for-bit;
/// breakpoints are rebuilt by prefix sums (a few ulps of length rounding).
pub fn permute(
    f: &StepFunction,
    p: &ExponentProfile,
    sigma: &PiecePermutation,
) -> Result<(StepFunction, ExponentProfile), RearrangeError> {
    let refined = common_refinement_all(&[f, p.as_step()]);
    let n = refined[0].n_pieces();
    if sigma.len() != n {
        return Err(RearrangeError::InvalidPermutation { n });
    }
    if sigma.is_identity() {
        let prof = ExponentProfile::new(refined[1].clone()).expect("refined profile valid");
        return Ok((refined[0].clone(), prof));
    }
    let lens = refined[0].lens();
    Ok(rebuild(
        &lens,
        refined[0].values(),
        refined[1].values(),
        &sigma.perm,
    ))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SortDirection {
    Increasing,
    Decreasing,
}

/// Monotone rearrangement: pieces stably sorted by exponent value.
pub fn sort_by_exponent(
    f: &StepFunction,
    p: &ExponentProfile,
    direction: SortDirection,
) -> (StepFunction, ExponentProfile) {
    let refined = common_refinement_all(&[f, p.as_step()]);
    let pv = refined[1].values();
    let mut order: Vec<usize> = (0..pv.len()).collect();
    match direction {
        SortDirection::Increasing => order.sort_by(|&i, &j| pv[i].total_cmp(&pv[j])),
        SortDirection::Decreasing => order.sort_by(|&i, &j| pv[j].total_cmp(&pv[i])),
    }
    let sigma = PiecePermutation { perm: order };
    permute(f, p, &sigma).expect("sort order is a permutation by construction")
}

/// Draws `trials` random piece permutations and checks, per permutation:
/// the monotone sandwich (inc-sorted ≤ permuted ≤ dec-sorted), the two-sided
/// b_p̄ factor against the original, and invariance of the modular-based norm.
/// Failures are data; the report always comes back.
pub fn certify_rearrangement(
    f: &StepFunction,
    p: &ExponentProfile,
    trials: usize,
    seed: u64,
) -> CheckReport {
    let base_ode = norm_ode(f, p).value;
    let base_nak = norm_nakano(f, p, DEFAULT_TOL)
        .expect("in-range instances solve")
        .value;
    let (fi, pi) = sort_by_exponent(f, p, SortDirection::Increasing);
    let (fd, pd) = sort_by_exponent(f, p, SortDirection::Decreasing);
    let inc = norm_ode(&fi, &pi).value;
    let dec = norm_ode(&fd, &pd).value;
    let b = constant_bp(p.p_bar()).expect("profile exponents are valid");
    let n = common_refinement_all(&[f, p.as_step()])[0].n_pieces();

    let evals: Vec<(f64, f64, f64, Option<(f64, f64, f64)>)> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = sub_rng(seed, t as u64);
            let sigma = PiecePermutation::random(&mut rng, n);
            let (fs, ps) = permute(f, p, &sigma).expect("random sigma is valid");
            let v = norm_ode(&fs, &ps).value;
            let nak = norm_nakano(&fs, &ps, DEFAULT_TOL)
                .expect("permuted instance solves")
                .value;
            let comparisons = [
                (inc, v),
                (v, dec),
                (v, b * base_ode),
                (base_ode, b * v),
            ];
            let mut worst = f64::INFINITY;
            let mut pair = (0.0, 0.0);
            for (l, r) in comparisons {
                let m = one_sided_margin(l, r, SLACK);
                if m < worst {
                    worst = m;
                    pair = (l, r);
                }
            }
            let inv = equality_margin(nak, base_nak, 1e-12);
            if inv < worst {
                worst = inv;
                pair = (nak, base_nak);
            }
            let witness = if worst < 0.0 {
                Some((pair.0, pair.1, v))
            } else {
                None
            };
            (worst, v, nak, witness.map(|w| (w.0, w.1, w.2)))
        })
        .collect();

    let mut worst_margin = f64::INFINITY;
    let mut failures = Vec::new();
    let mut hi_ratio = f64::NEG_INFINITY;
    let mut lo_ratio = f64::INFINITY;
    for (t, (margin, v, _nak, fail)) in evals.iter().enumerate() {
        worst_margin = worst_margin.min(*margin);
        if base_ode > 0.0 {
            hi_ratio = hi_ratio.max(v / base_ode);
            lo_ratio = lo_ratio.min(v / base_ode);
        }
        if let Some((lhs, rhs, _)) = fail {
            let mut rng = sub_rng(seed, t as u64);
            let sigma = PiecePermutation::random(&mut rng, n);
            let (fs, ps) = permute(f, p, &sigma).expect("replayed sigma valid");
            failures.push(Failure {
                trial: t,
                witness: InstanceSpec::from_parts(&fs, &ps).to_value(),
                lhs: *lhs,
                rhs: *rhs,
                margin: *margin,
            });
        }
    }
    if trials == 0 {
        worst_margin = f64::INFINITY;
    }
    let mut stats = vec![
        ("inc_sorted_norm".to_string(), inc),
        ("dec_sorted_norm".to_string(), dec),
        ("factor_bound".to_string(), b),
    ];
    if base_ode > 0.0 && trials > 0 {
        stats.push(("max_ratio".to_string(), hi_ratio));
        stats.push(("min_ratio".to_string(), lo_ratio));
    }
    CheckReport {
        check: "rearrangement".to_string(),
        trials,
        seed,
        worst_margin,
        failures,
        stats,
    }
}

/// Norm of the constant-one function under a monotone exponent profile:
/// below 1 for increasing non-constant p, above 1 for decreasing, exactly 1
/// for constant.
pub fn constant_one_monotone_check(p: &ExponentProfile) -> Result<CheckReport, RearrangeError> {
    let canon = p.normalize();
    let v = canon.values();
    let inc = v.windows(2).all(|w| w[0] <= w[1]);
    let dec = v.windows(2).all(|w| w[0] >= w[1]);
    if !inc && !dec {
        return Err(RearrangeError::NotMonotone);
    }
    let norm = norm_ode(&StepFunction::constant(1.0), p).value;
    let constant = v.len() == 1;
    let (lhs, rhs, margin) = if constant {
        (norm, 1.0, equality_margin(norm, 1.0, 1e-12))
    } else if inc {
        (norm, 1.0 - 1e-12, one_sided_margin(norm, 1.0 - 1e-12, 0.0))
    } else {
        (1.0 + 1e-12, norm, one_sided_margin(1.0 + 1e-12, norm, 0.0))
    };
    let failures = if margin < 0.0 {
        vec![Failure {
            trial: 0,
            witness: InstanceSpec::from_parts(&StepFunction::constant(1.0), p).to_value(),
            lhs,
            rhs,
            margin,
        }]
    } else {
        Vec::new()
    };
    Ok(CheckReport {
        check: "constant-one-monotone".to_string(),
        trials: 1,
        seed: 0,
        worst_margin: margin,
        failures,
        stats: vec![("norm_of_one".to_string(), norm)],
    })
}

/// The time change T(t) = ∫₀ᵗ |f|^p/p ds and everything it transports:
/// total mass α = T(1), the exponent profile carried to the image grid
/// (rescaled onto the unit interval for storage), and the accumulation curve
/// in image time τ ∈ [0, α], where φ̂^{p̂} grows affinely with slope p̂.
#[derive(Clone, Debug)]
pub struct AuxTransform {
    pub alpha: f64,
    pub p_hat: ExponentProfile,
    pub curve_hat: AccumulationCurve,
}

pub fn aux_transform(f: &StepFunction, p: &ExponentProfile) -> Result<AuxTransform, RearrangeError> {
    let refined = common_refinement_all(&[f, p.as_step()]);
    let (rf, rp) = (&refined[0], &refined[1]);
    for i in 0..rf.n_pieces() {
        if rf.piece_len(i) > 0.0 && rf.values()[i] == 0.0 {
            return Err(RearrangeError::ZeroPiece { index: i });
        }
    }
    let mut tau = Vec::with_capacity(rf.n_pieces() + 1);
    tau.push(0.0);
    let mut acc = 0.0;
    for i in 0..rf.n_pieces() {
        let pv = rp.values()[i];
        acc += piece_term(rf.piece_len(i), 1.0 / pv, rf.values()[i].abs(), pv, 1.0)
            .expect("finite pieces: the time change is finite");
        tau.push(acc);
    }
    let alpha = acc;
    let phi = phi_exact_step(f, p);
    let curve_hat = AccumulationCurve::new(tau.clone(), phi.phi().to_vec());
    let mut unit_breaks: Vec<f64> = tau.iter().map(|&t| t / alpha).collect();
    *unit_breaks.last_mut().unwrap() = 1.0;
    let p_hat = ExponentProfile::new(
        StepFunction::new(unit_breaks, rp.values().to_vec()).expect("rescaled grid valid"),
    )
    .expect("exponent values unchanged");
    Ok(AuxTransform {
        alpha,
        p_hat,
        curve_hat,
    })
}

/// The two-piece large-p example: a unit function over an exponent-p head of
/// width 1/ln p and an exponent-1 tail. Head-first (decreasing profile) the
/// norm tends to 2; tail-first (increasing) it tends to 1. Evaluated by the
/// raw ⊞ recursion so p may exceed the profile cap.
pub fn limit_example(p: f64) -> (f64, f64) {
    let l = 1.0 / p.ln();
    let head = l.powf(1.0 / p);
    let tail = 1.0 - l;
    let decreasing = boxplus(head, tail, 1.0).expect("valid inputs");
    let increasing = boxplus(tail, head, p).expect("valid inputs");
    (decreasing, increasing)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_piece_instance() -> (StepFunction, ExponentProfile) {
        (
            StepFunction::constant(1.0),
            ExponentProfile::from_pieces(&[(0.5, 1.0), (0.5, 2.0)]).unwrap(),
        )
    }

    #[test]
    fn identity_permutation_is_noop() {
        let (f, p) = two_piece_instance();
        let sigma = PiecePermutation::identity(2);
        let (f2, p2) = permute(&f, &p, &sigma).unwrap();
        // Output lives on the common refinement; values and grid are exact.
        assert_eq!(f2.breakpoints(), &[0.0, 0.5, 1.0]);
        assert_eq!(f2.values(), &[1.0, 1.0]);
        assert_eq!(p2.values(), p.values());
    }

    #[test]
    fn swap_flips_exponent_order() {
        let (f, p) = two_piece_instance();
        let sigma = PiecePermutation::new(vec![1, 0]).unwrap();
        let (f2, p2) = permute(&f, &p, &sigma).unwrap();
        assert_eq!(p2.values(), &[2.0, 1.0]);
        assert_eq!(f2.values(), &[1.0, 1.0]);
        // Multiset of lengths preserved to within prefix-sum rounding.
        assert!((f2.piece_len(0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn permutation_validation() {
        let (f, p) = two_piece_instance();
        assert!(PiecePermutation::new(vec![0, 0]).is_err());
        assert!(PiecePermutation::new(vec![1, 2]).is_err());
        let sigma = PiecePermutation::identity(3);
        assert!(permute(&f, &p, &sigma).is_err());
    }

    #[test]
    fn nakano_is_permutation_invariant() {
        let f = StepFunction::from_pieces(&[(0.2, 2.0), (0.3, 0.5), (0.5, 1.1)]).unwrap();
        let p = ExponentProfile::from_pieces(&[(0.4, 1.2), (0.6, 5.0)]).unwrap();
        let base = norm_nakano(&f, &p, DEFAULT_TOL).unwrap().value;
        let mut rng = sub_rng(17, 0);
        for _ in 0..10 {
            let n = common_refinement_all(&[&f, p.as_step()])[0].n_pieces();
            let sigma = PiecePermutation::random(&mut rng, n);
            let (fs, ps) = permute(&f, &p, &sigma).unwrap();
            let v = norm_nakano(&fs, &ps, DEFAULT_TOL).unwrap().value;
            assert!((v - base).abs() <= 1e-12 * base, "{v} vs {base}");
        }
    }

    #[test]
    fn sorting_matches_golden_norms() {
        let (f, p) = two_piece_instance();
        let (fi, pi) = sort_by_exponent(&f, &p, SortDirection::Increasing);
        assert_eq!(pi.values(), &[1.0, 2.0]);
        assert!((norm_ode(&fi, &pi).value - 0.8660254037844386).abs() <= 1e-15);
        let (fd, pd) = sort_by_exponent(&f, &p, SortDirection::Decreasing);
        assert_eq!(pd.values(), &[2.0, 1.0]);
        assert!((norm_ode(&fd, &pd).value - 1.2071067811865476).abs() <= 1e-15);
        // Sorted input is a fixed point.
        let (fi2, pi2) = sort_by_exponent(&fi, &pi, SortDirection::Increasing);
        assert_eq!(fi2.breakpoints(), fi.breakpoints());
        assert_eq!(pi2.values(), pi.values());
    }

    #[test]
    fn stable_sort_keeps_tied_pieces_in_order() {
        let f = StepFunction::from_pieces(&[(0.25, 1.0), (0.25, 2.0), (0.5, 3.0)]).unwrap();
        let p = ExponentProfile::from_pieces(&[(0.25, 2.0), (0.25, 2.0), (0.5, 1.0)]).unwrap();
        let (fs, ps) = sort_by_exponent(&f, &p, SortDirection::Increasing);
        assert_eq!(ps.values(), &[1.0, 2.0, 2.0]);
        assert_eq!(fs.values(), &[3.0, 1.0, 2.0]);
    }

    #[test]
    fn certify_passes_on_reference_instances() {
        let (f, p) = two_piece_instance();
        let report = certify_rearrangement(&f, &p, 50, 99);
        assert!(report.passed(), "worst margin {}", report.worst_margin);
        let ratio = 1.2071067811865476f64 / 0.8660254037844386;
        let b2 = constant_bp(2.0).unwrap();
        assert!(ratio <= b2);

        // Constant exponent: every permutation is norm-neutral.
        let fc = StepFunction::from_pieces(&[(0.3, 2.0), (0.7, 0.4)]).unwrap();
        let pc = ExponentProfile::constant(3.0).unwrap();
        let rep = certify_rearrangement(&fc, &pc, 30, 5);
        assert!(rep.passed());

        let zero = StepFunction::constant(0.0);
        let rz = certify_rearrangement(&zero, &p, 10, 1);
        assert!(rz.passed());
    }

    #[test]
    fn certify_is_deterministic_in_seed() {
        let (f, p) = two_piece_instance();
        let a = certify_rearrangement(&f, &p, 25, 7);
        let b = certify_rearrangement(&f, &p, 25, 7);
        assert_eq!(a.worst_margin.to_bits(), b.worst_margin.to_bits());
        assert_eq!(a.stats, b.stats);
    }

    #[test]
    fn monotone_check_examples() {
        let inc = ExponentProfile::from_pieces(&[(0.5, 1.0), (0.5, 2.0)]).unwrap();
        let r = constant_one_monotone_check(&inc).unwrap();
        assert!(r.passed());
        assert!(r.stats[0].1 < 1.0);

        let dec = ExponentProfile::from_pieces(&[(0.5, 2.0), (0.5, 1.0)]).unwrap();
        let r = constant_one_monotone_check(&dec).unwrap();
        assert!(r.passed());
        assert!(r.stats[0].1 > 1.0);

        let konst = ExponentProfile::constant(3.0).unwrap();
        let r = constant_one_monotone_check(&konst).unwrap();
        assert!(r.passed());
        assert!((r.stats[0].1 - 1.0).abs() <= 1e-12);

        let wiggle = ExponentProfile::from_pieces(&[(0.3, 1.0), (0.3, 3.0), (0.4, 2.0)]).unwrap();
        assert_eq!(
            constant_one_monotone_check(&wiggle).unwrap_err(),
            RearrangeError::NotMonotone
        );
    }

    #[test]
    fn aux_transform_unit_square() {
        let f = StepFunction::constant(1.0);
        let p = ExponentProfile::constant(2.0).unwrap();
        let aux = aux_transform(&f, &p).unwrap();
        assert!((aux.alpha - 0.5).abs() <= 1e-15);
        assert!((aux.curve_hat.terminal() - 1.0).abs() <= 1e-15);
        // φ̂² has slope p̂ = 2 in image time.
        let tau = aux.curve_hat.breakpoints();
        let phi = aux.curve_hat.phi();
        let slope = (phi[1].powi(2) - phi[0].powi(2)) / (tau[1] - tau[0]);
        assert!((slope - 2.0).abs() <= 1e-12);
    }

    #[test]
    fn aux_transform_identity_when_p_is_one() {
        let f = StepFunction::constant(1.0);
        let p = ExponentProfile::constant(1.0).unwrap();
        let aux = aux_transform(&f, &p).unwrap();
        assert!((aux.alpha - 1.0).abs() <= 1e-15);
        let phi = phi_exact_step(&f, &p);
        assert_eq!(aux.curve_hat.phi(), phi.phi());
        assert_eq!(aux.p_hat.values(), p.values());
    }

    #[test]
    fn aux_transform_slope_law_two_piece() {
        let f = StepFunction::from_pieces(&[(0.5, 2.0), (0.5, 0.7)]).unwrap();
        let p = ExponentProfile::from_pieces(&[(0.5, 1.0), (0.5, 2.0)]).unwrap();
        let aux = aux_transform(&f, &p).unwrap();
        let tau = aux.curve_hat.breakpoints();
        let phi = aux.curve_hat.phi();
        for i in 0..tau.len() - 1 {
            let pv = aux.p_hat.values()[i];
            let slope = (phi[i + 1].powf(pv) - phi[i].powf(pv)) / (tau[i + 1] - tau[i]);
            assert!((slope - pv).abs() <= 1e-10, "piece {i}: slope {slope}");
        }
    }

    #[test]
    fn aux_transform_rejects_zero_pieces() {
        let f = StepFunction::from_pieces(&[(0.5, 1.0), (0.5, 0.0)]).unwrap();
        let p = ExponentProfile::constant(2.0).unwrap();
        assert!(matches!(
            aux_transform(&f, &p),
            Err(RearrangeError::ZeroPiece { index: 1 })
        ));
    }

    #[test]
    fn limit_example_approaches_two_and_one() {
        let mut prev_dec = 0.0;
        for p in [1e3, 1e6, 1e9, 1e12] {
            let (dec, inc) = limit_example(p);
            // Hand formula for the decreasing arrangement.
            let l = 1.0 / p.ln();
            let hand = l.powf(1.0 / p) + 1.0 - l;
            assert!((dec - hand).abs() <= 1e-14 * hand);
            assert!(dec > prev_dec, "not monotone at p={p}");
            assert!(inc < 1.1 && inc > 0.9);
            prev_dec = dec;
        }
        let (dec, inc) = limit_example(1e12);
        assert!(dec > 1.9);
        assert!(inc < 1.1);
    }
}
