//! The certification suite: every inequality the toolkit claims, fuzzed
//! over seeded random instances. Failures are data — each one carries a
//! witness and replays bit-for-bit from (seed, trial index).

use crate::decompose::{
    decomposition_margins, twelve_constant_illustration, Partition,
};
use crate::generate::{
    generate_instance_with, log_uniform_in, shuffle, sub_rng, uniform_in, unit_f64, GenConfig,
    GenError,
};
use crate::instance::InstanceSpec;
use crate::luxemburg::{norm_mo, norm_nakano, NormMethod, DEFAULT_TOL};
use crate::modular::{modular_lambda_derivative, modular_nakano, WeightProfile};
use crate::ode_norm::{norm_ode, phi_exact_step, varying_lambda_curve};
use crate::rearrange::{
    constant_one_monotone_check, limit_example, permute, sort_by_exponent, PiecePermutation,
    SortDirection,
};
use crate::report::{equality_margin, one_sided_margin, CheckReport, Failure, SLACK};
use crate::scalars::{constant_a, constant_bp, nested_fold_compare};
use crate::stepfn::{add, common_refinement_all, ExponentProfile, PieceSet, StepFunction};
use rand_chacha::rand_core::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

/// Random permutations drawn per instance in the rearrangement checks.
pub const PERMS_PER_TRIAL: usize = 100;

/// Fixed exponents for the constant-exponent agreement check.
pub const CONSTANT_EXPONENTS: [f64; 5] = [1.0, 1.5, 2.0, 7.0, 64.0];

/// Schema tag written into every report file.
pub const REPORT_SCHEMA: &str = "varlp-fuzz-report/1";

#[derive(Debug, Error)]
pub enum SuiteError {
    #[error("trials must be at least 1")]
    ZeroTrials,
    #[error("unknown check name `{0}`")]
    UnknownCheck(String),
    #[error("failure index {index} out of range: report holds {available} failures")]
    IndexOutOfRange { index: usize, available: usize },
    #[error(transparent)]
    Config(#[from] GenError),
}

/// One certified property. Wire names (see [`Check::name`]) are stable
/// identifiers used in reports and on the command line.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Check {
    /// On the set where the exponent stays above a level r, the classical
    /// L^r norm is at most (1+a) times the variable-exponent norm there.
    RestrictedLower,
    /// Raising the exponent profile pointwise shrinks the norm by at most
    /// the factor 1+ae.
    PointwiseOrder,
    /// The accumulated norm is strictly below e times sup|f|.
    SupBound,
    /// Plain and reciprocal-weighted Luxemburg norms agree within the
    /// factor a.
    MoNakanoSandwich,
    /// The bisection norm and the accumulated norm agree within b_p̄.
    OdeNakanoSandwich,
    /// ⊞-reducing a tensor axis by axis: swapping an adjacent exponent
    /// pair with r ≤ s never decreases the result.
    FoldOrder,
    /// The constant function 1 has norm exactly 1 under a constant
    /// exponent, below 1 under an increasing one, above 1 under a
    /// decreasing one.
    MonotoneUnit,
    /// Every piece shuffle lands between the increasing- and
    /// decreasing-sorted accumulated norms.
    PermSandwich,
    /// A shuffle moves the accumulated norm by at most the factor b_p̄ and
    /// leaves the bisection norm unchanged.
    PermFactor,
    /// Folding per-bracket classical norms at the brackets' lower cuts
    /// stays within C₁ = 2(1+ae) of the total norm; includes the two-set
    /// split illustration at the rounded constant 12.
    ChainLower,
    /// The total norm stays within C₁ of the upper-cut classical chain;
    /// includes the upper half of the split illustration.
    ChainUpper,
    /// Variable-exponent block norms (accumulated method) folded with the
    /// blocks' essential bounds bracket the total within C₂ = b_p̄.
    ChainOde,
    /// Same bracketing for the bisection method.
    ChainModular,
    /// Two-piece instance with exponent p on a head of length 1/ln p:
    /// sorted one way the norm approaches 2, the other way 1, as p grows.
    ExtremeSplit,
    /// For f with unit power integral, the λ-derivative of the weighted
    /// modular at λ = 1 is exactly −1, and matches finite differences.
    ModularDerivative,
    /// With weight 1/p the varying-λ curve coincides with the norm
    /// accumulation curve at every breakpoint.
    WeightCoincidence,
    /// Absolute homogeneity, triangle inequality, and exact zero norm for
    /// all three norm methods.
    NormAxioms,
    /// A constant exponent reduces the accumulated norm to the classical
    /// L^p norm.
    ConstantExponent,
}

impl Check {
    /// Every check, in canonical report order.
    pub const ALL: [Check; 18] = [
        Check::RestrictedLower,
        Check::PointwiseOrder,
        Check::SupBound,
        Check::MoNakanoSandwich,
        Check::OdeNakanoSandwich,
        Check::FoldOrder,
        Check::MonotoneUnit,
        Check::PermSandwich,
        Check::PermFactor,
        Check::ChainLower,
        Check::ChainUpper,
        Check::ChainOde,
        Check::ChainModular,
        Check::ExtremeSplit,
        Check::ModularDerivative,
        Check::WeightCoincidence,
        Check::NormAxioms,
        Check::ConstantExponent,
    ];

    /// Stable wire name, as printed in reports and accepted by `--checks`.
    pub fn name(self) -> &'static str {
        match self {
            Check::RestrictedLower => "P21a",
            Check::PointwiseOrder => "P21b",
            Check::SupBound => "P21c",
            Check::MoNakanoSandwich => "P22",
            Check::OdeNakanoSandwich => "P23",
            Check::FoldOrder => "P25",
            Check::MonotoneUnit => "P32",
            Check::PermSandwich => "T31-sandwich",
            Check::PermFactor => "T31-factor",
            Check::ChainLower => "T41-chain1",
            Check::ChainUpper => "T41-chain2",
            Check::ChainOde => "T41-chain3",
            Check::ChainModular => "T41-chain4",
            Check::ExtremeSplit => "LIMIT-2",
            Check::ModularDerivative => "DERIV-1",
            Check::WeightCoincidence => "COINCIDE-5.3",
            Check::NormAxioms => "AXIOMS",
            Check::ConstantExponent => "CONST-P",
        }
    }

    /// Parses a wire name (case-insensitive). A couple of descriptive
    /// aliases are accepted for convenience.
    pub fn parse(s: &str) -> Option<Check> {
        let key = s.trim().to_ascii_lowercase();
        match key.as_str() {
            "prop21_3" => return Some(Check::SupBound),
            "nakano_mo_sandwich" => return Some(Check::MoNakanoSandwich),
            _ => {}
        }
        Check::ALL
            .into_iter()
            .find(|c| c.name().eq_ignore_ascii_case(&key))
    }

    /// The extreme-split table is a fixed computation, so one trial
    /// suffices regardless of the requested count.
    pub fn effective_trials(self, requested: usize) -> usize {
        match self {
            Check::ExtremeSplit => 1,
            _ => requested,
        }
    }
}

/// A scalar observed during a trial, merged across trials by max or min.
#[derive(Clone, Copy, Debug)]
pub struct Obs {
    pub key: &'static str,
    pub value: f64,
    pub maximize: bool,
}

fn obs_max(key: &'static str, value: f64) -> Obs {
    Obs {
        key,
        value,
        maximize: true,
    }
}

fn obs_min(key: &'static str, value: f64) -> Obs {
    Obs {
        key,
        value,
        maximize: false,
    }
}

/// Everything one trial produces. `margin` is the minimum over every
/// comparison made in the trial; `lhs`/`rhs` are the sides of the binding
/// comparison; `witness` is populated exactly when the trial fails.
#[derive(Clone, Debug)]
pub struct TrialOutcome {
    pub margin: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub witness: Option<serde_json::Value>,
    pub obs: Vec<Obs>,
}

/// Running minimum over comparisons, remembering the binding sides.
struct Worst {
    margin: f64,
    lhs: f64,
    rhs: f64,
}

impl Worst {
    fn new() -> Self {
        Self {
            margin: f64::INFINITY,
            lhs: 0.0,
            rhs: 0.0,
        }
    }

    fn push(&mut self, margin: f64, lhs: f64, rhs: f64) -> bool {
        if margin < self.margin {
            self.margin = margin;
            self.lhs = lhs;
            self.rhs = rhs;
            true
        } else {
            false
        }
    }

    fn outcome(self, witness: impl FnOnce() -> serde_json::Value, obs: Vec<Obs>) -> TrialOutcome {
        TrialOutcome {
            margin: self.margin,
            lhs: self.lhs,
            rhs: self.rhs,
            witness: if self.margin < 0.0 {
                Some(witness())
            } else {
                None
            },
            obs,
        }
    }
}

/// Stable classical L^r norm of a step function: factor out the sup so the
/// power sum stays in [0, n] even for large r.
pub fn classical_norm(g: &StepFunction, r: f64) -> f64 {
    let m = g.sup_abs();
    if m == 0.0 {
        return 0.0;
    }
    let mut sum = 0.0;
    for i in 0..g.n_pieces() {
        let len = g.piece_len(i);
        if len > 0.0 {
            sum += len * (g.values()[i].abs() / m).powf(r);
        }
    }
    m * sum.powf(1.0 / r)
}

fn unweighted_norm(method: NormMethod, f: &StepFunction, p: &ExponentProfile) -> f64 {
    match method {
        NormMethod::Nakano => {
            norm_nakano(f, p, DEFAULT_TOL)
                .expect("in-range instance solves")
                .value
        }
        NormMethod::Mo => {
            norm_mo(f, p, DEFAULT_TOL)
                .expect("in-range instance solves")
                .value
        }
        NormMethod::Ode => norm_ode(f, p).value,
        NormMethod::Weighted => panic!("axioms cover the unweighted norms only"),
    }
}

fn instance_json(f: &StepFunction, p: &ExponentProfile) -> serde_json::Value {
    InstanceSpec::from_parts(f, p).to_value()
}

fn trial_restricted_lower(cfg: &GenConfig, trial: u64) -> TrialOutcome {
    let mut rng = sub_rng(cfg.seed, trial);
    let (f, p) = generate_instance_with(&mut rng, cfg);
    let a = constant_a();
    // Level strictly above 1, at most just past p̄ so the set is often
    // nonempty but sometimes empty (both are legal).
    let u = unit_f64(&mut rng);
    let r = 1.0 + (0.25 + 0.75 * u) * (p.p_bar() - 1.0).max(0.5);
    let refined = common_refinement_all(&[&f, p.as_step()]);
    let set = PieceSet::new((0..refined[1].n_pieces()).filter(|&i| refined[1].values()[i] >= r));
    let g = refined[0].restrict(&set).expect("set indexes the refinement");
    let classical = classical_norm(&g, r);
    let lhs = classical / (1.0 + a);
    let rhs = norm_ode(&g, &p).value;
    let mut worst = Worst::new();
    worst.push(one_sided_margin(lhs, rhs, SLACK), lhs, rhs);
    let ratio = if rhs > 0.0 { classical / rhs } else { 0.0 };
    worst.outcome(
        || json!({ "instance": instance_json(&f, &p), "level": r }),
        vec![obs_max("worst_constant", ratio)],
    )
}

fn trial_pointwise_order(cfg: &GenConfig, trial: u64) -> TrialOutcome {
    let mut rng = sub_rng(cfg.seed, trial);
    let (f, p) = generate_instance_with(&mut rng, cfg);
    let base = p.as_step();
    let mut lo = Vec::with_capacity(base.n_pieces());
    let mut hi = Vec::with_capacity(base.n_pieces());
    for &pv in base.values() {
        let q = log_uniform_in(&mut rng, cfg.p_range.0, cfg.p_range.1);
        lo.push(pv.min(q));
        hi.push(pv.max(q));
    }
    let grid = base.breakpoints().to_vec();
    let p1 = ExponentProfile::new(StepFunction::new(grid.clone(), lo).expect("grid is valid"))
        .expect("pointwise min stays in range");
    let p2 = ExponentProfile::new(StepFunction::new(grid, hi).expect("grid is valid"))
        .expect("pointwise max stays in range");
    let n1 = norm_ode(&f, &p1).value;
    let n2 = norm_ode(&f, &p2).value;
    let a = constant_a();
    let lhs = n1 / (1.0 + a * std::f64::consts::E);
    let mut worst = Worst::new();
    worst.push(one_sided_margin(lhs, n2, SLACK), lhs, n2);
    let ratio = if n2 > 0.0 { n1 / n2 } else { 0.0 };
    worst.outcome(
        || {
            json!({
                "instance": instance_json(&f, &p1),
                "upper_exponents": p2.values(),
            })
        },
        vec![obs_max("worst_constant", ratio)],
    )
}

fn trial_sup_bound(cfg: &GenConfig, trial: u64) -> TrialOutcome {
    let mut rng = sub_rng(cfg.seed, trial);
    let (f, p) = generate_instance_with(&mut rng, cfg);
    let v = norm_ode(&f, &p).value;
    let sup = f.sup_abs();
    let rhs = std::f64::consts::E * sup;
    let mut worst = Worst::new();
    worst.push(one_sided_margin(v, rhs, SLACK), v, rhs);
    let ratio = if sup > 0.0 { v / sup } else { 0.0 };
    worst.outcome(
        || instance_json(&f, &p),
        vec![obs_max("worst_ratio", ratio)],
    )
}

fn trial_mo_nakano_sandwich(cfg: &GenConfig, trial: u64) -> TrialOutcome {
    let mut rng = sub_rng(cfg.seed, trial);
    let (f, p) = generate_instance_with(&mut rng, cfg);
    let mo = norm_mo(&f, &p, DEFAULT_TOL)
        .expect("in-range instance solves")
        .value;
    let nak = norm_nakano(&f, &p, DEFAULT_TOL)
        .expect("in-range instance solves")
        .value;
    let a = constant_a();
    let mut worst = Worst::new();
    worst.push(one_sided_margin(mo / a, nak, SLACK), mo / a, nak);
    worst.push(one_sided_margin(nak, mo, SLACK), nak, mo);
    let ratio = if nak > 0.0 { mo / nak } else { 0.0 };
    worst.outcome(
        || instance_json(&f, &p),
        vec![obs_max("max_mo_over_nakano", ratio)],
    )
}

fn trial_ode_nakano_sandwich(cfg: &GenConfig, trial: u64) -> TrialOutcome {
    let mut rng = sub_rng(cfg.seed, trial);
    let (f, p) = generate_instance_with(&mut rng, cfg);
    let nak = norm_nakano(&f, &p, DEFAULT_TOL)
        .expect("in-range instance solves")
        .value;
    let ode = norm_ode(&f, &p).value;
    let b = constant_bp(p.p_bar()).expect("p̄ in range");
    let mut worst = Worst::new();
    worst.push(one_sided_margin(nak, ode, SLACK), nak, ode);
    worst.push(one_sided_margin(ode, b * nak, SLACK), ode, b * nak);
    let ratio = if nak > 0.0 { ode / nak } else { 0.0 };
    worst.outcome(
        || instance_json(&f, &p),
        vec![obs_max("max_ode_over_nakano", ratio)],
    )
}

fn trial_fold_order(cfg: &GenConfig, trial: u64) -> TrialOutcome {
    let mut rng = sub_rng(cfg.seed, trial);
    let ndim = 2 + (rng.next_u64() % 3) as usize;
    let shape: Vec<usize> = (0..ndim)
        .map(|_| 1 + (rng.next_u64() % 3) as usize)
        .collect();
    let total: usize = shape.iter().product();
    let data: Vec<f64> = (0..total)
        .map(|_| uniform_in(&mut rng, cfg.f_range.0, cfg.f_range.1))
        .collect();
    let mut exps: Vec<f64> = (0..ndim)
        .map(|_| log_uniform_in(&mut rng, cfg.p_range.0, cfg.p_range.1))
        .collect();
    let k = (rng.next_u64() % (ndim as u64 - 1)) as usize;
    if exps[k] > exps[k + 1] {
        exps.swap(k, k + 1);
    }
    let (lhs, rhs) =
        nested_fold_compare(&shape, &data, &exps, k).expect("tensor drawn consistently");
    // Pure scalar arithmetic on both sides: tighter tolerance than the
    // norm-level slack.
    let mut worst = Worst::new();
    worst.push(one_sided_margin(lhs, rhs, 1e-12), lhs, rhs);
    let ratio = if rhs > 0.0 { lhs / rhs } else { 0.0 };
    worst.outcome(
        || {
            json!({
                "shape": shape,
                "data": data,
                "exponents": exps,
                "swapped_axis": k,
            })
        },
        vec![obs_max("max_lhs_over_rhs", ratio)],
    )
}

fn trial_monotone_unit(cfg: &GenConfig, trial: u64) -> TrialOutcome {
    let mut rng = sub_rng(cfg.seed, trial);
    let (lo_r, hi_r) = cfg.p_range;
    // Endpoints at least 0.5 apart (range permitting) so the profile is
    // decisively non-constant.
    let gap = (hi_r - lo_r).min(0.5);
    let lo = uniform_in(&mut rng, lo_r, hi_r - gap);
    let hi = uniform_in(&mut rng, lo + gap, hi_r);
    let n = 2 + (rng.next_u64() % (cfg.max_pieces.max(2) as u64 - 1)) as usize;
    let mut vals = vec![lo; n];
    vals[n - 1] = hi;
    for v in vals.iter_mut().take(n - 1).skip(1) {
        *v = uniform_in(&mut rng, lo, hi);
    }
    vals.sort_by(f64::total_cmp);
    if unit_f64(&mut rng) < 0.5 {
        vals.reverse();
    }
    let raw: Vec<f64> = (0..n).map(|_| 0.05 + unit_f64(&mut rng)).collect();
    let total: f64 = raw.iter().sum();
    let pieces: Vec<(f64, f64)> = raw.iter().map(|x| x / total).zip(vals).collect();
    let profile = ExponentProfile::from_pieces(&pieces).expect("exponents drawn in range");
    let rep = constant_one_monotone_check(&profile).expect("profile sorted by construction");
    let (lhs, rhs) = match rep.failures.first() {
        Some(fail) => (fail.lhs, fail.rhs),
        None => (rep.stats[0].1, 1.0),
    };
    let gap_from_one = (rep.stats[0].1 - 1.0).abs();
    let mut worst = Worst::new();
    worst.push(rep.worst_margin, lhs, rhs);
    worst.outcome(
        || json!({ "profile": pieces }),
        vec![
            obs_max("max_gap_from_one", gap_from_one),
            obs_min("min_gap_from_one", gap_from_one),
        ],
    )
}

fn trial_perm_sandwich(cfg: &GenConfig, trial: u64) -> TrialOutcome {
    let mut rng = sub_rng(cfg.seed, trial);
    let (f, p) = generate_instance_with(&mut rng, cfg);
    let (fi, pi) = sort_by_exponent(&f, &p, SortDirection::Increasing);
    let (fd, pd) = sort_by_exponent(&f, &p, SortDirection::Decreasing);
    let inc = norm_ode(&fi, &pi).value;
    let dec = norm_ode(&fd, &pd).value;
    let n = common_refinement_all(&[&f, p.as_step()])[0].n_pieces();
    let mut worst = Worst::new();
    let mut binding: Option<(StepFunction, ExponentProfile)> = None;
    for _ in 0..PERMS_PER_TRIAL {
        let sigma = PiecePermutation::random(&mut rng, n);
        let (fs, ps) = permute(&f, &p, &sigma).expect("sigma sized to refinement");
        let v = norm_ode(&fs, &ps).value;
        let hit_low = worst.push(one_sided_margin(inc, v, SLACK), inc, v);
        let hit_high = worst.push(one_sided_margin(v, dec, SLACK), v, dec);
        if (hit_low || hit_high) && worst.margin < 0.0 {
            binding = Some((fs, ps));
        }
    }
    let spread = if inc > 0.0 { dec / inc } else { 0.0 };
    worst.outcome(
        || {
            let (fs, ps) = binding.expect("failing trial recorded its permutation");
            json!({
                "instance": instance_json(&f, &p),
                "permuted": instance_json(&fs, &ps),
                "sorted_norms": [inc, dec],
            })
        },
        vec![obs_max("max_spread", spread)],
    )
}

fn trial_perm_factor(cfg: &GenConfig, trial: u64) -> TrialOutcome {
    let mut rng = sub_rng(cfg.seed, trial);
    let (f, p) = generate_instance_with(&mut rng, cfg);
    let base_ode = norm_ode(&f, &p).value;
    let base_nak = norm_nakano(&f, &p, DEFAULT_TOL)
        .expect("in-range instance solves")
        .value;
    let b = constant_bp(p.p_bar()).expect("p̄ in range");
    let n = common_refinement_all(&[&f, p.as_step()])[0].n_pieces();
    let mut worst = Worst::new();
    let mut binding: Option<(StepFunction, ExponentProfile)> = None;
    let mut max_ratio = 0.0_f64;
    let mut max_drift = 0.0_f64;
    for _ in 0..PERMS_PER_TRIAL {
        let sigma = PiecePermutation::random(&mut rng, n);
        let (fs, ps) = permute(&f, &p, &sigma).expect("sigma sized to refinement");
        let v = norm_ode(&fs, &ps).value;
        let nak = norm_nakano(&fs, &ps, DEFAULT_TOL)
            .expect("permuted instance solves")
            .value;
        let hit_up = worst.push(one_sided_margin(v, b * base_ode, SLACK), v, b * base_ode);
        let hit_dn = worst.push(one_sided_margin(base_ode, b * v, SLACK), base_ode, b * v);
        let hit_inv = worst.push(equality_margin(nak, base_nak, 1e-12), nak, base_nak);
        if (hit_up || hit_dn || hit_inv) && worst.margin < 0.0 {
            binding = Some((fs, ps));
        }
        if base_ode > 0.0 && v > 0.0 {
            max_ratio = max_ratio.max((v / base_ode).max(base_ode / v));
        }
        let scale = base_nak.abs().max(nak.abs()).max(1e-12);
        max_drift = max_drift.max((nak - base_nak).abs() / scale);
    }
    worst.outcome(
        || {
            let (fs, ps) = binding.expect("failing trial recorded its permutation");
            json!({
                "instance": instance_json(&f, &p),
                "permuted": instance_json(&fs, &ps),
                "factor_bound": b,
            })
        },
        vec![
            obs_max("max_perm_ratio", max_ratio),
            obs_max("max_nakano_drift", max_drift),
        ],
    )
}

/// Random surjection of grid pieces onto 2–8 blocks (fewer when the
/// instance has fewer pieces): each block is seeded with one piece, the
/// rest land uniformly.
fn random_partition(rng: &mut impl RngCore, p: &ExponentProfile) -> Partition {
    let n = p.as_step().n_pieces();
    let target = 2 + (rng.next_u64() % 7) as usize;
    let k = target.min(n);
    let mut order: Vec<usize> = (0..n).collect();
    shuffle(rng, &mut order);
    let mut cells: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (pos, &piece) in order.iter().enumerate() {
        if pos < k {
            cells[pos].push(piece);
        } else {
            let c = (rng.next_u64() % k as u64) as usize;
            cells[c].push(piece);
        }
    }
    let sets: Vec<PieceSet> = cells.into_iter().map(PieceSet::new).collect();
    Partition::from_sets(p, sets).expect("cells are non-empty and cover the grid")
}

fn block_count_obs(n_blocks: usize, util: f64) -> Vec<Obs> {
    let keys = [
        "worst_utilization_n2",
        "worst_utilization_n3",
        "worst_utilization_n4",
        "worst_utilization_n5",
        "worst_utilization_n6",
        "worst_utilization_n7",
        "worst_utilization_n8",
    ];
    let mut obs = vec![obs_max("worst_utilization", util)];
    for (i, key) in keys.iter().enumerate() {
        let v = if n_blocks == i + 2 { util } else { 0.0 };
        obs.push(obs_max(key, v));
    }
    obs
}

fn trial_chain(cfg: &GenConfig, trial: u64, which: usize) -> TrialOutcome {
    let mut rng = sub_rng(cfg.seed, trial);
    let (f, p) = generate_instance_with(&mut rng, cfg);
    let part = random_partition(&mut rng, &p);
    let r = 1.0 + unit_f64(&mut rng) * (p.p_bar() - 1.0);
    let dm = decomposition_margins(&f, &p, &part);
    let mut worst = Worst::new();
    let mut util = 0.0_f64;
    let mut push_side = |w: &mut Worst, lhs: f64, rhs: f64, margin: f64| {
        w.push(margin, lhs, rhs);
        if rhs > 0.0 {
            util = util.max(lhs / rhs);
        }
    };
    let pair = match which {
        0 => [0, 0],
        1 => [1, 1],
        2 => [2, 3],
        _ => [4, 5],
    };
    if pair[0] == pair[1] {
        let (lhs, rhs) = dm.sides[pair[0]];
        push_side(&mut worst, lhs, rhs, dm.margins[pair[0]]);
        // The split illustration shares the constant-exponent chains'
        // trial: lower half with chain 1, upper half with chain 2.
        let tw = twelve_constant_illustration(&f, &p, r).expect("level in range");
        if which == 0 {
            push_side(
                &mut worst,
                tw.lower,
                tw.value,
                one_sided_margin(tw.lower, tw.value, SLACK),
            );
        } else {
            push_side(
                &mut worst,
                tw.value,
                tw.upper,
                one_sided_margin(tw.value, tw.upper, SLACK),
            );
        }
    } else {
        for &i in &pair {
            let (lhs, rhs) = dm.sides[i];
            push_side(&mut worst, lhs, rhs, dm.margins[i]);
        }
    }
    let blocks: Vec<Vec<usize>> = part.blocks().iter().map(|s| s.indices().to_vec()).collect();
    let n_blocks = part.n_blocks();
    worst.outcome(
        || {
            json!({
                "instance": instance_json(&f, &p),
                "blocks": blocks,
                "split_level": r,
            })
        },
        block_count_obs(n_blocks, util),
    )
}

fn trial_extreme_split() -> TrialOutcome {
    let ps = [1e3, 1e6, 1e9, 1e12];
    let mut decs = Vec::with_capacity(ps.len());
    let mut incs = Vec::with_capacity(ps.len());
    let mut worst = Worst::new();
    for &p in &ps {
        let (dec, inc) = limit_example(p);
        if let Some(&prev) = decs.last() {
            worst.push(one_sided_margin(prev, dec, 0.0), prev, dec);
        }
        let l = 1.0 / p.ln();
        let hand = l.powf(1.0 / p) + (1.0 - l);
        worst.push(equality_margin(dec, hand, 1e-14), dec, hand);
        decs.push(dec);
        incs.push(inc);
    }
    worst.push(one_sided_margin(1.9, decs[3], 0.0), 1.9, decs[3]);
    worst.push(one_sided_margin(incs[3], 1.1, 0.0), incs[3], 1.1);
    let (d, i) = (decs[3], incs[3]);
    worst.outcome(
        || json!({ "exponents": ps, "decreasing": decs, "increasing": incs }),
        vec![obs_max("dec_at_1e12", d), obs_max("inc_at_1e12", i)],
    )
}

fn trial_modular_derivative(cfg: &GenConfig, trial: u64) -> TrialOutcome {
    let mut rng = sub_rng(cfg.seed, trial);
    let (f, p) = generate_instance_with(&mut rng, cfg);
    if f.is_zero() {
        return TrialOutcome {
            margin: SLACK,
            lhs: 0.0,
            rhs: 0.0,
            witness: None,
            obs: vec![
                obs_max("max_analytic_gap", 0.0),
                obs_max("max_fd_gap", 0.0),
            ],
        };
    }
    // Dividing by the plain-kernel Luxemburg norm puts the power integral
    // at 1 up to the solver's bracket width.
    let scale = norm_mo(&f, &p, DEFAULT_TOL)
        .expect("in-range instance solves")
        .value;
    let fu = f.scale(1.0 / scale).expect("norm is positive");
    let w = WeightProfile::reciprocal_exponent(&p);
    let analytic = modular_lambda_derivative(&fu, &p, &w, 1.0).expect("λ = 1 valid");
    // Step 1e-6 matches the documented oracle; shrink it when p̄ is large
    // enough that the curvature term would dominate.
    let h = (1e-6_f64).min(1e-4 / p.p_bar());
    let hi = modular_nakano(&fu, &p, 1.0 + h).expect("λ near 1 valid");
    let lo = modular_nakano(&fu, &p, 1.0 - h).expect("λ near 1 valid");
    let fd = (hi - lo) / (2.0 * h);
    let mut worst = Worst::new();
    worst.push(equality_margin(analytic, -1.0, 1e-10), analytic, -1.0);
    worst.push(equality_margin(analytic, fd, 1e-6), analytic, fd);
    worst.outcome(
        || json!({ "instance": instance_json(&fu, &p), "analytic": analytic, "fd": fd }),
        vec![
            obs_max("max_analytic_gap", (analytic + 1.0).abs()),
            obs_max("max_fd_gap", (analytic - fd).abs()),
        ],
    )
}

fn trial_weight_coincidence(cfg: &GenConfig, trial: u64) -> TrialOutcome {
    let mut rng = sub_rng(cfg.seed, trial);
    let (f, p) = generate_instance_with(&mut rng, cfg);
    let w = WeightProfile::reciprocal_exponent(&p);
    let lam = varying_lambda_curve(&f, &p, &w);
    let phi = phi_exact_step(&f, &p);
    let mut worst = Worst::new();
    let mut max_gap = 0.0_f64;
    if lam.phi().len() != phi.phi().len() {
        worst.push(f64::NEG_INFINITY, lam.phi().len() as f64, phi.phi().len() as f64);
    } else {
        for (&x, &y) in lam.phi().iter().zip(phi.phi()) {
            worst.push(equality_margin(x, y, 1e-13), x, y);
            let scale = x.abs().max(y.abs()).max(1e-12);
            max_gap = max_gap.max((x - y).abs() / scale);
        }
    }
    worst.outcome(
        || instance_json(&f, &p),
        vec![obs_max("max_node_gap", max_gap)],
    )
}

fn trial_norm_axioms(cfg: &GenConfig, trial: u64) -> TrialOutcome {
    let mut rng = sub_rng(cfg.seed, trial);
    let (f, p) = generate_instance_with(&mut rng, cfg);
    let gv: Vec<f64> = (0..f.n_pieces())
        .map(|_| {
            let v = uniform_in(&mut rng, cfg.f_range.0, cfg.f_range.1);
            if unit_f64(&mut rng) < cfg.zero_piece_prob {
                0.0
            } else {
                v
            }
        })
        .collect();
    let g = StepFunction::new(f.breakpoints().to_vec(), gv).expect("g shares f's grid");
    let c = uniform_in(&mut rng, cfg.f_range.0, cfg.f_range.1);
    let sum = add(&f, &g).expect("step functions add");
    let scaled = f.scale(c).expect("scale is finite");
    let zero = f.scale(0.0).expect("scale is finite");
    let mut worst = Worst::new();
    let mut max_hom_gap = 0.0_f64;
    let mut max_tri_util = 0.0_f64;
    for method in [NormMethod::Nakano, NormMethod::Mo, NormMethod::Ode] {
        let nf = unweighted_norm(method, &f, &p);
        let ng = unweighted_norm(method, &g, &p);
        let nsum = unweighted_norm(method, &sum, &p);
        let nscaled = unweighted_norm(method, &scaled, &p);
        let nzero = unweighted_norm(method, &zero, &p);
        worst.push(equality_margin(nscaled, c * nf, 1e-10), nscaled, c * nf);
        worst.push(one_sided_margin(nsum, nf + ng, SLACK), nsum, nf + ng);
        let zm = if nzero == 0.0 {
            SLACK
        } else {
            equality_margin(nzero, 0.0, 0.0)
        };
        worst.push(zm, nzero, 0.0);
        let scale = nscaled.abs().max((c * nf).abs()).max(1e-12);
        max_hom_gap = max_hom_gap.max((nscaled - c * nf).abs() / scale);
        if nf + ng > 0.0 {
            max_tri_util = max_tri_util.max(nsum / (nf + ng));
        }
    }
    worst.outcome(
        || {
            json!({
                "instance": instance_json(&f, &p),
                "second": instance_json(&g, &p),
                "scale": c,
            })
        },
        vec![
            obs_max("max_homogeneity_gap", max_hom_gap),
            obs_max("max_triangle_utilization", max_tri_util),
        ],
    )
}

fn trial_constant_exponent(cfg: &GenConfig, trial: u64) -> TrialOutcome {
    let mut rng = sub_rng(cfg.seed, trial);
    let (f, _) = generate_instance_with(&mut rng, cfg);
    let p0 = CONSTANT_EXPONENTS[(trial % CONSTANT_EXPONENTS.len() as u64) as usize];
    let profile = ExponentProfile::constant(p0).expect("fixed exponents in range");
    let v = norm_ode(&f, &profile).value;
    let direct = classical_norm(&f, p0);
    let mut worst = Worst::new();
    worst.push(equality_margin(v, direct, 1e-12), v, direct);
    let scale = v.abs().max(direct.abs()).max(1e-12);
    let gap = (v - direct).abs() / scale;
    worst.outcome(
        || json!({ "instance": instance_json(&f, &profile), "direct": direct }),
        vec![obs_max("max_rel_gap", gap)],
    )
}

/// Runs a single trial of a single check. Pure function of
/// `(check, cfg, trial)`; this is the replay entry point.
///
/// `inline(never)` keeps one compiled copy of the trial pipeline shared
/// by the fuzz and replay paths, so a replayed margin is recomputed by
/// exactly the machine code that produced the report.
#[inline(never)]
pub fn run_one_trial(check: Check, cfg: &GenConfig, trial: u64) -> TrialOutcome {
    match check {
        Check::RestrictedLower => trial_restricted_lower(cfg, trial),
        Check::PointwiseOrder => trial_pointwise_order(cfg, trial),
        Check::SupBound => trial_sup_bound(cfg, trial),
        Check::MoNakanoSandwich => trial_mo_nakano_sandwich(cfg, trial),
        Check::OdeNakanoSandwich => trial_ode_nakano_sandwich(cfg, trial),
        Check::FoldOrder => trial_fold_order(cfg, trial),
        Check::MonotoneUnit => trial_monotone_unit(cfg, trial),
        Check::PermSandwich => trial_perm_sandwich(cfg, trial),
        Check::PermFactor => trial_perm_factor(cfg, trial),
        Check::ChainLower => trial_chain(cfg, trial, 0),
        Check::ChainUpper => trial_chain(cfg, trial, 1),
        Check::ChainOde => trial_chain(cfg, trial, 2),
        Check::ChainModular => trial_chain(cfg, trial, 3),
        Check::ExtremeSplit => trial_extreme_split(),
        Check::ModularDerivative => trial_modular_derivative(cfg, trial),
        Check::WeightCoincidence => trial_weight_coincidence(cfg, trial),
        Check::NormAxioms => trial_norm_axioms(cfg, trial),
        Check::ConstantExponent => trial_constant_exponent(cfg, trial),
    }
}

fn run_check(cfg: &GenConfig, trials: usize, check: Check) -> CheckReport {
    let n = check.effective_trials(trials);
    // Trials are independent; the merge below is sequential and in trial
    // order, so thread count cannot change a single byte of the report.
    let outcomes: Vec<TrialOutcome> = (0..n as u64)
        .into_par_iter()
        .map(|t| run_one_trial(check, cfg, t))
        .collect();
    let mut worst_margin = f64::INFINITY;
    let mut failures = Vec::new();
    let mut stats: Vec<(String, f64)> = Vec::new();
    for (t, o) in outcomes.iter().enumerate() {
        worst_margin = worst_margin.min(o.margin);
        if o.margin < 0.0 {
            failures.push(Failure {
                trial: t,
                witness: o.witness.clone().unwrap_or(serde_json::Value::Null),
                lhs: o.lhs,
                rhs: o.rhs,
                margin: o.margin,
            });
        }
        if stats.is_empty() {
            stats = o
                .obs
                .iter()
                .map(|ob| (ob.key.to_string(), ob.value))
                .collect();
        } else {
            debug_assert_eq!(stats.len(), o.obs.len(), "fixed obs shape per check");
            for (slot, ob) in stats.iter_mut().zip(&o.obs) {
                slot.1 = if ob.maximize {
                    slot.1.max(ob.value)
                } else {
                    slot.1.min(ob.value)
                };
            }
        }
    }
    CheckReport {
        check: check.name().to_string(),
        trials: n,
        seed: cfg.seed,
        worst_margin,
        failures,
        stats,
    }
}

/// Runs the selected checks over seeded trials and returns one report per
/// check, in the order given. Failures are collected, never raised.
pub fn run_suite(
    cfg: &GenConfig,
    trials: usize,
    checks: &[Check],
) -> Result<Vec<CheckReport>, SuiteError> {
    if trials == 0 {
        return Err(SuiteError::ZeroTrials);
    }
    cfg.validate()?;
    Ok(checks.iter().map(|&c| run_check(cfg, trials, c)).collect())
}

/// The on-disk fuzz report: schema tag, generator config, and one
/// [`CheckReport`] per check.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReportFile {
    pub schema: String,
    pub cfg: GenConfig,
    pub trials: usize,
    pub checks: Vec<CheckReport>,
    pub passed: bool,
}

impl ReportFile {
    pub fn new(cfg: GenConfig, trials: usize, checks: Vec<CheckReport>) -> Self {
        let passed = checks.iter().all(|c| c.passed());
        Self {
            schema: REPORT_SCHEMA.to_string(),
            cfg,
            trials,
            checks,
            passed,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }

    /// Failures across all checks, flattened in report order.
    pub fn n_failures(&self) -> usize {
        self.checks.iter().map(|c| c.failures.len()).sum()
    }
}

/// Result of re-running a recorded failure.
#[derive(Clone, Debug, Serialize)]
pub struct ReplayOutcome {
    pub check: String,
    pub trial: usize,
    pub stored_margin: f64,
    pub recomputed_margin: f64,
    pub lhs: f64,
    pub rhs: f64,
}

impl ReplayOutcome {
    /// Bitwise agreement between the stored and recomputed margins.
    pub fn matches(&self) -> bool {
        self.stored_margin.to_bits() == self.recomputed_margin.to_bits()
    }
}

/// Re-runs the `index`-th recorded failure (counting across checks in
/// report order) from nothing but the config and trial number.
pub fn replay(report: &ReportFile, index: usize) -> Result<ReplayOutcome, SuiteError> {
    let mut seen = 0usize;
    for ch in &report.checks {
        if index < seen + ch.failures.len() {
            let fail = &ch.failures[index - seen];
            let check =
                Check::parse(&ch.check).ok_or_else(|| SuiteError::UnknownCheck(ch.check.clone()))?;
            let out = run_one_trial(check, &report.cfg, fail.trial as u64);
            return Ok(ReplayOutcome {
                check: ch.check.clone(),
                trial: fail.trial,
                stored_margin: fail.margin,
                recomputed_margin: out.margin,
                lhs: out.lhs,
                rhs: out.rhs,
            });
        }
        seen += ch.failures.len();
    }
    Err(SuiteError::IndexOutOfRange {
        index,
        available: seen,
    })
}
