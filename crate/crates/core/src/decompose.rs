//! Block decompositions of the domain and the folded ⊞ chains they induce.
//!
//! A partition splits [0,1] into blocks (unions of profile pieces). Folding
//! per-block norms with ⊞ reconstructs the total norm up to universal
//! constants: 2(1+ae) for chains of classical constant-exponent norms built
//! from exponent level sets or essential bounds, and b_p̄ for chains of
//! variable-exponent block norms. `certify_decomposition` checks all of these
//! two-sided bounds on a concrete instance and reports margins.

use crate::instance::InstanceSpec;
use crate::luxemburg::{norm_nakano, NormMethod, DEFAULT_TOL};
use crate::ode_norm::norm_ode;
use crate::report::{one_sided_margin, CheckReport, Failure, SLACK};
use crate::scalars::{boxplus, constant_a, constant_bp, fold_chain};
use crate::stepfn::{
    common_refinement_all, ess_bounds, ExponentProfile, PieceSet, StepFunction, P_MAX,
};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum DecomposeError {
    #[error("cuts must be finite, strictly increasing, start at 1, and reach max p ({reason})")]
    BadCuts { reason: &'static str },
    #[error("chain spec incompatible with partition: {reason}")]
    SpecMismatch { reason: &'static str },
    #[error("blocks must be non-empty, disjoint, and cover every positive-length piece")]
    InvalidBlocks,
    #[error("partition was not built from level cuts")]
    NotLevelPartition,
    #[error("chain norms support only the nakano and ode methods")]
    UnsupportedMethod,
}

/// Which side of the cut brackets is closed when grouping pieces by exponent
/// level. `Lower` uses (r_i, r_{i+1}] plus the exact bottom level {r_1};
/// `Upper` uses [r_i, r_{i+1}) plus the exact top level {r_n}.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LevelConvention {
    Lower,
    Upper,
}

/// An ordered decomposition of the profile's pieces into disjoint blocks.
/// Blocks index the profile's own grid and only positive-length pieces are
/// assigned (zero-length pieces carry no mass). Each block records the exact
/// (min, max) of the exponent over its pieces.
#[derive(Clone, Debug)]
pub struct Partition {
    grid: StepFunction,
    blocks: Vec<PieceSet>,
    bounds: Vec<(f64, f64)>,
    levels: Option<Vec<f64>>,
}

impl Partition {
    /// Arbitrary decomposition: `sets` must be non-empty, pairwise disjoint,
    /// and jointly cover every positive-length piece of the profile.
    pub fn from_sets(p: &ExponentProfile, sets: Vec<PieceSet>) -> Result<Self, DecomposeError> {
        let grid = p.as_step();
        let n = grid.n_pieces();
        let mut seen = vec![false; n];
        for set in &sets {
            if set.is_empty() {
                return Err(DecomposeError::InvalidBlocks);
            }
            for &i in set.indices() {
                if i >= n || seen[i] {
                    return Err(DecomposeError::InvalidBlocks);
                }
                seen[i] = true;
            }
        }
        for i in 0..n {
            if grid.piece_len(i) > 0.0 && !seen[i] {
                return Err(DecomposeError::InvalidBlocks);
            }
        }
        let bounds = sets
            .iter()
            .map(|s| ess_bounds(p, s).map_err(|_| DecomposeError::InvalidBlocks))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            grid: grid.clone(),
            blocks: sets,
            bounds,
            levels: None,
        })
    }

    pub fn n_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn blocks(&self) -> &[PieceSet] {
        &self.blocks
    }

    /// Per-block (min, max) of the exponent.
    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    /// Cut exponent assigned to each block when built from level sets.
    pub fn levels(&self) -> Option<&[f64]> {
        self.levels.as_deref()
    }

    /// Translates each block into a piece set on the grid shared by `refined`
    /// (a function living on a refinement of this partition's grid).
    fn blocks_on(&self, refined: &StepFunction) -> Vec<PieceSet> {
        let parents: Vec<usize> = (0..refined.n_pieces())
            .map(|j| {
                let breaks = refined.breakpoints();
                self.grid.piece_index(0.5 * (breaks[j] + breaks[j + 1]))
            })
            .collect();
        self.blocks
            .iter()
            .map(|block| {
                PieceSet::new(
                    (0..refined.n_pieces()).filter(|&j| block.contains(parents[j])),
                )
            })
            .collect()
    }
}

fn validate_cuts(p: &ExponentProfile, cuts: &[f64]) -> Result<(), DecomposeError> {
    if cuts.len() < 2 {
        return Err(DecomposeError::BadCuts {
            reason: "need at least two cuts",
        });
    }
    if cuts.iter().any(|c| !c.is_finite() || *c > P_MAX) {
        return Err(DecomposeError::BadCuts {
            reason: "cut out of range",
        });
    }
    if cuts[0] != 1.0 {
        return Err(DecomposeError::BadCuts {
            reason: "first cut must be 1",
        });
    }
    if cuts.windows(2).any(|w| w[0] >= w[1]) {
        return Err(DecomposeError::BadCuts {
            reason: "cuts must be strictly increasing",
        });
    }
    if *cuts.last().unwrap() < p.p_bar() {
        return Err(DecomposeError::BadCuts {
            reason: "last cut below max exponent",
        });
    }
    Ok(())
}

/// Groups the profile's pieces by exponent level relative to the cuts
/// 1 = r_1 < … < r_n. Empty brackets are dropped. Each retained block keeps
/// the cut exponent its bracket contributes to the level chains: the lower
/// cut under `Lower`, the upper cut under `Upper`.
pub fn partition_by_levels(
    p: &ExponentProfile,
    cuts: &[f64],
    convention: LevelConvention,
) -> Result<Partition, DecomposeError> {
    validate_cuts(p, cuts)?;
    let n_cuts = cuts.len();
    let grid = p.as_step();
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); n_cuts];
    for i in 0..grid.n_pieces() {
        if grid.piece_len(i) == 0.0 {
            continue;
        }
        let v = p.values()[i];
        let b = match convention {
            // {r_1} is block 0, (r_i, r_{i+1}] is block i.
            LevelConvention::Lower => cuts.partition_point(|&c| c < v).min(n_cuts - 1),
            // [r_i, r_{i+1}) is block i-1, {r_n} is block n-1.
            LevelConvention::Upper => {
                if v == cuts[n_cuts - 1] {
                    n_cuts - 1
                } else {
                    cuts.partition_point(|&c| c <= v) - 1
                }
            }
        };
        members[b].push(i);
    }
    let mut blocks = Vec::new();
    let mut bounds = Vec::new();
    let mut levels = Vec::new();
    for (b, m) in members.into_iter().enumerate() {
        if m.is_empty() {
            continue;
        }
        let set = PieceSet::new(m);
        bounds.push(ess_bounds(p, &set).expect("non-empty block"));
        blocks.push(set);
        levels.push(match convention {
            LevelConvention::Lower => cuts[b.saturating_sub(1)],
            LevelConvention::Upper => cuts[(b + 1).min(n_cuts - 1)],
        });
    }
    Ok(Partition {
        grid: grid.clone(),
        blocks,
        bounds,
        levels: Some(levels),
    })
}

/// Evaluation plan for a folded chain: visit blocks in `order`, take each
/// block's classical norm at `block_exponents[j]`, and merge the j-th visited
/// block (j ≥ 1) with ⊞ at `fold_exponents[j-1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ChainSpec {
    order: Vec<usize>,
    block_exponents: Vec<f64>,
    fold_exponents: Vec<f64>,
}

impl ChainSpec {
    pub fn new(
        order: Vec<usize>,
        block_exponents: Vec<f64>,
        fold_exponents: Vec<f64>,
    ) -> Result<Self, DecomposeError> {
        let n = order.len();
        if n == 0 {
            return Err(DecomposeError::SpecMismatch {
                reason: "empty chain",
            });
        }
        let mut seen = vec![false; n];
        for &i in &order {
            if i >= n || seen[i] {
                return Err(DecomposeError::SpecMismatch {
                    reason: "order is not a permutation",
                });
            }
            seen[i] = true;
        }
        if block_exponents.len() != n || fold_exponents.len() != n - 1 {
            return Err(DecomposeError::SpecMismatch {
                reason: "exponent sequence length",
            });
        }
        let ok = |e: &f64| e.is_finite() && (1.0..=P_MAX).contains(e);
        if !block_exponents.iter().all(ok) || !fold_exponents.iter().all(ok) {
            return Err(DecomposeError::SpecMismatch {
                reason: "exponent out of range",
            });
        }
        Ok(Self {
            order,
            block_exponents,
            fold_exponents,
        })
    }

    /// Uniform rule shared by every chain in the decomposition bounds: the
    /// fold exponent equals the incoming block's norm exponent.
    fn with_incoming_folds(order: Vec<usize>, exps: Vec<f64>) -> Self {
        let folds = exps[1..].to_vec();
        Self {
            order,
            block_exponents: exps,
            fold_exponents: folds,
        }
    }

    /// Descending level chain: highest bracket first, each block normed at
    /// its bracket's lower cut.
    pub fn level_lower(part: &Partition) -> Result<Self, DecomposeError> {
        let levels = part.levels().ok_or(DecomposeError::NotLevelPartition)?;
        let order: Vec<usize> = (0..levels.len()).rev().collect();
        let exps: Vec<f64> = order.iter().map(|&i| levels[i]).collect();
        Ok(Self::with_incoming_folds(order, exps))
    }

    /// Variant of [`ChainSpec::level_lower`] that norms the highest bracket
    /// at `top` (the final cut) instead of its lower cut.
    pub fn level_lower_top_variant(part: &Partition, top: f64) -> Result<Self, DecomposeError> {
        let mut spec = Self::level_lower(part)?;
        if !(top.is_finite() && (1.0..=P_MAX).contains(&top)) {
            return Err(DecomposeError::SpecMismatch {
                reason: "exponent out of range",
            });
        }
        spec.block_exponents[0] = top;
        Ok(spec)
    }

    /// Ascending level chain: lowest bracket first, each block normed at its
    /// bracket's upper cut.
    pub fn level_upper(part: &Partition) -> Result<Self, DecomposeError> {
        let levels = part.levels().ok_or(DecomposeError::NotLevelPartition)?;
        let order: Vec<usize> = (0..levels.len()).collect();
        Ok(Self::with_incoming_folds(order, levels.to_vec()))
    }

    /// Ascending chain normed at each block's exponent minimum.
    pub fn from_bounds_lower(part: &Partition) -> Self {
        let exps: Vec<f64> = part.bounds().iter().map(|b| b.0).collect();
        Self::with_incoming_folds((0..exps.len()).collect(), exps)
    }

    /// Ascending chain normed at each block's exponent maximum.
    pub fn from_bounds_upper(part: &Partition) -> Self {
        let exps: Vec<f64> = part.bounds().iter().map(|b| b.1).collect();
        Self::with_incoming_folds((0..exps.len()).collect(), exps)
    }

    pub fn block_exponents(&self) -> &[f64] {
        &self.block_exponents
    }

    pub fn fold_exponents(&self) -> &[f64] {
        &self.fold_exponents
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }
}

fn block_norm(
    restricted: &StepFunction,
    profile: &ExponentProfile,
    method: NormMethod,
) -> Result<f64, DecomposeError> {
    match method {
        NormMethod::Nakano => Ok(norm_nakano(restricted, profile, DEFAULT_TOL)
            .map_err(|_| DecomposeError::SpecMismatch {
                reason: "norm solve failed",
            })?
            .value),
        NormMethod::Ode => Ok(norm_ode(restricted, profile).value),
        _ => Err(DecomposeError::UnsupportedMethod),
    }
}

/// Per-block classical norms in chain order, before folding.
pub fn chain_block_norms(
    f: &StepFunction,
    p: &ExponentProfile,
    partition: &Partition,
    spec: &ChainSpec,
    method: NormMethod,
) -> Result<Vec<f64>, DecomposeError> {
    if spec.order.len() != partition.n_blocks() {
        return Err(DecomposeError::SpecMismatch {
            reason: "spec block count differs from partition",
        });
    }
    let refined = common_refinement_all(&[f, p.as_step()]);
    let sets = partition.blocks_on(&refined[0]);
    spec.order
        .iter()
        .zip(&spec.block_exponents)
        .map(|(&b, &e)| {
            let restricted = refined[0].restrict(&sets[b]).expect("sets index refined grid");
            let profile = ExponentProfile::constant(e).expect("validated exponent");
            block_norm(&restricted, &profile, method)
        })
        .collect()
}

/// Folded chain of classical constant-exponent block norms.
pub fn chain_value(
    f: &StepFunction,
    p: &ExponentProfile,
    partition: &Partition,
    spec: &ChainSpec,
    method: NormMethod,
) -> Result<f64, DecomposeError> {
    let norms = chain_block_norms(f, p, partition, spec, method)?;
    fold_chain(&norms, &spec.fold_exponents).map_err(|_| DecomposeError::SpecMismatch {
        reason: "fold failed",
    })
}

/// Variable-exponent block norms ‖1_Δ f‖ (the original profile, restricted
/// support) in partition order, folded with the given exponents.
pub fn chain_value_variable(
    f: &StepFunction,
    p: &ExponentProfile,
    partition: &Partition,
    fold_exponents: &[f64],
    method: NormMethod,
) -> Result<f64, DecomposeError> {
    let norms = variable_block_norms(f, p, partition, method)?;
    fold_chain(&norms, fold_exponents).map_err(|_| DecomposeError::SpecMismatch {
        reason: "fold sequence length",
    })
}

/// The ‖1_Δ f‖ values entering [`chain_value_variable`], in partition order.
pub fn variable_block_norms(
    f: &StepFunction,
    p: &ExponentProfile,
    partition: &Partition,
    method: NormMethod,
) -> Result<Vec<f64>, DecomposeError> {
    let refined = common_refinement_all(&[f, p.as_step()]);
    let sets = partition.blocks_on(&refined[0]);
    sets.iter()
        .map(|s| {
            let restricted = refined[0].restrict(s).expect("sets index refined grid");
            block_norm(&restricted, p, method)
        })
        .collect()
}

/// Names for the six chain bounds, in the order [`decomposition_margins`]
/// reports them.
pub const CHAIN_BOUND_NAMES: [&str; 6] = [
    "const-chain-min-vs-modular",
    "modular-vs-const-chain-max",
    "block-ode-chain-vs-ode",
    "ode-vs-block-ode-chain",
    "block-modular-chain-vs-modular",
    "modular-vs-block-modular-chain",
];

/// The six two-sided chain comparisons on one instance, with the observed
/// sides and the constants they use.
#[derive(Clone, Copy, Debug)]
pub struct DecompositionMargins {
    pub c1: f64,
    pub c2: f64,
    pub total_nakano: f64,
    pub total_ode: f64,
    /// (lhs, rhs) per bound, ordered as [`CHAIN_BOUND_NAMES`].
    pub sides: [(f64, f64); 6],
    pub margins: [f64; 6],
}

/// Evaluates the six bounds tying block-norm chains to the total norms:
/// constant-exponent chains at the blocks' exponent minima/maxima against
/// C₁ = 2(1+ae) times the modular-based norm, and variable-exponent
/// block-norm chains (both methods) against C₂ = b_p̄ times the
/// corresponding total.
pub fn decomposition_margins(
    f: &StepFunction,
    p: &ExponentProfile,
    partition: &Partition,
) -> DecompositionMargins {
    let a = constant_a();
    let c1 = 2.0 * (1.0 + a * std::f64::consts::E);
    let c2 = constant_bp(p.p_bar()).expect("profile exponents valid");
    let total_nakano = norm_nakano(f, p, DEFAULT_TOL)
        .expect("in-range instance solves")
        .value;
    let total_ode = norm_ode(f, p).value;

    let lower_spec = ChainSpec::from_bounds_lower(partition);
    let upper_spec = ChainSpec::from_bounds_upper(partition);
    let chain_r = chain_value(f, p, partition, &lower_spec, NormMethod::Nakano)
        .expect("bounds specs match partition");
    let chain_s = chain_value(f, p, partition, &upper_spec, NormMethod::Nakano)
        .expect("bounds specs match partition");

    let fold_r: Vec<f64> = partition.bounds()[1..].iter().map(|b| b.0).collect();
    let fold_s: Vec<f64> = partition.bounds()[1..].iter().map(|b| b.1).collect();
    let ode_blocks = variable_block_norms(f, p, partition, NormMethod::Ode)
        .expect("partition blocks are valid");
    let nak_blocks = variable_block_norms(f, p, partition, NormMethod::Nakano)
        .expect("partition blocks are valid");
    let ode_lo = fold_chain(&ode_blocks, &fold_s).expect("lengths match");
    let ode_hi = fold_chain(&ode_blocks, &fold_r).expect("lengths match");
    let nak_lo = fold_chain(&nak_blocks, &fold_s).expect("lengths match");
    let nak_hi = fold_chain(&nak_blocks, &fold_r).expect("lengths match");

    let sides = [
        (chain_r, c1 * total_nakano),
        (total_nakano, c1 * chain_s),
        (ode_lo, c2 * total_ode),
        (total_ode, c2 * ode_hi),
        (nak_lo, c2 * total_nakano),
        (total_nakano, c2 * nak_hi),
    ];
    let mut margins = [0.0; 6];
    for (i, &(lhs, rhs)) in sides.iter().enumerate() {
        margins[i] = one_sided_margin(lhs, rhs, SLACK);
    }
    DecompositionMargins {
        c1,
        c2,
        total_nakano,
        total_ode,
        sides,
        margins,
    }
}

/// Runs [`decomposition_margins`] and packages the outcome as a report.
/// Failures are recorded, never raised.
pub fn certify_decomposition(
    f: &StepFunction,
    p: &ExponentProfile,
    partition: &Partition,
) -> CheckReport {
    let dm = decomposition_margins(f, p, partition);
    let mut worst_margin = f64::INFINITY;
    let mut failures = Vec::new();
    let mut stats = vec![
        ("constant_c1".to_string(), dm.c1),
        ("constant_c2".to_string(), dm.c2),
        ("blocks".to_string(), partition.n_blocks() as f64),
    ];
    for (i, name) in CHAIN_BOUND_NAMES.iter().enumerate() {
        let margin = dm.margins[i];
        stats.push((format!("margin_{name}"), margin));
        worst_margin = worst_margin.min(margin);
        if margin < 0.0 {
            let block_indices: Vec<Vec<usize>> = partition
                .blocks()
                .iter()
                .map(|s| s.indices().to_vec())
                .collect();
            failures.push(Failure {
                trial: 0,
                witness: serde_json::json!({
                    "chain": name,
                    "blocks": block_indices,
                    "instance": InstanceSpec::from_parts(f, p).to_value(),
                }),
                lhs: dm.sides[i].0,
                rhs: dm.sides[i].1,
                margin,
            });
        }
    }
    CheckReport {
        check: "decomposition".to_string(),
        trials: 1,
        seed: 0,
        worst_margin,
        failures,
        stats,
    }
}

/// The two-block illustration with the rounded constant 12: splitting at
/// level r, the modular-based norm is pinched between
/// (1/12)(|||1_{p≥r}f|||_r + |||1_{p<r}f|||_1) and
/// 12(|||1_{p<r}f|||_r ⊞_{p̄} |||1_{p≥r}f|||_{p̄}).
#[derive(Clone, Copy, Debug)]
pub struct TwelveConstant {
    pub lower: f64,
    pub value: f64,
    pub upper: f64,
}

pub fn twelve_constant_illustration(
    f: &StepFunction,
    p: &ExponentProfile,
    r: f64,
) -> Result<TwelveConstant, DecomposeError> {
    if !(r.is_finite() && (1.0..=P_MAX).contains(&r)) {
        return Err(DecomposeError::BadCuts {
            reason: "split level out of range",
        });
    }
    let refined = common_refinement_all(&[f, p.as_step()]);
    let (rf, rp) = (&refined[0], &refined[1]);
    let hi = PieceSet::new((0..rf.n_pieces()).filter(|&i| rp.values()[i] >= r));
    let lo = hi.complement(rf.n_pieces());
    let f_hi = rf.restrict(&hi).expect("indices in range");
    let f_lo = rf.restrict(&lo).expect("indices in range");
    let p_bar = p.p_bar();
    let norm_at = |g: &StepFunction, e: f64| -> f64 {
        let prof = ExponentProfile::constant(e).expect("validated exponent");
        norm_nakano(g, &prof, DEFAULT_TOL)
            .expect("in-range instance solves")
            .value
    };
    let lower = (norm_at(&f_hi, r) + norm_at(&f_lo, 1.0)) / 12.0;
    let value = norm_nakano(f, p, DEFAULT_TOL)
        .expect("in-range instance solves")
        .value;
    let upper = 12.0
        * boxplus(norm_at(&f_lo, r), norm_at(&f_hi, p_bar), p_bar).expect("nonneg norms");
    Ok(TwelveConstant {
        lower,
        value,
        upper,
    })
}
