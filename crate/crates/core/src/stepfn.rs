//! Piecewise-constant functions on the unit interval.
//!
//! Everything downstream (modulars, norms, rearrangements, decompositions)
//! operates on [`StepFunction`] pairs brought onto a shared breakpoint grid
//! with [`common_refinement`]. Values are stored signed; norm routines take
//! absolute values internally.

use thiserror::Error;

/// Pieces shorter than this are dropped by [`StepFunction::normalize`].
pub const MIN_PIECE: f64 = 1e-12;

/// Upper cap on exponent values; keeps every profile essentially bounded.
pub const P_MAX: f64 = 1e6;

/// Tolerance on the sum of piece lengths when building from raw pieces.
pub const LEN_SUM_TOL: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum StepFnError {
    #[error("breakpoint list of length {breaks} does not match {values} values")]
    ShapeMismatch { breaks: usize, values: usize },
    #[error("domain must be [0,1], got [{first}, {last}]")]
    NonUnitDomain { first: f64, last: f64 },
    #[error("breakpoints decrease at index {index}")]
    UnorderedBreakpoints { index: usize },
    #[error("non-finite entry at index {index}")]
    NonFinite { index: usize },
    #[error("piece lengths sum to {sum}, expected 1 within {LEN_SUM_TOL:e}")]
    BadPieceLengths { sum: f64 },
    #[error("negative piece length at index {index}")]
    NegativeLength { index: usize },
    #[error("piece index {index} out of range for {pieces} pieces")]
    IndexOutOfRange { index: usize, pieces: usize },
    #[error("piece set is empty")]
    EmptySet,
    #[error("exponent {value} at piece {index} outside [1, {P_MAX:e}]")]
    ExponentOutOfRange { index: usize, value: f64 },
    #[error("need at least one piece or sample")]
    ZeroCount,
}

/// A piecewise-constant function on [0,1]: value `values[i]` on
/// `[breakpoints[i], breakpoints[i+1])`.
#[derive(Clone, Debug, PartialEq)]
pub struct StepFunction {
    breaks: Vec<f64>,
    values: Vec<f64>,
}

impl StepFunction {
    /// Builds from explicit breakpoints. Breakpoints must be non-decreasing
    /// with endpoints exactly 0 and 1; zero-length pieces are tolerated here
    /// and removed by [`normalize`](Self::normalize).
    pub fn new(breaks: Vec<f64>, values: Vec<f64>) -> Result<Self, StepFnError> {
        if values.is_empty() || breaks.len() != values.len() + 1 {
            return Err(StepFnError::ShapeMismatch {
                breaks: breaks.len(),
                values: values.len(),
            });
        }
        for (i, b) in breaks.iter().enumerate() {
            if !b.is_finite() {
                return Err(StepFnError::NonFinite { index: i });
            }
        }
        for (i, v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(StepFnError::NonFinite { index: i });
            }
        }
        let (first, last) = (breaks[0], *breaks.last().unwrap());
        if first != 0.0 || last != 1.0 {
            return Err(StepFnError::NonUnitDomain { first, last });
        }
        if let Some(i) = (1..breaks.len()).find(|&i| breaks[i] < breaks[i - 1]) {
            return Err(StepFnError::UnorderedBreakpoints { index: i });
        }
        Ok(Self { breaks, values })
    }

    /// Builds from `(length, value)` pairs. Lengths must be non-negative and
    /// sum to 1 within [`LEN_SUM_TOL`]; they are renormalized so the final
    /// breakpoint is exactly 1.
    pub fn from_pieces(pieces: &[(f64, f64)]) -> Result<Self, StepFnError> {
        if pieces.is_empty() {
            return Err(StepFnError::ZeroCount);
        }
        for (i, &(len, v)) in pieces.iter().enumerate() {
            if !len.is_finite() || !v.is_finite() {
                return Err(StepFnError::NonFinite { index: i });
            }
            if len < 0.0 {
                return Err(StepFnError::NegativeLength { index: i });
            }
        }
        let total: f64 = pieces.iter().map(|&(len, _)| len).sum();
        if (total - 1.0).abs() > LEN_SUM_TOL {
            return Err(StepFnError::BadPieceLengths { sum: total });
        }
        let mut breaks = Vec::with_capacity(pieces.len() + 1);
        let mut acc = 0.0;
        breaks.push(0.0);
        for &(len, _) in pieces {
            acc += len;
            breaks.push((acc / total).min(1.0));
        }
        *breaks.last_mut().unwrap() = 1.0;
        let values = pieces.iter().map(|&(_, v)| v).collect();
        Self::new(breaks, values)
    }

    /// The constant function `value` on [0,1].
    pub fn constant(value: f64) -> Self {
        Self {
            breaks: vec![0.0, 1.0],
            values: vec![value],
        }
    }

    pub fn n_pieces(&self) -> usize {
        self.values.len()
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breaks
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn piece_len(&self, i: usize) -> f64 {
        self.breaks[i + 1] - self.breaks[i]
    }

    pub fn lens(&self) -> Vec<f64> {
        (0..self.n_pieces()).map(|i| self.piece_len(i)).collect()
    }

    /// True when every piece value is exactly zero.
    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    /// Max of |value| over pieces of positive length; the essential sup of |f|.
    pub fn sup_abs(&self) -> f64 {
        let mut m = 0.0_f64;
        for i in 0..self.n_pieces() {
            if self.piece_len(i) > 0.0 {
                m = m.max(self.values[i].abs());
            }
        }
        m
    }

    /// Exact piecewise integral Σ len·value.
    pub fn integral(&self) -> f64 {
        (0..self.n_pieces())
            .map(|i| self.piece_len(i) * self.values[i])
            .sum()
    }

    /// Pointwise scaling by `c`.
    pub fn scale(&self, c: f64) -> Result<Self, StepFnError> {
        let values: Vec<f64> = self.values.iter().map(|v| v * c).collect();
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(StepFnError::NonFinite { index: i });
        }
        Ok(Self {
            breaks: self.breaks.clone(),
            values,
        })
    }

    /// Canonical form: pieces shorter than [`MIN_PIECE`] are dropped (their
    /// length is absorbed by the following piece) and adjacent equal values
    /// are merged. Idempotent bitwise.
    pub fn normalize(&self) -> Self {
        let mut breaks = vec![0.0];
        let mut values: Vec<f64> = Vec::new();
        for i in 0..self.n_pieces() {
            if self.piece_len(i) < MIN_PIECE {
                continue;
            }
            let right = self.breaks[i + 1];
            if values.last() == Some(&self.values[i]) {
                *breaks.last_mut().unwrap() = right;
            } else {
                breaks.push(right);
                values.push(self.values[i]);
            }
        }
        if values.is_empty() {
            // Degenerate input where every piece is sub-MIN_PIECE; keep the
            // longest piece's value on the whole interval.
            let i = (0..self.n_pieces())
                .max_by(|&a, &b| self.piece_len(a).total_cmp(&self.piece_len(b)))
                .unwrap();
            return Self::constant(self.values[i]);
        }
        *breaks.last_mut().unwrap() = 1.0;
        Self { breaks, values }
    }

    /// Zeroes the values outside `delta`: returns `1_Δ · f` on the same grid.
    pub fn restrict(&self, delta: &PieceSet) -> Result<Self, StepFnError> {
        if let Some(&max) = delta.indices().last() {
            if max >= self.n_pieces() {
                return Err(StepFnError::IndexOutOfRange {
                    index: max,
                    pieces: self.n_pieces(),
                });
            }
        }
        let values = (0..self.n_pieces())
            .map(|i| if delta.contains(i) { self.values[i] } else { 0.0 })
            .collect();
        Ok(Self {
            breaks: self.breaks.clone(),
            values,
        })
    }

    /// Midpoint-sampled approximation on `n` equal pieces.
    pub fn from_samples(sampler: impl Fn(f64) -> f64, n: usize) -> Result<Self, StepFnError> {
        if n == 0 {
            return Err(StepFnError::ZeroCount);
        }
        let nf = n as f64;
        let breaks: Vec<f64> = (0..=n).map(|i| i as f64 / nf).collect();
        let values: Vec<f64> = (0..n).map(|i| sampler((i as f64 + 0.5) / nf)).collect();
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(StepFnError::NonFinite { index: i });
        }
        Self::new(breaks, values)
    }

    /// Index of the piece whose half-open interval contains `t` (the last
    /// piece is treated as closed at 1).
    pub(crate) fn piece_index(&self, t: f64) -> usize {
        debug_assert!((0.0..=1.0).contains(&t));
        match self.breaks[1..].iter().position(|&b| t < b) {
            Some(i) => i,
            None => self.n_pieces() - 1,
        }
    }
}

/// Puts both functions on the sorted union of their breakpoints. Values are
/// carried over pointwise; exact, no interpolation.
pub fn common_refinement(a: &StepFunction, b: &StepFunction) -> (StepFunction, StepFunction) {
    let mut out = common_refinement_all(&[a, b]);
    let rb = out.pop().unwrap();
    let ra = out.pop().unwrap();
    (ra, rb)
}

/// N-ary version of [`common_refinement`]: all outputs share one grid.
pub fn common_refinement_all(fs: &[&StepFunction]) -> Vec<StepFunction> {
    let mut breaks: Vec<f64> = fs.iter().flat_map(|f| f.breaks.iter().copied()).collect();
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    let n = breaks.len() - 1;
    fs.iter()
        .map(|f| {
            let mut values = Vec::with_capacity(n);
            let mut src = 0;
            for j in 0..n {
                // Union points include every source breakpoint exactly, so
                // equality comparisons advance the source cursor losslessly.
                while src + 1 < f.n_pieces() && f.breaks[src + 1] <= breaks[j] {
                    src += 1;
                }
                values.push(f.values[src]);
            }
            StepFunction {
                breaks: breaks.clone(),
                values,
            }
        })
        .collect()
}

/// Pointwise sum on the common refinement.
pub fn add(a: &StepFunction, b: &StepFunction) -> Result<StepFunction, StepFnError> {
    let (ra, rb) = common_refinement(a, b);
    let values: Vec<f64> = ra
        .values
        .iter()
        .zip(&rb.values)
        .map(|(x, y)| x + y)
        .collect();
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(StepFnError::NonFinite { index: i });
    }
    Ok(StepFunction {
        breaks: ra.breaks,
        values,
    })
}

/// An exponent function p(·): a step function with values in [1, P_MAX].
#[derive(Clone, Debug, PartialEq)]
pub struct ExponentProfile(StepFunction);

impl ExponentProfile {
    pub fn new(sf: StepFunction) -> Result<Self, StepFnError> {
        for (i, &v) in sf.values().iter().enumerate() {
            if !(1.0..=P_MAX).contains(&v) {
                return Err(StepFnError::ExponentOutOfRange { index: i, value: v });
            }
        }
        Ok(Self(sf))
    }

    pub fn constant(p: f64) -> Result<Self, StepFnError> {
        Self::new(StepFunction::constant(p))
    }

    pub fn from_pieces(pieces: &[(f64, f64)]) -> Result<Self, StepFnError> {
        Self::new(StepFunction::from_pieces(pieces)?)
    }

    pub fn as_step(&self) -> &StepFunction {
        &self.0
    }

    pub fn into_step(self) -> StepFunction {
        self.0
    }

    pub fn values(&self) -> &[f64] {
        self.0.values()
    }

    pub fn breakpoints(&self) -> &[f64] {
        self.0.breakpoints()
    }

    pub fn n_pieces(&self) -> usize {
        self.0.n_pieces()
    }

    pub fn normalize(&self) -> Self {
        Self(self.0.normalize())
    }

    /// Essential supremum p̄ over pieces of positive length.
    pub fn p_bar(&self) -> f64 {
        let mut m = 1.0_f64;
        for i in 0..self.0.n_pieces() {
            if self.0.piece_len(i) > 0.0 {
                m = m.max(self.0.values[i]);
            }
        }
        m
    }

    /// Essential infimum over pieces of positive length.
    pub fn p_min(&self) -> f64 {
        let mut m = P_MAX;
        for i in 0..self.0.n_pieces() {
            if self.0.piece_len(i) > 0.0 {
                m = m.min(self.0.values[i]);
            }
        }
        m
    }
}

/// Exact (min, max) of the exponent over a non-empty piece set.
pub fn ess_bounds(p: &ExponentProfile, delta: &PieceSet) -> Result<(f64, f64), StepFnError> {
    if delta.is_empty() {
        return Err(StepFnError::EmptySet);
    }
    let vals = p.values();
    let mut r = f64::INFINITY;
    let mut s = f64::NEG_INFINITY;
    for &i in delta.indices() {
        if i >= vals.len() {
            return Err(StepFnError::IndexOutOfRange {
                index: i,
                pieces: vals.len(),
            });
        }
        r = r.min(vals[i]);
        s = s.max(vals[i]);
    }
    Ok((r, s))
}

/// A set of piece indices standing for a measurable subset of [0,1].
/// Stored sorted and duplicate-free.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PieceSet {
    indices: Vec<usize>,
}

impl PieceSet {
    pub fn new(indices: impl IntoIterator<Item = usize>) -> Self {
        let mut indices: Vec<usize> = indices.into_iter().collect();
        indices.sort_unstable();
        indices.dedup();
        Self { indices }
    }

    pub fn all(n: usize) -> Self {
        Self {
            indices: (0..n).collect(),
        }
    }

    pub fn empty() -> Self {
        Self {
            indices: Vec::new(),
        }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn contains(&self, i: usize) -> bool {
        self.indices.binary_search(&i).is_ok()
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn complement(&self, n: usize) -> Self {
        Self {
            indices: (0..n).filter(|i| !self.contains(*i)).collect(),
        }
    }
}
