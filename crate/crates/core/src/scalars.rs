//! The ⊞_p combination algebra and the constants a and b_p.
//!
//! ⊞_p(x, y) = (x^p + y^p)^{1/p}, with ⊞_∞ = max. Every exponentiation is
//! routed through a max-factored form so the algebra stays finite for
//! exponents up to the domain cap.

use std::sync::OnceLock;
use thiserror::Error;

/// Exponent above which ⊞ switches to log-domain evaluation: c^p overflows
/// doubles near p·ln c > 709, and (1 + x)^{1/p} loses the tiny-x correction.
const LOG_DOMAIN_P: f64 = 50.0;

#[derive(Debug, Error, PartialEq)]
pub enum ScalarError {
    #[error("expected a non-negative value, got {value}")]
    NegativeInput { value: f64 },
    #[error("exponent {value} must be at least 1")]
    ExponentBelowOne { value: f64 },
    #[error("expected {expected} entries, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("fold-order indices are not a permutation of 0..{n}")]
    InvalidPermutation { n: usize },
    #[error("axis exponents must satisfy r <= s at the swap position, got r={r}, s={s}")]
    ExponentOrderViolation { r: f64, s: f64 },
    #[error("tensor shape {shape:?} does not match {len} data entries")]
    ShapeMismatch { shape: Vec<usize>, len: usize },
    #[error("axis {axis} (and its successor) must index into {ndim} axes")]
    AxisOutOfRange { axis: usize, ndim: usize },
}

fn ensure_nonneg(v: f64) -> Result<f64, ScalarError> {
    if v >= 0.0 {
        Ok(v)
    } else {
        Err(ScalarError::NegativeInput { value: v })
    }
}

fn ensure_exponent(p: f64) -> Result<f64, ScalarError> {
    if p >= 1.0 {
        Ok(p)
    } else {
        Err(ScalarError::ExponentBelowOne { value: p })
    }
}

/// (x^p + y^p)^{1/p} for x, y ≥ 0 and p ∈ [1, ∞], computed as
/// m·(1 + (min/max)^p)^{1/p} so no intermediate overflows.
pub fn boxplus(x: f64, y: f64, p: f64) -> Result<f64, ScalarError> {
    let x = ensure_nonneg(x)?;
    let y = ensure_nonneg(y)?;
    let p = ensure_exponent(p)?;
    if p == f64::INFINITY {
        return Ok(x.max(y));
    }
    if p == 1.0 {
        return Ok(x + y);
    }
    let (m, n) = if x >= y { (x, y) } else { (y, x) };
    if n == 0.0 || m == f64::INFINITY {
        return Ok(m);
    }
    let r = n / m;
    if p >= LOG_DOMAIN_P {
        // r^p may underflow; ln_1p keeps the correction term.
        let t = (p * r.ln()).exp();
        Ok(m * (t.ln_1p() / p).exp())
    } else {
        Ok(m * (1.0 + r.powf(p)).powf(1.0 / p))
    }
}

/// Visit order for the summands of a left fold.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FoldOrder {
    perm: Vec<usize>,
}

impl FoldOrder {
    /// Natural order 0, 1, …, n−1.
    pub fn identity(n: usize) -> Self {
        Self {
            perm: (0..n).collect(),
        }
    }

    /// `perm[j]` is the summand visited at step j; must be a permutation.
    pub fn new(perm: Vec<usize>) -> Result<Self, ScalarError> {
        let n = perm.len();
        let mut seen = vec![false; n];
        for &i in &perm {
            if i >= n || seen[i] {
                return Err(ScalarError::InvalidPermutation { n });
            }
            seen[i] = true;
        }
        Ok(Self { perm })
    }

    pub fn len(&self) -> usize {
        self.perm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.perm.is_empty()
    }

    pub fn indices(&self) -> &[usize] {
        &self.perm
    }
}

/// Left fold (((v_{σ(0)} ⊞_{e_0} v_{σ(1)}) ⊞_{e_1} v_{σ(2)}) …; exponent e_j
/// is applied at step j regardless of the visit order.
pub fn fold(values: &[f64], exponents: &[f64], order: &FoldOrder) -> Result<f64, ScalarError> {
    if values.is_empty() || exponents.len() != values.len() - 1 {
        return Err(ScalarError::LengthMismatch {
            expected: values.len().max(1) - 1,
            got: exponents.len(),
        });
    }
    if order.len() != values.len() {
        return Err(ScalarError::LengthMismatch {
            expected: values.len(),
            got: order.len(),
        });
    }
    let mut acc = ensure_nonneg(values[order.perm[0]])?;
    for (j, &e) in exponents.iter().enumerate() {
        acc = boxplus(acc, values[order.perm[j + 1]], e)?;
    }
    Ok(acc)
}

/// [`fold`] in the natural order.
pub fn fold_chain(values: &[f64], exponents: &[f64]) -> Result<f64, ScalarError> {
    fold(values, exponents, &FoldOrder::identity(values.len()))
}

/// Collapses row-major `data` of the given shape to a scalar by ⊞-reducing
/// one axis at a time, leading axis first, with `exps[i]` on original axis i.
/// When `swap == Some(k)`, axes k+1 and k are reduced in that (swapped) order.
fn reduce_to_scalar(
    shape: &[usize],
    data: &[f64],
    exps: &[f64],
    swap: Option<usize>,
) -> Result<f64, ScalarError> {
    let mut shape = shape.to_vec();
    let mut data = data.to_vec();
    let mut order: Vec<(usize, f64)> = (0..shape.len()).map(|i| (i, exps[i])).collect();
    if let Some(k) = swap {
        order.swap(k, k + 1);
    }
    // After earlier axes are gone, original axis i sits at position i minus
    // the number of already-reduced axes that preceded it.
    let mut reduced: Vec<usize> = Vec::new();
    for (axis, p) in order {
        let at = axis - reduced.iter().filter(|&&r| r < axis).count();
        let n_ax = shape[at];
        let outer: usize = shape[..at].iter().product();
        let inner: usize = shape[at + 1..].iter().product();
        let mut out = Vec::with_capacity(outer * inner);
        for o in 0..outer {
            for i in 0..inner {
                let mut acc = data[(o * n_ax) * inner + i];
                for j in 1..n_ax {
                    acc = boxplus(acc, data[(o * n_ax + j) * inner + i], p)?;
                }
                out.push(acc);
            }
        }
        shape.remove(at);
        data = out;
        reduced.push(axis);
    }
    debug_assert_eq!(data.len(), 1);
    Ok(data[0])
}

/// Reduces the tensor twice: once with axes in natural order (axis k, then
/// k+1), once with that adjacent pair swapped. With exps[k] = r ≤ s =
/// exps[k+1], the natural order is the smaller side: lhs ≤ rhs.
pub fn nested_fold_compare(
    shape: &[usize],
    data: &[f64],
    axis_exponents: &[f64],
    k: usize,
) -> Result<(f64, f64), ScalarError> {
    let ndim = shape.len();
    if ndim == 0 || shape.iter().any(|&d| d == 0) || shape.iter().product::<usize>() != data.len()
    {
        return Err(ScalarError::ShapeMismatch {
            shape: shape.to_vec(),
            len: data.len(),
        });
    }
    if axis_exponents.len() != ndim {
        return Err(ScalarError::LengthMismatch {
            expected: ndim,
            got: axis_exponents.len(),
        });
    }
    if k + 1 >= ndim {
        return Err(ScalarError::AxisOutOfRange { axis: k, ndim });
    }
    for &v in data {
        ensure_nonneg(v)?;
    }
    for &e in axis_exponents {
        ensure_exponent(e)?;
    }
    let (r, s) = (axis_exponents[k], axis_exponents[k + 1]);
    if r > s {
        return Err(ScalarError::ExponentOrderViolation { r, s });
    }
    let lhs = reduce_to_scalar(shape, data, axis_exponents, None)?;
    let rhs = reduce_to_scalar(shape, data, axis_exponents, Some(k))?;
    Ok((lhs, rhs))
}

/// Root of g on [lo, hi] with g(lo) < 0 < g(hi): bisection to bracket width
/// 1e−15, then two Newton polish steps kept inside the bracket's interval.
fn bisect_newton(
    g: impl Fn(f64) -> f64,
    dg: impl Fn(f64) -> f64,
    mut lo: f64,
    mut hi: f64,
) -> f64 {
    for _ in 0..200 {
        if hi - lo <= 1e-15 {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut x = 0.5 * (lo + hi);
    for _ in 0..2 {
        let d = dg(x);
        if d == 0.0 {
            break;
        }
        let next = x - g(x) / d;
        if next.is_finite() && next > lo - 1.0 && next < hi + 1.0 {
            x = next;
        }
    }
    x
}

/// The constant a ≈ 1.76: the unique solution of a·ln a = 1 (equivalently
/// a^a = e) on (1, 2). Computed once and cached.
pub fn constant_a() -> f64 {
    static A: OnceLock<f64> = OnceLock::new();
    *A.get_or_init(|| {
        bisect_newton(
            |x| x * x.ln() - 1.0,
            |x| x.ln() + 1.0,
            1.0,
            2.0,
        )
    })
}

/// The constant b_p: for finite p > 1 the unique solution of b + b^{−p} = 2
/// on (1, 2); b_1 = 1 and b_∞ = 2. Strictly below 2 for every finite p.
pub fn constant_bp(p: f64) -> Result<f64, ScalarError> {
    let p = ensure_exponent(p)?;
    if p == 1.0 {
        return Ok(1.0);
    }
    if p == f64::INFINITY {
        return Ok(2.0);
    }
    let g = |b: f64| b + (-p * b.ln()).exp() - 2.0;
    let dg = |b: f64| 1.0 - p * (-(p + 1.0) * b.ln()).exp();
    // g(1) = 0 and g dips negative immediately after 1; its minimum sits at
    // b* = p^{1/(p+1)}, so [b*, 2] brackets the root in (1, 2).
    let b_star = (p.ln() / (p + 1.0)).exp();
    if g(b_star) >= 0.0 {
        // Only when p is so close to 1 that the dip is below rounding.
        return Ok(b_star);
    }
    let b = bisect_newton(g, dg, b_star, 2.0);
    // The true root is strictly inside (1, 2); rounding may land on 2 for
    // large p, so clamp to the largest double below 2.
    Ok(b.min(2.0 - f64::EPSILON))
}
