//! Interval vectors and the elementwise sign splittings used to bound
//! linear maps over boxes.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Default absolute tolerance for containment checks.
pub const DEFAULT_TOL: f64 = 1e-9;

/// A box `[lo, hi]` in R^n with `lo <= hi` componentwise.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalVector {
    lo: DVector<f64>,
    hi: DVector<f64>,
}

impl IntervalVector {
    pub fn new(lo: DVector<f64>, hi: DVector<f64>) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::Dimension {
                context: "interval bounds",
                expected: lo.len(),
                got: hi.len(),
            });
        }
        if let Some(i) = (0..lo.len()).find(|&i| !(lo[i] <= hi[i])) {
            return Err(Error::InvalidArgument(format!(
                "interval component {i} is not ordered: lo = {}, hi = {}",
                lo[i], hi[i]
            )));
        }
        Ok(Self { lo, hi })
    }

    pub fn from_slices(lo: &[f64], hi: &[f64]) -> Result<Self> {
        Self::new(DVector::from_column_slice(lo), DVector::from_column_slice(hi))
    }

    /// Degenerate box `[z, z]`.
    pub fn point(z: DVector<f64>) -> Self {
        Self { lo: z.clone(), hi: z }
    }

    /// `[lo, hi]` repeated in every one of `n` components.
    pub fn uniform(n: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(DVector::from_element(n, lo), DVector::from_element(n, hi))
    }

    /// Builds a box without checking the ordering. Used on hot paths where
    /// ordering follows from construction and for diverging framers, whose
    /// bounds may already be non-finite.
    pub(crate) fn new_unchecked(lo: DVector<f64>, hi: DVector<f64>) -> Self {
        debug_assert_eq!(lo.len(), hi.len());
        Self { lo, hi }
    }

    pub fn empty() -> Self {
        Self {
            lo: DVector::zeros(0),
            hi: DVector::zeros(0),
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &DVector<f64> {
        &self.lo
    }

    pub fn hi(&self) -> &DVector<f64> {
        &self.hi
    }

    pub fn width(&self) -> DVector<f64> {
        &self.hi - &self.lo
    }

    /// Infinity norm of the width vector (0 for an empty box).
    pub fn width_inf(&self) -> f64 {
        self.width().iter().fold(0.0_f64, |m, w| m.max(*w))
    }

    pub fn midpoint(&self) -> DVector<f64> {
        (&self.lo + &self.hi) * 0.5
    }

    pub fn is_finite(&self) -> bool {
        self.lo.iter().chain(self.hi.iter()).all(|v| v.is_finite())
    }

    pub fn contains(&self, point: &DVector<f64>, tol: f64) -> bool {
        contains(self, point, tol)
    }

    /// Whether `other` lies inside this box up to `tol`.
    pub fn contains_box(&self, other: &IntervalVector, tol: f64) -> bool {
        self.dim() == other.dim()
            && (0..self.dim())
                .all(|i| other.lo[i] >= self.lo[i] - tol && other.hi[i] <= self.hi[i] + tol)
    }

    /// The box inflated by `margin[i]` on both sides of component `i`.
    pub fn inflate(&self, margin: &DVector<f64>) -> Self {
        Self {
            lo: &self.lo - margin,
            hi: &self.hi + margin,
        }
    }

    /// Stacks two boxes into one of dimension `self.dim() + other.dim()`.
    pub fn concat(&self, other: &IntervalVector) -> Self {
        let n = self.dim() + other.dim();
        let lo = DVector::from_iterator(n, self.lo.iter().chain(other.lo.iter()).copied());
        let hi = DVector::from_iterator(n, self.hi.iter().chain(other.hi.iter()).copied());
        Self { lo, hi }
    }
}

/// The elementwise sign split of a matrix: `pos = max(M, 0)`,
/// `neg = pos - M` and `abs = pos + neg`.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixSplit {
    pub pos: DMatrix<f64>,
    pub neg: DMatrix<f64>,
    pub abs: DMatrix<f64>,
}

impl MatrixSplit {
    /// `M` reconstructed as `pos - neg`.
    pub fn matrix(&self) -> DMatrix<f64> {
        &self.pos - &self.neg
    }

    /// Bounds `M z` over `z in x`. See [`bound_linear_map`].
    pub fn bound(&self, x: &IntervalVector) -> IntervalVector {
        let lo = &self.pos * &x.lo - &self.neg * &x.hi;
        let hi = &self.pos * &x.hi - &self.neg * &x.lo;
        IntervalVector::new_unchecked(lo, hi)
    }

    /// Lower bound of `M z` over `z in [lo, hi]`.
    pub fn lower(&self, lo: &DVector<f64>, hi: &DVector<f64>) -> DVector<f64> {
        &self.pos * lo - &self.neg * hi
    }

    /// Upper bound of `M z` over `z in [lo, hi]`.
    pub fn upper(&self, lo: &DVector<f64>, hi: &DVector<f64>) -> DVector<f64> {
        &self.pos * hi - &self.neg * lo
    }
}

pub fn split(m: &DMatrix<f64>) -> Result<MatrixSplit> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("matrix split"));
    }
    Ok(split_unchecked(m))
}

pub(crate) fn split_unchecked(m: &DMatrix<f64>) -> MatrixSplit {
    let pos = m.map(|v| v.max(0.0));
    let neg = &pos - m;
    let abs = &pos + &neg;
    MatrixSplit { pos, neg, abs }
}

/// Elementwise absolute value `|M| = M+ + M-`.
pub fn abs(m: &DMatrix<f64>) -> DMatrix<f64> {
    m.abs()
}

pub fn is_metzler(m: &DMatrix<f64>, tol: f64) -> bool {
    if !m.is_square() {
        return false;
    }
    let n = m.nrows();
    (0..n).all(|i| (0..n).all(|j| i == j || m[(i, j)] >= -tol))
}

/// Tight bounds of `{A z : z in x}` using `[A+ lo - A- hi, A+ hi - A- lo]`.
pub fn bound_linear_map(a: &DMatrix<f64>, x: &IntervalVector) -> Result<IntervalVector> {
    if a.ncols() != x.dim() {
        return Err(Error::Dimension {
            context: "bound_linear_map",
            expected: a.ncols(),
            got: x.dim(),
        });
    }
    Ok(split(a)?.bound(x))
}

pub fn contains(outer: &IntervalVector, point: &DVector<f64>, tol: f64) -> bool {
    outer.dim() == point.len()
        && (0..point.len()).all(|i| point[i] >= outer.lo[i] - tol && point[i] <= outer.hi[i] + tol)
}
