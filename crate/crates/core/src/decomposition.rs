//! Jacobian sign-stable (JSS) decompositions of nonlinear maps and the tight
//! mixed-monotone decomposition functions built on them.
//!
//! A map `f` with Jacobian bounds `J in [J_lo, J_hi]` over a box domain is
//! written as `f(z) = H z + mu(z)` where every entry of `H` is one of the two
//! Jacobian bounds. The remainder `mu` then has a Jacobian whose entries keep
//! one sign over the whole domain, so each output of `mu` is minimised or
//! maximised at a vertex that can be picked per output row with a binary
//! selector. Evaluating `mu` at those vertices gives a decomposition function
//! that is exact on the diagonal and monotone in each argument.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::interval::{split_unchecked, IntervalVector, MatrixSplit};

/// Tolerance for domain membership of decomposition-function arguments.
const DOMAIN_TOL: f64 = 1e-9;

type EvalFn = dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync;

/// A map `R^n -> R^p` with entrywise Jacobian bounds valid over `domain`.
#[derive(Clone)]
pub struct DifferentiableMap {
    eval: Arc<EvalFn>,
    jac_lo: DMatrix<f64>,
    jac_hi: DMatrix<f64>,
    domain: IntervalVector,
    /// Bound on the spectral norm of every component Hessian over the domain.
    hessian_bound: Option<f64>,
}

impl fmt::Debug for DifferentiableMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DifferentiableMap")
            .field("inputs", &self.inputs())
            .field("outputs", &self.outputs())
            .field("jac_lo", &self.jac_lo)
            .field("jac_hi", &self.jac_hi)
            .field("hessian_bound", &self.hessian_bound)
            .finish()
    }
}

impl DifferentiableMap {
    pub fn new<F>(
        eval: F,
        jac_lo: DMatrix<f64>,
        jac_hi: DMatrix<f64>,
        domain: IntervalVector,
    ) -> Result<Self>
    where
        F: Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    {
        if jac_lo.shape() != jac_hi.shape() {
            return Err(Error::Dimension {
                context: "Jacobian bounds",
                expected: jac_lo.len(),
                got: jac_hi.len(),
            });
        }
        if jac_lo.ncols() != domain.dim() {
            return Err(Error::Dimension {
                context: "Jacobian columns vs domain",
                expected: domain.dim(),
                got: jac_lo.ncols(),
            });
        }
        if jac_lo.iter().chain(jac_hi.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("Jacobian bounds"));
        }
        if jac_lo.iter().zip(jac_hi.iter()).any(|(l, h)| l > h) {
            return Err(Error::InvalidArgument(
                "Jacobian lower bound exceeds upper bound".into(),
            ));
        }
        Ok(Self {
            eval: Arc::new(eval),
            jac_lo,
            jac_hi,
            domain,
            hessian_bound: None,
        })
    }

    /// The affine map `z -> M z + c`, with exact Jacobian bounds and zero curvature.
    pub fn affine(m: DMatrix<f64>, c: DVector<f64>, domain: IntervalVector) -> Result<Self> {
        if c.len() != m.nrows() {
            return Err(Error::Dimension {
                context: "affine offset",
                expected: m.nrows(),
                got: c.len(),
            });
        }
        let mc = m.clone();
        Ok(Self::new(move |z| &mc * z + &c, m.clone(), m, domain)?.with_hessian_bound(0.0))
    }

    pub fn with_hessian_bound(mut self, bound: f64) -> Self {
        self.hessian_bound = Some(bound);
        self
    }

    pub fn inputs(&self) -> usize {
        self.jac_lo.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.jac_lo.nrows()
    }

    pub fn jac_lo(&self) -> &DMatrix<f64> {
        &self.jac_lo
    }

    pub fn jac_hi(&self) -> &DMatrix<f64> {
        &self.jac_hi
    }

    pub fn domain(&self) -> &IntervalVector {
        &self.domain
    }

    pub fn hessian_bound(&self) -> Option<f64> {
        self.hessian_bound
    }

    pub fn eval(&self, z: &DVector<f64>) -> DVector<f64> {
        (self.eval)(z)
    }

    /// Whether the Jacobian is known exactly (the map is affine).
    pub fn is_affine(&self) -> bool {
        self.jac_lo == self.jac_hi
    }

    /// `z -> sum_k M_k f_k(z)` for maps sharing one domain. Jacobian bounds
    /// come from interval matrix products, curvature bounds from the
    /// induced infinity norms of the coefficient matrices.
    pub fn linear_combination(terms: &[(DMatrix<f64>, &DifferentiableMap)]) -> Result<Self> {
        let first = terms
            .first()
            .ok_or_else(|| Error::InvalidArgument("empty linear combination".into()))?;
        let rows = first.0.nrows();
        let domain = first.1.domain.clone();
        let n = domain.dim();
        let mut lo = DMatrix::zeros(rows, n);
        let mut hi = DMatrix::zeros(rows, n);
        let mut hess = Some(0.0);
        for (m, f) in terms {
            if m.nrows() != rows || m.ncols() != f.outputs() || f.inputs() != n {
                return Err(Error::Dimension {
                    context: "linear combination",
                    expected: rows,
                    got: m.nrows(),
                });
            }
            let s = split_unchecked(m);
            lo += &s.pos * &f.jac_lo - &s.neg * &f.jac_hi;
            hi += &s.pos * &f.jac_hi - &s.neg * &f.jac_lo;
            hess = match (hess, f.hessian_bound) {
                (Some(acc), Some(b)) => Some(acc + row_abs_sum_max(m) * b),
                _ => None,
            };
        }
        let parts: Vec<(DMatrix<f64>, Arc<EvalFn>)> = terms
            .iter()
            .map(|(m, f)| (m.clone(), f.eval.clone()))
            .collect();
        let eval = move |z: &DVector<f64>| {
            let mut out = DVector::zeros(rows);
            for (m, f) in &parts {
                if m.ncols() > 0 {
                    out += m * f(z);
                }
            }
            out
        };
        let mut map = Self::new(eval, lo, hi, domain)?;
        map.hessian_bound = hess;
        Ok(map)
    }

    /// `z -> f(z) - H z`, with Jacobian bounds shifted by `H`.
    fn minus_linear(&self, h: &DMatrix<f64>) -> Self {
        let f = self.eval.clone();
        let hc = h.clone();
        Self {
            eval: Arc::new(move |z: &DVector<f64>| f(z) - &hc * z),
            jac_lo: &self.jac_lo - h,
            jac_hi: &self.jac_hi - h,
            domain: self.domain.clone(),
            hessian_bound: self.hessian_bound,
        }
    }

    fn check_in_domain(&self, z: &DVector<f64>) -> Result<()> {
        if z.len() != self.inputs() {
            return Err(Error::Dimension {
                context: "map argument",
                expected: self.inputs(),
                got: z.len(),
            });
        }
        let (lo, hi) = (self.domain.lo(), self.domain.hi());
        for i in 0..z.len() {
            if !(z[i] >= lo[i] - DOMAIN_TOL && z[i] <= hi[i] + DOMAIN_TOL) {
                return Err(Error::OutsideDomain {
                    index: i,
                    value: z[i],
                    lo: lo[i],
                    hi: hi[i],
                });
            }
        }
        Ok(())
    }
}

fn row_abs_sum_max(m: &DMatrix<f64>) -> f64 {
    m.row_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// How each entry of the linear part `H` is chosen from the Jacobian bounds.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum HPolicy {
    /// `H = J_hi` everywhere; gives the smallest tightness matrix.
    #[default]
    Upper,
    /// `H = J_lo` everywhere.
    Lower,
    /// Per-entry choice, `true` selects the upper bound.
    Custom(DMatrix<bool>),
}

/// `f(z) = H z + mu(z)` with `mu` Jacobian sign-stable.
#[derive(Debug, Clone)]
pub struct JssForm {
    h: DMatrix<f64>,
    h_split: MatrixSplit,
    mu: DifferentiableMap,
    /// Diagonal of the binary selector matrix of every output row.
    selectors: Vec<Vec<bool>>,
    /// Distinct selector patterns with the output rows that use them, so the
    /// decomposition function needs one remainder evaluation per pattern.
    patterns: Vec<(Vec<bool>, Vec<usize>)>,
    f_bar: DMatrix<f64>,
}

/// Splits `f` into a linear part and a JSS remainder.
pub fn jss_decompose(f: &DifferentiableMap, policy: &HPolicy) -> Result<JssForm> {
    let (lo, hi) = (&f.jac_lo, &f.jac_hi);
    let h = match policy {
        HPolicy::Upper => hi.clone(),
        HPolicy::Lower => lo.clone(),
        HPolicy::Custom(sel) => {
            if sel.shape() != lo.shape() {
                return Err(Error::Dimension {
                    context: "H selection policy",
                    expected: lo.len(),
                    got: sel.len(),
                });
            }
            DMatrix::from_fn(lo.nrows(), lo.ncols(), |i, j| {
                if sel[(i, j)] {
                    hi[(i, j)]
                } else {
                    lo[(i, j)]
                }
            })
        }
    };
    let mu = f.minus_linear(&h);
    // Each entry of J - H is bounded by [J_lo - H, J_hi - H] with H at one of
    // the endpoints, so one side of that interval is exactly zero.
    let f_bar = (hi - &h).map(|v| 2.0 * v.max(0.0)) - lo + &h;
    let selectors = selector_rows(&mu);
    let patterns = group_patterns(&selectors);
    Ok(JssForm {
        h_split: split_unchecked(&h),
        h,
        mu,
        selectors,
        patterns,
        f_bar,
    })
}

/// A selector entry is 1 when the remainder is nondecreasing in that
/// coordinate over the whole domain, 0 when it is nonincreasing.
fn selector_rows(mu: &DifferentiableMap) -> Vec<Vec<bool>> {
    (0..mu.outputs())
        .map(|i| (0..mu.inputs()).map(|j| mu.jac_lo[(i, j)] >= 0.0).collect())
        .collect()
}

fn group_patterns(selectors: &[Vec<bool>]) -> Vec<(Vec<bool>, Vec<usize>)> {
    let mut patterns: Vec<(Vec<bool>, Vec<usize>)> = Vec::new();
    for (i, s) in selectors.iter().enumerate() {
        match patterns.iter_mut().find(|(p, _)| p == s) {
            Some((_, rows)) => rows.push(i),
            None => patterns.push((s.clone(), vec![i])),
        }
    }
    patterns
}

impl JssForm {
    /// The linear part `H`.
    pub fn h(&self) -> &DMatrix<f64> {
        &self.h
    }

    pub fn mu(&self) -> &DifferentiableMap {
        &self.mu
    }

    /// Tightness matrix: `mu_d(hi, lo) - mu_d(lo, hi) <= F_bar (hi - lo)`.
    pub fn f_bar(&self) -> &DMatrix<f64> {
        &self.f_bar
    }

    pub fn outputs(&self) -> usize {
        self.h.nrows()
    }

    pub fn inputs(&self) -> usize {
        self.h.ncols()
    }

    /// Whether the remainder is constant over the domain.
    pub fn remainder_is_constant(&self) -> bool {
        self.mu.jac_lo.iter().all(|v| *v == 0.0) && self.mu.jac_hi.iter().all(|v| *v == 0.0)
    }

    /// Whether every remainder Jacobian entry keeps one sign over the domain.
    pub fn is_sign_stable(&self) -> bool {
        self.mu
            .jac_lo
            .iter()
            .zip(self.mu.jac_hi.iter())
            .all(|(l, h)| *l >= 0.0 || *h <= 0.0)
    }

    /// One binary diagonal matrix per output row.
    pub fn selector_matrices(&self) -> Vec<DMatrix<f64>> {
        self.selectors
            .iter()
            .map(|s| {
                DMatrix::from_diagonal(&DVector::from_iterator(
                    s.len(),
                    s.iter().map(|b| if *b { 1.0 } else { 0.0 }),
                ))
            })
            .collect()
    }

    /// The tight decomposition function of the remainder,
    /// `mu_d,i(z1, z2) = mu_i(D^i z1 + (I - D^i) z2)`.
    pub fn tight_decomp(&self, z1: &DVector<f64>, z2: &DVector<f64>) -> Result<DVector<f64>> {
        self.mu.check_in_domain(z1)?;
        self.mu.check_in_domain(z2)?;
        Ok(self.tight_decomp_unchecked(z1, z2))
    }

    pub(crate) fn tight_decomp_unchecked(&self, z1: &DVector<f64>, z2: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.outputs());
        if self.outputs() == 0 {
            return out;
        }
        for (pattern, rows) in &self.patterns {
            let arg = DVector::from_fn(z1.len(), |j, _| if pattern[j] { z1[j] } else { z2[j] });
            let value = self.mu.eval(&arg);
            for &i in rows {
                out[i] = value[i];
            }
        }
        out
    }

    /// One step of the embedding system: a box containing `f(z)` for every
    /// `z` in `x`.
    pub fn embed_step(&self, x: &IntervalVector) -> Result<IntervalVector> {
        self.mu.check_in_domain(x.lo())?;
        self.mu.check_in_domain(x.hi())?;
        Ok(self.embed_step_unchecked(x))
    }

    pub(crate) fn embed_step_unchecked(&self, x: &IntervalVector) -> IntervalVector {
        let lin = self.h_split.bound(x);
        let lo = lin.lo() + self.tight_decomp_unchecked(x.lo(), x.hi());
        let hi = lin.hi() + self.tight_decomp_unchecked(x.hi(), x.lo());
        IntervalVector::new_unchecked(lo, hi)
    }

    /// Realised decomposition gap `mu_d(hi, lo) - mu_d(lo, hi)` on a box.
    pub fn gap(&self, x: &IntervalVector) -> Result<DVector<f64>> {
        self.mu.check_in_domain(x.lo())?;
        self.mu.check_in_domain(x.hi())?;
        Ok(self.tight_decomp_unchecked(x.hi(), x.lo()) - self.tight_decomp_unchecked(x.lo(), x.hi()))
    }
}

/// Free-function form of [`JssForm::selector_matrices`].
pub fn selector_matrices(jss: &JssForm) -> Vec<DMatrix<f64>> {
    jss.selector_matrices()
}

/// Free-function form of [`JssForm::tight_decomp`].
pub fn tight_decomp(jss: &JssForm, z1: &DVector<f64>, z2: &DVector<f64>) -> Result<DVector<f64>> {
    jss.tight_decomp(z1, z2)
}

/// Free-function form of [`JssForm::embed_step`].
pub fn embed_step(jss: &JssForm, x: &IntervalVector) -> Result<IntervalVector> {
    jss.embed_step(x)
}
