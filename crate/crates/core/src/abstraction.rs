//! Parallel affine outer-approximation of a map over a box.
//!
//! Upper and lower affine bounds are fitted at the box vertices by a single
//! LP that minimises the largest vertical gap between them. Curvature between
//! vertices is covered by the slack `sigma`. The two bounds are then replaced
//! by one shared slope `A_g` and an additive error interval.

use minilp::{ComparisonOp, OptimizationDirection, Problem};
use nalgebra::{DMatrix, DVector};

use crate::decomposition::DifferentiableMap;
use crate::error::{Error, Result};
use crate::interval::IntervalVector;

/// Largest box dimension accepted by [`box_vertices`].
pub const MAX_VERTEX_DIM: usize = 20;

#[derive(Debug, Clone)]
pub struct AffineAbstraction {
    pub a_over: DMatrix<f64>,
    pub a_under: DMatrix<f64>,
    pub e_over: DVector<f64>,
    pub e_under: DVector<f64>,
    pub theta: f64,
    pub sigma: DVector<f64>,
    /// Shared slope `(a_over + a_under) / 2`.
    pub a_g: DMatrix<f64>,
    /// `g(x) - a_g x` lies in this interval for every `x` in the box.
    pub eps: IntervalVector,
    pub domain: IntervalVector,
}

impl AffineAbstraction {
    /// The exact abstraction of an affine map `x -> a x + c`.
    pub fn exact_affine(a: DMatrix<f64>, c: DVector<f64>, domain: IntervalVector) -> Self {
        let m = a.nrows();
        Self {
            a_over: a.clone(),
            a_under: a.clone(),
            e_over: c.clone(),
            e_under: c.clone(),
            theta: 0.0,
            sigma: DVector::zeros(m),
            a_g: a,
            eps: IntervalVector::point(c),
            domain,
        }
    }
}

/// All `2^n` vertices in lexicographic order, the last coordinate varying fastest.
pub fn box_vertices(b: &IntervalVector) -> Result<Vec<DVector<f64>>> {
    let n = b.dim();
    if n > MAX_VERTEX_DIM {
        return Err(Error::TooManyVertices(n));
    }
    let free: Vec<usize> = (0..n).filter(|&i| b.lo()[i] < b.hi()[i]).collect();
    let count = 1usize << free.len();
    let mut out = Vec::with_capacity(count);
    for mask in 0..count {
        let mut v = b.lo().clone();
        for (bit, &i) in free.iter().enumerate() {
            if mask >> (free.len() - 1 - bit) & 1 == 1 {
                v[i] = b.hi()[i];
            }
        }
        out.push(v);
    }
    Ok(out)
}

/// Interior slack `(M / 2) r^2` for each of `outputs` components, where `M`
/// bounds the spectral norm of every component Hessian and `r` is half the
/// box diagonal.
pub fn sigma_bound(hessian_norm_bound: f64, b: &IntervalVector, outputs: usize) -> Result<DVector<f64>> {
    if !(hessian_norm_bound >= 0.0) || !hessian_norm_bound.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "Hessian norm bound must be finite and nonnegative, got {hessian_norm_bound}"
        )));
    }
    let r2 = b.width().map(|w| 0.25 * w * w).sum();
    Ok(DVector::from_element(outputs, 0.5 * hessian_norm_bound * r2))
}

/// Solves the vertex LP for `g` over `b` and parallelises the result.
pub fn affine_outer_approx(
    g: &DifferentiableMap,
    b: &IntervalVector,
    sigma: &DVector<f64>,
) -> Result<AffineAbstraction> {
    let n = b.dim();
    let m = g.outputs();
    if g.inputs() != n {
        return Err(Error::Dimension {
            context: "abstraction box",
            expected: g.inputs(),
            got: n,
        });
    }
    if sigma.len() != m {
        return Err(Error::Dimension {
            context: "abstraction sigma",
            expected: m,
            got: sigma.len(),
        });
    }
    if sigma.iter().any(|s| !(*s >= 0.0)) {
        return Err(Error::InvalidArgument("sigma must be nonnegative".into()));
    }
    let verts = box_vertices(b)?;
    let values: Vec<DVector<f64>> = verts.iter().map(|v| g.eval(v)).collect();
    if values.iter().any(|v| v.iter().any(|x| !x.is_finite())) {
        return Err(Error::NonFinite("map values at box vertices"));
    }

    let free = (f64::NEG_INFINITY, f64::INFINITY);
    let mut lp = Problem::new(OptimizationDirection::Minimize);
    let theta = lp.add_var(1.0, free);
    let mut vars = Vec::with_capacity(m);
    for _ in 0..m {
        let a_over: Vec<_> = (0..n).map(|_| lp.add_var(0.0, free)).collect();
        let a_under: Vec<_> = (0..n).map(|_| lp.add_var(0.0, free)).collect();
        let e_over = lp.add_var(0.0, free);
        let e_under = lp.add_var(0.0, free);
        vars.push((a_over, a_under, e_over, e_under));
    }
    for (x, gx) in verts.iter().zip(&values) {
        for (i, (ao, au, eo, eu)) in vars.iter().enumerate() {
            // a_under x + e_under <= g(x) - sigma
            let mut lower: Vec<_> = au.iter().enumerate().map(|(j, v)| (*v, x[j])).collect();
            lower.push((*eu, 1.0));
            lp.add_constraint(lower.as_slice(), ComparisonOp::Le, gx[i] - sigma[i]);
            // a_over x + e_over >= g(x) + sigma
            let mut upper: Vec<_> = ao.iter().enumerate().map(|(j, v)| (*v, x[j])).collect();
            upper.push((*eo, 1.0));
            lp.add_constraint(upper.as_slice(), ComparisonOp::Ge, gx[i] + sigma[i]);
            // (a_over - a_under) x + e_over - e_under - theta <= 2 sigma
            let mut gap: Vec<_> = Vec::with_capacity(2 * n + 3);
            for j in 0..n {
                gap.push((ao[j], x[j]));
                gap.push((au[j], -x[j]));
            }
            gap.push((*eo, 1.0));
            gap.push((*eu, -1.0));
            gap.push((theta, -1.0));
            lp.add_constraint(gap.as_slice(), ComparisonOp::Le, 2.0 * sigma[i]);
        }
    }
    let sol = lp.solve().map_err(|e| Error::Lp(e.to_string()))?;

    let mut a_over = DMatrix::zeros(m, n);
    let mut a_under = DMatrix::zeros(m, n);
    for (i, (ao, au, _, _)) in vars.iter().enumerate() {
        for j in 0..n {
            a_over[(i, j)] = sol[ao[j]];
            a_under[(i, j)] = sol[au[j]];
        }
    }
    // Re-derive offsets and theta from the slopes so the vertex constraints
    // hold exactly rather than to the LP tolerance.
    let mut e_over = DVector::from_element(m, f64::NEG_INFINITY);
    let mut e_under = DVector::from_element(m, f64::INFINITY);
    for (x, gx) in verts.iter().zip(&values) {
        let ax_over = &a_over * x;
        let ax_under = &a_under * x;
        for i in 0..m {
            e_over[i] = e_over[i].max(gx[i] + sigma[i] - ax_over[i]);
            e_under[i] = e_under[i].min(gx[i] - sigma[i] - ax_under[i]);
        }
    }
    let mut th = 0.0f64;
    for x in &verts {
        let d = (&a_over - &a_under) * x + &e_over - &e_under - sigma * 2.0;
        th = d.iter().cloned().fold(th, f64::max);
    }
    if m == 0 {
        e_over = DVector::zeros(0);
        e_under = DVector::zeros(0);
    }

    let a_g = (&a_over + &a_under) * 0.5;
    let centre = (&e_over + &e_under) * 0.5;
    let half = sigma.map(|s| 0.5 * th + s);
    let eps = IntervalVector::new(&centre - &half, &centre + &half)?;
    Ok(AffineAbstraction {
        a_over,
        a_under,
        e_over,
        e_under,
        theta: th,
        sigma: sigma.clone(),
        a_g,
        eps,
        domain: b.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn scalar<F>(f: F, lo: f64, hi: f64) -> DifferentiableMap
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        DifferentiableMap::new(
            move |z| DVector::from_element(1, f(z[0])),
            DMatrix::from_element(1, 1, -1e3),
            DMatrix::from_element(1, 1, 1e3),
            IntervalVector::from_slices(&[lo], &[hi]).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn vertices_in_lexicographic_order() {
        let b = IntervalVector::from_slices(&[0.0, 0.0], &[1.0, 1.0]).unwrap();
        let v: Vec<Vec<f64>> = box_vertices(&b)
            .unwrap()
            .iter()
            .map(|x| x.iter().cloned().collect())
            .collect();
        assert_eq!(v, vec![vec![0.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0], vec![1.0, 1.0]]);
        let p = IntervalVector::point(DVector::from_column_slice(&[2.0, 3.0]));
        assert_eq!(box_vertices(&p).unwrap().len(), 1);
        assert_eq!(box_vertices(&IntervalVector::uniform(3, -1.0, 1.0).unwrap()).unwrap().len(), 8);
        assert!(matches!(
            box_vertices(&IntervalVector::uniform(21, 0.0, 1.0).unwrap()),
            Err(Error::TooManyVertices(21))
        ));
    }

    #[test]
    fn sigma_examples() {
        let b = IntervalVector::from_slices(&[-1.0], &[1.0]).unwrap();
        assert_eq!(sigma_bound(0.0, &b, 1).unwrap()[0], 0.0);
        assert_eq!(sigma_bound(2.0, &b, 1).unwrap()[0], 1.0);
        let p = IntervalVector::point(DVector::from_element(2, 0.3));
        assert_eq!(sigma_bound(5.0, &p, 2).unwrap(), DVector::zeros(2));
        assert!(sigma_bound(-1.0, &b, 1).is_err());
    }

    #[test]
    fn affine_map_is_fitted_exactly() {
        let g = scalar(|x| 2.0 * x + 1.0, 0.0, 1.0);
        let b = IntervalVector::from_slices(&[0.0], &[1.0]).unwrap();
        let a = affine_outer_approx(&g, &b, &DVector::zeros(1)).unwrap();
        assert!((a.a_g[(0, 0)] - 2.0).abs() < 1e-9);
        assert!((a.eps.lo()[0] - 1.0).abs() < 1e-9);
        assert!((a.eps.hi()[0] - 1.0).abs() < 1e-9);
        assert!(a.theta.abs() < 1e-9);
    }

    #[test]
    fn identity_has_zero_error() {
        let dom = IntervalVector::uniform(2, -3.0, 2.0).unwrap();
        let g = DifferentiableMap::affine(DMatrix::identity(2, 2), DVector::zeros(2), dom.clone()).unwrap();
        let a = affine_outer_approx(&g, &dom, &DVector::zeros(2)).unwrap();
        assert!((&a.a_g - DMatrix::identity(2, 2)).abs().max() < 1e-9);
        assert!(a.eps.lo().abs().max() < 1e-9 && a.eps.hi().abs().max() < 1e-9);
    }

    #[test]
    fn square_band_contains_samples() {
        let g = scalar(|x| x * x, -1.0, 1.0);
        let b = IntervalVector::from_slices(&[-1.0], &[1.0]).unwrap();
        let sigma = sigma_bound(2.0, &b, 1).unwrap();
        let a = affine_outer_approx(&g, &b, &sigma).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10_000 {
            let x: f64 = rng.random_range(-1.0..=1.0);
            let r = x * x - a.a_g[(0, 0)] * x;
            assert!(r >= a.eps.lo()[0] - 1e-9 && r <= a.eps.hi()[0] + 1e-9);
        }
        let w = a.eps.width()[0];
        assert!((w - (a.theta + 2.0 * sigma[0])).abs() < 1e-12);
    }
}
