//! Attack decoupling of a plant
//!
//! ```text
//! x+ = f(x) + W w + G d,    y = h(x) + V v + H d
//! ```
//!
//! The SVD `H = U1 Xi E1^T` splits the outputs into `z1 = T1 y`, which sees
//! the attack component `d1 = E1^T d` through `Xi`, and `z2 = T2 y`, which is
//! attack free. `d1` is then a function of the state and `z1`, and the
//! remaining component `d2 = E2^T d` is cancelled from the state equation by
//! projecting with `I - N C2`.

use nalgebra::{DMatrix, DVector};

use crate::abstraction::{affine_outer_approx, sigma_bound, AffineAbstraction};
use crate::decomposition::{jss_decompose, DifferentiableMap, HPolicy, JssForm};
use crate::error::{Error, Result};
use crate::interval::IntervalVector;
use crate::linalg::{chop, 
    condition_number, numerical_rank, orthonormal_complement, pinv, sorted_svd,
};

/// Default relative rank tolerance for SVD truncation and pseudoinverses.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;
/// Largest accepted condition number of the abstraction slope.
pub const MAX_SLOPE_CONDITION: f64 = 1e12;

#[derive(Debug, Clone)]
pub struct PlantModel {
    pub f: DifferentiableMap,
    pub h: DifferentiableMap,
    /// Process-noise input matrix `W` (n x n_w).
    pub w_mat: DMatrix<f64>,
    /// Measurement-noise matrix `V` (l x n_v).
    pub v_mat: DMatrix<f64>,
    /// Actuator attack matrix `G` (n x p).
    pub g_mat: DMatrix<f64>,
    /// Sensor attack matrix `H` (l x p).
    pub h_mat: DMatrix<f64>,
    pub noise_w: IntervalVector,
    pub noise_v: IntervalVector,
    pub x0: IntervalVector,
    pub state_space: IntervalVector,
}

impl PlantModel {
    pub fn n(&self) -> usize {
        self.f.outputs()
    }

    pub fn l(&self) -> usize {
        self.h.outputs()
    }

    pub fn p(&self) -> usize {
        self.g_mat.ncols()
    }

    /// Checks dimensions, bound ordering and finiteness.
    pub fn validate(&self) -> Result<()> {
        let (n, l, p) = (self.n(), self.l(), self.p());
        let checks: [(&'static str, usize, usize); 11] = [
            ("f inputs", n, self.f.inputs()),
            ("h inputs", n, self.h.inputs()),
            ("W rows", n, self.w_mat.nrows()),
            ("W columns vs w bounds", self.w_mat.ncols(), self.noise_w.dim()),
            ("V rows", l, self.v_mat.nrows()),
            ("V columns vs v bounds", self.v_mat.ncols(), self.noise_v.dim()),
            ("G rows", n, self.g_mat.nrows()),
            ("H rows", l, self.h_mat.nrows()),
            ("H columns", p, self.h_mat.ncols()),
            ("initial box", n, self.x0.dim()),
            ("state space", n, self.state_space.dim()),
        ];
        for (context, expected, got) in checks {
            if expected != got {
                return Err(Error::Dimension { context, expected, got });
            }
        }
        for (name, m) in [
            ("W", &self.w_mat),
            ("V", &self.v_mat),
            ("G", &self.g_mat),
            ("H", &self.h_mat),
        ] {
            if m.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} has non-finite entries")));
            }
        }
        for (name, b) in [
            ("w bounds", &self.noise_w),
            ("v bounds", &self.noise_v),
            ("initial box", &self.x0),
            ("state space", &self.state_space),
        ] {
            if !b.is_finite() {
                return Err(Error::InvalidArgument(format!("{name} must be finite")));
            }
        }
        Ok(())
    }
}

/// Output and attack splitting obtained from the SVD of `H`.
#[derive(Debug, Clone)]
pub struct AttackDecoupling {
    pub p_h: usize,
    pub u1: DMatrix<f64>,
    pub u2: DMatrix<f64>,
    pub e1: DMatrix<f64>,
    pub e2: DMatrix<f64>,
    pub xi: DMatrix<f64>,
    pub s: DMatrix<f64>,
    pub t1: DMatrix<f64>,
    pub t2: DMatrix<f64>,
}

/// Rank-revealing SVD split of the sensor attack matrix. Singular values at
/// or below `rank_tol` times the largest one are treated as zero. Each
/// column of `U1` is signed so its largest-magnitude entry is positive.
pub fn decompose_attack_matrix(h: &DMatrix<f64>, rank_tol: f64) -> Result<AttackDecoupling> {
    let (l, p) = h.shape();
    let svd = sorted_svd(h)?;
    let p_h = numerical_rank(&svd.singular_values, rank_tol);
    let mut u1 = chop(svd.u.columns(0, p_h).into_owned());
    let mut e1 = chop(svd.v.columns(0, p_h).into_owned());
    for j in 0..p_h {
        let col = u1.column(j);
        let k = col.iamax();
        if col[k] < 0.0 {
            u1.column_mut(j).neg_mut();
            e1.column_mut(j).neg_mut();
        }
    }
    let xi_diag = svd.singular_values.rows(0, p_h).into_owned();
    let u2 = chop(orthonormal_complement(&if p_h == 0 { DMatrix::zeros(l, 0) } else { u1.clone() }));
    let e2 = chop(orthonormal_complement(&if p_h == 0 { DMatrix::zeros(p, 0) } else { e1.clone() }));
    Ok(AttackDecoupling {
        p_h,
        t1: u1.transpose(),
        t2: u2.transpose(),
        s: DMatrix::from_diagonal(&xi_diag.map(|s| 1.0 / s)),
        xi: DMatrix::from_diagonal(&xi_diag),
        u1,
        u2,
        e1,
        e2,
    })
}

/// Knobs for [`transform_plant_with`].
#[derive(Debug, Clone)]
pub struct TransformOptions {
    pub rank_tol: f64,
    /// Slack of the abstraction LP; derived from the Hessian bound of `h`
    /// when absent.
    pub sigma: Option<DVector<f64>>,
    pub policy_h2: HPolicy,
    pub policy_f: HPolicy,
    pub policy_kappa: HPolicy,
}

impl Default for TransformOptions {
    fn default() -> Self {
        Self {
            rank_tol: DEFAULT_RANK_TOL,
            sigma: None,
            policy_h2: HPolicy::Upper,
            policy_f: HPolicy::Upper,
            policy_kappa: HPolicy::Upper,
        }
    }
}

/// Every matrix and decomposed map the observer and the synthesis need.
#[derive(Debug, Clone)]
pub struct TransformedPlant {
    pub plant: PlantModel,
    pub dec: AttackDecoupling,
    pub h1: DifferentiableMap,
    pub h2: DifferentiableMap,
    /// `h2(x) = C2 x + psi2(x)`.
    pub psi2: JssForm,
    pub c2: DMatrix<f64>,
    pub g1: DMatrix<f64>,
    pub g2: DMatrix<f64>,
    pub v1: DMatrix<f64>,
    pub v2: DMatrix<f64>,
    pub m2: DMatrix<f64>,
    pub n_mat: DMatrix<f64>,
    /// Abstraction of `g(x) = x + N psi2(x)`.
    pub g_abs: AffineAbstraction,
    pub lambda: DMatrix<f64>,
    /// `Lambda (I - N C2)`.
    pub lambda_proj: DMatrix<f64>,
    /// `f~(x) = Lambda (I - N C2)(f(x) - G1 S h1(x)) = A x + rho(x)`.
    pub f_tilde: JssForm,
    pub a: DMatrix<f64>,
    pub phi: DMatrix<f64>,
    pub a_v: DMatrix<f64>,
    pub a_z: DMatrix<f64>,
    /// `kappa(x) = (Phi G1 - E1) S h1(x) - Phi f(x)`.
    pub kappa: JssForm,
    pub w_hat: DMatrix<f64>,
}

impl TransformedPlant {
    pub fn n(&self) -> usize {
        self.plant.n()
    }

    pub fn l(&self) -> usize {
        self.plant.l()
    }

    pub fn p(&self) -> usize {
        self.plant.p()
    }

    pub fn p_h(&self) -> usize {
        self.dec.p_h
    }

    /// Number of attack-free outputs, `l - p_H`.
    pub fn m(&self) -> usize {
        self.c2.nrows()
    }

    /// `(T1 y, T2 y)`.
    pub fn split_measurement(&self, y: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        (&self.dec.t1 * y, &self.dec.t2 * y)
    }

    /// `d1 = S (z1 - h1(x) - V1 v)`.
    pub fn reconstruct_d1(&self, z1: &DVector<f64>, x: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        if self.p_h() == 0 {
            return DVector::zeros(0);
        }
        &self.dec.s * (z1 - self.h1.eval(x) - &self.v1 * v)
    }
}

/// [`transform_plant_with`] using default options and an optional abstraction slack.
pub fn transform_plant(plant: &PlantModel, sigma: Option<&DVector<f64>>) -> Result<TransformedPlant> {
    let opts = TransformOptions {
        sigma: sigma.cloned(),
        ..TransformOptions::default()
    };
    transform_plant_with(plant, &opts)
}

pub fn transform_plant_with(plant: &PlantModel, opts: &TransformOptions) -> Result<TransformedPlant> {
    plant.validate()?;
    let n = plant.n();
    let dec = decompose_attack_matrix(&plant.h_mat, opts.rank_tol)?;
    let h1 = DifferentiableMap::linear_combination(&[(dec.t1.clone(), &plant.h)])?;
    let h2 = DifferentiableMap::linear_combination(&[(dec.t2.clone(), &plant.h)])?;
    let psi2 = jss_decompose(&h2, &opts.policy_h2)?;
    if !psi2.is_sign_stable() {
        return Err(Error::InvalidArgument(
            "the remainder of h2 is not Jacobian sign-stable under the chosen policy".into(),
        ));
    }
    let c2 = psi2.h().clone();
    let g1 = chop(&plant.g_mat * &dec.e1);
    let g2 = chop(&plant.g_mat * &dec.e2);
    let v1 = chop(&dec.t1 * &plant.v_mat);
    let v2 = chop(&dec.t2 * &plant.v_mat);

    let c2g2 = &c2 * &g2;
    if c2g2.ncols() > 0 {
        let svd = sorted_svd(&c2g2)?;
        let rank = numerical_rank(&svd.singular_values, opts.rank_tol);
        if rank < c2g2.ncols() {
            return Err(Error::RankDeficient { rank, cols: c2g2.ncols() });
        }
    }
    let m2 = chop(pinv(&c2g2, opts.rank_tol)?);
    let n_mat = chop(&g2 * &m2);

    let g_abs = abstract_g(plant, &psi2, &n_mat, opts.sigma.as_ref())?;
    let cond = condition_number(&g_abs.a_g);
    if !(cond <= MAX_SLOPE_CONDITION) {
        return Err(Error::SingularSlope(cond));
    }
    let lambda = g_abs
        .a_g
        .clone()
        .try_inverse()
        .ok_or(Error::SingularSlope(f64::INFINITY))?;
    let lambda = chop(lambda);
    let lambda_proj = chop(&lambda * (DMatrix::identity(n, n) - &n_mat * &c2));

    let f_tilde_map = DifferentiableMap::linear_combination(&[
        (lambda_proj.clone(), &plant.f),
        (-(&lambda_proj * &g1 * &dec.s), &h1),
    ])?;
    let f_tilde = jss_decompose(&f_tilde_map, &opts.policy_f)?;
    let a = f_tilde.h().clone();

    let phi = chop(&dec.e2 * &m2 * &c2);
    let phi_g1_e1 = chop(&phi * &g1 - &dec.e1);
    let a_v = chop(&phi_g1_e1 * &dec.s * &v1);
    let a_z = chop(-(&phi_g1_e1 * &dec.s));
    let kappa_map = DifferentiableMap::linear_combination(&[
        (&phi_g1_e1 * &dec.s, &h1),
        (-&phi, &plant.f),
    ])?;
    let kappa = jss_decompose(&kappa_map, &opts.policy_kappa)?;
    let w_hat = chop(&lambda_proj * &plant.w_mat);

    Ok(TransformedPlant {
        plant: plant.clone(),
        dec,
        h1,
        h2,
        psi2,
        c2,
        g1,
        g2,
        v1,
        v2,
        m2,
        n_mat,
        g_abs,
        lambda,
        lambda_proj,
        f_tilde,
        a,
        phi,
        a_v,
        a_z,
        kappa,
        w_hat,
    })
}

/// Abstraction of `g(x) = x + N psi2(x)` over the state space. When `N psi2`
/// is constant the map is affine and the LP is skipped.
fn abstract_g(
    plant: &PlantModel,
    psi2: &JssForm,
    n_mat: &DMatrix<f64>,
    sigma: Option<&DVector<f64>>,
) -> Result<AffineAbstraction> {
    let n = plant.n();
    let dom = &plant.state_space;
    if psi2.remainder_is_constant() || n_mat.iter().all(|v| *v == 0.0) {
        let offset = if n_mat.ncols() == 0 {
            DVector::zeros(n)
        } else {
            n_mat * psi2.mu().eval(&dom.midpoint())
        };
        return Ok(AffineAbstraction::exact_affine(DMatrix::identity(n, n), offset, dom.clone()));
    }
    let id = DifferentiableMap::affine(DMatrix::identity(n, n), DVector::zeros(n), dom.clone())?;
    let g = DifferentiableMap::linear_combination(&[
        (DMatrix::identity(n, n), &id),
        (n_mat.clone(), psi2.mu()),
    ])?;
    let sigma = match sigma {
        Some(s) => s.clone(),
        None => {
            let bound = g.hessian_bound().ok_or_else(|| {
                Error::InvalidArgument(
                    "abstraction slack needs either an explicit sigma or a Hessian bound on h".into(),
                )
            })?;
            sigma_bound(bound, dom, n)?
        }
    };
    affine_outer_approx(&g, dom, &sigma)
}
