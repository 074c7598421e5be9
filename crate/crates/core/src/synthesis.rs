//! Observer gain synthesis.
//!
//! The framer widths obey a nonlinear error recursion. Each [`Case`] bounds
//! it by a positive linear comparison system
//!
//! ```text
//! e+ <= (A~ - L C~) e + (B~ - L D~) w~,   w~ = [dv; dw; de],
//! ```
//!
//! valid as long as the gain satisfies the case's sign constraints. The gain
//! minimising the H-infinity norm of that system is found from a block LMI in
//! `(P, Gamma, eta)` with `L = P^-1 Gamma`.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::interval::abs;
use crate::linalg::{max_abs, min_eigenvalue, min_entry, spectral_radius};
use crate::sdp::{self, Block, LmiProblem, SdpOptions, SdpStatus};
use crate::transform::TransformedPlant;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Case {
    I,
    II,
    III,
}

impl Case {
    pub const ALL: [Case; 3] = [Case::I, Case::II, Case::III];

    pub fn from_index(i: u8) -> Option<Case> {
        match i {
            1 => Some(Case::I),
            2 => Some(Case::II),
            3 => Some(Case::III),
            _ => None,
        }
    }

    pub fn index(self) -> u8 {
        match self {
            Case::I => 1,
            Case::II => 2,
            Case::III => 3,
        }
    }
}

impl fmt::Display for Case {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Case::I => "I",
            Case::II => "II",
            Case::III => "III",
        })
    }
}

impl FromStr for Case {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "1" | "I" => Ok(Case::I),
            "2" | "II" => Ok(Case::II),
            "3" | "III" => Ok(Case::III),
            other => Err(Error::InvalidArgument(format!("unknown case `{other}`"))),
        }
    }
}

/// Coefficient matrices of the exact width recursion.
#[derive(Debug, Clone)]
pub struct ErrorDynamics {
    pub v_a: DMatrix<f64>,
    pub v_b: DMatrix<f64>,
    pub d_a: DMatrix<f64>,
    pub d_b: DMatrix<f64>,
}

pub fn error_dynamics_matrices(tp: &TransformedPlant) -> ErrorDynamics {
    let lambda_n_v2 = &tp.lambda * &tp.n_mat * &tp.v2;
    let m = tp.m();
    ErrorDynamics {
        v_a: &tp.a * &lambda_n_v2 + &tp.lambda_proj * &tp.g1 * &tp.dec.s * &tp.v1,
        v_b: (&tp.c2 * &tp.lambda * &tp.n_mat - DMatrix::identity(m, m)) * &tp.v2,
        d_a: &tp.a * &tp.lambda,
        d_b: &tp.c2 * &tp.lambda,
    }
}

#[derive(Debug, Clone)]
pub struct ComparisonSystem {
    pub case: Case,
    pub a_t: DMatrix<f64>,
    /// Columns ordered as `[dv; dw; de]`.
    pub b_t: DMatrix<f64>,
    pub c_t: DMatrix<f64>,
    pub d_t: DMatrix<f64>,
    /// `A` and `C2` of the transformed plant, used by the case constraints.
    pub a: DMatrix<f64>,
    pub c2: DMatrix<f64>,
    pub aux: ErrorDynamics,
}

impl ComparisonSystem {
    pub fn n(&self) -> usize {
        self.a_t.nrows()
    }

    pub fn m(&self) -> usize {
        self.c_t.nrows()
    }

    pub fn nw(&self) -> usize {
        self.b_t.ncols()
    }

    /// The matrices `(M1, M2)` of the case constraint `P M1 - Gamma M2 >= 0`
    /// (case II uses `Gamma M2 >= 0`, returned with an empty `M1`).
    fn constraint_factors(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        let aux = &self.aux;
        let n = self.n();
        match self.case {
            Case::I => (
                hcat(&[&self.a, &aux.v_a, &aux.d_a]),
                hcat(&[&self.c2, &aux.v_b, &aux.d_b]),
            ),
            Case::II => (
                DMatrix::zeros(n, 0),
                hcat(&[&self.c2, &aux.v_b, &aux.d_b]),
            ),
            Case::III => (self.a.clone(), self.c2.clone()),
        }
    }

    /// Value of the case constraint expression for a given `(P, Gamma)`.
    pub fn constraint_value(&self, p: &DMatrix<f64>, gamma: &DMatrix<f64>) -> DMatrix<f64> {
        let (m1, m2) = self.constraint_factors();
        match self.case {
            Case::II => gamma * m2,
            _ => p * m1 - gamma * m2,
        }
    }
}

fn hcat(ms: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let rows = ms[0].nrows();
    let cols: usize = ms.iter().map(|m| m.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut c = 0;
    for m in ms {
        out.columns_mut(c, m.ncols()).copy_from(*m);
        c += m.ncols();
    }
    out
}

pub fn build_comparison(tp: &TransformedPlant, case: Case) -> ComparisonSystem {
    let n = tp.n();
    let aux = error_dynamics_matrices(tp);
    let f_rho = tp.f_tilde.f_bar();
    let f_psi = tp.psi2.f_bar();
    let a = &tp.a;
    let c2 = &tp.c2;
    let id = DMatrix::<f64>::identity(n, n);
    let abs_lnv2 = abs(&(&tp.lambda * &tp.n_mat * &tp.v2));
    let abs_lambda = abs(&tp.lambda);
    let abs_w_hat = abs(&tp.w_hat);
    let zero_w = DMatrix::zeros(tp.m(), tp.w_hat.ncols());

    let (a_t, c_t, b_t, d_t) = match case {
        Case::I => (
            a + f_rho,
            c2 - f_psi,
            hcat(&[
                &(&aux.v_a + (&id - a) * &abs_lnv2),
                &abs_w_hat,
                &(&aux.d_a + (&id - a) * &abs_lambda),
            ]),
            hcat(&[
                &(&aux.v_b - c2 * &abs_lnv2),
                &zero_w,
                &(&aux.d_b - c2 * &abs_lambda),
            ]),
        ),
        Case::II => {
            let abs_a = abs(a);
            (
                &abs_a + f_rho,
                -c2 - f_psi,
                hcat(&[
                    &(abs(&aux.v_a) + (&id - &abs_a) * &abs_lnv2),
                    &abs_w_hat,
                    &((&id - &abs_a) * &abs_lambda + abs(&aux.d_a)),
                ]),
                hcat(&[
                    &(-&aux.v_b - c2 * &abs_lnv2),
                    &zero_w,
                    &(-&aux.d_b - c2 * &abs_lambda),
                ]),
            )
        }
        Case::III => {
            let g_term = abs(&(&tp.lambda_proj * &tp.g1 * &tp.dec.s * &tp.v1));
            (
                a + f_rho,
                c2 - f_psi,
                hcat(&[&(g_term + &abs_lnv2), &abs_w_hat, &abs_lambda]),
                hcat(&[
                    &(-abs(&tp.v2)),
                    &zero_w,
                    &DMatrix::zeros(tp.m(), n),
                ]),
            )
        }
    };
    ComparisonSystem {
        case,
        a_t,
        b_t,
        c_t,
        d_t,
        a: a.clone(),
        c2: c2.clone(),
        aux,
    }
}

#[derive(Debug, Clone)]
pub struct SynthesisOptions {
    /// Margin turning the strict LMI into `LMI - mu_s I >= 0`.
    pub mu_s: f64,
    /// Tolerance on the off-diagonal entries of `P` in the certificate.
    pub metzler_tol: f64,
    /// Upper bound on the diagonal of `P`; keeps the problem bounded when
    /// the comparison system is disturbance free.
    pub p_max: f64,
    pub sdp: SdpOptions,
}

impl Default for SynthesisOptions {
    fn default() -> Self {
        Self {
            mu_s: 1e-6,
            metzler_tol: 1e-12,
            p_max: 1e6,
            sdp: SdpOptions::default(),
        }
    }
}

/// Independent audit of a synthesis certificate.
#[derive(Debug, Clone, Default)]
pub struct VerificationReport {
    pub lmi_min_eig: f64,
    /// Largest off-diagonal entry of `P`; `-P` is Metzler when this is `<= 0`.
    pub p_max_offdiag: f64,
    pub p_min_eig: f64,
    pub gamma_min: f64,
    pub constraint_min: f64,
    pub pl_gamma_residual: f64,
    pub p_inv_min: f64,
    /// Spectral radius of `A~ - L C~`.
    pub spectral_radius: f64,
    pub pass: bool,
}

#[derive(Debug, Clone)]
pub struct SynthesisResult {
    pub case: Case,
    pub p: DMatrix<f64>,
    pub gamma: DMatrix<f64>,
    pub eta: f64,
    pub l: DMatrix<f64>,
    pub report: VerificationReport,
    pub iterations: usize,
}

/// Index bookkeeping for the decision vector `[svec(P); vec(Gamma); eta]`.
struct Layout {
    n: usize,
    m: usize,
}

#[derive(Clone, Copy, PartialEq)]
enum Sign {
    Nonneg,
    Nonpos,
    Free,
}

impl Layout {
    fn len(&self) -> usize {
        self.n * (self.n + 1) / 2 + self.n * self.m + 1
    }

    fn p_index(&self, i: usize, j: usize) -> usize {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        // row-major upper triangle
        i * self.n - i * (i + 1) / 2 + j
    }

    fn gamma_index(&self, i: usize, j: usize) -> usize {
        self.n * (self.n + 1) / 2 + i * self.m + j
    }

    fn eta_index(&self) -> usize {
        self.len() - 1
    }

    fn unpack(&self, y: &DVector<f64>) -> (DMatrix<f64>, DMatrix<f64>, f64) {
        let p = DMatrix::from_fn(self.n, self.n, |i, j| y[self.p_index(i, j)]);
        let g = DMatrix::from_fn(self.n, self.m, |i, j| y[self.gamma_index(i, j)]);
        (p, g, y[self.eta_index()])
    }

    fn sign(&self, k: usize) -> Sign {
        if k == self.eta_index() {
            return Sign::Nonneg;
        }
        if k >= self.n * (self.n + 1) / 2 {
            return Sign::Nonneg;
        }
        for i in 0..self.n {
            for j in i..self.n {
                if self.p_index(i, j) == k {
                    return if i == j { Sign::Nonneg } else { Sign::Nonpos };
                }
            }
        }
        Sign::Free
    }
}

/// The assembled LMI as an affine function of `(P, Gamma, eta)`: the dense
/// bounded-real block and the vector of scalar inequalities.
fn assemble(
    cs: &ComparisonSystem,
    opts: &SynthesisOptions,
    p: &DMatrix<f64>,
    gamma: &DMatrix<f64>,
    eta: f64,
    constant: bool,
) -> (DMatrix<f64>, DVector<f64>) {
    let n = cs.n();
    let nw = cs.nw();
    let size = 3 * n + nw;
    let mut lmi = DMatrix::zeros(size, size);
    let top = p * &cs.a_t - gamma * &cs.c_t;
    let dist = p * &cs.b_t - gamma * &cs.d_t;
    lmi.view_mut((0, 0), (n, n)).copy_from(p);
    lmi.view_mut((0, n), (n, n)).copy_from(&top);
    lmi.view_mut((n, 0), (n, n)).copy_from(&top.transpose());
    lmi.view_mut((0, 2 * n), (n, nw)).copy_from(&dist);
    lmi.view_mut((2 * n, 0), (nw, n)).copy_from(&dist.transpose());
    lmi.view_mut((n, n), (n, n)).copy_from(p);
    for k in 0..nw + n {
        lmi[(2 * n + k, 2 * n + k)] = eta;
    }
    if constant {
        for k in 0..n {
            lmi[(n + k, 2 * n + nw + k)] = 1.0;
            lmi[(2 * n + nw + k, n + k)] = 1.0;
        }
        for k in 0..size {
            lmi[(k, k)] -= opts.mu_s;
        }
    }

    let mut diag = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            diag.push(-p[(i, j)]);
        }
    }
    diag.extend(gamma.iter().copied());
    diag.extend(cs.constraint_value(p, gamma).iter().copied());
    for i in 0..n {
        diag.push(if constant { opts.p_max } else { 0.0 } - p[(i, i)]);
    }
    (lmi, DVector::from_vec(diag))
}

fn unit(layout: &Layout, k: usize) -> (DMatrix<f64>, DMatrix<f64>, f64) {
    let mut y = DVector::zeros(layout.len());
    y[k] = 1.0;
    layout.unpack(&y)
}

/// Solves the LMI for the comparison system and certifies the result.
pub fn synthesize_gain(cs: &ComparisonSystem, opts: &SynthesisOptions) -> Result<SynthesisResult> {
    let n = cs.n();
    let m = cs.m();
    let layout = Layout { n, m };
    let nv = layout.len();

    let zero_p = DMatrix::zeros(n, n);
    let zero_g = DMatrix::zeros(n, m);
    let (f0_dense, f0_diag) = assemble(cs, opts, &zero_p, &zero_g, 0.0, true);
    let coeffs: Vec<(DMatrix<f64>, DVector<f64>)> = (0..nv)
        .map(|k| {
            let (p, g, e) = unit(&layout, k);
            assemble(cs, opts, &p, &g, e, false)
        })
        .collect();

    // Presolve: a scalar row whose constant is zero and whose every term is
    // nonpositive under the known variable signs pins those variables to 0.
    let signs: Vec<Sign> = (0..nv).map(|k| layout.sign(k)).collect();
    let mut fixed = vec![false; nv];
    loop {
        let mut changed = false;
        for r in 0..f0_diag.len() {
            let a0 = f0_diag[r];
            let terms: Vec<usize> = (0..nv)
                .filter(|&k| !fixed[k] && coeffs[k].1[r] != 0.0)
                .collect();
            if terms.is_empty() {
                if a0 < 0.0 {
                    return Err(Error::Infeasible { case: cs.case });
                }
                continue;
            }
            let all_nonpositive = terms.iter().all(|&k| {
                let a = coeffs[k].1[r];
                (a > 0.0 && signs[k] == Sign::Nonpos) || (a < 0.0 && signs[k] == Sign::Nonneg)
            });
            if all_nonpositive && a0 <= 0.0 {
                if a0 < 0.0 {
                    return Err(Error::Infeasible { case: cs.case });
                }
                for k in terms {
                    fixed[k] = true;
                }
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    if fixed[layout.eta_index()] || (0..n).any(|i| fixed[layout.p_index(i, i)]) {
        return Err(Error::Infeasible { case: cs.case });
    }
    let free: Vec<usize> = (0..nv).filter(|&k| !fixed[k]).collect();
    let rows: Vec<usize> = (0..f0_diag.len())
        .filter(|&r| free.iter().any(|&k| coeffs[k].1[r] != 0.0))
        .collect();
    log::debug!(
        "synthesis case {}: {} of {} variables free, {} scalar rows",
        cs.case,
        free.len(),
        nv,
        rows.len()
    );
    let pick = |d: &DVector<f64>| DVector::from_iterator(rows.len(), rows.iter().map(|&r| d[r]));
    let mut c = DVector::zeros(free.len());
    let mut fi = Vec::with_capacity(free.len());
    for (idx, &k) in free.iter().enumerate() {
        if k == layout.eta_index() {
            c[idx] = 1.0;
        }
        fi.push(vec![Block::Dense(coeffs[k].0.clone()), Block::Diag(pick(&coeffs[k].1))]);
    }
    let problem = LmiProblem {
        c,
        f0: vec![Block::Dense(f0_dense), Block::Diag(pick(&f0_diag))],
        fi,
    };
    let sol = sdp::solve(&problem, &opts.sdp)?;
    match sol.status {
        SdpStatus::Optimal => {}
        SdpStatus::Infeasible => return Err(Error::Infeasible { case: cs.case }),
        SdpStatus::MaxIterations => {
            return Err(Error::Solver(format!(
                "no convergence after {} iterations (gap {:.2e}, residuals {:.2e} / {:.2e})",
                sol.iterations, sol.gap, sol.primal_residual, sol.dual_residual
            )))
        }
    }
    let mut y = DVector::zeros(nv);
    for (idx, &k) in free.iter().enumerate() {
        y[k] = sol.y[idx];
    }
    let (mut p, mut gamma, eta) = layout.unpack(&y);
    // Remove round-off sign violations left by the interior-point tolerance.
    for v in gamma.iter_mut() {
        if *v < 0.0 && *v > -1e-9 {
            *v = 0.0;
        }
    }
    for i in 0..n {
        for j in 0..n {
            if i != j && p[(i, j)] > 0.0 && p[(i, j)] < 1e-9 {
                p[(i, j)] = 0.0;
            }
        }
    }
    let l = p
        .clone()
        .cholesky()
        .map(|ch| ch.solve(&gamma))
        .or_else(|| p.clone().lu().solve(&gamma))
        .ok_or_else(|| Error::Solver("returned P is singular".into()))?;
    let mut res = SynthesisResult {
        case: cs.case,
        p,
        gamma,
        eta,
        l,
        report: empty_report(),
        iterations: sol.iterations,
    };
    res.report = verify_synthesis_with(&res, cs, opts);
    if !res.report.pass {
        return Err(Error::Solver(format!(
            "solution failed certificate audit: {:?}",
            res.report
        )));
    }
    Ok(res)
}

fn empty_report() -> VerificationReport {
    VerificationReport {
        lmi_min_eig: f64::NAN,
        p_max_offdiag: f64::NAN,
        p_min_eig: f64::NAN,
        gamma_min: f64::NAN,
        constraint_min: f64::NAN,
        pl_gamma_residual: f64::NAN,
        p_inv_min: f64::NAN,
        spectral_radius: f64::NAN,
        pass: false,
    }
}

/// Recomputes every certificate condition from the raw `(P, Gamma, eta, L)`.
pub fn verify_synthesis(res: &SynthesisResult, cs: &ComparisonSystem) -> VerificationReport {
    verify_synthesis_with(res, cs, &SynthesisOptions::default())
}

pub fn verify_synthesis_with(
    res: &SynthesisResult,
    cs: &ComparisonSystem,
    opts: &SynthesisOptions,
) -> VerificationReport {
    let n = cs.n();
    let no_margin = SynthesisOptions {
        mu_s: 0.0,
        ..opts.clone()
    };
    let (lmi, _) = assemble(cs, &no_margin, &res.p, &res.gamma, res.eta, true);
    let lmi_min_eig = min_eigenvalue(&lmi);
    let mut p_max_offdiag = f64::NEG_INFINITY;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                p_max_offdiag = p_max_offdiag.max(res.p[(i, j)]);
            }
        }
    }
    if n < 2 {
        p_max_offdiag = 0.0;
    }
    let gamma_min = if res.gamma.is_empty() { 0.0 } else { min_entry(&res.gamma) };
    let cons = cs.constraint_value(&res.p, &res.gamma);
    let constraint_min = if cons.is_empty() { 0.0 } else { min_entry(&cons) };
    let pl_gamma_residual = max_abs(&(&res.p * &res.l - &res.gamma));
    let p_inv_min = res
        .p
        .clone()
        .try_inverse()
        .map(|pi| min_entry(&pi))
        .unwrap_or(f64::NEG_INFINITY);
    let closed = &cs.a_t - &res.l * &cs.c_t;
    let report = VerificationReport {
        lmi_min_eig,
        p_max_offdiag,
        p_min_eig: min_eigenvalue(&res.p),
        gamma_min,
        constraint_min,
        pl_gamma_residual,
        p_inv_min,
        spectral_radius: spectral_radius(&closed),
        pass: false,
    };
    VerificationReport {
        pass: report.lmi_min_eig > 0.0
            && report.p_min_eig > 0.0
            && report.p_max_offdiag <= opts.metzler_tol
            && report.gamma_min >= -1e-9
            && report.constraint_min >= -1e-9
            && report.pl_gamma_residual <= 1e-8
            && res.eta > 0.0,
        ..report
    }
}

/// `e_{k+1} = (A~ - L C~) e_k + (B~ - L D~) w~` for `steps` steps, `e_0` included.
pub fn comparison_trajectory(
    cs: &ComparisonSystem,
    l: &DMatrix<f64>,
    e0: &DVector<f64>,
    w_tilde: &DVector<f64>,
    steps: usize,
) -> Vec<DVector<f64>> {
    let a = &cs.a_t - l * &cs.c_t;
    let drive = (&cs.b_t - l * &cs.d_t) * w_tilde;
    let mut out = Vec::with_capacity(steps + 1);
    out.push(e0.clone());
    for k in 0..steps {
        let next = &a * &out[k] + &drive;
        out.push(next);
    }
    out
}

/// Stacked noise-width vector `[dv; dw; de]` of the transformed plant.
pub fn noise_widths(tp: &TransformedPlant) -> DVector<f64> {
    let dv = tp.plant.noise_v.width();
    let dw = tp.plant.noise_w.width();
    let de = tp.g_abs.eps.width();
    let mut out = DVector::zeros(dv.len() + dw.len() + de.len());
    out.rows_mut(0, dv.len()).copy_from(&dv);
    out.rows_mut(dv.len(), dw.len()).copy_from(&dw);
    out.rows_mut(dv.len() + dw.len(), de.len()).copy_from(&de);
    out
}

/// Plain-text synthesis report with 12 significant digits.
pub fn format_report(res: &SynthesisResult) -> String {
    let r = &res.report;
    let mut s = String::new();
    s.push_str(&format!("case {}\n", res.case));
    s.push_str(&format!("eta {}\n", sig(res.eta)));
    s.push_str(&format!("status {}\n", if r.pass { "PASS" } else { "FAIL" }));
    s.push_str(&format!("lmi_min_eig {}\n", sig(r.lmi_min_eig)));
    s.push_str(&format!("p_max_offdiag {}\n", sig(r.p_max_offdiag)));
    s.push_str(&format!("p_min_eig {}\n", sig(r.p_min_eig)));
    s.push_str(&format!("gamma_min {}\n", sig(r.gamma_min)));
    s.push_str(&format!("constraint_min {}\n", sig(r.constraint_min)));
    s.push_str(&format!("pl_gamma_residual {}\n", sig(r.pl_gamma_residual)));
    s.push_str(&format!("p_inv_min {}\n", sig(r.p_inv_min)));
    s.push_str(&format!("spectral_radius {}\n", sig(r.spectral_radius)));
    s.push_str(&format!("L {} {}\n", res.l.nrows(), res.l.ncols()));
    for i in 0..res.l.nrows() {
        let row: Vec<String> = (0..res.l.ncols()).map(|j| sig(res.l[(i, j)])).collect();
        s.push_str(&row.join(" "));
        s.push('\n');
    }
    s
}

fn sig(v: f64) -> String {
    format!("{v:.11e}")
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Scalar comparison system with the given data, case III constraint
    /// `P A - Gamma C2 >= 0` with `A = a`, `C2 = 1`.
    pub(crate) fn scalar_system(a: f64, b: f64) -> ComparisonSystem {
        let one = DMatrix::from_element(1, 1, 1.0);
        ComparisonSystem {
            case: Case::III,
            a_t: DMatrix::from_element(1, 1, a),
            b_t: DMatrix::from_element(1, 1, b),
            c_t: one.clone(),
            d_t: DMatrix::zeros(1, 1),
            a: DMatrix::from_element(1, 1, a),
            c2: one,
            aux: ErrorDynamics {
                v_a: DMatrix::zeros(1, 1),
                v_b: DMatrix::zeros(1, 1),
                d_a: DMatrix::zeros(1, 1),
                d_b: DMatrix::zeros(1, 1),
            },
        }
    }

    /// Grid search of `b / (1 - |a - L|)` over `L in [0, a]`.
    fn grid_oracle(a: f64, b: f64) -> (f64, f64) {
        (0..=100_000)
            .map(|k| {
                let l = a * k as f64 / 100_000.0;
                (l, b / (1.0 - (a - l).abs()))
            })
            .fold((f64::NAN, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc })
    }

    #[test]
    fn scalar_toy_matches_grid_oracle() {
        let (l_star, eta_star) = grid_oracle(0.5, 1.0);
        assert!((eta_star - 1.0).abs() < 1e-12 && (l_star - 0.5).abs() < 1e-12);
        let res = synthesize_gain(&scalar_system(0.5, 1.0), &SynthesisOptions::default()).unwrap();
        assert!((res.eta - eta_star).abs() < 1e-3, "eta = {}", res.eta);
        assert!((res.l[(0, 0)] - l_star).abs() < 1e-2, "L = {}", res.l);
        assert!(res.report.pass);
    }

    #[test]
    fn eta_grows_with_disturbance_gain() {
        let opts = SynthesisOptions::default();
        let mut last = 0.0;
        for b in [0.5, 1.0, 2.0, 4.0] {
            let res = synthesize_gain(&scalar_system(0.5, b), &opts).unwrap();
            assert!(res.eta >= last - 1e-6);
            assert!((res.eta - grid_oracle(0.5, b).1).abs() < 1e-3 * b.max(1.0));
            last = res.eta;
        }
    }

    #[test]
    fn disturbance_free_system_is_bounded() {
        let res = synthesize_gain(&scalar_system(0.5, 0.0), &SynthesisOptions::default()).unwrap();
        assert!(res.eta < 1e-2);
        assert!(res.report.spectral_radius < 1.0);
    }

    #[test]
    fn unmeasured_unstable_state_is_infeasible() {
        let mut cs = scalar_system(1.5, 1.0);
        cs.c_t = DMatrix::zeros(1, 1);
        cs.c2 = DMatrix::zeros(1, 1);
        let r = synthesize_gain(&cs, &SynthesisOptions::default());
        assert!(matches!(r, Err(Error::Infeasible { case: Case::III })), "{r:?}");
    }

    #[test]
    fn audit_flags_bad_certificates() {
        let cs = ComparisonSystem {
            c_t: DMatrix::zeros(1, 1),
            c2: DMatrix::zeros(1, 1),
            ..scalar_system(0.1, 1.0)
        };
        let good = SynthesisResult {
            case: Case::III,
            p: DMatrix::identity(1, 1) * 2.0,
            gamma: DMatrix::zeros(1, 1),
            eta: 10.0,
            l: DMatrix::zeros(1, 1),
            report: empty_report(),
            iterations: 0,
        };
        assert!(verify_synthesis(&good, &cs).pass);
        let neg_gamma = SynthesisResult {
            gamma: DMatrix::from_element(1, 1, -0.1),
            l: DMatrix::from_element(1, 1, -0.05),
            ..good.clone()
        };
        assert!(!verify_synthesis(&neg_gamma, &cs).pass);

        let cs2 = ComparisonSystem {
            a_t: DMatrix::identity(2, 2) * 0.1,
            b_t: DMatrix::identity(2, 2),
            c_t: DMatrix::zeros(0, 2),
            d_t: DMatrix::zeros(0, 2),
            a: DMatrix::identity(2, 2) * 0.1,
            c2: DMatrix::zeros(0, 2),
            ..cs.clone()
        };
        let offdiag = SynthesisResult {
            p: DMatrix::from_row_slice(2, 2, &[2.0, 0.1, 0.1, 2.0]),
            gamma: DMatrix::zeros(2, 0),
            l: DMatrix::zeros(2, 0),
            ..good
        };
        let r = verify_synthesis(&offdiag, &cs2);
        assert!(r.lmi_min_eig > 0.0);
        assert!(!r.pass);
    }

    #[test]
    fn comparison_trajectory_limits() {
        let cs = scalar_system(0.5, 1.0);
        let l = DMatrix::from_element(1, 1, 0.2);
        let e0 = DVector::from_element(1, 3.0);
        let w = DVector::from_element(1, 0.0);
        let t = comparison_trajectory(&cs, &l, &e0, &w, 0);
        assert_eq!(t, vec![e0.clone()]);
        let t = comparison_trajectory(&cs, &l, &e0, &w, 60);
        assert!((t[60][0] - 3.0 * 0.3f64.powi(60)).abs() < 1e-15);
        let t = comparison_trajectory(&cs, &l, &DVector::zeros(1), &DVector::from_element(1, 2.0), 200);
        // geometric series limit (1 - 0.3)^-1 * 2
        assert!((t[200][0] - 2.0 / 0.7).abs() < 1e-12);
    }

    #[test]
    fn case_parsing() {
        assert_eq!("3".parse::<Case>().unwrap(), Case::III);
        assert_eq!("ii".parse::<Case>().unwrap(), Case::II);
        assert!("4".parse::<Case>().is_err());
        assert_eq!(Case::from_index(1), Some(Case::I));
        assert_eq!(Case::II.to_string(), "II");
    }
}
