//! Small dense semidefinite programs in LMI form,
//!
//! ```text
//! minimise c^T y   subject to   F(y) = F0 + sum_i y_i F_i  >= 0,
//! ```
//!
//! where `F` is block diagonal with dense and diagonal blocks. Solved by an
//! infeasible-start primal-dual interior-point method with the HKM search
//! direction and Mehrotra predictor-corrector steps.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{Error, Result};

/// One block of a block-diagonal symmetric matrix.
#[derive(Debug, Clone, PartialEq)]
pub enum Block {
    Dense(DMatrix<f64>),
    /// A diagonal block stored as its diagonal.
    Diag(DVector<f64>),
}

impl Block {
    pub fn size(&self) -> usize {
        match self {
            Block::Dense(m) => m.nrows(),
            Block::Diag(d) => d.len(),
        }
    }

    fn zeros_like(&self) -> Block {
        match self {
            Block::Dense(m) => Block::Dense(DMatrix::zeros(m.nrows(), m.ncols())),
            Block::Diag(d) => Block::Diag(DVector::zeros(d.len())),
        }
    }

    fn identity_like(&self, scale: f64) -> Block {
        match self {
            Block::Dense(m) => Block::Dense(DMatrix::identity(m.nrows(), m.nrows()) * scale),
            Block::Diag(d) => Block::Diag(DVector::from_element(d.len(), scale)),
        }
    }

    fn is_zero(&self) -> bool {
        match self {
            Block::Dense(m) => m.iter().all(|v| *v == 0.0),
            Block::Diag(d) => d.iter().all(|v| *v == 0.0),
        }
    }

    fn inner(&self, other: &Block) -> f64 {
        match (self, other) {
            (Block::Dense(a), Block::Dense(b)) => a.dot(b),
            (Block::Diag(a), Block::Diag(b)) => a.dot(b),
            _ => unreachable!("block kinds differ"),
        }
    }

    fn norm_sq(&self) -> f64 {
        self.inner(self)
    }

    fn axpy(&mut self, alpha: f64, other: &Block) {
        match (self, other) {
            (Block::Dense(a), Block::Dense(b)) => *a += b * alpha,
            (Block::Diag(a), Block::Diag(b)) => *a += b * alpha,
            _ => unreachable!("block kinds differ"),
        }
    }

    /// Smallest eigenvalue.
    pub fn min_eigenvalue(&self) -> f64 {
        match self {
            Block::Dense(m) if m.nrows() > 0 => {
                SymmetricEigen::new((m + m.transpose()) * 0.5).eigenvalues.min()
            }
            Block::Diag(d) if !d.is_empty() => d.min(),
            _ => f64::INFINITY,
        }
    }
}

/// `F0 + sum_i y_i F_i >= 0`, minimise `c^T y`.
#[derive(Debug, Clone)]
pub struct LmiProblem {
    pub c: DVector<f64>,
    pub f0: Vec<Block>,
    /// `fi[i][b]` is the coefficient of `y_i` in block `b`.
    pub fi: Vec<Vec<Block>>,
}

impl LmiProblem {
    pub fn num_vars(&self) -> usize {
        self.c.len()
    }

    /// `F(y)` block by block.
    pub fn evaluate(&self, y: &DVector<f64>) -> Vec<Block> {
        let mut out = self.f0.clone();
        for (i, fi) in self.fi.iter().enumerate() {
            if y[i] != 0.0 {
                for (b, blk) in fi.iter().enumerate() {
                    out[b].axpy(y[i], blk);
                }
            }
        }
        out
    }

    fn validate(&self) -> Result<()> {
        if self.fi.len() != self.c.len() {
            return Err(Error::Solver("coefficient count differs from objective length".into()));
        }
        for fi in &self.fi {
            if fi.len() != self.f0.len()
                || fi.iter().zip(&self.f0).any(|(a, b)| {
                    a.size() != b.size() || std::mem::discriminant(a) != std::mem::discriminant(b)
                })
            {
                return Err(Error::Solver("coefficient block structure differs from F0".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SdpOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Fraction of the distance to the cone boundary taken per step.
    pub step_fraction: f64,
}

impl Default for SdpOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iter: 150,
            step_fraction: 0.98,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SdpStatus {
    Optimal,
    /// No `y` makes `F(y)` positive semidefinite.
    Infeasible,
    /// Iteration limit reached; the returned point is the best available.
    MaxIterations,
}

#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub y: DVector<f64>,
    pub status: SdpStatus,
    pub iterations: usize,
    pub objective: f64,
    pub gap: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
}

struct Workspace<'a> {
    // Standard form: max b^T y s.t. Z = C - sum y_i A_i >= 0, with C = F0,
    // A_i = -F_i, b = -c. The primal is min <C, X> s.t. <A_i, X> = b_i.
    c: &'a [Block],
    a: Vec<Vec<Block>>,
    nonzero: Vec<Vec<bool>>,
    b: DVector<f64>,
}

impl Workspace<'_> {
    fn op(&self, x: &[Block]) -> DVector<f64> {
        DVector::from_fn(self.a.len(), |i, _| {
            self.a[i]
                .iter()
                .zip(x)
                .enumerate()
                .filter(|(bi, _)| self.nonzero[i][*bi])
                .map(|(_, (a, x))| a.inner(x))
                .sum()
        })
    }

    fn op_adj(&self, y: &DVector<f64>) -> Vec<Block> {
        let mut out: Vec<Block> = self.c.iter().map(Block::zeros_like).collect();
        for (i, ai) in self.a.iter().enumerate() {
            if y[i] != 0.0 {
                for (bi, blk) in ai.iter().enumerate() {
                    if self.nonzero[i][bi] {
                        out[bi].axpy(y[i], blk);
                    }
                }
            }
        }
        out
    }
}

fn inner(x: &[Block], y: &[Block]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a.inner(b)).sum()
}

fn norm(x: &[Block]) -> f64 {
    x.iter().map(Block::norm_sq).sum::<f64>().sqrt()
}

fn total_size(x: &[Block]) -> usize {
    x.iter().map(Block::size).sum()
}

fn sub(x: &[Block], y: &[Block]) -> Vec<Block> {
    x.iter()
        .zip(y)
        .map(|(a, b)| {
            let mut r = a.clone();
            r.axpy(-1.0, b);
            r
        })
        .collect()
}

enum Factor {
    Dense(Cholesky<f64, Dyn>),
    Diag,
}

fn factor(x: &[Block]) -> Option<Vec<Factor>> {
    x.iter()
        .map(|b| match b {
            Block::Dense(m) => Cholesky::new(m.clone()).map(Factor::Dense),
            Block::Diag(d) => d.iter().all(|v| *v > 0.0).then_some(Factor::Diag),
        })
        .collect()
}

fn inverse(x: &[Block], f: &[Factor]) -> Vec<Block> {
    x.iter()
        .zip(f)
        .map(|(b, f)| match (b, f) {
            (Block::Dense(_), Factor::Dense(ch)) => {
                let inv = ch.inverse();
                Block::Dense((&inv + inv.transpose()) * 0.5)
            }
            (Block::Diag(d), Factor::Diag) => Block::Diag(d.map(|v| 1.0 / v)),
            _ => unreachable!(),
        })
        .collect()
}

/// Largest `alpha` with `X + alpha dX` positive semidefinite.
fn max_step(x: &[Block], fx: &[Factor], dx: &[Block]) -> f64 {
    let mut alpha = f64::INFINITY;
    for ((b, f), d) in x.iter().zip(fx).zip(dx) {
        match (b, f, d) {
            (Block::Dense(_), Factor::Dense(ch), Block::Dense(dm)) => {
                if dm.nrows() == 0 {
                    continue;
                }
                let l = ch.l();
                let linv = l
                    .clone()
                    .solve_lower_triangular(&DMatrix::identity(l.nrows(), l.nrows()))
                    .unwrap_or_else(|| DMatrix::zeros(l.nrows(), l.nrows()));
                let w = &linv * dm * linv.transpose();
                let lmin = SymmetricEigen::new((&w + w.transpose()) * 0.5).eigenvalues.min();
                if lmin < 0.0 {
                    alpha = alpha.min(-1.0 / lmin);
                }
            }
            (Block::Diag(xd), Factor::Diag, Block::Diag(dd)) => {
                for k in 0..xd.len() {
                    if dd[k] < 0.0 {
                        alpha = alpha.min(-xd[k] / dd[k]);
                    }
                }
            }
            _ => unreachable!(),
        }
    }
    alpha
}

/// Factor by which the primal residual may exceed the tolerance at convergence.
const PRIMAL_SLACK: f64 = 1e3;

/// Solves the LMI problem.
pub fn solve(problem: &LmiProblem, opts: &SdpOptions) -> Result<SdpSolution> {
    problem.validate()?;
    let m = problem.num_vars();
    let ws = Workspace {
        c: &problem.f0,
        a: problem
            .fi
            .iter()
            .map(|fi| {
                fi.iter().map(|b| scaled(b, -1.0)).collect()
            })
            .collect(),
        nonzero: problem
            .fi
            .iter()
            .map(|fi| fi.iter().map(|b| !b.is_zero()).collect())
            .collect(),
        b: -&problem.c,
    };
    let nn = total_size(&problem.f0) as f64;

    let b_norm = ws.b.norm();
    let c_norm = norm(ws.c);
    let a_norms: Vec<f64> = ws.a.iter().map(|ai| norm(ai)).collect();
    let xi = a_norms
        .iter()
        .zip(ws.b.iter())
        .map(|(an, bi)| (1.0 + bi.abs()) / (1.0 + an))
        .fold(nn.sqrt().max(10.0), f64::max);
    let zeta = a_norms
        .iter()
        .cloned()
        .fold(c_norm.max(nn.sqrt()).max(10.0), f64::max);
    let mut x: Vec<Block> = problem.f0.iter().map(|b| b.identity_like(xi)).collect();
    let mut z: Vec<Block> = problem.f0.iter().map(|b| b.identity_like(zeta)).collect();
    let mut y = DVector::zeros(m);
    let x0_norm = norm(&x);

    let mut status = SdpStatus::MaxIterations;
    let mut iterations = 0;
    let (mut gap, mut rp_rel, mut rd_rel) = (f64::INFINITY, f64::INFINITY, f64::INFINITY);
    for it in 0..opts.max_iter {
        iterations = it;
        let ax = ws.op(&x);
        let rp = &ws.b - &ax;
        let aty = ws.op_adj(&y);
        let rd = sub(&sub(ws.c, &z), &aty);
        let pobj = inner(ws.c, &x);
        let dobj = ws.b.dot(&y);
        gap = (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs());
        rp_rel = rp.norm() / (1.0 + b_norm);
        rd_rel = norm(&rd) / (1.0 + c_norm);
        let mu = inner(&x, &z) / nn;
        log::trace!("sdp it {it}: pobj {pobj:.6e} dobj {dobj:.6e} gap {gap:.2e} rp {rp_rel:.2e} rd {rd_rel:.2e} mu {mu:.2e}");
        // Only the dual iterate is returned, so the primal equality residual
        // is held to a looser tolerance; it stalls on ill-conditioned data.
        let near = |scale: f64| gap < scale * opts.tol && rd_rel < scale * opts.tol && rp_rel < PRIMAL_SLACK * scale * opts.tol;
        if near(1.0) {
            status = SdpStatus::Optimal;
            break;
        }
        // Certificate of LMI infeasibility: X >= 0, A(X) ~ 0, <C, X> < 0.
        if pobj < 0.0 && ax.norm() / (-pobj) < 1e-8 {
            status = SdpStatus::Infeasible;
            break;
        }
        if norm(&x) > 1e12 * x0_norm.max(1.0) {
            status = SdpStatus::Infeasible;
            break;
        }

        let (fx, fz) = match (factor(&x), factor(&z)) {
            (Some(fx), Some(fz)) => (fx, fz),
            _ if near(1e3) => {
                log::debug!("sdp: iterate lost definiteness at a near-optimal point after {it} iterations");
                status = SdpStatus::Optimal;
                break;
            }
            (None, _) => return Err(Error::Solver("primal iterate lost definiteness".into())),
            (_, None) => return Err(Error::Solver("dual iterate lost definiteness".into())),
        };
        let zinv = inverse(&z, &fz);

        // Schur complement M_ij = <A_i, X A_j Z^-1>.
        let mut xaz: Vec<Vec<Option<Block>>> = Vec::with_capacity(m);
        for j in 0..m {
            let row = (0..x.len())
                .map(|bi| {
                    if !ws.nonzero[j][bi] {
                        return None;
                    }
                    Some(match (&x[bi], &ws.a[j][bi], &zinv[bi]) {
                        (Block::Dense(xb), Block::Dense(ab), Block::Dense(zb)) => {
                            Block::Dense(xb * ab * zb)
                        }
                        (Block::Diag(xb), Block::Diag(ab), Block::Diag(zb)) => {
                            Block::Diag(xb.component_mul(ab).component_mul(zb))
                        }
                        _ => unreachable!(),
                    })
                })
                .collect();
            xaz.push(row);
        }
        let mut schur = DMatrix::zeros(m, m);
        for i in 0..m {
            for j in i..m {
                let mut s = 0.0;
                for (bi, xb) in xaz[j].iter().enumerate() {
                    if let (true, Some(g)) = (ws.nonzero[i][bi], xb) {
                        s += match (&ws.a[i][bi], g) {
                            (Block::Dense(a), Block::Dense(g)) => a.dot(&g.transpose()),
                            (Block::Diag(a), Block::Diag(g)) => a.dot(g),
                            _ => unreachable!(),
                        };
                    }
                }
                schur[(i, j)] = s;
                schur[(j, i)] = s;
            }
        }
        let schur_solver = SchurSolver::new(schur)?;

        let x_rd_zinv: Vec<Block> = mul3(&x, &rd, &zinv);
        let a_xrz = ws.op(&x_rd_zinv);
        let direction = |t: &[Block]| -> Result<(Vec<Block>, DVector<f64>, Vec<Block>)> {
            let rhs = &rp - ws.op(t) + &a_xrz;
            let dy = schur_solver.solve(&rhs)?;
            let dz = sub(&rd, &ws.op_adj(&dy));
            let xdz = mul3(&x, &dz, &zinv);
            let dx: Vec<Block> = sub(t, &xdz).into_iter().map(symmetrize).collect();
            Ok((dx, dy, dz))
        };

        // predictor
        let t_aff: Vec<Block> = x.iter().map(|b| scaled(b, -1.0)).collect();
        let (dx_a, _, dz_a) = direction(&t_aff)?;
        let ap = max_step(&x, &fx, &dx_a).min(1.0);
        let ad = max_step(&z, &fz, &dz_a).min(1.0);
        let x_aff = axpy_all(&x, ap, &dx_a);
        let z_aff = axpy_all(&z, ad, &dz_a);
        let mu_aff = inner(&x_aff, &z_aff) / nn;
        let sigma = (mu_aff / mu).max(0.0).powi(3).min(1.0);

        // corrector
        let corr = mul3(&dx_a, &dz_a, &zinv);
        let t: Vec<Block> = zinv
            .iter()
            .zip(&x)
            .zip(&corr)
            .map(|((zi, xb), cb)| {
                let mut r = scaled(zi, sigma * mu);
                r.axpy(-1.0, xb);
                r.axpy(-1.0, cb);
                r
            })
            .collect();
        let (dx, dy, dz) = direction(&t)?;
        let ap = (opts.step_fraction * max_step(&x, &fx, &dx)).min(1.0);
        let ad = (opts.step_fraction * max_step(&z, &fz, &dz)).min(1.0);
        x = axpy_all(&x, ap, &dx);
        y += &dy * ad;
        z = axpy_all(&z, ad, &dz);
        iterations = it + 1;
    }
    if status == SdpStatus::MaxIterations && gap < 1e3 * opts.tol && rp_rel < PRIMAL_SLACK * 1e3 * opts.tol && rd_rel < 1e3 * opts.tol {
        log::debug!("sdp: accepting near-optimal point after {iterations} iterations");
        status = SdpStatus::Optimal;
    }
    Ok(SdpSolution {
        objective: problem.c.dot(&y),
        y,
        status,
        iterations,
        gap,
        primal_residual: rp_rel,
        dual_residual: rd_rel,
    })
}

struct SchurSolver {
    chol: Option<Cholesky<f64, Dyn>>,
    lu: nalgebra::LU<f64, Dyn, Dyn>,
}

impl SchurSolver {
    fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::Solver("non-finite Schur complement".into()));
        }
        Ok(Self {
            chol: Cholesky::new(m.clone()),
            lu: m.lu(),
        })
    }

    fn solve(&self, rhs: &DVector<f64>) -> Result<DVector<f64>> {
        if let Some(ch) = &self.chol {
            return Ok(ch.solve(rhs));
        }
        self.lu
            .solve(rhs)
            .ok_or_else(|| Error::Solver("singular Schur complement".into()))
    }
}

fn scaled(b: &Block, s: f64) -> Block {
    match b {
        Block::Dense(m) => Block::Dense(m * s),
        Block::Diag(d) => Block::Diag(d * s),
    }
}

fn symmetrize(b: Block) -> Block {
    match b {
        Block::Dense(m) => Block::Dense((&m + m.transpose()) * 0.5),
        d => d,
    }
}

fn mul3(a: &[Block], b: &[Block], c: &[Block]) -> Vec<Block> {
    a.iter()
        .zip(b)
        .zip(c)
        .map(|((a, b), c)| match (a, b, c) {
            (Block::Dense(a), Block::Dense(b), Block::Dense(c)) => Block::Dense(a * b * c),
            (Block::Diag(a), Block::Diag(b), Block::Diag(c)) => {
                Block::Diag(a.component_mul(b).component_mul(c))
            }
            _ => unreachable!(),
        })
        .collect()
}

fn axpy_all(x: &[Block], alpha: f64, d: &[Block]) -> Vec<Block> {
    x.iter()
        .zip(d)
        .map(|(a, b)| {
            let mut r = a.clone();
            r.axpy(alpha, b);
            r
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense(rows: usize, v: &[f64]) -> Block {
        Block::Dense(DMatrix::from_row_slice(rows, rows, v))
    }

    #[test]
    fn linear_program_as_diagonal_lmi() {
        // min y0 + y1 s.t. y0 >= 1, y1 >= 2, y0 + y1 >= 4
        let p = LmiProblem {
            c: DVector::from_column_slice(&[1.0, 1.0]),
            f0: vec![Block::Diag(DVector::from_column_slice(&[-1.0, -2.0, -4.0]))],
            fi: vec![
                vec![Block::Diag(DVector::from_column_slice(&[1.0, 0.0, 1.0]))],
                vec![Block::Diag(DVector::from_column_slice(&[0.0, 1.0, 1.0]))],
            ],
        };
        let s = solve(&p, &SdpOptions::default()).unwrap();
        assert_eq!(s.status, SdpStatus::Optimal);
        assert!((s.objective - 4.0).abs() < 1e-7);
    }

    #[test]
    fn minimum_eigenvalue_problem() {
        // max t s.t. A - t I >= 0, i.e. min -t: optimum is lambda_min(A)
        let a = [2.0, 1.0, 0.0, 1.0, 3.0, 1.0, 0.0, 1.0, 4.0];
        let p = LmiProblem {
            c: DVector::from_element(1, -1.0),
            f0: vec![dense(3, &a)],
            fi: vec![vec![Block::Dense(-DMatrix::identity(3, 3))]],
        };
        let s = solve(&p, &SdpOptions::default()).unwrap();
        assert_eq!(s.status, SdpStatus::Optimal);
        let lmin = SymmetricEigen::new(DMatrix::from_row_slice(3, 3, &a)).eigenvalues.min();
        assert!((s.y[0] - lmin).abs() < 1e-7);
    }

    #[test]
    fn schur_complement_bound() {
        // min t s.t. [[t, 1], [1, 1]] >= 0 has optimum t = 1
        let p = LmiProblem {
            c: DVector::from_element(1, 1.0),
            f0: vec![dense(2, &[0.0, 1.0, 1.0, 1.0])],
            fi: vec![vec![dense(2, &[1.0, 0.0, 0.0, 0.0])]],
        };
        let s = solve(&p, &SdpOptions::default()).unwrap();
        assert_eq!(s.status, SdpStatus::Optimal);
        assert!((s.y[0] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn infeasible_lmi_is_reported() {
        // y >= 1 and -y >= 0 cannot both hold
        let p = LmiProblem {
            c: DVector::from_element(1, 0.0),
            f0: vec![Block::Diag(DVector::from_column_slice(&[-1.0, 0.0]))],
            fi: vec![vec![Block::Diag(DVector::from_column_slice(&[1.0, -1.0]))]],
        };
        let s = solve(&p, &SdpOptions::default()).unwrap();
        assert_eq!(s.status, SdpStatus::Infeasible);
    }

    #[test]
    fn mixed_blocks() {
        // min y s.t. [[y, 0.5], [0.5, y]] >= 0 and y >= 0.2: optimum 0.5
        let p = LmiProblem {
            c: DVector::from_element(1, 1.0),
            f0: vec![
                dense(2, &[0.0, 0.5, 0.5, 0.0]),
                Block::Diag(DVector::from_element(1, -0.2)),
            ],
            fi: vec![vec![
                Block::Dense(DMatrix::identity(2, 2)),
                Block::Diag(DVector::from_element(1, 1.0)),
            ]],
        };
        let s = solve(&p, &SdpOptions::default()).unwrap();
        assert_eq!(s.status, SdpStatus::Optimal);
        assert!((s.y[0] - 0.5).abs() < 1e-7);
    }
}
