//! The resilient interval framer recursion.
//!
//! Per time step `k` the observer
//!
//! 1. recovers the state framers `x_k` from the auxiliary framers `gamma_k`
//!    and the attack-free measurement `z2_k`,
//! 2. reconstructs the input framers for `d_{k-1}` from `x_k`, `x_{k-1}` and
//!    `z1_{k-1}`,
//! 3. propagates `gamma_{k+1}` from `gamma_k`, `x_k` and both measurements.
//!
//! Decomposition functions are only valid on the state space, so they are
//! evaluated on `x_k` clamped to it.

use std::io::Write;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::interval::{split_unchecked, IntervalVector, MatrixSplit, DEFAULT_TOL};
use crate::transform::TransformedPlant;

/// Gain-dependent matrices of the recursion with their sign splits and the
/// constant noise offsets.
#[derive(Debug, Clone)]
pub struct ObserverGains {
    pub l: DMatrix<f64>,
    pub v_hat: DMatrix<f64>,
    pub w_hat: DMatrix<f64>,
    pub d: DMatrix<f64>,
    a_lc: MatrixSplit,
    neg_l: MatrixSplit,
    phi: MatrixSplit,
    lambda_n: DMatrix<f64>,
    z1_coef: DMatrix<f64>,
    z2_coef: DMatrix<f64>,
    x_off: IntervalVector,
    gamma_off: IntervalVector,
    d_off: IntervalVector,
}

impl ObserverGains {
    pub fn new(tp: &TransformedPlant, l: &DMatrix<f64>) -> Result<Self> {
        let (n, m) = (tp.n(), tp.m());
        if l.shape() != (n, m) {
            return Err(Error::Dimension {
                context: "observer gain",
                expected: n * m,
                got: l.len(),
            });
        }
        if l.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("observer gain"));
        }
        let a_lc = &tp.a - l * &tp.c2;
        let lambda_n = &tp.lambda * &tp.n_mat;
        let lambda_n_v2 = &lambda_n * &tp.v2;
        let v_hat = &a_lc * &lambda_n_v2 + l * &tp.v2 + &tp.lambda_proj * &tp.g1 * &tp.dec.s * &tp.v1;
        let d = &a_lc * &tp.lambda;
        let w_hat = tp.w_hat.clone();
        let eps = &tp.g_abs.eps;
        let (v, w) = (&tp.plant.noise_v, &tp.plant.noise_w);

        let x_off = sum_bounds(&[(-&tp.lambda, eps), (-&lambda_n_v2, v)]);
        let gamma_off = sum_bounds(&[(-&v_hat, v), (w_hat.clone(), w), (-&d, eps)]);
        let d_off = sum_bounds(&[(tp.a_v.clone(), v), (-(&tp.phi * &tp.plant.w_mat), w)]);

        Ok(Self {
            l: l.clone(),
            z1_coef: &tp.lambda_proj * &tp.g1 * &tp.dec.s,
            z2_coef: l + &a_lc * &lambda_n,
            a_lc: split_unchecked(&a_lc),
            neg_l: split_unchecked(&-l),
            phi: split_unchecked(&tp.phi),
            lambda_n,
            v_hat,
            w_hat,
            d,
            x_off,
            gamma_off,
            d_off,
        })
    }

    /// `A - L C2`.
    pub fn a_lc(&self) -> DMatrix<f64> {
        self.a_lc.matrix()
    }
}

/// Sum of the tight boxes of `M_i z_i` over `z_i` in the given intervals.
fn sum_bounds(terms: &[(DMatrix<f64>, &IntervalVector)]) -> IntervalVector {
    let rows = terms[0].0.nrows();
    let mut lo = DVector::zeros(rows);
    let mut hi = DVector::zeros(rows);
    for (m, b) in terms {
        if m.ncols() == 0 {
            continue;
        }
        let s = split_unchecked(m);
        lo += s.lower(b.lo(), b.hi());
        hi += s.upper(b.lo(), b.hi());
    }
    IntervalVector::new_unchecked(lo, hi)
}

#[derive(Debug, Clone)]
pub struct ObserverOptions {
    /// Escape margin as a fraction of the state-space width per component.
    pub escape_margin: f64,
}

impl Default for ObserverOptions {
    fn default() -> Self {
        Self { escape_margin: 0.1 }
    }
}

#[derive(Debug, Clone)]
pub struct FramerState {
    pub k: usize,
    pub gamma: IntervalVector,
    pub x: IntervalVector,
    /// State framers of the previous step, used for input reconstruction.
    pub x_prev: Option<IntervalVector>,
    pub z1_prev: Option<DVector<f64>>,
}

/// What one call to [`step`] produced.
#[derive(Debug, Clone)]
pub struct StepOutput {
    pub k: usize,
    pub x: IntervalVector,
    /// Framers of `d_{k-1}`; absent at `k = 0`.
    pub d: Option<IntervalVector>,
    /// Realised gap `rho_d(hi, lo) - rho_d(lo, hi)` on the clamped box.
    pub rho_gap: DVector<f64>,
    /// Realised gap of the `psi2` decomposition function.
    pub psi2_gap: DVector<f64>,
    /// Whether the state framers had to be clamped to the state space.
    pub clamped: bool,
}

/// `gamma_0` framers from the initial state box.
pub fn init(tp: &TransformedPlant, _gains: &ObserverGains, x0: &IntervalVector) -> FramerState {
    FramerState {
        k: 0,
        gamma: split_unchecked(&tp.lambda_proj).bound(x0),
        x: x0.clone(),
        x_prev: None,
        z1_prev: None,
    }
}

/// Clamps a framer into the state space. Fails when the framer is disjoint
/// from the state space inflated by the escape margin.
fn clamp_to_domain(
    tp: &TransformedPlant,
    x: &IntervalVector,
    k: usize,
    opts: &ObserverOptions,
) -> Result<(IntervalVector, bool)> {
    let dom = &tp.plant.state_space;
    let n = x.dim();
    let mut lo = x.lo().clone();
    let mut hi = x.hi().clone();
    let mut clamped = false;
    for i in 0..n {
        let (dlo, dhi) = (dom.lo()[i], dom.hi()[i]);
        let margin = opts.escape_margin * (dhi - dlo);
        if x.lo()[i] > dhi + margin || x.hi()[i] < dlo - margin {
            return Err(Error::DomainEscape {
                k,
                index: i,
                lo: x.lo()[i],
                hi: x.hi()[i],
            });
        }
        if lo[i] < dlo || lo[i] > dhi {
            lo[i] = lo[i].clamp(dlo, dhi);
            clamped = true;
        }
        if hi[i] > dhi || hi[i] < dlo {
            hi[i] = hi[i].clamp(dlo, dhi);
            clamped = true;
        }
    }
    Ok((IntervalVector::new_unchecked(lo, hi), clamped))
}

fn check_finite(b: &IntervalVector, k: usize) -> Result<()> {
    if b.is_finite() {
        Ok(())
    } else {
        Err(Error::Diverged(k))
    }
}

/// Input framers for `d_{k-1}`.
pub fn reconstruct_input(
    tp: &TransformedPlant,
    gains: &ObserverGains,
    x_k: &IntervalVector,
    x_prev: Option<&IntervalVector>,
    z1_prev: Option<&DVector<f64>>,
) -> Result<IntervalVector> {
    let (x_prev, z1_prev) = match (x_prev, z1_prev) {
        (Some(x), Some(z)) => (x, z),
        _ => return Err(Error::NoInputYet),
    };
    let (xc, _) = clamp_to_domain(tp, x_prev, 0, &ObserverOptions::default())?;
    Ok(input_framers(tp, gains, x_k, &xc, z1_prev))
}

fn input_framers(
    tp: &TransformedPlant,
    gains: &ObserverGains,
    x_k: &IntervalVector,
    x_prev_clamped: &IntervalVector,
    z1_prev: &DVector<f64>,
) -> IntervalVector {
    let lin = gains.phi.bound(x_k);
    let kap = tp.kappa.embed_step_unchecked(x_prev_clamped);
    let z = &tp.a_z * z1_prev;
    IntervalVector::new_unchecked(
        lin.lo() + kap.lo() + &z + gains.d_off.lo(),
        lin.hi() + kap.hi() + &z + gains.d_off.hi(),
    )
}

/// One observer step at time `state.k`.
pub fn step(
    tp: &TransformedPlant,
    gains: &ObserverGains,
    state: &FramerState,
    z1: &DVector<f64>,
    z2: &DVector<f64>,
    opts: &ObserverOptions,
) -> Result<(FramerState, StepOutput)> {
    let k = state.k;
    if z1.len() != tp.p_h() {
        return Err(Error::Dimension {
            context: "z1 measurement",
            expected: tp.p_h(),
            got: z1.len(),
        });
    }
    if z2.len() != tp.m() {
        return Err(Error::Dimension {
            context: "z2 measurement",
            expected: tp.m(),
            got: z2.len(),
        });
    }

    // (1) state framers
    let shift = &gains.lambda_n * z2;
    let x = IntervalVector::new_unchecked(
        state.gamma.lo() + &shift + gains.x_off.lo(),
        state.gamma.hi() + &shift + gains.x_off.hi(),
    );
    check_finite(&x, k)?;
    let (xc, clamped) = clamp_to_domain(tp, &x, k, opts)?;

    // (2) input framers for the previous step
    let d = match (&state.x_prev, &state.z1_prev) {
        (Some(xp), Some(zp)) => {
            let (xpc, _) = clamp_to_domain(tp, xp, k.saturating_sub(1), opts)?;
            let d = input_framers(tp, gains, &x, &xpc, zp);
            check_finite(&d, k)?;
            Some(d)
        }
        _ => None,
    };

    // (3) auxiliary framers at k + 1
    let lin = gains.a_lc.bound(&state.gamma);
    let rho_lo = tp.f_tilde.tight_decomp_unchecked(xc.lo(), xc.hi());
    let rho_hi = tp.f_tilde.tight_decomp_unchecked(xc.hi(), xc.lo());
    let psi_lo = tp.psi2.tight_decomp_unchecked(xc.lo(), xc.hi());
    let psi_hi = tp.psi2.tight_decomp_unchecked(xc.hi(), xc.lo());
    let lpsi_lo = gains.neg_l.lower(&psi_lo, &psi_hi);
    let lpsi_hi = gains.neg_l.upper(&psi_lo, &psi_hi);
    let z_hat = &gains.z1_coef * z1 + &gains.z2_coef * z2;
    let gamma = IntervalVector::new_unchecked(
        lin.lo() + &rho_lo + lpsi_lo + gains.gamma_off.lo() + &z_hat,
        lin.hi() + &rho_hi + lpsi_hi + gains.gamma_off.hi() + &z_hat,
    );
    check_finite(&gamma, k + 1)?;

    let out = StepOutput {
        k,
        x: x.clone(),
        d,
        rho_gap: &rho_hi - &rho_lo,
        psi2_gap: &psi_hi - &psi_lo,
        clamped,
    };
    let next = FramerState {
        k: k + 1,
        gamma,
        x: x.clone(),
        x_prev: Some(x),
        z1_prev: Some(z1.clone()),
    };
    Ok((next, out))
}

/// Known true states and inputs for a containment audit. `d[k]` is the
/// input applied between `x[k]` and `x[k + 1]`.
#[derive(Debug, Clone, Default)]
pub struct Truth {
    pub x: Vec<DVector<f64>>,
    pub d: Vec<DVector<f64>>,
}

#[derive(Debug, Clone, Default)]
pub struct FramerTrajectory {
    /// State framers `x_k`, `k = 0..`.
    pub x: Vec<IntervalVector>,
    /// Input framers, `d[k]` frames `d_k`; one shorter than `x`.
    pub d: Vec<IntervalVector>,
    pub ex_width: Vec<f64>,
    pub ed_width: Vec<f64>,
    pub contained_x: Vec<bool>,
    pub contained_d: Vec<bool>,
    pub rho_gap: Vec<DVector<f64>>,
    pub psi2_gap: Vec<DVector<f64>>,
    pub clamped_steps: usize,
    /// First step at which a framer became non-finite.
    pub diverged: Option<usize>,
}

impl FramerTrajectory {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn containment_x(&self) -> f64 {
        rate(&self.contained_x)
    }

    pub fn containment_d(&self) -> f64 {
        rate(&self.contained_d)
    }

    /// CSV with one row per time step `k`; the input columns of row `k`
    /// hold the framers of `d_{k-1}` and are empty at `k = 0`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let n = self.x.first().map_or(0, IntervalVector::dim);
        let p = self.d.first().map_or(0, IntervalVector::dim);
        let mut header = vec!["k".to_string()];
        header.extend((1..=n).map(|i| format!("x_lo_{i}")));
        header.extend((1..=n).map(|i| format!("x_hi_{i}")));
        header.extend((1..=p).map(|i| format!("d_lo_{i}")));
        header.extend((1..=p).map(|i| format!("d_hi_{i}")));
        header.extend(
            ["ex_width_inf", "ed_width_inf", "contained_x", "contained_d"].map(String::from),
        );
        writeln!(out, "{}", header.join(","))?;
        for k in 0..self.x.len() {
            let mut row = vec![k.to_string()];
            row.extend(self.x[k].lo().iter().map(|v| fmt12(*v)));
            row.extend(self.x[k].hi().iter().map(|v| fmt12(*v)));
            let dk = k.checked_sub(1).and_then(|j| self.d.get(j));
            match dk {
                Some(d) => {
                    row.extend(d.lo().iter().map(|v| fmt12(*v)));
                    row.extend(d.hi().iter().map(|v| fmt12(*v)));
                }
                None => row.extend(std::iter::repeat_n(String::new(), 2 * p)),
            }
            row.push(fmt12(self.ex_width[k]));
            row.push(
                k.checked_sub(1)
                    .and_then(|j| self.ed_width.get(j))
                    .map_or(String::new(), |v| fmt12(*v)),
            );
            row.push(self.contained_x.get(k).map_or(String::new(), |b| (*b as u8).to_string()));
            row.push(
                k.checked_sub(1)
                    .and_then(|j| self.contained_d.get(j))
                    .map_or(String::new(), |b| (*b as u8).to_string()),
            );
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

fn rate(flags: &[bool]) -> f64 {
    if flags.is_empty() {
        1.0
    } else {
        flags.iter().filter(|b| **b).count() as f64 / flags.len() as f64
    }
}

/// Formats with 12 significant digits.
pub fn fmt12(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.11e}")
    } else {
        v.to_string()
    }
}

/// Runs the observer over `measurements[k] = (z1_k, z2_k)`. A framer that
/// becomes non-finite ends the run with `diverged` set; other errors are
/// returned.
pub fn run(
    tp: &TransformedPlant,
    gains: &ObserverGains,
    x0: &IntervalVector,
    measurements: &[(DVector<f64>, DVector<f64>)],
    truth: Option<&Truth>,
    opts: &ObserverOptions,
) -> Result<FramerTrajectory> {
    let mut traj = FramerTrajectory::default();
    let mut state = init(tp, gains, x0);
    if measurements.is_empty() {
        traj.x.push(state.x.clone());
        traj.ex_width.push(state.x.width_inf());
        if let Some(t) = truth {
            traj.contained_x.push(state.x.contains(&t.x[0], DEFAULT_TOL));
        }
        return Ok(traj);
    }
    for (z1, z2) in measurements {
        let (next, out) = match step(tp, gains, &state, z1, z2, opts) {
            Ok(r) => r,
            Err(Error::Diverged(k)) => {
                traj.diverged = Some(k);
                break;
            }
            Err(e) => return Err(e),
        };
        let k = out.k;
        if let Some(t) = truth {
            traj.contained_x.push(out.x.contains(&t.x[k], DEFAULT_TOL));
        }
        traj.ex_width.push(out.x.width_inf());
        traj.x.push(out.x);
        if let Some(d) = out.d {
            if let Some(t) = truth {
                traj.contained_d.push(d.contains(&t.d[k - 1], DEFAULT_TOL));
            }
            traj.ed_width.push(d.width_inf());
            traj.d.push(d);
        }
        traj.rho_gap.push(out.rho_gap);
        traj.psi2_gap.push(out.psi2_gap);
        traj.clamped_steps += out.clamped as usize;
        state = next;
    }
    Ok(traj)
}
