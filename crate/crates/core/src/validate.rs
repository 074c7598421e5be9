//! Property suites behind `riobs validate` and the acceptance harness.
//!
//! Each suite checks one family of guarantees against an independent oracle
//! (vertex enumeration, sampling, or a closed-form width recursion) and
//! reports its worst observed margin.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::abstraction::box_vertices;
use crate::decomposition::JssForm;
use crate::error::Result;
use crate::interval::{abs, bound_linear_map, IntervalVector};
use crate::linalg::min_entry;
use crate::observer::{run, FramerTrajectory, ObserverGains, ObserverOptions};
use crate::power::{simulate, AttackScenario, NoiseMode};
use crate::synthesis::{
    build_comparison, comparison_trajectory, error_dynamics_matrices, noise_widths,
    verify_synthesis_with, Case, SynthesisOptions, SynthesisResult,
};
use crate::transform::TransformedPlant;

#[derive(Debug, Clone)]
pub struct SuiteResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl SuiteResult {
    fn new(name: &'static str, passed: bool, detail: String) -> Self {
        Self { name, passed, detail }
    }
}

impl std::fmt::Display for SuiteResult {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "[{}] {}: {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.detail
        )
    }
}

fn uniform_in(rng: &mut ChaCha8Rng, b: &IntervalVector) -> DVector<f64> {
    DVector::from_fn(b.dim(), |i, _| {
        let (lo, hi) = (b.lo()[i], b.hi()[i]);
        if lo == hi {
            lo
        } else {
            rng.random_range(lo..=hi)
        }
    })
}

/// A random sub-box of `b` whose relative widths span several decades.
fn random_subbox(rng: &mut ChaCha8Rng, b: &IntervalVector) -> IntervalVector {
    let scale = 10f64.powf(rng.random_range(-4.0..=0.0));
    let mut lo = DVector::zeros(b.dim());
    let mut hi = DVector::zeros(b.dim());
    for i in 0..b.dim() {
        let w = (b.hi()[i] - b.lo()[i]) * scale * rng.random_range(0.0..=1.0);
        let start = rng.random_range(b.lo()[i]..=(b.hi()[i] - w).max(b.lo()[i]));
        lo[i] = start;
        hi[i] = (start + w).min(b.hi()[i]);
    }
    IntervalVector::new_unchecked(lo, hi)
}

/// `bound_linear_map` against brute-force vertex enumeration.
pub fn interval_suite(pairs: usize, seed: u64) -> SuiteResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..pairs {
        let n = rng.random_range(1..=8);
        let m = rng.random_range(1..=8);
        let a = DMatrix::from_fn(m, n, |_, _| {
            if rng.random_bool(0.2) {
                0.0
            } else {
                let v: f64 = StandardNormal.sample(&mut rng);
                v
            }
        });
        let lo = DVector::from_fn(n, |_, _| rng.random_range(-5.0..=5.0));
        let hi = DVector::from_fn(n, |i, _| lo[i] + rng.random_range(0.0..=3.0));
        let b = IntervalVector::new_unchecked(lo, hi);
        let got = match bound_linear_map(&a, &b) {
            Ok(g) => g,
            Err(e) => return SuiteResult::new("interval", false, e.to_string()),
        };
        let mut blo = DVector::from_element(m, f64::INFINITY);
        let mut bhi = DVector::from_element(m, f64::NEG_INFINITY);
        for v in box_vertices(&b).expect("dimension at most 8") {
            let y = &a * v;
            blo = blo.zip_map(&y, f64::min);
            bhi = bhi.zip_map(&y, f64::max);
        }
        worst = worst
            .max((got.lo() - blo).amax())
            .max((got.hi() - bhi).amax());
    }
    SuiteResult::new(
        "interval",
        worst <= 1e-12,
        format!("{pairs} random maps, max deviation from vertex enumeration {worst:.3e}"),
    )
}

#[derive(Debug, Clone, Copy, Default)]
pub struct DecompositionMargins {
    pub membership: bool,
    /// Most negative `f(x) - f_d(lo, hi)` or `f_d(hi, lo) - f(x)` over samples.
    pub containment: f64,
    /// Most negative monotonicity increment.
    pub monotonicity: f64,
    /// Most negative `F_bar (hi - lo) - gap`.
    pub tightness: f64,
    /// Largest `|mu_d(z, z) - mu(z)|`.
    pub diagonal: f64,
}

/// Checks one JSS form on random boxes of its domain. Margins are scaled by
/// `1 + |value|` so large-magnitude remainders are compared relatively.
pub fn check_decomposition(jss: &JssForm, boxes: usize, seed: u64) -> DecompositionMargins {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mu = jss.mu();
    let dom = mu.domain().clone();
    // H lies inside the Jacobian bounds iff the remainder's bounds straddle zero
    let membership = mu.jac_lo().iter().all(|v| *v <= 0.0) && mu.jac_hi().iter().all(|v| *v >= 0.0);
    let mut out = DecompositionMargins {
        membership,
        containment: f64::INFINITY,
        monotonicity: f64::INFINITY,
        tightness: f64::INFINITY,
        diagonal: 0.0,
    };
    let rel = |v: &DVector<f64>, scale: &DVector<f64>| {
        v.iter()
            .zip(scale.iter())
            .map(|(a, s)| a / (1.0 + s.abs()))
            .fold(f64::INFINITY, f64::min)
    };
    for _ in 0..boxes {
        let b = random_subbox(&mut rng, &dom);
        let d_lo = jss.tight_decomp_unchecked(b.lo(), b.hi());
        let d_hi = jss.tight_decomp_unchecked(b.hi(), b.lo());
        let x = uniform_in(&mut rng, &b);
        let fx = mu.eval(&x);
        out.containment = out.containment.min(rel(&(&fx - &d_lo), &fx)).min(rel(&(&d_hi - &fx), &fx));
        let gap = &d_hi - &d_lo;
        out.tightness = out.tightness.min(rel(&(jss.f_bar() * b.width() - &gap), &gap));
        // increasing in the first argument, decreasing in the second
        let y = uniform_in(&mut rng, &dom);
        let a1 = jss.tight_decomp_unchecked(b.lo(), &y);
        let a2 = jss.tight_decomp_unchecked(b.hi(), &y);
        let b1 = jss.tight_decomp_unchecked(&y, b.lo());
        let b2 = jss.tight_decomp_unchecked(&y, b.hi());
        out.monotonicity = out.monotonicity.min(rel(&(&a2 - &a1), &a2)).min(rel(&(&b1 - &b2), &b1));
        let diag = jss.tight_decomp_unchecked(&x, &x);
        let dev = (&diag - &fx)
            .iter()
            .zip(fx.iter())
            .map(|(d, f)| d.abs() / (1.0 + f.abs()))
            .fold(0.0, f64::max);
        out.diagonal = out.diagonal.max(dev);
    }
    out
}

/// Decomposition properties of every JSS form used by the observer.
pub fn decomposition_suite(tp: &TransformedPlant, boxes: usize, seed: u64) -> SuiteResult {
    let forms = [("f~", &tp.f_tilde), ("psi2", &tp.psi2), ("kappa", &tp.kappa)];
    let mut pass = true;
    let mut parts = Vec::new();
    for (i, (name, jss)) in forms.iter().enumerate() {
        let m = check_decomposition(jss, boxes, seed.wrapping_add(i as u64));
        let ok = m.membership
            && m.containment >= -1e-9
            && m.monotonicity >= -1e-9
            && m.tightness >= -1e-9
            && m.diagonal <= 1e-12;
        pass &= ok;
        parts.push(format!(
            "{name}: membership {} containment {:.2e} monotone {:.2e} tight {:.2e} diagonal {:.2e}",
            m.membership, m.containment, m.monotonicity, m.tightness, m.diagonal
        ));
    }
    SuiteResult::new("decomposition", pass, format!("{boxes} boxes each; {}", parts.join("; ")))
}

/// Worst margin of `g(x) - A_g x` inside the error band over samples of the box.
pub fn abstraction_margin(tp: &TransformedPlant, samples: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = &tp.g_abs;
    let n_mat = &tp.n_mat;
    let mut worst = f64::INFINITY;
    for _ in 0..samples {
        let x = uniform_in(&mut rng, &g.domain);
        let gx = if n_mat.ncols() == 0 {
            x.clone()
        } else {
            &x + n_mat * tp.psi2.mu().eval(&x)
        };
        let r = gx - &g.a_g * &x;
        worst = worst
            .min(min_entry(&DMatrix::from_column_slice(r.len(), 1, (&r - g.eps.lo()).as_slice())))
            .min(min_entry(&DMatrix::from_column_slice(r.len(), 1, (g.eps.hi() - &r).as_slice())));
    }
    worst
}

pub fn abstraction_suite(tp: &TransformedPlant, samples: usize, seed: u64) -> SuiteResult {
    let m = abstraction_margin(tp, samples, seed);
    SuiteResult::new(
        "abstraction",
        m >= -1e-9,
        format!("{samples} samples, worst band margin {m:.3e}"),
    )
}

/// Re-audits a stored certificate.
pub fn certificate_suite(tp: &TransformedPlant, res: &SynthesisResult, opts: &SynthesisOptions) -> SuiteResult {
    let cs = build_comparison(tp, res.case);
    let r = verify_synthesis_with(res, &cs, opts);
    SuiteResult::new(
        "certificate",
        r.pass,
        format!(
            "case {}: lmi min eig {:.3e}, P offdiag max {:.3e}, Gamma min {:.3e}, constraint min {:.3e}, |PL - Gamma| {:.3e}",
            res.case, r.lmi_min_eig, r.p_max_offdiag, r.gamma_min, r.constraint_min, r.pl_gamma_residual
        ),
    )
}

/// Smallest entry of the sign conditions on `L` under which the comparison
/// system of `case` bounds the framer error.
pub fn comparison_hypotheses(tp: &TransformedPlant, case: Case, l: &DMatrix<f64>) -> f64 {
    let aux = error_dynamics_matrices(tp);
    let c2 = &tp.c2;
    let stack = |a: &DMatrix<f64>, b: &DMatrix<f64>, c: &DMatrix<f64>| {
        let mut m = DMatrix::zeros(a.nrows(), a.ncols() + b.ncols() + c.ncols());
        m.columns_mut(0, a.ncols()).copy_from(a);
        m.columns_mut(a.ncols(), b.ncols()).copy_from(b);
        m.columns_mut(a.ncols() + b.ncols(), c.ncols()).copy_from(c);
        m
    };
    let lower = stack(c2, &aux.v_b, &aux.d_b);
    let case_term = match case {
        Case::I => stack(&tp.a, &aux.v_a, &aux.d_a) - l * &lower,
        Case::II => l * &lower,
        Case::III => &tp.a - l * c2,
    };
    min_entry(l).min(min_entry(&case_term))
}

/// Most negative slack of `comparison - e^x` over a trajectory.
pub fn domination_slack(tp: &TransformedPlant, case: Case, l: &DMatrix<f64>, traj: &FramerTrajectory) -> f64 {
    if traj.x.is_empty() {
        return f64::INFINITY;
    }
    let cs = build_comparison(tp, case);
    let bound = comparison_trajectory(&cs, l, &traj.x[0].width(), &noise_widths(tp), traj.x.len() - 1);
    traj.x
        .iter()
        .zip(&bound)
        .map(|(x, e)| min_entry(&DMatrix::from_column_slice(e.len(), 1, (e - x.width()).as_slice())))
        .fold(f64::INFINITY, f64::min)
}

/// Largest deviation of the observed widths from the closed-form width
/// recursion driven by the realised decomposition gaps.
pub fn error_dynamics_residual(tp: &TransformedPlant, gains: &ObserverGains, traj: &FramerTrajectory) -> f64 {
    let aux = error_dynamics_matrices(tp);
    let l = &gains.l;
    let a_lc = abs(&gains.a_lc());
    let lnv2 = abs(&(&tp.lambda * &tp.n_mat * &tp.v2));
    let lam = abs(&tp.lambda);
    let dv = tp.plant.noise_v.width();
    let dw = tp.plant.noise_w.width();
    let de = tp.g_abs.eps.width();
    let constant = abs(&gains.w_hat) * &dw
        + (abs(&(&aux.v_a - l * &aux.v_b)) - &a_lc * &lnv2 + &lnv2) * &dv
        + (&lam + abs(&(&aux.d_a - l * &aux.d_b)) - &a_lc * &lam) * &de;
    let abs_l = abs(l);
    let mut worst = 0.0f64;
    for k in 0..traj.x.len().saturating_sub(1) {
        let pred = &a_lc * traj.x[k].width() + &traj.rho_gap[k] + &abs_l * &traj.psi2_gap[k] + &constant;
        let obs = traj.x[k + 1].width();
        for i in 0..pred.len() {
            worst = worst.max((pred[i] - obs[i]).abs() / (1.0 + obs[i].abs()));
        }
    }
    worst
}

/// Seeded multiplicative and additive perturbation of a gain.
pub fn perturb_gain(l: &DMatrix<f64>, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    l.map(|v| {
        let z: f64 = StandardNormal.sample(&mut rng);
        v + z * (0.5 * v.abs() + 0.5)
    })
}

/// Closed-loop runs used by the gain-dependent suites.
#[derive(Debug, Clone)]
pub struct RunPlan {
    pub seeds: Vec<u64>,
    pub steps: usize,
    pub noise: NoiseMode,
}

/// Soundness, domination and width-recursion checks for a gain.
pub fn gain_suites(
    tp: &TransformedPlant,
    case: Case,
    l: &DMatrix<f64>,
    scenario: &AttackScenario,
    plan: &RunPlan,
    opts: &ObserverOptions,
) -> Result<Vec<SuiteResult>> {
    let gains = ObserverGains::new(tp, l)?;
    let hyp = comparison_hypotheses(tp, case, l);
    let (mut contained, mut total) = (0usize, 0usize);
    let mut slack = f64::INFINITY;
    let mut resid = 0.0f64;
    for &seed in &plan.seeds {
        let sim = simulate(tp, scenario, plan.steps, seed, plan.noise)?;
        let traj = run(tp, &gains, &tp.plant.x0, &sim.measurements(), Some(&sim.truth()), opts)?;
        contained += traj.contained_x.iter().chain(&traj.contained_d).filter(|b| **b).count();
        total += traj.contained_x.len() + traj.contained_d.len();
        slack = slack.min(domination_slack(tp, case, l, &traj));
        resid = resid.max(error_dynamics_residual(tp, &gains, &traj));
    }
    let runs = format!("{} runs of {} steps", plan.seeds.len(), plan.steps);
    Ok(vec![
        SuiteResult::new(
            "soundness",
            contained == total,
            format!("{runs}, {contained} of {total} framers contain the truth"),
        ),
        SuiteResult::new(
            "domination",
            hyp >= -1e-9 && slack >= -1e-9,
            format!("case {case}: sign conditions on L min {hyp:.3e}, comparison slack min {slack:.3e} over {runs}"),
        ),
        SuiteResult::new(
            "error dynamics",
            resid <= 1e-9,
            format!("{runs}, max relative deviation from the width recursion {resid:.3e}"),
        ),
    ])
}
