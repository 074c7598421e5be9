//! Three-area power-system benchmark: plant construction, attack waveforms,
//! seeded truth simulation and run metrics.
//!
//! States are ordered `[theta_1, f_1, theta_2, f_2, theta_3, f_3]`. The swing
//! equations are discretised by forward Euler; the actuator of area 1 and the
//! frequency sensor of area 2 are attacked.

use std::f64::consts::PI;
use std::io::Write;

use log::warn;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::decomposition::DifferentiableMap;
use crate::error::{Error, Result};
use crate::interval::IntervalVector;
use crate::observer::{fmt12, FramerTrajectory, Truth};
use crate::transform::{PlantModel, TransformedPlant};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PowerSystemConfig {
    pub mass: Vec<f64>,
    pub damping: Vec<f64>,
    pub tie: f64,
    pub dt: f64,
    /// Neighbour sets, zero-based bus indices.
    pub neighbors: Vec<Vec<usize>>,
    pub mechanical_power: Vec<f64>,
    pub load: Vec<f64>,
    /// Half-widths of the state space: `|theta_i| <= theta_bound`, `|f_i| <= freq_bound`.
    pub theta_bound: f64,
    pub freq_bound: f64,
    /// Continuous-time process noise bounds per state, before `dt` scaling.
    pub w_lo: Vec<f64>,
    pub w_hi: Vec<f64>,
    pub v_lo: Vec<f64>,
    pub v_hi: Vec<f64>,
    pub x0_lo: Vec<f64>,
    pub x0_hi: Vec<f64>,
}

impl Default for PowerSystemConfig {
    fn default() -> Self {
        Self {
            mass: vec![0.01; 3],
            damping: vec![0.11; 3],
            tie: 1.0,
            dt: 0.01,
            neighbors: vec![vec![1, 2], vec![0, 2], vec![0, 1]],
            mechanical_power: vec![0.0; 3],
            load: vec![0.0; 3],
            theta_bound: 1000.0,
            freq_bound: 40.0,
            w_lo: vec![-50.0; 6],
            w_hi: vec![50.0; 6],
            v_lo: vec![-0.5; 6],
            v_hi: vec![0.5; 6],
            x0_lo: vec![-0.1; 6],
            x0_hi: vec![0.1; 6],
        }
    }
}

impl PowerSystemConfig {
    pub fn buses(&self) -> usize {
        self.mass.len()
    }

    pub fn validate(&self) -> Result<()> {
        let b = self.buses();
        let bad = |msg: String| Err(Error::Config(msg));
        if b == 0 {
            return bad("power system needs at least one bus".into());
        }
        for (name, v) in [
            ("damping", &self.damping),
            ("mechanical_power", &self.mechanical_power),
            ("load", &self.load),
        ] {
            if v.len() != b {
                return bad(format!("{name} has {} entries, expected {b}", v.len()));
            }
        }
        if self.neighbors.len() != b {
            return bad(format!("neighbors has {} sets, expected {b}", self.neighbors.len()));
        }
        for (i, s) in self.neighbors.iter().enumerate() {
            if s.iter().any(|&l| l >= b || l == i) {
                return bad(format!("invalid neighbour set for bus {i}"));
            }
        }
        if self.mass.iter().any(|m| !(*m > 0.0)) || self.damping.iter().any(|d| !(*d >= 0.0)) {
            return bad("masses must be positive and damping nonnegative".into());
        }
        if !(self.dt > 0.0) || !(self.tie >= 0.0) {
            return bad("dt must be positive and the tie coefficient nonnegative".into());
        }
        if !(self.theta_bound > 0.0) || !(self.freq_bound > 0.0) {
            return bad("state-space bounds must be positive".into());
        }
        for (name, lo, hi) in [
            ("w", &self.w_lo, &self.w_hi),
            ("v", &self.v_lo, &self.v_hi),
            ("x0", &self.x0_lo, &self.x0_hi),
        ] {
            if lo.len() != 2 * b || hi.len() != 2 * b {
                return bad(format!("{name} bounds need {} entries", 2 * b));
            }
            if lo.iter().zip(hi).any(|(l, h)| !(l <= h) || !l.is_finite() || !h.is_finite()) {
                return bad(format!("{name} bounds are not ordered finite intervals"));
            }
        }
        let dom = self.state_space();
        if !dom.contains_box(&self.x0_box(), 0.0) {
            return bad("initial box is not inside the state space".into());
        }
        Ok(())
    }

    pub fn state_space(&self) -> IntervalVector {
        let b = self.buses();
        let mut lo = DVector::zeros(2 * b);
        let mut hi = DVector::zeros(2 * b);
        for i in 0..b {
            lo[2 * i] = -self.theta_bound;
            hi[2 * i] = self.theta_bound;
            lo[2 * i + 1] = -self.freq_bound;
            hi[2 * i + 1] = self.freq_bound;
        }
        IntervalVector::new_unchecked(lo, hi)
    }

    pub fn x0_box(&self) -> IntervalVector {
        IntervalVector::new_unchecked(
            DVector::from_column_slice(&self.x0_lo),
            DVector::from_column_slice(&self.x0_hi),
        )
    }
}

/// Range of `cos` over `[a, b]`.
pub fn cos_range(a: f64, b: f64) -> (f64, f64) {
    if b - a >= 2.0 * PI {
        return (-1.0, 1.0);
    }
    let (mut lo, mut hi) = (a.cos().min(b.cos()), a.cos().max(b.cos()));
    // extrema of cos sit at multiples of pi
    let mut j = (a / PI).ceil();
    while j * PI <= b {
        if (j as i64).rem_euclid(2) == 0 {
            hi = 1.0;
        } else {
            lo = -1.0;
        }
        j += 1.0;
    }
    (lo, hi)
}

pub fn build_power_plant(cfg: &PowerSystemConfig) -> Result<PlantModel> {
    cfg.validate()?;
    let b = cfg.buses();
    let n = 2 * b;
    let dom = cfg.state_space();
    let dt = cfg.dt;

    let mut jac_lo = DMatrix::zeros(n, n);
    let mut jac_hi = DMatrix::zeros(n, n);
    let mut degenerate = false;
    for i in 0..b {
        let (th, fr) = (2 * i, 2 * i + 1);
        jac_lo[(th, th)] = 1.0;
        jac_hi[(th, th)] = 1.0;
        jac_lo[(th, fr)] = dt;
        jac_hi[(th, fr)] = dt;
        let fr_diag = 1.0 - dt * cfg.damping[i] / cfg.mass[i];
        jac_lo[(fr, fr)] = fr_diag;
        jac_hi[(fr, fr)] = fr_diag;
        let k = dt * cfg.tie / cfg.mass[i];
        let (mut self_lo, mut self_hi) = (0.0, 0.0);
        for &l in &cfg.neighbors[i] {
            let a = dom.lo()[th] - dom.hi()[2 * l];
            let c = dom.hi()[th] - dom.lo()[2 * l];
            let (cl, ch) = cos_range(a, c);
            degenerate |= cl <= -1.0 && ch >= 1.0;
            // d/dtheta_l of -k sin(theta_i - theta_l) = k cos(.)
            jac_lo[(fr, 2 * l)] += k * cl;
            jac_hi[(fr, 2 * l)] += k * ch;
            // d/dtheta_i = -k cos(.)
            self_lo -= k * ch;
            self_hi -= k * cl;
        }
        jac_lo[(fr, th)] = self_lo;
        jac_hi[(fr, th)] = self_hi;
    }
    if degenerate {
        warn!("state space admits angle differences beyond 2 pi; cos bounds degenerate to [-1, 1]");
    }

    let mass = cfg.mass.clone();
    let damping = cfg.damping.clone();
    let neighbors = cfg.neighbors.clone();
    let drive: Vec<f64> = (0..b).map(|i| cfg.mechanical_power[i] - cfg.load[i]).collect();
    let tie = cfg.tie;
    let f = DifferentiableMap::new(
        move |x: &DVector<f64>| {
            let mut out = DVector::zeros(x.len());
            for i in 0..mass.len() {
                let (th, fr) = (x[2 * i], x[2 * i + 1]);
                let flow: f64 = neighbors[i].iter().map(|&l| tie * (th - x[2 * l]).sin()).sum();
                out[2 * i] = th + dt * fr;
                out[2 * i + 1] = fr + dt / mass[i] * (-damping[i] * fr - flow + drive[i]);
            }
            out
        },
        jac_lo,
        jac_hi,
        dom.clone(),
    )?;
    // each tie term contributes a rank-one Hessian of norm 2 k
    let hess = (0..b)
        .map(|i| 2.0 * dt * cfg.tie / cfg.mass[i] * cfg.neighbors[i].len() as f64)
        .fold(0.0, f64::max);
    let f = f.with_hessian_bound(hess);
    let h = DifferentiableMap::affine(DMatrix::identity(n, n), DVector::zeros(n), dom.clone())?;

    let mut g_mat = DMatrix::zeros(n, 2);
    g_mat[(1, 0)] = dt / cfg.mass[0];
    let mut h_mat = DMatrix::zeros(n, 2);
    if b > 1 {
        h_mat[(3, 1)] = 1.0;
    }
    let plant = PlantModel {
        f,
        h,
        w_mat: DMatrix::identity(n, n) * dt,
        v_mat: DMatrix::identity(n, n),
        g_mat,
        h_mat,
        noise_w: IntervalVector::from_slices(&cfg.w_lo, &cfg.w_hi)?,
        noise_v: IntervalVector::from_slices(&cfg.v_lo, &cfg.v_hi)?,
        x0: cfg.x0_box(),
        state_space: dom,
    };
    plant.validate()?;
    Ok(plant)
}

/// Scalar attack signal generator, evaluated per step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Waveform {
    Zero,
    Step {
        amplitude: f64,
        #[serde(default)]
        onset: usize,
    },
    Ramp {
        slope: f64,
        #[serde(default)]
        onset: usize,
        saturation: f64,
    },
    Sinusoid {
        amplitude: f64,
        /// Cycles per step.
        frequency: f64,
        #[serde(default)]
        phase: f64,
        #[serde(default)]
        onset: usize,
    },
    /// Independent uniform draws in `[-amplitude, amplitude]`.
    Random {
        amplitude: f64,
        seed: u64,
        #[serde(default)]
        onset: usize,
    },
}

impl Waveform {
    pub fn value(&self, k: usize) -> f64 {
        match *self {
            Waveform::Zero => 0.0,
            Waveform::Step { amplitude, onset } => {
                if k >= onset {
                    amplitude
                } else {
                    0.0
                }
            }
            Waveform::Ramp { slope, onset, saturation } => {
                if k < onset {
                    0.0
                } else {
                    let v = slope * (k - onset) as f64;
                    if saturation >= 0.0 {
                        v.min(saturation)
                    } else {
                        v.max(saturation)
                    }
                }
            }
            Waveform::Sinusoid { amplitude, frequency, phase, onset } => {
                if k < onset {
                    0.0
                } else {
                    amplitude * (2.0 * PI * frequency * k as f64 + phase).sin()
                }
            }
            Waveform::Random { amplitude, seed, onset } => {
                if k < onset {
                    0.0
                } else {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    rng.set_word_pos(2 * k as u128);
                    amplitude * rng.random_range(-1.0..=1.0)
                }
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = match *self {
            Waveform::Zero => true,
            Waveform::Step { amplitude, .. } => amplitude.is_finite(),
            Waveform::Ramp { slope, saturation, .. } => slope.is_finite() && saturation.is_finite(),
            Waveform::Sinusoid { amplitude, frequency, phase, .. } => {
                amplitude.is_finite() && frequency.is_finite() && phase.is_finite()
            }
            Waveform::Random { amplitude, .. } => amplitude.is_finite() && amplitude >= 0.0,
        };
        if finite {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid waveform parameters: {self:?}")))
        }
    }
}

/// One summed waveform per attack channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackScenario {
    pub channels: Vec<Vec<Waveform>>,
}

impl Default for AttackScenario {
    fn default() -> Self {
        Self {
            channels: vec![
                vec![
                    Waveform::Step { amplitude: 1.0, onset: 500 },
                    Waveform::Sinusoid { amplitude: 0.5, frequency: 0.005, phase: 0.0, onset: 0 },
                ],
                vec![Waveform::Ramp { slope: 0.001, onset: 1000, saturation: 1.0 }],
            ],
        }
    }
}

impl AttackScenario {
    pub fn zero(p: usize) -> Self {
        Self {
            channels: vec![vec![Waveform::Zero]; p],
        }
    }

    pub fn value(&self, k: usize) -> DVector<f64> {
        DVector::from_iterator(
            self.channels.len(),
            self.channels.iter().map(|c| c.iter().map(|w| w.value(k)).sum::<f64>()),
        )
    }

    pub fn validate(&self, p: usize) -> Result<()> {
        if self.channels.len() != p {
            return Err(Error::Config(format!(
                "attack scenario has {} channels, plant has {p}",
                self.channels.len()
            )));
        }
        self.channels.iter().flatten().try_for_each(Waveform::validate)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseMode {
    /// Uniform draws inside the bounds.
    #[default]
    Uniform,
    /// Random vertices of the noise boxes.
    Vertex,
    /// Noise fixed at the box midpoint.
    Midpoint,
}

/// A simulated truth trajectory with its measurements.
#[derive(Debug, Clone)]
pub struct SimRun {
    pub x: Vec<DVector<f64>>,
    pub d: Vec<DVector<f64>>,
    pub w: Vec<DVector<f64>>,
    pub v: Vec<DVector<f64>>,
    pub y: Vec<DVector<f64>>,
    pub z1: Vec<DVector<f64>>,
    pub z2: Vec<DVector<f64>>,
}

impl SimRun {
    pub fn measurements(&self) -> Vec<(DVector<f64>, DVector<f64>)> {
        self.z1.iter().cloned().zip(self.z2.iter().cloned()).collect()
    }

    pub fn truth(&self) -> Truth {
        Truth {
            x: self.x.clone(),
            d: self.d.clone(),
        }
    }
}

fn draw(rng: &mut ChaCha8Rng, b: &IntervalVector, mode: NoiseMode) -> DVector<f64> {
    DVector::from_iterator(
        b.dim(),
        (0..b.dim()).map(|i| {
            let (lo, hi) = (b.lo()[i], b.hi()[i]);
            match mode {
                _ if lo == hi => lo,
                NoiseMode::Uniform => rng.random_range(lo..=hi),
                NoiseMode::Vertex => {
                    if rng.random_bool(0.5) {
                        hi
                    } else {
                        lo
                    }
                }
                NoiseMode::Midpoint => 0.5 * (lo + hi),
            }
        }),
    )
}

/// Forward simulation for `steps` transitions; records `x_0..x_steps` with
/// the inputs and measurements at every recorded step.
pub fn simulate(
    tp: &TransformedPlant,
    scenario: &AttackScenario,
    steps: usize,
    seed: u64,
    mode: NoiseMode,
) -> Result<SimRun> {
    let plant = &tp.plant;
    if steps == 0 {
        return Err(Error::InvalidArgument("simulation needs at least one step".into()));
    }
    scenario.validate(plant.p())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = draw(&mut rng, &plant.x0, mode);
    let mut run = SimRun {
        x: Vec::with_capacity(steps + 1),
        d: Vec::with_capacity(steps + 1),
        w: Vec::with_capacity(steps + 1),
        v: Vec::with_capacity(steps + 1),
        y: Vec::with_capacity(steps + 1),
        z1: Vec::with_capacity(steps + 1),
        z2: Vec::with_capacity(steps + 1),
    };
    for k in 0..=steps {
        for i in 0..x.len() {
            let (lo, hi) = (plant.state_space.lo()[i], plant.state_space.hi()[i]);
            if !(x[i] >= lo && x[i] <= hi) {
                return Err(Error::ScenarioEscape { k, index: i, value: x[i] });
            }
        }
        let d = scenario.value(k);
        let w = draw(&mut rng, &plant.noise_w, mode);
        let v = draw(&mut rng, &plant.noise_v, mode);
        let y = plant.h.eval(&x) + &plant.v_mat * &v + &plant.h_mat * &d;
        let (z1, z2) = tp.split_measurement(&y);
        let next = plant.f.eval(&x) + &plant.w_mat * &w + &plant.g_mat * &d;
        run.x.push(x);
        run.d.push(d);
        run.w.push(w);
        run.v.push(v);
        run.y.push(y);
        run.z1.push(z1);
        run.z2.push(z2);
        x = next;
    }
    Ok(run)
}

/// Relative spread `(max - min) / max` over the final `fraction` of a sequence.
pub fn tail_variation(widths: &[f64], fraction: f64) -> f64 {
    if widths.is_empty() {
        return 0.0;
    }
    let len = ((widths.len() as f64 * fraction).ceil() as usize).clamp(1, widths.len());
    let tail = &widths[widths.len() - len..];
    let max = tail.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = tail.iter().cloned().fold(f64::INFINITY, f64::min);
    if max == 0.0 {
        0.0
    } else {
        (max - min) / max
    }
}

/// Tail fraction used for the settling test.
pub const TAIL_FRACTION: f64 = 0.1;
/// Relative tail variation below which a run counts as settled.
pub const SETTLE_TOL: f64 = 1e-3;
/// Width beyond which a run counts as diverged, relative to the state-space width.
pub const DIVERGENCE_FACTOR: f64 = 1e6;

#[derive(Debug, Clone, PartialEq)]
pub struct RunMetrics {
    pub seed: u64,
    pub containment_x: f64,
    pub containment_d: f64,
    pub width_x_final: f64,
    pub width_d_final: f64,
    pub width_x_max: f64,
    pub tail_variation: f64,
    pub settled: bool,
    pub diverged: bool,
}

pub fn evaluate(traj: &FramerTrajectory, state_space: &IntervalVector, seed: u64) -> RunMetrics {
    let last = |v: &[f64]| v.last().copied().unwrap_or(f64::NAN);
    let width_x_max = traj.ex_width.iter().cloned().fold(0.0, f64::max);
    let blowup = DIVERGENCE_FACTOR * state_space.width_inf();
    let diverged = traj.diverged.is_some() || !(width_x_max <= blowup);
    let tail = tail_variation(&traj.ex_width, TAIL_FRACTION);
    RunMetrics {
        seed,
        containment_x: traj.containment_x(),
        containment_d: traj.containment_d(),
        width_x_final: last(&traj.ex_width),
        width_d_final: last(&traj.ed_width),
        width_x_max,
        tail_variation: tail,
        settled: !diverged && tail <= SETTLE_TOL,
        diverged,
    }
}

pub fn write_metrics_csv<W: Write>(metrics: &[RunMetrics], mut out: W) -> Result<()> {
    writeln!(
        out,
        "seed,containment_x,containment_d,width_x_final,width_d_final,settled,diverged,tail_variation"
    )?;
    for m in metrics {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            m.seed,
            fmt12(m.containment_x),
            fmt12(m.containment_d),
            fmt12(m.width_x_final),
            fmt12(m.width_d_final),
            m.settled as u8,
            m.diverged as u8,
            fmt12(m.tail_variation)
        )?;
    }
    Ok(())
}

/// A matplotlib script that redraws the framers and widths from the run CSVs.
pub const PLOT_SCRIPT: &str = r#"#!/usr/bin/env python3
"""Plot framers and framer widths from the run CSVs in this directory."""
import csv
import glob
import os
import sys

import matplotlib.pyplot as plt


def load(path):
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    cols = {key: [float(r[key]) if r[key] else float("nan") for r in rows] for key in rows[0]}
    return cols


def main():
    here = os.path.dirname(os.path.abspath(__file__))
    paths = sorted(glob.glob(os.path.join(here, "run_seed*.csv")))
    if not paths:
        sys.exit("no run CSVs found")
    data = load(paths[0])
    k = data["k"]
    n = sum(1 for key in data if key.startswith("x_lo_"))
    p = sum(1 for key in data if key.startswith("d_lo_"))

    fig, axes = plt.subplots(n, 1, figsize=(8, 2 * n), sharex=True)
    for i, ax in enumerate(axes, start=1):
        ax.fill_between(k, data[f"x_lo_{i}"], data[f"x_hi_{i}"], alpha=0.4)
        ax.set_ylabel(f"x{i}")
    axes[-1].set_xlabel("k")
    fig.savefig(os.path.join(here, "state_framers.png"), dpi=150)

    if p:
        fig, axes = plt.subplots(p, 1, figsize=(8, 2 * p), sharex=True, squeeze=False)
        for i, ax in enumerate(axes[:, 0], start=1):
            ax.fill_between(k, data[f"d_lo_{i}"], data[f"d_hi_{i}"], alpha=0.4)
            ax.set_ylabel(f"d{i}")
        axes[-1, 0].set_xlabel("k")
        fig.savefig(os.path.join(here, "input_framers.png"), dpi=150)

    fig, ax = plt.subplots(figsize=(8, 3))
    for path in paths:
        run = load(path)
        ax.semilogy(run["k"], run["ex_width_inf"], lw=0.6)
    ax.set_xlabel("k")
    ax.set_ylabel("state framer width")
    fig.savefig(os.path.join(here, "widths.png"), dpi=150)


if __name__ == "__main__":
    main()
"#;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transform::transform_plant;

    #[test]
    fn cos_range_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..500 {
            let a: f64 = rng.random_range(-10.0..10.0);
            let b = a + rng.random_range(0.0..7.0);
            let (lo, hi) = cos_range(a, b);
            let (mut slo, mut shi) = (f64::INFINITY, f64::NEG_INFINITY);
            for j in 0..=4000 {
                let c = (a + (b - a) * j as f64 / 4000.0).cos();
                slo = slo.min(c);
                shi = shi.max(c);
            }
            assert!(lo <= slo + 1e-12 && hi >= shi - 1e-12);
            assert!(slo - lo < 1e-5 && hi - shi < 1e-5);
        }
    }

    #[test]
    fn waveforms() {
        assert_eq!(Waveform::Step { amplitude: 2.0, onset: 3 }.value(2), 0.0);
        assert_eq!(Waveform::Step { amplitude: 2.0, onset: 3 }.value(3), 2.0);
        let r = Waveform::Ramp { slope: 0.1, onset: 10, saturation: 1.0 };
        assert_eq!(r.value(5), 0.0);
        assert!((r.value(15) - 0.5).abs() < 1e-12);
        assert_eq!(r.value(100), 1.0);
        let s = Waveform::Random { amplitude: 1.0, seed: 9, onset: 0 };
        assert_eq!(s.value(17), s.value(17));
        assert_ne!(s.value(17), s.value(18));
        assert!((0..100).all(|k| s.value(k).abs() <= 1.0));
    }

    #[test]
    fn equilibrium_is_fixed() {
        let plant = build_power_plant(&PowerSystemConfig::default()).unwrap();
        let x = DVector::zeros(6);
        assert_eq!(plant.f.eval(&x), x);
    }

    #[test]
    fn jacobian_bounds_hold_on_a_narrow_box() {
        let cfg = PowerSystemConfig {
            theta_bound: PI / 3.0,
            freq_bound: 5.0,
            ..Default::default()
        };
        let plant = build_power_plant(&cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let dom = plant.state_space.clone();
        for _ in 0..2000 {
            let x = DVector::from_iterator(6, (0..6).map(|i| rng.random_range(dom.lo()[i]..=dom.hi()[i])));
            for j in 0..6 {
                let h = 1e-6;
                let mut xp = x.clone();
                xp[j] += h;
                let mut xm = x.clone();
                xm[j] -= h;
                let col = (plant.f.eval(&xp) - plant.f.eval(&xm)) / (2.0 * h);
                for i in 0..6 {
                    assert!(col[i] >= plant.f.jac_lo()[(i, j)] - 1e-6);
                    assert!(col[i] <= plant.f.jac_hi()[(i, j)] + 1e-6);
                }
            }
        }
    }

    #[test]
    fn simulation_matches_euler_and_sensor_model() {
        let cfg = PowerSystemConfig {
            x0_lo: vec![0.05; 6],
            x0_hi: vec![0.05; 6],
            ..Default::default()
        };
        let plant = build_power_plant(&cfg).unwrap();
        let tp = transform_plant(&plant, None).unwrap();
        let run = simulate(&tp, &AttackScenario::default(), 50, 0, NoiseMode::Uniform).unwrap();
        assert_eq!(run.x.len(), 51);
        for k in 0..50 {
            let next = plant.f.eval(&run.x[k]) + &plant.w_mat * &run.w[k] + &plant.g_mat * &run.d[k];
            assert_eq!(next, run.x[k + 1]);
            assert!(plant.noise_w.contains(&run.w[k], 0.0) && plant.noise_v.contains(&run.v[k], 0.0));
            let y = &run.y[k];
            assert_eq!(y[2], run.x[k][2] + run.v[k][2]);
            assert_eq!(y[3], run.x[k][3] + run.d[k][1] + run.v[k][3]);
        }
    }

    #[test]
    fn seeds_are_deterministic() {
        let plant = build_power_plant(&PowerSystemConfig::default()).unwrap();
        let tp = transform_plant(&plant, None).unwrap();
        let a = simulate(&tp, &AttackScenario::default(), 30, 7, NoiseMode::Uniform).unwrap();
        let b = simulate(&tp, &AttackScenario::default(), 30, 7, NoiseMode::Uniform).unwrap();
        assert_eq!(a.x, b.x);
        assert_eq!(a.y, b.y);
    }

    #[test]
    fn escape_is_reported() {
        let cfg = PowerSystemConfig {
            freq_bound: 0.2,
            ..Default::default()
        };
        let plant = build_power_plant(&cfg).unwrap();
        let tp = transform_plant(&plant, None).unwrap();
        let err = simulate(&tp, &AttackScenario::default(), 3000, 0, NoiseMode::Uniform).unwrap_err();
        assert!(matches!(err, Error::ScenarioEscape { .. }));
    }

    #[test]
    fn tail_variation_examples() {
        assert_eq!(tail_variation(&[5.0; 20], 0.1), 0.0);
        assert!((tail_variation(&[1.0, 1.0, 2.0, 4.0], 0.5) - 0.5).abs() < 1e-15);
    }
}
