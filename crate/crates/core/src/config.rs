//! TOML scenario configuration.
//!
//! ```toml
//! [plant]
//! kind = "power"          # or "linear"
//! theta_bound = 1000.0
//!
//! [attack]
//! channels = [[{ kind = "step", amplitude = 1.0, onset = 500 }], [{ kind = "zero" }]]
//!
//! [simulation]
//! steps = 3000
//! seeds = [0, 1, 2]
//! ```

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::decomposition::DifferentiableMap;
use crate::error::{Error, Result};
use crate::interval::IntervalVector;
use crate::observer::ObserverOptions;
use crate::power::{build_power_plant, AttackScenario, NoiseMode, PowerSystemConfig};
use crate::sdp::SdpOptions;
use crate::synthesis::{Case, SynthesisOptions};
use crate::transform::PlantModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PlantConfig {
    Power(PowerSystemConfig),
    Linear(LinearPlantConfig),
}

impl Default for PlantConfig {
    fn default() -> Self {
        PlantConfig::Power(PowerSystemConfig::default())
    }
}

/// `x+ = A x + W w + G d`, `y = C x + V v + H d`. Matrices are lists of rows.
/// `W` and `V` default to identities, `G` and `H` to zero attack columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearPlantConfig {
    pub a: Vec<Vec<f64>>,
    pub c: Vec<Vec<f64>>,
    #[serde(default)]
    pub w: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub v: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub g: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub h: Option<Vec<Vec<f64>>>,
    pub state_lo: Vec<f64>,
    pub state_hi: Vec<f64>,
    pub w_lo: Vec<f64>,
    pub w_hi: Vec<f64>,
    pub v_lo: Vec<f64>,
    pub v_hi: Vec<f64>,
    pub x0_lo: Vec<f64>,
    pub x0_hi: Vec<f64>,
}

fn matrix(name: &str, rows: &[Vec<f64>], cols: Option<usize>) -> Result<DMatrix<f64>> {
    let c = cols.unwrap_or_else(|| rows.first().map_or(0, Vec::len));
    if rows.iter().any(|r| r.len() != c) {
        return Err(Error::Config(format!("matrix {name} has ragged or mismatched rows")));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Config(format!("matrix {name} has non-finite entries")));
    }
    Ok(DMatrix::from_fn(rows.len(), c, |i, j| rows[i][j]))
}

fn bounds(name: &str, lo: &[f64], hi: &[f64], dim: usize) -> Result<IntervalVector> {
    if lo.len() != dim || hi.len() != dim {
        return Err(Error::Config(format!("{name} bounds need {dim} entries")));
    }
    IntervalVector::from_slices(lo, hi)
        .map_err(|e| Error::Config(format!("{name} bounds: {e}")))
}

impl LinearPlantConfig {
    pub fn build(&self) -> Result<PlantModel> {
        let a = matrix("a", &self.a, None)?;
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::Config("matrix a must be square".into()));
        }
        let c = matrix("c", &self.c, Some(n))?;
        let l = c.nrows();
        let w = match &self.w {
            Some(w) => matrix("w", w, None)?,
            None => DMatrix::identity(n, n),
        };
        let v = match &self.v {
            Some(v) => matrix("v", v, None)?,
            None => DMatrix::identity(l, l),
        };
        let g = match &self.g {
            Some(g) => matrix("g", g, None)?,
            None => DMatrix::zeros(n, 0),
        };
        let h = match &self.h {
            Some(h) => matrix("h", h, Some(g.ncols()))?,
            None => DMatrix::zeros(l, g.ncols()),
        };
        let dom = bounds("state", &self.state_lo, &self.state_hi, n)?;
        let plant = PlantModel {
            f: DifferentiableMap::affine(a, DVector::zeros(n), dom.clone())?,
            h: DifferentiableMap::affine(c, DVector::zeros(l), dom.clone())?,
            noise_w: bounds("w", &self.w_lo, &self.w_hi, w.ncols())?,
            noise_v: bounds("v", &self.v_lo, &self.v_hi, v.ncols())?,
            x0: bounds("x0", &self.x0_lo, &self.x0_hi, n)?,
            w_mat: w,
            v_mat: v,
            g_mat: g,
            h_mat: h,
            state_space: dom,
        };
        plant.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(plant)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationConfig {
    pub steps: usize,
    pub seeds: Vec<u64>,
    pub noise: NoiseMode,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            steps: 3000,
            seeds: (0..50).collect(),
            noise: NoiseMode::Uniform,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthesisConfig {
    /// Preferred case; all cases are tried in the order III, I, II when absent.
    pub case: Option<u8>,
    pub mu_s: f64,
    pub p_max: f64,
    pub metzler_tol: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        let s = SynthesisOptions::default();
        Self {
            case: None,
            mu_s: s.mu_s,
            p_max: s.p_max,
            metzler_tol: s.metzler_tol,
            tol: s.sdp.tol,
            max_iter: s.sdp.max_iter,
        }
    }
}

impl SynthesisConfig {
    pub fn options(&self) -> SynthesisOptions {
        SynthesisOptions {
            mu_s: self.mu_s,
            p_max: self.p_max,
            metzler_tol: self.metzler_tol,
            sdp: SdpOptions {
                tol: self.tol,
                max_iter: self.max_iter,
                ..SdpOptions::default()
            },
        }
    }

    pub fn cases(&self) -> Result<Vec<Case>> {
        match self.case {
            Some(i) => Case::from_index(i)
                .map(|c| vec![c])
                .ok_or_else(|| Error::Config(format!("unknown case {i}"))),
            None => Ok(vec![Case::III, Case::I, Case::II]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ObserverConfig {
    pub escape_margin: f64,
}

impl Default for ObserverConfig {
    fn default() -> Self {
        Self {
            escape_margin: ObserverOptions::default().escape_margin,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub plant: PlantConfig,
    pub attack: Option<AttackScenario>,
    pub simulation: SimulationConfig,
    pub synthesis: SynthesisConfig,
    pub observer: ObserverConfig,
}

impl Config {
    /// Reads and validates a config file. A missing file is an I/O error,
    /// anything unreadable or inconsistent a config error.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let p = match &self.plant {
            PlantConfig::Power(cfg) => {
                cfg.validate()?;
                2
            }
            PlantConfig::Linear(_) => self.build_plant()?.p(),
        };
        self.scenario(p)?;
        if self.simulation.steps == 0 {
            return Err(Error::Config("simulation.steps must be positive".into()));
        }
        if self.simulation.seeds.is_empty() {
            return Err(Error::Config("simulation.seeds must not be empty".into()));
        }
        let s = &self.synthesis;
        self.synthesis.cases()?;
        if !(s.mu_s > 0.0) || !(s.p_max > 0.0) || !(s.metzler_tol >= 0.0) || !(s.tol > 0.0) || s.max_iter == 0 {
            return Err(Error::Config("synthesis tolerances must be positive".into()));
        }
        if !(self.observer.escape_margin >= 0.0) {
            return Err(Error::Config("observer.escape_margin must be nonnegative".into()));
        }
        Ok(())
    }

    pub fn build_plant(&self) -> Result<PlantModel> {
        match &self.plant {
            PlantConfig::Power(p) => match build_power_plant(p) {
                Err(Error::Config(m)) => Err(Error::Config(m)),
                Err(e) => Err(Error::Config(e.to_string())),
                ok => ok,
            },
            PlantConfig::Linear(l) => l.build(),
        }
    }

    /// The configured attack, or the benchmark default for the power plant
    /// and no attack for a linear plant.
    pub fn scenario(&self, p: usize) -> Result<AttackScenario> {
        let s = match (&self.attack, &self.plant) {
            (Some(a), _) => a.clone(),
            (None, PlantConfig::Power(_)) => AttackScenario::default(),
            (None, PlantConfig::Linear(_)) => AttackScenario::zero(p),
        };
        s.validate(p)?;
        Ok(s)
    }

    pub fn observer_options(&self) -> ObserverOptions {
        ObserverOptions {
            escape_margin: self.observer.escape_margin,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_the_benchmark() {
        let cfg = Config::parse("").unwrap();
        assert_eq!(cfg.plant, PlantConfig::Power(PowerSystemConfig::default()));
        assert_eq!(cfg.simulation.seeds.len(), 50);
        assert_eq!(cfg.scenario(2).unwrap(), AttackScenario::default());
    }

    #[test]
    fn power_overrides_and_attack() {
        let cfg = Config::parse(
            r#"
            [plant]
            kind = "power"
            dt = 0.005
            [attack]
            channels = [[{ kind = "step", amplitude = 2.0, onset = 10 }], [{ kind = "zero" }]]
            [simulation]
            steps = 10
            seeds = [3]
            noise = "vertex"
            "#,
        )
        .unwrap();
        match &cfg.plant {
            PlantConfig::Power(p) => assert_eq!(p.dt, 0.005),
            _ => panic!(),
        }
        assert_eq!(cfg.scenario(2).unwrap().value(10)[0], 2.0);
        assert_eq!(cfg.simulation.noise, NoiseMode::Vertex);
    }

    #[test]
    fn inverted_noise_bounds_are_rejected() {
        let err = Config::parse(
            r#"
            [plant]
            kind = "power"
            v_lo = [0.5, 0.5, 0.5, 0.5, 0.5, 0.5]
            v_hi = [-0.5, -0.5, -0.5, -0.5, -0.5, -0.5]
            "#,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn linear_plant() {
        let cfg = Config::parse(
            r#"
            [plant]
            kind = "linear"
            a = [[0.5, 0.0], [0.0, 0.5]]
            c = [[1.0, 0.0]]
            state_lo = [-10.0, -10.0]
            state_hi = [10.0, 10.0]
            w_lo = [-0.1, -0.1]
            w_hi = [0.1, 0.1]
            v_lo = [-0.1]
            v_hi = [0.1]
            x0_lo = [-1.0, -1.0]
            x0_hi = [1.0, 1.0]
            "#,
        )
        .unwrap();
        let plant = cfg.build_plant().unwrap();
        assert_eq!((plant.n(), plant.l(), plant.p()), (2, 1, 0));
        assert_eq!(cfg.scenario(0).unwrap().channels.len(), 0);
    }

    #[test]
    fn unknown_keys_and_bad_values() {
        assert!(matches!(Config::parse("[simulation]\nstepz = 3"), Err(Error::Config(_))));
        assert!(matches!(Config::parse("[simulation]\nsteps = 0"), Err(Error::Config(_))));
        assert!(matches!(Config::parse("[synthesis]\ncase = 7"), Err(Error::Config(_))));
        assert!(matches!(Config::parse("[plant]\nkind = \"power\"\ndt = -1.0"), Err(Error::Config(_))));
    }
}
