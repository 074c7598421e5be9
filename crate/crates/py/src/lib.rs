//! Python bindings: plants, gain synthesis, simulation, the observer and the
//! validation suites. Matrices cross the boundary as lists of rows.

use std::collections::HashMap;
use std::path::PathBuf;

use nalgebra::{DMatrix, DVector};
use pyo3::create_exception;
use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use riobs::config::Config;
use riobs::gainfile::GainFile;
use riobs::interval::{bound_linear_map as bound_map, IntervalVector};
use riobs::observer::{run, FramerTrajectory, ObserverGains};
use riobs::power::{self, NoiseMode, SimRun};
use riobs::synthesis::{build_comparison, synthesize_gain, Case, SynthesisResult};
use riobs::transform::{transform_plant, TransformedPlant};
use riobs::validate::{
    abstraction_suite, certificate_suite, decomposition_suite, gain_suites, interval_suite, RunPlan,
};
use riobs::Error;

create_exception!(riobs_py, InfeasibleError, PyRuntimeError);

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Infeasible { .. } => InfeasibleError::new_err(e.to_string()),
        Error::Io(_) => PyOSError::new_err(e.to_string()),
        Error::Config(_) | Error::Parse(_) | Error::InvalidArgument(_) | Error::Dimension { .. } => {
            PyValueError::new_err(e.to_string())
        }
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn matrix(rows: &[Vec<f64>]) -> PyResult<DMatrix<f64>> {
    let c = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != c) {
        return Err(PyValueError::new_err("matrix rows have different lengths"));
    }
    Ok(DMatrix::from_fn(rows.len(), c, |i, j| rows[i][j]))
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn list(v: &DVector<f64>) -> Vec<f64> {
    v.iter().copied().collect()
}

fn lists(vs: &[DVector<f64>]) -> Vec<Vec<f64>> {
    vs.iter().map(list).collect()
}

/// A box `[lo, hi]` in R^n.
#[pyclass(frozen, module = "riobs_py")]
struct Interval {
    inner: IntervalVector,
}

#[pymethods]
impl Interval {
    #[new]
    fn new(lo: Vec<f64>, hi: Vec<f64>) -> PyResult<Self> {
        let inner = IntervalVector::from_slices(&lo, &hi).map_err(to_py)?;
        Ok(Self { inner })
    }

    #[getter]
    fn lo(&self) -> Vec<f64> {
        list(self.inner.lo())
    }

    #[getter]
    fn hi(&self) -> Vec<f64> {
        list(self.inner.hi())
    }

    fn width(&self) -> Vec<f64> {
        list(&self.inner.width())
    }

    #[pyo3(signature = (point, tol = 1e-9))]
    fn contains(&self, point: Vec<f64>, tol: f64) -> PyResult<bool> {
        if point.len() != self.inner.dim() {
            return Err(PyValueError::new_err("point dimension does not match the box"));
        }
        Ok(self.inner.contains(&DVector::from_vec(point), tol))
    }

    fn __len__(&self) -> usize {
        self.inner.dim()
    }

    fn __repr__(&self) -> String {
        format!("Interval(lo={:?}, hi={:?})", self.lo(), self.hi())
    }
}

/// Tight image of a box under `x -> a x`.
#[pyfunction]
fn bound_linear_map(a: Vec<Vec<f64>>, x: &Interval) -> PyResult<Interval> {
    let inner = bound_map(&matrix(&a)?, &x.inner).map_err(to_py)?;
    Ok(Interval { inner })
}

/// A plant together with its attack-decoupled transformation and the
/// scenario, synthesis and simulation settings of its configuration.
#[pyclass(frozen, module = "riobs_py")]
struct Plant {
    cfg: Config,
    tp: TransformedPlant,
}

impl Plant {
    fn build(cfg: Config) -> PyResult<Self> {
        cfg.validate().map_err(to_py)?;
        let tp = transform_plant(&cfg.build_plant().map_err(to_py)?, None).map_err(to_py)?;
        Ok(Self { cfg, tp })
    }
}

#[pymethods]
impl Plant {
    /// The three-area power-system benchmark with its default attack.
    #[staticmethod]
    fn benchmark() -> PyResult<Self> {
        Self::build(Config::parse("[plant]\nkind = \"power\"\n").map_err(to_py)?)
    }

    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        Self::build(Config::parse(text).map_err(to_py)?)
    }

    #[staticmethod]
    fn from_file(path: PathBuf) -> PyResult<Self> {
        Self::build(Config::load(&path).map_err(to_py)?)
    }

    #[getter]
    fn n(&self) -> usize {
        self.tp.n()
    }

    /// Number of measured outputs.
    #[getter]
    fn l(&self) -> usize {
        self.tp.l()
    }

    /// Number of attack channels.
    #[getter]
    fn p(&self) -> usize {
        self.tp.p()
    }

    /// Number of attack-free outputs, the column count of the gain.
    #[getter]
    fn m(&self) -> usize {
        self.tp.m()
    }

    /// Linear part of the transformed dynamics.
    #[getter]
    fn a(&self) -> Vec<Vec<f64>> {
        rows(&self.tp.a)
    }

    #[getter]
    fn c2(&self) -> Vec<Vec<f64>> {
        rows(&self.tp.c2)
    }

    #[getter]
    fn state_space(&self) -> Interval {
        Interval {
            inner: self.tp.plant.state_space.clone(),
        }
    }

    fn __repr__(&self) -> String {
        format!("Plant(n={}, l={}, p={}, m={})", self.n(), self.l(), self.p(), self.m())
    }
}

/// An observer gain, with its certificate when it came from synthesis.
#[pyclass(frozen, module = "riobs_py")]
struct Gain {
    file: GainFile,
    report: HashMap<String, f64>,
}

impl Gain {
    fn from_result(res: &SynthesisResult) -> Self {
        let r = &res.report;
        let report = [
            ("lmi_min_eig", r.lmi_min_eig),
            ("p_max_offdiag", r.p_max_offdiag),
            ("p_min_eig", r.p_min_eig),
            ("gamma_min", r.gamma_min),
            ("constraint_min", r.constraint_min),
            ("pl_gamma_residual", r.pl_gamma_residual),
            ("spectral_radius", r.spectral_radius),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
        Self {
            file: GainFile::from_result(res),
            report,
        }
    }

    fn certificate(&self) -> Option<SynthesisResult> {
        let f = &self.file;
        Some(SynthesisResult {
            case: f.case?,
            p: f.p.clone()?,
            gamma: f.gamma.clone()?,
            eta: f.eta?,
            l: f.l.clone(),
            report: Default::default(),
            iterations: 0,
        })
    }

    fn check(&self, plant: &Plant) -> PyResult<()> {
        let want = (plant.tp.n(), plant.tp.m());
        if self.file.l.shape() != want {
            return Err(PyValueError::new_err(format!(
                "gain is {:?}, the plant needs {want:?}",
                self.file.l.shape()
            )));
        }
        Ok(())
    }
}

#[pymethods]
impl Gain {
    #[staticmethod]
    fn from_matrix(l: Vec<Vec<f64>>) -> PyResult<Self> {
        Ok(Self {
            file: GainFile::from_gain(matrix(&l)?),
            report: HashMap::new(),
        })
    }

    /// The gain `L = 0`.
    #[staticmethod]
    fn zero(plant: &Plant) -> Self {
        Self {
            file: GainFile::from_gain(DMatrix::zeros(plant.tp.n(), plant.tp.m())),
            report: HashMap::new(),
        }
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            file: GainFile::read(&path).map_err(to_py)?,
            report: HashMap::new(),
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.file.write(&path).map_err(to_py)
    }

    #[getter]
    fn case(&self) -> Option<u8> {
        self.file.case.map(Case::index)
    }

    #[getter]
    fn eta(&self) -> Option<f64> {
        self.file.eta
    }

    #[getter]
    fn l(&self) -> Vec<Vec<f64>> {
        rows(&self.file.l)
    }

    #[getter]
    fn p(&self) -> Option<Vec<Vec<f64>>> {
        self.file.p.as_ref().map(rows)
    }

    #[getter]
    fn gamma(&self) -> Option<Vec<Vec<f64>>> {
        self.file.gamma.as_ref().map(rows)
    }

    /// Audit figures of a freshly synthesised certificate; empty otherwise.
    #[getter]
    fn report(&self) -> HashMap<String, f64> {
        self.report.clone()
    }

    fn __repr__(&self) -> String {
        format!("Gain(case={:?}, eta={:?}, shape={:?})", self.case(), self.eta(), self.file.l.shape())
    }
}

/// Synthesises a certified gain. Without `case` the configured order is
/// tried and the first feasible case is returned.
#[pyfunction]
#[pyo3(signature = (plant, case = None))]
fn synthesize(py: Python<'_>, plant: &Plant, case: Option<u8>) -> PyResult<Gain> {
    let cases = match case {
        Some(i) => vec![Case::from_index(i).ok_or_else(|| PyValueError::new_err("case must be 1, 2 or 3"))?],
        None => plant.cfg.synthesis.cases().map_err(to_py)?,
    };
    let opts = plant.cfg.synthesis.options();
    py.detach(|| {
        let mut last = None;
        for c in cases {
            match synthesize_gain(&build_comparison(&plant.tp, c), &opts) {
                Ok(res) => return Ok(Gain::from_result(&res)),
                Err(e) => last = Some(e),
            }
        }
        Err(to_py(last.unwrap_or(Error::InvalidArgument("no case to try".into()))))
    })
}

/// A simulated attacked trajectory with its measurements.
#[pyclass(frozen, module = "riobs_py")]
struct Simulation {
    run: SimRun,
}

#[pymethods]
impl Simulation {
    #[getter]
    fn x(&self) -> Vec<Vec<f64>> {
        lists(&self.run.x)
    }

    #[getter]
    fn d(&self) -> Vec<Vec<f64>> {
        lists(&self.run.d)
    }

    #[getter]
    fn y(&self) -> Vec<Vec<f64>> {
        lists(&self.run.y)
    }

    fn __len__(&self) -> usize {
        self.run.x.len()
    }
}

fn noise_mode(s: &str) -> PyResult<NoiseMode> {
    match s {
        "uniform" => Ok(NoiseMode::Uniform),
        "vertex" => Ok(NoiseMode::Vertex),
        "midpoint" => Ok(NoiseMode::Midpoint),
        _ => Err(PyValueError::new_err("noise must be 'uniform', 'vertex' or 'midpoint'")),
    }
}

/// Simulates the plant under its configured attack for `steps` transitions.
#[pyfunction]
#[pyo3(signature = (plant, steps = None, seed = 0, noise = "uniform"))]
fn simulate(py: Python<'_>, plant: &Plant, steps: Option<usize>, seed: u64, noise: &str) -> PyResult<Simulation> {
    let mode = noise_mode(noise)?;
    let scenario = plant.cfg.scenario(plant.tp.p()).map_err(to_py)?;
    let steps = steps.unwrap_or(plant.cfg.simulation.steps);
    let run = py
        .detach(|| power::simulate(&plant.tp, &scenario, steps, seed, mode))
        .map_err(to_py)?;
    Ok(Simulation { run })
}

/// State and input framers of one observer run.
#[pyclass(frozen, module = "riobs_py")]
struct Trajectory {
    traj: FramerTrajectory,
    metrics: power::RunMetrics,
}

#[pymethods]
impl Trajectory {
    #[getter]
    fn x_lo(&self) -> Vec<Vec<f64>> {
        self.traj.x.iter().map(|b| list(b.lo())).collect()
    }

    #[getter]
    fn x_hi(&self) -> Vec<Vec<f64>> {
        self.traj.x.iter().map(|b| list(b.hi())).collect()
    }

    /// `d_lo[k]` frames the input at step `k`; one shorter than `x_lo`.
    #[getter]
    fn d_lo(&self) -> Vec<Vec<f64>> {
        self.traj.d.iter().map(|b| list(b.lo())).collect()
    }

    #[getter]
    fn d_hi(&self) -> Vec<Vec<f64>> {
        self.traj.d.iter().map(|b| list(b.hi())).collect()
    }

    #[getter]
    fn ex_width(&self) -> Vec<f64> {
        self.traj.ex_width.clone()
    }

    #[getter]
    fn ed_width(&self) -> Vec<f64> {
        self.traj.ed_width.clone()
    }

    #[getter]
    fn containment_x(&self) -> f64 {
        self.traj.containment_x()
    }

    #[getter]
    fn containment_d(&self) -> f64 {
        self.traj.containment_d()
    }

    #[getter]
    fn diverged(&self) -> bool {
        self.metrics.diverged
    }

    #[getter]
    fn tail_variation(&self) -> f64 {
        self.metrics.tail_variation
    }

    #[getter]
    fn clamped_steps(&self) -> usize {
        self.traj.clamped_steps
    }

    fn __len__(&self) -> usize {
        self.traj.len()
    }
}

/// Runs the observer with `gain` on the measurements of `sim`.
#[pyfunction]
fn run_observer(py: Python<'_>, plant: &Plant, gain: &Gain, sim: &Simulation) -> PyResult<Trajectory> {
    gain.check(plant)?;
    let tp = &plant.tp;
    let gains = ObserverGains::new(tp, &gain.file.l).map_err(to_py)?;
    let opts = plant.cfg.observer_options();
    let traj = py
        .detach(|| run(tp, &gains, &tp.plant.x0, &sim.run.measurements(), Some(&sim.run.truth()), &opts))
        .map_err(to_py)?;
    let metrics = power::evaluate(&traj, &tp.plant.state_space, 0);
    Ok(Trajectory { traj, metrics })
}

/// Runs the property suites and returns `(name, passed, detail)` triples.
#[pyfunction]
#[pyo3(signature = (plant, gain, seeds = 4, steps = 1000))]
fn validate(py: Python<'_>, plant: &Plant, gain: &Gain, seeds: u64, steps: usize) -> PyResult<Vec<(String, bool, String)>> {
    gain.check(plant)?;
    let tp = &plant.tp;
    let scenario = plant.cfg.scenario(tp.p()).map_err(to_py)?;
    let plan = RunPlan {
        seeds: (0..seeds).collect(),
        steps,
        noise: plant.cfg.simulation.noise,
    };
    let opts = plant.cfg.observer_options();
    let suites = py.detach(|| -> riobs::Result<_> {
        let mut out = vec![
            interval_suite(1000, 1),
            decomposition_suite(tp, 1000, 2),
            abstraction_suite(tp, 10_000, 3),
        ];
        let case = gain.file.case.unwrap_or(Case::III);
        if let Some(cert) = gain.certificate() {
            out.push(certificate_suite(tp, &cert, &plant.cfg.synthesis.options()));
        }
        out.extend(gain_suites(tp, case, &gain.file.l, &scenario, &plan, &opts)?);
        Ok(out)
    });
    Ok(suites
        .map_err(to_py)?
        .into_iter()
        .map(|s| (s.name.to_string(), s.passed, s.detail))
        .collect())
}

#[pymodule]
fn riobs_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("InfeasibleError", m.py().get_type::<InfeasibleError>())?;
    m.add_class::<Interval>()?;
    m.add_class::<Plant>()?;
    m.add_class::<Gain>()?;
    m.add_class::<Simulation>()?;
    m.add_class::<Trajectory>()?;
    m.add_function(wrap_pyfunction!(bound_linear_map, m)?)?;
    m.add_function(wrap_pyfunction!(synthesize, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(run_observer, m)?)?;
    m.add_function(wrap_pyfunction!(validate, m)?)?;
    Ok(())
}
