//! Command-line front end.
//!
//! Exit codes: 0 success, 1 property failure, 2 infeasible or uncertified
//! synthesis, 64 usage error (bad flags, missing files), 65 invalid config or
//! gain file.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::info;
use nalgebra::DMatrix;
use rayon::prelude::*;

use riobs::config::Config;
use riobs::gainfile::GainFile;
use riobs::observer::{run, ObserverGains};
use riobs::power::{evaluate, simulate, write_metrics_csv, RunMetrics, PLOT_SCRIPT};
use riobs::synthesis::{build_comparison, format_report, synthesize_gain, Case, SynthesisResult};
use riobs::transform::{transform_plant, TransformedPlant};
use riobs::validate::{
    abstraction_suite, certificate_suite, decomposition_suite, gain_suites, interval_suite,
    perturb_gain, RunPlan, SuiteResult,
};
use riobs::Error;

const EXIT_PROPERTY: u8 = 1;
const EXIT_INFEASIBLE: u8 = 2;
const EXIT_USAGE: u8 = 64;
const EXIT_CONFIG: u8 = 65;

/// Resilient interval observer: gain synthesis, simulation and validation.
#[derive(Parser)]
#[command(name = "riobs", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesise a certified observer gain.
    Synthesize {
        #[arg(long)]
        config: PathBuf,
        /// Comparison-system case 1, 2 or 3; defaults to the config, then III, I, II.
        #[arg(long)]
        case: Option<u8>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate attacked runs and record framers and metrics.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Gain file written by `synthesize`, or `zero` for L = 0.
        #[arg(long, alias = "gain")]
        gains: String,
        /// Comma-separated seeds or a range `a..b`; defaults to the config.
        #[arg(long)]
        seeds: Option<String>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the property suites.
    Validate {
        #[arg(long)]
        config: PathBuf,
        /// Gain file to check; a gain is synthesised when absent.
        #[arg(long)]
        gains: Option<PathBuf>,
        /// Deliberately perturb the gain with this seed before checking.
        #[arg(long)]
        perturb_seed: Option<u64>,
    },
}

/// A failure with its exit code.
struct Failure(u8, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Io(_) => EXIT_USAGE,
            Error::Config(_) | Error::Parse(_) => EXIT_CONFIG,
            Error::Infeasible { .. } => EXIT_INFEASIBLE,
            _ => EXIT_PROPERTY,
        };
        Failure(code, e.to_string())
    }
}

type CmdResult = std::result::Result<(), Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Ok(t) = std::env::var("RIOBS_THREADS") {
        match t.parse::<usize>() {
            Ok(n) if n > 0 => {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            _ => {
                eprintln!("error: RIOBS_THREADS must be a positive integer");
                return ExitCode::from(EXIT_USAGE);
            }
        }
    }
    let res = match cli.command {
        Command::Synthesize { config, case, out } => cmd_synthesize(&config, case, &out),
        Command::Simulate { config, gains, seeds, steps, out } => {
            cmd_simulate(&config, &gains, seeds.as_deref(), steps, &out)
        }
        Command::Validate { config, gains, perturb_seed } => {
            cmd_validate(&config, gains.as_deref(), perturb_seed)
        }
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure(code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}

fn load(config: &Path) -> std::result::Result<(Config, TransformedPlant), Failure> {
    let cfg = Config::load(config).map_err(|e| match e {
        Error::Io(io) => Failure(EXIT_USAGE, format!("cannot read config {}: {io}", config.display())),
        e => Failure::from(e),
    })?;
    let plant = cfg.build_plant()?;
    let tp = transform_plant(&plant, None).map_err(|e| Failure(EXIT_CONFIG, format!("plant transform: {e}")))?;
    Ok((cfg, tp))
}

fn create_dir(out: &Path) -> CmdResult {
    fs::create_dir_all(out)
        .map_err(|e| Failure(EXIT_USAGE, format!("cannot create {}: {e}", out.display())))
}

/// Tries each case in turn and returns the first certified result together
/// with a log of the attempts.
fn synthesize_cases(cfg: &Config, tp: &TransformedPlant, cases: &[Case]) -> (Option<SynthesisResult>, Vec<String>) {
    let opts = cfg.synthesis.options();
    let mut log = Vec::new();
    for &case in cases {
        let cs = build_comparison(tp, case);
        match synthesize_gain(&cs, &opts) {
            Ok(res) => {
                log.push(format!("case {case}: certified, eta {:.6e}", res.eta));
                return (Some(res), log);
            }
            Err(e) => log.push(format!("case {case}: {e}")),
        }
    }
    (None, log)
}

fn cmd_synthesize(config: &Path, case: Option<u8>, out: &Path) -> CmdResult {
    let (cfg, tp) = load(config)?;
    let cases = match case {
        Some(i) => vec![Case::from_index(i)
            .ok_or_else(|| Failure(EXIT_USAGE, format!("--case must be 1, 2 or 3, got {i}")))?],
        None => cfg.synthesis.cases()?,
    };
    create_dir(out)?;
    let (res, attempts) = synthesize_cases(&cfg, &tp, &cases);
    for a in &attempts {
        println!("{a}");
    }
    let Some(res) = res else {
        return Err(Failure(
            EXIT_INFEASIBLE,
            "no case could be certified; the comparison pair (A~, C~) must be detectable for the LMI to be feasible".into(),
        ));
    };
    let mut report = String::from("# attempts\n");
    for a in &attempts {
        report.push_str(&format!("# {a}\n"));
    }
    report.push_str(&format_report(&res));
    fs::write(out.join("gains.txt"), report).map_err(Error::from)?;
    GainFile::from_result(&res).write(&out.join("gain_matrix.txt"))?;
    println!("wrote {} and {}", out.join("gains.txt").display(), out.join("gain_matrix.txt").display());
    Ok(())
}

fn parse_seeds(s: &str) -> std::result::Result<Vec<u64>, Failure> {
    let bad = || Failure(EXIT_USAGE, format!("invalid seed list '{s}'"));
    let seeds: Vec<u64> = if let Some((a, b)) = s.split_once("..") {
        let (a, b): (u64, u64) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
        (a..b).collect()
    } else {
        s.split(',').map(|t| t.trim().parse().map_err(|_| bad())).collect::<std::result::Result<_, _>>()?
    };
    if seeds.is_empty() {
        return Err(bad());
    }
    Ok(seeds)
}

fn read_gain(spec: &str, tp: &TransformedPlant) -> std::result::Result<GainFile, Failure> {
    if spec == "zero" {
        return Ok(GainFile::from_gain(DMatrix::zeros(tp.n(), tp.m())));
    }
    let path = Path::new(spec);
    GainFile::read(path).map_err(|e| match e {
        Error::Io(io) => Failure(EXIT_USAGE, format!("cannot read gain file {spec}: {io}")),
        e => Failure::from(e),
    })
}

fn cmd_simulate(config: &Path, gains: &str, seeds: Option<&str>, steps: Option<usize>, out: &Path) -> CmdResult {
    let (cfg, tp) = load(config)?;
    let gain = read_gain(gains, &tp)?;
    let obs = ObserverGains::new(&tp, &gain.l).map_err(|e| Failure(EXIT_CONFIG, format!("gain: {e}")))?;
    let seeds = match seeds {
        Some(s) => parse_seeds(s)?,
        None => cfg.simulation.seeds.clone(),
    };
    let steps = steps.unwrap_or(cfg.simulation.steps);
    if steps == 0 {
        return Err(Failure(EXIT_USAGE, "--steps must be positive".into()));
    }
    let scenario = cfg.scenario(tp.p())?;
    let opts = cfg.observer_options();
    create_dir(out)?;
    let metrics: Vec<RunMetrics> = seeds
        .par_iter()
        .map(|&seed| -> std::result::Result<RunMetrics, Failure> {
            let ctx = |e: Error| {
                let f = Failure::from(e);
                Failure(f.0, format!("seed {seed}: {}", f.1))
            };
            let sim = simulate(&tp, &scenario, steps, seed, cfg.simulation.noise).map_err(ctx)?;
            let traj = run(&tp, &obs, &tp.plant.x0, &sim.measurements(), Some(&sim.truth()), &opts).map_err(ctx)?;
            let file = File::create(out.join(format!("run_seed{seed}.csv"))).map_err(|e| ctx(e.into()))?;
            traj.write_csv(BufWriter::new(file)).map_err(ctx)?;
            info!("seed {seed} done");
            Ok(evaluate(&traj, &tp.plant.state_space, seed))
        })
        .collect::<std::result::Result<_, _>>()?;
    write_metrics_csv(&metrics, BufWriter::new(File::create(out.join("metrics.csv")).map_err(Error::from)?))?;
    fs::write(out.join("plot.py"), PLOT_SCRIPT).map_err(Error::from)?;

    let min_x = metrics.iter().map(|m| m.containment_x).fold(1.0, f64::min);
    let min_d = metrics.iter().map(|m| m.containment_d).fold(1.0, f64::min);
    let diverged = metrics.iter().filter(|m| m.diverged).count();
    let settled = metrics.iter().filter(|m| m.settled).count();
    println!(
        "{} runs of {steps} steps: containment x {min_x} d {min_d}, diverged {diverged}, settled {settled}",
        metrics.len()
    );
    if min_x < 1.0 || min_d < 1.0 {
        return Err(Failure(EXIT_PROPERTY, "framers lost the true state or input".into()));
    }
    Ok(())
}

/// Seeds and horizon for the closed-loop suites.
const VALIDATE_SEEDS: usize = 4;
const VALIDATE_STEPS: usize = 1000;

fn cmd_validate(config: &Path, gains: Option<&Path>, perturb_seed: Option<u64>) -> CmdResult {
    let (cfg, tp) = load(config)?;
    let mut suites: Vec<SuiteResult> = vec![
        interval_suite(1000, 1),
        decomposition_suite(&tp, 1000, 2),
        abstraction_suite(&tp, 10_000, 3),
    ];

    let (mut cert, l, case) = match gains {
        Some(p) => {
            let g = read_gain(&p.to_string_lossy(), &tp)?;
            let case = g.case.unwrap_or(Case::III);
            let cert = match (g.case, g.eta, &g.p, &g.gamma) {
                (Some(case), Some(eta), Some(p), Some(gamma)) => Some(SynthesisResult {
                    case,
                    p: p.clone(),
                    gamma: gamma.clone(),
                    eta,
                    l: g.l.clone(),
                    report: Default::default(),
                    iterations: 0,
                }),
                _ => None,
            };
            (cert, Some(g.l), case)
        }
        None => {
            let (res, log) = synthesize_cases(&cfg, &tp, &cfg.synthesis.cases()?);
            for line in log {
                println!("synthesis {line}");
            }
            match res {
                Some(r) => {
                    let (l, case) = (r.l.clone(), r.case);
                    (Some(r), Some(l), case)
                }
                None => (None, None, Case::III),
            }
        }
    };
    let l = l.map(|l| match perturb_seed {
        Some(s) => perturb_gain(&l, s),
        None => l,
    });
    if let (Some(c), Some(l)) = (cert.as_mut(), l.as_ref()) {
        c.l = l.clone();
    }
    if let Some(c) = &cert {
        suites.push(certificate_suite(&tp, c, &cfg.synthesis.options()));
    }
    match &l {
        Some(l) => {
            let plan = RunPlan {
                seeds: cfg.simulation.seeds.iter().take(VALIDATE_SEEDS).copied().collect(),
                steps: cfg.simulation.steps.min(VALIDATE_STEPS),
                noise: cfg.simulation.noise,
            };
            let scenario = cfg.scenario(tp.p())?;
            match gain_suites(&tp, case, l, &scenario, &plan, &cfg.observer_options()) {
                Ok(s) => suites.extend(s),
                Err(e) => suites.push(SuiteResult {
                    name: "closed loop",
                    passed: false,
                    detail: e.to_string(),
                }),
            }
        }
        None => println!("no certified gain; closed-loop suites skipped"),
    }
    for s in &suites {
        println!("{s}");
    }
    let failed = suites.iter().filter(|s| !s.passed).count();
    if failed > 0 {
        return Err(Failure(EXIT_PROPERTY, format!("{failed} suite(s) failed")));
    }
    Ok(())
}
