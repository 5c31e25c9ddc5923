//! Command-line pipeline: identify, tune, simulate, analyze.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use slosh_core::architecture::Tick;
use slosh_core::error::Error;
use slosh_core::freq::{close_loop, frequency_response, spectral_abscissa, FreqGrid};
use slosh_core::lti::StateSpace;
use slosh_core::sim::{simulate, ControllerSetup, Metrics, SimResult, SimSeries};
use slosh_core::synthesis::{build_controller, tune, weighted_loop, ControllerParams, CostEvaluator, LoopModel, TuneResult, WeightSpec};
use slosh_core::sysid::{identify, PulseRecord};
use slosh_core::uncertainty::{sample, PlantSample, UncertaintySpec};

pub use config::ProjectConfig;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_MISSING: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;
pub const EXIT_UNSTABLE: i32 = 4;

pub const CONTROLLER_FILE: &str = "controller.toml";
pub const HISTORY_FILE: &str = "history.csv";
pub const IDENT_FILE: &str = "ident.toml";

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn new(code: i32, message: impl Into<String>) -> Self {
        Self { code, message: message.into() }
    }

    fn input(message: impl Into<String>) -> Self {
        Self::new(EXIT_INPUT, message)
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Identification(_) => EXIT_MISSING,
            Error::Synthesis { .. } => EXIT_INFEASIBLE,
            Error::Simulation { .. } => EXIT_UNSTABLE,
            _ => EXIT_INPUT,
        };
        Self::new(code, e.to_string())
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "slosh", version, about = "Slosh damping: identification, controller tuning, simulation and analysis")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone)]
pub struct Common {
    /// Project configuration (TOML); the 600L preset when absent.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, value_name = "DIR", default_value = "out")]
    pub out: PathBuf,
    /// Overrides the configured seed.
    #[arg(long, value_name = "N")]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate m_r, m_s and k from a pulse record (CSV: t, F_s, a_cmd).
    Identify {
        record: PathBuf,
        #[arg(long, value_name = "DIR", default_value = "out")]
        out: PathBuf,
    },
    /// Tune the fixed-structure controller over the uncertainty set.
    Tune {
        #[command(flatten)]
        common: Common,
        /// Number of plant samples (vertices first).
        #[arg(long, value_name = "N")]
        samples: Option<usize>,
        /// Scales every uncertainty radius.
        #[arg(long, value_name = "X")]
        uncertainty_scale: Option<f64>,
    },
    /// Run one scenario, or all configured scenarios concurrently.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "NAME")]
        scenario: Option<String>,
        /// Controller file; OUT/controller.toml when absent.
        #[arg(long, value_name = "PATH")]
        controller: Option<PathBuf>,
        #[arg(long)]
        open_loop: bool,
    },
    /// Frequency responses, worst-case cost and closure stability.
    Analyze {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "PATH")]
        controller: Option<PathBuf>,
        /// Random interior samples besides the vertices.
        #[arg(long, value_name = "N", default_value_t = 10)]
        samples: usize,
        #[arg(long, value_name = "X")]
        uncertainty_scale: Option<f64>,
    },
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code; progress goes to stdout, diagnostics to
/// stderr.
pub fn run<I, A>(args: I) -> i32
where
    I: IntoIterator<Item = A>,
    A: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    match execute(&cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

pub fn execute(cmd: &Command) -> CliResult<()> {
    match cmd {
        Command::Identify { record, out } => cmd_identify(record, out),
        Command::Tune { common, samples, uncertainty_scale } => cmd_tune(common, *samples, *uncertainty_scale),
        Command::Simulate { common, scenario, controller, open_loop } => {
            cmd_simulate(common, scenario.as_deref(), controller.as_deref(), *open_loop)
        }
        Command::Analyze { common, controller, samples, uncertainty_scale } => {
            cmd_analyze(common, controller.as_deref(), *samples, *uncertainty_scale)
        }
    }
}

fn load_config(common: &Common) -> CliResult<ProjectConfig> {
    let mut cfg = match &common.config {
        Some(p) => ProjectConfig::load(p)?,
        None => ProjectConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::input(format!("{}: {e}", path.display()))
}

fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    let mut f = fs::File::create(path).map_err(|e| io_err(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| io_err(path, e))
}

fn write_toml<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let text = toml::to_string_pretty(value).map_err(|e| io_err(path, e))?;
    write_text(path, &text)
}

fn write_csv<R>(path: &Path, header: &[&str], rows: R) -> CliResult<()>
where
    R: IntoIterator<Item = Vec<String>>,
{
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_path(path).map_err(|e| io_err(path, e))?;
    w.write_record(header).map_err(|e| io_err(path, e))?;
    for r in rows {
        w.write_record(&r).map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// Reads a pulse record; every failure is an input error with its location.
pub fn read_pulse_csv(path: &Path) -> CliResult<PulseRecord> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path).map_err(|e| io_err(path, e))?;
    let headers = rdr.headers().map_err(|e| io_err(path, e))?.clone();
    if headers.is_empty() {
        return Err(CliError::input(format!("{}: empty file", path.display())));
    }
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::input(format!("{}: missing column '{name}' (need {:?})", path.display(), PulseRecord::COLUMNS)))
    };
    let idx = [col("t")?, col("F_s")?, col("a_cmd")?];
    let mut cols: [Vec<f64>; 3] = Default::default();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| io_err(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        for (j, &i) in idx.iter().enumerate() {
            let field = rec.get(i).ok_or_else(|| CliError::input(format!("{}: line {line}: missing field", path.display())))?;
            let v: f64 = field
                .parse()
                .map_err(|_| CliError::input(format!("{}: line {line}: '{field}' is not a number", path.display())))?;
            cols[j].push(v);
        }
    }
    if cols[0].is_empty() {
        return Err(CliError::input(format!("{}: no data rows", path.display())));
    }
    let [t, f, a] = cols;
    PulseRecord::new(t, f, a).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

pub fn write_pulse_csv(path: &Path, rec: &PulseRecord) -> CliResult<()> {
    let rows = (0..rec.len()).map(|k| vec![rec.t[k].to_string(), rec.f_s[k].to_string(), rec.a_cmd[k].to_string()]);
    write_csv(path, &PulseRecord::COLUMNS, rows)
}

fn cmd_identify(record: &Path, out: &Path) -> CliResult<()> {
    let rec = read_pulse_csv(record)?;
    let res = identify(&rec)?;
    create_dir(out)?;
    write_toml(&out.join(IDENT_FILE), &res)?;
    println!(
        "m_r = {:.3} kg, m_s = {:.3} kg, k = {:.3} N/m, omega = {:.5} rad/s, residual = {:.5}",
        res.m_r_hat, res.m_s_hat, res.k_hat, res.omega_hat, res.residual
    );
    Ok(())
}

/// Controller file written by `tune` and read by `simulate` and `analyze`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerFile {
    pub controller: ControllerParams,
    #[serde(default)]
    pub report: Option<TuneReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TuneReport {
    pub config: String,
    pub seed: u64,
    pub samples: usize,
    pub uncertainty_scale: f64,
    pub cost: f64,
    pub objective: f64,
    pub evaluations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfeasibleReport {
    pub message: String,
    pub best_objective: f64,
    /// Optimizer coordinates of the best point.
    pub best_coordinates: Vec<f64>,
}

fn scaled_uncertainty(cfg: &ProjectConfig, scale: Option<f64>) -> CliResult<UncertaintySpec> {
    match scale {
        Some(x) => Ok(cfg.uncertainty.scaled(x)?),
        None => Ok(cfg.uncertainty),
    }
}

/// Runs the configured tuning problem.
pub fn tune_config(cfg: &ProjectConfig, samples: usize, unc: &UncertaintySpec) -> slosh_core::error::Result<TuneResult> {
    let set = sample(unc, &cfg.plant, samples, cfg.seed);
    let w = cfg.weights();
    tune(&cfg.tune.initial(&w), &cfg.tune_spec(), &set, &w, &cfg.loop_model(), &cfg.plant)
}

fn cmd_tune(common: &Common, samples: Option<usize>, scale: Option<f64>) -> CliResult<()> {
    let cfg = load_config(common)?;
    let unc = scaled_uncertainty(&cfg, scale)?;
    let n = samples.unwrap_or(cfg.tune.samples);
    if n == 0 {
        return Err(CliError::input("--samples must be at least 1"));
    }
    create_dir(&common.out)?;
    match tune_config(&cfg, n, &unc) {
        Ok(r) => {
            let file = ControllerFile {
                controller: r.params,
                report: Some(TuneReport {
                    config: cfg.name.clone(),
                    seed: cfg.seed,
                    samples: n,
                    uncertainty_scale: scale.unwrap_or(1.0),
                    cost: r.cost,
                    objective: r.objective,
                    evaluations: r.evaluations,
                }),
            };
            write_toml(&common.out.join(CONTROLLER_FILE), &file)?;
            let rows = r.history.iter().map(|h| {
                vec![h.iteration.to_string(), h.start.to_string(), h.objective.to_string(), h.cost.to_string(), (h.feasible as u8).to_string()]
            });
            write_csv(&common.out.join(HISTORY_FILE), &HISTORY_COLUMNS, rows)?;
            println!("worst-case cost {:.5} (objective {:.5}, {} evaluations)", r.cost, r.objective, r.evaluations);
            Ok(())
        }
        Err(Error::Synthesis { message, best_objective, best_params }) => {
            let rep = InfeasibleReport { message: message.clone(), best_objective, best_coordinates: best_params };
            write_toml(&common.out.join("infeasible.toml"), &rep)?;
            Err(CliError::new(EXIT_INFEASIBLE, format!("{message}; best penalised objective {best_objective:.6e}")))
        }
        Err(e) => Err(e.into()),
    }
}

pub const HISTORY_COLUMNS: [&str; 5] = ["iteration", "start", "objective", "cost", "feasible"];

pub fn read_controller(path: &Path) -> CliResult<ControllerFile> {
    if !path.exists() {
        return Err(CliError::new(EXIT_MISSING, format!("controller file {} not found (run `slosh tune` first)", path.display())));
    }
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let file: ControllerFile = toml::from_str(&text).map_err(|e| io_err(path, e))?;
    file.controller.validate().map_err(|e| io_err(path, e))?;
    Ok(file)
}

/// Metrics summary written next to each time series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsFile {
    pub scenario: String,
    pub open_loop: bool,
    pub engaged_at: Option<f64>,
    #[serde(flatten)]
    pub metrics: Metrics,
    pub stop_events: usize,
}

fn series_rows(s: &SimSeries) -> impl Iterator<Item = Vec<String>> + '_ {
    (0..s.len()).map(move |i| {
        let r = s.row(i);
        let mut v: Vec<String> = r[..9].iter().map(|x| x.to_string()).collect();
        v.push((s.engaged[i] as u8).to_string());
        v
    })
}

/// Runs one configured scenario, with the controller unless `open_loop`.
pub fn run_scenario(cfg: &ProjectConfig, name: &str, ctrl: Option<&ControllerParams>, seed: Option<u64>) -> CliResult<SimResult> {
    let mut scn = cfg.scenario(name)?;
    if let Some(s) = seed {
        scn.seed = s;
    }
    let setup = match ctrl {
        Some(p) if scn.engage != slosh_core::architecture::EngageMode::Never => Some(ControllerSetup {
            config: cfg.architecture(),
            controller: build_controller(p)?,
            m_r_model: cfg.plant.m_r,
        }),
        _ => None,
    };
    Ok(simulate(&scn, setup.as_ref())?)
}

fn cmd_simulate(common: &Common, scenario: Option<&str>, controller: Option<&Path>, open_loop: bool) -> CliResult<()> {
    let cfg = load_config(common)?;
    let names: Vec<String> = match scenario {
        Some(n) => {
            cfg.scenario(n)?;
            vec![n.to_string()]
        }
        None => cfg.scenarios.iter().map(|s| s.name.clone()).collect(),
    };
    if names.is_empty() {
        return Err(CliError::input("configuration has no scenarios"));
    }
    let ctrl = if open_loop {
        None
    } else {
        let needs = names.iter().any(|n| cfg.scenarios.iter().any(|s| &s.name == n && !s.open_loop));
        if needs {
            let path = controller.map(Path::to_path_buf).unwrap_or_else(|| common.out.join(CONTROLLER_FILE));
            Some(read_controller(&path)?.controller)
        } else {
            None
        }
    };
    create_dir(&common.out)?;
    let results: Vec<CliResult<(String, SimResult)>> = names
        .par_iter()
        .map(|n| run_scenario(&cfg, n, ctrl.as_ref(), common.seed).map(|r| (n.clone(), r)))
        .collect();
    let mut first_err = None;
    for r in results {
        match r {
            Ok((name, res)) => {
                write_csv(&common.out.join(format!("{name}.csv")), &SimSeries::COLUMNS, series_rows(&res.series))?;
                let ticks = res.telemetry.iter().map(|k| {
                    let r = k.row();
                    let mut v: Vec<String> = r[..6].iter().map(|x| x.to_string()).collect();
                    v.push((k.engaged as u8).to_string());
                    v
                });
                write_csv(&common.out.join(format!("{name}.telemetry.csv")), &Tick::<f64>::COLUMNS, ticks)?;
                let spec_open = cfg.scenarios.iter().find(|s| s.name == name).is_some_and(|s| s.open_loop);
                let mf = MetricsFile {
                    scenario: name.clone(),
                    open_loop: open_loop || spec_open,
                    engaged_at: res.engaged_at,
                    metrics: res.metrics,
                    stop_events: res.stop_events.len(),
                };
                write_toml(&common.out.join(format!("{name}.metrics.toml")), &mf)?;
                println!(
                    "{name}: cycles_to_damp {}, max_stroke {:.4} m, terminal velocity {:.5} m/s",
                    fmt_opt(res.metrics.cycles_to_damp),
                    res.metrics.max_stroke,
                    res.metrics.terminal_tank_velocity
                );
            }
            Err(e) => {
                eprintln!("error: {}", e.message);
                first_err.get_or_insert(e);
            }
        }
    }
    first_err.map_or(Ok(()), Err)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or("none".into(), |x| x.to_string())
}

/// Weights that leave every channel in physical units.
fn unit_weights() -> WeightSpec {
    WeightSpec { omega_o: 1.0, mass_scale: 1.0, wd_dc: 1.0, wd_hf: 1.0, wc_dc: 1.0, wc_hf: 1.0, noise_scale: 1.0, ..WeightSpec::default() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub worst_case_cost: f64,
    pub max_abscissa: f64,
    pub vertex_abscissa: Vec<f64>,
    pub sample_abscissa: Vec<f64>,
    /// Indices (vertices first) of unstable closures.
    pub unstable: Vec<usize>,
}

/// Disturbance-to-slosh-velocity and noise-to-command closures for one
/// sample, in physical units.
pub fn physical_loops(s: &PlantSample, model: &LoopModel, ctrl: &StateSpace<f64>) -> slosh_core::error::Result<(StateSpace<f64>, StateSpace<f64>)> {
    let lp = weighted_loop::<f64>(s, model, &unit_weights())?;
    let open = lp.generalized().select_inputs(&[0, 1])?.select_outputs(&[0, 1])?;
    let closed = close_loop(&lp, ctrl)?;
    Ok((open, closed))
}

fn cmd_analyze(common: &Common, controller: Option<&Path>, n_random: usize, scale: Option<f64>) -> CliResult<()> {
    let cfg = load_config(common)?;
    let unc = scaled_uncertainty(&cfg, scale)?;
    let path = controller.map(Path::to_path_buf).unwrap_or_else(|| common.out.join(CONTROLLER_FILE));
    let params = read_controller(&path)?.controller;
    let ctrl = build_controller::<f64>(&params)?;
    let model = cfg.loop_model();
    let set = sample(&unc, &cfg.plant, 8 + n_random, cfg.seed);
    let n_vert = set.len().min(8);
    let grid = FreqGrid::around(cfg.omega_o())?;
    create_dir(&common.out)?;

    let rows = frequency_response(&ctrl, &grid)?.into_iter().map(|p| vec![p.omega.to_string(), p.magnitude.to_string(), p.phase.to_string()]);
    write_csv(&common.out.join("controller_tf.csv"), &["omega", "magnitude", "phase"], rows)?;

    let mut dist = Vec::new();
    let mut noise = Vec::new();
    let mut abscissa = Vec::with_capacity(set.len());
    for (i, s) in set.iter().enumerate() {
        let (open, closed) = physical_loops(s, &model, &ctrl)?;
        abscissa.push(spectral_abscissa(&closed));
        if i < n_vert {
            continue;
        }
        for (tag, sys) in [("open", &open), ("closed", &closed)] {
            let d = sys.select_inputs(&[0])?.select_outputs(&[0])?;
            for p in frequency_response(&d, &grid)? {
                dist.push(vec![i.to_string(), tag.to_string(), p.omega.to_string(), p.magnitude.to_string(), p.phase.to_string()]);
            }
        }
        let nz = closed.select_inputs(&[1])?.select_outputs(&[1])?;
        for p in frequency_response(&nz, &grid)? {
            noise.push(vec![i.to_string(), p.omega.to_string(), p.magnitude.to_string(), p.phase.to_string()]);
        }
    }
    write_csv(&common.out.join("disturbance_tf.csv"), &["sample", "loop", "omega", "magnitude", "phase"], dist)?;
    write_csv(&common.out.join("noise_tf.csv"), &["sample", "omega", "magnitude", "phase"], noise)?;

    let ev = CostEvaluator::new(&set, &cfg.weights(), &model)?;
    let cost = ev.evaluate(&ctrl).cost;
    let unstable: Vec<usize> = abscissa.iter().enumerate().filter(|(_, a)| !(**a < 0.0)).map(|(i, _)| i).collect();
    let report = AnalysisReport {
        worst_case_cost: cost,
        max_abscissa: abscissa.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        vertex_abscissa: abscissa[..n_vert].to_vec(),
        sample_abscissa: abscissa[n_vert..].to_vec(),
        unstable: unstable.clone(),
    };
    write_toml(&common.out.join("analysis.toml"), &report)?;
    println!("worst-case cost {:.5}, max spectral abscissa {:.5}", cost, report.max_abscissa);
    if !unstable.is_empty() {
        let list: Vec<String> = unstable.iter().map(|i| format!("#{i} {:?}", set[*i].params)).collect();
        return Err(CliError::new(EXIT_UNSTABLE, format!("unstable closures: {}", list.join("; "))));
    }
    Ok(())
}
