//! `ips-sim`: calibrate, simulate, train, evaluate, report and bench.
//!
//! Results go to stdout, diagnostics to stderr. Exit codes: 0 success,
//! 1 usage error, 2 data or validation error.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use ips_core::eval::{self, BenchConfig, DEFAULT_TOLERANCE_M};
use ips_core::locator::{self, PositionRecord};
use ips_core::ml::{self, LinearModel, ModelKind, TrainConfig};
use ips_core::netsim::{self, NavSignal};
use ips_core::pathloss::{self, ApCalibration, Estimator, NoiseConfig, PathLossParams, Shadowing};
use ips_core::scenario::{self, DatasetRow, ScenarioSpec};
use ips_core::{Agent, Error as CoreError};

#[derive(Debug, Parser)]
#[command(name = "ips-sim", version, about = "Wi-Fi RSSI human/robot positioning simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct SeedArg {
    /// Master seed; falls back to $IPS_SIM_SEED, then 0.
    #[arg(long, env = "IPS_SIM_SEED", default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Estimate (A, n) per access point from RSSI sample CSVs.
    Calibrate {
        /// Samples recorded at --known-distance (timestamp,ap_id,rssi).
        #[arg(long)]
        samples: PathBuf,
        #[arg(long)]
        known_distance: f64,
        /// Samples recorded 1 m from each access point.
        #[arg(long, conflicts_with = "a_ref", required_unless_present = "a_ref")]
        reference: Option<PathBuf>,
        /// Use this A (dBm) for every access point instead of --reference.
        #[arg(long, allow_hyphen_values = true)]
        a_ref: Option<f64>,
        #[arg(long, value_enum, default_value_t = EstimatorArg::Mean)]
        estimator: EstimatorArg,
    },
    /// Synthesize calibration samples for one access point.
    SampleRssi {
        #[arg(long)]
        distance: f64,
        #[arg(long, default_value_t = 500)]
        count: usize,
        #[arg(long, default_value_t = 1)]
        ap: u8,
        #[arg(long, allow_hyphen_values = true, default_value_t = PathLossParams::default().a_ref)]
        a_ref: f64,
        #[arg(long, default_value_t = PathLossParams::default().n_env)]
        n_env: f64,
        #[arg(long, default_value_t = pathloss::DEFAULT_SIGMA_DB)]
        sigma: f64,
        #[command(flatten)]
        seed: SeedArg,
    },
    /// Run a scenario and write its dataset CSV.
    Simulate {
        /// Builtin name (stationary, scenario1..3), a JSON file, or inline JSON.
        #[arg(long)]
        scenario: String,
        #[command(flatten)]
        seed: SeedArg,
        /// Shadowing sigma in dB; overrides the scenario's value.
        #[arg(long)]
        sigma: Option<f64>,
        /// Dataset CSV path (default: stdout).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Route reports through the simulated node/server network.
        #[arg(long)]
        net: bool,
        #[arg(long)]
        drop_probability: Option<f64>,
        #[arg(long)]
        latency_ticks: Option<u32>,
        /// Navigation signal log (JSON lines).
        #[arg(long)]
        signals: Option<PathBuf>,
        /// Estimated position stream CSV.
        #[arg(long)]
        positions: Option<PathBuf>,
    },
    /// Train a classifier on a dataset CSV and print held-out metrics.
    Train {
        /// Dataset CSV, or - for stdin.
        #[arg(long, default_value = "-")]
        data: String,
        #[arg(long, value_enum)]
        model: ModelArg,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        seed: SeedArg,
        #[arg(long)]
        train_fraction: Option<f64>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        learning_rate: Option<f64>,
    },
    /// Score a saved model on a dataset CSV.
    Evaluate {
        #[arg(long, default_value = "-")]
        data: String,
        #[arg(long)]
        model_file: PathBuf,
    },
    /// Separation error statistics for a dataset CSV.
    Report {
        #[arg(long, default_value = "-")]
        data: String,
        #[arg(long, default_value_t = DEFAULT_TOLERANCE_M)]
        tolerance: f64,
        #[arg(long, default_value = "dataset")]
        name: String,
    },
    /// Every builtin scenario × every model.
    Bench {
        #[arg(long)]
        all: bool,
        #[command(flatten)]
        seed: SeedArg,
        #[arg(long, default_value_t = pathloss::DEFAULT_SIGMA_DB)]
        sigma: f64,
        #[arg(long, default_value_t = DEFAULT_TOLERANCE_M)]
        tolerance: f64,
        #[arg(long)]
        threads: Option<usize>,
        /// Emit JSON instead of the text table.
        #[arg(long)]
        json: bool,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum EstimatorArg {
    Mean,
    Median,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModelArg {
    Lr,
    Sgd,
    Svc,
}

impl From<ModelArg> for ModelKind {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Lr => ModelKind::Lr,
            ModelArg::Sgd => ModelKind::SgdHinge,
            ModelArg::Svc => ModelKind::LinearSvc,
        }
    }
}

/// Marks an error as a usage problem (exit code 1).
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    anyhow!(Usage(msg.into()))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<Usage>().is_some() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}

fn open_input(path: &str) -> Result<Box<dyn Read>> {
    if path == "-" {
        return Ok(Box::new(io::stdin().lock()));
    }
    let f = File::open(path).with_context(|| format!("opening {path}"))?;
    Ok(Box::new(BufReader::new(f)))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn print_json(v: &impl serde::Serialize) -> Result<()> {
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, v)?;
    writeln!(out)?;
    Ok(())
}

fn read_rows(data: &str) -> Result<Vec<DatasetRow>> {
    let rows = scenario::read_dataset(open_input(data)?).with_context(|| format!("reading dataset {data}"))?;
    if rows.is_empty() {
        bail!("dataset {data} has no rows");
    }
    Ok(rows)
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Calibrate { samples, known_distance, reference, a_ref, estimator } => {
            calibrate(&samples, known_distance, reference.as_deref(), a_ref, estimator)
        }
        Command::SampleRssi { distance, count, ap, a_ref, n_env, sigma, seed } => {
            let params = PathLossParams::new(a_ref, n_env)?;
            let mut noise = Shadowing::calibration(NoiseConfig { sigma_db: sigma, seed: seed.seed })?;
            let s = pathloss::synth_samples(ap, distance, &params, count, scenario::DEFAULT_SAMPLE_PERIOD_S, &mut noise)?;
            pathloss::write_samples(io::stdout().lock(), &s)?;
            Ok(())
        }
        Command::Simulate { scenario, seed, sigma, out, net, drop_probability, latency_ticks, signals, positions } => {
            let mut spec = load_scenario(&scenario)?;
            spec.noise.seed = seed.seed;
            if let Some(s) = sigma {
                spec.noise.sigma_db = s;
            }
            if let Some(p) = drop_probability {
                spec.network.drop_probability = p;
            }
            if let Some(l) = latency_ticks {
                spec.network.latency_ticks = l;
            }
            for w in spec.params.iter().flat_map(PathLossParams::warnings) {
                eprintln!("warning: {w}");
            }
            simulate(&spec, net, out.as_deref(), signals.as_deref(), positions.as_deref())
        }
        Command::Train { data, model, out, seed, train_fraction, epochs, learning_rate } => {
            let kind = ModelKind::from(model);
            let mut cfg = TrainConfig::default_for(kind).with_seed(seed.seed);
            if let Some(f) = train_fraction {
                cfg.train_fraction = f;
            }
            if let Some(e) = epochs {
                cfg.epochs = e;
            }
            if let Some(lr) = learning_rate {
                cfg.learning_rate = lr;
            }
            cfg.validate()?;
            let rows = ml::feature_rows(&read_rows(&data)?);
            let (train, test) = ml::split_rows(&rows, cfg.train_fraction, cfg.seed)?;
            let m = ml::train(&train, kind, &cfg)?;
            if m.single_class {
                eprintln!("warning: training split holds a single class; model is constant");
            }
            let metrics = ml::evaluate(&m, &test)?;
            let mut w = create(&out)?;
            serde_json::to_writer_pretty(&mut w, &m)?;
            writeln!(w)?;
            w.flush()?;
            print_json(&json!({
                "model": kind,
                "train_rows": train.len(),
                "test_rows": test.len(),
                "single_class": m.single_class,
                "metrics": metrics,
            }))
        }
        Command::Evaluate { data, model_file } => {
            let f = File::open(&model_file).with_context(|| format!("opening {}", model_file.display()))?;
            let m: LinearModel = serde_json::from_reader(BufReader::new(f)).context("parsing model file")?;
            m.validate()?;
            let rows = ml::feature_rows(&read_rows(&data)?);
            print_json(&ml::evaluate(&m, &rows)?)
        }
        Command::Report { data, tolerance, name } => {
            let rows = read_rows(&data)?;
            print_json(&eval::report_from_rows(&name, &rows, tolerance)?)
        }
        Command::Bench { all, seed, sigma, tolerance, threads, json } => {
            if !all {
                return Err(usage("bench currently requires --all"));
            }
            if threads == Some(0) {
                return Err(usage("--threads must be at least 1"));
            }
            let cfg = BenchConfig { seed: seed.seed, sigma_db: sigma, tolerance, threads, ..BenchConfig::default() };
            let cases = eval::run_bench(&cfg)?;
            if json {
                print_json(&cases)
            } else {
                let mut out = io::stdout().lock();
                out.write_all(eval::render_bench(&cfg, &cases).as_bytes())?;
                Ok(())
            }
        }
    }
}

fn load_scenario(arg: &str) -> Result<ScenarioSpec> {
    if let Some(s) = scenario::builtin(arg) {
        return Ok(s);
    }
    let text = if arg.trim_start().starts_with('{') {
        arg.to_owned()
    } else if Path::new(arg).is_file() {
        std::fs::read_to_string(arg).with_context(|| format!("reading {arg}"))?
    } else {
        let names: Vec<String> = scenario::builtin_scenarios().into_iter().map(|s| s.name).collect();
        return Err(usage(format!(
            "unknown scenario {arg:?}: expected one of {} or a JSON file",
            names.join(", ")
        )));
    };
    Ok(ScenarioSpec::from_json(&text)?)
}

fn simulate(
    spec: &ScenarioSpec,
    net: bool,
    out: Option<&Path>,
    signals_path: Option<&Path>,
    positions_path: Option<&Path>,
) -> Result<()> {
    let (rows, signals, stats) = if net {
        let run = netsim::run_networked(spec)?;
        (run.rows(), run.signals, Some(run.stats))
    } else {
        let run = scenario::run_scenario(spec)?;
        let signals: Vec<NavSignal> = run
            .estimates
            .iter()
            .map(|e| NavSignal::new(netsim::tick_ms(e.timestamp), e.separation))
            .collect();
        (run.rows(), signals, None)
    };

    if let Some(p) = signals_path {
        let mut w = create(p)?;
        netsim::write_signals(&mut w, &signals)?;
        w.flush()?;
    }
    if let Some(p) = positions_path {
        let layout = spec.layout;
        let records = rows.iter().flat_map(|r| {
            let h = layout.position(r.hx_est, r.hy_est);
            let rb = layout.position(r.rx_est, r.ry_est);
            [(Agent::Human, h), (Agent::Robot, rb)].map(|(agent_id, p)| PositionRecord {
                timestamp: r.timestamp,
                agent_id,
                x: p.x,
                y: p.y,
                out_of_bounds: p.out_of_bounds,
            })
        });
        let mut w = create(p)?;
        locator::write_positions(&mut w, records)?;
        w.flush()?;
    }

    match out {
        Some(p) => {
            let mut w = create(p)?;
            scenario::write_dataset(&mut w, &rows)?;
            w.flush()?;
            print_json(&json!({
                "scenario": spec.name,
                "frames": spec.frame_count(),
                "rows": rows.len(),
                "signals": signals.len(),
                "network": stats,
            }))
        }
        None => Ok(scenario::write_dataset(io::stdout().lock(), &rows)?),
    }
}

fn calibrate(
    samples: &Path,
    known_distance: f64,
    reference: Option<&Path>,
    a_ref: Option<f64>,
    estimator: EstimatorArg,
) -> Result<()> {
    let estimator = match estimator {
        EstimatorArg::Mean => Estimator::Mean,
        EstimatorArg::Median => Estimator::Median,
    };
    let read = |p: &Path| -> Result<Vec<pathloss::RssiSample>> {
        let f = File::open(p).with_context(|| format!("opening {}", p.display()))?;
        pathloss::read_samples(BufReader::new(f)).with_context(|| format!("reading {}", p.display()))
    };
    let far = read(samples)?;
    let near = reference.map(read).transpose()?;

    let mut ap_ids: Vec<u8> = far.iter().map(|s| s.ap_id).collect();
    ap_ids.sort_unstable();
    ap_ids.dedup();
    if ap_ids.is_empty() {
        return Err(CoreError::Calibration("no samples".into()).into());
    }

    let mut out = Vec::new();
    for ap in ap_ids {
        let of = |v: &[pathloss::RssiSample]| v.iter().copied().filter(|s| s.ap_id == ap).collect::<Vec<_>>();
        let a = match (&near, a_ref) {
            (Some(n), _) => pathloss::calibrate_a(&of(n), estimator).with_context(|| format!("ap {ap}: A"))?,
            (None, Some(a)) => a,
            (None, None) => return Err(usage("need --reference or --a-ref")),
        };
        let n = pathloss::calibrate_n(&of(&far), known_distance, a, estimator).with_context(|| format!("ap {ap}: n"))?;
        let c = ApCalibration { ap_id: ap, a_ref: a, n_env: n };
        for w in c.params()?.warnings() {
            eprintln!("warning: ap {ap}: {w}");
        }
        out.push(c);
    }
    print_json(&out)
}
