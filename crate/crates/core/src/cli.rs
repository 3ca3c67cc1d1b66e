//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error
//! (missing or malformed input file), 3 numerical abort.

use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::device_model::{fit_device, n_max_for_bits, read_measurements, FitError, FitOptions};
use crate::experiment::config::parse_lines;
use crate::experiment::report::{fmt_g, write_header, write_rows};
use crate::experiment::sweep::split_sweep_entries;
use crate::experiment::{
    evaluate_with_sparsity, load_datasets, network_from_snapshot, prepare, run_sweep, train_network,
    ConfigError, ExperimentConfig, SweepSpec, TrainError, WeightHistogram,
};
use crate::perceptron::snapshot::Snapshot;

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "RRAM_SIM_OUT";

#[derive(Debug, Parser)]
#[command(name = "rram-sim", version, about = "Online training of RRAM-synapse perceptrons on MNIST")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit (g_min, g_max, k) to a measured potentiation/depression cycle.
    FitDevice(FitArgs),
    /// Train one configuration.
    Train(RunArgs),
    /// Train every cell of a sweep and merge the results.
    Sweep(RunArgs),
    /// Evaluate a saved network on the test split.
    Eval(EvalArgs),
    /// Write the weight histograms of a saved network as CSV.
    Export(ExportArgs),
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Measurement file: `pulse_index conductance` per line.
    pub measurements: PathBuf,
    /// Pulses per full potentiation.
    #[arg(long, conflicts_with = "weight_bits")]
    pub n_max: Option<u32>,
    /// Weight precision; sets the pulse count to 2^bits - 1.
    #[arg(long, default_value_t = 8)]
    pub weight_bits: u32,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long, value_name = "PATH")]
    pub config: PathBuf,
    /// Override a config value; may be repeated.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Output directory [default: $RRAM_SIM_OUT or ./out].
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Concurrent sweep cells [default: logical processors].
    #[arg(long, value_name = "N")]
    pub jobs: Option<usize>,
    /// Shorthand for `--set run.seed=U64`.
    #[arg(long, value_name = "U64")]
    pub seed: Option<u64>,
    /// Suppress per-epoch progress on stderr.
    #[arg(long, short)]
    pub quiet: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Snapshot written by `train`.
    pub snapshot: PathBuf,
    /// Override a stored config value (for example data paths).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    pub snapshot: PathBuf,
    #[arg(long, default_value_t = 64)]
    pub bins: usize,
    /// Output CSV [default: stdout].
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

/// A failure with its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self { code: 1, message: message.into() }
    }
    fn data(message: impl Into<String>) -> Self {
        Self { code: 2, message: message.into() }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::usage(e.to_string())
    }
}

impl From<TrainError> for Failure {
    fn from(e: TrainError) -> Self {
        let code = match e {
            TrainError::NonFinite { .. } => 3,
            TrainError::Config(_) => 1,
            _ => 2,
        };
        Self { code, message: e.to_string() }
    }
}

fn io_failure(path: &Path, e: io::Error) -> Failure {
    Failure::data(format!("{}: {e}", path.display()))
}

/// Parses `argv`, runs the command and returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

pub fn execute(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::FitDevice(a) => fit(a),
        Command::Train(a) => train_cmd(a),
        Command::Sweep(a) => sweep_cmd(a),
        Command::Eval(a) => eval_cmd(a),
        Command::Export(a) => export_cmd(a),
    }
}

fn parse_sets(sets: &[String], seed: Option<u64>) -> Result<Vec<(String, String)>, Failure> {
    let mut out = Vec::new();
    for s in sets {
        let (k, v) = s
            .split_once('=')
            .ok_or_else(|| Failure::usage(format!("--set expects KEY=VALUE, got {s:?}")))?;
        out.push((k.trim().to_owned(), v.trim().to_owned()));
    }
    if let Some(seed) = seed {
        out.push(("run.seed".into(), seed.to_string()));
    }
    Ok(out)
}

fn read_config_text(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::data(format!("cannot read config {}: {e}", path.display())))
}

fn out_dir(arg: Option<PathBuf>) -> PathBuf {
    arg.or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path).map(BufWriter::new).map_err(|e| io_failure(path, e))
}

fn fit(a: FitArgs) -> Result<(), Failure> {
    let n_max = match a.n_max {
        Some(n) => n,
        None => n_max_for_bits(a.weight_bits).map_err(|e| Failure::usage(e.to_string()))?,
    };
    let file = File::open(&a.measurements).map_err(|e| io_failure(&a.measurements, e))?;
    let points = read_measurements(BufReader::new(file))
        .map_err(|e| Failure::data(format!("{}: {e}", a.measurements.display())))?;
    let print = |f: &crate::device_model::DeviceFit| {
        let p = &f.params;
        println!("g_min = {}", fmt_g(p.g_min));
        println!("g_max = {}", fmt_g(p.g_max));
        match p.k() {
            Some(k) => println!("k = {}", fmt_g(k)),
            None => println!("k = none"),
        }
        println!("anl = {}", fmt_g(p.anl()));
        println!("n_max = {}", p.n_max);
        println!("residual_rms = {}", fmt_g(f.residual_rms));
        println!("iterations = {}", f.iterations);
    };
    match fit_device(&points, n_max, FitOptions::default()) {
        Ok(f) => {
            print(&f);
            Ok(())
        }
        Err(FitError::NotConverged { best, iterations }) => {
            print(&best);
            Err(Failure {
                code: 3,
                message: format!("fit did not converge in {iterations} iterations"),
            })
        }
        Err(e) => Err(Failure::data(format!("{}: {e}", a.measurements.display()))),
    }
}

fn load_run_config(a: &RunArgs) -> Result<(String, Vec<(String, String)>), Failure> {
    let text = read_config_text(&a.config)?;
    let sets = parse_sets(&a.set, a.seed)?;
    Ok((text, sets))
}

fn progress(quiet: bool, label: &str, m: &crate::experiment::EpochMetrics) {
    if !quiet {
        eprintln!(
            "{label}epoch {:>2}  mse {}  acc {}%  hidden sparsity {}%  update sparsity {}%",
            m.epoch,
            fmt_g(m.train_mse),
            fmt_g(m.test_acc),
            fmt_g(m.hidden_sparsity),
            fmt_g(m.update_sparsity)
        );
    }
}

fn train_cmd(a: RunArgs) -> Result<(), Failure> {
    let (text, sets) = load_run_config(&a)?;
    let origin = a.config.display().to_string();
    let (plain, sweep) = split_sweep_entries(parse_lines(&text, &origin)?);
    if let Some((line, k, _)) = sweep.first() {
        return Err(Failure::usage(format!(
            "{origin}: line {line}: `{k}` is a sweep key; use the sweep command"
        )));
    }
    let mut cfg = ExperimentConfig::default();
    cfg.apply_entries(&plain, &origin)?;
    for (k, v) in &sets {
        cfg.set(k, v)?;
    }
    cfg.validate()?;

    let (train_set, test_set) = load_datasets(&cfg).map_err(|e| Failure::data(e.to_string()))?;
    let prepared = prepare(&cfg, &train_set)?;
    let resolved = prepared.resolved;
    let mut net = prepared.network;

    let dir = out_dir(a.out);
    fs::create_dir_all(&dir).map_err(|e| io_failure(&dir, e))?;
    let echo_path = dir.join("config.txt");
    fs::write(&echo_path, resolved.echo()).map_err(|e| io_failure(&echo_path, e))?;

    let record = train_network(&mut net, &resolved, &train_set, &test_set, |m, _| progress(a.quiet, "", m))?;

    let results = dir.join("results.csv");
    let mut w = create(&results)?;
    write_header(&mut w)
        .and_then(|_| write_rows(&mut w, 0, &resolved, &record))
        .and_then(|_| w.flush())
        .map_err(|e| io_failure(&results, e))?;
    for (epoch, h) in &record.histograms {
        let p = dir.join(format!("weights_epoch{epoch:02}.csv"));
        let mut w = create(&p)?;
        h.write_csv(&mut w).and_then(|_| w.flush()).map_err(|e| io_failure(&p, e))?;
    }
    let n_train = match resolved.train_limit {
        0 => train_set.len(),
        n => n.min(train_set.len()),
    };
    let steps = (record.epochs.len() * n_train.div_ceil(resolved.batch)) as u64;
    let snap = Snapshot::capture(&net, resolved.echo_lines(), resolved.seed, steps);
    let snap_path = dir.join("network.snapshot");
    let mut w = create(&snap_path)?;
    snap.write_to(&mut w).and_then(|_| w.flush()).map_err(|e| io_failure(&snap_path, e))?;
    if let Some(m) = record.last() {
        println!("final test accuracy {}%", fmt_g(m.test_acc));
    }
    println!("wrote {}", dir.display());
    Ok(())
}

fn sweep_cmd(a: RunArgs) -> Result<(), Failure> {
    let (text, sets) = load_run_config(&a)?;
    let origin = a.config.display().to_string();
    let spec = SweepSpec::from_text(&text, &origin, &sets)?;
    let cells = spec.cells()?;
    let (train_set, test_set) = load_datasets(&spec.base).map_err(|e| Failure::data(e.to_string()))?;
    let jobs = a
        .jobs
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
        .max(1);
    if !a.quiet {
        eprintln!("{} cells, {jobs} at a time", cells.len());
    }
    let quiet = a.quiet;
    let results = run_sweep(&cells, &train_set, &test_set, jobs, |r| {
        if let Some(m) = r.record.last() {
            progress(quiet, &format!("cell {} done: ", r.run_id), m);
        }
    })
    .map_err(|(id, e)| {
        let f = Failure::from(e);
        Failure {
            code: f.code,
            message: format!("cell {id}: {}", f.message),
        }
    })?;

    let dir = out_dir(a.out);
    fs::create_dir_all(&dir).map_err(|e| io_failure(&dir, e))?;
    let path = dir.join("sweep.csv");
    let mut w = create(&path)?;
    let write = |w: &mut BufWriter<File>| -> io::Result<()> {
        write_header(&mut *w)?;
        for r in &results {
            write_rows(&mut *w, r.run_id, &r.config, &r.record)?;
        }
        w.flush()
    };
    write(&mut w).map_err(|e| io_failure(&path, e))?;
    let cfg_path = dir.join("cells.txt");
    let mut w = create(&cfg_path)?;
    let write_cells = |w: &mut BufWriter<File>| -> io::Result<()> {
        for r in &results {
            writeln!(w, "# run_id {}", r.run_id)?;
            w.write_all(r.config.echo().as_bytes())?;
        }
        w.flush()
    };
    write_cells(&mut w).map_err(|e| io_failure(&cfg_path, e))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn read_snapshot(path: &Path) -> Result<Snapshot, Failure> {
    let file = File::open(path).map_err(|e| io_failure(path, e))?;
    Snapshot::read_from(BufReader::new(file)).map_err(|e| Failure::data(format!("{}: {e}", path.display())))
}

fn eval_cmd(a: EvalArgs) -> Result<(), Failure> {
    let mut snap = read_snapshot(&a.snapshot)?;
    for (k, v) in parse_sets(&a.set, None)? {
        snap.config.push(format!("{k} = {v}"));
    }
    // later lines win
    let mut seen = std::collections::HashSet::new();
    let mut lines: Vec<String> = snap
        .config
        .iter()
        .rev()
        .filter(|l| seen.insert(l.split('=').next().unwrap_or("").trim().to_owned()))
        .cloned()
        .collect();
    lines.reverse();
    snap.config = lines;
    let (cfg, net) = network_from_snapshot(&snap).map_err(|e| Failure::data(format!("{}: {e}", a.snapshot.display())))?;
    let (_, test_set) = load_datasets(&cfg).map_err(|e| Failure::data(e.to_string()))?;
    let test_set = test_set.requantized(&net.quant).truncated(cfg.test_limit);
    let (acc, sparsity) = evaluate_with_sparsity(&net, &test_set).map_err(|e| Failure::data(e.to_string()))?;
    println!("test_acc = {}", fmt_g(acc));
    println!("hidden_sparsity = {}", fmt_g(sparsity));
    Ok(())
}

fn export_cmd(a: ExportArgs) -> Result<(), Failure> {
    if a.bins == 0 {
        return Err(Failure::usage("--bins must be at least 1"));
    }
    let snap = read_snapshot(&a.snapshot)?;
    let (_, net) = network_from_snapshot(&snap).map_err(|e| Failure::data(format!("{}: {e}", a.snapshot.display())))?;
    let h = WeightHistogram::of_network(&net, a.bins);
    match a.out {
        Some(p) => {
            let mut w = create(&p)?;
            h.write_csv(&mut w).and_then(|_| w.flush()).map_err(|e| io_failure(&p, e))
        }
        None => h.write_csv(io::stdout().lock()).map_err(|e| Failure::data(e.to_string())),
    }
}
