use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use clap::{Args, Parser, Subcommand};
use gfvcc::sim::metrics::{self, MetricsContext};
use gfvcc::sim::{self, io, presets, Scenario};
use gfvcc::Error;

#[derive(Parser, Debug)]
#[command(name = "gfvcc", version, about = "Grid-forming vector current control fault ride-through simulator")]
struct Cli {
    /// More output; repeat for per-metric detail.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    /// Only report errors.
    #[arg(short, long, global = true, conflicts_with = "verbose")]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate scenarios and write trajectory and metrics files.
    Run(RunArgs),
    /// Check scenarios without running them.
    Validate {
        #[arg(required = true)]
        scenarios: Vec<String>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Recompute metrics from a trajectory CSV.
    Metrics {
        trajectory: PathBuf,
        /// Scenario that produced the trajectory.
        #[arg(short, long)]
        scenario: String,
        #[command(flatten)]
        overrides: Overrides,
        /// Write the metrics here instead of standard output.
        #[arg(short, long)]
        out: Option<PathBuf>,
        #[arg(long)]
        force: bool,
    },
    /// Write the bundled scenario files.
    Presets {
        #[command(flatten)]
        output: Output,
        /// Print the preset names instead of writing files.
        #[arg(long)]
        list: bool,
    },
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Scenario files or bundled preset names.
    #[arg(required_unless_present = "all_presets")]
    scenarios: Vec<String>,
    /// Run every bundled preset.
    #[arg(long)]
    all_presets: bool,
    #[command(flatten)]
    overrides: Overrides,
    #[command(flatten)]
    output: Output,
    /// Scenarios simulated concurrently.
    #[arg(short, long, default_value_t = 1, value_parser = clap::value_parser!(u16).range(1..))]
    jobs: u16,
}

#[derive(Args, Debug)]
struct Overrides {
    /// Override a scenario value, e.g. `control.i_lim_pu=1.5`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Args, Debug)]
struct Output {
    /// Output directory.
    #[arg(short, long, env = "GFVCC_OUT_DIR", default_value = "out")]
    out: PathBuf,
    /// Replace existing output files.
    #[arg(long)]
    force: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Status {
    Ok = 0,
    Invalid = 1,
    Diverged = 2,
}

impl From<&Error> for Status {
    fn from(e: &Error) -> Self {
        match e {
            Error::Divergence { .. } => Status::Diverged,
            _ => Status::Invalid,
        }
    }
}

struct Log {
    level: i8,
}

impl Log {
    fn info(&self, msg: impl std::fmt::Display) {
        if self.level >= 0 {
            println!("{msg}");
        }
    }

    fn debug(&self, msg: impl std::fmt::Display) {
        if self.level >= 1 {
            println!("{msg}");
        }
    }

    fn error(&self, msg: impl std::fmt::Display) {
        eprintln!("error: {msg}");
    }
}

/// A scenario argument: an existing file, the same path with `.toml`
/// appended, or a bundled preset.
struct Source {
    stem: String,
    text: String,
}

fn resolve(arg: &str) -> Result<Source, Error> {
    let path = Path::new(arg);
    let with_ext = PathBuf::from(format!("{arg}.toml"));
    for p in [path, with_ext.as_path()] {
        if p.is_file() {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            let stem = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| arg.to_string());
            return Ok(Source { stem, text });
        }
    }
    match presets::find(arg) {
        Some(p) => Ok(Source { stem: p.name, text: p.text }),
        None => Err(Error::io(path, std::io::ErrorKind::NotFound.into())),
    }
}

fn load(arg: &str, overrides: &[String]) -> Result<(String, Scenario), Error> {
    let src = resolve(arg)?;
    let s = sim::load_scenario(&src.text, overrides).map_err(|e| match e {
        Error::Io { .. } | Error::Format { .. } => e,
        other => Error::Format { path: PathBuf::from(arg), message: other.to_string() },
    })?;
    let stem = s.name.clone().unwrap_or(src.stem);
    Ok((stem, s))
}

fn overwrite_hint(e: &Error) -> String {
    match e {
        Error::Io { source, .. } if source.kind() == std::io::ErrorKind::AlreadyExists => {
            format!("{e} (pass --force to overwrite)")
        }
        _ => e.to_string(),
    }
}

fn run_one(arg: &str, a: &RunArgs, log: &Log) -> Status {
    let (stem, scenario) = match load(arg, &a.overrides.set) {
        Ok(v) => v,
        Err(e) => {
            log.error(&e);
            return Status::from(&e);
        }
    };
    let ctx = MetricsContext::from_scenario(&scenario);
    let (output, failure) = match sim::run(&scenario) {
        Ok(out) => (out, None),
        Err(d) => (d.output, Some(d.error)),
    };
    let m = metrics::compute(&output.trajectory, &ctx);
    let written = match io::write_outputs(&a.output.out, &stem, &output.trajectory, &m, a.output.force) {
        Ok(p) => p,
        Err(e) => {
            log.error(overwrite_hint(&e));
            return Status::Invalid;
        }
    };
    if let Some(e) = failure {
        log.error(format_args!("{stem}: {e}; partial trajectory in {}", written.trajectory.display()));
        return Status::Diverged;
    }
    log.info(format_args!(
        "{stem}: {} rows, {} controller steps -> {}",
        output.trajectory.len(),
        output.diagnostics.controller_invocations,
        written.trajectory.display()
    ));
    for (k, v) in &m {
        log.debug(format_args!("  {k} = {v}"));
    }
    Status::Ok
}

fn run(a: &RunArgs, log: &Log) -> Status {
    let mut names = a.scenarios.clone();
    if a.all_presets {
        names.extend(presets::all().into_iter().map(|p| p.name));
    }
    let next = AtomicUsize::new(0);
    let worst = Mutex::new(Status::Ok);
    let workers = usize::from(a.jobs).min(names.len()).max(1);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(name) = names.get(i) else { break };
                let status = run_one(name, a, log);
                let mut w = worst.lock().unwrap();
                *w = (*w).max(status);
            });
        }
    });
    worst.into_inner().unwrap()
}

fn validate(scenarios: &[String], overrides: &[String], log: &Log) -> Status {
    let mut worst = Status::Ok;
    for arg in scenarios {
        match load(arg, overrides) {
            Ok((stem, s)) => log.info(format_args!(
                "{stem}: ok ({} converters, {} control steps)",
                s.converters.len(),
                s.control_steps()
            )),
            Err(e) => {
                log.error(&e);
                worst = worst.max(Status::from(&e));
            }
        }
    }
    worst
}

fn recompute(trajectory: &Path, scenario: &str, overrides: &[String], out: Option<&Path>, force: bool) -> Result<String, Error> {
    let (_, s) = load(scenario, overrides)?;
    let traj = io::load_trajectory(trajectory)?;
    let expected = s.converters.len();
    if traj.converter_count() != expected {
        return Err(Error::Format {
            path: trajectory.to_path_buf(),
            message: format!("{} converters in the trajectory, {expected} in the scenario", traj.converter_count()),
        });
    }
    let m = metrics::compute(&traj, &MetricsContext::from_scenario(&s));
    if let Some(path) = out {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        io::write_metrics(path, &m, force)?;
    }
    Ok(metrics::to_toml(&m))
}

fn write_presets(o: &Output, log: &Log) -> Result<(), Error> {
    std::fs::create_dir_all(&o.out).map_err(|e| Error::io(&o.out, e))?;
    for p in presets::all() {
        let path = o.out.join(format!("{}.toml", p.name));
        if path.exists() && !o.force {
            return Err(Error::io(path, std::io::ErrorKind::AlreadyExists.into()));
        }
        std::fs::write(&path, &p.text).map_err(|e| Error::io(&path, e))?;
        log.info(path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let log = Log { level: if cli.quiet { -1 } else { cli.verbose as i8 } };
    let status = match &cli.command {
        Command::Run(a) => run(a, &log),
        Command::Validate { scenarios, overrides } => validate(scenarios, &overrides.set, &log),
        Command::Metrics { trajectory, scenario, overrides, out, force } => {
            match recompute(trajectory, scenario, &overrides.set, out.as_deref(), *force) {
                Ok(text) => {
                    if out.is_none() {
                        print!("{text}");
                    }
                    Status::Ok
                }
                Err(e) => {
                    log.error(overwrite_hint(&e));
                    Status::from(&e)
                }
            }
        }
        Command::Presets { output, list } => {
            if *list {
                let mut out = std::io::stdout().lock();
                let _ = presets::all().iter().try_for_each(|p| writeln!(out, "{}", p.name));
                Status::Ok
            } else if let Err(e) = write_presets(output, &log) {
                log.error(overwrite_hint(&e));
                Status::Invalid
            } else {
                Status::Ok
            }
        }
    };
    ExitCode::from(status as u8)
}
