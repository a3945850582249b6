mod commands;
mod output;
mod run;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use clap::{Parser, Subcommand, ValueEnum};
use fptorus::Error;

use commands::Summary;
use output::OutDir;
use run::RunConfig;

#[derive(Parser, Debug)]
#[command(name = "fptorus", version, about = "Nonlinear Fokker-Planck solvers on the periodic torus")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Problem config; `sweep` takes several.
    #[arg(long, global = true)]
    config: Vec<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Overrides `[run] seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Finite-volume run with diagnostics and snapshots.
    Simulate,
    /// Mass-matched equilibrium and its free energy.
    Equilibrium,
    /// A priori bounds, fixed-point constants and window times.
    Bounds,
    /// Fixed point on one window with a contraction estimate.
    Picard,
    /// Concatenated fixed-point windows up to `T_final`.
    Global,
    /// Gaussian, mass and integral bounds of the discrete kernel.
    KernelValidate,
    /// Runs one command over several configs in parallel.
    Sweep {
        #[arg(long, value_enum, default_value_t = Task::Simulate)]
        task: Task,
        /// Worker threads; defaults to the available parallelism.
        #[arg(long)]
        jobs: Option<usize>,
    },
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum Task {
    Simulate,
    Equilibrium,
    Bounds,
    Picard,
    Global,
    KernelValidate,
}

impl Task {
    fn name(self) -> &'static str {
        match self {
            Task::Simulate => "simulate",
            Task::Equilibrium => "equilibrium",
            Task::Bounds => "bounds",
            Task::Picard => "picard",
            Task::Global => "global",
            Task::KernelValidate => "kernel-validate",
        }
    }

    fn run(self, rc: &RunConfig, out: &OutDir) -> fptorus::Result<Summary> {
        match self {
            Task::Simulate => commands::simulate(rc, out),
            Task::Equilibrium => commands::equilibrium(rc, out),
            Task::Bounds => commands::bounds(rc, out),
            Task::Picard => commands::picard(rc, out),
            Task::Global => commands::global(rc, out),
            Task::KernelValidate => commands::kernel_validate(rc, out),
        }
    }
}

/// Error class and exit code.
fn classify(e: &Error) -> (&'static str, u8) {
    match e {
        Error::Assumption { .. } | Error::NonPositive { .. } => ("assumption", 2),
        Error::Numerical(_)
        | Error::NonFinite { .. }
        | Error::NonContraction { .. }
        | Error::LeftFixedPointSet(_)
        | Error::HorizonExceeded { .. } => ("numerical", 3),
        Error::Io(_) | Error::Csv(_) => ("io", 1),
        Error::Config { .. } | Error::Parse(_) | Error::Eval(_) => ("config", 1),
        Error::Precondition(_) | Error::Grid(_) | Error::GridMismatch { .. } => ("precondition", 1),
    }
}

fn report_error(kind: &str, code: u8, msg: &str) {
    eprintln!("error kind={kind} exit={code} message={msg:?}");
}

/// Runs one task into `out`; returns the exit code.
fn run_one(task: Task, config: &Path, out: &Path, seed: Option<u64>, quiet: bool) -> u8 {
    let result = RunConfig::load(config, out, seed).and_then(|rc| {
        let dir = OutDir::create(&rc)?;
        let summary = task.run(&rc, &dir)?;
        dir.finish(&rc, task.name())?;
        Ok(summary)
    });
    match result {
        Ok(summary) => {
            if !quiet {
                for line in &summary.lines {
                    println!("{line}");
                }
            }
            match summary.failed {
                Some(msg) => {
                    report_error("check", 3, &msg);
                    3
                }
                None => 0,
            }
        }
        Err(e) => {
            let (kind, code) = classify(&e);
            report_error(kind, code, &e.to_string());
            code
        }
    }
}

/// One output directory per config, named after its file stem.
fn sweep_dirs(configs: &[PathBuf], out: &Path) -> Vec<PathBuf> {
    let mut seen: Vec<String> = Vec::new();
    configs
        .iter()
        .map(|p| {
            let stem = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "run".into());
            let n = seen.iter().filter(|s| **s == stem).count();
            seen.push(stem.clone());
            if n == 0 {
                out.join(stem)
            } else {
                out.join(format!("{stem}_{n}"))
            }
        })
        .collect()
}

fn sweep(cli: &Cli, task: Task, jobs: Option<usize>) -> u8 {
    let dirs = sweep_dirs(&cli.config, &cli.out);
    let jobs = jobs
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
        .clamp(1, cli.config.len());
    let next = AtomicUsize::new(0);
    let codes = Mutex::new(vec![0u8; cli.config.len()]);
    std::thread::scope(|s| {
        for _ in 0..jobs {
            s.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::SeqCst);
                if k >= cli.config.len() {
                    break;
                }
                let code = run_one(task, &cli.config[k], &dirs[k], cli.seed, true);
                codes.lock().expect("no worker panics while holding the lock")[k] = code;
            });
        }
    });
    let codes = codes.into_inner().expect("workers finished");
    let listing: String = cli
        .config
        .iter()
        .zip(&dirs)
        .zip(&codes)
        .map(|((c, d), code)| format!("{},{},{code}\n", c.display(), d.display()))
        .collect();
    if let Err(e) = std::fs::write(cli.out.join("sweep.csv"), format!("config,out,exit\n{listing}")) {
        report_error("io", 1, &e.to_string());
        return 1;
    }
    if !cli.quiet {
        print!("{listing}");
    }
    codes.into_iter().max().unwrap_or(0)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            if e.use_stderr() {
                report_error("usage", 1, e.to_string().lines().next().unwrap_or(""));
                return ExitCode::from(1);
            }
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
    };
    let task = match cli.command {
        Command::Sweep { task, jobs } => {
            if cli.config.is_empty() {
                report_error("usage", 1, "sweep needs at least one --config");
                return ExitCode::from(1);
            }
            return ExitCode::from(sweep(&cli, task, jobs));
        }
        Command::Simulate => Task::Simulate,
        Command::Equilibrium => Task::Equilibrium,
        Command::Bounds => Task::Bounds,
        Command::Picard => Task::Picard,
        Command::Global => Task::Global,
        Command::KernelValidate => Task::KernelValidate,
    };
    let [config] = cli.config.as_slice() else {
        report_error("usage", 1, "exactly one --config is required");
        return ExitCode::from(1);
    };
    ExitCode::from(run_one(task, config, &cli.out, cli.seed, cli.quiet))
}
