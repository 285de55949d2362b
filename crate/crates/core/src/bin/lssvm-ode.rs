use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use lssvm_ode::harness::{
    cli_bench, cli_plotdata, cli_solve, cli_sweep, cli_validate, fmt_f64, read_jsonl, sweep_row, write_csv_table,
    write_jsonl, write_plotdata, write_results, ConfigOverrides, PlotSource, RunResult, SolverKind, StrategyKind,
    SweepAxis, SWEEP_COLUMNS,
};
use lssvm_ode::{Error, Result};

// stdout may be a closed pipe (`| head`)
macro_rules! say {
    ($($arg:tt)*) => {{
        let _ = writeln!(std::io::stdout(), $($arg)*);
    }};
}

#[derive(Parser)]
#[command(name = "lssvm-ode", version, about = "Nyström LS-SVM solvers for ODEs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train and evaluate one configuration.
    Solve(RunArgs),
    /// Run several problems and solvers at their defaults.
    Bench {
        /// Comma-separated problem ids (default: all 16).
        #[arg(long, value_delimiter = ',')]
        problems: Vec<usize>,
        /// Comma-separated solvers (default: nls,rk4,eab).
        #[arg(long, value_delimiter = ',')]
        solvers: Vec<String>,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Vary one parameter and record timings and accuracy.
    Sweep {
        #[arg(long)]
        axis: String,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        #[arg(long, default_value_t = 1)]
        repeats: usize,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Reference and prediction on a 1000-point grid.
    PlotData {
        /// JSONL file from `solve`; the model is rebuilt from it.
        #[arg(long)]
        result: Option<PathBuf>,
        /// Record index within `--result`.
        #[arg(long, default_value_t = 0)]
        index: usize,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Check every catalog reference solution.
    Validate {
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Clone, Default)]
struct RunArgs {
    /// TOML file with any of the flag names as keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Ignore `--config` and use only catalog defaults plus flags.
    #[arg(long)]
    defaults: bool,
    #[arg(long)]
    problem: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    sigma2: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    strategy: Option<String>,
    #[arg(long)]
    solver: Option<String>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    eab_order: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl RunArgs {
    fn overrides(&self) -> Result<ConfigOverrides> {
        let file = match (&self.config, self.defaults) {
            (Some(path), false) => ConfigOverrides::from_file(path)?,
            _ => ConfigOverrides::default(),
        };
        let flags = ConfigOverrides {
            problem: self.problem,
            n: self.n,
            m: self.m,
            sigma2: self.sigma2,
            gamma: self.gamma,
            strategy: self.strategy.as_deref().map(str::parse::<StrategyKind>).transpose()?,
            solver: self.solver.as_deref().map(str::parse::<SolverKind>).transpose()?,
            max_iters: self.max_iters,
            tol: self.tol,
            seed: self.seed,
            eab_order: self.eab_order,
            out: self.out.clone(),
        };
        Ok(file.merged(&flags))
    }
}

fn out_dir(o: &ConfigOverrides) -> PathBuf {
    o.out.clone().unwrap_or_else(|| PathBuf::from("results"))
}

fn summary(r: &RunResult) -> String {
    let m = r.metrics;
    format!(
        "problem {} {}: status {} MAE {} RMSE {} Linf {} train {:.3}s predict {:.3}s",
        r.config.problem,
        r.config.solver,
        r.status,
        fmt_f64(m.map(|m| m.mae)),
        fmt_f64(m.map(|m| m.rmse)),
        fmt_f64(m.map(|m| m.linf)),
        r.timings.train_seconds,
        r.timings.predict_seconds,
    )
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Solve(args) => {
            let cfg = args.overrides()?.resolve()?;
            let (result, files) = cli_solve(&cfg)?;
            say!("{}", summary(&result));
            say!("wrote {} and {}", files.json.display(), files.csv.display());
        }
        Command::Bench { problems, solvers, run } => {
            let o = run.overrides()?;
            let problems = if problems.is_empty() { (1..=16).collect() } else { problems };
            let solvers = if solvers.is_empty() {
                vec![SolverKind::Nls, SolverKind::Rk4, SolverKind::Eab]
            } else {
                solvers.iter().map(|s| s.parse()).collect::<Result<Vec<_>>>()?
            };
            let results = cli_bench(&problems, &solvers, &o)?;
            for r in &results {
                say!("{}", summary(r));
            }
            let files = write_results(&out_dir(&o), "bench", &results)?;
            say!("wrote {} and {}", files.json.display(), files.csv.display());
        }
        Command::Sweep { axis, values, repeats, run } => {
            let axis: SweepAxis = axis.parse()?;
            let o = run.overrides()?;
            let base = o.resolve()?;
            let rows = cli_sweep(&base, axis, &values, repeats)?;
            let table: Vec<Vec<String>> = rows.iter().map(sweep_row).collect();
            for row in &table {
                say!("{}", row.join(","));
            }
            let stem = format!("sweep-{}", axis.name());
            let csv = write_csv_table(&base.output_dir, &stem, &SWEEP_COLUMNS, &table)?;
            let results: Vec<&RunResult> = rows.iter().map(|r| &r.result).collect();
            let json = write_jsonl(&base.output_dir, &stem, &results)?;
            say!("wrote {} and {}", json.display(), csv.display());
        }
        Command::PlotData { result, index, run } => {
            let o = run.overrides()?;
            let (rows, stem) = match result {
                Some(path) => {
                    let records: Vec<RunResult> = read_jsonl(&path)?;
                    let r = records.get(index).ok_or_else(|| {
                        Error::InvalidConfig(format!("{} has {} records", path.display(), records.len()))
                    })?;
                    (cli_plotdata(PlotSource::Result(r))?, format!("plot-p{}", r.config.problem))
                }
                None => {
                    let cfg = o.resolve()?;
                    (cli_plotdata(PlotSource::Config(&cfg))?, format!("plot-p{}", cfg.problem))
                }
            };
            let path = write_plotdata(&out_dir(&o), &stem, &rows)?;
            say!("wrote {}", path.display());
        }
        Command::Validate { out } => {
            let reports = cli_validate();
            let mut failed = 0;
            for r in &reports {
                let worst = r.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect::<Vec<_>>();
                say!(
                    "problem {:2}: {}{}",
                    r.problem,
                    if r.passed() { "PASS" } else { "FAIL" },
                    if worst.is_empty() { String::new() } else { format!(" ({})", worst.join(", ")) }
                );
                failed += usize::from(!r.passed());
            }
            if let Some(dir) = out {
                say!("wrote {}", write_jsonl(&dir, "validate", &reports)?.display());
            }
            if failed > 0 {
                return Err(Error::InvalidConfig(format!("{failed} reference checks failed")));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.kind());
            ExitCode::FAILURE
        }
    }
}
