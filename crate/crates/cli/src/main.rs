//! `ata`: time, verify and count the recursive `A^T A` kernels.

use std::fs::File;
use std::io::{self, BufWriter};
use std::path::PathBuf;
use std::process::ExitCode;

use ata_core::bench::{self, default_sweep, write_csv, write_json, BenchConfig, Distribution};
use ata_core::matrix::read_matrix;
use ata_core::runtime::write_trace_csv;
use ata_core::{build_tree, gen_matrix, DenseMatrix};
use clap::{Parser, ValueEnum};

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Debug, Parser)]
#[command(name = "ata", version, about = "Benchmark the recursive A^T A kernel and its parallel runtime")]
struct Cli {
    /// Rows of the generated input.
    #[arg(long, required_unless_present = "input")]
    rows: Option<usize>,
    /// Columns of the generated input (defaults to --rows).
    #[arg(long)]
    cols: Option<usize>,
    /// Number of workers.
    #[arg(long, default_value_t = 1, conflicts_with = "sweep")]
    workers: usize,
    /// Run P in {1, 6, 12, 15, 18, 38}, capped at twice the hardware threads.
    #[arg(long)]
    sweep: bool,
    /// Timed repetitions; the median is reported.
    #[arg(long, default_value_t = 3)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Entry distribution of the generated input.
    #[arg(long, default_value = "uniform")]
    dist: String,
    /// Recursion switches to the classical kernel at min dimension <= this.
    #[arg(long, default_value_t = 32)]
    base_threshold: usize,
    /// Verify the parallel result against the classical oracle.
    #[arg(long)]
    check: bool,
    /// Report the number of scalar multiplications.
    #[arg(long)]
    count_mults: bool,
    /// Write a per-message CSV trace of the last configuration here.
    #[arg(long, value_name = "PATH")]
    trace: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    /// Read the input matrix (text or binary) instead of generating one.
    #[arg(long, value_name = "PATH")]
    input: Option<PathBuf>,
    /// Print each task tree as JSON on stderr.
    #[arg(long)]
    dump_tree: bool,
}

enum Failure {
    Usage(String),
    Verification,
}

impl From<ata_core::Error> for Failure {
    fn from(e: ata_core::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

fn load_input(cli: &Cli) -> Result<DenseMatrix, Failure> {
    if let Some(path) = &cli.input {
        let a = read_matrix(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
        for (flag, given, actual) in [("--rows", cli.rows, a.rows()), ("--cols", cli.cols, a.cols())] {
            if given.is_some_and(|g| g != actual) {
                return Err(Failure::Usage(format!("{flag} {} disagrees with the input ({actual})", given.unwrap())));
            }
        }
        return Ok(a);
    }
    let rows = cli.rows.expect("clap requires --rows without --input");
    let cols = cli.cols.unwrap_or(rows);
    if rows == 0 || cols == 0 {
        return Err(Failure::Usage("--rows and --cols must be at least 1".into()));
    }
    let dist: Distribution = cli.dist.parse()?;
    Ok(gen_matrix(rows, cols, cli.seed, dist))
}

fn run(cli: &Cli) -> Result<(), Failure> {
    if cli.reps == 0 || cli.workers == 0 || cli.base_threshold == 0 {
        return Err(Failure::Usage("--reps, --workers and --base-threshold must be at least 1".into()));
    }
    let a = load_input(cli)?;
    let sweep = if cli.sweep {
        let hw = std::thread::available_parallelism().map_or(1, |n| n.get());
        default_sweep(hw)
    } else {
        vec![cli.workers]
    };

    let mut reports = Vec::new();
    let mut last_trace = Vec::new();
    let mut verified = true;
    for &p in &sweep {
        if cli.dump_tree {
            eprintln!("{}", build_tree(p, a.rows(), a.cols())?.to_json()?);
        }
        let cfg = BenchConfig {
            workers: p,
            reps: cli.reps,
            base_threshold: cli.base_threshold,
            check: cli.check,
            count_mults: cli.count_mults,
            trace: cli.trace.is_some(),
        };
        let out = bench::run_bench(&a, &cfg)?;
        if let Some(c) = out.check.as_ref().filter(|c| !c.passed) {
            verified = false;
            eprintln!(
                "verification failed at P={p}: |diff|_F = {:e} exceeds {:e}; max abs error {:e} at ({}, {})",
                c.frobenius_error, c.tolerance, c.max_abs_error, c.location.0, c.location.1
            );
        }
        reports.push(out.report);
        last_trace = out.trace;
    }

    let stdout = io::stdout().lock();
    match cli.format {
        Format::Csv => write_csv(stdout, &reports)?,
        Format::Json => write_json(stdout, &reports)?,
    }
    if let Some(path) = &cli.trace {
        let f = File::create(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
        write_trace_csv(BufWriter::new(f), &last_trace)?;
    }
    if verified {
        Ok(())
    } else {
        Err(Failure::Verification)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Verification) => ExitCode::from(1),
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
