//! Benchmark harness: input generation, timed serial and parallel runs,
//! verification, and speed-up / efficiency / Karp-Flatt reporting.

use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use rand::distributions::{Distribution as _, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::ata::{ata, ata_tolerance, classical_ata_oracle, AtaConfig};
use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::runtime::{run_parallel, CommStats, RuntimeOptions, TraceRecord};
use crate::scheduler::build_tree;

/// Entry distribution for [`gen_matrix`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Distribution {
    /// Independent uniform entries in `[-1, 1]`.
    #[default]
    Uniform,
    Ones,
    /// Ones on the main diagonal.
    Identity,
}

impl FromStr for Distribution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(Distribution::Uniform),
            "ones" => Ok(Distribution::Ones),
            "identity" => Ok(Distribution::Identity),
            _ => Err(Error::contract(format!("unknown distribution {s:?} (expected uniform, ones or identity)"))),
        }
    }
}

/// Deterministic `m x n` test matrix, filled row by row from a ChaCha8 stream.
pub fn gen_matrix(m: usize, n: usize, seed: u64, dist: Distribution) -> DenseMatrix {
    match dist {
        Distribution::Uniform => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let u = Uniform::new_inclusive(-1.0, 1.0);
            DenseMatrix::from_fn(m, n, |_, _| u.sample(&mut rng))
        }
        Distribution::Ones => DenseMatrix::from_fn(m, n, |_, _| 1.0),
        Distribution::Identity => DenseMatrix::from_fn(m, n, |i, j| if i == j { 1.0 } else { 0.0 }),
    }
}

/// Experimentally determined serial fraction `e = (1/S - 1/P) / (1 - 1/P)`.
pub fn karp_flatt(speedup: f64, p: usize) -> Result<f64> {
    if p < 2 {
        return Err(Error::contract(format!("Karp-Flatt needs at least 2 workers, got {p}")));
    }
    if speedup.is_nan() || speedup <= 0.0 {
        return Err(Error::contract(format!("speed-up must be positive, got {speedup}")));
    }
    let p = p as f64;
    Ok((1.0 / speedup - 1.0 / p) / (1.0 - 1.0 / p))
}

/// Worker counts for a sweep: `{1, 6, 12, 15, 18, 38}` up to twice the hardware threads.
pub fn default_sweep(hardware_threads: usize) -> Vec<usize> {
    [1, 6, 12, 15, 18, 38].into_iter().filter(|&p| p <= 2 * hardware_threads.max(1)).collect()
}

#[derive(Clone, Debug)]
pub struct BenchConfig {
    pub workers: usize,
    pub reps: usize,
    pub base_threshold: usize,
    pub check: bool,
    pub count_mults: bool,
    pub trace: bool,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig { workers: 1, reps: 3, base_threshold: 32, check: false, count_mults: false, trace: false }
    }
}

/// One benchmark configuration. Times are in seconds.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchReport {
    pub n: usize,
    pub m: usize,
    #[serde(rename = "P")]
    pub workers: usize,
    pub reps: usize,
    pub serial_time: f64,
    pub parallel_time: f64,
    pub speedup: f64,
    pub efficiency: f64,
    /// Undefined for a single worker.
    pub karp_flatt: Option<f64>,
    pub comm: CommStats,
    /// `comm.comm_wall_time / parallel_time`.
    pub comm_fraction: f64,
    pub mult_count: Option<u64>,
    pub check_passed: Option<bool>,
}

/// Column order of the CSV output; matches the field order of [`BenchReport`]
/// with the communication counters inlined.
pub const CSV_HEADER: [&str; 20] = [
    "n",
    "m",
    "P",
    "reps",
    "serial_time",
    "parallel_time",
    "speedup",
    "efficiency",
    "karp_flatt",
    "messages_critical_path",
    "words_critical_path",
    "messages_total",
    "words_total",
    "max_message_words",
    "comm_wall_time",
    "distribution_messages",
    "distribution_words",
    "comm_fraction",
    "mult_count",
    "check_passed",
];

impl BenchReport {
    /// Builds a report whose derived fields follow from the two times.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        m: usize,
        n: usize,
        workers: usize,
        reps: usize,
        serial_time: f64,
        parallel_time: f64,
        comm: CommStats,
        mult_count: Option<u64>,
        check_passed: Option<bool>,
    ) -> Result<Self> {
        if serial_time.is_nan() || parallel_time.is_nan() || serial_time <= 0.0 || parallel_time <= 0.0 || workers == 0 {
            return Err(Error::contract("times must be positive and workers at least 1"));
        }
        let speedup = serial_time / parallel_time;
        let karp_flatt = if workers >= 2 { Some(karp_flatt(speedup, workers)?) } else { None };
        Ok(BenchReport {
            n,
            m,
            workers,
            reps,
            serial_time,
            parallel_time,
            speedup,
            efficiency: speedup / workers as f64,
            karp_flatt,
            comm_fraction: comm.comm_wall_time / parallel_time,
            comm,
            mult_count,
            check_passed,
        })
    }

    fn csv_record(&self) -> Vec<String> {
        let opt = |v: Option<String>| v.unwrap_or_default();
        let c = &self.comm;
        vec![
            self.n.to_string(),
            self.m.to_string(),
            self.workers.to_string(),
            self.reps.to_string(),
            format!("{:?}", self.serial_time),
            format!("{:?}", self.parallel_time),
            format!("{:?}", self.speedup),
            format!("{:?}", self.efficiency),
            opt(self.karp_flatt.map(|e| format!("{e:?}"))),
            c.messages_critical_path.to_string(),
            c.words_critical_path.to_string(),
            c.messages_total.to_string(),
            c.words_total.to_string(),
            c.max_message_words.to_string(),
            format!("{:?}", c.comm_wall_time),
            c.distribution_messages.to_string(),
            c.distribution_words.to_string(),
            format!("{:?}", self.comm_fraction),
            opt(self.mult_count.map(|v| v.to_string())),
            opt(self.check_passed.map(|v| v.to_string())),
        ]
    }
}

/// Writes a header row and one row per report.
pub fn write_csv<W: Write>(out: W, reports: &[BenchReport]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in reports {
        w.write_record(r.csv_record())?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<W: Write>(mut out: W, reports: &[BenchReport]) -> Result<()> {
    serde_json::to_writer_pretty(&mut out, reports)?;
    writeln!(out)?;
    Ok(())
}

/// Where the parallel result differs most from the oracle.
#[derive(Clone, Debug, PartialEq)]
pub struct CheckDetail {
    pub passed: bool,
    pub frobenius_error: f64,
    pub tolerance: f64,
    pub max_abs_error: f64,
    /// `(row, col)` of the largest difference, in the lower triangle.
    pub location: (usize, usize),
}

#[derive(Clone, Debug)]
pub struct BenchOutcome {
    pub report: BenchReport,
    pub check: Option<CheckDetail>,
    /// Trace of the last parallel repetition, if requested.
    pub trace: Vec<TraceRecord>,
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let k = xs.len();
    if k % 2 == 1 {
        xs[k / 2]
    } else {
        (xs[k / 2 - 1] + xs[k / 2]) / 2.0
    }
}

/// Times the serial algorithm and the parallel runtime on `a` and reports
/// medians over `cfg.reps` repetitions. With one worker the parallel time is
/// the serial time, so the speed-up is exactly 1.
pub fn run_bench(a: &DenseMatrix, cfg: &BenchConfig) -> Result<BenchOutcome> {
    if cfg.reps == 0 || cfg.workers == 0 {
        return Err(Error::contract("reps and workers must be at least 1"));
    }
    let (m, n) = (a.rows(), a.cols());
    let serial_cfg = AtaConfig { base_threshold: cfg.base_threshold, count_mults: false };
    let mut serial_times = Vec::with_capacity(cfg.reps);
    for _ in 0..cfg.reps {
        let t = Instant::now();
        let c = ata(&a.view(), &serial_cfg)?;
        serial_times.push(t.elapsed().as_secs_f64());
        drop(c);
    }
    let serial_time = median(serial_times);

    let tree = build_tree(cfg.workers, m, n)?;
    let opts = RuntimeOptions {
        base_threshold: cfg.base_threshold,
        count_mults: cfg.count_mults,
        trace: cfg.trace,
        ..RuntimeOptions::default()
    };
    let parallel_reps = if cfg.workers == 1 { 1 } else { cfg.reps };
    let mut parallel_times = Vec::with_capacity(parallel_reps);
    let mut last = None;
    for _ in 0..parallel_reps {
        let t = Instant::now();
        let out = run_parallel(a, &tree, &opts)?;
        parallel_times.push(t.elapsed().as_secs_f64());
        last = Some(out);
    }
    let out = last.expect("at least one repetition");
    let parallel_time = if cfg.workers == 1 { serial_time } else { median(parallel_times) };

    let check = if cfg.check {
        let oracle = classical_ata_oracle(&a.view());
        let tolerance = ata_tolerance(&a.view());
        let frobenius_error = out.result.frobenius_distance(&oracle)?;
        let (max_abs_error, location) = out.result.max_abs_diff(&oracle)?;
        Some(CheckDetail { passed: frobenius_error <= tolerance, frobenius_error, tolerance, max_abs_error, location })
    } else {
        None
    };
    let report = BenchReport::new(
        m,
        n,
        cfg.workers,
        cfg.reps,
        serial_time,
        parallel_time,
        out.comm,
        out.mult_count,
        check.as_ref().map(|c| c.passed),
    )?;
    Ok(BenchOutcome { report, check, trace: out.trace })
}
