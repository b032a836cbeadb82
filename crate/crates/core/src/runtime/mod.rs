//! Message-passing execution of a [`TaskTree`] on in-process workers.
//!
//! Each rank is a thread with its own inbox. Rank 0 plans the whole run,
//! hands every rank the operands of its calls, and the ranks then exchange
//! only result blocks: reductions inside each parallel join and the
//! point-to-point transfers of the joined blocks to the call's owner.

mod comm;
mod plan;
mod trace;

use std::panic::{self, AssertUnwindSafe};
use std::thread;
use std::time::{Duration, Instant};

use serde::Serialize;

pub use self::comm::{world, Block, Endpoint, Label, LocalStats, PathCost, Tag, WorkerGroup};
pub use self::trace::{read_trace_csv, replay, write_trace_csv, ReplayStats, TraceKind, TraceRecord};

use crate::error::{Error, Result};
use crate::matrix::{DenseMatrix, PackedLowerTriangular};
use crate::scheduler::{lmax, TaskTree};

#[derive(Clone, Debug)]
pub struct RuntimeOptions {
    pub base_threshold: usize,
    pub count_mults: bool,
    /// Keep a per-message trace.
    pub trace: bool,
    /// How long a rank waits for any one message before giving up.
    pub recv_timeout: Duration,
    /// Makes the given rank fail on its first step. For testing diagnostics.
    #[doc(hidden)]
    pub fail_rank: Option<usize>,
}

impl Default for RuntimeOptions {
    fn default() -> Self {
        RuntimeOptions {
            base_threshold: 32,
            count_mults: false,
            trace: false,
            recv_timeout: Duration::from_secs(600),
            fail_rank: None,
        }
    }
}

/// Communication measured during one run.
///
/// Critical-path figures follow the longest chain of dependent messages.
/// The initial operand distribution from rank 0 is reported separately and
/// is not part of the other figures.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct CommStats {
    pub messages_critical_path: u64,
    pub words_critical_path: u64,
    pub messages_total: u64,
    pub words_total: u64,
    pub max_message_words: u64,
    /// Largest per-rank time spent copying out messages and folding in
    /// reduction contributions, in seconds of thread CPU time. Waiting for
    /// a message to arrive is not included.
    pub comm_wall_time: f64,
    pub distribution_messages: u64,
    pub distribution_words: u64,
}

#[derive(Clone, Debug)]
pub struct ParallelOutput {
    pub result: PackedLowerTriangular,
    pub comm: CommStats,
    /// Wall time of the worker phase.
    pub wall_time: f64,
    /// Time each rank took from launch until its program finished.
    pub rank_times: Vec<f64>,
    pub mult_count: Option<u64>,
    /// Empty unless tracing was requested.
    pub trace: Vec<TraceRecord>,
}

/// Computes the lower triangle of `A^T A` by running `tree` on
/// `tree.total_ranks` worker threads.
pub fn run_parallel(a: &DenseMatrix, tree: &TaskTree, opts: &RuntimeOptions) -> Result<ParallelOutput> {
    if opts.base_threshold == 0 {
        return Err(Error::contract("base_threshold must be at least 1"));
    }
    if a.is_empty() {
        return Err(Error::contract("input matrix is empty"));
    }
    let ranks = tree.total_ranks;
    if let Some(r) = opts.fail_rank {
        if r >= ranks {
            return Err(Error::contract(format!("fail_rank {r} is not below {ranks}")));
        }
    }
    let mut plan = plan::build_plan(&tree.root, a, ranks, opts.base_threshold)?;
    let programs = std::mem::take(&mut plan.programs);
    let result_slot = (tree.root.id, Label::Out);
    let endpoints = world(ranks, opts.recv_timeout, opts.trace);

    let start = Instant::now();
    let outcomes: Vec<_> = thread::scope(|s| {
        let handles: Vec<_> = endpoints
            .into_iter()
            .zip(programs)
            .map(|(mut ep, program)| {
                let fail = opts.fail_rank == Some(ep.rank());
                let threshold = opts.base_threshold;
                thread::Builder::new()
                    .name(format!("rank-{}", ep.rank()))
                    .spawn_scoped(s, move || {
                        let run = panic::catch_unwind(AssertUnwindSafe(|| {
                            plan::execute(&mut ep, program, threshold, result_slot, fail)
                        }));
                        let run = run.unwrap_or_else(|p| {
                            let msg = p
                                .downcast_ref::<&str>()
                                .map(|s| s.to_string())
                                .or_else(|| p.downcast_ref::<String>().cloned())
                                .unwrap_or_else(|| "worker panicked".into());
                            Err(Error::Worker { node: ep.node, rank: ep.rank(), msg })
                        });
                        if run.is_err() {
                            ep.abort_all();
                        }
                        let elapsed = start.elapsed().as_secs_f64();
                        (run, ep.path_cost(), ep.stats().clone(), ep.take_trace(), elapsed)
                    })
                    .expect("spawn worker thread")
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("worker threads catch panics")).collect()
    });
    let wall_time = start.elapsed().as_secs_f64();

    let mut first_err: Option<Error> = None;
    let mut result = None;
    let mut mults = 0u64;
    let mut comm = CommStats {
        distribution_messages: plan.distribution_messages,
        distribution_words: plan.distribution_words,
        ..CommStats::default()
    };
    let mut critical = PathCost::default();
    let mut rank_times = Vec::with_capacity(ranks);
    let mut trace = plan.distribution;
    for (run, cost, stats, mut records, elapsed) in outcomes {
        match run {
            Ok((block, m)) => {
                mults += m;
                if block.is_some() {
                    result = block;
                }
            }
            Err(e) => {
                let aborted = matches!(&e, Error::Worker { msg, .. } if msg.starts_with("aborted"));
                if first_err.is_none() || (!aborted && is_abort(first_err.as_ref())) {
                    first_err = Some(e);
                }
            }
        }
        critical = critical.max(cost);
        comm.messages_total += stats.messages_sent;
        comm.words_total += stats.words_sent;
        comm.max_message_words = comm.max_message_words.max(stats.max_message_words);
        comm.comm_wall_time = comm.comm_wall_time.max(stats.comm_time.as_secs_f64());
        rank_times.push(elapsed);
        trace.append(&mut records);
    }
    if let Some(e) = first_err {
        return Err(e);
    }
    comm.messages_critical_path = critical.messages;
    comm.words_critical_path = critical.words;
    let result = result
        .ok_or_else(|| Error::Worker { node: tree.root.id, rank: 0, msg: "no result produced".into() })?
        .into_packed()?;
    Ok(ParallelOutput {
        result,
        comm,
        wall_time,
        rank_times,
        mult_count: opts.count_mults.then_some(mults),
        trace,
    })
}

fn is_abort(e: Option<&Error>) -> bool {
    matches!(e, Some(Error::Worker { msg, .. }) if msg.starts_with("aborted"))
}

/// Unit costs for the communication model `time = alpha * L + beta * BW`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CostModel {
    /// Seconds per message.
    pub alpha: f64,
    /// Seconds per word.
    pub beta: f64,
}

impl Default for CostModel {
    fn default() -> Self {
        CostModel { alpha: 1e-6, beta: 1e-9 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CommPrediction {
    /// Messages on the critical path.
    pub latency: u64,
    /// Words on the critical path.
    pub bandwidth: u64,
    pub time: f64,
}

/// Model cost for an `n`-column input on `p` ranks:
/// `L = max(4(l - 1), 3l)` with `l = lmax(p)`, and `BW = ceil(n/2)^2`.
pub fn predict_comm_cost(n: usize, p: usize, model: &CostModel) -> CommPrediction {
    let l = lmax(p as u64) as u64;
    let latency = (4 * l.saturating_sub(1)).max(3 * l);
    let h = n.div_ceil(2) as u64;
    let bandwidth = h * h;
    CommPrediction { latency, bandwidth, time: model.alpha * latency as f64 + model.beta * bandwidth as f64 }
}
