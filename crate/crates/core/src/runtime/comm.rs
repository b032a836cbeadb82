//! Point-to-point messaging and group reductions between in-process workers.
//!
//! Every message carries the sender's critical-path cost so far. A receive
//! serialises at the receiver (`max(local, incoming) + 1 message`), while all
//! reductions opened inside one join count as a single concurrent round.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::trace::{TraceKind, TraceRecord};
use crate::error::{Error, Result};
use crate::matrix::{DenseMatrix, PackedLowerTriangular};

/// A matrix payload: dense blocks for Strassen products and `C21`,
/// packed triangles for the diagonal blocks of `A^T A`.
#[derive(Clone, Debug, PartialEq)]
pub enum Block {
    Dense(DenseMatrix),
    Packed(PackedLowerTriangular),
}

impl Block {
    /// Number of `f64` words on the wire.
    pub fn words(&self) -> u64 {
        match self {
            Block::Dense(m) => m.len() as u64,
            Block::Packed(p) => p.as_slice().len() as u64,
        }
    }

    pub fn add_assign(&mut self, other: &Block) -> Result<()> {
        match (self, other) {
            (Block::Dense(a), Block::Dense(b)) => a.add_assign(b),
            (Block::Packed(a), Block::Packed(b)) => a.add_assign(b),
            _ => Err(Error::contract("cannot add dense and packed blocks")),
        }
    }

    pub fn negate(&mut self) {
        match self {
            Block::Dense(m) => m.negate(),
            Block::Packed(p) => p.negate(),
        }
    }

    pub fn into_dense(self) -> Result<DenseMatrix> {
        match self {
            Block::Dense(m) => Ok(m),
            Block::Packed(_) => Err(Error::contract("expected a dense block")),
        }
    }

    pub fn into_packed(self) -> Result<PackedLowerTriangular> {
        match self {
            Block::Packed(p) => Ok(p),
            Block::Dense(_) => Err(Error::contract("expected a packed block")),
        }
    }
}

/// Role of a block within its node.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    /// Result of the node itself.
    Out,
    C11,
    C21,
    C22,
    D11,
    D12,
    D21,
    D22,
    /// Result of the node's `i`-th recursive call when the call is run by a helper.
    Call(usize),
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::Out => f.write_str("out"),
            Label::C11 => f.write_str("C11"),
            Label::C21 => f.write_str("C21"),
            Label::C22 => f.write_str("C22"),
            Label::D11 => f.write_str("D11"),
            Label::D12 => f.write_str("D12"),
            Label::D21 => f.write_str("D21"),
            Label::D22 => f.write_str("D22"),
            Label::Call(i) => write!(f, "call{i}"),
        }
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "out" => Label::Out,
            "C11" => Label::C11,
            "C21" => Label::C21,
            "C22" => Label::C22,
            "D11" => Label::D11,
            "D12" => Label::D12,
            "D21" => Label::D21,
            "D22" => Label::D22,
            _ => match s.strip_prefix("call").and_then(|i| i.parse().ok()) {
                Some(i) => Label::Call(i),
                None => return Err(Error::Parse { line: 0, msg: format!("unknown block label {s:?}") }),
            },
        })
    }
}

/// Identifies a message: the tree node it belongs to and the block it carries.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Tag {
    pub node: usize,
    pub label: Label,
}

/// Messages and words along the longest dependent chain of messages.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PathCost {
    pub messages: u64,
    pub words: u64,
}

impl PathCost {
    pub fn then(self, words: u64) -> PathCost {
        PathCost { messages: self.messages + 1, words: self.words + words }
    }
}

/// Ordered set of ranks taking part in one reduction. The root is the lowest rank.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WorkerGroup {
    members: Vec<usize>,
}

impl WorkerGroup {
    pub fn new(mut members: Vec<usize>) -> Result<Self> {
        members.sort_unstable();
        members.dedup();
        if members.is_empty() {
            return Err(Error::contract("empty worker group"));
        }
        Ok(WorkerGroup { members })
    }

    pub fn root(&self) -> usize {
        self.members[0]
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn contains(&self, rank: usize) -> bool {
        self.members.binary_search(&rank).is_ok()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum MsgKind {
    Reduce,
    Send,
}

/// CPU time consumed by the calling thread. Unlike wall time it does not
/// grow while the thread is descheduled, which matters when ranks outnumber cores.
#[cfg(unix)]
fn thread_time() -> Duration {
    let mut ts = libc::timespec { tv_sec: 0, tv_nsec: 0 };
    // SAFETY: `ts` is a valid out-pointer and the clock id is supported on unix.
    let rc = unsafe { libc::clock_gettime(libc::CLOCK_THREAD_CPUTIME_ID, &mut ts) };
    if rc != 0 {
        return Duration::ZERO;
    }
    Duration::new(ts.tv_sec as u64, ts.tv_nsec as u32)
}

#[cfg(not(unix))]
fn thread_time() -> Duration {
    use std::sync::OnceLock;
    static ORIGIN: OnceLock<Instant> = OnceLock::new();
    ORIGIN.get_or_init(Instant::now).elapsed()
}

pub(crate) struct Message {
    from: usize,
    tag: Tag,
    kind: MsgKind,
    block: Block,
    cost: PathCost,
    send_seq: u64,
}

pub(crate) enum Packet {
    Data(Message),
    Abort { rank: usize },
}

/// Per-rank counters, merged into `CommStats` after a run.
#[derive(Clone, Debug, Default)]
pub struct LocalStats {
    pub messages_sent: u64,
    pub words_sent: u64,
    pub max_message_words: u64,
    pub comm_time: Duration,
}

struct JoinState {
    base: PathCost,
    reached: PathCost,
}

/// One worker's view of the world: its inbox and a sender to every rank.
pub struct Endpoint {
    rank: usize,
    peers: Vec<Sender<Packet>>,
    inbox: Receiver<Packet>,
    pending: HashMap<(usize, Tag), Message>,
    cost: PathCost,
    join: Option<JoinState>,
    seq: u64,
    timeout: Duration,
    pub(crate) node: usize,
    pub(crate) stats: LocalStats,
    trace: Option<Vec<TraceRecord>>,
}

/// Creates `size` connected endpoints, one per rank.
pub fn world(size: usize, timeout: Duration, trace: bool) -> Vec<Endpoint> {
    let (senders, receivers): (Vec<_>, Vec<_>) = (0..size).map(|_| mpsc::channel()).unzip();
    receivers
        .into_iter()
        .enumerate()
        .map(|(rank, inbox)| Endpoint {
            rank,
            peers: senders.clone(),
            inbox,
            pending: HashMap::new(),
            cost: PathCost::default(),
            join: None,
            seq: 0,
            timeout,
            node: 0,
            stats: LocalStats::default(),
            trace: trace.then(Vec::new),
        })
        .collect()
}

impl Endpoint {
    pub fn rank(&self) -> usize {
        self.rank
    }

    /// Critical-path cost of everything this rank has received so far.
    pub fn path_cost(&self) -> PathCost {
        self.cost
    }

    pub fn stats(&self) -> &LocalStats {
        &self.stats
    }

    pub(crate) fn take_trace(&mut self) -> Vec<TraceRecord> {
        self.trace.take().unwrap_or_default()
    }

    fn fail(&self, msg: impl Into<String>) -> Error {
        Error::Worker { node: self.node, rank: self.rank, msg: msg.into() }
    }

    pub(crate) fn abort_all(&self) {
        for (r, p) in self.peers.iter().enumerate() {
            if r != self.rank {
                let _ = p.send(Packet::Abort { rank: self.rank });
            }
        }
    }

    fn post(&mut self, to: usize, tag: Tag, kind: MsgKind, block: &Block) -> Result<()> {
        let start = thread_time();
        let words = block.words();
        let msg = Message {
            from: self.rank,
            tag,
            kind,
            block: block.clone(),
            cost: self.cost,
            send_seq: self.seq,
        };
        self.seq += 1;
        self.peers
            .get(to)
            .ok_or_else(|| self.fail(format!("no rank {to}")))?
            .send(Packet::Data(msg))
            .map_err(|_| self.fail(format!("rank {to} is gone")))?;
        self.stats.messages_sent += 1;
        self.stats.words_sent += words;
        self.stats.max_message_words = self.stats.max_message_words.max(words);
        self.stats.comm_time += thread_time().saturating_sub(start);
        Ok(())
    }

    /// Blocking point-to-point send of a copy of `block`.
    pub fn send(&mut self, to: usize, tag: Tag, block: &Block) -> Result<()> {
        self.post(to, tag, MsgKind::Send, block)
    }

    fn take(&mut self, from: usize, tag: Tag) -> Result<Message> {
        if let Some(m) = self.pending.remove(&(from, tag)) {
            return Ok(m);
        }
        let deadline = Instant::now() + self.timeout;
        loop {
            let left = deadline.saturating_duration_since(Instant::now());
            match self.inbox.recv_timeout(left) {
                Ok(Packet::Data(m)) if m.from == from && m.tag == tag => return Ok(m),
                Ok(Packet::Data(m)) => {
                    self.pending.insert((m.from, m.tag), m);
                }
                Ok(Packet::Abort { rank }) => {
                    return Err(self.fail(format!("aborted: rank {rank} failed")));
                }
                Err(RecvTimeoutError::Timeout) => {
                    return Err(self.fail(format!(
                        "timed out after {:?} waiting for {} of node {} from rank {from}",
                        self.timeout, tag.label, tag.node
                    )));
                }
                Err(RecvTimeoutError::Disconnected) => {
                    return Err(self.fail("all peers disconnected"));
                }
            }
        }
    }

    fn record(&mut self, m: &Message) {
        let recv_seq = self.seq;
        self.seq += 1;
        if let Some(t) = &mut self.trace {
            t.push(TraceRecord {
                sender: m.from,
                receiver: self.rank,
                words: m.block.words(),
                node: m.tag.node,
                kind: match m.kind {
                    MsgKind::Reduce => TraceKind::Reduce,
                    MsgKind::Send => TraceKind::Send,
                },
                block: m.tag.label.to_string(),
                send_seq: Some(m.send_seq),
                recv_seq: Some(recv_seq),
            });
        }
    }

    /// Blocking point-to-point receive of `tag` from `from`.
    pub fn recv(&mut self, from: usize, tag: Tag) -> Result<Block> {
        let m = self.take(from, tag)?;
        if m.kind != MsgKind::Send {
            return Err(self.fail(format!("expected a send from rank {from}, got a reduction")));
        }
        self.record(&m);
        self.end_join();
        self.cost = self.cost.max(m.cost).then(m.block.words());
        Ok(m.block)
    }

    /// Opens a join: reductions until [`Endpoint::end_join`] run as one round.
    pub fn begin_join(&mut self) {
        self.join = Some(JoinState { base: self.cost, reached: self.cost });
    }

    pub fn end_join(&mut self) {
        if let Some(j) = self.join.take() {
            self.cost = self.cost.max(j.reached);
        }
    }

    /// Sum-reduction of equally shaped contributions onto the group root.
    ///
    /// Members other than the root send and get `None`. The root adds the
    /// contributions in ascending rank order, its own first, and gets the sum.
    pub fn reduce_sum(&mut self, group: &WorkerGroup, tag: Tag, contribution: &Block) -> Result<Option<Block>> {
        if !group.contains(self.rank) {
            return Err(self.fail(format!("rank is not in group {:?}", group.members())));
        }
        let root = group.root();
        if self.rank != root {
            self.post(root, tag, MsgKind::Reduce, contribution)?;
            return Ok(None);
        }
        let base = self.join.as_ref().map_or(self.cost, |j| j.base);
        let mut acc = contribution.clone();
        let mut reached = base;
        for &member in &group.members()[1..] {
            let m = self.take(member, tag)?;
            if m.kind != MsgKind::Reduce {
                return Err(self.fail(format!("expected a reduction contribution from rank {member}")));
            }
            self.record(&m);
            let start = thread_time();
            acc.add_assign(&m.block).map_err(|e| self.fail(format!("rank {member}: {e}")))?;
            self.stats.comm_time += thread_time().saturating_sub(start);
            reached = reached.max(m.cost);
        }
        if group.members().len() > 1 {
            reached = reached.then(acc.words());
        }
        match &mut self.join {
            Some(j) => j.reached = j.reached.max(reached),
            None => self.cost = self.cost.max(reached),
        }
        Ok(Some(acc))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::thread;

    fn scalar(v: f64) -> Block {
        Block::Dense(DenseMatrix::from_rows(&[[v]]))
    }

    fn tag(label: Label) -> Tag {
        Tag { node: 0, label }
    }

    fn run_group(contribs: Vec<Block>) -> Block {
        let p = contribs.len();
        let group = WorkerGroup::new((0..p).collect()).unwrap();
        let eps = world(p, Duration::from_secs(10), false);
        thread::scope(|s| {
            let handles: Vec<_> = eps
                .into_iter()
                .zip(contribs)
                .map(|(mut ep, c)| {
                    let g = group.clone();
                    s.spawn(move || ep.reduce_sum(&g, tag(Label::D11), &c).unwrap())
                })
                .collect();
            let mut out: Vec<Option<Block>> = handles.into_iter().map(|h| h.join().unwrap()).collect();
            assert!(out[1..].iter().all(Option::is_none));
            out.swap_remove(0).unwrap()
        })
    }

    #[test]
    fn reduce_with_zero_returns_contribution() {
        let x = DenseMatrix::from_fn(3, 4, |i, j| (i * 7 + j) as f64 * 0.25);
        let got = run_group(vec![Block::Dense(x.clone()), Block::Dense(DenseMatrix::zeros(3, 4))]);
        assert_eq!(got, Block::Dense(x));
    }

    #[test]
    fn reduce_sums_in_rank_order() {
        let (a, b, c) = (1e16, -1e16, 1.0);
        let got = run_group(vec![scalar(a), scalar(b), scalar(c)]);
        assert_eq!(got, scalar((a + b) + c));
        // a different order would lose the 1.0
        assert_ne!((a + c) + b, (a + b) + c);
    }

    #[test]
    fn reduce_pair_equals_add_bitwise() {
        let x = DenseMatrix::from_fn(5, 6, |i, j| ((i * 13 + j) as f64).sin());
        let y = DenseMatrix::from_fn(5, 6, |i, j| ((i + j * 17) as f64).cos());
        let got = run_group(vec![Block::Dense(x.clone()), Block::Dense(y.clone())]);
        let want = crate::matrix::add(&x.view(), &y.view()).unwrap();
        assert_eq!(got, Block::Dense(want));
    }

    #[test]
    fn reduce_rejects_mismatched_shapes() {
        let group = WorkerGroup::new(vec![0, 1]).unwrap();
        let mut eps = world(2, Duration::from_secs(5), false);
        let mut e1 = eps.pop().unwrap();
        let mut e0 = eps.pop().unwrap();
        e1.reduce_sum(&group, tag(Label::C11), &Block::Dense(DenseMatrix::zeros(2, 2))).unwrap();
        let err = e0.reduce_sum(&group, tag(Label::C11), &Block::Dense(DenseMatrix::zeros(3, 2)));
        assert!(matches!(err, Err(Error::Worker { rank: 0, .. })));
    }

    #[test]
    fn out_of_order_arrivals_are_buffered() {
        let mut eps = world(2, Duration::from_secs(5), true);
        let mut e1 = eps.pop().unwrap();
        let mut e0 = eps.pop().unwrap();
        e1.send(0, tag(Label::C21), &scalar(2.0)).unwrap();
        e1.send(0, tag(Label::C22), &scalar(3.0)).unwrap();
        assert_eq!(e0.recv(1, tag(Label::C22)).unwrap(), scalar(3.0));
        assert_eq!(e0.recv(1, tag(Label::C21)).unwrap(), scalar(2.0));
        assert_eq!(e0.path_cost(), PathCost { messages: 2, words: 2 });
        assert_eq!(e0.take_trace().len(), 2);
    }

    #[test]
    fn receive_times_out_with_diagnostic() {
        let mut eps = world(2, Duration::from_millis(20), false);
        let mut e0 = eps.remove(0);
        e0.node = 7;
        match e0.recv(1, Tag { node: 7, label: Label::C22 }) {
            Err(Error::Worker { node: 7, rank: 0, msg }) => assert!(msg.contains("timed out"), "{msg}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn concurrent_reductions_in_a_join_cost_one_round() {
        let mut eps = world(3, Duration::from_secs(5), false);
        let mut e2 = eps.pop().unwrap();
        let mut e1 = eps.pop().unwrap();
        let mut e0 = eps.pop().unwrap();
        let g01 = WorkerGroup::new(vec![0, 1]).unwrap();
        let g02 = WorkerGroup::new(vec![0, 2]).unwrap();
        e1.reduce_sum(&g01, tag(Label::D11), &scalar(1.0)).unwrap();
        e2.reduce_sum(&g02, tag(Label::D22), &scalar(1.0)).unwrap();
        e0.begin_join();
        e0.reduce_sum(&g01, tag(Label::D11), &scalar(1.0)).unwrap();
        e0.reduce_sum(&g02, tag(Label::D22), &scalar(1.0)).unwrap();
        e0.end_join();
        assert_eq!(e0.path_cost().messages, 1);
    }

    #[test]
    fn labels_round_trip() {
        for l in [Label::Out, Label::C11, Label::C21, Label::C22, Label::D11, Label::D12, Label::D21, Label::D22, Label::Call(6)] {
            assert_eq!(l.to_string().parse::<Label>().unwrap(), l);
        }
        assert!("bogus".parse::<Label>().is_err());
    }
}
