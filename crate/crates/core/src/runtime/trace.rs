//! Per-message trace: CSV round trip and an independent replay of the
//! critical-path accounting.

use std::collections::HashMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::comm::PathCost;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TraceKind {
    /// Operand copy from rank 0 before the run starts.
    Distribute,
    /// Contribution to a group reduction.
    Reduce,
    /// Point-to-point block transfer.
    Send,
}

/// One message. Sequence numbers count the sends and receives of the
/// sender and the receiver respectively; distribution rows have none.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub sender: usize,
    pub receiver: usize,
    pub words: u64,
    pub node: usize,
    pub kind: TraceKind,
    pub block: String,
    pub send_seq: Option<u64>,
    pub recv_seq: Option<u64>,
}

pub fn write_trace_csv<W: Write>(out: W, records: &[TraceRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trace_csv<R: Read>(input: R) -> Result<Vec<TraceRecord>> {
    csv::Reader::from_reader(input)
        .deserialize()
        .map(|r| r.map_err(Error::from))
        .collect()
}

/// Communication totals recomputed from a trace alone.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ReplayStats {
    pub messages_critical_path: u64,
    pub words_critical_path: u64,
    pub messages_total: u64,
    pub words_total: u64,
    pub max_message_words: u64,
}

#[derive(Clone, Copy)]
enum Event {
    Send(usize),
    Recv(usize),
}

struct Join {
    node: usize,
    base: PathCost,
    blocks: HashMap<String, (PathCost, u64)>,
}

struct RankState {
    events: Vec<Event>,
    pos: usize,
    cost: PathCost,
    join: Option<Join>,
}

impl RankState {
    fn close_join(&mut self) {
        if let Some(j) = self.join.take() {
            for (reached, words) in j.blocks.values() {
                self.cost = self.cost.max(reached.then(*words));
            }
        }
    }
}

/// Re-simulates each rank's message order from the trace.
///
/// A point-to-point receive serialises after both the receiver's state and
/// the message. Consecutive reduction receives of one node on one rank form
/// a single round, finishing one message after the latest contribution.
pub fn replay(records: &[TraceRecord]) -> Result<ReplayStats> {
    let mut stats = ReplayStats::default();
    let ranks = records.iter().map(|r| r.sender.max(r.receiver) + 1).max().unwrap_or(0);
    let mut states: Vec<RankState> =
        (0..ranks).map(|_| RankState { events: Vec::new(), pos: 0, cost: PathCost::default(), join: None }).collect();

    let mut keyed: Vec<Vec<(u64, Event)>> = vec![Vec::new(); ranks];
    for (i, r) in records.iter().enumerate() {
        if r.kind == TraceKind::Distribute {
            continue;
        }
        stats.messages_total += 1;
        stats.words_total += r.words;
        stats.max_message_words = stats.max_message_words.max(r.words);
        let (s, q) = match (r.send_seq, r.recv_seq) {
            (Some(s), Some(q)) => (s, q),
            _ => return Err(Error::contract(format!("trace row {i} lacks sequence numbers"))),
        };
        keyed[r.sender].push((s, Event::Send(i)));
        keyed[r.receiver].push((q, Event::Recv(i)));
    }
    for (st, mut k) in states.iter_mut().zip(keyed) {
        k.sort_by_key(|e| e.0);
        st.events = k.into_iter().map(|e| e.1).collect();
    }

    let mut msg_cost: Vec<Option<PathCost>> = vec![None; records.len()];
    loop {
        let mut progressed = false;
        let mut done = true;
        for st in &mut states {
            while let Some(&ev) = st.events.get(st.pos) {
                match ev {
                    Event::Send(i) => {
                        st.close_join();
                        msg_cost[i] = Some(st.cost);
                    }
                    Event::Recv(i) => {
                        let Some(c) = msg_cost[i] else { break };
                        let r = &records[i];
                        if r.kind == TraceKind::Reduce {
                            if st.join.as_ref().is_some_and(|j| j.node != r.node) {
                                st.close_join();
                            }
                            let base = st.cost;
                            let j = st.join.get_or_insert_with(|| Join { node: r.node, base, blocks: HashMap::new() });
                            let base = j.base;
                            let e = j.blocks.entry(r.block.clone()).or_insert((base, r.words));
                            e.0 = e.0.max(c);
                        } else {
                            st.close_join();
                            st.cost = st.cost.max(c).then(r.words);
                        }
                    }
                }
                st.pos += 1;
                progressed = true;
            }
            if st.pos == st.events.len() {
                st.close_join();
            } else {
                done = false;
            }
        }
        if done {
            break;
        }
        if !progressed {
            return Err(Error::contract("trace has a receive that no send precedes"));
        }
    }
    let crit = states.iter().map(|s| s.cost).max().unwrap_or_default();
    stats.messages_critical_path = crit.messages;
    stats.words_critical_path = crit.words;
    Ok(stats)
}
