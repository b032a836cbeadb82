//! Compiles a task tree into one straight-line program per rank.

use super::comm::{Block, Endpoint, Label, Tag, WorkerGroup};
use super::trace::{TraceKind, TraceRecord};
use crate::ata::{ata_rec, MultCounter};
use crate::error::{Error, Result};
use crate::hasa::{assemble_quadrants, combine_products, even_core, has_odd_extent, hasa_rec, peel_fixup, strassen_operand};
use crate::matrix::{pack_lower, split_quadrants, transpose, DenseMatrix};
use crate::scheduler::{split_calls, Dims, NodeKind, TaskNode};

pub(crate) type Slot = (usize, Label);

fn tag(slot: Slot) -> Tag {
    Tag { node: slot.0, label: slot.1 }
}

/// Operands of one call, materialised for the rank that runs it.
#[derive(Clone, Debug)]
pub(crate) enum Operands {
    Ata(DenseMatrix),
    Hasa(DenseMatrix, DenseMatrix),
}

impl Operands {
    fn words(&self) -> u64 {
        match self {
            Operands::Ata(a) => a.len() as u64,
            Operands::Hasa(a, b) => (a.len() + b.len()) as u64,
        }
    }

    fn messages(&self) -> u64 {
        match self {
            Operands::Ata(_) => 1,
            Operands::Hasa(..) => 2,
        }
    }

    /// Operands of the recursive calls, in the order of [`Dims::children`].
    fn children(&self) -> Vec<Operands> {
        match self {
            Operands::Ata(a) => {
                let (_, [a11, a12, a21, a22]) = split_quadrants(&a.view());
                vec![
                    Operands::Ata(a11.to_dense()),
                    Operands::Ata(a21.to_dense()),
                    Operands::Ata(a12.to_dense()),
                    Operands::Ata(a22.to_dense()),
                    Operands::Hasa(transpose(&a12), a11.to_dense()),
                    Operands::Hasa(transpose(&a22), a21.to_dense()),
                ]
            }
            Operands::Hasa(a, b) => {
                let (ac, bc) = even_core(&a.view(), &b.view());
                let aq = split_quadrants(&ac).1;
                let bq = split_quadrants(&bc).1;
                (0..7)
                    .map(|i| {
                        let (x, y) = strassen_operand(i, &aq, &bq);
                        Operands::Hasa(x.into_dense(), y.into_dense())
                    })
                    .collect()
            }
        }
    }
}

pub(crate) enum Step {
    Compute { node: usize, out: Slot, ops: Operands },
    Send { node: usize, to: usize, slot: Slot },
    Recv { node: usize, from: usize, slot: Slot },
    BeginJoin,
    EndJoin,
    /// Contributes `input` (negated if asked) to the reduction `(node, label)`;
    /// the group root stores the sum under that slot.
    Reduce { node: usize, group: WorkerGroup, label: Label, input: Slot, negate: bool },
    /// `pack_lower(C11, C21, C22)` of a parallel `A^T A` node.
    CombineAta { node: usize },
    /// Assembles `D11..D22` of a parallel Strassen node and adds the peeled parts.
    CombineHasa { node: usize, peel: Option<Operands> },
    /// Combines the recursive-call results of a sequential call shared with helpers.
    CombineCalls { node: usize, kind: NodeKind, calls: usize, peel: Option<Operands> },
}

impl Step {
    fn node(&self) -> Option<usize> {
        match self {
            Step::Compute { node, .. }
            | Step::Send { node, .. }
            | Step::Recv { node, .. }
            | Step::Reduce { node, .. }
            | Step::CombineAta { node }
            | Step::CombineHasa { node, .. }
            | Step::CombineCalls { node, .. } => Some(*node),
            Step::BeginJoin | Step::EndJoin => None,
        }
    }
}

/// Per-rank programs plus the operand traffic needed to set them up.
pub(crate) struct Plan {
    pub programs: Vec<Vec<Step>>,
    pub distribution: Vec<TraceRecord>,
    pub distribution_messages: u64,
    pub distribution_words: u64,
}

pub(crate) fn build_plan(root: &TaskNode, a: &DenseMatrix, ranks: usize, threshold: usize) -> Result<Plan> {
    if root.dims != (Dims::Ata { m: a.rows(), n: a.cols() }) {
        return Err(Error::contract(format!(
            "task tree is for {:?} but the input is {}x{}",
            root.dims,
            a.rows(),
            a.cols()
        )));
    }
    let mut p = Planner {
        plan: Plan {
            programs: (0..ranks).map(|_| Vec::new()).collect(),
            distribution: Vec::new(),
            distribution_messages: 0,
            distribution_words: 0,
        },
        threshold,
    };
    p.node(root, Operands::Ata(a.clone()));
    Ok(p.plan)
}

struct Planner {
    plan: Plan,
    threshold: usize,
}

impl Planner {
    fn push(&mut self, rank: usize, step: Step) {
        self.plan.programs[rank].push(step);
    }

    /// Records that rank 0 ships `ops` to `rank` before the run.
    fn distribute(&mut self, rank: usize, node: usize, ops: &Operands) {
        if rank == 0 {
            return;
        }
        self.plan.distribution_messages += ops.messages();
        self.plan.distribution_words += ops.words();
        let words: Vec<u64> = match ops {
            Operands::Ata(a) => vec![a.len() as u64],
            Operands::Hasa(a, b) => vec![a.len() as u64, b.len() as u64],
        };
        for w in words {
            self.plan.distribution.push(TraceRecord {
                sender: 0,
                receiver: rank,
                words: w,
                node,
                kind: TraceKind::Distribute,
                block: "operand".into(),
                send_seq: None,
                recv_seq: None,
            });
        }
    }

    fn compute(&mut self, rank: usize, node: usize, out: Slot, ops: Operands) {
        self.distribute(rank, node, &ops);
        self.push(rank, Step::Compute { node, out, ops });
    }

    fn peel(&mut self, owner: usize, node: usize, dims: &Dims, ops: &Operands) -> Option<Operands> {
        match *dims {
            Dims::Hasa { p, q, r } if has_odd_extent(p, q, r) => {
                self.distribute(owner, node, ops);
                Some(ops.clone())
            }
            _ => None,
        }
    }

    fn node(&mut self, node: &TaskNode, ops: Operands) {
        if node.is_sequential() || node.dims.is_base_case(self.threshold) {
            self.sequential(node, ops);
        } else {
            self.parallel(node, ops);
        }
    }

    fn sequential(&mut self, node: &TaskNode, ops: Operands) {
        let owner = node.father_rank;
        let out = (node.id, Label::Out);
        if node.helpers.is_empty() || node.dims.is_base_case(self.threshold) {
            self.compute(owner, node.id, out, ops);
            return;
        }
        let team: Vec<usize> = std::iter::once(owner).chain(node.helpers.iter().copied()).collect();
        let assign = split_calls(&node.dims, team.len());
        let peel = self.peel(owner, node.id, &node.dims, &ops);
        let calls = ops.children();
        let n_calls = calls.len();
        for (c, child_ops) in calls.into_iter().enumerate() {
            let rank = team[assign[c]];
            let slot = (node.id, Label::Call(c));
            self.compute(rank, node.id, slot, child_ops);
            if rank != owner {
                self.push(rank, Step::Send { node: node.id, to: owner, slot });
            }
        }
        for c in 0..n_calls {
            let rank = team[assign[c]];
            if rank != owner {
                self.push(owner, Step::Recv { node: node.id, from: rank, slot: (node.id, Label::Call(c)) });
            }
        }
        self.push(owner, Step::CombineCalls { node: node.id, kind: node.kind, calls: n_calls, peel });
    }

    fn parallel(&mut self, node: &TaskNode, ops: Operands) {
        let peel = self.peel(node.father_rank, node.id, &node.dims, &ops);
        for (child, child_ops) in node.children.iter().zip(ops.children()) {
            self.node(child, child_ops);
        }
        let r = &node.ids;
        let out = |i: usize| (node.children[i].id, Label::Out);
        // (group members as child indices, block, negated children, receiving rank)
        let joins: Vec<(Vec<usize>, Label, Vec<usize>)> = match node.kind {
            NodeKind::Ata => vec![
                (vec![0, 1], Label::C11, vec![]),
                (vec![2, 3], Label::C22, vec![]),
                (vec![4, 5], Label::C21, vec![]),
            ],
            NodeKind::Hasa => vec![
                (vec![0, 3, 4, 6], Label::D11, vec![4]),
                (vec![0, 1, 2, 5], Label::D22, vec![1]),
                (vec![2, 4], Label::D12, vec![]),
                (vec![1, 3], Label::D21, vec![]),
            ],
        };
        let groups: Vec<(WorkerGroup, Label, &Vec<usize>, &Vec<usize>)> = joins
            .iter()
            .map(|(m, l, neg)| (WorkerGroup::new(m.iter().map(|&i| r[i]).collect()).expect("non-empty"), *l, m, neg))
            .collect();

        // contributions first, then each root closes its reductions as one round
        for (group, label, members, neg) in &groups {
            for &i in members.iter() {
                if r[i] != group.root() {
                    let step = Step::Reduce { node: node.id, group: group.clone(), label: *label, input: out(i), negate: neg.contains(&i) };
                    self.push(r[i], step);
                }
            }
        }
        let mut roots: Vec<usize> = groups.iter().map(|g| g.0.root()).collect();
        roots.sort_unstable();
        roots.dedup();
        for root in roots {
            self.push(root, Step::BeginJoin);
            for (group, label, members, neg) in &groups {
                if group.root() == root {
                    let i = members.iter().copied().find(|&i| r[i] == root).expect("root is a member");
                    let step = Step::Reduce { node: node.id, group: group.clone(), label: *label, input: out(i), negate: neg.contains(&i) };
                    self.push(root, step);
                }
            }
            self.push(root, Step::EndJoin);
        }

        let owner = node.father_rank;
        for (group, label, ..) in &groups {
            let root = group.root();
            if root != owner {
                self.push(root, Step::Send { node: node.id, to: owner, slot: (node.id, *label) });
            }
        }
        for (group, label, ..) in &groups {
            let root = group.root();
            if root != owner {
                self.push(owner, Step::Recv { node: node.id, from: root, slot: (node.id, *label) });
            }
        }
        self.push(
            owner,
            match node.kind {
                NodeKind::Ata => Step::CombineAta { node: node.id },
                NodeKind::Hasa => Step::CombineHasa { node: node.id, peel },
            },
        );
    }
}

/// Runs one rank's program. Returns the value left in `result` (if any) and the
/// number of scalar multiplications performed.
pub(crate) fn execute(
    ep: &mut Endpoint,
    program: Vec<Step>,
    threshold: usize,
    result: Slot,
    inject_failure: bool,
) -> Result<(Option<Block>, u64)> {
    use std::collections::HashMap;

    let mut slots: HashMap<Slot, Block> = HashMap::new();
    let mut tally = MultCounter::default();
    let rank = ep.rank();

    fn take(slots: &mut HashMap<Slot, Block>, slot: Slot, node: usize, rank: usize) -> Result<Block> {
        slots.remove(&slot).ok_or_else(|| Error::Worker {
            node,
            rank,
            msg: format!("missing block {} of node {}", slot.1, slot.0),
        })
    }

    for step in program {
        if let Some(n) = step.node() {
            ep.node = n;
        }
        if inject_failure {
            return Err(Error::Worker { node: ep.node, rank, msg: "injected failure".into() });
        }
        let node = ep.node;
        match step {
            Step::Compute { out, ops, .. } => {
                let block = match ops {
                    Operands::Ata(a) => Block::Packed(ata_rec(&a.view(), threshold, &mut tally)),
                    Operands::Hasa(a, b) => Block::Dense(hasa_rec(&a.view(), &b.view(), threshold, &mut tally)),
                };
                slots.insert(out, block);
            }
            Step::Send { to, slot, .. } => {
                let block = take(&mut slots, slot, node, rank)?;
                ep.send(to, tag(slot), &block)?;
            }
            Step::Recv { from, slot, .. } => {
                let block = ep.recv(from, tag(slot))?;
                slots.insert(slot, block);
            }
            Step::BeginJoin => ep.begin_join(),
            Step::EndJoin => ep.end_join(),
            Step::Reduce { group, label, input, negate, .. } => {
                let src = slots.get(&input).ok_or_else(|| Error::Worker {
                    node,
                    rank,
                    msg: format!("missing block {} of node {}", input.1, input.0),
                })?;
                let sum = if negate {
                    let mut b = src.clone();
                    b.negate();
                    ep.reduce_sum(&group, Tag { node, label }, &b)?
                } else {
                    let b = src.clone();
                    ep.reduce_sum(&group, Tag { node, label }, &b)?
                };
                if let Some(sum) = sum {
                    slots.insert((node, label), sum);
                }
            }
            Step::CombineAta { .. } => {
                let c11 = take(&mut slots, (node, Label::C11), node, rank)?.into_packed()?;
                let c21 = take(&mut slots, (node, Label::C21), node, rank)?.into_dense()?;
                let c22 = take(&mut slots, (node, Label::C22), node, rank)?.into_packed()?;
                slots.insert((node, Label::Out), Block::Packed(pack_lower(&c11, &c21, &c22)?));
            }
            Step::CombineHasa { peel, .. } => {
                let mut d = Vec::with_capacity(4);
                for l in [Label::D11, Label::D12, Label::D21, Label::D22] {
                    d.push(take(&mut slots, (node, l), node, rank)?.into_dense()?);
                }
                let core = assemble_quadrants(d.try_into().expect("four blocks"));
                let full = finish_hasa(core, peel, &mut tally);
                slots.insert((node, Label::Out), Block::Dense(full));
            }
            Step::CombineCalls { kind, calls, peel, .. } => {
                let mut parts = Vec::with_capacity(calls);
                for c in 0..calls {
                    parts.push(take(&mut slots, (node, Label::Call(c)), node, rank)?);
                }
                let out = match kind {
                    NodeKind::Ata => {
                        let mut it = parts.into_iter();
                        let mut next = || it.next().expect("six calls");
                        let mut c11 = next().into_packed()?;
                        c11.add_assign(&next().into_packed()?)?;
                        let mut c22 = next().into_packed()?;
                        c22.add_assign(&next().into_packed()?)?;
                        let mut c21 = next().into_dense()?;
                        c21.add_assign(&next().into_dense()?)?;
                        Block::Packed(pack_lower(&c11, &c21, &c22)?)
                    }
                    NodeKind::Hasa => {
                        let m: Vec<DenseMatrix> = parts.into_iter().map(Block::into_dense).collect::<Result<_>>()?;
                        let m: [DenseMatrix; 7] = m.try_into().map_err(|_| Error::contract("expected seven products"))?;
                        let core = assemble_quadrants(combine_products(&m));
                        Block::Dense(finish_hasa(core, peel, &mut tally))
                    }
                };
                slots.insert((node, Label::Out), out);
            }
        }
    }
    Ok((slots.remove(&result), tally.scalar_mults))
}

fn finish_hasa(core: DenseMatrix, peel: Option<Operands>, tally: &mut MultCounter) -> DenseMatrix {
    match peel {
        Some(Operands::Hasa(a, b)) => peel_fixup(&a.view(), &b.view(), core, tally),
        _ => core,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scheduler::build_tree;

    fn steps_of(plan: &Plan, rank: usize) -> usize {
        plan.programs[rank].len()
    }

    #[test]
    fn every_rank_gets_work_when_problem_is_large() {
        let a = DenseMatrix::from_fn(130, 130, |i, j| (i + j) as f64);
        for p in [6, 15, 38] {
            let tree = build_tree(p, 130, 130).unwrap();
            let plan = build_plan(&tree.root, &a, p, 2).unwrap();
            for r in 0..p {
                assert!(steps_of(&plan, r) > 0, "P={p} rank {r} idle");
            }
        }
    }

    #[test]
    fn single_rank_plan_is_one_compute() {
        let a = DenseMatrix::identity(10);
        let tree = build_tree(1, 10, 10).unwrap();
        let plan = build_plan(&tree.root, &a, 1, 4).unwrap();
        assert_eq!(steps_of(&plan, 0), 1);
        assert_eq!(plan.distribution_messages, 0);
    }

    #[test]
    fn base_case_nodes_are_not_split() {
        let a = DenseMatrix::identity(8);
        let tree = build_tree(38, 8, 8).unwrap();
        let plan = build_plan(&tree.root, &a, 38, 32).unwrap();
        assert_eq!(steps_of(&plan, 0), 1);
        assert!((1..38).all(|r| steps_of(&plan, r) == 0));
    }

    #[test]
    fn mismatched_tree_is_rejected() {
        let a = DenseMatrix::identity(10);
        let tree = build_tree(6, 12, 10).unwrap();
        assert!(build_plan(&tree.root, &a, 6, 2).is_err());
    }
}
