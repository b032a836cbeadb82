//! Static layout of the parallel recursion.
//!
//! A complete parallel level gives every `A^T A` call six ranks (four
//! recursive calls and two Strassen products) and every Strassen call seven.
//! Ranks left over after the last complete level become helpers attached to
//! the sequential leaves, forming an incomplete level.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::matrix::SplitDims;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Ata,
    Hasa,
}

impl NodeKind {
    /// Recursive calls made per step.
    pub fn fan_out(self) -> usize {
        match self {
            NodeKind::Ata => 6,
            NodeKind::Hasa => 7,
        }
    }
}

/// Operand shape of a call: `m x n` input for `A^T A`, `p x q` times `q x r` for Strassen.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(untagged)]
pub enum Dims {
    Ata { m: usize, n: usize },
    Hasa { p: usize, q: usize, r: usize },
}

impl Dims {
    pub fn kind(&self) -> NodeKind {
        match self {
            Dims::Ata { .. } => NodeKind::Ata,
            Dims::Hasa { .. } => NodeKind::Hasa,
        }
    }

    /// Input footprint used to rank sub-problems by size.
    pub fn size(&self) -> u64 {
        match *self {
            Dims::Ata { m, n } => (m * n) as u64,
            Dims::Hasa { p, q, r } => (p * q + q * r) as u64,
        }
    }

    /// Shapes of the recursive calls, in call order.
    ///
    /// `A^T A`: `A11, A21, A12, A22` then `A12^T A11`, `A22^T A21`.
    /// Strassen: seven products on the halves of the even core.
    pub fn children(&self) -> Vec<Dims> {
        match *self {
            Dims::Ata { m, n } => {
                let d = SplitDims::of(m, n);
                vec![
                    Dims::Ata { m: d.m1, n: d.n1 },
                    Dims::Ata { m: d.m2, n: d.n1 },
                    Dims::Ata { m: d.m1, n: d.n2 },
                    Dims::Ata { m: d.m2, n: d.n2 },
                    Dims::Hasa { p: d.n2, q: d.m1, r: d.n1 },
                    Dims::Hasa { p: d.n2, q: d.m2, r: d.n1 },
                ]
            }
            Dims::Hasa { p, q, r } => vec![Dims::Hasa { p: p / 2, q: q / 2, r: r / 2 }; 7],
        }
    }

    /// Whether the serial algorithm takes its classical base case on this shape.
    pub fn is_base_case(&self, threshold: usize) -> bool {
        match *self {
            Dims::Ata { m, n } => crate::ata::is_base(m, n, threshold),
            Dims::Hasa { p, q, r } => crate::hasa::is_base(p, q, r, threshold),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TaskNode {
    /// Pre-order index, unique within a tree.
    pub id: usize,
    pub kind: NodeKind,
    /// Parallel level, 1-based; 0 marks a sequential call.
    pub level: usize,
    /// Rank that owns this call and returns its result.
    pub father_rank: usize,
    /// Exclusive end of the rank interval `[father_rank, rank_end)`.
    pub rank_end: usize,
    /// First rank of each child's interval; empty for sequential calls.
    pub ids: Vec<usize>,
    pub dims: Dims,
    /// Extra ranks lent to a sequential call by the incomplete level.
    pub helpers: Vec<usize>,
    pub children: Vec<TaskNode>,
}

impl TaskNode {
    pub fn is_sequential(&self) -> bool {
        self.level == 0
    }

    /// Pre-order traversal.
    pub fn walk(&self) -> Vec<&TaskNode> {
        let mut out = Vec::new();
        let mut stack = vec![self];
        while let Some(n) = stack.pop() {
            out.push(n);
            stack.extend(n.children.iter().rev());
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TaskTree {
    pub root: TaskNode,
    pub total_ranks: usize,
    pub lmax: usize,
    /// Ranks beyond `npl(lmax)`.
    pub lefties: usize,
}

impl TaskTree {
    pub fn leaves(&self) -> Vec<&TaskNode> {
        self.root.walk().into_iter().filter(|n| n.is_sequential()).collect()
    }

    /// Every rank that owns a sequential call or helps one, in tree order.
    pub fn ranks_used(&self) -> Vec<usize> {
        self.leaves()
            .into_iter()
            .flat_map(|l| std::iter::once(l.father_rank).chain(l.helpers.iter().copied()))
            .collect()
    }

    pub fn node(&self, id: usize) -> Option<&TaskNode> {
        self.root.walk().into_iter().find(|n| n.id == id)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn overflow(what: &str) -> Error {
    Error::contract(format!("{what} overflows 64 bits"))
}

/// Ranks needed for `l` complete parallel levels.
///
/// `npl(0) = 1`, `npl(1) = 6`, `npl(l) = 6*4^(l-1) + 2 * sum_{k=0}^{l-2} 4^k 7^(l-1-k)`.
pub fn npl(l: usize) -> Result<u64> {
    match l {
        0 => Ok(1),
        1 => Ok(6),
        _ => {
            let l = l as u32;
            let head = 4u64
                .checked_pow(l - 1)
                .and_then(|x| x.checked_mul(6))
                .ok_or_else(|| overflow("npl"))?;
            let mut tail = 0u64;
            for k in 0..=l - 2 {
                let term = 4u64
                    .checked_pow(k)
                    .zip(7u64.checked_pow(l - 1 - k))
                    .and_then(|(a, b)| a.checked_mul(b))
                    .ok_or_else(|| overflow("npl"))?;
                tail = tail.checked_add(term).ok_or_else(|| overflow("npl"))?;
            }
            tail.checked_mul(2)
                .and_then(|t| t.checked_add(head))
                .ok_or_else(|| overflow("npl"))
        }
    }
}

/// Largest `l` with `npl(l) <= p`.
pub fn lmax(p: u64) -> usize {
    let mut l = 0;
    while matches!(npl(l + 1), Ok(v) if v <= p) {
        l += 1;
    }
    l
}

/// Number of helpers every rank of the last complete level receives:
/// the `k` with `k*npl(lm) <= p - npl(lm) < (k+1)*npl(lm)`.
pub fn leftover_k(p: u64, lm: usize) -> Result<u64> {
    let base = npl(lm)?;
    if base > p {
        return Err(Error::contract(format!("npl({lm}) = {base} exceeds P = {p}")));
    }
    Ok((p - base) / base)
}

/// Child interval starts of a parallel call at level `l` owned by `father`.
///
/// With `x = lm - l`: `A^T A` uses `father + i*npl(x)` for `i < 5` and
/// `father + 4*npl(x) + 7^x` for the last; Strassen uses `father + i*7^x`.
pub fn build_ids(kind: NodeKind, father: usize, l: usize, lm: usize) -> Result<Vec<usize>> {
    if l == 0 || l > lm {
        return Err(Error::contract(format!("level {l} outside 1..={lm}")));
    }
    let x = (lm - l) as u32;
    let seven = 7u64.checked_pow(x).ok_or_else(|| overflow("7^x"))? as usize;
    let f = father;
    Ok(match kind {
        NodeKind::Ata => {
            let step = npl(x as usize)? as usize;
            let mut ids: Vec<usize> = (0..5).map(|i| f + i * step).collect();
            ids.push(f + 4 * step + seven);
            ids
        }
        NodeKind::Hasa => (0..7).map(|i| f + i * seven).collect(),
    })
}

/// Lays out the call tree for `p` ranks on an `m x n` input.
///
/// `p < 6` yields a single sequential call whose helpers are ranks `1..p`.
pub fn build_tree(p: usize, m: usize, n: usize) -> Result<TaskTree> {
    if p == 0 {
        return Err(Error::contract("at least one rank is required"));
    }
    let lm = lmax(p as u64);
    let complete = npl(lm)? as usize;
    let mut next_id = 0;
    let root_level = if lm == 0 { 0 } else { 1 };
    let mut root = build_node(Dims::Ata { m, n }, root_level, 0, complete, lm, &mut next_id)?;

    let lefties = p - complete;
    let k = leftover_k(p as u64, lm)? as usize;
    assign_helpers(&mut root, complete, k, lefties - k * complete);

    Ok(TaskTree { root, total_ranks: p, lmax: lm, lefties })
}

fn build_node(
    dims: Dims,
    level: usize,
    father: usize,
    end: usize,
    lm: usize,
    next_id: &mut usize,
) -> Result<TaskNode> {
    let id = *next_id;
    *next_id += 1;
    let mut node = TaskNode {
        id,
        kind: dims.kind(),
        level,
        father_rank: father,
        rank_end: end,
        ids: Vec::new(),
        dims,
        helpers: Vec::new(),
        children: Vec::new(),
    };
    if level == 0 {
        return Ok(node);
    }
    node.ids = build_ids(node.kind, father, level, lm)?;
    let child_level = if level < lm { level + 1 } else { 0 };
    for (i, cd) in dims.children().into_iter().enumerate() {
        let start = node.ids[i];
        // the last child runs to the end of this node's own interval
        let stop = node.ids.get(i + 1).copied().unwrap_or(end);
        node.children.push(build_node(cd, child_level, start, stop, lm, next_id)?);
    }
    Ok(node)
}

/// Orders sub-problems for extra ranks: Strassen first, then larger size,
/// then the given tie-breaker (lower rank or lower call index).
fn priority_key(d: &Dims, tie: usize) -> (bool, std::cmp::Reverse<u64>, usize) {
    (d.kind() != NodeKind::Hasa, std::cmp::Reverse(d.size()), tie)
}

fn assign_helpers(root: &mut TaskNode, complete: usize, k: usize, remaining: usize) {
    fn leaves_mut<'a>(n: &'a mut TaskNode, out: &mut Vec<&'a mut TaskNode>) {
        if n.level == 0 {
            out.push(n);
        } else {
            for c in &mut n.children {
                leaves_mut(c, out);
            }
        }
    }
    let mut leaves = Vec::new();
    leaves_mut(root, &mut leaves);
    leaves.sort_by_key(|l| l.father_rank);

    let mut next = complete;
    for _ in 0..k {
        for leaf in leaves.iter_mut() {
            leaf.helpers.push(next);
            next += 1;
        }
    }
    leaves.sort_by_key(|l| priority_key(&l.dims, l.father_rank));
    for leaf in leaves.iter_mut().take(remaining) {
        leaf.helpers.push(next);
        next += 1;
    }
}

/// Call indices of a step in the order extra ranks pick them up.
pub fn call_priority(dims: &Dims) -> Vec<usize> {
    let children = dims.children();
    let mut order: Vec<usize> = (0..children.len()).collect();
    order.sort_by_key(|&i| priority_key(&children[i], i));
    order
}

/// For a sequential call shared by `team` ranks (owner first, then helpers),
/// the team index that computes each recursive call. Calls are dealt
/// round-robin in [`call_priority`] order.
pub fn split_calls(dims: &Dims, team: usize) -> Vec<usize> {
    let order = call_priority(dims);
    let mut owner = vec![0; order.len()];
    for (pos, &call) in order.iter().enumerate() {
        owner[call] = pos % team.max(1);
    }
    owner
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn npl_values() {
        assert_eq!(npl(0).unwrap(), 1);
        assert_eq!(npl(1).unwrap(), 6);
        assert_eq!(npl(2).unwrap(), 38);
        assert_eq!(npl(3).unwrap(), 250);
    }

    #[test]
    fn npl_matches_structural_recurrence() {
        for l in 2..=8usize {
            let direct = 4 * npl(l - 1).unwrap() + 2 * 7u64.pow(l as u32 - 1);
            assert_eq!(npl(l).unwrap(), direct, "l={l}");
            assert!(npl(l).unwrap() > npl(l - 1).unwrap());
        }
    }

    #[test]
    fn npl_overflow_is_an_error() {
        assert!(npl(40).is_err());
        assert!(npl(20).is_ok());
    }

    #[test]
    fn lmax_examples() {
        assert_eq!(lmax(1), 0);
        assert_eq!(lmax(5), 0);
        assert_eq!(lmax(6), 1);
        assert_eq!(lmax(15), 1);
        assert_eq!(lmax(37), 1);
        assert_eq!(lmax(38), 2);
        assert_eq!(lmax(250), 3);
    }

    #[test]
    fn leftover_examples() {
        assert_eq!(leftover_k(15, 1).unwrap(), 1);
        assert_eq!(leftover_k(38, 2).unwrap(), 0);
        assert_eq!(leftover_k(18, 1).unwrap(), 2);
        assert!(leftover_k(5, 1).is_err());
    }

    #[test]
    fn ids_examples() {
        assert_eq!(build_ids(NodeKind::Ata, 0, 1, 2).unwrap(), vec![0, 6, 12, 18, 24, 31]);
        assert_eq!(build_ids(NodeKind::Ata, 0, 1, 1).unwrap(), vec![0, 1, 2, 3, 4, 5]);
        assert_eq!(build_ids(NodeKind::Hasa, 24, 2, 2).unwrap(), vec![24, 25, 26, 27, 28, 29, 30]);
        assert!(build_ids(NodeKind::Ata, 0, 0, 1).is_err());
        assert!(build_ids(NodeKind::Ata, 0, 3, 2).is_err());
    }

    #[test]
    fn tree_for_38_ranks() {
        let t = build_tree(38, 1000, 1000).unwrap();
        assert_eq!((t.lmax, t.lefties), (2, 0));
        let kinds: Vec<_> = t.root.children.iter().map(|c| c.kind).collect();
        assert_eq!(kinds, [NodeKind::Ata, NodeKind::Ata, NodeKind::Ata, NodeKind::Ata, NodeKind::Hasa, NodeKind::Hasa]);
        for c in &t.root.children {
            assert_eq!(c.level, 2);
            assert_eq!(c.children.len(), c.kind.fan_out());
            assert!(c.children.iter().all(|g| g.is_sequential() && g.helpers.is_empty()));
        }
        let mut used = t.ranks_used();
        used.sort_unstable();
        assert_eq!(used, (0..38).collect::<Vec<_>>());
    }

    #[test]
    fn tree_for_15_ranks_places_helpers() {
        let t = build_tree(15, 1000, 1000).unwrap();
        assert_eq!((t.lmax, t.lefties), (1, 9));
        let helpers: Vec<(usize, Vec<usize>)> =
            t.leaves().iter().map(|l| (l.father_rank, l.helpers.clone())).collect();
        assert_eq!(
            helpers,
            vec![
                (0, vec![6, 14]),
                (1, vec![7]),
                (2, vec![8]),
                (3, vec![9]),
                (4, vec![10, 12]),
                (5, vec![11, 13]),
            ]
        );
    }

    #[test]
    fn odd_sizes_prefer_the_larger_leaf() {
        // 1001 columns: A11 is 501x501, the other ATA calls are smaller
        let t = build_tree(15, 1001, 1001).unwrap();
        let extra: Vec<usize> = t.leaves().iter().filter(|l| l.helpers.len() == 2).map(|l| l.father_rank).collect();
        assert_eq!(extra, vec![0, 4, 5]);
    }

    #[test]
    fn tree_for_6_ranks_has_no_helpers() {
        let t = build_tree(6, 64, 64).unwrap();
        assert_eq!((t.lmax, t.lefties), (1, 0));
        assert_eq!(t.root.ids, vec![0, 1, 2, 3, 4, 5]);
        assert!(t.leaves().iter().all(|l| l.helpers.is_empty()));
    }

    #[test]
    fn small_p_is_sequential_with_helpers() {
        let t = build_tree(1, 10, 10).unwrap();
        assert!(t.root.is_sequential() && t.root.helpers.is_empty());
        let t = build_tree(4, 10, 10).unwrap();
        assert!(t.root.is_sequential());
        assert_eq!(t.root.helpers, vec![1, 2, 3]);
        assert!(build_tree(0, 1, 1).is_err());
    }

    #[test]
    fn ranks_partition_for_all_small_p() {
        for p in 1..=400 {
            let t = build_tree(p, 1000, 1000).unwrap();
            let mut used = t.ranks_used();
            used.sort_unstable();
            assert_eq!(used, (0..p).collect::<Vec<_>>(), "P={p}");
        }
    }

    #[test]
    fn full_levels_use_exactly_npl_ranks() {
        for l in 0..=3 {
            let p = npl(l).unwrap() as usize;
            let t = build_tree(p, 1000, 1000).unwrap();
            assert_eq!(t.lmax, l);
            assert_eq!(t.lefties, 0);
            assert!(t.leaves().iter().all(|x| x.helpers.is_empty()));
            let max_level = t.root.walk().iter().map(|n| n.level).max().unwrap();
            assert_eq!(max_level, l);
        }
    }

    #[test]
    fn child_intervals_nest() {
        for p in [6, 38, 100, 250, 300] {
            let t = build_tree(p, 999, 777).unwrap();
            for n in t.root.walk() {
                if n.is_sequential() {
                    continue;
                }
                assert_eq!(n.ids[0], n.father_rank);
                assert!(n.ids.windows(2).all(|w| w[0] < w[1]));
                for (i, c) in n.children.iter().enumerate() {
                    assert_eq!(c.father_rank, n.ids[i]);
                    assert!(c.father_rank >= n.father_rank && c.rank_end <= n.rank_end);
                    if let Some(next) = n.children.get(i + 1) {
                        assert_eq!(c.rank_end, next.father_rank);
                    }
                }
            }
        }
    }

    #[test]
    fn lmax_grows_slower_than_log7() {
        for p in 1..=1_000_000u64 {
            let bound = (p as f64).ln() / 7f64.ln() + 1.0;
            assert!((lmax(p) as f64) < bound, "P={p}");
        }
    }

    #[test]
    fn deterministic_layout() {
        assert_eq!(build_tree(123, 300, 200).unwrap(), build_tree(123, 300, 200).unwrap());
    }

    #[test]
    fn call_split_round_robin() {
        let d = Dims::Ata { m: 100, n: 100 };
        assert_eq!(call_priority(&d), vec![4, 5, 0, 1, 2, 3]);
        assert_eq!(split_calls(&d, 2), vec![0, 1, 0, 1, 0, 1]);
        assert_eq!(split_calls(&d, 1), vec![0; 6]);
        let h = Dims::Hasa { p: 10, q: 10, r: 10 };
        assert_eq!(split_calls(&h, 3), vec![0, 1, 2, 0, 1, 2, 0]);
    }

    #[test]
    fn json_dump_contains_structure() {
        let js = build_tree(6, 8, 8).unwrap().to_json().unwrap();
        let v: serde_json::Value = serde_json::from_str(&js).unwrap();
        assert_eq!(v["root"]["kind"], "ata");
        assert_eq!(v["root"]["children"].as_array().unwrap().len(), 6);
        assert_eq!(v["root"]["children"][4]["dims"]["p"], 4);
    }
}
