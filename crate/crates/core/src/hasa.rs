//! Strassen multiplication generalised to rectangular operands.
//!
//! Odd extents are handled by dynamic peeling: the even-sized leading core
//! `A[..p', ..q'] * B[..q', ..r']` goes through the seven-product recursion and
//! the peeled last row / column / rank-one term are patched in classically.

use crate::ata::{MultCounter, Tally};
use crate::error::{Error, Result};
use crate::matrix::{self, split_quadrants, DenseMatrix, MatrixView};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct HasaConfig {
    /// Recursion stops once any extent is at most this value.
    pub base_threshold: usize,
    pub count_mults: bool,
}

impl Default for HasaConfig {
    fn default() -> Self {
        HasaConfig { base_threshold: 32, count_mults: false }
    }
}

impl HasaConfig {
    fn validate(&self) -> Result<()> {
        if self.base_threshold == 0 {
            return Err(Error::contract("base_threshold must be at least 1"));
        }
        Ok(())
    }
}

fn check_inner(a: &MatrixView<'_>, b: &MatrixView<'_>) -> Result<()> {
    if a.cols() != b.rows() {
        return Err(Error::contract(format!(
            "inner dimensions disagree: {}x{} * {}x{}",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )));
    }
    Ok(())
}

/// `A * B` by recursive Strassen with peeling.
pub fn hasa(a: &MatrixView<'_>, b: &MatrixView<'_>, cfg: &HasaConfig) -> Result<DenseMatrix> {
    cfg.validate()?;
    check_inner(a, b)?;
    Ok(hasa_rec(a, b, cfg.base_threshold, &mut ()))
}

/// Like [`hasa`], adding every scalar multiplication performed to `counter`.
pub fn hasa_counted(
    a: &MatrixView<'_>,
    b: &MatrixView<'_>,
    cfg: &HasaConfig,
    counter: &mut MultCounter,
) -> Result<DenseMatrix> {
    cfg.validate()?;
    check_inner(a, b)?;
    Ok(hasa_rec(a, b, cfg.base_threshold, counter))
}

/// Plain `i-k-j` triple loop, `p*q*r` multiplications.
pub fn classical_mult(a: &MatrixView<'_>, b: &MatrixView<'_>) -> Result<DenseMatrix> {
    check_inner(a, b)?;
    Ok(classical(a, b, &mut ()))
}

pub(crate) fn classical<T: Tally>(a: &MatrixView<'_>, b: &MatrixView<'_>, tally: &mut T) -> DenseMatrix {
    let (p, q, r) = (a.rows(), a.cols(), b.cols());
    let mut c = DenseMatrix::zeros(p, r);
    for i in 0..p {
        let arow = a.row(i);
        let crow = c.row_mut(i);
        for (k, &aik) in arow.iter().enumerate() {
            for (cij, &bkj) in crow.iter_mut().zip(b.row(k)) {
                *cij += aik * bkj;
            }
        }
        tally.add((q * r) as u64);
    }
    c
}

#[inline]
pub(crate) fn is_base(p: usize, q: usize, r: usize, threshold: usize) -> bool {
    p.min(q).min(r) <= threshold
}

pub(crate) fn hasa_rec<T: Tally>(
    a: &MatrixView<'_>,
    b: &MatrixView<'_>,
    threshold: usize,
    tally: &mut T,
) -> DenseMatrix {
    let (p, q, r) = (a.rows(), a.cols(), b.cols());
    if is_base(p, q, r, threshold) {
        return classical(a, b, tally);
    }
    let (ac, bc) = even_core(a, b);
    let aq = split_quadrants(&ac).1;
    let bq = split_quadrants(&bc).1;
    let m: [DenseMatrix; 7] = std::array::from_fn(|i| {
        let (x, y) = strassen_operand(i, &aq, &bq);
        hasa_rec(&x.view(), &y.view(), threshold, tally)
    });
    let core = assemble_quadrants(combine_products(&m));
    peel_fixup(a, b, core, tally)
}

/// Leading even-sized sub-views `A[..p', ..q']`, `B[..q', ..r']`.
pub(crate) fn even_core<'a>(a: &MatrixView<'a>, b: &MatrixView<'a>) -> (MatrixView<'a>, MatrixView<'a>) {
    let (p, q, r) = (a.rows() & !1, a.cols() & !1, b.cols() & !1);
    (a.sub(0, 0, p, q), b.sub(0, 0, q, r))
}

pub(crate) fn has_odd_extent(p: usize, q: usize, r: usize) -> bool {
    (p | q | r) & 1 == 1
}

/// Either a borrowed quadrant or a freshly formed sum/difference.
pub(crate) enum Operand<'a> {
    View(MatrixView<'a>),
    Owned(DenseMatrix),
}

impl Operand<'_> {
    pub(crate) fn view(&self) -> MatrixView<'_> {
        match self {
            Operand::View(v) => *v,
            Operand::Owned(m) => m.view(),
        }
    }

    pub(crate) fn into_dense(self) -> DenseMatrix {
        match self {
            Operand::View(v) => v.to_dense(),
            Operand::Owned(m) => m,
        }
    }
}

fn sum<'a>(x: &MatrixView<'a>, y: &MatrixView<'a>) -> Operand<'a> {
    Operand::Owned(matrix::add(x, y).expect("quadrants of an even core agree"))
}

fn diff<'a>(x: &MatrixView<'a>, y: &MatrixView<'a>) -> Operand<'a> {
    Operand::Owned(matrix::sub(x, y).expect("quadrants of an even core agree"))
}

/// Operands of product `M_{idx+1}`, quadrants ordered `[11, 12, 21, 22]`.
///
/// ```text
/// M1 = (A11 + A22)(B11 + B22)    M5 = (A11 + A12) B22
/// M2 = (A21 + A22) B11           M6 = (A21 - A11)(B11 + B12)
/// M3 = A11 (B12 - B22)           M7 = (A12 - A22)(B21 + B22)
/// M4 = A22 (B21 - B11)
/// ```
pub(crate) fn strassen_operand<'a>(
    idx: usize,
    a: &[MatrixView<'a>; 4],
    b: &[MatrixView<'a>; 4],
) -> (Operand<'a>, Operand<'a>) {
    let [a11, a12, a21, a22] = a;
    let [b11, b12, b21, b22] = b;
    match idx {
        0 => (sum(a11, a22), sum(b11, b22)),
        1 => (sum(a21, a22), Operand::View(*b11)),
        2 => (Operand::View(*a11), diff(b12, b22)),
        3 => (Operand::View(*a22), diff(b21, b11)),
        4 => (sum(a11, a12), Operand::View(*b22)),
        5 => (diff(a21, a11), sum(b11, b12)),
        6 => (diff(a12, a22), sum(b21, b22)),
        _ => unreachable!("Strassen has seven products"),
    }
}

/// Which products feed each output block, with sign, in ascending product order.
/// Blocks are ordered `[D11, D12, D21, D22]`.
pub(crate) const BLOCK_TERMS: [&[(usize, bool)]; 4] = [
    &[(0, false), (3, false), (4, true), (6, false)],
    &[(2, false), (4, false)],
    &[(1, false), (3, false)],
    &[(0, false), (1, true), (2, false), (5, false)],
];

/// `D11 = M1 + M4 - M5 + M7`, `D12 = M3 + M5`, `D21 = M2 + M4`, `D22 = M1 - M2 + M3 + M6`,
/// accumulated left to right.
pub(crate) fn combine_products(m: &[DenseMatrix; 7]) -> [DenseMatrix; 4] {
    BLOCK_TERMS.map(|terms| {
        let (first, rest) = terms.split_first().unwrap();
        debug_assert!(!first.1);
        let mut acc = m[first.0].clone();
        for &(k, neg) in rest {
            let op = if neg { matrix::sub } else { matrix::add };
            acc = op(&acc.view(), &m[k].view()).expect("Strassen products share a shape");
        }
        acc
    })
}

/// Places `[D11, D12, D21, D22]` (equal-sized blocks) into one matrix.
pub(crate) fn assemble_quadrants(d: [DenseMatrix; 4]) -> DenseMatrix {
    let (h, w) = (d[0].rows(), d[0].cols());
    let mut out = DenseMatrix::zeros(2 * h, 2 * w);
    for (idx, blk) in d.iter().enumerate() {
        let (ro, co) = ((idx / 2) * h, (idx % 2) * w);
        for i in 0..h {
            out.row_mut(ro + i)[co..co + w].copy_from_slice(blk.row(i));
        }
    }
    out
}

/// Extends the even-core product `core = A[..p', ..q'] B[..q', ..r']` to the
/// full `A B`, adding the peeled contributions.
pub(crate) fn peel_fixup<T: Tally>(
    a: &MatrixView<'_>,
    b: &MatrixView<'_>,
    core: DenseMatrix,
    tally: &mut T,
) -> DenseMatrix {
    let (p, q, r) = (a.rows(), a.cols(), b.cols());
    if !has_odd_extent(p, q, r) {
        return core;
    }
    let (pe, qe, re) = (p & !1, q & !1, r & !1);
    debug_assert_eq!((core.rows(), core.cols()), (pe, re));

    let mut out = DenseMatrix::zeros(p, r);
    for i in 0..pe {
        out.row_mut(i)[..re].copy_from_slice(core.row(i));
    }
    if q != qe {
        // rank-one term from the last column of A and last row of B
        let blast = &b.row(qe)[..re];
        for i in 0..pe {
            let aik = a.get(i, qe);
            for (c, &bv) in out.row_mut(i)[..re].iter_mut().zip(blast) {
                *c += aik * bv;
            }
        }
        tally.add((pe * re) as u64);
    }
    if r != re {
        for i in 0..pe {
            let arow = a.row(i);
            let mut s = 0.0;
            for (k, &aik) in arow.iter().enumerate() {
                s += aik * b.get(k, re);
            }
            out.set(i, re, s);
        }
        tally.add((pe * q) as u64);
    }
    if p != pe {
        let arow = a.row(pe);
        let crow = out.row_mut(pe);
        for (k, &aik) in arow.iter().enumerate() {
            for (c, &bv) in crow.iter_mut().zip(b.row(k)) {
                *c += aik * bv;
            }
        }
        tally.add((q * r) as u64);
    }
    out
}

/// Exact number of scalar multiplications [`hasa`] performs on `p x q` times `q x r`.
pub fn strassen_mult_count(p: usize, q: usize, r: usize, base_threshold: usize) -> u64 {
    let (p64, q64, r64) = (p as u64, q as u64, r as u64);
    if is_base(p, q, r, base_threshold.max(1)) {
        return p64 * q64 * r64;
    }
    let (pe, qe, re) = (p & !1, q & !1, r & !1);
    let mut total = 7 * strassen_mult_count(pe / 2, qe / 2, re / 2, base_threshold);
    if q != qe {
        total += (pe * re) as u64;
    }
    if r != re {
        total += pe as u64 * q64;
    }
    if p != pe {
        total += q64 * r64;
    }
    total
}
