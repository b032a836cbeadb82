//! Serial recursive `A^T A`.
//!
//! Each step splits `A` into quadrants and computes
//!
//! ```text
//! C11 = A11^T A11 + A21^T A21        (two recursive calls)
//! C22 = A12^T A12 + A22^T A22        (two recursive calls)
//! C21 = A12^T A11 + A22^T A21        (two Strassen products)
//! ```
//!
//! keeping only the lower triangle of the symmetric result.

use crate::error::{Error, Result};
use crate::hasa::{hasa_rec, strassen_mult_count};
use crate::matrix::{self, pack_lower, split_quadrants, transpose, MatrixView, PackedLowerTriangular};

/// Sink for scalar multiplication counts. `()` discards them.
pub trait Tally {
    fn add(&mut self, mults: u64);
}

impl Tally for () {
    #[inline(always)]
    fn add(&mut self, _: u64) {}
}

/// Number of scalar multiplications performed during one call.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct MultCounter {
    pub scalar_mults: u64,
}

impl Tally for MultCounter {
    #[inline]
    fn add(&mut self, mults: u64) {
        self.scalar_mults += mults;
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AtaConfig {
    /// The classical kernel takes over once `min(m, n)` is at most this value.
    /// The same threshold is used for the Strassen sub-products.
    pub base_threshold: usize,
    pub count_mults: bool,
}

impl Default for AtaConfig {
    fn default() -> Self {
        AtaConfig { base_threshold: 32, count_mults: false }
    }
}

impl AtaConfig {
    pub(crate) fn validate(&self) -> Result<()> {
        if self.base_threshold == 0 {
            return Err(Error::contract("base_threshold must be at least 1"));
        }
        Ok(())
    }
}

fn check_nonempty(a: &MatrixView<'_>) -> Result<()> {
    if a.rows() == 0 || a.cols() == 0 {
        return Err(Error::contract(format!("empty matrix {}x{}", a.rows(), a.cols())));
    }
    Ok(())
}

/// Lower triangle of `A^T A`.
pub fn ata(a: &MatrixView<'_>, cfg: &AtaConfig) -> Result<PackedLowerTriangular> {
    cfg.validate()?;
    check_nonempty(a)?;
    Ok(ata_rec(a, cfg.base_threshold, &mut ()))
}

/// Like [`ata`], adding every scalar multiplication performed to `counter`.
pub fn ata_counted(
    a: &MatrixView<'_>,
    cfg: &AtaConfig,
    counter: &mut MultCounter,
) -> Result<PackedLowerTriangular> {
    cfg.validate()?;
    check_nonempty(a)?;
    Ok(ata_rec(a, cfg.base_threshold, counter))
}

#[inline]
pub(crate) fn is_base(m: usize, n: usize, threshold: usize) -> bool {
    m.min(n) <= threshold
}

pub(crate) fn ata_rec<T: Tally>(a: &MatrixView<'_>, threshold: usize, tally: &mut T) -> PackedLowerTriangular {
    if is_base(a.rows(), a.cols(), threshold) {
        return base_kernel(a, tally);
    }
    let (_, [a11, a12, a21, a22]) = split_quadrants(a);

    let mut c11 = ata_rec(&a11, threshold, tally);
    c11.add_assign(&ata_rec(&a21, threshold, tally)).expect("A11, A21 share column count");
    let mut c22 = ata_rec(&a12, threshold, tally);
    c22.add_assign(&ata_rec(&a22, threshold, tally)).expect("A12, A22 share column count");

    let mut c21 = hasa_rec(&transpose(&a12).view(), &a11, threshold, tally);
    let s6 = hasa_rec(&transpose(&a22).view(), &a21, threshold, tally);
    c21.add_assign(&s6).expect("both products are n2 x n1");

    pack_lower(&c11, &c21, &c22).expect("quadrant blocks are consistent")
}

/// Classical lower-triangle kernel: `C(i,j) = sum_k A(k,i) A(k,j)` for `i >= j`,
/// `m * n(n+1)/2` multiplications. Streams rows of `A` as rank-one updates.
pub fn ata_base(a: &MatrixView<'_>) -> PackedLowerTriangular {
    base_kernel(a, &mut ())
}

pub(crate) fn base_kernel<T: Tally>(a: &MatrixView<'_>, tally: &mut T) -> PackedLowerTriangular {
    let n = a.cols();
    let mut c = PackedLowerTriangular::zeros(n);
    let out = c.as_mut_slice();
    let per_row = (n * (n + 1) / 2) as u64;
    for k in 0..a.rows() {
        let row = a.row(k);
        let mut off = 0;
        for (i, &aki) in row.iter().enumerate() {
            for (cij, &akj) in out[off..off + i + 1].iter_mut().zip(&row[..=i]) {
                *cij += aki * akj;
            }
            off += i + 1;
        }
        tally.add(per_row);
    }
    c
}

/// Straight triple loop over the lower triangle; no recursion, no blocking.
pub fn classical_ata_oracle(a: &MatrixView<'_>) -> PackedLowerTriangular {
    let n = a.cols();
    let mut c = PackedLowerTriangular::zeros(n);
    for i in 0..n {
        for j in 0..=i {
            let mut s = 0.0;
            for k in 0..a.rows() {
                s += a.get(k, i) * a.get(k, j);
            }
            c.set(i, j, s);
        }
    }
    c
}

/// Exact number of scalar multiplications [`ata`] performs on an `m x n` input.
pub fn expected_mult_count(m: usize, n: usize, base_threshold: usize) -> u64 {
    if is_base(m, n, base_threshold.max(1)) {
        return m as u64 * (n as u64 * (n as u64 + 1) / 2);
    }
    let d = matrix::SplitDims::of(m, n);
    expected_mult_count(d.m1, d.n1, base_threshold)
        + expected_mult_count(d.m2, d.n1, base_threshold)
        + expected_mult_count(d.m1, d.n2, base_threshold)
        + expected_mult_count(d.m2, d.n2, base_threshold)
        + strassen_mult_count(d.n2, d.m1, d.n1, base_threshold)
        + strassen_mult_count(d.n2, d.m2, d.n1, base_threshold)
}

/// Acceptance tolerance on `||unpack(C) - unpack(C_ref)||_F` for `C = A^T A`.
pub fn ata_tolerance(a: &MatrixView<'_>) -> f64 {
    let f = a.frobenius_norm();
    1e-9 * f * f
}
