use serde::{Deserialize, Serialize};

use super::DenseMatrix;
use crate::error::{Error, Result};

/// Lower triangle of a symmetric `n x n` matrix, packed row by row.
///
/// Entry `(i, j)` with `i >= j` lives at `i(i+1)/2 + j`; `(i, j)` with `i < j`
/// reads entry `(j, i)`.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct PackedLowerTriangular {
    n: usize,
    data: Vec<f64>,
}

#[inline]
pub(crate) fn packed_offset(i: usize, j: usize) -> usize {
    i * (i + 1) / 2 + j
}

pub(crate) fn packed_len(n: usize) -> usize {
    n * (n + 1) / 2
}

impl PackedLowerTriangular {
    pub fn zeros(n: usize) -> Self {
        PackedLowerTriangular { n, data: vec![0.0; packed_len(n)] }
    }

    pub fn from_vec(n: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != packed_len(n) {
            return Err(Error::contract(format!(
                "packed length {} does not match n = {n}",
                data.len()
            )));
        }
        Ok(PackedLowerTriangular { n, data })
    }

    /// Packs the lower triangle of a square matrix; the upper triangle is ignored.
    pub fn from_lower(a: &DenseMatrix) -> Result<Self> {
        if a.rows() != a.cols() {
            return Err(Error::contract(format!("{}x{} is not square", a.rows(), a.cols())));
        }
        let n = a.rows();
        let mut data = Vec::with_capacity(packed_len(n));
        for i in 0..n {
            data.extend_from_slice(&a.row(i)[..=i]);
        }
        Ok(PackedLowerTriangular { n, data })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i >= j {
            self.data[packed_offset(i, j)]
        } else {
            self.data[packed_offset(j, i)]
        }
    }

    /// Sets entry `(i, j)`; panics if `i < j`.
    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        assert!(i >= j, "only the lower triangle is stored");
        self.data[packed_offset(i, j)] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    /// Full symmetric matrix.
    pub fn unpack(&self) -> DenseMatrix {
        DenseMatrix::from_fn(self.n, self.n, |i, j| self.get(i, j))
    }

    pub(crate) fn add_assign(&mut self, other: &PackedLowerTriangular) -> Result<()> {
        if self.n != other.n {
            return Err(Error::contract(format!("packed order mismatch: {} vs {}", self.n, other.n)));
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub(crate) fn negate(&mut self) {
        for x in &mut self.data {
            *x = -*x;
        }
    }

    /// Frobenius norm of the full symmetric matrix this represents.
    pub fn frobenius_norm(&self) -> f64 {
        self.sym_sum_sq(|i| self.data[i]).sqrt()
    }

    /// Frobenius norm of `unpack(self) - unpack(other)` without unpacking.
    pub fn frobenius_distance(&self, other: &PackedLowerTriangular) -> Result<f64> {
        if self.n != other.n {
            return Err(Error::contract(format!("packed order mismatch: {} vs {}", self.n, other.n)));
        }
        Ok(self.sym_sum_sq(|k| self.data[k] - other.data[k]).sqrt())
    }

    /// Largest `|self - other|` entry and its `(i, j)` position, `i >= j`.
    pub fn max_abs_diff(&self, other: &PackedLowerTriangular) -> Result<(f64, (usize, usize))> {
        if self.n != other.n {
            return Err(Error::contract(format!("packed order mismatch: {} vs {}", self.n, other.n)));
        }
        let mut best = (0.0, (0, 0));
        for i in 0..self.n {
            for j in 0..=i {
                let k = packed_offset(i, j);
                let d = (self.data[k] - other.data[k]).abs();
                if d > best.0 || d.is_nan() {
                    best = (d, (i, j));
                }
            }
        }
        Ok(best)
    }

    fn sym_sum_sq(&self, entry: impl Fn(usize) -> f64) -> f64 {
        let mut s = 0.0;
        for i in 0..self.n {
            for j in 0..=i {
                let v = entry(packed_offset(i, j));
                s += if i == j { v * v } else { 2.0 * v * v };
            }
        }
        s
    }
}

impl std::fmt::Debug for PackedLowerTriangular {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "PackedLowerTriangular(n={}, {:?})", self.n, &self.data[..self.data.len().min(16)])
    }
}

/// Assembles the lower triangle of
///
/// ```text
/// [ C11      ]
/// [ C21  C22 ]
/// ```
///
/// from packed diagonal blocks and the dense `n2 x n1` off-diagonal block.
/// The upper block is never formed.
pub fn pack_lower(
    c11: &PackedLowerTriangular,
    c21: &DenseMatrix,
    c22: &PackedLowerTriangular,
) -> Result<PackedLowerTriangular> {
    let (n1, n2) = (c11.n, c22.n);
    if c21.rows() != n2 || c21.cols() != n1 || n1 < n2 || n1 - n2 > 1 {
        return Err(Error::contract(format!(
            "inconsistent blocks: C11 {n1}x{n1}, C21 {}x{}, C22 {n2}x{n2}",
            c21.rows(),
            c21.cols()
        )));
    }
    let n = n1 + n2;
    let mut data = Vec::with_capacity(packed_len(n));
    data.extend_from_slice(&c11.data);
    for i in 0..n2 {
        data.extend_from_slice(c21.row(i));
        let start = packed_offset(i, 0);
        data.extend_from_slice(&c22.data[start..start + i + 1]);
    }
    Ok(PackedLowerTriangular { n, data })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn layout_offsets() {
        let p = PackedLowerTriangular::from_vec(3, (0..6).map(f64::from).collect()).unwrap();
        assert_eq!(p.get(0, 0), 0.0);
        assert_eq!(p.get(1, 0), 1.0);
        assert_eq!(p.get(1, 1), 2.0);
        assert_eq!(p.get(2, 1), 4.0);
        // upper entries mirror the lower ones
        assert_eq!(p.get(1, 2), 4.0);
        assert_eq!(p.get(0, 2), p.get(2, 0));
    }

    #[test]
    fn pack_two_by_two() {
        let c11 = PackedLowerTriangular::from_vec(1, vec![10.0]).unwrap();
        let c21 = DenseMatrix::from_rows(&[[14.0]]);
        let c22 = PackedLowerTriangular::from_vec(1, vec![20.0]).unwrap();
        let p = pack_lower(&c11, &c21, &c22).unwrap();
        assert_eq!(p.as_slice(), &[10.0, 14.0, 20.0]);
    }

    #[test]
    fn pack_degenerate_single() {
        let c11 = PackedLowerTriangular::from_vec(1, vec![7.0]).unwrap();
        let p = pack_lower(&c11, &DenseMatrix::zeros(0, 1), &PackedLowerTriangular::zeros(0)).unwrap();
        assert_eq!(p.as_slice(), &[7.0]);
    }

    #[test]
    fn pack_rejects_inconsistent_blocks() {
        let c11 = PackedLowerTriangular::zeros(2);
        let c22 = PackedLowerTriangular::zeros(2);
        assert!(pack_lower(&c11, &DenseMatrix::zeros(2, 3), &c22).is_err());
        // n1 - n2 must be 0 or 1
        let c22 = PackedLowerTriangular::zeros(0);
        assert!(pack_lower(&c11, &DenseMatrix::zeros(0, 2), &c22).is_err());
    }

    #[test]
    fn frobenius_counts_both_triangles() {
        let p = PackedLowerTriangular::from_vec(2, vec![1.0, 2.0, 3.0]).unwrap();
        assert!((p.frobenius_norm() - p.unpack().frobenius_norm()).abs() < 1e-15);
        let q = PackedLowerTriangular::zeros(2);
        assert_eq!(p.frobenius_distance(&q).unwrap(), p.frobenius_norm());
        assert_eq!(p.max_abs_diff(&q).unwrap(), (3.0, (1, 1)));
    }

    fn sym(n: usize, seed: u64) -> DenseMatrix {
        let mut a = DenseMatrix::from_fn(n, n, |i, j| {
            ((seed.wrapping_add((i * 131 + j) as u64)) as f64 * 0.618_033_988_7).fract()
        });
        for i in 0..n {
            for j in 0..i {
                let v = a.get(i, j);
                a.set(j, i, v);
            }
        }
        a
    }

    proptest! {
        #[test]
        fn pack_unpack_round_trip(n in 1usize..64, seed in any::<u64>()) {
            let a = sym(n, seed);
            let p = PackedLowerTriangular::from_lower(&a).unwrap();
            prop_assert_eq!(p.unpack(), a);
        }

        #[test]
        fn block_assembly_matches_direct_packing(n in 1usize..40, seed in any::<u64>()) {
            let a = sym(n, seed);
            let (n1, n2) = (n.div_ceil(2), n / 2);
            let c11 = PackedLowerTriangular::from_lower(&a.view().sub(0, 0, n1, n1).to_dense()).unwrap();
            let c22 = PackedLowerTriangular::from_lower(&a.view().sub(n1, n1, n2, n2).to_dense()).unwrap();
            let c21 = a.view().sub(n1, 0, n2, n1).to_dense();
            let p = pack_lower(&c11, &c21, &c22).unwrap();
            prop_assert_eq!(p, PackedLowerTriangular::from_lower(&a).unwrap());
        }
    }
}
