//! Row-major dense storage, zero-copy rectangular views and packed symmetric storage.

mod io;
mod packed;
mod transpose;

pub use self::io::{read_matrix, read_matrix_binary, read_matrix_text, write_matrix_binary, write_matrix_text};
pub use self::packed::{pack_lower, PackedLowerTriangular};
pub use self::transpose::{transpose, TRANSPOSE_TILE};

use std::fmt;

use crate::error::{Error, Result};

/// Dense `rows x cols` matrix of `f64` in row-major order.
#[derive(Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::contract(format!(
                "data length {} does not match {rows}x{cols}",
                data.len()
            )));
        }
        Ok(DenseMatrix { rows, cols, data })
    }

    /// Builds a matrix from nested rows. Panics on ragged input; meant for literals.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.as_ref().len(), cols, "ragged rows");
            data.extend_from_slice(r.as_ref());
        }
        DenseMatrix { rows: rows.len(), cols, data }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        DenseMatrix { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let c = self.cols;
        &mut self.data[i * c..(i + 1) * c]
    }

    pub fn view(&self) -> MatrixView<'_> {
        MatrixView { base: self, row_off: 0, col_off: 0, rows: self.rows, cols: self.cols }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub(crate) fn add_assign(&mut self, other: &DenseMatrix) -> Result<()> {
        check_same_shape((self.rows, self.cols), (other.rows, other.cols))?;
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
}

impl fmt::Debug for DenseMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "DenseMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows.min(8) {
            writeln!(f, "  {:?}", &self.row(i)[..self.cols.min(8)])?;
        }
        write!(f, "]")
    }
}

/// Read-only rectangular window into a [`DenseMatrix`].
#[derive(Clone, Copy)]
pub struct MatrixView<'a> {
    base: &'a DenseMatrix,
    row_off: usize,
    col_off: usize,
    rows: usize,
    cols: usize,
}

impl<'a> MatrixView<'a> {
    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row_stride(&self) -> usize {
        self.base.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        debug_assert!(i < self.rows && j < self.cols);
        self.base.data[(self.row_off + i) * self.base.cols + self.col_off + j]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &'a [f64] {
        let start = (self.row_off + i) * self.base.cols + self.col_off;
        &self.base.data[start..start + self.cols]
    }

    /// Sub-window relative to this view. Panics when out of bounds.
    pub fn sub(&self, row_off: usize, col_off: usize, rows: usize, cols: usize) -> MatrixView<'a> {
        assert!(
            row_off + rows <= self.rows && col_off + cols <= self.cols,
            "sub-view {rows}x{cols}@({row_off},{col_off}) exceeds {}x{}",
            self.rows,
            self.cols
        );
        MatrixView {
            base: self.base,
            row_off: self.row_off + row_off,
            col_off: self.col_off + col_off,
            rows,
            cols,
        }
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut data = Vec::with_capacity(self.rows * self.cols);
        for i in 0..self.rows {
            data.extend_from_slice(self.row(i));
        }
        DenseMatrix { rows: self.rows, cols: self.cols, data }
    }

    pub fn frobenius_norm(&self) -> f64 {
        (0..self.rows)
            .flat_map(|i| self.row(i).iter())
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
    }
}

impl fmt::Debug for MatrixView<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "MatrixView {}x{}@({},{}) of {}x{}",
            self.rows, self.cols, self.row_off, self.col_off, self.base.rows, self.base.cols
        )
    }
}

/// Ceiling/floor halves of an `m x n` shape: `m1 = ceil(m/2)`, `m2 = floor(m/2)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SplitDims {
    pub m1: usize,
    pub m2: usize,
    pub n1: usize,
    pub n2: usize,
}

impl SplitDims {
    pub fn of(m: usize, n: usize) -> Self {
        SplitDims { m1: m.div_ceil(2), m2: m / 2, n1: n.div_ceil(2), n2: n / 2 }
    }
}

/// Splits a view into `[A11, A12, A21, A22]`, the (1,1) block taking the ceilings.
pub fn split_quadrants<'a>(a: &MatrixView<'a>) -> (SplitDims, [MatrixView<'a>; 4]) {
    let d = SplitDims::of(a.rows(), a.cols());
    let q = [
        a.sub(0, 0, d.m1, d.n1),
        a.sub(0, d.n1, d.m1, d.n2),
        a.sub(d.m1, 0, d.m2, d.n1),
        a.sub(d.m1, d.n1, d.m2, d.n2),
    ];
    (d, q)
}

fn check_same_shape(a: (usize, usize), b: (usize, usize)) -> Result<()> {
    if a != b {
        return Err(Error::contract(format!(
            "shape mismatch: {}x{} vs {}x{}",
            a.0, a.1, b.0, b.1
        )));
    }
    Ok(())
}

fn zip_with(a: &MatrixView<'_>, b: &MatrixView<'_>, op: impl Fn(f64, f64) -> f64) -> Result<DenseMatrix> {
    check_same_shape((a.rows(), a.cols()), (b.rows(), b.cols()))?;
    let mut data = Vec::with_capacity(a.rows() * a.cols());
    for i in 0..a.rows() {
        data.extend(a.row(i).iter().zip(b.row(i)).map(|(&x, &y)| op(x, y)));
    }
    Ok(DenseMatrix { rows: a.rows(), cols: a.cols(), data })
}

/// Elementwise `a + b`.
pub fn add(a: &MatrixView<'_>, b: &MatrixView<'_>) -> Result<DenseMatrix> {
    zip_with(a, b, |x, y| x + y)
}

/// Elementwise `a - b`.
pub fn sub(a: &MatrixView<'_>, b: &MatrixView<'_>) -> Result<DenseMatrix> {
    zip_with(a, b, |x, y| x - y)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_dims_examples() {
        let a = DenseMatrix::zeros(5, 5);
        assert_eq!(split_quadrants(&a.view()).0, SplitDims { m1: 3, m2: 2, n1: 3, n2: 2 });
        let a = DenseMatrix::zeros(4, 4);
        assert_eq!(split_quadrants(&a.view()).0, SplitDims { m1: 2, m2: 2, n1: 2, n2: 2 });
        let a = DenseMatrix::zeros(5, 3);
        assert_eq!(split_quadrants(&a.view()).0, SplitDims { m1: 3, m2: 2, n1: 2, n2: 1 });
    }

    #[test]
    fn split_of_one_by_one_leaves_empty_blocks() {
        let a = DenseMatrix::from_rows(&[[7.0]]);
        let (d, q) = split_quadrants(&a.view());
        assert_eq!(d, SplitDims { m1: 1, m2: 0, n1: 1, n2: 0 });
        assert_eq!(q[0].get(0, 0), 7.0);
        assert_eq!(q[3].rows() * q[3].cols(), 0);
    }

    #[test]
    fn quadrants_tile_exactly() {
        for (m, n) in [(1, 1), (2, 3), (5, 5), (7, 4), (9, 12)] {
            let a = DenseMatrix::from_fn(m, n, |i, j| (i * n + j) as f64);
            let (d, q) = split_quadrants(&a.view());
            let offs = [(0, 0), (0, d.n1), (d.m1, 0), (d.m1, d.n1)];
            let mut hits = vec![0u32; m * n];
            for (v, (ro, co)) in q.iter().zip(offs) {
                for i in 0..v.rows() {
                    for j in 0..v.cols() {
                        assert_eq!(v.get(i, j), a.get(ro + i, co + j));
                        hits[(ro + i) * n + co + j] += 1;
                    }
                }
            }
            assert!(hits.iter().all(|&h| h == 1), "{m}x{n}");
        }
    }

    #[test]
    fn nested_views_compose_offsets() {
        let a = DenseMatrix::from_fn(6, 6, |i, j| (10 * i + j) as f64);
        let v = a.view().sub(1, 2, 4, 3).sub(1, 1, 2, 2);
        assert_eq!(v.get(0, 0), 23.0);
        assert_eq!(v.get(1, 1), 34.0);
        assert_eq!(v.row_stride(), 6);
        assert_eq!(v.to_dense(), DenseMatrix::from_rows(&[[23.0, 24.0], [33.0, 34.0]]));
    }

    #[test]
    fn add_and_sub() {
        let x = DenseMatrix::from_rows(&[[1.0, 2.0]]);
        let y = DenseMatrix::from_rows(&[[3.0, 4.0]]);
        assert_eq!(add(&x.view(), &y.view()).unwrap(), DenseMatrix::from_rows(&[[4.0, 6.0]]));

        let x = DenseMatrix::from_fn(3, 4, |i, j| (i as f64).sin() + j as f64 * 0.3);
        let z = DenseMatrix::zeros(3, 4);
        assert_eq!(add(&x.view(), &z.view()).unwrap(), x);
        assert_eq!(sub(&x.view(), &x.view()).unwrap(), z);
    }

    #[test]
    fn add_rejects_mismatched_shapes() {
        let x = DenseMatrix::zeros(2, 3);
        let y = DenseMatrix::zeros(3, 2);
        assert!(matches!(add(&x.view(), &y.view()), Err(Error::Contract(_))));
        assert!(matches!(sub(&x.view(), &y.view()), Err(Error::Contract(_))));
    }

    #[test]
    fn from_vec_checks_length() {
        assert!(DenseMatrix::from_vec(2, 2, vec![1.0; 3]).is_err());
        let m = DenseMatrix::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(m.get(1, 0), 3.0);
    }
}
