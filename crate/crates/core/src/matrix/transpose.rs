use super::{DenseMatrix, MatrixView};

/// Edge length of the base-case tile for the recursive transpose.
pub const TRANSPOSE_TILE: usize = 16;

/// Cache-oblivious out-of-place transpose.
///
/// The larger of the two extents is halved until the block fits a
/// `TRANSPOSE_TILE x TRANSPOSE_TILE` tile, which is then copied directly.
pub fn transpose(a: &MatrixView<'_>) -> DenseMatrix {
    let (m, n) = (a.rows(), a.cols());
    let mut out = DenseMatrix::zeros(n, m);
    transpose_block(a, out.as_mut_slice(), m, 0, 0, m, n);
    out
}

// Writes a[r0..r0+rows, c0..c0+cols] transposed into `out` (leading dimension `ld`).
fn transpose_block(
    a: &MatrixView<'_>,
    out: &mut [f64],
    ld: usize,
    r0: usize,
    c0: usize,
    rows: usize,
    cols: usize,
) {
    if rows <= TRANSPOSE_TILE && cols <= TRANSPOSE_TILE {
        for i in r0..r0 + rows {
            let src = &a.row(i)[c0..c0 + cols];
            for (dj, &v) in src.iter().enumerate() {
                out[(c0 + dj) * ld + i] = v;
            }
        }
    } else if rows >= cols {
        let h = rows / 2;
        transpose_block(a, out, ld, r0, c0, h, cols);
        transpose_block(a, out, ld, r0 + h, c0, rows - h, cols);
    } else {
        let h = cols / 2;
        transpose_block(a, out, ld, r0, c0, rows, h);
        transpose_block(a, out, ld, r0, c0 + h, rows, cols - h);
    }
}
