//! Shared inputs for the criterion benchmarks.

use ata_core::{gen_matrix, DenseMatrix, Distribution};

/// Seed used by every benchmark input.
pub const SEED: u64 = 2024;

/// Square uniform input of order `n`.
pub fn square(n: usize) -> DenseMatrix {
    gen_matrix(n, n, SEED, Distribution::Uniform)
}

/// Tall input with twice as many rows as columns.
pub fn tall(n: usize) -> DenseMatrix {
    gen_matrix(2 * n, n, SEED, Distribution::Uniform)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shapes() {
        assert_eq!((square(5).rows(), square(5).cols()), (5, 5));
        assert_eq!((tall(5).rows(), tall(5).cols()), (10, 5));
    }
}
