//! Recursive Strassen-based computation of `C = A^T A` for dense rectangular
//! `A`, storing only the lower triangle of the symmetric result, plus an
//! in-process process-tree runtime that distributes the recursion over
//! workers exchanging messages.
//!
//! ```
//! use ata_core::{ata, build_tree, gen_matrix, run_parallel, AtaConfig, Distribution, RuntimeOptions};
//!
//! # fn main() -> ata_core::Result<()> {
//! let a = gen_matrix(300, 200, 42, Distribution::Uniform);
//! let c = ata(&a.view(), &AtaConfig::default())?;
//! let tree = build_tree(15, a.rows(), a.cols())?;
//! let par = run_parallel(&a, &tree, &RuntimeOptions::default())?;
//! assert_eq!(par.result, c);
//! assert_eq!(c.n(), 200);
//! # Ok(())
//! # }
//! ```

pub mod ata;
pub mod bench;
pub mod error;
pub mod hasa;
pub mod matrix;
pub mod runtime;
pub mod scheduler;

pub use ata::{ata, ata_base, ata_counted, classical_ata_oracle, expected_mult_count, AtaConfig, MultCounter};
pub use error::{Error, Result};
pub use hasa::{classical_mult, hasa, hasa_counted, strassen_mult_count, HasaConfig};
pub use matrix::{DenseMatrix, MatrixView, PackedLowerTriangular, SplitDims};
pub use bench::{gen_matrix, karp_flatt, run_bench, BenchConfig, BenchReport, Distribution};
pub use runtime::{predict_comm_cost, run_parallel, CommStats, CostModel, ParallelOutput, RuntimeOptions};
pub use scheduler::{build_tree, TaskNode, TaskTree};
