use ata_core::matrix::{read_matrix, transpose, write_matrix_binary, write_matrix_text};
use ata_core::{
    ata, ata_base, classical_ata_oracle, classical_mult, gen_matrix, hasa, AtaConfig, DenseMatrix, Distribution,
    HasaConfig, PackedLowerTriangular,
};

fn tol(a: &DenseMatrix) -> f64 {
    1e-9 * a.frobenius_norm().powi(2)
}

#[test]
fn small_example() {
    let a = DenseMatrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]);
    let c = ata(&a.view(), &AtaConfig { base_threshold: 1, count_mults: false }).unwrap();
    assert_eq!(c.as_slice(), &[10.0, 14.0, 20.0]);
    assert_eq!(c.get(0, 1), c.get(1, 0));
}

#[test]
fn every_threshold_agrees_with_oracle_on_odd_shapes() {
    for (m, n) in [(33, 65), (65, 33), (97, 97), (2, 129), (129, 2)] {
        let a = gen_matrix(m, n, (m * 1000 + n) as u64, Distribution::Uniform);
        let want = classical_ata_oracle(&a.view());
        for t in [1, 2, 3, 7, 32] {
            let got = ata(&a.view(), &AtaConfig { base_threshold: t, count_mults: false }).unwrap();
            assert!(got.frobenius_distance(&want).unwrap() <= tol(&a), "{m}x{n} t={t}");
        }
    }
}

#[test]
fn threshold_at_least_min_dim_is_the_base_kernel() {
    let a = gen_matrix(70, 40, 9, Distribution::Uniform);
    let c = ata(&a.view(), &AtaConfig { base_threshold: 70, count_mults: false }).unwrap();
    assert_eq!(c, ata_base(&a.view()));
}

#[test]
fn ata_of_ones_counts_rows() {
    let a = gen_matrix(45, 19, 0, Distribution::Ones);
    let c = ata(&a.view(), &AtaConfig { base_threshold: 2, count_mults: false }).unwrap();
    assert!(c.as_slice().iter().all(|&v| v == 45.0));
}

#[test]
fn hasa_matches_classical_on_transposed_blocks() {
    let a = gen_matrix(100, 37, 11, Distribution::Uniform);
    let b = gen_matrix(100, 53, 12, Distribution::Uniform);
    let at = transpose(&a.view());
    let got = hasa(&at.view(), &b.view(), &HasaConfig { base_threshold: 4, count_mults: false }).unwrap();
    let want = classical_mult(&at.view(), &b.view()).unwrap();
    let diff: f64 = got.as_slice().iter().zip(want.as_slice()).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    assert!(diff <= 1e-9 * at.frobenius_norm() * b.frobenius_norm());
}

#[test]
fn rejects_bad_input() {
    let a = DenseMatrix::zeros(0, 3);
    assert!(ata(&a.view(), &AtaConfig::default()).is_err());
    let b = DenseMatrix::identity(3);
    assert!(ata(&b.view(), &AtaConfig { base_threshold: 0, count_mults: false }).is_err());
    let c = DenseMatrix::zeros(2, 4);
    assert!(hasa(&c.view(), &c.view(), &HasaConfig::default()).is_err());
}

#[test]
fn matrix_files_round_trip_through_sniffing_reader() {
    let dir = tempfile::tempdir().unwrap();
    let a = gen_matrix(6, 4, 13, Distribution::Uniform);
    let text = dir.path().join("a.txt");
    let bin = dir.path().join("a.bin");
    write_matrix_text(std::fs::File::create(&text).unwrap(), &a).unwrap();
    write_matrix_binary(std::fs::File::create(&bin).unwrap(), &a).unwrap();
    assert_eq!(read_matrix(&text).unwrap(), a);
    assert_eq!(read_matrix(&bin).unwrap(), a);
}

#[test]
fn packed_unpack_is_symmetric() {
    let a = gen_matrix(12, 9, 14, Distribution::Uniform);
    let c: PackedLowerTriangular = ata(&a.view(), &AtaConfig { base_threshold: 2, count_mults: false }).unwrap();
    let full = c.unpack();
    for i in 0..9 {
        for j in 0..9 {
            assert_eq!(full.get(i, j), full.get(j, i));
        }
    }
}
