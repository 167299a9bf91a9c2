use meib::kernel::{
    estimate_sigma, matrix_renyi_entropy, mutual_information, normalized_gram, renyi_entropy,
    NormalizedGram,
};
use meib::DenseMatrix;
use proptest::prelude::*;

const ALPHA: f64 = 1.01;

fn batch(max_n: usize, max_d: usize) -> impl Strategy<Value = DenseMatrix> {
    (4..=max_n, 1..=max_d).prop_flat_map(|(n, d)| {
        proptest::collection::vec(-3.0..3.0f64, n * d)
            .prop_map(move |data| DenseMatrix::new(n, d, data).unwrap())
    })
}

fn paired(max_n: usize, max_d: usize) -> impl Strategy<Value = (DenseMatrix, DenseMatrix)> {
    (4..=max_n, 1..=max_d, 1..=max_d).prop_flat_map(|(n, dx, dz)| {
        (
            proptest::collection::vec(-3.0..3.0f64, n * dx),
            proptest::collection::vec(-3.0..3.0f64, n * dz),
        )
            .prop_map(move |(x, z)| {
                (DenseMatrix::new(n, dx, x).unwrap(), DenseMatrix::new(n, dz, z).unwrap())
            })
    })
}

fn gram(b: &DenseMatrix) -> NormalizedGram {
    let sigma = estimate_sigma(b, 10, 1e-6).unwrap();
    normalized_gram(b, sigma).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn entropy_lies_between_zero_and_log_n(b in batch(64, 16)) {
        let g = gram(&b);
        let h = renyi_entropy(&g, ALPHA).unwrap();
        let upper = (b.rows() as f64).log2();
        prop_assert!(h >= -1e-8 && h <= upper + 1e-8, "h={h}, log2 N={upper}");
    }

    #[test]
    fn gram_spectrum_is_a_distribution(b in batch(32, 8)) {
        let g = gram(&b);
        let eig = meib::sym_eigvals(g.matrix()).unwrap();
        prop_assert!(eig.iter().all(|&l| l >= -1e-10));
        prop_assert!((eig.iter().sum::<f64>() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn mutual_information_is_symmetric_and_nonnegative((x, z) in paired(64, 16)) {
        let gx = gram(&x);
        let gz = gram(&z);
        let forward = mutual_information(&gx, &gz, ALPHA).unwrap();
        let backward = mutual_information(&gz, &gx, ALPHA).unwrap();
        prop_assert!((forward - backward).abs() < 1e-10);
        prop_assert!(forward >= -1e-8, "mi={forward}");
    }

    #[test]
    fn constant_latent_carries_no_information(x in batch(32, 8)) {
        let gx = gram(&x);
        let gz = NormalizedGram::constant(x.rows());
        prop_assert!(mutual_information(&gx, &gz, ALPHA).unwrap().abs() < 1e-8);
    }

    #[test]
    fn near_shannon_order_tracks_shannon_entropy(
        weights in proptest::collection::vec(0.01..1.0f64, 2..=64)
    ) {
        let total: f64 = weights.iter().sum();
        let spectrum: Vec<f64> = weights.iter().map(|w| w / total).collect();
        let shannon: f64 = -spectrum.iter().map(|p| p * p.log2()).sum::<f64>();
        let h = matrix_renyi_entropy(&DenseMatrix::from_diag(&spectrum), ALPHA).unwrap();
        let n = spectrum.len() as f64;
        prop_assert!((h - shannon).abs() <= 0.02 * n.log2(), "h={h}, shannon={shannon}");
    }
}

#[test]
fn self_information_of_uniform_gram_is_log_n() {
    for n in [2usize, 5, 16] {
        let g = NormalizedGram::uniform(n);
        let mi = mutual_information(&g, &g, ALPHA).unwrap();
        assert!((mi - (n as f64).log2()).abs() < 1e-9);
    }
}
