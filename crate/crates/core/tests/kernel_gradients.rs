//! Analytic entropy / mutual-information gradients against central finite
//! differences.

use meib::kernel::{
    entropy_gradient_wrt_gram, estimate_sigma, evaluate_mi, matrix_renyi_entropy,
    mi_gradient_wrt_batch, normalized_gram, KernelConfig, NormalizedGram,
};
use meib::DenseMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const STEP: f64 = 1e-5;

fn random_batch(n: usize, d: usize, rng: &mut ChaCha8Rng) -> DenseMatrix {
    DenseMatrix::from_fn(n, d, |_, _| rng.random_range(-1.0..1.0))
}

fn rel_err(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// Directional derivative of the raw-matrix entropy along the symmetric
/// perturbation E_ij + E_ji (or E_ii on the diagonal).
fn fd_gram_gradient(a: &DenseMatrix, alpha: f64) -> DenseMatrix {
    let n = a.rows();
    let mut out = DenseMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let eval = |delta: f64| {
                let mut m = a.clone();
                m.set(i, j, m.get(i, j) + delta);
                if i != j {
                    m.set(j, i, m.get(j, i) + delta);
                }
                matrix_renyi_entropy(&m, alpha).unwrap()
            };
            let d = (eval(STEP) - eval(-STEP)) / (2.0 * STEP);
            if i == j {
                out.set(i, i, d);
            } else {
                out.set(i, j, d / 2.0);
                out.set(j, i, d / 2.0);
            }
        }
    }
    out
}

fn fd_mi_gradient(x: &DenseMatrix, z: &DenseMatrix, sx: f64, sz: f64, alpha: f64) -> DenseMatrix {
    let mut out = DenseMatrix::zeros(z.rows(), z.cols());
    for i in 0..z.rows() {
        for j in 0..z.cols() {
            let eval = |delta: f64| {
                let mut zp = z.clone();
                zp.set(i, j, zp.get(i, j) + delta);
                evaluate_mi(x, &zp, sx, sz, alpha, false).unwrap().mi
            };
            out.set(i, j, (eval(STEP) - eval(-STEP)) / (2.0 * STEP));
        }
    }
    out
}

/// Max relative error over entries where either side exceeds 1e-6; smaller
/// entries must agree to 1e-6 absolutely.
fn max_rel_err(analytic: &DenseMatrix, numeric: &DenseMatrix) -> f64 {
    let mut worst = 0.0_f64;
    for (&a, &f) in analytic.data().iter().zip(numeric.data()) {
        if a.abs().max(f.abs()) > 1e-6 {
            worst = worst.max(rel_err(a, f));
        } else {
            assert!((a - f).abs() < 1e-6, "small entries disagree: {a} vs {f}");
        }
    }
    worst
}

#[test]
fn gram_gradient_at_uniform_spectrum() {
    let n = 5;
    let alpha = 1.01;
    let g = NormalizedGram::uniform(n);
    let analytic = entropy_gradient_wrt_gram(&g, alpha).unwrap();
    let numeric = fd_gram_gradient(g.matrix(), alpha);
    let c = analytic.get(0, 0);
    for i in 0..n {
        for j in 0..n {
            let expected = if i == j { c } else { 0.0 };
            assert!((analytic.get(i, j) - expected).abs() < 1e-12);
        }
    }
    assert!(max_rel_err(&analytic, &numeric) < 1e-5);
}

#[test]
fn gram_gradient_random_four_by_four() {
    let mut rng = ChaCha8Rng::seed_from_u64(44);
    for alpha in [1.01, 2.0, 0.5] {
        let b = random_batch(4, 3, &mut rng);
        let g = normalized_gram(&b, 0.7).unwrap();
        let analytic = entropy_gradient_wrt_gram(&g, alpha).unwrap();
        let numeric = fd_gram_gradient(g.matrix(), alpha);
        let err = max_rel_err(&analytic, &numeric);
        assert!(err < 1e-5, "alpha {alpha}: {err}");
    }
}

#[test]
fn mi_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let cfg = KernelConfig::default();
    for instance in 0..20 {
        let n = rng.random_range(8..=16);
        let dx = rng.random_range(2..=6);
        let dz = rng.random_range(2..=6);
        let x = random_batch(n, dx, &mut rng);
        let z = random_batch(n, dz, &mut rng);
        let sx = estimate_sigma(&x, cfg.k_nn, cfg.sigma_floor).unwrap();
        let sz = estimate_sigma(&z, cfg.k_nn, cfg.sigma_floor).unwrap();
        let analytic = mi_gradient_wrt_batch(&x, &z, &cfg).unwrap().d_input;
        let numeric = fd_mi_gradient(&x, &z, sx, sz, cfg.alpha);
        let err = max_rel_err(&analytic, &numeric);
        assert!(err < 1e-4, "instance {instance} (N={n}, dz={dz}): {err}");
    }
}

#[test]
fn mi_gradient_collapsed_latent() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let cfg = KernelConfig::default();
    let x = random_batch(8, 3, &mut rng);
    let z = DenseMatrix::filled(8, 3, -0.4);
    let sx = estimate_sigma(&x, cfg.k_nn, cfg.sigma_floor).unwrap();
    let sz = estimate_sigma(&z, cfg.k_nn, cfg.sigma_floor).unwrap();
    assert_eq!(sz, cfg.sigma_floor);
    let analytic = mi_gradient_wrt_batch(&x, &z, &cfg).unwrap().d_input;
    let numeric = fd_mi_gradient(&x, &z, sx, sz, cfg.alpha);
    assert!(max_rel_err(&analytic, &numeric) < 1e-4);
}

#[test]
fn mi_is_invariant_to_latent_scale() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let cfg = KernelConfig::default();
    let x = random_batch(10, 4, &mut rng);
    let z = random_batch(10, 3, &mut rng);
    let sx = estimate_sigma(&x, cfg.k_nn, cfg.sigma_floor).unwrap();
    let sz = estimate_sigma(&z, cfg.k_nn, cfg.sigma_floor).unwrap();
    let base = evaluate_mi(&x, &z, sx, sz, cfg.alpha, false).unwrap().mi;
    for c in [0.1, 3.0, 25.0] {
        let zc = z.scale(c);
        let sc = estimate_sigma(&zc, cfg.k_nn, cfg.sigma_floor).unwrap();
        assert!((sc - c * sz).abs() < 1e-12 * c.max(1.0));
        let scaled = evaluate_mi(&x, &zc, sx, sc, cfg.alpha, false).unwrap().mi;
        assert!((scaled - base).abs() < 1e-8, "c={c}: {scaled} vs {base}");
    }
}
