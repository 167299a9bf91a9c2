//! Matrix-based Rényi α-order entropy and mutual information over Gaussian
//! Gram matrices, with analytic gradients.
//!
//! For a batch `X` of `N` samples the Gram matrix is
//! `K(m, n) = exp(-‖x_m − x_n‖² / (2σ²))` and `A = K / tr(K)`. Entropy is
//! taken over the eigenspectrum of `A`:
//!
//! ```text
//! H_α(A) = 1/(1−α) · log₂ Σ_m λ_m(A)^α
//! ```
//!
//! Joint entropy uses the renormalized Hadamard product
//! `A_x ∘ A_z / tr(A_x ∘ A_z)` and `I(X;Z) = H(A_x) + H(A_z) − H(A_x, A_z)`.
//! All information values are in bits.
//!
//! Gradients use the spectral-function derivative `∂ tr(A^α)/∂A = α A^{α−1}`,
//! which stays well defined when eigenvalues repeat. The kernel width σ is
//! treated as a constant when differentiating.

use serde::{Deserialize, Serialize};

use crate::error::{MeibError, Result};
use crate::linalg::{hadamard, sym_eig, sym_eigvals, DenseMatrix, SymEig, EIGEN_CLAMP};

const TRACE_TOLERANCE: f64 = 1e-10;

/// How the kernel width of the raw input Gram is chosen during training.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaMode {
    /// Re-estimated on every mini-batch.
    #[default]
    PerBatch,
    /// Estimated once on the full training view.
    PerDataset,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KernelConfig {
    pub alpha: f64,
    pub k_nn: usize,
    pub sigma_floor: f64,
    pub sigma_mode: SigmaMode,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self {
            alpha: 1.01,
            k_nn: 10,
            sigma_floor: 1e-6,
            sigma_mode: SigmaMode::PerBatch,
        }
    }
}

impl KernelConfig {
    pub fn validate(&self) -> Result<()> {
        check_alpha(self.alpha)?;
        if self.k_nn == 0 {
            return Err(MeibError::param("k_nn must be at least 1"));
        }
        if !(self.sigma_floor > 0.0) || !self.sigma_floor.is_finite() {
            return Err(MeibError::param("sigma_floor must be positive and finite"));
        }
        Ok(())
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(MeibError::param(format!("alpha must be positive, got {alpha}")));
    }
    if alpha == 1.0 {
        return Err(MeibError::param(
            "alpha = 1 is the Shannon limit and is not supported; use e.g. 1.01",
        ));
    }
    Ok(())
}

/// Trace-one symmetric PSD kernel matrix over a batch.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalizedGram {
    a: DenseMatrix,
}

impl NormalizedGram {
    /// Wraps an already normalized matrix, checking it is square, finite,
    /// symmetric, of unit trace, with every diagonal entry equal to `1/N`.
    pub fn new(a: DenseMatrix) -> Result<Self> {
        if !a.is_square() || a.rows() == 0 {
            return Err(MeibError::dim(format!(
                "normalized Gram must be square and non-empty, got {:?}",
                a.shape()
            )));
        }
        a.ensure_finite("normalized Gram")?;
        if !a.is_symmetric(TRACE_TOLERANCE) {
            return Err(MeibError::param("normalized Gram is not symmetric"));
        }
        let n = a.rows() as f64;
        if (a.trace() - 1.0).abs() > TRACE_TOLERANCE {
            return Err(MeibError::param(format!(
                "normalized Gram trace is {}, expected 1",
                a.trace()
            )));
        }
        if a.diag().iter().any(|d| (d - 1.0 / n).abs() > TRACE_TOLERANCE) {
            return Err(MeibError::param("normalized Gram diagonal must be 1/N"));
        }
        Ok(Self { a })
    }

    /// `I/N`: every sample distinguishable.
    pub fn uniform(n: usize) -> Self {
        Self {
            a: DenseMatrix::identity(n).scale(1.0 / n as f64),
        }
    }

    /// `J/N`: all samples identical.
    pub fn constant(n: usize) -> Self {
        Self {
            a: DenseMatrix::filled(n, n, 1.0 / n as f64),
        }
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.a
    }

    pub fn n(&self) -> usize {
        self.a.rows()
    }
}

fn squared_distances(batch: &DenseMatrix) -> DenseMatrix {
    let n = batch.rows();
    let mut d = DenseMatrix::zeros(n, n);
    for i in 0..n {
        let xi = batch.row(i);
        for j in (i + 1)..n {
            let s: f64 = xi
                .iter()
                .zip(batch.row(j))
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            d.set(i, j, s);
            d.set(j, i, s);
        }
    }
    d
}

/// Kernel width: for each sample, the mean Euclidean distance to its `k_nn`
/// nearest other samples; σ is the average of these means, floored at
/// `sigma_floor`. Uses all `N − 1` neighbours when fewer than `k_nn` exist.
pub fn estimate_sigma(batch: &DenseMatrix, k_nn: usize, sigma_floor: f64) -> Result<f64> {
    let n = batch.rows();
    if n < 2 {
        return Err(MeibError::InsufficientSamples { needed: 2, got: n });
    }
    if k_nn == 0 {
        return Err(MeibError::param("k_nn must be at least 1"));
    }
    batch.ensure_finite("sigma estimation input")?;
    let k = k_nn.min(n - 1);
    let sq = squared_distances(batch);
    let mut nearest: Vec<f64> = Vec::with_capacity(n);
    let mut total = 0.0;
    for i in 0..n {
        nearest.clear();
        nearest.extend((0..n).filter(|&j| j != i).map(|j| sq.get(i, j).sqrt()));
        nearest.select_nth_unstable_by(k - 1, f64::total_cmp);
        let smallest = &mut nearest[..k];
        smallest.sort_by(f64::total_cmp);
        total += smallest.iter().sum::<f64>() / k as f64;
    }
    Ok((total / n as f64).max(sigma_floor))
}

fn gaussian_kernel(batch: &DenseMatrix, sigma: f64) -> Result<DenseMatrix> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(MeibError::param(format!("kernel width must be positive, got {sigma}")));
    }
    if batch.rows() == 0 {
        return Err(MeibError::Empty("kernel batch".into()));
    }
    batch.ensure_finite("kernel input")?;
    let scale = -1.0 / (2.0 * sigma * sigma);
    let mut k = squared_distances(batch);
    k.data_mut().iter_mut().for_each(|d| *d = (*d * scale).exp());
    Ok(k)
}

/// `A = K / tr(K)` for the Gaussian kernel of width `sigma`.
pub fn normalized_gram(batch: &DenseMatrix, sigma: f64) -> Result<NormalizedGram> {
    let k = gaussian_kernel(batch, sigma)?;
    let tr = k.trace();
    Ok(NormalizedGram { a: k.scale(1.0 / tr) })
}

fn power_sum(eigenvalues: &[f64], alpha: f64) -> f64 {
    eigenvalues
        .iter()
        .map(|&l| l.max(EIGEN_CLAMP).powf(alpha))
        .sum()
}

fn entropy_from_spectrum(eigenvalues: &[f64], alpha: f64) -> f64 {
    power_sum(eigenvalues, alpha).log2() / (1.0 - alpha)
}

/// `1/(1−α) log₂ tr(M^α)` for any symmetric PSD matrix, normalized or not.
pub fn matrix_renyi_entropy(m: &DenseMatrix, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    Ok(entropy_from_spectrum(&sym_eigvals(m)?, alpha))
}

/// Rényi α-order entropy in bits.
pub fn renyi_entropy(g: &NormalizedGram, alpha: f64) -> Result<f64> {
    matrix_renyi_entropy(&g.a, alpha)
}

/// Renormalized Hadamard product `A_x ∘ A_z / tr(A_x ∘ A_z)`.
pub fn joint_gram(gx: &NormalizedGram, gz: &NormalizedGram) -> Result<NormalizedGram> {
    if gx.n() != gz.n() {
        return Err(MeibError::dim(format!(
            "joint entropy over batches of {} and {} samples",
            gx.n(),
            gz.n()
        )));
    }
    let c = hadamard(&gx.a, &gz.a)?;
    let tr = c.trace();
    Ok(NormalizedGram { a: c.scale(1.0 / tr) })
}

pub fn joint_entropy(gx: &NormalizedGram, gz: &NormalizedGram, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    renyi_entropy(&joint_gram(gx, gz)?, alpha)
}

/// `I(X;Z) = H(A_x) + H(A_z) − H(A_x, A_z)` in bits.
pub fn mutual_information(gx: &NormalizedGram, gz: &NormalizedGram, alpha: f64) -> Result<f64> {
    let joint = joint_entropy(gx, gz, alpha)?;
    Ok(renyi_entropy(gx, alpha)? + renyi_entropy(gz, alpha)? - joint)
}

fn spectral_entropy_gradient(eig: &SymEig, alpha: f64) -> DenseMatrix {
    let s = power_sum(&eig.eigenvalues, alpha);
    let c = alpha / ((1.0 - alpha) * std::f64::consts::LN_2 * s);
    eig.spectral_map(|l| c * l.max(EIGEN_CLAMP).powf(alpha - 1.0))
}

/// `∂H_α/∂A` for an arbitrary symmetric PSD matrix, treating its entries as
/// independent (no trace renormalization is differentiated).
pub fn matrix_entropy_gradient(m: &DenseMatrix, alpha: f64) -> Result<DenseMatrix> {
    check_alpha(alpha)?;
    Ok(spectral_entropy_gradient(&sym_eig(m)?, alpha))
}

/// `∂H_α/∂A = α / ((1−α) ln2 · tr(A^α)) · A^{α−1}`; symmetric.
pub fn entropy_gradient_wrt_gram(g: &NormalizedGram, alpha: f64) -> Result<DenseMatrix> {
    matrix_entropy_gradient(&g.a, alpha)
}

/// Gradient of an information quantity with respect to a batch.
#[derive(Clone, Debug, PartialEq)]
pub struct EntropyGradient {
    pub d_input: DenseMatrix,
}

/// Value and gradient of `I(X;Z)` for one mini-batch.
#[derive(Clone, Debug)]
pub struct MiEvaluation {
    pub mi: f64,
    pub h_x: f64,
    pub h_z: f64,
    pub h_joint: f64,
    pub sigma_x: f64,
    pub sigma_z: f64,
    /// `∂I/∂z`; absent when only the value was requested.
    pub gradient: Option<EntropyGradient>,
}

fn check_pair(x: &DenseMatrix, z: &DenseMatrix) -> Result<()> {
    if x.rows() != z.rows() {
        return Err(MeibError::dim(format!(
            "x has {} rows but z has {}",
            x.rows(),
            z.rows()
        )));
    }
    if x.rows() < 2 {
        return Err(MeibError::InsufficientSamples {
            needed: 2,
            got: x.rows(),
        });
    }
    Ok(())
}

/// Evaluates `I(X;Z)` with fixed kernel widths, optionally with `∂I/∂z`.
///
/// The raw-input term never needs eigenvectors, so only the latent and joint
/// Gram matrices pay for a full decomposition, and only when the gradient is
/// requested.
pub fn evaluate_mi(
    x: &DenseMatrix,
    z: &DenseMatrix,
    sigma_x: f64,
    sigma_z: f64,
    alpha: f64,
    with_gradient: bool,
) -> Result<MiEvaluation> {
    check_alpha(alpha)?;
    check_pair(x, z)?;
    let kx = gaussian_kernel(x, sigma_x)?;
    let kz = gaussian_kernel(z, sigma_z)?;
    let ax = kx.scale(1.0 / kx.trace());
    let tz = kz.trace();
    let az = kz.scale(1.0 / tz);
    let c = hadamard(&ax, &az)?;
    let tc = c.trace();
    let b = c.scale(1.0 / tc);

    let h_x = entropy_from_spectrum(&sym_eigvals(&ax)?, alpha);
    if !with_gradient {
        let h_z = entropy_from_spectrum(&sym_eigvals(&az)?, alpha);
        let h_joint = entropy_from_spectrum(&sym_eigvals(&b)?, alpha);
        return Ok(MiEvaluation {
            mi: h_x + h_z - h_joint,
            h_x,
            h_z,
            h_joint,
            sigma_x,
            sigma_z,
            gradient: None,
        });
    }

    let eig_z = sym_eig(&az)?;
    let eig_b = sym_eig(&b)?;
    let h_z = entropy_from_spectrum(&eig_z.eigenvalues, alpha);
    let h_joint = entropy_from_spectrum(&eig_b.eigenvalues, alpha);

    // Joint term: B = C / tr(C) with C = A_x ∘ A_z.
    let grad_b = spectral_entropy_gradient(&eig_b, alpha);
    let mut grad_c = grad_b.scale(1.0 / tc);
    let shift_c = grad_b.dot(&c)? / (tc * tc);
    for i in 0..grad_c.rows() {
        grad_c.set(i, i, grad_c.get(i, i) - shift_c);
    }
    // ∂I/∂A_z = ∂H(A_z)/∂A_z − A_x ∘ ∂H_joint/∂C
    let mut grad_az = spectral_entropy_gradient(&eig_z, alpha);
    grad_az.add_scaled_in_place(&hadamard(&ax, &grad_c)?, -1.0)?;

    // A_z = K_z / tr(K_z)
    let mut grad_kz = grad_az.scale(1.0 / tz);
    let shift_k = grad_az.dot(&kz)? / (tz * tz);
    for i in 0..grad_kz.rows() {
        grad_kz.set(i, i, grad_kz.get(i, i) - shift_k);
    }

    // K = exp(−D / 2σ²) ⇒ ∂I/∂D = −∂I/∂K ∘ K / 2σ²,
    // and ∂I/∂z_m = 4 Σ_n M_mn (z_m − z_n) for the symmetric M = ∂I/∂D.
    let mut m = hadamard(&grad_kz, &kz)?;
    m.scale_in_place(-1.0 / (2.0 * sigma_z * sigma_z));
    let m = m.symmetrized()?;
    // Pairwise differences rather than `rowsum·z − M·z`: M can be huge when σ
    // sits at its floor, and the expanded form then cancels catastrophically.
    let mut d_input = DenseMatrix::zeros(z.rows(), z.cols());
    for i in 0..z.rows() {
        let zi = z.row(i);
        let mi = m.row(i);
        let out = d_input.row_mut(i);
        for (k, &w) in mi.iter().enumerate() {
            if k == i || w == 0.0 {
                continue;
            }
            for ((o, &a), &b) in out.iter_mut().zip(zi).zip(z.row(k)) {
                *o += w * (a - b);
            }
        }
        out.iter_mut().for_each(|o| *o *= 4.0);
    }
    d_input.ensure_finite("mutual information gradient")?;

    Ok(MiEvaluation {
        mi: h_x + h_z - h_joint,
        h_x,
        h_z,
        h_joint,
        sigma_x,
        sigma_z,
        gradient: Some(EntropyGradient { d_input }),
    })
}

/// `∂I(X;Z)/∂z` with both kernel widths estimated from their batches and
/// then held fixed. `x` is data and receives no gradient.
pub fn mi_gradient_wrt_batch(
    x_batch: &DenseMatrix,
    z_batch: &DenseMatrix,
    cfg: &KernelConfig,
) -> Result<EntropyGradient> {
    cfg.validate()?;
    check_pair(x_batch, z_batch)?;
    let sigma_x = estimate_sigma(x_batch, cfg.k_nn, cfg.sigma_floor)?;
    let sigma_z = estimate_sigma(z_batch, cfg.k_nn, cfg.sigma_floor)?;
    let eval = evaluate_mi(x_batch, z_batch, sigma_x, sigma_z, cfg.alpha, true)?;
    Ok(eval.gradient.expect("gradient requested"))
}

/// `I(X;Z)` with kernel widths estimated from each batch.
pub fn batch_mutual_information(
    x_batch: &DenseMatrix,
    z_batch: &DenseMatrix,
    cfg: &KernelConfig,
) -> Result<f64> {
    cfg.validate()?;
    check_pair(x_batch, z_batch)?;
    let sigma_x = estimate_sigma(x_batch, cfg.k_nn, cfg.sigma_floor)?;
    let sigma_z = estimate_sigma(z_batch, cfg.k_nn, cfg.sigma_floor)?;
    Ok(evaluate_mi(x_batch, z_batch, sigma_x, sigma_z, cfg.alpha, false)?.mi)
}
