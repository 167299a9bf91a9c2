//! Dense real matrices and the symmetric eigensolver used by the entropy
//! estimators.
//!
//! Matrices are row-major `f64`. The eigensolver is Householder
//! tridiagonalization followed by the implicit QL method with Wilkinson-style
//! shifts; it is O(n³) and intended for the batch-sized (n ≤ 512) Gram
//! matrices this crate works with.

use serde::{Deserialize, Serialize};

use crate::error::{MeibError, Result};

/// Eigenvalues below this are clamped before fractional powers.
pub const EIGEN_CLAMP: f64 = 1e-12;

/// Eigenvalues may dip this far below zero and still count as PSD.
pub const PSD_TOLERANCE: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(MeibError::dim(format!(
                "{rows}x{cols} matrix needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let n = diag.len();
        let mut m = Self::zeros(n, n);
        for (i, &d) in diag.iter().enumerate() {
            m.data[i * n + i] = d;
        }
        m
    }

    /// Builds a matrix from equally sized rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(MeibError::dim(format!(
                    "row {i} has {} entries, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.data[i * self.cols + j] = value;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub(crate) fn ensure_finite(&self, what: &str) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(MeibError::NonFinite(what.to_string()))
        }
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self.get(i, i)).sum()
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.rows.min(self.cols)).map(|i| self.get(i, i)).collect()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Frobenius inner product `Σ a_ij b_ij`.
    pub fn dot(&self, other: &Self) -> Result<f64> {
        self.check_same_shape(other, "dot")?;
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|v| v * s)
    }

    pub fn scale_in_place(&mut self, s: f64) {
        self.data.iter_mut().for_each(|v| *v *= s);
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, "sub", |a, b| a - b)
    }

    /// `self += s * other`
    pub fn add_scaled_in_place(&mut self, other: &Self, s: f64) -> Result<()> {
        self.check_same_shape(other, "add_scaled")?;
        self.data
            .iter_mut()
            .zip(&other.data)
            .for_each(|(a, b)| *a += s * b);
        Ok(())
    }

    fn zip_with(&self, other: &Self, op: &str, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.check_same_shape(other, op)?;
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    fn check_same_shape(&self, other: &Self, op: &str) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(MeibError::dim(format!(
                "{op}: {:?} vs {:?}",
                self.shape(),
                other.shape()
            )));
        }
        Ok(())
    }

    /// `self · other`
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        gemm(self, false, other, false)
    }

    /// `self · otherᵀ`
    pub fn matmul_t(&self, other: &Self) -> Result<Self> {
        gemm(self, false, other, true)
    }

    /// `selfᵀ · other`
    pub fn t_matmul(&self, other: &Self) -> Result<Self> {
        gemm(self, true, other, false)
    }

    /// `(M + Mᵀ) / 2`
    pub fn symmetrized(&self) -> Result<Self> {
        if !self.is_square() {
            return Err(MeibError::dim(format!(
                "symmetrize needs a square matrix, got {:?}",
                self.shape()
            )));
        }
        let n = self.rows;
        let mut out = self.clone();
        for i in 0..n {
            for j in (i + 1)..n {
                let avg = 0.5 * (self.data[i * n + j] + self.data[j * n + i]);
                out.data[i * n + j] = avg;
                out.data[j * n + i] = avg;
            }
        }
        Ok(out)
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        if !self.is_square() {
            return false;
        }
        let n = self.rows;
        (0..n).all(|i| ((i + 1)..n).all(|j| (self.get(i, j) - self.get(j, i)).abs() <= tol))
    }

    pub fn column_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.cols];
        for r in self.data.chunks_exact(self.cols.max(1)) {
            sums.iter_mut().zip(r).for_each(|(s, v)| *s += v);
        }
        sums
    }

    /// ℓ₂ norm of every column.
    pub fn column_norms(&self) -> Vec<f64> {
        let mut sq = vec![0.0; self.cols];
        for r in self.data.chunks_exact(self.cols.max(1)) {
            sq.iter_mut().zip(r).for_each(|(s, v)| *s += v * v);
        }
        sq.into_iter().map(f64::sqrt).collect()
    }

    pub fn select_rows(&self, indices: &[usize]) -> Self {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Self {
            rows: indices.len(),
            cols: self.cols,
            data,
        }
    }

    /// Horizontal concatenation of matrices with equal row counts.
    pub fn hconcat(parts: &[&Self]) -> Result<Self> {
        let rows = parts.first().map_or(0, |p| p.rows);
        if parts.iter().any(|p| p.rows != rows) {
            return Err(MeibError::dim("hconcat: row counts differ"));
        }
        let cols = parts.iter().map(|p| p.cols).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for p in parts {
                data.extend_from_slice(p.row(i));
            }
        }
        Ok(Self { rows, cols, data })
    }

    /// Splits columns into consecutive blocks of the given widths.
    pub fn hsplit(&self, widths: &[usize]) -> Result<Vec<Self>> {
        if widths.iter().sum::<usize>() != self.cols {
            return Err(MeibError::dim(format!(
                "hsplit: widths {widths:?} do not cover {} columns",
                self.cols
            )));
        }
        let mut out: Vec<Self> = widths.iter().map(|&w| Self::zeros(self.rows, w)).collect();
        for i in 0..self.rows {
            let mut offset = 0;
            let row = self.row(i);
            for (part, &w) in out.iter_mut().zip(widths) {
                part.row_mut(i).copy_from_slice(&row[offset..offset + w]);
                offset += w;
            }
        }
        Ok(out)
    }
}

/// General product `op(a) · op(b)` where `op` optionally transposes.
pub fn gemm(a: &DenseMatrix, ta: bool, b: &DenseMatrix, tb: bool) -> Result<DenseMatrix> {
    let (m, k) = if ta { (a.cols, a.rows) } else { (a.rows, a.cols) };
    let (k2, n) = if tb { (b.cols, b.rows) } else { (b.rows, b.cols) };
    if k != k2 {
        return Err(MeibError::dim(format!(
            "matmul: inner dimensions {k} vs {k2} (shapes {:?}{} x {:?}{})",
            a.shape(),
            if ta { "ᵀ" } else { "" },
            b.shape(),
            if tb { "ᵀ" } else { "" }
        )));
    }
    let mut out = DenseMatrix::zeros(m, n);
    if m == 0 || n == 0 || k == 0 {
        return Ok(out);
    }
    // Row-major strides; a transpose is just swapped strides.
    let (rsa, csa) = if ta { (1, a.cols as isize) } else { (a.cols as isize, 1) };
    let (rsb, csb) = if tb { (1, b.cols as isize) } else { (b.cols as isize, 1) };
    // SAFETY: pointers and strides describe the owned buffers above, which
    // hold exactly m*k, k*n and m*n elements respectively.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.data.as_ptr(),
            rsa,
            csa,
            b.data.as_ptr(),
            rsb,
            csb,
            0.0,
            out.data.as_mut_ptr(),
            n as isize,
            1,
        );
    }
    Ok(out)
}

/// Elementwise product.
pub fn hadamard(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    a.zip_with(b, "hadamard", |x, y| x * y)
}

/// Eigendecomposition of a symmetric matrix.
#[derive(Clone, Debug)]
pub struct SymEig {
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    /// Orthonormal eigenvectors stored as columns, in eigenvalue order.
    pub eigenvectors: DenseMatrix,
}

impl SymEig {
    /// `U diag(f(λ)) Uᵀ`
    pub fn spectral_map(&self, f: impl Fn(f64) -> f64) -> DenseMatrix {
        let n = self.eigenvalues.len();
        let weights: Vec<f64> = self.eigenvalues.iter().map(|&l| f(l)).collect();
        let mut scaled = self.eigenvectors.clone();
        for i in 0..n {
            for (v, w) in scaled.row_mut(i).iter_mut().zip(&weights) {
                *v *= w;
            }
        }
        let mut out = gemm(&scaled, false, &self.eigenvectors, true)
            .expect("eigenvector matrix is square");
        // Exact symmetry; the product is only symmetric up to rounding.
        for i in 0..n {
            for j in (i + 1)..n {
                let avg = 0.5 * (out.get(i, j) + out.get(j, i));
                out.set(i, j, avg);
                out.set(j, i, avg);
            }
        }
        out
    }

    pub fn reconstruct(&self) -> DenseMatrix {
        self.spectral_map(|l| l)
    }
}

fn check_eig_input(m: &DenseMatrix) -> Result<DenseMatrix> {
    if !m.is_square() {
        return Err(MeibError::dim(format!(
            "eigendecomposition needs a square matrix, got {:?}",
            m.shape()
        )));
    }
    m.ensure_finite("eigendecomposition input")?;
    m.symmetrized()
}

/// Full symmetric eigendecomposition. The input is symmetrized first.
pub fn sym_eig(m: &DenseMatrix) -> Result<SymEig> {
    let sym = check_eig_input(m)?;
    let n = sym.rows;
    let mut work = Tridiagonal::reduce(sym, true);
    work.ql_implicit(true)?;
    let Tridiagonal { d, v, .. } = work;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d[a].total_cmp(&d[b]));
    let eigenvalues = order.iter().map(|&i| d[i]).collect();
    let eigenvectors = DenseMatrix::from_fn(n, n, |r, c| v[order[c] * n + r]);
    Ok(SymEig {
        eigenvalues,
        eigenvectors,
    })
}

/// Eigenvalues only (ascending); skips all eigenvector accumulation.
pub fn sym_eigvals(m: &DenseMatrix) -> Result<Vec<f64>> {
    let sym = check_eig_input(m)?;
    let mut work = Tridiagonal::reduce(sym, false);
    work.ql_implicit(false)?;
    let mut d = work.d;
    d.sort_by(f64::total_cmp);
    Ok(d)
}

/// `Aᵖ = U diag(max(λ, ε)ᵖ) Uᵀ` for a PSD matrix.
pub fn spectral_power(m: &DenseMatrix, p: f64) -> Result<DenseMatrix> {
    if !(p > 0.0) || !p.is_finite() {
        return Err(MeibError::param(format!("spectral power exponent must be > 0, got {p}")));
    }
    let eig = sym_eig(m)?;
    if let Some(&min) = eig.eigenvalues.first() {
        if min < -PSD_TOLERANCE {
            return Err(MeibError::NotPsd(min));
        }
    }
    Ok(eig.spectral_map(|l| l.max(EIGEN_CLAMP).powf(p)))
}

/// Householder tridiagonal form plus the accumulated transform.
///
/// `v` is stored transposed relative to the textbook column-oriented
/// formulation so that every inner loop walks contiguous memory; after
/// `reduce(.., true)` row `i` of `v` is column `i` of the transform.
struct Tridiagonal {
    n: usize,
    d: Vec<f64>,
    e: Vec<f64>,
    v: Vec<f64>,
}

impl Tridiagonal {
    fn reduce(m: DenseMatrix, accumulate: bool) -> Self {
        let n = m.rows;
        let mut v = m.into_data();
        let mut d = vec![0.0; n];
        let mut e = vec![0.0; n];
        if n == 0 {
            return Self { n, d, e, v };
        }
        for (j, dj) in d.iter_mut().enumerate() {
            *dj = v[j * n + n - 1];
        }

        for i in (1..n).rev() {
            let scale: f64 = d[..i].iter().map(|x| x.abs()).sum();
            let mut h = 0.0;
            if scale == 0.0 {
                e[i] = d[i - 1];
                for j in 0..i {
                    d[j] = v[j * n + i - 1];
                    v[j * n + i] = 0.0;
                    v[i * n + j] = 0.0;
                }
            } else {
                for dk in d[..i].iter_mut() {
                    *dk /= scale;
                    h += *dk * *dk;
                }
                let mut f = d[i - 1];
                let mut g = h.sqrt();
                if f > 0.0 {
                    g = -g;
                }
                e[i] = scale * g;
                h -= f * g;
                d[i - 1] = f - g;
                e[..i].iter_mut().for_each(|x| *x = 0.0);

                for j in 0..i {
                    f = d[j];
                    v[i * n + j] = f;
                    g = e[j] + v[j * n + j] * f;
                    for k in (j + 1)..i {
                        g += v[j * n + k] * d[k];
                        e[k] += v[j * n + k] * f;
                    }
                    e[j] = g;
                }
                f = 0.0;
                for j in 0..i {
                    e[j] /= h;
                    f += e[j] * d[j];
                }
                let hh = f / (h + h);
                for j in 0..i {
                    e[j] -= hh * d[j];
                }
                for j in 0..i {
                    f = d[j];
                    g = e[j];
                    for k in j..i {
                        v[j * n + k] -= f * e[k] + g * d[k];
                    }
                    d[j] = v[j * n + i - 1];
                    v[j * n + i] = 0.0;
                }
            }
            d[i] = h;
        }

        if accumulate {
            for i in 0..n - 1 {
                v[i * n + n - 1] = v[i * n + i];
                v[i * n + i] = 1.0;
                let h = d[i + 1];
                if h != 0.0 {
                    for k in 0..=i {
                        d[k] = v[(i + 1) * n + k] / h;
                    }
                    for j in 0..=i {
                        let mut g = 0.0;
                        for k in 0..=i {
                            g += v[(i + 1) * n + k] * v[j * n + k];
                        }
                        for k in 0..=i {
                            v[j * n + k] -= g * d[k];
                        }
                    }
                }
                for k in 0..=i {
                    v[(i + 1) * n + k] = 0.0;
                }
            }
            for j in 0..n {
                d[j] = v[j * n + n - 1];
                v[j * n + n - 1] = 0.0;
            }
            v[(n - 1) * n + n - 1] = 1.0;
        } else {
            // Diagonal of the tridiagonal form sits on the diagonal of the workspace.
            for (j, dj) in d.iter_mut().enumerate() {
                *dj = v[j * n + j];
            }
        }
        e[0] = 0.0;
        Self { n, d, e, v }
    }

    /// Diagonalizes the tridiagonal form. With `vectors`, `v` afterwards holds
    /// the eigenvectors as rows, in the same order as `d`.
    fn ql_implicit(&mut self, vectors: bool) -> Result<()> {
        let n = self.n;
        if n == 0 {
            return Ok(());
        }
        let (d, e, v) = (&mut self.d, &mut self.e, &mut self.v);
        for i in 1..n {
            e[i - 1] = e[i];
        }
        e[n - 1] = 0.0;

        let max_iter = 60 * n.max(1);
        let mut iterations = 0;
        let mut f = 0.0;
        let mut tst1 = 0.0_f64;
        let eps = f64::EPSILON;
        for l in 0..n {
            tst1 = tst1.max(d[l].abs() + e[l].abs());
            let mut m = l;
            while m < n - 1 {
                if e[m].abs() <= eps * tst1 {
                    break;
                }
                m += 1;
            }
            if m > l {
                loop {
                    iterations += 1;
                    if iterations > max_iter {
                        return Err(MeibError::NoConvergence(max_iter));
                    }
                    let mut g = d[l];
                    let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                    let mut r = p.hypot(1.0);
                    if p < 0.0 {
                        r = -r;
                    }
                    d[l] = e[l] / (p + r);
                    d[l + 1] = e[l] * (p + r);
                    let dl1 = d[l + 1];
                    let mut h = g - d[l];
                    for di in d.iter_mut().skip(l + 2) {
                        *di -= h;
                    }
                    f += h;

                    p = d[m];
                    let mut c = 1.0;
                    let mut c2 = c;
                    let mut c3 = c;
                    let el1 = e[l + 1];
                    let mut s = 0.0;
                    let mut s2 = 0.0;
                    for i in (l..m).rev() {
                        c3 = c2;
                        c2 = c;
                        s2 = s;
                        g = c * e[i];
                        h = c * p;
                        r = p.hypot(e[i]);
                        e[i + 1] = s * r;
                        s = e[i] / r;
                        c = p / r;
                        p = c * d[i] - s * g;
                        d[i + 1] = h + s * (c * g + s * d[i]);
                        if vectors {
                            let (lo, hi) = v.split_at_mut((i + 1) * n);
                            let vi = &mut lo[i * n..];
                            let vi1 = &mut hi[..n];
                            for (a, b) in vi.iter_mut().zip(vi1.iter_mut()) {
                                let t = *b;
                                *b = s * *a + c * t;
                                *a = c * *a - s * t;
                            }
                        }
                    }
                    p = -s * s2 * c3 * el1 * e[l] / dl1;
                    e[l] = s * p;
                    d[l] = c * p;
                    if e[l].abs() <= eps * tst1 {
                        break;
                    }
                }
            }
            d[l] += f;
            e[l] = 0.0;
        }
        if d.iter().any(|x| !x.is_finite()) {
            return Err(MeibError::NonFinite("eigenvalues".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_symmetric(n: usize, rng: &mut ChaCha8Rng) -> DenseMatrix {
        let m = DenseMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        m.symmetrized().unwrap()
    }

    fn random_psd(n: usize, rng: &mut ChaCha8Rng) -> DenseMatrix {
        // Spectrum floored at 0.01 so cubes stay well above the eigenvalue clamp.
        let b = DenseMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        b.matmul_t(&b)
            .unwrap()
            .scale(1.0 / n as f64)
            .add(&DenseMatrix::identity(n).scale(0.01))
            .unwrap()
    }

    fn assert_close(a: &DenseMatrix, b: &DenseMatrix, tol: f64) {
        assert_eq!(a.shape(), b.shape());
        for (x, y) in a.data().iter().zip(b.data()) {
            assert!((x - y).abs() <= tol, "{x} vs {y}");
        }
    }

    #[test]
    fn eig_of_diagonal() {
        let m = DenseMatrix::from_rows(&[[2.0, 0.0], [0.0, 3.0]]).unwrap();
        let eig = sym_eig(&m).unwrap();
        assert_eq!(eig.eigenvalues, vec![2.0, 3.0]);
        for (x, y) in eig.eigenvectors.data().iter().zip(DenseMatrix::identity(2).data()) {
            assert!((x.abs() - y).abs() < 1e-15);
        }
    }

    #[test]
    fn eig_of_two_by_two() {
        // Characteristic polynomial (0.5 - λ)² - 0.0625 = 0 → λ = 0.5 ± 0.25.
        let m = DenseMatrix::from_rows(&[[0.5, 0.25], [0.25, 0.5]]).unwrap();
        let eig = sym_eig(&m).unwrap();
        assert!((eig.eigenvalues[0] - 0.25).abs() < 1e-15);
        assert!((eig.eigenvalues[1] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn eig_of_rank_one_projector() {
        let m = DenseMatrix::filled(3, 3, 1.0 / 3.0);
        let vals = sym_eig(&m).unwrap().eigenvalues;
        assert!(vals[0].abs() < 1e-15 && vals[1].abs() < 1e-15);
        assert!((vals[2] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn eig_rejects_bad_input() {
        assert!(matches!(
            sym_eig(&DenseMatrix::zeros(2, 3)),
            Err(MeibError::Dimension(_))
        ));
        let mut m = DenseMatrix::identity(2);
        m.set(0, 1, f64::NAN);
        assert!(matches!(sym_eig(&m), Err(MeibError::NonFinite(_))));
    }

    #[test]
    fn eig_handles_trivial_sizes() {
        assert!(sym_eig(&DenseMatrix::zeros(0, 0)).unwrap().eigenvalues.is_empty());
        let eig = sym_eig(&DenseMatrix::from_rows(&[[4.0]]).unwrap()).unwrap();
        assert_eq!(eig.eigenvalues, vec![4.0]);
        assert_eq!(eig.eigenvectors.data(), &[1.0]);
    }

    #[test]
    fn asymmetric_input_is_averaged() {
        let m = DenseMatrix::from_rows(&[[1.0, 0.4], [0.0, 1.0]]).unwrap();
        let vals = sym_eigvals(&m).unwrap();
        assert!((vals[0] - 0.8).abs() < 1e-14 && (vals[1] - 1.2).abs() < 1e-14);
    }

    #[test]
    fn reconstruction_and_orthonormality() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in [2, 3, 5, 17, 64] {
            let m = random_symmetric(n, &mut rng);
            let eig = sym_eig(&m).unwrap();
            let err = eig.reconstruct().sub(&m).unwrap().frobenius_norm() / m.frobenius_norm();
            assert!(err < 1e-8, "n={n} reconstruction {err}");
            let utu = eig.eigenvectors.t_matmul(&eig.eigenvectors).unwrap();
            assert_close(&utu, &DenseMatrix::identity(n), 1e-8);
            assert!(eig.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn eigvals_only_matches_full() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in [1, 2, 4, 9, 40] {
            let m = random_symmetric(n, &mut rng);
            let full = sym_eig(&m).unwrap().eigenvalues;
            let only = sym_eigvals(&m).unwrap();
            for (a, b) in full.iter().zip(&only) {
                assert!((a - b).abs() < 1e-12, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn repeated_eigenvalues() {
        let m = DenseMatrix::identity(6).scale(0.5);
        let eig = sym_eig(&m).unwrap();
        assert!(eig.eigenvalues.iter().all(|l| (l - 0.5).abs() < 1e-15));
        assert_close(&eig.reconstruct(), &m, 1e-14);
    }

    #[test]
    fn spectral_power_examples() {
        let half = DenseMatrix::identity(3).scale(0.5);
        assert_close(&spectral_power(&half, 2.0).unwrap(), &DenseMatrix::identity(3).scale(0.25), 1e-15);

        let a = DenseMatrix::from_rows(&[[0.5, 0.25], [0.25, 0.5]]).unwrap();
        assert_close(&spectral_power(&a, 1.0).unwrap(), &a, 1e-10);
        // Direct product: [[0.25+0.0625, 0.125+0.125], ...]
        let direct = a.matmul(&a).unwrap();
        let expected = DenseMatrix::from_rows(&[[0.3125, 0.25], [0.25, 0.3125]]).unwrap();
        assert_close(&direct, &expected, 1e-15);
        assert_close(&spectral_power(&a, 2.0).unwrap(), &expected, 1e-14);
    }

    #[test]
    fn spectral_power_rejects_indefinite() {
        let m = DenseMatrix::from_rows(&[[1.0, 0.0], [0.0, -0.1]]).unwrap();
        assert!(matches!(spectral_power(&m, 2.0), Err(MeibError::NotPsd(_))));
        assert!(spectral_power(&DenseMatrix::identity(2), 0.0).is_err());
        // Slight negative rounding is tolerated.
        let m = DenseMatrix::from_rows(&[[1.0, 0.0], [0.0, -1e-11]]).unwrap();
        assert!(spectral_power(&m, 0.5).is_ok());
    }

    #[test]
    fn spectral_power_inverts() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for p in [2.0, 3.0] {
            for n in [3, 6, 10] {
                let a = random_psd(n, &mut rng);
                let back = spectral_power(&spectral_power(&a, p).unwrap(), 1.0 / p).unwrap();
                assert_close(&back, &a, 1e-6);
            }
        }
    }

    #[test]
    fn hadamard_examples() {
        let i = DenseMatrix::identity(3);
        assert_eq!(hadamard(&i, &i).unwrap(), i);

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = DenseMatrix::from_fn(3, 3, |_, _| rng.random_range(-2.0..2.0));
        let b = DenseMatrix::from_fn(3, 3, |_, _| rng.random_range(-2.0..2.0));
        let j = DenseMatrix::filled(3, 3, 1.0 / 3.0);
        assert_close(&hadamard(&j, &a).unwrap(), &a.scale(1.0 / 3.0), 1e-15);
        let h = hadamard(&a, &b).unwrap();
        for r in 0..3 {
            for c in 0..3 {
                assert_eq!(h.get(r, c), a.get(r, c) * b.get(r, c));
            }
        }
        assert!(hadamard(&a, &DenseMatrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn gemm_transposes() {
        let a = DenseMatrix::from_rows(&[[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]).unwrap();
        let b = DenseMatrix::from_rows(&[[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]).unwrap();
        let ab = a.matmul(&b).unwrap();
        assert_eq!(ab.data(), &[4.0, 5.0, 10.0, 11.0]);
        assert_eq!(a.matmul_t(&b.transpose()).unwrap(), ab);
        assert_eq!(a.transpose().t_matmul(&b).unwrap(), ab);
        assert!(a.matmul(&a).is_err());
    }

    #[test]
    fn concat_and_split() {
        let a = DenseMatrix::from_rows(&[[1.0], [2.0]]).unwrap();
        let b = DenseMatrix::from_rows(&[[3.0, 4.0], [5.0, 6.0]]).unwrap();
        let c = DenseMatrix::hconcat(&[&a, &b]).unwrap();
        assert_eq!(c.data(), &[1.0, 3.0, 4.0, 2.0, 5.0, 6.0]);
        let parts = c.hsplit(&[1, 2]).unwrap();
        assert_eq!(parts[0], a);
        assert_eq!(parts[1], b);
        assert!(c.hsplit(&[1, 1]).is_err());
    }
}
