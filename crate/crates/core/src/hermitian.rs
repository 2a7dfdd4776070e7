//! Hermitian matrices, quantum states, and the traceless coordinate basis.
//!
//! A [`HermitianMatrix`] stores only the real diagonal and the row-major upper
//! triangle, so every value of the type is exactly hermitian. This packed form
//! is also the on-disk layout used by the sample files (see [`crate::chunk`]).
//!
//! Unit-trace matrices live in an `(m²−1)`-dimensional euclidean space whose
//! metric is the Hilbert–Schmidt inner product `tr(AB)`. [`TracelessBasis`]
//! supplies an orthonormal basis for that space, and all densities in this
//! crate are taken with respect to the volume element of the resulting
//! coordinates.

use std::fmt;
use std::ops::{Add, Mul, Sub};

use nalgebra::DMatrix;
use num_complex::Complex64;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::wishart::log_multivariate_gamma;

/// Relative PSD slack used throughout unless a caller overrides it.
pub const DEFAULT_PSD_TOL: f64 = 1e-12;

/// Allowed deviation of the trace of a [`QuantumState`] from one.
pub const TRACE_TOL: f64 = 1e-12;

/// Index of element `(j, k)`, `j < k`, in the row-major upper triangle.
#[inline]
pub(crate) fn upper_index(dim: usize, j: usize, k: usize) -> usize {
    debug_assert!(j < k && k < dim);
    j * dim - j * (j + 1) / 2 + (k - j - 1)
}

/// A dense hermitian `m×m` matrix in packed form.
#[derive(Clone, PartialEq)]
pub struct HermitianMatrix {
    dim: usize,
    diag: Vec<f64>,
    upper: Vec<Complex64>,
}

impl fmt::Debug for HermitianMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "HermitianMatrix({}x{})", self.dim, self.dim)?;
        for j in 0..self.dim {
            let row: Vec<String> = (0..self.dim)
                .map(|k| {
                    let z = self.get(j, k);
                    format!("{:+.6}{:+.6}i", z.re, z.im)
                })
                .collect();
            writeln!(f, "  [{}]", row.join(", "))?;
        }
        Ok(())
    }
}

impl HermitianMatrix {
    pub fn zeros(dim: usize) -> Self {
        HermitianMatrix {
            dim,
            diag: vec![0.0; dim],
            upper: vec![Complex64::new(0.0, 0.0); dim * dim.saturating_sub(1) / 2],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut h = Self::zeros(dim);
        h.diag.iter_mut().for_each(|d| *d = 1.0);
        h
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let mut h = Self::zeros(diag.len());
        h.diag.copy_from_slice(diag);
        h
    }

    /// Builds a matrix from its packed parts. `upper` holds the `m(m−1)/2`
    /// elements above the diagonal in row-major order.
    pub fn from_parts(dim: usize, diag: Vec<f64>, upper: Vec<Complex64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidDimension { dim, reason: "dimension must be at least 1" });
        }
        if diag.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, found: diag.len() });
        }
        let n_up = dim * (dim - 1) / 2;
        if upper.len() != n_up {
            return Err(Error::DimensionMismatch { expected: n_up, found: upper.len() });
        }
        Ok(HermitianMatrix { dim, diag, upper })
    }

    /// Hermitian part `(A + A†)/2` of a square dense matrix.
    pub fn from_dense(a: &DMatrix<Complex64>) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::DimensionMismatch { expected: a.nrows(), found: a.ncols() });
        }
        let dim = a.nrows();
        let mut h = Self::zeros(dim);
        for j in 0..dim {
            h.diag[j] = a[(j, j)].re;
            for k in j + 1..dim {
                h.upper[upper_index(dim, j, k)] = (a[(j, k)] + a[(k, j)].conj()) * 0.5;
            }
        }
        Ok(h)
    }

    pub fn to_dense(&self) -> DMatrix<Complex64> {
        DMatrix::from_fn(self.dim, self.dim, |j, k| self.get(j, k))
    }

    /// Row-major dense copy, used by the small-matrix kernels.
    pub(crate) fn to_row_major(&self) -> Vec<Complex64> {
        let m = self.dim;
        let mut out = vec![Complex64::new(0.0, 0.0); m * m];
        for j in 0..m {
            out[j * m + j] = Complex64::new(self.diag[j], 0.0);
            for k in j + 1..m {
                let z = self.upper[upper_index(m, j, k)];
                out[j * m + k] = z;
                out[k * m + j] = z.conj();
            }
        }
        out
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    #[inline]
    pub fn upper(&self) -> &[Complex64] {
        &self.upper
    }

    pub fn get(&self, j: usize, k: usize) -> Complex64 {
        use std::cmp::Ordering::*;
        match j.cmp(&k) {
            Equal => Complex64::new(self.diag[j], 0.0),
            Less => self.upper[upper_index(self.dim, j, k)],
            Greater => self.upper[upper_index(self.dim, k, j)].conj(),
        }
    }

    /// Sets element `(j, k)` and its mirror `(k, j)`. On the diagonal only the
    /// real part is kept.
    pub fn set(&mut self, j: usize, k: usize, value: Complex64) {
        use std::cmp::Ordering::*;
        match j.cmp(&k) {
            Equal => self.diag[j] = value.re,
            Less => self.upper[upper_index(self.dim, j, k)] = value,
            Greater => self.upper[upper_index(self.dim, k, j)] = value.conj(),
        }
    }

    pub fn trace(&self) -> f64 {
        self.diag.iter().sum()
    }

    /// `tr(AB)`, the Hilbert–Schmidt inner product. Always real for two
    /// hermitian matrices.
    #[inline]
    pub fn trace_product(&self, other: &HermitianMatrix) -> f64 {
        debug_assert_eq!(self.dim, other.dim);
        let d: f64 = self.diag.iter().zip(&other.diag).map(|(a, b)| a * b).sum();
        let u: f64 = self
            .upper
            .iter()
            .zip(&other.upper)
            .map(|(a, b)| a.re * b.re + a.im * b.im)
            .sum();
        d + 2.0 * u
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.trace_product(self).sqrt()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        HermitianMatrix {
            dim: self.dim,
            diag: self.diag.iter().map(|d| d * factor).collect(),
            upper: self.upper.iter().map(|z| z * factor).collect(),
        }
    }

    /// Kronecker product `self ⊗ other`.
    pub fn kron(&self, other: &HermitianMatrix) -> HermitianMatrix {
        let (ma, mb) = (self.dim, other.dim);
        let m = ma * mb;
        let mut out = Self::zeros(m);
        for ja in 0..ma {
            for jb in 0..mb {
                let j = ja * mb + jb;
                for ka in ja..ma {
                    for kb in 0..mb {
                        let k = ka * mb + kb;
                        if k < j {
                            continue;
                        }
                        out.set(j, k, self.get(ja, ka) * other.get(jb, kb));
                    }
                }
            }
        }
        out
    }

    /// `A X A†` for a dense (not necessarily hermitian) `A`.
    pub fn congruence(&self, a: &DMatrix<Complex64>) -> HermitianMatrix {
        let dense = a * self.to_dense() * a.adjoint();
        HermitianMatrix::from_dense(&dense).expect("square by construction")
    }

    /// Eigenvalues in ascending order together with the eigenvectors as
    /// columns of a unitary matrix.
    pub fn eigen(&self) -> (Vec<f64>, DMatrix<Complex64>) {
        let eig = self.to_dense().symmetric_eigen();
        let mut order: Vec<usize> = (0..self.dim).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let vectors = DMatrix::from_fn(self.dim, self.dim, |r, c| eig.eigenvectors[(r, order[c])]);
        (values, vectors)
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.to_dense().symmetric_eigenvalues().iter().copied().collect();
        v.sort_by(f64::total_cmp);
        v
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues()[0]
    }

    /// `log det`, or `−∞` as soon as any eigenvalue is `≤ 0`.
    pub fn log_det(&self) -> f64 {
        if let Some(ld) = self.cholesky_log_det() {
            return ld;
        }
        let ev = self.eigenvalues();
        if ev[0] <= 0.0 {
            return f64::NEG_INFINITY;
        }
        ev.iter().map(|x| x.ln()).sum()
    }

    /// PSD test: minimum eigenvalue `≥ −rel_tol·max|λ|`.
    pub fn is_psd(&self, rel_tol: f64) -> bool {
        if self.cholesky_log_det().is_some() {
            return true;
        }
        let ev = self.eigenvalues();
        let scale = ev[0].abs().max(ev[ev.len() - 1].abs());
        ev[0] >= -rel_tol * scale
    }

    /// Log-determinant from a Cholesky factorization; `None` unless every
    /// pivot is strictly positive. This is the fast path for the common
    /// positive-definite case; callers fall back to the spectrum otherwise.
    pub(crate) fn cholesky_log_det(&self) -> Option<f64> {
        let m = self.dim;
        if m <= 4 {
            let mut buf = [Complex64::new(0.0, 0.0); 16];
            self.fill_row_major(&mut buf[..m * m]);
            cholesky_in_place(&mut buf[..m * m], m)
        } else {
            let mut a = self.to_row_major();
            cholesky_in_place(&mut a, m)
        }
    }

    fn fill_row_major(&self, out: &mut [Complex64]) {
        let m = self.dim;
        for j in 0..m {
            out[j * m + j] = Complex64::new(self.diag[j], 0.0);
            for k in j + 1..m {
                let z = self.upper[upper_index(m, j, k)];
                out[j * m + k] = z;
                out[k * m + j] = z.conj();
            }
        }
    }

    /// Applies a real function to the spectrum: `U f(Λ) U†`.
    pub fn map_spectrum(&self, f: impl Fn(f64) -> f64) -> HermitianMatrix {
        let (values, vectors) = self.eigen();
        let m = self.dim;
        let mut out = Self::zeros(m);
        for j in 0..m {
            for k in j..m {
                let mut acc = Complex64::new(0.0, 0.0);
                for (c, &lam) in values.iter().enumerate() {
                    acc += vectors[(j, c)] * vectors[(k, c)].conj() * f(lam);
                }
                out.set(j, k, acc);
            }
        }
        out
    }

    /// Positive square root of a PSD matrix. Eigenvalues within the default
    /// relative tolerance below zero are clamped to zero.
    pub fn psd_sqrt(&self) -> Result<HermitianMatrix> {
        let ev = self.eigenvalues();
        let scale = ev[0].abs().max(ev[ev.len() - 1].abs());
        if ev[0] < -DEFAULT_PSD_TOL * scale {
            return Err(Error::NotPsd { min_eigenvalue: ev[0] });
        }
        Ok(self.map_spectrum(|x| x.max(0.0).sqrt()))
    }

    pub fn inverse(&self) -> Result<HermitianMatrix> {
        let ev = self.eigenvalues();
        let scale = ev[0].abs().max(ev[ev.len() - 1].abs());
        if ev.iter().any(|x| x.abs() <= 1e-14 * scale) || scale == 0.0 {
            return Err(Error::Singular(format!("eigenvalues {ev:?}")));
        }
        Ok(self.map_spectrum(|x| 1.0 / x))
    }

    /// Product `AB` as a dense matrix (not hermitian in general).
    pub fn matmul(&self, other: &HermitianMatrix) -> DMatrix<Complex64> {
        self.to_dense() * other.to_dense()
    }
}

/// In-place Cholesky on a row-major hermitian matrix, returning `log det`.
fn cholesky_in_place(a: &mut [Complex64], m: usize) -> Option<f64> {
    let mut log_det = 0.0;
    for j in 0..m {
        let mut d = a[j * m + j].re;
        for k in 0..j {
            d -= a[j * m + k].norm_sqr();
        }
        if !(d > 0.0) {
            return None;
        }
        let l = d.sqrt();
        log_det += 2.0 * l.ln();
        a[j * m + j] = Complex64::new(l, 0.0);
        for i in j + 1..m {
            let mut s = a[i * m + j];
            for k in 0..j {
                s -= a[i * m + k] * a[j * m + k].conj();
            }
            a[i * m + j] = s / l;
        }
    }
    Some(log_det)
}

impl Add for &HermitianMatrix {
    type Output = HermitianMatrix;
    fn add(self, rhs: &HermitianMatrix) -> HermitianMatrix {
        assert_eq!(self.dim, rhs.dim, "dimension mismatch in addition");
        HermitianMatrix {
            dim: self.dim,
            diag: self.diag.iter().zip(&rhs.diag).map(|(a, b)| a + b).collect(),
            upper: self.upper.iter().zip(&rhs.upper).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Sub for &HermitianMatrix {
    type Output = HermitianMatrix;
    fn sub(self, rhs: &HermitianMatrix) -> HermitianMatrix {
        assert_eq!(self.dim, rhs.dim, "dimension mismatch in subtraction");
        HermitianMatrix {
            dim: self.dim,
            diag: self.diag.iter().zip(&rhs.diag).map(|(a, b)| a - b).collect(),
            upper: self.upper.iter().zip(&rhs.upper).map(|(a, b)| a - b).collect(),
        }
    }
}

impl Mul<f64> for &HermitianMatrix {
    type Output = HermitianMatrix;
    fn mul(self, rhs: f64) -> HermitianMatrix {
        self.scaled(rhs)
    }
}

/// A density matrix: hermitian, unit trace, PSD within a relative slack.
#[derive(Clone, Debug, PartialEq)]
pub struct QuantumState {
    mat: HermitianMatrix,
    tol: f64,
}

impl QuantumState {
    pub fn new(mat: HermitianMatrix) -> Result<Self> {
        Self::with_tolerance(mat, DEFAULT_PSD_TOL)
    }

    pub fn with_tolerance(mat: HermitianMatrix, tol: f64) -> Result<Self> {
        if !(tol >= 0.0) {
            return Err(Error::InvalidParameter(format!("PSD tolerance {tol} must be nonnegative")));
        }
        let trace = mat.trace();
        if (trace - 1.0).abs() > TRACE_TOL {
            return Err(Error::NotUnitTrace { trace });
        }
        if !mat.is_psd(tol) {
            return Err(Error::NotPsd { min_eigenvalue: mat.min_eigenvalue() });
        }
        Ok(QuantumState { mat, tol })
    }

    /// Wraps a matrix the caller has already normalized and checked.
    pub(crate) fn new_unchecked(mat: HermitianMatrix) -> Self {
        QuantumState { mat, tol: DEFAULT_PSD_TOL }
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        QuantumState::new_unchecked(HermitianMatrix::identity(dim).scaled(1.0 / dim as f64))
    }

    pub fn tolerance(&self) -> f64 {
        self.tol
    }

    pub fn matrix(&self) -> &HermitianMatrix {
        &self.mat
    }

    pub fn into_matrix(self) -> HermitianMatrix {
        self.mat
    }
}

impl std::ops::Deref for QuantumState {
    type Target = HermitianMatrix;
    fn deref(&self) -> &HermitianMatrix {
        &self.mat
    }
}

/// Coordinates `ϱ_l = tr(ρ B_l)` of a unit-trace matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct StateCoordinates(pub Vec<f64>);

impl StateCoordinates {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
    pub fn len(&self) -> usize {
        self.0.len()
    }
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Orthonormal basis of the traceless hermitian `m×m` matrices.
///
/// Elements are generalized Gell-Mann matrices with unit Hilbert–Schmidt
/// norm, ordered as: symmetric off-diagonal pairs, antisymmetric
/// off-diagonal pairs (both row-major over `j < k`), then the `m−1`
/// diagonal ones. For `m = 2` this gives `σx/√2, σy/√2, σz/√2`.
#[derive(Clone, Debug)]
pub struct TracelessBasis {
    dim: usize,
    elements: Vec<HermitianMatrix>,
}

impl TracelessBasis {
    pub fn generalized_pauli(dim: usize) -> Result<Self> {
        if dim < 2 {
            return Err(Error::InvalidDimension { dim, reason: "basis needs m ≥ 2" });
        }
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let mut elements = Vec::with_capacity(dim * dim - 1);
        for j in 0..dim {
            for k in j + 1..dim {
                let mut b = HermitianMatrix::zeros(dim);
                b.set(j, k, Complex64::new(s, 0.0));
                elements.push(b);
            }
        }
        for j in 0..dim {
            for k in j + 1..dim {
                let mut b = HermitianMatrix::zeros(dim);
                b.set(j, k, Complex64::new(0.0, -s));
                elements.push(b);
            }
        }
        for l in 1..dim {
            let norm = 1.0 / ((l * (l + 1)) as f64).sqrt();
            let mut diag = vec![0.0; dim];
            diag[..l].iter_mut().for_each(|d| *d = norm);
            diag[l] = -(l as f64) * norm;
            elements.push(HermitianMatrix::from_diagonal(&diag));
        }
        Ok(TracelessBasis { dim, elements })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn elements(&self) -> &[HermitianMatrix] {
        &self.elements
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn to_coordinates(&self, rho: &HermitianMatrix) -> Result<StateCoordinates> {
        if rho.dim() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: rho.dim() });
        }
        Ok(StateCoordinates(self.elements.iter().map(|b| b.trace_product(rho)).collect()))
    }

    /// `Σ_l c_l B_l`, a traceless matrix.
    pub fn combine(&self, coords: &[f64]) -> Result<HermitianMatrix> {
        if coords.len() != self.elements.len() {
            return Err(Error::DimensionMismatch { expected: self.elements.len(), found: coords.len() });
        }
        let mut out = HermitianMatrix::zeros(self.dim);
        for (b, &c) in self.elements.iter().zip(coords) {
            if c == 0.0 {
                continue;
            }
            out.diag.iter_mut().zip(&b.diag).for_each(|(o, x)| *o += c * x);
            out.upper.iter_mut().zip(&b.upper).for_each(|(o, x)| *o += x * c);
        }
        Ok(out)
    }

    /// `1/m + Σ_l ϱ_l B_l`.
    pub fn from_coordinates(&self, coords: &StateCoordinates) -> Result<HermitianMatrix> {
        let mut out = self.combine(coords.as_slice())?;
        let c = 1.0 / self.dim as f64;
        out.diag.iter_mut().for_each(|d| *d += c);
        Ok(out)
    }
}

/// Cartesian Bloch-ball coordinates of a qubit state.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlochVector {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl BlochVector {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        BlochVector { x, y, z }
    }

    /// `x = tr(ρσx)`, `y = tr(ρσy)`, `z = tr(ρσz)`.
    pub fn from_matrix(rho: &HermitianMatrix) -> Result<Self> {
        if rho.dim() != 2 {
            return Err(Error::InvalidDimension { dim: rho.dim(), reason: "Bloch vectors need m = 2" });
        }
        let off = rho.upper()[0];
        Ok(BlochVector { x: 2.0 * off.re, y: -2.0 * off.im, z: rho.diag()[0] - rho.diag()[1] })
    }

    /// `½(1 + xσx + yσy + zσz)`.
    pub fn to_matrix(&self) -> HermitianMatrix {
        HermitianMatrix::from_parts(
            2,
            vec![0.5 * (1.0 + self.z), 0.5 * (1.0 - self.z)],
            vec![Complex64::new(0.5 * self.x, -0.5 * self.y)],
        )
        .expect("valid qubit layout")
    }

    pub fn norm(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn is_physical(&self) -> bool {
        self.x * self.x + self.y * self.y + self.z * self.z <= 1.0
    }
}

/// Natural log of the Hilbert–Schmidt volume of the `m`-dimensional state space.
pub fn log_hs_volume(dim: usize) -> f64 {
    let m = dim as f64;
    0.5 * (m * (m - 1.0) * std::f64::consts::LN_2 + m.ln()) + log_multivariate_gamma(dim, dim)
        - ln_gamma(m * m)
}

/// Hilbert–Schmidt volume of the state space, `(2^{m(m−1)} m)^{1/2} Γ_m(m)/Γ(m²)`.
///
/// Fails with [`Error::Underflow`] once the value leaves double range; use
/// [`log_hs_volume`] there.
pub fn hs_volume(dim: usize) -> Result<f64> {
    if dim < 2 {
        return Err(Error::InvalidDimension { dim, reason: "state space needs m ≥ 2" });
    }
    let lv = log_hs_volume(dim);
    let v = lv.exp();
    if v == 0.0 || !v.is_finite() || v < f64::MIN_POSITIVE {
        return Err(Error::Underflow(format!("log volume {lv} for m = {dim}")));
    }
    Ok(v)
}
