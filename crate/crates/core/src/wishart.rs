//! Quantum Wishart states: sampling, the exact density, and qubit analytics.
//!
//! A state is drawn as `ρ = AΨΨ†A† / tr(AΨΨ†A†)` where `Ψ` is an `m×n`
//! standard complex gaussian matrix and `A = Σ^½`. The induced density on the
//! state space, with respect to the Hilbert–Schmidt volume element, is
//!
//! ```text
//! g(ρ) = Γ(mn)/Γ_m(n) · (det ρ)^(n−m) / [(det Σ)^n tr(Σ⁻¹ρ)^(mn)] / √(2^{m(m−1)} m)
//! ```
//!
//! All arithmetic is done with logarithms.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::hermitian::{HermitianMatrix, QuantumState};
use crate::quad;

/// `log Γ_m(n) = m(m−1)/2 · log π + Σ_{j=1..m} log Γ(n−j+1)`.
pub fn log_multivariate_gamma(m: usize, n: usize) -> f64 {
    let mf = m as f64;
    let mut acc = 0.5 * mf * (mf - 1.0) * std::f64::consts::PI.ln();
    for j in 1..=m {
        acc += ln_gamma((n + 1 - j) as f64);
    }
    acc
}

/// An `m×n` matrix of independent standard complex gaussian entries.
#[derive(Clone, Debug)]
pub struct GaussianMatrix {
    entries: DMatrix<Complex64>,
}

impl GaussianMatrix {
    /// Draws the entries column by column, real part before imaginary part.
    pub fn sample<R: Rng + ?Sized>(m: usize, n: usize, rng: &mut R) -> Result<Self> {
        if n < m {
            return Err(Error::InvalidParameter(format!("need n ≥ m, got m = {m}, n = {n}")));
        }
        let entries = DMatrix::from_fn(m, n, |_, _| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            Complex64::new(re, im)
        });
        Ok(GaussianMatrix { entries })
    }

    pub fn rows(&self) -> usize {
        self.entries.nrows()
    }

    pub fn cols(&self) -> usize {
        self.entries.ncols()
    }

    pub fn entries(&self) -> &DMatrix<Complex64> {
        &self.entries
    }

    /// `ΨΨ†`.
    pub fn gram(&self) -> HermitianMatrix {
        gram(&self.entries)
    }
}

fn gram(y: &DMatrix<Complex64>) -> HermitianMatrix {
    let m = y.nrows();
    let mut w = HermitianMatrix::zeros(m);
    for j in 0..m {
        for k in j..m {
            let mut acc = Complex64::new(0.0, 0.0);
            for c in 0..y.ncols() {
                acc += y[(j, c)] * y[(k, c)].conj();
            }
            w.set(j, k, acc);
        }
    }
    w
}

/// Parameters `(n, Σ)` of a quantum Wishart law, with cached derived values.
#[derive(Clone, Debug)]
pub struct WishartParams {
    m: usize,
    n: usize,
    sigma: HermitianMatrix,
    sigma_sqrt: DMatrix<Complex64>,
    sigma_inv: HermitianMatrix,
    log_det_sigma: f64,
    log_norm: f64,
    scalar_sigma: bool,
}

impl WishartParams {
    pub fn new(n: usize, sigma: HermitianMatrix) -> Result<Self> {
        let m = sigma.dim();
        if m < 2 {
            return Err(Error::InvalidDimension { dim: m, reason: "Wishart states need m ≥ 2" });
        }
        if n < m {
            return Err(Error::InvalidParameter(format!("need n ≥ m, got m = {m}, n = {n}")));
        }
        let min_ev = sigma.min_eigenvalue();
        if !(min_ev > 0.0) {
            return Err(Error::NotPsd { min_eigenvalue: min_ev });
        }
        let log_det_sigma = sigma.log_det();
        let scalar_sigma = sigma.upper().iter().all(|z| *z == Complex64::new(0.0, 0.0))
            && sigma.diag().iter().all(|d| *d == sigma.diag()[0]);
        let sigma_sqrt = sigma.psd_sqrt()?.to_dense();
        let sigma_inv = sigma.inverse()?;
        let (mf, nf) = (m as f64, n as f64);
        let log_norm = ln_gamma(mf * nf)
            - log_multivariate_gamma(m, n)
            - 0.5 * (mf * (mf - 1.0) * std::f64::consts::LN_2 + mf.ln());
        Ok(WishartParams { m, n, sigma, sigma_sqrt, sigma_inv, log_det_sigma, log_norm, scalar_sigma })
    }

    /// `Σ = 1`, `n = m`: the Hilbert–Schmidt uniform law.
    pub fn uniform(m: usize) -> Result<Self> {
        Self::new(m, HermitianMatrix::identity(m))
    }

    pub fn dim(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn sigma(&self) -> &HermitianMatrix {
        &self.sigma
    }

    pub fn sigma_inv(&self) -> &HermitianMatrix {
        &self.sigma_inv
    }

    pub fn log_det_sigma(&self) -> f64 {
        self.log_det_sigma
    }

    /// `log Γ(mn) − log Γ_m(n) − ½ log(2^{m(m−1)} m)`.
    pub fn log_normalization(&self) -> f64 {
        self.log_norm
    }

    /// Log-density of a unit-trace matrix whose log-determinant is known.
    pub(crate) fn log_density_from_log_det(&self, rho: &HermitianMatrix, log_det: f64) -> f64 {
        let (mf, nf) = (self.m as f64, self.n as f64);
        let det_term = if self.n > self.m {
            if log_det == f64::NEG_INFINITY {
                return f64::NEG_INFINITY;
            }
            (nf - mf) * log_det
        } else {
            0.0
        };
        let tr = self.sigma_inv.trace_product(rho);
        if !(tr > 0.0) {
            return f64::NEG_INFINITY;
        }
        self.log_norm + det_term - nf * self.log_det_sigma - mf * nf * tr.ln()
    }
}

/// Draws one state from the quantum Wishart law with parameters `p`.
///
/// Draws whose trace falls below `1e-300` are discarded and redrawn.
pub fn sample_wishart_state<R: Rng + ?Sized>(p: &WishartParams, rng: &mut R) -> QuantumState {
    loop {
        let psi = GaussianMatrix::sample(p.m, p.n, rng).expect("n ≥ m checked by params");
        let w = if p.scalar_sigma {
            psi.gram()
        } else {
            gram(&(&p.sigma_sqrt * psi.entries()))
        };
        let tr = w.trace();
        if tr > 1e-300 && tr.is_finite() {
            return QuantumState::new_unchecked(w.scaled(1.0 / tr));
        }
    }
}

/// Draws one state uniformly with respect to the Hilbert–Schmidt measure.
pub fn sample_uniform_state<R: Rng + ?Sized>(m: usize, rng: &mut R) -> Result<QuantumState> {
    let p = WishartParams::uniform(m)?;
    Ok(sample_wishart_state(&p, rng))
}

/// `log g(ρ)` for a unit-trace hermitian `ρ`; `−∞` outside the state space
/// and, for `n > m`, on its boundary.
pub fn log_wishart_density(rho: &HermitianMatrix, p: &WishartParams) -> f64 {
    if rho.dim() != p.m {
        return f64::NEG_INFINITY;
    }
    let log_det = rho.log_det();
    if p.n == p.m && log_det == f64::NEG_INFINITY && !rho.is_psd(crate::hermitian::DEFAULT_PSD_TOL) {
        return f64::NEG_INFINITY;
    }
    p.log_density_from_log_det(rho, log_det)
}

/// `Σ ≐ cosh θ·1 + sinh θ·σ_z^{⊗k}` for `m = 2^k`; for a qubit this is
/// `diag(e^θ, e^{−θ})`.
pub fn sigma_z_family(m: usize, theta: f64) -> Result<HermitianMatrix> {
    let diag = sigma_z_tensor_diag(m)?;
    Ok(HermitianMatrix::from_diagonal(
        &diag.iter().map(|s| theta.cosh() + theta.sinh() * s).collect::<Vec<_>>(),
    ))
}

/// Diagonal of `σ_z^{⊗k}`, entries `±1`.
pub fn sigma_z_tensor_diag(m: usize) -> Result<Vec<f64>> {
    if m < 2 || !m.is_power_of_two() {
        return Err(Error::InvalidDimension { dim: m, reason: "need m = 2^k with k ≥ 1" });
    }
    Ok((0..m).map(|i| if i.count_ones() % 2 == 0 { 1.0 } else { -1.0 }).collect())
}

/// `θ` putting the peak of the `σ_z`-family density at `z_peak`:
/// `tanh θ = (n−m) z / (n − m z²)`.
pub fn theta_for_peak(m: usize, n: usize, z_peak: f64) -> Result<f64> {
    if n <= m {
        return Err(Error::InvalidParameter(format!("need n > m, got m = {m}, n = {n}")));
    }
    if !(z_peak.abs() < 1.0) {
        return Err(Error::InvalidParameter(format!("need |z_peak| < 1, got {z_peak}")));
    }
    let (mf, nf) = (m as f64, n as f64);
    Ok(((nf - mf) * z_peak / (nf - mf * z_peak * z_peak)).atanh())
}

/// Closed-form marginals of the qubit Wishart law with `Σ ≐ diag(e^θ, e^{−θ})`.
///
/// With `(x, y) = √(1−z²)(s cos φ, s sin φ)` the variables `s`, `φ`, `z` are
/// independent.
#[derive(Clone, Copy, Debug)]
pub struct QubitMarginals {
    pub n: usize,
    pub theta: f64,
    log_z_norm: f64,
    log_x_norm: f64,
}

impl QubitMarginals {
    pub fn new(n: usize, theta: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidParameter(format!("need n ≥ 2, got {n}")));
        }
        let nf = n as f64;
        let log_z_norm = ln_gamma(2.0 * nf) - 2.0 * ln_gamma(nf) - (2.0 * nf - 1.0) * std::f64::consts::LN_2;
        let log_x_norm = ln_gamma(nf + 0.5) - ln_gamma(nf) - 0.5 * std::f64::consts::PI.ln();
        Ok(QubitMarginals { n, theta, log_z_norm, log_x_norm })
    }

    /// Marginals for the law whose density peaks at `z_peak`.
    pub fn for_peak(n: usize, z_peak: f64) -> Result<Self> {
        Self::new(n, theta_for_peak(2, n, z_peak)?)
    }

    pub fn density_s(&self, s: f64) -> f64 {
        if !(0.0..=1.0).contains(&s) {
            return 0.0;
        }
        let nf = self.n as f64;
        2.0 * (nf - 1.0) * s * (1.0 - s * s).powi(self.n as i32 - 2)
    }

    pub fn density_phi(&self, phi: f64) -> f64 {
        if (0.0..2.0 * std::f64::consts::PI).contains(&phi) {
            0.5 / std::f64::consts::PI
        } else {
            0.0
        }
    }

    pub fn density_z(&self, z: f64) -> f64 {
        if !(-1.0..=1.0).contains(&z) {
            return 0.0;
        }
        let nf = self.n as f64;
        let denom = self.theta.cosh() - z * self.theta.sinh();
        (self.log_z_norm + (nf - 1.0) * (1.0 - z * z).ln() - 2.0 * nf * denom.ln()).exp()
    }

    /// `x`-marginal (equally the `y`-marginal).
    pub fn density_x(&self, x: f64) -> f64 {
        if !(-1.0..=1.0).contains(&x) {
            return 0.0;
        }
        let (c, s) = (self.theta.cosh(), self.theta.sinh());
        let q = 1.0 + x * x * s * s;
        let xp = x * c / q.sqrt();
        let jac = c / q.powf(1.5);
        let nf = self.n as f64;
        (self.log_x_norm + (nf - 1.0) * (1.0 - xp * xp).ln()).exp() * jac
    }

    /// Mode of the `z`-marginal: `tanh θ = (n−1) z / (n − z²)`.
    pub fn mode_z(&self) -> f64 {
        let t = self.theta.tanh();
        if t == 0.0 {
            return 0.0;
        }
        let nf = self.n as f64;
        // t z² + (n−1) z − n t = 0, root inside (−1, 1)
        let b = nf - 1.0;
        let disc = (b * b + 4.0 * nf * t * t).sqrt();
        2.0 * nf * t / (b + disc)
    }

    /// Probability that `z` falls in `[a, b]`.
    pub fn prob_z(&self, a: f64, b: f64) -> Result<f64> {
        quad::integrate(|z| self.density_z(z), a.max(-1.0), b.min(1.0), 1e-14, 1e-11)
    }

    /// Probability that `x` falls in `[a, b]`.
    pub fn prob_x(&self, a: f64, b: f64) -> Result<f64> {
        quad::integrate(|x| self.density_x(x), a.max(-1.0), b.min(1.0), 1e-14, 1e-11)
    }
}
