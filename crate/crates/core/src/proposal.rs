//! Proposal distributions: a peak-matched Wishart law, linearly shifted and
//! mixed with the uniform law.
//!
//! The mixture density is `g(ρ) = (1−κ)·g_W(ρ−Δρ) + κ/V`, where `g_W` is the
//! Wishart density (zero when `ρ−Δρ` is not a state), `V` is the state-space
//! volume, and the uniform term is present only for physical `ρ`. Each term is
//! a normalized density on its own support.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hermitian::{log_hs_volume, HermitianMatrix, QuantumState, TracelessBasis, DEFAULT_PSD_TOL};
use crate::quad;
use crate::rng::RngStream;
use crate::wishart::{log_wishart_density, sample_wishart_state, sigma_z_family, sigma_z_tensor_diag, theta_for_peak, WishartParams};

/// Smallest eigenvalue accepted for a peak state.
pub const PEAK_MIN_EIGENVALUE: f64 = 1e-9;

/// Covariance whose Wishart density peaks at `rho_peak`:
/// `Σ = (ρ⁻¹ + m²/(n−m))⁻¹` for `n > m`, and `Σ = 1` for `n = m`.
///
/// ```
/// use wishart_states::{BlochVector, proposal::covariance_for_peak};
/// let peak = BlochVector::new(0.0, 0.0, 0.8).to_matrix();
/// let sigma = covariance_for_peak(&peak, 5).unwrap();
/// assert!((sigma.diag()[0] - 0.9 / 2.2).abs() < 1e-12);
/// ```
pub fn covariance_for_peak(rho_peak: &HermitianMatrix, n: usize) -> Result<HermitianMatrix> {
    let m = rho_peak.dim();
    if n < m {
        return Err(Error::InvalidParameter(format!("need n ≥ m, got m = {m}, n = {n}")));
    }
    if n == m {
        return Ok(HermitianMatrix::identity(m));
    }
    let min_ev = rho_peak.min_eigenvalue();
    if !(min_ev > PEAK_MIN_EIGENVALUE) {
        return Err(Error::RankDeficientPeak { min_eigenvalue: min_ev });
    }
    let c = (m * m) as f64 / (n - m) as f64;
    Ok(rho_peak.map_spectrum(|x| x / (1.0 + c * x)))
}

/// A real symmetric matrix on the traceless coordinates, the negative
/// Hessian of a log-density at its peak.
#[derive(Clone, Debug, PartialEq)]
pub struct ShapeMatrix {
    entries: DMatrix<f64>,
}

impl ShapeMatrix {
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        if entries.nrows() != entries.ncols() {
            return Err(Error::DimensionMismatch { expected: entries.nrows(), found: entries.ncols() });
        }
        Ok(ShapeMatrix { entries })
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn max_asymmetry(&self) -> f64 {
        (&self.entries - self.entries.transpose()).abs().max()
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.entries.clone().symmetric_eigenvalues().iter().copied().collect();
        v.sort_by(f64::total_cmp);
        v
    }

    /// `εᵀ M ε`.
    pub fn quadratic_form(&self, eps: &[f64]) -> f64 {
        let v = nalgebra::DVector::from_column_slice(eps);
        (v.transpose() * &self.entries * &v)[(0, 0)]
    }
}

/// Peak-shape matrix of the Wishart density with peak `rho_peak`:
/// `G = (n−m) tr(ρ⁻¹B ρ⁻¹B′) − (n−m)²/(mn) tr(ρ⁻¹B) tr(ρ⁻¹B′)`.
pub fn shape_matrix_g(rho_peak: &HermitianMatrix, n: usize, basis: &TracelessBasis) -> Result<ShapeMatrix> {
    let m = rho_peak.dim();
    if basis.dim() != m {
        return Err(Error::DimensionMismatch { expected: m, found: basis.dim() });
    }
    if n <= m {
        return Err(Error::InvalidParameter(format!("need n > m, got m = {m}, n = {n}")));
    }
    let inv = rho_peak.inverse()?.to_dense();
    let prods: Vec<DMatrix<Complex64>> = basis.elements().iter().map(|b| &inv * b.to_dense()).collect();
    let traces: Vec<f64> = prods.iter().map(|p| p.trace().re).collect();
    let (mf, nf) = (m as f64, n as f64);
    let d = prods.len();
    let mut g = DMatrix::zeros(d, d);
    for l in 0..d {
        for k in l..d {
            let t = trace_of_product(&prods[l], &prods[k]);
            let v = (nf - mf) * t - (nf - mf).powi(2) / (mf * nf) * traces[l] * traces[k];
            g[(l, k)] = v;
            g[(k, l)] = v;
        }
    }
    ShapeMatrix::new(g)
}

fn trace_of_product(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> f64 {
    let m = a.nrows();
    let mut acc = Complex64::new(0.0, 0.0);
    for j in 0..m {
        for k in 0..m {
            acc += a[(j, k)] * b[(k, j)];
        }
    }
    acc.re
}

/// Full widths at half maximum of the longitudinal slice through the peak of
/// the `σ_z`-family Wishart density, `m = 2^k`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Fwhm {
    pub approx: f64,
    pub exact: f64,
}

impl Fwhm {
    pub fn relative_error(&self) -> f64 {
        self.approx / self.exact - 1.0
    }
}

/// Gaussian-approximation and exact FWHM along `ρ_peak + ε m^{−½} σ_z^{⊗k}`,
/// with `ρ_peak = (1 + z_peak σ_z^{⊗k})/m`.
pub fn fwhm_longitudinal(m: usize, n: usize, z_peak: f64) -> Result<Fwhm> {
    let theta = theta_for_peak(m, n, z_peak)?;
    let (mf, nf) = (m as f64, n as f64);
    let z2 = z_peak * z_peak;
    let approx = 2.0 / mf * (1.0 - z2) * (4f64.ln() / ((nf - mf) * (1.0 + mf / nf * z2))).sqrt();

    let params = WishartParams::new(n, sigma_z_family(m, theta)?)?;
    let sz = sigma_z_tensor_diag(m)?;
    let at = |z: f64| {
        let d: Vec<f64> = sz.iter().map(|s| (1.0 + z * s) / mf).collect();
        log_wishart_density(&HermitianMatrix::from_diagonal(&d), &params)
    };
    let top = at(z_peak);
    let half = |z: f64| {
        let v = at(z);
        if v == f64::NEG_INFINITY {
            -1.0
        } else {
            v - top + std::f64::consts::LN_2
        }
    };
    let hi = quad::bisect(half, z_peak, 1.0, 1e-14)?;
    let lo = quad::bisect(half, -1.0, z_peak, 1e-14)?;
    Ok(Fwhm { approx, exact: (hi - lo) / mf.sqrt() })
}

/// How the κ-fraction of uniform entries is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum SplitMode {
    /// The first `N − ⌊κN⌋` indices are Wishart draws, the rest uniform.
    /// Contiguous index ranges are then not samples of the mixture; use the
    /// whole run or [`SplitMode::Bernoulli`] when cutting it into pieces.
    #[default]
    ExactCount,
    /// Each index is uniform with probability κ.
    Bernoulli,
}

/// A shifted Wishart law mixed with the uniform law.
#[derive(Clone, Debug)]
pub struct ProposalSpec {
    wishart: WishartParams,
    delta_rho: HermitianMatrix,
    kappa: f64,
    split_mode: SplitMode,
    shifted: bool,
    log_uniform: f64,
}

impl ProposalSpec {
    /// `kappa` is the weight of the uniform component, `0 ≤ κ ≤ 1`.
    pub fn new(wishart: WishartParams, delta_rho: HermitianMatrix, kappa: f64) -> Result<Self> {
        let m = wishart.dim();
        if delta_rho.dim() != m {
            return Err(Error::DimensionMismatch { expected: m, found: delta_rho.dim() });
        }
        if delta_rho.trace().abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!("shift must be traceless, trace {}", delta_rho.trace())));
        }
        if !(0.0..=1.0).contains(&kappa) {
            return Err(Error::InvalidParameter(format!("kappa {kappa} outside [0, 1]")));
        }
        let shifted = delta_rho.frobenius_norm() > 0.0;
        Ok(ProposalSpec { wishart, delta_rho, kappa, split_mode: SplitMode::ExactCount, shifted, log_uniform: -log_hs_volume(m) })
    }

    /// Unshifted Wishart law, no uniform admixture.
    pub fn pure_wishart(wishart: WishartParams) -> Self {
        let m = wishart.dim();
        Self::new(wishart, HermitianMatrix::zeros(m), 0.0).expect("valid by construction")
    }

    /// Proposal around an estimate `rho_ml`: the Wishart peak sits at
    /// `x1·ρ_ML + (1−x1)/m`, the sample is shifted by `x2·(ρ_ML − 1/m)`, and
    /// the uniform weight is `kappa`. With `x1 + x2 = 1` the proposal peak
    /// coincides with `ρ_ML`.
    pub fn from_mixing(rho_ml: &HermitianMatrix, n: usize, x1: f64, x2: f64, kappa: f64) -> Result<Self> {
        let m = rho_ml.dim();
        let mixed = HermitianMatrix::identity(m).scaled(1.0 / m as f64);
        let traceless = rho_ml - &mixed;
        let peak = &mixed + &traceless.scaled(x1);
        let sigma = covariance_for_peak(&peak, n)?;
        Self::new(WishartParams::new(n, sigma)?, traceless.scaled(x2), kappa)
    }

    pub fn with_split_mode(mut self, mode: SplitMode) -> Self {
        self.split_mode = mode;
        self
    }

    pub fn dim(&self) -> usize {
        self.wishart.dim()
    }

    pub fn wishart(&self) -> &WishartParams {
        &self.wishart
    }

    pub fn delta_rho(&self) -> &HermitianMatrix {
        &self.delta_rho
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn split_mode(&self) -> SplitMode {
        self.split_mode
    }

    /// Number of uniform entries in an exact-count sample of size `total`.
    pub fn uniform_count(&self, total: u64) -> u64 {
        let x = self.kappa * total as f64;
        let r = x.round();
        if (x - r).abs() <= 1e-9 * x.max(1.0) {
            r as u64
        } else {
            x.floor() as u64
        }
    }

    /// `log g(ρ)` for a unit-trace hermitian `ρ`, physical or not.
    pub fn log_density(&self, rho: &HermitianMatrix) -> f64 {
        let physical = rho.is_psd(DEFAULT_PSD_TOL);
        self.log_density_with(rho, physical, None)
    }

    /// Same as [`log_density`](Self::log_density) with the physicality of
    /// `ρ` and optionally `log det(ρ−Δρ)` already known.
    pub(crate) fn log_density_with(&self, rho: &HermitianMatrix, physical: bool, pre_log_det: Option<f64>) -> f64 {
        let wishart_term = if self.kappa < 1.0 {
            let pre;
            let preimage = if self.shifted {
                pre = rho - &self.delta_rho;
                &pre
            } else {
                rho
            };
            let lg = match pre_log_det {
                Some(ld) => self.wishart.log_density_from_log_det(preimage, ld),
                None if !self.shifted && physical && self.wishart.n() == self.wishart.dim() => {
                    self.wishart.log_density_from_log_det(preimage, 0.0)
                }
                None => log_wishart_density(preimage, &self.wishart),
            };
            (1.0 - self.kappa).ln() + lg
        } else {
            f64::NEG_INFINITY
        };
        let uniform_term = if physical && self.kappa > 0.0 {
            self.kappa.ln() + self.log_uniform
        } else {
            f64::NEG_INFINITY
        };
        log_add_exp(wishart_term, uniform_term)
    }
}

pub(crate) fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let hi = a.max(b);
    hi + ((a - hi).exp() + (b - hi).exp()).ln()
}

/// One proposal draw.
#[derive(Clone, Debug)]
pub struct ProposalEntry {
    pub state: HermitianMatrix,
    pub log_g: f64,
    pub physical: bool,
    pub from_uniform: bool,
}

/// Proposal states with their log-densities and physicality flags.
#[derive(Clone, Debug, Default)]
pub struct ProposalSample {
    pub first_index: u64,
    pub states: Vec<HermitianMatrix>,
    pub log_g: Vec<f64>,
    pub physical: Vec<bool>,
}

impl ProposalSample {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn physical_fraction(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        self.physical.iter().filter(|p| **p).count() as f64 / self.len() as f64
    }

    pub fn push(&mut self, e: ProposalEntry) {
        self.states.push(e.state);
        self.log_g.push(e.log_g);
        self.physical.push(e.physical);
    }
}

/// Translates every state by a traceless `Δρ` and recomputes the physicality
/// flags. The stored densities move with the states, since a translation
/// carries a density along unchanged.
pub fn apply_shift(sample: &ProposalSample, delta_rho: &HermitianMatrix) -> Result<ProposalSample> {
    if delta_rho.trace().abs() > 1e-12 {
        return Err(Error::InvalidParameter(format!("shift must be traceless, trace {}", delta_rho.trace())));
    }
    let states: Vec<HermitianMatrix> = sample.states.iter().map(|s| s + delta_rho).collect();
    let physical = states.iter().map(|s| s.is_psd(DEFAULT_PSD_TOL)).collect();
    Ok(ProposalSample { first_index: sample.first_index, states, log_g: sample.log_g.clone(), physical })
}

/// Index-addressed generator for one proposal sample of fixed total size.
#[derive(Clone, Debug)]
pub struct ProposalSampler {
    spec: ProposalSpec,
    seed: u64,
    total: u64,
    n_uniform: u64,
    uniform: WishartParams,
}

impl ProposalSampler {
    pub fn new(spec: ProposalSpec, seed: u64, total: u64) -> Result<Self> {
        if total == 0 {
            return Err(Error::InvalidParameter("proposal sample size must be at least 1".into()));
        }
        let n_uniform = spec.uniform_count(total);
        let uniform = WishartParams::uniform(spec.dim())?;
        Ok(ProposalSampler { spec, seed, total, n_uniform, uniform })
    }

    pub fn spec(&self) -> &ProposalSpec {
        &self.spec
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    /// Uniform entries in exact-count mode.
    pub fn n_uniform(&self) -> u64 {
        self.n_uniform
    }

    /// Draw number `index`, a pure function of `(seed, index)`.
    pub fn entry(&self, index: u64) -> ProposalEntry {
        let mut rng = RngStream::new(self.seed, index).rng();
        let from_uniform = match self.spec.split_mode {
            SplitMode::ExactCount => index >= self.total - self.n_uniform,
            SplitMode::Bernoulli => rng.random::<f64>() < self.spec.kappa,
        };
        if from_uniform {
            let state = sample_wishart_state(&self.uniform, &mut rng).into_matrix();
            let log_g = if self.spec.shifted {
                self.spec.log_density_with(&state, true, None)
            } else {
                let ld = state.log_det();
                self.spec.log_density_with(&state, true, Some(ld))
            };
            ProposalEntry { state, log_g, physical: true, from_uniform }
        } else {
            let pre = sample_wishart_state(&self.spec.wishart, &mut rng).into_matrix();
            let ld = pre.log_det();
            if self.spec.shifted {
                let state = &pre + &self.spec.delta_rho;
                let physical = state.is_psd(DEFAULT_PSD_TOL);
                let log_g = self.spec.log_density_with(&state, physical, Some(ld));
                ProposalEntry { state, log_g, physical, from_uniform }
            } else {
                let log_g = self.spec.log_density_with(&pre, true, Some(ld));
                ProposalEntry { state: pre, log_g, physical: true, from_uniform }
            }
        }
    }

    /// Entries `start..end`, generated in parallel.
    pub fn range(&self, start: u64, end: u64) -> ProposalSample {
        let end = end.min(self.total);
        let entries: Vec<ProposalEntry> = (start..end).into_par_iter().map(|i| self.entry(i)).collect();
        let mut out = ProposalSample { first_index: start, ..Default::default() };
        for e in entries {
            out.push(e);
        }
        out
    }
}

/// Draws a whole proposal sample of size `total` in memory.
pub fn build_proposal_sample(spec: &ProposalSpec, total: u64, seed: u64) -> Result<ProposalSample> {
    let sampler = ProposalSampler::new(spec.clone(), seed, total)?;
    Ok(sampler.range(0, total))
}

/// Draws one state of the proposal law with a caller-supplied generator.
pub fn sample_proposal_state<R: Rng + ?Sized>(spec: &ProposalSpec, rng: &mut R) -> Result<QuantumState> {
    loop {
        let state = if rng.random::<f64>() < spec.kappa {
            sample_wishart_state(&WishartParams::uniform(spec.dim())?, rng).into_matrix()
        } else {
            &sample_wishart_state(&spec.wishart, rng).into_matrix() + &spec.delta_rho
        };
        if state.is_psd(DEFAULT_PSD_TOL) {
            return Ok(QuantumState::new_unchecked(state));
        }
    }
}
