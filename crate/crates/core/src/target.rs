//! Likelihood targets built from a measurement and its outcome counts.

use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::hermitian::{HermitianMatrix, QuantumState, TracelessBasis, DEFAULT_PSD_TOL};
use crate::proposal::ShapeMatrix;

/// A probability-operator measurement: PSD effects summing to the identity.
#[derive(Clone, Debug)]
pub struct Pom {
    dim: usize,
    effects: Vec<HermitianMatrix>,
}

impl Pom {
    pub fn new(effects: Vec<HermitianMatrix>) -> Result<Self> {
        let Some(first) = effects.first() else {
            return Err(Error::InvalidParameter("a POM needs at least one effect".into()));
        };
        let dim = first.dim();
        let mut sum = HermitianMatrix::zeros(dim);
        for e in &effects {
            if e.dim() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: e.dim() });
            }
            if !e.is_psd(1e-10) {
                return Err(Error::NotPsd { min_eigenvalue: e.min_eigenvalue() });
            }
            sum = &sum + e;
        }
        let dev = (&sum - &HermitianMatrix::identity(dim)).frobenius_norm();
        if dev > 1e-10 {
            return Err(Error::InvalidParameter(format!("effects sum to the identity only within {dev:e}")));
        }
        Ok(Pom { dim, effects })
    }

    /// The qubit tetrahedron measurement `Π_k = ¼(1 + a_k·σ/√3)` with
    /// `a = (1,−1,−1), (−1,1,−1), (−1,−1,1), (1,1,1)`.
    pub fn tetrahedron() -> Self {
        const A: [[f64; 3]; 4] = [[1.0, -1.0, -1.0], [-1.0, 1.0, -1.0], [-1.0, -1.0, 1.0], [1.0, 1.0, 1.0]];
        let r = 1.0 / 3f64.sqrt();
        let effects = A
            .iter()
            .map(|a| {
                let (x, y, z) = (a[0] * r, a[1] * r, a[2] * r);
                HermitianMatrix::from_parts(
                    2,
                    vec![0.25 * (1.0 + z), 0.25 * (1.0 - z)],
                    vec![Complex64::new(0.25 * x, -0.25 * y)],
                )
                .expect("qubit layout")
            })
            .collect();
        Pom { dim: 2, effects }
    }

    /// Product measurement with effects `a_l ⊗ b_j` at index `l·K_b + j`.
    pub fn tensor(a: &Pom, b: &Pom) -> Pom {
        let effects = a
            .effects
            .iter()
            .flat_map(|ea| b.effects.iter().map(move |eb| ea.kron(eb)))
            .collect();
        Pom { dim: a.dim * b.dim, effects }
    }

    /// `k`-fold tensor power of the tetrahedron measurement.
    pub fn tetra_power(k: usize) -> Result<Pom> {
        if k == 0 {
            return Err(Error::InvalidParameter("tetrahedron power must be at least 1".into()));
        }
        let t = Pom::tetrahedron();
        let mut out = t.clone();
        for _ in 1..k {
            out = Pom::tensor(&out, &t);
        }
        Ok(out)
    }

    /// Parses `"tetra"` or `"tetra^k"`.
    pub fn from_name(name: &str) -> Result<Pom> {
        let name = name.trim();
        match name.split_once('^') {
            None if name == "tetra" => Pom::tetra_power(1),
            Some(("tetra", k)) => {
                let k: usize = k.trim().parse().map_err(|_| Error::InvalidParameter(format!("bad POM power in {name:?}")))?;
                Pom::tetra_power(k)
            }
            _ => Err(Error::InvalidParameter(format!("unknown POM {name:?}"))),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.effects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.effects.is_empty()
    }

    pub fn effects(&self) -> &[HermitianMatrix] {
        &self.effects
    }

    /// `p_k = tr(ρ Π_k)`.
    pub fn born_probabilities(&self, rho: &HermitianMatrix) -> Result<Vec<f64>> {
        if rho.dim() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: rho.dim() });
        }
        Ok(self.effects.iter().map(|e| e.trace_product(rho)).collect())
    }
}

/// Outcome counts `ν_k ≥ 0`; pseudo-counts from a conjugate prior may be
/// fractional.
#[derive(Clone, Debug, PartialEq)]
pub struct Counts {
    nu: Vec<f64>,
}

impl Counts {
    pub fn new(nu: Vec<f64>) -> Result<Self> {
        if nu.is_empty() {
            return Err(Error::InvalidParameter("no counts given".into()));
        }
        if let Some(bad) = nu.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
            return Err(Error::InvalidParameter(format!("count {bad} is not a nonnegative number")));
        }
        Ok(Counts { nu })
    }

    pub fn values(&self) -> &[f64] {
        &self.nu
    }

    pub fn len(&self) -> usize {
        self.nu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nu.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.nu.iter().sum()
    }
}

impl FromStr for Counts {
    type Err = Error;

    /// Whitespace- and/or comma-separated numbers.
    fn from_str(s: &str) -> Result<Self> {
        let nu = s
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
            .map(|t| t.parse::<f64>().map_err(|_| Error::InvalidParameter(format!("bad count {t:?}"))))
            .collect::<Result<Vec<_>>>()?;
        Counts::new(nu)
    }
}

/// The likelihood `f(ρ) = Π_k tr(Π_k ρ)^{ν_k}` on physical states, zero elsewhere.
#[derive(Clone, Debug)]
pub struct TargetSpec {
    pom: Pom,
    counts: Counts,
}

impl TargetSpec {
    pub fn new(pom: Pom, counts: Counts) -> Result<Self> {
        if pom.len() != counts.len() {
            return Err(Error::DimensionMismatch { expected: pom.len(), found: counts.len() });
        }
        Ok(TargetSpec { pom, counts })
    }

    pub fn dim(&self) -> usize {
        self.pom.dim()
    }

    pub fn pom(&self) -> &Pom {
        &self.pom
    }

    pub fn counts(&self) -> &Counts {
        &self.counts
    }

    /// `Σ_k ν_k log tr(Π_k ρ)` without the physicality check; `−∞` when a
    /// probability with nonzero count is not positive.
    pub fn log_likelihood(&self, rho: &HermitianMatrix) -> f64 {
        let mut acc = 0.0;
        for (e, &nu) in self.pom.effects.iter().zip(&self.counts.nu) {
            if nu == 0.0 {
                continue;
            }
            let p = e.trace_product(rho);
            if !(p > 0.0) {
                return f64::NEG_INFINITY;
            }
            acc += nu * p.ln();
        }
        acc
    }

    /// Unnormalized `log f(ρ)`: `−∞` for unphysical `ρ`.
    pub fn log_density(&self, rho: &HermitianMatrix) -> f64 {
        self.log_density_with(rho, rho.is_psd(DEFAULT_PSD_TOL))
    }

    pub(crate) fn log_density_with(&self, rho: &HermitianMatrix, physical: bool) -> f64 {
        if !physical {
            return f64::NEG_INFINITY;
        }
        self.log_likelihood(rho)
    }

    /// Coefficients of `p_k = a_k + Σ_l b_kl ϱ_l` in the traceless coordinates.
    fn affine_probabilities(&self, basis: &TracelessBasis) -> (Vec<f64>, DMatrix<f64>) {
        let m = self.dim() as f64;
        let a = self.pom.effects.iter().map(|e| e.trace() / m).collect();
        let b = DMatrix::from_fn(self.pom.len(), basis.len(), |k, l| self.pom.effects[k].trace_product(&basis.elements()[l]));
        (a, b)
    }
}

/// Settings of the maximum-likelihood iteration.
#[derive(Clone, Copy, Debug)]
pub struct MlOptions {
    pub max_iterations: usize,
    /// Stop once one step gains less than this in log-likelihood.
    pub tolerance: f64,
    /// Eigenvalues below this count as zero for the rank.
    pub rank_threshold: f64,
}

impl Default for MlOptions {
    fn default() -> Self {
        MlOptions { max_iterations: 100_000, tolerance: 1e-12, rank_threshold: 1e-6 }
    }
}

#[derive(Clone, Debug)]
pub struct MlResult {
    pub rho_ml: QuantumState,
    pub log_f_max: f64,
    pub iterations: usize,
    pub converged: bool,
    pub rank: usize,
    /// Descending.
    pub eigenvalues: Vec<f64>,
}

/// Maximum-likelihood state by the diluted `RρR` iteration.
///
/// Each step maps `ρ → (1+εR)ρ(1+εR)/tr(…)` with `R = Σ_k ν_k/(N p_k) Π_k`,
/// starting from the undiluted map and halving `ε` until the likelihood does
/// not decrease.
pub fn ml_estimator(spec: &TargetSpec, options: &MlOptions) -> Result<MlResult> {
    let m = spec.dim();
    let total = spec.counts.total();
    if !(total > 0.0) {
        return Err(Error::InvalidParameter("total count must be positive".into()));
    }
    let ident = DMatrix::<Complex64>::identity(m, m);
    let mut rho = HermitianMatrix::identity(m).scaled(1.0 / m as f64);
    let mut log_l = spec.log_likelihood(&rho);
    let mut converged = false;
    let mut iterations = 0;
    while iterations < options.max_iterations {
        iterations += 1;
        let p = spec.pom.born_probabilities(&rho)?;
        let mut r = HermitianMatrix::zeros(m);
        for ((e, &nu), pk) in spec.pom.effects.iter().zip(&spec.counts.nu).zip(&p) {
            if nu > 0.0 {
                r = &r + &e.scaled(nu / (total * pk));
            }
        }
        let rd = r.to_dense();
        let mut eps = f64::INFINITY;
        let (next, next_l) = loop {
            let a = if eps.is_infinite() { rd.clone() } else { &ident + &rd * Complex64::new(eps, 0.0) };
            let cand = rho.congruence(&a);
            let cand = cand.scaled(1.0 / cand.trace());
            let l = spec.log_likelihood(&cand);
            if l >= log_l - 1e-15 || eps < 1e-30 {
                break (cand, l);
            }
            eps = if eps.is_infinite() { 1e12 } else { eps / 2.0 };
        };
        let gain = next_l - log_l;
        rho = next;
        log_l = next_l;
        if gain < options.tolerance {
            converged = true;
            break;
        }
    }
    let mut eigenvalues = rho.eigenvalues();
    eigenvalues.reverse();
    let rank = eigenvalues.iter().filter(|x| **x > options.rank_threshold).count();
    Ok(MlResult { rho_ml: QuantumState::new_unchecked(rho), log_f_max: log_l, iterations, converged, rank, eigenvalues })
}

/// Stationary point of `log f` over all unit-trace hermitian matrices,
/// found by damped Newton steps in the traceless coordinates.
pub fn unconstrained_peak(spec: &TargetSpec, basis: &TracelessBasis) -> Result<HermitianMatrix> {
    if basis.dim() != spec.dim() {
        return Err(Error::DimensionMismatch { expected: spec.dim(), found: basis.dim() });
    }
    let (a, b) = spec.affine_probabilities(basis);
    let nu = &spec.counts.nu;
    let d = basis.len();
    let probs = |x: &DVector<f64>| -> Vec<f64> { (0..a.len()).map(|k| a[k] + (b.row(k) * x)[(0, 0)]).collect() };
    let value = |p: &[f64]| -> f64 {
        let mut acc = 0.0;
        for (pk, nk) in p.iter().zip(nu) {
            if *nk > 0.0 {
                if !(*pk > 0.0) {
                    return f64::NEG_INFINITY;
                }
                acc += nk * pk.ln();
            }
        }
        acc
    };
    let mut x = DVector::<f64>::zeros(d);
    let mut p = probs(&x);
    let mut v = value(&p);
    let mut trail = Vec::new();
    for _ in 0..200 {
        let mut grad = DVector::<f64>::zeros(d);
        let mut fisher = DMatrix::<f64>::zeros(d, d);
        for k in 0..a.len() {
            if nu[k] == 0.0 {
                continue;
            }
            let row = b.row(k).transpose();
            grad += &row * (nu[k] / p[k]);
            fisher += &row * row.transpose() * (nu[k] / (p[k] * p[k]));
        }
        let step = fisher
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Degenerate("Fisher matrix is singular in the traceless coordinates".into()))?
            .solve(&grad);
        let mut t = 1.0;
        let (nx, np, nv) = loop {
            let cand = &x + &step * t;
            let cp = probs(&cand);
            let cv = value(&cp);
            if cv >= v || t < 1e-12 {
                break (cand, cp, cv);
            }
            t *= 0.5;
        };
        trail.push(nv);
        let moved = (&nx - &x).norm();
        x = nx;
        p = np;
        v = nv;
        if moved < 1e-13 * (1.0 + x.norm()) {
            return basis.from_coordinates(&crate::hermitian::StateCoordinates(x.iter().copied().collect()));
        }
    }
    Err(Error::Convergence(format!("Newton iteration did not settle; last log-likelihoods {:?}", &trail[trail.len().saturating_sub(5)..])))
}

/// `F_ll′ = Σ_k ν_k tr(B_l Π_k) tr(Π_k B_l′) / tr(Π_k ρ̂)²`.
pub fn shape_matrix_f(spec: &TargetSpec, rho_hat: &HermitianMatrix, basis: &TracelessBasis) -> Result<ShapeMatrix> {
    let (_, b) = spec.affine_probabilities(basis);
    let p = spec.pom.born_probabilities(rho_hat)?;
    let d = basis.len();
    let mut f = DMatrix::<f64>::zeros(d, d);
    for (k, pk) in p.iter().enumerate() {
        let nu = spec.counts.nu[k];
        if nu == 0.0 {
            continue;
        }
        if !(*pk > 0.0) {
            return Err(Error::Degenerate(format!("probability {pk} of outcome {k} at the peak")));
        }
        let row = b.row(k).transpose();
        f += &row * row.transpose() * (nu / (pk * pk));
    }
    ShapeMatrix::new(f)
}

/// Whether `p` is the Born distribution of some state, tested by fitting an
/// ML state to `p` taken as relative frequencies.
pub fn is_permissible_probabilities(p: &[f64], pom: &Pom) -> Result<bool> {
    let spec = TargetSpec::new(pom.clone(), Counts::new(p.to_vec())?)?;
    let opts = MlOptions { tolerance: 1e-16, ..MlOptions::default() };
    let ml = ml_estimator(&spec, &opts)?;
    let total = spec.counts.total();
    let fitted = pom.born_probabilities(&ml.rho_ml)?;
    Ok(fitted.iter().zip(p).all(|(f, q)| (f - q / total).abs() <= 1e-6))
}
