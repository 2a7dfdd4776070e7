//! Sample verification through bounded-likelihood regions.
//!
//! For `0 ≤ λ ≤ 1` the region `R_λ` holds the states with
//! `f(ρ) > λ f(ρ_ML)`. Its size `s_λ` is estimated from a uniform sample, and
//! the reference credibility follows from the link
//! `c_λ = (λ s_λ + ∫_λ^1 s) / ∫_0^1 s`, which for an empirical sample is
//! `Σ_{λ_k>λ} λ_k / Σ_k λ_k`. A target sample of size `N` gives the
//! estimate `ĉ_λ`, and `Q = ∫(ĉ_λ − c_λ)² dλ` measures the sample quality.
//! All λ integrals use the trapezoid rule on the supplied grid.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::hermitian::HermitianMatrix;
use crate::rejection::LogDensity;

/// `λ_k = f(ρ_k)/f(ρ_ML)` for every entry of a sample, kept sorted.
#[derive(Clone, Debug, PartialEq)]
pub struct LambdaValues {
    sorted: Vec<f64>,
    /// Suffix sums of `λ` and `λ²` over the sorted values.
    tail: Vec<f64>,
    tail_sq: Vec<f64>,
}

impl LambdaValues {
    /// Values slightly above one (rounding at the maximum) are clamped.
    pub fn new(mut values: Vec<f64>) -> Result<Self> {
        for v in values.iter_mut() {
            if !(*v >= 0.0 && *v <= 1.0 + 1e-9) {
                return Err(Error::InvalidParameter(format!("λ value {v} outside [0, 1]")));
            }
            *v = v.min(1.0);
        }
        values.sort_by(f64::total_cmp);
        let n = values.len();
        let mut tail = vec![0.0; n + 1];
        let mut tail_sq = vec![0.0; n + 1];
        for i in (0..n).rev() {
            tail[i] = tail[i + 1] + values[i];
            tail_sq[i] = tail_sq[i + 1] + values[i] * values[i];
        }
        Ok(LambdaValues { sorted: values, tail, tail_sq })
    }

    /// `λ_k = exp(log f(ρ_k) − log f_max)`.
    pub fn from_states<'a>(
        states: impl IntoIterator<Item = &'a HermitianMatrix>,
        target: &dyn LogDensity,
        log_f_max: f64,
    ) -> Result<Self> {
        let v = states.into_iter().map(|s| (target.log_density(s) - log_f_max).exp()).collect();
        Self::new(v)
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn sorted(&self) -> &[f64] {
        &self.sorted
    }

    /// Index of the first value strictly above `lambda`.
    fn first_above(&self, lambda: f64) -> usize {
        self.sorted.partition_point(|v| *v <= lambda)
    }

    /// Fraction of values strictly above `lambda`.
    pub fn fraction_above(&self, lambda: f64) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        (self.len() - self.first_above(lambda)) as f64 / self.len() as f64
    }

    pub fn mean(&self) -> f64 {
        self.tail[0] / self.len() as f64
    }

    pub fn mean_sq(&self) -> f64 {
        self.tail_sq[0] / self.len() as f64
    }
}

/// Size estimate `ŝ_λ`, the fraction of uniform-sample values above `λ`.
pub fn size_estimate(uniform: &LambdaValues, grid: &[f64]) -> Vec<f64> {
    grid.iter().map(|&l| uniform.fraction_above(l)).collect()
}

/// Reference credibility `Σ_{λ_k>λ} λ_k / Σ_k λ_k` from a uniform sample.
pub fn credibility_from_size(uniform: &LambdaValues, grid: &[f64]) -> Result<Vec<f64>> {
    let total = uniform.tail.first().copied().unwrap_or(0.0);
    if !(total > 0.0) {
        return Err(Error::Degenerate("all λ values vanish".into()));
    }
    Ok(grid.iter().map(|&l| uniform.tail[uniform.first_above(l)] / total).collect())
}

/// Credibility estimate `ĉ_λ` from a target sample with its binomial
/// standard error `√(ĉ(1−ĉ)/N)`.
pub fn credibility_estimate(target: &LambdaValues, grid: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = target.len().max(1) as f64;
    let c: Vec<f64> = grid.iter().map(|&l| target.fraction_above(l)).collect();
    let se = c.iter().map(|c| (c * (1.0 - c) / n).sqrt()).collect();
    (c, se)
}

/// `λ = 0, 0.1, …, 1`.
pub fn default_grid() -> Vec<f64> {
    uniform_grid(11)
}

/// `points` equally spaced values from 0 to 1.
pub fn uniform_grid(points: usize) -> Vec<f64> {
    let d = (points.max(2) - 1) as f64;
    (0..points.max(2)).map(|i| i as f64 / d).collect()
}

fn check_grid(grid: &[f64], curves: &[&[f64]]) -> Result<()> {
    if grid.len() < 2 {
        return Err(Error::GridMismatch("need at least two grid points".into()));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::GridMismatch("grid must be strictly increasing".into()));
    }
    for c in curves {
        if c.len() != grid.len() {
            return Err(Error::GridMismatch(format!("curve has {} points, grid has {}", c.len(), grid.len())));
        }
    }
    Ok(())
}

/// Trapezoid integral of sampled values over the grid.
pub fn trapezoid(grid: &[f64], y: &[f64]) -> Result<f64> {
    check_grid(grid, &[y])?;
    Ok(grid.windows(2).zip(y.windows(2)).map(|(g, v)| 0.5 * (g[1] - g[0]) * (v[0] + v[1])).sum())
}

/// `Q = ∫(ĉ_λ − c_λ)² dλ`.
pub fn q_statistic(grid: &[f64], c_hat: &[f64], c_ref: &[f64]) -> Result<f64> {
    check_grid(grid, &[c_hat, c_ref])?;
    let d: Vec<f64> = c_hat.iter().zip(c_ref).map(|(a, b)| (a - b) * (a - b)).collect();
    trapezoid(grid, &d)
}

/// `∫ c(1−c) dλ`.
pub fn integral_c_one_minus_c(grid: &[f64], c: &[f64]) -> Result<f64> {
    let y: Vec<f64> = c.iter().map(|c| c * (1.0 - c)).collect();
    trapezoid(grid, &y)
}

/// Mean and variance of `Q` for a target sample of size `n_tgt`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct QMoments {
    pub mean: f64,
    pub variance: f64,
}

/// `E[Q] = (1/N)∫c(1−c) + bias_sq` and
/// `Var[Q] = (2/N²)∬c<²(1−c>)² + (1/N³)∬c<(1−c>)(1−4c<−2c>+6c<c>)`
/// with `c< = min(c_λ, c_λ′)`, `c> = max(c_λ, c_λ′)`. `bias_sq` is
/// `∫(ĉ^{ufm} − c)²`, the reference error, zero when unknown.
pub fn expected_q(grid: &[f64], c: &[f64], n_tgt: u64, bias_sq: f64) -> Result<QMoments> {
    check_grid(grid, &[c])?;
    if n_tgt == 0 {
        return Err(Error::InvalidParameter("target sample size must be positive".into()));
    }
    let n = n_tgt as f64;
    let mean = integral_c_one_minus_c(grid, c)? / n + bias_sq;
    let w: Vec<f64> = (0..grid.len())
        .map(|i| {
            let left = if i > 0 { grid[i] - grid[i - 1] } else { 0.0 };
            let right = if i + 1 < grid.len() { grid[i + 1] - grid[i] } else { 0.0 };
            0.5 * (left + right)
        })
        .collect();
    let (mut a, mut b) = (0.0, 0.0);
    for i in 0..grid.len() {
        for j in 0..grid.len() {
            let (lo, hi) = if c[i] <= c[j] { (c[i], c[j]) } else { (c[j], c[i]) };
            let ww = w[i] * w[j];
            a += ww * lo * lo * (1.0 - hi) * (1.0 - hi);
            b += ww * lo * (1.0 - hi) * (1.0 - 4.0 * lo - 2.0 * hi + 6.0 * lo * hi);
        }
    }
    Ok(QMoments { mean, variance: 2.0 * a / (n * n) + b / (n * n * n) })
}

/// Leading `1/N_ufm` bias of the reference credibility:
/// `(1/N)(E[λ²]/E[λ]²)[c_λ − E[χ(λ<λ′)λ′²]/E[λ²]]`, never positive.
pub fn uniform_bias_leading(uniform: &LambdaValues, grid: &[f64], n_ufm: u64) -> Result<Vec<f64>> {
    let c = credibility_from_size(uniform, grid)?;
    let (m1, m2) = (uniform.mean(), uniform.mean_sq());
    let n = uniform.len() as f64;
    Ok(grid
        .iter()
        .zip(&c)
        .map(|(&l, &cl)| {
            let tail2 = uniform.tail_sq[uniform.first_above(l)] / n;
            (m2 / (m1 * m1)) * (cl - tail2 / m2) / n_ufm as f64
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    VeryGood,
    Good,
    Reject,
}

/// Within one standard deviation of `E[Q]`: very good; within two: good.
pub fn quality_verdict(q: f64, moments: &QMoments) -> Result<Verdict> {
    if !(moments.variance > 0.0) {
        return Err(Error::InvalidParameter(format!("variance {} must be positive", moments.variance)));
    }
    let z = (q - moments.mean).abs() / moments.variance.sqrt();
    Ok(if z < 1.0 {
        Verdict::VeryGood
    } else if z < 2.0 {
        Verdict::Good
    } else {
        Verdict::Reject
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct QStat {
    pub q: f64,
    pub expected_q: f64,
    pub var_q: f64,
    pub verdict: Verdict,
}

/// Size and credibility curves on one grid.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CredibilityCurve {
    pub grid: Vec<f64>,
    pub s: Vec<f64>,
    pub c_ref: Vec<f64>,
    pub c_hat: Option<Vec<f64>>,
    pub c_hat_se: Option<Vec<f64>>,
    pub n_ufm: u64,
    pub n_tgt: u64,
}

impl CredibilityCurve {
    pub fn new(grid: Vec<f64>, uniform: &LambdaValues, target: Option<&LambdaValues>) -> Result<Self> {
        check_grid(&grid, &[])?;
        let s = size_estimate(uniform, &grid);
        let c_ref = credibility_from_size(uniform, &grid)?;
        let (c_hat, c_hat_se, n_tgt) = match target {
            Some(t) => {
                let (c, se) = credibility_estimate(t, &grid);
                (Some(c), Some(se), t.len() as u64)
            }
            None => (None, None, 0),
        };
        Ok(CredibilityCurve { grid, s, c_ref, c_hat, c_hat_se, n_ufm: uniform.len() as u64, n_tgt })
    }

    /// `Q` with its expected moments and verdict; needs a target curve.
    pub fn q_stat(&self, bias_sq: f64) -> Result<QStat> {
        let c_hat = self
            .c_hat
            .as_ref()
            .ok_or_else(|| Error::InvalidParameter("no target sample in this curve".into()))?;
        let q = q_statistic(&self.grid, c_hat, &self.c_ref)?;
        let m = expected_q(&self.grid, &self.c_ref, self.n_tgt, bias_sq)?;
        Ok(QStat { q, expected_q: m.mean, var_q: m.variance, verdict: quality_verdict(q, &m)? })
    }
}
