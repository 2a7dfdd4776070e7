#![allow(dead_code, clippy::needless_range_loop)]

use std::io::Write;

use rayon::prelude::*;
use wishart_states::hermitian::{BlochVector, HermitianMatrix};
use wishart_states::target::{Counts, Pom, TargetSpec};
use wishart_states::TracelessBasis;

pub const SEED: u64 = 1;

/// Two-qubit data, 100 counts over the tetrahedron product POM.
pub const TWO_QUBIT_COUNTS: [f64; 16] = [10., 4., 6., 4., 7., 6., 5., 6., 5., 6., 10., 6., 5., 6., 8., 6.];

pub fn qubit_target(nu: [f64; 4]) -> TargetSpec {
    TargetSpec::new(Pom::tetrahedron(), Counts::new(nu.to_vec()).unwrap()).unwrap()
}

pub fn two_qubit_target(nu: &[f64]) -> TargetSpec {
    TargetSpec::new(Pom::tetra_power(2).unwrap(), Counts::new(nu.to_vec()).unwrap()).unwrap()
}

/// Writes straight to the process stdout so the line survives output capture.
pub fn report(name: &str, pass: bool, detail: &str) {
    let line = format!("ACCEPTANCE {} {name}: {detail}\n", if pass { "PASS" } else { "FAIL" });
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(line.as_bytes());
    let _ = out.flush();
}

/// Central finite-difference Hessian of `f` in the coordinates of `basis`
/// around `center`.
pub fn fd_hessian(f: impl Fn(&HermitianMatrix) -> f64, center: &HermitianMatrix, basis: &TracelessBasis, h: f64) -> Vec<Vec<f64>> {
    let d = basis.len();
    let at = |shift: &[(usize, f64)]| {
        let mut c = vec![0.0; d];
        for &(l, s) in shift {
            c[l] += s;
        }
        f(&(center + &basis.combine(&c).unwrap()))
    };
    let f0 = at(&[]);
    let mut hess = vec![vec![0.0; d]; d];
    for l in 0..d {
        hess[l][l] = (at(&[(l, h)]) - 2.0 * f0 + at(&[(l, -h)])) / (h * h);
        for k in 0..l {
            let v = (at(&[(l, h), (k, h)]) - at(&[(l, h), (k, -h)]) - at(&[(l, -h), (k, h)]) + at(&[(l, -h), (k, -h)]))
                / (4.0 * h * h);
            hess[l][k] = v;
            hess[k][l] = v;
        }
    }
    hess
}

/// Two-sample χ² homogeneity test on binned counts; returns `(statistic, dof, p)`.
pub fn two_sample_chi2(a: &[u64], b: &[u64]) -> (f64, usize, f64) {
    use statrs::distribution::{ChiSquared, ContinuousCDF};
    let (na, nb) = (a.iter().sum::<u64>() as f64, b.iter().sum::<u64>() as f64);
    let (ka, kb) = ((nb / na).sqrt(), (na / nb).sqrt());
    let mut stat = 0.0;
    let mut bins = 0;
    for (&x, &y) in a.iter().zip(b) {
        if x + y == 0 {
            continue;
        }
        let d = ka * x as f64 - kb * y as f64;
        stat += d * d / (x + y) as f64;
        bins += 1;
    }
    let dof = bins - 1;
    let p = 1.0 - ChiSquared::new(dof as f64).unwrap().cdf(stat);
    (stat, dof, p)
}

/// `λ(r)` for the qubit tetrahedron data on the Bloch ball, from the affine
/// form of the Born probabilities.
pub struct BallLambda {
    p0: [f64; 4],
    dp: [[f64; 3]; 4],
    nu: [f64; 4],
    log_max: f64,
}

impl BallLambda {
    pub fn new(nu: [f64; 4], log_max: f64) -> Self {
        let pom = Pom::tetrahedron();
        let at = |r: [f64; 3]| pom.born_probabilities(&BlochVector::new(r[0], r[1], r[2]).to_matrix()).unwrap();
        let base = at([0.0; 3]);
        let mut p0 = [0.0; 4];
        let mut dp = [[0.0; 3]; 4];
        p0.copy_from_slice(&base[..4]);
        for a in 0..3 {
            let mut e = [0.0; 3];
            e[a] = 1.0;
            let p = at(e);
            for k in 0..4 {
                dp[k][a] = p[k] - base[k];
            }
        }
        BallLambda { p0, dp, nu, log_max }
    }

    pub fn eval(&self, r: [f64; 3]) -> f64 {
        let mut acc = -self.log_max;
        for k in 0..4 {
            let p = self.p0[k] + self.dp[k][0] * r[0] + self.dp[k][1] * r[1] + self.dp[k][2] * r[2];
            acc += self.nu[k] * p.ln();
        }
        acc.exp()
    }

    /// Ball average of `λ` and the credibility at `λ = j/bins`, `j = 0..=bins`,
    /// on a midpoint grid with `cells` cells per axis.
    pub fn quadrature(&self, cells: usize, bins: usize) -> (f64, Vec<f64>) {
        let h = 2.0 / cells as f64;
        let zero = || (vec![0.0; bins + 1], 0u64);
        let (mass, count) = (0..cells)
            .into_par_iter()
            .map(|i| {
                let x = -1.0 + (i as f64 + 0.5) * h;
                let (mut mass, mut c) = zero();
                for j in 0..cells {
                    let y = -1.0 + (j as f64 + 0.5) * h;
                    for k in 0..cells {
                        let z = -1.0 + (k as f64 + 0.5) * h;
                        if x * x + y * y + z * z < 1.0 {
                            let l = self.eval([x, y, z]);
                            mass[((l * bins as f64) as usize).min(bins)] += l;
                            c += 1;
                        }
                    }
                }
                (mass, c)
            })
            .reduce(zero, |mut a, b| {
                a.0.iter_mut().zip(&b.0).for_each(|(x, y)| *x += y);
                (a.0, a.1 + b.1)
            });
        let total: f64 = mass.iter().sum();
        let mut curve = vec![0.0; bins + 1];
        let mut tail = 0.0;
        for j in (0..=bins).rev() {
            tail += mass[j];
            curve[j] = tail / total;
        }
        (total / count as f64, curve)
    }
}


/// Spherical bins of the Bloch ball: `nr` shells of equal volume, `nu` bands
/// in `cos ϑ`, `nphi` sectors in `φ`.
pub fn spherical_bin(r: [f64; 3], nr: usize, nu: usize, nphi: usize) -> usize {
    let rad = (r[0] * r[0] + r[1] * r[1] + r[2] * r[2]).sqrt();
    let ir = ((rad.powi(3) * nr as f64) as usize).min(nr - 1);
    let u = if rad > 0.0 { r[2] / rad } else { 0.0 };
    let iu = (((u + 1.0) / 2.0 * nu as f64) as usize).min(nu - 1);
    let phi = r[1].atan2(r[0]) + std::f64::consts::PI;
    let ip = ((phi / (2.0 * std::f64::consts::PI) * nphi as f64) as usize).min(nphi - 1);
    (ir * nu + iu) * nphi + ip
}

impl BallLambda {
    /// Probability of each [`spherical_bin`] under the density `∝ λ`, by
    /// midpoint quadrature with `sub` points per bin and axis in
    /// `(r³, cos ϑ, φ)`, where the volume element is constant.
    pub fn spherical_bin_masses(&self, nr: usize, nu: usize, nphi: usize, sub: usize) -> Vec<f64> {
        let (a, b, c) = (nr * sub, nu * sub, nphi * sub);
        let mut mass: Vec<f64> = (0..a)
            .into_par_iter()
            .map(|i| {
                let rad = ((i as f64 + 0.5) / a as f64).cbrt();
                let mut out = vec![0.0; nr * nu * nphi];
                for j in 0..b {
                    let u = -1.0 + 2.0 * (j as f64 + 0.5) / b as f64;
                    let s = (1.0 - u * u).sqrt();
                    for k in 0..c {
                        let phi = -std::f64::consts::PI + 2.0 * std::f64::consts::PI * (k as f64 + 0.5) / c as f64;
                        let r = [rad * s * phi.cos(), rad * s * phi.sin(), rad * u];
                        out[((i / sub) * nu + j / sub) * nphi + k / sub] += self.eval(r);
                    }
                }
                out
            })
            .reduce(
                || vec![0.0; nr * nu * nphi],
                |mut x, y| {
                    x.iter_mut().zip(&y).for_each(|(p, q)| *p += q);
                    x
                },
            );
        let total: f64 = mass.iter().sum();
        mass.iter_mut().for_each(|m| *m /= total);
        mass
    }
}
