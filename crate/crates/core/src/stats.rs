//! Goodness-of-fit helpers for sample checks.

use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};

/// Counts of `values` in `bins` intervals of `width` starting at `lo`;
/// values outside are dropped and the right edge of the last bin is inclusive.
pub fn histogram(values: impl IntoIterator<Item = f64>, lo: f64, width: f64, bins: usize) -> Vec<u64> {
    let mut h = vec![0u64; bins];
    let hi = lo + width * bins as f64;
    for v in values {
        if v < lo || v > hi {
            continue;
        }
        let i = (((v - lo) / width) as usize).min(bins - 1);
        h[i] += 1;
    }
    h
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChiSquare {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Pearson test of observed counts against expected counts. Neighbouring
/// bins are pooled until each expected count reaches `min_expected`.
pub fn chi_square_test(observed: &[u64], expected: &[f64], min_expected: f64) -> Result<ChiSquare> {
    if observed.len() != expected.len() {
        return Err(Error::DimensionMismatch { expected: expected.len(), found: observed.len() });
    }
    let mut pooled: Vec<(f64, f64)> = Vec::new();
    let (mut o, mut e) = (0.0, 0.0);
    for (ob, ex) in observed.iter().zip(expected) {
        o += *ob as f64;
        e += ex;
        if e >= min_expected {
            pooled.push((o, e));
            o = 0.0;
            e = 0.0;
        }
    }
    if e > 0.0 || o > 0.0 {
        match pooled.last_mut() {
            Some(last) => {
                last.0 += o;
                last.1 += e;
            }
            None => pooled.push((o, e)),
        }
    }
    if pooled.len() < 2 {
        return Err(Error::Degenerate("fewer than two bins after pooling".into()));
    }
    let statistic = pooled.iter().map(|(o, e)| (o - e) * (o - e) / e).sum();
    let dof = pooled.len() - 1;
    let dist = ChiSquared::new(dof as f64).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    Ok(ChiSquare { statistic, dof, p_value: 1.0 - dist.cdf(statistic) })
}

/// Kolmogorov–Smirnov distance between the empirical distribution of
/// `values` and `cdf`.
pub fn ks_statistic(values: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    v.iter()
        .enumerate()
        .map(|(i, x)| {
            let f = cdf(*x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// `√(p(1−p)/n)`.
pub fn binomial_se(p: f64, n: u64) -> f64 {
    if n == 0 {
        return 0.0;
    }
    (p * (1.0 - p) / n as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn histogram_edges() {
        let h = histogram([0.0, 0.04, 0.039, 1.0, -0.1, 2.5], 0.0, 0.5, 2);
        assert_eq!(h, vec![3, 1]);
    }

    #[test]
    fn perfect_fit() {
        let r = chi_square_test(&[10, 20, 30], &[10.0, 20.0, 30.0], 5.0).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.dof, 2);
        assert!((r.p_value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pooling_and_poor_fit() {
        let r = chi_square_test(&[1, 1, 50, 0], &[1.0, 2.0, 25.0, 24.0], 5.0).unwrap();
        assert_eq!(r.dof, 1);
        assert!(r.p_value < 1e-6);
        assert!(chi_square_test(&[1], &[1.0, 2.0], 5.0).is_err());
    }

    #[test]
    fn ks_of_grid() {
        let v: Vec<f64> = (0..100).map(|i| (i as f64 + 0.5) / 100.0).collect();
        assert!((ks_statistic(&v, |x| x) - 0.005).abs() < 1e-12);
    }
}
