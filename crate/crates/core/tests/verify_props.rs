use proptest::prelude::*;
use rand::Rng;
use rayon::prelude::*;
use wishart_states::rng::RngStream;
use wishart_states::verify::{
    credibility_estimate, credibility_from_size, expected_q, q_statistic, size_estimate, trapezoid, uniform_bias_leading,
    uniform_grid, CredibilityCurve, LambdaValues,
};

fn uniform_values(seed: u64, n: usize) -> Vec<f64> {
    let mut rng = RngStream::new(seed, 0).rng();
    (0..n).map(|_| rng.random::<f64>()).collect()
}

/// `c_λ = (λ s_λ + ∫_λ^1 s) / ∫_0^1 s`, with the integrals done on a fine grid.
#[test]
fn credibility_from_size_by_quadrature() {
    let mut rng = RngStream::new(1, 0).rng();
    let vals: Vec<f64> = (0..20_000).map(|_| rng.random::<f64>().powi(3)).collect();
    let lv = LambdaValues::new(vals).unwrap();
    let fine = uniform_grid(20_001);
    let s = size_estimate(&lv, &fine);
    let norm = trapezoid(&fine, &s).unwrap();
    let coarse = uniform_grid(11);
    let c = credibility_from_size(&lv, &coarse).unwrap();
    for (j, &l) in coarse.iter().enumerate() {
        let start = fine.partition_point(|x| *x < l);
        let tail = trapezoid(&fine[start..], &s[start..]).unwrap_or(0.0);
        let link = (l * lv.fraction_above(l) + tail) / norm;
        assert!((link - c[j]).abs() < 1e-3, "λ={l}: {link} vs {}", c[j]);
    }
}

/// Target values uniform on [0, 1], so `c_λ = 1 − λ`; replicas give the
/// moments of `Q`.
#[test]
fn q_moments_match_replicas() {
    let grid = uniform_grid(101);
    let c: Vec<f64> = grid.iter().map(|l| 1.0 - l).collect();
    let n = 50;
    let reps = 20_000u64;
    let qs: Vec<f64> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let lv = LambdaValues::new(uniform_values(100 + r, n)).unwrap();
            q_statistic(&grid, &credibility_estimate(&lv, &grid).0, &c).unwrap()
        })
        .collect();
    let k = reps as f64;
    let mean = qs.iter().sum::<f64>() / k;
    let var = qs.iter().map(|q| (q - mean).powi(2)).sum::<f64>() / (k - 1.0);
    let m4 = qs.iter().map(|q| (q - mean).powi(4)).sum::<f64>() / k;
    let want = expected_q(&grid, &c, n as u64, 0.0).unwrap();
    assert!((mean - want.mean).abs() < 4.0 * (var / k).sqrt(), "E[Q] {mean} vs {}", want.mean);
    let se_var = ((m4 - var * var) / k).sqrt();
    assert!((var - want.variance).abs() < 4.0 * se_var, "Var[Q] {var} ± {se_var} vs {}", want.variance);
}

/// λ uniform on [0, 1] under the reference measure: `c_λ = 1 − λ²` and the
/// leading bias is `(4/3)(λ³ − λ²)/N`.
#[test]
fn reference_bias_matches_leading_term() {
    let grid = vec![0.3, 0.5, 0.7];
    let n_ufm = 100;
    let reps = 100_000u64;
    let sums: Vec<f64> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let lv = LambdaValues::new(uniform_values(1_000_000 + r, n_ufm)).unwrap();
            credibility_from_size(&lv, &grid).unwrap().iter().zip(&grid).map(|(c, l)| c - (1.0 - l * l)).sum::<f64>()
        })
        .collect();
    let k = reps as f64;
    let mean = sums.iter().sum::<f64>() / k;
    let se = (sums.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (k - 1.0) / k).sqrt();
    let analytic: f64 = grid.iter().map(|l| 4.0 / 3.0 * (l * l * l - l * l) / n_ufm as f64).sum();
    let big = LambdaValues::new(uniform_values(7, 1_000_000)).unwrap();
    let lead: f64 = uniform_bias_leading(&big, &grid, n_ufm as u64).unwrap().iter().sum();
    assert!(mean < 0.0);
    assert!((lead - analytic).abs() < 0.02 * analytic.abs());
    assert!((mean - lead).abs() < 4.0 * se + 0.1 * lead.abs(), "{mean} ± {se} vs {lead}");
}

proptest! {
    #[test]
    fn curves_are_monotone_and_ordered(vals in prop::collection::vec(0.0f64..=1.0, 1..300), target in prop::collection::vec(0.0f64..=1.0, 1..100)) {
        prop_assume!(vals.iter().any(|v| *v > 0.0));
        let grid = uniform_grid(21);
        let curve = CredibilityCurve::new(grid, &LambdaValues::new(vals).unwrap(), Some(&LambdaValues::new(target).unwrap())).unwrap();
        for w in curve.s.windows(2) {
            prop_assert!(w[1] <= w[0]);
        }
        for w in curve.c_ref.windows(2) {
            prop_assert!(w[1] <= w[0]);
        }
        for (c, s) in curve.c_ref.iter().zip(&curve.s) {
            prop_assert!(*c >= *s - 1e-12);
            prop_assert!((0.0..=1.0).contains(c) && (0.0..=1.0).contains(s));
        }
        let stat = curve.q_stat(0.0).unwrap();
        prop_assert!(stat.q >= 0.0 && stat.var_q >= 0.0);
    }
}
