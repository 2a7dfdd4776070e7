//! Acceptance gate. Every test prints one `ACCEPTANCE PASS|FAIL` line and
//! asserts the same condition at the stated tolerance.

mod common;

use std::time::Instant;

use common::{fd_hessian, qubit_target, BallLambda, report, two_qubit_target, two_sample_chi2, SEED, TWO_QUBIT_COUNTS};
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use wishart_states::hermitian::{hs_volume, BlochVector, HermitianMatrix, TracelessBasis};
use wishart_states::proposal::{
    covariance_for_peak, fwhm_longitudinal, shape_matrix_g, ProposalSampler, ProposalSpec, SplitMode,
};
use wishart_states::rejection::{LogDensity, StreamingRejection};
use wishart_states::rng::{derive_seed, RngStream};
use wishart_states::stats::{chi_square_test, histogram, ks_statistic};
use wishart_states::target::{ml_estimator, shape_matrix_f, unconstrained_peak, Counts, MlOptions, Pom, TargetSpec};
use wishart_states::verify::{
    credibility_estimate, credibility_from_size, expected_q, integral_c_one_minus_c, q_statistic, trapezoid,
    uniform_bias_leading, uniform_grid, LambdaValues,
};
use wishart_states::wishart::{
    log_wishart_density, sample_uniform_state, sample_wishart_state, sigma_z_family, theta_for_peak, QubitMarginals,
};
use wishart_states::WishartParams;

fn uniform_sampler(m: usize, label: &str, total: u64) -> ProposalSampler {
    let spec = ProposalSpec::pure_wishart(WishartParams::uniform(m).unwrap());
    ProposalSampler::new(spec, derive_seed(SEED, label), total).unwrap()
}

fn centered(m: usize, n: usize, kappa: f64) -> ProposalSpec {
    ProposalSpec::new(WishartParams::new(n, HermitianMatrix::identity(m)).unwrap(), HermitianMatrix::zeros(m), kappa).unwrap()
}

fn p_acc(spec: ProposalSpec, target: &dyn LogDensity, total: u64) -> f64 {
    let sampler = ProposalSampler::new(spec, derive_seed(SEED, "proposal"), total).unwrap();
    let run = StreamingRejection { keep_states: false, ..Default::default() }
        .run(&sampler, target, derive_seed(SEED, "accept"))
        .unwrap();
    run.report.p_acc
}

fn within_rel(x: f64, want: f64, rel: f64) -> bool {
    (x / want - 1.0).abs() <= rel
}

#[test]
fn uniform_sampler_correctness() {
    let t0 = Instant::now();
    let n = 100_000;
    let sample = uniform_sampler(2, "uniform", n).range(0, n);
    let radii: Vec<f64> = sample.states.iter().map(|s| BlochVector::from_matrix(s).unwrap().norm()).collect();
    let ks = ks_statistic(&radii, |r| r.powi(3));

    let theta = theta_for_peak(2, 5, 0.8).unwrap();
    let g = WishartParams::new(5, sigma_z_family(2, theta).unwrap()).unwrap();
    let v = hs_volume(2).unwrap();
    let w: Vec<f64> = sample.states.iter().map(|s| log_wishart_density(s, &g).exp() * v).collect();
    let mean = w.iter().sum::<f64>() / n as f64;
    let var = w.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let se = (var / n as f64).sqrt();
    let secs = t0.elapsed().as_secs_f64();

    let pass = ks < 0.01 && (mean - 1.0).abs() <= 3.0 * se && secs < 10.0;
    report(
        "uniform-sampler",
        pass,
        &format!("KS {ks:.5} (< 0.01), normalization {mean:.5} ± {se:.5} (1 within 3 SE), {secs:.1} s"),
    );
    assert!(pass);
}

#[test]
fn qubit_wishart_analytics() {
    let t0 = Instant::now();
    let theta = theta_for_peak(2, 5, 0.8).unwrap();
    let sigma = covariance_for_peak(&BlochVector::new(0.0, 0.0, 0.8).to_matrix(), 5).unwrap();
    let theta_cross = 0.5 * (sigma.get(0, 0).re / sigma.get(1, 1).re).ln();
    let theta_ok = (theta - 0.76660).abs() <= 1e-5 && (theta - theta_cross).abs() <= 1e-12;

    let marg = QubitMarginals::new(5, theta).unwrap();
    let mode = marg.mode_z();
    let mode_ok = (mode - 0.7223).abs() <= 5e-4;

    let n = 100_000u64;
    let params = WishartParams::new(5, sigma_z_family(2, theta).unwrap()).unwrap();
    let seed = derive_seed(SEED, "z-histogram");
    let zs: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let s = sample_wishart_state(&params, &mut RngStream::new(seed, i).rng());
            BlochVector::from_matrix(&s).unwrap().z
        })
        .collect();
    let obs = histogram(zs, -1.0, 0.04, 50);
    let expected: Vec<f64> = (0..50)
        .map(|b| {
            let a = -1.0 + 0.04 * b as f64;
            n as f64 * marg.prob_z(a, a + 0.04).unwrap()
        })
        .collect();
    let chi = chi_square_test(&obs, &expected, 5.0).unwrap();
    let secs = t0.elapsed().as_secs_f64();

    let pass = theta_ok && mode_ok && chi.p_value > 0.01 && secs < 30.0;
    report(
        "qubit-wishart-analytics",
        pass,
        &format!(
            "theta {theta:.6} (0.76660 ± 1e-5; covariance cross-check {theta_cross:.6}), z-mode {mode:.5} (0.7223 ± 5e-4), \
             z-histogram chi2 {:.1} on {} dof p = {:.3} (> 0.01), {secs:.1} s",
            chi.statistic, chi.dof, chi.p_value
        ),
    );
    assert!(pass);
}

#[test]
fn qubit_acceptance_rates() {
    let t0 = Instant::now();
    let n = 100_000;
    let centred = qubit_target([25.0; 4]);
    let a = p_acc(centered(2, 14, 0.1), &centred, n);
    let b = p_acc(centered(2, 18, 0.1), &centred, n);
    let skewed = qubit_target([10.0, 20.0, 25.0, 45.0]);
    let ml = ml_estimator(&skewed, &MlOptions::default()).unwrap();
    let c = p_acc(ProposalSpec::from_mixing(&ml.rho_ml, 13, 0.0, 1.0, 0.2).unwrap(), &skewed, n);
    let secs = t0.elapsed().as_secs_f64();

    let pass = (a - 0.608).abs() <= 0.01 && (b - 0.33).abs() <= 0.01 && (c - 0.286).abs() <= 0.01 && secs < 60.0;
    report(
        "qubit-acceptance-rates",
        pass,
        &format!("n=14: {a:.4} (0.608 ± 0.01), n=18: {b:.4} (0.33 ± 0.01), shifted n=13: {c:.4} (0.286 ± 0.01), {secs:.1} s"),
    );
    assert!(pass);
}

#[test]
fn ml_estimator_values() {
    let t0 = Instant::now();
    let q = ml_estimator(&qubit_target([10.0, 20.0, 25.0, 45.0]), &MlOptions::default()).unwrap();
    let len = BlochVector::from_matrix(&q.rho_ml).unwrap().norm();
    let two = ml_estimator(&two_qubit_target(&TWO_QUBIT_COUNTS), &MlOptions::default()).unwrap();
    let want = [0.5033, 0.3377, 0.1589, 0.0];
    let eig_ok = two.eigenvalues.iter().zip(&want).all(|(a, b)| (a - b).abs() <= 5e-4);
    let secs = t0.elapsed().as_secs_f64();

    let pass = (len - 0.8832).abs() <= 5e-4 && eig_ok && secs < 10.0;
    report(
        "ml-estimator",
        pass,
        &format!(
            "qubit Bloch length {len:.5} (0.8832 ± 5e-4), two-qubit eigenvalues {:.5?} ({want:?} ± 5e-4), {secs:.1} s",
            two.eigenvalues
        ),
    );
    assert!(pass);
}

#[test]
fn two_qubit_acceptance_rates() {
    let t0 = Instant::now();
    let n = 10_000_000;
    let runs = [
        ("nu=10 W(6,1) 20%", 10.0, Some((6, 0.8)), 0.0048),
        ("nu=20 W(8,1) 50%", 20.0, Some((8, 0.5)), 0.00091),
        ("nu=100 W(35,1) 90%", 100.0, Some((35, 0.1)), 0.0064),
        ("nu=10 uniform", 10.0, None, 5.4e-4),
        ("nu=20 uniform", 20.0, None, 2.3e-5),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (label, nu, wishart, want) in runs {
        let target = two_qubit_target(&[nu; 16]);
        let spec = match wishart {
            Some((cols, kappa)) => centered(4, cols, kappa),
            None => ProposalSpec::pure_wishart(WishartParams::uniform(4).unwrap()),
        };
        let got = p_acc(spec, &target, n);
        pass &= within_rel(got, want, 0.2);
        parts.push(format!("{label}: {got:.3e} ({want:.1e} ± 20%)"));
    }
    let secs = t0.elapsed().as_secs_f64();
    pass &= secs < 1800.0;
    report("two-qubit-acceptance", pass, &format!("N = {n}; {}; {secs:.1} s", parts.join(", ")));
    assert!(pass);
}

#[test]
fn non_centred_two_qubit() {
    let t0 = Instant::now();
    let target = two_qubit_target(&TWO_QUBIT_COUNTS);
    let ml = ml_estimator(&target, &MlOptions::default()).unwrap();
    let spec = ProposalSpec::from_mixing(&ml.rho_ml, 5, 0.75, 0.15, 0.6).unwrap();
    let got = p_acc(spec, &target, 1_000_000);
    let secs = t0.elapsed().as_secs_f64();
    let pass = got > 0.005 && secs < 300.0;
    report("non-centred-two-qubit", pass, &format!("P_acc {got:.5} (> 0.005) at 1e6 proposals, {secs:.1} s"));
    assert!(pass);
}

#[test]
fn fwhm_approximation() {
    let t0 = Instant::now();
    let mut worst = (0.0f64, 0.0f64);
    let mut pass = true;
    for m in [2usize, 4] {
        let n = m + 16 / m + 1;
        for i in 1..=19 {
            let z = 0.05 * i as f64;
            let e = fwhm_longitudinal(m, n, z).unwrap().relative_error();
            pass &= (-0.04..=0.02).contains(&e);
            worst = (worst.0.min(e), worst.1.max(e));
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    pass &= secs < 60.0;
    report(
        "fwhm-approximation",
        pass,
        &format!("relative error range [{:.4}, {:.4}] (inside [-0.04, 0.02]), {secs:.1} s", worst.0, worst.1),
    );
    assert!(pass);
}

fn hessian_rel_error(shape: &DMatrix<f64>, fd: &[Vec<f64>]) -> f64 {
    let scale = shape.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let mut err = 0.0f64;
    for (l, row) in fd.iter().enumerate() {
        for (k, v) in row.iter().enumerate() {
            err = err.max((shape[(l, k)] + v).abs());
        }
    }
    err / scale
}

fn full_rank_state(m: usize) -> HermitianMatrix {
    let mut rho = HermitianMatrix::from_diagonal(&(0..m).map(|j| (m - j) as f64).collect::<Vec<_>>());
    for j in 0..m - 1 {
        rho.set(j, j + 1, Complex64::new(0.3, -0.2 * j as f64));
    }
    rho.scaled(1.0 / rho.trace())
}

#[test]
fn hessian_oracles() {
    let mut worst = 0.0f64;
    let mut parts = Vec::new();
    for (m, n) in [(2usize, 5usize), (4, 8)] {
        let basis = TracelessBasis::generalized_pauli(m).unwrap();
        let peak = full_rank_state(m);
        let params = WishartParams::new(n, covariance_for_peak(&peak, n).unwrap()).unwrap();
        let g = shape_matrix_g(&peak, n, &basis).unwrap();
        let eg = hessian_rel_error(g.entries(), &fd_hessian(|r| log_wishart_density(r, &params), &peak, &basis, 1e-4));

        let target = if m == 2 {
            qubit_target([10.0, 20.0, 25.0, 45.0])
        } else {
            let pom = Pom::tetra_power(2).unwrap();
            let p = pom.born_probabilities(&peak).unwrap();
            TargetSpec::new(pom, Counts::new(p.iter().map(|x| 1000.0 * x).collect()).unwrap()).unwrap()
        };
        let rho_hat = unconstrained_peak(&target, &basis).unwrap();
        let f = shape_matrix_f(&target, &rho_hat, &basis).unwrap();
        let ef = hessian_rel_error(f.entries(), &fd_hessian(|r| target.log_likelihood(r), &rho_hat, &basis, 1e-4));
        worst = worst.max(eg).max(ef);
        parts.push(format!("m={m}: G {eg:.2e}, F {ef:.2e}"));
    }
    let pass = worst <= 1e-3;
    report("hessian-oracles", pass, &format!("{} (each <= 1e-3)", parts.join(", ")));
    assert!(pass);
}

#[test]
fn verification_statistics() {
    let t0 = Instant::now();
    let nu = [10.0, 20.0, 25.0, 45.0];
    let target = qubit_target(nu);
    let ml = ml_estimator(&target, &MlOptions::default()).unwrap();
    let log_max = target.log_likelihood(&ml.rho_ml);
    let lambda_of = |s: &HermitianMatrix| (target.log_likelihood(s) - log_max).exp();

    // Reference curve from 10^6 uniform states.
    let n_ufm = 1_000_000;
    let uni = uniform_sampler(2, "uniform", n_ufm).range(0, n_ufm);
    let uniform = LambdaValues::new(uni.states.iter().map(lambda_of).collect()).unwrap();
    drop(uni);
    let fine = uniform_grid(1001);
    let integral = integral_c_one_minus_c(&fine, &credibility_from_size(&uniform, &fine).unwrap()).unwrap();
    let integral_ok = (integral - 0.15567).abs() <= 0.002;

    // Quadrature truth on the Bloch ball.
    let ball = BallLambda::new(nu, log_max);
    let (mu, c_true) = ball.quadrature(280, 100);
    let truth = integral_c_one_minus_c(&uniform_grid(101), &c_true).unwrap();

    // Q over disjoint replicas cut from one long target sample; the reference
    // error term is the realized ∫(c_ref − c)².
    let grid = uniform_grid(101);
    let c_ref = credibility_from_size(&uniform, &grid).unwrap();
    let ref_err: Vec<f64> = c_ref.iter().zip(&c_true).map(|(a, b)| (a - b) * (a - b)).collect();
    let ref_sq = trapezoid(&grid, &ref_err).unwrap();
    let lead = uniform_bias_leading(&uniform, &grid, n_ufm).unwrap();
    let lead_sq = trapezoid(&grid, &lead.iter().map(|b| b * b).collect::<Vec<_>>()).unwrap();
    let sizes = [100usize, 1000, 10_000];
    let replicas = 200;
    let needed: usize = sizes.iter().map(|s| s * replicas).sum();
    let spec = ProposalSpec::from_mixing(&ml.rho_ml, 13, 0.0, 1.0, 0.2).unwrap().with_split_mode(SplitMode::Bernoulli);
    let total = (needed as f64 / 0.27) as u64;
    let sampler = ProposalSampler::new(spec, derive_seed(SEED, "q-proposal"), total).unwrap();
    let run = StreamingRejection { keep_states: false, ..Default::default() }
        .run(&sampler, &target, derive_seed(SEED, "q-accept"))
        .unwrap();
    assert!(run.sample.indices.len() >= needed, "only {} accepted", run.sample.indices.len());
    let lambdas: Vec<f64> = run.sample.indices[..needed].par_iter().map(|&i| lambda_of(&sampler.entry(i).state)).collect();

    let mut q_ok = true;
    let mut q_parts = Vec::new();
    let mut offset = 0;
    for &size in &sizes {
        let nq: Vec<f64> = (0..replicas)
            .map(|r| {
                let chunk = &lambdas[offset + r * size..offset + (r + 1) * size];
                let (c_hat, _) = credibility_estimate(&LambdaValues::new(chunk.to_vec()).unwrap(), &grid);
                size as f64 * q_statistic(&grid, &c_hat, &c_ref).unwrap()
            })
            .collect();
        offset += replicas * size;
        let mean = nq.iter().sum::<f64>() / replicas as f64;
        let sd = (nq.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (replicas - 1) as f64).sqrt();
        let se = sd / (replicas as f64).sqrt();
        let want = size as f64 * expected_q(&grid, &c_true, size as u64, ref_sq).unwrap().mean;
        q_ok &= (mean - want).abs() <= 2.0 * se;
        q_parts.push(format!("N={size}: N*Q {mean:.4} ± {se:.4} vs {want:.4}"));
    }

    // Bias of the uniform-sample credibility against a quadrature truth,
    // through the control variate (A − cB)(μ − B)/(Bμ), whose mean is the bias.
    let bias_grid: Vec<f64> = (1..10).map(|i| 0.1 * i as f64).collect();
    let c_any = credibility_from_size(&uniform, &bias_grid).unwrap();
    let bias_replicas = 4000u64;
    let ns = [400usize, 800, 1600, 3200];
    let mut biases = Vec::new();
    let mut bias_parts = Vec::new();
    for &nb in &ns {
        let seed = derive_seed(SEED, &format!("bias-{nb}"));
        let d: Vec<f64> = (0..bias_replicas)
            .into_par_iter()
            .map(|r| {
                let mut rng = RngStream::new(seed, r).rng();
                let ls: Vec<f64> = (0..nb).map(|_| lambda_of(&sample_uniform_state(2, &mut rng).unwrap())).collect();
                let b = ls.iter().sum::<f64>() / nb as f64;
                bias_grid
                    .iter()
                    .zip(&c_any)
                    .map(|(&l0, &c)| {
                        let a = ls.iter().filter(|&&l| l > l0).sum::<f64>() / nb as f64;
                        (a - c * b) * (mu - b) / (b * mu)
                    })
                    .sum::<f64>()
            })
            .collect();
        let mean = d.iter().sum::<f64>() / bias_replicas as f64;
        let sd = (d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (bias_replicas - 1) as f64).sqrt();
        biases.push(mean);
        bias_parts.push(format!("{nb}: {mean:.5} ± {:.5}", sd / (bias_replicas as f64).sqrt()));
    }
    let negative = biases.iter().all(|b| *b < 0.0);
    let slope = if negative {
        let xs: Vec<f64> = ns.iter().map(|n| (*n as f64).ln()).collect();
        let ys: Vec<f64> = biases.iter().map(|b| (-b).ln()).collect();
        let (mx, my) = (xs.iter().sum::<f64>() / 4.0, ys.iter().sum::<f64>() / 4.0);
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
        sxy / sxx
    } else {
        f64::NAN
    };
    let bias_ok = negative && (slope + 1.0).abs() <= 0.15;
    let secs = t0.elapsed().as_secs_f64();

    let pass = integral_ok && q_ok && bias_ok && secs < 1200.0;
    report(
        "verification-statistics",
        pass,
        &format!(
            "integral c(1-c) {integral:.5} (0.15567 ± 0.002; quadrature {truth:.5}); reference error {ref_sq:.2e} \
             (squared leading bias {lead_sq:.2e}); {} (each within 2 SE); summed bias {} slope {slope:.3} (-1 ± 0.15); {secs:.1} s",
            q_parts.join(", "),
            bias_parts.join(", ")
        ),
    );
    assert!(pass);
}

fn random_unit_trace(m: usize, seed: u64) -> HermitianMatrix {
    sample_uniform_state(m, &mut RngStream::new(seed, 0).rng()).unwrap().into_matrix()
}

fn purity(rho: &HermitianMatrix) -> f64 {
    rho.trace_product(rho)
}

#[test]
fn higher_dimension_properties() {
    let t0 = Instant::now();
    let m = 8;
    let seed = derive_seed(SEED, "m8");

    // Σ → λΣ and commuting unitaries.
    let mut scale_err = 0.0f64;
    let mut unitary_err = 0.0f64;
    for t in 0..50u64 {
        let mut rng = RngStream::new(seed, 1_000 + t).rng();
        let sigma = &sample_wishart_state(&WishartParams::new(12, HermitianMatrix::identity(m)).unwrap(), &mut rng).into_matrix()
            + &HermitianMatrix::identity(m).scaled(0.05);
        let rho = random_unit_trace(m, seed ^ t);
        let n = 10;
        let a = log_wishart_density(&rho, &WishartParams::new(n, sigma.clone()).unwrap());
        let b = log_wishart_density(&rho, &WishartParams::new(n, sigma.scaled(3.7)).unwrap());
        scale_err = scale_err.max((a - b).abs());

        // Σ with doubly degenerate eigenvalues commutes with block-diagonal U.
        let levels: Vec<f64> = (0..m).map(|j| 0.5 + (j / 2) as f64).collect();
        let sigma_d = HermitianMatrix::from_diagonal(&levels);
        let mut u = DMatrix::<Complex64>::zeros(m, m);
        for blk in 0..m / 2 {
            let (th, ph, ch): (f64, f64, f64) = (rng.random(), rng.random::<f64>() * 6.0, rng.random::<f64>() * 6.0);
            let (c, s) = (th.cos(), th.sin());
            let (j, k) = (2 * blk, 2 * blk + 1);
            u[(j, j)] = Complex64::from_polar(c, ph);
            u[(j, k)] = Complex64::from_polar(s, ch);
            u[(k, j)] = Complex64::from_polar(-s, -ch);
            u[(k, k)] = Complex64::from_polar(c, -ph);
        }
        let pd = WishartParams::new(n, sigma_d).unwrap();
        let e = (log_wishart_density(&rho, &pd) - log_wishart_density(&rho.congruence(&u), &pd)).abs();
        unitary_err = unitary_err.max(e);
    }
    let invariance_ok = scale_err <= 1e-10 && unitary_err <= 1e-10;

    // Mean of uniform states.
    let n_mean = 100_000u64;
    let sample = uniform_sampler(m, "m8-uniform", n_mean).range(0, n_mean);
    let mut worst_z = 0.0f64;
    for j in 0..m {
        for k in j..m {
            let parts: Vec<[f64; 2]> = sample
                .states
                .iter()
                .map(|s| {
                    let v = s.get(j, k);
                    [v.re, v.im]
                })
                .collect();
            for comp in 0..2 {
                if j == k && comp == 1 {
                    continue;
                }
                let want = if j == k && comp == 0 { 1.0 / m as f64 } else { 0.0 };
                let xs: Vec<f64> = parts.iter().map(|p| p[comp]).collect();
                let mean = xs.iter().sum::<f64>() / n_mean as f64;
                let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n_mean - 1) as f64).sqrt();
                worst_z = worst_z.max((mean - want).abs() / (sd / (n_mean as f64).sqrt()));
            }
        }
    }
    drop(sample);
    let mean_ok = worst_z < 4.0;

    // Rejection against an exact-bound oracle: the likelihood of 64 single
    // counts peaks at p_k = 1/64, reached by the maximally mixed state.
    let target = TargetSpec::new(Pom::tetra_power(3).unwrap(), Counts::new(vec![1.0; 64]).unwrap()).unwrap();
    let log_l_max = 64.0 * (1.0f64 / 64.0).ln();
    let oracle_seed = derive_seed(SEED, "m8-oracle");
    let oracle: Vec<f64> = (0..2_000_000u64)
        .into_par_iter()
        .filter_map(|i| {
            let mut rng = RngStream::new(oracle_seed, i).rng();
            let s = sample_uniform_state(m, &mut rng).unwrap().into_matrix();
            let u: f64 = rng.random();
            (u < (target.log_likelihood(&s) - log_l_max).exp()).then(|| purity(&s))
        })
        .collect();
    let oracle = &oracle[..oracle.len().min(10_000)];
    let mut edges: Vec<f64> = oracle.to_vec();
    edges.sort_by(f64::total_cmp);
    let cuts: Vec<f64> = (1..10).map(|d| edges[d * edges.len() / 10]).collect();
    let bin = |p: f64| cuts.iter().filter(|c| p >= **c).count();

    let sampler = ProposalSampler::new(centered(m, 10, 0.9), derive_seed(SEED, "m8-proposal"), 400_000).unwrap();
    let run = StreamingRejection::default().run(&sampler, &target, derive_seed(SEED, "m8-accept")).unwrap();
    let mut a = vec![0u64; 10];
    let mut b = vec![0u64; 10];
    for s in &run.sample.states {
        a[bin(purity(s))] += 1;
    }
    for p in oracle {
        b[bin(*p)] += 1;
    }
    let (stat, dof, p) = two_sample_chi2(&a, &b);
    let purity_ok = oracle.len() == 10_000 && run.sample.len() >= 1000 && p > 0.01;
    let secs = t0.elapsed().as_secs_f64();

    let pass = invariance_ok && mean_ok && purity_ok;
    report(
        "higher-dimension-properties",
        pass,
        &format!(
            "scale {scale_err:.1e}, unitary {unitary_err:.1e} (<= 1e-10); uniform mean worst |z| {worst_z:.2} (< 4); \
             purity chi2 {stat:.1} on {dof} dof p = {p:.3} with {} accepted vs {} oracle; {secs:.1} s",
            run.sample.len(),
            oracle.len()
        ),
    );
    assert!(pass);
}
