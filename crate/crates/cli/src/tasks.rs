use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};
use wishart_states::chunk::SampleChunk;
use wishart_states::hermitian::{BlochVector, HermitianMatrix, TracelessBasis};
use wishart_states::proposal::{covariance_for_peak, fwhm_longitudinal, ProposalSampler, ProposalSpec, SplitMode};
use wishart_states::rejection::{
    acceptance_scan, accepted_indices, bloch_diameter, line_slice_acceptance, log_ratios, LogDensity, ScanPoint,
};
use wishart_states::rng::{derive_seed, RngStream};
use wishart_states::stats::{binomial_se, chi_square_test, histogram};
use wishart_states::target::{ml_estimator, Counts, MlOptions, MlResult, Pom, TargetSpec};
use wishart_states::verify::{trapezoid, uniform_bias_leading, uniform_grid, CredibilityCurve, LambdaValues};
use wishart_states::wishart::{
    sample_wishart_state, sigma_z_family, sigma_z_tensor_diag, theta_for_peak, QubitMarginals, WishartParams,
};

use crate::config::{RunConfig, Split, Task};
use crate::error::CliError;
use crate::output::{chunk_files, peak_rss_kb, sha256_file, sha256_json, Artifacts, FileDigest};

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    task: Task,
    seed: u64,
    threads: usize,
    config: &'a RunConfig,
    config_sha256: String,
    inputs: Vec<FileDigest>,
    outputs: Vec<FileDigest>,
    summary: Value,
    wall_time_s: f64,
    peak_rss_kb: Option<u64>,
}

/// Input files read by a run, with their digests.
#[derive(Default)]
struct Inputs(Vec<FileDigest>);

impl Inputs {
    fn record(&mut self, path: &Path) -> Result<(), CliError> {
        let bytes = std::fs::metadata(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?.len();
        self.0.push(FileDigest { path: path.display().to_string(), sha256: sha256_file(path)?, bytes });
        Ok(())
    }
}

/// Runs one configured task and writes its artifacts and manifest.
pub fn run(cfg: &RunConfig, config_file: Option<&Path>) -> Result<(), CliError> {
    let start = Instant::now();
    let mut inputs = Inputs::default();
    if let Some(p) = config_file {
        inputs.record(p)?;
    }
    let mut out = Artifacts::new(&cfg.out)?;
    let summary = match cfg.task {
        Task::GenUniform => gen_uniform(cfg, &mut out)?,
        Task::GenProposal => gen_proposal(cfg, &mut inputs, &mut out)?,
        Task::Reject => reject(cfg, &mut inputs, &mut out)?,
        Task::Verify => verify(cfg, &mut inputs, &mut out)?,
        Task::Ml => ml(cfg, &mut inputs, &mut out)?,
        Task::AcceptanceScan => scan(cfg, &mut inputs, &mut out)?,
        Task::Slice => slice(cfg, &mut inputs, &mut out)?,
        Task::Histogram => histogram_task(cfg, &mut inputs, &mut out)?,
        Task::Fwhm => fwhm(cfg, &mut out)?,
        Task::ShiftFraction => shift_fraction(cfg, &mut out)?,
    };
    let manifest = Manifest {
        tool: "qws",
        version: env!("CARGO_PKG_VERSION"),
        task: cfg.task,
        seed: cfg.seed,
        threads: rayon::current_num_threads(),
        config: cfg,
        config_sha256: sha256_json(cfg),
        inputs: inputs.0,
        outputs: out.digests()?,
        summary,
        wall_time_s: start.elapsed().as_secs_f64(),
        peak_rss_kb: peak_rss_kb(),
    };
    out.write_json("manifest.json", &manifest)?;
    out.commit();
    Ok(())
}

fn load_target(cfg: &RunConfig, inputs: &mut Inputs) -> Result<TargetSpec, CliError> {
    let counts = match (&cfg.counts, &cfg.counts_file) {
        (Some(c), _) => Counts::new(c.clone()),
        (None, Some(p)) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::config("target.counts_file", format!("{}: {e}", p.display())))?;
            inputs.record(p)?;
            text.parse::<Counts>()
        }
        (None, None) => return Err(CliError::config("target.counts", "no counts given")),
    }
    .map_err(|e| CliError::config("target.counts", e.to_string()))?;
    let pom = match (&cfg.pom_file, &cfg.pom) {
        (Some(p), _) => {
            let chunk = SampleChunk::read_file(p).map_err(|e| CliError::config("target.pom_file", e.to_string()))?;
            inputs.record(p)?;
            Pom::new(chunk.states).map_err(|e| CliError::config("target.pom_file", e.to_string()))?
        }
        (None, Some(name)) => Pom::from_name(name).map_err(|e| CliError::config("target.pom", e.to_string()))?,
        (None, None) => default_pom(counts.len())?,
    };
    if let Some(m) = cfg.m {
        if pom.dim() != m {
            return Err(CliError::config("state.m", format!("m = {m} but the POM acts on dimension {}", pom.dim())));
        }
    }
    TargetSpec::new(pom, counts).map_err(|e| CliError::config("target.counts", e.to_string()))
}

/// `tetra^k` when the number of counts is `4^k`.
fn default_pom(k_outcomes: usize) -> Result<Pom, CliError> {
    let mut k = 0;
    let mut n = 1;
    while n < k_outcomes {
        n *= 4;
        k += 1;
    }
    if n != k_outcomes || k == 0 {
        return Err(CliError::config("target.pom", format!("no default POM with {k_outcomes} outcomes; name one")));
    }
    Ok(Pom::tetra_power(k)?)
}

fn read_single_state(path: &Path, field: &str, inputs: &mut Inputs) -> Result<HermitianMatrix, CliError> {
    let chunk = SampleChunk::read_file(path).map_err(|e| CliError::config(field, e.to_string()))?;
    inputs.record(path)?;
    match <[HermitianMatrix; 1]>::try_from(chunk.states) {
        Ok([s]) => Ok(s),
        Err(v) => Err(CliError::config(field, format!("expected one matrix, found {}", v.len()))),
    }
}

fn mixed(m: usize) -> HermitianMatrix {
    HermitianMatrix::identity(m).scaled(1.0 / m as f64)
}

/// The proposal for the configured `n`, `κ`, `x1`, `x2` or shift file,
/// placed around `rho_ml` when a target is known and centred otherwise.
fn build_proposal(
    cfg: &RunConfig,
    m: usize,
    rho_ml: Option<&HermitianMatrix>,
    inputs: &mut Inputs,
) -> Result<ProposalSpec, CliError> {
    let n = cfg.n.ok_or_else(|| CliError::config("proposal.n", "missing"))?;
    let delta = match &cfg.delta_file {
        Some(p) => {
            let d = read_single_state(p, "proposal.delta_file", inputs)?;
            if d.dim() != m {
                return Err(CliError::config("proposal.delta_file", format!("shift has dimension {}, need {m}", d.dim())));
            }
            Some(d)
        }
        None => None,
    };
    let spec = match (rho_ml, delta) {
        (Some(rho), None) => ProposalSpec::from_mixing(rho, n, cfg.x1, cfg.x2, cfg.kappa)?,
        (Some(rho), Some(d)) => {
            let peak = &mixed(m) + &(rho - &mixed(m)).scaled(cfg.x1);
            ProposalSpec::new(WishartParams::new(n, covariance_for_peak(&peak, n)?)?, d, cfg.kappa)?
        }
        (None, d) => ProposalSpec::new(
            WishartParams::new(n, HermitianMatrix::identity(m))?,
            d.unwrap_or_else(|| HermitianMatrix::zeros(m)),
            cfg.kappa,
        )?,
    };
    Ok(spec.with_split_mode(match cfg.split {
        Split::Exact => SplitMode::ExactCount,
        Split::Bernoulli => SplitMode::Bernoulli,
    }))
}

#[derive(Serialize)]
struct MatrixRepr {
    diag: Vec<f64>,
    upper: Vec<[f64; 2]>,
}

fn matrix_repr(h: &HermitianMatrix) -> MatrixRepr {
    MatrixRepr { diag: h.diag().to_vec(), upper: h.upper().iter().map(|z| [z.re, z.im]).collect() }
}

fn proposal_digest(spec: &ProposalSpec) -> String {
    sha256_json(&json!({
        "n": spec.wishart().n(),
        "sigma": matrix_repr(spec.wishart().sigma()),
        "delta_rho": matrix_repr(spec.delta_rho()),
        "kappa": spec.kappa(),
        "split": format!("{:?}", spec.split_mode()),
    }))
}

fn target_digest(t: &TargetSpec) -> String {
    let effects: Vec<MatrixRepr> = t.pom().effects().iter().map(matrix_repr).collect();
    sha256_json(&json!({ "effects": effects, "counts": t.counts().values() }))
}

fn chunk_name(prefix: &str, k: usize) -> String {
    format!("{prefix}-{k:06}.qws")
}

/// Writes the whole proposal sample as chunk files.
fn write_sample_chunks(
    sampler: &ProposalSampler,
    chunk_size: u64,
    prefix: &str,
    out: &mut Artifacts,
) -> Result<(usize, u64), CliError> {
    let (mut start, mut k, mut n_phys) = (0, 0, 0u64);
    while start < sampler.total() {
        let end = (start + chunk_size).min(sampler.total());
        let s = sampler.range(start, end);
        n_phys += s.physical.iter().filter(|p| **p).count() as u64;
        out.write_chunk(&chunk_name(prefix, k), &SampleChunk::from_proposal(sampler.spec().dim(), s))?;
        start = end;
        k += 1;
    }
    Ok((k, n_phys))
}

fn gen_uniform(cfg: &RunConfig, out: &mut Artifacts) -> Result<Value, CliError> {
    let m = cfg.m.expect("validated");
    let seed = derive_seed(cfg.seed, "uniform");
    let sampler = ProposalSampler::new(ProposalSpec::pure_wishart(WishartParams::uniform(m)?), seed, cfg.total)?;
    let (chunks, _) = write_sample_chunks(&sampler, cfg.chunk_size, "uniform", out)?;
    Ok(json!({ "m": m, "N": cfg.total, "chunks": chunks, "stream_seed": seed }))
}

fn ml_of(target: &TargetSpec) -> Result<MlResult, CliError> {
    let ml = ml_estimator(target, &MlOptions::default())?;
    if !ml.converged {
        eprintln!("warning: maximum-likelihood iteration stopped after {} steps without converging", ml.iterations);
    }
    Ok(ml)
}

fn gen_proposal(cfg: &RunConfig, inputs: &mut Inputs, out: &mut Artifacts) -> Result<Value, CliError> {
    let has_target = cfg.counts.is_some() || cfg.counts_file.is_some();
    let target = if has_target { Some(load_target(cfg, inputs)?) } else { None };
    let m = target.as_ref().map(|t| t.dim()).or(cfg.m).expect("validated");
    let ml = target.as_ref().map(ml_of).transpose()?;
    let spec = build_proposal(cfg, m, ml.as_ref().map(|r| r.rho_ml.matrix()), inputs)?;
    let seed = derive_seed(cfg.seed, "proposal");
    let digest = proposal_digest(&spec);
    let sampler = ProposalSampler::new(spec, seed, cfg.total)?;
    let (chunks, n_phys) = write_sample_chunks(&sampler, cfg.chunk_size, "proposal", out)?;
    Ok(json!({
        "m": m,
        "N": cfg.total,
        "chunks": chunks,
        "physical_fraction": n_phys as f64 / cfg.total as f64,
        "stream_seed": seed,
        "proposal_sha256": digest,
    }))
}

#[derive(Clone, Copy, Debug, Serialize)]
struct ChunkLine {
    chunk: usize,
    first_index: u64,
    proposed: u64,
    accepted: u64,
}

struct RejectionOutcome {
    log_c: f64,
    accepted: u64,
    physical: u64,
    chunks: Vec<ChunkLine>,
}

/// Two passes over the proposal sample, one chunk in memory at a time.
/// Pass one stores every log-ratio in `ratio_file` and finds `log C`; pass
/// two replays the ratios, regenerates the accepted states from their
/// indices and hands them to `sink` chunk by chunk.
fn stream_rejection(
    sampler: &ProposalSampler,
    target: &dyn LogDensity,
    accept_seed: u64,
    chunk_size: u64,
    ratio_file: &Path,
    mut sink: impl FnMut(usize, Vec<HermitianMatrix>) -> Result<(), CliError>,
) -> Result<RejectionOutcome, CliError> {
    let total = sampler.total();
    let mut w = BufWriter::new(File::create(ratio_file)?);
    let (mut start, mut log_c, mut physical) = (0, f64::NEG_INFINITY, 0u64);
    while start < total {
        let end = (start + chunk_size).min(total);
        let s = sampler.range(start, end);
        physical += s.physical.iter().filter(|p| **p).count() as u64;
        for r in log_ratios(&s, target) {
            log_c = log_c.max(r);
            w.write_all(&r.to_le_bytes())?;
        }
        start = end;
    }
    w.flush()?;
    drop(w);
    if log_c == f64::NEG_INFINITY {
        return Err(CliError::Compute(wishart_states::Error::NoPhysicalEntries));
    }
    let mut r = BufReader::new(File::open(ratio_file)?);
    let (mut start, mut k, mut accepted) = (0, 0, 0);
    let mut chunks = Vec::new();
    let mut buf = Vec::new();
    while start < total {
        let end = (start + chunk_size).min(total);
        buf.resize(8 * (end - start) as usize, 0u8);
        r.read_exact(&mut buf)?;
        let ratios: Vec<f64> = buf.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes"))).collect();
        let idx = accepted_indices(&ratios, start, log_c, accept_seed);
        let states: Vec<HermitianMatrix> = idx.par_iter().map(|&i| sampler.entry(i).state).collect();
        accepted += idx.len() as u64;
        chunks.push(ChunkLine { chunk: k, first_index: start, proposed: end - start, accepted: idx.len() as u64 });
        sink(k, states)?;
        start = end;
        k += 1;
    }
    Ok(RejectionOutcome { log_c, accepted, physical, chunks })
}

fn reject(cfg: &RunConfig, inputs: &mut Inputs, out: &mut Artifacts) -> Result<Value, CliError> {
    let target = load_target(cfg, inputs)?;
    let m = target.dim();
    let ml = ml_of(&target)?;
    let spec = build_proposal(cfg, m, Some(ml.rho_ml.matrix()), inputs)?;
    let (pseed, aseed) = (derive_seed(cfg.seed, "proposal"), derive_seed(cfg.seed, "accept"));
    let (pdigest, tdigest) = (proposal_digest(&spec), target_digest(&target));
    let sampler = ProposalSampler::new(spec, pseed, cfg.total)?;
    let ratio_file = out.claim("log_ratios.f64");
    let res = stream_rejection(&sampler, &target, aseed, cfg.chunk_size, &ratio_file, |k, states| {
        if states.is_empty() {
            return Ok(());
        }
        out.write_chunk(&chunk_name("accepted", k), &SampleChunk::from_states(m, states))
    })?;
    let p_acc = res.accepted as f64 / cfg.total as f64;
    let summary = json!({
        "log_c": res.log_c,
        "accepted": res.accepted,
        "proposed": cfg.total,
        "p_acc": p_acc,
        "p_acc_se": binomial_se(p_acc, cfg.total),
        "physical_fraction": res.physical as f64 / cfg.total as f64,
        "proposal_seed": pseed,
        "accept_seed": aseed,
        "log_f_max": ml.log_f_max,
        "target_sha256": tdigest,
        "proposal_sha256": pdigest,
    });
    let mut lines = String::new();
    for c in &res.chunks {
        lines.push_str(&serde_json::to_string(c)?);
        lines.push('\n');
    }
    lines.push_str(&serde_json::to_string(&json!({ "summary": summary }))?);
    lines.push('\n');
    out.write_text("report.jsonl", &lines)?;
    Ok(summary)
}

fn lambdas_of(states: &[HermitianMatrix], target: &TargetSpec, log_f_max: f64) -> Vec<f64> {
    states.par_iter().map(|s| (target.log_density(s) - log_f_max).exp()).collect()
}

#[derive(Serialize)]
struct CurveRow {
    lambda: f64,
    s: f64,
    c_ref: f64,
    c_hat: f64,
    se: f64,
}

fn verify(cfg: &RunConfig, inputs: &mut Inputs, out: &mut Artifacts) -> Result<Value, CliError> {
    let target = load_target(cfg, inputs)?;
    let m = target.dim();
    let files = cfg.input.as_deref().map(chunk_files).transpose()?;
    let ml = ml_of(&target)?;
    let log_f_max = ml.log_f_max;

    let useed = derive_seed(cfg.seed, "uniform");
    let usampler = ProposalSampler::new(ProposalSpec::pure_wishart(WishartParams::uniform(m)?), useed, cfg.n_uniform)?;
    let mut lam_u = Vec::with_capacity(cfg.n_uniform as usize);
    let mut start = 0;
    while start < cfg.n_uniform {
        let end = (start + cfg.chunk_size).min(cfg.n_uniform);
        lam_u.extend(lambdas_of(&usampler.range(start, end).states, &target, log_f_max));
        start = end;
    }

    let mut lam_t = Vec::new();
    let mut rejection = Value::Null;
    match files {
        Some(files) => {
            for f in &files {
                let chunk = SampleChunk::read_file(f).map_err(|e| CliError::config("input", format!("{}: {e}", f.display())))?;
                if chunk.dim != m {
                    return Err(CliError::config("input", format!("{} holds dimension {}, target has {m}", f.display(), chunk.dim)));
                }
                inputs.record(f)?;
                lam_t.extend(lambdas_of(&chunk.states, &target, log_f_max));
            }
        }
        None => {
            let spec = build_proposal(cfg, m, Some(ml.rho_ml.matrix()), inputs)?;
            let (pseed, aseed) = (derive_seed(cfg.seed, "proposal"), derive_seed(cfg.seed, "accept"));
            let sampler = ProposalSampler::new(spec, pseed, cfg.total)?;
            let ratio_file = out.claim("verify_log_ratios.f64");
            let res = stream_rejection(&sampler, &target, aseed, cfg.chunk_size, &ratio_file, |_, states| {
                lam_t.extend(lambdas_of(&states, &target, log_f_max));
                Ok(())
            })?;
            out.discard(&ratio_file);
            rejection = json!({ "log_c": res.log_c, "accepted": res.accepted, "proposed": cfg.total });
        }
    }
    let lam_u = LambdaValues::new(lam_u)?;
    let lam_t = LambdaValues::new(lam_t)?;

    let curve = CredibilityCurve::new(cfg.lambda_grid.clone(), &lam_u, Some(&lam_t))?;
    let c_hat = curve.c_hat.as_ref().expect("target given");
    let se = curve.c_hat_se.as_ref().expect("target given");
    let rows: Vec<CurveRow> = (0..curve.grid.len())
        .map(|i| CurveRow { lambda: curve.grid[i], s: curve.s[i], c_ref: curve.c_ref[i], c_hat: c_hat[i], se: se[i] })
        .collect();
    out.write_csv("curves.csv", &rows)?;

    let dense = uniform_grid(cfg.q_grid_points);
    let bias = uniform_bias_leading(&lam_u, &dense, lam_u.len() as u64)?;
    let bias_sq = trapezoid(&dense, &bias.iter().map(|b| b * b).collect::<Vec<_>>())?;
    let stat = CredibilityCurve::new(dense, &lam_u, Some(&lam_t))?.q_stat(bias_sq)?;
    let sd = stat.var_q.sqrt();
    let q = json!({
        "q": stat.q,
        "expected_q": stat.expected_q,
        "var_q": stat.var_q,
        "sd_q": sd,
        "z": (stat.q - stat.expected_q) / sd,
        "verdict": stat.verdict,
        "reference_bias_sq": bias_sq,
        "n_ufm": lam_u.len(),
        "n_tgt": lam_t.len(),
        "log_f_max": log_f_max,
        "uniform_seed": useed,
        "rejection": rejection,
        "target_sha256": target_digest(&target),
    });
    out.write_json("q.json", &q)?;
    Ok(q)
}

fn ml(cfg: &RunConfig, inputs: &mut Inputs, out: &mut Artifacts) -> Result<Value, CliError> {
    let target = load_target(cfg, inputs)?;
    let r = ml_of(&target)?;
    let rho = r.rho_ml.matrix();
    let bloch = (rho.dim() == 2).then(|| BlochVector::from_matrix(rho)).transpose()?.map(|b| [b.x, b.y, b.z]);
    let v = json!({
        "m": rho.dim(),
        "log_f_max": r.log_f_max,
        "iterations": r.iterations,
        "converged": r.converged,
        "rank": r.rank,
        "eigenvalues": r.eigenvalues,
        "rho_ml": matrix_repr(rho),
        "bloch": bloch,
        "target_sha256": target_digest(&target),
    });
    out.write_json("ml.json", &v)?;
    out.write_chunk("rho_ml.qws", &SampleChunk::from_states(rho.dim(), vec![rho.clone()]))?;
    Ok(v)
}

#[derive(Serialize)]
struct ScanCsvRow {
    n: usize,
    kappa: f64,
    x1: f64,
    x2: f64,
    p_acc: f64,
    se: f64,
    physical_fraction: f64,
    best: bool,
}

fn scan(cfg: &RunConfig, inputs: &mut Inputs, out: &mut Artifacts) -> Result<Value, CliError> {
    let target = load_target(cfg, inputs)?;
    let ml = ml_of(&target)?;
    let mut points = Vec::new();
    for &n in &cfg.scan_n {
        for &kappa in &cfg.scan_kappa {
            for &x1 in &cfg.scan_x1 {
                for &x2 in &cfg.scan_x2 {
                    points.push(ScanPoint { n, kappa, x1, x2 });
                }
            }
        }
    }
    let (pseed, aseed) = (derive_seed(cfg.seed, "proposal"), derive_seed(cfg.seed, "accept"));
    let rows = acceptance_scan(&points, &target, ml.rho_ml.matrix(), cfg.total, pseed, aseed)?;
    let csv: Vec<ScanCsvRow> = rows
        .iter()
        .map(|r| ScanCsvRow {
            n: r.point.n,
            kappa: r.point.kappa,
            x1: r.point.x1,
            x2: r.point.x2,
            p_acc: r.p_acc,
            se: r.standard_error,
            physical_fraction: r.physical_fraction,
            best: r.best,
        })
        .collect();
    out.write_csv("scan.csv", &csv)?;
    let best = rows.iter().find(|r| r.best).expect("nonempty scan");
    Ok(json!({ "points": rows.len(), "best": best.point, "best_p_acc": best.p_acc, "N": cfg.total }))
}

#[derive(Serialize)]
struct SliceRow {
    direction: usize,
    t: f64,
    f: f64,
    g_envelope: f64,
}

fn slice(cfg: &RunConfig, inputs: &mut Inputs, out: &mut Artifacts) -> Result<Value, CliError> {
    let target = load_target(cfg, inputs)?;
    if target.dim() != 2 {
        return Err(CliError::config("task", "slice runs along Bloch-ball diameters and needs m = 2"));
    }
    let ml = ml_of(&target)?;
    let spec = build_proposal(cfg, 2, Some(ml.rho_ml.matrix()), inputs)?;
    let mut rows = Vec::new();
    let mut rates = Vec::new();
    for (k, d) in cfg.slice_directions.iter().enumerate() {
        let norm = d.iter().map(|x| x * x).sum::<f64>().sqrt();
        let e = [d[0] / norm, d[1] / norm, d[2] / norm];
        let line = bloch_diameter(e);
        let p_e = line_slice_acceptance(&target, &spec, &line, -1.0, 1.0)?;
        let ts: Vec<f64> = (0..cfg.slice_points).map(|i| -1.0 + 2.0 * i as f64 / (cfg.slice_points - 1) as f64).collect();
        let vals: Vec<(f64, f64)> = ts.iter().map(|&t| (target.log_density(&line(t)), spec.log_density(&line(t)))).collect();
        let f_top = vals.iter().map(|v| v.0).fold(f64::NEG_INFINITY, f64::max);
        let c_line = vals.iter().filter(|v| v.0 > f64::NEG_INFINITY).map(|v| v.0 - v.1).fold(f64::NEG_INFINITY, f64::max);
        for (t, (lf, lg)) in ts.iter().zip(&vals) {
            rows.push(SliceRow { direction: k, t: *t, f: (lf - f_top).exp(), g_envelope: (lg + c_line - f_top).exp() });
        }
        rates.push(json!({ "direction": k, "e": e, "p_e": p_e }));
    }
    out.write_csv("slice.csv", &rows)?;
    let v = json!({ "slices": rates, "proposal_sha256": proposal_digest(&spec) });
    out.write_json("slice.json", &v)?;
    Ok(v)
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Selector {
    X,
    Y,
    Z,
    Diag(usize),
    Re(usize, usize),
    Im(usize, usize),
    Coord(usize),
}

fn parse_selector(s: &str, m: usize) -> Result<Selector, CliError> {
    let bad = |msg: String| CliError::config("histogram.selector", msg);
    let idx = |t: &str, lim: usize| -> Result<usize, CliError> {
        let v: usize = t.trim().parse().map_err(|_| bad(format!("bad index {t:?}")))?;
        if v >= lim {
            return Err(bad(format!("index {v} out of range")));
        }
        Ok(v)
    };
    let s = s.trim();
    let sel = match s.split(':').collect::<Vec<_>>().as_slice() {
        ["x"] => Selector::X,
        ["y"] => Selector::Y,
        ["z"] => Selector::Z,
        ["diag", j] => Selector::Diag(idx(j, m)?),
        ["re", j, k] => Selector::Re(idx(j, m)?, idx(k, m)?),
        ["im", j, k] => Selector::Im(idx(j, m)?, idx(k, m)?),
        ["coord", l] => Selector::Coord(idx(l, m * m - 1)?),
        _ => return Err(bad(format!("unknown selector {s:?}; use x, y, z, diag:j, re:j:k, im:j:k or coord:l"))),
    };
    if matches!(sel, Selector::X | Selector::Y | Selector::Z) && m != 2 {
        return Err(bad(format!("Bloch selector {s:?} needs m = 2")));
    }
    Ok(sel)
}

fn select(sel: Selector, rho: &HermitianMatrix, basis: &TracelessBasis) -> f64 {
    match sel {
        Selector::X | Selector::Y | Selector::Z => {
            let b = BlochVector::from_matrix(rho).expect("qubit");
            match sel {
                Selector::X => b.x,
                Selector::Y => b.y,
                _ => b.z,
            }
        }
        Selector::Diag(j) => rho.diag()[j],
        Selector::Re(j, k) => rho.get(j, k).re,
        Selector::Im(j, k) => rho.get(j, k).im,
        Selector::Coord(l) => rho.trace_product(&basis.elements()[l]),
    }
}

#[derive(Serialize)]
struct HistRow {
    bin_lo: f64,
    bin_hi: f64,
    observed: u64,
    expected: Option<f64>,
}

fn histogram_task(cfg: &RunConfig, inputs: &mut Inputs, out: &mut Artifacts) -> Result<Value, CliError> {
    let m = cfg.m.expect("validated");
    let sel = parse_selector(cfg.selector.as_deref().unwrap_or(""), m)?;
    let basis = TracelessBasis::generalized_pauli(m)?;
    let n = cfg.n.unwrap_or(m);
    let theta = match cfg.z_peak {
        Some(z) => theta_for_peak(m, n, z)?,
        None => 0.0,
    };
    let mut values = Vec::new();
    match cfg.input.as_deref().map(chunk_files).transpose()? {
        Some(files) => {
            for f in &files {
                let chunk = SampleChunk::read_file(f).map_err(|e| CliError::config("input", format!("{}: {e}", f.display())))?;
                if chunk.dim != m {
                    return Err(CliError::config("input", format!("{} holds dimension {}, m = {m}", f.display(), chunk.dim)));
                }
                inputs.record(f)?;
                values.extend(chunk.states.par_iter().map(|s| select(sel, s, &basis)).collect::<Vec<_>>());
            }
        }
        None => {
            let sigma = if theta == 0.0 { HermitianMatrix::identity(m) } else { sigma_z_family(m, theta)? };
            let params = WishartParams::new(n, sigma)?;
            let seed = derive_seed(cfg.seed, "histogram");
            let mut start = 0;
            while start < cfg.total {
                let end = (start + cfg.chunk_size).min(cfg.total);
                values.extend(
                    (start..end)
                        .into_par_iter()
                        .map(|i| select(sel, sample_wishart_state(&params, &mut RngStream::new(seed, i).rng()).matrix(), &basis))
                        .collect::<Vec<_>>(),
                );
                start = end;
            }
        }
    }
    let total = values.len() as u64;
    let observed = histogram(values, cfg.lo, cfg.width, cfg.bins);
    // The law is known when the sample was drawn here or n was stated.
    let law_known = cfg.input.is_none() || cfg.n.is_some();
    let expected: Option<Vec<f64>> = if m == 2 && law_known && matches!(sel, Selector::X | Selector::Y | Selector::Z) {
        let marg = QubitMarginals::new(n, theta)?;
        Some(
            (0..cfg.bins)
                .map(|b| {
                    let a = cfg.lo + cfg.width * b as f64;
                    let p = if sel == Selector::Z { marg.prob_z(a, a + cfg.width) } else { marg.prob_x(a, a + cfg.width) };
                    p.map(|p| p * total as f64)
                })
                .collect::<Result<Vec<_>, _>>()?,
        )
    } else {
        None
    };
    let rows: Vec<HistRow> = (0..cfg.bins)
        .map(|b| HistRow {
            bin_lo: cfg.lo + cfg.width * b as f64,
            bin_hi: cfg.lo + cfg.width * (b + 1) as f64,
            observed: observed[b],
            expected: expected.as_ref().map(|e| e[b]),
        })
        .collect();
    out.write_csv("histogram.csv", &rows)?;
    let chi2 = match &expected {
        Some(e) => chi_square_test(&observed, e, 5.0).ok().map(|c| json!({ "statistic": c.statistic, "dof": c.dof, "p_value": c.p_value })),
        None => None,
    };
    Ok(json!({ "samples": total, "selector": cfg.selector, "n": n, "theta": theta, "chi_square": chi2 }))
}

#[derive(Serialize)]
struct FwhmRow {
    m: usize,
    n: usize,
    z_peak: f64,
    approx: f64,
    exact: f64,
    relative_error: f64,
}

fn fwhm(cfg: &RunConfig, out: &mut Artifacts) -> Result<Value, CliError> {
    let m = cfg.m.expect("validated");
    let mut rows = Vec::new();
    for &n in &cfg.fwhm_n {
        for &z in &cfg.z_grid {
            let w = fwhm_longitudinal(m, n, z)?;
            rows.push(FwhmRow { m, n, z_peak: z, approx: w.approx, exact: w.exact, relative_error: w.relative_error() });
        }
    }
    out.write_csv("fwhm.csv", &rows)?;
    let worst = rows.iter().map(|r| r.relative_error.abs()).fold(0.0, f64::max);
    Ok(json!({ "rows": rows.len(), "max_abs_relative_error": worst }))
}

#[derive(Serialize)]
struct ShiftRow {
    n: usize,
    dz: f64,
    physical_fraction: f64,
    se: f64,
}

fn shift_fraction(cfg: &RunConfig, out: &mut Artifacts) -> Result<Value, CliError> {
    let m = cfg.m.expect("validated");
    let sz = sigma_z_tensor_diag(m)?;
    let seed = derive_seed(cfg.seed, "shift");
    let mut rows = Vec::new();
    for &n in &cfg.shift_n {
        for &dz in &cfg.dz_grid {
            let delta = HermitianMatrix::from_diagonal(&sz.iter().map(|s| 0.5 * dz * s).collect::<Vec<_>>());
            let spec = ProposalSpec::new(WishartParams::new(n, HermitianMatrix::identity(m))?, delta, cfg.kappa)?;
            let sampler = ProposalSampler::new(spec, seed, cfg.total)?;
            let (mut start, mut phys) = (0, 0u64);
            while start < cfg.total {
                let end = (start + cfg.chunk_size).min(cfg.total);
                phys += (start..end).into_par_iter().filter(|&i| sampler.entry(i).physical).count() as u64;
                start = end;
            }
            let frac = phys as f64 / cfg.total as f64;
            rows.push(ShiftRow { n, dz, physical_fraction: frac, se: binomial_se(frac, cfg.total) });
        }
    }
    out.write_csv("shift_fraction.csv", &rows)?;
    Ok(json!({ "rows": rows.len(), "N": cfg.total, "stream_seed": seed }))
}
