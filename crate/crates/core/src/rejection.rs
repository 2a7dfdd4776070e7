//! Accept-reject sampling of a target from a stored proposal sample.
//!
//! The bound `C` is the largest ratio `f/g` over the proposal sample itself,
//! so it is known only after the whole sample exists. Sampling therefore runs
//! in two passes: the first evaluates every log-ratio and their maximum, the
//! second accepts entry `i` iff `u_i < exp(log f − log g − log C)`, with
//! `u_i` drawn from a stream addressed by `i` alone.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::hermitian::{log_hs_volume, HermitianMatrix, QuantumState};
use crate::proposal::{ProposalSample, ProposalSampler, ProposalSpec};
use crate::quad;
use crate::rng::RngStream;
use crate::target::TargetSpec;

/// An unnormalized log-density on the state space.
pub trait LogDensity: Sync {
    fn dim(&self) -> usize;

    /// `log f(ρ)` given whether `ρ` is physical; must be `−∞` when it is not.
    fn log_density_with(&self, rho: &HermitianMatrix, physical: bool) -> f64;

    fn log_density(&self, rho: &HermitianMatrix) -> f64 {
        self.log_density_with(rho, rho.is_psd(crate::hermitian::DEFAULT_PSD_TOL))
    }
}

impl LogDensity for TargetSpec {
    fn dim(&self) -> usize {
        TargetSpec::dim(self)
    }
    fn log_density_with(&self, rho: &HermitianMatrix, physical: bool) -> f64 {
        TargetSpec::log_density_with(self, rho, physical)
    }
}

/// A proposal law restricted to the physical states, used as a target.
impl LogDensity for ProposalSpec {
    fn dim(&self) -> usize {
        ProposalSpec::dim(self)
    }
    fn log_density_with(&self, rho: &HermitianMatrix, physical: bool) -> f64 {
        if !physical {
            return f64::NEG_INFINITY;
        }
        ProposalSpec::log_density_with(self, rho, true, None)
    }
}

/// The normalized uniform density `1/V` on the state space.
#[derive(Clone, Copy, Debug)]
pub struct UniformTarget {
    pub dim: usize,
}

impl LogDensity for UniformTarget {
    fn dim(&self) -> usize {
        self.dim
    }
    fn log_density_with(&self, _rho: &HermitianMatrix, physical: bool) -> f64 {
        if physical {
            -log_hs_volume(self.dim)
        } else {
            f64::NEG_INFINITY
        }
    }
}

/// Per-chunk acceptance counts.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ChunkStats {
    pub first_index: u64,
    pub proposed: u64,
    pub accepted: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AcceptanceReport {
    pub log_c: f64,
    pub accepted: u64,
    pub proposed: u64,
    pub p_acc: f64,
    pub chunks: Vec<ChunkStats>,
}

impl AcceptanceReport {
    fn from_chunks(log_c: f64, chunks: Vec<ChunkStats>) -> Self {
        let accepted = chunks.iter().map(|c| c.accepted).sum();
        let proposed: u64 = chunks.iter().map(|c| c.proposed).sum();
        let p_acc = if proposed == 0 { 0.0 } else { accepted as f64 / proposed as f64 };
        AcceptanceReport { log_c, accepted, proposed, p_acc, chunks }
    }

    /// Binomial standard error of `p_acc`.
    pub fn standard_error(&self) -> f64 {
        if self.proposed == 0 {
            return 0.0;
        }
        (self.p_acc * (1.0 - self.p_acc) / self.proposed as f64).sqrt()
    }
}

/// Accepted states with the proposal indices they came from.
#[derive(Clone, Debug, Default)]
pub struct TargetSample {
    pub states: Vec<QuantumState>,
    pub indices: Vec<u64>,
    pub accept_seed: u64,
}

impl TargetSample {
    pub fn len(&self) -> usize {
        self.states.len()
    }
    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// `log f − log g` per entry; `−∞` for unphysical entries.
pub fn log_ratios(sample: &ProposalSample, target: &dyn LogDensity) -> Vec<f64> {
    (0..sample.len())
        .into_par_iter()
        .map(|i| {
            if !sample.physical[i] {
                return f64::NEG_INFINITY;
            }
            target.log_density_with(&sample.states[i], true) - sample.log_g[i]
        })
        .collect()
}

fn max_ratio(ratios: &[f64]) -> Result<f64> {
    let m = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return Err(Error::NoPhysicalEntries);
    }
    Ok(m)
}

/// `log C`, the largest log-ratio over the proposal sample.
pub fn compute_bound_c(sample: &ProposalSample, target: &dyn LogDensity) -> Result<f64> {
    if sample.is_empty() {
        return Err(Error::InvalidParameter("empty proposal sample".into()));
    }
    max_ratio(&log_ratios(sample, target))
}

/// The uniform variate deciding on proposal entry `index`.
pub fn accept_uniform(accept_seed: u64, index: u64) -> f64 {
    RngStream::new(accept_seed, index).rng().random::<f64>()
}

/// Accept decision for one entry.
#[inline]
pub fn accepts(log_ratio: f64, log_c: f64, u: f64) -> bool {
    log_ratio > f64::NEG_INFINITY && u < (log_ratio - log_c).exp()
}

/// Indices (offset by `first_index`) accepted among `ratios`.
pub fn accepted_indices(ratios: &[f64], first_index: u64, log_c: f64, accept_seed: u64) -> Vec<u64> {
    (0..ratios.len())
        .into_par_iter()
        .filter_map(|i| {
            let idx = first_index + i as u64;
            accepts(ratios[i], log_c, accept_uniform(accept_seed, idx)).then_some(idx)
        })
        .collect()
}

/// Second pass over an in-memory proposal sample.
pub fn rejection_sample(
    sample: &ProposalSample,
    target: &dyn LogDensity,
    log_c: f64,
    accept_seed: u64,
) -> (TargetSample, AcceptanceReport) {
    let ratios = log_ratios(sample, target);
    let idx = accepted_indices(&ratios, sample.first_index, log_c, accept_seed);
    let states = idx
        .iter()
        .map(|&i| QuantumState::new_unchecked(sample.states[(i - sample.first_index) as usize].clone()))
        .collect();
    let chunk = ChunkStats { first_index: sample.first_index, proposed: sample.len() as u64, accepted: idx.len() as u64 };
    (
        TargetSample { states, indices: idx, accept_seed },
        AcceptanceReport::from_chunks(log_c, vec![chunk]),
    )
}

/// Two-pass rejection sampling that never holds more than one chunk of
/// proposal states; accepted states are regenerated from their indices.
#[derive(Clone, Debug)]
pub struct StreamingRejection {
    pub chunk_size: u64,
    pub keep_states: bool,
}

impl Default for StreamingRejection {
    fn default() -> Self {
        StreamingRejection { chunk_size: 1 << 20, keep_states: true }
    }
}

/// Outcome of [`StreamingRejection::run`].
#[derive(Clone, Debug)]
pub struct RejectionRun {
    pub sample: TargetSample,
    pub report: AcceptanceReport,
    pub physical_fraction: f64,
}

impl StreamingRejection {
    pub fn run(&self, sampler: &ProposalSampler, target: &dyn LogDensity, accept_seed: u64) -> Result<RejectionRun> {
        if self.chunk_size == 0 {
            return Err(Error::InvalidParameter("chunk size must be positive".into()));
        }
        let total = sampler.total();
        let mut ratios = Vec::with_capacity(total as usize);
        let mut n_phys = 0u64;
        let mut start = 0;
        while start < total {
            let end = (start + self.chunk_size).min(total);
            let chunk = sampler.range(start, end);
            n_phys += chunk.physical.iter().filter(|p| **p).count() as u64;
            ratios.extend(log_ratios(&chunk, target));
            start = end;
        }
        let log_c = max_ratio(&ratios)?;
        let mut chunks = Vec::new();
        let mut indices = Vec::new();
        let mut start = 0;
        while start < total {
            let end = (start + self.chunk_size).min(total);
            let idx = accepted_indices(&ratios[start as usize..end as usize], start, log_c, accept_seed);
            chunks.push(ChunkStats { first_index: start, proposed: end - start, accepted: idx.len() as u64 });
            indices.extend(idx);
            start = end;
        }
        let states = if self.keep_states {
            indices.par_iter().map(|&i| QuantumState::new_unchecked(sampler.entry(i).state)).collect()
        } else {
            Vec::new()
        };
        Ok(RejectionRun {
            sample: TargetSample { states, indices, accept_seed },
            report: AcceptanceReport::from_chunks(log_c, chunks),
            physical_fraction: n_phys as f64 / total as f64,
        })
    }
}

/// One proposal configuration of an acceptance scan.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ScanPoint {
    pub n: usize,
    pub kappa: f64,
    pub x1: f64,
    pub x2: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScanRow {
    pub point: ScanPoint,
    pub p_acc: f64,
    pub standard_error: f64,
    pub physical_fraction: f64,
    pub best: bool,
}

/// Acceptance rate for each proposal built by [`ProposalSpec::from_mixing`]
/// around `rho_ml`, with `total` proposals per point. Marks the best row.
pub fn acceptance_scan(
    points: &[ScanPoint],
    target: &TargetSpec,
    rho_ml: &HermitianMatrix,
    total: u64,
    proposal_seed: u64,
    accept_seed: u64,
) -> Result<Vec<ScanRow>> {
    let mut rows = Vec::with_capacity(points.len());
    for p in points {
        let spec = ProposalSpec::from_mixing(rho_ml, p.n, p.x1, p.x2, p.kappa)?;
        let sampler = ProposalSampler::new(spec, proposal_seed, total)?;
        let run = StreamingRejection { keep_states: false, ..Default::default() }.run(&sampler, target, accept_seed)?;
        rows.push(ScanRow {
            point: *p,
            p_acc: run.report.p_acc,
            standard_error: run.report.standard_error(),
            physical_fraction: run.physical_fraction,
            best: false,
        });
    }
    if let Some(best) = rows.iter_mut().max_by(|a, b| a.p_acc.total_cmp(&b.p_acc)) {
        best.best = true;
    }
    Ok(rows)
}

/// Acceptance rate restricted to a one-parameter family `ρ(t)`, `t ∈ [a, b]`:
/// `(∫f / ∫g) / max(f/g)`.
pub fn line_slice_acceptance(
    target: &dyn LogDensity,
    proposal: &ProposalSpec,
    line: impl Fn(f64) -> HermitianMatrix + Sync,
    a: f64,
    b: f64,
) -> Result<f64> {
    let lf = |t: f64| target.log_density(&line(t));
    let lg = |t: f64| proposal.log_density(&line(t));
    let grid = 4000;
    let ts: Vec<f64> = (0..=grid).map(|i| a + (b - a) * i as f64 / grid as f64).collect();
    let vals: Vec<(f64, f64)> = ts.par_iter().map(|&t| (lf(t), lg(t))).collect();
    let f_top = vals.iter().map(|v| v.0).fold(f64::NEG_INFINITY, f64::max);
    let g_top = vals.iter().map(|v| v.1).fold(f64::NEG_INFINITY, f64::max);
    if g_top == f64::NEG_INFINITY {
        return Err(Error::Degenerate("proposal vanishes on the whole line".into()));
    }
    if f_top == f64::NEG_INFINITY {
        return Ok(0.0);
    }
    let ratio = |t: f64| {
        let (x, y) = (lf(t), lg(t));
        if x == f64::NEG_INFINITY { f64::NEG_INFINITY } else { x - y }
    };
    let (mut best_i, mut best) = (0, f64::NEG_INFINITY);
    for (i, v) in vals.iter().enumerate() {
        let r = if v.0 == f64::NEG_INFINITY { f64::NEG_INFINITY } else { v.0 - v.1 };
        if r > best {
            best = r;
            best_i = i;
        }
    }
    // golden-section refinement around the best grid point
    let h = (b - a) / grid as f64;
    let (mut lo, mut hi) = ((ts[best_i] - h).max(a), (ts[best_i] + h).min(b));
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..100 {
        let x1 = hi - phi * (hi - lo);
        let x2 = lo + phi * (hi - lo);
        if ratio(x1) > ratio(x2) {
            hi = x2;
        } else {
            lo = x1;
        }
    }
    let log_max = best.max(ratio(0.5 * (lo + hi)));
    let int_f = quad::integrate(|t| (lf(t) - f_top).exp(), a, b, 0.0, 1e-9)?;
    let int_g = quad::integrate(|t| (lg(t) - g_top).exp(), a, b, 0.0, 1e-9)?;
    Ok(((int_f.ln() + f_top) - (int_g.ln() + g_top) - log_max).exp())
}

/// The Bloch-ball diameter `½(1 + t e·σ)` for a unit vector `e`.
pub fn bloch_diameter(e: [f64; 3]) -> impl Fn(f64) -> HermitianMatrix + Sync {
    move |t| crate::hermitian::BlochVector::new(t * e[0], t * e[1], t * e[2]).to_matrix()
}
