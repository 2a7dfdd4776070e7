//! Uncorrelated samples of quantum states.
//!
//! Proposal states come from a quantum Wishart law whose peak location and
//! shape are matched to the target, optionally shifted and mixed with the
//! uniform law. Rejection sampling turns the proposal sample into an exact
//! sample of the target, and the [`verify`] module checks the result
//! through credibility curves of bounded-likelihood regions.
//!
//! ```
//! use wishart_states::prelude::*;
//!
//! let target = TargetSpec::new(Pom::tetrahedron(), "25 25 25 25".parse()?)?;
//! let proposal = ProposalSpec::new(
//!     WishartParams::new(14, HermitianMatrix::identity(2))?,
//!     HermitianMatrix::zeros(2),
//!     0.1,
//! )?;
//! let sampler = ProposalSampler::new(proposal, 1, 20_000)?;
//! let run = StreamingRejection::default().run(&sampler, &target, 2)?;
//! assert!(run.report.p_acc > 0.5 && run.report.p_acc < 0.7);
//! # Ok::<(), wishart_states::Error>(())
//! ```

// NaN must fail every range check, so negated comparisons are kept.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod chunk;
pub mod error;
pub mod hermitian;
pub mod proposal;
pub mod quad;
pub mod rejection;
pub mod rng;
pub mod stats;
pub mod target;
pub mod verify;
pub mod wishart;

/// Code in the guide under `book/` runs as doc-tests.
#[cfg(doctest)]
mod guide {
    #[doc = include_str!("../../../README.md")]
    mod readme {}
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/state-space.md")]
    mod state_space {}
    #[doc = include_str!("../../../book/src/wishart.md")]
    mod wishart {}
    #[doc = include_str!("../../../book/src/proposal.md")]
    mod proposal {}
    #[doc = include_str!("../../../book/src/targets.md")]
    mod targets {}
    #[doc = include_str!("../../../book/src/rejection.md")]
    mod rejection {}
    #[doc = include_str!("../../../book/src/verification.md")]
    mod verification {}
    #[doc = include_str!("../../../book/src/files.md")]
    mod files {}
}

pub use error::{Error, Result};
pub use hermitian::{BlochVector, HermitianMatrix, QuantumState, StateCoordinates, TracelessBasis};
pub use rng::RngStream;
pub use wishart::WishartParams;

/// The types most programs need.
pub mod prelude {
    pub use crate::chunk::SampleChunk;
    pub use crate::hermitian::{hs_volume, BlochVector, HermitianMatrix, QuantumState, TracelessBasis};
    pub use crate::proposal::{covariance_for_peak, ProposalSampler, ProposalSpec, SplitMode};
    pub use crate::rejection::{LogDensity, StreamingRejection};
    pub use crate::rng::{derive_seed, RngStream};
    pub use crate::target::{ml_estimator, Counts, MlOptions, Pom, TargetSpec};
    pub use crate::verify::{CredibilityCurve, LambdaValues};
    pub use crate::wishart::{sample_uniform_state, sample_wishart_state, WishartParams};
    pub use crate::{Error, Result};
}
