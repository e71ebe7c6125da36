//! Simulation of k-choice random walks on the complete graph and the random
//! objects built from them.
//!
//! The crate covers:
//!
//! * [`walk`]: the k-choice walk engine (maximal and uniform rules) with
//!   chronological loop erasure and the loop-erased length process.
//! * [`rayleigh`]: exact event-driven sampling of the k-Rayleigh process and
//!   its grid-coupled discrete approximation.
//! * [`trees`]: Aldous–Broder and Wilson choice spanning trees on `K_n`,
//!   partial trees, stick vectors and vertex measures.
//! * [`stickbreak`]: deterministic and random stick-breaking trees embedded in
//!   `l1`, projections, gluing measures and the urn model.
//! * [`stats`]: Kolmogorov–Smirnov and chi-square tests reporting as
//!   [`stats::TestReport`].
//! * [`experiments`]: the named Monte Carlo experiments that check the exact
//!   finite-n laws and desk-scale limit statements.
//!
//! All randomness flows through [`RngStream`], a seeded counter-based
//! generator: replica `r` of an experiment always uses stream `r`, so results
//! do not depend on how replicas are scheduled across threads.
//!
//! The complete graph `K_n` carries a self-loop at every vertex, so each of
//! the `k` candidate steps is uniform over all `n` vertices.

pub mod error;
pub mod experiments;
pub mod export;
pub mod ppp;
pub mod rayleigh;
pub mod rng;
pub mod stats;
pub mod step;
pub mod stickbreak;
pub mod trees;
pub mod walk;

pub use error::{Error, Result};
pub use ppp::{ppp_halfline, ppp_strip, PointSet1D, PointSet2D};
pub use rayleigh::{coupled_pair, sample_rayleigh, stationary_tail, CoupledGridPair, RayleighPath};
pub use rng::RngStream;
pub use stats::TestReport;
pub use step::StepFunction;
pub use stickbreak::{sb_build, sb_sample, EmbeddedTree, UrnState};
pub use trees::{Algorithm, LabeledTree, StickVector, VertexMeasure};
pub use walk::{AvoidMode, ChoiceRule, ChoiceWalkState, Variant};

/// The scaling exponent `k / (k + 1)` for distances in k-choice trees.
pub fn scaling_exponent(k: usize) -> f64 {
    k as f64 / (k as f64 + 1.0)
}

/// `n^{k/(k+1)}`, the natural length scale of k-choice objects on `K_n`.
pub fn length_scale(n: usize, k: usize) -> f64 {
    (n as f64).powf(scaling_exponent(k))
}
