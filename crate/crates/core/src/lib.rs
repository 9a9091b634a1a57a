//! Exact finite-size laboratory for all-or-nothing transitions in sparse
//! boolean inference.
//!
//! A hidden signal `θ` is a uniformly random k-sparse vector on the unit
//! sphere of `R^N` (every nonzero coordinate equals `1/√k`). It is observed
//! through a noiseless boolean channel `y_i = g(x_i, θ)`:
//!
//! * [`channels::Channel::Bgt`]: Bernoulli group testing,
//! * [`channels::Channel::Sbg`]: `1(⟨x, θ⟩ ∈ A)` with Gaussian design and a
//!   set `A` of Gaussian mass 1/2.
//!
//! Because the channel is noiseless, the posterior is uniform on the atoms
//! consistent with the data, and at desk scale (`C(N, k)` up to a few
//! million) it can be enumerated exactly. On top of that the crate computes
//! MMSE, posterior and predictive entropies, the divergence between the
//! planted and null models, the agreement curves `R0`, `R1`, and a grid
//! verifier for the sufficient condition of the transition.
//!
//! ```
//! use aon_core::prelude::*;
//!
//! let channel = Channel::bgt(20, 3, 0.5)?;
//! let prior = channel.prior();
//! assert_eq!(n_star(&prior, &channel)?, 10);
//!
//! let theta = Signal::new(20, vec![2, 11, 17])?;
//! let data = generate_dataset(&channel, &theta, 25, 7)?;
//! let post = filter_consistent(&prior, &channel, &data, DEFAULT_BUDGET)?;
//! assert!(post.atoms().any(|a| *a == theta));
//! # Ok::<(), aon_core::Error>(())
//! ```
//!
//! The `book/` directory at the repository root walks through each piece.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channels;
pub mod cli;
pub mod condition;
mod error;
pub mod gauss;
pub mod harness;
pub mod info;
pub mod model;
pub mod overlap;
pub mod posterior;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};

/// The most used items in one import.
pub mod prelude {
    pub use crate::channels::{
        bgt_apply, bgt_solve_nu, gaussian_mass, sbg_apply, symmetric_interval_u, BalancedSet,
        Channel, Interval,
    };
    pub use crate::condition::{
        arcsine_inequality_check, bgt_witnesses, borell_bound_check, check_bgt, check_condition,
        check_sbg, ConditionReport, Verdict,
    };
    pub use crate::info::{
        dn_curve, entropy_slope, kl_estimate, left_derivative, n_star, output_entropy,
        prior_entropy, DnCurve,
    };
    pub use crate::model::{
        generate_dataset, overlap, BitRow, Dataset, DesignRow, KSparsePrior, Signal, DEFAULT_BUDGET,
    };
    pub use crate::overlap::{
        bgt_r0, bgt_r1, hermite_coeffs, overlap_pmf, sbg_r1, sheppard, uniform_grid,
        validate_assumptions, HermiteExpansion, OverlapCurves,
    };
    pub use crate::posterior::{
        filter_consistent, instance_error, mmse_mc, posterior_entropy, predictive_entropy, z_count,
        PosteriorState,
    };
    pub use crate::stats::{binary_entropy, Estimate};
    pub use crate::Error;
}

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    struct Introduction;
    #[doc = include_str!("../../../book/src/model.md")]
    struct Model;
    #[doc = include_str!("../../../book/src/posterior.md")]
    struct Posterior;
    #[doc = include_str!("../../../book/src/overlaps.md")]
    struct Overlaps;
    #[doc = include_str!("../../../book/src/information.md")]
    struct Information;
    #[doc = include_str!("../../../book/src/condition.md")]
    struct Condition;
    #[doc = include_str!("../../../book/src/experiments.md")]
    struct Experiments;
}
