//! Asymmetric zero-range process laboratory.
//!
//! Simulates the zero-range process on finite lattices exactly, computes
//! its grand-canonical flux and Legendre conjugate from a rate function,
//! evaluates the macroscopic Hopf-Lax profiles and front curves they
//! induce, and provides exact small-instance oracles (stationary laws,
//! uniformized transient laws, total-variation curves) plus the
//! order-preserving couplings and the exclusion-process bijection used to
//! cross-check everything.

pub mod coupling;
pub mod exclusion;
pub mod experiments;
pub mod flux;
pub mod hj;
pub mod lattice;
pub mod mixing;
pub mod rate;
pub mod sim;

pub use flux::{eval_partition, mean_density, Convexity, FluxError, FluxModel, FluxModelConfig};
pub use hj::check_condition_5;
pub use lattice::{
    empirical_cdf, make_config, total_jump_rate, Configuration, HeightFunction, InitKind,
    LatticeGeometry, ProcessSpec,
};
pub use rate::{RateFunction, RateShape};
pub use sim::{replica_rng, simulate, SimError, TrajectorySample};
