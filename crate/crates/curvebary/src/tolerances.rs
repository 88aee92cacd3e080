//! Numerical tolerances shared across the crate.
//!
//! Anything that compares floats goes through one of these named constants
//! so the acceptance thresholds live in exactly one place.

/// Weight vectors must sum to one within this bound.
pub const WEIGHT_SUM: f64 = 1e-12;

/// Support points closer than this (sup-norm) are treated as one atom.
pub const MERGE: f64 = 1e-12;

/// Agreement required between independent exact solvers (LP vs closed form,
/// LP vs vertex enumeration) and for coupling marginal checks.
pub const SOLVER_AGREEMENT: f64 = 1e-9;

/// A transport map must push its source onto the intended target within
/// this Wasserstein-2 distance.
pub const PUSH_FIDELITY: f64 = 1e-6;

/// Fixed-point residual allowed for a converged free-support barycenter.
pub const FIXED_POINT: f64 = 1e-6;

/// Slack on the convex-hull membership LP residual.
pub const HULL: f64 = 1e-9;

/// Default multiplicative slack for histogram density ceilings.
pub const DENSITY_SLACK: f64 = 0.15;

/// Default movement threshold that stops the free-support iteration.
pub const FREE_SUPPORT_MOVEMENT: f64 = 1e-9;

/// Default cap on free-support iterations before giving up.
pub const FREE_SUPPORT_MAX_ITERS: usize = 500;

/// Matching two support points across maps (composition, re-rooting).
pub const SNAP: f64 = 1e-9;
