//! Online learning of permutations under linear loss, built on an extended
//! formulation of the permutohedron.
//!
//! The pipeline: a sorting network ([`sorting_networks`]) is reversed into a
//! sequence of reflection relations, compiled into the augmented polytope
//! `W = { (v, x, s) >= 0 : v = Mx + c, Ax + s = b }` ([`formulation`]), and
//! the learner ([`learner`]) runs multiplicative updates on `v` followed by
//! cyclic Bregman projections back into `W` ([`bregman`]). Prediction draws
//! a random permutation with expectation `v` in one O(m) pass over the
//! comparators. [`baselines`] hosts explicit Hedge, Follow the Perturbed
//! Leader, and the hindsight oracle; [`harness`] runs seeded experiments and
//! writes regret CSVs against the proven bound.

pub mod baselines;
pub mod bregman;
pub mod error;
pub mod formulation;
pub mod harness;
pub mod learner;
pub mod sorting_networks;

pub use error::{Error, Result};

/// Inner product of equal-length slices.
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
