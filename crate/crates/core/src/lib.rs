//! Spanning Tree Push-Pull (STPP) decentralized stochastic gradient descent.
//!
//! Agents on a directed communication graph extract two breadth-first spanning
//! trees rooted at a common node: parameters are pulled down the pull tree and
//! gradient trackers are pushed up the push tree. Both trees are encoded as
//! 0/1 mixing matrices whose powers collapse to rank one once the power reaches
//! the tree diameter.
//!
//! The crate is organized around that pipeline:
//!
//! - [`topology`]: benchmark digraphs, strong connectivity, pull/push trees and
//!   their distance statistics.
//! - [`mixing`]: 0/1 tree matrices, indicator-power closed forms, and the
//!   weight matrices used by the baseline gossip methods.
//! - [`oracles`]: stochastic first-order oracles (heterogeneous logistic
//!   regression with a nonconvex regularizer, strongly convex quadratics).
//! - [`optimizers`]: STPP plus DSGD, DSGT, SGP and Push-DIGing as synchronous
//!   round state machines.
//! - [`harness`]: experiment runner, stepsize schedules, theory calculator and
//!   CSV/JSON reporting.
//!
//! ```
//! use stpp::topology::{gen_directed_ring, SpanningTreePair, tree_stats};
//! use stpp::mixing::{build_pull_matrix, build_push_matrix};
//!
//! let g = gen_directed_ring(6).unwrap();
//! let trees = SpanningTreePair::extract(&g, 1).unwrap();
//! let r = build_pull_matrix(&trees.pull).unwrap();
//! let c = build_push_matrix(&trees.push).unwrap();
//! assert_eq!(r.power(5), r.power(6));
//! assert_eq!(c.entries()[[0, 5]], 1);
//! assert_eq!(tree_stats(&trees.pull).avg, 2.5);
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod harness;
pub mod mixing;
pub mod optimizers;
pub mod oracles;
pub mod rng;
pub mod topology;

pub use error::{Error, Result};
