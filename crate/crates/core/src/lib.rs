//! Bayesian additive regression with hard-soft semi-multivariate decision trees.
//!
//! The ensemble splits structured features (spatial or manifold coordinates)
//! jointly through bipartitions of a spanning tree over reference knots, and
//! unstructured features through axis-aligned cutoffs. Every internal node
//! carries a latent decision type that is either hard (nearest-knot routing)
//! or one of several soft logistic gates.
//!
//! Module map:
//!
//! * [`spectral_graph`]: similarity graph, normalized Laplacian, spectral
//!   embedding, minimum spanning trees and edge-removal bipartitions.
//! * [`knots`]: the reference knot system and data-to-knot distance caches.
//! * [`decision_tree`]: tree representation, gates, leaf probabilities.
//! * [`priors`]: hyperparameters, tree prior, rule proposals.
//! * [`likelihood`]: conditional and integrated likelihoods, leaf posterior.
//! * [`sampler`]: the backfitting Metropolis-within-Gibbs sampler.
//! * [`model`]: fitting, prediction and feature importance.
//! * [`gp_diag`]: Gaussian-process covariance diagnostics.
//! * [`synthdata`], [`metrics`], [`io`]: benchmarks, scores and file formats.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod decision_tree;
pub mod error;
pub mod gp_diag;
pub mod io;
pub mod knots;
pub mod likelihood;
pub mod metrics;
pub mod model;
pub mod priors;
pub mod sampler;
pub mod spectral_graph;
pub mod synthdata;

pub use data::{Dataset, PointSet};
pub use decision_tree::{DecisionTree, DecisionType, SplitRule};
pub use error::{Error, Result};
pub use model::{fit, Ablation, FitConfig, FittedModel, PredictiveDraws, Variant};
pub use priors::Hyperparams;
pub use sampler::{MoveStats, PosteriorState};
