//! Unsupervised community detection on symmetric stochastic block model graphs.
//!
//! The crate bundles three families of methods that share one sparse [`Graph`]
//! substrate:
//!
//! - a Bethe Hessian spectral baseline ([`spectral`]),
//! - a Louvain greedy modularity baseline ([`louvain`]),
//! - a neural encoder (neighbor attention or graph convolution, see [`encoder`])
//!   trained per graph on a soft modularity loss ([`objective`], [`trainer`]),
//!
//! together with the overlap / NMI / modularity metrics ([`metrics`]) and the
//! benchmark harness used by the `commdet` command-line tool ([`harness`]).

pub mod encoder;
pub mod error;
pub mod graph;
pub mod harness;
pub mod io;
pub mod louvain;
pub mod metrics;
pub mod objective;
pub mod seed;
pub mod spectral;
pub mod trainer;

pub use error::{Error, Result};
pub use graph::{Graph, LabelVector, Matrix, Mode, SsbmParams};
