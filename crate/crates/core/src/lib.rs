//! Fractal hetero-aggregates of two particle species.
//!
//! The crate covers the whole chain from the stochastic 3D model to a labeled
//! dataset: sphere aggregates are grown by constrained cluster-cluster
//! aggregation ([`aggregation`]), described by structural statistics
//! ([`descriptors`]), projected into synthetic STEM-like images
//! ([`render`]), and packaged into parameter sweeps with train/eval splits
//! ([`dataset`]). [`metrics`] holds error measures, the descriptor
//! comparison harness and a threshold baseline for mixing-ratio estimation.
//!
//! Work that is independent per aggregate or per image runs through
//! [`par::Executor`], which uses rayon when the `parallel` feature is on and
//! falls back to a plain loop otherwise. Every random draw comes from a
//! [`rng::RandomStream`] derived from a seed and an index, so results never
//! depend on scheduling.
//!
//! ```
//! use hetagg::aggregation::{build_hetero_aggregate, GrowthConfig};
//! use hetagg::descriptors::descriptor_report;
//! use hetagg::render::{render, IntensityModel, RenderConfig};
//! use hetagg::{ModelParams, RandomStream};
//!
//! let theta = ModelParams::new(2.0, 0.5, 3, 3)?;
//! let mut rng = RandomStream::new(7);
//! let a = build_hetero_aggregate(&theta, &GrowthConfig::default(), &mut rng)?;
//! let report = descriptor_report(&a);
//! assert_eq!(report.n_particles, a.len());
//!
//! let image = render(&a, &RenderConfig::default(), &IntensityModel::default(), &mut rng)?;
//! assert_eq!((image.width, image.height), (512, 512));
//! # Ok::<(), hetagg::Error>(())
//! ```

// `!(x > 0.0)` rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod aggregation;
pub mod config;
pub mod dataset;
pub mod descriptors;
pub mod error;
pub mod geometry;
pub mod metrics;
pub mod par;
pub mod render;
pub mod rng;
pub mod union_find;

pub use error::{Error, Result};
pub use geometry::{Aggregate, Label, ModelParams, Particle, Vec3};
pub use rng::RandomStream;
