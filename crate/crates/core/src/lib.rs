//! Simulation and verification toolkit for multiplicative random graphs.
//!
//! A graph on `{1..n}` is w-multiplicative when edges are independent and
//! `{i, j}` is present with probability `1 - exp(-w_i w_j / sigma1)`. The crate
//! samples such graphs through a LIFO queue, embeds the queue into a Markovian
//! queue (a Galton-Watson forest), codes components as pinched metric spaces,
//! and simulates the continuum limit objects.

pub mod continuum;
pub mod domain;
pub mod error;
pub mod excursions;
pub mod markov_queue;
pub mod oracle;
pub mod queue_sampler;
pub mod seeding;
pub mod stats;

pub use domain::{Criticality, Jump, PiecewisePath, StepFunction, Weights};
pub use error::{Error, Result};
