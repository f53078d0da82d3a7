#![no_std]

//! Reliable, adaptive distance comparison operations (DCOs) for
//! high-dimensional approximate nearest neighbor search.
//!
//! A DCO asks whether an object lies within distance `r` of the query and,
//! if so, what its exact distance is. Besides the usual full scan this crate
//! provides an adaptive sampler that works on randomly rotated vectors: it
//! reads the rotated difference vector a batch of coordinates at a time,
//! and stops as soon as the scaled partial distance clears a confidence
//! bound above `r`. Rejections are always correct; acceptances carry the
//! exact distance.
//!
//! The samplers plug into two indexes:
//!
//! - [`ivf`]: k-means inverted file, with an optional split layout that
//!   keeps the first coordinates of every bucket member contiguous.
//! - [`hnsw`]: hierarchical navigable small world graph, including a mode
//!   that decouples the exact top-K set from the approximate routing set.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, timing and
//! the command line live in the `adsann` crate.

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod dataset;
pub mod dco;
mod error;
pub mod eval;
mod heap;
pub mod hnsw;
pub mod ivf;
pub mod kmeans;
mod rng;
pub mod transform;

pub use dataset::{synth_dataset, Dataset, GroundTruth, SynthSpec};
pub use dco::{DcoConfig, DcoOutcome, DcoQuery};
pub use error::{Error, Result};
pub use eval::{avg_distance_ratio, brute_force_knn, recall, verify_theory, TheoryRow};
pub use hnsw::{HnswGraph, HnswMode, HnswParams};
pub use ivf::{IvfIndex, IvfMode, Layout};
pub use transform::TransformMatrix;

/// Default significance knob of the sequential test.
pub const DEFAULT_EPSILON0: f64 = 2.1;
/// Default number of coordinates sampled between two tests.
pub const DEFAULT_DELTA_D: usize = 32;
/// Default seed for every randomized component.
pub const DEFAULT_SEED: u64 = 42;

/// Result of a K nearest neighbor query: ids with exact distances, ascending.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct KnnResult {
    pub ids: alloc::vec::Vec<u32>,
    pub distances: alloc::vec::Vec<f64>,
    pub stats: QueryStats,
}

/// Work counters for a single query.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct QueryStats {
    /// Coordinates read across every DCO of the query.
    pub dims: u64,
    /// Number of DCOs performed (candidate count).
    pub dcos: u64,
    /// Vertices expanded (graph search only).
    pub hops: u64,
}

impl QueryStats {
    pub(crate) fn record(&mut self, dims: usize) {
        self.dims += dims as u64;
        self.dcos += 1;
    }
}
