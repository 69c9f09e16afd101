//! Tower systems for linearly repetitive Delone sets.
//!
//! The crate builds, on finite windows of concrete linearly repetitive point
//! sets, nested Voronoi-based box decompositions with their transition
//! matrices, the non-stationary Markov chain they induce, and patch-frequency
//! deviation experiments over growing cubes.

pub mod delone;
pub mod deviation;
pub mod geometry;
pub mod markov;
pub mod towers;
