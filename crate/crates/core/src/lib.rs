//! Spatial capture-recapture estimation when each individual is photographed
//! from two sides (left/right flanks) that cannot be matched to one another.
//!
//! The model treats the pairing between left-side and right-side encounter
//! histories as a latent permutation and samples it jointly with the usual
//! SCR unknowns (activity centers, data-augmentation inclusion indicators,
//! detection parameters) by Metropolis-within-Gibbs. Alongside the full
//! sampler there is a known-identity variant (a telemetered subset of
//! individuals is pre-matched), a perfect-identity variant, and an
//! independent-sides heuristic that ignores the pairing problem entirely.
//!
//! Module map:
//! - [`geom`]: points, trap arrays, rectangular state spaces
//! - [`data`]: encounter matrices and augmented two-side datasets
//! - [`model`]: hazard/detection functions and the observation log-likelihood
//! - [`identity`]: latent pairing utilities (canonical orientation, centroids,
//!   greedy initialization, swap neighborhoods)
//! - [`sampler`]: the MCMC samplers and their configuration
//! - [`simulate`]: data generation and identity scrambling with answer keys
//! - [`analysis`]: posterior summaries, match tables, replicate studies
//! - [`io`]: the CSV/JSON file formats shared with the CLI

pub mod analysis;
pub mod data;
pub mod error;
pub mod geom;
pub mod identity;
pub mod io;
pub mod model;
pub mod rng;
pub mod sampler;
pub mod simulate;

pub use error::{Error, Result};
