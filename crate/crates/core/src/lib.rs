//! Continuous-time quantum-walk spatial search on graphs, with dynamical
//! random telegraph noise (RTN) on the links.
//!
//! The crate is organised bottom-up:
//!
//! * [`graph`]: complete, star and edge-list graphs and their Laplacians.
//! * [`rtn`]: per-link telegraph trajectories and their statistics.
//! * [`hamiltonian`]: the search Hamiltonian `γL − |w⟩⟨w|` and its noisy,
//!   piecewise-constant counterpart.
//! * [`propagator`]: spectral time evolution and target-probability traces.
//! * [`ensemble`]: Monte Carlo averaging over noise realizations.
//! * [`analysis`]: success probability, optimal time, running time and
//!   power-law fits.
//! * [`theory`]: Krylov reduction and perturbative spectrum of the star
//!   graph with an external target.

pub mod analysis;
pub mod ensemble;
mod error;
pub mod graph;
pub mod hamiltonian;
pub mod output;
pub mod propagator;
pub mod rtn;
pub mod seeding;
pub mod theory;

pub use error::{Error, Result};
