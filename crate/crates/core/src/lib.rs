//! Generation-expansion equilibrium toolkit.
//!
//! The crate is organized around the stages of the pipeline:
//!
//! * [`scenario`]: the game definition (technologies, Gencos, regions, loads)
//!   and its TOML configuration format.
//! * [`dispatch`]: exact merit-order clearing of the energy market, with the
//!   energy price taken as the dual of the balance constraint.
//! * [`capacity_auction`]: forward capacity auction clearing against a
//!   sloped, segmented demand curve.
//! * [`sampler`]: seeded buildout sampling and surrogate training datasets.
//! * [`surrogate`]: gradient-boosted regression trees mapping a buildout to
//!   per-technology operational profit.
//! * [`optimizer`]: differential evolution over box-constrained vectors.
//! * [`equilibrium`]: per-Genco profit evaluators, best responses, and the
//!   Gauss-Seidel diagonalization loop.

pub mod capacity_auction;
pub mod dispatch;
pub mod equilibrium;
mod error;
pub mod optimizer;
pub mod sampler;
pub mod scenario;
pub mod seed;
pub mod surrogate;

pub use error::{Error, Result};
