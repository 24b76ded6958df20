//! IMEX (pseudo-)staggered Galerkin solvers for depth-averaged lava flow.
//!
//! The crate is organised bottom-up:
//!
//! * [`butcher`] holds the 3-stage IMEX tableau pairs and their algebraic checks.
//! * [`vn_lab`] evaluates fully-discrete amplification factors of the 1D scheme.
//! * [`scheme1d`] is the staggered scheme for linear advection-reaction.
//! * [`mesh2d`], [`lava_model`], [`pc_wb`] and [`solver2d`] build the 2D solver.
//! * [`scenarios`] contains the built-in test cases and the config file format.

pub mod butcher;
pub mod error;
pub mod lava_model;
pub mod mesh2d;
pub mod pc_wb;
pub mod scenarios;
pub mod scheme1d;
pub mod solver2d;
pub mod vn_lab;

pub use butcher::{canonical_pair, ButcherPair, PairId, Tableau};
pub use error::{Error, Result};
