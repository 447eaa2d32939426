//! Numerical laboratory for the SRB entropy of smooth expanding maps of the 1- and 2-torus:
//! transfer operators and SRB densities, linear response, the Sobolev gradient of the
//! entropy, and the entropy gradient flow, plus a finite-dimensional spectral-gap lab.

pub mod error;
pub mod grid;
pub mod map;
pub mod spectral;
pub mod transfer;
pub mod response;
pub mod entropy;
pub mod flow;
pub mod config;
pub mod verify;

pub use config::{parse_config, RunConfig};
pub use error::{Error, Result};
pub use grid::{Grid, GridField, Point};
pub use map::{ExpandingMap, Mode, VecField};
pub use spectral::{GappedOperator, OperatorFamily};
pub use transfer::{Numerics, TransferContext};
