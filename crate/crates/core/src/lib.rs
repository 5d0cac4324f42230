//! Interval-partition trees embedded in ℓ₁: bead-crushing builds, measure
//! calculus on the line, exchangeable hierarchies and mass-structural
//! equivalence.

pub mod beads;
pub mod equiv;
pub mod error;
pub mod hierarchy;
pub mod iptree;
pub mod l1geom;
pub mod measure;
pub mod render;
pub mod tol;

pub use error::{Error, Result};
pub use iptree::IpTree;
pub use l1geom::{Arc, L1Point};
