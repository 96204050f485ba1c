//! Möbius geometry on `R^n ∪ {∞}` and numerical verification of the
//! moving-center monotonicity identities for minimal submanifolds.

pub mod commands;
pub mod config;
pub mod geom;
pub mod mobius;
pub mod monotonicity;
pub mod quadrature;
pub mod report;
pub mod surfaces;
