//! Hecke modifications of rank-2 vector bundles over rational and elliptic
//! curves: morphism tables, direction maps, moduli-space membership and the
//! numerical checks that certify them.

pub mod elliptic_hecke;
pub mod elliptic_kernel;
pub mod error;
pub mod grassmannian;
pub mod parabolic;
pub mod pseries;
pub mod rational_hecke;
pub mod seidel_smith;
pub mod suites;

pub use error::{Error, Result};
