//! Prefix-tuned attention heads as universal approximators on the hypersphere.
//!
//! The crate is organised bottom-up: [`specialfn`] and [`sphere`] provide the
//! numerical substrate, [`kernel`] and [`bounds`] the von Mises-Fisher
//! machinery and Jackson-type quantities, [`attention`] and [`prefix`] the
//! heads and prefix synthesis, and [`seq2seq`] the sequence construction.
//! [`verify`] bundles the invariant checks used by the CLI.

// NaN-rejecting guards are written as `!(x > 0.0)` on purpose
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod attention;
pub mod bounds;
pub mod error;
pub mod kernel;
pub mod linalg;
pub mod prefix;
pub mod rng;
pub mod seq2seq;
pub mod specialfn;
pub mod sphere;
pub mod verify;

pub use error::{Error, Result};
pub use sphere::SpherePoint;
