//! Numerical conic-Finsler geometry of Kropina metrics.
//!
//! A Kropina metric `F = alpha^2 / beta` arises as the travel-time norm of
//! Zermelo navigation on a Riemannian sea `(M, h)` under a critical wind
//! `W` with `h(W, W) = 1`; it is defined only on the half-space cone
//! `beta > 0` of each tangent space. This crate builds those metrics from
//! navigation data, evaluates their fundamental tensor, sprays,
//! connections and flag curvature on the conic domain, integrates
//! geodesics, and verifies the classification of the constant-flag-
//! curvature structures (flat space and odd spheres), their moduli normal
//! forms, and the projective-flatness dichotomy.
//!
//! The narrative guide lives in `book/`; its code listings compile as the
//! doc-tests of the [`guide`] module.

pub mod classify;
pub mod conic;
pub mod error;
pub mod geodesics;
pub mod linalg;
pub mod navigation;
pub mod riemannian;
pub mod sample;

pub use error::{Error, Result};

/// The book chapters, included so `cargo test --doc` keeps every listing
/// in the guide compiling against the current API.
#[cfg(any(doc, doctest))]
pub mod guide {
    #![doc = include_str!("../../../book/src/guide.md")]

    #[doc = include_str!("../../../book/src/navigation.md")]
    pub mod navigation {}
    #[doc = include_str!("../../../book/src/conic-metrics.md")]
    pub mod conic_metrics {}
    #[doc = include_str!("../../../book/src/curvature.md")]
    pub mod curvature {}
    #[doc = include_str!("../../../book/src/geodesics.md")]
    pub mod geodesics {}
    #[doc = include_str!("../../../book/src/classification.md")]
    pub mod classification {}
    #[doc = include_str!("../../../book/src/moduli.md")]
    pub mod moduli {}
    #[doc = include_str!("../../../book/src/projective-flatness.md")]
    pub mod projective_flatness {}
    #[doc = include_str!("../../../book/src/cli.md")]
    pub mod cli {}
}
