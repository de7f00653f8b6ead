//! First-order full-, quarter- and mixed-moment closures for the 2D
//! Fokker-Planck transport equation.
//!
//! The crate covers angular geometry and quadrature ([`sphere`]),
//! realizability of first-order moments ([`moments`]), minimum-entropy and
//! linear closures ([`entropy`]), analytic Kershaw closures ([`kershaw`]),
//! moments of the Laplace-Beltrami operator ([`collision`]) and a
//! finite-volume solver with benchmark presets ([`solver`], [`config`]).

pub mod collision;
pub mod config;
pub mod entropy;
pub mod error;
pub mod kershaw;
pub mod moments;
pub mod output;
pub mod solver;
pub mod sphere;

pub use error::{Error, Result};
