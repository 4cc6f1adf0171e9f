//! Exact arithmetic for unramified elliptic tori of `GL_n` and `SL_n` over
//! `F = f((w))`: depths, character values and the stable transfer sum
//! `L(γ, t) = Σ_ψ Θ_ψ(γ) ψ(t⁻¹)`, computed both by brute-force summation over
//! finite character groups and by closed forms.

pub mod building;
pub mod chargroup;
pub mod charform;
pub mod depth;
pub mod error;
pub mod ffield;
pub mod finitelie;
pub mod lseries;
pub mod sample;
pub mod transfer;

pub use error::{Error, Result};
