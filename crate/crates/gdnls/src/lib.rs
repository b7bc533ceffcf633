//! Self-similar blow-up profiles of the generalized derivative nonlinear
//! Schrödinger equation (gDNLS), `iψ_t + ψ_xx + i|ψ|^{2σ}ψ_x = 0`.
//!
//! For σ ∈ (1, 2] the equation is L²-supercritical and develops finite-time
//! singularities whose local structure is governed by a complex profile Q(ξ)
//! solving a nonlinear eigenvalue problem jointly with two scalar parameters
//! (a, b).  This crate solves that problem on a rescaled half-domain with
//! far-field Robin conditions, continues the solution family in σ, and
//! computes the derived quantities (conserved functionals, tail coefficients,
//! phase diagnostics, momentum-region decompositions, Richardson-extrapolated
//! tables, and power-law fits of a(σ) and ε(σ) = 2 − b(σ)).

pub mod analysis;
pub mod banded;
pub mod continuation;
pub mod equation;
pub mod fitting;
pub mod io;
pub mod newton;
pub mod profile;
pub mod quad;
pub mod solitons;

pub use profile::{GridSpec, ProfileState};
