//! Controlled Keplerian motion under a bounded thrust, and the limiting thrust
//! below which an orbit insertion (or a de-orbit to an entry interface) is
//! impossible without re-entering the atmosphere.

pub mod astro;
pub mod controllability;
pub mod elements;
pub mod export;
pub mod limiting;
pub mod ocp;
pub mod propagator;
pub mod scenario;
