//! HE-IRS simulator core: channels, estimation, beamforming, experiments.
//!
//! A heterogeneous intelligent reflecting surface (HE-IRS) mixes dynamically
//! tunable elements (DTEs, discrete phase shifts reconfigured online) with
//! statically tunable elements (STEs, phases fixed at fabrication). This
//! crate models the uplink/downlink of an HE-IRS assisted multi-user MIMO
//! link and implements the full processing chain:
//!
//! * [`channel`] — array responses, angular dictionaries, Saleh-Valenzuela
//!   channel synthesis, DTE/STE partitioning and pilot blocks;
//! * [`manifold`] — fixed-rank and complex-circle manifolds with a
//!   Riemannian conjugate-gradient driver;
//! * [`estimation`] — the DTE-STE decoupled manifold-optimization (DSD-MO)
//!   channel estimator and the robust rank selection rule;
//! * [`beamforming`] — offline wide-beam synthesis for the STE phases and
//!   the online WMMSE precoder / DTE phase optimizer;
//! * [`experiments`] — NMSE / sum-rate / energy-efficiency metrics and a
//!   reproducible Monte-Carlo sweep harness with CSV output.

pub mod beamforming;
pub mod channel;
pub mod dump;
pub mod error;
pub mod estimation;
pub mod experiments;
pub mod linalg;
pub mod manifold;
pub mod seeding;

pub use error::{Error, Result};
