//! Experiment harness for AFDM matched-filter channel estimation: Monte
//! Carlo NMSE/BER sweeps over doubly selective channels, the closed-form
//! SINR-loss surface, and the pilot-orthogonality sweep, all emitted as CSV
//! with a JSON config sidecar.
//!
//! The `afdm-chanest` binary is a thin CLI over [`config`], [`trial`] and
//! [`sweep`]; everything it can do is callable as a library.

pub mod config;
pub mod sweep;
pub mod trial;
