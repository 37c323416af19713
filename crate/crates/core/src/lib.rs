//! Requirement-driven customization of TCP congestion control.
//!
//! A streaming requirement and the home uplink become an R1/R2/R3
//! requirement set ([`requirements`]). Candidate programs refined from a
//! base algorithm ([`refinery`], [`prompting`]) are scored on a 0-100 ladder
//! ([`evaluator`]) backed by an embedded packet simulator ([`netsim`]) that
//! executes the algorithm models in [`cca`]. [`reporting`] and [`run`] turn
//! runs into tables and artifact directories.

pub mod cca;
pub mod chat;
pub mod evaluator;
pub mod netsim;
pub mod prompting;
pub mod refinery;
pub mod reporting;
pub mod requirements;
pub mod run;
