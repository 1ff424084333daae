//! Appliance platform that rebuilds its whole running system from
//! signature-verified packages on every boot.
//!
//! The crate models the hardware and network virtually: media are in-memory
//! file trees with a write-lock switch, the network is a table of endpoints,
//! and time is a simulated clock recorded in the boot log. On top of that it
//! implements the trust store ([`trust`]), media and the evanescent root
//! ([`media`]), package resolution ([`resolve`]), the boot orchestrator
//! ([`boot`]), the update channel ([`update`]), release tooling
//! ([`release`]) and a fleet simulator ([`fleet`]).

pub mod boot;
pub mod fixture;
pub mod fleet;
pub mod log;
pub mod machine;
pub mod media;
pub mod net;
pub mod package;
pub mod release;
pub mod resolve;
pub mod trace;
pub mod trust;
pub mod update;
