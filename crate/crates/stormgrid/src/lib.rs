//! Deterministic Monte Carlo simulation of storm-driven cascading outages
//! in a renewable-heavy transmission grid: parametric wind field, lognormal
//! component fragility, DC power flow with overload cascades, frequency
//! stability screening, and per-step economic re-dispatch.

pub mod config;
pub mod dispatch;
pub mod ensemble;
pub mod error;
pub mod fragility;
pub mod geo;
pub mod grid;
pub mod hazard;
pub mod network;
pub mod runtime;
pub mod seed;
pub mod sim;
pub mod testbed;
