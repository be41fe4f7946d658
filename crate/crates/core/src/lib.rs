//! Equilibrium trading in an illiquid market.

#![allow(clippy::needless_range_loop)]

pub mod closedform;
pub mod experiments;
pub mod model;
pub mod pdesolve;
pub mod simulate;
pub mod speeds;
