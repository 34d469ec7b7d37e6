pub mod cli;
pub mod country;
pub mod decomposition;
pub mod equilibrium;
pub mod error;
pub mod events;
pub mod gravity;
pub mod panel;
pub mod shocks;
pub mod stats;
pub mod synthworld;
pub mod lp;
pub mod table;
