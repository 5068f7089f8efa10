pub mod chains;
pub mod dct;
pub mod jpeg;
pub mod seeds;
pub mod simulator;
pub mod features;
pub mod forest;
pub mod bks;
pub mod cascade;
pub mod separability;
pub mod evaluation;
pub mod config;
