pub mod analytics;
pub mod config;
pub mod energymodel;
pub mod error;
pub mod factored;
pub mod faultmodel;
pub mod fleet;
pub mod mdp;
pub mod sim;
pub mod snapshot;
pub mod uav;

pub use error::{Error, Result};
