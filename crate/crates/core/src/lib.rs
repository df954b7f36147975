pub mod analysis;
pub mod config;
pub mod expr;
pub mod integrator;
pub mod model;
pub mod noise;
pub mod spectral;
pub mod run;
