pub mod accounting;
pub mod cli;
pub mod emission_model;
pub mod fl_sim;
pub mod registry;
pub mod scenario;
