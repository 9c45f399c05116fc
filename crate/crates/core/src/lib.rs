pub mod assess;
pub mod cli;
pub mod coach;
pub mod finding;
pub mod memory;
pub mod race;
pub mod registry;
pub mod sandbox;
pub mod service;
pub mod submission;
pub mod tsc;
