pub mod fiscal;
pub mod population;
pub mod agents;
pub mod saez;
pub mod engine;
