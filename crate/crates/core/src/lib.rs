pub mod config;
pub mod corrupt;
pub mod eval;
pub mod parser;
pub mod pipeline;
pub mod rng;
pub mod schedule;
pub mod tokenize;
