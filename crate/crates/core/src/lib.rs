pub mod backend;
pub mod config;
pub mod container;
pub mod corpus;
pub mod delivery;
pub mod error;
pub mod features;
pub mod grammar;
pub mod lexicon;
pub mod model;
pub mod pipeline;
pub mod relevance;
pub mod scene;
pub mod splitting;
pub mod syntax;
pub mod synthetic;
pub mod text;
pub mod traineval;

pub use error::{AsaError, Result};
