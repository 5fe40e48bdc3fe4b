//! Self-translate-train toolkit: translate a task dataset into a target
//! language with the model itself, filter the result, and build training and
//! evaluation artefacts from it.

pub mod corpus;
pub mod evaluate;
pub mod filter;
pub mod gateway;
pub mod prompting;
pub mod rational;
pub mod synthesize;
pub mod translate;
