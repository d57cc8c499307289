//! Workflow generation for low-code automation platforms.
//!
//! A requirement in plain language is turned into a workflow in two
//! sub-tasks: an outline (`createFlow`) and then the inputs of each step
//! (`populateInputs`). Generation pauses whenever the generator asks for
//! environment artifacts, the retriever offers ranked choices from the
//! catalog, and generation resumes with those choices in its prompt.
//!
//! Modules, bottom-up:
//!
//! * [`model`]: the workflow DSL, its canonical text form and validation.
//! * [`catalog`]: the steps, tables, columns and values of an environment.
//! * [`retriever`]: a lexical index over catalog artifacts.
//! * [`protocol`]: the adaptive retrieval generation loop and generators.
//! * [`orchestrator`]: steerable generation sessions.
//! * [`dataset`]: sub-task and retrieval datasets from labeled workflows.
//! * [`eval`]: tree edit distance and Flow Similarity.

pub mod catalog;
pub mod dataset;
pub mod eval;
pub mod fixtures;
pub mod model;
pub mod orchestrator;
pub mod protocol;
pub mod retriever;
