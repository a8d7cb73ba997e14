//! Transliteration-augmented few-shot evaluation for languages written in
//! non-Latin scripts.
//!
//! The pipeline romanizes text with data-driven tables ([`romanizer`]), loads
//! datasets ([`corpus`]), picks demonstrations ([`selector`]), renders prompts
//! in original script, Latin script or both ([`prompt`]), queries a completion
//! backend ([`llm`]), scores the answers ([`metrics`]) and aggregates scores
//! across languages ([`report`]). [`run`] ties the steps together.

pub mod corpus;
pub mod llm;
pub mod metrics;
pub mod prompt;
pub mod report;
pub mod romanizer;
pub mod run;
pub mod selector;

pub use corpus::{ClassLabel, Example, LanguageTag, TagLabel, TaskKind};
pub use metrics::MetricReport;
pub use prompt::{PromptMode, TemplateSet};
pub use romanizer::{RomanizerConfig, ScriptTag};
pub use selector::{Seed, SelectionPolicy};
