//! Reference implementations written straight from the formulas, plus a
//! synthetic multi-view dataset generator. Nothing here depends on the
//! engine crates, so the engine can be checked against it.

pub mod oracle;
pub mod synth;
pub mod render;
