//! Audio file I/O, corpus manifests, and deterministic test-signal synthesis.

pub mod corpus;
pub mod synth;
pub mod wav;
