//! Simulator for linear-optical quantum logic with post-selection.
//!
//! The crate is layered bottom-up:
//!
//! * [`fock`]: sparse multi-photon states over polarization/bin modes.
//! * [`optics`]: optical elements, compiled mode unitaries, and exact
//!   evolution through permanents.
//! * [`gates`]: post-selected gate presets (one- and two-ancilla CNOT,
//!   encoder, destructive CNOT), feed-forward, logical maps and CHSH.
//! * [`sources`]: SPDC and weak-coherent sources, partial
//!   distinguishability, analyzers and seeded count sampling.
//! * [`fit`]: Malus-law fringe fitting.
//! * [`runner`]: truth-table, fringe, HOM, three-photon and CHSH
//!   experiments driven by a [`scenario::Scenario`], written out by
//!   [`report`].
//! * [`frame`]: the mapping between lab and simulation polarization frames.

pub mod error;
pub mod fit;
pub mod fock;
pub mod frame;
pub mod gates;
pub mod optics;
pub mod report;
pub mod runner;
pub mod scenario;
pub mod sources;

pub use error::{Error, Result};
pub use fock::{Complex, FockState, InputAmplitudes, ModeRegistry, PhotonicState, Polarization};
pub use fit::{fit_fringe, FitOptions, FitResult};
pub use frame::Frame;
pub use gates::{
    chsh_value, extract_logical_map, post_select, BellLabel, ChshAngles, DetectionPattern, GatePreset, LogicalMap,
    PostSelectOutcome,
};
pub use optics::{evolve, permanent, ElementKind, ModeUnitary, OpticalCircuit, OpticalElement};
pub use report::RunOutput;
pub use runner::run_scenario;
pub use scenario::{Experiment, Mode, Scenario};
pub use sources::{AnalyzerSettings, CountingConfig, DistinguishabilityConfig, SourceConfig};
