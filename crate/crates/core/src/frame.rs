//! Logical ↔ physical angle bookkeeping.
//!
//! The simulation works in one global polarization frame in which logical 0
//! is H and logical 1 is V on every port. In the apparatus, the beam
//! splitter that mixes the ancilla path with the target is rotated by 45°,
//! and the lab analyzers on that side (target in/out, ancilla detector) are
//! read in its rotated frame. So a lab angle on those ports equals the
//! logical angle plus 45°. This module is the only place that knows it.

use serde::{Deserialize, Serialize};

/// Offset between lab and logical frames on the rotated-splitter side.
pub const ROTATED_FRAME_OFFSET: f64 = 45.0;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Frame {
    #[default]
    Logical,
    Physical,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Input,
    Output,
}

/// Lab-frame offset for a port of the one-ancilla CNOT apparatus.
pub fn lab_frame_offset(port: &str, side: Side) -> f64 {
    match (port, side) {
        ("T", _) => ROTATED_FRAME_OFFSET,
        ("A", Side::Output) => ROTATED_FRAME_OFFSET,
        _ => 0.0,
    }
}

/// Converts an angle given in `frame` into the logical (simulation) frame,
/// reduced to `[0, 180)`.
pub fn to_logical(angle: f64, port: &str, side: Side, frame: Frame) -> f64 {
    let a = match frame {
        Frame::Logical => angle,
        Frame::Physical => angle - lab_frame_offset(port, side),
    };
    a.rem_euclid(180.0)
}

/// Converts a logical angle into `frame`, reduced to `[0, 180)`.
pub fn from_logical(angle: f64, port: &str, side: Side, frame: Frame) -> f64 {
    let a = match frame {
        Frame::Logical => angle,
        Frame::Physical => angle + lab_frame_offset(port, side),
    };
    a.rem_euclid(180.0)
}

/// Analyzer angle selecting a logical value.
pub fn analyzer_for_value(value: u8) -> f64 {
    if value == 0 {
        0.0
    } else {
        90.0
    }
}

/// Half-wave plate angle that turns H into the given logical value.
pub fn preparation_for_value(value: u8) -> f64 {
    if value == 0 {
        0.0
    } else {
        45.0
    }
}
