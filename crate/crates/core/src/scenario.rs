//! Scenario files: what to run, on which gate, with which sources.
//!
//! Scenarios are JSON documents. Unknown keys anywhere are rejected so a
//! typo never silently falls back to a default.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::fit::angle_grid;
use crate::frame::Frame;
use crate::gates::{ChshAngles, GatePreset};
use crate::optics::{ElementKind, OpticalElement};
use crate::sources::{CountingConfig, SourceConfig, PAPER_LIKE_VISIBILITY};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    TruthTable,
    Fringe,
    Hom,
    ThreePhotonScan,
    Chsh,
    Calibrate,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::TruthTable => "truth-table",
            Experiment::Fringe => "fringe",
            Experiment::Hom => "hom",
            Experiment::ThreePhotonScan => "three-photon-scan",
            Experiment::Chsh => "chsh",
            Experiment::Calibrate => "calibrate",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    #[default]
    Exact,
    Sampled,
}

/// Named source presets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SourcePreset {
    /// Single-photon target, indistinguishable photons.
    Ideal,
    /// Weak-coherent target and calibrated partial distinguishability.
    PaperLike,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SourcesSpec {
    Preset(SourcePreset),
    Custom(SourceConfig),
}

/// One optical element as written in a scenario file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ElementSpec {
    BeamSplitter { ports: Vec<String>, reflectivity: f64 },
    Pbs { ports: Vec<String>, basis_angle: f64 },
    WavePlate { ports: Vec<String>, angle: f64 },
    BasisRotator { ports: Vec<String>, angle: f64 },
    PhaseShifter { ports: Vec<String>, phase: f64 },
    Polarizer { ports: Vec<String>, angle: f64 },
}

impl ElementSpec {
    pub fn to_element(&self) -> OpticalElement {
        let (kind, ports) = match self {
            ElementSpec::BeamSplitter { ports, reflectivity } => {
                (ElementKind::BeamSplitter { reflectivity: *reflectivity }, ports)
            }
            ElementSpec::Pbs { ports, basis_angle } => (ElementKind::PolarizingBS { basis_angle: *basis_angle }, ports),
            ElementSpec::WavePlate { ports, angle } => (ElementKind::WavePlate { angle: *angle }, ports),
            ElementSpec::BasisRotator { ports, angle } => (ElementKind::BasisRotator { angle: *angle }, ports),
            ElementSpec::PhaseShifter { ports, phase } => (ElementKind::PhaseShifter { phase: *phase }, ports),
            ElementSpec::Polarizer { ports, angle } => (ElementKind::Polarizer { angle: *angle }, ports),
        };
        OpticalElement::new(kind, ports.iter().cloned())
    }
}

/// An angle axis: one value, an explicit list, or an evenly spaced range.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AngleSpec {
    Single(f64),
    List(Vec<f64>),
    Range(RangeSpec),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RangeSpec {
    pub start: f64,
    pub stop: f64,
    pub points: usize,
}

impl AngleSpec {
    pub fn values(&self) -> Vec<f64> {
        match self {
            AngleSpec::Single(v) => vec![*v],
            AngleSpec::List(v) => v.clone(),
            AngleSpec::Range(r) => angle_grid(r.start, r.stop, r.points),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Sweep {
    pub frame: Frame,
    pub theta_a: Option<AngleSpec>,
    pub theta_c: Option<AngleSpec>,
    pub theta_t: Option<AngleSpec>,
    /// Overlap grid for HOM and three-photon scans.
    pub overlaps: Option<Vec<f64>>,
    /// Two-photon visibilities for the CHSH table.
    pub visibilities: Option<Vec<f64>>,
    pub chsh_angles: Option<Vec<ChshAngles>>,
    /// Calibration target.
    pub target_visibility: Option<f64>,
}

/// Counting parameters as written in a file; the seed has no default there.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CountingSpec {
    pub trials_per_setting: Option<u64>,
    pub detector_efficiency: Option<f64>,
    pub seed: Option<u64>,
}

impl CountingSpec {
    pub fn resolve(&self) -> CountingConfig {
        let d = CountingConfig::default();
        CountingConfig {
            trials_per_setting: self.trials_per_setting.unwrap_or(d.trials_per_setting),
            detector_efficiency: self.detector_efficiency.unwrap_or(d.detector_efficiency),
            seed: self.seed.unwrap_or(d.seed),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitSpec {
    pub free_period: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub experiment: Experiment,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<GatePreset>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub circuit: Option<Vec<ElementSpec>>,
    /// Falls back to [`Scenario::sources_spec`]'s default when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sources: Option<SourcesSpec>,
    #[serde(default)]
    pub sweep: Sweep,
    #[serde(default)]
    pub counting: CountingSpec,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default)]
    pub fit: FitSpec,
}

impl Scenario {
    pub fn new(name: &str, experiment: Experiment) -> Self {
        Self {
            name: name.to_string(),
            experiment,
            preset: None,
            circuit: None,
            sources: None,
            sweep: Sweep::default(),
            counting: CountingSpec::default(),
            mode: Mode::Exact,
            fit: FitSpec::default(),
        }
    }

    /// Parses a file-borne scenario. Sampled scenarios must carry a seed.
    pub fn from_json(text: &str) -> Result<Self> {
        let sc: Scenario = serde_json::from_str(text)?;
        if sc.mode == Mode::Sampled && sc.counting.seed.is_none() {
            return Err(Error::Scenario("sampled scenarios must set `counting.seed`".into()));
        }
        sc.validate()?;
        Ok(sc)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.preset.is_some() && self.circuit.is_some() {
            return Err(Error::Scenario("give either `preset` or `circuit`, not both".into()));
        }
        if let Some(c) = &self.circuit {
            if c.is_empty() {
                return Err(Error::Scenario("`circuit` is empty".into()));
            }
        }
        let s = &self.sweep;
        for (name, axis) in [("theta_a", &s.theta_a), ("theta_c", &s.theta_c), ("theta_t", &s.theta_t)] {
            if let Some(a) = axis {
                let v = a.values();
                if v.is_empty() {
                    return Err(Error::Scenario(format!("sweep `{name}` is empty")));
                }
                if v.iter().any(|x| !x.is_finite()) {
                    return Err(Error::Scenario(format!("sweep `{name}` has non-finite angles")));
                }
            }
        }
        for (name, list) in [("overlaps", &s.overlaps), ("visibilities", &s.visibilities)] {
            if let Some(l) = list {
                if l.is_empty() {
                    return Err(Error::Scenario(format!("sweep `{name}` is empty")));
                }
                if l.iter().any(|x| !(0.0..=1.0).contains(x)) {
                    return Err(Error::Scenario(format!("sweep `{name}` has values outside [0, 1]")));
                }
            }
        }
        if let Some(a) = &s.chsh_angles {
            if a.is_empty() {
                return Err(Error::Scenario("sweep `chsh_angles` is empty".into()));
            }
        }
        if let Some(v) = s.target_visibility {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::Scenario(format!("target visibility {v} outside (0, 1)")));
            }
        }
        Ok(())
    }

    pub fn gate(&self) -> GatePreset {
        self.preset.unwrap_or(GatePreset::Cnot1a)
    }

    /// The configured sources, or `paper-like` when the gate has a
    /// source-level model and `ideal` otherwise.
    pub fn sources_spec(&self) -> SourcesSpec {
        match &self.sources {
            Some(s) => s.clone(),
            None if self.circuit.is_some() || self.gate().has_source_model() => {
                SourcesSpec::Preset(SourcePreset::PaperLike)
            }
            None => SourcesSpec::Preset(SourcePreset::Ideal),
        }
    }

    pub fn counting(&self) -> CountingConfig {
        self.counting.resolve()
    }

    pub fn target_visibility(&self) -> f64 {
        self.sweep.target_visibility.unwrap_or(PAPER_LIKE_VISIBILITY)
    }

    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn hash(&self) -> Result<String> {
        let bytes = serde_json::to_vec(self)?;
        Ok(hex::encode(Sha256::digest(&bytes)))
    }
}
