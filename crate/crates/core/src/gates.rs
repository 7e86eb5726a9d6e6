//! Post-selected photonic gates.
//!
//! Each preset builds its input photons, sends them through a fixed network
//! of polarizing beam splitters, and keeps only the detection outcomes that
//! herald a correct logical operation. Qubits are polarization-encoded:
//! H ↔ 0, V ↔ 1 in the simulation frame (see [`crate::frame`]).

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{Complex, FockState, InputAmplitudes, ModeRegistry, PhotonicState, Polarization};
use crate::optics::{evolve, OpticalCircuit, OpticalElement};

const ZERO: Complex = Complex::new(0.0, 0.0);
const ONE: Complex = Complex::new(1.0, 0.0);

/// Which polarization channel of an analyzed port counts toward a
/// requirement.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Accept {
    /// Photons passing an analyzer set to this logical value.
    Value(u8),
    /// Every photon reaching the port, whatever its polarization.
    Any,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DetectorKind {
    /// Counts must match exactly.
    #[default]
    NumberResolving,
    /// A detector only reports click / no click.
    Threshold,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChannelRequirement {
    pub port: String,
    /// Analyzer angle (degrees, simulation frame) for logical value 0.
    pub analysis_angle: f64,
    pub accept: Accept,
    pub count: usize,
}

/// Post-selection condition on detector outcomes.
#[derive(Clone, Debug, PartialEq)]
pub struct DetectionPattern {
    pub required: Vec<ChannelRequirement>,
    /// Only terms with this photon number can satisfy the pattern.
    pub total_photons: Option<usize>,
    pub detectors: DetectorKind,
}

impl DetectionPattern {
    pub fn new() -> Self {
        Self { required: Vec::new(), total_photons: None, detectors: DetectorKind::NumberResolving }
    }

    /// One photon in each port, any polarization.
    pub fn coincidence(ports: &[&str]) -> Self {
        let mut p = Self::new();
        for port in ports {
            p = p.require(port, 0.0, Accept::Any, 1);
        }
        p.total_photons = Some(ports.len());
        p
    }

    pub fn require(mut self, port: &str, analysis_angle: f64, accept: Accept, count: usize) -> Self {
        self.required.retain(|r| r.port != port);
        self.required.push(ChannelRequirement { port: port.to_string(), analysis_angle, accept, count });
        self
    }

    pub fn with_total(mut self, total: Option<usize>) -> Self {
        self.total_photons = total;
        self
    }

    pub fn with_detectors(mut self, detectors: DetectorKind) -> Self {
        self.detectors = detectors;
        self
    }

    fn validate(&self, registry: &ModeRegistry) -> Result<Vec<usize>> {
        let mut idx = Vec::with_capacity(self.required.len());
        for (i, r) in self.required.iter().enumerate() {
            if self.required[..i].iter().any(|o| o.port == r.port) {
                return Err(Error::InvalidPattern(format!("port `{}` listed twice", r.port)));
            }
            if let Accept::Value(v) = r.accept {
                if v > 1 {
                    return Err(Error::InvalidPattern(format!("logical value {v} on port `{}`", r.port)));
                }
            }
            idx.push(registry.port_index(&r.port)?);
        }
        Ok(idx)
    }
}

impl Default for DetectionPattern {
    fn default() -> Self {
        Self::new()
    }
}

/// Result of conditioning a state on a detection pattern.
#[derive(Clone, Debug)]
pub struct PostSelectOutcome {
    /// Normalized state after the projection, expressed in each required
    /// port's analysis frame. Empty when the pattern never occurs.
    pub conditional_state: PhotonicState,
    pub success_probability: f64,
    /// Weight of every other outcome.
    pub residual_weight: f64,
}

impl PostSelectOutcome {
    pub fn is_empty(&self) -> bool {
        self.conditional_state.is_empty()
    }

    /// The unnormalized projected state, `√p · conditional`.
    pub fn projected(&self) -> PhotonicState {
        self.conditional_state.scale(Complex::new(self.success_probability.sqrt(), 0.0))
    }
}

/// Rotates each listed port so that the analyzer axis becomes H.
fn analysis_frame(state: &PhotonicState, rotations: &[(String, f64)]) -> Result<PhotonicState> {
    let active: Vec<_> = rotations.iter().filter(|(_, a)| a.rem_euclid(180.0) != 0.0).collect();
    if active.is_empty() {
        return Ok(state.clone());
    }
    let mut c = OpticalCircuit::new(state.registry().clone());
    for (port, angle) in active {
        c.push(OpticalElement::rotator(port, -angle));
    }
    evolve(state, &c.compile()?)
}

/// Projects `state` onto the outcomes allowed by `pattern`.
///
/// Detectors do not resolve internal bins, so counts are summed over them.
/// A pattern that never occurs gives probability 0 and an empty state.
pub fn post_select(state: &PhotonicState, pattern: &DetectionPattern) -> Result<PostSelectOutcome> {
    let registry = state.registry().clone();
    let ports = pattern.validate(&registry)?;
    let total = state.norm_sqr();
    if total == 0.0 {
        return Err(Error::ZeroNorm);
    }
    let rotations: Vec<(String, f64)> =
        pattern.required.iter().map(|r| (r.port.clone(), r.analysis_angle)).collect();
    let analyzed = analysis_frame(state, &rotations)?;

    let bins = registry.internal_bins();
    let mut kept = PhotonicState::empty(registry.clone()).with_max_photons(state.max_photons())?;
    for (key, amp) in analyzed.terms() {
        if let Some(n) = pattern.total_photons {
            if key.photon_number() != n {
                continue;
            }
        }
        let ok = pattern.required.iter().zip(&ports).all(|(req, &p)| {
            let channel = |pol: Polarization| -> usize {
                (0..bins).map(|b| key.get(registry.mode(p, pol, b)) as usize).sum()
            };
            let seen = match req.accept {
                Accept::Any => channel(Polarization::H) + channel(Polarization::V),
                Accept::Value(v) => channel(Polarization::from_bit(v)),
            };
            match pattern.detectors {
                DetectorKind::NumberResolving => seen == req.count,
                DetectorKind::Threshold => (seen > 0) == (req.count > 0),
            }
        });
        if ok {
            kept.add_term(key.clone(), *amp)?;
        }
    }
    let p = kept.norm_sqr() / total;
    let conditional = if p > 0.0 { kept.normalize()?.0 } else { kept };
    Ok(PostSelectOutcome { conditional_state: conditional, success_probability: p, residual_weight: 1.0 - p })
}

/// Reads the polarization qubits carried by one photon in each of `ports`.
///
/// Returns one amplitude vector per environment configuration (the rest of
/// the Fock content, including internal bins), so the logical density matrix
/// is `Σ_env ψ_env ψ_env†`. The first port is the most significant bit.
pub fn logical_components(state: &PhotonicState, ports: &[&str]) -> Result<Vec<DVector<Complex>>> {
    let registry = state.registry();
    let idx = ports.iter().map(|p| registry.port_index(p)).collect::<Result<Vec<_>>>()?;
    let bins = registry.internal_bins();
    let dim = 1usize << ports.len();
    let mut envs: Vec<(FockState, DVector<Complex>)> = Vec::new();
    for (key, amp) in state.terms() {
        let mut env = key.clone();
        let mut index = 0usize;
        for &p in &idx {
            if state.port_count(key, p) != 1 {
                return Err(Error::NotTwoQubit(format!(
                    "term {key} does not hold exactly one photon in port `{}`",
                    registry.ports()[p]
                )));
            }
            let mut bit = 0usize;
            for b in 0..bins {
                let v = registry.mode(p, Polarization::V, b);
                if key.get(v) == 1 {
                    bit = 1;
                    let occ = env.occupations_mut();
                    occ[v] = 0;
                    occ[registry.mode(p, Polarization::H, b)] = 1;
                }
            }
            index = index * 2 + bit;
        }
        match envs.iter_mut().find(|(k, _)| *k == env) {
            Some((_, v)) => v[index] += amp,
            None => {
                let mut v = DVector::from_element(dim, ZERO);
                v[index] = *amp;
                envs.push((env, v));
            }
        }
    }
    Ok(envs.into_iter().map(|(_, v)| v).collect())
}

/// Logical density matrix of `ports`, traced over everything else. Its
/// trace equals the state's norm squared.
pub fn logical_density(state: &PhotonicState, ports: &[&str]) -> Result<DMatrix<Complex>> {
    let dim = 1usize << ports.len();
    let mut rho = DMatrix::from_element(dim, dim, ZERO);
    for v in logical_components(state, ports)? {
        rho += &v * v.adjoint();
    }
    Ok(rho)
}

/// Logical amplitudes when the rest of the state factors out as a single
/// configuration.
pub fn logical_amplitudes(state: &PhotonicState, ports: &[&str]) -> Result<DVector<Complex>> {
    let mut comps = logical_components(state, ports)?;
    match comps.len() {
        0 => Ok(DVector::from_element(1 << ports.len(), ZERO)),
        1 => Ok(comps.remove(0)),
        n => Err(Error::NotTwoQubit(format!("logical qubits are entangled with {n} environment configurations"))),
    }
}

/// Purity of the first qubit of a normalized two-qubit density matrix.
pub fn reduced_purity(rho: &DMatrix<Complex>) -> f64 {
    let mut r = [[ZERO; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            r[i][j] = rho[(2 * i, 2 * j)] + rho[(2 * i + 1, 2 * j + 1)];
        }
    }
    (r[0][0] * r[0][0] + r[0][1] * r[1][0] + r[1][0] * r[0][1] + r[1][1] * r[1][1]).re
}

/// Classical correction applied to one port after a heralding outcome.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Correction {
    /// `X`: half-wave plate at 45°.
    BitFlip,
    /// `Z`: half-wave plate at 0°.
    PhaseFlip,
    /// `−Z`: half-wave plate at 90°.
    NegPhaseFlip,
}

impl Correction {
    pub fn wave_plate_angle(self) -> f64 {
        match self {
            Correction::BitFlip => 45.0,
            Correction::PhaseFlip => 0.0,
            Correction::NegPhaseFlip => 90.0,
        }
    }
}

/// Feed-forward: when `trigger` fires, apply `correction` on `target_port`.
#[derive(Clone, Debug, PartialEq)]
pub struct FeedForwardRule {
    pub trigger_port: String,
    pub trigger_value: u8,
    pub target_port: String,
    pub correction: Correction,
}

impl FeedForwardRule {
    pub fn apply(&self, state: &PhotonicState) -> Result<PhotonicState> {
        if state.is_empty() {
            return Ok(state.clone());
        }
        let mut c = OpticalCircuit::new(state.registry().clone());
        c.push(OpticalElement::wave_plate(&self.target_port, self.correction.wave_plate_angle()));
        evolve(state, &c.compile()?)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GatePreset {
    /// One-ancilla CNOT accepting only the ancilla-0 outcome.
    Cnot1a,
    /// One-ancilla CNOT accepting both ancilla outcomes with feed-forward.
    #[serde(rename = "cnot1a-ff")]
    Cnot1aFeedForward,
    /// Two-ancilla CNOT driven by an entangled ancilla pair.
    Cnot2a,
    /// Polarization copier: `β0|0⟩ + β1|1⟩ → β0|00⟩ + β1|11⟩`.
    Encoder,
    /// Destructive CNOT: only the target survives.
    Dcnot,
    /// Two photons passing through nothing.
    Identity,
}

impl GatePreset {
    pub const ALL: [GatePreset; 6] = [
        GatePreset::Cnot1a,
        GatePreset::Cnot1aFeedForward,
        GatePreset::Cnot2a,
        GatePreset::Encoder,
        GatePreset::Dcnot,
        GatePreset::Identity,
    ];

    pub fn name(self) -> &'static str {
        match self {
            GatePreset::Cnot1a => "cnot1a",
            GatePreset::Cnot1aFeedForward => "cnot1a-ff",
            GatePreset::Cnot2a => "cnot2a",
            GatePreset::Encoder => "encoder",
            GatePreset::Dcnot => "dcnot",
            GatePreset::Identity => "identity",
        }
    }

    /// Whether the runner can drive this preset from photon-source models
    /// rather than its logical map alone.
    pub fn has_source_model(self) -> bool {
        matches!(self, GatePreset::Cnot1a | GatePreset::Cnot1aFeedForward)
    }

    pub fn is_cnot(self) -> bool {
        matches!(self, GatePreset::Cnot1a | GatePreset::Cnot1aFeedForward | GatePreset::Cnot2a)
    }

    pub fn input_qubits(self) -> usize {
        match self {
            GatePreset::Encoder => 1,
            _ => 2,
        }
    }

    pub fn output_qubits(self) -> usize {
        match self {
            GatePreset::Dcnot => 1,
            _ => 2,
        }
    }

    /// Ideal logical action, up to the success amplitude.
    pub fn ideal_map(self) -> DMatrix<Complex> {
        let r = |x: f64| Complex::new(x, 0.0);
        match self {
            GatePreset::Cnot1a | GatePreset::Cnot1aFeedForward | GatePreset::Cnot2a => cnot_matrix(),
            GatePreset::Identity => DMatrix::identity(4, 4),
            GatePreset::Encoder => {
                DMatrix::from_row_slice(4, 2, &[r(1.0), r(0.0), r(0.0), r(0.0), r(0.0), r(0.0), r(0.0), r(1.0)])
            }
            GatePreset::Dcnot => DMatrix::from_row_slice(
                2,
                4,
                &[r(1.0), r(0.0), r(0.0), r(1.0), r(0.0), r(1.0), r(1.0), r(0.0)],
            ),
        }
    }

    /// Runs the preset on logical input amplitudes (`2^input_qubits` long).
    pub fn run(self, input: &[Complex]) -> Result<GateRun> {
        let want = 1 << self.input_qubits();
        if input.len() != want {
            return Err(Error::Config(format!("{} expects {want} input amplitudes, got {}", self.name(), input.len())));
        }
        let n: f64 = input.iter().map(|c| c.norm_sqr()).sum();
        if (n - 1.0).abs() > 1e-10 {
            return Err(Error::NotNormalized(n));
        }
        let plan = self.plan()?;
        let state = (plan.prepare)(&plan.registry, input)?;
        let out = evolve(&state, &plan.circuit.compile()?)?;
        let mut branches = Vec::with_capacity(plan.branches.len());
        for b in &plan.branches {
            let outcome = post_select(&out, &b.pattern)?;
            let mut corrected = outcome.conditional_state.clone();
            for rule in &b.corrections {
                corrected = rule.apply(&corrected)?;
            }
            let scale = Complex::new(outcome.success_probability.sqrt(), 0.0);
            let logical = if corrected.is_empty() {
                DVector::from_element(1 << plan.logical_ports.len(), ZERO)
            } else {
                logical_amplitudes(&corrected, &plan.logical_ports)? * scale
            };
            branches.push(Branch { label: b.label.clone(), outcome, corrected, logical });
        }
        Ok(GateRun { branches, output_ports: plan.logical_ports.iter().map(|s| s.to_string()).collect() })
    }

    fn plan(self) -> Result<GatePlan> {
        match self {
            GatePreset::Cnot1a | GatePreset::Cnot1aFeedForward => {
                let registry = Arc::new(ModeRegistry::new(["A", "C", "T"], 1)?);
                let circuit = OpticalCircuit::with_elements(registry.clone(), cnot1a_elements(None));
                let mut branches = vec![BranchPlan {
                    label: "A=0".into(),
                    pattern: cnot1a_pattern(0),
                    corrections: vec![],
                }];
                if self == GatePreset::Cnot1aFeedForward {
                    branches.push(BranchPlan {
                        label: "A=1".into(),
                        pattern: cnot1a_pattern(1),
                        corrections: vec![cnot1a_feed_forward()],
                    });
                }
                Ok(GatePlan {
                    registry,
                    circuit,
                    prepare: prepare_cnot1a,
                    branches,
                    logical_ports: vec!["C", "T"],
                })
            }
            GatePreset::Cnot2a => {
                let registry = Arc::new(ModeRegistry::new(["A1", "C", "A2", "T"], 1)?);
                let circuit = OpticalCircuit::with_elements(
                    registry.clone(),
                    vec![OpticalElement::pbs("A1", "C", 0.0), OpticalElement::pbs("A2", "T", 45.0)],
                );
                let mut branches = Vec::new();
                for (d1, d2) in [(0u8, 0u8), (0, 1), (1, 0), (1, 1)] {
                    let (pattern, corrections) = cnot2a_branch(d1, d2);
                    branches.push(BranchPlan { label: format!("D1={d1},D2={d2}"), pattern, corrections });
                }
                Ok(GatePlan { registry, circuit, prepare: prepare_cnot2a, branches, logical_ports: vec!["C", "T"] })
            }
            GatePreset::Encoder => {
                let registry = Arc::new(ModeRegistry::new(["A", "C"], 1)?);
                let circuit = OpticalCircuit::with_elements(registry.clone(), vec![OpticalElement::pbs("A", "C", 0.0)]);
                Ok(GatePlan {
                    registry,
                    circuit,
                    prepare: prepare_encoder,
                    branches: vec![BranchPlan {
                        label: "coincidence".into(),
                        pattern: DetectionPattern::coincidence(&["A", "C"]),
                        corrections: vec![],
                    }],
                    logical_ports: vec!["C", "A"],
                })
            }
            GatePreset::Dcnot => {
                let registry = Arc::new(ModeRegistry::new(["A", "T"], 1)?);
                let circuit = OpticalCircuit::with_elements(registry.clone(), vec![OpticalElement::pbs("A", "T", 45.0)]);
                Ok(GatePlan {
                    registry,
                    circuit,
                    prepare: prepare_dcnot,
                    branches: vec![BranchPlan {
                        label: "A=0".into(),
                        pattern: DetectionPattern::coincidence(&["A", "T"]).require("A", 0.0, Accept::Value(0), 1),
                        corrections: vec![],
                    }],
                    logical_ports: vec!["T"],
                })
            }
            GatePreset::Identity => {
                let registry = Arc::new(ModeRegistry::new(["C", "T"], 1)?);
                Ok(GatePlan {
                    registry: registry.clone(),
                    circuit: OpticalCircuit::new(registry),
                    prepare: prepare_identity,
                    branches: vec![BranchPlan {
                        label: "coincidence".into(),
                        pattern: DetectionPattern::coincidence(&["C", "T"]),
                        corrections: vec![],
                    }],
                    logical_ports: vec!["C", "T"],
                })
            }
        }
    }
}

impl fmt::Display for GatePreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GatePreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        GatePreset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown preset `{s}`")))
    }
}

type Prepare = fn(&Arc<ModeRegistry>, &[Complex]) -> Result<PhotonicState>;

struct BranchPlan {
    label: String,
    pattern: DetectionPattern,
    corrections: Vec<FeedForwardRule>,
}

struct GatePlan {
    registry: Arc<ModeRegistry>,
    circuit: OpticalCircuit,
    prepare: Prepare,
    branches: Vec<BranchPlan>,
    logical_ports: Vec<&'static str>,
}

/// One accepted detector outcome of a gate run.
#[derive(Clone, Debug)]
pub struct Branch {
    pub label: String,
    pub outcome: PostSelectOutcome,
    /// Conditional state after the branch's feed-forward corrections.
    pub corrected: PhotonicState,
    /// `√p ·` logical amplitudes of the corrected state.
    pub logical: DVector<Complex>,
}

#[derive(Clone, Debug)]
pub struct GateRun {
    pub branches: Vec<Branch>,
    pub output_ports: Vec<String>,
}

impl GateRun {
    pub fn success_probability(&self) -> f64 {
        self.branches.iter().map(|b| b.outcome.success_probability).sum()
    }

    /// Combines the accepted branches into one outcome. Different branches
    /// leave different detector records, so their corrected projections are
    /// orthogonal and simply add.
    pub fn combined(&self) -> Result<PostSelectOutcome> {
        let first = &self.branches[0].corrected;
        let mut acc = PhotonicState::empty(first.registry().clone()).with_max_photons(first.max_photons())?;
        for b in &self.branches {
            if !b.corrected.is_empty() {
                acc = acc.add(&b.corrected.scale(Complex::new(b.outcome.success_probability.sqrt(), 0.0)))?;
            }
        }
        let p = self.success_probability();
        let conditional = if p > 0.0 { acc.normalize()?.0 } else { acc };
        Ok(PostSelectOutcome { conditional_state: conditional, success_probability: p, residual_weight: 1.0 - p })
    }

    /// Logical amplitudes of the combined outcome's output qubits, taken from
    /// the first non-empty branch and normalized.
    pub fn logical_output(&self) -> Option<DVector<Complex>> {
        self.branches
            .iter()
            .find(|b| b.outcome.success_probability > 0.0)
            .map(|b| &b.logical / Complex::new(b.outcome.success_probability.sqrt(), 0.0))
    }
}

/// Textbook CNOT on `|c t⟩`.
pub fn cnot_matrix() -> DMatrix<Complex> {
    let mut m = DMatrix::from_element(4, 4, ZERO);
    m[(0, 0)] = ONE;
    m[(1, 1)] = ONE;
    m[(3, 2)] = ONE;
    m[(2, 3)] = ONE;
    m
}

/// Elements of the one-ancilla CNOT: PBS-1 mixes ancilla and control, the
/// ancilla-side output continues (through an optional fiber rotation) into
/// the 45° PBS-2 with the target.
pub fn cnot1a_elements(birefringence: Option<f64>) -> Vec<OpticalElement> {
    let mut e = vec![OpticalElement::pbs("A", "C", 0.0)];
    if let Some(angle) = birefringence {
        e.push(OpticalElement::rotator("A", angle));
    }
    e.push(OpticalElement::pbs("A", "T", 45.0));
    e
}

/// Coincidence pattern with the ancilla detector set to `ancilla_value`.
pub fn cnot1a_pattern(ancilla_value: u8) -> DetectionPattern {
    DetectionPattern::coincidence(&["A", "C", "T"]).require("A", 0.0, Accept::Value(ancilla_value), 1)
}

/// Bit-flips the target when the ancilla detector reads 1.
pub fn cnot1a_feed_forward() -> FeedForwardRule {
    FeedForwardRule {
        trigger_port: "A".into(),
        trigger_value: 1,
        target_port: "T".into(),
        correction: Correction::BitFlip,
    }
}

/// Pattern and corrections for one outcome of the two-ancilla gate. D1 reads
/// in the diagonal basis, D2 in the computational basis.
fn cnot2a_branch(d1: u8, d2: u8) -> (DetectionPattern, Vec<FeedForwardRule>) {
    let pattern = DetectionPattern::coincidence(&["A1", "C", "A2", "T"])
        .require("A1", 45.0, Accept::Value(d1), 1)
        .require("A2", 0.0, Accept::Value(d2), 1);
    let mut corrections = Vec::new();
    if d1 == 1 {
        corrections.push(FeedForwardRule {
            trigger_port: "A1".into(),
            trigger_value: 1,
            target_port: "C".into(),
            correction: Correction::NegPhaseFlip,
        });
    }
    if d2 == 1 {
        corrections.push(FeedForwardRule {
            trigger_port: "A2".into(),
            trigger_value: 1,
            target_port: "T".into(),
            correction: Correction::BitFlip,
        });
    }
    (pattern, corrections)
}

fn creator(registry: &ModeRegistry, port: &str, amps: [Complex; 2]) -> Result<Vec<(usize, Complex)>> {
    let p = registry.port_index(port)?;
    Ok(vec![(registry.mode(p, Polarization::H, 0), amps[0]), (registry.mode(p, Polarization::V, 0), amps[1])])
}

fn pol(registry: &ModeRegistry, port: &str, bit: usize) -> Result<Vec<(usize, Complex)>> {
    let p = registry.port_index(port)?;
    Ok(vec![(registry.mode(p, Polarization::from_bit(bit as u8), 0), ONE)])
}

fn diagonal() -> [Complex; 2] {
    let s = Complex::new(0.5f64.sqrt(), 0.0);
    [s, s]
}

/// `Σ_ct α_ct · extra · a†_{C,c} a†_{T,t} |0⟩` on the given ports.
fn two_qubit_input(
    registry: &Arc<ModeRegistry>,
    ports: [&str; 2],
    input: &[Complex],
    extra: &[Vec<(usize, Complex)>],
) -> Result<PhotonicState> {
    let mut acc = PhotonicState::empty(registry.clone());
    for (i, &a) in input.iter().enumerate() {
        if a == ZERO {
            continue;
        }
        let mut creators = extra.to_vec();
        creators.push(pol(registry, ports[0], i >> 1)?);
        creators.push(pol(registry, ports[1], i & 1)?);
        acc = acc.add(&PhotonicState::from_creators(registry.clone(), &creators)?.scale(a))?;
    }
    Ok(acc)
}

fn prepare_cnot1a(registry: &Arc<ModeRegistry>, input: &[Complex]) -> Result<PhotonicState> {
    let ancilla = creator(registry, "A", diagonal())?;
    two_qubit_input(registry, ["C", "T"], input, &[ancilla])
}

fn prepare_cnot2a(registry: &Arc<ModeRegistry>, input: &[Complex]) -> Result<PhotonicState> {
    let s = Complex::new(0.5f64.sqrt(), 0.0);
    let mut acc = PhotonicState::empty(registry.clone());
    for bit in 0..2 {
        let pair = [pol(registry, "A1", bit)?, pol(registry, "A2", bit)?];
        acc = acc.add(&two_qubit_input(registry, ["C", "T"], input, &pair)?.scale(s))?;
    }
    Ok(acc)
}

fn prepare_encoder(registry: &Arc<ModeRegistry>, input: &[Complex]) -> Result<PhotonicState> {
    PhotonicState::from_creators(
        registry.clone(),
        &[creator(registry, "A", diagonal())?, creator(registry, "C", [input[0], input[1]])?],
    )
}

fn prepare_dcnot(registry: &Arc<ModeRegistry>, input: &[Complex]) -> Result<PhotonicState> {
    two_qubit_input(registry, ["A", "T"], input, &[])
}

fn prepare_identity(registry: &Arc<ModeRegistry>, input: &[Complex]) -> Result<PhotonicState> {
    two_qubit_input(registry, ["C", "T"], input, &[])
}

/// One-ancilla CNOT accepting only the ancilla-0 outcome.
pub fn cnot_one_ancilla(input: &InputAmplitudes) -> Result<PostSelectOutcome> {
    let run = GatePreset::Cnot1a.run(input.as_array())?;
    Ok(run.branches[0].outcome.clone())
}

/// Both ancilla outcomes, per branch and combined.
#[derive(Clone, Debug)]
pub struct FeedForwardOutcome {
    pub combined: PostSelectOutcome,
    pub branches: Vec<Branch>,
}

/// One-ancilla CNOT with the ancilla-1 outcome rescued by a target bit flip.
pub fn cnot_one_ancilla_with_feedforward(input: &InputAmplitudes) -> Result<FeedForwardOutcome> {
    let run = GatePreset::Cnot1aFeedForward.run(input.as_array())?;
    Ok(FeedForwardOutcome { combined: run.combined()?, branches: run.branches })
}

/// Two-ancilla CNOT, all four heralded outcomes combined after correction.
pub fn cnot_two_ancilla(input: &InputAmplitudes) -> Result<PostSelectOutcome> {
    GatePreset::Cnot2a.run(input.as_array())?.combined()
}

/// Copies a polarization qubit onto two photons.
pub fn encoder(qubit: [Complex; 2]) -> Result<PostSelectOutcome> {
    Ok(GatePreset::Encoder.run(&qubit)?.branches[0].outcome.clone())
}

/// Destructive CNOT: control enters port `A`, target port `T`.
pub fn destructive_cnot(input: &InputAmplitudes) -> Result<PostSelectOutcome> {
    Ok(GatePreset::Dcnot.run(input.as_array())?.branches[0].outcome.clone())
}

/// Post-selected logical action of a preset.
#[derive(Clone, Debug)]
pub struct LogicalMap {
    /// Maps logical inputs to `√p ·` logical outputs (first accepted branch,
    /// rescaled to the total success probability).
    pub matrix: DMatrix<Complex>,
    pub success_probability: f64,
    /// Spread of the success probability across probe inputs.
    pub probability_spread: f64,
    /// Worst mismatch between superposition probes and the linear map.
    pub linearity_error: f64,
    /// Worst disagreement between branches after normalization.
    pub branch_deviation: f64,
    /// Set when any of the consistency checks exceeds 1e-10.
    pub flagged: bool,
}

impl LogicalMap {
    /// `‖M/√p − ideal‖_max`.
    pub fn deviation_from(&self, ideal: &DMatrix<Complex>) -> f64 {
        if self.success_probability <= 0.0 {
            return f64::INFINITY;
        }
        let s = self.success_probability.sqrt();
        (self.matrix.map(|z| z / s) - ideal).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

fn probe_inputs(dim: usize) -> Vec<DVector<Complex>> {
    let s = 0.5f64.sqrt();
    let i = Complex::new(0.0, 1.0);
    let mut probes = Vec::new();
    for k in 0..dim {
        let mut v = DVector::from_element(dim, ZERO);
        v[k] = ONE;
        probes.push(v);
    }
    let pairs: Vec<(usize, usize, Complex)> = if dim == 2 {
        vec![(0, 1, ONE), (0, 1, i)]
    } else {
        vec![(0, 1, ONE), (0, 2, i), (1, 3, -ONE), (2, 3, Complex::new(s, s))]
    };
    for (a, b, phase) in pairs {
        let mut v = DVector::from_element(dim, ZERO);
        v[a] = Complex::new(s, 0.0);
        v[b] = phase * s;
        probes.push(v);
    }
    probes
}

/// Reconstructs the post-selected map of a preset from basis probes and
/// checks it on superposition probes.
pub fn extract_logical_map(preset: GatePreset) -> Result<LogicalMap> {
    const TOL: f64 = 1e-10;
    let din = 1usize << preset.input_qubits();
    let dout = 1usize << preset.output_qubits();
    let probes = probe_inputs(din);
    let runs = probes
        .iter()
        .map(|x| preset.run(x.as_slice()))
        .collect::<Result<Vec<_>>>()?;

    let nb = runs[0].branches.len();
    let mut maps = vec![DMatrix::from_element(dout, din, ZERO); nb];
    for (col, run) in runs.iter().take(din).enumerate() {
        for (b, branch) in run.branches.iter().enumerate() {
            maps[b].set_column(col, &branch.logical);
        }
    }

    let probs: Vec<f64> = runs.iter().map(GateRun::success_probability).collect();
    let p_max = probs.iter().copied().fold(f64::MIN, f64::max);
    let p_min = probs.iter().copied().fold(f64::MAX, f64::min);
    let p = probs.iter().sum::<f64>() / probs.len() as f64;

    let mut linearity_error = 0.0f64;
    for (x, run) in probes.iter().zip(&runs).skip(din) {
        for (b, branch) in run.branches.iter().enumerate() {
            let predicted = &maps[b] * x;
            let err = (predicted - &branch.logical).iter().map(|z| z.norm()).fold(0.0, f64::max);
            linearity_error = linearity_error.max(err);
        }
    }

    let branch_probs: Vec<f64> = (0..nb)
        .map(|b| (0..din).map(|c| maps[b].column(c).norm_squared()).sum::<f64>() / din as f64)
        .collect();
    let normalized: Vec<DMatrix<Complex>> = maps
        .iter()
        .zip(&branch_probs)
        .map(|(m, &pb)| if pb > 0.0 { m.map(|z| z / pb.sqrt()) } else { m.clone() })
        .collect();
    let mut branch_deviation = 0.0f64;
    for m in &normalized[1..] {
        let d = (m - &normalized[0]).iter().map(|z| z.norm()).fold(0.0, f64::max);
        branch_deviation = branch_deviation.max(d);
    }

    let matrix = normalized[0].map(|z| z * p.sqrt());
    let spread = p_max - p_min;
    Ok(LogicalMap {
        matrix,
        success_probability: p,
        probability_spread: spread,
        linearity_error,
        branch_deviation,
        flagged: spread > TOL || linearity_error > TOL || branch_deviation > TOL,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BellLabel {
    PhiPlus,
    PhiMinus,
    PsiPlus,
    PsiMinus,
}

impl BellLabel {
    /// Amplitudes on `|00⟩, |01⟩, |10⟩, |11⟩`.
    pub fn amplitudes(self) -> [Complex; 4] {
        let s = Complex::new(0.5f64.sqrt(), 0.0);
        match self {
            BellLabel::PhiPlus => [s, ZERO, ZERO, s],
            BellLabel::PhiMinus => [s, ZERO, ZERO, -s],
            BellLabel::PsiPlus => [ZERO, s, s, ZERO],
            BellLabel::PsiMinus => [ZERO, s, -s, ZERO],
        }
    }
}

/// A Bell state of two photons in `ports`.
pub fn bell_state(label: BellLabel, ports: [&str; 2]) -> Result<PhotonicState> {
    let registry = Arc::new(ModeRegistry::new(ports, 1)?);
    two_qubit_input(&registry, ports, &label.amplitudes(), &[])
}

/// Pure state whose polarization part is `v |B⟩⟨B| + (1 − v) I/4`.
///
/// The mixing is carried by five orthogonal internal bins on the second
/// photon: bin 0 holds the Bell component, bins 1–4 one product component
/// each. Detection ignores bins, so every fringe visibility is `v`.
pub fn degraded_bell_state(label: BellLabel, visibility: f64, ports: [&str; 2]) -> Result<PhotonicState> {
    if !(0.0..=1.0).contains(&visibility) {
        return Err(Error::Config(format!("visibility {visibility} outside [0, 1]")));
    }
    let registry = Arc::new(ModeRegistry::new(ports, 5)?);
    let p0 = registry.port_index(ports[0])?;
    let p1 = registry.port_index(ports[1])?;
    let mut state = PhotonicState::empty(registry.clone());
    let bell = label.amplitudes();
    let noise = ((1.0 - visibility) / 4.0).sqrt();
    for idx in 0..4 {
        let a = Polarization::from_bit((idx >> 1) as u8);
        let b = Polarization::from_bit((idx & 1) as u8);
        let mut occ = vec![0u8; registry.mode_count()];
        occ[registry.mode(p0, a, 0)] = 1;
        occ[registry.mode(p1, b, 0)] = 1;
        state.add_term(FockState::from_occupations(occ.clone()), bell[idx] * visibility.sqrt())?;
        occ[registry.mode(p1, b, 0)] = 0;
        occ[registry.mode(p1, b, 1 + idx)] = 1;
        state.add_term(FockState::from_occupations(occ), Complex::new(noise, 0.0))?;
    }
    state.prune();
    Ok(state)
}

/// Analyzer angles (degrees) for the two sides of a CHSH test.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChshAngles {
    pub a: f64,
    pub a_prime: f64,
    pub b: f64,
    pub b_prime: f64,
}

impl ChshAngles {
    /// The setting that maximizes `S` for Φ⁺.
    pub const CANONICAL: ChshAngles = ChshAngles { a: 0.0, a_prime: 45.0, b: 22.5, b_prime: 67.5 };
}

/// Polarization correlation `⟨σ(a) ⊗ σ(b)⟩` of a normalized two-qubit
/// density matrix; `σ(θ)` is +1 for light passing an analyzer at θ.
pub fn correlation(rho: &DMatrix<Complex>, a: f64, b: f64) -> f64 {
    let obs = |t: f64| {
        let (s, c) = (2.0 * t).to_radians().sin_cos();
        DMatrix::from_row_slice(2, 2, &[Complex::new(c, 0.0), Complex::new(s, 0.0), Complex::new(s, 0.0), Complex::new(-c, 0.0)])
    };
    (rho * obs(a).kronecker(&obs(b))).trace().re
}

/// CHSH value `|E(a,b) − E(a,b′) + E(a′,b) + E(a′,b′)|` of the photons in
/// `ports`, traced over everything else.
pub fn chsh_value(state: &PhotonicState, ports: [&str; 2], angles: ChshAngles) -> Result<f64> {
    let rho = logical_density(state, &ports)?;
    let tr = rho.trace().re;
    if tr <= 0.0 {
        return Err(Error::NotTwoQubit("state has no two-photon coincidence component".into()));
    }
    let rho = rho.map(|z| z / tr);
    Ok(chsh_from_density(&rho, angles))
}

pub fn chsh_from_density(rho: &DMatrix<Complex>, angles: ChshAngles) -> f64 {
    let e = |x, y| correlation(rho, x, y);
    (e(angles.a, angles.b) - e(angles.a, angles.b_prime) + e(angles.a_prime, angles.b) + e(angles.a_prime, angles.b_prime))
        .abs()
}
