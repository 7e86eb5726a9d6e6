//! Experiment orchestration: truth tables, fringes, HOM and three-photon
//! scans, CHSH tables and overlap calibration.
//!
//! Two back ends compute coincidence probabilities. The optical one builds
//! the photons from [`SourceConfig`] and propagates them through the
//! one-ancilla network, so distinguishability, multi-photon pulses and
//! birefringence all show up. The logical one runs a gate preset on ideal
//! photons and reads its post-selected output directly; it covers the
//! presets whose sources are not modeled.

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::error::{Error, Result};
use crate::fit::{angle_grid, fit_fringe, FitOptions, FitResult};
use crate::fock::Complex;
use crate::frame::{analyzer_for_value, from_logical, preparation_for_value, Frame, Side};
use crate::gates::{
    chsh_value, cnot1a_elements, degraded_bell_state, logical_density, post_select, Accept, BellLabel, ChshAngles,
    DetectionPattern, GatePreset,
};
use crate::optics::{half_wave_jones, OpticalElement};
use crate::report::{Cell, Invariant, RunOutput, Table};
use crate::scenario::{Experiment, Mode, Scenario, SourcePreset, SourcesSpec};
use crate::sources::{
    build_input_state, hom_coincidence, sample_counts, AnalyzerSettings, AncillaBranch, CountingConfig,
    DistinguishabilityConfig, PreparedExperiment, SourceConfig, TargetSource, ANCILLA, CONTROL,
    PAPER_LIKE_VISIBILITY, TARGET,
};

/// Bisection stops once the overlap bracket is narrower than this.
pub const CALIBRATION_TOLERANCE: f64 = 1e-5;
pub const DEFAULT_FRINGE_POINTS: usize = 13;
pub const DEFAULT_SCAN_POINTS: usize = 21;
pub const DEFAULT_CHSH_VISIBILITIES: [f64; 7] = [1.0, 0.9, 0.8, 0.75, 0.71, PAPER_LIKE_VISIBILITY, 0.5];

/// Wave-plate angle that prepares `(|0⟩+|1⟩)/√2`.
const SUPERPOSITION: f64 = 22.5;

/// How coincidence probabilities are computed.
#[derive(Clone, Debug)]
pub enum Backend {
    Optical { sources: SourceConfig, elements: Vec<OpticalElement>, branches: Vec<AncillaBranch> },
    Logical { preset: GatePreset },
}

const ANCILLA_ZERO: AncillaBranch = AncillaBranch { ancilla_value: 0, flip_target: false };
const ANCILLA_ONE_FLIPPED: AncillaBranch = AncillaBranch { ancilla_value: 1, flip_target: true };

impl Backend {
    pub fn optical(sources: SourceConfig, preset: GatePreset) -> Result<Self> {
        let branches = match preset {
            GatePreset::Cnot1a => vec![ANCILLA_ZERO],
            GatePreset::Cnot1aFeedForward => vec![ANCILLA_ZERO, ANCILLA_ONE_FLIPPED],
            other => {
                return Err(Error::Config(format!("preset `{other}` has no source-level model")));
            }
        };
        let elements = cnot1a_elements(sources.birefringence);
        Ok(Backend::Optical { sources, elements, branches })
    }

    pub fn from_scenario(sc: &Scenario) -> Result<Self> {
        let sources = resolve_sources(&sc.sources_spec())?;
        if let Some(circuit) = &sc.circuit {
            let elements = circuit.iter().map(|e| e.to_element()).collect();
            return Ok(Backend::Optical { sources, elements, branches: vec![ANCILLA_ZERO] });
        }
        let preset = sc.gate();
        match preset {
            GatePreset::Cnot1a | GatePreset::Cnot1aFeedForward => Backend::optical(sources, preset),
            _ if is_ideal(&sources) => Ok(Backend::Logical { preset }),
            _ => Err(Error::Config(format!("preset `{preset}` only runs with ideal sources"))),
        }
    }

    /// Number of detectors in a coincidence.
    pub fn fold(&self) -> u32 {
        match self {
            Backend::Optical { .. } => 3,
            Backend::Logical { preset: GatePreset::Cnot2a } => 4,
            Backend::Logical { preset: GatePreset::Cnot1a | GatePreset::Cnot1aFeedForward } => 3,
            Backend::Logical { .. } => 2,
        }
    }

    /// Coincidence probability for each analyzer setting, with the control
    /// and target prepared by half-wave plates at the given angles.
    pub fn probabilities(&self, control_prep: f64, target_prep: f64, settings: &[AnalyzerSettings]) -> Result<Vec<f64>> {
        match self {
            Backend::Optical { sources, elements, branches } => {
                let src = sources.clone().with_inputs(control_prep, target_prep);
                let input = build_input_state(&src.spdc, &src.target, &src.distinguishability)?;
                let prepared = PreparedExperiment::new(&input, elements, branches.clone())?;
                settings.par_iter().map(|s| prepared.probability(s)).collect()
            }
            Backend::Logical { preset } => {
                let (rho, p) = logical_output(*preset, control_prep, target_prep)?;
                Ok(settings
                    .iter()
                    .map(|s| {
                        let [_, tc, tt] = s.to_logical();
                        let phi = if rho.nrows() == 2 { polarization(tt) } else { polarization(tc).kronecker(&polarization(tt)) };
                        p * (phi.adjoint() * &rho * &phi)[(0, 0)].re
                    })
                    .collect())
            }
        }
    }
}

fn polarization(theta: f64) -> DVector<Complex> {
    let (s, c) = theta.to_radians().sin_cos();
    DVector::from_row_slice(&[Complex::new(c, 0.0), Complex::new(s, 0.0)])
}

fn prep_amplitudes(angle: f64) -> [Complex; 2] {
    let j = half_wave_jones(angle);
    [j[0][0], j[1][0]]
}

/// Normalized logical output density and success probability of a preset.
fn logical_output(preset: GatePreset, control_prep: f64, target_prep: f64) -> Result<(DMatrix<Complex>, f64)> {
    let c = prep_amplitudes(control_prep);
    let t = prep_amplitudes(target_prep);
    let input: Vec<Complex> =
        if preset.input_qubits() == 1 { c.to_vec() } else { vec![c[0] * t[0], c[0] * t[1], c[1] * t[0], c[1] * t[1]] };
    let run = preset.run(&input)?;
    let out = run.combined()?;
    let ports: Vec<&str> = run.output_ports.iter().map(String::as_str).collect();
    if out.success_probability <= 0.0 {
        let d = 1 << ports.len();
        return Ok((DMatrix::from_element(d, d, Complex::new(0.0, 0.0)), 0.0));
    }
    Ok((logical_density(&out.conditional_state, &ports)?, out.success_probability))
}

fn is_ideal(s: &SourceConfig) -> bool {
    matches!(s.target, TargetSource::SinglePhoton { .. })
        && s.birefringence.is_none()
        && s.distinguishability.overlaps.values().all(|&v| v == 1.0)
}

/// Sources behind a scenario's `sources` entry. `paper-like` triggers the
/// (cached) calibration on first use.
pub fn resolve_sources(spec: &SourcesSpec) -> Result<SourceConfig> {
    match spec {
        SourcesSpec::Preset(SourcePreset::Ideal) => Ok(SourceConfig::ideal()),
        SourcesSpec::Preset(SourcePreset::PaperLike) => paper_like_sources(),
        SourcesSpec::Custom(c) => Ok(c.clone()),
    }
}

/// Paper-like sources before calibration: weak-coherent target, SPDC pair
/// overlap 0.90, target overlap `target`.
pub fn paper_like_base(target: f64) -> SourceConfig {
    SourceConfig {
        target: TargetSource::default(),
        distinguishability: DistinguishabilityConfig::paper_like_with(target),
        ..SourceConfig::default()
    }
}

/// Target-photon overlap that puts the paper-like fringe visibility at
/// [`PAPER_LIKE_VISIBILITY`]. Computed once per process.
pub fn paper_like_target_overlap() -> Result<f64> {
    static CACHE: OnceLock<Result<f64>> = OnceLock::new();
    CACHE
        .get_or_init(|| {
            calibrate_target_overlap(&paper_like_base(1.0), GatePreset::Cnot1a, PAPER_LIKE_VISIBILITY, CALIBRATION_TOLERANCE)
                .map(|c| c.overlap)
        })
        .clone()
}

pub fn paper_like_sources() -> Result<SourceConfig> {
    Ok(paper_like_base(paper_like_target_overlap()?))
}

fn with_target_overlap(base: &SourceConfig, s: f64) -> SourceConfig {
    let mut src = base.clone();
    src.distinguishability = src.distinguishability.clone().with(ANCILLA, TARGET, s).with(CONTROL, TARGET, s);
    src
}

fn realizable(src: &SourceConfig) -> bool {
    src.distinguishability.internal_states(&crate::sources::PORTS).is_ok()
}

/// Gated fringe: control in `(|0⟩+|1⟩)/√2`, target `|0⟩`, ancilla and
/// control analyzers at logical 0, target analyzer over 0°..180°.
pub fn gated_fringe(backend: &Backend, points: usize) -> Result<FitResult> {
    let grid = angle_grid(0.0, 180.0, points);
    let settings: Vec<_> = grid.iter().map(|&t| AnalyzerSettings::logical(0.0, 0.0, t)).collect();
    let probs = backend.probabilities(SUPERPOSITION, 0.0, &settings)?;
    fit_fringe(&grid, &probs, FitOptions::default())
}

#[derive(Clone, Debug, Serialize)]
pub struct CalibrationStep {
    pub overlap: f64,
    pub visibility: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct CalibrationReport {
    pub target_visibility: f64,
    pub overlap: f64,
    pub visibility: f64,
    /// Largest target overlap compatible with the other overlaps.
    pub upper_bound: f64,
    pub tolerance: f64,
    pub steps: Vec<CalibrationStep>,
}

/// Finds the target-photon overlap (with both SPDC photons) at which the
/// gated fringe visibility equals `target`, by bisection. The visibility is
/// monotone in that overlap.
pub fn calibrate_target_overlap(
    base: &SourceConfig,
    preset: GatePreset,
    target: f64,
    tolerance: f64,
) -> Result<CalibrationReport> {
    let visibility = |s: f64| -> Result<f64> {
        let b = Backend::optical(with_target_overlap(base, s), preset)?;
        Ok(gated_fringe(&b, DEFAULT_FRINGE_POINTS)?.visibility)
    };
    let mut upper = 1.0;
    if !realizable(&with_target_overlap(base, 1.0)) {
        let (mut lo, mut hi) = (0.0, 1.0);
        if !realizable(&with_target_overlap(base, 0.0)) {
            return Err(Error::NotPositiveSemidefinite("pair overlaps are not realizable".into()));
        }
        while hi - lo > 1e-9 {
            let mid = 0.5 * (lo + hi);
            if realizable(&with_target_overlap(base, mid)) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        upper = lo;
    }
    let mut steps = Vec::new();
    let (mut lo, mut hi) = (0.0, upper);
    let (v_lo, v_hi) = (visibility(lo)?, visibility(hi)?);
    steps.push(CalibrationStep { overlap: lo, visibility: v_lo });
    steps.push(CalibrationStep { overlap: hi, visibility: v_hi });
    if !(v_lo <= target && target <= v_hi) {
        return Err(Error::Config(format!(
            "target visibility {target} outside reachable range [{v_lo:.4}, {v_hi:.4}]"
        )));
    }
    while hi - lo > tolerance {
        let mid = 0.5 * (lo + hi);
        let v = visibility(mid)?;
        steps.push(CalibrationStep { overlap: mid, visibility: v });
        if v < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let overlap = 0.5 * (lo + hi);
    let v = visibility(overlap)?;
    Ok(CalibrationReport { target_visibility: target, overlap, visibility: v, upper_bound: upper, tolerance, steps })
}

/// Probability or sampled count per setting, with binomial standard error.
#[derive(Clone, Debug, Serialize)]
pub struct Measured {
    pub probability: f64,
    pub count: Option<u64>,
    pub stderr: f64,
}

fn measure(probs: &[f64], mode: Mode, counting: &CountingConfig, fold: u32) -> Result<Vec<Measured>> {
    match mode {
        Mode::Exact => Ok(probs.iter().map(|&p| Measured { probability: p, count: None, stderr: 0.0 }).collect()),
        Mode::Sampled => {
            let table: Vec<(usize, f64)> = probs.iter().copied().enumerate().collect();
            let n = counting.trials_per_setting as f64;
            Ok(sample_counts(&table, counting, fold)?
                .into_iter()
                .map(|(i, k)| {
                    let q = if n > 0.0 { k as f64 / n } else { 0.0 };
                    Measured { probability: probs[i], count: Some(k), stderr: (n * q * (1.0 - q)).sqrt() }
                })
                .collect())
        }
    }
}

fn observed(m: &Measured) -> f64 {
    m.count.map_or(m.probability, |c| c as f64)
}

#[derive(Clone, Debug, Serialize)]
pub struct TruthTableReport {
    /// `[input][output]` coincidence probabilities (or counts) with inputs
    /// and outputs ordered `00, 01, 10, 11` (control first).
    pub cells: Vec<Vec<Measured>>,
    /// Each input row normalized over its four outputs.
    pub conditional: Vec<Vec<f64>>,
    /// `[input][output]` true where the ideal gate puts its output.
    pub correct: Vec<Vec<bool>>,
    /// Mean weight on the twelve incorrect cells.
    pub error_fraction: f64,
}

/// Four basis inputs × four output analyzer pairs.
pub fn truth_table(backend: &Backend, preset: GatePreset, mode: Mode, counting: &CountingConfig) -> Result<TruthTableReport> {
    if preset.input_qubits() != 2 || preset.output_qubits() != 2 {
        return Err(Error::Config(format!("preset `{preset}` has no two-qubit truth table")));
    }
    let ideal = preset.ideal_map();
    let mut probs = Vec::with_capacity(16);
    for input in 0..4u8 {
        let settings: Vec<_> = (0..4u8)
            .map(|out| AnalyzerSettings::logical(0.0, analyzer_for_value(out >> 1), analyzer_for_value(out & 1)))
            .collect();
        probs.extend(backend.probabilities(preparation_for_value(input >> 1), preparation_for_value(input & 1), &settings)?);
    }
    let measured = measure(&probs, mode, counting, backend.fold())?;
    let cells: Vec<Vec<Measured>> = measured.chunks(4).map(|c| c.to_vec()).collect();
    let correct: Vec<Vec<bool>> =
        (0..4).map(|i| (0..4).map(|o| ideal[(o, i)].norm() > 0.5).collect()).collect();
    let conditional: Vec<Vec<f64>> = cells
        .iter()
        .map(|row| {
            let total: f64 = row.iter().map(observed).sum();
            row.iter().map(|m| if total > 0.0 { observed(m) / total } else { 0.0 }).collect()
        })
        .collect();
    let mut wrong = 0.0;
    for (i, row) in conditional.iter().enumerate() {
        for (o, v) in row.iter().enumerate() {
            if !correct[i][o] {
                wrong += v;
            }
        }
    }
    Ok(TruthTableReport { cells, conditional, correct, error_fraction: wrong / 4.0 })
}

#[derive(Clone, Debug, Serialize)]
pub struct FringeRow {
    pub theta_a: f64,
    pub theta_c: f64,
    pub theta_t: f64,
    pub measured: Measured,
    pub fitted: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct FringeReport {
    pub frame: Frame,
    pub rows: Vec<FringeRow>,
    pub fit: FitResult,
}

/// Coincidences versus the target analyzer with the control in
/// superposition and the target prepared in `|0⟩`. Angles are read in
/// `frame`; the fit phase is reported in the same frame.
#[allow(clippy::too_many_arguments)]
pub fn fringe(
    backend: &Backend,
    frame: Frame,
    theta_a: f64,
    theta_c: f64,
    theta_t: &[f64],
    mode: Mode,
    counting: &CountingConfig,
    options: FitOptions,
) -> Result<FringeReport> {
    let settings: Vec<_> =
        theta_t.iter().map(|&t| AnalyzerSettings { theta_a, theta_c, theta_t: t, frame }).collect();
    let probs = backend.probabilities(SUPERPOSITION, 0.0, &settings)?;
    let measured = measure(&probs, mode, counting, backend.fold())?;
    let y: Vec<f64> = measured.iter().map(observed).collect();
    let fit = fit_fringe(theta_t, &y, options)?;
    let rows = theta_t
        .iter()
        .zip(measured)
        .map(|(&t, m)| FringeRow { theta_a, theta_c, theta_t: t, measured: m, fitted: fit.eval(t) })
        .collect();
    Ok(FringeReport { frame, rows, fit })
}

#[derive(Clone, Debug, Serialize)]
pub struct HomRow {
    pub overlap: f64,
    pub measured: Measured,
    pub visibility: f64,
}

/// Two photons on a balanced splitter: coincidence versus overlap, with
/// `visibility = 1 − 2p`.
pub fn hom_scan(overlaps: &[f64], mode: Mode, counting: &CountingConfig) -> Result<Vec<HomRow>> {
    let probs = overlaps.par_iter().map(|&s| hom_coincidence(s)).collect::<Result<Vec<_>>>()?;
    let measured = measure(&probs, mode, counting, 2)?;
    Ok(overlaps
        .iter()
        .zip(measured)
        .map(|(&s, m)| {
            let visibility = 1.0 - 2.0 * m.probability;
            HomRow { overlap: s, measured: m, visibility }
        })
        .collect())
}

#[derive(Clone, Debug, Serialize)]
pub struct ScanRow {
    pub overlap: f64,
    pub fit: FitResult,
}

#[derive(Clone, Debug, Serialize)]
pub struct ThreePhotonScan {
    pub rows: Vec<ScanRow>,
    /// Overlaps skipped because no set of internal states realizes them.
    pub unrealizable: Vec<f64>,
}

/// Gated fringe visibility versus the target photon's overlap with both
/// SPDC photons, other overlaps taken from `base`.
pub fn three_photon_scan(base: &SourceConfig, preset: GatePreset, overlaps: &[f64]) -> Result<ThreePhotonScan> {
    let (ok, bad): (Vec<f64>, Vec<f64>) =
        overlaps.iter().partition(|&&s| realizable(&with_target_overlap(base, s)));
    let rows = ok
        .par_iter()
        .map(|&s| {
            let b = Backend::optical(with_target_overlap(base, s), preset)?;
            Ok(ScanRow { overlap: s, fit: gated_fringe(&b, DEFAULT_FRINGE_POINTS)? })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ThreePhotonScan { rows, unrealizable: bad })
}

#[derive(Clone, Debug, Serialize)]
pub struct ChshRow {
    pub source: String,
    pub visibility: f64,
    pub angles: ChshAngles,
    pub s: f64,
    /// `2√2·v`.
    pub expected: f64,
}

/// Gate output state for a superposition control and `|0⟩` target, in the
/// three-photon sector, conditioned on the ancilla reading 0.
pub fn entangled_output(backend: &Backend) -> Result<(crate::fock::PhotonicState, [&'static str; 2])> {
    match backend {
        Backend::Optical { sources, elements, .. } => {
            let src = sources.clone().with_inputs(SUPERPOSITION, 0.0);
            let input = build_input_state(&src.spdc, &src.target, &src.distinguishability)?;
            let prepared = PreparedExperiment::new(&input, elements, vec![])?;
            let pattern = DetectionPattern::coincidence(&[ANCILLA, CONTROL, TARGET]).require(
                ANCILLA,
                0.0,
                Accept::Value(0),
                1,
            );
            Ok((post_select(prepared.output(), &pattern)?.conditional_state, [CONTROL, TARGET]))
        }
        Backend::Logical { preset } => {
            let c = prep_amplitudes(SUPERPOSITION);
            let input: Vec<Complex> =
                if preset.input_qubits() == 1 { c.to_vec() } else { vec![c[0], Complex::new(0.0, 0.0), c[1], Complex::new(0.0, 0.0)] };
            let run = preset.run(&input)?;
            let ports = match preset {
                GatePreset::Encoder => [CONTROL, ANCILLA],
                GatePreset::Dcnot => return Err(Error::Config("dcnot has a single output qubit".into())),
                _ => [CONTROL, TARGET],
            };
            Ok((run.combined()?.conditional_state, ports))
        }
    }
}

/// CHSH values of the gate output and of Φ⁺ degraded to each visibility.
pub fn chsh_table(backend: &Backend, visibilities: &[f64], angle_sets: &[ChshAngles]) -> Result<Vec<ChshRow>> {
    let mut rows = Vec::new();
    let (state, ports) = entangled_output(backend)?;
    let gate_v = match backend {
        Backend::Optical { .. } => gated_fringe(backend, DEFAULT_FRINGE_POINTS)?.visibility,
        Backend::Logical { .. } => f64::NAN,
    };
    for &angles in angle_sets {
        rows.push(ChshRow {
            source: "gate".into(),
            visibility: gate_v,
            angles,
            s: chsh_value(&state, ports, angles)?,
            expected: 2.0 * 2f64.sqrt() * gate_v,
        });
    }
    for &v in visibilities {
        let state = degraded_bell_state(BellLabel::PhiPlus, v, [CONTROL, TARGET])?;
        for &angles in angle_sets {
            rows.push(ChshRow {
                source: "bell".into(),
                visibility: v,
                angles,
                s: chsh_value(&state, [CONTROL, TARGET], angles)?,
                expected: 2.0 * 2f64.sqrt() * v,
            });
        }
    }
    Ok(rows)
}

fn single(axis: &Option<crate::scenario::AngleSpec>, name: &str, default: f64) -> Result<f64> {
    match axis {
        None => Ok(default),
        Some(a) => {
            let v = a.values();
            if v.len() != 1 {
                return Err(Error::Scenario(format!("`{name}` must be a single angle for this experiment")));
            }
            Ok(v[0])
        }
    }
}

fn mode_name(mode: Mode) -> &'static str {
    match mode {
        Mode::Exact => "exact",
        Mode::Sampled => "sampled",
    }
}

/// Runs one scenario and collects its table, summary and invariant checks.
pub fn run_scenario(sc: &Scenario) -> Result<RunOutput> {
    sc.validate()?;
    let counting = sc.counting();
    let mode = sc.mode;
    let mut invariants = Vec::new();
    let (table, summary) = match sc.experiment {
        Experiment::TruthTable => {
            let backend = Backend::from_scenario(sc)?;
            let rep = truth_table(&backend, sc.gate(), mode, &counting)?;
            let mut t = Table::new(&[
                "input_c", "input_t", "output_c", "output_t", "correct", "probability", "count", "stderr", "conditional",
            ]);
            for i in 0..4 {
                for o in 0..4 {
                    let m = &rep.cells[i][o];
                    t.push(vec![
                        Cell::Int((i >> 1) as u64),
                        Cell::Int((i & 1) as u64),
                        Cell::Int((o >> 1) as u64),
                        Cell::Int((o & 1) as u64),
                        Cell::Int(rep.correct[i][o] as u64),
                        m.probability.into(),
                        m.count.into(),
                        m.stderr.into(),
                        rep.conditional[i][o].into(),
                    ]);
                }
                let sum: f64 = rep.conditional[i].iter().sum();
                invariants.push(Invariant::check(
                    &format!("row {:02b} is a conditional distribution", i),
                    (sum - 1.0).abs() < 1e-10,
                    format!("sum = {sum}"),
                ));
            }
            let success: Vec<f64> = rep.cells.iter().map(|r| r.iter().map(|m| m.probability).sum()).collect();
            (t, json!({ "error_fraction": rep.error_fraction, "success_probability": success }))
        }
        Experiment::Fringe => {
            let backend = Backend::from_scenario(sc)?;
            let frame = sc.sweep.frame;
            let ta = single(&sc.sweep.theta_a, "theta_a", from_logical(0.0, ANCILLA, Side::Output, frame))?;
            let tc = single(&sc.sweep.theta_c, "theta_c", from_logical(0.0, CONTROL, Side::Output, frame))?;
            let grid = match &sc.sweep.theta_t {
                Some(a) => a.values(),
                None => angle_grid(0.0, 180.0, DEFAULT_FRINGE_POINTS),
            };
            let options = FitOptions { free_period: sc.fit.free_period, ..Default::default() };
            let rep = fringe(&backend, frame, ta, tc, &grid, mode, &counting, options)?;
            let mut t = Table::new(&["theta_a", "theta_c", "theta_t", "probability", "count", "stderr", "fit"]);
            for r in &rep.rows {
                t.push(vec![
                    r.theta_a.into(),
                    r.theta_c.into(),
                    r.theta_t.into(),
                    r.measured.probability.into(),
                    r.measured.count.into(),
                    r.measured.stderr.into(),
                    r.fitted.into(),
                ]);
            }
            invariants.push(Invariant::check("fit converged", rep.fit.converged, format!("{} iterations", rep.fit.iterations)));
            invariants.push(Invariant::check(
                "visibility within [0, 1 + 3 stderr]",
                rep.fit.visibility_plausible(),
                format!("V = {} ± {}", rep.fit.visibility, rep.fit.stderr.visibility),
            ));
            (t, json!({ "frame": frame, "fit": rep.fit }))
        }
        Experiment::Hom => {
            let overlaps = sc.sweep.overlaps.clone().unwrap_or_else(|| angle_grid(0.0, 1.0, DEFAULT_SCAN_POINTS));
            let rows = hom_scan(&overlaps, mode, &counting)?;
            let mut t = Table::new(&["overlap", "probability", "count", "stderr", "visibility"]);
            for r in &rows {
                t.push(vec![
                    r.overlap.into(),
                    r.measured.probability.into(),
                    r.measured.count.into(),
                    r.measured.stderr.into(),
                    r.visibility.into(),
                ]);
                invariants.push(Invariant::check(
                    &format!("visibility equals overlap at s = {}", r.overlap),
                    (r.visibility - r.overlap).abs() < 1e-10,
                    format!("visibility = {}", r.visibility),
                ));
            }
            (t, json!({ "points": rows.len() }))
        }
        Experiment::ThreePhotonScan => {
            let base = match Backend::from_scenario(sc)? {
                Backend::Optical { sources, .. } => sources,
                Backend::Logical { preset } => {
                    return Err(Error::Config(format!("three-photon scan needs a source-level gate, got `{preset}`")))
                }
            };
            let overlaps = sc.sweep.overlaps.clone().unwrap_or_else(|| angle_grid(0.0, 1.0, DEFAULT_SCAN_POINTS));
            let scan = three_photon_scan(&base, sc.gate(), &overlaps)?;
            let mut t =
                Table::new(&["overlap", "visibility", "visibility_stderr", "amplitude", "offset", "phase", "residual_norm"]);
            for r in &scan.rows {
                t.push(vec![
                    r.overlap.into(),
                    r.fit.visibility.into(),
                    r.fit.stderr.visibility.into(),
                    r.fit.amplitude.into(),
                    r.fit.offset.into(),
                    r.fit.phase.into(),
                    r.fit.residual_norm.into(),
                ]);
            }
            let monotone = scan.rows.windows(2).all(|w| w[1].fit.visibility >= w[0].fit.visibility - 1e-9)
                || !overlaps.windows(2).all(|w| w[1] >= w[0]);
            invariants.push(Invariant::check("visibility non-decreasing in overlap", monotone, ""));
            (t, json!({ "unrealizable_overlaps": scan.unrealizable }))
        }
        Experiment::Chsh => {
            let backend = Backend::from_scenario(sc)?;
            let vis = sc.sweep.visibilities.clone().unwrap_or_else(|| DEFAULT_CHSH_VISIBILITIES.to_vec());
            let angles = sc.sweep.chsh_angles.clone().unwrap_or_else(|| vec![ChshAngles::CANONICAL]);
            let rows = chsh_table(&backend, &vis, &angles)?;
            let mut t = Table::new(&["source", "visibility", "a", "a_prime", "b", "b_prime", "s", "expected"]);
            for r in &rows {
                t.push(vec![
                    r.source.as_str().into(),
                    r.visibility.into(),
                    r.angles.a.into(),
                    r.angles.a_prime.into(),
                    r.angles.b.into(),
                    r.angles.b_prime.into(),
                    r.s.into(),
                    r.expected.into(),
                ]);
                invariants.push(Invariant::check(
                    &format!("{} S within the quantum bound", r.source),
                    r.s <= 2.0 * 2f64.sqrt() + 1e-9,
                    format!("S = {}", r.s),
                ));
            }
            let gate_s = rows.first().map(|r| r.s);
            (t, json!({ "gate_s": gate_s, "classical_bound": 2.0 }))
        }
        Experiment::Calibrate => {
            let (base, preset) = match Backend::from_scenario(sc)? {
                Backend::Optical { sources, .. } => (sources, sc.gate()),
                Backend::Logical { preset } => {
                    return Err(Error::Config(format!("calibration needs a source-level gate, got `{preset}`")))
                }
            };
            let base = match sc.sources_spec() {
                SourcesSpec::Preset(SourcePreset::PaperLike) => paper_like_base(1.0),
                _ => base,
            };
            let rep = calibrate_target_overlap(&base, preset, sc.target_visibility(), CALIBRATION_TOLERANCE)?;
            let mut t = Table::new(&["step", "overlap", "visibility"]);
            for (i, s) in rep.steps.iter().enumerate() {
                t.push(vec![Cell::Int(i as u64), s.overlap.into(), s.visibility.into()]);
            }
            invariants.push(Invariant::check(
                "calibrated visibility matches target",
                (rep.visibility - rep.target_visibility).abs() < 1e-3,
                format!("V = {}", rep.visibility),
            ));
            (
                t,
                json!({
                    "target_visibility": rep.target_visibility,
                    "overlap": rep.overlap,
                    "visibility": rep.visibility,
                    "upper_bound": rep.upper_bound,
                    "tolerance": rep.tolerance,
                }),
            )
        }
    };
    Ok(RunOutput {
        scenario_name: sc.name.clone(),
        experiment: sc.experiment.name().to_string(),
        scenario_hash: sc.hash()?,
        seed: counting.seed,
        mode: mode_name(mode).to_string(),
        table,
        summary,
        invariants,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn ideal_truth_table_is_cnot() {
        let b = Backend::optical(SourceConfig::ideal(), GatePreset::Cnot1a).unwrap();
        let rep = truth_table(&b, GatePreset::Cnot1a, Mode::Exact, &CountingConfig::default()).unwrap();
        assert_abs_diff_eq!(rep.error_fraction, 0.0, epsilon = 1e-12);
        for i in 0..4 {
            let s: f64 = rep.cells[i].iter().map(|m| m.probability).sum();
            assert_abs_diff_eq!(s, 0.125, epsilon = 1e-12);
        }
    }

    #[test]
    fn logical_backend_matches_optical() {
        let opt = Backend::optical(SourceConfig::ideal(), GatePreset::Cnot1a).unwrap();
        let log = Backend::Logical { preset: GatePreset::Cnot1a };
        let settings: Vec<_> = [0.0, 30.0, 77.0].iter().map(|&t| AnalyzerSettings::logical(0.0, 20.0, t)).collect();
        let a = opt.probabilities(SUPERPOSITION, 10.0, &settings).unwrap();
        let b = log.probabilities(SUPERPOSITION, 10.0, &settings).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-12);
        }
    }

    #[test]
    fn fringe_follows_control_analyzer() {
        let b = Backend::optical(SourceConfig::ideal(), GatePreset::Cnot1a).unwrap();
        let grid = angle_grid(0.0, 180.0, 13);
        let c = CountingConfig::default();
        let zero = fringe(&b, Frame::Logical, 0.0, 0.0, &grid, Mode::Exact, &c, FitOptions::default()).unwrap();
        assert_abs_diff_eq!(zero.fit.visibility, 1.0, epsilon = 1e-6);
        assert!(zero.fit.phase.min(180.0 - zero.fit.phase) < 1e-6);
        let one = fringe(&b, Frame::Logical, 0.0, 90.0, &grid, Mode::Exact, &c, FitOptions::default()).unwrap();
        assert_abs_diff_eq!(one.fit.phase, 90.0, epsilon = 1e-6);
    }

    #[test]
    fn lab_frame_fringe_peaks_at_45() {
        let b = Backend::optical(SourceConfig::ideal(), GatePreset::Cnot1a).unwrap();
        let grid = angle_grid(0.0, 180.0, 13);
        let rep = fringe(
            &b,
            Frame::Physical,
            45.0,
            0.0,
            &grid,
            Mode::Exact,
            &CountingConfig::default(),
            FitOptions::default(),
        )
        .unwrap();
        assert_abs_diff_eq!(rep.fit.phase, 45.0, epsilon = 1e-6);
    }

    #[test]
    fn gated_visibility_tracks_target_overlap() {
        for s in [0.0, 0.4, 1.0] {
            let src = with_target_overlap(&SourceConfig::ideal(), s);
            let b = Backend::optical(src, GatePreset::Cnot1a).unwrap();
            assert_abs_diff_eq!(gated_fringe(&b, 13).unwrap().visibility, s, epsilon = 1e-6);
        }
    }

    #[test]
    fn two_ancilla_truth_table() {
        let b = Backend::Logical { preset: GatePreset::Cnot2a };
        let rep = truth_table(&b, GatePreset::Cnot2a, Mode::Exact, &CountingConfig::default()).unwrap();
        assert_abs_diff_eq!(rep.error_fraction, 0.0, epsilon = 1e-12);
        let s: f64 = rep.cells[2].iter().map(|m| m.probability).sum();
        assert_abs_diff_eq!(s, 0.25, epsilon = 1e-12);
    }

    #[test]
    fn chsh_table_ideal() {
        let b = Backend::optical(SourceConfig::ideal(), GatePreset::Cnot1a).unwrap();
        let rows = chsh_table(&b, &[0.615], &[ChshAngles::CANONICAL]).unwrap();
        assert_abs_diff_eq!(rows[0].s, 2.0 * 2f64.sqrt(), epsilon = 1e-9);
        assert_abs_diff_eq!(rows[1].s, 2.0 * 2f64.sqrt() * 0.615, epsilon = 1e-9);
    }

    #[test]
    fn non_ideal_logical_preset_rejected() {
        let mut sc = Scenario::new("x", Experiment::TruthTable);
        sc.preset = Some(GatePreset::Cnot2a);
        sc.sources = Some(SourcesSpec::Custom(paper_like_base(0.5)));
        assert!(matches!(Backend::from_scenario(&sc), Err(Error::Config(_))));
    }
}
