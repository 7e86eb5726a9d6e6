//! Photon sources, partial distinguishability, analyzers and count sampling.
//!
//! The three-photon experiment uses a fixed port layout: an SPDC pair feeds
//! the ancilla (`A`) and control (`C`) ports, and an attenuated laser pulse
//! feeds the target (`T`). Each photon carries an internal (spectral or
//! temporal) state; internal states are real unit vectors whose pairwise
//! overlaps come from a [`DistinguishabilityConfig`].

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{factorial, Complex, ModeRegistry, PhotonicState, Polarization, DEFAULT_MAX_PHOTONS};
use crate::frame::{to_logical, Frame, Side};
use crate::gates::{post_select, Accept, DetectionPattern, DetectorKind};
use crate::optics::{evolve, half_wave_jones, OpticalCircuit, OpticalElement};

pub const ANCILLA: &str = "A";
pub const CONTROL: &str = "C";
pub const TARGET: &str = "T";
pub const PORTS: [&str; 3] = [ANCILLA, CONTROL, TARGET];

/// Overlap between the SPDC photons in the `paper-like` preset.
pub const PAPER_LIKE_PAIR_OVERLAP: f64 = 0.90;
/// Gated fringe visibility that the `paper-like` preset is calibrated to.
pub const PAPER_LIKE_VISIBILITY: f64 = 0.615;
/// Largest Poisson tail (beyond `n_max`) accepted for a weak-coherent source.
pub const MAX_TRUNCATION_TAIL: f64 = 1e-4;

pub const DEFAULT_TRIALS: u64 = 100_000;
pub const DEFAULT_SEED: u64 = 42;

/// Wave-plate preparation of the SPDC photons. Angles are half-wave plate
/// axes in degrees acting on H; 22.5° makes the ancilla's `(|0⟩+|1⟩)/√2`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpdcPairConfig {
    pub ancilla_angle: f64,
    pub control_angle: f64,
}

impl Default for SpdcPairConfig {
    fn default() -> Self {
        Self { ancilla_angle: 22.5, control_angle: 0.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WeakCoherentConfig {
    pub mean_photon_number: f64,
    pub n_max: usize,
    pub preparation_angle: f64,
}

impl Default for WeakCoherentConfig {
    fn default() -> Self {
        Self { mean_photon_number: 1e-3, n_max: 2, preparation_angle: 0.0 }
    }
}

impl WeakCoherentConfig {
    /// Photon-number weights conditioned on `1 ≤ n ≤ n_max`, so
    /// `w_n ∝ P(n)`, plus the conditional weight of the dropped tail.
    pub fn sector_weights(&self) -> Result<(Vec<(usize, f64)>, f64)> {
        let mu = self.mean_photon_number;
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(Error::Config(format!("mean photon number must be positive, got {mu}")));
        }
        if self.n_max == 0 {
            return Err(Error::Config("n_max must be at least 1".into()));
        }
        if self.n_max + 2 > DEFAULT_MAX_PHOTONS {
            return Err(Error::PhotonCapExceeded { found: self.n_max + 2, cap: DEFAULT_MAX_PHOTONS });
        }
        let nonvacuum = -(-mu).exp_m1();
        let poisson = |n: usize| (-mu).exp() * mu.powi(n as i32) / factorial(n);
        let weights: Vec<(usize, f64)> = (1..=self.n_max).map(|n| (n, poisson(n) / nonvacuum)).collect();
        let tail = (1.0 - weights.iter().map(|w| w.1).sum::<f64>()).max(0.0);
        if tail > MAX_TRUNCATION_TAIL {
            return Err(Error::Config(format!(
                "Poisson tail beyond n_max = {} is {tail:.3e}, above {MAX_TRUNCATION_TAIL:e}",
                self.n_max
            )));
        }
        let kept = 1.0 - tail;
        Ok((weights.into_iter().map(|(n, w)| (n, w / kept)).collect(), tail))
    }
}

/// Source feeding the target port.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TargetSource {
    SinglePhoton {
        #[serde(default)]
        preparation_angle: f64,
    },
    WeakCoherent(WeakCoherentConfig),
}

impl Default for TargetSource {
    fn default() -> Self {
        TargetSource::WeakCoherent(WeakCoherentConfig::default())
    }
}

impl TargetSource {
    pub fn preparation_angle(&self) -> f64 {
        match self {
            TargetSource::SinglePhoton { preparation_angle } => *preparation_angle,
            TargetSource::WeakCoherent(w) => w.preparation_angle,
        }
    }

    pub fn set_preparation_angle(&mut self, angle: f64) {
        match self {
            TargetSource::SinglePhoton { preparation_angle } => *preparation_angle = angle,
            TargetSource::WeakCoherent(w) => w.preparation_angle = angle,
        }
    }

    fn sector_weights(&self) -> Result<Vec<(usize, f64)>> {
        match self {
            TargetSource::SinglePhoton { .. } => Ok(vec![(1, 1.0)]),
            TargetSource::WeakCoherent(w) => Ok(w.sector_weights()?.0),
        }
    }
}

/// Pairwise squared internal-state overlaps between labeled photons.
/// Missing pairs default to 1 (indistinguishable).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistinguishabilityConfig {
    /// Keys are `"X-Y"` photon-label pairs.
    #[serde(default)]
    pub overlaps: BTreeMap<String, f64>,
}

impl DistinguishabilityConfig {
    pub fn ideal() -> Self {
        Self::default()
    }

    /// SPDC pair at [`PAPER_LIKE_PAIR_OVERLAP`], target photon at `target`
    /// with both.
    pub fn paper_like_with(target: f64) -> Self {
        Self::ideal()
            .with(ANCILLA, CONTROL, PAPER_LIKE_PAIR_OVERLAP)
            .with(ANCILLA, TARGET, target)
            .with(CONTROL, TARGET, target)
    }

    pub fn with(mut self, a: &str, b: &str, overlap: f64) -> Self {
        let (x, y) = if a <= b { (a, b) } else { (b, a) };
        self.overlaps.insert(format!("{x}-{y}"), overlap);
        self
    }

    pub fn overlap(&self, a: &str, b: &str) -> f64 {
        if a == b {
            return 1.0;
        }
        let (x, y) = if a <= b { (a, b) } else { (b, a) };
        self.overlaps.get(&format!("{x}-{y}")).copied().unwrap_or(1.0)
    }

    fn validate(&self, labels: &[&str]) -> Result<()> {
        for (key, &s) in &self.overlaps {
            let known = key
                .split_once('-')
                .map(|(a, b)| a != b && labels.contains(&a) && labels.contains(&b))
                .unwrap_or(false);
            if !known {
                return Err(Error::Config(format!("overlap key `{key}` does not name two distinct photons")));
            }
            if !(0.0..=1.0).contains(&s) {
                return Err(Error::Config(format!("overlap `{key}` = {s} outside [0, 1]")));
            }
        }
        Ok(())
    }

    /// Real internal-state vectors reproducing the overlaps, one per label,
    /// all of length `bins`. Amplitude overlaps are `√s`, so the Gram matrix
    /// is `G_ij = √s_ij`; it is factored incrementally (Cholesky with rank
    /// detection), adding a bin only when a photon leaves the span of the
    /// earlier ones.
    #[allow(clippy::needless_range_loop)]
    pub fn internal_states(&self, labels: &[&str]) -> Result<(usize, Vec<Vec<f64>>)> {
        const TOL: f64 = 1e-10;
        self.validate(labels)?;
        let n = labels.len();
        let g = |i: usize, j: usize| self.overlap(labels[i], labels[j]).sqrt();
        let mut vecs: Vec<Vec<f64>> = Vec::with_capacity(n);
        // owner[k] = photon that created column k
        let mut owner: Vec<usize> = Vec::new();
        for i in 0..n {
            let mut v = Vec::with_capacity(owner.len() + 1);
            for (k, &p) in owner.iter().enumerate() {
                let dot: f64 = (0..k).map(|l| v[l] * vecs[p][l]).sum();
                v.push((g(i, p) - dot) / vecs[p][k]);
            }
            let r = 1.0 - v.iter().map(|x| x * x).sum::<f64>();
            if r < -TOL {
                return Err(Error::NotPositiveSemidefinite(format!(
                    "overlaps involving `{}` cannot be realized by unit vectors",
                    labels[i]
                )));
            }
            if r > TOL {
                v.push(r.sqrt());
                owner.push(i);
            }
            vecs.push(v);
        }
        let bins = owner.len().max(1);
        for v in &mut vecs {
            v.resize(bins, 0.0);
        }
        for i in 0..n {
            for j in 0..i {
                let dot: f64 = vecs[i].iter().zip(&vecs[j]).map(|(a, b)| a * b).sum();
                if (dot - g(i, j)).abs() > 1e-8 {
                    return Err(Error::NotPositiveSemidefinite(format!(
                        "overlap between `{}` and `{}` is inconsistent with the others",
                        labels[i], labels[j]
                    )));
                }
            }
        }
        Ok((bins, vecs))
    }
}

/// Everything that defines the photons entering the gate.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SourceConfig {
    pub spdc: SpdcPairConfig,
    pub target: TargetSource,
    pub distinguishability: DistinguishabilityConfig,
    /// Optional polarization rotation (degrees) of the ancilla fiber between
    /// the two splitters. No default magnitude is assumed.
    pub birefringence: Option<f64>,
}

impl SourceConfig {
    /// Single-photon target, indistinguishable photons.
    pub fn ideal() -> Self {
        Self {
            target: TargetSource::SinglePhoton { preparation_angle: 0.0 },
            ..Self::default()
        }
    }

    pub fn with_inputs(mut self, control_angle: f64, target_angle: f64) -> Self {
        self.spdc.control_angle = control_angle;
        self.target.set_preparation_angle(target_angle);
        self
    }
}

/// Creation operator for one photon at `port` with polarization prepared by
/// a half-wave plate at `wave_plate` (acting on H) and internal state `bins`.
pub fn photon_creator(
    registry: &ModeRegistry,
    port: &str,
    wave_plate: f64,
    internal: &[f64],
) -> Result<Vec<(usize, Complex)>> {
    let p = registry.port_index(port)?;
    let j = half_wave_jones(wave_plate);
    let pol = [j[0][0], j[1][0]];
    let mut c = Vec::new();
    for (b, &w) in internal.iter().enumerate() {
        for (k, pk) in Polarization::BOTH.into_iter().zip(pol) {
            let amp = pk * w;
            if amp.norm() > 0.0 {
                c.push((registry.mode(p, k, b), amp));
            }
        }
    }
    Ok(c)
}

/// Builds the three-port input: ancilla and control from the pair source,
/// target photons from `target`, internal states from `d`.
///
/// Weak-coherent sectors are combined with amplitudes `√w_n`. Sectors differ
/// in photon number, so they never interfere in any detection probability,
/// which is the same as averaging over the pulse's unknown phase.
pub fn build_input_state(
    spdc: &SpdcPairConfig,
    target: &TargetSource,
    d: &DistinguishabilityConfig,
) -> Result<PhotonicState> {
    let (bins, internal) = d.internal_states(&PORTS)?;
    let registry = Arc::new(ModeRegistry::new(PORTS, bins)?);
    let a = photon_creator(&registry, ANCILLA, spdc.ancilla_angle, &internal[0])?;
    let c = photon_creator(&registry, CONTROL, spdc.control_angle, &internal[1])?;
    let t = photon_creator(&registry, TARGET, target.preparation_angle(), &internal[2])?;
    let mut state = PhotonicState::empty(registry.clone());
    for (n, w) in target.sector_weights()? {
        let mut creators = vec![a.clone(), c.clone()];
        creators.extend(std::iter::repeat_n(t.clone(), n));
        let sector = PhotonicState::from_creators(registry.clone(), &creators)?;
        let amp = (w / factorial(n)).sqrt();
        state = state.add(&sector.scale(Complex::new(amp, 0.0)))?;
    }
    Ok(state)
}

/// Analyzer angles for the three detectors.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalyzerSettings {
    pub theta_a: f64,
    pub theta_c: f64,
    pub theta_t: f64,
    pub frame: Frame,
}

impl AnalyzerSettings {
    pub fn logical(theta_a: f64, theta_c: f64, theta_t: f64) -> Self {
        Self { theta_a, theta_c, theta_t, frame: Frame::Logical }
    }

    /// Angles in the simulation frame, reduced to `[0, 180)`.
    pub fn to_logical(&self) -> [f64; 3] {
        [
            to_logical(self.theta_a, ANCILLA, Side::Output, self.frame),
            to_logical(self.theta_c, CONTROL, Side::Output, self.frame),
            to_logical(self.theta_t, TARGET, Side::Output, self.frame),
        ]
    }
}

/// How the ancilla detector's outcome is used.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AncillaBranch {
    pub ancilla_value: u8,
    /// A target bit flip precedes the target analyzer.
    pub flip_target: bool,
}

/// Three-fold threshold-detector coincidence pattern for `settings`
/// (simulation-frame angles) and one ancilla branch.
pub fn coincidence_pattern(angles: [f64; 3], branch: AncillaBranch) -> DetectionPattern {
    // A bit flip before an analyzer at θ equals an analyzer at 90° − θ.
    let theta_t = if branch.flip_target { 90.0 - angles[2] } else { angles[2] };
    DetectionPattern::new()
        .require(ANCILLA, angles[0], Accept::Value(branch.ancilla_value), 1)
        .require(CONTROL, angles[1], Accept::Value(0), 1)
        .require(TARGET, theta_t, Accept::Value(0), 1)
        .with_detectors(DetectorKind::Threshold)
}

/// Probability that `pattern` fires after `state` crosses `circuit`, with the
/// analyzers of `analyzers` replacing the pattern's analysis angles on the
/// three standard ports.
pub fn coincidence_probability(
    state: &PhotonicState,
    circuit: &OpticalCircuit,
    analyzers: &AnalyzerSettings,
    pattern: &DetectionPattern,
) -> Result<f64> {
    let out = evolve(state, &circuit.compile()?)?;
    Ok(post_select(&out, &with_analyzers(pattern, analyzers))?.success_probability)
}

fn with_analyzers(pattern: &DetectionPattern, analyzers: &AnalyzerSettings) -> DetectionPattern {
    let angles = analyzers.to_logical();
    let mut p = pattern.clone();
    for r in &mut p.required {
        if let Some(i) = PORTS.iter().position(|q| *q == r.port) {
            r.analysis_angle = angles[i];
        }
    }
    p
}

/// An input state already propagated through the gate, ready to be probed
/// with many analyzer settings.
#[derive(Clone, Debug)]
pub struct PreparedExperiment {
    output: PhotonicState,
    branches: Vec<AncillaBranch>,
}

impl PreparedExperiment {
    pub fn new(input: &PhotonicState, elements: &[OpticalElement], branches: Vec<AncillaBranch>) -> Result<Self> {
        let circuit = OpticalCircuit::with_elements(input.registry().clone(), elements.to_vec());
        let output = evolve(input, &circuit.compile()?)?;
        Ok(Self { output, branches })
    }

    pub fn output(&self) -> &PhotonicState {
        &self.output
    }

    /// Three-fold coincidence probability, summed over accepted branches.
    pub fn probability(&self, analyzers: &AnalyzerSettings) -> Result<f64> {
        let angles = analyzers.to_logical();
        let mut p = 0.0;
        for &b in &self.branches {
            p += post_select(&self.output, &coincidence_pattern(angles, b))?.success_probability;
        }
        Ok(p)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CountingConfig {
    pub trials_per_setting: u64,
    pub detector_efficiency: f64,
    pub seed: u64,
}

impl Default for CountingConfig {
    fn default() -> Self {
        Self { trials_per_setting: DEFAULT_TRIALS, detector_efficiency: 1.0, seed: DEFAULT_SEED }
    }
}

/// Draws `Binomial(trials, p · efficiency^fold)` for each setting, in table
/// order, from one generator seeded with `counting.seed`.
pub fn sample_counts<S: Clone>(table: &[(S, f64)], counting: &CountingConfig, fold: u32) -> Result<Vec<(S, u64)>> {
    let eff = counting.detector_efficiency;
    if !(eff > 0.0 && eff <= 1.0) {
        return Err(Error::Config(format!("detector efficiency {eff} outside (0, 1]")));
    }
    let scale = eff.powi(fold as i32);
    let mut rng = ChaCha8Rng::seed_from_u64(counting.seed);
    table
        .iter()
        .map(|(s, p)| {
            if !(0.0..=1.0 + 1e-12).contains(p) {
                return Err(Error::Config(format!("probability {p} outside [0, 1]")));
            }
            let q = (p * scale).clamp(0.0, 1.0);
            let dist = Binomial::new(counting.trials_per_setting, q).map_err(|e| Error::Config(e.to_string()))?;
            Ok((s.clone(), dist.sample(&mut rng)))
        })
        .collect()
}

/// Two photons, one at each input of a balanced splitter, with squared
/// internal overlap `overlap`; returns the coincidence probability.
pub fn hom_coincidence(overlap: f64) -> Result<f64> {
    let d = DistinguishabilityConfig::ideal().with("a", "b", overlap);
    let (bins, internal) = d.internal_states(&["a", "b"])?;
    let registry = Arc::new(ModeRegistry::new(["a", "b"], bins)?);
    let state = PhotonicState::from_creators(
        registry.clone(),
        &[photon_creator(&registry, "a", 0.0, &internal[0])?, photon_creator(&registry, "b", 0.0, &internal[1])?],
    )?;
    let circuit = OpticalCircuit::with_elements(registry, vec![OpticalElement::beam_splitter("a", "b", 0.5)]);
    let out = evolve(&state, &circuit.compile()?)?;
    Ok(post_select(&out, &DetectionPattern::coincidence(&["a", "b"]))?.success_probability)
}
