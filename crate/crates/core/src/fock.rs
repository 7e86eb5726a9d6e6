//! Multi-photon pure states over a finite set of optical modes.
//!
//! Every spatial port carries two polarization modes (H before V), and each
//! polarization mode is further split into `internal_bins` orthogonal
//! spectral/temporal bins. Detectors never resolve the bins, so photons that
//! sit in different bins do not interfere at detection.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Complex = Complex64;

/// Amplitudes with modulus below this are dropped from sparse states.
pub const PRUNE_THRESHOLD: f64 = 1e-14;

/// Default cap on the photon number of any term.
pub const DEFAULT_MAX_PHOTONS: usize = 4;

/// Polarization of a mode in the computational frame. `H` encodes logical 0.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Polarization {
    H,
    V,
}

impl Polarization {
    pub const BOTH: [Polarization; 2] = [Polarization::H, Polarization::V];

    pub fn index(self) -> usize {
        match self {
            Polarization::H => 0,
            Polarization::V => 1,
        }
    }

    pub fn from_bit(bit: u8) -> Self {
        if bit == 0 {
            Polarization::H
        } else {
            Polarization::V
        }
    }
}

/// Location of one optical mode.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ModeId {
    pub port: usize,
    pub polarization: Polarization,
    pub bin: usize,
}

/// Ordered set of spatial ports with a dense mode index.
///
/// Modes are laid out port-major, then H before V, then bins ascending, so
/// `index = (port * 2 + pol) * internal_bins + bin`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ModeRegistry {
    ports: Vec<String>,
    internal_bins: usize,
}

impl ModeRegistry {
    pub fn new<I, S>(ports: I, internal_bins: usize) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let ports: Vec<String> = ports.into_iter().map(Into::into).collect();
        if internal_bins == 0 {
            return Err(Error::Config("internal_bins must be at least 1".into()));
        }
        for (i, p) in ports.iter().enumerate() {
            if ports[..i].contains(p) {
                return Err(Error::RegistryConflict(format!("duplicate port `{p}`")));
            }
        }
        Ok(Self { ports, internal_bins })
    }

    pub fn ports(&self) -> &[String] {
        &self.ports
    }

    pub fn internal_bins(&self) -> usize {
        self.internal_bins
    }

    pub fn port_count(&self) -> usize {
        self.ports.len()
    }

    pub fn mode_count(&self) -> usize {
        self.ports.len() * 2 * self.internal_bins
    }

    pub fn port_index(&self, label: &str) -> Result<usize> {
        self.ports
            .iter()
            .position(|p| p == label)
            .ok_or_else(|| Error::UnknownPort(label.to_string()))
    }

    pub fn has_port(&self, label: &str) -> bool {
        self.ports.iter().any(|p| p == label)
    }

    #[inline]
    pub fn mode(&self, port: usize, pol: Polarization, bin: usize) -> usize {
        debug_assert!(port < self.ports.len() && bin < self.internal_bins);
        (port * 2 + pol.index()) * self.internal_bins + bin
    }

    pub fn mode_id(&self, mode: usize) -> ModeId {
        let bin = mode % self.internal_bins;
        let pp = mode / self.internal_bins;
        ModeId {
            port: pp / 2,
            polarization: if pp.is_multiple_of(2) { Polarization::H } else { Polarization::V },
            bin,
        }
    }

    /// Same ports with a different bin count.
    pub fn with_bins(&self, internal_bins: usize) -> Result<Self> {
        Self::new(self.ports.clone(), internal_bins)
    }
}

/// Occupation number of every mode.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FockState(Vec<u8>);

impl FockState {
    pub fn vacuum(modes: usize) -> Self {
        FockState(vec![0; modes])
    }

    pub fn from_occupations(occ: Vec<u8>) -> Self {
        FockState(occ)
    }

    pub fn occupations(&self) -> &[u8] {
        &self.0
    }

    pub fn photon_number(&self) -> usize {
        self.0.iter().map(|&n| n as usize).sum()
    }

    pub fn get(&self, mode: usize) -> u8 {
        self.0[mode]
    }

    pub(crate) fn occupations_mut(&mut self) -> &mut Vec<u8> {
        &mut self.0
    }

    /// Occupied modes listed with multiplicity, ascending.
    pub fn mode_list(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.photon_number());
        for (m, &n) in self.0.iter().enumerate() {
            for _ in 0..n {
                out.push(m);
            }
        }
        out
    }

    /// Product of the factorials of the occupation numbers.
    pub fn factorial_product(&self) -> f64 {
        self.0.iter().map(|&n| factorial(n as usize)).product()
    }
}

impl fmt::Display for FockState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "|")?;
        for (i, n) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{n}")?;
        }
        write!(f, "⟩")
    }
}

pub(crate) fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Sparse superposition of Fock states.
#[derive(Clone, Debug)]
pub struct PhotonicState {
    registry: Arc<ModeRegistry>,
    terms: BTreeMap<FockState, Complex>,
    max_photons: usize,
}

impl PhotonicState {
    pub fn vacuum(registry: Arc<ModeRegistry>) -> Self {
        let mut terms = BTreeMap::new();
        terms.insert(FockState::vacuum(registry.mode_count()), Complex::new(1.0, 0.0));
        Self { registry, terms, max_photons: DEFAULT_MAX_PHOTONS }
    }

    /// A state with no terms. Only useful as an accumulator or to flag an
    /// empty post-selection.
    pub fn empty(registry: Arc<ModeRegistry>) -> Self {
        Self { registry, terms: BTreeMap::new(), max_photons: DEFAULT_MAX_PHOTONS }
    }

    pub fn from_terms<I>(registry: Arc<ModeRegistry>, terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (FockState, Complex)>,
    {
        let mut state = Self::empty(registry);
        for (k, a) in terms {
            state.add_term(k, a)?;
        }
        state.prune();
        Ok(state)
    }

    /// Applies a product of creation operators to the vacuum. Each creator is
    /// a linear combination of modes `Σ c_m a†_m`.
    ///
    /// The result is exact, including the `√n` bosonic factors, so it is only
    /// normalized when the creators are orthonormal or the caller divides out
    /// the usual `√n!` for repeated modes.
    pub fn from_creators(registry: Arc<ModeRegistry>, creators: &[Vec<(usize, Complex)>]) -> Result<Self> {
        if creators.len() > DEFAULT_MAX_PHOTONS {
            return Err(Error::PhotonCapExceeded { found: creators.len(), cap: DEFAULT_MAX_PHOTONS });
        }
        let modes = registry.mode_count();
        let mut current: BTreeMap<FockState, Complex> = BTreeMap::new();
        current.insert(FockState::vacuum(modes), Complex::new(1.0, 0.0));
        for creator in creators {
            let mut next: BTreeMap<FockState, Complex> = BTreeMap::new();
            for (key, amp) in &current {
                for &(m, c) in creator {
                    if m >= modes {
                        return Err(Error::Config(format!("mode index {m} out of range")));
                    }
                    let mut k = key.clone();
                    let n = k.0[m];
                    k.0[m] = n + 1;
                    let factor = ((n + 1) as f64).sqrt();
                    *next.entry(k).or_insert(Complex::new(0.0, 0.0)) += amp * c * factor;
                }
            }
            current = next;
        }
        let mut state = Self { registry, terms: current, max_photons: DEFAULT_MAX_PHOTONS };
        state.prune();
        Ok(state)
    }

    /// One photon in `(port, pol)`, bin 0.
    pub fn single_photon(registry: Arc<ModeRegistry>, port: &str, pol: Polarization) -> Result<Self> {
        let p = registry.port_index(port)?;
        let m = registry.mode(p, pol, 0);
        Self::from_creators(registry, &[vec![(m, Complex::new(1.0, 0.0))]])
    }

    pub fn with_max_photons(mut self, cap: usize) -> Result<Self> {
        if let Some(n) = self.terms.keys().map(FockState::photon_number).max() {
            if n > cap {
                return Err(Error::PhotonCapExceeded { found: n, cap });
            }
        }
        self.max_photons = cap;
        Ok(self)
    }

    pub fn max_photons(&self) -> usize {
        self.max_photons
    }

    pub fn registry(&self) -> &Arc<ModeRegistry> {
        &self.registry
    }

    pub fn terms(&self) -> impl Iterator<Item = (&FockState, &Complex)> {
        self.terms.iter()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn amplitude(&self, key: &FockState) -> Complex {
        self.terms.get(key).copied().unwrap_or_default()
    }

    pub fn add_term(&mut self, key: FockState, amp: Complex) -> Result<()> {
        if key.0.len() != self.registry.mode_count() {
            return Err(Error::RegistryMismatch);
        }
        let n = key.photon_number();
        if n > self.max_photons {
            return Err(Error::PhotonCapExceeded { found: n, cap: self.max_photons });
        }
        *self.terms.entry(key).or_insert(Complex::new(0.0, 0.0)) += amp;
        Ok(())
    }

    pub fn prune(&mut self) {
        self.terms.retain(|_, a| a.norm() >= PRUNE_THRESHOLD);
    }

    pub fn norm_sqr(&self) -> f64 {
        self.terms.values().map(|a| a.norm_sqr()).sum()
    }

    /// Photon numbers present, ascending.
    pub fn photon_numbers(&self) -> Vec<usize> {
        let mut ns: Vec<usize> = self.terms.keys().map(FockState::photon_number).collect();
        ns.sort_unstable();
        ns.dedup();
        ns
    }

    /// Terms with exactly `n` photons.
    pub fn sector(&self, n: usize) -> Self {
        Self {
            registry: self.registry.clone(),
            terms: self.terms.iter().filter(|(k, _)| k.photon_number() == n).map(|(k, a)| (k.clone(), *a)).collect(),
            max_photons: self.max_photons,
        }
    }

    pub fn scale(&self, factor: Complex) -> Self {
        let mut out = self.clone();
        for a in out.terms.values_mut() {
            *a *= factor;
        }
        out.prune();
        out
    }

    /// Linear combination `self + other`.
    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.registry != other.registry {
            return Err(Error::RegistryMismatch);
        }
        let mut out = self.clone();
        for (k, a) in &other.terms {
            out.add_term(k.clone(), *a)?;
        }
        out.prune();
        Ok(out)
    }

    /// Returns the normalized state together with the original norm.
    pub fn normalize(&self) -> Result<(Self, f64)> {
        let norm = self.norm_sqr().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::ZeroNorm);
        }
        let mut out = self.clone();
        for a in out.terms.values_mut() {
            *a /= norm;
        }
        out.prune();
        Ok((out, norm))
    }

    /// `⟨self|other⟩`, conjugate-linear in `self`.
    pub fn inner_product(&self, other: &Self) -> Result<Complex> {
        if self.registry != other.registry {
            return Err(Error::RegistryMismatch);
        }
        let (small, large, conj_small) = if self.terms.len() <= other.terms.len() {
            (self, other, true)
        } else {
            (other, self, false)
        };
        let mut acc = Complex::new(0.0, 0.0);
        for (k, a) in &small.terms {
            if let Some(b) = large.terms.get(k) {
                acc += if conj_small { a.conj() * b } else { b.conj() * a };
            }
        }
        Ok(acc)
    }

    /// Tensor product over disjoint port sets. The combined registry lists
    /// `self`'s ports first.
    pub fn tensor(&self, other: &Self) -> Result<Self> {
        for p in other.registry.ports() {
            if self.registry.has_port(p) {
                return Err(Error::RegistryConflict(format!("port `{p}` appears in both factors")));
            }
        }
        if self.registry.internal_bins() != other.registry.internal_bins() {
            return Err(Error::RegistryConflict("factors use different internal bin counts".into()));
        }
        let ports = self.registry.ports().iter().chain(other.registry.ports()).cloned();
        let registry = Arc::new(ModeRegistry::new(ports, self.registry.internal_bins())?);
        let cap = self.max_photons.max(other.max_photons);
        let mut out = Self { registry, terms: BTreeMap::new(), max_photons: cap };
        for (ka, a) in &self.terms {
            for (kb, b) in &other.terms {
                let mut occ = ka.0.clone();
                occ.extend_from_slice(&kb.0);
                out.add_term(FockState(occ), a * b)?;
            }
        }
        out.prune();
        Ok(out)
    }

    /// Re-expresses the state on a registry with the same ports and more
    /// internal bins; existing bins keep their indices.
    pub fn widen_bins(&self, internal_bins: usize) -> Result<Self> {
        let old = &self.registry;
        if internal_bins < old.internal_bins() {
            return Err(Error::Config("cannot shrink internal bins".into()));
        }
        let registry = Arc::new(old.with_bins(internal_bins)?);
        let mut out = Self { registry: registry.clone(), terms: BTreeMap::new(), max_photons: self.max_photons };
        for (k, a) in &self.terms {
            let mut occ = vec![0u8; registry.mode_count()];
            for (m, &n) in k.0.iter().enumerate() {
                let id = old.mode_id(m);
                occ[registry.mode(id.port, id.polarization, id.bin)] = n;
            }
            out.terms.insert(FockState(occ), *a);
        }
        Ok(out)
    }

    /// Number of photons found in `port`, summed over polarizations and bins.
    pub fn port_count(&self, key: &FockState, port: usize) -> usize {
        let bins = self.registry.internal_bins();
        let start = port * 2 * bins;
        key.0[start..start + 2 * bins].iter().map(|&n| n as usize).sum()
    }
}

/// Amplitudes of `|0c0t⟩, |0c1t⟩, |1c0t⟩, |1c1t⟩`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InputAmplitudes(pub [Complex; 4]);

impl InputAmplitudes {
    pub fn new(a: [Complex; 4]) -> Result<Self> {
        let n: f64 = a.iter().map(|c| c.norm_sqr()).sum();
        if (n - 1.0).abs() > 1e-10 {
            return Err(Error::NotNormalized(n));
        }
        Ok(Self(a))
    }

    /// Normalizes arbitrary nonzero amplitudes.
    pub fn normalized(a: [Complex; 4]) -> Result<Self> {
        let n: f64 = a.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        if n == 0.0 {
            return Err(Error::ZeroNorm);
        }
        Ok(Self(a.map(|c| c / n)))
    }

    /// Computational basis input `|c t⟩`.
    pub fn basis(control: u8, target: u8) -> Self {
        let mut a = [Complex::new(0.0, 0.0); 4];
        a[((control & 1) * 2 + (target & 1)) as usize] = Complex::new(1.0, 0.0);
        Self(a)
    }

    /// Product state from single-qubit amplitudes.
    pub fn product(control: [Complex; 2], target: [Complex; 2]) -> Result<Self> {
        Self::new([control[0] * target[0], control[0] * target[1], control[1] * target[0], control[1] * target[1]])
    }

    pub fn as_array(&self) -> &[Complex; 4] {
        &self.0
    }
}
