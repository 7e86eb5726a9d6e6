//! Linear-optical elements and exact multi-photon evolution.
//!
//! Conventions (all angles in degrees):
//!
//! * A mode matrix `U` maps creation operators as `a†_in → Σ_out U[out, in] a†_out`.
//! * `PolarizingBS` at angle 0 transmits H (the photon stays in its port) and
//!   reflects V into the partner port with amplitude +1 in both directions.
//!   This real permutation completion makes the post-selected one-ancilla
//!   CNOT equal the textbook CNOT with no residual local phases.
//! * `PolarizingBS` at angle θ is `R(θ) · PBS(0) · R(−θ)` on both ports.
//! * `BeamSplitter` uses the symmetric form `[[√T, i√R], [i√R, √T]]`.
//! * `WavePlate` is a half-wave plate with Jones matrix
//!   `[[cos 2θ, sin 2θ], [sin 2θ, −cos 2θ]]`.
//! * `BasisRotator` rotates linear polarization: `H → cos θ H + sin θ V`.

mod evolve;
mod permanent;

pub use evolve::{evolve, evolve_with, Strategy};
pub use permanent::{permanent, permanent_row_major, MAX_PERMANENT_DIM};

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::fock::{Complex, ModeRegistry, Polarization};

const ZERO: Complex = Complex::new(0.0, 0.0);
const ONE: Complex = Complex::new(1.0, 0.0);

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ElementKind {
    BeamSplitter { reflectivity: f64 },
    PolarizingBS { basis_angle: f64 },
    WavePlate { angle: f64 },
    BasisRotator { angle: f64 },
    PhaseShifter { phase: f64 },
    Polarizer { angle: f64 },
}

impl ElementKind {
    fn name(&self) -> &'static str {
        match self {
            ElementKind::BeamSplitter { .. } => "beam-splitter",
            ElementKind::PolarizingBS { .. } => "pbs",
            ElementKind::WavePlate { .. } => "wave-plate",
            ElementKind::BasisRotator { .. } => "basis-rotator",
            ElementKind::PhaseShifter { .. } => "phase-shifter",
            ElementKind::Polarizer { .. } => "polarizer",
        }
    }

    fn arity(&self) -> &'static [usize] {
        match self {
            ElementKind::BeamSplitter { .. } | ElementKind::PolarizingBS { .. } => &[2],
            ElementKind::BasisRotator { .. } => &[1, 2],
            _ => &[1],
        }
    }
}

/// One element of a circuit and the ports it acts on.
#[derive(Clone, Debug, PartialEq)]
pub struct OpticalElement {
    pub kind: ElementKind,
    pub ports: Vec<String>,
}

impl OpticalElement {
    pub fn new<S: Into<String>>(kind: ElementKind, ports: impl IntoIterator<Item = S>) -> Self {
        Self { kind, ports: ports.into_iter().map(Into::into).collect() }
    }

    pub fn pbs(a: &str, b: &str, basis_angle: f64) -> Self {
        Self::new(ElementKind::PolarizingBS { basis_angle }, [a, b])
    }

    pub fn beam_splitter(a: &str, b: &str, reflectivity: f64) -> Self {
        Self::new(ElementKind::BeamSplitter { reflectivity }, [a, b])
    }

    pub fn wave_plate(port: &str, angle: f64) -> Self {
        Self::new(ElementKind::WavePlate { angle }, [port])
    }

    pub fn rotator(port: &str, angle: f64) -> Self {
        Self::new(ElementKind::BasisRotator { angle }, [port])
    }

    pub fn phase(port: &str, phase: f64) -> Self {
        Self::new(ElementKind::PhaseShifter { phase }, [port])
    }
}

/// 2×2 Jones matrix of a half-wave plate with its axis at `angle`.
pub fn half_wave_jones(angle: f64) -> [[Complex; 2]; 2] {
    let t = (2.0 * angle).to_radians();
    let (s, c) = t.sin_cos();
    [[Complex::new(c, 0.0), Complex::new(s, 0.0)], [Complex::new(s, 0.0), Complex::new(-c, 0.0)]]
}

/// Rotation of linear polarization by `angle`.
pub fn rotation_jones(angle: f64) -> [[Complex; 2]; 2] {
    let (s, c) = angle.to_radians().sin_cos();
    [[Complex::new(c, 0.0), Complex::new(-s, 0.0)], [Complex::new(s, 0.0), Complex::new(c, 0.0)]]
}

/// Single-photon transfer matrix over every mode of a registry.
#[derive(Clone, Debug, PartialEq)]
pub struct ModeUnitary {
    matrix: DMatrix<Complex>,
    registry: Arc<ModeRegistry>,
}

impl ModeUnitary {
    pub fn identity(registry: Arc<ModeRegistry>) -> Self {
        let n = registry.mode_count();
        Self { matrix: DMatrix::identity(n, n), registry }
    }

    pub fn from_matrix(registry: Arc<ModeRegistry>, matrix: DMatrix<Complex>) -> Result<Self> {
        let n = registry.mode_count();
        if matrix.nrows() != n || matrix.ncols() != n {
            return Err(Error::NonSquare { rows: matrix.nrows(), cols: matrix.ncols() });
        }
        Ok(Self { matrix, registry })
    }

    pub fn matrix(&self) -> &DMatrix<Complex> {
        &self.matrix
    }

    pub fn registry(&self) -> &Arc<ModeRegistry> {
        &self.registry
    }

    /// `‖U†U − I‖_max`.
    pub fn unitarity_defect(&self) -> f64 {
        let n = self.matrix.nrows();
        let p = self.matrix.adjoint() * &self.matrix;
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                let target = if i == j { ONE } else { ZERO };
                worst = worst.max((p[(i, j)] - target).norm());
            }
        }
        worst
    }

    /// `self` followed by `next`.
    pub fn then(&self, next: &ModeUnitary) -> Result<ModeUnitary> {
        if self.registry != next.registry {
            return Err(Error::RegistryMismatch);
        }
        Ok(ModeUnitary { matrix: &next.matrix * &self.matrix, registry: self.registry.clone() })
    }

    pub fn adjoint(&self) -> ModeUnitary {
        ModeUnitary { matrix: self.matrix.adjoint(), registry: self.registry.clone() }
    }
}

/// Embeds a block acting on `(port_i, pol)` pairs, indexed `i * 2 + pol`,
/// into the full mode space, identically on every internal bin.
fn embed(registry: &ModeRegistry, ports: &[usize], block: &DMatrix<Complex>) -> DMatrix<Complex> {
    let n = registry.mode_count();
    let mut m = DMatrix::identity(n, n);
    let k = ports.len() * 2;
    for bin in 0..registry.internal_bins() {
        let idx = |i: usize| registry.mode(ports[i / 2], Polarization::BOTH[i % 2], bin);
        for i in 0..k {
            for j in 0..k {
                m[(idx(i), idx(j))] = block[(i, j)];
            }
        }
    }
    m
}

fn jones_block(j: [[Complex; 2]; 2], ports: usize) -> DMatrix<Complex> {
    let mut b = DMatrix::zeros(2 * ports, 2 * ports);
    for p in 0..ports {
        for r in 0..2 {
            for c in 0..2 {
                b[(2 * p + r, 2 * p + c)] = j[r][c];
            }
        }
    }
    b
}

fn pbs_block(angle: f64) -> DMatrix<Complex> {
    // Index order: (p,H), (p,V), (q,H), (q,V).
    let mut pbs = DMatrix::zeros(4, 4);
    pbs[(0, 0)] = ONE;
    pbs[(2, 2)] = ONE;
    pbs[(3, 1)] = ONE;
    pbs[(1, 3)] = ONE;
    if angle == 0.0 {
        return pbs;
    }
    let rot = jones_block(rotation_jones(angle), 2);
    let back = jones_block(rotation_jones(-angle), 2);
    rot * pbs * back
}

/// Mode unitary of a single element.
pub fn element_unitary(e: &OpticalElement, registry: &Arc<ModeRegistry>) -> Result<ModeUnitary> {
    if !e.kind.arity().contains(&e.ports.len()) {
        return Err(Error::InvalidElement(format!(
            "{} acts on {:?} ports, got {}",
            e.kind.name(),
            e.kind.arity(),
            e.ports.len()
        )));
    }
    let ports = e.ports.iter().map(|p| registry.port_index(p)).collect::<Result<Vec<_>>>()?;
    if ports.len() == 2 && ports[0] == ports[1] {
        return Err(Error::InvalidElement(format!("{} needs two distinct ports", e.kind.name())));
    }
    let block = match e.kind {
        ElementKind::BeamSplitter { reflectivity } => {
            if !(0.0..=1.0).contains(&reflectivity) {
                return Err(Error::InvalidElement(format!("reflectivity {reflectivity} outside [0, 1]")));
            }
            let t = Complex::new((1.0 - reflectivity).sqrt(), 0.0);
            let r = Complex::new(0.0, reflectivity.sqrt());
            let mut b = DMatrix::zeros(4, 4);
            for pol in 0..2 {
                b[(pol, pol)] = t;
                b[(2 + pol, 2 + pol)] = t;
                b[(pol, 2 + pol)] = r;
                b[(2 + pol, pol)] = r;
            }
            b
        }
        ElementKind::PolarizingBS { basis_angle } => pbs_block(basis_angle),
        ElementKind::WavePlate { angle } => jones_block(half_wave_jones(angle), 1),
        ElementKind::BasisRotator { angle } => jones_block(rotation_jones(angle), ports.len()),
        ElementKind::PhaseShifter { phase } => {
            let p = Complex::from_polar(1.0, phase.to_radians());
            jones_block([[p, ZERO], [ZERO, p]], 1)
        }
        ElementKind::Polarizer { .. } => return Err(Error::NonUnitaryElement(e.kind.name().into())),
    };
    Ok(ModeUnitary { matrix: embed(registry, &ports, &block), registry: registry.clone() })
}

/// Ordered list of elements on a fixed registry.
#[derive(Clone, Debug)]
pub struct OpticalCircuit {
    registry: Arc<ModeRegistry>,
    elements: Vec<OpticalElement>,
}

impl OpticalCircuit {
    pub fn new(registry: Arc<ModeRegistry>) -> Self {
        Self { registry, elements: Vec::new() }
    }

    pub fn with_elements(registry: Arc<ModeRegistry>, elements: Vec<OpticalElement>) -> Self {
        Self { registry, elements }
    }

    pub fn push(&mut self, e: OpticalElement) -> &mut Self {
        self.elements.push(e);
        self
    }

    pub fn registry(&self) -> &Arc<ModeRegistry> {
        &self.registry
    }

    pub fn elements(&self) -> &[OpticalElement] {
        &self.elements
    }

    /// Same elements on another registry with the same ports (typically one
    /// with more internal bins).
    pub fn on_registry(&self, registry: Arc<ModeRegistry>) -> Self {
        Self { registry, elements: self.elements.clone() }
    }

    /// Product of the element matrices, last element leftmost.
    pub fn compile(&self) -> Result<ModeUnitary> {
        let mut u = ModeUnitary::identity(self.registry.clone());
        for e in &self.elements {
            let m = element_unitary(e, &self.registry)?;
            u.matrix = m.matrix * u.matrix;
        }
        Ok(u)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn reg(ports: &[&str], bins: usize) -> Arc<ModeRegistry> {
        Arc::new(ModeRegistry::new(ports.iter().copied(), bins).unwrap())
    }

    #[test]
    fn wave_plate_at_22_5_makes_diagonal() {
        let r = reg(&["A"], 1);
        let u = element_unitary(&OpticalElement::wave_plate("A", 22.5), &r).unwrap();
        let s = 0.5f64.sqrt();
        assert_abs_diff_eq!(u.matrix()[(0, 0)].re, s, epsilon = 1e-15);
        assert_abs_diff_eq!(u.matrix()[(1, 0)].re, s, epsilon = 1e-15);
    }

    #[test]
    fn pbs_transmits_h() {
        let r = reg(&["a", "b"], 1);
        let u = element_unitary(&OpticalElement::pbs("a", "b", 0.0), &r).unwrap();
        let h_a = r.mode(0, Polarization::H, 0);
        assert_eq!(u.matrix()[(h_a, h_a)], ONE);
        let v_a = r.mode(0, Polarization::V, 0);
        let v_b = r.mode(1, Polarization::V, 0);
        assert_eq!(u.matrix()[(v_b, v_a)], ONE);
        assert_eq!(u.matrix()[(v_a, v_b)], ONE);
    }

    #[test]
    fn rotated_pbs_separates_diagonal_basis() {
        let r = reg(&["a", "b"], 1);
        let u = element_unitary(&OpticalElement::pbs("a", "b", 45.0), &r).unwrap();
        let s = 0.5f64.sqrt();
        // |D⟩ in port a stays in port a as |D⟩.
        let d = nalgebra::DVector::from_vec(vec![Complex::new(s, 0.0), Complex::new(s, 0.0), ZERO, ZERO]);
        let out = u.matrix() * d;
        assert_abs_diff_eq!(out[0].re, s, epsilon = 1e-15);
        assert_abs_diff_eq!(out[1].re, s, epsilon = 1e-15);
        assert_abs_diff_eq!(out[2].norm() + out[3].norm(), 0.0, epsilon = 1e-15);
        assert!(u.unitarity_defect() < 1e-15);
    }

    #[test]
    fn balanced_beam_splitter_matrix() {
        let r = reg(&["a", "b"], 1);
        let u = element_unitary(&OpticalElement::beam_splitter("a", "b", 0.5), &r).unwrap();
        let s = 0.5f64.sqrt();
        let h_a = r.mode(0, Polarization::H, 0);
        let h_b = r.mode(1, Polarization::H, 0);
        assert_abs_diff_eq!(u.matrix()[(h_a, h_a)].re, s, epsilon = 1e-15);
        assert_abs_diff_eq!(u.matrix()[(h_b, h_a)].im, s, epsilon = 1e-15);
        assert_abs_diff_eq!(u.matrix()[(h_a, h_b)].im, s, epsilon = 1e-15);
        assert!(u.unitarity_defect() < 1e-15);
    }

    #[test]
    fn polarizer_is_not_a_unitary() {
        let r = reg(&["a"], 1);
        let e = OpticalElement::new(ElementKind::Polarizer { angle: 0.0 }, ["a"]);
        assert!(matches!(element_unitary(&e, &r), Err(Error::NonUnitaryElement(_))));
    }

    #[test]
    fn unknown_port_is_error() {
        let r = reg(&["a"], 1);
        let e = OpticalElement::wave_plate("z", 0.0);
        assert_eq!(element_unitary(&e, &r), Err(Error::UnknownPort("z".into())));
    }

    #[test]
    fn empty_circuit_compiles_to_identity() {
        let r = reg(&["a", "b"], 2);
        let u = OpticalCircuit::new(r.clone()).compile().unwrap();
        assert_eq!(u, ModeUnitary::identity(r));
    }

    #[test]
    fn two_half_wave_plates_cancel() {
        let r = reg(&["a"], 1);
        let mut c = OpticalCircuit::new(r.clone());
        c.push(OpticalElement::wave_plate("a", 22.5)).push(OpticalElement::wave_plate("a", 22.5));
        let u = c.compile().unwrap();
        let id = ModeUnitary::identity(r);
        assert!((u.matrix() - id.matrix()).iter().all(|z| z.norm() < 1e-12));
    }

    #[test]
    fn elements_act_on_every_bin() {
        let r = reg(&["a"], 3);
        let u = element_unitary(&OpticalElement::wave_plate("a", 45.0), &r).unwrap();
        for bin in 0..3 {
            let h = r.mode(0, Polarization::H, bin);
            let v = r.mode(0, Polarization::V, bin);
            assert_abs_diff_eq!(u.matrix()[(v, h)].re, 1.0, epsilon = 1e-15);
        }
    }
}
