use std::collections::BTreeMap;

use rayon::prelude::*;

use super::permanent::ryser;
use super::ModeUnitary;
use crate::error::{Error, Result};
use crate::fock::{Complex, FockState, PhotonicState};

/// Entries below this modulus are treated as structural zeros when looking
/// for the output modes a photon can reach.
const REACH_EPS: f64 = 1e-15;

/// Evolves a Fock-space state through a linear-optical network.
///
/// For each input term `S` and output pattern `T` with the same photon
/// number, the transition amplitude is `perm(U[T, S]) / √(∏S!·∏T!)`, where
/// `U[T, S]` repeats row `i` `T_i` times and column `j` `S_j` times.
pub fn evolve(state: &PhotonicState, unitary: &ModeUnitary) -> Result<PhotonicState> {
    evolve_with(state, unitary, Strategy::Auto)
}

/// How [`evolve_with`] computes each input term's output amplitudes. Both
/// strategies give the same state up to rounding.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Strategy {
    /// Per term, whichever of the two needs fewer products.
    #[default]
    Auto,
    /// Ryser permanents over all reachable output patterns.
    Permanent,
    /// Direct expansion of the product of creation operators.
    Expansion,
}

pub fn evolve_with(state: &PhotonicState, unitary: &ModeUnitary, strategy: Strategy) -> Result<PhotonicState> {
    if state.registry() != unitary.registry() {
        return Err(Error::RegistryMismatch);
    }
    let cap = state.max_photons();
    let modes = state.registry().mode_count();
    let u = unitary.matrix();

    let inputs: Vec<(&FockState, &Complex)> = state.terms().collect();
    let partials: Vec<Vec<(FockState, Complex)>> = inputs
        .par_iter()
        .map(|&(key, &amp)| {
            let n = key.photon_number();
            let cols = key.mode_list();
            let reach_of =
                |j: usize| -> Vec<usize> { (0..modes).filter(|&i| u[(i, j)].norm() > REACH_EPS).collect() };
            let per_photon: Vec<Vec<usize>> = cols.iter().map(|&j| reach_of(j)).collect();
            let mut reach: Vec<usize> = per_photon.iter().flatten().copied().collect();
            reach.sort_unstable();
            reach.dedup();
            let expansion: f64 = per_photon.iter().map(|r| r.len() as f64).product();
            let expand = match strategy {
                Strategy::Auto => expansion <= multiset_count(reach.len(), n),
                Strategy::Permanent => false,
                Strategy::Expansion => true,
            };
            if expand {
                expand_products(key, amp, &cols, &per_photon, u, modes)
            } else {
                permanent_amplitudes(key, amp, &cols, &reach, u, modes)
            }
        })
        .collect();

    let mut acc: BTreeMap<FockState, Complex> = BTreeMap::new();
    for part in partials {
        for (k, a) in part {
            *acc.entry(k).or_insert(Complex::new(0.0, 0.0)) += a;
        }
    }
    let out = PhotonicState::from_terms(state.registry().clone(), acc)?;
    out.with_max_photons(cap)
}

/// Output amplitudes of one input term via Ryser permanents over every
/// output multiset reachable from its modes.
fn permanent_amplitudes(
    key: &FockState,
    amp: Complex,
    cols: &[usize],
    reach: &[usize],
    u: &nalgebra::DMatrix<Complex>,
    modes: usize,
) -> Vec<(FockState, Complex)> {
    let n = cols.len();
    let in_norm = key.factorial_product();
    let mut out = Vec::new();
    let mut rows = vec![0usize; n];
    let mut sub = vec![Complex::new(0.0, 0.0); n * n];
    let mut sums = vec![Complex::new(0.0, 0.0); n];
    let mut occ = vec![0u8; modes];
    for_each_multiset(reach.len(), n, &mut rows, &mut |choice| {
        for (r, &ri) in choice.iter().enumerate() {
            let mi = reach[ri];
            for (c, &mj) in cols.iter().enumerate() {
                sub[r * n + c] = u[(mi, mj)];
            }
        }
        let perm = ryser(n, &sub, &mut sums);
        if perm.norm() < 1e-300 {
            return;
        }
        occ.iter_mut().for_each(|o| *o = 0);
        for &ri in choice {
            occ[reach[ri]] += 1;
        }
        let out_key = FockState::from_occupations(occ.clone());
        let norm = (in_norm * out_key.factorial_product()).sqrt();
        out.push((out_key, amp * perm / norm));
    });
    out
}

/// Output amplitudes of one input term by multiplying out the creation
/// operators `a†_j → Σ_i U[i, j] a†_i`. Cheaper than permanents when each
/// photon reaches only a few modes (local elements, analyzers).
fn expand_products(
    key: &FockState,
    amp: Complex,
    cols: &[usize],
    per_photon: &[Vec<usize>],
    u: &nalgebra::DMatrix<Complex>,
    modes: usize,
) -> Vec<(FockState, Complex)> {
    fn rec(
        k: usize,
        coeff: Complex,
        occ: &mut Vec<u8>,
        cols: &[usize],
        per_photon: &[Vec<usize>],
        u: &nalgebra::DMatrix<Complex>,
        acc: &mut BTreeMap<Vec<u8>, Complex>,
    ) {
        if k == cols.len() {
            *acc.entry(occ.clone()).or_insert(Complex::new(0.0, 0.0)) += coeff;
            return;
        }
        for &i in &per_photon[k] {
            occ[i] += 1;
            rec(k + 1, coeff * u[(i, cols[k])], occ, cols, per_photon, u, acc);
            occ[i] -= 1;
        }
    }
    let mut acc = BTreeMap::new();
    let mut occ = vec![0u8; modes];
    let scale = amp / key.factorial_product().sqrt();
    rec(0, scale, &mut occ, cols, per_photon, u, &mut acc);
    acc.into_iter()
        .filter(|(_, a)| a.norm() >= 1e-300)
        .map(|(occ, a)| {
            let k = FockState::from_occupations(occ);
            let f = k.factorial_product().sqrt();
            (k, a * f)
        })
        .collect()
}

/// `C(n + k − 1, k)`, the number of size-`k` multisets over `n` items.
fn multiset_count(n: usize, k: usize) -> f64 {
    if n == 0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    (1..=k).map(|i| (n + i - 1) as f64 / i as f64).product()
}

/// Calls `f` with every non-decreasing index sequence of length `k` over
/// `0..n`.
fn for_each_multiset(n: usize, k: usize, buf: &mut [usize], f: &mut impl FnMut(&[usize])) {
    fn rec(n: usize, pos: usize, start: usize, buf: &mut [usize], f: &mut impl FnMut(&[usize])) {
        if pos == buf.len() {
            f(buf);
            return;
        }
        for i in start..n {
            buf[pos] = i;
            rec(n, pos + 1, i, buf, f);
        }
    }
    if k == 0 {
        f(&buf[..0]);
        return;
    }
    if n == 0 {
        return;
    }
    rec(n, 0, 0, &mut buf[..k], f);
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use approx::assert_abs_diff_eq;

    use super::*;
    use crate::fock::{ModeRegistry, Polarization};
    use crate::optics::{OpticalCircuit, OpticalElement};

    fn reg(ports: &[&str], bins: usize) -> Arc<ModeRegistry> {
        Arc::new(ModeRegistry::new(ports.iter().copied(), bins).unwrap())
    }

    #[test]
    fn multiset_count() {
        let mut buf = vec![0; 3];
        let mut count = 0;
        for_each_multiset(5, 3, &mut buf, &mut |_| count += 1);
        assert_eq!(count, 35);
    }

    #[test]
    fn identity_leaves_state_unchanged() {
        let r = reg(&["a", "b"], 1);
        let s = PhotonicState::from_creators(
            r.clone(),
            &[vec![(0, Complex::new(0.6, 0.0)), (1, Complex::new(0.0, 0.8))], vec![(2, Complex::new(1.0, 0.0))]],
        )
        .unwrap();
        let out = evolve(&s, &ModeUnitary::identity(r)).unwrap();
        assert_eq!(out.len(), s.len());
        for (k, a) in s.terms() {
            assert_abs_diff_eq!((out.amplitude(k) - a).norm(), 0.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn hong_ou_mandel_cancels_coincidence() {
        let r = reg(&["a", "b"], 1);
        let ha = r.mode(0, Polarization::H, 0);
        let hb = r.mode(1, Polarization::H, 0);
        let one = Complex::new(1.0, 0.0);
        let s = PhotonicState::from_creators(r.clone(), &[vec![(ha, one)], vec![(hb, one)]]).unwrap();
        let mut c = OpticalCircuit::new(r.clone());
        c.push(OpticalElement::beam_splitter("a", "b", 0.5));
        let out = evolve(&s, &c.compile().unwrap()).unwrap();
        let mut coinc = vec![0u8; 4];
        coinc[ha] = 1;
        coinc[hb] = 1;
        assert_abs_diff_eq!(out.amplitude(&FockState::from_occupations(coinc)).norm(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(out.norm_sqr(), 1.0, epsilon = 1e-12);
        // Bunched outcomes each carry probability 1/2.
        let mut both_a = vec![0u8; 4];
        both_a[ha] = 2;
        assert_abs_diff_eq!(out.amplitude(&FockState::from_occupations(both_a)).norm_sqr(), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn registry_mismatch_rejected() {
        let s = PhotonicState::vacuum(reg(&["a"], 1));
        let u = ModeUnitary::identity(reg(&["b"], 1));
        assert_eq!(evolve(&s, &u).unwrap_err(), Error::RegistryMismatch);
    }

    #[test]
    fn vacuum_stays_vacuum() {
        let r = reg(&["a", "b"], 1);
        let mut c = OpticalCircuit::new(r.clone());
        c.push(OpticalElement::beam_splitter("a", "b", 0.3));
        let out = evolve(&PhotonicState::vacuum(r), &c.compile().unwrap()).unwrap();
        assert_eq!(out.len(), 1);
        assert_abs_diff_eq!(out.norm_sqr(), 1.0);
    }
}
