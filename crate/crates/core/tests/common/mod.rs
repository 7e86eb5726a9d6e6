//! Oracles and generators shared by the property suites. Nothing here calls
//! into the evolution or permanent code under test.

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::sync::Arc;

use linoptic::{Complex, FockState, ModeRegistry, ModeUnitary, PhotonicState};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn c(re: f64, im: f64) -> Complex {
    Complex::new(re, im)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_complex(r: &mut ChaCha8Rng) -> Complex {
    c(r.sample(StandardNormal), r.sample(StandardNormal))
}

pub fn random_matrix(n: usize, seed: u64) -> DMatrix<Complex> {
    let mut r = rng(seed);
    DMatrix::from_fn(n, n, |_, _| gaussian_complex(&mut r))
}

/// Haar-ish random unitary from the QR factors of a Gaussian matrix.
pub fn random_unitary(n: usize, seed: u64) -> DMatrix<Complex> {
    random_matrix(n, seed).qr().q()
}

pub fn random_mode_unitary(registry: &Arc<ModeRegistry>, seed: u64) -> ModeUnitary {
    ModeUnitary::from_matrix(registry.clone(), random_unitary(registry.mode_count(), seed)).unwrap()
}

/// Permanent by summing over all permutations.
pub fn naive_permanent(m: &DMatrix<Complex>) -> Complex {
    fn rec(m: &DMatrix<Complex>, row: usize, used: &mut Vec<bool>) -> Complex {
        if row == m.nrows() {
            return c(1.0, 0.0);
        }
        let mut total = c(0.0, 0.0);
        for col in 0..m.ncols() {
            if !used[col] {
                used[col] = true;
                total += m[(row, col)] * rec(m, row + 1, used);
                used[col] = false;
            }
        }
        total
    }
    rec(m, 0, &mut vec![false; m.ncols()])
}

fn factorial(n: u8) -> f64 {
    (1..=n as u32).map(f64::from).product()
}

fn fact_product(occ: &[u8]) -> f64 {
    occ.iter().map(|&n| factorial(n)).product()
}

/// Evolution by expanding `∏_j (Σ_i U[i,j] a†_i)^{S_j}` as a polynomial in
/// creation operators and reading off `a†^T |0⟩ = √T! |T⟩`.
pub fn polynomial_evolve(state: &PhotonicState, u: &DMatrix<Complex>) -> BTreeMap<Vec<u8>, Complex> {
    let modes = u.nrows();
    let mut out: BTreeMap<Vec<u8>, Complex> = BTreeMap::new();
    for (key, amp) in state.terms() {
        let mut poly: BTreeMap<Vec<u8>, Complex> = BTreeMap::new();
        poly.insert(vec![0; modes], *amp / fact_product(key.occupations()).sqrt());
        for (j, &n) in key.occupations().iter().enumerate() {
            for _ in 0..n {
                let mut next = BTreeMap::new();
                for (mono, coef) in &poly {
                    for i in 0..modes {
                        if u[(i, j)] == c(0.0, 0.0) {
                            continue;
                        }
                        let mut m = mono.clone();
                        m[i] += 1;
                        *next.entry(m).or_insert(c(0.0, 0.0)) += coef * u[(i, j)];
                    }
                }
                poly = next;
            }
        }
        for (mono, coef) in poly {
            let f = fact_product(&mono).sqrt();
            *out.entry(mono).or_insert(c(0.0, 0.0)) += coef * f;
        }
    }
    out
}

/// Every occupation vector of `n` photons over `modes` modes, in a fixed
/// order.
pub fn fock_basis(modes: usize, n: usize) -> Vec<Vec<u8>> {
    fn rec(modes: usize, left: usize, cur: &mut Vec<u8>, out: &mut Vec<Vec<u8>>) {
        if cur.len() == modes - 1 {
            cur.push(left as u8);
            out.push(cur.clone());
            cur.pop();
            return;
        }
        for k in 0..=left {
            cur.push(k as u8);
            rec(modes, left - k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(modes, n, &mut Vec::new(), &mut out);
    out
}

/// Random normalized state with `n` photons and dense amplitudes drawn from
/// `seed`; returned with its dense vector over [`fock_basis`].
pub fn random_state(registry: &Arc<ModeRegistry>, n: usize, seed: u64) -> (PhotonicState, Vec<Complex>) {
    let basis = fock_basis(registry.mode_count(), n);
    let mut r = rng(seed);
    let mut dense: Vec<Complex> = basis.iter().map(|_| gaussian_complex(&mut r)).collect();
    let norm = dense.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    dense.iter_mut().for_each(|z| *z /= norm);
    let state = PhotonicState::from_terms(
        registry.clone(),
        basis.iter().cloned().zip(dense.iter().copied()).map(|(k, a)| (FockState::from_occupations(k), a)),
    )
    .unwrap();
    (state, dense)
}

pub fn dense_of(state: &PhotonicState, basis: &[Vec<u8>]) -> Vec<Complex> {
    basis.iter().map(|k| state.amplitude(&FockState::from_occupations(k.clone()))).collect()
}

pub fn max_diff(a: &[Complex], b: &[Complex]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

pub fn registry(ports: &[&str], bins: usize) -> Arc<ModeRegistry> {
    Arc::new(ModeRegistry::new(ports.iter().copied(), bins).unwrap())
}
