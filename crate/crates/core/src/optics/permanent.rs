use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::fock::Complex;

/// Largest accepted matrix dimension.
pub const MAX_PERMANENT_DIM: usize = 16;

/// Permanent of a square complex matrix.
///
/// Ryser's inclusion–exclusion formula, walking column subsets in Gray-code
/// order so each step updates the row sums with a single column: `O(2ⁿ·n)`.
pub fn permanent(m: &DMatrix<Complex>) -> Result<Complex> {
    if m.nrows() != m.ncols() {
        return Err(Error::NonSquare { rows: m.nrows(), cols: m.ncols() });
    }
    let n = m.nrows();
    if n > MAX_PERMANENT_DIM {
        return Err(Error::PermanentTooLarge(n));
    }
    let mut row_major = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            row_major.push(m[(i, j)]);
        }
    }
    let mut sums = vec![Complex::new(0.0, 0.0); n];
    Ok(ryser(n, &row_major, &mut sums))
}

/// Permanent of an `n×n` row-major slice. Used on the hot path of
/// [`evolve`](super::evolve); panics if the slice is not `n*n` long.
pub fn permanent_row_major(n: usize, a: &[Complex]) -> Result<Complex> {
    assert_eq!(a.len(), n * n);
    if n > MAX_PERMANENT_DIM {
        return Err(Error::PermanentTooLarge(n));
    }
    let mut sums = vec![Complex::new(0.0, 0.0); n];
    Ok(ryser(n, a, &mut sums))
}

pub(crate) fn ryser(n: usize, a: &[Complex], sums: &mut [Complex]) -> Complex {
    match n {
        0 => return Complex::new(1.0, 0.0),
        1 => return a[0],
        2 => return a[0] * a[3] + a[1] * a[2],
        _ => {}
    }
    sums.iter_mut().for_each(|s| *s = Complex::new(0.0, 0.0));
    let mut total = Complex::new(0.0, 0.0);
    let mut gray: u32 = 0;
    for k in 1u32..(1u32 << n) {
        let j = k.trailing_zeros() as usize;
        gray ^= 1 << j;
        if gray & (1 << j) != 0 {
            for (i, s) in sums.iter_mut().enumerate() {
                *s += a[i * n + j];
            }
        } else {
            for (i, s) in sums.iter_mut().enumerate() {
                *s -= a[i * n + j];
            }
        }
        let prod = sums.iter().fold(Complex::new(1.0, 0.0), |acc, s| acc * s);
        if gray.count_ones().is_multiple_of(2) {
            total += prod;
        } else {
            total -= prod;
        }
    }
    if n % 2 == 1 {
        -total
    } else {
        total
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn c(re: f64) -> Complex {
        Complex::new(re, 0.0)
    }

    #[test]
    fn identity_has_permanent_one() {
        let m = DMatrix::<Complex>::identity(3, 3);
        assert_abs_diff_eq!(permanent(&m).unwrap().re, 1.0);
    }

    #[test]
    fn all_ones_gives_factorial() {
        for n in 1..=7 {
            let m = DMatrix::from_element(n, n, c(1.0));
            let expect: f64 = (1..=n).map(|k| k as f64).product();
            assert_abs_diff_eq!(permanent(&m).unwrap().re, expect, epsilon = 1e-9);
        }
    }

    #[test]
    fn small_hand_computed() {
        // perm [[1,2],[3,4]] = 1·4 + 2·3
        let m = DMatrix::from_row_slice(2, 2, &[c(1.0), c(2.0), c(3.0), c(4.0)]);
        assert_abs_diff_eq!(permanent(&m).unwrap().re, 10.0);
        // perm of 3x3 [[1,2,3],[4,5,6],[7,8,9]] = 450
        let m = DMatrix::from_row_slice(3, 3, &(1..=9).map(|k| c(k as f64)).collect::<Vec<_>>());
        assert_abs_diff_eq!(permanent(&m).unwrap().re, 450.0, epsilon = 1e-9);
    }

    #[test]
    fn empty_matrix_has_permanent_one() {
        let m = DMatrix::<Complex>::zeros(0, 0);
        assert_eq!(permanent(&m).unwrap(), c(1.0));
    }

    #[test]
    fn non_square_rejected() {
        let m = DMatrix::<Complex>::zeros(2, 3);
        assert_eq!(permanent(&m), Err(Error::NonSquare { rows: 2, cols: 3 }));
    }

    #[test]
    fn oversize_rejected() {
        let m = DMatrix::<Complex>::zeros(17, 17);
        assert_eq!(permanent(&m), Err(Error::PermanentTooLarge(17)));
    }

    #[test]
    fn balanced_splitter_submatrix_cancels() {
        let s = 0.5f64.sqrt();
        let m = DMatrix::from_row_slice(2, 2, &[c(s), Complex::new(0.0, s), Complex::new(0.0, s), c(s)]);
        assert_abs_diff_eq!(permanent(&m).unwrap().norm(), 0.0, epsilon = 1e-16);
    }
}
