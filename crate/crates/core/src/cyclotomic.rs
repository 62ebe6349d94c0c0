//! Exact phases. A phase `e^{-2πi p/q}` is stored as the exponent `p mod q`
//! and matrix entries live in the group ring Z[Z/q], so sums of roots of
//! unity are compared without rounding.

use std::f64::consts::TAU;

use num_complex::Complex64;
use num_integer::Integer;
use num_rational::Ratio;

use crate::error::{Error, Result};
use crate::intmat::IntMatrix;

/// Matrix over Z[Z/q]: entry `(i, j)` is a coefficient vector of length `q`,
/// coefficient `p` counting the terms `e^{-2πi p/q}`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PhaseMatrix {
    q: u64,
    rows: usize,
    cols: usize,
    data: Vec<i128>,
}

impl PhaseMatrix {
    pub fn zeros(q: u64, rows: usize, cols: usize) -> Self {
        PhaseMatrix { q, rows, cols, data: vec![0; rows * cols * q as usize] }
    }

    pub fn identity(q: u64, n: usize) -> Self {
        let mut m = Self::zeros(q, n, n);
        for i in 0..n {
            m.add_term(i, i, 0, 1);
        }
        m
    }

    pub fn modulus(&self) -> u64 {
        self.q
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    fn slot(&self, i: usize, j: usize) -> usize {
        (i * self.cols + j) * self.q as usize
    }

    pub fn coefficients(&self, i: usize, j: usize) -> &[i128] {
        let s = self.slot(i, j);
        &self.data[s..s + self.q as usize]
    }

    /// Adds `count · e^{-2πi p/q}` to entry `(i, j)`.
    pub fn add_term(&mut self, i: usize, j: usize, p: u64, count: i128) {
        let s = self.slot(i, j) + (p % self.q) as usize;
        self.data[s] += count;
    }

    pub fn checked_mul(&self, other: &PhaseMatrix) -> Result<PhaseMatrix> {
        if self.q != other.q || self.cols != other.rows {
            return Err(Error::DimensionMismatch { expected: self.cols, found: other.rows });
        }
        let q = self.q as usize;
        let mut out = PhaseMatrix::zeros(self.q, self.rows, other.cols);
        for i in 0..self.rows {
            for l in 0..self.cols {
                let a = self.coefficients(i, l).to_vec();
                if a.iter().all(|&c| c == 0) {
                    continue;
                }
                for j in 0..other.cols {
                    let b = other.coefficients(l, j);
                    let s = out.slot(i, j);
                    for (p, &x) in a.iter().enumerate() {
                        if x == 0 {
                            continue;
                        }
                        for (r, &y) in b.iter().enumerate() {
                            if y == 0 {
                                continue;
                            }
                            let t = x.checked_mul(y).ok_or(Error::Overflow("phase matrix product"))?;
                            let slot = &mut out.data[s + (p + r) % q];
                            *slot = slot.checked_add(t).ok_or(Error::Overflow("phase matrix product"))?;
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    /// Integer matrix when every entry is a multiple of the trivial phase.
    pub fn to_integer(&self) -> Option<IntMatrix> {
        let mut m = IntMatrix::zeros(self.rows, self.cols);
        for i in 0..self.rows {
            for j in 0..self.cols {
                let c = self.coefficients(i, j);
                if c[1..].iter().any(|&x| x != 0) {
                    return None;
                }
                m.set(i, j, i64::try_from(c[0]).ok()?);
            }
        }
        Some(m)
    }

    pub fn entry(&self, i: usize, j: usize) -> Complex64 {
        let q = self.q as f64;
        self.coefficients(i, j)
            .iter()
            .enumerate()
            .filter(|(_, &c)| c != 0)
            .map(|(p, &c)| Complex64::from_polar(c as f64, -TAU * p as f64 / q))
            .sum()
    }

    pub fn to_complex(&self) -> Vec<Vec<Complex64>> {
        (0..self.rows).map(|i| (0..self.cols).map(|j| self.entry(i, j)).collect()).collect()
    }
}

/// Common denominator of a set of rationals, or `None` past `limit`.
pub fn common_denominator(xs: &[Ratio<i128>], limit: u64) -> Option<u64> {
    let mut q: i128 = 1;
    for x in xs {
        q = q.lcm(x.denom());
        if q > limit as i128 {
            return None;
        }
    }
    Some(q as u64)
}

/// Exponent `p` with `x ≡ p/q (mod 1)`; `x·q` must be an integer.
pub fn exponent(x: Ratio<i128>, q: u64) -> u64 {
    let n = x * Ratio::from_integer(q as i128);
    debug_assert!(n.is_integer());
    n.to_integer().rem_euclid(q as i128) as u64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn half_phase_is_minus_one() {
        let mut m = PhaseMatrix::zeros(2, 1, 1);
        m.add_term(0, 0, 1, 1);
        assert!((m.entry(0, 0) - Complex64::new(-1.0, 0.0)).norm() < 1e-15);
        let sq = m.checked_mul(&m).unwrap();
        assert_eq!(sq.to_integer().unwrap().get(0, 0), 1);
    }

    #[test]
    fn identity_is_neutral() {
        let mut m = PhaseMatrix::zeros(3, 2, 2);
        m.add_term(0, 1, 2, 5);
        m.add_term(1, 0, 1, -1);
        assert_eq!(PhaseMatrix::identity(3, 2).checked_mul(&m).unwrap(), m);
        assert_eq!(m.checked_mul(&PhaseMatrix::identity(3, 2)).unwrap(), m);
    }

    #[test]
    fn exponents_reduce() {
        assert_eq!(exponent(Ratio::new(-1, 3), 3), 2);
        assert_eq!(exponent(Ratio::new(7, 2), 4), 2);
        assert_eq!(common_denominator(&[Ratio::new(1, 4), Ratio::new(5, 6)], 100), Some(12));
        assert_eq!(common_denominator(&[Ratio::new(1, 1000)], 100), None);
    }
}
