//! Truncated power series over the complex numbers, and 2x2 matrices of them.
//!
//! A [`TruncSeries`] of order `N` stores the coefficients of `1, z, ..., z^N`.
//! Binary operations truncate to the smaller order of the two operands.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::Matrix2;
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C = Complex64;
pub type Mat2 = Matrix2<C>;

/// Default truncation order for Grassmannian computations.
pub const DEFAULT_ORDER: usize = 8;
/// Smallest admissible modulus of a unit's constant term.
pub const UNIT_TOL: f64 = 1e-10;

pub(crate) const ZERO: C = C::new(0.0, 0.0);
pub(crate) const ONE: C = C::new(1.0, 0.0);

#[derive(Clone, Debug, PartialEq)]
pub struct TruncSeries {
    coeffs: Vec<C>,
}

impl TruncSeries {
    /// Builds a series of the given order, padding with zeros or dropping
    /// coefficients past `z^order`.
    pub fn new(mut coeffs: Vec<C>, order: usize) -> Self {
        coeffs.resize(order + 1, ZERO);
        TruncSeries { coeffs }
    }

    pub fn zero(order: usize) -> Self {
        Self::new(Vec::new(), order)
    }

    pub fn constant(c: C, order: usize) -> Self {
        Self::new(vec![c], order)
    }

    pub fn one(order: usize) -> Self {
        Self::constant(ONE, order)
    }

    /// The series `c0 + c1 z`.
    pub fn linear(c0: C, c1: C, order: usize) -> Self {
        Self::new(vec![c0, c1], order)
    }

    pub fn order(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeffs(&self) -> &[C] {
        &self.coeffs
    }

    pub fn coeff(&self, k: usize) -> C {
        self.coeffs.get(k).copied().unwrap_or(ZERO)
    }

    pub fn scale(&self, s: C) -> Self {
        TruncSeries { coeffs: self.coeffs.iter().map(|c| c * s).collect() }
    }

    pub fn truncate(&self, order: usize) -> Self {
        Self::new(self.coeffs.clone(), order.min(self.order()))
    }

    /// Multiplies by `z^k`, keeping the order.
    pub fn shift_up(&self, k: usize) -> Self {
        let n = self.order();
        let mut out = vec![ZERO; n + 1];
        for i in 0..=n {
            if i + k <= n {
                out[i + k] = self.coeffs[i];
            }
        }
        TruncSeries { coeffs: out }
    }

    /// Drops the constant term and divides by `z`; the order drops by one.
    pub fn shift_down(&self) -> Self {
        let n = self.order();
        if n == 0 {
            return Self::zero(0);
        }
        TruncSeries { coeffs: self.coeffs[1..].to_vec() }
    }

    /// Evaluates the truncation as a polynomial.
    pub fn eval(&self, z: C) -> C {
        self.coeffs.iter().rev().fold(ZERO, |acc, c| acc * z + c)
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    pub fn mul(&self, other: &Self) -> Self {
        let n = self.order().min(other.order());
        let mut out = vec![ZERO; n + 1];
        for i in 0..=n {
            if self.coeffs[i] == ZERO {
                continue;
            }
            for j in 0..=(n - i) {
                out[i + j] += self.coeffs[i] * other.coeffs[j];
            }
        }
        TruncSeries { coeffs: out }
    }

    /// Multiplicative inverse of a series with a nonvanishing constant term.
    pub fn invert_unit(&self) -> Result<Self> {
        let a0 = self.coeffs[0];
        if a0.norm() <= UNIT_TOL {
            return Err(Error::NonUnit { modulus: a0.norm() });
        }
        let n = self.order();
        let inv0 = a0.inv();
        let mut out = vec![ZERO; n + 1];
        out[0] = inv0;
        for k in 1..=n {
            let mut s = ZERO;
            for j in 1..=k {
                s += self.coeffs[j] * out[k - j];
            }
            out[k] = -s * inv0;
        }
        Ok(TruncSeries { coeffs: out })
    }

    fn zip(&self, other: &Self, f: impl Fn(C, C) -> C) -> Self {
        let n = self.order().min(other.order());
        TruncSeries { coeffs: (0..=n).map(|k| f(self.coeffs[k], other.coeffs[k])).collect() }
    }
}

impl fmt::Display for TruncSeries {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let terms: Vec<String> = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(k, c)| format!("({:+.6}{:+.6}i)z^{}", c.re, c.im, k))
            .collect();
        write!(f, "{} + O(z^{})", terms.join(" + "), self.order() + 1)
    }
}

impl Add for &TruncSeries {
    type Output = TruncSeries;
    fn add(self, rhs: Self) -> TruncSeries {
        self.zip(rhs, |a, b| a + b)
    }
}

impl Sub for &TruncSeries {
    type Output = TruncSeries;
    fn sub(self, rhs: Self) -> TruncSeries {
        self.zip(rhs, |a, b| a - b)
    }
}

impl Mul for &TruncSeries {
    type Output = TruncSeries;
    fn mul(self, rhs: Self) -> TruncSeries {
        TruncSeries::mul(self, rhs)
    }
}

impl Neg for &TruncSeries {
    type Output = TruncSeries;
    fn neg(self) -> TruncSeries {
        self.scale(-ONE)
    }
}

/// A 2x2 matrix whose entries are truncated series of a common order.
#[derive(Clone, Debug, PartialEq)]
pub struct SeriesMat2 {
    e: [[TruncSeries; 2]; 2],
}

impl SeriesMat2 {
    pub fn from_entries(e: [[TruncSeries; 2]; 2]) -> Self {
        let n = e.iter().flatten().map(TruncSeries::order).min().unwrap_or(0);
        let e = e.map(|row| row.map(|s| s.truncate(n)));
        SeriesMat2 { e }
    }

    pub fn identity(order: usize) -> Self {
        Self::from_constant(&Mat2::identity(), order)
    }

    pub fn from_constant(m: &Mat2, order: usize) -> Self {
        SeriesMat2 {
            e: [
                [TruncSeries::constant(m[(0, 0)], order), TruncSeries::constant(m[(0, 1)], order)],
                [TruncSeries::constant(m[(1, 0)], order), TruncSeries::constant(m[(1, 1)], order)],
            ],
        }
    }

    /// `diag(1, z)`, the base point of the Bruhat cell.
    pub fn z_matrix(order: usize) -> Self {
        SeriesMat2 {
            e: [
                [TruncSeries::one(order), TruncSeries::zero(order)],
                [TruncSeries::zero(order), TruncSeries::linear(ZERO, ONE, order)],
            ],
        }
    }

    /// Builds the matrix whose `(i, j)` entry has coefficients `coeff(k)[(i, j)]`.
    pub fn from_coeff_matrices(coeffs: &[Mat2], order: usize) -> Self {
        let entry = |i: usize, j: usize| {
            TruncSeries::new(coeffs.iter().map(|m| m[(i, j)]).collect(), order)
        };
        SeriesMat2 { e: [[entry(0, 0), entry(0, 1)], [entry(1, 0), entry(1, 1)]] }
    }

    pub fn order(&self) -> usize {
        self.e[0][0].order()
    }

    pub fn entry(&self, i: usize, j: usize) -> &TruncSeries {
        &self.e[i][j]
    }

    /// The coefficient matrix of `z^k`.
    pub fn coeff(&self, k: usize) -> Mat2 {
        Mat2::new(
            self.e[0][0].coeff(k),
            self.e[0][1].coeff(k),
            self.e[1][0].coeff(k),
            self.e[1][1].coeff(k),
        )
    }

    pub fn at0(&self) -> Mat2 {
        self.coeff(0)
    }

    pub fn eval(&self, z: C) -> Mat2 {
        Mat2::new(
            self.e[0][0].eval(z),
            self.e[0][1].eval(z),
            self.e[1][0].eval(z),
            self.e[1][1].eval(z),
        )
    }

    pub fn map_entries(&self, f: impl Fn(&TruncSeries) -> TruncSeries) -> Self {
        SeriesMat2 { e: [[f(&self.e[0][0]), f(&self.e[0][1])], [f(&self.e[1][0]), f(&self.e[1][1])]] }
    }

    pub fn det(&self) -> TruncSeries {
        &(&self.e[0][0] * &self.e[1][1]) - &(&self.e[0][1] * &self.e[1][0])
    }

    pub fn mul(&self, o: &Self) -> Self {
        let ent = |i: usize, j: usize| &(&self.e[i][0] * &o.e[0][j]) + &(&self.e[i][1] * &o.e[1][j]);
        SeriesMat2 { e: [[ent(0, 0), ent(0, 1)], [ent(1, 0), ent(1, 1)]] }
    }

    pub fn add(&self, o: &Self) -> Self {
        let ent = |i: usize, j: usize| &self.e[i][j] + &o.e[i][j];
        SeriesMat2 { e: [[ent(0, 0), ent(0, 1)], [ent(1, 0), ent(1, 1)]] }
    }

    pub fn sub(&self, o: &Self) -> Self {
        let ent = |i: usize, j: usize| &self.e[i][j] - &o.e[i][j];
        SeriesMat2 { e: [[ent(0, 0), ent(0, 1)], [ent(1, 0), ent(1, 1)]] }
    }

    pub fn scale(&self, s: C) -> Self {
        self.map_entries(|x| x.scale(s))
    }

    /// Left multiplication by a constant matrix.
    pub fn left_const(&self, m: &Mat2) -> Self {
        Self::from_constant(m, self.order()).mul(self)
    }

    /// Inverse of a matrix whose constant term is invertible.
    pub fn invert_unit(&self) -> Result<Self> {
        let d = self.det();
        let dinv = d.invert_unit()?;
        let adj = SeriesMat2 {
            e: [
                [self.e[1][1].clone(), -&self.e[0][1]],
                [-&self.e[1][0], self.e[0][0].clone()],
            ],
        };
        Ok(adj.map_entries(|x| x * &dinv))
    }

    /// Largest coefficient modulus over all entries.
    pub fn max_abs(&self) -> f64 {
        self.e.iter().flatten().map(TruncSeries::max_abs).fold(0.0, f64::max)
    }
}

/// The companion `B = 1 + z Z^{-1} A(0)^{-1} A_1 Z` of a unit `A`, where
/// `A = A(0) + z A_1` and `Z = diag(1, z)`; it satisfies `A(0) Z B = A Z`.
///
/// Writing `M = A(0)^{-1} A_1`, the conjugation by `Z` gives
/// `B = 1 + [[z m11, z^2 m12], [m21, z m22]]`, so `det B(0) = 1`. The top
/// coefficient of `B_21` would need `A` one order further and is left zero;
/// it only enters `A(0) Z B` multiplied by `z`.
pub fn bruhat_companion(a: &SeriesMat2) -> Result<SeriesMat2> {
    let n = a.order();
    let a0 = a.at0();
    let a0inv = a0.try_inverse().filter(|_| a0.determinant().norm() > UNIT_TOL).ok_or(Error::NonUnit {
        modulus: a0.determinant().norm(),
    })?;
    let tail = a.map_entries(|s| TruncSeries::new(s.shift_down().coeffs().to_vec(), n));
    let m = tail.left_const(&a0inv);
    let b = SeriesMat2 {
        e: [
            [&TruncSeries::one(n) + &m.e[0][0].shift_up(1), m.e[0][1].shift_up(2)],
            [TruncSeries::new(m.e[1][0].coeffs()[..n].to_vec(), n), &TruncSeries::one(n) + &m.e[1][1].shift_up(1)],
        ],
    };
    Ok(b)
}
