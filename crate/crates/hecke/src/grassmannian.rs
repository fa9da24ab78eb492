//! Points of the projective line and the direction map `eta` on the Bruhat
//! cell `Gr(1)`.

use std::fmt;

use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::pseries::{Mat2, SeriesMat2, C, ONE, ZERO};

/// Below this norm a homogeneous vector counts as zero.
pub const NORM_TOL: f64 = 1e-14;
/// Tolerance for projective equality and for direction dispatch.
pub const PROJ_TOL: f64 = 1e-8;
/// Ratio `s2 / s1` below which a 2x2 matrix has numerical rank one.
pub const RANK_TOL: f64 = 1e-8;

/// A point `[a:c]` of CP^1, normalized so that its larger coordinate is 1.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProjPoint {
    a: C,
    c: C,
}

impl ProjPoint {
    pub fn new(a: C, c: C) -> Result<Self> {
        let (na, nc) = (a.norm(), c.norm());
        if na.max(nc) <= NORM_TOL {
            return Err(Error::ZeroVector);
        }
        Ok(if na >= nc { ProjPoint { a: ONE, c: c / a } } else { ProjPoint { a: a / c, c: ONE } })
    }

    /// `[lambda : 1]`.
    pub fn affine(lambda: C) -> Self {
        Self::new(lambda, ONE).expect("second coordinate is 1")
    }

    /// `[1:0]`.
    pub fn one_zero() -> Self {
        ProjPoint { a: ONE, c: ZERO }
    }

    /// `[0:1]`.
    pub fn zero_one() -> Self {
        ProjPoint { a: ZERO, c: ONE }
    }

    pub fn a(&self) -> C {
        self.a
    }

    pub fn c(&self) -> C {
        self.c
    }

    pub fn vector(&self) -> [C; 2] {
        [self.a, self.c]
    }

    /// Unit-norm representative.
    pub fn unit(&self) -> [C; 2] {
        let n = (self.a.norm_sqr() + self.c.norm_sqr()).sqrt();
        [self.a / n, self.c / n]
    }

    /// The affine coordinate `a / c`, or `None` at `[1:0]`.
    pub fn ratio(&self) -> Option<C> {
        if self.is_one_zero() {
            None
        } else {
            Some(self.a / self.c)
        }
    }

    /// True when the point is `[1:0]` within the dispatch tolerance.
    pub fn is_one_zero(&self) -> bool {
        self.a == ONE && self.c.norm() < PROJ_TOL
    }

    /// True when the point is `[0:1]` within the dispatch tolerance.
    pub fn is_zero_one(&self) -> bool {
        self.c == ONE && self.a.norm() < PROJ_TOL
    }

    /// Chordal distance `sqrt(1 - |<u, v>|^2)` between unit representatives,
    /// evaluated as `|u0 v1 - u1 v0|` to keep full precision near zero.
    pub fn distance(&self, other: &ProjPoint) -> f64 {
        let u = self.unit();
        let v = other.unit();
        (u[0] * v[1] - u[1] * v[0]).norm()
    }

    pub fn approx_eq(&self, other: &ProjPoint) -> bool {
        self.distance(other) < PROJ_TOL
    }

    /// Image under a constant invertible matrix.
    pub fn map(&self, m: &Mat2) -> Result<Self> {
        Self::new(m[(0, 0)] * self.a + m[(0, 1)] * self.c, m[(1, 0)] * self.a + m[(1, 1)] * self.c)
    }

    /// Preimage under a constant invertible matrix.
    pub fn unmap(&self, m: &Mat2) -> Result<Self> {
        let inv = m.try_inverse().ok_or(Error::InvalidInput("singular frame change".into()))?;
        self.map(&inv)
    }
}

impl fmt::Display for ProjPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{:.12e}{:+.12e}i : {:.12e}{:+.12e}i]",
            self.a.re, self.a.im, self.c.re, self.c.im
        )
    }
}

impl Serialize for ProjPoint {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

/// Singular values of a 2x2 complex matrix in closed form, largest first.
pub fn singular_values(m: &Mat2) -> (f64, f64) {
    let fro2: f64 = m.iter().map(|x| x.norm_sqr()).sum();
    let d = m.determinant().norm();
    let disc = (fro2 * fro2 - 4.0 * d * d).max(0.0).sqrt();
    let s1 = ((fro2 + disc) / 2.0).sqrt();
    let s2 = if s1 > 0.0 { d / s1 } else { 0.0 };
    (s1, s2)
}

/// Column space of a rank-one matrix.
pub fn column_space(m: &Mat2, at: C) -> Result<ProjPoint> {
    let (s1, s2) = singular_values(m);
    if s1 <= NORM_TOL || s2 / s1 >= RANK_TOL {
        return Err(Error::NotInCell { at: format!("{at}"), s1, s2 });
    }
    let c0 = m[(0, 0)].norm_sqr() + m[(1, 0)].norm_sqr();
    let c1 = m[(0, 1)].norm_sqr() + m[(1, 1)].norm_sqr();
    if c0 >= c1 {
        ProjPoint::new(m[(0, 0)], m[(1, 0)])
    } else {
        ProjPoint::new(m[(0, 1)], m[(1, 1)])
    }
}

/// The direction `eta([M], mu)`: the column space of `M(mu)`.
pub fn eta_at(m: &dyn Fn(C) -> Mat2, mu: C) -> Result<ProjPoint> {
    column_space(&m(mu), mu)
}

/// Bruhat-cell membership for a matrix expanded around its center:
/// the determinant vanishes to exactly first order and `M(0)` has rank one.
pub fn in_bruhat_cell(m: &SeriesMat2) -> bool {
    if m.order() < 2 {
        return false;
    }
    let scale = m.max_abs().max(1.0);
    let det = m.det();
    if det.coeff(0).norm() > 1e-12 * scale * scale || det.coeff(1).norm() <= 1e-10 * scale * scale {
        return false;
    }
    let (s1, s2) = singular_values(&m.at0());
    s1 > NORM_TOL && s2 / s1 < RANK_TOL
}

/// A representative `A Z` of the cell point with direction `p`.
pub fn cell_representative(p: &ProjPoint, order: usize) -> SeriesMat2 {
    let a = if p.a().norm() >= p.c().norm() {
        Mat2::new(p.a(), ZERO, p.c(), ONE)
    } else {
        Mat2::new(p.a(), ONE, p.c(), ZERO)
    };
    SeriesMat2::from_constant(&a, order).mul(&SeriesMat2::z_matrix(order))
}

/// Projective distance between the directions of `A Z` and `A Z B`.
pub fn eta_invariance_check(a: &SeriesMat2, b: &SeriesMat2) -> Result<f64> {
    a.invert_unit()?;
    b.invert_unit()?;
    let az = a.mul(&SeriesMat2::z_matrix(a.order()));
    let azb = az.mul(b);
    let d1 = eta_at(&|z| az.eval(z), ZERO)?;
    let d2 = eta_at(&|z| azb.eval(z), ZERO)?;
    Ok(d1.distance(&d2))
}
