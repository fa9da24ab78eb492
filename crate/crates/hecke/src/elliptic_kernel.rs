//! Theta functions, factors of automorphy and the double cover `X -> CP^1`
//! for the elliptic curve `X = C / (Z + tau Z)`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::OnceLock;

use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::grassmannian::{ProjPoint, PROJ_TOL};
use crate::pseries::{C, ONE, ZERO};

/// Minimum distance to a pole before `g` refuses to evaluate.
pub const POLE_GUARD: f64 = 1e-6;
const NEWTON_TOL: f64 = 1e-12;
const NEWTON_MAX_ITER: usize = 60;

const I: C = C::new(0.0, 1.0);

pub fn default_tau() -> C {
    C::new(0.21, 1.3)
}

fn expi(x: C) -> C {
    (2.0 * PI * I * x).exp()
}

/// Splits `z = x + y t` into real coordinates relative to `{1, t}`.
fn lattice_coords(z: C, t: C) -> (f64, f64) {
    let y = z.im / t.im;
    (z.re - y * t.re, y)
}

/// `(theta(z, t), theta'(z, t))`, summed after reducing `z` into the strip
/// `|Im z| <= Im t / 2` and reapplying the quasi-periodicity factor.
fn theta_pair(z: C, t: C) -> (C, C) {
    let (_, y) = lattice_coords(z, t);
    let k = y.round();
    let zr = z - t * k;
    let zr = zr - zr.re.round();
    let n_terms = ((36.0 / (PI * t.im)).sqrt().ceil() + zr.im.abs() / t.im + 4.0) as i64;
    let mut th = ZERO;
    let mut dth = ZERO;
    for n in -n_terms..=n_terms {
        let nf = n as f64;
        let term = (PI * I * (t * (nf * nf) + zr * (2.0 * nf))).exp();
        th += term;
        dth += term * (2.0 * PI * I * nf);
    }
    // theta(z' + k t) = exp(-pi i k^2 t - 2 pi i k z') theta(z')
    let factor = (-PI * I * (t * (k * k)) - 2.0 * PI * I * zr * k).exp();
    (factor * th, factor * (dth - 2.0 * PI * I * k * th))
}

/// Ratio `theta'/theta` without the (possibly huge) quasi-periodicity factor.
fn theta_log_derivative(z: C, t: C) -> C {
    let (_, y) = lattice_coords(z, t);
    let k = y.round();
    let zr = z - t * k;
    let zr = zr - zr.re.round();
    let (th, dth) = theta_pair(zr, t);
    dth / th - 2.0 * PI * I * k
}

/// The Jacobi theta function `sum_n exp(pi i (n^2 t + 2 n z))`.
pub fn theta(z: C, t: C) -> C {
    theta_pair(z, t).0
}

/// `d/dz theta(z, t)`, differentiated termwise.
pub fn theta_prime(z: C, t: C) -> C {
    theta_pair(z, t).1
}

/// The standard factor of automorphy `f^(w)(z) = exp(-2 pi i (z - w - 1/2))`.
pub fn automorphy_factor(w: C, z: C) -> C {
    expi(-(z - w - 0.5))
}

/// A point of `C / Lambda`, stored by its canonical lift `x + y tau` with
/// `x, y` in `[0, 1)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurvePoint {
    lift: C,
    tau: C,
}

impl CurvePoint {
    pub fn lift(&self) -> C {
        self.lift
    }

    pub fn tau(&self) -> C {
        self.tau
    }
}

impl fmt::Display for CurvePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{:.12e}{:+.12e}i]", self.lift.re, self.lift.im)
    }
}

impl Serialize for CurvePoint {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

/// The lattice `Z + tau Z` together with its cached branch points.
#[derive(Debug, Clone)]
pub struct Lattice {
    tau: C,
    branch: OnceLock<[ProjPoint; 4]>,
}

impl PartialEq for Lattice {
    fn eq(&self, other: &Self) -> bool {
        self.tau == other.tau
    }
}

impl Default for Lattice {
    fn default() -> Self {
        Lattice::new(default_tau()).expect("default tau is in the upper half plane")
    }
}

impl Lattice {
    pub fn new(tau: C) -> Result<Self> {
        if !(tau.im > 0.0) || !tau.re.is_finite() || !tau.im.is_finite() {
            return Err(Error::InvalidInput(format!("Im tau must be positive, got {tau}")));
        }
        Ok(Lattice { tau, branch: OnceLock::new() })
    }

    pub fn tau(&self) -> C {
        self.tau
    }

    /// Canonical lift of `z`.
    pub fn reduce(&self, z: C) -> C {
        let (x, y) = lattice_coords(z, self.tau);
        let mut fx = x - x.floor();
        let mut fy = y - y.floor();
        if fx >= 1.0 - 1e-15 {
            fx = 0.0;
        }
        if fy >= 1.0 - 1e-15 {
            fy = 0.0;
        }
        C::new(fx, 0.0) + self.tau * fy
    }

    pub fn point(&self, z: C) -> CurvePoint {
        CurvePoint { lift: self.reduce(z), tau: self.tau }
    }

    pub fn zero(&self) -> CurvePoint {
        self.point(ZERO)
    }

    pub fn add(&self, p: &CurvePoint, q: &CurvePoint) -> CurvePoint {
        self.point(p.lift + q.lift)
    }

    pub fn sub(&self, p: &CurvePoint, q: &CurvePoint) -> CurvePoint {
        self.point(p.lift - q.lift)
    }

    pub fn neg(&self, p: &CurvePoint) -> CurvePoint {
        self.point(-p.lift)
    }

    /// The solution `e` of `2e = p + q` with lift `(p~ + q~) / 2`.
    pub fn halve_sum(&self, p: &CurvePoint, q: &CurvePoint) -> CurvePoint {
        self.point((p.lift + q.lift) * 0.5)
    }

    /// Distance between the classes of `z` and `w` in `C / Lambda`.
    pub fn torus_distance(&self, z: C, w: C) -> f64 {
        lattice_distance(z - w, ONE, self.tau)
    }

    pub fn same_point(&self, p: &CurvePoint, q: &CurvePoint, tol: f64) -> bool {
        self.torus_distance(p.lift, q.lift) < tol
    }

    /// The four 2-torsion lifts `0, 1/2, tau/2, 1/2 + tau/2`.
    pub fn torsion_lifts(&self) -> [C; 4] {
        [ZERO, C::new(0.5, 0.0), self.tau * 0.5, C::new(0.5, 0.0) + self.tau * 0.5]
    }

    /// Index `i` (0-based) with `[z] = [z_i]`, if `z` is 2-torsion.
    pub fn torsion_index(&self, z: C, tol: f64) -> Option<usize> {
        self.torsion_lifts().iter().position(|zi| self.torus_distance(z, *zi) < tol)
    }

    /// `theta^(w)(z) = theta(z - (1 + tau)/2 - w, tau)`; simple zeros on `w + Lambda`.
    pub fn theta_w(&self, z: C, w: C) -> C {
        theta(z - (ONE + self.tau) * 0.5 - w, self.tau)
    }

    pub fn theta_w_prime(&self, z: C, w: C) -> C {
        theta_prime(z - (ONE + self.tau) * 0.5 - w, self.tau)
    }

    /// `theta~^(w)(z) = theta(z - (1 + 2 tau)/2 - w, 2 tau)`.
    pub fn theta_tilde_w(&self, z: C, w: C) -> C {
        theta(z - (ONE + self.tau * 2.0) * 0.5 - w, self.tau * 2.0)
    }

    pub fn theta_tilde_w_prime(&self, z: C, w: C) -> C {
        theta_prime(z - (ONE + self.tau * 2.0) * 0.5 - w, self.tau * 2.0)
    }

    /// `g^(w) = (i / 2 pi) theta^(w)' / theta^(w)`.
    pub fn g_w(&self, z: C, w: C) -> Result<C> {
        if lattice_distance(z - w, ONE, self.tau) < POLE_GUARD {
            return Err(Error::NearPole { z: format!("{z}"), w: format!("{w}") });
        }
        Ok(I / (2.0 * PI) * theta_log_derivative(z - (ONE + self.tau) * 0.5 - w, self.tau))
    }

    /// `g~^(w)`, the analogue of `g^(w)` for the lattice `Z + 2 tau Z`.
    pub fn g_tilde_w(&self, z: C, w: C) -> Result<C> {
        let t2 = self.tau * 2.0;
        if lattice_distance(z - w, ONE, t2) < POLE_GUARD {
            return Err(Error::NearPole { z: format!("{z}"), w: format!("{w}") });
        }
        Ok(I / (2.0 * PI) * theta_log_derivative(z - (ONE + t2) * 0.5 - w, t2))
    }

    /// `(g^(w) theta^(w))(z) = (i / 2 pi) theta^(w)'(z)`, holomorphic everywhere.
    pub fn g_theta_w(&self, z: C, w: C) -> C {
        I / (2.0 * PI) * self.theta_w_prime(z, w)
    }

    /// `(g~^(w) theta~^(w))(z)`, holomorphic everywhere.
    pub fn g_theta_tilde_w(&self, z: C, w: C) -> C {
        I / (2.0 * PI) * self.theta_tilde_w_prime(z, w)
    }

    /// Homogeneous coordinates `(theta~^(1/2)(2z), e^{2 pi i z} theta~^(1/2 - tau)(2z))`
    /// of `pi([z]) = [1 : h(z)]`.
    fn cover_vector(&self, z: C) -> [C; 2] {
        let z = self.reduce(z);
        [
            self.theta_tilde_w(z * 2.0, C::new(0.5, 0.0)),
            expi(z) * self.theta_tilde_w(z * 2.0, C::new(0.5, 0.0) - self.tau),
        ]
    }

    /// `h(z) = e^{2 pi i z} theta~^(1/2 - tau)(2z) / theta~^(1/2)(2z)`.
    pub fn h(&self, z: C) -> C {
        let half = C::new(0.5, 0.0);
        expi(z) * self.theta_tilde_w(z * 2.0, half - self.tau) / self.theta_tilde_w(z * 2.0, half)
    }

    /// The branched double cover `[z] -> [1 : h(z)]`.
    pub fn pi_cover(&self, p: &CurvePoint) -> ProjPoint {
        let v = self.cover_vector(p.lift);
        ProjPoint::new(v[0], v[1]).expect("theta functions have no common zero")
    }

    pub fn pi_cover_z(&self, z: C) -> ProjPoint {
        let v = self.cover_vector(z);
        ProjPoint::new(v[0], v[1]).expect("theta functions have no common zero")
    }

    /// Branch points `a_i = pi([z_i])`, computed once per lattice.
    pub fn branch_points(&self) -> &[ProjPoint; 4] {
        self.branch.get_or_init(|| self.torsion_lifts().map(|z| self.pi_cover_z(z)))
    }

    /// Index of the branch point equal to `a`, if any.
    pub fn branch_index(&self, a: &ProjPoint) -> Option<usize> {
        self.branch_points().iter().position(|b| b.distance(a) < PROJ_TOL)
    }

    /// The fiber `pi^{-1}(a) = {p, -p}`, ordered so the first point has the
    /// lexicographically smaller canonical lift.
    pub fn invert_cover(&self, a: &ProjPoint) -> Result<(CurvePoint, CurvePoint)> {
        if let Some(i) = self.branch_index(a) {
            let p = self.point(self.torsion_lifts()[i]);
            return Ok((p, p));
        }
        let [a0, a1] = a.unit();
        let half = C::new(0.5, 0.0);
        let g = |z: C| {
            let e = expi(z);
            let t1 = self.theta_tilde_w(z * 2.0, half);
            let t2 = self.theta_tilde_w(z * 2.0, half - self.tau);
            let d1 = self.theta_tilde_w_prime(z * 2.0, half);
            let d2 = self.theta_tilde_w_prime(z * 2.0, half - self.tau);
            let val = a1 * t1 - a0 * e * t2;
            let der = a1 * d1 * 2.0 - a0 * e * (2.0 * PI * I * t2 + d2 * 2.0);
            (val, der)
        };
        let mut best: Option<(f64, C)> = None;
        for i in 0..4 {
            for j in 0..4 {
                let mut z = C::new((i as f64 + 0.5) / 4.0, 0.0) + self.tau * ((j as f64 + 0.5) / 4.0);
                let mut converged = false;
                for _ in 0..NEWTON_MAX_ITER {
                    let (v, d) = g(z);
                    if d.norm() == 0.0 || !d.norm().is_finite() {
                        break;
                    }
                    let step = v / d;
                    z = self.reduce(z - step);
                    if step.norm() < NEWTON_TOL {
                        converged = true;
                        break;
                    }
                }
                if !converged {
                    continue;
                }
                let err = self.pi_cover_z(z).distance(a);
                if err < PROJ_TOL && best.is_none_or(|(e, _)| err < e) {
                    best = Some((err, z));
                }
            }
        }
        let (_, z) = best.ok_or_else(|| Error::NoConvergence { target: a.to_string() })?;
        let p = self.point(z);
        let q = self.neg(&p);
        let key = |c: &CurvePoint| (c.lift.re, c.lift.im);
        Ok(if key(&p) <= key(&q) { (p, q) } else { (q, p) })
    }
}

/// Distance from `z` to the lattice `Z w1 + Z w2` (w1 = 1).
fn lattice_distance(z: C, w1: C, w2: C) -> f64 {
    let (x, y) = lattice_coords(z / w1, w2 / w1);
    let (x0, y0) = (x.round(), y.round());
    let mut best = f64::INFINITY;
    for dx in -1..=1 {
        for dy in -1..=1 {
            let c = z - w1 * (x0 + dx as f64) - w2 * (y0 + dy as f64);
            best = best.min(c.norm());
        }
    }
    best
}
