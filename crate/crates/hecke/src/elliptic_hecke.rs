//! Hecke modifications of rank-2 bundles on an elliptic curve: factors of
//! automorphy, theta-valued morphism representatives, the single and double
//! modification tables, and the coordinates `h = (h_0, ..., h_n)` on the
//! total space of modifications of a parabolic bundle `(E, l_q)`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use serde::{Serialize, Serializer};

use crate::elliptic_kernel::{automorphy_factor, CurvePoint, Lattice};
use crate::error::{Error, Result};
use crate::grassmannian::{eta_at, ProjPoint, PROJ_TOL};
use crate::pseries::{Mat2, C, ONE, ZERO};

/// Tolerance for deciding equality of points of `C / Lambda`.
pub const CLASS_TOL: f64 = 1e-8;
/// Chordal tolerance for membership of a triple in the embedded curve `f(X)`.
pub const CURVE_TOL: f64 = 1e-6;
/// Smallest admissible modulus of a theta value used to solve a row parameter.
const SOLVE_GUARD: f64 = 1e-10;
/// Number of best-scoring starting points refined when projecting onto `f(X)`.
const REFINED_STARTS: usize = 6;

const I: C = C::new(0.0, 1.0);

fn expi(x: C) -> C {
    (2.0 * PI * I * x).exp()
}

fn diag(a: C, b: C) -> Mat2 {
    Mat2::new(a, ZERO, ZERO, b)
}

/// Integer coordinates `(n, m)` of the lattice vector nearest to `z = n + m tau`.
pub(crate) fn nearest_lattice(z: C, tau: C) -> (f64, f64) {
    let m = (z.im / tau.im).round();
    let n = (z - tau * m).re.round();
    (n, m)
}

/// A line bundle given by its degree `d` and an Abel-Jacobi lift `s`, with
/// factor of automorphy `e^{-2 pi i d (z - 1/2)} e^{2 pi i s}`.  The
/// isomorphism class depends only on `d` and `s mod Lambda`; the lift fixes
/// the trivialization.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LineBundle {
    pub degree: i32,
    pub lift: C,
}

impl LineBundle {
    pub fn new(degree: i32, lift: C) -> Self {
        LineBundle { degree, lift }
    }

    pub fn trivial() -> Self {
        Self::new(0, ZERO)
    }

    /// `O(p)` for a point with lift `p`.
    pub fn of_point(p: C) -> Self {
        Self::new(1, p)
    }

    /// `O(p - [0])`, the degree-0 bundle attached to `p` by the Jacobian isomorphism.
    pub fn degree_zero(p: C) -> Self {
        Self::new(0, p)
    }

    pub fn tensor(&self, other: &LineBundle) -> Self {
        Self::new(self.degree + other.degree, self.lift + other.lift)
    }

    pub fn inverse(&self) -> Self {
        Self::new(-self.degree, -self.lift)
    }

    pub fn factor(&self, z: C) -> C {
        expi(-(z - 0.5) * self.degree as f64) * expi(self.lift)
    }

    pub fn is_iso(&self, other: &LineBundle, lat: &Lattice) -> bool {
        self.degree == other.degree && lat.torus_distance(self.lift, other.lift) < CLASS_TOL
    }

    pub fn is_trivial(&self, lat: &Lattice) -> bool {
        self.is_iso(&Self::trivial(), lat)
    }

    /// True for degree 0 bundles with `L = L^{-1}`.
    pub fn is_two_torsion(&self, lat: &Lattice) -> bool {
        self.degree == 0 && lat.torsion_index(self.lift, CLASS_TOL).is_some()
    }
}

impl fmt::Display for LineBundle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "O({}; {:.9}{:+.9}i)", self.degree, self.lift.re, self.lift.im)
    }
}

/// Atiyah's classification of rank-2 bundles, up to twisting: a direct sum of
/// line bundles, the nontrivial extension `F_2` of `O` by `O`, or the stable
/// bundle `G_2(p)` with determinant `O(p)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum EllipticBundle {
    Decomposable(LineBundle, LineBundle),
    F2Twist(LineBundle),
    G2Twist { p: C, twist: LineBundle },
}

impl EllipticBundle {
    pub fn trivial() -> Self {
        EllipticBundle::Decomposable(LineBundle::trivial(), LineBundle::trivial())
    }

    /// `L + L^{-1}`.
    pub fn split(l: LineBundle) -> Self {
        EllipticBundle::Decomposable(l, l.inverse())
    }

    pub fn f2() -> Self {
        EllipticBundle::F2Twist(LineBundle::trivial())
    }

    pub fn hecke_length(&self) -> i32 {
        match self {
            EllipticBundle::Decomposable(a, b) => (a.degree - b.degree).abs(),
            EllipticBundle::F2Twist(_) => 0,
            EllipticBundle::G2Twist { .. } => 1,
        }
    }

    pub fn is_semistable(&self) -> bool {
        match self {
            EllipticBundle::Decomposable(a, b) => a.degree == b.degree,
            _ => true,
        }
    }

    pub fn is_stable(&self) -> bool {
        matches!(self, EllipticBundle::G2Twist { .. })
    }

    pub fn determinant(&self) -> LineBundle {
        match self {
            EllipticBundle::Decomposable(a, b) => a.tensor(b),
            EllipticBundle::F2Twist(l) => l.tensor(l),
            EllipticBundle::G2Twist { p, twist } => LineBundle::of_point(*p).tensor(twist).tensor(twist),
        }
    }

    pub fn degree(&self) -> i32 {
        self.determinant().degree
    }

    pub fn twist(&self, l: &LineBundle) -> Self {
        match self {
            EllipticBundle::Decomposable(a, b) => EllipticBundle::Decomposable(a.tensor(l), b.tensor(l)),
            EllipticBundle::F2Twist(m) => EllipticBundle::F2Twist(m.tensor(l)),
            EllipticBundle::G2Twist { p, twist } => EllipticBundle::G2Twist { p: *p, twist: twist.tensor(l) },
        }
    }

    /// The factor of automorphy `f_E(tau, z)` of the standard trivialization.
    pub fn automorphy(&self, z: C) -> Mat2 {
        match self {
            EllipticBundle::Decomposable(a, b) => diag(a.factor(z), b.factor(z)),
            EllipticBundle::F2Twist(l) => Mat2::new(ONE, ONE, ZERO, ONE) * l.factor(z),
            EllipticBundle::G2Twist { p, twist } => {
                Mat2::new(ZERO, ONE, automorphy_factor(*p + 0.5, z), ZERO) * twist.factor(z)
            }
        }
    }

    /// Isomorphism of bundles (not merely S-equivalence).
    pub fn is_iso(&self, other: &EllipticBundle, lat: &Lattice) -> bool {
        match (self, other) {
            (EllipticBundle::Decomposable(a, b), EllipticBundle::Decomposable(c, d)) => {
                (a.is_iso(c, lat) && b.is_iso(d, lat)) || (a.is_iso(d, lat) && b.is_iso(c, lat))
            }
            (EllipticBundle::F2Twist(l), EllipticBundle::F2Twist(m)) => l.is_iso(m, lat),
            (EllipticBundle::G2Twist { .. }, EllipticBundle::G2Twist { .. }) => {
                // G_2(p) (x) L ~ G_2(p') (x) L' iff the determinants agree and
                // the twists differ by a 2-torsion bundle compatible with them.
                self.determinant().is_iso(&other.determinant(), lat)
            }
            _ => false,
        }
    }
}

impl fmt::Display for EllipticBundle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EllipticBundle::Decomposable(a, b) => write!(f, "{a} + {b}"),
            EllipticBundle::F2Twist(l) => write!(f, "F2 (x) {l}"),
            EllipticBundle::G2Twist { p, twist } => write!(f, "G2({:.9}{:+.9}i) (x) {twist}", p.re, p.im),
        }
    }
}

impl Serialize for EllipticBundle {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

/// A modification at `point` in `direction`, quoted in the standard
/// trivialization of the bundle being modified.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EllipticStep {
    pub point: CurvePoint,
    pub direction: ProjPoint,
}

pub type Evaluator = Arc<dyn Fn(C) -> Mat2 + Send + Sync>;

/// A holomorphic `alpha_bar: C -> M(2, C)` representing a morphism
/// `source -> target` of bundles, with its table-row tag.
#[derive(Clone)]
pub struct MorphismRep {
    pub source: EllipticBundle,
    pub target: EllipticBundle,
    pub point: C,
    pub descriptor: String,
    evaluator: Evaluator,
}

impl fmt::Debug for MorphismRep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MorphismRep")
            .field("source", &self.source)
            .field("target", &self.target)
            .field("point", &self.point)
            .field("descriptor", &self.descriptor)
            .finish()
    }
}

impl MorphismRep {
    pub fn new(source: EllipticBundle, target: EllipticBundle, point: C, descriptor: impl Into<String>, evaluator: Evaluator) -> Self {
        MorphismRep { source, target, point, descriptor: descriptor.into(), evaluator }
    }

    pub fn eval(&self, z: C) -> Mat2 {
        (self.evaluator)(z)
    }

    pub fn evaluator(&self) -> Evaluator {
        self.evaluator.clone()
    }

    /// The direction `eta(alpha, p~)` in the target's trivialization.
    pub fn direction(&self) -> Result<ProjPoint> {
        eta_at(&|z| self.eval(z), self.point)
    }
}

/// Product of evaluators, `z -> a(z) b(z)`.
pub fn compose(a: &Evaluator, b: &Evaluator) -> Evaluator {
    let (a, b) = (a.clone(), b.clone());
    Arc::new(move |z| a(z) * b(z))
}

fn identity_evaluator() -> Evaluator {
    Arc::new(|_| Mat2::identity())
}

/// Largest relative residual of `alpha(z + tau) f_source(z) = f_target(z) alpha(z)`
/// and of `alpha(z + 1) = alpha(z)` over the given sample points.
pub fn check_equivariance(m: &MorphismRep, lat: &Lattice, samples: &[C]) -> f64 {
    let tau = lat.tau();
    let mut worst: f64 = 0.0;
    for &z in samples {
        let a = m.eval(z);
        let lhs = m.eval(z + tau) * m.source.automorphy(z);
        let rhs = m.target.automorphy(z) * a;
        let scale = rhs.norm().max(lhs.norm()).max(f64::MIN_POSITIVE);
        worst = worst.max((lhs - rhs).norm() / scale);
        let shifted = m.eval(z + ONE);
        worst = worst.max((shifted - a).norm() / a.norm().max(f64::MIN_POSITIVE));
    }
    worst
}

/// Sample points in the fundamental parallelogram, from a fixed low-discrepancy grid.
pub fn equivariance_samples(lat: &Lattice, n: usize) -> Vec<C> {
    let g = 0.618_033_988_749_894_9;
    (0..n)
        .map(|k| {
            let x = ((k as f64 + 0.5) * g).fract() - 0.5;
            let y = ((k as f64 + 0.5) / n as f64) - 0.5;
            C::new(x, 0.0) + lat.tau() * y
        })
        .collect()
}

/// Wraps a row `alpha_row: F -> E'` into a morphism `F -> E` through a frame
/// change `g` with `f_{E'}(z) g(z) = g(z + tau) f_E(z)`, i.e. `alpha = g^{-1} alpha_row`.
fn through_frame(row: Evaluator, g_inv: Evaluator) -> Evaluator {
    Arc::new(move |z| g_inv(z) * row(z))
}

/// Gauge `diag(e^{-2 pi i m z}, 1)` (or on the second summand) carrying the
/// lift `s` of a summand to `s - n - m tau`.
fn summand_gauge_inverse(m: f64, first: bool) -> Evaluator {
    Arc::new(move |z| {
        let e = expi(z * m);
        if first {
            diag(e, ONE)
        } else {
            diag(ONE, e)
        }
    })
}

pub(crate) fn summand_gauge_at(m: f64, first: bool, z: C) -> Mat2 {
    let e = expi(-z * m);
    if first {
        diag(e, ONE)
    } else {
        diag(ONE, e)
    }
}

struct Row {
    evaluator: Evaluator,
    source: EllipticBundle,
    descriptor: String,
}

/// Picks a divisor `(k-1)[r] + t` in the class of degree `k` and lift `s`
/// whose theta product does not vanish at `p`.
fn divisor_avoiding(lat: &Lattice, k: i32, s: C, p: C) -> (C, C) {
    let tau = lat.tau();
    let candidates = [
        ZERO,
        C::new(1.0 / 3.0, 0.0) + tau / 3.0,
        C::new(0.7, 0.0) + tau * 0.2,
        C::new(0.15, 0.0) + tau * 0.6,
        C::new(0.45, 0.0) + tau * 0.85,
    ];
    let score = |r: C| {
        let t = s - r * (k - 1) as f64;
        lat.theta_w(p, r).norm().min(lat.theta_w(p, t).norm())
    };
    let r = candidates
        .iter()
        .copied()
        .fold((ZERO, -1.0), |best, r| {
            let v = score(r);
            if v > best.1 {
                (r, v)
            } else {
                best
            }
        })
        .0;
    (r, s - r * (k - 1) as f64)
}

/// Rows for `Q + O` with `deg Q = k >= 0`; `q_lift` is the lift of `Q`.
fn decomposable_row(lat: &Lattice, k: i32, q_lift: C, p: C, a: &ProjPoint) -> Result<Row> {
    let l = lat.clone();
    let qb = LineBundle::new(k, q_lift);
    let minus_p = LineBundle::new(-1, -p);
    let o = LineBundle::trivial();
    let bundle = EllipticBundle::Decomposable(qb, o);
    let bad_row = |source: EllipticBundle, tag: &str| {
        let l = l.clone();
        Row { evaluator: Arc::new(move |z| diag(ONE, l.theta_w(z, p))), source, descriptor: tag.to_string() }
    };
    if k >= 2 {
        if a.is_one_zero() {
            return Ok(bad_row(EllipticBundle::Decomposable(qb, minus_p), "O(D)+O <- O(D)+O(-p), [1:0]"));
        }
        let (r, t) = divisor_avoiding(lat, k, q_lift, p);
        let prod = move |l: &Lattice, z: C| l.theta_w(z, r).powi(k - 1) * l.theta_w(z, t);
        let pv = prod(lat, p);
        if pv.norm() < SOLVE_GUARD {
            return Err(Error::RowNotFound { bundle: bundle.to_string(), direction: a.to_string() });
        }
        let lambda = a.a() / a.c() / pv;
        let l2 = l.clone();
        return Ok(Row {
            evaluator: Arc::new(move |z| Mat2::new(l2.theta_w(z, p), lambda * prod(&l2, z), ZERO, ONE)),
            source: EllipticBundle::Decomposable(LineBundle::new(k - 1, q_lift - p), o),
            descriptor: "O(D)+O <- O(D-p)+O, [lambda:1]".into(),
        });
    }
    if k == 1 {
        if lat.torus_distance(q_lift, p) < CLASS_TOL {
            if a.is_one_zero() {
                return Ok(bad_row(EllipticBundle::Decomposable(qb, minus_p), "O(p)+O <- O(p)+O(-p), [1:0]"));
            }
            if a.is_zero_one() {
                return Ok(Row {
                    evaluator: Arc::new(move |z| diag(l.theta_w(z, p), ONE)),
                    source: EllipticBundle::trivial(),
                    descriptor: "O(p)+O <- O+O, [0:1]".into(),
                });
            }
            let g0 = lat.g_theta_w(ZERO, ZERO);
            let coeff = -g0 * a.c() / a.a();
            return Ok(Row {
                evaluator: Arc::new(move |z| Mat2::new(l.theta_w(z, p), -l.g_theta_w(z, p), ZERO, coeff)),
                source: EllipticBundle::f2(),
                descriptor: "O(p)+O <- F2, [x:y]".into(),
            });
        }
        if a.is_one_zero() {
            return Ok(bad_row(EllipticBundle::Decomposable(qb, minus_p), "O(q)+O <- O(q)+O(-p), [1:0]"));
        }
        let tq = lat.theta_w(p, q_lift);
        if tq.norm() < SOLVE_GUARD {
            return Err(Error::RowNotFound { bundle: bundle.to_string(), direction: a.to_string() });
        }
        let lambda = a.a() / a.c() / tq;
        return Ok(Row {
            evaluator: Arc::new(move |z| Mat2::new(l.theta_w(z, p), lambda * l.theta_w(z, q_lift), ZERO, ONE)),
            source: EllipticBundle::Decomposable(LineBundle::new(0, q_lift - p), o),
            descriptor: "O(q)+O <- O(q-p)+O, [lambda:1]".into(),
        });
    }
    if k == 0 {
        if lat.torus_distance(q_lift, ZERO) < CLASS_TOL {
            if a.is_one_zero() {
                return Ok(bad_row(EllipticBundle::Decomposable(o, minus_p), "O+O <- O+O(-p), [1:0]"));
            }
            let lambda = a.a() / a.c();
            return Ok(Row {
                evaluator: Arc::new(move |z| Mat2::new(lambda, l.theta_w(z, p), ONE, ZERO)),
                source: EllipticBundle::Decomposable(o, minus_p),
                descriptor: "O+O <- O+O(-p), [lambda:1]".into(),
            });
        }
        let w = q_lift;
        let qt = p - w;
        if a.is_one_zero() {
            return Ok(bad_row(EllipticBundle::Decomposable(qb, minus_p), "O(p-q)+O <- O(p-q)+O(-p), [1:0]"));
        }
        if a.is_zero_one() {
            return Ok(Row {
                evaluator: Arc::new(move |z| diag(l.theta_w(z, p), ONE)),
                source: EllipticBundle::Decomposable(LineBundle::new(-1, -qt), o),
                descriptor: "O(p-q)+O <- O(-q)+O, [0:1]".into(),
            });
        }
        let half = C::new(0.5, 0.0);
        let tau = lat.tau();
        let den_a = lat.theta_tilde_w(-w, half - tau);
        let den_b = lat.theta_tilde_w(w, half - tau);
        if den_a.norm() < SOLVE_GUARD || den_b.norm() < SOLVE_GUARD {
            return Err(Error::RowNotFound { bundle: bundle.to_string(), direction: a.to_string() });
        }
        let ca = a.a() / den_a;
        let cb = a.c() / den_b;
        let ew = expi(w);
        return Ok(Row {
            evaluator: Arc::new(move |z| {
                Mat2::new(
                    ca * l.theta_tilde_w(z, p + w + half - tau),
                    -ca * ew * l.theta_tilde_w(z, p + w + half),
                    cb * l.theta_tilde_w(z, p - w + half - tau),
                    -cb * l.theta_tilde_w(z, p - w + half),
                )
            }),
            source: EllipticBundle::G2Twist { p: qt, twist: LineBundle::new(-1, -qt) },
            descriptor: "O(p-q)+O <- G2(q)(x)O(-q), [x:y]".into(),
        });
    }
    Err(Error::RowNotFound { bundle: bundle.to_string(), direction: a.to_string() })
}

fn f2_row(lat: &Lattice, p: C, a: &ProjPoint) -> Result<Row> {
    let l = lat.clone();
    if a.is_one_zero() {
        return Ok(Row {
            evaluator: Arc::new(move |z| Mat2::new(ONE, l.g_theta_w(z, p), ZERO, l.theta_w(z, p))),
            source: EllipticBundle::Decomposable(LineBundle::trivial(), LineBundle::new(-1, -p)),
            descriptor: "F2 <- O+O(-p), [1:0]".into(),
        });
    }
    let half = C::new(0.5, 0.0);
    let tau = lat.tau();
    let lambda = a.a() / a.c();
    let lp = lambda - 2.0 * lat.g_tilde_w(ZERO, half)?;
    let c = p - half;
    Ok(Row {
        evaluator: Arc::new(move |z| {
            let t1 = l.theta_tilde_w(z, c - tau);
            let g1 = l.g_theta_tilde_w(z, c - tau);
            let t0 = l.theta_tilde_w(z, c);
            let g0 = l.g_theta_tilde_w(z, c);
            Mat2::new(-(2.0 * g1 - t1) - lp * t1, 2.0 * g0 + lp * t0, -t1, t0)
        }),
        source: EllipticBundle::G2Twist { p, twist: LineBundle::new(-1, -p) },
        descriptor: "F2 <- G2(p)(x)O(-p), [lambda:1]".into(),
    })
}

fn g2_row(lat: &Lattice, p: C, d: &ProjPoint) -> Result<Row> {
    let l = lat.clone();
    let half = C::new(0.5, 0.0);
    let tau = lat.tau();
    if let Some(i) = lat.branch_index(d) {
        let zi = lat.torsion_lifts()[i];
        let c = p - zi * 2.0 + half;
        let e = expi(zi);
        return Ok(Row {
            evaluator: Arc::new(move |z| {
                let t0 = l.theta_tilde_w(z, c);
                let t1 = l.theta_tilde_w(z, c - tau);
                Mat2::new(
                    t0,
                    -2.0 * l.g_theta_tilde_w(z, c),
                    e * t1,
                    e * (t1 - 2.0 * l.g_theta_tilde_w(z, c - tau)),
                )
            }),
            source: EllipticBundle::F2Twist(LineBundle::degree_zero(zi)),
            descriptor: format!("G2(p) <- F2(x)L_{}, a = a_{}", i + 1, i + 1),
        });
    }
    let (w, _) = lat.invert_cover(d)?;
    let w = w.lift();
    let (ep, em) = (expi(w), expi(-w));
    Ok(Row {
        evaluator: Arc::new(move |z| {
            Mat2::new(
                l.theta_tilde_w(z, p - w * 2.0 + half),
                l.theta_tilde_w(z, p + w * 2.0 + half),
                ep * l.theta_tilde_w(z, p - w * 2.0 + half - tau),
                em * l.theta_tilde_w(z, p + w * 2.0 + half - tau),
            )
        }),
        source: EllipticBundle::split(LineBundle::degree_zero(w)),
        descriptor: "G2(p) <- L+L^{-1}, a = [1:h(w)]".into(),
    })
}

/// The constant frame `diag(1, c^{-1})`, `c = e^{pi i (r - p)}`, identifying
/// `G_2(r) (x) L` with `G_2(p) (x) L (x) O(0; (r - p)/2)`.
fn g2_reframe(r: C, p: C) -> (Mat2, LineBundle) {
    let c = (PI * I * (r - p)).exp();
    (diag(ONE, c.inv()), LineBundle::degree_zero((r - p) * 0.5))
}

/// A representative of the modification of `E` at `p` in direction `a`
/// (given in `E`'s standard trivialization).
pub fn morphism_rep(lat: &Lattice, e: &EllipticBundle, p: &CurvePoint, a: &ProjPoint) -> Result<MorphismRep> {
    let pl = p.lift();
    match *e {
        EllipticBundle::Decomposable(x, y) => {
            if x.degree < y.degree {
                let swap = Mat2::new(ZERO, ONE, ONE, ZERO);
                let inner = morphism_rep(lat, &EllipticBundle::Decomposable(y, x), p, &a.map(&swap)?)?;
                let ev = inner.evaluator();
                return Ok(MorphismRep::new(
                    inner.source,
                    *e,
                    pl,
                    inner.descriptor,
                    Arc::new(move |z| swap * ev(z)),
                ));
            }
            let k = x.degree - y.degree;
            let s = x.lift - y.lift;
            // Move the lift of the quotient to the one the table expects.
            let target_lift = match k {
                1 if lat.torus_distance(s, pl) < CLASS_TOL => pl,
                0 if lat.torus_distance(s, ZERO) < CLASS_TOL => ZERO,
                0 | 1 => lat.reduce(s),
                _ => s,
            };
            let (_, m) = nearest_lattice(s - target_lift, lat.tau());
            let g_at_p = summand_gauge_at(m, true, pl);
            let d = a.map(&g_at_p)?;
            let row = decomposable_row(lat, k, target_lift, pl, &d)?;
            let ev = through_frame(row.evaluator, summand_gauge_inverse(m, true));
            Ok(MorphismRep::new(row.source.twist(&y), *e, pl, row.descriptor, ev))
        }
        EllipticBundle::F2Twist(l) => {
            let row = f2_row(lat, pl, a)?;
            Ok(MorphismRep::new(row.source.twist(&l), *e, pl, row.descriptor, row.evaluator))
        }
        EllipticBundle::G2Twist { p: r, twist } => {
            let (phi, extra) = g2_reframe(r, pl);
            let d = a.map(&phi)?;
            let row = g2_row(lat, pl, &d)?;
            let phi_inv = phi.try_inverse().expect("diagonal frame is invertible");
            let ev = row.evaluator;
            Ok(MorphismRep::new(
                row.source.twist(&twist.tensor(&extra)),
                *e,
                pl,
                row.descriptor,
                Arc::new(move |z| phi_inv * ev(z)),
            ))
        }
    }
}

/// The bundle obtained by modifying `E` at `p` in direction `a`.
pub fn single_hecke(lat: &Lattice, e: &EllipticBundle, p: &CurvePoint, a: &ProjPoint) -> Result<EllipticBundle> {
    Ok(morphism_rep(lat, e, p, a)?.source)
}

/// Outcome of two successive modifications `E <- E_1 <- E_2` at `p_1, p_2`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct DoubleHecke {
    pub first_stable: bool,
    /// `E_2 (x) O(e)` with `2e = p_1 + p_2` when `E_2` is semistable.
    pub result: Option<EllipticBundle>,
}

/// Transports a base-frame direction `b` at `p_2` through the first step to
/// the raw direction in `E_1`'s trivialization.
fn transport(first: &MorphismRep, p2: C, b: &ProjPoint) -> Result<ProjPoint> {
    let m = first.eval(p2);
    let inv = m.try_inverse().ok_or_else(|| Error::InvalidInput("first modification is singular at p2".into()))?;
    b.map(&inv)
}

fn check_double_input(lat: &Lattice, e: &EllipticBundle, p1: &CurvePoint, p2: &CurvePoint) -> Result<()> {
    if lat.same_point(p1, p2, CLASS_TOL) {
        return Err(Error::InvalidInput("double modification needs distinct points".into()));
    }
    if !e.is_semistable() || !e.determinant().is_trivial(lat) {
        return Err(Error::InvalidInput(format!("{e} is not semistable with trivial determinant")));
    }
    Ok(())
}

/// Double modification by chaining two single modifications; `b` is given in
/// `E`'s trivialization and pulled back through the first step.
pub fn double_hecke(lat: &Lattice, e: &EllipticBundle, p1: &CurvePoint, p2: &CurvePoint, a: &ProjPoint, b: &ProjPoint) -> Result<DoubleHecke> {
    check_double_input(lat, e, p1, p2)?;
    let first = morphism_rep(lat, e, p1, a)?;
    let d2 = transport(&first, p2.lift(), b)?;
    let e2 = single_hecke(lat, &first.source, p2, &d2)?;
    let half = lat.halve_sum(p1, p2);
    let twisted = e2.twist(&LineBundle::of_point(half.lift()));
    Ok(DoubleHecke {
        first_stable: first.source.is_stable(),
        result: if twisted.is_semistable() { Some(twisted) } else { None },
    })
}

/// Frame normalization of a semistable trivial-determinant bundle into one
/// of the table representatives, returning the representative, the extra
/// 2-torsion twist and the per-point frame change applied to directions.
enum TableCase {
    /// `L_i + L_i`, handled as `O + O` twisted by `L_i`.
    Trivial(LineBundle),
    /// `F_2 (x) L_i`.
    F2(LineBundle),
    /// `O(p - e) + O(e - p)` with `p~ = e~ + s`.
    Split(C),
}

/// Double modification read off the two-step table.  Directions in rows
/// where `E_1` is stable are interpreted after transport to the standard
/// trivialization of `G_2(p_2)`.
pub fn double_hecke_table(lat: &Lattice, e: &EllipticBundle, p1: &CurvePoint, p2: &CurvePoint, a: &ProjPoint, b: &ProjPoint) -> Result<DoubleHecke> {
    check_double_input(lat, e, p1, p2)?;
    let (pl1, pl2) = (p1.lift(), p2.lift());
    let el = lat.halve_sum(p1, p2).lift();
    // Normalize the frame so the two summands have exactly inverse (or equal) lifts.
    let (case, normal, a, b) = match *e {
        EllipticBundle::Decomposable(x, y) => {
            let (case, normal, m) = if x.is_iso(&y, lat) && x.is_two_torsion(lat) {
                (TableCase::Trivial(x), EllipticBundle::Decomposable(x, x), nearest_lattice(y.lift - x.lift, lat.tau()).1)
            } else {
                (TableCase::Split(x.lift), EllipticBundle::split(x), nearest_lattice(y.lift + x.lift, lat.tau()).1)
            };
            let a = a.map(&summand_gauge_at(m, false, pl1))?;
            let b = b.map(&summand_gauge_at(m, false, pl2))?;
            (case, normal, a, b)
        }
        EllipticBundle::F2Twist(l) => (TableCase::F2(l), *e, *a, *b),
        EllipticBundle::G2Twist { .. } => unreachable!("rejected by input check"),
    };
    let unstable = |first_stable| Ok(DoubleHecke { first_stable, result: None });
    let found = |first_stable, bundle| Ok(DoubleHecke { first_stable, result: Some(bundle) });
    let stable_rows = || -> Result<DoubleHecke> {
        let first = morphism_rep(lat, &normal, p1, &a)?;
        let raw = transport(&first, pl2, &b)?;
        let (r, twist) = match first.source {
            EllipticBundle::G2Twist { p, twist } => (p, twist),
            _ => return Err(Error::InvalidInput("expected a stable intermediate bundle".into())),
        };
        let (phi, extra) = g2_reframe(r, pl2);
        // In the frame of G_2(p_2), H_2 (x) O(e) = (L(b) + L(b)^{-1}) (x) M
        // with M of order two fixed by the lifts; M is trivial for reduced data.
        let m = twist.tensor(&extra).tensor(&LineBundle::of_point(el));
        let bt = raw.map(&phi)?;
        let out = match lat.branch_index(&bt) {
            Some(i) => EllipticBundle::F2Twist(LineBundle::degree_zero(lat.torsion_lifts()[i])),
            None => EllipticBundle::split(LineBundle::degree_zero(lat.invert_cover(&bt)?.0.lift())),
        };
        let out = out.twist(&m);
        found(true, out)
    };
    match case {
        TableCase::Trivial(li) => {
            if a.approx_eq(&b) {
                return unstable(false);
            }
            let out = EllipticBundle::Decomposable(LineBundle::degree_zero(el - pl1), LineBundle::degree_zero(el - pl2));
            found(false, out.twist(&li))
        }
        TableCase::F2(li) => {
            if a.is_one_zero() {
                if b.is_one_zero() {
                    return unstable(false);
                }
                let out =
                    EllipticBundle::Decomposable(LineBundle::degree_zero(el - pl1), LineBundle::degree_zero(el - pl2));
                return found(false, out.twist(&li));
            }
            stable_rows()
        }
        TableCase::Split(s) => {
            let pt = el + s;
            let torsion1 = lat.torsion_index(pt - pl1, CLASS_TOL);
            let torsion2 = lat.torsion_index(pt - pl2, CLASS_TOL);
            let zs = lat.torsion_lifts();
            if a.is_zero_one() {
                if b.is_zero_one() {
                    return unstable(false);
                }
                if let Some(j) = torsion1 {
                    let lj = LineBundle::degree_zero(zs[j]);
                    if b.is_one_zero() {
                        return found(false, EllipticBundle::Decomposable(lj, lj));
                    }
                    return found(false, EllipticBundle::F2Twist(lj));
                }
                return found(false, EllipticBundle::split(LineBundle::degree_zero(pt - pl1)));
            }
            if a.is_one_zero() {
                if b.is_one_zero() {
                    return unstable(false);
                }
                if let Some(k) = torsion2 {
                    let lk = LineBundle::degree_zero(zs[k]);
                    if b.is_zero_one() {
                        return found(false, EllipticBundle::Decomposable(lk, lk));
                    }
                    return found(false, EllipticBundle::F2Twist(lk));
                }
                return found(false, EllipticBundle::split(LineBundle::degree_zero(pt - pl2)));
            }
            stable_rows()
        }
    }
}

/// The point of `M^ss(X) = CP^1` of a semistable bundle with trivial
/// determinant: `[L + L^{-1}] -> pi([L])`, `[F_2 (x) L_i] = [L_i + L_i]`.
pub fn mss_coordinate(lat: &Lattice, e: &EllipticBundle) -> Result<ProjPoint> {
    if !e.is_semistable() || e.is_stable() {
        return Err(Error::NotSemistable(e.to_string()));
    }
    if !e.determinant().is_trivial(lat) {
        return Err(Error::InvalidInput(format!("{e} does not have trivial determinant")));
    }
    match e {
        EllipticBundle::Decomposable(x, _) => Ok(lat.pi_cover_z(x.lift)),
        EllipticBundle::F2Twist(l) => Ok(lat.pi_cover_z(l.lift)),
        EllipticBundle::G2Twist { .. } => unreachable!(),
    }
}

/// Checks that `(E, l_q)` is parabolically stable with trivial determinant:
/// `E = L + L^{-1}` with `L != L^{-1}` and `l_q` off both summands, or
/// `E = F_2 (x) L_i` with `l_q != [1:0]`.
pub fn check_parabolic_base(lat: &Lattice, e: &EllipticBundle, line: &ProjPoint) -> Result<()> {
    let ok = match e {
        EllipticBundle::Decomposable(x, _) => {
            x.degree == 0
                && e.determinant().is_trivial(lat)
                && !x.is_two_torsion(lat)
                && !line.is_one_zero()
                && !line.is_zero_one()
        }
        EllipticBundle::F2Twist(l) => l.is_two_torsion(lat) && !line.is_one_zero(),
        EllipticBundle::G2Twist { .. } => false,
    };
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("({e}, {line}) is not parabolically stable with trivial determinant")))
    }
}

/// A parabolic bundle `(E, l_q)` followed by a sequence of modifications.
#[derive(Clone, Debug, Serialize)]
pub struct EllipticSequence {
    pub base: EllipticBundle,
    pub q: CurvePoint,
    pub line: ProjPoint,
    pub steps: Vec<EllipticStep>,
}

/// Intermediate data of a realized sequence.
#[derive(Clone)]
pub struct RealizedElliptic {
    pub bundles: Vec<EllipticBundle>,
    pub morphisms: Vec<MorphismRep>,
    /// Directions `l_{p_i}` of the composite at each point, in the base frame.
    pub base_lines: Vec<ProjPoint>,
}

impl RealizedElliptic {
    pub fn terminal(&self) -> EllipticBundle {
        *self.bundles.last().expect("bundles start with the base")
    }
}

pub fn realize(lat: &Lattice, seq: &EllipticSequence) -> Result<RealizedElliptic> {
    let mut bundle = seq.base;
    let mut bundles = vec![bundle];
    let mut morphisms = Vec::new();
    let mut base_lines = Vec::new();
    let mut prefix = identity_evaluator();
    for step in &seq.steps {
        let m = morphism_rep(lat, &bundle, &step.point, &step.direction)?;
        // The composite's line at p_i is the step direction pushed through
        // the earlier factors, which are invertible there.
        base_lines.push(step.direction.map(&prefix(step.point.lift()))?);
        prefix = compose(&prefix, &m.evaluator());
        bundle = m.source;
        bundles.push(bundle);
        morphisms.push(m);
    }
    Ok(RealizedElliptic { bundles, morphisms, base_lines })
}

/// Builds the sequence whose composite has direction `lines[i]` (in the base
/// frame) at `points[i]`.
pub fn sequence_from_base_lines(
    lat: &Lattice,
    base: EllipticBundle,
    q: CurvePoint,
    line: ProjPoint,
    points: &[CurvePoint],
    lines: &[ProjPoint],
) -> Result<EllipticSequence> {
    if points.len() != lines.len() {
        return Err(Error::InvalidInput("points and lines differ in length".into()));
    }
    let mut bundle = base;
    let mut prefix = identity_evaluator();
    let mut steps = Vec::with_capacity(points.len());
    for (p, l) in points.iter().zip(lines) {
        let m = prefix(p.lift());
        let raw = l.unmap(&m)?;
        let rep = morphism_rep(lat, &bundle, p, &raw)?;
        prefix = compose(&prefix, &rep.evaluator());
        bundle = rep.source;
        steps.push(EllipticStep { point: *p, direction: raw });
    }
    Ok(EllipticSequence { base, q, line, steps })
}

fn check_points(lat: &Lattice, seq: &EllipticSequence) -> Result<()> {
    let mut pts = vec![seq.q];
    pts.extend(seq.steps.iter().map(|s| s.point));
    for i in 0..pts.len() {
        for j in 0..i {
            if lat.same_point(&pts[i], &pts[j], CLASS_TOL) {
                return Err(Error::InvalidInput(format!("points {} and {} coincide", pts[j], pts[i])));
            }
        }
    }
    Ok(())
}

/// The coordinates `h = (h_0, ..., h_n)`: `h_0 = [E]` and
/// `h_i = [H_{2,i} (x) O(e_i)]`, where `E <- H_{1,i} <- H_{2,i}` modifies at
/// `q` along `l_q` and then at `p_i` along the composite's line `l_{p_i}`.
pub fn h_total(lat: &Lattice, seq: &EllipticSequence) -> Result<Vec<ProjPoint>> {
    check_parabolic_base(lat, &seq.base, &seq.line)?;
    check_points(lat, seq)?;
    let realized = realize(lat, seq)?;
    let mut out = vec![mss_coordinate(lat, &seq.base)?];
    for (step, line) in seq.steps.iter().zip(&realized.base_lines) {
        let d = double_hecke(lat, &seq.base, &seq.q, &step.point, &seq.line, line)?;
        let bundle = d.result.ok_or_else(|| {
            Error::NotSemistable(format!("H_2 at {} is unstable for a stable base", step.point))
        })?;
        out.push(mss_coordinate(lat, &bundle)?);
    }
    Ok(out)
}

/// The base bundle `E` with `[E] = t` used to invert `h`.
pub fn bundle_for_class(lat: &Lattice, t: &ProjPoint) -> Result<EllipticBundle> {
    match lat.branch_index(t) {
        Some(i) => Ok(EllipticBundle::F2Twist(LineBundle::degree_zero(lat.torsion_lifts()[i]))),
        None => Ok(EllipticBundle::split(LineBundle::degree_zero(lat.invert_cover(t)?.0.lift()))),
    }
}

/// Inverts `h`: a sequence over `q, p_1, ..., p_n` whose coordinates are `target`.
pub fn sequence_for_coordinates(
    lat: &Lattice,
    q: CurvePoint,
    line: ProjPoint,
    points: &[CurvePoint],
    target: &[ProjPoint],
) -> Result<EllipticSequence> {
    if target.len() != points.len() + 1 {
        return Err(Error::InvalidInput(format!("expected {} coordinates, got {}", points.len() + 1, target.len())));
    }
    let base = bundle_for_class(lat, &target[0])?;
    check_parabolic_base(lat, &base, &line)?;
    let first = morphism_rep(lat, &base, &q, &line)?;
    let r = match first.source {
        EllipticBundle::G2Twist { p, twist } => (p, twist),
        other => return Err(Error::InvalidInput(format!("modification along a good line gave {other}"))),
    };
    let mut lines = Vec::with_capacity(points.len());
    for (p, t) in points.iter().zip(&target[1..]) {
        let (phi, extra) = g2_reframe(r.0, p.lift());
        let e = lat.halve_sum(&q, p);
        // H_2 (x) O(e) = (L(w) + L(w)^{-1}) (x) M with M of order two.
        let m = r.1.tensor(&extra).tensor(&LineBundle::of_point(e.lift()));
        if m.degree != 0 {
            return Err(Error::InvalidInput("unexpected degree after normalization".into()));
        }
        let class_lift = match lat.branch_index(t) {
            Some(i) => lat.torsion_lifts()[i],
            None => lat.invert_cover(t)?.0.lift(),
        };
        let dir = lat.pi_cover_z(class_lift - m.lift);
        let raw = dir.unmap(&phi)?;
        lines.push(raw.map(&first.eval(p.lift()))?);
    }
    sequence_from_base_lines(lat, base, q, line, points, &lines)
}

/// `f(p) = (pi(p - e_1), pi(p - p_1), pi(p - p_2 + e_2 - e_1))` with
/// `2 e_i = q + p_i`.
pub fn f_embedding(lat: &Lattice, p: C, q: &CurvePoint, p1: &CurvePoint, p2: &CurvePoint) -> [ProjPoint; 3] {
    let e1 = lat.halve_sum(q, p1).lift();
    let e2 = lat.halve_sum(q, p2).lift();
    [lat.pi_cover_z(p - e1), lat.pi_cover_z(p - p1.lift()), lat.pi_cover_z(p - p2.lift() + e2 - e1)]
}

/// `f(p) = (pi(p - e), pi(p - p_1))` with `2e = q + p_1`.
pub fn f_embedding_one(lat: &Lattice, p: C, q: &CurvePoint, p1: &CurvePoint) -> [ProjPoint; 2] {
    let e = lat.halve_sum(q, p1).lift();
    [lat.pi_cover_z(p - e), lat.pi_cover_z(p - p1.lift())]
}

fn max_distance(a: &[ProjPoint], b: &[ProjPoint]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.distance(y)).fold(0.0, f64::max)
}

/// Distance from `t` to the image of `f`, whose k-th coordinate is
/// `pi(p - shifts[k])`: local minimization from 64 grid samples and from
/// the preimages of each coordinate.
fn distance_to_image(lat: &Lattice, t: &[ProjPoint], shifts: &[C]) -> Result<f64> {
    let tau = lat.tau();
    let f = |p: C| -> Vec<ProjPoint> { shifts.iter().map(|s| lat.pi_cover_z(p - s)).collect() };
    let mut starts: Vec<C> = (0..64)
        .map(|k| C::new(((k % 8) as f64 + 0.5) / 8.0, 0.0) + tau * (((k / 8) as f64 + 0.5) / 8.0))
        .collect();
    for (coord, shift) in t.iter().zip(shifts) {
        let (w, _) = lat.invert_cover(coord)?;
        starts.push(shift + w.lift());
        starts.push(shift - w.lift());
    }
    let objective = |p: C| -> f64 { f(p).iter().zip(t).map(|(x, y)| x.distance(y).powi(2)).sum() };
    let mut scored: Vec<(f64, C)> = starts.into_iter().map(|s| (objective(s), s)).collect();
    scored.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut best = f64::INFINITY;
    for (_, s) in scored.into_iter().take(REFINED_STARTS) {
        let mut p = s;
        let mut val = objective(p);
        let mut step = 0.05;
        // Pattern search on the two real coordinates; robust near the
        // branch points where the cover is not locally invertible.
        for _ in 0..200 {
            let mut improved = false;
            for dir in [ONE, -ONE, I, -I] {
                let cand = p + dir * step;
                let v = objective(cand);
                if v < val {
                    p = cand;
                    val = v;
                    improved = true;
                    break;
                }
            }
            if !improved {
                step *= 0.5;
                if step < 1e-13 {
                    break;
                }
            }
        }
        best = best.min(max_distance(&f(p), t));
    }
    Ok(best)
}

/// Chordal distance (max over coordinates) from a triple to the curve `f(X)`.
pub fn distance_to_curve(lat: &Lattice, t: &[ProjPoint; 3], q: &CurvePoint, p1: &CurvePoint, p2: &CurvePoint) -> Result<f64> {
    let e1 = lat.halve_sum(q, p1).lift();
    let e2 = lat.halve_sum(q, p2).lift();
    distance_to_image(lat, t, &[e1, p1.lift(), p2.lift() - e2 + e1])
}

/// Chordal distance from a pair to the curve `p -> (pi(p - e), pi(p - p_1))`.
pub fn distance_to_curve_one(lat: &Lattice, t: &[ProjPoint; 2], q: &CurvePoint, p1: &CurvePoint) -> Result<f64> {
    let e = lat.halve_sum(q, p1).lift();
    distance_to_image(lat, t, &[e, p1.lift()])
}

/// Zeros of `det alpha` in the fundamental parallelogram centred at the
/// Hecke point: the winding number of `det` around its boundary, and the
/// torus distance to `p~` of the zero found by Newton's method from the
/// smallest value on a `grid x grid` sample.
pub fn det_zero_localization(m: &MorphismRep, lat: &Lattice, grid: usize) -> (i64, f64) {
    let tau = lat.tau();
    let det = |z: C| m.eval(z).determinant();
    let corner = m.point - (ONE + tau) * 0.5 + C::new(1e-3, 0.0) + tau * 7e-4;
    // Winding number along the four edges.
    let path = |t: f64| -> C {
        let s = t * 4.0;
        match s as usize {
            0 => corner + ONE * s,
            1 => corner + ONE + tau * (s - 1.0),
            2 => corner + ONE + tau - ONE * (s - 2.0),
            _ => corner + tau - tau * (s - 3.0),
        }
    };
    let steps = 4000;
    let mut phase = 0.0;
    let mut prev = det(path(0.0));
    for k in 1..=steps {
        let cur = det(path(k as f64 / steps as f64));
        phase += (cur / prev).arg();
        prev = cur;
    }
    let winding = (phase / (2.0 * PI)).round() as i64;
    let mut z = corner;
    let mut best = f64::INFINITY;
    for i in 0..grid {
        for j in 0..grid {
            let c = corner + ONE * ((i as f64 + 0.5) / grid as f64) + tau * ((j as f64 + 0.5) / grid as f64);
            let v = det(c).norm();
            if v < best {
                best = v;
                z = c;
            }
        }
    }
    for _ in 0..50 {
        let h = 1e-6;
        let d = (det(z + h) - det(z - h)) / (2.0 * h);
        if d.norm() == 0.0 {
            break;
        }
        let dz = det(z) / d;
        z -= dz;
        if dz.norm() < 1e-14 {
            break;
        }
    }
    (winding, lat.torus_distance(z, m.point))
}

/// True when the first modification of a one-step sequence is unstable,
/// decided by whether `h` lies on `p -> (pi(p - e), pi(p - p_1))`.
pub fn first_step_unstable(lat: &Lattice, seq: &EllipticSequence) -> Result<bool> {
    if seq.steps.len() != 1 {
        return Err(Error::InvalidInput("expected a single modification".into()));
    }
    let h = h_total(lat, seq)?;
    Ok(distance_to_curve_one(lat, &[h[0], h[1]], &seq.q, &seq.steps[0].point)? < CURVE_TOL)
}

/// Membership in `H_p(X; q; p_1, ..., p_n)` for `n <= 2`: always for `n <= 1`,
/// and for `n = 2` exactly when `h` misses the curve `f(X)`.
pub fn membership_hp(lat: &Lattice, seq: &EllipticSequence) -> Result<bool> {
    match seq.steps.len() {
        0 | 1 => Ok(true),
        2 => {
            let h = h_total(lat, seq)?;
            let t = [h[0], h[1], h[2]];
            let d = distance_to_curve(lat, &t, &seq.q, &seq.steps[0].point, &seq.steps[1].point)?;
            Ok(d >= CURVE_TOL)
        }
        n => Err(Error::Unsupported(format!("exact membership is available for n <= 2, got n = {n}"))),
    }
}

/// Membership decided directly from the terminal bundle's Hecke length.
pub fn membership_hp_direct(lat: &Lattice, seq: &EllipticSequence) -> Result<bool> {
    let n = seq.steps.len() as i32;
    Ok(realize(lat, seq)?.terminal().hecke_length() == n % 2)
}

/// True when the direction is a branch point, i.e. `a = a_i` for some `i`.
pub fn is_branch_direction(lat: &Lattice, a: &ProjPoint) -> bool {
    lat.branch_points().iter().any(|b| b.distance(a) < PROJ_TOL)
}
