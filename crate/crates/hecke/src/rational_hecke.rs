//! Hecke modifications of rank-2 bundles on the projective line.
//!
//! Bundles `O(n) + O(m)` are stored with `n >= m`; the standard frame lists the
//! `O(n)` summand first. Directions always refer to the standard frame over
//! `U0 = CP^1 - {infinity}` of the bundle being modified.

use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grassmannian::{eta_at, ProjPoint};
use crate::pseries::{SeriesMat2, TruncSeries, C, ONE, ZERO};

/// Negative-power coefficients above this size make a chart conversion fail.
pub const GLOBAL_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct RationalBundle {
    hi: i32,
    lo: i32,
}

impl RationalBundle {
    /// `O(n) + O(m)`, in either order.
    pub fn new(n: i32, m: i32) -> Self {
        RationalBundle { hi: n.max(m), lo: n.min(m) }
    }

    pub fn trivial() -> Self {
        Self::new(0, 0)
    }

    pub fn degrees(&self) -> (i32, i32) {
        (self.hi, self.lo)
    }

    pub fn degree(&self) -> i32 {
        self.hi + self.lo
    }

    pub fn hecke_length(&self) -> i32 {
        self.hi - self.lo
    }

    pub fn is_semistable(&self) -> bool {
        self.hi == self.lo
    }

    pub fn twist(&self, k: i32) -> Self {
        Self::new(self.hi + k, self.lo + k)
    }
}

impl fmt::Display for RationalBundle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "O({}) + O({})", self.hi, self.lo)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RationalHeckeStep {
    pub point: C,
    pub direction: ProjPoint,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RationalSequence {
    pub base: RationalBundle,
    pub steps: Vec<RationalHeckeStep>,
}

/// The table row that a (bundle, direction) pair dispatches to.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum RationalRow {
    /// `O(n) + O <- O(n) + O(-1)`, direction `[1:0]`, `diag(1, z - mu)`.
    UnstableUp,
    /// `O(n) + O <- O(n-1) + O`, direction `[lambda:1]`, `((z - mu, lambda), (0, 1))`.
    UnstableDown { lambda: C },
    /// `O + O <- O + O(-1)`, direction `[lambda:1]`, `((lambda, z - mu), (1, 0))`.
    StableAffine { lambda: C },
    /// `O + O <- O + O(-1)`, direction `[1:0]`, `diag(1, z - mu)`.
    StableInfinity,
}

impl fmt::Display for RationalRow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RationalRow::UnstableUp => write!(f, "O(n)+O <- O(n)+O(-1) at [1:0]"),
            RationalRow::UnstableDown { .. } => write!(f, "O(n)+O <- O(n-1)+O at [lambda:1]"),
            RationalRow::StableAffine { .. } => write!(f, "O+O <- O+O(-1) at [lambda:1]"),
            RationalRow::StableInfinity => write!(f, "O+O <- O+O(-1) at [1:0]"),
        }
    }
}

/// Which row of the single-modification table fires.
pub fn branch_transition(b: &RationalBundle, dir: &ProjPoint) -> RationalRow {
    match (b.is_semistable(), dir.ratio()) {
        (false, None) => RationalRow::UnstableUp,
        (false, Some(lambda)) => RationalRow::UnstableDown { lambda },
        (true, None) => RationalRow::StableInfinity,
        (true, Some(lambda)) => RationalRow::StableAffine { lambda },
    }
}

/// The bundle obtained by modifying `b` in direction `dir`.
pub fn single_hecke(b: &RationalBundle, dir: &ProjPoint) -> RationalBundle {
    let (n, m) = b.degrees();
    match branch_transition(b, dir) {
        RationalRow::UnstableUp | RationalRow::StableInfinity | RationalRow::StableAffine { .. } => {
            RationalBundle::new(n, m - 1)
        }
        RationalRow::UnstableDown { .. } => RationalBundle::new(n - 1, m),
    }
}

/// Polynomial matrices are carried as series whose order exceeds their degree.
pub fn poly_order(n_steps: usize) -> usize {
    (n_steps + 2).max(crate::pseries::DEFAULT_ORDER)
}

/// The table representative `alpha : F -> E` for a modification of `b` at `step`.
pub fn morphism_matrix(b: &RationalBundle, step: &RationalHeckeStep, order: usize) -> SeriesMat2 {
    let mu = step.point;
    let lin = TruncSeries::linear(-mu, ONE, order);
    let c = |x: C| TruncSeries::constant(x, order);
    let e = match branch_transition(b, &step.direction) {
        RationalRow::UnstableUp | RationalRow::StableInfinity => [[c(ONE), c(ZERO)], [c(ZERO), lin]],
        RationalRow::UnstableDown { lambda } => [[lin, c(lambda)], [c(ZERO), c(ONE)]],
        RationalRow::StableAffine { lambda } => [[c(lambda), lin], [c(ONE), c(ZERO)]],
    };
    SeriesMat2::from_entries(e)
}

/// The matrix `[alpha]_w = D_E(w) alpha_z(1/w) D_F(w)^{-1}` of a morphism
/// `alpha : F -> E` in the chart at infinity, with `D = diag(w^d1, w^d2)`.
///
/// Fails with [`Error::NotGlobal`] when a negative power of `w` survives,
/// i.e. when `alpha_z` does not extend to a bundle map over all of CP^1.
pub fn chart_convert(alpha_z: &SeriesMat2, domain: &RationalBundle, codomain: &RationalBundle) -> Result<SeriesMat2> {
    let n = alpha_z.order();
    let (e1, e2) = codomain.degrees();
    let (f1, f2) = domain.degrees();
    let de = [e1, e2];
    let df = [f1, f2];
    let mut top = 0i32;
    for i in 0..2 {
        for j in 0..2 {
            top = top.max(de[i] - df[j]);
        }
    }
    let out_order = (top.max(0) as usize).max(n);
    let mut entries: Vec<TruncSeries> = Vec::with_capacity(4);
    for i in 0..2 {
        for j in 0..2 {
            let mut coeffs = vec![ZERO; out_order + 1];
            for k in 0..=n {
                let ck = alpha_z.entry(i, j).coeff(k);
                if ck == ZERO {
                    continue;
                }
                let power = de[i] - df[j] - k as i32;
                if power < 0 {
                    if ck.norm() > GLOBAL_TOL {
                        return Err(Error::NotGlobal { power, size: ck.norm() });
                    }
                    continue;
                }
                coeffs[power as usize] += ck;
            }
            entries.push(TruncSeries::new(coeffs, out_order));
        }
    }
    let mut it = entries.into_iter();
    let (a, b, c, d) = (it.next().unwrap(), it.next().unwrap(), it.next().unwrap(), it.next().unwrap());
    Ok(SeriesMat2::from_entries([[a, b], [c, d]]))
}

/// Intermediate data of a realized sequence.
#[derive(Clone, Debug)]
pub struct RealizedSequence {
    pub bundles: Vec<RationalBundle>,
    pub matrices: Vec<SeriesMat2>,
    pub product: SeriesMat2,
}

impl RealizedSequence {
    pub fn terminal(&self) -> RationalBundle {
        *self.bundles.last().expect("bundles start with the base")
    }
}

/// Builds the composite of table representatives for a sequence whose step
/// directions are given in the frame of each intermediate bundle.
pub fn realize(seq: &RationalSequence) -> RealizedSequence {
    let order = poly_order(seq.steps.len());
    let mut bundle = seq.base;
    let mut bundles = vec![bundle];
    let mut matrices = Vec::new();
    let mut product = SeriesMat2::identity(order);
    for step in &seq.steps {
        let m = morphism_matrix(&bundle, step, order);
        product = product.mul(&m);
        matrices.push(m);
        bundle = single_hecke(&bundle, &step.direction);
        bundles.push(bundle);
    }
    RealizedSequence { bundles, matrices, product }
}

/// Builds a sequence from directions `h_i` given in the base frame, by
/// pulling each one back through the composite of the earlier steps.
pub fn realize_from_base_directions(base: RationalBundle, points: &[C], dirs: &[ProjPoint]) -> Result<RationalSequence> {
    if points.len() != dirs.len() {
        return Err(Error::InvalidInput("points and directions differ in length".into()));
    }
    let order = poly_order(points.len());
    let mut bundle = base;
    let mut product = SeriesMat2::identity(order);
    let mut steps = Vec::with_capacity(points.len());
    for (mu, h) in points.iter().zip(dirs) {
        let raw = h.unmap(&product.eval(*mu))?;
        let step = RationalHeckeStep { point: *mu, direction: raw };
        product = product.mul(&morphism_matrix(&bundle, &step, order));
        bundle = single_hecke(&bundle, &raw);
        steps.push(step);
    }
    Ok(RationalSequence { base, steps })
}

/// The directions `h_i = eta(alpha_1 ... alpha_i, mu_i)` in the base frame.
pub fn h_map(seq: &RationalSequence) -> Result<Vec<ProjPoint>> {
    let r = realize(seq);
    let order = r.product.order();
    let mut prefix = SeriesMat2::identity(order);
    let mut out = Vec::with_capacity(seq.steps.len());
    for (m, step) in r.matrices.iter().zip(&seq.steps) {
        prefix = prefix.mul(m);
        let p = prefix.clone();
        out.push(eta_at(&move |z| p.eval(z), step.point)?);
    }
    Ok(out)
}

/// Default Hecke points `mu_k = k/(n+1) + 0.1 i k`, `k = 1..n`.
pub fn default_points(n: usize) -> Vec<C> {
    (1..=n).map(|k| C::new(k as f64 / (n as f64 + 1.0), 0.1 * k as f64)).collect()
}

/// Terminal bundle of the sequence of modifications of `O + O` with base-frame
/// directions `dirs` at `points`.
pub fn terminal_bundle(dirs: &[ProjPoint], points: &[C]) -> Result<RationalBundle> {
    let seq = realize_from_base_directions(RationalBundle::trivial(), points, dirs)?;
    Ok(realize(&seq).terminal())
}

/// Membership in `H(S^2, n)`: the terminal bundle has minimal Hecke length.
pub fn membership_h(n: usize, dirs: &[ProjPoint], points: Option<&[C]>) -> Result<bool> {
    if dirs.len() != n {
        return Err(Error::InvalidInput(format!("expected {n} directions, got {}", dirs.len())));
    }
    let default = default_points(n);
    let points = points.unwrap_or(&default);
    let terminal = terminal_bundle(dirs, points)?;
    Ok(terminal.hecke_length() == (n % 2) as i32)
}

/// The closed-form complements: `n = 2` removes the diagonal, `n = 3` the small diagonal.
pub fn membership_h_closed_form(dirs: &[ProjPoint]) -> Option<bool> {
    match dirs.len() {
        0 | 1 => Some(true),
        2 => Some(!dirs[0].approx_eq(&dirs[1])),
        3 => Some(!(dirs[0].approx_eq(&dirs[1]) && dirs[1].approx_eq(&dirs[2]))),
        _ => None,
    }
}

/// `det` of a polynomial matrix, returned as its coefficients.
pub fn det_coefficients(m: &SeriesMat2) -> Vec<C> {
    m.det().coeffs().to_vec()
}
