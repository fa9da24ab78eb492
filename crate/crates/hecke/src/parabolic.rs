//! Rank-2 parabolic bundles with small weights: parabolic degree, good and
//! bad lines, the stability verdict, the correspondence between parabolic
//! lines and sequences of Hecke modifications, and the Hecke embeddings
//! into moduli of semistable parabolic bundles.

use serde::Serialize;

use crate::elliptic_hecke::{
    nearest_lattice, realize as realize_elliptic, sequence_from_base_lines, summand_gauge_at, EllipticBundle, EllipticSequence,
    CLASS_TOL,
};
use crate::elliptic_kernel::{CurvePoint, Lattice};
use crate::error::{Error, Result};
use crate::grassmannian::ProjPoint;
use crate::pseries::C;
use crate::rational_hecke::{h_map, realize, realize_from_base_directions, RationalBundle, RationalSequence};

/// Default parabolic weight.
pub const DEFAULT_WEIGHT: f64 = 1e-3;

/// The vector bundle underlying a parabolic bundle.
#[derive(Clone, Debug)]
pub enum Underlying {
    Rational(RationalBundle),
    Elliptic { bundle: EllipticBundle, lattice: Lattice },
}

impl Underlying {
    pub fn degree(&self) -> i32 {
        match self {
            Underlying::Rational(b) => b.degree(),
            Underlying::Elliptic { bundle, .. } => bundle.degree(),
        }
    }

    pub fn is_semistable(&self) -> bool {
        match self {
            Underlying::Rational(b) => b.is_semistable(),
            Underlying::Elliptic { bundle, .. } => bundle.is_semistable(),
        }
    }

    fn describe(&self) -> String {
        match self {
            Underlying::Rational(b) => b.to_string(),
            Underlying::Elliptic { bundle, .. } => bundle.to_string(),
        }
    }
}

/// A parabolic line at a marked point; rational points are affine
/// coordinates, elliptic points are lifts in the fundamental domain.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Mark {
    pub point: C,
    pub line: ProjPoint,
}

#[derive(Clone, Debug)]
pub struct ParabolicBundle {
    pub underlying: Underlying,
    pub marks: Vec<Mark>,
    pub weight: f64,
}

impl ParabolicBundle {
    pub fn new(underlying: Underlying, marks: Vec<Mark>, weight: f64) -> Result<Self> {
        if !(weight > 0.0) || weight * 2.0 * marks.len().max(1) as f64 >= 1.0 {
            return Err(Error::InvalidInput(format!(
                "weight {weight} is outside (0, 1/(2n)) for n = {}",
                marks.len()
            )));
        }
        for i in 0..marks.len() {
            for j in 0..i {
                let same = match &underlying {
                    Underlying::Rational(_) => (marks[i].point - marks[j].point).norm() < CLASS_TOL,
                    Underlying::Elliptic { lattice, .. } => {
                        lattice.torus_distance(marks[i].point, marks[j].point) < CLASS_TOL
                    }
                };
                if same {
                    return Err(Error::InvalidInput(format!("marks {j} and {i} share a point")));
                }
            }
        }
        Ok(ParabolicBundle { underlying, marks, weight })
    }

    pub fn with_default_weight(underlying: Underlying, marks: Vec<Mark>) -> Result<Self> {
        Self::new(underlying, marks, DEFAULT_WEIGHT)
    }
}

/// Parabolic degree of a line subbundle of degree `degree` whose fibre
/// agrees with the parabolic line exactly at the marks with sign `+1`.
pub fn pdeg_line(degree: i32, signs: &[i8], weight: f64) -> f64 {
    degree as f64 + weight * signs.iter().map(|&s| s as f64).sum::<f64>()
}

/// Parabolic degree of the rank-2 bundle: the weights `+mu` and `-mu` of
/// each flag cancel.
pub fn pdeg(pb: &ParabolicBundle) -> f64 {
    pb.underlying.degree() as f64
}

pub fn pslope(pb: &ParabolicBundle) -> f64 {
    pdeg(pb) / 2.0
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Verdict {
    Stable,
    StrictlySemistable,
    Unstable,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct StabilityVerdict {
    pub verdict: Verdict,
    /// Largest number of lines bad in the same direction.
    pub witness: usize,
}

/// Whether a line is bad, and if so which maximal-slope subbundle it lies on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct LineClass {
    pub bad: bool,
    pub group: Option<usize>,
}

const GOOD: LineClass = LineClass { bad: false, group: None };

fn bad(group: usize) -> LineClass {
    LineClass { bad: true, group: Some(group) }
}

/// Groups lines by equality; each class of equal lines is one subbundle.
fn group_equal(lines: &[ProjPoint]) -> Vec<LineClass> {
    let mut reps: Vec<ProjPoint> = Vec::new();
    lines
        .iter()
        .map(|l| match reps.iter().position(|r| r.approx_eq(l)) {
            Some(g) => bad(g),
            None => {
                reps.push(*l);
                bad(reps.len() - 1)
            }
        })
        .collect()
}

/// Good/bad flags with same-direction grouping.  For `L + L` the
/// maximal-slope subbundles are the constant lines once both summands
/// carry the same factor of automorphy, so lines are compared in that frame.
pub fn classify_lines(pb: &ParabolicBundle) -> Result<Vec<LineClass>> {
    if !pb.underlying.is_semistable() {
        return Err(Error::UnderlyingUnstable(pb.underlying.describe()));
    }
    let lines: Vec<ProjPoint> = pb.marks.iter().map(|m| m.line).collect();
    match &pb.underlying {
        Underlying::Rational(_) => Ok(group_equal(&lines)),
        Underlying::Elliptic { bundle, lattice } => match bundle {
            EllipticBundle::Decomposable(a, b) if a.is_iso(b, lattice) => {
                let (_, m) = nearest_lattice(b.lift - a.lift, lattice.tau());
                let gauged = pb
                    .marks
                    .iter()
                    .map(|mk| mk.line.map(&summand_gauge_at(m, false, mk.point)))
                    .collect::<Result<Vec<_>>>()?;
                Ok(group_equal(&gauged))
            }
            EllipticBundle::Decomposable(..) => Ok(lines
                .iter()
                .map(|l| {
                    if l.is_one_zero() {
                        bad(0)
                    } else if l.is_zero_one() {
                        bad(1)
                    } else {
                        GOOD
                    }
                })
                .collect()),
            EllipticBundle::F2Twist(_) => Ok(lines.iter().map(|l| if l.is_one_zero() { bad(0) } else { GOOD }).collect()),
            EllipticBundle::G2Twist { .. } => Ok(vec![GOOD; lines.len()]),
        },
    }
}

/// Stability from the parabolic slope of the worst line subbundle: a
/// maximal-slope subbundle through `m` of the `n` lines has parabolic degree
/// `deg E / 2 + mu (2m - n)`; lower-slope subbundles lose at least `1/2`,
/// more than the weights can make up since `mu n < 1/2`.
pub fn stability(pb: &ParabolicBundle) -> StabilityVerdict {
    let n = pb.marks.len();
    let classes = match classify_lines(pb) {
        Ok(c) => c,
        Err(_) => return StabilityVerdict { verdict: Verdict::Unstable, witness: 0 },
    };
    let groups = classes.iter().filter_map(|c| c.group).max().map_or(0, |g| g + 1);
    let m = (0..groups).map(|g| classes.iter().filter(|c| c.group == Some(g)).count()).max().unwrap_or(0);
    // Half the degree of E is the degree of a maximal-slope subbundle; for odd
    // degree (G_2) there are no bad lines and the comparison is strict.
    let signs: Vec<i8> = (0..n).map(|i| if i < m { 1 } else { -1 }).collect();
    let excess = pdeg_line(0, &signs, pb.weight);
    let verdict = if excess.abs() < pb.weight / 2.0 {
        Verdict::StrictlySemistable
    } else if excess < 0.0 {
        Verdict::Stable
    } else {
        Verdict::Unstable
    };
    StabilityVerdict { verdict, witness: m }
}

/// Parabolic lines of a rational sequence: the directions of the composite
/// at each point, in the base trivialization.
pub fn rational_lines(seq: &RationalSequence) -> Result<Vec<Mark>> {
    let h = h_map(seq)?;
    Ok(seq.steps.iter().zip(h).map(|(s, line)| Mark { point: s.point, line }).collect())
}

/// The rational sequence with the given parabolic lines.
pub fn rational_sequence(base: RationalBundle, marks: &[Mark]) -> Result<RationalSequence> {
    let points: Vec<C> = marks.iter().map(|m| m.point).collect();
    let lines: Vec<ProjPoint> = marks.iter().map(|m| m.line).collect();
    realize_from_base_directions(base, &points, &lines)
}

/// Parabolic lines of an elliptic sequence at its modification points.
pub fn elliptic_lines(lat: &Lattice, seq: &EllipticSequence) -> Result<Vec<Mark>> {
    let r = realize_elliptic(lat, seq)?;
    Ok(seq.steps.iter().zip(r.base_lines).map(|(s, line)| Mark { point: s.point.lift(), line }).collect())
}

/// The elliptic sequence over `(E, l_q)` with the given parabolic lines.
pub fn elliptic_sequence(lat: &Lattice, base: EllipticBundle, q: CurvePoint, line: ProjPoint, marks: &[Mark]) -> Result<EllipticSequence> {
    let points: Vec<CurvePoint> = marks.iter().map(|m| lat.point(m.point)).collect();
    let lines: Vec<ProjPoint> = marks.iter().map(|m| m.line).collect();
    sequence_from_base_lines(lat, base, q, line, &points, &lines)
}

/// `[E <- ... <- E_n] -> (E, l_{p_1}, ..., l_{p_n}, l_{q_1}, l_{q_2}, l_{q_3})`
/// for `E_n` semistable and three auxiliary marks with distinct lines.
pub fn rational_hecke_embedding(seq: &RationalSequence, aux: &[Mark; 3]) -> Result<ParabolicBundle> {
    if !seq.steps.len().is_multiple_of(2) {
        return Err(Error::InvalidInput("the embedding is defined for an even number of steps".into()));
    }
    let terminal = realize(seq).terminal();
    if !terminal.is_semistable() {
        return Err(Error::TerminalNotMinimal(terminal.to_string()));
    }
    let mut marks = rational_lines(seq)?;
    marks.extend_from_slice(aux);
    ParabolicBundle::with_default_weight(Underlying::Rational(seq.base), marks)
}

/// `[(E, l_q) <- ... <- E_n] -> (E, l_{p_1}, ..., l_{p_n}, l_q)` for `E_n` semistable.
pub fn elliptic_hecke_embedding(lat: &Lattice, seq: &EllipticSequence) -> Result<ParabolicBundle> {
    if !seq.steps.len().is_multiple_of(2) {
        return Err(Error::InvalidInput("the embedding is defined for an even number of steps".into()));
    }
    let terminal = realize_elliptic(lat, seq)?.terminal();
    if !terminal.is_semistable() {
        return Err(Error::TerminalNotMinimal(terminal.to_string()));
    }
    let mut marks = elliptic_lines(lat, seq)?;
    marks.push(Mark { point: seq.q.lift(), line: seq.line });
    ParabolicBundle::with_default_weight(Underlying::Elliptic { bundle: seq.base, lattice: lat.clone() }, marks)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn marks(lines: &[ProjPoint]) -> Vec<Mark> {
        lines.iter().enumerate().map(|(i, l)| Mark { point: C::new(i as f64, 0.5), line: *l }).collect()
    }

    #[test]
    fn weights_cancel_in_rank_two() {
        let pb = ParabolicBundle::with_default_weight(Underlying::Rational(RationalBundle::trivial()), marks(&[ProjPoint::one_zero()])).unwrap();
        assert_eq!(pdeg(&pb), 0.0);
        assert!((pdeg_line(-1, &[1, 1, 1], 0.01) - (-0.97)).abs() < 1e-15);
        assert_eq!(pdeg_line(2, &[1, -1], 0.01), 2.0);
    }

    #[test]
    fn weight_bound_is_enforced() {
        let m = marks(&[ProjPoint::one_zero(); 3]);
        assert!(ParabolicBundle::new(Underlying::Rational(RationalBundle::trivial()), m, 0.2).is_err());
    }
}
