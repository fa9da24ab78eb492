//! The Slodowy slice `S_2m`, Kamnitzer's map from Hecke sequences to the
//! Seidel-Smith space, and Woodward's embedding into `(CP^1)^2m`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::grassmannian::ProjPoint;
use crate::pseries::{Mat2, C, ONE, ZERO};
use crate::rational_hecke::{h_map, realize, RationalSequence};

/// Minimum eigenvalue separation accepted by [`woodward`].
pub const SPECTRAL_GAP: f64 = 1e-8;

/// A block-companion matrix: free `2x2` blocks `Y_1..Y_m` down the left block
/// column and identities on the block superdiagonal.
#[derive(Clone, Debug, PartialEq)]
pub struct SlodowyMatrix {
    blocks: Vec<Mat2>,
}

impl SlodowyMatrix {
    pub fn new(blocks: Vec<Mat2>) -> Result<Self> {
        if blocks.is_empty() {
            return Err(Error::InvalidInput("a slice needs at least one block".into()));
        }
        Ok(SlodowyMatrix { blocks })
    }

    pub fn m(&self) -> usize {
        self.blocks.len()
    }

    pub fn blocks(&self) -> &[Mat2] {
        &self.blocks
    }

    pub fn dense(&self) -> DMatrix<C> {
        let m = self.m();
        let mut a = DMatrix::from_element(2 * m, 2 * m, ZERO);
        for (k, y) in self.blocks.iter().enumerate() {
            for i in 0..2 {
                for j in 0..2 {
                    a[(2 * k + i, j)] = y[(i, j)];
                }
            }
            if k + 1 < m {
                a[(2 * k, 2 * k + 2)] = ONE;
                a[(2 * k + 1, 2 * k + 3)] = ONE;
            }
        }
        a
    }

    /// Reads the slice back out of a dense matrix, checking its shape.
    pub fn from_dense(a: &DMatrix<C>, tol: f64) -> Result<Self> {
        let n = a.nrows();
        if !n.is_multiple_of(2) || n == 0 || a.ncols() != n {
            return Err(Error::InvalidInput(format!("{}x{} is not a slice shape", n, a.ncols())));
        }
        let m = n / 2;
        let blocks: Vec<Mat2> = (0..m)
            .map(|k| Mat2::new(a[(2 * k, 0)], a[(2 * k, 1)], a[(2 * k + 1, 0)], a[(2 * k + 1, 1)]))
            .collect();
        let s = SlodowyMatrix { blocks };
        let diff = (&s.dense() - a).iter().map(|x| x.norm()).fold(0.0, f64::max);
        if diff > tol {
            return Err(Error::InvalidInput(format!("matrix is {diff:e} away from the slice")));
        }
        Ok(s)
    }
}

/// Eigenvalues of a dense complex matrix.
pub fn eigenvalues(a: &DMatrix<C>) -> Vec<C> {
    let schur = a.clone().schur();
    let t = schur.unpack().1;
    (0..t.nrows()).map(|i| t[(i, i)]).collect()
}

/// The multiset of eigenvalues of a slice matrix.
pub fn chi(a: &SlodowyMatrix) -> Vec<C> {
    eigenvalues(&a.dense())
}

/// Matching distance between two multisets of the same size.
pub fn multiset_distance(a: &[C], b: &[C]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    let mut rest: Vec<C> = b.to_vec();
    let mut worst: f64 = 0.0;
    for x in a {
        let (idx, d) = rest
            .iter()
            .enumerate()
            .map(|(i, y)| (i, (x - y).norm()))
            .fold((0, f64::INFINITY), |acc, v| if v.1 < acc.1 { v } else { acc });
        worst = worst.max(d);
        rest.swap_remove(idx);
    }
    worst
}

/// Kamnitzer's map: the matrix of multiplication by `z` on
/// `C[z]^2 / P C[z]^2`, `P = alpha_1 ... alpha_2m`, in the basis
/// `z^{m-1} e1, z^{m-1} e2, ..., e1, e2`.
pub fn kamnitzer(seq: &RationalSequence) -> Result<DMatrix<C>> {
    let n = seq.steps.len();
    if n == 0 || !n.is_multiple_of(2) {
        return Err(Error::InvalidInput(format!("need an even, positive number of steps, got {n}")));
    }
    let m = n / 2;
    let r = realize(seq);
    let (hi, lo) = r.terminal().degrees();
    if hi != -(m as i32) || lo != -(m as i32) {
        return Err(Error::ReductionFailure(format!("terminal bundle is {}", r.terminal())));
    }
    let p = &r.product;
    let deg = p.order();
    let dim = 4 * m;
    // Unknowns: 2m basis coefficients, then q = sum_{t<m, s} q_{t,s} z^t e_s.
    // Equation row 2k + r is the coefficient of z^k e^r for k < 2m.
    let mut sys = DMatrix::from_element(dim, dim, ZERO);
    for k in 0..m {
        for j in 0..2 {
            let power = m - 1 - k;
            sys[(2 * power + j, 2 * k + j)] = ONE;
        }
    }
    for t in 0..m {
        for s in 0..2 {
            let col = 2 * m + 2 * t + s;
            for d in 0..=deg {
                for row_comp in 0..2 {
                    let c = p.entry(row_comp, s).coeff(d);
                    if c == ZERO {
                        continue;
                    }
                    let power = t + d;
                    if power < 2 * m {
                        sys[(2 * power + row_comp, col)] += c;
                    }
                }
            }
        }
    }
    let lu = sys.clone().lu();
    let scale = p.max_abs().max(1.0);
    let mut a = DMatrix::from_element(2 * m, 2 * m, ZERO);
    for k in 0..m {
        for j in 0..2 {
            // z * (z^{m-1-k} e_j) = z^{m-k} e_j
            let power = m - k;
            let mut rhs = DVector::from_element(dim, ZERO);
            rhs[2 * power + j] = ONE;
            let sol = lu.solve(&rhs).ok_or_else(|| Error::ReductionFailure("singular reduction system".into()))?;
            let res = (&sys * &sol - &rhs).norm();
            if !res.is_finite() || res > 1e-8 * scale {
                return Err(Error::ReductionFailure(format!("residual {res:e}")));
            }
            // Every coefficient of P q beyond z^{2m-1} must cancel.
            for top in 2 * m..=(deg + m) {
                for row_comp in 0..2 {
                    let mut acc = ZERO;
                    for t in 0..m {
                        for s in 0..2 {
                            if top >= t && top - t <= deg {
                                acc += p.entry(row_comp, s).coeff(top - t) * sol[2 * m + 2 * t + s];
                            }
                        }
                    }
                    if acc.norm() > 1e-8 * scale {
                        return Err(Error::ReductionFailure(format!(
                            "z^{top} coefficient {:e} does not cancel",
                            acc.norm()
                        )));
                    }
                }
            }
            for b in 0..2 * m {
                a[(b, 2 * k + j)] = sol[b];
            }
        }
    }
    Ok(a)
}

/// A left eigenvector `v` with `v A = mu v`, as the kernel of `(A - mu)^T`.
pub fn left_eigenvector(a: &DMatrix<C>, mu: C) -> DVector<C> {
    let n = a.nrows();
    let shifted = (a - DMatrix::<C>::identity(n, n) * mu).transpose();
    let svd = shifted.svd(false, true);
    let v_t = svd.v_t.expect("requested right singular vectors");
    let (idx, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, s)| if *s < acc.1 { (i, *s) } else { acc });
    // Rows of v_t are conjugated right singular vectors.
    DVector::from_iterator(n, v_t.row(idx).iter().map(|x| x.conj()))
}

/// Woodward's points `a_k = [X(mu_k) : Y(mu_k)]`, read from the last 2-block
/// of the left eigenvectors, in the caller's eigenvalue order.
pub fn woodward(a: &DMatrix<C>, eigenvalues: &[C]) -> Result<Vec<ProjPoint>> {
    let n = a.nrows();
    if eigenvalues.len() != n {
        return Err(Error::InvalidInput(format!("expected {n} eigenvalues, got {}", eigenvalues.len())));
    }
    let mut gap = f64::INFINITY;
    for i in 0..n {
        for j in 0..i {
            gap = gap.min((eigenvalues[i] - eigenvalues[j]).norm());
        }
    }
    if gap < SPECTRAL_GAP {
        return Err(Error::DegenerateSpectrum(gap));
    }
    eigenvalues
        .iter()
        .map(|mu| {
            let v = left_eigenvector(a, *mu);
            ProjPoint::new(v[n - 2], v[n - 1])
        })
        .collect()
}

/// `[x:y] -> [-y:x]`.
pub fn phi(p: &ProjPoint) -> ProjPoint {
    ProjPoint::new(-p.c(), p.a()).expect("nonzero")
}

/// Largest chordal distance between `phi(h_k)` and Woodward's `a_k`.
pub fn conjecture_check(seq: &RationalSequence) -> Result<f64> {
    let h = h_map(seq)?;
    let a = kamnitzer(seq)?;
    let points: Vec<C> = seq.steps.iter().map(|s| s.point).collect();
    let w = woodward(&a, &points)?;
    Ok(h.iter().zip(&w).map(|(x, y)| phi(x).distance(y)).fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_slice_spectrum() {
        let s = SlodowyMatrix::new(vec![Mat2::new(C::new(1.0, 0.0), ZERO, ZERO, C::new(2.0, 0.0))]).unwrap();
        let ev = chi(&s);
        assert!(multiset_distance(&ev, &[C::new(1.0, 0.0), C::new(2.0, 0.0)]) < 1e-12);
    }

    #[test]
    fn dense_shape_roundtrip() {
        let y = |a: f64| Mat2::new(C::new(a, 0.0), C::new(1.0, a), ZERO, C::new(-a, 0.5));
        let s = SlodowyMatrix::new(vec![y(1.0), y(2.0), y(3.0)]).unwrap();
        let back = SlodowyMatrix::from_dense(&s.dense(), 0.0).unwrap();
        assert_eq!(back, s);
    }
}
