use hecke::grassmannian::ProjPoint;
use hecke::pseries::{Mat2, C};
use hecke::rational_hecke::{RationalBundle, RationalHeckeStep, RationalSequence};
use hecke::seidel_smith::*;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rc(rng: &mut ChaCha8Rng) -> C {
    C::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
}

fn seq(points: &[C], dirs: &[ProjPoint]) -> RationalSequence {
    RationalSequence {
        base: RationalBundle::trivial(),
        steps: points.iter().zip(dirs).map(|(p, d)| RationalHeckeStep { point: *p, direction: *d }).collect(),
    }
}

fn max_diff(a: &DMatrix<C>, b: &DMatrix<C>) -> f64 {
    (a - b).iter().map(|x| x.norm()).fold(0.0, f64::max)
}

#[test]
fn kamnitzer_m1_closed_forms() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..100 {
        let (l1, l2, m1, m2) = (rc(&mut rng), rc(&mut rng), rc(&mut rng), rc(&mut rng));
        let alpha = seq(&[m1, m2], &[ProjPoint::affine(l1), ProjPoint::affine(l2)]);
        let a = kamnitzer(&alpha).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[m1 - l1 * l2, l1 * (m2 - m1 + l1 * l2), -l2, m2 + l1 * l2]);
        assert!(max_diff(&a, &expected) < 1e-10, "{a} vs {expected}");
        assert!(multiset_distance(&eigenvalues(&a), &[m1, m2]) < 1e-9);

        let beta = seq(&[m1, m2], &[ProjPoint::one_zero(), ProjPoint::affine(l2)]);
        let b = kamnitzer(&beta).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[m2, -l2, C::new(0.0, 0.0), m1]);
        assert!(max_diff(&b, &expected) < 1e-10, "{b} vs {expected}");
    }
}

#[test]
fn woodward_m1_closed_forms() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..100 {
        let (l1, l2, m1, m2) = (rc(&mut rng), rc(&mut rng), rc(&mut rng), rc(&mut rng));
        let lb = l2 / (m2 - m1);
        let a = DMatrix::from_row_slice(2, 2, &[m1 - l1 * l2, l1 * (m2 - m1 + l1 * l2), -l2, m2 + l1 * l2]);
        let w = woodward(&a, &[m1, m2]).unwrap();
        let d0 = w[0].distance(&ProjPoint::new(C::new(1.0, 0.0), -l1).unwrap());
        assert!(d0 < 1e-8, "{d0} {} {} {l1} {l2} {m1} {m2}", w[0], w[1]);
        assert!(w[1].distance(&ProjPoint::new(-lb, 1.0 + l1 * lb).unwrap()) < 1e-8);
        let b = DMatrix::from_row_slice(2, 2, &[m2, -l2, C::new(0.0, 0.0), m1]);
        let w = woodward(&b, &[m1, m2]).unwrap();
        assert!(w[0].distance(&ProjPoint::zero_one()) < 1e-8);
        assert!(w[1].distance(&ProjPoint::new(C::new(1.0, 0.0), -lb).unwrap()) < 1e-8);
    }
}

fn sample_sequence(rng: &mut ChaCha8Rng, m: usize) -> RationalSequence {
    let points: Vec<C> = (0..2 * m).map(|_| rc(rng) * 2.0).collect();
    let dirs: Vec<ProjPoint> = (0..2 * m).map(|_| ProjPoint::affine(rc(rng))).collect();
    seq(&points, &dirs)
}

#[test]
fn conjecture_holds_for_m1_and_m2() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for m in 1..=2 {
        for _ in 0..200 {
            let s = sample_sequence(&mut rng, m);
            let r = conjecture_check(&s).unwrap();
            assert!(r < 1e-8, "m={m} residual {r}");
        }
    }
}

#[test]
fn conjecture_sweep_m3() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let s = sample_sequence(&mut rng, 3);
        worst = worst.max(conjecture_check(&s).unwrap());
    }
    println!("m=3 worst residual {worst:e}");
}

#[test]
fn kamnitzer_lands_in_slice() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    for m in 1..=3 {
        for _ in 0..20 {
            let s = sample_sequence(&mut rng, m);
            let a = kamnitzer(&s).unwrap();
            SlodowyMatrix::from_dense(&a, 1e-8).unwrap();
            let pts: Vec<C> = s.steps.iter().map(|x| x.point).collect();
            assert!(multiset_distance(&eigenvalues(&a), &pts) < 1e-8);
        }
    }
}

#[test]
fn left_eigenvectors_have_chain_shape() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    for _ in 0..50 {
        let blocks: Vec<Mat2> = (0..2).map(|_| Mat2::new(rc(&mut rng), rc(&mut rng), rc(&mut rng), rc(&mut rng))).collect();
        let a = SlodowyMatrix::new(blocks).unwrap().dense();
        for mu in eigenvalues(&a) {
            let v = left_eigenvector(&a, mu);
            for j in 0..2 {
                assert!((v[j] - mu * v[2 + j]).norm() < 1e-9);
            }
        }
    }
}

