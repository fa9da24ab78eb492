use hecke::elliptic_hecke::{realize, EllipticBundle, EllipticSequence, LineBundle};
use hecke::elliptic_kernel::Lattice;
use hecke::grassmannian::ProjPoint;
use hecke::parabolic::*;
use hecke::pseries::C;
use hecke::rational_hecke::{self, RationalBundle};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rational(lines: &[ProjPoint], weight: f64) -> ParabolicBundle {
    let marks = lines.iter().enumerate().map(|(i, l)| Mark { point: C::new(i as f64 * 0.7 - 1.0, 0.3), line: *l }).collect();
    ParabolicBundle::new(Underlying::Rational(RationalBundle::trivial()), marks, weight).unwrap()
}

fn affine(x: f64) -> ProjPoint {
    ProjPoint::affine(C::new(x, 0.0))
}

fn rc(rng: &mut ChaCha8Rng) -> C {
    C::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
}

/// Lines from a small pool so that coincidences are common.
fn pooled_line(rng: &mut ChaCha8Rng) -> ProjPoint {
    [ProjPoint::one_zero(), ProjPoint::zero_one(), affine(1.0), ProjPoint::affine(rc(rng))][rng.gen_range(0..4)]
}

#[test]
fn sphere_examples() {
    for w in [1e-3, 1e-4] {
        assert_eq!(stability(&rational(&[affine(0.0), affine(1.0), affine(2.0)], w)).verdict, Verdict::Stable);
        assert_eq!(stability(&rational(&[affine(0.0)], w)).verdict, Verdict::Unstable);
        assert_eq!(stability(&rational(&[affine(0.5), affine(0.5)], w)).verdict, Verdict::Unstable);
        assert_eq!(stability(&rational(&[affine(0.5), affine(1.5)], w)).verdict, Verdict::StrictlySemistable);
        assert_eq!(stability(&rational(&[affine(0.5), affine(1.5), affine(0.5)], w)).verdict, Verdict::Unstable);
    }
    let unstable = ParabolicBundle::with_default_weight(Underlying::Rational(RationalBundle::new(0, -2)), vec![]).unwrap();
    assert!(classify_lines(&unstable).is_err());
    assert_eq!(stability(&unstable).verdict, Verdict::Unstable);
}

#[test]
fn elliptic_bad_lines() {
    let lat = Lattice::default();
    let zs = lat.torsion_lifts();
    let ell = |bundle, lines: &[ProjPoint]| {
        let marks = lines.iter().enumerate().map(|(i, l)| Mark { point: C::new(0.1 + 0.2 * i as f64, 0.4), line: *l }).collect();
        ParabolicBundle::with_default_weight(Underlying::Elliptic { bundle, lattice: lat.clone() }, marks).unwrap()
    };
    let f2 = EllipticBundle::F2Twist(LineBundle::degree_zero(zs[1]));
    let c = classify_lines(&ell(f2, &[ProjPoint::one_zero(), affine(0.3)])).unwrap();
    assert!(c[0].bad && !c[1].bad);
    let g2 = EllipticBundle::G2Twist { p: C::new(0.3, 0.2), twist: LineBundle::trivial() };
    assert!(classify_lines(&ell(g2, &[ProjPoint::one_zero(), ProjPoint::zero_one()])).unwrap().iter().all(|c| !c.bad));
    let li = LineBundle::degree_zero(zs[2]);
    let c = classify_lines(&ell(EllipticBundle::Decomposable(li, li), &[affine(0.3), affine(-2.0)])).unwrap();
    assert!(c.iter().all(|c| c.bad));
    let split = EllipticBundle::split(LineBundle::degree_zero(C::new(0.31, 0.47)));
    let p = ell(split, &[ProjPoint::one_zero(), ProjPoint::zero_one(), affine(0.2), ProjPoint::one_zero()]);
    let c = classify_lines(&p).unwrap();
    assert_eq!(c.iter().map(|c| c.group).collect::<Vec<_>>(), vec![Some(0), Some(1), None, Some(0)]);
    assert_eq!(stability(&p), StabilityVerdict { verdict: Verdict::StrictlySemistable, witness: 2 });
    let unstable = EllipticBundle::Decomposable(LineBundle::of_point(C::new(0.1, 0.0)), LineBundle::trivial());
    assert!(classify_lines(&ell(unstable, &[affine(0.0)])).is_err());
}

#[test]
fn unstable_marks_force_unstable_terminal_on_the_sphere() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut hits = 0;
    for _ in 0..200 {
        let n = rng.gen_range(1..=4);
        let lines: Vec<ProjPoint> = (0..n).map(|_| pooled_line(&mut rng)).collect();
        let points: Vec<C> = rational_hecke::default_points(n);
        let marks: Vec<Mark> = points.iter().zip(&lines).map(|(p, l)| Mark { point: *p, line: *l }).collect();
        let seq = rational_sequence(RationalBundle::trivial(), &marks).unwrap();
        let pb = ParabolicBundle::with_default_weight(Underlying::Rational(seq.base), marks.clone()).unwrap();
        let verdict = stability(&pb);
        let pb4 = ParabolicBundle::new(Underlying::Rational(seq.base), marks, 1e-4).unwrap();
        assert_eq!(stability(&pb4), verdict);
        if verdict.verdict == Verdict::Unstable {
            hits += 1;
            assert!(!rational_hecke::realize(&seq).terminal().is_semistable());
        }
    }
    assert!(hits > 50);
}

#[test]
fn unstable_marks_force_unstable_terminal_on_the_torus() {
    let lat = Lattice::default();
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let zs = lat.torsion_lifts();
    let mut hits = 0;
    for k in 0..200 {
        let base = if k % 2 == 0 {
            EllipticBundle::split(LineBundle::degree_zero(C::new(rng.gen_range(0.05..0.45), 0.0) + lat.tau() * rng.gen_range(0.05..0.45)))
        } else {
            EllipticBundle::F2Twist(LineBundle::degree_zero(zs[rng.gen_range(0..4)]))
        };
        let pts: Vec<C> = (0..3).map(|i| C::new(0.13 + 0.29 * i as f64, 0.0) + lat.tau() * (0.2 + 0.25 * i as f64)).collect();
        let pool = [ProjPoint::one_zero(), ProjPoint::one_zero(), ProjPoint::zero_one(), affine(1.0 + k as f64 * 1e-3)];
        let marks: Vec<Mark> = pts[1..].iter().map(|p| Mark { point: *p, line: pool[rng.gen_range(0..4)] }).collect();
        let seq = elliptic_sequence(&lat, base, lat.point(pts[0]), affine(1.0 + k as f64 * 1e-3), &marks).unwrap();
        let pb = ParabolicBundle::with_default_weight(Underlying::Elliptic { bundle: base, lattice: lat.clone() }, marks.clone()).unwrap();
        let verdict = stability(&pb);
        let pb4 = ParabolicBundle::new(Underlying::Elliptic { bundle: base, lattice: lat.clone() }, marks, 1e-4).unwrap();
        assert_eq!(stability(&pb4), verdict);
        if verdict.verdict == Verdict::Unstable {
            hits += 1;
            assert!(!realize(&lat, &seq).unwrap().terminal().is_semistable());
        }
    }
    assert!(hits > 30);
}

#[test]
fn lines_and_sequences_correspond() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let perms: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    for _ in 0..50 {
        let marks: Vec<Mark> = (0..3).map(|_| Mark { point: rc(&mut rng) * 2.0, line: pooled_line(&mut rng) }).collect();
        let seq = rational_sequence(RationalBundle::trivial(), &marks).unwrap();
        let back = rational_lines(&seq).unwrap();
        for (x, y) in back.iter().zip(&marks) {
            assert!(x.line.distance(&y.line) < 1e-9);
        }
        let terminal = rational_hecke::realize(&seq).terminal();
        for perm in perms {
            let permuted: Vec<Mark> = perm.iter().map(|&i| marks[i]).collect();
            let s = rational_sequence(RationalBundle::trivial(), &permuted).unwrap();
            assert_eq!(rational_hecke::realize(&s).terminal(), terminal);
        }
    }
    for r in 1..=5 {
        let line = ProjPoint::affine(rc(&mut rng));
        let marks: Vec<Mark> = (0..r).map(|i| Mark { point: C::new(i as f64, 0.0), line }).collect();
        let seq = rational_sequence(RationalBundle::trivial(), &marks).unwrap();
        assert_eq!(rational_hecke::realize(&seq).terminal(), RationalBundle::new(0, -r));
    }
}

#[test]
fn hecke_embeddings_are_stable() {
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    let aux = [
        Mark { point: C::new(5.0, 0.0), line: affine(0.0) },
        Mark { point: C::new(6.0, 0.0), line: affine(1.0) },
        Mark { point: C::new(7.0, 0.0), line: ProjPoint::one_zero() },
    ];
    let empty = rational_hecke::RationalSequence { base: RationalBundle::trivial(), steps: vec![] };
    assert_eq!(stability(&rational_hecke_embedding(&empty, &aux).unwrap()).verdict, Verdict::Stable);
    let mut embedded = 0;
    for _ in 0..200 {
        let n = [2, 4][rng.gen_range(0..2)];
        let marks: Vec<Mark> = (0..n).map(|i| Mark { point: C::new(i as f64 - 1.5, 0.2), line: pooled_line(&mut rng) }).collect();
        let seq = rational_sequence(RationalBundle::trivial(), &marks).unwrap();
        match rational_hecke_embedding(&seq, &aux) {
            Ok(pb) => {
                embedded += 1;
                assert_eq!(stability(&pb).verdict, Verdict::Stable);
            }
            Err(hecke::Error::TerminalNotMinimal(_)) => {}
            Err(e) => panic!("{e}"),
        }
    }
    assert!(embedded > 50);

    let lat = Lattice::default();
    let mut embedded = 0;
    for k in 0..60 {
        let base = EllipticBundle::split(LineBundle::degree_zero(C::new(0.2 + 0.003 * k as f64, 0.0) + lat.tau() * 0.3));
        let pts = [C::new(0.7, 0.0) + lat.tau() * 0.1, C::new(0.2, 0.0) + lat.tau() * 0.6];
        let marks: Vec<Mark> = pts.iter().map(|p| Mark { point: *p, line: pooled_line(&mut rng) }).collect();
        let seq: EllipticSequence = elliptic_sequence(&lat, base, lat.point(C::new(0.45, 0.0) + lat.tau() * 0.85), affine(1.0), &marks).unwrap();
        match elliptic_hecke_embedding(&lat, &seq) {
            Ok(pb) => {
                embedded += 1;
                assert_eq!(pb.marks.len(), 3);
                assert_eq!(stability(&pb).verdict, Verdict::Stable);
            }
            Err(hecke::Error::TerminalNotMinimal(_)) => {}
            Err(e) => panic!("{e}"),
        }
    }
    assert!(embedded > 20);
}
