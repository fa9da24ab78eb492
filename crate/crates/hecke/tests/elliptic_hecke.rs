use std::sync::Arc;

use hecke::elliptic_hecke::*;
use hecke::elliptic_kernel::{CurvePoint, Lattice};
use hecke::grassmannian::ProjPoint;
use hecke::pseries::C;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const EQUIV_TOL: f64 = 1e-9;

fn lattice() -> Lattice {
    Lattice::default()
}

fn random_lift(lat: &Lattice, rng: &mut ChaCha8Rng) -> C {
    C::new(rng.gen_range(0.0..1.0), 0.0) + lat.tau() * rng.gen_range(0.0..1.0)
}

fn random_point(lat: &Lattice, rng: &mut ChaCha8Rng) -> CurvePoint {
    lat.point(random_lift(lat, rng))
}

fn random_dir(rng: &mut ChaCha8Rng) -> ProjPoint {
    ProjPoint::affine(C::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)))
}

/// A shift of a lift by a lattice vector with nonzero `tau` component, so
/// that gauges are exercised.
fn shifted(lat: &Lattice, z: C, rng: &mut ChaCha8Rng) -> C {
    z + C::new(rng.gen_range(-1..=1) as f64, 0.0) + lat.tau() * rng.gen_range(-1..=1) as f64
}

fn sample_bundles(lat: &Lattice, p: &CurvePoint, rng: &mut ChaCha8Rng) -> Vec<EllipticBundle> {
    let l = |d: i32, s: C| LineBundle::new(d, s);
    let r = random_lift(lat, rng);
    let t = random_lift(lat, rng);
    let zs = lat.torsion_lifts();
    vec![
        EllipticBundle::Decomposable(l(2, r), l(-1, t)),
        EllipticBundle::Decomposable(l(-1, t), l(2, r)),
        EllipticBundle::Decomposable(l(1, r + t), l(0, t)),
        EllipticBundle::Decomposable(l(1, shifted(lat, p.lift(), rng) + t), l(0, t)),
        EllipticBundle::Decomposable(l(0, r), l(0, t)),
        EllipticBundle::Decomposable(l(0, shifted(lat, t, rng)), l(0, t)),
        EllipticBundle::split(l(0, r)),
        EllipticBundle::Decomposable(l(0, zs[2]), l(0, -zs[2])),
        EllipticBundle::F2Twist(l(0, r)),
        EllipticBundle::F2Twist(l(0, zs[3])),
        EllipticBundle::G2Twist { p: r, twist: l(0, t) },
        EllipticBundle::G2Twist { p: shifted(lat, p.lift(), rng), twist: l(-1, t) },
    ]
}

fn sample_directions(lat: &Lattice, rng: &mut ChaCha8Rng) -> Vec<ProjPoint> {
    let mut out = vec![ProjPoint::one_zero(), ProjPoint::zero_one(), random_dir(rng), random_dir(rng)];
    out.extend(lat.branch_points().iter().copied());
    out
}

#[test]
fn every_row_is_equivariant_and_hits_its_direction() {
    let lat = lattice();
    let samples = equivariance_samples(&lat, 12);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    let mut rows = std::collections::BTreeSet::new();
    for _ in 0..20 {
        let p = random_point(&lat, &mut rng);
        for e in sample_bundles(&lat, &p, &mut rng) {
            for a in sample_directions(&lat, &mut rng) {
                let m = morphism_rep(&lat, &e, &p, &a).unwrap_or_else(|err| panic!("{e} at {p} along {a}: {err}"));
                rows.insert(m.descriptor.clone());
                let res = check_equivariance(&m, &lat, &samples);
                worst = worst.max(res);
                assert!(res < EQUIV_TOL, "{}: {e} <- {} residual {res:e}", m.descriptor, m.source);
                let d = m.direction().unwrap();
                assert!(d.distance(&a) < 1e-8, "{}: direction {d} vs {a}", m.descriptor);
                assert_eq!((m.source.hecke_length() - e.hecke_length()).abs(), 1, "{}", m.descriptor);
                let det = e.determinant().tensor(&LineBundle::new(-1, -p.lift()));
                assert!(m.source.determinant().is_iso(&det, &lat), "{}", m.descriptor);
            }
        }
    }
    println!("{} distinct rows, worst equivariance residual {worst:e}", rows.len());
    assert!(rows.len() >= 14, "{rows:?}");
}

#[test]
fn corrupted_row_fails_equivariance() {
    let lat = lattice();
    let samples = equivariance_samples(&lat, 12);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let p = random_point(&lat, &mut rng);
    let e = EllipticBundle::split(LineBundle::degree_zero(random_lift(&lat, &mut rng)));
    let m = morphism_rep(&lat, &e, &p, &random_dir(&mut rng)).unwrap();
    assert!(check_equivariance(&m, &lat, &samples) < EQUIV_TOL);
    let ev = m.evaluator();
    let bumped = MorphismRep::new(
        m.source,
        m.target,
        m.point,
        "corrupted",
        Arc::new(move |z| {
            let mut a = ev(z);
            a[(0, 1)] *= C::new(1.0 + 1e-3, 0.0);
            a
        }),
    );
    assert!(check_equivariance(&bumped, &lat, &samples) > 1e-6);
    let wrong_source = MorphismRep::new(m.source.twist(&LineBundle::degree_zero(C::new(0.1, 0.0))), m.target, m.point, "mislabelled", m.evaluator());
    assert!(check_equivariance(&wrong_source, &lat, &samples) > 1e-6);
}

fn semistable_trivial_det(lat: &Lattice, rng: &mut ChaCha8Rng, kind: usize) -> EllipticBundle {
    let zs = lat.torsion_lifts();
    match kind % 4 {
        0 => EllipticBundle::split(LineBundle::degree_zero(random_lift(lat, rng))),
        1 => {
            let z = zs[rng.gen_range(0..4)];
            EllipticBundle::Decomposable(LineBundle::degree_zero(z), LineBundle::degree_zero(shifted(lat, -z, rng)))
        }
        2 => EllipticBundle::F2Twist(LineBundle::degree_zero(zs[rng.gen_range(0..4)])),
        _ => {
            let s = random_lift(lat, rng);
            EllipticBundle::Decomposable(LineBundle::degree_zero(s), LineBundle::degree_zero(shifted(lat, -s, rng)))
        }
    }
}

fn same_outcome(lat: &Lattice, x: &DoubleHecke, y: &DoubleHecke) -> bool {
    x.first_stable == y.first_stable
        && match (x.result, y.result) {
            (None, None) => true,
            (Some(a), Some(b)) => mss_coordinate(lat, &a).unwrap().distance(&mss_coordinate(lat, &b).unwrap()) < 1e-7,
            _ => false,
        }
}

#[test]
fn double_table_agrees_with_chained_modifications() {
    let lat = lattice();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut counts = [0usize; 3];
    for k in 0..400 {
        let e = semistable_trivial_det(&lat, &mut rng, k);
        let p1 = random_point(&lat, &mut rng);
        let p2 = random_point(&lat, &mut rng);
        let pick = |rng: &mut ChaCha8Rng| match rng.gen_range(0..6) {
            0 => ProjPoint::one_zero(),
            1 => ProjPoint::zero_one(),
            _ => random_dir(rng),
        };
        let a = pick(&mut rng);
        let mut b = pick(&mut rng);
        if rng.gen_range(0..5) == 0 {
            b = a;
        }
        let route_b = double_hecke(&lat, &e, &p1, &p2, &a, &b).unwrap();
        let route_a = double_hecke_table(&lat, &e, &p1, &p2, &a, &b).unwrap();
        assert!(same_outcome(&lat, &route_a, &route_b), "{e}, a = {a}, b = {b}: {route_a:?} vs {route_b:?}");
        counts[match (route_b.first_stable, route_b.result) {
            (true, _) => 0,
            (false, Some(_)) => 1,
            (false, None) => 2,
        }] += 1;
    }
    println!("stable/semistable/unstable: {counts:?}");
    assert!(counts.iter().all(|&c| c > 0));
}

#[test]
fn torsion_coincidences_in_the_split_table() {
    // 2p = 2p_1 forces the result to be F_2 (x) L_j or L_j + L_j.
    let lat = lattice();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let zs = lat.torsion_lifts();
    for j in 0..4 {
        let p1 = random_point(&lat, &mut rng);
        let p2 = random_point(&lat, &mut rng);
        let e = lat.halve_sum(&p1, &p2).lift();
        let s = p1.lift() + zs[j] - e;
        let base = EllipticBundle::split(LineBundle::degree_zero(s));
        for b in [random_dir(&mut rng), ProjPoint::one_zero()] {
            for route in [double_hecke, double_hecke_table] {
                let out = route(&lat, &base, &p1, &p2, &ProjPoint::zero_one(), &b).unwrap();
                let r = out.result.unwrap();
                assert!(mss_coordinate(&lat, &r).unwrap().distance(&lat.branch_points()[j]) < 1e-7, "{r}");
            }
        }
    }
}

#[test]
fn one_step_unstable_locus_is_the_embedded_curve() {
    // n = 1: the first modification is unstable exactly when (h_0, h_1)
    // lies on the image of p -> (pi(p - e), pi(p - p_1)).
    let lat = lattice();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut unstable = 0;
    for k in 0..60 {
        let q = random_point(&lat, &mut rng);
        let p1 = random_point(&lat, &mut rng);
        let line = random_dir(&mut rng);
        let base = semistable_trivial_det(&lat, &mut rng, [0, 3, 2][k % 3]);
        let direction = match k % 4 {
            0 => ProjPoint::one_zero(),
            1 => ProjPoint::zero_one(),
            _ => random_dir(&mut rng),
        };
        let seq = EllipticSequence { base, q, line, steps: vec![EllipticStep { point: p1, direction }] };
        let first = realize(&lat, &seq).unwrap().bundles[1];
        let on_curve = first_step_unstable(&lat, &seq).unwrap();
        assert_eq!(on_curve, !first.is_semistable(), "{base} along {direction}: E_1 = {first}");
        if on_curve {
            unstable += 1;
        }
        assert!(membership_hp(&lat, &seq).unwrap());
    }
    assert!(unstable >= 20);
}

#[test]
fn determinant_vanishes_only_at_the_hecke_point() {
    let lat = lattice();
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..2 {
        let p = random_point(&lat, &mut rng);
        for e in sample_bundles(&lat, &p, &mut rng) {
            for a in sample_directions(&lat, &mut rng).into_iter().step_by(2) {
                let m = morphism_rep(&lat, &e, &p, &a).unwrap();
                let (count, dist) = det_zero_localization(&m, &lat, 16);
                assert_eq!(count, 1, "{}", m.descriptor);
                assert!(dist < 1e-6, "{}: zero {dist:e} from p", m.descriptor);
            }
        }
    }
}

#[test]
fn embedding_identities() {
    let lat = lattice();
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let q = random_point(&lat, &mut rng);
    let p1 = random_point(&lat, &mut rng);
    let p2 = random_point(&lat, &mut rng);
    let e1 = lat.halve_sum(&q, &p1).lift();
    for _ in 0..100 {
        let p = random_lift(&lat, &mut rng);
        let f = f_embedding(&lat, p, &q, &p1, &p2);
        // pi_1(p) = pi_1(2e - p), and pi_2(p) = pi_1(p + e - p_1).
        assert!(f[0].distance(&f_embedding(&lat, 2.0 * e1 - p, &q, &p1, &p2)[0]) < 1e-9);
        assert!(f[1].distance(&f_embedding(&lat, p + e1 - p1.lift(), &q, &p1, &p2)[0]) < 1e-9);
        let g = f_embedding_one(&lat, p, &q, &p1);
        assert!(g[0].distance(&f[0]) < 1e-12 && g[1].distance(&f[1]) < 1e-12);
    }
    let mut worst = f64::INFINITY;
    for _ in 0..1000 {
        let (x, y) = (random_lift(&lat, &mut rng), random_lift(&lat, &mut rng));
        if lat.torus_distance(x, y) < 1e-3 {
            continue;
        }
        let (fx, fy) = (f_embedding(&lat, x, &q, &p1, &p2), f_embedding(&lat, y, &q, &p1, &p2));
        worst = worst.min(fx.iter().zip(&fy).map(|(a, b)| a.distance(b)).fold(0.0, f64::max));
    }
    assert!(worst > 0.0, "f identifies two sampled points");
}

#[test]
fn split_class_ignores_root_choice() {
    let lat = lattice();
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    for _ in 0..50 {
        let d = random_dir(&mut rng);
        let (w, w2) = lat.invert_cover(&d).unwrap();
        let x = EllipticBundle::split(LineBundle::degree_zero(w.lift()));
        let y = EllipticBundle::split(LineBundle::degree_zero(w2.lift()));
        assert!(x.is_iso(&y, &lat));
        assert!(mss_coordinate(&lat, &x).unwrap().distance(&d) < 1e-9);
    }
    let l = LineBundle::degree_zero(random_lift(&lat, &mut rng));
    let swapped = EllipticBundle::Decomposable(l.inverse(), l);
    assert!(mss_coordinate(&lat, &EllipticBundle::split(l)).unwrap().distance(&mss_coordinate(&lat, &swapped).unwrap()) < 1e-12);
    let li = LineBundle::degree_zero(lat.torsion_lifts()[1]);
    let f2 = mss_coordinate(&lat, &EllipticBundle::F2Twist(li)).unwrap();
    assert!(f2.distance(&mss_coordinate(&lat, &EllipticBundle::Decomposable(li, li)).unwrap()) < 1e-12);
    assert!(mss_coordinate(&lat, &EllipticBundle::trivial()).unwrap().distance(&lat.branch_points()[0]) < 1e-12);
}

#[test]
fn good_directions_give_stable_modifications() {
    let lat = lattice();
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let zs = lat.torsion_lifts();
    for _ in 0..30 {
        let p = random_point(&lat, &mut rng);
        let l = LineBundle::degree_zero(random_lift(&lat, &mut rng));
        let li = LineBundle::degree_zero(zs[rng.gen_range(0..4)]);
        let cases = [
            (EllipticBundle::split(l), vec![ProjPoint::one_zero(), ProjPoint::zero_one()]),
            (EllipticBundle::F2Twist(li), vec![ProjPoint::one_zero()]),
            (EllipticBundle::Decomposable(li, li), vec![]),
        ];
        for (e, bad) in cases {
            let mut dirs = sample_directions(&lat, &mut rng);
            dirs.push(random_dir(&mut rng));
            for a in dirs {
                let is_bad = matches!(e, EllipticBundle::Decomposable(x, y) if x.is_iso(&y, &lat))
                    || bad.iter().any(|b| b.approx_eq(&a));
                let out = single_hecke(&lat, &e, &p, &a).unwrap();
                assert_eq!(out.is_stable(), !is_bad, "{e} along {a}: {out}");
            }
        }
    }
}

#[test]
fn coordinates_invert() {
    let lat = lattice();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for n in 0..=4 {
        for _ in 0..20 {
            let q = random_point(&lat, &mut rng);
            let points: Vec<CurvePoint> = (0..n).map(|_| random_point(&lat, &mut rng)).collect();
            let target: Vec<ProjPoint> = (0..=n).map(|_| random_dir(&mut rng)).collect();
            let line = random_dir(&mut rng);
            let seq = sequence_for_coordinates(&lat, q, line, &points, &target).unwrap();
            let h = h_total(&lat, &seq).unwrap();
            for (x, y) in h.iter().zip(&target) {
                assert!(x.distance(y) < 1e-7, "{x} vs {y}");
            }
        }
    }
}

#[test]
fn two_step_membership_matches_terminal_length() {
    let lat = lattice();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut on_curve = 0;
    for k in 0..200 {
        let q = random_point(&lat, &mut rng);
        let p1 = random_point(&lat, &mut rng);
        let p2 = random_point(&lat, &mut rng);
        let line = random_dir(&mut rng);
        let seq = if k % 2 == 0 {
            // Land on the curve: h = f(p) for a random p.
            let p = random_lift(&lat, &mut rng);
            let f = f_embedding(&lat, p, &q, &p1, &p2);
            sequence_for_coordinates(&lat, q, line, &[p1, p2], &f).unwrap()
        } else {
            let target: Vec<ProjPoint> = (0..3).map(|_| random_dir(&mut rng)).collect();
            sequence_for_coordinates(&lat, q, line, &[p1, p2], &target).unwrap()
        };
        let by_curve = membership_hp(&lat, &seq).unwrap();
        let direct = membership_hp_direct(&lat, &seq).unwrap();
        if !by_curve {
            on_curve += 1;
        }
        assert_eq!(by_curve, direct, "k = {k}: {}", realize(&lat, &seq).unwrap().terminal());
    }
    assert!(on_curve >= 100);
}
