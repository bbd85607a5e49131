use std::f64::consts::TAU;
use std::sync::OnceLock;

use proptest::prelude::*;

use orbitherm::demo;
use orbitherm::flow::{
    birkhoff_integral, closed_geodesic_from_word, dist_to_invariant_set, sample_invariant_set, InvariantSetSpec,
    Potential, PotentialSpec, SamplingKnobs,
};
use orbitherm::geometry::{bundle_dist, flip, geodesic_flow_step, hyp_dist, HPoint, Isometry, TangentVector};
use orbitherm::group::{SchottkyGroup, Word};
use orbitherm::report::{csv_bytes, Table};
use orbitherm::thermo::{flow_pressure, GibbsEnsemble, PeriodicOrbitTable};

fn point() -> impl Strategy<Value = HPoint> {
    (-4.0..4.0f64, -2.5..2.5f64).prop_map(|(x, ly)| HPoint::new(x, ly.exp()).unwrap())
}

fn vector() -> impl Strategy<Value = TangentVector> {
    (point(), 0.0..TAU).prop_map(|(p, a)| TangentVector::new(p, a).unwrap())
}

fn isometry() -> impl Strategy<Value = Isometry> {
    (-3.0..3.0f64, -1.5..1.5f64, 0.0..TAU, -3.0..3.0f64).prop_map(|(x, s, phi, x2)| {
        Isometry::translation(x)
            .compose(&Isometry::dilation(s))
            .compose(&Isometry::rotation_about_i(phi))
            .compose(&Isometry::translation(x2))
    })
}

fn angle_gap(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    d.min(TAU - d)
}

fn vector_gap(u: &TangentVector, v: &TangentVector) -> f64 {
    hyp_dist(u.base, v.base) + angle_gap(u.angle, v.angle)
}

/// Cyclically reduced words over two generators.
fn cyclic_word(max_len: usize) -> impl Strategy<Value = Word> {
    prop::collection::vec(prop::sample::select(vec![1, -1, 2, -2]), 1..=max_len)
        .prop_filter("cyclically reduced", |v| Word(v.clone()).is_cyclically_reduced())
        .prop_map(Word)
}

struct Fixture {
    group: SchottkyGroup,
    table: PeriodicOrbitTable,
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let group = demo::standard_group();
        let knobs = SamplingKnobs::default();
        let bump = Potential::new(&PotentialSpec::bump(InvariantSetSpec::closed_orbit(&[1])), &group, knobs).unwrap();
        let table = PeriodicOrbitTable::build(&group, 5, &[("bump".into(), bump)], &[], knobs).unwrap();
        Fixture { group, table }
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn distance_is_a_metric(z in point(), w in point(), u in point()) {
        let (zw, wz, wu, zu) = (hyp_dist(z, w), hyp_dist(w, z), hyp_dist(w, u), hyp_dist(z, u));
        prop_assert!(hyp_dist(z, z) == 0.0);
        prop_assert!(zw >= 0.0);
        prop_assert!((zw - wz).abs() <= 1e-12 * (1.0 + zw));
        prop_assert!(zu <= zw + wu + 1e-10);
    }

    #[test]
    fn isometries_preserve_distance(z in point(), w in point(), g in isometry()) {
        let d = hyp_dist(z, w);
        let dg = hyp_dist(g.apply(z).unwrap(), g.apply(w).unwrap());
        prop_assert!((d - dg).abs() <= 1e-9 * (1.0 + d), "{} vs {}", d, dg);
    }

    #[test]
    fn inverse_undoes_isometry(z in point(), g in isometry()) {
        let back = g.inverse().apply(g.apply(z).unwrap()).unwrap();
        prop_assert!(hyp_dist(z, back) <= 1e-9);
        prop_assert!(g.compose(&g.inverse()).approx_eq(&Isometry::IDENTITY, 1e-9));
    }

    #[test]
    fn flow_is_a_one_parameter_group(v in vector(), s in -3.0..3.0f64, t in -3.0..3.0f64) {
        let a = geodesic_flow_step(&geodesic_flow_step(&v, s), t);
        let b = geodesic_flow_step(&v, s + t);
        prop_assert!(vector_gap(&a, &b) <= 1e-10);
    }

    #[test]
    fn flow_has_unit_speed(v in vector(), t in -5.0..5.0f64) {
        let moved = geodesic_flow_step(&v, t);
        prop_assert!((hyp_dist(v.base, moved.base) - t.abs()).abs() <= 1e-10);
    }

    #[test]
    fn flip_reverses_the_flow(v in vector(), t in -3.0..3.0f64) {
        prop_assert!(vector_gap(&flip(&flip(&v)), &v) <= 1e-12);
        let a = flip(&geodesic_flow_step(&v, t));
        let b = geodesic_flow_step(&flip(&v), -t);
        prop_assert!(vector_gap(&a, &b) <= 1e-10);
    }

    #[test]
    fn bundle_distance_is_invariant(u in vector(), v in vector(), g in isometry()) {
        let d = bundle_dist(&u, &v, 21).unwrap();
        let dg = bundle_dist(&g.apply_tangent(&u).unwrap(), &g.apply_tangent(&v).unwrap(), 21).unwrap();
        prop_assert!((d - dg).abs() <= 1e-9 * (1.0 + d));
        prop_assert!((d - bundle_dist(&v, &u, 21).unwrap()).abs() <= 1e-12 * (1.0 + d));
    }

    #[test]
    fn finer_grid_never_lowers_bundle_distance(u in vector(), v in vector()) {
        prop_assert!(bundle_dist(&u, &v, 41).unwrap() >= bundle_dist(&u, &v, 11).unwrap() - 1e-12);
    }

    #[test]
    fn word_inverse_cancels(w in cyclic_word(6)) {
        prop_assert!(w.concat(&w.inverse()).is_empty());
        let m = fixture().group.matrix_of(&w);
        let scale = [m.a, m.b, m.c, m.d].iter().fold(1.0f64, |s, x| s.max(x.abs()));
        let g = m.compose(&fixture().group.matrix_of(&w.inverse()));
        prop_assert!(g.approx_eq(&Isometry::IDENTITY, 1e-14 * scale * scale));
    }

    #[test]
    fn canonical_rotation_is_rotation_invariant(w in cyclic_word(6), k in 0usize..6) {
        prop_assert_eq!(w.rotate(k).canonical_rotation(), w.canonical_rotation());
        prop_assert_eq!(w.len() % w.primitive_period(), 0);
    }

    #[test]
    fn orbit_average_ignores_rotation(w in cyclic_word(4), k in 1usize..4) {
        let f = fixture();
        let knobs = SamplingKnobs::default();
        let phi = Potential::new(&PotentialSpec::bump(InvariantSetSpec::closed_orbit(&[1])), &f.group, knobs).unwrap();
        let a = birkhoff_integral(&phi, &closed_geodesic_from_word(&w, &f.group, knobs.step).unwrap()).unwrap();
        let b = birkhoff_integral(&phi, &closed_geodesic_from_word(&w.rotate(k), &f.group, knobs.step).unwrap()).unwrap();
        prop_assert!((a.average - b.average).abs() <= 1e-3, "{} vs {}", a.average, b.average);
    }

    #[test]
    fn distance_to_flipped_set_matches(v in vector()) {
        let f = fixture();
        let spec = InvariantSetSpec::closed_orbit(&[1, 2]);
        let set = sample_invariant_set(&spec, &f.group, 0.1).unwrap();
        let flipped = sample_invariant_set(&spec.clone().flipped(), &f.group, 0.1).unwrap();
        let d = dist_to_invariant_set(&v, &set, &f.group, 1).unwrap();
        let df = dist_to_invariant_set(&flip(&v), &flipped, &f.group, 1).unwrap();
        prop_assert!((d - df).abs() <= 1e-9, "{} vs {}", d, df);
    }

    #[test]
    fn gibbs_weights_normalize(t in 0.0..40.0f64) {
        let f = fixture();
        let p = flow_pressure(&f.table, "bump", t, (4, 5)).unwrap();
        let sum: f64 = GibbsEnsemble::new(&f.table, "bump", &p).unwrap().orbit_probabilities().iter().sum();
        prop_assert!((sum - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn pressure_is_convex_and_increasing(a in 0.0..20.0f64, b in 0.0..20.0f64) {
        let f = fixture();
        let p = |t: f64| flow_pressure(&f.table, "bump", t, (4, 5)).unwrap().c_star;
        let mid = p(0.5 * (a + b));
        prop_assert!(mid <= 0.5 * (p(a) + p(b)) + 1e-9);
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(p(hi) >= p(lo) - 1e-12);
    }

    #[test]
    fn csv_round_trips(cells in prop::collection::vec(("[a-z,\" \n]{0,6}", -1e6..1e6f64), 1..8)) {
        let mut t = Table::new(&["label", "value"]);
        for (s, x) in &cells {
            t.push(vec![s.clone().into(), (*x).into()]);
        }
        let bytes = csv_bytes(&t).unwrap();
        let mut rd = csv::Reader::from_reader(bytes.as_slice());
        let back: Vec<(String, f64)> = rd.deserialize().collect::<Result<_, _>>().unwrap();
        prop_assert_eq!(back, cells);
    }
}
