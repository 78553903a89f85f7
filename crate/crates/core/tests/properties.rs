use cea_core::contact::{coadjoint, contact_bracket, reeb_derivative, ContactModel};
use cea_core::curvature::{curvature_arnold, curvature_closed_form};
use cea_core::fields::{
    integrate, l2_inner, random_band_limited, read_field, write_field, ScalarField,
};
use cea_core::report::split_seed;
use proptest::prelude::*;

fn models() -> Vec<ContactModel> {
    vec![
        ContactModel::circle(64).unwrap(),
        ContactModel::torus_k([12, 12, 12]).unwrap(),
        ContactModel::sphere3_hopf([10, 12, 12]).unwrap(),
    ]
}

fn field(m: &ContactModel, seed: u64) -> ScalarField {
    random_band_limited(seed, 2, m.grid()).unwrap()
}

fn close(a: &ScalarField, b: &ScalarField, tol: f64) -> bool {
    let scale = a.max_abs().max(b.max_abs()).max(1.0);
    a.sub(b).unwrap().max_abs() <= tol * scale
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn bracket_is_antisymmetric(seed in any::<u64>(), which in 0usize..3) {
        let m = &models()[which];
        let (f, g) = (field(m, seed), field(m, seed ^ 0x9e37));
        let fg = contact_bracket(m, &f, &g).unwrap();
        let gf = contact_bracket(m, &g, &f).unwrap();
        prop_assert!(close(&fg, &gf.scale(-1.0), 1e-11));
    }

    #[test]
    fn bracket_is_bilinear(seed in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0, which in 0usize..3) {
        let m = &models()[which];
        let (f, g, h) = (field(m, seed), field(m, seed.wrapping_add(1)), field(m, seed.wrapping_add(2)));
        let combo = f.scale(a).add(&g.scale(b)).unwrap();
        let lhs = contact_bracket(m, &combo, &h).unwrap();
        let rhs = contact_bracket(m, &f, &h).unwrap().scale(a)
            .add(&contact_bracket(m, &g, &h).unwrap().scale(b)).unwrap();
        prop_assert!(close(&lhs, &rhs, 1e-10));
    }

    #[test]
    fn constants_act_through_the_reeb_field(seed in any::<u64>(), c in -2.0f64..2.0, which in 0usize..3) {
        let m = &models()[which];
        let g = field(m, seed);
        let one = ScalarField::constant(m.grid(), c);
        let lhs = contact_bracket(m, &one, &g).unwrap();
        let rhs = reeb_derivative(m, &g).unwrap().scale(c);
        prop_assert!(close(&lhs, &rhs, 1e-10));
    }

    #[test]
    fn coadjoint_is_dual_to_the_bracket(seed in any::<u64>(), which in 0usize..3) {
        let m = &models()[which];
        let (f, g, h) = (field(m, seed), field(m, seed ^ 1), field(m, seed ^ 2));
        let lhs = l2_inner(&coadjoint(m, &f, &g).unwrap(), &h).unwrap();
        let rhs = l2_inner(&g, &contact_bracket(m, &f, &h).unwrap()).unwrap();
        prop_assert!((lhs + rhs).abs() <= 1e-10 * lhs.abs().max(rhs.abs()).max(1.0));
    }

    #[test]
    fn reeb_derivative_integrates_to_zero(seed in any::<u64>(), which in 0usize..3) {
        let m = &models()[which];
        let f = field(m, seed);
        let ef = reeb_derivative(m, &f).unwrap();
        prop_assert!(integrate(&ef).abs() <= 1e-11 * f.norm().max(1.0));
    }

    #[test]
    fn curvature_is_symmetric_and_scales_quartically(seed in any::<u64>(), s in 0.2f64..3.0, which in 0usize..2) {
        let m = &models()[which];
        let (f, g) = (field(m, seed), field(m, seed ^ 7));
        let c = curvature_closed_form(m, &f, &g).unwrap();
        let swapped = curvature_closed_form(m, &g, &f).unwrap();
        let scaled = curvature_arnold(m, &f.scale(s), &g.scale(s)).unwrap();
        prop_assert!((c - swapped).abs() <= 1e-10 * c.abs().max(1.0));
        prop_assert!((scaled - s.powi(4) * c).abs() <= 1e-8 * (s.powi(4) * c).abs().max(1.0));
        prop_assert!(c >= -1e-12 * f.norm().powi(2) * g.norm().powi(2));
    }

    #[test]
    fn split_seed_is_a_function_of_root_and_stream(root in any::<u64>(), a in 0u64..1000, b in 0u64..1000) {
        prop_assert_eq!(split_seed(root, a), split_seed(root, a));
        if a != b {
            prop_assert_ne!(split_seed(root, a), split_seed(root, b));
        }
    }
}

#[test]
fn field_files_round_trip_bit_exactly() {
    let dir = tempfile::tempdir().unwrap();
    for (k, m) in models().iter().enumerate() {
        let f = field(m, k as u64);
        let path = dir.path().join(format!("f{k}.ceaf"));
        write_field(&path, &f).unwrap();
        let back = read_field(&path, m.grid()).unwrap();
        assert_eq!(f.values(), back.values());
    }
}
