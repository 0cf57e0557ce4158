use proptest::prelude::*;
use qpspec::cli::parse_config;
use qpspec::cocycle::product;
use qpspec::lattice::TableValues;
use qpspec::spectral::{green_entry_cramer, sturm_count};
use qpspec::{OperatorSpec, PerturbationSpec, PotentialSpec};

fn operator() -> impl Strategy<Value = OperatorSpec> {
    (0.0..4.0f64, 0.01..0.99f64, 0.0..1.0f64, 0.0..2.0f64, 0.05..2.0f64).prop_map(|(l, a, t, c, s)| {
        OperatorSpec::new(
            PotentialSpec::almost_mathieu(l, a, t),
            PerturbationSpec::exponential(c, s).unwrap(),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cocycle_law(op in operator(), e in -10.0..10.0f64, n in -200..200i64, j in 1..1000i64, k in 1..1000i64) {
        let whole = product(&op, e, n, j + k);
        let split = product(&op, e, n + j, k).mul(&product(&op, e, n, j));
        let r = whole.log_scale().max(split.log_scale());
        let diff = (whole.scaled_to(r) - split.scaled_to(r)).max_abs();
        prop_assert!(diff <= 1e-9 * whole.scaled_to(r).max_abs());
    }

    #[test]
    fn inverse_law_and_unimodularity(op in operator(), e in -10.0..10.0f64, n in -200..200i64, k in 1..1000i64) {
        let inv = product(&op, e, n, -k);
        let fwd = product(&op, e, n - k, k);
        prop_assert!(inv.inverse_law_defect(&fwd) <= 1e-10);
        prop_assert!(fwd.unimodularity_defect() <= 1e-10);
        prop_assert!(fwd.log_norm() >= -1e-12);
    }

    #[test]
    fn green_is_symmetric(op in operator(), e in -10.0..10.0f64, n1 in -50..50i64, len in 1..150i64, x in 0.0..1.0f64, y in 0.0..1.0f64) {
        let b = op.build_box(n1, n1 + len - 1).unwrap();
        let (a, c) = (n1 + (x * len as f64) as i64, n1 + (y * len as f64) as i64);
        if let (Ok(g), Ok(h)) = (green_entry_cramer(&b, e, a, c), green_entry_cramer(&b, e, c, a)) {
            prop_assert!((g.value - h.value).abs() <= 1e-8 * g.value.abs());
        }
    }

    #[test]
    fn sturm_count_is_monotone(op in operator(), e in -10.0..10.0f64, de in 0.0..2.0f64, len in 1..300i64) {
        let b = op.build_box(0, len - 1).unwrap();
        let (lo, hi) = (sturm_count(&b, e), sturm_count(&b, e + de));
        prop_assert!(lo <= hi && hi <= len as usize);
    }

    #[test]
    fn table_configs_round_trip(start in -50..50i64, values in prop::collection::vec(-5.0..5.0f64, 0..20), lambda in 0.0..5.0f64, seed in 0..=i64::MAX as u64) {
        let text = format!(
            "[potential]\nkind = \"almost_mathieu\"\nlambda = {lambda:?}\nalpha = \"sqrt2m1\"\n\n\
             [perturbation]\nkind = \"table\"\nstart = {start}\nvalues = {values:?}\n\n[numerics]\nseed = {seed}\n"
        );
        let r = parse_config(&text).unwrap();
        prop_assert_eq!(&r.operator.perturbation, &PerturbationSpec::Table(TableValues { start, values }));
        let again = parse_config(&r.config.to_toml().unwrap()).unwrap();
        prop_assert_eq!(again.config, r.config);
        prop_assert_eq!(again.operator, r.operator);
    }
}
