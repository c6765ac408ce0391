use geoflock::kernel::{check_condition_a, evaluate};
use geoflock::lattice::{phi_sum, tail_bound};
use geoflock::{Kernel, ManifoldKind, ManifoldSpec};
use proptest::prelude::*;

fn cheap_kernel() -> impl Strategy<Value = Kernel> {
    prop_oneof![
        (0.5f64..3.0).prop_map(|l| Kernel::exponential(l).unwrap()),
        (0.2f64..2.0, 1u32..5).prop_map(|(a, p)| Kernel::bump(a, p).unwrap()),
    ]
}

fn lattice_manifold() -> impl Strategy<Value = ManifoldSpec> {
    prop_oneof![
        (1usize..=3).prop_map(|d| ManifoldSpec::torus(d).unwrap()),
        Just(ManifoldSpec::mobius()),
        Just(ManifoldSpec::klein()),
    ]
}

fn reduced_point(m: ManifoldSpec) -> impl Strategy<Value = Vec<f64>> {
    let mobius = m.kind() == ManifoldKind::MobiusStrip;
    prop::collection::vec(0.0f64..1.0, m.dimension()).prop_map(move |mut p| {
        if mobius {
            p[1] = 2.0 * p[1] - 1.0;
        }
        p
    })
}

fn pair_setup() -> impl Strategy<Value = (ManifoldSpec, Kernel, Vec<f64>, Vec<f64>)> {
    (lattice_manifold(), cheap_kernel())
        .prop_flat_map(|(m, k)| (Just(m), Just(k), reduced_point(m), reduced_point(m)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn orbit_sum_is_symmetric((m, k, x, y) in pair_setup()) {
        let eps = 1e-10;
        let xy = phi_sum(&m, &k, &x, &y, eps).unwrap();
        let yx = phi_sum(&m, &k, &y, &x, eps).unwrap();
        prop_assert!((xy.value - yx.value).abs() <= 2.0 * eps);
        prop_assert!(xy.error_bound <= eps);
    }

    #[test]
    fn tighter_tolerance_refines((m, k, x, y) in pair_setup()) {
        let loose = phi_sum(&m, &k, &x, &y, 1e-4).unwrap();
        let tight = phi_sum(&m, &k, &x, &y, 1e-11).unwrap();
        prop_assert!(tight.error_bound <= loose.error_bound);
        prop_assert!(tight.value >= loose.value);
        prop_assert!((tight.value - loose.value) <= loose.error_bound + tight.error_bound);
    }

    #[test]
    fn torus_sum_dominates_the_corner_weight(
        d in 1usize..=3,
        rate in 0.5f64..3.0,
        x in prop::collection::vec(0.0f64..1.0, 3),
        y in prop::collection::vec(0.0f64..1.0, 3),
    ) {
        let m = ManifoldSpec::torus(d).unwrap();
        let k = Kernel::exponential(rate).unwrap();
        let phi = phi_sum(&m, &k, &x[..d], &y[..d], 1e-10).unwrap();
        prop_assert!(phi.value >= k.value((d as f64).sqrt() / 2.0) - 1e-12);
    }

    #[test]
    fn tail_bound_decreases_with_radius(
        m in lattice_manifold(),
        k in cheap_kernel(),
        offset in 0.0f64..2.0,
        r in 0.0f64..30.0,
        step in 0.0f64..5.0,
    ) {
        let near = tail_bound(&m, &k, offset, r).unwrap();
        let far = tail_bound(&m, &k, offset, r + step).unwrap();
        prop_assert!(far <= near);
        prop_assert!(far >= 0.0);
    }

    #[test]
    fn kernels_are_non_increasing(k in cheap_kernel(), a in 0.0f64..5.0, b in 0.0f64..5.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(evaluate(&k, hi).unwrap() <= evaluate(&k, lo).unwrap());
        prop_assert!(evaluate(&k, lo).unwrap() >= 0.0);
    }
}

/// Partial sums of `φ(|n|)` over `ℤ^d` on the box `[−w, w]^d`.
fn box_sum(k: &Kernel, d: usize, w: i64) -> f64 {
    match d {
        1 => (-w..=w).map(|n| k.value(n.abs() as f64)).sum(),
        2 => (-w..=w)
            .flat_map(|a| (-w..=w).map(move |b| (a, b)))
            .map(|(a, b)| k.value(((a * a + b * b) as f64).sqrt()))
            .sum(),
        _ => unreachable!(),
    }
}

/// The integral test agrees with how lattice partial sums grow: the
/// increment from doubling the box shrinks by `2^{d − 2α}`.
#[test]
fn integral_test_matches_partial_sums() {
    for d in 1..=2 {
        let half = d as f64 / 2.0;
        let exponents: Vec<f64> = (0..10).map(|i| 0.1 + 0.2 * i as f64).collect();
        for alpha in exponents {
            if (alpha - half).abs() < 0.25 {
                continue;
            }
            let k = Kernel::power_law(alpha).unwrap();
            let (summable, _) = check_condition_a(&k, d);
            let (w1, w2, w3) = if d == 1 {
                (1000, 2000, 4000)
            } else {
                (100, 200, 400)
            };
            let first = box_sum(&k, d, w2) - box_sum(&k, d, w1);
            let second = box_sum(&k, d, w3) - box_sum(&k, d, w2);
            let ratio = second / first;
            assert_eq!(
                summable,
                ratio < 0.9,
                "d = {d}, α = {alpha}, increment ratio {ratio}"
            );
        }
        for rate in [0.3, 0.7, 1.0, 2.0, 5.0] {
            let k = Kernel::exponential(rate).unwrap();
            assert!(check_condition_a(&k, d).0);
            let inner = box_sum(&k, d, 100);
            assert!(box_sum(&k, d, 200) - inner < 1e-8 * inner);
        }
        for support in [0.3, 1.0, 4.0] {
            let k = Kernel::bump(support, 2).unwrap();
            assert!(check_condition_a(&k, d).0);
            assert_eq!(box_sum(&k, d, 200) - box_sum(&k, d, 100), 0.0);
        }
    }
}

#[test]
fn power_law_rejected_at_rank_two_but_not_on_the_strip() {
    let k = Kernel::power_law(0.75).unwrap();
    assert!(phi_sum(&ManifoldSpec::klein(), &k, &[0.0, 0.0], &[0.5, 0.5], 1e-6).is_err());
    assert!(phi_sum(&ManifoldSpec::mobius(), &k, &[0.0, 0.0], &[0.5, 0.5], 1e-3).is_ok());
}
