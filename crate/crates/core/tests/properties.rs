//! Randomised invariants of the transfer sums and the finite-field transform.

use proptest::prelude::*;
use tortf::chargroup::{CycNumber, Dual, TorusKind};
use tortf::charform::Gamma;
use tortf::depth::torus_depth;
use tortf::finitelie::FiniteTorus;
use tortf::lseries::LocalField;
use tortf::sample::{good_element, rng};
use tortf::transfer::{brute_batch, brute_l, closed_l_prime, pair_l, Query, ThetaModel};

fn sl2() -> LocalField {
    LocalField::new(3, 1, 2, 14).unwrap()
}

fn cubic() -> LocalField {
    LocalField::new(5, 1, 3, 14).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, ..ProptestConfig::default() })]

    #[test]
    fn brute_sum_is_galois_symmetric(seed in 0u64..10_000, dg in 0i64..3, dt in 0i64..3) {
        prop_assume!(dg != dt);
        let lf = sl2();
        let mut r = rng(seed);
        let g = good_element(&mut r, &lf, TorusKind::NormOne, dg).unwrap();
        let t = good_element(&mut r, &lf, TorusKind::NormOne, dt).unwrap();
        let dual = Dual::build(&lf, TorusKind::NormOne, 4).unwrap();
        let qs = vec![
            Query::torus(g.clone(), t.clone()),
            Query::torus(lf.sigma(&g, 1), t.clone()),
            Query::torus(g.clone(), lf.sigma(&t, 1)),
        ];
        let res = brute_batch(&dual, &qs, ThetaModel::Table).unwrap();
        prop_assert_eq!(&res[0].value.smooth, &res[1].value.smooth);
        prop_assert_eq!(&res[0].value.smooth, &res[2].value.smooth);
    }

    #[test]
    fn partial_sums_settle_past_the_larger_depth(seed in 0u64..10_000, dg in 0i64..3, dt in 0i64..3) {
        prop_assume!(dg != dt);
        let lf = sl2();
        let mut r = rng(seed);
        let g = good_element(&mut r, &lf, TorusKind::NormOne, dg).unwrap();
        let t = good_element(&mut r, &lf, TorusKind::NormOne, dt).unwrap();
        let b = brute_l(&lf, &Gamma::Torus(g.clone()), &t, 5).unwrap();
        let m0 = dg.max(dt) as usize;
        for s in &b.report.partial_sums[m0..] {
            prop_assert_eq!(s, &b.value.smooth);
        }
        let c = closed_l_prime(&lf, &Gamma::Torus(g), &t).unwrap();
        prop_assert_eq!(b.value.smooth.to_rational(), c.value.smooth.to_rational());
    }

    #[test]
    fn ball_pairing_is_additive(seed in 0u64..10_000, dg in 1i64..3, m in 0u32..3) {
        let lf = sl2();
        let mut r = rng(seed);
        let g = good_element(&mut r, &lf, TorusKind::NormOne, dg).unwrap();
        let u = good_element(&mut r, &lf, TorusKind::NormOne, 0).unwrap();
        let dual = Dual::build(&lf, TorusKind::NormOne, m + 2).unwrap();
        let grp = dual.group();
        let whole = pair_l(&dual, &g, &u, m).unwrap();
        let mut parts = CycNumber::zero(grp.exponent());
        let mut pieces = 0;
        for x in grp.all_elements() {
            if grp.level_of(&x) >= m + 1 {
                let v = grp.element(&x);
                let b = pair_l(&dual, &g, &u.mul(&v).truncate(lf.prec()), m + 1).unwrap();
                parts = parts.add(&b.pairing);
                pieces += 1;
            }
        }
        prop_assert_eq!(pieces, 3);
        prop_assert_eq!(parts, whole.pairing);
    }

    #[test]
    fn finite_transform_sums_to_orbit_size(k in 0u64..80) {
        let t = FiniteTorus::new(3, 1, 4).unwrap();
        let g = t.tower().gen_pow(t.tower().layer_of_degree(4).unwrap(), 1 + 2 * k as i64);
        prop_assume!(t.is_regular(g).unwrap());
        let total = t
            .elements()
            .into_iter()
            .map(|x| t.finite_l(g, x).unwrap())
            .fold(CycNumber::zero(t.order()), |a, b| a.add(&b));
        prop_assert_eq!(total.to_i64(), Some(4));
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 6, ..ProptestConfig::default() })]

    /// For odd `ℓ` a nearly conjugate pair gives the same value as a generic pair.
    #[test]
    fn near_conjugacy_cancels_for_odd_degree(seed in 0u64..10_000, d in 1i64..3, extra in 1i64..3) {
        let lf = cubic();
        let mut r = rng(seed);
        let g = good_element(&mut r, &lf, TorusKind::NormOne, d).unwrap();
        let u = good_element(&mut r, &lf, TorusKind::NormOne, d + extra).unwrap();
        let t_near = g.mul(&u).truncate(lf.prec());
        prop_assume!(torus_depth(&lf, &t_near).unwrap() == Some(d));
        let t_far = good_element(&mut r, &lf, TorusKind::NormOne, d).unwrap();
        let dual = Dual::build(&lf, TorusKind::NormOne, (d + extra) as u32 + 1).unwrap();
        let res = brute_batch(
            &dual,
            &[Query::torus(g.clone(), t_near), Query::torus(g, t_far)],
            ThetaModel::Table,
        )
        .unwrap();
        prop_assert_eq!(&res[0].value.smooth, &res[1].value.smooth);
    }
}
