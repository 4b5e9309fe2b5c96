use proptest::prelude::*;

use ngvas::grammar::{Grammar, Production, Sym};
use ngvas::iteration::{copies, threshold};
use ngvas::vas::{
    dc_contains, effect, fire, fire_concrete, hurdle, ideal_decompose, satisfies_mark_eq, GMarking, Nw, Vector,
};
use ngvas::widetree::{build_wide_tree, log_factor, order_of};

fn run(d: usize) -> impl Strategy<Value = Vec<Vector>> {
    prop::collection::vec(prop::collection::vec(-2i64..=2, d), 0..6)
}

fn gmarking(d: usize) -> impl Strategy<Value = GMarking> {
    prop::collection::vec(prop_oneof![3 => (0i64..4).prop_map(Nw::Fin), 1 => Just(Nw::Omega)], d)
        .prop_map(GMarking)
}

fn ss_ab() -> Grammar {
    Grammar::new(
        vec!["S".into()],
        vec!["a".into(), "b".into()],
        0,
        vec![
            Production { lhs: 0, rhs: vec![Sym::N(0), Sym::N(0)] },
            Production { lhs: 0, rhs: vec![Sym::T(0)] },
            Production { lhs: 0, rhs: vec![Sym::T(1)] },
        ],
    )
    .unwrap()
}

proptest! {
    #[test]
    fn enabled_exactly_above_hurdle(m in prop::collection::vec(0i64..5, 2), r in run(2)) {
        let h = hurdle(&r, 2);
        let above = m.iter().zip(&h).all(|(a, b)| a >= b);
        prop_assert_eq!(fire_concrete(&m, &r).is_some(), above);
    }

    #[test]
    fn firing_satisfies_mark_eq(m in prop::collection::vec(0i64..5, 2), r in run(2)) {
        if let Some(m2) = fire_concrete(&m, &r) {
            prop_assert!(satisfies_mark_eq(&m, &r, &m2));
            let e = effect(&r, 2);
            prop_assert_eq!(m2, vec![m[0] + e[0], m[1] + e[1]]);
        }
    }

    #[test]
    fn firing_is_monotone(m in gmarking(2), extra in prop::collection::vec(0i64..3, 2), r in run(2)) {
        let bigger = GMarking(m.0.iter().zip(&extra).map(|(x, k)| match x {
            Nw::Fin(a) => Nw::Fin(a + k),
            Nw::Omega => Nw::Omega,
        }).collect());
        if let Some(a) = fire(&m, &r).unwrap() {
            let b = fire(&bigger, &r).unwrap();
            prop_assert!(b.is_some());
            prop_assert!(a.below(&b.unwrap()));
        }
    }

    #[test]
    fn ideal_decomposition_keeps_the_closure(s in prop::collection::vec(gmarking(2), 0..6)) {
        let dc = ideal_decompose(s.iter());
        for m in &s {
            prop_assert!(dc_contains(&dc, m));
        }
        for a in &dc {
            prop_assert!(s.contains(a));
            for b in &dc {
                prop_assert!(a == b || !a.below(b));
            }
        }
    }

    #[test]
    fn wide_tree_bounds_hold(k in 1usize..40, extra in 0i64..3) {
        let g = ss_ab();
        let v = vec![2 + extra, 1 + extra, 1];
        let t = build_wide_tree(&g, &v, k).unwrap();
        let norm: i64 = v.iter().sum();
        prop_assert!(t.tree.height() <= log_factor(k) * norm as usize);
        prop_assert!(order_of(&t) <= log_factor(k));
        let want: Vec<i64> = v.iter().map(|x| k as i64 * x).collect();
        prop_assert_eq!(t.tree.prod_counts(3), want);
    }

    #[test]
    fn copies_decompose_k(c in 1usize..6, k in 0usize..200) {
        if let Some((j1, j2)) = copies(k, c, 1) {
            prop_assert_eq!(j1 * c + j2 * (c + 1), k - 1);
            prop_assert!(j2 < c);
        } else {
            prop_assert!(k < c * c - c + 1);
        }
    }

    #[test]
    fn threshold_grows_with_spread(c in 1usize..4, gap in 0i64..4, spread in 0i64..4) {
        prop_assert!(threshold(c, 1, gap, spread) <= threshold(c, 1, gap, spread + 1));
        prop_assert!(threshold(c, 1, gap, spread) <= threshold(c, 1, gap + 1, spread));
    }
}
