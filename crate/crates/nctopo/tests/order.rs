use nctopo::fixtures::{b2, ch2, ch3, m3, nc4, nc4_candidates, spaces};
use nctopo::order::{
    commutative_shadow, eval_expr, eval_str, modular_failure, shadow_meet, validate_skew, Elem, Expr, OrderError,
    Side, SkewTopology, Status, Violation,
};
use nctopo::random::{random_lattice, random_skew};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn e(t: &SkewTopology, l: &str) -> Elem {
    t.elem(l).unwrap()
}

/// Axiom (v) by brute force: every idempotent `x` is recovered from every
/// cover of `1`, with meets on either side.
fn axiom_v_oracle(t: &SkewTopology) -> Option<(Elem, Vec<Elem>)> {
    let n = t.len();
    for mask in 1u32..(1 << n) {
        let cover: Vec<Elem> = (0..n).filter(|i| mask & (1 << i) != 0).map(Elem).collect();
        if t.join_all(cover.iter().copied()) != t.top() {
            continue;
        }
        for x in t.idempotents() {
            let left = t.join_all(cover.iter().map(|&c| t.meet(x, c)));
            let right = t.join_all(cover.iter().map(|&c| t.meet(c, x)));
            if left != x || right != x {
                return Some((x, cover));
            }
        }
    }
    None
}

#[test]
fn chains_and_boolean_pass_every_axiom() {
    for t in [ch2(), ch3(), b2()] {
        let r = validate_skew(&t, true);
        assert!(r.is_noncommutative_topology(), "{t}");
        assert!(r.vee_complete_as_sup.holds());
        assert!(axiom_v_oracle(&t).is_none());
    }
}

#[test]
fn m3_fails_axiom_v_on_c_over_a_join_b() {
    let t = m3();
    let r = validate_skew(&t, true);
    assert!(r.is_skew());
    let Status::Fails { witness } = &r.v else { panic!("axiom (v) should fail on M3") };
    assert!(witness.recheck(&t));
    match witness {
        Violation::Cover { x, cover, side } => {
            assert_eq!(*x, e(&t, "c"));
            assert_eq!(cover, &vec![e(&t, "a"), e(&t, "b")]);
            assert_eq!(*side, Side::Left);
        }
        other => panic!("unexpected witness {other:?}"),
    }
    assert!(axiom_v_oracle(&t).is_some());
    assert!(!r.passes());
    assert!(validate_skew(&t, false).passes());
}

#[test]
fn nc4_has_a_single_non_idempotent() {
    let t = nc4();
    assert!(validate_skew(&t, false).is_skew());
    assert_eq!(t.labels(), ["0", "a", "b", "1"]);
    assert_eq!(t.meet(e(&t, "b"), e(&t, "b")), e(&t, "a"));
    assert_eq!(t.idempotents(), vec![e(&t, "0"), e(&t, "a"), e(&t, "1")]);
    assert!(!nc4_candidates().is_empty());
    for c in nc4_candidates() {
        assert!(validate_skew(&c, false).is_skew());
        assert!(c.idempotents().len() < c.len());
    }
}

#[test]
fn idempotents_of_lattices_are_everything() {
    assert_eq!(ch3().idempotents().len(), 3);
    assert_eq!(m3().idempotents().len(), 5);
}

#[test]
fn shadows_of_lattices_are_themselves() {
    for t in [ch3(), m3(), b2()] {
        let s = commutative_shadow(&t).unwrap();
        assert_eq!(s.carrier, t.elems().collect::<Vec<_>>());
        for a in t.elems() {
            for b in t.elems() {
                assert_eq!(s.shadow_meet(a, b), Some(t.meet(a, b)));
            }
        }
        assert!(s.modular.holds());
    }
}

#[test]
fn nc4_shadow_is_the_idempotent_chain() {
    let t = nc4();
    let s = commutative_shadow(&t).unwrap();
    assert_eq!(s.lattice.labels(), ["0", "a", "1"]);
    // ∨ over idempotents below σ ∧ τ, evaluated by hand on the table
    for a in s.carrier.iter().copied() {
        for b in s.carrier.iter().copied() {
            let below: Vec<Elem> =
                t.idempotents().into_iter().filter(|&g| t.leq(g, t.meet(a, b))).collect();
            assert_eq!(s.shadow_meet(a, b), Some(t.join_all(below)));
        }
    }
}

#[test]
fn join_must_commute_for_a_shadow() {
    let t = ch3();
    let mut join = t.join_table();
    join[1][0] = 2;
    let bad = SkewTopology::new(t.labels().to_vec(), t.leq_matrix(), t.meet_table(), join).unwrap();
    assert!(matches!(commutative_shadow(&bad), Err(OrderError::JoinNotCommutative(..))));
}

#[test]
fn expression_examples() {
    assert_eq!(eval_str(&ch3(), "(a∧1)∨0").unwrap(), e(&ch3(), "a"));
    let t = m3();
    assert_eq!(eval_str(&t, "(a∨b)∧c").unwrap(), e(&t, "c"));
    let n = nc4();
    let v = eval_str(&n, "b & b").unwrap();
    assert_ne!(v, e(&n, "b"));
    assert!(matches!(eval_str(&t, "a ∧ z"), Err(OrderError::UnknownLabel(_))));
    assert!(matches!(Expr::parse("   "), Err(OrderError::EmptyExpression)));
    // ∧ binds tighter than ∨
    assert_eq!(Expr::parse("a ∨ b ∧ c").unwrap(), Expr::parse("a ∨ (b ∧ c)").unwrap());
}

#[test]
fn malformed_inputs_are_rejected() {
    let labels: Vec<String> = ["0", "1"].iter().map(|s| s.to_string()).collect();
    let leq = vec![vec![true, true], vec![false, true]];
    assert!(matches!(
        SkewTopology::new(labels.clone(), leq.clone(), vec![vec![0, 0]], vec![vec![0, 1], vec![1, 1]]),
        Err(OrderError::MalformedTable(_))
    ));
    let flat = vec![vec![true, false], vec![false, true]];
    assert!(matches!(
        SkewTopology::new(labels, flat, vec![vec![0, 0], vec![0, 1]], vec![vec![0, 1], vec![1, 1]]),
        Err(OrderError::NoBottomTop)
    ));
}

#[test]
fn fixtures_have_unique_names() {
    let names: Vec<&str> = spaces().iter().map(|(n, _)| *n).collect();
    assert_eq!(names, ["CH2", "CH3", "B2", "M3", "NC4"]);
}

fn random_expr(rng: &mut ChaCha8Rng, t: &SkewTopology, depth: usize) -> Expr {
    use rand::Rng;
    if depth == 0 || rng.gen_bool(0.3) {
        let i = rng.gen_range(0..t.len());
        return Expr::Atom(t.labels()[i].clone());
    }
    let a = random_expr(rng, t, depth - 1);
    let b = random_expr(rng, t, depth - 1);
    if rng.gen_bool(0.5) {
        Expr::meet(a, b)
    } else {
        Expr::join(a, b)
    }
}

/// Flattens a chain of meets into its operands, left to right.
fn meet_operands(e: &Expr, out: &mut Vec<Expr>) {
    match e {
        Expr::Meet(a, b) => {
            meet_operands(a, out);
            meet_operands(b, out);
        }
        other => out.push(other.clone()),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn meets_below_and_joins_above(seed in any::<u64>(), n in 2usize..=8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = random_skew(&mut rng, n, 40);
        for x in t.elems() {
            for y in t.elems() {
                prop_assert!(t.leq(t.meet(x, y), x) && t.leq(t.meet(x, y), y));
                prop_assert!(t.leq(x, t.join(x, y)) && t.leq(y, t.join(x, y)));
            }
        }
    }

    #[test]
    fn operations_are_monotone(seed in any::<u64>(), n in 2usize..=7) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = random_skew(&mut rng, n, 40);
        for x in t.elems() {
            for y in t.elems().filter(|&y| t.leq(x, y)) {
                for z in t.elems() {
                    prop_assert!(t.leq(t.meet(z, x), t.meet(z, y)));
                    prop_assert!(t.leq(t.meet(x, z), t.meet(y, z)));
                    prop_assert!(t.leq(t.join(z, x), t.join(z, y)));
                }
            }
        }
    }

    #[test]
    fn shadow_carrier_closed_and_modular(seed in any::<u64>(), n in 2usize..=8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = random_skew(&mut rng, n, 40);
        let s = commutative_shadow(&t).unwrap();
        prop_assert_eq!(&s.carrier, &t.idempotents());
        for &a in &s.carrier {
            for &b in &s.carrier {
                prop_assert!(s.carrier.contains(&t.join(a, b)));
                prop_assert_eq!(s.shadow_meet(a, b), s.shadow_meet(b, a));
                prop_assert_eq!(s.shadow_meet(a, b), Some(shadow_meet(&t, a, b)));
            }
            prop_assert_eq!(s.shadow_meet(a, a), Some(a));
        }
        prop_assert!(modular_failure(&s.lattice).is_none());
    }

    #[test]
    fn failing_witnesses_reproduce(seed in any::<u64>(), n in 3usize..=6) {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = random_lattice(&mut rng, n);
        let mut meet = t.meet_table();
        let (x, y) = (rng.gen_range(0..n), rng.gen_range(0..n));
        meet[x][y] = rng.gen_range(0..n);
        let Ok(u) = SkewTopology::new(t.labels().to_vec(), t.leq_matrix(), meet, t.join_table()) else {
            return Ok(());
        };
        let r = validate_skew(&u, true);
        for (_, s) in r.statuses() {
            if let Status::Fails { witness } = s {
                prop_assert!(witness.recheck(&u), "{}", witness.describe(&u));
            }
        }
        if r.is_skew() {
            prop_assert_eq!(r.v.holds(), axiom_v_oracle(&u).is_none());
        }
    }

    #[test]
    fn meet_chains_reassociate_freely(seed in any::<u64>(), n in 2usize..=7) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = random_skew(&mut rng, n, 40);
        let e = random_expr(&mut rng, &t, 4);
        let mut ops = Vec::new();
        meet_operands(&e, &mut ops);
        let values: Vec<Elem> = ops.iter().map(|o| eval_expr(&t, o).unwrap()).collect();
        let left = values.iter().copied().reduce(|a, b| t.meet(a, b)).unwrap();
        let right = values.iter().copied().rev().reduce(|a, b| t.meet(b, a)).unwrap();
        prop_assert_eq!(eval_expr(&t, &e).unwrap(), left);
        prop_assert_eq!(left, right);
    }
}
