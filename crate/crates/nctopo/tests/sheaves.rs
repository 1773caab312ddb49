use nctopo::completion::PointKind;
use nctopo::fixtures::{
    b2, ch3, chain, dyn_collapse_presheaf, dyn_const_presheaf, dyn_presheaves, ltf_failing_presheaf, presheaves,
    psh_const, psh_proj, psh_unseparated,
};
use nctopo::random::random_tree_diagram;
use nctopo::sheaves::{
    check_against_maximum, check_ltf, colimit, is_separated, moment_presheaf, sheafify, stalk, validate_presheaf,
    verify_theorem_3_4, Diagram, Presheaf, SheafError,
};
use nctopo::int_matrix;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn fixture_presheaves_validate() {
    for (name, p) in presheaves() {
        validate_presheaf(&p).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(p.dim(p.base.bottom()), 0, "{name}");
    }
    let p = psh_proj();
    let t = &p.base;
    assert_eq!(p.restriction(t.top(), t.elem("a").unwrap()), &int_matrix(1, 2, &[1, 0]));
}

#[test]
fn composed_restrictions_must_agree() {
    let t = chain(&["0", "a", "b", "1"]);
    let (a, b, one) = (t.elem("a").unwrap(), t.elem("b").unwrap(), t.top());
    let given = vec![
        ((one, b), int_matrix(1, 1, &[1])),
        ((b, a), int_matrix(1, 1, &[1])),
        ((one, a), int_matrix(1, 1, &[2])),
    ];
    let p = Presheaf::new(t, vec![0, 1, 1, 1], given).unwrap();
    match validate_presheaf(&p) {
        Err(SheafError::NonCommutingSquare { description, defect }) => {
            assert_eq!(description, "1 -> b -> a");
            assert_eq!(defect, int_matrix(1, 1, &[-1]));
        }
        other => panic!("expected a non-commuting square, got {other:?}"),
    }
}

#[test]
fn malformed_presheaves_are_rejected() {
    let t = ch3();
    let (a, one) = (t.elem("a").unwrap(), t.top());
    assert!(matches!(
        Presheaf::new(t.clone(), vec![0, 1, 2], vec![((one, a), int_matrix(1, 1, &[1]))]),
        Err(SheafError::Shape { .. })
    ));
    assert!(matches!(Presheaf::new(t.clone(), vec![0, 1], vec![]), Err(SheafError::DimensionCount { want: 3, got: 2 })));
    assert!(matches!(
        Presheaf::new(t, vec![0, 1, 1], vec![((a, one), int_matrix(1, 1, &[1]))]),
        Err(SheafError::MissingRestriction(_))
    ));
}

#[test]
fn stalk_examples() {
    for p in [psh_const(), psh_proj()] {
        let a = p.base.elem("a").unwrap();
        let s = stalk(&p, a, PointKind::Minimal).unwrap();
        assert_eq!(s.dim, 1);
        assert!(s.check.holds());
        assert_eq!(s.index, vec![a, p.base.top()]);
    }
    let z = Presheaf::zero(&b2());
    for l in ["a", "b"] {
        let s = stalk(&z, z.base.elem(l).unwrap(), PointKind::Minimal).unwrap();
        assert_eq!(s.dim, 0);
    }
    let p = psh_proj();
    assert!(matches!(stalk(&p, p.base.top(), PointKind::Minimal), Err(SheafError::NotAPoint(_))));
}

#[test]
fn colimit_of_a_projection_chain() {
    // ℚ³ → ℚ² → ℚ, each dropping the last coordinate
    let d = Diagram {
        dims: vec![3, 2, 1],
        arrows: vec![(0, 1, int_matrix(2, 3, &[1, 0, 0, 0, 1, 0])), (1, 2, int_matrix(1, 2, &[1, 0]))],
    };
    let c = colimit(&d).unwrap();
    assert_eq!(c.dim, 1);
    let check = check_against_maximum(&d, &c).unwrap();
    assert_eq!(check.maximum, 2);
    assert!(check.holds());
    assert_eq!(c.cocone[0], int_matrix(1, 3, &[1, 0, 0]));
}

#[test]
fn inconsistent_diagrams_are_rejected() {
    let d = Diagram {
        dims: vec![1, 1, 1],
        arrows: vec![
            (0, 1, int_matrix(1, 1, &[1])),
            (1, 2, int_matrix(1, 1, &[1])),
            (0, 2, int_matrix(1, 1, &[3])),
        ],
    };
    assert!(matches!(colimit(&d), Err(SheafError::InconsistentDiagram(_))));
}

#[test]
fn separatedness_examples() {
    assert!(is_separated(&psh_const()).holds);
    assert!(is_separated(&psh_proj()).holds);
    let c = is_separated(&psh_unseparated());
    assert!(!c.holds);
    assert_eq!(c.witness.as_deref(), Some("1 = a ∨ b"));
}

#[test]
fn moment_presheaf_of_the_constant_system() {
    let dp = dyn_const_presheaf();
    let mp = moment_presheaf(&dp, 1).unwrap();
    // three singletons and the whole space, each carrying a line
    assert_eq!(mp.opens.len(), 4);
    assert!(mp.opens.iter().enumerate().all(|(u, _)| mp.dim(u) == 1));
    assert!(mp.representatives_disagree.is_empty());
}

#[test]
fn representatives_agree_on_every_fixture() {
    for (name, dp) in dyn_presheaves() {
        for t in 0..dp.system.len() {
            let mp = moment_presheaf(&dp, t).unwrap();
            assert!(mp.representatives_disagree.is_empty(), "{name} at {t}");
            assert_eq!(mp.representative.len(), mp.opens.len());
        }
    }
}

#[test]
fn sheafification_of_the_discrete_moment_space() {
    let dp = dyn_const_presheaf();
    let mp = moment_presheaf(&dp, 1).unwrap();
    let sh = sheafify(&dp, &mp).unwrap();
    assert!(sh.identity_axiom.holds && sh.gluing_axiom.holds);
    assert_eq!(sh.stalk_dims, vec![1, 1, 1]);
    // on a discrete space a sheaf of lines is a product over points
    for (w, &d) in sh.opens.iter().zip(&sh.dims) {
        assert_eq!(d, w.len());
    }
    assert!(sh.canonical_injective());
}

#[test]
fn sheafification_axioms_on_every_fixture() {
    for (name, dp) in dyn_presheaves() {
        for t in 0..dp.system.len() {
            let mp = moment_presheaf(&dp, t).unwrap();
            let sh = sheafify(&dp, &mp).unwrap();
            assert!(sh.identity_axiom.holds, "{name} at {t}: {:?}", sh.identity_axiom);
            assert!(sh.gluing_axiom.holds, "{name} at {t}: {:?}", sh.gluing_axiom);
        }
    }
}

#[test]
fn flabbiness_examples() {
    for dp in [dyn_const_presheaf(), dyn_collapse_presheaf()] {
        for t in 0..dp.system.len() {
            let r = check_ltf(&dp, t).unwrap();
            assert!(r.holds, "{:?}", r.witness);
            assert!(r.cases > 0);
        }
    }
    let r = check_ltf(&ltf_failing_presheaf(), 0).unwrap();
    assert!(!r.holds);
    assert!(r.witness.unwrap().contains("m@t1"));
}

#[test]
fn stalk_identification_examples() {
    for dp in [dyn_const_presheaf(), dyn_collapse_presheaf()] {
        for t in 0..dp.system.len() {
            let s = verify_theorem_3_4(&dp, t).unwrap();
            assert!(s.all_invertible());
            for p in &s.points {
                assert_eq!(p.moment_stalk_dim, p.fibre_stalk_dim);
                assert!(p.colimits_agree, "{}", p.label);
            }
        }
    }
    assert!(matches!(verify_theorem_3_4(&ltf_failing_presheaf(), 0), Err(SheafError::PreconditionFailed(_))));
}

/// Colimit dimension by hand: on a tree rooted at the last node every vector
/// is identified with its image at the root.
fn root_dim(d: &Diagram) -> usize {
    *d.dims.last().unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn tree_colimits_are_the_root(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = random_tree_diagram(&mut rng, 6, 3);
        let c = colimit(&d).unwrap();
        prop_assert_eq!(c.dim, root_dim(&d));
        let check = check_against_maximum(&d, &c).unwrap();
        prop_assert_eq!(check.maximum, d.dims.len() - 1);
        prop_assert!(check.holds());
        for (i, iota) in c.cocone.iter().enumerate() {
            prop_assert_eq!((iota.rows(), iota.cols()), (c.dim, d.dims[i]));
        }
    }

    #[test]
    fn constant_presheaves_have_constant_stalks(d in 0usize..=3) {
        for t in [ch3(), b2()] {
            let p = Presheaf::constant(&t, d);
            prop_assert!(validate_presheaf(&p).is_ok());
            prop_assert!(is_separated(&p).holds);
            for x in t.elems().filter(|&x| x != t.bottom()) {
                if let Ok(s) = stalk(&p, x, PointKind::Minimal) {
                    prop_assert_eq!(s.dim, d);
                }
            }
        }
    }
}
