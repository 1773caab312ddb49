use nctopo::completion::PointKind;
use nctopo::dynamics::{
    accessible_strings, dnt_report, evaluate_predicate, is_accessible, join_string, meet_string, membership,
    moment_space, observed_truth,
    open_of, temporal_points, validate_system, AccessibleString, ClosedInterval, DynError, DynSystem, TemporalKind,
    TimeLine, PREDICATES,
};
use nctopo::fixtures::{ch3, dyn_collapse, dyn_const, homomorphisms, m3, systems};
use nctopo::order::{Elem, SkewTopology};
use nctopo::random::random_lattice;
use nctopo::space::PointSet;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn line(labels: &[&str]) -> TimeLine {
    TimeLine::new(labels.iter().map(|s| s.to_string()).collect()).unwrap()
}

fn labels_of(s: &SkewTopology, es: impl IntoIterator<Item = Elem>) -> Vec<String> {
    es.into_iter().map(|e| s.label(e).to_string()).collect()
}

/// Random lattices joined by random structure-preserving maps.
fn random_system(seed: u64) -> DynSystem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let len = rng.gen_range(1..=3);
    let n0 = rng.gen_range(2..=5);
    let mut spaces = vec![random_lattice(&mut rng, n0)];
    let mut given = Vec::new();
    for t in 1..len {
        let prev = spaces[t - 1].clone();
        let n1 = rng.gen_range(2..=5);
        let next = if rng.gen_bool(0.5) { prev.clone() } else { random_lattice(&mut rng, n1) };
        let maps = homomorphisms(&prev, &next);
        let map = maps.choose(&mut rng).cloned();
        match map {
            Some(m) => {
                given.push(((t - 1, t), m));
                spaces.push(next);
            }
            None => {
                given.push(((t - 1, t), prev.elems().collect()));
                spaces.push(prev);
            }
        }
    }
    let names: Vec<String> = (0..len).map(|i| format!("t{i}")).collect();
    DynSystem::new(TimeLine::new(names).unwrap(), spaces, given, PointKind::Minimal).unwrap()
}

#[test]
fn fixture_systems_validate() {
    for (name, sys) in systems() {
        let r = validate_system(&sys).unwrap();
        assert!(r.fibres_skew.holds && r.idempotents_preserved.holds, "{name}");
        assert!(r.idempotent_directed_preserved.holds && r.pattern_restriction.holds, "{name}");
    }
    let collapse = dyn_collapse();
    assert_eq!(labels_of(collapse.space(1), collapse.map(0, 1).iter().copied()), ["0", "m", "m", "1"]);
}

#[test]
fn broken_composition_is_reported() {
    let t = ch3();
    let id: Vec<Elem> = t.elems().collect();
    let collapse = vec![Elem(0), Elem(2), Elem(2)];
    let sys = DynSystem::new(
        line(&["t0", "t1", "t2"]),
        vec![t.clone(), t.clone(), t],
        vec![((0, 1), id.clone()), ((1, 2), id), ((0, 2), collapse)],
        PointKind::Minimal,
    )
    .unwrap();
    assert!(matches!(validate_system(&sys), Err(DynError::BrokenComposition(_))));
}

#[test]
fn non_preserving_map_is_reported() {
    let t = ch3();
    let swap = vec![Elem(2), Elem(1), Elem(0)];
    let sys = DynSystem::new(line(&["t0", "t1"]), vec![t.clone(), t], vec![((0, 1), swap)], PointKind::Minimal).unwrap();
    assert!(matches!(validate_system(&sys), Err(DynError::NonPreserving(_))));
}

#[test]
fn dnt_on_fixtures() {
    let c = dnt_report(&dyn_const());
    assert!(c.interpolation.holds && c.persistence.holds && c.unambiguity.holds);
    for case in &c.interpolation_cases {
        // identity maps: every later instant interpolates
        assert_eq!(case.witnesses, ((case.t + 1)..3).collect::<Vec<_>>());
        assert_eq!(case.endpoint_vacuous, case.t == 2);
    }
    let sys = dyn_collapse();
    let d = dnt_report(&sys);
    assert!(d.unambiguity.holds);
    assert_eq!(d.persistence_cases.len(), 1);
    let case = &d.persistence_cases[0];
    assert_eq!(labels_of(sys.space(0), case.chain), ["a", "b", "1"]);
    assert_eq!(case.unambiguity.members(sys.len()), vec![0]);
}

#[test]
fn single_instant_is_endpoint_vacuous() {
    let sys = DynSystem::new(line(&["t0"]), vec![m3()], vec![], PointKind::Minimal).unwrap();
    let r = dnt_report(&sys);
    assert!(r.interpolation.holds);
    assert!(r.endpoint_vacuous);
}

#[test]
fn observed_truth_examples() {
    for (name, sys) in systems() {
        for t0 in 0..sys.len() {
            let iv = observed_truth(&sys, "shadow-is-DVT", t0).unwrap().expect(name);
            assert!(iv.is_whole_line() && iv.contains(t0));
        }
    }
    let sys = dyn_collapse();
    let iv = observed_truth(&sys, "shadow-preserves-∧̲", 0).unwrap().unwrap();
    assert!(iv.is_whole_line());
    // NC4 is not a lattice, so the predicate is false at t0 itself
    assert_eq!(observed_truth(&sys, "fiber-is-lattice", 0).unwrap(), None);
    assert_eq!(observed_truth(&sys, "fiber-is-lattice", 1).unwrap().unwrap().members(2), vec![1]);
    assert!(matches!(observed_truth(&sys, "nonsense", 0), Err(DynError::UnknownPredicate(_))));
}

#[test]
fn temporal_points_of_the_constant_system() {
    let sys = dyn_const();
    let r = temporal_points(&sys, 1).unwrap();
    assert_eq!(labels_of(sys.space(1), r.elements()), ["a", "b", "c"]);
    assert!(r.temporally_pointed);
    assert_eq!(r.interval, ClosedInterval::new(1, 1));
    let ir = sys.with_point_kind(PointKind::Irreducible);
    assert!(matches!(temporal_points(&ir, 0), Err(DynError::NoSupportInterval(_))));
}

#[test]
fn temporal_points_of_the_collapse() {
    let sys = dyn_collapse();
    let r = temporal_points(&sys, 0).unwrap();
    let s = sys.space(0);
    let b = s.elem("b").unwrap();
    let future_b = r.points.iter().find(|p| p.element == b).unwrap();
    assert_eq!(future_b.kind, TemporalKind::Future);
    assert_eq!(future_b.witnesses, vec![(1, sys.space(1).elem("m").unwrap())]);
    assert_eq!(r.interval, ClosedInterval::new(0, 1));
    assert!(!r.temporally_pointed);
}

#[test]
fn accessible_string_examples() {
    let sys = dyn_const();
    let iv = ClosedInterval::new(1, 1);
    let strings = accessible_strings(&sys, 1, iv);
    // zero string plus one constant string per nonzero element
    assert_eq!(strings.len(), 5);
    let m = moment_space(&sys, 1).unwrap();
    let a = sys.space(1).elem("a").unwrap();
    let x = AccessibleString { anchor: 1, offset: 1, components: vec![a] };
    assert_eq!(open_of(&sys, &m.points, &x), PointSet::from([m.position((1, a)).unwrap()]));
    let one = AccessibleString { anchor: 1, offset: 1, components: vec![sys.space(1).top()] };
    assert!(is_accessible(&sys, &one, iv));
    assert_eq!(open_of(&sys, &m.points, &one).len(), m.points.len());
    assert!(open_of(&sys, &m.points, &strings[0]).is_empty());
    assert!(membership(&sys, (1, a), &strings[0]).is_none());
}

#[test]
fn moment_space_of_the_constant_system_is_discrete() {
    let sys = dyn_const();
    let m = moment_space(&sys, 1).unwrap();
    assert_eq!(m.space.points, ["a@t1", "b@t1", "c@t1"]);
    assert_eq!(m.space.opens.len(), 8);
    assert!(m.closure.intersection_by_construction.holds);
}

#[test]
fn moment_space_of_the_collapse() {
    let sys = dyn_collapse();
    let m = moment_space(&sys, 0).unwrap();
    assert_eq!(m.space.points, ["a@t0", "m@t1"]);
    assert_eq!(m.interval, ClosedInterval::new(0, 1));
    assert!(m.closure.intersection_by_construction.holds);
    assert!(m.closure.union_by_construction.holds);
    assert!(m.closure.family_closed.holds);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn opens_are_monotone_and_bracket_their_pairs(seed in any::<u64>()) {
        let sys = random_system(seed);
        prop_assert!(validate_system(&sys).is_ok());
        for t in 0..sys.len() {
            let Ok(m) = moment_space(&sys, t) else { continue };
            prop_assert!(m.space.is_topology());
            let mut every_cap_realized = true;
            for (i, x) in m.strings.iter().enumerate() {
                prop_assert!(is_accessible(&sys, x, m.interval));
                for (j, y) in m.strings.iter().enumerate() {
                    let (ux, uy) = (&m.string_opens[i], &m.string_opens[j]);
                    if x.leq(y, &sys, m.interval) {
                        prop_assert!(ux.is_subset(uy));
                    }
                    // the meet string always lands inside the intersection and the
                    // join string always covers the union; equality can fail
                    let w = meet_string(&sys, t, m.interval, x, y);
                    let v = join_string(&sys, t, m.interval, x, y);
                    let uw = open_of(&sys, &m.points, &w);
                    let uv = open_of(&sys, &m.points, &v);
                    prop_assert!(uw.is_subset(ux) && uw.is_subset(uy));
                    prop_assert!(ux.is_subset(&uv) && uy.is_subset(&uv));
                    prop_assert!(is_accessible(&sys, &v, m.interval));
                    if i < j && (!is_accessible(&sys, &w, m.interval) || uw != ux.intersection(uy).copied().collect()) {
                        every_cap_realized = false;
                    }
                }
            }
            prop_assert_eq!(m.closure.intersection_by_construction.holds, every_cap_realized);
        }
    }

    #[test]
    fn orientation_check_matches_the_intervals(seed in any::<u64>()) {
        let sys = random_system(seed);
        let intervals: Vec<Option<ClosedInterval>> =
            (0..sys.len()).map(|t| temporal_points(&sys, t).ok().map(|r| r.interval)).collect();
        let mut oriented = true;
        for u in 0..sys.len() {
            for v in u..sys.len() {
                if let (Some(a), Some(b)) = (intervals[u], intervals[v]) {
                    oriented &= a.lo <= b.lo && a.hi <= b.hi;
                }
            }
        }
        for t in 0..sys.len() {
            if let Ok(r) = temporal_points(&sys, t) {
                prop_assert_eq!(r.continuum.orientation.holds, oriented);
                prop_assert!(r.interval.contains(t));
            }
        }
    }

    #[test]
    fn non_idempotent_temporal_points_are_future(seed in any::<u64>()) {
        let sys = random_system(seed);
        for t in 0..sys.len() {
            let Ok(r) = temporal_points(&sys, t) else { continue };
            for p in &r.points {
                if p.kind == TemporalKind::Future {
                    for &(u, y) in &p.witnesses {
                        prop_assert!(sys.space(u).is_idempotent(y));
                    }
                }
                if !sys.space(t).is_idempotent(p.element) {
                    prop_assert_eq!(p.kind, TemporalKind::Future);
                }
            }
        }
    }

    #[test]
    fn observed_truths_hold_pointwise(seed in any::<u64>()) {
        let sys = random_system(seed);
        for t0 in 0..sys.len() {
            for p in PREDICATES {
                if let Some(iv) = observed_truth(&sys, p, t0).unwrap() {
                    prop_assert!(iv.contains(t0));
                    for t in iv.members(sys.len()) {
                        prop_assert!(evaluate_predicate(&sys, p, t0, t));
                    }
                } else {
                    prop_assert!(!evaluate_predicate(&sys, p, t0, t0));
                }
            }
        }
    }
}
