use nctopo::dynamics::{moment_space, AccessibleString};
use nctopo::fixtures::{
    b2, ch3, dyn_const, filtrations, gap_family, m3, nc4, sf_b2, sf_ch, sf_ch_separated, sf_m3, sf_nc4,
};
use nctopo::order::{Elem, SkewTopology};
use nctopo::random::{random_lattice, random_skew};
use nctopo::spectral::{
    abelian_sublattices, dynamical_spectral, family_in_abelian, gamma_points, observable, observable_completion,
    prop_4_1, restrict_filtration, validate_filtration, Filtration, GammaChain, GammaValue, SpectralError,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn labels(t: &SkewTopology, es: &[Elem]) -> Vec<String> {
    es.iter().map(|&e| t.label(e).to_string()).collect()
}

/// `σ` straight from its definition: the first label whose level lies above.
fn sigma_oracle(f: &Filtration) -> Vec<GammaValue> {
    let b = &f.base;
    b.elems()
        .map(|x| {
            let mut best = GammaValue::Infinite;
            for (i, &l) in f.levels.iter().enumerate().rev() {
                if b.leq(x, l) {
                    best = GammaValue::Finite(f.gamma.labels()[i]);
                }
            }
            best
        })
        .collect()
}

fn fin(v: &[i64]) -> Vec<GammaValue> {
    v.iter().map(|&g| GammaValue::Finite(g)).collect()
}

#[test]
fn gamma_chains_must_increase() {
    assert_eq!(GammaChain::new(vec![]), Err(SpectralError::EmptyChain));
    assert_eq!(GammaChain::new(vec![1, 1]), Err(SpectralError::UnsortedChain));
    assert!(matches!(Filtration::from_labels(ch3(), vec![1, 2], &["a"]), Err(SpectralError::LevelCount { .. })));
    assert!(matches!(Filtration::from_labels(ch3(), vec![1], &["z"]), Err(SpectralError::UnknownLevel(_))));
}

#[test]
fn filtration_flags() {
    let r = validate_filtration(&sf_ch()).unwrap();
    assert!(!r.separated && r.idempotent && r.right_bounded && !r.left_bounded);
    assert_eq!(r.meet_of_levels, "a");
    assert!(!r.is_spectral_family());
    let r = validate_filtration(&sf_ch_separated()).unwrap();
    assert!(r.separated && r.left_bounded && r.is_spectral_family());
    assert!(validate_filtration(&sf_b2()).unwrap().separated);
    let r = validate_filtration(&sf_nc4()).unwrap();
    assert!(!r.idempotent);
    assert_eq!(validate_filtration(&gap_family()).unwrap_err(), SpectralError::JoinNotTop("a".into()));
    let bad = Filtration::from_labels(ch3(), vec![1, 2], &["1", "a"]).unwrap();
    assert!(matches!(validate_filtration(&bad), Err(SpectralError::NotMonotone { lo: 1, hi: 2, .. })));
}

#[test]
fn meet_law_on_fixtures() {
    for (name, f) in filtrations() {
        let r = prop_4_1(&f);
        assert!(r.pairs.holds, "{name}: {:?}", r.pairs);
        let idempotent = validate_filtration(&f).unwrap().idempotent;
        assert_eq!(r.diagonal.holds, idempotent, "{name}");
        assert_eq!(r.shadow.is_some(), idempotent, "{name}");
        if let Some(s) = r.shadow {
            assert!(s.holds, "{name}");
        }
    }
    let r = prop_4_1(&sf_nc4());
    assert_eq!(r.diagonal.witness.as_deref(), Some("λ_1 is not idempotent"));
}

#[test]
fn restriction_examples() {
    let f = sf_ch();
    let a = f.base.elem("a").unwrap();
    let r = restrict_filtration(&f, a).unwrap();
    assert_eq!(r.levels, ["a", "a"]);
    assert!(r.closed && r.filtration && r.case_a && r.case_b);
    assert_eq!(r.corollary, Some(true));

    let f = sf_b2();
    for mu in f.base.elems() {
        let r = restrict_filtration(&f, mu).unwrap();
        assert!(r.filtration && r.separated && r.case_a && r.case_b, "μ = {}", r.mu);
        assert_eq!(r.corollary, Some(true));
    }
    let b = sf_b2().base;
    let r = restrict_filtration(&sf_b2(), b.elem("b").unwrap()).unwrap();
    assert_eq!(r.levels, ["0", "0", "b"]);

    let g = gap_family();
    assert_eq!(restrict_filtration(&g, g.base.top()).unwrap_err(), SpectralError::NotRightBounded);
}

#[test]
fn observable_examples() {
    let o = observable(&sf_ch());
    assert_eq!(o.values, fin(&[1, 1, 2]));
    assert!(o.domain_is_everything && o.meet_inequality.holds && o.join_inequality.holds);

    let f = sf_m3();
    let o = observable(&f);
    let at = |l: &str| o.values[f.base.elem(l).unwrap().0];
    assert_eq!(at("a"), GammaValue::Finite(1));
    assert_eq!(at("b"), GammaValue::Finite(2));
    assert_eq!(at("c"), GammaValue::Finite(2));

    let g = gap_family();
    let o = observable(&g);
    assert_eq!(o.values, vec![GammaValue::Finite(1), GammaValue::Finite(1), GammaValue::Infinite]);
    assert!(!o.domain_is_everything);
    assert_eq!(o.domain, vec![Elem(0), Elem(1)]);
}

#[test]
fn completed_observables_extend() {
    for (name, f) in filtrations() {
        let c = observable_completion(&f).unwrap();
        assert!(c.extends_observable, "{name}");
        assert!(c.below_classes, "{name}");
        assert!(c.is_filtration, "{name}");
        // finite filters are principal, so nothing drops strictly
        assert!(!c.strict_somewhere, "{name}");
    }
}

#[test]
fn gamma_point_examples() {
    let p = gamma_points(&sf_ch()).unwrap();
    assert!(p.proper && p.minimal_point && p.irreducible_point);
    assert_eq!(p.class, "[a]");
    let p = gamma_points(&sf_ch_separated()).unwrap();
    assert!(!p.proper && !p.minimal_point);
    let p = gamma_points(&sf_m3()).unwrap();
    assert!(p.minimal_point && !p.irreducible_point && !p.strong_point);
}

#[test]
fn abelian_sublattice_examples() {
    for t in [ch3(), b2(), m3()] {
        assert_eq!(abelian_sublattices(&t, 12).unwrap(), vec![t.elems().collect::<Vec<_>>()]);
    }
    let n = nc4();
    let ab = abelian_sublattices(&n, 12).unwrap();
    assert_eq!(ab.iter().map(|s| labels(&n, s)).collect::<Vec<_>>(), vec![vec!["0", "a", "1"]]);
    assert!(!family_in_abelian(&sf_nc4(), &ab));
    assert!(family_in_abelian(&sf_ch(), &abelian_sublattices(&ch3(), 12).unwrap()));
    assert_eq!(abelian_sublattices(&n, 3), Err(SpectralError::CapExceeded(4, 3)));
}

#[test]
fn dynamical_family_on_the_constant_system() {
    let sys = dyn_const();
    let m = moment_space(&sys, 1).unwrap();
    let s = sys.space(1);
    let string = |l: &str| AccessibleString { anchor: 1, offset: 1, components: vec![s.elem(l).unwrap()] };
    let gamma = GammaChain::new(vec![0, 1, 2]).unwrap();
    let levels = vec![string("0"), string("a"), string("1")];
    let d = dynamical_spectral(&sys, 1, &gamma, &levels).unwrap();
    assert_eq!(d.instants.len(), m.interval.members().count());
    let here = &d.instants[0];
    assert_eq!(here.levels, ["0", "a", "1"]);
    assert!(here.validation.as_ref().unwrap().separated);
    assert!(here.point_family_spectral.holds);
    assert_eq!(here.point_sets.iter().map(|p| p.len()).collect::<Vec<_>>(), [0, 1, 3]);

    let backwards = vec![string("1"), string("a"), string("0")];
    assert!(matches!(dynamical_spectral(&sys, 1, &gamma, &backwards), Err(SpectralError::NotMonotone { .. })));
    assert!(matches!(
        dynamical_spectral(&sys, 1, &gamma, &levels[..2]),
        Err(SpectralError::LevelCount { levels: 2, labels: 3 })
    ));
}

/// A random monotone chain of levels ending at the top.
fn random_filtration(seed: u64, skew: bool) -> Filtration {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(2..=6);
    let t = if skew { random_skew(&mut rng, n, 30) } else { random_lattice(&mut rng, n) };
    let mut levels = vec![t.top()];
    for _ in 0..rng.gen_range(0..3) {
        let below: Vec<Elem> = t.elems().filter(|&x| t.leq(x, levels[0])).collect();
        levels.insert(0, below[rng.gen_range(0..below.len())]);
    }
    let gamma: Vec<i64> = (0..levels.len() as i64).map(|g| 3 * g - 2).collect();
    Filtration::new(t, GammaChain::new(gamma).unwrap(), levels).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn observables_match_their_definition(seed in any::<u64>(), skew in any::<bool>()) {
        let f = random_filtration(seed, skew);
        prop_assert!(validate_filtration(&f).is_ok());
        let o = observable(&f);
        prop_assert_eq!(&o.values, &sigma_oracle(&f));
        prop_assert!(o.domain_is_everything);
        if !skew {
            prop_assert!(o.meet_inequality.holds && o.join_inequality.holds);
        }
    }

    #[test]
    fn lattice_filtrations_obey_the_meet_law(seed in any::<u64>()) {
        let f = random_filtration(seed, false);
        let r = prop_4_1(&f);
        prop_assert!(r.pairs.holds && r.diagonal.holds);
        prop_assert!(r.shadow.is_some_and(|s| s.holds));
        for mu in f.base.elems() {
            let r = restrict_filtration(&f, mu).unwrap();
            prop_assert_eq!(r.corollary, Some(true));
        }
    }

    #[test]
    fn idempotent_families_meet_by_minimum(seed in any::<u64>()) {
        let f = random_filtration(seed, true);
        let r = prop_4_1(&f);
        // idempotent levels in a monotone chain meet to the lower one
        if f.levels.iter().all(|&l| f.base.is_idempotent(l)) {
            prop_assert!(r.diagonal.holds);
            prop_assert!(r.shadow.is_some());
        }
    }
}
