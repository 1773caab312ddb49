use nctopo::hilbert::{
    cayley, check_subadditivity, line_values, reconstruct_filtration, reconstruction_matches, spectral_family_of,
    standard_lines, sublattice_closure, HilbertError, OperatorSpec, RationalSubspace,
};
use nctopo::order::{modular_failure, validate_skew};
use nctopo::random::random_operator;
use nctopo::spectral::validate_filtration;
use nctopo::{int_matrix, q, qi, QMatrix, Rational};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn v(xs: &[i64]) -> Vec<Rational> {
    xs.iter().map(|&x| qi(x)).collect()
}

fn line(xs: &[i64]) -> RationalSubspace {
    RationalSubspace::line(v(xs))
}

fn span(d: usize, vs: &[&[i64]]) -> RationalSubspace {
    RationalSubspace::span(d, &vs.iter().map(|x| v(x)).collect::<Vec<_>>()).unwrap()
}

fn diag(values: &[i64]) -> OperatorSpec {
    OperatorSpec::diagonal(&values.iter().map(|&x| qi(x)).collect::<Vec<_>>())
}

/// `u ∈ F(γ)` iff the factors `(A − λ)` with `λ ≤ γ` together kill `u`;
/// valid because symmetric matrices are diagonalisable.
fn place_oracle(op: &OperatorSpec, u: &[Rational]) -> Option<Rational> {
    let col = QMatrix::from_fn(u.len(), 1, |r, _| u[r].clone());
    for (i, g) in op.eigenvalues.iter().enumerate() {
        let mut w = col.clone();
        for l in &op.eigenvalues[..=i] {
            let shifted = QMatrix::from_fn(op.dim(), op.dim(), |r, c| {
                let x = op.matrix.get(r, c).clone();
                if r == c { x - l } else { x }
            });
            w = shifted.mul(&w).unwrap();
        }
        if w.is_zero() {
            return Some(g.clone());
        }
    }
    None
}

#[test]
fn meets_and_joins_of_planes() {
    let xy = span(3, &[&[1, 0, 0], &[0, 1, 0]]);
    let yz = span(3, &[&[0, 1, 0], &[0, 0, 1]]);
    assert_eq!(xy.meet(&yz).unwrap(), line(&[0, 1, 0]));
    assert_eq!(xy.join(&yz).unwrap(), RationalSubspace::whole(3));
    assert_eq!(line(&[1, 1]).meet(&line(&[1, -1])).unwrap(), RationalSubspace::zero(2));
    assert_eq!(line(&[2, 4]), line(&[1, 2]));
    assert_eq!(line(&[1, 2]).to_string(), "<1,2>");
    assert_eq!(xy.meet(&line(&[1, 0])), Err(HilbertError::DimensionMismatch(3, 2)));
}

#[test]
fn three_lines_generate_the_diamond() {
    let l = sublattice_closure(&[line(&[1, 0]), line(&[0, 1]), line(&[1, 1])], 100).unwrap();
    assert_eq!(l.elements.len(), 5);
    let r = validate_skew(&l.topology, true);
    assert!(r.is_skew() && !r.passes());
    assert!(modular_failure(&l.topology).is_none());
    assert!(l.topology.is_lattice());
}

#[test]
fn closure_cap_is_enforced() {
    let lines: Vec<RationalSubspace> = (0..6).map(|k| line(&[1, k])).collect();
    assert_eq!(sublattice_closure(&lines, 4).unwrap_err(), HilbertError::CapExceeded(4));
}

#[test]
fn operator_validation() {
    let not_square = int_matrix(1, 2, &[1, 0]);
    assert_eq!(OperatorSpec::new(not_square).unwrap_err(), HilbertError::NotSquare);
    let skew = int_matrix(2, 2, &[0, 1, 2, 0]);
    assert_eq!(OperatorSpec::new(skew).unwrap_err(), HilbertError::NotSymmetric);
    // eigenvalues (1 ± √5)/2
    let irrational = int_matrix(2, 2, &[0, 1, 1, 1]);
    assert!(matches!(OperatorSpec::new(irrational), Err(HilbertError::IrrationalSpectrum { found: 0, dim: 2 })));
    assert!(matches!(
        OperatorSpec::with_eigenvalues(int_matrix(1, 1, &[3]), vec![qi(2)]),
        Err(HilbertError::NotAnEigenvalue(_))
    ));
}

#[test]
fn diagonal_families() {
    let op = diag(&[1, 2]);
    let f = spectral_family_of(&op);
    assert_eq!(f.levels, vec![line(&[1, 0]), RationalSubspace::whole(2)]);
    assert_eq!(f.gamma_labels(), vec![1, 2]);
    assert_eq!(f.pseudo_place(&line(&[1, 0])), Some(qi(1)));
    assert_eq!(f.pseudo_place(&line(&[0, 1])), Some(qi(2)));
    assert_eq!(f.pseudo_place(&line(&[1, 1])), Some(qi(2)));
    assert_eq!(f.pseudo_place(&RationalSubspace::zero(2)), Some(qi(1)));

    let f = spectral_family_of(&diag(&[1, 1, 2]));
    assert_eq!(f.levels[0], span(3, &[&[1, 0, 0], &[0, 1, 0]]));
    let (lattice, filtration) = f.filtration().unwrap();
    assert_eq!(lattice.elements.len(), 3);
    assert!(!validate_filtration(&filtration).unwrap().separated);
}

#[test]
fn rotated_operator() {
    let m = QMatrix::from_fn(2, 2, |r, c| [[q(23, 25), q(-36, 25)], [q(-36, 25), q(2, 25)]][r][c].clone());
    let op = OperatorSpec::new(m).unwrap();
    assert_eq!(op.eigenvalues, vec![qi(-1), qi(2)]);
    let f = spectral_family_of(&op);
    assert_eq!(f.levels[0], RationalSubspace::line(vec![qi(1), q(4, 3)]));
    assert_eq!(f.pseudo_place(&line(&[1, 0])), Some(qi(2)));
    let rho = line_values(&f, &standard_lines(&op));
    let r = reconstruct_filtration(&rho, &f.values).unwrap();
    assert!(r.spans_ambient);
    assert!(reconstruction_matches(&f, &r).holds);
}

#[test]
fn fractional_eigenvalues_scale_their_labels() {
    let op = OperatorSpec::diagonal(&[q(1, 2), q(2, 3)]);
    let f = spectral_family_of(&op);
    assert_eq!(f.scale, qi(6));
    assert_eq!(f.gamma_labels(), vec![3, 4]);
}

#[test]
fn reconstruction_needs_enough_lines() {
    let f = spectral_family_of(&diag(&[1, 2]));
    let only_x = line_values(&f, &[line(&[1, 0])]);
    let r = reconstruct_filtration(&only_x, &f.values).unwrap();
    assert!(!r.spans_ambient);
    assert!(!reconstruction_matches(&f, &r).holds);
    let none = line_values(&f, &[]);
    assert_eq!(reconstruct_filtration(&none, &f.values).unwrap_err(), HilbertError::NoLines);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn random_operators_certify_and_reconstruct(seed in any::<u64>(), dim in 1usize..=3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (matrix, values) = random_operator(&mut rng, dim);
        let op = OperatorSpec::new(matrix).unwrap();
        let mut distinct = values.clone();
        distinct.sort();
        distinct.dedup();
        prop_assert_eq!(&op.eigenvalues, &distinct.iter().map(|&x| qi(x)).collect::<Vec<_>>());
        for (l, e) in distinct.iter().zip(&op.eigenspaces) {
            prop_assert_eq!(e.rank(), values.iter().filter(|&&x| x == *l).count());
        }
        let f = spectral_family_of(&op);
        prop_assert_eq!(f.levels.last().unwrap(), &RationalSubspace::whole(dim));
        prop_assert!(f.levels.windows(2).all(|w| w[0].is_subspace_of(&w[1]) && w[0] != w[1]));
        let (_, filtration) = f.filtration().unwrap();
        prop_assert!(validate_filtration(&filtration).is_ok());

        let lines = standard_lines(&op);
        for l in &lines {
            prop_assert_eq!(f.pseudo_place(l), place_oracle(&op, &l.basis()[0]));
        }
        let probe: Vec<Rational> = (0..dim).map(|_| qi(rng.gen_range(-3..=3))).collect();
        prop_assert_eq!(f.pseudo_place(&RationalSubspace::line(probe.clone())), place_oracle(&op, &probe));
        let mut all = lines.clone();
        all.extend(f.levels.iter().cloned());
        prop_assert!(check_subadditivity(&f, &all).holds);
        let r = reconstruct_filtration(&line_values(&f, &lines), &f.values).unwrap();
        prop_assert!(r.spans_ambient);
        prop_assert!(reconstruction_matches(&f, &r).holds);
    }

    #[test]
    fn subspace_lattices_are_modular(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dim = rng.gen_range(2..=3);
        let gens: Vec<RationalSubspace> = (0..rng.gen_range(1..=3))
            .map(|_| RationalSubspace::line((0..dim).map(|_| qi(rng.gen_range(-2..=2))).collect()))
            .collect();
        let Ok(l) = sublattice_closure(&gens, 200) else { return Ok(()) };
        prop_assert!(modular_failure(&l.topology).is_none());
        for a in &l.elements {
            for b in &l.elements {
                let (m, j) = (a.meet(b).unwrap(), a.join(b).unwrap());
                prop_assert_eq!(a.rank() + b.rank(), m.rank() + j.rank());
                prop_assert!(m.is_subspace_of(a) && m.is_subspace_of(b));
                prop_assert!(a.is_subspace_of(&j) && b.is_subspace_of(&j));
            }
        }
    }

    #[test]
    fn cayley_transforms_are_orthogonal(seed in any::<u64>(), dim in 1usize..=4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = QMatrix::zeros(dim, dim);
        for r in 0..dim {
            for c in r + 1..dim {
                let x = rng.gen_range(-3..=3);
                s.set(r, c, qi(x));
                s.set(c, r, qi(-x));
            }
        }
        let o = cayley(&s).unwrap();
        prop_assert_eq!(o.mul(&o.transpose()).unwrap(), QMatrix::identity(dim));
    }
}
