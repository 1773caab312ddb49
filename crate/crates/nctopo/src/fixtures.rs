//! The shared fixture corpus.

use crate::completion::PointKind;
use crate::dynamics::{DynSystem, TimeLine};
use crate::order::{order_closure, validate_skew, Elem, SkewTopology};
use crate::sheaves::{DynPresheaf, Presheaf};
use crate::spectral::Filtration;
use crate::{int_matrix, QMatrix};

/// The chain `0 < e1 < … < 1` on `n` elements.
pub fn chain(labels: &[&str]) -> SkewTopology {
    let pairs: Vec<(&str, &str)> = labels.windows(2).map(|w| (w[0], w[1])).collect();
    SkewTopology::from_order(labels, &pairs, None, None).expect("chains are lattices")
}

pub fn ch2() -> SkewTopology {
    chain(&["0", "1"])
}

pub fn ch3() -> SkewTopology {
    chain(&["0", "a", "1"])
}

pub fn b2() -> SkewTopology {
    SkewTopology::from_order(&["0", "a", "b", "1"], &[("0", "a"), ("0", "b"), ("a", "1"), ("b", "1")], None, None)
        .expect("B2 is a lattice")
}

pub fn m3() -> SkewTopology {
    SkewTopology::from_order(
        &["0", "a", "b", "c", "1"],
        &[("0", "a"), ("0", "b"), ("0", "c"), ("a", "1"), ("b", "1"), ("c", "1")],
        None,
        None,
    )
    .expect("M3 is a lattice")
}

/// Every 4-element structure on `0, a, b, 1` passing axioms (i)-(iv) with at
/// least one non-idempotent element, in a fixed enumeration order.
pub fn nc4_candidates() -> Vec<SkewTopology> {
    let labels: Vec<String> = ["0", "a", "b", "1"].iter().map(|s| s.to_string()).collect();
    let orders = [
        order_closure(4, &[(0, 1), (1, 2), (2, 3)]),
        order_closure(4, &[(0, 1), (0, 2), (1, 3), (2, 3)]),
    ];
    let inner = [1usize, 2];
    let mut found = Vec::new();
    for leq in &orders {
        for code in 0..4usize.pow(4) {
            let mut meet = identity_meet();
            let mut c = code;
            for &x in &inner {
                for &y in &inner {
                    meet[x][y] = c % 4;
                    c /= 4;
                }
            }
            for jcode in 0..4usize.pow(3) {
                let mut join = identity_join();
                let vals = [jcode % 4, jcode / 4 % 4, jcode / 16];
                join[1][1] = vals[0];
                join[1][2] = vals[1];
                join[2][1] = vals[1];
                join[2][2] = vals[2];
                let Ok(t) = SkewTopology::new(labels.clone(), leq.clone(), meet.clone(), join) else {
                    continue;
                };
                if t.idempotents().len() == t.len() {
                    continue;
                }
                if validate_skew(&t, false).is_skew() {
                    found.push(t);
                }
            }
        }
    }
    found
}

fn identity_meet() -> Vec<Vec<usize>> {
    let mut m = vec![vec![0; 4]; 4];
    for x in 0..4 {
        m[x][3] = x;
        m[3][x] = x;
    }
    m
}

fn identity_join() -> Vec<Vec<usize>> {
    let mut j = vec![vec![3; 4]; 4];
    for x in 0..4 {
        j[x][0] = x;
        j[0][x] = x;
    }
    j
}

/// The first search result whose `∨` is the supremum.
pub fn nc4() -> SkewTopology {
    let all = nc4_candidates();
    all.iter()
        .find(|t| validate_skew(t, false).vee_complete_as_sup.holds())
        .or(all.first())
        .cloned()
        .expect("the search finds a non-idempotent structure")
}

/// All shared single-space fixtures with their names.
pub fn spaces() -> Vec<(&'static str, SkewTopology)> {
    vec![("CH2", ch2()), ("CH3", ch3()), ("B2", b2()), ("M3", m3()), ("NC4", nc4())]
}

/// Maps `a → b` between structures preserving `0`, `1`, `≤`, `∧`, `∨`, in
/// lexicographic order of their value arrays.
pub fn homomorphisms(a: &SkewTopology, b: &SkewTopology) -> Vec<Vec<Elem>> {
    let n = a.len();
    let m = b.len();
    let mut out = Vec::new();
    let mut map = vec![Elem(0); n];
    fn rec(a: &SkewTopology, b: &SkewTopology, i: usize, map: &mut Vec<Elem>, out: &mut Vec<Vec<Elem>>, m: usize) {
        if i == a.len() {
            let ok = map[a.bottom().0] == b.bottom()
                && map[a.top().0] == b.top()
                && a.elems().all(|x| {
                    a.elems().all(|y| {
                        (!a.leq(x, y) || b.leq(map[x.0], map[y.0]))
                            && map[a.meet(x, y).0] == b.meet(map[x.0], map[y.0])
                            && map[a.join(x, y).0] == b.join(map[x.0], map[y.0])
                    })
                });
            if ok {
                out.push(map.clone());
            }
            return;
        }
        for v in 0..m {
            map[i] = Elem(v);
            rec(a, b, i + 1, map, out, m);
        }
    }
    rec(a, b, 0, &mut map, &mut out, m);
    out
}

/// Surjective homomorphisms only.
pub fn surjections(a: &SkewTopology, b: &SkewTopology) -> Vec<Vec<Elem>> {
    homomorphisms(a, b)
        .into_iter()
        .filter(|f| b.elems().all(|y| f.contains(&y)))
        .collect()
}

fn timeline(labels: &[&str]) -> TimeLine {
    TimeLine::new(labels.iter().map(|s| s.to_string()).collect()).expect("fixture timelines are valid")
}

/// Three instants carrying `M3` with identity maps.
pub fn dyn_const() -> DynSystem {
    let m = m3();
    let id: Vec<Elem> = m.elems().collect();
    DynSystem::new(
        timeline(&["t0", "t1", "t2"]),
        vec![m.clone(), m.clone(), m],
        vec![((0, 1), id.clone()), ((1, 2), id)],
        PointKind::Minimal,
    )
    .expect("constant system")
}

/// `NC4` at `t0` collapsing onto the chain `0 < m < 1` at `t1`.
///
/// `M3` is simple, so it has no surjection onto a 3-chain; the collapse is
/// taken from `NC4` instead, whose only such surjection sends both inner
/// elements to `m`.
pub fn dyn_collapse() -> DynSystem {
    let src = nc4();
    let dst = chain(&["0", "m", "1"]);
    let map = surjections(&src, &dst).into_iter().next().expect("NC4 maps onto the 3-chain");
    DynSystem::new(timeline(&["t0", "t1"]), vec![src, dst], vec![((0, 1), map)], PointKind::Minimal)
        .expect("collapse system")
}

pub fn systems() -> Vec<(&'static str, DynSystem)> {
    vec![("DYN_CONST", dyn_const()), ("DYN_COLLAPSE", dyn_collapse())]
}

/// Dimension 1 on `CH3` with identity restrictions.
pub fn psh_const() -> Presheaf {
    Presheaf::constant(&ch3(), 1)
}

/// `Γ(1) = ℚ²`, `Γ(a) = ℚ` on `CH3`, restricting by the first projection.
pub fn psh_proj() -> Presheaf {
    let t = ch3();
    let (a, one) = (t.elem("a").unwrap(), t.top());
    Presheaf::new(t, vec![0, 1, 2], vec![((one, a), int_matrix(1, 2, &[1, 0]))]).expect("projection presheaf")
}

/// `ℚ` on every nonzero element of `B2`, with the top restricting to zero on
/// both atoms: the cover `1 = a ∨ b` kills every section.
pub fn psh_unseparated() -> Presheaf {
    let t = b2();
    let (a, b, one) = (t.elem("a").unwrap(), t.elem("b").unwrap(), t.top());
    Presheaf::new(
        t,
        vec![0, 1, 1, 1],
        vec![((one, a), int_matrix(1, 1, &[0])), ((one, b), int_matrix(1, 1, &[0]))],
    )
    .expect("unseparated presheaf")
}

pub fn dyn_const_presheaf() -> DynPresheaf {
    DynPresheaf::constant(&dyn_const(), 1)
}

/// Constant `ℚ` over the collapse; flabby at every instant.
pub fn dyn_collapse_presheaf() -> DynPresheaf {
    DynPresheaf::constant(&dyn_collapse(), 1)
}

/// Constant `ℚ` on both fibres of the collapse, but every comparison map is
/// zero, so no string runs through a nonzero section at `t1`.
pub fn ltf_failing_presheaf() -> DynPresheaf {
    let sys = dyn_collapse();
    let fibres: Vec<Presheaf> = sys.spaces.iter().map(|s| Presheaf::constant(s, 1)).collect();
    let src = sys.space(0);
    let given = src
        .elems()
        .filter(|&x| x != src.bottom())
        .map(|x| ((0, 1, x), QMatrix::zeros(1, 1)))
        .collect();
    DynPresheaf::new(sys, fibres, given).expect("zero comparisons")
}

pub fn presheaves() -> Vec<(&'static str, Presheaf)> {
    vec![("PSH_CONST", psh_const()), ("PSH_PROJ", psh_proj()), ("PSH_UNSEPARATED", psh_unseparated())]
}

pub fn dyn_presheaves() -> Vec<(&'static str, DynPresheaf)> {
    vec![
        ("DYN_CONST_PSH", dyn_const_presheaf()),
        ("DYN_COLLAPSE_PSH", dyn_collapse_presheaf()),
        ("LTF_FAILING", ltf_failing_presheaf()),
    ]
}

fn family(base: SkewTopology, gamma: Vec<i64>, levels: &[&str]) -> Filtration {
    Filtration::from_labels(base, gamma, levels).expect("fixture levels exist")
}

/// `CH3` with `λ_1 = a`, `λ_2 = 1`.
pub fn sf_ch() -> Filtration {
    family(ch3(), vec![1, 2], &["a", "1"])
}

/// `CH3` with `λ_0 = 0`, `λ_1 = a`, `λ_2 = 1`: separated.
pub fn sf_ch_separated() -> Filtration {
    family(ch3(), vec![0, 1, 2], &["0", "a", "1"])
}

/// `M3` with `λ_1 = a`, `λ_2 = 1`.
pub fn sf_m3() -> Filtration {
    family(m3(), vec![1, 2], &["a", "1"])
}

/// `B2` with `λ_0 = 0`, `λ_1 = a`, `λ_2 = 1`.
pub fn sf_b2() -> Filtration {
    family(b2(), vec![0, 1, 2], &["0", "a", "1"])
}

/// `NC4` passing through its non-idempotent element.
pub fn sf_nc4() -> Filtration {
    let t = nc4();
    let e = t.elems().find(|&e| !t.is_idempotent(e)).expect("NC4 has a non-idempotent element");
    let label = t.label(e).to_string();
    family(t, vec![1, 2], &[&label, "1"])
}

/// Not a filtration: every level is `a`, so the join misses the top.
pub fn gap_family() -> Filtration {
    family(ch3(), vec![1, 2], &["a", "a"])
}

pub fn filtrations() -> Vec<(&'static str, Filtration)> {
    vec![
        ("SF_CH", sf_ch()),
        ("SF_CH_SEP", sf_ch_separated()),
        ("SF_M3", sf_m3()),
        ("SF_B2", sf_b2()),
        ("SF_NC4", sf_nc4()),
    ]
}
