//! Filters, the completion `C(Λ)`, pattern topologies, the generalized Stone
//! topology and point spectra.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::order::{commutative_shadow, validate_skew, AxiomReport, Elem, OrderError, SkewTopology};
use crate::space::{FiniteSpace, PointSet, SpaceError, DEFAULT_OPEN_CAP};
use crate::Check;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CompletionError {
    #[error("subset is not directed: `{0}` and `{1}` have no lower bound inside it")]
    NotDirected(String, String),
    #[error("empty subset has no filter class")]
    Empty,
    #[error("hypothesis not met: {0}")]
    HypothesisNotMet(String),
    #[error(transparent)]
    Order(#[from] OrderError),
    #[error(transparent)]
    Space(#[from] SpaceError),
}

/// An upward closed, downward directed subset.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Filter(BTreeSet<Elem>);

impl Filter {
    pub fn members(&self) -> &BTreeSet<Elem> {
        &self.0
    }

    pub fn contains(&self, e: Elem) -> bool {
        self.0.contains(&e)
    }

    /// The unique least member.
    pub fn minimum(&self, t: &SkewTopology) -> Option<Elem> {
        self.0.iter().copied().find(|&m| self.0.iter().all(|&x| t.leq(m, x)))
    }

    pub fn is_proper(&self, t: &SkewTopology) -> bool {
        !self.contains(t.bottom())
    }
}

pub fn is_directed(t: &SkewTopology, set: &BTreeSet<Elem>) -> Option<(Elem, Elem)> {
    for &a in set {
        for &b in set {
            if !set.iter().any(|&z| t.leq(z, a) && t.leq(z, b)) {
                return Some((a, b));
            }
        }
    }
    None
}

pub fn is_filter(t: &SkewTopology, set: &BTreeSet<Elem>) -> bool {
    !set.is_empty()
        && is_directed(t, set).is_none()
        && set.iter().all(|&x| t.elems().all(|y| !t.leq(x, y) || set.contains(&y)))
}

/// The upward closure `Ā` of a directed subset.
pub fn filter_closure(t: &SkewTopology, subset: &[Elem]) -> Result<Filter, CompletionError> {
    let set: BTreeSet<Elem> = subset.iter().copied().collect();
    if set.is_empty() {
        return Err(CompletionError::Empty);
    }
    if let Some((a, b)) = is_directed(t, &set) {
        return Err(CompletionError::NotDirected(t.label(a).into(), t.label(b).into()));
    }
    Ok(Filter(t.elems().filter(|&y| set.iter().any(|&a| t.leq(a, y))).collect()))
}

/// `C(Λ)`: filter classes with the induced order and operations.
#[derive(Clone, Debug)]
pub struct Completion {
    /// Carrier: one filter per class, index-aligned with `topology`.
    pub filters: Vec<Filter>,
    pub topology: SkewTopology,
    /// `λ ↦ [λ]`.
    pub canonical: Vec<Elem>,
    /// `Id_∧(C(Λ))`: classes of idempotently directed sets.
    pub strong_idempotents: Vec<Elem>,
    /// The completion re-validated as a skew topology.
    pub report: AxiomReport,
}

impl Completion {
    pub fn filter(&self, c: Elem) -> &Filter {
        &self.filters[c.0]
    }

    pub fn class_of(&self, f: &Filter) -> Option<Elem> {
        self.filters.iter().position(|g| g == f).map(Elem)
    }

    /// Canonical map preserves `∧` and `∨` on every pair; first failure otherwise.
    pub fn canonical_defect(&self, base: &SkewTopology) -> Option<(Elem, Elem)> {
        let c = &self.topology;
        for a in base.elems() {
            for b in base.elems() {
                let (ca, cb) = (self.canonical[a.0], self.canonical[b.0]);
                if self.canonical[base.meet(a, b).0] != c.meet(ca, cb)
                    || self.canonical[base.join(a, b).0] != c.join(ca, cb)
                    || base.leq(a, b) != c.leq(ca, cb)
                {
                    return Some((a, b));
                }
            }
        }
        None
    }

    pub fn canonical_is_bijection(&self) -> bool {
        let image: BTreeSet<Elem> = self.canonical.iter().copied().collect();
        image.len() == self.canonical.len() && image.len() == self.filters.len()
    }
}

/// Filters of a finite carrier are exactly the principal ones, one per element.
fn principal_filters(t: &SkewTopology) -> Vec<Filter> {
    t.elems().map(|x| Filter(t.up(x))).collect()
}

fn combine(
    t: &SkewTopology,
    f: &Filter,
    g: &Filter,
    op: impl Fn(Elem, Elem) -> Elem,
) -> Result<Filter, CompletionError> {
    let mut set = Vec::new();
    for &a in f.members() {
        for &b in g.members() {
            set.push(op(a, b));
        }
    }
    filter_closure(t, &set)
}

pub fn completion(t: &SkewTopology) -> Result<Completion, CompletionError> {
    let filters = principal_filters(t);
    let n = filters.len();
    let find = |f: &Filter| filters.iter().position(|g| g == f).expect("closures of finite filters are principal");
    let labels: Vec<String> = filters
        .iter()
        .map(|f| format!("[{}]", t.label(f.minimum(t).expect("finite filters have a minimum"))))
        .collect();
    let leq: Vec<Vec<bool>> = filters
        .iter()
        .map(|a| filters.iter().map(|b| b.members().is_subset(a.members())).collect())
        .collect();
    let mut meet = vec![vec![0; n]; n];
    let mut join = vec![vec![0; n]; n];
    for i in 0..n {
        for j in 0..n {
            meet[i][j] = find(&combine(t, &filters[i], &filters[j], |a, b| t.meet(a, b))?);
            join[i][j] = find(&combine(t, &filters[i], &filters[j], |a, b| t.join(a, b))?);
        }
    }
    let topology = SkewTopology::new(labels, leq, meet, join)?;
    let canonical: Vec<Elem> = t.elems().map(|x| Elem(find(&Filter(t.up(x))))).collect();
    let strong_idempotents = filters
        .iter()
        .enumerate()
        .filter(|(_, f)| is_strongly_idempotent(t, f))
        .map(|(i, _)| Elem(i))
        .collect();
    let report = validate_skew(&topology, false);
    Ok(Completion { filters, topology, canonical, strong_idempotents, report })
}

/// The class contains an idempotently directed set: the idempotent members
/// are directed and generate the whole filter.
pub fn is_strongly_idempotent(t: &SkewTopology, f: &Filter) -> bool {
    let ids: Vec<Elem> = f.members().iter().copied().filter(|&x| t.is_idempotent(x)).collect();
    match filter_closure(t, &ids) {
        Ok(g) => &g == f,
        Err(_) => false,
    }
}

// ---------------------------------------------------------------------------
// Pattern topologies

#[derive(Clone, Debug)]
pub struct PatternTopologies {
    /// `T(Λ)` and its embedding into `Λ`.
    pub t: SkewTopology,
    pub t_carrier: Vec<Elem>,
    /// `∏(Λ)` and its embedding into `C(Λ)`.
    pub pi: SkewTopology,
    pub pi_carrier: Vec<Elem>,
    /// `∏(Λ) = ∏(T(Λ))` under the embedding `C(T(Λ)) → C(Λ)`.
    pub pi_equals_pi_of_t: Check,
}

pub fn pattern_topologies(t: &SkewTopology, c: &Completion) -> Result<PatternTopologies, CompletionError> {
    let t_carrier = t.generated(&t.idempotents());
    let (tt, t_carrier) = t.restrict(&t_carrier)?;
    let pi_carrier = c.topology.generated(&c.strong_idempotents);
    let (pi, pi_carrier) = c.topology.restrict(&pi_carrier)?;

    let ct = completion(&tt)?;
    let pi_t = ct.topology.generated(&ct.strong_idempotents);
    // a filter of T(Λ) with minimum m corresponds to the class of m in C(Λ)
    let to_c = |x: Elem| -> Elem {
        let m = ct.filter(x).minimum(&tt).expect("finite filters have a minimum");
        c.canonical[t_carrier[m.0].0]
    };
    let image: BTreeSet<Elem> = pi_t.iter().map(|&x| to_c(x)).collect();
    let target: BTreeSet<Elem> = pi_carrier.iter().copied().collect();
    let mut witness = None;
    if image != target {
        witness = Some(format!("∏(Λ) has {} classes, ∏(T(Λ)) maps onto {}", target.len(), image.len()));
    } else {
        'outer: for &x in &pi_t {
            for &y in &pi_t {
                if to_c(ct.topology.meet(x, y)) != c.topology.meet(to_c(x), to_c(y))
                    || to_c(ct.topology.join(x, y)) != c.topology.join(to_c(x), to_c(y))
                {
                    witness = Some(format!(
                        "operations differ on {} and {}",
                        ct.topology.label(x),
                        ct.topology.label(y)
                    ));
                    break 'outer;
                }
            }
        }
    }
    Ok(PatternTopologies { t: tt, t_carrier, pi, pi_carrier, pi_equals_pi_of_t: Check::from_witness(witness) })
}

// ---------------------------------------------------------------------------
// Stone topology

#[derive(Clone, Debug, Serialize)]
pub struct StoneTopology {
    pub space: FiniteSpace,
    /// `O_{λ∧μ} ⊆ O_λ ∩ O_μ` for all pairs.
    pub meet_inclusion: Check,
    /// `O_{λ∨μ} ⊇ O_λ ∪ O_μ` for all pairs.
    pub join_inclusion: Check,
}

/// `O_λ = {[A] : λ ∈ Ā}` as a point set of completion indices.
pub fn stone_open(c: &Completion, x: Elem) -> PointSet {
    c.filters.iter().enumerate().filter(|(_, f)| f.contains(x)).map(|(i, _)| i).collect()
}

pub fn stone_topology(t: &SkewTopology, c: &Completion) -> Result<StoneTopology, CompletionError> {
    let basis: Vec<PointSet> = t.elems().map(|x| stone_open(c, x)).collect();
    let mut meet_w = None;
    let mut join_w = None;
    for a in t.elems() {
        for b in t.elems() {
            let (oa, ob) = (&basis[a.0], &basis[b.0]);
            let inter: PointSet = oa.intersection(ob).copied().collect();
            let uni: PointSet = oa.union(ob).copied().collect();
            if meet_w.is_none() && !basis[t.meet(a, b).0].is_subset(&inter) {
                meet_w = Some(format!("O_({} ∧ {})", t.label(a), t.label(b)));
            }
            if join_w.is_none() && !uni.is_subset(&basis[t.join(a, b).0]) {
                join_w = Some(format!("O_({} ∨ {})", t.label(a), t.label(b)));
            }
        }
    }
    let space = FiniteSpace::generate(c.topology.labels().to_vec(), basis, DEFAULT_OPEN_CAP)?;
    Ok(StoneTopology { space, meet_inclusion: Check::from_witness(meet_w), join_inclusion: Check::from_witness(join_w) })
}

// ---------------------------------------------------------------------------
// Points

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointKind {
    Minimal,
    Irreducible,
}

impl std::str::FromStr for PointKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "minimal" => Ok(PointKind::Minimal),
            "irreducible" => Ok(PointKind::Irreducible),
            other => Err(format!("unknown point kind `{other}`")),
        }
    }
}

impl std::fmt::Display for PointKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PointKind::Minimal => "minimal",
            PointKind::Irreducible => "irreducible",
        })
    }
}

/// `↑m` is a maximal proper filter.
pub fn is_minimal_point(t: &SkewTopology, m: Elem) -> bool {
    m != t.bottom() && !t.elems().any(|y| y != t.bottom() && t.lt(y, m))
}

/// `↑m` is proper and `x ∨ y ∈ ↑m` forces `x ∈ ↑m` or `y ∈ ↑m`.
pub fn is_irreducible_point(t: &SkewTopology, m: Elem) -> bool {
    m != t.bottom()
        && t.elems().all(|x| t.elems().all(|y| !t.leq(m, t.join(x, y)) || t.leq(m, x) || t.leq(m, y)))
}

pub fn is_point(t: &SkewTopology, m: Elem, kind: PointKind) -> bool {
    match kind {
        PointKind::Minimal => is_minimal_point(t, m),
        PointKind::Irreducible => is_irreducible_point(t, m),
    }
}

/// Minimum elements of the point filters, in index order.
pub fn point_elements(t: &SkewTopology, kind: PointKind) -> Vec<Elem> {
    t.elems().filter(|&m| is_point(t, m, kind)).collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct Spectrum {
    pub kind: PointKind,
    /// `Sp` (or `QSp` for minimal points) as completion classes.
    pub points: Vec<Elem>,
    /// `SP = Sp ∩ Id_∧(C(Λ))`.
    pub strong_points: Vec<Elem>,
    /// Point topology with basis `p(λ)` on `points`.
    pub space: FiniteSpace,
    /// Point topology with basis `P(λ)` on `strong_points`.
    pub strong_space: FiniteSpace,
    /// `p(λ ∨ μ) = p(λ) ∪ p(μ)` on the points.
    pub join_law: Check,
    /// `P(λ ∧ μ) = P(λ) ∩ P(μ)` on the strong points.
    pub meet_law: Check,
    /// Minimal points lie in `id_∧(C(Λ))`.
    pub minimal_points_idempotent: Check,
    /// Nonzero `∨`-irreducible strong idempotents, compared with `SP`.
    pub join_irreducible_strong: Vec<Elem>,
    pub strong_points_are_join_irreducibles: bool,
}

pub fn spectra(t: &SkewTopology, c: &Completion, kind: PointKind) -> Result<Spectrum, CompletionError> {
    let ct = &c.topology;
    let points: Vec<Elem> = ct.elems().filter(|&p| is_point_class(t, c, p, kind)).collect();
    let strong_points: Vec<Elem> = points.iter().copied().filter(|p| c.strong_idempotents.contains(p)).collect();
    // [p] ≤ [λ] in C(Λ) means λ ∈ p̄
    let basic = |pts: &[Elem], x: Elem| -> PointSet {
        pts.iter().enumerate().filter(|(_, &p)| c.filter(p).contains(x)).map(|(i, _)| i).collect()
    };
    let mut join_w = None;
    let mut meet_w = None;
    for a in t.elems() {
        for b in t.elems() {
            let (pa, pb) = (basic(&points, a), basic(&points, b));
            let uni: PointSet = pa.union(&pb).copied().collect();
            if join_w.is_none() && basic(&points, t.join(a, b)) != uni {
                join_w = Some(format!("p({} ∨ {})", t.label(a), t.label(b)));
            }
            let (sa, sb) = (basic(&strong_points, a), basic(&strong_points, b));
            let inter: PointSet = sa.intersection(&sb).copied().collect();
            if meet_w.is_none() && basic(&strong_points, t.meet(a, b)) != inter {
                meet_w = Some(format!("P({} ∧ {})", t.label(a), t.label(b)));
            }
        }
    }
    let names = |pts: &[Elem]| pts.iter().map(|&p| ct.label(p).to_string()).collect::<Vec<_>>();
    let space = FiniteSpace::generate(names(&points), t.elems().map(|x| basic(&points, x)).collect(), DEFAULT_OPEN_CAP)?;
    let strong_space = FiniteSpace::generate(
        names(&strong_points),
        t.elems().map(|x| basic(&strong_points, x)).collect(),
        DEFAULT_OPEN_CAP,
    )?;
    let ids: BTreeSet<Elem> = ct.idempotents().into_iter().collect();
    let minimal_points_idempotent = Check::from_witness(
        ct.elems()
            .filter(|&p| is_point_class(t, c, p, PointKind::Minimal) && !ids.contains(&p))
            .map(|p| format!("{} is not idempotent", ct.label(p)))
            .next(),
    );
    let strong = &c.strong_idempotents;
    let join_irreducible_strong: Vec<Elem> = strong
        .iter()
        .copied()
        .filter(|&p| {
            p != ct.bottom()
                && strong.iter().all(|&x| strong.iter().all(|&y| ct.join(x, y) != p || x == p || y == p))
        })
        .collect();
    let strong_points_are_join_irreducibles = join_irreducible_strong == strong_points;
    Ok(Spectrum {
        kind,
        points,
        strong_points,
        space,
        strong_space,
        join_law: Check::from_witness(join_w),
        meet_law: Check::from_witness(meet_w),
        minimal_points_idempotent,
        join_irreducible_strong,
        strong_points_are_join_irreducibles,
    })
}

/// Decides the point property on the filter itself rather than on its minimum.
fn is_point_class(t: &SkewTopology, c: &Completion, p: Elem, kind: PointKind) -> bool {
    let f = c.filter(p);
    if !f.is_proper(t) {
        return false;
    }
    match kind {
        PointKind::Minimal => c
            .filters
            .iter()
            .all(|g| !(g.members().is_superset(f.members()) && g != f) || !g.is_proper(t)),
        PointKind::Irreducible => t
            .elems()
            .all(|x| t.elems().all(|y| !f.contains(t.join(x, y)) || f.contains(x) || f.contains(y))),
    }
}

// ---------------------------------------------------------------------------
// Strong shadow of the pattern topology against the completed shadow

#[derive(Clone, Debug)]
pub struct StrongShadowComparison {
    /// `SL_s(∏)`: strong idempotents with the restricted shadow meet.
    pub strong_shadow: SkewTopology,
    pub strong_carrier: Vec<Elem>,
    /// `C(SL(Λ))`.
    pub completed_shadow: SkewTopology,
    /// Image of each strong idempotent, matching `[m] ↦ [m]`.
    pub isomorphism: Result<Vec<Elem>, String>,
}

/// Requires a `∨`-complete noncommutative topology with commutative `∨`.
pub fn check_lemma_1_3(t: &SkewTopology) -> Result<StrongShadowComparison, CompletionError> {
    let report = validate_skew(t, true);
    if !report.is_noncommutative_topology() {
        let failing: Vec<&str> = report.statuses()[..5].iter().filter(|(_, s)| !s.holds()).map(|(n, _)| *n).collect();
        return Err(CompletionError::HypothesisNotMet(format!("axiom ({}) fails", failing.join(", "))));
    }
    if !report.vee_complete_as_sup.holds() {
        return Err(CompletionError::HypothesisNotMet("∨ is not the supremum".into()));
    }
    if let Some((a, b)) = t.join_is_commutative() {
        return Err(CompletionError::HypothesisNotMet(format!(
            "∨ not commutative on {} and {}",
            t.label(a),
            t.label(b)
        )));
    }
    let c = completion(t)?;
    let ct = &c.topology;
    let ids = ct.idempotents();
    let smeet = |a: Elem, b: Elem| {
        let m = ct.meet(a, b);
        ct.join_all(ids.iter().copied().filter(|&g| ct.leq(g, m)))
    };
    let carrier = c.strong_idempotents.clone();
    let pos = |e: Elem| carrier.iter().position(|&x| x == e);
    let mut meet = Vec::new();
    let mut join = Vec::new();
    for &a in &carrier {
        let mut mrow = Vec::new();
        let mut jrow = Vec::new();
        for &b in &carrier {
            let m = smeet(a, b);
            let j = ct.join(a, b);
            mrow.push(pos(m).ok_or_else(|| CompletionError::HypothesisNotMet(format!("{} ∧̲ {} leaves Id", ct.label(a), ct.label(b))))?);
            jrow.push(pos(j).ok_or_else(|| CompletionError::HypothesisNotMet(format!("{} ∨ {} leaves Id", ct.label(a), ct.label(b))))?);
        }
        meet.push(mrow);
        join.push(jrow);
    }
    let labels = carrier.iter().map(|&e| ct.label(e).to_string()).collect();
    let leq = carrier.iter().map(|&a| carrier.iter().map(|&b| ct.leq(a, b)).collect()).collect();
    let strong_shadow = SkewTopology::new(labels, leq, meet, join)?;

    let shadow = commutative_shadow(t)?;
    let cs = completion(&shadow.lattice)?;
    let completed_shadow = cs.topology.clone();

    let mut map = Vec::new();
    let mut failure = None;
    for &x in &carrier {
        let m = c.filter(x).minimum(t).expect("finite filters have a minimum");
        match shadow.position(m) {
            Some(i) => map.push(cs.canonical[i]),
            None => {
                failure = Some(format!("{} has a non-idempotent generator", ct.label(x)));
                break;
            }
        }
    }
    if failure.is_none() {
        let image: BTreeSet<Elem> = map.iter().copied().collect();
        if image.len() != map.len() || image.len() != completed_shadow.len() {
            failure = Some("generator map is not a bijection".into());
        }
    }
    if failure.is_none() {
        'outer: for a in strong_shadow.elems() {
            for b in strong_shadow.elems() {
                let (fa, fb) = (map[a.0], map[b.0]);
                if strong_shadow.leq(a, b) != completed_shadow.leq(fa, fb)
                    || map[strong_shadow.meet(a, b).0] != completed_shadow.meet(fa, fb)
                    || map[strong_shadow.join(a, b).0] != completed_shadow.join(fa, fb)
                {
                    failure = Some(format!(
                        "structure differs on {} and {}",
                        strong_shadow.label(a),
                        strong_shadow.label(b)
                    ));
                    break 'outer;
                }
            }
        }
    }
    Ok(StrongShadowComparison {
        strong_shadow,
        strong_carrier: carrier,
        completed_shadow,
        isomorphism: match failure {
            None => Ok(map),
            Some(w) => Err(w),
        },
    })
}
