//! Systems of skew topologies over a finite chain of instants.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::completion::{completion, is_point, is_strongly_idempotent, pattern_topologies, PointKind};
use crate::order::{shadow_meet, validate_skew, Elem, SkewTopology};
use crate::space::{FiniteSpace, PointSet, SpaceError, DEFAULT_OPEN_CAP};
use crate::Check;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DynError {
    #[error("timeline is empty")]
    EmptyTimeline,
    #[error("duplicate instant `{0}`")]
    DuplicateTime(String),
    #[error("unknown instant `{0}`")]
    UnknownTime(String),
    #[error("expected one topology per instant: {times} instants, {spaces} topologies")]
    SpaceCount { times: usize, spaces: usize },
    #[error("no map from {0} to {1} and none can be composed")]
    MissingMap(String, String),
    #[error("map {0} -> {1} has the wrong shape or target")]
    BadMap(String, String),
    #[error("maps only go forward in time, got {0} -> {1}")]
    Backward(String, String),
    #[error("composition fails: {0}")]
    BrokenComposition(String),
    #[error("map does not preserve structure: {0}")]
    NonPreserving(String),
    #[error("unknown predicate `{0}`")]
    UnknownPredicate(String),
    #[error("no temporal points at {0}, so no support interval exists")]
    NoSupportInterval(String),
    #[error(transparent)]
    Space(#[from] SpaceError),
}

/// Totally ordered instants, earliest first.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TimeLine(Vec<String>);

impl TimeLine {
    pub fn new(labels: Vec<String>) -> Result<TimeLine, DynError> {
        if labels.is_empty() {
            return Err(DynError::EmptyTimeline);
        }
        let mut seen = BTreeSet::new();
        for l in &labels {
            if !seen.insert(l) {
                return Err(DynError::DuplicateTime(l.clone()));
            }
        }
        Ok(TimeLine(labels))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.0
    }

    pub fn label(&self, t: usize) -> &str {
        &self.0[t]
    }

    pub fn index(&self, label: &str) -> Result<usize, DynError> {
        self.0.iter().position(|l| l == label).ok_or_else(|| DynError::UnknownTime(label.into()))
    }
}

/// `[lo, hi]` by index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct ClosedInterval {
    pub lo: usize,
    pub hi: usize,
}

impl ClosedInterval {
    pub fn new(lo: usize, hi: usize) -> ClosedInterval {
        assert!(lo <= hi, "interval bounds out of order");
        ClosedInterval { lo, hi }
    }

    pub fn contains(&self, t: usize) -> bool {
        self.lo <= t && t <= self.hi
    }

    pub fn members(&self) -> std::ops::RangeInclusive<usize> {
        self.lo..=self.hi
    }

    pub fn is_subset(&self, other: &ClosedInterval) -> bool {
        other.lo <= self.lo && self.hi <= other.hi
    }

    /// The interval order: both endpoints weakly increase.
    pub fn precedes(&self, other: &ClosedInterval) -> bool {
        self.lo <= other.lo && self.hi <= other.hi
    }
}

impl fmt::Display for ClosedInterval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.lo, self.hi)
    }
}

/// `]after, before[` with exclusive bounds; `None` is unbounded.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct OpenInterval {
    pub after: Option<usize>,
    pub before: Option<usize>,
}

impl OpenInterval {
    /// The open interval whose members are exactly `lo..=hi` on a line of
    /// `len` instants.
    pub fn around(lo: usize, hi: usize, len: usize) -> OpenInterval {
        OpenInterval { after: lo.checked_sub(1), before: (hi + 1 < len).then_some(hi + 1) }
    }

    pub fn contains(&self, t: usize) -> bool {
        self.after.is_none_or(|a| a < t) && self.before.is_none_or(|b| t < b)
    }

    pub fn members(&self, len: usize) -> Vec<usize> {
        (0..len).filter(|&t| self.contains(t)).collect()
    }

    pub fn is_whole_line(&self) -> bool {
        self.after.is_none() && self.before.is_none()
    }

    pub fn describe(&self, line: &TimeLine) -> String {
        let a = self.after.map_or("-∞".to_string(), |t| line.label(t).to_string());
        let b = self.before.map_or("+∞".to_string(), |t| line.label(t).to_string());
        format!("]{a}, {b}[")
    }
}

/// Largest run `lo..=hi` around `t0` on which `ok` holds, if `ok(t0)`.
fn run_around(t0: usize, len: usize, ok: impl Fn(usize) -> bool) -> Option<(usize, usize)> {
    if !ok(t0) {
        return None;
    }
    let mut lo = t0;
    while lo > 0 && ok(lo - 1) {
        lo -= 1;
    }
    let mut hi = t0;
    while hi + 1 < len && ok(hi + 1) {
        hi += 1;
    }
    Some((lo, hi))
}

// ---------------------------------------------------------------------------
// Systems

#[derive(Clone, Debug)]
pub struct DynSystem {
    pub timeline: TimeLine,
    pub spaces: Vec<SkewTopology>,
    maps: BTreeMap<(usize, usize), Vec<Elem>>,
    pub point_kind: PointKind,
}

impl DynSystem {
    /// Missing maps `t -> t'` are filled by composing along consecutive
    /// instants; identities are added on the diagonal when absent.
    pub fn new(
        timeline: TimeLine,
        spaces: Vec<SkewTopology>,
        given: Vec<((usize, usize), Vec<Elem>)>,
        point_kind: PointKind,
    ) -> Result<DynSystem, DynError> {
        let n = timeline.len();
        if spaces.len() != n {
            return Err(DynError::SpaceCount { times: n, spaces: spaces.len() });
        }
        let mut maps = BTreeMap::new();
        for ((a, b), m) in given {
            if a > b {
                return Err(DynError::Backward(timeline.label(a).into(), timeline.label(b).into()));
            }
            if m.len() != spaces[a].len() || m.iter().any(|e| e.0 >= spaces[b].len()) {
                return Err(DynError::BadMap(timeline.label(a).into(), timeline.label(b).into()));
            }
            maps.insert((a, b), m);
        }
        for t in 0..n {
            maps.entry((t, t)).or_insert_with(|| spaces[t].elems().collect());
        }
        for gap in 1..n {
            for a in 0..n - gap {
                let b = a + gap;
                if maps.contains_key(&(a, b)) {
                    continue;
                }
                let (Some(first), Some(step)) = (maps.get(&(a, b - 1)), maps.get(&(b - 1, b))) else {
                    return Err(DynError::MissingMap(timeline.label(a).into(), timeline.label(b).into()));
                };
                let composed = first.iter().map(|x| step[x.0]).collect();
                maps.insert((a, b), composed);
            }
        }
        Ok(DynSystem { timeline, spaces, maps, point_kind })
    }

    pub fn len(&self) -> usize {
        self.timeline.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timeline.is_empty()
    }

    pub fn space(&self, t: usize) -> &SkewTopology {
        &self.spaces[t]
    }

    pub fn map(&self, a: usize, b: usize) -> &[Elem] {
        &self.maps[&(a, b)]
    }

    /// `φ_ab(x)` for `a ≤ b`.
    pub fn phi(&self, a: usize, b: usize, x: Elem) -> Elem {
        self.maps[&(a, b)][x.0]
    }

    pub fn with_point_kind(&self, kind: PointKind) -> DynSystem {
        DynSystem { point_kind: kind, ..self.clone() }
    }

    /// Elements of `Λ_t` whose principal filter is a point.
    pub fn points(&self, t: usize) -> Vec<Elem> {
        let s = self.space(t);
        s.elems().filter(|&p| is_point(s, p, self.point_kind)).collect()
    }

    fn tag(&self, t: usize, x: Elem) -> String {
        format!("{}@{}", self.space(t).label(x), self.timeline.label(t))
    }

    /// Elements of `Λ_a` with `φ_ab(x) = y`.
    pub fn preimages(&self, a: usize, b: usize, y: Elem) -> Vec<Elem> {
        self.space(a).elems().filter(|&x| self.phi(a, b, x) == y).collect()
    }
}

// ---------------------------------------------------------------------------
// Structural validation

#[derive(Clone, Debug, Serialize)]
pub struct SystemReport {
    /// Each fibre passes axioms (i)-(iv).
    pub fibres_skew: Check,
    /// Idempotents map to idempotents.
    pub idempotents_preserved: Check,
    /// Images of idempotently directed principal sets stay idempotently directed.
    pub idempotent_directed_preserved: Check,
    /// Maps restrict to the pattern topologies.
    pub pattern_restriction: Check,
}

pub fn validate_system(sys: &DynSystem) -> Result<SystemReport, DynError> {
    let n = sys.len();
    for t in 0..n {
        if sys.map(t, t).iter().enumerate().any(|(i, e)| e.0 != i) {
            return Err(DynError::BrokenComposition(format!("φ at {} is not the identity", sys.timeline.label(t))));
        }
    }
    for a in 0..n {
        for b in a..n {
            for c in b..n {
                for x in sys.space(a).elems() {
                    if sys.phi(b, c, sys.phi(a, b, x)) != sys.phi(a, c, x) {
                        return Err(DynError::BrokenComposition(format!(
                            "{} -> {} -> {} disagrees on {}",
                            sys.timeline.label(a),
                            sys.timeline.label(b),
                            sys.timeline.label(c),
                            sys.tag(a, x)
                        )));
                    }
                }
            }
        }
    }
    for a in 0..n {
        for b in a + 1..n {
            let (sa, sb) = (sys.space(a), sys.space(b));
            let f = |x| sys.phi(a, b, x);
            if f(sa.bottom()) != sb.bottom() || f(sa.top()) != sb.top() {
                return Err(DynError::NonPreserving(format!(
                    "{} -> {} moves 0 or 1",
                    sys.timeline.label(a),
                    sys.timeline.label(b)
                )));
            }
            for x in sa.elems() {
                for y in sa.elems() {
                    let bad = if sa.leq(x, y) && !sb.leq(f(x), f(y)) {
                        Some("≤")
                    } else if f(sa.meet(x, y)) != sb.meet(f(x), f(y)) {
                        Some("∧")
                    } else if f(sa.join(x, y)) != sb.join(f(x), f(y)) {
                        Some("∨")
                    } else {
                        None
                    };
                    if let Some(op) = bad {
                        return Err(DynError::NonPreserving(format!(
                            "{op} on {} and {} towards {}",
                            sys.tag(a, x),
                            sys.tag(a, y),
                            sys.timeline.label(b)
                        )));
                    }
                }
            }
        }
    }

    let mut fibres = None;
    let mut ids = None;
    let mut directed = None;
    let mut pattern = None;
    let patterns: Vec<BTreeSet<Elem>> = sys
        .spaces
        .iter()
        .map(|s| {
            completion(s)
                .and_then(|c| pattern_topologies(s, &c).map(|p| (c, p)))
                .map(|(c, p)| {
                    p.pi_carrier.iter().map(|&e| c.filter(e).minimum(s).expect("finite filters have a minimum")).collect()
                })
                .unwrap_or_default()
        })
        .collect();
    for t in 0..n {
        if fibres.is_none() && !validate_skew(sys.space(t), false).is_skew() {
            fibres = Some(format!("fibre at {} is not a skew topology", sys.timeline.label(t)));
        }
    }
    for a in 0..n {
        for b in a + 1..n {
            let (sa, sb) = (sys.space(a), sys.space(b));
            for x in sa.idempotents() {
                if ids.is_none() && !sb.is_idempotent(sys.phi(a, b, x)) {
                    ids = Some(format!("{} maps to a non-idempotent", sys.tag(a, x)));
                }
            }
            for x in sa.elems() {
                let filter = crate::completion::filter_closure(sa, &[x]).expect("singletons are directed");
                if !is_strongly_idempotent(sa, &filter) {
                    continue;
                }
                let image: BTreeSet<Elem> = filter.members().iter().map(|&y| sys.phi(a, b, y)).collect();
                if directed.is_none() && !idempotently_directed(sb, &image) {
                    directed = Some(format!("image of ↑{} towards {}", sys.tag(a, x), sys.timeline.label(b)));
                }
            }
            for &x in &patterns[a] {
                if pattern.is_none() && !patterns[b].contains(&sys.phi(a, b, x)) {
                    pattern = Some(format!("{} leaves the pattern topology", sys.tag(a, x)));
                }
            }
        }
    }
    Ok(SystemReport {
        fibres_skew: Check::from_witness(fibres),
        idempotents_preserved: Check::from_witness(ids),
        idempotent_directed_preserved: Check::from_witness(directed),
        pattern_restriction: Check::from_witness(pattern),
    })
}

/// Every member has an idempotent member below it and the idempotent members
/// are directed.
pub fn idempotently_directed(t: &SkewTopology, set: &BTreeSet<Elem>) -> bool {
    let ids: BTreeSet<Elem> = set.iter().copied().filter(|&x| t.is_idempotent(x)).collect();
    !ids.is_empty()
        && set.iter().all(|&x| ids.iter().any(|&i| t.leq(i, x)))
        && crate::completion::is_directed(t, &ids).is_none()
}

// ---------------------------------------------------------------------------
// Interpolation, persistence and unambiguity

#[derive(Clone, Debug, Serialize)]
pub struct InterpolationCase {
    pub t: usize,
    pub x: Elem,
    pub y: Elem,
    /// Later instants that work as `t1`.
    pub witnesses: Vec<usize>,
    /// Among them, those where every `z1` has a unique preimage in `]x, y[`.
    pub unambiguous: Vec<usize>,
    pub endpoint_vacuous: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct PersistenceCase {
    pub t: usize,
    pub chain: [Elem; 3],
    /// Largest open interval around `t` on which the clause holds.
    pub interval: OpenInterval,
    /// Largest open interval around `t` on which all relevant preimages are unique.
    pub unambiguity: OpenInterval,
    /// Earlier instants where exactly one of `x'`, `y'` exists.
    pub one_sided: Vec<usize>,
}

#[derive(Clone, Debug, Serialize)]
pub struct DntReport {
    pub interpolation: Check,
    pub interpolation_cases: Vec<InterpolationCase>,
    pub persistence: Check,
    pub persistence_cases: Vec<PersistenceCase>,
    pub unambiguity: Check,
    /// Some interpolation case at the last instant holds only vacuously.
    pub endpoint_vacuous: bool,
}

fn interpolation_at(sys: &DynSystem, t: usize, t1: usize, x: Elem, y: Elem, unique: bool) -> bool {
    let (s, s1) = (sys.space(t), sys.space(t1));
    let (fx, fy) = (sys.phi(t, t1, x), sys.phi(t, t1, y));
    s1.elems().filter(|&z1| s1.lt(fx, z1) && s1.lt(z1, fy)).all(|z1| {
        let pre = s.elems().filter(|&z| s.lt(x, z) && s.lt(z, y) && sys.phi(t, t1, z) == z1).count();
        if unique {
            pre == 1
        } else {
            pre >= 1
        }
    })
}

fn persistence_at(sys: &DynSystem, t: usize, t2: usize, [x, z, y]: [Elem; 3]) -> (bool, bool) {
    if t2 >= t {
        let (fx, fz, fy) = (sys.phi(t, t2, x), sys.phi(t, t2, z), sys.phi(t, t2, y));
        let s2 = sys.space(t2);
        let holds = s2.lt(fx, fz) && s2.lt(fz, fy);
        let unique = [x, y, z].iter().all(|&e| sys.preimages(t, t2, sys.phi(t, t2, e)).len() == 1);
        return (holds, unique);
    }
    let s2 = sys.space(t2);
    let (xs, ys, zs) = (sys.preimages(t2, t, x), sys.preimages(t2, t, y), sys.preimages(t2, t, z));
    let holds = xs.iter().all(|&x2| {
        ys.iter().all(|&y2| !s2.lt(x2, y2) || zs.iter().any(|&z2| s2.lt(x2, z2) && s2.lt(z2, y2)))
    });
    let unique = xs.len() <= 1 && ys.len() <= 1 && zs.len() <= 1;
    (holds, unique)
}

pub fn dnt_report(sys: &DynSystem) -> DntReport {
    let n = sys.len();
    let mut interpolation_cases = Vec::new();
    let mut persistence_cases = Vec::new();
    let mut interp_fail = None;
    let mut unamb_fail = None;
    let mut persist_fail = None;
    for t in 0..n {
        let s = sys.space(t);
        let nonzero: Vec<Elem> = s.elems().filter(|&e| e != s.bottom()).collect();
        for &x in &nonzero {
            for &y in &nonzero {
                if !s.lt(x, y) {
                    continue;
                }
                let witnesses: Vec<usize> = (t + 1..n).filter(|&t1| interpolation_at(sys, t, t1, x, y, false)).collect();
                let unambiguous: Vec<usize> =
                    witnesses.iter().copied().filter(|&t1| interpolation_at(sys, t, t1, x, y, true)).collect();
                let endpoint_vacuous = t + 1 == n;
                if !endpoint_vacuous && witnesses.is_empty() && interp_fail.is_none() {
                    interp_fail = Some(format!("{} < {} has no later interpolating instant", sys.tag(t, x), sys.tag(t, y)));
                }
                if !endpoint_vacuous && unambiguous.is_empty() && unamb_fail.is_none() {
                    unamb_fail = Some(format!("{} < {} has no unambiguous interpolating instant", sys.tag(t, x), sys.tag(t, y)));
                }
                interpolation_cases.push(InterpolationCase { t, x, y, witnesses, unambiguous, endpoint_vacuous });
                for &z in &nonzero {
                    if !(s.lt(x, z) && s.lt(z, y)) {
                        continue;
                    }
                    let chain = [x, z, y];
                    let holds = |t2: usize| persistence_at(sys, t, t2, chain).0;
                    let unique = |t2: usize| persistence_at(sys, t, t2, chain).1;
                    let interval = match run_around(t, n, holds) {
                        Some((lo, hi)) => OpenInterval::around(lo, hi, n),
                        None => {
                            if persist_fail.is_none() {
                                persist_fail = Some(format!("{} < {} < {}", sys.tag(t, x), sys.tag(t, z), sys.tag(t, y)));
                            }
                            OpenInterval::around(t, t, n)
                        }
                    };
                    let (lo, hi) = run_around(t, n, unique).unwrap_or((t, t));
                    let one_sided = (0..t)
                        .filter(|&t2| sys.preimages(t2, t, x).is_empty() != sys.preimages(t2, t, y).is_empty())
                        .collect();
                    persistence_cases.push(PersistenceCase {
                        t,
                        chain,
                        interval,
                        unambiguity: OpenInterval::around(lo, hi, n),
                        one_sided,
                    });
                }
            }
        }
    }
    let endpoint_vacuous = interpolation_cases.iter().any(|c| c.endpoint_vacuous);
    DntReport {
        interpolation: Check::from_witness(interp_fail),
        interpolation_cases,
        persistence: Check::from_witness(persist_fail),
        persistence_cases,
        unambiguity: Check::from_witness(unamb_fail),
        endpoint_vacuous,
    }
}

// ---------------------------------------------------------------------------
// Observed truth

/// Registered statements `P(t0, t)`, evaluated on the pair `min ≤ max`.
pub const PREDICATES: &[&str] = &["shadow-is-DVT", "shadow-preserves-meet", "fiber-is-lattice", "temporally-pointed"];

fn canonical_predicate(id: &str) -> Option<&'static str> {
    match id {
        "shadow-preserves-∧̲" => Some("shadow-preserves-meet"),
        other => PREDICATES.iter().copied().find(|p| *p == other),
    }
}

/// The maximal open interval around `t0` on which `P(t0, ·)` holds.
pub fn observed_truth(sys: &DynSystem, predicate: &str, t0: usize) -> Result<Option<OpenInterval>, DynError> {
    let id = canonical_predicate(predicate).ok_or_else(|| DynError::UnknownPredicate(predicate.into()))?;
    let n = sys.len();
    let eval = |t: usize| evaluate_predicate(sys, id, t0, t);
    Ok(run_around(t0, n, eval).map(|(lo, hi)| OpenInterval::around(lo, hi, n)))
}

/// Decides one registered statement at the parameter pair `(t0, t)`.
pub fn evaluate_predicate(sys: &DynSystem, id: &str, t0: usize, t: usize) -> bool {
    let (a, b) = (t0.min(t), t0.max(t));
    match id {
        "shadow-is-DVT" => shadow_maps_ok(sys, a, b) && shadow_interpolates(sys, a, b),
        "shadow-preserves-meet" => shadow_preserves_meet(sys, a, b),
        "fiber-is-lattice" => sys.space(t).is_lattice(),
        "temporally-pointed" => temporal_points(sys, t).map(|r| r.temporally_pointed).unwrap_or(false),
        _ => false,
    }
}

fn shadow_preserves_meet(sys: &DynSystem, a: usize, b: usize) -> bool {
    let (sa, sb) = (sys.space(a), sys.space(b));
    let ids = sa.idempotents();
    ids.iter().all(|&x| {
        ids.iter().all(|&y| {
            sys.phi(a, b, shadow_meet(sa, x, y)) == shadow_meet(sb, sys.phi(a, b, x), sys.phi(a, b, y))
        })
    })
}

fn shadow_maps_ok(sys: &DynSystem, a: usize, b: usize) -> bool {
    let (sa, sb) = (sys.space(a), sys.space(b));
    let ids = sa.idempotents();
    sys.phi(a, b, sa.bottom()) == sb.bottom()
        && sys.phi(a, b, sa.top()) == sb.top()
        && ids.iter().all(|&x| sb.is_idempotent(sys.phi(a, b, x)))
        && ids.iter().all(|&x| {
            ids.iter().all(|&y| sys.phi(a, b, sa.join(x, y)) == sb.join(sys.phi(a, b, x), sys.phi(a, b, y)))
        })
        && shadow_preserves_meet(sys, a, b)
}

/// Interpolation with unique preimages inside the shadows, from `a` to `b`.
fn shadow_interpolates(sys: &DynSystem, a: usize, b: usize) -> bool {
    if a == b {
        return true;
    }
    let (sa, sb) = (sys.space(a), sys.space(b));
    let ids_a = sa.idempotents();
    let ids_b = sb.idempotents();
    ids_a.iter().all(|&x| {
        ids_a.iter().all(|&y| {
            if x == sa.bottom() || !sa.lt(x, y) {
                return true;
            }
            let (fx, fy) = (sys.phi(a, b, x), sys.phi(a, b, y));
            ids_b.iter().filter(|&&z1| sb.lt(fx, z1) && sb.lt(z1, fy)).all(|&z1| {
                ids_a.iter().filter(|&&z| sa.lt(x, z) && sa.lt(z, y) && sys.phi(a, b, z) == z1).count() == 1
            })
        })
    })
}

// ---------------------------------------------------------------------------
// Temporal points and the support interval

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TemporalKind {
    Future,
    Past,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TemporalPoint {
    pub t: usize,
    pub element: Elem,
    pub kind: TemporalKind,
    /// Every `(t', p_t')` realizing it.
    pub witnesses: Vec<(usize, Elem)>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ContinuumReport {
    /// The support interval exists and is unique.
    pub minimal_interval_unique: Check,
    pub stability: Check,
    pub orientation: Check,
    /// Cofinality of strictly moving members in every principal directed set.
    pub directed_forward: Check,
    /// Every principal directed set is hit cofinally from earlier instants.
    pub directed_backward: Check,
}

#[derive(Clone, Debug, Serialize)]
pub struct TemporalReport {
    pub t: usize,
    pub points: Vec<TemporalPoint>,
    pub temporally_pointed: bool,
    /// Chosen support interval.
    pub interval: ClosedInterval,
    /// All inclusion-minimal candidates.
    pub minimal_intervals: Vec<ClosedInterval>,
    pub continuum: ContinuumReport,
}

impl TemporalReport {
    /// Distinct temporal elements of `Λ_t`.
    pub fn elements(&self) -> BTreeSet<Elem> {
        self.points.iter().map(|p| p.element).collect()
    }
}

fn temporal_points_raw(sys: &DynSystem, t: usize) -> Vec<TemporalPoint> {
    let s = sys.space(t);
    let mut out = Vec::new();
    for x in s.elems().filter(|&x| x != s.bottom()) {
        let future: Vec<(usize, Elem)> = (t..sys.len())
            .filter_map(|t2| {
                let y = sys.phi(t, t2, x);
                is_point(sys.space(t2), y, sys.point_kind).then_some((t2, y))
            })
            .collect();
        let past: Vec<(usize, Elem)> = (0..=t)
            .flat_map(|t2| sys.points(t2).into_iter().filter(move |&p| sys.phi(t2, t, p) == x).map(move |p| (t2, p)))
            .collect();
        if !future.is_empty() {
            out.push(TemporalPoint { t, element: x, kind: TemporalKind::Future, witnesses: future });
        }
        if !past.is_empty() {
            out.push(TemporalPoint { t, element: x, kind: TemporalKind::Past, witnesses: past });
        }
    }
    out
}

fn minimal_intervals(sys: &DynSystem, t: usize, points: &[TemporalPoint]) -> Vec<ClosedInterval> {
    let mut elements: BTreeMap<Elem, Vec<usize>> = BTreeMap::new();
    for p in points {
        elements.entry(p.element).or_default().extend(p.witnesses.iter().map(|w| w.0));
    }
    let supports = |iv: &ClosedInterval| elements.values().all(|ws| ws.iter().any(|&w| iv.contains(w)));
    let candidates: Vec<ClosedInterval> = (0..=t)
        .flat_map(|lo| (t..sys.len()).map(move |hi| ClosedInterval::new(lo, hi)))
        .filter(|iv| supports(iv))
        .collect();
    let mut minimal: Vec<ClosedInterval> = candidates
        .iter()
        .copied()
        .filter(|iv| !candidates.iter().any(|other| other != iv && other.is_subset(iv)))
        .collect();
    minimal.sort();
    minimal
}

/// Temporal points at `t`, the support interval and the continuum checks.
pub fn temporal_points(sys: &DynSystem, t: usize) -> Result<TemporalReport, DynError> {
    let points = temporal_points_raw(sys, t);
    if points.is_empty() {
        return Err(DynError::NoSupportInterval(sys.timeline.label(t).into()));
    }
    let minimal = minimal_intervals(sys, t, &points);
    let interval = minimal[0];
    let s = sys.space(t);
    let temporal: BTreeSet<Elem> = points.iter().map(|p| p.element).collect();
    let temporally_pointed = s
        .elems()
        .filter(|&x| x != s.bottom())
        .all(|x| s.join_all(temporal.iter().copied().filter(|&p| s.leq(p, x))) == x);

    let unique = if minimal.len() == 1 {
        Check::ok()
    } else {
        Check::fail(format!("{} minimal intervals", minimal.len()))
    };
    let mut orientation = None;
    let n = sys.len();
    let intervals: Vec<Option<ClosedInterval>> = (0..n)
        .map(|u| {
            let pts = temporal_points_raw(sys, u);
            (!pts.is_empty()).then(|| minimal_intervals(sys, u, &pts)[0])
        })
        .collect();
    for u in 0..n {
        for v in u..n {
            if let (Some(a), Some(b)) = (intervals[u], intervals[v]) {
                if orientation.is_none() && !a.precedes(&b) {
                    orientation = Some(format!(
                        "I at {} = {a} does not precede I at {} = {b}",
                        sys.timeline.label(u),
                        sys.timeline.label(v)
                    ));
                }
            }
        }
    }
    let mut forward = None;
    let mut backward = None;
    for t2 in interval.members() {
        for x in s.elems() {
            let filter: Vec<Elem> = s.up(x).into_iter().collect();
            if t2 >= t {
                let moving: Vec<Elem> = filter
                    .iter()
                    .copied()
                    .filter(|&g| {
                        filter.iter().any(|&xi| s.lt(xi, g) && sys.space(t2).lt(sys.phi(t, t2, xi), sys.phi(t, t2, g)))
                    })
                    .collect();
                let cofinal = filter.iter().all(|&a| moving.iter().any(|&m| s.leq(m, a)));
                if !cofinal && forward.is_none() {
                    forward = Some(format!("↑{} towards {}", sys.tag(t, x), sys.timeline.label(t2)));
                }
            }
            if t2 <= t && sys.preimages(t2, t, x).is_empty() && backward.is_none() {
                backward = Some(format!("↑{} is not reached from {}", sys.tag(t, x), sys.timeline.label(t2)));
            }
        }
    }
    Ok(TemporalReport {
        t,
        points,
        temporally_pointed,
        interval,
        minimal_intervals: minimal,
        continuum: ContinuumReport {
            minimal_interval_unique: unique,
            // the singleton {t} is open, so the neighbourhood can always shrink to it
            stability: Check::ok(),
            orientation: Check::from_witness(orientation),
            directed_forward: Check::from_witness(forward),
            directed_backward: Check::from_witness(backward),
        },
    })
}

// ---------------------------------------------------------------------------
// Accessible strings

/// A family `x_t'` over `I_t`, zero outside its support.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct AccessibleString {
    pub anchor: usize,
    /// Component at every instant of the support interval, `lo` first.
    pub offset: usize,
    pub components: Vec<Elem>,
}

impl AccessibleString {
    pub fn component(&self, t: usize) -> Option<Elem> {
        t.checked_sub(self.offset).and_then(|i| self.components.get(i).copied())
    }

    /// Instants with nonzero components, given the bottoms of the fibres.
    pub fn support(&self, sys: &DynSystem) -> Vec<usize> {
        (self.offset..self.offset + self.components.len())
            .filter(|&u| self.components[u - self.offset] != sys.space(u).bottom())
            .collect()
    }

    pub fn value(&self, sys: &DynSystem, t: usize) -> Elem {
        self.component(t).unwrap_or_else(|| sys.space(t).bottom())
    }

    pub fn is_zero(&self, sys: &DynSystem) -> bool {
        self.support(sys).is_empty()
    }

    pub fn describe(&self, sys: &DynSystem) -> String {
        let parts: Vec<String> = (self.offset..self.offset + self.components.len())
            .map(|u| sys.tag(u, self.components[u - self.offset]))
            .collect();
        format!("({})", parts.join(", "))
    }

    /// Componentwise order on the common interval.
    pub fn leq(&self, other: &AccessibleString, sys: &DynSystem, interval: ClosedInterval) -> bool {
        interval.members().all(|u| sys.space(u).leq(self.value(sys, u), other.value(sys, u)))
    }
}

/// Builds the string over `interval` from values, keeping only the nonzero
/// run containing `t`. Returns the zero string if `values[t]` is zero.
fn trimmed(sys: &DynSystem, t: usize, interval: ClosedInterval, value: impl Fn(usize) -> Elem) -> AccessibleString {
    let nonzero = |u: usize| value(u) != sys.space(u).bottom();
    match run_around(t, interval.hi + 1, |u| u >= interval.lo && nonzero(u)) {
        Some((lo, hi)) => AccessibleString { anchor: t, offset: lo, components: (lo..=hi).map(&value).collect() },
        None => AccessibleString { anchor: t, offset: t, components: vec![] },
    }
}

pub fn is_accessible(sys: &DynSystem, x: &AccessibleString, interval: ClosedInterval) -> bool {
    if x.is_zero(sys) {
        return true;
    }
    let support = x.support(sys);
    let lo = x.offset;
    let hi = x.offset + x.components.len() - 1;
    support.len() == x.components.len()
        && interval.contains(lo)
        && interval.contains(hi)
        && (lo..=hi).contains(&x.anchor)
        && (lo..=hi).all(|a| (a..=hi).all(|b| sys.space(b).leq(sys.phi(a, b, x.value(sys, a)), x.value(sys, b))))
}

/// All `t`-accessible strings supported in `interval`; the zero string first.
pub fn accessible_strings(sys: &DynSystem, t: usize, interval: ClosedInterval) -> Vec<AccessibleString> {
    let mut out = vec![AccessibleString { anchor: t, offset: t, components: vec![] }];
    for lo in interval.lo..=t {
        for hi in t..=interval.hi {
            let choices: Vec<Vec<Elem>> = (lo..=hi)
                .map(|u| sys.space(u).elems().filter(|&e| e != sys.space(u).bottom()).collect())
                .collect();
            let mut current = Vec::new();
            extend_strings(sys, lo, &choices, &mut current, &mut |comps| {
                out.push(AccessibleString { anchor: t, offset: lo, components: comps.to_vec() });
            });
        }
    }
    out
}

fn extend_strings(
    sys: &DynSystem,
    lo: usize,
    choices: &[Vec<Elem>],
    current: &mut Vec<Elem>,
    emit: &mut impl FnMut(&[Elem]),
) {
    if current.len() == choices.len() {
        emit(current);
        return;
    }
    let b = lo + current.len();
    for &e in &choices[current.len()] {
        let ok = current.iter().enumerate().all(|(i, &prev)| sys.space(b).leq(sys.phi(lo + i, b, prev), e));
        if ok {
            current.push(e);
            extend_strings(sys, lo, choices, current, emit);
            current.pop();
        }
    }
}

/// A point `p_t'` of a nearby fibre.
pub type MomentPoint = (usize, Elem);

/// Evidence for `p_t' ∈ x`: the run `J1` and the trail `p_t''` along it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Membership {
    pub run: ClosedInterval,
    pub trail: Vec<(usize, Elem)>,
}

/// The membership clause read literally, searching all runs `J1 ⊆ sup(x)`
/// through `t'` and returning the longest one that works.
pub fn membership(sys: &DynSystem, p: MomentPoint, x: &AccessibleString) -> Option<Membership> {
    let (tp, pt) = p;
    let support = x.support(sys);
    if !support.contains(&tp) {
        return None;
    }
    let (slo, shi) = (support[0], support[support.len() - 1]);
    let mut best: Option<Membership> = None;
    for lo in slo..=tp {
        for hi in tp..=shi {
            let mut trail = Vec::new();
            let mut ok = true;
            for u in lo..=hi {
                let s = sys.space(u);
                let xu = x.value(sys, u);
                if u >= tp {
                    let image = sys.phi(tp, u, pt);
                    if !s.leq(image, xu) {
                        ok = false;
                        break;
                    }
                    trail.push((u, image));
                } else {
                    // a past representative over the hull of J1, t' and the anchor
                    let found = s
                        .elems()
                        .find(|&q| sys.phi(u, tp, q) == pt && s.leq(q, xu));
                    match found {
                        Some(q) => trail.push((u, q)),
                        None => {
                            ok = false;
                            break;
                        }
                    }
                }
            }
            if ok && best.as_ref().is_none_or(|b| b.run.hi - b.run.lo < hi - lo) {
                best = Some(Membership { run: ClosedInterval::new(lo, hi), trail });
            }
        }
    }
    best
}

// ---------------------------------------------------------------------------
// Moment spaces

#[derive(Clone, Debug, Serialize)]
pub struct ClosureReport {
    /// `U(x) ∩ U(y) = U(meet-string)` for all pairs.
    pub intersection_by_construction: Check,
    /// `U(x) ∪ U(y) = U(join-string)` for all pairs.
    pub union_by_construction: Check,
    /// The family `{U(x)}` itself is closed under both operations.
    pub family_closed: Check,
}

#[derive(Clone, Debug, Serialize)]
pub struct MomentSpace {
    pub anchor: usize,
    pub interval: ClosedInterval,
    pub points: Vec<MomentPoint>,
    #[serde(skip)]
    pub strings: Vec<AccessibleString>,
    /// `U_t(x)` per string, as indices into `points`.
    #[serde(skip)]
    pub string_opens: Vec<PointSet>,
    pub space: FiniteSpace,
    pub closure: ClosureReport,
}

impl MomentSpace {
    pub fn position(&self, p: MomentPoint) -> Option<usize> {
        self.points.iter().position(|&q| q == p)
    }

    /// Strings defining a given open, in enumeration order.
    pub fn representatives(&self, open: &PointSet) -> Vec<usize> {
        (0..self.strings.len()).filter(|&i| &self.string_opens[i] == open).collect()
    }
}

/// Points of nearby fibres in `interval` representing temporal points at `t`.
pub fn moment_points(sys: &DynSystem, t: usize, interval: ClosedInterval) -> Vec<MomentPoint> {
    let mut out = Vec::new();
    for u in interval.members() {
        for p in sys.points(u) {
            let represents = if u >= t {
                sys.space(t).elems().any(|x| sys.phi(t, u, x) == p)
            } else {
                sys.phi(u, t, p) != sys.space(t).bottom()
            };
            if represents {
                out.push((u, p));
            }
        }
    }
    out
}

pub fn open_of(sys: &DynSystem, points: &[MomentPoint], x: &AccessibleString) -> PointSet {
    points.iter().enumerate().filter(|(_, &p)| membership(sys, p, x).is_some()).map(|(i, _)| i).collect()
}

pub fn meet_string(sys: &DynSystem, t: usize, interval: ClosedInterval, x: &AccessibleString, y: &AccessibleString) -> AccessibleString {
    trimmed(sys, t, interval, |u| sys.space(u).meet(x.value(sys, u), y.value(sys, u)))
}

/// Componentwise join, pushed forward so that later components dominate the
/// images of earlier ones. The plain join can break accessibility when one
/// support ends before the other.
pub fn join_string(sys: &DynSystem, t: usize, interval: ClosedInterval, x: &AccessibleString, y: &AccessibleString) -> AccessibleString {
    let raw = trimmed(sys, t, interval, |u| sys.space(u).join(x.value(sys, u), y.value(sys, u)));
    let mut comps = raw.components.clone();
    for b in 0..comps.len() {
        for a in 0..b {
            let (ta, tb) = (raw.offset + a, raw.offset + b);
            comps[b] = sys.space(tb).join(comps[b], sys.phi(ta, tb, comps[a]));
        }
    }
    AccessibleString { components: comps, ..raw }
}

pub fn moment_space(sys: &DynSystem, t: usize) -> Result<MomentSpace, DynError> {
    let report = temporal_points(sys, t)?;
    let interval = report.interval;
    let points = moment_points(sys, t, interval);
    let strings = accessible_strings(sys, t, interval);
    let string_opens: Vec<PointSet> = strings.iter().map(|x| open_of(sys, &points, x)).collect();
    let family: BTreeSet<&PointSet> = string_opens.iter().collect();
    let mut inter = None;
    let mut union = None;
    let mut closed = None;
    for (i, x) in strings.iter().enumerate() {
        for (j, y) in strings.iter().enumerate().skip(i + 1) {
            let (ux, uy) = (&string_opens[i], &string_opens[j]);
            let cap: PointSet = ux.intersection(uy).copied().collect();
            let cup: PointSet = ux.union(uy).copied().collect();
            let w = meet_string(sys, t, interval, x, y);
            if inter.is_none() && (!is_accessible(sys, &w, interval) || open_of(sys, &points, &w) != cap) {
                inter = Some(format!("{} ∩ {}", x.describe(sys), y.describe(sys)));
            }
            let v = join_string(sys, t, interval, x, y);
            if union.is_none() && (!is_accessible(sys, &v, interval) || open_of(sys, &points, &v) != cup) {
                union = Some(format!("{} ∪ {}", x.describe(sys), y.describe(sys)));
            }
            if closed.is_none() && (!family.contains(&cap) || !family.contains(&cup)) {
                let which = if family.contains(&cap) { "union" } else { "intersection" };
                closed = Some(format!("{which} of {} and {} is not of the form U(x)", x.describe(sys), y.describe(sys)));
            }
        }
    }
    let names = points.iter().map(|&(u, p)| sys.tag(u, p)).collect();
    let space = FiniteSpace::generate(names, string_opens.clone(), DEFAULT_OPEN_CAP)?;
    Ok(MomentSpace {
        anchor: t,
        interval,
        points,
        strings,
        string_opens,
        space,
        closure: ClosureReport {
            intersection_by_construction: Check::from_witness(inter),
            union_by_construction: Check::from_witness(union),
            family_closed: Check::from_witness(closed),
        },
    })
}
