//! Γ-filtrations, spectral families, observables and their dynamical
//! counterparts on moment spaces.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::completion::{completion, filter_closure, is_point, CompletionError, PointKind};
use crate::dynamics::{is_accessible, moment_space, AccessibleString, DynError, DynSystem};
use crate::order::{shadow_meet, Elem, SkewTopology};
use crate::space::PointSet;
use crate::Check;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SpectralError {
    #[error("Γ chain is empty")]
    EmptyChain,
    #[error("Γ labels must strictly increase")]
    UnsortedChain,
    #[error("{levels} levels for {labels} Γ labels")]
    LevelCount { levels: usize, labels: usize },
    #[error("levels are not monotone: λ_{lo} = {lo_level} is not below λ_{hi} = {hi_level}")]
    NotMonotone { lo: i64, hi: i64, lo_level: String, hi_level: String },
    #[error("join of all levels is {0}, not 1")]
    JoinNotTop(String),
    #[error("unknown level `{0}`")]
    UnknownLevel(String),
    #[error("no level equals 1")]
    NotRightBounded,
    #[error("carrier of {0} elements exceeds the cap {1}")]
    CapExceeded(usize, usize),
    #[error("level string for γ = {0} is not accessible")]
    NotAccessible(i64),
    #[error(transparent)]
    Completion(#[from] CompletionError),
    #[error(transparent)]
    Dyn(#[from] DynError),
}

/// Strictly increasing integer labels.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct GammaChain(Vec<i64>);

impl GammaChain {
    pub fn new(labels: Vec<i64>) -> Result<GammaChain, SpectralError> {
        if labels.is_empty() {
            return Err(SpectralError::EmptyChain);
        }
        if labels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(SpectralError::UnsortedChain);
        }
        Ok(GammaChain(labels))
    }

    pub fn labels(&self) -> &[i64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// A Γ label or the sentinel `∞` above all of them.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum GammaValue {
    Finite(i64),
    Infinite,
}

impl fmt::Display for GammaValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GammaValue::Finite(g) => write!(f, "{g}"),
            GammaValue::Infinite => f.write_str("∞"),
        }
    }
}

impl Serialize for GammaValue {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            GammaValue::Finite(g) => s.serialize_i64(*g),
            GammaValue::Infinite => s.serialize_str("inf"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Filtration {
    pub base: SkewTopology,
    pub gamma: GammaChain,
    /// `λ_γ` in the order of the chain.
    pub levels: Vec<Elem>,
}

impl Filtration {
    pub fn new(base: SkewTopology, gamma: GammaChain, levels: Vec<Elem>) -> Result<Filtration, SpectralError> {
        if levels.len() != gamma.len() {
            return Err(SpectralError::LevelCount { levels: levels.len(), labels: gamma.len() });
        }
        Ok(Filtration { base, gamma, levels })
    }

    /// Builds from level labels.
    pub fn from_labels(base: SkewTopology, gamma: Vec<i64>, levels: &[&str]) -> Result<Filtration, SpectralError> {
        let levels = levels
            .iter()
            .map(|l| base.elem(l).map_err(|_| SpectralError::UnknownLevel(l.to_string())))
            .collect::<Result<Vec<_>, _>>()?;
        Filtration::new(base, GammaChain::new(gamma)?, levels)
    }

    pub fn level(&self, i: usize) -> Elem {
        self.levels[i]
    }

    pub fn pairs(&self) -> impl Iterator<Item = (i64, Elem)> + '_ {
        self.gamma.labels().iter().copied().zip(self.levels.iter().copied())
    }

    pub fn describe(&self) -> String {
        let parts: Vec<String> = self.pairs().map(|(g, l)| format!("λ_{g} = {}", self.base.label(l))).collect();
        parts.join(", ")
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct FiltrationReport {
    pub separated: bool,
    pub idempotent: bool,
    pub right_bounded: bool,
    pub left_bounded: bool,
    /// Meet of all levels.
    pub meet_of_levels: String,
    /// An indiscrete Γ forces idempotency; no finite chain with two or more
    /// labels is indiscrete.
    pub indiscrete_observation: String,
}

impl FiltrationReport {
    /// A separated filtration.
    pub fn is_spectral_family(&self) -> bool {
        self.separated
    }
}

pub fn validate_filtration(f: &Filtration) -> Result<FiltrationReport, SpectralError> {
    let b = &f.base;
    let labels = f.gamma.labels();
    for i in 0..f.levels.len() {
        for j in i + 1..f.levels.len() {
            if !b.leq(f.levels[i], f.levels[j]) {
                return Err(SpectralError::NotMonotone {
                    lo: labels[i],
                    hi: labels[j],
                    lo_level: b.label(f.levels[i]).into(),
                    hi_level: b.label(f.levels[j]).into(),
                });
            }
        }
    }
    let join = b.join_all(f.levels.iter().copied());
    if join != b.top() {
        return Err(SpectralError::JoinNotTop(b.label(join).into()));
    }
    let meet = b.meet_all(f.levels.iter().copied());
    let idempotent = f.levels.iter().all(|&l| b.is_idempotent(l));
    let indiscrete_observation = if f.gamma.len() == 1 {
        if idempotent {
            "single-label chain is indiscrete; family is idempotent".to_string()
        } else {
            "single-label chain is indiscrete but the family is not idempotent".to_string()
        }
    } else {
        "vacuous: a finite chain with several labels is not indiscrete".to_string()
    };
    Ok(FiltrationReport {
        separated: meet == b.bottom(),
        idempotent,
        right_bounded: f.levels.contains(&b.top()),
        left_bounded: f.levels.contains(&b.bottom()),
        meet_of_levels: b.label(meet).into(),
        indiscrete_observation,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct MeetLawReport {
    /// `λ_γ ∧ λ_τ = λ_τ ∧ λ_γ = λ_min(γ,τ)` for all `γ ≠ τ`.
    pub pairs: Check,
    /// `λ_γ ∧ λ_γ = λ_γ`: the same law on the diagonal, which is idempotency.
    pub diagonal: Check,
    /// For idempotent families: levels lie in the shadow and `∧̲` obeys the same law.
    pub shadow: Option<Check>,
}

pub fn prop_4_1(f: &Filtration) -> MeetLawReport {
    let b = &f.base;
    let labels = f.gamma.labels();
    let n = f.levels.len();
    let mut fail = None;
    let mut diagonal = None;
    let mut shadow_fail = None;
    let idempotent = f.levels.iter().all(|&l| b.is_idempotent(l));
    for i in 0..n {
        for j in 0..n {
            let (g, t) = (f.levels[i], f.levels[j]);
            let low = f.levels[i.min(j)];
            let holds = b.meet(g, t) == low && b.meet(t, g) == low;
            if i == j {
                if diagonal.is_none() && !holds {
                    diagonal = Some(format!("λ_{} is not idempotent", labels[i]));
                }
            } else if fail.is_none() && !holds {
                fail = Some(format!("γ = {}, τ = {}", labels[i], labels[j]));
            }
            if idempotent && shadow_fail.is_none() && shadow_meet(b, g, t) != low {
                shadow_fail = Some(format!("∧̲ at γ = {}, τ = {}", labels[i], labels[j]));
            }
        }
    }
    MeetLawReport {
        pairs: Check::from_witness(fail),
        diagonal: Check::from_witness(diagonal),
        shadow: idempotent.then(|| Check::from_witness(shadow_fail)),
    }
}

// ---------------------------------------------------------------------------
// Restriction below an element

#[derive(Clone, Debug, Serialize)]
pub struct RestrictedFamily {
    pub mu: String,
    /// `μ ∧ λ_γ`, as labels of the parent.
    pub levels: Vec<String>,
    /// `Λ(μ)` is closed under both operations.
    pub closed: bool,
    /// Monotone with top level `μ`.
    pub filtration: bool,
    pub separated: bool,
    /// `μ` is idempotent and commutes with every level.
    pub case_a: bool,
    /// Every `μ ∧ λ_γ` is idempotent.
    pub case_b: bool,
    /// Lattice bases must give a right-bounded filtration.
    pub corollary: Option<bool>,
}

/// Elements that are idempotent and commute with every level.
pub fn centralizers(f: &Filtration) -> Vec<Elem> {
    let b = &f.base;
    b.elems()
        .filter(|&m| b.is_idempotent(m) && f.levels.iter().all(|&l| b.meet(m, l) == b.meet(l, m)))
        .collect()
}

pub fn restrict_filtration(f: &Filtration, mu: Elem) -> Result<RestrictedFamily, SpectralError> {
    let b = &f.base;
    if !f.levels.contains(&b.top()) {
        return Err(SpectralError::NotRightBounded);
    }
    let levels: Vec<Elem> = f.levels.iter().map(|&l| b.meet(mu, l)).collect();
    let down: Vec<Elem> = b.down(mu).into_iter().collect();
    let restricted = b.restrict(&down);
    let closed = restricted.is_ok();
    let monotone = levels.windows(2).all(|w| b.leq(w[0], w[1]));
    let top_reached = b.join_all(levels.iter().copied()) == mu;
    let separated = b.meet_all(levels.iter().copied()) == b.bottom();
    let filtration = closed && monotone && top_reached;
    let case_a = b.is_idempotent(mu) && f.levels.iter().all(|&l| b.meet(mu, l) == b.meet(l, mu));
    let case_b = levels.iter().all(|&l| b.is_idempotent(l));
    let corollary = b.is_lattice().then_some(filtration && levels.last() == Some(&mu));
    Ok(RestrictedFamily {
        mu: b.label(mu).into(),
        levels: levels.iter().map(|&l| b.label(l).to_string()).collect(),
        closed,
        filtration,
        separated,
        case_a,
        case_b,
        corollary,
    })
}

// ---------------------------------------------------------------------------
// Observables

#[derive(Clone, Debug, Serialize)]
pub struct Observable {
    /// `σ(λ)` per element.
    pub values: Vec<GammaValue>,
    pub domain: Vec<Elem>,
    pub domain_is_everything: bool,
    /// `σ(λ ∧ μ) ≤ min` and `σ(λ ∨ μ) ≤ max` for all pairs.
    pub meet_inequality: Check,
    pub join_inequality: Check,
}

/// `σ(λ) = min{γ : λ ≤ λ_γ}`, for any family of levels.
pub fn observable(f: &Filtration) -> Observable {
    let b = &f.base;
    let values: Vec<GammaValue> = b
        .elems()
        .map(|x| {
            f.pairs()
                .find(|&(_, l)| b.leq(x, l))
                .map_or(GammaValue::Infinite, |(g, _)| GammaValue::Finite(g))
        })
        .collect();
    let domain: Vec<Elem> = b.elems().filter(|x| values[x.0] != GammaValue::Infinite).collect();
    let mut meet_w = None;
    let mut join_w = None;
    for x in b.elems() {
        for y in b.elems() {
            let (sx, sy) = (values[x.0], values[y.0]);
            if meet_w.is_none() && values[b.meet(x, y).0] > sx.min(sy) {
                meet_w = Some(format!("σ({} ∧ {})", b.label(x), b.label(y)));
            }
            if join_w.is_none() && values[b.join(x, y).0] > sx.max(sy) {
                join_w = Some(format!("σ({} ∨ {})", b.label(x), b.label(y)));
            }
        }
    }
    Observable {
        domain_is_everything: domain.len() == b.len(),
        values,
        domain,
        meet_inequality: Check::from_witness(meet_w),
        join_inequality: Check::from_witness(join_w),
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CompletedObservable {
    /// `σ̂([A])` per completion class.
    pub values: Vec<GammaValue>,
    /// `[A]_γ`, the class of the principal filter of `λ_γ`.
    pub levels: Vec<String>,
    /// The completed levels form a filtration of `C(Λ)`.
    pub is_filtration: bool,
    pub separated: bool,
    /// `[A]_γ ≤ [λ_γ]` for all `γ`.
    pub below_classes: bool,
    /// Some `[A]_γ < [λ_γ]` strictly.
    pub strict_somewhere: bool,
    /// `σ̂ ∘ canonical = σ`.
    pub extends_observable: bool,
}

pub fn observable_completion(f: &Filtration) -> Result<CompletedObservable, SpectralError> {
    let b = &f.base;
    let c = completion(b)?;
    let ct = &c.topology;
    let values: Vec<GammaValue> = ct
        .elems()
        .map(|a| {
            f.pairs()
                .find(|&(_, l)| c.filter(a).contains(l))
                .map_or(GammaValue::Infinite, |(g, _)| GammaValue::Finite(g))
        })
        .collect();
    let levels: Vec<Elem> = f
        .levels
        .iter()
        .map(|&l| c.class_of(&filter_closure(b, &[l]).expect("singletons are directed")).expect("principal"))
        .collect();
    let lifted = Filtration { base: ct.clone(), gamma: f.gamma.clone(), levels: levels.clone() };
    let report = validate_filtration(&lifted);
    let below_classes = f.levels.iter().zip(&levels).all(|(&l, &a)| ct.leq(a, c.canonical[l.0]));
    let strict_somewhere = f.levels.iter().zip(&levels).any(|(&l, &a)| ct.lt(a, c.canonical[l.0]));
    let sigma = observable(f);
    let extends_observable = b.elems().all(|x| values[c.canonical[x.0].0] == sigma.values[x.0]);
    Ok(CompletedObservable {
        values,
        levels: levels.iter().map(|&a| ct.label(a).to_string()).collect(),
        is_filtration: report.is_ok(),
        separated: report.map(|r| r.separated).unwrap_or(false),
        below_classes,
        strict_somewhere,
        extends_observable,
    })
}

// ---------------------------------------------------------------------------
// Γ-points and commutative sublattices

#[derive(Clone, Debug, Serialize)]
pub struct GammaPoint {
    /// Completion class of the level chain, labelled by its minimum.
    pub class: String,
    pub proper: bool,
    /// In `QSp`.
    pub minimal_point: bool,
    /// In `Sp`.
    pub irreducible_point: bool,
    /// In `SP` for irreducible points.
    pub strong_point: bool,
}

pub fn gamma_points(f: &Filtration) -> Result<GammaPoint, SpectralError> {
    let b = &f.base;
    let c = completion(b)?;
    let filter = filter_closure(b, &f.levels)?;
    let class = c.class_of(&filter).expect("finite filters are principal");
    let least = filter.minimum(b).expect("finite filters are principal");
    let minimal_point = is_point(b, least, PointKind::Minimal);
    let irreducible_point = is_point(b, least, PointKind::Irreducible);
    Ok(GammaPoint {
        class: c.topology.label(class).into(),
        proper: filter.is_proper(b),
        minimal_point,
        irreducible_point,
        strong_point: irreducible_point && c.strong_idempotents.contains(&class),
    })
}

pub const AB_DEFAULT_CAP: usize = 12;

/// Maximal subsets containing `0` and `1`, closed under both operations,
/// on which the restricted structure is a lattice.
pub fn abelian_sublattices(t: &SkewTopology, cap: usize) -> Result<Vec<Vec<Elem>>, SpectralError> {
    if t.len() > cap {
        return Err(SpectralError::CapExceeded(t.len(), cap));
    }
    let inner: Vec<Elem> = t.elems().filter(|&e| e != t.bottom() && e != t.top()).collect();
    let mut good: Vec<BTreeSet<Elem>> = Vec::new();
    for mask in 0u32..(1 << inner.len()) {
        let mut set: Vec<Elem> = vec![t.bottom(), t.top()];
        set.extend((0..inner.len()).filter(|i| mask >> i & 1 == 1).map(|i| inner[i]));
        if let Ok((sub, _)) = t.restrict(&set) {
            if sub.is_lattice() {
                good.push(set.into_iter().collect());
            }
        }
    }
    let maximal: Vec<Vec<Elem>> = good
        .iter()
        .filter(|s| !good.iter().any(|o| o != *s && s.is_subset(o)))
        .map(|s| s.iter().copied().collect())
        .collect();
    Ok(maximal)
}

/// Some member of `Ab(Λ)` contains every level.
pub fn family_in_abelian(f: &Filtration, ab: &[Vec<Elem>]) -> bool {
    ab.iter().any(|b| f.levels.iter().all(|l| b.contains(l)))
}

// ---------------------------------------------------------------------------
// Dynamical spectral families

#[derive(Clone, Debug, Serialize)]
pub struct InstantFamily {
    pub t: usize,
    /// Components of the level strings at this instant.
    pub levels: Vec<String>,
    /// Validation of the induced family in `Λ_t''`.
    pub validation: Result<FiltrationReport, String>,
    /// Points of `V_t(x_γ)` at this instant, per level.
    pub point_sets: Vec<PointSet>,
    /// The point sets form a separated filtration of the points here.
    pub point_family_spectral: Check,
}

#[derive(Clone, Debug, Serialize)]
pub struct DynamicalSpectral {
    pub t: usize,
    pub instants: Vec<InstantFamily>,
}

pub fn dynamical_spectral(
    sys: &DynSystem,
    t: usize,
    gamma: &GammaChain,
    levels: &[AccessibleString],
) -> Result<DynamicalSpectral, SpectralError> {
    if levels.len() != gamma.len() {
        return Err(SpectralError::LevelCount { levels: levels.len(), labels: gamma.len() });
    }
    let m = moment_space(sys, t)?;
    for (g, x) in gamma.labels().iter().zip(levels) {
        if !is_accessible(sys, x, m.interval) {
            return Err(SpectralError::NotAccessible(*g));
        }
    }
    for i in 1..levels.len() {
        if !levels[i - 1].leq(&levels[i], sys, m.interval) {
            let (a, b) = (levels[i - 1].value(sys, t), levels[i].value(sys, t));
            return Err(SpectralError::NotMonotone {
                lo: gamma.labels()[i - 1],
                hi: gamma.labels()[i],
                lo_level: sys.space(t).label(a).into(),
                hi_level: sys.space(t).label(b).into(),
            });
        }
    }
    let opens: Vec<PointSet> = levels.iter().map(|x| crate::dynamics::open_of(sys, &m.points, x)).collect();
    let mut instants = Vec::new();
    for u in m.interval.members() {
        let s = sys.space(u);
        let comps: Vec<Elem> = levels.iter().map(|x| x.value(sys, u)).collect();
        let f = Filtration { base: s.clone(), gamma: gamma.clone(), levels: comps.clone() };
        let validation = validate_filtration(&f).map_err(|e| e.to_string());
        let here: PointSet = (0..m.points.len()).filter(|&i| m.points[i].0 == u).collect();
        let point_sets: Vec<PointSet> = opens.iter().map(|o| o.intersection(&here).copied().collect()).collect();
        let mut witness = None;
        if point_sets.windows(2).any(|w| !w[0].is_subset(&w[1])) {
            witness = Some("point sets are not nested".to_string());
        } else if point_sets.last().is_some_and(|l| l != &here) {
            witness = Some("largest point set misses points".to_string());
        } else if point_sets.first().is_some_and(|f| !f.is_empty()) {
            witness = Some(format!("smallest point set {:?} is not empty", point_sets[0]));
        }
        instants.push(InstantFamily {
            t: u,
            levels: comps.iter().map(|&l| s.label(l).to_string()).collect(),
            validation,
            point_sets,
            point_family_spectral: Check::from_witness(witness),
        });
    }
    Ok(DynamicalSpectral { t, instants })
}
