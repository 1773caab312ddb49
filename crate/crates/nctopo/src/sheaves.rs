//! Presheaves of finite-dimensional rational vector spaces, colimits, stalks
//! and the string presheaf on a moment space.
//!
//! A linear map `V → W` is a `dim W × dim V` matrix acting on columns.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;
use thiserror::Error;

use crate::completion::{is_point, PointKind};
use crate::dynamics::{
    is_accessible, meet_string, membership, moment_space, AccessibleString, DynError, DynSystem, MomentPoint,
    MomentSpace,
};
use crate::linalg::LinalgError;
use crate::order::{Elem, SkewTopology};
use crate::space::PointSet;
use crate::{Check, QMatrix, Rational};

#[derive(Debug, Error, Clone)]
pub enum SheafError {
    #[error("no restriction {0} given and none can be composed")]
    MissingRestriction(String),
    #[error("map {name} is {rows}x{cols}, expected {want_rows}x{want_cols}")]
    Shape { name: String, rows: usize, cols: usize, want_rows: usize, want_cols: usize },
    #[error("expected {want} dimensions, got {got}")]
    DimensionCount { want: usize, got: usize },
    #[error("square does not commute: {description}")]
    NonCommutingSquare { description: String, defect: QMatrix },
    #[error("`{0}` is not a point")]
    NotAPoint(String),
    #[error("inconsistent diagram: {0}")]
    InconsistentDiagram(String),
    #[error("precondition failed: {0}")]
    PreconditionFailed(String),
    #[error(transparent)]
    Dyn(#[from] DynError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

fn check_shape(name: impl FnOnce() -> String, m: &QMatrix, rows: usize, cols: usize) -> Result<(), SheafError> {
    if m.rows() != rows || m.cols() != cols {
        return Err(SheafError::Shape { name: name(), rows: m.rows(), cols: m.cols(), want_rows: rows, want_cols: cols });
    }
    Ok(())
}

fn mul(a: &QMatrix, b: &QMatrix) -> QMatrix {
    a.mul(b).expect("shapes are checked on construction")
}

fn is_invertible(m: &QMatrix) -> bool {
    m.rows() == m.cols() && m.inverse().is_ok()
}

// ---------------------------------------------------------------------------
// Presheaves on a skew topology

/// Sections on every element, `Γ(0) = 0`, and restrictions `ρ_{λ,μ}` for
/// `μ ≤ λ`.
#[derive(Clone, Debug)]
pub struct Presheaf {
    pub base: SkewTopology,
    dims: Vec<usize>,
    restrictions: BTreeMap<(Elem, Elem), QMatrix>,
}

impl Presheaf {
    /// Missing restrictions are composed through intermediate elements.
    pub fn new(base: SkewTopology, dims: Vec<usize>, given: Vec<((Elem, Elem), QMatrix)>) -> Result<Presheaf, SheafError> {
        if dims.len() != base.len() {
            return Err(SheafError::DimensionCount { want: base.len(), got: dims.len() });
        }
        let mut dims = dims;
        dims[base.bottom().0] = 0;
        let mut restrictions = BTreeMap::new();
        for ((from, to), m) in given {
            if !base.leq(to, from) {
                return Err(SheafError::MissingRestriction(format!(
                    "{} -> {} (not below)",
                    base.label(from),
                    base.label(to)
                )));
            }
            check_shape(|| format!("ρ {} -> {}", base.label(from), base.label(to)), &m, dims[to.0], dims[from.0])?;
            restrictions.insert((from, to), m);
        }
        for x in base.elems() {
            restrictions.entry((x, x)).or_insert_with(|| QMatrix::identity(dims[x.0]));
            restrictions.insert((x, base.bottom()), QMatrix::zeros(0, dims[x.0]));
        }
        let mut pairs: Vec<(Elem, Elem)> =
            base.elems().flat_map(|a| base.elems().map(move |b| (a, b))).filter(|&(a, b)| base.lt(b, a)).collect();
        pairs.sort_by_key(|&(a, b)| base.elems().filter(|&z| base.leq(b, z) && base.leq(z, a)).count());
        for (a, b) in pairs {
            if restrictions.contains_key(&(a, b)) {
                continue;
            }
            let mid = base
                .elems()
                .filter(|&z| base.lt(b, z) && base.lt(z, a))
                .find(|&z| restrictions.contains_key(&(a, z)) && restrictions.contains_key(&(z, b)));
            let Some(z) = mid else {
                return Err(SheafError::MissingRestriction(format!("{} -> {}", base.label(a), base.label(b))));
            };
            let m = mul(&restrictions[&(z, b)], &restrictions[&(a, z)]);
            restrictions.insert((a, b), m);
        }
        Ok(Presheaf { base, dims, restrictions })
    }

    /// Dimension `d` everywhere except the bottom, identity restrictions.
    pub fn constant(base: &SkewTopology, d: usize) -> Presheaf {
        let dims = base.elems().map(|_| d).collect();
        let given = base
            .elems()
            .flat_map(|a| base.elems().map(move |b| (a, b)))
            .filter(|&(a, b)| base.lt(b, a) && b != base.bottom())
            .map(|p| (p, QMatrix::identity(d)))
            .collect();
        Presheaf::new(base.clone(), dims, given).expect("constant presheaf")
    }

    pub fn zero(base: &SkewTopology) -> Presheaf {
        Presheaf::constant(base, 0)
    }

    pub fn dim(&self, x: Elem) -> usize {
        self.dims[x.0]
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    /// `ρ_{from, to}` for `to ≤ from`.
    pub fn restriction(&self, from: Elem, to: Elem) -> &QMatrix {
        &self.restrictions[&(from, to)]
    }

    /// Restrictions along covering pairs, enough to rebuild the presheaf.
    pub fn cover_restrictions(&self) -> Vec<((Elem, Elem), QMatrix)> {
        let b = &self.base;
        b.elems()
            .flat_map(|a| b.covers(a).into_iter().map(move |c| (c, a)))
            .filter(|&(_, lower)| lower != b.bottom())
            .map(|p| (p, self.restrictions[&p].clone()))
            .collect()
    }
}

/// Identity and composition of restrictions.
pub fn validate_presheaf(p: &Presheaf) -> Result<(), SheafError> {
    let b = &p.base;
    for x in b.elems() {
        let id = QMatrix::identity(p.dim(x));
        let r = p.restriction(x, x);
        if r != &id {
            return Err(SheafError::NonCommutingSquare {
                description: format!("ρ at {} is not the identity", b.label(x)),
                defect: r.sub(&id)?,
            });
        }
    }
    for l in b.elems() {
        for m in b.elems().filter(|&m| b.leq(m, l)) {
            for n in b.elems().filter(|&n| b.leq(n, m)) {
                let via = mul(p.restriction(m, n), p.restriction(l, m));
                let direct = p.restriction(l, n);
                if &via != direct {
                    return Err(SheafError::NonCommutingSquare {
                        description: format!("{} -> {} -> {}", b.label(l), b.label(m), b.label(n)),
                        defect: via.sub(direct)?,
                    });
                }
            }
        }
    }
    Ok(())
}

/// Every cover `λ = ∨ μ_i` by strictly smaller nonzero elements has an
/// injective joint restriction.
pub fn is_separated(p: &Presheaf) -> Check {
    let b = &p.base;
    for l in b.elems().filter(|&l| l != b.bottom() && p.dim(l) > 0) {
        let below: Vec<Elem> = b.elems().filter(|&m| m != b.bottom() && b.lt(m, l)).collect();
        if below.len() > 16 {
            continue;
        }
        for mask in 1u32..(1 << below.len()) {
            let cover: Vec<Elem> = (0..below.len()).filter(|i| mask >> i & 1 == 1).map(|i| below[i]).collect();
            if b.join_all(cover.iter().copied()) != l {
                continue;
            }
            let mut joint = QMatrix::zeros(0, p.dim(l));
            for &m in &cover {
                joint = joint.vstack(p.restriction(l, m)).expect("same source");
            }
            if joint.rank() < p.dim(l) {
                let names: Vec<&str> = cover.iter().map(|&m| b.label(m)).collect();
                return Check::fail(format!("{} = {}", b.label(l), names.join(" ∨ ")));
            }
        }
    }
    Check::ok()
}

// ---------------------------------------------------------------------------
// Colimits

#[derive(Clone, Debug)]
pub struct Diagram {
    pub dims: Vec<usize>,
    /// `(i, j, f)` with `f: V_i → V_j`.
    pub arrows: Vec<(usize, usize, QMatrix)>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Colimit {
    pub dim: usize,
    /// `ι_i: V_i → colim`.
    pub cocone: Vec<QMatrix>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ColimitCheck {
    pub maximum: usize,
    pub dims_agree: bool,
    /// `ι_max` is invertible.
    pub isomorphism: bool,
    /// `ι_i = ι_max ∘ f_{i,max}` for all `i`.
    pub factors: bool,
}

impl ColimitCheck {
    pub fn holds(&self) -> bool {
        self.dims_agree && self.isomorphism && self.factors
    }
}

impl Diagram {
    /// Composite maps along every path, failing if two paths disagree.
    pub fn composites(&self) -> Result<BTreeMap<(usize, usize), QMatrix>, SheafError> {
        let n = self.dims.len();
        for (i, j, f) in &self.arrows {
            check_shape(|| format!("arrow {i} -> {j}"), f, self.dims[*j], self.dims[*i])?;
        }
        let mut known: BTreeMap<(usize, usize), QMatrix> = BTreeMap::new();
        for i in 0..n {
            known.insert((i, i), QMatrix::identity(self.dims[i]));
        }
        let mut changed = true;
        while changed {
            changed = false;
            let snapshot: Vec<((usize, usize), QMatrix)> = known.iter().map(|(k, v)| (*k, v.clone())).collect();
            for ((a, b), g) in &snapshot {
                for (i, j, f) in &self.arrows {
                    if i != b {
                        continue;
                    }
                    let h = mul(f, g);
                    match known.get(&(*a, *j)) {
                        Some(existing) if existing != &h => {
                            return Err(SheafError::InconsistentDiagram(format!("two paths {a} -> {j} disagree")));
                        }
                        Some(_) => {}
                        None => {
                            known.insert((*a, *j), h);
                            changed = true;
                        }
                    }
                }
            }
        }
        Ok(known)
    }

    /// An index every other index maps to.
    pub fn maximum(&self, composites: &BTreeMap<(usize, usize), QMatrix>) -> Option<usize> {
        let n = self.dims.len();
        (0..n).find(|&m| (0..n).all(|i| composites.contains_key(&(i, m))))
    }
}

/// `⊕ V_i` modulo `ι_i v − ι_j f v`, by exact row reduction.
pub fn colimit(d: &Diagram) -> Result<Colimit, SheafError> {
    d.composites()?;
    let offsets: Vec<usize> = d.dims.iter().scan(0, |acc, &x| {
        let o = *acc;
        *acc += x;
        Some(o)
    }).collect();
    let total: usize = d.dims.iter().sum();
    let mut relations = Vec::new();
    for (i, j, f) in &d.arrows {
        for k in 0..d.dims[*i] {
            let mut row = vec![Rational::from_integer(0.into()); total];
            row[offsets[*i] + k] += Rational::from_integer(1.into());
            for r in 0..d.dims[*j] {
                row[offsets[*j] + r] -= f.get(r, k).clone();
            }
            relations.push(row);
        }
    }
    let rel = QMatrix::from_rows(relations, total).rref();
    let free: Vec<usize> = (0..total).filter(|c| !rel.pivots.contains(c)).collect();
    let projection = QMatrix::from_fn(free.len(), total, |r, c| {
        let n = free[r];
        match rel.pivots.iter().position(|&p| p == c) {
            Some(row) => -rel.matrix.get(row, n).clone(),
            None => {
                if c == n {
                    Rational::from_integer(1.into())
                } else {
                    Rational::from_integer(0.into())
                }
            }
        }
    });
    let cocone = (0..d.dims.len()).map(|i| projection.column_block(offsets[i], offsets[i] + d.dims[i])).collect();
    Ok(Colimit { dim: free.len(), cocone })
}

/// Compares the quotient with evaluation at the maximum index.
pub fn check_against_maximum(d: &Diagram, c: &Colimit) -> Result<ColimitCheck, SheafError> {
    let comps = d.composites()?;
    let m = d.maximum(&comps).ok_or_else(|| SheafError::InconsistentDiagram("index has no maximum".into()))?;
    let iota = &c.cocone[m];
    let factors = (0..d.dims.len()).all(|i| mul(iota, &comps[&(i, m)]) == c.cocone[i]);
    Ok(ColimitCheck { maximum: m, dims_agree: c.dim == d.dims[m], isomorphism: is_invertible(iota), factors })
}

// ---------------------------------------------------------------------------
// Stalks

#[derive(Clone, Debug, Serialize)]
pub struct Stalk {
    pub point: Elem,
    /// Elements above the point, indexing the diagram.
    pub index: Vec<Elem>,
    pub colimit: Colimit,
    pub check: ColimitCheck,
    pub dim: usize,
}

/// The diagram of restrictions over `{x : p ≤ x}`.
pub fn stalk_diagram(p: &Presheaf, point: Elem) -> (Vec<Elem>, Diagram) {
    let b = &p.base;
    let index: Vec<Elem> = b.up(point).into_iter().collect();
    let dims = index.iter().map(|&x| p.dim(x)).collect();
    let mut arrows = Vec::new();
    for (i, &l) in index.iter().enumerate() {
        for (j, &m) in index.iter().enumerate() {
            if b.lt(m, l) {
                arrows.push((i, j, p.restriction(l, m).clone()));
            }
        }
    }
    (index, Diagram { dims, arrows })
}

pub fn stalk(p: &Presheaf, point: Elem, kind: PointKind) -> Result<Stalk, SheafError> {
    if !is_point(&p.base, point, kind) {
        return Err(SheafError::NotAPoint(p.base.label(point).into()));
    }
    let (index, diagram) = stalk_diagram(p, point);
    let colimit = colimit(&diagram)?;
    let check = check_against_maximum(&diagram, &colimit)?;
    let dim = colimit.dim;
    Ok(Stalk { point, index, colimit, check, dim })
}

// ---------------------------------------------------------------------------
// Dynamical presheaves

#[derive(Clone, Debug)]
pub struct DynPresheaf {
    pub system: DynSystem,
    pub fibres: Vec<Presheaf>,
    comparisons: BTreeMap<(usize, usize, Elem), QMatrix>,
}

impl DynPresheaf {
    /// `given` holds `φ_ab(λ): Γ_a(λ) → Γ_b(φ_ab(λ))`; gaps are composed
    /// through consecutive instants.
    pub fn new(
        system: DynSystem,
        fibres: Vec<Presheaf>,
        given: Vec<((usize, usize, Elem), QMatrix)>,
    ) -> Result<DynPresheaf, SheafError> {
        let n = system.len();
        if fibres.len() != n {
            return Err(SheafError::DimensionCount { want: n, got: fibres.len() });
        }
        let mut comparisons = BTreeMap::new();
        for ((a, b, x), m) in given {
            let y = system.phi(a, b, x);
            check_shape(
                || format!("φ {}->{} at {}", system.timeline.label(a), system.timeline.label(b), system.space(a).label(x)),
                &m,
                fibres[b].dim(y),
                fibres[a].dim(x),
            )?;
            comparisons.insert((a, b, x), m);
        }
        for t in 0..n {
            for x in system.space(t).elems() {
                comparisons.entry((t, t, x)).or_insert_with(|| QMatrix::identity(fibres[t].dim(x)));
            }
        }
        for a in 0..n {
            for x in system.space(a).elems() {
                let bottom = system.space(a).bottom();
                for b in a + 1..n {
                    if x == bottom {
                        comparisons.insert((a, b, x), QMatrix::zeros(0, 0));
                        continue;
                    }
                    if comparisons.contains_key(&(a, b, x)) {
                        continue;
                    }
                    let mid = system.phi(a, b - 1, x);
                    let (Some(first), Some(step)) = (comparisons.get(&(a, b - 1, x)), comparisons.get(&(b - 1, b, mid)))
                    else {
                        return Err(SheafError::MissingRestriction(format!(
                            "φ {}->{} at {}",
                            system.timeline.label(a),
                            system.timeline.label(b),
                            system.space(a).label(x)
                        )));
                    };
                    let m = mul(step, first);
                    comparisons.insert((a, b, x), m);
                }
            }
        }
        Ok(DynPresheaf { system, fibres, comparisons })
    }

    /// Constant fibres of dimension `d` with identity comparisons away from 0.
    pub fn constant(system: &DynSystem, d: usize) -> DynPresheaf {
        let fibres: Vec<Presheaf> = system.spaces.iter().map(|s| Presheaf::constant(s, d)).collect();
        let mut given = Vec::new();
        for a in 0..system.len().saturating_sub(1) {
            let (sa, sb) = (system.space(a), system.space(a + 1));
            for x in sa.elems().filter(|&x| x != sa.bottom()) {
                let y = system.phi(a, a + 1, x);
                let m = if y == sb.bottom() { QMatrix::zeros(0, d) } else { QMatrix::identity(d) };
                given.push(((a, a + 1, x), m));
            }
        }
        DynPresheaf::new(system.clone(), fibres, given).expect("constant dynamical presheaf")
    }

    pub fn comparison(&self, a: usize, b: usize, x: Elem) -> &QMatrix {
        &self.comparisons[&(a, b, x)]
    }

    /// Comparisons between consecutive instants, enough to rebuild.
    pub fn step_comparisons(&self) -> Vec<((usize, usize, Elem), QMatrix)> {
        self.comparisons
            .iter()
            .filter(|((a, b, x), _)| *b == *a + 1 && *x != self.system.space(*a).bottom())
            .map(|(k, v)| (*k, v.clone()))
            .collect()
    }

    /// `Γ_{t'}` is zero on every element.
    pub fn is_zero(&self) -> bool {
        self.fibres.iter().all(|f| f.dims().iter().all(|&d| d == 0))
    }
}

/// Fibrewise functoriality, commuting squares, identities and composition.
pub fn validate_dyn_presheaf(dp: &DynPresheaf) -> Result<(), SheafError> {
    for f in &dp.fibres {
        validate_presheaf(f)?;
    }
    let sys = &dp.system;
    let n = sys.len();
    let label = |t: usize| sys.timeline.label(t).to_string();
    for a in 0..n {
        let sa = sys.space(a);
        for x in sa.elems() {
            let id = QMatrix::identity(dp.fibres[a].dim(x));
            if dp.comparison(a, a, x) != &id {
                return Err(SheafError::NonCommutingSquare {
                    description: format!("φ at {} on {} is not the identity", label(a), sa.label(x)),
                    defect: dp.comparison(a, a, x).sub(&id)?,
                });
            }
        }
        for b in a..n {
            let sb = sys.space(b);
            for l in sa.elems() {
                for m in sa.elems().filter(|&m| sa.leq(m, l)) {
                    let (fl, fm) = (sys.phi(a, b, l), sys.phi(a, b, m));
                    let left = mul(dp.fibres[b].restriction(fl, fm), dp.comparison(a, b, l));
                    let right = mul(dp.comparison(a, b, m), dp.fibres[a].restriction(l, m));
                    if left != right {
                        return Err(SheafError::NonCommutingSquare {
                            description: format!(
                                "{} -> {} over {} ≥ {} ({} ≥ {})",
                                label(a),
                                label(b),
                                sa.label(l),
                                sa.label(m),
                                sb.label(fl),
                                sb.label(fm)
                            ),
                            defect: left.sub(&right)?,
                        });
                    }
                }
            }
            for c in b..n {
                for x in sa.elems() {
                    let via = mul(dp.comparison(b, c, sys.phi(a, b, x)), dp.comparison(a, b, x));
                    let direct = dp.comparison(a, c, x);
                    if &via != direct {
                        return Err(SheafError::NonCommutingSquare {
                            description: format!("φ {} -> {} -> {} at {}", label(a), label(b), label(c), sa.label(x)),
                            defect: via.sub(direct)?,
                        });
                    }
                }
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// String sections

/// Compatible strings over the support of one accessible string.
#[derive(Clone, Debug, Serialize)]
pub struct StringSections {
    pub support: Vec<usize>,
    /// Offset of each support component in the stacked coordinate vector.
    pub offsets: Vec<usize>,
    pub total: usize,
    /// Basis of compatible strings, one per column.
    pub basis: QMatrix,
}

impl StringSections {
    pub fn dim(&self) -> usize {
        self.basis.cols()
    }

    fn block(&self, t: usize) -> Option<(usize, usize)> {
        let i = self.support.iter().position(|&u| u == t)?;
        let end = self.offsets.get(i + 1).copied().unwrap_or(self.total);
        Some((self.offsets[i], end))
    }

    /// Component at instant `t` of every basis section.
    pub fn component(&self, t: usize) -> Option<QMatrix> {
        self.block(t).map(|(lo, hi)| self.basis.row_block(lo, hi))
    }
}

/// Solution space of `ρ(γ_b) = φ_ab(γ_a)` over all `a < b` in the support.
pub fn string_sections(dp: &DynPresheaf, x: &AccessibleString) -> StringSections {
    let sys = &dp.system;
    let support = x.support(sys);
    let mut offsets = Vec::new();
    let mut total = 0;
    for &u in &support {
        offsets.push(total);
        total += dp.fibres[u].dim(x.value(sys, u));
    }
    let mut rows: Vec<Vec<Rational>> = Vec::new();
    for (i, &a) in support.iter().enumerate() {
        for (j, &b) in support.iter().enumerate().skip(i + 1) {
            let (xa, xb) = (x.value(sys, a), x.value(sys, b));
            let target = sys.phi(a, b, xa);
            let rho = dp.fibres[b].restriction(xb, target);
            let phi = dp.comparison(a, b, xa);
            for r in 0..rho.rows() {
                let mut row = vec![Rational::from_integer(0.into()); total];
                for c in 0..rho.cols() {
                    row[offsets[j] + c] += rho.get(r, c).clone();
                }
                for c in 0..phi.cols() {
                    row[offsets[i] + c] -= phi.get(r, c).clone();
                }
                rows.push(row);
            }
        }
    }
    let system = QMatrix::from_rows(rows, total);
    let basis = system.nullspace().transpose();
    StringSections { support, offsets, total, basis }
}

/// Componentwise restriction from the sections over `from` to those over
/// `to`, in section coordinates. Needs `to ≤ from` on the support of `to`.
pub fn restrict_sections(
    dp: &DynPresheaf,
    from: &AccessibleString,
    from_sec: &StringSections,
    to: &AccessibleString,
    to_sec: &StringSections,
) -> Option<QMatrix> {
    let sys = &dp.system;
    let mut stacked = QMatrix::zeros(0, from_sec.dim());
    for &u in &to_sec.support {
        let (fu, tu) = (from.value(sys, u), to.value(sys, u));
        if !sys.space(u).leq(tu, fu) {
            return None;
        }
        let comp = from_sec.component(u)?;
        stacked = stacked.vstack(&mul(dp.fibres[u].restriction(fu, tu), &comp)).ok()?;
    }
    to_sec.basis.solve_matrix(&stacked)
}

// ---------------------------------------------------------------------------
// The string presheaf on a moment space

#[derive(Clone, Debug, Serialize)]
pub struct MomentPresheaf {
    pub moment: MomentSpace,
    /// Distinct nonempty opens of the form `U_t(x)`.
    pub opens: Vec<PointSet>,
    /// Chosen representative string per open.
    pub representative: Vec<usize>,
    pub sections: Vec<StringSections>,
    /// Opens whose representatives have section spaces of different dimension.
    pub representatives_disagree: Vec<PointSet>,
    /// Strings with nonzero support, with their section spaces.
    #[serde(skip)]
    pub string_sections: BTreeMap<usize, StringSections>,
}

impl MomentPresheaf {
    pub fn open_index(&self, u: &PointSet) -> Option<usize> {
        self.opens.iter().position(|o| o == u)
    }

    pub fn dim(&self, u: usize) -> usize {
        self.sections[u].dim()
    }

    fn string(&self, u: usize) -> &AccessibleString {
        &self.moment.strings[self.representative[u]]
    }

    /// `ρ_{U,V}` for `V ⊆ U`, in section coordinates.
    pub fn restriction(&self, dp: &DynPresheaf, u: usize, v: usize) -> Result<QMatrix, SheafError> {
        let (y, x) = (self.string(u), self.string(v));
        let (ys, xs) = (&self.sections[u], &self.sections[v]);
        if let Some(m) = restrict_sections(dp, y, ys, x, xs) {
            return Ok(m);
        }
        let sys = &dp.system;
        let w = meet_string(sys, self.moment.anchor, self.moment.interval, y, x);
        let ws = string_sections(dp, &w);
        let to_w = restrict_sections(dp, y, ys, &w, &ws);
        let back = restrict_sections(dp, x, xs, &w, &ws).filter(is_invertible);
        match (to_w, back) {
            (Some(a), Some(b)) => Ok(mul(&b.inverse()?, &a)),
            _ => Err(SheafError::InconsistentDiagram(format!(
                "no restriction from {} to {}",
                y.describe(sys),
                x.describe(sys)
            ))),
        }
    }

    /// Smallest open of the family containing point `q`.
    pub fn minimal_open(&self, q: usize) -> Option<usize> {
        let containing: Vec<usize> = (0..self.opens.len()).filter(|&u| self.opens[u].contains(&q)).collect();
        containing.iter().copied().find(|&m| containing.iter().all(|&u| self.opens[m].is_subset(&self.opens[u])))
    }
}

pub fn moment_presheaf(dp: &DynPresheaf, t: usize) -> Result<MomentPresheaf, SheafError> {
    let moment = moment_space(&dp.system, t)?;
    let sys = &dp.system;
    let mut groups: BTreeMap<PointSet, Vec<usize>> = BTreeMap::new();
    let mut string_sections_map = BTreeMap::new();
    for (i, x) in moment.strings.iter().enumerate() {
        if x.is_zero(sys) {
            continue;
        }
        string_sections_map.insert(i, string_sections(dp, x));
        let u = &moment.string_opens[i];
        if !u.is_empty() {
            groups.entry(u.clone()).or_default().push(i);
        }
    }
    let mut opens: Vec<PointSet> = groups.keys().cloned().collect();
    opens.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
    let mut representative = Vec::new();
    let mut sections = Vec::new();
    let mut disagree = Vec::new();
    for u in &opens {
        let reps = &groups[u];
        let dims: BTreeSet<usize> = reps.iter().map(|i| string_sections_map[i].dim()).collect();
        if dims.len() > 1 {
            disagree.push(u.clone());
        }
        // the componentwise join of the representatives, when it is one of them
        let join = reps.iter().skip(1).fold(moment.strings[reps[0]].clone(), |acc, &i| {
            crate::dynamics::join_string(sys, t, moment.interval, &acc, &moment.strings[i])
        });
        let chosen = reps
            .iter()
            .copied()
            .find(|&i| moment.strings[i] == join && is_accessible(sys, &join, moment.interval))
            .unwrap_or(*reps.last().expect("groups are nonempty"));
        representative.push(chosen);
        sections.push(string_sections_map[&chosen].clone());
    }
    Ok(MomentPresheaf {
        moment,
        opens,
        representative,
        sections,
        representatives_disagree: disagree,
        string_sections: string_sections_map,
    })
}

/// Joint restriction to every cover by smaller opens of the family is injective.
pub fn moment_separated(dp: &DynPresheaf, mp: &MomentPresheaf) -> Result<Check, SheafError> {
    for u in 0..mp.opens.len() {
        if mp.dim(u) == 0 {
            continue;
        }
        let inside: Vec<usize> = (0..mp.opens.len()).filter(|&v| v != u && mp.opens[v].is_subset(&mp.opens[u])).collect();
        if inside.len() > 16 {
            continue;
        }
        let maps: Vec<QMatrix> = inside.iter().map(|&v| mp.restriction(dp, u, v)).collect::<Result<_, _>>()?;
        for mask in 1u32..(1 << inside.len()) {
            let members: Vec<usize> = (0..inside.len()).filter(|i| mask >> i & 1 == 1).collect();
            let cover: PointSet = members.iter().flat_map(|&i| mp.opens[inside[i]].iter().copied()).collect();
            if cover != mp.opens[u] {
                continue;
            }
            let mut joint = QMatrix::zeros(0, mp.dim(u));
            for &i in &members {
                joint = joint.vstack(&maps[i])?;
            }
            if joint.rank() < mp.dim(u) {
                return Ok(Check::fail(format!("open {:?} by {} smaller opens", mp.opens[u], members.len())));
            }
        }
    }
    Ok(Check::ok())
}

// ---------------------------------------------------------------------------
// Sheafification on the finite space

/// The stalk at a moment point, computed as a colimit over the family opens
/// containing it and compared with the value on the smallest one.
#[derive(Clone, Debug, Serialize)]
pub struct MomentStalk {
    pub point: usize,
    /// Family opens containing the point.
    pub index: Vec<usize>,
    pub minimal_open: usize,
    pub colimit: Colimit,
    pub check: ColimitCheck,
}

pub fn moment_stalk(dp: &DynPresheaf, mp: &MomentPresheaf, q: usize) -> Result<MomentStalk, SheafError> {
    let index: Vec<usize> = (0..mp.opens.len()).filter(|&u| mp.opens[u].contains(&q)).collect();
    let minimal_open = mp
        .minimal_open(q)
        .ok_or_else(|| SheafError::InconsistentDiagram(format!("no smallest open around point {q}")))?;
    let dims = index.iter().map(|&u| mp.dim(u)).collect();
    let mut arrows = Vec::new();
    for (i, &u) in index.iter().enumerate() {
        for (j, &v) in index.iter().enumerate() {
            if u != v && mp.opens[v].is_subset(&mp.opens[u]) {
                arrows.push((i, j, mp.restriction(dp, u, v)?));
            }
        }
    }
    let diagram = Diagram { dims, arrows };
    let colimit = colimit(&diagram)?;
    let check = check_against_maximum(&diagram, &colimit)?;
    Ok(MomentStalk { point: q, index, minimal_open, colimit, check })
}

#[derive(Clone, Debug, Serialize)]
pub struct Sheafification {
    /// All opens of the generated topology.
    pub opens: Vec<PointSet>,
    pub stalk_dims: Vec<usize>,
    /// Basis of compatible germ families per open, columns in the stacked
    /// stalk coordinates of its points.
    #[serde(skip)]
    pub sections: Vec<QMatrix>,
    pub dims: Vec<usize>,
    /// Kernel dimension of `P(U) → aP(U)` for each family open.
    pub canonical_kernel: Vec<(PointSet, usize)>,
    pub identity_axiom: Check,
    pub gluing_axiom: Check,
}

impl Sheafification {
    pub fn canonical_injective(&self) -> bool {
        self.canonical_kernel.iter().all(|(_, k)| *k == 0)
    }
}

const COVER_OPEN_LIMIT: usize = 14;

pub fn sheafify(dp: &DynPresheaf, mp: &MomentPresheaf) -> Result<Sheafification, SheafError> {
    let space = &mp.moment.space;
    let npts = mp.moment.points.len();
    let minimal: Vec<usize> = (0..npts)
        .map(|q| mp.minimal_open(q).ok_or_else(|| SheafError::InconsistentDiagram(format!("point {q} lies in no open"))))
        .collect::<Result<_, _>>()?;
    let stalk_dims: Vec<usize> = minimal.iter().map(|&u| mp.dim(u)).collect();
    // germ maps E_q → E_r for r in the minimal neighbourhood of q
    let mut germ: BTreeMap<(usize, usize), QMatrix> = BTreeMap::new();
    for q in 0..npts {
        for &r in &mp.opens[minimal[q]] {
            germ.insert((q, r), mp.restriction(dp, minimal[q], minimal[r])?);
        }
    }
    let layout = |w: &PointSet| -> (Vec<usize>, Vec<usize>, usize) {
        let pts: Vec<usize> = w.iter().copied().collect();
        let mut offs = Vec::new();
        let mut total = 0;
        for &q in &pts {
            offs.push(total);
            total += stalk_dims[q];
        }
        (pts, offs, total)
    };
    let mut sections = Vec::new();
    let mut dims = Vec::new();
    for w in &space.opens {
        let (pts, offs, total) = layout(w);
        let mut rows: Vec<Vec<Rational>> = Vec::new();
        for (i, &q) in pts.iter().enumerate() {
            for &r in &mp.opens[minimal[q]] {
                if r == q {
                    continue;
                }
                let j = pts.iter().position(|&p| p == r).expect("opens contain minimal neighbourhoods");
                let g = &germ[&(q, r)];
                for a in 0..g.rows() {
                    let mut row = vec![Rational::from_integer(0.into()); total];
                    for c in 0..g.cols() {
                        row[offs[i] + c] += g.get(a, c).clone();
                    }
                    row[offs[j] + a] -= Rational::from_integer(1.into());
                    rows.push(row);
                }
            }
        }
        let basis = QMatrix::from_rows(rows, total).nullspace().transpose();
        dims.push(basis.cols());
        sections.push(basis);
    }
    let open_pos = |w: &PointSet| space.opens.iter().position(|o| o == w).expect("family opens are opens");

    let mut canonical_kernel = Vec::new();
    for u in 0..mp.opens.len() {
        let w = &mp.opens[u];
        let (pts, _, _) = layout(w);
        let mut stacked = QMatrix::zeros(0, mp.dim(u));
        for &q in &pts {
            stacked = stacked.vstack(&mp.restriction(dp, u, minimal[q])?)?;
        }
        canonical_kernel.push((w.clone(), mp.dim(u) - stacked.rank()));
    }

    let mut identity = None;
    let mut gluing = None;
    // projection of aP(W) onto the coordinates of W' ⊆ W
    let project = |w: &PointSet, basis: &QMatrix, sub: &PointSet| -> QMatrix {
        let (pts, offs, _) = layout(w);
        let mut out = QMatrix::zeros(0, basis.cols());
        for (i, &q) in pts.iter().enumerate() {
            if sub.contains(&q) {
                out = out.vstack(&basis.row_block(offs[i], offs[i] + stalk_dims[q])).expect("same width");
            }
        }
        out
    };
    for (wi, w) in space.opens.iter().enumerate() {
        if w.is_empty() {
            continue;
        }
        let inside: Vec<usize> =
            (0..space.opens.len()).filter(|&v| v != wi && !space.opens[v].is_empty() && space.opens[v].is_subset(w)).collect();
        let covers: Vec<Vec<usize>> = if inside.len() <= COVER_OPEN_LIMIT {
            (1u32..(1 << inside.len()))
                .map(|mask| (0..inside.len()).filter(|i| mask >> i & 1 == 1).map(|i| inside[i]).collect::<Vec<_>>())
                .filter(|c| c.iter().flat_map(|&v| space.opens[v].iter().copied()).collect::<PointSet>() == *w)
                .collect()
        } else {
            let nbhd: BTreeSet<usize> = w.iter().map(|&q| open_pos(&space.neighbourhood(q))).filter(|&v| v != wi).collect();
            vec![nbhd.into_iter().collect()]
        };
        for cover in covers {
            let mut joint = QMatrix::zeros(0, dims[wi]);
            for &v in &cover {
                joint = joint.vstack(&project(w, &sections[wi], &space.opens[v]))?;
            }
            if identity.is_none() && joint.rank() < dims[wi] {
                identity = Some(format!("open {w:?}"));
            }
            // compatible families: coordinates c_i in each aP(W_i) agreeing on overlaps
            let widths: Vec<usize> = cover.iter().map(|&v| dims[v]).collect();
            let total: usize = widths.iter().sum();
            let starts: Vec<usize> = widths.iter().scan(0, |a, &x| {
                let o = *a;
                *a += x;
                Some(o)
            }).collect();
            let mut rows: Vec<Vec<Rational>> = Vec::new();
            for (i, &vi) in cover.iter().enumerate() {
                for (j, &vj) in cover.iter().enumerate().skip(i + 1) {
                    let overlap: PointSet = space.opens[vi].intersection(&space.opens[vj]).copied().collect();
                    if overlap.is_empty() {
                        continue;
                    }
                    let pi = project(&space.opens[vi], &sections[vi], &overlap);
                    let pj = project(&space.opens[vj], &sections[vj], &overlap);
                    for r in 0..pi.rows() {
                        let mut row = vec![Rational::from_integer(0.into()); total];
                        for c in 0..pi.cols() {
                            row[starts[i] + c] += pi.get(r, c).clone();
                        }
                        for c in 0..pj.cols() {
                            row[starts[j] + c] -= pj.get(r, c).clone();
                        }
                        rows.push(row);
                    }
                }
            }
            let compatible = total - QMatrix::from_rows(rows, total).rank();
            if gluing.is_none() && compatible != dims[wi] {
                gluing = Some(format!("open {w:?}: {compatible} compatible families, {} sections", dims[wi]));
            }
        }
    }
    Ok(Sheafification {
        opens: space.opens.clone(),
        stalk_dims,
        sections,
        dims,
        canonical_kernel,
        identity_axiom: Check::from_witness(identity),
        gluing_axiom: Check::from_witness(gluing),
    })
}

// ---------------------------------------------------------------------------
// Local temporal flabbiness

#[derive(Clone, Debug, Serialize)]
pub struct LtfReport {
    pub t: usize,
    pub holds: bool,
    /// String, point and the first section that no smaller string carries.
    pub witness: Option<String>,
    /// Number of (string, point) configurations examined.
    pub cases: usize,
}

/// For every accessible `x`, point `p_t' ∈ x` and section over `x_t'`, some
/// accessible `y ≤ x` containing the point carries a string through the
/// restricted section. A single `y` has to serve the whole section space,
/// since a vector space is never a finite union of proper subspaces.
pub fn check_ltf(dp: &DynPresheaf, t: usize) -> Result<LtfReport, SheafError> {
    let mp = moment_presheaf(dp, t)?;
    let m = &mp.moment;
    let sys = &dp.system;
    let mut cases = 0;
    for x in &m.strings {
        if x.is_zero(sys) {
            continue;
        }
        for (qi, &(tp, p)) in m.points.iter().enumerate() {
            if membership(sys, (tp, p), x).is_none() {
                continue;
            }
            let xt = x.value(sys, tp);
            let d = dp.fibres[tp].dim(xt);
            if d == 0 {
                continue;
            }
            cases += 1;
            let mut carried_by_some = vec![false; d];
            let mut found = false;
            for (yi, y) in m.strings.iter().enumerate() {
                if y.is_zero(sys) || !m.string_opens[yi].contains(&qi) || !y.leq(x, sys, m.interval) {
                    continue;
                }
                let ysec = &mp.string_sections[&yi];
                let comp = ysec.component(tp).expect("the point lies on the support");
                let restricted = dp.fibres[tp].restriction(xt, y.value(sys, tp));
                let span = comp.transpose();
                let mut all = true;
                for (k, carried) in carried_by_some.iter_mut().enumerate() {
                    let col = restricted.column(k);
                    let ok = span.row_space_contains(&QMatrix::from_rows(vec![col], restricted.rows()));
                    *carried |= ok;
                    all &= ok;
                }
                if all {
                    found = true;
                    break;
                }
            }
            if !found {
                let k = carried_by_some.iter().position(|c| !c);
                let section = match k {
                    Some(k) => format!("basis section {k}"),
                    None => "the section space (no single smaller string)".into(),
                };
                let point = format!("{}@{}", sys.space(tp).label(p), sys.timeline.label(tp));
                return Ok(LtfReport {
                    t,
                    holds: false,
                    witness: Some(format!("x = {}, point {point}, {section} over {}", x.describe(sys), sys.space(tp).label(xt))),
                    cases,
                });
            }
        }
    }
    Ok(LtfReport { t, holds: true, witness: None, cases })
}

// ---------------------------------------------------------------------------
// Stalk identification

#[derive(Clone, Debug, Serialize)]
pub struct PointIdentification {
    pub point: MomentPoint,
    pub label: String,
    pub moment_stalk_dim: usize,
    pub fibre_stalk_dim: usize,
    /// `π_{t'}` from the moment stalk to the fibre stalk.
    pub pi: QMatrix,
    pub invertible: bool,
    /// Both colimits agree with evaluation at their maximum index.
    pub colimits_agree: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct StalkIdentification {
    pub t: usize,
    pub ltf: LtfReport,
    pub fibres_separated: bool,
    pub moment_separated: Check,
    pub points: Vec<PointIdentification>,
}

impl StalkIdentification {
    pub fn all_invertible(&self) -> bool {
        self.points.iter().all(|p| p.invertible)
    }
}

/// Computes both stalks at every moment point and the comparison map between
/// them. Refuses to run unless the presheaf is flabby at `t`.
pub fn verify_theorem_3_4(dp: &DynPresheaf, t: usize) -> Result<StalkIdentification, SheafError> {
    let ltf = check_ltf(dp, t)?;
    if !ltf.holds {
        return Err(SheafError::PreconditionFailed(format!(
            "not locally temporally flabby: {}",
            ltf.witness.clone().unwrap_or_default()
        )));
    }
    let mp = moment_presheaf(dp, t)?;
    let sys = &dp.system;
    let mut points = Vec::new();
    for (qi, &(tp, p)) in mp.moment.points.iter().enumerate() {
        let ms = moment_stalk(dp, &mp, qi)?;
        let fs = stalk(&dp.fibres[tp], p, sys.point_kind)?;
        let u = ms.minimal_open;
        let x = mp.string(u);
        let comp = mp.sections[u].component(tp).expect("moment points lie on the support");
        let pi = mul(dp.fibres[tp].restriction(x.value(sys, tp), p), &comp);
        points.push(PointIdentification {
            point: (tp, p),
            label: format!("{}@{}", sys.space(tp).label(p), sys.timeline.label(tp)),
            moment_stalk_dim: ms.colimit.dim,
            fibre_stalk_dim: fs.dim,
            invertible: is_invertible(&pi),
            pi,
            colimits_agree: ms.check.holds() && fs.check.holds(),
        });
    }
    let fibres_separated = dp.fibres.iter().all(|f| is_separated(f).holds);
    let moment_separated = moment_separated(dp, &mp)?;
    Ok(StalkIdentification { t, ltf, fibres_separated, moment_separated, points })
}
