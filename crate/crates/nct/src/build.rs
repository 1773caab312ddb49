//! Resolving a parsed document into engine objects.

use std::collections::BTreeMap;

use nctopo::completion::PointKind;
use nctopo::dynamics::{DynSystem, TimeLine};
use nctopo::hilbert::{OperatorSpec, RationalSubspace};
use nctopo::order::order_closure;
use nctopo::sheaves::{DynPresheaf, Presheaf};
use nctopo::spectral::{Filtration, GammaChain};
use nctopo::{Elem, QMatrix, SkewTopology};
use thiserror::Error;

use crate::model::{Block, BlockBody, FiltrationDef, HilbertDef, MatrixLit, ModelDocument, Over, PosetDef, PresheafDef, SyntaxError, SystemDef, TableDef};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FrontendError {
    #[error(transparent)]
    Syntax(#[from] SyntaxError),
    #[error("block `{block}` (line {line}): unknown reference `{name}`")]
    UnknownReference { block: String, line: usize, name: String },
    #[error("block `{block}` (line {line}): no unique {op} for {a}, {b}; give the entry explicitly")]
    AmbiguousDefaultTable { block: String, line: usize, op: &'static str, a: String, b: String },
    #[error("block `{block}` (line {line}): duplicate name")]
    DuplicateName { block: String, line: usize },
    #[error("block `{block}` (line {line}): {message}")]
    Invalid { block: String, line: usize, message: String },
}

/// A fully resolved document.
#[derive(Clone, Debug, Default)]
pub struct Model {
    pub posets: BTreeMap<String, SkewTopology>,
    pub systems: BTreeMap<String, DynSystem>,
    pub presheaves: BTreeMap<String, Presheaf>,
    pub dyn_presheaves: BTreeMap<String, DynPresheaf>,
    pub filtrations: BTreeMap<String, Filtration>,
    pub hilbert: BTreeMap<String, HilbertModel>,
    /// Block names in document order with their kinds.
    pub order: Vec<(String, &'static str)>,
}

#[derive(Clone, Debug)]
pub struct HilbertModel {
    pub dim: usize,
    pub lines: Vec<RationalSubspace>,
    pub operator: Option<OperatorSpec>,
}

struct Ctx<'a> {
    block: &'a Block,
}

impl Ctx<'_> {
    fn invalid(&self, message: impl ToString) -> FrontendError {
        FrontendError::Invalid { block: self.block.name.clone(), line: self.block.line, message: message.to_string() }
    }

    fn unknown(&self, name: &str) -> FrontendError {
        FrontendError::UnknownReference { block: self.block.name.clone(), line: self.block.line, name: name.to_string() }
    }
}

fn elem(ctx: &Ctx, t: &SkewTopology, label: &str) -> Result<Elem, FrontendError> {
    t.elem(label).map_err(|_| ctx.unknown(label))
}

/// Unique greatest lower (`lower`) or least upper bound in `leq`.
fn bound(leq: &[Vec<bool>], a: usize, b: usize, lower: bool) -> Option<usize> {
    let n = leq.len();
    let rel = |x: usize, y: usize| if lower { leq[x][y] } else { leq[y][x] };
    let common: Vec<usize> = (0..n).filter(|&z| rel(z, a) && rel(z, b)).collect();
    let best: Vec<usize> = common.iter().copied().filter(|&z| common.iter().all(|&w| rel(w, z))).collect();
    (best.len() == 1).then(|| best[0])
}

fn table(ctx: &Ctx, p: &PosetDef, leq: &[Vec<bool>], t: &TableDef, op: &'static str) -> Result<Vec<Vec<usize>>, FrontendError> {
    let n = p.elements.len();
    let index = |l: &str| p.elements.iter().position(|e| e == l).ok_or_else(|| ctx.unknown(l));
    let mut given: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for (a, b, c) in &t.rows {
        given.insert((index(a)?, index(b)?), index(c)?);
    }
    let mut out = vec![vec![0; n]; n];
    for a in 0..n {
        for b in 0..n {
            out[a][b] = match given.get(&(a, b)) {
                Some(&c) => c,
                None if t.default => bound(leq, a, b, op == "meet").ok_or_else(|| FrontendError::AmbiguousDefaultTable {
                    block: ctx.block.name.clone(),
                    line: ctx.block.line,
                    op,
                    a: p.elements[a].clone(),
                    b: p.elements[b].clone(),
                })?,
                None => {
                    return Err(ctx.invalid(format!(
                        "{op} entry for {}, {} is missing and `{op}: default` is not set",
                        p.elements[a], p.elements[b]
                    )))
                }
            };
        }
    }
    Ok(out)
}

fn poset(ctx: &Ctx, p: &PosetDef) -> Result<SkewTopology, FrontendError> {
    let index = |l: &str| p.elements.iter().position(|e| e == l).ok_or_else(|| ctx.unknown(l));
    let mut pairs = Vec::new();
    for (a, b) in &p.order {
        pairs.push((index(a)?, index(b)?));
    }
    let leq = order_closure(p.elements.len(), &pairs);
    let meet = table(ctx, p, &leq, &p.meet, "meet")?;
    let join = table(ctx, p, &leq, &p.join, "join")?;
    let t = SkewTopology::new(p.elements.clone(), leq, meet, join).map_err(|e| ctx.invalid(e))?;
    for (want, got, what) in [(&p.bottom, t.bottom(), "bottom"), (&p.top, t.top(), "top")] {
        if let Some(w) = want {
            if elem(ctx, &t, w)? != got {
                return Err(ctx.invalid(format!("declared {what} `{w}` is not the {what} of the order")));
            }
        }
    }
    Ok(t)
}

fn system(ctx: &Ctx, s: &SystemDef, m: &Model) -> Result<DynSystem, FrontendError> {
    let line = TimeLine::new(s.times.clone()).map_err(|e| ctx.invalid(e))?;
    let spaces: Vec<SkewTopology> =
        s.spaces.iter().map(|n| m.posets.get(n).cloned().ok_or_else(|| ctx.unknown(n))).collect::<Result<_, _>>()?;
    if spaces.len() != line.len() {
        return Err(ctx.invalid(format!("{} spaces for {} instants", spaces.len(), line.len())));
    }
    let mut given = Vec::new();
    for map in &s.maps {
        let a = line.index(&map.from).map_err(|_| ctx.unknown(&map.from))?;
        let b = line.index(&map.to).map_err(|_| ctx.unknown(&map.to))?;
        let mut values = vec![None; spaces[a].len()];
        for (x, y) in &map.pairs {
            values[elem(ctx, &spaces[a], x)?.0] = Some(elem(ctx, &spaces[b], y)?);
        }
        let values: Vec<Elem> = values
            .into_iter()
            .enumerate()
            .map(|(i, v)| v.ok_or_else(|| ctx.invalid(format!("map {}->{} misses {}", map.from, map.to, spaces[a].label(Elem(i))))))
            .collect::<Result<_, _>>()?;
        given.push(((a, b), values));
    }
    DynSystem::new(line, spaces, given, s.points.unwrap_or(PointKind::Minimal)).map_err(|e| ctx.invalid(e))
}

fn matrix(ctx: &Ctx, m: &MatrixLit, rows: usize, cols: usize, what: &str) -> Result<QMatrix, FrontendError> {
    if m.rows.is_empty() && (rows == 0 || cols == 0) {
        return Ok(QMatrix::zeros(rows, cols));
    }
    let width = m.rows.first().map_or(0, |r| r.len());
    if m.rows.len() != rows || width != cols {
        return Err(ctx.invalid(format!("{what} is {}x{width}, expected {rows}x{cols}", m.rows.len())));
    }
    Ok(QMatrix::from_rows(m.rows.clone(), cols))
}

fn static_presheaf(ctx: &Ctx, p: &PresheafDef, base: &SkewTopology) -> Result<Presheaf, FrontendError> {
    let mut dims = vec![p.constant.unwrap_or(0); base.len()];
    for (e, d) in &p.dims {
        dims[elem(ctx, base, e)?.0] = *d;
    }
    dims[base.bottom().0] = 0;
    let mut given = Vec::new();
    for (a, b, m) in &p.restricts {
        let (x, y) = (elem(ctx, base, a)?, elem(ctx, base, b)?);
        given.push(((x, y), matrix(ctx, m, dims[y.0], dims[x.0], &format!("restriction {a}->{b}"))?));
    }
    // Unlisted covers between equal dimensions restrict by the identity.
    for y in base.elems() {
        for x in base.covers(y) {
            let listed = given.iter().any(|((a, b), _)| *a == x && *b == y);
            if !listed && y != base.bottom() && dims[x.0] == dims[y.0] {
                given.push(((x, y), QMatrix::identity(dims[x.0])));
            }
        }
    }
    Presheaf::new(base.clone(), dims, given).map_err(|e| ctx.invalid(e))
}

fn dyn_presheaf(ctx: &Ctx, p: &PresheafDef, sys: &DynSystem, m: &Model) -> Result<DynPresheaf, FrontendError> {
    let mut fibres: Vec<Option<Presheaf>> = sys.spaces.iter().map(|s| p.constant.map(|d| Presheaf::constant(s, d))).collect();
    for (t, name) in &p.fibres {
        let i = sys.timeline.index(t).map_err(|_| ctx.unknown(t))?;
        let f = m.presheaves.get(name).ok_or_else(|| ctx.unknown(name))?;
        if f.base.labels() != sys.space(i).labels() {
            return Err(ctx.invalid(format!("fibre {name} is not over the space at {t}")));
        }
        fibres[i] = Some(f.clone());
    }
    let fibres: Vec<Presheaf> = fibres
        .into_iter()
        .enumerate()
        .map(|(i, f)| f.ok_or_else(|| ctx.invalid(format!("no fibre at {}", sys.timeline.label(i)))))
        .collect::<Result<_, _>>()?;
    let mut given: BTreeMap<(usize, usize, Elem), QMatrix> = BTreeMap::new();
    for a in 0..sys.len().saturating_sub(1) {
        let (sa, sb) = (sys.space(a), sys.space(a + 1));
        for x in sa.elems().filter(|&x| x != sa.bottom()) {
            let y = sys.phi(a, a + 1, x);
            let (dx, dy) = (fibres[a].dim(x), fibres[a + 1].dim(y));
            let id = if dx == dy && y != sb.bottom() { QMatrix::identity(dx) } else { QMatrix::zeros(dy, dx) };
            given.insert((a, a + 1, x), id);
        }
    }
    for (ta, tb, xl, lit) in &p.compares {
        let a = sys.timeline.index(ta).map_err(|_| ctx.unknown(ta))?;
        let b = sys.timeline.index(tb).map_err(|_| ctx.unknown(tb))?;
        let x = elem(ctx, sys.space(a), xl)?;
        let y = sys.phi(a, b, x);
        let mat = matrix(ctx, lit, fibres[b].dim(y), fibres[a].dim(x), &format!("comparison {ta}->{tb} at {xl}"))?;
        given.insert((a, b, x), mat);
    }
    DynPresheaf::new(sys.clone(), fibres, given.into_iter().collect()).map_err(|e| ctx.invalid(e))
}

fn filtration(ctx: &Ctx, f: &FiltrationDef, m: &Model) -> Result<Filtration, FrontendError> {
    let base = m.posets.get(&f.base).ok_or_else(|| ctx.unknown(&f.base))?;
    let gamma = GammaChain::new(f.levels.iter().map(|(g, _)| *g).collect()).map_err(|e| ctx.invalid(e))?;
    let levels = f.levels.iter().map(|(_, l)| elem(ctx, base, l)).collect::<Result<_, _>>()?;
    Filtration::new(base.clone(), gamma, levels).map_err(|e| ctx.invalid(e))
}

fn hilbert(ctx: &Ctx, h: &HilbertDef) -> Result<HilbertModel, FrontendError> {
    let lines = h
        .lines
        .iter()
        .map(|v| {
            if v.len() != h.dim {
                return Err(ctx.invalid(format!("line of length {} in dimension {}", v.len(), h.dim)));
            }
            let l = RationalSubspace::line(v.clone());
            if l.rank() == 0 {
                return Err(ctx.invalid("zero vector does not span a line"));
            }
            Ok(l)
        })
        .collect::<Result<_, _>>()?;
    let operator = match &h.operator {
        None => None,
        Some(lit) => {
            let mat = matrix(ctx, lit, h.dim, h.dim, "operator")?;
            let op = match &h.eigenvalues {
                Some(v) => OperatorSpec::with_eigenvalues(mat, v.clone()),
                None => OperatorSpec::new(mat),
            };
            Some(op.map_err(|e| ctx.invalid(e))?)
        }
    };
    Ok(HilbertModel { dim: h.dim, lines, operator })
}

/// Resolves names: posets first, then systems, static presheaves, dynamical
/// presheaves, filtrations and subspace blocks.
pub fn build_model(doc: &ModelDocument) -> Result<Model, FrontendError> {
    let mut m = Model::default();
    let mut seen = std::collections::BTreeSet::new();
    for b in &doc.blocks {
        if !seen.insert(b.name.clone()) {
            return Err(FrontendError::DuplicateName { block: b.name.clone(), line: b.line });
        }
        m.order.push((b.name.clone(), b.body.kind()));
    }
    for b in &doc.blocks {
        if let BlockBody::Poset(p) = &b.body {
            let t = poset(&Ctx { block: b }, p)?;
            m.posets.insert(b.name.clone(), t);
        }
    }
    for b in &doc.blocks {
        if let BlockBody::System(s) = &b.body {
            let sys = system(&Ctx { block: b }, s, &m)?;
            m.systems.insert(b.name.clone(), sys);
        }
    }
    for b in &doc.blocks {
        if let BlockBody::Presheaf(p) = &b.body {
            if let Over::Base(name) = &p.over {
                let ctx = Ctx { block: b };
                let base = m.posets.get(name).ok_or_else(|| ctx.unknown(name))?.clone();
                let psh = static_presheaf(&ctx, p, &base)?;
                m.presheaves.insert(b.name.clone(), psh);
            }
        }
    }
    for b in &doc.blocks {
        let ctx = Ctx { block: b };
        match &b.body {
            BlockBody::Presheaf(p) => {
                if let Over::System(name) = &p.over {
                    let sys = m.systems.get(name).ok_or_else(|| ctx.unknown(name))?.clone();
                    let dp = dyn_presheaf(&ctx, p, &sys, &m)?;
                    m.dyn_presheaves.insert(b.name.clone(), dp);
                }
            }
            BlockBody::Filtration(f) => {
                let fil = filtration(&ctx, f, &m)?;
                m.filtrations.insert(b.name.clone(), fil);
            }
            BlockBody::Hilbert(h) => {
                let hm = hilbert(&ctx, h)?;
                m.hilbert.insert(b.name.clone(), hm);
            }
            _ => {}
        }
    }
    Ok(m)
}

/// Parses and resolves in one step.
pub fn load(text: &str) -> Result<(ModelDocument, Model), FrontendError> {
    let doc = crate::model::parse_model(text)?;
    let model = build_model(&doc)?;
    Ok((doc, model))
}

/// A poset block reproducing `t`: the order's cover pairs, default tables
/// where they agree with the bounds, and explicit rows elsewhere.
pub fn poset_def(t: &SkewTopology) -> PosetDef {
    let n = t.len();
    let leq = t.leq_matrix();
    let mut order = Vec::new();
    for a in t.elems() {
        for b in t.elems() {
            if t.lt(a, b) && !t.elems().any(|c| t.lt(a, c) && t.lt(c, b)) {
                order.push((t.label(a).to_string(), t.label(b).to_string()));
            }
        }
    }
    let mut tables = [TableDef { default: true, rows: vec![] }, TableDef { default: true, rows: vec![] }];
    for (k, lower) in [(0usize, true), (1, false)] {
        for a in 0..n {
            for b in 0..n {
                let actual = if lower { t.meet(Elem(a), Elem(b)) } else { t.join(Elem(a), Elem(b)) };
                if bound(&leq, a, b, lower) != Some(actual.0) {
                    tables[k].rows.push((t.labels()[a].clone(), t.labels()[b].clone(), t.label(actual).to_string()));
                }
            }
        }
    }
    let [meet, join] = tables;
    PosetDef { elements: t.labels().to_vec(), bottom: None, top: None, order, meet, join }
}
