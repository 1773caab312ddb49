//! Finite skew topologies: a poset with `0` and `1` plus explicit `∧` and `∨` tables.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Dense index of an element inside one [`SkewTopology`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Elem(pub usize);

impl Elem {
    pub fn idx(self) -> usize {
        self.0
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OrderError {
    #[error("malformed table: {0}")]
    MalformedTable(String),
    #[error("no unique bottom and top element")]
    NoBottomTop,
    #[error("unknown label `{0}`")]
    UnknownLabel(String),
    #[error("duplicate label `{0}`")]
    DuplicateLabel(String),
    #[error("order is not a partial order: {0}")]
    NotPartialOrder(String),
    #[error("no unique {op} for `{a}` and `{b}`")]
    AmbiguousDefault { op: &'static str, a: String, b: String },
    #[error("empty expression")]
    EmptyExpression,
    #[error("expression syntax: {0}")]
    ExpressionSyntax(String),
    #[error("join is not commutative on `{0}`, `{1}`")]
    JoinNotCommutative(String, String),
    #[error("idempotents are not closed under join: `{0}` ∨ `{1}`")]
    ShadowNotClosed(String, String),
    #[error("subset is not closed under the operations: {0}")]
    NotClosed(String),
}

/// A finite poset with bottom and top and total `∧`, `∨` tables.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SkewTopology {
    labels: Vec<String>,
    leq: Vec<bool>,
    meet: Vec<Elem>,
    join: Vec<Elem>,
    bottom: Elem,
    top: Elem,
}

impl SkewTopology {
    /// Builds a topology from an order matrix and operation tables given as indices.
    pub fn new(
        labels: Vec<String>,
        leq: Vec<Vec<bool>>,
        meet: Vec<Vec<usize>>,
        join: Vec<Vec<usize>>,
    ) -> Result<Self, OrderError> {
        let n = labels.len();
        check_labels(&labels)?;
        let flat_leq = flatten_square(leq, n, "order")?;
        check_partial_order(&labels, &flat_leq)?;
        let meet = flatten_table(meet, n, "meet")?;
        let join = flatten_table(join, n, "join")?;
        let (bottom, top) = bottom_top(n, &flat_leq)?;
        Ok(SkewTopology { labels, leq: flat_leq, meet, join, bottom, top })
    }

    /// Builds a topology from covering or general `x < y` pairs. Missing tables
    /// default to greatest lower and least upper bounds.
    pub fn from_order(
        labels: &[&str],
        less: &[(&str, &str)],
        meet: Option<Vec<Vec<usize>>>,
        join: Option<Vec<Vec<usize>>>,
    ) -> Result<Self, OrderError> {
        let labels: Vec<String> = labels.iter().map(|s| s.to_string()).collect();
        check_labels(&labels)?;
        let find = |s: &str| {
            labels.iter().position(|l| l == s).ok_or_else(|| OrderError::UnknownLabel(s.to_string()))
        };
        let mut pairs = Vec::new();
        for (a, b) in less {
            pairs.push((find(a)?, find(b)?));
        }
        let leq = order_closure(labels.len(), &pairs);
        Self::from_leq(labels, leq, meet, join)
    }

    /// Like [`SkewTopology::from_order`] but with the order already given as a matrix.
    pub fn from_leq(
        labels: Vec<String>,
        leq: Vec<Vec<bool>>,
        meet: Option<Vec<Vec<usize>>>,
        join: Option<Vec<Vec<usize>>>,
    ) -> Result<Self, OrderError> {
        let n = labels.len();
        check_labels(&labels)?;
        let flat = flatten_square(leq.clone(), n, "order")?;
        check_partial_order(&labels, &flat)?;
        let meet = match meet {
            Some(m) => m,
            None => default_table(&labels, &flat, Bound::Lower)?,
        };
        let join = match join {
            Some(j) => j,
            None => default_table(&labels, &flat, Bound::Upper)?,
        };
        Self::new(labels, leq, meet, join)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn elems(&self) -> impl Iterator<Item = Elem> + Clone {
        (0..self.labels.len()).map(Elem)
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, e: Elem) -> &str {
        &self.labels[e.0]
    }

    pub fn elem(&self, label: &str) -> Result<Elem, OrderError> {
        self.labels
            .iter()
            .position(|l| l == label)
            .map(Elem)
            .ok_or_else(|| OrderError::UnknownLabel(label.to_string()))
    }

    pub fn bottom(&self) -> Elem {
        self.bottom
    }

    pub fn top(&self) -> Elem {
        self.top
    }

    pub fn leq(&self, a: Elem, b: Elem) -> bool {
        self.leq[a.0 * self.len() + b.0]
    }

    pub fn lt(&self, a: Elem, b: Elem) -> bool {
        a != b && self.leq(a, b)
    }

    pub fn meet(&self, a: Elem, b: Elem) -> Elem {
        self.meet[a.0 * self.len() + b.0]
    }

    pub fn join(&self, a: Elem, b: Elem) -> Elem {
        self.join[a.0 * self.len() + b.0]
    }

    /// Left fold of `∨`; the empty join is `0`.
    pub fn join_all(&self, items: impl IntoIterator<Item = Elem>) -> Elem {
        items.into_iter().fold(self.bottom, |acc, x| self.join(acc, x))
    }

    /// Left fold of `∧`; the empty meet is `1`.
    pub fn meet_all(&self, items: impl IntoIterator<Item = Elem>) -> Elem {
        let mut it = items.into_iter();
        match it.next() {
            None => self.top,
            Some(first) => it.fold(first, |acc, x| self.meet(acc, x)),
        }
    }

    pub fn is_idempotent(&self, x: Elem) -> bool {
        self.meet(x, x) == x
    }

    /// The set `{x : x ∧ x = x}`.
    pub fn idempotents(&self) -> Vec<Elem> {
        self.elems().filter(|&x| self.is_idempotent(x)).collect()
    }

    pub fn join_is_commutative(&self) -> Option<(Elem, Elem)> {
        for a in self.elems() {
            for b in self.elems() {
                if self.join(a, b) != self.join(b, a) {
                    return Some((a, b));
                }
            }
        }
        None
    }

    pub fn meet_is_commutative(&self) -> bool {
        self.elems().all(|a| self.elems().all(|b| self.meet(a, b) == self.meet(b, a)))
    }

    /// Commutative and idempotent `∧` and `∨` given by the order bounds.
    pub fn is_lattice(&self) -> bool {
        self.elems().all(|a| {
            self.elems().all(|b| {
                self.glb(a, b) == Some(self.meet(a, b))
                    && self.glb(a, b) == Some(self.meet(b, a))
                    && self.lub(a, b) == Some(self.join(a, b))
            })
        })
    }

    pub fn glb(&self, a: Elem, b: Elem) -> Option<Elem> {
        bound(self.len(), &self.leq, a.0, b.0, Bound::Lower).map(Elem)
    }

    pub fn lub(&self, a: Elem, b: Elem) -> Option<Elem> {
        bound(self.len(), &self.leq, a.0, b.0, Bound::Upper).map(Elem)
    }

    /// Upper covers of `a` in the order.
    pub fn covers(&self, a: Elem) -> Vec<Elem> {
        self.elems()
            .filter(|&b| self.lt(a, b) && !self.elems().any(|c| self.lt(a, c) && self.lt(c, b)))
            .collect()
    }

    /// The principal filter `{y : x ≤ y}`.
    pub fn up(&self, x: Elem) -> BTreeSet<Elem> {
        self.elems().filter(|&y| self.leq(x, y)).collect()
    }

    /// The principal ideal `{y : y ≤ x}`.
    pub fn down(&self, x: Elem) -> BTreeSet<Elem> {
        self.elems().filter(|&y| self.leq(y, x)).collect()
    }

    pub fn meet_table(&self) -> Vec<Vec<usize>> {
        self.table_rows(&self.meet)
    }

    pub fn join_table(&self) -> Vec<Vec<usize>> {
        self.table_rows(&self.join)
    }

    pub fn leq_matrix(&self) -> Vec<Vec<bool>> {
        let n = self.len();
        (0..n).map(|i| self.leq[i * n..(i + 1) * n].to_vec()).collect()
    }

    fn table_rows(&self, t: &[Elem]) -> Vec<Vec<usize>> {
        let n = self.len();
        (0..n).map(|i| t[i * n..(i + 1) * n].iter().map(|e| e.0).collect()).collect()
    }

    /// Restricts the structure to `subset`, which must be closed under both
    /// operations and contain its own bottom and top.
    pub fn restrict(&self, subset: &[Elem]) -> Result<(SkewTopology, Vec<Elem>), OrderError> {
        let mut carrier: Vec<Elem> = subset.to_vec();
        carrier.sort();
        carrier.dedup();
        let pos = |e: Elem| carrier.iter().position(|&c| c == e);
        let labels: Vec<String> = carrier.iter().map(|&e| self.label(e).to_string()).collect();
        let leq = carrier.iter().map(|&a| carrier.iter().map(|&b| self.leq(a, b)).collect()).collect();
        let mut meet = Vec::new();
        let mut join = Vec::new();
        for &a in &carrier {
            let mut mrow = Vec::new();
            let mut jrow = Vec::new();
            for &b in &carrier {
                let m = self.meet(a, b);
                let j = self.join(a, b);
                mrow.push(pos(m).ok_or_else(|| {
                    OrderError::NotClosed(format!("{} ∧ {} = {}", self.label(a), self.label(b), self.label(m)))
                })?);
                jrow.push(pos(j).ok_or_else(|| {
                    OrderError::NotClosed(format!("{} ∨ {} = {}", self.label(a), self.label(b), self.label(j)))
                })?);
            }
            meet.push(mrow);
            join.push(jrow);
        }
        Ok((SkewTopology::new(labels, leq, meet, join)?, carrier))
    }

    /// Closure of `generators` together with `0` and `1` under `∧` and `∨`.
    pub fn generated(&self, generators: &[Elem]) -> Vec<Elem> {
        let mut set: BTreeSet<Elem> = generators.iter().copied().collect();
        set.insert(self.bottom);
        set.insert(self.top);
        loop {
            let cur: Vec<Elem> = set.iter().copied().collect();
            let mut grew = false;
            for &a in &cur {
                for &b in &cur {
                    grew |= set.insert(self.meet(a, b));
                    grew |= set.insert(self.join(a, b));
                }
            }
            if !grew {
                return set.into_iter().collect();
            }
        }
    }

    /// Finds an order isomorphism onto `other` that also matches both tables.
    pub fn isomorphism_to(&self, other: &SkewTopology) -> Option<Vec<Elem>> {
        if self.len() != other.len() {
            return None;
        }
        let n = self.len();
        let mut map = vec![None; n];
        let mut used = vec![false; n];
        fn extend(
            a: &SkewTopology,
            b: &SkewTopology,
            i: usize,
            map: &mut Vec<Option<Elem>>,
            used: &mut Vec<bool>,
        ) -> bool {
            let n = a.len();
            if i == n {
                return true;
            }
            for j in 0..n {
                if used[j] {
                    continue;
                }
                map[i] = Some(Elem(j));
                let ok = (0..=i).all(|k| {
                    let (x, y) = (Elem(i), Elem(k));
                    let (fx, fy) = (Elem(j), map[k].unwrap());
                    let fits = |p: Elem, q: Elem| {
                        let m = a.meet(p, q);
                        let jn = a.join(p, q);
                        let fm = map[m.0];
                        let fj = map[jn.0];
                        let (fp, fq) = (map[p.0].unwrap(), map[q.0].unwrap());
                        fm.is_none_or(|v| v == b.meet(fp, fq)) && fj.is_none_or(|v| v == b.join(fp, fq))
                    };
                    a.leq(x, y) == b.leq(fx, fy) && a.leq(y, x) == b.leq(fy, fx) && fits(x, y) && fits(y, x)
                });
                if ok {
                    used[j] = true;
                    if extend(a, b, i + 1, map, used) {
                        return true;
                    }
                    used[j] = false;
                }
                map[i] = None;
            }
            false
        }
        if !extend(self, other, 0, &mut map, &mut used) {
            return None;
        }
        let map: Vec<Elem> = map.into_iter().map(|m| m.unwrap()).collect();
        let full = self.elems().all(|x| {
            self.elems().all(|y| {
                other.meet(map[x.0], map[y.0]) == map[self.meet(x, y).0]
                    && other.join(map[x.0], map[y.0]) == map[self.join(x, y).0]
            })
        });
        full.then_some(map)
    }
}

impl fmt::Display for SkewTopology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{{}}}", self.labels.join(", "))
    }
}

#[derive(Clone, Copy)]
enum Bound {
    Lower,
    Upper,
}

fn bound(n: usize, leq: &[bool], a: usize, b: usize, kind: Bound) -> Option<usize> {
    let le = |x: usize, y: usize| leq[x * n + y];
    let candidates: Vec<usize> = (0..n)
        .filter(|&c| match kind {
            Bound::Lower => le(c, a) && le(c, b),
            Bound::Upper => le(a, c) && le(b, c),
        })
        .collect();
    candidates.iter().copied().find(|&c| {
        candidates.iter().all(|&d| match kind {
            Bound::Lower => le(d, c),
            Bound::Upper => le(c, d),
        })
    })
}

fn default_table(labels: &[String], leq: &[bool], kind: Bound) -> Result<Vec<Vec<usize>>, OrderError> {
    let n = labels.len();
    let mut table = vec![vec![0; n]; n];
    for a in 0..n {
        for b in 0..n {
            table[a][b] = bound(n, leq, a, b, kind).ok_or_else(|| OrderError::AmbiguousDefault {
                op: match kind {
                    Bound::Lower => "greatest lower bound",
                    Bound::Upper => "least upper bound",
                },
                a: labels[a].clone(),
                b: labels[b].clone(),
            })?;
        }
    }
    Ok(table)
}

/// Reflexive-transitive closure of the given strict pairs.
pub fn order_closure(n: usize, pairs: &[(usize, usize)]) -> Vec<Vec<bool>> {
    let mut m = vec![vec![false; n]; n];
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = true;
    }
    for &(a, b) in pairs {
        m[a][b] = true;
    }
    for k in 0..n {
        for i in 0..n {
            if m[i][k] {
                for j in 0..n {
                    if m[k][j] {
                        m[i][j] = true;
                    }
                }
            }
        }
    }
    m
}

fn check_labels(labels: &[String]) -> Result<(), OrderError> {
    let mut seen = BTreeSet::new();
    for l in labels {
        if !seen.insert(l) {
            return Err(OrderError::DuplicateLabel(l.clone()));
        }
    }
    if labels.is_empty() {
        return Err(OrderError::NoBottomTop);
    }
    Ok(())
}

fn flatten_square(m: Vec<Vec<bool>>, n: usize, what: &str) -> Result<Vec<bool>, OrderError> {
    if m.len() != n || m.iter().any(|r| r.len() != n) {
        return Err(OrderError::MalformedTable(format!("{what} matrix is not {n}x{n}")));
    }
    Ok(m.into_iter().flatten().collect())
}

fn flatten_table(t: Vec<Vec<usize>>, n: usize, what: &str) -> Result<Vec<Elem>, OrderError> {
    if t.len() != n || t.iter().any(|r| r.len() != n) {
        return Err(OrderError::MalformedTable(format!("{what} table is not {n}x{n}")));
    }
    let flat: Vec<usize> = t.into_iter().flatten().collect();
    if let Some(bad) = flat.iter().find(|&&v| v >= n) {
        return Err(OrderError::MalformedTable(format!("{what} table entry {bad} out of range")));
    }
    Ok(flat.into_iter().map(Elem).collect())
}

fn check_partial_order(labels: &[String], leq: &[bool]) -> Result<(), OrderError> {
    let n = labels.len();
    let le = |a: usize, b: usize| leq[a * n + b];
    for a in 0..n {
        if !le(a, a) {
            return Err(OrderError::NotPartialOrder(format!("{} ≤ {} missing", labels[a], labels[a])));
        }
        for b in 0..n {
            if a != b && le(a, b) && le(b, a) {
                return Err(OrderError::NotPartialOrder(format!("cycle between {} and {}", labels[a], labels[b])));
            }
            for c in 0..n {
                if le(a, b) && le(b, c) && !le(a, c) {
                    return Err(OrderError::NotPartialOrder(format!(
                        "{} ≤ {} ≤ {} but not {} ≤ {}",
                        labels[a], labels[b], labels[c], labels[a], labels[c]
                    )));
                }
            }
        }
    }
    Ok(())
}

fn bottom_top(n: usize, leq: &[bool]) -> Result<(Elem, Elem), OrderError> {
    let bottom = (0..n).find(|&b| (0..n).all(|x| leq[b * n + x])).ok_or(OrderError::NoBottomTop)?;
    let top = (0..n).find(|&t| (0..n).all(|x| leq[x * n + t])).ok_or(OrderError::NoBottomTop)?;
    Ok((Elem(bottom), Elem(top)))
}

// ---------------------------------------------------------------------------
// Axiom validation

/// Which concrete clause of an axiom was violated, with its elements.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "clause", rename_all = "snake_case")]
pub enum Violation {
    MeetNotBelow { x: Elem, y: Elem },
    MeetIdentity { x: Elem },
    MeetAbsorb { x: Elem },
    MeetPower { x: Elem, power: usize },
    MeetAssoc { x: Elem, y: Elem, z: Elem },
    MeetMonotone { x: Elem, y: Elem, z: Elem },
    JoinNotAbove { x: Elem, y: Elem },
    JoinIdentity { x: Elem },
    JoinAbsorb { x: Elem },
    JoinPower { x: Elem, power: usize },
    JoinAssoc { x: Elem, y: Elem, z: Elem },
    JoinMonotone { x: Elem, y: Elem, z: Elem },
    IdempotentLeft { x: Elem, z: Elem },
    IdempotentRight { x: Elem, z: Elem },
    Cover { x: Elem, cover: Vec<Elem>, side: Side },
    NotSupremum { x: Elem, y: Elem, bound: Elem },
    /// Modular inequality of the shadow, evaluated with `∧̲` on the parent.
    Modular { x: Elem, y: Elem, z: Elem },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Left,
    Right,
}

impl Violation {
    /// Re-evaluates the violated clause; `true` means it still fails.
    pub fn recheck(&self, t: &SkewTopology) -> bool {
        match *self {
            Violation::MeetNotBelow { x, y } => !(t.leq(t.meet(x, y), x) && t.leq(t.meet(x, y), y)),
            Violation::MeetIdentity { x } => t.meet(x, t.top()) != x || t.meet(t.top(), x) != x,
            Violation::MeetAbsorb { x } => {
                t.meet(x, t.bottom()) != t.bottom() || t.meet(t.bottom(), x) != t.bottom()
            }
            Violation::MeetPower { x, power } => {
                let p = power_of(x, power, |a, b| t.meet(a, b));
                (p == t.bottom()) != (x == t.bottom())
            }
            Violation::MeetAssoc { x, y, z } => t.meet(t.meet(x, y), z) != t.meet(x, t.meet(y, z)),
            Violation::MeetMonotone { x, y, z } => {
                t.leq(x, y) && !(t.leq(t.meet(z, x), t.meet(z, y)) && t.leq(t.meet(x, z), t.meet(y, z)))
            }
            Violation::JoinNotAbove { x, y } => !(t.leq(x, t.join(x, y)) && t.leq(y, t.join(x, y))),
            Violation::JoinIdentity { x } => t.join(x, t.bottom()) != x || t.join(t.bottom(), x) != x,
            Violation::JoinAbsorb { x } => t.join(x, t.top()) != t.top() || t.join(t.top(), x) != t.top(),
            Violation::JoinPower { x, power } => {
                let p = power_of(x, power, |a, b| t.join(a, b));
                (p == t.top()) != (x == t.top())
            }
            Violation::JoinAssoc { x, y, z } => t.join(t.join(x, y), z) != t.join(x, t.join(y, z)),
            Violation::JoinMonotone { x, y, z } => {
                t.leq(x, y) && !(t.leq(t.join(z, x), t.join(z, y)) && t.leq(t.join(x, z), t.join(y, z)))
            }
            Violation::IdempotentLeft { x, z } => {
                t.is_idempotent(x) && t.leq(x, z) && !t.leq(t.join(x, t.meet(x, z)), t.meet(t.join(x, x), z))
            }
            Violation::IdempotentRight { x, z } => {
                t.is_idempotent(x) && t.leq(x, z) && !t.leq(t.join(x, t.meet(z, x)), t.meet(t.join(x, z), x))
            }
            Violation::Cover { x, ref cover, side } => {
                t.join_all(cover.iter().copied()) == t.top() && cover_value(t, x, cover, side) != x
            }
            Violation::NotSupremum { x, y, bound } => {
                let j = t.join(x, y);
                !(t.leq(x, j) && t.leq(y, j)) || (t.leq(x, bound) && t.leq(y, bound) && !t.leq(j, bound))
            }
            Violation::Modular { x, y, z } => {
                t.leq(x, z) && !t.leq(t.join(x, shadow_meet(t, y, z)), shadow_meet(t, t.join(x, y), z))
            }
        }
    }

    pub fn describe(&self, t: &SkewTopology) -> String {
        let l = |e: Elem| t.label(e).to_string();
        match self {
            Violation::MeetNotBelow { x, y } => format!("{0} ∧ {1} = {2} is not below both", l(*x), l(*y), l(t.meet(*x, *y))),
            Violation::MeetIdentity { x } => format!("{} ∧ 1 ≠ {}", l(*x), l(*x)),
            Violation::MeetAbsorb { x } => format!("{} ∧ 0 ≠ 0", l(*x)),
            Violation::MeetPower { x, power } => format!("{}-fold meet power of {} is wrong about 0", power, l(*x)),
            Violation::MeetAssoc { x, y, z } => format!("∧ not associative on {}, {}, {}", l(*x), l(*y), l(*z)),
            Violation::MeetMonotone { x, y, z } => format!("∧ not monotone: {} ≤ {} with {}", l(*x), l(*y), l(*z)),
            Violation::JoinNotAbove { x, y } => format!("{0} ∨ {1} = {2} is not above both", l(*x), l(*y), l(t.join(*x, *y))),
            Violation::JoinIdentity { x } => format!("{} ∨ 0 ≠ {}", l(*x), l(*x)),
            Violation::JoinAbsorb { x } => format!("{} ∨ 1 ≠ 1", l(*x)),
            Violation::JoinPower { x, power } => format!("{}-fold join power of {} is wrong about 1", power, l(*x)),
            Violation::JoinAssoc { x, y, z } => format!("∨ not associative on {}, {}, {}", l(*x), l(*y), l(*z)),
            Violation::JoinMonotone { x, y, z } => format!("∨ not monotone: {} ≤ {} with {}", l(*x), l(*y), l(*z)),
            Violation::IdempotentLeft { x, z } => format!("{0} ∨ ({0} ∧ {1}) ≰ ({0} ∨ {0}) ∧ {1}", l(*x), l(*z)),
            Violation::IdempotentRight { x, z } => format!("{0} ∨ ({1} ∧ {0}) ≰ ({0} ∨ {1}) ∧ {0}", l(*x), l(*z)),
            Violation::Cover { x, cover, side } => {
                let names: Vec<String> = cover.iter().map(|&c| l(c)).collect();
                format!("x = {} is not recovered from the cover 1 = {} ({:?} meets)", l(*x), names.join(" ∨ "), side)
            }
            Violation::NotSupremum { x, y, bound } => {
                format!("{} ∨ {} is not the least upper bound (compare {})", l(*x), l(*y), l(*bound))
            }
            Violation::Modular { x, y, z } => {
                format!("{0} ≤ {2} but {0} ∨ ({1} ∧̲ {2}) ≰ ({0} ∨ {1}) ∧̲ {2}", l(*x), l(*y), l(*z))
            }
        }
    }
}

fn power_of(x: Elem, k: usize, op: impl Fn(Elem, Elem) -> Elem) -> Elem {
    let mut p = x;
    for _ in 1..k {
        p = op(p, x);
    }
    p
}

fn cover_value(t: &SkewTopology, x: Elem, cover: &[Elem], side: Side) -> Elem {
    t.join_all(cover.iter().map(|&c| match side {
        Side::Left => t.meet(x, c),
        Side::Right => t.meet(c, x),
    }))
}

/// Outcome of one checked property.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Status {
    Holds,
    Fails { witness: Violation },
    Skipped { reason: String },
}

impl Status {
    pub fn holds(&self) -> bool {
        matches!(self, Status::Holds)
    }

    pub fn witness(&self) -> Option<&Violation> {
        match self {
            Status::Fails { witness } => Some(witness),
            _ => None,
        }
    }

    fn from(v: Option<Violation>) -> Status {
        match v {
            None => Status::Holds,
            Some(witness) => Status::Fails { witness },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct AxiomReport {
    pub i: Status,
    pub ii: Status,
    pub iii: Status,
    pub iv: Status,
    pub v: Status,
    pub vee_complete_as_sup: Status,
    pub require_axiom_v: bool,
}

impl AxiomReport {
    pub fn is_skew(&self) -> bool {
        self.i.holds() && self.ii.holds() && self.iii.holds() && self.iv.holds()
    }

    pub fn is_noncommutative_topology(&self) -> bool {
        self.is_skew() && self.v.holds()
    }

    /// Passes whatever was requested: (i)-(iv), plus (v) when required.
    pub fn passes(&self) -> bool {
        self.is_skew() && (!self.require_axiom_v || self.v.holds())
    }

    /// Holds/fails pattern of (i)-(v) and the supremum flag.
    pub fn profile(&self) -> [bool; 6] {
        [
            self.i.holds(),
            self.ii.holds(),
            self.iii.holds(),
            self.iv.holds(),
            self.v.holds(),
            self.vee_complete_as_sup.holds(),
        ]
    }

    pub fn statuses(&self) -> [(&'static str, &Status); 6] {
        [
            ("i", &self.i),
            ("ii", &self.ii),
            ("iii", &self.iii),
            ("iv", &self.iv),
            ("v", &self.v),
            ("vee_complete_as_sup", &self.vee_complete_as_sup),
        ]
    }
}

/// Largest carrier for which axiom (v) is enumerated over every subset cover.
pub const COVER_ENUMERATION_LIMIT: usize = 18;

/// Exhaustively checks axioms (i)-(v) and whether `∨` is the supremum.
pub fn validate_skew(t: &SkewTopology, require_axiom_v: bool) -> AxiomReport {
    AxiomReport {
        i: Status::from(check_i(t)),
        ii: Status::from(check_ii(t)),
        iii: Status::from(check_iii(t)),
        iv: Status::from(check_iv(t)),
        v: check_v(t),
        vee_complete_as_sup: Status::from(check_sup(t)),
        require_axiom_v,
    }
}

/// Runs `x, x·x, (x·x)·x, …` until it cycles; returns the first power that
/// contradicts "power equals `target` iff `x` equals `target`".
fn power_violation(t: &SkewTopology, x: Elem, target: Elem, op: impl Fn(Elem, Elem) -> Elem) -> Option<usize> {
    let mut seen = BTreeSet::new();
    let mut p = x;
    let mut k = 1;
    while seen.insert(p) && k <= t.len() + 1 {
        if (p == target) != (x == target) {
            return Some(k);
        }
        p = op(p, x);
        k += 1;
    }
    None
}

fn check_i(t: &SkewTopology) -> Option<Violation> {
    for x in t.elems() {
        for y in t.elems() {
            let m = t.meet(x, y);
            if !(t.leq(m, x) && t.leq(m, y)) {
                return Some(Violation::MeetNotBelow { x, y });
            }
        }
    }
    for x in t.elems() {
        if t.meet(x, t.top()) != x || t.meet(t.top(), x) != x {
            return Some(Violation::MeetIdentity { x });
        }
        if t.meet(x, t.bottom()) != t.bottom() || t.meet(t.bottom(), x) != t.bottom() {
            return Some(Violation::MeetAbsorb { x });
        }
        if let Some(power) = power_violation(t, x, t.bottom(), |a, b| t.meet(a, b)) {
            return Some(Violation::MeetPower { x, power });
        }
    }
    None
}

fn check_ii(t: &SkewTopology) -> Option<Violation> {
    for x in t.elems() {
        for y in t.elems() {
            for z in t.elems() {
                if t.meet(t.meet(x, y), z) != t.meet(x, t.meet(y, z)) {
                    return Some(Violation::MeetAssoc { x, y, z });
                }
                if t.leq(x, y) && !(t.leq(t.meet(z, x), t.meet(z, y)) && t.leq(t.meet(x, z), t.meet(y, z))) {
                    return Some(Violation::MeetMonotone { x, y, z });
                }
            }
        }
    }
    None
}

fn check_iii(t: &SkewTopology) -> Option<Violation> {
    for x in t.elems() {
        for y in t.elems() {
            let j = t.join(x, y);
            if !(t.leq(x, j) && t.leq(y, j)) {
                return Some(Violation::JoinNotAbove { x, y });
            }
        }
    }
    for x in t.elems() {
        if t.join(x, t.bottom()) != x || t.join(t.bottom(), x) != x {
            return Some(Violation::JoinIdentity { x });
        }
        if t.join(x, t.top()) != t.top() || t.join(t.top(), x) != t.top() {
            return Some(Violation::JoinAbsorb { x });
        }
        if let Some(power) = power_violation(t, x, t.top(), |a, b| t.join(a, b)) {
            return Some(Violation::JoinPower { x, power });
        }
    }
    for x in t.elems() {
        for y in t.elems() {
            for z in t.elems() {
                if t.join(t.join(x, y), z) != t.join(x, t.join(y, z)) {
                    return Some(Violation::JoinAssoc { x, y, z });
                }
                if t.leq(x, y) && !(t.leq(t.join(z, x), t.join(z, y)) && t.leq(t.join(x, z), t.join(y, z))) {
                    return Some(Violation::JoinMonotone { x, y, z });
                }
            }
        }
    }
    None
}

fn check_iv(t: &SkewTopology) -> Option<Violation> {
    for x in t.idempotents() {
        for z in t.elems().filter(|&z| t.leq(x, z)) {
            if !t.leq(t.join(x, t.meet(x, z)), t.meet(t.join(x, x), z)) {
                return Some(Violation::IdempotentLeft { x, z });
            }
            if !t.leq(t.join(x, t.meet(z, x)), t.meet(t.join(x, z), x)) {
                return Some(Violation::IdempotentRight { x, z });
            }
        }
    }
    None
}

fn check_v(t: &SkewTopology) -> Status {
    let n = t.len();
    if n > COVER_ENUMERATION_LIMIT {
        return Status::Skipped { reason: format!("{n} elements exceed the cover enumeration limit") };
    }
    // join of every subset, built from the subset without its lowest element
    let mut joins = vec![t.bottom(); 1 << n];
    for mask in 1usize..(1 << n) {
        let low = mask.trailing_zeros() as usize;
        joins[mask] = t.join(joins[mask & (mask - 1)], Elem(low));
    }
    let mut masks: Vec<usize> = (1usize..(1 << n)).filter(|&m| joins[m] == t.top()).collect();
    masks.sort_by_key(|m| (m.count_ones(), *m));
    for mask in masks {
        let cover: Vec<Elem> = (0..n).filter(|i| mask >> i & 1 == 1).map(Elem).collect();
        for x in t.elems() {
            for side in [Side::Left, Side::Right] {
                if cover_value(t, x, &cover, side) != x {
                    return Status::Fails { witness: Violation::Cover { x, cover, side } };
                }
            }
        }
    }
    Status::Holds
}

fn check_sup(t: &SkewTopology) -> Option<Violation> {
    for x in t.elems() {
        for y in t.elems() {
            let j = t.join(x, y);
            if !(t.leq(x, j) && t.leq(y, j)) {
                return Some(Violation::NotSupremum { x, y, bound: j });
            }
            for u in t.elems() {
                if t.leq(x, u) && t.leq(y, u) && !t.leq(j, u) {
                    return Some(Violation::NotSupremum { x, y, bound: u });
                }
            }
        }
    }
    None
}

// ---------------------------------------------------------------------------
// Commutative shadow

/// The idempotents with the derived meet `σ ∧̲ τ = ∨{γ idempotent : γ ≤ σ ∧ τ}`.
#[derive(Clone, Debug)]
pub struct ShadowLattice {
    /// Embedding of the carrier into the parent, in increasing index order.
    pub carrier: Vec<Elem>,
    /// The carrier as a structure of its own, with `∧̲` as its meet.
    pub lattice: SkewTopology,
    pub modular: Status,
    /// First failure of the modular inequality as parent elements `(x, y, z)`.
    pub modular_witness: Option<(Elem, Elem, Elem)>,
}

impl ShadowLattice {
    /// `σ ∧̲ τ` for parent elements that lie in the carrier.
    pub fn shadow_meet(&self, a: Elem, b: Elem) -> Option<Elem> {
        let ia = self.position(a)?;
        let ib = self.position(b)?;
        Some(self.carrier[self.lattice.meet(Elem(ia), Elem(ib)).0])
    }

    pub fn position(&self, e: Elem) -> Option<usize> {
        self.carrier.iter().position(|&c| c == e)
    }
}

/// `σ ∧̲ τ` computed directly on the parent.
pub fn shadow_meet(t: &SkewTopology, a: Elem, b: Elem) -> Elem {
    let m = t.meet(a, b);
    t.join_all(t.idempotents().into_iter().filter(|&g| t.leq(g, m)))
}

pub fn commutative_shadow(t: &SkewTopology) -> Result<ShadowLattice, OrderError> {
    if let Some((a, b)) = t.join_is_commutative() {
        return Err(OrderError::JoinNotCommutative(t.label(a).into(), t.label(b).into()));
    }
    let carrier = t.idempotents();
    let pos = |e: Elem| carrier.iter().position(|&c| c == e);
    let mut meet = Vec::new();
    let mut join = Vec::new();
    for &a in &carrier {
        let mut mrow = Vec::new();
        let mut jrow = Vec::new();
        for &b in &carrier {
            let m = shadow_meet(t, a, b);
            let j = t.join(a, b);
            mrow.push(pos(m).ok_or_else(|| OrderError::ShadowNotClosed(t.label(a).into(), t.label(b).into()))?);
            jrow.push(pos(j).ok_or_else(|| OrderError::ShadowNotClosed(t.label(a).into(), t.label(b).into()))?);
        }
        meet.push(mrow);
        join.push(jrow);
    }
    let labels = carrier.iter().map(|&e| t.label(e).to_string()).collect();
    let leq = carrier.iter().map(|&a| carrier.iter().map(|&b| t.leq(a, b)).collect()).collect();
    let lattice = SkewTopology::new(labels, leq, meet, join)?;
    let witness = modular_failure(&lattice);
    let modular_witness = witness.map(|(x, y, z)| (carrier[x.0], carrier[y.0], carrier[z.0]));
    let modular = match modular_witness {
        None => Status::Holds,
        Some((x, y, z)) => Status::Fails { witness: Violation::Modular { x, y, z } },
    };
    Ok(ShadowLattice { carrier, lattice, modular, modular_witness })
}

/// First `(x, y, z)` with `x ≤ z` and `x ∨ (y ∧ z) ≰ (x ∨ y) ∧ z`.
pub fn modular_failure(l: &SkewTopology) -> Option<(Elem, Elem, Elem)> {
    for x in l.elems() {
        for z in l.elems().filter(|&z| l.leq(x, z)) {
            for y in l.elems() {
                if !l.leq(l.join(x, l.meet(y, z)), l.meet(l.join(x, y), z)) {
                    return Some((x, y, z));
                }
            }
        }
    }
    None
}

// ---------------------------------------------------------------------------
// Bracketed expressions

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Expr {
    Atom(String),
    Meet(Box<Expr>, Box<Expr>),
    Join(Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn meet(a: Expr, b: Expr) -> Expr {
        Expr::Meet(Box::new(a), Box::new(b))
    }

    pub fn join(a: Expr, b: Expr) -> Expr {
        Expr::Join(Box::new(a), Box::new(b))
    }

    /// Parses `∧`/`&` and `∨`/`|` with parentheses. `∧` binds tighter than `∨`;
    /// equal operators associate to the left.
    pub fn parse(text: &str) -> Result<Expr, OrderError> {
        let tokens = tokenize(text)?;
        if tokens.is_empty() {
            return Err(OrderError::EmptyExpression);
        }
        let mut p = ExprParser { tokens, pos: 0 };
        let e = p.join_level()?;
        if p.pos != p.tokens.len() {
            return Err(OrderError::ExpressionSyntax(format!("unexpected {:?}", p.tokens[p.pos])));
        }
        Ok(e)
    }

    pub fn atoms(&self) -> Vec<&str> {
        match self {
            Expr::Atom(a) => vec![a.as_str()],
            Expr::Meet(a, b) | Expr::Join(a, b) => {
                let mut v = a.atoms();
                v.extend(b.atoms());
                v
            }
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Atom(a) => write!(f, "{a}"),
            Expr::Meet(a, b) => write!(f, "({a} ∧ {b})"),
            Expr::Join(a, b) => write!(f, "({a} ∨ {b})"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Name(String),
    Meet,
    Join,
    Open,
    Close,
}

fn tokenize(text: &str) -> Result<Vec<Tok>, OrderError> {
    let mut out = Vec::new();
    let mut chars = text.chars().peekable();
    while let Some(&c) = chars.peek() {
        match c {
            c if c.is_whitespace() => {
                chars.next();
            }
            '∧' | '&' => {
                chars.next();
                out.push(Tok::Meet);
            }
            '∨' | '|' => {
                chars.next();
                out.push(Tok::Join);
            }
            '(' => {
                chars.next();
                out.push(Tok::Open);
            }
            ')' => {
                chars.next();
                out.push(Tok::Close);
            }
            c if c.is_alphanumeric() || c == '_' || c == '\'' => {
                let mut s = String::new();
                while let Some(&d) = chars.peek() {
                    if d.is_alphanumeric() || d == '_' || d == '\'' {
                        s.push(d);
                        chars.next();
                    } else {
                        break;
                    }
                }
                out.push(Tok::Name(s));
            }
            other => return Err(OrderError::ExpressionSyntax(format!("unexpected character {other:?}"))),
        }
    }
    Ok(out)
}

struct ExprParser {
    tokens: Vec<Tok>,
    pos: usize,
}

impl ExprParser {
    fn join_level(&mut self) -> Result<Expr, OrderError> {
        let mut e = self.meet_level()?;
        while self.tokens.get(self.pos) == Some(&Tok::Join) {
            self.pos += 1;
            e = Expr::join(e, self.meet_level()?);
        }
        Ok(e)
    }

    fn meet_level(&mut self) -> Result<Expr, OrderError> {
        let mut e = self.atom()?;
        while self.tokens.get(self.pos) == Some(&Tok::Meet) {
            self.pos += 1;
            e = Expr::meet(e, self.atom()?);
        }
        Ok(e)
    }

    fn atom(&mut self) -> Result<Expr, OrderError> {
        match self.tokens.get(self.pos).cloned() {
            Some(Tok::Name(n)) => {
                self.pos += 1;
                Ok(Expr::Atom(n))
            }
            Some(Tok::Open) => {
                self.pos += 1;
                let e = self.join_level()?;
                if self.tokens.get(self.pos) != Some(&Tok::Close) {
                    return Err(OrderError::ExpressionSyntax("missing `)`".into()));
                }
                self.pos += 1;
                Ok(e)
            }
            Some(t) => Err(OrderError::ExpressionSyntax(format!("unexpected {t:?}"))),
            None => Err(OrderError::ExpressionSyntax("unexpected end of expression".into())),
        }
    }
}

/// Evaluates the tree with the topology's tables, exactly as bracketed.
pub fn eval_expr(t: &SkewTopology, e: &Expr) -> Result<Elem, OrderError> {
    match e {
        Expr::Atom(a) => t.elem(a),
        Expr::Meet(a, b) => Ok(t.meet(eval_expr(t, a)?, eval_expr(t, b)?)),
        Expr::Join(a, b) => Ok(t.join(eval_expr(t, a)?, eval_expr(t, b)?)),
    }
}

pub fn eval_str(t: &SkewTopology, text: &str) -> Result<Elem, OrderError> {
    eval_expr(t, &Expr::parse(text)?)
}
