//! Subspace lattices of `ℚ^d`, symmetric operators with rational spectrum and
//! their spectral families.

use std::collections::BTreeSet;
use std::fmt;

use nalgebra::DMatrix;
use num_integer::Integer;
use num_traits::{One, ToPrimitive, Zero};
use serde::Serialize;
use thiserror::Error;

use crate::linalg::LinalgError;
use crate::order::{OrderError, SkewTopology};
use crate::spectral::{Filtration, GammaChain, SpectralError};
use crate::{Check, Elem, QMatrix, Rational};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum HilbertError {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("sublattice closure exceeded {0} elements")]
    CapExceeded(usize),
    #[error("matrix is not square")]
    NotSquare,
    #[error("matrix is not symmetric")]
    NotSymmetric,
    #[error("spectrum is not rational: eigenspaces cover {found} of {dim} dimensions")]
    IrrationalSpectrum { found: usize, dim: usize },
    #[error("claimed eigenvalue {0} has no eigenvector")]
    NotAnEigenvalue(String),
    #[error("no lines registered")]
    NoLines,
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Order(#[from] OrderError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

/// A subspace of `ℚ^d` held as the nonzero rows of its reduced echelon form.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct RationalSubspace {
    dim: usize,
    basis: Vec<Vec<Rational>>,
}

impl fmt::Debug for RationalSubspace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl PartialOrd for RationalSubspace {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// Rank first, then the echelon rows; used only for deterministic listings.
impl Ord for RationalSubspace {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.dim
            .cmp(&other.dim)
            .then(self.rank().cmp(&other.rank()))
            .then_with(|| self.basis.cmp(&other.basis))
    }
}

impl Serialize for RationalSubspace {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

fn fmt_vec(v: &[Rational]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

impl fmt::Display for RationalSubspace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.basis.is_empty() {
            f.write_str("0")
        } else if self.rank() == self.dim {
            f.write_str("1")
        } else {
            let rows: Vec<String> = self.basis.iter().map(|r| fmt_vec(r)).collect();
            write!(f, "<{}>", rows.join(";"))
        }
    }
}

impl RationalSubspace {
    /// Span of `vectors` in `ℚ^dim`.
    pub fn span(dim: usize, vectors: &[Vec<Rational>]) -> Result<RationalSubspace, HilbertError> {
        if let Some(v) = vectors.iter().find(|v| v.len() != dim) {
            return Err(HilbertError::DimensionMismatch(v.len(), dim));
        }
        if vectors.is_empty() {
            return Ok(RationalSubspace::zero(dim));
        }
        let m = QMatrix::from_rows(vectors.to_vec(), dim);
        let basis = m.row_space().row_vecs().into_iter().filter(|r| r.iter().any(|x| !x.is_zero())).collect();
        Ok(RationalSubspace { dim, basis })
    }

    pub fn line(v: Vec<Rational>) -> RationalSubspace {
        let dim = v.len();
        RationalSubspace::span(dim, &[v]).expect("one vector of the right length")
    }

    pub fn zero(dim: usize) -> RationalSubspace {
        RationalSubspace { dim, basis: Vec::new() }
    }

    pub fn whole(dim: usize) -> RationalSubspace {
        let id = QMatrix::identity(dim);
        RationalSubspace { dim, basis: id.row_vecs() }
    }

    /// The `i`-th coordinate line.
    pub fn axis(dim: usize, i: usize) -> RationalSubspace {
        RationalSubspace::line((0..dim).map(|j| if i == j { Rational::one() } else { Rational::zero() }).collect())
    }

    pub fn ambient(&self) -> usize {
        self.dim
    }

    pub fn rank(&self) -> usize {
        self.basis.len()
    }

    pub fn basis(&self) -> &[Vec<Rational>] {
        &self.basis
    }

    fn matrix(&self) -> QMatrix {
        QMatrix::from_rows(self.basis.clone(), self.dim)
    }

    pub fn contains_vector(&self, v: &[Rational]) -> bool {
        v.iter().all(|x| x.is_zero()) || {
            let mut rows = self.basis.clone();
            rows.push(v.to_vec());
            QMatrix::from_rows(rows, self.dim).rank() == self.rank()
        }
    }

    pub fn is_subspace_of(&self, other: &RationalSubspace) -> bool {
        self.dim == other.dim && self.basis.iter().all(|v| other.contains_vector(v))
    }

    fn same_ambient(&self, other: &RationalSubspace) -> Result<(), HilbertError> {
        if self.dim != other.dim {
            return Err(HilbertError::DimensionMismatch(self.dim, other.dim));
        }
        Ok(())
    }

    /// Intersection, from the relations `a·U = b·V` between the two bases.
    pub fn meet(&self, other: &RationalSubspace) -> Result<RationalSubspace, HilbertError> {
        self.same_ambient(other)?;
        if self.basis.is_empty() || other.basis.is_empty() {
            return Ok(RationalSubspace::zero(self.dim));
        }
        let stacked = self.matrix().vstack(&other.matrix().scale(&-Rational::one()))?;
        let relations = stacked.transpose().nullspace();
        let u = self.matrix();
        let vectors: Vec<Vec<Rational>> = relations
            .row_vecs()
            .into_iter()
            .map(|r| {
                let coeffs = QMatrix::from_rows(vec![r[..self.rank()].to_vec()], self.rank());
                coeffs.mul(&u).expect("shapes agree").row(0).to_vec()
            })
            .collect();
        RationalSubspace::span(self.dim, &vectors)
    }

    /// Sum of the two subspaces.
    pub fn join(&self, other: &RationalSubspace) -> Result<RationalSubspace, HilbertError> {
        self.same_ambient(other)?;
        let mut rows = self.basis.clone();
        rows.extend(other.basis.iter().cloned());
        RationalSubspace::span(self.dim, &rows)
    }
}

pub fn subspace_meet(u: &RationalSubspace, v: &RationalSubspace) -> Result<RationalSubspace, HilbertError> {
    u.meet(v)
}

pub fn subspace_join(u: &RationalSubspace, v: &RationalSubspace) -> Result<RationalSubspace, HilbertError> {
    u.join(v)
}

// ---------------------------------------------------------------------------
// Generated sublattices

pub const SUBLATTICE_CAP: usize = 2000;

/// A finite sublattice of subspaces together with its order-theoretic view.
#[derive(Clone, Debug)]
pub struct SubspaceLattice {
    /// Sorted by rank, then echelon rows; index-aligned with `topology`.
    pub elements: Vec<RationalSubspace>,
    pub topology: SkewTopology,
}

impl SubspaceLattice {
    pub fn position(&self, u: &RationalSubspace) -> Option<Elem> {
        self.elements.iter().position(|e| e == u).map(Elem)
    }

    pub fn subspace(&self, e: Elem) -> &RationalSubspace {
        &self.elements[e.0]
    }
}

/// Closes `generators`, `0` and the ambient space under intersection and sum.
pub fn sublattice_closure(generators: &[RationalSubspace], cap: usize) -> Result<SubspaceLattice, HilbertError> {
    let dim = generators.first().map_or(0, |g| g.dim);
    if let Some(g) = generators.iter().find(|g| g.dim != dim) {
        return Err(HilbertError::DimensionMismatch(g.dim, dim));
    }
    let mut set: BTreeSet<RationalSubspace> = generators.iter().cloned().collect();
    set.insert(RationalSubspace::zero(dim));
    set.insert(RationalSubspace::whole(dim));
    let mut frontier: Vec<RationalSubspace> = set.iter().cloned().collect();
    while !frontier.is_empty() {
        let current: Vec<RationalSubspace> = set.iter().cloned().collect();
        let mut next = Vec::new();
        for a in &frontier {
            for b in &current {
                for c in [a.meet(b)?, a.join(b)?] {
                    if set.insert(c.clone()) {
                        next.push(c);
                    }
                }
            }
            if set.len() > cap {
                return Err(HilbertError::CapExceeded(cap));
            }
        }
        frontier = next;
    }
    let elements: Vec<RationalSubspace> = set.into_iter().collect();
    let index = |u: &RationalSubspace| elements.iter().position(|e| e == u).expect("closed set");
    let n = elements.len();
    let labels: Vec<String> = elements.iter().map(|e| e.to_string()).collect();
    let leq = (0..n).map(|i| (0..n).map(|j| elements[i].is_subspace_of(&elements[j])).collect()).collect();
    let mut meet = vec![vec![0; n]; n];
    let mut join = vec![vec![0; n]; n];
    for i in 0..n {
        for j in 0..n {
            meet[i][j] = index(&elements[i].meet(&elements[j])?);
            join[i][j] = index(&elements[i].join(&elements[j])?);
        }
    }
    let topology = SkewTopology::new(labels, leq, meet, join)?;
    Ok(SubspaceLattice { elements, topology })
}

// ---------------------------------------------------------------------------
// Operators

/// A symmetric rational matrix whose eigenvalues are all rational.
#[derive(Clone, Debug, Serialize)]
pub struct OperatorSpec {
    pub matrix: QMatrix,
    /// Distinct eigenvalues, increasing.
    #[serde(serialize_with = "crate::qser::many")]
    pub eigenvalues: Vec<Rational>,
    /// Eigenspace per eigenvalue.
    pub eigenspaces: Vec<RationalSubspace>,
}

fn shifted(m: &QMatrix, lambda: &Rational) -> QMatrix {
    let mut s = m.clone();
    for i in 0..m.rows() {
        s.set(i, i, m.get(i, i) - lambda);
    }
    s
}

fn eigenspace(m: &QMatrix, lambda: &Rational) -> RationalSubspace {
    RationalSubspace::span(m.cols(), &shifted(m, lambda).nullspace().row_vecs()).expect("nullspace rows have length d")
}

/// Convergents of the continued fraction of `x` with denominators up to `max_den`.
fn convergents(x: f64, max_den: i64) -> Vec<Rational> {
    let mut out = Vec::new();
    let (mut h0, mut h1) = (1i64, x.floor() as i64);
    let (mut k0, mut k1) = (0i64, 1i64);
    let mut frac = x - x.floor();
    out.push(crate::qi(h1));
    for _ in 0..40 {
        if frac.abs() < 1e-12 {
            break;
        }
        let inv = 1.0 / frac;
        let a = inv.floor() as i64;
        frac = inv - inv.floor();
        let (Some(h2), Some(k2)) = (a.checked_mul(h1).and_then(|v| v.checked_add(h0)), a.checked_mul(k1).and_then(|v| v.checked_add(k0))) else {
            break;
        };
        if k2 > max_den {
            break;
        }
        out.push(crate::q(h2, k2));
        (h0, h1, k0, k1) = (h1, h2, k1, k2);
    }
    out
}

fn check_symmetric(m: &QMatrix) -> Result<(), HilbertError> {
    if m.rows() != m.cols() {
        return Err(HilbertError::NotSquare);
    }
    if *m != m.transpose() {
        return Err(HilbertError::NotSymmetric);
    }
    Ok(())
}

impl OperatorSpec {
    /// Certifies a rational spectrum. Candidate eigenvalues come from a
    /// floating-point solver; each is rationalised and confirmed exactly, and
    /// the eigenspaces must fill the whole space.
    pub fn new(matrix: QMatrix) -> Result<OperatorSpec, HilbertError> {
        check_symmetric(&matrix)?;
        let d = matrix.rows();
        let approx = DMatrix::from_fn(d, d, |r, c| matrix.get(r, c).to_f64().unwrap_or(f64::NAN));
        let mut roots: Vec<f64> = approx.symmetric_eigenvalues().iter().copied().collect();
        roots.sort_by(|a, b| a.partial_cmp(b).expect("finite eigenvalues"));
        let mut found: Vec<Rational> = Vec::new();
        for r in roots {
            if let Some(l) = convergents(r, 1_000_000)
                .into_iter()
                .filter(|l| (l.to_f64().unwrap_or(f64::NAN) - r).abs() < 1e-6)
                .find(|l| eigenspace(&matrix, l).rank() > 0) {
                if !found.contains(&l) {
                    found.push(l);
                }
            }
        }
        OperatorSpec::with_eigenvalues(matrix, found)
    }

    /// Certifies a claimed list of eigenvalues.
    pub fn with_eigenvalues(matrix: QMatrix, mut eigenvalues: Vec<Rational>) -> Result<OperatorSpec, HilbertError> {
        check_symmetric(&matrix)?;
        eigenvalues.sort();
        eigenvalues.dedup();
        let mut eigenspaces = Vec::new();
        for l in &eigenvalues {
            let e = eigenspace(&matrix, l);
            if e.rank() == 0 {
                return Err(HilbertError::NotAnEigenvalue(l.to_string()));
            }
            eigenspaces.push(e);
        }
        let found: usize = eigenspaces.iter().map(|e| e.rank()).sum();
        if found != matrix.rows() {
            return Err(HilbertError::IrrationalSpectrum { found, dim: matrix.rows() });
        }
        Ok(OperatorSpec { matrix, eigenvalues, eigenspaces })
    }

    pub fn diagonal(values: &[Rational]) -> OperatorSpec {
        let d = values.len();
        let m = QMatrix::from_fn(d, d, |r, c| if r == c { values[r].clone() } else { Rational::zero() });
        OperatorSpec::with_eigenvalues(m, values.to_vec()).expect("diagonal spectra are rational")
    }

    /// `Q·diag(values)·Qᵀ` for a rational orthogonal `Q`.
    pub fn conjugated(values: &[Rational], orthogonal: &QMatrix) -> Result<OperatorSpec, HilbertError> {
        let d = values.len();
        if orthogonal.rows() != d || orthogonal.cols() != d {
            return Err(HilbertError::DimensionMismatch(orthogonal.rows(), d));
        }
        let diag = QMatrix::from_fn(d, d, |r, c| if r == c { values[r].clone() } else { Rational::zero() });
        let m = orthogonal.mul(&diag)?.mul(&orthogonal.transpose())?;
        OperatorSpec::with_eigenvalues(m, values.to_vec())
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }
}

/// Cayley transform `(I - S)(I + S)⁻¹` of a skew-symmetric `S`: a rational
/// orthogonal matrix.
pub fn cayley(skew: &QMatrix) -> Result<QMatrix, HilbertError> {
    let d = skew.rows();
    let id = QMatrix::identity(d);
    let minus = id.sub(skew)?;
    let plus = QMatrix::from_fn(d, d, |r, c| id.get(r, c) + skew.get(r, c));
    Ok(minus.mul(&plus.inverse()?)?)
}

// ---------------------------------------------------------------------------
// Spectral families and the pseudo-place

/// `F(γ)` for `γ` running over the eigenvalues.
#[derive(Clone, Debug, Serialize)]
pub struct HilbertFamily {
    pub dim: usize,
    #[serde(serialize_with = "crate::qser::many")]
    pub values: Vec<Rational>,
    pub levels: Vec<RationalSubspace>,
    /// Integer labels are the eigenvalues times this common denominator.
    #[serde(serialize_with = "crate::qser::one")]
    pub scale: Rational,
}

pub fn spectral_family_of(op: &OperatorSpec) -> HilbertFamily {
    let mut levels = Vec::new();
    let mut acc = RationalSubspace::zero(op.dim());
    for e in &op.eigenspaces {
        acc = acc.join(e).expect("same ambient space");
        levels.push(acc.clone());
    }
    let scale = op.eigenvalues.iter().fold(num_bigint::BigInt::one(), |l, v| l.lcm(v.denom()));
    HilbertFamily { dim: op.dim(), values: op.eigenvalues.clone(), levels, scale: Rational::from_integer(scale) }
}

impl HilbertFamily {
    /// Integer labels for the chain of eigenvalues.
    pub fn gamma_labels(&self) -> Vec<i64> {
        self.values
            .iter()
            .map(|v| (v * &self.scale).to_integer().to_i64().expect("labels fit in i64"))
            .collect()
    }

    /// The levels as a filtration of the lattice they generate.
    pub fn filtration(&self) -> Result<(SubspaceLattice, Filtration), HilbertError> {
        let lattice = sublattice_closure(&self.levels, SUBLATTICE_CAP)?;
        let levels = self.levels.iter().map(|l| lattice.position(l).expect("generator")).collect();
        let f = Filtration::new(lattice.topology.clone(), GammaChain::new(self.gamma_labels())?, levels)?;
        Ok((lattice, f))
    }

    /// `ρ(U) = min{γ : U ⊆ F(γ)}`; `None` stands for `∞`.
    pub fn pseudo_place(&self, u: &RationalSubspace) -> Option<Rational> {
        self.levels.iter().position(|l| u.is_subspace_of(l)).map(|i| self.values[i].clone())
    }
}

pub fn pseudo_place(f: &HilbertFamily, u: &RationalSubspace) -> Option<Rational> {
    f.pseudo_place(u)
}

fn le_opt(a: &Option<Rational>, b: &Option<Rational>) -> bool {
    match (a, b) {
        (_, None) => true,
        (None, Some(_)) => false,
        (Some(x), Some(y)) => x <= y,
    }
}

/// `ρ(U+V) ≤ max` and `ρ(U∩V) ≤ min` over all pairs of `subspaces`.
pub fn check_subadditivity(f: &HilbertFamily, subspaces: &[RationalSubspace]) -> Check {
    for u in subspaces {
        for v in subspaces {
            let (ru, rv) = (f.pseudo_place(u), f.pseudo_place(v));
            let (lo, hi) = if le_opt(&ru, &rv) { (ru.clone(), rv.clone()) } else { (rv.clone(), ru.clone()) };
            let (Ok(sum), Ok(cap)) = (u.join(v), u.meet(v)) else {
                return Check::fail(format!("{u} and {v} live in different spaces"));
            };
            if !le_opt(&f.pseudo_place(&sum), &hi) {
                return Check::fail(format!("ρ({u} + {v})"));
            }
            if !le_opt(&f.pseudo_place(&cap), &lo) {
                return Check::fail(format!("ρ({u} ∩ {v})"));
            }
        }
    }
    Check::ok()
}

/// `ρ̄` restricted to a finite set of lines.
#[derive(Clone, Debug, Serialize)]
pub struct LineValues {
    pub dim: usize,
    pub lines: Vec<LineValue>,
}

#[derive(Clone, Debug, Serialize)]
pub struct LineValue {
    pub line: RationalSubspace,
    #[serde(serialize_with = "crate::qser::place")]
    pub value: Option<Rational>,
}

pub fn line_values(f: &HilbertFamily, lines: &[RationalSubspace]) -> LineValues {
    LineValues { dim: f.dim, lines: lines.iter().map(|l| LineValue { line: l.clone(), value: f.pseudo_place(l) }).collect() }
}

#[derive(Clone, Debug, Serialize)]
pub struct Reconstruction {
    #[serde(serialize_with = "crate::qser::many")]
    pub values: Vec<Rational>,
    pub levels: Vec<RationalSubspace>,
    pub spans_ambient: bool,
}

/// Per `γ`, the largest subspace spanned by registered lines whose `ρ̄` is at
/// most `γ`.
pub fn reconstruct_filtration(rho: &LineValues, values: &[Rational]) -> Result<Reconstruction, HilbertError> {
    if rho.lines.is_empty() {
        return Err(HilbertError::NoLines);
    }
    let all: Vec<Vec<Rational>> = rho.lines.iter().flat_map(|lv| lv.line.basis().to_vec()).collect();
    let spans_ambient = RationalSubspace::span(rho.dim, &all)?.rank() == rho.dim;
    let mut levels = Vec::new();
    for g in values {
        let mut acc = RationalSubspace::zero(rho.dim);
        for lv in &rho.lines {
            if le_opt(&lv.value, &Some(g.clone())) {
                acc = acc.join(&lv.line)?;
            }
        }
        levels.push(acc);
    }
    Ok(Reconstruction { values: values.to_vec(), levels, spans_ambient })
}

/// The reconstruction reproduces every level of `f`.
pub fn reconstruction_matches(f: &HilbertFamily, r: &Reconstruction) -> Check {
    for (i, (a, b)) in f.levels.iter().zip(&r.levels).enumerate() {
        if a != b {
            return Check::fail(format!("F({}) = {a} but reconstructed {b}", f.values[i]));
        }
    }
    Check::ok()
}

/// Coordinate lines, eigenvector lines of every eigenspace basis and the sum
/// of all coordinate vectors: a line set from which every level is spanned.
pub fn standard_lines(op: &OperatorSpec) -> Vec<RationalSubspace> {
    let d = op.dim();
    let mut out: BTreeSet<RationalSubspace> = (0..d).map(|i| RationalSubspace::axis(d, i)).collect();
    for e in &op.eigenspaces {
        for v in e.basis() {
            out.insert(RationalSubspace::line(v.clone()));
        }
    }
    out.insert(RationalSubspace::line(vec![Rational::one(); d]));
    out.into_iter().collect()
}
