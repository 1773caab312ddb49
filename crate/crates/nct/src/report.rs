//! Commands and their reports.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use nctopo::completion::{
    check_lemma_1_3, completion, pattern_topologies, point_elements, spectra, stone_topology, CompletionError, PointKind,
};
use nctopo::dynamics::{
    dnt_report, moment_space, observed_truth, temporal_points, validate_system, DynSystem, MomentSpace, PREDICATES,
};
use nctopo::hilbert::{
    check_subadditivity, line_values, reconstruct_filtration, reconstruction_matches, spectral_family_of,
    sublattice_closure, SUBLATTICE_CAP,
};
use nctopo::order::{commutative_shadow, validate_skew, Status};
use nctopo::sheaves::{
    check_ltf, is_separated, moment_presheaf, moment_separated, moment_stalk, sheafify, stalk, validate_dyn_presheaf,
    validate_presheaf, verify_theorem_3_4, DynPresheaf, Presheaf, SheafError,
};
use nctopo::space::{FiniteSpace, PointSet};
use nctopo::spectral::{
    abelian_sublattices, centralizers, family_in_abelian, gamma_points, observable, observable_completion, prop_4_1,
    restrict_filtration, validate_filtration, Filtration, AB_DEFAULT_CAP,
};
use nctopo::{Check, Elem, SkewTopology};
use serde::Serialize;
use serde_json::{json, Value};

use crate::build::{poset_def, HilbertModel, Model};
use crate::model::{serialize_model, Block, BlockBody, ModelDocument};

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    Check,
    Shadow,
    Complete,
    Spectrum,
    Dnt,
    Observe,
    Moment,
    Stalks,
    Separated,
    Sheafify,
    Ltf,
    Theorem34,
    Spectralfam,
    Observable,
    Hilbert,
    Export,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Check => "check",
            Command::Shadow => "shadow",
            Command::Complete => "complete",
            Command::Spectrum => "spectrum",
            Command::Dnt => "dnt",
            Command::Observe => "observe",
            Command::Moment => "moment",
            Command::Stalks => "stalks",
            Command::Separated => "separated",
            Command::Sheafify => "sheafify",
            Command::Ltf => "ltf",
            Command::Theorem34 => "theorem34",
            Command::Spectralfam => "spectralfam",
            Command::Observable => "observable",
            Command::Hilbert => "hilbert",
            Command::Export => "export",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Json,
    Dot,
    #[default]
    Text,
}

#[derive(Clone, Debug, Default)]
pub struct Options {
    pub at: Option<String>,
    pub point_kind: Option<PointKind>,
    pub strict: bool,
    pub format: Format,
    pub cap: Option<usize>,
    pub block: Option<String>,
}

/// A finished command.
#[derive(Clone, Debug)]
pub struct Outcome {
    pub block: Option<String>,
    pub result: Value,
    /// Some checked property failed; fatal only under `--strict`.
    pub failed: bool,
    /// A precondition failed; always fatal.
    pub rejected: bool,
    pub dot: Option<String>,
    /// Plain-text output overriding the generic tree rendering.
    pub text: Option<String>,
}

impl Outcome {
    fn new(block: &str, result: Value) -> Outcome {
        Outcome { block: Some(block.to_string()), result, failed: false, rejected: false, dot: None, text: None }
    }

    /// 0 success, 1 validation failure.
    pub fn exit_code(&self, strict: bool) -> i32 {
        if self.rejected || (strict && self.failed) {
            1
        } else {
            0
        }
    }
}

/// Errors in the request itself; the driver exits with status 2.
#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
pub enum RequestError {
    #[error("no {0} block in the model")]
    NoBlock(&'static str),
    #[error("no block named `{0}`")]
    UnknownBlock(String),
    #[error("block `{0}` is a {1}, not a {2}")]
    WrongKind(String, &'static str, String),
    #[error("unknown instant `{0}`")]
    UnknownInstant(String),
    #[error("`{0}` has no DOT output")]
    NoDot(&'static str),
    #[error("block `{block}`: {message}")]
    Engine { block: String, message: String },
}

// ---------------------------------------------------------------------------
// Helpers

fn lab(t: &SkewTopology, e: Elem) -> String {
    t.label(e).to_string()
}

fn labs(t: &SkewTopology, es: impl IntoIterator<Item = Elem>) -> Vec<String> {
    es.into_iter().map(|e| lab(t, e)).collect()
}

fn status(t: &SkewTopology, s: &Status) -> Value {
    match s {
        Status::Holds => json!({"status": "holds"}),
        Status::Fails { witness } => json!({"status": "fails", "witness": witness.describe(t)}),
        Status::Skipped { reason } => json!({"status": "skipped", "reason": reason}),
    }
}

fn check(c: &Check) -> Value {
    serde_json::to_value(c).expect("checks serialize")
}

fn to_value<T: Serialize>(x: &T) -> Value {
    serde_json::to_value(x).expect("reports serialize")
}

fn point_sets(space: &FiniteSpace, sets: &[PointSet]) -> Vec<Vec<String>> {
    sets.iter().map(|s| s.iter().map(|&i| space.points[i].clone()).collect()).collect()
}

fn engine(block: &str, e: impl ToString) -> RequestError {
    RequestError::Engine { block: block.to_string(), message: e.to_string() }
}

/// Hasse diagram of a carrier.
pub fn hasse_dot(name: &str, t: &SkewTopology) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "digraph \"{name}\" {{");
    let _ = writeln!(out, "  rankdir=BT;");
    let _ = writeln!(out, "  node [shape=plaintext];");
    for e in t.elems() {
        let _ = writeln!(out, "  \"{}\";", t.label(e));
    }
    for a in t.elems() {
        for b in t.elems() {
            if t.lt(a, b) && !t.elems().any(|c| t.lt(a, c) && t.lt(c, b)) {
                let _ = writeln!(out, "  \"{}\" -> \"{}\";", t.label(a), t.label(b));
            }
        }
    }
    out.push_str("}\n");
    out
}

/// Specialization order of a finite space: `p → q` when every open holding
/// `q` also holds `p`, reduced to covers.
pub fn specialization_dot(name: &str, space: &FiniteSpace) -> String {
    let n = space.len();
    let below = |p: usize, q: usize| p != q && space.specializes(q, p);
    let mut out = String::new();
    let _ = writeln!(out, "digraph \"{name}\" {{");
    let _ = writeln!(out, "  rankdir=BT;");
    for p in &space.points {
        let _ = writeln!(out, "  \"{p}\";");
    }
    for p in 0..n {
        for q in 0..n {
            if below(p, q) && !(0..n).any(|r| below(p, r) && below(r, q)) {
                let _ = writeln!(out, "  \"{}\" -> \"{}\";", space.points[p], space.points[q]);
            }
        }
    }
    out.push_str("}\n");
    out
}

fn pick<'a, T>(
    map: &'a BTreeMap<String, T>,
    model: &Model,
    want: &'static str,
    named: &Option<String>,
) -> Result<(&'a str, &'a T), RequestError> {
    match named {
        Some(n) => match map.get_key_value(n) {
            Some((k, v)) => Ok((k.as_str(), v)),
            None => match model.order.iter().find(|(b, _)| b == n) {
                Some((_, kind)) => Err(RequestError::WrongKind(n.clone(), kind, want.to_string())),
                None => Err(RequestError::UnknownBlock(n.clone())),
            },
        },
        None => model
            .order
            .iter()
            .find_map(|(b, _)| map.get_key_value(b))
            .map(|(k, v)| (k.as_str(), v))
            .ok_or(RequestError::NoBlock(want)),
    }
}

fn instants(sys: &DynSystem, at: &Option<String>) -> Result<Vec<usize>, RequestError> {
    match at {
        Some(label) => Ok(vec![sys.timeline.index(label).map_err(|_| RequestError::UnknownInstant(label.clone()))?]),
        None => Ok((0..sys.len()).collect()),
    }
}

fn system_with_kind(sys: &DynSystem, opts: &Options) -> DynSystem {
    match opts.point_kind {
        Some(k) => sys.with_point_kind(k),
        None => sys.clone(),
    }
}

fn dyn_with_kind(dp: &DynPresheaf, opts: &Options) -> DynPresheaf {
    let mut dp = dp.clone();
    if let Some(k) = opts.point_kind {
        dp.system = dp.system.with_point_kind(k);
    }
    dp
}

// ---------------------------------------------------------------------------
// Per-object reports

fn axiom_report(t: &SkewTopology) -> (Value, bool) {
    let r = validate_skew(t, true);
    let mut axioms = serde_json::Map::new();
    for (name, s) in r.statuses() {
        axioms.insert(name.to_string(), status(t, s));
    }
    let failed = !r.passes();
    (
        json!({
            "elements": t.labels(),
            "axioms": axioms,
            "skew_topology": r.is_skew(),
            "noncommutative_topology": r.is_noncommutative_topology(),
            "idempotents": labs(t, t.idempotents()),
        }),
        failed,
    )
}

fn check_system(sys: &DynSystem) -> (Value, bool) {
    match validate_system(sys) {
        Ok(r) => {
            let failed = !(r.fibres_skew.holds && r.idempotents_preserved.holds);
            (to_value(&r), failed)
        }
        Err(e) => (json!({"error": e.to_string()}), true),
    }
}

fn check_presheaf(p: &Presheaf) -> (Value, bool) {
    match validate_presheaf(p) {
        Ok(()) => {
            let sep = is_separated(p);
            (json!({"valid": true, "separated": check(&sep), "dims": p.dims()}), false)
        }
        Err(e) => (json!({"valid": false, "error": e.to_string()}), true),
    }
}

fn check_dyn_presheaf(dp: &DynPresheaf) -> (Value, bool) {
    match validate_dyn_presheaf(dp) {
        Ok(()) => (json!({"valid": true}), false),
        Err(e) => (json!({"valid": false, "error": e.to_string()}), true),
    }
}

fn check_filtration(f: &Filtration) -> (Value, bool) {
    match validate_filtration(f) {
        Ok(r) => (json!({"valid": true, "levels": f.describe(), "report": to_value(&r)}), false),
        Err(e) => (json!({"valid": false, "error": e.to_string()}), true),
    }
}

fn hilbert_lattice(h: &HilbertModel, cap: usize) -> Result<nctopo::hilbert::SubspaceLattice, nctopo::hilbert::HilbertError> {
    let mut gens = h.lines.clone();
    if let Some(op) = &h.operator {
        gens.extend(spectral_family_of(op).levels);
    }
    sublattice_closure(&gens, cap)
}

fn run_check(doc: &ModelDocument, model: &Model, opts: &Options) -> Result<Outcome, RequestError> {
    let mut blocks = serde_json::Map::new();
    let mut failed = false;
    let cap = opts.cap.unwrap_or(SUBLATTICE_CAP);
    let selected: Vec<&Block> = doc.blocks.iter().filter(|b| opts.block.as_ref().is_none_or(|n| *n == b.name)).collect();
    if let Some(n) = &opts.block {
        if selected.is_empty() {
            return Err(RequestError::UnknownBlock(n.clone()));
        }
    }
    for b in selected {
        let (value, bad) = match &b.body {
            BlockBody::Poset(_) => axiom_report(&model.posets[&b.name]),
            BlockBody::System(_) => check_system(&system_with_kind(&model.systems[&b.name], opts)),
            BlockBody::Presheaf(_) => match model.presheaves.get(&b.name) {
                Some(p) => check_presheaf(p),
                None => check_dyn_presheaf(&model.dyn_presheaves[&b.name]),
            },
            BlockBody::Filtration(_) => check_filtration(&model.filtrations[&b.name]),
            BlockBody::Hilbert(_) => match hilbert_lattice(&model.hilbert[&b.name], cap) {
                Ok(l) => axiom_report(&l.topology),
                Err(e) => (json!({"error": e.to_string()}), true),
            },
        };
        failed |= bad;
        blocks.insert(b.name.clone(), json!({"kind": b.body.kind(), "passes": !bad, "report": value}));
    }
    let mut out = Outcome::new("", Value::Object(blocks));
    out.block = opts.block.clone();
    out.failed = failed;
    Ok(out)
}

fn run_shadow(model: &Model, opts: &Options) -> Result<Outcome, RequestError> {
    let (name, t) = pick(&model.posets, model, "poset", &opts.block)?;
    let s = commutative_shadow(t).map_err(|e| engine(name, e))?;
    let witness = s.modular_witness.map(|(x, y, z)| json!([lab(t, x), lab(t, y), lab(t, z)]));
    let mut out = Outcome::new(
        name,
        json!({
            "carrier": labs(t, s.carrier.iter().copied()),
            "shadow_meet": s.lattice.elems().map(|a| s.lattice.elems().map(|b| s.lattice.label(s.lattice.meet(a, b)).to_string()).collect::<Vec<_>>()).collect::<Vec<_>>(),
            "modular": status(t, &s.modular),
            "modular_witness": witness,
        }),
    );
    out.failed = !s.modular.holds();
    out.dot = Some(hasse_dot(&format!("SL({name})"), &s.lattice));
    Ok(out)
}

fn run_complete(model: &Model, opts: &Options) -> Result<Outcome, RequestError> {
    let (name, t) = pick(&model.posets, model, "poset", &opts.block)?;
    let c = completion(t).map_err(|e| engine(name, e))?;
    let ct = &c.topology;
    let base_profile = validate_skew(t, true).profile();
    let pattern = pattern_topologies(t, &c).map_err(|e| engine(name, e))?;
    let stone = stone_topology(t, &c).map_err(|e| engine(name, e))?;
    let lemma = match check_lemma_1_3(t) {
        Ok(cmp) => match &cmp.isomorphism {
            Ok(map) => json!({
                "holds": true,
                "strong_shadow": cmp.strong_shadow.labels(),
                "completed_shadow": cmp.completed_shadow.labels(),
                "map": cmp.strong_shadow.elems().map(|e| json!([lab(&cmp.strong_shadow, e), lab(&cmp.completed_shadow, map[e.0])])).collect::<Vec<_>>(),
            }),
            Err(w) => json!({"holds": false, "witness": w}),
        },
        Err(CompletionError::HypothesisNotMet(why)) => json!({"holds": false, "hypothesis_not_met": why}),
        Err(e) => json!({"holds": false, "error": e.to_string()}),
    };
    let defect = c.canonical_defect(t).map(|(a, b)| json!([lab(t, a), lab(t, b)]));
    let mut out = Outcome::new(
        name,
        json!({
            "classes": ct.labels(),
            "canonical": t.elems().map(|e| json!([lab(t, e), lab(ct, c.canonical[e.0])])).collect::<Vec<_>>(),
            "canonical_bijection": c.canonical_is_bijection(),
            "canonical_defect": defect,
            "same_axiom_profile": c.report.profile() == base_profile,
            "axiom_profile": c.report.profile(),
            "strong_idempotents": labs(ct, c.strong_idempotents.iter().copied()),
            "pattern": {
                "t": labs(t, pattern.t_carrier.iter().copied()),
                "pi": labs(ct, pattern.pi_carrier.iter().copied()),
                "pi_equals_pi_of_t": check(&pattern.pi_equals_pi_of_t),
            },
            "stone": {
                "opens": point_sets(&stone.space, &stone.space.opens),
                "meet_inclusion": check(&stone.meet_inclusion),
                "join_inclusion": check(&stone.join_inclusion),
            },
            "strong_shadow_comparison": lemma,
        }),
    );
    out.failed = !c.canonical_is_bijection() || defect.is_some();
    out.dot = Some(hasse_dot(&format!("C({name})"), ct));
    Ok(out)
}

fn run_spectrum(model: &Model, opts: &Options) -> Result<Outcome, RequestError> {
    let (name, t) = pick(&model.posets, model, "poset", &opts.block)?;
    let kind = opts.point_kind.unwrap_or(PointKind::Minimal);
    let c = completion(t).map_err(|e| engine(name, e))?;
    let s = spectra(t, &c, kind).map_err(|e| engine(name, e))?;
    let ct = &c.topology;
    let mut out = Outcome::new(
        name,
        json!({
            "kind": kind,
            "point_elements": labs(t, point_elements(t, kind)),
            "points": labs(ct, s.points.iter().copied()),
            "strong_points": labs(ct, s.strong_points.iter().copied()),
            "opens": point_sets(&s.space, &s.space.opens),
            "strong_opens": point_sets(&s.strong_space, &s.strong_space.opens),
            "join_law": check(&s.join_law),
            "meet_law": check(&s.meet_law),
            "minimal_points_idempotent": check(&s.minimal_points_idempotent),
            "join_irreducible_strong": labs(ct, s.join_irreducible_strong.iter().copied()),
            "strong_points_are_join_irreducibles": s.strong_points_are_join_irreducibles,
        }),
    );
    // the join law is only claimed for prime points
    out.failed = !s.meet_law.holds || (kind == PointKind::Irreducible && !s.join_law.holds);
    out.dot = Some(specialization_dot(&format!("Sp({name})"), &s.space));
    Ok(out)
}

fn run_dnt(model: &Model, opts: &Options) -> Result<Outcome, RequestError> {
    let (name, sys) = pick(&model.systems, model, "system", &opts.block)?;
    let sys = system_with_kind(sys, opts);
    let r = dnt_report(&sys);
    let line = &sys.timeline;
    let shown = instants(&sys, &opts.at)?;
    let interp: Vec<Value> = r
        .interpolation_cases
        .iter()
        .filter(|c| shown.contains(&c.t))
        .map(|c| {
            let s = sys.space(c.t);
            json!({
                "t": line.label(c.t),
                "x": lab(s, c.x),
                "y": lab(s, c.y),
                "witnesses": c.witnesses.iter().map(|&u| line.label(u)).collect::<Vec<_>>(),
                "unambiguous": c.unambiguous.iter().map(|&u| line.label(u)).collect::<Vec<_>>(),
                "endpoint_vacuous": c.endpoint_vacuous,
            })
        })
        .collect();
    let persist: Vec<Value> = r
        .persistence_cases
        .iter()
        .filter(|c| shown.contains(&c.t))
        .map(|c| {
            let s = sys.space(c.t);
            json!({
                "t": line.label(c.t),
                "chain": labs(s, c.chain),
                "interval": c.interval.describe(line),
                "unambiguity": c.unambiguity.describe(line),
                "one_sided": c.one_sided.iter().map(|&u| line.label(u)).collect::<Vec<_>>(),
            })
        })
        .collect();
    let mut out = Outcome::new(
        name,
        json!({
            "interpolation": check(&r.interpolation),
            "persistence": check(&r.persistence),
            "unambiguity": check(&r.unambiguity),
            "endpoint_vacuous": r.endpoint_vacuous,
            "interpolation_cases": interp,
            "persistence_cases": persist,
        }),
    );
    out.failed = !(r.interpolation.holds && r.persistence.holds);
    Ok(out)
}

fn run_observe(model: &Model, opts: &Options) -> Result<Outcome, RequestError> {
    let (name, sys) = pick(&model.systems, model, "system", &opts.block)?;
    let sys = system_with_kind(sys, opts);
    let mut rows = Vec::new();
    let mut failed = false;
    for t0 in instants(&sys, &opts.at)? {
        let mut preds = serde_json::Map::new();
        for p in PREDICATES {
            let v = observed_truth(&sys, p, t0).map_err(|e| engine(name, e))?;
            failed |= v.is_none();
            preds.insert(p.to_string(), v.map_or(Value::Null, |i| Value::String(i.describe(&sys.timeline))));
        }
        rows.push(json!({"t0": sys.timeline.label(t0), "observed": preds}));
    }
    let mut out = Outcome::new(name, Value::Array(rows));
    out.failed = failed;
    Ok(out)
}

fn moment_value(sys: &DynSystem, m: &MomentSpace) -> Value {
    json!({
        "interval": [sys.timeline.label(m.interval.lo), sys.timeline.label(m.interval.hi)],
        "points": m.space.points,
        "opens": point_sets(&m.space, &m.space.opens),
        "string_count": m.strings.len(),
        "closure": to_value(&m.closure),
    })
}

fn run_moment(model: &Model, opts: &Options) -> Result<Outcome, RequestError> {
    let (name, sys) = pick(&model.systems, model, "system", &opts.block)?;
    let sys = system_with_kind(sys, opts);
    let mut rows = Vec::new();
    let mut dot = None;
    let mut failed = false;
    for t in instants(&sys, &opts.at)? {
        let tr = temporal_points(&sys, t).map_err(|e| engine(name, e))?;
        let m = moment_space(&sys, t).map_err(|e| engine(name, e))?;
        failed |= !m.closure.family_closed.holds;
        let s = sys.space(t);
        let points: Vec<Value> = tr
            .points
            .iter()
            .map(|p| json!({"element": lab(s, p.element), "kind": p.kind, "witnesses": p.witnesses.iter().map(|&(u, e)| format!("{}@{}", lab(sys.space(u), e), sys.timeline.label(u))).collect::<Vec<_>>()}))
            .collect();
        if dot.is_none() {
            dot = Some(specialization_dot(&format!("{name}@{}", sys.timeline.label(t)), &m.space));
        }
        rows.push(json!({
            "t": sys.timeline.label(t),
            "temporal_points": points,
            "temporally_pointed": tr.temporally_pointed,
            "continuum": to_value(&tr.continuum),
            "moment_space": moment_value(&sys, &m),
        }));
    }
    let mut out = Outcome::new(name, Value::Array(rows));
    out.failed = failed;
    out.dot = dot;
    Ok(out)
}

/// Static presheaf or dynamical presheaf, first in document order.
enum AnyPresheaf<'a> {
    Static(&'a str, &'a Presheaf),
    Dynamic(&'a str, &'a DynPresheaf),
}

fn pick_presheaf<'a>(model: &'a Model, opts: &Options) -> Result<AnyPresheaf<'a>, RequestError> {
    if let Some(n) = &opts.block {
        if let Some((k, p)) = model.presheaves.get_key_value(n) {
            return Ok(AnyPresheaf::Static(k, p));
        }
    }
    if opts.block.is_none() {
        for (b, _) in &model.order {
            if let Some((k, p)) = model.presheaves.get_key_value(b) {
                return Ok(AnyPresheaf::Static(k, p));
            }
            if let Some((k, p)) = model.dyn_presheaves.get_key_value(b) {
                return Ok(AnyPresheaf::Dynamic(k, p));
            }
        }
        return Err(RequestError::NoBlock("presheaf"));
    }
    let (k, p) = pick(&model.dyn_presheaves, model, "presheaf", &opts.block)?;
    Ok(AnyPresheaf::Dynamic(k, p))
}

fn run_stalks(model: &Model, opts: &Options) -> Result<Outcome, RequestError> {
    match pick_presheaf(model, opts)? {
        AnyPresheaf::Static(name, p) => {
            let kind = opts.point_kind.unwrap_or(PointKind::Minimal);
            let t = &p.base;
            let mut rows = Vec::new();
            let mut failed = false;
            for pt in point_elements(t, kind) {
                let s = stalk(p, pt, kind).map_err(|e| engine(name, e))?;
                failed |= !s.check.holds();
                rows.push(json!({
                    "point": lab(t, pt),
                    "index": labs(t, s.index.iter().copied()),
                    "dim": s.dim,
                    "matches_maximum": s.check.holds(),
                }));
            }
            let mut out = Outcome::new(name, json!({"kind": kind, "stalks": rows}));
            out.failed = failed;
            Ok(out)
        }
        AnyPresheaf::Dynamic(name, dp) => {
            let dp = dyn_with_kind(dp, opts);
            let mut rows = Vec::new();
            let mut failed = false;
            for t in instants(&dp.system, &opts.at)? {
                let mp = moment_presheaf(&dp, t).map_err(|e| engine(name, e))?;
                let mut stalks = Vec::new();
                for q in 0..mp.moment.points.len() {
                    let s = moment_stalk(&dp, &mp, q).map_err(|e| engine(name, e))?;
                    failed |= !s.check.holds();
                    stalks.push(json!({
                        "point": mp.moment.space.points[q],
                        "dim": s.colimit.dim,
                        "matches_maximum": s.check.holds(),
                    }));
                }
                rows.push(json!({"t": dp.system.timeline.label(t), "stalks": stalks}));
            }
            let mut out = Outcome::new(name, Value::Array(rows));
            out.failed = failed;
            Ok(out)
        }
    }
}

fn run_separated(model: &Model, opts: &Options) -> Result<Outcome, RequestError> {
    match pick_presheaf(model, opts)? {
        AnyPresheaf::Static(name, p) => {
            let s = is_separated(p);
            let mut out = Outcome::new(name, json!({"separated": check(&s)}));
            out.failed = !s.holds;
            Ok(out)
        }
        AnyPresheaf::Dynamic(name, dp) => {
            let dp = dyn_with_kind(dp, opts);
            let fibres: Vec<Check> = dp.fibres.iter().map(is_separated).collect();
            let fibres_ok = fibres.iter().all(|c| c.holds);
            let mut rows = Vec::new();
            let mut failed = !fibres_ok;
            for t in instants(&dp.system, &opts.at)? {
                let mp = moment_presheaf(&dp, t).map_err(|e| engine(name, e))?;
                let s = moment_separated(&dp, &mp).map_err(|e| engine(name, e))?;
                failed |= !s.holds;
                rows.push(json!({"t": dp.system.timeline.label(t), "moment_separated": check(&s)}));
            }
            let mut out = Outcome::new(
                name,
                json!({
                    "fibres": fibres.iter().enumerate().map(|(i, c)| json!({"t": dp.system.timeline.label(i), "separated": check(c)})).collect::<Vec<_>>(),
                    "moments": rows,
                    "propagates": !fibres_ok || rows.iter().all(|r| r["moment_separated"]["holds"] == true),
                }),
            );
            out.failed = failed;
            Ok(out)
        }
    }
}

fn dyn_block<'a>(model: &'a Model, opts: &Options) -> Result<(&'a str, DynPresheaf), RequestError> {
    let (name, dp) = pick(&model.dyn_presheaves, model, "dynamical presheaf", &opts.block)?;
    Ok((name, dyn_with_kind(dp, opts)))
}

fn run_sheafify(model: &Model, opts: &Options) -> Result<Outcome, RequestError> {
    let (name, dp) = dyn_block(model, opts)?;
    let mut rows = Vec::new();
    let mut failed = false;
    for t in instants(&dp.system, &opts.at)? {
        let mp = moment_presheaf(&dp, t).map_err(|e| engine(name, e))?;
        let sh = sheafify(&dp, &mp).map_err(|e| engine(name, e))?;
        failed |= !(sh.identity_axiom.holds && sh.gluing_axiom.holds);
        let space = &mp.moment.space;
        rows.push(json!({
            "t": dp.system.timeline.label(t),
            "opens": point_sets(space, &sh.opens),
            "dims": sh.dims,
            "stalk_dims": sh.stalk_dims,
            "canonical_kernel": sh.canonical_kernel.iter().map(|(u, k)| json!({"open": point_sets(space, std::slice::from_ref(u))[0], "kernel": k})).collect::<Vec<_>>(),
            "canonical_injective": sh.canonical_injective(),
            "identity_axiom": check(&sh.identity_axiom),
            "gluing_axiom": check(&sh.gluing_axiom),
        }));
    }
    let mut out = Outcome::new(name, Value::Array(rows));
    out.failed = failed;
    Ok(out)
}

fn run_ltf(model: &Model, opts: &Options) -> Result<Outcome, RequestError> {
    let (name, dp) = dyn_block(model, opts)?;
    let mut rows = Vec::new();
    let mut failed = false;
    for t in instants(&dp.system, &opts.at)? {
        let r = check_ltf(&dp, t).map_err(|e| engine(name, e))?;
        failed |= !r.holds;
        rows.push(json!({"t": dp.system.timeline.label(t), "holds": r.holds, "witness": r.witness, "cases": r.cases}));
    }
    let mut out = Outcome::new(name, Value::Array(rows));
    out.failed = failed;
    Ok(out)
}

fn run_theorem34(model: &Model, opts: &Options) -> Result<Outcome, RequestError> {
    let (name, dp) = dyn_block(model, opts)?;
    let mut rows = Vec::new();
    let (mut failed, mut rejected) = (false, false);
    for t in instants(&dp.system, &opts.at)? {
        let label = dp.system.timeline.label(t);
        match verify_theorem_3_4(&dp, t) {
            Ok(r) => {
                failed |= !r.all_invertible();
                let points: Vec<Value> = r
                    .points
                    .iter()
                    .map(|p| {
                        json!({
                            "point": p.label,
                            "moment_stalk_dim": p.moment_stalk_dim,
                            "fibre_stalk_dim": p.fibre_stalk_dim,
                            "pi": to_value(&p.pi),
                            "invertible": p.invertible,
                            "colimits_agree": p.colimits_agree,
                        })
                    })
                    .collect();
                rows.push(json!({
                    "t": label,
                    "ltf": r.ltf.holds,
                    "fibres_separated": r.fibres_separated,
                    "moment_separated": check(&r.moment_separated),
                    "all_invertible": r.all_invertible(),
                    "points": points,
                }));
            }
            Err(SheafError::PreconditionFailed(why)) => {
                rejected = true;
                rows.push(json!({"t": label, "precondition_failed": why}));
            }
            Err(e) => return Err(engine(name, e)),
        }
    }
    let mut out = Outcome::new(name, Value::Array(rows));
    out.failed = failed || rejected;
    out.rejected = rejected;
    Ok(out)
}

fn run_spectralfam(model: &Model, opts: &Options) -> Result<Outcome, RequestError> {
    let (name, f) = pick(&model.filtrations, model, "filtration", &opts.block)?;
    let t = &f.base;
    let report = match validate_filtration(f) {
        Ok(r) => r,
        Err(e) => {
            let mut out = Outcome::new(name, json!({"valid": false, "error": e.to_string()}));
            out.failed = true;
            out.rejected = true;
            return Ok(out);
        }
    };
    let law = prop_4_1(f);
    let restrictions: Vec<Value> = t
        .elems()
        .filter_map(|mu| restrict_filtration(f, mu).ok())
        .map(|r| to_value(&r))
        .collect();
    let point = gamma_points(f).map_err(|e| engine(name, e))?;
    let cap = opts.cap.unwrap_or(AB_DEFAULT_CAP);
    let ab = match abelian_sublattices(t, cap) {
        Ok(ab) => json!({
            "sublattices": ab.iter().map(|b| labs(t, b.iter().copied())).collect::<Vec<_>>(),
            "family_inside": family_in_abelian(f, &ab),
        }),
        Err(e) => json!({"error": e.to_string()}),
    };
    let mut out = Outcome::new(
        name,
        json!({
            "levels": f.describe(),
            "report": to_value(&report),
            "meet_law": to_value(&law),
            "centralizers": labs(t, centralizers(f)),
            "restrictions": restrictions,
            "gamma_point": to_value(&point),
            "abelian": ab,
        }),
    );
    out.failed = !law.pairs.holds;
    Ok(out)
}

fn run_observable(model: &Model, opts: &Options) -> Result<Outcome, RequestError> {
    let (name, f) = pick(&model.filtrations, model, "filtration", &opts.block)?;
    let t = &f.base;
    let o = observable(f);
    let completed = observable_completion(f).map_err(|e| engine(name, e))?;
    let valid = validate_filtration(f);
    let mut out = Outcome::new(
        name,
        json!({
            "is_filtration": valid.is_ok(),
            "sigma": t.elems().map(|e| json!([lab(t, e), o.values[e.0]])).collect::<Vec<_>>(),
            "domain": labs(t, o.domain.iter().copied()),
            "domain_is_everything": o.domain_is_everything,
            "meet_inequality": check(&o.meet_inequality),
            "join_inequality": check(&o.join_inequality),
            "completion": to_value(&completed),
        }),
    );
    out.failed = !(o.meet_inequality.holds && o.join_inequality.holds);
    Ok(out)
}

fn run_hilbert(model: &Model, opts: &Options) -> Result<Outcome, RequestError> {
    let (name, h) = pick(&model.hilbert, model, "hilbert", &opts.block)?;
    let cap = opts.cap.unwrap_or(SUBLATTICE_CAP);
    let lattice = hilbert_lattice(h, cap).map_err(|e| engine(name, e))?;
    let (axioms, _) = axiom_report(&lattice.topology);
    let mut failed = false;
    let operator = match &h.operator {
        None => Value::Null,
        Some(op) => {
            let fam = spectral_family_of(op);
            let lines = if h.lines.is_empty() { nctopo::hilbert::standard_lines(op) } else { h.lines.clone() };
            let rho = line_values(&fam, &lines);
            let sub = check_subadditivity(&fam, &lattice.elements);
            let rec = reconstruct_filtration(&rho, &fam.values).map_err(|e| engine(name, e))?;
            let matches = reconstruction_matches(&fam, &rec);
            failed |= !sub.holds;
            json!({
                "eigenvalues": fam.values.iter().map(|v| v.to_string()).collect::<Vec<_>>(),
                "levels": fam.levels.iter().map(|l| l.to_string()).collect::<Vec<_>>(),
                "pseudo_place": to_value(&rho.lines),
                "subadditivity": check(&sub),
                "reconstruction": {
                    "levels": rec.levels.iter().map(|l| l.to_string()).collect::<Vec<_>>(),
                    "spans_ambient": rec.spans_ambient,
                    "matches": check(&matches),
                },
            })
        }
    };
    let mut out = Outcome::new(
        name,
        json!({
            "dim": h.dim,
            "lattice": axioms,
            "operator": operator,
        }),
    );
    out.failed = failed;
    out.dot = Some(hasse_dot(name, &lattice.topology));
    Ok(out)
}

fn run_export(doc: &ModelDocument, model: &Model, opts: &Options) -> Result<Outcome, RequestError> {
    if opts.format == Format::Dot {
        if let Some(n) = &opts.block {
            if let Some(sys) = model.systems.get(n) {
                let sys = system_with_kind(sys, opts);
                let t = instants(&sys, &opts.at)?[0];
                let m = moment_space(&sys, t).map_err(|e| engine(n, e))?;
                let mut out = Outcome::new(n, Value::Null);
                out.dot = Some(specialization_dot(&format!("{n}@{}", sys.timeline.label(t)), &m.space));
                return Ok(out);
            }
        }
        let (name, t) = pick(&model.posets, model, "poset", &opts.block)?;
        let mut out = Outcome::new(name, Value::Null);
        out.dot = Some(hasse_dot(name, t));
        return Ok(out);
    }
    let posets: serde_json::Map<String, Value> = model
        .posets
        .iter()
        .map(|(n, t)| {
            let def = poset_def(t);
            (
                n.clone(),
                json!({
                    "elements": t.labels(),
                    "covers": def.order,
                    "meet": t.meet_table().iter().map(|r| r.iter().map(|&i| t.labels()[i].clone()).collect::<Vec<_>>()).collect::<Vec<_>>(),
                    "join": t.join_table().iter().map(|r| r.iter().map(|&i| t.labels()[i].clone()).collect::<Vec<_>>()).collect::<Vec<_>>(),
                }),
            )
        })
        .collect();
    let mut out = Outcome::new("", json!({"blocks": model.order.iter().map(|(n, k)| json!({"name": n, "kind": k})).collect::<Vec<_>>(), "posets": posets}));
    out.block = None;
    out.text = Some(serialize_model(doc));
    Ok(out)
}

pub fn run_command(doc: &ModelDocument, model: &Model, cmd: Command, opts: &Options) -> Result<Outcome, RequestError> {
    match cmd {
        Command::Check => run_check(doc, model, opts),
        Command::Shadow => run_shadow(model, opts),
        Command::Complete => run_complete(model, opts),
        Command::Spectrum => run_spectrum(model, opts),
        Command::Dnt => run_dnt(model, opts),
        Command::Observe => run_observe(model, opts),
        Command::Moment => run_moment(model, opts),
        Command::Stalks => run_stalks(model, opts),
        Command::Separated => run_separated(model, opts),
        Command::Sheafify => run_sheafify(model, opts),
        Command::Ltf => run_ltf(model, opts),
        Command::Theorem34 => run_theorem34(model, opts),
        Command::Spectralfam => run_spectralfam(model, opts),
        Command::Observable => run_observable(model, opts),
        Command::Hilbert => run_hilbert(model, opts),
        Command::Export => run_export(doc, model, opts),
    }
}

// ---------------------------------------------------------------------------
// Rendering

fn text_tree(v: &Value, indent: usize, out: &mut String) {
    let pad = "  ".repeat(indent);
    match v {
        Value::Object(m) => {
            for (k, x) in m {
                if x.is_object() || (x.is_array() && !is_flat(x)) {
                    let _ = writeln!(out, "{pad}{k}:");
                    text_tree(x, indent + 1, out);
                } else {
                    let _ = writeln!(out, "{pad}{k}: {}", scalar(x));
                }
            }
        }
        Value::Array(items) if !is_flat(v) => {
            for x in items {
                let _ = writeln!(out, "{pad}-");
                text_tree(x, indent + 1, out);
            }
        }
        other => {
            let _ = writeln!(out, "{pad}{}", scalar(other));
        }
    }
}

fn is_flat(v: &Value) -> bool {
    match v {
        Value::Array(items) => items.iter().all(|x| !x.is_object() && (!x.is_array() || is_flat(x))),
        Value::Object(_) => false,
        _ => true,
    }
}

fn scalar(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Null => "-".into(),
        Value::Array(items) => format!("[{}]", items.iter().map(scalar).collect::<Vec<_>>().join(", ")),
        other => other.to_string(),
    }
}

/// Output text in the requested format.
pub fn render(cmd: Command, out: &Outcome, format: Format) -> Result<String, RequestError> {
    match format {
        Format::Json => {
            let v = json!({
                "schema": 1,
                "command": cmd.name(),
                "block": out.block,
                "failed": out.failed,
                "result": out.result,
            });
            Ok(serde_json::to_string_pretty(&v).expect("json values print") + "\n")
        }
        Format::Dot => out.dot.clone().ok_or(RequestError::NoDot(cmd.name())),
        Format::Text => {
            if let Some(t) = &out.text {
                return Ok(t.clone());
            }
            let mut s = String::new();
            match &out.block {
                Some(b) => {
                    let _ = writeln!(s, "{} {b}", cmd.name());
                }
                None => {
                    let _ = writeln!(s, "{}", cmd.name());
                }
            }
            text_tree(&out.result, 1, &mut s);
            Ok(s)
        }
    }
}
