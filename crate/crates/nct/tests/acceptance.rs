//! One line per acceptance criterion. Criteria listed in `KNOWN_FAILURES`
//! print FAIL with an explanation but do not fail the run.

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::process::{Command as Process, ExitCode};

use nct::{load, parse_model, render, run_command, serialize_model, Command, Format, Options};
use nctopo::completion::{check_lemma_1_3, completion, CompletionError};
use nctopo::dynamics::{moment_space, observed_truth};
use nctopo::fixtures;
use nctopo::hilbert::{
    line_values, reconstruct_filtration, reconstruction_matches, spectral_family_of, standard_lines,
    sublattice_closure, OperatorSpec, RationalSubspace,
};
use nctopo::order::{commutative_shadow, modular_failure, validate_skew, Elem, SkewTopology, Status, Violation};
use nctopo::random::{random_operator, random_skew, random_tree_diagram};
use nctopo::sheaves::{
    check_against_maximum, colimit, is_separated, moment_presheaf, moment_separated, verify_theorem_3_4, SheafError,
};
use nctopo::spectral::{observable, prop_4_1, validate_filtration};
use nctopo::qi;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const KNOWN_FAILURES: [u32; 2] = [5, 9];

type Verdict = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn axioms_i_to_iv(t: &SkewTopology) -> bool {
    let r = validate_skew(t, true);
    [&r.i, &r.ii, &r.iii, &r.iv].iter().all(|s| s.holds())
}

fn criterion_1() -> Verdict {
    for (name, t) in [("CH2", fixtures::ch2()), ("CH3", fixtures::ch3()), ("B2", fixtures::b2())] {
        ensure(validate_skew(&t, true).is_noncommutative_topology(), || format!("{name} fails an axiom"))?;
    }
    let lines: Vec<RationalSubspace> =
        [[1, 0], [0, 1], [1, 1]].iter().map(|v| RationalSubspace::line(v.iter().map(|&x| qi(x)).collect())).collect();
    let lattice = sublattice_closure(&lines, 100).map_err(|e| e.to_string())?;
    let t = &lattice.topology;
    ensure(t.isomorphism_to(&fixtures::m3()).is_some(), || "closure of three lines is not M3".into())?;
    ensure(axioms_i_to_iv(t), || "generated M3 fails one of (i)-(iv)".into())?;
    let r = validate_skew(t, true);
    let Status::Fails { witness } = &r.v else { return Err("axiom (v) holds on the generated M3".into()) };
    ensure(witness.recheck(t), || "witness does not recheck".into())?;
    let Violation::Cover { x, cover, .. } = witness else { return Err(format!("unexpected witness {witness:?}")) };
    let atoms: BTreeSet<Elem> = lines.iter().map(|l| lattice.position(l).expect("generator")).collect();
    let distinct: BTreeSet<Elem> = cover.iter().copied().chain([*x]).collect();
    ensure(cover.len() == 2 && distinct.len() == 3 && distinct == atoms, || "witness is not an atom over the other two".into())?;
    ensure(t.join_all(cover.iter().copied()) == t.top(), || "cover does not join to 1".into())?;
    Ok(format!("CH2, CH3, B2 pass; generated M3 fails (v) at x = {} over 1 = {} ∨ {}", t.label(*x), t.label(cover[0]), t.label(cover[1])))
}

fn criterion_2() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for i in 0..100 {
        let n = rng.gen_range(2..=8);
        let t = random_skew(&mut rng, n, 40);
        ensure(validate_skew(&t, false).is_skew(), || format!("sample {i} is not skew"))?;
        let s = commutative_shadow(&t).map_err(|e| e.to_string())?;
        ensure(s.modular.holds() && modular_failure(&s.lattice).is_none(), || format!("sample {i}: shadow not modular"))?;
    }
    Ok("100 random skew topologies, |Λ| ≤ 8, zero modular failures".into())
}

/// Upward closed, downward directed subsets, by brute force.
fn filter_count(t: &SkewTopology) -> usize {
    let n = t.len();
    (1u32..(1 << n))
        .filter(|mask| {
            let s: Vec<Elem> = (0..n).filter(|i| mask & (1 << i) != 0).map(Elem).collect();
            let has = |e: Elem| mask & (1 << e.0) != 0;
            s.iter().all(|&x| t.elems().all(|y| !t.leq(x, y) || has(y)))
                && s.iter().all(|&x| s.iter().all(|&y| s.iter().any(|&z| t.leq(z, x) && t.leq(z, y))))
        })
        .count()
}

fn criterion_3() -> Verdict {
    for (name, t) in fixtures::spaces() {
        let c = completion(&t).map_err(|e| e.to_string())?;
        ensure(c.report.profile() == validate_skew(&t, false).profile(), || format!("{name}: profile differs"))?;
        ensure(c.canonical_defect(&t).is_none(), || format!("{name}: canonical map breaks ∧ or ∨"))?;
        ensure(c.canonical_is_bijection(), || format!("{name}: canonical map not bijective"))?;
        ensure(filter_count(&t) == c.filters.len(), || format!("{name}: filter enumeration disagrees"))?;
    }
    Ok("5 fixtures: same profile, ∧ and ∨ preserved, bijection confirmed by filter enumeration".into())
}

fn criterion_4() -> Verdict {
    for (name, t) in [("CH3", fixtures::ch3()), ("B2", fixtures::b2())] {
        let cmp = check_lemma_1_3(&t).map_err(|e| e.to_string())?;
        ensure(cmp.isomorphism.is_ok(), || format!("{name}: {:?}", cmp.isomorphism))?;
    }
    ensure(matches!(check_lemma_1_3(&fixtures::m3()), Err(CompletionError::HypothesisNotMet(_))), || {
        "M3 hypothesis failure not reported".into()
    })?;
    Ok("CH3 and B2 isomorphic via the constructed map; M3 reports the failure of (v)".into())
}

fn criterion_5() -> Verdict {
    let mut failures = Vec::new();
    for (name, sys) in fixtures::systems() {
        for t in 0..sys.len() {
            let m = moment_space(&sys, t).map_err(|e| e.to_string())?;
            let at = sys.timeline.label(t);
            for (what, c) in [("∩", &m.closure.intersection_by_construction), ("∪", &m.closure.union_by_construction)] {
                if !c.holds {
                    failures.push(format!("{name}@{at} {what}: {}", c.witness.clone().unwrap_or_default()));
                }
            }
        }
    }
    if failures.is_empty() {
        Ok("every family closed under ∩ and ∪ by constructed strings".into())
    } else {
        Err(format!(
            "{} (the M3 fibres of DYN_CONST give U(a) ∪ U(b) ≠ U(x) for every accessible x)",
            failures.join("; ")
        ))
    }
}

fn criterion_6() -> Verdict {
    for (name, sys) in fixtures::systems() {
        for t0 in 0..sys.len() {
            let iv = observed_truth(&sys, "shadow-is-DVT", t0).map_err(|e| e.to_string())?;
            ensure(iv.is_some_and(|i| i.contains(t0)), || format!("{name} at {}", sys.timeline.label(t0)))?;
        }
    }
    Ok("shadow-is-DVT observed on an open interval around every instant".into())
}

fn criterion_7() -> Verdict {
    for (name, dp) in [("DYN_CONST_PSH", fixtures::dyn_const_presheaf()), ("DYN_COLLAPSE_PSH", fixtures::dyn_collapse_presheaf())] {
        for t in 0..dp.system.len() {
            let s = verify_theorem_3_4(&dp, t).map_err(|e| format!("{name}: {e}"))?;
            ensure(s.all_invertible() && s.points.iter().all(|p| p.moment_stalk_dim == p.fibre_stalk_dim), || {
                format!("{name} at t{t}: π not invertible")
            })?;
        }
    }
    for (name, dp) in fixtures::dyn_presheaves() {
        for t in 0..dp.system.len() {
            let fibres = dp.fibres.iter().all(|f| is_separated(f).holds);
            let mp = moment_presheaf(&dp, t).map_err(|e| e.to_string())?;
            let moment = moment_separated(&dp, &mp).map_err(|e| e.to_string())?;
            ensure(!fibres || moment.holds, || format!("{name} at t{t}: separated fibres, unseparated P_t"))?;
        }
    }
    ensure(
        matches!(verify_theorem_3_4(&fixtures::ltf_failing_presheaf(), 0), Err(SheafError::PreconditionFailed(_))),
        || "LTF_FAILING not rejected".into(),
    )?;
    Ok("π invertible at every point of DYN_CONST_PSH and DYN_COLLAPSE_PSH; separation transfers; LTF_FAILING rejected".into())
}

fn criterion_8() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for i in 0..100 {
        let d = random_tree_diagram(&mut rng, 6, 5);
        let c = colimit(&d).map_err(|e| e.to_string())?;
        let check = check_against_maximum(&d, &c).map_err(|e| e.to_string())?;
        ensure(check.holds(), || format!("diagram {i}: {check:?}"))?;
    }
    Ok("100 random tree-shaped diagrams, dims ≤ 5, ≤ 6 nodes: quotient equals evaluation at the maximum".into())
}

fn criterion_9() -> Verdict {
    for (name, f) in fixtures::filtrations() {
        validate_filtration(&f).map_err(|e| format!("{name}: {e}"))?;
        let law = prop_4_1(&f);
        ensure(law.pairs.holds, || format!("{name}: {:?}", law.pairs.witness))?;
        ensure(law.shadow.as_ref().is_none_or(|s| s.holds), || format!("{name}: shadow meet law"))?;
        let o = observable(&f);
        ensure(o.meet_inequality.holds && o.join_inequality.holds, || format!("{name}: σ inequality"))?;
        ensure(o.domain_is_everything, || format!("{name}: D(σ) ≠ Λ"))?;
    }
    let gap = fixtures::gap_family();
    let partial = !observable(&gap).domain_is_everything;
    let is_filtration = validate_filtration(&gap).is_ok();
    Err(format!(
        "meet law and σ inequalities hold on all 5 filtrations; D(σ) ≠ Λ only on GAP ({}), which is {}a filtration: a finite monotone chain joining to 1 ends at 1",
        if partial { "σ(1) = ∞" } else { "total" },
        if is_filtration { "" } else { "not " }
    ))
}

fn criterion_10() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for i in 0..20 {
        let dim = rng.gen_range(2..=4);
        let (matrix, _) = random_operator(&mut rng, dim);
        let op = OperatorSpec::new(matrix).map_err(|e| format!("operator {i}: {e}"))?;
        let f = spectral_family_of(&op);
        let r = reconstruct_filtration(&line_values(&f, &standard_lines(&op)), &f.values).map_err(|e| e.to_string())?;
        ensure(r.spans_ambient && reconstruction_matches(&f, &r).holds, || format!("operator {i}: mismatch"))?;
    }
    Ok("20 random operators in dimensions 2 to 4 reconstructed exactly".into())
}

fn fixture_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn exit_code(args: &[&str]) -> Option<i32> {
    Process::new(env!("CARGO_BIN_EXE_nct")).args(args).output().ok()?.status.code()
}

fn criterion_11() -> Verdict {
    let mut files: Vec<PathBuf> = std::fs::read_dir(fixture_dir())
        .map_err(|e| e.to_string())?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "nct"))
        .collect();
    files.sort();
    for p in &files {
        let text = std::fs::read_to_string(p).map_err(|e| e.to_string())?;
        let (doc, model) = load(&text).map_err(|e| format!("{}: {e}", p.display()))?;
        ensure(parse_model(&serialize_model(&doc)).as_ref() == Ok(&doc), || format!("{}: round trip", p.display()))?;
        for cmd in [Command::Check, Command::Export] {
            let opts = Options::default();
            let once = run_command(&doc, &model, cmd, &opts).and_then(|o| render(cmd, &o, Format::Json));
            let twice = run_command(&doc, &model, cmd, &opts).and_then(|o| render(cmd, &o, Format::Json));
            ensure(once == twice, || format!("{}: {} not deterministic", p.display(), cmd.name()))?;
        }
    }
    let spaces = fixture_dir().join("spaces.nct");
    let dynamics = fixture_dir().join("dynamics.nct");
    let (s, d) = (spaces.to_str().unwrap_or_default(), dynamics.to_str().unwrap_or_default());
    let expected = [
        (vec!["check", s, "--block", "M3"], 0),
        (vec!["check", s, "--block", "M3", "--strict"], 1),
        (vec!["check", s, "--block", "CH3", "--strict"], 0),
        (vec!["theorem34", d, "--block", "LTF_FAILING"], 1),
        (vec!["dnt", d, "--at", "nowhere"], 2),
        (vec!["check", "/nonexistent.nct"], 2),
    ];
    for (args, want) in expected {
        let got = exit_code(&args);
        ensure(got == Some(want), || format!("`nct {}` exited {got:?}, expected {want}", args.join(" ")))?;
    }
    let first = Process::new(env!("CARGO_BIN_EXE_nct")).args(["moment", d, "--format", "json"]).output();
    let second = Process::new(env!("CARGO_BIN_EXE_nct")).args(["moment", d, "--format", "json"]).output();
    ensure(matches!((&first, &second), (Ok(a), Ok(b)) if a.stdout == b.stdout), || "binary output differs".into())?;
    Ok(format!("{} shipped files round-trip; reports byte-identical; exit codes 0/1/2 honoured", files.len()))
}

fn main() -> ExitCode {
    let criteria: [(u32, fn() -> Verdict); 11] = [
        (1, criterion_1),
        (2, criterion_2),
        (3, criterion_3),
        (4, criterion_4),
        (5, criterion_5),
        (6, criterion_6),
        (7, criterion_7),
        (8, criterion_8),
        (9, criterion_9),
        (10, criterion_10),
        (11, criterion_11),
    ];
    let mut unexpected = 0;
    for (n, f) in criteria {
        match f() {
            Ok(note) => println!("criterion {n:>2}: PASS  {note}"),
            Err(why) => {
                let known = KNOWN_FAILURES.contains(&n);
                println!("criterion {n:>2}: FAIL  {why}{}", if known { "  [known]" } else { "" });
                if !known {
                    unexpected += 1;
                }
            }
        }
    }
    if unexpected == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
