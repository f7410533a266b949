//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use std::process::{Command, ExitCode};

use dematel::engine::{
    aggregate_responses, apply_alpha_cut, compute_prominence, compute_threshold, compute_trm,
    normalize_drm, run_pipeline, PipelineInput, PipelineOptions,
};
use dematel::matrix::{mat_mul, neumann_total_relation};
use dematel::model::{validate_expert_response, RawResponse};
use dematel::sensitivity::{monte_carlo_stability, monte_carlo_stability_sequential};
use dematel::{
    fixtures, io, AnalysisResult, CriteriaSet, Criterion, DenseMatrix, EngineError, ExpertResponse,
    Group, NormalizationMode, NormalizedMatrix, PerturbationSpec, TotalRelationMatrix,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const NORMALIZED_TOL: f64 = 5e-4;
const TOTAL_RELATION_TOL: f64 = 1e-3;
const ALPHA_PUBLISHED: f64 = 0.9752;
const ALPHA_TOL: f64 = 5e-4;
const IDENTITY_TOL: f64 = 1e-12;
const PUBLISHED_ALPHA_TOL: f64 = 1e-3;
const PROMINENCE_TOL: f64 = 5e-3;
const ALPHA_CUT_TOL: f64 = 1e-3;
const ALPHA_CUT_MIN_MATCHES: usize = 97;
const ALPHA_CUT_ERRATA: [(&str, &str); 3] = [("C3", "C8"), ("C3", "C9"), ("C5", "C3")];
const ORACLE_TOL: f64 = 1e-9;
const SERIES_TOL: f64 = 1e-16;
const INVARIANT_TOL: f64 = 1e-9;
const PROPERTY_CASES: usize = 200;
const ENUMERATION_TOL: f64 = 0.02;
const ENUMERATION_TRIALS: usize = 10_000;

type Outcome = Result<String, String>;
type DotEdge = (String, String, String);
type Check = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn reference(name: &str) -> (Vec<String>, Vec<Vec<String>>) {
    let path = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures/reference")
        .join(name);
    let text = fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines
        .next()
        .unwrap()
        .split(',')
        .map(str::to_owned)
        .collect();
    let rows = lines
        .map(|l| l.split(',').map(|c| c.trim().to_owned()).collect())
        .collect();
    (header, rows)
}

/// Published square table as (codes, values), row code then columns in order.
fn reference_matrix(name: &str) -> (Vec<String>, Vec<Vec<f64>>) {
    let (header, rows) = reference(name);
    let codes: Vec<String> = header[1..].to_vec();
    let values = rows
        .iter()
        .enumerate()
        .map(|(i, r)| {
            assert_eq!(r[0], codes[i], "{name}: row order");
            r[1..].iter().map(|v| v.parse::<f64>().unwrap()).collect()
        })
        .collect();
    (codes, values)
}

fn fixture_trm() -> Result<TotalRelationMatrix, String> {
    let nrm = normalize_drm(&fixtures::direct_relation(), NormalizationMode::default())
        .map_err(|e| e.to_string())?;
    compute_trm(&nrm).map_err(|e| e.to_string())
}

fn criterion_1() -> Outcome {
    let nrm = normalize_drm(&fixtures::direct_relation(), NormalizationMode::default())
        .map_err(|e| e.to_string())?;
    ensure(nrm.divisor() == 24.1, || format!("s = {}", nrm.divisor()))?;
    let (codes, table) = reference_matrix("normalized.csv");
    let mut worst = 0.0f64;
    for (i, row) in table.iter().enumerate() {
        for (j, &published) in row.iter().enumerate() {
            let rounded = (nrm.values()[(i, j)] * 1e4).round() / 1e4;
            let diff = (rounded - published).abs();
            worst = worst.max(diff);
            ensure(diff <= NORMALIZED_TOL, || {
                format!("({},{}) {rounded} vs {published}", codes[i], codes[j])
            })?;
        }
    }
    Ok(format!("s = 24.1, 100/100 cells, worst diff {worst:.1e}"))
}

fn criterion_2() -> Outcome {
    let trm = fixture_trm()?;
    let (codes, table) = reference_matrix("total_relation.csv");
    let mut bad = Vec::new();
    for (i, row) in table.iter().enumerate() {
        for (j, &published) in row.iter().enumerate() {
            let ours = trm.values()[(i, j)];
            if (ours - published).abs() > TOTAL_RELATION_TOL {
                bad.push(format!(
                    "({},{}) {ours:.4} vs {published}",
                    codes[i], codes[j]
                ));
            }
        }
    }
    let matched = 100 - bad.len();
    ensure(bad.is_empty(), || {
        format!("{matched}/100 cells; off: {}", bad.join(", "))
    })?;
    Ok("100/100 cells".into())
}

fn criterion_3() -> Outcome {
    let cs = fixtures::criteria();
    let trm = fixture_trm()?;
    let alpha = compute_threshold(&trm);
    ensure((alpha - ALPHA_PUBLISHED).abs() <= ALPHA_TOL, || {
        format!("alpha = {alpha}")
    })?;
    let records = compute_prominence(&trm, &cs).map_err(|e| e.to_string())?;
    let n2 = (cs.len() * cs.len()) as f64;
    let from_d = records.iter().map(|r| r.d).sum::<f64>() / n2;
    ensure((from_d - alpha).abs() <= IDENTITY_TOL, || {
        format!("sum D / n^2 = {from_d} vs alpha {alpha}")
    })?;
    let (_, rows) = reference("prominence.csv");
    let published = rows
        .iter()
        .map(|r| r[1].parse::<f64>().unwrap())
        .sum::<f64>()
        / n2;
    ensure((published - alpha).abs() <= PUBLISHED_ALPHA_TOL, || {
        format!("published sum D / 100 = {published} vs alpha {alpha}")
    })?;
    Ok(format!(
        "alpha = {alpha}, published sum D / 100 = {published:.5}"
    ))
}

fn criterion_4() -> Outcome {
    let cs = fixtures::criteria();
    let records = compute_prominence(&fixture_trm()?, &cs).map_err(|e| e.to_string())?;
    let (_, rows) = reference("prominence.csv");
    ensure(rows.len() == records.len(), || "row count".into())?;
    let mut worst = 0.0f64;
    for (row, rec) in rows.iter().zip(&records) {
        ensure(row[0] == rec.criterion.code, || {
            format!("order {} vs {}", row[0], rec.criterion.code)
        })?;
        let ours = [rec.d, rec.r, rec.prominence, rec.relation];
        for (k, name) in ["D", "R", "D+R", "D-R"].iter().enumerate() {
            let published: f64 = row[k + 1].parse().unwrap();
            let diff = (ours[k] - published).abs();
            worst = worst.max(diff);
            ensure(diff <= PROMINENCE_TOL, || {
                format!("{} {name}: {} vs {published}", row[0], ours[k])
            })?;
        }
        ensure(row[5] == rec.group.to_string(), || {
            format!("{} group {} vs {}", row[0], rec.group, row[5])
        })?;
    }
    let causes: Vec<&str> = records
        .iter()
        .filter(|r| r.group == Group::Cause)
        .map(|r| r.criterion.code.as_str())
        .collect();
    ensure(causes == ["C1", "C2", "C3", "C10"], || {
        format!("causes {causes:?}")
    })?;
    Ok(format!(
        "40 values, worst diff {worst:.1e}, cause = {causes:?}"
    ))
}

fn criterion_5() -> Outcome {
    let trm = fixture_trm()?;
    let cut = apply_alpha_cut(&trm, compute_threshold(&trm));
    let (codes, table) = reference_matrix("alpha_cut.csv");
    let mut matched = 0;
    let mut off = Vec::new();
    for (i, row) in table.iter().enumerate() {
        for (j, &published) in row.iter().enumerate() {
            let ours = cut[(i, j)];
            let same_pattern = (ours == 0.0) == (published == 0.0);
            if same_pattern && (ours - published).abs() <= ALPHA_CUT_TOL {
                matched += 1;
            } else {
                off.push((codes[i].as_str(), codes[j].as_str()));
            }
        }
    }
    let unexpected: Vec<_> = off
        .iter()
        .filter(|c| !ALPHA_CUT_ERRATA.contains(c))
        .collect();
    ensure(
        matched >= ALPHA_CUT_MIN_MATCHES && unexpected.is_empty(),
        || format!("{matched}/100 cells; mismatches {off:?}"),
    )?;
    Ok(format!("{matched}/100 cells, mismatches {off:?}"))
}

fn criterion_6() -> Outcome {
    let published: [(&str, &str, [i64; 10], f64); 3] = [
        ("C2", "C1", [4, 1, 0, 4, 1, 4, 3, 4, 4, 4], 2.9),
        ("C7", "C2", [4, 4, 4, 4, 1, 3, 4, 4, 4, 4], 3.6),
        ("C9", "C2", [3, 0, 0, 3, 3, 3, 1, 0, 0, 0], 1.3),
    ];
    let cs = fixtures::criteria();
    let panel = fixtures::survey();
    let drm = aggregate_responses(&panel, &cs).map_err(|e| e.to_string())?;
    let pair = CriteriaSet::new(vec![Criterion::new("A", "a"), Criterion::new("B", "b")]).unwrap();
    for (from, to, scores, mean) in published {
        let (i, j) = (cs.index_of(from).unwrap(), cs.index_of(to).unwrap());
        let shipped: Vec<i64> = panel
            .iter()
            .map(|r| i64::from(r.score(i, j).value()))
            .collect();
        ensure(shipped == scores, || {
            format!("{from}->{to} survey vector {shipped:?}")
        })?;
        ensure(drm.values()[(i, j)] == mean, || {
            format!("{from}->{to} = {} in the full panel", drm.values()[(i, j)])
        })?;
        // the same vector in isolation, one two-criterion response per score
        let solo: Vec<ExpertResponse> = scores
            .iter()
            .enumerate()
            .map(|(e, &s)| {
                let raw = RawResponse {
                    expert_id: format!("E{e}"),
                    scores: vec![vec![0, s], vec![0, 0]],
                };
                validate_expert_response(&raw, &pair).unwrap()
            })
            .collect();
        let alone = aggregate_responses(&solo, &pair).map_err(|e| e.to_string())?;
        ensure(alone.values()[(0, 1)] == mean, || {
            format!("{from}->{to} = {} in isolation", alone.values()[(0, 1)])
        })?;
    }
    Ok("2.9, 3.6, 1.3 exact".into())
}

fn random_substochastic(rng: &mut ChaCha8Rng) -> DenseMatrix {
    let n = rng.random_range(2..=12);
    let mut m = DenseMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { rng.random::<f64>() });
    let target: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..=0.95)).collect();
    let sums = m.row_sums();
    m = DenseMatrix::from_fn(n, n, |i, j| {
        if sums[i] == 0.0 {
            0.0
        } else {
            m[(i, j)] * target[i] / sums[i]
        }
    });
    m
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    for case in 0..PROPERTY_CASES {
        let x = random_substochastic(&mut rng);
        let nrm = NormalizedMatrix::from_matrix(x.clone(), 1.0, NormalizationMode::RowMax)
            .map_err(|e| format!("case {case}: {e}"))?;
        let t = compute_trm(&nrm).map_err(|e| format!("case {case}: {e}"))?;
        let s = neumann_total_relation(&x, SERIES_TOL).map_err(|e| format!("case {case}: {e}"))?;
        let diff = t.values().max_abs_diff(&s);
        worst = worst.max(diff);
        ensure(diff <= ORACLE_TOL, || {
            format!("case {case} (n = {}): diff {diff:e}", x.n_rows())
        })?;
    }
    Ok(format!("{PROPERTY_CASES} matrices, worst diff {worst:.1e}"))
}

fn random_panel(rng: &mut ChaCha8Rng) -> (CriteriaSet, Vec<ExpertResponse>) {
    let n = rng.random_range(2..=12);
    let p = rng.random_range(1..=15);
    let cs = CriteriaSet::new(
        (0..n)
            .map(|i| Criterion::new(format!("K{i}"), format!("factor {i}")))
            .collect(),
    )
    .unwrap();
    let panel = (0..p)
        .map(|e| {
            let scores = (0..n)
                .map(|i| {
                    (0..n)
                        .map(|j| if i == j { 0 } else { rng.random_range(0..=4) })
                        .collect()
                })
                .collect();
            let raw = RawResponse {
                expert_id: format!("E{e}"),
                scores,
            };
            validate_expert_response(&raw, &cs).unwrap()
        })
        .collect();
    (cs, panel)
}

fn run(cs: &CriteriaSet, panel: &[ExpertResponse]) -> Result<Option<AnalysisResult>, String> {
    match run_pipeline(PipelineInput::Panel(panel), cs, &PipelineOptions::default()) {
        Ok(r) => Ok(Some(r)),
        Err(EngineError::DegenerateMatrix | EngineError::ConvergenceFailure(_)) => Ok(None),
        Err(e) => Err(e.to_string()),
    }
}

fn check_invariants(case: usize, rng: &mut ChaCha8Rng) -> Result<bool, String> {
    let (cs, panel) = random_panel(rng);
    let Some(a) = run(&cs, &panel)? else {
        return Ok(false);
    };
    let n = cs.len();
    let x = a.nrm.values();
    let t = a.trm.values();
    let fixed = t.max_abs_diff(&x.add(&mat_mul(x, t).unwrap()).unwrap());
    ensure(fixed <= INVARIANT_TOL, || {
        format!("case {case}: |T - X - XT| = {fixed:e}")
    })?;
    let rel: f64 = a.records.iter().map(|r| r.relation).sum();
    ensure(rel.abs() <= INVARIANT_TOL, || {
        format!("case {case}: sum relation {rel:e}")
    })?;
    ensure(
        t.as_slice()
            .iter()
            .zip(x.as_slice())
            .all(|(tv, xv)| *tv >= *xv),
        || format!("case {case}: T < X somewhere"),
    )?;

    let mut perm: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        perm.swap(i, rng.random_range(0..=i));
    }
    let pcs = cs.permuted(&perm);
    let ppanel: Vec<_> = panel.iter().map(|r| r.permuted(&perm)).collect();
    let b = run(&pcs, &ppanel)?.ok_or_else(|| format!("case {case}: permuted panel failed"))?;
    if a.records.iter().all(|r| r.relation.abs() > INVARIANT_TOL) {
        let groups = |r: &AnalysisResult| {
            r.records
                .iter()
                .map(|x| (x.criterion.code.clone(), x.group.as_str()))
                .collect::<BTreeSet<_>>()
        };
        ensure(groups(&a) == groups(&b), || {
            format!("case {case}: groups differ")
        })?;
    }
    if t.as_slice()
        .iter()
        .all(|v| (v - a.alpha).abs() > INVARIANT_TOL)
    {
        let edges = |r: &AnalysisResult| {
            r.edges
                .iter()
                .map(|e| (e.from.code.clone(), e.to.code.clone()))
                .collect::<BTreeSet<_>>()
        };
        ensure(edges(&a) == edges(&b), || {
            format!("case {case}: edges differ")
        })?;
    }

    let low = apply_alpha_cut(&a.trm, a.alpha);
    let high = apply_alpha_cut(&a.trm, a.alpha + rng.random_range(0.0..1.0));
    ensure(
        high.as_slice()
            .iter()
            .zip(low.as_slice())
            .all(|(h, l)| *h == 0.0 || h == l),
        || format!("case {case}: raising alpha kept a new cell"),
    )?;
    let again = TotalRelationMatrix::from_matrix(low.clone()).unwrap();
    ensure(apply_alpha_cut(&again, a.alpha) == low, || {
        format!("case {case}: cut not idempotent")
    })?;
    Ok(true)
}

fn criterion_8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut checked = 0;
    for case in 0..PROPERTY_CASES {
        if check_invariants(case, &mut rng)? {
            checked += 1;
        }
    }
    Ok(format!(
        "{checked}/{PROPERTY_CASES} panels non-degenerate, all invariants hold"
    ))
}

fn stability_bytes(report: &dematel::StabilityReport) -> String {
    format!(
        "{}{}/{}",
        io::write_stability_csv(report),
        report.trials_run,
        report.degenerate_trials
    )
}

fn criterion_9() -> Outcome {
    let cs = fixtures::criteria();
    let panel = fixtures::survey();
    let mode = NormalizationMode::default();
    let base = run_pipeline(
        PipelineInput::Panel(&panel),
        &cs,
        &PipelineOptions::default(),
    )
    .map_err(|e| e.to_string())?;
    let still = PerturbationSpec::new(0.0, 1, 1, 50).unwrap();
    let report = monte_carlo_stability(&panel, &cs, &still, mode).map_err(|e| e.to_string())?;
    for (rec, p) in base.records.iter().zip(&report.cause_probability) {
        let expected = if rec.group == Group::Cause { 1.0 } else { 0.0 };
        ensure(*p == expected, || {
            format!("{}: {p} with no flips", rec.criterion.code)
        })?;
    }

    let spec = PerturbationSpec::new(0.3, 1, 2024, 500).unwrap();
    let first = stability_bytes(
        &monte_carlo_stability(&panel, &cs, &spec, mode).map_err(|e| e.to_string())?,
    );
    let second = stability_bytes(
        &monte_carlo_stability(&panel, &cs, &spec, mode).map_err(|e| e.to_string())?,
    );
    let sequential = stability_bytes(
        &monte_carlo_stability_sequential(&panel, &cs, &spec, mode).map_err(|e| e.to_string())?,
    );
    ensure(first == second, || "repeat run differs".into())?;
    ensure(first == sequential, || {
        "parallel and sequential differ".into()
    })?;

    // n = 2, one expert scoring A->B = 2 and B->A = 1, every cell flipped by one:
    // the four outcomes (1,0) (1,2) (3,0) (3,2) are equally likely, A is cause in three
    let pair = CriteriaSet::new(vec![Criterion::new("A", "a"), Criterion::new("B", "b")]).unwrap();
    let solo = vec![validate_expert_response(
        &RawResponse {
            expert_id: "only".into(),
            scores: vec![vec![0, 2], vec![1, 0]],
        },
        &pair,
    )
    .unwrap()];
    let exact = [0.75, 0.25];
    let spec = PerturbationSpec::new(1.0, 1, 9, ENUMERATION_TRIALS).unwrap();
    let mc = monte_carlo_stability(&solo, &pair, &spec, mode).map_err(|e| e.to_string())?;
    let close = mc
        .cause_probability
        .iter()
        .zip(exact)
        .all(|(got, want)| (got - want).abs() <= ENUMERATION_TOL);
    ensure(close, || {
        format!("enumeration case: {:?} vs {exact:?}", mc.cause_probability)
    })?;
    Ok(format!(
        "no-flip partition exact, reruns identical, n = 2 case {:?} vs {exact:?}",
        mc.cause_probability
    ))
}

/// Minimal DOT reader: returns node ids and (from, to, label) edges.
fn parse_dot(text: &str) -> Result<(Vec<String>, Vec<DotEdge>), String> {
    let body = text
        .trim()
        .strip_prefix("digraph")
        .and_then(|s| s.trim_start().split_once('{'))
        .and_then(|(_, rest)| rest.trim_end().strip_suffix('}'))
        .ok_or("not a digraph block")?;
    let quoted = |s: &str| -> Result<(String, usize), String> {
        let s = s.trim_start();
        let inner = s.strip_prefix('"').ok_or(format!("expected id in {s:?}"))?;
        let end = inner.find('"').ok_or("unterminated id")?;
        Ok((inner[..end].to_owned(), s.len() - inner.len() + end + 1))
    };
    let mut nodes = Vec::new();
    let mut edges = Vec::new();
    for stmt in body.lines().map(str::trim).filter(|l| !l.is_empty()) {
        let stmt = stmt
            .strip_suffix(';')
            .ok_or(format!("missing ';' in {stmt:?}"))?;
        if !stmt.starts_with('"') {
            continue;
        }
        let (first, used) = quoted(stmt)?;
        let rest = stmt[used..].trim_start();
        let attrs = |s: &str| -> Result<String, String> {
            let s = s.trim();
            s.strip_prefix('[')
                .and_then(|a| a.strip_suffix(']'))
                .map(str::to_owned)
                .ok_or(format!("bad attribute list {s:?}"))
        };
        if let Some(after) = rest.strip_prefix("->") {
            let (second, used) = quoted(after)?;
            let list = attrs(&after.trim_start()[used..])?;
            let label = list
                .split("label=\"")
                .nth(1)
                .and_then(|l| l.split('"').next())
                .ok_or("edge without label")?;
            edges.push((first, second, label.to_owned()));
        } else {
            attrs(rest)?;
            nodes.push(first);
        }
    }
    Ok((nodes, edges))
}

fn analyze(out: &Path) -> Result<(), String> {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures");
    let status = Command::new(env!("CARGO_BIN_EXE_dematel"))
        .arg("analyze")
        .arg("--criteria")
        .arg(root.join("criteria.csv"))
        .arg("--survey")
        .arg(root.join("survey_synthetic.csv"))
        .arg("--output-dir")
        .arg(out)
        .output()
        .map_err(|e| e.to_string())?;
    ensure(status.status.success(), || {
        format!(
            "analyze failed: {}",
            String::from_utf8_lossy(&status.stderr)
        )
    })
}

fn criterion_10() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    analyze(&a)?;
    analyze(&b)?;
    let files = ["report.json", "digraph.dot", "scatter.csv"];
    for f in files {
        let (x, y) = (fs::read(a.join(f)), fs::read(b.join(f)));
        ensure(matches!((&x, &y), (Ok(x), Ok(y)) if x == y), || {
            format!("{f} missing or differs on rerun")
        })?;
    }
    io::parse_report_json(&fs::read_to_string(a.join("report.json")).unwrap())
        .map_err(|e| format!("report.json: {e}"))?;
    let (nodes, edges) = parse_dot(&fs::read_to_string(a.join("digraph.dot")).unwrap())?;
    ensure(nodes.len() == 10, || format!("{} nodes", nodes.len()))?;
    ensure(
        edges
            .iter()
            .any(|(f, t, w)| f == "C2" && t == "C1" && w == "0.9975"),
        || "no C2 -> C1 @ 0.9975 edge".into(),
    )?;
    let scatter = fs::read_to_string(a.join("scatter.csv")).unwrap();
    ensure(
        scatter.lines().any(|l| l == "C1,19.50125,1.4226752,cause"),
        || format!("scatter rows: {scatter}"),
    )?;
    Ok(format!(
        "3 files byte-identical on rerun, {} nodes, {} edges",
        nodes.len(),
        edges.len()
    ))
}

fn main() -> ExitCode {
    let criteria: [Check; 10] = [
        ("normalized matrix", criterion_1),
        ("total-relation matrix", criterion_2),
        ("threshold", criterion_3),
        ("prominence and relation", criterion_4),
        ("alpha-cut matrix with errata", criterion_5),
        ("worked-cell aggregation", criterion_6),
        ("oracle equivalence", criterion_7),
        ("invariant suite", criterion_8),
        ("sensitivity determinism", criterion_9),
        ("end-to-end CLI", criterion_10),
    ];
    let mut failed = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail}", k + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {detail}", k + 1);
            }
        }
    }
    println!("{} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
