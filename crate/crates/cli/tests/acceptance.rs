//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! Every oracle here is written against the definitions, not the library
//! code it checks.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode, Stdio};
use std::time::{Duration, Instant};

use cceval_core::agreement::{alpha, AgreementError, AgreementTable, Level};
use cceval_core::auto_metrics::{levenshtein, rouge_l, rouge_n, tokenize, SourceKind, TokenSequence};
use cceval_core::human_metrics::{count_revisions, human_score, precision, recall, CorrectnessView, RatioScore};
use cceval_core::itemizer::{itemize, itemize_note, SplitConfig};
use cceval_core::model::{validate_checklist, validate_note, ChecklistDoc, ChecklistItemDoc, NoteDoc, NoteItemDoc};
use cceval_core::session::{ChecklistJudgementUpdate, JudgementBatch, NoteJudgementUpdate};
use cceval_core::stats::{pearson, spearman, PValueMethod, PERMUTATION_TOLERANCE};
use cceval_core::{Checklist, Correctness, EvaluationSession, Importance, ItemizedNote, Phase, Presence};
use cceval_service::export::export_session_csv;
use cceval_service::store::{RecordKind, Store, StoreError};
use chrono::{DateTime, TimeZone, Utc};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

const CRASH_ENV: &str = "CCEVAL_ACCEPT_CRASH_DIR";

fn main() -> ExitCode {
    if let Ok(dir) = std::env::var(CRASH_ENV) {
        crash_writer(Path::new(&dir));
    }
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("alpha oracle equivalence", alpha_oracle),
        ("synthetic agreement study", synthetic_study),
        ("rouge and lcs oracles", rouge_oracles),
        ("levenshtein metric axioms", levenshtein_axioms),
        ("correlation statistics", statistics),
        ("human metrics", human_metrics),
        ("itemizer golden corpus", itemizer_corpus),
        ("end-to-end pipeline", end_to_end),
        ("revision stats", revision_stats),
        ("service", service),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (name, check) in criteria {
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {name} ({detail}; {secs:.2}s)"),
            Err(reason) => {
                failed += 1;
                println!("FAIL {name}: {reason} ({secs:.2}s)");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn manifest() -> &'static Path {
    Path::new(env!("CARGO_MANIFEST_DIR"))
}

fn fixtures() -> PathBuf {
    manifest().join("fixtures")
}

fn at(minute: u32) -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2024, 5, 2, 10, minute, 0).unwrap()
}

fn ratio_or_zero(r: Result<RatioScore, cceval_core::human_metrics::MetricError>) -> (usize, usize) {
    r.map(|r| (r.numerator, r.denominator)).unwrap_or((0, 0))
}

// ---------------------------------------------------------------------------
// Krippendorff's alpha
// ---------------------------------------------------------------------------

/// Alpha straight from the pairwise definition: every ordered pair of values
/// within a unit for D_o, every ordered pair of pairable values for D_e.
fn brute_alpha(level: Level, rows: &[Vec<Option<f64>>], categories: usize) -> Option<f64> {
    let units: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| r.iter().flatten().copied().collect::<Vec<f64>>())
        .filter(|u| u.len() >= 2)
        .collect();
    let all: Vec<f64> = units.iter().flatten().copied().collect();
    let n = all.len() as f64;
    if all.is_empty() {
        return None;
    }
    let freq: Vec<f64> = (0..categories).map(|c| all.iter().filter(|v| **v == c as f64).count() as f64).collect();
    let delta = |a: f64, b: f64| -> f64 {
        match level {
            Level::Nominal => f64::from(u8::from(a != b)),
            Level::Interval => (a - b) * (a - b),
            Level::Ordinal => {
                let (lo, hi) = (a.min(b) as usize, a.max(b) as usize);
                let d = freq[lo..=hi].iter().sum::<f64>() - (freq[lo] + freq[hi]) / 2.0;
                d * d
            }
        }
    };
    let mut d_o = 0.0;
    for u in &units {
        let mut s = 0.0;
        for i in 0..u.len() {
            for j in 0..u.len() {
                if i != j {
                    s += delta(u[i], u[j]);
                }
            }
        }
        d_o += s / (u.len() as f64 - 1.0);
    }
    d_o /= n;
    let mut d_e = 0.0;
    for i in 0..all.len() {
        for j in 0..all.len() {
            if i != j {
                d_e += delta(all[i], all[j]);
            }
        }
    }
    d_e /= n * (n - 1.0);
    Some(if d_e == 0.0 { 1.0 } else { 1.0 - d_o / d_e })
}

fn random_table(rng: &mut ChaCha8Rng, level: Level, perfect: bool) -> (AgreementTable, Vec<Vec<Option<f64>>>, usize) {
    let annotators = rng.gen_range(1..=4);
    let units = rng.gen_range(1..=6);
    let cats = rng.gen_range(1..=3);
    let values: Vec<f64> = (0..cats).map(|_| rng.gen_range(-3.0..3.0)).collect();
    let cells: Vec<Vec<Option<usize>>> = (0..units)
        .map(|_| {
            let shared = rng.gen_range(0..cats);
            (0..annotators)
                .map(|_| {
                    (!rng.gen_bool(0.25)).then(|| if perfect { shared } else { rng.gen_range(0..cats) })
                })
                .collect()
        })
        .collect();
    let unit_ids: Vec<String> = (0..units).map(|u| format!("u{u}")).collect();
    let annotator_ids: Vec<String> = (0..annotators).map(|a| format!("a{a}")).collect();
    if level == Level::Interval {
        let real: Vec<Vec<Option<f64>>> =
            cells.iter().map(|r| r.iter().map(|c| c.map(|c| values[c])).collect()).collect();
        let table = AgreementTable::interval(unit_ids, annotator_ids, real.clone()).unwrap();
        (table, real, cats)
    } else {
        let idx: Vec<Vec<Option<f64>>> =
            cells.iter().map(|r| r.iter().map(|c| c.map(|c| c as f64)).collect()).collect();
        let categories = (0..cats).map(|c| format!("k{c}")).collect();
        let table = AgreementTable::categorical(level, categories, unit_ids, annotator_ids, cells).unwrap();
        (table, idx, cats)
    }
}

fn alpha_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xA1FA);
    let levels = [Level::Nominal, Level::Ordinal, Level::Interval];
    let (mut compared, mut undefined, mut worst) = (0, 0, 0.0f64);
    for t in 0..3000 {
        let level = levels[t % 3];
        let (table, rows, cats) = random_table(&mut rng, level, false);
        match (alpha(&table), brute_alpha(level, &rows, cats)) {
            (Ok(got), Some(want)) => {
                let diff = (got.alpha - want).abs();
                ensure!(diff <= 1e-12, "table {t} ({level:?}): alpha {} vs oracle {want}", got.alpha);
                worst = worst.max(diff);
                compared += 1;
            }
            (Err(AgreementError::NoPairableUnits), None) => undefined += 1,
            (got, want) => return Err(format!("table {t}: {got:?} vs oracle {want:?}")),
        }
    }
    ensure!(compared >= 1000, "only {compared} defined tables");
    let mut perfect = 0;
    for t in 0..1000 {
        let (table, _, _) = random_table(&mut rng, levels[t % 3], true);
        if let Ok(r) = alpha(&table) {
            ensure!(r.alpha == 1.0, "perfect table {t} gave {}", r.alpha);
            perfect += 1;
        }
    }
    let elapsed = start.elapsed();
    ensure!(elapsed < Duration::from_secs(10), "took {elapsed:?}");
    Ok(format!(
        "{compared} tables within {worst:.1e}, {undefined} undefined on both sides, {perfect} perfect tables at 1.0"
    ))
}

// ---------------------------------------------------------------------------
// Synthetic agreement study
// ---------------------------------------------------------------------------

/// Large-sample alpha when each annotator independently reports category c
/// for a unit whose true category is t with probability `cond(c, t)`.
fn limit_alpha(level: Level, prior: &[f64], cond: impl Fn(usize, usize) -> f64) -> f64 {
    let k = prior.len();
    let q: Vec<f64> = (0..k).map(|c| (0..k).map(|t| prior[t] * cond(c, t)).sum()).collect();
    let delta = |c: usize, d: usize| -> f64 {
        match level {
            Level::Ordinal => {
                let (lo, hi) = (c.min(d), c.max(d));
                let s = q[lo..=hi].iter().sum::<f64>() - (q[c] + q[d]) / 2.0;
                s * s
            }
            _ => f64::from(u8::from(c != d)),
        }
    };
    let (mut d_o, mut d_e) = (0.0, 0.0);
    for c in 0..k {
        for d in 0..k {
            let both: f64 = (0..k).map(|t| prior[t] * cond(c, t) * cond(d, t)).sum();
            d_o += both * delta(c, d);
            d_e += q[c] * q[d] * delta(c, d);
        }
    }
    1.0 - d_o / d_e
}

fn cceval(args: &[&str]) -> Result<Vec<u8>, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_cceval"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("cceval {args:?}: {}", String::from_utf8_lossy(&out.stderr)));
    }
    Ok(out.stdout)
}

fn synthetic_study() -> Outcome {
    let dir = fixtures().join("agreement_study");
    let targets: Value = serde_json::from_str(&fs::read_to_string(dir.join("targets.json")).unwrap()).unwrap();
    let s = |p: &str| dir.join(p).to_str().unwrap().to_string();
    let (sessions, checklists, notes) = (s("sessions"), s("checklists"), s("notes"));
    let json: Value =
        serde_json::from_slice(&cceval(&["agreement-report", &sessions, &checklists, &notes, "--format", "json"])?)
            .unwrap();

    let binary = |f: f64| limit_alpha(Level::Nominal, &[0.5, 0.5], move |c, t| if c == t { 1.0 - f } else { f });
    let prior: Vec<f64> =
        targets["importance"]["prior"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    let f_imp = targets["importance"]["replace_rate"].as_f64().unwrap();
    let k = prior.len() as f64;
    let ordinal = limit_alpha(Level::Ordinal, &prior, |c, t| (1.0 - f_imp) * f64::from(u8::from(c == t)) + f_imp / k);
    let expected = [
        ("present_absent", "nominal", binary(targets["presence"]["flip_rate"].as_f64().unwrap())),
        ("correct_incorrect", "nominal", binary(targets["correctness"]["flip_rate"].as_f64().unwrap())),
        ("importance", "ordinal", ordinal),
    ];
    let columns = json["columns"].as_array().unwrap();
    ensure!(columns.len() == 3, "{} columns", columns.len());
    let mut detail = Vec::new();
    for ((name, level, target), col) in expected.iter().zip(columns) {
        ensure!(col["name"] == *name && col["level"] == *level, "column {col}");
        ensure!(col["pairwise"].as_array().unwrap().len() == 3, "{name}: pairwise count");
        let joint = col["joint"]["alpha"].as_f64().unwrap();
        ensure!((joint - target).abs() <= 0.05, "{name}: joint {joint:.3} vs target {target:.3}");
        detail.push(format!("{name} {joint:.3}/{target:.3}"));
    }

    let csv = String::from_utf8(cceval(&["agreement-report", &sessions, &checklists, &notes])?).unwrap();
    let mut lines = csv.lines().skip_while(|l| l.starts_with('#'));
    ensure!(lines.next() == Some(",present_absent,correct_incorrect,importance"), "header in\n{csv}");
    let labels: Vec<&str> = lines.map(|l| l.split(',').next().unwrap()).collect();
    ensure!(
        labels == ["data_points", "eval1 - eval2", "eval1 - eval3", "eval2 - eval3", "joint", "mean_pairwise"],
        "row labels {labels:?}"
    );
    Ok(format!("joint alpha vs target: {}", detail.join(", ")))
}

// ---------------------------------------------------------------------------
// ROUGE
// ---------------------------------------------------------------------------

const MAX_LEN: usize = 8;

fn seq_index(s: &[u8]) -> usize {
    let offset = (3usize.pow(s.len() as u32) - 1) / 2;
    offset + s.iter().fold(0usize, |acc, d| acc * 3 + *d as usize)
}

fn all_sequences() -> Vec<Vec<u8>> {
    let mut out = vec![Vec::new()];
    let mut level = vec![Vec::new()];
    for _ in 0..MAX_LEN {
        let next: Vec<Vec<u8>> = level
            .iter()
            .flat_map(|s: &Vec<u8>| (0..3u8).map(move |d| [s.as_slice(), &[d]].concat()))
            .collect();
        out.extend(next.iter().cloned());
        level = next;
    }
    out
}

fn rouge_oracles() -> Outcome {
    let start = Instant::now();
    let seqs = all_sequences();
    let universe = seqs.len();
    let words = 1 + universe / 64;
    for (i, s) in seqs.iter().enumerate() {
        ensure!(seq_index(s) == i, "sequence numbering");
    }
    // every subsequence of every sequence, by mask; longest first
    let mut subs: Vec<Vec<(u8, u32)>> = Vec::with_capacity(universe);
    let mut bits: Vec<u64> = vec![0; universe * words];
    for (i, s) in seqs.iter().enumerate() {
        let mut found: Vec<(u8, u32)> = (0u32..1 << s.len())
            .map(|mask| {
                let sub: Vec<u8> = s.iter().enumerate().filter(|(k, _)| mask >> k & 1 == 1).map(|(_, d)| *d).collect();
                (sub.len() as u8, seq_index(&sub) as u32)
            })
            .collect();
        found.sort_unstable_by(|a, b| b.cmp(a));
        found.dedup();
        for (_, idx) in &found {
            bits[i * words + *idx as usize / 64] |= 1 << (idx % 64);
        }
        subs.push(found);
    }
    let tokens: Vec<TokenSequence> = seqs
        .iter()
        .map(|s| {
            let text: Vec<&str> = s.iter().map(|d| ["a", "b", "c"][*d as usize]).collect();
            tokenize(&text.join(" "), SourceKind::GeneratedNote)
        })
        .collect();

    let mut pairs = 0u64;
    for a in 0..universe {
        for b in 0..universe {
            let r = rouge_l(&tokens[a], &tokens[b]);
            pairs += 1;
            let (la, lb) = (seqs[a].len(), seqs[b].len());
            if la == 0 || lb == 0 {
                ensure!(r.degenerate, "empty pair {a},{b} not degenerate");
                continue;
            }
            let row = &bits[b * words..(b + 1) * words];
            let lcs = subs[a]
                .iter()
                .find(|(_, idx)| row[*idx as usize / 64] >> (idx % 64) & 1 == 1)
                .map(|(len, _)| *len as f64)
                .unwrap();
            let (p, q) = (lcs / la as f64, lcs / lb as f64);
            let f = if p + q > 0.0 { 2.0 * p * q / (p + q) } else { 0.0 };
            if r.precision != p || r.recall != q || r.f1 != f || r.degenerate {
                return Err(format!("rouge_l({:?}, {:?}) = {r:?}, oracle lcs {lcs}", seqs[a], seqs[b]));
            }
        }
    }

    for (k, (cand, reference, n, overlap, cand_grams, ref_grams)) in ROUGE_N_FIXTURES.iter().enumerate() {
        let r = rouge_n(
            &tokenize(cand, SourceKind::GeneratedNote),
            &tokenize(reference, SourceKind::HumanNote),
            *n,
        );
        if *cand_grams == 0 || *ref_grams == 0 {
            ensure!(r.degenerate, "fixture {k}: expected degenerate, got {r:?}");
            continue;
        }
        let (p, q) = (*overlap as f64 / *cand_grams as f64, *overlap as f64 / *ref_grams as f64);
        let f = if p + q > 0.0 { 2.0 * p * q / (p + q) } else { 0.0 };
        ensure!(
            r.precision == p && r.recall == q && (r.f1 - f).abs() < 1e-15,
            "fixture {k} ({cand:?} vs {reference:?}, n={n}): {r:?}"
        );
    }
    let elapsed = start.elapsed();
    ensure!(elapsed < Duration::from_secs(60), "took {elapsed:?}");
    Ok(format!("{pairs} rouge_l pairs exhaustive, {} rouge_n fixtures", ROUGE_N_FIXTURES.len()))
}

/// (candidate, reference, n, clipped overlap, candidate n-grams, reference n-grams), counted by hand.
const ROUGE_N_FIXTURES: [(&str, &str, usize, usize, usize, usize); 50] = [
    ("headache for one day", "headache one day", 1, 3, 4, 3),
    ("headache for one day", "headache one day", 2, 1, 3, 2),
    ("headache for one day", "headache one day", 3, 0, 2, 1),
    ("the cat sat on the mat", "the cat lay on the mat", 1, 5, 6, 6),
    ("the cat sat on the mat", "the cat lay on the mat", 2, 3, 5, 5),
    ("the cat sat on the mat", "the cat lay on the mat", 3, 1, 4, 4),
    ("the the the the", "the cat", 1, 1, 4, 2),
    ("the the the the", "the the cat", 1, 2, 4, 3),
    ("the the the the", "the the cat", 2, 1, 3, 2),
    ("no fevers no vomiting", "no fevers", 1, 2, 4, 2),
    ("no fevers no vomiting", "no fevers", 2, 1, 3, 1),
    ("no fevers no vomiting", "no no no", 1, 2, 4, 3),
    ("no fevers no vomiting", "no no no", 2, 0, 3, 2),
    ("Pain 8/10, worse on bending.", "pain 8 10 worse when bending", 1, 5, 6, 6),
    ("Pain 8/10, worse on bending.", "pain 8 10 worse when bending", 2, 3, 5, 5),
    ("Pain 8/10, worse on bending.", "pain 8 10 worse when bending", 3, 2, 4, 4),
    ("a b a b a b", "b a b a", 1, 4, 6, 4),
    ("a b a b a b", "b a b a", 2, 3, 5, 3),
    ("a b a b a b", "b a b a", 3, 2, 4, 2),
    ("a b a b a b", "b a b a", 4, 1, 3, 1),
    ("x y z", "z y x", 1, 3, 3, 3),
    ("x y z", "z y x", 2, 0, 2, 2),
    ("x y z", "x y z", 3, 1, 1, 1),
    ("x y z", "x y z", 4, 0, 0, 0),
    ("", "anything here", 1, 0, 0, 2),
    ("anything here", "", 1, 0, 2, 0),
    ("!!! ...", "ok", 1, 0, 0, 1),
    ("Smokes 10 a day", "smokes ten a day", 1, 3, 4, 4),
    ("Smokes 10 a day", "smokes ten a day", 2, 1, 3, 3),
    ("Headache HEADACHE headache", "headache", 1, 1, 3, 1),
    ("Headache HEADACHE headache", "headache headache headache headache", 1, 3, 3, 4),
    ("Headache HEADACHE headache", "headache headache headache headache", 2, 2, 2, 3),
    ("one two three four five", "six seven eight", 1, 0, 5, 3),
    ("one two three four five", "five four three two one", 1, 5, 5, 5),
    ("one two three four five", "five four three two one", 2, 0, 4, 4),
    ("one two three four five", "one two three four five", 2, 4, 4, 4),
    ("one two three four five", "one two three four five", 5, 1, 1, 1),
    ("one two three four five", "one two three four five", 6, 0, 0, 0),
    ("a a b b", "a b a b", 1, 4, 4, 4),
    ("a a b b", "a b a b", 2, 1, 3, 3),
    ("a a b b", "a b b a", 2, 2, 3, 3),
    ("a a b b", "a b b a", 3, 1, 2, 2),
    ("took paracetamol no relief", "paracetamol gave no relief", 1, 3, 4, 4),
    ("took paracetamol no relief", "paracetamol gave no relief", 2, 1, 3, 3),
    ("took paracetamol no relief", "paracetamol gave no relief", 3, 0, 2, 2),
    ("pt sandy hx", "Pt: sandy, hx.", 3, 1, 1, 1),
    ("c c c d", "c c d d", 1, 3, 4, 4),
    ("c c c d", "c c d d", 2, 2, 3, 3),
    ("c c c d", "c c d d", 3, 1, 2, 2),
    ("c d c d c", "d c d", 2, 2, 4, 2),
];

// ---------------------------------------------------------------------------
// Levenshtein
// ---------------------------------------------------------------------------

/// Edit distance by memoised recursion on prefixes.
fn edit_oracle(a: &[char], b: &[char]) -> usize {
    fn go(a: &[char], b: &[char], memo: &mut HashMap<(usize, usize), usize>) -> usize {
        if a.is_empty() || b.is_empty() {
            return a.len() + b.len();
        }
        if let Some(v) = memo.get(&(a.len(), b.len())) {
            return *v;
        }
        let (ra, rb) = (&a[..a.len() - 1], &b[..b.len() - 1]);
        let sub = go(ra, rb, memo) + usize::from(a[a.len() - 1] != b[b.len() - 1]);
        let v = sub.min(go(ra, b, memo) + 1).min(go(a, rb, memo) + 1);
        memo.insert((a.len(), b.len()), v);
        v
    }
    go(a, b, &mut HashMap::new())
}

fn levenshtein_axioms() -> Outcome {
    let kitten = levenshtein("kitten", "sitting");
    ensure!(kitten.distance == 3, "kitten/sitting = {}", kitten.distance);
    ensure!(edit_oracle(&['k', 'i', 't', 't', 'e', 'n'], &"sitting".chars().collect::<Vec<_>>()) == 3, "oracle");

    let alphabet = ['a', 'b', 'c', 'é', 'A', ' '];
    let mut rng = ChaCha8Rng::seed_from_u64(0x1E7);
    let word = |rng: &mut ChaCha8Rng| -> String {
        let len = rng.gen_range(0..=12);
        (0..len).map(|_| *alphabet.choose(rng).unwrap()).collect()
    };
    for k in 0..10_000 {
        let (a, b, c) = (word(&mut rng), word(&mut rng), word(&mut rng));
        let d = |x: &str, y: &str| levenshtein(x, y).distance;
        let (ac, bc): (Vec<char>, Vec<char>) = (a.chars().collect(), b.chars().collect());
        let ab = d(&a, &b);
        ensure!(ab == edit_oracle(&ac, &bc), "pair {k}: {a:?} {b:?} gave {ab}");
        ensure!(d(&a, &a) == 0, "identity {a:?}");
        ensure!((ab == 0) == (a == b), "indiscernibles {a:?} {b:?}");
        ensure!(ab == d(&b, &a), "symmetry {a:?} {b:?}");
        ensure!(ab <= d(&a, &c) + d(&c, &b), "triangle {a:?} {b:?} {c:?}");
        ensure!(ab >= ac.len().abs_diff(bc.len()) && ab <= ac.len().max(bc.len()), "bounds {a:?} {b:?}");
    }
    Ok("10000 pairs, kitten/sitting = 3".into())
}

// ---------------------------------------------------------------------------
// Statistics
// ---------------------------------------------------------------------------

fn textbook_r(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    (sxx > 0.0 && syy > 0.0).then(|| sxy / (sxx * syy).sqrt())
}

/// Average ranks from counting: below + (ties + 1) / 2.
fn count_ranks(x: &[f64]) -> Vec<f64> {
    x.iter()
        .map(|v| {
            let below = x.iter().filter(|w| *w < v).count() as f64;
            let ties = x.iter().filter(|w| *w == v).count() as f64;
            below + (ties + 1.0) / 2.0
        })
        .collect()
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for slot in 0..n {
            let mut q = p.clone();
            q.insert(slot, n - 1);
            out.push(q);
        }
    }
    out
}

/// Two-sided exhaustive permutation test: (r, p).
fn exhaustive_p(x: &[f64], y: &[f64]) -> Option<(f64, f64)> {
    let r = textbook_r(x, y)?;
    let perms = permutations(y.len());
    let hits = perms
        .iter()
        .filter(|p| {
            let yp: Vec<f64> = p.iter().map(|i| y[*i]).collect();
            textbook_r(x, &yp).unwrap().abs() >= r.abs() - PERMUTATION_TOLERANCE
        })
        .count();
    Some((r, hits as f64 / perms.len() as f64))
}

fn statistics() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x57A7);
    let mut fixtures = 0;
    for n in 3..=7 {
        for k in 0..40 {
            let draw = |rng: &mut ChaCha8Rng| -> f64 {
                if k % 2 == 0 {
                    f64::from(rng.gen_range(0..4))
                } else {
                    rng.gen_range(-1.0..1.0)
                }
            };
            let x: Vec<f64> = (0..n).map(|_| draw(&mut rng)).collect();
            let y: Vec<f64> = (0..n).map(|_| draw(&mut rng)).collect();
            for (name, got, want) in [
                ("pearson", pearson(&x, &y).ok(), exhaustive_p(&x, &y)),
                ("spearman", spearman(&x, &y).ok(), exhaustive_p(&count_ranks(&x), &count_ranks(&y))),
            ] {
                match (got, want) {
                    (None, None) => {}
                    (Some(got), Some((r, p))) => {
                        ensure!(got.p_method == PValueMethod::ExactPermutation, "n={n}: {:?}", got.p_method);
                        ensure!((got.coefficient - r).abs() < 1e-12, "{name} {x:?} {y:?}: r {} vs {r}", got.coefficient);
                        ensure!(got.p_value == p, "{name} {x:?} {y:?}: p {} vs {p}", got.p_value);
                        fixtures += 1;
                    }
                    (got, want) => return Err(format!("{name} {x:?} {y:?}: {got:?} vs {want:?}")),
                }
            }
        }
    }

    let transforms: [fn(f64) -> f64; 4] = [|v| v * v * v + 2.0 * v, |v| (v / 8.0).exp(), f64::atan, |v| 3.0 * v - 7.0];
    for k in 0..1000 {
        let n = rng.gen_range(3..40);
        let x: Vec<f64> = (0..n).map(|_| f64::from(rng.gen_range(-30..30)) * 0.5).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let f = transforms[k % transforms.len()];
        let fx: Vec<f64> = x.iter().map(|v| f(*v)).collect();
        match (spearman(&x, &y), spearman(&fx, &y)) {
            (Ok(a), Ok(b)) => ensure!(
                a.coefficient.to_bits() == b.coefficient.to_bits() && a.p_value.to_bits() == b.p_value.to_bits(),
                "vector {k}: {a:?} vs {b:?}"
            ),
            (Err(a), Err(b)) => ensure!(a == b, "vector {k}: {a} vs {b}"),
            (a, b) => return Err(format!("vector {k}: {a:?} vs {b:?}")),
        }
    }
    Ok(format!("{fixtures} exact p-values, 1000 monotone transforms bit-identical"))
}

// ---------------------------------------------------------------------------
// Human metrics
// ---------------------------------------------------------------------------

fn random_checklist(rng: &mut ChaCha8Rng) -> Checklist {
    let mut items = Vec::new();
    let mut tops = 0;
    for k in 0..rng.gen_range(1..12) {
        let sub = tops > 0 && rng.gen_bool(0.3);
        if !sub {
            tops += 1;
        }
        items.push(ChecklistItemDoc {
            id: None,
            text: format!("Fact {k}"),
            importance: *Importance::ALL.choose(rng).unwrap(),
            parent_id: sub.then(|| format!("0.{tops}.0")),
            section: None,
        });
    }
    validate_checklist(ChecklistDoc {
        checklist_id: "cl".into(),
        consultation_id: "c".into(),
        audio_ref: None,
        items,
    })
    .unwrap()
}

fn random_note(rng: &mut ChaCha8Rng) -> ItemizedNote {
    let text: String = (0..rng.gen_range(1..6))
        .map(|k| match rng.gen_range(0..3) {
            0 => format!("Statement {k}.\n"),
            1 => format!("Statement {k}, detail {k}.\n"),
            _ => format!("Statement {k}, detail {k} and more {k}.\n"),
        })
        .collect();
    itemize_note("n", "c", &text, &SplitConfig::default()).unwrap()
}

fn correctness(b: bool) -> Correctness {
    if b {
        Correctness::Correct
    } else {
        Correctness::Incorrect
    }
}

fn presence(b: bool) -> Presence {
    if b {
        Presence::Present
    } else {
        Presence::Absent
    }
}

fn note_update(id: &str, c: Correctness, importance: Option<Importance>) -> NoteJudgementUpdate {
    NoteJudgementUpdate {
        note_item_id: id.into(),
        correctness: Some(c),
        importance,
        correctness_post_audio: None,
    }
}

fn judged_session(
    checklist: &Checklist,
    note: &ItemizedNote,
    marks: &[(Correctness, Importance)],
    presences: &[Presence],
) -> EvaluationSession {
    let batch = JudgementBatch {
        note_judgements: note.items().iter().zip(marks).map(|(i, (c, imp))| note_update(i.id(), *c, Some(*imp))).collect(),
        checklist_judgements: checklist
            .items()
            .iter()
            .zip(presences)
            .map(|(i, p)| ChecklistJudgementUpdate { checklist_item_id: i.id().into(), presence: *p })
            .collect(),
    };
    EvaluationSession::start("s", "eval1", checklist, note, at(0))
        .unwrap()
        .apply_judgements(&batch, checklist, note)
        .unwrap()
}

fn human_metrics() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x4E7);
    let pre = CorrectnessView::PreAudio;
    for k in 0..1000 {
        let checklist = random_checklist(&mut rng);
        let note = random_note(&mut rng);
        let marks: Vec<(Correctness, Importance)> = note
            .items()
            .iter()
            .map(|_| (correctness(rng.gen_bool(0.6)), *Importance::ALL.choose(&mut rng).unwrap()))
            .collect();
        let presences: Vec<Presence> = checklist.items().iter().map(|_| presence(rng.gen_bool(0.5))).collect();
        let session = judged_session(&checklist, &note, &marks, &presences);

        let p_all = ratio_or_zero(precision(&session, &note, None, pre));
        let r_all = ratio_or_zero(recall(&session, &checklist, None));
        let (mut p_sum, mut r_sum) = ((0, 0), (0, 0));
        for imp in Importance::ALL {
            let p = ratio_or_zero(precision(&session, &note, Some(imp), pre));
            let r = ratio_or_zero(recall(&session, &checklist, Some(imp)));
            p_sum = (p_sum.0 + p.0, p_sum.1 + p.1);
            r_sum = (r_sum.0 + r.0, r_sum.1 + r.1);
        }
        ensure!(p_all == p_sum, "session {k}: precision {p_all:?} vs partition {p_sum:?}");
        ensure!(r_all == r_sum, "session {k}: recall {r_all:?} vs partition {r_sum:?}");
        ensure!(p_all.1 == note.len() && r_all.1 == checklist.len(), "session {k}: denominators");

        // one flipped note item
        let i = rng.gen_range(0..note.len());
        let flipped = correctness(marks[i].0 != Correctness::Correct);
        let batch = JudgementBatch {
            note_judgements: vec![note_update(note.items()[i].id(), flipped, None)],
            checklist_judgements: vec![],
        };
        let after = session.apply_judgements(&batch, &checklist, &note).unwrap();
        let p_after = ratio_or_zero(precision(&after, &note, None, pre));
        let step: isize = if flipped == Correctness::Correct { 1 } else { -1 };
        ensure!(
            p_after.1 == p_all.1 && p_after.0 as isize == p_all.0 as isize + step,
            "session {k}: precision flip {p_all:?} -> {p_after:?}"
        );
        let (h0, h1) = (human_score(&session, &note, &checklist).unwrap(), human_score(&after, &note, &checklist).unwrap());
        ensure!((h1 - h0).signum() == step as f64, "session {k}: human score {h0} -> {h1}");

        // one flipped checklist item
        let j = rng.gen_range(0..checklist.len());
        let now_present = presences[j] != Presence::Present;
        let batch = JudgementBatch {
            note_judgements: vec![],
            checklist_judgements: vec![ChecklistJudgementUpdate {
                checklist_item_id: checklist.items()[j].id().into(),
                presence: presence(now_present),
            }],
        };
        let after = session.apply_judgements(&batch, &checklist, &note).unwrap();
        let r_after = ratio_or_zero(recall(&after, &checklist, None));
        let step: isize = if now_present { 1 } else { -1 };
        ensure!(
            r_after.1 == r_all.1 && r_after.0 as isize == r_all.0 as isize + step,
            "session {k}: recall flip {r_all:?} -> {r_after:?}"
        );
    }

    // hand-worked fixture
    let checklist = validate_checklist(ChecklistDoc {
        checklist_id: "cl".into(),
        consultation_id: "c".into(),
        audio_ref: None,
        items: [
            ("Headache for three days", Importance::Critical),
            ("Photophobia", Importance::Critical),
            ("No fevers", Importance::NonCritical),
            ("No vomiting", Importance::NonCritical),
            ("Enjoys gardening", Importance::Irrelevant),
        ]
        .into_iter()
        .map(|(text, importance)| ChecklistItemDoc { id: None, text: text.into(), importance, parent_id: None, section: None })
        .collect(),
    })
    .unwrap();
    let item = |text: &str, sentence_index, parent: Option<&str>| NoteItemDoc {
        id: None,
        text: text.into(),
        sentence_index,
        parent_id: parent.map(String::from),
    };
    let note = validate_note(
        NoteDoc {
            note_id: "n".into(),
            consultation_id: "c".into(),
            kind: Default::default(),
            text: "Headache for three days. No fevers, no vomiting. Took paracetamol.".into(),
            items: Some(vec![
                item("Headache for three days", 0, None),
                item("No fevers", 1, None),
                item("no vomiting", 1, Some("1.0")),
                item("Took paracetamol", 2, None),
            ]),
        },
        &SplitConfig::default(),
    )
    .map_err(|e| e.to_string())?;
    use Correctness::{Correct as C, Incorrect as I};
    use Importance::{Critical as Cr, Irrelevant as Ir, NonCritical as Nc};
    use Presence::{Absent as A, Present as P};
    let session = judged_session(&checklist, &note, &[(C, Cr), (I, Cr), (C, Nc), (C, Ir)], &[P, A, P, A, A]);
    let p = precision(&session, &note, None, pre).unwrap();
    let r = recall(&session, &checklist, None).unwrap();
    ensure!((p.numerator, p.denominator, p.value) == (3, 4, 0.75), "precision {p:?}");
    ensure!((r.numerator, r.denominator, r.value) == (2, 5, 0.4), "recall {r:?}");
    let cp = precision(&session, &note, Some(Cr), pre).unwrap();
    let cr = recall(&session, &checklist, Some(Cr)).unwrap();
    ensure!((cp.numerator, cp.denominator) == (1, 2) && (cr.numerator, cr.denominator) == (1, 2), "critical {cp:?} {cr:?}");
    ensure!(
        recall(&session, &checklist, Some(Ir)).unwrap().value == 0.0,
        "irrelevant recall"
    );
    let h = human_score(&session, &note, &checklist).unwrap();
    ensure!(h == (0.75 + 0.4) / 2.0, "human score {h}");

    let post = session.advance(Phase::PostAudio, at(30), &checklist, &note).unwrap();
    let batch = JudgementBatch {
        note_judgements: vec![NoteJudgementUpdate {
            note_item_id: note.items()[1].id().into(),
            correctness: None,
            importance: None,
            correctness_post_audio: Some(C),
        }],
        checklist_judgements: vec![],
    };
    let post = post.apply_judgements(&batch, &checklist, &note).unwrap();
    ensure!(precision(&post, &note, None, pre).unwrap().value == 0.75, "pre-audio precision moved");
    ensure!(precision(&post, &note, None, CorrectnessView::PostAudio).unwrap().value == 1.0, "post-audio precision");
    let rev = count_revisions(&post).unwrap();
    ensure!((rev.changes, rev.incorrect_to_correct, rev.change_rate) == (1, 1, 0.25), "revisions {rev:?}");
    Ok("1000 sessions partitioned, single flips monotone, hand fixture exact".into())
}

// ---------------------------------------------------------------------------
// Itemizer
// ---------------------------------------------------------------------------

const FUZZ_WORDS: &[&str] = &[
    "pain", "No", "fevers", "Dr", "Smith", "e.g", "hx", "8/10", "3.5", "and", "or", "but", "AND", "and/or",
    "PMH:", "HPC:", "Plan:", "nausea", "x", "sandy", "Pt", "2/7", "so", "yet", "nor", "1.", "headache", "Mrs",
    "vs", "etc", "i.e", "EtOH", "37.8C", "(L)", "R)", "--", "é",
];
const FUZZ_SEPARATORS: &[&str] = &[" ", " ", " ", ", ", "; ", ". ", "! ", "? ", "\n", ": ", " - ", ".\n", "  ", "\n\n", "/"];

fn alnum_runs(s: &str) -> Vec<String> {
    s.split(|c: char| !c.is_alphanumeric()).filter(|w| !w.is_empty()).map(String::from).collect()
}

fn itemizer_corpus() -> Outcome {
    let cfg = SplitConfig::default();
    let text = fs::read_to_string(manifest().join("tests/data/worked_note.txt")).unwrap();
    let golden: Vec<(String, String, Option<String>)> =
        serde_json::from_str(&fs::read_to_string(manifest().join("tests/data/worked_note_golden.json")).unwrap()).unwrap();
    let got: Vec<(String, String, Option<String>)> = itemize(&text, &cfg)
        .map_err(|e| e.to_string())?
        .iter()
        .map(|i| (i.id().to_string(), i.text().to_string(), i.parent_id().map(String::from)))
        .collect();
    ensure!(got == golden, "golden tree differs:\n{got:?}");

    let mut rng = ChaCha8Rng::seed_from_u64(0x17E);
    let mut items_total = 0;
    for k in 0..200 {
        let text: String = (0..rng.gen_range(1..60))
            .map(|_| format!("{}{}", FUZZ_WORDS.choose(&mut rng).unwrap(), FUZZ_SEPARATORS.choose(&mut rng).unwrap()))
            .collect();
        let a = itemize_note("n", "c", &text, &cfg).map(|n| serde_json::to_vec(&n.to_doc()).unwrap());
        let b = itemize_note("n", "c", &text, &SplitConfig::default()).map(|n| serde_json::to_vec(&n.to_doc()).unwrap());
        ensure!(a == b, "note {k} not deterministic: {text:?}");
        let Ok(items) = itemize(&text, &cfg) else { continue };
        items_total += items.len();
        let is_conj = |w: &str| cfg.conjunctions.iter().any(|c| c.eq_ignore_ascii_case(w));
        let mut source = alnum_runs(&text).into_iter();
        for run in items.iter().flat_map(|i| alnum_runs(i.text())) {
            loop {
                let Some(next) = source.next() else {
                    return Err(format!("note {k}: item run {run:?} not in source {text:?}"));
                };
                if next == run {
                    break;
                }
                ensure!(is_conj(&next), "note {k}: dropped {next:?} from {text:?}");
            }
        }
        for rest in source {
            ensure!(is_conj(&rest), "note {k}: dropped {rest:?} from {text:?}");
        }
    }
    Ok(format!("golden tree of {} items, 200 fuzz notes ({items_total} items)", golden.len()))
}

// ---------------------------------------------------------------------------
// End to end
// ---------------------------------------------------------------------------

fn pipeline(out: &Path) -> Result<Vec<(String, Vec<u8>)>, String> {
    let dir = fixtures().join("e2e");
    let s = |p: &str| dir.join(p).to_str().unwrap().to_string();
    let (sessions, checklists, notes, human, emb) =
        (s("sessions"), s("checklists"), s("notes"), s("human_notes"), s("embeddings"));
    let steps: Vec<(&str, Vec<&str>)> = vec![
        ("human.json", vec!["human-report", &sessions, &checklists, &notes]),
        ("agreement.csv", vec!["agreement-report", &sessions, &checklists, &notes]),
        ("agreement.json", vec!["agreement-report", &sessions, &checklists, &notes, "--format", "json"]),
        (
            "metrics_checklist.csv",
            vec!["score", &notes, "--ref", "checklist", "--checklists-dir", &checklists, "--embeddings-dir", &emb, "--embedding-model", "toy-16"],
        ),
        (
            "metrics_human.csv",
            vec!["score", &notes, "--ref", "human", "--human-notes-dir", &human, "--embeddings-dir", &emb, "--embedding-model", "toy-16"],
        ),
        (
            "metrics.csv",
            vec![
                "score", &notes, "--ref", "both", "--checklists-dir", &checklists, "--human-notes-dir", &human,
                "--embeddings-dir", &emb, "--embedding-model", "toy-16",
            ],
        ),
    ];
    let mut outputs = Vec::new();
    for (name, args) in steps {
        let bytes = cceval(&args)?;
        fs::write(out.join(name), &bytes).unwrap();
        outputs.push((name.to_string(), bytes));
    }
    let metrics = out.join("metrics.csv").to_str().unwrap().to_string();
    let human_json = out.join("human.json").to_str().unwrap().to_string();
    outputs.push(("correlation.csv".into(), cceval(&["correlate", &metrics, &human_json])?));
    outputs.push(("correlation.json".into(), cceval(&["correlate", &metrics, &human_json, "--format", "json"])?));
    Ok(outputs)
}

fn end_to_end() -> Outcome {
    let start = Instant::now();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let first = pipeline(a.path())?;
    let second = pipeline(b.path())?;
    let elapsed = start.elapsed();
    for ((name, x), (_, y)) in first.iter().zip(&second) {
        ensure!(x == y, "{name} differs between runs");
    }
    ensure!(elapsed < Duration::from_secs(30), "two runs took {elapsed:?}");

    let human: Value = serde_json::from_slice(&first[0].1).unwrap();
    ensure!(human["note_human_scores"].as_object().unwrap().len() == 10, "expected 10 scored notes");
    let agreement: Value = serde_json::from_slice(&first[2].1).unwrap();
    ensure!(agreement["columns"].as_array().unwrap().len() == 3, "agreement columns");
    for (name, kind) in [("metrics_checklist.csv", "checklist"), ("metrics_human.csv", "human")] {
        let text = String::from_utf8(first.iter().find(|(n, _)| n == name).unwrap().1.clone()).unwrap();
        let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).skip(1).collect();
        ensure!(rows.len() == 10 && rows.iter().all(|r| r.split(',').nth(1) == Some(kind)), "{name} rows");
    }

    let csv = String::from_utf8(first[6].1.clone()).unwrap();
    let mut lines = csv.lines().filter(|l| !l.starts_with('#'));
    ensure!(
        lines.next() == Some("metric,spearman_human_ref,spearman_checklist_ref,pearson_human_ref,pearson_checklist_ref"),
        "correlation header in\n{csv}"
    );
    ensure!(lines.count() == 7, "expected 7 metric rows in\n{csv}");

    let json: Value = serde_json::from_slice(&first[7].1).unwrap();
    let mut coef: BTreeMap<(String, String, String), f64> = BTreeMap::new();
    for e in json["correlation"]["entries"].as_array().unwrap() {
        for method in ["spearman", "pearson"] {
            let c = e[method]["coefficient"].as_f64().ok_or_else(|| format!("undefined cell {e}"))?;
            coef.insert((e["metric"].as_str().unwrap().into(), method.into(), e["reference_kind"].as_str().unwrap().into()), c);
        }
    }
    let mut compared = 0;
    for ((metric, method, kind), c) in &coef {
        if kind != "checklist" {
            continue;
        }
        let h = coef[&(metric.clone(), method.clone(), "human".to_string())];
        ensure!(c.abs() > h.abs(), "{metric} {method}: checklist {c:.3} vs human {h:.3}");
        compared += 1;
    }
    ensure!(compared == 14, "compared {compared} coefficients");
    Ok(format!("8 outputs byte-identical over 2 runs, checklist reference stronger on all {compared} coefficients"))
}

// ---------------------------------------------------------------------------
// Revisions
// ---------------------------------------------------------------------------

fn revision_stats() -> Outcome {
    let cfg = SplitConfig::default();
    let text: String = (0..904).map(|k| format!("Statement {k}.\n")).collect();
    let note = itemize_note("n", "c", &text, &cfg).unwrap();
    ensure!(note.len() == 904, "{} items", note.len());
    let checklist = validate_checklist(ChecklistDoc {
        checklist_id: "cl".into(),
        consultation_id: "c".into(),
        audio_ref: None,
        items: vec![ChecklistItemDoc { id: None, text: "Fact".into(), importance: Importance::Critical, parent_id: None, section: None }],
    })
    .unwrap();
    // items 0..9 go C->I, 9..44 go I->C, the rest keep their mark
    let pre = |k: usize| match k {
        0..=8 => Correctness::Correct,
        9..=43 => Correctness::Incorrect,
        _ => correctness(k % 5 != 0),
    };
    let marks: Vec<(Correctness, Importance)> = (0..904).map(|k| (pre(k), Importance::NonCritical)).collect();
    let session = judged_session(&checklist, &note, &marks, &[Presence::Present]);
    let session = session.advance(Phase::PostAudio, at(35), &checklist, &note).unwrap();
    let batch = JudgementBatch {
        note_judgements: note
            .items()
            .iter()
            .enumerate()
            .map(|(k, i)| NoteJudgementUpdate {
                note_item_id: i.id().into(),
                correctness: None,
                importance: None,
                correctness_post_audio: Some(match k {
                    0..=8 => Correctness::Incorrect,
                    9..=43 => Correctness::Correct,
                    _ => pre(k),
                }),
            })
            .collect(),
        checklist_judgements: vec![],
    };
    let session = session.apply_judgements(&batch, &checklist, &note).unwrap();
    let stats = count_revisions(&session).unwrap();
    ensure!(
        (stats.total_items, stats.changes, stats.correct_to_incorrect, stats.incorrect_to_correct) == (904, 44, 9, 35),
        "{stats:?}"
    );
    ensure!(stats.change_rate == 44.0 / 904.0 && format!("{:.4}", stats.change_rate) == "0.0487", "rate {}", stats.change_rate);

    // the same shape pooled over the shipped study, annotator eval1
    let dir = fixtures().join("agreement_study");
    let s = |p: &str| dir.join(p).to_str().unwrap().to_string();
    let report: Value =
        serde_json::from_slice(&cceval(&["human-report", &s("sessions"), &s("checklists"), &s("notes")])?).unwrap();
    let eval1 = &report["per_annotator"]["eval1"]["revisions"];
    ensure!(
        eval1["total_items"] == 904 && eval1["correct_to_incorrect"] == 9 && eval1["incorrect_to_correct"] == 35,
        "study eval1 {eval1}"
    );
    let rate = eval1["change_rate"].as_f64().unwrap();
    ensure!(format!("{rate:.4}") == "0.0487", "study eval1 rate {rate}");
    Ok(format!("change_rate {:.4} on a single session and on the study", stats.change_rate))
}

// ---------------------------------------------------------------------------
// Service
// ---------------------------------------------------------------------------

const CRASH_ITEMS: usize = 3000;

fn crash_checklist(tag: u64) -> ChecklistDoc {
    ChecklistDoc {
        checklist_id: "big".into(),
        consultation_id: "c1".into(),
        audio_ref: None,
        items: (0..CRASH_ITEMS)
            .map(|k| ChecklistItemDoc {
                id: None,
                text: format!("Fact number {k} written in pass {tag} with some padding text"),
                importance: Importance::ALL[k % 3],
                parent_id: None,
                section: Some(["History", "Examination", "Plan"][k * 3 / CRASH_ITEMS].into()),
            })
            .collect(),
    }
}

fn plain_note(id: &str, text: &str) -> NoteDoc {
    NoteDoc { note_id: id.into(), consultation_id: "c1".into(), kind: Default::default(), text: text.into(), items: None }
}

/// Child side of the crash test: writes until killed.
fn crash_writer(dir: &Path) -> ! {
    let store = Store::open(dir, SplitConfig::default()).unwrap();
    if store.current_revision(RecordKind::Checklist, "big").unwrap() == 0 {
        store.put_checklist("big", crash_checklist(0), 0, at(0)).unwrap();
        store.put_note("bn", plain_note("bn", "Pain. No fevers."), 0, at(0)).unwrap();
        store.create_session("bs", "eval1", "big", "bn", at(0)).unwrap();
    }
    let ids: Vec<String> = store.get_checklist("big").unwrap().payload.items().iter().map(|i| i.id().to_string()).collect();
    for tag in 1.. {
        let rev = store.current_revision(RecordKind::Checklist, "big").unwrap();
        store.put_checklist("big", crash_checklist(tag), rev, at(1)).unwrap();
        let p = presence(tag % 2 == 0);
        let batch = JudgementBatch {
            note_judgements: vec![],
            checklist_judgements: ids
                .iter()
                .step_by(7)
                .map(|id| ChecklistJudgementUpdate { checklist_item_id: id.clone(), presence: p })
                .collect(),
        };
        store.update_session("bs", None, at(2), |s, cl, n| s.apply_judgements(&batch, cl, n)).unwrap();
    }
    unreachable!()
}

fn seeded_store(dir: &Path) -> Result<Store, StoreError> {
    let store = Store::open(dir, SplitConfig::default())?;
    let checklist = ChecklistDoc {
        checklist_id: "cl".into(),
        consultation_id: "c1".into(),
        audio_ref: None,
        items: vec![
            ChecklistItemDoc { id: None, text: "Headache for three days".into(), importance: Importance::Critical, parent_id: None, section: Some("History".into()) },
            ChecklistItemDoc { id: None, text: "worse in the \"morning\"".into(), importance: Importance::NonCritical, parent_id: Some("1.1.0".into()), section: None },
            ChecklistItemDoc { id: None, text: "No fevers, no rash".into(), importance: Importance::NonCritical, parent_id: None, section: Some("History".into()) },
            ChecklistItemDoc { id: None, text: "Paracetamol".into(), importance: Importance::Critical, parent_id: None, section: Some("Plan".into()) },
        ],
    };
    store.put_checklist("cl", checklist, 0, at(0))?;
    store.put_note("n", plain_note("n", "Headache for three days, worse in the morning. No fevers. Plan: paracetamol."), 0, at(0))?;
    store.create_session("s", "eval1", "cl", "n", at(1))?;
    let note = store.get_note("n")?.payload;
    let checklist = store.get_checklist("cl")?.payload;
    let batch = JudgementBatch {
        note_judgements: note
            .items()
            .iter()
            .enumerate()
            .map(|(k, i)| note_update(i.id(), correctness(k % 3 != 1), Some(Importance::ALL[k % 3])))
            .collect(),
        checklist_judgements: checklist
            .items()
            .iter()
            .enumerate()
            .map(|(k, i)| ChecklistJudgementUpdate { checklist_item_id: i.id().into(), presence: presence(k % 2 == 0) })
            .collect(),
    };
    store.update_session("s", Some(1), at(2), |s, cl, n| s.apply_judgements(&batch, cl, n))?;
    store.update_session("s", Some(2), at(30), |s, cl, n| s.advance(Phase::PostAudio, at(30), cl, n))?;
    let post = JudgementBatch {
        note_judgements: vec![NoteJudgementUpdate {
            note_item_id: note.items()[1].id().into(),
            correctness: None,
            importance: None,
            correctness_post_audio: Some(Correctness::Correct),
        }],
        checklist_judgements: vec![],
    };
    store.update_session("s", Some(3), at(31), |s, cl, n| s.apply_judgements(&post, cl, n))?;
    Ok(store)
}

fn export(store: &Store) -> Vec<u8> {
    let s = store.get_session("s").unwrap().payload;
    let cl = store.get_checklist(s.checklist_id()).unwrap().payload;
    let n = store.get_note(s.note_id()).unwrap().payload;
    export_session_csv(&s, &cl, &n).unwrap()
}

fn service() -> Outcome {
    // optimistic locking
    let dir = tempfile::tempdir().unwrap();
    let store = seeded_store(dir.path()).map_err(|e| e.to_string())?;
    let rev = store.current_revision(RecordKind::Session, "s").unwrap();
    let first_item = store.get_note("n").unwrap().payload.items()[0].id().to_string();
    let touch = |c: Correctness| JudgementBatch {
        note_judgements: vec![NoteJudgementUpdate {
            note_item_id: first_item.clone(),
            correctness: None,
            importance: None,
            correctness_post_audio: Some(c),
        }],
        checklist_judgements: vec![],
    };
    let before = export(&store);
    let first = store.update_session("s", Some(rev), at(40), |s, cl, n| s.apply_judgements(&touch(Correctness::Incorrect), cl, n));
    ensure!(first.as_ref().map(|r| r.revision).ok() == Some(rev + 1), "first writer: {first:?}");
    let second = store.update_session("s", Some(rev), at(41), |s, cl, n| s.apply_judgements(&touch(Correctness::Correct), cl, n));
    match second {
        Err(StoreError::RevisionConflict { expected, current, .. }) if expected == rev && current == rev + 1 => {}
        other => return Err(format!("stale writer not rejected: {other:?}")),
    }
    let winners = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..6)
            .map(|t| {
                let store = &store;
                let batch = touch(correctness(t % 2 == 0));
                scope.spawn(move || store.update_session("s", Some(rev + 1), at(42), |s, cl, n| s.apply_judgements(&batch, cl, n)).is_ok())
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).filter(|ok| *ok).count()
    });
    ensure!(winners == 1, "{winners} concurrent writers won the same revision");
    ensure!(before != export(&store), "export did not follow the update");

    // CSV export byte stability
    let stable_dir = tempfile::tempdir().unwrap();
    let a = seeded_store(stable_dir.path()).map_err(|e| e.to_string())?;
    let bytes = export(&a);
    ensure!(bytes == export(&a), "repeated export differs");
    drop(a);
    let reopened = Store::open(stable_dir.path(), SplitConfig::default()).unwrap();
    ensure!(bytes == export(&reopened), "export differs after reopening");
    let other_dir = tempfile::tempdir().unwrap();
    ensure!(bytes == export(&seeded_store(other_dir.path()).unwrap()), "independent store exports differently");

    // crash safety
    let crash_dir = tempfile::tempdir().unwrap();
    let exe = std::env::current_exe().unwrap();
    let mut last = 0;
    for round in 0..5u64 {
        let mut child = Command::new(&exe)
            .env(CRASH_ENV, crash_dir.path())
            .stdout(Stdio::null())
            .stderr(Stdio::null())
            .spawn()
            .unwrap();
        let start = Instant::now();
        let watcher = Store::open(crash_dir.path(), SplitConfig::default()).unwrap();
        while watcher.current_revision(RecordKind::Checklist, "big").unwrap_or(0) < last + 2 {
            if start.elapsed() > Duration::from_secs(60) {
                let _ = child.kill();
                return Err("crash writer made no progress".into());
            }
            std::thread::sleep(Duration::from_millis(2));
        }
        std::thread::sleep(Duration::from_millis(3 + 7 * round));
        child.kill().unwrap();
        child.wait().unwrap();

        let store = Store::open(crash_dir.path(), SplitConfig::default()).unwrap();
        let records = store.verify().map_err(|e| format!("round {round}: {e}"))?;
        ensure!(records >= 3, "round {round}: {records} records");
        let rev = store.current_revision(RecordKind::Checklist, "big").unwrap();
        ensure!(rev >= last, "round {round}: revision went back");
        for r in 1..=rev {
            ensure!(
                crash_dir.path().join("checklists").join(format!("big@{r:010}.json")).exists(),
                "round {round}: revision {r} missing"
            );
        }
        for kind in ["checklists", "notes", "sessions"] {
            let temps = fs::read_dir(crash_dir.path().join(kind))
                .unwrap()
                .filter(|e| e.as_ref().unwrap().file_name().to_string_lossy().starts_with(".tmp-"))
                .count();
            ensure!(temps == 0, "round {round}: {temps} temp files left in {kind}");
        }
        ensure!(store.get_checklist("big").unwrap().payload.len() == CRASH_ITEMS, "round {round}: truncated checklist");
        last = rev;
    }

    // nothing outside the Rust workspace is needed
    let root = manifest().parent().unwrap();
    let mut members: Vec<String> = fs::read_dir(root)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    members.sort();
    ensure!(members == ["cli", "core", "service"], "workspace members {members:?}");
    for m in &members {
        ensure!(!root.join(m).join("build.rs").exists(), "{m} has a build script");
    }
    Ok(format!("stale and concurrent writers rejected, export byte-stable, 5 kills survived ({last} revisions)"))
}
