//! Regenerates the shipped fixtures under `crates/cli/fixtures`.
//!
//! ```text
//! cargo run -p cceval-cli --example make_fixtures [OUT_DIR]
//! ```
//!
//! All randomness comes from fixed seeds, so reruns reproduce the committed
//! files byte for byte.

use std::fs;
use std::path::{Path, PathBuf};

use cceval_core::auto_metrics::{flatten_checklist, tokenize, write_embedding_file, EmbeddingMatrix, SourceKind};
use cceval_core::itemizer::{itemize_note, SplitConfig};
use cceval_core::model::{validate_checklist, ChecklistDoc, ChecklistItemDoc, NoteKind};
use cceval_core::report::{AlignmentDoc, AlignmentMark};
use cceval_core::session::{ChecklistJudgementUpdate, JudgementBatch, NoteJudgementUpdate};
use cceval_core::{Checklist, Correctness, EvaluationSession, Importance, ItemizedNote, Phase, Presence};
use chrono::{DateTime, Duration, TimeZone, Utc};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

const STUDY_SEED: u64 = 20_230_601;
const E2E_SEED: u64 = 57;
const COVERAGE_SEED: u64 = 10;

fn write_json<T: Serialize>(path: &Path, value: &T) {
    fs::create_dir_all(path.parent().unwrap()).unwrap();
    let mut s = serde_json::to_string_pretty(value).unwrap();
    s.push('\n');
    fs::write(path, s).unwrap();
}

fn base_time() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2024, 3, 1, 9, 0, 0).unwrap()
}

fn importance_of(i: usize) -> Importance {
    Importance::ALL[i]
}

fn flip(c: Correctness) -> Correctness {
    match c {
        Correctness::Correct => Correctness::Incorrect,
        Correctness::Incorrect => Correctness::Correct,
    }
}

/// Marks every item, then optionally moves to post-audio, applies the
/// post-audio marks and submits.
#[allow(clippy::too_many_arguments)]
fn build_session(
    id: &str,
    annotator: &str,
    checklist: &Checklist,
    note: &ItemizedNote,
    start: DateTime<Utc>,
    presence: &[Presence],
    marks: &[(Correctness, Importance)],
    post_audio: &[Option<Correctness>],
) -> EvaluationSession {
    let s = EvaluationSession::start(id, annotator, checklist, note, start).unwrap();
    let batch = JudgementBatch {
        note_judgements: note
            .items()
            .iter()
            .zip(marks)
            .map(|(item, (c, i))| NoteJudgementUpdate {
                note_item_id: item.id().to_string(),
                correctness: Some(*c),
                importance: Some(*i),
                correctness_post_audio: None,
            })
            .collect(),
        checklist_judgements: checklist
            .items()
            .iter()
            .zip(presence)
            .map(|(item, p)| ChecklistJudgementUpdate {
                checklist_item_id: item.id().to_string(),
                presence: *p,
            })
            .collect(),
    };
    let s = s.apply_judgements(&batch, checklist, note).unwrap();
    let s = s
        .advance(Phase::PostAudio, start + Duration::minutes(35), checklist, note)
        .unwrap();
    let post = JudgementBatch {
        note_judgements: note
            .items()
            .iter()
            .zip(post_audio)
            .filter_map(|(item, c)| {
                c.map(|c| NoteJudgementUpdate {
                    note_item_id: item.id().to_string(),
                    correctness: None,
                    importance: None,
                    correctness_post_audio: Some(c),
                })
            })
            .collect(),
        checklist_judgements: Vec::new(),
    };
    let s = s.apply_judgements(&post, checklist, note).unwrap();
    s.advance(Phase::Submitted, start + Duration::minutes(45), checklist, note)
        .unwrap()
}

// ---------------------------------------------------------------------------
// Synthetic agreement study
// ---------------------------------------------------------------------------

/// Large-sample alpha of two annotators who each keep the true binary label
/// with probability 1 - f (prevalence 1/2).
fn binary_alpha_limit(f: f64) -> f64 {
    (1.0 - 2.0 * f).powi(2)
}

/// Large-sample ordinal alpha when each annotator replaces the true category
/// (drawn from `pi`) by a uniformly random one with probability `f`.
fn ordinal_alpha_limit(pi: [f64; 3], f: f64) -> f64 {
    let cond = |c: usize, t: usize| (1.0 - f) * f64::from(u8::from(c == t)) + f / 3.0;
    let q: Vec<f64> = (0..3).map(|c| (0..3).map(|t| pi[t] * cond(c, t)).sum()).collect();
    let delta = |c: usize, k: usize| {
        let (lo, hi) = (c.min(k), c.max(k));
        let s: f64 = q[lo..=hi].iter().sum();
        (s - (q[c] + q[k]) / 2.0).powi(2)
    };
    let (mut d_o, mut d_e) = (0.0, 0.0);
    for c in 0..3 {
        for k in 0..3 {
            let joint: f64 = (0..3).map(|t| pi[t] * cond(c, t) * cond(k, t)).sum();
            d_o += joint * delta(c, k);
            d_e += q[c] * q[k] * delta(c, k);
        }
    }
    1.0 - d_o / d_e
}

fn solve_decreasing(target: f64, f: impl Fn(f64) -> f64) -> f64 {
    let (mut lo, mut hi) = (0.0, 0.5);
    for _ in 0..200 {
        let mid = (lo + hi) / 2.0;
        if f(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (lo + hi) / 2.0
}

fn agreement_study(out: &Path) {
    let dir = out.join("agreement_study");
    let _ = fs::remove_dir_all(&dir);
    let mut rng = ChaCha8Rng::seed_from_u64(STUDY_SEED);
    let config = SplitConfig::default();
    let annotators = ["eval1", "eval2", "eval3"];

    let presence_target = 0.739;
    let correctness_target = 0.672;
    let importance_target = 0.522;
    let importance_prior = [0.25, 0.35, 0.40];
    let f_presence = solve_decreasing(presence_target, binary_alpha_limit);
    let f_correctness = solve_decreasing(correctness_target, binary_alpha_limit);
    let f_importance = solve_decreasing(importance_target, |f| ordinal_alpha_limit(importance_prior, f));
    // (correct -> incorrect, incorrect -> correct) after audio, per annotator
    let revisions = [(9usize, 35usize), (4, 35), (3, 20)];

    let consultations = 20;
    let checklist_sizes: Vec<usize> = (0..consultations).map(|i| if i < 18 { 113 } else { 112 }).collect();
    let note_sizes: Vec<usize> = (0..consultations).map(|i| if i < 4 { 46 } else { 45 }).collect();
    assert_eq!(checklist_sizes.iter().sum::<usize>(), 2258);
    assert_eq!(note_sizes.iter().sum::<usize>(), 904);

    let mut checklists = Vec::new();
    let mut notes = Vec::new();
    for c in 0..consultations {
        let consultation = format!("s{:02}", c + 1);
        let mut items = Vec::new();
        for k in 0..checklist_sizes[c] {
            let section = ["History", "Examination", "Social History"][k * 3 / checklist_sizes[c]];
            items.push(ChecklistItemDoc {
                id: None,
                text: format!("Fact {} of consultation {}", k + 1, c + 1),
                importance: importance_of(rng.gen_range(0..3)),
                parent_id: None,
                section: Some(section.to_string()),
            });
        }
        let checklist = validate_checklist(ChecklistDoc {
            checklist_id: format!("{consultation}.checklist"),
            consultation_id: consultation.clone(),
            audio_ref: Some(format!("audio/{consultation}.wav")),
            items,
        })
        .unwrap();
        let text: String = (0..note_sizes[c])
            .map(|k| format!("Statement {} about consultation {}.\n", k + 1, c + 1))
            .collect();
        let note = itemize_note(&format!("{consultation}.note"), &consultation, &text, &config).unwrap();
        assert_eq!(note.len(), note_sizes[c]);
        checklists.push(checklist);
        notes.push(note);
    }

    // ground truth, then per-annotator perturbation
    let truth_presence: Vec<Vec<bool>> = checklists
        .iter()
        .map(|cl| (0..cl.len()).map(|_| rng.gen_bool(0.5)).collect())
        .collect();
    let truth_correct: Vec<Vec<bool>> = notes
        .iter()
        .map(|n| (0..n.len()).map(|_| rng.gen_bool(0.5)).collect())
        .collect();
    let truth_importance: Vec<Vec<usize>> = notes
        .iter()
        .map(|n| {
            (0..n.len())
                .map(|_| {
                    let u: f64 = rng.gen();
                    if u < importance_prior[0] {
                        0
                    } else if u < importance_prior[0] + importance_prior[1] {
                        1
                    } else {
                        2
                    }
                })
                .collect()
        })
        .collect();

    for (a, annotator) in annotators.iter().enumerate() {
        let mut pre: Vec<Vec<(Correctness, Importance)>> = Vec::new();
        let mut presence: Vec<Vec<Presence>> = Vec::new();
        for c in 0..consultations {
            presence.push(
                truth_presence[c]
                    .iter()
                    .map(|&t| {
                        let v = t != rng.gen_bool(f_presence);
                        if v {
                            Presence::Present
                        } else {
                            Presence::Absent
                        }
                    })
                    .collect(),
            );
            pre.push(
                truth_correct[c]
                    .iter()
                    .zip(&truth_importance[c])
                    .map(|(&t, &imp)| {
                        let v = t != rng.gen_bool(f_correctness);
                        let imp = if rng.gen_bool(f_importance) { rng.gen_range(0..3) } else { imp };
                        (
                            if v { Correctness::Correct } else { Correctness::Incorrect },
                            importance_of(imp),
                        )
                    })
                    .collect(),
            );
        }

        // choose which items this annotator revises after audio
        let mut correct_items = Vec::new();
        let mut incorrect_items = Vec::new();
        for (c, marks) in pre.iter().enumerate() {
            for (k, (corr, _)) in marks.iter().enumerate() {
                match corr {
                    Correctness::Correct => correct_items.push((c, k)),
                    Correctness::Incorrect => incorrect_items.push((c, k)),
                }
            }
        }
        let (c2i, i2c) = revisions[a];
        let mut post: Vec<Vec<Option<Correctness>>> = notes.iter().map(|n| vec![None; n.len()]).collect();
        for &(c, k) in correct_items.choose_multiple(&mut rng, c2i) {
            post[c][k] = Some(Correctness::Incorrect);
        }
        for &(c, k) in incorrect_items.choose_multiple(&mut rng, i2c) {
            post[c][k] = Some(Correctness::Correct);
        }

        for c in 0..consultations {
            let note = &notes[c];
            let id = format!("{}.{annotator}", note.note_id());
            let start = base_time() + Duration::days(c as i64) + Duration::hours(a as i64);
            let session = build_session(
                &id,
                annotator,
                &checklists[c],
                note,
                start,
                &presence[c],
                &pre[c],
                &post[c],
            );
            write_json(&dir.join("sessions").join(format!("{id}.json")), &session.to_doc());
        }
    }
    for cl in &checklists {
        write_json(&dir.join("checklists").join(format!("{}.json", cl.checklist_id())), &cl.to_doc());
    }
    for n in &notes {
        write_json(&dir.join("notes").join(format!("{}.json", n.note_id())), &n.to_doc());
    }
    write_json(
        &dir.join("targets.json"),
        &json!({
            "seed": STUDY_SEED,
            "annotators": annotators,
            "presence": {"level": "nominal", "prevalence": 0.5, "flip_rate": f_presence, "units": 2258, "target_alpha": presence_target},
            "correctness": {"level": "nominal", "prevalence": 0.5, "flip_rate": f_correctness, "units": 904, "target_alpha": correctness_target},
            "importance": {"level": "ordinal", "prior": importance_prior, "replace_rate": f_importance, "units": 904, "target_alpha": importance_target},
            "revisions": annotators.iter().zip(revisions).map(|(a, (c2i, i2c))| json!({"annotator": a, "correct_to_incorrect": c2i, "incorrect_to_correct": i2c})).collect::<Vec<_>>(),
        }),
    );
}

// ---------------------------------------------------------------------------
// End-to-end corpus
// ---------------------------------------------------------------------------

struct Consultation {
    facts: &'static [(&'static str, usize, &'static str)],
    human_note: &'static str,
}

const CONSULTATIONS: [Consultation; 5] = [
    Consultation {
        facts: &[
            ("Headache for three days", 2, "History"),
            ("Pain is behind the right eye", 2, "History"),
            ("Severity seven out of ten", 1, "History"),
            ("Worse in the morning", 1, "History"),
            ("No visual disturbance", 2, "History"),
            ("No vomiting", 1, "History"),
            ("Took paracetamol with little relief", 1, "History"),
            ("Works as a teacher", 0, "Social History"),
            ("Non smoker", 1, "Social History"),
            ("Drinks alcohol at weekends", 0, "Social History"),
            ("Advised regular analgesia", 1, "Plan"),
            ("Review in one week", 1, "Plan"),
        ],
        human_note: "3/7 hx of HA behind R eye. Sev 7/10, worse on waking. No visual change, no vom. \
                     Paracetamol tried with minimal effect.\nTeacher. Non-smoker, social EtOH.\n\
                     Plan: regular analgesia, r/v 1/52.",
    },
    Consultation {
        facts: &[
            ("Cough for two weeks", 2, "History"),
            ("Productive of green sputum", 2, "History"),
            ("Mild shortness of breath on exertion", 2, "History"),
            ("Fever at night", 1, "History"),
            ("No chest pain", 2, "History"),
            ("No weight loss", 1, "History"),
            ("History of asthma in childhood", 1, "Past Medical History"),
            ("Uses salbutamol inhaler rarely", 1, "Drug History"),
            ("Smokes ten cigarettes a day", 1, "Social History"),
            ("Chest crackles at left base", 2, "Examination"),
            ("Started amoxicillin course", 1, "Plan"),
        ],
        human_note: "2/52 prod cough, green sputum. SOBOE. Night sweats/fevers. No CP, no wt loss.\n\
                     PMH: childhood asthma. DH: salbutamol PRN.\nSH: 10/day smoker.\n\
                     O/E: L basal creps.\nImp: LRTI, amoxicillin 5/7.",
    },
    Consultation {
        facts: &[
            ("Lower back pain for one month", 2, "History"),
            ("Started after lifting boxes", 1, "History"),
            ("Pain radiates to the left leg", 2, "History"),
            ("No bladder problems", 2, "History"),
            ("No bowel problems", 2, "History"),
            ("No numbness in the saddle area", 2, "History"),
            ("Ibuprofen helps a little", 1, "History"),
            ("Works in a warehouse", 0, "Social History"),
            ("Straight leg raise positive on the left", 2, "Examination"),
            ("Referred for physiotherapy", 1, "Plan"),
        ],
        human_note: "1/12 LBP after lifting at work (warehouse). Radiating L leg. \
                     Denies bladder/bowel sx, no saddle anaesthesia. NSAIDs partial relief.\n\
                     O/E: SLR +ve L.\nPlan: physio referral, safety net re: red flags.",
    },
    Consultation {
        facts: &[
            ("Itchy rash on both arms", 2, "History"),
            ("Rash started five days ago", 1, "History"),
            ("New washing powder last week", 2, "History"),
            ("No new medications", 1, "History"),
            ("No fever", 1, "History"),
            ("History of eczema", 1, "Past Medical History"),
            ("Lives with partner", 0, "Social History"),
            ("Red scaly patches on forearms", 2, "Examination"),
            ("Advised emollients", 1, "Plan"),
            ("Prescribed mild steroid cream", 1, "Plan"),
        ],
        human_note: "5/7 itchy rash bilat forearms since changing detergent. No new meds, apyrexial.\n\
                     PMH: eczema. SH: lives w partner.\nO/E: erythematous scaly plaques forearms.\n\
                     Imp: contact dermatitis. Emollients, hydrocortisone 1%.",
    },
    Consultation {
        facts: &[
            ("Abdominal pain for two days", 2, "History"),
            ("Pain in the right lower abdomen", 2, "History"),
            ("Loss of appetite", 1, "History"),
            ("Nausea without vomiting", 1, "History"),
            ("No diarrhoea", 1, "History"),
            ("Temperature of thirty eight degrees", 2, "Examination"),
            ("Tender in the right iliac fossa", 2, "Examination"),
            ("Referred to surgeons", 2, "Plan"),
        ],
        human_note: "2/7 abdo pain, now RIF. Anorexic, nauseated, no vom, BO normal.\n\
                     O/E: T 38.0, RIF tenderness, guarding.\nImp: ?appendicitis. Referred surgical on-call.",
    },
];

const FABRICATED: [&str; 8] = [
    "Reports chest pain on exertion",
    "Allergic to penicillin",
    "Family history of diabetes",
    "Blood pressure is very high",
    "Recently travelled abroad",
    "Previous heart attack",
    "Taking warfarin daily",
    "Sleeping poorly for months",
];

/// (fraction of checklist facts reported, number of fabricated statements)
const NOTE_QUALITY: [[(f64, usize); 2]; 5] = [
    [(0.9, 0), (0.4, 2)],
    [(0.7, 1), (0.3, 3)],
    [(1.0, 1), (0.5, 0)],
    [(0.6, 2), (0.2, 1)],
    [(0.8, 0), (0.35, 4)],
];

const TOY_DIM: usize = 16;

/// Deterministic pseudo-embedding: a token always maps to the same vector.
fn toy_vector(token: &str) -> Vec<f32> {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in token.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(h);
    (0..TOY_DIM).map(|_| rng.gen_range(-1.0f32..1.0)).collect()
}

fn write_toy_embedding(dir: &Path, id: &str, text: &str, kind: SourceKind) {
    let tokens = tokenize(text, kind).tokens().to_vec();
    let rows: Vec<Vec<f32>> = tokens.iter().map(|t| toy_vector(t)).collect();
    let m = EmbeddingMatrix::from_rows(tokens, &rows).unwrap();
    fs::create_dir_all(dir).unwrap();
    let mut buf = Vec::new();
    write_embedding_file(&mut buf, &m).unwrap();
    fs::write(dir.join(format!("{id}.emb")), buf).unwrap();
}

fn e2e_corpus(out: &Path) {
    let dir = out.join("e2e");
    let _ = fs::remove_dir_all(&dir);
    let mut rng = ChaCha8Rng::seed_from_u64(E2E_SEED);
    let config = SplitConfig::default();
    let annotators = [("a1", 0.03), ("a2", 0.06), ("a3", 0.10)];
    let emb = dir.join("embeddings");

    for (c, consultation) in CONSULTATIONS.iter().enumerate() {
        let cid = format!("c{}", c + 1);
        let checklist = validate_checklist(ChecklistDoc {
            checklist_id: format!("{cid}.checklist"),
            consultation_id: cid.clone(),
            audio_ref: Some(format!("audio/{cid}.wav")),
            items: consultation
                .facts
                .iter()
                .map(|(text, imp, section)| ChecklistItemDoc {
                    id: None,
                    text: text.to_string(),
                    importance: importance_of(*imp),
                    parent_id: None,
                    section: Some(section.to_string()),
                })
                .collect(),
        })
        .unwrap();
        write_json(&dir.join("checklists").join(format!("{}.json", checklist.checklist_id())), &checklist.to_doc());
        write_toy_embedding(&emb, checklist.checklist_id(), &flatten_checklist(&checklist), SourceKind::ChecklistFlattened);

        let mut human = itemize_note(&format!("{cid}.human"), &cid, consultation.human_note, &config)
            .unwrap()
            .to_doc();
        human.kind = NoteKind::Human;
        write_json(&dir.join("human_notes").join(format!("{}.json", human.note_id)), &human);
        write_toy_embedding(&emb, &human.note_id, &human.text, SourceKind::HumanNote);

        for (g, &(recall, fabricated)) in NOTE_QUALITY[c].iter().enumerate() {
            let n_facts = consultation.facts.len();
            let k = ((recall * n_facts as f64).round() as usize).clamp(1, n_facts);
            let mut chosen: Vec<usize> = (0..n_facts).collect();
            chosen.shuffle(&mut rng);
            chosen.truncate(k);
            chosen.sort();
            // sentences: (text, Some(fact index) for true statements)
            let mut sentences: Vec<(String, Option<usize>)> = chosen
                .iter()
                .map(|&f| (consultation.facts[f].0.to_string(), Some(f)))
                .collect();
            for text in FABRICATED.choose_multiple(&mut rng, fabricated) {
                let at = rng.gen_range(0..=sentences.len());
                sentences.insert(at, (text.to_string(), None));
            }
            let text: String = sentences.iter().map(|(s, _)| format!("{s}.\n")).collect();
            let note_id = format!("{cid}.gen-{}", ["a", "b"][g]);
            let note = itemize_note(&note_id, &cid, &text, &config).unwrap();
            assert_eq!(note.len(), sentences.len(), "one item per sentence in {note_id}");
            write_json(&dir.join("notes").join(format!("{note_id}.json")), &note.to_doc());
            write_toy_embedding(&emb, &note_id, &text, SourceKind::GeneratedNote);

            for (a, (annotator, noise)) in annotators.iter().enumerate() {
                let presence: Vec<Presence> = (0..n_facts)
                    .map(|f| {
                        let truth = chosen.contains(&f);
                        if truth != rng.gen_bool(*noise) {
                            Presence::Present
                        } else {
                            Presence::Absent
                        }
                    })
                    .collect();
                let truth_marks: Vec<Correctness> = sentences
                    .iter()
                    .map(|(_, f)| if f.is_some() { Correctness::Correct } else { Correctness::Incorrect })
                    .collect();
                let marks: Vec<(Correctness, Importance)> = sentences
                    .iter()
                    .zip(&truth_marks)
                    .map(|((_, f), &truth)| {
                        let c = if rng.gen_bool(*noise) { flip(truth) } else { truth };
                        let imp = match f {
                            Some(f) if !rng.gen_bool(*noise) => consultation.facts[*f].1,
                            _ => rng.gen_range(0..3),
                        };
                        (c, importance_of(imp))
                    })
                    .collect();
                // after audio, half of the wrong marks are corrected
                let post: Vec<Option<Correctness>> = marks
                    .iter()
                    .zip(&truth_marks)
                    .map(|((c, _), truth)| (c != truth && rng.gen_bool(0.5)).then_some(*truth))
                    .collect();
                let id = format!("{note_id}.{annotator}");
                let start = base_time() + Duration::days((c * 2 + g) as i64) + Duration::hours(a as i64);
                let session =
                    build_session(&id, annotator, &checklist, &note, start, &presence, &marks, &post);
                write_json(&dir.join("sessions").join(format!("{id}.json")), &session.to_doc());
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Checklist alignment (fact coverage)
// ---------------------------------------------------------------------------

fn coverage_fixture(out: &Path) {
    let dir = out.join("coverage");
    let _ = fs::remove_dir_all(&dir);
    let mut rng = ChaCha8Rng::seed_from_u64(COVERAGE_SEED);
    let annotators = [("ann1", 0.03), ("ann2", 0.05)];
    for c in 0..10 {
        let consultation = format!("m{:02}", c + 1);
        let a_items: Vec<(Importance, bool)> = (0..rng.gen_range(40..60))
            .map(|_| (importance_of(rng.gen_range(0..3)), rng.gen_bool(0.94)))
            .collect();
        let b_items: Vec<(Importance, bool)> = (0..rng.gen_range(55..75))
            .map(|_| (importance_of(rng.gen_range(0..3)), rng.gen_bool(0.79)))
            .collect();
        for (annotator, noise) in annotators {
            let mut marks = |items: &[(Importance, bool)], prefix: &str| -> Vec<AlignmentMark> {
                items
                    .iter()
                    .enumerate()
                    .map(|(i, (imp, truth))| AlignmentMark {
                        item_id: format!("{prefix}{}", i + 1),
                        importance: *imp,
                        matched: *truth != rng.gen_bool(noise),
                    })
                    .collect()
            };
            let doc = AlignmentDoc {
                consultation_id: consultation.clone(),
                annotator_id: annotator.to_string(),
                a_in_b: marks(&a_items, "a"),
                b_in_a: marks(&b_items, "b"),
            };
            write_json(&dir.join(format!("{consultation}.{annotator}.json")), &doc);
        }
    }
}

fn main() {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures"));
    agreement_study(&out);
    e2e_corpus(&out);
    coverage_fixture(&out);
    println!("fixtures written to {}", out.display());
}
