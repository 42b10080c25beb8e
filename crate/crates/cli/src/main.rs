//! `cceval`: batch evaluation of generated consultation notes.

mod error;
mod load;

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use cceval_core::agreement::{joint_alpha, mean_pairwise_alpha, pairwise_alphas, AgreementTable, Level};
use cceval_core::auto_metrics::{
    flatten_checklist, read_embedding_file, score_note, scoring_jobs, EmbeddingMatrix, MetricReport,
    MetricRow, ReferenceIndex, ReferenceKind, ScoreError,
};
use cceval_core::itemizer::{itemize_note, SplitConfig};
use cceval_core::model::NoteKind;
use cceval_core::report::{human_report, AgreementReport, AlignmentDoc, CoverageReport, ReportMeta};
use cceval_core::stats::correlate_report;
use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde_json::json;

use crate::error::CliError;
use crate::load::{json_files, load_checklists, load_config, load_notes, load_study, read_json};

#[derive(Parser)]
#[command(name = "cceval", disable_version_flag = true)]
struct Cli {
    /// Print tool and splitting-config versions.
    #[arg(long, short = 'V')]
    version: bool,
    /// Splitting config JSON; defaults to the built-in rules.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum RefArg {
    Checklist,
    Human,
    Both,
}

#[derive(Clone, Copy, ValueEnum)]
enum LevelArg {
    Nominal,
    Ordinal,
    Interval,
}

#[derive(Subcommand)]
enum Command {
    /// Itemize a raw note text file.
    Itemize {
        note: PathBuf,
        /// Defaults to the file stem.
        #[arg(long)]
        note_id: Option<String>,
        /// Defaults to the note id.
        #[arg(long)]
        consultation_id: Option<String>,
        #[arg(long)]
        human: bool,
    },
    /// Per-session and aggregate human metrics.
    HumanReport {
        sessions_dir: PathBuf,
        checklists_dir: PathBuf,
        notes_dir: PathBuf,
    },
    /// Krippendorff's alpha for an agreement table CSV.
    Agreement {
        table: PathBuf,
        #[arg(long, value_enum)]
        level: LevelArg,
        /// Also report every annotator pair.
        #[arg(long)]
        pairwise: bool,
    },
    /// Agreement table over a study: pairwise and joint alpha per judgement type.
    AgreementReport {
        sessions_dir: PathBuf,
        checklists_dir: PathBuf,
        notes_dir: PathBuf,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
        /// Also write the item-level vs error-count comparison here.
        #[arg(long)]
        counts_csv: Option<PathBuf>,
    },
    /// Write the agreement tables of a study as CSV files.
    AgreementTables {
        sessions_dir: PathBuf,
        checklists_dir: PathBuf,
        notes_dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score generated notes against references.
    Score {
        notes_dir: PathBuf,
        #[arg(long = "ref", value_enum)]
        reference: RefArg,
        #[arg(long)]
        checklists_dir: Option<PathBuf>,
        /// Human reference notes; defaults to human notes found in `notes_dir`.
        #[arg(long)]
        human_notes_dir: Option<PathBuf>,
        /// Per-text embedding files `{id}.emb`; enables BERTScore.
        #[arg(long)]
        embeddings_dir: Option<PathBuf>,
        /// Encoder that produced the embeddings, recorded in the report.
        #[arg(long, requires = "embeddings_dir")]
        embedding_model: Option<String>,
    },
    /// Correlate a metric report with per-note human scores.
    Correlate {
        metric_report: PathBuf,
        human_report: PathBuf,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
    },
    /// Fact coverage between parallel checklists from alignment files.
    CoverageReport {
        alignments_dir: PathBuf,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
    },
    /// Write the reference and candidate texts to embed, one `{id}.txt` each.
    Texts {
        notes_dir: PathBuf,
        #[arg(long)]
        checklists_dir: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code())
        }
    }
}

fn stdout_write(bytes: &[u8]) -> Result<(), CliError> {
    let mut out = io::stdout().lock();
    out.write_all(bytes)
        .and_then(|_| out.flush())
        .map_err(|e| CliError::io(Path::new("<stdout>"), e))
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<(), CliError> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| CliError::validation(e.to_string()))?;
    s.push('\n');
    stdout_write(s.as_bytes())
}

fn csv_to_stdout(f: impl FnOnce(&mut Vec<u8>) -> io::Result<()>) -> Result<(), CliError> {
    let mut buf = Vec::new();
    f(&mut buf).map_err(|e| CliError::io(Path::new("<csv>"), e))?;
    stdout_write(&buf)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let config = load_config(cli.config.as_deref())?;
    if cli.version {
        return stdout_write(
            format!("cceval {} splitting-config {}\n", cceval_core::TOOL_VERSION, config.version).as_bytes(),
        );
    }
    let Some(command) = cli.command else {
        return Err(CliError::validation("no subcommand given; see --help"));
    };
    let meta = ReportMeta::new(&config.version);
    match command {
        Command::Itemize { note, note_id, consultation_id, human } => {
            let text = fs::read_to_string(&note).map_err(|e| CliError::io(&note, e))?;
            let note_id = note_id.unwrap_or_else(|| {
                note.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
            });
            let consultation_id = consultation_id.unwrap_or_else(|| note_id.clone());
            let mut doc = itemize_note(&note_id, &consultation_id, &text, &config)
                .map_err(|e| CliError::validation(e.to_string()))?
                .to_doc();
            if human {
                doc.kind = NoteKind::Human;
            }
            print_json(&doc)
        }
        Command::HumanReport { sessions_dir, checklists_dir, notes_dir } => {
            let study = load_study(&sessions_dir, &checklists_dir, &notes_dir, &config)?;
            print_json(&human_report(&study, meta))
        }
        Command::Agreement { table, level, pairwise } => agreement(&table, level, pairwise),
        Command::AgreementReport { sessions_dir, checklists_dir, notes_dir, format, counts_csv } => {
            let study = load_study(&sessions_dir, &checklists_dir, &notes_dir, &config)?;
            let report = AgreementReport::from_study(&study, meta).map_err(|e| CliError::validation(e.to_string()))?;
            if let Some(path) = counts_csv {
                let file = File::create(&path).map_err(|e| CliError::io(&path, e))?;
                report.write_counts_csv(file).map_err(|e| CliError::io(&path, e))?;
            }
            match format {
                Format::Json => print_json(&report)?,
                Format::Csv => csv_to_stdout(|b| report.write_csv(b))?,
            }
            if report.all_undefined() {
                return Err(CliError::degenerate("no judgement type has a defined joint alpha"));
            }
            Ok(())
        }
        Command::AgreementTables { sessions_dir, checklists_dir, notes_dir, out } => {
            let study = load_study(&sessions_dir, &checklists_dir, &notes_dir, &config)?;
            fs::create_dir_all(&out).map_err(|e| CliError::io(&out, e))?;
            let invalid = |e: cceval_core::study::StudyError| CliError::validation(e.to_string());
            let tables = [
                ("present_absent", study.presence_table().map_err(invalid)?),
                ("correct_incorrect", study.correctness_table().map_err(invalid)?),
                ("importance", study.importance_table().map_err(invalid)?),
                ("absent_counts", study.absent_count_table().map_err(invalid)?),
                ("incorrect_counts", study.incorrect_count_table().map_err(invalid)?),
            ];
            for (name, table) in tables {
                let path = out.join(format!("{name}.csv"));
                let file = File::create(&path).map_err(|e| CliError::io(&path, e))?;
                table.write_csv(file).map_err(|e| CliError::io(&path, e))?;
            }
            Ok(())
        }
        Command::Score {
            notes_dir,
            reference,
            checklists_dir,
            human_notes_dir,
            embeddings_dir,
            embedding_model,
        } => {
            let mut meta = meta;
            meta.embedding_model = embedding_model;
            let report = score(
                &notes_dir,
                reference,
                checklists_dir.as_deref(),
                human_notes_dir.as_deref(),
                embeddings_dir.as_deref(),
                &config,
            )?;
            csv_to_stdout(|b| {
                report
                    .write_csv(b, Some(&meta.comment()))
                    .map_err(|e| io::Error::other(e.to_string()))
            })
        }
        Command::Correlate { metric_report, human_report, format } => {
            correlate(&metric_report, &human_report, format)
        }
        Command::CoverageReport { alignments_dir, format } => {
            let docs: Vec<AlignmentDoc> = json_files(&alignments_dir)?
                .iter()
                .map(|p| read_json(p))
                .collect::<Result<_, _>>()?;
            if docs.is_empty() {
                return Err(CliError::validation("no alignment files found"));
            }
            let report = CoverageReport::new(meta, &docs);
            match format {
                Format::Json => print_json(&report),
                Format::Csv => csv_to_stdout(|b| report.write_csv(b)),
            }
        }
        Command::Texts { notes_dir, checklists_dir, out } => {
            fs::create_dir_all(&out).map_err(|e| CliError::io(&out, e))?;
            let mut texts: BTreeMap<String, String> = BTreeMap::new();
            for note in load_notes(&notes_dir, &config)? {
                texts.insert(note.note_id().to_string(), note.source_text().to_string());
            }
            if let Some(dir) = checklists_dir {
                for cl in load_checklists(&dir)? {
                    texts.insert(cl.checklist_id().to_string(), flatten_checklist(&cl));
                }
            }
            for (id, text) in texts {
                let path = out.join(format!("{id}.txt"));
                fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
            }
            Ok(())
        }
    }
}

fn agreement(path: &Path, level: LevelArg, pairwise: bool) -> Result<(), CliError> {
    let level = match level {
        LevelArg::Nominal => Level::Nominal,
        LevelArg::Ordinal => Level::Ordinal,
        LevelArg::Interval => Level::Interval,
    };
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    let table = AgreementTable::from_csv(BufReader::new(file), level)
        .map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?;
    let joint = joint_alpha(&table);
    let undefined = joint.value().is_none();
    if pairwise {
        let pairs = pairwise_alphas(&table);
        print_json(&json!({
            "level": level,
            "joint": joint,
            "pairwise": pairs,
            "mean_pairwise": mean_pairwise_alpha(&pairs),
        }))?;
    } else {
        print_json(&json!({"level": level, "joint": joint}))?;
    }
    if undefined {
        return Err(CliError::degenerate("alpha is undefined: no unit has two or more values"));
    }
    Ok(())
}

fn load_embedding(dir: &Path, id: &str) -> Result<EmbeddingMatrix, CliError> {
    let path = dir.join(format!("{id}.emb"));
    let file = File::open(&path).map_err(|e| CliError::io(&path, e))?;
    read_embedding_file(BufReader::new(file)).map_err(|e| CliError::validation(format!("{}: {e}", path.display())))
}

fn score(
    notes_dir: &Path,
    reference: RefArg,
    checklists_dir: Option<&Path>,
    human_notes_dir: Option<&Path>,
    embeddings_dir: Option<&Path>,
    config: &SplitConfig,
) -> Result<MetricReport, CliError> {
    let kinds = match reference {
        RefArg::Checklist => vec![ReferenceKind::Checklist],
        RefArg::Human => vec![ReferenceKind::Human],
        RefArg::Both => vec![ReferenceKind::Human, ReferenceKind::Checklist],
    };
    let notes = load_notes(notes_dir, config)?;
    let checklists = match checklists_dir {
        Some(d) => load_checklists(d)?,
        None if kinds.contains(&ReferenceKind::Checklist) => {
            return Err(CliError::validation("--checklists-dir is required for checklist references"))
        }
        None => Vec::new(),
    };
    let extra_human = match human_notes_dir {
        Some(d) => load_notes(d, config)?,
        None => Vec::new(),
    };
    let human: Vec<_> = notes
        .iter()
        .chain(&extra_human)
        .filter(|n| n.kind() == NoteKind::Human)
        .collect();
    let generated: Vec<_> = notes.iter().filter(|n| n.kind() == NoteKind::Generated).collect();
    if generated.is_empty() {
        return Err(CliError::validation(format!("no generated notes in {}", notes_dir.display())));
    }
    let invalid = |e: ScoreError| CliError::validation(e.to_string());
    let index = ReferenceIndex::new(&checklists, human).map_err(invalid)?;
    let jobs = scoring_jobs(&generated, &index, &kinds).map_err(invalid)?;
    let rows: Vec<MetricRow> = jobs
        .par_iter()
        .map(|(note, reference)| {
            let embeddings = match embeddings_dir {
                Some(dir) => Some((load_embedding(dir, note.note_id())?, load_embedding(dir, &reference.id)?)),
                None => None,
            };
            score_note(
                note.note_id(),
                note.source_text(),
                reference,
                embeddings.as_ref().map(|(c, r)| (c, r)),
                embeddings.is_some(),
            )
            .map_err(invalid)
        })
        .collect::<Result<_, _>>()?;
    Ok(MetricReport::new(rows))
}

/// The part of a human report that correlation needs; any JSON object with
/// this field is accepted.
#[derive(serde::Deserialize)]
struct HumanScores {
    note_human_scores: BTreeMap<String, f64>,
}

fn correlate(metric_path: &Path, human_path: &Path, format: Format) -> Result<(), CliError> {
    let text = fs::read_to_string(metric_path).map_err(|e| CliError::io(metric_path, e))?;
    let comment = text.lines().next().and_then(|l| l.strip_prefix("# ")).map(str::to_string);
    let metrics = MetricReport::read_csv(text.as_bytes())
        .map_err(|e| CliError::validation(format!("{}: {e}", metric_path.display())))?;
    let human: HumanScores = read_json(human_path)?;
    let report = correlate_report(&metrics, &human.note_human_scores)
        .map_err(|e| CliError::validation(e.to_string()))?;
    match format {
        Format::Json => print_json(&json!({"provenance": comment, "correlation": report}))?,
        Format::Csv => csv_to_stdout(|b| report.write_csv(b, comment.as_deref()))?,
    }
    if report.all_degenerate() {
        return Err(CliError::degenerate("every correlation is undefined (zero variance)"));
    }
    Ok(())
}
