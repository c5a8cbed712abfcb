//! Command-line surface: single-stage commands plus the batch pipeline
//! (align, complete, canonicalize, quality control, dilate) with JSON/CSV
//! reports. Reports are deterministic: stable ordering, no timestamps.

use crate::align::{align_table_text, AlignScores};
use crate::assemble::{objects_to_table, AssembleConfig};
use crate::canon::{canonicalize, survey_oversegmentation, SurveyStats};
use crate::ingest::{
    load_objects, load_table, load_tokens, parse_markup, save_objects, save_table,
};
use crate::metrics::{adjacency_fscore, content_exact_match, grits, CellMatrix, GritsVariant};
use crate::model::TableAnnotation;
use crate::qc::{run_qc, QcThresholds, Verdict};
use crate::spatial::{complete, dilate, regrid, tighten};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(
    name = "tabcanon",
    version,
    about = "Table structure ground-truth toolkit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Assign text-cell boxes by aligning markup text to page tokens
    Align(AlignArgs),
    /// Derive table, row, column, and grid-cell boxes from text boxes
    Complete(CompleteArgs),
    /// Correct oversegmentation and infer headers
    Canonicalize(CanonicalizeArgs),
    /// Run the four quality-control filters
    Qc(QcArgs),
    /// Emit dilated object annotations
    Dilate(DilateArgs),
    /// Survey a corpus for oversegmented projected row headers
    Survey(SurveyArgs),
    /// Score predicted tables against ground truth
    Score(ScoreArgs),
    /// Convert detected objects into a logical table
    Assemble(AssembleArgs),
    /// Run align, complete, canonicalize, qc, and dilate over a corpus
    Pipeline(PipelineArgs),
}

#[derive(Args, Clone, Copy, Default)]
struct ScoreFlags {
    /// Alignment match score (default 2)
    #[arg(long = "match", value_name = "N")]
    match_score: Option<f64>,
    /// Alignment mismatch score (default -1)
    #[arg(long, value_name = "N", allow_hyphen_values = true)]
    mismatch: Option<f64>,
    /// Alignment gap score (default -1)
    #[arg(long, value_name = "N", allow_hyphen_values = true)]
    gap: Option<f64>,
    /// Band width around the alignment diagonal (default unbanded)
    #[arg(long, value_name = "W")]
    band: Option<usize>,
}

#[derive(Args)]
struct AlignArgs {
    /// Table file (.json, or markup in .html/.htm)
    #[arg(long)]
    table: PathBuf,
    /// Token file (char or word granularity)
    #[arg(long)]
    tokens: PathBuf,
    /// Output table with text boxes
    #[arg(short, long)]
    output: PathBuf,
    /// Alignment report destination
    #[arg(long)]
    report: Option<PathBuf>,
    #[command(flatten)]
    scores: ScoreFlags,
}

#[derive(Args)]
struct CompleteArgs {
    table: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct CanonicalizeArgs {
    input: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct QcArgs {
    table: PathBuf,
    /// Word tokens for the text filters
    #[arg(long)]
    tokens: PathBuf,
    /// Report destination (stdout when omitted)
    #[arg(long)]
    report: Option<PathBuf>,
    /// Mean-cell-edit-distance ceiling
    #[arg(long, value_name = "R")]
    max_edit: Option<f64>,
    /// Mean-word-containment floor
    #[arg(long, value_name = "R")]
    min_containment: Option<f64>,
    /// Object-count ceiling
    #[arg(long, value_name = "N")]
    max_objects: Option<usize>,
}

#[derive(Args)]
struct DilateArgs {
    table: PathBuf,
    /// Objects JSON destination
    #[arg(short, long)]
    output: PathBuf,
    /// Also write the table with dilated boxes
    #[arg(long)]
    table_out: Option<PathBuf>,
}

#[derive(Args)]
struct SurveyArgs {
    /// Directory of table files
    dir: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Output file (stdout when omitted)
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct ScoreArgs {
    /// Ground-truth directory
    #[arg(long)]
    gt: PathBuf,
    /// Prediction directory (files matched to ground truth by stem)
    #[arg(long)]
    pred: PathBuf,
    /// Comma-separated metric list
    #[arg(long, value_delimiter = ',', default_values_t = vec![
        Metric::GritsTop, Metric::GritsCont, Metric::GritsLoc,
        Metric::Adjacency, Metric::Accuracy,
    ])]
    metrics: Vec<Metric>,
    /// Token directory; enables box tightening before location scoring
    #[arg(long)]
    tokens: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct AssembleArgs {
    objects: PathBuf,
    #[arg(long)]
    tokens: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
    /// Child-overlap threshold for containment decisions
    #[arg(long, default_value_t = 0.5)]
    child_overlap: f64,
}

#[derive(Args)]
struct PipelineArgs {
    /// Directory of table files (.json or .html markup)
    #[arg(long)]
    tables: PathBuf,
    /// Directory of token files matched by stem
    #[arg(long)]
    tokens: PathBuf,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
    /// Worker threads (default: serial)
    #[arg(long)]
    jobs: Option<usize>,
    /// Key=value config file overriding defaults (flags still win)
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    scores: ScoreFlags,
    #[arg(long, value_name = "R")]
    max_edit: Option<f64>,
    #[arg(long, value_name = "R")]
    min_containment: Option<f64>,
    #[arg(long, value_name = "N")]
    max_objects: Option<usize>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Metric {
    GritsTop,
    GritsCont,
    GritsLoc,
    Adjacency,
    Accuracy,
}

impl std::fmt::Display for Metric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Metric::GritsTop => "grits-top",
            Metric::GritsCont => "grits-cont",
            Metric::GritsLoc => "grits-loc",
            Metric::Adjacency => "adjacency",
            Metric::Accuracy => "accuracy",
        })
    }
}

type CliResult<T> = Result<T, String>;

fn context<T, E: std::fmt::Display>(result: Result<T, E>, path: &Path) -> CliResult<T> {
    result.map_err(|e| format!("{}: {e}", path.display()))
}

/// Entry point; returns the process exit code. Quality-control rejections are
/// not failures: only I/O and schema problems exit non-zero.
pub fn run() -> i32 {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Align(args) => cmd_align(args),
        Command::Complete(args) => cmd_complete(args),
        Command::Canonicalize(args) => cmd_canonicalize(args),
        Command::Qc(args) => cmd_qc(args),
        Command::Dilate(args) => cmd_dilate(args),
        Command::Survey(args) => cmd_survey(args),
        Command::Score(args) => cmd_score(args),
        Command::Assemble(args) => cmd_assemble(args),
        Command::Pipeline(args) => cmd_pipeline(args),
    };
    match result {
        Ok(()) => 0,
        Err(message) => {
            eprintln!("error: {message}");
            1
        }
    }
}

/// Loads a table from JSON, or from markup when the extension is .html/.htm.
fn load_table_any(path: &Path) -> CliResult<TableAnnotation> {
    let is_markup = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("html") || e.eq_ignore_ascii_case("htm"));
    if is_markup {
        let text = context(fs::read_to_string(path), path)?;
        context(parse_markup(&text), path)
    } else {
        context(load_table(path), path)
    }
}

fn write_json<T: Serialize>(value: &T, path: Option<&Path>) -> CliResult<()> {
    let body = serde_json::to_string_pretty(value).expect("report serialization cannot fail");
    match path {
        Some(path) => context(fs::write(path, body + "\n"), path),
        None => {
            println!("{body}");
            Ok(())
        }
    }
}

fn write_text(body: &str, path: Option<&Path>) -> CliResult<()> {
    match path {
        Some(path) => context(fs::write(path, body), path),
        None => {
            print!("{body}");
            Ok(())
        }
    }
}

impl ScoreFlags {
    fn to_scores(self, config: &KeyValueConfig) -> AlignScores {
        let defaults = AlignScores::default();
        AlignScores {
            matching: self
                .match_score
                .or(config.get_f64("match"))
                .unwrap_or(defaults.matching),
            mismatch: self
                .mismatch
                .or(config.get_f64("mismatch"))
                .unwrap_or(defaults.mismatch),
            gap: self.gap.or(config.get_f64("gap")).unwrap_or(defaults.gap),
        }
    }

    fn to_band(self, config: &KeyValueConfig) -> Option<usize> {
        self.band.or(config.get_usize("band"))
    }
}

/// Plain key=value file; `#` starts a comment.
#[derive(Default)]
struct KeyValueConfig(BTreeMap<String, String>);

impl KeyValueConfig {
    fn load(path: Option<&Path>) -> CliResult<KeyValueConfig> {
        let Some(path) = path else {
            return Ok(KeyValueConfig::default());
        };
        let text = context(fs::read_to_string(path), path)?;
        let mut map = BTreeMap::new();
        for (number, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(format!(
                    "{}: line {}: expected key = value",
                    path.display(),
                    number + 1
                ));
            };
            map.insert(key.trim().to_string(), value.trim().to_string());
        }
        Ok(KeyValueConfig(map))
    }

    fn get_f64(&self, key: &str) -> Option<f64> {
        self.0.get(key).and_then(|v| v.parse().ok())
    }

    fn get_usize(&self, key: &str) -> Option<usize> {
        self.0.get(key).and_then(|v| v.parse().ok())
    }
}

fn cmd_align(args: AlignArgs) -> CliResult<()> {
    let table = load_table_any(&args.table)?;
    let tokens = context(load_tokens(&args.tokens), &args.tokens)?;
    let scores = args.scores.to_scores(&KeyValueConfig::default());
    let (aligned, report) = context(
        align_table_text(&table, &tokens, &scores, args.scores.band),
        &args.table,
    )?;
    context(save_table(&aligned, &args.output), &args.output)?;
    if let Some(path) = args.report {
        write_json(&report, Some(&path))?;
    }
    Ok(())
}

fn cmd_complete(args: CompleteArgs) -> CliResult<()> {
    let table = load_table_any(&args.table)?;
    let completed = context(complete(&table), &args.table)?;
    context(save_table(&completed, &args.output), &args.output)
}

fn cmd_canonicalize(args: CanonicalizeArgs) -> CliResult<()> {
    let table = load_table_any(&args.input)?;
    let (canonical, report) = context(canonicalize(&table), &args.input)?;
    let canonical = if canonical.rows.is_some() && canonical.columns.is_some() {
        context(regrid(&canonical), &args.input)?
    } else {
        canonical
    };
    context(save_table(&canonical, &args.output), &args.output)?;
    if let Some(path) = args.report {
        write_json(&report, Some(&path))?;
    }
    Ok(())
}

fn qc_thresholds(
    max_edit: Option<f64>,
    min_containment: Option<f64>,
    max_objects: Option<usize>,
    config: &KeyValueConfig,
) -> QcThresholds {
    let defaults = QcThresholds::default();
    QcThresholds {
        max_edit_distance: max_edit
            .or(config.get_f64("max-edit"))
            .unwrap_or(defaults.max_edit_distance),
        min_word_containment: min_containment
            .or(config.get_f64("min-containment"))
            .unwrap_or(defaults.min_word_containment),
        max_objects: max_objects
            .or(config.get_usize("max-objects"))
            .unwrap_or(defaults.max_objects),
    }
}

fn cmd_qc(args: QcArgs) -> CliResult<()> {
    let table = load_table_any(&args.table)?;
    let tokens = context(load_tokens(&args.tokens), &args.tokens)?;
    let thresholds = qc_thresholds(
        args.max_edit,
        args.min_containment,
        args.max_objects,
        &KeyValueConfig::default(),
    );
    let report = context(run_qc(&table, &tokens, &thresholds), &args.table)?;
    write_json(&report, args.report.as_deref())
}

fn cmd_dilate(args: DilateArgs) -> CliResult<()> {
    let table = load_table_any(&args.table)?;
    let objects = context(dilate(&table), &args.table)?;
    context(save_objects(&objects, &args.output), &args.output)?;
    if let Some(path) = args.table_out {
        let dilated = context(crate::spatial::dilate_table(&table), &args.table)?;
        context(save_table(&dilated, &path), &path)?;
    }
    Ok(())
}

/// Table files in a directory, sorted by stem for deterministic output.
fn table_files(dir: &Path) -> CliResult<Vec<(String, PathBuf)>> {
    let entries = context(fs::read_dir(dir), dir)?;
    let mut files = Vec::new();
    for entry in entries {
        let entry = context(entry, dir)?;
        let path = entry.path();
        let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
        if path.is_file() && matches!(ext.to_ascii_lowercase().as_str(), "json" | "html" | "htm") {
            let stem = path
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or_default()
                .to_string();
            files.push((stem, path));
        }
    }
    files.sort();
    Ok(files)
}

fn survey_csv(stats: &SurveyStats) -> String {
    let mut out = String::new();
    out.push_str("investigated,with_prh,oversegmented,pct_of_prh,pct_of_investigated\n");
    let _ = writeln!(
        out,
        "{},{},{},{:.2}%,{:.2}%",
        stats.investigated,
        stats.with_prh,
        stats.oversegmented,
        stats.pct_of_prh,
        stats.pct_of_investigated
    );
    out
}

fn cmd_survey(args: SurveyArgs) -> CliResult<()> {
    let mut tables = Vec::new();
    for (_, path) in table_files(&args.dir)? {
        tables.push(load_table_any(&path)?);
    }
    let stats = survey_oversegmentation(tables.iter());
    match args.format {
        Format::Json => write_json(&stats, args.output.as_deref()),
        Format::Csv => write_text(&survey_csv(&stats), args.output.as_deref()),
    }
}

#[derive(Serialize, Clone)]
struct TableScore {
    file: String,
    category: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    acc_cont: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    grits_top: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    grits_cont: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    grits_loc: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    adj_cont: Option<f64>,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let collected: Vec<f64> = values.collect();
    if collected.is_empty() {
        None
    } else {
        Some(collected.iter().sum::<f64>() / collected.len() as f64)
    }
}

fn aggregate(rows: &[TableScore], category: &'static str) -> TableScore {
    let members: Vec<&TableScore> = rows
        .iter()
        .filter(|r| category == "all" || r.category == category)
        .collect();
    let pick = |get: fn(&TableScore) -> Option<f64>| mean(members.iter().filter_map(|r| get(r)));
    TableScore {
        file: "all".into(),
        category,
        acc_cont: pick(|r| r.acc_cont),
        grits_top: pick(|r| r.grits_top),
        grits_cont: pick(|r| r.grits_cont),
        grits_loc: pick(|r| r.grits_loc),
        adj_cont: pick(|r| r.adj_cont),
    }
}

fn score_csv(rows: &[TableScore]) -> String {
    let mut out = String::new();
    out.push_str("file,category,acc_cont,grits_top,grits_cont,grits_loc,adj_cont\n");
    let fmt = |v: Option<f64>| v.map_or(String::new(), |v| format!("{v:.4}"));
    for row in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            row.file,
            row.category,
            fmt(row.acc_cont),
            fmt(row.grits_top),
            fmt(row.grits_cont),
            fmt(row.grits_loc),
            fmt(row.adj_cont)
        );
    }
    out
}

fn cmd_score(args: ScoreArgs) -> CliResult<()> {
    let gt_files = table_files(&args.gt)?;
    let mut rows: Vec<TableScore> = Vec::new();
    for (stem, gt_path) in &gt_files {
        let pred_path = ["json", "html", "htm"]
            .iter()
            .map(|ext| args.pred.join(format!("{stem}.{ext}")))
            .find(|p| p.exists())
            .ok_or_else(|| format!("{}: no prediction for {stem}", args.pred.display()))?;
        let gt = load_table_any(gt_path)?;
        let pred = load_table_any(&pred_path)?;

        // location scoring tightens boxes first when tokens are available
        let tokens = match &args.tokens {
            Some(dir) => {
                let path = dir.join(format!("{stem}.json"));
                if path.exists() {
                    Some(context(load_tokens(&path), &path)?)
                } else {
                    None
                }
            }
            None => None,
        };
        let tighten_if_possible = |t: &TableAnnotation| -> TableAnnotation {
            match &tokens {
                Some(tok) if t.rows.is_some() && t.columns.is_some() => tighten(t, tok)
                    .map(|(t, _)| t)
                    .unwrap_or_else(|_| t.clone()),
                _ => t.clone(),
            }
        };

        let gt_matrix = context(CellMatrix::from_table(&gt), gt_path)?;
        let pred_matrix = context(CellMatrix::from_table(&pred), &pred_path)?;
        let category = if gt.spanning_cells().is_empty() {
            "simple"
        } else {
            "complex"
        };
        let mut row = TableScore {
            file: stem.clone(),
            category,
            acc_cont: None,
            grits_top: None,
            grits_cont: None,
            grits_loc: None,
            adj_cont: None,
        };
        for metric in &args.metrics {
            match metric {
                Metric::GritsTop => {
                    row.grits_top = Some(grits(&gt_matrix, &pred_matrix, GritsVariant::Top));
                }
                Metric::GritsCont => {
                    row.grits_cont = Some(grits(&gt_matrix, &pred_matrix, GritsVariant::Cont));
                }
                Metric::GritsLoc => {
                    let gt_tight =
                        context(CellMatrix::from_table(&tighten_if_possible(&gt)), gt_path)?;
                    let pred_tight = context(
                        CellMatrix::from_table(&tighten_if_possible(&pred)),
                        &pred_path,
                    )?;
                    row.grits_loc = Some(grits(&gt_tight, &pred_tight, GritsVariant::Loc));
                }
                Metric::Adjacency => {
                    row.adj_cont = Some(context(adjacency_fscore(&gt, &pred), gt_path)?.f);
                }
                Metric::Accuracy => {
                    row.acc_cont = Some(f64::from(context(
                        content_exact_match(&gt, &pred),
                        gt_path,
                    )?));
                }
            }
        }
        rows.push(row);
    }

    let mut all_rows = rows.clone();
    for category in ["simple", "complex", "all"] {
        all_rows.push(aggregate(&rows, category));
    }
    match args.format {
        Format::Csv => write_text(&score_csv(&all_rows), args.output.as_deref()),
        Format::Json => write_json(&all_rows, args.output.as_deref()),
    }
}

fn cmd_assemble(args: AssembleArgs) -> CliResult<()> {
    let objects = context(load_objects(&args.objects), &args.objects)?;
    let tokens = context(load_tokens(&args.tokens), &args.tokens)?;
    let config = AssembleConfig {
        header_child_overlap: args.child_overlap,
        prh_child_overlap: args.child_overlap,
        spanning_child_overlap: args.child_overlap,
        ..AssembleConfig::default()
    };
    let (table, report) = context(objects_to_table(&objects, &tokens, &config), &args.objects)?;
    context(save_table(&table, &args.output), &args.output)?;
    if !report.suppressed.is_empty() || report.spanning_rejected > 0 {
        eprintln!(
            "assemble: {} object(s) suppressed, {} spanning object(s) rejected",
            report.suppressed.len(),
            report.spanning_rejected
        );
    }
    Ok(())
}

#[derive(Serialize)]
struct Manifest {
    accepted: usize,
    rejected: usize,
    failed: usize,
    reasons: BTreeMap<String, usize>,
    tables: Vec<ManifestEntry>,
}

#[derive(Serialize, Clone)]
struct ManifestEntry {
    stem: String,
    outcome: String,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    reasons: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    canon_changed: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    qc: Option<crate::qc::QcReport>,
}

enum StageOutcome {
    Accepted { entry: ManifestEntry },
    Rejected { entry: ManifestEntry },
}

fn pipeline_one(
    stem: &str,
    table_path: &Path,
    tokens_path: &Path,
    out_dir: &Path,
    scores: &AlignScores,
    band: Option<usize>,
    thresholds: &QcThresholds,
) -> CliResult<StageOutcome> {
    let table = load_table_any(table_path)?;
    let tokens = context(load_tokens(tokens_path), tokens_path)?;

    let reject = |reason: &str| {
        Ok(StageOutcome::Rejected {
            entry: ManifestEntry {
                stem: stem.to_string(),
                outcome: "reject".into(),
                reasons: vec![reason.to_string()],
                canon_changed: None,
                qc: None,
            },
        })
    };

    let (aligned, _) = match align_table_text(&table, &tokens, scores, band) {
        Ok(v) => v,
        Err(_) => return reject("alignment"),
    };
    let completed = match complete(&aligned) {
        Ok(v) => v,
        Err(_) => return reject("completion"),
    };
    let (canonical, canon_report) = context(canonicalize(&completed), table_path)?;
    let canonical = context(regrid(&canonical), table_path)?;
    let qc_report = context(run_qc(&canonical, &tokens, thresholds), table_path)?;

    context(
        save_table(&canonical, &out_dir.join(format!("{stem}.table.json"))),
        table_path,
    )?;
    match &qc_report.verdict {
        Verdict::Accept => {
            let objects = match dilate(&canonical) {
                Ok(objects) => objects,
                Err(_) => {
                    return reject("completion");
                }
            };
            context(
                save_objects(&objects, &out_dir.join(format!("{stem}.objects.json"))),
                table_path,
            )?;
            Ok(StageOutcome::Accepted {
                entry: ManifestEntry {
                    stem: stem.to_string(),
                    outcome: "accept".into(),
                    reasons: vec![],
                    canon_changed: Some(canon_report.changed),
                    qc: Some(qc_report),
                },
            })
        }
        Verdict::Reject(reasons) => {
            let reasons: Vec<String> = reasons
                .iter()
                .map(|r| {
                    serde_json::to_value(r)
                        .ok()
                        .and_then(|v| v.as_str().map(str::to_string))
                        .unwrap_or_else(|| format!("{r:?}"))
                })
                .collect();
            Ok(StageOutcome::Rejected {
                entry: ManifestEntry {
                    stem: stem.to_string(),
                    outcome: "reject".into(),
                    reasons,
                    canon_changed: Some(canon_report.changed),
                    qc: Some(qc_report),
                },
            })
        }
    }
}

fn cmd_pipeline(args: PipelineArgs) -> CliResult<()> {
    let config = KeyValueConfig::load(args.config.as_deref())?;
    let scores = args.scores.to_scores(&config);
    let band = args.scores.to_band(&config);
    let thresholds = qc_thresholds(
        args.max_edit,
        args.min_containment,
        args.max_objects,
        &config,
    );
    context(fs::create_dir_all(&args.out), &args.out)?;

    let inputs = table_files(&args.tables)?;
    let jobs = args.jobs.or(config.get_usize("jobs")).unwrap_or(1).max(1);

    let work = |(stem, path): &(String, PathBuf)| -> CliResult<StageOutcome> {
        let tokens_path = args.tokens.join(format!("{stem}.json"));
        if !tokens_path.exists() {
            return Err(format!("{}: missing token file", tokens_path.display()));
        }
        pipeline_one(
            stem,
            path,
            &tokens_path,
            &args.out,
            &scores,
            band,
            &thresholds,
        )
    };

    let outcomes: Vec<CliResult<StageOutcome>> = if jobs > 1 {
        use rayon::prelude::*;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| format!("thread pool: {e}"))?;
        pool.install(|| inputs.par_iter().map(work).collect())
    } else {
        inputs.iter().map(work).collect()
    };

    let mut manifest = Manifest {
        accepted: 0,
        rejected: 0,
        failed: 0,
        reasons: BTreeMap::new(),
        tables: Vec::new(),
    };
    let mut first_error = None;
    for outcome in outcomes {
        match outcome {
            Ok(StageOutcome::Accepted { entry }) => {
                manifest.accepted += 1;
                manifest.tables.push(entry);
            }
            Ok(StageOutcome::Rejected { entry }) => {
                manifest.rejected += 1;
                for reason in &entry.reasons {
                    *manifest.reasons.entry(reason.clone()).or_insert(0) += 1;
                }
                manifest.tables.push(entry);
            }
            Err(message) => {
                manifest.failed += 1;
                if first_error.is_none() {
                    first_error = Some(message);
                }
            }
        }
    }
    manifest.tables.sort_by(|a, b| a.stem.cmp(&b.stem));
    write_json(&manifest, Some(&args.out.join("manifest.json")))?;
    println!(
        "pipeline: {} accepted, {} rejected, {} failed",
        manifest.accepted, manifest.rejected, manifest.failed
    );
    match first_error {
        Some(message) => Err(message),
        None => Ok(()),
    }
}
