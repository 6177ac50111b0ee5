//! `prosemark`: measure dash and markdown habits in text, render pooled
//! per-model tables, attribute texts to known model profiles, classify dash
//! contexts across a corpus, and drive collection runs.
//!
//! Machine-readable output goes to standard output; diagnostics go to
//! standard error. Exit codes: 0 success, 1 analysis failure, 2 usage
//! error, 3 run finished with failed cells.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use prosemark_core::attribution::{
    attribute, builtin_profiles, load_profiles, profiles_to_csv, QueryMetrics,
};
use prosemark_core::corpus::{
    ingest_plaintext, load_samples, IngestMetadata, TextSample,
};
use prosemark_core::dashcontext::{scan, summarize, ContextSummary, DashOccurrence};
use prosemark_core::harness::client::ProviderClient;
use prosemark_core::harness::http::client_for_provider;
use prosemark_core::harness::mock::ProfileMockClient;
use prosemark_core::harness::{execute, plan_run, ClientMap, ExecuteOptions, RunConfig};
use prosemark_core::mdfeatures::{detect_features, md_per_1k};
use prosemark_core::suppression::{
    gradient_report, human_baseline_stats, summarize_store, Condition, ReportFormat, ReportShape,
    HUMAN_BASELINE_REFERENCE,
};
use prosemark_core::textmetrics::{analyze_sample, count_dashes, count_words, per_1k, round2};
use prosemark_core::Error;

#[derive(Parser)]
#[command(
    name = "prosemark",
    version,
    about = "Dash and markdown-register measurement for prose",
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Output format; each subcommand lists its accepted values.
    #[arg(long, global = true)]
    format: Option<String>,

    /// Sample store path (`report` reads it; `run` writes it, overriding
    /// the config).
    #[arg(long, global = true)]
    store: Option<PathBuf>,

    /// Attribution profile table (CSV) used instead of the built-in one.
    #[arg(long, global = true)]
    profiles: Option<PathBuf>,

    /// Seed for the deterministic mock provider.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
}

#[derive(Subcommand)]
enum Command {
    /// Measure words, dashes, and markdown features per sample (accepts
    /// .jsonl sample stores and plaintext files; formats: table, csv, json)
    Analyze(AnalyzeArgs),
    /// Render pooled per-model condition tables from a sample store
    /// (shapes: table1, table2, table3; formats: text, csv, markdown)
    Report(ReportArgs),
    /// Rank known model profiles by closeness to a measured text
    /// (formats: table, csv, json)
    Attribute(AttributeArgs),
    /// Classify every dash under a directory as structural or inline
    /// (formats: json, table)
    ScanDashes(ScanDashesArgs),
    /// Execute a collection run from a JSON config, resuming any previous
    /// progress recorded beside the store
    Run(RunArgs),
    /// Measure a directory of human essays and print the rates beside the
    /// built-in human reference baseline (formats: table, json)
    Baseline(BaselineArgs),
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Inputs: `.jsonl` sample stores or plaintext files.
    #[arg(required = true)]
    paths: Vec<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// Table shape: table1 (condition pair), table2 (suppression
    /// gradient), or table3 (words and rates).
    #[arg(long, default_value = "table1")]
    shape: String,
}

#[derive(Args)]
struct AttributeArgs {
    /// Text file to measure and attribute.
    input: Option<PathBuf>,

    /// Collection condition of the input, when known: A (unconstrained),
    /// B (markdown suppressed), or C (em dashes suppressed). Unknown
    /// conditions compare against both profile column groups.
    #[arg(long)]
    condition: Option<String>,

    /// Include the markdown-feature rate in the query. Off by default:
    /// a zero markdown rate is common to most edited prose and would
    /// swamp the dash signal.
    #[arg(long)]
    with_md: bool,

    /// Print the built-in profile table as CSV and exit.
    #[arg(long)]
    export_builtin: bool,
}

#[derive(Args)]
struct ScanDashesArgs {
    /// Directory to scan (recursive; .txt and .md files).
    dir: PathBuf,

    /// Also write every occurrence to this CSV file
    /// (columns: file,offset,line,kind,context).
    #[arg(long)]
    occurrences: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    /// Run configuration (JSON).
    #[arg(long)]
    config: PathBuf,

    /// Use the deterministic offline mock provider instead of real APIs.
    #[arg(long)]
    mock: bool,
}

#[derive(Args)]
struct BaselineArgs {
    /// Directory of .txt/.md essays.
    dir: PathBuf,
}

/// Command failure carrying its exit code: analysis failures are exit 1,
/// usage errors exit 2.
enum Failure {
    Analysis(String),
    Usage(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Failure {
        match e {
            Error::Validation(_) | Error::MissingCredentials { .. } | Error::PlanMismatch { .. } => {
                Failure::Usage(e.to_string())
            }
            other => Failure::Analysis(other.to_string()),
        }
    }
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Analyze(args) => cmd_analyze(&cli, args),
        Command::Report(args) => cmd_report(&cli, args),
        Command::Attribute(args) => cmd_attribute(&cli, args),
        Command::ScanDashes(args) => cmd_scan_dashes(&cli, args),
        Command::Run(args) => cmd_run(&cli, args),
        Command::Baseline(args) => cmd_baseline(&cli, args),
    };
    match result {
        Ok(code) => code,
        Err(Failure::Analysis(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

// ---------------------------------------------------------------------------
// analyze
// ---------------------------------------------------------------------------

fn cmd_analyze(cli: &Cli, args: &AnalyzeArgs) -> Result<ExitCode, Failure> {
    let format = cli.format.as_deref().unwrap_or("table");
    if !matches!(format, "table" | "csv" | "json") {
        return Err(usage(format!(
            "analyze formats are table, csv, or json (got '{format}')"
        )));
    }

    let mut records = Vec::new();
    let mut failures = 0usize;
    for path in &args.paths {
        match gather_samples(path) {
            Ok(samples) => {
                for sample in samples {
                    match analyze_sample(&sample) {
                        Ok(record) => records.push(record),
                        Err(e) => {
                            eprintln!("{}: {e}", path.display());
                            failures += 1;
                        }
                    }
                }
            }
            Err(e) => {
                eprintln!("{}: {e}", path.display());
                failures += 1;
            }
        }
    }

    match format {
        "json" => {
            for record in &records {
                println!("{}", serde_json::to_string(record).expect("record serializes"));
            }
        }
        "csv" => {
            let mut writer = csv::Writer::from_writer(std::io::stdout());
            writer
                .write_record([
                    "sample_id",
                    "words",
                    "em",
                    "en",
                    "double_hyphen",
                    "long_hyphen_run",
                    "md_feature_total",
                    "em_per_1k",
                    "md_per_1k",
                ])
                .and_then(|()| {
                    records.iter().try_for_each(|r| {
                        writer.write_record([
                            r.sample_id.clone(),
                            r.words.to_string(),
                            r.dash.em.to_string(),
                            r.dash.en.to_string(),
                            r.dash.double_hyphen.to_string(),
                            r.dash.long_hyphen_run.to_string(),
                            r.md_features.headline_total().to_string(),
                            format!("{:.2}", round2(r.em_per_1k)),
                            format!("{:.2}", round2(r.md_per_1k)),
                        ])
                    })
                })
                .and_then(|()| writer.flush().map_err(csv::Error::from))
                .map_err(|e| Failure::Analysis(format!("writing csv: {e}")))?;
        }
        _ => {
            let rows: Vec<Vec<String>> = records
                .iter()
                .map(|r| {
                    vec![
                        r.sample_id.clone(),
                        r.words.to_string(),
                        r.dash.em.to_string(),
                        r.dash.en.to_string(),
                        (r.dash.double_hyphen + r.dash.long_hyphen_run).to_string(),
                        r.md_features.headline_total().to_string(),
                        format!("{:.2}", round2(r.em_per_1k)),
                        format!("{:.2}", round2(r.md_per_1k)),
                    ]
                })
                .collect();
            print!(
                "{}",
                aligned(
                    &[
                        "sample_id",
                        "words",
                        "em",
                        "en",
                        "hyphen_runs",
                        "md_features",
                        "em_per_1k",
                        "md_per_1k",
                    ],
                    &rows
                )
            );
        }
    }

    if failures > 0 {
        Err(Failure::Analysis(format!(
            "{failures} input{} could not be analyzed",
            if failures == 1 { "" } else { "s" }
        )))
    } else if records.is_empty() {
        Err(Failure::Analysis("no samples to analyze".to_owned()))
    } else {
        Ok(ExitCode::SUCCESS)
    }
}

/// A `.jsonl` path is a sample store; anything else is one plaintext
/// sample whose id is the path itself.
fn gather_samples(path: &Path) -> Result<Vec<TextSample>, Error> {
    if path.extension().and_then(|e| e.to_str()) == Some("jsonl") {
        let loaded = load_samples(path)?;
        if loaded.skipped > 0 {
            eprintln!(
                "{}: skipped {} malformed or duplicate line{}",
                path.display(),
                loaded.skipped,
                if loaded.skipped == 1 { "" } else { "s" }
            );
        }
        Ok(loaded.set.samples().to_vec())
    } else {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(vec![TextSample::human(path.display().to_string(), text)])
    }
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

fn cmd_report(cli: &Cli, args: &ReportArgs) -> Result<ExitCode, Failure> {
    let store = cli
        .store
        .as_ref()
        .ok_or_else(|| usage("report needs --store <sample store>"))?;
    let shape: ReportShape = args.shape.parse()?;
    let format: ReportFormat = cli.format.as_deref().unwrap_or("text").parse()?;

    let loaded = load_samples(store)?;
    let summaries = summarize_store(&loaded.set);
    if summaries.is_empty() {
        return Err(Failure::Analysis(format!(
            "{}: no model condition cells to report",
            store.display()
        )));
    }
    print!("{}", gradient_report(&summaries, shape).render(format));
    Ok(ExitCode::SUCCESS)
}

// ---------------------------------------------------------------------------
// attribute
// ---------------------------------------------------------------------------

fn cmd_attribute(cli: &Cli, args: &AttributeArgs) -> Result<ExitCode, Failure> {
    let profiles = match &cli.profiles {
        Some(path) => load_profiles(path)?,
        None => builtin_profiles(),
    };
    if args.export_builtin {
        print!("{}", profiles_to_csv(&builtin_profiles())?);
        return Ok(ExitCode::SUCCESS);
    }
    let format = cli.format.as_deref().unwrap_or("table");
    if !matches!(format, "table" | "csv" | "json") {
        return Err(usage(format!(
            "attribute formats are table, csv, or json (got '{format}')"
        )));
    }

    let input = args
        .input
        .as_ref()
        .ok_or_else(|| usage("attribute needs a text file to measure"))?;
    let text = std::fs::read_to_string(input).map_err(|e| Error::io(input, e))?;
    let words = count_words(&text);
    if words == 0 {
        return Err(usage(format!(
            "{}: no measurable words in input",
            input.display()
        )));
    }

    let condition = args
        .condition
        .as_deref()
        .map(str::parse::<Condition>)
        .transpose()?;
    let em = per_1k(count_dashes(&text).em, words)?;
    let md = if args.with_md {
        Some(md_per_1k(&detect_features(&text), words)?)
    } else {
        None
    };
    let query = QueryMetrics::from_measured(em, md, condition);
    eprintln!(
        "query: {words} words, em {:.2}/1k{}{}",
        em,
        match md {
            Some(md) => format!(", md {md:.2}/1k"),
            None => String::new(),
        },
        match condition {
            Some(c) => format!(", condition {}", c.code()),
            None => ", condition unknown".to_owned(),
        }
    );

    let result = attribute(&query, &profiles, condition)?;
    match format {
        "json" => println!(
            "{}",
            serde_json::to_string(&result).expect("result serializes")
        ),
        "csv" => {
            let mut writer = csv::Writer::from_writer(std::io::stdout());
            writer
                .write_record(["rank", "model_name", "provider", "distance", "normalized_score"])
                .and_then(|()| {
                    result.ranked.iter().enumerate().try_for_each(|(i, r)| {
                        writer.write_record([
                            (i + 1).to_string(),
                            r.model_name.clone(),
                            r.provider.clone(),
                            format!("{:.4}", r.distance),
                            format!("{:.4}", r.normalized_score),
                        ])
                    })
                })
                .and_then(|()| writer.flush().map_err(csv::Error::from))
                .map_err(|e| Failure::Analysis(format!("writing csv: {e}")))?;
        }
        _ => {
            let rows: Vec<Vec<String>> = result
                .ranked
                .iter()
                .enumerate()
                .map(|(i, r)| {
                    vec![
                        (i + 1).to_string(),
                        r.model_name.clone(),
                        r.provider.clone(),
                        format!("{:.4}", r.distance),
                        format!("{:.4}", r.normalized_score),
                    ]
                })
                .collect();
            print!(
                "{}",
                aligned(
                    &["rank", "model_name", "provider", "distance", "normalized_score"],
                    &rows
                )
            );
            for group in &result.ties {
                println!("tie: {}", group.join(" = "));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

// ---------------------------------------------------------------------------
// scan-dashes
// ---------------------------------------------------------------------------

fn cmd_scan_dashes(cli: &Cli, args: &ScanDashesArgs) -> Result<ExitCode, Failure> {
    let format = cli.format.as_deref().unwrap_or("json");
    if !matches!(format, "json" | "table") {
        return Err(usage(format!(
            "scan-dashes formats are json or table (got '{format}')"
        )));
    }

    let mut files: Vec<PathBuf> = walkdir::WalkDir::new(&args.dir)
        .into_iter()
        .filter_map(|entry| entry.ok())
        .filter(|entry| {
            entry.file_type().is_file()
                && matches!(
                    entry.path().extension().and_then(|e| e.to_str()),
                    Some("txt") | Some("md")
                )
        })
        .map(|entry| entry.into_path())
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Failure::Analysis(format!(
            "{}: no .txt or .md files to scan",
            args.dir.display()
        )));
    }

    let keep_occurrences = args.occurrences.is_some();
    let scanned: Vec<(PathBuf, Vec<DashOccurrence>, ContextSummary)> = files
        .par_iter()
        .map(|path| {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let occurrences = scan(&text);
            let summary = summarize(&occurrences);
            let kept = if keep_occurrences { occurrences } else { Vec::new() };
            Ok((path.clone(), kept, summary))
        })
        .collect::<Result<_, Error>>()?;

    let merged = scanned
        .iter()
        .fold(ContextSummary::default(), |acc, (_, _, s)| acc.merge(s));

    if let Some(out_path) = &args.occurrences {
        let mut writer = csv::Writer::from_path(out_path)
            .map_err(|e| Failure::Analysis(format!("{}: {e}", out_path.display())))?;
        writer
            .write_record(["file", "offset", "line", "kind", "context"])
            .and_then(|()| {
                scanned.iter().try_for_each(|(path, occurrences, _)| {
                    occurrences.iter().try_for_each(|occ| {
                        writer.write_record([
                            path.display().to_string(),
                            occ.byte_offset.to_string(),
                            occ.line.to_string(),
                            occ.kind.name().to_owned(),
                            occ.context.role_name().to_owned(),
                        ])
                    })
                })
            })
            .and_then(|()| writer.flush().map_err(csv::Error::from))
            .map_err(|e| Failure::Analysis(format!("{}: {e}", out_path.display())))?;
        eprintln!("occurrences written to {}", out_path.display());
    }

    eprintln!("scanned {} files", scanned.len());
    if format == "json" {
        println!(
            "{}",
            serde_json::to_string(&merged).expect("summary serializes")
        );
    } else {
        let mut rows = vec![
            vec![
                "all".to_owned(),
                merged.structural.to_string(),
                merged.inline.to_string(),
                match merged.structural_fraction {
                    Some(f) => format!("{:.2}", round2(f)),
                    None => "n/a".to_owned(),
                },
            ],
        ];
        for (kind, split) in &merged.by_kind {
            rows.push(vec![
                kind.name().to_owned(),
                split.structural.to_string(),
                split.inline.to_string(),
                String::new(),
            ]);
        }
        print!(
            "{}",
            aligned(&["kind", "structural", "inline", "structural_fraction"], &rows)
        );
    }
    Ok(ExitCode::SUCCESS)
}

// ---------------------------------------------------------------------------
// run
// ---------------------------------------------------------------------------

fn cmd_run(cli: &Cli, args: &RunArgs) -> Result<ExitCode, Failure> {
    let mut config = RunConfig::load(&args.config).map_err(|e| usage(e.to_string()))?;
    if let Some(store) = &cli.store {
        config.store_path = store.display().to_string();
    }
    let plan = plan_run(&config)?;
    let providers: BTreeSet<String> = plan.models.iter().map(|m| m.provider.clone()).collect();

    let mock_client = args.mock.then(|| ProfileMockClient::new(cli.seed));
    let mut http_clients = Vec::new();
    if mock_client.is_none() {
        for provider in &providers {
            http_clients.push((provider.clone(), client_for_provider(provider)?));
        }
    }
    let mut clients: ClientMap = BTreeMap::new();
    if let Some(mock) = &mock_client {
        for provider in &providers {
            clients.insert(provider.clone(), mock as &dyn ProviderClient);
        }
    }
    for (provider, client) in &http_clients {
        clients.insert(provider.clone(), client as &dyn ProviderClient);
    }

    let cell_count = plan.cells().len();
    eprintln!(
        "running {cell_count} cells across {} provider{} into {}",
        providers.len(),
        if providers.len() == 1 { "" } else { "s" },
        plan.store_path
    );

    let outcome = execute(&plan, &clients, &ExecuteOptions::default())?;
    eprintln!(
        "done: {} collected, {} already complete, {} failed",
        outcome.completed_cells,
        outcome.skipped_cells,
        outcome.failed.len()
    );
    for (cell, reason) in &outcome.failed {
        eprintln!("failed {cell}: {reason}");
    }

    let machine = serde_json::json!({
        "store": plan.store_path,
        "completed_cells": outcome.completed_cells,
        "skipped_cells": outcome.skipped_cells,
        "failed": outcome
            .failed
            .iter()
            .map(|(cell, reason)| serde_json::json!({ "cell": cell, "reason": reason }))
            .collect::<Vec<_>>(),
    });
    println!("{machine}");

    if outcome.failed.is_empty() {
        Ok(ExitCode::SUCCESS)
    } else {
        Ok(ExitCode::from(3))
    }
}

// ---------------------------------------------------------------------------
// baseline
// ---------------------------------------------------------------------------

fn cmd_baseline(cli: &Cli, args: &BaselineArgs) -> Result<ExitCode, Failure> {
    let format = cli.format.as_deref().unwrap_or("table");
    if !matches!(format, "table" | "json") {
        return Err(usage(format!(
            "baseline formats are table or json (got '{format}')"
        )));
    }
    let set = ingest_plaintext(&args.dir, &IngestMetadata::default())?;
    let measured = human_baseline_stats(&set)?;

    if format == "json" {
        println!(
            "{}",
            serde_json::json!({
                "measured": measured,
                "reference": HUMAN_BASELINE_REFERENCE,
            })
        );
    } else {
        let reference = HUMAN_BASELINE_REFERENCE;
        let rate = |v: f64| format!("{:.2}", round2(v));
        let rows = vec![
            vec!["em_mean_per_1k".into(), rate(measured.weighted_mean_per_1k), rate(reference.weighted_mean_per_1k)],
            vec!["em_median_per_1k".into(), rate(measured.median_per_1k), rate(reference.median_per_1k)],
            vec!["em_min_per_1k".into(), rate(measured.min_per_1k), rate(reference.min_per_1k)],
            vec!["em_max_per_1k".into(), rate(measured.max_per_1k), rate(reference.max_per_1k)],
            vec!["essays".into(), measured.essays.to_string(), reference.essays.to_string()],
            vec!["total_words".into(), measured.total_words.to_string(), reference.total_words.to_string()],
        ];
        print!("{}", aligned(&["metric", "measured", "reference"], &rows));
    }
    Ok(ExitCode::SUCCESS)
}

// ---------------------------------------------------------------------------
// rendering
// ---------------------------------------------------------------------------

/// Space-aligned columns with a header row; ends with a newline.
fn aligned(header: &[&str], rows: &[Vec<String>]) -> String {
    let columns = header.len();
    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for row in rows {
        for (i, cell) in row.iter().enumerate().take(columns) {
            widths[i] = widths[i].max(cell.chars().count());
        }
    }
    let mut out = String::new();
    let mut write_row = |cells: &[String]| {
        let mut line = String::new();
        for (i, cell) in cells.iter().enumerate().take(columns) {
            if i > 0 {
                line.push_str("  ");
            }
            let _ = write!(line, "{cell:<width$}", width = widths[i]);
        }
        out.push_str(line.trim_end());
        out.push('\n');
    };
    write_row(&header.iter().map(|h| (*h).to_owned()).collect::<Vec<_>>());
    for row in rows {
        write_row(row);
    }
    out
}
