//! The suppression protocol: prompt conditions, pooled aggregation,
//! reduction statistics, gradient report tables, and the human baseline.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{SampleCondition, SampleSet, Source, TextSample};
use crate::error::{Error, Result};
use crate::mdfeatures::detect_features;
use crate::textmetrics::{count_dashes, count_words, per_1k, round2, DashCounts};

/// The three prompt conditions, ordered by how much they forbid:
/// A (unconstrained) < B (markdown suppressed) < C (markdown and em dashes
/// suppressed).
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    Unconstrained,
    MdSuppressed,
    EmSuppressed,
}

impl Condition {
    pub const ALL: [Condition; 3] = [
        Condition::Unconstrained,
        Condition::MdSuppressed,
        Condition::EmSuppressed,
    ];

    /// Single-letter code used in cell keys and reports.
    pub fn code(self) -> &'static str {
        match self {
            Condition::Unconstrained => "A",
            Condition::MdSuppressed => "B",
            Condition::EmSuppressed => "C",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Condition::Unconstrained => "unconstrained",
            Condition::MdSuppressed => "md_suppressed",
            Condition::EmSuppressed => "em_suppressed",
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Condition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "a" | "unconstrained" => Ok(Condition::Unconstrained),
            "b" | "md_suppressed" | "md-suppressed" => Ok(Condition::MdSuppressed),
            "c" | "em_suppressed" | "em-suppressed" => Ok(Condition::EmSuppressed),
            other => Err(Error::Validation(format!(
                "unknown condition '{other}' (expected A, B, or C)"
            ))),
        }
    }
}

impl From<Condition> for SampleCondition {
    fn from(c: Condition) -> SampleCondition {
        match c {
            Condition::Unconstrained => SampleCondition::Unconstrained,
            Condition::MdSuppressed => SampleCondition::MdSuppressed,
            Condition::EmSuppressed => SampleCondition::EmSuppressed,
        }
    }
}

impl TryFrom<SampleCondition> for Condition {
    type Error = Error;

    fn try_from(c: SampleCondition) -> Result<Condition> {
        match c {
            SampleCondition::Unconstrained => Ok(Condition::Unconstrained),
            SampleCondition::MdSuppressed => Ok(Condition::MdSuppressed),
            SampleCondition::EmSuppressed => Ok(Condition::EmSuppressed),
            SampleCondition::None => Err(Error::Validation(
                "sample carries no experimental condition".to_owned(),
            )),
        }
    }
}

/// Builds the exact prompt for a condition. The suppression instructions
/// are cumulative: B adds the markdown ban to A, and C adds the em-dash ban
/// to B. Wording is fixed; do not edit casually, measured rates depend on it.
pub fn build_prompt(topic: &str, condition: Condition, target_words: u32) -> Result<String> {
    if topic.trim().is_empty() {
        return Err(Error::Validation("topic must be non-empty".to_owned()));
    }
    if target_words == 0 {
        return Err(Error::Validation(
            "target_words must be positive".to_owned(),
        ));
    }
    let mut prompt = format!("Write a {target_words}-word essay about {topic}.");
    if condition >= Condition::MdSuppressed {
        prompt.push_str(
            " Write in flowing prose paragraphs only. Do not use any markdown formatting, \
             headers, bullet points, bold text, or lists.",
        );
    }
    if condition == Condition::EmSuppressed {
        prompt.push_str(" Do not use em dashes.");
    }
    Ok(prompt)
}

/// Pooled measurements for one (model, condition) cell. Rates are pooled —
/// 1,000 x total count / total words — never averaged across samples, so
/// short samples cannot dominate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionSummary {
    pub model_name: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub provider: Option<String>,
    pub condition: Condition,
    pub n_samples: usize,
    pub total_words: u64,
    pub dash: DashCounts,
    pub md_feature_total: u64,
    pub em_per_1k: f64,
    pub md_per_1k: f64,
}

/// Pools every matching model sample in the set into one summary.
pub fn aggregate(set: &SampleSet, model_name: &str, condition: Condition) -> Result<ConditionSummary> {
    let wanted: SampleCondition = condition.into();
    let matching: Vec<&TextSample> = set
        .samples()
        .iter()
        .filter(|s| {
            s.source == Source::Model
                && s.model_name.as_deref() == Some(model_name)
                && s.condition == wanted
        })
        .collect();
    if matching.is_empty() {
        return Err(Error::EmptyCell {
            model: model_name.to_owned(),
            condition: condition.name().to_owned(),
        });
    }
    let mut total_words = 0u64;
    let mut dash = DashCounts::default();
    let mut md_feature_total = 0u64;
    for sample in &matching {
        total_words += count_words(&sample.text);
        dash += count_dashes(&sample.text);
        md_feature_total += detect_features(&sample.text).headline_total();
    }
    if total_words == 0 {
        return Err(Error::UndefinedRate {
            sample_id: Some(format!("{model_name}/{}", condition.name())),
        });
    }
    Ok(ConditionSummary {
        model_name: model_name.to_owned(),
        provider: matching[0].provider.clone(),
        condition,
        n_samples: matching.len(),
        total_words,
        dash,
        md_feature_total,
        em_per_1k: per_1k(dash.em, total_words)?,
        md_per_1k: per_1k(md_feature_total, total_words)?,
    })
}

/// Aggregates every (model, condition) cell present in the set, in
/// deterministic model-name order.
pub fn summarize_store(set: &SampleSet) -> Vec<ConditionSummary> {
    let mut cells: Vec<(String, Condition)> = Vec::new();
    for sample in set.samples() {
        if sample.source != Source::Model {
            continue;
        }
        let (Some(model), Ok(condition)) = (
            sample.model_name.clone(),
            Condition::try_from(sample.condition),
        ) else {
            continue;
        };
        if !cells.contains(&(model.clone(), condition)) {
            cells.push((model, condition));
        }
    }
    cells.sort();
    cells
        .into_iter()
        .filter_map(|(model, condition)| aggregate(set, &model, condition).ok())
        .collect()
}

/// Relative drop from the unconstrained rate: `(u - c) / u`. A zero
/// baseline makes the ratio meaningless, hence the marker variant —
/// callers must not substitute 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum Reduction {
    Fraction(f64),
    NoBaseline,
}

pub fn reduction(unconstrained: f64, constrained: f64) -> Reduction {
    if unconstrained == 0.0 {
        Reduction::NoBaseline
    } else {
        Reduction::Fraction((unconstrained - constrained) / unconstrained)
    }
}

impl Reduction {
    /// Half-up integer percentage, e.g. `14%`, or `n/a` with no baseline.
    pub fn render_percent(&self) -> String {
        match self {
            Reduction::Fraction(f) => format!("{}%", (f * 100.0).round() as i64),
            Reduction::NoBaseline => "n/a".to_owned(),
        }
    }
}

/// Which table layout a gradient report uses.
///
/// * `ConditionPair`: em and md rates under A and B, one model per row.
/// * `Gradient`: em rates under A, B, and C.
/// * `WordsAndRates`: word totals, em rate, and raw feature totals under A.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportShape {
    ConditionPair,
    Gradient,
    WordsAndRates,
}

impl ReportShape {
    fn expected_conditions(self) -> &'static [Condition] {
        match self {
            ReportShape::ConditionPair => {
                &[Condition::Unconstrained, Condition::MdSuppressed]
            }
            ReportShape::Gradient => &Condition::ALL,
            ReportShape::WordsAndRates => &[Condition::Unconstrained],
        }
    }
}

impl FromStr for ReportShape {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "table1" | "condition-pair" | "condition_pair" | "pair" => {
                Ok(ReportShape::ConditionPair)
            }
            "table2" | "gradient" => Ok(ReportShape::Gradient),
            "table3" | "words-and-rates" | "words_and_rates" | "words" => {
                Ok(ReportShape::WordsAndRates)
            }
            other => Err(Error::Validation(format!(
                "unknown report shape '{other}' (expected table1, table2, or table3)"
            ))),
        }
    }
}

/// Output syntax for a rendered report.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Text,
    Csv,
    Markdown,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "text" | "table" => Ok(ReportFormat::Text),
            "csv" => Ok(ReportFormat::Csv),
            "md" | "markdown" => Ok(ReportFormat::Markdown),
            other => Err(Error::Validation(format!(
                "unknown report format '{other}' (expected text, csv, or markdown)"
            ))),
        }
    }
}

/// One model's row: whichever condition cells the store actually had.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub model_name: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub provider: Option<String>,
    pub cells: BTreeMap<Condition, ConditionSummary>,
}

impl ReportRow {
    fn em(&self, c: Condition) -> Option<f64> {
        self.cells.get(&c).map(|s| s.em_per_1k)
    }

    fn md(&self, c: Condition) -> Option<f64> {
        self.cells.get(&c).map(|s| s.md_per_1k)
    }
}

/// A suppression-gradient table. Rows are sorted by unconstrained em rate,
/// highest first (models without an unconstrained cell sink to the bottom);
/// `missing` lists every expected-but-absent cell for the chosen shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientReport {
    pub shape: ReportShape,
    pub rows: Vec<ReportRow>,
    pub missing: Vec<String>,
}

/// Arranges summaries into a report. Absent cells stay absent — they render
/// as `n/a`, never as zero.
pub fn gradient_report(summaries: &[ConditionSummary], shape: ReportShape) -> GradientReport {
    let mut by_model: BTreeMap<String, ReportRow> = BTreeMap::new();
    for summary in summaries {
        let row = by_model
            .entry(summary.model_name.clone())
            .or_insert_with(|| ReportRow {
                model_name: summary.model_name.clone(),
                provider: None,
                cells: BTreeMap::new(),
            });
        if row.provider.is_none() {
            row.provider = summary.provider.clone();
        }
        row.cells.insert(summary.condition, summary.clone());
    }
    let mut rows: Vec<ReportRow> = by_model.into_values().collect();
    rows.sort_by(|a, b| {
        let key = |r: &ReportRow| {
            (
                r.em(Condition::Unconstrained).is_none(),
                std::cmp::Reverse(OrderedRate(r.em(Condition::Unconstrained).unwrap_or(0.0))),
                std::cmp::Reverse(OrderedRate(r.md(Condition::Unconstrained).unwrap_or(0.0))),
            )
        };
        key(a).cmp(&key(b)).then_with(|| a.model_name.cmp(&b.model_name))
    });
    let mut missing = Vec::new();
    for row in &rows {
        for condition in shape.expected_conditions() {
            if !row.cells.contains_key(condition) {
                missing.push(format!("{}: no {} cell", row.model_name, condition.name()));
            }
        }
    }
    GradientReport { shape, rows, missing }
}

/// Finite, non-NaN rate wrapper so report rows can sort totally.
#[derive(PartialEq)]
struct OrderedRate(f64);

impl Eq for OrderedRate {}

impl PartialOrd for OrderedRate {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for OrderedRate {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

impl GradientReport {
    pub fn render(&self, format: ReportFormat) -> String {
        match format {
            ReportFormat::Csv => self.render_csv(),
            ReportFormat::Text => self.render_table(false),
            ReportFormat::Markdown => self.render_table(true),
        }
    }

    fn header(&self) -> Vec<&'static str> {
        match self.shape {
            ReportShape::ConditionPair => vec![
                "model_name",
                "provider",
                "em_unconstrained",
                "em_constrained",
                "md_unconstrained",
                "md_constrained",
            ],
            ReportShape::Gradient => vec![
                "model_name",
                "em_unconstrained",
                "em_md_suppressed",
                "em_em_suppressed",
            ],
            ReportShape::WordsAndRates => {
                vec!["model_name", "words", "em_per_1k", "md_features"]
            }
        }
    }

    /// Data cells for one row, two-decimal rates, `n/a` for absent cells
    /// (empty string in CSV).
    fn data_cells(&self, row: &ReportRow, absent: &str) -> Vec<String> {
        let rate = |v: Option<f64>| match v {
            Some(v) => format!("{:.2}", round2(v)),
            None => absent.to_owned(),
        };
        match self.shape {
            ReportShape::ConditionPair => vec![
                row.model_name.clone(),
                row.provider.clone().unwrap_or_default(),
                rate(row.em(Condition::Unconstrained)),
                rate(row.em(Condition::MdSuppressed)),
                rate(row.md(Condition::Unconstrained)),
                rate(row.md(Condition::MdSuppressed)),
            ],
            ReportShape::Gradient => vec![
                row.model_name.clone(),
                rate(row.em(Condition::Unconstrained)),
                rate(row.em(Condition::MdSuppressed)),
                rate(row.em(Condition::EmSuppressed)),
            ],
            ReportShape::WordsAndRates => {
                let cell = row.cells.get(&Condition::Unconstrained);
                vec![
                    row.model_name.clone(),
                    cell.map(|c| c.total_words.to_string())
                        .unwrap_or_else(|| absent.to_owned()),
                    rate(cell.map(|c| c.em_per_1k)),
                    cell.map(|c| c.md_feature_total.to_string())
                        .unwrap_or_else(|| absent.to_owned()),
                ]
            }
        }
    }

    fn render_csv(&self) -> String {
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer.write_record(self.header()).expect("in-memory csv");
        for row in &self.rows {
            writer
                .write_record(self.data_cells(row, ""))
                .expect("in-memory csv");
        }
        String::from_utf8(writer.into_inner().expect("in-memory csv")).expect("csv is utf-8")
    }

    /// The em reduction shown in human-readable formats, with the marker
    /// for increases (negative reductions happen within sampling noise).
    fn change_column(&self, row: &ReportRow) -> Option<String> {
        let to = match self.shape {
            ReportShape::ConditionPair => Condition::MdSuppressed,
            ReportShape::Gradient => Condition::EmSuppressed,
            ReportShape::WordsAndRates => return None,
        };
        let (Some(u), Some(c)) = (row.em(Condition::Unconstrained), row.em(to)) else {
            return Some("n/a".to_owned());
        };
        let rendered = match reduction(u, c) {
            Reduction::Fraction(f) if f < 0.0 => {
                format!("{}*", Reduction::Fraction(f).render_percent())
            }
            r => r.render_percent(),
        };
        Some(rendered)
    }

    fn render_table(&self, markdown: bool) -> String {
        let mut header: Vec<String> = self.header().iter().map(|h| (*h).to_owned()).collect();
        let change_label = match self.shape {
            ReportShape::ConditionPair => Some("em_change".to_owned()),
            ReportShape::Gradient => Some("em_change_a_to_c".to_owned()),
            ReportShape::WordsAndRates => None,
        };
        if let Some(label) = &change_label {
            header.push(label.clone());
        }
        let mut table: Vec<Vec<String>> = vec![header];
        let mut any_negative = false;
        for row in &self.rows {
            let mut cells = self.data_cells(row, "n/a");
            if let Some(change) = self.change_column(row) {
                if change.ends_with('*') {
                    any_negative = true;
                }
                cells.push(change);
            }
            table.push(cells);
        }
        let mut out = render_aligned(&table, markdown);
        if any_negative {
            out.push_str("* rate increased; change is within sampling variability\n");
        }
        for item in &self.missing {
            out.push_str(&format!("missing: {item}\n"));
        }
        if !matches!(self.shape, ReportShape::Gradient) {
            out.push_str(
                "note: list items count once per line; multi-line items add one per line\n",
            );
        }
        out
    }
}

fn render_aligned(table: &[Vec<String>], markdown: bool) -> String {
    let columns = table.iter().map(Vec::len).max().unwrap_or(0);
    let mut widths = vec![0usize; columns];
    for row in table {
        for (i, cell) in row.iter().enumerate() {
            widths[i] = widths[i].max(cell.chars().count());
        }
    }
    let mut out = String::new();
    for (r, row) in table.iter().enumerate() {
        let mut line = String::new();
        if markdown {
            line.push_str("| ");
        }
        for (i, cell) in row.iter().enumerate() {
            let pad = widths[i] - cell.chars().count();
            line.push_str(cell);
            for _ in 0..pad {
                line.push(' ');
            }
            if i + 1 < row.len() {
                line.push_str(if markdown { " | " } else { "  " });
            }
        }
        if markdown {
            line = line.trim_end().to_owned();
            line.push_str(" |");
        }
        out.push_str(line.trim_end());
        out.push('\n');
        if markdown && r == 0 {
            let mut sep = String::from("|");
            for width in &widths {
                sep.push_str(&"-".repeat(width + 2));
                sep.push('|');
            }
            out.push_str(&sep);
            out.push('\n');
        }
    }
    out
}

/// Human-baseline descriptive statistics. The mean is word-weighted
/// (pooled); the median, min, and max are over per-essay rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HumanBaselineStats {
    pub weighted_mean_per_1k: f64,
    pub median_per_1k: f64,
    pub min_per_1k: f64,
    pub max_per_1k: f64,
    pub essays: usize,
    pub total_words: u64,
}

/// The shipped human-baseline reference: eight professionally edited long
/// essays, 57,232 words. Em-dash rates vary by an order of magnitude from
/// essay to essay, so the range matters as much as the center.
pub const HUMAN_BASELINE_REFERENCE: HumanBaselineStats = HumanBaselineStats {
    weighted_mean_per_1k: 3.23,
    median_per_1k: 3.83,
    min_per_1k: 0.33,
    max_per_1k: 17.12,
    essays: 8,
    total_words: 57_232,
};

/// Computes baseline statistics over the human samples in a set.
pub fn human_baseline_stats(set: &SampleSet) -> Result<HumanBaselineStats> {
    let essays: Vec<&TextSample> = set
        .samples()
        .iter()
        .filter(|s| s.source == Source::Human)
        .collect();
    if essays.is_empty() {
        return Err(Error::EmptySet(format!(
            "{} (no human samples)",
            set.provenance()
        )));
    }
    let mut rates = Vec::with_capacity(essays.len());
    let mut total_words = 0u64;
    let mut total_em = 0u64;
    for essay in &essays {
        let words = count_words(&essay.text);
        if words == 0 {
            return Err(Error::UndefinedRate {
                sample_id: Some(essay.id.clone()),
            });
        }
        let em = count_dashes(&essay.text).em;
        total_words += words;
        total_em += em;
        rates.push(per_1k(em, words)?);
    }
    rates.sort_by(|a, b| a.total_cmp(b));
    let median = if rates.len() % 2 == 1 {
        rates[rates.len() / 2]
    } else {
        (rates[rates.len() / 2 - 1] + rates[rates.len() / 2]) / 2.0
    };
    Ok(HumanBaselineStats {
        weighted_mean_per_1k: per_1k(total_em, total_words)?,
        median_per_1k: median,
        min_per_1k: rates[0],
        max_per_1k: rates[rates.len() - 1],
        essays: essays.len(),
        total_words,
    })
}
