//! Position-aware dash classification: structural furniture vs inline use.
//!
//! A dash on a structural line (thematic break, list marker, frontmatter
//! delimiter) is page furniture; a dash inside running text is a stylistic
//! choice. The same line rules as [`crate::mdfeatures`] decide which is
//! which, so a dash is "structural" here exactly when its line counts as a
//! structural feature there.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::corpus::TextSample;
use crate::mdfeatures::lines::{self, LineKind};
use crate::textmetrics::{count_dashes, DashCounts};

/// Which dash-family member an occurrence is. Kinds mirror
/// [`DashCounts`]: one occurrence per em or en character, one per maximal
/// multi-hyphen run. Single hyphens never produce occurrences.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum DashKind {
    Em,
    En,
    DoubleHyphen,
    LongHyphenRun,
}

impl DashKind {
    pub fn name(self) -> &'static str {
        match self {
            DashKind::Em => "em",
            DashKind::En => "en",
            DashKind::DoubleHyphen => "double_hyphen",
            DashKind::LongHyphenRun => "long_hyphen_run",
        }
    }
}

impl fmt::Display for DashKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Why a structural occurrence is structural.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StructuralContext {
    ThematicBreak,
    ListMarker,
    FrontmatterDelimiter,
}

/// How an inline occurrence is being used. `ClauseJoint` is an em dash with
/// words (or spaced words) on both sides; `NumericRange` is an en dash
/// directly between digits; everything else inline is `OtherInline`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InlineContext {
    ClauseJoint,
    NumericRange,
    OtherInline,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "group", content = "role")]
pub enum DashContext {
    Structural(StructuralContext),
    Inline(InlineContext),
}

impl DashContext {
    pub fn is_structural(self) -> bool {
        matches!(self, DashContext::Structural(_))
    }

    /// The leaf role name used in CSV output.
    pub fn role_name(self) -> &'static str {
        match self {
            DashContext::Structural(StructuralContext::ThematicBreak) => "thematic_break",
            DashContext::Structural(StructuralContext::ListMarker) => "list_marker",
            DashContext::Structural(StructuralContext::FrontmatterDelimiter) => {
                "frontmatter_delimiter"
            }
            DashContext::Inline(InlineContext::ClauseJoint) => "clause_joint",
            DashContext::Inline(InlineContext::NumericRange) => "numeric_range",
            DashContext::Inline(InlineContext::OtherInline) => "other_inline",
        }
    }
}

/// One classified dash occurrence. Offsets are byte positions into the
/// original text and are strictly increasing in scan output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DashOccurrence {
    pub byte_offset: usize,
    pub line: usize,
    pub kind: DashKind,
    pub context: DashContext,
}

/// Classifies every dash occurrence in the text.
pub fn scan(text: &str) -> Vec<DashOccurrence> {
    let classified = lines::classify(text);
    let frontmatter = frontmatter_delimiters(text, &classified);
    let mut out = Vec::new();
    for line in &classified {
        let content = line.content(text);
        for raw in raw_occurrences(content) {
            let context = if frontmatter.contains(&line.number) {
                DashContext::Structural(StructuralContext::FrontmatterDelimiter)
            } else {
                match line.kind {
                    LineKind::ThematicBreak => {
                        DashContext::Structural(StructuralContext::ThematicBreak)
                    }
                    LineKind::Bullet | LineKind::Numbered => {
                        DashContext::Structural(StructuralContext::ListMarker)
                    }
                    _ => DashContext::Inline(inline_context(content, &raw)),
                }
            };
            out.push(DashOccurrence {
                byte_offset: line.start + raw.offset,
                line: line.number,
                kind: raw.kind,
                context,
            });
        }
    }
    out
}

struct RawOccurrence {
    offset: usize,
    len: usize,
    kind: DashKind,
}

/// Finds dash occurrences within one line, mirroring the counting rules of
/// [`count_dashes`]: em and en per character, hyphens per maximal run of
/// two or more.
fn raw_occurrences(content: &str) -> Vec<RawOccurrence> {
    let mut out = Vec::new();
    let mut run_start: Option<usize> = None;
    let mut run_len = 0usize;
    let close_run = |start: Option<usize>, len: usize, out: &mut Vec<RawOccurrence>| {
        if let Some(offset) = start {
            if len == 2 {
                out.push(RawOccurrence {
                    offset,
                    len,
                    kind: DashKind::DoubleHyphen,
                });
            } else if len > 2 {
                out.push(RawOccurrence {
                    offset,
                    len,
                    kind: DashKind::LongHyphenRun,
                });
            }
        }
    };
    for (idx, ch) in content.char_indices() {
        if ch == '-' {
            if run_start.is_none() {
                run_start = Some(idx);
                run_len = 0;
            }
            run_len += 1;
            continue;
        }
        close_run(run_start, run_len, &mut out);
        run_start = None;
        match ch {
            '\u{2014}' => out.push(RawOccurrence {
                offset: idx,
                len: ch.len_utf8(),
                kind: DashKind::Em,
            }),
            '\u{2013}' => out.push(RawOccurrence {
                offset: idx,
                len: ch.len_utf8(),
                kind: DashKind::En,
            }),
            _ => {}
        }
    }
    close_run(run_start, run_len, &mut out);
    out.sort_by_key(|o| o.offset);
    out
}

fn inline_context(content: &str, occ: &RawOccurrence) -> InlineContext {
    let before = &content[..occ.offset];
    let after = &content[occ.offset + occ.len..];
    match occ.kind {
        DashKind::En => {
            let immediately_before = before.chars().next_back();
            let immediately_after = after.chars().next();
            if matches!(immediately_before, Some(c) if c.is_ascii_digit())
                && matches!(immediately_after, Some(c) if c.is_ascii_digit())
            {
                InlineContext::NumericRange
            } else {
                InlineContext::OtherInline
            }
        }
        DashKind::Em => {
            let word_before = before
                .chars()
                .rev()
                .find(|c| *c != ' ' && *c != '\t')
                .is_some_and(char::is_alphanumeric);
            let word_after = after
                .chars()
                .find(|c| *c != ' ' && *c != '\t')
                .is_some_and(char::is_alphanumeric);
            if word_before && word_after {
                InlineContext::ClauseJoint
            } else {
                InlineContext::OtherInline
            }
        }
        DashKind::DoubleHyphen | DashKind::LongHyphenRun => InlineContext::OtherInline,
    }
}

/// YAML-style frontmatter: a `---` line as the very first line, closed by
/// the next `---` line before any blank line. Returns the delimiter line
/// numbers (both or neither).
fn frontmatter_delimiters(text: &str, classified: &[lines::Line]) -> Vec<usize> {
    let Some(first) = classified.first() else {
        return Vec::new();
    };
    if first.content(text).trim_end() != "---" {
        return Vec::new();
    }
    for line in &classified[1..] {
        let content = line.content(text);
        if content.trim().is_empty() {
            return Vec::new();
        }
        if content.trim_end() == "---" {
            return vec![first.number, line.number];
        }
    }
    Vec::new()
}

/// Structural/inline split for one dash kind.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct KindSplit {
    pub structural: u64,
    pub inline: u64,
}

/// Occurrence totals. `structural_fraction` is absent when there are no
/// occurrences at all (a fraction of nothing is not zero).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ContextSummary {
    pub structural: u64,
    pub inline: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub structural_fraction: Option<f64>,
    pub by_kind: BTreeMap<DashKind, KindSplit>,
}

impl ContextSummary {
    fn refresh_fraction(&mut self) {
        let total = self.structural + self.inline;
        self.structural_fraction = if total == 0 {
            None
        } else {
            Some(self.structural as f64 / total as f64)
        };
    }

    /// Combines two summaries as if their occurrence lists had been
    /// concatenated. Associative and commutative, so sharded scans can
    /// merge in any order.
    pub fn merge(&self, other: &ContextSummary) -> ContextSummary {
        let mut merged = ContextSummary {
            structural: self.structural + other.structural,
            inline: self.inline + other.inline,
            structural_fraction: None,
            by_kind: self.by_kind.clone(),
        };
        for (kind, split) in &other.by_kind {
            let entry = merged.by_kind.entry(*kind).or_default();
            entry.structural += split.structural;
            entry.inline += split.inline;
        }
        merged.refresh_fraction();
        merged
    }
}

/// Rolls occurrences up into totals.
pub fn summarize(occurrences: &[DashOccurrence]) -> ContextSummary {
    let mut summary = ContextSummary::default();
    for occ in occurrences {
        let entry = summary.by_kind.entry(occ.kind).or_default();
        if occ.context.is_structural() {
            summary.structural += 1;
            entry.structural += 1;
        } else {
            summary.inline += 1;
            entry.inline += 1;
        }
    }
    summary.refresh_fraction();
    summary
}

/// The question a suppression check actually cares about: did the author
/// route around the em dash with lookalikes? Structural occurrences are
/// ignored; long hyphen runs are rulers, not transitions, so they do not
/// trigger the verdict either.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AltRepCheck {
    pub counts: DashCounts,
    pub inline_kinds: Vec<DashKind>,
    pub verdict: String,
}

pub fn alt_representation_check(sample: &TextSample) -> AltRepCheck {
    let occurrences = scan(&sample.text);
    let mut kinds: Vec<DashKind> = Vec::new();
    for occ in &occurrences {
        let counts_toward_verdict = matches!(
            occ.kind,
            DashKind::Em | DashKind::En | DashKind::DoubleHyphen
        );
        if !occ.context.is_structural() && counts_toward_verdict && !kinds.contains(&occ.kind) {
            kinds.push(occ.kind);
        }
    }
    kinds.sort();
    let verdict = if kinds.is_empty() {
        "no dash-mediated transitions".to_owned()
    } else {
        let names: Vec<&str> = kinds.iter().map(|k| k.name()).collect();
        format!("inline dash usage present: {}", names.join(", "))
    };
    AltRepCheck {
        counts: count_dashes(&sample.text),
        inline_kinds: kinds,
        verdict,
    }
}

/// Renders occurrences as `offset,line,kind,context` CSV (offsets are
/// file-local byte positions).
pub fn occurrences_csv(occurrences: &[DashOccurrence]) -> String {
    let mut out = String::from("offset,line,kind,context\n");
    for occ in occurrences {
        out.push_str(&format!(
            "{},{},{},{}\n",
            occ.byte_offset,
            occ.line,
            occ.kind.name(),
            occ.context.role_name()
        ));
    }
    out
}
