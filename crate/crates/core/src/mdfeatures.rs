//! Line-oriented detection of overt markdown formatting.
//!
//! The detector recognizes a deliberate subset of CommonMark — the features
//! a human reader would call "markdown formatting" at a glance:
//!
//! * ATX heading: up to 3 leading spaces, 1-6 `#`, then a space or end of line.
//! * Bullet item: up to 3 leading spaces, one of `-` `*` `+`, then a space.
//!   Every list line counts as one item, nested or not.
//! * Numbered item: up to 3 leading spaces, 1-9 digits, `.` or `)`, then a space.
//! * Thematic break: three or more of the same `-` `*` `_` with only spaces
//!   between them. Wins over the bullet rule when both match (`- - -`).
//! * Fenced code block: a balanced ``` or ~~~ pair, counted at the opening
//!   fence. Nothing inside an open fence counts as a feature.
//! * Bold span: the shortest `**...**` or `__...__` pair whose content has
//!   at least one non-space character. Spans may wrap across single
//!   newlines but never across blank lines or structural lines, and
//!   delimiters pair left to right, so emphasis nested inside a span is
//!   content, not another span.
//!
//! Setext headings, italics, links, and tables are out of scope. Four or
//! more leading spaces disqualify a line from every rule (indented code).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// The feature taxonomy. Headings, list items, and bold spans make up the
/// headline density measure; fences and breaks are tracked separately.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Heading,
    BulletItem,
    NumberedItem,
    BoldSpan,
    FencedCodeBlock,
    ThematicBreak,
}

/// Per-kind totals plus every occurrence's 1-based line number, in
/// ascending line order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureCounts {
    pub headings: u64,
    pub bullet_items: u64,
    pub numbered_items: u64,
    pub bold_spans: u64,
    pub fenced_code_blocks: u64,
    pub thematic_breaks: u64,
    pub positions: Vec<(FeatureKind, usize)>,
}

impl FeatureCounts {
    /// The headline density numerator: headings + bullet items + numbered
    /// items + bold spans. Fences and thematic breaks are excluded so the
    /// measure stays comparable with hand counts of "formatting" features.
    pub fn headline_total(&self) -> u64 {
        self.headings + self.bullet_items + self.numbered_items + self.bold_spans
    }

    /// Every tracked feature, including fences and breaks.
    pub fn extended_total(&self) -> u64 {
        self.headline_total() + self.fenced_code_blocks + self.thematic_breaks
    }
}

/// Markdown features per 1,000 words, using the headline taxonomy.
pub fn md_per_1k(features: &FeatureCounts, words: u64) -> Result<f64> {
    crate::textmetrics::per_1k(features.headline_total(), words)
}

/// Scans a document for the feature subset described in the module docs.
pub fn detect_features(text: &str) -> FeatureCounts {
    let mut counts = FeatureCounts::default();
    let lines = lines::classify(text);
    for line in &lines {
        match line.kind {
            lines::LineKind::AtxHeading => {
                counts.headings += 1;
                counts.positions.push((FeatureKind::Heading, line.number));
            }
            lines::LineKind::Bullet => {
                counts.bullet_items += 1;
                counts
                    .positions
                    .push((FeatureKind::BulletItem, line.number));
            }
            lines::LineKind::Numbered => {
                counts.numbered_items += 1;
                counts
                    .positions
                    .push((FeatureKind::NumberedItem, line.number));
            }
            lines::LineKind::ThematicBreak => {
                counts.thematic_breaks += 1;
                counts
                    .positions
                    .push((FeatureKind::ThematicBreak, line.number));
            }
            lines::LineKind::FenceOpen => {
                counts.fenced_code_blocks += 1;
                counts
                    .positions
                    .push((FeatureKind::FencedCodeBlock, line.number));
            }
            lines::LineKind::Blank
            | lines::LineKind::FenceClose
            | lines::LineKind::Code
            | lines::LineKind::Text => {}
        }
    }
    for line_number in bold_span_lines(text, &lines) {
        counts.bold_spans += 1;
        counts.positions.push((FeatureKind::BoldSpan, line_number));
    }
    counts.positions.sort_by_key(|&(kind, line)| (line, kind));
    counts
}

/// Finds bold spans and reports the line each span opens on. Scanning runs
/// per block of consecutive prose-bearing lines so spans cannot cross blank
/// lines, fences, or thematic breaks.
fn bold_span_lines(text: &str, lines: &[lines::Line]) -> Vec<usize> {
    let mut spans = Vec::new();
    let mut block: Vec<&lines::Line> = Vec::new();
    for line in lines {
        let in_block = matches!(
            line.kind,
            lines::LineKind::Text
                | lines::LineKind::AtxHeading
                | lines::LineKind::Bullet
                | lines::LineKind::Numbered
        );
        if in_block {
            block.push(line);
        } else {
            scan_block(text, &block, &mut spans);
            block.clear();
        }
    }
    scan_block(text, &block, &mut spans);
    spans
}

fn scan_block(text: &str, block: &[&lines::Line], spans: &mut Vec<usize>) {
    if block.is_empty() {
        return;
    }
    // Join the block with single newlines, remembering where each line
    // starts so span offsets map back to line numbers.
    let mut joined = String::new();
    let mut starts = Vec::with_capacity(block.len());
    for (i, line) in block.iter().enumerate() {
        if i > 0 {
            joined.push('\n');
        }
        starts.push(joined.len());
        joined.push_str(line.content(text));
    }
    for open in scan_bold_pairs(&joined) {
        let idx = match starts.binary_search(&open) {
            Ok(i) => i,
            Err(i) => i - 1,
        };
        spans.push(block[idx].number);
    }
}

/// Left-to-right shortest-match pairing of `**`/`__` delimiters. Returns
/// the byte offset of each span's opening delimiter. Both delimiters of a
/// span are consumed; an opener with no valid closer is skipped over.
fn scan_bold_pairs(s: &str) -> Vec<usize> {
    let b = s.as_bytes();
    let mut out = Vec::new();
    let mut i = 0usize;
    while i + 1 < b.len() {
        let delim: &[u8] = match &b[i..i + 2] {
            d @ b"**" | d @ b"__" => d,
            _ => {
                i += 1;
                continue;
            }
        };
        let mut close = None;
        let mut j = i + 3; // leave at least one content byte
        while j + 2 <= b.len() {
            if &b[j..j + 2] == delim {
                let content = &s[i + 2..j];
                if content.chars().any(|c| !c.is_whitespace()) {
                    close = Some(j);
                    break;
                }
            }
            j += 1;
        }
        match close {
            Some(j) => {
                out.push(i);
                i = j + 2;
            }
            None => i += 2,
        }
    }
    out
}

/// Headline-taxonomy totals broken out per kind, for report footers.
pub fn counts_by_kind(features: &FeatureCounts) -> BTreeMap<FeatureKind, u64> {
    let mut map = BTreeMap::new();
    map.insert(FeatureKind::Heading, features.headings);
    map.insert(FeatureKind::BulletItem, features.bullet_items);
    map.insert(FeatureKind::NumberedItem, features.numbered_items);
    map.insert(FeatureKind::BoldSpan, features.bold_spans);
    map.insert(FeatureKind::FencedCodeBlock, features.fenced_code_blocks);
    map.insert(FeatureKind::ThematicBreak, features.thematic_breaks);
    map
}

/// The line classifier shared with dash-context analysis, so a line is
/// "structural" for dash purposes exactly when it carries a structural
/// feature here.
pub(crate) mod lines {
    #[derive(Debug, Clone, Copy, PartialEq, Eq)]
    pub(crate) enum LineKind {
        Blank,
        ThematicBreak,
        AtxHeading,
        Bullet,
        Numbered,
        FenceOpen,
        FenceClose,
        Code,
        Text,
    }

    /// One physical line: its 1-based number, the byte range of its content
    /// (terminator excluded), and its classification.
    #[derive(Debug, Clone)]
    pub(crate) struct Line {
        pub number: usize,
        pub start: usize,
        pub content_len: usize,
        pub kind: LineKind,
    }

    impl Line {
        pub(crate) fn content<'t>(&self, text: &'t str) -> &'t str {
            &text[self.start..self.start + self.content_len]
        }
    }

    /// Splits into physical lines and classifies each, tracking fence state
    /// so code interiors never register as features.
    pub(crate) fn classify(text: &str) -> Vec<Line> {
        let mut out = Vec::new();
        let mut fence: Option<(u8, usize)> = None;
        let mut start = 0usize;
        let mut number = 0usize;
        // A trailing newline terminates the last line rather than opening
        // an empty one, so the loop simply stops at end of input.
        while start < text.len() {
            let rest = &text[start..];
            let (segment, advance) = match rest.find('\n') {
                Some(n) => (&rest[..n], n + 1),
                None => (rest, rest.len()),
            };
            let content = segment.strip_suffix('\r').unwrap_or(segment);
            number += 1;
            let kind = match fence {
                Some((marker, len)) => {
                    if closes_fence(content, marker, len) {
                        fence = None;
                        LineKind::FenceClose
                    } else {
                        LineKind::Code
                    }
                }
                None => {
                    if content.trim().is_empty() {
                        LineKind::Blank
                    } else if let Some((marker, len)) = opens_fence(content) {
                        fence = Some((marker, len));
                        LineKind::FenceOpen
                    } else if is_thematic_break(content) {
                        LineKind::ThematicBreak
                    } else if is_atx_heading(content) {
                        LineKind::AtxHeading
                    } else if is_bullet(content) {
                        LineKind::Bullet
                    } else if is_numbered(content) {
                        LineKind::Numbered
                    } else {
                        LineKind::Text
                    }
                }
            };
            out.push(Line {
                number,
                start,
                content_len: content.len(),
                kind,
            });
            start += advance;
        }
        out
    }

    /// Strips up to three leading spaces; four or more disqualify the line.
    fn strip_indent(content: &str) -> Option<&str> {
        let spaces = content.len() - content.trim_start_matches(' ').len();
        if spaces > 3 {
            None
        } else {
            Some(&content[spaces..])
        }
    }

    fn opens_fence(content: &str) -> Option<(u8, usize)> {
        let s = strip_indent(content)?;
        let marker = match s.as_bytes().first() {
            Some(b'`') => b'`',
            Some(b'~') => b'~',
            _ => return None,
        };
        let len = s.bytes().take_while(|&b| b == marker).count();
        if len < 3 {
            return None;
        }
        let info = &s[len..];
        // Backtick fences cannot carry backticks in their info string.
        if marker == b'`' && info.contains('`') {
            return None;
        }
        Some((marker, len))
    }

    fn closes_fence(content: &str, marker: u8, open_len: usize) -> bool {
        let Some(s) = strip_indent(content) else {
            return false;
        };
        let len = s.bytes().take_while(|&b| b == marker).count();
        len >= open_len && s[len..].trim().is_empty()
    }

    fn is_thematic_break(content: &str) -> bool {
        let Some(s) = strip_indent(content) else {
            return false;
        };
        let mut marker = None;
        let mut count = 0usize;
        for ch in s.chars() {
            match ch {
                ' ' => continue,
                '-' | '*' | '_' => {
                    match marker {
                        None => marker = Some(ch),
                        Some(m) if m != ch => return false,
                        Some(_) => {}
                    }
                    count += 1;
                }
                _ => return false,
            }
        }
        count >= 3
    }

    fn is_atx_heading(content: &str) -> bool {
        let Some(s) = strip_indent(content) else {
            return false;
        };
        let hashes = s.bytes().take_while(|&b| b == b'#').count();
        (1..=6).contains(&hashes) && matches!(s.as_bytes().get(hashes), None | Some(b' '))
    }

    fn is_bullet(content: &str) -> bool {
        let Some(s) = strip_indent(content) else {
            return false;
        };
        let mut bytes = s.bytes();
        matches!(bytes.next(), Some(b'-') | Some(b'*') | Some(b'+')) && bytes.next() == Some(b' ')
    }

    fn is_numbered(content: &str) -> bool {
        let Some(s) = strip_indent(content) else {
            return false;
        };
        let digits = s.bytes().take_while(|b| b.is_ascii_digit()).count();
        if !(1..=9).contains(&digits) {
            return false;
        }
        let b = s.as_bytes();
        matches!(b.get(digits), Some(b'.') | Some(b')')) && b.get(digits + 1) == Some(&b' ')
    }
}
