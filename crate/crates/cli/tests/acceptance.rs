//! The acceptance gate. Eight criteria, one test each; every test prints
//! a `[acceptance] criterion N (name): PASS` line (or FAIL with the
//! reason) — run `cargo test --test acceptance -- --nocapture` to see
//! them all.
//!
//! The counting criteria check the library against brute-force oracles
//! written separately from the implementation (and from the property-test
//! oracles), so a shared misreading of the counting rules would have to
//! happen three times independently to slip through.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use chrono::Utc;
use tempfile::TempDir;

use prosemark_core::attribution::{attribute, builtin_profiles, QueryMetrics};
use prosemark_core::corpus::{
    write_samples, SampleCondition, SampleSet, Source, TextSample,
};
use prosemark_core::dashcontext::{scan, summarize, DashKind};
use prosemark_core::harness::client::{
    GenerateError, Generation, GenerationParams, ProviderClient,
};
use prosemark_core::harness::mock::MockClient;
use prosemark_core::harness::{execute, ClientMap, ExecuteOptions, ModelSpec, RunPlan};
use prosemark_core::mdfeatures::detect_features;
use prosemark_core::suppression::{
    aggregate, human_baseline_stats, reduction, Condition, Reduction,
    HUMAN_BASELINE_REFERENCE,
};
use prosemark_core::textmetrics::{count_dashes, count_words};

/// Runs one criterion and prints its verdict line.
fn check(number: u8, name: &str, body: impl FnOnce() -> Result<(), String>) {
    match body() {
        Ok(()) => println!("[acceptance] criterion {number} ({name}): PASS"),
        Err(why) => {
            println!("[acceptance] criterion {number} ({name}): FAIL - {why}");
            panic!("acceptance criterion {number} ({name}) failed: {why}");
        }
    }
}

fn ensure(cond: bool, why: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(why.into())
    }
}

// ===========================================================================
// Brute-force oracles, written from the documented counting rules.
// ===========================================================================

mod oracle {
    use prosemark_core::mdfeatures::{FeatureCounts, FeatureKind};

    /// (em, en, double_hyphen, long_hyphen_run): dash characters counted
    /// one by one, ASCII hyphens grouped into maximal runs.
    pub fn dashes(text: &str) -> (u64, u64, u64, u64) {
        let chars: Vec<char> = text.chars().collect();
        let (mut em, mut en, mut double, mut long) = (0u64, 0u64, 0u64, 0u64);
        let mut i = 0usize;
        while i < chars.len() {
            match chars[i] {
                '\u{2014}' => {
                    em += 1;
                    i += 1;
                }
                '\u{2013}' => {
                    en += 1;
                    i += 1;
                }
                '-' => {
                    let mut run = 0usize;
                    while i < chars.len() && chars[i] == '-' {
                        run += 1;
                        i += 1;
                    }
                    if run == 2 {
                        double += 1;
                    } else if run >= 3 {
                        long += 1;
                    }
                }
                _ => i += 1,
            }
        }
        (em, en, double, long)
    }

    /// Whitespace-separated tokens containing at least one alphanumeric.
    pub fn words(text: &str) -> u64 {
        text.split_whitespace()
            .filter(|t| t.chars().any(char::is_alphanumeric))
            .count() as u64
    }

    // -- line classification ------------------------------------------------

    #[derive(Clone, Copy, PartialEq)]
    enum Kind {
        Blank,
        Break,
        Heading,
        Bullet,
        Numbered,
        FenceOpen,
        FenceClose,
        Code,
        Text,
    }

    /// Physical lines: terminated by `\n` (which closes a line rather than
    /// opening a new empty one), with a trailing `\r` stripped.
    fn physical_lines(text: &str) -> Vec<&str> {
        let mut lines = Vec::new();
        let mut rest = text;
        while !rest.is_empty() {
            match rest.find('\n') {
                Some(n) => {
                    lines.push(&rest[..n]);
                    rest = &rest[n + 1..];
                }
                None => {
                    lines.push(rest);
                    rest = "";
                }
            }
        }
        lines
            .into_iter()
            .map(|l| l.strip_suffix('\r').unwrap_or(l))
            .collect()
    }

    /// Up to three leading spaces are insignificant; four or more put the
    /// line out of reach of every block rule.
    fn after_indent(line: &str) -> Option<Vec<char>> {
        let chars: Vec<char> = line.chars().collect();
        let mut spaces = 0usize;
        while spaces < chars.len() && chars[spaces] == ' ' {
            spaces += 1;
        }
        if spaces > 3 {
            None
        } else {
            Some(chars[spaces..].to_vec())
        }
    }

    fn fence_marker(line: &str) -> Option<(char, usize)> {
        let c = after_indent(line)?;
        let marker = *c.first()?;
        if marker != '`' && marker != '~' {
            return None;
        }
        let len = c.iter().take_while(|&&ch| ch == marker).count();
        if len < 3 {
            return None;
        }
        if marker == '`' && c[len..].contains(&'`') {
            return None;
        }
        Some((marker, len))
    }

    fn closes(line: &str, marker: char, open_len: usize) -> bool {
        match after_indent(line) {
            None => false,
            Some(c) => {
                let len = c.iter().take_while(|&&ch| ch == marker).count();
                len >= open_len && c[len..].iter().all(|ch| ch.is_whitespace())
            }
        }
    }

    fn is_break(line: &str) -> bool {
        let Some(c) = after_indent(line) else {
            return false;
        };
        let markers: Vec<char> = c.iter().copied().filter(|&ch| ch != ' ').collect();
        markers.len() >= 3
            && matches!(markers[0], '-' | '*' | '_')
            && markers.iter().all(|&ch| ch == markers[0])
    }

    fn is_heading(line: &str) -> bool {
        let Some(c) = after_indent(line) else {
            return false;
        };
        let hashes = c.iter().take_while(|&&ch| ch == '#').count();
        (1..=6).contains(&hashes) && (c.len() == hashes || c[hashes] == ' ')
    }

    fn is_bullet(line: &str) -> bool {
        let Some(c) = after_indent(line) else {
            return false;
        };
        c.len() >= 2 && matches!(c[0], '-' | '*' | '+') && c[1] == ' '
    }

    fn is_numbered(line: &str) -> bool {
        let Some(c) = after_indent(line) else {
            return false;
        };
        let digits = c.iter().take_while(|ch| ch.is_ascii_digit()).count();
        (1..=9).contains(&digits)
            && digits + 1 < c.len() + 1
            && digits < c.len()
            && matches!(c[digits], '.' | ')')
            && c.get(digits + 1) == Some(&' ')
    }

    fn classify(lines: &[&str]) -> Vec<Kind> {
        let mut kinds = Vec::with_capacity(lines.len());
        let mut fence: Option<(char, usize)> = None;
        for line in lines {
            let kind = match fence {
                Some((marker, len)) => {
                    if closes(line, marker, len) {
                        fence = None;
                        Kind::FenceClose
                    } else {
                        Kind::Code
                    }
                }
                None => {
                    if line.trim().is_empty() {
                        Kind::Blank
                    } else if let Some(open) = fence_marker(line) {
                        fence = Some(open);
                        Kind::FenceOpen
                    } else if is_break(line) {
                        Kind::Break
                    } else if is_heading(line) {
                        Kind::Heading
                    } else if is_bullet(line) {
                        Kind::Bullet
                    } else if is_numbered(line) {
                        Kind::Numbered
                    } else {
                        Kind::Text
                    }
                }
            };
            kinds.push(kind);
        }
        kinds
    }

    // -- bold pairing ---------------------------------------------------------

    /// Char offsets where a bold span opens: left-to-right shortest-match
    /// pairing of `**`/`__`, at least one non-whitespace content char,
    /// both delimiters consumed, unmatched openers stepped over.
    fn bold_opens(chars: &[char]) -> Vec<usize> {
        let mut opens = Vec::new();
        let mut i = 0usize;
        while i + 1 < chars.len() {
            let d = chars[i];
            if (d != '*' && d != '_') || chars[i + 1] != d {
                i += 1;
                continue;
            }
            let mut matched = None;
            let mut j = i + 3; // at least one content char
            while j + 2 <= chars.len() {
                if chars[j] == d
                    && chars[j + 1] == d
                    && chars[i + 2..j].iter().any(|c| !c.is_whitespace())
                {
                    matched = Some(j);
                    break;
                }
                j += 1;
            }
            match matched {
                Some(j) => {
                    opens.push(i);
                    i = j + 2;
                }
                None => i += 2,
            }
        }
        opens
    }

    /// Full feature counts: one pass per rule family, positions included.
    pub fn features(text: &str) -> FeatureCounts {
        let lines = physical_lines(text);
        let kinds = classify(&lines);
        let mut counts = FeatureCounts::default();

        for (idx, kind) in kinds.iter().enumerate() {
            let line_no = idx + 1;
            match kind {
                Kind::Heading => {
                    counts.headings += 1;
                    counts.positions.push((FeatureKind::Heading, line_no));
                }
                Kind::Bullet => {
                    counts.bullet_items += 1;
                    counts.positions.push((FeatureKind::BulletItem, line_no));
                }
                Kind::Numbered => {
                    counts.numbered_items += 1;
                    counts.positions.push((FeatureKind::NumberedItem, line_no));
                }
                Kind::Break => {
                    counts.thematic_breaks += 1;
                    counts.positions.push((FeatureKind::ThematicBreak, line_no));
                }
                Kind::FenceOpen => {
                    counts.fenced_code_blocks += 1;
                    counts
                        .positions
                        .push((FeatureKind::FencedCodeBlock, line_no));
                }
                _ => {}
            }
        }

        // Bold spans live inside blocks of consecutive prose-bearing lines
        // (text, headings, list items) joined with single newlines.
        let mut block_lines: Vec<usize> = Vec::new();
        let flush = |block: &mut Vec<usize>, counts: &mut FeatureCounts| {
            if block.is_empty() {
                return;
            }
            let mut joined: Vec<char> = Vec::new();
            let mut starts = Vec::with_capacity(block.len());
            for (i, &idx) in block.iter().enumerate() {
                if i > 0 {
                    joined.push('\n');
                }
                starts.push(joined.len());
                joined.extend(lines[idx].chars());
            }
            for open in bold_opens(&joined) {
                let owner = starts
                    .iter()
                    .rposition(|&s| s <= open)
                    .expect("offset inside block");
                counts.bold_spans += 1;
                counts
                    .positions
                    .push((FeatureKind::BoldSpan, block[owner] + 1));
            }
            block.clear();
        };
        for (idx, kind) in kinds.iter().enumerate() {
            if matches!(kind, Kind::Text | Kind::Heading | Kind::Bullet | Kind::Numbered) {
                block_lines.push(idx);
            } else {
                flush(&mut block_lines, &mut counts);
            }
        }
        flush(&mut block_lines, &mut counts);

        counts.positions.sort_by_key(|&(kind, line)| (line, kind));
        counts
    }
}

// ===========================================================================
// Pseudo-random document soup for the equivalence criteria.
// ===========================================================================

mod gen {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const WORDS: &[&str] = &[
        "the", "quick", "study", "of", "dashes", "wide", "margin", "page",
        "2014", "note", "w\u{f6}rd", "\u{3b4}elta", "x9", "e.g.",
    ];
    const DASH_ATOMS: &[&str] = &[
        "\u{2014}", "\u{2013}", "--", "---", "----", "-", "a\u{2014}b",
        "2010\u{2013}2015", "x--y", "-x", "\u{2014}\u{2013}", "\u{2011}",
        "\u{2603}",
    ];

    fn prose(rng: &mut ChaCha8Rng) -> String {
        let n = rng.gen_range(0..12);
        let mut parts = Vec::with_capacity(n);
        for _ in 0..n {
            let atom = if rng.gen_bool(0.3) {
                DASH_ATOMS[rng.gen_range(0..DASH_ATOMS.len())]
            } else {
                WORDS[rng.gen_range(0..WORDS.len())]
            };
            parts.push(atom.to_owned());
        }
        let sep = if rng.gen_bool(0.1) { "\t" } else { " " };
        parts.join(sep)
    }

    fn heading(rng: &mut ChaCha8Rng) -> String {
        let hashes = "#".repeat(rng.gen_range(1..=8));
        let tail = ["", " title", " **bold** title", "\ttab-tail", "x"]
            [rng.gen_range(0..5)];
        format!("{hashes}{tail}")
    }

    fn list_item(rng: &mut ChaCha8Rng) -> String {
        let marker = ['-', '*', '+'][rng.gen_range(0..3)];
        let tail = [" item", " **b** item", "item", " "][rng.gen_range(0..4)];
        format!("{marker}{tail}")
    }

    fn numbered(rng: &mut ChaCha8Rng) -> String {
        let digits: String = (0..rng.gen_range(1..=11))
            .map(|_| char::from(b'0' + rng.gen_range(0..10) as u8))
            .collect();
        let punct = ['.', ')'][rng.gen_range(0..2)];
        let tail = [" item", "item", ""][rng.gen_range(0..3)];
        format!("{digits}{punct}{tail}")
    }

    fn thematic(rng: &mut ChaCha8Rng) -> String {
        let marker = ['-', '*', '_'][rng.gen_range(0..3)];
        let count = rng.gen_range(2..=6);
        let sep = if rng.gen_bool(0.4) { " " } else { "" };
        vec![marker.to_string(); count].join(sep)
    }

    fn fence(rng: &mut ChaCha8Rng) -> String {
        let marker = if rng.gen_bool(0.5) { '`' } else { '~' };
        let run: String = vec![marker; rng.gen_range(2..=5)].into_iter().collect();
        let info = ["", "rust", "a`b", " x "][rng.gen_range(0..4)];
        format!("{run}{info}")
    }

    fn bold(rng: &mut ChaCha8Rng) -> String {
        [
            "**a**",
            "__ab__",
            "**a",
            "**   **",
            "****",
            "**a __b__ c**",
            "a ** b ** c",
            "__a**b**__",
            "**a** and **b**",
        ][rng.gen_range(0..9)]
        .to_owned()
    }

    /// One document of mixed prose, dashes, and markdown-shaped lines,
    /// with random indentation, CR line endings, and trailing-newline
    /// presence.
    pub fn doc(seed: u64) -> String {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n_lines = rng.gen_range(3..50);
        let mut out = String::new();
        for i in 0..n_lines {
            let line = match rng.gen_range(0..20) {
                0 | 1 => heading(&mut rng),
                2 | 3 => list_item(&mut rng),
                4 => numbered(&mut rng),
                5 | 6 => thematic(&mut rng),
                7 | 8 => fence(&mut rng),
                9 | 10 => bold(&mut rng),
                11 => String::new(),
                _ => prose(&mut rng),
            };
            let indent = " ".repeat(rng.gen_range(0..6));
            out.push_str(&indent);
            out.push_str(&line);
            if i + 1 < n_lines || rng.gen_bool(0.7) {
                if rng.gen_bool(0.08) {
                    out.push('\r');
                }
                out.push('\n');
            }
        }
        out
    }
}

// ===========================================================================
// Criterion 1: counting oracle equivalence.
// ===========================================================================

#[test]
fn criterion_1_counting_oracle_equivalence() {
    check(1, "counting oracle equivalence", || {
        let started = Instant::now();
        let docs: Vec<String> = (0..150).map(gen::doc).collect();
        ensure(docs.len() >= 100, "need at least 100 documents")?;

        for (i, doc) in docs.iter().enumerate() {
            let counted = count_dashes(doc);
            let (em, en, double, long) = oracle::dashes(doc);
            ensure(
                (counted.em, counted.en, counted.double_hyphen, counted.long_hyphen_run)
                    == (em, en, double, long),
                format!(
                    "dash mismatch on doc {i}: impl {counted:?}, oracle \
                     ({em}, {en}, {double}, {long})\n{doc:?}"
                ),
            )?;
            ensure(
                count_words(doc) == oracle::words(doc),
                format!("word-count mismatch on doc {i}: {doc:?}"),
            )?;
            let detected = detect_features(doc);
            let expected = oracle::features(doc);
            ensure(
                detected == expected,
                format!(
                    "feature mismatch on doc {i}:\nimpl   {detected:?}\noracle \
                     {expected:?}\n{doc:?}"
                ),
            )?;
        }

        let elapsed = started.elapsed();
        ensure(
            elapsed.as_secs_f64() < 5.0,
            format!("equivalence run took {elapsed:?}, limit 5s"),
        )
    });
}

// ===========================================================================
// Criterion 2: quoted reduction percentages.
// ===========================================================================

#[test]
fn criterion_2_reduction_percentages() {
    check(2, "reduction percentages", || {
        let quoted = [
            ("GPT-4.1", 10.62, 9.10, 14),
            ("DeepSeek V3", 6.95, 5.41, 22),
            ("Claude Opus 4.6", 9.09, 0.19, 98),
        ];
        for (model, unconstrained, constrained, expected) in quoted {
            let r = reduction(unconstrained, constrained);
            let Reduction::Fraction(f) = r else {
                return Err(format!("{model}: reduction lost its baseline"));
            };
            let rounded = (f * 100.0).round() as i64;
            ensure(
                rounded == expected,
                format!("{model}: got {rounded}%, expected {expected}%"),
            )?;
            ensure(
                r.render_percent() == format!("{expected}%"),
                format!("{model}: rendered '{}', expected '{expected}%'", r.render_percent()),
            )?;
        }
        Ok(())
    });
}

// ===========================================================================
// Criterion 3: table reconstruction through the binary.
// ===========================================================================

/// model, provider, then em/md rates per condition scaled by 100 (exact
/// occurrence counts per 100,000 words).
const PROFILE_ROWS: &[(&str, &str, u64, u64, u64, u64)] = &[
    ("GPT-4.1", "OpenAI", 1062, 910, 627, 0),
    ("Claude Opus 4.6", "Anthropic", 909, 19, 96, 0),
    ("Claude Sonnet 4", "Anthropic", 829, 131, 615, 0),
    ("Claude Haiku 3.5", "Anthropic", 751, 18, 536, 90),
    ("DeepSeek V3", "DeepSeek", 695, 541, 147, 0),
    ("GPT-4o Mini", "OpenAI", 416, 423, 603, 0),
    ("GPT-4o", "OpenAI", 412, 268, 538, 0),
    ("Gemini 2.5 Pro", "Google", 353, 0, 85, 0),
    ("GPT-5.4", "OpenAI", 143, 29, 0, 0),
    ("Gemini 2.5 Flash", "Google", 128, 148, 106, 0),
    ("Llama 3.1 8B Inst.", "Meta", 0, 0, 191, 0),
    ("Llama 3.3 70B Inst.", "Meta", 0, 0, 0, 0),
];

/// A text with exactly `words` countable words, `em` em dashes, and `md`
/// markdown features (bullet items), and nothing else that counts.
fn cell_text(words: u64, em: u64, md: u64) -> String {
    assert!(md < words && em <= words - md);
    let mut out = String::new();
    for _ in 0..md {
        out.push_str("- w\n");
    }
    if md > 0 {
        out.push('\n');
    }
    let prose_words = words - md;
    let mut tokens = 0u64;
    for i in 0..prose_words {
        out.push('w');
        tokens += 1;
        if i < em {
            out.push_str(" \u{2014}");
            tokens += 1;
        }
        out.push(if tokens % 20 == 0 { '\n' } else { ' ' });
    }
    out.push('\n');
    out
}

#[test]
fn criterion_3_table_reconstruction_via_report() {
    check(3, "table reconstruction via report", || {
        const WORDS_PER_CELL: u64 = 100_000;
        let dir = TempDir::new().map_err(|e| e.to_string())?;
        let mut samples = Vec::new();
        for &(model, provider, em_u, em_c, md_u, md_c) in PROFILE_ROWS {
            let cells = [
                (SampleCondition::Unconstrained, em_u, md_u, "A"),
                (SampleCondition::MdSuppressed, em_c, md_c, "B"),
            ];
            for (condition, em, md, label) in cells {
                let text = cell_text(WORDS_PER_CELL, em, md);
                ensure(
                    count_words(&text) == WORDS_PER_CELL
                        && count_dashes(&text).em == em
                        && u64::from(detect_features(&text).headline_total()) == md,
                    format!("fixture construction broke for {model} {label}"),
                )?;
                samples.push(TextSample {
                    id: format!("{model}/{label}"),
                    text,
                    source: Source::Model,
                    provider: Some(provider.to_owned()),
                    model_name: Some(model.to_owned()),
                    condition,
                    topic: Some("fixture".to_owned()),
                    target_words: None,
                    collected_at: Utc::now(),
                    generation_params: None,
                });
            }
        }
        let store = dir.path().join("fixture.jsonl");
        let set = SampleSet::new(samples, store.display().to_string())
            .map_err(|e| e.to_string())?;
        write_samples(&store, &set).map_err(|e| e.to_string())?;

        let out = Command::new(env!("CARGO_BIN_EXE_prosemark"))
            .args([
                "report",
                "--store",
                store.to_str().unwrap(),
                "--shape",
                "table1",
                "--format",
                "csv",
            ])
            .output()
            .map_err(|e| e.to_string())?;
        ensure(
            out.status.success(),
            format!("report failed: {}", String::from_utf8_lossy(&out.stderr)),
        )?;
        let body = String::from_utf8_lossy(&out.stdout).into_owned();

        let mut lines = body.lines();
        let header: Vec<&str> = lines.next().ok_or("empty report")?.split(',').collect();
        let col = |name: &str| -> Result<usize, String> {
            header
                .iter()
                .position(|h| *h == name)
                .ok_or_else(|| format!("column '{name}' missing from {header:?}"))
        };
        let (name_col, em_u_col, em_c_col, md_u_col, md_c_col) = (
            col("model_name")?,
            col("em_unconstrained")?,
            col("em_constrained")?,
            col("md_unconstrained")?,
            col("md_constrained")?,
        );
        let mut rendered: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for line in lines {
            let cells: Vec<String> = line.split(',').map(str::to_owned).collect();
            rendered.insert(cells[name_col].clone(), cells);
        }
        ensure(
            rendered.len() == PROFILE_ROWS.len(),
            format!("expected {} rows, rendered {}", PROFILE_ROWS.len(), rendered.len()),
        )?;

        let mut cells_checked = 0usize;
        for &(model, _, em_u, em_c, md_u, md_c) in PROFILE_ROWS {
            let row = rendered
                .get(model)
                .ok_or_else(|| format!("row for {model} missing"))?;
            let expect = [
                (em_u_col, em_u, "em unconstrained"),
                (em_c_col, em_c, "em constrained"),
                (md_u_col, md_u, "md unconstrained"),
                (md_c_col, md_c, "md constrained"),
            ];
            for (idx, hundredths, what) in expect {
                let want = format!("{:.2}", hundredths as f64 / 100.0);
                ensure(
                    row[idx] == want,
                    format!("{model} {what}: rendered '{}', expected '{want}'", row[idx]),
                )?;
                cells_checked += 1;
            }
        }
        ensure(
            cells_checked == 48,
            format!("checked {cells_checked} cells, expected 48"),
        )
    });
}

// ===========================================================================
// Criterion 4: attribution identity, ties, and perturbation stability.
// ===========================================================================

#[test]
fn criterion_4_attribution_identity_and_stability() {
    check(4, "attribution identity and stability", || {
        let profiles = builtin_profiles();
        let queries: Vec<_> = profiles
            .iter()
            .filter(|p| p.provider != "human")
            .cloned()
            .collect();
        ensure(queries.len() == 12, format!("expected 12 model rows, got {}", queries.len()))?;

        // Identity: each row queried on its dash columns comes back at
        // distance exactly 0, alone unless another row is identical there.
        let mut identities = 0usize;
        let mut llama_tie_seen = false;
        for row in &queries {
            let query = QueryMetrics {
                em_unconstrained: row.em_unconstrained,
                em_constrained: row.em_constrained,
                md_unconstrained: None,
                md_constrained: None,
            };
            let result = attribute(&query, &profiles, None).map_err(|e| e.to_string())?;
            ensure(
                result.ranked[0].distance == 0.0,
                format!("{}: top distance {}", row.model_name, result.ranked[0].distance),
            )?;
            let zero_group: Vec<&str> = result
                .ranked
                .iter()
                .take_while(|r| r.distance == 0.0)
                .map(|r| r.model_name.as_str())
                .collect();
            ensure(
                zero_group.contains(&row.model_name.as_str()),
                format!("{}: not in its own zero-distance group {zero_group:?}", row.model_name),
            )?;
            identities += 1;
            if row.model_name.starts_with("Llama") {
                let tied = result.ties.iter().any(|group| {
                    group.iter().any(|m| m == "Llama 3.1 8B Inst.")
                        && group.iter().any(|m| m == "Llama 3.3 70B Inst.")
                });
                ensure(
                    tied,
                    format!("{}: Llama rows not reported as a tie", row.model_name),
                )?;
                llama_tie_seen = true;
            } else {
                ensure(
                    zero_group.len() == 1,
                    format!("{}: unexpected zero-distance companions {zero_group:?}", row.model_name),
                )?;
            }
        }
        ensure(identities == 12, format!("identity held for {identities}/12"))?;
        ensure(llama_tie_seen, "no Llama query exercised the tie path")?;

        // Brute-force geometry over the dash columns: population spread,
        // z-scaled points, nearest-neighbor margins.
        let complete: Vec<&prosemark_core::attribution::ModelProfile> = profiles
            .iter()
            .filter(|p| {
                p.em_unconstrained.is_some()
                    && p.em_constrained.is_some()
                    && p.md_unconstrained.is_some()
                    && p.md_constrained.is_some()
            })
            .collect();
        let spread = |values: Vec<f64>| -> f64 {
            let n = values.len() as f64;
            let mean = values.iter().sum::<f64>() / n;
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
        };
        let sd_u = spread(complete.iter().map(|p| p.em_unconstrained.unwrap()).collect());
        let sd_c = spread(complete.iter().map(|p| p.em_constrained.unwrap()).collect());
        let point = |em_u: f64, em_c: f64| (em_u / sd_u, em_c / sd_c);
        let dist = |a: (f64, f64), b: (f64, f64)| {
            (((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)) / 2.0).sqrt()
        };

        let candidates: Vec<((f64, f64), &str)> = profiles
            .iter()
            .filter(|p| p.em_unconstrained.is_some() && p.em_constrained.is_some())
            .map(|p| (point(p.em_unconstrained.unwrap(), p.em_constrained.unwrap()), p.model_name.as_str()))
            .collect();

        let mut stability_checked = 0usize;
        for row in &queries {
            let (em_u, em_c) = (row.em_unconstrained.unwrap(), row.em_constrained.unwrap());
            let own = point(em_u, em_c);
            let margin = candidates
                .iter()
                .filter(|(_, name)| *name != row.model_name)
                .map(|(p, _)| dist(own, *p))
                .fold(f64::INFINITY, f64::min);
            for scale in [1.05, 0.95] {
                let perturbed = point(em_u * scale, em_c * scale);
                let displacement = dist(own, perturbed);
                if margin <= displacement {
                    continue; // ambiguous by construction; stability not claimed
                }
                let query = QueryMetrics {
                    em_unconstrained: Some(em_u * scale),
                    em_constrained: Some(em_c * scale),
                    md_unconstrained: None,
                    md_constrained: None,
                };
                let result = attribute(&query, &profiles, None).map_err(|e| e.to_string())?;
                ensure(
                    result.ranked[0].model_name == row.model_name,
                    format!(
                        "{} at x{scale}: top-1 became {} (margin {margin:.4}, moved {displacement:.4})",
                        row.model_name, result.ranked[0].model_name
                    ),
                )?;
                stability_checked += 1;
            }
        }
        ensure(
            stability_checked >= 20,
            format!("only {stability_checked} stability checks ran; expected both directions for all non-tied rows"),
        )
    });
}

// ===========================================================================
// Criterion 5: mock pipeline round-trip.
// ===========================================================================

fn mock_plan(store: &Path, conditions: Vec<Condition>, samples: u32) -> RunPlan {
    RunPlan {
        models: vec![ModelSpec {
            provider: "mock".to_owned(),
            model_name: "mock-model".to_owned(),
        }],
        topics: vec!["the measurement of habits".to_owned()],
        conditions,
        target_words: 1000,
        samples_per_cell: samples,
        max_tokens: 2048,
        concurrency: 2,
        store_path: store.display().to_string(),
        requests_per_minute: None,
    }
}

#[test]
fn criterion_5_mock_pipeline_round_trip() {
    check(5, "mock pipeline round-trip", || {
        let started = Instant::now();
        let dir = TempDir::new().map_err(|e| e.to_string())?;

        for target in [0.0, 1.0, 5.0, 10.0] {
            let store = dir.path().join(format!("em-{target}.jsonl"));
            let plan = mock_plan(&store, vec![Condition::Unconstrained], 5);
            let client = MockClient::new(target, 4.0, 11);
            let mut clients: ClientMap = BTreeMap::new();
            clients.insert("mock".to_owned(), &client);
            let outcome = execute(&plan, &clients, &ExecuteOptions::immediate())
                .map_err(|e| e.to_string())?;
            ensure(outcome.failed.is_empty(), format!("cells failed at target {target}"))?;
            let summary = aggregate(&outcome.collected, "mock-model", Condition::Unconstrained)
                .map_err(|e| e.to_string())?;
            ensure(
                summary.n_samples == 5 && summary.total_words == 5000,
                format!(
                    "target {target}: pooled {} samples, {} words",
                    summary.n_samples, summary.total_words
                ),
            )?;
            ensure(
                summary.em_per_1k == target,
                format!("target {target}: pooled em rate {}", summary.em_per_1k),
            )?;
        }

        // Suppressed conditions: B carries no markdown, C carries no em.
        let store_b = dir.path().join("condition-b.jsonl");
        let plan_b = mock_plan(&store_b, vec![Condition::MdSuppressed], 5);
        let client = MockClient::new(5.0, 4.0, 11);
        let mut clients: ClientMap = BTreeMap::new();
        clients.insert("mock".to_owned(), &client);
        let outcome = execute(&plan_b, &clients, &ExecuteOptions::immediate())
            .map_err(|e| e.to_string())?;
        let summary = aggregate(&outcome.collected, "mock-model", Condition::MdSuppressed)
            .map_err(|e| e.to_string())?;
        ensure(
            summary.md_per_1k == 0.0,
            format!("condition B markdown rate {}", summary.md_per_1k),
        )?;

        let store_c = dir.path().join("condition-c.jsonl");
        let plan_c = mock_plan(&store_c, vec![Condition::EmSuppressed], 5);
        let outcome = execute(&plan_c, &clients, &ExecuteOptions::immediate())
            .map_err(|e| e.to_string())?;
        let summary = aggregate(&outcome.collected, "mock-model", Condition::EmSuppressed)
            .map_err(|e| e.to_string())?;
        ensure(
            summary.em_per_1k == 0.0,
            format!("condition C em rate {}", summary.em_per_1k),
        )?;

        let elapsed = started.elapsed();
        ensure(
            elapsed.as_secs_f64() < 10.0,
            format!("round-trip took {elapsed:?}, limit 10s"),
        )
    });
}

// ===========================================================================
// Criterion 6: human baseline formula and shipped constants.
// ===========================================================================

#[test]
fn criterion_6_human_baseline() {
    check(6, "human baseline formula and constants", || {
        // Eight 500-word essays with em counts 0,1,2,2,3,4,5,8:
        //   per-essay rates      0, 2, 4, 4, 6, 8, 10, 16 per 1k
        //   pooled mean          1000 * 25 / 4000 = 6.25
        //   median               (4 + 6) / 2     = 5.0
        //   range                [0, 16]
        let em_counts = [0u64, 1, 2, 2, 3, 4, 5, 8];
        let essays: Vec<TextSample> = em_counts
            .iter()
            .enumerate()
            .map(|(i, &em)| TextSample::human(format!("essay-{i}"), cell_text(500, em, 0)))
            .collect();
        let set = SampleSet::new(essays, "synthetic 8-essay fixture")
            .map_err(|e| e.to_string())?;
        let stats = human_baseline_stats(&set).map_err(|e| e.to_string())?;

        let close = |got: f64, want: f64, what: &str| {
            ensure(
                (got - want).abs() <= 1e-9,
                format!("{what}: got {got}, hand computation {want}"),
            )
        };
        close(stats.weighted_mean_per_1k, 6.25, "pooled mean")?;
        close(stats.median_per_1k, 5.0, "median")?;
        close(stats.min_per_1k, 0.0, "minimum")?;
        close(stats.max_per_1k, 16.0, "maximum")?;
        ensure(stats.essays == 8, format!("essay count {}", stats.essays))?;
        ensure(stats.total_words == 4000, format!("total words {}", stats.total_words))?;

        let r = HUMAN_BASELINE_REFERENCE;
        ensure(
            r.weighted_mean_per_1k == 3.23
                && r.median_per_1k == 3.83
                && r.min_per_1k == 0.33
                && r.max_per_1k == 17.12
                && r.essays == 8
                && r.total_words == 57_232,
            format!("shipped constants drifted: {r:?}"),
        )
    });
}

// ===========================================================================
// Criterion 7: dash-context reconciliation.
// ===========================================================================

#[test]
fn criterion_7_dash_context_reconciliation() {
    check(7, "dash-context reconciliation", || {
        let frontmatter_fixture = "---\ntitle: note\n---\nAn aside\u{2014}set off by itself.\n";
        let mut docs: Vec<String> = (0..150).map(gen::doc).collect();
        docs.push(frontmatter_fixture.to_owned());

        for (i, doc) in docs.iter().enumerate() {
            let summary = summarize(&scan(doc));
            let counted = count_dashes(doc);
            let per_kind = |kind: DashKind| {
                summary
                    .by_kind
                    .get(&kind)
                    .map_or(0, |split| split.structural + split.inline)
            };
            let pairs = [
                (DashKind::Em, counted.em),
                (DashKind::En, counted.en),
                (DashKind::DoubleHyphen, counted.double_hyphen),
                (DashKind::LongHyphenRun, counted.long_hyphen_run),
            ];
            for (kind, expected) in pairs {
                ensure(
                    per_kind(kind) == expected,
                    format!(
                        "doc {i}: {kind} context total {} but dash count {expected}\n{doc:?}",
                        per_kind(kind)
                    ),
                )?;
            }
            let occurrence_total: u64 = pairs.iter().map(|(k, _)| per_kind(*k)).sum();
            ensure(
                summary.structural + summary.inline == occurrence_total,
                format!("doc {i}: structural/inline split loses occurrences"),
            )?;
        }

        let summary = summarize(&scan(frontmatter_fixture));
        ensure(
            summary.structural == 2 && summary.inline == 1,
            format!(
                "frontmatter fixture split {}:{}",
                summary.structural, summary.inline
            ),
        )?;
        ensure(
            summary.structural_fraction == Some(2.0 / 3.0),
            format!("frontmatter fixture fraction {:?}", summary.structural_fraction),
        )
    });
}

// ===========================================================================
// Criterion 8: harness resumability.
// ===========================================================================

/// Counts calls through to an inner client.
struct Counting<'a> {
    inner: &'a dyn ProviderClient,
    calls: AtomicUsize,
}

impl ProviderClient for Counting<'_> {
    fn generate(
        &self,
        prompt: &str,
        params: &GenerationParams,
    ) -> Result<Generation, GenerateError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.generate(prompt, params)
    }
}

/// Succeeds for the first `budget` calls, then fails fatally — the shape
/// of a run cut off partway through.
struct FailAfter {
    inner: MockClient,
    budget: Mutex<u32>,
}

impl ProviderClient for FailAfter {
    fn generate(
        &self,
        prompt: &str,
        params: &GenerationParams,
    ) -> Result<Generation, GenerateError> {
        let mut budget = self.budget.lock().unwrap();
        if *budget == 0 {
            return Err(GenerateError::Fatal("interrupted".to_owned()));
        }
        *budget -= 1;
        drop(budget);
        self.inner.generate(prompt, params)
    }
}

#[test]
fn criterion_8_harness_resumability() {
    check(8, "harness resumability", || {
        let dir = TempDir::new().map_err(|e| e.to_string())?;
        let store = dir.path().join("interrupted.jsonl");
        // 1 model x 2 topics x 2 conditions x 2 samples = 8 cells, run
        // serially so the cut lands deterministically after k cells.
        let plan = RunPlan {
            models: vec![ModelSpec {
                provider: "mock".to_owned(),
                model_name: "mock-model".to_owned(),
            }],
            topics: vec!["topic one".to_owned(), "topic two".to_owned()],
            conditions: vec![Condition::Unconstrained, Condition::MdSuppressed],
            target_words: 120,
            samples_per_cell: 2,
            max_tokens: 2048,
            concurrency: 1,
            store_path: store.display().to_string(),
            requests_per_minute: None,
        };
        let (n, k) = (8u32, 3u32);

        // First run: interrupted after k successes.
        let interrupted = FailAfter {
            inner: MockClient::new(6.0, 2.0, 23),
            budget: Mutex::new(k),
        };
        let mut clients: ClientMap = BTreeMap::new();
        clients.insert("mock".to_owned(), &interrupted);
        let first = execute(&plan, &clients, &ExecuteOptions::immediate())
            .map_err(|e| e.to_string())?;
        ensure(
            first.completed_cells == k as usize,
            format!("interrupted run completed {}", first.completed_cells),
        )?;
        ensure(
            first.failed.len() == (n - k) as usize,
            format!("interrupted run failed {}", first.failed.len()),
        )?;

        // Resume: exactly the n - k missing cells are issued.
        let healthy = MockClient::new(6.0, 2.0, 23);
        let counting = Counting {
            inner: &healthy,
            calls: AtomicUsize::new(0),
        };
        let mut clients: ClientMap = BTreeMap::new();
        clients.insert("mock".to_owned(), &counting);
        let resumed = execute(&plan, &clients, &ExecuteOptions::immediate())
            .map_err(|e| e.to_string())?;
        let issued = counting.calls.load(Ordering::SeqCst) as u32;
        ensure(
            issued == n - k,
            format!("resume issued {issued} calls, expected {}", n - k),
        )?;
        ensure(
            resumed.completed_cells == (n - k) as usize
                && resumed.skipped_cells == k as usize
                && resumed.failed.is_empty(),
            format!(
                "resume completed {} / skipped {} / failed {}",
                resumed.completed_cells,
                resumed.skipped_cells,
                resumed.failed.len()
            ),
        )?;

        // An uninterrupted run of the same plan produces the same store,
        // timestamps aside.
        let reference_store = dir.path().join("reference.jsonl");
        let reference_plan = RunPlan {
            store_path: reference_store.display().to_string(),
            ..plan.clone()
        };
        let mut clients: ClientMap = BTreeMap::new();
        clients.insert("mock".to_owned(), &healthy);
        let reference = execute(&reference_plan, &clients, &ExecuteOptions::immediate())
            .map_err(|e| e.to_string())?;
        ensure(
            reference.completed_cells == n as usize,
            format!("reference run completed {}", reference.completed_cells),
        )?;

        let canonical = |path: &Path| -> Result<Vec<serde_json::Value>, String> {
            let mut rows: Vec<serde_json::Value> = std::fs::read_to_string(path)
                .map_err(|e| e.to_string())?
                .lines()
                .map(|l| {
                    let mut v: serde_json::Value =
                        serde_json::from_str(l).map_err(|e| e.to_string())?;
                    v.as_object_mut()
                        .ok_or("store line is not an object")?
                        .remove("collected_at");
                    Ok(v)
                })
                .collect::<Result<_, String>>()?;
            rows.sort_by_key(|v| v["id"].as_str().map(str::to_owned));
            Ok(rows)
        };
        let resumed_rows = canonical(&store)?;
        let reference_rows = canonical(&reference_store)?;
        ensure(
            resumed_rows.len() == n as usize,
            format!("resumed store holds {} samples", resumed_rows.len()),
        )?;
        ensure(
            resumed_rows == reference_rows,
            "resumed store differs from the uninterrupted reference",
        )
    });
}
