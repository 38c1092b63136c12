//! Parsing and emission of the numbered structured-anomaly text format.
//!
//! # Input grammar
//!
//! A document is a sequence of blocks. A block starts on a line whose first
//! token (after optional indentation and an optional `-`/`*` bullet) is either
//! `@<n>.` or `<n>.`; the plain `<n>.` form only opens a block when it is
//! followed by a field label or nothing, so numbered sub-lists inside a field
//! stay part of that field. Text before the first block is ignored.
//!
//! Inside a block every line that starts with a field label opens that field:
//!
//! ```text
//! @1. **Name**: Suspended chair without support
//! - **Observed Phenomenon**: A wooden chair is floating ...
//! - **Reasoning**: Gravity requires contact or suspension ...
//! - **Severity Score**: 10/100 (extremely unnatural)
//! ```
//!
//! Labels are matched case-insensitively, with or without `**` bold markers
//! (the colon may sit inside or outside the markers) and with or without a
//! leading bullet. Lines that carry no label continue the current field and
//! are joined with `\n`. The synonym table is fixed:
//!
//! | field      | accepted labels                                              |
//! |------------|--------------------------------------------------------------|
//! | name       | `Name`, `Abnormal Phenomenon Name`, `Anomaly Name`           |
//! | phenomenon | `Phenomenon`, `Observed Phenomenon`, `Observed Issue`, `Observed` |
//! | reasoning  | `Reasoning`, `Explanation`                                   |
//! | severity   | `Severity Score`, `Severity`                                 |
//!
//! Severity values accept `N`, `N.`, `N/100` and `N/100 (text)`; `N` may be
//! fractional. A repeated label inside one block is ignored (first wins).
//!
//! When a document contains no numbered block at all, brace-delimited items of
//! the form `{Name: ..., Observed: ..., Reasoning: ..., Severity: ...}` are
//! parsed instead, which covers the second turn of the real/AI question
//! answering format.
//!
//! Blocks that lack a field or carry an unusable severity are reported in
//! [`ParseReport::skipped_blocks`]; parsing as a whole never fails.
//!
//! # Emission format
//!
//! [`format_structured_list`] writes, per record `k` (1-based):
//!
//! ```text
//! @k. **Name**: <name>
//! **Phenomenon**: <phenomenon>
//! **Reasoning**: <reasoning>
//! **Severity Score**: <severity>.
//! ```
//!
//! with one blank line between blocks. Severities print in Rust's shortest
//! round-trip decimal form (`20`, `20.5`).

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{validate_severity, AnomalyRecord, SourceLabel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedBlock {
    pub block_index: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParseReport {
    pub records: Vec<AnomalyRecord>,
    pub skipped_blocks: Vec<SkippedBlock>,
}

impl ParseReport {
    pub fn block_count(&self) -> usize {
        self.records.len() + self.skipped_blocks.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Field {
    Name,
    Phenomenon,
    Reasoning,
    Severity,
}

impl Field {
    fn slot(self) -> usize {
        self as usize
    }

    fn as_str(self) -> &'static str {
        match self {
            Self::Name => "name",
            Self::Phenomenon => "phenomenon",
            Self::Reasoning => "reasoning",
            Self::Severity => "severity",
        }
    }
}

/// Longest labels first so `Observed Phenomenon` wins over `Observed`.
const LABELS: &[(&str, Field)] = &[
    ("abnormal phenomenon name", Field::Name),
    ("observed phenomenon", Field::Phenomenon),
    ("severity score", Field::Severity),
    ("observed issue", Field::Phenomenon),
    ("anomaly name", Field::Name),
    ("explanation", Field::Reasoning),
    ("phenomenon", Field::Phenomenon),
    ("reasoning", Field::Reasoning),
    ("severity", Field::Severity),
    ("observed", Field::Phenomenon),
    ("name", Field::Name),
];

fn strip_bullet(s: &str) -> &str {
    let t = s.trim_start();
    for bullet in ['-', '*', '•'] {
        if let Some(rest) = t.strip_prefix(bullet) {
            if rest.starts_with(char::is_whitespace) {
                return rest.trim_start();
            }
        }
    }
    t
}

fn strip_ci_prefix<'a>(s: &'a str, prefix: &str) -> Option<&'a str> {
    let head = s.get(..prefix.len())?;
    head.eq_ignore_ascii_case(prefix).then(|| &s[prefix.len()..])
}

/// Recognize `[bullet] [**]Label[**] : [**] value` and return the field and
/// the trimmed value.
pub fn match_label(line: &str) -> Option<(Field, &str)> {
    let s = strip_bullet(line);
    let s = s.strip_prefix("**").unwrap_or(s);
    for &(label, field) in LABELS {
        let Some(rest) = strip_ci_prefix(s, label) else {
            continue;
        };
        if rest.starts_with(|c: char| c.is_alphanumeric()) {
            continue;
        }
        let rest = rest.trim_start();
        let rest = rest.strip_prefix("**").unwrap_or(rest).trim_start();
        let Some(rest) = rest.strip_prefix(':') else {
            continue;
        };
        let rest = rest.strip_prefix("**").unwrap_or(rest);
        return Some((field, rest.trim()));
    }
    None
}

/// Recognize a block marker and return the remainder of the line.
fn match_marker(line: &str) -> Option<&str> {
    let s = strip_bullet(line);
    let s = s.strip_prefix("**").unwrap_or(s);
    let (at, s) = match s.strip_prefix('@') {
        Some(rest) => (true, rest),
        None => (false, s),
    };
    let digits = s.bytes().take_while(u8::is_ascii_digit).count();
    if digits == 0 {
        return None;
    }
    let rest = &s[digits..];
    let rest = rest
        .strip_prefix('.')
        .or_else(|| rest.strip_prefix(')'))?;
    let rest = rest.strip_prefix("**").unwrap_or(rest);
    if at {
        return Some(rest.trim());
    }
    if !rest.is_empty() && !rest.starts_with(char::is_whitespace) {
        return None;
    }
    let rest = rest.trim();
    (rest.is_empty() || match_label(rest).is_some()).then_some(rest)
}

fn severity_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?s)^\[?\s*(\d+(?:\.\d+)?)\s*(?:/\s*(\d+(?:\.\d+)?))?(.*)$").unwrap()
    })
}

/// Parse a severity value such as `10`, `20.`, `5/100` or `10/100 (extremely unnatural)`.
pub fn parse_severity(value: &str) -> std::result::Result<f64, String> {
    let value = value.trim();
    let caps = severity_regex()
        .captures(value)
        .ok_or_else(|| format!("invalid severity `{}`", first_line(value)))?;
    let number: f64 = caps[1]
        .parse()
        .map_err(|_| format!("invalid severity `{}`", first_line(value)))?;
    if let Some(denominator) = caps.get(2) {
        let d: f64 = denominator.as_str().parse().unwrap_or(f64::NAN);
        if d != 100.0 {
            return Err(format!("unsupported severity scale /{}", denominator.as_str()));
        }
    }
    let rest = caps[3].trim_start();
    let range_placeholder = rest
        .strip_prefix(['-', '\u{2013}', '\u{2014}'])
        .is_some_and(|r| r.trim_start().starts_with(|c: char| c.is_ascii_digit()));
    if range_placeholder || rest.starts_with(|c: char| c.is_ascii_digit()) {
        return Err(format!("invalid severity `{}`", first_line(value)));
    }
    validate_severity(number).map_err(|e| e.reason)?;
    Ok(number)
}

fn first_line(s: &str) -> &str {
    s.lines().next().unwrap_or("")
}

#[derive(Default)]
struct BlockFields {
    values: [Option<String>; 4],
}

impl BlockFields {
    fn into_record(self) -> std::result::Result<AnomalyRecord, String> {
        let [name, phenomenon, reasoning, severity] = self.values;
        let require = |value: Option<String>, field: Field| match value {
            Some(v) if !v.trim().is_empty() => Ok(v),
            _ => Err(format!("missing {}", field.as_str())),
        };
        let name = require(name, Field::Name)?;
        let phenomenon = require(phenomenon, Field::Phenomenon)?;
        let reasoning = require(reasoning, Field::Reasoning)?;
        let severity = parse_severity(&require(severity, Field::Severity)?)?;
        AnomalyRecord::new(name, phenomenon, reasoning, severity).map_err(|e| e.to_string())
    }
}

fn parse_block(lines: &[&str]) -> std::result::Result<AnomalyRecord, String> {
    let mut fields = BlockFields::default();
    let mut current: Option<Field> = None;
    for line in lines {
        if let Some((field, value)) = match_label(line) {
            let slot = &mut fields.values[field.slot()];
            if slot.is_some() {
                current = None;
            } else {
                *slot = Some(value.to_string());
                current = Some(field);
            }
            continue;
        }
        let text = line.trim();
        if text.is_empty() {
            continue;
        }
        if let Some(field) = current {
            let slot = fields.values[field.slot()].get_or_insert_with(String::new);
            if !slot.is_empty() {
                slot.push('\n');
            }
            slot.push_str(text);
        }
    }
    fields.into_record()
}

fn split_numbered_blocks(text: &str) -> Vec<Vec<&str>> {
    let mut blocks: Vec<Vec<&str>> = Vec::new();
    for line in text.lines() {
        if let Some(rest) = match_marker(line) {
            blocks.push(vec![rest]);
        } else if let Some(block) = blocks.last_mut() {
            block.push(line);
        }
    }
    blocks
}

fn brace_label_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(
            r"(?i)(?:^|[,;\s{])\s*(abnormal phenomenon name|observed phenomenon|severity score|observed issue|anomaly name|explanation|phenomenon|reasoning|severity|observed|name)\s*:",
        )
        .unwrap()
    })
}

fn label_field(label: &str) -> Option<Field> {
    let lower = label.to_ascii_lowercase();
    LABELS
        .iter()
        .find(|(l, _)| *l == lower)
        .map(|&(_, field)| field)
}

fn clean_brace_value(value: &str) -> &str {
    let v = value.trim().trim_end_matches(',').trim();
    let v = v
        .strip_prefix('<')
        .and_then(|x| x.strip_suffix('>'))
        .unwrap_or(v);
    let v = v
        .strip_prefix('"')
        .and_then(|x| x.strip_suffix('"'))
        .unwrap_or(v);
    v.trim()
}

fn parse_brace_item(body: &str) -> std::result::Result<AnomalyRecord, String> {
    let re = brace_label_regex();
    let hits: Vec<_> = re.captures_iter(body).collect();
    let mut fields = BlockFields::default();
    for (i, caps) in hits.iter().enumerate() {
        let label = caps.get(1).expect("label group");
        let end = hits
            .get(i + 1)
            .map(|next| next.get(0).expect("match").start())
            .unwrap_or(body.len());
        let value_start = caps.get(0).expect("match").end();
        let Some(field) = label_field(label.as_str()) else {
            continue;
        };
        let slot = &mut fields.values[field.slot()];
        if slot.is_none() && value_start <= end {
            *slot = Some(clean_brace_value(&body[value_start..end]).to_string());
        }
    }
    fields.into_record()
}

fn brace_items(text: &str) -> Vec<&str> {
    let mut items = Vec::new();
    let mut start = None;
    for (i, c) in text.char_indices() {
        match c {
            '{' => start = Some(i + 1),
            '}' => {
                if let Some(s) = start.take() {
                    items.push(&text[s..i]);
                }
            }
            _ => {}
        }
    }
    items
}

/// Parse every anomaly block in `text`. Never fails; see the module docs for
/// the accepted grammar.
pub fn parse_structured_list(text: &str) -> ParseReport {
    let mut report = ParseReport::default();
    let mut push = |index: usize, outcome: std::result::Result<AnomalyRecord, String>| match outcome
    {
        Ok(record) => report.records.push(record),
        Err(reason) => report.skipped_blocks.push(SkippedBlock {
            block_index: index,
            reason,
        }),
    };

    let blocks = split_numbered_blocks(text);
    if blocks.is_empty() {
        for (i, body) in brace_items(text).into_iter().enumerate() {
            push(i, parse_brace_item(body));
        }
    } else {
        for (i, block) in blocks.iter().enumerate() {
            push(i, parse_block(block));
        }
    }
    report
}

/// Emit records in the canonical numbered form. The inverse of
/// [`parse_structured_list`] on records whose text fields are trimmed and
/// whose continuation lines do not themselves look like labels or markers.
pub fn format_structured_list(records: &[AnomalyRecord]) -> String {
    records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            format!(
                "@{}. **Name**: {}\n**Phenomenon**: {}\n**Reasoning**: {}\n**Severity Score**: {}.\n",
                i + 1,
                r.name,
                r.phenomenon,
                r.reasoning,
                r.severity
            )
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn words(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

const REAL_PHRASES: &[&str] = &[
    "real photograph",
    "real photo",
    "not generated",
    "not ai generated",
    "not an ai",
];
const AI_PHRASES: &[&str] = &[
    "generated by ai",
    "ai generated",
    "generated by artificial intelligence",
];

/// Interpret the first-turn answer to "is this image AI generated?".
///
/// Only the first sentence is considered. A leading `yes`/`no` decides;
/// otherwise explicit phrases ("real photograph", "generated by AI") and then
/// bare yes/no words anywhere in the sentence.
pub fn parse_source_answer(text: &str) -> Result<SourceLabel> {
    let text = text.trim_start();
    let end = text
        .find(['.', '!', '?', '\n'])
        .unwrap_or(text.len());
    let sentence = words(&text[..end]);
    match sentence.first().map(String::as_str) {
        Some("yes") => return Ok(SourceLabel::Ai),
        Some("no") => return Ok(SourceLabel::Real),
        _ => {}
    }
    let joined = format!(" {} ", sentence.join(" "));
    let has = |phrase: &str| joined.contains(&format!(" {phrase} "));
    if REAL_PHRASES.iter().any(|p| has(p)) {
        return Ok(SourceLabel::Real);
    }
    if AI_PHRASES.iter().any(|p| has(p)) {
        return Ok(SourceLabel::Ai);
    }
    match (has("yes"), has("no")) {
        (true, false) => Ok(SourceLabel::Ai),
        (false, true) => Ok(SourceLabel::Real),
        _ => Err(Error::UnparseableSourceAnswer),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const CHAIR: &str = "@1. **Name**: Suspended chair without support\n- **Observed Phenomenon**: A wooden chair is floating approximately 30 cm above the ground without visible support or shadows.\n- **Reasoning**: Gravity requires contact or suspension; absence of legs, shadows, or wires defies physical realism.\n- **Severity Score**: 10/100 (extremely unnatural)";

    #[test]
    fn formatter_example_parses() {
        let report = parse_structured_list(CHAIR);
        assert!(report.skipped_blocks.is_empty(), "{report:?}");
        assert_eq!(report.records.len(), 1);
        let r = &report.records[0];
        assert_eq!(r.name, "Suspended chair without support");
        assert!(r.phenomenon.starts_with("A wooden chair is floating"));
        assert!(r.reasoning.ends_with("defies physical realism."));
        assert_eq!(r.severity, 10.0);
    }

    #[test]
    fn empty_text() {
        let report = parse_structured_list("");
        assert_eq!(report, ParseReport::default());
    }

    #[test]
    fn missing_severity_is_skipped_with_reason() {
        let text = "@1. **Name**: a\n**Phenomenon**: b\n**Reasoning**: c\n";
        let report = parse_structured_list(text);
        assert!(report.records.is_empty());
        assert_eq!(
            report.skipped_blocks,
            vec![SkippedBlock {
                block_index: 0,
                reason: "missing severity".into()
            }]
        );
    }

    #[test]
    fn training_target_example() {
        let text = "@1. **Name**: Woman's shirt fabric rigidity\n**Phenomenon**: The shirt appears overly smooth and rigid.\n**Reasoning**: Soft fabrics conform to the body.\n**Severity Score**: 20.\n\n@2. **Name**: Pillow compression inconsistency\n**Phenomenon**: The pillow shows no deformation.\n**Reasoning**: Pillows compress under pressure.\n**Severity Score**: 25.";
        let report = parse_structured_list(text);
        let severities: Vec<f64> = report.records.iter().map(|r| r.severity).collect();
        assert_eq!(severities, vec![20.0, 25.0]);
        assert_eq!(report.records[1].name, "Pillow compression inconsistency");
    }

    #[test]
    fn plain_numbering_and_label_synonyms() {
        let text = "Here is my analysis.\n\n1. **Abnormal Phenomenon Name**: Streetlight No Power\n   **Observed Issue**: The streetlight is glowing but has no power source or wiring.\n   **Explanation**: A streetlight requires an electrical connection.\n   severity: 40\n";
        let report = parse_structured_list(text);
        assert_eq!(report.records.len(), 1, "{report:?}");
        assert_eq!(report.records[0].name, "Streetlight No Power");
        assert_eq!(report.records[0].severity, 40.0);
    }

    #[test]
    fn bold_colon_inside_and_multiline_fields() {
        let text = "@1. **Name:** Two left hands\n- **Observed Phenomenon**:\n   - One hand emerges from the elbow.\n   - Both share orientation.\n- **Reasoning**:\n   1. Anatomy allows one left hand.\n- **Severity Score**: 5/100 (highly unrealistic)\n";
        let report = parse_structured_list(text);
        assert_eq!(report.records.len(), 1, "{report:?}");
        let r = &report.records[0];
        assert_eq!(r.name, "Two left hands");
        assert_eq!(
            r.phenomenon,
            "- One hand emerges from the elbow.\n- Both share orientation."
        );
        assert_eq!(r.reasoning, "1. Anatomy allows one left hand.");
        assert_eq!(r.severity, 5.0);
    }

    #[test]
    fn severity_forms() {
        assert_eq!(parse_severity("10"), Ok(10.0));
        assert_eq!(parse_severity("20."), Ok(20.0));
        assert_eq!(parse_severity("5/100"), Ok(5.0));
        assert_eq!(parse_severity("10/100 (extremely unnatural)"), Ok(10.0));
        assert_eq!(parse_severity("12.5"), Ok(12.5));
        assert_eq!(parse_severity("[30]"), Ok(30.0));
        assert!(parse_severity("7/10").is_err());
        assert!(parse_severity("high").is_err());
        assert_eq!(
            parse_severity("120"),
            Err("severity out of range [0,100]".to_string())
        );
        assert!(parse_severity("[0–100; 0 = fully unrealistic").is_err());
    }

    #[test]
    fn out_of_range_and_invalid_blocks_do_not_void_others() {
        let text = "@1. **Name**: a\n**Phenomenon**: b\n**Reasoning**: c\n**Severity Score**: 150\n@2. **Name**: d\n**Phenomenon**: e\n**Reasoning**: f\n**Severity Score**: 15\n@3. **Phenomenon**: g\n**Reasoning**: h\n**Severity Score**: 1\n";
        let report = parse_structured_list(text);
        assert_eq!(report.records.len(), 1);
        assert_eq!(report.records[0].name, "d");
        assert_eq!(report.skipped_blocks.len(), 2);
        assert_eq!(report.skipped_blocks[0].block_index, 0);
        assert_eq!(report.skipped_blocks[0].reason, "severity out of range [0,100]");
        assert_eq!(report.skipped_blocks[1].block_index, 2);
        assert_eq!(report.skipped_blocks[1].reason, "missing name");
    }

    #[test]
    fn brace_items_from_second_turn() {
        let text = "[\n {Name: <Melted fork>, Observed: <The fork bends like rubber, drooping>, Reasoning: <Steel is rigid at room temperature>, Severity: <15>},\n {Name: Extra finger, Observed: Six fingers on the left hand, Reasoning: Hands have five fingers, Severity: 5}\n]";
        let report = parse_structured_list(text);
        assert_eq!(report.records.len(), 2, "{report:?}");
        assert_eq!(report.records[0].name, "Melted fork");
        assert_eq!(report.records[0].phenomenon, "The fork bends like rubber, drooping");
        assert_eq!(report.records[0].severity, 15.0);
        assert_eq!(report.records[1].severity, 5.0);
    }

    #[test]
    fn format_two_records() {
        let records = vec![
            AnomalyRecord::new("Woman's shirt fabric rigidity", "Rigid shirt.", "Fabric folds.", 20.0).unwrap(),
            AnomalyRecord::new("Pillow compression inconsistency", "Flat pillow.", "Pillows compress.", 25.0).unwrap(),
        ];
        let text = format_structured_list(&records);
        assert!(text.starts_with("@1. **Name**: Woman's shirt fabric rigidity\n"));
        assert!(text.contains("\n@2. **Name**: Pillow compression inconsistency\n"));
        assert!(text.contains("**Severity Score**: 25.\n"));
        assert_eq!(parse_structured_list(&text).records, records);
        assert_eq!(format_structured_list(&[]), "");
    }

    #[test]
    fn source_answers() {
        assert_eq!(
            parse_source_answer("Yes, this image is generated by AI").unwrap(),
            SourceLabel::Ai
        );
        assert_eq!(
            parse_source_answer("No, this image is a real photograph.").unwrap(),
            SourceLabel::Real
        );
        assert_eq!(parse_source_answer("YES").unwrap(), SourceLabel::Ai);
        assert_eq!(
            parse_source_answer("This image is not generated by AI.").unwrap(),
            SourceLabel::Real
        );
        assert_eq!(
            parse_source_answer("The picture was generated by artificial intelligence.").unwrap(),
            SourceLabel::Ai
        );
        assert!(matches!(
            parse_source_answer("maybe"),
            Err(Error::UnparseableSourceAnswer)
        ));
        // only the first sentence counts
        assert!(parse_source_answer("Hard to say. Yes.").is_err());
        // "know" and "not" are not "no"
        assert!(parse_source_answer("I do not know").is_err());
    }
}
