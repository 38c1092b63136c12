//! Parsers for intermediate stage outputs: the object list produced by object
//! perception and the issue lists produced by the analysis stages.

use std::collections::HashSet;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectedObject {
    pub name: String,
    pub description: String,
}

/// Dedup key: case-folded with whitespace runs collapsed.
pub fn normalize_name(name: &str) -> String {
    name.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

fn object_line() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        // optional bullet or number, then `#Name#`, `**Name**` or `Name`, then a colon
        Regex::new(
            r"^\s*(?:[-*•]\s+|\d+[.)]\s+)?(?:#\s*([^#\n]+?)\s*#|\*\*\s*([^*\n]+?)\s*\*\*|([^:#*\n]+?))\s*:\s*(.*)$",
        )
        .unwrap()
    })
}

/// Parse `#Name#: Description.` lines. Also accepts `Name: Description`,
/// bold names and bullets. Lines without a colon continue the previous
/// object's description. Duplicate names keep the first description.
pub fn parse_object_list(text: &str) -> Vec<DetectedObject> {
    let mut out: Vec<DetectedObject> = Vec::new();
    let mut seen = HashSet::new();
    let mut current: Option<usize> = None;
    for line in text.lines() {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            current = None;
            continue;
        }
        if let Some(c) = object_line().captures(line) {
            let name = c
                .get(1)
                .or_else(|| c.get(2))
                .or_else(|| c.get(3))
                .map(|m| m.as_str().trim())
                .unwrap_or("");
            let description = c.get(4).map_or("", |m| m.as_str()).trim();
            // long "names" are prose that happens to contain a colon
            if !name.is_empty() && name.chars().count() <= 60 && name.split_whitespace().count() <= 6 {
                let key = normalize_name(name);
                if seen.insert(key) {
                    out.push(DetectedObject {
                        name: name.split_whitespace().collect::<Vec<_>>().join(" "),
                        description: description.to_string(),
                    });
                    current = Some(out.len() - 1);
                } else {
                    current = None;
                }
                continue;
            }
        }
        if let Some(i) = current {
            let d = &mut out[i].description;
            if !d.is_empty() {
                d.push(' ');
            }
            d.push_str(trimmed);
        }
    }
    out
}

/// Union of several runs, in first-seen order.
pub fn union_objects(runs: &[Vec<DetectedObject>]) -> Vec<DetectedObject> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for run in runs {
        for obj in run {
            if seen.insert(normalize_name(&obj.name)) {
                out.push(obj.clone());
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Attribute,
    Relation,
    Integrated,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateAnomaly {
    pub origin: Origin,
    pub subject_object: String,
    pub text: String,
}

fn block_start() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^\s*(?:\*\*)?@?\d+[.)]").unwrap())
}

fn issue_label() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?i)(observed issue|observed phenomenon|phenomenon|abnormal phenomenon name|objects involved|object name)\s*(?:\*\*)?\s*:")
            .unwrap()
    })
}

fn lead_label() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?i)^\s*(?:[-*•]\s+)?(?:\*\*)?\s*(abnormal phenomenon name|objects involved|object name|relationship)\s*(?:\*\*)?\s*:")
            .unwrap()
    })
}

/// Split an issue list into candidate blocks. Blocks start at numbered lines
/// (`1.`, `@1.`) or, in unnumbered output, at a leading label such as
/// `Abnormal Phenomenon Name:`. Only blocks that carry an issue label count;
/// prose such as "No issues found." yields nothing.
pub fn parse_candidates(text: &str, origin: Origin, subject: &str) -> Vec<CandidateAnomaly> {
    let numbered = text.lines().any(|l| block_start().is_match(l));
    let mut blocks: Vec<Vec<&str>> = Vec::new();
    for line in text.lines() {
        let starts = if numbered {
            block_start().is_match(line)
        } else {
            lead_label().is_match(line)
        };
        if starts {
            blocks.push(vec![line]);
        } else if let Some(b) = blocks.last_mut() {
            b.push(line);
        }
    }
    if blocks.is_empty() && issue_label().is_match(text) {
        blocks.push(text.lines().collect());
    }
    blocks
        .into_iter()
        .map(|b| b.join("\n").trim().to_string())
        .filter(|b| issue_label().is_match(b))
        .map(|text| CandidateAnomaly {
            origin,
            subject_object: subject.to_string(),
            text,
        })
        .collect()
}
