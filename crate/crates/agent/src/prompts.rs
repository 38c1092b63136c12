//! Prompt templates for every pipeline stage and their assembly.
//!
//! Templates live in `prompts/*.txt` and use `{placeholder}` slots. Rendering
//! is a single pass over the template, so braces inside substituted model
//! output are never re-expanded.

use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    ObjectPerceiver,
    AttributeStep1,
    AttributeStep2,
    RelationStep1,
    RelationStep2,
    IntegratorStep1,
    IntegratorStep2,
    Formatter,
}

impl Stage {
    pub const ALL: [Stage; 8] = [
        Stage::ObjectPerceiver,
        Stage::AttributeStep1,
        Stage::AttributeStep2,
        Stage::RelationStep1,
        Stage::RelationStep2,
        Stage::IntegratorStep1,
        Stage::IntegratorStep2,
        Stage::Formatter,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::ObjectPerceiver => "object_perceiver",
            Self::AttributeStep1 => "attribute_step1",
            Self::AttributeStep2 => "attribute_step2",
            Self::RelationStep1 => "relation_step1",
            Self::RelationStep2 => "relation_step2",
            Self::IntegratorStep1 => "integrator_step1",
            Self::IntegratorStep2 => "integrator_step2",
            Self::Formatter => "formatter",
        }
    }

    pub fn template(self) -> &'static str {
        match self {
            Self::ObjectPerceiver => include_str!("../prompts/object_perceiver.txt"),
            Self::AttributeStep1 => include_str!("../prompts/attribute_step1.txt"),
            Self::AttributeStep2 => include_str!("../prompts/attribute_step2.txt"),
            Self::RelationStep1 => include_str!("../prompts/relation_step1.txt"),
            Self::RelationStep2 => include_str!("../prompts/relation_step2.txt"),
            Self::IntegratorStep1 => include_str!("../prompts/integrator_step1.txt"),
            Self::IntegratorStep2 => include_str!("../prompts/integrator_step2.txt"),
            Self::Formatter => include_str!("../prompts/formatter.txt"),
        }
    }

    /// Identify the stage a rendered prompt belongs to from its opening text.
    pub fn detect(prompt: &str) -> Option<Stage> {
        let p = prompt.trim_start();
        let opening = |s: Stage| {
            let t = s.template();
            // fixed text up to the first placeholder or line end
            let end = t.find(['{', '\n']).unwrap_or(t.len());
            &t[..end]
        };
        // longer openings first so `**Task**: Analyze **` does not shadow others
        let mut stages = Stage::ALL;
        stages.sort_by_key(|s| std::cmp::Reverse(opening(*s).len()));
        stages.into_iter().find(|s| p.starts_with(opening(*s)))
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Replace `{name}` slots from `vars`. Unknown slots are left untouched.
pub fn render(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        match after.find('}') {
            Some(close) => {
                let key = &after[..close];
                match vars.iter().find(|(k, _)| *k == key) {
                    Some((_, v)) => out.push_str(v),
                    None => {
                        out.push('{');
                        out.push_str(key);
                        out.push('}');
                    }
                }
                rest = &after[close + 1..];
            }
            None => {
                out.push_str(&rest[open..]);
                rest = "";
            }
        }
    }
    out.push_str(rest);
    out
}

/// Hints appended to repeated object-perception runs so each run sees a
/// slightly different prompt.
pub const PERCEIVER_VARIANTS: [&str; 3] = [
    "Scan the image from left to right.",
    "Scan the image from the foreground to the background.",
    "Pay particular attention to small, partially hidden or background objects.",
];

pub fn object_perceiver(run: usize, runs: usize) -> String {
    format!(
        "{}\n(Pass {} of {}: {})\n",
        Stage::ObjectPerceiver.template(),
        run + 1,
        runs,
        PERCEIVER_VARIANTS[run % PERCEIVER_VARIANTS.len()]
    )
}

pub fn attribute_step1(object: &str) -> String {
    render(Stage::AttributeStep1.template(), &[("current_object", object)])
}

pub fn attribute_step2(object: &str, step1_response: &str) -> String {
    render(
        Stage::AttributeStep2.template(),
        &[("current_object", object), ("step1_response", step1_response)],
    )
}

pub fn relation_step1(object: &str, all_objects: &str, attribute_context: &str) -> String {
    render(
        Stage::RelationStep1.template(),
        &[
            ("current_object", object),
            ("all_objects", all_objects),
            ("attribute_context", attribute_context),
        ],
    )
}

pub fn relation_step2(object: &str, all_objects: &str, step1_response: &str) -> String {
    render(
        Stage::RelationStep2.template(),
        &[
            ("current_object", object),
            ("all_objects", all_objects),
            ("step1_response", step1_response),
        ],
    )
}

pub fn integrator_step1(object: &str, all_objects: &str, attribute_response: &str, relation_response: &str) -> String {
    render(
        Stage::IntegratorStep1.template(),
        &[
            ("current_object", object),
            ("all_objects", all_objects),
            ("attribute_response", attribute_response),
            ("relation_response", relation_response),
        ],
    )
}

pub fn integrator_step2(step1_responses: &str) -> String {
    render(Stage::IntegratorStep2.template(), &[("step1_response", step1_responses)])
}

pub fn formatter(step2_response: &str) -> String {
    render(Stage::Formatter.template(), &[("step2_response", step2_response)])
}
