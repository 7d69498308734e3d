// SPDX-License-Identifier: Apache-2.0

//! Prompt templates with `{{NAME}}` placeholders. Built-in defaults can be
//! overridden file by file from a directory (`intent.txt`, `split.txt`,
//! `points.txt`, `feedback.txt`).

use std::path::Path;

use serde::{Deserialize, Serialize};

pub const INTENT: &str = include_str!("../prompts/intent.txt");
pub const SPLIT: &str = include_str!("../prompts/split.txt");
pub const POINTS: &str = include_str!("../prompts/points.txt");
pub const FEEDBACK: &str = include_str!("../prompts/feedback.txt");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptSet {
    pub intent: String,
    pub split: String,
    pub points: String,
    pub feedback: String,
}

impl Default for PromptSet {
    fn default() -> Self {
        PromptSet {
            intent: INTENT.to_string(),
            split: SPLIT.to_string(),
            points: POINTS.to_string(),
            feedback: FEEDBACK.to_string(),
        }
    }
}

impl PromptSet {
    pub fn from_dir(dir: &Path) -> std::io::Result<PromptSet> {
        let mut set = PromptSet::default();
        for (name, slot) in [
            ("intent.txt", &mut set.intent),
            ("split.txt", &mut set.split),
            ("points.txt", &mut set.points),
            ("feedback.txt", &mut set.feedback),
        ] {
            let path = dir.join(name);
            if path.exists() {
                *slot = std::fs::read_to_string(path)?;
            }
        }
        Ok(set)
    }
}

/// Substitutes every `{{KEY}}` occurrence. Unknown placeholders are left as is.
pub fn render(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = template.to_string();
    for (key, value) in vars {
        out = out.replace(&format!("{{{{{key}}}}}"), value);
    }
    out
}
