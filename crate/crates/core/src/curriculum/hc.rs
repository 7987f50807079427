//! Handcrafted curricula read from JSON.
//!
//! The file uses the curriculum manifest layout with the cost fields left
//! out, so a manifest written by the search also loads here:
//!
//! ```json
//! { "tasks": [ { "lf_params": { "width": 6, "height": 6, "...": "..." } } ] }
//! ```

use std::path::Path;

use serde::Deserialize;

use super::CurriculumError;
use crate::params::{categories_seen, feasible, goal_categories, Fidelity, TaskParams};

#[derive(Debug, Deserialize)]
struct HcEntry {
    lf_params: TaskParams,
}

#[derive(Debug, Deserialize)]
struct HcFile {
    tasks: Vec<HcEntry>,
}

/// Parses a curriculum file body and validates it against `lf_target`.
pub fn parse_hc(text: &str, lf_target: &TaskParams) -> Result<Vec<TaskParams>, CurriculumError> {
    let file: HcFile = serde_json::from_str(text).map_err(|e| CurriculumError::Validation {
        entry: 0,
        rule: format!("malformed curriculum: {e}"),
    })?;
    let tasks: Vec<TaskParams> = file.tasks.into_iter().map(|e| e.lf_params).collect();
    validate_hc(&tasks, lf_target)?;
    Ok(tasks)
}

pub fn load_hc(path: &Path, lf_target: &TaskParams) -> Result<Vec<TaskParams>, CurriculumError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CurriculumError::Io(format!("{}: {e}", path.display())))?;
    parse_hc(&text, lf_target)
}

/// Every entry must be a feasible grid-world task, the last must equal the
/// target, and together they must cover every goal category.
pub fn validate_hc(tasks: &[TaskParams], lf_target: &TaskParams) -> Result<(), CurriculumError> {
    let Some(last) = tasks.last() else {
        return Err(CurriculumError::Validation {
            entry: 0,
            rule: "curriculum is empty".into(),
        });
    };
    for (i, t) in tasks.iter().enumerate() {
        if !feasible(t, Fidelity::Low) {
            return Err(CurriculumError::Validation {
                entry: i,
                rule: format!("task with goal {} is infeasible", t.goal),
            });
        }
    }
    if last != lf_target {
        return Err(CurriculumError::Validation {
            entry: tasks.len() - 1,
            rule: "last entry must equal the target task".into(),
        });
    }
    let seen = categories_seen(tasks);
    if let Some(missing) = goal_categories().into_iter().find(|c| !seen.contains(c)) {
        return Err(CurriculumError::Validation {
            entry: tasks.len() - 1,
            rule: format!("no entry has a {missing} goal"),
        });
    }
    Ok(())
}
