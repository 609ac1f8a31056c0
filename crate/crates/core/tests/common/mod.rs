//! Published benchmark numbers and record builders shared by test targets.
#![allow(dead_code)]

use std::collections::BTreeMap;

use forge_core::blueprint::Domain;
use forge_core::difficulty::{DifficultyVector, Level};
use forge_core::harness::{EvaluationRecord, Modality, ResultSet, TaskInfo};
use forge_core::validation::{FailureMode, ValidatedTask};

/// Passing tasks out of 60 per (domain, level).
pub const PASS_COUNTS: [(Domain, [u64; 3]); 7] = [
    (Domain::D1, [39, 41, 35]),
    (Domain::D2, [39, 48, 38]),
    (Domain::D3, [43, 42, 46]),
    (Domain::D4, [53, 58, 49]),
    (Domain::D5, [41, 50, 40]),
    (Domain::D6, [42, 51, 48]),
    (Domain::D7, [44, 50, 37]),
];

/// Per-model accuracy by level and overall.
pub const LEVEL_ACCURACY: [(&str, [f64; 3], f64); 14] = [
    ("Gemini-3-Pro", [86.4, 82.1, 58.0], 75.9),
    ("Gemini-3-Flash", [82.4, 73.5, 44.0], 67.1),
    ("Gemini-2.5-Flash-Lite", [58.5, 33.5, 12.6], 35.0),
    ("Claude-4.5-Sonnet", [85.7, 74.7, 48.1], 69.9),
    ("GPT-5.2", [80.1, 65.9, 31.1], 59.5),
    ("GPT-5-Mini", [82.4, 68.2, 28.7], 60.4),
    ("GPT-5-Nano", [61.8, 25.9, 6.1], 31.3),
    ("Kimi-K2.5", [84.4, 73.8, 39.2], 66.4),
    ("Qwen3-VL-235B", [73.4, 50.3, 20.1], 48.3),
    ("Qwen3-Omni-30B", [26.9, 9.1, 2.4], 12.7),
    ("DeepSeek-V3.2", [77.1, 47.4, 21.5], 48.8),
    ("GLM-4.7", [76.4, 49.4, 24.2], 50.2),
    ("Gemini-3-Pro (T)", [80.1, 61.8, 34.8], 59.2),
    ("Gemini-3-Flash (T)", [78.7, 50.9, 23.2], 51.2),
];

pub const AVERAGE_ROW: ([f64; 3], f64) = ([73.9, 54.8, 28.1], 52.6);

/// Solved tasks, total tasks and mean solving models per level.
pub const SOLVABILITY: [(u64, u64, f64); 3] = [(286, 301, 10.4), (317, 340, 7.9), (224, 293, 4.3)];

pub fn vector_for(level: Level) -> DifficultyVector {
    let values = match level {
        Level::L1 => [1, 1, 1, 1, 1, 1, 1],
        Level::L2 => [2, 2, 1, 1, 1, 1, 1],
        Level::L3 => [3, 3, 2, 2, 1, 1, 1],
    };
    DifficultyVector::from_values(values).unwrap()
}

pub fn validated_tasks(counts: &[(Domain, [u64; 3])], per_cell: u64) -> Vec<ValidatedTask> {
    let mut out = Vec::new();
    for (d, row) in counts {
        for (li, level) in Level::ALL.iter().enumerate() {
            for i in 0..per_cell {
                let solvable = i < row[li];
                out.push(ValidatedTask {
                    task_id: format!("{d:?}-{level:?}-{i}"),
                    domain: *d,
                    level: *level,
                    solvable,
                    failure_mode: (!solvable).then_some(FailureMode::StepBudgetExceeded),
                    verdict_digest: String::new(),
                });
            }
        }
    }
    out
}

/// The benchmark index: the solvable tasks of the pass-count fixture.
pub fn benchmark_index() -> BTreeMap<String, TaskInfo> {
    validated_tasks(&PASS_COUNTS, 60)
        .into_iter()
        .filter(|t| t.solvable)
        .map(|t| {
            let info = TaskInfo {
                domain: t.domain,
                level: t.level,
                difficulty: vector_for(t.level),
            };
            (t.task_id, info)
        })
        .collect()
}

pub fn record(model: &str, task: &str, correct: bool) -> EvaluationRecord {
    EvaluationRecord {
        model_id: model.into(),
        task_id: task.into(),
        modality: Modality::ScreenshotDom,
        correct,
        turns: 1,
        acts: 1,
        prompt_tokens: 0,
        completion_tokens: 0,
        step_logging: true,
        submitted_answer: BTreeMap::new(),
        elapsed: 0.0,
        infra_error: None,
    }
}

/// Half-up rounding of `pct% of n` to a whole count.
pub fn count_for(pct: f64, n: u64) -> u64 {
    ((pct * n as f64 / 100.0) + 0.5).floor() as u64
}

fn tasks_by_level(index: &BTreeMap<String, TaskInfo>) -> [Vec<String>; 3] {
    let mut out: [Vec<String>; 3] = Default::default();
    for (id, info) in index {
        out[info.level.index()].push(id.clone());
    }
    out
}

/// Records whose per-level correct counts reproduce each model's level
/// accuracy on the benchmark index.
pub fn level_accuracy_results() -> ResultSet {
    let index = benchmark_index();
    let by_level = tasks_by_level(&index);
    let mut records = Vec::new();
    for (model, levels, _) in LEVEL_ACCURACY {
        for (li, tasks) in by_level.iter().enumerate() {
            let hits = count_for(levels[li], tasks.len() as u64) as usize;
            for (i, t) in tasks.iter().enumerate() {
                records.push(record(model, t, i < hits));
            }
        }
    }
    ResultSet::new(records, index).unwrap()
}

/// Per-task solver bitmaps over 14 models matching the solved counts and
/// mean solver counts per level.
pub fn solvability_results() -> ResultSet {
    let index = benchmark_index();
    let by_level = tasks_by_level(&index);
    let models: Vec<&str> = LEVEL_ACCURACY.iter().map(|m| m.0).collect();
    let mut records = Vec::new();
    for (li, tasks) in by_level.iter().enumerate() {
        let (solved, total, mean) = SOLVABILITY[li];
        assert_eq!(tasks.len() as u64, total);
        let solver_total = (mean * total as f64).round() as u64;
        let base = solver_total / solved;
        let extra = solver_total % solved;
        for (i, t) in tasks.iter().enumerate() {
            let k = if (i as u64) < solved { base + u64::from((i as u64) < extra) } else { 0 };
            for (m, model) in models.iter().enumerate() {
                records.push(record(model, t, (m as u64) < k));
            }
        }
    }
    ResultSet::new(records, index).unwrap()
}
