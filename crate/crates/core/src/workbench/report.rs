//! Report files rendered from a manifest and evaluation records.

use std::path::{Path, PathBuf};

use super::BenchmarkManifest;
use crate::error::{ForgeError, Result};
use crate::harness::{aggregate, per_dimension_table, runtime_report, solvability, spearman_matrix, EvaluationRecord, ResultSet};

/// Files written by [`report`], in write order.
pub const REPORT_FILES: [&str; 8] = [
    "accuracy.md",
    "accuracy.csv",
    "runtime.md",
    "runtime.csv",
    "dimensions.md",
    "dimensions.csv",
    "solvability.md",
    "spearman.md",
];

/// Renders the accuracy, runtime, per-dimension, solvability and
/// correlation tables into `out_dir`. Output bytes depend only on the
/// inputs.
pub fn report(manifest: &BenchmarkManifest, results: &[EvaluationRecord], out_dir: &Path) -> Result<Vec<PathBuf>> {
    if results.is_empty() {
        return Err(ForgeError::Empty("evaluation results"));
    }
    let rs = ResultSet::new(results.to_vec(), manifest.index())?;
    let tables = aggregate(&rs)?;
    let runtime = runtime_report(&rs)?;
    let dims = per_dimension_table(&rs)?;
    let solv = solvability(&rs)?;
    let annotations: Vec<_> = manifest.tasks.iter().map(|t| t.difficulty.clone()).collect();
    let spearman = match spearman_matrix(&annotations) {
        Ok(m) => m.to_markdown(),
        Err(ForgeError::Empty(_)) => "Too few annotated tasks for a correlation matrix.\n".to_string(),
        Err(e) => return Err(e),
    };
    let mut infra = String::new();
    let failures: Vec<&EvaluationRecord> = rs.infra_failures().collect();
    if !failures.is_empty() {
        infra.push_str("\nExcluded after infrastructure failures:\n\n");
        for r in failures {
            infra.push_str(&format!("- {} / {}: {}\n", r.model_id, r.task_id, r.infra_error.as_deref().unwrap_or("")));
        }
    }
    let contents = [
        format!("# Accuracy by level\n\n{}{infra}", tables.to_markdown()),
        tables.to_csv(),
        format!("# Turns and tokens\n\n{}", runtime.to_markdown()),
        runtime.to_csv(),
        format!("# Accuracy by dimension level\n\n{}", dims.to_markdown()),
        dims.to_csv(),
        format!("# Solvability\n\n{}", solv.to_markdown()),
        format!("# Dimension correlation\n\n{spearman}"),
    ];
    std::fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();
    for (name, body) in REPORT_FILES.iter().zip(contents) {
        let path = out_dir.join(name);
        std::fs::write(&path, body)?;
        written.push(path);
    }
    Ok(written)
}
