//! Aggregate statistics over evaluation records and difficulty annotations.

use std::collections::BTreeMap;

use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};

use super::ResultSet;
use crate::blueprint::Domain;
use crate::difficulty::{Dimension, DifficultyVector, DimensionAccuracy, Level};
use crate::error::{ForgeError, Result};
use crate::pct::{mean, render_pct, round1, Ratio};

fn cell_text(r: &Ratio) -> String {
    r.render().unwrap_or_else(|| "-".into())
}

fn dec_text(d: &Option<Decimal>) -> String {
    d.map(render_pct).unwrap_or_else(|| "-".into())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelAccuracy {
    pub model_id: String,
    pub levels: [Ratio; 3],
    pub all: Ratio,
    pub domains: BTreeMap<Domain, Ratio>,
}

/// Unweighted mean over models of the one-decimal percentages shown in
/// the model rows.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AverageRow {
    pub levels: [Option<Decimal>; 3],
    pub all: Option<Decimal>,
    pub domains: BTreeMap<Domain, Option<Decimal>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportTables {
    pub models: Vec<ModelAccuracy>,
    pub average: AverageRow,
}

impl ReportTables {
    pub fn model(&self, id: &str) -> Option<&ModelAccuracy> {
        self.models.iter().find(|m| m.model_id == id)
    }

    pub fn to_markdown(&self) -> String {
        let mut out = String::from("| Model | L1 | L2 | L3 | ALL |");
        for d in Domain::ALL {
            out.push_str(&format!(" {d:?} |"));
        }
        out.push_str(&format!("\n|---|{}\n", "---|".repeat(4 + Domain::ALL.len())));
        for m in &self.models {
            out.push_str(&format!("| {} |", m.model_id));
            for r in m.levels.iter().chain(std::iter::once(&m.all)) {
                out.push_str(&format!(" {} |", cell_text(r)));
            }
            for d in Domain::ALL {
                out.push_str(&format!(" {} |", m.domains.get(&d).map(cell_text).unwrap_or_else(|| "-".into())));
            }
            out.push('\n');
        }
        out.push_str("| **Average** |");
        for v in self.average.levels.iter().chain(std::iter::once(&self.average.all)) {
            out.push_str(&format!(" {} |", dec_text(v)));
        }
        for d in Domain::ALL {
            out.push_str(&format!(" {} |", dec_text(self.average.domains.get(&d).unwrap_or(&None))));
        }
        out.push('\n');
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("model,L1,L2,L3,ALL");
        for d in Domain::ALL {
            out.push_str(&format!(",{d:?}"));
        }
        out.push('\n');
        let blank = |s: String| if s == "-" { String::new() } else { s };
        for m in &self.models {
            out.push_str(&csv_field(&m.model_id));
            for r in m.levels.iter().chain(std::iter::once(&m.all)) {
                out.push_str(&format!(",{}", blank(cell_text(r))));
            }
            for d in Domain::ALL {
                out.push_str(&format!(",{}", blank(m.domains.get(&d).map(cell_text).unwrap_or_else(|| "-".into()))));
            }
            out.push('\n');
        }
        out.push_str("Average");
        for v in self.average.levels.iter().chain(std::iter::once(&self.average.all)) {
            out.push_str(&format!(",{}", blank(dec_text(v))));
        }
        for d in Domain::ALL {
            out.push_str(&format!(",{}", blank(dec_text(self.average.domains.get(&d).unwrap_or(&None)))));
        }
        out.push('\n');
        out
    }
}

pub(crate) fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn ensure_counted(results: &ResultSet) -> Result<()> {
    results.check()?;
    if results.counted().next().is_none() {
        return Err(ForgeError::Empty("no evaluation records to aggregate"));
    }
    Ok(())
}

/// Accuracy by level and by domain per model, plus the average row.
/// Infrastructure failures are excluded from denominators.
pub fn aggregate(results: &ResultSet) -> Result<ReportTables> {
    ensure_counted(results)?;
    let mut models = Vec::new();
    for id in results.models() {
        let mut m = ModelAccuracy {
            model_id: id.clone(),
            levels: [Ratio::default(); 3],
            all: Ratio::default(),
            domains: BTreeMap::new(),
        };
        for (r, t) in results.counted().filter(|(r, _)| r.model_id == id) {
            m.levels[t.level.index()].add(r.correct);
            m.all.add(r.correct);
            m.domains.entry(t.domain).or_default().add(r.correct);
        }
        if m.all.total > 0 {
            models.push(m);
        }
    }
    let avg = |f: &dyn Fn(&ModelAccuracy) -> Option<Decimal>| -> Option<Decimal> {
        let values: Vec<Decimal> = models.iter().filter_map(f).map(round1).collect();
        mean(&values)
    };
    let average = AverageRow {
        levels: [0, 1, 2].map(|i| avg(&|m| m.levels[i].percent())),
        all: avg(&|m| m.all.percent()),
        domains: Domain::ALL
            .into_iter()
            .map(|d| (d, avg(&|m| m.domains.get(&d).and_then(Ratio::percent))))
            .collect(),
    };
    Ok(ReportTables { models, average })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DimensionRow {
    pub model_id: String,
    pub cells: BTreeMap<String, Ratio>,
}

impl DimensionRow {
    fn key(dim: Dimension, level: Level) -> String {
        format!("{}:{:?}", dim.key(), level)
    }

    pub fn cell(&self, dim: Dimension, level: Level) -> Option<Ratio> {
        self.cells.get(&Self::key(dim, level)).copied().filter(|r| r.total > 0)
    }

    /// Percentages of the defined cells, for accuracy-drop analysis.
    pub fn accuracy(&self) -> DimensionAccuracy {
        let mut out = DimensionAccuracy::new();
        for dim in Dimension::ALL {
            for level in Level::ALL {
                if let Some(p) = self.cell(dim, level).and_then(|r| r.percent()) {
                    out.insert((dim, level), p);
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DimensionTable {
    pub rows: Vec<DimensionRow>,
}

impl DimensionTable {
    pub fn row(&self, id: &str) -> Option<&DimensionRow> {
        self.rows.iter().find(|r| r.model_id == id)
    }

    pub fn to_markdown(&self) -> String {
        let mut out = String::from("| Model |");
        for dim in Dimension::ALL {
            for level in Level::ALL {
                out.push_str(&format!(" {} {:?} |", dim.label(), level));
            }
        }
        out.push_str(&format!("\n|---|{}\n", "---|".repeat(21)));
        for r in &self.rows {
            out.push_str(&format!("| {} |", r.model_id));
            for dim in Dimension::ALL {
                for level in Level::ALL {
                    out.push_str(&format!(" {} |", r.cell(dim, level).map(|c| cell_text(&c)).unwrap_or_else(|| "-".into())));
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("model");
        for dim in Dimension::ALL {
            for level in Level::ALL {
                out.push_str(&format!(",{}_{:?}", dim.key(), level));
            }
        }
        out.push('\n');
        for r in &self.rows {
            out.push_str(&csv_field(&r.model_id));
            for dim in Dimension::ALL {
                for level in Level::ALL {
                    out.push_str(&format!(",{}", r.cell(dim, level).and_then(|c| c.render()).unwrap_or_default()));
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Accuracy per model at each level of each dimension. A record counts in
/// the cell of its task's level on every dimension.
pub fn per_dimension_table(results: &ResultSet) -> Result<DimensionTable> {
    ensure_counted(results)?;
    let mut rows = Vec::new();
    for id in results.models() {
        let mut cells: BTreeMap<String, Ratio> = BTreeMap::new();
        for (r, t) in results.counted().filter(|(r, _)| r.model_id == id) {
            for dim in Dimension::ALL {
                cells.entry(DimensionRow::key(dim, t.difficulty.level(dim))).or_default().add(r.correct);
            }
        }
        if !cells.is_empty() {
            rows.push(DimensionRow { model_id: id, cells });
        }
    }
    Ok(DimensionTable { rows })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuntimeCell {
    pub tasks: u64,
    pub turns: Decimal,
    pub acts: Decimal,
    /// Thousands of prompt tokens.
    pub prompt_k: Decimal,
    /// Thousands of completion tokens.
    pub completion_k: Decimal,
}

impl RuntimeCell {
    pub fn render(&self) -> [String; 4] {
        [
            render_pct(self.turns),
            render_pct(self.acts),
            format!("{}K", self.prompt_k.round_dp_with_strategy(0, rust_decimal::RoundingStrategy::MidpointAwayFromZero)),
            format!("{}K", render_pct(self.completion_k)),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuntimeRow {
    pub model_id: String,
    /// False when any record of the model lacked step-level logging.
    pub step_logging: bool,
    pub levels: [Option<RuntimeCell>; 3],
}

impl RuntimeRow {
    pub fn label(&self) -> String {
        if self.step_logging {
            self.model_id.clone()
        } else {
            format!("{}†", self.model_id)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuntimeTable {
    pub rows: Vec<RuntimeRow>,
}

impl RuntimeTable {
    pub fn row(&self, id: &str) -> Option<&RuntimeRow> {
        self.rows.iter().find(|r| r.model_id == id)
    }

    pub fn to_markdown(&self) -> String {
        let mut out = String::from("| Model |");
        for l in Level::ALL {
            out.push_str(&format!(" {l:?} Turns | {l:?} Acts | {l:?} Prompt | {l:?} Compl |"));
        }
        out.push_str(&format!("\n|---|{}\n", "---|".repeat(12)));
        for r in &self.rows {
            out.push_str(&format!("| {} |", r.label()));
            for c in &r.levels {
                let cells = c.map(|c| c.render()).unwrap_or_else(|| std::array::from_fn(|_| "-".to_string()));
                for s in cells {
                    out.push_str(&format!(" {s} |"));
                }
            }
            out.push('\n');
        }
        if self.rows.iter().any(|r| !r.step_logging) {
            out.push_str("\n† no step-level logging; excluded from efficiency comparisons.\n");
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("model,step_logging");
        for l in Level::ALL {
            out.push_str(&format!(",{l:?}_turns,{l:?}_acts,{l:?}_prompt_k,{l:?}_completion_k"));
        }
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!("{},{}", csv_field(&r.model_id), r.step_logging));
            for c in &r.levels {
                match c {
                    Some(c) => out.push_str(&format!(
                        ",{},{},{},{}",
                        render_pct(c.turns),
                        render_pct(c.acts),
                        render_pct(c.prompt_k),
                        render_pct(c.completion_k)
                    )),
                    None => out.push_str(",,,,"),
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Mean turns, acts and token counts per model and level.
pub fn runtime_report(results: &ResultSet) -> Result<RuntimeTable> {
    results.check()?;
    let thousand = Decimal::from(1000);
    let mut rows = Vec::new();
    for id in results.models() {
        let mut sums = [(0u64, 0u64, 0u64, 0u64, 0u64); 3];
        let mut step_logging = true;
        for (r, t) in results.counted().filter(|(r, _)| r.model_id == id) {
            step_logging &= r.step_logging;
            let s = &mut sums[t.level.index()];
            s.0 += 1;
            s.1 += u64::from(r.turns);
            s.2 += u64::from(r.acts);
            s.3 += r.prompt_tokens;
            s.4 += r.completion_tokens;
        }
        let levels = sums.map(|(n, turns, acts, p, c)| {
            (n > 0).then(|| {
                let tasks = n;
                let n = Decimal::from(n);
                RuntimeCell {
                    tasks,
                    turns: Decimal::from(turns) / n,
                    acts: Decimal::from(acts) / n,
                    prompt_k: Decimal::from(p) / n / thousand,
                    completion_k: Decimal::from(c) / n / thousand,
                }
            })
        });
        rows.push(RuntimeRow {
            model_id: id,
            step_logging,
            levels,
        });
    }
    Ok(RuntimeTable { rows })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelSolvability {
    pub solved: Ratio,
    /// Sum over tasks of the number of models that solved each.
    pub solver_total: u64,
}

impl LevelSolvability {
    /// Mean number of models solving a task of this level.
    pub fn mean_solvers(&self) -> Option<Decimal> {
        (self.solved.total > 0).then(|| Decimal::from(self.solver_total) / Decimal::from(self.solved.total))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolvabilityReport {
    pub models: usize,
    pub levels: [LevelSolvability; 3],
    pub overall: Ratio,
    pub domains: BTreeMap<Domain, Ratio>,
    /// Models that answered each task correctly.
    pub solver_counts: BTreeMap<String, u32>,
}

impl SolvabilityReport {
    pub fn unsolved(&self, level: Level) -> u64 {
        let s = &self.levels[level.index()].solved;
        s.total - s.hits
    }

    pub fn to_markdown(&self) -> String {
        let mut out = format!("Models: {}\n\n| Level | Solved | Rate | Mean solvers |\n|---|---|---|---|\n", self.models);
        for l in Level::ALL {
            let s = &self.levels[l.index()];
            out.push_str(&format!(
                "| {l:?} | {}/{} | {} | {} |\n",
                s.solved.hits,
                s.solved.total,
                cell_text(&s.solved),
                dec_text(&s.mean_solvers())
            ));
        }
        out.push_str(&format!(
            "| Overall | {}/{} | {} | - |\n",
            self.overall.hits,
            self.overall.total,
            cell_text(&self.overall)
        ));
        out
    }
}

/// A task is solved when at least one model answered it correctly. Every
/// task in the index counts, including tasks no model attempted.
pub fn solvability(results: &ResultSet) -> Result<SolvabilityReport> {
    results.check()?;
    let models = results.models();
    if models.is_empty() {
        return Err(ForgeError::Empty("solvability needs at least one model"));
    }
    let mut solvers: BTreeMap<&str, std::collections::BTreeSet<&str>> =
        results.tasks.keys().map(|k| (k.as_str(), Default::default())).collect();
    for (r, _) in results.counted().filter(|(r, _)| r.correct) {
        solvers.get_mut(r.task_id.as_str()).expect("checked").insert(r.model_id.as_str());
    }
    let mut levels: [LevelSolvability; 3] = std::array::from_fn(|_| LevelSolvability {
        solved: Ratio::default(),
        solver_total: 0,
    });
    let mut overall = Ratio::default();
    let mut domains: BTreeMap<Domain, Ratio> = BTreeMap::new();
    let mut solver_counts = BTreeMap::new();
    for (task, info) in &results.tasks {
        let n = solvers[task.as_str()].len() as u32;
        let l = &mut levels[info.level.index()];
        l.solved.add(n > 0);
        l.solver_total += u64::from(n);
        overall.add(n > 0);
        domains.entry(info.domain).or_default().add(n > 0);
        solver_counts.insert(task.clone(), n);
    }
    Ok(SolvabilityReport {
        models: models.len(),
        levels,
        overall,
        domains,
        solver_counts,
    })
}

/// Fractional ranks, ties sharing their average rank (1-based).
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Pearson correlation; `None` when either side has zero variance.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpearmanMatrix {
    /// `None` where a dimension has zero variance.
    pub rho: [[Option<f64>; 7]; 7],
    pub mean_abs_off_diagonal: Option<f64>,
    pub per_dimension_mean_abs: [Option<f64>; 7],
}

impl SpearmanMatrix {
    pub fn get(&self, a: Dimension, b: Dimension) -> Option<f64> {
        self.rho[a.index()][b.index()]
    }

    pub fn to_markdown(&self) -> String {
        let mut out = String::from("| |");
        for d in Dimension::ALL {
            out.push_str(&format!(" {} |", d.label()));
        }
        out.push_str(&format!("\n|---|{}\n", "---|".repeat(7)));
        for a in Dimension::ALL {
            out.push_str(&format!("| {} |", a.label()));
            for b in Dimension::ALL {
                match self.get(a, b) {
                    Some(v) => out.push_str(&format!(" {v:.3} |")),
                    None => out.push_str(" undefined |"),
                }
            }
            out.push('\n');
        }
        if let Some(m) = self.mean_abs_off_diagonal {
            out.push_str(&format!("\nMean off-diagonal |rho|: {m:.3}\n"));
        }
        out
    }
}

/// Pairwise Spearman correlation of the seven dimension levels.
pub fn spearman_matrix(annotations: &[DifficultyVector]) -> Result<SpearmanMatrix> {
    if annotations.len() < 3 {
        return Err(ForgeError::Empty("spearman_matrix needs at least three annotations"));
    }
    let ranks: Vec<Vec<f64>> = Dimension::ALL
        .iter()
        .map(|&d| average_ranks(&annotations.iter().map(|v| f64::from(v.level(d).value())).collect::<Vec<_>>()))
        .collect();
    let mut rho = [[None; 7]; 7];
    for i in 0..7 {
        for j in i..7 {
            let r = pearson(&ranks[i], &ranks[j]).map(|r| if i == j { 1.0 } else { r });
            rho[i][j] = r;
            rho[j][i] = r;
        }
    }
    let mut off = Vec::new();
    let per_dimension_mean_abs = std::array::from_fn(|i| {
        let vals: Vec<f64> = (0..7).filter(|&j| j != i).filter_map(|j| rho[i][j]).map(f64::abs).collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    });
    for (i, row) in rho.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            if i < j {
                if let Some(v) = v {
                    off.push(v.abs());
                }
            }
        }
    }
    let mean_abs_off_diagonal = (!off.is_empty()).then(|| off.iter().sum::<f64>() / off.len() as f64);
    Ok(SpearmanMatrix {
        rho,
        mean_abs_off_diagonal,
        per_dimension_mean_abs,
    })
}
