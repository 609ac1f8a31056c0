mod common;

use std::collections::BTreeMap;
use std::path::Path;

use forge_core::blueprint::{parse_blueprint, AnswerType, Domain, ProviderProfile};
use forge_core::bundle::{assemble_bundle, SolutionAction, StubAssetProvider, WebsiteBundle};
use forge_core::difficulty::{accuracy_drop, Dimension, DifficultyVector, Level};
use forge_core::fixtures::wedding;
use forge_core::harness::stats::{average_ranks, pearson};
use forge_core::harness::{
    aggregate, evaluate_task, judge_answer, per_dimension_table, read_results, runtime_report, solvability,
    spearman_matrix, write_results, Agent, AgentTurn, EvalOptions, EvaluationRecord, Modality, ResultSet,
    SolverAgent, TaskInfo,
};
use forge_core::pct::render_pct;
use forge_core::refinement::{default_rules, refine_bundle, NoiseConfig};
use forge_core::validation::{ActionOutcome, Observation, ScriptedSolver, SimBrowser, SimOptions};
use forge_core::ForgeError;
use proptest::prelude::*;
use rust_decimal::Decimal;

use common::*;

fn refined_wedding(dir: &Path) -> WebsiteBundle {
    let plan = parse_blueprint(wedding::REFINED_PLAN).unwrap();
    let mut b = assemble_bundle(
        &plan,
        &ProviderProfile::precision("generator"),
        &wedding::planner(),
        &StubAssetProvider,
        dir,
        "wedding-001",
    )
    .unwrap();
    refine_bundle(&mut b, &default_rules(), &NoiseConfig::default(), None).unwrap();
    b
}

fn scripted_agent(steps: &[SolutionAction]) -> SolverAgent<ScriptedSolver> {
    SolverAgent::new("scripted", ScriptedSolver::new(steps))
}

fn eval(b: &WebsiteBundle, agent: &mut dyn Agent, opts: EvalOptions) -> EvaluationRecord {
    let mut sim = SimBrowser::new(&b.root, SimOptions::default());
    evaluate_task(b, &mut sim, agent, opts)
}

fn with_code(b: &WebsiteBundle, code: &str) -> Vec<SolutionAction> {
    let mut steps = b.solution.steps.clone();
    if let Some(SolutionAction::Terminate { answers }) = steps.last_mut() {
        answers.insert("confirmation_code".into(), code.into());
    }
    steps
}

#[test]
fn scripted_agent_solves_wedding() {
    let dir = tempfile::tempdir().unwrap();
    let b = refined_wedding(dir.path());
    let rec = eval(&b, &mut scripted_agent(&b.solution.steps), EvalOptions::default());
    assert!(rec.correct, "{rec:?}");
    assert!(rec.infra_error.is_none());
    assert!(rec.acts <= 50);
    assert_eq!(rec.turns, rec.acts + 1);
    assert_eq!(rec.submitted_answer["confirmation_code"], "GEG-2026-05841");
}

#[test]
fn deceptive_code_is_wrong() {
    let dir = tempfile::tempdir().unwrap();
    let b = refined_wedding(dir.path());
    let rec = eval(&b, &mut scripted_agent(&with_code(&b, "GEG-2026-05842")), EvalOptions::default());
    assert!(!rec.correct);
    let rec = eval(&b, &mut scripted_agent(&with_code(&b, "geg-2026-05841")), EvalOptions::default());
    assert!(!rec.correct);
}

#[test]
fn zero_budget_takes_no_actions() {
    let dir = tempfile::tempdir().unwrap();
    let b = refined_wedding(dir.path());
    let opts = EvalOptions {
        budget: 0,
        ..EvalOptions::default()
    };
    let rec = eval(&b, &mut scripted_agent(&b.solution.steps), opts);
    assert!(!rec.correct);
    assert_eq!((rec.acts, rec.turns), (0, 0));
}

/// Records whether observations carried screenshots; always observes.
struct Watcher {
    screenshots: Vec<bool>,
}

impl Agent for Watcher {
    fn model_id(&self) -> &str {
        "watcher"
    }

    fn turn(&mut self, obs: &Observation, _last: Option<&ActionOutcome>) -> forge_core::Result<AgentTurn> {
        self.screenshots.push(obs.screenshot.is_some());
        Ok(AgentTurn {
            reasoning: String::new(),
            action: None,
            prompt_tokens: 10,
            completion_tokens: 2,
        })
    }
}

#[test]
fn modality_controls_screenshots_and_turn_cap() {
    let dir = tempfile::tempdir().unwrap();
    let b = refined_wedding(dir.path());
    for (modality, expect) in [(Modality::DomOnly, false), (Modality::ScreenshotDom, true)] {
        let mut w = Watcher { screenshots: Vec::new() };
        let opts = EvalOptions {
            modality,
            budget: 50,
            max_turns: 4,
        };
        let rec = eval(&b, &mut w, opts);
        assert_eq!(w.screenshots, vec![expect; 4]);
        assert_eq!((rec.turns, rec.acts, rec.prompt_tokens, rec.completion_tokens), (4, 0, 40, 8));
        assert!(!rec.correct);
    }
}

#[test]
fn infrastructure_failures_leave_denominators() {
    let dir = tempfile::tempdir().unwrap();
    let b = refined_wedding(dir.path());
    let mut sim = SimBrowser::new(Path::new("/nonexistent-forge-root"), SimOptions::default());
    let bad = evaluate_task(&b, &mut sim, &mut scripted_agent(&b.solution.steps), EvalOptions::default());
    assert!(bad.infra_error.is_some());
    let good = eval(&b, &mut scripted_agent(&b.solution.steps), EvalOptions::default());
    let index = BTreeMap::from([(
        b.task.task_id.clone(),
        TaskInfo {
            domain: b.task.domain,
            level: b.task.overall_level,
            difficulty: b.task.difficulty.clone(),
        },
    )]);
    let rs = ResultSet::new(vec![good, bad], index).unwrap();
    let t = aggregate(&rs).unwrap();
    assert_eq!(t.models[0].all.total, 1);
    assert_eq!(t.models[0].all.render().unwrap(), "100.0");
    assert_eq!(rs.infra_failures().count(), 1);
}

#[test]
fn judge_examples() {
    let m = |pairs: &[(&str, &str)]| -> BTreeMap<String, String> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    };
    let gt = m(&[("total_cost", "11440.00")]);
    assert!(judge_answer(AnswerType::DirectAnswer, &m(&[("total_cost", "$11,440.00")]), &gt, &[]));
    let code = m(&[("c", "GEG-2026-05841")]);
    assert!(judge_answer(AnswerType::OperationCode, &code, &code, &[]));
    assert!(!judge_answer(AnswerType::OperationCode, &m(&[("c", "geg-2026-05841")]), &code, &[]));
    assert!(!judge_answer(AnswerType::DirectAnswer, &m(&[]), &gt, &[]));
}

#[test]
fn table_one_average_row() {
    let rs = level_accuracy_results();
    let t = aggregate(&rs).unwrap();
    assert_eq!(t.models.len(), 14);
    let close = |got: Option<Decimal>, want: f64| {
        let g: f64 = got.unwrap().to_string().parse().unwrap();
        assert!((g - want).abs() <= 0.05, "{g} vs {want}");
    };
    let (levels, all) = AVERAGE_ROW;
    for (i, want) in levels.iter().enumerate() {
        close(t.average.levels[i], *want);
    }
    close(t.average.all, all);
    assert_eq!(render_pct(t.average.all.unwrap()), "52.6");
    for (model, lv, all) in LEVEL_ACCURACY {
        let m = t.model(model).unwrap();
        for (i, want) in lv.iter().enumerate() {
            assert_eq!(m.levels[i].render().unwrap(), format!("{want:.1}"), "{model} L{}", i + 1);
        }
        let got: f64 = m.all.render().unwrap().parse().unwrap();
        assert!((got - all).abs() <= 0.1, "{model}: {got} vs {all}");
    }
    let md = t.to_markdown();
    assert!(md.contains("| **Average** | 73.9 | 54.8 | 28.1 | 52.6 |"), "{md}");
    assert_eq!(t.to_csv().lines().count(), 16);
}

#[test]
fn single_record_is_full_marks() {
    let index = BTreeMap::from([(
        "t".to_string(),
        TaskInfo { domain: Domain::D3, level: Level::L2, difficulty: vector_for(Level::L2) },
    )]);
    let rs = ResultSet::new(vec![record("m", "t", true)], index).unwrap();
    let t = aggregate(&rs).unwrap();
    assert_eq!(t.models[0].levels[1].render().unwrap(), "100.0");
    assert_eq!(t.models[0].domains[&Domain::D3].render().unwrap(), "100.0");
    assert_eq!(t.models[0].levels[0].render(), None);
    assert_eq!(render_pct(t.average.all.unwrap()), "100.0");
}

#[test]
fn empty_and_dangling() {
    assert!(matches!(aggregate(&ResultSet::default()), Err(ForgeError::Empty(_))));
    let err = ResultSet::new(vec![record("m", "ghost", true)], BTreeMap::new()).unwrap_err();
    let ForgeError::DanglingTasks(ids) = err else { panic!() };
    assert_eq!(ids, vec!["ghost".to_string()]);
}

#[test]
fn solvability_fixture() {
    let rs = solvability_results();
    let s = solvability(&rs).unwrap();
    assert_eq!(s.models, 14);
    let rendered: Vec<(String, String)> = s
        .levels
        .iter()
        .map(|l| (l.solved.render().unwrap(), render_pct(l.mean_solvers().unwrap())))
        .collect();
    assert_eq!(
        rendered,
        vec![
            ("95.0".to_string(), "10.4".to_string()),
            ("93.2".to_string(), "7.9".to_string()),
            ("76.5".to_string(), "4.3".to_string())
        ]
    );
    assert_eq!((s.overall.hits, s.overall.total), (827, 934));
    assert_eq!(s.overall.render().unwrap(), "88.5");
    assert_eq!([s.unsolved(Level::L1), s.unsolved(Level::L2), s.unsolved(Level::L3)], [15, 23, 69]);
    assert!(s.to_markdown().contains("224/293"));
}

#[test]
fn solvability_single_model() {
    let index = benchmark_index();
    let records = index.keys().map(|t| record("only", t, true)).collect();
    let s = solvability(&ResultSet::new(records, index).unwrap()).unwrap();
    assert_eq!(s.overall.render().unwrap(), "100.0");
    for l in &s.levels {
        assert_eq!(render_pct(l.mean_solvers().unwrap()), "1.0");
    }
    assert!(matches!(solvability(&ResultSet::default()), Err(ForgeError::Empty(_))));
}

#[test]
fn per_dimension_recount_and_visual_fixture() {
    // Visual Complexity levels 1/2/3 with 109/120, 15/19 and 29/52 correct.
    let mut tasks = BTreeMap::new();
    let mut records = Vec::new();
    for (lvl, correct, total) in [(1u8, 109, 120), (2, 15, 19), (3, 29, 52)] {
        for i in 0..total {
            let id = format!("vc{lvl}-{i}");
            let mut v = [1u8; 7];
            v[Dimension::VisualComplexity.index()] = lvl;
            v[Dimension::JumpDepth.index()] = 1 + (i % 3) as u8;
            let info = TaskInfo { domain: Domain::D1, level: Level::L2, difficulty: DifficultyVector::from_values(v).unwrap() };
            tasks.insert(id.clone(), info);
            records.push(record("Gemini-3-Pro", &id, i < correct));
            records.push(record("other", &id, i % 2 == 0));
        }
    }
    let rs = ResultSet::new(records, tasks).unwrap();
    let table = per_dimension_table(&rs).unwrap();
    let row = table.row("Gemini-3-Pro").unwrap();
    let vc: Vec<String> = Level::ALL
        .iter()
        .map(|l| row.cell(Dimension::VisualComplexity, *l).unwrap().render().unwrap())
        .collect();
    assert_eq!(vc, vec!["90.8", "78.9", "55.8"]);
    assert!(row.cell(Dimension::RiskFactor, Level::L3).is_none());
    assert!(table.to_markdown().contains(" - |"));

    // Independent recount over the same records.
    for model in ["Gemini-3-Pro", "other"] {
        let row = table.row(model).unwrap();
        for dim in Dimension::ALL {
            for level in Level::ALL {
                let (mut hits, mut total) = (0u64, 0u64);
                for r in rs.records.iter().filter(|r| r.model_id == model) {
                    if rs.tasks[&r.task_id].difficulty.level(dim) == level {
                        total += 1;
                        hits += u64::from(r.correct);
                    }
                }
                match row.cell(dim, level) {
                    Some(c) => assert_eq!((c.hits, c.total), (hits, total)),
                    None => assert_eq!(total, 0),
                }
            }
        }
    }
    let acc = row.accuracy();
    assert!(accuracy_drop(&acc).is_err());
}

#[test]
fn runtime_table_and_dagger() {
    let mut tasks = BTreeMap::new();
    let mut records = Vec::new();
    let turns = [7, 8, 8, 8, 8, 8, 8, 8, 8, 8];
    let acts = [12, 12, 12, 12, 12, 12, 12, 12, 13, 13];
    for i in 0..10 {
        let id = format!("t{i}");
        tasks.insert(id.clone(), TaskInfo { domain: Domain::D1, level: Level::L1, difficulty: vector_for(Level::L1) });
        let mut r = record("Gemini-3-Pro", &id, true);
        r.turns = turns[i];
        r.acts = acts[i];
        r.prompt_tokens = 133_000;
        r.completion_tokens = 4_200;
        records.push(r);
        let mut g = record("GPT-5.2", &id, false);
        g.step_logging = false;
        g.turns = 9;
        g.acts = 8;
        g.prompt_tokens = 80_000;
        g.completion_tokens = 400;
        records.push(g);
    }
    let rs = ResultSet::new(records, tasks).unwrap();
    let t = runtime_report(&rs).unwrap();
    let gem = t.row("Gemini-3-Pro").unwrap();
    assert_eq!(gem.levels[0].unwrap().render(), ["7.9", "12.2", "133K", "4.2K"].map(String::from));
    assert!(gem.levels[1].is_none());
    let md = t.to_markdown();
    assert!(md.contains("| GPT-5.2† |"));
    assert!(md.contains("| Gemini-3-Pro |"));

    let single = ResultSet::new(vec![rs.records[0].clone()], rs.tasks.clone()).unwrap();
    let cell = runtime_report(&single).unwrap().rows[0].levels[0].unwrap();
    assert_eq!((cell.turns, cell.acts), (Decimal::from(7), Decimal::from(12)));
}

#[test]
fn results_jsonl_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let rs = level_accuracy_results();
    let path = dir.path().join("results.jsonl");
    write_results(&path, &rs.records[..50]).unwrap();
    assert_eq!(read_results(&path).unwrap(), rs.records[..50].to_vec());
}

/// Textbook Spearman: rank by counting, then Pearson from raw sums.
fn oracle_spearman(x: &[f64], y: &[f64]) -> f64 {
    let rank = |v: &[f64]| -> Vec<f64> {
        v.iter()
            .map(|a| {
                let less = v.iter().filter(|b| *b < a).count() as f64;
                let eq = v.iter().filter(|b| *b == a).count() as f64;
                less + (eq + 1.0) / 2.0
            })
            .collect()
    };
    let (rx, ry) = (rank(x), rank(y));
    let n = x.len() as f64;
    let sx: f64 = rx.iter().sum();
    let sy: f64 = ry.iter().sum();
    let sxy: f64 = rx.iter().zip(&ry).map(|(a, b)| a * b).sum();
    let sxx: f64 = rx.iter().map(|a| a * a).sum();
    let syy: f64 = ry.iter().map(|a| a * a).sum();
    (n * sxy - sx * sy) / ((n * sxx - sx * sx).sqrt() * (n * syy - sy * sy).sqrt())
}

fn vectors(rows: &[[u8; 7]]) -> Vec<DifficultyVector> {
    rows.iter().map(|r| DifficultyVector::from_values(*r).unwrap()).collect()
}

#[test]
fn spearman_hand_dataset() {
    let data = [
        [1, 2, 3, 1, 2, 3, 1],
        [2, 2, 1, 3, 3, 2, 1],
        [3, 1, 2, 2, 1, 1, 2],
        [1, 3, 3, 2, 2, 3, 1],
        [2, 1, 1, 3, 3, 2, 3],
    ];
    let m = spearman_matrix(&vectors(&data)).unwrap();
    let col = |d: usize| data.iter().map(|r| f64::from(r[d])).collect::<Vec<_>>();
    let mut abs = Vec::new();
    for i in 0..7 {
        assert_eq!(m.rho[i][i], Some(1.0));
        for j in 0..7 {
            let got = m.rho[i][j].unwrap();
            assert_eq!(m.rho[i][j], m.rho[j][i]);
            if i != j {
                assert!((got - oracle_spearman(&col(i), &col(j))).abs() < 1e-12, "({i},{j})");
                if i < j {
                    abs.push(got.abs());
                }
            }
        }
    }
    let mean = abs.iter().sum::<f64>() / abs.len() as f64;
    assert!((m.mean_abs_off_diagonal.unwrap() - mean).abs() < 1e-12);
}

#[test]
fn spearman_extremes_and_undefined() {
    let m = spearman_matrix(&vectors(&[
        [1, 1, 3, 2, 1, 1, 1],
        [2, 2, 2, 2, 3, 1, 2],
        [3, 3, 1, 2, 2, 1, 3],
    ]))
    .unwrap();
    assert_eq!(m.get(Dimension::JumpDepth, Dimension::JumpBreadth), Some(1.0));
    assert_eq!(m.get(Dimension::JumpDepth, Dimension::PageInteraction), Some(-1.0));
    assert_eq!(m.get(Dimension::VisualComplexity, Dimension::JumpDepth), None);
    assert_eq!(m.get(Dimension::VisualComplexity, Dimension::VisualComplexity), None);
    assert!(m.to_markdown().contains("undefined"));
    assert!(matches!(spearman_matrix(&vectors(&[[1; 7], [2; 7]])), Err(ForgeError::Empty(_))));
    assert_eq!(average_ranks(&[2.0, 2.0, 2.0]), vec![2.0; 3]);
    assert_eq!(pearson(&[1.0, 2.0, 3.0], &[1.0, 1.0, 1.0]), None);
}

fn arb_vector() -> impl Strategy<Value = [u8; 7]> {
    prop::array::uniform7(1u8..=3)
}

proptest! {
    #[test]
    fn all_is_weighted_level_mean(bits in prop::collection::vec((0usize..3, any::<bool>()), 1..60)) {
        let mut tasks = BTreeMap::new();
        let mut records = Vec::new();
        for (i, (l, ok)) in bits.iter().enumerate() {
            let id = format!("t{i}");
            tasks.insert(id.clone(), TaskInfo { domain: Domain::D2, level: Level::ALL[*l], difficulty: vector_for(Level::ALL[*l]) });
            records.push(record("m", &id, *ok));
        }
        let t = aggregate(&ResultSet::new(records, tasks).unwrap()).unwrap();
        let m = &t.models[0];
        let hits: u64 = m.levels.iter().map(|r| r.hits).sum();
        let total: u64 = m.levels.iter().map(|r| r.total).sum();
        prop_assert_eq!((hits, total), (m.all.hits, m.all.total));
        let weighted: Decimal = m.levels.iter().filter_map(|r| r.percent().map(|p| p * Decimal::from(r.total))).sum();
        let diff = (weighted / Decimal::from(m.all.total) - m.all.percent().unwrap()).abs();
        prop_assert!(diff < Decimal::new(1, 20));
    }

    #[test]
    fn numeric_judging_is_symmetric(a in -1.0e6f64..1.0e6, b in -1.0e6f64..1.0e6, same in any::<bool>()) {
        let b = if same { a } else { b };
        let m = |v: f64| BTreeMap::from([("x".to_string(), format!("{v:.2}"))]);
        prop_assert_eq!(
            judge_answer(AnswerType::DirectAnswer, &m(a), &m(b), &[]),
            judge_answer(AnswerType::DirectAnswer, &m(b), &m(a), &[])
        );
    }

    #[test]
    fn spearman_is_symmetric_and_bounded(rows in prop::collection::vec(arb_vector(), 3..30)) {
        let m = spearman_matrix(&vectors(&rows)).unwrap();
        for i in 0..7 {
            if let Some(d) = m.rho[i][i] { prop_assert_eq!(d, 1.0); }
            for j in 0..7 {
                prop_assert_eq!(m.rho[i][j], m.rho[j][i]);
                if let Some(v) = m.rho[i][j] { prop_assert!((-1.0..=1.0).contains(&v)); }
            }
        }
    }

    #[test]
    fn solvability_is_monotone(base in prop::collection::vec(any::<bool>(), 12), extra in prop::collection::vec(any::<bool>(), 12)) {
        let mut tasks = BTreeMap::new();
        for i in 0..12 {
            let level = Level::ALL[i % 3];
            tasks.insert(format!("t{i}"), TaskInfo { domain: Domain::D1, level, difficulty: vector_for(level) });
        }
        let one: Vec<_> = base.iter().enumerate().map(|(i, ok)| record("a", &format!("t{i}"), *ok)).collect();
        let mut two = one.clone();
        two.extend(extra.iter().enumerate().map(|(i, ok)| record("b", &format!("t{i}"), *ok)));
        let s1 = solvability(&ResultSet::new(one, tasks.clone()).unwrap()).unwrap();
        let s2 = solvability(&ResultSet::new(two, tasks).unwrap()).unwrap();
        prop_assert!(s2.overall.hits >= s1.overall.hits);
        for l in 0..3 {
            prop_assert!(s2.levels[l].solved.hits >= s1.levels[l].solved.hits);
        }
    }
}
