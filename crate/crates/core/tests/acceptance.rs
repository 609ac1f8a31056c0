//! Acceptance checks. Runs without the libtest harness so that every
//! criterion prints one PASS/FAIL line; exits non-zero if any fails.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use base64::Engine;
use forge_core::blueprint::{parse_blueprint, Domain, ProviderProfile};
use forge_core::bundle::{
    assemble_bundle, decode_secret, encode_secret, list_files, resolve_submission, SolutionAction, StubAssetProvider,
    Target, WebsiteBundle, MAIN_SCRIPT,
};
use forge_core::difficulty::{admissible_levels, DifficultyVector, Level};
use forge_core::fixtures::{builtin_registry, wedding};
use forge_core::harness::{aggregate, solvability, spearman_matrix};
use forge_core::logic::State;
use forge_core::pct::render_pct;
use forge_core::refinement::noise::{main_script_includes, runtime_block_count};
use forge_core::refinement::{assess, count_blocking_dialogs, default_rules, refine_bundle, NoiseConfig};
use forge_core::validation::{filter_benchmark, replay_solution, FailureMode, ReplayOptions, SimOptions, Verdict};
use forge_core::workbench::{run_pipeline, RunConfig, StageProviders};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use regex::Regex;

fn wedding_bundle(dir: &Path) -> WebsiteBundle {
    let plan = parse_blueprint(wedding::REFINED_PLAN).unwrap();
    let gen = ProviderProfile::precision("generator");
    assemble_bundle(&plan, &gen, &wedding::planner(), &StubAssetProvider, dir, "wedding-001").unwrap()
}

fn refined_wedding(dir: &Path) -> WebsiteBundle {
    let mut b = wedding_bundle(dir);
    refine_bundle(&mut b, &default_rules(), &NoiseConfig::default(), None).unwrap();
    b
}

/// Composition rules restated directly over the seven raw values.
fn brute_force_levels(values: [u8; 7]) -> Vec<Level> {
    let twos = values.iter().filter(|v| **v == 2).count();
    let threes = values.iter().filter(|v| **v == 3).count();
    let mut out = Vec::new();
    if values.iter().all(|v| *v <= 2) && twos <= 2 {
        out.push(Level::L1);
    }
    if twos >= 2 && threes <= 1 {
        out.push(Level::L2);
    }
    if threes >= 2 && twos >= 2 {
        out.push(Level::L3);
    }
    out
}

fn difficulty_calculus() {
    let start = Instant::now();
    let mut n = 0;
    for a in 0..3u32.pow(7) {
        let mut values = [0u8; 7];
        let mut x = a;
        for v in values.iter_mut() {
            *v = (x % 3) as u8 + 1;
            x /= 3;
        }
        let vector = DifficultyVector::from_values(values).unwrap();
        assert_eq!(admissible_levels(&vector), brute_force_levels(values), "{values:?}");
        n += 1;
    }
    assert_eq!(n, 2187);
    assert_eq!(DifficultyVector::enumerate_all().count(), 2187);
    let plan = parse_blueprint(wedding::REFINED_PLAN).unwrap();
    assert_eq!((plan.difficulty.count(Level::L3), plan.difficulty.count(Level::L2)), (3, 4));
    assert_eq!(plan.overall_level, Level::L3);
    assert!(admissible_levels(&plan.difficulty).contains(&Level::L3));
    plan.validate(true).unwrap();
    assert!(start.elapsed() < Duration::from_secs(1), "{:?}", start.elapsed());
}

fn anti_cheat_codec() {
    let mut runner = TestRunner::new(Config {
        cases: 10_000,
        failure_persistence: None,
        ..Config::default()
    });
    runner
        .run(&any::<String>(), |s| {
            let enc = encode_secret(&s);
            prop_assert_eq!(&enc, &base64::engine::general_purpose::STANDARD.encode(s.as_bytes()));
            prop_assert_eq!(decode_secret(&enc).unwrap(), s);
            Ok(())
        })
        .unwrap();
    for (plain, enc) in [
        ("GEG-2026-05841", "R0VHLTIwMjYtMDU4NDE="),
        ("11440.00", "MTE0NDAuMDA="),
        ("2026-05-16", "MjAyNi0wNS0xNg=="),
    ] {
        assert_eq!(encode_secret(plain).as_bytes(), enc.as_bytes());
        assert_eq!(decode_secret(enc).unwrap().as_bytes(), plain.as_bytes());
    }
}

fn deceptive_codes() {
    let dir = tempfile::tempdir().unwrap();
    let b = wedding_bundle(&dir.path().join("b"));
    let state = |date: &str, guests: &str, catering: &str| {
        State::from([
            ("date".to_string(), date.to_string()),
            ("guests".to_string(), guests.to_string()),
            ("catering".to_string(), catering.to_string()),
        ])
    };
    let rows = [
        (state("2026-05-16", "80", "premium"), "GEG-2026-05841"),
        (state("2026-05-23", "80", "premium"), "GEG-2026-05294"),
        (state("2026-05-16", "100", "premium"), "GEG-2026-05118"),
        (state("2026-05-16", "80", "standard"), "GEG-2026-05991"),
        (state("2026-05-15", "80", "premium"), "GEG-2026-05842"),
    ];
    for (s, want) in rows {
        let got = resolve_submission(&s, &b.answer, &b.solution.judge.rules, "confirmation_code").unwrap();
        assert_eq!(got, want, "{s:?}");
    }
}

/// Count (rate) cells as published, in domain order, L1..L3 then total.
const PUBLISHED_PASS_RATES: [[&str; 4]; 7] = [
    ["39 (65.0)", "41 (68.3)", "35 (58.3)", "115 (63.9)"],
    ["39 (65.0)", "48 (80.0)", "38 (63.3)", "125 (69.4)"],
    ["43 (71.7)", "42 (70.0)", "46 (76.7)", "131 (72.8)"],
    ["53 (88.3)", "58 (96.7)", "49 (81.7)", "160 (88.9)"],
    ["41 (68.3)", "50 (83.3)", "40 (66.7)", "131 (72.8)"],
    ["42 (70.0)", "51 (85.0)", "48 (80.0)", "141 (78.3)"],
    ["44 (73.3)", "50 (83.3)", "37 (61.7)", "131 (72.8)"],
];

fn pass_rate_arithmetic() {
    let r = filter_benchmark(&common::validated_tasks(&common::PASS_COUNTS, 60)).unwrap();
    let t = &r.pass_rates;
    let cell = |ratio: forge_core::pct::Ratio| format!("{} ({})", ratio.hits, ratio.render().unwrap());
    for (i, d) in Domain::ALL.iter().enumerate() {
        for l in Level::ALL {
            assert_eq!(cell(t.cell(*d, l)), PUBLISHED_PASS_RATES[i][l.index()], "{d} {l}");
        }
        assert_eq!(cell(t.domain_total(*d)), PUBLISHED_PASS_RATES[i][3], "{d}");
    }
    let totals: Vec<String> = Level::ALL.iter().map(|l| cell(t.level_total(*l))).collect();
    assert_eq!(totals, ["301 (71.7)", "340 (81.0)", "293 (69.8)"]);
    assert_eq!(cell(t.overall()), "934 (74.1)");
    assert_eq!(t.domain_total(Domain::D4).render().unwrap(), "88.9");
    assert_eq!(r.accepted.len(), 934);
}

fn solvability_arithmetic() {
    let s = solvability(&common::solvability_results()).unwrap();
    let solved: Vec<String> = s.levels.iter().map(|l| l.solved.render().unwrap()).collect();
    let solvers: Vec<String> = s.levels.iter().map(|l| render_pct(l.mean_solvers().unwrap())).collect();
    assert_eq!(solved, ["95.0", "93.2", "76.5"]);
    assert_eq!(solvers, ["10.4", "7.9", "4.3"]);
    assert_eq!(s.overall.render().unwrap(), "88.5");
    for (l, (hits, total, _)) in s.levels.iter().zip(common::SOLVABILITY) {
        assert_eq!((l.solved.hits, l.solved.total), (hits, total));
    }
}

fn aggregation() {
    let t = aggregate(&common::level_accuracy_results()).unwrap();
    let num = |d: Option<rust_decimal::Decimal>| -> f64 { d.unwrap().to_string().parse().unwrap() };
    let (levels, all) = common::AVERAGE_ROW;
    for (i, want) in levels.iter().enumerate() {
        assert!((num(t.average.levels[i]) - want).abs() <= 0.05, "L{}: {:?}", i + 1, t.average.levels[i]);
    }
    assert!((num(t.average.all) - all).abs() <= 0.05, "{:?}", t.average.all);
    assert!(t.to_markdown().contains("| **Average** | 73.9 | 54.8 | 28.1 | 52.6 |"));
}

/// Ranks by counting, then Pearson from raw sums.
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
    let (sx, sy): (f64, f64) = (rx.iter().sum(), ry.iter().sum());
    let sxy: f64 = rx.iter().zip(&ry).map(|(a, b)| a * b).sum();
    let sxx: f64 = rx.iter().map(|a| a * a).sum();
    let syy: f64 = ry.iter().map(|a| a * a).sum();
    (n * sxy - sx * sy) / ((n * sxx - sx * sx).sqrt() * (n * syy - sy * sy).sqrt())
}

fn spearman() {
    let data: [[u8; 7]; 5] = [
        [1, 2, 3, 1, 2, 3, 1],
        [2, 2, 1, 3, 3, 2, 1],
        [3, 1, 2, 2, 1, 1, 2],
        [1, 3, 3, 2, 2, 3, 1],
        [2, 1, 1, 3, 3, 2, 3],
    ];
    let vectors: Vec<_> = data.iter().map(|r| DifficultyVector::from_values(*r).unwrap()).collect();
    let m = spearman_matrix(&vectors).unwrap();
    let col = |d: usize| data.iter().map(|r| f64::from(r[d])).collect::<Vec<_>>();
    for i in 0..7 {
        for j in 0..7 {
            let want = if i == j { 1.0 } else { oracle_spearman(&col(i), &col(j)) };
            assert!((m.rho[i][j].unwrap() - want).abs() < 1e-12, "({i},{j})");
        }
    }
    let rows = [[1, 1, 3, 1, 2, 2, 1], [2, 2, 2, 2, 1, 3, 2], [3, 3, 1, 3, 3, 1, 3]];
    let vectors: Vec<_> = rows.iter().map(|r| DifficultyVector::from_values(*r).unwrap()).collect();
    let m = spearman_matrix(&vectors).unwrap();
    assert_eq!(m.rho[0][1], Some(1.0));
    assert_eq!(m.rho[0][2], Some(-1.0));
    assert_eq!(m.rho[0][3], Some(1.0));
}

fn end_to_end_pipeline() {
    let start = Instant::now();
    let providers = StageProviders::resolve(&builtin_registry(), &Default::default()).unwrap();
    let cfg = RunConfig::new(vec![Domain::D1], vec![Level::L3], 1, 2026);
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let ra = run_pipeline(&cfg, &providers, a.path(), 1).unwrap();
    let rb = run_pipeline(&cfg, &providers, b.path(), 1).unwrap();
    assert_eq!(ra.manifest.tasks.len(), 1);
    let run = &ra.runs[0];
    assert!(run.solvable, "{run:?}");
    assert!(run.steps_used.unwrap() <= 50);
    assert_eq!(ra.manifest.digest(), rb.manifest.digest());
    let strip = |dir: &Path| {
        let mut v: serde_json::Value =
            serde_json::from_slice(&std::fs::read(dir.join("manifest.json")).unwrap()).unwrap();
        v["created_at"] = serde_json::Value::Null;
        serde_json::to_vec(&v).unwrap()
    };
    assert_eq!(strip(&ra.dir), strip(&rb.dir));
    assert!(start.elapsed() < Duration::from_secs(120), "{:?}", start.elapsed());
    println!("      steps_used={} digest={}", run.steps_used.unwrap(), &ra.manifest.digest()[..16]);
}

fn replay(b: &WebsiteBundle, budget: usize) -> Verdict {
    let opts = ReplayOptions {
        budget,
        ..ReplayOptions::default()
    };
    replay_solution(b, SimOptions::default(), opts).unwrap()
}

fn validation_failure_modes() {
    let dir = tempfile::tempdir().unwrap();
    let clean = refined_wedding(dir.path());

    let mut fee_omitted = clean.clone();
    if let Some(SolutionAction::Terminate { answers }) = fee_omitted.solution.steps.last_mut() {
        answers.insert("total_cost".into(), "10400.00".into());
    }
    assert_eq!(replay(&fee_omitted, 50).failure_mode, Some(FailureMode::GtMismatch));

    let mut unreachable = clean.clone();
    let pos = unreachable.solution.steps.iter().position(|s| matches!(s, SolutionAction::Click { .. })).unwrap();
    unreachable.solution.steps[pos] = SolutionAction::Click {
        target: Target::text("No Such Button"),
        note: None,
    };
    let v = replay(&unreachable, 50);
    assert_eq!(v.failure_mode, Some(FailureMode::RepeatedActionFailure));
    let tail: Vec<_> = v.trace.iter().rev().take(3).collect();
    assert!(tail.iter().all(|s| !s.outcome.ok) && tail.windows(2).all(|w| w[0].action == w[1].action));

    let v = replay(&clean, 0);
    assert_eq!((v.failure_mode, v.steps_used), (Some(FailureMode::StepBudgetExceeded), 0));
}

fn dialog_scan(root: &Path) -> usize {
    let re = Regex::new(r"(?:^|[^.\w$])(?:window\.)?(alert|confirm|prompt)\s*\(").unwrap();
    list_files(root)
        .unwrap()
        .into_iter()
        .filter(|f| f.ends_with(".js") || f.ends_with(".html"))
        .map(|f| re.find_iter(&std::fs::read_to_string(root.join(f)).unwrap()).count())
        .sum()
}

fn refinement_guarantees() {
    let dir = tempfile::tempdir().unwrap();
    let mut b = wedding_bundle(dir.path());
    let rules = default_rules();
    let before = assess(&b, &rules, None).unwrap();
    for rule in ["dead-navigation", "blocking-dialog", "noise-runtime"] {
        assert!(before.has_rule(rule), "{rule}");
    }
    assert!(b.metadata.nav.dead_count() > 0);
    assert!(dialog_scan(dir.path()) > 0);

    let report = refine_bundle(&mut b, &rules, &NoiseConfig::default(), None).unwrap();
    assert!(report.clean());
    assert_eq!(b.metadata.nav.dead_count(), 0);
    assert_eq!(count_blocking_dialogs(&b).unwrap(), 0);
    assert_eq!(dialog_scan(dir.path()), 0);
    assert_eq!(runtime_block_count(&b.read_text(MAIN_SCRIPT).unwrap()), 1);
    for p in &b.pages {
        assert_eq!(main_script_includes(&p.file, &b.read_text(&p.file).unwrap()), 1, "{}", p.file);
    }
}

fn main() {
    let criteria: [(&str, fn()); 10] = [
        ("difficulty calculus", difficulty_calculus),
        ("anti-cheat codec", anti_cheat_codec),
        ("deceptive-code state machine", deceptive_codes),
        ("pass-rate arithmetic", pass_rate_arithmetic),
        ("solvability arithmetic", solvability_arithmetic),
        ("aggregation", aggregation),
        ("spearman", spearman),
        ("end-to-end hermetic pipeline", end_to_end_pipeline),
        ("validation failure modes", validation_failure_modes),
        ("refinement guarantees", refinement_guarantees),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let ok = catch_unwind(AssertUnwindSafe(check)).is_ok();
        let ms = start.elapsed().as_millis();
        println!("{} [{:>2}] {name} ({ms} ms)", if ok { "PASS" } else { "FAIL" }, i + 1);
        failed += usize::from(!ok);
    }
    println!("{}/{} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
