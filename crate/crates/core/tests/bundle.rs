use std::collections::BTreeMap;

use forge_core::blueprint::{parse_blueprint, ProviderProfile};
use forge_core::bundle::assemble::{write_bundle, GenerationOutput};
use forge_core::bundle::{
    assemble_bundle, audit_bundle, decode_secret, encode_secret, resolve_submission, AuditKind,
    EdgeTarget, StubAssetProvider, WebsiteBundle, DATA_FILE,
};
use forge_core::fixtures::{lookup, wedding};
use forge_core::logic::State;
use forge_core::ForgeError;
use proptest::prelude::*;

fn generator() -> ProviderProfile {
    ProviderProfile::precision("generator")
}

fn wedding_bundle(dir: &std::path::Path) -> WebsiteBundle {
    let plan = parse_blueprint(wedding::REFINED_PLAN).unwrap();
    assemble_bundle(&plan, &generator(), &wedding::planner(), &StubAssetProvider, dir, "wedding-001").unwrap()
}

fn state(date: &str, guests: &str, catering: &str) -> State {
    State::from([
        ("date".to_string(), date.to_string()),
        ("guests".to_string(), guests.to_string()),
        ("catering".to_string(), catering.to_string()),
    ])
}

#[test]
fn walkthrough_codec_fixtures() {
    assert_eq!(encode_secret("GEG-2026-05841"), "R0VHLTIwMjYtMDU4NDE=");
    assert_eq!(encode_secret("11440.00"), "MTE0NDAuMDA=");
    assert_eq!(decode_secret("MjAyNi0wNS0xNg==").unwrap(), "2026-05-16");
    assert_eq!(encode_secret(""), "");
    assert!(matches!(decode_secret("!!!"), Err(ForgeError::Decode(_))));
}

#[test]
fn wedding_assembly_inventory() {
    let dir = tempfile::tempdir().unwrap();
    let bundle = wedding_bundle(&dir.path().join("b"));
    let inv = bundle.inventory();
    assert_eq!((inv.pages, inv.assets, inv.code_data, inv.total), (8, 10, 3, 21));
    assert_eq!(bundle.metadata.stats, inv);
    assert!(audit_bundle(&bundle).unwrap().passed());

    let data: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(bundle.path(DATA_FILE)).unwrap()).unwrap();
    assert_eq!(data["ground_truth"]["confirmation_code"], "R0VHLTIwMjYtMDU4NDE=");
    assert_eq!(data["ground_truth"]["total_cost"], "MTE0NDAuMDA=");
    assert_eq!(data["ground_truth"]["correct_date"], "MjAyNi0wNS0xNg==");

    let reloaded = WebsiteBundle::load(&bundle.root).unwrap();
    assert_eq!(reloaded.inventory(), inv);
    assert_eq!(reloaded.solution, bundle.solution);
}

#[test]
fn deceptive_mapping_rows() {
    let dir = tempfile::tempdir().unwrap();
    let b = wedding_bundle(&dir.path().join("b"));
    let rules = &b.solution.judge.rules;
    let code = |s: &State| resolve_submission(s, &b.answer, rules, "confirmation_code").unwrap();
    assert_eq!(code(&state("2026-05-16", "80", "premium")), "GEG-2026-05841");
    assert_eq!(code(&state("2026-05-15", "80", "premium")), "GEG-2026-05842");
    assert_eq!(code(&state("2026-05-16", "80", "standard")), "GEG-2026-05991");
    assert_eq!(code(&state("2026-05-16", "100", "premium")), "GEG-2026-05118");
    assert_eq!(code(&state("2026-05-23", "80", "premium")), "GEG-2026-05294");
}

#[test]
fn pre_refinement_nav_has_dead_header_links() {
    let dir = tempfile::tempdir().unwrap();
    let b = wedding_bundle(&dir.path().join("b"));
    let dead: Vec<&str> = b.metadata.nav.dead_edges().map(|e| e.text.as_str()).collect();
    for label in ["Blog", "About Us", "Contact"] {
        assert!(dead.contains(&label), "{label} not dead in {dead:?}");
    }
    assert!(b
        .metadata
        .nav
        .edges
        .iter()
        .any(|e| e.text == "View Details" && e.target == EdgeTarget::Page { page: "venue_overview".into() }));
}

#[test]
fn lookup_assembly_is_one_page_plus_data() {
    let dir = tempfile::tempdir().unwrap();
    let plan = parse_blueprint(lookup::DRAFT_PLAN).unwrap();
    let b = assemble_bundle(&plan, &generator(), &lookup::planner(), &StubAssetProvider, dir.path(), "lookup-001")
        .unwrap();
    let inv = b.inventory();
    assert_eq!((inv.pages, inv.assets, inv.code_data), (1, 0, 1));
    let report = audit_bundle(&b).unwrap();
    assert!(report.passed(), "{report:?}");
}

#[test]
fn plaintext_ground_truth_in_copy_fails_assembly() {
    let dir = tempfile::tempdir().unwrap();
    let plan = parse_blueprint(lookup::DRAFT_PLAN).unwrap();
    let mut out = GenerationOutput::parse(&lookup::generation_reply()).unwrap();
    let page = out.files.get_mut("index.html").unwrap();
    *page = page.replace("</body>", "<p>Today only: 1249.00</p></body>");
    let err = write_bundle(&plan, &out, &StubAssetProvider, dir.path(), "t").unwrap_err();
    assert!(matches!(err, ForgeError::Assembly(ref m) if m.contains("anti-cheat")), "{err}");
}

#[test]
fn audit_flags_script_leak_and_external_origin() {
    let dir = tempfile::tempdir().unwrap();
    let b = wedding_bundle(&dir.path().join("b"));
    b.write_text("js/leak.js", "var c = 'GEG-2026-05841';\n").unwrap();
    let index = b.read_text("index.html").unwrap();
    b.write_text(
        "index.html",
        &index.replace("</head>", "<script src=\"https://cdn.example.com/a.js\"></script></head>"),
    )
    .unwrap();
    let report = audit_bundle(&b).unwrap();
    assert!(report.has(AuditKind::PlaintextGroundTruth));
    assert!(report.has(AuditKind::ExternalReference));
}

#[test]
fn failing_asset_is_named() {
    struct Broken;
    impl forge_core::bundle::AssetProvider for Broken {
        fn produce(&self, _: &forge_core::bundle::AssetRequest) -> Result<Vec<u8>, String> {
            Err("offline".into())
        }
    }
    let dir = tempfile::tempdir().unwrap();
    let plan = parse_blueprint(wedding::REFINED_PLAN).unwrap();
    let err = assemble_bundle(&plan, &generator(), &wedding::planner(), &Broken, dir.path(), "t").unwrap_err();
    match err {
        ForgeError::Asset { asset, reason } => {
            assert!(asset.starts_with("assets/"));
            assert_eq!(reason, "offline");
        }
        other => panic!("{other}"),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn codec_round_trip(s in any::<String>()) {
        prop_assert_eq!(decode_secret(&encode_secret(&s)).unwrap(), s);
    }

    #[test]
    fn resolution_is_pure(day in 1u32..=31, guests in 50u32..=200, cat in 0usize..4) {
        let plan = parse_blueprint(wedding::REFINED_PLAN).unwrap();
        let out = GenerationOutput::parse(&wedding::generation_reply()).unwrap();
        let answer = forge_core::bundle::EncodedAnswerConfig::from_plaintext(
            plan.answer.answer_type,
            &plan.answer.ground_truth_fields,
            &out.logic.deceptive_codes,
        );
        let s = state(
            &format!("2026-05-{day:02}"),
            &guests.to_string(),
            ["none", "standard", "premium", "luxe"][cat],
        );
        let a = resolve_submission(&s, &answer, &out.logic.judge.rules, "confirmation_code").unwrap();
        let b = resolve_submission(&s.clone(), &answer, &out.logic.judge.rules, "confirmation_code").unwrap();
        prop_assert_eq!(&a, &b);
        let decoded: BTreeMap<_, _> = answer.decoded_deceptive_codes().unwrap();
        prop_assert!(a == "GEG-2026-05841" || decoded.values().any(|c| c == &a));
    }
}
