mod common;

use avatar_market::dsl;
use avatar_market::kernel::ScenarioConfig;
use common::corpus;

fn files(dir: &str, ext: &str) -> Vec<std::path::PathBuf> {
    let mut v: Vec<_> = std::fs::read_dir(corpus(dir))
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == ext))
        .collect();
    v.sort();
    v
}

#[test]
fn every_avatar_parses_and_prints_to_a_fixed_point() {
    let mut seen = 0;
    for dir in ["archetypes", "examples"] {
        for path in files(dir, "avt") {
            let src = std::fs::read_to_string(&path).unwrap();
            let p = dsl::parse(&src).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            let printed = dsl::print(&p.spec);
            let again =
                dsl::parse(&printed).unwrap_or_else(|e| panic!("{}: reprint: {e}", path.display()));
            assert_eq!(p.spec, again.spec, "{}", path.display());
            assert_eq!(printed, dsl::print(&again.spec));
            seen += 1;
        }
    }
    assert!(seen >= 7);
}

#[test]
fn every_scenario_validates() {
    let scenarios = files("examples", "json");
    assert!(scenarios.len() >= 3);
    for path in scenarios {
        let cfg = ScenarioConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        cfg.validate()
            .unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    }
}
