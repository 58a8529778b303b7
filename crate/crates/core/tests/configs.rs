use std::path::PathBuf;

use nsch_core::app::{parse_config, preset, Preset};

fn config_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn load(name: &str) -> nsch_core::app::ScenarioConfig {
    let text = std::fs::read_to_string(config_dir().join(name)).unwrap();
    parse_config(&text).unwrap_or_else(|e| panic!("{name}: {e}"))
}

#[test]
fn every_shipped_config_parses() {
    let mut count = 0;
    for entry in std::fs::read_dir(config_dir()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let cfg = load(path.file_name().unwrap().to_str().unwrap());
            cfg.validate_for_run().unwrap();
            count += 1;
        }
    }
    assert!(count >= 4);
}

#[test]
fn explicit_taylor_couette_file_matches_the_preset() {
    let mut expected = preset(Preset::TaylorCouette);
    expected.preset = None;
    assert_eq!(load("taylor-couette.toml"), expected);
}

#[test]
fn preset_overrides_apply() {
    let c = load("porous.toml");
    assert_eq!(c.output.directory, "out/porous-slow");
    assert_eq!(c.mesh, preset(Preset::Porous).mesh);
    let l = load("lattice.toml");
    assert_eq!(l.model.body_force.unwrap().x, 2.0e5);
}
