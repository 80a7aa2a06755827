use std::path::Path;

use qapairgen::config::{ExperimentConfig, Variant};

fn shipped(name: &str) -> ExperimentConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name);
    ExperimentConfig::read(&path).unwrap()
}

#[test]
fn shipped_configs_match_the_presets() {
    assert_eq!(shipped("desk.ini"), ExperimentConfig::desk(Variant::QgFGae));
    assert_eq!(shipped("full.ini"), ExperimentConfig::full(Variant::QgFGae));
}

#[test]
fn shipped_configs_validate() {
    for name in ["desk.ini", "full.ini"] {
        shipped(name).validate().unwrap();
    }
}

#[test]
fn rendering_round_trips() {
    for v in Variant::ALL {
        let c = ExperimentConfig::full(v);
        assert_eq!(ExperimentConfig::from_text(&c.to_text()).unwrap(), c);
    }
}
