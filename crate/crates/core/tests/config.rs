mod common;

use common::{default_config, default_scenario_path};
use tstep::config::{ConfigError, ScenarioConfig};
use tstep::stats::expected_zone_population;

const SMALL: &str = r#"
[zone]
width = 200.0
height = 160.0

[lattice]
cell_size = 10.0
fov_side = 40.0

[[sources]]
position = [100.0, -15.0]
facing = "north"

[[sources]]
position = [-15.0, 80.0]
facing = "east"
rate = 0.2

[sensors]
count = 2
initial_cells = [[5, 5], [10, 8]]
"#;

fn error_for(text: &str) -> ConfigError {
    ScenarioConfig::parse(text)
        .and_then(|c| c.resolve().map(|_| c))
        .expect_err("config should be rejected")
}

fn with(replace: &str, by: &str) -> String {
    assert!(SMALL.contains(replace), "{replace}");
    SMALL.replacen(replace, by, 1)
}

#[test]
fn shipped_scenario_is_valid_and_calibrated() {
    let c = default_config();
    let r = c.resolve().unwrap();
    assert_eq!(r.scenario.sources.len(), 8);
    assert_eq!(r.run.sensors.len(), 10);
    assert_eq!(r.run.horizon, 3);
    assert_eq!(r.run.steps, 150);
    assert!(r.scenario.sources.iter().all(|s| s.rate == 0.3));
    let pop = expected_zone_population(&r.scenario, 8192);
    assert!(
        (70.0..=80.0).contains(&pop),
        "expected in-zone population {pop}"
    );
}

#[test]
fn round_trip_is_identity() {
    for text in [
        SMALL.to_string(),
        std::fs::read_to_string(default_scenario_path()).unwrap(),
    ] {
        let a = ScenarioConfig::parse(&text).unwrap();
        let b = ScenarioConfig::parse(&a.to_toml()).unwrap();
        assert_eq!(a, b);
        let full = a.with_defaults().unwrap();
        assert_eq!(ScenarioConfig::parse(&full.to_toml()).unwrap(), full);
        assert_eq!(full.resolve().unwrap(), a.resolve().unwrap());
    }
}

#[test]
fn fov_smaller_than_cell_names_both_keys() {
    let e = error_for(&with("fov_side = 40.0", "fov_side = 5.0")).to_string();
    assert!(
        e.contains("lattice.fov_side") && e.contains("lattice.cell_size"),
        "{e}"
    );
}

#[test]
fn diagnostics_name_the_offending_key() {
    let cases = [
        (with("width = 200.0", "width = -200.0"), "zone.width"),
        (with("width = 200.0", "width = 205.0"), "lattice.cell_size"),
        (
            with("fov_side = 40.0", "fov_side = 400.0"),
            "lattice.fov_side",
        ),
        (with("[-15.0, 80.0]", "[15.0, 80.0]"), "sources[1].position"),
        (with("rate = 0.2", "rate = -0.2"), "sources[1].rate"),
        (
            with("[[5, 5], [10, 8]]", "[[0, 0], [10, 8]]"),
            "sensors.initial_cells[0]",
        ),
        (with("count = 2", "count = 3"), "sensors.initial_cells"),
        (format!("{SMALL}\n[run]\nsteps = 0\n"), "run.steps"),
        (format!("{SMALL}\n[run]\nhorizon = 0\n"), "run.horizon"),
        (
            format!("{SMALL}\n[stats]\nquadrature_n = 1\n"),
            "stats.quadrature_n",
        ),
        (
            format!("{SMALL}\n[targets]\nspeed = 0.0\n"),
            "targets.speed",
        ),
        (
            format!("{SMALL}\n[run]\nstrategy = \"teleport\"\n"),
            "strategy",
        ),
        (
            format!("{SMALL}\n[run]\nreplan = \"sometimes\"\n"),
            "replan",
        ),
        (
            with("[lattice]", "[lattice]\ncell_sise = 10.0"),
            "cell_sise",
        ),
        (with("facing = \"north\"", "facing = \"up\""), "facing"),
    ];
    for (text, key) in cases {
        let e = error_for(&text).to_string();
        assert!(e.contains(key), "expected `{key}` in: {e}");
    }
}

#[test]
fn error_kinds_are_distinct() {
    assert!(matches!(
        ScenarioConfig::load(std::path::Path::new("/no/such/scenario.toml")),
        Err(ConfigError::Read { .. })
    ));
    assert!(matches!(
        ScenarioConfig::parse("[zone"),
        Err(ConfigError::Syntax(_))
    ));
    assert!(matches!(
        ScenarioConfig::parse("[zone]\nwidth = 10.0\nheight = 10.0\n"),
        Err(ConfigError::Syntax(_))
    ));
    assert!(matches!(
        error_for(&with("fov_side = 40.0", "fov_side = 5.0")),
        ConfigError::Invalid { .. }
    ));
}
