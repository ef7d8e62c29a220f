use mobman::bus::{Bus, MessageKind};
use mobman::harness::{resolve_scene, run, run_on, MetricsReport, Params, ScenarioConfig, ScenarioId};
use mobman::sim::Scene;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn params_survive_toml(alpha in 0.0..0.99f64, kp in 0.0..5.0f64, loops in 1u32..50, k in 0.0..0.05f64) {
        let mut p = Params::default();
        p.ema_alpha = alpha;
        p.pid.pos_kp = kp;
        p.tally.loops = loops;
        p.odometry.k_trans = k;
        prop_assert_eq!(Params::from_toml_str(&p.to_toml_string()).unwrap(), p);
    }
}

#[test]
fn builtin_scenes_survive_toml() {
    for id in ScenarioId::ALL {
        let scene = id.default_scene();
        scene.validate().unwrap();
        assert_eq!(Scene::from_toml_str(&scene.to_toml_string()).unwrap(), scene);
        assert_eq!(resolve_scene(&scene.name).unwrap(), scene);
    }
}

#[test]
fn scenario_names_parse() {
    for id in ScenarioId::ALL {
        assert_eq!(id.name().parse::<ScenarioId>().unwrap(), id);
    }
    assert!("dance".parse::<ScenarioId>().is_err());
}

#[test]
fn metrics_file_round_trip() {
    let mut cfg = ScenarioConfig::new(ScenarioId::Tally, 3);
    cfg.params.tally.loops = 1;
    let report = run(&cfg).unwrap();
    assert_eq!(report.sim.loops.len(), 1);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.json");
    report.write(&path).unwrap();
    assert_eq!(MetricsReport::read(&path).unwrap(), report);
    assert!(!report.sim_json().contains("wall_time"));
}

#[test]
fn final_metrics_are_published() {
    let bus = Bus::new();
    let sub = bus.subscribe("metrics").unwrap();
    let report = run_on(&ScenarioConfig::new(ScenarioId::Wholebody, 4), bus).unwrap();
    let env = sub.drain().pop().unwrap();
    assert_eq!(env.kind, MessageKind::Publish);
    let got: MetricsReport = serde_json::from_slice(&env.payload).unwrap();
    assert_eq!(got.sim, report.sim);
}

#[test]
fn invalid_configuration_is_rejected() {
    let mut cfg = ScenarioConfig::new(ScenarioId::Obstacle, 1);
    cfg.params.tally.loops = 0;
    assert!(run(&cfg).is_err());
    let mut cfg = ScenarioConfig::new(ScenarioId::Obstacle, 1);
    cfg.scene.points.remove("GOAL");
    assert!(run(&cfg).is_err());
}
