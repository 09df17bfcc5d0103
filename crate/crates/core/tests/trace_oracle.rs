//! Online session log against metrics recomputed from the run's own traces.

use vrabr::config::ScenarioConfig;
use vrabr::presets;
use vrabr::sim::run_scenario_traced;
use vrabr::trace::{compare, metrics_from_trace, parse_trace, CapturePoint, Tolerances, ValidationReport};

fn validate(mut cfg: ScenarioConfig, dl_point: CapturePoint) -> ValidationReport {
    cfg.capture.points = vec![CapturePoint::ServerEgress, dl_point];
    let (mut server, mut dl) = (Vec::new(), Vec::new());
    let out = run_scenario_traced(
        &cfg,
        vec![(CapturePoint::ServerEgress, &mut server), (dl_point, &mut dl)],
    )
    .unwrap();
    let server = parse_trace(std::str::from_utf8(&server).unwrap()).unwrap();
    let dl = parse_trace(std::str::from_utf8(&dl).unwrap()).unwrap();
    assert!(server.warnings.is_empty() && dl.warnings.is_empty());
    let tm = metrics_from_trace(&dl, Some(&server), &cfg.metrics);
    compare(&out.log, Some(&out.run_id), &tm, &Tolerances::default()).unwrap()
}

fn short(name: &str, seconds: f64) -> ScenarioConfig {
    let mut cfg = presets::find(name).unwrap().config;
    cfg.duration_s = seconds;
    cfg
}

#[test]
fn client_ingress_matches_log_under_loss() {
    let r = validate(short("loss_tbl4", 35.0), CapturePoint::ClientIngress);
    assert!(r.pass, "{}", r.render_text());
    assert!(r.caveat.is_none());
    assert!(r.frames_matched > 2_500);
    for m in &r.metrics {
        if m.metric == "fowd" {
            assert!(m.max_abs_diff.unwrap() < 1e-3);
        }
    }
    let lost = r.metrics.iter().find(|m| m.metric == "packets_lost_interval").unwrap();
    assert_eq!(lost.max_abs_diff, Some(0.0));
}

#[test]
fn client_ingress_matches_log_under_jitter_and_duplication() {
    for name in ["jitter_tbl4", "duplication_tbl4"] {
        let r = validate(short(name, 35.0), CapturePoint::ClientIngress);
        assert!(r.pass, "{name}\n{}", r.render_text());
    }
}

#[test]
fn path_egress_differs_by_last_hop() {
    let mut cfg = short("bandwidth_tbl4", 5.0);
    cfg.path.effects.clear();
    let r = validate(cfg, CapturePoint::PathEgress);
    assert!(r.caveat.is_some());
    let span = r.metrics.iter().find(|m| m.metric == "frame_span").unwrap();
    assert!(span.max_abs_diff.unwrap() > 0.0);
    assert!(!span.pass);
}
