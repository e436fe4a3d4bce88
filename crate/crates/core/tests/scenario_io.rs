//! Scenario files, presets, CSV telemetry, summaries and sweeps end to end.

use proptest::prelude::*;

use antago_core::diagnostics::diagnostics;
use antago_core::presets::{export_presets, list_presets, load_preset, preset_text};
use antago_core::scenario::{parse, serialize, set_param};
use antago_core::simulation::{simulate, ForceModel, SetpointChange};
use antago_core::solver::Method;
use antago_core::sweep::{sweep, RunStatus};
use antago_core::telemetry::{read_csv, summary_toml, to_csv_string};
use antago_core::Error;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn serialized_scenarios_parse_back_exactly(
        k_p in 0.1..10.0f64,
        alpha in 0.5..15.0f64,
        rel_tol in 1e-12..1e-4f64,
        x_star in -3e-3..3e-3f64,
        step in prop::option::of((0.1..20.0f64, -3e-3..3e-3f64)),
        f_hat in prop::option::of(-1.0..1.0f64),
        spring in -50.0..50.0f64,
        rk4 in any::<bool>(),
    ) {
        let mut s = load_preset("fig2-F2", None).unwrap();
        set_param(&mut s, "k_p", k_p).unwrap();
        set_param(&mut s, "alpha", alpha).unwrap();
        set_param(&mut s, "rel_tol", rel_tol).unwrap();
        set_param(&mut s, "x_star", x_star).unwrap();
        set_param(&mut s, "k", spring).unwrap();
        if let Some((time, x)) = step {
            s.schedule.push(SetpointChange { time, x_star: x });
        }
        s.initial.f_hat = f_hat;
        if rk4 {
            s.solver.method = Method::Rk4;
        }
        let text = serialize(&s);
        let back = parse(&text).unwrap();
        prop_assert_eq!(&back, &s);
        prop_assert_eq!(serialize(&back), text);
    }
}

#[test]
fn presets_round_trip_through_serialize() {
    for name in list_presets(None).unwrap() {
        let s = load_preset(&name, None).unwrap();
        assert_eq!(parse(&serialize(&s)).unwrap(), s, "{name}");
    }
}

#[test]
fn preset_files_document_every_value() {
    for name in list_presets(None).unwrap() {
        let text = preset_text(&name, None).unwrap();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with('[') {
                continue;
            }
            assert!(
                line.contains("published value") || line.contains("tooling default") || line.contains("implied by"),
                "{name}: undocumented line `{line}`"
            );
        }
    }
}

#[test]
fn preset_directory_replaces_builtins() {
    let dir = tempfile::tempdir().unwrap();
    let paths = export_presets(dir.path()).unwrap();
    assert_eq!(paths.len(), list_presets(None).unwrap().len());
    std::fs::write(dir.path().join("notes.txt"), "ignored").unwrap();
    assert_eq!(list_presets(Some(dir.path())).unwrap(), list_presets(None).unwrap());
    assert_eq!(
        load_preset("fig2-F3", Some(dir.path())).unwrap(),
        load_preset("fig2-F3", None).unwrap()
    );
    assert!(matches!(load_preset("../fig2-F3", Some(dir.path())), Err(Error::UnknownPreset(_))));

    std::fs::write(dir.path().join("broken.toml"), "[plant]\nL0 = 0.03\nLO = 1\n").unwrap();
    let err = load_preset("broken", Some(dir.path())).unwrap_err().to_string();
    assert!(err.contains("line 3") && err.contains("preset `broken`"), "{err}");
}

#[test]
fn simulated_csv_round_trips_and_is_stable() {
    let s = load_preset("setpoint-steps", None).unwrap();
    let rec = simulate(&s).unwrap().record;
    let text = to_csv_string(&rec).unwrap();
    assert!(!text.contains('\r'));
    let width = text.lines().next().unwrap().split(',').count();
    assert!(text.lines().all(|l| l.split(',').count() == width));
    let back = read_csv(text.as_bytes()).unwrap();
    assert_eq!(back, rec);
    assert_eq!(to_csv_string(&simulate(&s).unwrap().record).unwrap(), text);
}

#[test]
fn setpoint_steps_follow_the_schedule() {
    let s = load_preset("setpoint-steps", None).unwrap();
    let rec = simulate(&s).unwrap().record;
    for (t, target) in [(4.99, 1e-3), (9.99, -1e-3), (15.0, 5e-4)] {
        let x = rec.position_at(t).unwrap();
        // Within the 2% settle band of the 2 mm step.
        assert!((x - target).abs() < 4e-5, "x({t}) = {x}, target {target}");
    }
    let d = diagnostics(&rec, &s.gains, &s.params).unwrap();
    assert_eq!(d.x_star, 5e-4);
    assert!(d.max_psi_increment > 0.0, "setpoint changes reset Psi upward");
}

#[test]
fn summary_is_valid_toml_without_missing_fields() {
    let mut s = load_preset("fig2-F1", None).unwrap();
    s.duration = 0.05;
    let out = simulate(&s).unwrap();
    let d = diagnostics(&out.record, &s.gains, &s.params).unwrap();
    assert!(d.settle_time.is_none());
    let text = summary_toml(&d, &out.stability);
    let value: toml::Table = text.parse().unwrap();
    let diag = value["diagnostics"].as_table().unwrap();
    assert!(!diag.contains_key("settle_time"));
    assert_eq!(diag["samples"].as_integer(), Some(d.samples as i64));
    let stab = value["stability"].as_table().unwrap();
    assert_eq!(stab["theta"].as_array().unwrap().len(), 3);
    assert_eq!(stab["condition_product"].as_float(), Some(out.stability.condition_product));
}

#[test]
fn single_value_sweep_equals_run() {
    let base = load_preset("fig2-F3", None).unwrap();
    let rows = sweep(&base, "alpha", &[10.0], true).unwrap();
    let d = diagnostics(&simulate(&base).unwrap().record, &base.gains, &base.params).unwrap();
    let row = &rows[0];
    assert_eq!(row.status, RunStatus::Ok);
    assert_eq!(row.final_x, Some(d.final_x));
    assert_eq!(row.final_f_tilde, Some(d.final_f_tilde));
    assert_eq!(row.max_psi_increment, Some(d.max_psi_increment));
    assert_eq!(row.settle_time, d.settle_time);
}

#[test]
fn epsilon_sweep_flips_at_the_quadratic_bound() {
    let base = load_preset("fig2-F2", None).unwrap();
    let report = base.stability().unwrap();
    let eps_star = (2.0 * report.condition_product.sqrt() - 1.0) / base.gains.k_m;
    let rows = sweep(&base, "epsilon", &[0.0, eps_star * 0.999, eps_star * 1.001, 20.0], false).unwrap();
    let valid: Vec<_> = rows.iter().map(|r| r.valid).collect();
    assert_eq!(valid, [Some(true), Some(true), Some(false), Some(false)]);
}

#[test]
fn failed_runs_keep_partial_diagnostics() {
    let base = load_preset("constant-force", None).unwrap();
    let rows = sweep(&base, "F0", &[0.01, 0.1], true).unwrap();
    assert_eq!(rows[0].status, RunStatus::Ok);
    assert_eq!(rows[1].status, RunStatus::DomainExit);
    assert!(rows[1].final_x.is_some());
    assert!(rows[1].message.contains("admissible"));
    assert!(matches!(base.force, ForceModel::Constant(_)));
}
