mod common;

use common::rng;
use linoptic::fit::angle_grid;
use linoptic::runner::{
    calibrate_target_overlap, chsh_table, fringe, paper_like_sources, three_photon_scan, truth_table, Backend,
};
use linoptic::scenario::{AngleSpec, CountingSpec, SourcePreset, SourcesSpec};
use linoptic::{
    fit_fringe, run_scenario, ChshAngles, CountingConfig, DistinguishabilityConfig, Experiment, FitOptions, Frame,
    GatePreset, Mode, Scenario, SourceConfig,
};
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;

fn cos2(a: f64, phi: f64, c: f64, t: f64) -> f64 {
    a * (std::f64::consts::PI * (t - phi) / 180.0).cos().powi(2) + c
}

/// Signed distance between two phases on the 180° circle.
fn phase_gap(x: f64, y: f64) -> f64 {
    let d = (x - y).rem_euclid(180.0);
    if d > 90.0 { d - 180.0 } else { d }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn noiseless_fringes_are_recovered(a in 0.05f64..10.0, phi in 0.0f64..180.0, c in 0.0f64..5.0, points in 7usize..40) {
        let grid = angle_grid(0.0, 180.0, points);
        let y: Vec<f64> = grid.iter().map(|&t| cos2(a, phi, c, t)).collect();
        let f = fit_fringe(&grid, &y, FitOptions::default()).unwrap();
        prop_assert!((f.amplitude - a).abs() < 1e-6);
        prop_assert!((f.offset - c).abs() < 1e-6);
        prop_assert!(phase_gap(f.phase, phi).abs() < 1e-6);
        prop_assert!((f.visibility - a / (a + 2.0 * c)).abs() < 1e-6);
    }
}

#[test]
fn noisy_fit_intervals_cover_the_truth() {
    let (a, phi, c, sigma) = (1.0, 40.0, 0.3, 0.05);
    let grid = angle_grid(0.0, 180.0, 37);
    let mut covered = [0usize; 3];
    let runs = 200;
    for seed in 0..runs {
        let mut r = rng(seed);
        let y: Vec<f64> = grid.iter().map(|&t| cos2(a, phi, c, t) + sigma * r.sample::<f64, _>(StandardNormal)).collect();
        let f = fit_fringe(&grid, &y, FitOptions::default()).unwrap();
        covered[0] += ((f.amplitude - a).abs() <= 3.0 * f.stderr.amplitude) as usize;
        covered[1] += (phase_gap(f.phase, phi).abs() <= 3.0 * f.stderr.phase) as usize;
        covered[2] += ((f.offset - c).abs() <= 3.0 * f.stderr.offset) as usize;
    }
    for (name, k) in ["amplitude", "phase", "offset"].iter().zip(covered) {
        assert!(k as f64 >= 0.95 * runs as f64, "{name}: {k}/{runs}");
    }
}

#[test]
fn exact_truth_table_rows_are_distributions() {
    let counting = CountingConfig::default();
    let backends = [
        Backend::optical(SourceConfig::ideal(), GatePreset::Cnot1a).unwrap(),
        Backend::optical(paper_like_sources().unwrap(), GatePreset::Cnot1a).unwrap(),
        Backend::optical(paper_like_sources().unwrap(), GatePreset::Cnot1aFeedForward).unwrap(),
        Backend::Logical { preset: GatePreset::Cnot2a },
    ];
    for b in &backends {
        let preset = match b {
            Backend::Logical { preset } => *preset,
            Backend::Optical { branches, .. } if branches.len() == 2 => GatePreset::Cnot1aFeedForward,
            _ => GatePreset::Cnot1a,
        };
        let rep = truth_table(b, preset, Mode::Exact, &counting).unwrap();
        for row in &rep.conditional {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        }
    }
}

#[test]
fn feed_forward_doubles_ideal_success() {
    let b = Backend::optical(SourceConfig::ideal(), GatePreset::Cnot1aFeedForward).unwrap();
    let rep = truth_table(&b, GatePreset::Cnot1aFeedForward, Mode::Exact, &CountingConfig::default()).unwrap();
    assert!(rep.error_fraction.abs() < 1e-12);
    for row in &rep.cells {
        assert!((row.iter().map(|m| m.probability).sum::<f64>() - 0.25).abs() < 1e-12);
    }
}

#[test]
fn three_photon_scan_endpoints() {
    let scan = three_photon_scan(&SourceConfig::ideal(), GatePreset::Cnot1a, &[0.0, 1.0]).unwrap();
    assert!(scan.unrealizable.is_empty());
    assert!(scan.rows[0].fit.visibility.abs() < 1e-6);
    assert!((scan.rows[1].fit.visibility - 1.0).abs() < 1e-6);
}

#[test]
fn calibration_is_stable_under_refinement() {
    let base = SourceConfig::ideal();
    let coarse = calibrate_target_overlap(&base, GatePreset::Cnot1a, 0.65, 1e-3).unwrap();
    let fine = calibrate_target_overlap(&base, GatePreset::Cnot1a, 0.65, 1e-6).unwrap();
    assert!((coarse.overlap - fine.overlap).abs() < 1e-3);
    assert!((fine.visibility - 0.65).abs() < 1e-5);
    let pair = DistinguishabilityConfig::paper_like_with(1.0);
    let capped = SourceConfig { distinguishability: pair, ..SourceConfig::ideal() };
    let rep = calibrate_target_overlap(&capped, GatePreset::Cnot1a, 0.65, 1e-6).unwrap();
    assert!(rep.upper_bound < 1.0);
    assert!((rep.visibility - 0.65).abs() < 1e-5);
}

#[test]
fn unreachable_calibration_target_is_an_error() {
    let pair = DistinguishabilityConfig::ideal().with("A", "C", 0.0);
    let src = SourceConfig { distinguishability: pair, ..SourceConfig::ideal() };
    assert!(calibrate_target_overlap(&src, GatePreset::Cnot1a, 0.99, 1e-4).is_err());
}

#[test]
fn control_analyzer_selects_target_value() {
    let b = Backend::optical(SourceConfig::ideal(), GatePreset::Cnot1a).unwrap();
    let grid = angle_grid(0.0, 180.0, 13);
    let c = CountingConfig::default();
    let one = fringe(&b, Frame::Logical, 0.0, 90.0, &grid, Mode::Exact, &c, FitOptions::default()).unwrap();
    assert!(phase_gap(one.fit.phase, 90.0).abs() < 1e-6);
    let lab = fringe(&b, Frame::Physical, 45.0, 0.0, &grid, Mode::Exact, &c, FitOptions::default()).unwrap();
    assert!(phase_gap(lab.fit.phase, 45.0).abs() < 1e-6);
}

#[test]
fn chsh_rows() {
    let b = Backend::optical(SourceConfig::ideal(), GatePreset::Cnot1a).unwrap();
    let rows = chsh_table(&b, &[0.615, 0.71, 1.0 / 2f64.sqrt()], &[ChshAngles::CANONICAL]).unwrap();
    assert!((rows[0].s - 2.0 * 2f64.sqrt()).abs() < 1e-6);
    assert!((rows[1].s - 1.739).abs() < 1e-3);
    assert!(rows[1].s < 2.0);
    assert!((rows[2].s - 2.0).abs() < 1e-2);
    assert!((rows[3].s - 2.0).abs() < 1e-9);
}

fn sampled_fringe() -> Scenario {
    let mut sc = Scenario::new("sampled fringe", Experiment::Fringe);
    sc.mode = Mode::Sampled;
    sc.counting = CountingSpec { trials_per_setting: Some(20_000), detector_efficiency: Some(0.8), seed: Some(7) };
    sc.sweep.theta_t = Some(AngleSpec::List(angle_grid(0.0, 180.0, 19)));
    sc
}

#[test]
fn sampled_runs_are_byte_identical() {
    let render = |sc: &Scenario| {
        let out = run_scenario(sc).unwrap();
        let mut csv = Vec::new();
        out.write_csv(&mut csv).unwrap();
        let mut json = Vec::new();
        out.write_json(&mut json).unwrap();
        (csv, json)
    };
    let sc = sampled_fringe();
    let first = render(&sc);
    assert_eq!(first, render(&sc));
    let reloaded = Scenario::from_json(&sc.to_json().unwrap()).unwrap();
    assert_eq!(first, render(&reloaded));
    let mut other = sc.clone();
    other.counting.seed = Some(8);
    assert_ne!(first.0, render(&other).0);
}

#[test]
fn every_experiment_runs_with_ideal_sources() {
    for experiment in
        [Experiment::TruthTable, Experiment::Fringe, Experiment::Hom, Experiment::ThreePhotonScan, Experiment::Chsh]
    {
        let mut sc = Scenario::new(experiment.name(), experiment);
        sc.sources = Some(SourcesSpec::Preset(SourcePreset::Ideal));
        sc.sweep.overlaps = Some(vec![0.0, 0.5, 1.0]);
        let out = run_scenario(&sc).unwrap();
        assert!(out.invariants_hold(), "{}: {:?}", experiment.name(), out.invariants);
        assert!(!out.table.rows.is_empty());
    }
}

#[test]
fn logical_presets_run_through_scenarios() {
    for preset in [GatePreset::Cnot2a, GatePreset::Cnot1aFeedForward] {
        let mut sc = Scenario::new("tt", Experiment::TruthTable);
        sc.preset = Some(preset);
        sc.sources = Some(SourcesSpec::Preset(SourcePreset::Ideal));
        let out = run_scenario(&sc).unwrap();
        assert!(out.invariants_hold());
        assert!(out.summary["error_fraction"].as_f64().unwrap().abs() < 1e-12);
    }
    let mut sc = Scenario::new("enc", Experiment::TruthTable);
    sc.preset = Some(GatePreset::Encoder);
    sc.sources = Some(SourcesSpec::Preset(SourcePreset::Ideal));
    assert!(run_scenario(&sc).is_err());
}
