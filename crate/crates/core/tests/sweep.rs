use std::sync::{Arc, OnceLock};

use sbp_core::constants::{estimate_constants, EstimateConfig, ThresholdConstants};
use sbp_core::field::{make_grid, GridScheme, ModelParams, RadialField, RadialGrid};
use sbp_core::sweep::{
    check_scaling_paths, check_signs, check_subadditivity, dyadic_grid, sweep_mass, SweepConfig, SweepReport,
    Verdict, CSV_HEADER,
};
use sbp_core::verify::BETA_SET;
use sbp_core::Error;

struct Fixture {
    grid: Arc<RadialGrid>,
    consts: ThresholdConstants,
    base: ModelParams,
    warm: SweepReport,
    cold: SweepReport,
}

fn fixture() -> &'static Fixture {
    static CELL: OnceLock<Fixture> = OnceLock::new();
    CELL.get_or_init(|| {
        let consts = estimate_constants(1.0, 2.5, &EstimateConfig::default()).unwrap();
        let grid = make_grid(2048, 160.0, GridScheme::Graded).unwrap();
        let base = ModelParams::new(1.0, 2.5, consts.c0 / 2.0).unwrap();
        let masses = dyadic_grid(consts.c0, 3);
        let cfg = SweepConfig { n_starts: 4, ..Default::default() };
        let warm = sweep_mass(&masses, &base, &grid, &consts, &cfg).unwrap();
        let cold = sweep_mass(&masses, &base, &grid, &consts, &SweepConfig { warm_start: false, ..cfg }).unwrap();
        Fixture { grid, consts, base, warm, cold }
    })
}

#[test]
fn dyadic_grid_halves_down_from_c0() {
    let g = dyadic_grid(8.0, 3);
    assert_eq!(g, vec![1.0, 2.0, 4.0]);
}

#[test]
fn levels_are_negative_and_checks_pass() {
    let f = fixture();
    assert_eq!(f.warm.records.len(), 3);
    assert!(f.warm.records.iter().all(|r| r.converged && r.m_est < 0.0));
    assert!(f.warm.passed());
    assert!(f.warm.checks.iter().any(|c| c.name.starts_with("subadditivity")));
    assert!(f.warm.checks.iter().any(|c| c.name.starts_with("ratio_decrease")));
}

#[test]
fn warm_start_never_raises_the_level() {
    let f = fixture();
    for (w, c) in f.warm.records.iter().zip(&f.cold.records) {
        assert!(w.m_est <= c.m_est + 1e-12, "c={} warm={} cold={}", w.c, w.m_est, c.m_est);
    }
}

#[test]
fn level_is_continuous_in_mass() {
    let f = fixture();
    let r = &f.warm.records[2];
    let eps = 1e-3 * r.c;
    let probe = sweep_mass(
        &[r.c - eps, r.c, r.c + eps],
        &f.base,
        &f.grid,
        &f.consts,
        &SweepConfig { n_starts: 4, ..Default::default() },
    )
    .unwrap();
    let m: Vec<f64> = probe.records.iter().map(|r| r.m_est).collect();
    assert!((m[0] - m[1]).abs() < 1e-2 * m[1].abs());
    assert!((m[2] - m[1]).abs() < 1e-2 * m[1].abs());
    assert!(m[2] < m[1] && m[1] < m[0]);
}

#[test]
fn csv_has_fixed_header_and_one_row_per_mass() {
    let f = fixture();
    let csv = f.warm.to_csv();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some(CSV_HEADER));
    assert_eq!(lines.count(), 3);
    let json: serde_json::Value = serde_json::from_str(&f.warm.to_json().unwrap()).unwrap();
    assert_eq!(json["records"].as_array().unwrap().len(), 3);
}

#[test]
fn bad_mass_grids_are_rejected() {
    let f = fixture();
    let cfg = SweepConfig::default();
    let run = |masses: &[f64]| sweep_mass(masses, &f.base, &f.grid, &f.consts, &cfg);
    assert!(matches!(run(&[]), Err(Error::InvalidParams(_))));
    assert!(matches!(run(&[0.1, 0.2]), Err(Error::InvalidParams(_))));
    assert!(matches!(run(&[0.3, 0.2, 0.4]), Err(Error::InvalidParams(_))));
    assert!(matches!(run(&[0.1, 0.2, f.consts.c0]), Err(Error::Precondition(_))));
}

#[test]
fn positive_level_fails_sign_check() {
    let f = fixture();
    let mut report = f.warm.clone();
    report.records[0].m_est = 1e-3;
    let checks = check_signs(&report, f.consts.c0);
    assert_eq!(checks.iter().filter(|c| c.verdict == Verdict::Fail).count(), 1);
}

#[test]
fn superadditive_curve_fails_subadditivity() {
    let f = fixture();
    let mut report = f.warm.clone();
    for r in &mut report.records {
        r.m_est = -r.m_est;
        r.noise = 0.0;
    }
    let checks = check_subadditivity(&report, 1e-6);
    assert!(checks.iter().any(|c| c.verdict == Verdict::Fail));
}

#[test]
fn scaling_paths_on_minimizer() {
    let f = fixture();
    let u = f.warm.fields[2].as_ref().unwrap();
    let params = f.base.with_mass(f.warm.records[2].c).unwrap();
    let checks = check_scaling_paths(u, &params, &BETA_SET).unwrap();
    assert!(checks.iter().all(|c| c.verdict != Verdict::Fail));
    let affinity = checks.iter().find(|c| c.name == "path_affinity").unwrap();
    assert!(affinity.value <= 1e-10);
}

#[test]
fn scaling_paths_reject_zero_field() {
    let f = fixture();
    let zero = RadialField::zeros(f.grid.clone());
    assert!(matches!(check_scaling_paths(&zero, &f.base, &BETA_SET), Err(Error::Precondition(_))));
}
