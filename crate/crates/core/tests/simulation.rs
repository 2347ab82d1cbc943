//! End-to-end runs, output files and the controllability report.

use emff_core::magnetics::{averaged_wrench, stack_wrenches, DipoleModel};
use emff_core::scenario::{InitialSpec, Scenario};
use emff_core::sim::{
    report_controllability, run, simulate, trajectory_csv, RunOptions, SampleOutcome, TRAJECTORY_SCHEMA,
};
use emff_core::{DVec, Mat3};

const DIPOLE_SLOTS: &str = include_str!("../scenarios/dipole_slots.toml");

fn short(duration: f64) -> RunOptions {
    RunOptions { duration: Some(duration), ..RunOptions::default() }
}

#[test]
fn starting_at_the_target_stays_there() {
    let mut sc = Scenario::paper_fig123();
    let dim = sc.swarm.dim_q();
    sc.initial = InitialSpec::Explicit { q: sc.controller.target.clone(), zeta: DVec::zeros(dim) };
    let out = simulate(&sc, &short(2.0)).unwrap();
    assert!(out.records.iter().all(|r| r.error_norm <= 1e-9));
    assert_eq!(out.summary.error_ratio(), 0.0);
}

#[test]
fn stride_keeps_first_and_last_step() {
    let mut sc = Scenario::paper_fig123();
    sc.run.output_stride = 7;
    let out = simulate(&sc, &RunOptions { duration: Some(0.1), dt: Some(1e-3), ..RunOptions::default() }).unwrap();
    assert_eq!(out.records[0].t, 0.0);
    let last = out.records.last().unwrap();
    assert!((last.t - 0.1).abs() <= 0.5e-3, "{}", last.t);
    // 0, 7, ..., 98 and the final step 100.
    assert_eq!(out.records.len(), 16);
}

#[test]
fn runs_are_reproducible_and_seed_dependent() {
    let sc = Scenario::paper_fig123();
    let csv = |seed| {
        let o = RunOptions { seed: Some(seed), duration: Some(0.5), ..RunOptions::default() };
        trajectory_csv(&sc.swarm, &simulate(&sc, &o).unwrap().records)
    };
    let a = csv(3);
    assert_eq!(a, csv(3));
    assert_ne!(a, csv(4));
    assert!(a.starts_with(TRAJECTORY_SCHEMA));
}

#[test]
fn run_writes_expected_files() {
    let dir = tempfile::tempdir().unwrap();
    let sc = Scenario::paper_fig123();
    let opts = RunOptions { out_dir: Some(dir.path().to_path_buf()), ..short(0.2) };
    let (summary, files) = run(&sc, &opts).unwrap();
    assert_eq!(summary.steps, 200);
    for name in ["trajectory.csv", "summary.txt", "fig1_relative_positions.csv", "fig2_attitudes.csv", "fig3_positions.csv"] {
        assert!(dir.path().join(name).is_file(), "{name}");
    }
    assert!(files.allocation.is_none());
    let text = std::fs::read_to_string(files.summary).unwrap();
    assert!(text.contains("final_error_norm"));
}

#[test]
fn dipole_mode_realizes_the_commanded_wrench() {
    let sc = Scenario::from_toml(DIPOLE_SLOTS).unwrap();
    let out = simulate(&sc, &short(0.2)).unwrap();
    assert!(!out.allocations.is_empty());
    let model = DipoleModel::from_config(&sc.swarm);
    for rec in &out.allocations {
        let wrenches = averaged_wrench(&model, &rec.pairs, &rec.positions).unwrap();
        // Forces are inertial, so the force block checks without attitudes.
        let realized = stack_wrenches(&sc.swarm, &wrenches, &vec![Mat3::identity(); sc.swarm.n()]);
        let np = sc.swarm.dim_pos();
        let gap = (realized.rows(0, np) - rec.commanded.rows(0, np)).norm();
        assert!(gap <= 1e-6 * rec.commanded.norm().max(1e-12) + 1e-12, "t = {}: {gap:e}", rec.t);
        assert!(rec.residual <= 1e-6);
    }
    assert!(out.summary.max_allocation_residual.unwrap() <= 1e-6);
}

#[test]
fn controllability_report_is_deterministic() {
    let sc = Scenario::paper_fig123();
    let a = report_controllability(&sc, 2, 5).unwrap();
    let b = report_controllability(&sc, 2, 5).unwrap();
    assert_eq!(a.to_text(), b.to_text());
    assert!(a.passed(), "{}", a.to_text());
    for s in &a.samples {
        match s {
            SampleOutcome::Checked { rank, .. } => assert_eq!(*rank, a.level_set_dim()),
            SampleOutcome::Skipped(n) => panic!("skipped: {n}"),
        }
    }
}

#[test]
fn co_located_sample_is_skipped() {
    let mut sc = Scenario::paper_fig123();
    sc.initial = InitialSpec::Random { seed: 0, position_radius: 0.0, mrp_radius: 0.1 };
    let r = report_controllability(&sc, 1, 1).unwrap();
    assert!(matches!(r.samples[0], SampleOutcome::Skipped(_)), "{}", r.to_text());
    assert!(!r.passed());
}
