use super::config::RunConfig;
use super::pipeline::{execute, run_pipeline, Stages};
use super::plotdata::{emit_plotdata, read_plotdata, PlotData};
use super::study::{convergence_study, refine_config};
use crate::stress::{Apex, ConeConfig};
use crate::wave::DataKind;

fn bump_config(n: usize, amplitude: f64) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.grid.n = n;
    cfg.wave.t_final = 0.3;
    cfg.wave.data.kind = DataKind::GeodesicBump;
    cfg.wave.data.amplitude = amplitude;
    cfg.wave.data.width = 0.47;
    cfg.wave.data.centers = vec![[0.48, 0.49]];
    cfg.wave.data.mirror = true;
    cfg.gauge.times = vec![0.0, 0.15];
    cfg.diagnostics.cones =
        vec![ConeConfig { apex: Apex { t: 0.32, x: [0.5, 0.5] }, depth: 0.035, lambda: 8.0, epsilon: 1.0, tolerance: 1e-10 }];
    cfg
}

#[test]
fn constant_data_gives_zero_residuals_and_energies() {
    let cfg = bump_config(16, 0.0);
    let out = execute(&cfg, Stages::ALL).unwrap();
    let r = &out.report;
    assert!(r.energy.energies.iter().all(|&e| e == 0.0));
    assert_eq!(r.slices.len(), 2);
    for s in &r.slices {
        for e in &s.reconstruction.entries {
            if e.identity != "eps-stop" {
                assert_eq!(e.value, 0.0, "{} {}", e.identity, e.norm);
            }
        }
        assert!(s.ladder.sup_gradient.iter().all(|&g| g == 0.0));
    }
    let c = &r.cones[0];
    assert!(c.energies.iter().all(|&(_, e)| e == 0.0));
    assert_eq!(c.window.flux, 0.0);
    assert_eq!(r.stress.as_ref().unwrap().divergence_max, 0.0);
    assert!(r.passed(), "{:?}", r.checks.iter().filter(|c| !c.pass).collect::<Vec<_>>());
}

#[test]
fn bump_run_passes_every_check_and_writes_outputs() {
    let cfg = bump_config(64, 1.0);
    let dir = tempfile::tempdir().unwrap();
    let report = run_pipeline(&cfg, Stages::ALL, dir.path()).unwrap();
    let failed: Vec<_> = report.checks.iter().filter(|c| !c.pass).collect();
    assert!(failed.is_empty(), "{failed:?}");
    assert!(report.checks.len() >= 10);
    for name in ["report.json", "timing.json", "energy.csv", "residuals.csv", "cone_energy.csv"] {
        assert!(dir.path().join(name).exists(), "{name}");
    }
    let snaps = dir.path().join("snapshots");
    assert!(snaps.join("phi_00000.cwm").exists());
    assert!(snaps.join(format!("phi_{:05}.cwm", report.steps)).exists());
    assert!(snaps.join("psi0_00000.cwm").exists());
    let text = std::fs::read_to_string(dir.path().join("report.json")).unwrap();
    let back: super::RunReport = serde_json::from_str(&text).unwrap();
    assert_eq!(back, report);
    assert_eq!(read_plotdata(dir.path()).unwrap(), PlotData::from_report(&report));
}

#[test]
fn reports_are_bit_identical_across_worker_counts() {
    let cfg = bump_config(32, 1.0);
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| execute(&cfg, Stages::ALL).unwrap().report)
    };
    let one = serde_json::to_string(&run(1)).unwrap();
    let eight = serde_json::to_string(&run(8)).unwrap();
    assert_eq!(one, eight);
    assert_eq!(one, serde_json::to_string(&run(1)).unwrap());
}

#[test]
fn empty_report_gives_header_only_files() {
    let cfg = bump_config(16, 1.0);
    let mut report = execute(&cfg, Stages::SIMULATE).unwrap().report;
    report.energy.times.clear();
    report.energy.energies.clear();
    let dir = tempfile::tempdir().unwrap();
    let data = emit_plotdata(&report, dir.path()).unwrap();
    assert_eq!(data, PlotData::default());
    for name in ["energy.csv", "sup_gradient.csv", "residuals.csv", "cone_energy.csv", "scaled_decay.csv"] {
        let text = std::fs::read_to_string(dir.path().join(name)).unwrap();
        assert_eq!(text.lines().count(), 1, "{name}");
    }
    assert_eq!(read_plotdata(dir.path()).unwrap(), PlotData::default());
}

#[test]
fn plot_series_match_the_report_arrays() {
    let cfg = bump_config(16, 0.5);
    let report = execute(&cfg, Stages::ALL).unwrap().report;
    let dir = tempfile::tempdir().unwrap();
    let data = emit_plotdata(&report, dir.path()).unwrap();
    assert_eq!(data.energy.len(), report.energy.times.len());
    let levels: usize = report.slices.iter().map(|s| s.ladder.s_levels.len()).sum();
    assert_eq!(data.sup_gradient.len(), levels);
    let entries: usize = report.slices.iter().map(|s| s.reconstruction.entries.len()).sum();
    assert_eq!(data.residuals.len(), entries);
    assert_eq!(data.cone_energy.len(), report.cones[0].energies.len());
    assert_eq!(data.scaled_decay.len(), report.cones[0].self_similarity.blocks.len());
    assert!(data.residuals.iter().any(|r| r.identity.contains(',')));
    let back = read_plotdata(dir.path()).unwrap();
    assert_eq!(back, data);
    for (row, (&t, &e)) in back.energy.iter().zip(report.energy.times.iter().zip(&report.energy.energies)) {
        assert_eq!((row.t.to_bits(), row.energy.to_bits()), (t.to_bits(), e.to_bits()));
    }
}

#[test]
fn refinement_halves_every_step() {
    let mut cfg = bump_config(16, 1.0);
    cfg.wave.dt = Some(0.02);
    cfg.heat.ds0 = Some(1e-3);
    let c = refine_config(&cfg, 2);
    assert_eq!(c.grid.n, 64);
    assert_eq!(c.wave.dt, Some(0.005));
    assert_eq!(c.heat.ds0, Some(1e-3 / 16.0));
    assert_eq!(c.grid.grid().unwrap().extent(), cfg.grid.grid().unwrap().extent());
}

#[test]
fn study_needs_two_levels() {
    let err = convergence_study(&bump_config(16, 1.0), 1).unwrap_err();
    assert!(err.to_string().contains("study.levels"));
}

#[test]
fn study_measures_second_order_energy_drift() {
    let mut cfg = bump_config(32, 1.0);
    cfg.gauge.times.clear();
    let table = convergence_study(&cfg, 3).unwrap();
    assert_eq!(table.n, vec![32, 64, 128]);
    let drift = table.row("energy-drift").unwrap();
    assert!(drift.last_rate().unwrap() >= 1.8, "{drift:?}");
    let defect = table.row("energy-identity-defect").unwrap();
    assert!(defect.last_rate().unwrap() >= 1.8, "{defect:?}");
    assert!(table.row("curvature-identity").is_none());
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("study.csv");
    table.write_csv(&path).unwrap();
    let text = std::fs::read_to_string(path).unwrap();
    assert_eq!(text.lines().count(), 1 + 3 * table.rows.len());
}
