//! simulate → heat ladders → caloric gauge → residual suites → cone diagnostics.

use std::fs;
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use crate::error::{Error, Result};
use crate::gauge::{
    build_report, curvature_fields, gauge_transform, pointwise_norm, CaloricSlice, GaugeFieldSet, GaugeRotation,
    ReconstructionReport, TimeStencil,
};
use crate::grid::{Field, FieldKind};
use crate::heat::{build_ladder, build_ladder_like, LadderManifest};
use crate::linalg;
use crate::snapshot::Snapshot;
use crate::stress::{cone_report, divergence_residual, ConeReport, StressHistory};
use crate::wave::{self, evolve, make_initial_data, Trajectory};

/// Which stages run after the wave evolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Stages {
    pub gauge: bool,
    pub cones: bool,
}

impl Stages {
    pub const SIMULATE: Stages = Stages { gauge: false, cones: false };
    pub const GAUGE: Stages = Stages { gauge: true, cones: false };
    pub const ALL: Stages = Stages { gauge: true, cones: true };
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergySeries {
    pub times: Vec<f64>,
    pub energies: Vec<f64>,
    pub relative_drift: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SliceReport {
    pub t: f64,
    pub snapshot: usize,
    pub ladder: LadderManifest,
    pub worst_gradient_increase: f64,
    pub worst_energy_increase: f64,
    /// Largest `|A + Aᵀ|` over all levels.
    pub skew_defect: f64,
    /// Largest change of `|ψ_α|` and `|F_αβ|` under random constant rotations, relative to their size.
    pub rotation_defect: f64,
    pub reconstruction: ReconstructionReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StressSummary {
    /// `max_t |∫T_00 - E|`.
    pub energy_mismatch: f64,
    pub divergence: Vec<[f64; 3]>,
    pub divergence_times: Vec<f64>,
    pub divergence_max: f64,
}

/// A named quantity compared against its acceptance threshold.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: RunConfig,
    pub version: String,
    pub n: usize,
    pub h: f64,
    pub dt: f64,
    pub steps: usize,
    pub energy: EnergySeries,
    pub slices: Vec<SliceReport>,
    pub stress: Option<StressSummary>,
    pub cones: Vec<ConeReport>,
    pub checks: Vec<Check>,
}

impl RunReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    fn push_check(&mut self, name: impl Into<String>, value: f64, threshold: f64) {
        self.checks.push(Check { name: name.into(), value, threshold, pass: value <= threshold });
    }
}

/// Wall-clock seconds per stage, kept out of the report so that reports stay reproducible.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub stages: Vec<(String, f64)>,
}

/// The evolved trajectory and everything derived from it.
pub struct PipelineOutput {
    pub report: RunReport,
    pub trajectory: Trajectory,
    pub slices: Vec<CaloricSlice>,
    pub timing: Timing,
}

fn sup_abs(x: &[f64]) -> f64 {
    x.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

fn skew_defect(fields: &GaugeFieldSet) -> f64 {
    let m = fields.m();
    let mut worst = 0.0f64;
    for lv in &fields.levels {
        for a in lv.a.iter().chain(&lv.dt_a) {
            for block in a.chunks(m * m) {
                for i in 0..m {
                    for j in 0..m {
                        worst = worst.max((block[i * m + j] + block[j * m + i]).abs());
                    }
                }
            }
        }
    }
    worst
}

fn random_rotation(m: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut gen = vec![0.0; m * m];
    for i in 0..m {
        for j in i + 1..m {
            let v: f64 = rng.gen_range(-3.0..3.0);
            gen[i * m + j] = v;
            gen[j * m + i] = -v;
        }
    }
    linalg::expm(m, &gen)
}

fn rotation_defect(slice: &CaloricSlice, count: usize, rng: &mut ChaCha8Rng) -> Result<f64> {
    let fields = &slice.fields;
    let m = fields.m();
    let norms = |f: &GaugeFieldSet| -> Vec<Vec<f64>> {
        let lv = &f.levels[0];
        let mut out: Vec<Vec<f64>> = lv.psi.iter().map(|p| pointwise_norm(p, m)).collect();
        out.extend(curvature_fields(f, 0).iter().map(|c| pointwise_norm(c, m * m)));
        out
    };
    let before = norms(fields);
    let scale = before.iter().map(|v| sup_abs(v)).fold(0.0, f64::max).max(1.0);
    let mut worst = 0.0f64;
    for _ in 0..count {
        let rot = GaugeRotation::constant(&fields.grid, m, &random_rotation(m, rng))?;
        let (rotated, _) = gauge_transform(fields, &slice.frames, &rot)?;
        for (a, b) in before.iter().zip(norms(&rotated)) {
            for (x, y) in a.iter().zip(&b) {
                worst = worst.max((x - y).abs() / scale);
            }
        }
    }
    Ok(worst)
}

fn nearest(times: &[f64], t: f64) -> usize {
    let mut best = 0;
    for (k, s) in times.iter().enumerate() {
        if (s - t).abs() < (times[best] - t).abs() {
            best = k;
        }
    }
    best
}

/// Runs the configured stages in memory.
pub fn execute(cfg: &RunConfig, stages: Stages) -> Result<PipelineOutput> {
    cfg.validate()?;
    let mut timing = Timing::default();
    let mut clock = Instant::now();
    let mut lap = |name: &str, timing: &mut Timing| {
        timing.stages.push((name.to_string(), clock.elapsed().as_secs_f64()));
        clock = Instant::now();
    };

    let grid = cfg.grid.grid()?;
    let state = make_initial_data(&cfg.wave.data, grid, cfg.target, 0.0).map_err(Error::at_stage("initial-data"))?;
    let trajectory = evolve(&state, cfg.wave.t_final, cfg.wave.dt(&grid), 1).map_err(Error::at_stage("wave"))?;
    lap("wave", &mut timing);

    let mut report = RunReport {
        config: cfg.clone(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        n: grid.n,
        h: grid.h,
        dt: trajectory.dt,
        steps: trajectory.snapshots.len() - 1,
        energy: EnergySeries {
            times: trajectory.times.clone(),
            energies: trajectory.energies.clone(),
            relative_drift: trajectory.relative_drift(),
        },
        slices: Vec::new(),
        stress: None,
        cones: Vec::new(),
        checks: Vec::new(),
    };

    let mut slices = Vec::new();
    if stages.gauge {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let recon = cfg.gauge.recon();
        let tol = cfg.diagnostics.monotone_tolerance;
        for &t in &cfg.gauge.times {
            let k = nearest(&trajectory.times, t);
            let snap = &trajectory.snapshots[k];
            let ladder = build_ladder(snap, &cfg.heat).map_err(Error::at_stage("heat"))?;
            let (gradient_rise, energy_rise) = (ladder.worst_gradient_increase(), ladder.worst_energy_increase());
            let (gradient_scale, energy_scale) = (ladder.sup_gradient[0].max(1.0), ladder.dirichlet[0].max(1.0));
            let neighbours = if k > 0 && k + 1 < trajectory.snapshots.len() {
                let prev = build_ladder_like(&trajectory.snapshots[k - 1], &ladder).map_err(Error::at_stage("heat"))?;
                let next = build_ladder_like(&trajectory.snapshots[k + 1], &ladder).map_err(Error::at_stage("heat"))?;
                Some((
                    CaloricSlice::new(prev).map_err(Error::at_stage("gauge"))?,
                    CaloricSlice::new(next).map_err(Error::at_stage("gauge"))?,
                ))
            } else {
                None
            };
            let slice = CaloricSlice::new(ladder).map_err(Error::at_stage("gauge"))?;
            let stencil = match &neighbours {
                Some((prev, next)) => Some(TimeStencil::new(&prev.fields, &slice.fields, &next.fields, trajectory.dt)?),
                None => None,
            };
            let reconstruction = build_report(&slice.fields, &slice.frames, &slice.ladder.phi[0], stencil.as_ref(), &recon)
                .map_err(Error::at_stage("reconstruction"))?;
            let rotation = rotation_defect(&slice, cfg.gauge.random_rotations, &mut rng)?;
            let skew = skew_defect(&slice.fields);
            let tag = format!("t={:.6}", trajectory.times[k]);
            report.push_check(format!("heat-sup-gradient-monotone {tag}"), gradient_rise, tol * gradient_scale);
            report.push_check(format!("heat-dirichlet-monotone {tag}"), energy_rise, tol * energy_scale);
            report.push_check(format!("gauge-skew {tag}"), skew, 0.0);
            report.push_check(format!("gauge-rotation-invariance {tag}"), rotation, 1e-12);
            let eps = slice.fields.eps_stop;
            if let Some(v) = reconstruction.value("psi-at-s-max", "sup") {
                report.push_check(format!("psi-at-s-max {tag}"), v, 10.0 * eps);
            }
            report.slices.push(SliceReport {
                t: trajectory.times[k],
                snapshot: k,
                ladder: slice.ladder.manifest(),
                worst_gradient_increase: gradient_rise,
                worst_energy_increase: energy_rise,
                skew_defect: skew,
                rotation_defect: rotation,
                reconstruction,
            });
            slices.push(slice);
        }
        lap("gauge", &mut timing);
    }

    if stages.cones {
        let history = StressHistory::from_trajectory(&trajectory)?;
        let energy_mismatch = history
            .fields
            .iter()
            .zip(&trajectory.snapshots)
            .map(|(f, s)| (f.energy() - wave::energy(s)).abs())
            .fold(0.0, f64::max);
        let e0 = trajectory.energies[0].max(1.0);
        report.push_check("stress-energy-integral", energy_mismatch, 1e-10 * e0);
        if history.fields.len() >= 3 {
            let div = divergence_residual(&history)?;
            report.stress = Some(StressSummary {
                energy_mismatch,
                divergence_max: div.max(),
                divergence: div.sup,
                divergence_times: div.times,
            });
        }
        for cone in &cfg.diagnostics.cones {
            let r = cone_report(&trajectory, &history, cone).map_err(Error::at_stage("cones"))?;
            let w = &r.window;
            let tag = format!("apex=({:.4},{:.4},{:.4})", r.apex.t, r.apex.x[0], r.apex.x[1]);
            report.push_check(format!("cone-null-flux {tag}"), -r.min_t_l0, r.tolerance);
            report.push_check(format!("cone-flux {tag}"), -w.flux, r.tolerance);
            report.push_check(
                format!("cone-energy-monotone {tag}"),
                r.worst_energy_increase,
                w.energy_defect.abs() + r.tolerance,
            );
            report.cones.push(r);
        }
        lap("stress", &mut timing);
    }

    Ok(PipelineOutput { report, trajectory, slices, timing })
}

fn write_snapshot(path: &Path, field: Field, cfg: &RunConfig, t: f64, s: f64) -> Result<()> {
    Snapshot { field, m: cfg.target.m as u32, kappa: cfg.target.kappa, t, s }.write(path)
}

/// Writes `report.json`, `timing.json`, wave and gauge snapshots and the plot CSVs.
pub fn write_outputs(out: &PipelineOutput, dir: &Path) -> Result<()> {
    let cfg = &out.report.config;
    fs::create_dir_all(dir)?;
    fs::write(dir.join("report.json"), serde_json::to_string_pretty(&out.report)?)?;
    fs::write(dir.join("timing.json"), serde_json::to_string_pretty(&out.timing)?)?;
    let snaps = dir.join("snapshots");
    fs::create_dir_all(&snaps)?;
    let last = out.trajectory.snapshots.len() - 1;
    for (k, state) in out.trajectory.snapshots.iter().enumerate() {
        let every = cfg.output.snapshot_every;
        if k == 0 || k == last || (every > 0 && k % every == 0) {
            write_snapshot(&snaps.join(format!("phi_{k:05}.cwm")), state.phi_field(), cfg, state.t, 0.0)?;
            write_snapshot(&snaps.join(format!("phi_t_{k:05}.cwm")), state.phi_t_field(), cfg, state.t, 0.0)?;
        }
    }
    for (slice, rep) in out.slices.iter().zip(&out.report.slices) {
        let f = &slice.fields;
        let m = f.m();
        let lv = &f.levels[0];
        for (alpha, (psi, a)) in lv.psi.iter().zip(&lv.a).enumerate() {
            let name = |what: &str| snaps.join(format!("{what}{alpha}_{:05}.cwm", rep.snapshot));
            write_snapshot(&name("psi"), Field::from_data(f.grid, FieldKind::Vector, m, psi.clone())?, cfg, f.t, 0.0)?;
            write_snapshot(&name("a"), Field::from_data(f.grid, FieldKind::Skew, m * m, a.clone())?, cfg, f.t, 0.0)?;
        }
    }
    if cfg.output.csv {
        super::plotdata::emit_plotdata(&out.report, dir)?;
    }
    Ok(())
}

/// Runs the configured stages and writes every output under `dir`.
pub fn run_pipeline(cfg: &RunConfig, stages: Stages, dir: &Path) -> Result<RunReport> {
    let out = execute(cfg, stages)?;
    write_outputs(&out, dir)?;
    Ok(out.report)
}
