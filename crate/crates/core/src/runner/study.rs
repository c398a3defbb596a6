//! Refinement studies: rerun a configuration with `h`, `dt` and `ds` halved and fit log-ratio rates.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::pipeline::{execute, RunReport, Stages};
use crate::error::{Error, Result};

/// One measured quantity across refinement levels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub quantity: String,
    pub values: Vec<f64>,
    /// `log2(v_k / v_{k+1})` for consecutive levels.
    pub rates: Vec<f64>,
}

impl StudyRow {
    fn new(quantity: &str, values: Vec<f64>) -> Self {
        let rates = values.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
        StudyRow { quantity: quantity.to_string(), values, rates }
    }

    pub fn last_rate(&self) -> Option<f64> {
        self.rates.last().copied()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyTable {
    pub n: Vec<usize>,
    pub h: Vec<f64>,
    pub dt: Vec<f64>,
    pub rows: Vec<StudyRow>,
}

impl StudyTable {
    pub fn row(&self, quantity: &str) -> Option<&StudyRow> {
        self.rows.iter().find(|r| r.quantity == quantity)
    }

    /// Long-format CSV: one line per quantity and level.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["quantity", "level", "n", "h", "dt", "value", "rate"])?;
        for row in &self.rows {
            for (k, v) in row.values.iter().enumerate() {
                let rate = if k == 0 { String::new() } else { row.rates[k - 1].to_string() };
                w.write_record([
                    row.quantity.clone(),
                    k.to_string(),
                    self.n[k].to_string(),
                    self.h[k].to_string(),
                    self.dt[k].to_string(),
                    v.to_string(),
                    rate,
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// The configuration at refinement level `k`: `n·2^k` nodes on the same box, `dt/2^k`, `ds0/4^k`.
pub fn refine_config(cfg: &RunConfig, k: u32) -> RunConfig {
    let f = (1u64 << k) as f64;
    let mut c = cfg.clone();
    c.grid.n = cfg.grid.n << k;
    c.grid.h = cfg.grid.h.map(|h| h / f);
    c.wave.dt = cfg.wave.dt.map(|dt| dt / f);
    c.heat.ds0 = cfg.heat.ds0.map(|ds| ds / (f * f));
    c
}

fn first_slice(r: &RunReport, identity: &str, norm: &str) -> Option<f64> {
    r.slices.first().and_then(|s| s.reconstruction.value(identity, norm))
}

/// Runs `levels` refinements of `cfg` and tabulates the quantities that every run produced.
pub fn convergence_study(cfg: &RunConfig, levels: usize) -> Result<StudyTable> {
    if levels < 2 {
        return Err(Error::validation("study.levels", format!("need at least 2 levels, got {levels}")));
    }
    let stages = Stages { gauge: !cfg.gauge.times.is_empty(), cones: true };
    let mut reports = Vec::with_capacity(levels);
    for k in 0..levels {
        let c = refine_config(cfg, k as u32);
        reports.push(execute(&c, stages).map_err(Error::at_stage(&format!("study level {k}")))?.report);
    }
    let extract: [(&str, &dyn Fn(&RunReport) -> Option<f64>); 7] = [
        ("energy-drift", &|r| Some(r.energy.relative_drift)),
        ("curvature-identity", &|r| first_slice(r, "curvature-identity[x1,x2]", "sup")),
        ("zero-torsion", &|r| first_slice(r, "zero-torsion[t,x1]", "sup")),
        ("wave-tension", &|r| first_slice(r, "wave-tension", "sup")),
        ("divergence", &|r| r.stress.as_ref().map(|s| s.divergence_max)),
        ("energy-identity-defect", &|r| r.cones.first().map(|c| c.window.energy_defect.abs())),
        ("scaling-stokes-defect", &|r| r.cones.first().map(|c| c.window.scaling.defect.abs())),
    ];
    let mut rows = Vec::new();
    for (name, f) in extract {
        let values: Option<Vec<f64>> = reports.iter().map(f).collect();
        if let Some(values) = values {
            rows.push(StudyRow::new(name, values));
        }
    }
    Ok(StudyTable {
        n: reports.iter().map(|r| r.n).collect(),
        h: reports.iter().map(|r| r.h).collect(),
        dt: reports.iter().map(|r| r.dt).collect(),
        rows,
    })
}
