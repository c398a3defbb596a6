//! Columnar CSV series for external plotting.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::pipeline::RunReport;
use crate::error::Result;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyRow {
    pub t: f64,
    pub energy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradientRow {
    pub slice_t: f64,
    pub level: usize,
    pub s: f64,
    pub sup_gradient: f64,
    pub dirichlet: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualRow {
    pub slice_t: f64,
    pub identity: String,
    pub norm: String,
    pub value: f64,
    pub n: usize,
    pub h: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConeEnergyRow {
    pub apex_t: f64,
    pub apex_x1: f64,
    pub apex_x2: f64,
    pub t: f64,
    pub energy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayRow {
    pub apex_t: f64,
    pub apex_x1: f64,
    pub apex_x2: f64,
    pub t_lo: f64,
    pub t_hi: f64,
    pub integral: f64,
}

/// Every plotted series of a report.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PlotData {
    pub energy: Vec<EnergyRow>,
    pub sup_gradient: Vec<GradientRow>,
    pub residuals: Vec<ResidualRow>,
    pub cone_energy: Vec<ConeEnergyRow>,
    pub scaled_decay: Vec<DecayRow>,
}

const ENERGY: (&str, &[&str]) = ("energy.csv", &["t", "energy"]);
const GRADIENT: (&str, &[&str]) = ("sup_gradient.csv", &["slice_t", "level", "s", "sup_gradient", "dirichlet"]);
const RESIDUALS: (&str, &[&str]) = ("residuals.csv", &["slice_t", "identity", "norm", "value", "n", "h"]);
const CONE: (&str, &[&str]) = ("cone_energy.csv", &["apex_t", "apex_x1", "apex_x2", "t", "energy"]);
const DECAY: (&str, &[&str]) = ("scaled_decay.csv", &["apex_t", "apex_x1", "apex_x2", "t_lo", "t_hi", "integral"]);

impl PlotData {
    pub fn from_report(report: &RunReport) -> Self {
        let energy = report
            .energy
            .times
            .iter()
            .zip(&report.energy.energies)
            .map(|(&t, &energy)| EnergyRow { t, energy })
            .collect();
        let mut sup_gradient = Vec::new();
        let mut residuals = Vec::new();
        for slice in &report.slices {
            let l = &slice.ladder;
            for (level, ((&s, &g), &e)) in l.s_levels.iter().zip(&l.sup_gradient).zip(&l.dirichlet).enumerate() {
                sup_gradient.push(GradientRow { slice_t: slice.t, level, s, sup_gradient: g, dirichlet: e });
            }
            for entry in &slice.reconstruction.entries {
                residuals.push(ResidualRow {
                    slice_t: slice.t,
                    identity: entry.identity.clone(),
                    norm: entry.norm.clone(),
                    value: entry.value,
                    n: entry.n,
                    h: entry.h,
                });
            }
        }
        let mut cone_energy = Vec::new();
        let mut scaled_decay = Vec::new();
        for cone in &report.cones {
            let [x1, x2] = cone.apex.x;
            for &(t, energy) in &cone.energies {
                cone_energy.push(ConeEnergyRow { apex_t: cone.apex.t, apex_x1: x1, apex_x2: x2, t, energy });
            }
            for b in &cone.self_similarity.blocks {
                scaled_decay.push(DecayRow {
                    apex_t: cone.apex.t,
                    apex_x1: x1,
                    apex_x2: x2,
                    t_lo: b.t_lo,
                    t_hi: b.t_hi,
                    integral: b.integral,
                });
            }
        }
        PlotData { energy, sup_gradient, residuals, cone_energy, scaled_decay }
    }
}

fn write_rows<T: Serialize>(dir: &Path, (name, headers): (&str, &[&str]), rows: &[T]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(dir.join(name))?;
    w.write_record(headers)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

fn read_rows<T: DeserializeOwned>(dir: &Path, (name, _): (&str, &[&str])) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(dir.join(name))?;
    Ok(r.deserialize().collect::<std::result::Result<Vec<T>, _>>()?)
}

/// Writes the five series of `report` as CSV files in `dir`; series without data get a header
/// line only.
pub fn emit_plotdata(report: &RunReport, dir: &Path) -> Result<PlotData> {
    std::fs::create_dir_all(dir)?;
    let data = PlotData::from_report(report);
    write_rows(dir, ENERGY, &data.energy)?;
    write_rows(dir, GRADIENT, &data.sup_gradient)?;
    write_rows(dir, RESIDUALS, &data.residuals)?;
    write_rows(dir, CONE, &data.cone_energy)?;
    write_rows(dir, DECAY, &data.scaled_decay)?;
    Ok(data)
}

pub fn read_plotdata(dir: &Path) -> Result<PlotData> {
    Ok(PlotData {
        energy: read_rows(dir, ENERGY)?,
        sup_gradient: read_rows(dir, GRADIENT)?,
        residuals: read_rows(dir, RESIDUALS)?,
        cone_energy: read_rows(dir, CONE)?,
        scaled_decay: read_rows(dir, DECAY)?,
    })
}
