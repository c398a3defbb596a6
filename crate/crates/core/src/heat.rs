//! Harmonic map heat flow `∂_s φ = P_φ Δφ` for one time slice, sampled on a geometric ladder
//! of heat times.
//!
//! Every level sits on the lattice of explicit Euler substeps of size `ds0`, so ladders built
//! with finer level spacing (`level_split`) share their base levels bit for bit. The time
//! derivative `∂_t φ` of the slice is carried along by the exact tangent-linear map of each
//! substep, which makes `∂_t φ(s)` available without neighbouring time slices.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{kernel, mink_inner, TargetConfig};
use crate::grid::{pairwise_sum, Field, FieldKind, Grid2D, MapField};
use crate::snapshot::Snapshot;
use crate::wave;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeatConfig {
    /// Euler substep; defaults to `0.2 h^2`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ds0: Option<f64>,
    /// Growth ratio of consecutive level spacings.
    #[serde(default = "default_ratio")]
    pub ratio: f64,
    /// Substeps in the first level interval.
    #[serde(default = "default_base_substeps")]
    pub base_substeps: usize,
    /// Stop once the sup-gradient falls below this fraction of its initial value.
    #[serde(default = "default_eps_stop")]
    pub eps_stop: f64,
    #[serde(default = "default_max_levels")]
    pub max_levels: usize,
    /// Number of sub-intervals each base level interval is divided into.
    #[serde(default = "default_level_split")]
    pub level_split: usize,
}

fn default_ratio() -> f64 {
    1.1
}
fn default_base_substeps() -> usize {
    4
}
fn default_eps_stop() -> f64 {
    1e-6
}
fn default_max_levels() -> usize {
    400
}
fn default_level_split() -> usize {
    1
}

impl Default for HeatConfig {
    fn default() -> Self {
        HeatConfig {
            ds0: None,
            ratio: default_ratio(),
            base_substeps: default_base_substeps(),
            eps_stop: default_eps_stop(),
            max_levels: default_max_levels(),
            level_split: default_level_split(),
        }
    }
}

impl HeatConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.ratio > 1.0 && self.ratio <= 1.2) {
            return Err(Error::validation("heat.ratio", format!("need 1 < ratio <= 1.2, got {}", self.ratio)));
        }
        if !(self.eps_stop > 0.0 && self.eps_stop < 1.0) {
            return Err(Error::validation("heat.eps_stop", "need 0 < eps_stop < 1"));
        }
        if self.base_substeps == 0 {
            return Err(Error::validation("heat.base_substeps", "must be positive"));
        }
        if self.level_split == 0 {
            return Err(Error::validation("heat.level_split", "must be positive"));
        }
        if self.max_levels < 2 {
            return Err(Error::validation("heat.max_levels", "need at least two levels"));
        }
        if let Some(ds) = self.ds0 {
            if !(ds > 0.0) {
                return Err(Error::validation("heat.ds0", "must be positive"));
            }
        }
        Ok(())
    }

    /// Substep size on `grid`, checked against the explicit stability bound `h^2/4`.
    pub fn substep(&self, grid: &Grid2D) -> Result<f64> {
        let ds = self.ds0.unwrap_or(0.2 * grid.h * grid.h);
        check_stability(grid, ds)?;
        Ok(ds)
    }

    /// Substep counts of the base level intervals.
    fn base_increment(&self, k: usize) -> usize {
        let inc = (self.base_substeps as f64 * self.ratio.powi(k as i32)).round() as usize;
        inc.max(self.base_substeps)
    }
}

pub fn stability_bound(grid: &Grid2D) -> f64 {
    0.25 * grid.h * grid.h
}

fn check_stability(grid: &Grid2D, ds: f64) -> Result<()> {
    let bound = stability_bound(grid);
    if ds > bound * (1.0 + 1e-12) {
        return Err(Error::StabilityViolation { ds, bound });
    }
    Ok(())
}

/// Split `inc` substeps into `parts` near-equal positive pieces (fewer if `inc < parts`).
fn split_increment(inc: usize, parts: usize) -> Vec<usize> {
    let parts = parts.min(inc).max(1);
    let base = inc / parts;
    let extra = inc % parts;
    (0..parts).map(|p| base + usize::from(p < extra)).collect()
}

/// Heat-flow images of one slice on an increasing ladder of heat times.
#[derive(Clone, Debug)]
pub struct HeatLadder {
    pub grid: Grid2D,
    pub target: TargetConfig,
    pub base_t: f64,
    pub ds0: f64,
    /// Cumulative Euler substeps at each level; `s_k = ds0 * substeps[k]`.
    pub substeps: Vec<usize>,
    pub s_levels: Vec<f64>,
    /// Indices of the levels that belong to the unsplit base lattice.
    pub base_levels: Vec<usize>,
    pub phi: Vec<Vec<f64>>,
    pub phi_s: Vec<Vec<f64>>,
    pub phi_t: Vec<Vec<f64>>,
    pub sup_gradient: Vec<f64>,
    pub dirichlet: Vec<f64>,
    pub phi_infinity: Vec<f64>,
    /// Absolute stopping threshold on the sup-gradient.
    pub eps_stop: f64,
    /// `sup_x d(φ(s_max, x), φ_∞)`.
    pub limit_spread: f64,
}

impl HeatLadder {
    pub fn levels(&self) -> usize {
        self.s_levels.len()
    }

    pub fn s_max(&self) -> f64 {
        *self.s_levels.last().unwrap()
    }

    /// The slice at level `k` as a map with its carried time derivative.
    pub fn slice(&self, k: usize) -> MapField {
        MapField {
            grid: self.grid,
            target: self.target,
            t: self.base_t,
            phi: self.phi[k].clone(),
            phi_t: self.phi_t[k].clone(),
        }
    }

    /// Sup-gradient increases between consecutive levels, if any.
    pub fn worst_gradient_increase(&self) -> f64 {
        self.sup_gradient.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn worst_energy_increase(&self) -> f64 {
        self.dirichlet.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn manifest(&self) -> LadderManifest {
        LadderManifest {
            base_t: self.base_t,
            n: self.grid.n,
            h: self.grid.h,
            ds0: self.ds0,
            s_levels: self.s_levels.clone(),
            substeps: self.substeps.clone(),
            eps_stop: self.eps_stop,
            phi_infinity: self.phi_infinity.clone(),
            sup_gradient: self.sup_gradient.clone(),
            dirichlet: self.dirichlet.clone(),
            limit_spread: self.limit_spread,
        }
    }

    /// One snapshot per level (`phi_<k>.cwm`) and `ladder.json`.
    pub fn write_dump(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let width = self.target.dim();
        for (k, phi) in self.phi.iter().enumerate() {
            let snap = Snapshot {
                field: Field::from_data(self.grid, FieldKind::Ambient, width, phi.clone())?,
                m: self.target.m as u32,
                kappa: self.target.kappa,
                t: self.base_t,
                s: self.s_levels[k],
            };
            snap.write(&dir.join(format!("phi_{k:04}.cwm")))?;
        }
        let json = serde_json::to_string_pretty(&self.manifest())?;
        fs::write(dir.join("ladder.json"), json)?;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LadderManifest {
    pub base_t: f64,
    pub n: usize,
    pub h: f64,
    pub ds0: f64,
    pub s_levels: Vec<f64>,
    pub substeps: Vec<usize>,
    pub eps_stop: f64,
    pub phi_infinity: Vec<f64>,
    pub sup_gradient: Vec<f64>,
    pub dirichlet: Vec<f64>,
    pub limit_spread: f64,
}

/// Tension `τ = Δφ - (<Δφ,φ>/<φ,φ>) φ` for every node.
pub fn tension(state_phi: &[f64], grid: &Grid2D, width: usize) -> Vec<f64> {
    let mut lap = vec![0.0; state_phi.len()];
    grid.laplacian_into(state_phi, width, &mut lap);
    lap.par_chunks_mut(width)
        .zip(state_phi.par_chunks(width))
        .for_each(|(l, p)| kernel::tangent_project(p, l));
    lap
}

/// Derivative of the tension in the direction of the tangent field `v`.
pub fn tension_derivative(phi: &[f64], v: &[f64], grid: &Grid2D, width: usize) -> Vec<f64> {
    let mut lap = vec![0.0; phi.len()];
    let mut lap_v = vec![0.0; phi.len()];
    grid.laplacian_into(phi, width, &mut lap);
    grid.laplacian_into(v, width, &mut lap_v);
    lap_v
        .par_chunks_mut(width)
        .zip(lap.par_chunks(width))
        .zip(phi.par_chunks(width).zip(v.par_chunks(width)))
        .for_each(|((lv, l), (p, v))| {
            let pp = mink_inner(p, p);
            let lp = mink_inner(l, p);
            let dc = (mink_inner(lv, p) + mink_inner(l, v)) / pp - 2.0 * lp * mink_inner(p, v) / (pp * pp);
            let c = lp / pp;
            for k in 0..width {
                lv[k] -= dc * p[k] + c * v[k];
            }
        });
    lap_v
}

/// One Euler substep of the points and, when given, of a carried tangent field.
struct Stepper {
    grid: Grid2D,
    width: usize,
    r2: f64,
    lap: Vec<f64>,
    lap_v: Vec<f64>,
}

impl Stepper {
    fn new(grid: Grid2D, target: &TargetConfig) -> Self {
        let len = grid.len() * target.dim();
        Stepper {
            grid,
            width: target.dim(),
            r2: target.radius_sq(),
            lap: vec![0.0; len],
            lap_v: vec![0.0; len],
        }
    }

    fn step(&mut self, phi: &mut [f64], carried: Option<&mut [f64]>, ds: f64) -> Result<()> {
        let d = self.width;
        let r2 = self.r2;
        self.grid.laplacian_into(phi, d, &mut self.lap);
        let lap = &self.lap;
        let results: Vec<Result<()>> = match carried {
            None => phi
                .par_chunks_mut(d)
                .zip(lap.par_chunks(d))
                .map(|(p, l)| {
                    let c = mink_inner(l, p) / mink_inner(p, p);
                    for k in 0..d {
                        p[k] += ds * (l[k] - c * p[k]);
                    }
                    kernel::normalize_point(r2, p)
                })
                .collect(),
            Some(v) => {
                self.grid.laplacian_into(v, d, &mut self.lap_v);
                let lap_v = &self.lap_v;
                phi.par_chunks_mut(d)
                    .zip(v.par_chunks_mut(d))
                    .zip(lap.par_chunks(d).zip(lap_v.par_chunks(d)))
                    .map(|((p, v), (l, lv))| {
                        let pp = mink_inner(p, p);
                        let lp = mink_inner(l, p);
                        let c = lp / pp;
                        let dc = (mink_inner(lv, p) + mink_inner(l, v)) / pp - 2.0 * lp * mink_inner(p, v) / (pp * pp);
                        // w = φ + ds τ(φ) and its linearization W
                        let mut w = [0.0; 8];
                        let mut dw = [0.0; 8];
                        for k in 0..d {
                            w[k] = p[k] + ds * (l[k] - c * p[k]);
                            dw[k] = v[k] + ds * (lv[k] - dc * p[k] - c * v[k]);
                        }
                        let (w, dw) = (&w[..d], &dw[..d]);
                        let ww = mink_inner(w, w);
                        if !(ww < 0.0) || !(w[0] > 0.0) {
                            return Err(Error::NotTimelike { inner: ww, v0: w[0] });
                        }
                        let scale = (r2 / -ww).sqrt();
                        let proj = mink_inner(w, dw) / ww;
                        for k in 0..d {
                            p[k] = scale * w[k];
                            v[k] = scale * (dw[k] - proj * w[k]);
                        }
                        Ok(())
                    })
                    .collect()
            }
        };
        results.into_iter().find(|r| r.is_err()).unwrap_or(Ok(()))
    }
}

/// Single explicit Euler step `φ <- Π(φ + ds P_φ Δφ)`.
pub fn heat_step(slice: &MapField, ds: f64) -> Result<MapField> {
    check_stability(&slice.grid, ds)?;
    let mut out = slice.clone();
    let mut stepper = Stepper::new(slice.grid, &slice.target);
    stepper.step(&mut out.phi, Some(&mut out.phi_t), ds)?;
    Ok(out)
}

fn dirichlet_energy(state: &MapField) -> f64 {
    let d = state.width();
    let d1 = state.spatial_derivative(0);
    let d2 = state.spatial_derivative(1);
    let density: Vec<f64> = d1
        .par_chunks(d)
        .zip(d2.par_chunks(d))
        .map(|(a, b)| 0.5 * (mink_inner(a, a) + mink_inner(b, b)))
        .collect();
    state.grid.integrate_values(&density)
}

pub fn sup_gradient(slice: &MapField) -> f64 {
    wave::sup_gradient(slice)
}

/// Iterated Riemannian centre of mass of the slice's points.
pub fn riemannian_mean(target: &TargetConfig, points: &[f64]) -> Vec<f64> {
    let d = target.dim();
    let r = target.radius();
    let count = points.len() / d;
    let mut mean = points[..d].to_vec();
    let mut logs = vec![0.0; points.len()];
    for _ in 0..100 {
        logs.par_chunks_mut(d)
            .zip(points.par_chunks(d))
            .for_each(|(l, q)| kernel::log_into(r, &mean, q, l));
        let mut step = vec![0.0; d];
        let mut column = vec![0.0; count];
        for k in 0..d {
            for (c, l) in column.iter_mut().zip(logs.chunks(d)) {
                *c = l[k];
            }
            step[k] = pairwise_sum(&column) / count as f64;
        }
        let size = mink_inner(&step, &step).max(0.0).sqrt();
        let mut next = vec![0.0; d];
        kernel::exp_into(r, &mean, &step, &mut next);
        if kernel::normalize_point(target.radius_sq(), &mut next).is_ok() {
            mean = next;
        }
        if size <= 1e-15 * r {
            break;
        }
    }
    mean
}

/// Runs the flow from `state`, storing every level whose cumulative substep count is listed.
fn run_levels(state: &MapField, ds0: f64, substeps: &[usize]) -> Result<LevelData> {
    let mut phi = state.phi.clone();
    let mut v = state.phi_t.clone();
    let mut stepper = Stepper::new(state.grid, &state.target);
    let mut data = LevelData::default();
    let mut done = 0usize;
    for &target_steps in substeps {
        while done < target_steps {
            stepper.step(&mut phi, Some(&mut v), ds0)?;
            done += 1;
        }
        data.push(state, &phi, &v);
    }
    Ok(data)
}

#[derive(Default)]
struct LevelData {
    phi: Vec<Vec<f64>>,
    phi_s: Vec<Vec<f64>>,
    phi_t: Vec<Vec<f64>>,
    sup_gradient: Vec<f64>,
    dirichlet: Vec<f64>,
}

impl LevelData {
    fn push(&mut self, state: &MapField, phi: &[f64], v: &[f64]) {
        let slice = MapField {
            grid: state.grid,
            target: state.target,
            t: state.t,
            phi: phi.to_vec(),
            phi_t: v.to_vec(),
        };
        self.sup_gradient.push(sup_gradient(&slice));
        self.dirichlet.push(dirichlet_energy(&slice));
        self.phi_s.push(tension(phi, &state.grid, state.width()));
        self.phi.push(slice.phi);
        self.phi_t.push(slice.phi_t);
    }
}

fn assemble(state: &MapField, ds0: f64, substeps: Vec<usize>, base_levels: Vec<usize>, data: LevelData, eps_stop: f64) -> HeatLadder {
    let target = state.target;
    let last = data.phi.last().unwrap();
    let phi_infinity = riemannian_mean(&target, last);
    let r = target.radius();
    let limit_spread = last
        .par_chunks(target.dim())
        .map(|p| kernel::distance(r, p, &phi_infinity))
        .reduce(|| 0.0, f64::max);
    HeatLadder {
        grid: state.grid,
        target,
        base_t: state.t,
        ds0,
        s_levels: substeps.iter().map(|&k| k as f64 * ds0).collect(),
        substeps,
        base_levels,
        phi: data.phi,
        phi_s: data.phi_s,
        phi_t: data.phi_t,
        sup_gradient: data.sup_gradient,
        dirichlet: data.dirichlet,
        phi_infinity,
        eps_stop,
        limit_spread,
    }
}

/// Flows `state` until the sup-gradient at a base level drops below
/// `cfg.eps_stop * sup_gradient(state)`.
pub fn build_ladder(state: &MapField, cfg: &HeatConfig) -> Result<HeatLadder> {
    cfg.validate()?;
    let ds0 = cfg.substep(&state.grid)?;
    let initial = sup_gradient(state);
    let eps_stop = cfg.eps_stop * initial;
    if initial == 0.0 {
        let data = run_levels(state, ds0, &[0, 1])?;
        return Ok(assemble(state, ds0, vec![0, 1], vec![0, 1], data, 0.0));
    }

    let mut phi = state.phi.clone();
    let mut v = state.phi_t.clone();
    let mut stepper = Stepper::new(state.grid, &state.target);
    let mut data = LevelData::default();
    data.push(state, &phi, &v);
    let mut substeps = vec![0usize];
    let mut base_levels = vec![0usize];
    let mut done = 0usize;
    for k in 0..cfg.max_levels {
        for part in split_increment(cfg.base_increment(k), cfg.level_split) {
            for _ in 0..part {
                stepper.step(&mut phi, Some(&mut v), ds0)?;
            }
            done += part;
            substeps.push(done);
            data.push(state, &phi, &v);
        }
        base_levels.push(substeps.len() - 1);
        if *data.sup_gradient.last().unwrap() <= eps_stop {
            return Ok(assemble(state, ds0, substeps, base_levels, data, eps_stop));
        }
    }
    Err(Error::NoConvergence {
        levels: cfg.max_levels,
        sup_gradient: *data.sup_gradient.last().unwrap(),
        eps_stop,
    })
}

/// Flows `state` onto exactly the levels of `reference`, so that ladders of neighbouring time
/// slices share their heat-time grid.
pub fn build_ladder_like(state: &MapField, reference: &HeatLadder) -> Result<HeatLadder> {
    state.grid.check_same(&reference.grid)?;
    let data = run_levels(state, reference.ds0, &reference.substeps)?;
    Ok(assemble(
        state,
        reference.ds0,
        reference.substeps.clone(),
        reference.base_levels.clone(),
        data,
        reference.eps_stop,
    ))
}
