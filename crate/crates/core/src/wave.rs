//! Wave maps `R^{1+2} -> H^m` in extrinsic form: `φ_tt = Δφ + λφ` with the multiplier `λ`
//! fixed by the constraint `<φ,φ> = -r^2`.
//!
//! Twice differentiating the constraint gives `<φ, φ_tt> = -|φ_t|^2`, hence
//! `λ = (|φ_t|^2 - |∇φ|^2) / r^2`. The integrator never forms `λ` explicitly.
//! Each step is a constrained Störmer-Verlet (RATTLE) update: the position is corrected along
//! `φ` onto the sheet by the small root of a quadratic, and the velocity is projected onto the
//! new tangent space. The scheme is time-reversible and second order.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{kernel, mink_inner, TargetConfig};
use crate::grid::{project_tangent_all, Grid2D, MapField};

/// Smooth compactly supported bump with peak `amplitude` at the centre.
#[inline]
pub fn bump(amplitude: f64, width: f64, dx: f64, dy: f64) -> f64 {
    let q = (dx * dx + dy * dy) / (width * width);
    if q >= 1.0 {
        0.0
    } else {
        amplitude * (1.0 - 1.0 / (1.0 - q)).exp()
    }
}

/// Gradient of [`bump`] with respect to the evaluation point.
#[inline]
pub fn bump_gradient(amplitude: f64, width: f64, dx: f64, dy: f64) -> [f64; 2] {
    let w2 = width * width;
    let q = (dx * dx + dy * dy) / w2;
    if q >= 1.0 {
        return [0.0, 0.0];
    }
    let chi = amplitude * (1.0 - 1.0 / (1.0 - q)).exp();
    let f = -2.0 * chi / (w2 * (1.0 - q) * (1.0 - q));
    [f * dx, f * dy]
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataKind {
    GeodesicBump,
    MultiBump,
    BoostedBump,
}

/// Compactly supported perturbation of the constant map `p0`.
///
/// The map is `exp_{p0}(Σ_i χ_i(x) v_i)` where `v_i` is given by frame components at `p0`.
/// With `mirror` set, every bump gets a partner at the point reflection through the box centre
/// carrying the opposite direction and boost. Such data commute with the reflection symmetry
/// of `H^m` at `p0`, which pins the heat-flow limit to `p0` at every wave time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialDataSpec {
    pub kind: DataKind,
    #[serde(default = "default_amplitude")]
    pub amplitude: f64,
    /// Bump radius as a fraction of the box side.
    #[serde(default = "default_width")]
    pub width: f64,
    /// Bump centres as fractions of the box side.
    #[serde(default = "default_centers")]
    pub centers: Vec<[f64; 2]>,
    /// Frame components of the bump direction at `p0`; one entry for all bumps or one per bump.
    #[serde(default = "default_directions")]
    pub directions: Vec<Vec<f64>>,
    /// Translation velocity of the boosted profile (`boosted_bump` only).
    #[serde(default)]
    pub boost: [f64; 2],
    #[serde(default)]
    pub mirror: bool,
    /// Ambient coordinates of the background point; defaults to the origin of the sheet.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p0: Option<Vec<f64>>,
}

fn default_amplitude() -> f64 {
    1.0
}
fn default_width() -> f64 {
    0.125
}
fn default_centers() -> Vec<[f64; 2]> {
    vec![[0.5, 0.5]]
}
fn default_directions() -> Vec<Vec<f64>> {
    vec![vec![1.0, 0.0]]
}

impl Default for InitialDataSpec {
    fn default() -> Self {
        InitialDataSpec {
            kind: DataKind::GeodesicBump,
            amplitude: default_amplitude(),
            width: default_width(),
            centers: default_centers(),
            directions: default_directions(),
            boost: [0.0, 0.0],
            mirror: false,
            p0: None,
        }
    }
}

impl InitialDataSpec {
    pub fn validate(&self, target: &TargetConfig) -> Result<()> {
        let key = |k: &str| format!("wave.data.{k}");
        if !(self.amplitude >= 0.0) || !self.amplitude.is_finite() {
            return Err(Error::validation(&key("amplitude"), "must be finite and >= 0"));
        }
        if !(self.width > 0.0) || self.width > 0.5 {
            return Err(Error::validation(&key("width"), "must lie in (0, 0.5]"));
        }
        let boosted = self.boost != [0.0, 0.0];
        match self.kind {
            DataKind::GeodesicBump if self.centers.len() != 1 => {
                return Err(Error::validation(&key("centers"), "geodesic_bump takes exactly one centre"));
            }
            DataKind::MultiBump if self.centers.len() < 2 => {
                return Err(Error::validation(&key("centers"), "multi_bump needs at least two centres"));
            }
            DataKind::BoostedBump if self.centers.is_empty() => {
                return Err(Error::validation(&key("centers"), "boosted_bump needs a centre"));
            }
            _ => {}
        }
        if boosted && self.kind != DataKind::BoostedBump {
            return Err(Error::validation(&key("boost"), "only boosted_bump carries a boost"));
        }
        if self.boost.iter().any(|b| !b.is_finite()) {
            return Err(Error::validation(&key("boost"), "must be finite"));
        }
        if self.directions.len() != 1 && self.directions.len() != self.centers.len() {
            return Err(Error::validation(
                &key("directions"),
                "give one direction, or one per centre",
            ));
        }
        for d in &self.directions {
            if d.len() != target.m || d.iter().map(|x| x * x).sum::<f64>() == 0.0 {
                return Err(Error::validation(
                    &key("directions"),
                    format!("each direction needs {} components, not all zero", target.m),
                ));
            }
        }
        if let Some(p0) = &self.p0 {
            if p0.len() != target.dim() || target.point_defect(p0) > 1e-10 || p0[0] <= 0.0 {
                return Err(Error::validation(&key("p0"), "must be a point of the target sheet"));
            }
        }
        Ok(())
    }

    /// Every bump as `(centre in box units, unit direction in frame components, boost)`.
    fn bumps(&self) -> Vec<([f64; 2], Vec<f64>, [f64; 2])> {
        let mut out = Vec::new();
        for (k, c) in self.centers.iter().enumerate() {
            let raw = if self.directions.len() == 1 { &self.directions[0] } else { &self.directions[k] };
            let norm = raw.iter().map(|x| x * x).sum::<f64>().sqrt();
            let dir: Vec<f64> = raw.iter().map(|x| x / norm).collect();
            out.push((*c, dir, self.boost));
        }
        if self.mirror {
            let mirrored: Vec<_> = out
                .iter()
                .map(|(c, d, b)| {
                    ([1.0 - c[0], 1.0 - c[1]], d.iter().map(|x| -x).collect(), [-b[0], -b[1]])
                })
                .collect();
            out.extend(mirrored);
        }
        out
    }
}

/// Builds the initial slice; `horizon` is the run length that the supports must stay clear of.
pub fn make_initial_data(
    spec: &InitialDataSpec,
    grid: Grid2D,
    target: TargetConfig,
    horizon: f64,
) -> Result<MapField> {
    spec.validate(&target)?;
    let extent = grid.extent();
    let width = spec.width * extent;
    let bumps = spec.bumps();
    for (c, _, _) in &bumps {
        let (cx, cy) = (c[0] * extent, c[1] * extent);
        let reach = width + horizon;
        if cx - reach < 0.0 || cy - reach < 0.0 || cx + reach > extent || cy + reach > extent {
            return Err(Error::SupportTooLarge(format!(
                "bump at ({cx:.4}, {cy:.4}) with radius {width:.4} plus horizon {horizon:.4} leaves the box of side {extent:.4}"
            )));
        }
    }

    let p0 = match &spec.p0 {
        Some(p) => p.clone(),
        None => target.origin().coords,
    };
    let base = crate::geometry::TargetPoint { coords: p0.clone() };
    let frame = target.standard_frame(&base);
    let ambient: Vec<(f64, f64, Vec<f64>, [f64; 2])> = bumps
        .iter()
        .map(|(c, d, b)| {
            let mut v = vec![0.0; target.dim()];
            for (comp, e) in d.iter().zip(&frame.vectors) {
                for (vk, ek) in v.iter_mut().zip(e) {
                    *vk += comp * ek;
                }
            }
            (c[0] * extent, c[1] * extent, v, *b)
        })
        .collect();

    let d = target.dim();
    let r = target.radius();
    let amplitude = spec.amplitude;
    let mut phi = vec![0.0; grid.len() * d];
    let mut phi_t = vec![0.0; grid.len() * d];
    phi.par_chunks_mut(grid.n * d)
        .zip(phi_t.par_chunks_mut(grid.n * d))
        .enumerate()
        .for_each(|(i, (prow, vrow))| {
            let mut w = vec![0.0; d];
            let mut y = vec![0.0; d];
            for j in 0..grid.n {
                let (x1, x2) = grid.position(i, j);
                w.iter_mut().for_each(|x| *x = 0.0);
                y.iter_mut().for_each(|x| *x = 0.0);
                for (cx, cy, v, b) in &ambient {
                    let (dx, dy) = (x1 - cx, x2 - cy);
                    let chi = bump(amplitude, width, dx, dy);
                    if chi == 0.0 {
                        continue;
                    }
                    let g = bump_gradient(amplitude, width, dx, dy);
                    // a profile translating with velocity b has ∂_t χ = -b·∇χ
                    let rate = -(b[0] * g[0] + b[1] * g[1]);
                    for k in 0..d {
                        w[k] += chi * v[k];
                        y[k] += rate * v[k];
                    }
                }
                let p = &mut prow[j * d..(j + 1) * d];
                kernel::exp_into(r, &p0, &w, p);
                let vel = &mut vrow[j * d..(j + 1) * d];
                kernel::exp_derivative_into(r, &p0, &w, &y, vel);
            }
        });
    let r2 = target.radius_sq();
    for (p, v) in phi.chunks_mut(d).zip(phi_t.chunks_mut(d)) {
        kernel::normalize_point(r2, p)?;
        kernel::tangent_project(p, v);
    }
    Ok(MapField {
        grid,
        target,
        t: 0.0,
        phi,
        phi_t,
    })
}

/// One term `cos(2π k·x/L + phase) (a cos ωt + b sin ωt)` of a solution of the linear wave
/// equation on the torus, with `ω = 2π|k|/L`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlaneWave {
    pub k: [i32; 2],
    pub phase: f64,
    pub a: f64,
    pub b: f64,
}

impl PlaneWave {
    fn frequency(&self, extent: f64) -> f64 {
        let kk = ((self.k[0] * self.k[0] + self.k[1] * self.k[1]) as f64).sqrt();
        2.0 * std::f64::consts::PI * kk / extent
    }

    fn spatial(&self, extent: f64, x: f64, y: f64) -> f64 {
        let arg = 2.0 * std::f64::consts::PI * (self.k[0] as f64 * x + self.k[1] as f64 * y) / extent;
        (arg + self.phase).cos()
    }

    /// `(u, u_t)` at `(t, x, y)`.
    pub fn eval(&self, extent: f64, t: f64, x: f64, y: f64) -> (f64, f64) {
        let w = self.frequency(extent);
        let s = self.spatial(extent, x, y);
        (
            s * (self.a * (w * t).cos() + self.b * (w * t).sin()),
            s * w * (-self.a * (w * t).sin() + self.b * (w * t).cos()),
        )
    }
}

/// Exact wave map `γ(u(t,x))` along the unit-speed geodesic `γ` through `p0` with initial
/// velocity `dir`, where `u` is the plane-wave superposition `modes`.
pub fn geodesic_wave(
    grid: Grid2D,
    target: TargetConfig,
    p0: &[f64],
    dir: &[f64],
    modes: &[PlaneWave],
    t: f64,
) -> MapField {
    let d = target.dim();
    let r = target.radius();
    let extent = grid.extent();
    let mut phi = vec![0.0; grid.len() * d];
    let mut phi_t = vec![0.0; grid.len() * d];
    for i in 0..grid.n {
        for j in 0..grid.n {
            let (x, y) = grid.position(i, j);
            let (u, ut) = modes
                .iter()
                .map(|m| m.eval(extent, t, x, y))
                .fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
            let (c, s) = ((u / r).cosh(), (u / r).sinh());
            let node = grid.idx(i, j);
            for k in 0..d {
                phi[node * d + k] = c * p0[k] + r * s * dir[k];
                phi_t[node * d + k] = ut * (s / r * p0[k] + c * dir[k]);
            }
        }
    }
    MapField {
        grid,
        target,
        t,
        phi,
        phi_t,
    }
}

/// One term `amplitude cos(2π k·x/L + phase) v` of a tangent field at `p0`, with `v` given by
/// frame components.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrigMode {
    pub k: [i32; 2],
    pub phase: f64,
    pub amplitude: f64,
    pub direction: Vec<f64>,
}

/// Smooth periodic map `exp_{p0}(Σ modes)` at rest.
pub fn fourier_map(grid: Grid2D, target: TargetConfig, modes: &[TrigMode]) -> MapField {
    let o = target.origin();
    let frame = target.standard_frame(&o);
    let d = target.dim();
    let r = target.radius();
    let ambient: Vec<Vec<f64>> = modes
        .iter()
        .map(|mode| target.from_frame(&frame, &mode.direction).comps)
        .collect();
    let extent = grid.extent();
    let mut state = MapField::constant(grid, target, &o.coords);
    let mut w = vec![0.0; d];
    for i in 0..grid.n {
        for j in 0..grid.n {
            let (x, y) = grid.position(i, j);
            w.iter_mut().for_each(|c| *c = 0.0);
            for (mode, v) in modes.iter().zip(&ambient) {
                let arg = 2.0 * std::f64::consts::PI * (mode.k[0] as f64 * x + mode.k[1] as f64 * y) / extent;
                let c = mode.amplitude * (arg + mode.phase).cos();
                for k in 0..d {
                    w[k] += c * v[k];
                }
            }
            let node = grid.idx(i, j);
            kernel::exp_into(r, &o.coords, &w, &mut state.phi[node * d..(node + 1) * d]);
        }
    }
    state
}

/// Tangent-projected centered derivatives `(P∂_1φ, P∂_2φ)`.
pub fn spatial_derivatives(state: &MapField) -> [Vec<f64>; 2] {
    [state.spatial_derivative(0), state.spatial_derivative(1)]
}

/// Pointwise `½(|φ_t|^2 + |P∂_1φ|^2 + |P∂_2φ|^2)`.
pub fn energy_density(state: &MapField) -> Vec<f64> {
    let d = state.width();
    let [d1, d2] = spatial_derivatives(state);
    state
        .phi_t
        .par_chunks(d)
        .zip(d1.par_chunks(d))
        .zip(d2.par_chunks(d))
        .map(|((v, a), b)| 0.5 * (mink_inner(v, v) + mink_inner(a, a) + mink_inner(b, b)))
        .collect()
}

pub fn energy(state: &MapField) -> f64 {
    state.grid.integrate_values(&energy_density(state))
}

/// `max_x (|P∂_1φ|^2 + |P∂_2φ|^2)^{1/2}`.
pub fn sup_gradient(state: &MapField) -> f64 {
    let d = state.width();
    let [d1, d2] = spatial_derivatives(state);
    d1.par_chunks(d)
        .zip(d2.par_chunks(d))
        .map(|(a, b)| (mink_inner(a, a) + mink_inner(b, b)).max(0.0).sqrt())
        .reduce(|| 0.0, f64::max)
}

/// Raw ambient five-point Laplacian of the map.
pub fn ambient_laplacian(state: &MapField) -> Vec<f64> {
    let mut lap = vec![0.0; state.phi.len()];
    state.grid.laplacian_into(&state.phi, state.width(), &mut lap);
    lap
}

/// Position half of the step at one node: `w = φ + dt v + dt²/2 Δφ`, then `φ' = w + μφ` with
/// the root `μ` of `<φ',φ'> = -r^2` that vanishes with the step.
#[inline]
fn advance_point(r2: f64, phi: &[f64], v: &[f64], lap: &[f64], dt: f64, out: &mut [f64]) -> Result<()> {
    let half_dt2 = 0.5 * dt * dt;
    for k in 0..phi.len() {
        out[k] = phi[k] + dt * v[k] + half_dt2 * lap[k];
    }
    let b = mink_inner(out, phi);
    let c = mink_inner(out, out) + r2;
    let disc = b * b + r2 * c;
    if !(disc >= 0.0) {
        return Err(Error::NotTimelike {
            inner: mink_inner(out, out),
            v0: out[0],
        });
    }
    let mu = c / (disc.sqrt() - b);
    for k in 0..phi.len() {
        out[k] += mu * phi[k];
    }
    kernel::normalize_point(r2, out)
}

fn first_error(results: Vec<Result<()>>) -> Result<()> {
    results.into_iter().find(|r| r.is_err()).unwrap_or(Ok(()))
}

/// Advances one step given the Laplacian of the current map; returns the new state and its
/// Laplacian so that consecutive steps share it.
pub fn wave_step_with(state: &MapField, lap: &[f64], dt: f64) -> Result<(MapField, Vec<f64>)> {
    let d = state.width();
    let r2 = state.target.radius_sq();
    let mut phi = vec![0.0; state.phi.len()];
    let row = state.grid.n * d;
    let results: Vec<Result<()>> = phi
        .par_chunks_mut(row)
        .enumerate()
        .map(|(i, out)| {
            for j in 0..state.grid.n {
                let s = (i * state.grid.n + j) * d;
                advance_point(
                    r2,
                    &state.phi[s..s + d],
                    &state.phi_t[s..s + d],
                    &lap[s..s + d],
                    dt,
                    &mut out[j * d..(j + 1) * d],
                )?;
            }
            Ok(())
        })
        .collect();
    first_error(results)?;

    let mut next_lap = vec![0.0; phi.len()];
    state.grid.laplacian_into(&phi, d, &mut next_lap);
    let half_dt = 0.5 * dt;
    let mut phi_t = vec![0.0; phi.len()];
    phi_t
        .par_chunks_mut(d)
        .enumerate()
        .for_each(|(node, v)| {
            let s = node * d;
            for k in 0..d {
                v[k] = (phi[s + k] - state.phi[s + k]) / dt + half_dt * next_lap[s + k];
            }
        });
    project_tangent_all(&phi, &mut phi_t, d);
    Ok((
        MapField {
            grid: state.grid,
            target: state.target,
            t: state.t + dt,
            phi,
            phi_t,
        },
        next_lap,
    ))
}

pub fn wave_step(state: &MapField, dt: f64) -> Result<MapField> {
    let lap = ambient_laplacian(state);
    Ok(wave_step_with(state, &lap, dt)?.0)
}

/// Number of steps of size close to `dt` that land exactly on `t_final`, and that step size.
pub fn step_plan(t_final: f64, dt: f64) -> Result<(usize, f64)> {
    if !(dt > 0.0) || !(t_final >= 0.0) {
        return Err(Error::validation("wave.dt", format!("need dt > 0 and T >= 0, got dt={dt}, T={t_final}")));
    }
    if t_final == 0.0 {
        return Ok((0, dt));
    }
    let steps = (t_final / dt - 1e-9).ceil().max(1.0) as usize;
    Ok((steps, t_final / steps as f64))
}

/// Ordered snapshots of an evolution together with the energy after every step.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub dt: f64,
    pub snapshots: Vec<MapField>,
    pub times: Vec<f64>,
    pub energies: Vec<f64>,
}

impl Trajectory {
    pub fn relative_drift(&self) -> f64 {
        let e0 = self.energies[0];
        let worst = self.energies.iter().fold(0.0f64, |a, e| a.max((e - e0).abs()));
        if e0 > 0.0 {
            worst / e0
        } else {
            worst
        }
    }
}

/// Repeats [`wave_step_with`] `steps` times, keeping every `snapshot_every`-th state
/// (the first and last are always kept).
pub fn evolve_steps(state: &MapField, steps: usize, dt: f64, snapshot_every: usize) -> Result<Trajectory> {
    let every = snapshot_every.max(1);
    let mut current = state.clone();
    let mut lap = ambient_laplacian(&current);
    let mut snapshots = vec![current.clone()];
    let mut times = vec![current.t];
    let mut energies = vec![energy(&current)];
    for k in 1..=steps {
        let (next, next_lap) = wave_step_with(&current, &lap, dt)?;
        current = next;
        lap = next_lap;
        times.push(current.t);
        energies.push(energy(&current));
        if k % every == 0 || k == steps {
            snapshots.push(current.clone());
        }
    }
    Ok(Trajectory {
        dt,
        snapshots,
        times,
        energies,
    })
}

/// Evolves to time `state.t + t_final` with steps no larger than `dt`.
pub fn evolve(state: &MapField, t_final: f64, dt: f64, snapshot_every: usize) -> Result<Trajectory> {
    let (steps, dt) = step_plan(t_final, dt)?;
    evolve_steps(state, steps, dt, snapshot_every)
}

/// The same state with its velocity negated, for time-reversal checks.
pub fn reversed(state: &MapField) -> MapField {
    let mut out = state.clone();
    out.phi_t.iter_mut().for_each(|v| *v = -*v);
    out
}
