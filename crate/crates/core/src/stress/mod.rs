//! Stress-energy tensor of a wave map at `s = 0`, its conservation law, and integral identities
//! on truncated backward light cones: cone energies, null fluxes, Stokes' theorem for the
//! time-translation and mollified scaling vector fields, and the self-similarity functional.
//!
//! Everything is computed from the Gram matrix `G_αβ = <ψ_α, ψ_β>` at each node, so the results
//! are independent of the frame. Signature is `(-,+,+)` with indices `(t, x1, x2)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gauge::GaugeFieldSet;
use crate::geometry::mink_inner;
use crate::grid::{Grid2D, MapField};
use crate::linalg::dot;
use crate::wave::{spatial_derivatives, Trajectory};

const METRIC: [f64; 3] = [-1.0, 1.0, 1.0];

/// Packed position of `(a, b)` in the six stored components `00, 01, 02, 11, 12, 22`.
#[inline]
fn slot(a: usize, b: usize) -> usize {
    let (a, b) = if a <= b { (a, b) } else { (b, a) };
    match (a, b) {
        (0, 0) => 0,
        (0, 1) => 1,
        (0, 2) => 2,
        (1, 1) => 3,
        (1, 2) => 4,
        _ => 5,
    }
}

/// `T = G - ½ g tr_g G`.
fn stress_of_gram(g: &[[f64; 3]; 3]) -> [f64; 6] {
    let tr = -g[0][0] + g[1][1] + g[2][2];
    let mut out = [0.0; 6];
    for a in 0..3 {
        for b in a..3 {
            let metric = if a == b { METRIC[a] } else { 0.0 };
            out[slot(a, b)] = g[a][b] - 0.5 * metric * tr;
        }
    }
    out
}

/// The stress-energy tensor on one time slice.
#[derive(Clone, Debug, PartialEq)]
pub struct StressEnergyField {
    pub grid: Grid2D,
    pub t: f64,
    /// Six components per node in the order `00, 01, 02, 11, 12, 22`.
    pub comps: Vec<f64>,
}

impl StressEnergyField {
    /// Builds `T` from a Gram matrix per node.
    pub fn from_gram(grid: Grid2D, t: f64, gram: impl Fn(usize) -> [[f64; 3]; 3] + Sync) -> Self {
        let mut comps = vec![0.0; grid.len() * 6];
        comps.par_chunks_mut(6).enumerate().for_each(|(node, c)| c.copy_from_slice(&stress_of_gram(&gram(node))));
        StressEnergyField { grid, t, comps }
    }

    #[inline]
    pub fn get(&self, node: usize, a: usize, b: usize) -> f64 {
        self.comps[node * 6 + slot(a, b)]
    }

    #[inline]
    pub fn at(&self, node: usize) -> &[f64] {
        &self.comps[node * 6..(node + 1) * 6]
    }

    /// `T_00` per node.
    pub fn energy_density(&self) -> Vec<f64> {
        self.comps.chunks(6).map(|c| c[0]).collect()
    }

    /// `T_00` integrated over the whole grid.
    pub fn energy(&self) -> f64 {
        self.grid.integrate_values(&self.energy_density())
    }
}

/// Gram matrix recovered from packed stress components: `G = T - g tr_g T`.
fn gram_of_stress(c: &[f64]) -> [[f64; 3]; 3] {
    let tr = -c[0] + c[3] + c[5];
    let mut g = [[0.0; 3]; 3];
    for a in 0..3 {
        for b in 0..3 {
            let metric = if a == b { METRIC[a] } else { 0.0 };
            g[a][b] = c[slot(a, b)] - metric * tr;
        }
    }
    g
}

/// `T` from the ambient map: `ψ_0 = ∂_tφ`, `ψ_j = P∂_jφ` with central differences.
pub fn stress_from_state(state: &MapField) -> StressEnergyField {
    let d = state.width();
    let [d1, d2] = spatial_derivatives(state);
    let psi = |node: usize| {
        let r = node * d..(node + 1) * d;
        [&state.phi_t[r.clone()], &d1[r.clone()], &d2[r]]
    };
    StressEnergyField::from_gram(state.grid, state.t, |node| {
        let p = psi(node);
        std::array::from_fn(|a| std::array::from_fn(|b| mink_inner(p[a], p[b])))
    })
}

/// `T` from the differentiated fields at `s = 0`.
pub fn stress_tensor(fields: &GaugeFieldSet) -> StressEnergyField {
    let m = fields.m();
    let lv = &fields.levels[0];
    StressEnergyField::from_gram(fields.grid, fields.t, |node| {
        let r = node * m..(node + 1) * m;
        std::array::from_fn(|a| std::array::from_fn(|b| dot(&lv.psi[a][r.clone()], &lv.psi[b][r.clone()])))
    })
}

/// Stress-energy fields on a sequence of equally spaced time slices.
#[derive(Clone, Debug)]
pub struct StressHistory {
    pub grid: Grid2D,
    pub times: Vec<f64>,
    pub fields: Vec<StressEnergyField>,
}

impl StressHistory {
    pub fn new(fields: Vec<StressEnergyField>) -> Result<Self> {
        let first = fields.first().ok_or_else(|| Error::ShapeMismatch("empty stress history".into()))?;
        let grid = first.grid;
        for f in &fields {
            grid.check_same(&f.grid)?;
        }
        let times: Vec<f64> = fields.iter().map(|f| f.t).collect();
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::ShapeMismatch("stress history times must increase".into()));
        }
        Ok(StressHistory { grid, times, fields })
    }

    pub fn from_trajectory(trajectory: &Trajectory) -> Result<Self> {
        StressHistory::new(trajectory.snapshots.par_iter().map(stress_from_state).collect())
    }

    /// Index of the slice at time `t`, if `t` is one of the slice times.
    fn slice_at(&self, t: f64) -> Option<usize> {
        let scale = self.times.last().unwrap().abs().max(self.times[0].abs()).max(1.0);
        self.times.iter().position(|s| (s - t).abs() <= 1e-12 * scale)
    }

    /// `∫_{a}^{b} g dt` for the piecewise linear interpolant of per-slice values.
    fn integrate_in_time(&self, values: &[f64], a: f64, b: f64) -> f64 {
        let mut total = 0.0;
        for (w, v) in self.times.windows(2).zip(values.windows(2)) {
            let (lo, hi) = (w[0].max(a), w[1].min(b));
            if hi <= lo {
                continue;
            }
            let at = |t: f64| v[0] + (v[1] - v[0]) * (t - w[0]) / (w[1] - w[0]);
            total += 0.5 * (hi - lo) * (at(lo) + at(hi));
        }
        total
    }
}

/// `∂^α T_αβ = -∂_t T_0β + ∂_j T_jβ` on the interior slices of a history.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DivergenceResidual {
    pub times: Vec<f64>,
    /// Sup over nodes per slice and `β`.
    pub sup: Vec<[f64; 3]>,
    #[serde(skip)]
    pub fields: Vec<[Vec<f64>; 3]>,
}

impl DivergenceResidual {
    pub fn max(&self) -> f64 {
        self.sup.iter().flatten().fold(0.0, |m, x| m.max(*x))
    }
}

pub fn divergence_residual(history: &StressHistory) -> Result<DivergenceResidual> {
    let k = history.fields.len();
    if k < 3 {
        return Err(Error::ShapeMismatch(format!("divergence needs three slices, got {k}")));
    }
    let grid = history.grid;
    let mut times = Vec::new();
    let mut sup = Vec::new();
    let mut fields = Vec::new();
    for i in 1..k - 1 {
        let (prev, mid, next) = (&history.fields[i - 1], &history.fields[i], &history.fields[i + 1]);
        let dt = next.t - prev.t;
        let mut dx = [vec![0.0; mid.comps.len()], vec![0.0; mid.comps.len()]];
        for (axis, out) in dx.iter_mut().enumerate() {
            grid.diff_into(&mid.comps, 6, axis, out);
        }
        let per_beta: [Vec<f64>; 3] = std::array::from_fn(|beta| {
            (0..grid.len())
                .into_par_iter()
                .map(|node| {
                    let dt_term = (next.get(node, 0, beta) - prev.get(node, 0, beta)) / dt;
                    let space: f64 = (0..2).map(|j| dx[j][node * 6 + slot(j + 1, beta)]).sum();
                    -dt_term + space
                })
                .collect()
        });
        sup.push(std::array::from_fn(|beta| per_beta[beta].iter().fold(0.0f64, |m, x| m.max(x.abs()))));
        times.push(mid.t);
        fields.push(per_beta);
    }
    Ok(DivergenceResidual { times, sup, fields })
}

/// Vertex of a backward light cone.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Apex {
    pub t: f64,
    pub x: [f64; 2],
}

fn check_disk(grid: &Grid2D, apex: &Apex, r: f64) -> Result<()> {
    let hi = (grid.n - 1) as f64 * grid.h;
    let inside = apex.x.iter().all(|&c| c - r >= 0.0 && c + r <= hi);
    if !(r >= 0.0) || !inside {
        return Err(Error::ConeOutsideBox(format!(
            "disk of radius {r:.4} about ({:.4}, {:.4}) leaves [0, {hi:.4}]^2",
            apex.x[0], apex.x[1]
        )));
    }
    Ok(())
}

/// `∫_{x0}^{x1} min(y1, cy + s) - max(y0, cy - s) dx` clipped at zero, with `s = √(r² - (x-cx)²)`.
fn rect_disk_area(x0: f64, x1: f64, y0: f64, y1: f64, cx: f64, cy: f64, r: f64) -> f64 {
    // centred coordinates, so the clipped ends are exactly ±r
    let (a, b) = ((x0 - cx).max(-r), (x1 - cx).min(r));
    let (y0, y1) = (y0 - cy, y1 - cy);
    if a >= b {
        return 0.0;
    }
    let r2 = r * r;
    let chord = |u: f64| (r2 - u * u).max(0.0).sqrt();
    // antiderivative of the half chord
    let prim = |u: f64| 0.5 * (u * chord(u) + r2 * (u / r).clamp(-1.0, 1.0).asin());
    let mut cuts = vec![a, b];
    for v in [y0.abs(), y1.abs()] {
        if v < r {
            let w = (r2 - v * v).sqrt();
            for u in [-w, w] {
                if u > a && u < b {
                    cuts.push(u);
                }
            }
        }
    }
    cuts.sort_by(|p, q| p.partial_cmp(q).unwrap());
    let mut area = 0.0;
    for w in cuts.windows(2) {
        let (p, q) = (w[0], w[1]);
        if q <= p {
            continue;
        }
        let s = chord(0.5 * (p + q));
        if s.min(y1) <= (-s).max(y0) {
            continue;
        }
        let half = prim(q) - prim(p);
        let upper = if s >= y1 { y1 * (q - p) } else { half };
        let lower = if -s <= y0 { y0 * (q - p) } else { -half };
        area += upper - lower;
    }
    area
}

/// Nodes whose cells meet the disk, with the area of the overlap. The disk is not wrapped
/// periodically, so any part beyond the cells of the outermost nodes is dropped.
pub fn disk_weights(grid: &Grid2D, center: [f64; 2], r: f64) -> Vec<(usize, f64)> {
    let h = grid.h;
    let range = |c: f64| {
        let lo = ((c - r) / h - 0.5).floor().max(0.0) as usize;
        let hi = (((c + r) / h + 0.5).ceil() as usize).min(grid.n - 1);
        lo..=hi
    };
    let mut out = Vec::new();
    for i in range(center[0]) {
        for j in range(center[1]) {
            let (x, y) = grid.position(i, j);
            let area = rect_disk_area(x - 0.5 * h, x + 0.5 * h, y - 0.5 * h, y + 0.5 * h, center[0], center[1], r);
            if area > 0.0 {
                out.push((grid.idx(i, j), area));
            }
        }
    }
    out
}

fn disk_integral(grid: &Grid2D, center: [f64; 2], r: f64, f: impl Fn(usize, [f64; 2]) -> f64) -> f64 {
    disk_weights(grid, center, r)
        .iter()
        .map(|&(node, w)| {
            let (x, y) = grid.position(node / grid.n, node % grid.n);
            w * f(node, [x - center[0], y - center[1]])
        })
        .sum()
}

/// Bilinear interpolation weights `(node, weight)` at a point inside the grid.
fn bilinear(grid: &Grid2D, x: f64, y: f64) -> [(usize, f64); 4] {
    let (u, v) = (x / grid.h, y / grid.h);
    let (i, j) = ((u.floor() as usize).min(grid.n - 2), (v.floor() as usize).min(grid.n - 2));
    let (fx, fy) = (u - i as f64, v - j as f64);
    [
        (grid.idx(i, j), (1.0 - fx) * (1.0 - fy)),
        (grid.idx(i + 1, j), fx * (1.0 - fy)),
        (grid.idx(i, j + 1), (1.0 - fx) * fy),
        (grid.idx(i + 1, j + 1), fx * fy),
    ]
}

/// Number of samples on a circle of radius `r`: about eight per grid spacing of arc length.
fn circle_samples(grid: &Grid2D, r: f64) -> usize {
    ((8.0 * 2.0 * std::f64::consts::PI * r / grid.h).ceil() as usize).max(64)
}

/// Stress components interpolated at `count` equally spaced points of the circle, with the
/// outward unit normal at each.
fn circle_stress(field: &StressEnergyField, center: [f64; 2], r: f64) -> Vec<([f64; 6], [f64; 2])> {
    let count = circle_samples(&field.grid, r);
    (0..count)
        .map(|k| {
            let theta = 2.0 * std::f64::consts::PI * k as f64 / count as f64;
            let n = [theta.cos(), theta.sin()];
            let mut c = [0.0; 6];
            for (node, w) in bilinear(&field.grid, center[0] + r * n[0], center[1] + r * n[1]) {
                for (ci, v) in c.iter_mut().zip(field.at(node)) {
                    *ci += w * v;
                }
            }
            (c, n)
        })
        .collect()
}

/// `∮ f r dω` on the circle of radius `r`.
fn circle_integral(field: &StressEnergyField, center: [f64; 2], r: f64, f: impl Fn(&[f64; 6], [f64; 2]) -> f64) -> f64 {
    if r == 0.0 {
        return 0.0;
    }
    let samples = circle_stress(field, center, r);
    let sum: f64 = samples.iter().map(|(c, n)| f(c, *n)).sum();
    sum * 2.0 * std::f64::consts::PI * r / samples.len() as f64
}

/// `∫_{|x - x*| ≤ |t - t*|} T_00 dx` on one slice.
pub fn cone_energy(field: &StressEnergyField, apex: &Apex) -> Result<f64> {
    let r = apex.t - field.t;
    check_disk(&field.grid, apex, r)?;
    Ok(disk_integral(&field.grid, apex.x, r, |node, _| field.get(node, 0, 0)))
}

/// `T_L0 = T_00 - n_j T_0j` for outward normal `n`.
#[inline]
fn t_l0(c: &[f64; 6], n: [f64; 2]) -> f64 {
    c[0] - n[0] * c[1] - n[1] * c[2]
}

/// `∫_{t2}^{t1} ∮_{|x - x*| = |t - t*|} T_L0 |t - t*| dω dt`.
pub fn flux_integral(history: &StressHistory, apex: &Apex, t2: f64, t1: f64) -> Result<f64> {
    check_window(history, apex, t2, t1)?;
    let per_slice: Vec<f64> = history
        .fields
        .par_iter()
        .map(|f| {
            let r = apex.t - f.t;
            if f.t < t2 || f.t > t1 {
                0.0
            } else {
                circle_integral(f, apex.x, r, t_l0)
            }
        })
        .collect();
    Ok(history.integrate_in_time(&per_slice, t2, t1))
}

fn check_window(history: &StressHistory, apex: &Apex, t2: f64, t1: f64) -> Result<()> {
    if !(t2 < t1 && t1 < apex.t) {
        return Err(Error::validation("cone.t1", format!("need t2 < t1 < apex time, got {t2} < {t1} < {}", apex.t)));
    }
    for (key, t) in [("cone.t2", t2), ("cone.t1", t1)] {
        if history.slice_at(t).is_none() {
            return Err(Error::validation(key, format!("{t} is not a slice time")));
        }
    }
    check_disk(&history.grid, apex, apex.t - t2)
}

/// Both sides of `T_L0 = ½|ψ_L|² + ½|ψ_∇̸|²` on the circle `|x - x*| = |t - t*|`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NullDecomposition {
    pub t: f64,
    /// `T_L0` from interpolated stress components.
    pub t_l0: Vec<f64>,
    /// `½|ψ_L|² + ½|ψ_∇̸|²` from interpolated derivative vectors.
    pub squares: Vec<f64>,
    pub defect: f64,
    pub min_t_l0: f64,
}

pub fn tl0_decomposition(state: &MapField, apex: &Apex) -> Result<NullDecomposition> {
    let grid = state.grid;
    let r = apex.t - state.t;
    check_disk(&grid, apex, r)?;
    let field = stress_from_state(state);
    let d = state.width();
    let [d1, d2] = spatial_derivatives(state);
    let count = circle_samples(&grid, r);
    let mut t_values = Vec::with_capacity(count);
    let mut squares = Vec::with_capacity(count);
    for k in 0..count {
        let theta = 2.0 * std::f64::consts::PI * k as f64 / count as f64;
        let n = [theta.cos(), theta.sin()];
        let weights = bilinear(&grid, apex.x[0] + r * n[0], apex.x[1] + r * n[1]);
        let mut c = [0.0; 6];
        let mut psi = [vec![0.0; d], vec![0.0; d], vec![0.0; d]];
        for (node, w) in weights {
            for (ci, v) in c.iter_mut().zip(field.at(node)) {
                *ci += w * v;
            }
            for (p, src) in psi.iter_mut().zip([&state.phi_t, &d1, &d2]) {
                for (pi, v) in p.iter_mut().zip(&src[node * d..(node + 1) * d]) {
                    *pi += w * v;
                }
            }
        }
        let psi_l: Vec<f64> = (0..d).map(|i| psi[0][i] - n[0] * psi[1][i] - n[1] * psi[2][i]).collect();
        let psi_ang: Vec<f64> = (0..d).map(|i| n[0] * psi[2][i] - n[1] * psi[1][i]).collect();
        t_values.push(t_l0(&c, n));
        squares.push(0.5 * mink_inner(&psi_l, &psi_l) + 0.5 * mink_inner(&psi_ang, &psi_ang));
    }
    let defect = t_values.iter().zip(&squares).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    let min_t_l0 = t_values.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(NullDecomposition { t: state.t, t_l0: t_values, squares, defect, min_t_l0 })
}

/// Smooth step `S(u)` on `[0, 1]` with three vanishing derivatives at both ends, and its first
/// two derivatives.
fn smoothstep(u: f64) -> [f64; 3] {
    let u = u.clamp(0.0, 1.0);
    let v = 1.0 - u;
    [
        u.powi(4) * (35.0 - 84.0 * u + 70.0 * u * u - 20.0 * u.powi(3)),
        140.0 * u.powi(3) * v.powi(3),
        420.0 * u * u * v * v * (1.0 - 2.0 * u),
    ]
}

/// The time cutoff of the mollified scaling field in apex-relative time `τ = t - t*`: one on
/// `[τ2/2, 2τ1]`, zero outside `[τ2, τ1]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cutoff {
    pub tau2: f64,
    pub tau1: f64,
}

impl Cutoff {
    /// `(η, η', η'')` at `τ`.
    pub fn eval(&self, tau: f64) -> [f64; 3] {
        let (rise_lo, rise_hi) = (self.tau2, 0.5 * self.tau2);
        let (fall_lo, fall_hi) = (2.0 * self.tau1, self.tau1);
        if tau <= rise_lo || tau >= fall_hi {
            [0.0, 0.0, 0.0]
        } else if tau < rise_hi {
            let w = rise_hi - rise_lo;
            let [s, s1, s2] = smoothstep((tau - rise_lo) / w);
            [s, s1 / w, s2 / (w * w)]
        } else if tau > fall_lo {
            let w = fall_hi - fall_lo;
            let [s, s1, s2] = smoothstep((fall_hi - tau) / w);
            [s, -s1 / w, s2 / (w * w)]
        } else {
            [1.0, 0.0, 0.0]
        }
    }

    /// Largest `|η''|`, which scales the cutoff contribution to the bulk integral.
    pub fn second_derivative_bound(&self) -> f64 {
        // max of |S″| at (u - ½)² = 1/20
        let peak = 420.0 * 2.0 * 0.04 / 20f64.sqrt();
        let narrow = (0.5 * self.tau2).abs().min(self.tau1.abs());
        peak / (narrow * narrow)
    }
}

/// Vector fields available to the Stokes check.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VectorFieldSpec {
    /// `X = ∂_t`.
    TimeTranslation,
    /// `X̃^β = η x̃^β / ρ̃ + (∂^β η) ρ̃` with the origin shifted to `t* - ε τ1`.
    MollifiedScaling { epsilon: f64 },
}

/// `X^β` and `∂^α X^β` at apex-relative `(τ, y)`, plus the two parts of the bulk integrand
/// evaluated from a Gram matrix when the field is the mollified scaling field.
struct FieldSample {
    x: [f64; 3],
    dx: [[f64; 3]; 3],
    /// `η / ρ̃³` and `x̃^α`, for the non-negative part `η |x̃^α ψ_α|² / ρ̃³`.
    weight: f64,
    shifted: [f64; 3],
    /// `ρ̃ η''` for the cutoff part `ρ̃ T_00 η''`.
    cutoff: f64,
}

fn sample_field(spec: &VectorFieldSpec, cutoff: &Cutoff, tau: f64, y: [f64; 2]) -> Result<FieldSample> {
    match *spec {
        VectorFieldSpec::TimeTranslation => Ok(FieldSample {
            x: [1.0, 0.0, 0.0],
            dx: [[0.0; 3]; 3],
            weight: 0.0,
            shifted: [0.0; 3],
            cutoff: 0.0,
        }),
        VectorFieldSpec::MollifiedScaling { epsilon } => {
            let xt = [tau + epsilon * cutoff.tau1, y[0], y[1]];
            let rho2 = xt[0] * xt[0] - y[0] * y[0] - y[1] * y[1];
            if !(rho2 > 0.0) {
                return Err(Error::SingularField(format!("ρ̃² = {rho2:e} at τ = {tau}, |y| = {}", y[0].hypot(y[1]))));
            }
            let rho = rho2.sqrt();
            let [eta, eta1, eta2] = cutoff.eval(tau);
            // ∂^α η = -δ^α_0 η',  ∂^α ∂^β η = δ^α_0 δ^β_0 η''
            let up_eta = [-eta1, 0.0, 0.0];
            let mut x = [0.0; 3];
            let mut dx = [[0.0; 3]; 3];
            for b in 0..3 {
                x[b] = eta * xt[b] / rho + up_eta[b] * rho;
                for a in 0..3 {
                    let metric = if a == b { METRIC[a] } else { 0.0 };
                    let hess = if a == 0 && b == 0 { eta2 } else { 0.0 };
                    dx[a][b] = up_eta[a] * xt[b] / rho
                        + eta * metric / rho
                        + eta * xt[a] * xt[b] / (rho * rho2)
                        + hess * rho
                        - up_eta[b] * xt[a] / rho;
                }
            }
            Ok(FieldSample { x, dx, weight: eta / (rho * rho2), shifted: xt, cutoff: rho * eta2 })
        }
    }
}

/// Both sides of Stokes' theorem on a truncated cone,
/// `-∫_K T_αβ ∂^α X^β = ∫_{K_t1} T_0β X^β + ∫_cone T_Lβ X^β dσ - ∫_{K_t2} T_0β X^β`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StokesReport {
    pub field: VectorFieldSpec,
    pub t2: f64,
    pub t1: f64,
    pub bulk: f64,
    pub disk_t1: f64,
    pub disk_t2: f64,
    pub cone: f64,
    /// `-bulk - disk_t1 - cone + disk_t2`.
    pub defect: f64,
    /// The non-negative part `∫ η |x̃^α ψ_α|² / ρ̃³` and the cutoff part `∫ ρ̃ T_00 η''`.
    pub bulk_positive: f64,
    pub bulk_cutoff: f64,
    /// Largest pointwise mismatch between the bulk integrand and the sum of its two parts.
    pub split_defect: f64,
}

pub fn stokes_check(history: &StressHistory, spec: &VectorFieldSpec, apex: &Apex, t2: f64, t1: f64) -> Result<StokesReport> {
    check_window(history, apex, t2, t1)?;
    let cutoff = Cutoff { tau2: t2 - apex.t, tau1: t1 - apex.t };
    if let VectorFieldSpec::MollifiedScaling { epsilon } = spec {
        if !(*epsilon > 0.0) {
            return Err(Error::SingularField(format!("ε = {epsilon} leaves ρ̃ singular on the cone")));
        }
        if !(cutoff.tau2 / cutoff.tau1 > 4.0) {
            return Err(Error::validation("cone.lambda", "the cutoff needs (t* - t2) > 4 (t* - t1)"));
        }
    }
    let grid = history.grid;
    let p_comp = |c: &[f64], xs: &[f64; 3], a: usize| (0..3).map(|b| c[slot(a, b)] * xs[b]).sum::<f64>();

    // per slice: bulk, positive part, cutoff part, split defect, cone flux
    let per_slice: Vec<Result<[f64; 5]>> = history
        .fields
        .par_iter()
        .map(|f| {
            if f.t < t2 || f.t > t1 {
                return Ok([0.0; 5]);
            }
            let tau = f.t - apex.t;
            let r = -tau;
            let mut err = None;
            let mut acc = [0.0; 4];
            for (node, w) in disk_weights(&grid, apex.x, r) {
                let (x, y) = grid.position(node / grid.n, node % grid.n);
                let s = match sample_field(spec, &cutoff, tau, [x - apex.x[0], y - apex.x[1]]) {
                    Ok(s) => s,
                    Err(e) => {
                        err = Some(e);
                        break;
                    }
                };
                let c = f.at(node);
                let bulk: f64 = (0..3).flat_map(|a| (0..3).map(move |b| (a, b))).map(|(a, b)| c[slot(a, b)] * s.dx[a][b]).sum();
                let g = gram_of_stress(c);
                let contracted: f64 = (0..3).flat_map(|a| (0..3).map(move |b| (a, b))).map(|(a, b)| s.shifted[a] * s.shifted[b] * g[a][b]).sum();
                let positive = s.weight * contracted;
                let cut = s.cutoff * c[0];
                acc[0] += w * bulk;
                acc[1] += w * positive;
                acc[2] += w * cut;
                acc[3] = acc[3].max((bulk - positive - cut).abs());
            }
            if let Some(e) = err {
                return Err(e);
            }
            let cone = if r == 0.0 {
                0.0
            } else {
                let samples = circle_stress(f, apex.x, r);
                let mut sum = 0.0;
                for (c, n) in &samples {
                    let s = sample_field(spec, &cutoff, tau, [r * n[0], r * n[1]])?;
                    sum += p_comp(c, &s.x, 0) - n[0] * p_comp(c, &s.x, 1) - n[1] * p_comp(c, &s.x, 2);
                }
                sum * 2.0 * std::f64::consts::PI * r / samples.len() as f64
            };
            Ok([acc[0], acc[1], acc[2], acc[3], cone])
        })
        .collect();
    let per_slice: Vec<[f64; 5]> = per_slice.into_iter().collect::<Result<_>>()?;
    let column = |i: usize| -> Vec<f64> { per_slice.iter().map(|v| v[i]).collect() };
    let integral = |i: usize| history.integrate_in_time(&column(i), t2, t1);

    let disk = |t: f64| -> Result<f64> {
        let k = history
            .slice_at(t)
            .ok_or_else(|| Error::validation("cone.t1", format!("disk time {t} is not a slice time")))?;
        let f = &history.fields[k];
        let tau = t - apex.t;
        let mut total = 0.0;
        for (node, w) in disk_weights(&grid, apex.x, -tau) {
            let (x, y) = grid.position(node / grid.n, node % grid.n);
            let s = sample_field(spec, &cutoff, tau, [x - apex.x[0], y - apex.x[1]])?;
            total += w * p_comp(f.at(node), &s.x, 0);
        }
        Ok(total)
    };
    let (disk_t1, disk_t2) = (disk(t1)?, disk(t2)?);
    let (bulk, cone) = (integral(0), integral(4));
    Ok(StokesReport {
        field: *spec,
        t2,
        t1,
        bulk,
        disk_t1,
        disk_t2,
        cone,
        defect: -bulk - disk_t1 - cone + disk_t2,
        bulk_positive: integral(1),
        bulk_cutoff: integral(2),
        split_defect: column(3).iter().fold(0.0, |m, x| m.max(*x)),
    })
}

/// `|(1/t) ψ_S|²` from a Gram matrix at apex-relative `(τ, y)`: `ψ_0 + (y_j/τ) ψ_j`.
pub fn scaled_density(gram: &[[f64; 3]; 3], tau: f64, y: [f64; 2]) -> f64 {
    let c = [1.0, y[0] / tau, y[1] / tau];
    (0..3).flat_map(|a| (0..3).map(move |b| (a, b))).map(|(a, b)| c[a] * c[b] * gram[a][b]).sum()
}

/// One dyadic block `[t*-2^(k+1)|τ_hi|, t*-2^k|τ_hi|]` of the self-similarity integral.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayBlock {
    pub t_lo: f64,
    pub t_hi: f64,
    /// `∫∫_{|x - x*| < |τ|} |(1/τ)ψ_S|² dx dt/|τ|` over the block.
    pub integral: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelfSimilarity {
    pub t_lo: f64,
    pub t_hi: f64,
    /// The block integrals summed, divided by `|log(τ_lo/τ_hi)|`.
    pub value: f64,
    pub blocks: Vec<DecayBlock>,
}

/// The log-averaged cone integral of `|(1/t)ψ_S|²` over `[t_lo, t_hi]`.
pub fn selfsimilar_functional(history: &StressHistory, apex: &Apex, t_lo: f64, t_hi: f64) -> Result<SelfSimilarity> {
    check_window(history, apex, t_lo, t_hi)?;
    let grid = history.grid;
    let per_slice: Vec<f64> = history
        .fields
        .par_iter()
        .map(|f| {
            if f.t < t_lo || f.t > t_hi {
                return 0.0;
            }
            let tau = f.t - apex.t;
            let r = -tau;
            let area = disk_integral(&grid, apex.x, r, |node, y| scaled_density(&gram_of_stress(f.at(node)), tau, y));
            area / r
        })
        .collect();
    let (tau_lo, tau_hi) = (t_lo - apex.t, t_hi - apex.t);
    let mut blocks = Vec::new();
    let mut hi = t_hi;
    let mut k = 0;
    while hi > t_lo {
        let lo = (apex.t + 2f64.powi(k + 1) * tau_hi).max(t_lo);
        blocks.push(DecayBlock { t_lo: lo, t_hi: hi, integral: history.integrate_in_time(&per_slice, lo, hi) });
        hi = lo;
        k += 1;
    }
    let total: f64 = blocks.iter().map(|b| b.integral).sum();
    Ok(SelfSimilarity { t_lo, t_hi, value: total / (tau_lo / tau_hi).ln().abs(), blocks })
}

/// One backward cone and the slab `[t2, t1]` on which it is analysed, `t* - t2 = λ (t* - t1)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConeConfig {
    pub apex: Apex,
    /// Apex-relative time `t* - t1` of the late end of the slab.
    pub depth: f64,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    /// Lower bound accepted for `T_L0` and for the fluxes.
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
}

fn default_lambda() -> f64 {
    8.0
}
fn default_epsilon() -> f64 {
    1.0
}
fn default_tolerance() -> f64 {
    1e-10
}

impl ConeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.depth > 0.0) {
            return Err(Error::validation("diagnostics.cones.depth", "must be positive"));
        }
        if !(self.lambda > 4.0) {
            return Err(Error::validation("diagnostics.cones.lambda", format!("need λ > 4, got {}", self.lambda)));
        }
        if !(self.tolerance >= 0.0) {
            return Err(Error::validation("diagnostics.cones.tolerance", "must be non-negative"));
        }
        Ok(())
    }
}

/// Energies, flux and Stokes defects on one slab `[t2, t1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConeWindow {
    pub t2: f64,
    pub t1: f64,
    pub energy_t2: f64,
    pub energy_t1: f64,
    pub flux: f64,
    /// `E(t1) + flux - E(t2)`.
    pub energy_defect: f64,
    pub scaling: StokesReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConeReport {
    pub apex: Apex,
    pub lambda: f64,
    pub epsilon: f64,
    pub n: usize,
    pub h: f64,
    pub dt: f64,
    /// Cone energy on the earliest slice of the slab.
    pub e0: f64,
    pub window: ConeWindow,
    /// `(t, E(t))` for every slice in the slab.
    pub energies: Vec<(f64, f64)>,
    /// Largest increase of the cone energy between consecutive slices.
    pub worst_energy_increase: f64,
    pub min_t_l0: f64,
    pub null_defect: f64,
    pub self_similarity: SelfSimilarity,
    pub cutoff_second_derivative: f64,
    pub tolerance: f64,
    pub fluxes_nonnegative: bool,
}

fn nearest_slice(history: &StressHistory, t: f64) -> usize {
    let mut best = 0;
    for (k, s) in history.times.iter().enumerate() {
        if (s - t).abs() < (history.times[best] - t).abs() {
            best = k;
        }
    }
    best
}

/// All cone diagnostics of one configuration; the slab ends are moved to the nearest slices.
pub fn cone_report(trajectory: &Trajectory, history: &StressHistory, cfg: &ConeConfig) -> Result<ConeReport> {
    cfg.validate()?;
    let apex = &cfg.apex;
    let k1 = nearest_slice(history, apex.t - cfg.depth);
    let k2 = nearest_slice(history, apex.t - cfg.lambda * cfg.depth);
    let (t1, t2) = (history.times[k1], history.times[k2]);
    let energy = |k: usize| cone_energy(&history.fields[k], apex);
    let energies = (k2..=k1).map(|k| Ok((history.times[k], energy(k)?))).collect::<Result<Vec<_>>>()?;
    let flux = flux_integral(history, apex, t2, t1)?;
    let scaling = stokes_check(history, &VectorFieldSpec::MollifiedScaling { epsilon: cfg.epsilon }, apex, t2, t1)?;
    let (energy_t2, energy_t1) = (energies[0].1, energies.last().unwrap().1);
    let nulls = trajectory
        .snapshots
        .par_iter()
        .filter(|s| s.t >= t2 && s.t <= t1)
        .map(|s| tl0_decomposition(s, apex))
        .collect::<Result<Vec<_>>>()?;
    let min_t_l0 = nulls.iter().map(|d| d.min_t_l0).fold(f64::INFINITY, f64::min);
    let self_similarity = selfsimilar_functional(history, apex, t2, t1)?;
    let cutoff = Cutoff { tau2: t2 - apex.t, tau1: t1 - apex.t };
    Ok(ConeReport {
        apex: *apex,
        lambda: cfg.lambda,
        epsilon: cfg.epsilon,
        n: history.grid.n,
        h: history.grid.h,
        dt: trajectory.dt,
        e0: energy_t2,
        worst_energy_increase: energies.windows(2).map(|w| w[1].1 - w[0].1).fold(f64::NEG_INFINITY, f64::max),
        energies,
        window: ConeWindow { t2, t1, energy_t2, energy_t1, flux, energy_defect: energy_t1 + flux - energy_t2, scaling },
        min_t_l0,
        null_defect: nulls.iter().map(|d| d.defect).fold(0.0, f64::max),
        self_similarity,
        cutoff_second_derivative: cutoff.second_derivative_bound(),
        tolerance: cfg.tolerance,
        fluxes_nonnegative: flux >= -cfg.tolerance && min_t_l0 >= -cfg.tolerance,
    })
}
