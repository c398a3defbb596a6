//! Recovery of `A` and `ψ` from integrals over heat time, recovery of the map itself from its
//! differentiated fields, and the JSON report collecting every residual.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::identities::{
    add, commutator_sup, curvature_residual, evolution_residuals, scaled, sub, tension_residual,
    torsion_residual, EvolutionResidual, Ops, Residual, TimeStencil,
};
use super::{FrameField, GaugeFieldSet, GaugeLevel};
use crate::error::{Error, Result};
use crate::geometry::kernel;
use crate::grid::Grid2D;
use crate::linalg;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReconConfig {
    /// Largest admissible tail bound relative to the size of the reconstructed field.
    #[serde(default = "default_tail_tolerance")]
    pub tail_tolerance: f64,
    /// Number of top levels used by the exponential tail fit.
    #[serde(default = "default_tail_window")]
    pub tail_window: usize,
}

fn default_tail_tolerance() -> f64 {
    1e-3
}
fn default_tail_window() -> usize {
    5
}

impl Default for ReconConfig {
    fn default() -> Self {
        ReconConfig { tail_tolerance: default_tail_tolerance(), tail_window: default_tail_window() }
    }
}

impl ReconConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tail_tolerance > 0.0) {
            return Err(Error::validation("gauge.tail_tolerance", "must be positive"));
        }
        if self.tail_window < 2 {
            return Err(Error::validation("gauge.tail_window", "need at least two levels"));
        }
        Ok(())
    }
}

fn sup_abs(x: &[f64]) -> f64 {
    x.par_iter().map(|v| v.abs()).reduce(|| 0.0, f64::max)
}

fn sup_norm(x: &[f64], width: usize) -> f64 {
    x.par_chunks(width).map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt()).reduce(|| 0.0, f64::max)
}

/// Bound on the stacked pointwise norm from bounds on each block.
fn stacked(bounds: impl Iterator<Item = f64>) -> f64 {
    bounds.map(|b| b * b).sum::<f64>().sqrt()
}

/// Integral of the tail `(s_K, ∞)` of a quantity whose sup-norms on the top levels are `g`,
/// assuming exponential decay fitted by least squares to `log g`. Returns `(bound, rate)`.
pub fn exponential_tail(s: &[f64], g: &[f64]) -> (f64, f64) {
    let last = *g.last().unwrap();
    if last == 0.0 {
        return (0.0, f64::INFINITY);
    }
    if g.iter().any(|&x| x <= 0.0) || g.len() < 2 {
        return (f64::INFINITY, 0.0);
    }
    let n = g.len() as f64;
    let ys: Vec<f64> = g.iter().map(|x| x.ln()).collect();
    let sm = s.iter().sum::<f64>() / n;
    let ym = ys.iter().sum::<f64>() / n;
    let cov: f64 = s.iter().zip(&ys).map(|(a, b)| (a - sm) * (b - ym)).sum();
    let var: f64 = s.iter().map(|a| (a - sm) * (a - sm)).sum();
    let rate = -cov / var;
    if !(rate > 0.0) {
        return (f64::INFINITY, rate);
    }
    (last / rate, rate)
}

/// Backward trapezoid sums `∫_{s_k}^{s_K} f ds` for every level, with a per-level bound of the
/// quadrature error in the pointwise norm over `width` components, from second divided
/// differences.
struct Quadrature {
    sums: Vec<Vec<f64>>,
    error: Vec<f64>,
}

fn backward_trapezoid(s: &[f64], f: &[Vec<f64>], width: usize) -> Quadrature {
    let levels = s.len();
    // sup of the second divided difference centred at each interior level
    let curvature: Vec<f64> = (0..levels)
        .map(|c| {
            if c == 0 || c + 1 >= levels {
                return 0.0;
            }
            let (h0, h1) = (s[c] - s[c - 1], s[c + 1] - s[c]);
            let dd: Vec<f64> = f[c - 1]
                .par_iter()
                .zip(f[c].par_iter().zip(f[c + 1].par_iter()))
                .map(|(a, (b, cc))| 2.0 * ((cc - b) / h1 - (b - a) / h0) / (h0 + h1))
                .collect();
            sup_norm(&dd, width)
        })
        .collect();
    let mut sums = vec![Vec::new(); levels];
    sums[levels - 1] = vec![0.0; f[0].len()];
    let mut error = vec![0.0; levels];
    for k in (0..levels - 1).rev() {
        let h = s[k + 1] - s[k];
        let mut acc = sums[k + 1].clone();
        acc.par_iter_mut()
            .zip(f[k].par_iter().zip(f[k + 1].par_iter()))
            .for_each(|(a, (x, y))| *a += 0.5 * h * (x + y));
        sums[k] = acc;
        let bound = if levels >= 3 {
            let (lo, hi) = (k.clamp(1, levels - 2), (k + 1).clamp(1, levels - 2));
            curvature[lo].max(curvature[hi])
        } else {
            0.0
        };
        error[k] = error[k + 1] + h * h * h / 12.0 * bound;
    }
    Quadrature { sums, error }
}

/// Outcome of recovering a field from an integral over heat time.
#[derive(Clone, Debug)]
pub struct FieldReconstruction {
    pub identity: String,
    /// Reconstructed `α = t, x1, x2` components at each base level.
    pub fields: Vec<[Vec<f64>; 3]>,
    /// Extracted minus reconstructed, on every base level.
    pub residual: EvolutionResidual,
    /// Quadrature error bound per base level.
    pub quadrature_error: Vec<f64>,
    pub tail_bound: f64,
    pub tail_rate: f64,
}

impl FieldReconstruction {
    /// `(residual sup, quadrature + tail)` per base level.
    pub fn budget(&self) -> Vec<(f64, f64)> {
        self.residual
            .fields
            .iter()
            .zip(&self.quadrature_error)
            .map(|(r, q)| {
                let sup = super::pointwise_norm(r, self.residual.width).iter().fold(0.0f64, |m, x| m.max(*x));
                (sup, q + self.tail_bound)
            })
            .collect()
    }
}

fn check_tail(bound: f64, scale: f64, cfg: &ReconConfig) -> Result<()> {
    let tolerance = cfg.tail_tolerance * scale;
    if bound > tolerance && bound > 0.0 {
        return Err(Error::TailTooLarge { bound, tolerance });
    }
    Ok(())
}

fn stack3(parts: &[Vec<f64>; 3], width: usize) -> Vec<f64> {
    let nodes = parts[0].len() / width;
    let mut out = Vec::with_capacity(3 * parts[0].len());
    for n in 0..nodes {
        for p in parts {
            out.extend_from_slice(&p[n * width..(n + 1) * width]);
        }
    }
    out
}

/// `A_α(s_k) = -κ ∫_{s_k}^∞ ψ_s ∧ ψ_α ds` by the trapezoid rule on the ladder, plus an
/// exponential tail bound for `(s_max, ∞)`.
pub fn reconstruct_a(fields: &GaugeFieldSet, cfg: &ReconConfig) -> Result<FieldReconstruction> {
    cfg.validate()?;
    let o = Ops { grid: fields.grid, m: fields.m() };
    let mm = o.m * o.m;
    let kappa = fields.kappa();
    let integrands: Vec<Vec<Vec<f64>>> = (0..3)
        .map(|al| {
            fields
                .levels
                .iter()
                .map(|lv| scaled(-kappa, &o.wedge(&lv.psi_s, &lv.psi[al])))
                .collect()
        })
        .collect();
    let quads: Vec<Quadrature> = integrands.iter().map(|f| backward_trapezoid(&fields.s_levels, f, mm)).collect();
    let (tail_bound, tail_rate) = fit_tail(fields, cfg, |k| stacked(integrands.iter().map(|f| sup_norm(&f[k], mm))));
    let mut recon = Vec::new();
    let mut residual = Vec::new();
    let mut quad_err = Vec::new();
    for &k in &fields.base_levels {
        let parts: [Vec<f64>; 3] = std::array::from_fn(|al| quads[al].sums[k].clone());
        let res: [Vec<f64>; 3] = std::array::from_fn(|al| sub(&fields.levels[k].a[al], &parts[al]));
        residual.push(stack3(&res, mm));
        quad_err.push(stacked(quads.iter().map(|q| q.error[k])));
        recon.push(parts);
    }
    let scale = stacked(recon[0].iter().map(|x| sup_norm(x, mm)))
        .max(stacked(fields.levels[0].a.iter().map(|x| sup_norm(x, mm))));
    check_tail(tail_bound, scale, cfg)?;
    Ok(FieldReconstruction {
        identity: "A-fundamental".into(),
        fields: recon,
        residual: EvolutionResidual {
            identity: "A-fundamental".into(),
            s: fields.base_levels.iter().map(|&k| fields.s_levels[k]).collect(),
            width: 3 * mm,
            fields: residual,
        },
        quadrature_error: quad_err,
        tail_bound,
        tail_rate,
    })
}

fn fit_tail(fields: &GaugeFieldSet, cfg: &ReconConfig, sup_at: impl Fn(usize) -> f64) -> (f64, f64) {
    let levels = fields.levels.len();
    let start = levels.saturating_sub(cfg.tail_window);
    let s = &fields.s_levels[start..];
    let g: Vec<f64> = (start..levels).map(sup_at).collect();
    exponential_tail(s, &g)
}

/// `ψ` recovered from the heat-tension field, together with the cubic correction.
#[derive(Clone, Debug)]
pub struct PsiReconstruction {
    pub reconstruction: FieldReconstruction,
    /// `Ψ_α = -∫_{s_k}^∞ A_α ψ_s ds` at each base level.
    pub correction: Vec<[Vec<f64>; 3]>,
    /// `sup |Ψ(0)| / sup |ψ(0)|`.
    pub correction_ratio: f64,
    pub correction_sup: f64,
}

/// `ψ_α(s_k) = -∂_α ∫_{s_k}^∞ ψ_s ds + Ψ_α(s_k)` with `Ψ_α = -∫ A_α ψ_s ds`.
pub fn reconstruct_psi(fields: &GaugeFieldSet, cfg: &ReconConfig) -> Result<PsiReconstruction> {
    cfg.validate()?;
    let o = Ops { grid: fields.grid, m: fields.m() };
    let m = o.m;
    let s = &fields.s_levels;
    let psi_s: Vec<Vec<f64>> = fields.levels.iter().map(|l| l.psi_s.clone()).collect();
    let dt_psi_s: Vec<Vec<f64>> = fields.levels.iter().map(|l| l.dt_psi_s.clone()).collect();
    let a_psi_s: Vec<Vec<Vec<f64>>> = (0..3)
        .map(|al| fields.levels.iter().map(|l| scaled(-1.0, &o.apply(&l.a[al], &l.psi_s))).collect())
        .collect();
    let integral = backward_trapezoid(s, &psi_s, m);
    let integral_t = backward_trapezoid(s, &dt_psi_s, m);
    let corrections: Vec<Quadrature> = a_psi_s.iter().map(|f| backward_trapezoid(s, f, m)).collect();

    // ∂_s ψ_α = ∂_α ψ_s + A_α ψ_s, used for the tail and the quadrature estimate
    let rate_of = |lv: &GaugeLevel, al: usize| -> Vec<f64> {
        let mut out = if al == 0 { lv.dt_psi_s.clone() } else { o.diff(&lv.psi_s, m, al - 1) };
        add(&mut out, 1.0, &o.apply(&lv.a[al], &lv.psi_s));
        out
    };
    let (tail_bound, tail_rate) =
        fit_tail(fields, cfg, |k| stacked((0..3).map(|al| sup_norm(&rate_of(&fields.levels[k], al), m))));
    let rates: Vec<Vec<Vec<f64>>> =
        (0..3).map(|al| fields.levels.iter().map(|l| rate_of(l, al)).collect()).collect();
    let rate_quads: Vec<Quadrature> = rates.iter().map(|f| backward_trapezoid(s, f, m)).collect();

    let mut recon = Vec::new();
    let mut correction = Vec::new();
    let mut residual = Vec::new();
    let mut quad_err = Vec::new();
    for &k in &fields.base_levels {
        let corr: [Vec<f64>; 3] = std::array::from_fn(|al| corrections[al].sums[k].clone());
        let parts: [Vec<f64>; 3] = std::array::from_fn(|al| {
            let mut g = if al == 0 {
                scaled(-1.0, &integral_t.sums[k])
            } else {
                scaled(-1.0, &o.diff(&integral.sums[k], m, al - 1))
            };
            add(&mut g, 1.0, &corr[al]);
            g
        });
        let res: [Vec<f64>; 3] = std::array::from_fn(|al| sub(&fields.levels[k].psi[al], &parts[al]));
        residual.push(stack3(&res, m));
        quad_err.push(stacked(rate_quads.iter().map(|q| q.error[k])));
        recon.push(parts);
        correction.push(corr);
    }
    let psi_sup = stacked(fields.levels[0].psi.iter().map(|x| sup_norm(x, m)));
    let correction_sup = stacked(correction[0].iter().map(|x| sup_norm(x, m)));
    check_tail(tail_bound, psi_sup, cfg)?;
    Ok(PsiReconstruction {
        reconstruction: FieldReconstruction {
            identity: "psi-gradient".into(),
            fields: recon,
            residual: EvolutionResidual {
                identity: "psi-gradient".into(),
                s: fields.base_levels.iter().map(|&k| fields.s_levels[k]).collect(),
                width: 3 * m,
                fields: residual,
            },
            quadrature_error: quad_err,
            tail_bound,
            tail_rate,
        },
        correction,
        correction_ratio: if psi_sup > 0.0 { correction_sup / psi_sup } else { 0.0 },
        correction_sup,
    })
}

/// The map and frame rebuilt from `(ψ_x, A_x)` at `s = 0`.
#[derive(Clone, Debug)]
pub struct MapReconstruction {
    /// Integrated along the first axis, then the second.
    pub phi: Vec<f64>,
    /// Largest distance to the stored map.
    pub discrepancy: f64,
    /// Largest distance between the two integration orders.
    pub path_dependence: f64,
}

/// Integrates `∂_k φ = e ψ_k`, `∇_k e = e A_k` from node `(0,0)`, seeded with the stored map and
/// frame there.
pub fn reconstruct_map(fields: &GaugeFieldSet, phi: &[f64], frame0: &[f64]) -> Result<MapReconstruction> {
    let grid = fields.grid;
    let target = fields.target;
    let m = target.m;
    let d = target.dim();
    let md = m * d;
    if phi.len() != grid.len() * d || frame0.len() < md {
        return Err(Error::ShapeMismatch("map or frame does not match the gauge fields".into()));
    }
    let lv = &fields.levels[0];
    let run = |first: usize| -> Result<Vec<f64>> {
        let n = grid.n;
        let mut out_phi = vec![0.0; grid.len() * d];
        let mut out_e = vec![0.0; grid.len() * md];
        out_phi[..d].copy_from_slice(&phi[..d]);
        out_e[..md].copy_from_slice(&frame0[..md]);
        let second = 1 - first;
        let node = |a: usize, b: usize| if first == 0 { grid.idx(a, b) } else { grid.idx(b, a) };
        for a in 1..n {
            step(fields, lv, &mut out_phi, &mut out_e, node(a - 1, 0), node(a, 0), first)?;
        }
        for a in 0..n {
            for b in 1..n {
                step(fields, lv, &mut out_phi, &mut out_e, node(a, b - 1), node(a, b), second)?;
            }
        }
        Ok(out_phi)
    };
    let rows = run(0)?;
    let cols = run(1)?;
    let r = target.radius();
    let worst = |x: &[f64], y: &[f64]| {
        x.par_chunks(d)
            .zip(y.par_chunks(d))
            .map(|(p, q)| kernel::distance(r, p, q))
            .reduce(|| 0.0, f64::max)
    };
    Ok(MapReconstruction {
        discrepancy: worst(&rows, phi).max(worst(&cols, phi)),
        path_dependence: worst(&rows, &cols),
        phi: rows,
    })
}

fn step(
    fields: &GaugeFieldSet,
    lv: &GaugeLevel,
    phi: &mut [f64],
    e: &mut [f64],
    from: usize,
    to: usize,
    axis: usize,
) -> Result<()> {
    let target = fields.target;
    let m = target.m;
    let d = target.dim();
    let md = m * d;
    let mm = m * m;
    let h = fields.grid.h;
    let psi = &lv.psi[1 + axis];
    let a = &lv.a[1 + axis];
    let avg_a: Vec<f64> = (0..mm).map(|c| 0.5 * h * (a[from * mm + c] + a[to * mm + c])).collect();
    let half: Vec<f64> = avg_a.iter().map(|x| 0.5 * x).collect();
    let rotate = |gen: &[f64]| -> Vec<f64> {
        // e R with R = exp(gen): new e_j = Σ_i e_i R_ij
        let rot = linalg::expm(m, gen);
        let f = &e[from * md..(from + 1) * md];
        let mut out = vec![0.0; md];
        for j in 0..m {
            for i in 0..m {
                for c in 0..d {
                    out[j * d + c] += f[i * d + c] * rot[i * m + j];
                }
            }
        }
        out
    };
    let mid_frame = rotate(&half);
    let full_frame = rotate(&avg_a);
    let mut w = vec![0.0; d];
    for j in 0..m {
        let comp = 0.5 * h * (psi[from * m + j] + psi[to * m + j]);
        for c in 0..d {
            w[c] += comp * mid_frame[j * d + c];
        }
    }
    let p: Vec<f64> = phi[from * d..(from + 1) * d].to_vec();
    let mut q = vec![0.0; d];
    kernel::exp_into(target.radius(), &p, &w, &mut q);
    kernel::normalize_point(target.radius_sq(), &mut q)?;
    let r2 = target.radius_sq();
    for j in 0..m {
        kernel::transport_into(r2, &p, &q, &full_frame[j * d..(j + 1) * d], &mut e[to * md + j * d..to * md + (j + 1) * d]);
    }
    kernel::orthonormalize_in_place(&q, &mut e[to * md..(to + 1) * md], m)?;
    phi[to * d..(to + 1) * d].copy_from_slice(&q);
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualEntry {
    pub identity: String,
    pub norm: String,
    pub value: f64,
    pub n: usize,
    pub h: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionReport {
    pub t: f64,
    pub entries: Vec<ResidualEntry>,
    pub psi_correction_ratio: f64,
    pub tail_bound_a: f64,
    pub tail_bound_psi: f64,
    pub tail_model: String,
}

impl ReconstructionReport {
    pub fn value(&self, identity: &str, norm: &str) -> Option<f64> {
        self.entries.iter().find(|e| e.identity == identity && e.norm == norm).map(|e| e.value)
    }

    fn push(&mut self, grid: &Grid2D, identity: impl Into<String>, norm: &str, value: f64, s: Option<f64>) {
        self.entries.push(ResidualEntry {
            identity: identity.into(),
            norm: norm.into(),
            value,
            n: grid.n,
            h: grid.h,
            s,
        });
    }

    fn push_residual(&mut self, grid: &Grid2D, r: &Residual, s: Option<f64>) {
        self.push(grid, r.identity.clone(), "sup", r.sup, s);
        self.push(grid, r.identity.clone(), "l2", r.l2, s);
    }
}

/// Every structural residual of one slice; the `t`-evolution identities are included when a
/// time stencil is supplied.
pub fn build_report(
    fields: &GaugeFieldSet,
    frames: &FrameField,
    phi0: &[f64],
    stencil: Option<&TimeStencil>,
    cfg: &ReconConfig,
) -> Result<ReconstructionReport> {
    let grid = fields.grid;
    let a_rec = reconstruct_a(fields, cfg)?;
    let psi_rec = reconstruct_psi(fields, cfg)?;
    let mut report = ReconstructionReport {
        t: fields.t,
        entries: Vec::new(),
        psi_correction_ratio: psi_rec.correction_ratio,
        tail_bound_a: a_rec.tail_bound,
        tail_bound_psi: psi_rec.reconstruction.tail_bound,
        tail_model: format!("exponential fit over the last {} levels", cfg.tail_window),
    };
    let s0 = Some(0.0);
    for r in torsion_residual(fields, 0) {
        report.push_residual(&grid, &r, s0);
    }
    for r in curvature_residual(fields, 0) {
        report.push_residual(&grid, &r, s0);
    }
    report.push(&grid, "commutator", "sup", commutator_sup(fields, 0), s0);
    report.push_residual(&grid, &tension_residual(fields, 0), s0);
    report.push(&grid, "frame-orthonormality", "sup", frames.orthonormality_defect(), None);
    let transport = frames
        .transport_residual
        .iter()
        .enumerate()
        .map(|(k, r)| {
            let ds = fields.s_levels[k + 1] - fields.s_levels[k];
            r / (ds * ds)
        })
        .fold(0.0, f64::max);
    report.push(&grid, "heat-temporal-transport/ds^2", "sup", transport, None);
    let top = fields.top();
    let s_max = Some(*fields.s_levels.last().unwrap());
    let psi_top = top.psi.iter().map(|x| sup_abs(x)).fold(0.0, f64::max);
    let a_top = top.a.iter().map(|x| sup_abs(x)).fold(0.0, f64::max);
    report.push(&grid, "psi-at-s-max", "sup", psi_top, s_max);
    report.push(&grid, "A-at-s-max", "sup", a_top, s_max);
    report.push(&grid, "eps-stop", "sup", fields.eps_stop, s_max);
    for rec in [&a_rec, &psi_rec.reconstruction] {
        let r = &rec.residual;
        report.push(&grid, rec.identity.clone(), "sup", r.sup(&grid), None);
        report.push(&grid, rec.identity.clone(), "l2", r.l2(&grid), None);
        report.push(&grid, format!("{}-quadrature", rec.identity), "sup", rec.quadrature_error[0], s0);
    }
    report.push(&grid, "Psi-correction", "sup", psi_rec.correction_sup, s0);
    for r in evolution_residuals(fields, stencil) {
        report.push(&grid, r.identity.clone(), "sup", r.sup(&grid), None);
        report.push(&grid, r.identity.clone(), "l2", r.l2(&grid), None);
    }
    if let Some(st) = stencil {
        report.push_residual(&grid, &st.u_boundary(), s0);
    }
    let map = reconstruct_map(fields, phi0, &frames.e[0])?;
    report.push(&grid, "map-reconstruction", "sup", map.discrepancy, s0);
    report.push(&grid, "map-path-dependence", "sup", map.path_dependence, s0);
    Ok(report)
}
