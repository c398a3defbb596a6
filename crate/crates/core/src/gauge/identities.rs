//! Discrete residuals of the structural identities satisfied by the differentiated fields:
//! zero torsion, the curvature identity, the heat-tension identity, and the evolution equations
//! in `s` and `t`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{GaugeFieldSet, GaugeLevel};
use crate::error::{Error, Result};
use crate::grid::Grid2D;
use crate::linalg::{self, dot};

/// Sup and L2 norms of a residual field, with its pointwise magnitude.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Residual {
    pub identity: String,
    pub sup: f64,
    pub l2: f64,
    #[serde(skip)]
    pub pointwise: Vec<f64>,
}

impl Residual {
    pub fn from_field(identity: impl Into<String>, grid: &Grid2D, values: &[f64], width: usize) -> Self {
        let pointwise = super::pointwise_norm(values, width);
        let squares: Vec<f64> = pointwise.iter().map(|x| x * x).collect();
        Residual {
            identity: identity.into(),
            sup: pointwise.iter().fold(0.0, |m, x| m.max(*x)),
            l2: grid.integrate_values(&squares).sqrt(),
            pointwise,
        }
    }
}

/// Per-node arithmetic on the flat vector (`m` per node) and matrix (`m*m` per node) fields.
#[derive(Clone, Copy)]
pub(crate) struct Ops {
    pub grid: Grid2D,
    pub m: usize,
}

impl Ops {
    pub fn diff(&self, f: &[f64], width: usize, axis: usize) -> Vec<f64> {
        let mut out = vec![0.0; f.len()];
        self.grid.diff_into(f, width, axis, &mut out);
        out
    }

    /// `a f` per node.
    pub fn apply(&self, a: &[f64], f: &[f64]) -> Vec<f64> {
        let (m, mm) = (self.m, self.m * self.m);
        let mut out = vec![0.0; f.len()];
        out.par_chunks_mut(m)
            .enumerate()
            .for_each(|(n, o)| linalg::matvec_into(&a[n * mm..(n + 1) * mm], &f[n * m..(n + 1) * m], o));
        out
    }

    /// `∂_axis f + A f` with `axis` 0 or 1 and `a` the matching connection component.
    pub fn cov(&self, a: &[f64], f: &[f64], axis: usize) -> Vec<f64> {
        let mut out = self.diff(f, self.m, axis);
        add(&mut out, 1.0, &self.apply(a, f));
        out
    }

    /// `Σ_k D_k D_k f`.
    pub fn cov_laplacian(&self, lv: &GaugeLevel, f: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; f.len()];
        for axis in 0..2 {
            let once = self.cov(&lv.a[1 + axis], f, axis);
            add(&mut out, 1.0, &self.cov(&lv.a[1 + axis], &once, axis));
        }
        out
    }

    /// `(u ∧ v) w = u <v,w> - v <u,w>` per node.
    pub fn wedge_apply(&self, u: &[f64], v: &[f64], w: &[f64]) -> Vec<f64> {
        let m = self.m;
        let mut out = vec![0.0; u.len()];
        out.par_chunks_mut(m).enumerate().for_each(|(n, o)| {
            let r = n * m..(n + 1) * m;
            let (u, v, w) = (&u[r.clone()], &v[r.clone()], &w[r]);
            let (vw, uw) = (dot(v, w), dot(u, w));
            for i in 0..m {
                o[i] = u[i] * vw - v[i] * uw;
            }
        });
        out
    }

    /// `u ∧ v` as skew matrices.
    pub fn wedge(&self, u: &[f64], v: &[f64]) -> Vec<f64> {
        let (m, mm) = (self.m, self.m * self.m);
        let mut out = vec![0.0; u.len() * m];
        out.par_chunks_mut(mm)
            .enumerate()
            .for_each(|(n, o)| linalg::wedge_into(&u[n * m..(n + 1) * m], &v[n * m..(n + 1) * m], o));
        out
    }

    /// `[a, b]` per node.
    pub fn commutator(&self, a: &[f64], b: &[f64]) -> Vec<f64> {
        let (m, mm) = (self.m, self.m * self.m);
        let mut out = vec![0.0; a.len()];
        out.par_chunks_mut(mm).enumerate().for_each(|(n, o)| {
            let r = n * mm..(n + 1) * mm;
            linalg::add_commutator(m, &a[r.clone()], &b[r], o)
        });
        out
    }
}

pub(crate) fn add(out: &mut [f64], c: f64, x: &[f64]) {
    out.par_iter_mut().zip(x.par_iter()).for_each(|(o, x)| *o += c * x);
}

pub(crate) fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.par_iter().zip(b.par_iter()).map(|(x, y)| x - y).collect()
}

pub(crate) fn scaled(c: f64, a: &[f64]) -> Vec<f64> {
    a.par_iter().map(|x| c * x).collect()
}

const PAIRS: [(usize, usize, &str); 3] = [(0, 1, "t,x1"), (0, 2, "t,x2"), (1, 2, "x1,x2")];

fn ops(fields: &GaugeFieldSet) -> Ops {
    Ops { grid: fields.grid, m: fields.m() }
}

/// `D_α ψ_β` with the time component taken from the carried derivative fields; `β` spatial.
fn cov_psi(o: &Ops, lv: &GaugeLevel, alpha: usize, beta: usize) -> Vec<f64> {
    if alpha == 0 {
        let mut out = lv.dt_psi[beta - 1].clone();
        add(&mut out, 1.0, &o.apply(&lv.a[0], &lv.psi[beta]));
        out
    } else {
        o.cov(&lv.a[alpha], &lv.psi[beta], alpha - 1)
    }
}

/// `D_α ψ_β - D_β ψ_α` for the pairs `(t,x1)`, `(t,x2)`, `(x1,x2)` at level `k`.
pub fn torsion_residual(fields: &GaugeFieldSet, k: usize) -> Vec<Residual> {
    let o = ops(fields);
    let lv = &fields.levels[k];
    PAIRS
        .iter()
        .map(|&(a, b, name)| {
            let lhs = cov_psi(&o, lv, a, b);
            let rhs = o.cov(&lv.a[b], &lv.psi[a], b - 1);
            Residual::from_field(format!("zero-torsion[{name}]"), &fields.grid, &sub(&lhs, &rhs), o.m)
        })
        .collect()
}

/// `F_αβ = ∂_α A_β - ∂_β A_α + [A_α, A_β]` for the three pairs.
pub fn curvature_fields(fields: &GaugeFieldSet, k: usize) -> [Vec<f64>; 3] {
    let o = ops(fields);
    let mm = o.m * o.m;
    let lv = &fields.levels[k];
    std::array::from_fn(|p| {
        let (a, b, _) = PAIRS[p];
        let mut f = if a == 0 { lv.dt_a[b - 1].clone() } else { o.diff(&lv.a[b], mm, a - 1) };
        add(&mut f, -1.0, &o.diff(&lv.a[a], mm, b - 1));
        add(&mut f, 1.0, &o.commutator(&lv.a[a], &lv.a[b]));
        f
    })
}

/// `F_αβ - κ ψ_α ∧ ψ_β` for the three pairs.
pub fn curvature_residual(fields: &GaugeFieldSet, k: usize) -> Vec<Residual> {
    let o = ops(fields);
    let lv = &fields.levels[k];
    let f = curvature_fields(fields, k);
    PAIRS
        .iter()
        .zip(f.iter())
        .map(|(&(a, b, name), f)| {
            let expected = scaled(fields.kappa(), &o.wedge(&lv.psi[a], &lv.psi[b]));
            Residual::from_field(format!("curvature-identity[{name}]"), &fields.grid, &sub(f, &expected), o.m * o.m)
        })
        .collect()
}

/// Largest entry of `[A_α, A_β]` over all pairs at level `k`.
pub fn commutator_sup(fields: &GaugeFieldSet, k: usize) -> f64 {
    let o = ops(fields);
    let lv = &fields.levels[k];
    PAIRS
        .iter()
        .map(|&(a, b, _)| o.commutator(&lv.a[a], &lv.a[b]).iter().fold(0.0f64, |m, x| m.max(x.abs())))
        .fold(0.0, f64::max)
}

/// `Σ_k D_k ψ_k`.
pub fn heat_tension(fields: &GaugeFieldSet, k: usize) -> Vec<f64> {
    let o = ops(fields);
    let lv = &fields.levels[k];
    let mut out = o.cov(&lv.a[1], &lv.psi[1], 0);
    add(&mut out, 1.0, &o.cov(&lv.a[2], &lv.psi[2], 1));
    out
}

/// `ψ_s - D_k ψ_k` at level `k`.
pub fn tension_residual(fields: &GaugeFieldSet, k: usize) -> Residual {
    let r = sub(&fields.levels[k].psi_s, &heat_tension(fields, k));
    Residual::from_field("heat-tension", &fields.grid, &r, fields.m())
}

/// A residual field on each interior base level of a ladder.
#[derive(Clone, Debug, PartialEq)]
pub struct EvolutionResidual {
    pub identity: String,
    pub s: Vec<f64>,
    pub width: usize,
    pub fields: Vec<Vec<f64>>,
}

impl EvolutionResidual {
    fn norms(&self, grid: &Grid2D) -> Vec<Residual> {
        self.fields
            .iter()
            .map(|f| Residual::from_field(self.identity.clone(), grid, f, self.width))
            .collect()
    }

    pub fn sup(&self, grid: &Grid2D) -> f64 {
        self.norms(grid).iter().map(|r| r.sup).fold(0.0, f64::max)
    }

    pub fn l2(&self, grid: &Grid2D) -> f64 {
        self.norms(grid).iter().map(|r| r.l2).fold(0.0, f64::max)
    }

    /// Largest pointwise difference to a residual on the same base levels.
    pub fn distance(&self, other: &EvolutionResidual) -> Result<f64> {
        if self.s != other.s || self.width != other.width {
            return Err(Error::GridMismatch(format!("{} residuals live on different levels", self.identity)));
        }
        let mut worst = 0.0f64;
        for (a, b) in self.fields.iter().zip(&other.fields) {
            let diff = sub(a, b);
            worst = worst.max(super::pointwise_norm(&diff, self.width).iter().fold(0.0, |m, x| m.max(*x)));
        }
        Ok(worst)
    }
}

/// Convergence order `log2(|r1 - r2| / |r2 - r4|)` of a residual computed with level spacings
/// refined by 1, 2 and 4.
pub fn self_convergence_rate(r1: &EvolutionResidual, r2: &EvolutionResidual, r4: &EvolutionResidual) -> Result<f64> {
    let coarse = r1.distance(r2)?;
    let fine = r2.distance(r4)?;
    Ok((coarse / fine).log2())
}

/// A residual under level-spacing refinement, separated into the part that vanishes with `ds`
/// and the spatial floor that remains at `ds → 0`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SplitRefinement {
    pub identity: String,
    /// Self-convergence order in `ds`.
    pub rate: f64,
    /// `|r1 - r∞|` per level, with `r∞` the Richardson limit of the three residuals.
    pub ds_part: Vec<f64>,
    /// `|r∞|`.
    pub floor: f64,
}

/// Richardson analysis of residuals computed with level spacings refined by 1, 2 and 4.
pub fn split_refinement(r1: &EvolutionResidual, r2: &EvolutionResidual, r4: &EvolutionResidual) -> Result<SplitRefinement> {
    let rate = self_convergence_rate(r1, r2, r4)?;
    // without a positive order there is nothing to extrapolate and the finest residual stands in
    let c = if rate.is_finite() && rate > 0.1 { 1.0 / (2f64.powf(rate) - 1.0) } else { 0.0 };
    let limit = EvolutionResidual {
        identity: r4.identity.clone(),
        s: r4.s.clone(),
        width: r4.width,
        fields: r4
            .fields
            .iter()
            .zip(&r2.fields)
            .map(|(f4, f2)| f4.iter().zip(f2).map(|(a, b)| a - c * (b - a)).collect())
            .collect(),
    };
    let floor = limit
        .fields
        .iter()
        .map(|f| super::pointwise_norm(f, limit.width).iter().fold(0.0f64, |m, x| m.max(*x)))
        .fold(0.0, f64::max);
    let ds_part = r1
        .fields
        .iter()
        .zip(&limit.fields)
        .map(|(a, b)| super::pointwise_norm(&sub(a, b), limit.width).iter().fold(0.0f64, |m, x| m.max(*x)))
        .collect();
    Ok(SplitRefinement { identity: r1.identity.clone(), rate, ds_part, floor })
}

fn interior_base_levels(fields: &GaugeFieldSet) -> Vec<usize> {
    let top = fields.levels.len() - 1;
    fields.base_levels.iter().copied().filter(|&k| k > 0 && k < top).collect()
}

fn s_derivative(fields: &GaugeFieldSet, k: usize, get: impl Fn(&GaugeLevel) -> Vec<f64>) -> Vec<f64> {
    let ds = fields.s_levels[k + 1] - fields.s_levels[k - 1];
    let mut out = get(&fields.levels[k + 1]);
    add(&mut out, -1.0, &get(&fields.levels[k - 1]));
    out.par_iter_mut().for_each(|x| *x /= ds);
    out
}

/// `D_k D_k f + κ Σ_k (f ∧ ψ_k) ψ_k`.
fn linearized_heat(o: &Ops, kappa: f64, lv: &GaugeLevel, f: &[f64]) -> Vec<f64> {
    let mut out = o.cov_laplacian(lv, f);
    for k in 1..3 {
        add(&mut out, kappa, &o.wedge_apply(f, &lv.psi[k], &lv.psi[k]));
    }
    out
}

/// `∂_s ψ_α - D_k D_k ψ_α - κ (ψ_α ∧ ψ_k) ψ_k` for `α = t, x1, x2`, stacked per node.
pub fn psij_residual(fields: &GaugeFieldSet) -> EvolutionResidual {
    let o = ops(fields);
    let m = o.m;
    let levels = interior_base_levels(fields);
    let data = levels
        .iter()
        .map(|&k| {
            let lv = &fields.levels[k];
            let parts: Vec<Vec<f64>> = (0..3)
                .map(|al| {
                    let lhs = s_derivative(fields, k, |l| l.psi[al].clone());
                    sub(&lhs, &linearized_heat(&o, fields.kappa(), lv, &lv.psi[al]))
                })
                .collect();
            interleave(&parts, m)
        })
        .collect();
    EvolutionResidual {
        identity: "psij-eq".into(),
        s: levels.iter().map(|&k| fields.s_levels[k]).collect(),
        width: 3 * m,
        fields: data,
    }
}

/// `∂_s ψ_s - D_k D_k ψ_s - κ (ψ_s ∧ ψ_k) ψ_k`.
pub fn psis_residual(fields: &GaugeFieldSet) -> EvolutionResidual {
    let o = ops(fields);
    let levels = interior_base_levels(fields);
    let data = levels
        .iter()
        .map(|&k| {
            let lv = &fields.levels[k];
            let lhs = s_derivative(fields, k, |l| l.psi_s.clone());
            sub(&lhs, &linearized_heat(&o, fields.kappa(), lv, &lv.psi_s))
        })
        .collect();
    EvolutionResidual {
        identity: "psis-eq".into(),
        s: levels.iter().map(|&k| fields.s_levels[k]).collect(),
        width: o.m,
        fields: data,
    }
}

fn interleave(parts: &[Vec<f64>], m: usize) -> Vec<f64> {
    let nodes = parts[0].len() / m;
    let mut out = Vec::with_capacity(parts.len() * parts[0].len());
    for n in 0..nodes {
        for p in parts {
            out.extend_from_slice(&p[n * m..(n + 1) * m]);
        }
    }
    out
}

/// Gauge fields of three consecutive wave times on a shared heat-time grid, for identities
/// that need second time derivatives.
pub struct TimeStencil<'a> {
    pub prev: &'a GaugeFieldSet,
    pub mid: &'a GaugeFieldSet,
    pub next: &'a GaugeFieldSet,
    pub dt: f64,
}

impl<'a> TimeStencil<'a> {
    pub fn new(prev: &'a GaugeFieldSet, mid: &'a GaugeFieldSet, next: &'a GaugeFieldSet, dt: f64) -> Result<Self> {
        for other in [prev, next] {
            mid.grid.check_same(&other.grid)?;
            if other.s_levels != mid.s_levels {
                return Err(Error::GridMismatch("time stencil ladders use different heat-time levels".into()));
            }
        }
        if !(dt > 0.0) {
            return Err(Error::validation("gauge.dt", "time step must be positive"));
        }
        Ok(TimeStencil { prev, mid, next, dt })
    }

    fn ops(&self) -> Ops {
        ops(self.mid)
    }

    fn dt_centered(&self, get: impl Fn(&GaugeLevel) -> Vec<f64>, k: usize) -> Vec<f64> {
        let mut out = get(&self.next.levels[k]);
        add(&mut out, -1.0, &get(&self.prev.levels[k]));
        out.par_iter_mut().for_each(|x| *x /= 2.0 * self.dt);
        out
    }

    /// Wave tension `u = -D_t ψ_t + D_1 ψ_1 + D_2 ψ_2` at level `k`.
    pub fn wave_tension(&self, k: usize) -> Vec<f64> {
        let o = self.ops();
        let lv = &self.mid.levels[k];
        let mut u = heat_tension(self.mid, k);
        add(&mut u, -1.0, &self.dt_centered(|l| l.psi[0].clone(), k));
        add(&mut u, -1.0, &o.apply(&lv.a[0], &lv.psi[0]));
        u
    }

    /// `u` at `s = 0`, which vanishes for wave maps.
    pub fn u_boundary(&self) -> Residual {
        Residual::from_field("wave-tension", &self.mid.grid, &self.wave_tension(0), self.mid.m())
    }

    /// `∂_s u - D_k D_k u - κ (u ∧ ψ_k) ψ_k - 4κ (ψ_α ∧ ψ_k) D_k ψ^α`.
    pub fn u_heat_residual(&self) -> EvolutionResidual {
        let fields = self.mid;
        let o = self.ops();
        let kappa = fields.kappa();
        let levels = interior_base_levels(fields);
        let data = levels
            .iter()
            .map(|&k| {
                let lv = &fields.levels[k];
                let ds = fields.s_levels[k + 1] - fields.s_levels[k - 1];
                let mut r = sub(&self.wave_tension(k + 1), &self.wave_tension(k - 1));
                r.par_iter_mut().for_each(|x| *x /= ds);
                let u = self.wave_tension(k);
                add(&mut r, -1.0, &linearized_heat(&o, kappa, lv, &u));
                for al in 0..3 {
                    let sign = if al == 0 { -1.0 } else { 1.0 };
                    for kk in 1..3 {
                        let dpsi = o.cov(&lv.a[kk], &lv.psi[al], kk - 1);
                        add(&mut r, -4.0 * kappa * sign, &o.wedge_apply(&lv.psi[al], &lv.psi[kk], &dpsi));
                    }
                }
                r
            })
            .collect();
        EvolutionResidual {
            identity: "u-heat".into(),
            s: levels.iter().map(|&k| fields.s_levels[k]).collect(),
            width: o.m,
            fields: data,
        }
    }

    /// `∂^α ∂_α ψ_s - ∂_s u + ∂_s (A^α ψ_α) + ∂^α (A_α ψ_s)`.
    pub fn psis_wave_residual(&self) -> EvolutionResidual {
        let fields = self.mid;
        let o = self.ops();
        let m = o.m;
        let levels = interior_base_levels(fields);
        let raised_a_psi = |l: &GaugeLevel| {
            let mut out = scaled(-1.0, &o.apply(&l.a[0], &l.psi[0]));
            add(&mut out, 1.0, &o.apply(&l.a[1], &l.psi[1]));
            add(&mut out, 1.0, &o.apply(&l.a[2], &l.psi[2]));
            out
        };
        let data = levels
            .iter()
            .map(|&k| {
                let lv = &fields.levels[k];
                let ds = fields.s_levels[k + 1] - fields.s_levels[k - 1];
                // -∂_t^2 ψ_s + Σ ∂_k ∂_k ψ_s
                let mut r = self.next.levels[k].psi_s.clone();
                add(&mut r, 1.0, &self.prev.levels[k].psi_s);
                add(&mut r, -2.0, &lv.psi_s);
                r.par_iter_mut().for_each(|x| *x /= -(self.dt * self.dt));
                for axis in 0..2 {
                    let once = o.diff(&lv.psi_s, m, axis);
                    add(&mut r, 1.0, &o.diff(&once, m, axis));
                }
                // - ∂_s u + ∂_s(A^α ψ_α)
                let mut du = sub(&self.wave_tension(k + 1), &self.wave_tension(k - 1));
                add(&mut du, -1.0, &raised_a_psi(&fields.levels[k + 1]));
                add(&mut du, 1.0, &raised_a_psi(&fields.levels[k - 1]));
                add(&mut r, -1.0 / ds, &du);
                // + ∂^α(A_α ψ_s) = -∂_t(A_t ψ_s) + ∂_k(A_k ψ_s)
                let at_psis = self.dt_centered(|l| o.apply(&l.a[0], &l.psi_s), k);
                add(&mut r, -1.0, &at_psis);
                for axis in 0..2 {
                    add(&mut r, 1.0, &o.diff(&o.apply(&lv.a[1 + axis], &lv.psi_s), m, axis));
                }
                r
            })
            .collect();
        EvolutionResidual {
            identity: "psis-wave".into(),
            s: levels.iter().map(|&k| fields.s_levels[k]).collect(),
            width: m,
            fields: data,
        }
    }
}

/// All evolution-equation residuals available for `fields`; the `t`-equations need a stencil.
pub fn evolution_residuals(fields: &GaugeFieldSet, stencil: Option<&TimeStencil>) -> Vec<EvolutionResidual> {
    let mut out = vec![psij_residual(fields), psis_residual(fields)];
    if let Some(st) = stencil {
        out.push(st.u_heat_residual());
        out.push(st.psis_wave_residual());
    }
    out
}
