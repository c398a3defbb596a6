//! Caloric gauge: orthonormal frames dragged back from `s = ∞` by parallel transport along a
//! heat ladder, and the differentiated fields `ψ_α`, `A_α`, `ψ_s` they induce.
//!
//! Index convention: `α = 0` is `t`, `α = 1, 2` are `x1, x2`. Frames store `m` ambient vectors
//! per node back to back; skew matrices are `m x m` row-major.

pub mod identities;
pub mod reconstruct;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{kernel, mink_inner, OrthoFrame, TargetConfig};
use crate::grid::Grid2D;
use crate::heat::{tension_derivative, HeatLadder};
use crate::linalg;

pub use identities::{
    commutator_sup, curvature_fields, curvature_residual, evolution_residuals, self_convergence_rate, split_refinement,
    tension_residual, torsion_residual, EvolutionResidual, Residual, SplitRefinement, TimeStencil,
};
pub use reconstruct::{
    build_report, reconstruct_a, reconstruct_map, reconstruct_psi, FieldReconstruction, MapReconstruction,
    PsiReconstruction, ReconConfig, ReconstructionReport, ResidualEntry,
};

/// Frames `e(s_k, x)` along a ladder together with their exact time derivatives.
#[derive(Clone, Debug)]
pub struct FrameField {
    pub grid: Grid2D,
    pub target: TargetConfig,
    pub s_levels: Vec<f64>,
    pub e: Vec<Vec<f64>>,
    pub e_t: Vec<Vec<f64>>,
    pub e_infinity: OrthoFrame,
    /// Per backward step, `sup |<e_j(s_{k+1}), e_i(s_k)> - δ_ij|`.
    pub transport_residual: Vec<f64>,
}

impl FrameField {
    pub fn m(&self) -> usize {
        self.target.m
    }

    /// Largest `|<e_i, e_j> - δ_ij|` over all levels and nodes.
    pub fn orthonormality_defect(&self) -> f64 {
        let m = self.m();
        let d = self.target.dim();
        self.e
            .par_iter()
            .map(|level| {
                level
                    .chunks(m * d)
                    .map(|f| frame_defect(f, m, d))
                    .fold(0.0, f64::max)
            })
            .reduce(|| 0.0, f64::max)
    }
}

fn frame_defect(f: &[f64], m: usize, d: usize) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..m {
        for j in 0..m {
            let g = mink_inner(&f[i * d..(i + 1) * d], &f[j * d..(j + 1) * d]);
            worst = worst.max((g - if i == j { 1.0 } else { 0.0 }).abs());
        }
    }
    worst
}

/// The standard frame at the ladder's limit point.
pub fn default_seed(ladder: &HeatLadder) -> OrthoFrame {
    let target = ladder.target;
    let p = target.project_point(&ladder.phi_infinity).expect("limit point lies on the sheet");
    target.standard_frame(&p)
}

/// Transports `e_seed` from `φ_∞` to every node of the top level, then sweeps down the ladder
/// by geodesic transport between consecutive levels.
pub fn transport_frame(ladder: &HeatLadder, e_seed: &OrthoFrame) -> Result<FrameField> {
    let target = ladder.target;
    let m = target.m;
    let d = target.dim();
    let md = m * d;
    let r2 = target.radius_sq();
    if e_seed.vectors.len() != m || e_seed.vectors.iter().any(|v| v.len() != d) {
        return Err(Error::ShapeMismatch(format!("seed frame must hold {m} vectors of length {d}")));
    }
    let pinf = ladder.phi_infinity.clone();
    // move the seed to φ_∞ if it was given elsewhere
    let mut seed = vec![0.0; md];
    for (j, v) in e_seed.vectors.iter().enumerate() {
        kernel::transport_into(r2, &e_seed.base.coords, &pinf, v, &mut seed[j * d..(j + 1) * d]);
    }
    kernel::orthonormalize_in_place(&pinf, &mut seed, m)?;
    let zero = vec![0.0; d];

    let levels = ladder.levels();
    let top = levels - 1;
    let nodes = ladder.grid.len();
    let mut e = vec![Vec::new(); levels];
    let mut e_t = vec![Vec::new(); levels];
    let mut frame = vec![0.0; nodes * md];
    let mut frame_t = vec![0.0; nodes * md];
    let phi = &ladder.phi[top];
    let v = &ladder.phi_t[top];
    frame
        .par_chunks_mut(md)
        .zip(frame_t.par_chunks_mut(md))
        .enumerate()
        .try_for_each(|(node, (f, ft))| {
            let q = &phi[node * d..(node + 1) * d];
            let dq = &v[node * d..(node + 1) * d];
            for j in 0..m {
                let sj = &seed[j * d..(j + 1) * d];
                kernel::transport_into(r2, &pinf, q, sj, &mut f[j * d..(j + 1) * d]);
                kernel::transport_derivative_into(r2, &pinf, q, sj, &zero, dq, &zero, &mut ft[j * d..(j + 1) * d]);
            }
            kernel::orthonormalize_in_place(q, f, m)
        })?;
    e[top] = frame;
    e_t[top] = frame_t;

    let mut transport_residual = vec![0.0; top];
    for k in (0..top).rev() {
        let (p_all, q_all) = (&ladder.phi[k + 1], &ladder.phi[k]);
        let (dp_all, dq_all) = (&ladder.phi_t[k + 1], &ladder.phi_t[k]);
        let (above, above_t) = (&e[k + 1], &e_t[k + 1]);
        let mut frame = vec![0.0; nodes * md];
        let mut frame_t = vec![0.0; nodes * md];
        let residual = frame
            .par_chunks_mut(md)
            .zip(frame_t.par_chunks_mut(md))
            .enumerate()
            .map(|(node, (f, ft))| {
                let r = node * d..(node + 1) * d;
                let (p, q) = (&p_all[r.clone()], &q_all[r.clone()]);
                let (dp, dq) = (&dp_all[r.clone()], &dq_all[r]);
                let src = &above[node * md..(node + 1) * md];
                let src_t = &above_t[node * md..(node + 1) * md];
                for j in 0..m {
                    let cols = j * d..(j + 1) * d;
                    kernel::transport_into(r2, p, q, &src[cols.clone()], &mut f[cols.clone()]);
                    kernel::transport_derivative_into(
                        r2,
                        p,
                        q,
                        &src[cols.clone()],
                        dp,
                        dq,
                        &src_t[cols.clone()],
                        &mut ft[cols],
                    );
                }
                let mut worst = 0.0f64;
                for i in 0..m {
                    for j in 0..m {
                        let g = mink_inner(&src[j * d..(j + 1) * d], &f[i * d..(i + 1) * d]);
                        worst = worst.max((g - if i == j { 1.0 } else { 0.0 }).abs());
                    }
                }
                worst
            })
            .reduce(|| 0.0, f64::max);
        transport_residual[k] = residual;
        e[k] = frame;
        e_t[k] = frame_t;
    }

    let e_infinity = OrthoFrame {
        base: target.project_point(&pinf)?,
        vectors: (0..m).map(|j| seed[j * d..(j + 1) * d].to_vec()).collect(),
    };
    Ok(FrameField {
        grid: ladder.grid,
        target,
        s_levels: ladder.s_levels.clone(),
        e,
        e_t,
        e_infinity,
        transport_residual,
    })
}

/// Differentiated fields at one heat level.
#[derive(Clone, Debug, PartialEq)]
pub struct GaugeLevel {
    pub s: f64,
    /// `ψ_t, ψ_x1, ψ_x2`, `m` components per node.
    pub psi: [Vec<f64>; 3],
    /// `A_t, A_x1, A_x2`, one skew `m x m` matrix per node.
    pub a: [Vec<f64>; 3],
    pub psi_s: Vec<f64>,
    /// `∂_t ψ_x1, ∂_t ψ_x2` from the carried tangent-linear field.
    pub dt_psi: [Vec<f64>; 2],
    pub dt_a: [Vec<f64>; 2],
    pub dt_psi_s: Vec<f64>,
}

impl GaugeLevel {
    pub fn zeros(s: f64, nodes: usize, m: usize) -> Self {
        let v = || vec![0.0; nodes * m];
        let a = || vec![0.0; nodes * m * m];
        GaugeLevel {
            s,
            psi: [v(), v(), v()],
            a: [a(), a(), a()],
            psi_s: v(),
            dt_psi: [v(), v()],
            dt_a: [a(), a()],
            dt_psi_s: v(),
        }
    }
}

/// Differentiated fields on every level of one ladder.
#[derive(Clone, Debug)]
pub struct GaugeFieldSet {
    pub grid: Grid2D,
    pub target: TargetConfig,
    pub t: f64,
    pub s_levels: Vec<f64>,
    pub base_levels: Vec<usize>,
    pub eps_stop: f64,
    pub levels: Vec<GaugeLevel>,
}

impl GaugeFieldSet {
    pub fn m(&self) -> usize {
        self.target.m
    }

    pub fn kappa(&self) -> f64 {
        self.target.kappa
    }

    pub fn top(&self) -> &GaugeLevel {
        self.levels.last().unwrap()
    }
}

/// `(ψ, A, ψ_s)` and their time derivatives at level `k`.
pub fn extract_level(ladder: &HeatLadder, frames: &FrameField, k: usize) -> GaugeLevel {
    let grid = ladder.grid;
    let m = ladder.target.m;
    let d = ladder.target.dim();
    let md = m * d;
    let nodes = grid.len();
    let phi = &ladder.phi[k];
    let v = &ladder.phi_t[k];
    let tau = &ladder.phi_s[k];
    let e = &frames.e[k];
    let et = &frames.e_t[k];
    let diff = |src: &[f64], width: usize, axis: usize| {
        let mut out = vec![0.0; src.len()];
        grid.diff_into(src, width, axis, &mut out);
        out
    };
    let dphi = [diff(phi, d, 0), diff(phi, d, 1)];
    let dv = [diff(v, d, 0), diff(v, d, 1)];
    let de = [diff(e, md, 0), diff(e, md, 1)];
    let det = [diff(et, md, 0), diff(et, md, 1)];
    let dtau = tension_derivative(phi, v, &grid, d);

    let mut level = GaugeLevel::zeros(ladder.s_levels[k], nodes, m);
    let project = |src: &[f64], frame: &[f64], out: &mut [f64]| {
        for i in 0..m {
            out[i] = mink_inner(src, &frame[i * d..(i + 1) * d]);
        }
    };
    // ⟨x_j, y_i⟩ as an m x m matrix, optionally accumulated
    let connection = |x: &[f64], y: &[f64], out: &mut [f64], accumulate: bool| {
        for i in 0..m {
            for j in 0..m {
                let g = mink_inner(&x[j * d..(j + 1) * d], &y[i * d..(i + 1) * d]);
                if accumulate {
                    out[i * m + j] += g;
                } else {
                    out[i * m + j] = g;
                }
            }
        }
    };

    {
        let GaugeLevel { psi, a, psi_s, dt_psi, dt_a, dt_psi_s, .. } = &mut level;
        let [psi_t, psi_1, psi_2] = psi;
        let [a_t, a_1, a_2] = a;
        let [dt_psi_1, dt_psi_2] = dt_psi;
        let [dt_a_1, dt_a_2] = dt_a;
        let vectors = psi_t
            .par_chunks_mut(m)
            .zip(psi_1.par_chunks_mut(m))
            .zip(psi_2.par_chunks_mut(m))
            .zip(psi_s.par_chunks_mut(m))
            .zip(dt_psi_1.par_chunks_mut(m).zip(dt_psi_2.par_chunks_mut(m)))
            .zip(dt_psi_s.par_chunks_mut(m));
        vectors.enumerate().for_each(|(node, (((((pt, p1), p2), ps), (q1, q2)), qs))| {
            let pt_range = node * d..(node + 1) * d;
            let f = &e[node * md..(node + 1) * md];
            let ft = &et[node * md..(node + 1) * md];
            project(&v[pt_range.clone()], f, pt);
            project(&dphi[0][pt_range.clone()], f, p1);
            project(&dphi[1][pt_range.clone()], f, p2);
            project(&tau[pt_range.clone()], f, ps);
            let mut tmp = vec![0.0; m];
            for (axis, q) in [q1, q2].into_iter().enumerate() {
                project(&dv[axis][pt_range.clone()], f, q);
                project(&dphi[axis][pt_range.clone()], ft, &mut tmp);
                for i in 0..m {
                    q[i] += tmp[i];
                }
            }
            project(&dtau[pt_range.clone()], f, qs);
            project(&tau[pt_range], ft, &mut tmp);
            for i in 0..m {
                qs[i] += tmp[i];
            }
        });
        let matrices = a_t
            .par_chunks_mut(m * m)
            .zip(a_1.par_chunks_mut(m * m))
            .zip(a_2.par_chunks_mut(m * m))
            .zip(dt_a_1.par_chunks_mut(m * m).zip(dt_a_2.par_chunks_mut(m * m)));
        matrices.enumerate().for_each(|(node, (((at, a1), a2), (b1, b2)))| {
            let range = node * md..(node + 1) * md;
            let f = &e[range.clone()];
            connection(&et[range.clone()], f, at, false);
            connection(&de[0][range.clone()], f, a1, false);
            connection(&de[1][range.clone()], f, a2, false);
            connection(&det[0][range.clone()], f, b1, false);
            connection(&de[0][range.clone()], &et[range.clone()], b1, true);
            connection(&det[1][range.clone()], f, b2, false);
            connection(&de[1][range.clone()], &et[range], b2, true);
            for x in [at, a1, a2, b1, b2] {
                linalg::antisymmetrize(m, x);
            }
        });
    }
    level
}

pub fn extract_fields(ladder: &HeatLadder, frames: &FrameField) -> Result<GaugeFieldSet> {
    ladder.grid.check_same(&frames.grid)?;
    if frames.e.len() != ladder.levels() {
        return Err(Error::ShapeMismatch("frame field and ladder have different level counts".into()));
    }
    let levels = (0..ladder.levels()).map(|k| extract_level(ladder, frames, k)).collect();
    Ok(GaugeFieldSet {
        grid: ladder.grid,
        target: ladder.target,
        t: ladder.base_t,
        s_levels: ladder.s_levels.clone(),
        base_levels: ladder.base_levels.clone(),
        eps_stop: ladder.eps_stop,
        levels,
    })
}

/// Ladder, frames and fields of one time slice in the caloric gauge.
#[derive(Clone, Debug)]
pub struct CaloricSlice {
    pub ladder: HeatLadder,
    pub frames: FrameField,
    pub fields: GaugeFieldSet,
}

impl CaloricSlice {
    pub fn new(ladder: HeatLadder) -> Result<Self> {
        let seed = default_seed(&ladder);
        let frames = transport_frame(&ladder, &seed)?;
        let fields = extract_fields(&ladder, &frames)?;
        Ok(CaloricSlice { ladder, frames, fields })
    }
}

/// A rotation field `U(x)` at one time with its first derivatives and the mixed derivatives
/// `∂_k ∂_t U` needed to transform time-differentiated fields.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaugeRotation {
    pub m: usize,
    pub nodes: usize,
    pub u: Vec<f64>,
    /// `∂_t U, ∂_1 U, ∂_2 U`.
    pub du: [Vec<f64>; 3],
    /// `∂_1 ∂_t U, ∂_2 ∂_t U`.
    pub dtu: [Vec<f64>; 2],
}

impl GaugeRotation {
    pub fn identity(grid: &Grid2D, m: usize) -> Self {
        Self::constant(grid, m, &linalg::identity(m)).unwrap()
    }

    pub fn constant(grid: &Grid2D, m: usize, u: &[f64]) -> Result<Self> {
        let nodes = grid.len();
        let mut all = Vec::with_capacity(nodes * m * m);
        for _ in 0..nodes {
            all.extend_from_slice(u);
        }
        let zero = || vec![0.0; nodes * m * m];
        Self::from_parts(m, all, [zero(), zero(), zero()], [zero(), zero()])
    }

    pub fn from_parts(m: usize, u: Vec<f64>, du: [Vec<f64>; 3], dtu: [Vec<f64>; 2]) -> Result<Self> {
        let nodes = u.len() / (m * m);
        if u.len() != nodes * m * m || du.iter().chain(dtu.iter()).any(|x| x.len() != u.len()) {
            return Err(Error::ShapeMismatch("rotation field arrays disagree in length".into()));
        }
        let deviation = u.chunks(m * m).map(|x| linalg::orthogonality_defect(m, x)).fold(0.0, f64::max);
        if deviation > 1e-10 {
            return Err(Error::NotOrthogonal { deviation });
        }
        Ok(GaugeRotation { m, nodes, u, du, dtu })
    }

    /// `U = exp(θ K)` for a fixed skew generator `K`; `angle(x, y)` returns
    /// `[θ, θ_t, θ_x1, θ_x2, θ_x1t, θ_x2t]`.
    pub fn exp_of<F>(grid: &Grid2D, m: usize, generator: &[f64], angle: F) -> Result<Self>
    where
        F: Fn(f64, f64) -> [f64; 6],
    {
        let nodes = grid.len();
        let mm = m * m;
        let k2 = linalg::matmul(m, generator, generator);
        let mut u = vec![0.0; nodes * mm];
        let mut du = [vec![0.0; nodes * mm], vec![0.0; nodes * mm], vec![0.0; nodes * mm]];
        let mut dtu = [vec![0.0; nodes * mm], vec![0.0; nodes * mm]];
        for i in 0..grid.n {
            for j in 0..grid.n {
                let node = grid.idx(i, j);
                let (x, y) = grid.position(i, j);
                let th = angle(x, y);
                let scaled: Vec<f64> = generator.iter().map(|g| g * th[0]).collect();
                let rot = linalg::expm(m, &scaled);
                let ku = linalg::matmul(m, generator, &rot);
                let k2u = linalg::matmul(m, &k2, &rot);
                let range = node * mm..(node + 1) * mm;
                u[range.clone()].copy_from_slice(&rot);
                for (slot, rate) in du.iter_mut().zip([th[1], th[2], th[3]]) {
                    for (o, v) in slot[range.clone()].iter_mut().zip(&ku) {
                        *o = rate * v;
                    }
                }
                for (a, slot) in dtu.iter_mut().enumerate() {
                    let (mixed, spatial) = (th[4 + a], th[2 + a]);
                    for (c, o) in slot[range.clone()].iter_mut().enumerate() {
                        *o = mixed * ku[c] + th[1] * spatial * k2u[c];
                    }
                }
            }
        }
        Self::from_parts(m, u, du, dtu)
    }

    /// `self ∘ first`, i.e. the single rotation `U_self U_first`.
    pub fn compose(&self, first: &GaugeRotation) -> Result<Self> {
        if self.m != first.m || self.nodes != first.nodes {
            return Err(Error::ShapeMismatch("cannot compose rotation fields of different shapes".into()));
        }
        let m = self.m;
        let mm = m * m;
        let mul = |a: &[f64], b: &[f64]| linalg::matmul(m, a, b);
        let mut u = Vec::with_capacity(self.u.len());
        let mut du = [Vec::new(), Vec::new(), Vec::new()];
        let mut dtu = [Vec::new(), Vec::new()];
        for node in 0..self.nodes {
            let r = node * mm..(node + 1) * mm;
            let (u2, u1) = (&self.u[r.clone()], &first.u[r.clone()]);
            u.extend(mul(u2, u1));
            for a in 0..3 {
                let (d2, d1) = (&self.du[a][r.clone()], &first.du[a][r.clone()]);
                let sum: Vec<f64> = mul(d2, u1).iter().zip(mul(u2, d1)).map(|(x, y)| x + y).collect();
                du[a].extend(sum);
            }
            for a in 0..2 {
                let terms = [
                    mul(&self.dtu[a][r.clone()], u1),
                    mul(&self.du[0][r.clone()], &first.du[1 + a][r.clone()]),
                    mul(&self.du[1 + a][r.clone()], &first.du[0][r.clone()]),
                    mul(u2, &first.dtu[a][r.clone()]),
                ];
                dtu[a].extend((0..mm).map(|c| terms.iter().map(|t| t[c]).sum::<f64>()));
            }
        }
        Self::from_parts(m, u, du, dtu)
    }
}

/// `e -> e U^{-1}`, `ψ -> U ψ`, `A -> U A U^{-1} - (∂U) U^{-1}` on every level, the sign that
/// makes `D = ∂ + A` covariant for `∇e = e A`.
pub fn gauge_transform(
    fields: &GaugeFieldSet,
    frames: &FrameField,
    rot: &GaugeRotation,
) -> Result<(GaugeFieldSet, FrameField)> {
    let m = fields.m();
    let d = fields.target.dim();
    let mm = m * m;
    let md = m * d;
    if rot.m != m || rot.nodes != fields.grid.len() {
        return Err(Error::ShapeMismatch("rotation field does not match the gauge fields".into()));
    }
    let rotate_vectors = |src: &[f64], du: Option<(&[f64], &[f64])>| -> Vec<f64> {
        // U x, plus (∂U) y when given
        let mut out = vec![0.0; src.len()];
        out.par_chunks_mut(m).enumerate().for_each(|(node, o)| {
            let u = &rot.u[node * mm..(node + 1) * mm];
            linalg::matvec_into(u, &src[node * m..(node + 1) * m], o);
            if let Some((dux, y)) = du {
                linalg::add_matvec(1.0, &dux[node * mm..(node + 1) * mm], &y[node * m..(node + 1) * m], o);
            }
        });
        out
    };
    let conjugate = |a: &[f64], extra: &[(f64, &[f64], &[f64], &[f64])]| -> Vec<f64> {
        // U A U^T + Σ c X Y Z^T over the extra terms
        let mut out = vec![0.0; a.len()];
        out.par_chunks_mut(mm).enumerate().for_each(|(node, o)| {
            let r = node * mm..(node + 1) * mm;
            let u = &rot.u[r.clone()];
            let ut = linalg::transpose(m, u);
            let mut acc = linalg::matmul(m, &linalg::matmul(m, u, &a[r.clone()]), &ut);
            for (sign, x, y, z) in extra {
                let zt = linalg::transpose(m, &z[r.clone()]);
                let term = linalg::matmul(m, &linalg::matmul(m, &x[r.clone()], &y[r.clone()]), &zt);
                for (c, t) in acc.iter_mut().zip(term) {
                    *c += sign * t;
                }
            }
            o.copy_from_slice(&acc);
        });
        out
    };
    let ident = linalg::identity(m);
    let ones: Vec<f64> = (0..rot.nodes).flat_map(|_| ident.iter().copied()).collect();

    let levels = fields
        .levels
        .iter()
        .map(|lv| {
            let psi = [
                rotate_vectors(&lv.psi[0], None),
                rotate_vectors(&lv.psi[1], None),
                rotate_vectors(&lv.psi[2], None),
            ];
            let a: [Vec<f64>; 3] = std::array::from_fn(|al| conjugate(&lv.a[al], &[(-1.0, &rot.du[al], &ones, &rot.u)]));
            let dt_psi: [Vec<f64>; 2] = std::array::from_fn(|k| {
                rotate_vectors(&lv.dt_psi[k], Some((&rot.du[0], &lv.psi[1 + k])))
            });
            let dt_a: [Vec<f64>; 2] = std::array::from_fn(|k| {
                // ∂_t(U A U^T - ∂_k U U^T)
                let ak = &lv.a[1 + k];
                let mut out = conjugate(
                    &lv.dt_a[k],
                    &[
                        (1.0, &rot.du[0], ak, &rot.u),
                        (1.0, &rot.u, ak, &rot.du[0]),
                        (-1.0, &rot.dtu[k], &ones, &rot.u),
                        (-1.0, &rot.du[1 + k], &ones, &rot.du[0]),
                    ],
                );
                out.par_chunks_mut(mm).for_each(|x| linalg::antisymmetrize(m, x));
                out
            });
            let mut a = a;
            for x in a.iter_mut() {
                x.par_chunks_mut(mm).for_each(|y| linalg::antisymmetrize(m, y));
            }
            GaugeLevel {
                s: lv.s,
                psi,
                a,
                psi_s: rotate_vectors(&lv.psi_s, None),
                dt_psi,
                dt_a,
                dt_psi_s: rotate_vectors(&lv.dt_psi_s, Some((&rot.du[0], &lv.psi_s))),
            }
        })
        .collect();

    // e'_j = Σ_i e_i U_ji, e_t'_j = Σ_i (e_t,i U_ji + e_i ∂_t U_ji)
    let reframe = |e: &[f64], et: Option<&[f64]>| -> Vec<f64> {
        let mut out = vec![0.0; e.len()];
        out.par_chunks_mut(md).enumerate().for_each(|(node, o)| {
            let f = &e[node * md..(node + 1) * md];
            let u = &rot.u[node * mm..(node + 1) * mm];
            let ut = &rot.du[0][node * mm..(node + 1) * mm];
            for j in 0..m {
                for i in 0..m {
                    for c in 0..d {
                        o[j * d + c] += match et {
                            None => f[i * d + c] * u[j * m + i],
                            Some(et) => et[node * md + i * d + c] * u[j * m + i] + f[i * d + c] * ut[j * m + i],
                        };
                    }
                }
            }
        });
        out
    };
    let new_frames = FrameField {
        e: frames.e.iter().map(|e| reframe(e, None)).collect(),
        e_t: frames.e.iter().zip(&frames.e_t).map(|(e, et)| reframe(e, Some(et))).collect(),
        ..frames.clone()
    };
    Ok((GaugeFieldSet { levels, ..fields.clone() }, new_frames))
}

/// Pointwise Euclidean norm of a field with `width` components per node.
pub fn pointwise_norm(values: &[f64], width: usize) -> Vec<f64> {
    values.par_chunks(width).map(|x| linalg::norm_sq(x).sqrt()).collect()
}

#[cfg(test)]
mod tests;
