//! Exact geometry of the constant-curvature target `H^m` in the hyperboloid model.
//!
//! Points live on the upper sheet `<x,x>_M = -1/|κ|` of Minkowski space `R^{1,m}`,
//! tangent vectors at `p` are ambient vectors with `<p,v>_M = 0`, and the induced
//! metric is the restriction of `<.,.>_M`. Geodesics and parallel transport have
//! closed forms, so nothing in here integrates an ODE.
//!
//! The typed API (`TargetPoint`, `TangentVector`, `OrthoFrame`) validates its
//! inputs; the slice kernels in [`kernel`] are what the grid solvers call per node.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ambient Minkowski form of signature `(-,+,...,+)`.
#[inline]
pub fn mink_inner(u: &[f64], v: &[f64]) -> f64 {
    debug_assert_eq!(u.len(), v.len());
    let mut s = -u[0] * v[0];
    for k in 1..u.len() {
        s += u[k] * v[k];
    }
    s
}

/// Target dimension and sectional curvature.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetConfig {
    pub m: usize,
    pub kappa: f64,
}

impl Default for TargetConfig {
    fn default() -> Self {
        TargetConfig { m: 2, kappa: -1.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetPoint {
    pub coords: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TangentVector {
    pub base: TargetPoint,
    pub comps: Vec<f64>,
}

/// Orthonormal basis `e_1..e_m` of `T_p H^m`, each vector in ambient coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrthoFrame {
    pub base: TargetPoint,
    pub vectors: Vec<Vec<f64>>,
}

impl TangentVector {
    pub fn zero(base: &TargetPoint) -> Self {
        TangentVector {
            base: base.clone(),
            comps: vec![0.0; base.coords.len()],
        }
    }

    pub fn norm(&self) -> f64 {
        mink_inner(&self.comps, &self.comps).max(0.0).sqrt()
    }
}

impl OrthoFrame {
    /// Frame vectors flattened as `m` consecutive ambient vectors.
    pub fn flat(&self) -> Vec<f64> {
        self.vectors.iter().flatten().copied().collect()
    }

    /// Largest deviation of the Gram matrix from the identity.
    pub fn orthonormality_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for (i, a) in self.vectors.iter().enumerate() {
            worst = worst.max(mink_inner(a, &self.base.coords).abs());
            for (j, b) in self.vectors.iter().enumerate() {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((mink_inner(a, b) - target).abs());
            }
        }
        worst
    }
}

impl TargetConfig {
    pub fn new(m: usize, kappa: f64) -> Result<Self> {
        let cfg = TargetConfig { m, kappa };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.m < 2 {
            return Err(Error::validation("target.m", format!("need m >= 2, got {}", self.m)));
        }
        if !(self.kappa < 0.0) || !self.kappa.is_finite() {
            return Err(Error::validation(
                "target.kappa",
                format!("need a finite negative curvature, got {}", self.kappa),
            ));
        }
        Ok(())
    }

    /// Number of ambient coordinates, `m + 1`.
    #[inline]
    pub fn dim(&self) -> usize {
        self.m + 1
    }

    /// `r^2 = 1/|κ|`.
    #[inline]
    pub fn radius_sq(&self) -> f64 {
        -1.0 / self.kappa
    }

    #[inline]
    pub fn radius(&self) -> f64 {
        self.radius_sq().sqrt()
    }

    /// The point `(r, 0, ..., 0)`.
    pub fn origin(&self) -> TargetPoint {
        let mut coords = vec![0.0; self.dim()];
        coords[0] = self.radius();
        TargetPoint { coords }
    }

    pub fn point_defect(&self, p: &[f64]) -> f64 {
        (mink_inner(p, p) + self.radius_sq()).abs()
    }

    pub fn project_point(&self, v: &[f64]) -> Result<TargetPoint> {
        self.check_len(v.len())?;
        let mut coords = v.to_vec();
        kernel::normalize_point(self.radius_sq(), &mut coords)?;
        Ok(TargetPoint { coords })
    }

    pub fn project_tangent(&self, p: &TargetPoint, v: &[f64]) -> TangentVector {
        let mut comps = v.to_vec();
        kernel::tangent_project(&p.coords, &mut comps);
        TangentVector {
            base: p.clone(),
            comps,
        }
    }

    pub fn geodesic_exp(&self, p: &TargetPoint, v: &TangentVector) -> TargetPoint {
        let mut out = vec![0.0; self.dim()];
        kernel::exp_into(self.radius(), &p.coords, &v.comps, &mut out);
        TargetPoint { coords: out }
    }

    pub fn log_map(&self, p: &TargetPoint, q: &TargetPoint) -> TangentVector {
        let mut out = vec![0.0; self.dim()];
        kernel::log_into(self.radius(), &p.coords, &q.coords, &mut out);
        TangentVector {
            base: p.clone(),
            comps: out,
        }
    }

    pub fn distance(&self, p: &TargetPoint, q: &TargetPoint) -> f64 {
        kernel::distance(self.radius(), &p.coords, &q.coords)
    }

    /// Levi-Civita transport of `v` (based at `p`) along the geodesic from `p` to `q`.
    pub fn parallel_transport(
        &self,
        p: &TargetPoint,
        q: &TargetPoint,
        v: &TangentVector,
    ) -> TangentVector {
        let mut out = vec![0.0; self.dim()];
        kernel::transport_into(self.radius_sq(), &p.coords, &q.coords, &v.comps, &mut out);
        TangentVector {
            base: q.clone(),
            comps: out,
        }
    }

    /// `R(X,Y)Z = κ(<Y,Z> X - <X,Z> Y)`.
    pub fn curvature_operator(
        &self,
        x: &TangentVector,
        y: &TangentVector,
        z: &TangentVector,
    ) -> TangentVector {
        let yz = mink_inner(&y.comps, &z.comps);
        let xz = mink_inner(&x.comps, &z.comps);
        let comps = x
            .comps
            .iter()
            .zip(&y.comps)
            .map(|(a, b)| self.kappa * (yz * a - xz * b))
            .collect();
        TangentVector {
            base: x.base.clone(),
            comps,
        }
    }

    /// Gram-Schmidt in the induced metric after projecting each vector to `T_p`.
    pub fn orthonormalize(&self, p: &TargetPoint, raw: &[Vec<f64>]) -> Result<OrthoFrame> {
        if raw.len() != self.m {
            return Err(Error::ShapeMismatch(format!(
                "expected {} frame vectors, got {}",
                self.m,
                raw.len()
            )));
        }
        let mut flat: Vec<f64> = Vec::with_capacity(self.m * self.dim());
        for v in raw {
            self.check_len(v.len())?;
            flat.extend_from_slice(v);
        }
        kernel::orthonormalize_in_place(&p.coords, &mut flat, self.m)?;
        Ok(OrthoFrame {
            base: p.clone(),
            vectors: flat.chunks(self.dim()).map(|c| c.to_vec()).collect(),
        })
    }

    /// Ambient unit vectors at the origin, transported to `p`.
    pub fn standard_frame(&self, p: &TargetPoint) -> OrthoFrame {
        let o = self.origin();
        let vectors = (1..=self.m)
            .map(|k| {
                let mut e = vec![0.0; self.dim()];
                e[k] = 1.0;
                let mut out = vec![0.0; self.dim()];
                kernel::transport_into(self.radius_sq(), &o.coords, &p.coords, &e, &mut out);
                out
            })
            .collect();
        OrthoFrame {
            base: p.clone(),
            vectors,
        }
    }

    /// Tangent vector at `p` with the given components in `frame`.
    pub fn from_frame(&self, frame: &OrthoFrame, comps: &[f64]) -> TangentVector {
        let mut v = vec![0.0; self.dim()];
        for (c, e) in comps.iter().zip(&frame.vectors) {
            for (vk, ek) in v.iter_mut().zip(e) {
                *vk += c * ek;
            }
        }
        TangentVector {
            base: frame.base.clone(),
            comps: v,
        }
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.dim() {
            return Err(Error::ShapeMismatch(format!(
                "ambient vector of length {len}, expected {}",
                self.dim()
            )));
        }
        Ok(())
    }
}

/// Per-node kernels on raw ambient slices.
pub mod kernel {
    use super::mink_inner;
    use crate::error::{Error, Result};

    /// `sinh(x)/x`.
    #[inline]
    pub fn sinhc(x: f64) -> f64 {
        if x.abs() < 1e-2 {
            let x2 = x * x;
            1.0 + x2 / 6.0 * (1.0 + x2 / 20.0 * (1.0 + x2 / 42.0))
        } else {
            x.sinh() / x
        }
    }

    /// `(x cosh x - sinh x)/x^3`.
    #[inline]
    fn sinhc_slope(x: f64) -> f64 {
        if x.abs() < 0.1 {
            let x2 = x * x;
            1.0 / 3.0 + x2 * (1.0 / 30.0 + x2 * (1.0 / 840.0 + x2 * (1.0 / 45360.0)))
        } else {
            (x * x.cosh() - x.sinh()) / (x * x * x)
        }
    }

    /// Rescale `v` onto the sheet `<x,x> = -r2`.
    #[inline]
    pub fn normalize_point(r2: f64, v: &mut [f64]) -> Result<()> {
        let q = mink_inner(v, v);
        if !(q < 0.0) || !(v[0] > 0.0) {
            return Err(Error::NotTimelike { inner: q, v0: v[0] });
        }
        let s = (r2 / -q).sqrt();
        for x in v.iter_mut() {
            *x *= s;
        }
        Ok(())
    }

    #[inline]
    pub fn tangent_project(p: &[f64], v: &mut [f64]) {
        let c = mink_inner(v, p) / mink_inner(p, p);
        for (x, pk) in v.iter_mut().zip(p) {
            *x -= c * pk;
        }
    }

    #[inline]
    pub fn exp_into(r: f64, p: &[f64], v: &[f64], out: &mut [f64]) {
        let theta = mink_inner(v, v).max(0.0).sqrt() / r;
        let c = theta.cosh();
        let s = sinhc(theta);
        for k in 0..p.len() {
            out[k] = c * p[k] + s * v[k];
        }
    }

    /// Differential of `v -> exp_p(v)` applied to `w`.
    #[inline]
    pub fn exp_derivative_into(r: f64, p: &[f64], v: &[f64], w: &[f64], out: &mut [f64]) {
        let r2 = r * r;
        let theta = mink_inner(v, v).max(0.0).sqrt() / r;
        let vw = mink_inner(v, w) / r2;
        let s = sinhc(theta);
        let g = sinhc_slope(theta);
        for k in 0..p.len() {
            out[k] = vw * (s * p[k] + g * v[k]) + s * w[k];
        }
    }

    /// Geodesic angle `d(p,q)/r`, computed from the chord to avoid `acosh` cancellation.
    #[inline]
    pub fn angle(r: f64, p: &[f64], q: &[f64]) -> f64 {
        let mut dd = 0.0;
        for k in 0..p.len() {
            let d = q[k] - p[k];
            dd += if k == 0 { -d * d } else { d * d };
        }
        2.0 * (dd.max(0.0).sqrt() / (2.0 * r)).asinh()
    }

    #[inline]
    pub fn distance(r: f64, p: &[f64], q: &[f64]) -> f64 {
        r * angle(r, p, q)
    }

    #[inline]
    pub fn log_into(r: f64, p: &[f64], q: &[f64], out: &mut [f64]) {
        let r2 = r * r;
        let mut dd = 0.0;
        for k in 0..p.len() {
            let d = q[k] - p[k];
            dd += if k == 0 { -d * d } else { d * d };
        }
        let dd = dd.max(0.0);
        let theta = 2.0 * (dd.sqrt() / (2.0 * r)).asinh();
        // q - cosh(theta) p, with cosh(theta) - 1 = dd / (2 r^2)
        let shift = dd / (2.0 * r2);
        let scale = 1.0 / sinhc(theta);
        for k in 0..p.len() {
            out[k] = scale * ((q[k] - p[k]) - shift * p[k]);
        }
        tangent_project(p, out);
    }

    /// Transport of `v` from `T_p` to `T_q` along the connecting geodesic:
    /// `v + <q,v>/(r^2 - <p,q>) (p + q)`.
    #[inline]
    pub fn transport_into(r2: f64, p: &[f64], q: &[f64], v: &[f64], out: &mut [f64]) {
        let c = mink_inner(q, v) / (r2 - mink_inner(p, q));
        for k in 0..p.len() {
            out[k] = v[k] + c * (p[k] + q[k]);
        }
    }

    /// Directional derivative of `transport_into` with respect to `(p, q, v)`.
    #[allow(clippy::too_many_arguments)]
    #[inline]
    pub fn transport_derivative_into(
        r2: f64,
        p: &[f64],
        q: &[f64],
        v: &[f64],
        dp: &[f64],
        dq: &[f64],
        dv: &[f64],
        out: &mut [f64],
    ) {
        let denom = r2 - mink_inner(p, q);
        let qv = mink_inner(q, v);
        let c = qv / denom;
        let dc = (mink_inner(dq, v) + mink_inner(q, dv)) / denom
            + qv * (mink_inner(dp, q) + mink_inner(p, dq)) / (denom * denom);
        for k in 0..p.len() {
            out[k] = dv[k] + dc * (p[k] + q[k]) + c * (dp[k] + dq[k]);
        }
    }

    /// Modified Gram-Schmidt (two passes) of `m` ambient vectors stored back to back.
    pub fn orthonormalize_in_place(p: &[f64], frame: &mut [f64], m: usize) -> Result<()> {
        let d = p.len();
        for i in 0..m {
            let (done, rest) = frame.split_at_mut(i * d);
            let v = &mut rest[..d];
            let raw_norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            tangent_project(p, v);
            for _ in 0..2 {
                for j in 0..i {
                    let e = &done[j * d..(j + 1) * d];
                    let c = mink_inner(v, e);
                    for k in 0..d {
                        v[k] -= c * e[k];
                    }
                }
            }
            let n2 = mink_inner(v, v);
            if !(n2 > (1e-10 * raw_norm.max(1e-300)).powi(2)) {
                return Err(Error::DegenerateFrame { rank: i, m });
            }
            let inv = 1.0 / n2.sqrt();
            for x in v.iter_mut() {
                *x *= inv;
            }
        }
        Ok(())
    }
}
