//! Periodic square grids, flat multi-component fields and the stencils that act on them.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{kernel, mink_inner, TargetConfig};

/// `n x n` periodic grid with spacing `h`; node `(i, j)` sits at `(i h, j h)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid2D {
    pub n: usize,
    pub h: f64,
}

impl Grid2D {
    pub fn new(n: usize, h: f64) -> Result<Self> {
        if n < 16 || !n.is_power_of_two() {
            return Err(Error::validation("grid.n", format!("need a power of two >= 16, got {n}")));
        }
        if !(h > 0.0) || !h.is_finite() {
            return Err(Error::validation("grid.h", format!("need h > 0, got {h}")));
        }
        Ok(Grid2D { n, h })
    }

    /// Grid with `n` nodes per side covering a box of side `extent`.
    pub fn with_extent(n: usize, extent: f64) -> Result<Self> {
        Grid2D::new(n, extent / n as f64)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.n * self.n
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn extent(&self) -> f64 {
        self.n as f64 * self.h
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        i * self.n + j
    }

    #[inline]
    pub fn position(&self, i: usize, j: usize) -> (f64, f64) {
        (i as f64 * self.h, j as f64 * self.h)
    }

    /// Index of the neighbour `(i + di, j + dj)` with periodic wrap.
    #[inline]
    pub fn shifted(&self, i: usize, j: usize, di: isize, dj: isize) -> usize {
        let n = self.n as isize;
        let ii = (i as isize + di).rem_euclid(n) as usize;
        let jj = (j as isize + dj).rem_euclid(n) as usize;
        ii * self.n + jj
    }

    pub fn coarsened(&self) -> Result<Self> {
        Grid2D::new(self.n / 2, self.h * 2.0)
    }

    pub fn refined(&self) -> Result<Self> {
        Grid2D::new(self.n * 2, self.h / 2.0)
    }

    pub fn check_same(&self, other: &Grid2D) -> Result<()> {
        if self != other {
            return Err(Error::GridMismatch(format!(
                "n={} h={} vs n={} h={}",
                self.n, self.h, other.n, other.h
            )));
        }
        Ok(())
    }

    /// Fill `out` row by row in parallel; `f(i, row)` writes the `n * width` values of row `i`.
    pub fn par_rows<F>(&self, width: usize, out: &mut [f64], f: F)
    where
        F: Fn(usize, &mut [f64]) + Sync + Send,
    {
        debug_assert_eq!(out.len(), self.len() * width);
        out.par_chunks_mut(self.n * width)
            .enumerate()
            .for_each(|(i, row)| f(i, row));
    }

    /// Centered difference along `axis` (0: first coordinate, 1: second).
    pub fn diff_into(&self, src: &[f64], width: usize, axis: usize, out: &mut [f64]) {
        let inv = 0.5 / self.h;
        let n = self.n;
        self.par_rows(width, out, |i, row| {
            for j in 0..n {
                let (plus, minus) = if axis == 0 {
                    (self.shifted(i, j, 1, 0), self.shifted(i, j, -1, 0))
                } else {
                    (self.shifted(i, j, 0, 1), self.shifted(i, j, 0, -1))
                };
                let dst = &mut row[j * width..(j + 1) * width];
                for c in 0..width {
                    dst[c] = (src[plus * width + c] - src[minus * width + c]) * inv;
                }
            }
        });
    }

    /// Five-point Laplacian.
    pub fn laplacian_into(&self, src: &[f64], width: usize, out: &mut [f64]) {
        let inv = 1.0 / (self.h * self.h);
        let n = self.n;
        self.par_rows(width, out, |i, row| {
            for j in 0..n {
                let c0 = self.idx(i, j);
                let e = self.shifted(i, j, 1, 0);
                let w = self.shifted(i, j, -1, 0);
                let nn = self.shifted(i, j, 0, 1);
                let s = self.shifted(i, j, 0, -1);
                let dst = &mut row[j * width..(j + 1) * width];
                for c in 0..width {
                    dst[c] = ((src[e * width + c] + src[w * width + c])
                        + (src[nn * width + c] + src[s * width + c])
                        - 4.0 * src[c0 * width + c])
                        * inv;
                }
            }
        });
    }

    /// `h^2` times the pairwise sum of a scalar node array.
    pub fn integrate_values(&self, values: &[f64]) -> f64 {
        self.h * self.h * pairwise_sum(values)
    }
}

/// Fixed-shape pairwise summation, independent of thread count.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const BLOCK: usize = 64;
    if values.len() <= BLOCK {
        let mut s = 0.0;
        for v in values {
            s += v;
        }
        return s;
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// What a field's per-node components mean; the tag is stored in snapshot headers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    Scalar,
    Vector,
    Skew,
    Ambient,
    Tangent,
    Frame,
    Symmetric3,
}

impl FieldKind {
    pub fn tag(self) -> u32 {
        match self {
            FieldKind::Scalar => 1,
            FieldKind::Vector => 2,
            FieldKind::Skew => 3,
            FieldKind::Ambient => 4,
            FieldKind::Tangent => 5,
            FieldKind::Frame => 6,
            FieldKind::Symmetric3 => 7,
        }
    }

    pub fn from_tag(tag: u32) -> Result<Self> {
        Ok(match tag {
            1 => FieldKind::Scalar,
            2 => FieldKind::Vector,
            3 => FieldKind::Skew,
            4 => FieldKind::Ambient,
            5 => FieldKind::Tangent,
            6 => FieldKind::Frame,
            7 => FieldKind::Symmetric3,
            other => return Err(Error::Parse(format!("unknown field kind tag {other}"))),
        })
    }
}

/// A linear-space-valued field with `width` components per node.
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    pub grid: Grid2D,
    pub kind: FieldKind,
    pub width: usize,
    pub data: Vec<f64>,
}

impl Field {
    pub fn zeros(grid: Grid2D, kind: FieldKind, width: usize) -> Self {
        Field {
            grid,
            kind,
            width,
            data: vec![0.0; grid.len() * width],
        }
    }

    pub fn from_data(grid: Grid2D, kind: FieldKind, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != grid.len() * width {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {}x{} grid of width {width}",
                data.len(),
                grid.n,
                grid.n
            )));
        }
        Ok(Field {
            grid,
            kind,
            width,
            data,
        })
    }

    /// Sample `f(x, y, out)` at every node.
    pub fn from_fn<F>(grid: Grid2D, kind: FieldKind, width: usize, f: F) -> Self
    where
        F: Fn(f64, f64, &mut [f64]) + Sync + Send,
    {
        let mut data = vec![0.0; grid.len() * width];
        grid.par_rows(width, &mut data, |i, row| {
            for j in 0..grid.n {
                let (x, y) = grid.position(i, j);
                f(x, y, &mut row[j * width..(j + 1) * width]);
            }
        });
        Field {
            grid,
            kind,
            width,
            data,
        }
    }

    pub fn scalar_from_fn<F>(grid: Grid2D, f: F) -> Self
    where
        F: Fn(f64, f64) -> f64 + Sync + Send,
    {
        Field::from_fn(grid, FieldKind::Scalar, 1, |x, y, out| out[0] = f(x, y))
    }

    #[inline]
    pub fn at(&self, node: usize) -> &[f64] {
        &self.data[node * self.width..(node + 1) * self.width]
    }

    #[inline]
    pub fn at_mut(&mut self, node: usize) -> &mut [f64] {
        &mut self.data[node * self.width..(node + 1) * self.width]
    }

    pub fn central_diff(&self, axis: usize) -> Field {
        let mut out = Field::zeros(self.grid, self.kind, self.width);
        self.grid.diff_into(&self.data, self.width, axis, &mut out.data);
        out
    }

    pub fn laplacian(&self) -> Field {
        let mut out = Field::zeros(self.grid, self.kind, self.width);
        self.grid.laplacian_into(&self.data, self.width, &mut out.data);
        out
    }

    /// `h^2` times the sum over nodes; requires a scalar field.
    pub fn integrate(&self) -> Result<f64> {
        if self.width != 1 {
            return Err(Error::ShapeMismatch(format!(
                "integrate needs a scalar field, got width {}",
                self.width
            )));
        }
        Ok(self.grid.integrate_values(&self.data))
    }

    /// Pointwise Euclidean norm of the components.
    pub fn pointwise_norm(&self) -> Field {
        let data = self
            .data
            .chunks(self.width)
            .map(|c| c.iter().map(|x| x * x).sum::<f64>().sqrt())
            .collect();
        Field {
            grid: self.grid,
            kind: FieldKind::Scalar,
            width: 1,
            data,
        }
    }

    pub fn sup_norm(&self) -> f64 {
        self.pointwise_norm().data.iter().fold(0.0, |a, b| a.max(*b))
    }

    pub fn l2_norm(&self) -> f64 {
        let sq: Vec<f64> = self
            .data
            .chunks(self.width)
            .map(|c| c.iter().map(|x| x * x).sum::<f64>())
            .collect();
        self.grid.integrate_values(&sq).sqrt()
    }

    /// Injection onto the grid with half as many nodes per side.
    pub fn restrict(&self) -> Result<Field> {
        let coarse = self.grid.coarsened()?;
        let data = restrict_values(&self.grid, &self.data, self.width);
        Field::from_data(coarse, self.kind, self.width, data)
    }

    /// Bilinear interpolation onto the grid with twice as many nodes per side.
    pub fn prolong(&self) -> Result<Field> {
        let fine = self.grid.refined()?;
        let data = prolong_values(&self.grid, &self.data, self.width);
        Field::from_data(fine, self.kind, self.width, data)
    }

    pub fn sub(&self, other: &Field) -> Result<Field> {
        self.grid.check_same(&other.grid)?;
        if self.width != other.width {
            return Err(Error::ShapeMismatch("field widths differ".into()));
        }
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Field::from_data(self.grid, self.kind, self.width, data)
    }
}

pub(crate) fn restrict_values(grid: &Grid2D, src: &[f64], width: usize) -> Vec<f64> {
    let nc = grid.n / 2;
    let mut out = Vec::with_capacity(nc * nc * width);
    for i in 0..nc {
        for j in 0..nc {
            let node = grid.idx(2 * i, 2 * j);
            out.extend_from_slice(&src[node * width..(node + 1) * width]);
        }
    }
    out
}

pub(crate) fn prolong_values(coarse: &Grid2D, src: &[f64], width: usize) -> Vec<f64> {
    let nf = coarse.n * 2;
    let mut out = vec![0.0; nf * nf * width];
    out.par_chunks_mut(nf * width).enumerate().for_each(|(fi, row)| {
        let ci = fi / 2;
        let oi = fi % 2;
        for fj in 0..nf {
            let cj = fj / 2;
            let oj = fj % 2;
            let dst = &mut row[fj * width..(fj + 1) * width];
            // even offsets collapse onto the same coarse node, giving the bilinear weights
            let a = coarse.idx(ci, cj);
            let b = coarse.shifted(ci, cj, oi as isize, 0);
            let c = coarse.shifted(ci, cj, 0, oj as isize);
            let d = coarse.shifted(ci, cj, oi as isize, oj as isize);
            for k in 0..width {
                dst[k] = 0.25
                    * ((src[a * width + k] + src[b * width + k])
                        + (src[c * width + k] + src[d * width + k]));
            }
        }
    });
    out
}

/// One time slice of the wave map: points and velocities as flat ambient arrays.
#[derive(Clone, Debug, PartialEq)]
pub struct MapField {
    pub grid: Grid2D,
    pub target: TargetConfig,
    pub t: f64,
    pub phi: Vec<f64>,
    pub phi_t: Vec<f64>,
}

impl MapField {
    pub fn constant(grid: Grid2D, target: TargetConfig, point: &[f64]) -> Self {
        let d = target.dim();
        let mut phi = Vec::with_capacity(grid.len() * d);
        for _ in 0..grid.len() {
            phi.extend_from_slice(point);
        }
        MapField {
            grid,
            target,
            t: 0.0,
            phi,
            phi_t: vec![0.0; grid.len() * d],
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.target.dim()
    }

    #[inline]
    pub fn point(&self, node: usize) -> &[f64] {
        let d = self.width();
        &self.phi[node * d..(node + 1) * d]
    }

    #[inline]
    pub fn velocity(&self, node: usize) -> &[f64] {
        let d = self.width();
        &self.phi_t[node * d..(node + 1) * d]
    }

    /// Largest violation of the sheet constraint and of velocity tangency.
    pub fn invariant_defects(&self) -> (f64, f64) {
        let d = self.width();
        let r2 = self.target.radius_sq();
        let mut point = 0.0f64;
        let mut tangent = 0.0f64;
        for (p, v) in self.phi.chunks(d).zip(self.phi_t.chunks(d)) {
            point = point.max((mink_inner(p, p) + r2).abs());
            tangent = tangent.max(mink_inner(p, v).abs());
        }
        (point, tangent)
    }

    /// Tangent-projected centered derivative of the map along `axis`.
    pub fn spatial_derivative(&self, axis: usize) -> Vec<f64> {
        let d = self.width();
        let mut out = vec![0.0; self.phi.len()];
        self.grid.diff_into(&self.phi, d, axis, &mut out);
        project_tangent_all(&self.phi, &mut out, d);
        out
    }

    /// Map restricted by injection; velocities are injected as well.
    pub fn restrict(&self) -> Result<MapField> {
        let d = self.width();
        Ok(MapField {
            grid: self.grid.coarsened()?,
            target: self.target,
            t: self.t,
            phi: restrict_values(&self.grid, &self.phi, d),
            phi_t: restrict_values(&self.grid, &self.phi_t, d),
        })
    }

    /// Bilinear prolongation followed by re-projection onto the sheet and its tangent spaces.
    pub fn prolong(&self) -> Result<MapField> {
        let d = self.width();
        let fine = self.grid.refined()?;
        let mut phi = prolong_values(&self.grid, &self.phi, d);
        let mut phi_t = prolong_values(&self.grid, &self.phi_t, d);
        let r2 = self.target.radius_sq();
        for (p, v) in phi.chunks_mut(d).zip(phi_t.chunks_mut(d)) {
            kernel::normalize_point(r2, p)?;
            kernel::tangent_project(p, v);
        }
        Ok(MapField {
            grid: fine,
            target: self.target,
            t: self.t,
            phi,
            phi_t,
        })
    }

    pub fn phi_field(&self) -> Field {
        Field {
            grid: self.grid,
            kind: FieldKind::Ambient,
            width: self.width(),
            data: self.phi.clone(),
        }
    }

    pub fn phi_t_field(&self) -> Field {
        Field {
            grid: self.grid,
            kind: FieldKind::Tangent,
            width: self.width(),
            data: self.phi_t.clone(),
        }
    }
}

/// Project each node's vector in `vecs` onto the tangent space at the matching point.
pub fn project_tangent_all(points: &[f64], vecs: &mut [f64], width: usize) {
    vecs.par_chunks_mut(width)
        .zip(points.par_chunks(width))
        .for_each(|(v, p)| kernel::tangent_project(p, v));
}
