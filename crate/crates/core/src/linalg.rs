//! Small dense helpers for `R^m` vectors and `m x m` matrices stored row-major in flat slices.

#[inline]
pub fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

#[inline]
pub fn norm_sq(u: &[f64]) -> f64 {
    dot(u, u)
}

/// `(u ∧ v)_{ij} = u_i v_j - v_i u_j`, so that `(u ∧ v) w = u <v,w> - v <u,w>`.
#[inline]
pub fn wedge_into(u: &[f64], v: &[f64], out: &mut [f64]) {
    let m = u.len();
    for i in 0..m {
        for j in 0..m {
            out[i * m + j] = u[i] * v[j] - v[i] * u[j];
        }
    }
}

/// `out += c (u ∧ v)`.
#[inline]
pub fn add_wedge(c: f64, u: &[f64], v: &[f64], out: &mut [f64]) {
    let m = u.len();
    for i in 0..m {
        for j in 0..m {
            out[i * m + j] += c * (u[i] * v[j] - v[i] * u[j]);
        }
    }
}

/// `out = a x`.
#[inline]
pub fn matvec_into(a: &[f64], x: &[f64], out: &mut [f64]) {
    let m = x.len();
    for i in 0..m {
        out[i] = dot(&a[i * m..(i + 1) * m], x);
    }
}

/// `out += c a x`.
#[inline]
pub fn add_matvec(c: f64, a: &[f64], x: &[f64], out: &mut [f64]) {
    let m = x.len();
    for i in 0..m {
        out[i] += c * dot(&a[i * m..(i + 1) * m], x);
    }
}

pub fn matmul_into(m: usize, a: &[f64], b: &[f64], out: &mut [f64]) {
    for i in 0..m {
        for j in 0..m {
            let mut s = 0.0;
            for k in 0..m {
                s += a[i * m + k] * b[k * m + j];
            }
            out[i * m + j] = s;
        }
    }
}

pub fn matmul(m: usize, a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; m * m];
    matmul_into(m, a, b, &mut out);
    out
}

pub fn transpose(m: usize, a: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; m * m];
    for i in 0..m {
        for j in 0..m {
            out[j * m + i] = a[i * m + j];
        }
    }
    out
}

pub fn identity(m: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * m];
    for i in 0..m {
        out[i * m + i] = 1.0;
    }
    out
}

/// `out += [a, b]`.
#[inline]
pub fn add_commutator(m: usize, a: &[f64], b: &[f64], out: &mut [f64]) {
    for i in 0..m {
        for j in 0..m {
            let mut s = 0.0;
            for k in 0..m {
                s += a[i * m + k] * b[k * m + j] - b[i * m + k] * a[k * m + j];
            }
            out[i * m + j] += s;
        }
    }
}

/// Replace `a` by `(a - a^T)/2`, which is skew to the last bit.
#[inline]
pub fn antisymmetrize(m: usize, a: &mut [f64]) {
    for i in 0..m {
        a[i * m + i] = 0.0;
        for j in i + 1..m {
            let v = 0.5 * (a[i * m + j] - a[j * m + i]);
            a[i * m + j] = v;
            a[j * m + i] = -v;
        }
    }
}

pub fn frobenius(a: &[f64]) -> f64 {
    norm_sq(a).sqrt()
}

/// `max |a a^T - I|`.
pub fn orthogonality_defect(m: usize, a: &[f64]) -> f64 {
    let at = transpose(m, a);
    let p = matmul(m, a, &at);
    let mut worst = 0.0f64;
    for i in 0..m {
        for j in 0..m {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((p[i * m + j] - target).abs());
        }
    }
    worst
}

/// Matrix exponential of a skew matrix by scaling and squaring of a Taylor series.
pub fn expm(m: usize, a: &[f64]) -> Vec<f64> {
    let norm = frobenius(a);
    let mut squarings = 0;
    let mut scale = 1.0;
    while norm * scale > 0.25 {
        scale *= 0.5;
        squarings += 1;
    }
    let scaled: Vec<f64> = a.iter().map(|x| x * scale).collect();
    let mut result = identity(m);
    let mut term = identity(m);
    for k in 1..=16 {
        let next = matmul(m, &term, &scaled);
        term = next.iter().map(|x| x / k as f64).collect();
        for (r, t) in result.iter_mut().zip(&term) {
            *r += t;
        }
    }
    for _ in 0..squarings {
        result = matmul(m, &result, &result);
    }
    result
}

/// Cayley map `(I - a/2)^{-1} (I + a/2)`, orthogonal for skew `a`.
pub fn cayley(m: usize, a: &[f64]) -> Vec<f64> {
    let mut lhs = identity(m);
    let mut rhs = identity(m);
    for k in 0..m * m {
        lhs[k] -= 0.5 * a[k];
        rhs[k] += 0.5 * a[k];
    }
    solve_into(m, &mut lhs, &mut rhs);
    rhs
}

/// Solve `a x = b` for the `m` columns of `b` in place (Gaussian elimination, partial pivoting).
fn solve_into(m: usize, a: &mut [f64], b: &mut [f64]) {
    for col in 0..m {
        let pivot = (col..m)
            .max_by(|&x, &y| a[x * m + col].abs().total_cmp(&a[y * m + col].abs()))
            .unwrap_or(col);
        if pivot != col {
            for k in 0..m {
                a.swap(col * m + k, pivot * m + k);
                b.swap(col * m + k, pivot * m + k);
            }
        }
        let d = a[col * m + col];
        for row in col + 1..m {
            let f = a[row * m + col] / d;
            if f == 0.0 {
                continue;
            }
            for k in 0..m {
                a[row * m + k] -= f * a[col * m + k];
                b[row * m + k] -= f * b[col * m + k];
            }
        }
    }
    for col in (0..m).rev() {
        let d = a[col * m + col];
        for k in 0..m {
            b[col * m + k] /= d;
        }
        for row in 0..col {
            let f = a[row * m + col];
            for k in 0..m {
                b[row * m + k] -= f * b[col * m + k];
            }
        }
    }
}
