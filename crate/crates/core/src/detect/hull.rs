//! Convex hull of projected normal points. Membership is a linear
//! feasibility problem solved by phase-1 simplex; the distance to the hull
//! comes from Wolfe's nearest-point algorithm.

use log::warn;
use nalgebra::{DMatrix, DVector};
use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::{check_dim, check_finite};
use crate::error::{Error, Result};

pub const MEMBERSHIP_TOL: f64 = 1e-9;
const PIVOT_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum HullModel {
    Hull { vertices: Array2<f64>, dimension: usize },
    /// Fallback for affinely dependent training points.
    BoundingBox { min: Vec<f64>, max: Vec<f64>, dimension: usize },
}

/// Phase-1 simplex on `Σ λᵢ vᵢ = p, Σ λᵢ = 1, λ ≥ 0`. Returns the minimal
/// total infeasibility, zero (up to rounding) iff `p` is in the hull.
pub fn infeasibility(vertices: &[&[f64]], p: &[f64]) -> f64 {
    let n = vertices.len();
    let m = p.len() + 1;
    let width = n + m + 1;
    let rhs = width - 1;
    let mut t = vec![0.0; m * width];
    for i in 0..m {
        let b = if i < p.len() { p[i] } else { 1.0 };
        let sign = if b < 0.0 { -1.0 } else { 1.0 };
        for (j, v) in vertices.iter().enumerate() {
            t[i * width + j] = sign * if i < p.len() { v[i] } else { 1.0 };
        }
        t[i * width + n + i] = 1.0;
        t[i * width + rhs] = sign * b;
    }
    let mut basis: Vec<usize> = (n..n + m).collect();
    // Reduced costs of the phase-1 objective Σ artificials.
    let mut cost = vec![0.0; width];
    for j in 0..n {
        cost[j] = -(0..m).map(|i| t[i * width + j]).sum::<f64>();
    }
    cost[rhs] = -(0..m).map(|i| t[i * width + rhs]).sum::<f64>();

    let max_pivots = 50 * (n + m);
    for _ in 0..max_pivots {
        // Bland: lowest-index improving column.
        let Some(enter) = (0..n + m).find(|&j| cost[j] < -PIVOT_EPS) else {
            break;
        };
        let mut leave: Option<(usize, f64)> = None;
        for i in 0..m {
            let a = t[i * width + enter];
            if a > PIVOT_EPS {
                let ratio = t[i * width + rhs] / a;
                let better = match leave {
                    None => true,
                    Some((l, r)) => ratio < r - PIVOT_EPS || (ratio <= r + PIVOT_EPS && basis[i] < basis[l]),
                };
                if better {
                    leave = Some((i, ratio));
                }
            }
        }
        let Some((row, _)) = leave else {
            break;
        };
        let piv = t[row * width + enter];
        for j in 0..width {
            t[row * width + j] /= piv;
        }
        for i in 0..m {
            if i != row {
                let f = t[i * width + enter];
                if f != 0.0 {
                    for j in 0..width {
                        t[i * width + j] -= f * t[row * width + j];
                    }
                }
            }
        }
        let f = cost[enter];
        for j in 0..width {
            cost[j] -= f * t[row * width + j];
        }
        basis[row] = enter;
    }
    (-cost[rhs]).max(0.0)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Nearest point of `conv(vertices)` to `p` by Wolfe's algorithm.
pub fn nearest_point(vertices: &[&[f64]], p: &[f64]) -> Vec<f64> {
    let k = p.len();
    let q: Vec<Vec<f64>> = vertices.iter().map(|v| v.iter().zip(p).map(|(a, b)| a - b).collect()).collect();
    let scale = q.iter().map(|v| dot(v, v)).fold(0.0, f64::max).max(1e-300);
    let combine = |set: &[usize], w: &[f64]| -> Vec<f64> {
        let mut x = vec![0.0; k];
        for (&s, &ws) in set.iter().zip(w) {
            for (xi, qi) in x.iter_mut().zip(&q[s]) {
                *xi += ws * qi;
            }
        }
        x
    };
    let start = (0..q.len()).min_by(|&a, &b| dot(&q[a], &q[a]).total_cmp(&dot(&q[b], &q[b]))).unwrap_or(0);
    let mut set = vec![start];
    let mut w = vec![1.0];
    let mut x = q[start].clone();
    for _ in 0..(10 * (q.len() + k) + 100) {
        let xx = dot(&x, &x);
        let (j, xq) = (0..q.len())
            .map(|j| (j, dot(&x, &q[j])))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("non-empty vertex set");
        if xx - xq <= 1e-13 * scale || set.contains(&j) || set.len() > k {
            break;
        }
        set.push(j);
        w.push(0.0);
        loop {
            let Some(u) = affine_minimizer(&q, &set) else {
                break;
            };
            if u.iter().all(|&v| v > 1e-14) {
                w = u;
                break;
            }
            let theta = set
                .iter()
                .enumerate()
                .filter(|&(i, _)| u[i] <= 1e-14)
                .map(|(i, _)| w[i] / (w[i] - u[i]))
                .fold(1.0, f64::min);
            for i in 0..set.len() {
                w[i] = theta * u[i] + (1.0 - theta) * w[i];
            }
            let keep: Vec<usize> = (0..set.len()).filter(|&i| w[i] > 1e-14).collect();
            set = keep.iter().map(|&i| set[i]).collect();
            w = keep.iter().map(|&i| w[i]).collect();
            let total: f64 = w.iter().sum();
            w.iter_mut().for_each(|v| *v /= total);
        }
        x = combine(&set, &w);
    }
    x.iter().zip(p).map(|(a, b)| a + b).collect()
}

/// Minimum-norm point of the affine hull of `q[set]`, as barycentric weights.
fn affine_minimizer(q: &[Vec<f64>], set: &[usize]) -> Option<Vec<f64>> {
    let s = set.len();
    let mut a = DMatrix::<f64>::zeros(s + 1, s + 1);
    for i in 0..s {
        for j in 0..s {
            a[(i, j)] = dot(&q[set[i]], &q[set[j]]);
        }
        a[(i, s)] = 1.0;
        a[(s, i)] = 1.0;
    }
    let mut b = DVector::<f64>::zeros(s + 1);
    b[s] = 1.0;
    let sol = a.lu().solve(&b)?;
    let u: Vec<f64> = sol.iter().take(s).copied().collect();
    u.iter().all(|v| v.is_finite()).then_some(u)
}

fn rows_of(x: &ArrayView2<'_, f64>) -> Vec<Vec<f64>> {
    x.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn is_affinely_independent(points: &[Vec<f64>], k: usize) -> bool {
    let n = points.len();
    if n < k + 1 {
        return false;
    }
    let mean: Vec<f64> = (0..k).map(|j| points.iter().map(|p| p[j]).sum::<f64>() / n as f64).collect();
    let mut cov = DMatrix::<f64>::zeros(k, k);
    for p in points {
        for a in 0..k {
            for b in 0..k {
                cov[(a, b)] += (p[a] - mean[a]) * (p[b] - mean[b]);
            }
        }
    }
    let ev = cov.symmetric_eigenvalues();
    let max = ev.iter().copied().fold(0.0, f64::max);
    max > 0.0 && ev.iter().all(|&e| e > 1e-12 * max)
}

pub fn hull_fit(points: ArrayView2<'_, f64>) -> Result<HullModel> {
    let (n, k) = points.dim();
    if n == 0 || k == 0 {
        return Err(Error::EmptyFrame);
    }
    check_finite(points)?;
    let pts = rows_of(&points);
    if !is_affinely_independent(&pts, k) {
        warn!("hull points are affinely dependent; using a bounding box");
        let min = (0..k).map(|j| pts.iter().map(|p| p[j]).fold(f64::INFINITY, f64::min)).collect();
        let max = (0..k).map(|j| pts.iter().map(|p| p[j]).fold(f64::NEG_INFINITY, f64::max)).collect();
        return Ok(HullModel::BoundingBox { min, max, dimension: k });
    }

    // Seed with the per-axis extremes, then grow until every point is covered.
    let mut chosen = vec![false; n];
    let mut verts: Vec<usize> = Vec::new();
    fn add(i: usize, chosen: &mut [bool], verts: &mut Vec<usize>) {
        if !chosen[i] {
            chosen[i] = true;
            verts.push(i);
        }
    }
    for j in 0..k {
        let lo = (0..n).min_by(|&a, &b| pts[a][j].total_cmp(&pts[b][j])).expect("n > 0");
        let hi = (0..n).max_by(|&a, &b| pts[a][j].total_cmp(&pts[b][j])).expect("n > 0");
        add(lo, &mut chosen, &mut verts);
        add(hi, &mut chosen, &mut verts);
    }
    for i in 0..n {
        if chosen[i] {
            continue;
        }
        loop {
            let vs: Vec<&[f64]> = verts.iter().map(|&v| pts[v].as_slice()).collect();
            if infeasibility(&vs, &pts[i]) <= MEMBERSHIP_TOL {
                break;
            }
            let q = nearest_point(&vs, &pts[i]);
            let dir: Vec<f64> = pts[i].iter().zip(&q).map(|(a, b)| a - b).collect();
            let best = (0..n).max_by(|&a, &b| dot(&dir, &pts[a]).total_cmp(&dot(&dir, &pts[b]))).expect("n > 0");
            if chosen[best] {
                // Rounding: the point is as extreme as the current set allows.
                add(i, &mut chosen, &mut verts);
                break;
            }
            add(best, &mut chosen, &mut verts);
        }
    }
    verts.sort_unstable();
    let mut vertices = Array2::zeros((verts.len(), k));
    for (r, &v) in verts.iter().enumerate() {
        vertices.row_mut(r).assign(&points.row(v));
    }
    Ok(HullModel::Hull { vertices, dimension: k })
}

impl HullModel {
    pub fn dimension(&self) -> usize {
        match self {
            HullModel::Hull { dimension, .. } | HullModel::BoundingBox { dimension, .. } => *dimension,
        }
    }

    /// Membership verdict and Euclidean distance to the hull (0 inside).
    pub fn contains(&self, p: &[f64]) -> Result<(bool, f64)> {
        check_dim(self.dimension(), p.len())?;
        match self {
            HullModel::Hull { vertices, .. } => {
                let vs: Vec<&[f64]> =
                    vertices.rows().into_iter().map(|r| r.to_slice().expect("standard layout")).collect();
                if infeasibility(&vs, p) <= MEMBERSHIP_TOL {
                    return Ok((true, 0.0));
                }
                let q = nearest_point(&vs, p);
                let d = q.iter().zip(p).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
                Ok((false, d))
            }
            HullModel::BoundingBox { min, max, .. } => {
                let d2: f64 = p
                    .iter()
                    .zip(min.iter().zip(max))
                    .map(|(&v, (&lo, &hi))| {
                        let e = (lo - v).max(v - hi).max(0.0);
                        if e <= MEMBERSHIP_TOL {
                            0.0
                        } else {
                            e * e
                        }
                    })
                    .sum();
                Ok((d2 == 0.0, d2.sqrt()))
            }
        }
    }

    pub fn margin_matrix(&self, x: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        x.rows().into_iter().map(|r| Ok(self.contains(&r.to_vec())?.1)).collect()
    }

    pub fn n_vertices(&self) -> usize {
        match self {
            HullModel::Hull { vertices, .. } => vertices.nrows(),
            HullModel::BoundingBox { .. } => 0,
        }
    }
}

pub fn hull_contains(model: &HullModel, p: &[f64]) -> Result<(bool, f64)> {
    model.contains(p)
}
