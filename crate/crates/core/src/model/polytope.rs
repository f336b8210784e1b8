//! Convex compact control sets.

use alloc::vec;
use alloc::vec::Vec;

use crate::math::{dot, fabs, norm1, norm2};
use crate::{Error, Result};

const MEMBERSHIP_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub enum PolytopeKind {
    Box { lower: Vec<f64>, upper: Vec<f64> },
    General,
}

/// An edge between two vertices together with its unit direction.
#[derive(Clone, Debug, PartialEq)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
    pub direction: Vec<f64>,
}

/// A convex compact polytope in ℝᵐ, given either as a box or by its
/// vertices and edges.
///
/// Box vertices are indexed by bit pattern: bit `j` of the index selects the
/// upper bound of component `j`.
#[derive(Clone, Debug, PartialEq)]
pub struct Polytope {
    dim: usize,
    kind: PolytopeKind,
    vertices: Vec<Vec<f64>>,
    edges: Vec<Edge>,
}

impl Polytope {
    /// The interval `[lower, upper]` in ℝ¹.
    pub fn interval(lower: f64, upper: f64) -> Result<Self> {
        Self::new_box(vec![lower], vec![upper])
    }

    pub fn new_box(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::Dimension {
                what: "box bounds",
                expected: lower.len(),
                found: upper.len(),
            });
        }
        let dim = lower.len();
        if dim == 0 || dim > 16 {
            return Err(Error::InvalidParameter {
                name: "control_dim",
                constraint: "1 <= m <= 16 for box control sets",
                value: dim as f64,
            });
        }
        for (l, u) in lower.iter().zip(&upper) {
            if !(l.is_finite() && u.is_finite()) || l > u {
                return Err(Error::InvalidParameter {
                    name: "box bounds",
                    constraint: "finite with lower <= upper",
                    value: *l,
                });
            }
        }
        let count = 1usize << dim;
        let vertices: Vec<Vec<f64>> = (0..count)
            .map(|k| {
                (0..dim)
                    .map(|j| if (k >> j) & 1 == 1 { upper[j] } else { lower[j] })
                    .collect()
            })
            .collect();
        let mut edges = Vec::new();
        for k in 0..count {
            for j in 0..dim {
                if (k >> j) & 1 == 0 && lower[j] < upper[j] {
                    let mut direction = vec![0.0; dim];
                    direction[j] = 1.0;
                    edges.push(Edge {
                        from: k,
                        to: k | (1 << j),
                        direction,
                    });
                }
            }
        }
        Ok(Self {
            dim,
            kind: PolytopeKind::Box { lower, upper },
            vertices,
            edges,
        })
    }

    /// A polytope from an explicit vertex list and edge list. Every vertex
    /// must be an extreme point and every edge must join distinct points.
    pub fn from_vertices(vertices: Vec<Vec<f64>>, edges: &[(usize, usize)]) -> Result<Self> {
        let dim = vertices.first().map(Vec::len).unwrap_or(0);
        if dim == 0 {
            return Err(Error::Precondition("polytope needs at least one vertex"));
        }
        for v in &vertices {
            if v.len() != dim {
                return Err(Error::Dimension {
                    what: "polytope vertex",
                    expected: dim,
                    found: v.len(),
                });
            }
            if v.iter().any(|c| !c.is_finite()) {
                return Err(Error::Precondition("polytope vertices must be finite"));
            }
        }
        for (i, v) in vertices.iter().enumerate() {
            let others: Vec<&[f64]> = vertices
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, w)| w.as_slice())
                .collect();
            if !others.is_empty() && in_convex_hull(&others, v) {
                return Err(Error::Precondition("every listed vertex must be an extreme point"));
            }
        }
        let mut out_edges = Vec::with_capacity(edges.len());
        for &(a, b) in edges {
            if a >= vertices.len() || b >= vertices.len() {
                return Err(Error::Precondition("edge refers to a missing vertex"));
            }
            let diff: Vec<f64> = vertices[b].iter().zip(&vertices[a]).map(|(x, y)| x - y).collect();
            let len = norm2(&diff);
            if len == 0.0 {
                return Err(Error::Precondition("edge joins coincident vertices"));
            }
            out_edges.push(Edge {
                from: a,
                to: b,
                direction: diff.iter().map(|d| d / len).collect(),
            });
        }
        Ok(Self {
            dim,
            kind: PolytopeKind::General,
            vertices,
            edges: out_edges,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> &PolytopeKind {
        &self.kind
    }

    pub fn bounds(&self) -> Option<(&[f64], &[f64])> {
        match &self.kind {
            PolytopeKind::Box { lower, upper } => Some((lower, upper)),
            PolytopeKind::General => None,
        }
    }

    pub fn vertices(&self) -> &[Vec<f64>] {
        &self.vertices
    }

    pub fn vertex(&self, index: usize) -> &[f64] {
        &self.vertices[index]
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Edge directions with parallel edges merged; each direction is
    /// normalized so that its first nonzero component is positive.
    pub fn edge_directions(&self) -> Vec<Vec<f64>> {
        let mut out: Vec<Vec<f64>> = Vec::new();
        for e in &self.edges {
            let mut d = e.direction.clone();
            if let Some(first) = d.iter().find(|c| fabs(**c) > 1e-12) {
                if *first < 0.0 {
                    d.iter_mut().for_each(|c| *c = -*c);
                }
            }
            let seen = out.iter().any(|o| o.iter().zip(&d).all(|(a, b)| fabs(a - b) <= 1e-12));
            if !seen {
                out.push(d);
            }
        }
        out
    }

    pub fn centroid(&self) -> Vec<f64> {
        match &self.kind {
            PolytopeKind::Box { lower, upper } => lower.iter().zip(upper).map(|(l, u)| 0.5 * (l + u)).collect(),
            PolytopeKind::General => {
                let n = self.vertices.len() as f64;
                (0..self.dim)
                    .map(|j| self.vertices.iter().map(|v| v[j]).sum::<f64>() / n)
                    .collect()
            }
        }
    }

    pub fn contains(&self, u: &[f64]) -> bool {
        self.contains_with_tol(u, MEMBERSHIP_TOL)
    }

    pub fn contains_with_tol(&self, u: &[f64], tol: f64) -> bool {
        if u.len() != self.dim || u.iter().any(|c| !c.is_finite()) {
            return false;
        }
        match &self.kind {
            PolytopeKind::Box { lower, upper } => u
                .iter()
                .zip(lower.iter().zip(upper))
                .all(|(c, (l, h))| *c >= l - tol && *c <= h + tol),
            PolytopeKind::General => {
                let verts: Vec<&[f64]> = self.vertices.iter().map(Vec::as_slice).collect();
                hull_residual(&verts, u) <= tol
            }
        }
    }

    /// Index of a vertex minimizing `⟨sigma, v⟩`; ties go to the lowest index.
    pub fn minimizing_vertex(&self, sigma: &[f64]) -> usize {
        match &self.kind {
            PolytopeKind::Box { lower, upper } => {
                // componentwise rule; zero slope keeps the lower bound (bit 0)
                let mut index = 0usize;
                for j in 0..self.dim {
                    if sigma[j] < 0.0 && lower[j] < upper[j] {
                        index |= 1 << j;
                    }
                }
                index
            }
            PolytopeKind::General => {
                let mut best = 0;
                let mut best_val = dot(sigma, &self.vertices[0]);
                for (k, v) in self.vertices.iter().enumerate().skip(1) {
                    let val = dot(sigma, v);
                    if val < best_val {
                        best = k;
                        best_val = val;
                    }
                }
                best
            }
        }
    }

    /// Distance from `−sigma` to the normal cone `N_U(u)`.
    ///
    /// Boxes use the componentwise ℓ¹ violation of the sign pattern; general
    /// polytopes use the Euclidean norm of the projection of `−sigma` onto
    /// the tangent cone. Returns `+∞` when `u ∉ U`.
    pub fn normal_cone_distance(&self, u: &[f64], sigma: &[f64]) -> f64 {
        if !self.contains(u) {
            return f64::INFINITY;
        }
        match &self.kind {
            PolytopeKind::Box { lower, upper } => {
                let mut dist = 0.0;
                for j in 0..self.dim {
                    let scale = 1.0_f64.max(fabs(lower[j])).max(fabs(upper[j]));
                    let tol = MEMBERSHIP_TOL * scale;
                    let at_lower = fabs(u[j] - lower[j]) <= tol;
                    let at_upper = fabs(u[j] - upper[j]) <= tol;
                    dist += match (at_lower, at_upper) {
                        (true, true) => 0.0,
                        // N at the lower bound is (−∞, 0]; need σ_j ≥ 0
                        (true, false) => (-sigma[j]).max(0.0),
                        (false, true) => sigma[j].max(0.0),
                        (false, false) => fabs(sigma[j]),
                    };
                }
                dist
            }
            PolytopeKind::General => {
                let gens: Vec<Vec<f64>> = self
                    .vertices
                    .iter()
                    .map(|v| v.iter().zip(u).map(|(a, b)| a - b).collect::<Vec<f64>>())
                    .filter(|d| norm1(d) > 1e-14)
                    .collect();
                if gens.is_empty() {
                    return 0.0;
                }
                let target: Vec<f64> = sigma.iter().map(|s| -s).collect();
                let cols: Vec<&[f64]> = gens.iter().map(Vec::as_slice).collect();
                let (_, proj) = nnls(&cols, &target);
                norm2(&proj)
            }
        }
    }

    /// Width `u₂ − u₁` of a one-dimensional control set.
    pub fn interval_width(&self) -> Option<f64> {
        match &self.kind {
            PolytopeKind::Box { lower, upper } if self.dim == 1 => Some(upper[0] - lower[0]),
            _ => None,
        }
    }
}

fn in_convex_hull(points: &[&[f64]], target: &[f64]) -> bool {
    hull_residual(points, target) <= 1e-10
}

/// Zero exactly when `target` lies in the convex hull of `points`: the
/// nonnegative least-squares residual of `Σ λ_j (p_j − target) = 0`, `Σ λ_j = 1`.
fn hull_residual(points: &[&[f64]], target: &[f64]) -> f64 {
    let cols: Vec<Vec<f64>> = points
        .iter()
        .map(|p| {
            let mut c: Vec<f64> = p.iter().zip(target).map(|(a, b)| a - b).collect();
            c.push(1.0);
            c
        })
        .collect();
    let mut rhs = vec![0.0; target.len()];
    rhs.push(1.0);
    let col_refs: Vec<&[f64]> = cols.iter().map(Vec::as_slice).collect();
    let (_, fit) = nnls(&col_refs, &rhs);
    let diff: Vec<f64> = fit.iter().zip(&rhs).map(|(a, b)| a - b).collect();
    norm2(&diff)
}

/// Lawson-Hanson nonnegative least squares: minimizes `‖G λ − y‖` over
/// `λ ≥ 0` where the columns of `G` are `cols`. Returns `(λ, G λ)`.
pub(crate) fn nnls(cols: &[&[f64]], y: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let k = cols.len();
    let rows = y.len();
    let mut lambda = vec![0.0; k];
    let mut passive = vec![false; k];
    let scale = 1.0 + norm2(y) + cols.iter().map(|c| norm2(c)).fold(0.0, f64::max);
    let tol = 1e-13 * scale * scale;

    let fit = |lambda: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; rows];
        for (c, l) in cols.iter().zip(lambda) {
            for r in 0..rows {
                out[r] += c[r] * l;
            }
        }
        out
    };

    for _outer in 0..(3 * k + 10) {
        let g = fit(&lambda);
        let resid: Vec<f64> = y.iter().zip(&g).map(|(a, b)| a - b).collect();
        let grad: Vec<f64> = cols.iter().map(|c| dot(c, &resid)).collect();
        let candidate = (0..k)
            .filter(|&j| !passive[j])
            .max_by(|&a, &b| grad[a].partial_cmp(&grad[b]).unwrap_or(core::cmp::Ordering::Equal));
        match candidate {
            Some(j) if grad[j] > tol => passive[j] = true,
            _ => break,
        }
        for _inner in 0..(3 * k + 10) {
            let z = passive_least_squares(cols, y, &passive);
            let all_positive = (0..k).filter(|&j| passive[j]).all(|j| z[j] > 0.0);
            if all_positive {
                lambda = z;
                break;
            }
            let mut alpha = 1.0_f64;
            for j in 0..k {
                if passive[j] && z[j] <= 0.0 {
                    let denom = lambda[j] - z[j];
                    if denom > 0.0 {
                        alpha = alpha.min(lambda[j] / denom);
                    }
                }
            }
            for j in 0..k {
                lambda[j] += alpha * (z[j] - lambda[j]);
                if passive[j] && lambda[j] <= 1e-15 {
                    passive[j] = false;
                    lambda[j] = 0.0;
                }
            }
        }
    }
    let g = fit(&lambda);
    (lambda, g)
}

fn passive_least_squares(cols: &[&[f64]], y: &[f64], passive: &[bool]) -> Vec<f64> {
    let idx: Vec<usize> = (0..cols.len()).filter(|&j| passive[j]).collect();
    let p = idx.len();
    let mut z = vec![0.0; cols.len()];
    if p == 0 {
        return z;
    }
    // normal equations with a tiny ridge for rank-deficient generator sets
    let mut a = vec![0.0; p * p];
    let mut b = vec![0.0; p];
    for (r, &i) in idx.iter().enumerate() {
        for (c, &j) in idx.iter().enumerate() {
            a[r * p + c] = dot(cols[i], cols[j]);
        }
        a[r * p + r] += 1e-14 * (1.0 + a[r * p + r]);
        b[r] = dot(cols[i], y);
    }
    if crate::math::solve_dense(&mut a, &mut b, p) {
        for (r, &i) in idx.iter().enumerate() {
            z[i] = b[r];
        }
    }
    z
}
