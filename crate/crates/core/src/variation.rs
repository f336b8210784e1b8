//! Second variation, linearized optimality system, the map `Λ`, and the
//! empirical coercivity probe.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::integrate::{linear_rk4_nodes, Grid, GridFunction, Interpolation, NormKind};
use crate::math::{abs_linear_integral, cos, dot, fabs, gauss5, norm1, sin};
use crate::model::{check_dims, ControlAffineProblem, ExtremalTriple, Polytope, PolytopeKind, ProblemExt};
use crate::pmp::{analyze_signal, SwitchingConfig};
use crate::{Error, Result};

const SUBSTEPS: usize = 4;

/// Coefficients of the linearized system along a reference triple.
///
/// Matrices are stored per cell at both cell ends (`u` jumps at nodes, so a
/// node value alone is ambiguous for `A` and `W`). Within a cell they are
/// interpolated linearly.
#[derive(Clone, Debug)]
pub struct LinearizationData {
    grid: Grid,
    n: usize,
    m: usize,
    a: Vec<f64>,
    b: Vec<f64>,
    w: Vec<f64>,
    s: Vec<f64>,
    sigma: GridFunction,
    control: GridFunction,
    /// `max_t ‖S B − (S B)ᵀ‖_max`.
    pub symmetry_defect: f64,
    /// `max_t ‖W − Wᵀ‖_max`.
    pub hessian_asymmetry: f64,
}

fn mat_t_mat_defect(s: &[f64], b: &[f64], n: usize, m: usize) -> f64 {
    // (S B)_{jk} = Σ_l S_{jl} B_{lk}
    let mut sb = vec![0.0; m * m];
    for j in 0..m {
        for k in 0..m {
            sb[j * m + k] = (0..n).map(|l| s[j * n + l] * b[l * m + k]).sum();
        }
    }
    let mut worst: f64 = 0.0;
    for j in 0..m {
        for k in 0..m {
            worst = worst.max(fabs(sb[j * m + k] - sb[k * m + j]));
        }
    }
    worst
}

pub fn linearize<P: ControlAffineProblem + ?Sized>(problem: &P, triple: &ExtremalTriple) -> Result<LinearizationData> {
    check_dims(problem, triple)?;
    let grid = triple.grid();
    let (n, m) = (problem.state_dim(), problem.control_dim());
    let cells = grid.steps();
    let mut a = vec![0.0; cells * 2 * n * n];
    let mut b = vec![0.0; cells * 2 * n * m];
    let mut w = vec![0.0; cells * 2 * n * n];
    let mut s = vec![0.0; cells * 2 * m * n];
    let mut symmetry_defect: f64 = 0.0;
    let mut hessian_asymmetry: f64 = 0.0;
    for i in 0..cells {
        let u = triple.control.at(i);
        for side in 0..2 {
            let node = i + side;
            let t = grid.node(node);
            let (x, p) = (triple.state.at(node), triple.costate.at(node));
            let k = 2 * i + side;
            let ak = &mut a[k * n * n..(k + 1) * n * n];
            problem.state_jacobian(t, x, u, ak);
            let bk = &mut b[k * n * m..(k + 1) * n * m];
            problem.control_matrix(t, x, bk);
            let wk = &mut w[k * n * n..(k + 1) * n * n];
            problem.hamiltonian_state_hessian(t, x, p, u, wk)?;
            let sk = &mut s[k * m * n..(k + 1) * m * n];
            problem.hamiltonian_mixed_hessian(t, x, p, sk);
            symmetry_defect = symmetry_defect.max(mat_t_mat_defect(sk, bk, n, m));
            for r in 0..n {
                for c in 0..n {
                    hessian_asymmetry = hessian_asymmetry.max(fabs(wk[r * n + c] - wk[c * n + r]));
                }
            }
        }
    }
    Ok(LinearizationData {
        grid,
        n,
        m,
        a,
        b,
        w,
        s,
        sigma: triple.switching_at_nodes(problem),
        control: triple.control.clone(),
        symmetry_defect,
        hessian_asymmetry,
    })
}

impl LinearizationData {
    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn state_dim(&self) -> usize {
        self.n
    }

    pub fn control_dim(&self) -> usize {
        self.m
    }

    /// `σ̂` at the nodes.
    pub fn sigma(&self) -> &GridFunction {
        &self.sigma
    }

    pub fn reference_control(&self) -> &GridFunction {
        &self.control
    }

    /// `A` at the left (`side = 0`) or right end of cell `i`.
    pub fn a_at(&self, i: usize, side: usize) -> &[f64] {
        let sz = self.n * self.n;
        &self.a[(2 * i + side) * sz..(2 * i + side + 1) * sz]
    }

    pub fn b_at(&self, i: usize, side: usize) -> &[f64] {
        let sz = self.n * self.m;
        &self.b[(2 * i + side) * sz..(2 * i + side + 1) * sz]
    }

    pub fn w_at(&self, i: usize, side: usize) -> &[f64] {
        let sz = self.n * self.n;
        &self.w[(2 * i + side) * sz..(2 * i + side + 1) * sz]
    }

    pub fn s_at(&self, i: usize, side: usize) -> &[f64] {
        let sz = self.m * self.n;
        &self.s[(2 * i + side) * sz..(2 * i + side + 1) * sz]
    }

    fn interp(data: &[f64], size: usize, i: usize, frac: f64, out: &mut [f64]) {
        let l = &data[2 * i * size..(2 * i + 1) * size];
        let r = &data[(2 * i + 1) * size..(2 * i + 2) * size];
        for k in 0..size {
            out[k] = l[k] + frac * (r[k] - l[k]);
        }
    }

    fn check(&self, f: &GridFunction, dim: usize) -> Result<()> {
        if f.grid() != self.grid {
            return Err(Error::GridMismatch);
        }
        if f.dim() != dim {
            return Err(Error::Dimension {
                what: "variation",
                expected: dim,
                found: f.dim(),
            });
        }
        Ok(())
    }
}

/// Disturbance `z = (ξ, π, ρ)`; absent components are zero.
#[derive(Clone, Debug, Default)]
pub struct Disturbance {
    pub xi: Option<GridFunction>,
    pub pi: Option<GridFunction>,
    pub rho: Option<GridFunction>,
}

fn eval_opt(f: Option<&GridFunction>, i: usize, frac: f64, out: &mut [f64]) {
    match f {
        Some(g) => g.eval_in_cell(i, frac, out),
        None => out.iter_mut().for_each(|v| *v = 0.0),
    }
}

/// Solves `δẋ = Aδx + Bδu − ξ`, `δx(0) = 0`, and
/// `−δṗ = Aᵀδp + Wδx + Sᵀδu − π`, `δp(T) = 0`.
fn solve_linearized(
    lin: &LinearizationData,
    du: &GridFunction,
    z: &Disturbance,
    with_costate: bool,
) -> (GridFunction, GridFunction) {
    let (n, m) = (lin.n, lin.m);
    let grid = lin.grid;
    let h = grid.step();
    let mut am = vec![0.0; n * n];
    let mut bm = vec![0.0; n * m];
    let mut tmp = vec![0.0; n];
    let dx_rhs = |i: usize, t: f64, y: &[f64], o: &mut [f64], am: &mut [f64], bm: &mut [f64], tmp: &mut [f64]| {
        let frac = ((t - grid.node(i)) / h).clamp(0.0, 1.0);
        LinearizationData::interp(&lin.a, n * n, i, frac, am);
        LinearizationData::interp(&lin.b, n * m, i, frac, bm);
        eval_opt(z.xi.as_ref(), i, frac, tmp);
        let dui = du.at(i);
        for k in 0..n {
            o[k] = dot(&am[k * n..(k + 1) * n], y) + dot(&bm[k * m..(k + 1) * m], dui) - tmp[k];
        }
    };
    let dx = linear_rk4_nodes(grid, n, &vec![0.0; n], false, SUBSTEPS, |i, t, y, o| {
        dx_rhs(i, t, y, o, &mut am, &mut bm, &mut tmp)
    });
    if !with_costate {
        return (dx, GridFunction::zeros(grid, n, Interpolation::PiecewiseLinear));
    }
    // cubic Hermite for δx inside a cell, slopes from the cell's own data
    let mut ends = vec![0.0; grid.steps() * 2 * n];
    {
        let (mut am, mut bm, mut tmp) = (vec![0.0; n * n], vec![0.0; n * m], vec![0.0; n]);
        for i in 0..grid.steps() {
            let (l, r) = ends[2 * i * n..(2 * i + 2) * n].split_at_mut(n);
            dx_rhs(i, grid.node(i), dx.at(i), l, &mut am, &mut bm, &mut tmp);
            dx_rhs(i, grid.node(i + 1), dx.at(i + 1), r, &mut am, &mut bm, &mut tmp);
        }
    }
    let mut wm = vec![0.0; n * n];
    let mut sm = vec![0.0; m * n];
    let mut xt = vec![0.0; n];
    let mut pi = vec![0.0; n];
    let dp = linear_rk4_nodes(grid, n, &vec![0.0; n], true, SUBSTEPS, |i, t, y, o| {
        let frac = ((t - grid.node(i)) / h).clamp(0.0, 1.0);
        let (x0, x1) = (dx.at(i), dx.at(i + 1));
        let (d0, d1) = (
            &ends[2 * i * n..(2 * i + 1) * n],
            &ends[(2 * i + 1) * n..(2 * i + 2) * n],
        );
        let s = frac;
        let (h00, h10, h01, h11) = (
            (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s),
            s * (1.0 - s) * (1.0 - s),
            s * s * (3.0 - 2.0 * s),
            s * s * (s - 1.0),
        );
        for k in 0..n {
            xt[k] = h00 * x0[k] + h * h10 * d0[k] + h01 * x1[k] + h * h11 * d1[k];
        }
        LinearizationData::interp(&lin.a, n * n, i, frac, &mut am);
        LinearizationData::interp(&lin.w, n * n, i, frac, &mut wm);
        LinearizationData::interp(&lin.s, m * n, i, frac, &mut sm);
        eval_opt(z.pi.as_ref(), i, frac, &mut pi);
        let dui = du.at(i);
        for l in 0..n {
            let mut acc = -pi[l];
            for k in 0..n {
                acc += am[k * n + l] * y[k] + wm[l * n + k] * xt[k];
            }
            for j in 0..m {
                acc += sm[j * n + l] * dui[j];
            }
            o[l] = -acc;
        }
    });
    (dx, dp)
}

/// `δx` for the control variation `δu`.
pub fn variational_state(lin: &LinearizationData, du: &GridFunction) -> Result<GridFunction> {
    lin.check(du, lin.m)?;
    Ok(solve_linearized(lin, du, &Disturbance::default(), false).0)
}

/// `δp` for the control variation `δu`.
pub fn variational_costate(lin: &LinearizationData, du: &GridFunction) -> Result<GridFunction> {
    lin.check(du, lin.m)?;
    Ok(solve_linearized(lin, du, &Disturbance::default(), true).1)
}

fn gamma_of(lin: &LinearizationData, du: &GridFunction, dx: &GridFunction) -> f64 {
    let (n, m) = (lin.n, lin.m);
    let grid = lin.grid;
    let h = grid.step();
    let (mut wm, mut sm) = (vec![0.0; n * n], vec![0.0; m * n]);
    let mut x = vec![0.0; n];
    let mut total = 0.0;
    for i in 0..grid.steps() {
        let t0 = grid.node(i);
        let dui = du.at(i);
        total += gauss5(t0, t0 + h, |t| {
            let frac = (t - t0) / h;
            dx.eval_in_cell(i, frac, &mut x);
            LinearizationData::interp(&lin.w, n * n, i, frac, &mut wm);
            LinearizationData::interp(&lin.s, m * n, i, frac, &mut sm);
            let mut q = 0.0;
            for r in 0..n {
                q += x[r] * dot(&wm[r * n..(r + 1) * n], &x);
            }
            for j in 0..m {
                q += 2.0 * dui[j] * dot(&sm[j * n..(j + 1) * n], &x);
            }
            q
        });
    }
    total
}

/// `Γ(δu) = ∫ ⟨Wδx, δx⟩ + 2⟨Sδx, δu⟩ dt`.
pub fn gamma(lin: &LinearizationData, du: &GridFunction) -> Result<f64> {
    let dx = variational_state(lin, du)?;
    Ok(gamma_of(lin, du, &dx))
}

fn check_control(lin: &LinearizationData, u: &GridFunction) -> Result<()> {
    lin.check(u, lin.m)?;
    if u.interpolation() != Interpolation::PiecewiseConstant {
        return Err(Error::Precondition("control variations must be piecewise constant"));
    }
    Ok(())
}

/// `Λ(u, z) = σ̂ + S(x[u,z] − x̂) + Bᵀ(p[u,z] − p̂) − ρ` at the nodes.
pub fn lambda_map(lin: &LinearizationData, u: &GridFunction, z: &Disturbance) -> Result<GridFunction> {
    check_control(lin, u)?;
    for (f, dim) in [(&z.xi, lin.n), (&z.pi, lin.n), (&z.rho, lin.m)] {
        if let Some(g) = f {
            lin.check(g, dim)?;
        }
    }
    let du = u.sub(&lin.control)?;
    let (dx, dp) = solve_linearized(lin, &du, z, true);
    let (n, m) = (lin.n, lin.m);
    let grid = lin.grid;
    let mut out = lin.sigma.clone();
    let mut rho = vec![0.0; m];
    for i in 0..=grid.steps() {
        let (cell, side) = if i < grid.steps() { (i, 0) } else { (i - 1, 1) };
        let s = lin.s_at(cell, side);
        let b = lin.b_at(cell, side);
        match &z.rho {
            Some(r) if r.interpolation() == Interpolation::PiecewiseLinear => rho.copy_from_slice(r.at(i)),
            Some(r) => rho.copy_from_slice(r.at(cell)),
            None => rho.iter_mut().for_each(|v| *v = 0.0),
        }
        let (x, p) = (dx.at(i), dp.at(i));
        let o = out.at_mut(i);
        for j in 0..m {
            let mut acc = dot(&s[j * n..(j + 1) * n], x) - rho[j];
            for k in 0..n {
                acc += b[k * m + j] * p[k];
            }
            o[j] += acc;
        }
    }
    Ok(out)
}

/// `∫⟨Λ′δu, δu⟩`, `Γ(δu)` and `|lhs − rhs| / max(1, |rhs|)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DualityCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub gap: f64,
}

pub fn duality_check(lin: &LinearizationData, du: &GridFunction) -> Result<DualityCheck> {
    check_control(lin, du)?;
    let (dx, dp) = solve_linearized(lin, du, &Disturbance::default(), true);
    let (n, m) = (lin.n, lin.m);
    let grid = lin.grid;
    let h = grid.step();
    let (mut sm, mut bm) = (vec![0.0; m * n], vec![0.0; n * m]);
    let (mut x, mut p) = (vec![0.0; n], vec![0.0; n]);
    let mut lhs = 0.0;
    for i in 0..grid.steps() {
        let t0 = grid.node(i);
        let dui = du.at(i);
        if dui.iter().all(|v| *v == 0.0) {
            continue;
        }
        lhs += gauss5(t0, t0 + h, |t| {
            let frac = (t - t0) / h;
            dx.eval_in_cell(i, frac, &mut x);
            dp.eval_in_cell(i, frac, &mut p);
            LinearizationData::interp(&lin.s, m * n, i, frac, &mut sm);
            LinearizationData::interp(&lin.b, n * m, i, frac, &mut bm);
            let mut q = 0.0;
            for j in 0..m {
                let mut lj = dot(&sm[j * n..(j + 1) * n], &x);
                for k in 0..n {
                    lj += bm[k * m + j] * p[k];
                }
                q += lj * dui[j];
            }
            q
        });
    }
    let rhs = gamma_of(lin, du, &dx);
    Ok(DualityCheck {
        lhs,
        rhs,
        gap: fabs(lhs - rhs) / fabs(rhs).max(1.0),
    })
}

/// Which coercivity condition the probe samples.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProbeMode {
    /// `∫|⟨σ, δu⟩| + Γ(δu) ≥ c₀‖δu‖₁²` for `δu ∈ U − U`.
    AbsoluteFirstOrder,
    /// `∫⟨σ, δu⟩ + Γ(δu) ≥ c₀‖δu‖₁²` with `δu = u' − û` and `σ` projected onto
    /// `−N_U(û)`. Box control sets only.
    NormalCone,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProbeConfig {
    pub c0: f64,
    pub alpha0: f64,
    pub gamma0: f64,
    pub samples: usize,
    pub seed: u64,
    pub mode: ProbeMode,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            c0: 0.5,
            alpha0: 0.05,
            gamma0: 0.1,
            samples: 1000,
            seed: 0,
            mode: ProbeMode::AbsoluteFirstOrder,
        }
    }
}

/// One evaluated variation.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbeSample {
    pub index: usize,
    /// `"random"` or `"localized"`.
    pub family: &'static str,
    /// Size of the `σ` perturbation, 0 for `σ̂` itself.
    pub perturbation: f64,
    pub norm: f64,
    pub first_order: f64,
    pub gamma: f64,
    pub margin: f64,
    /// Cell values of `δu`, row-major `N × m`.
    pub delta_u: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CoercivityReport {
    pub min_margin: f64,
    pub argmin: Option<ProbeSample>,
    /// Smallest `(first_order + Γ) / ‖δu‖₁²` seen, an empirical upper bound on `c₀`.
    pub min_ratio: f64,
    pub samples: usize,
    pub evaluations: usize,
    pub seed: u64,
    pub c0: f64,
    pub alpha0: f64,
    pub gamma0: f64,
    pub warning: Option<&'static str>,
}

/// Low-order trigonometric bump with `W^{1,∞}` norm at most 1 (bound
/// `Σ (|c_q| + |d_q|)(1 + qπ/T)` rescaled to one).
#[derive(Clone, Debug)]
struct Bump {
    coef: Vec<(f64, f64)>,
    horizon: f64,
}

impl Bump {
    fn random(rng: &mut ChaCha8Rng, horizon: f64) -> Self {
        let mut coef: Vec<(f64, f64)> = (0..3)
            .map(|_| (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let bound: f64 = coef
            .iter()
            .enumerate()
            .map(|(q, (c, d))| (fabs(*c) + fabs(*d)) * (1.0 + (q + 1) as f64 * core::f64::consts::PI / horizon))
            .sum();
        coef.iter_mut().for_each(|(c, d)| {
            *c /= bound;
            *d /= bound;
        });
        Self { coef, horizon }
    }

    fn eval(&self, t: f64) -> f64 {
        self.coef
            .iter()
            .enumerate()
            .map(|(q, (c, d))| {
                let w = (q + 1) as f64 * core::f64::consts::PI / self.horizon;
                c * sin(w * t) + d * cos(w * t)
            })
            .sum()
    }
}

fn random_point(rng: &mut ChaCha8Rng, set: &Polytope) -> Vec<f64> {
    let verts = set.vertices();
    if rng.gen_bool(0.5) {
        return verts[rng.gen_range(0..verts.len())].clone();
    }
    let weights: Vec<f64> = verts.iter().map(|_| rng.gen_range(0.0..1.0) + 1e-12).collect();
    let total: f64 = weights.iter().sum();
    let mut out = vec![0.0; set.dim()];
    for (v, wgt) in verts.iter().zip(&weights) {
        for j in 0..out.len() {
            out[j] += v[j] * wgt / total;
        }
    }
    out
}

fn random_control(rng: &mut ChaCha8Rng, grid: Grid, set: &Polytope) -> Vec<f64> {
    let m = set.dim();
    let big_n = grid.steps();
    let pieces = rng.gen_range(1..=6usize).min(big_n);
    let mut cuts: Vec<usize> = (0..pieces - 1).map(|_| rng.gen_range(1..big_n.max(2))).collect();
    cuts.sort_unstable();
    cuts.push(big_n);
    let mut out = vec![0.0; big_n * m];
    let mut start = 0;
    for &end in &cuts {
        let v = random_point(rng, set);
        for i in start..end.max(start) {
            out[i * m..(i + 1) * m].copy_from_slice(&v);
        }
        start = end.max(start);
    }
    out
}

/// Zeros of `⟨σ̂, e⟩` over all edge directions.
fn sigma_zeros(lin: &LinearizationData, set: &Polytope) -> Vec<f64> {
    let grid = lin.grid;
    let mut zeros = Vec::new();
    for dir in set.edge_directions() {
        let signal: Vec<f64> = (0..=grid.steps()).map(|i| dot(lin.sigma.at(i), &dir)).collect();
        zeros.extend(analyze_signal(grid, &signal, &SwitchingConfig::default()).zeros);
    }
    zeros
}

/// `∫_cell |⟨σ, δu_i⟩|` (or the signed integral) with `σ̂` linear on the
/// cell plus an optional smooth perturbation.
fn first_order_cell(
    lin: &LinearizationData,
    i: usize,
    dui: &[f64],
    bump: Option<(&[Bump], f64)>,
    project: Option<&dyn Fn(f64, &mut [f64])>,
    absolute: bool,
) -> f64 {
    let grid = lin.grid;
    let h = grid.step();
    let (t0, t1) = (grid.node(i), grid.node(i + 1));
    if bump.is_none() && project.is_none() {
        let (a, b) = (dot(lin.sigma.at(i), dui), dot(lin.sigma.at(i + 1), dui));
        return if absolute {
            abs_linear_integral(a, b, h)
        } else {
            0.5 * h * (a + b)
        };
    }
    let m = lin.m;
    let mut sig = vec![0.0; m];
    let mut g = |t: f64| {
        lin.sigma.eval_in_cell(i, ((t - t0) / h).clamp(0.0, 1.0), &mut sig);
        if let Some((bumps, gam)) = bump {
            for j in 0..m {
                sig[j] += gam * bumps[j].eval(t);
            }
        }
        if let Some(proj) = project {
            proj(t, &mut sig);
        }
        dot(&sig, dui)
    };
    if !absolute {
        return gauss5(t0, t1, &mut g);
    }
    let (ga, gb) = (g(t0), g(t1));
    if ga * gb < 0.0 {
        let (mut lo, mut hi) = (t0, t1);
        for _ in 0..50 {
            let mid = 0.5 * (lo + hi);
            if g(mid) * ga > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let r = 0.5 * (lo + hi);
        gauss5(t0, r, |t| fabs(g(t))) + gauss5(r, t1, |t| fabs(g(t)))
    } else {
        gauss5(t0, t1, |t| fabs(g(t)))
    }
}

/// Samples control variations and reports the smallest coercivity margin.
///
/// Even-indexed samples are differences of random piecewise-constant feasible
/// controls; odd-indexed samples are blocks of vertex differences placed
/// around a zero of `σ̂`. Each variation is scaled so that `‖δu‖₁ ≤ α₀` and
/// evaluated with `σ̂` and with one random `σ` in the `W^{1,∞}` ball of
/// radius `γ₀`.
pub fn coercivity_probe(lin: &LinearizationData, set: &Polytope, config: &ProbeConfig) -> Result<CoercivityReport> {
    if !(config.c0 > 0.0) {
        return Err(Error::InvalidParameter {
            name: "c0",
            constraint: "c0 > 0",
            value: config.c0,
        });
    }
    if !(config.alpha0 > 0.0) {
        return Err(Error::InvalidParameter {
            name: "alpha0",
            constraint: "alpha0 > 0",
            value: config.alpha0,
        });
    }
    if !(config.gamma0 >= 0.0) {
        return Err(Error::InvalidParameter {
            name: "gamma0",
            constraint: "gamma0 >= 0",
            value: config.gamma0,
        });
    }
    if set.dim() != lin.m {
        return Err(Error::Dimension {
            what: "control set",
            expected: lin.m,
            found: set.dim(),
        });
    }
    let bounds = match (config.mode, set.kind()) {
        (ProbeMode::NormalCone, PolytopeKind::Box { lower, upper }) => Some((lower.clone(), upper.clone())),
        (ProbeMode::NormalCone, PolytopeKind::General) => {
            return Err(Error::Precondition("the normal-cone probe needs a box control set"))
        }
        _ => None,
    };
    let grid = lin.grid;
    let m = lin.m;
    let big_n = grid.steps();
    let horizon = grid.horizon();
    let zeros = sigma_zeros(lin, set);
    let mut report = CoercivityReport {
        min_margin: f64::INFINITY,
        argmin: None,
        min_ratio: f64::INFINITY,
        samples: config.samples,
        evaluations: 0,
        seed: config.seed,
        c0: config.c0,
        alpha0: config.alpha0,
        gamma0: config.gamma0,
        warning: None,
    };
    if config.samples == 0 {
        report.warning = Some("no samples drawn; the check is vacuous");
        return Ok(report);
    }
    let verts = set.vertices();
    for index in 0..config.samples {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(index as u64);
        let localized = index % 2 == 1 && !zeros.is_empty();
        let base: Vec<f64> = match bounds {
            Some(_) => lin.control.values().to_vec(),
            None => Vec::new(),
        };
        let mut du = if localized {
            let s = zeros[rng.gen_range(0..zeros.len())];
            let (v, w) = loop {
                let a = rng.gen_range(0..verts.len());
                let b = rng.gen_range(0..verts.len());
                if a != b || verts.len() == 1 {
                    break (a, b);
                }
            };
            let diff: Vec<f64> = verts[v].iter().zip(&verts[w]).map(|(a, b)| a - b).collect();
            let width = config.alpha0 / norm1(&diff).max(1e-300);
            let left = rng.gen_range(0.0..1.0) * width;
            let right = rng.gen_range(0.0..1.0) * width;
            let mut out = vec![0.0; big_n * m];
            for i in 0..big_n {
                let t = grid.node(i) + 0.5 * grid.step();
                if t >= s - left && t < s + right {
                    match bounds {
                        // move from û toward vertex v
                        Some(_) => {
                            for j in 0..m {
                                out[i * m + j] = verts[v][j] - base[i * m + j];
                            }
                        }
                        None => out[i * m..(i + 1) * m].copy_from_slice(&diff),
                    }
                }
            }
            out
        } else {
            let u1 = random_control(&mut rng, grid, set);
            let u2 = if bounds.is_some() {
                base.clone()
            } else {
                random_control(&mut rng, grid, set)
            };
            u1.iter().zip(&u2).map(|(a, b)| a - b).collect()
        };
        let norm = grid.step() * du.chunks(m).map(norm1).sum::<f64>();
        if norm == 0.0 {
            continue;
        }
        let target = config.alpha0 * rng.gen_range(0.05..=1.0);
        let scale = if norm > target { target / norm } else { 1.0 };
        du.iter_mut().for_each(|v| *v *= scale);
        let norm = norm * scale;
        let du_fn = GridFunction::constant(grid, m, du.clone())?;
        let g = gamma(lin, &du_fn)?;
        let bumps: Vec<Bump> = (0..m).map(|_| Bump::random(&mut rng, horizon)).collect();
        let gam = config.gamma0 * rng.gen_range(0.0..=1.0);
        let control = &lin.control;
        for perturbed in [false, true] {
            if perturbed && config.gamma0 == 0.0 {
                continue;
            }
            let mut first = 0.0;
            for i in 0..big_n {
                let dui = &du[i * m..(i + 1) * m];
                if dui.iter().all(|v| *v == 0.0) {
                    continue;
                }
                let bump = if perturbed { Some((bumps.as_slice(), gam)) } else { None };
                first += match &bounds {
                    Some((lower, upper)) => {
                        let ui = control.at(i);
                        let proj = |_t: f64, sig: &mut [f64]| {
                            for j in 0..sig.len() {
                                // σ ∈ −N_U(u): σ_j ≥ 0 at the lower bound, ≤ 0 at the upper, 0 inside
                                let at_lo = fabs(ui[j] - lower[j]) <= 1e-12;
                                let at_hi = fabs(ui[j] - upper[j]) <= 1e-12;
                                sig[j] = match (at_lo, at_hi) {
                                    (true, true) => sig[j],
                                    (true, false) => sig[j].max(0.0),
                                    (false, true) => sig[j].min(0.0),
                                    (false, false) => 0.0,
                                };
                            }
                        };
                        first_order_cell(lin, i, dui, bump, Some(&proj), false)
                    }
                    None => first_order_cell(lin, i, dui, bump, None, true),
                };
            }
            let margin = first + g - config.c0 * norm * norm;
            report.evaluations += 1;
            report.min_ratio = report.min_ratio.min((first + g) / (norm * norm));
            if margin < report.min_margin {
                report.min_margin = margin;
                report.argmin = Some(ProbeSample {
                    index,
                    family: if localized { "localized" } else { "random" },
                    perturbation: if perturbed { gam } else { 0.0 },
                    norm,
                    first_order: first,
                    gamma: g,
                    margin,
                    delta_u: du.clone(),
                });
            }
        }
    }
    if report.evaluations == 0 {
        report.warning = Some("every sampled variation was zero; the check is vacuous");
    }
    Ok(report)
}

/// `‖δu‖₁` helper for callers building variations by hand.
pub fn variation_norm(du: &GridFunction) -> Result<f64> {
    du.norm(NormKind::L1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Example1;

    fn lin(n: usize) -> (Example1, LinearizationData) {
        let p = Example1::new(0.5, 2.0).unwrap();
        let o = p.oracle();
        let g = Grid::new(n, 1.0).unwrap();
        let x = GridFunction::from_fn(g, 1, Interpolation::PiecewiseLinear, |t, v| v[0] = o.x(t));
        let lam = GridFunction::from_fn(g, 1, Interpolation::PiecewiseLinear, |t, v| v[0] = o.p(t));
        let u = GridFunction::from_fn(g, 1, Interpolation::PiecewiseConstant, |t, v| v[0] = o.u(t));
        let tr = ExtremalTriple::new(x, lam, u).unwrap();
        let l = linearize(&p, &tr).unwrap();
        (p, l)
    }

    #[test]
    fn example1_coefficients() {
        let (_, l) = lin(16);
        for i in 0..16 {
            for side in 0..2 {
                assert_eq!(l.a_at(i, side), &[0.0]);
                assert_eq!(l.b_at(i, side), &[1.0]);
                assert_eq!(l.w_at(i, side), &[-0.5]);
                assert_eq!(l.s_at(i, side), &[0.0]);
            }
        }
        assert_eq!(l.symmetry_defect, 0.0);
    }

    #[test]
    fn unit_variation_state_and_gamma() {
        let (_, l) = lin(64);
        let du = GridFunction::uniform(l.grid(), Interpolation::PiecewiseConstant, &[1.0]);
        let dx = variational_state(&l, &du).unwrap();
        for i in 0..=64 {
            assert!((dx.at(i)[0] - i as f64 / 64.0).abs() < 1e-14);
        }
        assert!((gamma(&l, &du).unwrap() + 0.5 / 3.0).abs() < 1e-13);
    }

    #[test]
    fn zero_variation() {
        let (_, l) = lin(8);
        let du = GridFunction::zeros(l.grid(), 1, Interpolation::PiecewiseConstant);
        assert_eq!(gamma(&l, &du).unwrap(), 0.0);
        let d = duality_check(&l, &du).unwrap();
        assert_eq!((d.lhs, d.rhs), (0.0, 0.0));
    }

    #[test]
    fn lambda_at_reference_is_sigma() {
        let (_, l) = lin(64);
        let u = l.reference_control().clone();
        let lam = lambda_map(&l, &u, &Disturbance::default()).unwrap();
        assert_eq!(lam.values(), l.sigma().values());
    }

    #[test]
    fn empty_probe_warns() {
        let (p, l) = lin(32);
        let cfg = ProbeConfig {
            samples: 0,
            ..ProbeConfig::default()
        };
        let r = coercivity_probe(&l, p.control_set(), &cfg).unwrap();
        assert!(r.warning.is_some() && r.argmin.is_none());
    }
}
