//! Euler steps of the discrete minimum principle and a fourth-order
//! reference integrator.

mod grid;

use alloc::vec;
use alloc::vec::Vec;

pub use grid::*;

use crate::math::{ceil, norm2};
use crate::model::{ControlAffineProblem, ProblemExt};
use crate::solution::ContinuousTriple;
use crate::{Error, Result};

/// Minimum reference steps per unit time.
pub const REFERENCE_MIN_STEPS: usize = 4096;

fn guard(limit: f64, node: usize, time: f64, v: &[f64]) -> Result<()> {
    let norm = norm2(v);
    if norm > limit || !norm.is_finite() {
        return Err(Error::Divergence {
            node,
            time,
            norm,
            limit,
        });
    }
    Ok(())
}

fn check_control<P: ControlAffineProblem + ?Sized>(problem: &P, control: &GridFunction) -> Result<()> {
    if control.dim() != problem.control_dim() {
        return Err(Error::Dimension {
            what: "control",
            expected: problem.control_dim(),
            found: control.dim(),
        });
    }
    if control.interpolation() != Interpolation::PiecewiseConstant {
        return Err(Error::Precondition("control must be piecewise constant"));
    }
    Ok(())
}

/// `x_{i+1} = x_i + h f(t_i, x_i, u_i)`, `x_0 = x⁰`.
pub fn euler_forward<P: ControlAffineProblem + ?Sized>(problem: &P, control: &GridFunction) -> Result<GridFunction> {
    check_control(problem, control)?;
    let grid = control.grid();
    let n = problem.state_dim();
    let h = grid.step();
    let limit = 10.0 * problem.trajectory_bound();
    let mut x = GridFunction::zeros(grid, n, Interpolation::PiecewiseLinear);
    x.at_mut(0).copy_from_slice(problem.initial_state());
    let mut f = vec![0.0; n];
    for i in 0..grid.steps() {
        let t = grid.node(i);
        problem.dynamics(t, x.at(i), control.at(i), &mut f);
        let vals = x.values_mut();
        for k in 0..n {
            vals[(i + 1) * n + k] = vals[i * n + k] + h * f[k];
        }
        guard(limit, i + 1, grid.node(i + 1), x.at(i + 1))?;
    }
    Ok(x)
}

/// `p_i = p_{i+1} + h ∇ₓH(t_i, x_i, p_{i+1}, u_i)`, `p_N = 0`.
pub fn euler_backward_adjoint<P: ControlAffineProblem + ?Sized>(
    problem: &P,
    state: &GridFunction,
    control: &GridFunction,
) -> Result<GridFunction> {
    check_control(problem, control)?;
    let grid = control.grid();
    if state.grid() != grid {
        return Err(Error::GridMismatch);
    }
    let n = problem.state_dim();
    let h = grid.step();
    let limit = 10.0 * problem.trajectory_bound();
    let mut p = GridFunction::zeros(grid, n, Interpolation::PiecewiseLinear);
    let mut g = vec![0.0; n];
    for i in (0..grid.steps()).rev() {
        let t = grid.node(i);
        problem.hamiltonian_state_gradient(t, state.at(i), p.at(i + 1), control.at(i), &mut g);
        let vals = p.values_mut();
        for k in 0..n {
            vals[i * n + k] = vals[(i + 1) * n + k] + h * g[k];
        }
        guard(limit, i, t, p.at(i))?;
    }
    Ok(p)
}

/// Discrete switching function `σ_i = B(t_i,x_i)ᵀ p_{i+1} + s(t_i,x_i)` on cells.
pub fn discrete_switching<P: ControlAffineProblem + ?Sized>(
    problem: &P,
    state: &GridFunction,
    costate: &GridFunction,
) -> GridFunction {
    let grid = state.grid();
    let mut out = GridFunction::zeros(grid, problem.control_dim(), Interpolation::PiecewiseConstant);
    for i in 0..grid.steps() {
        problem.switching_function(grid.node(i), state.at(i), costate.at(i + 1), out.at_mut(i));
    }
    out
}

/// A control that is constant between known breakpoints on `[start, end]`.
#[derive(Clone, Debug, PartialEq)]
pub struct PiecewiseControl {
    pub start: f64,
    pub end: f64,
    /// Interior breakpoints, strictly increasing.
    pub breakpoints: Vec<f64>,
    /// One value per arc, `breakpoints.len() + 1` entries.
    pub values: Vec<Vec<f64>>,
}

impl PiecewiseControl {
    pub fn constant(start: f64, end: f64, value: Vec<f64>) -> Self {
        Self {
            start,
            end,
            breakpoints: Vec::new(),
            values: vec![value],
        }
    }

    fn validate(&self, m: usize) -> Result<()> {
        if self.values.len() != self.breakpoints.len() + 1 {
            return Err(Error::Dimension {
                what: "arc values",
                expected: self.breakpoints.len() + 1,
                found: self.values.len(),
            });
        }
        if let Some(v) = self.values.iter().find(|v| v.len() != m) {
            return Err(Error::Dimension {
                what: "control",
                expected: m,
                found: v.len(),
            });
        }
        let mut prev = self.start;
        for &b in self.breakpoints.iter().chain(core::iter::once(&self.end)) {
            if !(b > prev) {
                return Err(Error::Precondition(
                    "breakpoints must be strictly increasing inside (start, end)",
                ));
            }
            prev = b;
        }
        Ok(())
    }

    fn arc_bounds(&self, j: usize) -> (f64, f64) {
        let lo = if j == 0 { self.start } else { self.breakpoints[j - 1] };
        let hi = if j == self.breakpoints.len() {
            self.end
        } else {
            self.breakpoints[j]
        };
        (lo, hi)
    }
}

#[derive(Clone, Debug)]
struct Arc {
    t0: f64,
    step: f64,
    steps: usize,
    u: Vec<f64>,
    x: Vec<f64>,
    dx: Vec<f64>,
    p: Vec<f64>,
    dp: Vec<f64>,
}

/// Dense `(x, p, u)` from [`reference_solve`], cubic Hermite between steps.
#[derive(Clone, Debug)]
pub struct DenseSolution {
    n: usize,
    m: usize,
    start: f64,
    end: f64,
    breakpoints: Vec<f64>,
    arcs: Vec<Arc>,
}

fn hermite(a: &Arc, n: usize, vals: &[f64], ders: &[f64], t: f64, out: &mut [f64]) {
    let r = ((t - a.t0) / a.step).clamp(0.0, a.steps as f64);
    let i = (r as usize).min(a.steps - 1);
    let s = r - i as f64;
    let h = a.step;
    let (h00, h10, h01, h11) = (
        (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s),
        s * (1.0 - s) * (1.0 - s),
        s * s * (3.0 - 2.0 * s),
        s * s * (s - 1.0),
    );
    for k in 0..n {
        out[k] = h00 * vals[i * n + k]
            + h * h10 * ders[i * n + k]
            + h01 * vals[(i + 1) * n + k]
            + h * h11 * ders[(i + 1) * n + k];
    }
}

fn hermite_rate(a: &Arc, n: usize, vals: &[f64], ders: &[f64], t: f64, out: &mut [f64]) {
    let r = ((t - a.t0) / a.step).clamp(0.0, a.steps as f64);
    let i = (r as usize).min(a.steps - 1);
    let s = r - i as f64;
    let h = a.step;
    let (d00, d10, d01, d11) = (
        6.0 * s * s - 6.0 * s,
        3.0 * s * s - 4.0 * s + 1.0,
        -6.0 * s * s + 6.0 * s,
        3.0 * s * s - 2.0 * s,
    );
    for k in 0..n {
        out[k] = (d00 * vals[i * n + k] + d01 * vals[(i + 1) * n + k]) / h
            + d10 * ders[i * n + k]
            + d11 * ders[(i + 1) * n + k];
    }
}

impl DenseSolution {
    fn arc_at(&self, t: f64) -> &Arc {
        let j = self.breakpoints.partition_point(|b| *b <= t);
        &self.arcs[j.min(self.arcs.len() - 1)]
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn end(&self) -> f64 {
        self.end
    }

    pub fn final_state(&self) -> &[f64] {
        let a = self.arcs.last().expect("at least one arc");
        &a.x[a.steps * self.n..]
    }

    pub fn initial_costate(&self) -> &[f64] {
        &self.arcs[0].p[..self.n]
    }

    /// Total number of RK4 steps.
    pub fn steps(&self) -> usize {
        self.arcs.iter().map(|a| a.steps).sum()
    }
}

impl ContinuousTriple for DenseSolution {
    fn horizon(&self) -> f64 {
        self.end
    }
    fn state_dim(&self) -> usize {
        self.n
    }
    fn control_dim(&self) -> usize {
        self.m
    }
    fn state(&self, t: f64, out: &mut [f64]) {
        let a = self.arc_at(t);
        hermite(a, self.n, &a.x, &a.dx, t, out)
    }
    fn state_rate(&self, t: f64, out: &mut [f64]) {
        let a = self.arc_at(t);
        hermite_rate(a, self.n, &a.x, &a.dx, t, out)
    }
    fn costate(&self, t: f64, out: &mut [f64]) {
        let a = self.arc_at(t);
        hermite(a, self.n, &a.p, &a.dp, t, out)
    }
    fn costate_rate(&self, t: f64, out: &mut [f64]) {
        let a = self.arc_at(t);
        hermite_rate(a, self.n, &a.p, &a.dp, t, out)
    }
    fn control(&self, t: f64, out: &mut [f64]) {
        out.copy_from_slice(&self.arc_at(t).u)
    }
    fn breakpoints(&self) -> Vec<f64> {
        self.breakpoints.clone()
    }
}

fn rk4<F: FnMut(f64, &[f64], &mut [f64])>(t: f64, y: &[f64], h: f64, mut f: F, out: &mut [f64]) {
    let n = y.len();
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    f(t, y, &mut k1);
    for k in 0..n {
        tmp[k] = y[k] + 0.5 * h * k1[k];
    }
    f(t + 0.5 * h, &tmp, &mut k2);
    for k in 0..n {
        tmp[k] = y[k] + 0.5 * h * k2[k];
    }
    f(t + 0.5 * h, &tmp, &mut k3);
    for k in 0..n {
        tmp[k] = y[k] + h * k3[k];
    }
    f(t + h, &tmp, &mut k4);
    for k in 0..n {
        out[k] = y[k] + h / 6.0 * (k1[k] + 2.0 * k2[k] + 2.0 * k3[k] + k4[k]);
    }
}

/// Classical RK4 for the state forward and the costate backward under a
/// piecewise-constant control, with steps split at every breakpoint.
/// `steps_per_unit` is raised to [`REFERENCE_MIN_STEPS`] when smaller.
pub fn reference_solve<P: ControlAffineProblem + ?Sized>(
    problem: &P,
    control: &PiecewiseControl,
    steps_per_unit: usize,
) -> Result<DenseSolution> {
    let n = problem.state_dim();
    reference_solve_from(problem, problem.initial_state(), &vec![0.0; n], control, steps_per_unit)
}

/// As [`reference_solve`] on `[control.start, control.end]` with initial state
/// `x_start` and terminal costate `p_end`.
pub fn reference_solve_from<P: ControlAffineProblem + ?Sized>(
    problem: &P,
    x_start: &[f64],
    p_end: &[f64],
    control: &PiecewiseControl,
    steps_per_unit: usize,
) -> Result<DenseSolution> {
    let (n, m) = (problem.state_dim(), problem.control_dim());
    control.validate(m)?;
    if x_start.len() != n || p_end.len() != n {
        return Err(Error::Dimension {
            what: "boundary values",
            expected: n,
            found: x_start.len().min(p_end.len()),
        });
    }
    let spu = steps_per_unit.max(REFERENCE_MIN_STEPS) as f64;
    let limit = 10.0 * problem.trajectory_bound();
    let mut arcs = Vec::with_capacity(control.values.len());
    let mut x = x_start.to_vec();
    let mut node = 0usize;
    for (j, u) in control.values.iter().enumerate() {
        let (lo, hi) = control.arc_bounds(j);
        let steps = (ceil((hi - lo) * spu) as usize).max(2);
        let step = (hi - lo) / steps as f64;
        let mut xs = vec![0.0; (steps + 1) * n];
        let mut dxs = vec![0.0; (steps + 1) * n];
        xs[..n].copy_from_slice(&x);
        for i in 0..steps {
            let t = lo + i as f64 * step;
            let (head, tail) = xs.split_at_mut((i + 1) * n);
            rk4(
                t,
                &head[i * n..],
                step,
                |s, y, o| problem.dynamics(s, y, u, o),
                &mut tail[..n],
            );
            guard(limit, node + i + 1, t + step, &tail[..n])?;
        }
        for i in 0..=steps {
            let t = if i == steps { hi } else { lo + i as f64 * step };
            problem.dynamics(t, &xs[i * n..(i + 1) * n], u, &mut dxs[i * n..(i + 1) * n]);
        }
        x.copy_from_slice(&xs[steps * n..]);
        node += steps;
        arcs.push(Arc {
            t0: lo,
            step,
            steps,
            u: u.clone(),
            x: xs,
            dx: dxs,
            p: Vec::new(),
            dp: Vec::new(),
        });
    }
    let mut p = p_end.to_vec();
    let mut xt = vec![0.0; n];
    for arc in arcs.iter_mut().rev() {
        let steps = arc.steps;
        let mut ps = vec![0.0; (steps + 1) * n];
        let mut dps = vec![0.0; (steps + 1) * n];
        ps[steps * n..].copy_from_slice(&p);
        let frozen = arc.clone();
        // integrate in reversed time r = end - t: dp/dr = ∇ₓH
        let end = arc.t0 + steps as f64 * arc.step;
        for i in (0..steps).rev() {
            let t = arc.t0 + (i + 1) as f64 * arc.step;
            let (head, tail) = ps.split_at_mut((i + 1) * n);
            rk4(
                end - t,
                &tail[..n],
                arc.step,
                |r, y, o| {
                    let s = end - r;
                    hermite(&frozen, n, &frozen.x, &frozen.dx, s, &mut xt);
                    problem.hamiltonian_state_gradient(s, &xt, y, &frozen.u, o);
                },
                &mut head[i * n..],
            );
            guard(limit, i, t - arc.step, &head[i * n..])?;
        }
        for i in 0..=steps {
            let t = arc.t0 + i as f64 * arc.step;
            let g = &mut dps[i * n..(i + 1) * n];
            problem.hamiltonian_state_gradient(t, &arc.x[i * n..(i + 1) * n], &ps[i * n..(i + 1) * n], &arc.u, g);
            g.iter_mut().for_each(|v| *v = -*v);
        }
        p.copy_from_slice(&ps[..n]);
        arc.p = ps;
        arc.dp = dps;
    }
    Ok(DenseSolution {
        n,
        m,
        start: control.start,
        end: control.end,
        breakpoints: control.breakpoints.clone(),
        arcs,
    })
}

/// RK4 between grid nodes for `y' = rhs(i, t, y)` with `substeps` steps per
/// cell; `i` is the cell being integrated, so right-continuous data can be
/// evaluated one-sidedly. Backward runs start from `y0` at `T`.
pub fn linear_rk4_nodes<F: FnMut(usize, f64, &[f64], &mut [f64])>(
    grid: Grid,
    dim: usize,
    y0: &[f64],
    backward: bool,
    substeps: usize,
    mut rhs: F,
) -> GridFunction {
    let mut out = GridFunction::zeros(grid, dim, Interpolation::PiecewiseLinear);
    let big_n = grid.steps();
    let h = grid.step() / substeps.max(1) as f64;
    let mut y = y0.to_vec();
    let mut next = vec![0.0; dim];
    if backward {
        out.at_mut(big_n).copy_from_slice(&y);
        for i in (0..big_n).rev() {
            let t_hi = grid.node(i + 1);
            for s in 0..substeps.max(1) {
                // reversed time: z(r) = y(t_hi - r), z' = -rhs
                let t = t_hi - s as f64 * h;
                rk4(
                    0.0,
                    &y,
                    h,
                    |r, z, o| {
                        rhs(i, t - r, z, o);
                        o.iter_mut().for_each(|v| *v = -*v);
                    },
                    &mut next,
                );
                y.copy_from_slice(&next);
            }
            out.at_mut(i).copy_from_slice(&y);
        }
    } else {
        out.at_mut(0).copy_from_slice(&y);
        for i in 0..big_n {
            let t_lo = grid.node(i);
            for s in 0..substeps.max(1) {
                let t = t_lo + s as f64 * h;
                rk4(0.0, &y, h, |r, z, o| rhs(i, t + r, z, o), &mut next);
                y.copy_from_slice(&next);
            }
            out.at_mut(i + 1).copy_from_slice(&y);
        }
    }
    out
}
