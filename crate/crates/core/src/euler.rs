//! The Euler-discretized problem: forward-backward sweep for the discrete
//! minimum principle, the continuous embedding, residuals, and convergence
//! studies against an oracle.

use alloc::vec;
use alloc::vec::Vec;

use crate::integrate::{discrete_switching, euler_backward_adjoint, euler_forward, Grid, GridFunction, Interpolation};
use crate::math::{dot, exp, fabs, gauss5, linear_fit, log, norm1};
use crate::model::{check_dims, hamiltonian_minimizer, ControlAffineProblem, ExtremalTriple, ProblemExt};
use crate::solution::{distance_y, AsDyn, ContinuousTriple, YDistance};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepConfig {
    pub damping: f64,
    /// Stop when `h Σ_i ‖u_i^{new} − u_i‖₁` falls below this.
    pub tol_control: f64,
    pub max_iterations: usize,
    /// Nodes whose edge margins all exceed this are snapped to the minimizing vertex.
    pub tol_round: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            damping: 0.5,
            tol_control: 1e-12,
            max_iterations: 2000,
            tol_round: 1e-10,
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::InvalidParameter {
                name: "damping",
                constraint: "0 < damping <= 1",
                value: self.damping,
            });
        }
        if !(self.tol_control > 0.0) {
            return Err(Error::InvalidParameter {
                name: "tol_control",
                constraint: "tol_control > 0",
                value: self.tol_control,
            });
        }
        if !(self.tol_round > 0.0) {
            return Err(Error::InvalidParameter {
                name: "tol_round",
                constraint: "tol_round > 0",
                value: self.tol_round,
            });
        }
        Ok(())
    }
}

/// Output of [`sweep_solve`].
#[derive(Clone, Debug, PartialEq)]
pub struct SweepResult {
    pub triple: ExtremalTriple,
    pub converged: bool,
    pub iterations: usize,
    pub final_change: f64,
    /// `max_i dist(−σ_i, N_U(u_i))` with the discrete `σ_i`.
    pub stationarity: f64,
    /// Nodes left unrounded because some edge margin was within `tol_round`.
    pub unrounded: Vec<usize>,
}

fn control_change(h: f64, a: &GridFunction, b: &GridFunction) -> f64 {
    h * a.values().iter().zip(b.values()).map(|(x, y)| fabs(x - y)).sum::<f64>()
}

/// Snaps confidently decided nodes to their minimizing vertex; returns the
/// nodes left alone and whether anything changed.
fn round_controls<P: ControlAffineProblem + ?Sized>(
    problem: &P,
    sigma: &GridFunction,
    control: &mut GridFunction,
    tol_round: f64,
) -> (Vec<usize>, bool) {
    let set = problem.control_set();
    let dirs = set.edge_directions();
    let mut skipped = Vec::new();
    let mut changed = false;
    for i in 0..control.len() {
        let s = sigma.at(i);
        if dirs.iter().all(|e| fabs(dot(s, e)) > tol_round) {
            let v = hamiltonian_minimizer(s, set);
            if control.at(i) != v {
                control.at_mut(i).copy_from_slice(v);
                changed = true;
            }
        } else {
            skipped.push(i);
        }
    }
    (skipped, changed)
}

fn stationarity<P: ControlAffineProblem + ?Sized>(problem: &P, sigma: &GridFunction, control: &GridFunction) -> f64 {
    let set = problem.control_set();
    (0..control.len()).fold(0.0, |acc: f64, i| {
        acc.max(set.normal_cone_distance(control.at(i), sigma.at(i)))
    })
}

/// Damped forward-backward sweep for
/// `x_{i+1} = x_i + h f(t_i,x_i,u_i)`, `p_i = p_{i+1} + h∇ₓH(t_i,x_i,u_i,p_{i+1})`,
/// `0 ∈ σ_i + N_U(u_i)`.
///
/// The damping is halved whenever the control change grows. After the
/// iteration stops, nodes whose edge margins all exceed `tol_round` are
/// snapped to the minimizing vertex and the state and costate are recomputed,
/// so the returned recursions hold exactly.
pub fn sweep_solve<P: ControlAffineProblem + ?Sized>(
    problem: &P,
    grid: Grid,
    config: &SweepConfig,
    initial: Option<&GridFunction>,
) -> Result<SweepResult> {
    config.validate()?;
    let set = problem.control_set();
    let m = problem.control_dim();
    let mut u = match initial {
        Some(u0) => {
            if u0.grid() != grid {
                return Err(Error::GridMismatch);
            }
            if u0.dim() != m || u0.interpolation() != Interpolation::PiecewiseConstant {
                return Err(Error::Precondition(
                    "initial control must be piecewise constant with the control dimension",
                ));
            }
            if let Some(i) = (0..u0.len()).find(|&i| !set.contains(u0.at(i))) {
                return Err(Error::Infeasible { node: i });
            }
            u0.clone()
        }
        None => GridFunction::uniform(grid, Interpolation::PiecewiseConstant, &set.centroid()),
    };
    let h = grid.step();
    let mut lambda = config.damping;
    let mut change = f64::INFINITY;
    let mut converged = false;
    let mut iterations = 0;
    let mut next = u.clone();
    while iterations < config.max_iterations {
        iterations += 1;
        let x = euler_forward(problem, &u)?;
        let p = euler_backward_adjoint(problem, &x, &u)?;
        let sigma = discrete_switching(problem, &x, &p);
        for i in 0..u.len() {
            let v = hamiltonian_minimizer(sigma.at(i), set);
            let (cur, out) = (u.at(i), next.at_mut(i));
            for j in 0..m {
                out[j] = (1.0 - lambda) * cur[j] + lambda * v[j];
            }
        }
        let new_change = control_change(h, &next, &u);
        if new_change > change {
            lambda = (0.5 * lambda).max(1e-6);
        }
        change = new_change;
        core::mem::swap(&mut u, &mut next);
        if change < config.tol_control {
            converged = true;
            break;
        }
    }

    let mut x = euler_forward(problem, &u)?;
    let mut p = euler_backward_adjoint(problem, &x, &u)?;
    let mut sigma = discrete_switching(problem, &x, &p);
    let mut unrounded = Vec::new();
    if iterations > 0 {
        for _ in 0..8 {
            let (skipped, changed) = round_controls(problem, &sigma, &mut u, config.tol_round);
            unrounded = skipped;
            if !changed {
                break;
            }
            x = euler_forward(problem, &u)?;
            p = euler_backward_adjoint(problem, &x, &u)?;
            sigma = discrete_switching(problem, &x, &p);
        }
    }
    let stat = stationarity(problem, &sigma, &u);
    Ok(SweepResult {
        triple: ExtremalTriple::new(x, p, u)?,
        converged,
        iterations,
        final_change: change,
        stationarity: stat,
        unrounded,
    })
}

/// Nodes where a recursion of the discrete minimum principle fails when
/// re-evaluated bit for bit: `(state_failures, costate_failures)`.
pub fn recursion_defects<P: ControlAffineProblem + ?Sized>(
    problem: &P,
    triple: &ExtremalTriple,
) -> (Vec<usize>, Vec<usize>) {
    let grid = triple.grid();
    let n = problem.state_dim();
    let h = grid.step();
    let mut f = vec![0.0; n];
    let mut bad_x = Vec::new();
    let mut bad_p = Vec::new();
    if triple.state.at(0) != problem.initial_state() {
        bad_x.push(0);
    }
    if triple.costate.at(grid.steps()).iter().any(|v| *v != 0.0) {
        bad_p.push(grid.steps());
    }
    for i in 0..grid.steps() {
        let t = grid.node(i);
        let u = triple.control.at(i);
        problem.dynamics(t, triple.state.at(i), u, &mut f);
        let (xi, xn) = (triple.state.at(i), triple.state.at(i + 1));
        if (0..n).any(|k| xi[k] + h * f[k] != xn[k]) {
            bad_x.push(i + 1);
        }
        problem.hamiltonian_state_gradient(t, xi, triple.costate.at(i + 1), u, &mut f);
        let (pi, pn) = (triple.costate.at(i), triple.costate.at(i + 1));
        if (0..n).any(|k| pn[k] + h * f[k] != pi[k]) {
            bad_p.push(i);
        }
    }
    (bad_x, bad_p)
}

/// Nodes with all edge margins above `tol_round` whose control is not the
/// minimizing vertex of the discrete switching function.
pub fn stationarity_violations<P: ControlAffineProblem + ?Sized>(
    problem: &P,
    triple: &ExtremalTriple,
    tol_round: f64,
) -> Vec<usize> {
    let sigma = discrete_switching(problem, &triple.state, &triple.costate);
    let set = problem.control_set();
    let dirs = set.edge_directions();
    (0..triple.control.len())
        .filter(|&i| {
            let s = sigma.at(i);
            dirs.iter().all(|e| fabs(dot(s, e)) > tol_round) && triple.control.at(i) != hamiltonian_minimizer(s, set)
        })
        .collect()
}

/// The continuous embedding of a discrete solution: `x_h`, `p_h` piecewise
/// linear through the nodes, `u_h` constant on `[t_i, t_{i+1})`.
#[derive(Clone, Debug, PartialEq)]
pub struct Embedded {
    pub triple: ExtremalTriple,
    source: u64,
}

fn fingerprint(triple: &ExtremalTriple) -> u64 {
    // FNV-1a over the bit patterns of every stored value
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    let grid = triple.grid();
    let header = [grid.steps() as u64, grid.horizon().to_bits()];
    let all = triple
        .state
        .values()
        .iter()
        .chain(triple.costate.values())
        .chain(triple.control.values())
        .map(|v| v.to_bits());
    for word in header.into_iter().chain(all) {
        for byte in word.to_le_bytes() {
            hash ^= byte as u64;
            hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    hash
}

pub fn embed(discrete: &ExtremalTriple) -> Embedded {
    Embedded {
        triple: discrete.clone(),
        source: fingerprint(discrete),
    }
}

impl ContinuousTriple for Embedded {
    fn horizon(&self) -> f64 {
        self.triple.horizon()
    }
    fn state_dim(&self) -> usize {
        self.triple.state_dim()
    }
    fn control_dim(&self) -> usize {
        self.triple.control_dim()
    }
    fn state(&self, t: f64, out: &mut [f64]) {
        self.triple.state(t, out)
    }
    fn state_rate(&self, t: f64, out: &mut [f64]) {
        self.triple.state_rate(t, out)
    }
    fn costate(&self, t: f64, out: &mut [f64]) {
        self.triple.costate(t, out)
    }
    fn costate_rate(&self, t: f64, out: &mut [f64]) {
        self.triple.costate_rate(t, out)
    }
    fn control(&self, t: f64, out: &mut [f64]) {
        self.triple.control(t, out)
    }
    fn breakpoints(&self) -> Vec<f64> {
        self.triple.breakpoints()
    }
}

/// Distance of an embedded solution to a reference solution, and whether it
/// lies in the ball of radius `radius`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BallMonitor {
    pub distance: YDistance,
    pub radius: f64,
    pub inside: bool,
}

pub fn ball_monitor(embedded: &Embedded, reference: &dyn ContinuousTriple, radius: f64) -> BallMonitor {
    let distance = distance_y(embedded, reference, embedded.triple.grid().steps());
    BallMonitor {
        distance,
        radius,
        inside: distance.total() <= radius,
    }
}

/// `‖Δ₁‖₁`, `‖Δ₂‖₁`, `‖Δ₃‖_∞` of an embedded discrete solution.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ResidualTriple {
    pub d1: f64,
    pub d2: f64,
    pub d3: f64,
}

/// `Δ₁ = ẋ_h − f(x_h,u_h)`, `Δ₂ = ṗ_h + ∇ₓH(x_h,p_h,u_h)`,
/// `Δ₃ = σ(t_i,x_i,p_i) − σ(t,x_h,p_h)` on each cell.
pub fn residuals<P: ControlAffineProblem + ?Sized>(
    problem: &P,
    embedded: &Embedded,
    discrete: &ExtremalTriple,
) -> Result<ResidualTriple> {
    if fingerprint(discrete) != embedded.source {
        return Err(Error::Provenance);
    }
    let tr = &embedded.triple;
    check_dims(problem, tr)?;
    let grid = tr.grid();
    let (n, m) = (problem.state_dim(), problem.control_dim());
    let h = grid.step();
    let (mut x, mut p, mut dx, mut dp, mut f) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let (mut s0, mut s) = (vec![0.0; m], vec![0.0; m]);
    let mut out = ResidualTriple {
        d1: 0.0,
        d2: 0.0,
        d3: 0.0,
    };
    for i in 0..grid.steps() {
        let t0 = grid.node(i);
        let u = tr.control.at(i);
        tr.state.cell_slope(i, &mut dx);
        tr.costate.cell_slope(i, &mut dp);
        out.d1 += gauss5(t0, t0 + h, |t| {
            tr.state.eval_in_cell(i, (t - t0) / h, &mut x);
            problem.dynamics(t, &x, u, &mut f);
            dx.iter().zip(&f).map(|(a, b)| fabs(a - b)).sum()
        });
        out.d2 += gauss5(t0, t0 + h, |t| {
            let frac = (t - t0) / h;
            tr.state.eval_in_cell(i, frac, &mut x);
            tr.costate.eval_in_cell(i, frac, &mut p);
            problem.hamiltonian_state_gradient(t, &x, &p, u, &mut f);
            dp.iter().zip(&f).map(|(a, b)| fabs(a + b)).sum()
        });
        problem.switching_function(t0, tr.state.at(i), tr.costate.at(i), &mut s0);
        // sup over the cell, sampled at the Gauss nodes and the right end
        let mut sup: f64 = 0.0;
        for frac in crate::math::GAUSS5.iter().map(|(a, _)| *a).chain(core::iter::once(1.0)) {
            let t = t0 + frac * h;
            tr.state.eval_in_cell(i, frac, &mut x);
            tr.costate.eval_in_cell(i, frac, &mut p);
            problem.switching_function(t, &x, &p, &mut s);
            let d: Vec<f64> = s0.iter().zip(&s).map(|(a, b)| a - b).collect();
            sup = sup.max(norm1(&d));
        }
        out.d3 = out.d3.max(sup);
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConvergenceRow {
    pub n: usize,
    pub h: f64,
    pub err_x_w11: f64,
    pub err_p_w11: f64,
    pub err_u_l1: f64,
    pub err_total: f64,
    pub converged: bool,
    pub iterations: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceFit {
    /// `None` when fewer than two usable rows remain.
    pub order: Option<f64>,
    pub constant: Option<f64>,
    pub rows_used: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
    pub fit: ConvergenceFit,
}

impl ConvergenceTable {
    /// Fits `log err = log C + order · log h` over converged rows with
    /// positive error. The largest `h` is dropped when its error ratio
    /// deviates from the next ratio by more than 20%.
    pub fn from_rows(rows: Vec<ConvergenceRow>) -> Self {
        let mut usable: Vec<&ConvergenceRow> = rows.iter().filter(|r| r.converged && r.err_total > 0.0).collect();
        usable.sort_by(|a, b| b.h.total_cmp(&a.h));
        if usable.len() >= 3 {
            let r1 = usable[0].err_total / usable[1].err_total;
            let r2 = usable[1].err_total / usable[2].err_total;
            if fabs(r1 - r2) > 0.2 * fabs(r2) {
                usable.remove(0);
            }
        }
        let fit = if usable.len() >= 2 {
            let xs: Vec<f64> = usable.iter().map(|r| log(r.h)).collect();
            let ys: Vec<f64> = usable.iter().map(|r| log(r.err_total)).collect();
            let (slope, intercept) = linear_fit(&xs, &ys).map_or((None, None), |(s, c)| (Some(s), Some(exp(c))));
            ConvergenceFit {
                order: slope,
                constant: intercept,
                rows_used: usable.iter().map(|r| r.n).collect(),
            }
        } else {
            ConvergenceFit {
                order: None,
                constant: None,
                rows_used: usable.iter().map(|r| r.n).collect(),
            }
        };
        Self { rows, fit }
    }

    /// Consecutive `err_total` ratios in input order.
    pub fn ratios(&self) -> Vec<f64> {
        self.rows.windows(2).map(|w| w[0].err_total / w[1].err_total).collect()
    }

    /// `max_rows err_total / h`.
    pub fn max_constant(&self) -> f64 {
        self.rows
            .iter()
            .filter(|r| r.converged)
            .fold(0.0, |a: f64, r| a.max(r.err_total / r.h))
    }
}

/// Solves on `n` steps and measures the errors against `oracle`.
pub fn convergence_row<P, O>(problem: &P, oracle: &O, n: usize, config: &SweepConfig) -> Result<ConvergenceRow>
where
    P: ControlAffineProblem + ?Sized,
    O: ContinuousTriple + ?Sized,
{
    let grid = Grid::new(n, problem.horizon())?;
    let sol = sweep_solve(problem, grid, config, None)?;
    let emb = embed(&sol.triple);
    let d = distance_y(&emb, &AsDyn(oracle), n);
    Ok(ConvergenceRow {
        n,
        h: grid.step(),
        err_x_w11: d.state_w11,
        err_p_w11: d.costate_w11,
        err_u_l1: d.control_l1,
        err_total: d.total(),
        converged: sol.converged,
        iterations: sol.iterations,
    })
}

/// Runs [`convergence_row`] for every `N` (strictly increasing) and fits the
/// order. A row whose sweep fails to converge is kept and flagged.
pub fn convergence_study<P, O>(
    problem: &P,
    oracle: &O,
    n_list: &[usize],
    config: &SweepConfig,
) -> Result<ConvergenceTable>
where
    P: ControlAffineProblem + ?Sized,
    O: ContinuousTriple + ?Sized,
{
    if n_list.is_empty() {
        return Err(Error::Precondition("N list must not be empty"));
    }
    if n_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Precondition("N list must be strictly increasing"));
    }
    let mut rows = Vec::with_capacity(n_list.len());
    for &n in n_list {
        rows.push(convergence_row(problem, oracle, n, config)?);
    }
    Ok(ConvergenceTable::from_rows(rows))
}

/// Index of the first cell whose control differs from cell 0, if any.
pub fn first_switch(control: &GridFunction) -> Option<usize> {
    (1..control.len()).find(|&i| control.at(i) != control.at(0))
}

/// Number of cells where the control changes value.
pub fn switch_count(control: &GridFunction) -> usize {
    (1..control.len())
        .filter(|&i| control.at(i) != control.at(i - 1))
        .count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Example1, Polytope};

    #[test]
    fn example1_sweep_switches_once_near_tau() {
        let p = Example1::new(0.5, 2.0).unwrap();
        let g = Grid::new(256, 1.0).unwrap();
        let r = sweep_solve(&p, g, &SweepConfig::default(), None).unwrap();
        assert!(r.converged);
        assert_eq!(switch_count(&r.triple.control), 1);
        let k = first_switch(&r.triple.control).unwrap() as f64;
        assert!((k * g.step() - p.oracle().switching_time()).abs() <= 2.0 * g.step());
        let (bx, bp) = recursion_defects(&p, &r.triple);
        assert!(bx.is_empty() && bp.is_empty());
    }

    #[test]
    fn zero_budget_returns_initial_control() {
        let p = Example1::new(0.5, 2.0).unwrap();
        let g = Grid::new(16, 1.0).unwrap();
        let cfg = SweepConfig {
            max_iterations: 0,
            ..SweepConfig::default()
        };
        let r = sweep_solve(&p, g, &cfg, None).unwrap();
        assert!(!r.converged);
        assert!(r.triple.control.values().iter().all(|v| *v == 0.5));
    }

    struct Positive(Polytope);
    impl ControlAffineProblem for Positive {
        fn state_dim(&self) -> usize {
            1
        }
        fn control_dim(&self) -> usize {
            1
        }
        fn horizon(&self) -> f64 {
            1.0
        }
        fn initial_state(&self) -> &[f64] {
            &[0.0]
        }
        fn control_set(&self) -> &Polytope {
            &self.0
        }
        fn trajectory_bound(&self) -> f64 {
            1.0
        }
        fn drift(&self, _t: f64, _x: &[f64], out: &mut [f64]) {
            out[0] = 0.0;
        }
        fn control_matrix(&self, _t: f64, _x: &[f64], out: &mut [f64]) {
            out[0] = 0.0;
        }
        fn state_cost(&self, _t: f64, _x: &[f64]) -> f64 {
            0.0
        }
        fn control_cost(&self, _t: f64, _x: &[f64], out: &mut [f64]) {
            out[0] = 1.0;
        }
    }

    #[test]
    fn positive_switching_gives_lower_vertex() {
        let p = Positive(Polytope::interval(-1.0, 2.0).unwrap());
        let g = Grid::new(10, 1.0).unwrap();
        let cfg = SweepConfig {
            max_iterations: 1,
            ..SweepConfig::default()
        };
        let r = sweep_solve(&p, g, &cfg, None).unwrap();
        assert!(r.triple.control.values().iter().all(|v| *v == -1.0));
    }

    #[test]
    fn residuals_reject_foreign_triple() {
        let p = Example1::new(0.5, 2.0).unwrap();
        let a = sweep_solve(&p, Grid::new(8, 1.0).unwrap(), &SweepConfig::default(), None).unwrap();
        let b = sweep_solve(&p, Grid::new(16, 1.0).unwrap(), &SweepConfig::default(), None).unwrap();
        let emb = embed(&a.triple);
        assert!(matches!(residuals(&p, &emb, &b.triple), Err(Error::Provenance)));
        assert!(residuals(&p, &emb, &a.triple).is_ok());
    }

    #[test]
    fn single_row_has_no_order() {
        let p = Example1::new(0.5, 2.0).unwrap();
        let t = convergence_study(&p, &p.oracle(), &[64], &SweepConfig::default()).unwrap();
        assert_eq!(t.rows.len(), 1);
        assert!(t.fit.order.is_none());
    }
}
