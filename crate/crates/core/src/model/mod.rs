//! Problem class, Hamiltonian, switching function, and the problem catalog.

mod catalog;
mod example1;
mod polytope;

use alloc::vec;
use alloc::vec::Vec;

use crate::integrate::{Grid, GridFunction, Interpolation, NormKind};
use crate::math::{dot, fabs, norm1};
use crate::{Error, Result};

pub use catalog::{catalog_names, catalog_params, lookup, lookup_oracle, Catalog, Params};
pub use example1::{Example1, Example1Oracle};
pub use polytope::{Edge, Polytope, PolytopeKind};

/// A control-affine optimal control problem
///
/// ```text
/// f(t,x,u) = a(t,x) + B(t,x) u,    g(t,x,u) = w(t,x) + ⟨s(t,x), u⟩
/// ```
///
/// Matrices are row-major. `B` is `n × m`. Derivative slots return `false`
/// when the problem does not supply them; first derivatives then fall back
/// to central differences (see [`ProblemExt`]), second derivatives have no
/// fallback.
pub trait ControlAffineProblem: Send + Sync {
    fn state_dim(&self) -> usize;
    fn control_dim(&self) -> usize;
    fn horizon(&self) -> f64;
    fn initial_state(&self) -> &[f64];
    fn control_set(&self) -> &Polytope;
    /// The bound `M̄` on trajectories, used by divergence guards and as the
    /// radius of the state domain for perturbation families.
    fn trajectory_bound(&self) -> f64;

    fn is_time_invariant(&self) -> bool {
        false
    }

    fn drift(&self, t: f64, x: &[f64], out: &mut [f64]);
    fn control_matrix(&self, t: f64, x: &[f64], out: &mut [f64]);
    fn state_cost(&self, t: f64, x: &[f64]) -> f64;
    fn control_cost(&self, t: f64, x: &[f64], out: &mut [f64]);

    /// `∂a_k/∂x_l` at `[k·n + l]`.
    fn drift_jacobian(&self, _t: f64, _x: &[f64], _out: &mut [f64]) -> bool {
        false
    }
    /// `∂B_kj/∂x_l` at `[(k·m + j)·n + l]`.
    fn control_matrix_jacobian(&self, _t: f64, _x: &[f64], _out: &mut [f64]) -> bool {
        false
    }
    fn state_cost_gradient(&self, _t: f64, _x: &[f64], _out: &mut [f64]) -> bool {
        false
    }
    /// `∂s_j/∂x_l` at `[j·n + l]`.
    fn control_cost_jacobian(&self, _t: f64, _x: &[f64], _out: &mut [f64]) -> bool {
        false
    }

    /// `w_xx`, `n × n`.
    fn state_cost_hessian(&self, _t: f64, _x: &[f64], _out: &mut [f64]) -> bool {
        false
    }
    /// `Σ_j u_j ∇²s_j`, `n × n`.
    fn control_cost_hessian(&self, _t: f64, _x: &[f64], _u: &[f64], _out: &mut [f64]) -> bool {
        false
    }
    /// `Σ_k p_k ∇²(a_k + (B u)_k)`, `n × n`.
    fn dynamics_hessian(&self, _t: f64, _x: &[f64], _p: &[f64], _u: &[f64], _out: &mut [f64]) -> bool {
        false
    }
}

fn fd_step(x: f64) -> f64 {
    1e-6 * fabs(x).max(1.0)
}

/// Derived quantities shared by every problem.
pub trait ProblemExt: ControlAffineProblem {
    /// `f(t,x,u) = a + B u`.
    fn dynamics(&self, t: f64, x: &[f64], u: &[f64], out: &mut [f64]) {
        let (n, m) = (self.state_dim(), self.control_dim());
        let mut b = vec![0.0; n * m];
        self.drift(t, x, out);
        self.control_matrix(t, x, &mut b);
        for k in 0..n {
            out[k] += dot(&b[k * m..(k + 1) * m], u);
        }
    }

    /// `g(t,x,u) = w + ⟨s, u⟩`.
    fn running_cost(&self, t: f64, x: &[f64], u: &[f64]) -> f64 {
        let mut s = vec![0.0; self.control_dim()];
        self.control_cost(t, x, &mut s);
        self.state_cost(t, x) + dot(&s, u)
    }

    fn hamiltonian(&self, t: f64, x: &[f64], p: &[f64], u: &[f64]) -> f64 {
        let mut f = vec![0.0; self.state_dim()];
        self.dynamics(t, x, u, &mut f);
        self.running_cost(t, x, u) + dot(p, &f)
    }

    /// `σ = Bᵀp + s`, the gradient of the Hamiltonian in `u`.
    fn switching_function(&self, t: f64, x: &[f64], p: &[f64], out: &mut [f64]) {
        let (n, m) = (self.state_dim(), self.control_dim());
        let mut b = vec![0.0; n * m];
        self.control_matrix(t, x, &mut b);
        self.control_cost(t, x, out);
        for j in 0..m {
            for k in 0..n {
                out[j] += b[k * m + j] * p[k];
            }
        }
    }

    /// `f_x = a_x + (B u)_x`, `n × n`.
    fn state_jacobian(&self, t: f64, x: &[f64], u: &[f64], out: &mut [f64]) {
        let (n, m) = (self.state_dim(), self.control_dim());
        let mut bx = vec![0.0; n * m * n];
        if self.drift_jacobian(t, x, out) && self.control_matrix_jacobian(t, x, &mut bx) {
            for k in 0..n {
                for l in 0..n {
                    let mut acc = 0.0;
                    for j in 0..m {
                        acc += bx[(k * m + j) * n + l] * u[j];
                    }
                    out[k * n + l] += acc;
                }
            }
            return;
        }
        let mut xp = x.to_vec();
        let mut fp = vec![0.0; n];
        let mut fm = vec![0.0; n];
        for l in 0..n {
            let h = fd_step(x[l]);
            xp[l] = x[l] + h;
            self.dynamics(t, &xp, u, &mut fp);
            xp[l] = x[l] - h;
            self.dynamics(t, &xp, u, &mut fm);
            xp[l] = x[l];
            for k in 0..n {
                out[k * n + l] = (fp[k] - fm[k]) / (2.0 * h);
            }
        }
    }

    /// `∂B_kj/∂x_l`, analytic when supplied.
    fn control_matrix_derivative(&self, t: f64, x: &[f64], out: &mut [f64]) {
        if self.control_matrix_jacobian(t, x, out) {
            return;
        }
        let (n, m) = (self.state_dim(), self.control_dim());
        let mut xp = x.to_vec();
        let mut bp = vec![0.0; n * m];
        let mut bm = vec![0.0; n * m];
        for l in 0..n {
            let h = fd_step(x[l]);
            xp[l] = x[l] + h;
            self.control_matrix(t, &xp, &mut bp);
            xp[l] = x[l] - h;
            self.control_matrix(t, &xp, &mut bm);
            xp[l] = x[l];
            for km in 0..n * m {
                out[km * n + l] = (bp[km] - bm[km]) / (2.0 * h);
            }
        }
    }

    fn state_cost_derivative(&self, t: f64, x: &[f64], out: &mut [f64]) {
        if self.state_cost_gradient(t, x, out) {
            return;
        }
        let mut xp = x.to_vec();
        for l in 0..x.len() {
            let h = fd_step(x[l]);
            xp[l] = x[l] + h;
            let fp = self.state_cost(t, &xp);
            xp[l] = x[l] - h;
            let fm = self.state_cost(t, &xp);
            xp[l] = x[l];
            out[l] = (fp - fm) / (2.0 * h);
        }
    }

    fn control_cost_derivative(&self, t: f64, x: &[f64], out: &mut [f64]) {
        if self.control_cost_jacobian(t, x, out) {
            return;
        }
        let (n, m) = (self.state_dim(), self.control_dim());
        let mut xp = x.to_vec();
        let mut sp = vec![0.0; m];
        let mut sm = vec![0.0; m];
        for l in 0..n {
            let h = fd_step(x[l]);
            xp[l] = x[l] + h;
            self.control_cost(t, &xp, &mut sp);
            xp[l] = x[l] - h;
            self.control_cost(t, &xp, &mut sm);
            xp[l] = x[l];
            for j in 0..m {
                out[j * n + l] = (sp[j] - sm[j]) / (2.0 * h);
            }
        }
    }

    /// `∇ₓH = w_x + Σ_j u_j ∇s_j + f_xᵀ p`.
    fn hamiltonian_state_gradient(&self, t: f64, x: &[f64], p: &[f64], u: &[f64], out: &mut [f64]) {
        let (n, m) = (self.state_dim(), self.control_dim());
        let mut fx = vec![0.0; n * n];
        let mut sx = vec![0.0; m * n];
        self.state_jacobian(t, x, u, &mut fx);
        self.control_cost_derivative(t, x, &mut sx);
        self.state_cost_derivative(t, x, out);
        for l in 0..n {
            let mut acc = 0.0;
            for j in 0..m {
                acc += u[j] * sx[j * n + l];
            }
            for k in 0..n {
                acc += fx[k * n + l] * p[k];
            }
            out[l] += acc;
        }
    }

    /// `H_ux = ∂σ/∂x`, `m × n`: `∂s_j/∂x_l + Σ_k p_k ∂B_kj/∂x_l`.
    fn hamiltonian_mixed_hessian(&self, t: f64, x: &[f64], p: &[f64], out: &mut [f64]) {
        let (n, m) = (self.state_dim(), self.control_dim());
        let mut bx = vec![0.0; n * m * n];
        self.control_matrix_derivative(t, x, &mut bx);
        self.control_cost_derivative(t, x, out);
        for j in 0..m {
            for l in 0..n {
                let mut acc = 0.0;
                for k in 0..n {
                    acc += p[k] * bx[(k * m + j) * n + l];
                }
                out[j * n + l] += acc;
            }
        }
    }

    /// `H_xx`, `n × n`. Needs all three second-derivative slots.
    fn hamiltonian_state_hessian(&self, t: f64, x: &[f64], p: &[f64], u: &[f64], out: &mut [f64]) -> Result<()> {
        let n = self.state_dim();
        let mut tmp = vec![0.0; n * n];
        if !self.state_cost_hessian(t, x, out) {
            return Err(Error::MissingCapability("state cost Hessian w_xx"));
        }
        if !self.control_cost_hessian(t, x, u, &mut tmp) {
            return Err(Error::MissingCapability("control cost Hessian s_xx"));
        }
        out.iter_mut().zip(&tmp).for_each(|(o, v)| *o += v);
        if !self.dynamics_hessian(t, x, p, u, &mut tmp) {
            return Err(Error::MissingCapability("dynamics Hessian (a + B u)_xx"));
        }
        out.iter_mut().zip(&tmp).for_each(|(o, v)| *o += v);
        Ok(())
    }

    fn has_second_derivatives(&self) -> bool {
        let (n, m) = (self.state_dim(), self.control_dim());
        let x = self.initial_state().to_vec();
        let p = vec![0.0; n];
        let u = vec![0.0; m];
        let mut out = vec![0.0; n * n];
        self.hamiltonian_state_hessian(0.0, &x, &p, &u, &mut out).is_ok()
    }
}

impl<P: ControlAffineProblem + ?Sized> ProblemExt for P {}

/// `H(t,x,p,u) = g + ⟨p, f⟩`.
pub fn hamiltonian<P: ControlAffineProblem + ?Sized>(problem: &P, t: f64, x: &[f64], p: &[f64], u: &[f64]) -> f64 {
    problem.hamiltonian(t, x, p, u)
}

pub fn switching_function<P: ControlAffineProblem + ?Sized>(problem: &P, t: f64, x: &[f64], p: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; problem.control_dim()];
    problem.switching_function(t, x, p, &mut out);
    out
}

/// A minimizer of the affine Hamiltonian `v ↦ ⟨sigma, v⟩` over `U`: always a
/// vertex, lowest vertex index on ties.
pub fn hamiltonian_minimizer<'a>(sigma: &[f64], set: &'a Polytope) -> &'a [f64] {
    set.vertex(set.minimizing_vertex(sigma))
}

/// Largest of `|x|, |ẋ|, |p|, |ṗ|` over Euler pilot runs with every vertex
/// held constant; the trajectory bound defaults to twice this value.
pub fn pilot_bound<P: ControlAffineProblem + ?Sized>(problem: &P, steps: usize) -> f64 {
    let (n, m) = (problem.state_dim(), problem.control_dim());
    let grid = match Grid::new(steps, problem.horizon()) {
        Ok(g) => g,
        Err(_) => return f64::NAN,
    };
    let h = grid.step();
    let mut bound: f64 = 0.0;
    for v in problem.control_set().vertices() {
        let mut xs = vec![0.0; (steps + 1) * n];
        xs[..n].copy_from_slice(problem.initial_state());
        let mut f = vec![0.0; n];
        for i in 0..steps {
            let t = grid.node(i);
            problem.dynamics(t, &xs[i * n..(i + 1) * n], v, &mut f);
            bound = bound.max(crate::math::norm2(&f));
            for k in 0..n {
                xs[(i + 1) * n + k] = xs[i * n + k] + h * f[k];
            }
            bound = bound.max(crate::math::norm2(&xs[(i + 1) * n..(i + 2) * n]));
        }
        bound = bound.max(crate::math::norm2(&xs[..n]));
        let mut p = vec![0.0; n];
        let mut g = vec![0.0; n];
        for i in (0..steps).rev() {
            let t = grid.node(i);
            problem.hamiltonian_state_gradient(t, &xs[i * n..(i + 1) * n], &p, v, &mut g);
            bound = bound.max(crate::math::norm2(&g));
            for k in 0..n {
                p[k] += h * g[k];
            }
            bound = bound.max(crate::math::norm2(&p));
        }
        let _ = m;
    }
    bound
}

/// State, costate and control on a common grid: `(x, p, u)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ExtremalTriple {
    pub state: GridFunction,
    pub costate: GridFunction,
    pub control: GridFunction,
}

impl ExtremalTriple {
    pub fn new(state: GridFunction, costate: GridFunction, control: GridFunction) -> Result<Self> {
        if state.grid() != costate.grid() || state.grid() != control.grid() {
            return Err(Error::GridMismatch);
        }
        if state.interpolation() != Interpolation::PiecewiseLinear
            || costate.interpolation() != Interpolation::PiecewiseLinear
            || control.interpolation() != Interpolation::PiecewiseConstant
        {
            return Err(Error::Precondition(
                "state and costate must be piecewise linear, control piecewise constant",
            ));
        }
        if state.dim() != costate.dim() {
            return Err(Error::Dimension {
                what: "costate",
                expected: state.dim(),
                found: costate.dim(),
            });
        }
        Ok(Self {
            state,
            costate,
            control,
        })
    }

    pub fn grid(&self) -> Grid {
        self.state.grid()
    }

    /// `‖x‖₁,₁ + ‖p‖₁,₁ + ‖u‖₁`.
    pub fn norm(&self) -> f64 {
        // interpolations are validated in `new`
        self.state.norm(NormKind::W11).unwrap_or(f64::NAN)
            + self.costate.norm(NormKind::W11).unwrap_or(f64::NAN)
            + self.control.norm(NormKind::L1).unwrap_or(f64::NAN)
    }

    pub fn distance(&self, other: &Self) -> Result<f64> {
        Ok(self.state.distance(&other.state, NormKind::W11)?
            + self.costate.distance(&other.costate, NormKind::W11)?
            + self.control.distance(&other.control, NormKind::L1)?)
    }

    /// `x(t₀) = x⁰` and `p(T) = 0`, exactly.
    pub fn satisfies_boundary(&self, x0: &[f64]) -> bool {
        let last = self.costate.len() - 1;
        self.state.at(0) == x0 && self.costate.at(last).iter().all(|v| *v == 0.0)
    }

    /// First node whose control lies outside `set`.
    pub fn first_infeasible(&self, set: &Polytope) -> Option<usize> {
        (0..self.control.len()).find(|&i| !set.contains(self.control.at(i)))
    }

    /// Embedded switching function `B(t_i,x_i)ᵀp_i + s(t_i,x_i)` at every node.
    pub fn switching_at_nodes<P: ControlAffineProblem + ?Sized>(&self, problem: &P) -> GridFunction {
        let grid = self.grid();
        let m = problem.control_dim();
        let mut out = GridFunction::zeros(grid, m, Interpolation::PiecewiseLinear);
        for i in 0..=grid.steps() {
            let t = grid.node(i);
            problem.switching_function(t, self.state.at(i), self.costate.at(i), out.at_mut(i));
        }
        out
    }
}

pub(crate) fn check_dims<P: ControlAffineProblem + ?Sized>(problem: &P, triple: &ExtremalTriple) -> Result<()> {
    if triple.state.dim() != problem.state_dim() {
        return Err(Error::Dimension {
            what: "state",
            expected: problem.state_dim(),
            found: triple.state.dim(),
        });
    }
    if triple.control.dim() != problem.control_dim() {
        return Err(Error::Dimension {
            what: "control",
            expected: problem.control_dim(),
            found: triple.control.dim(),
        });
    }
    Ok(())
}

/// Largest second difference `|g(u₁) − 2g(ū) + g(u₂)|` over the midpoints of
/// all vertex pairs, for `f` (ℓ¹) and `g`. Zero up to rounding for every
/// control-affine problem.
pub fn affinity_defect<P: ControlAffineProblem + ?Sized>(problem: &P, t: f64, x: &[f64]) -> f64 {
    let n = problem.state_dim();
    let verts = problem.control_set().vertices();
    let mut worst: f64 = 0.0;
    let mut fa = vec![0.0; n];
    let mut fb = vec![0.0; n];
    let mut fm = vec![0.0; n];
    for a in verts {
        for b in verts {
            let mid: Vec<f64> = a.iter().zip(b).map(|(p, q)| 0.5 * (p + q)).collect();
            let g =
                problem.running_cost(t, x, a) - 2.0 * problem.running_cost(t, x, &mid) + problem.running_cost(t, x, b);
            problem.dynamics(t, x, a, &mut fa);
            problem.dynamics(t, x, b, &mut fb);
            problem.dynamics(t, x, &mid, &mut fm);
            let f: Vec<f64> = (0..n).map(|k| fa[k] - 2.0 * fm[k] + fb[k]).collect();
            worst = worst.max(fabs(g)).max(norm1(&f));
        }
    }
    worst
}
