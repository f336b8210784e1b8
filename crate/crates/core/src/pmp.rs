//! Optimality-system residuals and switching-structure analysis.

use alloc::vec;
use alloc::vec::Vec;

use crate::integrate::{Grid, GridFunction};
use crate::math::{dot, fabs, gauss5, linear_fit, norm1};
use crate::model::{check_dims, ControlAffineProblem, ExtremalTriple, Polytope, ProblemExt};
use crate::{Error, Result};

/// `‖ẋ − f‖₁`, `‖ṗ + ∇ₓH‖₁` and the sup over nodes of `dist(−σ, N_U(u))`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PmpResiduals {
    pub state: f64,
    pub costate: f64,
    pub stationarity: f64,
}

pub fn pmp_residuals<P: ControlAffineProblem + ?Sized>(problem: &P, triple: &ExtremalTriple) -> Result<PmpResiduals> {
    check_dims(problem, triple)?;
    let grid = triple.grid();
    let (n, m) = (problem.state_dim(), problem.control_dim());
    let h = grid.step();
    let (mut x, mut p, mut dx, mut dp) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut f = vec![0.0; n];
    let mut sigma = vec![0.0; m];
    let mut out = PmpResiduals {
        state: 0.0,
        costate: 0.0,
        stationarity: 0.0,
    };
    for i in 0..grid.steps() {
        let t0 = grid.node(i);
        let u = triple.control.at(i);
        triple.state.cell_slope(i, &mut dx);
        triple.costate.cell_slope(i, &mut dp);
        out.state += gauss5(t0, t0 + h, |t| {
            let s = (t - t0) / h;
            triple.state.eval_in_cell(i, s, &mut x);
            problem.dynamics(t, &x, u, &mut f);
            dx.iter().zip(&f).map(|(a, b)| fabs(a - b)).sum()
        });
        out.costate += gauss5(t0, t0 + h, |t| {
            let s = (t - t0) / h;
            triple.state.eval_in_cell(i, s, &mut x);
            triple.costate.eval_in_cell(i, s, &mut p);
            problem.hamiltonian_state_gradient(t, &x, &p, u, &mut f);
            dp.iter().zip(&f).map(|(a, b)| fabs(a + b)).sum()
        });
        problem.switching_function(t0, triple.state.at(i), triple.costate.at(i), &mut sigma);
        let d = problem.control_set().normal_cone_distance(u, &sigma);
        out.stationarity = out.stationarity.max(d);
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SwitchingConfig {
    /// Singular-arc threshold; `None` means `1e-8 · max|σ_e|`.
    pub tol_sing: Option<f64>,
    pub kappa_min: f64,
    /// Nodes on each side of a zero used for slopes and the growth check.
    pub window: usize,
}

impl Default for SwitchingConfig {
    fn default() -> Self {
        Self {
            tol_sing: None,
            kappa_min: 1e-3,
            window: 5,
        }
    }
}

/// Analysis of `σ_e = ⟨σ, e⟩` along one edge direction.
#[derive(Clone, Debug, PartialEq)]
pub struct EdgeReport {
    pub edge_index: usize,
    pub direction: Vec<f64>,
    pub zeros: Vec<f64>,
    /// Grid interval bracketing each zero.
    pub brackets: Vec<(f64, f64)>,
    pub slopes_minus: Vec<f64>,
    pub slopes_plus: Vec<f64>,
    /// `+∞` when there are no zeros.
    pub kappa: f64,
    pub tau: f64,
    pub bang_bang: bool,
    /// Singular plateaus `[t_start, t_end]`.
    pub singular: Vec<(f64, f64)>,
    pub min_abs: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SwitchingReport {
    pub edges: Vec<EdgeReport>,
    pub kappa: f64,
    pub tau: f64,
    pub bang_bang: bool,
    pub pass: bool,
}

impl SwitchingReport {
    pub fn zero_count(&self) -> usize {
        self.edges.iter().map(|e| e.zeros.len()).sum()
    }
}

/// Zeros, one-sided slopes, growth constant and window of a nodal signal.
pub fn analyze_signal(grid: Grid, signal: &[f64], config: &SwitchingConfig) -> EdgeReport {
    let big_n = grid.steps();
    let h = grid.step();
    let max_abs = signal.iter().fold(0.0_f64, |a, v| a.max(fabs(*v)));
    let min_abs = signal.iter().fold(f64::INFINITY, |a, v| a.min(fabs(*v)));
    let tol = config.tol_sing.unwrap_or(1e-8 * max_abs);

    let mut singular = Vec::new();
    let mut run = 0usize;
    let small = |i: usize| fabs(signal[i]) <= tol;
    for i in 0..big_n {
        if small(i) && small(i + 1) {
            run += 1;
        } else {
            if run > 2 {
                singular.push((grid.node(i - run), grid.node(i)));
            }
            run = 0;
        }
    }
    if run > 2 {
        singular.push((grid.node(big_n - run), grid.node(big_n)));
    }
    let in_singular = |t: f64| singular.iter().any(|(a, b)| t >= *a && t <= *b);

    let mut zeros = Vec::new();
    let mut brackets = Vec::new();
    let mut nearest = Vec::new();
    for i in 0..big_n {
        let (a, b) = (signal[i], signal[i + 1]);
        if a * b < 0.0 {
            // exact root of the piecewise-linear interpolant
            let s = a / (a - b);
            let t = grid.node(i) + s * h;
            if !in_singular(t) {
                zeros.push(t);
                brackets.push((grid.node(i), grid.node(i + 1)));
                nearest.push(if s < 0.5 { i } else { i + 1 });
            }
        } else if a == 0.0 && i > 0 && signal[i - 1] * b < 0.0 && !in_singular(grid.node(i)) {
            zeros.push(grid.node(i));
            brackets.push((grid.node(i - 1), grid.node(i + 1)));
            nearest.push(i);
        }
    }

    let w = config.window.max(2);
    let fit = |lo: usize, hi: usize| -> f64 {
        let ts: Vec<f64> = (lo..=hi).map(|k| grid.node(k)).collect();
        linear_fit(&ts, &signal[lo..=hi]).map(|(s, _)| s).unwrap_or(f64::NAN)
    };
    let mut slopes_minus = Vec::new();
    let mut slopes_plus = Vec::new();
    for (z, &near) in zeros.iter().zip(&nearest) {
        // largest node left of the zero and smallest node right of it, skipping the nearest
        let below = (0..=big_n).rev().find(|&k| grid.node(k) < *z && k != near);
        let above = (0..=big_n).find(|&k| grid.node(k) > *z && k != near);
        let cell = grid.cell_of(*z);
        let fallback = (signal[cell + 1] - signal[cell]) / h;
        let sm = match below {
            Some(hi) if hi >= 1 => fit(hi.saturating_sub(w - 1), hi),
            _ => fallback,
        };
        let sp = match above {
            Some(lo) if lo < big_n => fit(lo, (lo + w - 1).min(big_n)),
            _ => fallback,
        };
        slopes_minus.push(sm);
        slopes_plus.push(sp);
    }

    let kappa = slopes_minus
        .iter()
        .chain(&slopes_plus)
        .fold(f64::INFINITY, |a, s| a.min(fabs(*s)));

    let holds = |k: usize, z: f64| fabs(signal[k]) >= 0.9 * kappa * fabs(grid.node(k) - z) - 1e-15 * max_abs;
    let mut tau = grid.horizon();
    let mut window_ok = true;
    for &z in &zeros {
        let c = grid.cell_of(z.min(grid.horizon()));
        let mut r = f64::INFINITY;
        let mut k = c + 1;
        let mut steps = 0usize;
        while k <= big_n {
            if !holds(k, z) {
                r = r.min(grid.node(k) - z);
                if steps < w {
                    window_ok = false;
                }
                break;
            }
            k += 1;
            steps += 1;
        }
        let mut steps = 0usize;
        let mut k = c as isize;
        while k >= 0 {
            let ku = k as usize;
            if !holds(ku, z) {
                r = r.min(z - grid.node(ku));
                if steps < w {
                    window_ok = false;
                }
                break;
            }
            k -= 1;
            steps += 1;
        }
        if r.is_finite() {
            tau = tau.min(r);
        }
    }

    let bang_bang = singular.is_empty();
    EdgeReport {
        edge_index: 0,
        direction: Vec::new(),
        zeros,
        brackets,
        slopes_minus,
        slopes_plus,
        kappa,
        tau,
        bang_bang,
        singular,
        min_abs,
        pass: bang_bang && kappa >= config.kappa_min && window_ok,
    }
}

/// Checks the linear growth condition along every edge direction of `U`
/// using the embedded switching function `B(t_i,x_i)ᵀp_i + s(t_i,x_i)`.
pub fn analyze_switching<P: ControlAffineProblem + ?Sized>(
    problem: &P,
    triple: &ExtremalTriple,
    config: &SwitchingConfig,
) -> Result<SwitchingReport> {
    check_dims(problem, triple)?;
    let sigma = triple.switching_at_nodes(problem);
    let grid = triple.grid();
    let mut edges = Vec::new();
    for (e, dir) in problem.control_set().edge_directions().into_iter().enumerate() {
        let signal: Vec<f64> = (0..=grid.steps()).map(|i| dot(sigma.at(i), &dir)).collect();
        let mut rep = analyze_signal(grid, &signal, config);
        rep.edge_index = e;
        rep.direction = dir;
        edges.push(rep);
    }
    Ok(SwitchingReport {
        kappa: edges.iter().fold(f64::INFINITY, |a, e| a.min(e.kappa)),
        tau: edges.iter().fold(grid.horizon(), |a, e| a.min(e.tau)),
        bang_bang: edges.iter().all(|e| e.bang_bang),
        pass: edges.iter().all(|e| e.pass),
        edges,
    })
}

/// `κ′ = κ − γ`, `τ′ = τ/2`; `valid` requires a passing report and `γ < κ/4`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RobustMargin {
    pub kappa_prime: f64,
    pub tau_prime: f64,
    pub valid: bool,
}

pub fn robust_switching_margin(report: &SwitchingReport, gamma: f64) -> Result<RobustMargin> {
    if !(gamma >= 0.0) {
        return Err(Error::InvalidParameter {
            name: "gamma",
            constraint: "gamma >= 0",
            value: gamma,
        });
    }
    Ok(RobustMargin {
        kappa_prime: report.kappa - gamma,
        tau_prime: report.tau / 2.0,
        valid: report.pass && gamma < report.kappa / 4.0,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RemarkBound {
    /// `Q / (8 k (u₂ − u₁))`.
    Constant(f64),
    /// No zeros: the first-order term alone is at least `min_abs_sigma · ‖δu‖₁`.
    NoSwitching { min_abs_sigma: f64 },
}

pub fn remark_constant(q: f64, zeros: usize, width: f64) -> RemarkBound {
    if zeros == 0 {
        return RemarkBound::NoSwitching {
            min_abs_sigma: f64::NAN,
        };
    }
    RemarkBound::Constant(q / (8.0 * zeros as f64 * width))
}

/// The coercivity constant implied by the switching report for a scalar
/// control on an interval.
pub fn coercivity_constant_remark(report: &SwitchingReport, set: &Polytope) -> Result<RemarkBound> {
    let width = set.interval_width().ok_or(Error::Precondition(
        "coercivity constant needs a scalar interval control",
    ))?;
    let edge = report.edges.first().ok_or(Error::Precondition("report has no edges"))?;
    if edge.zeros.is_empty() {
        return Ok(RemarkBound::NoSwitching {
            min_abs_sigma: edge.min_abs,
        });
    }
    Ok(remark_constant(edge.kappa, edge.zeros.len(), width))
}

/// Nodes where the control differs from the Hamiltonian minimizer, as a
/// sanity helper for tests and reports.
pub fn nonminimizing_nodes<P: ControlAffineProblem + ?Sized>(problem: &P, triple: &ExtremalTriple) -> Vec<usize> {
    let sigma: GridFunction = triple.switching_at_nodes(problem);
    let set = problem.control_set();
    (0..triple.control.len())
        .filter(|&i| {
            let v = crate::model::hamiltonian_minimizer(sigma.at(i), set);
            norm1(
                &v.iter()
                    .zip(triple.control.at(i))
                    .map(|(a, b)| a - b)
                    .collect::<Vec<f64>>(),
            ) > 0.0
        })
        .collect()
}
