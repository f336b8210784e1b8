//! Families of nearby time-invariant problems and the uniform-constant study.
//!
//! A member adds smooth bumps `amp · sin(⟨ω, x⟩ + φ)` to the entries of
//! `a`, `B`, `w` and `s`, so control-affinity is kept exactly. Its budget is
//! measured as
//!
//! ```text
//! ‖f̃ − f‖₁,∞ + ‖g̃ − g‖₁,∞,   ‖φ‖₁,∞ = sup_D |φ|₁ + sup_D |Dφ|₁
//! ```
//!
//! with `D = B(0; M̄) × U`, `Dφ` the Jacobian in `(x, u)` and `|·|₁` the sum
//! of absolute entries. The sup over `x` is sampled on a lattice; the sup over
//! `u` is exact since everything is affine in `u`.

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::euler::{convergence_study, sweep_solve, ConvergenceTable, SweepConfig};
use crate::integrate::{reference_solve, DenseSolution, Grid, PiecewiseControl};
use crate::math::{cos, dot, fabs, norm2, sin};
use crate::model::{ControlAffineProblem, Polytope, ProblemExt};
use crate::solution::{distance_y, AsDyn, ContinuousTriple};
use crate::{Error, Result};

/// Points per state dimension in the budget lattice.
pub const LATTICE_POINTS: usize = 50;

/// Entry of the problem data a bump is added to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Target {
    Drift { k: usize },
    ControlMatrix { k: usize, j: usize },
    StateCost,
    ControlCost { j: usize },
}

impl Target {
    fn in_dynamics(self) -> bool {
        matches!(self, Target::Drift { .. } | Target::ControlMatrix { .. })
    }

    pub fn label(self) -> String {
        match self {
            Target::Drift { k } => format!("a[{k}]"),
            Target::ControlMatrix { k, j } => format!("B[{k},{j}]"),
            Target::StateCost => String::from("w"),
            Target::ControlCost { j } => format!("s[{j}]"),
        }
    }
}

/// Draws one term per member: `ω` uniform in `[−max_frequency, max_frequency]ⁿ`,
/// `φ` uniform in `[0, 2π)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Generator {
    pub target: Target,
    pub max_frequency: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Term {
    pub target: Target,
    pub amplitude: f64,
    pub frequency: Vec<f64>,
    pub phase: f64,
}

impl Term {
    fn angle(&self, x: &[f64]) -> f64 {
        dot(&self.frequency, x) + self.phase
    }
    fn value(&self, x: &[f64]) -> f64 {
        self.amplitude * sin(self.angle(x))
    }
    /// Adds `scale · ∇(value)` into `out`.
    fn add_gradient(&self, x: &[f64], scale: f64, out: &mut [f64]) {
        let c = scale * self.amplitude * cos(self.angle(x));
        for (o, w) in out.iter_mut().zip(&self.frequency) {
            *o += c * w;
        }
    }
    /// Adds `scale · ∇²(value)` into the `n × n` matrix `out`.
    fn add_hessian(&self, x: &[f64], scale: f64, out: &mut [f64]) {
        let n = self.frequency.len();
        let c = -scale * self.amplitude * sin(self.angle(x));
        for r in 0..n {
            for q in 0..n {
                out[r * n + q] += c * self.frequency[r] * self.frequency[q];
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PerturbationSpec {
    pub rho: f64,
    pub seed: u64,
    pub count: usize,
    pub basis: Vec<Generator>,
    /// Fraction of the budget spent on `f̃ − f`.
    pub split: f64,
}

impl PerturbationSpec {
    /// One generator for every entry of `a`, `B`, `w`, `s`, frequencies up to 1,
    /// budget split evenly.
    pub fn standard<P: ControlAffineProblem + ?Sized>(problem: &P, rho: f64, count: usize, seed: u64) -> Self {
        let (n, m) = (problem.state_dim(), problem.control_dim());
        let mut basis = Vec::new();
        for k in 0..n {
            basis.push(Target::Drift { k });
            for j in 0..m {
                basis.push(Target::ControlMatrix { k, j });
            }
        }
        basis.push(Target::StateCost);
        basis.extend((0..m).map(|j| Target::ControlCost { j }));
        Self {
            rho,
            seed,
            count,
            basis: basis
                .into_iter()
                .map(|target| Generator {
                    target,
                    max_frequency: 1.0,
                })
                .collect(),
            split: 0.5,
        }
    }

    fn validate(&self, n: usize, m: usize) -> Result<()> {
        if !(self.rho >= 0.0 && self.rho.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "rho",
                constraint: "0 <= rho < inf",
                value: self.rho,
            });
        }
        if !(0.0..=1.0).contains(&self.split) {
            return Err(Error::InvalidParameter {
                name: "split",
                constraint: "0 <= split <= 1",
                value: self.split,
            });
        }
        for g in &self.basis {
            let ok = match g.target {
                Target::Drift { k } => k < n,
                Target::ControlMatrix { k, j } => k < n && j < m,
                Target::StateCost => true,
                Target::ControlCost { j } => j < m,
            };
            if !ok {
                return Err(Error::Generation {
                    term: g.target.label(),
                    reason: "index out of range for the problem dimensions",
                });
            }
            if !(g.max_frequency >= 0.0 && g.max_frequency.is_finite()) {
                return Err(Error::Generation {
                    term: g.target.label(),
                    reason: "max frequency must be finite and nonnegative",
                });
            }
        }
        Ok(())
    }
}

/// A base problem plus bump terms.
#[derive(Clone)]
pub struct PerturbedProblem {
    base: Arc<dyn ControlAffineProblem>,
    terms: Vec<Term>,
    index: usize,
    norm_f: f64,
    norm_g: f64,
}

impl core::fmt::Debug for PerturbedProblem {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("PerturbedProblem")
            .field("index", &self.index)
            .field("terms", &self.terms)
            .field("norm_f", &self.norm_f)
            .field("norm_g", &self.norm_g)
            .finish_non_exhaustive()
    }
}

impl PerturbedProblem {
    /// The base problem with no terms.
    pub fn unperturbed(base: Arc<dyn ControlAffineProblem>, index: usize) -> Self {
        Self {
            base,
            terms: Vec::new(),
            index,
            norm_f: 0.0,
            norm_g: 0.0,
        }
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    /// Lattice values of `‖f̃ − f‖₁,∞` and `‖g̃ − g‖₁,∞`.
    pub fn budget(&self) -> (f64, f64) {
        (self.norm_f, self.norm_g)
    }

    pub fn base(&self) -> &Arc<dyn ControlAffineProblem> {
        &self.base
    }

    fn terms_for(&self, pred: impl Fn(Target) -> bool) -> impl Iterator<Item = &Term> {
        self.terms.iter().filter(move |t| pred(t.target))
    }
}

impl ControlAffineProblem for PerturbedProblem {
    fn state_dim(&self) -> usize {
        self.base.state_dim()
    }
    fn control_dim(&self) -> usize {
        self.base.control_dim()
    }
    fn horizon(&self) -> f64 {
        self.base.horizon()
    }
    fn initial_state(&self) -> &[f64] {
        self.base.initial_state()
    }
    fn control_set(&self) -> &Polytope {
        self.base.control_set()
    }
    fn trajectory_bound(&self) -> f64 {
        self.base.trajectory_bound()
    }
    fn is_time_invariant(&self) -> bool {
        true
    }
    fn drift(&self, t: f64, x: &[f64], out: &mut [f64]) {
        self.base.drift(t, x, out);
        for term in &self.terms {
            if let Target::Drift { k } = term.target {
                out[k] += term.value(x);
            }
        }
    }
    fn control_matrix(&self, t: f64, x: &[f64], out: &mut [f64]) {
        self.base.control_matrix(t, x, out);
        let m = self.control_dim();
        for term in &self.terms {
            if let Target::ControlMatrix { k, j } = term.target {
                out[k * m + j] += term.value(x);
            }
        }
    }
    fn state_cost(&self, t: f64, x: &[f64]) -> f64 {
        self.base.state_cost(t, x)
            + self
                .terms_for(|t| t == Target::StateCost)
                .map(|t| t.value(x))
                .sum::<f64>()
    }
    fn control_cost(&self, t: f64, x: &[f64], out: &mut [f64]) {
        self.base.control_cost(t, x, out);
        for term in &self.terms {
            if let Target::ControlCost { j } = term.target {
                out[j] += term.value(x);
            }
        }
    }
    fn drift_jacobian(&self, t: f64, x: &[f64], out: &mut [f64]) -> bool {
        if !self.base.drift_jacobian(t, x, out) {
            return false;
        }
        let n = self.state_dim();
        for term in &self.terms {
            if let Target::Drift { k } = term.target {
                term.add_gradient(x, 1.0, &mut out[k * n..(k + 1) * n]);
            }
        }
        true
    }
    fn control_matrix_jacobian(&self, t: f64, x: &[f64], out: &mut [f64]) -> bool {
        if !self.base.control_matrix_jacobian(t, x, out) {
            return false;
        }
        let (n, m) = (self.state_dim(), self.control_dim());
        for term in &self.terms {
            if let Target::ControlMatrix { k, j } = term.target {
                let at = (k * m + j) * n;
                term.add_gradient(x, 1.0, &mut out[at..at + n]);
            }
        }
        true
    }
    fn state_cost_gradient(&self, t: f64, x: &[f64], out: &mut [f64]) -> bool {
        if !self.base.state_cost_gradient(t, x, out) {
            return false;
        }
        for term in self.terms_for(|t| t == Target::StateCost) {
            term.add_gradient(x, 1.0, out);
        }
        true
    }
    fn control_cost_jacobian(&self, t: f64, x: &[f64], out: &mut [f64]) -> bool {
        if !self.base.control_cost_jacobian(t, x, out) {
            return false;
        }
        let n = self.state_dim();
        for term in &self.terms {
            if let Target::ControlCost { j } = term.target {
                term.add_gradient(x, 1.0, &mut out[j * n..(j + 1) * n]);
            }
        }
        true
    }
    fn state_cost_hessian(&self, t: f64, x: &[f64], out: &mut [f64]) -> bool {
        if !self.base.state_cost_hessian(t, x, out) {
            return false;
        }
        for term in self.terms_for(|t| t == Target::StateCost) {
            term.add_hessian(x, 1.0, out);
        }
        true
    }
    fn control_cost_hessian(&self, t: f64, x: &[f64], u: &[f64], out: &mut [f64]) -> bool {
        if !self.base.control_cost_hessian(t, x, u, out) {
            return false;
        }
        for term in &self.terms {
            if let Target::ControlCost { j } = term.target {
                term.add_hessian(x, u[j], out);
            }
        }
        true
    }
    fn dynamics_hessian(&self, t: f64, x: &[f64], p: &[f64], u: &[f64], out: &mut [f64]) -> bool {
        if !self.base.dynamics_hessian(t, x, p, u, out) {
            return false;
        }
        for term in &self.terms {
            match term.target {
                Target::Drift { k } => term.add_hessian(x, p[k], out),
                Target::ControlMatrix { k, j } => term.add_hessian(x, p[k] * u[j], out),
                _ => {}
            }
        }
        true
    }
}

/// Lattice points of `B(0; radius) ⊂ ℝⁿ`, `LATTICE_POINTS` per axis.
fn lattice(n: usize, radius: f64) -> Result<Vec<Vec<f64>>> {
    if n > 3 {
        return Err(Error::Precondition("budget lattice supports state dimension at most 3"));
    }
    let axis: Vec<f64> = (0..LATTICE_POINTS)
        .map(|i| -radius + 2.0 * radius * i as f64 / (LATTICE_POINTS - 1) as f64)
        .collect();
    let total = LATTICE_POINTS.pow(n as u32);
    let mut points = Vec::new();
    let mut x = vec![0.0; n];
    for mut idx in 0..total {
        for v in x.iter_mut() {
            *v = axis[idx % LATTICE_POINTS];
            idx /= LATTICE_POINTS;
        }
        if norm2(&x) <= radius * (1.0 + 1e-12) {
            points.push(x.clone());
        }
    }
    Ok(points)
}

/// `(‖δf‖₁,∞, ‖δg‖₁,∞)` of a set of terms over the lattice and the vertices of `U`.
fn budget_norms(terms: &[Term], n: usize, m: usize, points: &[Vec<f64>], set: &Polytope) -> (f64, f64) {
    let (mut fv, mut fd, mut gv, mut gd) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let mut df = vec![0.0; n];
    let mut dfx = vec![0.0; n * n];
    let mut dfu = vec![0.0; n * m];
    let mut dgx = vec![0.0; n];
    let mut dgu = vec![0.0; m];
    for x in points {
        dfu.iter_mut().for_each(|v| *v = 0.0);
        dgu.iter_mut().for_each(|v| *v = 0.0);
        for term in terms {
            match term.target {
                Target::ControlMatrix { k, j } => dfu[k * m + j] += term.value(x),
                Target::ControlCost { j } => dgu[j] += term.value(x),
                _ => {}
            }
        }
        let fu: f64 = dfu.iter().map(|v| fabs(*v)).sum();
        let gu: f64 = dgu.iter().map(|v| fabs(*v)).sum();
        for u in set.vertices() {
            df.iter_mut().for_each(|v| *v = 0.0);
            dfx.iter_mut().for_each(|v| *v = 0.0);
            dgx.iter_mut().for_each(|v| *v = 0.0);
            let mut dg = 0.0;
            for term in terms {
                match term.target {
                    Target::Drift { k } => {
                        df[k] += term.value(x);
                        term.add_gradient(x, 1.0, &mut dfx[k * n..(k + 1) * n]);
                    }
                    Target::ControlMatrix { k, j } => {
                        df[k] += term.value(x) * u[j];
                        term.add_gradient(x, u[j], &mut dfx[k * n..(k + 1) * n]);
                    }
                    Target::StateCost => {
                        dg += term.value(x);
                        term.add_gradient(x, 1.0, &mut dgx);
                    }
                    Target::ControlCost { j } => {
                        dg += term.value(x) * u[j];
                        term.add_gradient(x, u[j], &mut dgx);
                    }
                }
            }
            fv = fv.max(df.iter().map(|v| fabs(*v)).sum());
            fd = fd.max(dfx.iter().map(|v| fabs(*v)).sum::<f64>() + fu);
            gv = gv.max(fabs(dg));
            gd = gd.max(dgx.iter().map(|v| fabs(*v)).sum::<f64>() + gu);
        }
    }
    (fv + fd, gv + gd)
}

/// Recomputes the lattice budget of a member; the hard membership check.
pub fn measure_budget(member: &PerturbedProblem) -> Result<(f64, f64)> {
    let base = &member.base;
    let points = lattice(base.state_dim(), base.trajectory_bound())?;
    Ok(budget_norms(
        &member.terms,
        base.state_dim(),
        base.control_dim(),
        &points,
        base.control_set(),
    ))
}

/// `count` members of `ℋ_ρ` around a time-invariant base problem,
/// deterministic in `seed`. Member `i` draws from its own random stream.
pub fn sample_family(problem: Arc<dyn ControlAffineProblem>, spec: &PerturbationSpec) -> Result<Vec<PerturbedProblem>> {
    if !problem.is_time_invariant() {
        return Err(Error::Precondition(
            "perturbation families need a time-invariant base problem",
        ));
    }
    let (n, m) = (problem.state_dim(), problem.control_dim());
    spec.validate(n, m)?;
    if spec.rho == 0.0 {
        return Ok((0..spec.count)
            .map(|i| PerturbedProblem::unperturbed(problem.clone(), i))
            .collect());
    }
    let want_f = spec.split > 0.0;
    let want_g = spec.split < 1.0;
    for (want, dynamics, name) in [(want_f, true, "f"), (want_g, false, "g")] {
        if want && !spec.basis.iter().any(|g| g.target.in_dynamics() == dynamics) {
            return Err(Error::Generation {
                term: String::from(name),
                reason: "budget share is positive but the basis has no generator for it",
            });
        }
    }
    let points = lattice(n, problem.trajectory_bound())?;
    let set = problem.control_set();
    let mut family = Vec::with_capacity(spec.count);
    for index in 0..spec.count {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(index as u64);
        let mut terms: Vec<Term> = spec
            .basis
            .iter()
            .map(|g| {
                let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
                Term {
                    target: g.target,
                    amplitude: sign * rng.gen_range(0.5..=1.0),
                    frequency: (0..n).map(|_| g.max_frequency * rng.gen_range(-1.0..=1.0)).collect(),
                    phase: rng.gen_range(0.0..2.0 * PI),
                }
            })
            .collect();
        let target = rng.gen_range(0.5..=0.95) * spec.rho;
        for (share, dynamics) in [(spec.split, true), (1.0 - spec.split, false)] {
            let part: Vec<Term> = terms
                .iter()
                .filter(|t| t.target.in_dynamics() == dynamics)
                .cloned()
                .collect();
            if part.is_empty() {
                continue;
            }
            let (nf, ng) = budget_norms(&part, n, m, &points, set);
            let norm = if dynamics { nf } else { ng };
            let scale = if share == 0.0 {
                0.0
            } else if norm > 0.0 && norm.is_finite() {
                share * target / norm
            } else {
                return Err(Error::Generation {
                    term: part[0].target.label(),
                    reason: "term has zero or non-finite norm on the domain",
                });
            };
            for t in terms.iter_mut().filter(|t| t.target.in_dynamics() == dynamics) {
                t.amplitude *= scale;
                if !t.amplitude.is_finite() {
                    return Err(Error::Generation {
                        term: t.target.label(),
                        reason: "scaled amplitude is not finite",
                    });
                }
            }
        }
        terms.retain(|t| t.amplitude != 0.0);
        let (mut nf, mut ng) = budget_norms(&terms, n, m, &points, set);
        if nf + ng > spec.rho {
            let shrink = spec.rho / (nf + ng) * (1.0 - 1e-12);
            terms.iter_mut().for_each(|t| t.amplitude *= shrink);
            (nf, ng) = budget_norms(&terms, n, m, &points, set);
        }
        if nf + ng > spec.rho {
            return Err(Error::Generation {
                term: terms.first().map_or_else(|| String::from("f"), |t| t.target.label()),
                reason: "member exceeds the budget after rescaling",
            });
        }
        family.push(PerturbedProblem {
            base: problem.clone(),
            terms,
            index,
            norm_f: nf,
            norm_g: ng,
        });
    }
    Ok(family)
}

/// A problem's own continuous solution: the switching structure of a fine
/// sweep, switch times refined by Newton on `⟨σ(τ_k), v_{k+1} − v_k⟩ = 0`,
/// then [`reference_solve`] with those breakpoints.
pub fn fine_reference<P: ControlAffineProblem + ?Sized>(
    problem: &P,
    steps: usize,
    config: &SweepConfig,
) -> Result<DenseSolution> {
    let grid = Grid::new(steps, problem.horizon())?;
    let sol = sweep_solve(problem, grid, config, None)?;
    if !sol.converged {
        return Err(Error::NoConvergence {
            what: "fine-grid sweep",
            iterations: sol.iterations,
        });
    }
    let u = &sol.triple.control;
    let mut times = Vec::new();
    let mut values = vec![u.at(0).to_vec()];
    for i in 1..u.len() {
        if u.at(i) != u.at(i - 1) {
            times.push(grid.node(i));
            values.push(u.at(i).to_vec());
        }
    }
    let spu = (steps as f64 / problem.horizon()) as usize;
    let build = |times: &[f64]| PiecewiseControl {
        start: 0.0,
        end: problem.horizon(),
        breakpoints: times.to_vec(),
        values: values.clone(),
    };
    if !times.is_empty() && times.len() <= 32 && sol.unrounded.is_empty() {
        if let Some(refined) = refine_switches(problem, &times, &values, spu, grid.step()) {
            times = refined;
        }
    }
    reference_solve(problem, &build(&times), spu)
}

fn switch_residuals<P: ControlAffineProblem + ?Sized>(
    problem: &P,
    times: &[f64],
    values: &[Vec<f64>],
    spu: usize,
) -> Option<Vec<f64>> {
    let control = PiecewiseControl {
        start: 0.0,
        end: problem.horizon(),
        breakpoints: times.to_vec(),
        values: values.to_vec(),
    };
    let sol = reference_solve(problem, &control, spu).ok()?;
    let (n, m) = (problem.state_dim(), problem.control_dim());
    let (mut x, mut p, mut s) = (vec![0.0; n], vec![0.0; n], vec![0.0; m]);
    let mut r = Vec::with_capacity(times.len());
    for (k, &t) in times.iter().enumerate() {
        sol.state(t, &mut x);
        sol.costate(t, &mut p);
        problem.switching_function(t, &x, &p, &mut s);
        let e: Vec<f64> = values[k + 1].iter().zip(&values[k]).map(|(a, b)| a - b).collect();
        r.push(dot(&s, &e));
    }
    Some(r)
}

fn refine_switches<P: ControlAffineProblem + ?Sized>(
    problem: &P,
    guess: &[f64],
    values: &[Vec<f64>],
    spu: usize,
    h: f64,
) -> Option<Vec<f64>> {
    let k = guess.len();
    let ordered = |t: &[f64]| {
        let mut prev = 0.0;
        t.iter().chain(core::iter::once(&problem.horizon())).all(|&b| {
            let ok = b > prev;
            prev = b;
            ok
        })
    };
    let mut t = guess.to_vec();
    let mut r = switch_residuals(problem, &t, values, spu)?;
    let eps = 1e-7;
    for _ in 0..30 {
        let mut jac = vec![0.0; k * k];
        for c in 0..k {
            let mut tp = t.clone();
            tp[c] += eps;
            if !ordered(&tp) {
                return None;
            }
            let rp = switch_residuals(problem, &tp, values, spu)?;
            for row in 0..k {
                jac[row * k + c] = (rp[row] - r[row]) / eps;
            }
        }
        let mut step = r.clone();
        if !crate::math::solve_dense(&mut jac, &mut step, k) {
            return None;
        }
        let next: Vec<f64> = t.iter().zip(&step).map(|(a, d)| a - d).collect();
        if !ordered(&next) {
            return None;
        }
        let done = step.iter().all(|d| fabs(*d) < 1e-13);
        t = next;
        r = switch_residuals(problem, &t, values, spu)?;
        if done {
            break;
        }
    }
    // the refined structure must be the one the grid saw
    if t.iter().zip(guess).any(|(a, b)| fabs(a - b) > 4.0 * h) || r.iter().any(|v| !(fabs(*v) < 1e-8)) {
        return None;
    }
    Some(t)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StudyConfig {
    pub sweep: SweepConfig,
    /// Member references use `ref_factor · max N` steps.
    pub ref_factor: usize,
    /// Radius `a` of the ball monitor.
    pub ball_radius: f64,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            sweep: SweepConfig::default(),
            ref_factor: 16,
            ball_radius: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MemberReport {
    pub index: usize,
    pub budget: f64,
    pub table: Option<ConvergenceTable>,
    /// `max_rows err_total / h`.
    pub c_pi: Option<f64>,
    /// `d_Y` from the member's reference to the base reference.
    pub distance_to_base: Option<f64>,
    /// Every row's error is within the ball radius.
    pub in_ball: bool,
    pub failure: Option<Error>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FamilySummary {
    pub c_max: Option<f64>,
    pub c_min: Option<f64>,
    pub c_median: Option<f64>,
    /// `c_max / c_min`.
    pub spread: Option<f64>,
    pub distance_median: Option<f64>,
    pub failed: Vec<usize>,
    pub outside_ball: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FamilyReport {
    pub rho: f64,
    pub seed: u64,
    pub n_list: Vec<usize>,
    pub members: Vec<MemberReport>,
    pub summary: FamilySummary,
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let k = v.len();
    Some(if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    })
}

impl FamilyReport {
    /// Reduces member reports, ordered by member index.
    pub fn from_members(rho: f64, seed: u64, n_list: &[usize], mut members: Vec<MemberReport>) -> Self {
        members.sort_by_key(|m| m.index);
        let cs: Vec<f64> = members.iter().filter_map(|m| m.c_pi).collect();
        let c_max = cs.iter().copied().reduce(f64::max);
        let c_min = cs.iter().copied().reduce(f64::min);
        let summary = FamilySummary {
            c_max,
            c_min,
            c_median: median(cs.clone()),
            spread: c_max.zip(c_min).map(|(a, b)| a / b),
            distance_median: median(members.iter().filter_map(|m| m.distance_to_base).collect()),
            failed: members
                .iter()
                .filter(|m| m.failure.is_some())
                .map(|m| m.index)
                .collect(),
            outside_ball: members
                .iter()
                .filter(|m| m.failure.is_none() && !m.in_ball)
                .map(|m| m.index)
                .collect(),
        };
        Self {
            rho,
            seed,
            n_list: n_list.to_vec(),
            members,
            summary,
        }
    }
}

fn check_n_list(n_list: &[usize]) -> Result<usize> {
    if n_list.is_empty() || n_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Precondition("N list must be nonempty and strictly increasing"));
    }
    Ok(n_list[n_list.len() - 1])
}

/// Convergence table, `C_π` and distance to the base for one member.
/// Failures are recorded in the report rather than returned.
pub fn member_report<O: ContinuousTriple + ?Sized>(
    member: &PerturbedProblem,
    base_reference: &O,
    n_list: &[usize],
    config: &StudyConfig,
) -> MemberReport {
    let mut report = MemberReport {
        index: member.index,
        budget: member.norm_f + member.norm_g,
        table: None,
        c_pi: None,
        distance_to_base: None,
        in_ball: false,
        failure: None,
    };
    let run = || -> Result<(ConvergenceTable, f64)> {
        let max_n = check_n_list(n_list)?;
        let reference = fine_reference(member, config.ref_factor.max(1) * max_n, &config.sweep)?;
        let table = convergence_study(member, &reference, n_list, &config.sweep)?;
        let d = distance_y(&reference, &AsDyn(base_reference), max_n).total();
        Ok((table, d))
    };
    match run() {
        Ok((table, d)) => {
            if let Some(i) = table.rows.iter().position(|r| !r.converged) {
                report.failure = Some(Error::NoConvergence {
                    what: "member sweep",
                    iterations: table.rows[i].iterations,
                });
            } else {
                report.c_pi = Some(table.max_constant());
            }
            report.in_ball = table.rows.iter().all(|r| r.err_total <= config.ball_radius);
            report.distance_to_base = Some(d);
            report.table = Some(table);
        }
        Err(e) => report.failure = Some(e),
    }
    report
}

/// Samples the family and runs [`member_report`] for each member in order.
/// Without a base reference one is computed with [`fine_reference`].
pub fn uniform_study(
    problem: Arc<dyn ControlAffineProblem>,
    base_reference: Option<&dyn ContinuousTriple>,
    spec: &PerturbationSpec,
    n_list: &[usize],
    config: &StudyConfig,
) -> Result<FamilyReport> {
    let max_n = check_n_list(n_list)?;
    let family = sample_family(problem.clone(), spec)?;
    let owned;
    let base: &dyn ContinuousTriple = match base_reference {
        Some(b) => b,
        None => {
            owned = fine_reference(&*problem, config.ref_factor.max(1) * max_n, &config.sweep)?;
            &owned
        }
    };
    let members = family.iter().map(|m| member_report(m, base, n_list, config)).collect();
    Ok(FamilyReport::from_members(spec.rho, spec.seed, n_list, members))
}
