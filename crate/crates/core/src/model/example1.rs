use alloc::vec::Vec;

use super::{pilot_bound, ControlAffineProblem, Polytope};
use crate::math::sqrt;
use crate::solution::ContinuousTriple;
use crate::{Error, Result};

/// `min ∫₀¹ [−(α/2)x² − βx + u] dt`, `ẋ = u`, `x(0) = 0`, `u ∈ [0, 1]`.
#[derive(Clone, Debug)]
pub struct Example1 {
    alpha: f64,
    beta: f64,
    x0: [f64; 1],
    set: Polytope,
    bound: f64,
}

fn check_params(alpha: f64, beta: f64) -> Result<()> {
    if !(alpha > 0.0) {
        return Err(Error::InvalidParameter {
            name: "alpha",
            constraint: "alpha > 0",
            value: alpha,
        });
    }
    if !(beta > 1.0) {
        return Err(Error::InvalidParameter {
            name: "beta",
            constraint: "beta > 1",
            value: beta,
        });
    }
    if !(2.0 * alpha <= beta) {
        return Err(Error::InvalidParameter {
            name: "alpha",
            constraint: "2*alpha <= beta",
            value: alpha,
        });
    }
    Ok(())
}

impl Example1 {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        check_params(alpha, beta)?;
        let mut p = Self {
            alpha,
            beta,
            x0: [0.0],
            set: Polytope::interval(0.0, 1.0)?,
            bound: f64::INFINITY,
        };
        p.bound = 2.0 * pilot_bound(&p, 1024);
        Ok(p)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn oracle(&self) -> Example1Oracle {
        Example1Oracle::new(self.alpha, self.beta).expect("parameters validated at construction")
    }
}

impl ControlAffineProblem for Example1 {
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
        &self.x0
    }
    fn control_set(&self) -> &Polytope {
        &self.set
    }
    fn trajectory_bound(&self) -> f64 {
        self.bound
    }
    fn is_time_invariant(&self) -> bool {
        true
    }
    fn drift(&self, _t: f64, _x: &[f64], out: &mut [f64]) {
        out[0] = 0.0;
    }
    fn control_matrix(&self, _t: f64, _x: &[f64], out: &mut [f64]) {
        out[0] = 1.0;
    }
    fn state_cost(&self, _t: f64, x: &[f64]) -> f64 {
        -0.5 * self.alpha * x[0] * x[0] - self.beta * x[0]
    }
    fn control_cost(&self, _t: f64, _x: &[f64], out: &mut [f64]) {
        out[0] = 1.0;
    }
    fn drift_jacobian(&self, _t: f64, _x: &[f64], out: &mut [f64]) -> bool {
        out[0] = 0.0;
        true
    }
    fn control_matrix_jacobian(&self, _t: f64, _x: &[f64], out: &mut [f64]) -> bool {
        out[0] = 0.0;
        true
    }
    fn state_cost_gradient(&self, _t: f64, x: &[f64], out: &mut [f64]) -> bool {
        out[0] = -self.alpha * x[0] - self.beta;
        true
    }
    fn control_cost_jacobian(&self, _t: f64, _x: &[f64], out: &mut [f64]) -> bool {
        out[0] = 0.0;
        true
    }
    fn state_cost_hessian(&self, _t: f64, _x: &[f64], out: &mut [f64]) -> bool {
        out[0] = -self.alpha;
        true
    }
    fn control_cost_hessian(&self, _t: f64, _x: &[f64], _u: &[f64], out: &mut [f64]) -> bool {
        out[0] = 0.0;
        true
    }
    fn dynamics_hessian(&self, _t: f64, _x: &[f64], _p: &[f64], _u: &[f64], out: &mut [f64]) -> bool {
        out[0] = 0.0;
        true
    }
}

/// Closed-form extremal of [`Example1`]: `û = 1` on `[0, τ]`, `0` after.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Example1Oracle {
    alpha: f64,
    beta: f64,
    tau: f64,
}

impl Example1Oracle {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        check_params(alpha, beta)?;
        let d = beta - alpha;
        let tau = (-d + sqrt(d * d + 4.0 * alpha * (beta - 1.0))) / (2.0 * alpha);
        Ok(Self { alpha, beta, tau })
    }

    pub fn switching_time(&self) -> f64 {
        self.tau
    }

    pub fn x(&self, t: f64) -> f64 {
        t.min(self.tau)
    }

    pub fn p(&self, t: f64) -> f64 {
        let (a, b, tau) = (self.alpha, self.beta, self.tau);
        if t <= tau {
            0.5 * a * (tau * tau + t * t) + b * t - a * tau - b
        } else {
            (t - 1.0) * (a * tau + b)
        }
    }

    pub fn p_rate(&self, t: f64) -> f64 {
        self.alpha * self.x(t) + self.beta
    }

    pub fn sigma(&self, t: f64) -> f64 {
        self.p(t) + 1.0
    }

    /// Slope of `σ̂` just after the switch, `ατ + β`.
    pub fn switching_slope(&self) -> f64 {
        self.alpha * self.tau + self.beta
    }

    pub fn u(&self, t: f64) -> f64 {
        if t <= self.tau {
            1.0
        } else {
            0.0
        }
    }
}

impl ContinuousTriple for Example1Oracle {
    fn horizon(&self) -> f64 {
        1.0
    }
    fn state_dim(&self) -> usize {
        1
    }
    fn control_dim(&self) -> usize {
        1
    }
    fn state(&self, t: f64, out: &mut [f64]) {
        out[0] = self.x(t);
    }
    fn state_rate(&self, t: f64, out: &mut [f64]) {
        out[0] = self.u(t);
    }
    fn costate(&self, t: f64, out: &mut [f64]) {
        out[0] = self.p(t);
    }
    fn costate_rate(&self, t: f64, out: &mut [f64]) {
        out[0] = self.p_rate(t);
    }
    fn control(&self, t: f64, out: &mut [f64]) {
        out[0] = self.u(t);
    }
    fn breakpoints(&self) -> Vec<f64> {
        alloc::vec![self.tau]
    }
}
