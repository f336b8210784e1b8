use alloc::vec;
use alloc::vec::Vec;

use crate::math::{abs_linear_integral, fabs, floor, norm1};
use crate::{Error, Result};

/// Uniform grid `t_i = i·T/N`, `i = 0..=N`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid {
    steps: usize,
    horizon: f64,
}

impl Grid {
    pub fn new(steps: usize, horizon: f64) -> Result<Self> {
        if steps == 0 {
            return Err(Error::InvalidParameter {
                name: "N",
                constraint: "N must be ≥ 1",
                value: 0.0,
            });
        }
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::InvalidParameter {
                name: "T",
                constraint: "T > 0",
                value: horizon,
            });
        }
        Ok(Self { steps, horizon })
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn step(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    /// Node `t_i`, computed as `i·T/N` (never accumulated); `t_N = T`.
    pub fn node(&self, i: usize) -> f64 {
        if i >= self.steps {
            self.horizon
        } else {
            i as f64 * self.horizon / self.steps as f64
        }
    }

    /// Index of the half-open cell `[t_i, t_{i+1})` containing `t`; the
    /// right end `T` belongs to the last cell.
    pub fn cell_of(&self, t: f64) -> usize {
        let raw = floor(t / self.step());
        let mut i = if raw <= 0.0 { 0 } else { raw as usize };
        if i >= self.steps {
            i = self.steps - 1;
        }
        // guard against rounding at cell boundaries
        if t < self.node(i) && i > 0 {
            i -= 1;
        } else if i + 1 < self.steps && t >= self.node(i + 1) {
            i += 1;
        }
        i
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.steps).map(move |i| self.node(i))
    }
}

/// How values between nodes are reconstructed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Interpolation {
    /// One value per cell, held on `[t_i, t_{i+1})` (controls).
    PiecewiseConstant,
    /// One value per node, linear in between (states, costates).
    PiecewiseLinear,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NormKind {
    L1,
    Linf,
    W11,
}

/// Vector-valued function on a uniform grid.
#[derive(Clone, Debug, PartialEq)]
pub struct GridFunction {
    grid: Grid,
    dim: usize,
    interpolation: Interpolation,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: Grid, dim: usize, interpolation: Interpolation, values: Vec<f64>) -> Result<Self> {
        let count = match interpolation {
            Interpolation::PiecewiseConstant => grid.steps(),
            Interpolation::PiecewiseLinear => grid.steps() + 1,
        };
        if values.len() != count * dim {
            return Err(Error::Dimension {
                what: "grid function values",
                expected: count * dim,
                found: values.len(),
            });
        }
        Ok(Self {
            grid,
            dim,
            interpolation,
            values,
        })
    }

    pub fn linear(grid: Grid, dim: usize, values: Vec<f64>) -> Result<Self> {
        Self::new(grid, dim, Interpolation::PiecewiseLinear, values)
    }

    pub fn constant(grid: Grid, dim: usize, values: Vec<f64>) -> Result<Self> {
        Self::new(grid, dim, Interpolation::PiecewiseConstant, values)
    }

    pub fn zeros(grid: Grid, dim: usize, interpolation: Interpolation) -> Self {
        let count = match interpolation {
            Interpolation::PiecewiseConstant => grid.steps(),
            Interpolation::PiecewiseLinear => grid.steps() + 1,
        };
        Self {
            grid,
            dim,
            interpolation,
            values: vec![0.0; count * dim],
        }
    }

    /// Samples `f` at the nodes (linear) or at the left cell ends (constant).
    pub fn from_fn<F: FnMut(f64, &mut [f64])>(grid: Grid, dim: usize, interpolation: Interpolation, mut f: F) -> Self {
        let mut out = Self::zeros(grid, dim, interpolation);
        for i in 0..out.len() {
            let t = grid.node(i);
            f(t, out.at_mut(i));
        }
        out
    }

    /// Every cell holds the same value.
    pub fn uniform(grid: Grid, interpolation: Interpolation, value: &[f64]) -> Self {
        Self::from_fn(grid, value.len(), interpolation, |_, out| out.copy_from_slice(value))
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn interpolation(&self) -> Interpolation {
        self.interpolation
    }

    /// Number of stored samples (`N` or `N + 1`).
    pub fn len(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn at(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn at_mut(&mut self, i: usize) -> &mut [f64] {
        let d = self.dim;
        &mut self.values[i * d..(i + 1) * d]
    }

    /// Value inside cell `i` at local fraction `s ∈ [0, 1]`.
    pub fn eval_in_cell(&self, i: usize, s: f64, out: &mut [f64]) {
        match self.interpolation {
            Interpolation::PiecewiseConstant => out.copy_from_slice(self.at(i)),
            Interpolation::PiecewiseLinear => {
                let (a, b) = (self.at(i), self.at(i + 1));
                // exact at the nodes
                if s == 0.0 {
                    out.copy_from_slice(a);
                    return;
                }
                if s == 1.0 {
                    out.copy_from_slice(b);
                    return;
                }
                for k in 0..self.dim {
                    out[k] = a[k] + s * (b[k] - a[k]);
                }
            }
        }
    }

    pub fn eval(&self, t: f64, out: &mut [f64]) {
        let i = self.grid.cell_of(t);
        let h = self.grid.step();
        let s = if t == self.grid.node(i + 1) {
            1.0
        } else {
            (t - self.grid.node(i)) / h
        };
        self.eval_in_cell(i, s, out);
    }

    /// Derivative on cell `i` of the piecewise-linear interpolant.
    pub fn cell_slope(&self, i: usize, out: &mut [f64]) {
        match self.interpolation {
            Interpolation::PiecewiseConstant => out.iter_mut().for_each(|o| *o = 0.0),
            Interpolation::PiecewiseLinear => {
                let h = self.grid.step();
                let (a, b) = (self.at(i), self.at(i + 1));
                for k in 0..self.dim {
                    out[k] = (b[k] - a[k]) / h;
                }
            }
        }
    }

    fn check_compatible(&self, other: &Self) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        if self.dim != other.dim || self.interpolation != other.interpolation {
            return Err(Error::Dimension {
                what: "grid function operands",
                expected: self.dim,
                found: other.dim,
            });
        }
        Ok(())
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_compatible(other)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
        Ok(Self { values, ..self.clone() })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_compatible(other)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect();
        Ok(Self { values, ..self.clone() })
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            values: self.values.iter().map(|v| c * v).collect(),
            ..self.clone()
        }
    }

    /// Norm of the interpolant; the pointwise norm in ℝⁿ is the ℓ¹ norm.
    ///
    /// `L1` integrates the interpolant exactly, `Linf` is the maximum over
    /// samples, `W11` adds the exact `L1` norm of the derivative. `W11` of a
    /// piecewise-constant function is undefined and rejected.
    pub fn norm(&self, kind: NormKind) -> Result<f64> {
        let h = self.grid.step();
        match (kind, self.interpolation) {
            (NormKind::Linf, _) => Ok((0..self.len()).map(|i| norm1(self.at(i))).fold(0.0, f64::max)),
            (NormKind::L1, Interpolation::PiecewiseConstant) => {
                Ok((0..self.len()).map(|i| h * norm1(self.at(i))).sum())
            }
            (NormKind::L1, Interpolation::PiecewiseLinear) => Ok(self.l1_linear()),
            (NormKind::W11, Interpolation::PiecewiseLinear) => {
                let mut deriv = 0.0;
                for i in 0..self.grid.steps() {
                    let (a, b) = (self.at(i), self.at(i + 1));
                    deriv += a.iter().zip(b).map(|(x, y)| fabs(y - x)).sum::<f64>();
                }
                Ok(self.l1_linear() + deriv)
            }
            (NormKind::W11, Interpolation::PiecewiseConstant) => {
                Err(Error::Precondition("W11 norm needs a piecewise-linear function"))
            }
        }
    }

    fn l1_linear(&self) -> f64 {
        let h = self.grid.step();
        let mut total = 0.0;
        for i in 0..self.grid.steps() {
            let (a, b) = (self.at(i), self.at(i + 1));
            for k in 0..self.dim {
                total += abs_linear_integral(a[k], b[k], h);
            }
        }
        total
    }

    /// Norm of `self − other`.
    pub fn distance(&self, other: &Self, kind: NormKind) -> Result<f64> {
        self.sub(other)?.norm(kind)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_grid(n: usize) -> Grid {
        Grid::new(n, 1.0).unwrap()
    }

    #[test]
    fn last_node_is_horizon_exactly() {
        let g = Grid::new(3, 0.1).unwrap();
        assert_eq!(g.node(3), 0.1);
        assert_eq!(g.node(1), 0.1 / 3.0);
    }

    #[test]
    fn zero_steps_rejected() {
        let err = Grid::new(0, 1.0).unwrap_err();
        assert!(alloc::format!("{err}").contains("N must be ≥ 1"));
    }

    #[test]
    fn cell_of_is_half_open() {
        let g = unit_grid(2);
        assert_eq!(g.cell_of(0.49), 0);
        assert_eq!(g.cell_of(0.5), 1);
        assert_eq!(g.cell_of(1.0), 1);
    }

    #[test]
    fn identity_norms() {
        let g = unit_grid(8);
        let x = GridFunction::from_fn(g, 1, Interpolation::PiecewiseLinear, |t, o| o[0] = t);
        assert!((x.norm(NormKind::L1).unwrap() - 0.5).abs() < 1e-15);
        assert!((x.norm(NormKind::W11).unwrap() - 1.5).abs() < 1e-15);
        assert_eq!(x.norm(NormKind::Linf).unwrap(), 1.0);
    }

    #[test]
    fn constant_control_norm() {
        let g = Grid::new(5, 2.0).unwrap();
        let u = GridFunction::uniform(g, Interpolation::PiecewiseConstant, &[-0.75]);
        assert!((u.norm(NormKind::L1).unwrap() - 1.5).abs() < 1e-15);
        assert!(u.norm(NormKind::W11).is_err());
    }

    #[test]
    fn single_cell_gap() {
        let g = unit_grid(10);
        let a = GridFunction::uniform(g, Interpolation::PiecewiseConstant, &[1.0]);
        let mut b = a.clone();
        b.at_mut(3)[0] = 0.0;
        assert!((a.distance(&b, NormKind::L1).unwrap() - g.step()).abs() < 1e-15);
    }

    #[test]
    fn mixed_grids_rejected() {
        let a = GridFunction::zeros(unit_grid(4), 1, Interpolation::PiecewiseLinear);
        let b = GridFunction::zeros(unit_grid(8), 1, Interpolation::PiecewiseLinear);
        assert_eq!(a.distance(&b, NormKind::L1), Err(Error::GridMismatch));
    }

    #[test]
    fn eval_linear_midpoint() {
        let g = unit_grid(1);
        let x = GridFunction::linear(g, 1, vec![0.0, 1.0]).unwrap();
        let mut o = [0.0];
        x.eval(0.5, &mut o);
        assert_eq!(o[0], 0.5);
    }
}
