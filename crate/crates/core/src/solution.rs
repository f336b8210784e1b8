//! Continuous-time triples and the distance of the space `Y`.

use alloc::vec;
use alloc::vec::Vec;

use crate::integrate::{Grid, GridFunction, Interpolation};
use crate::math::{fabs, gauss5};
use crate::model::ExtremalTriple;
use crate::Result;

/// A triple `(x, p, u)` that can be evaluated at any time in `[0, T]`.
///
/// Rates are the derivatives of `x` and `p`; at a kink either one-sided value
/// may be returned. `breakpoints` lists the interior times where any of the
/// five functions fails to be smooth.
pub trait ContinuousTriple {
    fn horizon(&self) -> f64;
    fn state_dim(&self) -> usize;
    fn control_dim(&self) -> usize;
    fn state(&self, t: f64, out: &mut [f64]);
    fn state_rate(&self, t: f64, out: &mut [f64]);
    fn costate(&self, t: f64, out: &mut [f64]);
    fn costate_rate(&self, t: f64, out: &mut [f64]);
    fn control(&self, t: f64, out: &mut [f64]);
    fn breakpoints(&self) -> Vec<f64>;
}

impl ContinuousTriple for ExtremalTriple {
    fn horizon(&self) -> f64 {
        self.grid().horizon()
    }
    fn state_dim(&self) -> usize {
        self.state.dim()
    }
    fn control_dim(&self) -> usize {
        self.control.dim()
    }
    fn state(&self, t: f64, out: &mut [f64]) {
        self.state.eval(t, out)
    }
    fn state_rate(&self, t: f64, out: &mut [f64]) {
        self.state.cell_slope(self.grid().cell_of(t), out)
    }
    fn costate(&self, t: f64, out: &mut [f64]) {
        self.costate.eval(t, out)
    }
    fn costate_rate(&self, t: f64, out: &mut [f64]) {
        self.costate.cell_slope(self.grid().cell_of(t), out)
    }
    fn control(&self, t: f64, out: &mut [f64]) {
        debug_assert_eq!(self.control.interpolation(), Interpolation::PiecewiseConstant);
        self.control.eval(t, out)
    }
    fn breakpoints(&self) -> Vec<f64> {
        let g = self.grid();
        (1..g.steps()).map(|i| g.node(i)).collect()
    }
}

/// Lets a possibly unsized triple be passed where `&dyn ContinuousTriple` is needed.
pub(crate) struct AsDyn<'a, O: ?Sized>(pub &'a O);

impl<O: ContinuousTriple + ?Sized> ContinuousTriple for AsDyn<'_, O> {
    fn horizon(&self) -> f64 {
        self.0.horizon()
    }
    fn state_dim(&self) -> usize {
        self.0.state_dim()
    }
    fn control_dim(&self) -> usize {
        self.0.control_dim()
    }
    fn state(&self, t: f64, out: &mut [f64]) {
        self.0.state(t, out)
    }
    fn state_rate(&self, t: f64, out: &mut [f64]) {
        self.0.state_rate(t, out)
    }
    fn costate(&self, t: f64, out: &mut [f64]) {
        self.0.costate(t, out)
    }
    fn costate_rate(&self, t: f64, out: &mut [f64]) {
        self.0.costate_rate(t, out)
    }
    fn control(&self, t: f64, out: &mut [f64]) {
        self.0.control(t, out)
    }
    fn breakpoints(&self) -> Vec<f64> {
        self.0.breakpoints()
    }
}

/// Node values of `x` and `p`, and `u` at the left end of each cell.
pub fn sample_on_grid<O: ContinuousTriple + ?Sized>(triple: &O, grid: Grid) -> Result<ExtremalTriple> {
    let (n, m) = (triple.state_dim(), triple.control_dim());
    let x = GridFunction::from_fn(grid, n, Interpolation::PiecewiseLinear, |t, o| triple.state(t, o));
    let p = GridFunction::from_fn(grid, n, Interpolation::PiecewiseLinear, |t, o| triple.costate(t, o));
    let u = GridFunction::from_fn(grid, m, Interpolation::PiecewiseConstant, |t, o| triple.control(t, o));
    ExtremalTriple::new(x, p, u)
}

/// Components of `d_Y(a, b) = ‖x_a−x_b‖₁,₁ + ‖p_a−p_b‖₁,₁ + ‖u_a−u_b‖₁`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct YDistance {
    pub state_w11: f64,
    pub costate_w11: f64,
    pub control_l1: f64,
}

impl YDistance {
    pub fn total(&self) -> f64 {
        self.state_w11 + self.costate_w11 + self.control_l1
    }
}

/// Sorted panel boundaries: uniform panels plus both triples' breakpoints.
fn panels(a: &dyn ContinuousTriple, b: &dyn ContinuousTriple, min_panels: usize) -> Vec<f64> {
    let t_end = a.horizon();
    let k = min_panels.max(1);
    let mut cuts: Vec<f64> = (0..=k)
        .map(|i| if i == k { t_end } else { i as f64 * t_end / k as f64 })
        .collect();
    cuts.extend(a.breakpoints().into_iter().filter(|t| *t > 0.0 && *t < t_end));
    cuts.extend(b.breakpoints().into_iter().filter(|t| *t > 0.0 && *t < t_end));
    cuts.sort_by(|x, y| x.total_cmp(y));
    cuts.dedup_by(|x, y| fabs(*x - *y) <= 1e-15 * t_end.max(1.0));
    cuts
}

/// `∫_lo^hi Σ_k |d_k(t)| dt`, splitting the panel where a component changes sign.
fn abs_integral<F: FnMut(f64, &mut [f64])>(lo: f64, hi: f64, dim: usize, mut d: F) -> f64 {
    let mut da = vec![0.0; dim];
    let mut db = vec![0.0; dim];
    let mut dm = vec![0.0; dim];
    // probe just inside the panel so one-sided values are used
    let eps = (hi - lo) * 1e-12;
    d(lo + eps, &mut da);
    d(hi - eps, &mut db);
    let mut cuts = vec![lo, hi];
    for k in 0..dim {
        if da[k] * db[k] < 0.0 {
            let (mut a, mut b) = (lo, hi);
            let sa = da[k];
            for _ in 0..60 {
                let m = 0.5 * (a + b);
                d(m, &mut dm);
                if dm[k] * sa > 0.0 {
                    a = m;
                } else {
                    b = m;
                }
            }
            cuts.push(0.5 * (a + b));
        }
    }
    cuts.sort_by(|x, y| x.total_cmp(y));
    let mut total = 0.0;
    for w in cuts.windows(2) {
        total += gauss5(w[0], w[1], |t| {
            d(t, &mut dm);
            dm.iter().map(|v| fabs(*v)).sum()
        });
    }
    total
}

/// `d_Y(a, b)` by 5-point Gauss quadrature on panels split at the union of
/// both breakpoint sets and at sign changes of each component.
pub fn distance_y(a: &dyn ContinuousTriple, b: &dyn ContinuousTriple, min_panels: usize) -> YDistance {
    let n = a.state_dim();
    let m = a.control_dim();
    let cuts = panels(a, b, min_panels);
    let mut va = vec![0.0; n.max(m)];
    let mut vb = vec![0.0; n.max(m)];
    let mut out = YDistance::default();
    for w in cuts.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        if hi <= lo {
            continue;
        }
        let mut diff = |f: &dyn Fn(&dyn ContinuousTriple, f64, &mut [f64]), dim: usize| {
            abs_integral(lo, hi, dim, |t, o| {
                f(a, t, &mut va[..dim]);
                f(b, t, &mut vb[..dim]);
                for k in 0..dim {
                    o[k] = va[k] - vb[k];
                }
            })
        };
        out.state_w11 += diff(&|s, t, o| s.state(t, o), n) + diff(&|s, t, o| s.state_rate(t, o), n);
        out.costate_w11 += diff(&|s, t, o| s.costate(t, o), n) + diff(&|s, t, o| s.costate_rate(t, o), n);
        out.control_l1 += diff(&|s, t, o| s.control(t, o), m);
    }
    out
}
