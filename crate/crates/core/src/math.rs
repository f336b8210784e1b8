//! Small dense helpers and the libm shims the `no_std` build needs.

pub use libm::{ceil, cos, exp, fabs, floor, log, sin, sqrt};

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Sum of absolute values.
pub fn norm1(v: &[f64]) -> f64 {
    v.iter().map(|x| fabs(*x)).sum()
}

pub fn norm2(v: &[f64]) -> f64 {
    sqrt(dot(v, v))
}

pub fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| if fabs(*x) > m { fabs(*x) } else { m })
}

/// `out = m · v` for a row-major `rows × cols` matrix.
pub fn mat_vec(m: &[f64], rows: usize, cols: usize, v: &[f64], out: &mut [f64]) {
    for r in 0..rows {
        out[r] = dot(&m[r * cols..(r + 1) * cols], v);
    }
}

/// `out = mᵀ · v` for a row-major `rows × cols` matrix.
pub fn mat_t_vec(m: &[f64], rows: usize, cols: usize, v: &[f64], out: &mut [f64]) {
    for c in 0..cols {
        let mut acc = 0.0;
        for r in 0..rows {
            acc += m[r * cols + c] * v[r];
        }
        out[c] = acc;
    }
}

/// Five-point Gauss-Legendre rule on `[0, 1]`: `(node, weight)`.
pub const GAUSS5: [(f64, f64); 5] = [
    (0.046_910_077_030_668_004, 0.118_463_442_528_094_54),
    (0.230_765_344_947_158_45, 0.239_314_335_249_683_23),
    (0.5, 0.284_444_444_444_444_45),
    (0.769_234_655_052_841_6, 0.239_314_335_249_683_23),
    (0.953_089_922_969_332, 0.118_463_442_528_094_54),
];

/// Integrates `f` over `[lo, hi]` with the five-point Gauss rule.
pub fn gauss5<F: FnMut(f64) -> f64>(lo: f64, hi: f64, mut f: F) -> f64 {
    let len = hi - lo;
    if len == 0.0 {
        return 0.0;
    }
    GAUSS5.iter().map(|&(s, w)| w * f(lo + s * len)).sum::<f64>() * len
}

/// Exact `∫₀ʰ |a + (b − a) s/h| ds`.
pub fn abs_linear_integral(a: f64, b: f64, h: f64) -> f64 {
    if a * b >= 0.0 {
        0.5 * h * (fabs(a) + fabs(b))
    } else {
        0.5 * h * (a * a + b * b) / (fabs(a) + fabs(b))
    }
}

/// Least-squares slope and intercept of `ys` against `xs`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Option<(f64, f64)> {
    let n = xs.len();
    if n < 2 || ys.len() != n {
        return None;
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

/// Solves the dense system `a x = b` in place by Gaussian elimination with
/// partial pivoting. `a` is row-major `n × n`. Returns `false` if singular.
pub fn solve_dense(a: &mut [f64], b: &mut [f64], n: usize) -> bool {
    for col in 0..n {
        let mut piv = col;
        for r in col + 1..n {
            if fabs(a[r * n + col]) > fabs(a[piv * n + col]) {
                piv = r;
            }
        }
        if a[piv * n + col] == 0.0 {
            return false;
        }
        if piv != col {
            for c in 0..n {
                a.swap(col * n + c, piv * n + c);
            }
            b.swap(col, piv);
        }
        for r in col + 1..n {
            let factor = a[r * n + col] / a[col * n + col];
            if factor != 0.0 {
                for c in col..n {
                    a[r * n + c] -= factor * a[col * n + c];
                }
                b[r] -= factor * b[col];
            }
        }
    }
    for col in (0..n).rev() {
        let mut acc = b[col];
        for c in col + 1..n {
            acc -= a[col * n + c] * b[c];
        }
        b[col] = acc / a[col * n + col];
    }
    true
}
