//! Deterministic integration utilities shared by the kernel and valuation
//! code: exact interval integrals of piecewise-constant curves, the nested
//! exponential-weighted tail integral behind the kernel closed forms, a
//! composite-Simpson cross-check, and finite differences for residual tests.

use crate::error::{AlmError, Result};
use crate::market::CoefficientCurve;

/// Exponent threshold below which the exponential interval weight switches
/// to its linear limit, avoiding 0/0 when an exponent vanishes exactly
/// (e.g. a flat-rate model with `r = alpha`).
pub const NEAR_ZERO_EXPONENT: f64 = 1e-12;

/// Simpson panels per coefficient interval used by the quadrature oracle.
pub const ORACLE_PANELS_PER_INTERVAL: usize = 2048;

/// An ascending grid of times covering `[a, b]`, including any coefficient
/// breakpoints handed to the constructor.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    nodes: Vec<f64>,
}

impl TimeGrid {
    /// Uniform grid with `n` nodes on `[a, b]`.
    pub fn uniform(a: f64, b: f64, n: usize) -> Result<Self> {
        Self::refined(a, b, n, &[])
    }

    /// Uniform grid on `[a, b]` augmented with every entry of `extra`
    /// lying strictly inside the span.
    pub fn refined(a: f64, b: f64, n: usize, extra: &[f64]) -> Result<Self> {
        if n < 2 || !(b > a) {
            return Err(AlmError::InvalidConfig(format!(
                "grid needs n >= 2 nodes and b > a, got n = {n}, [{a}, {b}]"
            )));
        }
        let mut nodes: Vec<f64> = (0..n)
            .map(|i| a + (b - a) * i as f64 / (n - 1) as f64)
            .collect();
        nodes[n - 1] = b;
        nodes.extend(extra.iter().copied().filter(|&x| x > a && x < b));
        nodes.sort_by(|x, y| x.partial_cmp(y).unwrap());
        let tol = 1e-12 * (b - a);
        nodes.dedup_by(|x, y| (*x - *y).abs() <= tol);
        Ok(Self { nodes })
    }

    /// Grid from explicit nodes; must be strictly increasing with at least two.
    pub fn from_nodes(nodes: Vec<f64>) -> Result<Self> {
        if nodes.len() < 2 || nodes.windows(2).any(|w| w[1] <= w[0]) {
            return Err(AlmError::InvalidConfig(
                "grid nodes must be strictly increasing with at least two entries".into(),
            ));
        }
        Ok(Self { nodes })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn span(&self) -> (f64, f64) {
        (self.nodes[0], *self.nodes.last().unwrap())
    }

    /// True if every entry of `times` coincides with some node to within
    /// `1e-12` of the span.
    pub fn covers(&self, times: &[f64]) -> bool {
        let (a, b) = self.span();
        let tol = 1e-12 * (b - a);
        times
            .iter()
            .filter(|&&t| t > a && t < b)
            .all(|&t| match self.nodes.partition_point(|&x| x < t) {
                i if i < self.nodes.len() && (self.nodes[i] - t).abs() <= tol => true,
                i if i > 0 && (self.nodes[i - 1] - t).abs() <= tol => true,
                _ => false,
            })
    }
}

/// Integrates `f` over `[a, b]` with one Simpson panel per grid segment.
///
/// For a piecewise-constant integrand whose breakpoints appear in the grid
/// the result is exact up to round-off; otherwise the error is `O(h^4)`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, grid: &TimeGrid) -> Result<f64> {
    if a > b {
        return Err(AlmError::BadInterval { a, b });
    }
    let (lo, hi) = grid.span();
    if a < lo || b > hi {
        return Err(AlmError::TimeOutOfRange {
            t: if a < lo { a } else { b },
            lo,
            hi,
        });
    }
    if a == b {
        return Ok(0.0);
    }
    let mut sum = 0.0;
    let mut left = a;
    for &node in grid.nodes().iter() {
        if node <= a {
            continue;
        }
        let right = node.min(b);
        sum += simpson_panel(&f, left, right);
        left = right;
        if node >= b {
            break;
        }
    }
    if left < b {
        sum += simpson_panel(&f, left, b);
    }
    Ok(sum)
}

fn simpson_panel<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> f64 {
    let h = b - a;
    let m = 0.5 * (a + b);
    // Sample the right edge as a left limit: step discontinuities sit on
    // panel edges, and a right-continuous integrand evaluated exactly at
    // its jump would bleed the next interval's value into this panel.
    h / 6.0 * (f(a) + 4.0 * f(m) + f(b.next_down()))
}

/// Composite Simpson with `panels` equal panels on `[a, b]`; the plain
/// brute-force route used as an independent oracle.
pub fn integrate_simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, panels: usize) -> f64 {
    if a == b || panels == 0 {
        return 0.0;
    }
    // panel edges hit a and b exactly; rounded intermediate edges must not
    // drift past b, where a piecewise integrand jumps
    let edge = |i: usize| {
        if i == panels {
            b
        } else {
            a + (b - a) * i as f64 / panels as f64
        }
    };
    let mut sum = 0.0;
    for i in 0..panels {
        sum += simpson_panel(&f, edge(i), edge(i + 1));
    }
    sum
}

/// Exact integral of a piecewise-constant curve over `[a, b]`.
pub fn integrate_curve(c: &CoefficientCurve, a: f64, b: f64) -> Result<f64> {
    if a > b {
        return Err(AlmError::BadInterval { a, b });
    }
    let horizon = c.horizon();
    if a < 0.0 || b > horizon {
        return Err(AlmError::TimeOutOfRange {
            t: if a < 0.0 { a } else { b },
            lo: 0.0,
            hi: horizon,
        });
    }
    let edges = c.breakpoints();
    let values = c.values();
    let mut sum = 0.0;
    for (i, v) in values.iter().enumerate() {
        let lo = edges[i].max(a);
        let hi = edges[i + 1].min(b);
        if hi > lo {
            sum += v * (hi - lo);
        }
    }
    Ok(sum)
}

/// `exp(integral of c over [a, b])`, the growth/discount factor.
pub fn exp_integral(c: &CoefficientCurve, a: f64, b: f64) -> Result<f64> {
    Ok(integrate_curve(c, a, b)?.exp())
}

/// The nested tail integral
/// `int_s^T exp(int_z^s c(y) dy) g(z) dz`
/// evaluated interval-by-interval in closed form.
///
/// On an interval where `c` and `g` are the constants `c_j`, `g_j`, the
/// contribution is `g_j * e^{-A(z1)} * (1 - e^{-c_j w}) / c_j` with
/// `A(z) = int_s^z c dy` and `w` the interval width; when `|c_j|` falls
/// below [`NEAR_ZERO_EXPONENT`] the linear limit `g_j * e^{-A(z1)} * w`
/// is used instead.
pub fn weighted_tail_integral(
    c: &CoefficientCurve,
    g: &CoefficientCurve,
    s: f64,
    horizon: f64,
) -> Result<f64> {
    if s > horizon {
        return Err(AlmError::BadInterval { a: s, b: horizon });
    }
    // merged edges of both curves clipped to [s, horizon]
    let mut edges: Vec<f64> = c
        .breakpoints()
        .iter()
        .chain(g.breakpoints().iter())
        .copied()
        .filter(|&x| x > s && x < horizon)
        .collect();
    edges.push(s);
    edges.push(horizon);
    edges.sort_by(|a, b| a.partial_cmp(b).unwrap());
    edges.dedup();

    let mut sum = 0.0;
    let mut log_prefix = 0.0f64; // A(z1) = int_s^{z1} c dy
    for w in edges.windows(2) {
        let (z1, z2) = (w[0], w[1]);
        let width = z2 - z1;
        if width <= 0.0 {
            continue;
        }
        let mid = 0.5 * (z1 + z2);
        let cj = c.value_at(mid)?;
        let gj = g.value_at(mid)?;
        let prefix = (-log_prefix).exp();
        let factor = if cj.abs() < NEAR_ZERO_EXPONENT {
            width
        } else {
            -(-cj * width).exp_m1() / cj
        };
        sum += gj * prefix * factor;
        log_prefix += cj * width;
    }
    Ok(sum)
}

/// Central difference `(f(t + h) - f(t - h)) / (2h)`.
///
/// Errors if the stencil `(t - h, t + h)` strictly contains one of
/// `breakpoints`, where the differentiated function is only piecewise
/// smooth.
pub fn central_difference<F: Fn(f64) -> f64>(
    f: F,
    t: f64,
    h: f64,
    breakpoints: &[f64],
) -> Result<f64> {
    if !(h > 0.0) {
        return Err(AlmError::InvalidConfig(format!(
            "step must be positive, got {h}"
        )));
    }
    let (lo, hi) = (t - h, t + h);
    if let Some(&bp) = breakpoints.iter().find(|&&b| b > lo && b < hi) {
        return Err(AlmError::StencilStraddle {
            lo,
            hi,
            breakpoint: bp,
        });
    }
    Ok((f(hi) - f(lo)) / (2.0 * h))
}
