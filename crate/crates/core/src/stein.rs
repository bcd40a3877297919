//! Normal-approximation machinery: the Stein equation
//! `psi'(x) - x psi(x) = h(x) - E h(Y)` for 1-Lipschitz test functions, and
//! an exact one-dimensional Wasserstein distance between an empirical sample
//! and the standard normal.

use crate::stats::compensated_sum;
use statrs::distribution::{Continuous, ContinuousCDF, Normal};
use std::sync::OnceLock;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SteinError {
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("need at least {min} samples, got {got}")]
    TooFewSamples { min: usize, got: usize },
}

/// A Lipschitz test function together with its derivative and the locations
/// where the derivative jumps (quadrature panels are split there).
pub struct TestFunction {
    eval: Box<dyn Fn(f64) -> f64 + Send + Sync>,
    deriv: Box<dyn Fn(f64) -> f64 + Send + Sync>,
    kinks: Vec<f64>,
    lip: f64,
    pub description: String,
}

impl TestFunction {
    pub fn new(
        eval: impl Fn(f64) -> f64 + Send + Sync + 'static,
        deriv: impl Fn(f64) -> f64 + Send + Sync + 'static,
        lip: f64,
        description: impl Into<String>,
    ) -> Self {
        TestFunction {
            eval: Box::new(eval),
            deriv: Box::new(deriv),
            kinks: Vec::new(),
            lip,
            description: description.into(),
        }
    }

    /// h(x) = x.
    pub fn identity() -> Self {
        Self::new(|x| x, |_| 1.0, 1.0, "h(x) = x")
    }

    pub fn tanh() -> Self {
        Self::new(
            |x: f64| x.tanh(),
            |x: f64| 1.0 / x.cosh().powi(2),
            1.0,
            "h(x) = tanh(x)",
        )
    }

    /// Continuous piecewise-linear function: value `y0` at the first kink,
    /// slope `slopes[i]` between `kinks[i]` and `kinks[i+1]`, with
    /// `slopes[0]` extending left of the first kink and the last slope
    /// extending right of the last kink.
    pub fn piecewise_linear(kinks: Vec<f64>, slopes: Vec<f64>, y0: f64) -> Self {
        assert!(!kinks.is_empty());
        assert_eq!(slopes.len(), kinks.len() + 1);
        assert!(kinks.windows(2).all(|w| w[0] < w[1]));
        let lip = slopes.iter().fold(0.0f64, |m, s| m.max(s.abs()));
        // accumulate node values once
        let mut node_vals = vec![y0];
        for i in 1..kinks.len() {
            let v = node_vals[i - 1] + slopes[i] * (kinks[i] - kinks[i - 1]);
            node_vals.push(v);
        }
        let k = kinks.clone();
        let s = slopes.clone();
        let nv = node_vals.clone();
        let eval = move |x: f64| -> f64 {
            match k.partition_point(|&t| t <= x) {
                0 => nv[0] + s[0] * (x - k[0]),
                i => nv[i - 1] + s[i] * (x - k[i - 1]),
            }
        };
        let k2 = kinks.clone();
        let s2 = slopes.clone();
        let deriv = move |x: f64| -> f64 { s2[k2.partition_point(|&t| t <= x)] };
        TestFunction {
            eval: Box::new(eval),
            deriv: Box::new(deriv),
            kinks,
            lip,
            description: "piecewise linear".into(),
        }
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        (self.eval)(x)
    }

    #[inline]
    pub fn deriv(&self, x: f64) -> f64 {
        (self.deriv)(x)
    }

    pub fn kinks(&self) -> &[f64] {
        &self.kinks
    }

    pub fn lipschitz(&self) -> f64 {
        self.lip
    }
}

// ---------------------------------------------------------------------------
// Gauss-Legendre panel quadrature

const GL_POINTS: usize = 16;

fn gauss_legendre_16() -> &'static ([f64; GL_POINTS], [f64; GL_POINTS]) {
    static TABLE: OnceLock<([f64; GL_POINTS], [f64; GL_POINTS])> = OnceLock::new();
    TABLE.get_or_init(|| {
        // Newton iteration on the Legendre polynomial.
        let n = GL_POINTS;
        let mut nodes = [0.0; GL_POINTS];
        let mut weights = [0.0; GL_POINTS];
        for i in 0..n {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            for _ in 0..100 {
                let (p, dp) = legendre(n, x);
                let dx = p / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, dp) = legendre(n, x);
            nodes[i] = x;
            weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
        }
        (nodes, weights)
    })
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Integrate `f` over `[a, b]` splitting panels at the given breakpoints and
/// capping panel width, so integrands smooth between breakpoints are
/// resolved to machine precision.
fn panel_integrate(
    f: impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    breaks: &[f64],
    max_width: f64,
) -> f64 {
    if b <= a {
        return 0.0;
    }
    let mut edges = vec![a];
    let mut sorted: Vec<f64> = breaks.iter().copied().filter(|&t| t > a && t < b).collect();
    sorted.sort_by(|p, q| p.partial_cmp(q).unwrap());
    edges.extend(sorted);
    edges.push(b);
    let (nodes, weights) = gauss_legendre_16();
    let mut total = Vec::new();
    for w in edges.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let panels = ((hi - lo) / max_width).ceil().max(1.0) as usize;
        let step = (hi - lo) / panels as f64;
        for p in 0..panels {
            let pa = lo + step * p as f64;
            let half = 0.5 * step;
            let mid = pa + half;
            let mut s = 0.0;
            for i in 0..GL_POINTS {
                s += weights[i] * f(mid + half * nodes[i]);
            }
            total.push(s * half);
        }
    }
    compensated_sum(total)
}

// ---------------------------------------------------------------------------
// The Stein equation

/// Solution of the Stein equation sampled on a uniform grid over `[-T, T]`.
pub struct SteinSolution {
    pub grid: Vec<f64>,
    pub psi: Vec<f64>,
    pub psi_prime: Vec<f64>,
    pub psi_dprime: Vec<f64>,
    pub h_description: String,
    /// E h(Y) for the standard normal Y.
    pub e_h_normal: f64,
    kinks: Vec<f64>,
}

/// Expectation of `h` under the standard normal, by kink-aligned panels.
pub fn normal_expectation(h: &TestFunction) -> f64 {
    let norm = Normal::new(0.0, 1.0).unwrap();
    let reach = 12.0f64.max(
        h.kinks()
            .iter()
            .fold(0.0f64, |m, k| m.max(k.abs()))
            + 4.0,
    );
    panel_integrate(
        |t| h.eval(t) * norm.pdf(t),
        -reach,
        reach,
        h.kinks(),
        0.5,
    )
}

/// Solve the Stein equation for `h` on a grid of `n_grid` points over
/// `[-T, T]`.
///
/// The integral representation is evaluated in the overflow-free form
/// `psi(x) = -int_0^inf g(x + sgn(x) s) exp(-|x| s - s^2/2) ds` (for x of
/// either sign, `g = h - E h(Y)`), so no large exponentials ever appear.
/// `psi'` comes from the equation itself and `psi''` from its derivative.
pub fn solve_stein(h: &TestFunction, t_max: f64, n_grid: usize) -> Result<SteinSolution, SteinError> {
    if t_max < 6.0 {
        return Err(SteinError::InvalidParam(format!(
            "grid half-width {t_max} below 6"
        )));
    }
    if n_grid < 10_000 {
        return Err(SteinError::InvalidParam(format!(
            "n_grid = {n_grid} below 10000"
        )));
    }
    let e_h = normal_expectation(h);
    let step = 2.0 * t_max / (n_grid - 1) as f64;
    let grid: Vec<f64> = (0..n_grid).map(|i| -t_max + step * i as f64).collect();

    // e^{-s^2/2} alone is < 1e-18 beyond s = 9.2
    let s_max = 10.0;
    let psi: Vec<f64> = grid
        .iter()
        .map(|&x| {
            if x <= 0.0 {
                // kinks of s -> g(x - s) at s = x - k for k <= x
                let breaks: Vec<f64> = h
                    .kinks()
                    .iter()
                    .filter(|&&k| k < x)
                    .map(|&k| x - k)
                    .collect();
                panel_integrate(
                    |s| (h.eval(x - s) - e_h) * (x * s - 0.5 * s * s).exp(),
                    0.0,
                    s_max,
                    &breaks,
                    0.5,
                )
            } else {
                let breaks: Vec<f64> = h
                    .kinks()
                    .iter()
                    .filter(|&&k| k > x)
                    .map(|&k| k - x)
                    .collect();
                -panel_integrate(
                    |s| (h.eval(x + s) - e_h) * (-x * s - 0.5 * s * s).exp(),
                    0.0,
                    s_max,
                    &breaks,
                    0.5,
                )
            }
        })
        .collect();

    let psi_prime: Vec<f64> = grid
        .iter()
        .zip(&psi)
        .map(|(&x, &p)| x * p + h.eval(x) - e_h)
        .collect();
    let psi_dprime: Vec<f64> = grid
        .iter()
        .zip(psi.iter().zip(&psi_prime))
        .map(|(&x, (&p, &dp))| p + x * dp + h.deriv(x))
        .collect();

    Ok(SteinSolution {
        grid,
        psi,
        psi_prime,
        psi_dprime,
        h_description: h.description.clone(),
        e_h_normal: e_h,
        kinks: h.kinks().to_vec(),
    })
}

impl SteinSolution {
    pub fn max_abs_psi_prime(&self) -> f64 {
        self.psi_prime.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn max_abs_psi_dprime(&self) -> f64 {
        self.psi_dprime.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Linear interpolation of psi at `x` (clamped to the grid range).
    pub fn psi_at(&self, x: f64) -> f64 {
        interp(&self.grid, &self.psi, x)
    }

    pub fn psi_prime_at(&self, x: f64) -> f64 {
        interp(&self.grid, &self.psi_prime, x)
    }

    /// Maximum over the grid of the defect between a five-point finite
    /// difference of the stored psi and the equation's own derivative.
    ///
    /// Stencils are chosen to avoid straddling derivative kinks of `h`
    /// (where psi is only C^1), so the check keeps fourth-order accuracy.
    pub fn ode_residual_max(&self) -> f64 {
        let n = self.grid.len();
        let step = self.grid[1] - self.grid[0];
        let mut worst = 0.0f64;
        for i in 0..n {
            let lo_bound = i.saturating_sub(4).max(0);
            let hi_start = i.min(n - 5);
            // candidate stencil start offsets, centered first
            let candidates = [
                i.saturating_sub(2),
                i.saturating_sub(1),
                i.saturating_sub(3),
                i,
                i.saturating_sub(4),
            ];
            let mut chosen = None;
            for &start in &candidates {
                if start < lo_bound || start > hi_start {
                    continue;
                }
                let a = self.grid[start];
                let b = self.grid[start + 4];
                let eps = step * 1e-9;
                let clean = self
                    .kinks
                    .iter()
                    .all(|&k| k <= a + eps || k >= b - eps);
                if clean {
                    chosen = Some(start);
                    break;
                }
            }
            let start = chosen.unwrap_or(i.saturating_sub(2).clamp(lo_bound, hi_start));
            let offsets: Vec<f64> = (0..5).map(|j| (start + j) as f64 - i as f64).collect();
            let w = fd_weights(&offsets, 1);
            let mut deriv = 0.0;
            for j in 0..5 {
                deriv += w[j] * self.psi[start + j];
            }
            deriv /= step;
            let defect = (deriv - self.psi_prime[i]).abs();
            worst = worst.max(defect);
        }
        worst
    }
}

fn interp(grid: &[f64], vals: &[f64], x: f64) -> f64 {
    let n = grid.len();
    if x <= grid[0] {
        return vals[0];
    }
    if x >= grid[n - 1] {
        return vals[n - 1];
    }
    let step = grid[1] - grid[0];
    let i = (((x - grid[0]) / step) as usize).min(n - 2);
    let t = (x - grid[i]) / step;
    vals[i] * (1.0 - t) + vals[i + 1] * t
}

/// Finite-difference weights for the `order`-th derivative at offset 0,
/// given node offsets in units of the step (Fornberg's recurrence).
fn fd_weights(offsets: &[f64], order: usize) -> Vec<f64> {
    let n = offsets.len();
    let mut c = vec![vec![0.0; order + 1]; n];
    let mut c1 = 1.0;
    let mut c4 = offsets[0];
    c[0][0] = 1.0;
    for i in 1..n {
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = offsets[i];
        for j in 0..i {
            let c3 = offsets[i] - offsets[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=order.min(i)).rev() {
                    c[i][k] = c1 * (k as f64 * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=order.min(i)).rev() {
                c[j][k] = (c4 * c[j][k] - k as f64 * c[j][k - 1]) / c3;
            }
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    c.iter().map(|row| row[order]).collect()
}

// ---------------------------------------------------------------------------
// Wasserstein distance to the standard normal

/// Exact 1-Wasserstein distance between the empirical measure of the samples
/// and N(0, 1): the integral of |F_n - Phi| in closed form segment by
/// segment, including both tails. Callers standardize the samples first.
pub fn wasserstein_to_normal(samples: &[f64]) -> Result<f64, SteinError> {
    const MIN: usize = 100;
    if samples.len() < MIN {
        return Err(SteinError::TooFewSamples {
            min: MIN,
            got: samples.len(),
        });
    }
    let mut xs = samples.to_vec();
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let norm = Normal::new(0.0, 1.0).unwrap();
    let n = xs.len();
    // antiderivative of Phi
    let a_fn = |t: f64| t * norm.cdf(t) + norm.pdf(t);
    let mut parts = Vec::with_capacity(n + 1);
    // left tail: F_n = 0 below the smallest sample
    parts.push(a_fn(xs[0]));
    for i in 1..n {
        let (lo, hi) = (xs[i - 1], xs[i]);
        if lo == hi {
            continue;
        }
        let c = i as f64 / n as f64;
        // integral of |Phi - c| over [lo, hi], split where Phi crosses c
        let seg = |p: f64, q: f64| (a_fn(q) - c * q) - (a_fn(p) - c * p);
        let t_star = norm.inverse_cdf(c);
        if t_star <= lo || t_star >= hi {
            parts.push(seg(lo, hi).abs());
        } else {
            parts.push(seg(lo, t_star).abs() + seg(t_star, hi).abs());
        }
    }
    // right tail: F_n = 1 above the largest sample
    parts.push(a_fn(xs[n - 1]) - xs[n - 1]);
    Ok(compensated_sum(parts))
}

/// Two routes from the same ensemble: `E h(W) - E h(Y)` evaluated directly,
/// and through the Stein solution as `E[psi'(W) - W psi(W)]`.
pub fn covariance_representation_check(
    samples: &[f64],
    h: &TestFunction,
    sol: &SteinSolution,
) -> (f64, f64) {
    let n = samples.len() as f64;
    let lhs = compensated_sum(samples.iter().map(|&w| h.eval(w))) / n - sol.e_h_normal;
    let rhs = compensated_sum(
        samples
            .iter()
            .map(|&w| sol.psi_prime_at(w) - w * sol.psi_at(w)),
    ) / n;
    (lhs, rhs)
}
