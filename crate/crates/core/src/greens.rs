//! Periodic Green's function of the conductivity operator, with the decay
//! diagnostics used to audit its behaviour at a distance.
//!
//! The source is a unit mass in one cell compensated by a uniform background
//! so the right-hand side is mean-free; at beta = 0 the solution is
//! normalized to zero mean.

use crate::fields::CoefficientField;
use crate::grid::Grid;
use crate::solver::{assemble, gradient_energy_cells, solve, SolveConfig, SolverError};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GreenError {
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("operation needs d = {expected}, grid has d = {actual}")]
    WrongDimension { expected: usize, actual: usize },
    #[error("precondition violated: {0}")]
    Precondition(String),
}

/// One column `G(., y)` of the periodic Green's function.
#[derive(Debug, Clone)]
pub struct GreenFunction {
    pub values: Vec<f64>,
    pub beta: f64,
    /// Source cell index y.
    pub source: usize,
    pub grid: Grid,
    pub residual_norm: f64,
    pub iterations: usize,
}

/// Solve for `G(., y)` with a unit source at cell `y`.
pub fn solve_green(
    field: &CoefficientField,
    beta: f64,
    y: usize,
    cfg: &SolveConfig,
) -> Result<GreenFunction, GreenError> {
    let grid = field.grid();
    if y >= grid.n_cells() {
        return Err(GreenError::Precondition(format!(
            "source cell {y} out of range ({} cells)",
            grid.n_cells()
        )));
    }
    let op = assemble(field, beta)?;
    let b = op.rhs_delta(y);
    let cg = solve(&op, &b, None, cfg)?;
    Ok(GreenFunction {
        values: cg.x,
        beta,
        source: y,
        grid,
        residual_norm: cg.residual_norm,
        iterations: cg.iterations,
    })
}

/// One dyadic distance bin of a decay profile.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct DecayBin {
    pub bin_lo: f64,
    pub bin_hi: f64,
    /// max over the bin of |G(x,y)| * dist(x,y)^{d-2}
    pub max_scaled_g: f64,
    pub n_cells: usize,
}

/// Bin cells by torus distance to the source and report the maximum of
/// `|G| * dist^{d-2}` per dyadic bin. Three-dimensional grids only.
///
/// Cells beyond the injectivity radius L/2 are excluded: past it the
/// distance to the nearest periodic image stops growing, so the scaling is
/// no longer meaningful there.
pub fn decay_profile_3d(g: &GreenFunction) -> Result<Vec<DecayBin>, GreenError> {
    if g.grid.d != 3 {
        return Err(GreenError::WrongDimension {
            expected: 3,
            actual: g.grid.d,
        });
    }
    let grid = g.grid;
    let y = grid.cell_center(g.source);
    let h = grid.h();
    let max_dist = grid.l as f64 / 2.0;
    let mut bins = Vec::new();
    let mut lo = h;
    while lo < max_dist {
        bins.push(DecayBin {
            bin_lo: lo,
            bin_hi: (2.0 * lo).min(max_dist),
            max_scaled_g: 0.0,
            n_cells: 0,
        });
        lo *= 2.0;
    }
    let exponent = grid.d as i32 - 2;
    for idx in 0..grid.n_cells() {
        if idx == g.source {
            continue;
        }
        let dist = grid.torus_dist(grid.cell_center(idx), y);
        if dist < h || dist >= max_dist {
            continue;
        }
        let bin = (dist / h).log2().floor() as usize;
        if bin >= bins.len() {
            continue;
        }
        let scaled = g.values[idx].abs() * dist.powi(exponent);
        bins[bin].n_cells += 1;
        if scaled > bins[bin].max_scaled_g {
            bins[bin].max_scaled_g = scaled;
        }
    }
    bins.retain(|b| b.n_cells > 0);
    Ok(bins)
}

/// CSV rendering of a decay profile.
pub fn decay_profile_csv(bins: &[DecayBin]) -> String {
    let mut out = String::from("bin_lo,bin_hi,max_scaled_G,n_cells\n");
    for b in bins {
        out.push_str(&format!(
            "{},{},{},{}\n",
            b.bin_lo, b.bin_hi, b.max_scaled_g, b.n_cells
        ));
    }
    out
}

/// Dirichlet energy of `grad_x G` over the ball of radius `r` at cell `x0`,
/// for sources well separated from the ball (`dist(x0, y) > 2r`).
/// Two-dimensional grids only.
pub fn annulus_gradient_energy_2d(
    g: &GreenFunction,
    x0: usize,
    r: f64,
) -> Result<f64, GreenError> {
    if g.grid.d != 2 {
        return Err(GreenError::WrongDimension {
            expected: 2,
            actual: g.grid.d,
        });
    }
    let grid = g.grid;
    let center = grid.cell_center(x0);
    let source = grid.cell_center(g.source);
    let sep = grid.torus_dist(center, source);
    if sep <= 2.0 * r {
        return Err(GreenError::Precondition(format!(
            "source at distance {sep:.3} from the ball center, need > {:.3}",
            2.0 * r
        )));
    }
    let cells = gradient_energy_cells(&g.values, grid, false);
    Ok(grid
        .cells_in_ball(center, r)
        .iter()
        .map(|&i| cells[i])
        .sum())
}
