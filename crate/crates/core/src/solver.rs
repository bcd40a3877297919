//! Periodic corrector solves and the net flux.
//!
//! The operator is a cell-centered finite-volume discretization of
//! `u -> -div(a grad u) + beta u` with harmonic face averaging, applied
//! matrix-free. The corrector equation is driven by the divergence of the
//! field-weighted unit gradient along axis 0; at beta = 0 the constant
//! null mode is projected out so the zero-mean solution is returned.
//!
//! Harmonic face averaging makes the one-dimensional flux exactly the
//! harmonic mean of the cell values, which the tests lean on heavily.

use crate::fields::CoefficientField;
use crate::grid::Grid;
use crate::stats::compensated_sum;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("invalid solver parameter: {0}")]
    InvalidParam(String),
    #[error("conjugate gradient did not converge: relative residual {residual:.3e} after {iterations} iterations")]
    NonConvergence { residual: f64, iterations: usize },
    #[error("right-hand side incompatible with the zero-mean constraint (mean {mean:.3e})")]
    IncompatibleRhs { mean: f64 },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad dump header")]
    BadHeader,
}

/// Conductivity of the face between two cells: harmonic mean of the
/// adjacent cell values.
#[inline]
pub fn face_conductivity(a: f64, b: f64) -> f64 {
    2.0 / (1.0 / a + 1.0 / b)
}

/// Matrix-free finite-volume operator for a fixed field and beta.
#[derive(Debug, Clone)]
pub struct DiscreteOperator {
    grid: Grid,
    beta: f64,
    /// Per axis, conductivity of the face between cell `c` and `c + e_axis`.
    face_cond: Vec<Vec<f64>>,
    /// Per axis, the wrapped `c + e_axis` neighbour of every cell.
    nb_plus: Vec<Vec<u32>>,
    diag: Vec<f64>,
    hd: f64,
    hd2: f64,
}

/// Wrapped `+e_axis` neighbour table per axis.
pub fn neighbor_tables(grid: Grid) -> Vec<Vec<u32>> {
    let n = grid.n_cells();
    (0..grid.d)
        .map(|axis| {
            (0..n)
                .map(|idx| grid.neighbor(idx, axis, 1) as u32)
                .collect()
        })
        .collect()
}

/// Harmonic-mean face conductivities along every axis.
pub fn face_conductivities(field: &CoefficientField) -> Vec<Vec<f64>> {
    let grid = field.grid();
    let n = grid.n_cells();
    (0..grid.d)
        .map(|axis| {
            let mut fc = vec![0.0; n];
            for (idx, f) in fc.iter_mut().enumerate() {
                let nb = grid.neighbor(idx, axis, 1);
                *f = face_conductivity(field.values[idx], field.values[nb]);
            }
            fc
        })
        .collect()
}

/// Assemble the operator for the given field and mass coefficient.
pub fn assemble(field: &CoefficientField, beta: f64) -> Result<DiscreteOperator, SolverError> {
    if beta < 0.0 || !beta.is_finite() {
        return Err(SolverError::InvalidParam(format!(
            "beta = {beta} must be nonnegative"
        )));
    }
    let grid = field.grid();
    let h = grid.h();
    let hd = h.powi(grid.d as i32);
    let hd2 = h.powi(grid.d as i32 - 2);
    let face_cond = face_conductivities(field);
    let nb_plus = neighbor_tables(grid);
    let n = grid.n_cells();
    let mut diag = vec![beta * hd; n];
    for fc in &face_cond {
        for (idx, d) in diag.iter_mut().enumerate() {
            *d += fc[idx] * hd2;
        }
    }
    for (axis, fc) in face_cond.iter().enumerate() {
        for idx in 0..n {
            let nb = nb_plus[axis][idx] as usize;
            diag[nb] += fc[idx] * hd2;
        }
    }
    Ok(DiscreteOperator {
        grid,
        beta,
        face_cond,
        nb_plus,
        diag,
        hd,
        hd2,
    })
}

impl DiscreteOperator {
    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn face_cond(&self, axis: usize) -> &[f64] {
        &self.face_cond[axis]
    }

    /// `out = A phi`. Integrated (finite-volume) form: each entry is the
    /// net face flux out of the cell plus the mass term, scaled by cell size.
    pub fn apply(&self, phi: &[f64], out: &mut [f64]) {
        let n = phi.len();
        debug_assert_eq!(n, self.grid.n_cells());
        if self.beta > 0.0 {
            let bh = self.beta * self.hd;
            for i in 0..n {
                out[i] = bh * phi[i];
            }
        } else {
            out.fill(0.0);
        }
        for (fc, nbs) in self.face_cond.iter().zip(&self.nb_plus) {
            for idx in 0..n {
                let nb = nbs[idx] as usize;
                let flux = fc[idx] * (phi[idx] - phi[nb]) * self.hd2;
                out[idx] += flux;
                out[nb] -= flux;
            }
        }
    }

    /// Right-hand side from the unit forcing along axis 0:
    /// per cell, the difference of the two axis-0 face conductivities times
    /// the face area.
    pub fn rhs_e1(&self) -> Vec<f64> {
        let n = self.grid.n_cells();
        let area = self.hd2 * self.grid.h(); // h^{d-1}
        let fc = &self.face_cond[0];
        let nbs = &self.nb_plus[0];
        let mut b = vec![0.0; n];
        for idx in 0..n {
            b[nbs[idx] as usize] -= fc[idx] * area;
            b[idx] += fc[idx] * area;
        }
        b
    }

    /// Delta source of unit mass at cell `y`, compensated to zero total mass.
    pub fn rhs_delta(&self, y: usize) -> Vec<f64> {
        let n = self.grid.n_cells();
        let ld = (self.grid.l as f64).powi(self.grid.d as i32);
        let mut b = vec![-self.hd / ld; n];
        b[y] += 1.0;
        b
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preconditioner {
    None,
    Diagonal,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SolveConfig {
    pub rel_tolerance: f64,
    pub max_iterations: usize,
    pub preconditioner: Preconditioner,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig {
            rel_tolerance: 1e-10,
            max_iterations: 50_000,
            preconditioner: Preconditioner::Diagonal,
        }
    }
}

impl SolveConfig {
    pub fn validate(&self) -> Result<(), SolverError> {
        if !(self.rel_tolerance > 0.0) {
            return Err(SolverError::InvalidParam(format!(
                "rel_tolerance = {} must be positive",
                self.rel_tolerance
            )));
        }
        Ok(())
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        s += a[i] * b[i];
    }
    s
}

fn subtract_mean(v: &mut [f64]) {
    let mu = compensated_sum(v.iter().copied()) / v.len() as f64;
    for x in v.iter_mut() {
        *x -= mu;
    }
}

#[derive(Debug, Clone)]
pub struct CgResult {
    pub x: Vec<f64>,
    /// Final residual norm relative to the right-hand side norm.
    pub residual_norm: f64,
    pub iterations: usize,
}

/// Preconditioned conjugate gradients with optional warm start.
///
/// At beta = 0 the operator annihilates constants; the right-hand side must
/// be (numerically) mean-free and iterates are kept mean-free throughout.
pub fn solve(
    op: &DiscreteOperator,
    b: &[f64],
    x0: Option<&[f64]>,
    cfg: &SolveConfig,
) -> Result<CgResult, SolverError> {
    cfg.validate()?;
    let n = b.len();
    let singular = op.beta == 0.0;
    let b_norm = dot(b, b).sqrt();
    if b_norm == 0.0 {
        return Ok(CgResult {
            x: vec![0.0; n],
            residual_norm: 0.0,
            iterations: 0,
        });
    }
    let mut b = b.to_vec();
    if singular {
        let mean = compensated_sum(b.iter().copied()) / n as f64;
        // A compatible discrete divergence sums to zero up to round-off.
        if mean.abs() * (n as f64).sqrt() > 1e-9 * b_norm {
            return Err(SolverError::IncompatibleRhs { mean });
        }
        subtract_mean(&mut b);
    }

    let mut x = match x0 {
        Some(x0) => x0.to_vec(),
        None => vec![0.0; n],
    };
    if singular {
        subtract_mean(&mut x);
    }

    let mut r = vec![0.0; n];
    op.apply(&x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    if singular {
        subtract_mean(&mut r);
    }

    let precond = |r: &[f64], z: &mut [f64]| match cfg.preconditioner {
        Preconditioner::None => z.copy_from_slice(r),
        Preconditioner::Diagonal => {
            for i in 0..r.len() {
                z[i] = r[i] / op.diag[i];
            }
        }
    };

    let mut z = vec![0.0; n];
    precond(&r, &mut z);
    if singular {
        subtract_mean(&mut z);
    }
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);
    let tol = cfg.rel_tolerance * b_norm;
    let mut res = dot(&r, &r).sqrt();

    let mut iterations = 0;
    while res > tol {
        if iterations >= cfg.max_iterations {
            return Err(SolverError::NonConvergence {
                residual: res / b_norm,
                iterations,
            });
        }
        op.apply(&p, &mut ap);
        if singular {
            subtract_mean(&mut ap);
        }
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            return Err(SolverError::NonConvergence {
                residual: res / b_norm,
                iterations,
            });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        if singular {
            subtract_mean(&mut r);
        }
        precond(&r, &mut z);
        if singular {
            subtract_mean(&mut z);
        }
        let rz_new = dot(&r, &z);
        let beta_cg = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta_cg * p[i];
        }
        res = dot(&r, &r).sqrt();
        iterations += 1;
    }
    if singular {
        subtract_mean(&mut x);
    }
    Ok(CgResult {
        x,
        residual_norm: res / b_norm,
        iterations,
    })
}

/// Discrete periodic corrector plus solve metadata and both flux forms.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorrectorSolution {
    pub phi: Vec<f64>,
    pub beta: f64,
    pub residual_norm: f64,
    pub iterations: usize,
    pub gamma_energy: f64,
    pub gamma_linear: f64,
}

impl CorrectorSolution {
    /// Compact summary for provenance records (omits the phi array).
    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({
            "beta": self.beta,
            "residual_norm": self.residual_norm,
            "iterations": self.iterations,
            "gamma_energy": self.gamma_energy,
            "gamma_linear": self.gamma_linear,
        })
    }
}

/// Solve the corrector equation on `field`.
pub fn solve_corrector(
    field: &CoefficientField,
    beta: f64,
    cfg: &SolveConfig,
) -> Result<CorrectorSolution, SolverError> {
    solve_corrector_warm(field, beta, cfg, None)
}

/// Same, but starting the iteration from `x0` (e.g. the corrector of a
/// field differing only locally).
pub fn solve_corrector_warm(
    field: &CoefficientField,
    beta: f64,
    cfg: &SolveConfig,
    x0: Option<&[f64]>,
) -> Result<CorrectorSolution, SolverError> {
    let op = assemble(field, beta)?;
    let b = op.rhs_e1();
    let cg = solve(&op, &b, x0, cfg)?;
    let grid = field.grid();
    let gamma_energy = flux_energy_faces(&cg.x, &op.face_cond, &op.nb_plus, grid, beta);
    let gamma_linear = flux_linear_faces(&cg.x, &op.face_cond[0], &op.nb_plus[0], grid);
    Ok(CorrectorSolution {
        phi: cg.x,
        beta,
        residual_norm: cg.residual_norm,
        iterations: cg.iterations,
        gamma_energy,
        gamma_linear,
    })
}

/// Domain-averaged energy form of the flux:
/// `|D_L|^{-1} [ sum_faces a_f (D phi + e)^2 h^d + beta sum phi^2 h^d ]`.
pub fn flux_energy(sol: &CorrectorSolution, field: &CoefficientField, beta: f64) -> f64 {
    flux_energy_of(&sol.phi, field, beta)
}

pub fn flux_energy_of(phi: &[f64], field: &CoefficientField, beta: f64) -> f64 {
    let grid = field.grid();
    flux_energy_faces(
        phi,
        &face_conductivities(field),
        &neighbor_tables(grid),
        grid,
        beta,
    )
}

fn flux_energy_faces(
    phi: &[f64],
    faces: &[Vec<f64>],
    nb_plus: &[Vec<u32>],
    grid: Grid,
    beta: f64,
) -> f64 {
    let h = grid.h();
    let hd = h.powi(grid.d as i32);
    let inv_h = 1.0 / h;
    let n = grid.n_cells();
    let mut terms = Vec::with_capacity(n * grid.d + n);
    for (axis, (fc_axis, nbs)) in faces.iter().zip(nb_plus).enumerate() {
        let e = if axis == 0 { 1.0 } else { 0.0 };
        for idx in 0..n {
            let nb = nbs[idx] as usize;
            let g = (phi[nb] - phi[idx]) * inv_h + e;
            terms.push(fc_axis[idx] * g * g * hd);
        }
    }
    if beta > 0.0 {
        for &v in phi {
            terms.push(beta * v * v * hd);
        }
    }
    let ld = (grid.l as f64).powi(grid.d as i32);
    compensated_sum(terms) / ld
}

/// Domain-averaged net flux along axis 0:
/// `|D_L|^{-1} sum over axis-0 faces of a_f (1 + D phi) h^d`.
pub fn flux_linear(sol: &CorrectorSolution, field: &CoefficientField) -> f64 {
    flux_linear_of(&sol.phi, field)
}

pub fn flux_linear_of(phi: &[f64], field: &CoefficientField) -> f64 {
    let grid = field.grid();
    let n = grid.n_cells();
    let mut fc0 = vec![0.0; n];
    let nbs: Vec<u32> = (0..n).map(|i| grid.neighbor(i, 0, 1) as u32).collect();
    for (idx, f) in fc0.iter_mut().enumerate() {
        *f = face_conductivity(field.values[idx], field.values[nbs[idx] as usize]);
    }
    flux_linear_faces(phi, &fc0, &nbs, grid)
}

fn flux_linear_faces(phi: &[f64], fc0: &[f64], nbs: &[u32], grid: Grid) -> f64 {
    let h = grid.h();
    let hd = h.powi(grid.d as i32);
    let inv_h = 1.0 / h;
    let ld = (grid.l as f64).powi(grid.d as i32);
    compensated_sum((0..phi.len()).map(|idx| {
        let nb = nbs[idx] as usize;
        let g = (phi[nb] - phi[idx]) * inv_h + 1.0;
        fc0[idx] * g * hd
    })) / ld
}

/// Per-cell energy density of `grad phi (+ e_1)`, reconstructed from face
/// differences: each face's squared gradient is split half-and-half between
/// its two cells, so cell sums reproduce face sums exactly.
pub fn gradient_energy_cells(phi: &[f64], grid: Grid, with_e1: bool) -> Vec<f64> {
    let h = grid.h();
    let hd = h.powi(grid.d as i32);
    let inv_h = 1.0 / h;
    let n = grid.n_cells();
    let mut cell = vec![0.0; n];
    for axis in 0..grid.d {
        let e = if with_e1 && axis == 0 { 1.0 } else { 0.0 };
        for idx in 0..n {
            let nb = grid.neighbor(idx, axis, 1);
            let g = (phi[nb] - phi[idx]) * inv_h + e;
            let half = 0.5 * g * g * hd;
            cell[idx] += half;
            cell[nb] += half;
        }
    }
    cell
}

/// Local Dirichlet energies of `grad phi + e_1` around site `j`:
/// `Phi_j` over the unit cube at `j` and `hat Phi_j` over the torus ball of
/// radius `tau` centered at the lattice point `j`.
pub fn phi_energies(
    sol: &CorrectorSolution,
    field: &CoefficientField,
    j: usize,
    tau: f64,
) -> (f64, f64) {
    let grid = field.grid();
    let cell = gradient_energy_cells(&sol.phi, grid, true);
    let cube: f64 = (0..grid.n_cells())
        .filter(|&idx| grid.site_of_cell(grid.cell_coords(idx)) == j)
        .map(|idx| cell[idx])
        .sum();
    let center = grid.site_point(j);
    let ball: f64 = grid.cells_in_ball(center, tau).iter().map(|&i| cell[i]).sum();
    (cube.sqrt(), ball.sqrt())
}

/// `hat Phi_j` alone, given a precomputed cell energy density.
pub fn hat_phi_from_cells(cells: &[f64], grid: Grid, j: usize, tau: f64) -> f64 {
    let center = grid.site_point(j);
    grid.cells_in_ball(center, tau)
        .iter()
        .map(|&i| cells[i])
        .sum::<f64>()
        .sqrt()
}

const DUMP_MAGIC: &[u8; 4] = b"PHI0";

/// Dump a cell array as flat binary: magic, u32 d/L/m (little endian),
/// then row-major little-endian f64 values.
pub fn dump_phi<W: Write>(w: &mut W, grid: Grid, phi: &[f64]) -> Result<(), SolverError> {
    assert_eq!(phi.len(), grid.n_cells());
    w.write_all(DUMP_MAGIC)?;
    w.write_all(&(grid.d as u32).to_le_bytes())?;
    w.write_all(&grid.l.to_le_bytes())?;
    w.write_all(&grid.m.to_le_bytes())?;
    for v in phi {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn load_phi<R: Read>(r: &mut R) -> Result<(Grid, Vec<f64>), SolverError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != DUMP_MAGIC {
        return Err(SolverError::BadHeader);
    }
    let mut word = [0u8; 4];
    r.read_exact(&mut word)?;
    let d = u32::from_le_bytes(word) as usize;
    r.read_exact(&mut word)?;
    let l = u32::from_le_bytes(word);
    r.read_exact(&mut word)?;
    let m = u32::from_le_bytes(word);
    if !(1..=3).contains(&d) || l < 1 || m < 1 {
        return Err(SolverError::BadHeader);
    }
    let grid = Grid::new(d, l, m);
    let mut phi = vec![0.0; grid.n_cells()];
    let mut buf = [0u8; 8];
    for v in phi.iter_mut() {
        r.read_exact(&mut buf)?;
        *v = f64::from_le_bytes(buf);
    }
    Ok((grid, phi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{sample_latent, realize, CheckerboardLaw, FieldConfig};
    use crate::rng;
    use rand::Rng;

    fn random_checkerboard(d: usize, l: u32, m: u32, seed: u64) -> CoefficientField {
        let cfg =
            FieldConfig::checkerboard(d, l, m, 1.0, 4.0, CheckerboardLaw::TwoPoint { p: 0.5 });
        realize(&sample_latent(&cfg, seed).unwrap(), &cfg).unwrap()
    }

    #[test]
    fn one_dimensional_face_conductivities_by_hand() {
        let field = CoefficientField {
            values: vec![1.0, 2.0],
            d: 1,
            l: 2,
            m: 1,
        };
        let op = assemble(&field, 0.0).unwrap();
        assert!((op.face_cond(0)[0] - 4.0 / 3.0).abs() < 1e-15);
        assert!((op.face_cond(0)[1] - 4.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn constant_vectors_feel_only_the_mass_term() {
        let field = random_checkerboard(2, 4, 2, 1);
        for beta in [0.0, 0.7] {
            let op = assemble(&field, beta).unwrap();
            let n = field.values.len();
            let phi = vec![3.25; n];
            let mut out = vec![0.0; n];
            op.apply(&phi, &mut out);
            let hd = field.h().powi(2);
            for v in out {
                assert!((v - beta * 3.25 * hd).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn operator_is_symmetric() {
        let field = random_checkerboard(2, 4, 2, 2);
        let op = assemble(&field, 0.3).unwrap();
        let n = field.values.len();
        let mut rng = rng::stream(5, &[]);
        let u: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
        let v: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
        let mut au = vec![0.0; n];
        let mut av = vec![0.0; n];
        op.apply(&u, &mut au);
        op.apply(&v, &mut av);
        let uv: f64 = au.iter().zip(&v).map(|(a, b)| a * b).sum();
        let vu: f64 = av.iter().zip(&u).map(|(a, b)| a * b).sum();
        assert!((uv - vu).abs() < 1e-12);
    }

    #[test]
    fn negative_beta_is_rejected() {
        let field = random_checkerboard(1, 4, 1, 0);
        assert!(matches!(
            assemble(&field, -1.0),
            Err(SolverError::InvalidParam(_))
        ));
    }

    #[test]
    fn constant_field_has_zero_corrector_and_flux_c() {
        for d in 1..=3 {
            for beta in [0.0, 0.5] {
                for c in [1.0, 2.5] {
                    let grid = Grid::new(d, 4, 2);
                    let field = CoefficientField::constant(grid, c);
                    let sol = solve_corrector(&field, beta, &SolveConfig::default()).unwrap();
                    assert!(sol.phi.iter().all(|&v| v == 0.0));
                    assert!((sol.gamma_energy - c).abs() / c < 1e-10);
                    assert!((sol.gamma_linear - c).abs() / c < 1e-10);
                }
            }
        }
    }

    #[test]
    fn one_dimensional_flux_is_the_harmonic_mean() {
        let cfg = FieldConfig::checkerboard(1, 8, 4, 1.0, 4.0, CheckerboardLaw::Uniform);
        let z = sample_latent(&cfg, 3).unwrap();
        let field = realize(&z, &cfg).unwrap();
        let n = field.values.len() as f64;
        let harmonic = n / field.values.iter().map(|v| 1.0 / v).sum::<f64>();
        let sol = solve_corrector(&field, 0.0, &SolveConfig::default()).unwrap();
        assert!((sol.gamma_energy - harmonic).abs() / harmonic < 1e-10);
    }

    #[test]
    fn flux_forms_agree_and_lie_in_ellipticity_range() {
        let field = random_checkerboard(2, 4, 4, 7);
        let sol = solve_corrector(&field, 0.0, &SolveConfig::default()).unwrap();
        assert!(sol.gamma_energy >= 1.0 && sol.gamma_energy <= 4.0);
        assert!((sol.gamma_energy - sol.gamma_linear).abs() / sol.gamma_energy < 1e-9);
    }

    #[test]
    fn mass_term_of_a_forced_constant() {
        let grid = Grid::new(2, 4, 2);
        let field = CoefficientField::constant(grid, 2.0);
        let beta = 0.8;
        let c = 1.5;
        let phi = vec![c; grid.n_cells()];
        let energy = flux_energy_of(&phi, &field, beta);
        // gradient part is the constant-field value 2.0; the rest is the mass
        assert!((energy - 2.0 - beta * c * c).abs() < 1e-12);
    }

    #[test]
    fn zero_mean_solution_and_null_space_invariance() {
        let field = random_checkerboard(2, 4, 2, 9);
        let cfg = SolveConfig::default();
        let sol = solve_corrector(&field, 0.0, &cfg).unwrap();
        let mean: f64 = sol.phi.iter().sum::<f64>() / sol.phi.len() as f64;
        assert!(mean.abs() < 1e-12);
        // adding a constant changes neither flux form
        let shifted: Vec<f64> = sol.phi.iter().map(|v| v + 13.0).collect();
        assert!((flux_energy_of(&shifted, &field, 0.0) - sol.gamma_energy).abs() < 1e-9);
        assert!((flux_linear_of(&shifted, &field) - sol.gamma_linear).abs() < 1e-9);
    }

    #[test]
    fn nonconvergence_reports_last_residual() {
        let field = random_checkerboard(2, 4, 4, 4);
        let cfg = SolveConfig {
            rel_tolerance: 1e-10,
            max_iterations: 1,
            preconditioner: Preconditioner::None,
        };
        match solve_corrector(&field, 0.0, &cfg) {
            Err(SolverError::NonConvergence {
                residual,
                iterations,
            }) => {
                assert!(residual > 0.0);
                assert_eq!(iterations, 1);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn phi_energies_of_constant_field() {
        let grid = Grid::new(2, 4, 4);
        let field = CoefficientField::constant(grid, 1.0);
        let sol = solve_corrector(&field, 0.0, &SolveConfig::default()).unwrap();
        let tau = 2.0f64.sqrt();
        for j in 0..grid.n_sites() {
            let (cube, ball) = phi_energies(&sol, &field, j, tau);
            assert!((cube - 1.0).abs() < 1e-12);
            assert!(ball >= cube);
        }
    }

    #[test]
    fn cube_energies_partition_the_total() {
        let field = random_checkerboard(2, 4, 2, 11);
        let sol = solve_corrector(&field, 0.0, &SolveConfig::default()).unwrap();
        let grid = field.grid();
        let tau = 2.0f64.sqrt();
        let total: f64 = (0..grid.n_sites())
            .map(|j| {
                let (cube, ball) = phi_energies(&sol, &field, j, tau);
                assert!(ball >= cube - 1e-15);
                cube * cube
            })
            .sum();
        let cells = gradient_energy_cells(&sol.phi, grid, true);
        let direct: f64 = cells.iter().sum();
        assert!((total - direct).abs() < 1e-10 * direct.max(1.0));
    }

    #[test]
    fn dump_round_trips() {
        let grid = Grid::new(2, 2, 2);
        let phi: Vec<f64> = (0..grid.n_cells()).map(|i| i as f64 * 0.25 - 1.0).collect();
        let mut buf = Vec::new();
        dump_phi(&mut buf, grid, &phi).unwrap();
        let (g2, phi2) = load_phi(&mut buf.as_slice()).unwrap();
        assert_eq!(g2, grid);
        assert_eq!(phi, phi2);
        buf[0] = b'X';
        assert!(matches!(
            load_phi(&mut buf.as_slice()),
            Err(SolverError::BadHeader)
        ));
    }
}
