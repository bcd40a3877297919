//! Discrete difference calculus on the net flux.
//!
//! Everything here revolves around resampling latent sites: first and second
//! differences of the flux under single-site replacement, the Efron-Stein
//! variance bound, the subset-measure sampler, the exact covariance identity
//! on small hypercubes, and the Monte Carlo normal-approximation bound.
//!
//! Replacement sources are tied to roles: `Z^j` takes site j from the first
//! independent copy, `Z^k` takes site k from the second, so every quantity
//! is a deterministic function of three seeds.

use crate::fields::{realize, resample_site, sample_latent, FieldConfig, FieldError, LatentState};
use crate::rng::{self, domain};
use crate::solver::{
    face_conductivities, gradient_energy_cells, hat_phi_from_cells, solve_corrector_warm,
    CorrectorSolution, SolveConfig, SolverError,
};
use crate::stats::{
    compensated_sum, mean, mean_and_var, sample_variance, se_of_mean, se_of_variance, standardize,
};
use crate::stein::wasserstein_to_normal;
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ResampleError {
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
}

/// A latent state plus the seeds of two independent copies, with solve
/// settings; the three states are drawn from identical laws on disjoint
/// streams.
#[derive(Debug, Clone)]
pub struct ResampleTriple {
    pub config: FieldConfig,
    pub beta: f64,
    pub solve_cfg: SolveConfig,
    pub z: LatentState,
    seed_zp: u64,
    seed_zpp: u64,
}

impl ResampleTriple {
    pub fn new(
        config: FieldConfig,
        beta: f64,
        solve_cfg: SolveConfig,
        master_seed: u64,
    ) -> Result<Self, ResampleError> {
        let seed_z = rng::mix(master_seed, &[0]);
        let seed_zp = rng::mix(master_seed, &[1]);
        let seed_zpp = rng::mix(master_seed, &[2]);
        let z = sample_latent(&config, seed_z)?;
        Ok(ResampleTriple {
            config,
            beta,
            solve_cfg,
            z,
            seed_zp,
            seed_zpp,
        })
    }

    /// Number of latent variables a single replacement may address.
    pub fn n_latent(&self) -> usize {
        self.z.n_latent()
    }

    /// `Z^j`: site j replaced from the first independent copy.
    pub fn z_with_j(&self, j: usize) -> Result<LatentState, FieldError> {
        resample_site(&self.z, &self.config, j, self.seed_zp)
    }

    /// `Z^k`: site k replaced from the second independent copy.
    pub fn z_with_k(&self, k: usize) -> Result<LatentState, FieldError> {
        resample_site(&self.z, &self.config, k, self.seed_zpp)
    }

    /// `Z^{jk}`: both replacements applied.
    pub fn z_with_jk(&self, j: usize, k: usize) -> Result<LatentState, FieldError> {
        let zj = self.z_with_j(j)?;
        resample_site(&zj, &self.config, k, self.seed_zpp)
    }

    fn solve_state(
        &self,
        z: &LatentState,
        warm: Option<&[f64]>,
    ) -> Result<CorrectorSolution, ResampleError> {
        let field = realize(z, &self.config)?;
        Ok(solve_corrector_warm(&field, self.beta, &self.solve_cfg, warm)?)
    }
}

/// First and second difference data for one resampling event, with the local
/// energies entering the a-priori bounds.
#[derive(Debug, Clone, Serialize)]
pub struct DifferenceRecord {
    pub j: usize,
    pub k: Option<usize>,
    pub delta_gamma: f64,
    pub delta2_gamma: Option<f64>,
    /// `hat Phi_j` over the states involved: `[Z, Z^j]` for first
    /// differences, `[Z, Z^j, Z^k, Z^jk]` for second differences.
    pub hat_phi_j: Vec<f64>,
    /// `hat Phi_k` over `[Z, Z^j, Z^k, Z^jk]` (second differences only).
    pub hat_phi_k: Option<Vec<f64>>,
}

/// Explicit constant in the single-site flux bound
/// `L^d |Delta_j Gamma| <= C (hatPhi_j(Z)^2 + hatPhi_j(Z^j)^2)`,
/// from ellipticity alone.
pub fn delta_j_bound_constant(a_lo: f64, a_hi: f64) -> f64 {
    (a_hi - a_lo) * (a_hi / a_lo).max(1.0)
}

/// `Gamma(Z^j) - Gamma(Z)` by two full corrector solves.
pub fn delta_j_gamma_direct(t: &ResampleTriple, j: usize) -> Result<f64, ResampleError> {
    let base = t.solve_state(&t.z, None)?;
    let zj = t.z_with_j(j)?;
    let sol_j = t.solve_state(&zj, Some(&base.phi))?;
    Ok(sol_j.gamma_energy - base.gamma_energy)
}

/// Same difference through the local cross-energy identity: two solves and
/// one quadrature over the faces where the two fields differ.
pub fn delta_j_gamma_local(t: &ResampleTriple, j: usize) -> Result<f64, ResampleError> {
    let field = realize(&t.z, &t.config)?;
    let zj = t.z_with_j(j)?;
    let field_j = realize(&zj, &t.config)?;
    let base = t.solve_state(&t.z, None)?;
    let sol_j = t.solve_state(&zj, Some(&base.phi))?;
    Ok(cross_flux_delta(
        &base.phi,
        &sol_j.phi,
        &field,
        &field_j,
    ))
}

/// The localized quadrature `L^{-d} sum_f (a^j_f - a_f)(D phi^j + e)(D phi + e) h^d`
/// over faces whose conductivity changed.
pub fn cross_flux_delta(
    phi: &[f64],
    phi_j: &[f64],
    field: &crate::fields::CoefficientField,
    field_j: &crate::fields::CoefficientField,
) -> f64 {
    let grid = field.grid();
    let h = grid.h();
    let hd = h.powi(grid.d as i32);
    let inv_h = 1.0 / h;
    let fc = face_conductivities(field);
    let fc_j = face_conductivities(field_j);
    let n = grid.n_cells();
    let mut terms = Vec::new();
    for axis in 0..grid.d {
        let e = if axis == 0 { 1.0 } else { 0.0 };
        for idx in 0..n {
            let da = fc_j[axis][idx] - fc[axis][idx];
            if da == 0.0 {
                continue;
            }
            let nb = grid.neighbor(idx, axis, 1);
            let g = (phi[nb] - phi[idx]) * inv_h + e;
            let gj = (phi_j[nb] - phi_j[idx]) * inv_h + e;
            terms.push(da * gj * g * hd);
        }
    }
    let ld = (grid.l as f64).powi(grid.d as i32);
    compensated_sum(terms) / ld
}

/// First-difference record for site j: the flux difference plus the two
/// local energies entering the a-priori bound.
pub fn delta_j_record(t: &ResampleTriple, j: usize) -> Result<DifferenceRecord, ResampleError> {
    let grid = t.config.grid();
    let tau = t.config.tau();
    let base = t.solve_state(&t.z, None)?;
    let zj = t.z_with_j(j)?;
    let sol_j = t.solve_state(&zj, Some(&base.phi))?;
    let site = ball_site(j, &t.config);
    let hp = |sol: &CorrectorSolution| {
        let cells = gradient_energy_cells(&sol.phi, grid, true);
        hat_phi_from_cells(&cells, grid, site, tau)
    };
    Ok(DifferenceRecord {
        j,
        k: None,
        delta_gamma: sol_j.gamma_energy - base.gamma_energy,
        delta2_gamma: None,
        hat_phi_j: vec![hp(&base), hp(&sol_j)],
        hat_phi_k: None,
    })
}

// The dependent chain's extra latent site shares the last site's ball.
fn ball_site(j: usize, config: &FieldConfig) -> usize {
    j.min(config.grid().n_sites() - 1)
}

/// Second difference `Gamma(Z^{jk}) - Gamma(Z^k) - Gamma(Z^j) + Gamma(Z)`
/// from four solves, with all eight local energies recorded.
///
/// The four-term combination is summed in a canonical (sorted) order so the
/// result does not depend on which index is called j and which k.
pub fn delta_kj_gamma(
    t: &ResampleTriple,
    k: usize,
    j: usize,
) -> Result<DifferenceRecord, ResampleError> {
    let grid = t.config.grid();
    let tau = t.config.tau();
    let base = t.solve_state(&t.z, None)?;
    let zj = t.z_with_j(j)?;
    let zk = t.z_with_k(k)?;
    let zjk = t.z_with_jk(j, k)?;
    let sol_j = t.solve_state(&zj, Some(&base.phi))?;
    let sol_k = t.solve_state(&zk, Some(&base.phi))?;
    let sol_jk = t.solve_state(&zjk, Some(&sol_j.phi))?;

    let delta2 = second_difference(
        sol_jk.gamma_energy,
        sol_k.gamma_energy,
        sol_j.gamma_energy,
        base.gamma_energy,
    );
    let site_j = ball_site(j, &t.config);
    let site_k = ball_site(k, &t.config);
    let states = [&base, &sol_j, &sol_k, &sol_jk];
    let mut hat_j = Vec::with_capacity(4);
    let mut hat_k = Vec::with_capacity(4);
    for sol in states {
        let cells = gradient_energy_cells(&sol.phi, grid, true);
        hat_j.push(hat_phi_from_cells(&cells, grid, site_j, tau));
        hat_k.push(hat_phi_from_cells(&cells, grid, site_k, tau));
    }
    Ok(DifferenceRecord {
        j,
        k: Some(k),
        delta_gamma: sol_j.gamma_energy - base.gamma_energy,
        delta2_gamma: Some(delta2),
        hat_phi_j: hat_j,
        hat_phi_k: Some(hat_k),
    })
}

/// `g_jk - g_k - g_j + g` summed largest-magnitude first, so the value is
/// invariant under exchanging the two replacement labels.
fn second_difference(g_jk: f64, g_k: f64, g_j: f64, g: f64) -> f64 {
    let mut terms = [g_jk, g, -g_k, -g_j];
    terms.sort_by(|a, b| b.abs().partial_cmp(&a.abs()).unwrap());
    compensated_sum(terms)
}

/// Both sides of the far-separated second-difference bound, evaluated from
/// the same four solves:
/// `L^{2d} |D_k D_j Gamma|^2 <= 8 (a_hi - a_lo)^2 (sum of hatPhi_j^2) *
///  (grad energies of D_k phi and D_k phi^j over the ball at j)`.
pub fn second_difference_bound_sides(
    t: &ResampleTriple,
    k: usize,
    j: usize,
) -> Result<(f64, f64), ResampleError> {
    let grid = t.config.grid();
    let tau = t.config.tau();
    let base = t.solve_state(&t.z, None)?;
    let zj = t.z_with_j(j)?;
    let zk = t.z_with_k(k)?;
    let zjk = t.z_with_jk(j, k)?;
    let sol_j = t.solve_state(&zj, Some(&base.phi))?;
    let sol_k = t.solve_state(&zk, Some(&base.phi))?;
    let sol_jk = t.solve_state(&zjk, Some(&sol_j.phi))?;

    let ld = (grid.l as f64).powi(grid.d as i32);
    let delta2 = second_difference(
        sol_jk.gamma_energy,
        sol_k.gamma_energy,
        sol_j.gamma_energy,
        base.gamma_energy,
    );
    let lhs = (ld * delta2).powi(2);

    let site_j = ball_site(j, &t.config);
    let sum_hat_j: f64 = [&base, &sol_j, &sol_k, &sol_jk]
        .iter()
        .map(|sol| {
            let cells = gradient_energy_cells(&sol.phi, grid, true);
            let hp = hat_phi_from_cells(&cells, grid, site_j, tau);
            hp * hp
        })
        .sum();
    let n = grid.n_cells();
    let wk: Vec<f64> = (0..n).map(|i| sol_k.phi[i] - base.phi[i]).collect();
    let wkj: Vec<f64> = (0..n).map(|i| sol_jk.phi[i] - sol_j.phi[i]).collect();
    let center = grid.site_point(site_j);
    let ball = grid.cells_in_ball(center, tau);
    let wk_cells = gradient_energy_cells(&wk, grid, false);
    let wkj_cells = gradient_energy_cells(&wkj, grid, false);
    let w_energy: f64 = ball.iter().map(|&i| wk_cells[i] + wkj_cells[i]).sum();

    let (a_lo, a_hi) = t.config.ellipticity_bounds();
    let rhs = 8.0 * (a_hi - a_lo).powi(2) * sum_hat_j * w_energy;
    Ok((lhs, rhs))
}

/// Efron-Stein variance estimate for the flux under a model.
#[derive(Debug, Clone, Serialize)]
pub struct EfronSteinEstimate {
    pub var_hat: f64,
    pub var_se: f64,
    pub bound_hat: f64,
    pub bound_se: f64,
    pub n_replicas: usize,
    /// Set when the site sum was subsampled and rescaled by the site count.
    pub subsampled: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct EfronSteinParams {
    pub n_replicas: usize,
    pub seed: u64,
    /// Estimate the site sum from this many uniformly chosen sites per
    /// replica instead of all of them.
    pub subsample_sites: Option<usize>,
}

/// Sample variance of the flux over replicas against the resampling bound
/// `(1/2) sum_j E |Delta_j Gamma|^2`, one fresh replacement per
/// (replica, site).
pub fn efron_stein_estimate(
    config: &FieldConfig,
    beta: f64,
    solve_cfg: &SolveConfig,
    params: &EfronSteinParams,
) -> Result<EfronSteinEstimate, ResampleError> {
    if params.n_replicas < 2 {
        return Err(ResampleError::InvalidParam(format!(
            "need at least 2 replicas, got {}",
            params.n_replicas
        )));
    }
    config.validate()?;
    let per_replica: Vec<Result<(f64, f64), ResampleError>> = (0..params.n_replicas)
        .into_par_iter()
        .map(|r| {
            let seed_z = rng::mix(params.seed, &[domain::EFRON_STEIN, r as u64, 0]);
            let seed_zp = rng::mix(params.seed, &[domain::EFRON_STEIN, r as u64, 1]);
            let z = sample_latent(config, seed_z)?;
            let field = realize(&z, config)?;
            let base = solve_corrector_warm(&field, beta, solve_cfg, None)?;
            let n_latent = z.n_latent();
            let sites: Vec<usize> = match params.subsample_sites {
                None => (0..n_latent).collect(),
                Some(count) => {
                    let mut rng =
                        rng::stream(params.seed, &[domain::EFRON_STEIN, r as u64, 2]);
                    let mut all: Vec<usize> = (0..n_latent).collect();
                    all.shuffle(&mut rng);
                    all.truncate(count.max(1).min(n_latent));
                    all
                }
            };
            let mut sq = Vec::with_capacity(sites.len());
            for &j in &sites {
                let zj = resample_site(&z, config, j, seed_zp)?;
                let fj = realize(&zj, config)?;
                let sj = solve_corrector_warm(&fj, beta, solve_cfg, Some(&base.phi))?;
                let d = sj.gamma_energy - base.gamma_energy;
                sq.push(d * d);
            }
            let scale = n_latent as f64 / sites.len() as f64;
            let bound_r = 0.5 * scale * compensated_sum(sq);
            Ok((base.gamma_energy, bound_r))
        })
        .collect();

    let mut gammas = Vec::with_capacity(params.n_replicas);
    let mut bounds = Vec::with_capacity(params.n_replicas);
    for item in per_replica {
        let (g, b) = item?;
        gammas.push(g);
        bounds.push(b);
    }
    Ok(EfronSteinEstimate {
        var_hat: sample_variance(&gammas),
        var_se: se_of_variance(&gammas),
        bound_hat: mean(&bounds),
        bound_se: se_of_mean(&bounds),
        n_replicas: params.n_replicas,
        subsampled: params.subsample_sites.is_some(),
    })
}

/// Draw a subset of `{0..n-1} \ {j}` with the size-biased law that weights a
/// subset A by `|A|! (n - |A| - 1)! / n!`: choose the size uniformly on
/// `0..n-1`, then a uniform subset of that size.
pub fn sample_subset_a(n: usize, j: usize, rng: &mut impl Rng) -> Vec<usize> {
    debug_assert!(j < n);
    let s = rng.random_range(0..n);
    let mut others: Vec<usize> = (0..n).filter(|&i| i != j).collect();
    others.shuffle(rng);
    others.truncate(s);
    others.sort_unstable();
    others
}

/// The subset weight `|A|! (n - |A| - 1)! / n!`.
pub fn subset_weight(n: usize, size: usize) -> f64 {
    let fact = |m: usize| -> f64 { (1..=m).map(|v| v as f64).product() };
    fact(size) * fact(n - size - 1) / fact(n)
}

/// Exact verification of the covariance identity
/// `Cov(g, f) = (1/2) sum_j sum_{A, j not in A} K_{n,A} E[D_j g(Z) D_j f(Z^A)]`
/// for i.i.d. Bernoulli(q) coordinates, by full enumeration. Both sides are
/// returned; n is capped at 4 (enumeration over 4^n pairs).
pub fn chatterjee_identity_exact(
    g: &dyn Fn(&[u8]) -> f64,
    f: &dyn Fn(&[u8]) -> f64,
    n: usize,
    q: f64,
) -> Result<(f64, f64), ResampleError> {
    if n == 0 || n > 4 {
        return Err(ResampleError::InvalidParam(format!(
            "enumeration supports 1 <= n <= 4, got {n}"
        )));
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(ResampleError::InvalidParam(format!("q = {q} not in [0,1]")));
    }
    let states = 1usize << n;
    let weight = |z: usize| -> f64 {
        (0..n)
            .map(|i| if z >> i & 1 == 1 { q } else { 1.0 - q })
            .product()
    };
    let bits = |z: usize| -> Vec<u8> { (0..n).map(|i| (z >> i & 1) as u8).collect() };

    // left side: covariance by enumeration over Z
    let mut e_g = 0.0;
    let mut e_f = 0.0;
    let mut e_gf = 0.0;
    for z in 0..states {
        let w = weight(z);
        let (gv, fv) = (g(&bits(z)), f(&bits(z)));
        e_g += w * gv;
        e_f += w * fv;
        e_gf += w * gv * fv;
    }
    let lhs = e_gf - e_g * e_f;

    // right side: enumerate (Z, Z'), every j and every admissible A
    let substitute = |z: usize, zp: usize, mask: usize| -> usize { (z & !mask) | (zp & mask) };
    let mut rhs = 0.0;
    for z in 0..states {
        for zp in 0..states {
            let w = weight(z) * weight(zp);
            for j in 0..n {
                let jbit = 1usize << j;
                let dg = g(&bits(substitute(z, zp, jbit))) - g(&bits(z));
                if dg == 0.0 {
                    continue;
                }
                for a_mask in 0..states {
                    if a_mask & jbit != 0 {
                        continue;
                    }
                    let k = subset_weight(n, (a_mask as u32).count_ones() as usize);
                    let za = substitute(z, zp, a_mask);
                    let df = f(&bits(substitute(za, zp, jbit))) - f(&bits(za));
                    rhs += 0.5 * w * k * dg * df;
                }
            }
        }
    }
    Ok((lhs, rhs))
}

/// Monte Carlo estimate of the two-term normal approximation bound together
/// with the empirical distance it dominates.
#[derive(Debug, Clone, Serialize)]
pub struct NormalBoundEstimate {
    pub mean_gamma: f64,
    pub sigma2: f64,
    pub sigma2_se: f64,
    /// `(1/(2 sigma^3)) sum_j E |Delta_j Gamma|^3`
    pub term1: f64,
    pub term1_se: f64,
    /// `(2/sigma^2) sqrt(Var(E[T | Z]))`
    pub term2: f64,
    pub term2_se: f64,
    pub dw_bound: f64,
    pub dw_bound_se: f64,
    pub dw_empirical: Option<f64>,
    pub dw_empirical_se: Option<f64>,
    pub degenerate: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct NormalBoundParams {
    pub outer_replicas: usize,
    pub inner_draws: usize,
    pub sigma_replicas: usize,
    pub seed: u64,
    pub min_outer: usize,
    pub min_inner: usize,
}

impl Default for NormalBoundParams {
    fn default() -> Self {
        NormalBoundParams {
            outer_replicas: 200,
            inner_draws: 64,
            sigma_replicas: 500,
            seed: 0,
            min_outer: 16,
            min_inner: 2,
        }
    }
}

/// Per-replica payload: the site-summed cubed differences and the two
/// half-averages of the pair statistic.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct NormalBoundReplica {
    pub replica: usize,
    pub gamma: f64,
    pub sum_abs_delta_cubed: f64,
    pub t_half_first: f64,
    pub t_half_second: f64,
}

pub fn normal_bound_estimate(
    config: &FieldConfig,
    beta: f64,
    solve_cfg: &SolveConfig,
    params: &NormalBoundParams,
) -> Result<(NormalBoundEstimate, Vec<NormalBoundReplica>), ResampleError> {
    if params.outer_replicas < params.min_outer.max(2) {
        return Err(ResampleError::InvalidParam(format!(
            "outer replicas {} below configured minimum {}",
            params.outer_replicas, params.min_outer
        )));
    }
    if params.inner_draws < params.min_inner.max(2) {
        return Err(ResampleError::InvalidParam(format!(
            "inner draws {} below configured minimum {}",
            params.inner_draws, params.min_inner
        )));
    }
    if params.sigma_replicas < 2 {
        return Err(ResampleError::InvalidParam(
            "sigma ensemble needs at least 2 replicas".into(),
        ));
    }
    config.validate()?;

    // independent ensemble for the variance and the empirical distance
    let sigma_gammas: Vec<f64> = (0..params.sigma_replicas)
        .into_par_iter()
        .map(|i| {
            let z = sample_latent(config, rng::mix(params.seed, &[domain::NB_SIGMA, i as u64]))?;
            let field = realize(&z, config)?;
            Ok(solve_corrector_warm(&field, beta, solve_cfg, None)?.gamma_energy)
        })
        .collect::<Result<_, ResampleError>>()?;
    let (mean_gamma, sigma2) = mean_and_var(&sigma_gammas);
    let sigma2_se = se_of_variance(&sigma_gammas);
    let degenerate = !(sigma2 > 0.0) || sigma2 < 1e-24 * mean_gamma.powi(2).max(1.0);
    if degenerate {
        return Ok((
            NormalBoundEstimate {
                mean_gamma,
                sigma2,
                sigma2_se,
                term1: 0.0,
                term1_se: 0.0,
                term2: 0.0,
                term2_se: 0.0,
                dw_bound: 0.0,
                dw_bound_se: 0.0,
                dw_empirical: None,
                dw_empirical_se: None,
                degenerate: true,
            },
            Vec::new(),
        ));
    }

    let replicas: Vec<NormalBoundReplica> = (0..params.outer_replicas)
        .into_par_iter()
        .map(|r| outer_replica(config, beta, solve_cfg, params, r))
        .collect::<Result<_, ResampleError>>()?;

    let sigma = sigma2.sqrt();
    let sigma3 = sigma2 * sigma;

    let s1: Vec<f64> = replicas.iter().map(|x| x.sum_abs_delta_cubed).collect();
    let s1_mean = mean(&s1);
    let term1 = s1_mean / (2.0 * sigma3);
    let s1_se = se_of_mean(&s1);
    let sigma2_rel = sigma2_se / sigma2;
    let term1_se = term1 * ((s1_se / s1_mean.max(f64::MIN_POSITIVE)).powi(2)
        + (1.5 * sigma2_rel).powi(2))
        .sqrt();

    let t1: Vec<f64> = replicas.iter().map(|x| x.t_half_first).collect();
    let t2: Vec<f64> = replicas.iter().map(|x| x.t_half_second).collect();
    let (v, v_se) = covariance_with_jackknife_se(&t1, &t2);
    let v_clamped = v.max(0.0);
    let term2 = 2.0 / sigma2 * v_clamped.sqrt();
    let term2_se = if v_clamped > v_se {
        let dv = v_se / (2.0 * v_clamped.sqrt());
        (2.0 / sigma2) * dv * (1.0 + sigma2_rel)
    } else {
        (2.0 / sigma2) * v_se.sqrt()
    };

    let standardized = standardize(&sigma_gammas).expect("non-degenerate ensemble");
    let dw = wasserstein_to_normal(&standardized).map_err(|e| {
        ResampleError::InvalidParam(format!("sigma ensemble too small for distance: {e}"))
    })?;
    let dw_se = bootstrap_dw_se(&sigma_gammas, params.seed, 200);

    Ok((
        NormalBoundEstimate {
            mean_gamma,
            sigma2,
            sigma2_se,
            term1,
            term1_se,
            term2,
            term2_se,
            dw_bound: term1 + term2,
            dw_bound_se: (term1_se.powi(2) + term2_se.powi(2)).sqrt(),
            dw_empirical: Some(dw),
            dw_empirical_se: Some(dw_se),
            degenerate: false,
        },
        replicas,
    ))
}

fn outer_replica(
    config: &FieldConfig,
    beta: f64,
    solve_cfg: &SolveConfig,
    params: &NormalBoundParams,
    r: usize,
) -> Result<NormalBoundReplica, ResampleError> {
    let z = sample_latent(config, rng::mix(params.seed, &[domain::NB_OUTER, r as u64]))?;
    let field = realize(&z, config)?;
    let base = solve_corrector_warm(&field, beta, solve_cfg, None)?;
    let n_latent = z.n_latent();
    let solve_from = |state: &LatentState, warm: &[f64]| -> Result<CorrectorSolution, ResampleError> {
        let f = realize(state, config)?;
        Ok(solve_corrector_warm(&f, beta, solve_cfg, Some(warm))?)
    };

    let mut sum_cubed = 0.0;
    let mut t_draws = Vec::with_capacity(params.inner_draws);
    for i in 0..params.inner_draws {
        let seed_zp = rng::mix(params.seed, &[domain::NB_INNER, r as u64, i as u64]);
        let mut t_terms = Vec::with_capacity(n_latent);
        for j in 0..n_latent {
            let zj = resample_site(&z, config, j, seed_zp)?;
            let gamma_j = solve_from(&zj, &base.phi)?.gamma_energy;
            let delta_j = gamma_j - base.gamma_energy;
            if i == 0 {
                sum_cubed += delta_j.abs().powi(3);
            }
            let mut subset_rng = rng::stream(
                params.seed,
                &[domain::NB_SUBSET, r as u64, i as u64, j as u64],
            );
            let a = sample_subset_a(n_latent, j, &mut subset_rng);
            let mut za = z.clone();
            for &site in &a {
                za = resample_site(&za, config, site, seed_zp)?;
            }
            let sol_a = solve_from(&za, &base.phi)?;
            let zaj = resample_site(&za, config, j, seed_zp)?;
            let gamma_aj = solve_from(&zaj, &sol_a.phi)?.gamma_energy;
            t_terms.push(delta_j * (gamma_aj - sol_a.gamma_energy));
        }
        t_draws.push(0.5 * compensated_sum(t_terms));
    }
    let half = params.inner_draws / 2;
    Ok(NormalBoundReplica {
        replica: r,
        gamma: base.gamma_energy,
        sum_abs_delta_cubed: sum_cubed,
        t_half_first: mean(&t_draws[..half]),
        t_half_second: mean(&t_draws[half..]),
    })
}

/// Sample covariance of two paired samples with a delete-one jackknife
/// standard error.
fn covariance_with_jackknife_se(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len();
    assert!(n >= 3);
    let nf = n as f64;
    let (mx, my) = (mean(x), mean(y));
    let sxy = compensated_sum(x.iter().zip(y).map(|(&a, &b)| (a - mx) * (b - my)));
    let cov = sxy / (nf - 1.0);
    let sx = compensated_sum(x.iter().copied());
    let sy = compensated_sum(y.iter().copied());
    let spr = compensated_sum(x.iter().zip(y).map(|(&a, &b)| a * b));
    let mut jack = Vec::with_capacity(n);
    for i in 0..n {
        let nr = nf - 1.0;
        let mxr = (sx - x[i]) / nr;
        let myr = (sy - y[i]) / nr;
        let spp = spr - x[i] * y[i];
        jack.push((spp - nr * mxr * myr) / (nr - 1.0));
    }
    let jm = mean(&jack);
    let var_jack =
        (nf - 1.0) / nf * compensated_sum(jack.iter().map(|&v| (v - jm) * (v - jm)));
    (cov, var_jack.sqrt())
}

fn bootstrap_dw_se(gammas: &[f64], seed: u64, n_boot: usize) -> f64 {
    let n = gammas.len();
    let vals: Vec<f64> = (0..n_boot)
        .filter_map(|b| {
            let mut rng = rng::stream(seed, &[domain::BOOTSTRAP, b as u64]);
            let resampled: Vec<f64> = (0..n).map(|_| gammas[rng.random_range(0..n)]).collect();
            let std = standardize(&resampled)?;
            wasserstein_to_normal(&std).ok()
        })
        .collect();
    if vals.len() < 2 {
        return 0.0;
    }
    sample_variance(&vals).sqrt()
}

/// Simple flux ensemble: one solve per replica on independent fields.
pub fn gamma_ensemble(
    config: &FieldConfig,
    beta: f64,
    solve_cfg: &SolveConfig,
    n_replicas: usize,
    seed: u64,
) -> Result<Vec<f64>, ResampleError> {
    config.validate()?;
    (0..n_replicas)
        .into_par_iter()
        .map(|r| {
            let z = sample_latent(config, rng::mix(seed, &[domain::REPLICA, r as u64]))?;
            let field = realize(&z, config)?;
            Ok(solve_corrector_warm(&field, beta, solve_cfg, None)?.gamma_energy)
        })
        .collect()
}
