//! Random coefficient fields on the period cell.
//!
//! Three scalar models are provided: a random checkerboard (one i.i.d. value
//! per unit cube), a Poisson pore model (spherical inclusions of high
//! conductivity scattered by a Poisson point process), and a one-dimensional
//! series-resistor chain used as a variance counterexample.
//!
//! The latent state `Z` is the collection of per-site random variables that
//! drive the field. Sampling is counter-based per site, so replacing one
//! site's variable never touches any other site's stream.

use crate::grid::Grid;
use crate::rng::{self, domain};
use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FieldError {
    #[error("invalid field config: {0}")]
    InvalidConfig(String),
    #[error("latent state does not match config: {0}")]
    Mismatch(String),
    #[error("site index {index} out of range (have {n_sites} sites)")]
    SiteOutOfRange { index: usize, n_sites: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Checkerboard,
    PoissonPores,
    SeriesResistor,
}

/// Law of the per-site value in the checkerboard model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckerboardLaw {
    /// `a_hi` with probability `p`, else `a_lo`.
    TwoPoint { p: f64 },
    /// Uniform on `[a_lo, a_hi]`.
    Uniform,
}

/// Law of the pore radius in the Poisson model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RadiusLaw {
    Fixed { r: f64 },
    /// Uniform on `(0, R_max]`.
    Uniform,
}

/// Model selection plus every law parameter; serializes with these exact
/// field names so experiment manifests are self-describing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldConfig {
    pub model: ModelKind,
    pub d: usize,
    #[serde(rename = "L")]
    pub l: u32,
    pub a_lo: f64,
    pub a_hi: f64,
    /// Checkerboard site law.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub law: Option<CheckerboardLaw>,
    /// Poisson pore intensity per unit cube.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    #[serde(rename = "R_max", default, skip_serializing_if = "Option::is_none")]
    pub r_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius_law: Option<RadiusLaw>,
    /// Bernoulli parameter of the series model.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    /// Series model: couple neighbouring sites through `a_k = 1/(2 + Z_{k+1} - Z_k)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dependent: Option<bool>,
    /// Cells per unit length (grid spacing h = 1/m).
    pub m: u32,
}

impl FieldConfig {
    pub fn checkerboard(d: usize, l: u32, m: u32, a_lo: f64, a_hi: f64, law: CheckerboardLaw) -> Self {
        FieldConfig {
            model: ModelKind::Checkerboard,
            d,
            l,
            a_lo,
            a_hi,
            law: Some(law),
            mu: None,
            r_max: None,
            radius_law: None,
            p: None,
            dependent: None,
            m,
        }
    }

    pub fn poisson(
        d: usize,
        l: u32,
        m: u32,
        a_lo: f64,
        a_hi: f64,
        mu: f64,
        r_max: f64,
        radius_law: RadiusLaw,
    ) -> Self {
        FieldConfig {
            model: ModelKind::PoissonPores,
            d,
            l,
            a_lo,
            a_hi,
            law: None,
            mu: Some(mu),
            r_max: Some(r_max),
            radius_law: Some(radius_law),
            p: None,
            dependent: None,
            m,
        }
    }

    pub fn series(l: u32, m: u32, a_lo: f64, a_hi: f64, p: f64, dependent: bool) -> Self {
        FieldConfig {
            model: ModelKind::SeriesResistor,
            d: 1,
            l,
            a_lo,
            a_hi,
            law: None,
            mu: None,
            r_max: None,
            radius_law: None,
            p: Some(p),
            dependent: Some(dependent),
            m,
        }
    }

    pub fn grid(&self) -> Grid {
        Grid::new(self.d, self.l, self.m)
    }

    pub fn validate(&self) -> Result<(), FieldError> {
        let err = |msg: String| Err(FieldError::InvalidConfig(msg));
        if !(1..=3).contains(&self.d) {
            return err(format!("d = {} not in 1..=3", self.d));
        }
        if self.l < 1 || self.m < 1 {
            return err("L and m must be at least 1".into());
        }
        if !(self.a_lo > 0.0) {
            return err(format!("a_lo = {} must be positive", self.a_lo));
        }
        if self.a_hi < self.a_lo {
            return err(format!("a_hi = {} below a_lo = {}", self.a_hi, self.a_lo));
        }
        match self.model {
            ModelKind::Checkerboard => {
                match self.law {
                    Some(CheckerboardLaw::TwoPoint { p }) => {
                        if !(0.0..=1.0).contains(&p) {
                            return err(format!("two_point p = {p} outside [0, 1]"));
                        }
                    }
                    Some(CheckerboardLaw::Uniform) => {}
                    None => return err("checkerboard model needs a site law".into()),
                }
            }
            ModelKind::PoissonPores => {
                let mu = self.mu.ok_or_else(|| {
                    FieldError::InvalidConfig("poisson model needs an intensity mu".into())
                })?;
                if !(mu > 0.0) {
                    return err(format!("mu = {mu} must be positive"));
                }
                let r_max = self.r_max.ok_or_else(|| {
                    FieldError::InvalidConfig("poisson model needs R_max".into())
                })?;
                if !(r_max > 0.0) {
                    return err(format!("R_max = {r_max} must be positive"));
                }
                if let Some(RadiusLaw::Fixed { r }) = self.radius_law {
                    if !(r > 0.0 && r <= r_max) {
                        return err(format!("fixed radius r = {r} outside (0, R_max]"));
                    }
                }
            }
            ModelKind::SeriesResistor => {
                if self.d != 1 {
                    return err("series model is one-dimensional".into());
                }
                let p = self.p.ok_or_else(|| {
                    FieldError::InvalidConfig("series model needs a Bernoulli p".into())
                })?;
                if !(0.0..=1.0).contains(&p) {
                    return err(format!("series p = {p} outside [0, 1]"));
                }
            }
        }
        Ok(())
    }

    /// Locality radius: beyond this distance from site k the realized field
    /// does not depend on `Z_k`.
    pub fn tau(&self) -> f64 {
        let sqrt_d = (self.d as f64).sqrt();
        match self.model {
            ModelKind::Checkerboard => sqrt_d,
            ModelKind::PoissonPores => self.r_max.unwrap_or(0.0) + sqrt_d,
            ModelKind::SeriesResistor => {
                if self.dependent.unwrap_or(false) {
                    2.0
                } else {
                    1.0
                }
            }
        }
    }

    /// Attained ellipticity bounds of the realized field.
    pub fn ellipticity_bounds(&self) -> (f64, f64) {
        match self.model {
            ModelKind::SeriesResistor if self.dependent.unwrap_or(false) => (1.0 / 3.0, 1.0),
            _ => (self.a_lo, self.a_hi),
        }
    }

    fn dependent_series(&self) -> bool {
        self.model == ModelKind::SeriesResistor && self.dependent.unwrap_or(false)
    }
}

/// A spherical inclusion attached to a site: center offset within the unit
/// cube and radius.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pore {
    pub center: [f64; 3],
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SitePayload {
    Value(f64),
    Pores(Vec<Pore>),
    Bernoulli(bool),
}

/// The i.i.d. site variables driving a coefficient field; the unit of
/// resampling for all difference statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentState {
    pub model_id: ModelKind,
    pub d: usize,
    #[serde(rename = "L")]
    pub l: u32,
    pub sites: Vec<SitePayload>,
    /// One extra variable closing the dependent series chain.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extra_site: Option<SitePayload>,
}

impl LatentState {
    /// Number of latent variables, including the extra chain site if present.
    pub fn n_latent(&self) -> usize {
        self.sites.len() + usize::from(self.extra_site.is_some())
    }

    fn payload(&self, k: usize) -> &SitePayload {
        if k < self.sites.len() {
            &self.sites[k]
        } else {
            self.extra_site.as_ref().expect("extra site index")
        }
    }
}

/// Scalar conductivity sampled at cell centers, periodic in every axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientField {
    pub values: Vec<f64>,
    pub d: usize,
    #[serde(rename = "L")]
    pub l: u32,
    pub m: u32,
}

impl CoefficientField {
    pub fn grid(&self) -> Grid {
        Grid::new(self.d, self.l, self.m)
    }

    pub fn h(&self) -> f64 {
        1.0 / self.m as f64
    }

    pub fn constant(grid: Grid, c: f64) -> Self {
        CoefficientField {
            values: vec![c; grid.n_cells()],
            d: grid.d,
            l: grid.l,
            m: grid.m,
        }
    }
}

fn sample_site(config: &FieldConfig, seed: u64, k: usize) -> SitePayload {
    let mut rng = rng::stream(seed, &[domain::SITE, k as u64]);
    match config.model {
        ModelKind::Checkerboard => {
            let v = match config.law.expect("validated") {
                CheckerboardLaw::TwoPoint { p } => {
                    if rng.random::<f64>() < p {
                        config.a_hi
                    } else {
                        config.a_lo
                    }
                }
                CheckerboardLaw::Uniform => {
                    config.a_lo + (config.a_hi - config.a_lo) * rng.random::<f64>()
                }
            };
            SitePayload::Value(v)
        }
        ModelKind::PoissonPores => {
            let mu = config.mu.expect("validated");
            let r_max = config.r_max.expect("validated");
            let n = Poisson::new(mu).expect("validated").sample(&mut rng) as usize;
            let pores = (0..n)
                .map(|_| {
                    let mut center = [0.0; 3];
                    for c in center.iter_mut().take(config.d) {
                        *c = rng.random::<f64>();
                    }
                    let radius = match config.radius_law.unwrap_or(RadiusLaw::Fixed { r: r_max }) {
                        RadiusLaw::Fixed { r } => r,
                        // 1 - u maps [0, 1) onto (0, 1].
                        RadiusLaw::Uniform => (1.0 - rng.random::<f64>()) * r_max,
                    };
                    Pore { center, radius }
                })
                .collect();
            SitePayload::Pores(pores)
        }
        ModelKind::SeriesResistor => {
            SitePayload::Bernoulli(rng.random::<f64>() < config.p.expect("validated"))
        }
    }
}

/// Draw the full latent state for `config` from `seed`.
///
/// Site k's draw depends only on `(seed, k)`, so the same site under the
/// same seed is bitwise identical no matter how many other sites exist or
/// in which order they are produced.
pub fn sample_latent(config: &FieldConfig, seed: u64) -> Result<LatentState, FieldError> {
    config.validate()?;
    let n_sites = config.grid().n_sites();
    let sites = (0..n_sites).map(|k| sample_site(config, seed, k)).collect();
    let extra_site = config
        .dependent_series()
        .then(|| sample_site(config, seed, n_sites));
    Ok(LatentState {
        model_id: config.model,
        d: config.d,
        l: config.l,
        sites,
        extra_site,
    })
}

/// Copy of `z` with only site `k` redrawn from its law using `seed`.
///
/// For the dependent series chain, `k == L` addresses the extra site.
pub fn resample_site(
    z: &LatentState,
    config: &FieldConfig,
    k: usize,
    seed: u64,
) -> Result<LatentState, FieldError> {
    check_match(z, config)?;
    let n = z.n_latent();
    if k >= n {
        return Err(FieldError::SiteOutOfRange {
            index: k,
            n_sites: n,
        });
    }
    let mut out = z.clone();
    let fresh = sample_site(config, seed, k);
    if k < z.sites.len() {
        out.sites[k] = fresh;
    } else {
        out.extra_site = Some(fresh);
    }
    Ok(out)
}

fn check_match(z: &LatentState, config: &FieldConfig) -> Result<(), FieldError> {
    if z.model_id != config.model || z.d != config.d || z.l != config.l {
        return Err(FieldError::Mismatch(format!(
            "state is ({:?}, d={}, L={}), config is ({:?}, d={}, L={})",
            z.model_id, z.d, z.l, config.model, config.d, config.l
        )));
    }
    if z.sites.len() != config.grid().n_sites() {
        return Err(FieldError::Mismatch(format!(
            "state has {} sites, config wants {}",
            z.sites.len(),
            config.grid().n_sites()
        )));
    }
    if config.dependent_series() != z.extra_site.is_some() {
        return Err(FieldError::Mismatch(
            "dependent-series chain site missing or unexpected".into(),
        ));
    }
    Ok(())
}

/// Realize the conductivity on the grid. Deterministic in `z`.
pub fn realize(z: &LatentState, config: &FieldConfig) -> Result<CoefficientField, FieldError> {
    config.validate()?;
    check_match(z, config)?;
    let grid = config.grid();
    let n = grid.n_cells();
    let values = match config.model {
        ModelKind::Checkerboard => {
            let mut values = vec![0.0; n];
            for (idx, v) in values.iter_mut().enumerate() {
                let site = grid.site_of_cell(grid.cell_coords(idx));
                *v = match z.sites[site] {
                    SitePayload::Value(x) => x,
                    _ => unreachable!("checked by check_match"),
                };
            }
            values
        }
        ModelKind::PoissonPores => realize_pores(z, config, grid),
        ModelKind::SeriesResistor => {
            let conds = series_conductivities(config, z)?;
            let mut values = vec![0.0; n];
            let m = config.m as usize;
            for (idx, v) in values.iter_mut().enumerate() {
                *v = conds[idx / m];
            }
            values
        }
    };
    Ok(CoefficientField {
        values,
        d: config.d,
        l: config.l,
        m: config.m,
    })
}

fn realize_pores(z: &LatentState, config: &FieldConfig, grid: Grid) -> Vec<f64> {
    let mut values = vec![config.a_lo; grid.n_cells()];
    let h = grid.h();
    let ext = grid.extents();
    for (site, payload) in z.sites.iter().enumerate() {
        let pores = match payload {
            SitePayload::Pores(p) => p,
            _ => unreachable!("checked by check_match"),
        };
        let corner = grid.site_point(site);
        for pore in pores {
            let mut center = [0.0; 3];
            for a in 0..config.d {
                center[a] = corner[a] + pore.center[a];
            }
            // Scan the bounding box of the pore, wrapping across the period.
            // If the box spans the whole axis, visit each index once.
            let mut lo = [0i64; 3];
            let mut hi = [0i64; 3];
            for a in 0..config.d {
                lo[a] = ((center[a] - pore.radius) / h).floor() as i64 - 1;
                hi[a] = ((center[a] + pore.radius) / h).ceil() as i64 + 1;
                if hi[a] - lo[a] >= ext[a] as i64 {
                    lo[a] = 0;
                    hi[a] = ext[a] as i64 - 1;
                }
            }
            for c0 in lo[0]..=hi[0] {
                for c1 in lo[1]..=hi[1] {
                    for c2 in lo[2]..=hi[2] {
                        let cell = [
                            c0.rem_euclid(ext[0] as i64) as usize,
                            c1.rem_euclid(ext[1] as i64) as usize,
                            c2.rem_euclid(ext[2] as i64) as usize,
                        ];
                        let idx = grid.cell_index(cell);
                        if grid.torus_dist(grid.cell_center(idx), center) < pore.radius {
                            values[idx] = config.a_hi;
                        }
                    }
                }
            }
        }
    }
    values
}

/// Per-unit-cell conductivities of the one-dimensional series chain.
///
/// Dependent chain: `a_k = 1/(2 + Z_{k+1} - Z_k)` with the extra end site,
/// so `1/Γ_L` telescopes. Independent chain: `a_k = a_lo + (a_hi - a_lo) Z_k`.
pub fn series_conductivities(
    config: &FieldConfig,
    z: &LatentState,
) -> Result<Vec<f64>, FieldError> {
    if config.model != ModelKind::SeriesResistor || config.d != 1 {
        return Err(FieldError::InvalidConfig(
            "series conductivities need the one-dimensional series model".into(),
        ));
    }
    check_match(z, config)?;
    let l = config.l as usize;
    let bit = |p: &SitePayload| -> f64 {
        match p {
            SitePayload::Bernoulli(b) => f64::from(*b),
            _ => unreachable!("checked by check_match"),
        }
    };
    let conds = if config.dependent_series() {
        (0..l)
            .map(|k| 1.0 / (2.0 + bit(z.payload(k + 1)) - bit(z.payload(k))))
            .collect()
    } else {
        (0..l)
            .map(|k| config.a_lo + (config.a_hi - config.a_lo) * bit(z.payload(k)))
            .collect()
    };
    Ok(conds)
}

/// Translate the latent lattice by an integer vector (periodically).
///
/// Realizing the translated state equals cyclically shifting the realized
/// grid by `m * shift` cells; only meaningful for the per-site models.
pub fn translate_sites(z: &LatentState, shift: [i64; 3]) -> LatentState {
    let grid = Grid::new(z.d, z.l, 1);
    let mut sites = z.sites.clone();
    for (idx, payload) in z.sites.iter().enumerate() {
        let s = grid.cell_coords(idx);
        let mut t = [0usize; 3];
        let ext = grid.extents();
        for a in 0..3 {
            t[a] = (s[a] as i64 + shift[a]).rem_euclid(ext[a] as i64) as usize;
        }
        sites[grid.cell_index(t)] = payload.clone();
    }
    LatentState {
        model_id: z.model_id,
        d: z.d,
        l: z.l,
        sites,
        extra_site: z.extra_site.clone(),
    }
}

/// Indices of cells whose realized values differ between two fields.
pub fn field_diff_cells(a: &CoefficientField, b: &CoefficientField) -> Vec<usize> {
    assert_eq!(a.values.len(), b.values.len());
    a.values
        .iter()
        .zip(&b.values)
        .enumerate()
        .filter(|(_, (x, y))| x != y)
        .map(|(i, _)| i)
        .collect()
}
