//! Distributional and locality properties of the field generators, checked
//! against direct geometry and classical two-sample statistics.

use cellflux_core::fields::{
    field_diff_cells, realize, resample_site, sample_latent, CheckerboardLaw, FieldConfig,
    LatentState, ModelKind, Pore, RadiusLaw, SitePayload,
};
use cellflux_core::rng;
use proptest::prelude::*;
use rand::Rng;

#[test]
fn site_mean_obeys_the_law_of_large_numbers() {
    // two-point law at p = 1/2 has mean (a_lo + a_hi)/2 and variance
    // (a_hi - a_lo)^2 / 4 per site
    let cfg = FieldConfig::checkerboard(2, 4, 1, 1.0, 4.0, CheckerboardLaw::TwoPoint { p: 0.5 });
    let n_seeds = 100_000;
    let mut sum = 0.0;
    let mut count = 0usize;
    for seed in 0..n_seeds {
        let z = sample_latent(&cfg, seed).unwrap();
        for s in &z.sites {
            if let SitePayload::Value(v) = s {
                sum += v;
                count += 1;
            }
        }
    }
    let mean = sum / count as f64;
    let se = (1.5 * 1.5 / count as f64).sqrt();
    assert!(
        (mean - 2.5).abs() < 3.0 * se,
        "site mean {mean} vs 2.5 (MC se {se:.2e})"
    );
}

#[test]
fn single_pore_covers_the_disc() {
    let cfg = FieldConfig::poisson(2, 4, 8, 1.0, 4.0, 1.0, 0.4, RadiusLaw::Fixed { r: 0.4 });
    let grid = cfg.grid();
    let site = grid.site_index([1, 1, 0]);
    let mut sites = vec![SitePayload::Pores(vec![]); grid.n_sites()];
    sites[site] = SitePayload::Pores(vec![Pore {
        center: [0.5, 0.5, 0.0],
        radius: 0.4,
    }]);
    let z = LatentState {
        model_id: ModelKind::PoissonPores,
        d: 2,
        l: 4,
        sites,
        extra_site: None,
    };
    let field = realize(&z, &cfg).unwrap();
    let count = field.values.iter().filter(|&&v| v == 4.0).count();

    // direct geometric count of cell centers inside the disc
    let center = [1.5, 1.5, 0.0];
    let direct = (0..grid.n_cells())
        .filter(|&i| grid.torus_dist(grid.cell_center(i), center) < 0.4)
        .count();
    assert_eq!(count, direct);

    // area estimate, within one layer of boundary cells
    let m = cfg.m as f64;
    let area_cells = std::f64::consts::PI * 0.4 * 0.4 * m * m;
    let layer = 2.0 * std::f64::consts::PI * 0.4 * m * 2.0f64.sqrt();
    assert!(
        (count as f64 - area_cells).abs() <= layer,
        "{count} pore cells vs {area_cells:.1} +- {layer:.1}"
    );
}

#[test]
fn resampling_perturbs_only_a_locality_ball() {
    let configs = [
        FieldConfig::checkerboard(2, 4, 4, 1.0, 4.0, CheckerboardLaw::Uniform),
        FieldConfig::poisson(2, 4, 4, 1.0, 4.0, 1.5, 0.4, RadiusLaw::Uniform),
        FieldConfig::series(8, 2, 1.0, 2.0, 0.5, true),
        FieldConfig::series(8, 2, 1.0, 2.0, 0.5, false),
    ];
    for cfg in configs {
        let grid = cfg.grid();
        let tau = cfg.tau();
        for seed in 0..3u64 {
            let z = sample_latent(&cfg, seed).unwrap();
            let base = realize(&z, &cfg).unwrap();
            for k in 0..z.n_latent() {
                let zk = resample_site(&z, &cfg, k, seed + 1000).unwrap();
                let moved = realize(&zk, &cfg).unwrap();
                let site_point = if k < grid.n_sites() {
                    grid.site_point(k)
                } else {
                    // chain end variable sits at the far lattice point
                    let mut p = grid.site_point(grid.n_sites() - 1);
                    p[0] += 1.0;
                    p
                };
                for idx in field_diff_cells(&base, &moved) {
                    let dist = grid.torus_dist(grid.cell_center(idx), site_point);
                    assert!(
                        dist < tau,
                        "{:?}: site {k} changed a cell at distance {dist} >= tau {tau}",
                        cfg.model
                    );
                }
            }
        }
    }
}

#[test]
fn resampling_every_site_reproduces_a_fresh_draw() {
    let cfg = FieldConfig::poisson(2, 4, 2, 1.0, 4.0, 1.2, 0.3, RadiusLaw::Uniform);
    let z0 = sample_latent(&cfg, 111).unwrap();
    let mut z = z0.clone();
    for k in 0..z0.n_latent() {
        z = resample_site(&z, &cfg, k, 222).unwrap();
    }
    let fresh = sample_latent(&cfg, 222).unwrap();
    assert_eq!(z, fresh);
}

#[test]
fn resampled_marginals_match_fresh_marginals() {
    // two-sample Kolmogorov-Smirnov on the uniform checkerboard site law
    let cfg = FieldConfig::checkerboard(1, 1, 1, 1.0, 4.0, CheckerboardLaw::Uniform);
    let n = 10_000usize;
    let via_resample: Vec<f64> = (0..n)
        .map(|i| {
            let z = sample_latent(&cfg, 2 * i as u64).unwrap();
            let zr = resample_site(&z, &cfg, 0, 2 * i as u64 + 1).unwrap();
            match zr.sites[0] {
                SitePayload::Value(v) => v,
                _ => unreachable!(),
            }
        })
        .collect();
    let fresh: Vec<f64> = (0..n)
        .map(|i| {
            let z = sample_latent(&cfg, 1_000_000 + i as u64).unwrap();
            match z.sites[0] {
                SitePayload::Value(v) => v,
                _ => unreachable!(),
            }
        })
        .collect();
    let mut a = via_resample.clone();
    let mut b = fresh.clone();
    a.sort_by(|x, y| x.partial_cmp(y).unwrap());
    b.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let mut ks: f64 = 0.0;
    let (mut i, mut j) = (0usize, 0usize);
    while i < n && j < n {
        if a[i] <= b[j] {
            i += 1;
        } else {
            j += 1;
        }
        ks = ks.max((i as f64 / n as f64 - j as f64 / n as f64).abs());
    }
    // critical value at alpha = 0.001 for equal sample sizes
    let crit = 1.949 * (2.0 / n as f64).sqrt();
    assert!(ks < crit, "KS statistic {ks} above {crit}");
}

#[test]
fn pore_count_matches_the_intensity() {
    let mu = 1.3;
    let cfg = FieldConfig::poisson(2, 4, 1, 1.0, 4.0, mu, 0.3, RadiusLaw::Uniform);
    let n_seeds = 20_000u64;
    let mut total = 0usize;
    let mut sites = 0usize;
    for seed in 0..n_seeds {
        let z = sample_latent(&cfg, seed).unwrap();
        for s in &z.sites {
            if let SitePayload::Pores(p) = s {
                total += p.len();
                sites += 1;
            }
        }
    }
    let mean = total as f64 / sites as f64;
    let se = (mu / sites as f64).sqrt();
    assert!(
        (mean - mu).abs() < 4.0 * se,
        "pores per site {mean} vs {mu} (se {se:.2e})"
    );
}

#[test]
fn bernoulli_sites_follow_p() {
    let cfg = FieldConfig::series(64, 1, 1.0, 2.0, 0.3, false);
    let mut ones = 0usize;
    let mut count = 0usize;
    for seed in 0..2000u64 {
        let z = sample_latent(&cfg, seed).unwrap();
        for s in &z.sites {
            if let SitePayload::Bernoulli(b) = s {
                ones += usize::from(*b);
                count += 1;
            }
        }
    }
    let freq = ones as f64 / count as f64;
    let se = (0.3 * 0.7 / count as f64).sqrt();
    assert!((freq - 0.3).abs() < 4.0 * se);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn realized_fields_respect_ellipticity(
        seed in any::<u64>(),
        d in 1usize..=3,
        l in 2u32..=4,
        model in 0usize..3,
    ) {
        let cfg = match model {
            0 => FieldConfig::checkerboard(d, l, 2, 0.5, 3.0, CheckerboardLaw::Uniform),
            1 => FieldConfig::poisson(d, l, 2, 0.5, 3.0, 1.0, 0.4, RadiusLaw::Uniform),
            _ => FieldConfig::series(l, 2, 0.5, 3.0, 0.5, seed % 2 == 0),
        };
        if cfg.model == cellflux_core::ModelKind::SeriesResistor && d != 1 {
            return Ok(());
        }
        let (lo, hi) = cfg.ellipticity_bounds();
        let z = sample_latent(&cfg, seed).unwrap();
        let f = realize(&z, &cfg).unwrap();
        prop_assert!(f.values.iter().all(|&v| v >= lo && v <= hi));
        prop_assert_eq!(f.values.len(), cfg.grid().n_cells());
    }

    #[test]
    fn payloads_stay_in_declared_ranges(seed in any::<u64>()) {
        let cfg = FieldConfig::poisson(2, 3, 1, 1.0, 2.0, 2.0, 0.45, RadiusLaw::Uniform);
        let z = sample_latent(&cfg, seed).unwrap();
        for s in &z.sites {
            if let SitePayload::Pores(pores) = s {
                for p in pores {
                    prop_assert!(p.radius > 0.0 && p.radius <= 0.45);
                    for a in 0..2 {
                        prop_assert!((0.0..1.0).contains(&p.center[a]));
                    }
                }
            }
        }
    }
}

#[test]
fn uniform_law_uses_the_whole_range() {
    let cfg = FieldConfig::checkerboard(2, 8, 1, 1.0, 4.0, CheckerboardLaw::Uniform);
    let z = sample_latent(&cfg, 31).unwrap();
    let vals: Vec<f64> = z
        .sites
        .iter()
        .map(|s| match s {
            SitePayload::Value(v) => *v,
            _ => unreachable!(),
        })
        .collect();
    let min = vals.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    assert!(min >= 1.0 && max <= 4.0 && max - min > 1.5);
}

#[test]
fn distinct_sites_have_independent_streams() {
    // perturbing the seed for one site leaves another site's draw unchanged
    let cfg = FieldConfig::checkerboard(2, 4, 1, 1.0, 4.0, CheckerboardLaw::Uniform);
    let mut r = rng::stream(0, &[]);
    for _ in 0..32 {
        let seed: u64 = r.random();
        let z = sample_latent(&cfg, seed).unwrap();
        let zr = resample_site(&z, &cfg, 3, seed ^ 0xdead_beef).unwrap();
        for k in 0..z.sites.len() {
            if k != 3 {
                assert_eq!(z.sites[k], zr.sites[k]);
            }
        }
    }
}
