//! The difference calculus at work: identity between the direct and local
//! first difference, a-priori bounds for second differences, distance decay,
//! Efron-Stein against a delta-method oracle, and exact subset-measure
//! arithmetic.

use cellflux_core::fields::{CheckerboardLaw, FieldConfig};
use cellflux_core::resample::{
    chatterjee_identity_exact, delta_j_gamma_direct, delta_j_gamma_local, delta_kj_gamma,
    efron_stein_estimate, normal_bound_estimate, sample_subset_a, second_difference_bound_sides,
    subset_weight, EfronSteinParams, NormalBoundParams, ResampleTriple,
};
use cellflux_core::rng;
use cellflux_core::solver::SolveConfig;

fn checkerboard_triple(l: u32, m: u32, seed: u64) -> ResampleTriple {
    let cfg = FieldConfig::checkerboard(2, l, m, 1.0, 4.0, CheckerboardLaw::TwoPoint { p: 0.5 });
    ResampleTriple::new(cfg, 0.0, SolveConfig::default(), seed).unwrap()
}

#[test]
fn direct_and_local_first_differences_agree() {
    for seed in 0..6u64 {
        let t = checkerboard_triple(4, 4, seed);
        for j in [1usize, 6, 11] {
            let direct = delta_j_gamma_direct(&t, j).unwrap();
            let local = delta_j_gamma_local(&t, j).unwrap();
            let scale = direct.abs().max(local.abs()).max(1e-10);
            assert!(
                (direct - local).abs() / scale < 1e-7,
                "seed {seed} j {j}: {direct} vs {local}"
            );
        }
    }
}

#[test]
fn far_separated_second_difference_obeys_the_energy_bound() {
    // torus distance between the two sites must clear twice the locality
    // radius plus a face layer
    let t = checkerboard_triple(8, 2, 3);
    let grid = t.config.grid();
    let k = grid.site_index([0, 0, 0]);
    for j_coords in [[4usize, 0, 0], [4, 4, 0], [0, 4, 0], [4, 2, 0]] {
        let j = grid.site_index(j_coords);
        let (lhs, rhs) = second_difference_bound_sides(&t, k, j).unwrap();
        assert!(
            lhs <= rhs * (1.0 + 1e-6) + 1e-18,
            "j at {j_coords:?}: {lhs} > {rhs}"
        );
    }
}

#[test]
fn second_differences_decay_with_site_separation() {
    // a continuous site law, so a replacement almost surely changes the field
    let cfg = FieldConfig::checkerboard(2, 8, 1, 1.0, 4.0, CheckerboardLaw::Uniform);
    let grid = cfg.grid();
    let k = grid.site_index([0, 0, 0]);
    // representative sites per dyadic distance band
    let bands_sites: [Vec<[usize; 3]>; 3] = [
        vec![[1, 0, 0], [1, 1, 0], [0, 1, 0]],
        vec![[2, 0, 0], [2, 2, 0], [0, 2, 0], [3, 0, 0]],
        vec![[4, 0, 0], [4, 4, 0], [0, 4, 0], [4, 2, 0]],
    ];

    let median = |mut v: Vec<f64>| -> f64 {
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v[v.len() / 2]
    };
    let mut bands = Vec::new();
    for js in &bands_sites {
        let mut mags = Vec::new();
        for seed in 0..40u64 {
            let t = ResampleTriple::new(cfg.clone(), 0.0, SolveConfig::default(), 100 + seed)
                .unwrap();
            for jc in js {
                let rec = delta_kj_gamma(&t, k, grid.site_index(*jc)).unwrap();
                mags.push(rec.delta2_gamma.unwrap().abs());
            }
        }
        bands.push(median(mags));
    }
    assert!(
        bands[0] > bands[1] && bands[1] > bands[2],
        "second-difference medians not decreasing: {bands:?}"
    );
}

#[test]
fn efron_stein_bound_tracks_the_delta_method_for_the_series_chain() {
    // independent series, a in {1, 2} with p = 1/2: the flux is a smooth
    // function of the mean of 1/a, so the variance is close to the
    // delta-method value Var = (1/mu^4) Var(1/a) / L with mu = E[1/a]
    let l = 16u32;
    let cfg = FieldConfig::series(l, 1, 1.0, 2.0, 0.5, false);
    let est = efron_stein_estimate(
        &cfg,
        0.0,
        &SolveConfig::default(),
        &EfronSteinParams {
            n_replicas: 400,
            seed: 5,
            subsample_sites: None,
        },
    )
    .unwrap();
    let mu = 0.75f64; // E[1/a]
    let var_inv = 0.0625; // Var(1/a) for values {1, 1/2} at p = 1/2
    let delta_method = var_inv / (mu.powi(4) * l as f64);
    assert!(est.bound_hat <= 4.0 * delta_method && est.bound_hat >= delta_method / 4.0,
        "bound {} vs delta-method {delta_method}", est.bound_hat);
    assert!(est.var_hat <= est.bound_hat + 3.0 * (est.var_se.powi(2) + est.bound_se.powi(2)).sqrt());
}

#[test]
fn efron_stein_subsampling_is_flagged_and_consistent() {
    let cfg = FieldConfig::checkerboard(2, 4, 2, 1.0, 4.0, CheckerboardLaw::TwoPoint { p: 0.5 });
    let full = efron_stein_estimate(
        &cfg,
        0.0,
        &SolveConfig::default(),
        &EfronSteinParams {
            n_replicas: 150,
            seed: 9,
            subsample_sites: None,
        },
    )
    .unwrap();
    let sub = efron_stein_estimate(
        &cfg,
        0.0,
        &SolveConfig::default(),
        &EfronSteinParams {
            n_replicas: 150,
            seed: 9,
            subsample_sites: Some(4),
        },
    )
    .unwrap();
    assert!(!full.subsampled && sub.subsampled);
    // same estimand: agree within combined noise
    let gap = (full.bound_hat - sub.bound_hat).abs();
    assert!(
        gap < 4.0 * (full.bound_se + sub.bound_se),
        "full {} vs subsampled {}",
        full.bound_hat,
        sub.bound_hat
    );
}

#[test]
fn subset_measure_is_exact_for_three_coordinates() {
    // sizes 0..=2 with weights 1/3, 1/6 (each singleton), 1/3 (the pair)
    assert!((subset_weight(3, 0) - 1.0 / 3.0).abs() < 1e-15);
    assert!((subset_weight(3, 1) - 1.0 / 6.0).abs() < 1e-15);
    assert!((subset_weight(3, 2) - 1.0 / 3.0).abs() < 1e-15);

    let mut rng = rng::stream(1, &[]);
    let n_draws = 100_000usize;
    let mut counts = std::collections::HashMap::<Vec<usize>, usize>::new();
    for _ in 0..n_draws {
        *counts.entry(sample_subset_a(3, 1, &mut rng)).or_default() += 1;
    }
    let expect = [
        (vec![], 1.0 / 3.0),
        (vec![0], 1.0 / 6.0),
        (vec![2], 1.0 / 6.0),
        (vec![0, 2], 1.0 / 3.0),
    ];
    for (subset, p) in expect {
        let freq = *counts.get(&subset).unwrap_or(&0) as f64 / n_draws as f64;
        let se = (p * (1.0 - p) / n_draws as f64).sqrt();
        assert!(
            (freq - p).abs() < 4.0 * se,
            "{subset:?}: {freq} vs {p} (se {se:.2e})"
        );
    }
}

#[test]
fn covariance_identity_is_exact_for_random_tables() {
    for n in 2usize..=4 {
        for q in [0.3, 0.5] {
            for pair in 0..3u64 {
                let mut r = rng::stream(pair, &[n as u64, (q * 10.0) as u64]);
                use rand::Rng;
                let table_g: Vec<f64> = (0..1 << n).map(|_| r.random::<f64>() * 2.0 - 1.0).collect();
                let table_f: Vec<f64> = (0..1 << n).map(|_| r.random::<f64>() * 2.0 - 1.0).collect();
                let to_index = |z: &[u8]| -> usize {
                    z.iter().enumerate().map(|(i, &b)| (b as usize) << i).sum()
                };
                let g = move |z: &[u8]| table_g[to_index(z)];
                let f = move |z: &[u8]| table_f[to_index(z)];
                let (lhs, rhs) = chatterjee_identity_exact(&g, &f, n, q).unwrap();
                assert!(
                    (lhs - rhs).abs() < 1e-12,
                    "n={n} q={q} pair={pair}: {lhs} vs {rhs}"
                );
            }
        }
    }
}

#[test]
fn bound_estimator_errors_shrink_with_more_replicas() {
    // a tiny lattice keeps this cheap: d=2, L=2 gives four sites
    let cfg = FieldConfig::checkerboard(2, 2, 2, 1.0, 4.0, CheckerboardLaw::TwoPoint { p: 0.5 });
    let run = |outer: usize| {
        let params = NormalBoundParams {
            outer_replicas: outer,
            inner_draws: 8,
            sigma_replicas: 400,
            seed: 12,
            ..NormalBoundParams::default()
        };
        normal_bound_estimate(&cfg, 0.0, &SolveConfig::default(), &params)
            .unwrap()
            .0
    };
    let small = run(64);
    let large = run(256);
    assert!(!small.degenerate && !large.degenerate);
    // quadrupling the replicas should roughly halve the term-1 error
    let ratio = large.term1_se / small.term1_se;
    assert!(
        ratio > 0.25 && ratio < 0.95,
        "se ratio {ratio} outside the expected contraction"
    );
    // and the bound itself should be stable between the runs
    let gap = (large.dw_bound - small.dw_bound).abs();
    assert!(gap < 4.0 * (small.dw_bound_se + large.dw_bound_se).max(1e-3));
}

#[test]
fn difference_records_serialize_for_streaming() {
    let t = checkerboard_triple(4, 2, 21);
    let rec = delta_kj_gamma(&t, 2, 9).unwrap();
    let line = serde_json::to_string(&rec).unwrap();
    assert!(line.contains("\"delta2_gamma\""));
    assert!(line.contains("\"hat_phi_j\""));
    assert!(!line.contains('\n'));
}
