use cellflux_core::*;
use cellflux_core::rng;
use rand::Rng;

fn main() {
    for l in [8u32, 16] {
        let cfg = FieldConfig::checkerboard(2, l, 2, 1.0, 4.0, CheckerboardLaw::TwoPoint { p: 0.5 });
        let grid = cfg.grid();
        let mut max_e = 0.0f64;
        let mut r_stream = rng::stream(99, &[l as u64]);
        for seed in 0..25u64 {
            let z = sample_latent(&cfg, seed).unwrap();
            let f = realize(&z, &cfg).unwrap();
            let y = r_stream.random_range(0..grid.n_cells());
            let g = solve_green(&f, 0.0, y, &SolveConfig::default()).unwrap();
            for _ in 0..4 {
                let x0 = r_stream.random_range(0..grid.n_cells());
                let r = 0.5 + r_stream.random::<f64>() * (l as f64 / 8.0);
                match annulus_gradient_energy_2d(&g, x0, r) {
                    Ok(e) => max_e = max_e.max(e),
                    Err(_) => continue,
                }
            }
        }
        println!("L={l}: ensemble max annulus energy {max_e:.4}");
    }
}
