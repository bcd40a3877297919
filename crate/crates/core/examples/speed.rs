use cellflux_core::*;
use std::time::Instant;
fn main() {
    let cfg = FieldConfig::checkerboard(2, 4, 4, 1.0, 4.0, CheckerboardLaw::TwoPoint { p: 0.5 });
    let sc = SolveConfig::default();
    // cold solves
    let t0 = Instant::now();
    let mut iters = 0usize;
    for seed in 0..200u64 {
        let z = sample_latent(&cfg, seed).unwrap();
        let f = realize(&z, &cfg).unwrap();
        let sol = solve_corrector(&f, 0.0, &sc).unwrap();
        iters += sol.iterations;
    }
    println!("d2 L4 m4 cold: {:?}/solve, {} iters avg", t0.elapsed() / 200, iters / 200);
    // warm single-site solves
    let z = sample_latent(&cfg, 0).unwrap();
    let f = realize(&z, &cfg).unwrap();
    let base = solve_corrector(&f, 0.0, &sc).unwrap();
    let t1 = Instant::now();
    let mut iters = 0usize;
    for j in 0..16usize {
        for s in 0..12u64 {
            let zj = resample_site(&z, &cfg, j, 1000 + s).unwrap();
            let fj = realize(&zj, &cfg).unwrap();
            let sol = solve_corrector_warm(&fj, 0.0, &sc, Some(&base.phi)).unwrap();
            iters += sol.iterations;
        }
    }
    println!("d2 L4 m4 warm: {:?}/solve, {} iters avg", t1.elapsed() / 192, iters / 192);
    for (l, m, n) in [(8u32, 4u32, 60u64), (16, 4, 20)] {
        let cfg = FieldConfig::checkerboard(2, l, m, 1.0, 4.0, CheckerboardLaw::TwoPoint { p: 0.5 });
        let t = Instant::now();
        let mut iters = 0usize;
        for seed in 0..n {
            let z = sample_latent(&cfg, seed).unwrap();
            let f = realize(&z, &cfg).unwrap();
            iters += solve_corrector(&f, 0.0, &sc).unwrap().iterations;
        }
        println!("d2 L{} m{} cold: {:?}/solve, {} iters avg", l, m, t.elapsed() / n as u32, iters / n as usize);
    }
    let cfg3 = FieldConfig::checkerboard(3, 16, 2, 1.0, 4.0, CheckerboardLaw::TwoPoint { p: 0.5 });
    let z = sample_latent(&cfg3, 0).unwrap();
    let f = realize(&z, &cfg3).unwrap();
    let t = Instant::now();
    let sol = solve_corrector(&f, 0.0, &sc).unwrap();
    println!("d3 L16 m2 cold: {:?}, {} iters", t.elapsed(), sol.iterations);
}
