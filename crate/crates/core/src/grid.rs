//! Periodic structured grids over the period cell `[0, L)^d`.
//!
//! Everything downstream (fields, operators, Green's functions) addresses
//! cells through this module: row-major linear indices, wrap-around
//! neighbours, and the torus metric.

use serde::{Deserialize, Serialize};

/// Cell-centered periodic grid on `[0, L)^d` with `m` cells per unit length.
///
/// Axis 0 varies slowest in the linear (row-major) ordering. Dimensions
/// beyond `d` have extent 1 so the same index arithmetic covers d = 1, 2, 3.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grid {
    pub d: usize,
    pub l: u32,
    pub m: u32,
}

impl Grid {
    pub fn new(d: usize, l: u32, m: u32) -> Self {
        assert!((1..=3).contains(&d), "dimension must be 1, 2 or 3");
        assert!(l >= 1 && m >= 1, "period and resolution must be positive");
        Grid { d, l, m }
    }

    /// Grid spacing h = 1/m.
    #[inline]
    pub fn h(&self) -> f64 {
        1.0 / self.m as f64
    }

    /// Cells along each of the d axes.
    #[inline]
    pub fn cells_per_axis(&self) -> usize {
        (self.l as usize) * (self.m as usize)
    }

    /// Total number of cells, (mL)^d.
    #[inline]
    pub fn n_cells(&self) -> usize {
        self.cells_per_axis().pow(self.d as u32)
    }

    /// Number of lattice sites, L^d.
    #[inline]
    pub fn n_sites(&self) -> usize {
        (self.l as usize).pow(self.d as u32)
    }

    /// Per-axis extents padded to three entries (trailing axes have extent 1).
    #[inline]
    pub fn extents(&self) -> [usize; 3] {
        let n = self.cells_per_axis();
        match self.d {
            1 => [n, 1, 1],
            2 => [n, n, 1],
            _ => [n, n, n],
        }
    }

    #[inline]
    pub fn site_extents(&self) -> [usize; 3] {
        let n = self.l as usize;
        match self.d {
            1 => [n, 1, 1],
            2 => [n, n, 1],
            _ => [n, n, n],
        }
    }

    #[inline]
    pub fn cell_index(&self, c: [usize; 3]) -> usize {
        let e = self.extents();
        (c[0] * e[1] + c[1]) * e[2] + c[2]
    }

    #[inline]
    pub fn cell_coords(&self, idx: usize) -> [usize; 3] {
        let e = self.extents();
        let c2 = idx % e[2];
        let rest = idx / e[2];
        let c1 = rest % e[1];
        let c0 = rest / e[1];
        [c0, c1, c2]
    }

    /// Coordinates of the cell center in physical units.
    #[inline]
    pub fn cell_center(&self, idx: usize) -> [f64; 3] {
        let c = self.cell_coords(idx);
        let h = self.h();
        let mut x = [0.0; 3];
        for a in 0..self.d {
            x[a] = (c[a] as f64 + 0.5) * h;
        }
        x
    }

    #[inline]
    pub fn site_index(&self, s: [usize; 3]) -> usize {
        let e = self.site_extents();
        (s[0] * e[1] + s[1]) * e[2] + s[2]
    }

    #[inline]
    pub fn site_coords(&self, idx: usize) -> [usize; 3] {
        let e = self.site_extents();
        let s2 = idx % e[2];
        let rest = idx / e[2];
        let s1 = rest % e[1];
        let s0 = rest / e[1];
        [s0, s1, s2]
    }

    /// Lattice site whose unit cube contains the given cell.
    #[inline]
    pub fn site_of_cell(&self, cell: [usize; 3]) -> usize {
        let m = self.m as usize;
        let mut s = [0usize; 3];
        for a in 0..self.d {
            s[a] = cell[a] / m;
        }
        self.site_index(s)
    }

    /// The lattice point (cube corner) of a site, in physical units.
    #[inline]
    pub fn site_point(&self, site: usize) -> [f64; 3] {
        let s = self.site_coords(site);
        let mut x = [0.0; 3];
        for a in 0..self.d {
            x[a] = s[a] as f64;
        }
        x
    }

    /// Neighbour of `idx` one cell along `axis` (`dir` = +1 or -1), wrapping.
    #[inline]
    pub fn neighbor(&self, idx: usize, axis: usize, dir: i32) -> usize {
        let e = self.extents();
        let mut c = self.cell_coords(idx);
        let n = e[axis];
        c[axis] = if dir > 0 {
            if c[axis] + 1 == n {
                0
            } else {
                c[axis] + 1
            }
        } else if c[axis] == 0 {
            n - 1
        } else {
            c[axis] - 1
        };
        self.cell_index(c)
    }

    /// Periodized distance on the torus `[0, L)^d`.
    #[inline]
    pub fn torus_dist(&self, x: [f64; 3], y: [f64; 3]) -> f64 {
        let l = self.l as f64;
        let mut s = 0.0;
        for a in 0..self.d {
            let mut dx = (x[a] - y[a]).rem_euclid(l);
            if dx > l - dx {
                dx = l - dx;
            }
            s += dx * dx;
        }
        s.sqrt()
    }

    /// Cyclically shift a cell array by whole cells along each axis.
    pub fn shift_cells(&self, values: &[f64], shift: [i64; 3]) -> Vec<f64> {
        assert_eq!(values.len(), self.n_cells());
        let e = self.extents();
        let mut out = vec![0.0; values.len()];
        for (idx, v) in values.iter().enumerate() {
            let c = self.cell_coords(idx);
            let mut t = [0usize; 3];
            for a in 0..3 {
                let n = e[a] as i64;
                t[a] = (c[a] as i64 + shift[a]).rem_euclid(n) as usize;
            }
            out[self.cell_index(t)] = *v;
        }
        out
    }

    /// Cells whose centers lie strictly within `r` of the point `p` (torus metric).
    pub fn cells_in_ball(&self, p: [f64; 3], r: f64) -> Vec<usize> {
        (0..self.n_cells())
            .filter(|&i| self.torus_dist(self.cell_center(i), p) < r)
            .collect()
    }
}
