//! Cauchy-Green transform, Beurling transform and the singular integral
//! `∫_D f/(z² g)` on the disc grid.
//!
//! Both transforms are midpoint sums over the grid cells. The kernel depends
//! only on the lattice offset, so the sums are evaluated as zero-padded FFT
//! convolutions; `tcg_direct` and `beurling_direct` are the plain O(M²) sums
//! and serve as oracles.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::discgrid::{self, DiscGrid, GridMap};
use crate::error::{Error, Result};

pub(crate) struct Kernels {
    p: usize,
    cauchy: Vec<Complex64>,
    beurling: Vec<Complex64>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Kernels {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Kernels(p={})", self.p)
    }
}

fn cauchy_weight(h: f64, di: isize, dj: isize) -> Complex64 {
    if di == 0 && dj == 0 {
        return Complex64::new(0.0, 0.0);
    }
    // h² / (π (z − ζ)) with z − ζ = h (di + i dj)
    Complex64::new(h / PI, 0.0) / Complex64::new(di as f64, dj as f64)
}

fn beurling_weight(di: isize, dj: isize) -> Complex64 {
    if di == 0 && dj == 0 {
        return Complex64::new(0.0, 0.0);
    }
    let w = Complex64::new(di as f64, dj as f64);
    -Complex64::new(1.0 / PI, 0.0) / (w * w)
}

fn transpose(buf: &mut [Complex64], p: usize) {
    for j in 0..p {
        for i in j + 1..p {
            buf.swap(i + p * j, j + p * i);
        }
    }
}

fn fft2(buf: &mut [Complex64], p: usize, plan: &Arc<dyn Fft<f64>>) {
    plan.process(buf);
    transpose(buf, p);
    plan.process(buf);
    transpose(buf, p);
}

impl Kernels {
    fn build(grid: &DiscGrid) -> Self {
        let n = grid.n_axis();
        let p = 2 * n;
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(p);
        let inv = planner.plan_fft_inverse(p);
        let wrap = |d: usize| if d < p / 2 { d as isize } else { d as isize - p as isize };
        let mut cauchy = vec![Complex64::new(0.0, 0.0); p * p];
        let mut beurling = cauchy.clone();
        for b in 0..p {
            for a in 0..p {
                let (di, dj) = (wrap(a), wrap(b));
                cauchy[a + p * b] = cauchy_weight(grid.h(), di, dj);
                beurling[a + p * b] = beurling_weight(di, dj);
            }
        }
        fft2(&mut cauchy, p, &fwd);
        fft2(&mut beurling, p, &fwd);
        Self { p, cauchy, beurling, fwd, inv }
    }

    fn convolve(&self, grid: &DiscGrid, m: &GridMap, hat: &[Complex64]) -> GridMap {
        let p = self.p;
        let n = m.n();
        let mut out = GridMap::zeros(m.grid(), n);
        let scale = 1.0 / (p * p) as f64;
        let mut buf = vec![Complex64::new(0.0, 0.0); p * p];
        for c in 0..n {
            buf.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
            for k in 0..grid.len() {
                let (i, j) = grid.ij(k);
                buf[i + p * j] = m.values()[k * n + c];
            }
            fft2(&mut buf, p, &self.fwd);
            buf.iter_mut().zip(hat).for_each(|(v, k)| *v *= k);
            fft2(&mut buf, p, &self.inv);
            let vals = out.values_mut();
            for k in 0..grid.len() {
                let (i, j) = grid.ij(k);
                vals[k * n + c] = buf[i + p * j] * scale;
            }
        }
        out
    }
}

fn kernels(grid: &Arc<DiscGrid>) -> &Kernels {
    grid.kernels.get_or_init(|| Kernels::build(grid))
}

/// Cauchy-Green transform `T g(z) = (1/π) ∫_D g(ζ)/(z − ζ) dA(ζ)`.
///
/// Midpoint rule over the cells, the singular cell integrated against the
/// local linear part of `g`: its constant part vanishes by symmetry and the
/// `∂g/∂ζ` part contributes `−h² ∂g/∂z(z) / π`.
pub fn tcg(g: &GridMap) -> GridMap {
    let grid = g.grid().clone();
    let raw = kernels(&grid).convolve(&grid, g, &kernels(&grid).cauchy);
    singular_cell_correction(raw, g)
}

fn singular_cell_correction(mut raw: GridMap, g: &GridMap) -> GridMap {
    let h = g.grid().h();
    let slope = discgrid::dz(g);
    let c = h * h / PI;
    raw.values_mut().iter_mut().zip(slope.values()).for_each(|(v, d)| *v -= d * c);
    raw
}

/// Principal-value Beurling transform `S g(z) = −(1/π) PV ∫_D g(ζ)/(z − ζ)² dA(ζ)`.
pub fn beurling(g: &GridMap) -> GridMap {
    let grid = g.grid().clone();
    kernels(&grid).convolve(&grid, g, &kernels(&grid).beurling)
}

fn direct(g: &GridMap, weight: impl Fn(isize, isize) -> Complex64) -> GridMap {
    let grid = g.grid();
    let n = g.n();
    let mut out = GridMap::zeros(grid, n);
    for k in 0..grid.len() {
        let (i, j) = grid.ij(k);
        for q in 0..grid.len() {
            let (a, b) = grid.ij(q);
            let w = weight(i as isize - a as isize, j as isize - b as isize);
            for c in 0..n {
                let v = g.values()[q * n + c] * w;
                out.values_mut()[k * n + c] += v;
            }
        }
    }
    out
}

/// `tcg` evaluated as a direct double sum.
pub fn tcg_direct(g: &GridMap) -> GridMap {
    let h = g.grid().h();
    singular_cell_correction(direct(g, |di, dj| cauchy_weight(h, di, dj)), g)
}

/// `beurling` evaluated as a direct double sum.
pub fn beurling_direct(g: &GridMap) -> GridMap {
    direct(g, beurling_weight)
}

/// Value of `PV ∫_D f(z)/(z² g(z)) dx dy` with the split at `|z| = |g(0)|/4`.
#[derive(Clone, Debug, serde::Serialize)]
pub struct CzIntegral {
    pub value: Complex64,
    pub inner: Complex64,
    pub outer: Complex64,
    pub split_radius: f64,
    pub g0: f64,
}

const GAUSS_X: [f64; 4] = [-0.861_136_311_594_052_6, -0.339_981_043_584_856_3, 0.339_981_043_584_856_3, 0.861_136_311_594_052_6];
const GAUSS_W: [f64; 4] = [0.347_854_845_137_453_8, 0.652_145_154_862_546_1, 0.652_145_154_862_546_1, 0.347_854_845_137_453_8];
const NEAR_CELLS: usize = 4;
const QUAD_DEPTH: usize = 44;

struct CzAccumulator {
    inner: Complex64,
    outer: Complex64,
    split: f64,
}

impl CzAccumulator {
    fn add(&mut self, z: Complex64, v: Complex64) {
        if z.norm() <= self.split {
            self.inner += v;
        } else {
            self.outer += v;
        }
    }
}

/// Singular integral `∫_D (1/z²)(f/g)` under the hypotheses `0 < |f| ≤ |g| ≤ 1/2`
/// checked at the nodes (f may vanish).
///
/// Cells away from the origin use the midpoint rule, which is symmetric
/// under `z ↦ −z` and `z ↦ iz`. The 8×8 block of cells around the origin is
/// integrated on a quadtree refined towards 0, with Gauss 4×4 rules on the
/// squares not touching 0 and `f`, `g` read off the tensor-cubic interpolant.
pub fn cz_integral(f: &GridMap, g: &GridMap) -> Result<CzIntegral> {
    if f.n() != 1 || g.n() != 1 || !Arc::ptr_eq(f.grid(), g.grid()) {
        return Err(Error::InvalidArgument("cz_integral needs scalar maps on one grid".into()));
    }
    let grid = g.grid();
    for k in 0..grid.len() {
        let (fv, gv) = (f.values()[k], g.values()[k]);
        if gv.norm() == 0.0 {
            return Err(Error::Hypothesis(format!("g vanishes at node {}", grid.node(k))));
        }
        if fv.norm() > gv.norm() * (1.0 + 1e-12) {
            return Err(Error::Hypothesis(format!("|f| > |g| at node {}", grid.node(k))));
        }
        if gv.norm() > 0.5 + 1e-12 {
            return Err(Error::Hypothesis(format!("|g| > 1/2 at node {}", grid.node(k))));
        }
    }
    let zero = Complex64::new(0.0, 0.0);
    let g0 = discgrid::local_cubic(g, zero).expect("centre block").value[0].norm();
    let mut acc = CzAccumulator { inner: zero, outer: zero, split: g0 / 4.0 };
    let h = grid.h();
    let half = grid.n_axis() / 2;
    let near = |i: usize| i + NEAR_CELLS >= half && i < half + NEAR_CELLS;
    for k in 0..grid.len() {
        let (i, j) = grid.ij(k);
        if near(i) && near(j) {
            continue;
        }
        let z = grid.node(k);
        acc.add(z, f.values()[k] / (g.values()[k] * z * z) * (h * h));
    }
    let eval = |z: Complex64| -> Complex64 {
        let fv = discgrid::local_cubic(f, z).expect("near block").value[0];
        let gv = discgrid::local_cubic(g, z).expect("near block").value[0];
        fv / (gv * z * z)
    };
    let side = NEAR_CELLS as f64 * h;
    for (sx, sy) in [(1.0, 1.0), (-1.0, 1.0), (-1.0, -1.0), (1.0, -1.0)] {
        // quadrant squares [0, L]² mirrored by (sx, sy); the child touching
        // the origin is refined, the other three are integrated
        let mut l = side;
        for _ in 0..QUAD_DEPTH {
            let c = l / 2.0;
            for (ox, oy) in [(c, 0.0), (0.0, c), (c, c)] {
                gauss_square(&eval, &mut acc, sx, sy, ox, oy, c);
            }
            l = c;
        }
    }
    Ok(CzIntegral {
        value: acc.inner + acc.outer,
        inner: acc.inner,
        outer: acc.outer,
        split_radius: acc.split,
        g0,
    })
}

fn gauss_square(
    eval: &impl Fn(Complex64) -> Complex64,
    acc: &mut CzAccumulator,
    sx: f64,
    sy: f64,
    ox: f64,
    oy: f64,
    side: f64,
) {
    // the square [ox, ox+side]×[oy, oy+side] (before mirroring) as 2×2
    // sub-squares, each with a 4×4 Gauss rule
    let s = side / 2.0;
    for (ax, ay) in [(0.0, 0.0), (s, 0.0), (0.0, s), (s, s)] {
        let (cx, cy) = (ox + ax + s / 2.0, oy + ay + s / 2.0);
        for (xa, wa) in GAUSS_X.iter().zip(GAUSS_W) {
            for (xb, wb) in GAUSS_X.iter().zip(GAUSS_W) {
                let z = Complex64::new(sx * (cx + xa * s / 2.0), sy * (cy + xb * s / 2.0));
                acc.add(z, eval(z) * (wa * wb * s * s / 4.0));
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discgrid::make_grid;

    fn interior_err(a: &GridMap, b: &GridMap, mask: &[bool]) -> f64 {
        (0..a.grid().len())
            .filter(|&k| mask[k])
            .map(|k| (a.values()[k] - b.values()[k]).norm())
            .fold(0.0, f64::max)
    }

    #[test]
    fn fft_matches_direct_sum() {
        let g = make_grid(32).unwrap();
        let m = GridMap::from_fn(&g, 2, |z| vec![(z * 0.7).exp(), z.conj() * z + 0.3]);
        assert!(tcg(&m).sup_diff(&tcg_direct(&m)) < 1e-12);
        assert!(beurling(&m).sup_diff(&beurling_direct(&m)) < 1e-12);
    }

    #[test]
    fn closed_forms() {
        let g = make_grid(128).unwrap();
        let mask = g.interior_mask();
        let one = tcg(&GridMap::scalar(&g, |_| Complex64::new(1.0, 0.0)));
        let err = interior_err(&one, &GridMap::scalar(&g, |z| z.conj()), mask);
        assert!(err < 5e-2, "T(1) error {err}");
        let lin = tcg(&GridMap::scalar(&g, |z| z));
        let err = interior_err(&lin, &GridMap::scalar(&g, |z| Complex64::new(z.norm_sqr() - 1.0, 0.0)), mask);
        assert!(err < 5e-2, "T(z) error {err}");
        let s = beurling(&GridMap::scalar(&g, |z| Complex64::new(z.norm_sqr(), 0.0)));
        let err = interior_err(&s, &GridMap::scalar(&g, |z| z.conj() * z.conj() * 0.5), g.core_mask());
        assert!(err < 5e-2, "S(|z|²) error {err}");
        assert_eq!(tcg(&GridMap::zeros(&g, 1)).sup_norm(), 0.0);
    }

    fn cz_family(n: usize, delta: f64) -> Complex64 {
        let g = make_grid(n).unwrap();
        let gm = GridMap::scalar(&g, |z| Complex64::new(delta + z.norm_sqr() / 4.0, 0.0));
        let fm = GridMap::scalar(&g, |z| z * z / 4.0);
        cz_integral(&fm, &gm).unwrap().value
    }

    #[test]
    fn cz_closed_form_and_refined_oracle() {
        for delta in [1e-1f64, 1e-3, 1e-6] {
            let exact = PI * (1.0 + 1.0 / (4.0 * delta)).ln();
            let coarse = cz_family(64, delta);
            let fine = cz_family(256, delta);
            assert!((coarse - fine).norm() <= 0.1 * fine.norm());
            assert!((fine.re - exact).abs() < 0.05 * exact, "{fine} vs {exact}");
        }
    }

    #[test]
    fn cz_cancellation_and_hypotheses() {
        let g = make_grid(64).unwrap();
        let gm = GridMap::scalar(&g, |z| z * 0.25 + 0.2);
        let r = cz_integral(&gm, &gm).unwrap();
        assert!(r.value.norm() < 1e-10);
        let zero = cz_integral(&GridMap::zeros(&g, 1), &gm).unwrap();
        assert_eq!(zero.value.norm(), 0.0);
        let delta = 1e-3;
        let lit_g = GridMap::scalar(&g, |z| z * 0.25 + delta);
        let lit_f = GridMap::scalar(&g, |z| z * 0.25);
        assert!(matches!(cz_integral(&lit_f, &lit_g), Err(Error::Hypothesis(_))));
    }
}
