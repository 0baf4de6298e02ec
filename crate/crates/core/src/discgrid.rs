//! Cell-centre grid on the closed unit disc and finite-difference calculus
//! for sampled maps `D̄ → C^n`.
//!
//! A map into R^{2n} is stored in complex form, pairing `(x_k, y_k)` into
//! `x_k + i y_k`, so that `J_st` acts as multiplication by `i`.

use std::io::{Read, Write};
use std::sync::{Arc, OnceLock};

use num_complex::Complex64;

use crate::cauchy_green::Kernels;
use crate::error::{Error, Result};

const NONE: usize = usize::MAX;
/// Radius of the region on which accuracy claims are made.
pub const CORE_RADIUS: f64 = 0.75;

pub struct DiscGrid {
    n_axis: usize,
    h: f64,
    nodes: Vec<Complex64>,
    ij: Vec<(usize, usize)>,
    index: Vec<usize>,
    interior: Vec<bool>,
    core: Vec<bool>,
    pub(crate) kernels: OnceLock<Kernels>,
}

impl std::fmt::Debug for DiscGrid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "DiscGrid(N={}, nodes={})", self.n_axis, self.nodes.len())
    }
}

/// Builds the grid of `N×N` cell centres of `[−1,1]²` lying in the closed disc.
pub fn make_grid(n_axis: usize) -> Result<Arc<DiscGrid>> {
    if n_axis < 16 || n_axis % 2 != 0 {
        return Err(Error::InvalidArgument(format!("grid size {n_axis} must be even and >= 16")));
    }
    let h = 2.0 / n_axis as f64;
    let mut nodes = Vec::new();
    let mut ij = Vec::new();
    let mut index = vec![NONE; n_axis * n_axis];
    for j in 0..n_axis {
        for i in 0..n_axis {
            let z = Complex64::new(-1.0 + h * (i as f64 + 0.5), -1.0 + h * (j as f64 + 0.5));
            if z.norm_sqr() <= 1.0 {
                index[i + n_axis * j] = nodes.len();
                nodes.push(z);
                ij.push((i, j));
            }
        }
    }
    let mut grid = DiscGrid {
        n_axis,
        h,
        nodes,
        ij,
        index,
        interior: Vec::new(),
        core: Vec::new(),
        kernels: OnceLock::new(),
    };
    grid.interior = (0..grid.len())
        .map(|k| {
            let (i, j) = grid.ij[k];
            [(-2, 0), (-1, 0), (1, 0), (2, 0), (0, -2), (0, -1), (0, 1), (0, 2)]
                .iter()
                .all(|&(di, dj)| grid.offset(i, j, di, dj).is_some())
        })
        .collect();
    grid.core = (0..grid.len())
        .map(|k| grid.interior[k] && grid.nodes[k].norm() <= CORE_RADIUS)
        .collect();
    Ok(Arc::new(grid))
}

impl DiscGrid {
    pub fn n_axis(&self) -> usize {
        self.n_axis
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[Complex64] {
        &self.nodes
    }

    pub fn node(&self, k: usize) -> Complex64 {
        self.nodes[k]
    }

    pub fn ij(&self, k: usize) -> (usize, usize) {
        self.ij[k]
    }

    /// Cell-centre coordinate of column (or row) `i`.
    pub fn coord(&self, i: usize) -> f64 {
        -1.0 + self.h * (i as f64 + 0.5)
    }

    pub fn at(&self, i: usize, j: usize) -> Option<usize> {
        if i >= self.n_axis || j >= self.n_axis {
            return None;
        }
        let k = self.index[i + self.n_axis * j];
        (k != NONE).then_some(k)
    }

    fn offset(&self, i: usize, j: usize, di: isize, dj: isize) -> Option<usize> {
        let a = i as isize + di;
        let b = j as isize + dj;
        if a < 0 || b < 0 {
            return None;
        }
        self.at(a as usize, b as usize)
    }

    /// Nodes carrying the full fourth-order stencil.
    pub fn interior_mask(&self) -> &[bool] {
        &self.interior
    }

    /// Interior nodes with `|z| ≤ 3/4`.
    pub fn core_mask(&self) -> &[bool] {
        &self.core
    }

    pub fn nearest(&self, z: Complex64) -> usize {
        let fi = ((z.re + 1.0) / self.h - 0.5).round().clamp(0.0, (self.n_axis - 1) as f64) as usize;
        let fj = ((z.im + 1.0) / self.h - 0.5).round().clamp(0.0, (self.n_axis - 1) as f64) as usize;
        if let Some(k) = self.at(fi, fj) {
            return k;
        }
        (0..self.len())
            .min_by(|&a, &b| {
                (self.nodes[a] - z).norm().total_cmp(&(self.nodes[b] - z).norm())
            })
            .expect("grid is never empty")
    }
}

/// Converts an R^{2n} vector to its complex form.
pub fn to_complex(v: &[f64]) -> Vec<Complex64> {
    v.chunks(2).map(|c| Complex64::new(c[0], c[1])).collect()
}

/// Converts a complex vector to R^{2n}.
pub fn to_real(v: &[Complex64]) -> Vec<f64> {
    v.iter().flat_map(|c| [c.re, c.im]).collect()
}

/// Sampled map from the disc grid into C^n.
#[derive(Clone, Debug)]
pub struct GridMap {
    grid: Arc<DiscGrid>,
    n: usize,
    values: Vec<Complex64>,
}

impl GridMap {
    pub fn zeros(grid: &Arc<DiscGrid>, n: usize) -> Self {
        Self { grid: grid.clone(), n, values: vec![Complex64::new(0.0, 0.0); grid.len() * n] }
    }

    pub fn from_values(grid: &Arc<DiscGrid>, n: usize, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.len() * n {
            return Err(Error::InvalidArgument(format!(
                "expected {} values, got {}",
                grid.len() * n,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::InvalidArgument("non-finite grid values".into()));
        }
        Ok(Self { grid: grid.clone(), n, values })
    }

    pub fn from_fn(grid: &Arc<DiscGrid>, n: usize, f: impl Fn(Complex64) -> Vec<Complex64>) -> Self {
        let mut values = Vec::with_capacity(grid.len() * n);
        for &z in grid.nodes() {
            let v = f(z);
            assert_eq!(v.len(), n, "component count mismatch");
            values.extend(v);
        }
        Self { grid: grid.clone(), n, values }
    }

    pub fn scalar(grid: &Arc<DiscGrid>, f: impl Fn(Complex64) -> Complex64) -> Self {
        Self { grid: grid.clone(), n: 1, values: grid.nodes().iter().map(|&z| f(z)).collect() }
    }

    pub fn grid(&self) -> &Arc<DiscGrid> {
        &self.grid
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn at(&self, k: usize) -> &[Complex64] {
        &self.values[k * self.n..(k + 1) * self.n]
    }

    pub fn real_at(&self, k: usize) -> Vec<f64> {
        to_real(self.at(k))
    }

    pub fn component(&self, c: usize) -> GridMap {
        Self {
            grid: self.grid.clone(),
            n: 1,
            values: (0..self.grid.len()).map(|k| self.values[k * self.n + c]).collect(),
        }
    }

    pub fn map(&self, f: impl Fn(Complex64) -> Complex64) -> GridMap {
        Self { grid: self.grid.clone(), n: self.n, values: self.values.iter().map(|&v| f(v)).collect() }
    }

    pub fn zip_map(&self, other: &GridMap, f: impl Fn(Complex64, Complex64) -> Complex64) -> GridMap {
        assert_eq!(self.values.len(), other.values.len());
        Self {
            grid: self.grid.clone(),
            n: self.n,
            values: self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    pub fn add(&self, other: &GridMap) -> GridMap {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &GridMap) -> GridMap {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn conj(&self) -> GridMap {
        self.map(|v| v.conj())
    }

    /// Largest absolute real coordinate.
    pub fn sup_norm(&self) -> f64 {
        self.values.iter().map(|v| v.re.abs().max(v.im.abs())).fold(0.0, f64::max)
    }

    pub fn sup_diff(&self, other: &GridMap) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a.re - b.re).abs().max((a.im - b.im).abs()))
            .fold(0.0, f64::max)
    }

    /// Largest vector modulus `|m(z)|` over the nodes selected by `mask`.
    pub fn max_modulus(&self, mask: Option<&[bool]>) -> f64 {
        (0..self.grid.len())
            .filter(|&k| mask.is_none_or(|m| m[k]))
            .map(|k| vec_norm(self.at(k)))
            .fold(0.0, f64::max)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::WriterBuilder::new().flexible(true).from_writer(w);
        wr.write_record(["N", &self.grid.n_axis.to_string(), "n", &self.n.to_string()])?;
        let mut header = vec!["x".to_string(), "y".to_string()];
        for c in 1..=self.n {
            header.push(format!("re{c}"));
            header.push(format!("im{c}"));
        }
        wr.write_record(&header)?;
        for k in 0..self.grid.len() {
            let z = self.grid.node(k);
            let mut row = vec![format!("{:e}", z.re), format!("{:e}", z.im)];
            for v in self.at(k) {
                row.push(format!("{:e}", v.re));
                row.push(format!("{:e}", v.im));
            }
            wr.write_record(&row)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rd = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(r);
        let mut records = rd.records();
        let bad = |m: &str| Error::Config(format!("grid csv: {m}"));
        let head = records.next().ok_or_else(|| bad("empty file"))??;
        if head.len() != 4 || &head[0] != "N" || &head[2] != "n" {
            return Err(bad("first row must be N,<N>,n,<n>"));
        }
        let n_axis: usize = head[1].parse().map_err(|_| bad("bad N"))?;
        let n: usize = head[3].parse().map_err(|_| bad("bad n"))?;
        let grid = make_grid(n_axis)?;
        records.next().ok_or_else(|| bad("missing column header"))??;
        let mut values = Vec::with_capacity(grid.len() * n);
        for (k, rec) in records.enumerate() {
            let rec = rec?;
            if rec.len() != 2 + 2 * n {
                return Err(bad("wrong column count"));
            }
            if k >= grid.len() {
                return Err(bad("too many rows"));
            }
            let nums: Vec<f64> = rec
                .iter()
                .map(|s| s.trim().parse::<f64>().map_err(|_| bad("bad number")))
                .collect::<Result<_>>()?;
            let z = grid.node(k);
            if (nums[0] - z.re).abs() > 1e-9 || (nums[1] - z.im).abs() > 1e-9 {
                return Err(bad("node coordinates do not match the grid"));
            }
            values.extend(to_complex(&nums[2..]));
        }
        Self::from_values(&grid, n, values)
    }
}

pub(crate) fn vec_norm(v: &[Complex64]) -> f64 {
    v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
}

/// First derivatives, Wirtinger derivatives and Laplacian of a sampled map.
#[derive(Clone, Debug)]
pub struct Derivatives {
    pub dx: GridMap,
    pub dy: GridMap,
    pub dz: GridMap,
    pub dzbar: GridMap,
    pub lap: GridMap,
    /// Nodes where the Laplacian stencil is available.
    pub lap_valid: Vec<bool>,
}

fn first_derivative(m: &GridMap, axis: usize) -> GridMap {
    let g = &m.grid;
    let n = m.n;
    let h = g.h;
    let mut out = GridMap::zeros(g, n);
    let step = |i: usize, j: usize, s: isize| {
        if axis == 0 {
            g.offset(i, j, s, 0)
        } else {
            g.offset(i, j, 0, s)
        }
    };
    for k in 0..g.len() {
        let (i, j) = g.ij[k];
        let (m2, m1, p1, p2) = (step(i, j, -2), step(i, j, -1), step(i, j, 1), step(i, j, 2));
        for c in 0..n {
            let v = |q: usize| m.values[q * n + c];
            out.values[k * n + c] = match (m2, m1, p1, p2) {
                (Some(a), Some(b), Some(d), Some(e)) => {
                    (v(a) - v(b) * 8.0 + v(d) * 8.0 - v(e)) / (12.0 * h)
                }
                (_, Some(b), Some(d), _) => (v(d) - v(b)) / (2.0 * h),
                (_, None, Some(d), _) => (v(d) - v(k)) / h,
                (_, Some(b), None, _) => (v(k) - v(b)) / h,
                _ => Complex64::new(0.0, 0.0),
            };
        }
    }
    out
}

fn second_derivative(m: &GridMap, axis: usize) -> (GridMap, Vec<bool>) {
    let g = &m.grid;
    let n = m.n;
    let h2 = g.h * g.h;
    let mut out = GridMap::zeros(g, n);
    let mut valid = vec![false; g.len()];
    let step = |i: usize, j: usize, s: isize| {
        if axis == 0 {
            g.offset(i, j, s, 0)
        } else {
            g.offset(i, j, 0, s)
        }
    };
    for k in 0..g.len() {
        let (i, j) = g.ij[k];
        let (m2, m1, p1, p2) = (step(i, j, -2), step(i, j, -1), step(i, j, 1), step(i, j, 2));
        for c in 0..n {
            let v = |q: usize| m.values[q * n + c];
            let val = match (m2, m1, p1, p2) {
                (Some(a), Some(b), Some(d), Some(e)) => {
                    valid[k] = true;
                    (-v(a) + v(b) * 16.0 - v(k) * 30.0 + v(d) * 16.0 - v(e)) / (12.0 * h2)
                }
                (_, Some(b), Some(d), _) => {
                    valid[k] = true;
                    (v(b) - v(k) * 2.0 + v(d)) / h2
                }
                _ => Complex64::new(0.0, 0.0),
            };
            out.values[k * n + c] = val;
        }
    }
    (out, valid)
}

fn wirtinger(dx: Complex64, dy: Complex64) -> (Complex64, Complex64) {
    // ∂z = ½(∂x − i∂y), ∂z̄ = ½(∂x + i∂y), written out so that
    // conjugating the input conjugates and swaps the outputs exactly
    let dz = Complex64::new(0.5 * (dx.re + dy.im), 0.5 * (dx.im - dy.re));
    let dzbar = Complex64::new(0.5 * (dx.re - dy.im), 0.5 * (dx.im + dy.re));
    (dz, dzbar)
}

/// Fourth-order central differences where the stencil fits, second-order
/// next to the rim, one-sided first-order on the rim itself.
pub fn derivatives(m: &GridMap) -> Derivatives {
    let dx = first_derivative(m, 0);
    let dy = first_derivative(m, 1);
    let (dz, dzbar) = wirtinger_maps(&dx, &dy);
    let (lxx, vx) = second_derivative(m, 0);
    let (lyy, vy) = second_derivative(m, 1);
    let lap = lxx.add(&lyy);
    let lap_valid = vx.iter().zip(&vy).map(|(a, b)| *a && *b).collect();
    Derivatives { dx, dy, dz, dzbar, lap, lap_valid }
}

fn wirtinger_maps(dx: &GridMap, dy: &GridMap) -> (GridMap, GridMap) {
    let mut dz = GridMap::zeros(&dx.grid, dx.n);
    let mut dzbar = GridMap::zeros(&dx.grid, dx.n);
    for k in 0..dx.values.len() {
        let (a, b) = wirtinger(dx.values[k], dy.values[k]);
        dz.values[k] = a;
        dzbar.values[k] = b;
    }
    (dz, dzbar)
}

/// `∂m/∂z` only.
pub fn dz(m: &GridMap) -> GridMap {
    wirtinger_maps(&first_derivative(m, 0), &first_derivative(m, 1)).0
}

/// `∂m/∂z̄` only.
pub fn dzbar(m: &GridMap) -> GridMap {
    wirtinger_maps(&first_derivative(m, 0), &first_derivative(m, 1)).1
}

/// Bilinear interpolation from the enclosing cell centres, falling back to
/// the nearest node when the enclosing square leaves the grid.
pub fn interp(m: &GridMap, z: Complex64) -> Result<Vec<Complex64>> {
    if z.norm() > 1.0 + 1e-12 {
        return Err(Error::InvalidArgument(format!("interpolation point {z} outside the disc")));
    }
    let g = &m.grid;
    let last = (g.n_axis - 2) as f64;
    let fx = (z.re + 1.0) / g.h - 0.5;
    let fy = (z.im + 1.0) / g.h - 0.5;
    let i0 = fx.floor().clamp(0.0, last);
    let j0 = fy.floor().clamp(0.0, last);
    let (tx, ty) = (fx - i0, fy - j0);
    let (i0, j0) = (i0 as usize, j0 as usize);
    let corners = [g.at(i0, j0), g.at(i0 + 1, j0), g.at(i0, j0 + 1), g.at(i0 + 1, j0 + 1)];
    let inside = (0.0..=1.0).contains(&tx) && (0.0..=1.0).contains(&ty);
    if let ([Some(a), Some(b), Some(c), Some(d)], true) = (corners, inside) {
        let w = [(1.0 - tx) * (1.0 - ty), tx * (1.0 - ty), (1.0 - tx) * ty, tx * ty];
        return Ok((0..m.n)
            .map(|comp| {
                [a, b, c, d]
                    .iter()
                    .zip(w)
                    .map(|(&q, wq)| m.values[q * m.n + comp] * wq)
                    .sum()
            })
            .collect());
    }
    Ok(m.at(g.nearest(z)).to_vec())
}

fn lagrange4(t: f64) -> [[f64; 4]; 3] {
    // weights for value, first and second derivative (index units) of the
    // cubic through the nodes 0, 1, 2, 3
    let mut out = [[0.0; 4]; 3];
    for k in 0..4 {
        let others: Vec<f64> = (0..4).filter(|&m| m != k).map(|m| m as f64).collect();
        let denom: f64 = others.iter().map(|&m| k as f64 - m).product();
        let f = |skip: &[usize]| -> f64 {
            others
                .iter()
                .enumerate()
                .filter(|(i, _)| !skip.contains(i))
                .map(|(_, &m)| t - m)
                .product()
        };
        out[0][k] = f(&[]) / denom;
        out[1][k] = (0..3).map(|a| f(&[a])).sum::<f64>() / denom;
        out[2][k] = (0..3)
            .flat_map(|a| (0..3).filter(move |&b| b != a).map(move |b| (a, b)))
            .map(|(a, b)| f(&[a, b]))
            .sum::<f64>()
            / denom;
    }
    out
}

/// Value and derivatives of the tensor-cubic interpolant at an interior point.
#[derive(Clone, Debug)]
pub struct LocalCubic {
    pub value: Vec<Complex64>,
    pub dx: Vec<Complex64>,
    pub dy: Vec<Complex64>,
    pub dxx: Vec<Complex64>,
}

/// Tensor-cubic Lagrange interpolation on the 4×4 block of nodes around `z`.
/// Returns `None` if the block is not fully inside the grid.
pub fn local_cubic(m: &GridMap, z: Complex64) -> Option<LocalCubic> {
    let g = &m.grid;
    let fx = (z.re + 1.0) / g.h - 0.5;
    let fy = (z.im + 1.0) / g.h - 0.5;
    let i0 = fx.floor() as isize - 1;
    let j0 = fy.floor() as isize - 1;
    if i0 < 0 || j0 < 0 {
        return None;
    }
    let wx = lagrange4(fx - i0 as f64);
    let wy = lagrange4(fy - j0 as f64);
    let mut idx = [[0usize; 4]; 4];
    for (a, row) in idx.iter_mut().enumerate() {
        for (b, slot) in row.iter_mut().enumerate() {
            *slot = g.at(i0 as usize + a, j0 as usize + b)?;
        }
    }
    let zero = Complex64::new(0.0, 0.0);
    let mut out = LocalCubic {
        value: vec![zero; m.n],
        dx: vec![zero; m.n],
        dy: vec![zero; m.n],
        dxx: vec![zero; m.n],
    };
    let (h, h2) = (g.h, g.h * g.h);
    for a in 0..4 {
        for b in 0..4 {
            let q = idx[a][b];
            for c in 0..m.n {
                let v = m.values[q * m.n + c];
                out.value[c] += v * (wx[0][a] * wy[0][b]);
                out.dx[c] += v * (wx[1][a] * wy[0][b] / h);
                out.dy[c] += v * (wx[0][a] * wy[1][b] / h);
                out.dxx[c] += v * (wx[2][a] * wy[0][b] / h2);
            }
        }
    }
    Some(out)
}

/// Pure x-derivative data `(p, v_1, .., v_k)` at the centre of the disc.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Jet {
    pub k: usize,
    pub p: Vec<f64>,
    pub v: Vec<Vec<f64>>,
}

impl Jet {
    pub fn new(p: Vec<f64>, v: Vec<Vec<f64>>) -> Result<Self> {
        let k = v.len();
        if !(1..=2).contains(&k) {
            return Err(Error::InvalidArgument(format!("jet order {k} not in {{1, 2}}")));
        }
        if p.len() % 2 != 0 || v.iter().any(|w| w.len() != p.len()) {
            return Err(Error::InvalidArgument("jet vectors must share an even dimension".into()));
        }
        Ok(Self { k, p, v })
    }

    pub fn dim(&self) -> usize {
        self.p.len()
    }

    /// Flattened `(p, v_1, .., v_k)`.
    pub fn flat(&self) -> Vec<f64> {
        let mut out = self.p.clone();
        for w in &self.v {
            out.extend(w);
        }
        out
    }

    pub fn from_flat(k: usize, dim: usize, flat: &[f64]) -> Self {
        Self {
            k,
            p: flat[..dim].to_vec(),
            v: (0..k).map(|l| flat[dim * (l + 1)..dim * (l + 2)].to_vec()).collect(),
        }
    }

    /// `max |·|` distance between two jets of the same shape.
    pub fn distance(&self, other: &Jet) -> f64 {
        self.flat().iter().zip(other.flat()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }
}

/// Reads the k-jet at 0 from the tensor-cubic stencil on the 16 nodes
/// surrounding the origin (0 itself is a cell corner, not a node).
pub fn jet_at_zero(m: &GridMap, k: usize) -> Result<Jet> {
    if !(1..=2).contains(&k) {
        return Err(Error::InvalidArgument(format!("jet order {k} not in {{1, 2}}")));
    }
    let lc = local_cubic(m, Complex64::new(0.0, 0.0)).expect("centre block always exists");
    let mut v = vec![to_real(&lc.dx)];
    if k == 2 {
        v.push(to_real(&lc.dxx));
    }
    Ok(Jet { k, p: to_real(&lc.value), v })
}

/// `φ(r) = r ln(1/r)` for `r < 1/e`, continued by the constant `1/e`.
pub fn phi(r: f64) -> f64 {
    let e_inv = (-1.0f64).exp();
    if r < e_inv {
        r * (1.0 / r).ln()
    } else {
        e_inv
    }
}

fn pair_offsets(grid: &DiscGrid) -> Vec<(isize, isize)> {
    let h = grid.h;
    let mut out: Vec<(isize, isize)> = Vec::new();
    for level in 0..8 {
        let r = 0.5 * 0.5f64.powi(level);
        for dir in 0..8 {
            let ang = dir as f64 * std::f64::consts::PI / 4.0;
            let mut di = (r * ang.cos() / h).round() as isize;
            let mut dj = (r * ang.sin() / h).round() as isize;
            while ((di * di + dj * dj) as f64).sqrt() * h > 0.5 + 1e-12 {
                di -= di.signum();
                dj -= dj.signum();
            }
            if (di, dj) != (0, 0) && !out.contains(&(di, dj)) {
                out.push((di, dj));
            }
        }
    }
    out
}

/// Discrete `‖m‖_{C¹} + sup |∇m(z′) − ∇m(z)| / φ(|z′ − z|)` over a fixed
/// subsample of node pairs at distance at most 1/2. Gradients are taken on
/// interior nodes only.
pub fn norm_c1phi(m: &GridMap) -> f64 {
    let g = &m.grid;
    let d = derivatives(m);
    let grad = |k: usize| -> Vec<Complex64> {
        let mut v = d.dx.at(k).to_vec();
        v.extend_from_slice(d.dy.at(k));
        v
    };
    let interior = g.interior_mask();
    let sup = m.max_modulus(None);
    let sup_grad = (0..g.len())
        .filter(|&k| interior[k])
        .map(|k| vec_norm(&grad(k)))
        .fold(0.0, f64::max);
    let offsets = pair_offsets(g);
    let mut sup_ratio: f64 = 0.0;
    for k in 0..g.len() {
        if !interior[k] {
            continue;
        }
        let (i, j) = g.ij[k];
        let gk = grad(k);
        for &(di, dj) in &offsets {
            let Some(q) = g.offset(i, j, di, dj) else { continue };
            if !interior[q] {
                continue;
            }
            let r = (g.nodes[q] - g.nodes[k]).norm();
            let diff: Vec<Complex64> = grad(q).iter().zip(&gk).map(|(a, b)| a - b).collect();
            sup_ratio = sup_ratio.max(vec_norm(&diff) / phi(r));
        }
    }
    sup + sup_grad + sup_ratio
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn grid_basics() {
        assert!(make_grid(14).is_err());
        assert!(make_grid(17).is_err());
        let g = make_grid(16).unwrap();
        assert!(g.nodes().iter().all(|z| z.norm() <= 1.0));
        let g = make_grid(128).unwrap();
        assert_eq!(g.h(), 1.0 / 64.0);
        let area = std::f64::consts::PI * 128.0 * 128.0 / 4.0;
        assert!((g.len() as f64 - area).abs() / area < 0.02);
        assert!(g.core_mask().iter().zip(g.interior_mask()).all(|(c, i)| !c || *i));
    }

    #[test]
    fn derivatives_of_monomials() {
        let g = make_grid(64).unwrap();
        let m = GridMap::scalar(&g, |z| z);
        let d = derivatives(&m);
        let mask = g.interior_mask();
        for k in 0..g.len() {
            if mask[k] {
                assert!((d.dz.values()[k] - 1.0).norm() < 1e-10);
                assert!(d.dzbar.values()[k].norm() < 1e-10);
            }
        }
        let m = GridMap::scalar(&g, |z| z.conj() * z.conj());
        let d = derivatives(&m);
        for k in 0..g.len() {
            if mask[k] {
                let z = g.node(k);
                assert!((d.dzbar.values()[k] - z.conj() * 2.0).norm() < 1e-10);
                assert!(d.dz.values()[k].norm() < 1e-10);
            }
        }
        let m = GridMap::scalar(&g, |z| c(z.norm_sqr(), 0.0));
        let d = derivatives(&m);
        for k in 0..g.len() {
            if mask[k] {
                assert!((d.lap.values()[k] - 4.0).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn conjugation_identity_is_exact() {
        let g = make_grid(32).unwrap();
        let m = GridMap::scalar(&g, |z| (z * 1.3).exp() + z.conj() * z * 0.2);
        let a = derivatives(&m.conj()).dz;
        let b = derivatives(&m).dzbar.conj();
        assert_eq!(a.values(), b.values());
    }

    #[test]
    fn jet_of_quadratic() {
        let g = make_grid(64).unwrap();
        let q = c(0.2, -0.1);
        let w1 = c(0.5, 0.3);
        let w2 = c(-0.4, 0.25);
        let m = GridMap::scalar(&g, |z| q + z * w1 + z * z * w2 * 0.5);
        let jet = jet_at_zero(&m, 2).unwrap();
        let want = [[q.re, q.im], [w1.re, w1.im], [w2.re, w2.im]];
        let got = [&jet.p[..], &jet.v[0][..], &jet.v[1][..]];
        for (a, b) in want.iter().zip(got) {
            assert!((a[0] - b[0]).abs() < 1e-12 && (a[1] - b[1]).abs() < 1e-12);
        }
        let zero = jet_at_zero(&GridMap::scalar(&g, |_| c(3.0, 1.0)), 1).unwrap();
        assert!(zero.v[0].iter().all(|v| v.abs() < 1e-12));
        assert!(jet_at_zero(&m, 3).is_err());
    }

    #[test]
    fn interpolation() {
        let g = make_grid(64).unwrap();
        let m = GridMap::scalar(&g, |z| z);
        let v = interp(&m, c(0.3, 0.4)).unwrap()[0];
        assert!((v - c(0.3, 0.4)).norm() < 1e-12);
        let sq = GridMap::scalar(&g, |z| z * z);
        let v = interp(&sq, c(0.5, 0.0)).unwrap()[0];
        assert!((v - 0.25).norm() < g.h() * g.h());
        let k = 1234;
        assert_eq!(interp(&sq, g.node(k)).unwrap()[0], sq.values()[k]);
        assert!(interp(&m, c(0.8, 0.8)).is_err());
        let rim = interp(&m, c(0.0, 1.0)).unwrap()[0];
        assert!((rim - c(0.0, 1.0)).norm() < 2.0 * g.h());
    }

    #[test]
    fn c1phi_norm() {
        let g = make_grid(64).unwrap();
        assert_eq!(norm_c1phi(&GridMap::zeros(&g, 2)), 0.0);
        let lin = GridMap::scalar(&g, |z| z);
        let expect = lin.max_modulus(None) + 2f64.sqrt();
        assert!((norm_c1phi(&lin) - expect).abs() < 1e-9);
    }

    #[test]
    fn csv_round_trip() {
        let g = make_grid(16).unwrap();
        let m = GridMap::from_fn(&g, 2, |z| vec![z, z * z]);
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        let back = GridMap::read_csv(&buf[..]).unwrap();
        assert_eq!(back.n(), 2);
        assert!(back.sup_diff(&m) < 1e-14);
        assert!(GridMap::read_csv(&b"N,16\n"[..]).is_err());
    }
}
