//! Levi forms `dd^c_J λ` and plurisubharmonicity tests.
//!
//! `d^c_J λ(X) = −dλ(JX)`. For vector fields `Y, T`,
//! `dd^c_J λ(Y,T) = Y·d^cλ(T) − T·d^cλ(Y) − d^cλ([Y,T])`; expanding the
//! derivatives gives the tensorial form
//! `−∇λ·(∂_Y J)T + ∇λ·(∂_T J)Y − (JT)·HY + (JY)·HT`
//! with `H` the Hessian of `λ`. Only one derivative of `J` is involved.

use std::sync::Arc;

use serde::Serialize;

use crate::discgrid::{self, GridMap};
use crate::disc_solver;
use crate::error::{Error, Result};
use crate::geometry::{mat_vec, BoxDomain, Mat, StructureField};
use crate::poly::{Poly, VectorFieldExpr};

type ScalarFn = dyn Fn(&[f64]) -> f64 + Send + Sync;
type GradFn = dyn Fn(&[f64]) -> Vec<f64> + Send + Sync;
type HessFn = dyn Fn(&[f64]) -> Mat + Send + Sync;

/// Real function on a box, with optional exact gradient and Hessian.
#[derive(Clone)]
pub struct ScalarField {
    dim: usize,
    eval: Arc<ScalarFn>,
    grad: Option<Arc<GradFn>>,
    hess: Option<Arc<HessFn>>,
    domain: BoxDomain,
    step: f64,
    label: String,
}

impl std::fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "ScalarField({})", self.label)
    }
}

impl ScalarField {
    pub fn new(dim: usize, eval: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            dim,
            eval: Arc::new(eval),
            grad: None,
            hess: None,
            domain: BoxDomain::cube(dim, 1e6),
            step: 1e-4,
            label: "custom".into(),
        }
    }

    pub fn with_grad(mut self, g: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static) -> Self {
        self.grad = Some(Arc::new(g));
        self
    }

    pub fn with_hessian(mut self, h: impl Fn(&[f64]) -> Mat + Send + Sync + 'static) -> Self {
        self.hess = Some(Arc::new(h));
        self
    }

    pub fn with_domain(mut self, d: BoxDomain) -> Self {
        self.domain = d;
        self
    }

    pub fn with_label(mut self, l: impl Into<String>) -> Self {
        self.label = l.into();
        self
    }

    /// Polynomial with exact derivatives.
    pub fn from_poly(p: Poly) -> Self {
        let dim = p.nvars();
        let grads: Vec<Poly> = (0..dim).map(|k| p.deriv(k)).collect();
        let hess: Vec<Vec<Poly>> = grads.iter().map(|g| (0..dim).map(|k| g.deriv(k)).collect()).collect();
        let label = p.to_string();
        let pe = p.clone();
        Self::new(dim, move |x| pe.eval(x))
            .with_grad(move |x| grads.iter().map(|g| g.eval(x)).collect())
            .with_hessian(move |x| Mat::from_fn(dim, dim, |r, c| hess[r][c].eval(x)))
            .with_label(label)
    }

    pub fn parse(src: &str, dim: usize) -> Result<Self> {
        Ok(Self::from_poly(Poly::parse(src, dim)?))
    }

    /// The coordinate function `p ↦ p_k`.
    pub fn coordinate(dim: usize, k: usize) -> Self {
        Self::from_poly(Poly::var(dim, k))
    }

    /// `|p − c|²`.
    pub fn dist_sq(center: &[f64]) -> Self {
        let dim = center.len();
        let c1 = center.to_vec();
        let c2 = center.to_vec();
        Self::new(dim, move |x| x.iter().zip(&c1).map(|(a, b)| (a - b) * (a - b)).sum())
            .with_grad(move |x| x.iter().zip(&c2).map(|(a, b)| 2.0 * (a - b)).collect())
            .with_hessian(move |_| Mat::identity(dim, dim) * 2.0)
            .with_label("dist_sq")
    }

    /// Radial function `f(|Z|)` given `f, f′, f″`.
    fn radial(
        dim: usize,
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
        f1: impl Fn(f64) -> f64 + Send + Sync + 'static,
        f2: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        let norm = |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let f1 = Arc::new(f1);
        let f1g = f1.clone();
        Self::new(dim, move |x| f(norm(x)))
            .with_grad(move |x| {
                let r = norm(x);
                x.iter().map(|v| f1g(r) * v / r).collect()
            })
            .with_hessian(move |x| {
                let r = norm(x);
                let (a, b) = (f2(r), f1(r) / r);
                Mat::from_fn(dim, dim, |i, j| {
                    let zz = x[i] * x[j] / (r * r);
                    a * zz + b * (if i == j { 1.0 } else { 0.0 } - zz)
                })
            })
    }

    /// `log|Z|`.
    pub fn log_norm(dim: usize) -> Self {
        Self::radial(dim, f64::ln, |r| 1.0 / r, |r| -1.0 / (r * r)).with_label("log|Z|")
    }

    /// `log|Z| + A|Z|`.
    pub fn chirka(dim: usize, a: f64) -> Self {
        Self::radial(dim, move |r| r.ln() + a * r, move |r| 1.0 / r + a, |r| -1.0 / (r * r))
            .with_label(format!("log|Z|+{a}|Z|"))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn eval(&self, p: &[f64]) -> f64 {
        (self.eval)(p)
    }

    fn check(&self, p: &[f64], margin: f64) -> Result<()> {
        if self.domain.contains_with_margin(p, margin) {
            Ok(())
        } else {
            Err(Error::StencilOutside { point: p.to_vec() })
        }
    }

    pub fn grad(&self, p: &[f64]) -> Result<Vec<f64>> {
        if let Some(g) = &self.grad {
            return Ok(g(p));
        }
        let s = self.step;
        self.check(p, s)?;
        Ok((0..self.dim)
            .map(|k| {
                let mut a = p.to_vec();
                let mut b = p.to_vec();
                a[k] += s;
                b[k] -= s;
                (self.eval(&a) - self.eval(&b)) / (2.0 * s)
            })
            .collect())
    }

    pub fn hessian(&self, p: &[f64]) -> Result<Mat> {
        if let Some(h) = &self.hess {
            return Ok(h(p));
        }
        let s = self.step;
        self.check(p, 2.0 * s)?;
        let d = self.dim;
        let shifted = |i: usize, si: f64, j: usize, sj: f64| {
            let mut q = p.to_vec();
            q[i] += si;
            q[j] += sj;
            self.eval(&q)
        };
        let mut h = Mat::zeros(d, d);
        for i in 0..d {
            for j in i..d {
                let v = (shifted(i, s, j, s) - shifted(i, s, j, -s) - shifted(i, -s, j, s)
                    + shifted(i, -s, j, -s))
                    / (4.0 * s * s);
                h[(i, j)] = v;
                h[(j, i)] = v;
            }
        }
        Ok(h)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `dd^c_J λ(Y, T)` at `p` for constant extensions of `Y` and `T`.
pub fn ddc_const(j: &StructureField, lam: &ScalarField, p: &[f64], y: &[f64], t: &[f64]) -> Result<f64> {
    let jm = j.eval(p);
    let g = lam.grad(p)?;
    let h = lam.hessian(p)?;
    let (jy, jt) = (mat_vec(&jm, y), mat_vec(&jm, t));
    let (hy, ht) = (mat_vec(&h, y), mat_vec(&h, t));
    let dyj_t = mat_vec(&j.directional(p, y)?, t);
    let dtj_y = mat_vec(&j.directional(p, t)?, y);
    Ok(-dot(&g, &dyj_t) + dot(&g, &dtj_y) - dot(&jt, &hy) + dot(&jy, &ht))
}

/// Levi form `dd^c_J λ(Y, J(p)Y)`.
pub fn ddc_levi(j: &StructureField, lam: &ScalarField, p: &[f64], y: &[f64]) -> Result<f64> {
    let jy = mat_vec(&j.eval(p), y);
    ddc_const(j, lam, p, y, &jy)
}

/// `d^c_J λ(T)(q) = −∇λ(q)·J(q)T(q)`.
fn dc(j: &StructureField, lam: &ScalarField, q: &[f64], t: &VectorFieldExpr) -> Result<f64> {
    Ok(-dot(&lam.grad(q)?, &mat_vec(&j.eval(q), &t.eval(q))))
}

fn along(j: &StructureField, lam: &ScalarField, p: &[f64], y: &[f64], t: &VectorFieldExpr, s: f64) -> Result<f64> {
    let a: Vec<f64> = p.iter().zip(y).map(|(x, v)| x + s * v).collect();
    let b: Vec<f64> = p.iter().zip(y).map(|(x, v)| x - s * v).collect();
    if !j.domain().contains(&a) || !j.domain().contains(&b) {
        return Err(Error::StencilOutside { point: p.to_vec() });
    }
    Ok((dc(j, lam, &a, t)? - dc(j, lam, &b, t)?) / (2.0 * s))
}

/// `dd^c_J λ(Y,T) = Y·d^cλ(T) − T·d^cλ(Y) − d^cλ([Y,T])` for polynomial
/// fields, the first two terms by central differences along the fields.
pub fn ddc_form(
    j: &StructureField,
    lam: &ScalarField,
    p: &[f64],
    y: &VectorFieldExpr,
    t: &VectorFieldExpr,
) -> Result<f64> {
    let s = lam.step;
    let yp = y.eval(p);
    let tp = t.eval(p);
    let a = along(j, lam, p, &yp, t, s)?;
    let b = along(j, lam, p, &tp, y, s)?;
    let c = dc(j, lam, p, &y.bracket(t))?;
    Ok(a - b - c)
}

/// Both sides of the pullback identity `Δ(λ∘u) = dd^c_J λ(u_x, J u_x)`.
#[derive(Clone, Debug, Serialize)]
pub struct PullbackReport {
    /// `max |Δ(λ∘u) − dd^c_J λ(u_x, J u_x)|` over core nodes.
    pub maxdiff: f64,
    pub max_laplacian: f64,
    pub max_levi: f64,
    pub disc_residual: f64,
}

/// Compares the FD Laplacian of `λ∘u` with the Levi form along `u_x`.
pub fn pullback_check(j: &StructureField, lam: &ScalarField, u: &GridMap) -> Result<PullbackReport> {
    let disc_residual = disc_solver::residual(j, u)?;
    if disc_residual > 1e-4 {
        return Err(Error::Hypothesis(format!(
            "disc residual {disc_residual:.3e} exceeds 1e-4, u is not J-holomorphic"
        )));
    }
    let grid = u.grid();
    let mut comp = GridMap::zeros(grid, 1);
    for k in 0..grid.len() {
        comp.values_mut()[k] = num_complex::Complex64::new(lam.eval(&u.real_at(k)), 0.0);
    }
    let lap = discgrid::derivatives(&comp).lap;
    let dx = discgrid::derivatives(u).dx;
    let core = grid.core_mask();
    let mut rep = PullbackReport { maxdiff: 0.0, max_laplacian: 0.0, max_levi: 0.0, disc_residual };
    for k in 0..grid.len() {
        if !core[k] {
            continue;
        }
        let p = u.real_at(k);
        let levi = ddc_levi(j, lam, &p, &dx.real_at(k))?;
        let l = lap.values()[k].re;
        rep.maxdiff = rep.maxdiff.max((l - levi).abs());
        rep.max_laplacian = rep.max_laplacian.max(l.abs());
        rep.max_levi = rep.max_levi.max(levi.abs());
    }
    Ok(rep)
}

/// `min |Z|·dd^c_J(log|Z| + A|Z|)(Y, JY)/‖Y‖²` over the samples.
pub fn chirka_check(j: &StructureField, a: f64, samples: &[(Vec<f64>, Vec<f64>)]) -> Result<f64> {
    let lam = ScalarField::chirka(j.dim(), a);
    let mut min = f64::INFINITY;
    for (z, y) in samples {
        let r = dot(z, z).sqrt();
        if r == 0.0 {
            return Err(Error::InvalidArgument("Chirka sample at Z = 0".into()));
        }
        let yy = dot(y, y);
        if yy == 0.0 {
            continue;
        }
        min = min.min(ddc_levi(j, &lam, z, y)? * r / yy);
    }
    Ok(min)
}

/// Deterministic `(Z, Y)` pairs with `r_min ≤ |Z| ≤ r_max`, `|Z|` log-uniform
/// and `Y` a unit vector.
pub fn chirka_samples(dim: usize, r_min: f64, r_max: f64, count: usize, seed: u64) -> Vec<(Vec<f64>, Vec<f64>)> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let r = (r_min.ln() + rng.random::<f64>() * (r_max / r_min).ln()).exp();
            let z: Vec<f64> = unit_vector(&mut rng, dim).into_iter().map(|v| v * r).collect();
            (z, unit_vector(&mut rng, dim))
        })
        .collect()
}

/// Normalized vector of uniform coordinates in `[−1, 1]`, resampled if tiny.
fn unit_vector(rng: &mut impl rand::Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-3 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// `Y` is complex tangent to `{ρ = ρ(p)}` at `p` iff `dρ(Y) = dρ(JY) = 0`.
pub fn is_complex_tangent(j: &StructureField, rho: &ScalarField, p: &[f64], y: &[f64]) -> Result<bool> {
    let g = rho.grad(p)?;
    let gn = dot(&g, &g).sqrt();
    if gn < 1e-6 {
        return Err(Error::Hypothesis(format!("|∇ρ| = {gn:.3e} is degenerate at {p:?}")));
    }
    let tol = 1e-8 * gn * dot(y, y).sqrt().max(1.0);
    let jy = mat_vec(&j.eval(p), y);
    Ok(dot(&g, y).abs() <= tol && dot(&g, &jy).abs() <= tol)
}

/// `dd^c_J ρ(Y,T)` and `−d^c_J ρ([Y,T])` for complex tangent fields.
#[derive(Clone, Debug, Serialize)]
pub struct FrobeniusDefect {
    pub ddc: f64,
    pub bracket_pairing: f64,
}

pub fn frobenius_defect(
    j: &StructureField,
    rho: &ScalarField,
    p: &[f64],
    y: &VectorFieldExpr,
    t: &VectorFieldExpr,
) -> Result<FrobeniusDefect> {
    for (name, f) in [("Y", y), ("T", t)] {
        if !is_complex_tangent(j, rho, p, &f.eval(p))? {
            return Err(Error::Hypothesis(format!("{name} is not complex tangent at {p:?}")));
        }
    }
    let ddc = ddc_form(j, rho, p, y, t)?;
    let bracket_pairing = -dc(j, rho, p, &y.bracket(t))?;
    Ok(FrobeniusDefect { ddc, bracket_pairing })
}

/// Levi form of `λ = |· − p|²` at `q` along `Y`.
pub fn dist_sq_levi(j: &StructureField, p: &[f64], q: &[f64], y: &[f64]) -> Result<f64> {
    ddc_levi(j, &ScalarField::dist_sq(p), q, y)
}
