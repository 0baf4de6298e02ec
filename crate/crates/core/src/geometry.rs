//! Almost complex structures on boxes in R^{2n}.
//!
//! Coordinates are ordered `(x1, y1, x2, y2, ...)` and the standard structure
//! acts as multiplication by `i` on each pair.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::poly::{Poly, VectorFieldExpr};

pub type Mat = DMatrix<f64>;

type MatFn = dyn Fn(&[f64]) -> Mat + Send + Sync;
type PartialFn = dyn Fn(&[f64], usize) -> Mat + Send + Sync;

/// Block-diagonal `J_st` on R^{2n}.
pub fn j_standard(n: usize) -> Mat {
    let mut m = Mat::zeros(2 * n, 2 * n);
    for k in 0..n {
        m[(2 * k + 1, 2 * k)] = 1.0;
        m[(2 * k, 2 * k + 1)] = -1.0;
    }
    m
}

/// Axis-aligned box.
#[derive(Clone, Debug, PartialEq)]
pub struct BoxDomain {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoxDomain {
    pub fn cube(dim: usize, r: f64) -> Self {
        Self { lo: vec![-r; dim], hi: vec![r; dim] }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        p.len() == self.dim()
            && p.iter().zip(self.lo.iter().zip(&self.hi)).all(|(x, (l, h))| x >= l && x <= h)
    }

    /// True when the closed cube of half-width `m` around `p` lies in the box.
    pub fn contains_with_margin(&self, p: &[f64], m: f64) -> bool {
        p.len() == self.dim()
            && p
                .iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(x, (l, h))| x - m >= *l && x + m <= *h)
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            lo: self.lo.iter().map(|v| v * s).collect(),
            hi: self.hi.iter().map(|v| v * s).collect(),
        }
    }

    pub fn contains_box(&self, other: &Self) -> bool {
        self.contains(&other.lo) && self.contains(&other.hi)
    }
}

/// Deterministic uniform samples in the Euclidean ball of radius `r`.
pub fn sample_ball(dim: usize, r: f64, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let p: Vec<f64> = (0..dim).map(|_| rng.random_range(-r..r)).collect();
        if p.iter().map(|x| x * x).sum::<f64>() <= r * r {
            out.push(p);
        }
    }
    out
}

/// Regularity tag carried as metadata; nothing is certified from it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Smoothness {
    Analytic,
    Polynomial,
    Sampled,
}

/// An almost complex structure `p ↦ J(p)` on a box.
#[derive(Clone)]
pub struct StructureField {
    n: usize,
    eval: Arc<MatFn>,
    partial: Option<Arc<PartialFn>>,
    q_direct: Option<Arc<MatFn>>,
    domain: BoxDomain,
    deriv_step: f64,
    label: String,
    smoothness: Smoothness,
}

impl fmt::Debug for StructureField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("StructureField")
            .field("label", &self.label)
            .field("n", &self.n)
            .field("closed_form_deriv", &self.partial.is_some())
            .finish()
    }
}

impl StructureField {
    pub fn new(
        n: usize,
        domain: BoxDomain,
        eval: impl Fn(&[f64]) -> Mat + Send + Sync + 'static,
    ) -> Self {
        Self {
            n,
            eval: Arc::new(eval),
            partial: None,
            q_direct: None,
            domain,
            deriv_step: 1e-5,
            label: "custom".into(),
            smoothness: Smoothness::Sampled,
        }
    }

    /// Attach the exact partial derivative `∂J/∂p_k`.
    pub fn with_partial(
        mut self,
        partial: impl Fn(&[f64], usize) -> Mat + Send + Sync + 'static,
    ) -> Self {
        self.partial = Some(Arc::new(partial));
        self
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn with_smoothness(mut self, s: Smoothness) -> Self {
        self.smoothness = s;
        self
    }

    pub fn with_deriv_step(mut self, step: f64) -> Self {
        self.deriv_step = step;
        self
    }

    fn with_q(mut self, q: impl Fn(&[f64]) -> Mat + Send + Sync + 'static) -> Self {
        self.q_direct = Some(Arc::new(q));
        self
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        2 * self.n
    }

    pub fn domain(&self) -> &BoxDomain {
        &self.domain
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn smoothness(&self) -> Smoothness {
        self.smoothness
    }

    pub fn deriv_step(&self) -> f64 {
        self.deriv_step
    }

    pub fn has_closed_form_deriv(&self) -> bool {
        self.partial.is_some()
    }

    pub fn eval(&self, p: &[f64]) -> Mat {
        (self.eval)(p)
    }

    /// `∂J/∂p_k` at `p`, exact when available, else central differences.
    pub fn partial(&self, p: &[f64], k: usize) -> Result<Mat> {
        if let Some(d) = &self.partial {
            return Ok(d(p, k));
        }
        let s = self.deriv_step;
        if !self.domain.contains_with_margin(p, s) {
            return Err(Error::StencilOutside { point: p.to_vec() });
        }
        let mut a = p.to_vec();
        let mut b = p.to_vec();
        a[k] += s;
        b[k] -= s;
        Ok((self.eval(&a) - self.eval(&b)) / (2.0 * s))
    }

    /// Directional derivative `∂_v J` at `p`.
    pub fn directional(&self, p: &[f64], v: &[f64]) -> Result<Mat> {
        let d = self.dim();
        let mut out = Mat::zeros(d, d);
        for (k, &vk) in v.iter().enumerate() {
            if vk != 0.0 {
                out += self.partial(p, k)? * vk;
            }
        }
        Ok(out)
    }

    /// `Q_J(p)` on the hot path of the disc solver.
    pub(crate) fn q_fast(&self, p: &[f64]) -> Result<Mat> {
        if let Some(q) = &self.q_direct {
            return Ok(q(p));
        }
        let j = self.eval(p);
        let js = j_standard(self.n);
        let sum = &j + &js;
        let diff = &j - &js;
        match sum.lu().solve(&diff) {
            Some(q) if q.iter().all(|v| v.is_finite()) && q.amax() < 1e6 => Ok(q),
            _ => q_matrix(self, p),
        }
    }
}

/// Complex `n×n` matrix field `A(p)` defining an antilinear `Q(p)w = A(p) w̄`.
type AntilinearFn = dyn Fn(&[f64]) -> Vec<Vec<Complex64>> + Send + Sync;

fn antilinear_to_real(a: &[Vec<Complex64>]) -> Mat {
    let n = a.len();
    let mut q = Mat::zeros(2 * n, 2 * n);
    for (r, row) in a.iter().enumerate() {
        for (c, v) in row.iter().enumerate() {
            q[(2 * r, 2 * c)] = v.re;
            q[(2 * r, 2 * c + 1)] = v.im;
            q[(2 * r + 1, 2 * c)] = v.im;
            q[(2 * r + 1, 2 * c + 1)] = -v.re;
        }
    }
    q
}

/// Inverse of `J ↦ Q_J`: `J = (I − Q) J_st (I − Q)^{-1}`, valid when `Q`
/// anticommutes with `J_st`.
pub fn j_from_q(q: &Mat) -> Mat {
    let d = q.nrows();
    let id = Mat::identity(d, d);
    let a = &id - q;
    let inv = a.clone().try_inverse().expect("I - Q must be invertible");
    a * j_standard(d / 2) * inv
}

fn structure_from_antilinear(
    n: usize,
    domain: BoxDomain,
    a: Arc<AntilinearFn>,
    da: Arc<dyn Fn(&[f64], usize) -> Vec<Vec<Complex64>> + Send + Sync>,
) -> StructureField {
    let a_eval = a.clone();
    let a_q = a.clone();
    StructureField::new(n, domain, move |p| j_from_q(&antilinear_to_real(&a_eval(p))))
        .with_partial(move |p, k| {
            let d = 2 * n;
            let q = antilinear_to_real(&a(p));
            let dq = antilinear_to_real(&da(p, k));
            let id = Mat::identity(d, d);
            let r = (&id - &q).try_inverse().expect("I - Q must be invertible");
            let j = (&id - &q) * j_standard(n) * &r;
            // dJ = −dQ·J_st·R + J·dQ·R with R = (I − Q)^{-1}
            (-&dq * j_standard(n) + &j * &dq) * r
        })
        .with_q(move |p| antilinear_to_real(&a_q(p)))
        .with_smoothness(Smoothness::Analytic)
}

/// The standard structure on R^{2n}.
pub fn make_standard(n: usize) -> StructureField {
    let js = j_standard(n);
    let d = 2 * n;
    StructureField::new(n, BoxDomain::cube(d, 1e6), move |_| js.clone())
        .with_partial(move |_, _| Mat::zeros(d, d))
        .with_q(move |_| Mat::zeros(d, d))
        .with_label(format!("standard({n})"))
        .with_smoothness(Smoothness::Analytic)
}

/// The structure on R^6 with `J∂x1 = ∂y1`, `J L1 = L2`, `J∂x3 = ∂y3`, where
/// `L1 = ∂x2 + x1∂x3` and `L2 = ∂y2 − y1∂x3`.
pub fn make_r6() -> StructureField {
    StructureField::new(3, BoxDomain::cube(6, 4.0), |p| {
        let (x1, y1) = (p[0], p[1]);
        let mut j = j_standard(3);
        // column of J∂x2 = ∂y2 − y1∂x3 − x1∂y3
        j[(4, 2)] = -y1;
        j[(5, 2)] = -x1;
        // column of J∂y2 = −∂x2 − x1∂x3 + y1∂y3
        j[(4, 3)] = -x1;
        j[(5, 3)] = y1;
        j
    })
    .with_partial(|_, k| {
        let mut d = Mat::zeros(6, 6);
        match k {
            0 => {
                d[(5, 2)] = -1.0;
                d[(4, 3)] = -1.0;
            }
            1 => {
                d[(4, 2)] = -1.0;
                d[(5, 3)] = 1.0;
            }
            _ => {}
        }
        d
    })
    .with_label("r6")
    .with_smoothness(Smoothness::Polynomial)
}

/// `L1 = ∂x2 + x1∂x3` on R^6.
pub fn r6_l1() -> VectorFieldExpr {
    VectorFieldExpr::parse(&["0", "0", "1", "0", "x1", "0"]).expect("static field")
}

/// `L2 = ∂y2 − y1∂x3` on R^6.
pub fn r6_l2() -> VectorFieldExpr {
    VectorFieldExpr::parse(&["0", "0", "0", "1", "-y1", "0"]).expect("static field")
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// A generic non-integrable structure on R^4 with `J(0) = J_st` whose
/// deviation from `J_st` is linear in `p` with size `eps`.
pub fn make_chirka_perturbed(eps: f64) -> StructureField {
    let a = move |p: &[f64]| {
        let (x1, y1, x2, y2) = (p[0], p[1], p[2], p[3]);
        vec![
            vec![c(0.5 * eps * y1, 0.5 * eps * x2), c(0.5 * eps * x1, -0.5 * eps * y2)],
            vec![c(0.5 * eps * x2, 0.5 * eps * y1), c(0.5 * eps * y2, 0.5 * eps * x1)],
        ]
    };
    let da = move |_: &[f64], k: usize| {
        let h = 0.5 * eps;
        let z = c(0.0, 0.0);
        match k {
            0 => vec![vec![z, c(h, 0.0)], vec![z, c(0.0, h)]],
            1 => vec![vec![c(h, 0.0), z], vec![c(0.0, h), z]],
            2 => vec![vec![c(0.0, h), z], vec![c(h, 0.0), z]],
            _ => vec![vec![z, c(0.0, -h)], vec![z, c(h, 0.0)]],
        }
    };
    structure_from_antilinear(2, BoxDomain::cube(4, 4.0), Arc::new(a), Arc::new(da))
        .with_label(format!("chirka-perturbed({eps})"))
}

/// A structure on R^4 for which `{z2 = 0}` is J-complex but `J` is not yet in
/// the split form along it.
pub fn make_hypersurface_perturbed(eps: f64) -> StructureField {
    let a = move |p: &[f64]| {
        let (x1, y1, x2, y2) = (p[0], p[1], p[2], p[3]);
        let h = 0.5 * eps;
        vec![
            vec![c(h * y2, h * x1), c(h * (0.5 + x1), h * y1)],
            vec![c(h * x1 * x2, -h * y2), c(h * y1, h * x1)],
        ]
    };
    let da = move |p: &[f64], k: usize| {
        let (x1, x2) = (p[0], p[2]);
        let h = 0.5 * eps;
        let z = c(0.0, 0.0);
        match k {
            0 => vec![vec![c(0.0, h), c(h, 0.0)], vec![c(h * x2, 0.0), c(0.0, h)]],
            1 => vec![vec![z, c(0.0, h)], vec![z, c(h, 0.0)]],
            2 => vec![vec![z, z], vec![c(h * x1, 0.0), z]],
            _ => vec![vec![c(h, 0.0), z], vec![c(0.0, -h), z]],
        }
    };
    structure_from_antilinear(2, BoxDomain::cube(4, 4.0), Arc::new(a), Arc::new(da))
        .with_label(format!("hypersurface-perturbed({eps})"))
}

/// Structure given by polynomial matrix entries (row-major, `2n×2n`).
pub fn from_polynomial_entries(n: usize, entries: Vec<Vec<Poly>>) -> Result<StructureField> {
    let d = 2 * n;
    if entries.len() != d || entries.iter().any(|r| r.len() != d) {
        return Err(Error::Config(format!("expected a {d}x{d} matrix of polynomials")));
    }
    if let Some(p) = entries.iter().flatten().find(|p| p.degree() > 3) {
        return Err(Error::Config(format!("entry of degree {} exceeds 3", p.degree())));
    }
    let derivs: Vec<Vec<Vec<Poly>>> = (0..d)
        .map(|k| entries.iter().map(|r| r.iter().map(|e| e.deriv(k)).collect()).collect())
        .collect();
    let ent = entries.clone();
    let field = StructureField::new(n, BoxDomain::cube(d, 1.0), move |p| {
        Mat::from_fn(d, d, |r, c| ent[r][c].eval(p))
    })
    .with_partial(move |p, k| Mat::from_fn(d, d, |r, c| derivs[k][r][c].eval(p)))
    .with_label("custom")
    .with_smoothness(Smoothness::Polynomial);
    let defect = square_defect(&field, &sample_ball(d, 1.0, 64, 11));
    if defect > 1e-9 {
        return Err(Error::Config(format!("entries do not satisfy J^2 = -I (defect {defect:.2e})")));
    }
    Ok(field)
}

/// Parses `{"n": .., "entries": [[..]]}`.
pub fn from_json(src: &str) -> Result<StructureField> {
    #[derive(serde::Deserialize)]
    struct Raw {
        n: usize,
        entries: Vec<Vec<String>>,
    }
    let raw: Raw = serde_json::from_str(src)?;
    let d = 2 * raw.n;
    let entries = raw
        .entries
        .iter()
        .map(|r| r.iter().map(|s| Poly::parse(s, d)).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    from_polynomial_entries(raw.n, entries)
}

/// Looks up a named preset such as `"r6"` or `"chirka-perturbed(0.05)"`.
pub fn preset(name: &str) -> Result<StructureField> {
    let name = name.trim();
    let (head, arg) = match name.find('(') {
        Some(i) if name.ends_with(')') => (&name[..i], Some(&name[i + 1..name.len() - 1])),
        Some(_) => return Err(Error::Config(format!("malformed preset '{name}'"))),
        None => (name, None),
    };
    let num = |default: Option<f64>| -> Result<f64> {
        match arg {
            Some(a) => a
                .trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("bad preset argument in '{name}'"))),
            None => default.ok_or_else(|| Error::Config(format!("preset '{head}' needs an argument"))),
        }
    };
    match head {
        "standard" => {
            let n = num(Some(2.0))?;
            if n < 1.0 || n.fract() != 0.0 || n > 6.0 {
                return Err(Error::Config(format!("bad dimension in '{name}'")));
            }
            Ok(make_standard(n as usize))
        }
        "r6" => Ok(make_r6()),
        "chirka-perturbed" => Ok(make_chirka_perturbed(num(None)?)),
        "hypersurface-perturbed" => Ok(make_hypersurface_perturbed(num(None)?)),
        _ => Err(Error::Config(format!("unknown structure preset '{name}'"))),
    }
}

/// `p ↦ J(eps·p)`.
pub fn dilate(j: &StructureField, eps: f64) -> Result<StructureField> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::InvalidArgument(format!("dilation factor {eps} not in (0, 1]")));
    }
    if !j.domain.contains_box(&j.domain.scaled(eps)) {
        return Err(Error::DomainExit { point: j.domain.scaled(eps).lo });
    }
    let base = j.clone();
    let scale = move |p: &[f64]| p.iter().map(|x| x * eps).collect::<Vec<f64>>();
    let mut out = StructureField::new(j.n, j.domain.clone(), {
        let base = base.clone();
        move |p| base.eval(&scale(p))
    });
    if let Some(d) = &base.partial {
        let d = d.clone();
        out = out.with_partial(move |p, k| d(&scale(p), k) * eps);
    }
    if let Some(q) = &base.q_direct {
        let q = q.clone();
        out = out.with_q(move |p| q(&scale(p)));
    }
    Ok(out
        .with_label(format!("dilate({}, {eps})", j.label))
        .with_smoothness(j.smoothness)
        .with_deriv_step(j.deriv_step))
}

/// `p ↦ J(center + scale·p)`, the affine rescaling used to zoom into
/// small neighbourhoods.
pub fn rescale(j: &StructureField, center: &[f64], scale: f64) -> StructureField {
    let base = j.clone();
    let center = center.to_vec();
    let c2 = center.clone();
    let map = move |p: &[f64]| {
        p.iter().zip(&c2).map(|(x, c)| c + scale * x).collect::<Vec<f64>>()
    };
    let lo: Vec<f64> = j.domain.lo.iter().zip(&center).map(|(l, c)| (l - c) / scale).collect();
    let hi: Vec<f64> = j.domain.hi.iter().zip(&center).map(|(h, c)| (h - c) / scale).collect();
    let m2 = map.clone();
    let mut out = StructureField::new(j.n, BoxDomain { lo, hi }, {
        let base = base.clone();
        move |p| base.eval(&map(p))
    });
    if let Some(d) = &base.partial {
        let d = d.clone();
        let m3 = m2.clone();
        out = out.with_partial(move |p, k| d(&m3(p), k) * scale);
    }
    if let Some(q) = &base.q_direct {
        let q = q.clone();
        out = out.with_q(move |p| q(&m2(p)));
    }
    out.with_label(format!("rescale({})", j.label)).with_smoothness(j.smoothness)
}

/// `Q_J(p) = (J + J_st)^{-1}(J − J_st)`.
pub fn q_matrix(j: &StructureField, p: &[f64]) -> Result<Mat> {
    if !j.domain.contains(p) {
        return Err(Error::DomainExit { point: p.to_vec() });
    }
    let jm = j.eval(p);
    let js = j_standard(j.n);
    let sum = &jm + &js;
    let sigma = sum.clone().svd(false, false).singular_values.min();
    if sigma < 1e-6 {
        return Err(Error::SingularStructure { point: p.to_vec(), sigma });
    }
    sum.lu()
        .solve(&(&jm - &js))
        .ok_or(Error::SingularStructure { point: p.to_vec(), sigma })
}

pub(crate) fn mat_vec(m: &Mat, v: &[f64]) -> Vec<f64> {
    (0..m.nrows()).map(|r| (0..m.ncols()).map(|c| m[(r, c)] * v[c]).sum()).collect()
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Nijenhuis tensor `[Y,T] + J[JY,T] + J[Y,JT] − [JY,JT]` for constant
/// extensions of `Y` and `T`.
pub fn nijenhuis(j: &StructureField, p: &[f64], y: &[f64], t: &[f64]) -> Result<Vec<f64>> {
    let jm = j.eval(p);
    let jy = mat_vec(&jm, y);
    let jt = mat_vec(&jm, t);
    let d_t = j.directional(p, t)?;
    let d_y = j.directional(p, y)?;
    let d_jy = j.directional(p, &jy)?;
    let d_jt = j.directional(p, &jt)?;
    let a = mat_vec(&jm, &mat_vec(&d_t, y));
    let b = mat_vec(&jm, &mat_vec(&d_y, t));
    let cc = mat_vec(&d_jy, t);
    let dd = mat_vec(&d_jt, y);
    Ok(add(&sub(&sub(&b, &a), &cc), &dd))
}

/// Jacobian of the field `p ↦ J(p)·V(p)`, as columns `∂_k(JV)`.
fn jacobian_jv(j: &StructureField, p: &[f64], v: &VectorFieldExpr) -> Result<Vec<Vec<f64>>> {
    let jm = j.eval(p);
    let vp = v.eval(p);
    let dv = v.jacobian(p);
    (0..j.dim())
        .map(|k| {
            let col_dv: Vec<f64> = dv.iter().map(|row| row[k]).collect();
            Ok(add(&mat_vec(&j.partial(p, k)?, &vp), &mat_vec(&jm, &col_dv)))
        })
        .collect()
}

fn bracket_from_jacobians(a: &[f64], da: &[Vec<f64>], b: &[f64], db: &[Vec<f64>]) -> Vec<f64> {
    // da[k] is the column ∂_k A
    let d = a.len();
    (0..d)
        .map(|i| (0..d).map(|k| a[k] * db[k][i] - b[k] * da[k][i]).sum())
        .collect()
}

/// Nijenhuis tensor evaluated through the brackets of polynomial fields.
pub fn nijenhuis_fields(
    j: &StructureField,
    p: &[f64],
    y: &VectorFieldExpr,
    t: &VectorFieldExpr,
) -> Result<Vec<f64>> {
    let jm = j.eval(p);
    let yv = y.eval(p);
    let tv = t.eval(p);
    let cols = |v: &VectorFieldExpr| -> Vec<Vec<f64>> {
        let m = v.jacobian(p);
        (0..v.dim()).map(|k| m.iter().map(|r| r[k]).collect()).collect()
    };
    let dy = cols(y);
    let dt = cols(t);
    let jy = mat_vec(&jm, &yv);
    let jt = mat_vec(&jm, &tv);
    let djy = jacobian_jv(j, p, y)?;
    let djt = jacobian_jv(j, p, t)?;
    let b1 = bracket_from_jacobians(&yv, &dy, &tv, &dt);
    let b2 = mat_vec(&jm, &bracket_from_jacobians(&jy, &djy, &tv, &dt));
    let b3 = mat_vec(&jm, &bracket_from_jacobians(&yv, &dy, &jt, &djt));
    let b4 = bracket_from_jacobians(&jy, &djy, &jt, &djt);
    Ok(sub(&add(&add(&b1, &b2), &b3), &b4))
}

/// `max ‖J(p)² + I‖` over the samples.
pub fn square_defect(j: &StructureField, samples: &[Vec<f64>]) -> f64 {
    let id = Mat::identity(j.dim(), j.dim());
    samples
        .iter()
        .map(|p| {
            let m = j.eval(p);
            (&m * &m + &id).amax()
        })
        .fold(0.0, f64::max)
}

/// `max_p ‖J(p) − J_st‖ + ‖∂J(p)‖` with entrywise max norms.
pub fn structure_gap(j: &StructureField, samples: &[Vec<f64>]) -> Result<f64> {
    let js = j_standard(j.n);
    let mut gap: f64 = 0.0;
    for p in samples {
        let c0 = (j.eval(p) - &js).amax();
        let mut c1: f64 = 0.0;
        for k in 0..j.dim() {
            c1 = c1.max(j.partial(p, k)?.amax());
        }
        gap = gap.max(c0 + c1);
    }
    Ok(gap)
}

/// Change of variables putting `J` in split form along `{z_n = 0}`.
pub fn normalize_split(j: &StructureField) -> Result<StructureField> {
    let n = j.n;
    if n < 2 {
        return Err(Error::InvalidArgument("split normalization needs n >= 2".into()));
    }
    let d = 2 * n;
    let xn = d - 2;
    let samples = hyperplane_samples(j, 200, 3);
    let defect = samples
        .iter()
        .map(|p| {
            let m = j.eval(p);
            let mut worst: f64 = 0.0;
            for r in xn..d {
                for c in 0..xn {
                    worst = worst.max(m[(r, c)].abs());
                }
            }
            worst
        })
        .fold(0.0, f64::max);
    if defect > 1e-8 {
        return Err(Error::NotComplexHyperplane { defect });
    }
    let base = j.clone();
    let phi_and_jac = move |w: &[f64]| -> (Vec<f64>, Mat) {
        let mut foot = w.to_vec();
        foot[xn] = 0.0;
        foot[xn + 1] = 0.0;
        let jm = base.eval(&foot);
        let col: Vec<f64> = (0..d).map(|r| jm[(r, xn)]).collect();
        let yn = w[xn + 1];
        let mut phi = w.to_vec();
        phi[xn + 1] = 0.0;
        for r in 0..d {
            phi[r] += yn * col[r];
        }
        let mut dphi = Mat::zeros(d, d);
        for k in 0..xn {
            dphi[(k, k)] = 1.0;
            if yn != 0.0 {
                let dj = base
                    .partial(&foot, k)
                    .unwrap_or_else(|_| Mat::zeros(d, d));
                for r in 0..d {
                    dphi[(r, k)] += yn * dj[(r, xn)];
                }
            }
        }
        dphi[(xn, xn)] = 1.0;
        for r in 0..d {
            dphi[(r, xn + 1)] = col[r];
        }
        (phi, dphi)
    };
    let inner = j.clone();
    let out = StructureField::new(n, j.domain.scaled(0.9), move |w| {
        let (phi, dphi) = phi_and_jac(w);
        let inv = dphi.clone().try_inverse().expect("normalizing map must be a local diffeomorphism");
        inv * inner.eval(&phi) * dphi
    })
    .with_label(format!("split({})", j.label))
    .with_smoothness(j.smoothness)
    .with_deriv_step(j.deriv_step);
    let js2 = j_standard(1);
    let check = hyperplane_samples(&out, 100, 5)
        .iter()
        .map(|p| {
            let m = out.eval(p);
            let mut worst: f64 = 0.0;
            for r in 0..d {
                for c in 0..d {
                    let upper = r < xn && c >= xn;
                    let lower = r >= xn && c < xn;
                    if upper || lower {
                        worst = worst.max(m[(r, c)].abs());
                    }
                    if r >= xn && c >= xn {
                        worst = worst.max((m[(r, c)] - js2[(r - xn, c - xn)]).abs());
                    }
                }
            }
            worst
        })
        .fold(0.0, f64::max);
    if check > 1e-8 {
        return Err(Error::NotComplexHyperplane { defect: check });
    }
    Ok(out)
}

fn hyperplane_samples(j: &StructureField, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let d = j.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dom = j.domain();
    (0..count)
        .map(|_| {
            let mut p: Vec<f64> = (0..d)
                .map(|k| {
                    let (l, h) = (dom.lo[k].max(-1.0), dom.hi[k].min(1.0));
                    rng.random_range(l..h) * 0.5
                })
                .collect();
            p[d - 2] = 0.0;
            p[d - 1] = 0.0;
            p
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn e(d: usize, k: usize) -> Vec<f64> {
        let mut v = vec![0.0; d];
        v[k] = 1.0;
        v
    }

    #[test]
    fn standard_structure_blocks() {
        let j = make_standard(1).eval(&[0.3, 0.1]);
        assert_eq!(j[(0, 1)], -1.0);
        assert_eq!(j[(1, 0)], 1.0);
        let j2 = make_standard(2).eval(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(&j2 * &j2, -Mat::identity(4, 4));
        let q = q_matrix(&make_standard(3), &[0.1; 6]).unwrap();
        assert_eq!(q.amax(), 0.0);
    }

    #[test]
    fn q_matrix_two_by_two_example() {
        let j = StructureField::new(1, BoxDomain::cube(2, 1.0), |_| {
            Mat::from_row_slice(2, 2, &[0.0, -2.0, 0.5, 0.0])
        });
        let q = q_matrix(&j, &[0.0, 0.0]).unwrap();
        let expect = Mat::from_row_slice(2, 2, &[-1.0 / 3.0, 0.0, 0.0, 1.0 / 3.0]);
        assert!((q - expect).amax() < 1e-14);
    }

    #[test]
    fn q_matrix_singular_and_outside() {
        let j = StructureField::new(1, BoxDomain::cube(2, 1.0), |_| -j_standard(1));
        assert!(matches!(q_matrix(&j, &[0.0, 0.0]), Err(Error::SingularStructure { .. })));
        assert!(matches!(q_matrix(&make_r6(), &[9.0; 6]), Err(Error::DomainExit { .. })));
    }

    #[test]
    fn r6_relations() {
        let j = make_r6();
        assert_eq!(j.eval(&[0.0; 6]), j_standard(3));
        let p = [0.3, -0.7, 0.2, 0.1, -0.4, 0.9];
        let col: Vec<f64> = (0..6).map(|r| j.eval(&p)[(r, 2)]).collect();
        assert_eq!(col, vec![0.0, 0.0, 0.0, 1.0, 0.7, -0.3]);
        let rs = q_matrix(&j, &[0.0; 6]).unwrap();
        assert!(rs.amax() < 1e-15);
    }

    #[test]
    fn r6_closed_form_matches_fd() {
        let j = make_r6();
        let fd = StructureField::new(3, BoxDomain::cube(6, 4.0), {
            let j = j.clone();
            move |p| j.eval(p)
        });
        let p = [0.2, 0.4, -0.1, 0.3, 0.5, -0.6];
        for k in 0..6 {
            let a = j.partial(&p, k).unwrap();
            let b = fd.partial(&p, k).unwrap();
            assert!((a - b).amax() < 1e-9);
        }
    }

    #[test]
    fn dilate_scales_r6_coupling() {
        let j = make_r6();
        let jd = dilate(&j, 0.1).unwrap();
        let p = [0.5, -0.3, 0.0, 0.0, 0.0, 0.0];
        let a = j.eval(&p) - j_standard(3);
        let b = jd.eval(&p) - j_standard(3);
        assert!((a * 0.1 - b).amax() < 1e-15);
        let same = dilate(&j, 1.0).unwrap();
        assert_eq!(same.eval(&p), j.eval(&p));
        assert!(dilate(&j, 0.0).is_err());
        assert!(dilate(&j, 1.5).is_err());
    }

    #[test]
    fn dilate_rejects_offset_box() {
        let j = StructureField::new(1, BoxDomain { lo: vec![1.0, 1.0], hi: vec![2.0, 2.0] }, |_| {
            j_standard(1)
        });
        assert!(matches!(dilate(&j, 0.5), Err(Error::DomainExit { .. })));
    }

    #[test]
    fn r6_nijenhuis_nonzero() {
        let j = make_r6();
        let n = nijenhuis(&j, &[0.0; 6], &e(6, 0), &e(6, 2)).unwrap();
        assert_eq!(n, vec![0.0, 0.0, 0.0, 0.0, 2.0, 0.0]);
        let y = VectorFieldExpr::constant(&e(6, 0));
        let nf = nijenhuis_fields(&j, &[0.0; 6], &y, &r6_l1()).unwrap();
        assert!(nf.iter().zip(&n).all(|(a, b)| (a - b).abs() < 1e-12));
    }

    #[test]
    fn standard_is_integrable() {
        let j = make_standard(2);
        let n = nijenhuis(&j, &[0.1, 0.2, 0.3, 0.4], &[1.0, 2.0, 0.0, -1.0], &[0.0, 1.0, 3.0, 1.0])
            .unwrap();
        assert!(n.iter().all(|v| v.abs() <= 1e-8));
    }

    #[test]
    fn antilinear_presets_are_structures() {
        for j in [make_chirka_perturbed(0.3), make_hypersurface_perturbed(0.3)] {
            let s = sample_ball(4, 1.0, 200, 1);
            assert!(square_defect(&j, &s) < 1e-12, "{}", j.label());
            for p in s.iter().take(20) {
                let q = q_matrix(&j, p).unwrap();
                let back = j_from_q(&q);
                assert!((back - j.eval(p)).amax() < 1e-12);
            }
        }
        let jc = make_chirka_perturbed(0.2);
        assert!((jc.eval(&[0.0; 4]) - j_standard(2)).amax() < 1e-15);
    }

    #[test]
    fn antilinear_closed_form_derivative() {
        for j in [make_chirka_perturbed(0.3), make_hypersurface_perturbed(0.3)] {
            let fd = StructureField::new(2, BoxDomain::cube(4, 4.0), {
                let j = j.clone();
                move |p| j.eval(p)
            });
            let p = [0.3, -0.2, 0.4, 0.1];
            for k in 0..4 {
                let err = (j.partial(&p, k).unwrap() - fd.partial(&p, k).unwrap()).amax();
                assert!(err < 1e-8, "{} k={k} err={err}", j.label());
            }
        }
    }

    #[test]
    fn chirka_perturbed_not_integrable() {
        let j = make_chirka_perturbed(0.5);
        let n = nijenhuis(&j, &[0.1, 0.0, 0.0, 0.0], &e(4, 0), &e(4, 2)).unwrap();
        assert!(n.iter().map(|v| v.abs()).fold(0.0, f64::max) > 1e-3);
    }

    #[test]
    fn split_normalization() {
        let j = make_hypersurface_perturbed(0.2);
        let js = normalize_split(&j).unwrap();
        let m = js.eval(&[0.2, -0.1, 0.0, 0.0]);
        for r in 2..4 {
            for c in 0..2 {
                assert!(m[(r, c)].abs() <= 1e-8);
                assert!(m[(c, r)].abs() <= 1e-8);
            }
        }
        assert!(square_defect(&js, &sample_ball(4, 0.5, 50, 2)) < 1e-10);
        let st = normalize_split(&make_standard(2)).unwrap();
        assert_eq!(st.eval(&[0.1, 0.2, 0.3, 0.4]), j_standard(2));
        assert!(matches!(
            normalize_split(&make_chirka_perturbed(0.3)),
            Err(Error::NotComplexHyperplane { .. })
        ));
    }

    #[test]
    fn gap_behaviour() {
        let s = sample_ball(6, 1.0, 100, 4);
        assert_eq!(structure_gap(&make_standard(3), &s).unwrap(), 0.0);
        let g1 = structure_gap(&dilate(&make_r6(), 0.1).unwrap(), &s).unwrap();
        let g2 = structure_gap(&dilate(&make_r6(), 0.05).unwrap(), &s).unwrap();
        let g0 = structure_gap(&make_r6(), &s).unwrap();
        assert!(g2 < g1 && g1 < g0);
        assert!(g2 < 0.1);
    }

    #[test]
    fn presets_by_name() {
        assert_eq!(preset("standard").unwrap().n(), 2);
        assert_eq!(preset("standard(3)").unwrap().n(), 3);
        assert_eq!(preset("r6").unwrap().n(), 3);
        assert!(preset("chirka-perturbed(0.05)").is_ok());
        assert!(preset("hypersurface-perturbed(0.05)").is_ok());
        assert!(matches!(preset("nope"), Err(Error::Config(_))));
        assert!(matches!(preset("chirka-perturbed"), Err(Error::Config(_))));
    }

    #[test]
    fn custom_json_structure() {
        let src = r#"{"n":1,"entries":[["0","-1"],["1","0"]]}"#;
        let j = from_json(src).unwrap();
        assert_eq!(j.eval(&[0.2, 0.3]), j_standard(1));
        let bad = r#"{"n":1,"entries":[["1","0"],["0","1"]]}"#;
        assert!(matches!(from_json(bad), Err(Error::Config(_))));
    }

    #[test]
    fn rescale_is_affine_zoom() {
        let j = make_r6();
        let c = [0.1, 0.2, 0.0, 0.0, 0.0, 0.0];
        let z = rescale(&j, &c, 0.01);
        let w = [1.0, -1.0, 0.5, 0.0, 0.0, 0.0];
        let p: Vec<f64> = w.iter().zip(&c).map(|(a, b)| b + 0.01 * a).collect();
        assert!((z.eval(&w) - j.eval(&p)).amax() < 1e-15);
        assert!((z.partial(&w, 0).unwrap() - j.partial(&p, 0).unwrap() * 0.01).amax() < 1e-15);
    }
}
