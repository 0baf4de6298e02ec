//! Kobayashi-Royden pseudonorm upper bounds from explicit discs, and lower
//! bounds for distances from a divergence gauge.
//!
//! If every disc through a point with `χ∘u(0) = s` satisfies
//! `|∇(χ∘u)(0)| ≤ δ(s)` then any path from `χ = s₁` to `χ = s₀` has length
//! at least `(1/2)∫_{s₀}^{s₁} ds/δ(s)`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::disc_solver::{self, SolverOptions};
use crate::discgrid::{DiscGrid, GridMap, Jet};
use crate::error::{Error, Result};
use crate::geometry::StructureField;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GaugeKind {
    /// `δ(t) = C t`
    Linear,
    /// `δ(t) = C t log(1/t)`
    Loglinear,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DivergenceGauge {
    pub kind: GaugeKind,
    pub c: f64,
}

impl DivergenceGauge {
    pub fn new(kind: GaugeKind, c: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::InvalidArgument(format!("gauge constant {c} must be positive")));
        }
        Ok(Self { kind, c })
    }

    pub fn linear(c: f64) -> Result<Self> {
        Self::new(GaugeKind::Linear, c)
    }

    pub fn loglinear(c: f64) -> Result<Self> {
        Self::new(GaugeKind::Loglinear, c)
    }

    pub fn delta(&self, t: f64) -> f64 {
        match self.kind {
            GaugeKind::Linear => self.c * t,
            GaugeKind::Loglinear => self.c * t * (1.0 / t).ln(),
        }
    }

    /// `(1/2)∫_{near}^{far} ds/δ(s)` in closed form.
    pub fn closed_form(&self, far: f64, near: f64) -> f64 {
        let r = match self.kind {
            GaugeKind::Linear => (far / near).ln(),
            GaugeKind::Loglinear => (1.0 / near).ln().ln() - (1.0 / far).ln().ln(),
        };
        r / (2.0 * self.c)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistanceCertificate {
    pub gauge: DivergenceGauge,
    pub chi_far: f64,
    pub chi_near: f64,
    pub lower_bound: f64,
    /// Independent value from adaptive quadrature.
    pub quadrature: f64,
}

fn simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let err = left + right - whole;
    if depth == 0 || err.abs() <= 15.0 * tol {
        return left + right + err / 15.0;
    }
    simpson(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
        + simpson(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
}

fn adaptive_simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson(&f, a, b, fa, fm, fb, whole, tol, 50)
}

/// Lower bound `(1/2)∫_{chi_near}^{chi_far} ds/δ(s)` for the Kobayashi length
/// of any path joining the two levels.
pub fn distance_lower_certificate(gauge: DivergenceGauge, chi_far: f64, chi_near: f64) -> Result<DistanceCertificate> {
    if !(chi_near > 0.0 && chi_near <= chi_far && chi_far <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "need 0 < chi_near <= chi_far <= 1, got {chi_near}, {chi_far}"
        )));
    }
    if gauge.kind == GaugeKind::Loglinear && chi_far >= 1.0 {
        return Err(Error::InvalidArgument("the loglinear gauge needs chi_far < 1".into()));
    }
    // s = e^{−τ} turns ds/δ(s) into s/δ(s) dτ, which is smooth in τ
    let (a, b) = ((1.0 / chi_far).ln(), (1.0 / chi_near).ln());
    let quad = 0.5 * adaptive_simpson(|tau| {
        let s = (-tau).exp();
        s / gauge.delta(s)
    }, a, b, 1e-13);
    Ok(DistanceCertificate {
        gauge,
        chi_far,
        chi_near,
        lower_bound: gauge.closed_form(chi_far, chi_near),
        quadrature: quad,
    })
}

/// Certificates for a decreasing list of near values.
pub fn divergence_profile(gauge: DivergenceGauge, chi_far: f64, near_list: &[f64]) -> Result<Vec<DistanceCertificate>> {
    if near_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidArgument("near_list must be strictly decreasing".into()));
    }
    if near_list.iter().any(|&v| v >= chi_far) {
        return Err(Error::InvalidArgument("near_list entries must be below chi_far".into()));
    }
    near_list.iter().map(|&near| distance_lower_certificate(gauge, chi_far, near)).collect()
}

/// Upper bound for `‖Y‖_K` realized by an explicit disc.
#[derive(Clone, Debug)]
pub struct NormBound {
    /// `1/t` for the largest accepted `t`, `+∞` if none was accepted.
    pub value: f64,
    pub witness: Option<GridMap>,
    pub scale: f64,
    pub solves: usize,
    /// Every tried `t` with its verdict, in order.
    pub trials: Vec<(f64, bool)>,
}

/// Controls of the disc search.
#[derive(Clone, Debug)]
pub struct RoydenOptions {
    pub t0: f64,
    pub residual_tol: f64,
    pub solver: SolverOptions,
}

impl Default for RoydenOptions {
    fn default() -> Self {
        Self { t0: 1.0 / 64.0, residual_tol: 1e-6, solver: SolverOptions::default() }
    }
}

fn try_scale(
    j: &StructureField,
    grid: &Arc<DiscGrid>,
    inside: &dyn Fn(&[f64]) -> bool,
    p: &[f64],
    y: &[f64],
    t: f64,
    opts: &RoydenOptions,
) -> Option<GridMap> {
    let target = Jet::new(p.to_vec(), vec![y.iter().map(|v| v * t).collect()]).ok()?;
    let (u, rep) = disc_solver::solve_jet_with(j, grid, &target, &opts.solver).ok()?;
    if !rep.converged || rep.residual > opts.residual_tol {
        return None;
    }
    (0..grid.len()).all(|k| inside(&u.real_at(k))).then_some(u)
}

/// Doubling from `t0` until the first rejected scale (or the budget runs
/// out), then bisection between the last accepted and first rejected scale.
/// A rejected `t0` is halved until something is accepted. Each tried scale
/// costs one jet solve.
pub fn royden_upper(
    j: &StructureField,
    grid: &Arc<DiscGrid>,
    inside: &dyn Fn(&[f64]) -> bool,
    p: &[f64],
    y: &[f64],
    budget: usize,
) -> Result<NormBound> {
    royden_upper_with(j, grid, inside, p, y, budget, &RoydenOptions::default())
}

pub fn royden_upper_with(
    j: &StructureField,
    grid: &Arc<DiscGrid>,
    inside: &dyn Fn(&[f64]) -> bool,
    p: &[f64],
    y: &[f64],
    budget: usize,
    opts: &RoydenOptions,
) -> Result<NormBound> {
    if !inside(p) {
        return Err(Error::InvalidArgument(format!("base point {p:?} is not inside")));
    }
    if y.iter().all(|v| *v == 0.0) {
        return Err(Error::InvalidArgument("zero tangent vector".into()));
    }
    let mut trials = Vec::new();
    let mut best: Option<(f64, GridMap)> = None;
    let mut rejected: Option<f64> = None;
    let mut t = opts.t0;
    while trials.len() < budget {
        let ok = try_scale(j, grid, inside, p, y, t, opts);
        trials.push((t, ok.is_some()));
        match ok {
            Some(u) => best = Some((t, u)),
            None => rejected = Some(t),
        }
        t = match (&best, rejected) {
            (Some((b, _)), None) => 2.0 * b,
            (None, Some(r)) => 0.5 * r,
            (Some((b, _)), Some(r)) => 0.5 * (b + r),
            (None, None) => unreachable!("one verdict recorded"),
        };
    }
    Ok(match best {
        Some((scale, u)) => NormBound { value: 1.0 / scale, witness: Some(u), scale, solves: trials.len(), trials },
        None => NormBound { value: f64::INFINITY, witness: None, scale: 0.0, solves: trials.len(), trials },
    })
}

/// Ordered points of a piecewise linear path.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathSample {
    pub points: Vec<Vec<f64>>,
}

impl PathSample {
    pub fn new(points: Vec<Vec<f64>>) -> Result<Self> {
        if points.is_empty() || points.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("path needs finite points".into()));
        }
        Ok(Self { points })
    }

    /// `count + 1` equally spaced points on the segment `[a, b]`.
    pub fn segment(a: &[f64], b: &[f64], count: usize) -> Self {
        let points = (0..=count)
            .map(|i| {
                let s = i as f64 / count as f64;
                a.iter().zip(b).map(|(x, y)| x + s * (y - x)).collect()
            })
            .collect();
        Self { points }
    }
}

/// `Σ royden_upper(midpoint, chord)` over the path segments.
pub fn path_length_upper(
    j: &StructureField,
    grid: &Arc<DiscGrid>,
    inside: &dyn Fn(&[f64]) -> bool,
    path: &PathSample,
    budget: usize,
) -> Result<f64> {
    let mut total = 0.0;
    for w in path.points.windows(2) {
        let chord: Vec<f64> = w[1].iter().zip(&w[0]).map(|(b, a)| b - a).collect();
        if chord.iter().all(|v| *v == 0.0) {
            continue;
        }
        let mid: Vec<f64> = w[0].iter().zip(&w[1]).map(|(a, b)| 0.5 * (a + b)).collect();
        total += royden_upper(j, grid, inside, &mid, &chord, budget)?.value;
    }
    Ok(total)
}
