//! J-holomorphic discs as fixed points of `u = h − T_CG(Q_J(u) ∂u/∂z)`.
//!
//! A fixed point satisfies `∂u/∂z̄ + Q_J(u) ∂u/∂z = ∂h/∂z̄ = 0`, so `u` is
//! J-holomorphic whenever the seed `h` is holomorphic. Jets and two-point
//! data are matched by an outer Newton iteration on the seed parameters.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::cauchy_green::tcg;
use crate::discgrid::{self, to_complex, to_real, DiscGrid, GridMap, Jet};
use crate::error::{Error, Result};
use crate::geometry::StructureField;

use std::sync::Arc;

/// Iteration controls.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    /// Picard stops once the sup-change drops below this.
    pub tol: f64,
    pub max_iterations: usize,
    /// Outer (Newton) stopping threshold on the matched data.
    pub outer_tol: f64,
    pub max_outer: usize,
    /// Forward-difference step of the outer Jacobian.
    pub newton_step: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tol: 1e-8, max_iterations: 50, outer_tol: 1e-9, max_outer: 20, newton_step: 1e-4 }
    }
}

/// Convergence record of a disc construction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub iterations: usize,
    /// Sup-norm of `∂u/∂z̄ + Q_J(u) ∂u/∂z` on the core nodes.
    pub residual: f64,
    pub converged: bool,
    pub contraction_estimate: f64,
    pub outer_iterations: usize,
    /// Remaining mismatch of the prescribed data (jet or points).
    pub target_error: f64,
}

fn check_domain(j: &StructureField, p: &[f64]) -> Result<()> {
    if j.domain().contains(p) {
        Ok(())
    } else {
        Err(Error::DomainExit { point: p.to_vec() })
    }
}

/// `Q_J(u) ∂u/∂z` node by node.
fn beltrami_term(j: &StructureField, u: &GridMap, duz: &GridMap) -> Result<GridMap> {
    let grid = u.grid();
    let mut out = GridMap::zeros(grid, u.n());
    let n = u.n();
    for k in 0..grid.len() {
        let p = u.real_at(k);
        check_domain(j, &p)?;
        let q = j.q_fast(&p)?;
        if q.iter().all(|v| *v == 0.0) {
            continue;
        }
        let d = DVector::from_vec(to_real(duz.at(k)));
        let v = q * d;
        out.values_mut()[k * n..(k + 1) * n].copy_from_slice(&to_complex(v.as_slice()));
    }
    Ok(out)
}

fn check_dims(j: &StructureField, u: &GridMap) -> Result<()> {
    if u.n() != j.n() {
        return Err(Error::InvalidArgument(format!(
            "map has {} components, structure has complex dimension {}",
            u.n(),
            j.n()
        )));
    }
    Ok(())
}

/// The defect `∂u/∂z̄ + Q_J(u) ∂u/∂z` at every node.
pub fn defect(j: &StructureField, u: &GridMap) -> Result<GridMap> {
    check_dims(j, u)?;
    let d = discgrid::derivatives(u);
    let w = beltrami_term(j, u, &d.dz)?;
    Ok(d.dzbar.add(&w))
}

/// Largest real coordinate of the defect over the core nodes (`|z| ≤ 3/4`).
pub fn residual(j: &StructureField, u: &GridMap) -> Result<f64> {
    residual_on(j, u, u.grid().core_mask())
}

/// As `residual`, over an arbitrary node mask.
pub fn residual_on(j: &StructureField, u: &GridMap, mask: &[bool]) -> Result<f64> {
    let d = defect(j, u)?;
    Ok((0..u.grid().len())
        .filter(|&k| mask[k])
        .flat_map(|k| d.at(k).iter().map(|c| c.re.abs().max(c.im.abs())))
        .fold(0.0, f64::max))
}

/// Picard iteration for `u = h − T_CG(Q_J(u) ∂u/∂z)` started at `h`.
pub fn solve_from_holomorphic(j: &StructureField, h: &GridMap) -> Result<(GridMap, SolveReport)> {
    solve_from_holomorphic_with(j, h, None, &SolverOptions::default())
}

/// Picard iteration with an optional warm start.
pub fn solve_from_holomorphic_with(
    j: &StructureField,
    h: &GridMap,
    init: Option<&GridMap>,
    opts: &SolverOptions,
) -> Result<(GridMap, SolveReport)> {
    check_dims(j, h)?;
    let mut u = init.cloned().unwrap_or_else(|| h.clone());
    let mut prev = f64::INFINITY;
    let mut ratio = 0.0;
    let mut growing = 0;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iterations {
        iterations += 1;
        let w = beltrami_term(j, &u, &discgrid::dz(&u))?;
        let next = h.sub(&tcg(&w));
        let change = next.sup_diff(&u);
        if !change.is_finite() {
            return Err(Error::Divergence { iterations, ratio: f64::INFINITY });
        }
        ratio = if prev.is_finite() && prev > 0.0 { change / prev } else { 0.0 };
        growing = if ratio >= 1.0 { growing + 1 } else { 0 };
        if growing >= 5 {
            return Err(Error::Divergence { iterations, ratio });
        }
        u = next;
        prev = change;
        if change < opts.tol {
            converged = true;
            break;
        }
    }
    let residual = residual(j, &u)?;
    let report = SolveReport {
        iterations,
        residual,
        converged,
        contraction_estimate: ratio,
        outer_iterations: 0,
        target_error: 0.0,
    };
    Ok((u, report))
}

/// Samples `h_{q,W}(z) = q + Σ_l z^l w_l / l!`.
pub fn holomorphic_from_jet(grid: &Arc<DiscGrid>, jet: &Jet) -> GridMap {
    let q = to_complex(&jet.p);
    let w: Vec<Vec<Complex64>> = jet.v.iter().map(|v| to_complex(v)).collect();
    GridMap::from_fn(grid, q.len(), |z| {
        let mut out = q.clone();
        let mut zl = Complex64::new(1.0, 0.0);
        let mut fact = 1.0;
        for (l, wl) in w.iter().enumerate() {
            zl *= z;
            fact *= (l + 1) as f64;
            for (o, c) in out.iter_mut().zip(wl) {
                *o += zl * c / fact;
            }
        }
        out
    })
}

fn sup(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).fold(0.0, f64::max)
}

/// Damped chord-Newton on a finite-dimensional parameter, refreshing the
/// forward-difference Jacobian when progress slows.
fn outer_newton(
    x0: Vec<f64>,
    target: &[f64],
    opts: &SolverOptions,
    mut eval: impl FnMut(&[f64], Option<&GridMap>) -> Result<(GridMap, SolveReport, Vec<f64>)>,
) -> Result<(GridMap, SolveReport)> {
    let m = x0.len();
    let residual_of = |y: &[f64]| -> Vec<f64> { y.iter().zip(target).map(|(a, b)| a - b).collect() };
    let mut x = x0;
    let (mut u, mut rep, y0) = eval(&x, None)?;
    let mut f = residual_of(&y0);
    let mut jac: Option<DMatrix<f64>> = None;
    let mut steps = 0;
    while sup(&f) > opts.outer_tol {
        if steps >= opts.max_outer {
            return Err(Error::Stagnation { steps, defect: sup(&f) });
        }
        steps += 1;
        if jac.is_none() {
            let ycur: Vec<f64> = f.iter().zip(target).map(|(a, b)| a + b).collect();
            let mut jm = DMatrix::zeros(m, m);
            for c in 0..m {
                let mut xp = x.clone();
                xp[c] += opts.newton_step;
                let (_, _, yp) = eval(&xp, Some(&u))?;
                for r in 0..m {
                    jm[(r, c)] = (yp[r] - ycur[r]) / opts.newton_step;
                }
            }
            jac = Some(jm);
        }
        let lu = jac.as_ref().expect("set above").clone().lu();
        let dx = lu
            .solve(&DVector::from_column_slice(&f))
            .ok_or(Error::Stagnation { steps, defect: sup(&f) })?;
        let before = sup(&f);
        let mut lambda = 1.0;
        let mut accepted = None;
        for _ in 0..6 {
            let xt: Vec<f64> = x.iter().zip(dx.iter()).map(|(a, d)| a - lambda * d).collect();
            match eval(&xt, Some(&u)) {
                Ok((ut, rt, yt)) => {
                    let ft = residual_of(&yt);
                    if sup(&ft) < before {
                        accepted = Some((xt, ut, rt, ft));
                        break;
                    }
                }
                Err(e @ (Error::DomainExit { .. } | Error::Divergence { .. })) if lambda < 1.0 => {
                    return Err(e);
                }
                Err(Error::DomainExit { .. } | Error::Divergence { .. }) => {}
                Err(e) => return Err(e),
            }
            lambda *= 0.5;
        }
        match accepted {
            Some((xt, ut, rt, ft)) => {
                let gain = sup(&ft) / before;
                x = xt;
                u = ut;
                rep = rt;
                f = ft;
                if gain > 0.25 {
                    jac = None;
                }
            }
            None if jac.is_some() && steps > 1 => jac = None,
            None => return Err(Error::Stagnation { steps, defect: before }),
        }
    }
    rep.outer_iterations = steps;
    rep.target_error = sup(&f);
    Ok((u, rep))
}

/// Disc with prescribed k-jet at 0: Newton on the seed jet `(q, W)` of
/// `h_{q,W}`, starting from `(q, W) = (p, V)`.
pub fn solve_jet(j: &StructureField, grid: &Arc<DiscGrid>, target: &Jet) -> Result<(GridMap, SolveReport)> {
    solve_jet_with(j, grid, target, &SolverOptions::default())
}

pub fn solve_jet_with(
    j: &StructureField,
    grid: &Arc<DiscGrid>,
    target: &Jet,
    opts: &SolverOptions,
) -> Result<(GridMap, SolveReport)> {
    if target.dim() != j.dim() {
        return Err(Error::InvalidArgument("jet dimension does not match the structure".into()));
    }
    let (k, dim) = (target.k, target.dim());
    outer_newton(target.flat(), &target.flat(), opts, |x, warm| {
        let seed = holomorphic_from_jet(grid, &Jet::from_flat(k, dim, x));
        let (u, rep) = solve_from_holomorphic_with(j, &seed, warm, opts)?;
        if !rep.converged {
            return Err(Error::Divergence { iterations: rep.iterations, ratio: rep.contraction_estimate });
        }
        let jet = discgrid::jet_at_zero(&u, k)?;
        Ok((u, rep, jet.flat()))
    })
}

fn two_point_seed(grid: &Arc<DiscGrid>, p: &[f64], q: &[f64]) -> GridMap {
    let (pc, qc) = (to_complex(p), to_complex(q));
    GridMap::from_fn(grid, pc.len(), |z| {
        pc.iter().zip(&qc).map(|(a, b)| a + z * 2.0 * (b - a)).collect()
    })
}

/// `(u(0), u(1/2))` as one real vector; `u(0)` from the centre stencil,
/// `u(1/2)` by bilinear interpolation.
pub fn two_point_values(u: &GridMap) -> Result<Vec<f64>> {
    let zero = Complex64::new(0.0, 0.0);
    let mut out = to_real(&discgrid::local_cubic(u, zero).expect("centre block").value);
    out.extend(to_real(&discgrid::interp(u, Complex64::new(0.5, 0.0))?));
    Ok(out)
}

/// Disc through `p` at 0 and `q` at 1/2, seeded by `z ↦ p′ + 2z(q′ − p′)`.
pub fn solve_two_point(
    j: &StructureField,
    grid: &Arc<DiscGrid>,
    p: &[f64],
    q: &[f64],
) -> Result<(GridMap, SolveReport)> {
    solve_two_point_with(j, grid, p, q, &SolverOptions::default())
}

pub fn solve_two_point_with(
    j: &StructureField,
    grid: &Arc<DiscGrid>,
    p: &[f64],
    q: &[f64],
    opts: &SolverOptions,
) -> Result<(GridMap, SolveReport)> {
    if p.len() != j.dim() || q.len() != j.dim() {
        return Err(Error::InvalidArgument("point dimension does not match the structure".into()));
    }
    let dim = p.len();
    let mut target = p.to_vec();
    target.extend_from_slice(q);
    outer_newton(target.clone(), &target, opts, |x, warm| {
        let seed = two_point_seed(grid, &x[..dim], &x[dim..]);
        let (u, rep) = solve_from_holomorphic_with(j, &seed, warm, opts)?;
        if !rep.converged {
            return Err(Error::Divergence { iterations: rep.iterations, ratio: rep.contraction_estimate });
        }
        let y = two_point_values(&u)?;
        Ok((u, rep, y))
    })
}

/// Applies a per-node complex `n×n` matrix field (row-major, `n²` components).
fn apply_matrix_field(b: &GridMap, f: &GridMap) -> GridMap {
    let n = f.n();
    let mut out = GridMap::zeros(f.grid(), n);
    for k in 0..f.grid().len() {
        let m = b.at(k);
        let v = f.at(k);
        for r in 0..n {
            out.values_mut()[k * n + r] = (0..n).map(|c| m[r * n + c] * v[c]).sum();
        }
    }
    out
}

/// Equation defect `∂f/∂z̄ + B₁f + B₂f̄ − g` on the core nodes.
pub fn linear_cr_residual(b1: &GridMap, b2: &GridMap, g: &GridMap, f: &GridMap) -> f64 {
    let d = discgrid::dzbar(f);
    let lhs = d.add(&apply_matrix_field(b1, f)).add(&apply_matrix_field(b2, &f.conj()));
    let core = f.grid().core_mask();
    (0..f.grid().len())
        .filter(|&k| core[k])
        .map(|k| discgrid::vec_norm(&lhs.sub(g).at(k)[..]))
        .fold(0.0, f64::max)
}

/// Solution of `∂f/∂z̄ + B₁f + B₂f̄ = g` with `f(0) = 0` and `∇f(0) = 0`.
///
/// Iterates `f ← T_CG(g − B₁f − B₂f̄) − (az + b)`, where `b` and `a` are the
/// value and `∂/∂z` at 0 of the transform. `B₁`, `B₂` are given row-major
/// with `n²` components per node.
pub fn solve_linear_cr(b1: &GridMap, b2: &GridMap, g: &GridMap) -> Result<(GridMap, SolveReport)> {
    solve_linear_cr_with(b1, b2, g, &SolverOptions { tol: 1e-11, ..SolverOptions::default() })
}

pub fn solve_linear_cr_with(
    b1: &GridMap,
    b2: &GridMap,
    g: &GridMap,
    opts: &SolverOptions,
) -> Result<(GridMap, SolveReport)> {
    let n = g.n();
    if b1.n() != n * n || b2.n() != n * n {
        return Err(Error::InvalidArgument("B1, B2 must have n² components".into()));
    }
    let zero = Complex64::new(0.0, 0.0);
    let g0 = discgrid::local_cubic(g, zero).expect("centre block").value;
    let scale = 1.0f64.max(g.sup_norm());
    if discgrid::vec_norm(&g0) > 1e-8 * scale {
        return Err(Error::Hypothesis(format!("g(0) = {:?} must vanish", g0)));
    }
    let grid = g.grid();
    let mut f = GridMap::zeros(grid, n);
    let mut prev = f64::INFINITY;
    let mut ratio = 0.0;
    let mut growing = 0;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iterations {
        iterations += 1;
        let rhs = g.sub(&apply_matrix_field(b1, &f)).sub(&apply_matrix_field(b2, &f.conj()));
        let t = tcg(&rhs);
        let lc = discgrid::local_cubic(&t, zero).expect("centre block");
        let a: Vec<Complex64> = lc
            .dx
            .iter()
            .zip(&lc.dy)
            .map(|(dx, dy)| (dx - Complex64::new(0.0, 1.0) * dy) * 0.5)
            .collect();
        let mut next = t;
        for k in 0..grid.len() {
            let z = grid.node(k);
            for c in 0..n {
                next.values_mut()[k * n + c] -= a[c] * z + lc.value[c];
            }
        }
        let change = next.sup_diff(&f);
        if !change.is_finite() {
            return Err(Error::Divergence { iterations, ratio: f64::INFINITY });
        }
        ratio = if prev.is_finite() && prev > 0.0 { change / prev } else { 0.0 };
        growing = if ratio >= 1.0 { growing + 1 } else { 0 };
        if growing >= 5 {
            return Err(Error::Divergence { iterations, ratio });
        }
        f = next;
        prev = change;
        if change < opts.tol {
            converged = true;
            break;
        }
    }
    let residual = linear_cr_residual(b1, b2, g, &f);
    Ok((
        f,
        SolveReport {
            iterations,
            residual,
            converged,
            contraction_estimate: ratio,
            outer_iterations: 0,
            target_error: 0.0,
        },
    ))
}

/// Solves each member of a family of holomorphic seeds, warm-started from
/// the previous member, and insists that every disc stays within `eta` of
/// its seed.
pub fn continue_family(
    j: &StructureField,
    phis: &[GridMap],
    eta: f64,
) -> Result<Vec<(GridMap, SolveReport)>> {
    continue_family_with(j, phis, eta, &SolverOptions::default())
}

pub fn continue_family_with(
    j: &StructureField,
    phis: &[GridMap],
    eta: f64,
    opts: &SolverOptions,
) -> Result<Vec<(GridMap, SolveReport)>> {
    let mut out: Vec<(GridMap, SolveReport)> = Vec::with_capacity(phis.len());
    for (i, phi) in phis.iter().enumerate() {
        // shift the previous disc by the change of seed
        let warm = out.last().map(|(psi, _)| psi.add(&phi.sub(&phis[i - 1])));
        let (psi, rep) = solve_from_holomorphic_with(j, phi, warm.as_ref(), opts)?;
        if !rep.converged {
            return Err(Error::Divergence { iterations: rep.iterations, ratio: rep.contraction_estimate });
        }
        let dev = psi.sup_diff(phi);
        if dev > eta {
            return Err(Error::Hypothesis(format!("family member {i} deviates by {dev:.3e} > {eta}")));
        }
        out.push((psi, rep));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discgrid::make_grid;
    use crate::geometry::{dilate, make_r6, make_standard};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn standard_structure_returns_seed() {
        let g = make_grid(64).unwrap();
        let j = make_standard(2);
        let h = GridMap::from_fn(&g, 2, |z| vec![z, z * z * 0.5]);
        let (u, rep) = solve_from_holomorphic(&j, &h).unwrap();
        assert_eq!(rep.iterations, 1);
        assert!(rep.converged);
        assert_eq!(u.sup_diff(&h), 0.0);
        assert!(residual(&j, &h).unwrap() < 1e-10);
        let anti = GridMap::from_fn(&g, 2, |z| vec![z.conj(), c(0.0, 0.0)]);
        assert!((residual(&j, &anti).unwrap() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn dilated_r6_disc() {
        let g = make_grid(64).unwrap();
        let j = dilate(&make_r6(), 0.05).unwrap();
        // (z, 0, 0) is already J-holomorphic for this structure
        let flat = GridMap::from_fn(&g, 3, |z| vec![z, c(0.0, 0.0), c(0.0, 0.0)]);
        let (u, rep) = solve_from_holomorphic(&j, &flat).unwrap();
        assert!(rep.converged && rep.residual < 1e-6, "{rep:?}");
        assert!(u.sup_diff(&flat) < 1e-12);
        let h = GridMap::from_fn(&g, 3, |z| vec![z, z * z * 0.5, c(0.0, 0.0)]);
        let (u, rep) = solve_from_holomorphic(&j, &h).unwrap();
        assert!(rep.converged && rep.iterations <= 50, "{rep:?}");
        assert!(rep.residual < 1e-6, "{rep:?}");
        assert!(u.sup_diff(&h) > 1e-6);
    }

    #[test]
    fn jet_and_two_point_standard() {
        let g = make_grid(32).unwrap();
        let j = make_standard(1);
        let target = Jet::new(vec![0.1, 0.0], vec![vec![0.3, 0.1], vec![0.0, 0.2]]).unwrap();
        let (u, rep) = solve_jet(&j, &g, &target).unwrap();
        assert_eq!(rep.outer_iterations, 0);
        let jet = discgrid::jet_at_zero(&u, 2).unwrap();
        assert!(jet.distance(&target) < 1e-10);
        let (u, _) = solve_two_point(&j, &g, &[0.1, 0.0], &[0.2, 0.1]).unwrap();
        let y = two_point_values(&u).unwrap();
        assert!((y[2] - 0.2).abs() < 1e-12 && (y[3] - 0.1).abs() < 1e-12);
        let (u, _) = solve_two_point(&j, &g, &[0.1, 0.3], &[0.1, 0.3]).unwrap();
        assert!(u.values().iter().all(|v| (v - c(0.1, 0.3)).norm() < 1e-14));
    }

    #[test]
    fn linear_cr_model_case() {
        let g = make_grid(64).unwrap();
        let zero = GridMap::zeros(&g, 1);
        let (f, _) = solve_linear_cr(&zero, &zero, &zero).unwrap();
        assert_eq!(f.sup_norm(), 0.0);
        let rhs = GridMap::scalar(&g, |z| z.conj());
        let (f, rep) = solve_linear_cr(&zero, &zero, &rhs).unwrap();
        assert!(rep.residual < 1e-6, "{rep:?}");
        let lc = discgrid::local_cubic(&f, c(0.0, 0.0)).unwrap();
        assert!(lc.value[0].norm() < 1e-12 && lc.dx[0].norm() < 1e-9 && lc.dy[0].norm() < 1e-9);
        let bad = GridMap::scalar(&g, |_| c(1.0, 0.0));
        assert!(matches!(solve_linear_cr(&zero, &zero, &bad), Err(Error::Hypothesis(_))));
    }
}
