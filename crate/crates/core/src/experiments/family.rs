use super::{at_origin, ExperimentConfig, ResultTable};
use crate::disc_solver::{continue_family_with, residual, solve_jet_with};
use crate::discgrid::{jet_at_zero, local_cubic, GridMap, Jet};
use crate::psh_levi::{ddc_levi, is_complex_tangent, ScalarField};
use crate::{Error, Result};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use std::time::Instant;

const ETA: f64 = 0.05;
/// Reach of the search for points of the disc on `M`; the family stays off
/// `M` for `|ζ| ≥ 1/2`.
const CURVE_REACH: f64 = 0.75;

/// `φ_t` with the second slot rotated by `i`, so that for `t > 0` the disc
/// misses `M = {y1 = y2 = 0}`: on `Im ζ = 0` one has `y2 = t + ζ²`.
fn phi_t(grid: &std::sync::Arc<crate::discgrid::DiscGrid>, n: usize, t: f64) -> GridMap {
    let i = Complex64::new(0.0, 1.0);
    GridMap::from_fn(grid, n, |z| {
        let mut v = vec![Complex64::new(0.0, 0.0); n];
        v[0] = z;
        v[1] = if t >= 0.0 { i * (t + z * z) } else { i * (t / 8.0) * z + i * z * z };
        v
    })
}

/// Point `y(x)` on the curve `{Im ψ1 = 0}` above `x`, with `Im ψ2` there.
fn on_curve(psi: &GridMap, x: f64) -> Option<(f64, f64)> {
    let mut y = 0.0;
    for _ in 0..30 {
        let c = local_cubic(psi, Complex64::new(x, y))?;
        let (f, df) = (c.value[0].im, c.dy[0].im);
        if f.abs() < 1e-14 {
            return Some((y, c.value[1].im));
        }
        if df.abs() < 1e-8 {
            return None;
        }
        y = (y - f / df).clamp(-0.5, 0.5);
    }
    let c = local_cubic(psi, Complex64::new(x, y))?;
    (c.value[0].im.abs() < 1e-10).then_some((y, c.value[1].im))
}

/// Signed separation `min y2` along `{y1 = 0}` and the point where it occurs.
fn separation(psi: &GridMap) -> Result<(f64, Complex64)> {
    let f = |x: f64| on_curve(psi, x).map(|(_, y2)| y2).unwrap_or(f64::INFINITY);
    let samples = 600;
    let xs: Vec<f64> = (0..=samples).map(|k| -CURVE_REACH + 2.0 * CURVE_REACH * k as f64 / samples as f64).collect();
    let vals: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
    let (imin, _) = vals
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("nonempty sample");
    if !vals[imin].is_finite() {
        return Err(Error::Hypothesis("the curve Im ψ1 = 0 was not found".into()));
    }
    // golden-section refinement on the bracketing cells
    let (mut a, mut b) = (xs[imin.saturating_sub(1)], xs[(imin + 1).min(samples)]);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let (mut c, mut d) = (b - g * (b - a), a + g * (b - a));
    for _ in 0..80 {
        if f(c) < f(d) {
            b = d;
        } else {
            a = c;
        }
        c = b - g * (b - a);
        d = a + g * (b - a);
    }
    let xm = 0.5 * (a + b);
    let (best_x, best) = if f(xm) < vals[imin] { (xm, f(xm)) } else { (xs[imin], vals[imin]) };
    let (y, _) = on_curve(psi, best_x).expect("point found above");
    Ok((best, Complex64::new(best_x, y)))
}

fn rim_gap(psi: &GridMap) -> f64 {
    (0..256)
        .filter_map(|k| {
            let z = Complex64::from_polar(0.75, std::f64::consts::TAU * k as f64 / 256.0);
            local_cubic(psi, z).map(|c| c.value[0].im.hypot(c.value[1].im))
        })
        .fold(f64::INFINITY, f64::min)
}

/// Poincaré distance in the unit disc, normalized so that the
/// Kobayashi-Royden norm at 0 is the Euclidean one.
fn poincare(a: Complex64, b: Complex64) -> f64 {
    ((a - b).norm() / (Complex64::new(1.0, 0.0) - a.conj() * b).norm()).atanh()
}

/// Continues the family `φ_t` to J-discs `ψ_t`, locates the parameter `δ0`
/// where `ψ_t` first touches `M = {y1 = y2 = 0}`, and reports the bounded
/// Poincaré length between `ψ_t(3/4)` and the near-touching point.
pub fn run_family_2b(cfg: &ExperimentConfig) -> Result<ResultTable> {
    let start = Instant::now();
    let j = cfg.structure_or("chirka-perturbed(0.03)")?;
    if j.n() < 2 {
        return Err(Error::Config("the 2.B family needs n >= 2".into()));
    }
    let grid = cfg.grid()?;
    let mut ts = if cfg.t_values.is_empty() {
        (0..=20).map(|k| -0.1 + 0.01 * k as f64).collect()
    } else {
        cfg.t_values.clone()
    };
    ts.sort_by(f64::total_cmp);
    ts.dedup();
    let phis: Vec<GridMap> = ts.iter().map(|&t| phi_t(&grid, j.n(), t)).collect();
    let fam = continue_family_with(&j, &phis, ETA, &cfg.solver)?;
    let mut t = ResultTable::new(
        "family-2b",
        cfg,
        &["t", "separation", "rim_gap", "deviation", "residual", "zeta0_re", "zeta0_im", "witness_length"],
    );
    let mut seps = vec![];
    let mut zetas = vec![];
    for ((&tv, phi), (psi, _)) in ts.iter().zip(&phis).zip(&fam) {
        let res = residual(&j, psi)?;
        if res > 1e-6 {
            return Err(Error::Hypothesis(format!("ψ_t at t={tv} has residual {res:.3e}")));
        }
        let (sep, zeta0) = separation(psi)?;
        let wl = poincare(Complex64::new(0.75, 0.0), zeta0);
        t.push(vec![tv, sep, rim_gap(psi), psi.sup_diff(phi), res, zeta0.re, zeta0.im, wl])?;
        seps.push(sep);
        zetas.push(zeta0);
    }
    // δ0: the last sign change of the separation
    let delta0 = (0..ts.len().saturating_sub(1))
        .rev()
        .find(|&i| seps[i] <= 0.0 && seps[i + 1] > 0.0)
        .map(|i| ts[i] + (ts[i + 1] - ts[i]) * (-seps[i]) / (seps[i + 1] - seps[i]));
    match delta0 {
        Some(d0) => {
            t.metadata.summary.insert("delta0".into(), d0);
            if let Some(k) = ts.iter().position(|&tv| tv > d0) {
                let z0 = zetas[k];
                let c = local_cubic(&fam[k].0, z0).expect("point on the curve is inside");
                t.note("witness_t", ts[k]);
                t.note("witness_zeta", [z0.re, z0.im]);
                t.note("witness_point", crate::discgrid::to_real(&c.value));
            }
        }
        None => t.metadata.failures.push("no touching parameter inside the t range".into()),
    }
    let rim = t.column("rim_gap").unwrap_or_default().into_iter().fold(f64::INFINITY, f64::min);
    let dev = t.column("deviation").unwrap_or_default().into_iter().fold(0.0, f64::max);
    t.metadata.summary.insert("rim_gap.min".into(), rim);
    t.metadata.summary.insert("deviation.max".into(), dev);
    t.metadata.summary.insert("separation.at_tmax".into(), *seps.last().unwrap_or(&f64::NAN));
    t.note("structure", j.label());
    t.note("eta", ETA);
    Ok(t.finish(start))
}

/// Least-squares fit of `v` to `Re(a z²) + b|z|²` on `|z| ≤ 1/4`.
/// Returns `(a, b, rms residual, rms data)`.
fn fit_quadratic(samples: &[(Complex64, f64)]) -> Result<(Complex64, f64, f64, f64)> {
    let m = samples.len();
    let a = DMatrix::from_fn(m, 3, |r, c| {
        let z = samples[r].0;
        match c {
            0 => (z * z).re,
            1 => (z * z).im,
            _ => z.norm_sqr(),
        }
    });
    let rhs = DVector::from_iterator(m, samples.iter().map(|s| s.1));
    let coef = a
        .clone()
        .svd(true, true)
        .solve(&rhs, 1e-14)
        .map_err(|e| Error::InvalidArgument(format!("quadratic fit failed: {e}")))?;
    let res = (&a * &coef - &rhs).norm() / (m as f64).sqrt();
    let scale = rhs.norm() / (m as f64).sqrt();
    // Re(a z²) = Re a·Re z² − Im a·Im z²
    Ok((Complex64::new(coef[0], -coef[1]), coef[2], res, scale))
}

fn rho_on_quarter(rho: &ScalarField, u: &GridMap) -> Vec<(Complex64, f64)> {
    let g = u.grid();
    (0..g.len())
        .filter(|&k| g.node(k).norm() <= 0.25)
        .map(|k| (g.node(k), rho.eval(&u.real_at(k))))
        .collect()
}

/// Corrects the tangent disc with a 2-jet so that `ρ∘u0` loses its
/// `Re(az²)` term and keeps `b|z|²` with `b > 0`.
pub fn run_jet2_family(cfg: &ExperimentConfig) -> Result<ResultTable> {
    let start = Instant::now();
    let j = cfg.structure_or("standard(2)")?;
    let grid = cfg.grid()?;
    let dim = j.dim();
    if dim < 4 {
        return Err(Error::Config("the 2-jet family needs n >= 2".into()));
    }
    let src = cfg.rho.clone().unwrap_or_else(|| "x2 + x1^2 - y1^2 + x1^2 + y1^2".into());
    let rho = ScalarField::parse(&src, dim)?;
    let origin = vec![0.0; dim];
    let mut y = vec![0.0; dim];
    y[0] = 1.0;
    if !is_complex_tangent(&j, &rho, &origin, &y)? {
        return Err(Error::Hypothesis("e1 is not a complex tangent vector of {ρ = 0} at 0".into()));
    }
    let levi = ddc_levi(&j, &rho, &origin, &y)?;
    if levi <= 0.0 {
        return Err(Error::Hypothesis(format!("Levi form {levi:.3e} is not positive at e1")));
    }
    let (psi, _) = solve_jet_with(&j, &grid, &Jet::new(origin.clone(), vec![y.clone()])?, &cfg.solver)?;
    let (a, b0, _, _) = fit_quadratic(&rho_on_quarter(&rho, &psi))?;
    let psi_jet = jet_at_zero(&psi, 2)?;
    let mut v2 = psi_jet.v[1].clone();
    v2[2] -= 2.0 * a.re;
    v2[3] -= 2.0 * a.im;
    let target = Jet::new(origin, vec![y, v2])?;
    let (u0, rep) = solve_jet_with(&j, &grid, &target, &cfg.solver)?;
    let res = residual(&j, &u0)?;
    if res > 1e-6 {
        return Err(Error::Hypothesis(format!("corrected disc residual {res:.3e}")));
    }
    let (alpha, beta, fit_res, scale) = fit_quadratic(&rho_on_quarter(&rho, &u0))?;
    if fit_res > 0.25 * scale {
        return Err(Error::Hypothesis(format!("fit residual {fit_res:.3e} against data scale {scale:.3e}")));
    }
    let centre = at_origin(&u0).value[0].norm();
    let mut t = ResultTable::new(
        "jet2",
        cfg,
        &["a_re", "a_im", "b_tangent", "alpha_abs", "beta", "levi", "fit_residual", "jet_error", "residual"],
    );
    t.push(vec![a.re, a.im, b0, alpha.norm(), beta, levi, fit_res, rep.target_error, res])?;
    t.note("rho", src);
    t.note("structure", j.label());
    t.note("centre_modulus", centre);
    Ok(t.finish(start))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discgrid::make_grid;

    #[test]
    fn standard_family_separation() {
        let g = make_grid(64).unwrap();
        let p = phi_t(&g, 2, 0.05);
        let (s, z) = separation(&p).unwrap();
        assert!((s - 0.05).abs() < 1e-9 && z.norm() < 1e-6, "{s} {z}");
        let (s, _) = separation(&phi_t(&g, 2, -0.08)).unwrap();
        assert!((s + 0.08f64.powi(2) / 256.0).abs() < 1e-9, "{s}");
        assert!(rim_gap(&p) > 0.2);
        assert!((poincare(Complex64::new(0.0, 0.0), Complex64::new(0.5, 0.0)) - 0.5f64.atanh()).abs() < 1e-15);
    }

    #[test]
    fn fit_recovers_coefficients() {
        let a = Complex64::new(0.3, -0.7);
        let pts: Vec<(Complex64, f64)> = (0..50)
            .map(|k| {
                let z = Complex64::from_polar(0.2 * (k % 7) as f64 / 7.0, k as f64);
                (z, (a * z * z).re + 1.5 * z.norm_sqr())
            })
            .collect();
        let (fa, fb, res, _) = fit_quadratic(&pts).unwrap();
        assert!((fa - a).norm() < 1e-12 && (fb - 1.5).abs() < 1e-12 && res < 1e-12);
    }
}
