use super::{at_origin, grad_norm, ExperimentConfig, ResultTable};
use crate::disc_solver::{residual, solve_from_holomorphic_with, SolverOptions};
use crate::discgrid::{dzbar, to_complex, vec_norm, DiscGrid, GridMap};
use crate::geometry::{normalize_split, rescale, StructureField};
use crate::kobayashi::{distance_lower_certificate, DivergenceGauge};
use crate::{Error, Result};
use num_complex::Complex64;
use std::time::Instant;

const RESIDUAL_TOL: f64 = 1e-6;
/// Fractions of the largest admissible seed scale tried in turn.
const BACKOFF: [f64; 6] = [0.98, 0.9, 0.75, 0.5, 0.25, 0.1];

fn solve_checked(
    j: &StructureField,
    h: &GridMap,
    opts: &SolverOptions,
    inside: &dyn Fn(&[f64]) -> bool,
) -> Result<GridMap> {
    let (u, rep) = solve_from_holomorphic_with(j, h, None, opts)?;
    if !rep.converged {
        return Err(Error::Divergence { iterations: rep.iterations, ratio: rep.contraction_estimate });
    }
    let res = residual(j, &u)?;
    if res > RESIDUAL_TOL {
        return Err(Error::Hypothesis(format!("disc residual {res:.3e}")));
    }
    if let Some(k) = (0..u.grid().len()).find(|&k| !inside(&u.real_at(k))) {
        return Err(Error::DomainExit { point: u.real_at(k) });
    }
    Ok(u)
}

/// Largest `t` for which every node of `z ↦ t·z·Y` lies inside.
fn seed_scale(grid: &DiscGrid, y: &[Complex64], inside: &dyn Fn(&[f64]) -> bool, t_max: f64) -> f64 {
    let ok = |t: f64| {
        grid.nodes().iter().all(|&z| {
            let p: Vec<f64> = y.iter().flat_map(|c| {
                let w = c * z * t;
                [w.re, w.im]
            }).collect();
            inside(&p)
        })
    };
    let (mut lo, mut hi) = (0.0, t_max);
    if ok(hi) {
        return hi;
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if ok(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

fn directions(dim: usize) -> Vec<Vec<f64>> {
    let unit = |k: usize| {
        let mut v = vec![0.0; dim];
        v[k] = 1.0;
        v
    };
    let mut out = vec![unit(0), unit(1)];
    if dim >= 4 {
        out.push(unit(2));
        let mut mix = vec![0.0; dim];
        mix[0] = std::f64::consts::FRAC_1_SQRT_2;
        mix[2] = std::f64::consts::FRAC_1_SQRT_2;
        out.push(mix);
    }
    out
}

/// Sweep towards the boundary point 0 of the strictly pseudoconvex ball
/// `{Re z1 + |Z|² < 0}` inside `U⁻ = {|Z| < 1, Re z1 < 0}`. Near-extremal
/// discs through `p = (−d, 0, …)` are solved in the rescaled chart
/// `p + √d·w`, which keeps them of unit size.
pub fn run_psconvex(cfg: &ExperimentConfig) -> Result<ResultTable> {
    let start = Instant::now();
    let j = cfg.structure_or("chirka-perturbed(0.05)")?;
    let grid = cfg.grid()?;
    let dim = j.dim();
    let distances = ExperimentConfig::list_or(&cfg.distances, &[1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6]);
    let mut t = ResultTable::new(
        "psconvex",
        cfg,
        &["distance", "ratio_dist", "ratio_grad", "profile", "profile_fitted", "discs"],
    );
    let quarter: Vec<usize> = (0..grid.len()).filter(|&k| grid.node(k).norm() <= 0.25).collect();
    let mut rows = vec![];
    for &d in &distances {
        let mut p = vec![0.0; dim];
        p[0] = -d;
        let s = d.sqrt();
        let jr = rescale(&j, &p, s);
        let pc = p.clone();
        let to_q = move |w: &[f64]| -> Vec<f64> { w.iter().zip(&pc).map(|(x, c)| c + s * x).collect() };
        let inside = |w: &[f64]| {
            let q = to_q(w);
            q[0] + q.iter().map(|x| x * x).sum::<f64>() < 0.0
        };
        let (mut r_dist, mut r_grad, mut count) = (0.0_f64, 0.0_f64, 0usize);
        for y in directions(dim) {
            let yc = to_complex(&y);
            let t_seed = seed_scale(&grid, &yc, &inside, 1.0 / s);
            let mut disc = None;
            let mut last_err = None;
            for f in BACKOFF {
                let h = GridMap::from_fn(&grid, dim / 2, |z| yc.iter().map(|c| c * z * (f * t_seed)).collect());
                match solve_checked(&jr, &h, &cfg.solver, &inside) {
                    Ok(u) => {
                        disc = Some(u);
                        break;
                    }
                    Err(e) => last_err = Some(e),
                }
            }
            let Some(u) = disc else {
                t.metadata.failures.push(format!("d={d:e} Y={y:?}: {}", last_err.map(|e| e.to_string()).unwrap_or_default()));
                continue;
            };
            let o = at_origin(&u);
            let q0 = to_q(&crate::discgrid::to_real(&o.value));
            let bdist = (-q0[0]).min(1.0 - q0.iter().map(|x| x * x).sum::<f64>().sqrt());
            if bdist <= 0.0 {
                t.metadata.failures.push(format!("d={d:e} Y={y:?}: centre on the boundary"));
                continue;
            }
            let spread = quarter
                .iter()
                .map(|&k| {
                    let diff: Vec<Complex64> = u.at(k).iter().zip(&o.value).map(|(a, b)| a - b).collect();
                    s * vec_norm(&diff)
                })
                .fold(0.0, f64::max);
            r_dist = r_dist.max(spread / bdist.sqrt());
            r_grad = r_grad.max(s * o.dx[0].re.hypot(o.dy[0].re) / q0[0].abs());
            count += 1;
        }
        if count > 0 {
            rows.push((d, r_dist, r_grad, count));
        }
    }
    let unit = DivergenceGauge::linear(1.0)?;
    let c_fit = rows.iter().map(|r| r.2).fold(0.0, f64::max).max(1e-12);
    let fitted = DivergenceGauge::linear(c_fit)?;
    for (d, r_dist, r_grad, count) in rows {
        let a = distance_lower_certificate(unit, 1.0, d)?.lower_bound;
        let b = distance_lower_certificate(fitted, 1.0, d)?.lower_bound;
        t.push(vec![d, r_dist, r_grad, a, b, count as f64])?;
    }
    t.summarize("ratio_dist", "distance");
    t.summarize("ratio_grad", "distance");
    t.note("structure", j.label());
    t.note("fitted_gauge", fitted);
    Ok(t.finish(start))
}

/// Discs in the unit polydisc avoiding `{z_n = 0}` with `u_n(0) ≈ δ`, for a
/// structure put in split form along that hyperplane.
pub fn run_hypersurface(cfg: &ExperimentConfig) -> Result<ResultTable> {
    let start = Instant::now();
    let j = normalize_split(&cfg.structure_or("hypersurface-perturbed(0.05)")?)?;
    let grid = cfg.grid()?;
    let n = j.n();
    let deltas = ExperimentConfig::list_or(&cfg.deltas, &[1e-1, 1e-2, 1e-3, 1e-4]);
    let mut t = ResultTable::new(
        "hypersurface",
        cfg,
        &["delta", "un_0", "ratio_dbar", "ratio_schwarz", "profile", "discs"],
    );
    let core = grid.core_mask();
    let inside = |p: &[f64]| {
        let mods: Vec<f64> = p.chunks(2).map(|c| c[0].hypot(c[1])).collect();
        mods.iter().all(|&m| m < 1.0) && mods[n - 1] > 0.0
    };
    let mut rows = vec![];
    for &delta in &deltas {
        let big_l = (0.5 / delta).ln();
        let (mut r43, mut rl, mut un0, mut count) = (0.0_f64, 0.0_f64, 0.0, 0usize);
        for a in [Complex64::new(0.3, 0.0), Complex64::new(0.0, 0.3)] {
            for frac in [0.5, 0.9] {
                let kappa = frac * big_l;
                let h = GridMap::from_fn(&grid, n, |z| {
                    let mut v = vec![Complex64::new(0.0, 0.0); n];
                    v[0] = a * z;
                    v[n - 1] = delta * (kappa * z).exp();
                    v
                });
                let u = match solve_checked(&j, &h, &cfg.solver, &inside) {
                    Ok(u) => u,
                    Err(e) => {
                        t.metadata.failures.push(format!("delta={delta:e} a={a} kappa={kappa:.3}: {e}"));
                        continue;
                    }
                };
                let un = u.component(n - 1);
                let dbar = dzbar(&un);
                for k in 0..grid.len() {
                    if core[k] {
                        r43 = r43.max(dbar.values()[k].norm() / un.values()[k].norm());
                    }
                }
                let o = at_origin(&un);
                let g0 = o.value[0].norm();
                rl = rl.max(grad_norm(o.dx[0], o.dy[0]) / (g0 * (1.0 / g0).ln()));
                un0 = g0;
                count += 1;
            }
        }
        if count > 0 {
            rows.push((delta, un0, r43, rl, count));
        }
    }
    let c_fit = rows.iter().map(|r| r.3).fold(0.0, f64::max).max(1e-12);
    let gauge = DivergenceGauge::loglinear(c_fit)?;
    for (delta, un0, r43, rl, count) in rows {
        let b = distance_lower_certificate(gauge, (-1.0f64).exp(), delta)?.lower_bound;
        t.push(vec![delta, un0, r43, rl, b, count as f64])?;
    }
    t.summarize("ratio_dbar", "delta");
    t.summarize("ratio_schwarz", "delta");
    t.note("structure", j.label());
    t.note("fitted_gauge", gauge);
    Ok(t.finish(start))
}
