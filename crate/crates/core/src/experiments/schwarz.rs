use super::{at_origin, grad_norm, ExperimentConfig, ResultTable};
use crate::cauchy_green::{cz_integral, tcg};
use crate::discgrid::{dzbar, interp, norm_c1phi, GridMap};
use crate::{Error, Result};
use num_complex::Complex64;
use serde::Serialize;
use std::f64::consts::PI;
use std::time::Instant;

#[derive(Clone, Debug, Serialize)]
pub struct Schwarz2Report {
    /// `max |∂h/∂z̄|` over core nodes for `h = g·e^w`.
    pub holomorphy_defect: f64,
    /// The same, divided by `max |h|` on the core.
    pub relative_defect: f64,
    /// `|∇g(0)| / (|g(0)| log(1/|g(0)|))`.
    pub ratio: f64,
    pub c1phi: f64,
    /// Observed `max |∂g/∂z̄| / |g|` on interior nodes.
    pub dbar_ratio: f64,
}

/// Divides out the non-holomorphic part of a nonvanishing `g` into
/// `D_{1/2} − {0}` and evaluates the logarithmic gradient bound at 0.
pub fn schwarz2_check(g: &GridMap, b: f64) -> Result<Schwarz2Report> {
    if g.n() != 1 {
        return Err(Error::InvalidArgument("schwarz2_check needs a scalar map".into()));
    }
    let grid = g.grid();
    for (k, v) in g.values().iter().enumerate() {
        if v.norm() == 0.0 {
            return Err(Error::Hypothesis(format!("g vanishes at {}", grid.node(k))));
        }
        if v.norm() > 0.5 * (1.0 + 1e-12) {
            return Err(Error::Hypothesis(format!("|g| = {} > 1/2 at {}", v.norm(), grid.node(k))));
        }
    }
    // zeros between nodes show up as winding of g around |z| = 3/4
    let ring: Result<Vec<Complex64>> = (0..=256)
        .map(|k| Ok(interp(g, Complex64::from_polar(0.75, k as f64 * 2.0 * PI / 256.0))?[0]))
        .collect();
    let turns: f64 = ring?.windows(2).map(|w| (w[1] / w[0]).arg()).sum::<f64>() / (2.0 * PI);
    if turns.abs() > 0.5 {
        return Err(Error::Hypothesis(format!("g winds {turns:.0} times around |z| = 3/4, so it vanishes inside")));
    }
    let gb = dzbar(g);
    let interior = grid.interior_mask();
    let mut dbar_ratio: f64 = 0.0;
    for k in 0..grid.len() {
        if interior[k] {
            dbar_ratio = dbar_ratio.max(gb.values()[k].norm() / g.values()[k].norm());
        }
    }
    // FD slack: ∂g/∂z̄ is only known to the stencil accuracy
    if dbar_ratio > b * (1.0 + 1e-3) + 1e-9 {
        return Err(Error::Hypothesis(format!("|∂g/∂z̄| / |g| reaches {dbar_ratio:.4} > B = {b}")));
    }
    let w = tcg(&gb.zip_map(g, |a, v| -a / v));
    let h = g.zip_map(&w, |v, e| v * e.exp());
    let hb = dzbar(&h);
    let core = grid.core_mask();
    let (mut defect, mut hmax): (f64, f64) = (0.0, 0.0);
    for k in 0..grid.len() {
        if core[k] {
            defect = defect.max(hb.values()[k].norm());
            hmax = hmax.max(h.values()[k].norm());
        }
    }
    let o = at_origin(g);
    let g0 = o.value[0].norm();
    Ok(Schwarz2Report {
        holomorphy_defect: defect,
        relative_defect: defect / hmax,
        ratio: grad_norm(o.dx[0], o.dy[0]) / (g0 * (1.0 / g0).ln()),
        c1phi: norm_c1phi(g),
        dbar_ratio,
    })
}

/// `(a, b)` pairs of the family `c·exp(az + b z̄)`, all with `|a|, |b| ≤ 1`.
const SCHWARZ_FAMILY: [((f64, f64), (f64, f64)); 5] = [
    ((1.0, 0.0), (0.0, 0.0)),
    ((0.0, 0.0), (1.0, 0.0)),
    ((0.6, 0.3), (0.0, 0.5)),
    ((-0.4, 0.0), (0.8, -0.2)),
    ((0.0, 1.0), (0.0, -1.0)),
];

pub fn run_schwarz2(cfg: &ExperimentConfig) -> Result<ResultTable> {
    let start = Instant::now();
    let grid = cfg.grid()?;
    let cs = ExperimentConfig::list_or(&cfg.deltas, &[1e-2, 1e-3, 1e-4, 1e-5, 1e-6]);
    let mut t = ResultTable::new(
        "schwarz2",
        cfg,
        &["c", "a_re", "a_im", "b_re", "b_im", "relative_defect", "ratio", "ratio_exact", "c1phi"],
    );
    let (mut holo_max, mut all_max): (f64, f64) = (0.0, 0.0);
    for &c in &cs {
        for ((ar, ai), (br, bi)) in SCHWARZ_FAMILY {
            let (a, b) = (Complex64::new(ar, ai), Complex64::new(br, bi));
            let g = GridMap::scalar(&grid, |z| c * (a * z + b * z.conj()).exp());
            let rep = schwarz2_check(&g, b.norm())?;
            let exact = (a.norm() + b.norm()) / (1.0 / c).ln();
            t.push(vec![c, ar, ai, br, bi, rep.relative_defect, rep.ratio, exact, rep.c1phi])?;
            if b.norm() == 0.0 {
                holo_max = holo_max.max(rep.ratio);
            }
            all_max = all_max.max(rep.ratio);
        }
    }
    t.summarize("ratio", "c");
    t.summarize("relative_defect", "c");
    t.metadata.summary.insert("holomorphic_ratio.max".into(), holo_max);
    t.metadata.summary.insert("fitted_constant".into(), all_max);
    Ok(t.finish(start))
}

/// CZ integrals for `g = δ + |z|²/4`, `f = z²/4`, whose exact value is
/// `π log(1 + 1/(4δ))`, plus the symmetric case `f = g`.
pub fn run_cz(cfg: &ExperimentConfig) -> Result<ResultTable> {
    let start = Instant::now();
    let grid = cfg.grid()?;
    let deltas = ExperimentConfig::list_or(&cfg.deltas, &[1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6]);
    let mut t = ResultTable::new("cz", cfg, &["delta", "value_re", "value_im", "ratio", "exact", "rel_error"]);
    let f = GridMap::scalar(&grid, |z| z * z / 4.0);
    for &d in &deltas {
        let g = GridMap::scalar(&grid, |z| Complex64::new(d + z.norm_sqr() / 4.0, 0.0));
        let r = cz_integral(&f, &g)?;
        let exact = PI * (1.0 + 1.0 / (4.0 * d)).ln();
        t.push(vec![d, r.value.re, r.value.im, r.value.norm() / (1.0 / d).ln(), exact, (r.value.re - exact).abs() / exact])?;
    }
    let ratios = t.column("ratio").unwrap_or_default();
    let (lo, hi) = ratios.iter().fold((f64::INFINITY, 0.0_f64), |(l, h), &v| (l.min(v), h.max(v)));
    t.metadata.summary.insert("ratio.spread".into(), hi / lo);
    let g = GridMap::scalar(&grid, |z| z * 0.25 + 0.2);
    t.metadata.summary.insert("symmetric".into(), cz_integral(&g, &g)?.value.norm());
    t.note("family", "g = delta + |z|^2/4, f = z^2/4");
    Ok(t.finish(start))
}

/// Reproduction error `∂z̄ T_CG(g) − g` for `g ∈ {1, ζ, ζ̄², |ζ|²}` and the
/// closed forms `T_CG(1) = z̄`, `T_CG(ζ) = |z|² − 1`.
pub fn run_tcg_test(cfg: &ExperimentConfig) -> Result<ResultTable> {
    let start = Instant::now();
    let grid = cfg.grid()?;
    let family: [(&str, fn(Complex64) -> Complex64, Option<fn(Complex64) -> Complex64>); 4] = [
        ("1", |_| Complex64::new(1.0, 0.0), Some(|z: Complex64| z.conj())),
        ("z", |z| z, Some(|z: Complex64| Complex64::new(z.norm_sqr() - 1.0, 0.0))),
        ("conj(z)^2", |z| z.conj() * z.conj(), None),
        ("|z|^2", |z| Complex64::new(z.norm_sqr(), 0.0), None),
    ];
    let mut t = ResultTable::new("tcg-test", cfg, &["function", "core_error", "interior_error", "anchor_error"]);
    let (core, interior) = (grid.core_mask(), grid.interior_mask());
    for (idx, (_, g, anchor)) in family.iter().enumerate() {
        let gm = GridMap::scalar(&grid, g);
        let tg = tcg(&gm);
        let diff = dzbar(&tg).sub(&gm);
        let mut anchor_err: f64 = 0.0;
        if let Some(a) = anchor {
            let am = GridMap::scalar(&grid, a);
            for k in 0..grid.len() {
                if interior[k] {
                    anchor_err = anchor_err.max((tg.values()[k] - am.values()[k]).norm());
                }
            }
        }
        t.push(vec![idx as f64, diff.max_modulus(Some(core)), diff.max_modulus(Some(interior)), anchor_err])?;
    }
    t.note("functions", family.iter().map(|f| f.0).collect::<Vec<_>>());
    for col in ["core_error", "interior_error", "anchor_error"] {
        let m = t.column(col).unwrap_or_default().into_iter().fold(0.0, f64::max);
        t.metadata.summary.insert(format!("{col}.max"), m);
    }
    Ok(t.finish(start))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discgrid::make_grid;

    #[test]
    fn constant_and_holomorphic() {
        let g = make_grid(64).unwrap();
        let c = GridMap::scalar(&g, |_| Complex64::new(0.1, 0.0));
        let r = schwarz2_check(&c, 0.0).unwrap();
        assert!(r.ratio < 1e-12 && r.holomorphy_defect < 1e-12);
        let hol = GridMap::scalar(&g, |z| 1e-3 * z.exp());
        let r = schwarz2_check(&hol, 0.0).unwrap();
        assert!((r.ratio - 1.0 / 1e3f64.ln()).abs() < 1e-6, "{r:?}");
        assert!(schwarz2_check(&GridMap::scalar(&g, |z| z * 0.3), 1.0).is_err());
        let anti = GridMap::scalar(&g, |z| 1e-2 * z.conj().exp());
        assert!(schwarz2_check(&anti, 0.5).is_err());
        assert!(schwarz2_check(&anti, 1.0).unwrap().relative_defect < 1e-6);
    }
}
