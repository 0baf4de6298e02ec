use super::{at_origin, ExperimentConfig, ResultTable};
use crate::disc_solver::residual;
use crate::discgrid::{derivatives, DiscGrid, GridMap};
use crate::geometry::make_r6;
use crate::kobayashi::{distance_lower_certificate, DivergenceGauge};
use crate::poly::CPoly;
use crate::{Error, Result};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;
use std::time::Instant;

const MAX_DEGREE: usize = 4;

/// The exact r6 disc `(Z1, Z2, h1 + conj(h2))` with `h2 = ½∫ Z1 Z2′ dz`.
pub fn make_r6_disc(grid: &Arc<DiscGrid>, z1: &CPoly, z2: &CPoly, h1: &CPoly) -> Result<GridMap> {
    for (name, p) in [("Z1", z1), ("Z2", z2), ("h1", h1)] {
        if p.degree() > MAX_DEGREE {
            return Err(Error::InvalidArgument(format!(
                "{name} has degree {} > {MAX_DEGREE}",
                p.degree()
            )));
        }
    }
    let h2 = z1.mul(&z2.deriv()).integral().scale(Complex64::new(0.5, 0.0));
    Ok(GridMap::from_fn(grid, 3, |z| {
        vec![z1.eval(z), z2.eval(z), h1.eval(z) + h2.eval(z).conj()]
    }))
}

fn random_coeff(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> Complex64 {
    Complex64::from_polar(rng.random_range(lo..hi), rng.random_range(0.0..std::f64::consts::TAU))
}

/// Seeded family of exact r6 discs; checks that `Y3 = Im Z3` is harmonic,
/// satisfies the positive-harmonic gradient bound at 0, and tabulates the
/// linear-gauge certificate for `χ = y3`.
pub fn run_r6(cfg: &ExperimentConfig) -> Result<ResultTable> {
    let start = Instant::now();
    if cfg.structure.as_deref().is_some_and(|s| s != "r6") {
        return Err(Error::Config("run_r6 needs the r6 structure preset".into()));
    }
    let j = make_r6();
    let grid = cfg.grid()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let basis = [CPoly::z(), CPoly::from_real(&[0.0, 0.0, 1.0]), CPoly::from_real(&[0.0, 1.0, 1.0])];
    let gauge = DivergenceGauge::linear(1.0)?;
    let core = grid.core_mask();
    let mut t = ResultTable::new(
        "r6",
        cfg,
        &["disc", "y3_0", "grad_ratio", "laplacian", "residual", "lower_bound", "closed_form"],
    );
    let mut max_c = 0.0_f64;
    for d in 0..cfg.discs {
        let z1 = basis[rng.random_range(0..3)].scale(random_coeff(&mut rng, 0.1, 0.4));
        let z2 = basis[rng.random_range(0..3)].scale(random_coeff(&mut rng, 0.1, 0.4));
        let gamma = random_coeff(&mut rng, 0.0, 0.2);
        let slack = 0.1 * 10f64.powf(-3.0 * rng.random::<f64>());
        // offset c just above the oscillation of Y3 − c on the grid keeps Y3 > 0
        let probe = make_r6_disc(&grid, &z1, &z2, &CPoly::new(vec![Complex64::new(0.0, 0.0), gamma]))?;
        let margin = probe.values().chunks(3).map(|v| v[2].im.abs()).fold(0.0, f64::max);
        let c = margin + slack;
        max_c = max_c.max(c);
        let h1 = CPoly::new(vec![Complex64::new(0.0, c), gamma]);
        let u = make_r6_disc(&grid, &z1, &z2, &h1)?;
        let res = residual(&j, &u)?;
        if res > 1e-6 {
            return Err(Error::Hypothesis(format!("r6 disc {d} has residual {res:.3e}")));
        }
        let y3 = u.component(2).map(|w| Complex64::new(w.im, 0.0));
        if let Some(v) = y3.values().iter().find(|v| v.re <= 0.0) {
            return Err(Error::Hypothesis(format!("r6 disc {d}: Y3 = {} is not positive", v.re)));
        }
        let lap = derivatives(&y3)
            .lap
            .values()
            .iter()
            .zip(core)
            .filter(|(_, &c)| c)
            .map(|(v, _)| v.re.abs())
            .fold(0.0, f64::max);
        let o = at_origin(&y3);
        let y0 = o.value[0].re;
        let grad = o.dx[0].re.hypot(o.dy[0].re);
        let cert = distance_lower_certificate(gauge, 1.0, y0)?;
        t.push(vec![d as f64, y0, grad / y0, lap, res, cert.quadrature, 0.5 * (1.0 / y0).ln()])?;
    }
    t.summarize("grad_ratio", "y3_0");
    t.note("gauge", gauge);
    t.note("max_offset", max_c);
    Ok(t.finish(start))
}
