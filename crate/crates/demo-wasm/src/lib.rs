//! WebAssembly bindings for the static demo page in `www/`.
//!
//! Every export is a thin wrapper over a plain function so the numerics can
//! be tested natively.

use jdisc::cauchy_green::tcg;
use jdisc::disc_solver::{residual, solve_from_holomorphic};
use jdisc::discgrid::{dzbar, interp, make_grid, GridMap};
use jdisc::geometry::{dilate, preset};
use jdisc::kobayashi::{distance_lower_certificate, DivergenceGauge, GaugeKind};
use num_complex::Complex64;
use wasm_bindgen::prelude::*;

const RINGS: [f64; 4] = [0.25, 0.5, 0.75, 0.95];
const RING_POINTS: usize = 96;

/// Solves the disc seeded by `z ↦ (a1·z, a2·z²)` and samples the images of
/// four circles and eight radii. Output layout: `[residual, x, y, x, y, …]`
/// in the chosen complex coordinate plane, polylines of `RING_POINTS + 1`
/// points (circles) followed by 2-point radii.
pub fn disc_image_native(structure: &str, eps: f64, n: usize, a1: f64, a2: f64, plane: usize) -> Result<Vec<f64>, String> {
    let j = preset(structure).map_err(|e| e.to_string())?;
    let j = if eps < 1.0 { dilate(&j, eps).map_err(|e| e.to_string())? } else { j };
    if j.n() < 2 || plane >= j.n() {
        return Err("the structure needs n >= 2 and a valid plane index".into());
    }
    let grid = make_grid(n).map_err(|e| e.to_string())?;
    let dims = j.n();
    let h = GridMap::from_fn(&grid, dims, |z| {
        let mut v = vec![Complex64::new(0.0, 0.0); dims];
        v[0] = z * a1;
        v[1] = z * z * a2;
        v
    });
    let (u, _) = solve_from_holomorphic(&j, &h).map_err(|e| e.to_string())?;
    let mut out = vec![residual(&j, &u).map_err(|e| e.to_string())?];
    let mut push = |z: Complex64| -> Result<(), String> {
        let w = interp(&u, z).map_err(|e| e.to_string())?[plane];
        out.push(w.re);
        out.push(w.im);
        Ok(())
    };
    for r in RINGS {
        for k in 0..=RING_POINTS {
            push(Complex64::from_polar(r, std::f64::consts::TAU * k as f64 / RING_POINTS as f64))?;
        }
    }
    for k in 0..8 {
        let dir = Complex64::from_polar(1.0, std::f64::consts::TAU * k as f64 / 8.0);
        push(dir * 0.0)?;
        push(dir * RINGS[3])?;
    }
    Ok(out)
}

/// `log10 |∂z̄ T_CG(g) − g|` on the `n×n` lattice for the test function
/// `which` ∈ {0: 1, 1: ζ, 2: ζ̄², 3: |ζ|²}; NaN outside the disc.
pub fn tcg_error_native(n: usize, which: u32) -> Result<Vec<f64>, String> {
    let grid = make_grid(n).map_err(|e| e.to_string())?;
    let f = |z: Complex64| match which {
        0 => Complex64::new(1.0, 0.0),
        1 => z,
        2 => z.conj() * z.conj(),
        _ => Complex64::new(z.norm_sqr(), 0.0),
    };
    let g = GridMap::scalar(&grid, f);
    let err = dzbar(&tcg(&g)).sub(&g);
    let mut out = vec![f64::NAN; n * n];
    for k in 0..grid.len() {
        let (i, jj) = grid.ij(k);
        out[jj * n + i] = err.values()[k].norm().max(1e-17).log10();
    }
    Ok(out)
}

/// Lower distance bounds for `chi_near = 10^{-k/steps·decades}`.
pub fn certificate_curve_native(loglinear: bool, c: f64, far: f64, decades: f64, steps: usize) -> Result<Vec<f64>, String> {
    let kind = if loglinear { GaugeKind::Loglinear } else { GaugeKind::Linear };
    let gauge = DivergenceGauge::new(kind, c).map_err(|e| e.to_string())?;
    (1..=steps)
        .map(|k| {
            let near = far * 10f64.powf(-decades * k as f64 / steps as f64);
            distance_lower_certificate(gauge, far, near).map(|c| c.lower_bound).map_err(|e| e.to_string())
        })
        .collect()
}

#[wasm_bindgen]
pub fn disc_image(structure: &str, eps: f64, n: usize, a1: f64, a2: f64, plane: usize) -> Result<Vec<f64>, String> {
    disc_image_native(structure, eps, n, a1, a2, plane)
}

#[wasm_bindgen]
pub fn tcg_error(n: usize, which: u32) -> Result<Vec<f64>, String> {
    tcg_error_native(n, which)
}

#[wasm_bindgen]
pub fn certificate_curve(loglinear: bool, c: f64, far: f64, decades: f64, steps: usize) -> Result<Vec<f64>, String> {
    certificate_curve_native(loglinear, c, far, decades, steps)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn disc_image_standard() {
        let v = disc_image_native("standard(2)", 1.0, 32, 0.8, 0.3, 0).unwrap();
        assert!(v[0] < 1e-9);
        assert_eq!(v.len(), 1 + 2 * (4 * (RING_POINTS + 1) + 16));
        // first ring of z ↦ 0.8 z has radius 0.2
        assert!((v[1].hypot(v[2]) - 0.2).abs() < 1e-3);
        assert!(disc_image_native("standard(1)", 1.0, 32, 0.8, 0.3, 0).is_err());
    }

    #[test]
    fn error_map_and_certificates() {
        let m = tcg_error_native(32, 1).unwrap();
        assert_eq!(m.len(), 32 * 32);
        assert!(m[0].is_nan() && m[16 * 32 + 16] < -4.0);
        let c = certificate_curve_native(false, 1.0, 1.0, 10.0 / std::f64::consts::LN_10, 1).unwrap();
        assert!((c[0] - 5.0).abs() < 1e-12);
        assert!(certificate_curve_native(true, 1.0, 1.0, 2.0, 3).is_err());
    }
}
