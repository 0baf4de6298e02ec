//! One line per acceptance criterion; exits non-zero if any fails.

use jdisc::discgrid::{jet_at_zero, make_grid, GridMap, Jet};
use jdisc::disc_solver::{solve_from_holomorphic, solve_jet, solve_two_point, two_point_values};
use jdisc::experiments::*;
use jdisc::geometry::*;
use jdisc::kobayashi::royden_upper;
use jdisc::poly::{VectorFieldExpr};
use jdisc::psh_levi::*;
use nalgebra::DMatrix;
use num_complex::Complex64;
use std::time::Instant;

type Check = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn summary(t: &ResultTable, key: &str) -> Result<f64, String> {
    t.summary(key).ok_or_else(|| format!("missing summary {key}"))
}

fn cfg(grid: usize) -> ExperimentConfig {
    ExperimentConfig { grid, ..Default::default() }
}

fn tcg_reproduction() -> Check {
    let a = run_tcg_test(&cfg(128)).map_err(err)?;
    let b = run_tcg_test(&cfg(256)).map_err(err)?;
    let (i128, a128) = (summary(&a, "interior_error.max")?, summary(&a, "anchor_error.max")?);
    let (c128, c256) = (summary(&a, "core_error.max")?, summary(&b, "core_error.max")?);
    ensure(
        i128 <= 5e-2 && a128 <= 5e-2 && c256 < c128,
        format!("interior {i128:.2e}, anchors {a128:.2e}, core {c128:.2e} -> {c256:.2e} at N=256"),
    )
}

fn gap_structures() -> Result<Vec<StructureField>, String> {
    let js = [
        make_chirka_perturbed(0.04),
        make_hypersurface_perturbed(0.04),
        dilate(&make_r6(), 0.05).map_err(err)?,
    ];
    let mut out = vec![];
    for j in js {
        let gap = structure_gap(&j, &sample_ball(j.dim(), 1.0, 200, 3)).map_err(err)?;
        if gap > 0.1 {
            return Err(format!("{} has structure gap {gap:.3}", j.label()));
        }
        out.push(j);
    }
    Ok(out)
}

fn solver_soundness() -> Check {
    let grid = make_grid(128).map_err(err)?;
    let mut worst = (0usize, 0.0_f64);
    for j in gap_structures()? {
        let n = j.n();
        let seeds = [
            GridMap::from_fn(&grid, n, |z| (0..n).map(|k| if k == 0 { z } else { Complex64::new(0.0, 0.0) }).collect()),
            GridMap::from_fn(&grid, n, |z| {
                (0..n).map(|k| match k {
                    0 => z,
                    1 => z * z / 2.0,
                    _ => Complex64::new(0.0, 0.0),
                }).collect()
            }),
        ];
        for h in &seeds {
            let (_, rep) = solve_from_holomorphic(&j, h).map_err(err)?;
            if !rep.converged || rep.iterations > 50 || rep.residual > 1e-6 {
                return Err(format!("{}: {rep:?}", j.label()));
            }
            worst = (worst.0.max(rep.iterations), worst.1.max(rep.residual));
        }
    }
    let h = GridMap::from_fn(&grid, 2, |z| vec![z, z * z / 2.0]);
    let (u, rep) = solve_from_holomorphic(&make_standard(2), &h).map_err(err)?;
    ensure(
        rep.iterations == 1 && u.sup_diff(&h) == 0.0,
        format!("max {} iterations, residual {:.2e}; J_st in {} iteration", worst.0, worst.1, rep.iterations),
    )
}

fn jets_and_two_point() -> Check {
    let grid = make_grid(128).map_err(err)?;
    let (mut pe, mut je, mut qe) = (0.0_f64, 0.0_f64, 0.0_f64);
    for j in gap_structures()? {
        let d = j.dim();
        let mut p = vec![0.0; d];
        p[0] = 0.1;
        p[3] = -0.05;
        let mut v1 = vec![0.0; d];
        v1[0] = 0.4;
        v1[2] = 0.3;
        let mut v2 = vec![0.0; d];
        v2[1] = 0.2;
        v2[2] = -0.1;
        for target in [Jet::new(p.clone(), vec![v1.clone()]), Jet::new(p.clone(), vec![v1.clone(), v2.clone()])] {
            let target = target.map_err(err)?;
            let (u, _) = solve_jet(&j, &grid, &target).map_err(err)?;
            let got = jet_at_zero(&u, target.k).map_err(err)?;
            pe = pe.max(got.p.iter().zip(&target.p).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
            je = je.max(got.distance(&target));
        }
        let mut q = p.clone();
        q[0] += 0.2;
        q[2] += 0.1;
        let (u, _) = solve_two_point(&j, &grid, &p, &q).map_err(err)?;
        let vals = two_point_values(&u).map_err(err)?;
        qe = qe.max(vals[d..].iter().zip(&q).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
    }
    ensure(pe <= 1e-6 && je <= 1e-4 && qe <= 1e-4, format!("|u(0)-p| {pe:.2e}, jet {je:.2e}, |u(1/2)-q| {qe:.2e}"))
}

fn exp_field() -> ScalarField {
    // exp(x1) + x1·y1², with exact derivatives
    ScalarField::new(2, |p| p[0].exp() + p[0] * p[1] * p[1])
        .with_grad(|p| vec![p[0].exp() + p[1] * p[1], 2.0 * p[0] * p[1]])
        .with_hessian(|p| DMatrix::from_row_slice(2, 2, &[p[0].exp(), 2.0 * p[1], 2.0 * p[1], 2.0 * p[0]]))
}

fn pullback() -> Check {
    // below this both sides agree to round-off and no decrease is expected
    const FLOOR: f64 = 1e-9;
    let mut lines = vec![];
    let mut ok = true;
    for (name, which) in [("J_st", 0), ("chirka", 1), ("r6", 2)] {
        let mut diffs = vec![];
        for n in [128, 256] {
            let grid = make_grid(n).map_err(err)?;
            let rep = match which {
                0 => {
                    let u = GridMap::scalar(&grid, |z| z * 0.9 + z * z * 0.3);
                    pullback_check(&make_standard(1), &exp_field(), &u)
                }
                1 => {
                    let j = make_chirka_perturbed(0.05);
                    let (u, _) = solve_from_holomorphic(&j, &GridMap::from_fn(&grid, 2, |z| vec![z * 0.4, z * z * 0.2]))
                        .map_err(err)?;
                    pullback_check(&j, &ScalarField::parse("x1^2 + y1^2 + x2^2 + y2^2", 4).map_err(err)?, &u)
                }
                _ => {
                    let j = dilate(&make_r6(), 0.5).map_err(err)?;
                    let (u, _) = solve_from_holomorphic(&j, &GridMap::from_fn(&grid, 3, |z| vec![z * 0.5, z * z * 0.4, z * 0.3]))
                        .map_err(err)?;
                    pullback_check(&j, &ScalarField::coordinate(6, 5), &u)
                }
            }
            .map_err(err)?;
            diffs.push(rep.maxdiff);
        }
        ok &= diffs[0] <= 5e-2 && (diffs[1] < diffs[0] || diffs[0].max(diffs[1]) <= FLOOR);
        lines.push(format!("{name} {:.2e} -> {:.2e}", diffs[0], diffs[1]));
    }
    ensure(ok, lines.join(", "))
}

fn chirka() -> Check {
    let j = dilate(&make_r6(), 0.02).map_err(err)?;
    let min = chirka_check(&j, 10.0, &chirka_samples(6, 0.01, 0.5, 500, 7)).map_err(err)?;
    ensure(min >= 0.0, format!("min normalized Levi form {min:.3}"))
}

fn r6() -> Check {
    let t = run_r6(&cfg(128)).map_err(err)?;
    let lap = t.column("laplacian").unwrap_or_default().into_iter().fold(0.0, f64::max);
    let ratio = summary(&t, "grad_ratio.max")?;
    let (lb, cf) = (t.column("lower_bound").unwrap_or_default(), t.column("closed_form").unwrap_or_default());
    let prof = lb.iter().zip(&cf).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    ensure(
        t.rows.len() >= 100 && lap <= 5e-2 && ratio <= 2.05 && prof <= 1e-6,
        format!("{} discs, laplacian {lap:.2e}, gradient ratio {ratio:.3}, profile error {prof:.2e}", t.rows.len()),
    )
}

fn cz() -> Check {
    let t = run_cz(&cfg(128)).map_err(err)?;
    let (spread, sym) = (summary(&t, "ratio.spread")?, summary(&t, "symmetric")?);
    ensure(spread <= 2.0 && sym <= 5e-2, format!("spread {spread:.3}, symmetric {sym:.2e}"))
}

fn schwarz2() -> Check {
    let t = run_schwarz2(&cfg(128)).map_err(err)?;
    let defect = summary(&t, "relative_defect.max")?;
    let slope = summary(&t, "ratio.slope")?;
    let hol = summary(&t, "holomorphic_ratio.max")?;
    let c = summary(&t, "fitted_constant")?;
    ensure(
        defect <= 5e-2 && slope <= 0.1 && hol <= 2.05,
        format!("defect {defect:.2e}, constant {c:.3}, slope {slope:.3}, holomorphic {hol:.3}"),
    )
}

fn psconvex() -> Check {
    let mut lines = vec![];
    let mut ok = true;
    for s in ["standard(2)", "chirka-perturbed(0.05)"] {
        let t = run_psconvex(&ExperimentConfig { structure: Some(s.into()), ..cfg(128) }).map_err(err)?;
        ok &= t.rows.len() == 6;
        for col in ["ratio_dist", "ratio_grad"] {
            let v = t.column(col).unwrap_or_default();
            let (first, last) = (v[0], v[v.len() - 1]);
            let slope = summary(&t, &format!("{col}.slope"))?;
            ok &= last / first <= 2.0 && first / last <= 2.0 && slope <= 0.1;
            lines.push(format!("{s} {col} last/first {:.3} slope {slope:.3}", last / first));
        }
    }
    ensure(ok, lines.join("; "))
}

fn frobenius() -> Check {
    let j = make_r6();
    let rho = ScalarField::coordinate(6, 5);
    let mut worst: f64 = 0.0;
    for p in [[0.0; 6], [0.2, -0.1, 0.3, 0.1, -0.2, 0.0], [-0.4, 0.3, 0.1, -0.2, 0.5, 0.0]] {
        for (y, t) in [(r6_l1(), r6_l2()), (VectorFieldExpr::constant(&[1.0, 0.0, 0.0, 0.0, 0.0, 0.0]), r6_l1())] {
            let d = frobenius_defect(&j, &rho, &p, &y, &t).map_err(err)?;
            worst = worst.max((d.ddc - d.bracket_pairing).abs());
        }
    }
    let d = frobenius_defect(&j, &rho, &[0.0; 6], &VectorFieldExpr::constant(&[1.0, 0.0, 0.0, 0.0, 0.0, 0.0]), &r6_l1())
        .map_err(err)?;
    let flat = frobenius_defect(
        &make_standard(3),
        &rho,
        &[0.1, 0.2, -0.3, 0.1, 0.4, 0.0],
        &VectorFieldExpr::constant(&[1.0, 0.0, 0.0, 0.0, 0.0, 0.0]),
        &VectorFieldExpr::constant(&[0.0, 0.0, 0.0, 1.0, 0.0, 0.0]),
    )
    .map_err(err)?;
    ensure(
        worst <= 1e-5 && (d.ddc - 1.0).abs() <= 1e-5 && flat.ddc.abs() <= 1e-8,
        format!("|ddc - pairing| {worst:.2e}, (dx1, L1) {:.8}, flat {:.2e}", d.ddc, flat.ddc),
    )
}

fn kobayashi() -> Check {
    let disc = royden_upper(
        &make_standard(1),
        &make_grid(128).map_err(err)?,
        &|p: &[f64]| p[0] * p[0] + p[1] * p[1] < 1.0,
        &[0.0, 0.0],
        &[1.0, 0.0],
        30,
    )
    .map_err(err)?;
    let grid = make_grid(64).map_err(err)?;
    let j = make_standard(2);
    let mut values = vec![];
    for r in [0.5, 0.75, 1.0] {
        let inside = move |p: &[f64]| p.iter().map(|x| x * x).sum::<f64>() < r * r;
        values.push(royden_upper(&j, &grid, &inside, &[0.0; 4], &[0.6, 0.0, 0.8, 0.0], 20).map_err(err)?.value);
    }
    let monotone = values.windows(2).all(|w| w[1] <= w[0]);
    ensure(
        (disc.value - 1.0).abs() <= 0.1 && monotone,
        format!("unit disc {:.5}, balls r=0.5,0.75,1: {values:.4?}", disc.value),
    )
}

fn determinism() -> Check {
    let mut lines = vec![];
    let mut ok = true;
    let configs: [(&str, ExperimentConfig, fn(&ExperimentConfig) -> jdisc::Result<ResultTable>); 3] = [
        ("r6", ExperimentConfig { discs: 20, ..cfg(64) }, run_r6),
        ("cz", cfg(64), run_cz),
        ("psconvex", ExperimentConfig { distances: vec![1e-1, 1e-3], ..cfg(64) }, run_psconvex),
    ];
    for (name, c, run) in configs {
        let a = run(&c).map_err(err)?;
        let b = run(&c).map_err(err)?;
        ok &= a.config_hash == b.config_hash && a.report_hash() == b.report_hash();
        lines.push(name);
    }
    ensure(ok, format!("identical report hashes for {}", lines.join(", ")))
}

fn main() {
    let checks: [(&str, fn() -> Check); 12] = [
        ("cauchy-green reproduction", tcg_reproduction),
        ("solver soundness", solver_soundness),
        ("jet fidelity and two-point", jets_and_two_point),
        ("pullback identity", pullback),
        ("chirka function", chirka),
        ("r6 example", r6),
        ("calderon-zygmund growth", cz),
        ("schwarz-II", schwarz2),
        ("strictly pseudoconvex sweep", psconvex),
        ("frobenius defect", frobenius),
        ("kobayashi anchor", kobayashi),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in checks.iter().enumerate() {
        let start = Instant::now();
        let (tag, detail) = match f() {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("{tag} {:>2} {name}: {detail} ({:.1}s)", i + 1, start.elapsed().as_secs_f64());
    }
    println!("{} of {} criteria passed", checks.len() - failed, checks.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
