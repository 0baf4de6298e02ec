use clap::{Args, Parser, Subcommand};
use jdisc::disc_solver::{
    continue_family_with, solve_from_holomorphic_with, solve_jet_with, solve_two_point_with, SolveReport,
};
use jdisc::discgrid::{make_grid, to_complex, GridMap, Jet};
use jdisc::experiments::{self, ExperimentConfig, ResultTable};
use jdisc::geometry::{dilate, preset, StructureField};
use jdisc::kobayashi::{divergence_profile, royden_upper_with, DivergenceGauge, GaugeKind, RoydenOptions};
use jdisc::poly::VectorFieldExpr;
use jdisc::psh_levi::{chirka_check, chirka_samples, ddc_levi, frobenius_defect, is_complex_tangent, pullback_check, ScalarField};
use jdisc::{Error, Result};
use serde_json::{json, Value};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "jdisc", version, about = "Pseudoholomorphic disc experiments")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// JSON experiment config
    #[arg(long)]
    config: Option<PathBuf>,
    /// Report JSON path (stdout if absent)
    #[arg(long)]
    out: Option<PathBuf>,
    /// CSV mirror of the table, or the disc samples for disc commands
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Grid points per axis
    #[arg(long)]
    grid: Option<usize>,
    /// Comma-separated sweep values (δ, c or boundary distances)
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    delta_list: Option<Vec<f64>>,
    /// Structure preset, e.g. r6 or chirka-perturbed(0.05)
    #[arg(long)]
    structure: Option<String>,
}

#[derive(Args, Clone, Default)]
struct DiscArgs {
    /// Centre point, comma-separated real coordinates
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    point: Option<Vec<f64>>,
    /// Tangent vector at the centre
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    vector: Option<Vec<f64>>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve the disc equation from the seed p + z·v
    SolveDisc {
        #[command(flatten)]
        c: Common,
        #[command(flatten)]
        d: DiscArgs,
    },
    /// Disc with a prescribed 1- or 2-jet at 0
    Jet {
        #[command(flatten)]
        c: Common,
        #[command(flatten)]
        d: DiscArgs,
        /// Second x-derivative at 0 (makes a 2-jet)
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        second: Option<Vec<f64>>,
    },
    /// Disc through p at 0 and q at 1/2
    TwoPoint {
        #[command(flatten)]
        c: Common,
        #[command(flatten)]
        d: DiscArgs,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        target: Vec<f64>,
    },
    /// Continuation of the seeds p + t·w + z·v for t in [0, 1]
    Family {
        #[command(flatten)]
        c: Common,
        #[command(flatten)]
        d: DiscArgs,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        direction: Vec<f64>,
        #[arg(long, default_value_t = 11)]
        steps: usize,
        #[arg(long, default_value_t = 0.05)]
        eta: f64,
    },
    /// Levi form of a polynomial, optionally with the pullback identity on a disc
    PshCheck {
        #[command(flatten)]
        c: Common,
        #[command(flatten)]
        d: DiscArgs,
        #[arg(long)]
        function: String,
        /// Also solve the disc p + z·v and compare Δ(λ∘u) with the Levi form
        #[arg(long)]
        pullback: bool,
    },
    /// Minimum of the Chirka Levi ratio over sampled (Z, Y)
    Chirka {
        #[command(flatten)]
        c: Common,
        #[arg(long, default_value_t = 10.0)]
        a: f64,
        #[arg(long, default_value_t = 500)]
        samples: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 0.01)]
        rmin: f64,
        #[arg(long, default_value_t = 0.5)]
        rmax: f64,
    },
    /// dd^c ρ(Y, T) against the bracket pairing
    Frobenius {
        #[command(flatten)]
        c: Common,
        #[arg(long, default_value = "y3")]
        function: String,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        point: Option<Vec<f64>>,
        /// Components of Y separated by ';'
        #[arg(long, default_value = "1;0;0;0;0;0")]
        y_field: String,
        /// Components of T separated by ';'
        #[arg(long, default_value = "0;0;1;0;x1;0")]
        t_field: String,
    },
    /// CZ integral growth sweep
    Cz {
        #[command(flatten)]
        c: Common,
    },
    /// Schwarz-II family c·exp(az + b z̄)
    Schwarz2 {
        #[command(flatten)]
        c: Common,
    },
    /// R^6 disc family
    R6 {
        #[command(flatten)]
        c: Common,
    },
    /// Strictly pseudoconvex boundary sweep
    Psconvex {
        #[command(flatten)]
        c: Common,
    },
    /// Punctured polydisc sweep
    Hypersurface {
        #[command(flatten)]
        c: Common,
    },
    /// Disc family meeting a totally real plane
    #[command(name = "family-2b")]
    Family2b {
        #[command(flatten)]
        c: Common,
    },
    /// 2-jet corrected disc family
    Jet2 {
        #[command(flatten)]
        c: Common,
    },
    /// Upper bound for the Kobayashi-Royden pseudonorm
    Kobayashi {
        #[command(flatten)]
        c: Common,
        #[command(flatten)]
        d: DiscArgs,
        /// all | ball:R | polydisc:R
        #[arg(long, default_value = "ball:1")]
        inside: String,
        #[arg(long, default_value_t = 30)]
        budget: usize,
    },
    /// Distance certificates for a divergence gauge
    Divergence {
        #[command(flatten)]
        c: Common,
        #[arg(long, default_value = "linear")]
        gauge: String,
        #[arg(long = "gauge-c", default_value_t = 1.0)]
        gauge_c: f64,
        #[arg(long, default_value_t = 1.0)]
        far: f64,
    },
    /// Cauchy-Green reproduction errors
    TcgTest {
        #[command(flatten)]
        c: Common,
    },
}

fn load_config(c: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &c.config {
        Some(p) => ExperimentConfig::from_file(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(n) = c.grid {
        cfg.grid = n;
    }
    if let Some(s) = &c.structure {
        cfg.structure = Some(s.clone());
    }
    if let Some(list) = &c.delta_list {
        cfg.deltas = list.clone();
        cfg.distances = list.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn structure(cfg: &ExperimentConfig, default: &str) -> Result<StructureField> {
    let j = preset(cfg.structure.as_deref().unwrap_or(default))?;
    if cfg.dilation < 1.0 {
        dilate(&j, cfg.dilation)
    } else {
        Ok(j)
    }
}

fn vec_or(v: &Option<Vec<f64>>, dim: usize, default: impl Fn(usize) -> f64) -> Result<Vec<f64>> {
    let out = v.clone().unwrap_or_else(|| (0..dim).map(default).collect());
    if out.len() != dim {
        return Err(Error::Config(format!("expected {dim} coordinates, got {}", out.len())));
    }
    Ok(out)
}

fn point_and_vector(d: &DiscArgs, dim: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    Ok((vec_or(&d.point, dim, |_| 0.0)?, vec_or(&d.vector, dim, |k| if k == 0 { 0.5 } else { 0.0 })?))
}

fn affine_seed(grid: &std::sync::Arc<jdisc::discgrid::DiscGrid>, p: &[f64], v: &[f64]) -> GridMap {
    let (pc, vc) = (to_complex(p), to_complex(v));
    GridMap::from_fn(grid, pc.len(), |z| pc.iter().zip(&vc).map(|(a, b)| a + z * b).collect())
}

fn converged(rep: &SolveReport) -> Result<()> {
    if rep.converged {
        Ok(())
    } else {
        Err(Error::Divergence { iterations: rep.iterations, ratio: rep.contraction_estimate })
    }
}

fn parse_field(src: &str) -> Result<VectorFieldExpr> {
    let parts: Vec<&str> = src.split(';').map(str::trim).collect();
    VectorFieldExpr::parse(&parts)
}

fn inside_predicate(spec: &str) -> Result<Box<dyn Fn(&[f64]) -> bool>> {
    if spec == "all" {
        return Ok(Box::new(|_| true));
    }
    let (kind, r) = spec
        .split_once(':')
        .ok_or_else(|| Error::Config(format!("bad --inside '{spec}'")))?;
    let r: f64 = r.parse().map_err(|_| Error::Config(format!("bad radius in '{spec}'")))?;
    match kind {
        "ball" => Ok(Box::new(move |p| p.iter().map(|x| x * x).sum::<f64>() < r * r)),
        "polydisc" => Ok(Box::new(move |p| p.chunks(2).all(|c| c[0].hypot(c[1]) < r))),
        _ => Err(Error::Config(format!("unknown domain '{kind}'"))),
    }
}

enum Output {
    Table(ResultTable),
    Disc(Value, Option<GridMap>),
    Plain(Value),
}

fn run(cmd: &Cmd) -> Result<(Output, Common)> {
    let out = match cmd {
        Cmd::SolveDisc { c, d } => {
            let cfg = load_config(c)?;
            let j = structure(&cfg, "standard(2)")?;
            let grid = make_grid(cfg.grid)?;
            let (p, v) = point_and_vector(d, j.dim())?;
            let (u, rep) = solve_from_holomorphic_with(&j, &affine_seed(&grid, &p, &v), None, &cfg.solver)?;
            converged(&rep)?;
            (Output::Disc(json!({"structure": j.label(), "report": rep}), Some(u)), c.clone())
        }
        Cmd::Jet { c, d, second } => {
            let cfg = load_config(c)?;
            let j = structure(&cfg, "standard(2)")?;
            let grid = make_grid(cfg.grid)?;
            let (p, v) = point_and_vector(d, j.dim())?;
            let mut vs = vec![v];
            if let Some(s) = second {
                vs.push(vec_or(&Some(s.clone()), j.dim(), |_| 0.0)?);
            }
            let target = Jet::new(p, vs)?;
            let (u, rep) = solve_jet_with(&j, &grid, &target, &cfg.solver)?;
            (Output::Disc(json!({"structure": j.label(), "target": target, "report": rep}), Some(u)), c.clone())
        }
        Cmd::TwoPoint { c, d, target } => {
            let cfg = load_config(c)?;
            let j = structure(&cfg, "standard(2)")?;
            let grid = make_grid(cfg.grid)?;
            let p = vec_or(&d.point, j.dim(), |_| 0.0)?;
            let q = vec_or(&Some(target.clone()), j.dim(), |_| 0.0)?;
            let (u, rep) = solve_two_point_with(&j, &grid, &p, &q, &cfg.solver)?;
            (Output::Disc(json!({"structure": j.label(), "p": p, "q": q, "report": rep}), Some(u)), c.clone())
        }
        Cmd::Family { c, d, direction, steps, eta } => {
            let cfg = load_config(c)?;
            let j = structure(&cfg, "standard(2)")?;
            let grid = make_grid(cfg.grid)?;
            let (p, v) = point_and_vector(d, j.dim())?;
            let w = vec_or(&Some(direction.clone()), j.dim(), |_| 0.0)?;
            let steps = (*steps).max(2);
            let phis: Vec<GridMap> = (0..steps)
                .map(|k| {
                    let t = k as f64 / (steps - 1) as f64;
                    let pt: Vec<f64> = p.iter().zip(&w).map(|(a, b)| a + t * b).collect();
                    affine_seed(&grid, &pt, &v)
                })
                .collect();
            let fam = continue_family_with(&j, &phis, *eta, &cfg.solver)?;
            let members: Vec<Value> = fam
                .iter()
                .zip(&phis)
                .enumerate()
                .map(|(k, ((psi, rep), phi))| json!({"index": k, "deviation": psi.sup_diff(phi), "report": rep}))
                .collect();
            let last = fam.last().map(|m| m.0.clone());
            (Output::Disc(json!({"structure": j.label(), "members": members}), last), c.clone())
        }
        Cmd::PshCheck { c, d, function, pullback } => {
            let cfg = load_config(c)?;
            let j = structure(&cfg, "standard(2)")?;
            let lam = ScalarField::parse(function, j.dim())?;
            let (p, v) = point_and_vector(d, j.dim())?;
            let mut val = json!({
                "structure": j.label(),
                "function": function,
                "levi": ddc_levi(&j, &lam, &p, &v)?,
            });
            if *pullback {
                let grid = make_grid(cfg.grid)?;
                let (u, rep) = solve_from_holomorphic_with(&j, &affine_seed(&grid, &p, &v), None, &cfg.solver)?;
                converged(&rep)?;
                val["pullback"] = serde_json::to_value(pullback_check(&j, &lam, &u)?)?;
            }
            (Output::Plain(val), c.clone())
        }
        Cmd::Chirka { c, a, samples, seed, rmin, rmax } => {
            let cfg = load_config(c)?;
            let j = structure(&cfg, "r6")?;
            let s = chirka_samples(j.dim(), *rmin, *rmax, *samples, *seed);
            let min = chirka_check(&j, *a, &s)?;
            (Output::Plain(json!({"structure": j.label(), "a": a, "samples": samples, "min": min, "nonnegative": min >= 0.0})), c.clone())
        }
        Cmd::Frobenius { c, function, point, y_field, t_field } => {
            let cfg = load_config(c)?;
            let j = structure(&cfg, "r6")?;
            let rho = ScalarField::parse(function, j.dim())?;
            let p = vec_or(point, j.dim(), |_| 0.0)?;
            let (y, t) = (parse_field(y_field)?, parse_field(t_field)?);
            let tangent = is_complex_tangent(&j, &rho, &p, &y.eval(&p))?;
            let d = frobenius_defect(&j, &rho, &p, &y, &t)?;
            (
                Output::Plain(json!({
                    "structure": j.label(),
                    "function": function,
                    "y_complex_tangent": tangent,
                    "ddc": d.ddc,
                    "bracket_pairing": d.bracket_pairing,
                    "difference": (d.ddc - d.bracket_pairing).abs(),
                })),
                c.clone(),
            )
        }
        Cmd::Cz { c } => (Output::Table(experiments::run_cz(&load_config(c)?)?), c.clone()),
        Cmd::Schwarz2 { c } => (Output::Table(experiments::run_schwarz2(&load_config(c)?)?), c.clone()),
        Cmd::R6 { c } => (Output::Table(experiments::run_r6(&load_config(c)?)?), c.clone()),
        Cmd::Psconvex { c } => (Output::Table(experiments::run_psconvex(&load_config(c)?)?), c.clone()),
        Cmd::Hypersurface { c } => (Output::Table(experiments::run_hypersurface(&load_config(c)?)?), c.clone()),
        Cmd::Family2b { c } => (Output::Table(experiments::run_family_2b(&load_config(c)?)?), c.clone()),
        Cmd::Jet2 { c } => (Output::Table(experiments::run_jet2_family(&load_config(c)?)?), c.clone()),
        Cmd::Kobayashi { c, d, inside, budget } => {
            let cfg = load_config(c)?;
            let j = structure(&cfg, "standard(1)")?;
            let grid = make_grid(cfg.grid)?;
            let p = vec_or(&d.point, j.dim(), |_| 0.0)?;
            let y = vec_or(&d.vector, j.dim(), |k| if k == 0 { 1.0 } else { 0.0 })?;
            let pred = inside_predicate(inside)?;
            let opts = RoydenOptions { solver: cfg.solver.clone(), ..Default::default() };
            let b = royden_upper_with(&j, &grid, &*pred, &p, &y, *budget, &opts)?;
            let val = json!({
                "structure": j.label(),
                "inside": inside,
                "point": p,
                "vector": y,
                "upper_bound": b.value,
                "scale": b.scale,
                "solves": b.solves,
                "trials": b.trials,
            });
            (Output::Disc(val, b.witness), c.clone())
        }
        Cmd::Divergence { c, gauge, gauge_c, far } => {
            let kind = match gauge.as_str() {
                "linear" => GaugeKind::Linear,
                "loglinear" => GaugeKind::Loglinear,
                other => return Err(Error::Config(format!("unknown gauge '{other}'"))),
            };
            let g = DivergenceGauge::new(kind, *gauge_c)?;
            let near = c.delta_list.clone().unwrap_or_else(|| (1..=6).map(|k| 10f64.powi(-k)).collect());
            let certs = divergence_profile(g, *far, &near)?;
            (Output::Plain(json!({"gauge": g, "chi_far": far, "certificates": certs})), c.clone())
        }
        Cmd::TcgTest { c } => (Output::Table(experiments::run_tcg_test(&load_config(c)?)?), c.clone()),
    };
    Ok(out)
}

fn emit(out: &Output, c: &Common) -> Result<()> {
    let text = match out {
        Output::Table(t) => t.to_json(),
        Output::Disc(v, _) | Output::Plain(v) => serde_json::to_string_pretty(v)?,
    };
    match &c.out {
        Some(p) => std::fs::write(p, format!("{text}\n"))?,
        None => {
            use std::io::Write;
            // a closed pipe (e.g. `| head`) is not an error of the run
            if let Err(e) = writeln!(std::io::stdout().lock(), "{text}") {
                if e.kind() != std::io::ErrorKind::BrokenPipe {
                    return Err(e.into());
                }
            }
        }
    }
    if let Some(p) = &c.csv {
        match out {
            Output::Table(t) => t.write_csv_file(p)?,
            Output::Disc(_, Some(u)) => u.write_csv(std::fs::File::create(p)?)?,
            _ => return Err(Error::Config("this command has no CSV output".into())),
        }
    }
    Ok(())
}

/// Post-run acceptance for commands with a pass/fail contract.
fn verdict(cmd: &Cmd, out: &Output) -> Result<()> {
    if let (Cmd::TcgTest { .. }, Output::Table(t)) = (cmd, out) {
        let e = t.summary("interior_error.max").unwrap_or(f64::INFINITY);
        if e > 5e-2 {
            return Err(Error::Hypothesis(format!("reproduction error {e:.3e} exceeds 5e-2")));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 3 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let res = run(&cli.cmd).and_then(|(out, c)| {
        emit(&out, &c)?;
        verdict(&cli.cmd, &out)
    });
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("jdisc: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
