//! `sphere-rigidity`: verification suite and experiments from the command line.
//!
//! Exit codes: 0 success, 1 invariant failure, 2 usage error.

mod maps;
mod verify;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use sphere_rigidity::config::Config;
use sphere_rigidity::deficits::{combined_deficit, deficit_report};
use sphere_rigidity::experiments::{geometric, stability_sweep, Family, FamilySweep, Theorem};
use sphere_rigidity::forms::{constants, field_integrals, q_n_from, rational_string, to_f64};
use sphere_rigidity::harmonic_basis::{tangential_energy_poly, SphereMap};
use sphere_rigidity::moebius::{nearest_moebius, MoebiusJson};
use sphere_rigidity::operator_a::{eigenspace, sigma};
use sphere_rigidity::quadrature::{build_sphere_grid, SphereGrid};
use sphere_rigidity::random;

#[derive(Parser, Debug)]
#[command(name = "sphere-rigidity", version, about = "Stability of isometric and conformal maps of spheres")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// Ambient dimension (the sphere is S^{n-1}).
    #[arg(long, global = true)]
    n: Option<usize>,
    /// Largest harmonic degree.
    #[arg(long, global = true)]
    kmax: Option<usize>,
    /// Quadrature resolution (for --n, or for every dimension).
    #[arg(long, global = true)]
    resolution: Option<usize>,
    /// Overrides all tolerances.
    #[arg(long, global = true)]
    tol: Option<f64>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file (or directory for `verify`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// JSON configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the invariant suite and write a JUnit-style JSON report.
    Verify,
    /// Eigenvalues, dimensions and constants of A per (k, i) as CSV.
    Spectrum,
    /// Log-log rates of a family's deficits and energies.
    Rates(SweepArgs),
    /// Ratio bounds of the stability estimates along the optimality families.
    Stability(StabilityArgs),
    /// Fit the nearest scaled Möbius map.
    FitMoebius(MapArgs),
    /// All deficits of a map as JSON.
    Deficits(MapArgs),
}

#[derive(Args, Debug)]
struct SweepArgs {
    /// flip, stretch, short_homothety or ellipsoid.
    #[arg(long)]
    family: String,
    /// `lo:hi:geometric:count`.
    #[arg(long)]
    sigmas: Option<String>,
    /// isometric or conformal (defaults to the family's own estimate).
    #[arg(long)]
    theorem: Option<String>,
}

#[derive(Args, Debug)]
struct StabilityArgs {
    /// Restrict to one family.
    #[arg(long)]
    family: Option<String>,
    /// Points per family.
    #[arg(long, default_value_t = 6)]
    count: usize,
}

#[derive(Args, Debug)]
struct MapArgs {
    /// `id`, `flip(σ)`, `stretch(σ)`, `short_homothety(σ)`, `ellipsoid(σ)` or a JSON map file.
    #[arg(long)]
    map: String,
}

/// Errors caused by the invocation rather than by the mathematics.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage<T>(r: Result<T>) -> Result<T> {
    r.map_err(|e| Usage(format!("{e:#}")).into())
}

fn load_config(g: &Global) -> Result<Config> {
    let mut cfg = match &g.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    if let Some(r) = g.resolution {
        match g.n {
            Some(n) => cfg.resolution.set(n, r)?,
            None => (2..=4).try_for_each(|n| cfg.resolution.set(n, r))?,
        }
    }
    if let Some(k) = g.kmax {
        match g.n {
            Some(n) => cfg.kmax.set(n, k)?,
            None => (2..=4).try_for_each(|n| cfg.kmax.set(n, k))?,
        }
    }
    if let Some(t) = g.tol {
        cfg.tolerances.exact = t;
        cfg.tolerances.quadrature = t;
        cfg.tolerances.solver = t;
    }
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    if let Some(o) = &g.out {
        cfg.out_dir = o.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            std::fs::write(p, text).with_context(|| format!("cannot write {}", p.display()))
        }
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn parse_sigmas(text: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = text.split(':').collect();
    let [lo, hi, kind, count] = parts[..] else {
        bail!("--sigmas must look like lo:hi:geometric:count");
    };
    let lo: f64 = lo.parse().context("bad lower bound")?;
    let hi: f64 = hi.parse().context("bad upper bound")?;
    let count: usize = count.parse().context("bad count")?;
    match kind {
        "geometric" => Ok(geometric(lo, hi, count)?),
        "linear" => {
            if count < 2 || hi.partial_cmp(&lo) != Some(std::cmp::Ordering::Greater) {
                bail!("linear spacing needs count ≥ 2 and lo < hi");
            }
            Ok((0..count).map(|j| lo + (hi - lo) * j as f64 / (count - 1) as f64).collect())
        }
        _ => bail!("unknown spacing `{kind}` (geometric or linear)"),
    }
}

fn default_sigmas(family: Family, count: usize) -> Result<Vec<f64>> {
    let (lo, hi) = match family {
        Family::Flip => (0.05, 1.0),
        Family::Stretch => (0.01, 0.2),
        Family::ShortHomothety => (0.2, 0.7),
        Family::Ellipsoid => (0.01, 0.3),
    };
    Ok(geometric(lo, hi, count)?)
}

fn grid_for(cfg: &Config, g: &Global, n: usize) -> Result<Option<Arc<SphereGrid>>> {
    match g.resolution {
        Some(_) => Ok(Some(Arc::new(build_sphere_grid(n, cfg.resolution.get(n)?)?))),
        None => Ok(None),
    }
}

fn cmd_verify(cfg: &Config) -> Result<ExitCode> {
    let report = verify::run(cfg)?;
    for c in &report.testsuite.testcases {
        let status = if c.failure.is_some() { "FAIL" } else { "PASS" };
        println!("{status} {}::{} residual {:.3e} (tol {:.1e})", c.classname, c.name, c.residual, c.tolerance);
    }
    std::fs::create_dir_all(&cfg.out_dir).with_context(|| format!("cannot create {}", cfg.out_dir.display()))?;
    let path = cfg.out_dir.join("verify.json");
    std::fs::write(&path, serde_json::to_string_pretty(&report)?)?;
    println!(
        "{} of {} checks passed; report written to {}",
        report.testsuite.tests - report.testsuite.failures,
        report.testsuite.tests,
        path.display()
    );
    match report.first_failure() {
        Some(c) => {
            eprintln!("first failure: {}::{}: {}", c.classname, c.name, c.failure.as_ref().map_or("", |f| &f.message));
            Ok(ExitCode::from(1))
        }
        None => Ok(ExitCode::SUCCESS),
    }
}

fn cmd_spectrum(cfg: &Config, g: &Global) -> Result<ExitCode> {
    let n = g.n.unwrap_or(3);
    if !(2..=4).contains(&n) {
        return Err(Usage(format!("spectrum supports n ∈ {{2, 3, 4}}, got {n}")).into());
    }
    let kmax = cfg.kmax.get(n)?;
    let mut rng = random::rng(cfg.seed);
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "n",
        "k",
        "i",
        "sigma_nki",
        "dim",
        "c_nki",
        "alpha_nki",
        "C_nki",
        "Cprime_nki",
        "Ctilde_nki",
        "residual_c",
        "residual_alpha",
        "residual_C",
    ])?;
    for k in 1..=kmax {
        for i in (1..=3).filter(|&i| !(i == 3 && k < 2)) {
            let s = eigenspace(n, k, i)?;
            let c = constants(n, k, i)?;
            let residuals = if s.is_empty() {
                [String::new(), String::new(), String::new()]
            } else {
                let v = random::unit_in(&mut rng, &s)?;
                let v = v.scale(1.0 / tangential_energy_poly(&v).sqrt());
                let f = field_integrals(&SphereMap::Poly(v), None)?;
                [(f.qv, &c.c), (f.div2, &c.alpha), (q_n_from(n, &f), &c.big_c)]
                    .map(|(m, e)| format!("{:.3e}", (m / f.energy - to_f64(e)).abs()))
            };
            w.write_record([
                n.to_string(),
                k.to_string(),
                i.to_string(),
                format!("{}", sigma(n, k, i)),
                s.dim().to_string(),
                rational_string(&c.c),
                rational_string(&c.alpha),
                rational_string(&c.big_c),
                rational_string(&c.c_prime),
                c.c_tilde.as_ref().map(rational_string).unwrap_or_default(),
                residuals[0].clone(),
                residuals[1].clone(),
                residuals[2].clone(),
            ])?;
        }
    }
    emit(g.out.as_deref(), &String::from_utf8(w.into_inner()?)?)?;
    Ok(ExitCode::SUCCESS)
}

fn slopes_csv(sweep: &FamilySweep) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["quantity", "slope", "intercept", "residual"])?;
    for s in &sweep.slopes {
        w.write_record([
            s.quantity.clone(),
            format!("{:.6}", s.fit.slope),
            format!("{:.6}", s.fit.intercept),
            format!("{:.3e}", s.fit.residual),
        ])?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

fn cmd_rates(g: &Global, a: &SweepArgs) -> Result<ExitCode> {
    let family = usage(Family::parse(&a.family).map_err(Into::into))?;
    let theorem = match &a.theorem {
        Some(t) => usage(Theorem::parse(t).map_err(Into::into))?,
        None => family.default_theorem(),
    };
    let sigmas = match &a.sigmas {
        Some(s) => usage(parse_sigmas(s))?,
        None => default_sigmas(family, 8)?,
    };
    let sweep = usage(stability_sweep(family, &sigmas, theorem).map_err(Into::into))?;
    let slopes = slopes_csv(&sweep)?;
    match &g.out {
        Some(p) => {
            emit(Some(p), &sweep.to_csv())?;
            emit(Some(&p.with_extension("slopes.csv")), &slopes)?;
            print!("{slopes}");
        }
        None => print!("{}\n{slopes}", sweep.to_csv()),
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_stability(g: &Global, a: &StabilityArgs) -> Result<ExitCode> {
    let families = match &a.family {
        Some(f) => vec![usage(Family::parse(f).map_err(Into::into))?],
        None => vec![Family::Flip, Family::Stretch, Family::ShortHomothety, Family::Ellipsoid],
    };
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["family", "theorem", "sigma_min", "sigma_max", "count", "max_ratio", "ratio_spread", "bounded"])?;
    let mut all_bounded = true;
    for family in families {
        let sigmas = usage(default_sigmas(family, a.count))?;
        let sweep = stability_sweep(family, &sigmas, family.default_theorem())?;
        let bounded = sweep.max_ratio <= 100.0 && sweep.ratio_spread < 10.0;
        all_bounded &= bounded;
        w.write_record([
            family.name().to_string(),
            format!("{:?}", sweep.theorem).to_lowercase(),
            format!("{:.6e}", sigmas[0]),
            format!("{:.6e}", sigmas[sigmas.len() - 1]),
            sigmas.len().to_string(),
            format!("{:.6e}", sweep.max_ratio),
            format!("{:.6e}", sweep.ratio_spread),
            bounded.to_string(),
        ])?;
    }
    emit(g.out.as_deref(), &String::from_utf8(w.into_inner()?)?)?;
    Ok(if all_bounded { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

#[derive(Serialize)]
struct FitOutput {
    map: MoebiusJson,
    lambda: f64,
    value: f64,
    #[serde(rename = "E")]
    combined: f64,
    ratio: f64,
    evaluations: usize,
}

fn cmd_fit_moebius(cfg: &Config, g: &Global, a: &MapArgs) -> Result<ExitCode> {
    let u = usage(maps::parse_map(&a.map, g.n.unwrap_or(3)))?;
    let grid = grid_for(cfg, g, u.n())?;
    let fit = nearest_moebius(&u, grid.as_ref())?;
    let e = combined_deficit(&u, grid.as_ref())?;
    let out = FitOutput {
        map: fit.map.to_json(),
        lambda: fit.scale,
        value: fit.value,
        combined: e,
        ratio: if e > 0.0 { fit.value / e } else { f64::NAN },
        evaluations: fit.evaluations,
    };
    emit(g.out.as_deref(), &(serde_json::to_string_pretty(&out)? + "\n"))?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_deficits(cfg: &Config, g: &Global, a: &MapArgs) -> Result<ExitCode> {
    let u = usage(maps::parse_map(&a.map, g.n.unwrap_or(3)))?;
    let grid = grid_for(cfg, g, u.n())?;
    let report = deficit_report(&u, grid.as_ref())?;
    emit(g.out.as_deref(), &(serde_json::to_string_pretty(&report)? + "\n"))?;
    Ok(ExitCode::SUCCESS)
}

fn run(cli: &Cli) -> Result<ExitCode> {
    let cfg = usage(load_config(&cli.global))?;
    match &cli.command {
        Command::Verify => cmd_verify(&cfg),
        Command::Spectrum => cmd_spectrum(&cfg, &cli.global),
        Command::Rates(a) => cmd_rates(&cli.global, a),
        Command::Stability(a) => cmd_stability(&cli.global, a),
        Command::FitMoebius(a) => cmd_fit_moebius(&cfg, &cli.global, a),
        Command::Deficits(a) => cmd_deficits(&cfg, &cli.global, a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<Usage>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
