//! The invariant suite behind `verify`: every check measures a residual and
//! compares it with the tolerance of its kind.

use std::sync::Arc;
use std::time::Instant;

use anyhow::Result;
use serde::Serialize;
use sphere_rigidity::config::Config;
use sphere_rigidity::deficits::{
    bulk_volume, combined_deficit, deficit_report, deficit_report_with, signed_volume, volume_expansion_check,
};
use sphere_rigidity::experiments::{flip_closed_form, flip_family};
use sphere_rigidity::forms::{
    constants, field_integrals, korn_residual, min_constant, q_conf, q_isop, q_n, q_n_from, q_vol_alt, to_f64,
};
use sphere_rigidity::harmonic_basis::{tangential_energy_poly, vector_basis, SphereMap};
use sphere_rigidity::moebius::{compose_sample, gauge_fix, nearest_moebius, recenter, MoebiusMap};
use sphere_rigidity::operator_a::{block_spectrum, eigenspace, kernel_moments, self_adjointness_residual};
use sphere_rigidity::par::Mode;
use sphere_rigidity::poly::{monomials, VecPoly};
use sphere_rigidity::quadrature::{build_sphere_grid, sphere_moment, SphereGrid};
use sphere_rigidity::random::{self, SeededRng};

#[derive(Clone, Copy, Debug, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Exact,
    Quadrature,
    Solver,
}

#[derive(Clone, Debug, Serialize)]
pub struct Failure {
    pub message: String,
}

/// One JUnit-style test case.
#[derive(Clone, Debug, Serialize)]
pub struct TestCase {
    pub name: String,
    pub classname: String,
    pub kind: Kind,
    pub residual: f64,
    pub tolerance: f64,
    pub time: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failure: Option<Failure>,
}

#[derive(Clone, Debug, Serialize)]
pub struct TestSuite {
    pub name: String,
    pub tests: usize,
    pub failures: usize,
    pub time: f64,
    pub testcases: Vec<TestCase>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Report {
    pub testsuite: TestSuite,
}

impl Report {
    pub fn first_failure(&self) -> Option<&TestCase> {
        self.testsuite.testcases.iter().find(|c| c.failure.is_some())
    }
}

type CheckFn = fn(&Ctx) -> Result<f64>;

struct Ctx {
    cfg: Config,
    grid3: Arc<SphereGrid>,
}

impl Ctx {
    fn rng(&self, salt: u64) -> SeededRng {
        random::rng(self.cfg.seed.wrapping_add(salt))
    }
}

fn unit_energy(w: &VecPoly) -> VecPoly {
    w.scale(1.0 / tangential_energy_poly(w).sqrt())
}

fn rows(k: usize) -> impl Iterator<Item = usize> {
    (1..=3).filter(move |&i| !(i == 3 && k < 2))
}

fn quadrature_exactness(ctx: &Ctx) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for n in 2..=4 {
        let r = ctx.cfg.resolution.get(n)?;
        let grid = build_sphere_grid(n, r)?;
        let top = if n == 2 { r - 1 } else { 2 * r - 1 }.min(8);
        for d in 0..=top {
            for e in monomials(n, d) {
                let q =
                    grid.integrate_fn(Mode::default(), |x| x.iter().zip(&e).map(|(v, &p)| v.powi(p as i32)).product());
                let p: Vec<u32> = e[..n].iter().map(|&v| u32::from(v)).collect();
                worst = worst.max((q - sphere_moment(n, &p)).abs());
            }
        }
    }
    Ok(worst)
}

fn basis_orthonormality(ctx: &Ctx) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for n in 3..=4 {
        for k in 1..=ctx.cfg.kmax.get(n)?.min(6) {
            worst = worst.max(vector_basis(n, k)?.orthonormality_defect());
        }
    }
    Ok(worst)
}

fn spectrum_clusters(ctx: &Ctx) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for n in 3..=4 {
        for k in 1..=ctx.cfg.kmax.get(n)?.min(6) {
            worst = worst.max(block_spectrum(n, k)?.cluster_defect).max(self_adjointness_residual(n, k)?);
        }
    }
    Ok(worst)
}

fn constant_ratios(ctx: &Ctx) -> Result<f64> {
    let mut rng = ctx.rng(1);
    let mut worst: f64 = 0.0;
    for n in 3..=4 {
        for k in 1..=4 {
            for i in rows(k) {
                let c = constants(n, k, i)?;
                let w = SphereMap::Poly(unit_energy(&random::unit_in(&mut rng, &eigenspace(n, k, i)?)?));
                let f = field_integrals(&w, None)?;
                for (m, e) in [(f.qv, &c.c), (f.div2, &c.alpha), (q_n_from(n, &f), &c.big_c)] {
                    worst = worst.max((m / f.energy - to_f64(e)).abs());
                }
            }
        }
    }
    Ok(worst)
}

fn sharp_constant(_: &Ctx) -> Result<f64> {
    let m = min_constant(3, 200)?;
    Ok((to_f64(&m.value) - 0.25).abs() + if m.argmin == (3, 3) { 0.0 } else { 1.0 })
}

fn korn(ctx: &Ctx) -> Result<f64> {
    let mut rng = ctx.rng(2);
    let mut worst: f64 = 0.0;
    for n in 3..=4 {
        for d in 1..=3 {
            let w = SphereMap::Poly(random::poly_map(&mut rng, n, n, d, 1.0));
            worst = worst.max(korn_residual(&w, None)?);
        }
    }
    Ok(worst)
}

fn form_split(ctx: &Ctx) -> Result<f64> {
    let mut rng = ctx.rng(3);
    let mut worst: f64 = 0.0;
    for n in 3..=4 {
        let w = SphereMap::Poly(random::h_field(&mut rng, n, 3)?);
        worst = worst.max((q_conf(&w, None)? + q_isop(&w, None)? - q_n(&w, None)?).abs());
        let f = field_integrals(&w, None)?;
        worst = worst.max((q_vol_alt(&w, None)? - f.qv).abs());
    }
    Ok(worst)
}

fn bulk_surface(ctx: &Ctx) -> Result<f64> {
    let mut rng = ctx.rng(4);
    let mut worst: f64 = 0.0;
    for d in 1..=3 {
        let u = SphereMap::Poly(random::poly_map(&mut rng, 3, 3, d, 1.0));
        worst = worst.max((bulk_volume(&u, 3, None)? - signed_volume(&u, None)?).abs());
    }
    Ok(worst)
}

fn volume_expansion(ctx: &Ctx) -> Result<f64> {
    let mut rng = ctx.rng(5);
    let w = SphereMap::Poly(random::poly_map(&mut rng, 3, 3, 2, 1.0));
    Ok(volume_expansion_check(&w, None)?.max_error())
}

fn identity_deficits(_: &Ctx) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for n in 2..=4 {
        let r = deficit_report(&SphereMap::identity(n), None)?;
        worst = worst.max(r.delta).max(r.delta_isom).max(r.epsilon).max(r.combined.unwrap_or(1.0).abs());
    }
    Ok(worst)
}

fn wente_chain(ctx: &Ctx) -> Result<f64> {
    let mut rng = ctx.rng(6);
    let mut worst: f64 = 0.0;
    for n in 3..=4 {
        for d in 1..=2 {
            let u = SphereMap::Poly(random::poly_map(&mut rng, n, n, d, 0.7));
            let (a, b) = deficit_report(&u, None)?.wente_slack();
            worst = worst.max(-a).max(-b);
        }
    }
    Ok(worst)
}

fn mode_agreement(ctx: &Ctx) -> Result<f64> {
    let mut rng = ctx.rng(7);
    let u = SphereMap::Poly(random::poly_map(&mut rng, 3, 3, 2, 0.5));
    let a = deficit_report_with(Mode::Sequential, &u, Some(&ctx.grid3))?;
    let b = deficit_report_with(Mode::Parallel, &u, Some(&ctx.grid3))?;
    Ok([a.delta - b.delta, a.energy - b.energy, a.perimeter - b.perimeter, a.volume - b.volume]
        .iter()
        .fold(0.0, |m, d| m.max(d.abs())))
}

fn flip_closed_forms(_: &Ctx) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for s in [0.1, 0.5, 1.0] {
        let r = deficit_report(&flip_family(s)?, None)?;
        worst = worst.max((r.epsilon - flip_closed_form(s)).abs()).max(r.delta);
    }
    Ok(worst)
}

fn random_moebius(rng: &mut SeededRng) -> Result<MoebiusMap> {
    use rand::Rng;
    let xi = random::unit_vector(rng, 3);
    let lambda = rng.random_range(0.5f64.ln()..2.0f64.ln()).exp();
    Ok(MoebiusMap::new(random::rotation(rng, 3), xi.into(), lambda)?)
}

fn moebius_equality(ctx: &Ctx) -> Result<f64> {
    let mut rng = ctx.rng(8);
    let mut worst: f64 = 0.0;
    for _ in 0..5 {
        let u = SphereMap::Moebius { map: random_moebius(&mut rng)?, scale: 1.0 };
        worst = worst.max(combined_deficit(&u, Some(&ctx.grid3))?.abs());
    }
    Ok(worst)
}

fn recentering(ctx: &Ctx) -> Result<f64> {
    let mut rng = ctx.rng(9);
    let mut worst: f64 = 0.0;
    for _ in 0..3 {
        let u = SphereMap::Moebius { map: random_moebius(&mut rng)?, scale: 1.0 };
        worst = worst.max(recenter(&u, Some(&ctx.grid3))?.1.residual);
    }
    Ok(worst)
}

fn gauge(ctx: &Ctx) -> Result<f64> {
    let mut rng = ctx.rng(10);
    let mut worst: f64 = 0.0;
    for _ in 0..3 {
        let h = unit_energy(&random::h_field(&mut rng, 3, 3)?);
        let u = SphereMap::Poly(VecPoly::identity(3).add(&h.scale(0.05)));
        let (phi, rep) = gauge_fix(&u, Some(&ctx.grid3))?;
        let v = SphereMap::Sampled(compose_sample(&u, &phi, &ctx.grid3)?);
        let (skew, div) = kernel_moments(&v, None)?.residuals();
        worst = worst.max(rep.residual).max(skew).max(div);
    }
    Ok(worst)
}

fn moebius_fit(ctx: &Ctx) -> Result<f64> {
    let u = SphereMap::Moebius { map: MoebiusMap::dilation(&[0.0, 0.6, 0.8], 2.0)?, scale: 3.0 };
    let fit = nearest_moebius(&u, Some(&ctx.grid3))?;
    Ok(fit.value.max((fit.scale - 3.0).abs()))
}

const CHECKS: &[(&str, &str, Kind, CheckFn)] = &[
    ("quadrature", "grid_exactness", Kind::Exact, quadrature_exactness),
    ("harmonic_basis", "orthonormality", Kind::Exact, basis_orthonormality),
    ("operator_a", "spectrum_clusters", Kind::Exact, spectrum_clusters),
    ("forms", "constant_ratios", Kind::Exact, constant_ratios),
    ("forms", "sharp_constant_n3", Kind::Exact, sharp_constant),
    ("forms", "korn_identity", Kind::Exact, korn),
    ("forms", "conformal_isoperimetric_split", Kind::Exact, form_split),
    ("deficits", "bulk_surface", Kind::Exact, bulk_surface),
    ("deficits", "volume_expansion", Kind::Exact, volume_expansion),
    ("deficits", "identity_zero", Kind::Exact, identity_deficits),
    ("deficits", "wente_chain", Kind::Exact, wente_chain),
    ("deficits", "sequential_parallel_agree", Kind::Exact, mode_agreement),
    ("experiments", "flip_closed_form", Kind::Exact, flip_closed_forms),
    ("moebius", "equality_case", Kind::Quadrature, moebius_equality),
    ("moebius", "recenter", Kind::Solver, recentering),
    ("moebius", "gauge_fix", Kind::Solver, gauge),
    ("moebius", "nearest_moebius", Kind::Quadrature, moebius_fit),
];

/// Runs every check; solver errors count as failures.
pub fn run(cfg: &Config) -> Result<Report> {
    let start = Instant::now();
    let grid3 = Arc::new(build_sphere_grid(3, cfg.resolution.get(3)?)?);
    let ctx = Ctx { cfg: cfg.clone(), grid3 };
    let mut cases = Vec::with_capacity(CHECKS.len());
    for &(class, name, kind, check) in CHECKS {
        let tolerance = match kind {
            Kind::Exact => cfg.tolerances.exact,
            Kind::Quadrature => cfg.tolerances.quadrature,
            Kind::Solver => cfg.tolerances.solver,
        };
        let t = Instant::now();
        let (residual, failure) = match check(&ctx) {
            Ok(r) if r <= tolerance => (r, None),
            Ok(r) => (r, Some(Failure { message: format!("residual {r:e} exceeds {kind:?} tolerance {tolerance:e}") })),
            Err(e) => (f64::NAN, Some(Failure { message: format!("{e:#}") })),
        };
        cases.push(TestCase {
            name: name.into(),
            classname: class.into(),
            kind,
            residual,
            tolerance,
            time: t.elapsed().as_secs_f64(),
            failure,
        });
    }
    let failures = cases.iter().filter(|c| c.failure.is_some()).count();
    Ok(Report {
        testsuite: TestSuite {
            name: "verify".into(),
            tests: cases.len(),
            failures,
            time: start.elapsed().as_secs_f64(),
            testcases: cases,
        },
    })
}
