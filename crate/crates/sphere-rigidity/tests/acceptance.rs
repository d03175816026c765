//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use anyhow::{ensure, Context, Result};
use nalgebra::DVector;
use num_rational::BigRational;
use sphere_rigidity::deficits::{bulk_volume, combined_deficit, deficit_report, signed_volume, volume_expansion_check};
use sphere_rigidity::experiments::{
    energy_to_identity, flip_closed_form, flip_family, geometric, rate_fit, speed_energy, stability_sweep,
    stretch_delta2_closed_form, stretch_family, Family,
};
use sphere_rigidity::forms::{
    coercivity_ratio, constant_table, constants, field_integrals, min_constant, mixed_div_term, mixed_term_coefficient,
    mixed_term_permitted, q_alpha, q_conf, q_isop, q_n, q_n_from, to_f64, LabeledField,
};
use sphere_rigidity::harmonic_basis::{tangential_energy_poly, vector_dim, SphereMap};
use sphere_rigidity::moebius::{compose_sample, gauge_fix, nearest_moebius, recenter, MoebiusMap};
use sphere_rigidity::operator_a::{block_spectrum, eigenspace, kernel_moments, sigma};
use sphere_rigidity::poly::VecPoly;
use sphere_rigidity::quadrature::default_grid;
use sphere_rigidity::random::{self, SeededRng};

fn rows(k: usize) -> impl Iterator<Item = usize> {
    (1..=3).filter(move |&i| !(i == 3 && k < 2))
}

fn unit_energy(w: &VecPoly) -> VecPoly {
    w.scale(1.0 / tangential_energy_poly(w).sqrt())
}

fn random_moebius(rng: &mut SeededRng, n: usize, lo: f64, hi: f64) -> Result<MoebiusMap> {
    use rand::Rng;
    let xi = random::unit_vector(rng, n);
    let lambda = (rng.random_range(lo.ln()..hi.ln())).exp();
    let o = random::rotation(rng, n);
    Ok(MoebiusMap::new(o, DVector::from_vec(xi), lambda)?)
}

fn c1_spectrum() -> Result<String> {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for (n, kmax) in [(3, 6), (4, 4)] {
        for k in 1..=kmax {
            let b = block_spectrum(n, k)?;
            ensure!(b.eigenvalues.len() == vector_dim(n, k), "n={n} k={k}: {} eigenvalues", b.eigenvalues.len());
            let targets: Vec<f64> = rows(k).map(|i| sigma(n, k, i)).collect();
            for &ev in &b.eigenvalues {
                let d = targets.iter().map(|t| (ev - t).abs()).fold(f64::INFINITY, f64::min);
                worst = worst.max(d);
                ensure!(d <= 1e-8, "n={n} k={k}: eigenvalue {ev} off by {d:e}");
            }
            let total: usize = rows(k).map(|i| eigenspace(n, k, i).map(|s| s.dim())).sum::<Result<usize, _>>()?;
            ensure!(total == vector_dim(n, k), "n={n} k={k}: eigenspaces span {total} of {}", vector_dim(n, k));
        }
        ensure!(eigenspace(n, 1, 3)?.is_empty(), "H_{{{n},1,3}} nonempty");
        ensure!(eigenspace(n, 1, 2)?.dim() == n * (n - 1) / 2, "dim H_{{{n},1,2}} wrong");
        ensure!(eigenspace(n, 2, 3)?.dim() == n, "dim H_{{{n},2,3}} wrong");
    }
    let t = start.elapsed();
    ensure!(t < Duration::from_secs(60), "runtime {t:?}");
    Ok(format!("max eigenvalue error {worst:.1e}, {:.2}s", t.as_secs_f64()))
}

fn c2_constant_tables() -> Result<String> {
    let mut rng = random::rng(2);
    let mut worst: f64 = 0.0;
    for n in [3usize, 4] {
        let nf = n as f64;
        for k in 1..=6 {
            for i in rows(k) {
                let c = constants(n, k, i)?;
                let expect = [to_f64(&c.c), to_f64(&c.alpha), to_f64(&c.big_c), to_f64(&c.c_prime)];
                if i == 2 {
                    ensure!(c.alpha == BigRational::from_integer(0.into()), "alpha_{{{n},{k},2}} nonzero");
                }
                let space = eigenspace(n, k, i)?;
                for _ in 0..5 {
                    let w = SphereMap::Poly(unit_energy(&random::unit_in(&mut rng, &space)?));
                    let f = field_integrals(&w, None)?;
                    let measured = [f.qv, f.div2, q_n_from(n, &f), q_alpha(&w, nf / (nf - 1.0), None)?];
                    for (m, e) in measured.iter().zip(expect) {
                        let d = (m / f.energy - e).abs();
                        worst = worst.max(d);
                        ensure!(d <= 1e-9, "(n,k,i)=({n},{k},{i}): ratio {m} vs {e}");
                    }
                }
            }
        }
    }
    Ok(format!("max ratio error {worst:.1e}"))
}

fn c3_sharp_constant() -> Result<String> {
    let m = min_constant(3, 200)?;
    ensure!(m.value == BigRational::new(1.into(), 4.into()), "min constant {}", m.value);
    ensure!(m.argmin == (3, 3), "attained at {:?}", m.argmin);
    let mut rng = random::rng(3);
    let mut lowest = f64::INFINITY;
    for _ in 0..50 {
        let w = SphereMap::Poly(random::h_field(&mut rng, 3, 6)?);
        let r = coercivity_ratio(&w, None)?;
        lowest = lowest.min(r);
        ensure!(r >= 0.25 - 1e-8, "coercivity ratio {r}");
    }
    Ok(format!("C_3 = 1/4 at (3,3), lowest sampled ratio {lowest:.6}"))
}

fn c4_higher_dimensions() -> Result<String> {
    for n in [4usize, 5] {
        let table = constant_table(n, 200)?;
        for row in &table.rows {
            if let Some(ct) = &row.c_tilde {
                ensure!(*ct > BigRational::from_integer(0.into()), "C~_{{{n},{},{}}} = {ct}", row.k, row.i);
            }
        }
        let limit = n as f64 / (2.0 * (n as f64 - 1.0));
        for i in 1..=3 {
            let c = constants(n, 1_000_000_000_000_000, i)?;
            let ct = c.c_tilde.context("no C~ at large k")?;
            ensure!((to_f64(&ct) - limit).abs() <= 1e-12, "n={n} i={i}: limit {} vs {limit}", to_f64(&ct));
        }
    }

    let c4 = min_constant(4, 200)?;
    let c4f = to_f64(&c4.value);
    let mut rng = random::rng(4);
    for _ in 0..50 {
        let w = SphereMap::Poly(random::h_field(&mut rng, 4, 6)?);
        let r = coercivity_ratio(&w, None)?;
        ensure!(r >= c4f - 1e-8, "Q_4 ratio {r} below C_4 = {c4f}");
    }

    let coef = mixed_term_coefficient(4);
    let labels: Vec<(usize, usize)> = (1..=6).flat_map(|k| rows(k).map(move |i| (k, i))).collect();
    let mut fields = Vec::new();
    for &(k, i) in &labels {
        let s = eigenspace(4, k, i)?;
        fields.push(LabeledField { k, i, field: random::unit_in(&mut rng, &s)? });
    }
    let (mut permitted, mut permitted_vanishing, mut forbidden) = (0, 0, 0);
    for a in 0..fields.len() {
        for b in a + 1..fields.len() {
            let (fa, fb) = (&fields[a], &fields[b]);
            let m = mixed_div_term(fa, fb)?;
            if mixed_term_permitted(fa.k, fa.i, fb.k, fb.i) {
                permitted += 1;
                let (lo, hi) = if fa.k < fb.k { (fa, fb) } else { (fb, fa) };
                if lo.i == 1 {
                    ensure!(m.abs() > 1e-6, "pair ({},{})x({},{}) vanishes: {m:e}", lo.k, lo.i, hi.k, hi.i);
                } else if m.abs() <= 1e-9 {
                    permitted_vanishing += 1;
                }
                let sum = SphereMap::Poly(fa.field.add(&fb.field));
                let split =
                    q_n(&SphereMap::Poly(fa.field.clone()), None)? + q_n(&SphereMap::Poly(fb.field.clone()), None)?;
                let whole = q_n(&sum, None)?;
                ensure!(
                    (whole - split - coef * m).abs() <= 1e-9,
                    "mixed reconstruction off by {:e}",
                    whole - split - coef * m
                );
            } else {
                forbidden += 1;
                ensure!(m.abs() <= 1e-9, "forbidden pair ({},{})x({},{}) gives {m:e}", fa.k, fa.i, fb.k, fb.i);
            }
        }
    }
    let a = LabeledField { k: 2, i: 3, field: random::unit_in(&mut rng, &eigenspace(4, 2, 3)?)? };
    let b = LabeledField { k: 4, i: 1, field: random::unit_in(&mut rng, &eigenspace(4, 4, 1)?)? };
    let v = mixed_div_term(&a, &b)?;
    ensure!(v.abs() <= 1e-9, "(2,3)x(4,1) term {v:e}");
    Ok(format!("C_4 = {c4f:.6}, {permitted} permitted ({permitted_vanishing} of type (k,3)x(k+2,1) vanish) / {forbidden} forbidden pairs, (2,3)x(4,1) term {v:.1e}"))
}

fn c5_korn() -> Result<String> {
    let mut rng = random::rng(5);
    let mut worst: f64 = 0.0;
    for n in [3usize, 4] {
        for j in 0..50 {
            let w = SphereMap::Poly(random::poly_map(&mut rng, n, n, 1 + j % 4, 1.0));
            let r = sphere_rigidity::forms::korn_residual(&w, None)?;
            worst = worst.max(r);
            ensure!(r <= 1e-10, "n={n}: Korn residual {r:e}");
        }
        for _ in 0..20 {
            let w = SphereMap::Poly(random::h_field(&mut rng, n, 4)?);
            let d = (q_conf(&w, None)? + q_isop(&w, None)? - q_n(&w, None)?).abs();
            ensure!(d <= 1e-9, "n={n}: Q_conf + Q_isop - Q_n = {d:e}");
        }
    }
    Ok(format!("max Korn residual {worst:.1e}"))
}

fn c6_wente() -> Result<String> {
    let mut rng = random::rng(6);
    let mut lowest = f64::INFINITY;
    for n in [3usize, 4] {
        for j in 0..100 {
            let w = random::poly_map(&mut rng, n, n, 1 + j % 3, 0.5);
            let u = SphereMap::Poly(if j % 2 == 0 { VecPoly::identity(n).add(&w) } else { w });
            let r = deficit_report(&u, None)?;
            let (a, b) = r.wente_slack();
            lowest = lowest.min(a).min(b);
            ensure!(a >= -1e-9 && b >= -1e-9, "n={n}: slack ({a:e}, {b:e})");
        }
    }
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let phi = random_moebius(&mut rng, 3, 0.5, 2.0)?;
        let e = combined_deficit(&SphereMap::Moebius { map: phi, scale: 1.0 }, None)?;
        worst = worst.max(e.abs());
        ensure!(e.abs() <= 1e-6, "E_2 of a Möbius map {e:e}");
    }
    Ok(format!("lowest slack {lowest:.1e}, max E_2 on Möbius maps {worst:.1e}"))
}

fn c7_bulk_surface() -> Result<String> {
    let mut rng = random::rng(7);
    let (mut worst_bulk, mut worst_exp): (f64, f64) = (0.0, 0.0);
    for j in 0..20 {
        let u = SphereMap::Poly(random::poly_map(&mut rng, 3, 3, 1 + j % 3, 1.0));
        let d = (bulk_volume(&u, 3, None)? - signed_volume(&u, None)?).abs();
        worst_bulk = worst_bulk.max(d);
        ensure!(d <= 1e-9, "bulk - surface = {d:e}");
    }
    for j in 0..20 {
        let w = SphereMap::Poly(random::poly_map(&mut rng, 3, 3, 1 + j % 3, 1.0));
        let e = volume_expansion_check(&w, None)?.max_error();
        worst_exp = worst_exp.max(e);
        ensure!(e <= 1e-8, "expansion coefficient error {e:e}");
    }
    Ok(format!("bulk-surface {worst_bulk:.1e}, expansion coefficients {worst_exp:.1e}"))
}

fn c8_optimality() -> Result<String> {
    let mut flip = Vec::new();
    for s in [0.1, 0.3, 0.5, 1.0] {
        let u = flip_family(s)?;
        let r = deficit_report(&u, None)?;
        let e = energy_to_identity(&u, None)?;
        let c = flip_closed_form(s);
        ensure!((e - c).abs() <= 1e-10, "flip σ={s}: energy {e} vs {c}");
        ensure!((r.epsilon - c).abs() <= 1e-10, "flip σ={s}: ε {} vs {c}", r.epsilon);
        ensure!(r.delta <= 1e-12, "flip σ={s}: δ {}", r.delta);
        flip.push((s, e));
    }
    let flip_slope = rate_fit(&flip)?.slope;
    ensure!((flip_slope - 3.0).abs() <= 0.05, "flip slope {flip_slope}");

    for s in [0.02, 0.05, 0.1] {
        let r = deficit_report(&stretch_family(s)?, None)?;
        let c = stretch_delta2_closed_form(s);
        ensure!((r.delta * r.delta - c).abs() <= 1e-10, "stretch σ={s}: δ² {} vs {c}", r.delta * r.delta);
        ensure!(r.epsilon <= 1e-12, "stretch σ={s}: ε {}", r.epsilon);
    }
    let mut energy = Vec::new();
    for s in geometric(0.001, 0.016, 5)? {
        energy.push((s, speed_energy(&stretch_family(s)?)?));
    }
    let stretch_slope = rate_fit(&energy)?.slope;
    ensure!((stretch_slope - 1.0).abs() <= 0.05, "stretch energy slope {stretch_slope}");
    Ok(format!("flip slope {flip_slope:.4}, stretch energy slope {stretch_slope:.4}"))
}

fn c9_taylor() -> Result<String> {
    let mut rng = random::rng(9);
    let t = 1e-3;
    let (mut worst_rel, mut min_halving): (f64, f64) = (0.0, f64::INFINITY);
    let deficit = |w: &VecPoly, t: f64| combined_deficit(&SphereMap::Poly(VecPoly::identity(3).add(&w.scale(t))), None);
    for k in 1..=4 {
        for i in rows(k) {
            let s = eigenspace(3, k, i)?;
            let target = to_f64(&constants(3, k, i)?.big_c);
            for _ in 0..2 {
                let w = unit_energy(&random::unit_in(&mut rng, &s)?);
                if target == 0.0 {
                    let (a, b) = (deficit(&w, 10.0 * t)?, deficit(&w, 5.0 * t)?);
                    let h = a / b;
                    min_halving = min_halving.min(h);
                    ensure!(h >= 6.0, "kernel row ({k},{i}): halving factor {h}");
                } else {
                    let r = deficit(&w, t)? / (t * t);
                    let rel = (r / target - 1.0).abs();
                    worst_rel = worst_rel.max(rel);
                    ensure!(rel <= 0.05, "row ({k},{i}): E/t² = {r} vs C = {target}");
                }
            }
        }
    }
    Ok(format!("max relative error {worst_rel:.1e} at t = 1e-3, min kernel halving factor {min_halving:.2}"))
}

fn c10_gauge_and_fit() -> Result<String> {
    let mut rng = random::rng(10);
    let grid = default_grid(3)?;
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let h = random::h_field(&mut rng, 3, 4)?;
        let u = SphereMap::Poly(VecPoly::identity(3).add(&unit_energy(&h).scale(0.05)));
        let (phi, rep) = gauge_fix(&u, None)?;
        ensure!(rep.residual <= 1e-7, "gauge residual {:e}", rep.residual);
        let v = SphereMap::Sampled(compose_sample(&u, &phi, &grid)?);
        let (skew, div) = kernel_moments(&v, None)?.residuals();
        worst = worst.max(rep.residual).max(skew).max(div);
        ensure!(skew <= 1e-7 && div <= 1e-7, "post-gauge residuals ({skew:e}, {div:e})");
    }
    let mut worst_center: f64 = 0.0;
    for _ in 0..10 {
        let phi = random_moebius(&mut rng, 3, 0.3, 3.0)?;
        let (_, rep) = recenter(&SphereMap::Moebius { map: phi, scale: 1.0 }, None)?;
        worst_center = worst_center.max(rep.residual);
        ensure!(rep.residual <= 1e-8, "recenter residual {:e}", rep.residual);
    }
    let mut worst_fit: f64 = 0.0;
    for _ in 0..3 {
        let xi = random::unit_vector(&mut rng, 3);
        let u = SphereMap::Moebius { map: MoebiusMap::dilation(&xi, 2.0)?, scale: 3.0 };
        let fit = nearest_moebius(&u, None)?;
        worst_fit = worst_fit.max(fit.value);
        ensure!(fit.value <= 1e-6, "fit value {:e}", fit.value);
        ensure!((fit.scale - 3.0).abs() <= 1e-4, "fitted scale {}", fit.scale);
    }
    Ok(format!("gauge {worst:.1e}, recenter {worst_center:.1e}, Möbius fit {worst_fit:.1e}"))
}

fn c11_sweeps() -> Result<String> {
    let mut parts = Vec::new();
    for (family, lo, hi) in [
        (Family::Flip, 0.05, 1.0),
        (Family::Stretch, 0.01, 0.2),
        (Family::ShortHomothety, 0.2, 0.7),
        (Family::Ellipsoid, 0.01, 0.3),
    ] {
        let sweep = stability_sweep(family, &geometric(lo, hi, 6)?, family.default_theorem())?;
        ensure!(sweep.max_ratio <= 100.0, "{}: max ratio {}", family.name(), sweep.max_ratio);
        ensure!(sweep.ratio_spread < 10.0, "{}: ratio spread {}", family.name(), sweep.ratio_spread);
        parts.push(format!("{} max {:.3} spread {:.2}", family.name(), sweep.max_ratio, sweep.ratio_spread));
    }
    Ok(parts.join("; "))
}

fn main() -> ExitCode {
    let start = Instant::now();
    type Criterion = (&'static str, fn() -> Result<String>);
    let criteria: [Criterion; 11] = [
        ("1 A-spectrum", c1_spectrum),
        ("2 constant tables", c2_constant_tables),
        ("3 sharp constant n=3", c3_sharp_constant),
        ("4 coercivity n>=4", c4_higher_dimensions),
        ("5 Korn identity", c5_korn),
        ("6 Wente chain and Möbius equality", c6_wente),
        ("7 bulk-surface identity", c7_bulk_surface),
        ("8 optimality examples", c8_optimality),
        ("9 conformal Taylor check", c9_taylor),
        ("10 gauge and fit", c10_gauge_and_fit),
        ("11 stability sweeps", c11_sweeps),
    ];
    let mut passed = 0;
    for (name, run) in criteria {
        let t = Instant::now();
        match run() {
            Ok(msg) => {
                passed += 1;
                println!("PASS {name}: {msg} [{:.1}s]", t.elapsed().as_secs_f64());
            }
            Err(e) => println!("FAIL {name}: {e:#} [{:.1}s]", t.elapsed().as_secs_f64()),
        }
    }
    let total = start.elapsed();
    let in_time = total < Duration::from_secs(600);
    if !in_time {
        println!("FAIL total runtime {:.1}s exceeds 10 min", total.as_secs_f64());
    }
    println!("{passed} of 11 criteria passed in {:.1}s", total.as_secs_f64());
    if passed == 11 && in_time {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
