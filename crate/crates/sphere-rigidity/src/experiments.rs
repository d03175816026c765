//! Worked examples and sweeps: the flip and stretch families on the circle,
//! short homotheties and the stretched ellipsoid, stability-ratio sweeps,
//! second-order expansion checks of the combined deficit, and log-log rate fits.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::deficits::{self, DeficitReport};
use crate::error::{Error, Result};
use crate::forms;
use crate::harmonic_basis::{tangential_energy_poly, SampledMap, SphereMap};
use crate::moebius;
use crate::par::{self, Mode};
use crate::poly::VecPoly;
use crate::quadrature::{build_segmented_circle, SphereGrid};
use crate::random;

/// Gauss–Legendre nodes per segment of the breakpoint-aligned circle grids.
pub const SEGMENT_NODES: usize = 32;

/// Least-squares line through `(log σ, log value)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual of the fit in log space.
    pub residual: f64,
}

/// Fits `log value = slope · log σ + intercept`.
pub fn rate_fit(pairs: &[(f64, f64)]) -> Result<RateFit> {
    if pairs.len() < 4 {
        return Err(Error::InvalidParameter(format!("rate fit needs at least 4 pairs, got {}", pairs.len())));
    }
    if pairs.iter().any(|&(s, v)| !(s > 0.0 && v > 0.0 && s.is_finite() && v.is_finite())) {
        return Err(Error::InvalidParameter("rate fit needs positive finite pairs".into()));
    }
    let m = pairs.len() as f64;
    let xs: Vec<f64> = pairs.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = pairs.iter().map(|p| p.1.ln()).collect();
    let (mx, my) = (xs.iter().sum::<f64>() / m, ys.iter().sum::<f64>() / m);
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx <= 0.0 {
        return Err(Error::InvalidParameter("rate fit needs distinct σ values".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual = (xs.iter().zip(&ys).map(|(x, y)| (y - slope * x - intercept).powi(2)).sum::<f64>() / m).sqrt();
    Ok(RateFit { slope, intercept, residual })
}

/// `count` geometrically spaced values from `lo` to `hi`.
pub fn geometric(lo: f64, hi: f64, count: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi > lo) || count < 2 {
        return Err(Error::InvalidParameter("geometric range needs 0 < lo < hi and count ≥ 2".into()));
    }
    let r = (hi / lo).ln() / (count - 1) as f64;
    Ok((0..count).map(|i| lo * (r * i as f64).exp()).collect())
}

/// Tangent `(-sin θ, cos θ)` at `x = (cos θ, sin θ)`.
fn ccw_tangent(x: &[f64]) -> [f64; 2] {
    [-x[1], x[0]]
}

fn circle_map(grid: Arc<SphereGrid>, f: impl Fn(f64) -> ([f64; 2], [f64; 2])) -> Result<SampledMap> {
    let mut values = Vec::with_capacity(grid.len());
    let mut grads = Vec::with_capacity(grid.len());
    for x in &grid.nodes {
        let theta = x[1].atan2(x[0]).rem_euclid(2.0 * PI);
        let (u, du) = f(theta);
        let t = ccw_tangent(x);
        values.push(u.to_vec());
        grads.push(DMatrix::from_row_slice(2, 2, &[du[0] * t[0], du[0] * t[1], du[1] * t[0], du[1] * t[1]]));
    }
    SampledMap::new(grid, values, grads)
}

/// The flip map: the identity on the circle except on the arc of angle `σ`
/// centred at `3π/2`, which is reflected across the horizontal line through
/// its endpoints.
pub fn flip_family(sigma: f64) -> Result<SphereMap> {
    if !(sigma > 0.0 && sigma < 2.0 * PI) {
        return Err(Error::InvalidParameter(format!("flip family needs 0 < σ < 2π, got {sigma}")));
    }
    let (a, b) = (1.5 * PI - 0.5 * sigma, 1.5 * PI + 0.5 * sigma);
    let grid = Arc::new(build_segmented_circle(&[a, b], SEGMENT_NODES)?);
    let y0 = a.sin();
    // Segment membership is decided by the node's position in the grid, not by
    // its recomputed angle, so nodes never fall on the wrong side of a break.
    let per = SEGMENT_NODES;
    let s = circle_map(grid.clone(), |theta| {
        let (c, sn) = (theta.cos(), theta.sin());
        ([c, sn], [-sn, c])
    })?;
    let mut values = s.values;
    let mut grads = s.grads;
    for i in 0..per {
        let x = &grid.nodes[i];
        let (c, sn) = (x[0], x[1]);
        values[i] = vec![c, 2.0 * y0 - sn];
        let t = ccw_tangent(x);
        let du = [-sn, -c];
        grads[i] = DMatrix::from_row_slice(2, 2, &[du[0] * t[0], du[0] * t[1], du[1] * t[0], du[1] * t[1]]);
    }
    Ok(SphereMap::Sampled(SampledMap::new(grid, values, grads)?))
}

/// `(σ - sin σ)/π`: the normalized energy and isoperimetric deficit of the flip map.
pub fn flip_closed_form(sigma: f64) -> f64 {
    (sigma - sigma.sin()) / PI
}

/// `f_σ` on `[0, 1]` and its derivative.
pub fn stretch_profile(sigma: f64, t: f64) -> (f64, f64) {
    if t < sigma {
        (t, 1.0)
    } else if t < 2.0 * sigma {
        (2.0 * sigma - t, -1.0)
    } else {
        let k = 1.0 / (1.0 - 2.0 * sigma);
        (-2.0 * sigma * k + k * t, k)
    }
}

/// The back-and-forth cover `θ ↦ 2π f_σ(θ/2π)` of the circle.
pub fn stretch_family(sigma: f64) -> Result<SphereMap> {
    if !(sigma > 0.0 && sigma < 0.5) {
        return Err(Error::InvalidParameter(format!("stretch family needs 0 < σ < 1/2, got {sigma}")));
    }
    let grid = Arc::new(build_segmented_circle(&[0.0, 2.0 * PI * sigma, 4.0 * PI * sigma], SEGMENT_NODES)?);
    let per = SEGMENT_NODES;
    let mut values = Vec::with_capacity(grid.len());
    let mut grads = Vec::with_capacity(grid.len());
    for (i, x) in grid.nodes.iter().enumerate() {
        let theta = x[1].atan2(x[0]).rem_euclid(2.0 * PI);
        let t = theta / (2.0 * PI);
        let seg = i / per;
        let (f, df) = match seg {
            0 => (t, 1.0),
            1 => (2.0 * sigma - t, -1.0),
            _ => stretch_profile(sigma, t.max(2.0 * sigma)),
        };
        let phase = 2.0 * PI * f;
        let (c, s) = (phase.cos(), phase.sin());
        let du = [-s * df, c * df];
        let tt = ccw_tangent(x);
        values.push(vec![c, s]);
        grads.push(DMatrix::from_row_slice(2, 2, &[du[0] * tt[0], du[0] * tt[1], du[1] * tt[0], du[1] * tt[1]]));
    }
    Ok(SphereMap::Sampled(SampledMap::new(grid, values, grads)?))
}

/// `∫₀¹|f_σ' - 1|² = 4σ + 4σ²/(1-2σ)`.
pub fn stretch_energy_closed_form(sigma: f64) -> f64 {
    4.0 * sigma + 4.0 * sigma * sigma / (1.0 - 2.0 * sigma)
}

/// `δ²(u_σ) = 4σ²/(1-2σ)`.
pub fn stretch_delta2_closed_form(sigma: f64) -> f64 {
    4.0 * sigma * sigma / (1.0 - 2.0 * sigma)
}

/// `∮(⟨∂_τ u, J u⟩ - 1)²` for circle maps, `J` the quarter turn: the energy
/// `∫₀¹|f' - 1|²` of a circle map written as `θ ↦ 2π f(θ/2π)`.
pub fn speed_energy(u: &SphereMap) -> Result<f64> {
    if u.n() != 2 || u.m() != 2 {
        return Err(Error::UnsupportedDimension(u.n()));
    }
    let s = deficits::resolve(u, None)?;
    Ok(s.integrate(Mode::default(), |x, v, g| {
        let t = ccw_tangent(x);
        let du = [g[(0, 0)] * t[0] + g[(0, 1)] * t[1], g[(1, 0)] * t[0] + g[(1, 1)] * t[1]];
        let r2 = v[0] * v[0] + v[1] * v[1];
        let speed = (du[1] * v[0] - du[0] * v[1]) / r2;
        (speed - 1.0).powi(2)
    }))
}

/// `∮|∇_T u - P_T|²`.
pub fn energy_to_identity(u: &SphereMap, grid: Option<&Arc<SphereGrid>>) -> Result<f64> {
    if let (SphereMap::Poly(p), None) = (u, grid) {
        return Ok(tangential_energy_poly(&p.sub(&VecPoly::identity(p.n()))));
    }
    let s = deficits::resolve(u, grid)?;
    let n = s.n();
    Ok(s.integrate(Mode::default(), |x, _, g| {
        let xv = DVector::from_column_slice(x);
        let p = DMatrix::identity(n, n) - &xv * xv.transpose();
        (g * &p - p).norm_squared()
    }))
}

/// `(1 - σ)·id` on `S²`, a globally short map.
pub fn short_homothety_family(sigma: f64) -> Result<SphereMap> {
    if !(sigma > 0.0 && sigma < 1.0) {
        return Err(Error::InvalidParameter(format!("short homothety needs 0 < σ < 1, got {sigma}")));
    }
    Ok(SphereMap::Poly(VecPoly::identity(3).scale(1.0 - sigma)))
}

/// `x ↦ diag(1, 1, 1+σ)x` on `S²`.
pub fn ellipsoid_family(sigma: f64) -> Result<SphereMap> {
    if !(0.0..1.0).contains(&sigma) {
        return Err(Error::InvalidParameter(format!("ellipsoid family needs 0 ≤ σ < 1, got {sigma}")));
    }
    let a = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1.0, 1.0 + sigma]));
    Ok(SphereMap::Poly(VecPoly::linear(&a)))
}

/// Closed forms `(D₂, V₃, E₂)` of the ellipsoid family.
pub fn ellipsoid_closed_form(sigma: f64) -> (f64, f64, f64) {
    let d = (2.0 + (1.0 + sigma).powi(2)) / 3.0;
    let v = 1.0 + sigma;
    (d, v, d.powf(1.5) / v - 1.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Flip,
    Stretch,
    ShortHomothety,
    Ellipsoid,
}

impl Family {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "flip" => Ok(Family::Flip),
            "stretch" => Ok(Family::Stretch),
            "short_homothety" | "short-homothety" | "homothety" => Ok(Family::ShortHomothety),
            "ellipsoid" => Ok(Family::Ellipsoid),
            _ => Err(Error::InvalidParameter(format!("unknown family `{s}`"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Family::Flip => "flip",
            Family::Stretch => "stretch",
            Family::ShortHomothety => "short_homothety",
            Family::Ellipsoid => "ellipsoid",
        }
    }

    /// Open parameter range.
    pub fn range(self) -> (f64, f64) {
        match self {
            Family::Flip => (0.0, 2.0 * PI),
            Family::Stretch => (0.0, 0.5),
            Family::ShortHomothety | Family::Ellipsoid => (0.0, 1.0),
        }
    }

    pub fn map(self, sigma: f64) -> Result<SphereMap> {
        match self {
            Family::Flip => flip_family(sigma),
            Family::Stretch => stretch_family(sigma),
            Family::ShortHomothety => short_homothety_family(sigma),
            Family::Ellipsoid => ellipsoid_family(sigma),
        }
    }

    /// The family's reference energy in closed form: `(σ - sin σ)/π` (flip),
    /// `∫|f_σ' - 1|²` (stretch), `∮|∇_T u - P_T|²` (homothety, ellipsoid).
    pub fn reference_energy(self, sigma: f64) -> f64 {
        match self {
            Family::Flip => flip_closed_form(sigma),
            Family::Stretch => stretch_energy_closed_form(sigma),
            Family::ShortHomothety => 2.0 * sigma * sigma,
            Family::Ellipsoid => 2.0 / 3.0 * sigma * sigma,
        }
    }

    /// The theorem the family is a witness for by default.
    pub fn default_theorem(self) -> Theorem {
        match self {
            Family::Ellipsoid => Theorem::Conformal,
            _ => Theorem::Isometric,
        }
    }
}

/// Which stability estimate a sweep tests.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Theorem {
    /// `min_O ∮|∇_T u - O P_T|²` against `δ + ε`.
    Isometric,
    /// `min_{φ,λ} ∮|∇_T u/λ - ∇_T φ|²` against `E_{n-1}`.
    Conformal,
}

impl Theorem {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "isometric" => Ok(Theorem::Isometric),
            "conformal" => Ok(Theorem::Conformal),
            _ => Err(Error::InvalidParameter(format!("unknown theorem `{s}`"))),
        }
    }
}

/// One parameter value of a sweep.
#[derive(Clone, Debug, Serialize)]
pub struct SweepRow {
    pub sigma: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
    /// Quadrature value of the family's reference energy.
    pub energy: f64,
    /// Closed form of the same energy.
    pub energy_closed_form: f64,
    pub report: DeficitReport,
}

#[derive(Clone, Debug, Serialize)]
pub struct NamedFit {
    pub quantity: String,
    pub fit: RateFit,
}

#[derive(Clone, Debug, Serialize)]
pub struct FamilySweep {
    pub family: Family,
    pub theorem: Theorem,
    pub rows: Vec<SweepRow>,
    /// Log-log slopes of every quantity that exceeds `1e-12` at all σ.
    pub slopes: Vec<NamedFit>,
    pub max_ratio: f64,
    /// `max ratio / min ratio`.
    pub ratio_spread: f64,
}

impl FamilySweep {
    pub fn slope(&self, quantity: &str) -> Option<RateFit> {
        self.slopes.iter().find(|s| s.quantity == quantity).map(|s| s.fit)
    }

    /// CSV with columns `sigma,lhs,delta,epsilon,E,ratio,energy`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("sigma,lhs,delta,epsilon,E,ratio,energy\n");
        for r in &self.rows {
            let e = r.report.combined.map(|v| format!("{v:.12e}")).unwrap_or_else(|| "undefined".into());
            out.push_str(&format!(
                "{:.12e},{:.12e},{:.12e},{:.12e},{},{:.12e},{:.12e}\n",
                r.sigma, r.lhs, r.report.delta, r.report.epsilon, e, r.ratio, r.energy
            ));
        }
        out
    }
}

fn measure_row(family: Family, theorem: Theorem, sigma: f64) -> Result<SweepRow> {
    let u = family.map(sigma)?;
    let report = deficits::deficit_report(&u, None)?;
    let energy = match family {
        Family::Stretch => speed_energy(&u)?,
        _ => energy_to_identity(&u, None)?,
    };
    let (lhs, rhs) = match theorem {
        Theorem::Isometric => (moebius::nearest_rotation(&u, None)?.value, report.delta + report.epsilon),
        Theorem::Conformal => {
            let e = report.combined.ok_or_else(|| Error::Undefined("combined deficit with V = 0".into()))?;
            (moebius::nearest_moebius(&u, None)?.value, e)
        }
    };
    if rhs <= 0.0 {
        return Err(Error::Undefined(format!("right-hand side vanishes at σ = {sigma}")));
    }
    Ok(SweepRow {
        sigma,
        lhs,
        rhs,
        ratio: lhs / rhs,
        energy,
        energy_closed_form: family.reference_energy(sigma),
        report,
    })
}

/// Measures both sides of the chosen stability estimate along a family.
pub fn stability_sweep(family: Family, sigmas: &[f64], theorem: Theorem) -> Result<FamilySweep> {
    let (lo, hi) = family.range();
    if sigmas.is_empty() || sigmas.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter("σ values must be nonempty and strictly increasing".into()));
    }
    if sigmas.iter().any(|&s| !(s > lo && s < hi)) {
        return Err(Error::InvalidParameter(format!("σ must lie in ({lo}, {hi}) for the {} family", family.name())));
    }
    let rows: Vec<SweepRow> = par::map_slice(Mode::default(), sigmas, |&s| measure_row(family, theorem, s))
        .into_iter()
        .collect::<Result<_>>()?;
    let mut slopes = Vec::new();
    type Series = (&'static str, fn(&SweepRow) -> f64);
    let series: [Series; 6] = [
        ("lhs", |r| r.lhs),
        ("energy", |r| r.energy),
        ("delta", |r| r.report.delta),
        ("delta2", |r| r.report.delta * r.report.delta),
        ("epsilon", |r| r.report.epsilon),
        ("E", |r| r.report.combined.unwrap_or(0.0)),
    ];
    if rows.len() >= 4 {
        for (name, get) in series {
            let pairs: Vec<(f64, f64)> = rows.iter().map(|r| (r.sigma, get(r))).collect();
            if pairs.iter().all(|p| p.1 > 1e-12) {
                slopes.push(NamedFit { quantity: name.into(), fit: rate_fit(&pairs)? });
            }
        }
    }
    let max_ratio = rows.iter().map(|r| r.ratio).fold(f64::NEG_INFINITY, f64::max);
    let min_ratio = rows.iter().map(|r| r.ratio).fold(f64::INFINITY, f64::min);
    Ok(FamilySweep { family, theorem, rows, slopes, max_ratio, ratio_spread: max_ratio / min_ratio })
}

/// `E_{n-1}(id + t w)` against `t² Q_n(w)` at one `t`.
#[derive(Clone, Debug, Serialize)]
pub struct ExpansionSample {
    pub t: f64,
    pub deficit: f64,
    pub quadratic: f64,
    /// `|E - t² Q|`.
    pub remainder: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ExpansionField {
    /// `Q_n(w)` for the normalized field.
    pub q: f64,
    pub samples: Vec<ExpansionSample>,
    /// `max remainder / t³`.
    pub kappa: f64,
    /// `remainder(t₀) / remainder(t₀/2)` at the largest sampled `t₀`.
    pub halving_factor: f64,
}

/// Normalizes `w` to unit tangential energy with `∮⟨w, x⟩ = 0` and compares
/// `E_{n-1}(id + t w)` with `t² Q_n(w)` at each `t` and at half the largest `t`.
pub fn expansion_check(w: &VecPoly, ts: &[f64], grid: Option<&Arc<SphereGrid>>) -> Result<ExpansionField> {
    let n = w.n();
    if ts.is_empty() {
        return Err(Error::InvalidParameter("no t values".into()));
    }
    let radial = w.sphere_inner(&VecPoly::identity(n));
    let w = w.sub(&VecPoly::identity(n).scale(radial));
    let energy = tangential_energy_poly(&w);
    if energy <= 1e-14 {
        return Err(Error::Undefined("expansion of a field with zero energy".into()));
    }
    let w = w.scale(1.0 / energy.sqrt());
    let q = forms::q_n(&SphereMap::Poly(w.clone()), None)?;
    let deficit_at = |t: f64| -> Result<f64> {
        let u = SphereMap::Poly(VecPoly::identity(n).add(&w.scale(t)));
        deficits::combined_deficit(&u, grid)
    };
    let mut samples = Vec::with_capacity(ts.len());
    for &t in ts {
        let e = deficit_at(t)?;
        samples.push(ExpansionSample { t, deficit: e, quadratic: t * t * q, remainder: (e - t * t * q).abs() });
    }
    let t0 = ts.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let r0 = samples.iter().find(|s| s.t == t0).map(|s| s.remainder).unwrap_or(0.0);
    let r1 = (deficit_at(t0 / 2.0)? - t0 * t0 / 4.0 * q).abs();
    let kappa = samples.iter().map(|s| s.remainder / s.t.powi(3)).fold(0.0, f64::max);
    Ok(ExpansionField { q, samples, kappa, halving_factor: r0 / r1 })
}

#[derive(Clone, Debug, Serialize)]
pub struct ExpansionSuite {
    pub n: usize,
    pub fields: Vec<ExpansionField>,
    pub max_kappa: f64,
    pub min_halving_factor: f64,
}

/// Expansion checks on `count` random fields of `H_n` with degrees `≤ kmax`.
pub fn expansion_suite(n: usize, count: usize, kmax: usize, seed: u64, ts: &[f64]) -> Result<ExpansionSuite> {
    let mut rng = random::rng(seed);
    let mut fields = Vec::with_capacity(count);
    for _ in 0..count {
        let w = random::h_field(&mut rng, n, kmax)?;
        fields.push(expansion_check(&w, ts, None)?);
    }
    let max_kappa = fields.iter().map(|f| f.kappa).fold(0.0, f64::max);
    let min_halving_factor = fields.iter().map(|f| f.halving_factor).fold(f64::INFINITY, f64::min);
    Ok(ExpansionSuite { n, fields, max_kappa, min_halving_factor })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator_a::eigenspace;

    #[test]
    fn rate_fit_exact_power() {
        let pairs: Vec<(f64, f64)> = [0.1, 0.2, 0.4, 0.8].iter().map(|&s: &f64| (s, s.powi(3))).collect();
        let f = rate_fit(&pairs).unwrap();
        assert!((f.slope - 3.0).abs() < 1e-10 && f.residual < 1e-10);
    }

    #[test]
    fn rate_fit_rejects_bad_input() {
        assert!(rate_fit(&[(0.1, 1.0), (0.2, 2.0), (0.3, 3.0)]).is_err());
        assert!(rate_fit(&[(0.1, 1.0), (0.2, 0.0), (0.3, 3.0), (0.4, 1.0)]).is_err());
    }

    #[test]
    fn rate_fit_taylor_examples() {
        let s = geometric(0.05, 0.4, 6).unwrap();
        let pairs: Vec<(f64, f64)> = s.iter().map(|&x| (x, 2.0 * (x - x.sin()))).collect();
        assert!((rate_fit(&pairs).unwrap().slope - 3.0).abs() < 0.05);
        let s = geometric(0.001, 0.01, 6).unwrap();
        let pairs: Vec<(f64, f64)> = s.iter().map(|&x| (x, stretch_delta2_closed_form(x))).collect();
        assert!((rate_fit(&pairs).unwrap().slope - 2.0).abs() < 0.05);
    }

    #[test]
    fn flip_values() {
        for sigma in [0.1, 0.3, 0.5, 1.0] {
            let u = flip_family(sigma).unwrap();
            let r = deficits::deficit_report(&u, None).unwrap();
            let e = energy_to_identity(&u, None).unwrap();
            let c = flip_closed_form(sigma);
            assert!((e - c).abs() < 1e-10, "{sigma}: {e} vs {c}");
            assert!((r.epsilon - c).abs() < 1e-10, "{sigma}: {} vs {c}", r.epsilon);
            assert!(r.delta <= 1e-12);
        }
        assert!((flip_closed_form(0.5) - 6.549_054_465e-3).abs() < 1e-12);
    }

    #[test]
    fn stretch_values() {
        for sigma in [0.02, 0.05, 0.1] {
            let u = stretch_family(sigma).unwrap();
            let r = deficits::deficit_report(&u, None).unwrap();
            assert!((r.delta.powi(2) - stretch_delta2_closed_form(sigma)).abs() < 1e-10);
            assert!(r.epsilon <= 1e-12);
            let e = speed_energy(&u).unwrap();
            assert!((e - stretch_energy_closed_form(sigma)).abs() < 1e-10);
        }
        assert!((stretch_delta2_closed_form(0.1) - 0.05).abs() < 1e-15);
        assert!((stretch_energy_closed_form(0.1) - 0.45).abs() < 1e-15);
    }

    #[test]
    fn ellipsoid_values() {
        for sigma in [0.0, 0.1, 0.3] {
            let u = ellipsoid_family(sigma).unwrap();
            let (d, v, e) = ellipsoid_closed_form(sigma);
            let r = deficits::deficit_report(&u, None).unwrap();
            assert!((r.dirichlet - d).abs() < 1e-12 && (r.volume - v).abs() < 1e-12);
            assert!((r.combined.unwrap() - e).abs() < 1e-12);
        }
        assert!(ellipsoid_closed_form(0.0).2.abs() < 1e-15);
    }

    #[test]
    fn family_ranges() {
        assert!(flip_family(0.0).is_err() && flip_family(7.0).is_err());
        assert!(stretch_family(0.5).is_err());
        assert!(stability_sweep(Family::Stretch, &[0.2, 0.1], Theorem::Isometric).is_err());
    }

    #[test]
    fn expansion_on_eigenspaces() {
        let mut rng = random::rng(3);
        let w = random::unit_in(&mut rng, &eigenspace(3, 3, 3).unwrap()).unwrap();
        let f = expansion_check(&w, &[1e-2, 1e-3], None).unwrap();
        let s = f.samples.last().unwrap();
        assert!((s.deficit / (s.t * s.t) - 0.25).abs() < 0.0125, "{f:?}");
        assert!(f.halving_factor >= 6.0, "{f:?}");

        let w = random::unit_in(&mut rng, &eigenspace(3, 1, 2).unwrap()).unwrap();
        let a = expansion_check(&w, &[1e-2], None).unwrap();
        let b = expansion_check(&w, &[1e-3], None).unwrap();
        let ra = a.samples[0].deficit / 1e-4;
        let rb = b.samples[0].deficit / 1e-6;
        assert!(rb.abs() <= ra.abs() / 10.0 + 1e-12, "{ra} {rb}");
    }
}
