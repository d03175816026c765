//! Nonlinear functionals of maps `u: S^{n-1} → R^m`: principal stretches,
//! the isometric deficits, signed volume, Dirichlet energy, generalized
//! perimeter, the combined conformal-isoperimetric deficit and the
//! bulk-surface volume identity.
//!
//! Pointwise quantities are evaluated in a positively oriented orthonormal
//! tangent frame built at each node, so no global frame is needed.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Matrix4, Vector4};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::forms;
use crate::harmonic_basis::{analyze, tangential_energy_poly, SampledMap, SphereMap};
use crate::par::{self, Mode};
use crate::poly::{Poly, VecPoly};
use crate::quadrature::{default_grid, SphereGrid};

/// Columns form an orthonormal basis of `x^⊥` with `det[τ_1 … τ_{n-1}, x] = +1`.
pub fn tangent_frame(x: &[f64]) -> DMatrix<f64> {
    let n = x.len();
    let xv = DVector::from_column_slice(x);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| x[a].abs().total_cmp(&x[b].abs()));
    let mut cols: Vec<DVector<f64>> = Vec::with_capacity(n - 1);
    for &j in &order {
        if cols.len() == n - 1 {
            break;
        }
        let mut v = DVector::zeros(n);
        v[j] = 1.0;
        for _ in 0..2 {
            let c = v.dot(&xv);
            v -= &xv * c;
            for q in &cols {
                let c = v.dot(q);
                v -= q * c;
            }
        }
        let norm = v.norm();
        if norm > 1e-8 {
            cols.push(v / norm);
        }
    }
    let mut t = DMatrix::from_columns(&cols);
    let mut full = t.clone().insert_column(n - 1, 0.0);
    full.set_column(n - 1, &xv);
    if full.determinant() < 0.0 {
        t.column_mut(0).neg_mut();
    }
    t
}

/// Singular values of a tangential gradient matrix, sorted ascending.
pub fn principal_stretches(g: &DMatrix<f64>) -> Vec<f64> {
    let mut s: Vec<f64> = g.clone().svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(f64::total_cmp);
    s
}

/// The `n-1` principal stretches of a map with ambient Jacobian `g` at `x`.
pub fn stretches_at(x: &[f64], g: &DMatrix<f64>) -> Vec<f64> {
    principal_stretches(&(g * tangent_frame(x)))
}

const NQ: usize = 8;

/// Per-node integrands, in the order of the `Sums` fields.
fn node_quantities(n: usize, x: &[f64], u: &[f64], g: &DMatrix<f64>) -> [f64; NQ] {
    let t = tangent_frame(x);
    let gt = g * &t;
    let s = principal_stretches(&gt);
    let smax = s.last().copied().unwrap_or(0.0);
    let grad2: f64 = s.iter().map(|v| v * v).sum();
    let d = n as f64 - 1.0;
    let vol = if u.len() == n {
        let mut m = DMatrix::zeros(n, n);
        m.view_mut((0, 0), (n, n - 1)).copy_from(&gt);
        m.set_column(n - 1, &DVector::from_column_slice(u));
        m.determinant()
    } else {
        0.0
    };
    [
        (smax - 1.0).max(0.0).powi(2),
        (smax - 1.0).powi(2),
        s.iter().map(|v| (v - 1.0).powi(2)).sum(),
        (grad2 / d).powf(d / 2.0),
        s.iter().product(),
        vol,
        grad2,
        if n >= 3 { grad2.powi(n as i32 - 2) } else { 0.0 },
    ]
}

#[derive(Clone, Copy, Debug, Default)]
struct Sums {
    delta2: f64,
    smax2: f64,
    isom2: f64,
    dirichlet: f64,
    perimeter: f64,
    volume: f64,
    energy: f64,
    lp: f64,
}

fn sums(mode: Mode, s: &SampledMap) -> Sums {
    let n = s.n();
    let v = par::sum_vec_range(mode, s.grid.len(), NQ, |i| {
        let w = s.grid.weights[i];
        node_quantities(n, &s.grid.nodes[i], &s.values[i], &s.grads[i]).iter().map(|q| q * w).collect()
    });
    Sums {
        delta2: v[0],
        smax2: v[1],
        isom2: v[2],
        dirichlet: v[3],
        perimeter: v[4],
        volume: v[5],
        energy: v[6],
        lp: v[7],
    }
}

/// Samples `u` on its own grid, on `grid`, or on the default grid.
pub fn resolve(u: &SphereMap, grid: Option<&Arc<SphereGrid>>) -> Result<SampledMap> {
    match (u, grid) {
        (SphereMap::Sampled(s), _) => Ok(s.clone()),
        (_, Some(g)) => u.sample(g),
        (_, None) => u.sample(&default_grid(u.n())?),
    }
}

fn require_square(u: &SphereMap) -> Result<()> {
    if u.m() != u.n() {
        return Err(Error::DimensionMismatch(format!("map must land in R^{}, got R^{}", u.n(), u.m())));
    }
    Ok(())
}

/// `δ(u) = ‖(σ_{n-1} - 1)_+‖_{L²}`.
pub fn isometric_deficit(u: &SphereMap, grid: Option<&Arc<SphereGrid>>) -> Result<f64> {
    Ok(sums(Mode::default(), &resolve(u, grid)?).delta2.max(0.0).sqrt())
}

/// `δ_isom(u) = ‖√(∇_T uᵀ ∇_T u) - I_x‖_{L²}`.
pub fn full_isometric_deficit(u: &SphereMap, grid: Option<&Arc<SphereGrid>>) -> Result<f64> {
    Ok(sums(Mode::default(), &resolve(u, grid)?).isom2.max(0.0).sqrt())
}

/// Exact `V_n` for a polynomial map via moment integration of `det(G + (u - Gx)xᵀ)`.
pub fn signed_volume_poly(u: &VecPoly) -> Result<f64> {
    let n = u.n();
    if u.m() != n {
        return Err(Error::DimensionMismatch(format!("map must land in R^{n}, got R^{}", u.m())));
    }
    let jac = u.jacobian();
    let mut rows = Vec::with_capacity(n);
    for (i, grow) in jac.iter().enumerate() {
        let mut gx = Poly::zero(n);
        for (j, g) in grow.iter().enumerate() {
            gx.axpy(1.0, &g.mul_var(j));
        }
        let mut r = u.comp(i).clone();
        r.axpy(-1.0, &gx);
        let row: Vec<Poly> = (0..n)
            .map(|j| {
                let mut e = grow[j].clone();
                e.axpy(1.0, &r.mul_var(j));
                e
            })
            .collect();
        rows.push(row);
    }
    Ok(poly_det(&rows).sphere_integral())
}

/// Determinant of a square matrix of polynomials by cofactor expansion.
pub fn poly_det(m: &[Vec<Poly>]) -> Poly {
    let n = m.len();
    let nv = m[0][0].n();
    if n == 1 {
        return m[0][0].clone();
    }
    let mut out = Poly::zero(nv);
    for j in 0..n {
        if m[0][j].is_zero() {
            continue;
        }
        let minor: Vec<Vec<Poly>> = m[1..]
            .iter()
            .map(|r| r.iter().enumerate().filter(|&(c, _)| c != j).map(|(_, p)| p.clone()).collect())
            .collect();
        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        out.axpy(sign, &m[0][j].mul(&poly_det(&minor)));
    }
    out
}

/// `V_n(u) = ∮ det[∂_{τ_1}u, …, ∂_{τ_{n-1}}u, u]`; exact for polynomial maps.
pub fn signed_volume(u: &SphereMap, grid: Option<&Arc<SphereGrid>>) -> Result<f64> {
    require_square(u)?;
    if let (SphereMap::Poly(p), None) = (u, grid) {
        return signed_volume_poly(p);
    }
    Ok(sums(Mode::default(), &resolve(u, grid)?).volume)
}

/// `ε(u) = (1 - |V_n(u)|)_+`.
pub fn isoperimetric_deficit(u: &SphereMap, grid: Option<&Arc<SphereGrid>>) -> Result<f64> {
    Ok((1.0 - signed_volume(u, grid)?.abs()).max(0.0))
}

/// `D_{n-1}(u) = ∮(|∇_T u|²/(n-1))^{(n-1)/2}`; exact for polynomial maps when `n = 3`.
pub fn dirichlet(u: &SphereMap, grid: Option<&Arc<SphereGrid>>) -> Result<f64> {
    if let Some(d) = exact_dirichlet(u, grid) {
        return Ok(d);
    }
    Ok(sums(Mode::default(), &resolve(u, grid)?).dirichlet)
}

/// For `n = 3` the Dirichlet integrand `½|∇_T u|²` is polynomial.
fn exact_dirichlet(u: &SphereMap, grid: Option<&Arc<SphereGrid>>) -> Option<f64> {
    match (u, grid) {
        (SphereMap::Poly(p), None) if p.n() == 3 => Some(0.5 * tangential_energy_poly(p)),
        _ => None,
    }
}

/// `P_{n-1}(u) = ∮ √det(∇_T uᵀ ∇_T u)`.
pub fn perimeter(u: &SphereMap, grid: Option<&Arc<SphereGrid>>) -> Result<f64> {
    Ok(sums(Mode::default(), &resolve(u, grid)?).perimeter)
}

/// `E_{n-1}(u) = D_{n-1}(u)^{n/(n-1)} / |V_n(u)| - 1`.
pub fn combined_deficit(u: &SphereMap, grid: Option<&Arc<SphereGrid>>) -> Result<f64> {
    require_square(u)?;
    if let (Some(d), SphereMap::Poly(p)) = (exact_dirichlet(u, grid), u) {
        return combined_from(3, d, signed_volume_poly(p)?);
    }
    let s = sums(Mode::default(), &resolve(u, grid)?);
    combined_from(u.n(), s.dirichlet, s.volume)
}

fn combined_from(n: usize, d: f64, v: f64) -> Result<f64> {
    if v.abs() <= 1e-10 {
        return Err(Error::Undefined(format!("combined deficit needs V_n ≠ 0, got {v:e}")));
    }
    Ok(d.powf(n as f64 / (n as f64 - 1.0)) / v.abs() - 1.0)
}

/// `‖∇_T u‖_{L^{2(n-2)}}` for `n ≥ 3`.
pub fn gradient_norm(u: &SphereMap, grid: Option<&Arc<SphereGrid>>) -> Result<f64> {
    let n = u.n();
    if n < 3 {
        return Err(Error::UnsupportedDimension(n));
    }
    let s = sums(Mode::default(), &resolve(u, grid)?);
    Ok(s.lp.max(0.0).powf(1.0 / (2.0 * (n as f64 - 2.0))))
}

/// All deficits of one map.
#[derive(Clone, Debug, Serialize)]
pub struct DeficitReport {
    pub n: usize,
    pub delta: f64,
    /// `‖σ_{n-1} - 1‖_{L²}`, the middle term of `δ ≤ ‖σ_{n-1} - 1‖ ≤ δ_isom`.
    pub stretch_deviation: f64,
    pub delta_isom: f64,
    pub epsilon: f64,
    /// `∮|∇_T u|²`.
    pub energy: f64,
    pub dirichlet: f64,
    pub perimeter: f64,
    pub volume: f64,
    /// `None` when `|V_n| ≤ 1e-10`.
    pub combined: Option<f64>,
    pub combined_undefined: bool,
    /// `round(V_n)` when the map is unit-norm at every node, else `None`.
    pub degree: Option<i64>,
    /// `‖∇_T u‖_{L^{2(n-2)}}`, reported for `n ≥ 3`.
    pub gradient_norm: Option<f64>,
}

impl DeficitReport {
    /// Slack of the chain `D^{n/(n-1)} ≥ P^{n/(n-1)} ≥ |V|` (both entries ≥ 0 when it holds).
    pub fn wente_slack(&self) -> (f64, f64) {
        let p = self.n as f64 / (self.n as f64 - 1.0);
        (self.dirichlet.powf(p) - self.perimeter.powf(p), self.perimeter.powf(p) - self.volume.abs())
    }
}

/// Computes every deficit in one pass over the grid.
pub fn deficit_report(u: &SphereMap, grid: Option<&Arc<SphereGrid>>) -> Result<DeficitReport> {
    deficit_report_with(Mode::default(), u, grid)
}

pub fn deficit_report_with(mode: Mode, u: &SphereMap, grid: Option<&Arc<SphereGrid>>) -> Result<DeficitReport> {
    require_square(u)?;
    let n = u.n();
    let s = resolve(u, grid)?;
    let q = sums(mode, &s);
    let volume = match (u, grid) {
        (SphereMap::Poly(p), None) => signed_volume_poly(p)?,
        _ => q.volume,
    };
    let dirichlet = exact_dirichlet(u, grid).unwrap_or(q.dirichlet);
    let combined = combined_from(n, dirichlet, volume).ok();
    let unit = s.values.iter().all(|v| (v.iter().map(|c| c * c).sum::<f64>().sqrt() - 1.0).abs() <= 1e-9);
    Ok(DeficitReport {
        n,
        delta: q.delta2.max(0.0).sqrt(),
        stretch_deviation: q.smax2.max(0.0).sqrt(),
        delta_isom: q.isom2.max(0.0).sqrt(),
        epsilon: (1.0 - volume.abs()).max(0.0),
        energy: q.energy,
        dirichlet,
        perimeter: q.perimeter,
        volume,
        combined,
        combined_undefined: combined.is_none(),
        degree: unit.then(|| volume.round() as i64),
        gradient_norm: (n >= 3).then(|| q.lp.max(0.0).powf(1.0 / (2.0 * (n as f64 - 2.0)))),
    })
}

/// `∮ det ∇u_h` over the unit ball, `u_h` the harmonic extension of `u`.
///
/// Polynomial maps are expanded up to their degree; other backings up to `kmax`.
pub fn bulk_volume(u: &SphereMap, kmax: usize, grid: Option<&Arc<SphereGrid>>) -> Result<f64> {
    require_square(u)?;
    let n = u.n();
    let (k, g) = match u {
        SphereMap::Poly(p) => (p.degree().unwrap_or(0), grid.cloned().or_else(|| default_grid(n).ok())),
        _ => (kmax, grid.cloned()),
    };
    let uh = analyze(u, k, g.as_ref())?.synthesize()?;
    let jac = uh.jacobian();
    Ok(poly_det(&jac).ball_integral())
}

/// Cubic fit of `t ↦ V_n(id + t w)` next to the predicted coefficients.
#[derive(Clone, Debug, Serialize)]
pub struct VolumeExpansion {
    /// Fitted `(a_0, a_1, a_2, a_3)`.
    pub fitted: [f64; 4],
    /// `(1, n∮⟨w,x⟩, Q_{V_n}(w), V_n(w))`.
    pub predicted: [f64; 4],
}

impl VolumeExpansion {
    pub fn max_error(&self) -> f64 {
        self.fitted.iter().zip(&self.predicted).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }
}

/// Fits `V_3(id + t w)` at `t ∈ {±1, ±1/2}` and compares with the expansion
/// `1 + 3∮⟨w,x⟩ t + Q_{V_3}(w) t² + V_3(w) t³`.
pub fn volume_expansion_check(w: &SphereMap, grid: Option<&Arc<SphereGrid>>) -> Result<VolumeExpansion> {
    require_square(w)?;
    let n = w.n();
    if n != 3 {
        return Err(Error::UnsupportedDimension(n));
    }
    let ts = [-1.0, -0.5, 0.5, 1.0];
    let s = resolve(w, grid)?;
    let id = SphereMap::identity(n).sample(&s.grid)?;
    let exact = matches!((w, grid), (SphereMap::Poly(_), None));
    let mut rhs = Vector4::zeros();
    let mut vander = Matrix4::zeros();
    for (r, &t) in ts.iter().enumerate() {
        let v = if let (true, SphereMap::Poly(p)) = (exact, w) {
            signed_volume_poly(&VecPoly::identity(n).add(&p.scale(t)))?
        } else {
            let values = id
                .values
                .iter()
                .zip(&s.values)
                .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + t * y).collect())
                .collect();
            let grads = id.grads.iter().zip(&s.grads).map(|(a, b)| a + b * t).collect();
            sums(Mode::default(), &SampledMap::new(s.grid.clone(), values, grads)?).volume
        };
        rhs[r] = v;
        for c in 0..4 {
            vander[(r, c)] = t.powi(c as i32);
        }
    }
    let a = vander.lu().solve(&rhs).ok_or_else(|| Error::Integrity("singular Vandermonde system".into()))?;
    let mean_radial = s.integrate(Mode::default(), |x, u, _| x.iter().zip(u).map(|(a, b)| a * b).sum());
    let qv = forms::q_vol(w, w, grid)?;
    let v3 = signed_volume(w, grid)?;
    Ok(VolumeExpansion { fitted: [a[0], a[1], a[2], a[3]], predicted: [1.0, n as f64 * mean_radial, qv, v3] })
}
