//! Möbius transformations `O∘φ_{ξ,λ}` of `S^{n-1}`, infinitesimal Möbius
//! fields, recentering, gauge fixing and nearest rotation / Möbius fits.

use std::sync::Arc;

use argmin::core::{CostFunction, Executor, State};
use argmin::solver::neldermead::NelderMead;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harmonic_basis::{SampledMap, SphereMap};
use crate::operator_a::kernel_moments;
use crate::par::{self, Mode};
use crate::poly::{CompiledMap, Poly, VecPoly};
use crate::quadrature::{default_grid, SphereGrid};

/// `x ↦ O φ_{ξ,λ}(x)` with
/// `φ_{ξ,λ}(x) = (-λ²(1-⟨x,ξ⟩)ξ + 2λ(x-⟨x,ξ⟩ξ) + (1+⟨x,ξ⟩)ξ) / (λ²(1-⟨x,ξ⟩) + 1+⟨x,ξ⟩)`.
#[derive(Clone, Debug, PartialEq)]
pub struct MoebiusMap {
    o: DMatrix<f64>,
    xi: DVector<f64>,
    lambda: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MoebiusJson {
    pub n: usize,
    #[serde(rename = "O")]
    pub o: Vec<Vec<f64>>,
    pub xi: Vec<f64>,
    pub lambda: f64,
}

impl MoebiusMap {
    pub fn new(o: DMatrix<f64>, xi: DVector<f64>, lambda: f64) -> Result<Self> {
        let n = xi.len();
        if !(2..=crate::poly::MAX_N).contains(&n) {
            return Err(Error::UnsupportedDimension(n));
        }
        if o.nrows() != n || o.ncols() != n {
            return Err(Error::DimensionMismatch(format!("O must be {n}×{n}")));
        }
        if (o.transpose() * &o - DMatrix::identity(n, n)).amax() > 1e-10 {
            return Err(Error::InvalidParameter("O is not orthogonal".into()));
        }
        let r = xi.norm();
        if (r - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidParameter(format!("ξ must be a unit vector, |ξ| = {r}")));
        }
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidParameter(format!("λ must be positive, got {lambda}")));
        }
        Ok(MoebiusMap { o, xi: xi / r, lambda })
    }

    pub fn identity(n: usize) -> Self {
        let mut xi = DVector::zeros(n);
        xi[n - 1] = 1.0;
        MoebiusMap { o: DMatrix::identity(n, n), xi, lambda: 1.0 }
    }

    /// `φ_{ξ,λ}` with `O = I`.
    pub fn dilation(xi: &[f64], lambda: f64) -> Result<Self> {
        let n = xi.len();
        Self::new(DMatrix::identity(n, n), DVector::from_column_slice(xi), lambda)
    }

    pub fn rotation(o: DMatrix<f64>) -> Result<Self> {
        let n = o.nrows();
        let mut xi = DVector::zeros(n);
        xi[n - 1] = 1.0;
        Self::new(o, xi, 1.0)
    }

    pub fn n(&self) -> usize {
        self.xi.len()
    }

    pub fn o(&self) -> &DMatrix<f64> {
        &self.o
    }

    pub fn xi(&self) -> &DVector<f64> {
        &self.xi
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Same dilation part with the rotation replaced by `o`.
    pub fn with_rotation(&self, o: DMatrix<f64>) -> Result<Self> {
        Self::new(o, self.xi.clone(), self.lambda)
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n() {
            return Err(Error::LengthMismatch { expected: self.n(), got: x.len() });
        }
        Ok(())
    }

    fn parts(&self, x: &[f64]) -> Result<(DVector<f64>, f64, f64)> {
        self.check_point(x)?;
        let x = DVector::from_column_slice(x);
        let c = x.dot(&self.xi);
        let l = self.lambda;
        let den = l * l * (1.0 - c) + 1.0 + c;
        if den <= 1e-14 {
            return Err(Error::InvalidParameter("Möbius denominator vanishes (point off the sphere)".into()));
        }
        let num = &self.xi * ((1.0 - l * l) + (1.0 - l) * (1.0 - l) * c) + &x * (2.0 * l);
        Ok((num, den, c))
    }

    /// `φ_{ξ,λ}(x)` without the rotation.
    pub fn apply_dilation(&self, x: &[f64]) -> Result<DVector<f64>> {
        let (num, den, _) = self.parts(x)?;
        Ok(num / den)
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        let p = self.apply_dilation(x)?;
        Ok((&self.o * p).iter().copied().collect())
    }

    /// Value and ambient Jacobian of the closed formula (as a map on `R^n`).
    pub fn value_and_jacobian(&self, x: &[f64]) -> Result<(Vec<f64>, DMatrix<f64>)> {
        let (num, den, _) = self.parts(x)?;
        let l = self.lambda;
        let phi = &num / den;
        let n = self.n();
        let dn = &self.xi * self.xi.transpose() * ((1.0 - l) * (1.0 - l)) + DMatrix::identity(n, n) * (2.0 * l);
        let dd = self.xi.transpose() * (1.0 - l * l);
        let g = (dn - &phi * dd) / den;
        Ok(((&self.o * phi).iter().copied().collect(), &self.o * g))
    }

    /// Tangential gradient `∇φ(x)(I - xxᵀ)`.
    pub fn tangential_gradient(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let (_, g) = self.value_and_jacobian(x)?;
        let xv = DVector::from_column_slice(x);
        Ok(&g - (&g * &xv) * xv.transpose())
    }

    /// `(O φ_{ξ,λ})⁻¹ = φ_{ξ,1/λ} ∘ Oᵀ = Oᵀ φ_{Oξ,1/λ}`.
    pub fn inverse(&self) -> Self {
        MoebiusMap { o: self.o.transpose(), xi: &self.o * &self.xi, lambda: 1.0 / self.lambda }
    }

    pub fn to_json(&self) -> MoebiusJson {
        let n = self.n();
        MoebiusJson {
            n,
            o: (0..n).map(|i| self.o.row(i).iter().copied().collect()).collect(),
            xi: self.xi.iter().copied().collect(),
            lambda: self.lambda,
        }
    }

    pub fn from_json(j: MoebiusJson) -> Result<Self> {
        if j.o.len() != j.n || j.o.iter().any(|r| r.len() != j.n) || j.xi.len() != j.n {
            return Err(Error::DimensionMismatch("Möbius JSON shapes".into()));
        }
        let o = DMatrix::from_fn(j.n, j.n, |i, k| j.o[i][k]);
        Self::new(o, DVector::from_vec(j.xi), j.lambda)
    }
}

/// A composition `φ_1 ∘ φ_2 ∘ …` evaluated right to left.
#[derive(Clone, Debug)]
pub struct MoebiusChain {
    pub maps: Vec<MoebiusMap>,
}

impl MoebiusChain {
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut y = x.to_vec();
        for m in self.maps.iter().rev() {
            y = m.apply(&y)?;
        }
        Ok(y)
    }
}

/// `a ∘ b`.
pub fn compose(a: &MoebiusMap, b: &MoebiusMap) -> MoebiusChain {
    MoebiusChain { maps: vec![a.clone(), b.clone()] }
}

/// Infinitesimal Möbius field `Y(x) = Sx + μ(⟨x,ξ⟩x - ξ)`.
#[derive(Clone, Debug, PartialEq)]
pub struct InfMoebius {
    pub s: DMatrix<f64>,
    pub mu: f64,
    pub xi: DVector<f64>,
}

impl InfMoebius {
    pub fn new(s: DMatrix<f64>, mu: f64, xi: DVector<f64>) -> Result<Self> {
        let n = xi.len();
        if s.nrows() != n || s.ncols() != n {
            return Err(Error::DimensionMismatch(format!("S must be {n}×{n}")));
        }
        if (&s + s.transpose()).amax() > 1e-12 {
            return Err(Error::InvalidParameter("S is not skew".into()));
        }
        if (xi.norm() - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidParameter("ξ must be a unit vector".into()));
        }
        Ok(InfMoebius { s, mu, xi })
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let xv = DVector::from_column_slice(x);
        let c = xv.dot(&self.xi);
        let y = &self.s * &xv + (&xv * c - &self.xi) * self.mu;
        y.iter().copied().collect()
    }

    /// The field as a polynomial map.
    pub fn to_vecpoly(&self) -> VecPoly {
        let n = self.xi.len();
        let mut w = VecPoly::linear(&self.s);
        w.axpy(-self.mu, &VecPoly::constant(n, self.xi.as_slice()));
        let mut xi_x = Poly::zero(n);
        for j in 0..n {
            xi_x.axpy(self.xi[j], &Poly::var(n, j));
        }
        w.axpy(self.mu, &VecPoly::times_x(&xi_x));
        w
    }
}

/// Skew matrix with upper-triangular entries `a` in row-major order.
pub fn skew_from(n: usize, a: &[f64]) -> DMatrix<f64> {
    let mut s = DMatrix::zeros(n, n);
    let mut k = 0;
    for i in 0..n {
        for j in i + 1..n {
            s[(i, j)] = a[k];
            s[(j, i)] = -a[k];
            k += 1;
        }
    }
    s
}

fn skew_entries(m: &DMatrix<f64>) -> Vec<f64> {
    let n = m.nrows();
    let mut out = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            out.push(0.5 * (m[(i, j)] - m[(j, i)]));
        }
    }
    out
}

/// `φ_{ξ,λ}` in the chart `b = (log λ) ξ`; `b = 0` is the identity.
pub fn dilation_from_chart(b: &[f64]) -> Result<MoebiusMap> {
    let n = b.len();
    let r = b.iter().map(|c| c * c).sum::<f64>().sqrt();
    if r < 1e-300 {
        return Ok(MoebiusMap::identity(n));
    }
    let xi: Vec<f64> = b.iter().map(|c| c / r).collect();
    MoebiusMap::dilation(&xi, r.exp())
}

/// `exp(S(a)) ∘ φ_b` for the chart `(a, b) ∈ R^{n(n-1)/2} × R^n`.
pub fn map_from_chart(n: usize, p: &[f64]) -> Result<MoebiusMap> {
    let ns = n * (n - 1) / 2;
    if p.len() != ns + n {
        return Err(Error::LengthMismatch { expected: ns + n, got: p.len() });
    }
    let o = skew_from(n, &p[..ns]).exp();
    dilation_from_chart(&p[ns..])?.with_rotation(o)
}

/// Samples `u ∘ φ` on `grid`, with ambient Jacobians `∇u(φ(x)) ∇φ(x)`.
pub fn compose_sample(u: &SphereMap, phi: &MoebiusMap, grid: &Arc<SphereGrid>) -> Result<SampledMap> {
    if u.n() != phi.n() || grid.n != phi.n() {
        return Err(Error::DimensionMismatch("map, Möbius map and grid must share n".into()));
    }
    let compiled = u.as_poly().map(CompiledMap::new);
    let pairs = par::map_slice(Mode::default(), &grid.nodes, |x| -> Result<(Vec<f64>, DMatrix<f64>)> {
        let (y, jp) = phi.value_and_jacobian(x)?;
        let (v, g) = match &compiled {
            Some(c) => c.value_and_jacobian(&y),
            None => u.eval(&y)?,
        };
        Ok((v, g * jp))
    });
    let mut values = Vec::with_capacity(grid.len());
    let mut grads = Vec::with_capacity(grid.len());
    for r in pairs {
        let (v, g) = r?;
        values.push(v);
        grads.push(g);
    }
    SampledMap::new(grid.clone(), values, grads)
}

/// Outcome of a damped Newton solve.
#[derive(Clone, Debug, Serialize)]
pub struct NewtonReport {
    pub params: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

const NEWTON_MAX_ITER: usize = 40;
const FD_STEP: f64 = 1e-6;

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|c| c * c).sum::<f64>().sqrt()
}

/// Damped Newton with a central finite-difference Jacobian; halves the step
/// until the residual norm decreases.
pub fn damped_newton<F>(f: F, x0: &[f64], tol: f64) -> Result<NewtonReport>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let d = x0.len();
    let mut x = x0.to_vec();
    let mut r = f(&x)?;
    let mut rn = norm(&r);
    for it in 0..NEWTON_MAX_ITER {
        if rn <= tol {
            return Ok(NewtonReport { params: x, residual: rn, iterations: it, converged: true });
        }
        let m = r.len();
        let mut jac = DMatrix::zeros(m, d);
        for j in 0..d {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[j] += FD_STEP;
            xm[j] -= FD_STEP;
            let (fp, fm) = (f(&xp)?, f(&xm)?);
            for i in 0..m {
                jac[(i, j)] = (fp[i] - fm[i]) / (2.0 * FD_STEP);
            }
        }
        let rhs = DVector::from_column_slice(&r);
        let step = jac
            .clone()
            .svd(true, true)
            .solve(&rhs, 1e-13)
            .map_err(|e| Error::NonConvergence(format!("singular Newton system: {e}")))?;
        let mut t = 1.0;
        let mut accepted = false;
        while t > 1e-6 {
            let xn: Vec<f64> = x.iter().zip(step.iter()).map(|(a, s)| a - t * s).collect();
            if let Ok(rn_new) = f(&xn) {
                let nn = norm(&rn_new);
                if nn < rn {
                    x = xn;
                    r = rn_new;
                    rn = nn;
                    accepted = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !accepted {
            return Ok(NewtonReport { params: x, residual: rn, iterations: it + 1, converged: false });
        }
    }
    Ok(NewtonReport { params: x, residual: rn, iterations: NEWTON_MAX_ITER, converged: rn <= tol })
}

fn grid_for(u: &SphereMap, grid: Option<&Arc<SphereGrid>>) -> Result<Arc<SphereGrid>> {
    match grid {
        Some(g) => Ok(g.clone()),
        None => default_grid(u.n()),
    }
}

fn require_evaluable(u: &SphereMap) -> Result<()> {
    if matches!(u, SphereMap::Sampled(_)) {
        return Err(Error::InvalidParameter("composition needs a map that can be evaluated off the grid".into()));
    }
    Ok(())
}

/// Result of recentering a degree ±1 map `S^{n-1} → S^{n-1}`.
#[derive(Clone, Debug, Serialize)]
pub struct Recentering {
    pub map: MoebiusJson,
    /// `|∮ u∘φ|`.
    pub residual: f64,
    pub used_fallback: bool,
}

/// Finds `φ_{ξ,λ}` with `∮ u∘φ_{ξ,λ} = 0`.
///
/// Damped Newton in the chart `b = (log λ)ξ` from the identity; if that fails,
/// a coarse search over directions and `log λ ∈ {0.5, 1, 2, 3}` picks the
/// starting point of a second Newton run.
pub fn recenter(u: &SphereMap, grid: Option<&Arc<SphereGrid>>) -> Result<(MoebiusMap, Recentering)> {
    require_evaluable(u)?;
    let n = u.n();
    if u.m() != n {
        return Err(Error::DimensionMismatch("recentering needs a map into R^n".into()));
    }
    let grid = grid_for(u, grid)?;
    let s = u.sample(&grid)?;
    if s.values.iter().any(|v| (norm(v) - 1.0).abs() > 1e-6) {
        return Err(Error::InvalidParameter("recentering needs a unit-norm map".into()));
    }
    let mean_after = |b: &[f64]| -> Result<Vec<f64>> { Ok(compose_sample(u, &dilation_from_chart(b)?, &grid)?.mean()) };
    let tol = 1e-11;
    let first = damped_newton(mean_after, &vec![0.0; n], tol)?;
    let mut best = first.clone();
    let mut used_fallback = false;
    if !first.converged {
        used_fallback = true;
        let mut start = vec![0.0; n];
        let mut start_res = f64::INFINITY;
        for dir in search_directions(n) {
            for r in [0.5, 1.0, 2.0, 3.0] {
                let b: Vec<f64> = dir.iter().map(|c| c * r).collect();
                if let Ok(m) = mean_after(&b) {
                    let v = norm(&m);
                    if v < start_res {
                        start_res = v;
                        start = b;
                    }
                }
            }
        }
        let second = damped_newton(mean_after, &start, tol)?;
        if second.residual < best.residual {
            best = second;
        }
    }
    if best.residual > 1e-8 {
        let v = crate::deficits::signed_volume(u, Some(&grid)).unwrap_or(f64::NAN);
        return Err(Error::NonConvergence(format!(
            "recentering stalled at |mean| = {:e} (V_n = {v:.6}; degree ±1 is required)",
            best.residual
        )));
    }
    let phi = dilation_from_chart(&best.params)?;
    let rep = Recentering { map: phi.to_json(), residual: best.residual, used_fallback };
    Ok((phi, rep))
}

fn search_directions(n: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    let total = 3usize.pow(n as u32);
    for code in 0..total {
        let mut c = code;
        let v: Vec<f64> = (0..n)
            .map(|_| {
                let d = (c % 3) as f64 - 1.0;
                c /= 3;
                d
            })
            .collect();
        let r = norm(&v);
        if r > 0.0 {
            out.push(v.into_iter().map(|x| x / r).collect());
        }
    }
    out
}

/// `Ψ_u(φ)`: the skew part of `∇(u∘φ)_h(0)` (upper entries) followed by `∮(div (u∘φ)_h) x`.
pub fn psi(u: &SphereMap, phi: &MoebiusMap, grid: Option<&Arc<SphereGrid>>) -> Result<Vec<f64>> {
    require_evaluable(u)?;
    let grid = grid_for(u, grid)?;
    let v = SphereMap::Sampled(compose_sample(u, phi, &grid)?);
    let km = kernel_moments(&v, None)?;
    let mut out = skew_entries(&km.grad_origin);
    out.extend(km.div_moment);
    Ok(out)
}

/// Result of gauge fixing.
#[derive(Clone, Debug, Serialize)]
pub struct GaugeFix {
    pub map: MoebiusJson,
    /// `|Ψ_u(φ)|`.
    pub residual: f64,
    pub iterations: usize,
    /// `(∮|u - x|² + ∮|∇_T u - P_T|²)^{1/2}` before fixing.
    pub initial_distance: f64,
}

/// Finds `φ = O φ_{ξ,λ}` with `Ψ_u(φ) = 0` by damped Newton from the identity.
pub fn gauge_fix(u: &SphereMap, grid: Option<&Arc<SphereGrid>>) -> Result<(MoebiusMap, GaugeFix)> {
    require_evaluable(u)?;
    let n = u.n();
    if u.m() != n {
        return Err(Error::DimensionMismatch("gauge fixing needs a map into R^n".into()));
    }
    let grid = grid_for(u, grid)?;
    let s = u.sample(&grid)?;
    let initial_distance = s
        .integrate(Mode::default(), |x, v, g| {
            let xv = DVector::from_column_slice(x);
            let p = DMatrix::identity(n, n) - &xv * xv.transpose();
            let gt = g * &p - &p;
            v.iter().zip(x).map(|(a, b)| (a - b).powi(2)).sum::<f64>() + gt.norm_squared()
        })
        .sqrt();
    let f = |p: &[f64]| psi(u, &map_from_chart(n, p)?, Some(&grid));
    let rep = damped_newton(f, &vec![0.0; n * (n - 1) / 2 + n], 1e-11)?;
    if rep.residual > 1e-7 {
        return Err(Error::NonConvergence(format!(
            "gauge fixing stalled at |Ψ| = {:e} from W^{{1,2}} distance {initial_distance:.3}; start closer to the identity",
            rep.residual
        )));
    }
    let phi = map_from_chart(n, &rep.params)?;
    let out = GaugeFix { map: phi.to_json(), residual: rep.residual, iterations: rep.iterations, initial_distance };
    Ok((phi, out))
}

/// Optimal rotation for `min_O ∮|∇_T u - O P_T|²`.
#[derive(Clone, Debug)]
pub struct NearestRotation {
    pub o: DMatrix<f64>,
    pub value: f64,
}

/// Closed-form Procrustes fit with `M = ∮ ∇u (I - xxᵀ)`.
pub fn nearest_rotation(u: &SphereMap, grid: Option<&Arc<SphereGrid>>) -> Result<NearestRotation> {
    let n = u.n();
    if u.m() != n {
        return Err(Error::DimensionMismatch("nearest rotation needs a map into R^n".into()));
    }
    let s = crate::deficits::resolve(u, grid)?;
    let sums = par::sum_vec_range(Mode::default(), s.grid.len(), n * n + 1, |i| {
        let t = s.tangential(i);
        let w = s.grid.weights[i];
        let mut v: Vec<f64> = t.iter().map(|c| c * w).collect();
        v.push(w * t.norm_squared());
        v
    });
    let m = DMatrix::from_column_slice(n, n, &sums[..n * n]);
    let energy = sums[n * n];
    let svd = m.svd(true, true);
    let nuclear: f64 = svd.singular_values.iter().sum();
    let (uu, vt) = (svd.u.expect("u requested"), svd.v_t.expect("v requested"));
    let o = uu * vt;
    Ok(NearestRotation { o, value: (energy + (n as f64 - 1.0) - 2.0 * nuclear).max(0.0) })
}

/// `λ_u = ∮⟨u, x⟩`.
pub fn scale_lambda(u: &SphereMap, grid: Option<&Arc<SphereGrid>>) -> Result<f64> {
    if let (SphereMap::Poly(p), None) = (u, grid) {
        return Ok(p.sphere_inner(&VecPoly::identity(p.n())));
    }
    let s = crate::deficits::resolve(u, grid)?;
    Ok(s.integrate(Mode::default(), |x, v, _| x.iter().zip(v).map(|(a, b)| a * b).sum()))
}

/// Fitted Möbius map and scale with the achieved value
/// `∮|(1/λ)∇_T u - ∇_T φ|²`, an upper bound for the minimum over `(φ, λ)`.
#[derive(Clone, Debug)]
pub struct MoebiusFit {
    pub map: MoebiusMap,
    pub scale: f64,
    pub value: f64,
    pub evaluations: usize,
}

struct FitData {
    grid: Arc<SphereGrid>,
    /// Tangential gradients of `u`.
    a: Vec<DMatrix<f64>>,
    a2: f64,
}

impl FitData {
    /// For `φ_b`: the optimal rotation, `1/λ`, and the reduced value
    /// `∮|∇_T φ_b|² - ‖∮ A B_bᵀ‖_*² / ∮|A|²`.
    fn reduced(&self, b: &[f64]) -> Result<(DMatrix<f64>, f64, f64)> {
        let n = self.grid.n;
        let phi = dilation_from_chart(b)?;
        let parts = par::map_range(Mode::default(), self.grid.len(), |i| phi.tangential_gradient(&self.grid.nodes[i]));
        let mut m = DMatrix::zeros(n, n);
        let mut b2 = 0.0;
        for (i, bt) in parts.into_iter().enumerate() {
            let bt = bt?;
            let w = self.grid.weights[i];
            m += &self.a[i] * bt.transpose() * w;
            b2 += w * bt.norm_squared();
        }
        let svd = m.svd(true, true);
        let nuclear: f64 = svd.singular_values.iter().sum();
        let o = svd.u.expect("u requested") * svd.v_t.expect("v requested");
        let t = nuclear / self.a2;
        Ok((o, t, (b2 - nuclear * nuclear / self.a2).max(0.0)))
    }
}

impl CostFunction for FitData {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, b: &Self::Param) -> std::result::Result<f64, argmin::core::Error> {
        self.reduced(b).map(|r| r.2).map_err(|e| argmin::core::Error::msg(e.to_string()))
    }
}

/// Heuristic fit of `u ≈ λ O φ_{ξ,μ}` in the gradient seminorm: rotation and
/// scale in closed form for each dilation, the dilation by a coarse search
/// followed by a Nelder–Mead polish in the chart `b = (log μ)ξ`.
pub fn nearest_moebius(u: &SphereMap, grid: Option<&Arc<SphereGrid>>) -> Result<MoebiusFit> {
    let n = u.n();
    if u.m() != n {
        return Err(Error::DimensionMismatch("Möbius fit needs a map into R^n".into()));
    }
    let v = crate::deficits::signed_volume(u, grid)?;
    if v.abs() <= 1e-10 {
        return Err(Error::Undefined(format!("Möbius fit needs V_n ≠ 0, got {v:e}")));
    }
    let s = crate::deficits::resolve(u, grid)?;
    let a: Vec<DMatrix<f64>> = (0..s.grid.len()).map(|i| s.tangential(i)).collect();
    let a2 = (0..a.len()).map(|i| s.grid.weights[i] * a[i].norm_squared()).sum::<f64>();
    if a2 <= 1e-300 {
        return Err(Error::Undefined("Möbius fit of a constant map".into()));
    }
    let data = FitData { grid: s.grid.clone(), a, a2 };
    let mut starts: Vec<(f64, Vec<f64>)> = Vec::new();
    let mut evaluations = 0;
    let mut candidates = vec![vec![0.0; n]];
    for dir in search_directions(n) {
        for r in [0.35, 0.7, 1.4] {
            candidates.push(dir.iter().map(|c| c * r).collect());
        }
    }
    for b in candidates {
        evaluations += 1;
        if let Ok((_, _, val)) = data.reduced(&b) {
            starts.push((val, b));
        }
    }
    starts.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut best = starts.first().cloned().ok_or_else(|| Error::NonConvergence("no admissible start".into()))?;
    for (_, b0) in starts.iter().take(2) {
        let mut simplex = vec![b0.clone()];
        for j in 0..n {
            let mut p = b0.clone();
            p[j] += 0.1;
            simplex.push(p);
        }
        let solver =
            NelderMead::new(simplex).with_sd_tolerance(1e-15).map_err(|e| Error::NonConvergence(e.to_string()))?;
        let res = Executor::new(FitData { grid: data.grid.clone(), a: data.a.clone(), a2: data.a2 }, solver)
            .configure(|st| st.max_iters(400))
            .run()
            .map_err(|e| Error::NonConvergence(e.to_string()))?;
        let st = res.state();
        evaluations += st.get_func_counts().values().sum::<u64>() as usize;
        if let Some(p) = st.get_best_param() {
            if st.get_best_cost() < best.0 {
                best = (st.get_best_cost(), p.clone());
            }
        }
    }
    let (o, t, value) = data.reduced(&best.1)?;
    let map = dilation_from_chart(&best.1)?.with_rotation(o)?;
    Ok(MoebiusFit { map, scale: 1.0 / t, value, evaluations })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::deficits::{combined_deficit, dirichlet, signed_volume, tangent_frame};
    use crate::operator_a::{eigenspace, kernel_subspace, project_kernel};
    use crate::random;

    fn random_map(rng: &mut random::SeededRng, n: usize, lmin: f64, lmax: f64) -> MoebiusMap {
        let xi = random::unit_vector(rng, n);
        let t: f64 = rand::Rng::random(rng);
        let lambda = (lmin.ln() + t * (lmax.ln() - lmin.ln())).exp();
        MoebiusMap::new(random::rotation(rng, n), DVector::from_vec(xi), lambda).unwrap()
    }

    #[test]
    fn fixed_points_and_identity() {
        let mut rng = random::rng(1);
        let phi = random_map(&mut rng, 3, 0.3, 3.0);
        let xi: Vec<f64> = phi.xi().iter().copied().collect();
        let oxi = phi.o() * phi.xi();
        let y = phi.apply(&xi).unwrap();
        assert!(y.iter().zip(oxi.iter()).all(|(a, b)| (a - b).abs() < 1e-12));
        let mxi: Vec<f64> = xi.iter().map(|c| -c).collect();
        let y = phi.apply(&mxi).unwrap();
        assert!(y.iter().zip(oxi.iter()).all(|(a, b)| (a + b).abs() < 1e-12));
        let id = MoebiusMap::dilation(&xi, 1.0).unwrap();
        for _ in 0..50 {
            let x = random::unit_vector(&mut rng, 3);
            let y = id.apply(&x).unwrap();
            assert!(x.iter().zip(&y).all(|(a, b)| (a - b).abs() < 1e-12));
            let z = phi.apply(&x).unwrap();
            assert!((norm(&z) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn inverse_round_trip() {
        let mut rng = random::rng(2);
        for n in [2, 3, 4] {
            let phi = random_map(&mut rng, n, 0.3, 3.0);
            let inv = phi.inverse();
            for _ in 0..50 {
                let x = random::unit_vector(&mut rng, n);
                let back = inv.apply(&phi.apply(&x).unwrap()).unwrap();
                assert!(x.iter().zip(&back).all(|(a, b)| (a - b).abs() < 1e-10));
            }
        }
        let d = MoebiusMap::dilation(&[0.0, 0.0, 1.0], 2.0).unwrap();
        assert!((d.inverse().lambda() - 0.5).abs() < 1e-15);
        assert_eq!(MoebiusMap::identity(3).inverse(), MoebiusMap::identity(3));
    }

    #[test]
    fn conformality() {
        let mut rng = random::rng(3);
        for _ in 0..20 {
            let phi = random_map(&mut rng, 3, 0.3, 3.0);
            for _ in 0..20 {
                let x = random::unit_vector(&mut rng, 3);
                let gt = phi.tangential_gradient(&x).unwrap() * tangent_frame(&x);
                let m = gt.transpose() * &gt;
                let c = gt.norm_squared() / 2.0;
                assert!((m - DMatrix::identity(2, 2) * c).amax() < 1e-9);
            }
        }
    }

    #[test]
    fn dirichlet_volume_and_combined_on_moebius() {
        let mut rng = random::rng(4);
        for _ in 0..3 {
            let phi = random_map(&mut rng, 3, 0.5, 2.0);
            let u = SphereMap::Moebius { map: phi.clone(), scale: 1.0 };
            assert!((dirichlet(&u, None).unwrap() - 1.0).abs() < 1e-6);
            assert!(combined_deficit(&u, None).unwrap().abs() < 1e-6);
            assert!((signed_volume(&u, None).unwrap() - 1.0).abs() < 1e-6);
            let flip = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1.0, -1.0]));
            let f = phi.with_rotation(flip * phi.o()).unwrap();
            let v = signed_volume(&SphereMap::Moebius { map: f, scale: 1.0 }, None).unwrap();
            assert!((v + 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn infinitesimal_field_lies_in_kernel_plus_constants() {
        let s = skew_from(3, &[0.3, -0.2, 0.7]);
        let y = InfMoebius::new(s, 0.8, DVector::from_vec(vec![0.6, 0.0, 0.8])).unwrap();
        let x = [0.0, 0.6, 0.8];
        let p = y.to_vecpoly();
        assert!(y.eval(&x).iter().zip(p.eval(&x)).all(|(a, b)| (a - b).abs() < 1e-14));
        let mean = p.sphere_mean();
        let centered = p.sub(&VecPoly::constant(3, &mean));
        let ker = kernel_subspace(3).unwrap();
        let proj = ker.project(&centered);
        let r = centered.sub(&proj);
        let mut rng = random::rng(9);
        for _ in 0..50 {
            let x = random::unit_vector(&mut rng, 3);
            assert!(r.eval(&x).iter().all(|c| c.abs() < 1e-12));
        }
    }

    #[test]
    fn recenter_examples() {
        let (phi, rep) = recenter(&SphereMap::identity(3), None).unwrap();
        assert!((phi.lambda() - 1.0).abs() < 1e-12 && rep.residual < 1e-8);
        let mut rng = random::rng(5);
        let r = random::rotation(&mut rng, 3);
        let (phi, _) = recenter(&SphereMap::Poly(VecPoly::linear(&r)), None).unwrap();
        assert!((phi.lambda() - 1.0).abs() < 1e-9);
        let u = SphereMap::Moebius { map: MoebiusMap::dilation(&[0.0, 0.0, 1.0], 2.0).unwrap(), scale: 1.0 };
        let (phi, rep) = recenter(&u, None).unwrap();
        assert!(rep.residual <= 1e-8);
        let expected = MoebiusMap::dilation(&[0.0, 0.0, 1.0], 0.5).unwrap();
        for _ in 0..20 {
            let x = random::unit_vector(&mut rng, 3);
            let (a, b) = (phi.apply(&x).unwrap(), expected.apply(&x).unwrap());
            assert!(a.iter().zip(&b).all(|(p, q)| (p - q).abs() < 1e-6));
        }
    }

    #[test]
    fn recenter_far_start_uses_search() {
        let xi = [0.48, 0.6, 0.64];
        let u = SphereMap::Moebius { map: MoebiusMap::dilation(&xi, 12.0).unwrap(), scale: 1.0 };
        let (_, rep) = recenter(&u, None).unwrap();
        assert!(rep.residual <= 1e-8);
    }

    #[test]
    fn gauge_fix_examples() {
        let (phi, rep) = gauge_fix(&SphereMap::identity(3), None).unwrap();
        assert_eq!(rep.iterations, 0);
        assert!((phi.lambda() - 1.0).abs() < 1e-12);

        let r = skew_from(3, &[0.05, -0.03, 0.02]).exp();
        let u = SphereMap::Poly(VecPoly::linear(&r));
        let (phi, rep) = gauge_fix(&u, None).unwrap();
        let v = SphereMap::Sampled(compose_sample(&u, &phi, &default_grid(3).unwrap()).unwrap());
        let km = kernel_moments(&v, None).unwrap();
        assert!(km.skew().amax() <= 1e-8, "{rep:?}");
        assert!(
            (phi.o() * &r - DMatrix::<f64>::identity(3, 3)).amax() < 1e-6
                || (&r * phi.o() - DMatrix::<f64>::identity(3, 3)).amax() < 1e-6
        );

        let mut rng = random::rng(6);
        let h = random::unit_in(&mut rng, &eigenspace(3, 3, 1).unwrap()).unwrap();
        let u = SphereMap::Poly(VecPoly::identity(3).add(&h.scale(0.05)));
        let (phi, rep) = gauge_fix(&u, None).unwrap();
        assert!(rep.residual <= 1e-7);
        let v = SphereMap::Sampled(compose_sample(&u, &phi, &default_grid(3).unwrap()).unwrap());
        let pk = project_kernel(&v, None).unwrap();
        let c = pk.projection.sphere_inner(&pk.projection).sqrt();
        assert!(c <= 1e-7, "kernel component {c}");
    }

    #[test]
    fn nearest_rotation_examples() {
        let r = nearest_rotation(&SphereMap::identity(3), None).unwrap();
        assert!(r.value < 1e-12 && (r.o.clone() - DMatrix::identity(3, 3)).amax() < 1e-12);
        let mut rng = random::rng(7);
        let q = random::rotation(&mut rng, 3);
        let r = nearest_rotation(&SphereMap::Poly(VecPoly::linear(&q)), None).unwrap();
        assert!(r.value < 1e-12 && (r.o.clone() - q).amax() < 1e-10);
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1.0, 1.2]));
        let r = nearest_rotation(&SphereMap::Poly(VecPoly::linear(&a)), None).unwrap();
        assert!((r.value - 2.0 / 3.0 * 0.04).abs() < 1e-12);
    }

    #[test]
    fn scale_lambda_bound() {
        let mut rng = random::rng(8);
        for _ in 0..10 {
            let w = random::poly_map(&mut rng, 3, 3, 2, 0.05);
            let u = SphereMap::Poly(VecPoly::identity(3).add(&w));
            let lam = scale_lambda(&u, None).unwrap();
            let theta = crate::harmonic_basis::tangential_energy_poly(&w).sqrt();
            assert!((lam - 1.0).abs() <= theta / 2f64.sqrt() + 1e-12);
        }
    }

    #[test]
    fn nearest_moebius_examples() {
        let fit = nearest_moebius(&SphereMap::identity(3), None).unwrap();
        assert!(fit.value <= 1e-10 && (fit.scale - 1.0).abs() < 1e-8);
        let phi = MoebiusMap::dilation(&[0.48, 0.6, 0.64], 2.0).unwrap();
        let fit = nearest_moebius(&SphereMap::Moebius { map: phi, scale: 3.0 }, None).unwrap();
        assert!(fit.value <= 1e-6, "{}", fit.value);
        assert!((fit.scale - 3.0).abs() < 1e-4, "{}", fit.scale);
    }
}
