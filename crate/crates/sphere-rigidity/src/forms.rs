//! Quadratic forms on vector fields `w: S^{n-1} → R^n`: the volume form
//! `Q_{V_n}`, `Q_n`, its conformal / isoperimetric / isometric parts, the
//! eigenspace constants, Korn's identity on the sphere and coercivity checks.
//!
//! Every form has an exact path for polynomial fields (moment integration of
//! the polynomial integrand) and a quadrature path for other backings. All
//! integrands are written through the ambient Jacobian `G` of an extension and
//! the point `x`, in combinations that only depend on `G(I - xxᵀ)`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::harmonic_basis::{sample_for, SampledMap, SphereMap};
use crate::operator_a::{apply_a_poly, kernel_subspace};
use crate::par::{self, Mode};
use crate::poly::{Poly, VecPoly};
use crate::quadrature::SphereGrid;

/// Sphere averages of the pointwise quantities every form is built from.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct FieldIntegrals {
    /// `∮|∇_T w|²`.
    pub energy: f64,
    /// `∮(div_S w)²`.
    pub div2: f64,
    /// `Q_{V_n}(w) = (n/2)∮⟨w, A w⟩`.
    pub qv: f64,
    /// `∮|P ∇_T w|²`.
    pub pgp2: f64,
    /// `∮|(P ∇_T w)_sym|²`.
    pub sym2: f64,
}

struct PolyJac {
    g: Vec<Vec<Poly>>,
    gx: Vec<Poly>,
    gtx: Vec<Poly>,
    xgx: Poly,
    div: Poly,
}

impl PolyJac {
    fn new(w: &VecPoly) -> Self {
        let n = w.n();
        let g = w.jacobian();
        let gx: Vec<Poly> = g
            .iter()
            .map(|row| {
                let mut p = Poly::zero(n);
                for (j, gij) in row.iter().enumerate() {
                    p.axpy(1.0, &gij.mul_var(j));
                }
                p
            })
            .collect();
        let gtx: Vec<Poly> = (0..n)
            .map(|j| {
                let mut p = Poly::zero(n);
                for (i, row) in g.iter().enumerate() {
                    p.axpy(1.0, &row[j].mul_var(i));
                }
                p
            })
            .collect();
        let mut xgx = Poly::zero(n);
        for (i, p) in gx.iter().enumerate() {
            xgx.axpy(1.0, &p.mul_var(i));
        }
        let div = w.divergence();
        PolyJac { g, gx, gtx, xgx, div }
    }

    fn div_s(&self) -> Poly {
        &self.div - &self.xgx
    }
}

fn sum_inner(a: &[Poly], b: &[Poly]) -> f64 {
    a.iter().zip(b).map(|(p, q)| p.sphere_inner(q)).sum()
}

fn poly_integrals(w: &VecPoly) -> Result<FieldIntegrals> {
    let n = w.n();
    if w.m() != n {
        return Err(Error::DimensionMismatch(format!("forms need m = n, got m = {}, n = {n}", w.m())));
    }
    let j = PolyJac::new(w);
    let g2: f64 = j.g.iter().map(|r| sum_inner(r, r)).sum();
    let gx2 = sum_inner(&j.gx, &j.gx);
    let gtx2 = sum_inner(&j.gtx, &j.gtx);
    let xgx2 = j.xgx.sphere_inner(&j.xgx);
    let mut trgg = 0.0;
    for a in 0..n {
        for b in 0..n {
            trgg += j.g[a][b].sphere_inner(&j.g[b][a]);
        }
    }
    let sx: Vec<Poly> = j.gx.iter().zip(&j.gtx).map(|(a, b)| (a + b).scale(0.5)).collect();
    let sx2 = sum_inner(&sx, &sx);
    let ds = j.div_s();
    let aw = apply_a_poly(w)?;
    Ok(FieldIntegrals {
        energy: g2 - gx2,
        div2: ds.sphere_inner(&ds),
        qv: 0.5 * n as f64 * w.sphere_inner(&aw),
        pgp2: g2 - gx2 - gtx2 + xgx2,
        sym2: 0.5 * (g2 + trgg) - 2.0 * sx2 + xgx2,
    })
}

/// Pointwise `[|∇_T w|², (div_S w)², ⟨w, A w⟩, |P∇_T w|², |(P∇_T w)_sym|²]`.
fn pointwise(x: &[f64], u: &[f64], g: &DMatrix<f64>) -> [f64; 5] {
    let xv = DVector::from_column_slice(x);
    let uv = DVector::from_column_slice(u);
    let gx = g * &xv;
    let gtx = g.transpose() * &xv;
    let xgx = xv.dot(&gx);
    let g2 = g.norm_squared();
    let tr = g.trace();
    let trgg = (g * g).trace();
    let sx = (&gx + &gtx) * 0.5;
    let ds = tr - xgx;
    let aw = &xv * tr - &gtx;
    [
        g2 - gx.norm_squared(),
        ds * ds,
        uv.dot(&aw),
        g2 - gx.norm_squared() - gtx.norm_squared() + xgx * xgx,
        0.5 * (g2 + trgg) - 2.0 * sx.norm_squared() + xgx * xgx,
    ]
}

fn sampled_integrals(s: &SampledMap, mode: Mode) -> Result<FieldIntegrals> {
    let n = s.n();
    if s.m != n {
        return Err(Error::DimensionMismatch(format!("forms need m = n, got m = {}, n = {n}", s.m)));
    }
    let v = par::sum_vec_range(mode, s.grid.len(), 5, |i| {
        let w = s.grid.weights[i];
        pointwise(&s.grid.nodes[i], &s.values[i], &s.grads[i]).iter().map(|q| q * w).collect()
    });
    Ok(FieldIntegrals { energy: v[0], div2: v[1], qv: 0.5 * n as f64 * v[2], pgp2: v[3], sym2: v[4] })
}

/// The basic integrals of `w`; exact for polynomial fields.
pub fn field_integrals(w: &SphereMap, grid: Option<&Arc<SphereGrid>>) -> Result<FieldIntegrals> {
    field_integrals_with(Mode::default(), w, grid)
}

pub fn field_integrals_with(mode: Mode, w: &SphereMap, grid: Option<&Arc<SphereGrid>>) -> Result<FieldIntegrals> {
    match w {
        SphereMap::Poly(p) => poly_integrals(p),
        _ => sampled_integrals(&sample_for(w, grid)?, mode),
    }
}

fn check_pair(v: &SphereMap, w: &SphereMap) -> Result<()> {
    if v.n() != w.n() || v.m() != w.m() || w.m() != w.n() {
        return Err(Error::DimensionMismatch("Q_V needs two maps S^{n-1} → R^n".into()));
    }
    Ok(())
}

/// Bilinear `Q_{V_n}(v, w) = (n/2)∮⟨v, A(w)⟩`.
pub fn q_vol(v: &SphereMap, w: &SphereMap, grid: Option<&Arc<SphereGrid>>) -> Result<f64> {
    check_pair(v, w)?;
    let n = w.n() as f64;
    match (v, w) {
        (SphereMap::Poly(a), SphereMap::Poly(b)) => Ok(0.5 * n * a.sphere_inner(&apply_a_poly(b)?)),
        _ => {
            let grid = v.native_grid().or_else(|| w.native_grid()).or_else(|| grid.cloned());
            let sv = sample_for(v, grid.as_ref())?;
            let sw = sample_for(w, grid.as_ref())?;
            if sv.grid.len() != sw.grid.len() {
                return Err(Error::LengthMismatch { expected: sv.grid.len(), got: sw.grid.len() });
            }
            let s = par::sum_range(Mode::default(), sw.grid.len(), |i| {
                let x = DVector::from_column_slice(&sw.grid.nodes[i]);
                let g = &sw.grads[i];
                let aw = &x * g.trace() - g.transpose() * &x;
                sw.grid.weights[i] * DVector::from_column_slice(&sv.values[i]).dot(&aw)
            });
            Ok(0.5 * n * s)
        }
    }
}

/// `(n/2)∮(2 div_S w ⟨w,x⟩ - n⟨w,x⟩² + |w|²)`, equal to `Q_{V_n}(w)` after integration by parts.
pub fn q_vol_alt(w: &SphereMap, grid: Option<&Arc<SphereGrid>>) -> Result<f64> {
    let n = w.n();
    if w.m() != n {
        return Err(Error::DimensionMismatch("Q_V needs m = n".into()));
    }
    let nf = n as f64;
    match w {
        SphereMap::Poly(p) => {
            let ds = PolyJac::new(p).div_s();
            let wx = p.dot_x();
            Ok(0.5 * nf * (2.0 * ds.sphere_inner(&wx) - nf * wx.sphere_inner(&wx) + p.sphere_inner(p)))
        }
        _ => {
            let s = sample_for(w, grid)?;
            Ok(0.5
                * nf
                * s.integrate(Mode::default(), |x, u, g| {
                    let xv = DVector::from_column_slice(x);
                    let uv = DVector::from_column_slice(u);
                    let ds = g.trace() - xv.dot(&(g * &xv));
                    let wx = uv.dot(&xv);
                    2.0 * ds * wx - nf * wx * wx + uv.norm_squared()
                }))
        }
    }
}

/// What was removed to bring a field into `H_n` (mean zero, `∮⟨w,x⟩ = 0`).
#[derive(Clone, Debug, Serialize)]
pub struct HnReport {
    pub removed_mean: Vec<f64>,
    pub removed_radial: f64,
}

/// Projects onto `H_n` by subtracting `∮w` and `(∮⟨w,x⟩)x`.
pub fn project_h_n(w: &SphereMap, grid: Option<&Arc<SphereGrid>>) -> Result<(SphereMap, HnReport)> {
    let n = w.n();
    if w.m() != n {
        return Err(Error::DimensionMismatch("H_n needs m = n".into()));
    }
    match w {
        SphereMap::Poly(p) => {
            let mean = p.sphere_mean();
            let radial = p.sphere_inner(&VecPoly::identity(n));
            let out = p.sub(&VecPoly::constant(n, &mean)).sub(&VecPoly::identity(n).scale(radial));
            Ok((SphereMap::Poly(out), HnReport { removed_mean: mean, removed_radial: radial }))
        }
        _ => {
            let s = sample_for(w, grid)?;
            let mean = s.mean();
            let radial = s.integrate(Mode::default(), |x, u, _| u.iter().zip(x).map(|(a, b)| a * b).sum());
            let values = s
                .grid
                .nodes
                .iter()
                .zip(&s.values)
                .map(|(x, u)| (0..n).map(|i| u[i] - mean[i] - radial * x[i]).collect())
                .collect();
            let grads = s.grads.iter().map(|g| g - DMatrix::identity(n, n) * radial).collect();
            let out = SampledMap::new(s.grid.clone(), values, grads)?;
            Ok((SphereMap::Sampled(out), HnReport { removed_mean: mean, removed_radial: radial }))
        }
    }
}

fn nf(n: usize) -> f64 {
    n as f64
}

/// `Q_n` from precomputed integrals of a field in `H_n`.
pub fn q_n_from(n: usize, f: &FieldIntegrals) -> f64 {
    let n = nf(n);
    n / (2.0 * (n - 1.0)) * (f.energy + (n - 3.0) / (n - 1.0) * f.div2) - f.qv
}

pub fn q_conf_from(n: usize, f: &FieldIntegrals) -> f64 {
    let n = nf(n);
    n / (n - 1.0) * f.sym2 - n * f.div2 / ((n - 1.0) * (n - 1.0))
}

pub fn q_isop_from(n: usize, f: &FieldIntegrals) -> f64 {
    let n = nf(n);
    n / (2.0 * (n - 1.0)) * (f.energy + f.div2 - 2.0 * f.sym2) - f.qv
}

/// `Q_n(w) = n/(2(n-1)) ∮(|∇_T w|² + (n-3)/(n-1)(div_S w)²) - Q_{V_n}(w)` on the
/// `H_n` projection of `w`.
pub fn q_n(w: &SphereMap, grid: Option<&Arc<SphereGrid>>) -> Result<f64> {
    let (p, _) = project_h_n(w, grid)?;
    Ok(q_n_from(w.n(), &field_integrals(&p, grid)?))
}

/// `Q_{n,conf}(w) = n/(n-1) ∮|(P∇_T w)_sym - div_S w/(n-1) P|²`.
pub fn q_conf(w: &SphereMap, grid: Option<&Arc<SphereGrid>>) -> Result<f64> {
    Ok(q_conf_from(w.n(), &field_integrals(w, grid)?))
}

/// `Q_{n,isop}(w) = n/(2(n-1)) ∮[|∇_T w|² + (div_S w)² - 2|(P∇_T w)_sym|²] - Q_{V_n}(w)`.
pub fn q_isop(w: &SphereMap, grid: Option<&Arc<SphereGrid>>) -> Result<f64> {
    Ok(q_isop_from(w.n(), &field_integrals(w, grid)?))
}

/// `Q_{n,isom}(w) = ∮|(P∇_T w)_sym|²`.
pub fn q_isom(w: &SphereMap, grid: Option<&Arc<SphereGrid>>) -> Result<f64> {
    Ok(field_integrals(w, grid)?.sym2)
}

/// `α Q_{n,isom} + Q_{n,isop}`.
pub fn q_alpha(w: &SphereMap, alpha: f64, grid: Option<&Arc<SphereGrid>>) -> Result<f64> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidParameter(format!("α must be positive, got {alpha}")));
    }
    let f = field_integrals(w, grid)?;
    Ok(alpha * f.sym2 + q_isop_from(w.n(), &f))
}

/// `|∮|(P∇_T w)_sym|² - ½∮(|P∇_T w|² + (div_S w)²) + (n-2)/n Q_{V_n}(w)|`.
pub fn korn_residual(w: &SphereMap, grid: Option<&Arc<SphereGrid>>) -> Result<f64> {
    let f = field_integrals(w, grid)?;
    let n = nf(w.n());
    Ok((f.sym2 - 0.5 * (f.pgp2 + f.div2) + (n - 2.0) / n * f.qv).abs())
}

/// A field known to lie in `H_{n,k,i}`.
#[derive(Clone, Debug)]
pub struct LabeledField {
    pub k: usize,
    pub i: usize,
    pub field: VecPoly,
}

/// Whether `∮div_S w_a div_S w_b` may be nonzero for `w_a ∈ H_{n,k,i}`, `w_b ∈ H_{n,l,j}`, distinct pairs.
pub fn mixed_term_permitted(k: usize, i: usize, l: usize, j: usize) -> bool {
    let pair = |a: (usize, usize), b: (usize, usize)| {
        (a.1 == 1 && b.1 == 3 && b.0 == a.0 + 2) || (a.1 == 3 && b.1 == 1 && b.0 == a.0 + 2 && a.0 != 2)
    };
    (k, i) != (l, j) && (pair((k, i), (l, j)) || pair((l, j), (k, i)))
}

/// `∮ div_S w_a · div_S w_b` for labeled eigenspace elements.
pub fn mixed_div_term(a: &LabeledField, b: &LabeledField) -> Result<f64> {
    for f in [a, b] {
        if !(1..=3).contains(&f.i) || f.k == 0 {
            return Err(Error::InvalidIndex(format!("(k, i) = ({}, {})", f.k, f.i)));
        }
        if f.field.degree().is_some_and(|d| d != f.k) {
            return Err(Error::InvalidParameter(format!("field of degree {:?} labeled k = {}", f.field.degree(), f.k)));
        }
    }
    let da = PolyJac::new(&a.field).div_s();
    let db = PolyJac::new(&b.field).div_s();
    Ok(da.sphere_inner(&db))
}

/// `Q_n(w) / ∮|∇_T(w - Π_{n,0}w)|²` on the `H_n` projection of `w`.
pub fn coercivity_ratio(w: &SphereMap, grid: Option<&Arc<SphereGrid>>) -> Result<f64> {
    let n = w.n();
    let (p, _) = project_h_n(w, grid)?;
    let q = q_n_from(n, &field_integrals(&p, grid)?);
    let ker = kernel_subspace(n)?;
    let residual = match &p {
        SphereMap::Poly(pp) => {
            let r = pp.sub(&ker.project(pp));
            field_integrals(&SphereMap::Poly(r), None)?.energy
        }
        _ => {
            let s = sample_for(&p, grid)?;
            let c: Vec<f64> = ker
                .basis
                .iter()
                .map(|b| {
                    let cm = crate::poly::CompiledMap::new(b);
                    s.integrate(Mode::default(), |x, u, _| cm.value(x).iter().zip(u).map(|(a, b)| a * b).sum())
                })
                .collect();
            let proj = crate::poly::CompiledMap::new(&ker.combine(&c)?);
            s.integrate(Mode::default(), |x, _, g| {
                let (_, gp) = proj.value_and_jacobian(x);
                let d = g - gp;
                let xv = DVector::from_column_slice(x);
                d.norm_squared() - (&d * &xv).norm_squared()
            })
        }
    };
    if residual < 1e-12 {
        return Err(Error::Undefined(format!("field lies in the kernel of Q_{n} (residual energy {residual:e})")));
    }
    Ok(q / residual)
}

fn r(p: i64, q: i64) -> BigRational {
    BigRational::new(BigInt::from(p), BigInt::from(q))
}

/// Exact constants for `H_{n,k,i}`.
#[derive(Clone, Debug, PartialEq)]
pub struct Constants {
    pub n: usize,
    pub k: usize,
    pub i: usize,
    pub sigma: BigRational,
    /// `Q_{V_n}(w) = c ∮|∇_T w|²`.
    pub c: BigRational,
    /// `∮(div_S w)² = α ∮|∇_T w|²`.
    pub alpha: BigRational,
    /// `Q_n(w) = C ∮|∇_T w|²`.
    pub big_c: BigRational,
    /// `Q_{n,n/(n-1)}(w) = C' ∮|∇_T w|²`.
    pub c_prime: BigRational,
    /// Lower-bound constant after absorbing the mixed divergence terms (rows where defined).
    pub c_tilde: Option<BigRational>,
}

/// Validates `(k, i)`: `i = 3` needs `k ≥ 2`.
pub fn check_row(n: usize, k: usize, i: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::UnsupportedDimension(n));
    }
    if k == 0 || !(1..=3).contains(&i) || (i == 3 && k < 2) {
        return Err(Error::InvalidIndex(format!("(k, i) = ({k}, {i})")));
    }
    Ok(())
}

/// `c_{n,k,i} = nσ/(2λ)`, `α_{n,k,i}`, `C_{n,k,i}`, `C'_{n,k,i}` and `C̃_{n,k,i}`.
pub fn constants(n: usize, k: usize, i: usize) -> Result<Constants> {
    check_row(n, k, i)?;
    let q = |v: i64| BigRational::from_integer(BigInt::from(v));
    let (nn, kk) = (q(n as i64), BigRational::from_integer(BigInt::from(k)));
    let one = BigRational::one();
    let two = q(2);
    let lam = &kk * (&kk + &nn - &two);
    let sigma = match i {
        1 => -kk.clone(),
        2 => one.clone(),
        _ => &kk + &nn - &two,
    };
    let c = &nn * &sigma / (&two * &lam);
    // α = σ²(σ-1)/(λ(2σ-n)) from the divergence identity on eigenspaces.
    let alpha = if sigma.is_one() {
        BigRational::zero()
    } else {
        &sigma * &sigma * (&sigma - &one) / (&lam * (&two * &sigma - &nn))
    };
    let nm1 = &nn - &one;
    let base = &nn / (&two * &nm1);
    let mixed = &nn * (&nn - q(3)) / (&two * &nm1 * &nm1);
    let big_c = &base + &mixed * &alpha - &c;
    let c_prime = &base + &base * &alpha - &c;
    let c_tilde = match i {
        1 => {
            let chi = if k >= 5 { &kk * (&kk + &nn - q(4)) / (&kk - q(4)) } else { BigRational::zero() };
            let corr = &nn * (&nn - q(3)) * (&kk + &one)
                / (q(4) * &nm1 * &nm1 * (&kk + &nn - &two) * (&two * &kk + &nn))
                * (chi + &kk + &nn);
            Some(&big_c - corr)
        }
        2 if k >= 2 => Some(big_c.clone()),
        3 if k >= 3 => {
            let corr = &mixed * (&kk - &two) * (&kk + &nn - q(3)) / (&kk * (&two * &kk + &nn - q(4)));
            Some(&big_c - corr)
        }
        _ => None,
    };
    Ok(Constants { n, k, i, sigma, c, alpha, big_c, c_prime, c_tilde })
}

/// Coefficient `n(n-3)/(n-1)²` of `∮div_S w_a · div_S w_b` in `Q_n(w_a + w_b)` for distinct
/// eigenspace components (twice the coefficient of each diagonal `∮(div_S w)²` term).
pub fn mixed_term_coefficient(n: usize) -> f64 {
    let n = nf(n);
    n * (n - 3.0) / ((n - 1.0) * (n - 1.0))
}

/// Rows `(k, i)` for `1 ≤ k ≤ kmax`, computed in parallel over `k`.
#[derive(Clone, Debug)]
pub struct ConstantTable {
    pub n: usize,
    pub rows: Vec<Constants>,
}

pub fn constant_table(n: usize, kmax: usize) -> Result<ConstantTable> {
    let per_k = par::map_range(Mode::default(), kmax, |k0| {
        let k = k0 + 1;
        (1..=3).filter(|&i| !(i == 3 && k < 2)).map(|i| constants(n, k, i)).collect::<Result<Vec<_>>>()
    });
    let mut rows = Vec::new();
    for r in per_k {
        rows.extend(r?);
    }
    Ok(ConstantTable { n, rows })
}

/// `p/q` rendering of a rational.
pub fn rational_string(q: &BigRational) -> String {
    if q.denom().is_one() {
        q.numer().to_string()
    } else {
        format!("{}/{}", q.numer(), q.denom())
    }
}

pub fn to_f64(q: &BigRational) -> f64 {
    q.to_f64().unwrap_or(f64::NAN)
}

/// Result of minimizing the coercivity constants over `k ≤ kmax`.
#[derive(Clone, Debug)]
pub struct MinConstant {
    pub n: usize,
    pub kmax: usize,
    pub value: BigRational,
    pub argmin: (usize, usize),
    /// `n/(2(n-1))`, the common limit of the rows as `k → ∞`.
    pub limit: BigRational,
    /// Last 20 computed values of each row kind (`i = 1, 2, 3`), as floats.
    pub tail: [Vec<f64>; 3],
    /// Whether each tail is monotone, so rows beyond `kmax` stay on the same side of the limit.
    pub tail_monotone: [bool; 3],
    /// Whether every tail value lies below the limit (then `value` bounds the tail rows from below
    /// only if the rows increase towards the limit).
    pub tail_increasing: [bool; 3],
}

/// `C_n`: for `n = 3` the minimum of `C_{3,k,i}` away from the kernel rows
/// `(1,2), (1,3), (2,3)`; for `n ≥ 4` the minimum of the `C̃` rows.
pub fn min_constant(n: usize, kmax: usize) -> Result<MinConstant> {
    if n < 3 {
        return Err(Error::UnsupportedDimension(n));
    }
    if kmax < 10 {
        return Err(Error::InvalidParameter("min_constant needs kmax ≥ 10".into()));
    }
    let table = constant_table(n, kmax)?;
    let mut best: Option<(BigRational, (usize, usize))> = None;
    let mut tails: [Vec<f64>; 3] = Default::default();
    for row in &table.rows {
        let v = if n == 3 {
            if matches!((row.k, row.i), (1, 2) | (2, 3)) {
                continue;
            }
            row.big_c.clone()
        } else {
            match &row.c_tilde {
                Some(v) => v.clone(),
                None => continue,
            }
        };
        if row.k + 20 > kmax {
            tails[row.i - 1].push(to_f64(&v));
        }
        if best.as_ref().is_none_or(|(b, _)| v < *b) {
            best = Some((v, (row.k, row.i)));
        }
    }
    let (value, argmin) = best.ok_or_else(|| Error::Integrity("empty constant table".into()))?;
    let mono = |t: &Vec<f64>| t.windows(2).all(|w| w[1] >= w[0]) || t.windows(2).all(|w| w[1] <= w[0]);
    let inc = |t: &Vec<f64>| t.windows(2).all(|w| w[1] >= w[0]);
    Ok(MinConstant {
        n,
        kmax,
        value,
        argmin,
        limit: r(n as i64, 2 * (n as i64 - 1)),
        tail_monotone: [mono(&tails[0]), mono(&tails[1]), mono(&tails[2])],
        tail_increasing: [inc(&tails[0]), inc(&tails[1]), inc(&tails[2])],
        tail: tails,
    })
}

/// `|C̃_{n,k,i} - n/(2(n-1))|` at a given `k`, for tail reporting.
pub fn c_tilde_gap(n: usize, k: usize, i: usize) -> Result<BigRational> {
    let c = constants(n, k, i)?;
    let lim = r(n as i64, 2 * (n as i64 - 1));
    Ok(c.c_tilde.map(|v| (v - lim).abs()).unwrap_or_else(BigRational::zero))
}
