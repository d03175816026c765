//! Sparse real polynomials in at most four variables, with exact integration
//! over the unit sphere and the unit ball through closed-form moments.

use std::collections::BTreeMap;
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::DMatrix;

use crate::quadrature::{ball_moment, sphere_moment};

/// Largest ambient dimension supported by polynomial-backed data.
pub const MAX_N: usize = 4;

/// Exponent multi-index; entries past the ambient dimension stay zero.
pub type Exp = [u8; MAX_N];

fn exp_add(a: &Exp, b: &Exp) -> Exp {
    let mut c = [0u8; MAX_N];
    for i in 0..MAX_N {
        c[i] = a[i] + b[i];
    }
    c
}

fn exp_u32(e: &Exp, n: usize) -> [u32; MAX_N] {
    let mut out = [0u32; MAX_N];
    for i in 0..n {
        out[i] = e[i] as u32;
    }
    out
}

pub fn exp_degree(e: &Exp) -> usize {
    e.iter().map(|&v| v as usize).sum()
}

/// Normalized sphere moment of a monomial exponent.
pub fn exp_sphere_moment(n: usize, e: &Exp) -> f64 {
    sphere_moment(n, &exp_u32(e, n)[..n])
}

/// Normalized ball moment of a monomial exponent.
pub fn exp_ball_moment(n: usize, e: &Exp) -> f64 {
    ball_moment(n, &exp_u32(e, n)[..n])
}

/// All exponents of total degree `k` in `n` variables, in a fixed order
/// (lexicographically decreasing).
pub fn monomials(n: usize, k: usize) -> Vec<Exp> {
    fn rec(n: usize, i: usize, left: usize, cur: &mut Exp, out: &mut Vec<Exp>) {
        if i == n - 1 {
            cur[i] = left as u8;
            out.push(*cur);
            cur[i] = 0;
            return;
        }
        for v in (0..=left).rev() {
            cur[i] = v as u8;
            rec(n, i + 1, left - v, cur, out);
        }
        cur[i] = 0;
    }
    assert!((1..=MAX_N).contains(&n), "dimension out of range");
    let mut out = Vec::new();
    rec(n, 0, k, &mut [0u8; MAX_N], &mut out);
    out
}

/// Gram matrix `∮ x^a x^b` of a monomial list.
pub fn monomial_gram(n: usize, monos: &[Exp]) -> DMatrix<f64> {
    let m = monos.len();
    DMatrix::from_fn(m, m, |a, b| exp_sphere_moment(n, &exp_add(&monos[a], &monos[b])))
}

/// A real polynomial in `n` variables.
#[derive(Clone, Debug, PartialEq)]
pub struct Poly {
    n: usize,
    terms: BTreeMap<Exp, f64>,
}

impl Poly {
    pub fn zero(n: usize) -> Self {
        assert!((1..=MAX_N).contains(&n), "dimension out of range");
        Poly { n, terms: BTreeMap::new() }
    }

    pub fn constant(n: usize, c: f64) -> Self {
        let mut p = Poly::zero(n);
        p.add_term([0; MAX_N], c);
        p
    }

    /// The coordinate function `x_i`.
    pub fn var(n: usize, i: usize) -> Self {
        let mut e = [0u8; MAX_N];
        e[i] = 1;
        Poly::monomial(n, e, 1.0)
    }

    pub fn monomial(n: usize, e: Exp, c: f64) -> Self {
        let mut p = Poly::zero(n);
        p.add_term(e, c);
        p
    }

    /// Builds a polynomial from exponent/coefficient pairs.
    pub fn from_terms(n: usize, terms: impl IntoIterator<Item = (Exp, f64)>) -> Self {
        let mut p = Poly::zero(n);
        for (e, c) in terms {
            p.add_term(e, c);
        }
        p
    }

    /// Builds a polynomial from coefficients on a monomial list.
    pub fn from_coeffs(n: usize, monos: &[Exp], coeffs: impl IntoIterator<Item = f64>) -> Self {
        Poly::from_terms(n, monos.iter().copied().zip(coeffs))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Exp, &f64)> {
        self.terms.iter()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn coeff(&self, e: &Exp) -> f64 {
        self.terms.get(e).copied().unwrap_or(0.0)
    }

    /// Coefficients on a monomial list (terms outside the list are ignored).
    pub fn coeffs_on(&self, monos: &[Exp]) -> Vec<f64> {
        monos.iter().map(|e| self.coeff(e)).collect()
    }

    pub fn add_term(&mut self, e: Exp, c: f64) {
        if c == 0.0 {
            return;
        }
        let entry = self.terms.entry(e).or_insert(0.0);
        *entry += c;
        if *entry == 0.0 {
            self.terms.remove(&e);
        }
    }

    /// `self += s * other`.
    pub fn axpy(&mut self, s: f64, other: &Poly) {
        debug_assert_eq!(self.n, other.n);
        if s == 0.0 {
            return;
        }
        for (e, c) in &other.terms {
            self.add_term(*e, s * c);
        }
    }

    pub fn scale(&self, s: f64) -> Poly {
        if s == 0.0 {
            return Poly::zero(self.n);
        }
        Poly { n: self.n, terms: self.terms.iter().map(|(e, c)| (*e, c * s)).collect() }
    }

    /// Drops coefficients with magnitude at most `tol`.
    pub fn pruned(&self, tol: f64) -> Poly {
        Poly { n: self.n, terms: self.terms.iter().filter(|(_, c)| c.abs() > tol).map(|(e, c)| (*e, *c)).collect() }
    }

    /// Total degree, `None` for the zero polynomial.
    pub fn degree(&self) -> Option<usize> {
        self.terms.keys().map(exp_degree).max()
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.terms.values().fold(0.0, |m, c| m.max(c.abs()))
    }

    /// Homogeneous component of degree `k`.
    pub fn homogeneous_part(&self, k: usize) -> Poly {
        Poly {
            n: self.n,
            terms: self.terms.iter().filter(|(e, _)| exp_degree(e) == k).map(|(e, c)| (*e, *c)).collect(),
        }
    }

    pub fn deriv(&self, i: usize) -> Poly {
        let mut out = Poly::zero(self.n);
        for (e, c) in &self.terms {
            if e[i] > 0 {
                let mut f = *e;
                f[i] -= 1;
                out.add_term(f, c * e[i] as f64);
            }
        }
        out
    }

    /// Multiplication by the coordinate `x_i`.
    pub fn mul_var(&self, i: usize) -> Poly {
        let mut out = Poly::zero(self.n);
        for (e, c) in &self.terms {
            let mut f = *e;
            f[i] += 1;
            out.add_term(f, *c);
        }
        out
    }

    pub fn laplacian(&self) -> Poly {
        let mut out = Poly::zero(self.n);
        for i in 0..self.n {
            for (e, c) in &self.terms {
                if e[i] >= 2 {
                    let mut f = *e;
                    f[i] -= 2;
                    out.add_term(f, c * (e[i] as f64) * (e[i] as f64 - 1.0));
                }
            }
        }
        out
    }

    pub fn gradient(&self) -> Vec<Poly> {
        (0..self.n).map(|i| self.deriv(i)).collect()
    }

    /// Radial derivative `Σ x_j ∂_j p`.
    pub fn euler(&self) -> Poly {
        let mut out = Poly::zero(self.n);
        for (e, c) in &self.terms {
            out.add_term(*e, c * exp_degree(e) as f64);
        }
        out
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let deg = self.terms.keys().flat_map(|e| e.iter().copied()).max().unwrap_or(0) as usize;
        let mut pows = [[1.0f64; 32]; MAX_N];
        if deg < 32 {
            for i in 0..self.n {
                for d in 1..=deg {
                    pows[i][d] = pows[i][d - 1] * x[i];
                }
            }
            self.terms
                .iter()
                .map(|(e, c)| {
                    let mut v = *c;
                    for i in 0..self.n {
                        v *= pows[i][e[i] as usize];
                    }
                    v
                })
                .sum()
        } else {
            self.terms.iter().map(|(e, c)| c * (0..self.n).map(|i| x[i].powi(e[i] as i32)).product::<f64>()).sum()
        }
    }

    /// Exact normalized integral over `S^{n-1}`.
    pub fn sphere_integral(&self) -> f64 {
        self.terms.iter().map(|(e, c)| c * exp_sphere_moment(self.n, e)).sum()
    }

    /// Exact normalized integral over the unit ball.
    pub fn ball_integral(&self) -> f64 {
        self.terms.iter().map(|(e, c)| c * exp_ball_moment(self.n, e)).sum()
    }

    /// Exact `∮ p q` without forming the product.
    pub fn sphere_inner(&self, other: &Poly) -> f64 {
        debug_assert_eq!(self.n, other.n);
        let mut acc = 0.0;
        for (a, ca) in &self.terms {
            for (b, cb) in &other.terms {
                let m = exp_sphere_moment(self.n, &exp_add(a, b));
                if m != 0.0 {
                    acc += ca * cb * m;
                }
            }
        }
        acc
    }

    pub fn mul(&self, other: &Poly) -> Poly {
        let mut out = Poly::zero(self.n);
        for (a, ca) in &self.terms {
            for (b, cb) in &other.terms {
                out.add_term(exp_add(a, b), ca * cb);
            }
        }
        out
    }
}

impl Add for &Poly {
    type Output = Poly;
    fn add(self, rhs: &Poly) -> Poly {
        let mut out = self.clone();
        out.axpy(1.0, rhs);
        out
    }
}

impl Sub for &Poly {
    type Output = Poly;
    fn sub(self, rhs: &Poly) -> Poly {
        let mut out = self.clone();
        out.axpy(-1.0, rhs);
        out
    }
}

impl Mul for &Poly {
    type Output = Poly;
    fn mul(self, rhs: &Poly) -> Poly {
        Poly::mul(self, rhs)
    }
}

impl Neg for &Poly {
    type Output = Poly;
    fn neg(self) -> Poly {
        self.scale(-1.0)
    }
}

/// A polynomial map `R^n → R^m`, one polynomial per component.
#[derive(Clone, Debug, PartialEq)]
pub struct VecPoly {
    n: usize,
    comps: Vec<Poly>,
}

impl VecPoly {
    pub fn new(n: usize, comps: Vec<Poly>) -> Self {
        assert!(comps.iter().all(|p| p.n() == n), "component dimension mismatch");
        VecPoly { n, comps }
    }

    pub fn zero(n: usize, m: usize) -> Self {
        VecPoly { n, comps: vec![Poly::zero(n); m] }
    }

    pub fn identity(n: usize) -> Self {
        VecPoly { n, comps: (0..n).map(|i| Poly::var(n, i)).collect() }
    }

    /// The linear map `x ↦ A x` (`A` is `m × n`).
    pub fn linear(a: &DMatrix<f64>) -> Self {
        let n = a.ncols();
        let comps = (0..a.nrows())
            .map(|i| {
                let mut p = Poly::zero(n);
                for j in 0..n {
                    let mut e = [0u8; MAX_N];
                    e[j] = 1;
                    p.add_term(e, a[(i, j)]);
                }
                p
            })
            .collect();
        VecPoly { n, comps }
    }

    /// The constant map with value `b`.
    pub fn constant(n: usize, b: &[f64]) -> Self {
        VecPoly { n, comps: b.iter().map(|&c| Poly::constant(n, c)).collect() }
    }

    /// Scalar polynomial times a fixed vector.
    pub fn scalar_times(p: &Poly, v: &[f64]) -> Self {
        VecPoly { n: p.n(), comps: v.iter().map(|&c| p.scale(c)).collect() }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.comps.len()
    }

    pub fn comps(&self) -> &[Poly] {
        &self.comps
    }

    pub fn comp(&self, i: usize) -> &Poly {
        &self.comps[i]
    }

    pub fn degree(&self) -> Option<usize> {
        self.comps.iter().filter_map(|p| p.degree()).max()
    }

    pub fn is_zero(&self) -> bool {
        self.comps.iter().all(|p| p.is_zero())
    }

    pub fn axpy(&mut self, s: f64, other: &VecPoly) {
        for (a, b) in self.comps.iter_mut().zip(&other.comps) {
            a.axpy(s, b);
        }
    }

    pub fn scale(&self, s: f64) -> VecPoly {
        VecPoly { n: self.n, comps: self.comps.iter().map(|p| p.scale(s)).collect() }
    }

    pub fn add(&self, other: &VecPoly) -> VecPoly {
        let mut out = self.clone();
        out.axpy(1.0, other);
        out
    }

    pub fn sub(&self, other: &VecPoly) -> VecPoly {
        let mut out = self.clone();
        out.axpy(-1.0, other);
        out
    }

    pub fn pruned(&self, tol: f64) -> VecPoly {
        VecPoly { n: self.n, comps: self.comps.iter().map(|p| p.pruned(tol)).collect() }
    }

    pub fn homogeneous_part(&self, k: usize) -> VecPoly {
        VecPoly { n: self.n, comps: self.comps.iter().map(|p| p.homogeneous_part(k)).collect() }
    }

    /// Ambient Jacobian `G_{ij} = ∂_j u^i` as polynomials (`m × n`, row major).
    pub fn jacobian(&self) -> Vec<Vec<Poly>> {
        self.comps.iter().map(|p| p.gradient()).collect()
    }

    pub fn divergence(&self) -> Poly {
        let mut out = Poly::zero(self.n);
        for (i, p) in self.comps.iter().enumerate().take(self.n) {
            out.axpy(1.0, &p.deriv(i));
        }
        out
    }

    /// `⟨u(x), x⟩`.
    pub fn dot_x(&self) -> Poly {
        let mut out = Poly::zero(self.n);
        for (i, p) in self.comps.iter().enumerate().take(self.n) {
            out.axpy(1.0, &p.mul_var(i));
        }
        out
    }

    /// Scalar polynomial times `x`.
    pub fn times_x(p: &Poly) -> VecPoly {
        let n = p.n();
        VecPoly { n, comps: (0..n).map(|i| p.mul_var(i)).collect() }
    }

    /// Componentwise product with a scalar polynomial.
    pub fn times_poly(&self, p: &Poly) -> VecPoly {
        VecPoly { n: self.n, comps: self.comps.iter().map(|c| c.mul(p)).collect() }
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        self.comps.iter().map(|p| p.eval(x)).collect()
    }

    /// Value and ambient Jacobian at `x`.
    pub fn eval_with_jacobian(&self, x: &[f64]) -> (Vec<f64>, DMatrix<f64>) {
        let value = self.eval(x);
        let jac = self.jacobian();
        let g = DMatrix::from_fn(self.m(), self.n, |i, j| jac[i][j].eval(x));
        (value, g)
    }

    /// Exact `∮ ⟨u, v⟩`.
    pub fn sphere_inner(&self, other: &VecPoly) -> f64 {
        self.comps.iter().zip(&other.comps).map(|(a, b)| a.sphere_inner(b)).sum()
    }

    /// Exact componentwise sphere mean.
    pub fn sphere_mean(&self) -> Vec<f64> {
        self.comps.iter().map(|p| p.sphere_integral()).collect()
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.comps.iter().fold(0.0, |m, p| m.max(p.max_abs_coeff()))
    }
}

/// A compiled form of a polynomial map that evaluates values and Jacobians
/// quickly at many points.
#[derive(Clone, Debug)]
pub struct CompiledMap {
    n: usize,
    m: usize,
    max_deg: usize,
    value_terms: Vec<Vec<(Exp, f64)>>,
    grad_terms: Vec<Vec<Vec<(Exp, f64)>>>,
}

impl CompiledMap {
    pub fn new(u: &VecPoly) -> Self {
        let flatten = |p: &Poly| p.terms().map(|(e, c)| (*e, *c)).collect::<Vec<_>>();
        let jac = u.jacobian();
        let max_deg =
            u.comps().iter().flat_map(|p| p.terms().flat_map(|(e, _)| e.to_vec())).max().unwrap_or(0) as usize;
        CompiledMap {
            n: u.n(),
            m: u.m(),
            max_deg,
            value_terms: u.comps().iter().map(flatten).collect(),
            grad_terms: jac.iter().map(|row| row.iter().map(flatten).collect()).collect(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    fn powers(&self, x: &[f64]) -> Vec<Vec<f64>> {
        (0..self.n)
            .map(|i| {
                let mut v = vec![1.0; self.max_deg + 1];
                for d in 1..=self.max_deg {
                    v[d] = v[d - 1] * x[i];
                }
                v
            })
            .collect()
    }

    fn eval_terms(&self, pows: &[Vec<f64>], terms: &[(Exp, f64)]) -> f64 {
        terms
            .iter()
            .map(|(e, c)| {
                let mut v = *c;
                for (i, p) in pows.iter().enumerate() {
                    v *= p[e[i] as usize];
                }
                v
            })
            .sum()
    }

    pub fn value(&self, x: &[f64]) -> Vec<f64> {
        let pows = self.powers(x);
        self.value_terms.iter().map(|t| self.eval_terms(&pows, t)).collect()
    }

    pub fn value_and_jacobian(&self, x: &[f64]) -> (Vec<f64>, DMatrix<f64>) {
        let pows = self.powers(x);
        let value = self.value_terms.iter().map(|t| self.eval_terms(&pows, t)).collect();
        let g = DMatrix::from_fn(self.m, self.n, |i, j| self.eval_terms(&pows, &self.grad_terms[i][j]));
        (value, g)
    }
}
