//! Scalar and vector spherical harmonics as homogeneous harmonic polynomials,
//! sphere maps with polynomial, sampled or Möbius backing, harmonic expansions,
//! harmonic extension and the Parseval/Poincaré estimates built on them.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::{DMatrix, DVector};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::moebius::MoebiusMap;
use crate::operator_a::{Label, Subspace};
use crate::par::{self, Mode};
use crate::poly::{monomial_gram, monomials, CompiledMap, Exp, Poly, VecPoly, MAX_N};
use crate::quadrature::SphereGrid;

/// Eigenvalue `k(k+n-2)` of `-Δ_S` on degree-`k` spherical harmonics.
pub fn lambda(n: usize, k: usize) -> f64 {
    (k * (k + n - 2)) as f64
}

fn binom(a: i64, b: i64) -> i64 {
    if b < 0 || a < b || a < 0 {
        return 0;
    }
    let mut r = 1i64;
    for i in 0..b {
        r = r * (a - i) / (i + 1);
    }
    r
}

/// Dimension `C(n+k-1,k) - C(n+k-3,k-2)` of degree-`k` scalar harmonics.
pub fn scalar_dim(n: usize, k: usize) -> usize {
    let (n, k) = (n as i64, k as i64);
    (binom(n + k - 1, k) - binom(n + k - 3, k - 2)) as usize
}

/// Dimension of `H_{n,k}`: `n G_{n,k}`, minus one for `k = 1`.
pub fn vector_dim(n: usize, k: usize) -> usize {
    n * scalar_dim(n, k) - usize::from(k == 1)
}

/// A homogeneous harmonic polynomial.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "HarmonicPolyJson", try_from = "HarmonicPolyJson")]
pub struct HarmonicPoly {
    pub n: usize,
    pub k: usize,
    pub poly: Poly,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TermJson {
    pub exponents: Vec<u32>,
    pub coeff: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HarmonicPolyJson {
    pub n: usize,
    pub k: usize,
    pub terms: Vec<TermJson>,
}

pub fn poly_to_terms(p: &Poly) -> Vec<TermJson> {
    p.terms().map(|(e, c)| TermJson { exponents: e[..p.n()].iter().map(|&v| v as u32).collect(), coeff: *c }).collect()
}

pub fn poly_from_terms(n: usize, terms: &[TermJson]) -> Result<Poly> {
    if n == 0 || n > MAX_N {
        return Err(Error::UnsupportedDimension(n));
    }
    let mut p = Poly::zero(n);
    for t in terms {
        if t.exponents.len() != n {
            return Err(Error::LengthMismatch { expected: n, got: t.exponents.len() });
        }
        let mut e: Exp = [0; MAX_N];
        for (slot, &v) in e.iter_mut().zip(&t.exponents) {
            *slot = u8::try_from(v).map_err(|_| Error::InvalidParameter("exponent too large".into()))?;
        }
        p.add_term(e, t.coeff);
    }
    Ok(p)
}

impl From<HarmonicPoly> for HarmonicPolyJson {
    fn from(h: HarmonicPoly) -> Self {
        HarmonicPolyJson { n: h.n, k: h.k, terms: poly_to_terms(&h.poly) }
    }
}

impl TryFrom<HarmonicPolyJson> for HarmonicPoly {
    type Error = Error;
    fn try_from(j: HarmonicPolyJson) -> Result<Self> {
        let poly = poly_from_terms(j.n, &j.terms)?;
        HarmonicPoly::new(j.n, j.k, poly)
    }
}

impl HarmonicPoly {
    /// Validates homogeneity and harmonicity (coefficient residual ≤ 1e-12 relative).
    pub fn new(n: usize, k: usize, poly: Poly) -> Result<Self> {
        if poly.terms().any(|(e, _)| crate::poly::exp_degree(e) != k) {
            return Err(Error::InvalidParameter(format!("polynomial is not homogeneous of degree {k}")));
        }
        let scale = poly.max_abs_coeff().max(1.0);
        if poly.laplacian().max_abs_coeff() > 1e-12 * scale * (k * k + 1) as f64 {
            return Err(Error::InvalidParameter("polynomial is not harmonic".into()));
        }
        Ok(HarmonicPoly { n, k, poly })
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.poly.eval(x)
    }
}

/// Orthonormal basis data for degree-`k` harmonics in `n` variables.
#[derive(Debug)]
pub struct HarmonicSpace {
    pub n: usize,
    pub k: usize,
    pub monos: Vec<Exp>,
    /// `∮ x^a x^b` on `monos`.
    pub gram: DMatrix<f64>,
    /// Columns: orthonormal scalar harmonics as coefficients on `monos`.
    pub scalar: DMatrix<f64>,
    /// Columns: orthonormal basis of `H_{n,k}` as stacked component coefficients.
    pub vector: DMatrix<f64>,
}

impl HarmonicSpace {
    pub fn num_monos(&self) -> usize {
        self.monos.len()
    }

    /// `∮⟨v,w⟩` for stacked coefficient vectors.
    pub fn block_gram_times(&self, c: &DMatrix<f64>) -> DMatrix<f64> {
        let nm = self.monos.len();
        let mut out = DMatrix::zeros(c.nrows(), c.ncols());
        for i in 0..self.n {
            let block = &self.gram * c.rows(i * nm, nm);
            out.rows_mut(i * nm, nm).copy_from(&block);
        }
        out
    }

    /// Converts a stacked coefficient vector to a vector polynomial.
    pub fn to_vecpoly(&self, c: &[f64]) -> VecPoly {
        let nm = self.monos.len();
        VecPoly::new(
            self.n,
            (0..self.n)
                .map(|i| Poly::from_coeffs(self.n, &self.monos, c[i * nm..(i + 1) * nm].iter().copied()))
                .collect(),
        )
    }

    /// Stacked coefficients of the degree-`k` part of a vector polynomial.
    pub fn coeffs_of(&self, w: &VecPoly) -> Vec<f64> {
        w.comps().iter().flat_map(|p| p.coeffs_on(&self.monos)).collect()
    }
}

fn laplace_kernel_exact(n: usize, k: usize, monos: &[Exp]) -> Vec<Vec<BigRational>> {
    let cols = monos.len();
    if k < 2 {
        return (0..cols)
            .map(|j| (0..cols).map(|i| BigRational::from_integer(BigInt::from((i == j) as i64))).collect())
            .collect();
    }
    let lower = monomials(n, k - 2);
    let index: HashMap<Exp, usize> = lower.iter().enumerate().map(|(i, e)| (*e, i)).collect();
    let mut a = vec![vec![BigRational::zero(); cols]; lower.len()];
    for (j, e) in monos.iter().enumerate() {
        for i in 0..n {
            if e[i] >= 2 {
                let mut f = *e;
                f[i] -= 2;
                a[index[&f]][j] += BigRational::from_integer(BigInt::from(e[i] as i64 * (e[i] as i64 - 1)));
            }
        }
    }
    let rows = a.len();
    let mut pivots = Vec::new();
    let mut r = 0;
    for c in 0..cols {
        if r == rows {
            break;
        }
        let Some(p) = (r..rows).find(|&i| !a[i][c].is_zero()) else { continue };
        a.swap(r, p);
        let inv = BigRational::from_integer(BigInt::from(1)) / a[r][c].clone();
        for v in a[r].iter_mut() {
            *v = &*v * &inv;
        }
        let pivot = a[r].clone();
        for (i, row) in a.iter_mut().enumerate() {
            if i != r && !row[c].is_zero() {
                let f = row[c].clone();
                for (v, p) in row.iter_mut().zip(&pivot) {
                    *v -= &f * p;
                }
            }
        }
        pivots.push(c);
        r += 1;
    }
    let free: Vec<usize> = (0..cols).filter(|c| !pivots.contains(c)).collect();
    free.iter()
        .map(|&f| {
            let mut v = vec![BigRational::zero(); cols];
            v[f] = BigRational::from_integer(BigInt::from(1));
            for (row, &pc) in pivots.iter().enumerate() {
                v[pc] = -a[row][f].clone();
            }
            v
        })
        .collect()
}

/// Modified Gram–Schmidt (two passes) in the inner product `⟨a,b⟩ = aᵀ M b`.
/// Columns whose residual norm falls below `drop_tol` relative to their
/// original norm are discarded.
pub fn orthonormalize(cols: &DMatrix<f64>, m: &DMatrix<f64>, drop_tol: f64) -> DMatrix<f64> {
    let mut kept: Vec<DVector<f64>> = Vec::new();
    for j in 0..cols.ncols() {
        let mut v = cols.column(j).into_owned();
        let n0 = v.dot(&(m * &v)).max(0.0).sqrt();
        if n0 == 0.0 {
            continue;
        }
        for _ in 0..2 {
            for q in &kept {
                let c = q.dot(&(m * &v));
                v -= q * c;
            }
        }
        let nv = v.dot(&(m * &v)).max(0.0).sqrt();
        if nv > drop_tol * n0 {
            kept.push(v / nv);
        }
    }
    if kept.is_empty() {
        return DMatrix::zeros(cols.nrows(), 0);
    }
    DMatrix::from_columns(&kept)
}

fn build_space(n: usize, k: usize) -> HarmonicSpace {
    let monos = monomials(n, k);
    let gram = monomial_gram(n, &monos);
    let kernel = laplace_kernel_exact(n, k, &monos);
    let nm = monos.len();
    let kmat = DMatrix::from_fn(nm, kernel.len(), |i, j| kernel[j][i].to_f64().unwrap_or(0.0));
    let scalar = orthonormalize(&kmat, &gram, 1e-10);
    let g = scalar.ncols();
    let mut vector = DMatrix::zeros(n * nm, n * g);
    for i in 0..n {
        for j in 0..g {
            vector.view_mut((i * nm, i * g + j), (nm, 1)).copy_from(&scalar.column(j));
        }
    }
    if k == 1 {
        // Remove the direction of `x ↦ x`, the only one with ∮⟨w,x⟩ ≠ 0.
        let space = HarmonicSpace {
            n,
            k,
            monos: monos.clone(),
            gram: gram.clone(),
            scalar: scalar.clone(),
            vector: vector.clone(),
        };
        let id = space.coeffs_of(&VecPoly::identity(n));
        let idv = DMatrix::from_column_slice(n * nm, 1, &id);
        let coords = vector.transpose() * space.block_gram_times(&idv);
        let r = coords.column(0).normalize();
        let d = vector.ncols();
        let proj = DMatrix::<f64>::identity(d, d) - &r * r.transpose();
        let q = orthonormalize(&proj, &DMatrix::identity(d, d), 1e-8);
        vector = &vector * q;
    }
    HarmonicSpace { n, k, monos, gram, scalar, vector }
}

/// Cached harmonic space for `(n, k)`.
pub fn harmonic_space(n: usize, k: usize) -> Arc<HarmonicSpace> {
    type Cache = Mutex<HashMap<(usize, usize), Arc<HarmonicSpace>>>;
    static CACHE: OnceLock<Cache> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(s) = cache.lock().expect("cache lock").get(&(n, k)) {
        return s.clone();
    }
    let built = Arc::new(build_space(n, k));
    cache.lock().expect("cache lock").entry((n, k)).or_insert(built).clone()
}

fn check_dims(n: usize) -> Result<()> {
    if !(2..=MAX_N).contains(&n) {
        return Err(Error::UnsupportedDimension(n));
    }
    Ok(())
}

/// Orthonormal basis of degree-`k` scalar spherical harmonics in `R^n`.
pub fn scalar_basis(n: usize, k: usize) -> Result<Vec<HarmonicPoly>> {
    check_dims(n)?;
    let s = harmonic_space(n, k);
    Ok((0..s.scalar.ncols())
        .map(|j| HarmonicPoly { n, k, poly: Poly::from_coeffs(n, &s.monos, s.scalar.column(j).iter().copied()) })
        .collect())
}

/// Orthonormal basis of `H_{n,k}` (mean zero and, for `k = 1`, `∮⟨w,x⟩ = 0`).
pub fn vector_basis(n: usize, k: usize) -> Result<Subspace> {
    check_dims(n)?;
    if k == 0 {
        return Err(Error::InvalidParameter("vector harmonics need k ≥ 1".into()));
    }
    let s = harmonic_space(n, k);
    Ok(Subspace::from_coords(n, k, Label::Full, None, s.vector.clone()))
}

/// Per-node value and ambient Jacobian of a sampled map.
#[derive(Clone, Debug)]
pub struct SampledMap {
    pub grid: Arc<SphereGrid>,
    pub m: usize,
    pub values: Vec<Vec<f64>>,
    /// Ambient `m × n` Jacobians; only their tangential part `G (I - x xᵀ)` is used.
    pub grads: Vec<DMatrix<f64>>,
}

impl SampledMap {
    pub fn new(grid: Arc<SphereGrid>, values: Vec<Vec<f64>>, grads: Vec<DMatrix<f64>>) -> Result<Self> {
        if values.len() != grid.len() || grads.len() != grid.len() {
            return Err(Error::LengthMismatch { expected: grid.len(), got: values.len().min(grads.len()) });
        }
        let m = values.first().map(|v| v.len()).unwrap_or(0);
        if values.iter().any(|v| v.len() != m) || grads.iter().any(|g| g.nrows() != m || g.ncols() != grid.n) {
            return Err(Error::DimensionMismatch("inconsistent sample shapes".into()));
        }
        Ok(SampledMap { grid, m, values, grads })
    }

    pub fn n(&self) -> usize {
        self.grid.n
    }

    /// Tangential gradient `G (I - x xᵀ)` at node `i`.
    pub fn tangential(&self, i: usize) -> DMatrix<f64> {
        let x = DVector::from_column_slice(&self.grid.nodes[i]);
        let g = &self.grads[i];
        g - (g * &x) * x.transpose()
    }

    /// `∮ f(x, u, G)` over the grid.
    pub fn integrate<F>(&self, mode: Mode, f: F) -> f64
    where
        F: Fn(&[f64], &[f64], &DMatrix<f64>) -> f64 + Sync + Send,
    {
        par::sum_range(mode, self.grid.len(), |i| {
            self.grid.weights[i] * f(&self.grid.nodes[i], &self.values[i], &self.grads[i])
        })
    }

    /// Componentwise sphere mean.
    pub fn mean(&self) -> Vec<f64> {
        par::sum_vec_range(Mode::default(), self.grid.len(), self.m, |i| {
            self.values[i].iter().map(|v| v * self.grid.weights[i]).collect()
        })
    }
}

/// A map `S^{n-1} → R^m`.
#[derive(Clone, Debug)]
pub enum SphereMap {
    /// Exact polynomial components (any polynomial extension of the map).
    Poly(VecPoly),
    /// Values and ambient gradients on a grid.
    Sampled(SampledMap),
    /// `scale · φ` for a Möbius transformation `φ`, in closed form.
    Moebius { map: MoebiusMap, scale: f64 },
}

impl SphereMap {
    pub fn n(&self) -> usize {
        match self {
            SphereMap::Poly(p) => p.n(),
            SphereMap::Sampled(s) => s.n(),
            SphereMap::Moebius { map, .. } => map.n(),
        }
    }

    pub fn m(&self) -> usize {
        match self {
            SphereMap::Poly(p) => p.m(),
            SphereMap::Sampled(s) => s.m,
            SphereMap::Moebius { map, .. } => map.n(),
        }
    }

    pub fn identity(n: usize) -> Self {
        SphereMap::Poly(VecPoly::identity(n))
    }

    pub fn as_poly(&self) -> Option<&VecPoly> {
        match self {
            SphereMap::Poly(p) => Some(p),
            _ => None,
        }
    }

    /// Value and ambient Jacobian at a point of the sphere.
    pub fn eval(&self, x: &[f64]) -> Result<(Vec<f64>, DMatrix<f64>)> {
        match self {
            SphereMap::Poly(p) => Ok(p.eval_with_jacobian(x)),
            SphereMap::Moebius { map, scale } => {
                let (v, g) = map.value_and_jacobian(x)?;
                Ok((v.iter().map(|c| c * scale).collect(), g * *scale))
            }
            SphereMap::Sampled(_) => {
                Err(Error::InvalidParameter("sampled maps can only be read at their own nodes".into()))
            }
        }
    }

    /// Samples the map on `grid`; sampled maps must already live on a grid of the same size.
    pub fn sample(&self, grid: &Arc<SphereGrid>) -> Result<SampledMap> {
        self.sample_with(Mode::default(), grid)
    }

    pub fn sample_with(&self, mode: Mode, grid: &Arc<SphereGrid>) -> Result<SampledMap> {
        if grid.n != self.n() {
            return Err(Error::DimensionMismatch(format!("grid is for n = {}, map for n = {}", grid.n, self.n())));
        }
        match self {
            SphereMap::Sampled(s) => {
                if s.grid.len() != grid.len() {
                    return Err(Error::LengthMismatch { expected: grid.len(), got: s.grid.len() });
                }
                Ok(s.clone())
            }
            SphereMap::Poly(p) => {
                let c = CompiledMap::new(p);
                let pairs = par::map_slice(mode, &grid.nodes, |x| c.value_and_jacobian(x));
                let (values, grads) = pairs.into_iter().unzip();
                SampledMap::new(grid.clone(), values, grads)
            }
            SphereMap::Moebius { .. } => {
                let pairs = par::map_slice(mode, &grid.nodes, |x| self.eval(x));
                let mut values = Vec::with_capacity(grid.len());
                let mut grads = Vec::with_capacity(grid.len());
                for r in pairs {
                    let (v, g) = r?;
                    values.push(v);
                    grads.push(g);
                }
                SampledMap::new(grid.clone(), values, grads)
            }
        }
    }

    /// The grid a sampled map lives on.
    pub fn native_grid(&self) -> Option<Arc<SphereGrid>> {
        match self {
            SphereMap::Sampled(s) => Some(s.grid.clone()),
            _ => None,
        }
    }
}

/// Samples `u` on its own grid when it has one, otherwise on `grid`.
pub fn sample_for(u: &SphereMap, grid: Option<&Arc<SphereGrid>>) -> Result<SampledMap> {
    match (u, grid) {
        (SphereMap::Sampled(s), _) => Ok(s.clone()),
        (_, Some(g)) => u.sample(g),
        (_, None) => Err(Error::InvalidParameter("a grid is required for non-polynomial maps".into())),
    }
}

/// JSON form of a sphere map.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "backing", rename_all = "lowercase")]
pub enum SphereMapJson {
    Poly {
        n: usize,
        m: usize,
        components: Vec<Vec<TermJson>>,
    },
    Sampled {
        n: usize,
        m: usize,
        grid: SphereGrid,
        values: Vec<Vec<f64>>,
        /// Row-major `m × n` ambient gradients.
        gradients: Vec<Vec<Vec<f64>>>,
    },
    Moebius {
        n: usize,
        m: usize,
        #[serde(rename = "O")]
        o: Vec<Vec<f64>>,
        xi: Vec<f64>,
        lambda: f64,
        #[serde(default = "one")]
        scale: f64,
    },
}

fn one() -> f64 {
    1.0
}

impl SphereMap {
    pub fn to_json(&self) -> SphereMapJson {
        match self {
            SphereMap::Poly(p) => {
                SphereMapJson::Poly { n: p.n(), m: p.m(), components: p.comps().iter().map(poly_to_terms).collect() }
            }
            SphereMap::Sampled(s) => SphereMapJson::Sampled {
                n: s.n(),
                m: s.m,
                grid: (*s.grid).clone(),
                values: s.values.clone(),
                gradients: s
                    .grads
                    .iter()
                    .map(|g| (0..g.nrows()).map(|i| g.row(i).iter().copied().collect()).collect())
                    .collect(),
            },
            SphereMap::Moebius { map, scale } => {
                let j = map.to_json();
                SphereMapJson::Moebius { n: j.n, m: j.n, o: j.o, xi: j.xi, lambda: j.lambda, scale: *scale }
            }
        }
    }

    pub fn from_json(j: SphereMapJson) -> Result<Self> {
        match j {
            SphereMapJson::Poly { n, m, components } => {
                if components.len() != m {
                    return Err(Error::LengthMismatch { expected: m, got: components.len() });
                }
                let comps = components.iter().map(|t| poly_from_terms(n, t)).collect::<Result<Vec<_>>>()?;
                Ok(SphereMap::Poly(VecPoly::new(n, comps)))
            }
            SphereMapJson::Sampled { n, m, grid, values, gradients } => {
                if grid.n != n {
                    return Err(Error::DimensionMismatch("grid dimension differs from map dimension".into()));
                }
                let grads = gradients
                    .iter()
                    .map(|rows| {
                        if rows.len() != m || rows.iter().any(|r| r.len() != n) {
                            return Err(Error::DimensionMismatch("gradient shape".into()));
                        }
                        Ok(DMatrix::from_fn(m, n, |i, j| rows[i][j]))
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(SphereMap::Sampled(SampledMap::new(Arc::new(grid), values, grads)?))
            }
            SphereMapJson::Moebius { n, m, o, xi, lambda, scale } => {
                if m != n {
                    return Err(Error::DimensionMismatch("Möbius maps need m = n".into()));
                }
                let map = MoebiusMap::from_json(crate::moebius::MoebiusJson { n, o, xi, lambda })?;
                Ok(SphereMap::Moebius { map, scale })
            }
        }
    }
}

/// Coefficients of a map in the orthonormal scalar harmonic bases, per degree.
#[derive(Clone, Debug)]
pub struct HarmonicExpansion {
    pub n: usize,
    pub m: usize,
    pub kmax: usize,
    /// `blocks[k]` is `m × G_{n,k}`: entry `(i, j)` is `∮ u^i ψ_{n,k,j}`.
    pub blocks: Vec<DMatrix<f64>>,
    /// Set when `kmax` exceeds the exactness of the grid used for a sampled map.
    pub exceeds_grid_exactness: bool,
}

/// Harmonic analysis up to degree `kmax`; exact for polynomial maps, by
/// quadrature on `grid` otherwise (sampled maps use their own grid).
pub fn analyze(u: &SphereMap, kmax: usize, grid: Option<&Arc<SphereGrid>>) -> Result<HarmonicExpansion> {
    let n = u.n();
    check_dims(n)?;
    let m = u.m();
    let mut blocks = Vec::with_capacity(kmax + 1);
    match u {
        SphereMap::Poly(p) => {
            for k in 0..=kmax {
                let basis = scalar_basis(n, k)?;
                blocks.push(DMatrix::from_fn(m, basis.len(), |i, j| p.comp(i).sphere_inner(&basis[j].poly)));
            }
            Ok(HarmonicExpansion { n, m, kmax, blocks, exceeds_grid_exactness: false })
        }
        _ => {
            let grid = match (u.native_grid(), grid) {
                (Some(g), _) => g,
                (None, Some(g)) => g.clone(),
                (None, None) => {
                    return Err(Error::InvalidParameter("a grid is required for non-polynomial maps".into()))
                }
            };
            let s = u.sample(&grid)?;
            let mut exceeds = false;
            for k in 0..=kmax {
                let basis = scalar_basis(n, k)?;
                if 2 * k > grid.exactness {
                    exceeds = true;
                }
                let g = basis.len();
                let flat = par::sum_vec_range(Mode::default(), grid.len(), m * g, |i| {
                    let x = &grid.nodes[i];
                    let w = grid.weights[i];
                    let psi: Vec<f64> = basis.iter().map(|b| b.eval(x)).collect();
                    let mut out = vec![0.0; m * g];
                    for a in 0..m {
                        for j in 0..g {
                            out[a * g + j] = w * s.values[i][a] * psi[j];
                        }
                    }
                    out
                });
                blocks.push(DMatrix::from_row_slice(m, g, &flat));
            }
            Ok(HarmonicExpansion { n, m, kmax, blocks, exceeds_grid_exactness: exceeds })
        }
    }
}

impl HarmonicExpansion {
    /// The truncated series as a polynomial map (equal to its harmonic extension).
    pub fn synthesize(&self) -> Result<VecPoly> {
        let mut out = VecPoly::zero(self.n, self.m);
        for (k, block) in self.blocks.iter().enumerate() {
            let basis = scalar_basis(self.n, k)?;
            let comps: Vec<Poly> = (0..self.m)
                .map(|i| {
                    let mut p = Poly::zero(self.n);
                    for (j, b) in basis.iter().enumerate() {
                        p.axpy(block[(i, j)], &b.poly);
                    }
                    p
                })
                .collect();
            out.axpy(1.0, &VecPoly::new(self.n, comps));
        }
        Ok(out)
    }

    /// `Σ_k Σ_j |α_{k,j}|²`.
    pub fn l2_squared(&self) -> f64 {
        self.blocks.iter().map(|b| b.norm_squared()).sum()
    }

    /// `Σ_k λ_{n,k} Σ_j |α_{k,j}|²`.
    pub fn tangential_energy(&self) -> f64 {
        self.blocks.iter().enumerate().map(|(k, b)| lambda(self.n, k) * b.norm_squared()).sum()
    }

    /// Ball average of `|∇u_h|²`, i.e. `Σ n k |α_k|²`.
    pub fn ball_energy(&self) -> f64 {
        self.blocks.iter().enumerate().map(|(k, b)| (self.n * k) as f64 * b.norm_squared()).sum()
    }

    /// Sphere average of `|∇u_h|²`, i.e. `Σ (λ_{n,k} + k²) |α_k|²`.
    pub fn surface_gradient_energy(&self) -> f64 {
        self.blocks.iter().enumerate().map(|(k, b)| (lambda(self.n, k) + (k * k) as f64) * b.norm_squared()).sum()
    }
}

/// Evaluates the harmonic extension `Σ r^k Σ α ψ(x/|x|)` at a point of the closed ball.
pub fn harmonic_extension_eval(e: &HarmonicExpansion, point: &[f64]) -> Result<Vec<f64>> {
    if point.len() != e.n {
        return Err(Error::LengthMismatch { expected: e.n, got: point.len() });
    }
    let r2: f64 = point.iter().map(|c| c * c).sum();
    if r2 > 1.0 + 1e-12 {
        return Err(Error::InvalidParameter("point lies outside the closed unit ball".into()));
    }
    // Homogeneous harmonics satisfy r^k ψ(x/|x|) = ψ(x).
    let mut out = vec![0.0; e.m];
    for (k, block) in e.blocks.iter().enumerate() {
        let basis = scalar_basis(e.n, k)?;
        let psi: Vec<f64> = basis.iter().map(|b| b.eval(point)).collect();
        for (i, o) in out.iter_mut().enumerate() {
            *o += (0..psi.len()).map(|j| block[(i, j)] * psi[j]).sum::<f64>();
        }
    }
    Ok(out)
}

/// `∇u_h(0) = n ∮ u ⊗ x`.
pub fn grad_origin(u: &SphereMap, grid: Option<&Arc<SphereGrid>>) -> Result<DMatrix<f64>> {
    let n = u.n();
    let m = u.m();
    match u {
        SphereMap::Poly(p) => Ok(DMatrix::from_fn(m, n, |i, j| n as f64 * p.comp(i).sphere_inner(&Poly::var(n, j)))),
        _ => {
            let grid = u
                .native_grid()
                .or_else(|| grid.cloned())
                .ok_or_else(|| Error::InvalidParameter("a grid is required for non-polynomial maps".into()))?;
            let s = u.sample(&grid)?;
            let flat = par::sum_vec_range(Mode::default(), grid.len(), m * n, |k| {
                let x = &grid.nodes[k];
                let w = grid.weights[k] * n as f64;
                let mut out = vec![0.0; m * n];
                for i in 0..m {
                    for j in 0..n {
                        out[i * n + j] = w * s.values[k][i] * x[j];
                    }
                }
                out
            });
            Ok(DMatrix::from_row_slice(m, n, &flat))
        }
    }
}

/// Exact `∮|∇_T u|² = ∮(|G|² - |G x|²)` for a polynomial map.
pub fn tangential_energy_poly(u: &VecPoly) -> f64 {
    let mut total = 0.0;
    for p in u.comps() {
        for j in 0..u.n() {
            let d = p.deriv(j);
            total += d.sphere_inner(&d);
        }
        let e = p.euler();
        total -= e.sphere_inner(&e);
    }
    total
}

/// Exact `∮|u - ū|²` for a polynomial map.
pub fn variance_poly(u: &VecPoly) -> f64 {
    let mean = u.sphere_mean();
    let centered = u.sub(&VecPoly::constant(u.n(), &mean));
    centered.sphere_inner(&centered)
}

/// `(1/(n-1)) ∮|∇_T u|² - ∮|u - ū|²`, nonnegative by the sharp Poincaré inequality.
pub fn poincare_deficit(u: &SphereMap, grid: Option<&Arc<SphereGrid>>) -> Result<f64> {
    let n = u.n();
    match u {
        SphereMap::Poly(p) => Ok(tangential_energy_poly(p) / (n as f64 - 1.0) - variance_poly(p)),
        _ => {
            let grid = u
                .native_grid()
                .or_else(|| grid.cloned())
                .ok_or_else(|| Error::InvalidParameter("a grid is required for non-polynomial maps".into()))?;
            let s = u.sample(&grid)?;
            let mean = s.mean();
            let mode = Mode::default();
            let energy = par::sum_range(mode, grid.len(), |i| grid.weights[i] * s.tangential(i).norm_squared());
            let var = par::sum_range(mode, grid.len(), |i| {
                grid.weights[i] * s.values[i].iter().zip(&mean).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
            });
            Ok(energy / (n as f64 - 1.0) - var)
        }
    }
}

/// Harmonic-extension energies and the two-sided comparison with the tangential energy.
#[derive(Clone, Debug, Serialize)]
pub struct HarmonicEnergy {
    /// Ball average of `|∇u_h|²`.
    pub ball: f64,
    /// Sphere average of `|∇u_h|²`.
    pub surface: f64,
    /// `∮|∇_T u|²`.
    pub tangential: f64,
    /// `ball ≤ n/(n-1)·tangential ≤ surface ≤ 2·tangential` within `1e-10`.
    pub bounds_hold: bool,
}

pub fn harmonic_energy_check(u: &SphereMap, kmax: usize, grid: Option<&Arc<SphereGrid>>) -> Result<HarmonicEnergy> {
    let e = analyze(u, kmax, grid)?;
    let n = u.n() as f64;
    let ball = e.ball_energy();
    let surface = e.surface_gradient_energy();
    let tangential = e.tangential_energy();
    let tol = 1e-10 * (1.0 + tangential);
    let c = n / (n - 1.0);
    let bounds_hold =
        ball <= c * tangential + tol && c * tangential <= surface + tol && surface <= 2.0 * tangential + tol;
    Ok(HarmonicEnergy { ball, surface, tangential, bounds_hold })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dimension_formulas() {
        assert_eq!(scalar_dim(3, 1), 3);
        assert_eq!(scalar_dim(3, 2), 5);
        assert_eq!(scalar_dim(2, 3), 2);
        assert_eq!(scalar_dim(4, 6), 49);
        assert_eq!(vector_dim(3, 1), 8);
        assert_eq!(vector_dim(3, 2), 15);
        assert_eq!(vector_dim(4, 1), 15);
    }

    #[test]
    fn scalar_bases_have_expected_sizes() {
        assert_eq!(scalar_basis(3, 1).unwrap().len(), 3);
        assert_eq!(scalar_basis(3, 2).unwrap().len(), 5);
        let b = scalar_basis(2, 3).unwrap();
        assert_eq!(b.len(), 2);
        for h in &b {
            assert!(h.poly.laplacian().max_abs_coeff() < 1e-12);
        }
    }

    #[test]
    fn vector_bases_have_expected_sizes() {
        for (n, k, d) in [(3, 1, 8), (3, 2, 15), (4, 1, 15), (2, 3, 4)] {
            assert_eq!(vector_basis(n, k).unwrap().dim(), d);
        }
    }

    #[test]
    fn analysis_of_coordinate_square() {
        let x = Poly::var(3, 0);
        let u = SphereMap::Poly(VecPoly::new(3, vec![&x * &x]));
        let e = analyze(&u, 2, None).unwrap();
        assert!((e.blocks[0][(0, 0)] - 1.0 / 3.0).abs() < 1e-14);
        assert!(e.blocks[1].norm() < 1e-14);
        assert!(e.blocks[2].norm() > 0.1);
        let back = e.synthesize().unwrap();
        let diff = back.sub(u.as_poly().unwrap());
        assert!(diff.sphere_inner(&diff) < 1e-15);
        let again = analyze(&SphereMap::Poly(back), 2, None).unwrap();
        for (a, b) in again.blocks.iter().zip(&e.blocks) {
            assert!((a - b).amax() < 1e-12);
        }
    }

    #[test]
    fn extension_examples() {
        let x = Poly::var(3, 0);
        let y = Poly::var(3, 1);
        let e = analyze(&SphereMap::Poly(VecPoly::new(3, vec![x.clone()])), 2, None).unwrap();
        assert!((harmonic_extension_eval(&e, &[0.5, 0.0, 0.0]).unwrap()[0] - 0.5).abs() < 1e-14);
        let e = analyze(&SphereMap::Poly(VecPoly::new(3, vec![&x * &y])), 2, None).unwrap();
        assert!((harmonic_extension_eval(&e, &[0.5, 0.5, 0.0]).unwrap()[0] - 0.25).abs() < 1e-14);
        let e = analyze(&SphereMap::identity(3), 2, None).unwrap();
        assert!(harmonic_extension_eval(&e, &[0.0; 3]).unwrap().iter().all(|v| v.abs() < 1e-14));
        assert!(harmonic_extension_eval(&e, &[1.0, 1.0, 0.0]).is_err());
    }

    #[test]
    fn grad_origin_examples() {
        let g = grad_origin(&SphereMap::identity(3), None).unwrap();
        assert!((g - DMatrix::<f64>::identity(3, 3)).norm() < 1e-14);
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1.0, 2.0]));
        let g = grad_origin(&SphereMap::Poly(VecPoly::linear(&a)), None).unwrap();
        assert!((g - a).norm() < 1e-14);
        let w = vector_basis(3, 2).unwrap().basis[4].clone();
        assert!(grad_origin(&SphereMap::Poly(w), None).unwrap().norm() < 1e-14);
        // For ψ = ½xᵀHx harmonic, ∮ψ x_i x_j = H_ij/(n(n+2)), so ∇(ψx)_h(0) = H/(n+2).
        let x = Poly::var(3, 0);
        let y = Poly::var(3, 1);
        let psi = &x * &y;
        let mut h = DMatrix::zeros(3, 3);
        h[(0, 1)] = 1.0;
        h[(1, 0)] = 1.0;
        let g = grad_origin(&SphereMap::Poly(VecPoly::times_x(&psi)), None).unwrap();
        assert!((g - h / 5.0).amax() < 1e-14);
    }

    #[test]
    fn poincare_examples() {
        let a = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 0.0, -1.0, 0.5, 3.0, 0.0, 1.0, 1.0]);
        assert!(poincare_deficit(&SphereMap::Poly(VecPoly::linear(&a)), None).unwrap().abs() < 1e-13);
        assert!(
            poincare_deficit(&SphereMap::Poly(VecPoly::constant(3, &[1.0, 2.0, 3.0])), None).unwrap().abs() < 1e-14
        );
        let w = vector_basis(3, 2).unwrap().basis[3].clone();
        let energy = tangential_energy_poly(&w);
        let d = poincare_deficit(&SphereMap::Poly(w), None).unwrap();
        assert!((d - energy / 3.0).abs() < 1e-12);
    }

    #[test]
    fn energy_check_examples() {
        let a = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 0.0, -1.0, 0.5, 3.0, 0.0, 1.0, 1.0]);
        let h = harmonic_energy_check(&SphereMap::Poly(VecPoly::linear(&a)), 2, None).unwrap();
        let t = a.norm_squared() * 2.0 / 3.0;
        assert!((h.tangential - t).abs() < 1e-12);
        assert!((h.ball - 1.5 * t).abs() < 1e-12 && (h.surface - 1.5 * t).abs() < 1e-12);
        assert!(h.bounds_hold);
        let w = vector_basis(3, 3).unwrap().basis[0].clone();
        let h = harmonic_energy_check(&SphereMap::Poly(w), 4, None).unwrap();
        assert!((h.surface - (1.0 + 3.0 / 4.0) * h.tangential).abs() < 1e-10);
        let h = harmonic_energy_check(&SphereMap::Poly(VecPoly::zero(3, 3)), 2, None).unwrap();
        assert_eq!((h.ball, h.surface, h.tangential), (0.0, 0.0, 0.0));
    }

    #[test]
    fn harmonic_poly_json_roundtrip() {
        let h = scalar_basis(3, 2).unwrap()[1].clone();
        let s = serde_json::to_string(&h).unwrap();
        assert!(s.contains("\"terms\"") && s.contains("\"exponents\""));
        let back: HarmonicPoly = serde_json::from_str(&s).unwrap();
        assert_eq!(back, h);
        let bad = r#"{"n":3,"k":2,"terms":[{"exponents":[2,0,0],"coeff":1.0}]}"#;
        assert!(serde_json::from_str::<HarmonicPoly>(bad).is_err());
    }
}
