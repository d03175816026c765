//! The first-order operator `A(w) = (div_S w)x - Σ_j x_j ∇_T w^j` on vector
//! harmonics, the solenoidal split of `H_{n,k}`, the three `A`-eigenspaces and
//! the projection onto the kernel `H_{n,1,2} ⊕ H_{n,2,3}`.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harmonic_basis::{grad_origin, harmonic_space, SampledMap, SphereMap, SphereMapJson};
use crate::par::{self, Mode};
use crate::poly::{Poly, VecPoly};
use crate::quadrature::SphereGrid;

/// Which part of `H_{n,k}` a subspace spans.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Full,
    Sol,
    SolPerp,
    Eig1,
    Eig2,
    Eig3,
    Kernel,
}

impl Label {
    /// Row index `i` for eigenspace labels.
    pub fn row(self) -> Option<usize> {
        match self {
            Label::Eig1 => Some(1),
            Label::Eig2 => Some(2),
            Label::Eig3 => Some(3),
            _ => None,
        }
    }

    pub fn eig(i: usize) -> Result<Label> {
        match i {
            1 => Ok(Label::Eig1),
            2 => Ok(Label::Eig2),
            3 => Ok(Label::Eig3),
            _ => Err(Error::InvalidIndex(format!("eigenspace row {i}"))),
        }
    }
}

/// An L²-orthonormal family of polynomial vector fields.
#[derive(Clone, Debug)]
pub struct Subspace {
    pub n: usize,
    /// Degree of the fields; `0` for the mixed-degree kernel.
    pub k: usize,
    pub label: Label,
    /// Eigenvalue of `A` shared by all elements, when the label is an eigenspace.
    pub sigma: Option<f64>,
    pub basis: Vec<VecPoly>,
    /// Stacked degree-`k` coefficients of the basis (columns), when single-degree.
    pub coords: Option<DMatrix<f64>>,
}

#[derive(Serialize)]
struct SubspaceJson<'a> {
    n: usize,
    k: usize,
    label: Label,
    sigma: Option<f64>,
    basis: Vec<SphereMapJson>,
    #[serde(skip)]
    _marker: std::marker::PhantomData<&'a ()>,
}

impl Subspace {
    pub fn from_coords(n: usize, k: usize, label: Label, sigma: Option<f64>, coords: DMatrix<f64>) -> Self {
        let space = harmonic_space(n, k);
        let basis = (0..coords.ncols()).map(|j| space.to_vecpoly(coords.column(j).as_slice())).collect();
        Subspace { n, k, label, sigma, basis, coords: Some(coords) }
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.basis.is_empty()
    }

    /// `Σ c_j b_j`.
    pub fn combine(&self, c: &[f64]) -> Result<VecPoly> {
        if c.len() != self.dim() {
            return Err(Error::LengthMismatch { expected: self.dim(), got: c.len() });
        }
        let mut out = VecPoly::zero(self.n, self.n);
        for (cj, b) in c.iter().zip(&self.basis) {
            out.axpy(*cj, b);
        }
        Ok(out)
    }

    /// L² projection of a polynomial field onto the span.
    pub fn project(&self, w: &VecPoly) -> VecPoly {
        let mut out = VecPoly::zero(self.n, self.n);
        for b in &self.basis {
            out.axpy(w.sphere_inner(b), b);
        }
        out
    }

    /// `∮⟨b_i, b_j⟩ - δ_ij` in max norm.
    pub fn orthonormality_defect(&self) -> f64 {
        let d = self.dim();
        let mut worst: f64 = 0.0;
        for i in 0..d {
            for j in 0..=i {
                let g = self.basis[i].sphere_inner(&self.basis[j]) - f64::from(u8::from(i == j));
                worst = worst.max(g.abs());
            }
        }
        worst
    }

    pub fn to_json_string(&self) -> Result<String> {
        let j = SubspaceJson {
            n: self.n,
            k: self.k,
            label: self.label,
            sigma: self.sigma,
            basis: self.basis.iter().map(|b| SphereMap::Poly(b.clone()).to_json()).collect(),
            _marker: std::marker::PhantomData,
        };
        serde_json::to_string(&j).map_err(|e| Error::InvalidParameter(e.to_string()))
    }
}

/// `A(w)` for a polynomial field, using the ambient-gradient form, which agrees
/// with the tangential form on the sphere.
pub fn apply_a_poly(w: &VecPoly) -> Result<VecPoly> {
    let n = w.n();
    if w.m() != n {
        return Err(Error::DimensionMismatch(format!("A needs m = n, got m = {}, n = {n}", w.m())));
    }
    let div = w.divergence();
    let comps = (0..n)
        .map(|l| {
            let mut c = div.mul_var(l);
            for j in 0..n {
                c.axpy(-1.0, &w.comp(j).deriv(l).mul_var(j));
            }
            c
        })
        .collect();
    Ok(VecPoly::new(n, comps))
}

/// Pointwise `A(w)` on the nodes of a sampled field: `(tr G)x - Gᵀx`.
pub fn apply_a_sampled(w: &SampledMap) -> Result<Vec<Vec<f64>>> {
    let n = w.n();
    if w.m != n {
        return Err(Error::DimensionMismatch(format!("A needs m = n, got m = {}, n = {n}", w.m)));
    }
    Ok(par::map_range(Mode::default(), w.grid.len(), |i| {
        let x = DVector::from_column_slice(&w.grid.nodes[i]);
        let g = &w.grads[i];
        let v = &x * g.trace() - g.transpose() * &x;
        v.iter().copied().collect()
    }))
}

/// `A(w)` as a sphere map; defined for polynomial fields.
pub fn apply_a(w: &SphereMap) -> Result<SphereMap> {
    match w {
        SphereMap::Poly(p) => Ok(SphereMap::Poly(apply_a_poly(p)?)),
        _ => Err(Error::InvalidParameter(
            "A of a non-polynomial map has no gradient data; use apply_a_sampled for node values".into(),
        )),
    }
}

/// Spectral data of `A` on `H_{n,k}` in orthonormal basis coordinates.
#[derive(Debug)]
pub struct BlockSpectrum {
    pub n: usize,
    pub k: usize,
    /// Matrix of `A` on the orthonormal basis of `H_{n,k}` (before symmetrization).
    pub matrix: DMatrix<f64>,
    /// Raw eigenvalues of the symmetrized matrix, ascending.
    pub eigenvalues: Vec<f64>,
    /// Eigenspace coordinates (columns) for rows `i = 1, 2, 3`.
    pub eig: [DMatrix<f64>; 3],
    pub sol: DMatrix<f64>,
    pub sol_perp: DMatrix<f64>,
    /// Largest distance of a raw eigenvalue from its cluster center.
    pub cluster_defect: f64,
    /// `‖P_eig3 - P_sol⊥‖_max`.
    pub eig3_sol_perp_gap: f64,
}

/// Expected eigenvalue `σ_{n,k,i}`: `-k`, `1`, `k+n-2`.
pub fn sigma(n: usize, k: usize, i: usize) -> f64 {
    match i {
        1 => -(k as f64),
        2 => 1.0,
        _ => (k + n - 2) as f64,
    }
}

fn a_coeff_matrix(n: usize, k: usize) -> DMatrix<f64> {
    let space = harmonic_space(n, k);
    let nm = space.num_monos();
    let mut a = DMatrix::zeros(n * nm, n * nm);
    for i in 0..n {
        for (j, e) in space.monos.iter().enumerate() {
            let mut comps = vec![Poly::zero(n); n];
            comps[i] = Poly::monomial(n, *e, 1.0);
            let img = apply_a_poly(&VecPoly::new(n, comps)).expect("square field");
            let col = space.coeffs_of(&img);
            a.column_mut(i * nm + j).copy_from_slice(&col);
        }
    }
    a
}

fn div_coeff_matrix(n: usize, k: usize) -> DMatrix<f64> {
    let space = harmonic_space(n, k);
    let lower = harmonic_space(n, k - 1);
    let nm = space.num_monos();
    let mut d = DMatrix::zeros(lower.num_monos(), n * nm);
    for i in 0..n {
        for (j, e) in space.monos.iter().enumerate() {
            let col = Poly::monomial(n, *e, 1.0).deriv(i).coeffs_on(&lower.monos);
            d.column_mut(i * nm + j).copy_from_slice(&col);
        }
    }
    d
}

fn projector(q: &DMatrix<f64>) -> DMatrix<f64> {
    q * q.transpose()
}

fn build_spectrum(n: usize, k: usize) -> Result<BlockSpectrum> {
    let space = harmonic_space(n, k);
    let v = &space.vector;
    let matrix = v.transpose() * space.block_gram_times(&(a_coeff_matrix(n, k) * v));
    let sym = (&matrix + matrix.transpose()) * 0.5;
    let d = sym.nrows();
    let eigen = SymmetricEigen::new(sym);
    let centers = [sigma(n, k, 1), sigma(n, k, 2), sigma(n, k, 3)];
    let mut cols: [Vec<DVector<f64>>; 3] = Default::default();
    let mut defect: f64 = 0.0;
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eigen.eigenvalues[a].total_cmp(&eigen.eigenvalues[b]));
    for &j in &order {
        let ev = eigen.eigenvalues[j];
        // Rows 2 and 3 share the value 1 only when n = 2, k = 1, where row 3 is empty.
        let (slot, dist) = centers
            .iter()
            .enumerate()
            .map(|(s, c)| (s, (ev - c).abs()))
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
            .expect("three centers");
        let slot = if k == 1 && slot == 2 { 1 } else { slot };
        defect = defect.max(dist);
        if dist > 1e-8 {
            return Err(Error::Integrity(format!(
                "eigenvalue {ev} of A on H_({n},{k}) is {dist:e} away from the nearest of {centers:?}"
            )));
        }
        cols[slot].push(eigen.eigenvectors.column(j).into_owned());
    }
    let to_mat = |c: &Vec<DVector<f64>>| {
        if c.is_empty() {
            DMatrix::zeros(d, 0)
        } else {
            DMatrix::from_columns(c)
        }
    };
    let eig = [to_mat(&cols[0]), to_mat(&cols[1]), to_mat(&cols[2])];

    let dv = div_coeff_matrix(n, k) * v;
    let gram = dv.transpose() * dv;
    let ge = SymmetricEigen::new(gram);
    // Unit-norm fields with nonzero divergence have divergence of order one.
    let scale = ge.eigenvalues.iter().fold(1.0f64, |a, b| a.max(b.abs()));
    let mut sol_cols = Vec::new();
    let mut perp_cols = Vec::new();
    let mut gorder: Vec<usize> = (0..d).collect();
    gorder.sort_by(|&a, &b| ge.eigenvalues[a].total_cmp(&ge.eigenvalues[b]));
    for &j in &gorder {
        let c = ge.eigenvectors.column(j).into_owned();
        if ge.eigenvalues[j] <= 1e-10 * scale {
            sol_cols.push(c);
        } else {
            perp_cols.push(c);
        }
    }
    let sol = to_mat(&sol_cols);
    let sol_perp = to_mat(&perp_cols);
    let gap = if eig[2].ncols() == sol_perp.ncols() {
        (projector(&eig[2]) - projector(&sol_perp)).amax()
    } else {
        f64::INFINITY
    };
    if gap > 1e-8 {
        return Err(Error::Integrity(format!(
            "A-eigenspace for σ = k+n-2 differs from the solenoidal complement on H_({n},{k}): gap {gap:e}"
        )));
    }
    Ok(BlockSpectrum {
        n,
        k,
        matrix,
        eigenvalues: order.iter().map(|&j| eigen.eigenvalues[j]).collect(),
        eig,
        sol,
        sol_perp,
        cluster_defect: defect,
        eig3_sol_perp_gap: if gap.is_finite() { gap } else { 0.0 },
    })
}

fn check_block(n: usize, k: usize) -> Result<()> {
    if !(2..=crate::poly::MAX_N).contains(&n) {
        return Err(Error::UnsupportedDimension(n));
    }
    if k == 0 {
        return Err(Error::InvalidParameter("H_{n,k} needs k ≥ 1".into()));
    }
    Ok(())
}

/// Cached spectral data of `A` on `H_{n,k}`.
pub fn block_spectrum(n: usize, k: usize) -> Result<Arc<BlockSpectrum>> {
    check_block(n, k)?;
    type Cache = Mutex<HashMap<(usize, usize), Arc<BlockSpectrum>>>;
    static CACHE: OnceLock<Cache> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(s) = cache.lock().expect("cache lock").get(&(n, k)) {
        return Ok(s.clone());
    }
    let built = Arc::new(build_spectrum(n, k)?);
    Ok(cache.lock().expect("cache lock").entry((n, k)).or_insert(built).clone())
}

fn lift(n: usize, k: usize, label: Label, sigma: Option<f64>, local: &DMatrix<f64>) -> Subspace {
    let space = harmonic_space(n, k);
    Subspace::from_coords(n, k, label, sigma, &space.vector * local)
}

/// `H_{n,k,sol}` (harmonic extension divergence-free) and its complement in `H_{n,k}`.
pub fn helmholtz_split(n: usize, k: usize) -> Result<(Subspace, Subspace)> {
    let s = block_spectrum(n, k)?;
    Ok((lift(n, k, Label::Sol, None, &s.sol), lift(n, k, Label::SolPerp, None, &s.sol_perp)))
}

/// The eigenspaces of `A` on `H_{n,k}` for `σ = -k, 1, k+n-2`.
pub fn eigenspaces(n: usize, k: usize) -> Result<(Subspace, Subspace, Subspace)> {
    let s = block_spectrum(n, k)?;
    let e = |i: usize| lift(n, k, Label::eig(i).expect("row"), Some(sigma(n, k, i)), &s.eig[i - 1]);
    Ok((e(1), e(2), e(3)))
}

/// A single eigenspace `H_{n,k,i}`.
pub fn eigenspace(n: usize, k: usize, i: usize) -> Result<Subspace> {
    let (a, b, c) = eigenspaces(n, k)?;
    match i {
        1 => Ok(a),
        2 => Ok(b),
        3 => Ok(c),
        _ => Err(Error::InvalidIndex(format!("eigenspace row {i}"))),
    }
}

/// `‖M - Mᵀ‖_max` for the matrix of `A` on `H_{n,k}`.
pub fn self_adjointness_residual(n: usize, k: usize) -> Result<f64> {
    let s = block_spectrum(n, k)?;
    Ok((&s.matrix - s.matrix.transpose()).amax())
}

/// Orthonormal basis of `H_{n,0} = H_{n,1,2} ⊕ H_{n,2,3}`.
pub fn kernel_subspace(n: usize) -> Result<Subspace> {
    let (_, e12, _) = eigenspaces(n, 1)?;
    let (_, _, e23) = eigenspaces(n, 2)?;
    let mut basis = e12.basis;
    basis.extend(e23.basis);
    Ok(Subspace { n, k: 0, label: Label::Kernel, sigma: None, basis, coords: None })
}

/// The two linear functionals characterizing `H_{n,0}`: the skew part of
/// `∇w_h(0) = n∮w⊗x` and the vector `∮(div w_h)x`.
#[derive(Clone, Debug)]
pub struct KernelMoments {
    pub grad_origin: DMatrix<f64>,
    pub div_moment: Vec<f64>,
}

impl KernelMoments {
    pub fn skew(&self) -> DMatrix<f64> {
        (&self.grad_origin - self.grad_origin.transpose()) * 0.5
    }

    /// `‖skew part‖_max` and `max |∮(div w_h)x|`.
    pub fn residuals(&self) -> (f64, f64) {
        (self.skew().amax(), self.div_moment.iter().fold(0.0, |a, b| a.max(b.abs())))
    }
}

/// `∮(div w_h) x_k = (n+2) Σ_l ∮ w^l (x_l x_k - δ_lk/n)` and `∇w_h(0)`.
pub fn kernel_moments(w: &SphereMap, grid: Option<&Arc<SphereGrid>>) -> Result<KernelMoments> {
    let n = w.n();
    if w.m() != n {
        return Err(Error::DimensionMismatch("kernel moments need m = n".into()));
    }
    let g0 = grad_origin(w, grid)?;
    let nf = n as f64;
    let div_moment = match w {
        SphereMap::Poly(p) => (0..n)
            .map(|k| {
                (0..n)
                    .map(|l| {
                        let mut q = Poly::var(n, l).mul_var(k);
                        if l == k {
                            q.add_term([0; crate::poly::MAX_N], -1.0 / nf);
                        }
                        p.comp(l).sphere_inner(&q)
                    })
                    .sum::<f64>()
                    * (nf + 2.0)
            })
            .collect(),
        _ => {
            let grid = w
                .native_grid()
                .or_else(|| grid.cloned())
                .ok_or_else(|| Error::InvalidParameter("a grid is required for non-polynomial maps".into()))?;
            let s = w.sample(&grid)?;
            let v = par::sum_vec_range(Mode::default(), grid.len(), n, |i| {
                let x = &grid.nodes[i];
                let u = &s.values[i];
                let ux: f64 = u.iter().zip(x).map(|(a, b)| a * b).sum();
                (0..n).map(|k| grid.weights[i] * (ux * x[k] - u[k] / nf)).collect()
            });
            v.into_iter().map(|c| c * (nf + 2.0)).collect()
        }
    };
    Ok(KernelMoments { grad_origin: g0, div_moment })
}

/// Result of projecting a field onto `H_{n,0}`.
#[derive(Clone, Debug)]
pub struct KernelProjection {
    /// `Π_{n,0} w`.
    pub projection: VecPoly,
    /// Removed `∮w`.
    pub removed_mean: Vec<f64>,
    /// Removed coefficient of `x` (that is `∮⟨w,x⟩`).
    pub removed_radial: f64,
    /// Characterization residuals of `w - Π_{n,0}w` (after the removals).
    pub residual_skew: f64,
    pub residual_div_moment: f64,
}

/// Projects `w` onto `H_n` (removing the mean and the `x` component, which are
/// reported) and then onto `H_{n,0}`.
pub fn project_kernel(w: &SphereMap, grid: Option<&Arc<SphereGrid>>) -> Result<KernelProjection> {
    let n = w.n();
    if w.m() != n {
        return Err(Error::DimensionMismatch("kernel projection needs m = n".into()));
    }
    let ker = kernel_subspace(n)?;
    let (mean, radial, coeffs) = match w {
        SphereMap::Poly(p) => {
            let mean = p.sphere_mean();
            let radial = p.sphere_inner(&VecPoly::identity(n));
            let c: Vec<f64> = ker.basis.iter().map(|b| p.sphere_inner(b)).collect();
            (mean, radial, c)
        }
        _ => {
            let grid = w
                .native_grid()
                .or_else(|| grid.cloned())
                .ok_or_else(|| Error::InvalidParameter("a grid is required for non-polynomial maps".into()))?;
            let s = w.sample(&grid)?;
            let mean = s.mean();
            let radial = s.integrate(Mode::default(), |x, u, _| u.iter().zip(x).map(|(a, b)| a * b).sum());
            let c = ker
                .basis
                .iter()
                .map(|b| {
                    let comp = crate::poly::CompiledMap::new(b);
                    s.integrate(Mode::default(), |x, u, _| comp.value(x).iter().zip(u).map(|(a, b)| a * b).sum())
                })
                .collect();
            (mean, radial, c)
        }
    };
    // Kernel elements have zero mean and are orthogonal to x, so the removals
    // do not change the coefficients.
    let projection = ker.combine(&coeffs)?;
    let removed = VecPoly::constant(n, &mean).add(&VecPoly::identity(n).scale(radial)).add(&projection);
    let (rs, rd) = match w {
        SphereMap::Poly(p) => kernel_moments(&SphereMap::Poly(p.sub(&removed)), None)?.residuals(),
        _ => {
            let m0 = kernel_moments(w, grid)?;
            let m1 = kernel_moments(&SphereMap::Poly(removed), None)?;
            let d = KernelMoments {
                grad_origin: m0.grad_origin - m1.grad_origin,
                div_moment: m0.div_moment.iter().zip(&m1.div_moment).map(|(a, b)| a - b).collect(),
            };
            d.residuals()
        }
    };
    Ok(KernelProjection {
        projection,
        removed_mean: mean,
        removed_radial: radial,
        residual_skew: rs,
        residual_div_moment: rd,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn skew3() -> DMatrix<f64> {
        DMatrix::from_row_slice(3, 3, &[0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0])
    }

    #[test]
    fn apply_a_examples() {
        let w = VecPoly::linear(&skew3());
        let aw = apply_a_poly(&w).unwrap();
        assert!(aw.sub(&w).max_abs_coeff() < 1e-14);
        let l = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let w = VecPoly::linear(&l);
        let aw = apply_a_poly(&w).unwrap();
        assert!(aw.add(&w).max_abs_coeff() < 1e-14);
        assert!(apply_a_poly(&VecPoly::zero(3, 3)).unwrap().is_zero());
        assert!(apply_a_poly(&VecPoly::zero(3, 2)).is_err());
    }

    #[test]
    fn spectra_examples() {
        for (n, k) in [(3, 2), (3, 1), (4, 3), (2, 3)] {
            let s = block_spectrum(n, k).unwrap();
            assert!(s.cluster_defect < 1e-8);
            let dims: Vec<usize> = s.eig.iter().map(|m| m.ncols()).collect();
            assert_eq!(dims.iter().sum::<usize>(), crate::harmonic_basis::vector_dim(n, k));
            if k == 1 {
                assert_eq!(dims[2], 0);
                assert_eq!(dims[1], n * (n - 1) / 2);
            }
        }
    }

    #[test]
    fn helmholtz_examples() {
        let (sol, perp) = helmholtz_split(3, 1).unwrap();
        assert_eq!((sol.dim(), perp.dim()), (8, 0));
        let (_, perp) = helmholtz_split(3, 2).unwrap();
        assert_eq!(perp.dim(), 3);
        let (_, perp) = helmholtz_split(4, 2).unwrap();
        assert_eq!(perp.dim(), 4);
        let (sol, _) = helmholtz_split(3, 3).unwrap();
        for b in &sol.basis {
            assert!(b.divergence().max_abs_coeff() < 1e-10);
        }
    }

    #[test]
    fn self_adjoint_blocks() {
        for k in 1..=4 {
            assert!(self_adjointness_residual(3, k).unwrap() < 1e-10);
        }
    }

    #[test]
    fn kernel_projection_examples() {
        let w = SphereMap::Poly(VecPoly::linear(&skew3()));
        let p = project_kernel(&w, None).unwrap();
        assert!(p.projection.sub(w.as_poly().unwrap()).max_abs_coeff() < 1e-12);
        let w3 = eigenspace(3, 3, 1).unwrap().basis[0].clone();
        assert!(project_kernel(&SphereMap::Poly(w3), None).unwrap().projection.max_abs_coeff() < 1e-12);
        let l = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 0.0, 2.0, -1.0, 0.0, 0.0, 0.0, 0.0]);
        let p = project_kernel(&SphereMap::Poly(VecPoly::linear(&l)), None).unwrap();
        assert!(p.projection.max_abs_coeff() < 1e-12);
        assert!(p.residual_skew < 1e-8 && p.residual_div_moment < 1e-8);
    }

    #[test]
    fn subspace_json_has_label() {
        let s = eigenspace(3, 1, 2).unwrap();
        let j = s.to_json_string().unwrap();
        assert!(j.contains("\"label\":\"eig2\""));
    }
}
