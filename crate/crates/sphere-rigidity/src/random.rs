//! Seeded random inputs: points, rotations, polynomial maps and harmonic fields.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::Result;
use crate::operator_a::{eigenspace, Subspace};
use crate::poly::{monomials, Poly, VecPoly};

pub type SeededRng = ChaCha8Rng;

pub fn rng(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal_vec<R: Rng>(rng: &mut R, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

pub fn unit_vector<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    loop {
        let v = normal_vec(rng, n);
        let r = v.iter().map(|c| c * c).sum::<f64>().sqrt();
        if r > 1e-8 {
            return v.into_iter().map(|c| c / r).collect();
        }
    }
}

/// Haar-distributed rotation in `SO(n)`.
pub fn rotation<R: Rng>(rng: &mut R, n: usize) -> DMatrix<f64> {
    let g = DMatrix::from_vec(n, n, normal_vec(rng, n * n));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    if q.determinant() < 0.0 {
        q.column_mut(0).neg_mut();
    }
    q
}

/// Polynomial map `R^n → R^m` with Gaussian coefficients on all monomials of degree `≤ degree`,
/// each degree block scaled by `scale`.
pub fn poly_map<R: Rng>(rng: &mut R, n: usize, m: usize, degree: usize, scale: f64) -> VecPoly {
    let comps = (0..m)
        .map(|_| {
            let mut p = Poly::zero(n);
            for d in 0..=degree {
                for e in monomials(n, d) {
                    p.add_term(e, scale * rng.sample::<f64, _>(StandardNormal));
                }
            }
            p
        })
        .collect();
    VecPoly::new(n, comps)
}

/// Unit-L² random element of a subspace.
pub fn unit_in<R: Rng>(rng: &mut R, s: &Subspace) -> Result<VecPoly> {
    let c = unit_vector(rng, s.dim());
    s.combine(&c)
}

/// Random element of the span of `H_{n,k,i}` for `1 ≤ k ≤ kmax`, with independent
/// Gaussian coordinates in every eigenspace basis.
pub fn h_field<R: Rng>(rng: &mut R, n: usize, kmax: usize) -> Result<VecPoly> {
    let mut w = VecPoly::zero(n, n);
    for k in 1..=kmax {
        for i in 1..=3 {
            let s = eigenspace(n, k, i)?;
            if s.is_empty() {
                continue;
            }
            w.axpy(1.0, &s.combine(&normal_vec(rng, s.dim()))?);
        }
    }
    Ok(w)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_stream() {
        let a = normal_vec(&mut rng(3), 5);
        let b = normal_vec(&mut rng(3), 5);
        assert_eq!(a, b);
    }

    #[test]
    fn rotations_are_special_orthogonal() {
        let mut r = rng(1);
        for n in 2..=4 {
            let q = rotation(&mut r, n);
            assert!((q.transpose() * &q - DMatrix::<f64>::identity(n, n)).amax() < 1e-12);
            assert!((q.determinant() - 1.0).abs() < 1e-12);
        }
    }
}
