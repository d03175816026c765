//! Exact moments and quadrature grids on `S^{n-1}` and the unit ball, all under
//! the normalized measure (total mass one).

use std::collections::HashMap;
use std::f64::consts::PI;
use std::num::NonZeroUsize;
use std::sync::{Arc, Mutex, OnceLock};

use gauss_quad::GaussLegendre;
use num_bigint::BigInt;
use num_rational::BigRational;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par::{self, Mode};

/// Normalized integral of `∏ x_i^{p_i}` over `S^{n-1}`.
///
/// Zero when some exponent is odd; otherwise
/// `Γ(n/2) ∏ Γ((p_i+1)/2) / (π^{n/2} Γ((|p|+n)/2))`, evaluated as the
/// equivalent ratio `∏ (p_i-1)!! / (n (n+2) ... (n+|p|-2))`.
pub fn sphere_moment(n: usize, p: &[u32]) -> f64 {
    debug_assert!(n >= 2 && p.len() >= n.min(p.len()));
    if p.iter().any(|&e| e % 2 == 1) {
        return 0.0;
    }
    let mut num_factors = Vec::new();
    for &e in p {
        let mut t = 1u32;
        while t < e {
            num_factors.push(t as f64);
            t += 2;
        }
    }
    let mut value = 1.0;
    for (j, f) in num_factors.iter().enumerate() {
        value *= f / (n as f64 + 2.0 * j as f64);
    }
    value
}

/// Exact rational version of [`sphere_moment`].
pub fn sphere_moment_exact(n: usize, p: &[u32]) -> BigRational {
    if p.iter().any(|&e| e % 2 == 1) {
        return BigRational::from_integer(BigInt::from(0));
    }
    let mut num = BigInt::from(1);
    let mut den = BigInt::from(1);
    let mut j = 0u64;
    for &e in p {
        let mut t = 1u64;
        while t < e as u64 {
            num *= BigInt::from(t);
            den *= BigInt::from(n as u64 + 2 * j);
            t += 2;
            j += 1;
        }
    }
    BigRational::new(num, den)
}

/// Normalized integral of `∏ x_i^{p_i}` over the unit ball `B_1 ⊂ R^n`.
pub fn ball_moment(n: usize, p: &[u32]) -> f64 {
    let total: u32 = p.iter().sum();
    n as f64 / (n as f64 + total as f64) * sphere_moment(n, p)
}

/// Quadrature nodes on `S^{n-1}` with normalized nonnegative weights.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct SphereGrid {
    pub n: usize,
    pub nodes: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    /// Every polynomial of total degree at most `exactness` is integrated exactly.
    pub exactness: usize,
}

/// Quadrature nodes in the open unit ball with normalized nonnegative weights.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct BallGrid {
    pub n: usize,
    pub nodes: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    pub exactness: usize,
}

fn gauss_legendre(q: usize) -> Vec<(f64, f64)> {
    let rule = GaussLegendre::new(NonZeroUsize::new(q.max(1)).expect("positive"));
    rule.as_node_weight_pairs().to_vec()
}

/// Builds the default product grid on `S^{n-1}` for `n ∈ {2,3,4}`.
///
/// - `n = 2`: `resolution` equispaced angles, exact up to degree `resolution - 1`.
/// - `n = 3`: Gauss–Legendre in `x_3` times `2·resolution` azimuths, exact up to `2·resolution - 1`.
/// - `n = 4`: Gauss–Legendre in `s = x_3^2 + x_4^2` (the cosine of the doubled polar
///   angle of Hopf coordinates, whose Jacobian is constant) times two azimuth
///   circles of `2·resolution` points, exact up to `2·resolution - 1`.
pub fn build_sphere_grid(n: usize, resolution: usize) -> Result<SphereGrid> {
    if resolution == 0 {
        return Err(Error::InvalidParameter("resolution must be positive".into()));
    }
    let r = resolution;
    match n {
        2 => {
            let nodes = (0..r)
                .map(|j| {
                    let t = 2.0 * PI * j as f64 / r as f64;
                    vec![t.cos(), t.sin()]
                })
                .collect();
            Ok(SphereGrid { n, nodes, weights: vec![1.0 / r as f64; r], exactness: r - 1 })
        }
        3 => {
            let m = 2 * r;
            let gl = gauss_legendre(r);
            let mut nodes = Vec::with_capacity(r * m);
            let mut weights = Vec::with_capacity(r * m);
            for &(t, w) in &gl {
                let s = (1.0 - t * t).max(0.0).sqrt();
                for j in 0..m {
                    let phi = 2.0 * PI * j as f64 / m as f64;
                    nodes.push(vec![s * phi.cos(), s * phi.sin(), t]);
                    weights.push(0.5 * w / m as f64);
                }
            }
            Ok(SphereGrid { n, nodes, weights, exactness: 2 * r - 1 })
        }
        4 => {
            let m = 2 * r;
            let gl = gauss_legendre(r.div_ceil(2));
            let mut nodes = Vec::with_capacity(gl.len() * m * m);
            let mut weights = Vec::with_capacity(gl.len() * m * m);
            for &(t, w) in &gl {
                let s = 0.5 * (1.0 + t);
                let (a, b) = ((1.0 - s).sqrt(), s.sqrt());
                for j in 0..m {
                    let p1 = 2.0 * PI * j as f64 / m as f64;
                    for l in 0..m {
                        let p2 = 2.0 * PI * l as f64 / m as f64;
                        nodes.push(vec![a * p1.cos(), a * p1.sin(), b * p2.cos(), b * p2.sin()]);
                        weights.push(0.5 * w / (m * m) as f64);
                    }
                }
            }
            Ok(SphereGrid { n, nodes, weights, exactness: 2 * r - 1 })
        }
        _ => Err(Error::UnsupportedDimension(n)),
    }
}

/// Circle grid made of Gauss–Legendre panels between consecutive angles of
/// `breaks` (increasing, with the last panel closing the circle back to the
/// first break). Integrands that are smooth on each panel are integrated to
/// machine precision even when they have kinks at the breaks.
pub fn build_segmented_circle(breaks: &[f64], per_segment: usize) -> Result<SphereGrid> {
    if breaks.is_empty() || per_segment == 0 {
        return Err(Error::InvalidParameter("need at least one break and one node per segment".into()));
    }
    for w in breaks.windows(2) {
        if w[1] <= w[0] {
            return Err(Error::InvalidParameter("breaks must be strictly increasing".into()));
        }
    }
    if breaks[breaks.len() - 1] - breaks[0] >= 2.0 * PI {
        return Err(Error::InvalidParameter("breaks must span less than a full turn".into()));
    }
    let gl = gauss_legendre(per_segment);
    let mut ends: Vec<f64> = breaks.to_vec();
    ends.push(breaks[0] + 2.0 * PI);
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    for w in ends.windows(2) {
        let (a, b) = (w[0], w[1]);
        let half = 0.5 * (b - a);
        for &(t, gw) in &gl {
            let theta = a + half * (1.0 + t);
            nodes.push(vec![theta.cos(), theta.sin()]);
            weights.push(gw * half / (2.0 * PI));
        }
    }
    Ok(SphereGrid { n: 2, nodes, weights, exactness: 0 })
}

/// Product grid on the unit ball: a sphere grid times Gauss–Legendre radii with
/// the radial density `n r^{n-1}`.
pub fn build_ball_grid(n: usize, resolution: usize) -> Result<BallGrid> {
    let sphere = build_sphere_grid(n, resolution)?;
    let q = resolution.max(1);
    let gl = gauss_legendre(q);
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    for &(t, w) in &gl {
        let r = 0.5 * (1.0 + t);
        let radial = 0.5 * w * n as f64 * r.powi(n as i32 - 1);
        for (x, sw) in sphere.nodes.iter().zip(&sphere.weights) {
            nodes.push(x.iter().map(|c| r * c).collect());
            weights.push(radial * sw);
        }
    }
    let radial_exact = (2 * q - 1).saturating_sub(n - 1);
    Ok(BallGrid { n, nodes, weights, exactness: radial_exact.min(sphere.exactness) })
}

impl SphereGrid {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Weighted sum of `f` over the nodes.
    pub fn integrate_fn<F>(&self, mode: Mode, f: F) -> f64
    where
        F: Fn(&[f64]) -> f64 + Sync + Send,
    {
        par::sum_range(mode, self.len(), |i| self.weights[i] * f(&self.nodes[i]))
    }
}

impl BallGrid {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate_fn<F>(&self, mode: Mode, f: F) -> f64
    where
        F: Fn(&[f64]) -> f64 + Sync + Send,
    {
        par::sum_range(mode, self.len(), |i| self.weights[i] * f(&self.nodes[i]))
    }
}

/// Weighted sum of per-node samples.
pub fn integrate(grid: &SphereGrid, samples: &[f64]) -> Result<f64> {
    if samples.len() != grid.len() {
        return Err(Error::LengthMismatch { expected: grid.len(), got: samples.len() });
    }
    Ok(par::sum_range(Mode::default(), samples.len(), |i| grid.weights[i] * samples[i]))
}

/// Default grid resolution for dimension `n`.
pub fn default_resolution(n: usize) -> usize {
    match n {
        2 => 64,
        3 => 48,
        _ => 24,
    }
}

/// Shared grid at the default resolution for dimension `n`.
pub fn default_grid(n: usize) -> Result<Arc<SphereGrid>> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<SphereGrid>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(g) = cache.lock().expect("grid cache poisoned").get(&n) {
        return Ok(g.clone());
    }
    let g = Arc::new(build_sphere_grid(n, default_resolution(n))?);
    cache.lock().expect("grid cache poisoned").insert(n, g.clone());
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_traits::ToPrimitive;

    fn mono(x: &[f64], p: &[u32]) -> f64 {
        x.iter().zip(p).map(|(a, &e)| a.powi(e as i32)).product()
    }

    #[test]
    fn moment_examples() {
        assert_eq!(sphere_moment(3, &[0, 0, 0]), 1.0);
        assert!((sphere_moment(3, &[2, 0, 0]) - 1.0 / 3.0).abs() < 1e-15);
        assert!((sphere_moment(3, &[4, 0, 0]) - 0.2).abs() < 1e-15);
        assert!((ball_moment(3, &[2, 0, 0]) - 0.2).abs() < 1e-15);
        assert_eq!(ball_moment(3, &[1, 0, 0]), 0.0);
        assert_eq!(ball_moment(3, &[0, 0, 0]), 1.0);
    }

    #[test]
    fn exact_moment_matches_float() {
        for p in [[2u32, 4, 0, 2], [6, 0, 2, 0], [0, 0, 0, 8]] {
            let e = sphere_moment_exact(4, &p).to_f64().unwrap();
            assert!((e - sphere_moment(4, &p)).abs() < 1e-16);
        }
    }

    #[test]
    fn coordinate_squares_sum_to_one() {
        for n in 2..=5 {
            let s: f64 = (0..n)
                .map(|i| {
                    let mut p = vec![0; n];
                    p[i] = 2;
                    sphere_moment(n, &p)
                })
                .sum();
            assert!((s - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn grid_examples() {
        let g = build_sphere_grid(2, 8).unwrap();
        assert_eq!(g.len(), 8);
        assert!(g.weights.iter().all(|&w| w == 0.125));
        let g = build_sphere_grid(3, 16).unwrap();
        let v = g.integrate_fn(Mode::default(), |x| x[0].powi(4));
        assert!((v - 0.2).abs() < 1e-12);
        let v = g.integrate_fn(Mode::default(), |x| x[0] * x[1]);
        assert!(v.abs() < 1e-14);
        let samples: Vec<f64> = g.nodes.iter().map(|x| x[2] * x[2]).collect();
        assert!((integrate(&g, &samples).unwrap() - 1.0 / 3.0).abs() < 1e-12);
        assert!(integrate(&g, &samples[1..]).is_err());
        assert!(build_sphere_grid(5, 4).is_err());
    }

    #[test]
    fn grids_reproduce_moments_up_to_exactness() {
        for (n, r) in [(2usize, 9usize), (3, 5), (4, 4)] {
            let g = build_sphere_grid(n, r).unwrap();
            let wsum: f64 = g.weights.iter().sum();
            assert!((wsum - 1.0).abs() < 1e-14);
            for x in &g.nodes {
                let norm: f64 = x.iter().map(|c| c * c).sum::<f64>().sqrt();
                assert!((norm - 1.0).abs() < 1e-14);
            }
            let d = g.exactness as u32;
            let mut p = vec![0u32; n];
            loop {
                let total: u32 = p.iter().sum();
                if total <= d {
                    let q = g.integrate_fn(Mode::Sequential, |x| mono(x, &p));
                    assert!((q - sphere_moment(n, &p)).abs() < 1e-12, "n={n} p={p:?}");
                }
                let mut i = 0;
                loop {
                    if i == n {
                        break;
                    }
                    p[i] += 1;
                    if p[i] <= d {
                        break;
                    }
                    p[i] = 0;
                    i += 1;
                }
                if i == n {
                    break;
                }
            }
        }
    }

    #[test]
    fn ball_grid_reproduces_ball_moments() {
        let g = build_ball_grid(3, 6).unwrap();
        let wsum: f64 = g.weights.iter().sum();
        assert!((wsum - 1.0).abs() < 1e-13);
        for p in [[2u32, 0, 0], [2, 2, 0], [0, 0, 4], [1, 1, 0]] {
            let q = g.integrate_fn(Mode::Sequential, |x| mono(x, &p));
            assert!((q - ball_moment(3, &p)).abs() < 1e-12);
        }
    }

    #[test]
    fn segmented_circle_integrates_kinked_function() {
        let g = build_segmented_circle(&[0.3, 1.0], 20).unwrap();
        let v = g.integrate_fn(Mode::default(), |x| {
            let t = x[1].atan2(x[0]).rem_euclid(2.0 * PI);
            if (0.3..1.0).contains(&t) {
                1.0
            } else {
                0.0
            }
        });
        assert!((v - 0.7 / (2.0 * PI)).abs() < 1e-14);
    }

    #[test]
    fn grid_json_shape() {
        let g = build_sphere_grid(2, 4).unwrap();
        let s = serde_json::to_value(&g).unwrap();
        assert!(s.get("nodes").is_some() && s.get("weights").is_some() && s.get("exactness").is_some());
    }
}
