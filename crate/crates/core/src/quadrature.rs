//! Gauss-Hermite quadrature grids for integrating against the standard
//! multivariate normal prior.
//!
//! One-dimensional physicists' nodes/weights (weight function exp(-x^2)) are
//! computed by Newton refinement of the Hermite roots on the orthonormal
//! recurrence, then rescaled to standard-normal form (node * sqrt(2),
//! weight / sqrt(pi)) and combined by tensor product over K dimensions.

use crate::error::{Error, Result};

/// Tensor-product quadrature grid against N(0, I_K).
///
/// Invariants: `len() == points_per_dim^K`, all weights positive and summing
/// to 1 (up to rounding), and the point set is exactly symmetric about the
/// origin with matching weights.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureGrid {
    k: usize,
    points_per_dim: usize,
    /// L x K, row-major.
    points: Vec<f64>,
    weights: Vec<f64>,
}

impl QuadratureGrid {
    /// Build a K-dimensional grid with `points_per_dim` nodes per axis.
    pub fn build(k: usize, points_per_dim: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::invalid("quadrature dimension must be at least 1"));
        }
        if points_per_dim < 2 {
            return Err(Error::invalid("quadrature needs at least 2 points per dimension"));
        }
        let len = (points_per_dim as f64).powi(k as i32);
        if len > 5e7 {
            return Err(Error::invalid(format!(
                "quadrature grid of {points_per_dim}^{k} points is too large"
            )));
        }

        let (nodes, weights1d) = gauss_hermite(points_per_dim)?;
        // rescale to standard normal
        let nodes: Vec<f64> = nodes.iter().map(|&x| x * std::f64::consts::SQRT_2).collect();
        let wnorm: Vec<f64> = weights1d
            .iter()
            .map(|&w| w / std::f64::consts::PI.sqrt())
            .collect();

        let l = points_per_dim.pow(k as u32);
        let mut points = Vec::with_capacity(l * k);
        let mut weights = Vec::with_capacity(l);
        let mut idx = vec![0usize; k];
        for _ in 0..l {
            let mut w = 1.0;
            for d in 0..k {
                points.push(nodes[idx[d]]);
                w *= wnorm[idx[d]];
            }
            weights.push(w);
            // odometer increment, last dimension fastest
            for d in (0..k).rev() {
                idx[d] += 1;
                if idx[d] < points_per_dim {
                    break;
                }
                idx[d] = 0;
            }
        }
        Ok(QuadratureGrid { k, points_per_dim, points, weights })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn points_per_dim(&self) -> usize {
        self.points_per_dim
    }

    /// Number of grid points L.
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn point(&self, l: usize) -> &[f64] {
        &self.points[l * self.k..(l + 1) * self.k]
    }

    pub fn weight(&self, l: usize) -> f64 {
        self.weights[l]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Approximate `E[f(Z)]` for `Z ~ N(0, I_K)`.
    pub fn integrate<F>(&self, f: F) -> Result<f64>
    where
        F: Fn(&[f64]) -> f64,
    {
        let mut acc = 0.0;
        for l in 0..self.len() {
            let v = f(self.point(l));
            if !v.is_finite() {
                return Err(Error::NonFiniteIntegrand { point: self.point(l).to_vec() });
            }
            acc += self.weights[l] * v;
        }
        Ok(acc)
    }
}

/// Physicists' Gauss-Hermite rule: nodes and weights for the weight function
/// exp(-x^2). Exact for polynomials of degree 2n-1.
pub fn gauss_hermite(n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if n < 1 {
        return Err(Error::invalid("Gauss-Hermite rule needs at least one node"));
    }
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let half = (n + 1) / 2;
    // positive roots found so far, largest first
    let mut pos = vec![0.0; half];

    let mut x = 0.0f64;
    for i in 0..half {
        // initial guesses, largest root first
        x = match i {
            0 => {
                let c = (2 * n + 1) as f64;
                c.sqrt() - 1.85575 * c.powf(-1.0 / 6.0)
            }
            1 => x - 1.14 * (n as f64).powf(0.426) / x,
            2 => 1.86 * x - 0.86 * pos[0],
            3 => 1.91 * x - 0.91 * pos[1],
            _ => 2.0 * x - pos[i - 2],
        };
        // exact middle root for odd n
        if n % 2 == 1 && i == half - 1 {
            x = 0.0;
        }

        for _ in 0..200 {
            let (p, pm1) = herm_orthonormal(n, x);
            let pp = (2.0 * n as f64).sqrt() * pm1; // derivative of h_n
            if pp == 0.0 {
                return Err(Error::numerical(format!(
                    "Gauss-Hermite Newton iteration stalled at n={n}"
                )));
            }
            let dx = p / pp;
            x -= dx;
            if dx.abs() <= 1e-16 * (1.0 + x.abs()) {
                break;
            }
        }
        let (_, pm1) = herm_orthonormal(n, x);
        let pp = (2.0 * n as f64).sqrt() * pm1;
        pos[i] = x;
        // store mirrored pair; exact symmetry by construction
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / (pp * pp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    Ok((nodes, weights))
}

/// Evaluate the orthonormal Hermite polynomials (weight exp(-x^2));
/// returns (h_n(x), h_{n-1}(x)).
#[inline]
fn herm_orthonormal(n: usize, x: f64) -> (f64, f64) {
    let pi_m4 = std::f64::consts::PI.powf(-0.25);
    let mut p0 = pi_m4;
    if n == 0 {
        return (p0, 0.0);
    }
    let mut p1 = std::f64::consts::SQRT_2 * x * p0;
    for j in 1..n {
        let jf = j as f64;
        let p2 = x * (2.0 / (jf + 1.0)).sqrt() * p1 - (jf / (jf + 1.0)).sqrt() * p0;
        p0 = p1;
        p1 = p2;
    }
    (p1, p0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    // Frozen oracle values computed independently with
    // numpy.polynomial.hermite.hermgauss.
    const HG5_NODES: [f64; 5] = [
        -2.0201828704560856e0,
        -9.5857246461381851e-1,
        0.0,
        9.5857246461381851e-1,
        2.0201828704560856e0,
    ];
    const HG5_WEIGHTS: [f64; 5] = [
        1.9953242059045917e-2,
        3.9361932315224107e-1,
        9.4530872048294179e-1,
        3.9361932315224107e-1,
        1.9953242059045917e-2,
    ];
    const HG21_NODE_MAX: f64 = 5.5503518732646784e0;
    const HG21_WEIGHT_MIN: f64 = 3.7203650701360227e-14;
    const HG21_WEIGHT_MID: f64 = 4.7902370312017756e-1; // at node 0
    const HG64_NODE_MAX: f64 = 1.0526123167960547e1;
    const HG64_WEIGHT_MAX_NODE: f64 = 5.5357065358567023e-49;
    const HG64_NODE_32: f64 = 1.3830224498700971e-1;
    const HG64_WEIGHT_32: f64 = 2.7137742494130390e-1;

    #[test]
    fn hermite_rule_matches_reference_values() {
        let (x2, w2) = gauss_hermite(2).unwrap();
        assert_abs_diff_eq!(x2[0], -std::f64::consts::FRAC_1_SQRT_2, epsilon = 1e-15);
        assert_abs_diff_eq!(x2[1], std::f64::consts::FRAC_1_SQRT_2, epsilon = 1e-15);
        assert_abs_diff_eq!(w2[0], 8.8622692545275794e-1, epsilon = 1e-15);
        assert_abs_diff_eq!(w2[1], 8.8622692545275794e-1, epsilon = 1e-15);

        let (x5, w5) = gauss_hermite(5).unwrap();
        for i in 0..5 {
            assert_abs_diff_eq!(x5[i], HG5_NODES[i], epsilon = 1e-13);
            assert_abs_diff_eq!(w5[i], HG5_WEIGHTS[i], epsilon = 1e-13);
        }

        let (x21, w21) = gauss_hermite(21).unwrap();
        assert_abs_diff_eq!(x21[20], HG21_NODE_MAX, epsilon = 1e-13);
        assert_abs_diff_eq!(w21[0], HG21_WEIGHT_MIN, epsilon = 1e-26);
        assert_abs_diff_eq!(x21[10], 0.0);
        assert_abs_diff_eq!(w21[10], HG21_WEIGHT_MID, epsilon = 1e-13);

        let (x64, w64) = gauss_hermite(64).unwrap();
        assert_abs_diff_eq!(x64[63], HG64_NODE_MAX, epsilon = 1e-12);
        assert_abs_diff_eq!(w64[63], HG64_WEIGHT_MAX_NODE, epsilon = 1e-60);
        assert_abs_diff_eq!(x64[32], HG64_NODE_32, epsilon = 1e-13);
        assert_abs_diff_eq!(w64[32], HG64_WEIGHT_32, epsilon = 1e-13);
        let sum: f64 = w64.iter().sum();
        assert_abs_diff_eq!(sum, std::f64::consts::PI.sqrt(), epsilon = 1e-13);
    }

    #[test]
    fn grid_k1_two_points() {
        let g = QuadratureGrid::build(1, 2).unwrap();
        assert_eq!(g.len(), 2);
        assert_abs_diff_eq!(g.point(0)[0], -1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(g.point(1)[0], 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(g.weight(0), 0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(g.weight(1), 0.5, epsilon = 1e-14);
    }

    #[test]
    fn grid_weights_sum_to_one_and_size_is_power() {
        for (k, q) in [(1usize, 7usize), (2, 9), (2, 21), (3, 5)] {
            let g = QuadratureGrid::build(k, q).unwrap();
            assert_eq!(g.len(), q.pow(k as u32));
            let sum: f64 = g.weights().iter().sum();
            assert_abs_diff_eq!(sum, 1.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn grid_is_symmetric_about_origin() {
        let g = QuadratureGrid::build(2, 7).unwrap();
        let q = g.points_per_dim();
        for l in 0..g.len() {
            // mirrored multi-index
            let (i, j) = (l / q, l % q);
            let m = (q - 1 - i) * q + (q - 1 - j);
            for d in 0..2 {
                assert_eq!(g.point(l)[d], -g.point(m)[d], "exact negation required");
            }
            assert_eq!(g.weight(l), g.weight(m));
        }
    }

    #[test]
    fn grid_is_deterministic() {
        let a = QuadratureGrid::build(2, 15).unwrap();
        let b = QuadratureGrid::build(2, 15).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn integrate_constant_odd_and_second_moment() {
        let g = QuadratureGrid::build(2, 5).unwrap();
        assert_abs_diff_eq!(g.integrate(|_| 1.0).unwrap(), 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(g.integrate(|z| z[0]).unwrap(), 0.0, epsilon = 1e-10);
        assert_abs_diff_eq!(g.integrate(|z| z[0] * z[0]).unwrap(), 1.0, epsilon = 1e-8);
    }

    #[test]
    fn integrate_rejects_non_finite_values() {
        let g = QuadratureGrid::build(1, 3).unwrap();
        let err = g
            .integrate(|z| if z[0] > 0.0 { f64::NAN } else { 1.0 })
            .unwrap_err();
        assert!(matches!(err, Error::NonFiniteIntegrand { .. }));
    }

    #[test]
    fn moment_exactness_up_to_rule_degree() {
        // E[Z^p] = 0 for odd p, (p-1)!! for even p; exact for p <= 2q-1.
        fn double_factorial(p: u64) -> f64 {
            let mut v = 1.0;
            let mut i = p;
            while i > 1 {
                v *= i as f64;
                i -= 2;
            }
            v
        }
        for q in 2..=8usize {
            let g = QuadratureGrid::build(1, q).unwrap();
            for p in 0..=(2 * q - 1) {
                let got = g.integrate(|z| z[0].powi(p as i32)).unwrap();
                let want = if p % 2 == 1 {
                    0.0
                } else if p == 0 {
                    1.0
                } else {
                    double_factorial(p as u64 - 1)
                };
                let tol = 1e-8 * want.abs().max(1.0);
                assert!(
                    (got - want).abs() <= tol,
                    "q={q} p={p}: got {got}, want {want}"
                );
            }
        }
    }

    #[test]
    fn build_rejects_bad_sizes() {
        assert!(QuadratureGrid::build(0, 5).is_err());
        assert!(QuadratureGrid::build(2, 1).is_err());
        assert!(QuadratureGrid::build(2, 0).is_err());
    }
}
