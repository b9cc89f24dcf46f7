//! Truncated eigenbasis of the beam operator A on an interval and the
//! phase space ℋ = D(A) × H it induces.
//!
//! With `A ≥ μ₁ I` self-adjoint, the first-order system for `(u, u_t)` has
//! generator `𝒜 = [[0, I], [-A², 0]]`, which per eigenmode of A is an
//! elliptic rotation with frequency `μ_k`. The basis therefore carries, in
//! closed form per mode:
//!
//! - the operators `A`, `B = A`, `A⁻²` (diagonal),
//! - the exact unitary group `e^{t𝒜}` (two-sided),
//! - the graph norm `‖x‖²_ℋ = ‖A x₁‖² + ‖x₂‖²  = Σ μ_k² a_k² + Σ b_k²`.
//!
//! Two boundary conditions are supported on `(0, L)`:
//!
//! - hinged (`u = u'' = 0`): analytic Dirichlet-Laplacian eigenpairs
//!   `μ_k = (kπ/L)²`, `e_k = √(2/L) sin(kπx/L)`;
//! - clamped (`u = u' = 0`): A is the square root of the clamped biharmonic,
//!   discretized with the 5-point stencil and boundary-row elimination,
//!   then solved as a dense symmetric eigenproblem.
//!
//! Grid transforms evaluate mode vectors on `G` interior collocation nodes
//! (plus the two boundary nodes, carried with zero quadrature weight) and
//! project grid functions back; for hinged bases this is the discrete sine
//! transform and the round trip is exact to machine precision for `N ≤ G`.

use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

/// Boundary condition of the beam operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BcKind {
    Hinged,
    Clamped,
}

/// Largest supported clamped mode count; the discrete eigensolve is dense.
pub const MAX_CLAMPED_MODES: usize = 64;

/// Eigenpairs `(μ_k, e_k)` of A with grid transform tables.
///
/// Immutable after construction; share via `Arc` across paths.
#[derive(Debug, Clone)]
pub struct SpectralBasis {
    bc: BcKind,
    length: f64,
    n_modes: usize,
    grid_points: usize,
    mu: Vec<f64>,
    /// Collocation nodes, `G + 2` entries including both boundary points.
    nodes: Vec<f64>,
    /// Quadrature weights matching `nodes`; zero at the boundary.
    weights: Vec<f64>,
    /// `e_k(x_j)`, column-major: `eval[k * (G + 2) + j]`.
    eval: Vec<f64>,
    /// `e_k'(x_j)`, same layout.
    grad: Vec<f64>,
}

impl SpectralBasis {
    /// Hinged (Dirichlet Laplacian) basis on `(0, L)`.
    pub fn hinged(length: f64, n_modes: usize, grid_points: usize) -> Result<Arc<Self>> {
        validate_sizes(length, n_modes, grid_points)?;
        let g = grid_points;
        let h = length / (g + 1) as f64;
        let nodes: Vec<f64> = (0..g + 2).map(|j| j as f64 * h).collect();
        let mut weights = vec![h; g + 2];
        weights[0] = 0.0;
        weights[g + 1] = 0.0;

        let norm = (2.0 / length).sqrt();
        let mut mu = Vec::with_capacity(n_modes);
        let mut eval = vec![0.0; (g + 2) * n_modes];
        let mut grad = vec![0.0; (g + 2) * n_modes];
        for k in 0..n_modes {
            let kk = (k + 1) as f64;
            let freq = kk * std::f64::consts::PI / length;
            mu.push(freq * freq);
            for (j, &x) in nodes.iter().enumerate() {
                eval[k * (g + 2) + j] = norm * (freq * x).sin();
                grad[k * (g + 2) + j] = norm * freq * (freq * x).cos();
            }
        }
        Ok(Arc::new(SpectralBasis {
            bc: BcKind::Hinged,
            length,
            n_modes,
            grid_points,
            mu,
            nodes,
            weights,
            eval,
            grad,
        }))
    }

    /// Clamped basis on `(0, L)`: eigenpairs of the discrete clamped
    /// biharmonic, with `μ_k` the square roots of its eigenvalues.
    pub fn clamped(length: f64, n_modes: usize, grid_points: usize) -> Result<Arc<Self>> {
        validate_sizes(length, n_modes, grid_points)?;
        if n_modes > MAX_CLAMPED_MODES {
            return Err(CoreError::config(
                "n_modes",
                format!("clamped basis capped at {MAX_CLAMPED_MODES} modes, got {n_modes}"),
            ));
        }
        let g = grid_points;
        let h = length / (g + 1) as f64;
        let h4 = h * h * h * h;

        // 5-point biharmonic stencil on interior nodes. u = 0 at both ends;
        // u' = 0 enters through ghost elimination u_{-1} = u_1, which bumps
        // the first and last diagonal entries from 6 to 7.
        let mut m = DMatrix::<f64>::zeros(g, g);
        for i in 0..g {
            m[(i, i)] = if i == 0 || i == g - 1 { 7.0 } else { 6.0 } / h4;
            if i + 1 < g {
                m[(i, i + 1)] = -4.0 / h4;
                m[(i + 1, i)] = -4.0 / h4;
            }
            if i + 2 < g {
                m[(i, i + 2)] = 1.0 / h4;
                m[(i + 2, i)] = 1.0 / h4;
            }
        }
        let eig = SymmetricEigen::new(m);
        let mut order: Vec<usize> = (0..g).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));

        let mut mu = Vec::with_capacity(n_modes);
        let mut eval = vec![0.0; (g + 2) * n_modes];
        let mut grad = vec![0.0; (g + 2) * n_modes];
        let inv_sqrt_h = 1.0 / h.sqrt();
        for k in 0..n_modes {
            let idx = order[k];
            let lambda = eig.eigenvalues[idx];
            if !(lambda > 0.0) {
                return Err(CoreError::numerical(
                    "clamped eigensolve",
                    format!("non-positive biharmonic eigenvalue {lambda:.6e} at mode {}", k + 1),
                ));
            }
            mu.push(lambda.sqrt());
            let col = eig.eigenvectors.column(idx);
            // Euclidean-orthonormal -> L²(0,L)-orthonormal, deterministic sign.
            let mut amax = 0.0f64;
            let mut sign = 1.0;
            for &v in col.iter() {
                if v.abs() > amax {
                    amax = v.abs();
                    sign = if v >= 0.0 { 1.0 } else { -1.0 };
                }
            }
            for j in 0..g {
                eval[k * (g + 2) + (j + 1)] = sign * col[j] * inv_sqrt_h;
            }
            // Second-order differences; boundary values are zero.
            for j in 0..g + 2 {
                let e = |jj: usize| eval[k * (g + 2) + jj];
                grad[k * (g + 2) + j] = if j == 0 {
                    (4.0 * e(1) - e(2)) / (2.0 * h)
                } else if j == g + 1 {
                    (e(g - 1) - 4.0 * e(g)) / (2.0 * h)
                } else {
                    let lo = if j == 1 { 0.0 } else { e(j - 1) };
                    let hi = if j == g { 0.0 } else { e(j + 1) };
                    (hi - lo) / (2.0 * h)
                };
            }
        }
        for k in 1..n_modes {
            if mu[k] <= mu[k - 1] {
                return Err(CoreError::numerical(
                    "clamped eigensolve",
                    format!("eigenvalues not strictly increasing at mode {}", k + 1),
                ));
            }
        }
        let nodes: Vec<f64> = (0..g + 2).map(|j| j as f64 * h).collect();
        let mut weights = vec![h; g + 2];
        weights[0] = 0.0;
        weights[g + 1] = 0.0;
        Ok(Arc::new(SpectralBasis {
            bc: BcKind::Clamped,
            length,
            n_modes,
            grid_points,
            mu,
            nodes,
            weights,
            eval,
            grad,
        }))
    }

    pub fn bc(&self) -> BcKind {
        self.bc
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    /// Number of interior collocation nodes.
    pub fn grid_points(&self) -> usize {
        self.grid_points
    }

    /// Eigenvalues of A, strictly increasing, all positive.
    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    /// Smallest eigenvalue `μ₁` (the uniform positivity constant `A ≥ μ₁ I`).
    pub fn mu1(&self) -> f64 {
        self.mu[0]
    }

    /// Collocation nodes including both boundary points.
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Quadrature weights aligned with [`SpectralBasis::nodes`].
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Raw eigenfunction table `e_k(x_j)`, column-major with `G + 2` rows.
    pub(crate) fn eval_table(&self) -> &[f64] {
        &self.eval
    }

    /// Raw derivative table `e_k'(x_j)`, same layout.
    pub(crate) fn grad_table(&self) -> &[f64] {
        &self.grad
    }

    /// Two bases are interchangeable if they agree structurally.
    pub fn compatible(&self, other: &SpectralBasis) -> bool {
        self.bc == other.bc
            && self.length.to_bits() == other.length.to_bits()
            && self.n_modes == other.n_modes
            && self.grid_points == other.grid_points
    }

    fn check_modes(&self, v: &[f64], what: &'static str) -> Result<()> {
        if v.len() != self.n_modes {
            return Err(CoreError::SizeMismatch {
                what,
                expected: self.n_modes,
                got: v.len(),
            });
        }
        Ok(())
    }

    /// Apply A to a displacement mode vector: multiply mode k by `μ_k`.
    pub fn apply_a(&self, modes: &[f64]) -> Result<Vec<f64>> {
        self.check_modes(modes, "mode vector")?;
        Ok(modes.iter().zip(&self.mu).map(|(c, m)| c * m).collect())
    }

    /// B = A for both boundary conditions covered here.
    pub fn apply_b(&self, modes: &[f64]) -> Result<Vec<f64>> {
        self.apply_a(modes)
    }

    /// Apply A⁻²: multiply mode k by `μ_k⁻²`.
    pub fn apply_a_inv2(&self, modes: &[f64]) -> Result<Vec<f64>> {
        self.check_modes(modes, "mode vector")?;
        Ok(modes.iter().zip(&self.mu).map(|(c, m)| c / (m * m)).collect())
    }

    /// Evaluate a displacement mode vector on the collocation nodes
    /// (boundary points included).
    pub fn to_grid(&self, modes: &[f64]) -> Result<Vec<f64>> {
        self.check_modes(modes, "mode vector")?;
        let rows = self.grid_points + 2;
        let mut out = vec![0.0; rows];
        for (k, &c) in modes.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            let col = &self.eval[k * rows..(k + 1) * rows];
            for (o, &e) in out.iter_mut().zip(col) {
                *o += c * e;
            }
        }
        Ok(out)
    }

    /// Project grid values back onto the mode coefficients.
    pub fn from_grid(&self, values: &[f64]) -> Result<Vec<f64>> {
        let rows = self.grid_points + 2;
        if values.len() != rows {
            return Err(CoreError::SizeMismatch {
                what: "grid values",
                expected: rows,
                got: values.len(),
            });
        }
        let mut out = vec![0.0; self.n_modes];
        for (k, o) in out.iter_mut().enumerate() {
            let col = &self.eval[k * rows..(k + 1) * rows];
            let mut acc = 0.0;
            for ((&v, &e), &w) in values.iter().zip(col).zip(&self.weights) {
                acc += w * v * e;
            }
            *o = acc;
        }
        Ok(out)
    }

    /// Grid values of `∂u/∂x` for a displacement mode vector.
    pub fn grid_gradient(&self, modes: &[f64]) -> Result<Vec<f64>> {
        self.check_modes(modes, "mode vector")?;
        let rows = self.grid_points + 2;
        let mut out = vec![0.0; rows];
        for (k, &c) in modes.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            let col = &self.grad[k * rows..(k + 1) * rows];
            for (o, &e) in out.iter_mut().zip(col) {
                *o += c * e;
            }
        }
        Ok(out)
    }
}

fn validate_sizes(length: f64, n_modes: usize, grid_points: usize) -> Result<()> {
    if !(length > 0.0) || !length.is_finite() {
        return Err(CoreError::config("length", format!("must be positive, got {length}")));
    }
    if n_modes == 0 {
        return Err(CoreError::config("n_modes", "must be at least 1"));
    }
    if grid_points < 2 * n_modes {
        return Err(CoreError::config(
            "grid_points",
            format!("need G >= 2N, got G={grid_points}, N={n_modes}"),
        ));
    }
    Ok(())
}

/// Rotate paired mode coefficients by the exact group `e^{t𝒜}` in place:
/// `a' = cos(μt) a + sin(μt)/μ · b`, `b' = -μ sin(μt) a + cos(μt) b`.
pub(crate) fn rotate_modes(mu: &[f64], a: &mut [f64], b: &mut [f64], t: f64) {
    for k in 0..mu.len() {
        let (s, c) = (mu[k] * t).sin_cos();
        let (ak, bk) = (a[k], b[k]);
        a[k] = c * ak + s / mu[k] * bk;
        b[k] = -mu[k] * s * ak + c * bk;
    }
}

/// Rotate a velocity-only increment `(0, w)` by `e^{t𝒜}` and accumulate
/// `scale` times the result onto `(a, b)`.
pub(crate) fn rotate_velocity_increment(
    mu: &[f64],
    w: &[f64],
    t: f64,
    scale: f64,
    a: &mut [f64],
    b: &mut [f64],
) {
    for k in 0..mu.len() {
        let (s, c) = (mu[k] * t).sin_cos();
        a[k] += scale * s / mu[k] * w[k];
        b[k] += scale * c * w[k];
    }
}

/// One point `𝔲 = (u, u_t)` of the phase space ℋ in basis coordinates.
#[derive(Debug, Clone)]
pub struct SpectralState {
    basis: Arc<SpectralBasis>,
    /// Displacement mode coefficients.
    pub a: Vec<f64>,
    /// Velocity mode coefficients.
    pub b: Vec<f64>,
}

impl SpectralState {
    pub fn new(basis: Arc<SpectralBasis>, a: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        if a.len() != basis.n_modes() || b.len() != basis.n_modes() {
            return Err(CoreError::SizeMismatch {
                what: "state coefficients",
                expected: basis.n_modes(),
                got: a.len().max(b.len()),
            });
        }
        Ok(SpectralState { basis, a, b })
    }

    pub fn zero(basis: Arc<SpectralBasis>) -> Self {
        let n = basis.n_modes();
        SpectralState {
            basis,
            a: vec![0.0; n],
            b: vec![0.0; n],
        }
    }

    /// State with a single excited mode (1-based index).
    pub fn single_mode(basis: Arc<SpectralBasis>, mode: usize, a_amp: f64, b_amp: f64) -> Result<Self> {
        if mode == 0 || mode > basis.n_modes() {
            return Err(CoreError::config(
                "mode",
                format!("mode index {mode} outside 1..={}", basis.n_modes()),
            ));
        }
        let mut s = SpectralState::zero(basis);
        s.a[mode - 1] = a_amp;
        s.b[mode - 1] = b_amp;
        Ok(s)
    }

    pub fn basis(&self) -> &Arc<SpectralBasis> {
        &self.basis
    }

    pub fn check_same_basis(&self, other: &SpectralState) -> Result<()> {
        if Arc::ptr_eq(&self.basis, &other.basis) || self.basis.compatible(&other.basis) {
            Ok(())
        } else {
            Err(CoreError::BasisMismatch(format!(
                "{:?} L={} N={} vs {:?} L={} N={}",
                self.basis.bc(),
                self.basis.length(),
                self.basis.n_modes(),
                other.basis.bc(),
                other.basis.length(),
                other.basis.n_modes(),
            )))
        }
    }

    /// `‖x‖²_ℋ = Σ μ_k² a_k² + Σ b_k²`.
    pub fn h_norm_sq(&self) -> f64 {
        let mut acc = 0.0;
        for k in 0..self.a.len() {
            let ma = self.basis.mu[k] * self.a[k];
            acc += ma * ma + self.b[k] * self.b[k];
        }
        acc
    }

    pub fn h_norm(&self) -> f64 {
        self.h_norm_sq().sqrt()
    }

    /// ℋ inner product `Σ μ_k² a_k a'_k + Σ b_k b'_k`.
    pub fn h_inner(&self, other: &SpectralState) -> Result<f64> {
        self.check_same_basis(other)?;
        let mut acc = 0.0;
        for k in 0..self.a.len() {
            let m2 = self.basis.mu[k] * self.basis.mu[k];
            acc += m2 * self.a[k] * other.a[k] + self.b[k] * other.b[k];
        }
        Ok(acc)
    }

    /// `‖B^{1/2} x₁‖² = Σ μ_k a_k²` (argument of the nonlinearity m).
    pub fn b_half_norm_sq(&self) -> f64 {
        self.a
            .iter()
            .zip(&self.basis.mu)
            .map(|(a, m)| m * a * a)
            .sum()
    }

    /// L² inner product of the displacement parts, `Σ a_k a'_k`.
    pub fn l2_inner_displacement(&self, other: &SpectralState) -> Result<f64> {
        self.check_same_basis(other)?;
        Ok(self.a.iter().zip(&other.a).map(|(x, y)| x * y).sum())
    }

    /// Exact group action `e^{t𝒜}`; defined for every real `t`.
    pub fn group_apply(&self, t: f64) -> SpectralState {
        let mut out = self.clone();
        rotate_modes(&self.basis.mu, &mut out.a, &mut out.b, t);
        out
    }

    /// Generator action `𝒜x = (x₂, -A²x₁)` on the truncated space.
    pub fn generator_apply(&self) -> SpectralState {
        let mut out = self.clone();
        for k in 0..self.a.len() {
            out.a[k] = self.b[k];
            out.b[k] = -self.basis.mu[k] * self.basis.mu[k] * self.a[k];
        }
        out
    }

    /// `self + scale * other`.
    pub fn add_scaled(&self, other: &SpectralState, scale: f64) -> Result<SpectralState> {
        self.check_same_basis(other)?;
        let mut out = self.clone();
        for k in 0..out.a.len() {
            out.a[k] += scale * other.a[k];
            out.b[k] += scale * other.b[k];
        }
        Ok(out)
    }

    pub fn scale(&self, factor: f64) -> SpectralState {
        let mut out = self.clone();
        for k in 0..out.a.len() {
            out.a[k] *= factor;
            out.b[k] *= factor;
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.a.iter().chain(&self.b).all(|v| v.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;
    use std::f64::consts::PI;

    fn random_state(basis: &Arc<SpectralBasis>, rng: &mut impl Rng) -> SpectralState {
        let n = basis.n_modes();
        let a: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        SpectralState::new(basis.clone(), a, b).unwrap()
    }

    #[test]
    fn hinged_eigenvalues_are_exact() {
        let basis = SpectralBasis::hinged(1.0, 1, 4).unwrap();
        assert_relative_eq!(basis.mu()[0], PI * PI, epsilon = 1e-14);
        let basis2 = SpectralBasis::hinged(2.0, 2, 8).unwrap();
        assert_relative_eq!(basis2.mu()[1], PI * PI, epsilon = 1e-14);
    }

    #[test]
    fn hinged_round_trip_is_machine_precision() {
        let basis = SpectralBasis::hinged(1.0, 8, 64).unwrap();
        let mut rng = crate::seed::SeedRecord::new(7, 0).rng();
        let modes: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
        let grid = basis.to_grid(&modes).unwrap();
        let back = basis.from_grid(&grid).unwrap();
        for (m, r) in modes.iter().zip(&back) {
            assert_relative_eq!(m, r, epsilon = 1e-12);
        }
    }

    #[test]
    fn invalid_sizes_name_the_field() {
        let err = SpectralBasis::hinged(0.0, 4, 16).unwrap_err();
        assert!(matches!(err, CoreError::Config { field: "length", .. }));
        let err = SpectralBasis::hinged(1.0, 4, 7).unwrap_err();
        assert!(matches!(err, CoreError::Config { field: "grid_points", .. }));
        let err = SpectralBasis::hinged(1.0, 0, 4).unwrap_err();
        assert!(matches!(err, CoreError::Config { field: "n_modes", .. }));
    }

    #[test]
    fn h_norm_examples() {
        let basis = SpectralBasis::hinged(1.0, 4, 16).unwrap();
        assert_eq!(SpectralState::zero(basis.clone()).h_norm(), 0.0);
        let s = SpectralState::single_mode(basis.clone(), 1, 1.0, 0.0).unwrap();
        assert_relative_eq!(s.h_norm(), PI * PI, epsilon = 1e-14);
        let s = SpectralState::single_mode(basis, 1, 1.0, 1.0).unwrap();
        assert_relative_eq!(s.h_norm(), (PI.powi(4) + 1.0).sqrt(), epsilon = 1e-14);
        assert_relative_eq!(s.h_norm(), 9.920_135_635_867_2, epsilon = 1e-10);
    }

    #[test]
    fn operator_actions() {
        let basis = SpectralBasis::hinged(1.0, 4, 16).unwrap();
        let e1 = {
            let mut v = vec![0.0; 4];
            v[0] = 1.0;
            v
        };
        let ae1 = basis.apply_a(&e1).unwrap();
        assert_relative_eq!(ae1[0], PI * PI, epsilon = 1e-14);
        assert_eq!(&ae1[1..], &[0.0, 0.0, 0.0]);

        let e2 = {
            let mut v = vec![0.0; 4];
            v[1] = 1.0;
            v
        };
        let be2 = basis.apply_b(&e2).unwrap();
        assert_relative_eq!(be2[1], 4.0 * PI * PI, epsilon = 1e-12);

        // A⁻² ∘ A ∘ A = identity to machine precision.
        let mut rng = crate::seed::SeedRecord::new(3, 0).rng();
        let v: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let round = basis
            .apply_a_inv2(&basis.apply_a(&basis.apply_a(&v).unwrap()).unwrap())
            .unwrap();
        for (x, y) in v.iter().zip(&round) {
            assert_relative_eq!(x, y, epsilon = 1e-14);
        }
    }

    #[test]
    fn group_identity_and_period() {
        let basis = SpectralBasis::hinged(1.0, 3, 12).unwrap();
        let mut rng = crate::seed::SeedRecord::new(11, 0).rng();
        let x = random_state(&basis, &mut rng);
        let y = x.group_apply(0.0);
        for k in 0..3 {
            assert_eq!(x.a[k], y.a[k]);
            assert_eq!(x.b[k], y.b[k]);
        }
        // One full rotation period of mode 1.
        let s = SpectralState::single_mode(basis, 1, 0.3, -0.2).unwrap();
        let period = 2.0 * PI / s.basis().mu()[0];
        let back = s.group_apply(period);
        assert_relative_eq!(back.a[0], s.a[0], epsilon = 1e-12);
        assert_relative_eq!(back.b[0], s.b[0], epsilon = 1e-12);
    }

    #[test]
    fn group_is_unitary_and_invertible() {
        let basis = SpectralBasis::hinged(1.0, 6, 24).unwrap();
        let mut rng = crate::seed::SeedRecord::new(5, 0).rng();
        for _ in 0..200 {
            let x = random_state(&basis, &mut rng);
            let t: f64 = rng.random_range(-20.0..20.0);
            let y = x.group_apply(t);
            assert_relative_eq!(y.h_norm(), x.h_norm(), max_relative = 1e-12);
            let z = y.group_apply(-t);
            for k in 0..6 {
                assert_relative_eq!(z.a[k], x.a[k], epsilon = 1e-10, max_relative = 1e-12);
                assert_relative_eq!(z.b[k], x.b[k], epsilon = 1e-10, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn generator_is_group_derivative() {
        let basis = SpectralBasis::hinged(1.0, 4, 16).unwrap();
        let mut rng = crate::seed::SeedRecord::new(13, 0).rng();
        let x = random_state(&basis, &mut rng);
        let gen = x.generator_apply();
        let mut prev_err = f64::INFINITY;
        for &h in &[1e-3, 5e-4, 2.5e-4] {
            let fd = x.group_apply(h).add_scaled(&x, -1.0).unwrap().scale(1.0 / h);
            let err = fd.add_scaled(&gen, -1.0).unwrap().h_norm();
            // O(h): halving h should roughly halve the error.
            assert!(err < prev_err * 0.7, "err={err}, prev={prev_err}");
            prev_err = err;
        }
    }

    #[test]
    fn to_grid_matches_eigenfunction_values() {
        // G = 31 puts a node exactly at x = 1/2.
        let basis = SpectralBasis::hinged(1.0, 8, 31).unwrap();
        let e1 = {
            let mut v = vec![0.0; 8];
            v[0] = 1.0;
            v
        };
        let grid = basis.to_grid(&e1).unwrap();
        let mid = (31 + 1) / 2;
        assert_relative_eq!(grid[mid], 2.0f64.sqrt(), epsilon = 1e-12);
        let grad = basis.grid_gradient(&e1).unwrap();
        assert_relative_eq!(grad[0], 2.0f64.sqrt() * PI, epsilon = 1e-12);
    }

    #[test]
    fn clamped_first_eigenvalue_matches_beam_frequency() {
        // Independent oracle: the clamped-clamped frequency equation
        // cos(κL) cosh(κL) = 1 has first positive root κ₁ ≈ 4.7300408,
        // and the first biharmonic eigenvalue is κ₁⁴ ≈ 500.564.
        let f = |k: f64| (k.cos() * k.cosh()) - 1.0;
        let (mut lo, mut hi) = (4.0, 5.5);
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if f(lo) * f(mid) <= 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let kappa = 0.5 * (lo + hi);
        let exact = kappa.powi(4);
        assert_relative_eq!(exact, 500.564, epsilon = 5e-2);

        // Richardson extrapolation of the second-order discretization.
        let coarse = SpectralBasis::clamped(1.0, 1, 128).unwrap().mu()[0].powi(2);
        let fine = SpectralBasis::clamped(1.0, 1, 256).unwrap().mu()[0].powi(2);
        let ratio = (257.0f64 / 129.0).powi(2);
        let extrap = fine + (fine - coarse) / (ratio - 1.0);
        assert_relative_eq!(extrap, exact, epsilon = 0.05);
        assert_relative_eq!(extrap, 500.564, epsilon = 0.1);
    }

    #[test]
    fn clamped_is_stiffer_than_hinged_and_vanishes_at_ends() {
        let clamped = SpectralBasis::clamped(1.0, 2, 64).unwrap();
        let hinged = SpectralBasis::hinged(1.0, 2, 64).unwrap();
        assert!(clamped.mu1() > hinged.mu1());
        let e1 = {
            let mut v = vec![0.0; 2];
            v[0] = 1.0;
            v
        };
        let grid = clamped.to_grid(&e1).unwrap();
        assert_eq!(grid[0], 0.0);
        assert_eq!(*grid.last().unwrap(), 0.0);
        // Discrete eigenvectors round-trip exactly like the hinged ones.
        let back = clamped.from_grid(&grid).unwrap();
        assert_relative_eq!(back[0], 1.0, epsilon = 1e-10);
        assert!(back[1].abs() < 1e-10);
    }

    #[test]
    fn basis_mismatch_is_rejected() {
        let b1 = SpectralBasis::hinged(1.0, 4, 16).unwrap();
        let b2 = SpectralBasis::hinged(2.0, 4, 16).unwrap();
        let x = SpectralState::zero(b1);
        let y = SpectralState::zero(b2);
        assert!(x.h_inner(&y).is_err());
    }
}
