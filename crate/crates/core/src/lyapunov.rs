//! Lyapunov machinery: the functionals used by the nonexplosion and
//! stability checks, and the damped-energy operator P.
//!
//! - `V(x)  = ½‖x‖²_ℋ + ½M(‖B^½x₁‖²)` drives the nonexplosion (Khasminskii)
//!   bound; `M(s) = ∫₀ˢ m(r) dr`.
//! - `Φ(x) = ½⟨Px,x⟩_ℋ + M(‖B^½x₁‖²)` drives the exponential mean-square
//!   decay estimate, with
//!
//! ```text
//!     P = [[β²A⁻² + 2I,  βA⁻²],
//!          [βI,          2I  ]]
//! ```
//!
//! P is block-diagonal in the eigenbasis of A, so its ℋ-operator norm and
//! all of its quadratic forms are evaluated exactly per mode.

use std::sync::Arc;

use crate::error::{CoreError, Result};
use crate::numeric::adaptive_simpson;
use crate::spectral::{SpectralBasis, SpectralState};

/// The nonnegative C¹ stiffness nonlinearity `m` with its antiderivative,
/// plus the declared constant `α` with `y·m(y) ≥ α·M(y)`.
#[derive(Clone)]
pub struct NonlinearityM {
    kind: MKind,
    alpha: f64,
}

#[derive(Clone)]
enum MKind {
    /// `m(r) = a + b·r`, the extensible-beam (Woinowsky-Krieger) form.
    Affine { a: f64, b: f64 },
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl std::fmt::Debug for NonlinearityM {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match &self.kind {
            MKind::Affine { a, b } => write!(f, "NonlinearityM::affine(a={a}, b={b}, alpha={})", self.alpha),
            MKind::Custom(_) => write!(f, "NonlinearityM::custom(alpha={})", self.alpha),
        }
    }
}

impl NonlinearityM {
    /// Affine `m(r) = a + b·r` with `a, b ≥ 0`. Any `α ≤ 1` is valid since
    /// `y·m(y) = ay + by² ≥ ay + by²/2 = M(y)`.
    pub fn affine(a: f64, b: f64, alpha: f64) -> Result<Self> {
        if a < 0.0 || b < 0.0 {
            return Err(CoreError::config("m", format!("affine m needs a, b >= 0, got a={a}, b={b}")));
        }
        if !(alpha > 0.0) {
            return Err(CoreError::config("alpha", format!("must be positive, got {alpha}")));
        }
        let nl = NonlinearityM {
            kind: MKind::Affine { a, b },
            alpha,
        };
        nl.verify_alpha()?;
        Ok(nl)
    }

    /// Identically zero nonlinearity (linear beam).
    pub fn none() -> Self {
        NonlinearityM {
            kind: MKind::Affine { a: 0.0, b: 0.0 },
            alpha: 1.0,
        }
    }

    /// Arbitrary nonnegative C¹ function; `M` falls back to adaptive
    /// quadrature with absolute tolerance 1e-12.
    pub fn custom(m: Arc<dyn Fn(f64) -> f64 + Send + Sync>, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0) {
            return Err(CoreError::config("alpha", format!("must be positive, got {alpha}")));
        }
        let nl = NonlinearityM {
            kind: MKind::Custom(m),
            alpha,
        };
        nl.verify_alpha()?;
        Ok(nl)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Point value `m(y)`, `y ≥ 0`.
    pub fn m(&self, y: f64) -> f64 {
        match &self.kind {
            MKind::Affine { a, b } => a + b * y,
            MKind::Custom(f) => f(y),
        }
    }

    /// `M(s) = ∫₀ˢ m(r) dr`; closed form for the affine case.
    pub fn antiderivative(&self, s: f64) -> Result<f64> {
        if s < 0.0 {
            return Err(CoreError::Domain(format!("M is defined for s >= 0, got {s}")));
        }
        Ok(match &self.kind {
            MKind::Affine { a, b } => a * s + 0.5 * b * s * s,
            MKind::Custom(f) => adaptive_simpson(&|r| f(r), 0.0, s, 1e-12),
        })
    }

    /// Sampled verification of `m ≥ 0`, `M` nondecreasing and
    /// `y·m(y) ≥ α·M(y)` on a log-spaced grid.
    pub fn verify_alpha(&self) -> Result<()> {
        let mut prev_m_int = 0.0;
        for i in 0..=120 {
            let y = 10f64.powf(-6.0 + 12.0 * i as f64 / 120.0);
            let m = self.m(y);
            if !(m >= 0.0) {
                return Err(CoreError::Domain(format!("m({y}) = {m} is negative")));
            }
            let mm = self.antiderivative(y)?;
            if mm + 1e-12 < prev_m_int {
                return Err(CoreError::Domain(format!("M not nondecreasing at y = {y}")));
            }
            prev_m_int = mm;
            if y * m - self.alpha * mm < -1e-12 {
                return Err(CoreError::Domain(format!(
                    "y·m(y) >= alpha·M(y) fails at y = {y}: {} < {}",
                    y * m,
                    self.alpha * mm
                )));
            }
        }
        Ok(())
    }
}

/// The operator P as per-mode 2×2 blocks `[[β²μ⁻² + 2, βμ⁻²], [β, 2]]`,
/// with its ℋ-operator norm cached.
#[derive(Debug, Clone)]
pub struct POperator {
    beta: f64,
    basis: Arc<SpectralBasis>,
    norm: f64,
}

impl POperator {
    pub fn new(basis: Arc<SpectralBasis>, beta: f64) -> Result<Self> {
        if beta < 0.0 || !beta.is_finite() {
            return Err(CoreError::config("beta", format!("must be nonnegative, got {beta}")));
        }
        let norm = basis
            .mu()
            .iter()
            .map(|&mu| mode_block_norm(beta, mu))
            .fold(0.0f64, f64::max);
        Ok(POperator { beta, basis, norm })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn basis(&self) -> &Arc<SpectralBasis> {
        &self.basis
    }

    /// Exact operator norm `‖P‖_{ℒ(ℋ)}` (largest per-mode singular value in
    /// the orthonormalized coordinates `(μa, b)`).
    pub fn norm(&self) -> f64 {
        self.norm
    }

    /// The 2×2 block acting on `(a_k, b_k)`.
    pub fn block(&self, k: usize) -> [[f64; 2]; 2] {
        let mu2 = self.basis.mu()[k] * self.basis.mu()[k];
        [
            [self.beta * self.beta / mu2 + 2.0, self.beta / mu2],
            [self.beta, 2.0],
        ]
    }

    /// `Px`, block-diagonal product.
    pub fn apply(&self, x: &SpectralState) -> Result<SpectralState> {
        if !self.basis.compatible(x.basis()) {
            return Err(CoreError::BasisMismatch("P and state bases differ".into()));
        }
        let mut out = x.clone();
        for k in 0..x.a.len() {
            let blk = self.block(k);
            out.a[k] = blk[0][0] * x.a[k] + blk[0][1] * x.b[k];
            out.b[k] = blk[1][0] * x.a[k] + blk[1][1] * x.b[k];
        }
        Ok(out)
    }

    /// Quadratic form `⟨Px, x⟩_ℋ`.
    pub fn inner(&self, x: &SpectralState) -> Result<f64> {
        self.apply(x)?.h_inner(x)
    }

    /// The drift identity `⟨𝒜x, Px⟩_ℋ = -β‖Ax₁‖² + β²⟨x₁,x₂⟩ + β‖x₂‖²`,
    /// evaluated both directly and in closed form; disagreement beyond
    /// 1e-10 relative is reported as an identity violation.
    pub fn identity_drift(&self, x: &SpectralState) -> Result<f64> {
        let direct = self.apply(x)?.h_inner(&x.generator_apply())?;
        let norm_a_sq: f64 = x
            .a
            .iter()
            .zip(self.basis.mu())
            .map(|(a, m)| (m * a) * (m * a))
            .sum();
        let inner_x1_x2: f64 = x.a.iter().zip(&x.b).map(|(a, b)| a * b).sum();
        let norm_b_sq: f64 = x.b.iter().map(|b| b * b).sum();
        let closed = -self.beta * norm_a_sq + self.beta * self.beta * inner_x1_x2 + self.beta * norm_b_sq;
        let scale = direct.abs().max(closed.abs()).max(1e-300);
        if (direct - closed).abs() > 1e-10 * scale.max(1.0) {
            return Err(CoreError::IdentityViolation(format!(
                "<Ax,Px> direct {direct:.15e} vs closed form {closed:.15e}"
            )));
        }
        Ok(direct)
    }
}

/// Largest eigenvalue of the symmetric block `[[c² + 2, c], [c, 2]]` with
/// `c = β/μ`, i.e. the block of P in the orthonormalized coordinates.
fn mode_block_norm(beta: f64, mu: f64) -> f64 {
    let c = beta / mu;
    0.5 * (c * c + 4.0 + c * (c * c + 4.0).sqrt())
}

/// `V(x) = ½‖x‖²_ℋ + ½M(‖B^½x₁‖²)`, the nonexplosion Lyapunov function.
pub fn v_lyapunov(x: &SpectralState, nl: &NonlinearityM) -> f64 {
    0.5 * x.h_norm_sq()
        + 0.5
            * nl.antiderivative(x.b_half_norm_sq())
                .expect("b_half_norm_sq is nonnegative")
}

/// `Φ(x) = ½⟨Px,x⟩_ℋ + M(‖B^½x₁‖²)`, the stability Lyapunov function.
pub fn phi_lyapunov(x: &SpectralState, p: &POperator, nl: &NonlinearityM) -> Result<f64> {
    Ok(0.5 * p.inner(x)? + nl.antiderivative(x.b_half_norm_sq())?)
}

/// `ℰ(x) = ‖x‖²_ℋ + M(‖B^½x₁‖²)`; the harness takes expectations of this.
pub fn energy(x: &SpectralState, nl: &NonlinearityM) -> f64 {
    x.h_norm_sq()
        + nl.antiderivative(x.b_half_norm_sq())
            .expect("b_half_norm_sq is nonnegative")
}

/// `DV(x) = x + m(‖B^½x₁‖²) (A⁻²Bx₁, 0)ᵀ`; per mode `A⁻²B = μ⁻¹`.
pub fn dv_apply(x: &SpectralState, nl: &NonlinearityM) -> SpectralState {
    let m = nl.m(x.b_half_norm_sq());
    let mut out = x.clone();
    for k in 0..x.a.len() {
        out.a[k] += m * x.a[k] / x.basis().mu()[k];
    }
    out
}

/// Supremum of admissible decay rates,
/// `λ_max = max(0, min(2‖P‖⁻¹(β − 2Cβ² − R_g²), αβ))` with
/// `C = max{1/(2μ₁²), ½}`. Zero signals that the stability theorem does not
/// apply with these constants.
pub fn lambda_window(beta: f64, mu1: f64, r_g: f64, alpha: f64, p: &POperator) -> f64 {
    let c = (1.0 / (2.0 * mu1 * mu1)).max(0.5);
    let gap = beta - 2.0 * c * beta * beta - r_g * r_g;
    let rate = (2.0 / p.norm() * gap).min(alpha * beta);
    rate.max(0.0)
}
