//! Model coefficients: the damping term `f`, the extensible-beam stiffness
//! `m(‖B^½u‖²) B u`, and the jump coefficient `g`, together with
//!
//! - the radial truncation that upgrades the locally Lipschitz drift to a
//!   globally Lipschitz one (the localization device behind the maximal
//!   solution construction),
//! - lifting of pointwise coefficients `Υ(t, x, u, u_t, ∇u)` and
//!   `Π(t, x, u, u_t, ∇u, z)` from the interval to spectral space, and
//! - empirical certification of the growth/Lipschitz constants the bound
//!   checks consume.
//!
//! The phase-space drift is `F(t,x) = (0, -f(t,x₁,x₂) - m(‖B^½x₁‖²) B x₁)ᵀ`
//! and the jump increment is `G(t,x,z) = (0, g(t,x₁,x₂,z))ᵀ`; both live in
//! the velocity component only.

use std::sync::Arc;

use rand::Rng;
use serde::Serialize;

use crate::error::{CoreError, Result};
use crate::jump::MarkMeasure;
use crate::lyapunov::NonlinearityM;
use crate::seed::SeedRecord;
use crate::spectral::{SpectralBasis, SpectralState};

/// Constants declared for a model, as consumed by the theorems.
#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct DeclaredConstants {
    /// Growth: `‖f(t,x)‖² ≤ K_f (1 + ‖x‖²)`.
    pub k_f: f64,
    /// Growth: `∫‖g‖²ν ≤ K_g (1 + ‖x‖²)`.
    pub k_g: f64,
    /// Global Lipschitz constant of f (or of the truncated drift).
    pub l_f: f64,
    /// Global Lipschitz constant of g in the `L²(ν)` sense.
    pub l_g: f64,
    /// Stability: `∫‖g‖²ν ≤ R_g²‖x‖² + K`.
    pub r_g: f64,
    pub k: f64,
}

/// Scalar mark map `φ(z) = offset + slope·z` for separable jump shapes.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct MarkMap {
    pub offset: f64,
    pub slope: f64,
}

impl MarkMap {
    pub fn constant(c: f64) -> Self {
        MarkMap { offset: c, slope: 0.0 }
    }

    pub fn linear(c: f64) -> Self {
        MarkMap { offset: 0.0, slope: c }
    }

    pub fn eval(&self, z: f64) -> f64 {
        self.offset + self.slope * z
    }
}

/// Pointwise scalar coefficient of `(t, x, u, u_t, ∂u)` and optionally the
/// mark `z`, with its declared interval-level constants.
#[derive(Clone)]
pub struct PointwiseCoefficient {
    pub kind: PointwiseKind,
    pub constants: PointwiseConstants,
}

#[derive(Clone)]
pub enum PointwiseKind {
    /// `c0 + c_u·u + c_ut·u_t + c_grad·∂u`, independent of the mark.
    LinearFields { c0: f64, c_u: f64, c_ut: f64, c_grad: f64 },
    /// `(c0 + c_u·u + c_ut·u_t + c_grad·∂u) · z`.
    LinearFieldsTimesMark { c0: f64, c_u: f64, c_ut: f64, c_grad: f64 },
    /// Arbitrary `(t, x, u, u_t, ∂u, z) -> value`.
    Custom(Arc<dyn Fn(f64, f64, f64, f64, f64, f64) -> f64 + Send + Sync>),
}

impl std::fmt::Debug for PointwiseCoefficient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match &self.kind {
            PointwiseKind::LinearFields { c0, c_u, c_ut, c_grad } => {
                write!(f, "Pointwise({c0} + {c_u} u + {c_ut} u_t + {c_grad} du)")
            }
            PointwiseKind::LinearFieldsTimesMark { c0, c_u, c_ut, c_grad } => {
                write!(f, "Pointwise(({c0} + {c_u} u + {c_ut} u_t + {c_grad} du) z)")
            }
            PointwiseKind::Custom(_) => write!(f, "Pointwise(custom)"),
        }
    }
}

/// Declared constants of the interval-level assumptions on Υ/Π.
#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct PointwiseConstants {
    /// Local Lipschitz constant in `(u, ∂u)` on `|u|, |∂u| ≤ N`.
    pub l_n: f64,
    /// Lipschitz constant in the velocity slot.
    pub l: f64,
    /// `L²(ν)` Lipschitz constant (jump coefficients).
    pub l_prime: f64,
    /// Growth of Υ: `|Υ|² ≤ L_Υ (1 + |u_t|²)`.
    pub l_upsilon: f64,
    /// Growth of Π: `∫|Π|²ν ≤ L_Π (1 + |u_t|²)`.
    pub l_pi: f64,
}

impl PointwiseCoefficient {
    pub fn eval(&self, t: f64, x: f64, u: f64, ut: f64, du: f64, z: f64) -> f64 {
        match &self.kind {
            PointwiseKind::LinearFields { c0, c_u, c_ut, c_grad } => {
                c0 + c_u * u + c_ut * ut + c_grad * du
            }
            PointwiseKind::LinearFieldsTimesMark { c0, c_u, c_ut, c_grad } => {
                (c0 + c_u * u + c_ut * ut + c_grad * du) * z
            }
            PointwiseKind::Custom(f) => f(t, x, u, ut, du, z),
        }
    }
}

/// Drift damping term `f`.
#[derive(Debug, Clone)]
pub enum DriftKind {
    /// `f(x) = β x₂` (velocity damping).
    LinearDamping { beta: f64 },
    /// Lifted pointwise coefficient Υ.
    Pointwise(PointwiseCoefficient),
}

/// Jump coefficient `g`.
#[derive(Debug, Clone)]
pub enum JumpKind {
    /// `g(x, z) = shape · φ(z)` with a fixed velocity-mode shape.
    Separable { shape: Vec<f64>, map: MarkMap },
    /// Lifted pointwise coefficient Π.
    Pointwise(PointwiseCoefficient),
}

/// The full coefficient triple `(m, f, g)` with declared constants and the
/// optional radial truncation of the drift.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    pub nl: NonlinearityM,
    pub f_kind: DriftKind,
    pub g_kind: JumpKind,
    pub constants: DeclaredConstants,
    /// Table of `(R, L_R)` local Lipschitz declarations, diagnostics only.
    pub local_lipschitz: Vec<(f64, f64)>,
    pub trunc_radius: Option<f64>,
}

impl ModelSpec {
    pub fn new(nl: NonlinearityM, f_kind: DriftKind, g_kind: JumpKind, constants: DeclaredConstants) -> Result<Self> {
        if let DriftKind::LinearDamping { beta } = f_kind {
            if beta < 0.0 || !beta.is_finite() {
                return Err(CoreError::config("beta", format!("must be nonnegative, got {beta}")));
            }
        }
        for (name, v) in [
            ("k_f", constants.k_f),
            ("k_g", constants.k_g),
            ("l_f", constants.l_f),
            ("l_g", constants.l_g),
            ("r_g", constants.r_g),
            ("k", constants.k),
        ] {
            if v < 0.0 || !v.is_finite() {
                return Err(CoreError::Config {
                    field: "constants",
                    reason: format!("{name} must be nonnegative, got {v}"),
                });
            }
        }
        Ok(ModelSpec {
            nl,
            f_kind,
            g_kind,
            constants,
            local_lipschitz: Vec::new(),
            trunc_radius: None,
        })
    }

    /// Velocity damping β when the drift is the linear-damping preset.
    pub fn beta(&self) -> Option<f64> {
        match self.f_kind {
            DriftKind::LinearDamping { beta } => Some(beta),
            DriftKind::Pointwise(_) => None,
        }
    }

    /// Radial truncation at radius `R`: the returned model's drift agrees
    /// with the original on the ball `‖x‖_ℋ ≤ R` and is constant along rays
    /// outside it. Idempotent on the ball.
    pub fn truncate_drift(&self, radius: f64) -> Result<ModelSpec> {
        if !(radius > 0.0) {
            return Err(CoreError::config("trunc_radius", format!("must be positive, got {radius}")));
        }
        let mut out = self.clone();
        out.trunc_radius = Some(radius);
        Ok(out)
    }

    fn truncation_scale_raw(&self, basis: &SpectralBasis, a: &[f64], b: &[f64]) -> f64 {
        match self.trunc_radius {
            Some(r) => {
                let mut nsq = 0.0;
                for k in 0..a.len() {
                    let ma = basis.mu()[k] * a[k];
                    nsq += ma * ma + b[k] * b[k];
                }
                let n = nsq.sqrt();
                if n > r {
                    r / n
                } else {
                    1.0
                }
            }
            None => 1.0,
        }
    }

    /// The damping term `f(t, x₁, x₂)` as an H-valued mode vector,
    /// evaluated at the (possibly retracted) state.
    pub fn damping_term(&self, t: f64, x: &SpectralState) -> Result<Vec<f64>> {
        let basis = x.basis();
        let scale = self.truncation_scale_raw(basis, &x.a, &x.b);
        match &self.f_kind {
            DriftKind::LinearDamping { beta } => {
                Ok(x.b.iter().map(|b| beta * b * scale).collect())
            }
            DriftKind::Pointwise(coef) => {
                let mut scratch = GridScratch::new(basis);
                let mut out = vec![0.0; basis.n_modes()];
                lift_into(coef, basis, t, &x.a, &x.b, scale, 0.0, &mut scratch, &mut out)?;
                Ok(out)
            }
        }
    }

    /// The phase-space drift `F(t,x) = (0, -f - m(‖B^½x₁‖²) B x₁)ᵀ`,
    /// routed through the radial retraction when a truncation radius is set.
    pub fn drift_increment(&self, t: f64, x: &SpectralState) -> Result<SpectralState> {
        let mut out = SpectralState::zero(x.basis().clone());
        let mut scratch = GridScratch::new(x.basis());
        self.drift_into(t, x.basis(), &x.a, &x.b, &mut scratch, &mut out.b)?;
        Ok(out)
    }

    pub(crate) fn drift_into(
        &self,
        t: f64,
        basis: &Arc<SpectralBasis>,
        a: &[f64],
        b: &[f64],
        scratch: &mut GridScratch,
        out_b: &mut [f64],
    ) -> Result<()> {
        let scale = self.truncation_scale_raw(basis, a, b);
        let mut s = 0.0;
        for k in 0..a.len() {
            s += basis.mu()[k] * a[k] * a[k];
        }
        let m = self.nl.m(s * scale * scale);
        match &self.f_kind {
            DriftKind::LinearDamping { beta } => {
                for k in 0..out_b.len() {
                    out_b[k] = -beta * b[k] * scale - m * basis.mu()[k] * a[k] * scale;
                }
            }
            DriftKind::Pointwise(coef) => {
                lift_into(coef, basis, t, a, b, scale, 0.0, scratch, out_b)?;
                for k in 0..out_b.len() {
                    out_b[k] = -out_b[k] - m * basis.mu()[k] * a[k] * scale;
                }
            }
        }
        for (k, v) in out_b.iter().enumerate() {
            if !v.is_finite() {
                return Err(CoreError::NonFinite(format!("drift mode {} at t={t}", k + 1)));
            }
        }
        Ok(())
    }

    /// The jump increment `G(t, x, z) = (0, g(t, x₁, x₂, z))ᵀ`.
    pub fn jump_increment(&self, t: f64, x: &SpectralState, z: f64) -> Result<SpectralState> {
        let mut out = SpectralState::zero(x.basis().clone());
        let mut scratch = GridScratch::new(x.basis());
        self.jump_into(t, x.basis(), &x.a, &x.b, z, &mut scratch, &mut out.b)?;
        Ok(out)
    }

    #[allow(clippy::too_many_arguments)]
    pub(crate) fn jump_into(
        &self,
        t: f64,
        basis: &Arc<SpectralBasis>,
        a: &[f64],
        b: &[f64],
        z: f64,
        scratch: &mut GridScratch,
        out_b: &mut [f64],
    ) -> Result<()> {
        match &self.g_kind {
            JumpKind::Separable { shape, map } => {
                if shape.len() != out_b.len() {
                    return Err(CoreError::SizeMismatch {
                        what: "separable jump shape",
                        expected: out_b.len(),
                        got: shape.len(),
                    });
                }
                let phi = map.eval(z);
                for (o, s) in out_b.iter_mut().zip(shape) {
                    *o = s * phi;
                }
            }
            JumpKind::Pointwise(coef) => {
                lift_into(coef, basis, t, a, b, 1.0, z, scratch, out_b)?;
            }
        }
        for (k, v) in out_b.iter().enumerate() {
            if !v.is_finite() {
                return Err(CoreError::NonFinite(format!("jump mode {} at t={t}, z={z}", k + 1)));
            }
        }
        Ok(())
    }

    /// `∫_Z G(t, x, z) ν(dz)` as a velocity mode vector.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn compensator_into(
        &self,
        t: f64,
        basis: &Arc<SpectralBasis>,
        a: &[f64],
        b: &[f64],
        quad: &[(f64, f64)],
        scratch: &mut GridScratch,
        out_b: &mut [f64],
    ) -> Result<()> {
        out_b.fill(0.0);
        match &self.g_kind {
            JumpKind::Separable { shape, map } => {
                let mut mass = 0.0;
                for &(z, w) in quad {
                    mass += w * map.eval(z);
                }
                for (o, s) in out_b.iter_mut().zip(shape) {
                    *o = s * mass;
                }
            }
            JumpKind::Pointwise(_) => {
                if scratch.tmp.len() != out_b.len() {
                    scratch.tmp = vec![0.0; out_b.len()];
                }
                let mut tmp = std::mem::take(&mut scratch.tmp);
                for &(z, w) in quad {
                    self.jump_into(t, basis, a, b, z, scratch, &mut tmp)?;
                    for (o, v) in out_b.iter_mut().zip(&tmp) {
                        *o += w * v;
                    }
                }
                scratch.tmp = tmp;
            }
        }
        Ok(())
    }

    /// Public wrapper of the compensator with a fresh scratch buffer.
    pub fn compensator(&self, t: f64, x: &SpectralState, nu: &MarkMeasure, nodes: usize) -> Result<SpectralState> {
        let mut out = SpectralState::zero(x.basis().clone());
        let mut scratch = GridScratch::new(x.basis());
        self.compensator_into(t, x.basis(), &x.a, &x.b, &nu.quadrature(nodes), &mut scratch, &mut out.b)?;
        Ok(out)
    }

    /// `∫‖g(t,x,z)‖²_H ν(dz)`, the quantity bounded by `K_g(1+‖x‖²)` and by
    /// `R_g²‖x‖² + K`.
    pub fn g_second_moment(&self, t: f64, x: &SpectralState, nu: &MarkMeasure, nodes: usize) -> Result<f64> {
        let quad = nu.quadrature(nodes);
        let mut scratch = GridScratch::new(x.basis());
        let mut tmp = vec![0.0; x.basis().n_modes()];
        let mut acc = 0.0;
        for (z, w) in quad {
            self.jump_into(t, x.basis(), &x.a, &x.b, z, &mut scratch, &mut tmp)?;
            acc += w * tmp.iter().map(|v| v * v).sum::<f64>();
        }
        Ok(acc)
    }
}

/// Scratch buffers for grid-space evaluation of pointwise coefficients.
#[derive(Debug, Clone)]
pub(crate) struct GridScratch {
    u: Vec<f64>,
    ut: Vec<f64>,
    du: Vec<f64>,
    tmp: Vec<f64>,
}

impl GridScratch {
    pub(crate) fn new(basis: &Arc<SpectralBasis>) -> Self {
        let rows = basis.grid_points() + 2;
        GridScratch {
            u: vec![0.0; rows],
            ut: vec![0.0; rows],
            du: vec![0.0; rows],
            tmp: vec![0.0; basis.n_modes()],
        }
    }
}

/// Evaluate a pointwise coefficient at the grid representation of
/// `(scale·a, scale·b)` and project back onto the modes. Allocation-free:
/// the grid images are accumulated directly into the scratch buffers.
#[allow(clippy::too_many_arguments)]
fn lift_into(
    coef: &PointwiseCoefficient,
    basis: &Arc<SpectralBasis>,
    t: f64,
    a: &[f64],
    b: &[f64],
    scale: f64,
    z: f64,
    scratch: &mut GridScratch,
    out: &mut [f64],
) -> Result<()> {
    let rows = basis.grid_points() + 2;
    let eval = basis.eval_table();
    let grad = basis.grad_table();
    scratch.u.fill(0.0);
    scratch.ut.fill(0.0);
    scratch.du.fill(0.0);
    for k in 0..a.len() {
        let (ca, cb) = (a[k] * scale, b[k] * scale);
        let ecol = &eval[k * rows..(k + 1) * rows];
        let gcol = &grad[k * rows..(k + 1) * rows];
        if ca != 0.0 {
            for j in 0..rows {
                scratch.u[j] += ca * ecol[j];
                scratch.du[j] += ca * gcol[j];
            }
        }
        if cb != 0.0 {
            for j in 0..rows {
                scratch.ut[j] += cb * ecol[j];
            }
        }
    }

    let nodes = basis.nodes();
    let weights = basis.weights();
    out.fill(0.0);
    // Boundary nodes carry zero weight; skip them so coefficients need not
    // be defined there.
    for j in 1..rows - 1 {
        let val = coef.eval(t, nodes[j], scratch.u[j], scratch.ut[j], scratch.du[j], z);
        if !val.is_finite() {
            return Err(CoreError::NonFinite(format!("pointwise coefficient at x={}", nodes[j])));
        }
        let wv = weights[j] * val;
        for (k, o) in out.iter_mut().enumerate() {
            *o += wv * eval[k * rows + j];
        }
    }
    Ok(())
}

/// Handle for a lifted pointwise coefficient.
#[derive(Debug, Clone)]
pub struct LiftedCoefficient {
    basis: Arc<SpectralBasis>,
    coef: PointwiseCoefficient,
}

/// Lift a pointwise coefficient onto spectral space via grid evaluation and
/// projection.
pub fn lift_pointwise(coef: PointwiseCoefficient, basis: Arc<SpectralBasis>) -> LiftedCoefficient {
    LiftedCoefficient { basis, coef }
}

impl LiftedCoefficient {
    pub fn eval(&self, t: f64, x: &SpectralState, z: f64) -> Result<Vec<f64>> {
        let mut scratch = GridScratch::new(&self.basis);
        let mut out = vec![0.0; self.basis.n_modes()];
        lift_into(&self.coef, &self.basis, t, &x.a, &x.b, 1.0, z, &mut scratch, &mut out)?;
        Ok(out)
    }

    /// Relative change of the lifted value when the grid is doubled; values
    /// above ~1e-6 indicate grid under-resolution for this state.
    pub fn resolution_defect(&self, t: f64, x: &SpectralState, z: f64) -> Result<f64> {
        let coarse = self.eval(t, x, z)?;
        let fine_basis = match self.basis.bc() {
            crate::spectral::BcKind::Hinged => SpectralBasis::hinged(
                self.basis.length(),
                self.basis.n_modes(),
                2 * self.basis.grid_points(),
            )?,
            crate::spectral::BcKind::Clamped => SpectralBasis::clamped(
                self.basis.length(),
                self.basis.n_modes(),
                2 * self.basis.grid_points(),
            )?,
        };
        let fine_state = SpectralState::new(fine_basis.clone(), x.a.clone(), x.b.clone())?;
        let lifted = lift_pointwise(self.coef.clone(), fine_basis);
        let fine = lifted.eval(t, &fine_state, z)?;
        let mut num = 0.0;
        let mut den = 0.0;
        for (c, f) in coarse.iter().zip(&fine) {
            num += (c - f) * (c - f);
            den += f * f;
        }
        Ok((num / den.max(1e-300)).sqrt().min(f64::MAX))
    }
}

/// Empirical certification of the declared constants by randomized probing.
#[derive(Debug, Clone, Serialize)]
pub struct ConstantsReport {
    pub probe_radius: f64,
    pub n_probes: usize,
    pub seed: SeedRecord,
    /// sup `‖f(x)‖² / (1 + ‖x‖²)` over probes (damping term only).
    pub k_f_damping: f64,
    /// sup `‖F(x)‖²_ℋ / (1 + ‖x‖²)` including the stiffness term; this is
    /// only a ball-local bound, reported for the radius actually probed.
    pub k_f_ball: f64,
    /// sup `∫‖g‖²ν / (1 + ‖x‖²)`.
    pub k_g: f64,
    /// `∫‖g(0,z)‖²ν` (the additive floor K).
    pub k_zero_state: f64,
    /// sup `max(0, (∫‖g‖²ν - K) / ‖x‖²)`.
    pub r_g_sq: f64,
    /// sup pairwise ratio `‖f(x)-f(y)‖ / ‖x-y‖`.
    pub l_f: f64,
    /// `(R, sup pairwise drift ratio on the ball of radius R)`.
    pub l_r_table: Vec<(f64, f64)>,
    /// Declared constants violated by some probe.
    pub violations: Vec<String>,
}

/// Random state with `‖x‖_ℋ = r`, direction uniform in the orthonormalized
/// coordinates.
fn random_state_in_ball(basis: &Arc<SpectralBasis>, radius: f64, rng: &mut impl Rng) -> SpectralState {
    let n = basis.n_modes();
    let mut a = vec![0.0; n];
    let mut b = vec![0.0; n];
    let mut norm_sq = 0.0;
    for k in 0..n {
        // Box-Muller on the orthonormal pair (μ a_k, b_k).
        let u1: f64 = rng.random::<f64>().max(1e-300);
        let u2: f64 = rng.random();
        let r = (-2.0 * u1.ln()).sqrt();
        let ga = r * (2.0 * std::f64::consts::PI * u2).cos();
        let gb = r * (2.0 * std::f64::consts::PI * u2).sin();
        a[k] = ga;
        b[k] = gb;
        norm_sq += ga * ga + gb * gb;
    }
    let target: f64 = radius * rng.random::<f64>();
    let scale = target / norm_sq.sqrt().max(1e-300);
    for k in 0..n {
        a[k] = a[k] * scale / basis.mu()[k];
        b[k] *= scale;
    }
    SpectralState::new(basis.clone(), a, b).expect("sizes match")
}

/// Probe the model with random states and report empirical sup ratios for
/// every constant the theorems consume. Violations of declared constants
/// are report entries, not errors.
pub fn estimate_constants(
    spec: &ModelSpec,
    basis: &Arc<SpectralBasis>,
    nu: &MarkMeasure,
    probe_radius: f64,
    n_probes: usize,
    seed: SeedRecord,
) -> Result<ConstantsReport> {
    if n_probes < 100 {
        return Err(CoreError::config("n_probes", format!("need at least 100, got {n_probes}")));
    }
    if !(probe_radius > 0.0) {
        return Err(CoreError::config("probe_radius", "must be positive"));
    }
    let mut rng = seed.rng();
    let mut report = ConstantsReport {
        probe_radius,
        n_probes,
        seed,
        k_f_damping: 0.0,
        k_f_ball: 0.0,
        k_g: 0.0,
        k_zero_state: 0.0,
        r_g_sq: 0.0,
        l_f: 0.0,
        l_r_table: Vec::new(),
        violations: Vec::new(),
    };

    let zero = SpectralState::zero(basis.clone());
    report.k_zero_state = spec.g_second_moment(0.0, &zero, nu, 64)?;

    let mut prev: Option<SpectralState> = None;
    for _ in 0..n_probes {
        let x = random_state_in_ball(basis, probe_radius, &mut rng);
        let nsq = x.h_norm_sq();

        let f = spec.damping_term(0.0, &x)?;
        let f_sq: f64 = f.iter().map(|v| v * v).sum();
        report.k_f_damping = report.k_f_damping.max(f_sq / (1.0 + nsq));

        let drift = spec.drift_increment(0.0, &x)?;
        report.k_f_ball = report.k_f_ball.max(drift.h_norm_sq() / (1.0 + nsq));

        let gsq = spec.g_second_moment(0.0, &x, nu, 64)?;
        report.k_g = report.k_g.max(gsq / (1.0 + nsq));
        if nsq > 1e-12 {
            report.r_g_sq = report
                .r_g_sq
                .max(((gsq - report.k_zero_state) / nsq).max(0.0));
        }

        if gsq > spec.constants.r_g * spec.constants.r_g * nsq + spec.constants.k + 1e-9 {
            report.violations.push(format!(
                "stability jump bound violated: int |g|^2 nu = {gsq:.6e} > R_g^2 |x|^2 + K = {:.6e}",
                spec.constants.r_g * spec.constants.r_g * nsq + spec.constants.k
            ));
        }
        if f_sq > spec.constants.k_f * (1.0 + nsq) + 1e-9 {
            report.violations.push(format!(
                "growth of f violated: |f|^2 = {f_sq:.6e} > K_f (1+|x|^2) = {:.6e}",
                spec.constants.k_f * (1.0 + nsq)
            ));
        }
        if gsq > spec.constants.k_g * (1.0 + nsq) + 1e-9 {
            report.violations.push(format!(
                "growth of g violated: int |g|^2 nu = {gsq:.6e} > K_g (1+|x|^2) = {:.6e}",
                spec.constants.k_g * (1.0 + nsq)
            ));
        }

        if let Some(y) = prev.take() {
            let dx = x.add_scaled(&y, -1.0)?.h_norm();
            if dx > 1e-9 {
                let fy = spec.damping_term(0.0, &y)?;
                let df: f64 = f
                    .iter()
                    .zip(&fy)
                    .map(|(p, q)| (p - q) * (p - q))
                    .sum::<f64>()
                    .sqrt();
                report.l_f = report.l_f.max(df / dx);
            }
        }
        prev = Some(x);
    }
    if report.l_f > spec.constants.l_f + 1e-9 && spec.constants.l_f > 0.0 {
        report.violations.push(format!(
            "Lipschitz constant of f violated: empirical {:.6e} > declared {:.6e}",
            report.l_f, spec.constants.l_f
        ));
    }

    // Local Lipschitz sweep of the full drift over nested balls.
    for i in 0..4 {
        let r = probe_radius / (1 << (3 - i)) as f64;
        let mut sup = 0.0f64;
        let mut prev: Option<(SpectralState, SpectralState)> = None;
        for _ in 0..(n_probes / 2).max(50) {
            let x = random_state_in_ball(basis, r, &mut rng);
            let fx = spec.drift_increment(0.0, &x)?;
            if let Some((y, fy)) = prev.take() {
                let dx = x.add_scaled(&y, -1.0)?.h_norm();
                if dx > 1e-9 {
                    let df = fx.add_scaled(&fy, -1.0)?.h_norm();
                    sup = sup.max(df / dx);
                }
            }
            prev = Some((x, fx));
        }
        report.l_r_table.push((r, sup));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jump::MarkMeasure;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn basis() -> Arc<SpectralBasis> {
        SpectralBasis::hinged(1.0, 4, 16).unwrap()
    }

    fn zero_constants() -> DeclaredConstants {
        DeclaredConstants::default()
    }

    fn null_jump(n: usize) -> JumpKind {
        JumpKind::Separable {
            shape: vec![0.0; n],
            map: MarkMap::constant(0.0),
        }
    }

    #[test]
    fn zero_model_has_zero_drift() {
        let basis = basis();
        let spec = ModelSpec::new(
            NonlinearityM::none(),
            DriftKind::LinearDamping { beta: 0.0 },
            null_jump(4),
            zero_constants(),
        )
        .unwrap();
        let x = SpectralState::single_mode(basis, 1, 0.4, -0.3).unwrap();
        let f = spec.drift_increment(0.0, &x).unwrap();
        assert_eq!(f.h_norm(), 0.0);
    }

    #[test]
    fn linear_damping_drift() {
        // β=2, x=(0, e₁): F = (0, -2 e₁).
        let basis = basis();
        let spec = ModelSpec::new(
            NonlinearityM::none(),
            DriftKind::LinearDamping { beta: 2.0 },
            null_jump(4),
            zero_constants(),
        )
        .unwrap();
        let x = SpectralState::single_mode(basis, 1, 0.0, 1.0).unwrap();
        let f = spec.drift_increment(0.0, &x).unwrap();
        assert_relative_eq!(f.b[0], -2.0, epsilon = 1e-14);
        assert_eq!(f.a.iter().map(|v| v.abs()).sum::<f64>(), 0.0);
    }

    #[test]
    fn stiffness_term_single_mode() {
        // m(r)=r, x=(e₁, 0): second component -π² · π² e₁ = -π⁴ e₁.
        let basis = basis();
        let spec = ModelSpec::new(
            NonlinearityM::affine(0.0, 1.0, 1.0).unwrap(),
            DriftKind::LinearDamping { beta: 0.0 },
            null_jump(4),
            zero_constants(),
        )
        .unwrap();
        let x = SpectralState::single_mode(basis, 1, 1.0, 0.0).unwrap();
        let f = spec.drift_increment(0.0, &x).unwrap();
        assert_relative_eq!(f.b[0], -PI.powi(4), epsilon = 1e-10);
    }

    #[test]
    fn separable_jump_increment() {
        let basis = basis();
        let mut shape = vec![0.0; 4];
        shape[0] = 1.0;
        let spec = ModelSpec::new(
            NonlinearityM::none(),
            DriftKind::LinearDamping { beta: 0.0 },
            JumpKind::Separable {
                shape,
                map: MarkMap::linear(1.0),
            },
            zero_constants(),
        )
        .unwrap();
        let x = SpectralState::zero(basis);
        let g = spec.jump_increment(0.0, &x, 0.5).unwrap();
        assert_relative_eq!(g.b[0], 0.5, epsilon = 1e-14);
        assert_eq!(g.a.iter().map(|v| v.abs()).sum::<f64>(), 0.0);
    }

    #[test]
    fn pointwise_jump_projects_constant_and_velocity() {
        // Π = c(1 + u_t) at state (0, e₁): projection of the constant onto
        // mode k is 2√2 c/(kπ) for odd k, plus c e₁ from the velocity part.
        let basis = SpectralBasis::hinged(1.0, 4, 256).unwrap();
        let c = 0.7;
        let coef = PointwiseCoefficient {
            kind: PointwiseKind::LinearFields {
                c0: c,
                c_u: 0.0,
                c_ut: c,
                c_grad: 0.0,
            },
            constants: PointwiseConstants::default(),
        };
        let spec = ModelSpec::new(
            NonlinearityM::none(),
            DriftKind::LinearDamping { beta: 0.0 },
            JumpKind::Pointwise(coef),
            zero_constants(),
        )
        .unwrap();
        let x = SpectralState::single_mode(basis, 1, 0.0, 1.0).unwrap();
        let g = spec.jump_increment(0.0, &x, 0.0).unwrap();
        let const_proj = |k: usize| {
            if k % 2 == 1 {
                2.0 * 2.0f64.sqrt() * c / (k as f64 * PI)
            } else {
                0.0
            }
        };
        assert_relative_eq!(g.b[0], const_proj(1) + c, epsilon = 1e-4);
        assert_relative_eq!(g.b[1], 0.0, epsilon = 1e-10);
        assert_relative_eq!(g.b[2], const_proj(3), epsilon = 1e-4);
    }

    #[test]
    fn pointwise_product_of_fields() {
        // Υ = u · u_t at state (e₁, e₁): coefficient on e₁ is
        // ∫ 2 sin²(πξ) √2 sin(πξ) dξ = 8√2/(3π).
        let basis = SpectralBasis::hinged(1.0, 4, 256).unwrap();
        let coef = PointwiseCoefficient {
            kind: PointwiseKind::Custom(Arc::new(|_t, _x, u, ut, _du, _z| u * ut)),
            constants: PointwiseConstants::default(),
        };
        let lifted = lift_pointwise(coef, basis.clone());
        let mut x = SpectralState::zero(basis);
        x.a[0] = 1.0;
        x.b[0] = 1.0;
        let out = lifted.eval(0.0, &x, 0.0).unwrap();
        let expect = 8.0 * 2.0f64.sqrt() / (3.0 * PI);
        assert_relative_eq!(out[0], expect, epsilon = 1e-6);
        assert_relative_eq!(expect, 1.200_4, epsilon = 1e-4);
    }

    #[test]
    fn pointwise_velocity_lift_is_identity_on_modes() {
        // Υ = u_t: lift equals the velocity coefficients exactly.
        let basis = basis();
        let coef = PointwiseCoefficient {
            kind: PointwiseKind::LinearFields {
                c0: 0.0,
                c_u: 0.0,
                c_ut: 1.0,
                c_grad: 0.0,
            },
            constants: PointwiseConstants::default(),
        };
        let lifted = lift_pointwise(coef, basis.clone());
        let mut x = SpectralState::zero(basis);
        x.b = vec![0.3, -0.2, 0.9, 0.0];
        let out = lifted.eval(0.0, &x, 0.0).unwrap();
        for (o, b) in out.iter().zip(&x.b) {
            assert_relative_eq!(o, b, epsilon = 1e-12);
        }
        // Υ = u on an eigenfunction reproduces it.
        let coef = PointwiseCoefficient {
            kind: PointwiseKind::LinearFields {
                c0: 0.0,
                c_u: 1.0,
                c_ut: 0.0,
                c_grad: 0.0,
            },
            constants: PointwiseConstants::default(),
        };
        let lifted = lift_pointwise(coef, x.basis().clone());
        let mut y = SpectralState::zero(x.basis().clone());
        y.a[0] = 1.0;
        let out = lifted.eval(0.0, &y, 0.0).unwrap();
        assert_relative_eq!(out[0], 1.0, epsilon = 1e-12);
        assert!(out[1].abs() < 1e-12);
    }

    #[test]
    fn lift_is_linear() {
        let basis = basis();
        let mk = |c0: f64, c_u: f64, c_ut: f64, c_grad: f64| PointwiseCoefficient {
            kind: PointwiseKind::LinearFields { c0, c_u, c_ut, c_grad },
            constants: PointwiseConstants::default(),
        };
        let alpha = 2.5;
        let u1 = mk(0.1, 0.7, -0.4, 0.2);
        let u2 = mk(-0.3, 0.2, 0.5, -0.6);
        let combined = mk(
            alpha * 0.1 - 0.3,
            alpha * 0.7 + 0.2,
            alpha * -0.4 + 0.5,
            alpha * 0.2 - 0.6,
        );
        let mut x = SpectralState::zero(basis.clone());
        x.a = vec![0.4, -0.1, 0.2, 0.05];
        x.b = vec![-0.2, 0.3, 0.0, 0.6];
        let l1 = lift_pointwise(u1, basis.clone()).eval(0.0, &x, 0.0).unwrap();
        let l2 = lift_pointwise(u2, basis.clone()).eval(0.0, &x, 0.0).unwrap();
        let lc = lift_pointwise(combined, basis).eval(0.0, &x, 0.0).unwrap();
        for k in 0..4 {
            assert_relative_eq!(lc[k], alpha * l1[k] + l2[k], epsilon = 1e-12);
        }
    }

    #[test]
    fn truncation_identity_inside_ball_and_retraction_outside() {
        let basis = basis();
        let spec = ModelSpec::new(
            NonlinearityM::affine(0.0, 1.0, 1.0).unwrap(),
            DriftKind::LinearDamping { beta: 0.5 },
            null_jump(4),
            zero_constants(),
        )
        .unwrap();
        let trunc = spec.truncate_drift(5.0).unwrap();

        let inside = SpectralState::single_mode(basis.clone(), 1, 0.1, 0.2).unwrap();
        assert!(inside.h_norm() <= 5.0);
        let f1 = spec.drift_increment(0.0, &inside).unwrap();
        let f2 = trunc.drift_increment(0.0, &inside).unwrap();
        assert_eq!(f1.b, f2.b);

        // Outside the ball the drift equals the drift at the retracted state.
        let outside = SpectralState::single_mode(basis.clone(), 1, 2.0, 3.0).unwrap();
        assert!(outside.h_norm() > 5.0);
        let scale = 5.0 / outside.h_norm();
        let retracted = outside.scale(scale);
        let f3 = trunc.drift_increment(0.0, &outside).unwrap();
        let f4 = spec.drift_increment(0.0, &retracted).unwrap();
        for k in 0..4 {
            assert_relative_eq!(f3.b[k], f4.b[k], epsilon = 1e-12);
        }
        // Idempotence on the ball: truncating again changes nothing.
        let twice = trunc.truncate_drift(5.0).unwrap();
        let f5 = twice.drift_increment(0.0, &outside).unwrap();
        assert_eq!(f3.b, f5.b);
    }

    #[test]
    fn radial_retraction_halves_at_double_radius() {
        // h = identity, R = 1, ‖x‖ = 2 -> retracted state is x/2.
        let basis = basis();
        let x = SpectralState::single_mode(basis, 1, 0.0, 2.0).unwrap();
        assert_relative_eq!(x.h_norm(), 2.0, epsilon = 1e-14);
        let scale = 1.0 / x.h_norm();
        let retracted = x.scale(scale.min(1.0));
        assert_relative_eq!(retracted.b[0], 1.0, epsilon = 1e-14);
    }

    #[test]
    fn estimated_lipschitz_of_linear_damping_is_beta() {
        let basis = basis();
        let nu = MarkMeasure::atoms(vec![(1.0, 1.0)]).unwrap();
        let spec = ModelSpec::new(
            NonlinearityM::none(),
            DriftKind::LinearDamping { beta: 0.8 },
            null_jump(4),
            DeclaredConstants {
                k_f: 0.64,
                l_f: 0.8,
                ..Default::default()
            },
        )
        .unwrap();
        let report =
            estimate_constants(&spec, &basis, &nu, 2.0, 4000, SeedRecord::new(55, 0)).unwrap();
        // ‖f(x)-f(y)‖ = β‖x₂-y₂‖ <= β‖x-y‖, attained on velocity-only pairs.
        assert!(report.l_f <= 0.8 + 1e-9);
        assert!(report.l_f >= 0.8 * 0.99, "empirical L_f {}", report.l_f);
        assert!(report.violations.is_empty(), "{:?}", report.violations);
    }

    #[test]
    fn estimated_constants_for_constant_jump() {
        // g ≡ c on mode 1: K = Λc², R_g = 0.
        let basis = basis();
        let nu = MarkMeasure::atoms(vec![(1.0, 3.0)]).unwrap();
        let mut shape = vec![0.0; 4];
        shape[0] = 0.5;
        let spec = ModelSpec::new(
            NonlinearityM::none(),
            DriftKind::LinearDamping { beta: 0.0 },
            JumpKind::Separable {
                shape,
                map: MarkMap::constant(1.0),
            },
            DeclaredConstants {
                k_g: 0.75,
                r_g: 0.0,
                k: 0.75,
                ..Default::default()
            },
        )
        .unwrap();
        let report =
            estimate_constants(&spec, &basis, &nu, 2.0, 500, SeedRecord::new(56, 0)).unwrap();
        assert_relative_eq!(report.k_zero_state, 3.0 * 0.25, epsilon = 1e-10);
        assert!(report.r_g_sq < 1e-12);
        assert!(report.k_g <= 0.75 + 1e-9);
        assert!(report.violations.is_empty(), "{:?}", report.violations);
    }

    #[test]
    fn local_lipschitz_grows_quadratically_for_linear_m() {
        let basis = basis();
        let nu = MarkMeasure::atoms(vec![(1.0, 1.0)]).unwrap();
        let spec = ModelSpec::new(
            NonlinearityM::affine(0.0, 1.0, 1.0).unwrap(),
            DriftKind::LinearDamping { beta: 0.0 },
            null_jump(4),
            zero_constants(),
        )
        .unwrap();
        let report =
            estimate_constants(&spec, &basis, &nu, 8.0, 2000, SeedRecord::new(57, 0)).unwrap();
        // Sweep radii 1, 2, 4, 8: the local constant must grow monotonically
        // and roughly like R².
        let tbl = &report.l_r_table;
        assert_eq!(tbl.len(), 4);
        for w in tbl.windows(2) {
            assert!(w[1].1 > w[0].1);
        }
        let ratio = tbl[3].1 / tbl[1].1;
        assert!(ratio > 2.0, "expected superlinear growth, got {ratio}");
    }

    #[test]
    fn truncated_drift_is_globally_lipschitz_empirically() {
        let basis = basis();
        let spec = ModelSpec::new(
            NonlinearityM::affine(0.0, 1.0, 1.0).unwrap(),
            DriftKind::LinearDamping { beta: 0.0 },
            null_jump(4),
            zero_constants(),
        )
        .unwrap();
        let r = 5.0;
        let trunc = spec.truncate_drift(r).unwrap();
        // Ball-5 local constant of the untruncated drift.
        let nu = MarkMeasure::atoms(vec![(1.0, 1.0)]).unwrap();
        let local = estimate_constants(&spec, &basis, &nu, r, 2000, SeedRecord::new(58, 0))
            .unwrap()
            .l_r_table[3]
            .1;
        let mut rng = SeedRecord::new(59, 0).rng();
        let mut sup = 0.0f64;
        for _ in 0..5000 {
            let x = random_state_in_ball(&basis, 10.0 * r, &mut rng);
            let y = random_state_in_ball(&basis, 10.0 * r, &mut rng);
            let dx = x.add_scaled(&y, -1.0).unwrap().h_norm();
            if dx < 1e-9 {
                continue;
            }
            let df = trunc
                .drift_increment(0.0, &x)
                .unwrap()
                .add_scaled(&trunc.drift_increment(0.0, &y).unwrap(), -1.0)
                .unwrap()
                .h_norm();
            sup = sup.max(df / dx);
        }
        assert!(
            sup <= 3.0 * local,
            "truncated ratio {sup} exceeds 3x ball constant {local}"
        );
    }
}
