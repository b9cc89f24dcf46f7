//! Randomized verification battery for the exact operator identities the
//! stability analysis rests on: the P-operator sandwich, self-adjointness
//! and drift pairing, the damping pairing (the sum of both bilinear terms),
//! the Lyapunov derivative identity `⟨DV(x), 𝒜x + F(x)⟩ = -⟨x₂, f⟩`, and
//! unitarity/group law of `e^{t𝒜}`. All are exact in the truncated basis,
//! so the battery checks them to tight relative tolerance on random states.

use std::sync::Arc;

use rand::Rng;
use serde::Serialize;

use crate::error::Result;
use crate::lyapunov::{dv_apply, NonlinearityM, POperator};
use crate::seed::SeedRecord;
use crate::spectral::{SpectralBasis, SpectralState};

/// Outcome of one identity over the random state batch.
#[derive(Debug, Clone, Serialize)]
pub struct IdentityCheck {
    pub name: String,
    /// Largest relative violation observed.
    pub max_rel_err: f64,
    pub tol: f64,
    pub passed: bool,
}

fn random_state(basis: &Arc<SpectralBasis>, scale: f64, rng: &mut impl Rng) -> SpectralState {
    let n = basis.n_modes();
    let mut a = vec![0.0; n];
    let mut b = vec![0.0; n];
    for k in 0..n {
        a[k] = scale * rng.random_range(-1.0..1.0) / basis.mu()[k];
        b[k] = scale * rng.random_range(-1.0..1.0);
    }
    SpectralState::new(basis.clone(), a, b).expect("sizes match")
}

/// Run the full identity battery on `n_states` random states.
///
/// `beta` parameterizes P and the damping `f(x) = β x₂`; `nl` enters the
/// Lyapunov derivative identity through `m`.
pub fn operator_identity_suite(
    basis: &Arc<SpectralBasis>,
    beta: f64,
    nl: &NonlinearityM,
    n_states: usize,
    seed: SeedRecord,
    tol: f64,
) -> Result<Vec<IdentityCheck>> {
    let p = POperator::new(basis.clone(), beta)?;
    let mut rng = seed.rng();
    let mut unitarity = 0.0f64;
    let mut group_law = 0.0f64;
    let mut group_inverse = 0.0f64;
    let mut sandwich = 0.0f64;
    let mut self_adjoint = 0.0f64;
    let mut drift_pairing = 0.0f64;
    let mut damping_pairing = 0.0f64;
    let mut dv_identity = 0.0f64;

    for _ in 0..n_states {
        let x = random_state(basis, 2.0, &mut rng);
        let y = random_state(basis, 2.0, &mut rng);
        let norm_sq = x.h_norm_sq().max(1e-300);
        let t: f64 = rng.random_range(-10.0..10.0);
        let s: f64 = rng.random_range(-10.0..10.0);

        // Unitarity, group law, inverse.
        let xt = x.group_apply(t);
        unitarity = unitarity.max((xt.h_norm() / x.h_norm() - 1.0).abs());
        let via_two = x.group_apply(s).group_apply(t);
        let direct = x.group_apply(s + t);
        group_law = group_law.max(via_two.add_scaled(&direct, -1.0)?.h_norm() / x.h_norm());
        let back = xt.group_apply(-t);
        group_inverse = group_inverse.max(back.add_scaled(&x, -1.0)?.h_norm() / x.h_norm());

        // Sandwich: ‖x‖² ≤ ⟨Px,x⟩ ≤ ‖P‖‖x‖².
        let quad = p.inner(&x)?;
        sandwich = sandwich
            .max((norm_sq - quad) / norm_sq)
            .max((quad - p.norm() * norm_sq) / (p.norm() * norm_sq));

        // Self-adjointness w.r.t. ⟨·,·⟩_ℋ.
        let pxy = p.apply(&x)?.h_inner(&y)?;
        let xpy = p.apply(&y)?.h_inner(&x)?;
        self_adjoint =
            self_adjoint.max((pxy - xpy).abs() / pxy.abs().max(xpy.abs()).max(1.0));

        // Drift pairing: ⟨𝒜x, Px⟩ = -β‖Ax₁‖² + β²⟨x₁,x₂⟩ + β‖x₂‖².
        let direct = p.apply(&x)?.h_inner(&x.generator_apply())?;
        let a_norm_sq: f64 = x
            .a
            .iter()
            .zip(basis.mu())
            .map(|(a, m)| (m * a) * (m * a))
            .sum();
        let inner12: f64 = x.a.iter().zip(&x.b).map(|(a, b)| a * b).sum();
        let b_norm_sq: f64 = x.b.iter().map(|b| b * b).sum();
        let closed = -beta * a_norm_sq + beta * beta * inner12 + beta * b_norm_sq;
        drift_pairing =
            drift_pairing.max((direct - closed).abs() / direct.abs().max(closed.abs()).max(1.0));

        // Damping pairing (summed form): ⟨(0,-βx₂), Px⟩ = -β²⟨x₁,x₂⟩ - 2β‖x₂‖².
        let mut damp = SpectralState::zero(basis.clone());
        for k in 0..damp.b.len() {
            damp.b[k] = -beta * x.b[k];
        }
        let lhs = damp.h_inner(&p.apply(&x)?)?;
        let rhs = -beta * beta * inner12 - 2.0 * beta * b_norm_sq;
        damping_pairing =
            damping_pairing.max((lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(1.0));

        // ⟨DV(x), 𝒜x + F(x)⟩ = -⟨x₂, f⟩ with f = βx₂.
        let dv = dv_apply(&x, nl);
        let m = nl.m(x.b_half_norm_sq());
        let mut drift = x.generator_apply();
        for k in 0..drift.b.len() {
            drift.b[k] += -beta * x.b[k] - m * basis.mu()[k] * x.a[k];
        }
        let lhs = dv.h_inner(&drift)?;
        let rhs = -beta * b_norm_sq;
        dv_identity = dv_identity.max((lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(1.0));
    }

    let mk = |name: &str, err: f64| IdentityCheck {
        name: name.to_string(),
        max_rel_err: err,
        tol,
        passed: err <= tol,
    };
    Ok(vec![
        mk("group_unitarity", unitarity),
        mk("group_law", group_law),
        mk("group_inverse", group_inverse),
        mk("p_sandwich", sandwich),
        mk("p_self_adjoint", self_adjoint),
        mk("p_drift_pairing", drift_pairing),
        mk("p_damping_pairing", damping_pairing),
        mk("dv_drift_identity", dv_identity),
    ])
}
