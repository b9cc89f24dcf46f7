//! Built-in named configurations. Each maps onto one verification
//! scenario: a conservative demo, the damped beam, the nonexplosion bound
//! demo, and the two stability regimes (multiplicative noise with K = 0,
//! additive noise with K > 0).

use crate::config::*;
use stobeam_core::{BcKind, CoreError};

pub const PRESET_NAMES: [&str; 5] = [
    "hinged-basic",
    "damped-beam",
    "khasminskii-demo",
    "stability-K0",
    "stability-Kpos",
];

/// First-mode displacement amplitude giving unit initial ℋ-norm on (0,1).
const UNIT_NORM_A1: f64 = 0.101_321_183_642_337_78; // 1/π²

fn base(seed: u64) -> RunConfig {
    RunConfig {
        seed,
        output_dir: None,
        basis: BasisSection {
            bc: BcKind::Hinged,
            length: 1.0,
            n_modes: 8,
            grid_points: 32,
        },
        model: ModelSection {
            m_a: 0.0,
            m_b: 1.0,
            alpha: 1.0,
            f_kind: FKindConfig::LinearDamping,
            beta: 0.0,
            pointwise_f: None,
            g_kind: GKindConfig::Separable,
            separable: Some(SeparableSection {
                mode: 1,
                scale: 0.0,
                map: MapKindConfig::Constant,
                coeff: 0.0,
            }),
            pointwise_g: None,
            k_f: 1.0,
            k_g: 1.0,
            l_f: 0.0,
            l_g: 0.0,
            r_g: 0.0,
            k_const: 0.0,
            trunc_radius: None,
        },
        noise: NoiseSection {
            kind: NoiseKindConfig::Atoms,
            atoms: Some(vec![(1.0, 1e-12)]),
            lambda: None,
            lo: None,
            hi: None,
            mean: None,
            std: None,
            quad_nodes: 64,
        },
        solver: SolverSection {
            dt_max: 1e-3,
            horizon: 5.0,
            n_cap: 1e6,
            picard_tol: 1e-10,
            picard_max_iter: 200,
            picard_lambda: 4.0,
        },
        harness: HarnessSection {
            n_paths: 1000,
            report_points: 101,
            levels: vec![4.0, 8.0, 16.0],
            lambda_star_fraction: 0.9,
            checks: vec![CheckKind::Khasminskii],
            fit_window: None,
            dt_refine: true,
        },
        initial: InitialSection {
            kind: InitialKindConfig::Mode,
            mode: Some(1),
            a: Some(UNIT_NORM_A1),
            b: Some(0.0),
            coeffs_a: None,
            coeffs_b: None,
            radius: None,
        },
    }
}

/// Conservative extensible beam, no damping, no noise.
fn hinged_basic() -> RunConfig {
    base(101)
}

/// Velocity-damped beam, no noise; the energy envelope decays. Carries a
/// truncation radius and certified constants so `picard-compare` runs on it
/// directly.
fn damped_beam() -> RunConfig {
    let mut cfg = base(102);
    cfg.model.beta = 0.2;
    cfg.model.l_f = 2.0;
    cfg.model.k_f = 0.04;
    cfg.model.trunc_radius = 5.0.into();
    cfg.solver.horizon = 10.0;
    cfg.solver.dt_max = 1e-2;
    // Weight the Picard norm gently: e^{-λT} must not drown the late-time
    // residual over this long horizon.
    cfg.solver.picard_lambda = 0.5;
    cfg.harness.checks = vec![CheckKind::Stability, CheckKind::Supermartingale];
    cfg.harness.fit_window = Some((2.0, 10.0));
    cfg
}

/// Bounded jumps plus damping with K_f = K_g = 1 declared, so the Gronwall
/// constant is C = 1.5 exactly.
fn khasminskii_demo() -> RunConfig {
    let mut cfg = base(103);
    cfg.model.beta = 0.5;
    cfg.model.separable = Some(SeparableSection {
        mode: 1,
        scale: 0.5,
        map: MapKindConfig::Linear,
        coeff: 1.0,
    });
    cfg.noise.atoms = Some(vec![(-1.0, 0.5), (1.0, 0.5)]);
    cfg.model.k_f = 1.0;
    cfg.model.k_g = 1.0;
    cfg.model.l_f = 0.5;
    cfg.model.l_g = 0.0;
    cfg.model.r_g = 0.0;
    cfg.model.k_const = 0.25;
    cfg.solver.horizon = 5.0;
    cfg.solver.dt_max = 2e-3;
    cfg.harness.n_paths = 1000;
    cfg.harness.checks = vec![CheckKind::Khasminskii];
    cfg
}

/// Multiplicative velocity-proportional jumps: R_g = 0.1, K = 0, so the
/// decay-rate window is open and the mean square norm decays exponentially.
fn stability_k0() -> RunConfig {
    let mut cfg = base(104);
    cfg.basis.grid_points = 16;
    cfg.model.beta = 0.2;
    cfg.model.g_kind = GKindConfig::Pointwise;
    cfg.model.separable = None;
    cfg.model.pointwise_g = Some(PointwiseSection {
        c0: 0.0,
        c_u: 0.0,
        c_ut: 0.1,
        c_grad: 0.0,
    });
    cfg.noise.atoms = Some(vec![(-1.0, 0.5), (1.0, 0.5)]);
    cfg.model.k_f = 0.04;
    cfg.model.k_g = 0.01;
    cfg.model.l_f = 0.2;
    cfg.model.l_g = 0.01;
    cfg.model.r_g = 0.1;
    cfg.model.k_const = 0.0;
    cfg.solver.horizon = 10.0;
    cfg.solver.dt_max = 5e-3;
    cfg.harness.n_paths = 2000;
    cfg.harness.levels = vec![4.0, 8.0];
    cfg.harness.checks = vec![
        CheckKind::Khasminskii,
        CheckKind::Stability,
        CheckKind::Supermartingale,
    ];
    cfg.harness.fit_window = Some((2.0, 10.0));
    cfg
}

/// Additive jumps: R_g = 0, K = 0.09 > 0, so the mean square norm stays
/// uniformly bounded by (‖P‖+2)ℰ₀ + 2K/λ.
fn stability_kpos() -> RunConfig {
    let mut cfg = base(105);
    cfg.model.beta = 0.2;
    cfg.model.separable = Some(SeparableSection {
        mode: 1,
        scale: 0.3,
        map: MapKindConfig::Linear,
        coeff: 1.0,
    });
    cfg.noise.atoms = Some(vec![(-1.0, 0.5), (1.0, 0.5)]);
    cfg.model.k_f = 0.04;
    cfg.model.k_g = 0.09;
    cfg.model.l_f = 0.2;
    cfg.model.l_g = 0.0;
    cfg.model.r_g = 0.0;
    cfg.model.k_const = 0.09;
    cfg.solver.horizon = 20.0;
    cfg.solver.dt_max = 5e-3;
    cfg.harness.n_paths = 2000;
    cfg.harness.levels = vec![4.0, 8.0];
    cfg.harness.checks = vec![CheckKind::Stability];
    cfg
}

pub fn preset(name: &str) -> Result<RunConfig> {
    match name {
        "hinged-basic" => Ok(hinged_basic()),
        "damped-beam" => Ok(damped_beam()),
        "khasminskii-demo" => Ok(khasminskii_demo()),
        "stability-K0" => Ok(stability_k0()),
        "stability-Kpos" => Ok(stability_kpos()),
        other => Err(CoreError::Config {
            field: "config",
            reason: format!("no file and no preset named {other:?}; presets: {PRESET_NAMES:?}"),
        }),
    }
}
