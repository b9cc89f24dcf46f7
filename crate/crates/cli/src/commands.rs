//! The four batch commands. Exit-code contract:
//! 0 ok, 2 config error, 3 solver fault, 4 check violation, 5 Picard
//! failure (the mapping lives in `main`).

use std::path::Path;

use serde::Serialize;
use stobeam_core::{
    contraction_factor, convolution_identity_check, estimate_constants, integrate_path,
    khasminskii_check, operator_identity_suite, phi_lyapunov, picard_solve, run_ensemble,
    sample_realization, stability_check, supermartingale_check, v_lyapunov, CheckReport,
    ConstantsReport, CoreError, EnsembleRun, HarnessConfig, IdentityCheck, POperator,
    SeedRecord, SolverConfig, SpectralState, Trajectory,
};

use crate::config::{Built, CheckKind, RunConfig};
use crate::output::{csv_row, provenance_header, write_file, Result};

/// Simulate one trajectory; writes `trajectory.csv` and `trajectory.json`.
/// Returns the solver-fault flag (explosion under this config).
pub fn cmd_simulate(cfg: &RunConfig, built: &Built, out: &Path) -> Result<bool> {
    let hash = cfg.hash()?;
    let seed = SeedRecord::new(cfg.seed, 0);
    let realization = sample_realization(&built.nu, built.solver.horizon, seed.substream(0))?;
    let u0 = sample_initial(built, seed.substream(1))?;
    let traj = integrate_path(&u0, &realization, &built.spec, &built.nu, &built.solver)?;

    let p = POperator::new(built.basis.clone(), built.spec.beta().unwrap_or(0.0))?;
    let n = built.basis.n_modes();
    let mut csv = provenance_header(&hash, cfg.seed);
    csv.push_str("t");
    for k in 1..=n {
        csv.push_str(&format!(",a_{k}"));
    }
    for k in 1..=n {
        csv.push_str(&format!(",b_{k}"));
    }
    csv.push_str(",h_norm,V,Phi\n");
    let mut jump_cursor = 0usize;
    for (i, (t, state)) in traj.times.iter().zip(&traj.states).enumerate() {
        // Retained pre-jump row precedes the post-jump row at jump indices.
        if jump_cursor < traj.pre_jump.len() && traj.pre_jump[jump_cursor].0 == i {
            let pre = &traj.pre_jump[jump_cursor].1;
            csv.push_str(&trajectory_row(*t, pre, &p, built)?);
            jump_cursor += 1;
        }
        csv.push_str(&trajectory_row(*t, state, &p, built)?);
    }
    write_file(out, "trajectory.csv", &csv)?;

    #[derive(Serialize)]
    struct Sidecar<'a> {
        config_hash: &'a str,
        seed: u64,
        exploded: bool,
        crossings: &'a [(f64, f64)],
        jump_times: Vec<f64>,
        jump_marks: Vec<f64>,
        realization: &'a stobeam_core::PoissonRealization,
    }
    let sidecar = Sidecar {
        config_hash: &hash,
        seed: cfg.seed,
        exploded: traj.exploded,
        crossings: &traj.crossings,
        jump_times: realization.times.clone(),
        jump_marks: realization.marks.clone(),
        realization: &realization,
    };
    write_file(out, "trajectory.json", &serde_json::to_string_pretty(&sidecar)?)?;
    Ok(traj.exploded)
}

fn trajectory_row(t: f64, state: &SpectralState, p: &POperator, built: &Built) -> Result<String> {
    let mut row = Vec::with_capacity(2 * state.a.len() + 4);
    row.push(t);
    row.extend_from_slice(&state.a);
    row.extend_from_slice(&state.b);
    row.push(state.h_norm());
    row.push(v_lyapunov(state, &built.spec.nl));
    row.push(phi_lyapunov(state, p, &built.spec.nl)?);
    Ok(csv_row(&row))
}

fn sample_initial(built: &Built, seed: SeedRecord) -> Result<SpectralState> {
    built.initial.sample_state(&built.basis, seed)
}

#[derive(Serialize)]
pub struct EnsembleReport {
    pub config_hash: String,
    pub seed: u64,
    pub command: String,
    pub lambda_window: f64,
    pub lambda_star: f64,
    pub energy_u0: f64,
    pub dt_levels: Vec<f64>,
    pub constants_certification: ConstantsReport,
    pub runs: Vec<EnsembleRunReport>,
    pub passed: bool,
}

#[derive(Serialize)]
pub struct EnsembleRunReport {
    pub dt: f64,
    pub n_paths: usize,
    pub explosions: usize,
    pub max_norm_observed: f64,
    pub checks: Vec<CheckReport>,
}

/// Run the ensemble at the configured dt (and dt/2 when refinement is on),
/// apply the selected checks, and write `report.json` plus one
/// `curves_<check>.csv` per check. Returns overall pass/fail.
pub fn cmd_ensemble(cfg: &RunConfig, built: &Built, out: &Path) -> Result<bool> {
    let hash = cfg.hash()?;
    let degenerate = cfg.harness.n_paths < 2;
    let dt_levels: Vec<f64> = if cfg.harness.dt_refine && !degenerate {
        vec![cfg.solver.dt_max, cfg.solver.dt_max / 2.0]
    } else {
        vec![cfg.solver.dt_max]
    };

    let fit_window = cfg
        .harness
        .fit_window
        .unwrap_or((0.2 * cfg.solver.horizon, cfg.solver.horizon));

    let mut runs = Vec::new();
    let mut first_run: Option<EnsembleRun> = None;
    for &dt in &dt_levels {
        let solver = SolverConfig {
            dt_max: dt,
            ..built.solver.clone()
        };
        let harness = HarnessConfig {
            n_paths: cfg.harness.n_paths,
            report_points: cfg.harness.report_points,
            levels: cfg.harness.levels.clone(),
            lambda: built.lambda_star,
            seed: cfg.seed,
        };
        let run = run_ensemble(&built.basis, &built.spec, &built.nu, &built.initial, &solver, &harness)?;
        let mut checks = Vec::new();
        for kind in &cfg.harness.checks {
            let report = if degenerate {
                skipped_degenerate(kind)
            } else {
                match kind {
                    CheckKind::Khasminskii => khasminskii_check(&run, &built.spec),
                    CheckKind::Stability => match &built.p_op {
                        Some(p) => stability_check(&run, &built.spec, p, &built.spec.nl.clone(), fit_window),
                        None => skipped_check("stability", "drift is not linear velocity damping"),
                    },
                    CheckKind::Supermartingale => supermartingale_check(&run),
                }
            };
            checks.push(report);
        }
        runs.push(EnsembleRunReport {
            dt,
            n_paths: run.stats.n_paths,
            explosions: run.stats.explosion_count,
            max_norm_observed: run.stats.max_norm_observed,
            checks,
        });
        if first_run.is_none() {
            first_run = Some(run);
        }
    }
    let primary = first_run.expect("at least one dt level");

    // Certify the declared constants on the ball actually visited.
    let probe_radius = primary.stats.max_norm_observed.max(1.0);
    let certification = estimate_constants(
        &built.spec,
        &built.basis,
        &built.nu,
        probe_radius,
        1000,
        SeedRecord::new(cfg.seed, 0xCE47),
    )?;

    let passed = runs
        .iter()
        .all(|r| r.checks.iter().all(|c| c.passed));
    let report = EnsembleReport {
        config_hash: hash.clone(),
        seed: cfg.seed,
        command: "ensemble".to_string(),
        lambda_window: built.lambda_window,
        lambda_star: built.lambda_star,
        energy_u0: primary.stats.energy_u0,
        dt_levels,
        constants_certification: certification,
        runs,
        passed,
    };
    write_file(out, "report.json", &serde_json::to_string_pretty(&report)?)?;

    // One curves file per check, series separated by comment lines.
    for (kind, check) in cfg.harness.checks.iter().zip(&report.runs[0].checks) {
        let name = match kind {
            CheckKind::Khasminskii => "khasminskii",
            CheckKind::Stability => "stability",
            CheckKind::Supermartingale => "supermartingale",
        };
        let mut csv = provenance_header(&hash, cfg.seed);
        csv.push_str("t,estimate,ci_lo,ci_hi,bound\n");
        let mut current_label = String::new();
        for line in &check.lines {
            if line.label != current_label {
                csv.push_str(&format!("# series={}\n", line.label));
                current_label = line.label.clone();
            }
            csv.push_str(&csv_row(&[
                line.t,
                line.estimate,
                line.estimate - line.ci99,
                line.estimate + line.ci99,
                line.bound,
            ]));
        }
        write_file(out, &format!("curves_{name}.csv"), &csv)?;
    }
    Ok(report.passed)
}

fn skipped_check(name: &str, reason: &str) -> CheckReport {
    CheckReport {
        name: name.to_string(),
        passed: true,
        skipped: Some(reason.to_string()),
        summary: format!("skipped: {reason}"),
        lines: Vec::new(),
    }
}

fn skipped_degenerate(kind: &CheckKind) -> CheckReport {
    let name = match kind {
        CheckKind::Khasminskii => "khasminskii",
        CheckKind::Stability => "stability",
        CheckKind::Supermartingale => "supermartingale",
    };
    skipped_check(name, "degenerate: confidence intervals undefined at n_paths < 2")
}

#[derive(Serialize)]
pub struct VerifyReport {
    pub config_hash: String,
    pub seed: u64,
    pub identities: Vec<IdentityCheck>,
    pub constants_certification: ConstantsReport,
    pub convolution_residual_max: f64,
    pub convolution_tolerance: f64,
    pub lambda_window: f64,
    pub lambda_star: f64,
    pub resolution_defect: Option<f64>,
    pub passed: bool,
}

/// Deterministic verification battery: operator identities, constants
/// certification, the stopped-convolution identity, and (for pointwise
/// coefficients) the grid-resolution defect.
pub fn cmd_verify(cfg: &RunConfig, built: &Built, out: &Path) -> Result<bool> {
    let hash = cfg.hash()?;
    let beta = built.spec.beta().unwrap_or(0.0);
    let identities = operator_identity_suite(
        &built.basis,
        beta,
        &built.spec.nl,
        1000,
        SeedRecord::new(cfg.seed, 0x1D),
        1e-10,
    )?;

    let probe_radius = cfg.model.trunc_radius.unwrap_or(2.0);
    let certification = estimate_constants(
        &built.spec,
        &built.basis,
        &built.nu,
        probe_radius,
        1000,
        SeedRecord::new(cfg.seed, 0xCE47),
    )?;

    // Stopped stochastic convolution identity at the model's jump
    // coefficient frozen at the initial state.
    let u0 = sample_initial(built, SeedRecord::new(cfg.seed, 1))?;
    let realization = sample_realization(&built.nu, built.solver.horizon, SeedRecord::new(cfg.seed, 0xC0))?;
    let spec = &built.spec;
    let phi = |s: f64, z: f64| spec.jump_increment(s, &u0, z);
    let mut rng = SeedRecord::new(cfg.seed, 0xC1).rng();
    let mut residual_max = 0.0f64;
    for _ in 0..100 {
        use rand::Rng as _;
        let tau: f64 = rng.random_range(0.0..built.solver.horizon);
        let t: f64 = rng.random_range(0.0..built.solver.horizon);
        let r = convolution_identity_check(
            &realization,
            phi,
            &built.nu,
            &built.basis,
            tau,
            t,
            built.solver.dt_max,
        )?;
        residual_max = residual_max.max(r);
    }
    let conv_tol = 1e-10;

    let resolution_defect = match (&built.spec.f_kind, &built.spec.g_kind) {
        (stobeam_core::DriftKind::Pointwise(c), _) | (_, stobeam_core::JumpKind::Pointwise(c)) => {
            let lifted = stobeam_core::lift_pointwise(c.clone(), built.basis.clone());
            Some(lifted.resolution_defect(0.0, &u0, 1.0)?)
        }
        _ => None,
    };

    let passed = identities.iter().all(|c| c.passed)
        && certification.violations.is_empty()
        && residual_max <= conv_tol;
    let report = VerifyReport {
        config_hash: hash,
        seed: cfg.seed,
        identities,
        constants_certification: certification,
        convolution_residual_max: residual_max,
        convolution_tolerance: conv_tol,
        lambda_window: built.lambda_window,
        lambda_star: built.lambda_star,
        resolution_defect,
        passed,
    };
    write_file(out, "verify_report.json", &serde_json::to_string_pretty(&report)?)?;
    Ok(report.passed)
}

#[derive(Serialize)]
pub struct PicardCompareReport {
    pub config_hash: String,
    pub seed: u64,
    pub contraction_factor: f64,
    pub levels: Vec<PicardLevel>,
    pub observed_orders: Vec<f64>,
    pub min_observed_order: f64,
    pub max_measured_ratio: f64,
    pub passed: bool,
}

#[derive(Serialize)]
pub struct PicardLevel {
    pub dt: f64,
    pub sup_gap: f64,
    pub iterations: usize,
    pub measured_ratio: f64,
}

/// Integrate the same realization with the stepper and the Picard solver
/// on matched grids over dt, dt/2, dt/4 and report the gap convergence
/// order. Passes iff the observed order is at least 0.8.
pub fn cmd_picard_compare(cfg: &RunConfig, built: &Built, out: &Path) -> Result<bool> {
    if cfg.model.trunc_radius.is_none() {
        return Err(CoreError::Config {
            field: "model.trunc_radius",
            reason: "picard-compare requires a truncation radius (globally Lipschitz drift)".into(),
        });
    }
    let hash = cfg.hash()?;
    let seed = SeedRecord::new(cfg.seed, 0);
    let realization = sample_realization(&built.nu, built.solver.horizon, seed.substream(0))?;
    let u0 = sample_initial(built, seed.substream(1))?;
    let factor = contraction_factor(
        built.solver.horizon,
        built.spec.constants.l_f,
        built.spec.constants.l_g,
        built.solver.picard.lambda_weight,
    );

    let mut levels: Vec<PicardLevel> = Vec::new();
    for i in 0..3 {
        let dt = built.solver.dt_max / (1 << i) as f64;
        let solver = SolverConfig {
            dt_max: dt,
            ..built.solver.clone()
        };
        let step: Trajectory = integrate_path(&u0, &realization, &built.spec, &built.nu, &solver)?;
        let picard = match picard_solve(&u0, &realization, &built.spec, &built.nu, &solver) {
            Ok(p) => p,
            Err(e) => {
                if let CoreError::PicardDiverged { factor, .. } = &e {
                    eprintln!("picard-compare: contraction factor (T^1/2 L_f + L_g)/(2 lambda) = {factor:.4}");
                }
                return Err(e);
            }
        };
        levels.push(PicardLevel {
            dt,
            sup_gap: step.sup_gap(&picard.trajectory)?,
            iterations: picard.iterations,
            measured_ratio: picard.measured_ratio(),
        });
    }
    let observed_orders: Vec<f64> = levels
        .windows(2)
        .map(|w| (w[0].sup_gap / w[1].sup_gap).log2())
        .collect();
    let min_order = observed_orders.iter().copied().fold(f64::INFINITY, f64::min);
    let max_ratio = levels.iter().map(|l| l.measured_ratio).fold(0.0, f64::max);
    let passed = min_order >= 0.8;

    let mut csv = provenance_header(&hash, cfg.seed);
    csv.push_str("dt,sup_gap,observed_order,iterations,measured_ratio\n");
    for (i, level) in levels.iter().enumerate() {
        let order = if i == 0 {
            "".to_string()
        } else {
            format!("{}", observed_orders[i - 1])
        };
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            level.dt, level.sup_gap, order, level.iterations, level.measured_ratio
        ));
    }
    write_file(out, "picard_compare.csv", &csv)?;

    let report = PicardCompareReport {
        config_hash: hash,
        seed: cfg.seed,
        contraction_factor: factor,
        levels,
        observed_orders,
        min_observed_order: min_order,
        max_measured_ratio: max_ratio,
        passed,
    };
    write_file(out, "picard_report.json", &serde_json::to_string_pretty(&report)?)?;
    Ok(report.passed)
}

