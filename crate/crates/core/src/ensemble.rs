//! Monte Carlo harness: runs independent paths, aggregates time-gridded
//! statistics, and turns the model's guarantees into pass/fail checks.
//!
//! - moment growth and exit-time tails of stopped paths against the
//!   Gronwall curve `(1 + E V(𝔲₀)) e^{Ct} - 1` with
//!   `C = ½(1 + K_f + K_g)` and the tail bound `P(τ_n < t) ≤ bound / q_n`,
//!   `q_n = n²/2`;
//! - exponential mean-square decay
//!   `E‖𝔲(t)‖² ≤ (‖P‖ + 2) e^{-λ*t} ℰ(𝔲₀)` for the K = 0 regime, plus a
//!   fitted decay rate with a path-bootstrap confidence interval;
//! - uniform boundedness `sup_t E‖𝔲(t)‖² ≤ (‖P‖ + 2) ℰ(𝔲₀) + 2K/λ` for
//!   K > 0;
//! - the supermartingale property of `Φ(𝔲(t)) e^{λt}` via paired
//!   consecutive-time z-scores.
//!
//! A bound check never passes on confidence-interval width alone: the
//! estimate must stay within one 99% half-width of the bound *and* within
//! 5% above it. Paths are independent work units executed in parallel;
//! aggregation is a fixed-order reduction over the path index, so results
//! are byte-identical for a given `(config, seed)` regardless of thread
//! count.

use rayon::prelude::*;
use serde::Serialize;
use std::sync::Arc;

use crate::coefficients::ModelSpec;
use crate::error::{CoreError, Result};
use crate::jump::{sample_realization, MarkMeasure};
use crate::lyapunov::{lambda_window, phi_lyapunov, NonlinearityM, POperator};
use crate::numeric::{mean_sd, ols_fit, Z95, Z99};
use crate::seed::SeedRecord;
use crate::solver::{drive_with_sink, PathSink, SolverConfig};
use crate::spectral::{SpectralBasis, SpectralState};

/// Ensemble controls.
#[derive(Debug, Clone)]
pub struct HarnessConfig {
    pub n_paths: usize,
    /// Number of report-grid points (statistics resolution).
    pub report_points: usize,
    /// Levels n whose exit times τ_n are monitored.
    pub levels: Vec<f64>,
    /// Rate λ used in the `Φ(𝔲(t)) e^{λt}` statistic (typically 0.9 of the
    /// admissible window).
    pub lambda: f64,
    pub seed: u64,
}

impl HarnessConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_paths < 1 {
            return Err(CoreError::config("harness.n_paths", "need at least one path"));
        }
        if self.report_points < 2 {
            return Err(CoreError::config("harness.report_points", "need at least two report points"));
        }
        if self.lambda < 0.0 {
            return Err(CoreError::config("harness.lambda", "must be nonnegative"));
        }
        Ok(())
    }
}

/// Initial condition 𝔲₀, either deterministic or drawn per path.
#[derive(Debug, Clone)]
pub enum InitialCondition {
    Fixed { a: Vec<f64>, b: Vec<f64> },
    /// ‖𝔲₀‖_ℋ uniform on (0, radius], direction isotropic in the
    /// orthonormalized coordinates.
    RandomBall { radius: f64 },
}

impl InitialCondition {
    /// Draw one initial state; `Fixed` ignores the seed.
    pub fn sample_state(&self, basis: &Arc<SpectralBasis>, seed: SeedRecord) -> Result<SpectralState> {
        match self {
            InitialCondition::Fixed { a, b } => {
                SpectralState::new(basis.clone(), a.clone(), b.clone())
            }
            InitialCondition::RandomBall { radius } => {
                use rand::Rng;
                let mut rng = seed.rng();
                let n = basis.n_modes();
                let mut a = vec![0.0; n];
                let mut b = vec![0.0; n];
                let mut nsq = 0.0;
                for k in 0..n {
                    let u1: f64 = rng.random::<f64>().max(1e-300);
                    let u2: f64 = rng.random();
                    let r = (-2.0 * u1.ln()).sqrt();
                    let ga = r * (2.0 * std::f64::consts::PI * u2).cos();
                    let gb = r * (2.0 * std::f64::consts::PI * u2).sin();
                    a[k] = ga;
                    b[k] = gb;
                    nsq += ga * ga + gb * gb;
                }
                let target = radius * rng.random::<f64>();
                let scale = target / nsq.sqrt().max(1e-300);
                for k in 0..n {
                    a[k] = a[k] * scale / basis.mu()[k];
                    b[k] *= scale;
                }
                SpectralState::new(basis.clone(), a, b)
            }
        }
    }
}

/// Per-level time curve with a 99% half-width.
#[derive(Debug, Clone, Serialize)]
pub struct LevelCurve {
    pub level: f64,
    pub mean: Vec<f64>,
    pub ci99: Vec<f64>,
}

/// Time-gridded ensemble estimates.
#[derive(Debug, Clone, Serialize)]
pub struct EnsembleStats {
    pub times: Vec<f64>,
    pub n_paths: usize,
    /// λ used in the `Φ e^{λt}` statistic.
    pub lambda: f64,
    pub mean_sq_norm: Vec<f64>,
    pub sq_norm_ci95: Vec<f64>,
    pub sq_norm_ci99: Vec<f64>,
    pub mean_v: Vec<f64>,
    pub v_ci99: Vec<f64>,
    pub mean_phi_exp: Vec<f64>,
    pub phi_exp_ci99: Vec<f64>,
    /// `E[V(𝔲(t ∧ τ_n))]` per monitored level.
    pub stopped_v: Vec<LevelCurve>,
    /// Empirical `P(τ_n < t)` per monitored level.
    pub tail_prob: Vec<LevelCurve>,
    pub explosion_count: usize,
    /// Mean initial energy ℰ(𝔲₀).
    pub energy_u0: f64,
    /// Mean initial Lyapunov value `E V(𝔲₀)`.
    pub v0_mean: f64,
    /// Largest ℋ-norm seen on any path (ball actually visited).
    pub max_norm_observed: f64,
    pub seed: u64,
}

/// Stats plus the per-path matrices needed by bootstrap and paired tests.
#[derive(Debug, Clone)]
pub struct EnsembleRun {
    pub stats: EnsembleStats,
    /// `‖𝔲(t)‖²_ℋ` per path (row) and report time (column).
    pub path_sq_norm: Vec<Vec<f64>>,
    /// `Φ(𝔲(t)) e^{λt}` per path and report time.
    pub path_phi_exp: Vec<Vec<f64>>,
}

struct PathSummary {
    sq_norm: Vec<f64>,
    v: Vec<f64>,
    phi_exp: Vec<f64>,
    stopped_v: Vec<Vec<f64>>,
    crossed: Vec<Option<f64>>,
    v0: f64,
    energy0: f64,
    max_norm: f64,
    exploded: bool,
}

struct Summarizer<'a> {
    report_times: &'a [f64],
    nl: &'a NonlinearityM,
    p: Option<&'a POperator>,
    lambda: f64,
    levels: &'a [f64],
    next_report: usize,
    basis: Arc<SpectralBasis>,
    out: PathSummary,
    /// Per level: Some(frozen V) once crossed.
    frozen: Vec<Option<f64>>,
    last_a: Vec<f64>,
    last_b: Vec<f64>,
    have_state: bool,
}

impl<'a> Summarizer<'a> {
    /// `(‖x‖², ‖B^½x₁‖²)` straight from the coefficient slices; the hot
    /// path avoids constructing states off the report grid.
    fn norms(&self, a: &[f64], b: &[f64]) -> (f64, f64) {
        let mu = self.basis.mu();
        let mut nsq = 0.0;
        let mut bhalf = 0.0;
        for k in 0..a.len() {
            let ma = mu[k] * a[k];
            nsq += ma * ma + b[k] * b[k];
            bhalf += mu[k] * a[k] * a[k];
        }
        (nsq, bhalf)
    }

    fn v_of(&self, nsq: f64, bhalf: f64) -> f64 {
        0.5 * nsq + 0.5 * self.nl.antiderivative(bhalf).expect("bhalf >= 0")
    }

    fn record_point(&mut self, a: &[f64], b: &[f64]) {
        let (nsq, bhalf) = self.norms(a, b);
        let v = self.v_of(nsq, bhalf);
        self.out.sq_norm.push(nsq);
        self.out.v.push(v);
        let phi = match self.p {
            Some(p) => {
                let state = SpectralState::new(self.basis.clone(), a.to_vec(), b.to_vec())
                    .expect("sizes match");
                phi_lyapunov(&state, p, self.nl).unwrap_or(f64::NAN)
            }
            None => v,
        };
        let t_r = self.report_times[self.out.sq_norm.len() - 1];
        self.out.phi_exp.push(phi * (self.lambda * t_r).exp());
        for (li, stopped) in self.out.stopped_v.iter_mut().enumerate() {
            stopped.push(self.frozen[li].unwrap_or(v));
        }
    }
}

impl<'a> PathSink for Summarizer<'a> {
    fn on_point(&mut self, _idx: usize, t: f64, a: &[f64], b: &[f64]) {
        let (nsq, bhalf) = self.norms(a, b);
        let norm = nsq.sqrt();
        self.out.max_norm = self.out.max_norm.max(norm);
        let newly_crossed = self
            .levels
            .iter()
            .enumerate()
            .any(|(li, &level)| self.frozen[li].is_none() && norm > level);
        if newly_crossed {
            let v = self.v_of(nsq, bhalf);
            for (li, &level) in self.levels.iter().enumerate() {
                if self.frozen[li].is_none() && norm > level {
                    self.frozen[li] = Some(v);
                    self.out.crossed[li] = Some(t);
                }
            }
        }
        if t == 0.0 {
            self.out.v0 = self.v_of(nsq, bhalf);
            self.out.energy0 = nsq + self.nl.antiderivative(bhalf).expect("bhalf >= 0");
        }
        while self.next_report < self.report_times.len()
            && t >= self.report_times[self.next_report] - 1e-12
        {
            self.record_point(a, b);
            self.next_report += 1;
        }
        self.last_a.copy_from_slice(a);
        self.last_b.copy_from_slice(b);
        self.have_state = true;
    }

    fn on_explosion(&mut self, _t: f64) {
        self.out.exploded = true;
        // Freeze remaining report slots at the last finite state.
        if self.have_state {
            let a = self.last_a.clone();
            let b = self.last_b.clone();
            while self.next_report < self.report_times.len() {
                self.record_point(&a, &b);
                self.next_report += 1;
            }
        }
    }
}

/// Run `n_paths` independent paths and aggregate statistics on a shared
/// report grid. Exploded paths are counted, never dropped.
pub fn run_ensemble(
    basis: &Arc<SpectralBasis>,
    spec: &ModelSpec,
    nu: &MarkMeasure,
    u0: &InitialCondition,
    solver_cfg: &SolverConfig,
    harness: &HarnessConfig,
) -> Result<EnsembleRun> {
    harness.validate()?;
    solver_cfg.validate()?;
    let points = harness.report_points;
    let report_times: Vec<f64> = (0..points)
        .map(|j| solver_cfg.horizon * j as f64 / (points - 1) as f64)
        .collect();
    let p_op = match spec.beta() {
        Some(beta) => Some(POperator::new(basis.clone(), beta)?),
        None => None,
    };

    let summaries: Vec<PathSummary> = (0..harness.n_paths)
        .into_par_iter()
        .map(|path| -> Result<PathSummary> {
            let path_seed = SeedRecord::new(harness.seed, path as u64);
            let realization = sample_realization(nu, solver_cfg.horizon, path_seed.substream(0))?;
            let u0 = u0.sample_state(basis, path_seed.substream(1))?;
            let mut summarizer = Summarizer {
                report_times: &report_times,
                nl: &spec.nl,
                p: p_op.as_ref(),
                lambda: harness.lambda,
                levels: &harness.levels,
                next_report: 0,
                basis: basis.clone(),
                out: PathSummary {
                    sq_norm: Vec::with_capacity(points),
                    v: Vec::with_capacity(points),
                    phi_exp: Vec::with_capacity(points),
                    stopped_v: vec![Vec::with_capacity(points); harness.levels.len()],
                    crossed: vec![None; harness.levels.len()],
                    v0: 0.0,
                    energy0: 0.0,
                    max_norm: 0.0,
                    exploded: false,
                },
                frozen: vec![None; harness.levels.len()],
                last_a: vec![0.0; basis.n_modes()],
                last_b: vec![0.0; basis.n_modes()],
                have_state: false,
            };
            drive_with_sink(&u0, &realization, spec, nu, solver_cfg, &report_times, &mut summarizer)?;
            if summarizer.next_report < points && !summarizer.out.exploded && summarizer.have_state {
                // Horizon point can miss the >= comparison by roundoff.
                let a = summarizer.last_a.clone();
                let b = summarizer.last_b.clone();
                while summarizer.next_report < points {
                    summarizer.record_point(&a, &b);
                    summarizer.next_report += 1;
                }
            }
            Ok(summarizer.out)
        })
        .collect::<Result<Vec<_>>>()?;

    let n = summaries.len();
    let column = |get: &dyn Fn(&PathSummary, usize) -> f64, j: usize| -> Vec<f64> {
        summaries.iter().map(|s| get(s, j)).collect()
    };
    let mut stats = EnsembleStats {
        times: report_times.clone(),
        n_paths: n,
        lambda: harness.lambda,
        mean_sq_norm: Vec::with_capacity(points),
        sq_norm_ci95: Vec::with_capacity(points),
        sq_norm_ci99: Vec::with_capacity(points),
        mean_v: Vec::with_capacity(points),
        v_ci99: Vec::with_capacity(points),
        mean_phi_exp: Vec::with_capacity(points),
        phi_exp_ci99: Vec::with_capacity(points),
        stopped_v: Vec::new(),
        tail_prob: Vec::new(),
        explosion_count: summaries.iter().filter(|s| s.exploded).count(),
        energy_u0: summaries.iter().map(|s| s.energy0).sum::<f64>() / n as f64,
        v0_mean: summaries.iter().map(|s| s.v0).sum::<f64>() / n as f64,
        max_norm_observed: summaries.iter().map(|s| s.max_norm).fold(0.0, f64::max),
        seed: harness.seed,
    };
    let root_n = (n as f64).sqrt();
    for j in 0..points {
        let (m, sd) = mean_sd(&column(&|s, j| s.sq_norm[j], j));
        stats.mean_sq_norm.push(m);
        stats.sq_norm_ci95.push(Z95 * sd / root_n);
        stats.sq_norm_ci99.push(Z99 * sd / root_n);
        let (m, sd) = mean_sd(&column(&|s, j| s.v[j], j));
        stats.mean_v.push(m);
        stats.v_ci99.push(Z99 * sd / root_n);
        let (m, sd) = mean_sd(&column(&|s, j| s.phi_exp[j], j));
        stats.mean_phi_exp.push(m);
        stats.phi_exp_ci99.push(Z99 * sd / root_n);
    }
    for (li, &level) in harness.levels.iter().enumerate() {
        let mut vc = LevelCurve {
            level,
            mean: Vec::with_capacity(points),
            ci99: Vec::with_capacity(points),
        };
        let mut tc = LevelCurve {
            level,
            mean: Vec::with_capacity(points),
            ci99: Vec::with_capacity(points),
        };
        for j in 0..points {
            let (m, sd) = mean_sd(&column(&|s, j| s.stopped_v[li][j], j));
            vc.mean.push(m);
            vc.ci99.push(Z99 * sd / root_n);
            let indicator: Vec<f64> = summaries
                .iter()
                .map(|s| match s.crossed[li] {
                    Some(tau) if tau < report_times[j] => 1.0,
                    _ => 0.0,
                })
                .collect();
            let (m, sd) = mean_sd(&indicator);
            tc.mean.push(m);
            tc.ci99.push(Z99 * sd / root_n);
        }
        stats.stopped_v.push(vc);
        stats.tail_prob.push(tc);
    }

    Ok(EnsembleRun {
        stats,
        path_sq_norm: summaries.iter().map(|s| s.sq_norm.clone()).collect(),
        path_phi_exp: summaries.iter().map(|s| s.phi_exp.clone()).collect(),
    })
}

/// One comparison of an estimate against a theorem bound.
#[derive(Debug, Clone, Serialize)]
pub struct BoundLine {
    pub label: String,
    pub t: f64,
    pub estimate: f64,
    pub ci99: f64,
    pub bound: f64,
    /// `(bound - estimate) / max(bound, tiny)`.
    pub margin: f64,
    pub ok: bool,
}

fn bound_line(label: &str, t: f64, estimate: f64, ci99: f64, bound: f64) -> BoundLine {
    // Never pass on CI width alone: within one half-width AND within 5%.
    // The tiny absolute term absorbs roundoff in exact-equality cases
    // (deterministic initial data at t = 0).
    let tiny = 1e-12 * bound.abs().max(1.0);
    let ok = estimate <= bound + ci99 + tiny && estimate <= bound * 1.05 + tiny;
    BoundLine {
        label: label.to_string(),
        t,
        estimate,
        ci99,
        bound,
        margin: (bound - estimate) / bound.max(1e-300),
        ok,
    }
}

/// Outcome of one statistical check.
#[derive(Debug, Clone, Serialize)]
pub struct CheckReport {
    pub name: String,
    pub passed: bool,
    /// Reason the check did not run (inapplicable theorem, degenerate CI).
    pub skipped: Option<String>,
    pub summary: String,
    pub lines: Vec<BoundLine>,
}

impl CheckReport {
    fn skipped(name: &str, reason: impl Into<String>) -> Self {
        let reason = reason.into();
        CheckReport {
            name: name.to_string(),
            passed: true,
            skipped: Some(reason.clone()),
            summary: format!("skipped: {reason}"),
            lines: Vec::new(),
        }
    }
}

/// Moment and exit-time tail bounds of the stopped solution.
///
/// With `C = ½(1 + K_f + K_g)` the stopped Lyapunov mean must satisfy
/// `E V(𝔲(t∧τ_n)) ≤ (1 + E V(𝔲₀)) e^{Ct} - 1` and the exit tails
/// `P(τ_n < t) ≤ bound(t) / q_n` with `q_n = n²/2 ≤ inf_{‖x‖≥n} V`.
pub fn khasminskii_check(run: &EnsembleRun, spec: &ModelSpec) -> CheckReport {
    let stats = &run.stats;
    if stats.n_paths < 2 {
        return CheckReport::skipped("khasminskii", "degenerate ensemble (n_paths < 2)");
    }
    let c = 0.5 * (1.0 + spec.constants.k_f + spec.constants.k_g);
    let v0 = stats.v0_mean;
    let mut lines = Vec::new();
    for curve in &stats.stopped_v {
        for (j, &t) in stats.times.iter().enumerate() {
            let bound = (1.0 + v0) * (c * t).exp() - 1.0;
            lines.push(bound_line(
                &format!("stopped_v_n{}", curve.level),
                t,
                curve.mean[j],
                curve.ci99[j],
                bound,
            ));
        }
    }
    for curve in &stats.tail_prob {
        let q = curve.level * curve.level / 2.0;
        for (j, &t) in stats.times.iter().enumerate() {
            let bound = (((1.0 + v0) * (c * t).exp() - 1.0) / q).min(1.0);
            lines.push(bound_line(
                &format!("tail_n{}", curve.level),
                t,
                curve.mean[j],
                curve.ci99[j],
                bound,
            ));
        }
    }
    let bounds_ok = lines.iter().all(|l| l.ok);
    let passed = bounds_ok && stats.explosion_count == 0;
    let summary = format!(
        "C={c}, E V(u0)={v0:.6}, explosions={}, {} of {} bound points ok",
        stats.explosion_count,
        lines.iter().filter(|l| l.ok).count(),
        lines.len()
    );
    CheckReport {
        name: "khasminskii".to_string(),
        passed,
        skipped: None,
        summary,
        lines,
    }
}

/// Exponential mean-square decay (K = 0) or uniform boundedness (K > 0).
pub fn stability_check(
    run: &EnsembleRun,
    spec: &ModelSpec,
    p: &POperator,
    nl: &NonlinearityM,
    fit_window: (f64, f64),
) -> CheckReport {
    let stats = &run.stats;
    if stats.n_paths < 2 {
        return CheckReport::skipped("stability", "degenerate ensemble (n_paths < 2)");
    }
    let beta = match spec.beta() {
        Some(b) => b,
        None => return CheckReport::skipped("stability", "drift is not linear velocity damping"),
    };
    let window = lambda_window(beta, p.basis().mu1(), spec.constants.r_g, nl.alpha(), p);
    if window <= 0.0 {
        return CheckReport::skipped("stability", "theorem inapplicable: admissible rate window is empty");
    }
    let lambda_star = stats.lambda;
    let c_bound = p.norm() + 2.0;
    let e0 = stats.energy_u0;
    let k = spec.constants.k;
    let mut lines = Vec::new();
    let mut summary_extra = String::new();

    if k == 0.0 {
        for (j, &t) in stats.times.iter().enumerate() {
            let bound = c_bound * (-lambda_star * t).exp() * e0;
            lines.push(bound_line(
                "mean_sq_norm_decay",
                t,
                stats.mean_sq_norm[j],
                stats.sq_norm_ci99[j],
                bound,
            ));
        }
        match decay_fit_bootstrap(run, fit_window, 200, SeedRecord::new(stats.seed, 0xB00F)) {
            Ok(fit) => {
                let ok = fit.rate >= lambda_star;
                summary_extra = format!(
                    ", fitted rate {:.4} (ci {:?}, r2 {:.4}) vs lambda* {:.4}",
                    fit.rate, fit.rate_ci, fit.r2, lambda_star
                );
                lines.push(BoundLine {
                    label: "fitted_decay_rate".to_string(),
                    t: fit_window.1,
                    estimate: lambda_star,
                    ci99: 0.0,
                    bound: fit.rate,
                    margin: fit.rate - lambda_star,
                    ok,
                });
            }
            Err(e) => {
                summary_extra = format!(", decay fit refused: {e}");
                lines.push(BoundLine {
                    label: "fitted_decay_rate".to_string(),
                    t: fit_window.1,
                    estimate: f64::NAN,
                    ci99: 0.0,
                    bound: f64::NAN,
                    margin: f64::NAN,
                    ok: false,
                });
            }
        }
    } else {
        let bound = c_bound * e0 + 2.0 * k / lambda_star;
        for (j, &t) in stats.times.iter().enumerate() {
            lines.push(bound_line(
                "mean_sq_norm_sup",
                t,
                stats.mean_sq_norm[j],
                stats.sq_norm_ci99[j],
                bound,
            ));
        }
    }
    let passed = lines.iter().all(|l| l.ok) && stats.explosion_count == 0;
    let summary = format!(
        "branch {}, |P|={:.4}, E0={:.6}, lambda*={:.4}, window={:.4}, explosions={}{}",
        if k == 0.0 { "K=0 decay" } else { "K>0 sup" },
        p.norm(),
        e0,
        lambda_star,
        window,
        stats.explosion_count,
        summary_extra
    );
    CheckReport {
        name: "stability".to_string(),
        passed,
        skipped: None,
        summary,
        lines,
    }
}

/// Paired consecutive-time test that `E[Φ(𝔲(t)) e^{λt}]` never increases
/// with z-score above 3.
pub fn supermartingale_check(run: &EnsembleRun) -> CheckReport {
    let stats = &run.stats;
    if stats.n_paths < 2 {
        return CheckReport::skipped("supermartingale", "degenerate ensemble (n_paths < 2)");
    }
    let n = stats.n_paths as f64;
    let mut lines = Vec::new();
    let mut worst_z = f64::NEG_INFINITY;
    for j in 1..stats.times.len() {
        let diffs: Vec<f64> = run
            .path_phi_exp
            .iter()
            .map(|row| row[j] - row[j - 1])
            .collect();
        let (mean, sd) = mean_sd(&diffs);
        let se = sd / n.sqrt();
        let z = if se > 0.0 { mean / se } else { 0.0 };
        worst_z = worst_z.max(z);
        lines.push(BoundLine {
            label: "phi_exp_increment_z".to_string(),
            t: stats.times[j],
            estimate: z,
            ci99: se,
            bound: 3.0,
            margin: 3.0 - z,
            ok: z <= 3.0,
        });
    }
    let passed = lines.iter().all(|l| l.ok) && stats.explosion_count == 0;
    CheckReport {
        name: "supermartingale".to_string(),
        passed,
        skipped: None,
        summary: format!("largest increment z-score {worst_z:.3} (threshold 3)"),
        lines,
    }
}

/// Exponential fit of a positive curve.
#[derive(Debug, Clone, Serialize)]
pub struct DecayFit {
    /// Decay rate λ in `c e^{-λt}`.
    pub rate: f64,
    pub intercept: f64,
    pub r2: f64,
    /// Bootstrap percentile interval for the rate, when available.
    pub rate_ci: Option<(f64, f64)>,
}

/// Least squares on the log curve over `[window.0, window.1]`.
/// Nonpositive values refuse the fit.
pub fn decay_fit(times: &[f64], values: &[f64], window: (f64, f64)) -> Result<DecayFit> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (&t, &v) in times.iter().zip(values) {
        if t < window.0 || t > window.1 {
            continue;
        }
        if !(v > 0.0) {
            return Err(CoreError::FitRefused(format!("nonpositive curve value {v} at t={t}")));
        }
        xs.push(t);
        ys.push(v.ln());
    }
    let (slope, intercept, r2) = ols_fit(&xs, &ys)?;
    Ok(DecayFit {
        rate: -slope,
        intercept,
        r2,
        rate_ci: None,
    })
}

/// Path bootstrap (resample paths with replacement, refit the mean curve)
/// for the decay rate's percentile interval.
pub fn decay_fit_bootstrap(
    run: &EnsembleRun,
    window: (f64, f64),
    resamples: usize,
    seed: SeedRecord,
) -> Result<DecayFit> {
    let stats = &run.stats;
    let mut fit = decay_fit(&stats.times, &stats.mean_sq_norm, window)?;
    let n = run.path_sq_norm.len();
    if n < 2 || resamples == 0 {
        return Ok(fit);
    }
    use rand::Rng;
    let mut rng = seed.rng();
    let mut rates = Vec::with_capacity(resamples);
    let mut mean = vec![0.0; stats.times.len()];
    for _ in 0..resamples {
        mean.fill(0.0);
        for _ in 0..n {
            let pick = rng.random_range(0..n);
            for (m, v) in mean.iter_mut().zip(&run.path_sq_norm[pick]) {
                *m += v;
            }
        }
        for m in mean.iter_mut() {
            *m /= n as f64;
        }
        if let Ok(f) = decay_fit(&stats.times, &mean, window) {
            rates.push(f.rate);
        }
    }
    if rates.len() >= resamples / 2 {
        rates.sort_by(f64::total_cmp);
        let lo = rates[(rates.len() as f64 * 0.025) as usize];
        let hi = rates[((rates.len() as f64 * 0.975) as usize).min(rates.len() - 1)];
        fit.rate_ci = Some((lo, hi));
    }
    Ok(fit)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::{DeclaredConstants, DriftKind, JumpKind, MarkMap};
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn basis() -> Arc<SpectralBasis> {
        SpectralBasis::hinged(1.0, 4, 16).unwrap()
    }

    fn null_noise() -> MarkMeasure {
        MarkMeasure::atoms(vec![(1.0, 1e-14)]).unwrap()
    }

    fn zero_model(n: usize) -> ModelSpec {
        ModelSpec::new(
            NonlinearityM::none(),
            DriftKind::LinearDamping { beta: 0.0 },
            JumpKind::Separable {
                shape: vec![0.0; n],
                map: MarkMap::constant(0.0),
            },
            DeclaredConstants::default(),
        )
        .unwrap()
    }

    fn harness(n_paths: usize, seed: u64) -> HarnessConfig {
        HarnessConfig {
            n_paths,
            report_points: 21,
            levels: vec![4.0, 8.0],
            lambda: 0.1,
            seed,
        }
    }

    #[test]
    fn deterministic_zero_model_has_flat_statistics() {
        let basis = basis();
        let u0 = InitialCondition::Fixed {
            a: vec![1.0, 0.0, 0.0, 0.0],
            b: vec![0.0; 4],
        };
        let cfg = SolverConfig::new(0.01, 1.0);
        let run = run_ensemble(&basis, &zero_model(4), &null_noise(), &u0, &cfg, &harness(8, 1)).unwrap();
        for (m, ci) in run.stats.mean_sq_norm.iter().zip(&run.stats.sq_norm_ci99) {
            assert_relative_eq!(*m, PI.powi(4), max_relative = 1e-10);
            assert!(*ci < 1e-9);
        }
        assert_eq!(run.stats.explosion_count, 0);
    }

    #[test]
    fn same_seed_reproduces_bitwise() {
        let basis = basis();
        let mut shape = vec![0.0; 4];
        shape[0] = 0.3;
        let spec = ModelSpec::new(
            NonlinearityM::none(),
            DriftKind::LinearDamping { beta: 0.2 },
            JumpKind::Separable {
                shape,
                map: MarkMap::linear(1.0),
            },
            DeclaredConstants::default(),
        )
        .unwrap();
        let nu = MarkMeasure::atoms(vec![(-1.0, 0.5), (1.0, 0.5)]).unwrap();
        let u0 = InitialCondition::RandomBall { radius: 1.0 };
        let cfg = SolverConfig::new(0.01, 1.0);
        let r1 = run_ensemble(&basis, &spec, &nu, &u0, &cfg, &harness(32, 9)).unwrap();
        let r2 = run_ensemble(&basis, &spec, &nu, &u0, &cfg, &harness(32, 9)).unwrap();
        assert_eq!(r1.stats.mean_sq_norm, r2.stats.mean_sq_norm);
        assert_eq!(r1.stats.mean_phi_exp, r2.stats.mean_phi_exp);
        assert_eq!(r1.path_sq_norm, r2.path_sq_norm);
    }

    #[test]
    fn additive_noise_growth_matches_isometry() {
        // f = 0, m = 0, g = const·e₁, so E‖𝔲(t)‖² = ‖𝔲₀‖² + t Λ ‖g‖².
        let basis = basis();
        let c = 0.5;
        let mut shape = vec![0.0; 4];
        shape[0] = c;
        let spec = ModelSpec::new(
            NonlinearityM::none(),
            DriftKind::LinearDamping { beta: 0.0 },
            JumpKind::Separable {
                shape,
                map: MarkMap::constant(1.0),
            },
            DeclaredConstants::default(),
        )
        .unwrap();
        let lambda = 2.0;
        let nu = MarkMeasure::atoms(vec![(1.0, lambda)]).unwrap();
        let u0 = InitialCondition::Fixed {
            a: vec![0.1, 0.0, 0.0, 0.0],
            b: vec![0.0; 4],
        };
        let cfg = SolverConfig::new(5e-3, 2.0);
        let run = run_ensemble(&basis, &spec, &nu, &u0, &cfg, &harness(4000, 21)).unwrap();
        let base = 0.1f64.powi(2) * PI.powi(4);
        for (j, &t) in run.stats.times.iter().enumerate() {
            let expect = base + t * lambda * c * c;
            let est = run.stats.mean_sq_norm[j];
            let ci = run.stats.sq_norm_ci99[j];
            assert!(
                (est - expect).abs() <= ci.max(1e-4),
                "t={t}: est {est}, expect {expect}, ci {ci}"
            );
        }
    }

    #[test]
    fn khasminskii_trivial_zero_model() {
        let basis = basis();
        let u0 = InitialCondition::Fixed {
            a: vec![0.05, 0.0, 0.0, 0.0],
            b: vec![0.0; 4],
        };
        let mut spec = zero_model(4);
        spec.constants.k_f = 1.0;
        spec.constants.k_g = 1.0;
        let cfg = SolverConfig::new(0.01, 1.0);
        let run = run_ensemble(&basis, &spec, &null_noise(), &u0, &cfg, &harness(16, 3)).unwrap();
        let report = khasminskii_check(&run, &spec);
        assert!(report.passed, "{}", report.summary);
        // Tails identically zero for a bounded deterministic path.
        for c in &run.stats.tail_prob {
            assert!(c.mean.iter().all(|&p| p == 0.0));
        }
    }

    #[test]
    fn stability_skips_when_window_is_empty() {
        // β = 1 forces β − 2Cβ² ≤ 0 (C ≥ ½): the theorem is inapplicable
        // and the check must say so rather than run.
        let basis = basis();
        let beta = 1.0;
        let spec = ModelSpec::new(
            NonlinearityM::none(),
            DriftKind::LinearDamping { beta },
            JumpKind::Separable {
                shape: vec![0.0; 4],
                map: MarkMap::constant(0.0),
            },
            DeclaredConstants::default(),
        )
        .unwrap();
        let p = POperator::new(basis.clone(), beta).unwrap();
        assert_eq!(lambda_window(beta, basis.mu1(), 0.0, 1.0, &p), 0.0);
        let u0 = InitialCondition::Fixed {
            a: vec![0.1, 0.0, 0.0, 0.0],
            b: vec![0.0; 4],
        };
        let cfg = SolverConfig::new(0.01, 1.0);
        let run = run_ensemble(&basis, &spec, &null_noise(), &u0, &cfg, &harness(4, 5)).unwrap();
        let report = stability_check(&run, &spec, &p, &spec.nl.clone(), (0.2, 1.0));
        assert!(report.skipped.is_some(), "{}", report.summary);
        assert!(report.summary.contains("inapplicable"));
    }

    #[test]
    fn tails_are_monotone_and_cis_shrink() {
        // Additive noise excites crossings of low levels; the empirical
        // tails must be nonincreasing in n and nondecreasing in t, and CIs
        // shrink like 1/sqrt(n_paths).
        let basis = basis();
        let mut shape = vec![0.0; 4];
        shape[0] = 1.2;
        let spec = ModelSpec::new(
            NonlinearityM::none(),
            DriftKind::LinearDamping { beta: 0.0 },
            JumpKind::Separable {
                shape,
                map: MarkMap::constant(1.0),
            },
            DeclaredConstants::default(),
        )
        .unwrap();
        let nu = MarkMeasure::atoms(vec![(1.0, 3.0)]).unwrap();
        let u0 = InitialCondition::Fixed {
            a: vec![0.0; 4],
            b: vec![0.0; 4],
        };
        let cfg = SolverConfig::new(5e-3, 4.0);
        let mut h = harness(400, 31);
        h.levels = vec![1.0, 2.0, 4.0];
        let run = run_ensemble(&basis, &spec, &nu, &u0, &cfg, &h).unwrap();
        let tails = &run.stats.tail_prob;
        assert!(tails[0].mean.last().unwrap() > &0.2, "level 1 should be crossed often");
        for curve in tails {
            for w in curve.mean.windows(2) {
                assert!(w[1] >= w[0], "tail must be nondecreasing in t");
            }
        }
        for j in 0..run.stats.times.len() {
            for li in 1..tails.len() {
                assert!(
                    tails[li].mean[j] <= tails[li - 1].mean[j] + 1e-12,
                    "tail must be nonincreasing in the level"
                );
            }
        }
        // 4x the paths halves the CI (within slack).
        let small = run_ensemble(&basis, &spec, &nu, &u0, &cfg, &harness(100, 31)).unwrap();
        let j = run.stats.times.len() / 2;
        let ratio = small.stats.sq_norm_ci99[j] / run.stats.sq_norm_ci99[j];
        assert!(ratio > 1.4 && ratio < 2.9, "CI shrink ratio {ratio}");
    }

    #[test]
    fn decay_fit_exact_exponential() {
        let times: Vec<f64> = (0..60).map(|i| i as f64 * 0.1).collect();
        let vals: Vec<f64> = times.iter().map(|&t| 3.0 * (-2.0 * t).exp()).collect();
        let fit = decay_fit(&times, &vals, (0.0, 6.0)).unwrap();
        assert_relative_eq!(fit.rate, 2.0, epsilon = 1e-9);
        assert_relative_eq!(fit.r2, 1.0, epsilon = 1e-9);
        let flat = decay_fit(&times, &vec![1.5; 60], (0.0, 6.0)).unwrap();
        assert!(flat.rate.abs() < 1e-12);
        assert!(decay_fit(&times, &vec![0.0; 60], (0.0, 6.0)).is_err());
    }

    #[test]
    fn supermartingale_of_noise_free_damped_model() {
        let basis = basis();
        let beta = 0.2;
        let spec = ModelSpec::new(
            NonlinearityM::affine(0.0, 1.0, 1.0).unwrap(),
            DriftKind::LinearDamping { beta },
            JumpKind::Separable {
                shape: vec![0.0; 4],
                map: MarkMap::constant(0.0),
            },
            DeclaredConstants::default(),
        )
        .unwrap();
        let p = POperator::new(basis.clone(), beta).unwrap();
        let window = lambda_window(beta, basis.mu1(), 0.0, 1.0, &p);
        assert!(window > 0.0);
        let u0 = InitialCondition::Fixed {
            a: vec![1.0 / basis.mu1(), 0.0, 0.0, 0.0],
            b: vec![0.0; 4],
        };
        let cfg = SolverConfig::new(2e-3, 5.0);
        let mut h = harness(4, 77);
        h.lambda = 0.9 * window;
        let run = run_ensemble(&basis, &spec, &null_noise(), &u0, &cfg, &h).unwrap();
        // Pathwise: Φ e^{λt} nonincreasing along the deterministic flow.
        for row in &run.path_phi_exp {
            for w in row.windows(2) {
                assert!(w[1] <= w[0] * (1.0 + 1e-9), "{} -> {}", w[0], w[1]);
            }
        }
        let report = supermartingale_check(&run);
        assert!(report.passed, "{}", report.summary);
        let stab = stability_check(&run, &spec, &p, &spec.nl.clone(), (1.0, 5.0));
        assert!(stab.passed, "{}", stab.summary);
    }
}
