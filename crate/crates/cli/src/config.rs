//! Run configuration: a sectioned TOML file (or a built-in preset name)
//! describing the basis, model, noise, solver and harness, plus the seed
//! and output directory. Parsing round-trips: emit -> parse -> emit is
//! byte-identical, and the emitted canonical form is what gets hashed into
//! every output file for provenance.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use stobeam_core::{
    lambda_window, BcKind, CoreError, DeclaredConstants, DriftKind, InitialCondition, JumpKind,
    MarkMap, MarkMeasure, ModelSpec, NonlinearityM, POperator, PicardConfig, PointwiseCoefficient,
    PointwiseConstants, PointwiseKind, SolverConfig, SpectralBasis,
};

pub type Result<T> = std::result::Result<T, CoreError>;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
    pub basis: BasisSection,
    pub model: ModelSection,
    pub noise: NoiseSection,
    pub solver: SolverSection,
    pub harness: HarnessSection,
    pub initial: InitialSection,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct BasisSection {
    pub bc: BcKind,
    pub length: f64,
    pub n_modes: usize,
    pub grid_points: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    /// m(r) = m_a + m_b r.
    pub m_a: f64,
    pub m_b: f64,
    pub alpha: f64,
    pub f_kind: FKindConfig,
    #[serde(default)]
    pub beta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pointwise_f: Option<PointwiseSection>,
    pub g_kind: GKindConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub separable: Option<SeparableSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pointwise_g: Option<PointwiseSection>,
    pub k_f: f64,
    pub k_g: f64,
    pub l_f: f64,
    pub l_g: f64,
    pub r_g: f64,
    pub k_const: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trunc_radius: Option<f64>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum FKindConfig {
    LinearDamping,
    Pointwise,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum GKindConfig {
    Separable,
    /// Pointwise Π = (c0 + c_u u + c_ut u_t + c_grad ∂u) · z.
    Pointwise,
}

/// Coefficients of an affine pointwise function of the fields.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct PointwiseSection {
    #[serde(default)]
    pub c0: f64,
    #[serde(default)]
    pub c_u: f64,
    #[serde(default)]
    pub c_ut: f64,
    #[serde(default)]
    pub c_grad: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SeparableSection {
    /// 1-based mode index of the jump shape e_k.
    pub mode: usize,
    pub scale: f64,
    pub map: MapKindConfig,
    pub coeff: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum MapKindConfig {
    /// φ(z) = coeff.
    Constant,
    /// φ(z) = coeff · z.
    Linear,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    pub kind: NoiseKindConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub atoms: Option<Vec<(f64, f64)>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lo: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hi: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub std: Option<f64>,
    #[serde(default = "default_quad_nodes")]
    pub quad_nodes: usize,
}

fn default_quad_nodes() -> usize {
    64
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseKindConfig {
    Atoms,
    Uniform,
    Normal,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub dt_max: f64,
    pub horizon: f64,
    pub n_cap: f64,
    pub picard_tol: f64,
    pub picard_max_iter: usize,
    pub picard_lambda: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct HarnessSection {
    pub n_paths: usize,
    pub report_points: usize,
    pub levels: Vec<f64>,
    pub lambda_star_fraction: f64,
    pub checks: Vec<CheckKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit_window: Option<(f64, f64)>,
    /// Require checks to pass at dt and dt/2 before declaring success.
    #[serde(default = "default_true")]
    pub dt_refine: bool,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum CheckKind {
    Khasminskii,
    Stability,
    Supermartingale,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    pub kind: InitialKindConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coeffs_a: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coeffs_b: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum InitialKindConfig {
    Zero,
    Mode,
    Coeffs,
    RandomBall,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| CoreError::Config {
            field: "config",
            reason: e.to_string(),
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| CoreError::Config {
            field: "config",
            reason: format!("serialization failed: {e}"),
        })
    }

    /// FNV-1a hash of the canonical TOML emission, hex-encoded; stamped
    /// into every output file.
    pub fn hash(&self) -> Result<String> {
        let text = self.to_toml()?;
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for byte in text.bytes() {
            h ^= byte as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        Ok(format!("{h:016x}"))
    }

    /// Instantiate every core object the commands need.
    pub fn build(&self) -> Result<Built> {
        let basis = match self.basis.bc {
            BcKind::Hinged => {
                SpectralBasis::hinged(self.basis.length, self.basis.n_modes, self.basis.grid_points)?
            }
            BcKind::Clamped => {
                SpectralBasis::clamped(self.basis.length, self.basis.n_modes, self.basis.grid_points)?
            }
        };
        let nl = if self.model.m_a == 0.0 && self.model.m_b == 0.0 {
            NonlinearityM::none()
        } else {
            NonlinearityM::affine(self.model.m_a, self.model.m_b, self.model.alpha)?
        };

        let f_kind = match self.model.f_kind {
            FKindConfig::LinearDamping => DriftKind::LinearDamping { beta: self.model.beta },
            FKindConfig::Pointwise => {
                let s = self.model.pointwise_f.ok_or_else(|| CoreError::Config {
                    field: "model.pointwise_f",
                    reason: "required when f_kind = \"pointwise\"".into(),
                })?;
                DriftKind::Pointwise(PointwiseCoefficient {
                    kind: PointwiseKind::LinearFields {
                        c0: s.c0,
                        c_u: s.c_u,
                        c_ut: s.c_ut,
                        c_grad: s.c_grad,
                    },
                    constants: PointwiseConstants::default(),
                })
            }
        };
        let g_kind = match self.model.g_kind {
            GKindConfig::Separable => {
                let s = self.model.separable.clone().ok_or_else(|| CoreError::Config {
                    field: "model.separable",
                    reason: "required when g_kind = \"separable\"".into(),
                })?;
                if s.mode == 0 || s.mode > self.basis.n_modes {
                    return Err(CoreError::Config {
                        field: "model.separable.mode",
                        reason: format!("mode {} outside 1..={}", s.mode, self.basis.n_modes),
                    });
                }
                let mut shape = vec![0.0; self.basis.n_modes];
                shape[s.mode - 1] = s.scale;
                let map = match s.map {
                    MapKindConfig::Constant => MarkMap::constant(s.coeff),
                    MapKindConfig::Linear => MarkMap::linear(s.coeff),
                };
                JumpKind::Separable { shape, map }
            }
            GKindConfig::Pointwise => {
                let s = self.model.pointwise_g.ok_or_else(|| CoreError::Config {
                    field: "model.pointwise_g",
                    reason: "required when g_kind = \"pointwise\"".into(),
                })?;
                JumpKind::Pointwise(PointwiseCoefficient {
                    kind: PointwiseKind::LinearFieldsTimesMark {
                        c0: s.c0,
                        c_u: s.c_u,
                        c_ut: s.c_ut,
                        c_grad: s.c_grad,
                    },
                    constants: PointwiseConstants::default(),
                })
            }
        };
        let constants = DeclaredConstants {
            k_f: self.model.k_f,
            k_g: self.model.k_g,
            l_f: self.model.l_f,
            l_g: self.model.l_g,
            r_g: self.model.r_g,
            k: self.model.k_const,
        };
        let mut spec = ModelSpec::new(nl, f_kind, g_kind, constants)?;
        if let Some(r) = self.model.trunc_radius {
            spec = spec.truncate_drift(r)?;
        }

        let nu = match self.noise.kind {
            NoiseKindConfig::Atoms => {
                let atoms = self.noise.atoms.clone().ok_or_else(|| CoreError::Config {
                    field: "noise.atoms",
                    reason: "required when kind = \"atoms\"".into(),
                })?;
                MarkMeasure::atoms(atoms)?
            }
            NoiseKindConfig::Uniform => MarkMeasure::density(
                self.noise.lambda.ok_or_else(|| missing("noise.lambda"))?,
                stobeam_core::DensityKind::Uniform {
                    lo: self.noise.lo.ok_or_else(|| missing("noise.lo"))?,
                    hi: self.noise.hi.ok_or_else(|| missing("noise.hi"))?,
                },
            )?,
            NoiseKindConfig::Normal => MarkMeasure::density(
                self.noise.lambda.ok_or_else(|| missing("noise.lambda"))?,
                stobeam_core::DensityKind::Normal {
                    mean: self.noise.mean.ok_or_else(|| missing("noise.mean"))?,
                    std: self.noise.std.ok_or_else(|| missing("noise.std"))?,
                },
            )?,
        };

        let solver = SolverConfig {
            dt_max: self.solver.dt_max,
            horizon: self.solver.horizon,
            n_cap: self.solver.n_cap,
            picard: PicardConfig {
                tol: self.solver.picard_tol,
                max_iter: self.solver.picard_max_iter,
                lambda_weight: self.solver.picard_lambda,
            },
        };
        solver.validate()?;

        let initial = match self.initial.kind {
            InitialKindConfig::Zero => InitialCondition::Fixed {
                a: vec![0.0; self.basis.n_modes],
                b: vec![0.0; self.basis.n_modes],
            },
            InitialKindConfig::Mode => {
                let mode = self.initial.mode.ok_or_else(|| missing("initial.mode"))?;
                if mode == 0 || mode > self.basis.n_modes {
                    return Err(CoreError::Config {
                        field: "initial.mode",
                        reason: format!("mode {mode} outside 1..={}", self.basis.n_modes),
                    });
                }
                let mut a = vec![0.0; self.basis.n_modes];
                let mut b = vec![0.0; self.basis.n_modes];
                a[mode - 1] = self.initial.a.unwrap_or(0.0);
                b[mode - 1] = self.initial.b.unwrap_or(0.0);
                InitialCondition::Fixed { a, b }
            }
            InitialKindConfig::Coeffs => {
                let a = self.initial.coeffs_a.clone().ok_or_else(|| missing("initial.coeffs_a"))?;
                let b = self.initial.coeffs_b.clone().ok_or_else(|| missing("initial.coeffs_b"))?;
                if a.len() != self.basis.n_modes || b.len() != self.basis.n_modes {
                    return Err(CoreError::Config {
                        field: "initial.coeffs_a",
                        reason: format!("need {} coefficients", self.basis.n_modes),
                    });
                }
                InitialCondition::Fixed { a, b }
            }
            InitialKindConfig::RandomBall => InitialCondition::RandomBall {
                radius: self.initial.radius.ok_or_else(|| missing("initial.radius"))?,
            },
        };

        // The admissible decay-rate window and the strict-interior rate the
        // harness actually uses.
        let (p_op, window) = match spec.beta() {
            Some(beta) => {
                let p = POperator::new(basis.clone(), beta)?;
                let w = lambda_window(beta, basis.mu1(), spec.constants.r_g, spec.nl.alpha(), &p);
                (Some(p), w)
            }
            None => (None, 0.0),
        };
        let lambda_star = self.harness.lambda_star_fraction * window;

        Ok(Built {
            basis,
            spec,
            nu,
            solver,
            initial,
            p_op,
            lambda_window: window,
            lambda_star,
        })
    }
}

fn missing(field: &'static str) -> CoreError {
    CoreError::Config {
        field,
        reason: "missing required field".into(),
    }
}

/// Everything a command needs, instantiated from one config.
pub struct Built {
    pub basis: Arc<SpectralBasis>,
    pub spec: ModelSpec,
    pub nu: MarkMeasure,
    pub solver: SolverConfig,
    pub initial: InitialCondition,
    pub p_op: Option<POperator>,
    pub lambda_window: f64,
    pub lambda_star: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;

    #[test]
    fn emit_parse_emit_is_identity() {
        for name in presets::PRESET_NAMES {
            let cfg = presets::preset(name).unwrap();
            let once = cfg.to_toml().unwrap();
            let back = RunConfig::from_toml(&once).unwrap();
            let twice = back.to_toml().unwrap();
            assert_eq!(once, twice, "round trip not identical for {name}");
            assert_eq!(cfg, back);
        }
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let cfg = presets::preset("hinged-basic").unwrap();
        let mut text = cfg.to_toml().unwrap();
        text.push_str("\nbogus_field = 3\n");
        assert!(RunConfig::from_toml(&text).is_err());
    }

    #[test]
    fn builds_every_preset() {
        for name in presets::PRESET_NAMES {
            let cfg = presets::preset(name).unwrap();
            let built = cfg.build().unwrap_or_else(|e| panic!("{name}: {e}"));
            assert!(built.basis.n_modes() > 0);
        }
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let cfg = presets::preset("damped-beam").unwrap();
        let h1 = cfg.hash().unwrap();
        let h2 = cfg.hash().unwrap();
        assert_eq!(h1, h2);
        let mut other = cfg.clone();
        other.seed += 1;
        assert_ne!(h1, other.hash().unwrap());
    }
}
