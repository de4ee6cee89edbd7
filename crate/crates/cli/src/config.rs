//! Experiment configuration: TOML in, fully resolved config out.

use std::path::{Path, PathBuf};

use fdelab_core::grid::DomainSpec;
use fdelab_core::stationary::Exponents;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    #[serde(default)]
    pub domain: RawDomain,
    #[serde(default)]
    pub exponents: RawExponents,
    #[serde(default)]
    pub spectrum: RawSpectrum,
    #[serde(default)]
    pub flow: RawFlow,
    #[serde(default)]
    pub initial: RawInitial,
    #[serde(default)]
    pub rates: RawRates,
    #[serde(default)]
    pub extinction: RawExtinction,
    #[serde(default)]
    pub output: RawOutput,
    #[serde(default)]
    pub sweep: RawSweep,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawDomain {
    pub geometry: Option<String>,
    pub length: Option<f64>,
    pub dim: Option<usize>,
    pub radius: Option<f64>,
    pub nodes: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawExponents {
    pub p: Option<f64>,
    pub m: Option<f64>,
    pub c: Option<f64>,
    #[serde(rename = "T")]
    pub t_ext: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawSpectrum {
    pub modes: Option<usize>,
    pub gap_tol: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawFlow {
    pub horizon: Option<f64>,
    pub dt_init: Option<f64>,
    pub dt_max: Option<f64>,
    pub dt_min: Option<f64>,
    pub sample_every: Option<f64>,
    pub match_extinction: Option<bool>,
    pub match_threshold: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawInitial {
    pub kind: Option<String>,
    pub factor: Option<f64>,
    pub modes: Option<Vec<(usize, usize, f64)>>,
    pub path: Option<PathBuf>,
    pub deflate: Option<bool>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawRates {
    pub band: Option<(f64, f64)>,
    pub tol: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawExtinction {
    pub enabled: Option<bool>,
    pub dt: Option<f64>,
    pub levels: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawOutput {
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawSweep {
    pub p: Option<Vec<f64>>,
    pub nodes: Option<Vec<usize>>,
    pub amplitude: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "geometry", rename_all = "snake_case")]
pub enum DomainConfig {
    Interval { length: f64, nodes: usize },
    Ball { dim: usize, radius: f64, nodes: usize },
}

impl DomainConfig {
    pub fn spec(&self) -> DomainSpec {
        match *self {
            DomainConfig::Interval { length, nodes } => DomainSpec::interval(length, nodes),
            DomainConfig::Ball { dim, radius, nodes } => DomainSpec::ball(dim, radius, nodes),
        }
    }

    pub fn nodes(&self) -> usize {
        match *self {
            DomainConfig::Interval { nodes, .. } | DomainConfig::Ball { nodes, .. } => nodes,
        }
    }

    pub fn with_nodes(&self, n: usize) -> Self {
        match *self {
            DomainConfig::Interval { length, .. } => DomainConfig::Interval { length, nodes: n },
            DomainConfig::Ball { dim, radius, .. } => DomainConfig::Ball { dim, radius, nodes: n },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExponentConfig {
    pub p: f64,
    pub m: f64,
    pub c: f64,
    #[serde(rename = "T")]
    pub t_ext: f64,
}

impl ExponentConfig {
    pub fn exponents(&self) -> Exponents {
        Exponents { p: self.p, m: self.m, c: self.c, t_ext: self.t_ext }
    }

    fn from_exps(e: &Exponents) -> Self {
        Self { p: e.p, m: e.m, c: e.c, t_ext: e.t_ext }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialData {
    Stationary,
    ScaledStationary { factor: f64 },
    /// `(k, j, amplitude)`: adds `amplitude · ‖V‖_∞ · φ_{k,j}/‖φ_{k,j}‖_∞`.
    ModePerturbed { modes: Vec<(usize, usize, f64)> },
    FromFile { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlowConfig {
    pub horizon: f64,
    pub dt_init: f64,
    pub dt_max: f64,
    pub dt_min: f64,
    pub sample_every: f64,
    pub match_extinction: bool,
    pub match_threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExtinctionConfig {
    pub enabled: bool,
    pub dt: f64,
    pub levels: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepConfig {
    pub p: Vec<f64>,
    pub nodes: Vec<usize>,
    pub amplitude: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub domain: DomainConfig,
    pub exponents: ExponentConfig,
    pub spectrum_modes: usize,
    pub gap_tol: f64,
    pub flow: FlowConfig,
    pub initial: InitialData,
    /// Project the initial perturbation off the modes `k ≤ k_p`.
    pub deflate_initial: bool,
    pub rate_band: (f64, f64),
    pub rate_tol: f64,
    pub extinction: ExtinctionConfig,
    pub output_dir: PathBuf,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
}

fn bad(field: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{field}: {msg}"))
}

fn positive(field: &str, x: f64) -> Result<f64, CliError> {
    if x > 0.0 && x.is_finite() {
        Ok(x)
    } else {
        Err(bad(field, format!("must be positive and finite, got {x}")))
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| bad(&path.display().to_string(), e))?;
        let mut cfg = Self::parse(&text)?;
        if let InitialData::FromFile { path: p } = &mut cfg.initial {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        Self::resolve(raw)
    }

    pub fn resolve(raw: RawConfig) -> Result<Self, CliError> {
        let d = raw.domain;
        let nodes = d.nodes.unwrap_or(256);
        let domain = match d.geometry.as_deref().unwrap_or("interval") {
            "interval" => {
                if d.dim.is_some() || d.radius.is_some() {
                    return Err(bad("domain", "interval takes `length`, not `dim`/`radius`"));
                }
                DomainConfig::Interval { length: positive("domain.length", d.length.unwrap_or(1.0))?, nodes }
            }
            "ball" => {
                if d.length.is_some() {
                    return Err(bad("domain", "ball takes `dim` and `radius`, not `length`"));
                }
                DomainConfig::Ball { dim: d.dim.unwrap_or(3), radius: positive("domain.radius", d.radius.unwrap_or(1.0))?, nodes }
            }
            other => return Err(bad("domain.geometry", format!("unknown geometry `{other}` (interval | ball)"))),
        };
        domain.spec().validate().map_err(|e| bad("domain", e))?;

        let e = raw.exponents;
        let exps = match (e.p, e.m, e.c, e.t_ext) {
            (Some(p), None, Some(c), None) => Exponents::from_p_c(p, c),
            (Some(p), None, None, Some(t)) => Exponents::from_p_t(p, t),
            (None, Some(m), Some(c), None) => Exponents::from_m_c(m, c),
            (None, Some(m), None, Some(t)) => Exponents::from_m_t(m, t),
            (None, None, None, None) => Exponents::from_p_c(2.0, 1.0),
            _ => return Err(bad("exponents", "give exactly one of `p`/`m` and exactly one of `c`/`T`")),
        }
        .map_err(|err| bad("exponents", err))?;
        exps.check_dimension(domain.spec().dim()).map_err(|err| bad("exponents", err))?;

        let spectrum_modes = raw.spectrum.modes.unwrap_or(6);
        if spectrum_modes < 2 || spectrum_modes > nodes / 4 {
            return Err(bad("spectrum.modes", format!("must lie in [2, nodes/4 = {}]", nodes / 4)));
        }
        let gap_tol = positive("spectrum.gap_tol", raw.spectrum.gap_tol.unwrap_or(fdelab_core::spectrum::DEFAULT_GAP_TOL))?;

        let f = raw.flow;
        let flow = FlowConfig {
            horizon: positive("flow.horizon", f.horizon.unwrap_or(12.0))?,
            dt_init: positive("flow.dt_init", f.dt_init.unwrap_or(1e-3))?,
            dt_max: positive("flow.dt_max", f.dt_max.unwrap_or(2.5e-3))?,
            dt_min: positive("flow.dt_min", f.dt_min.unwrap_or(1e-8))?,
            sample_every: positive("flow.sample_every", f.sample_every.unwrap_or(0.05))?,
            match_extinction: f.match_extinction.unwrap_or(true),
            match_threshold: positive("flow.match_threshold", f.match_threshold.unwrap_or(0.05))?,
        };
        if flow.dt_min > flow.dt_max {
            return Err(bad("flow.dt_min", "exceeds dt_max"));
        }

        let i = raw.initial;
        let initial = match i.kind.as_deref().unwrap_or("mode_perturbed") {
            "stationary" => InitialData::Stationary,
            "scaled_stationary" => InitialData::ScaledStationary { factor: positive("initial.factor", i.factor.unwrap_or(1.1))? },
            "mode_perturbed" => {
                let modes = i.modes.unwrap_or_else(|| vec![(2, 1, 0.1)]);
                for &(k, j, a) in &modes {
                    if k == 0 || k > spectrum_modes || j == 0 {
                        return Err(bad("initial.modes", format!("mode ({k}, {j}) outside the computed spectrum (1..={spectrum_modes})")));
                    }
                    if !a.is_finite() {
                        return Err(bad("initial.modes", "amplitude must be finite"));
                    }
                }
                InitialData::ModePerturbed { modes }
            }
            "from_file" => InitialData::FromFile { path: i.path.ok_or_else(|| bad("initial.path", "required for from_file"))? },
            other => {
                return Err(bad(
                    "initial.kind",
                    format!("unknown kind `{other}` (stationary | scaled_stationary | mode_perturbed | from_file)"),
                ))
            }
        };

        let band = raw.rates.band.unwrap_or(fdelab_core::rates::DEFAULT_BAND);
        if !(band.0 > 0.0 && band.0 < band.1) {
            return Err(bad("rates.band", "need 0 < lo < hi"));
        }
        let x = raw.extinction;
        let extinction = ExtinctionConfig {
            enabled: x.enabled.unwrap_or(false),
            dt: positive("extinction.dt", x.dt.unwrap_or(2e-3))?,
            levels: x.levels.unwrap_or(3).max(1),
        };
        let sweep = if raw.sweep.p.is_some() || raw.sweep.nodes.is_some() || raw.sweep.amplitude.is_some() {
            Some(SweepConfig {
                p: raw.sweep.p.unwrap_or_else(|| vec![exps.p]),
                nodes: raw.sweep.nodes.unwrap_or_else(|| vec![nodes]),
                amplitude: raw.sweep.amplitude.unwrap_or_default(),
            })
        } else {
            None
        };
        Ok(Self {
            domain,
            exponents: ExponentConfig::from_exps(&exps),
            spectrum_modes,
            gap_tol,
            flow,
            initial,
            deflate_initial: i.deflate.unwrap_or(false),
            rate_band: band,
            rate_tol: positive("rates.tol", raw.rates.tol.unwrap_or(0.05))?,
            extinction,
            output_dir: raw.output.dir.unwrap_or_else(|| PathBuf::from("out")),
            seed: raw.seed.unwrap_or(0),
            sweep,
        })
    }

    /// Copy with `p` replaced at the same `c`.
    pub fn with_p(&self, p: f64) -> Result<Self, CliError> {
        let e = Exponents::from_p_c(p, self.exponents.c).map_err(|err| bad("sweep.p", err))?;
        Ok(Self { exponents: ExponentConfig::from_exps(&e), ..self.clone() })
    }

    pub fn with_exponents(&self, e: &Exponents) -> Self {
        Self { exponents: ExponentConfig::from_exps(e), ..self.clone() }
    }
}
