//! Simulation configuration: the JSON file schema, its validation, and the
//! shipped presets.
//!
//! ```json
//! {
//!   "manifold": { "kind": "flat_torus", "dimension": 1 },
//!   "kernel": { "family": "power_law", "params": [2.0] },
//!   "coupling": 1.0,
//!   "n_particles": 5,
//!   "dt": 0.01,
//!   "horizon": 50.0,
//!   "truncation_eps": 1e-8,
//!   "integrator": "rk4",
//!   "seed": 2,
//!   "initial": { "strip_half_width": 1.0 },
//!   "output": { "stride": 10, "particles": false },
//!   "thresholds": { "alignment": 1e-4, "diameter": 1e-4, "second_component": 1e-4 }
//! }
//! ```
//!
//! Only `manifold`, `kernel`, `coupling`, `horizon` and either `n_particles`
//! or explicit `initial.positions`/`initial.velocities` are required.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::ParticleState;
use crate::error::{config_err, Error, Result};
use crate::kernel::{summability, Kernel, KernelFamily};
use crate::manifold::{ManifoldKind, ManifoldSpec};

pub const DEFAULT_DT: f64 = 1e-2;
pub const DEFAULT_TRUNCATION_EPS: f64 = 1e-10;
pub const DEFAULT_STRIDE: usize = 10;
pub const DEFAULT_STRIP_HALF_WIDTH: f64 = 1.0;
pub const DEFAULT_THRESHOLD: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Integrator {
    Euler,
    #[default]
    Rk4,
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialData {
    /// Lifted positions and velocities, one row per particle.
    Explicit {
        positions: Vec<Vec<f64>>,
        velocities: Vec<Vec<f64>>,
    },
    /// Positions uniform in the fundamental domain (the Möbius strip's second
    /// coordinate uniform in `(-L, L)`), velocities uniform in `[-1, 1]^d`.
    Sampled,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub alignment: f64,
    pub diameter: f64,
    pub second_component: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            alignment: DEFAULT_THRESHOLD,
            diameter: DEFAULT_THRESHOLD,
            second_component: DEFAULT_THRESHOLD,
        }
    }
}

/// A validated simulation setup.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub manifold: ManifoldSpec,
    pub kernel: Kernel,
    pub coupling: f64,
    pub particle_count: usize,
    pub time_step: f64,
    pub horizon: f64,
    pub truncation_eps: f64,
    pub integrator: Integrator,
    pub seed: u64,
    pub initial: InitialData,
    /// Half-width `L` of the Möbius band used for sampling and for the
    /// strip-bound diagnostic.
    pub strip_half_width: f64,
    pub stride: usize,
    pub write_particles: bool,
    pub thresholds: Thresholds,
}

impl SimConfig {
    /// Minimal configuration with every optional setting at its default.
    pub fn new(
        manifold: ManifoldSpec,
        kernel: Kernel,
        coupling: f64,
        particle_count: usize,
        horizon: f64,
    ) -> Self {
        Self {
            manifold,
            kernel,
            coupling,
            particle_count,
            time_step: DEFAULT_DT,
            horizon,
            truncation_eps: DEFAULT_TRUNCATION_EPS,
            integrator: Integrator::Rk4,
            seed: 0,
            initial: InitialData::Sampled,
            strip_half_width: DEFAULT_STRIP_HALF_WIDTH,
            stride: DEFAULT_STRIDE,
            write_particles: false,
            thresholds: Thresholds::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |field: &str, value: f64| {
            if value > 0.0 && value.is_finite() {
                Ok(())
            } else {
                Err(config_err(
                    field,
                    format!("must be positive and finite, got {value}"),
                ))
            }
        };
        positive("coupling", self.coupling)?;
        positive("dt", self.time_step)?;
        positive("truncation_eps", self.truncation_eps)?;
        positive("initial.strip_half_width", self.strip_half_width)?;
        positive("thresholds.alignment", self.thresholds.alignment)?;
        positive("thresholds.diameter", self.thresholds.diameter)?;
        positive(
            "thresholds.second_component",
            self.thresholds.second_component,
        )?;
        if !(self.horizon >= 0.0 && self.horizon.is_finite()) {
            return Err(config_err("horizon", "must be non-negative and finite"));
        }
        let steps = (self.horizon / self.time_step).round();
        if (steps * self.time_step - self.horizon).abs() > 1e-9 * self.horizon.max(1.0) {
            return Err(config_err(
                "dt",
                format!(
                    "horizon {} is not a whole number of steps of {}",
                    self.horizon, self.time_step
                ),
            ));
        }
        if self.particle_count == 0 {
            return Err(config_err("n_particles", "need at least one particle"));
        }
        if self.stride == 0 {
            return Err(config_err("output.stride", "must be at least 1"));
        }
        let verdict = summability(&self.kernel, &self.manifold);
        if !verdict.summable {
            return Err(config_err("kernel", verdict.reason.unwrap_or_default()));
        }
        if let InitialData::Explicit {
            positions,
            velocities,
        } = &self.initial
        {
            let d = self.manifold.dimension();
            for (name, rows) in [
                ("initial.positions", positions),
                ("initial.velocities", velocities),
            ] {
                if rows.len() != self.particle_count {
                    return Err(config_err(
                        name,
                        format!("expected {} rows, got {}", self.particle_count, rows.len()),
                    ));
                }
                for (i, row) in rows.iter().enumerate() {
                    if row.len() != d {
                        return Err(config_err(
                            format!("{name}[{i}]"),
                            format!("expected {d} coordinates, got {}", row.len()),
                        ));
                    }
                    if row.iter().any(|c| !c.is_finite()) {
                        return Err(config_err(format!("{name}[{i}]"), "non-finite entry"));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn step_count(&self) -> usize {
        (self.horizon / self.time_step).round() as usize
    }

    /// The state at `t = 0`, sampled from `seed` unless given explicitly.
    pub fn initial_state(&self) -> Result<ParticleState> {
        match &self.initial {
            InitialData::Explicit {
                positions,
                velocities,
            } => ParticleState::new(0.0, positions, velocities),
            InitialData::Sampled => {
                let d = self.manifold.dimension();
                let n = self.particle_count;
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                let mut positions = Vec::with_capacity(n * d);
                for _ in 0..n {
                    for c in 0..d {
                        let x = if self.manifold.kind() == ManifoldKind::MobiusStrip && c == 1 {
                            rng.gen_range(-self.strip_half_width..self.strip_half_width)
                        } else {
                            rng.gen_range(0.0..1.0)
                        };
                        positions.push(x);
                    }
                }
                let velocities = (0..n * d).map(|_| rng.gen_range(-1.0..=1.0)).collect();
                ParticleState::from_flat(0.0, d, positions, velocities)
            }
        }
    }

    /// The file form of this configuration with every default written out.
    pub fn to_file(&self) -> ConfigFile {
        let (positions, velocities) = match &self.initial {
            InitialData::Explicit {
                positions,
                velocities,
            } => (Some(positions.clone()), Some(velocities.clone())),
            InitialData::Sampled => (None, None),
        };
        ConfigFile {
            manifold: ManifoldSection {
                kind: self.manifold.kind(),
                dimension: Some(self.manifold.dimension()),
            },
            kernel: KernelSection {
                family: self.kernel.family(),
                params: self.kernel.params(),
            },
            coupling: self.coupling,
            n_particles: Some(self.particle_count),
            dt: Some(self.time_step),
            horizon: self.horizon,
            truncation_eps: Some(self.truncation_eps),
            integrator: Some(self.integrator),
            seed: Some(self.seed),
            initial: InitialSection {
                positions,
                velocities,
                strip_half_width: Some(self.strip_half_width),
            },
            output: OutputSection {
                stride: Some(self.stride),
                particles: Some(self.write_particles),
            },
            thresholds: ThresholdSection {
                alignment: Some(self.thresholds.alignment),
                diameter: Some(self.thresholds.diameter),
                second_component: Some(self.thresholds.second_component),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifoldSection {
    pub kind: ManifoldKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dimension: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSection {
    pub family: KernelFamily,
    pub params: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub positions: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub velocities: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strip_half_width: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stride: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub particles: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alignment: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diameter: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub second_component: Option<f64>,
}

/// The on-disk configuration, before validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub manifold: ManifoldSection,
    pub kernel: KernelSection,
    pub coupling: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_particles: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    pub horizon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncation_eps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub integrator: Option<Integrator>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default)]
    pub initial: InitialSection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub thresholds: ThresholdSection,
}

impl ConfigFile {
    pub fn manifold_spec(&self) -> Result<ManifoldSpec> {
        let kind = self.manifold.kind;
        let dimension = match (kind, self.manifold.dimension) {
            (_, Some(d)) => d,
            (ManifoldKind::MobiusStrip | ManifoldKind::KleinBottle, None) => 2,
            (_, None) => {
                return Err(config_err(
                    "manifold.dimension",
                    format!("required for {kind}"),
                ))
            }
        };
        ManifoldSpec::new(kind, dimension)
            .map_err(|e| config_err("manifold.dimension", e.to_string()))
    }

    /// The kernel with its parameters checked, but without any summability test.
    pub fn kernel(&self) -> Result<Kernel> {
        Kernel::from_params(self.kernel.family, &self.kernel.params)
            .map_err(|e| config_err("kernel.params", e.to_string()))
    }

    pub fn into_sim_config(self) -> Result<SimConfig> {
        SimConfig::try_from(self)
    }
}

impl TryFrom<ConfigFile> for SimConfig {
    type Error = Error;

    fn try_from(file: ConfigFile) -> Result<SimConfig> {
        let manifold = file.manifold_spec()?;
        let kernel = file.kernel()?;
        let initial = match (file.initial.positions, file.initial.velocities) {
            (Some(positions), Some(velocities)) => InitialData::Explicit {
                positions,
                velocities,
            },
            (None, None) => InitialData::Sampled,
            _ => {
                return Err(config_err(
                    "initial",
                    "positions and velocities must be given together",
                ))
            }
        };
        let particle_count = match (&initial, file.n_particles) {
            (InitialData::Explicit { positions, .. }, None) => positions.len(),
            (_, Some(n)) => n,
            (InitialData::Sampled, None) => {
                return Err(config_err(
                    "n_particles",
                    "required when initial data is sampled",
                ))
            }
        };
        let thresholds = Thresholds {
            alignment: file.thresholds.alignment.unwrap_or(DEFAULT_THRESHOLD),
            diameter: file.thresholds.diameter.unwrap_or(DEFAULT_THRESHOLD),
            second_component: file
                .thresholds
                .second_component
                .unwrap_or(DEFAULT_THRESHOLD),
        };
        let config = SimConfig {
            manifold,
            kernel,
            coupling: file.coupling,
            particle_count,
            time_step: file.dt.unwrap_or(DEFAULT_DT),
            horizon: file.horizon,
            truncation_eps: file.truncation_eps.unwrap_or(DEFAULT_TRUNCATION_EPS),
            integrator: file.integrator.unwrap_or_default(),
            seed: file.seed.unwrap_or(0),
            initial,
            strip_half_width: file
                .initial
                .strip_half_width
                .unwrap_or(DEFAULT_STRIP_HALF_WIDTH),
            stride: file.output.stride.unwrap_or(DEFAULT_STRIDE),
            write_particles: file.output.particles.unwrap_or(false),
            thresholds,
        };
        config.validate()?;
        Ok(config)
    }
}

/// Reads a configuration file without validating it.
///
/// A run manifest is accepted too: its `config` member is used.
pub fn read_config_file(path: impl AsRef<Path>) -> Result<ConfigFile> {
    let text = std::fs::read_to_string(path)?;
    read_config_str(&text)
}

pub fn read_config_str(text: &str) -> Result<ConfigFile> {
    let mut value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| config_err("<document>", e.to_string()))?;
    if value.get("manifold").is_none() {
        if let Some(inner) = value.get_mut("config") {
            value = inner.take();
        }
    }
    serde_json::from_value(value).map_err(|e| config_err("<document>", e.to_string()))
}

/// Reads and validates a configuration file.
pub fn parse_config(path: impl AsRef<Path>) -> Result<SimConfig> {
    read_config_file(path)?.into_sim_config()
}

pub fn parse_config_str(text: &str) -> Result<SimConfig> {
    read_config_str(text)?.into_sim_config()
}

pub const PRESET_NAMES: [&str; 7] = [
    "euclid-cs",
    "torus-align",
    "torus-reduction",
    "mobius-align",
    "mobius-selfint",
    "klein-align",
    "klein-selfint",
];

/// JSON text of a shipped preset.
pub fn preset_json(name: &str) -> Option<&'static str> {
    let text = match name {
        "euclid-cs" => include_str!("presets/euclid-cs.json"),
        "torus-align" => include_str!("presets/torus-align.json"),
        "torus-reduction" => include_str!("presets/torus-reduction.json"),
        "mobius-align" => include_str!("presets/mobius-align.json"),
        "mobius-selfint" => include_str!("presets/mobius-selfint.json"),
        "klein-align" => include_str!("presets/klein-align.json"),
        "klein-selfint" => include_str!("presets/klein-selfint.json"),
        _ => return None,
    };
    Some(text)
}

/// A shipped preset, unvalidated.
pub fn preset(name: &str) -> Option<ConfigFile> {
    preset_json(name).map(|text| read_config_str(text).expect("presets are well-formed"))
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "manifold": {"kind": "flat_torus", "dimension": 2},
        "kernel": {"family": "exponential", "params": [1.0]},
        "coupling": 1.0,
        "n_particles": 4,
        "horizon": 1.0
    }"#;

    #[test]
    fn minimal_config_gets_defaults() {
        let c = parse_config_str(MINIMAL).unwrap();
        assert_eq!(c.time_step, DEFAULT_DT);
        assert_eq!(c.truncation_eps, DEFAULT_TRUNCATION_EPS);
        assert_eq!(c.integrator, Integrator::Rk4);
        assert_eq!(c.stride, DEFAULT_STRIDE);
        assert_eq!(c.initial, InitialData::Sampled);
        assert_eq!(c.step_count(), 100);
        assert_eq!(c.thresholds, Thresholds::default());
    }

    #[test]
    fn round_trip_through_file_form() {
        let c = parse_config_str(MINIMAL).unwrap();
        let text = serde_json::to_string(&c.to_file()).unwrap();
        assert_eq!(parse_config_str(&text).unwrap(), c);
    }

    #[test]
    fn non_summable_power_law_rejected_with_reason() {
        let text = MINIMAL.replace(
            r#""exponential", "params": [1.0]"#,
            r#""power_law", "params": [0.5]"#,
        );
        let err = parse_config_str(&text).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("kernel"), "{msg}");
        assert!(msg.contains("α > d/2"), "{msg}");
    }

    #[test]
    fn invalid_fields_are_named() {
        let cases = [
            (
                MINIMAL.replace(r#""coupling": 1.0"#, r#""coupling": 0.0"#),
                "coupling",
            ),
            (
                MINIMAL.replace(
                    r#""kind": "flat_torus", "dimension": 2"#,
                    r#""kind": "mobius_strip", "dimension": 3"#,
                ),
                "manifold.dimension",
            ),
            (
                MINIMAL.replace(r#""horizon": 1.0"#, r#""horizon": 1.005"#),
                "dt",
            ),
            (MINIMAL.replace(r#""n_particles": 4,"#, ""), "n_particles"),
        ];
        for (text, field) in cases {
            match parse_config_str(&text) {
                Err(Error::Config { field: f, .. }) => assert_eq!(f, field),
                other => panic!("expected error on {field}, got {other:?}"),
            }
        }
        assert!(parse_config_str("{not json").is_err());
        assert!(parse_config_str(
            &MINIMAL
                .replace("\"seed\"", "\"sed\"")
                .replace("\"horizon\"", "\"bogus\": 1, \"horizon\"")
        )
        .is_err());
    }

    #[test]
    fn explicit_initial_data_sets_particle_count() {
        let c = parse_config_str(
            r#"{
            "manifold": {"kind": "mobius_strip"},
            "kernel": {"family": "exponential", "params": [1.0]},
            "coupling": 1.0, "horizon": 0.0,
            "initial": {"positions": [[0.5, 0.0]], "velocities": [[0.0, 1.0]]}
        }"#,
        )
        .unwrap();
        assert_eq!(c.particle_count, 1);
        assert_eq!(c.manifold.dimension(), 2);
        let s = c.initial_state().unwrap();
        assert_eq!(s.velocity(0), &[0.0, 1.0]);
    }

    #[test]
    fn sampling_is_seeded_and_respects_domains() {
        let mut c = SimConfig::new(
            ManifoldSpec::mobius(),
            Kernel::exponential(1.0).unwrap(),
            1.0,
            50,
            1.0,
        );
        c.strip_half_width = 0.3;
        c.seed = 11;
        let a = c.initial_state().unwrap();
        assert_eq!(a, c.initial_state().unwrap());
        for i in 0..a.len() {
            let x = a.position(i);
            assert!((0.0..1.0).contains(&x[0]));
            assert!(x[1].abs() < 0.3);
            assert!(a.velocity(i).iter().all(|v| v.abs() <= 1.0));
        }
        c.seed = 12;
        assert_ne!(a, c.initial_state().unwrap());
    }

    #[test]
    fn presets_parse_and_validate() {
        for name in PRESET_NAMES {
            let file = preset(name).unwrap();
            file.into_sim_config()
                .unwrap_or_else(|e| panic!("{name}: {e}"));
        }
        assert!(preset("nope").is_none());
    }

    #[test]
    fn manifest_wrapper_is_unwrapped() {
        let wrapped = format!(r#"{{"version": "x", "config": {MINIMAL}}}"#);
        assert_eq!(
            parse_config_str(&wrapped).unwrap(),
            parse_config_str(MINIMAL).unwrap()
        );
    }
}
