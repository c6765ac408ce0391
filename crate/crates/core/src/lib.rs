//! Velocity alignment with interactions along every geodesic between
//! particles, simulated on flat quotient manifolds through their universal
//! cover.
//!
//! The library is organised bottom-up:
//!
//! * [`manifold`]: deck groups, orbit enumeration, shortest images, projection.
//! * [`kernel`]: communication functions and their summability test.
//! * [`lattice`]: certified orbit sums `Φ(x, y)` and tail bounds.
//! * [`dynamics`]: right-hand side, Euler/RK4 stepping, trajectory integration.
//! * [`diagnostics`]: energy, dissipation, alignment residuals, decay probes.
//! * [`config`], [`runner`], [`oracle`]: configuration files, presets, the
//!   file-writing run driver and the brute-force orbit-sum oracle.

pub mod config;
pub mod diagnostics;
pub mod dynamics;
pub mod error;
pub mod kernel;
pub mod lattice;
pub mod manifold;
pub mod oracle;
pub mod runner;

pub use config::{parse_config, parse_config_str, preset, ConfigFile, SimConfig, PRESET_NAMES};
pub use diagnostics::{DiagnosticsRecord, StationarityReport};
pub use dynamics::{energy, ParticleState, Simulator};
pub use error::{Error, Result};
pub use kernel::{Kernel, KernelFamily};
pub use lattice::{phi_sum, PhiValue};
pub use manifold::{DeckElement, ManifoldKind, ManifoldSpec};
