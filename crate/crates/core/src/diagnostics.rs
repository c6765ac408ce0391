//! Per-step diagnostics and the end-of-run stationarity probe.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::config::SimConfig;
use crate::dynamics::{energy, InteractionWeights, ParticleState};
use crate::error::{invalid, Result};
use crate::kernel::Kernel;
use crate::manifold::ManifoldKind;

/// Scalars describing one recorded state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRecord {
    pub time: f64,
    pub energy: f64,
    /// `−(κ/2N) Σ_{i,k} residual(i, k)`, the exact rate of change of the energy.
    pub dissipation: f64,
    pub velocity_diameter: f64,
    /// `max_i |(ṽ_i)₂|`; zero in dimension one.
    pub max_abs_second_component: f64,
    pub momentum: Vec<f64>,
    pub max_alignment_residual: f64,
    /// Some particle left the band `|x₂| < L` (Möbius strip only).
    pub strip_bound_violated: bool,
    /// `max_i W¹(x̃_i, x̃_i)`, the odd-class weight a particle puts on itself.
    pub self_interaction_weight: f64,
}

/// `Σ_g φ(‖g(x̃_k) − x̃_i‖) ‖J^{f(g)} ṽ_k − ṽ_i‖²` over the truncated orbit.
pub fn alignment_residual(
    state: &ParticleState,
    config: &SimConfig,
    i: usize,
    k: usize,
) -> Result<f64> {
    check_indices(state, i, k)?;
    let weights = InteractionWeights::compute(state, config)?;
    Ok(weights.residual(state, i, k))
}

/// The residual split into its flip-0 and flip-1 parts.
///
/// Only defined where the deck group has both classes.
pub fn class_split_residuals(
    state: &ParticleState,
    config: &SimConfig,
    i: usize,
    k: usize,
) -> Result<(f64, f64)> {
    if !config.manifold.has_flips() {
        return Err(invalid(format!(
            "class splitting needs a deck group with flips, {} has none",
            config.manifold.kind()
        )));
    }
    check_indices(state, i, k)?;
    let weights = InteractionWeights::compute(state, config)?;
    Ok(weights.split_residual(state, i, k))
}

fn check_indices(state: &ParticleState, i: usize, k: usize) -> Result<()> {
    let n = state.len();
    if i >= n || k >= n {
        return Err(invalid(format!(
            "indices ({i}, {k}) out of range for {n} particles"
        )));
    }
    Ok(())
}

pub fn record(state: &ParticleState, config: &SimConfig) -> Result<DiagnosticsRecord> {
    let weights = InteractionWeights::compute(state, config)?;
    Ok(record_with(state, config, &weights))
}

/// Fills a record from precomputed weights, so that the dissipation uses the
/// same truncated orbits as the right-hand side.
pub(crate) fn record_with(
    state: &ParticleState,
    config: &SimConfig,
    weights: &InteractionWeights,
) -> DiagnosticsRecord {
    let n = state.len();
    let d = state.dim();
    let mut residual_sum = 0.0;
    let mut max_residual: f64 = 0.0;
    let mut diameter_sq: f64 = 0.0;
    for i in 0..n {
        for k in 0..n {
            let r = weights.residual(state, i, k);
            residual_sum += r;
            max_residual = max_residual.max(r);
            if k > i {
                let gap: f64 = state
                    .velocity(i)
                    .iter()
                    .zip(state.velocity(k))
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                diameter_sq = diameter_sq.max(gap);
            }
        }
    }
    let mut momentum = vec![0.0; d];
    for i in 0..n {
        for (m, v) in momentum.iter_mut().zip(state.velocity(i)) {
            *m += v;
        }
    }
    let max_abs_second_component = if d >= 2 {
        (0..n)
            .map(|i| state.velocity(i)[1].abs())
            .fold(0.0, f64::max)
    } else {
        0.0
    };
    let strip_bound_violated = config.manifold.kind() == ManifoldKind::MobiusStrip
        && (0..n).any(|i| state.position(i)[1].abs() >= config.strip_half_width);
    let self_interaction_weight = (0..n).map(|i| weights.pair(i, i)[1]).fold(0.0, f64::max);
    DiagnosticsRecord {
        time: state.time,
        energy: energy(state),
        dissipation: -config.coupling / (2.0 * n as f64) * residual_sum,
        velocity_diameter: diameter_sq.sqrt(),
        max_abs_second_component,
        momentum,
        max_alignment_residual: max_residual,
        strip_bound_violated,
        self_interaction_weight,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Claim {
    /// `max_{i,k}` alignment residual tends to zero.
    AlignmentResidual,
    /// `max_{i,k} ‖ṽ_i − ṽ_k‖` tends to zero.
    VelocityDiameter,
    /// `max_i |(ṽ_i)₂|` tends to zero (Möbius strip and Klein bottle).
    SecondComponent,
}

impl fmt::Display for Claim {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Claim::AlignmentResidual => "alignment_residual",
            Claim::VelocityDiameter => "velocity_diameter",
            Claim::SecondComponent => "second_component",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClaimStatus {
    Met,
    NotMet,
    /// The kernel does not satisfy the hypothesis behind the claim.
    NotApplicable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClaimReport {
    pub claim: Claim,
    pub final_value: f64,
    /// Least-squares slope of `ln(metric)` against time over the second half
    /// of the run; `None` with fewer than two positive samples there.
    pub decay_slope: Option<f64>,
    pub threshold: f64,
    pub status: ClaimStatus,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SelfInteraction {
    /// The deck group has no flips, so a particle never acts on itself.
    Impossible,
    /// Flips exist but every recorded odd-class self weight was zero.
    NoEffect,
    Present {
        max_weight: f64,
    },
}

impl fmt::Display for SelfInteraction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SelfInteraction::Impossible => {
                f.write_str("no self-interaction (no orientation-reversing deck elements)")
            }
            SelfInteraction::NoEffect => f.write_str("no self-interaction effect"),
            SelfInteraction::Present { max_weight } => {
                write!(
                    f,
                    "self-interaction present (max odd-class self weight {max_weight:.6e})"
                )
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationarityReport {
    /// Uniform lower bound on the pair weights that the convergence argument
    /// relies on, when the manifold provides one.
    pub hypothesis_weight: Option<f64>,
    pub claims: Vec<ClaimReport>,
    pub self_interaction: SelfInteraction,
}

impl StationarityReport {
    /// No applicable claim failed.
    pub fn all_met(&self) -> bool {
        self.claims.iter().all(|c| c.status != ClaimStatus::NotMet)
    }
}

/// Pair weights are bounded below by `φ` at the largest possible minimal
/// image distance: `√d/2` on the torus, `√5/2` on the Klein bottle and
/// `√(1 + 4L²)` on a Möbius band of half-width `L`.
///
/// On Euclidean space the classical criterion `∫ φ = ∞` is used instead, which
/// among the supported kernels only the power law with `α ≤ 1/2` meets; the
/// weight is then reported as `None`.
pub fn hypothesis_weight(config: &SimConfig) -> (bool, Option<f64>) {
    let manifold = &config.manifold;
    let reach = match manifold.kind() {
        ManifoldKind::Euclidean => {
            let heavy = matches!(config.kernel, Kernel::PowerLaw { exponent } if exponent <= 0.5);
            return (heavy, None);
        }
        ManifoldKind::FlatTorus => (manifold.dimension() as f64).sqrt() / 2.0,
        ManifoldKind::KleinBottle => 5f64.sqrt() / 2.0,
        ManifoldKind::MobiusStrip => {
            let l = config.strip_half_width;
            (1.0 + 4.0 * l * l).sqrt()
        }
    };
    let w = config.kernel.value(reach);
    (w > 0.0, Some(w))
}

fn decay_slope(
    records: &[DiagnosticsRecord],
    metric: impl Fn(&DiagnosticsRecord) -> f64,
) -> Option<f64> {
    let start = records.len() / 2;
    let samples: Vec<(f64, f64)> = records[start..]
        .iter()
        .map(|r| (r.time, metric(r)))
        .filter(|(_, m)| *m > 0.0 && m.is_finite())
        .map(|(t, m)| (t, m.ln()))
        .collect();
    if samples.len() < 2 {
        return None;
    }
    let count = samples.len() as f64;
    let mean_t = samples.iter().map(|s| s.0).sum::<f64>() / count;
    let mean_y = samples.iter().map(|s| s.1).sum::<f64>() / count;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (t, y) in &samples {
        sxy += (t - mean_t) * (y - mean_y);
        sxx += (t - mean_t) * (t - mean_t);
    }
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Checks the limit claims that apply to `config` against the recorded run.
pub fn stationarity_probe(
    records: &[DiagnosticsRecord],
    config: &SimConfig,
) -> Result<StationarityReport> {
    let last = records
        .last()
        .ok_or_else(|| invalid("stationarity probe needs at least one record"))?;
    let (applicable, weight) = hypothesis_weight(config);
    let mut claims = vec![
        (Claim::AlignmentResidual, config.thresholds.alignment),
        (Claim::VelocityDiameter, config.thresholds.diameter),
    ];
    if config.manifold.has_flips() {
        claims.push((Claim::SecondComponent, config.thresholds.second_component));
    }
    let claims = claims
        .into_iter()
        .map(|(claim, threshold)| {
            let metric = move |r: &DiagnosticsRecord| match claim {
                Claim::AlignmentResidual => r.max_alignment_residual,
                Claim::VelocityDiameter => r.velocity_diameter,
                Claim::SecondComponent => r.max_abs_second_component,
            };
            let final_value = metric(last);
            let status = if !applicable {
                ClaimStatus::NotApplicable
            } else if final_value < threshold {
                ClaimStatus::Met
            } else {
                ClaimStatus::NotMet
            };
            ClaimReport {
                claim,
                final_value,
                decay_slope: decay_slope(records, metric),
                threshold,
                status,
            }
        })
        .collect();
    let self_interaction = if !config.manifold.has_flips() {
        SelfInteraction::Impossible
    } else {
        let max_weight = records
            .iter()
            .map(|r| r.self_interaction_weight)
            .fold(0.0, f64::max);
        if max_weight > 0.0 {
            SelfInteraction::Present { max_weight }
        } else {
            SelfInteraction::NoEffect
        }
    };
    Ok(StationarityReport {
        hypothesis_weight: weight,
        claims,
        self_interaction,
    })
}
