//! Particle states, the interaction right-hand side on the cover, and
//! fixed-step time integration.
//!
//! Particles live on the universal cover `ℝ^d`. Particle `k` acts on
//! particle `i` through every orbit image `g(x̃_k)`, with weight
//! `φ(‖g(x̃_k) − x̃_i‖)` and the transported velocity `J^f ṽ_k`:
//!
//! ```text
//! dṽ_i/dt = (κ/N) Σ_k Σ_g φ(‖g(x̃_k) − x̃_i‖) (J^{f(g)} ṽ_k − ṽ_i)
//! ```
//!
//! Since `J^f` only depends on the flip class, each pair reduces to two
//! weights `W⁰_ik` and `W¹_ik` (see [`InteractionWeights`]). The `k = i`
//! term is kept: on the Möbius strip and the Klein bottle a particle feels
//! its own odd-class images.

use rayon::prelude::*;
use rayon::ThreadPool;
use serde::ser::SerializeStruct;
use serde::{Serialize, Serializer};

use crate::config::{Integrator, SimConfig};
use crate::diagnostics::{self, DiagnosticsRecord};
use crate::error::{invalid, Error, Result};
use crate::kernel::{require_summable, Kernel};
use crate::lattice::{class_weights, transverse_offset, truncation_radius};
use crate::manifold::{ManifoldKind, ManifoldSpec, MAX_LIFT_COORDINATE};

/// Lifted positions and velocities of `N` particles at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleState {
    pub time: f64,
    dim: usize,
    positions: Vec<f64>,
    velocities: Vec<f64>,
}

impl ParticleState {
    pub fn new(time: f64, positions: &[Vec<f64>], velocities: &[Vec<f64>]) -> Result<Self> {
        let dim = positions.first().map_or(0, Vec::len);
        if positions.len() != velocities.len() {
            return Err(invalid(format!(
                "{} positions but {} velocities",
                positions.len(),
                velocities.len()
            )));
        }
        for row in positions.iter().chain(velocities) {
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: row.len(),
                });
            }
        }
        Self::from_flat(time, dim, positions.concat(), velocities.concat())
    }

    /// Builds a state from row-major coordinate buffers.
    pub fn from_flat(
        time: f64,
        dim: usize,
        positions: Vec<f64>,
        velocities: Vec<f64>,
    ) -> Result<Self> {
        if dim == 0 || positions.is_empty() {
            return Err(invalid("need at least one particle in dimension ≥ 1"));
        }
        if !positions.len().is_multiple_of(dim) || velocities.len() != positions.len() {
            return Err(invalid(format!(
                "buffers of length {} and {} do not hold whole {dim}-vectors",
                positions.len(),
                velocities.len()
            )));
        }
        let state = Self {
            time,
            dim,
            positions,
            velocities,
        };
        if !state.is_finite() {
            return Err(invalid("state entries must be finite"));
        }
        Ok(state)
    }

    pub fn len(&self) -> usize {
        self.positions.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn position(&self, i: usize) -> &[f64] {
        &self.positions[i * self.dim..(i + 1) * self.dim]
    }

    pub fn velocity(&self, i: usize) -> &[f64] {
        &self.velocities[i * self.dim..(i + 1) * self.dim]
    }

    pub fn positions_flat(&self) -> &[f64] {
        &self.positions
    }

    pub fn velocities_flat(&self) -> &[f64] {
        &self.velocities
    }

    pub fn positions(&self) -> Vec<Vec<f64>> {
        self.positions
            .chunks(self.dim)
            .map(<[f64]>::to_vec)
            .collect()
    }

    pub fn velocities(&self) -> Vec<Vec<f64>> {
        self.velocities
            .chunks(self.dim)
            .map(<[f64]>::to_vec)
            .collect()
    }

    /// Replaces particle `i`'s position and velocity.
    pub fn set_particle(&mut self, i: usize, x: &[f64], v: &[f64]) -> Result<()> {
        for row in [x, v] {
            if row.len() != self.dim {
                return Err(Error::DimensionMismatch {
                    expected: self.dim,
                    actual: row.len(),
                });
            }
        }
        let range = i * self.dim..(i + 1) * self.dim;
        self.positions[range.clone()].copy_from_slice(x);
        self.velocities[range].copy_from_slice(v);
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.time.is_finite()
            && self
                .positions
                .iter()
                .chain(&self.velocities)
                .all(|c| c.is_finite())
    }

    fn check_against(&self, config: &SimConfig) -> Result<()> {
        if self.dim != config.manifold.dimension() {
            return Err(Error::DimensionMismatch {
                expected: config.manifold.dimension(),
                actual: self.dim,
            });
        }
        if self.len() != config.particle_count {
            return Err(invalid(format!(
                "state has {} particles, config expects {}",
                self.len(),
                config.particle_count
            )));
        }
        if !self.in_range() {
            return Err(Error::NonFinite { time: self.time });
        }
        Ok(())
    }

    /// Finite, with every position inside the range where lattice offsets
    /// are still exact.
    fn in_range(&self) -> bool {
        self.is_finite()
            && self
                .positions
                .iter()
                .all(|c| c.abs() <= MAX_LIFT_COORDINATE)
    }

    /// `self + h·rate`, at time `time`.
    fn advanced(&self, rate: &Derivative, h: f64, time: f64) -> Self {
        let shift = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, r)| x + h * r).collect();
        Self {
            time,
            dim: self.dim,
            positions: shift(&self.positions, &rate.position_rates),
            velocities: shift(&self.velocities, &rate.velocity_rates),
        }
    }
}

impl Serialize for ParticleState {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut s = serializer.serialize_struct("ParticleState", 3)?;
        s.serialize_field("t", &self.time)?;
        s.serialize_field("positions", &self.positions())?;
        s.serialize_field("velocities", &self.velocities())?;
        s.end()
    }
}

/// Time derivative of a [`ParticleState`], in the same row-major layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Derivative {
    dim: usize,
    pub position_rates: Vec<f64>,
    pub velocity_rates: Vec<f64>,
}

impl Derivative {
    pub fn velocity_rate(&self, i: usize) -> &[f64] {
        &self.velocity_rates[i * self.dim..(i + 1) * self.dim]
    }

    pub fn position_rate(&self, i: usize) -> &[f64] {
        &self.position_rates[i * self.dim..(i + 1) * self.dim]
    }
}

/// `½ Σ_i ‖ṽ_i‖²`.
pub fn energy(state: &ParticleState) -> f64 {
    0.5 * state.velocities.iter().map(|v| v * v).sum::<f64>()
}

/// Cutoff rule shared by every pair in one evaluation.
///
/// The weight tolerance is `ε / (2κ max(√(2ℰ), 1))`: a pair's velocity
/// difference is at most `2√(2ℰ)`, so each particle's acceleration is off
/// by at most `ε` once the `N` pair errors are averaged.
struct Truncation<'a> {
    manifold: &'a ManifoldSpec,
    kernel: &'a Kernel,
    weight_tolerance: f64,
    /// Cutoff on full-rank lattices; the along-strip cutoff on the Möbius strip.
    radius: f64,
}

impl<'a> Truncation<'a> {
    fn new(state: &ParticleState, config: &'a SimConfig) -> Result<Self> {
        let speed_bound = (2.0 * energy(state)).sqrt().max(1.0);
        if !speed_bound.is_finite() {
            return Err(Error::NonFinite { time: state.time });
        }
        let weight_tolerance = config.truncation_eps / (2.0 * config.coupling * speed_bound);
        let radius = match config.manifold.kind() {
            ManifoldKind::Euclidean => f64::INFINITY,
            _ => truncation_radius(&config.manifold, &config.kernel, 0.0, weight_tolerance)?,
        };
        Ok(Self {
            manifold: &config.manifold,
            kernel: &config.kernel,
            weight_tolerance,
            radius,
        })
    }

    fn pair(&self, x: &[f64], y: &[f64]) -> [f64; 2] {
        let radius = if self.manifold.kind() == ManifoldKind::MobiusStrip {
            self.radius.hypot(transverse_offset(self.manifold, x, y))
        } else {
            self.radius
        };
        class_weights(self.manifold, self.kernel, x, y, radius)
    }
}

/// Truncated orbit weights of every ordered pair.
///
/// `weights(i, k) = [W⁰, W¹]` where `W^f` sums `φ(‖g(x̃_k) − x̃_i‖)` over the
/// deck elements `g` of flip class `f` inside the cutoff. The matrix is
/// exactly symmetric: only `i ≤ k` is computed.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionWeights {
    n: usize,
    weights: Vec<[f64; 2]>,
    weight_tolerance: f64,
}

impl InteractionWeights {
    pub fn compute(state: &ParticleState, config: &SimConfig) -> Result<Self> {
        Self::compute_in(state, config, None)
    }

    pub(crate) fn compute_in(
        state: &ParticleState,
        config: &SimConfig,
        pool: Option<&ThreadPool>,
    ) -> Result<Self> {
        state.check_against(config)?;
        require_summable(&config.kernel, &config.manifold)?;
        let truncation = Truncation::new(state, config)?;
        let n = state.len();
        let row = |i: usize| -> Vec<[f64; 2]> {
            (i..n)
                .map(|k| truncation.pair(state.position(i), state.position(k)))
                .collect()
        };
        let upper: Vec<Vec<[f64; 2]>> = match pool {
            Some(pool) => pool.install(|| (0..n).into_par_iter().map(row).collect()),
            None => (0..n).map(row).collect(),
        };
        let mut weights = vec![[0.0; 2]; n * n];
        for (i, row) in upper.into_iter().enumerate() {
            for (offset, w) in row.into_iter().enumerate() {
                let k = i + offset;
                weights[i * n + k] = w;
                weights[k * n + i] = w;
            }
        }
        Ok(Self {
            n,
            weights,
            weight_tolerance: truncation.weight_tolerance,
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn pair(&self, i: usize, k: usize) -> [f64; 2] {
        self.weights[i * self.n + k]
    }

    /// Certified bound on the discarded weight of each pair.
    pub fn weight_tolerance(&self) -> f64 {
        self.weight_tolerance
    }

    /// `(W⁰ ‖ṽ_k − ṽ_i‖², W¹ ‖Jṽ_k − ṽ_i‖²)`.
    pub fn split_residual(&self, state: &ParticleState, i: usize, k: usize) -> (f64, f64) {
        let [w0, w1] = self.pair(i, k);
        let (vi, vk) = (state.velocity(i), state.velocity(k));
        let mut even = 0.0;
        let mut odd = 0.0;
        for c in 0..vi.len() {
            let straight = vk[c] - vi[c];
            let flipped = if c == 1 { -vk[c] } else { vk[c] } - vi[c];
            even += straight * straight;
            odd += flipped * flipped;
        }
        (w0 * even, w1 * odd)
    }

    /// `W⁰ ‖ṽ_k − ṽ_i‖² + W¹ ‖Jṽ_k − ṽ_i‖²`.
    pub fn residual(&self, state: &ParticleState, i: usize, k: usize) -> f64 {
        let (even, odd) = self.split_residual(state, i, k);
        even + odd
    }
}

fn accelerations(
    state: &ParticleState,
    config: &SimConfig,
    weights: &InteractionWeights,
    pool: Option<&ThreadPool>,
) -> Vec<f64> {
    let n = state.len();
    let d = state.dim;
    let scale = config.coupling / n as f64;
    let row = |i: usize| -> Vec<f64> {
        let vi = state.velocity(i);
        let mut acc = vec![0.0; d];
        for k in 0..n {
            let [w0, w1] = weights.pair(i, k);
            let vk = state.velocity(k);
            for c in 0..d {
                let flipped = if c == 1 { -vk[c] } else { vk[c] };
                acc[c] += w0 * (vk[c] - vi[c]) + w1 * (flipped - vi[c]);
            }
        }
        acc.iter_mut().for_each(|a| *a *= scale);
        acc
    };
    let rows: Vec<Vec<f64>> = match pool {
        Some(pool) => pool.install(|| (0..n).into_par_iter().map(row).collect()),
        None => (0..n).map(row).collect(),
    };
    rows.concat()
}

fn rhs_in(
    state: &ParticleState,
    config: &SimConfig,
    pool: Option<&ThreadPool>,
) -> Result<Derivative> {
    let weights = InteractionWeights::compute_in(state, config, pool)?;
    Ok(rhs_with(state, config, &weights, pool))
}

fn rhs_with(
    state: &ParticleState,
    config: &SimConfig,
    weights: &InteractionWeights,
    pool: Option<&ThreadPool>,
) -> Derivative {
    Derivative {
        dim: state.dim,
        position_rates: state.velocities.clone(),
        velocity_rates: accelerations(state, config, weights, pool),
    }
}

/// Right-hand side at `state`, summed single-lane.
pub fn rhs(state: &ParticleState, config: &SimConfig) -> Result<Derivative> {
    rhs_in(state, config, None)
}

fn step_in(
    state: &ParticleState,
    config: &SimConfig,
    pool: Option<&ThreadPool>,
    t_next: f64,
) -> Result<ParticleState> {
    let dt = config.time_step;
    let next = match config.integrator {
        Integrator::Euler => {
            let k1 = rhs_in(state, config, pool)?;
            state.advanced(&k1, dt, t_next)
        }
        Integrator::Rk4 => {
            let t = state.time;
            let k1 = rhs_in(state, config, pool)?;
            let k2 = rhs_in(&state.advanced(&k1, 0.5 * dt, t + 0.5 * dt), config, pool)?;
            let k3 = rhs_in(&state.advanced(&k2, 0.5 * dt, t + 0.5 * dt), config, pool)?;
            let k4 = rhs_in(&state.advanced(&k3, dt, t + dt), config, pool)?;
            let combine = |base: &[f64], r: [&[f64]; 4]| -> Vec<f64> {
                (0..base.len())
                    .map(|j| {
                        base[j] + dt / 6.0 * (r[0][j] + 2.0 * r[1][j] + 2.0 * r[2][j] + r[3][j])
                    })
                    .collect()
            };
            ParticleState {
                time: t_next,
                dim: state.dim,
                positions: combine(
                    &state.positions,
                    [
                        &k1.position_rates,
                        &k2.position_rates,
                        &k3.position_rates,
                        &k4.position_rates,
                    ],
                ),
                velocities: combine(
                    &state.velocities,
                    [
                        &k1.velocity_rates,
                        &k2.velocity_rates,
                        &k3.velocity_rates,
                        &k4.velocity_rates,
                    ],
                ),
            }
        }
    };
    if !next.in_range() {
        return Err(Error::NonFinite { time: t_next });
    }
    Ok(next)
}

/// One step of the configured scheme; the new time is `state.time + dt`.
pub fn step(state: &ParticleState, config: &SimConfig) -> Result<ParticleState> {
    step_in(state, config, None, state.time + config.time_step)
}

/// `d/dt ln‖ṽ‖` for a single particle: `−(κ/2) W¹(x̃, x̃) ‖Ju − u‖²` with
/// `u = ṽ/‖ṽ‖`. Zero on the torus and on Euclidean space.
pub fn self_interaction_log_speed_rate(state: &ParticleState, config: &SimConfig) -> Result<f64> {
    if state.len() != 1 {
        return Err(invalid(format!(
            "self-interaction rate needs a single particle, got {}",
            state.len()
        )));
    }
    let speed_sq: f64 = state.velocity(0).iter().map(|v| v * v).sum();
    if speed_sq == 0.0 {
        return Err(invalid(
            "self-interaction rate is undefined at zero velocity",
        ));
    }
    let weights = InteractionWeights::compute(state, config)?;
    let (_, odd) = weights.split_residual(state, 0, 0);
    Ok(-0.5 * config.coupling * odd / speed_sq)
}

/// Receives every recorded state during [`integrate`].
pub trait Observer {
    fn observe(&mut self, state: &ParticleState, record: &DiagnosticsRecord) -> Result<()>;
}

impl<F> Observer for F
where
    F: FnMut(&ParticleState, &DiagnosticsRecord) -> Result<()>,
{
    fn observe(&mut self, state: &ParticleState, record: &DiagnosticsRecord) -> Result<()> {
        self(state, record)
    }
}

/// Recorded states and their diagnostics.
#[derive(Debug, Clone, Default)]
pub struct Trajectory {
    pub states: Vec<ParticleState>,
    pub records: Vec<DiagnosticsRecord>,
}

impl Trajectory {
    pub fn final_state(&self) -> Option<&ParticleState> {
        self.states.last()
    }

    pub fn final_record(&self) -> Option<&DiagnosticsRecord> {
        self.records.last()
    }
}

/// A validated configuration plus an optional worker pool for the pair loops.
///
/// Results do not depend on the number of lanes: each row of the weight and
/// acceleration arrays is summed by one worker in a fixed order.
pub struct Simulator {
    config: SimConfig,
    pool: Option<ThreadPool>,
}

impl Simulator {
    pub fn new(config: SimConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { config, pool: None })
    }

    /// Uses `lanes` worker threads; `1` means no pool.
    pub fn with_lanes(mut self, lanes: usize) -> Result<Self> {
        self.pool = match lanes {
            0 => return Err(invalid("lanes must be at least 1")),
            1 => None,
            n => Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build()
                    .map_err(|e| invalid(format!("cannot start worker pool: {e}")))?,
            ),
        };
        Ok(self)
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn initial_state(&self) -> Result<ParticleState> {
        self.config.initial_state()
    }

    pub fn weights(&self, state: &ParticleState) -> Result<InteractionWeights> {
        InteractionWeights::compute_in(state, &self.config, self.pool.as_ref())
    }

    pub fn rhs(&self, state: &ParticleState) -> Result<Derivative> {
        rhs_in(state, &self.config, self.pool.as_ref())
    }

    pub fn step(&self, state: &ParticleState) -> Result<ParticleState> {
        step_in(
            state,
            &self.config,
            self.pool.as_ref(),
            state.time + self.config.time_step,
        )
    }

    pub fn record(&self, state: &ParticleState) -> Result<DiagnosticsRecord> {
        let weights = self.weights(state)?;
        Ok(diagnostics::record_with(state, &self.config, &weights))
    }

    /// Integrates from the initial state to the horizon.
    ///
    /// Step 0, every `stride`-th step and the last step are recorded and
    /// passed to the observers; states are kept only when `keep_states`.
    pub fn run(
        &self,
        observers: &mut [&mut dyn Observer],
        keep_states: bool,
    ) -> Result<Trajectory> {
        let mut trajectory = Trajectory::default();
        let steps = self.config.step_count();
        let mut state = self.initial_state()?;
        let mut emit = |state: &ParticleState, trajectory: &mut Trajectory| -> Result<()> {
            let record = self.record(state)?;
            for observer in observers.iter_mut() {
                observer.observe(state, &record)?;
            }
            if keep_states {
                trajectory.states.push(state.clone());
            }
            trajectory.records.push(record);
            Ok(())
        };
        emit(&state, &mut trajectory)?;
        for n in 1..=steps {
            // n·dt rather than accumulated sums, so recorded times are exact multiples
            state = step_in(
                &state,
                &self.config,
                self.pool.as_ref(),
                n as f64 * self.config.time_step,
            )?;
            if n % self.config.stride == 0 || n == steps {
                emit(&state, &mut trajectory)?;
            }
        }
        Ok(trajectory)
    }
}

/// Single-lane integration of `config`, keeping every recorded state.
pub fn integrate(config: &SimConfig, observers: &mut [&mut dyn Observer]) -> Result<Trajectory> {
    Simulator::new(config.clone())?.run(observers, true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn mobius_single() -> (SimConfig, ParticleState) {
        let config = SimConfig::new(
            ManifoldSpec::mobius(),
            Kernel::exponential(1.0).unwrap(),
            1.0,
            1,
            1.0,
        );
        let state = ParticleState::new(0.0, &[vec![0.0, 0.0]], &[vec![0.0, 1.0]]).unwrap();
        (config, state)
    }

    #[test]
    fn mobius_self_interaction_acceleration() {
        let (config, state) = mobius_single();
        let rate = rhs(&state, &config).unwrap();
        let odd_sum = 2.0 * (-1f64).exp() / (1.0 - (-2f64).exp());
        assert_relative_eq!(rate.velocity_rate(0)[0], 0.0);
        assert_relative_eq!(rate.velocity_rate(0)[1], -2.0 * odd_sum, epsilon = 1e-9);
        let log_rate = self_interaction_log_speed_rate(&state, &config).unwrap();
        assert_relative_eq!(log_rate, -2.0 * odd_sum, epsilon = 1e-9);
    }

    #[test]
    fn torus_single_particle_feels_nothing() {
        let config = SimConfig::new(
            ManifoldSpec::torus(2).unwrap(),
            Kernel::exponential(1.0).unwrap(),
            1.0,
            1,
            1.0,
        );
        let state = ParticleState::new(0.0, &[vec![0.3, 0.1]], &[vec![0.4, -2.0]]).unwrap();
        let rate = rhs(&state, &config).unwrap();
        assert_eq!(rate.velocity_rate(0), &[0.0, 0.0]);
        assert_eq!(
            self_interaction_log_speed_rate(&state, &config).unwrap(),
            0.0
        );
    }

    #[test]
    fn zero_velocity_rate_rejected() {
        let (config, _) = mobius_single();
        let still = ParticleState::new(0.0, &[vec![0.0, 0.0]], &[vec![0.0, 0.0]]).unwrap();
        assert!(self_interaction_log_speed_rate(&still, &config).is_err());
        assert_eq!(rhs(&still, &config).unwrap().velocity_rate(0), &[0.0, 0.0]);
    }

    #[test]
    fn mismatched_state_rejected() {
        let (config, _) = mobius_single();
        let two = ParticleState::new(
            0.0,
            &[vec![0.0, 0.0], vec![0.5, 0.0]],
            &[vec![0.0, 1.0], vec![0.0, 1.0]],
        )
        .unwrap();
        assert!(rhs(&two, &config).is_err());
        let flat = ParticleState::new(0.0, &[vec![0.0]], &[vec![1.0]]).unwrap();
        assert!(matches!(
            rhs(&flat, &config),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn energy_examples() {
        let s = ParticleState::new(
            0.0,
            &[vec![0.0, 0.0], vec![0.0, 0.0]],
            &[vec![1.0, 0.0], vec![0.0, 1.0]],
        )
        .unwrap();
        assert_eq!(energy(&s), 1.0);
        let (_, single) = mobius_single();
        assert_eq!(energy(&single), 0.5);
    }

    #[test]
    fn state_constructors_validate() {
        assert!(ParticleState::new(0.0, &[], &[]).is_err());
        assert!(ParticleState::new(0.0, &[vec![0.0]], &[vec![0.0, 1.0]]).is_err());
        assert!(ParticleState::new(0.0, &[vec![f64::NAN]], &[vec![0.0]]).is_err());
        assert!(ParticleState::from_flat(0.0, 2, vec![0.0; 3], vec![0.0; 3]).is_err());
    }
}
