//! Certified evaluation of orbit sums `Φ(x, y) = Σ_g φ(‖g(y) − x‖)`.
//!
//! The sum runs over the whole deck orbit of `y`. It is truncated to the
//! images inside a ball of radius `ρ` around `x`, and the discarded part is
//! bounded by comparing the lattice sum with an integral: each lattice point
//! `z` owns a cell `z + C` (volume `V`, half-diagonal `h`), cells are
//! disjoint, and `φ(‖z‖) ≤ φ(‖w‖ − h)` for every `w` in the cell. Hence
//!
//! ```text
//! Σ_{‖z‖ > ρ} φ(‖z‖) ≤ (|S^{k-1}| / V) ∫_{ρ-h}^∞ s^{k-1} φ(max(s - h, 0)) ds
//! ```
//!
//! summed over the flip classes of the deck group. On the Möbius strip the
//! lattice is one-dimensional and the orbit sits at a fixed transverse offset
//! `b` from the source, so only images with `|z_1| > √(ρ² − b²)` are dropped.

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::kernel::{require_summable, unit_sphere_measure, Kernel};
use crate::manifold::{check_finite, visit_images, ManifoldKind, ManifoldSpec};

/// A truncated lattice sum and a certified bound on what was left out.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhiValue {
    pub value: f64,
    pub error_bound: f64,
    /// Distance cutoff that was used.
    pub radius: f64,
}

/// Lattice cell geometry of one flip class.
struct CellGeometry {
    classes: f64,
    rank: usize,
    volume: f64,
    half_diagonal: f64,
}

fn cell_geometry(manifold: &ManifoldSpec) -> Option<CellGeometry> {
    let geometry = match manifold.kind() {
        ManifoldKind::Euclidean => return None,
        ManifoldKind::FlatTorus => CellGeometry {
            classes: 1.0,
            rank: manifold.dimension(),
            volume: 1.0,
            half_diagonal: (manifold.dimension() as f64).sqrt() / 2.0,
        },
        // each class is a coset of 2ℤ × {0}
        ManifoldKind::MobiusStrip => CellGeometry {
            classes: 2.0,
            rank: 1,
            volume: 2.0,
            half_diagonal: 1.0,
        },
        // each class is a coset of 2ℤ × ℤ
        ManifoldKind::KleinBottle => CellGeometry {
            classes: 2.0,
            rank: 2,
            volume: 2.0,
            half_diagonal: 5f64.sqrt() / 2.0,
        },
    };
    Some(geometry)
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Upper bound on the sum of `φ` over all orbit images farther than `radius`
/// from the source.
///
/// `transverse_offset` bounds the distance of the orbit from the source in
/// the direction orthogonal to the deck translations; it only matters on the
/// Möbius strip, where `|x₂| + |y₂|` is a valid choice. On full-rank lattices
/// the bound is uniform in the points and the argument is ignored.
///
/// The result is non-increasing in `radius` and tends to zero.
pub fn tail_bound(
    manifold: &ManifoldSpec,
    kernel: &Kernel,
    transverse_offset: f64,
    radius: f64,
) -> Result<f64> {
    if radius.is_nan() || radius < 0.0 || transverse_offset.is_nan() || transverse_offset < 0.0 {
        return Err(invalid("radius and transverse offset must be non-negative"));
    }
    let Some(cell) = cell_geometry(manifold) else {
        return Ok(0.0);
    };
    if kernel.support_radius().is_some_and(|a| radius >= a) {
        return Ok(0.0);
    }
    require_summable(kernel, manifold)?;

    let effective = if manifold.kind() == ManifoldKind::MobiusStrip {
        (radius * radius - transverse_offset * transverse_offset)
            .max(0.0)
            .sqrt()
    } else {
        radius
    };
    let k = cell.rank;
    let h = cell.half_diagonal;
    let diverged = || Error::ConditionViolation {
        rank: k,
        reason: "moment integral diverges".into(),
    };
    // Q(u0) = ∫_{u0}^∞ (u + h)^{k-1} φ(u) du
    let shifted_moment = |u0: f64| -> Result<f64> {
        let mut total = 0.0;
        for j in 0..k {
            let m = kernel.moment_tail(j, u0).ok_or_else(diverged)?;
            total += binomial(k - 1, j) * h.powi((k - 1 - j) as i32) * m;
        }
        Ok(total)
    };
    let lower = (effective - h).max(0.0);
    let integral = if lower < h {
        kernel.value(0.0) * (h.powi(k as i32) - lower.powi(k as i32)) / k as f64
            + shifted_moment(0.0)?
    } else {
        shifted_moment(lower - h)?
    };
    Ok(cell.classes * unit_sphere_measure(k) / cell.volume * integral)
}

/// Lattice points the enumeration is allowed to visit for one pair.
const ENUMERATION_BUDGET: f64 = 2e9;

/// Smallest cutoff (to bisection accuracy) whose tail bound is at most `eps`.
///
/// Doubles from 1 until the bound drops below `eps`, then bisects.
pub fn truncation_radius(
    manifold: &ManifoldSpec,
    kernel: &Kernel,
    transverse_offset: f64,
    eps: f64,
) -> Result<f64> {
    if eps.is_nan() || eps <= 0.0 {
        return Err(invalid(format!("tolerance must be positive, got {eps}")));
    }
    let bound = |r: f64| tail_bound(manifold, kernel, transverse_offset, r);
    if bound(0.0)? <= eps {
        return Ok(0.0);
    }
    let rank = manifold.lattice_rank().max(1) as i32;
    let too_many = |r: f64| (2.0 * r + 3.0).powi(rank) > ENUMERATION_BUDGET;

    let mut hi = 1.0f64.max(transverse_offset);
    while bound(hi)? > eps {
        hi *= 2.0;
        if too_many(hi - transverse_offset) {
            return Err(Error::TruncationInfeasible { radius: hi, eps });
        }
    }
    let mut lo = 0.0;
    for _ in 0..60 {
        if hi - lo <= 1e-9 * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if bound(mid)? <= eps {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// `|x₂| + |y₂|` on the Möbius strip, 0 elsewhere.
pub(crate) fn transverse_offset(manifold: &ManifoldSpec, x: &[f64], y: &[f64]) -> f64 {
    if manifold.kind() == ManifoldKind::MobiusStrip {
        x[1].abs() + y[1].abs()
    } else {
        0.0
    }
}

/// Sums `φ` over the orbit images of `y` within `radius` of `x`, split by
/// flip class `[orientation-preserving, orientation-reversing]`.
///
/// On Euclidean space the single geodesic is always included.
pub(crate) fn class_weights(
    manifold: &ManifoldSpec,
    kernel: &Kernel,
    x: &[f64],
    y: &[f64],
    radius: f64,
) -> [f64; 2] {
    let mut weights = [0.0; 2];
    let radius_sq = if manifold.kind() == ManifoldKind::Euclidean {
        f64::INFINITY
    } else {
        radius * radius
    };
    visit_images(manifold, x, y, radius_sq, |flip, _, d2| {
        weights[flip as usize] += kernel.value(d2.sqrt());
    });
    weights
}

/// `Φ(x, y)` with a certified absolute error of at most `eps`.
pub fn phi_sum(
    manifold: &ManifoldSpec,
    kernel: &Kernel,
    x: &[f64],
    y: &[f64],
    eps: f64,
) -> Result<PhiValue> {
    manifold.check_len(x)?;
    manifold.check_len(y)?;
    check_finite(x)?;
    check_finite(y)?;
    require_summable(kernel, manifold)?;
    if manifold.kind() == ManifoldKind::Euclidean {
        let [value, _] = class_weights(manifold, kernel, x, y, f64::INFINITY);
        return Ok(PhiValue {
            value,
            error_bound: 0.0,
            radius: f64::INFINITY,
        });
    }
    let offset = transverse_offset(manifold, x, y);
    let radius = truncation_radius(manifold, kernel, offset, eps)?;
    let [even, odd] = class_weights(manifold, kernel, x, y, radius);
    Ok(PhiValue {
        value: even + odd,
        error_bound: tail_bound(manifold, kernel, offset, radius)?,
        radius,
    })
}

/// Closed form of `Σ_{n∈ℤ} e^{-|δ+n|} = (e^{1-δ} + e^δ)/(e − 1)` on the circle.
pub fn phi_exp_closed_form_1d(delta: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&delta) {
        return Err(invalid(format!("delta must lie in [0, 1), got {delta}")));
    }
    let e = std::f64::consts::E;
    Ok(((1.0 - delta).exp() + delta.exp()) / (e - 1.0))
}
