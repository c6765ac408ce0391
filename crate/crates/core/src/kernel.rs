//! Communication functions `φ(r)` and their summability over deck lattices.

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma, ln_gamma};

use crate::error::{invalid, Error, Result};
use crate::manifold::ManifoldSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    CompactSupportPolynomial,
    Exponential,
    PowerLaw,
}

impl fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KernelFamily::CompactSupportPolynomial => "compact_support_polynomial",
            KernelFamily::Exponential => "exponential",
            KernelFamily::PowerLaw => "power_law",
        })
    }
}

/// A continuous, non-negative, non-increasing communication function.
///
/// * `CompactSupportPolynomial`: `φ(r) = p(r/A)` on `[0, A]` and `0` beyond,
///   with `p(s) = Σ c_j s^j` non-increasing on `[0, 1]` and `p(1) = 0`.
/// * `Exponential`: `φ(r) = e^{-λ r}`.
/// * `PowerLaw`: `φ(r) = (1 + r²)^{-α}`.
#[derive(Debug, Clone, PartialEq)]
pub enum Kernel {
    CompactSupportPolynomial {
        support: f64,
        coefficients: Vec<f64>,
    },
    Exponential {
        rate: f64,
    },
    PowerLaw {
        exponent: f64,
    },
}

/// Samples used to check monotonicity of a polynomial profile.
const PROFILE_SAMPLES: usize = 4096;

impl Kernel {
    pub fn exponential(rate: f64) -> Result<Self> {
        if !(rate > 0.0 && rate.is_finite()) {
            return Err(invalid(format!(
                "exponential rate must be positive, got {rate}"
            )));
        }
        Ok(Kernel::Exponential { rate })
    }

    pub fn power_law(exponent: f64) -> Result<Self> {
        if !(exponent > 0.0 && exponent.is_finite()) {
            return Err(invalid(format!(
                "power-law exponent must be positive, got {exponent}"
            )));
        }
        Ok(Kernel::PowerLaw { exponent })
    }

    /// Polynomial profile in the normalized variable `s = r / support`.
    pub fn compact_polynomial(support: f64, coefficients: Vec<f64>) -> Result<Self> {
        if !(support > 0.0 && support.is_finite()) {
            return Err(invalid(format!(
                "support radius must be positive, got {support}"
            )));
        }
        if coefficients.is_empty() || coefficients.iter().any(|c| !c.is_finite()) {
            return Err(invalid("profile needs at least one finite coefficient"));
        }
        let scale = coefficients.iter().map(|c| c.abs()).sum::<f64>().max(1.0);
        let tol = 1e-12 * scale;
        if horner(&coefficients, 1.0).abs() > tol {
            return Err(invalid(
                "profile must vanish at the support radius (p(1) = 0) to be continuous",
            ));
        }
        let obviously_decreasing = coefficients.iter().skip(1).all(|&c| c <= 0.0);
        if !obviously_decreasing {
            let derivative: Vec<f64> = coefficients
                .iter()
                .enumerate()
                .skip(1)
                .map(|(j, c)| j as f64 * c)
                .collect();
            let rising = (0..=PROFILE_SAMPLES)
                .map(|i| i as f64 / PROFILE_SAMPLES as f64)
                .any(|s| horner(&derivative, s) > tol);
            if rising {
                return Err(invalid("profile must be non-increasing on [0, 1]"));
            }
        }
        Ok(Kernel::CompactSupportPolynomial {
            support,
            coefficients,
        })
    }

    /// The bump `(1 - r/A)^power`, expanded into polynomial coefficients.
    pub fn bump(support: f64, power: u32) -> Result<Self> {
        if power == 0 {
            return Err(invalid("bump power must be at least 1"));
        }
        let mut coefficients = vec![1.0];
        for _ in 0..power {
            let mut next = vec![0.0; coefficients.len() + 1];
            for (j, c) in coefficients.iter().enumerate() {
                next[j] += c;
                next[j + 1] -= c;
            }
            coefficients = next;
        }
        Self::compact_polynomial(support, coefficients)
    }

    /// Builds a kernel from a family name and a flat parameter list:
    /// `[λ]`, `[α]`, or `[A, c_0, c_1, ...]`.
    pub fn from_params(family: KernelFamily, params: &[f64]) -> Result<Self> {
        match family {
            KernelFamily::Exponential => match params {
                [rate] => Self::exponential(*rate),
                _ => Err(invalid("exponential kernel takes one parameter [rate]")),
            },
            KernelFamily::PowerLaw => match params {
                [exponent] => Self::power_law(*exponent),
                _ => Err(invalid("power-law kernel takes one parameter [exponent]")),
            },
            KernelFamily::CompactSupportPolynomial => match params {
                [support, coefficients @ ..] if !coefficients.is_empty() => {
                    Self::compact_polynomial(*support, coefficients.to_vec())
                }
                _ => Err(invalid(
                    "compact-support kernel takes [support, c_0, c_1, ...]",
                )),
            },
        }
    }

    pub fn family(&self) -> KernelFamily {
        match self {
            Kernel::CompactSupportPolynomial { .. } => KernelFamily::CompactSupportPolynomial,
            Kernel::Exponential { .. } => KernelFamily::Exponential,
            Kernel::PowerLaw { .. } => KernelFamily::PowerLaw,
        }
    }

    pub fn params(&self) -> Vec<f64> {
        match self {
            Kernel::CompactSupportPolynomial {
                support,
                coefficients,
            } => std::iter::once(*support)
                .chain(coefficients.iter().copied())
                .collect(),
            Kernel::Exponential { rate } => vec![*rate],
            Kernel::PowerLaw { exponent } => vec![*exponent],
        }
    }

    pub fn support_radius(&self) -> Option<f64> {
        match self {
            Kernel::CompactSupportPolynomial { support, .. } => Some(*support),
            _ => None,
        }
    }

    /// `φ(r)` for `r ≥ 0`; unchecked, used on hot paths.
    #[inline]
    pub fn value(&self, r: f64) -> f64 {
        match self {
            Kernel::Exponential { rate } => (-rate * r).exp(),
            Kernel::PowerLaw { exponent } => {
                let base = 1.0 + r * r;
                if exponent.fract() == 0.0 && *exponent <= 64.0 {
                    1.0 / base.powi(*exponent as i32)
                } else {
                    base.powf(-exponent)
                }
            }
            Kernel::CompactSupportPolynomial {
                support,
                coefficients,
            } => {
                if r >= *support {
                    0.0
                } else {
                    horner(coefficients, r / support).max(0.0)
                }
            }
        }
    }

    /// Upper bound on `∫_from^∞ u^j φ(u) du`; `None` when the integral diverges.
    ///
    /// Exact for the exponential and compact families; the power law uses
    /// `(1 + u²)^{-α} ≤ min(1, u^{-2α})`.
    pub(crate) fn moment_tail(&self, j: usize, from: f64) -> Option<f64> {
        let from = from.max(0.0);
        match self {
            Kernel::Exponential { rate } => {
                // ∫_L^∞ u^j e^{-λu} du = e^{-λL} Σ_{i≤j} j!/i! L^i / λ^{j-i+1}
                let mut sum = 0.0;
                let mut falling = 1.0; // j!/i!
                for i in (0..=j).rev() {
                    sum += falling * from.powi(i as i32) / rate.powi((j - i + 1) as i32);
                    falling *= i as f64;
                }
                Some((-rate * from).exp() * sum)
            }
            Kernel::CompactSupportPolynomial {
                support,
                coefficients,
            } => {
                if from >= *support {
                    return Some(0.0);
                }
                let s0 = from / support;
                let sum: f64 = coefficients
                    .iter()
                    .enumerate()
                    .map(|(i, c)| {
                        let p = (i + j + 1) as i32;
                        c * (1.0 - s0.powi(p)) / p as f64
                    })
                    .sum();
                Some((support.powi(j as i32 + 1) * sum).max(0.0))
            }
            Kernel::PowerLaw { exponent } => {
                let excess = 2.0 * exponent - (j as f64 + 1.0);
                if excess <= 0.0 {
                    return None;
                }
                if from >= 1.0 {
                    Some(from.powf(-excess) / excess)
                } else {
                    let near = (1.0 - from.powi(j as i32 + 1)) / (j as f64 + 1.0);
                    Some(near + 1.0 / excess)
                }
            }
        }
    }
}

impl fmt::Display for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Kernel::Exponential { rate } => write!(f, "exp(-{rate} r)"),
            Kernel::PowerLaw { exponent } => write!(f, "(1 + r^2)^(-{exponent})"),
            Kernel::CompactSupportPolynomial {
                support,
                coefficients,
            } => write!(f, "p(r/{support}) on [0, {support}], p = {coefficients:?}"),
        }
    }
}

fn horner(coefficients: &[f64], s: f64) -> f64 {
    coefficients.iter().rev().fold(0.0, |acc, c| acc * s + c)
}

/// `φ(r)`, rejecting negative or non-finite `r`.
pub fn evaluate(kernel: &Kernel, r: f64) -> Result<f64> {
    if r.is_nan() || r < 0.0 {
        return Err(invalid(format!("distance must be non-negative, got {r}")));
    }
    Ok(kernel.value(r))
}

/// Surface measure of the unit sphere `S^{d-1}` in `ℝ^d`: `d π^{d/2} / Γ(d/2 + 1)`.
pub fn unit_sphere_measure(d: usize) -> f64 {
    let d = d as f64;
    d * PI.powf(d / 2.0) / gamma(d / 2.0 + 1.0)
}

/// Decides whether `∫_0^∞ r^{d-1} φ(r) dr < ∞` and returns the integral when it is.
pub fn check_condition_a(kernel: &Kernel, d: usize) -> (bool, Option<f64>) {
    assert!(
        d >= 1,
        "summability is tested on lattices of rank at least 1"
    );
    match kernel {
        Kernel::Exponential { .. } | Kernel::CompactSupportPolynomial { .. } => {
            (true, kernel.moment_tail(d - 1, 0.0))
        }
        Kernel::PowerLaw { exponent } => {
            let half = d as f64 / 2.0;
            if *exponent <= half {
                return (false, None);
            }
            // ∫ r^{d-1} (1+r²)^{-α} dr = Γ(d/2) Γ(α - d/2) / (2 Γ(α))
            let log = ln_gamma(half) + ln_gamma(exponent - half) - ln_gamma(*exponent);
            (true, Some(0.5 * log.exp()))
        }
    }
}

/// Outcome of the summability test on a given manifold.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summability {
    pub summable: bool,
    pub rank: usize,
    pub integral: Option<f64>,
    pub reason: Option<String>,
}

/// Applies the summability test at the lattice rank of `manifold`.
///
/// Euclidean space has one geodesic per pair, so every kernel is admissible.
pub fn summability(kernel: &Kernel, manifold: &ManifoldSpec) -> Summability {
    let rank = manifold.lattice_rank();
    if rank == 0 {
        return Summability {
            summable: true,
            rank,
            integral: None,
            reason: None,
        };
    }
    let (summable, integral) = check_condition_a(kernel, rank);
    let reason = (!summable).then(|| match kernel {
        Kernel::PowerLaw { exponent } => format!(
            "power-law exponent α = {exponent} ≤ d/2 = {}: ∫ r^(d-1) φ(r) dr diverges \
             (summability condition needs α > d/2, d = {rank})",
            rank as f64 / 2.0
        ),
        _ => format!("∫ r^(d-1) φ(r) dr diverges for d = {rank}"),
    });
    Summability {
        summable,
        rank,
        integral,
        reason,
    }
}

pub fn require_summable(kernel: &Kernel, manifold: &ManifoldSpec) -> Result<()> {
    let verdict = summability(kernel, manifold);
    if verdict.summable {
        Ok(())
    } else {
        Err(Error::ConditionViolation {
            rank: verdict.rank,
            reason: verdict.reason.unwrap_or_default(),
        })
    }
}
