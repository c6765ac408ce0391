//! Reference computations kept deliberately naive: a brute-force orbit sum
//! and a human-readable kernel report.

use serde::Serialize;

use crate::error::{invalid, Result};
use crate::kernel::{summability, Kernel};
use crate::manifold::{DeckElement, ManifoldKind, ManifoldSpec};

/// Sums `φ(‖g(y) − x‖)` over every deck element whose translation entries lie
/// in `[−window, window]`.
///
/// Elements are built one by one and applied with [`DeckElement::apply`];
/// nothing is shared with the pruned enumeration used by the simulator.
pub fn oracle_phi(
    manifold: &ManifoldSpec,
    kernel: &Kernel,
    x: &[f64],
    y: &[f64],
    window: i64,
) -> Result<f64> {
    if window < 1 {
        return Err(invalid(format!("window must be at least 1, got {window}")));
    }
    let d = manifold.dimension();
    if x.len() != d || y.len() != d {
        return Err(invalid(format!("points must have {d} coordinates")));
    }
    let mut total = 0.0;
    let mut add = |g: DeckElement| {
        let image = g.apply(y);
        let dist = image
            .iter()
            .zip(x)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        total += kernel.value(dist);
    };
    let range = -window..=window;
    match manifold.kind() {
        ManifoldKind::Euclidean => add(DeckElement::identity(d)),
        ManifoldKind::FlatTorus => {
            let mut t = vec![-window; d];
            loop {
                add(DeckElement::new(false, t.clone()));
                let mut axis = 0;
                while axis < d && t[axis] == window {
                    t[axis] = -window;
                    axis += 1;
                }
                if axis == d {
                    break;
                }
                t[axis] += 1;
            }
        }
        ManifoldKind::MobiusStrip => {
            for n in range {
                add(DeckElement::new(n.rem_euclid(2) == 1, vec![n, 0]));
            }
        }
        ManifoldKind::KleinBottle => {
            for n in range.clone() {
                for m in range.clone() {
                    add(DeckElement::new(n.rem_euclid(2) == 1, vec![n, m]));
                }
            }
        }
    }
    Ok(total)
}

/// Summary printed by `validate-kernel`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KernelReport {
    pub kernel: String,
    pub manifold: ManifoldKind,
    pub dimension: usize,
    pub summable: bool,
    /// Lattice rank the integral test was applied at.
    pub rank: usize,
    /// `∫₀^∞ r^{rank−1} φ(r) dr` when finite.
    pub integral: Option<f64>,
    pub reason: Option<String>,
    /// Largest possible minimal image distance (the Möbius value assumes a
    /// band of half-width 1).
    pub lower_bound_distance: Option<f64>,
    /// `φ` at that distance: a uniform lower bound on the pair weights.
    pub lower_bound_weight: Option<f64>,
}

pub fn validate_kernel(kernel: &Kernel, manifold: &ManifoldSpec) -> KernelReport {
    let verdict = summability(kernel, manifold);
    let reach = match manifold.kind() {
        ManifoldKind::Euclidean => None,
        ManifoldKind::FlatTorus => Some((manifold.dimension() as f64).sqrt() / 2.0),
        ManifoldKind::MobiusStrip => Some(5f64.sqrt()),
        ManifoldKind::KleinBottle => Some(5f64.sqrt() / 2.0),
    };
    KernelReport {
        kernel: kernel.to_string(),
        manifold: manifold.kind(),
        dimension: manifold.dimension(),
        summable: verdict.summable,
        rank: verdict.rank,
        integral: verdict.integral,
        reason: verdict.reason,
        lower_bound_distance: reach,
        lower_bound_weight: reach.map(|r| kernel.value(r)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn circle_exponential_at_coincident_points() {
        let m = ManifoldSpec::torus(1).unwrap();
        let k = Kernel::exponential(1.0).unwrap();
        let value = oracle_phi(&m, &k, &[0.0], &[0.0], 60).unwrap();
        assert_relative_eq!(value, 1.0 / (0.5f64).tanh(), epsilon = 1e-12);
    }

    #[test]
    fn compact_support_out_of_reach() {
        let m = ManifoldSpec::klein();
        let k = Kernel::bump(0.2, 2).unwrap();
        assert_eq!(
            oracle_phi(&m, &k, &[0.1, 0.1], &[0.5, 0.5], 5).unwrap(),
            0.0
        );
    }

    #[test]
    fn window_growth_never_decreases() {
        let m = ManifoldSpec::mobius();
        let k = Kernel::power_law(1.0).unwrap();
        let mut previous = 0.0;
        for w in [1, 2, 5, 10, 40] {
            let v = oracle_phi(&m, &k, &[0.2, 0.3], &[0.7, -0.4], w).unwrap();
            assert!(v >= previous);
            previous = v;
        }
        assert!(oracle_phi(&m, &k, &[0.2, 0.3], &[0.7, -0.4], 0).is_err());
    }

    #[test]
    fn report_examples() {
        let r = validate_kernel(
            &Kernel::exponential(1.0).unwrap(),
            &ManifoldSpec::torus(3).unwrap(),
        );
        assert!(r.summable);
        assert_eq!(r.rank, 3);
        assert_relative_eq!(r.integral.unwrap(), 2.0, epsilon = 1e-12);
        assert_relative_eq!(
            r.lower_bound_weight.unwrap(),
            (-(3f64.sqrt()) / 2.0).exp(),
            epsilon = 1e-15
        );
        assert_relative_eq!(r.lower_bound_weight.unwrap(), 0.4206200, epsilon = 1e-7);

        let r = validate_kernel(&Kernel::power_law(1.0).unwrap(), &ManifoldSpec::mobius());
        assert!(r.summable);
        assert_eq!(r.rank, 1);
        assert_relative_eq!(
            r.integral.unwrap(),
            std::f64::consts::FRAC_PI_2,
            epsilon = 1e-12
        );

        let r = validate_kernel(&Kernel::power_law(0.5).unwrap(), &ManifoldSpec::klein());
        assert!(!r.summable);
        assert!(r.integral.is_none());
        assert!(r.reason.is_some());
    }
}
