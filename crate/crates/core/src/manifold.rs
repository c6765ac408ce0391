//! Flat quotient manifolds represented through their universal cover `ℝ^d`.
//!
//! Every supported space is `ℝ^d` modulo a group of deck transformations of
//! the form `x ↦ J^f(x) + t`, where `J` negates the second coordinate and
//! `t` is an integer translation:
//!
//! | kind            | deck group                          | fundamental domain |
//! |-----------------|-------------------------------------|--------------------|
//! | `Euclidean`     | identity only                       | `ℝ^d`              |
//! | `FlatTorus`     | `x + n`, `n ∈ ℤ^d`                  | `[0,1)^d`          |
//! | `MobiusStrip`   | `J^n(x) + (n, 0)`, `n ∈ ℤ`          | `[0,1) × ℝ`        |
//! | `KleinBottle`   | `J^n(x) + (n, m)`, `(n, m) ∈ ℤ²`    | `[0,1)²`           |
//!
//! Geodesics between two points of the quotient are in bijection with the
//! deck group, so lengths and velocity transports can be read off the orbit
//! of a lifted point.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ManifoldKind {
    Euclidean,
    FlatTorus,
    MobiusStrip,
    KleinBottle,
}

impl fmt::Display for ManifoldKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            ManifoldKind::Euclidean => "euclidean",
            ManifoldKind::FlatTorus => "flat_torus",
            ManifoldKind::MobiusStrip => "mobius_strip",
            ManifoldKind::KleinBottle => "klein_bottle",
        };
        f.write_str(name)
    }
}

/// Which flat space the particles live on, and its dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ManifoldSpec {
    kind: ManifoldKind,
    dimension: usize,
}

impl ManifoldSpec {
    pub fn new(kind: ManifoldKind, dimension: usize) -> Result<Self> {
        if dimension == 0 {
            return Err(invalid("dimension must be at least 1"));
        }
        if matches!(kind, ManifoldKind::MobiusStrip | ManifoldKind::KleinBottle) && dimension != 2 {
            return Err(invalid(format!(
                "{kind} is two-dimensional, got dimension {dimension}"
            )));
        }
        Ok(Self { kind, dimension })
    }

    pub fn euclidean(dimension: usize) -> Result<Self> {
        Self::new(ManifoldKind::Euclidean, dimension)
    }

    pub fn torus(dimension: usize) -> Result<Self> {
        Self::new(ManifoldKind::FlatTorus, dimension)
    }

    pub fn mobius() -> Self {
        Self {
            kind: ManifoldKind::MobiusStrip,
            dimension: 2,
        }
    }

    pub fn klein() -> Self {
        Self {
            kind: ManifoldKind::KleinBottle,
            dimension: 2,
        }
    }

    pub fn kind(&self) -> ManifoldKind {
        self.kind
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    /// Rank of the translation lattice of the deck group.
    ///
    /// This is the dimension that enters the summability test for a kernel:
    /// `d` on the torus, 1 on the Möbius strip, 2 on the Klein bottle and 0
    /// on Euclidean space (one geodesic per pair, nothing to sum).
    pub fn lattice_rank(&self) -> usize {
        match self.kind {
            ManifoldKind::Euclidean => 0,
            ManifoldKind::FlatTorus => self.dimension,
            ManifoldKind::MobiusStrip => 1,
            ManifoldKind::KleinBottle => 2,
        }
    }

    /// Whether the deck group contains orientation-reversing elements.
    pub fn has_flips(&self) -> bool {
        matches!(
            self.kind,
            ManifoldKind::MobiusStrip | ManifoldKind::KleinBottle
        )
    }

    pub(crate) fn check_len(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.dimension {
            return Err(Error::DimensionMismatch {
                expected: self.dimension,
                actual: v.len(),
            });
        }
        Ok(())
    }
}

impl fmt::Display for ManifoldSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(d={})", self.kind, self.dimension)
    }
}

/// One deck transformation `x ↦ J^flip(x) + translation`.
///
/// Ordering is lexicographic on `(flip, translation)`; it is used to break
/// ties between equally distant images.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DeckElement {
    flip: bool,
    translation: Vec<i64>,
}

impl DeckElement {
    pub fn new(flip: bool, translation: Vec<i64>) -> Self {
        Self { flip, translation }
    }

    pub fn identity(dimension: usize) -> Self {
        Self::new(false, vec![0; dimension])
    }

    pub fn flip(&self) -> bool {
        self.flip
    }

    pub fn translation(&self) -> &[i64] {
        &self.translation
    }

    /// Checks that this element belongs to the deck group of `manifold`.
    pub fn validate(&self, manifold: &ManifoldSpec) -> Result<()> {
        let d = manifold.dimension();
        if self.translation.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: self.translation.len(),
            });
        }
        match manifold.kind() {
            ManifoldKind::Euclidean => {
                if self.flip || self.translation.iter().any(|&n| n != 0) {
                    return Err(invalid(
                        "Euclidean space has only the identity deck element",
                    ));
                }
            }
            ManifoldKind::FlatTorus => {
                if self.flip {
                    return Err(invalid(
                        "the flat torus has no orientation-reversing deck elements",
                    ));
                }
            }
            ManifoldKind::MobiusStrip | ManifoldKind::KleinBottle => {
                if manifold.kind() == ManifoldKind::MobiusStrip && self.translation[1] != 0 {
                    return Err(invalid(
                        "Möbius strip deck translations are of the form (n, 0)",
                    ));
                }
                if self.flip != (self.translation[0].rem_euclid(2) == 1) {
                    return Err(invalid(format!(
                        "flip parity must equal n mod 2 for translation {:?}",
                        self.translation
                    )));
                }
            }
        }
        Ok(())
    }

    /// `self ∘ other`: apply `other` first, then `self`.
    pub fn compose(&self, other: &DeckElement) -> DeckElement {
        let mut moved: Vec<i64> = other.translation.clone();
        if self.flip && moved.len() > 1 {
            moved[1] = -moved[1];
        }
        let translation = self
            .translation
            .iter()
            .zip(&moved)
            .map(|(a, b)| a + b)
            .collect();
        DeckElement::new(self.flip ^ other.flip, translation)
    }

    pub fn inverse(&self) -> DeckElement {
        let mut translation: Vec<i64> = self.translation.iter().map(|n| -n).collect();
        if self.flip && translation.len() > 1 {
            translation[1] = -translation[1];
        }
        DeckElement::new(self.flip, translation)
    }

    /// Applies the transformation to a lifted point. No validation.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut out = self.push(x);
        for (o, n) in out.iter_mut().zip(&self.translation) {
            *o += *n as f64;
        }
        out
    }

    /// Differential of the transformation acting on a tangent vector. No validation.
    pub fn push(&self, v: &[f64]) -> Vec<f64> {
        let mut out = v.to_vec();
        if self.flip && out.len() > 1 {
            out[1] = -out[1];
        }
        out
    }
}

/// Applies `g` to the lifted point `x`.
pub fn apply_deck(manifold: &ManifoldSpec, g: &DeckElement, x: &[f64]) -> Result<Vec<f64>> {
    g.validate(manifold)?;
    manifold.check_len(x)?;
    Ok(g.apply(x))
}

/// Transports a velocity along `g`: the translation part acts trivially, a
/// flip negates the second component.
pub fn pushforward(manifold: &ManifoldSpec, g: &DeckElement, v: &[f64]) -> Result<Vec<f64>> {
    g.validate(manifold)?;
    manifold.check_len(v)?;
    Ok(g.push(v))
}

/// An orbit point `g(target)` together with the element producing it.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub point: Vec<f64>,
    pub element: DeckElement,
    pub distance: f64,
}

/// All orbit points of `target` within `radius` of `source`, nearest first.
///
/// Ties in distance are broken by lexicographic translation.
pub fn images_within(
    manifold: &ManifoldSpec,
    source: &[f64],
    target: &[f64],
    radius: f64,
) -> Result<Vec<Image>> {
    manifold.check_len(source)?;
    manifold.check_len(target)?;
    check_finite(source)?;
    check_finite(target)?;
    if !radius.is_finite() || radius < 0.0 {
        return Err(invalid(format!(
            "radius must be finite and non-negative, got {radius}"
        )));
    }
    let mut found: Vec<(f64, DeckElement)> = Vec::new();
    visit_images(manifold, source, target, radius * radius, |flip, t, d2| {
        found.push((d2, DeckElement::new(flip, t.to_vec())));
    });
    found.sort_by(|a, b| {
        a.0.partial_cmp(&b.0)
            .unwrap_or(Ordering::Equal)
            .then_with(|| a.1.translation.cmp(&b.1.translation))
    });
    Ok(found
        .into_iter()
        .map(|(d2, element)| Image {
            point: element.apply(target),
            element,
            distance: d2.sqrt(),
        })
        .collect())
}

/// Shortest geodesic length between `x` and `y` and a deck element realizing it.
///
/// Among equally short images the smallest element in `(flip, translation)`
/// order wins.
pub fn min_image_distance(
    manifold: &ManifoldSpec,
    x: &[f64],
    y: &[f64],
) -> Result<(f64, DeckElement)> {
    manifold.check_len(x)?;
    manifold.check_len(y)?;
    check_finite(x)?;
    check_finite(y)?;

    // A rounded candidate per flip class gives an upper bound for the search.
    let geometry = AxisGeometry::of(manifold);
    let mut base = y.to_vec();
    let mut t = vec![0i64; manifold.dimension()];
    let mut bound = f64::INFINITY;
    for &flip in geometry.classes() {
        fill_base(&mut base, y, flip);
        for axis in 0..manifold.dimension() {
            t[axis] = match geometry.mode(axis, flip) {
                AxisMode::Fixed => 0,
                AxisMode::Free { parity: None } => (x[axis] - base[axis]).round() as i64,
                AxisMode::Free { parity: Some(p) } => {
                    2 * ((x[axis] - base[axis] - p as f64) / 2.0).round() as i64 + p
                }
            };
        }
        bound = bound.min(image_dist_sq(&base, x, &t));
    }

    let mut best: Option<(f64, DeckElement)> = None;
    visit_images(manifold, x, y, bound, |flip, t, d2| {
        let better = match &best {
            None => true,
            Some((bd2, be)) => {
                d2 < *bd2 || (d2 == *bd2 && (flip, t) < (be.flip, be.translation.as_slice()))
            }
        };
        if better {
            best = Some((d2, DeckElement::new(flip, t.to_vec())));
        }
    });
    let (d2, element) = best.expect("rounded candidate lies inside its own bound");
    Ok((d2.sqrt(), element))
}

/// Maps a lifted state `(x̃, ṽ)` to `(p(x̃), Dp(ṽ))` with `p(x̃)` in the
/// fundamental domain.
pub fn project_to_fundamental_domain(
    manifold: &ManifoldSpec,
    x: &[f64],
    v: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    manifold.check_len(x)?;
    manifold.check_len(v)?;
    check_finite(x)?;
    let mut px = x.to_vec();
    let mut pv = v.to_vec();
    match manifold.kind() {
        ManifoldKind::Euclidean => {}
        ManifoldKind::FlatTorus => {
            for c in px.iter_mut() {
                *c = split_floor(*c).1;
            }
        }
        ManifoldKind::MobiusStrip => {
            let (n, frac) = split_floor(x[0]);
            px[0] = frac;
            if n.rem_euclid(2) == 1 {
                px[1] = -x[1];
                pv[1] = -v[1];
            }
        }
        ManifoldKind::KleinBottle => {
            let (n, frac) = split_floor(x[0]);
            px[0] = frac;
            let second = if n.rem_euclid(2) == 1 {
                pv[1] = -v[1];
                -x[1]
            } else {
                x[1]
            };
            px[1] = split_floor(second).1;
        }
    }
    Ok((px, pv))
}

/// `(⌊x⌋, x − ⌊x⌋)` with the fractional part forced into `[0, 1)`.
fn split_floor(x: f64) -> (i64, f64) {
    let n = x.floor();
    let frac = x - n;
    if frac >= 1.0 {
        (n as i64 + 1, 0.0)
    } else {
        (n as i64, frac)
    }
}

/// Largest lifted coordinate magnitude accepted (`2^52`). Past it, adjacent
/// lattice translates of a point round to the same float.
pub const MAX_LIFT_COORDINATE: f64 = 4_503_599_627_370_496.0;

pub(crate) fn check_finite(x: &[f64]) -> Result<()> {
    if x.iter().all(|c| c.abs() <= MAX_LIFT_COORDINATE) {
        Ok(())
    } else {
        Err(invalid(format!(
            "coordinates must be finite with magnitude at most {MAX_LIFT_COORDINATE:e}"
        )))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum AxisMode {
    /// Translation along this axis is always zero.
    Fixed,
    /// Any integer, optionally restricted to a parity.
    Free { parity: Option<i64> },
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct AxisGeometry {
    kind: ManifoldKind,
}

impl AxisGeometry {
    pub(crate) fn of(manifold: &ManifoldSpec) -> Self {
        Self {
            kind: manifold.kind(),
        }
    }

    pub(crate) fn classes(&self) -> &'static [bool] {
        match self.kind {
            ManifoldKind::MobiusStrip | ManifoldKind::KleinBottle => &[false, true],
            _ => &[false],
        }
    }

    pub(crate) fn mode(&self, axis: usize, flip: bool) -> AxisMode {
        match (self.kind, axis) {
            (ManifoldKind::Euclidean, _) => AxisMode::Fixed,
            (ManifoldKind::FlatTorus, _) => AxisMode::Free { parity: None },
            (ManifoldKind::MobiusStrip | ManifoldKind::KleinBottle, 0) => AxisMode::Free {
                parity: Some(flip as i64),
            },
            (ManifoldKind::MobiusStrip, _) => AxisMode::Fixed,
            (ManifoldKind::KleinBottle, _) => AxisMode::Free { parity: None },
        }
    }
}

fn fill_base(base: &mut [f64], target: &[f64], flip: bool) {
    base.copy_from_slice(target);
    if flip && base.len() > 1 {
        base[1] = -base[1];
    }
}

/// `‖base + t − source‖²`, accumulated axis by axis.
fn image_dist_sq(base: &[f64], source: &[f64], t: &[i64]) -> f64 {
    let mut s = 0.0;
    for axis in 0..base.len() {
        let diff = (base[axis] - source[axis]) + t[axis] as f64;
        s += diff * diff;
    }
    s
}

/// Visits every orbit image `g(target)` with `‖g(target) − source‖² ≤ radius_sq`,
/// passing `(flip, translation, squared distance)`.
///
/// Order: flip class ascending, then translations in lexicographic order.
/// The squared distance is accumulated axis by axis exactly as in
/// [`image_dist_sq`]. `radius_sq` must be finite unless the manifold is
/// Euclidean.
pub(crate) fn visit_images<F>(
    manifold: &ManifoldSpec,
    source: &[f64],
    target: &[f64],
    radius_sq: f64,
    mut visit: F,
) where
    F: FnMut(bool, &[i64], f64),
{
    let geometry = AxisGeometry::of(manifold);
    let d = manifold.dimension();
    let mut offset = vec![0.0; d];
    let mut base = target.to_vec();
    let mut t = vec![0i64; d];
    for &flip in geometry.classes() {
        fill_base(&mut base, target, flip);
        for axis in 0..d {
            offset[axis] = base[axis] - source[axis];
        }
        let mut walker = Walker {
            geometry,
            flip,
            offset: &offset,
            radius_sq,
            translation: &mut t,
            visit: &mut visit,
        };
        walker.descend(0, 0.0);
    }
}

struct Walker<'a, F> {
    geometry: AxisGeometry,
    flip: bool,
    offset: &'a [f64],
    radius_sq: f64,
    translation: &'a mut [i64],
    visit: &'a mut F,
}

impl<F: FnMut(bool, &[i64], f64)> Walker<'_, F> {
    fn descend(&mut self, axis: usize, partial: f64) {
        if axis == self.offset.len() {
            (self.visit)(self.flip, self.translation, partial);
            return;
        }
        let off = self.offset[axis];
        match self.geometry.mode(axis, self.flip) {
            AxisMode::Fixed => {
                let diff = off + 0.0;
                let s = partial + diff * diff;
                if s <= self.radius_sq {
                    self.translation[axis] = 0;
                    self.descend(axis + 1, s);
                }
            }
            AxisMode::Free { parity } => {
                let remaining = self.radius_sq - partial;
                if remaining < 0.0 {
                    return;
                }
                let reach = remaining.sqrt();
                // One extra lattice step on each side; the exact test below filters.
                let mut lo = (-off - reach).floor() as i64 - 1;
                let hi = (-off + reach).ceil() as i64 + 1;
                let step = match parity {
                    Some(p) => {
                        if lo.rem_euclid(2) != p {
                            lo += 1;
                        }
                        2
                    }
                    None => 1,
                };
                let mut n = lo;
                while n <= hi {
                    let diff = off + n as f64;
                    let s = partial + diff * diff;
                    if s <= self.radius_sq {
                        self.translation[axis] = n;
                        self.descend(axis + 1, s);
                    }
                    n += step;
                }
            }
        }
    }
}
