//! Monotone scalar measurement maps and their Filippov intervals.
//!
//! For an increasing `f` the Filippov set-valued map at `x` is the closed
//! interval `[f(x⁻), f(x⁺)]`. Built-ins compute both limits in closed form,
//! expose their discontinuity points so the integrator can localise events
//! exactly, and integrate their primitive `F(x) = ∫₀ˣ f` exactly.

use alloc::vec::Vec;
use core::fmt::Debug;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NonlinearityError {
    #[error("quantization step must be positive and finite, got {0}")]
    InvalidDelta(f64),
    #[error("scale must be positive and finite, got {0}")]
    InvalidScale(f64),
    #[error("bias must be finite, got {0}")]
    InvalidBias(f64),
    #[error("staircase needs {expected} levels for its breakpoints, got {got}")]
    LevelCount { expected: usize, got: usize },
    #[error("staircase breakpoints must be finite and strictly increasing")]
    UnsortedBreakpoints,
    #[error("staircase levels must be finite and non-decreasing")]
    DecreasingLevels,
    #[error("interval list is empty")]
    EmptyList,
    #[error("adaptive quadrature of the primitive failed at x = {0}")]
    QuadratureFailure(f64),
}

/// Relative distance under which a point counts as sitting on a
/// discontinuity. Keeps interval endpoints stable against rounding in the
/// floor-based formulas.
pub const SNAP_TOLERANCE: f64 = 1e-12;

/// Discontinuities of the logarithmic quantizer accumulate at zero; points
/// with magnitude below this floor are not reported by the locator.
pub const LOG_LOCATOR_FLOOR: f64 = 1e-12;

/// Hard cap on the number of points a locator returns for one query.
pub const LOCATOR_MAX_POINTS: usize = 1 << 20;

fn snap_tol(x: f64) -> f64 {
    SNAP_TOLERANCE * x.abs().max(1.0)
}

/// The Filippov interval `[f(x⁻), f(x⁺)]`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FilippovInterval {
    pub lo: f64,
    pub hi: f64,
}

impl FilippovInterval {
    pub fn point(v: f64) -> Self {
        Self { lo: v, hi: v }
    }

    pub fn is_degenerate(&self) -> bool {
        self.lo == self.hi
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }

    pub fn midpoint(&self) -> f64 {
        if self.is_degenerate() {
            self.lo
        } else {
            0.5 * (self.lo + self.hi)
        }
    }

    pub fn clamp(&self, v: f64) -> f64 {
        v.max(self.lo).min(self.hi)
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

/// An increasing scalar function, possibly discontinuous.
///
/// Implementors must keep `left_limit(x) ≤ evaluate(x) ≤ right_limit(x)` and
/// `right_limit(x₁) ≤ left_limit(x₂)` whenever `x₁ < x₂`. The default limit
/// implementations probe at a relative offset of `1e-9`; override them when
/// exact limits are known.
pub trait MonotoneFn: Debug + Send + Sync {
    fn evaluate(&self, x: f64) -> f64;

    fn left_limit(&self, x: f64) -> f64 {
        self.evaluate(x - 1e-9 * x.abs().max(1.0))
    }

    fn right_limit(&self, x: f64) -> f64 {
        self.evaluate(x + 1e-9 * x.abs().max(1.0))
    }

    /// `F(x) = ∫₀ˣ f(τ) dτ`. Defaults to adaptive Simpson quadrature split
    /// at whatever discontinuities the locator reports.
    fn primitive(&self, x: f64) -> Result<f64, NonlinearityError> {
        quadrature_primitive(self, x)
    }

    /// Discontinuity points inside `[lo, hi]`, ascending. An empty list is
    /// allowed for black-box functions; see [`MonotoneFn::has_locator`].
    fn discontinuities(&self, _lo: f64, _hi: f64) -> Vec<f64> {
        Vec::new()
    }

    /// Whether [`MonotoneFn::discontinuities`] is exhaustive. The integrator
    /// falls back to chatter detection for coordinates where it is not.
    fn has_locator(&self) -> bool {
        false
    }

    /// Nearest discontinuity strictly beyond `x` in the given direction, not
    /// past `limit`.
    fn next_discontinuity(&self, x: f64, upward: bool, limit: f64) -> Option<f64> {
        let tol = snap_tol(x);
        if upward {
            self.discontinuities(x, limit)
                .into_iter()
                .find(|&d| d > x + tol)
        } else {
            self.discontinuities(limit, x)
                .into_iter()
                .rev()
                .find(|&d| d < x - tol)
        }
    }

    /// Serializable description, when this is a built-in.
    fn descriptor(&self) -> Option<Nonlinearity> {
        None
    }
}

/// `[f(x⁻), f(x⁺)]`; degenerate at continuity points.
pub fn filippov_interval(f: &dyn MonotoneFn, x: f64) -> FilippovInterval {
    FilippovInterval {
        lo: f.left_limit(x),
        hi: f.right_limit(x),
    }
}

/// Filippov interval after snapping `x` onto any discontinuity within
/// `band`. The result contains the intervals of every point within `band`
/// on the near side, which is how membership tests absorb
/// event-localisation rounding.
pub fn filippov_interval_snapped(f: &dyn MonotoneFn, x: f64, band: f64) -> FilippovInterval {
    let here = filippov_interval(f, x);
    if band <= 0.0 {
        return here;
    }
    let near = f.discontinuities(x - band, x + band);
    if near.is_empty() {
        return here;
    }
    let mut lo = here.lo;
    let mut hi = here.hi;
    for d in near {
        lo = lo.min(f.left_limit(d));
        hi = hi.max(f.right_limit(d));
    }
    FilippovInterval { lo, hi }
}

pub fn primitive_value(f: &dyn MonotoneFn, x: f64) -> Result<f64, NonlinearityError> {
    f.primitive(x)
}

/// `[max lo, min hi]` when nonempty; decides whether some constant `a`
/// lies in every interval.
pub fn intersect_intervals(
    intervals: &[FilippovInterval],
) -> Result<Option<FilippovInterval>, NonlinearityError> {
    if intervals.is_empty() {
        return Err(NonlinearityError::EmptyList);
    }
    let lo = intervals.iter().map(|i| i.lo).fold(f64::NEG_INFINITY, f64::max);
    let hi = intervals.iter().map(|i| i.hi).fold(f64::INFINITY, f64::min);
    Ok((lo <= hi).then_some(FilippovInterval { lo, hi }))
}

/// Default probe magnitude for the sign condition.
pub const SIGN_CONDITION_PROBE: f64 = 1e6;

/// Checks `f(+probe) > 0` and `f(−probe) < 0`, a finite stand-in for the
/// limits at ±∞.
pub fn satisfies_sign_condition(f: &dyn MonotoneFn, probe: f64) -> bool {
    f.evaluate(probe) > 0.0 && f.evaluate(-probe) < 0.0
}

/// Quantization step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantizerParams {
    delta: f64,
}

impl QuantizerParams {
    pub fn new(delta: f64) -> Result<Self, NonlinearityError> {
        if delta > 0.0 && delta.is_finite() {
            Ok(Self { delta })
        } else {
            Err(NonlinearityError::InvalidDelta(delta))
        }
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }
}

/// Built-in nonlinearities. Each carries an additive `bias` (zero by
/// default) for measurements that do not cross the origin.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(tag = "kind", content = "params", rename_all = "lowercase", deny_unknown_fields)
)]
pub enum Nonlinearity {
    /// `⌊z/Δ + ½⌋Δ`
    Symmetric {
        delta: f64,
        #[cfg_attr(feature = "serde", serde(default, skip_serializing_if = "is_zero"))]
        bias: f64,
    },
    /// `⌊z/Δ⌋Δ`
    Asymmetric {
        delta: f64,
        #[cfg_attr(feature = "serde", serde(default, skip_serializing_if = "is_zero"))]
        bias: f64,
    },
    /// `sign(z)·exp(q^s(ln|z|))`, zero at zero.
    Logarithmic {
        delta: f64,
        #[cfg_attr(feature = "serde", serde(default, skip_serializing_if = "is_zero"))]
        bias: f64,
    },
    /// `scale·sign(z)`
    Sign {
        scale: f64,
        #[cfg_attr(feature = "serde", serde(default, skip_serializing_if = "is_zero"))]
        bias: f64,
    },
    /// `clamp(z, −scale, scale)`
    Saturation {
        scale: f64,
        #[cfg_attr(feature = "serde", serde(default, skip_serializing_if = "is_zero"))]
        bias: f64,
    },
    /// Right-continuous staircase: `levels[k]` on `[breakpoints[k-1], breakpoints[k])`.
    Custom {
        breakpoints: Vec<f64>,
        levels: Vec<f64>,
        #[cfg_attr(feature = "serde", serde(default, skip_serializing_if = "is_zero"))]
        bias: f64,
    },
}

#[cfg(feature = "serde")]
fn is_zero(v: &f64) -> bool {
    *v == 0.0
}

pub fn quantizer_symmetric(p: QuantizerParams) -> Nonlinearity {
    Nonlinearity::Symmetric {
        delta: p.delta,
        bias: 0.0,
    }
}

pub fn quantizer_asymmetric(p: QuantizerParams) -> Nonlinearity {
    Nonlinearity::Asymmetric {
        delta: p.delta,
        bias: 0.0,
    }
}

pub fn quantizer_logarithmic(p: QuantizerParams) -> Nonlinearity {
    Nonlinearity::Logarithmic {
        delta: p.delta,
        bias: 0.0,
    }
}

pub fn sign_fn(scale: f64) -> Result<Nonlinearity, NonlinearityError> {
    let n = Nonlinearity::Sign { scale, bias: 0.0 };
    n.validate()?;
    Ok(n)
}

pub fn saturation_fn(scale: f64) -> Result<Nonlinearity, NonlinearityError> {
    let n = Nonlinearity::Saturation { scale, bias: 0.0 };
    n.validate()?;
    Ok(n)
}

pub fn staircase_fn(breakpoints: Vec<f64>, levels: Vec<f64>) -> Result<Nonlinearity, NonlinearityError> {
    let n = Nonlinearity::Custom {
        breakpoints,
        levels,
        bias: 0.0,
    };
    n.validate()?;
    Ok(n)
}

#[inline]
fn floor(x: f64) -> f64 {
    libm::floor(x)
}

#[inline]
fn ceil(x: f64) -> f64 {
    libm::ceil(x)
}

/// Grid `{(k + offset)·Δ}` helpers shared by the two uniform quantizers.
#[derive(Clone, Copy)]
struct Grid {
    delta: f64,
    offset: f64,
}

impl Grid {
    fn point(&self, k: f64) -> f64 {
        (k + self.offset) * self.delta
    }

    /// Index `k` of the grid point within snapping distance of `x`.
    fn snapped_index(&self, x: f64) -> Option<f64> {
        let k = libm::round(x / self.delta - self.offset);
        ((x - self.point(k)).abs() <= snap_tol(x)).then_some(k)
    }

    fn points_in(&self, lo: f64, hi: f64) -> Vec<f64> {
        if !(lo <= hi) {
            return Vec::new();
        }
        let k0 = ceil(lo / self.delta - self.offset);
        let k1 = floor(hi / self.delta - self.offset);
        let mut out = Vec::new();
        let mut k = k0;
        while k <= k1 && out.len() < LOCATOR_MAX_POINTS {
            let p = self.point(k);
            if p >= lo && p <= hi {
                out.push(p);
            }
            k += 1.0;
        }
        out
    }

    fn next(&self, x: f64, upward: bool, limit: f64) -> Option<f64> {
        let tol = snap_tol(x);
        if upward {
            let mut k = floor((x + tol) / self.delta - self.offset) + 1.0;
            while self.point(k) <= x + tol {
                k += 1.0;
            }
            let d = self.point(k);
            (d <= limit).then_some(d)
        } else {
            let mut k = ceil((x - tol) / self.delta - self.offset) - 1.0;
            while self.point(k) >= x - tol {
                k -= 1.0;
            }
            let d = self.point(k);
            (d >= limit).then_some(d)
        }
    }
}

/// Limits of `sign(z)·exp(q^s_Δ(ln|z|))` in log space.
mod log_quantizer {
    use super::*;

    pub(super) fn value(delta: f64, z: f64) -> f64 {
        if z == 0.0 {
            return 0.0;
        }
        let q = floor(libm::log(z.abs()) / delta + 0.5) * delta;
        z.signum() * libm::exp(q)
    }

    /// Index `k` with `|z| = exp((k + ½)Δ)` up to relative snapping.
    pub(super) fn snapped_index(delta: f64, z: f64) -> Option<f64> {
        if z == 0.0 {
            return None;
        }
        let m = z.abs();
        let k = libm::round(libm::log(m) / delta - 0.5);
        let p = libm::exp((k + 0.5) * delta);
        ((m - p).abs() <= SNAP_TOLERANCE * m).then_some(k)
    }

    /// `(left, right)` limits at `z`.
    pub(super) fn limits(delta: f64, z: f64) -> (f64, f64) {
        match snapped_index(delta, z) {
            Some(k) => {
                let inner = libm::exp(k * delta);
                let outer = libm::exp((k + 1.0) * delta);
                if z > 0.0 {
                    (inner, outer)
                } else {
                    (-outer, -inner)
                }
            }
            None => {
                let v = value(delta, z);
                (v, v)
            }
        }
    }

    /// Positive discontinuity magnitudes in `[lo, hi]`, `0 < lo`.
    fn magnitudes_in(delta: f64, lo: f64, hi: f64) -> Vec<f64> {
        let lo = lo.max(LOG_LOCATOR_FLOOR);
        if !(lo <= hi) {
            return Vec::new();
        }
        let k0 = ceil(libm::log(lo) / delta - 0.5) - 1.0;
        let k1 = floor(libm::log(hi) / delta - 0.5) + 1.0;
        let mut out = Vec::new();
        let mut k = k0;
        while k <= k1 && out.len() < LOCATOR_MAX_POINTS {
            let p = libm::exp((k + 0.5) * delta);
            if p >= lo && p <= hi {
                out.push(p);
            }
            k += 1.0;
        }
        out
    }

    fn smallest_reported(delta: f64) -> f64 {
        let mut k = ceil(libm::log(LOG_LOCATOR_FLOOR) / delta - 0.5) - 1.0;
        while libm::exp((k + 0.5) * delta) < LOG_LOCATOR_FLOOR {
            k += 1.0;
        }
        libm::exp((k + 0.5) * delta)
    }

    pub(super) fn points_in(delta: f64, lo: f64, hi: f64) -> Vec<f64> {
        if !(lo <= hi) {
            return Vec::new();
        }
        let mut out = Vec::new();
        if lo < 0.0 {
            let neg_hi = (-hi).max(0.0);
            let mut neg: Vec<f64> = magnitudes_in(delta, neg_hi, -lo)
                .into_iter()
                .map(|m| -m)
                .collect();
            neg.reverse();
            out.extend(neg);
        }
        if hi > 0.0 {
            out.extend(magnitudes_in(delta, lo.max(0.0), hi));
        }
        out
    }

    /// Nearest discontinuity beyond `z` in a direction, found in log space.
    pub(super) fn next(delta: f64, z: f64, upward: bool, limit: f64) -> Option<f64> {
        // Moving away from zero on either side walks outward over
        // magnitudes; moving toward zero walks inward and may cross zero.
        let outward = (z > 0.0 && upward) || (z < 0.0 && !upward);
        let sign = if z > 0.0 || (z == 0.0 && upward) { 1.0 } else { -1.0 };
        let m = z.abs();
        let candidate = if z == 0.0 {
            None
        } else if outward {
            let tol = SNAP_TOLERANCE * m;
            let mut k = floor(libm::log(m + tol) / delta - 0.5);
            while libm::exp((k + 0.5) * delta) <= m + tol {
                k += 1.0;
            }
            Some(sign * libm::exp((k + 0.5) * delta))
        } else {
            let tol = SNAP_TOLERANCE * m;
            let mut k = ceil(libm::log(m - tol) / delta - 0.5);
            while libm::exp((k + 0.5) * delta) >= m - tol {
                k -= 1.0;
            }
            let p = libm::exp((k + 0.5) * delta);
            (p >= LOG_LOCATOR_FLOOR).then_some(sign * p)
        };
        let candidate = match candidate {
            Some(c) => Some(c),
            // Inward past the floor, or starting at zero: continue on the
            // other side of the origin.
            None => {
                let other = if upward { 1.0 } else { -1.0 };
                Some(other * smallest_reported(delta))
            }
        };
        candidate.filter(|&d| if upward { d <= limit } else { d >= limit })
    }

    /// `∫₀^z q^l`, using that the cell `[e^{(k−½)Δ}, e^{(k+½)Δ})` with value
    /// `e^{kΔ}` contributes `e^{2kΔ}·2·sinh(Δ/2)`, a geometric series in `k`.
    pub(super) fn primitive(delta: f64, z: f64) -> f64 {
        let m = z.abs();
        if m == 0.0 {
            return 0.0;
        }
        let k = floor(libm::log(m) / delta + 0.5);
        let cell = 2.0 * libm::sinh(0.5 * delta);
        let full = cell * libm::exp(2.0 * (k - 1.0) * delta) / (1.0 - libm::exp(-2.0 * delta));
        let partial = libm::exp(k * delta) * (m - libm::exp((k - 0.5) * delta));
        full + partial
    }
}

impl Nonlinearity {
    pub fn validate(&self) -> Result<(), NonlinearityError> {
        let bias = self.bias();
        if !bias.is_finite() {
            return Err(NonlinearityError::InvalidBias(bias));
        }
        match self {
            Nonlinearity::Symmetric { delta, .. }
            | Nonlinearity::Asymmetric { delta, .. }
            | Nonlinearity::Logarithmic { delta, .. } => QuantizerParams::new(*delta).map(|_| ()),
            Nonlinearity::Sign { scale, .. } | Nonlinearity::Saturation { scale, .. } => {
                if *scale > 0.0 && scale.is_finite() {
                    Ok(())
                } else {
                    Err(NonlinearityError::InvalidScale(*scale))
                }
            }
            Nonlinearity::Custom {
                breakpoints,
                levels,
                ..
            } => {
                if levels.len() != breakpoints.len() + 1 {
                    return Err(NonlinearityError::LevelCount {
                        expected: breakpoints.len() + 1,
                        got: levels.len(),
                    });
                }
                if breakpoints.iter().any(|b| !b.is_finite())
                    || breakpoints.windows(2).any(|w| !(w[0] < w[1]))
                {
                    return Err(NonlinearityError::UnsortedBreakpoints);
                }
                if levels.iter().any(|l| !l.is_finite()) || levels.windows(2).any(|w| !(w[0] <= w[1])) {
                    return Err(NonlinearityError::DecreasingLevels);
                }
                Ok(())
            }
        }
    }

    pub fn bias(&self) -> f64 {
        match self {
            Nonlinearity::Symmetric { bias, .. }
            | Nonlinearity::Asymmetric { bias, .. }
            | Nonlinearity::Logarithmic { bias, .. }
            | Nonlinearity::Sign { bias, .. }
            | Nonlinearity::Saturation { bias, .. }
            | Nonlinearity::Custom { bias, .. } => *bias,
        }
    }

    pub fn with_bias(mut self, b: f64) -> Self {
        match &mut self {
            Nonlinearity::Symmetric { bias, .. }
            | Nonlinearity::Asymmetric { bias, .. }
            | Nonlinearity::Logarithmic { bias, .. }
            | Nonlinearity::Sign { bias, .. }
            | Nonlinearity::Saturation { bias, .. }
            | Nonlinearity::Custom { bias, .. } => *bias = b,
        }
        self
    }

    /// Quantization step, for the three quantizers.
    pub fn delta(&self) -> Option<f64> {
        match self {
            Nonlinearity::Symmetric { delta, .. }
            | Nonlinearity::Asymmetric { delta, .. }
            | Nonlinearity::Logarithmic { delta, .. } => Some(*delta),
            _ => None,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Nonlinearity::Symmetric { .. } => "symmetric",
            Nonlinearity::Asymmetric { .. } => "asymmetric",
            Nonlinearity::Logarithmic { .. } => "logarithmic",
            Nonlinearity::Sign { .. } => "sign",
            Nonlinearity::Saturation { .. } => "saturation",
            Nonlinearity::Custom { .. } => "custom",
        }
    }

    /// Unbiased `(left, right)` limits.
    fn raw_limits(&self, x: f64) -> (f64, f64) {
        match self {
            Nonlinearity::Symmetric { delta, .. } => {
                let g = Grid { delta: *delta, offset: 0.5 };
                match g.snapped_index(x) {
                    Some(k) => (k * delta, (k + 1.0) * delta),
                    None => {
                        let v = floor(x / delta + 0.5) * delta;
                        (v, v)
                    }
                }
            }
            Nonlinearity::Asymmetric { delta, .. } => {
                let g = Grid { delta: *delta, offset: 0.0 };
                match g.snapped_index(x) {
                    Some(k) => ((k - 1.0) * delta, k * delta),
                    None => {
                        let v = floor(x / delta) * delta;
                        (v, v)
                    }
                }
            }
            Nonlinearity::Logarithmic { delta, .. } => log_quantizer::limits(*delta, x),
            Nonlinearity::Sign { scale, .. } => {
                if x.abs() <= SNAP_TOLERANCE {
                    (-scale, *scale)
                } else {
                    let v = scale * x.signum();
                    (v, v)
                }
            }
            Nonlinearity::Saturation { scale, .. } => {
                let v = x.max(-scale).min(*scale);
                (v, v)
            }
            Nonlinearity::Custom {
                breakpoints,
                levels,
                ..
            } => {
                let tol = snap_tol(x);
                let below = breakpoints.partition_point(|&b| b < x - tol);
                let upto = breakpoints.partition_point(|&b| b <= x + tol);
                (levels[below], levels[upto])
            }
        }
    }

    fn raw_evaluate(&self, x: f64) -> f64 {
        match self {
            Nonlinearity::Symmetric { delta, .. } => floor(x / delta + 0.5) * delta,
            Nonlinearity::Asymmetric { delta, .. } => floor(x / delta) * delta,
            Nonlinearity::Logarithmic { delta, .. } => log_quantizer::value(*delta, x),
            Nonlinearity::Sign { scale, .. } => {
                if x == 0.0 {
                    0.0
                } else {
                    scale * x.signum()
                }
            }
            Nonlinearity::Saturation { scale, .. } => x.max(-scale).min(*scale),
            Nonlinearity::Custom {
                breakpoints,
                levels,
                ..
            } => levels[breakpoints.partition_point(|&b| b <= x)],
        }
    }

    fn raw_primitive(&self, x: f64) -> f64 {
        match self {
            Nonlinearity::Symmetric { delta, .. } => {
                // Even function: F(x) = F(|x|). Cell k ≥ 1 covers
                // [(k-½)Δ, (k+½)Δ) at value kΔ.
                let m = x.abs();
                let k = floor(m / delta + 0.5);
                if k < 1.0 {
                    0.0
                } else {
                    delta * delta * k * (k - 1.0) / 2.0 + k * delta * (m - (k - 0.5) * delta)
                }
            }
            Nonlinearity::Asymmetric { delta, .. } => {
                let k = floor(x / delta);
                if x >= 0.0 {
                    delta * delta * k * (k - 1.0) / 2.0 + k * delta * (x - k * delta)
                } else {
                    // ∫ₓ⁰ q = kΔ((k+1)Δ − x) − Δ²k(k+1)/2
                    let back = k * delta * ((k + 1.0) * delta - x) - delta * delta * k * (k + 1.0) / 2.0;
                    -back
                }
            }
            Nonlinearity::Logarithmic { delta, .. } => log_quantizer::primitive(*delta, x),
            Nonlinearity::Sign { scale, .. } => scale * x.abs(),
            Nonlinearity::Saturation { scale, .. } => {
                let m = x.abs();
                if m <= *scale {
                    0.5 * m * m
                } else {
                    scale * m - 0.5 * scale * scale
                }
            }
            Nonlinearity::Custom {
                breakpoints,
                levels,
                ..
            } => staircase_primitive(breakpoints, levels, x),
        }
    }
}

/// `∫₀ˣ` of a right-continuous staircase.
fn staircase_primitive(breakpoints: &[f64], levels: &[f64], x: f64) -> f64 {
    // ∫₀ˣ = G(x) − G(0) with G the integral from the first breakpoint (or
    // from any fixed anchor); done directly by walking the pieces between
    // 0 and x.
    let (a, b, sign) = if x >= 0.0 { (0.0, x, 1.0) } else { (x, 0.0, -1.0) };
    let mut total = 0.0;
    let mut left = a;
    let mut idx = breakpoints.partition_point(|&p| p <= a);
    while left < b {
        let right = breakpoints.get(idx).copied().filter(|&p| p < b).unwrap_or(b);
        total += levels[idx] * (right - left);
        left = right;
        idx += 1;
    }
    sign * total
}

impl MonotoneFn for Nonlinearity {
    fn evaluate(&self, x: f64) -> f64 {
        self.raw_evaluate(x) + self.bias()
    }

    fn left_limit(&self, x: f64) -> f64 {
        self.raw_limits(x).0 + self.bias()
    }

    fn right_limit(&self, x: f64) -> f64 {
        self.raw_limits(x).1 + self.bias()
    }

    fn primitive(&self, x: f64) -> Result<f64, NonlinearityError> {
        Ok(self.raw_primitive(x) + self.bias() * x)
    }

    fn discontinuities(&self, lo: f64, hi: f64) -> Vec<f64> {
        match self {
            Nonlinearity::Symmetric { delta, .. } => Grid { delta: *delta, offset: 0.5 }.points_in(lo, hi),
            Nonlinearity::Asymmetric { delta, .. } => Grid { delta: *delta, offset: 0.0 }.points_in(lo, hi),
            Nonlinearity::Logarithmic { delta, .. } => log_quantizer::points_in(*delta, lo, hi),
            Nonlinearity::Sign { .. } => {
                if lo <= 0.0 && 0.0 <= hi {
                    alloc::vec![0.0]
                } else {
                    Vec::new()
                }
            }
            Nonlinearity::Saturation { .. } => Vec::new(),
            Nonlinearity::Custom {
                breakpoints,
                levels,
                ..
            } => breakpoints
                .iter()
                .enumerate()
                .filter(|&(k, &b)| b >= lo && b <= hi && levels[k] < levels[k + 1])
                .map(|(_, &b)| b)
                .collect(),
        }
    }

    fn has_locator(&self) -> bool {
        true
    }

    fn next_discontinuity(&self, x: f64, upward: bool, limit: f64) -> Option<f64> {
        match self {
            Nonlinearity::Symmetric { delta, .. } => Grid { delta: *delta, offset: 0.5 }.next(x, upward, limit),
            Nonlinearity::Asymmetric { delta, .. } => Grid { delta: *delta, offset: 0.0 }.next(x, upward, limit),
            Nonlinearity::Logarithmic { delta, .. } => log_quantizer::next(*delta, x, upward, limit),
            Nonlinearity::Sign { .. } => {
                let d = 0.0;
                let beyond = if upward {
                    d > x + SNAP_TOLERANCE && d <= limit
                } else {
                    d < x - SNAP_TOLERANCE && d >= limit
                };
                beyond.then_some(d)
            }
            Nonlinearity::Saturation { .. } => None,
            Nonlinearity::Custom { .. } => {
                let tol = snap_tol(x);
                if upward {
                    self.discontinuities(x, limit).into_iter().find(|&d| d > x + tol)
                } else {
                    self.discontinuities(limit, x).into_iter().rev().find(|&d| d < x - tol)
                }
            }
        }
    }

    fn descriptor(&self) -> Option<Nonlinearity> {
        Some(self.clone())
    }
}

const QUAD_TOL: f64 = 1e-10;
const QUAD_MAX_DEPTH: u32 = 60;

fn simpson<F: MonotoneFn + ?Sized>(f: &F, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
    let m = 0.5 * (a + b);
    let fm = f.evaluate(m);
    ((b - a) / 6.0 * (fa + 4.0 * fm + fb), m, fm)
}

#[allow(clippy::too_many_arguments)]
fn adaptive<F: MonotoneFn + ?Sized>(
    f: &F,
    a: f64,
    fa: f64,
    b: f64,
    fb: f64,
    whole: f64,
    m: f64,
    fm: f64,
    tol: f64,
    depth: u32,
) -> Result<f64, ()> {
    let (left, lm, flm) = simpson(f, a, fa, m, fm);
    let (right, rm, frm) = simpson(f, m, fm, b, fb);
    let delta = left + right - whole;
    if delta.abs() <= 15.0 * tol || (b - a).abs() <= 1e-15 * a.abs().max(1.0) {
        return Ok(left + right + delta / 15.0);
    }
    if depth == 0 {
        return Err(());
    }
    Ok(adaptive(f, a, fa, m, fm, left, lm, flm, 0.5 * tol, depth - 1)?
        + adaptive(f, m, fm, b, fb, right, rm, frm, 0.5 * tol, depth - 1)?)
}

fn integrate_piece<F: MonotoneFn + ?Sized>(f: &F, a: f64, b: f64, tol: f64) -> Result<f64, ()> {
    if a == b {
        return Ok(0.0);
    }
    // Sample just inside the ends so a jump at an endpoint does not bias
    // the rule.
    let fa = f.right_limit(a);
    let fb = f.left_limit(b);
    let (whole, m, fm) = simpson(f, a, fa, b, fb);
    adaptive(f, a, fa, b, fb, whole, m, fm, tol, QUAD_MAX_DEPTH)
}

/// Adaptive Simpson for `∫₀ˣ f`, split at located discontinuities.
pub fn quadrature_primitive<F: MonotoneFn + ?Sized>(f: &F, x: f64) -> Result<f64, NonlinearityError> {
    if !x.is_finite() {
        return Err(NonlinearityError::QuadratureFailure(x));
    }
    let (a, b, sign) = if x >= 0.0 { (0.0, x, 1.0) } else { (x, 0.0, -1.0) };
    let mut cuts = alloc::vec![a];
    cuts.extend(f.discontinuities(a, b).into_iter().filter(|&d| d > a && d < b));
    cuts.push(b);
    let pieces = (cuts.len() - 1).max(1) as f64;
    let mut total = 0.0;
    for w in cuts.windows(2) {
        total += integrate_piece(f, w[0], w[1], QUAD_TOL / pieces)
            .map_err(|_| NonlinearityError::QuadratureFailure(x))?;
    }
    Ok(sign * total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn qs(delta: f64) -> Nonlinearity {
        quantizer_symmetric(QuantizerParams::new(delta).unwrap())
    }
    fn qa(delta: f64) -> Nonlinearity {
        quantizer_asymmetric(QuantizerParams::new(delta).unwrap())
    }
    fn ql(delta: f64) -> Nonlinearity {
        quantizer_logarithmic(QuantizerParams::new(delta).unwrap())
    }

    #[test]
    fn filippov_interval_examples() {
        let q = qs(1.0);
        assert_eq!(filippov_interval(&q, 0.5), FilippovInterval { lo: 0.0, hi: 1.0 });
        assert_eq!(filippov_interval(&q, 0.3), FilippovInterval::point(0.0));
        let s = sign_fn(1.0).unwrap();
        assert_eq!(filippov_interval(&s, 0.0), FilippovInterval { lo: -1.0, hi: 1.0 });
    }

    #[test]
    fn symmetric_quantizer_values() {
        assert_eq!(qs(1.0).evaluate(0.4), 0.0);
        assert_eq!(qs(1.0).evaluate(1.6), 2.0);
        assert_eq!(qs(0.5).evaluate(0.3), 0.5);
    }

    #[test]
    fn asymmetric_quantizer_values() {
        assert_eq!(qa(1.0).evaluate(1.7), 1.0);
        assert_eq!(qa(1.0).evaluate(-0.3), -1.0);
        assert_eq!(qa(2.0).evaluate(3.9), 2.0);
        assert_eq!(filippov_interval(&qa(1.0), 0.0), FilippovInterval { lo: -1.0, hi: 0.0 });
    }

    #[test]
    fn logarithmic_quantizer_values() {
        let q = ql(1.0);
        assert_eq!(q.evaluate(0.0), 0.0);
        let z = libm::exp(1.2);
        // By hand: ln z = 1.2, ⌊1.2 + ½⌋ = 1, so the value is e.
        let brute = libm::exp(libm::floor(libm::log(z) + 0.5));
        assert!((q.evaluate(z) - core::f64::consts::E).abs() < 1e-12);
        assert_eq!(q.evaluate(z), brute);
        assert!((q.evaluate(-z) + core::f64::consts::E).abs() < 1e-12);
    }

    #[test]
    fn log_quantizer_limits_at_boundary() {
        let q = ql(1.0);
        let p = libm::exp(0.5);
        let i = filippov_interval(&q, p);
        assert!((i.lo - 1.0).abs() < 1e-12 && (i.hi - core::f64::consts::E).abs() < 1e-12);
        let i = filippov_interval(&q, -p);
        assert!((i.lo + core::f64::consts::E).abs() < 1e-12 && (i.hi + 1.0).abs() < 1e-12);
        assert_eq!(filippov_interval(&q, 0.0), FilippovInterval::point(0.0));
    }

    #[test]
    fn sign_fn_examples() {
        let s = sign_fn(1.0).unwrap();
        assert_eq!(s.evaluate(2.5), 1.0);
        assert_eq!(s.evaluate(0.0), 0.0);
        let s3 = sign_fn(3.0).unwrap();
        assert_eq!(filippov_interval(&s3, 0.0), FilippovInterval { lo: -3.0, hi: 3.0 });
        assert_eq!(s.primitive(-2.0).unwrap(), 2.0);
        assert!(sign_fn(0.0).is_err());
    }

    #[test]
    fn intersect_examples() {
        let iv = |lo, hi| FilippovInterval { lo, hi };
        assert_eq!(intersect_intervals(&[iv(0.0, 1.0), iv(1.0, 2.0)]).unwrap(), Some(iv(1.0, 1.0)));
        assert_eq!(intersect_intervals(&[iv(0.0, 1.0), iv(2.0, 3.0)]).unwrap(), None);
        let list = [iv(0.0, 2.0), iv(1.0, 3.0), iv(1.5, 1.8)];
        // Grid oracle: a value a is admissible iff it lies in all three.
        let admissible: Vec<f64> = (0..=3000)
            .map(|k| k as f64 * 1e-3)
            .filter(|a| list.iter().all(|i| i.contains(*a)))
            .collect();
        let got = intersect_intervals(&list).unwrap().unwrap();
        assert!((got.lo - admissible[0]).abs() < 1e-9);
        assert!((got.hi - admissible[admissible.len() - 1]).abs() < 1e-9);
        assert_eq!(got, iv(1.5, 1.8));
        assert_eq!(intersect_intervals(&[]), Err(NonlinearityError::EmptyList));
    }

    #[test]
    fn primitive_examples() {
        assert_eq!(qs(1.0).primitive(0.4).unwrap(), 0.0);
        assert!((qs(1.0).primitive(1.0).unwrap() - 0.5).abs() < 1e-15);
        // cross-check against quadrature
        let quad = quadrature_primitive(&qs(1.0), 1.0).unwrap();
        assert!((quad - 0.5).abs() < 1e-9, "{quad}");
    }

    #[test]
    fn closed_form_primitives_match_quadrature() {
        let fns = [
            qs(1.0),
            qs(0.3),
            qa(1.0),
            qa(0.7),
            ql(1.0),
            ql(0.4),
            sign_fn(2.0).unwrap(),
            saturation_fn(1.5).unwrap(),
            staircase_fn(vec![-1.0, 0.5, 2.0], vec![-2.0, -0.5, 1.0, 3.0]).unwrap(),
            qs(1.0).with_bias(0.25),
        ];
        for f in &fns {
            for &x in &[-7.3, -2.0, -0.61, -0.1, 0.0, 0.2, 0.5, 1.0, 2.49, 6.1] {
                let exact = f.primitive(x).unwrap();
                let quad = quadrature_primitive(f, x).unwrap();
                assert!((exact - quad).abs() < 1e-8, "{f:?} at {x}: {exact} vs {quad}");
            }
        }
    }

    #[test]
    fn locators_and_next_discontinuity() {
        let q = qs(1.0);
        assert_eq!(q.discontinuities(-1.0, 1.6), vec![-0.5, 0.5, 1.5]);
        assert_eq!(q.next_discontinuity(0.2, true, 10.0), Some(0.5));
        assert_eq!(q.next_discontinuity(0.5, true, 10.0), Some(1.5));
        assert_eq!(q.next_discontinuity(0.5, false, -10.0), Some(-0.5));
        assert_eq!(q.next_discontinuity(0.2, true, 0.4), None);
        let a = qa(1.0);
        assert_eq!(a.next_discontinuity(0.0, false, -5.0), Some(-1.0));
        let s = sign_fn(1.0).unwrap();
        assert_eq!(s.next_discontinuity(-1.0, true, 1.0), Some(0.0));
        assert_eq!(s.next_discontinuity(0.0, true, 1.0), None);
        let l = ql(1.0);
        let up = l.next_discontinuity(1.0, true, 100.0).unwrap();
        assert!((up - libm::exp(0.5)).abs() < 1e-12);
        let down = l.next_discontinuity(1.0, false, -100.0).unwrap();
        assert!((down - libm::exp(-0.5)).abs() < 1e-12);
        let neg = l.next_discontinuity(-1.0, true, 100.0).unwrap();
        assert!((neg + libm::exp(-0.5)).abs() < 1e-12);
        let pts = l.discontinuities(-2.0, 2.0);
        assert!(pts.windows(2).all(|w| w[0] < w[1]));
        assert!(pts.iter().all(|p| p.abs() >= LOG_LOCATOR_FLOOR));
    }

    #[test]
    fn staircase_limits() {
        let f = staircase_fn(vec![0.0, 1.0], vec![-1.0, 0.5, 2.0]).unwrap();
        assert_eq!(f.evaluate(0.0), 0.5);
        assert_eq!(filippov_interval(&f, 0.0), FilippovInterval { lo: -1.0, hi: 0.5 });
        assert_eq!(filippov_interval(&f, 0.4), FilippovInterval::point(0.5));
        assert!(staircase_fn(vec![1.0, 0.0], vec![0.0, 1.0, 2.0]).is_err());
        assert!(staircase_fn(vec![0.0], vec![1.0, 0.0]).is_err());
        assert!(staircase_fn(vec![0.0], vec![1.0]).is_err());
    }

    #[test]
    fn snapped_interval_covers_neighbourhood() {
        let q = qs(1.0);
        let i = filippov_interval_snapped(&q, 0.5 + 5e-10, 1e-9);
        assert_eq!(i, FilippovInterval { lo: 0.0, hi: 1.0 });
        let j = filippov_interval_snapped(&q, 0.5 + 5e-9, 1e-9);
        assert_eq!(j, FilippovInterval::point(1.0));
    }

    #[test]
    fn sign_condition_probe() {
        assert!(satisfies_sign_condition(&qs(1.0), SIGN_CONDITION_PROBE));
        assert!(satisfies_sign_condition(&ql(1.0), SIGN_CONDITION_PROBE));
        let flat = staircase_fn(vec![0.0], vec![0.0, 1.0]).unwrap();
        assert!(!satisfies_sign_condition(&flat, SIGN_CONDITION_PROBE));
    }

    #[derive(Debug)]
    struct BlackBoxCube;
    impl MonotoneFn for BlackBoxCube {
        fn evaluate(&self, x: f64) -> f64 {
            x * x * x
        }
    }

    #[test]
    fn user_function_primitive_uses_quadrature() {
        let f = BlackBoxCube;
        let got = primitive_value(&f, 2.0).unwrap();
        assert!((got - 4.0).abs() < 1e-9);
        assert!(f.primitive(f64::NAN).is_err());
        assert!(!f.has_locator());
        assert!(f.descriptor().is_none());
    }
}
