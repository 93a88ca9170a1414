//! Motion-stability scoring.
//!
//! Each scored tick adds the difference ratio `|v| / (|v − u| + ε)` to the
//! track's stability and subtracts `c_a` times the angle ratio
//! `½(1 − cos∠(v, u))`. Confidence is `1 − e^(−s)`, clamped to `[0, 1]`.

use crate::buffer::ClusterId;
use crate::event::{BBox, Micros};
use crate::scalar::{Scalar, Vec2};
use crate::tracker::{TrackState, Velocities};

/// Output record for one tracked cluster at one tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection<F> {
    pub t: Micros,
    pub cluster: ClusterId,
    pub centroid: Vec2<F>,
    pub bbox: BBox,
    /// Long-term velocity (px/s).
    pub long_velocity: Vec2<F>,
    /// Short-term velocity (px/s).
    pub short_velocity: Vec2<F>,
    pub stability: F,
    pub confidence: F,
}

/// Grows as the two velocities agree; zero for a motionless track.
#[inline]
pub fn difference_ratio<F: Scalar>(long: Vec2<F>, short: Vec2<F>, epsilon: F) -> F {
    long.norm() / ((long - short).norm() + epsilon)
}

/// Directional disagreement in `[0, 1]`: 0 for parallel, 1 for
/// anti-parallel. Returns the neutral 0.5 when either vector is shorter
/// than `min_norm`, where the direction is undefined.
#[inline]
pub fn angle_ratio<F: Scalar>(long: Vec2<F>, short: Vec2<F>, min_norm: F) -> F {
    let (nl, ns) = (long.norm(), short.norm());
    let half = F::of(0.5);
    if !(nl >= min_norm && ns >= min_norm) || !nl.is_finite() || !ns.is_finite() {
        return half;
    }
    // normalising first keeps the dot product finite for huge inputs
    let cos = (long / nl).dot(short / ns);
    let cos = cos.max(-F::one()).min(F::one());
    half * (F::one() - cos)
}

/// One step of the stability recurrence.
#[inline]
pub fn next_stability<F: Scalar>(previous: F, difference: F, angle: F, angle_scale: F) -> F {
    previous + difference - angle_scale * angle
}

/// Applies one scored tick to `track` and returns the new stability. The
/// stability of an unscored track is zero.
pub fn update_stability<F: Scalar>(track: &mut TrackState<F>, difference: F, angle: F, angle_scale: F) -> F {
    track.stability = next_stability(track.stability, difference, angle, angle_scale);
    track.ticks += 1;
    track.stability
}

/// `1 − e^(−s)` clamped to `[0, 1]`.
#[inline]
pub fn confidence<F: Scalar>(stability: F) -> F {
    let w = F::one() - (-stability).exp();
    if w.is_nan() {
        return F::zero();
    }
    w.max(F::zero()).min(F::one())
}

/// Scoring constants converted to the working scalar.
#[derive(Debug, Clone, Copy)]
pub struct ScoreParams<F> {
    pub epsilon: F,
    pub angle_scale: F,
}

impl<F: Scalar> ScoreParams<F> {
    pub fn new(epsilon: f64, angle_scale: f64) -> Self {
        Self {
            epsilon: F::of(epsilon),
            angle_scale: F::of(angle_scale),
        }
    }
}

/// Scores a track whose velocities are defined; returns the new confidence.
pub fn score<F: Scalar>(track: &mut TrackState<F>, velocities: Velocities<F>, params: ScoreParams<F>) -> F {
    let r = difference_ratio(velocities.long, velocities.short, params.epsilon);
    let ra = angle_ratio(velocities.long, velocities.short, params.epsilon);
    confidence(update_stability(track, r, ra, params.angle_scale))
}
