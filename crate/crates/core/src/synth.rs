//! Synthetic labelled event streams.
//!
//! A scene is a set of actors, each an independent Poisson event source
//! with its own counter-based RNG stream, merged by timestamp:
//!
//! * vessels: rectangles in constant linear motion emitting uniformly over
//!   their footprint;
//! * wave fields: short-lived disc blobs born at random inside a region,
//!   re-randomising their heading every `redirect_us`;
//! * noise: uniform shot noise over a region;
//! * hot pixels: single pixels firing at a fixed rate.
//!
//! Scenes are written as TOML: top-level `width`, `height`, `duration_us`,
//! `frame_interval_us`, then `[[vessel]]`, `[[wave]]`, `[[noise]]` and
//! `[[hot_pixel]]` tables.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::f64::consts::TAU;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::event::{Event, Micros};
use crate::io::{GroundTruthBox, Rect};
use crate::params::{DEFAULT_SENSOR_HEIGHT, DEFAULT_SENSOR_WIDTH};

fn default_width() -> u16 {
    DEFAULT_SENSOR_WIDTH
}
fn default_height() -> u16 {
    DEFAULT_SENSOR_HEIGHT
}
fn default_frame_interval() -> Micros {
    100_000
}
fn default_redirect() -> Micros {
    500_000
}
fn default_label() -> String {
    "vessel".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    #[serde(default = "default_width")]
    pub width: u16,
    #[serde(default = "default_height")]
    pub height: u16,
    pub duration_us: Micros,
    /// Annotation frame spacing.
    #[serde(default = "default_frame_interval")]
    pub frame_interval_us: Micros,
    #[serde(default, rename = "vessel")]
    pub vessels: Vec<VesselSpec>,
    #[serde(default, rename = "wave")]
    pub waves: Vec<WaveFieldSpec>,
    #[serde(default)]
    pub noise: Vec<NoiseSpec>,
    #[serde(default, rename = "hot_pixel")]
    pub hot_pixels: Vec<HotPixelSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VesselSpec {
    /// Footprint center at `start_us` (pixels).
    pub x: f64,
    pub y: f64,
    /// Velocity (pixels/second).
    pub vx: f64,
    pub vy: f64,
    /// Footprint size (pixels).
    pub length: f64,
    pub height: f64,
    /// Events per footprint pixel per second.
    pub rate: f64,
    #[serde(default)]
    pub start_us: Micros,
    #[serde(default = "default_label")]
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaveFieldSpec {
    pub xmin: f64,
    pub ymin: f64,
    pub xmax: f64,
    pub ymax: f64,
    /// New blobs per second.
    pub birth_rate: f64,
    pub lifetime_us: Micros,
    pub radius: f64,
    /// Events per blob pixel per second.
    pub rate: f64,
    /// Blob speed (pixels/second).
    pub speed: f64,
    #[serde(default = "default_redirect")]
    pub redirect_us: Micros,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    /// Events per pixel per second.
    pub rate: f64,
    /// Inclusive pixel region; the whole sensor when omitted.
    #[serde(default)]
    pub xmin: Option<u16>,
    #[serde(default)]
    pub ymin: Option<u16>,
    #[serde(default)]
    pub xmax: Option<u16>,
    #[serde(default)]
    pub ymax: Option<u16>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HotPixelSpec {
    pub x: u16,
    pub y: u16,
    /// Events per second.
    pub rate: f64,
}

impl NoiseSpec {
    fn region(&self, width: u16, height: u16) -> (u16, u16, u16, u16) {
        (
            self.xmin.unwrap_or(0),
            self.ymin.unwrap_or(0),
            self.xmax.unwrap_or(width - 1),
            self.ymax.unwrap_or(height - 1),
        )
    }
}

impl VesselSpec {
    /// Footprint center at time `t`.
    pub fn center_at(&self, t: Micros) -> (f64, f64) {
        let secs = t.saturating_sub(self.start_us) as f64 / 1e6;
        (self.x + self.vx * secs, self.y + self.vy * secs)
    }

    /// Inclusive pixel rectangle covered by the footprint at `t`, unclipped.
    pub fn rect_at(&self, t: Micros) -> Rect {
        let (cx, cy) = self.center_at(t);
        let (hl, hh) = (self.length / 2.0, self.height / 2.0);
        Rect::new(
            (cx - hl).floor() as i32,
            (cy - hh).floor() as i32,
            ((cx + hl).ceil() as i32 - 1).max((cx - hl).floor() as i32),
            ((cy + hh).ceil() as i32 - 1).max((cy - hh).floor() as i32),
        )
    }
}

impl SceneSpec {
    pub fn from_config_str(text: &str) -> Result<Self> {
        let spec: SceneSpec = toml::from_str(text).map_err(|e| Error::InvalidScene(e.message().to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_config_file(path: &Path) -> Result<Self> {
        Self::from_config_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_config_string(&self) -> String {
        toml::to_string(self).expect("scene serializes to toml")
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::InvalidScene(m));
        if self.width == 0 || self.height == 0 {
            return fail("sensor dimensions must be positive".into());
        }
        if self.duration_us == 0 || self.frame_interval_us == 0 {
            return fail("duration_us and frame_interval_us must be positive".into());
        }
        let (w, h) = (self.width as f64, self.height as f64);
        let inside = |x: f64, y: f64| x >= 0.0 && y >= 0.0 && x < w && y < h;
        let rate_ok = |r: f64| r.is_finite() && r >= 0.0;
        for (i, v) in self.vessels.iter().enumerate() {
            if !inside(v.x, v.y) {
                return fail(format!("vessel {i} starts outside the sensor"));
            }
            if !(v.length > 0.0 && v.height > 0.0 && v.length.is_finite() && v.height.is_finite()) {
                return fail(format!("vessel {i} needs a positive size"));
            }
            if !rate_ok(v.rate) || !v.vx.is_finite() || !v.vy.is_finite() {
                return fail(format!("vessel {i} has an invalid rate or velocity"));
            }
            if v.label.contains([',', '\n', '\r']) {
                return fail(format!("vessel {i} label contains a separator"));
            }
        }
        for (i, f) in self.waves.iter().enumerate() {
            if !(inside(f.xmin, f.ymin) && inside(f.xmax, f.ymax) && f.xmin <= f.xmax && f.ymin <= f.ymax) {
                return fail(format!("wave field {i} region is outside the sensor"));
            }
            if !rate_ok(f.birth_rate) || !rate_ok(f.rate) || !rate_ok(f.speed) || !(f.radius > 0.0) {
                return fail(format!("wave field {i} has an invalid rate, speed or radius"));
            }
            if f.lifetime_us == 0 || f.redirect_us == 0 {
                return fail(format!("wave field {i} needs positive lifetime_us and redirect_us"));
            }
        }
        for (i, n) in self.noise.iter().enumerate() {
            let (x0, y0, x1, y1) = n.region(self.width, self.height);
            if x1 >= self.width || y1 >= self.height || x0 > x1 || y0 > y1 {
                return fail(format!("noise {i} region is outside the sensor"));
            }
            if !rate_ok(n.rate) {
                return fail(format!("noise {i} has an invalid rate"));
            }
        }
        for (i, p) in self.hot_pixels.iter().enumerate() {
            if p.x >= self.width || p.y >= self.height {
                return fail(format!("hot pixel {i} is outside the sensor"));
            }
            if !rate_ok(p.rate) {
                return fail(format!("hot pixel {i} has an invalid rate"));
            }
        }
        Ok(())
    }

    /// Ground-truth vessel boxes at every frame, clipped to the sensor.
    /// Boxes less than half visible are marked difficult.
    pub fn annotations(&self) -> Vec<GroundTruthBox> {
        let mut out = Vec::new();
        let mut t = self.frame_interval_us;
        while t <= self.duration_us {
            for v in &self.vessels {
                if t < v.start_us {
                    continue;
                }
                let r = v.rect_at(t);
                let clipped = Rect::new(
                    r.min_x.max(0),
                    r.min_y.max(0),
                    r.max_x.min(self.width as i32 - 1),
                    r.max_y.min(self.height as i32 - 1),
                );
                if clipped.min_x > clipped.max_x || clipped.min_y > clipped.max_y {
                    continue;
                }
                let area = |r: &Rect| ((r.max_x - r.min_x + 1) * (r.max_y - r.min_y + 1)) as i64;
                out.push(GroundTruthBox {
                    frame_t: t,
                    rect: clipped,
                    label: v.label.clone(),
                    difficult: 2 * area(&clipped) < area(&r),
                });
            }
            t += self.frame_interval_us;
        }
        out
    }

    /// Lazily generated, timestamp-ordered event stream.
    pub fn events(&self, seed: u64) -> Result<EventStream> {
        self.validate()?;
        EventStream::new(self, seed)
    }

    /// Events and annotations in memory.
    pub fn generate(&self, seed: u64) -> Result<(Vec<Event>, Vec<GroundTruthBox>)> {
        Ok((self.events(seed)?.collect(), self.annotations()))
    }
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone)]
enum Shape {
    Vessel(VesselSpec),
    Blob {
        /// Segment start time, start position and velocity (px/µs).
        path: Vec<(f64, (f64, f64), (f64, f64))>,
        region: (f64, f64, f64, f64),
        radius: f64,
    },
    Region(u16, u16, u16, u16),
    Pixel(u16, u16),
}

/// One Poisson source.
#[derive(Debug, Clone)]
struct Actor {
    rng: ChaCha8Rng,
    shape: Shape,
    gap: Option<Exp<f64>>,
    /// Current time in µs.
    clock: f64,
    end: f64,
}

impl Actor {
    fn new(rng: ChaCha8Rng, shape: Shape, total_rate_hz: f64, start: f64, end: f64) -> Self {
        let gap = (total_rate_hz > 0.0).then(|| Exp::new(total_rate_hz / 1e6).expect("positive rate"));
        Self {
            rng,
            shape,
            gap,
            clock: start,
            end,
        }
    }

    fn next_event(&mut self, width: u16, height: u16) -> Option<Event> {
        let gap = self.gap?;
        loop {
            self.clock += gap.sample(&mut self.rng);
            if self.clock >= self.end {
                self.gap = None;
                return None;
            }
            let t = self.clock;
            let (x, y) = match &self.shape {
                Shape::Vessel(v) => {
                    let secs = (t - v.start_us as f64) / 1e6;
                    let cx = v.x + v.vx * secs;
                    let cy = v.y + v.vy * secs;
                    let px = cx + (self.rng.random::<f64>() - 0.5) * v.length;
                    let py = cy + (self.rng.random::<f64>() - 0.5) * v.height;
                    (px.floor(), py.floor())
                }
                Shape::Blob { path, region, radius } => {
                    let (cx, cy) = blob_center(path, *region, t);
                    let r = radius * self.rng.random::<f64>().sqrt();
                    let a = TAU * self.rng.random::<f64>();
                    ((cx + r * a.cos()).floor(), (cy + r * a.sin()).floor())
                }
                Shape::Region(x0, y0, x1, y1) => (
                    self.rng.random_range(*x0..=*x1) as f64,
                    self.rng.random_range(*y0..=*y1) as f64,
                ),
                Shape::Pixel(x, y) => (*x as f64, *y as f64),
            };
            let polarity = self.rng.random::<bool>();
            if x < 0.0 || y < 0.0 || x >= width as f64 || y >= height as f64 {
                continue;
            }
            return Some(Event::new(t as Micros, x as u16, y as u16, polarity));
        }
    }
}

fn blob_center(path: &[(f64, (f64, f64), (f64, f64))], region: (f64, f64, f64, f64), t: f64) -> (f64, f64) {
    let i = path.partition_point(|s| s.0 <= t).saturating_sub(1);
    let (t0, (x, y), (vx, vy)) = path[i];
    let dt = t - t0;
    (
        (x + vx * dt).clamp(region.0, region.2),
        (y + vy * dt).clamp(region.1, region.3),
    )
}

/// Builds the piecewise-linear path of one blob: a fresh random heading
/// every `redirect` µs, reflected off the region edges.
fn blob_path(
    rng: &mut ChaCha8Rng,
    field: &WaveFieldSpec,
    birth: f64,
    death: f64,
) -> Vec<(f64, (f64, f64), (f64, f64))> {
    let region = (field.xmin, field.ymin, field.xmax, field.ymax);
    let mut pos = (
        rng.random_range(field.xmin..=field.xmax),
        rng.random_range(field.ymin..=field.ymax),
    );
    let speed = field.speed / 1e6;
    let mut path = Vec::new();
    let mut t = birth;
    while t < death {
        let a = TAU * rng.random::<f64>();
        let mut vel = (speed * a.cos(), speed * a.sin());
        let dt = (field.redirect_us as f64).min(death - t);
        let end = (pos.0 + vel.0 * dt, pos.1 + vel.1 * dt);
        if end.0 < region.0 || end.0 > region.2 {
            vel.0 = -vel.0;
        }
        if end.1 < region.1 || end.1 > region.3 {
            vel.1 = -vel.1;
        }
        path.push((t, pos, vel));
        pos = (
            (pos.0 + vel.0 * dt).clamp(region.0, region.2),
            (pos.1 + vel.1 * dt).clamp(region.1, region.3),
        );
        t += dt;
    }
    path
}

/// Merged output of all actors of a scene.
pub struct EventStream {
    actors: Vec<Actor>,
    heap: BinaryHeap<Reverse<(Micros, usize, u16, u16, bool)>>,
    width: u16,
    height: u16,
}

impl EventStream {
    fn new(spec: &SceneSpec, seed: u64) -> Result<Self> {
        let end = spec.duration_us as f64;
        let mut actors = Vec::new();
        let mut stream = 0u64;
        let mut next_rng = || {
            stream += 1;
            rng_for(seed, stream)
        };
        for v in &spec.vessels {
            let rate = v.rate * v.length * v.height;
            actors.push(Actor::new(next_rng(), Shape::Vessel(v.clone()), rate, v.start_us as f64, end));
        }
        for n in &spec.noise {
            let (x0, y0, x1, y1) = n.region(spec.width, spec.height);
            let area = (x1 - x0 + 1) as f64 * (y1 - y0 + 1) as f64;
            actors.push(Actor::new(next_rng(), Shape::Region(x0, y0, x1, y1), n.rate * area, 0.0, end));
        }
        for p in &spec.hot_pixels {
            actors.push(Actor::new(next_rng(), Shape::Pixel(p.x, p.y), p.rate, 0.0, end));
        }
        for field in &spec.waves {
            let mut rng = next_rng();
            let mut births = Vec::new();
            if field.birth_rate > 0.0 {
                let gap = Exp::new(field.birth_rate / 1e6).expect("positive rate");
                let mut t = 0.0;
                loop {
                    t += gap.sample(&mut rng);
                    if t >= end {
                        break;
                    }
                    births.push(t);
                }
            }
            let blob_rate = field.rate * std::f64::consts::PI * field.radius * field.radius;
            for birth in births {
                let death = (birth + field.lifetime_us as f64).min(end);
                let path = blob_path(&mut rng, field, birth, death);
                let shape = Shape::Blob {
                    path,
                    region: (field.xmin, field.ymin, field.xmax, field.ymax),
                    radius: field.radius,
                };
                actors.push(Actor::new(next_rng(), shape, blob_rate, birth, death));
            }
        }
        let mut s = Self {
            heap: BinaryHeap::with_capacity(actors.len()),
            actors,
            width: spec.width,
            height: spec.height,
        };
        for i in 0..s.actors.len() {
            s.refill(i);
        }
        Ok(s)
    }

    fn refill(&mut self, i: usize) {
        if let Some(e) = self.actors[i].next_event(self.width, self.height) {
            self.heap.push(Reverse((e.t, i, e.x, e.y, e.polarity)));
        }
    }

    pub fn dims(&self) -> (u16, u16) {
        (self.width, self.height)
    }
}

impl Iterator for EventStream {
    type Item = Event;

    fn next(&mut self) -> Option<Event> {
        let Reverse((t, i, x, y, p)) = self.heap.pop()?;
        self.refill(i);
        Some(Event::new(t, x, y, p))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_vessel() -> SceneSpec {
        SceneSpec::from_config_str(
            r#"
            duration_us = 10000000
            [[vessel]]
            x = 40.0
            y = 100.0
            vx = 25.0
            vy = -2.0
            length = 20.0
            height = 8.0
            rate = 10.0
            "#,
        )
        .unwrap()
    }

    #[test]
    fn vessel_events_stay_inside_swept_box() {
        let spec = one_vessel();
        let v = &spec.vessels[0];
        let mut n = 0;
        for e in spec.events(3).unwrap() {
            let r = v.rect_at(e.t);
            assert!(
                (e.x as i32) >= r.min_x - 1 && (e.x as i32) <= r.max_x + 1,
                "{e:?} outside {r:?}"
            );
            assert!((e.y as i32) >= r.min_y - 1 && (e.y as i32) <= r.max_y + 1);
            n += 1;
        }
        // 10 s * 160 px * 10 Hz
        assert!((14_000..18_000).contains(&n), "{n}");
    }

    #[test]
    fn same_seed_same_stream() {
        let mut spec = one_vessel();
        spec.noise.push(NoiseSpec { rate: 0.5, xmin: None, ymin: None, xmax: None, ymax: None });
        spec.waves.push(WaveFieldSpec {
            xmin: 10.0, ymin: 150.0, xmax: 300.0, ymax: 250.0,
            birth_rate: 2.0, lifetime_us: 2_000_000, radius: 5.0, rate: 20.0, speed: 30.0, redirect_us: 500_000,
        });
        let a: Vec<_> = spec.events(11).unwrap().collect();
        let b: Vec<_> = spec.events(11).unwrap().collect();
        let c: Vec<_> = spec.events(12).unwrap().collect();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.windows(2).all(|w| w[0].t <= w[1].t));
    }

    #[test]
    fn actor_outside_sensor_is_rejected() {
        let mut spec = one_vessel();
        spec.vessels[0].x = 400.0;
        assert!(matches!(spec.validate(), Err(Error::InvalidScene(_))));
        let mut spec = one_vessel();
        spec.hot_pixels.push(HotPixelSpec { x: 0, y: 260, rate: 1.0 });
        assert!(spec.validate().is_err());
        assert!(SceneSpec::from_config_str("duration_us = 0").is_err());
    }

    #[test]
    fn annotations_follow_the_vessel() {
        let spec = one_vessel();
        let boxes = spec.annotations();
        assert_eq!(boxes.len(), 100);
        let first = &boxes[0];
        assert_eq!(first.frame_t, 100_000);
        // center (42.5, 99.8), 20 x 8
        assert_eq!(first.rect, Rect::new(32, 95, 52, 103));
        assert!(boxes.iter().all(|b| !b.difficult));
    }

    #[test]
    fn config_round_trip() {
        let spec = one_vessel();
        assert_eq!(SceneSpec::from_config_str(&spec.to_config_string()).unwrap(), spec);
    }
}
