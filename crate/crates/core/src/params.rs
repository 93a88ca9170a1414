//! Pipeline parameters.
//!
//! Defaults match a 346x260 sensor watching vessels roughly 30 pixels
//! across. A flat `key = value` config file can override any field; see
//! [`Params::from_config_str`].

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_SENSOR_WIDTH: u16 = 346;
pub const DEFAULT_SENSOR_HEIGHT: u16 = 260;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    pub sensor_width: u16,
    pub sensor_height: u16,
    /// Horizontal partition count.
    pub partitions_x: u16,
    /// Vertical partition count.
    pub partitions_y: u16,
    /// Event-time a handler stays busy after admitting an event (µs).
    pub event_budget_us: u64,
    /// Per-pixel refractory window of the temporal filter (µs).
    pub refractory_us: u64,
    /// Neighbor window counted by the noise filter (µs).
    pub filter_window_us: u64,
    /// Neighbor window whose cluster ids are assignment candidates (µs).
    pub cluster_window_us: u64,
    /// Max Manhattan distance from event to candidate centroid (pixels).
    pub max_centroid_distance: u32,
    /// Long-term velocity window and history retention (µs).
    pub long_window_us: u64,
    /// Short-term velocity window (µs).
    pub short_window_us: u64,
    /// Weight of the angle-ratio penalty.
    pub angle_scale: f64,
    /// Denominator guard for the difference ratio (pixels/second).
    pub epsilon: f64,
    /// Per-pixel buffer depth.
    pub pixel_depth: u8,
    pub cluster_capacity: u32,
    pub tracker_slots: u32,
    pub flush_period_us: u64,
    /// Sampling and scoring period (µs).
    pub tick_period_us: u64,
    /// An event is clusterable only with strictly more adjacent events than this.
    pub min_adjacent: u32,
}

impl Default for Params {
    fn default() -> Self {
        Self {
            sensor_width: DEFAULT_SENSOR_WIDTH,
            sensor_height: DEFAULT_SENSOR_HEIGHT,
            partitions_x: 4,
            partitions_y: 4,
            event_budget_us: 50,
            refractory_us: 100_000,
            filter_window_us: 200_000,
            cluster_window_us: 200_000,
            max_centroid_distance: 30,
            long_window_us: 3_000_000,
            short_window_us: 2_000_000,
            angle_scale: 460.0,
            epsilon: 1e-9,
            pixel_depth: 8,
            cluster_capacity: 1024,
            tracker_slots: 8,
            flush_period_us: 10_000,
            tick_period_us: 100_000,
            min_adjacent: 4,
        }
    }
}

impl Params {
    /// Parses a flat `key = value` config. Missing keys keep their defaults.
    pub fn from_config_str(text: &str) -> Result<Self> {
        let params = Self::parse_config(text)?;
        params.validate()?;
        Ok(params)
    }

    /// Parses a config without validating it, for callers that apply
    /// further overrides before calling [`Params::validate`].
    pub fn parse_config(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidParams(e.message().to_string()))
    }

    pub fn from_config_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_config_str(&text)
    }

    pub fn to_config_string(&self) -> String {
        toml::to_string(self).expect("params serialize to toml")
    }

    /// Events older than this (relative to the watermark) are flushed.
    pub fn retention_us(&self) -> u64 {
        self.filter_window_us.max(self.cluster_window_us)
    }

    pub fn pixel_count(&self) -> usize {
        self.sensor_width as usize * self.sensor_height as usize
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::InvalidParams(msg.to_string()));
        if self.sensor_width == 0 || self.sensor_height == 0 {
            return fail("sensor dimensions must be positive");
        }
        if self.partitions_x == 0 || self.partitions_y == 0 {
            return fail("partition counts must be at least 1");
        }
        if self.partitions_x > self.sensor_width || self.partitions_y > self.sensor_height {
            return fail("more partitions than pixels along an axis");
        }
        let durations = [
            ("refractory_us", self.refractory_us),
            ("filter_window_us", self.filter_window_us),
            ("cluster_window_us", self.cluster_window_us),
            ("long_window_us", self.long_window_us),
            ("short_window_us", self.short_window_us),
            ("flush_period_us", self.flush_period_us),
            ("tick_period_us", self.tick_period_us),
        ];
        for (name, value) in durations {
            if value == 0 {
                return Err(Error::InvalidParams(format!("{name} must be positive")));
            }
        }
        if self.short_window_us >= self.long_window_us {
            return fail("short_window_us must be less than long_window_us");
        }
        if self.max_centroid_distance == 0 {
            return fail("max_centroid_distance must be at least 1");
        }
        if self.pixel_depth == 0 {
            return fail("pixel_depth must be at least 1");
        }
        if self.cluster_capacity == 0 || self.cluster_capacity == u32::MAX {
            return fail("cluster_capacity out of range");
        }
        if self.tracker_slots == 0 {
            return fail("tracker_slots must be at least 1");
        }
        if !self.angle_scale.is_finite() || self.angle_scale < 0.0 {
            return fail("angle_scale must be finite and non-negative");
        }
        if !self.epsilon.is_finite() || self.epsilon <= 0.0 {
            return fail("epsilon must be finite and positive");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        Params::default().validate().unwrap();
    }

    #[test]
    fn config_overrides_subset() {
        let p = Params::from_config_str("angle_scale = 760.0\ntracker_slots = 4\n").unwrap();
        assert_eq!(p.angle_scale, 760.0);
        assert_eq!(p.tracker_slots, 4);
        assert_eq!(p.refractory_us, 100_000);
    }

    #[test]
    fn config_round_trips() {
        let p = Params {
            angle_scale: 12.5,
            ..Params::default()
        };
        assert_eq!(Params::from_config_str(&p.to_config_string()).unwrap(), p);
    }

    #[test]
    fn rejects_unknown_key_and_bad_windows() {
        assert!(Params::from_config_str("bogus = 1").is_err());
        assert!(Params::from_config_str("short_window_us = 3000000").is_err());
        assert!(Params::from_config_str("max_centroid_distance = 0").is_err());
    }

    #[test]
    fn zero_budget_is_allowed() {
        let p = Params {
            event_budget_us: 0,
            ..Params::default()
        };
        p.validate().unwrap();
    }
}
