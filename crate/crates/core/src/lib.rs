//! Deterministic event-camera pipeline for finding vessels among wave
//! clutter.
//!
//! Events are admitted per sensor partition, filtered, grouped into
//! spatio-temporal clusters, and the largest clusters are tracked. Each
//! track compares its long-window and short-window velocities; coherent
//! motion accumulates stability and a confidence close to one, erratic
//! motion drives it to zero.
//!
//! ```
//! use wavetrack::{Event, Params, PipelineF64, DetectionF64};
//!
//! let mut pipeline = PipelineF64::new(Params::default()).unwrap();
//! let mut detections: Vec<DetectionF64> = Vec::new();
//! let events = [Event::new(0, 10, 10, true), Event::new(5_000, 11, 10, false)];
//! let stats = pipeline.run_events(&events, &mut detections).unwrap();
//! assert_eq!(stats.events_read, 2);
//! ```

pub mod buffer;
pub mod cluster;
pub mod error;
pub mod evaluation;
pub mod event;
pub mod handler;
pub mod io;
pub mod maintenance;
pub mod params;
pub mod partition;
pub mod pipeline;
pub mod scalar;
pub mod scorer;
pub mod synth;
pub mod tracker;

pub use buffer::{BufferedEvent, ClusterId, EventBuffer};
pub use cluster::{Cluster, ClusterPool};
pub use error::{Error, Result};
pub use event::{BBox, Event, Micros};
pub use handler::{EventHandler, EventOutcome};
pub use params::Params;
pub use pipeline::{DetectionSink, NullSink, Pipeline, RunStats};
pub use scalar::{Scalar, Vec2};
pub use scorer::Detection;
pub use synth::SceneSpec;
pub use tracker::{TrackState, TrackerBank, Velocities};

pub type PipelineF64 = Pipeline<f64>;
pub type PipelineF32 = Pipeline<f32>;
pub type DetectionF64 = Detection<f64>;
pub type DetectionF32 = Detection<f32>;
pub type TrackStateF64 = TrackState<f64>;
pub type TrackStateF32 = TrackState<f32>;
