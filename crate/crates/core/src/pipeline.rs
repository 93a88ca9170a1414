//! Event-time scheduled pipeline.
//!
//! Per event: route to a partition, admit, temporal filter, noise filter,
//! cluster. Periodic stages run whenever the watermark (the newest admitted
//! timestamp) reaches a boundary: every `flush_period_us` the buffer is
//! flushed, and every `tick_period_us` clusters are sorted, trackers
//! assigned, centroids sampled and tracks scored.
//!
//! Output is a pure function of the input stream and [`Params`]. With a
//! thread pool, admission runs per partition in parallel, flushing is
//! sharded by rows and tracks are scored in parallel; clustering itself
//! runs in stream order because the cluster pool is shared.

use std::fmt::Write as _;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::buffer::{ClusterId, EventBuffer};
use crate::cluster::ClusterPool;
use crate::error::{Error, Result};
use crate::event::{Event, Micros};
use crate::handler::{EventHandler, EventOutcome};
use crate::maintenance::{sort_clusters, Flusher};
use crate::params::Params;
use crate::partition::{Admission, AdmissionGate, PartitionGrid};
use crate::scalar::Scalar;
use crate::scorer::{score, Detection, ScoreParams};
use crate::tracker::{TrackState, TrackerBank};

const BATCH: usize = 4096;

/// Receives detections as ticks produce them.
pub trait DetectionSink<F> {
    fn emit(&mut self, detection: &Detection<F>) -> Result<()>;
}

impl<F: Copy> DetectionSink<F> for Vec<Detection<F>> {
    fn emit(&mut self, detection: &Detection<F>) -> Result<()> {
        self.push(*detection);
        Ok(())
    }
}

/// Discards detections.
#[derive(Debug, Default, Clone, Copy)]
pub struct NullSink;

impl<F> DetectionSink<F> for NullSink {
    fn emit(&mut self, _: &Detection<F>) -> Result<()> {
        Ok(())
    }
}

/// Counters and timings of a run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunStats {
    pub events_read: u64,
    pub admitted: u64,
    pub dropped: u64,
    /// Rejected by the temporal filter.
    pub rejected: u64,
    /// Buffered without a cluster by the noise filter.
    pub unclustered: u64,
    pub clustered: u64,
    pub clusters_created: u64,
    pub pool_exhausted: u64,
    pub flushes: u64,
    pub flushed_events: u64,
    pub ticks: u64,
    pub tracks_ended: u64,
    pub detections: u64,
    pub cluster_high_water: u64,
    pub admitted_per_partition: Vec<u64>,
    pub dropped_per_partition: Vec<u64>,
    pub admission_time: Duration,
    pub handling_time: Duration,
    pub flush_time: Duration,
    pub tick_time: Duration,
}

impl RunStats {
    pub fn processing_time(&self) -> Duration {
        self.admission_time + self.handling_time + self.flush_time + self.tick_time
    }

    /// Input events per second of processing time (excludes reading).
    pub fn events_per_second(&self) -> f64 {
        let secs = self.processing_time().as_secs_f64();
        if secs == 0.0 {
            return 0.0;
        }
        self.events_read as f64 / secs
    }

    /// `key: value` lines.
    pub fn report(&self) -> String {
        let mut s = String::new();
        let mut line = |k: &str, v: &dyn std::fmt::Display| {
            let _ = writeln!(s, "{k}: {v}");
        };
        line("events_read", &self.events_read);
        line("events_admitted", &self.admitted);
        line("events_dropped", &self.dropped);
        line("events_rejected_temporal", &self.rejected);
        line("events_unclustered", &self.unclustered);
        line("events_clustered", &self.clustered);
        line("clusters_created", &self.clusters_created);
        line("cluster_pool_exhausted", &self.pool_exhausted);
        line("cluster_pool_high_water", &self.cluster_high_water);
        line("flushes", &self.flushes);
        line("flushed_events", &self.flushed_events);
        line("ticks", &self.ticks);
        line("tracks_ended", &self.tracks_ended);
        line("detections", &self.detections);
        line("admission_seconds", &format!("{:.6}", self.admission_time.as_secs_f64()));
        line("handling_seconds", &format!("{:.6}", self.handling_time.as_secs_f64()));
        line("flush_seconds", &format!("{:.6}", self.flush_time.as_secs_f64()));
        line("tick_seconds", &format!("{:.6}", self.tick_time.as_secs_f64()));
        line("processing_seconds", &format!("{:.6}", self.processing_time().as_secs_f64()));
        line("events_per_second", &format!("{:.0}", self.events_per_second()));
        s
    }
}

#[derive(Debug, Clone, Copy)]
struct Clock {
    next_flush: Micros,
    next_tick: Micros,
}

fn next_multiple_after(t: Micros, period: Micros) -> Micros {
    (t / period + 1) * period
}

pub struct Pipeline<F: Scalar> {
    params: Params,
    grid: PartitionGrid,
    gates: Vec<AdmissionGate>,
    buffer: EventBuffer,
    pool: ClusterPool,
    handler: EventHandler,
    flusher: Flusher,
    trackers: TrackerBank<F>,
    priority: Vec<ClusterId>,
    score: ScoreParams<F>,
    threads: Option<Arc<rayon::ThreadPool>>,
    clock: Option<Clock>,
    last_t: Option<Micros>,
    /// Records that passed validation, including ones not yet processed.
    checked: u64,
    stats: RunStats,
    trace: Option<Vec<EventOutcome>>,
    batch: Vec<Event>,
    routes: Vec<u32>,
    admitted: Vec<bool>,
    buckets: Vec<Vec<u32>>,
    tick_out: Vec<Detection<F>>,
}

impl<F: Scalar> Pipeline<F> {
    /// Single-threaded pipeline.
    pub fn new(params: Params) -> Result<Self> {
        params.validate()?;
        let grid = PartitionGrid::new(
            params.partitions_x,
            params.partitions_y,
            params.sensor_width,
            params.sensor_height,
        );
        let partitions = grid.len();
        let samples = (params.long_window_us.div_ceil(params.tick_period_us) + 1) as usize;
        Ok(Self {
            grid,
            gates: vec![AdmissionGate::new(); partitions],
            buffer: EventBuffer::new(params.sensor_width, params.sensor_height, params.pixel_depth),
            pool: ClusterPool::new(params.cluster_capacity),
            handler: EventHandler::new(),
            flusher: Flusher::new(),
            trackers: TrackerBank::new(params.tracker_slots as usize, samples),
            priority: Vec::with_capacity(params.cluster_capacity as usize),
            score: ScoreParams::new(params.epsilon, params.angle_scale),
            threads: None,
            clock: None,
            last_t: None,
            checked: 0,
            stats: RunStats {
                admitted_per_partition: vec![0; partitions],
                dropped_per_partition: vec![0; partitions],
                ..RunStats::default()
            },
            trace: None,
            batch: Vec::with_capacity(BATCH),
            routes: Vec::with_capacity(BATCH),
            admitted: Vec::with_capacity(BATCH),
            buckets: vec![Vec::new(); partitions],
            tick_out: Vec::with_capacity(params.tracker_slots as usize),
            params,
        })
    }

    /// Pipeline using up to `threads` workers. Output is identical for every
    /// thread count.
    pub fn with_threads(params: Params, threads: usize) -> Result<Self> {
        let mut p = Self::new(params)?;
        if threads > 1 {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .map_err(|e| Error::Io(std::io::Error::other(e)))?;
            p.threads = Some(Arc::new(pool));
        }
        Ok(p)
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn stats(&self) -> &RunStats {
        &self.stats
    }

    pub fn buffer(&self) -> &EventBuffer {
        &self.buffer
    }

    pub fn clusters(&self) -> &ClusterPool {
        &self.pool
    }

    pub fn trackers(&self) -> &TrackerBank<F> {
        &self.trackers
    }

    /// Start recording the outcome of every input event.
    pub fn enable_trace(&mut self) {
        self.trace.get_or_insert_with(Vec::new);
    }

    pub fn take_trace(&mut self) -> Vec<EventOutcome> {
        self.trace.take().unwrap_or_default()
    }

    fn check(&mut self, event: &Event) -> Result<usize> {
        if let Some(prev) = self.last_t {
            if event.t < prev {
                return Err(Error::Unordered {
                    record: self.checked + 1,
                    timestamp: event.t,
                    previous: prev,
                });
            }
        }
        let part = self.grid.route(event)?;
        self.last_t = Some(event.t);
        self.checked += 1;
        Ok(part)
    }

    /// Processes one event, emitting any detections produced by periodic
    /// stages it triggers.
    pub fn push(&mut self, event: Event, sink: &mut impl DetectionSink<F>) -> Result<EventOutcome> {
        let part = self.check(&event)?;
        let start = Instant::now();
        let admission = self.gates[part].admit(event.t, self.params.event_budget_us);
        self.stats.admission_time += start.elapsed();
        self.process(event, part, admission == Admission::Admit, sink)
    }

    /// Runs the whole stream through the pipeline.
    pub fn run<I>(&mut self, events: I, sink: &mut impl DetectionSink<F>) -> Result<RunStats>
    where
        I: IntoIterator<Item = Result<Event>>,
    {
        let mut events = events.into_iter();
        loop {
            self.batch.clear();
            self.routes.clear();
            let mut failure = None;
            for item in events.by_ref() {
                match item.and_then(|e| self.check(&e).map(|p| (e, p))) {
                    Ok((e, p)) => {
                        self.batch.push(e);
                        self.routes.push(p as u32);
                    }
                    Err(err) => {
                        failure = Some(err);
                        break;
                    }
                }
                if self.batch.len() == BATCH {
                    break;
                }
            }
            if self.batch.is_empty() && failure.is_none() {
                break;
            }
            let result = self.run_batch(sink);
            self.stats.cluster_high_water = self.pool.high_water() as u64;
            result?;
            if let Some(err) = failure {
                return Err(err);
            }
        }
        Ok(self.stats.clone())
    }

    /// Convenience wrapper over [`run`](Self::run) for in-memory streams.
    pub fn run_events(&mut self, events: &[Event], sink: &mut impl DetectionSink<F>) -> Result<RunStats> {
        self.run(events.iter().copied().map(Ok), sink)
    }

    fn run_batch(&mut self, sink: &mut impl DetectionSink<F>) -> Result<()> {
        let start = Instant::now();
        self.admit_batch();
        self.stats.admission_time += start.elapsed();
        let batch = std::mem::take(&mut self.batch);
        let mut result = Ok(());
        for (i, event) in batch.iter().enumerate() {
            let part = self.routes[i] as usize;
            if let Err(e) = self.process(*event, part, self.admitted[i], sink) {
                result = Err(e);
                break;
            }
        }
        self.batch = batch;
        result
    }

    fn admit_batch(&mut self) {
        let budget = self.params.event_budget_us;
        self.admitted.clear();
        self.admitted.resize(self.batch.len(), false);
        match self.threads.as_ref() {
            Some(tp) => {
                for b in self.buckets.iter_mut() {
                    b.clear();
                }
                for (i, &p) in self.routes.iter().enumerate() {
                    self.buckets[p as usize].push(i as u32);
                }
                let batch = &self.batch;
                tp.install(|| {
                    self.gates
                        .par_iter_mut()
                        .zip(self.buckets.par_iter_mut())
                        .for_each(|(gate, bucket)| {
                            // keep admitted indices, drop the rest
                            bucket.retain(|&i| gate.admit(batch[i as usize].t, budget) == Admission::Admit);
                        })
                });
                for bucket in &self.buckets {
                    for &i in bucket {
                        self.admitted[i as usize] = true;
                    }
                }
            }
            None => {
                for (i, e) in self.batch.iter().enumerate() {
                    let gate = &mut self.gates[self.routes[i] as usize];
                    self.admitted[i] = gate.admit(e.t, budget) == Admission::Admit;
                }
            }
        }
    }

    fn process(
        &mut self,
        event: Event,
        part: usize,
        admitted: bool,
        sink: &mut impl DetectionSink<F>,
    ) -> Result<EventOutcome> {
        self.stats.events_read += 1;
        let outcome = if admitted {
            self.stats.admitted += 1;
            self.stats.admitted_per_partition[part] += 1;
            self.advance_watermark(event.t, sink)?;
            let start = Instant::now();
            let outcome = self.handler.handle(&event, &mut self.buffer, &mut self.pool, &self.params);
            self.stats.handling_time += start.elapsed();
            match outcome {
                EventOutcome::Rejected => self.stats.rejected += 1,
                EventOutcome::Unclustered => self.stats.unclustered += 1,
                EventOutcome::Exhausted => {
                    self.stats.unclustered += 1;
                    self.stats.pool_exhausted += 1;
                }
                EventOutcome::Joined(_) => self.stats.clustered += 1,
                EventOutcome::Created(_) => {
                    self.stats.clustered += 1;
                    self.stats.clusters_created += 1;
                }
                EventOutcome::Dropped => unreachable!(),
            }
            outcome
        } else {
            self.stats.dropped += 1;
            self.stats.dropped_per_partition[part] += 1;
            EventOutcome::Dropped
        };
        if let Some(trace) = self.trace.as_mut() {
            trace.push(outcome);
        }
        Ok(outcome)
    }

    /// Runs every periodic boundary at or before `t`. Called with each
    /// admitted timestamp; may also be called directly to let time pass
    /// without events.
    pub fn advance_watermark(&mut self, t: Micros, sink: &mut impl DetectionSink<F>) -> Result<()> {
        let (fp, tp) = (self.params.flush_period_us, self.params.tick_period_us);
        let mut clock = *self.clock.get_or_insert(Clock {
            next_flush: next_multiple_after(t, fp),
            next_tick: next_multiple_after(t, tp),
        });
        loop {
            let boundary = clock.next_flush.min(clock.next_tick);
            if boundary > t {
                break;
            }
            if boundary == clock.next_flush {
                self.flush(boundary);
                clock.next_flush += fp;
            }
            if boundary == clock.next_tick {
                self.tick(boundary, sink)?;
                clock.next_tick += tp;
            }
            if self.buffer.live() == 0 && self.trackers.active() == 0 {
                // nothing left for periodic stages to do before `t`
                clock.next_flush = clock.next_flush.max(t / fp * fp);
                clock.next_tick = clock.next_tick.max(t / tp * tp);
            }
        }
        self.clock = Some(clock);
        Ok(())
    }

    fn flush(&mut self, now: Micros) {
        let start = Instant::now();
        let report = self.flusher.flush(
            &mut self.buffer,
            &mut self.pool,
            now,
            self.params.retention_us(),
            self.threads.as_deref(),
        );
        self.stats.flushes += 1;
        self.stats.flushed_events += report.removed as u64;
        self.stats.flush_time += start.elapsed();
    }

    fn tick(&mut self, now: Micros, sink: &mut impl DetectionSink<F>) -> Result<()> {
        let start = Instant::now();
        self.stats.ticks += 1;
        sort_clusters(&self.pool, &mut self.priority);
        let ended = self.trackers.assign_trackers(&self.priority, &mut self.pool);
        self.stats.tracks_ended += ended as u64;
        self.stats.cluster_high_water = self.pool.high_water() as u64;

        let pool = &self.pool;
        let params = &self.params;
        let score_params = self.score;
        let step = |track: &mut TrackState<F>| step_track(track, pool, params, score_params, now);
        self.tick_out.clear();
        match self.threads.as_ref() {
            Some(tp) if self.trackers.active() > 1 => {
                let slots = self.trackers.slots_mut();
                let found: Vec<Option<Detection<F>>> =
                    tp.install(|| slots.par_iter_mut().map(|s| s.as_mut().and_then(step)).collect());
                self.tick_out.extend(found.into_iter().flatten());
            }
            _ => {
                for track in self.trackers.tracks_mut() {
                    if let Some(d) = step(track) {
                        self.tick_out.push(d);
                    }
                }
            }
        }
        self.tick_out.sort_unstable_by_key(|d| d.cluster);
        self.stats.detections += self.tick_out.len() as u64;
        self.stats.tick_time += start.elapsed();
        for d in &self.tick_out {
            sink.emit(d)?;
        }
        Ok(())
    }
}

fn step_track<F: Scalar>(
    track: &mut TrackState<F>,
    pool: &ClusterPool,
    params: &Params,
    score_params: ScoreParams<F>,
    now: Micros,
) -> Option<Detection<F>> {
    let cluster = pool.get(track.cluster);
    let centroid = cluster.centroid::<F>().ok()?;
    track.sample(now, centroid, params.long_window_us);
    let velocities = track.velocities(params.long_window_us, params.short_window_us)?;
    track.velocities = Some(velocities);
    let confidence = score(track, velocities, score_params);
    Some(Detection {
        t: now,
        cluster: track.cluster,
        centroid,
        bbox: cluster.bbox,
        long_velocity: velocities.long,
        short_velocity: velocities.short,
        stability: track.stability,
        confidence,
    })
}
