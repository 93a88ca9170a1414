//! Cluster tracking: centroid history and long/short-term velocities.

use std::collections::VecDeque;

use crate::buffer::ClusterId;
use crate::cluster::ClusterPool;
use crate::event::Micros;
use crate::scalar::{Scalar, Vec2};

const MICROS_PER_SECOND: f64 = 1e6;

/// Velocity pair of one track in pixels/second.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Velocities<F> {
    /// Long-term: newest centroid against the oldest retained one.
    pub long: Vec2<F>,
    /// Short-term: newest centroid against the one closest to the short window.
    pub short: Vec2<F>,
}

#[derive(Debug, Clone)]
pub struct TrackState<F> {
    pub cluster: ClusterId,
    history: VecDeque<(Micros, Vec2<F>)>,
    /// Set once a sample has aged out, i.e. the history covers the whole
    /// retention window.
    covered: bool,
    pub velocities: Option<Velocities<F>>,
    /// Running stability score.
    pub stability: F,
    /// Number of scored ticks.
    pub ticks: u64,
}

impl<F: Scalar> TrackState<F> {
    pub fn new(cluster: ClusterId) -> Self {
        Self::with_capacity(cluster, 0)
    }

    pub fn with_capacity(cluster: ClusterId, samples: usize) -> Self {
        Self {
            cluster,
            history: VecDeque::with_capacity(samples),
            covered: false,
            velocities: None,
            stability: F::zero(),
            ticks: 0,
        }
    }

    fn reset(&mut self, cluster: ClusterId) {
        self.cluster = cluster;
        self.history.clear();
        self.covered = false;
        self.velocities = None;
        self.stability = F::zero();
        self.ticks = 0;
    }

    pub fn history(&self) -> impl ExactSizeIterator<Item = &(Micros, Vec2<F>)> {
        self.history.iter()
    }

    /// Time between the oldest and newest sample.
    pub fn span(&self) -> Micros {
        match (self.history.front(), self.history.back()) {
            (Some(a), Some(b)) => b.0 - a.0,
            _ => 0,
        }
    }

    /// Records a centroid sample and drops samples more than `retention`
    /// older than `now`. A second sample at the same timestamp replaces the
    /// first.
    pub fn sample(&mut self, now: Micros, centroid: Vec2<F>, retention: Micros) {
        match self.history.back_mut() {
            Some(last) if last.0 == now => last.1 = centroid,
            Some(last) => {
                assert!(last.0 < now, "samples must be time ordered");
                self.history.push_back((now, centroid));
            }
            None => self.history.push_back((now, centroid)),
        }
        while let Some(&(t, _)) = self.history.front() {
            if now - t > retention {
                self.history.pop_front();
                self.covered = true;
            } else {
                break;
            }
        }
    }

    /// Long- and short-term velocities from the current history, or `None`
    /// until the history covers the long window.
    ///
    /// The long-term velocity compares against the oldest retained sample,
    /// the short-term one against the sample whose age is closest to
    /// `short_window` (ties to the older one). Both divide by the actual age
    /// of their reference sample.
    pub fn velocities(&self, long_window: Micros, short_window: Micros) -> Option<Velocities<F>> {
        let &(now, current) = self.history.back()?;
        let &(_, oldest) = self.history.front()?;
        let span = self.span();
        if span == 0 || !(self.covered || span >= long_window) {
            return None;
        }
        let per_second = F::of(MICROS_PER_SECOND);
        let long = (current - oldest) * per_second / F::of_u64(span);

        let mut best: Option<(Micros, Micros, Vec2<F>)> = None;
        for &(t, c) in self.history.iter() {
            let age = now - t;
            if age == 0 {
                continue;
            }
            let miss = age.abs_diff(short_window);
            // iterating oldest first, so `<` keeps the older sample on ties
            if best.is_none_or(|(m, _, _)| miss < m) {
                best = Some((miss, age, c));
            }
        }
        let (_, age, reference) = best?;
        let short = (current - reference) * per_second / F::of_u64(age);
        Some(Velocities { long, short })
    }
}

/// Fixed set of tracking slots.
#[derive(Debug, Clone)]
pub struct TrackerBank<F> {
    slots: Vec<Option<TrackState<F>>>,
    spare: Vec<TrackState<F>>,
    samples_per_track: usize,
}

impl<F: Scalar> TrackerBank<F> {
    /// `samples_per_track` sizes each history up front.
    pub fn new(slots: usize, samples_per_track: usize) -> Self {
        Self {
            slots: (0..slots).map(|_| None).collect(),
            spare: (0..slots)
                .map(|_| TrackState::with_capacity(ClusterId(u32::MAX), samples_per_track))
                .collect(),
            samples_per_track,
        }
    }

    pub fn capacity(&self) -> usize {
        self.slots.len()
    }

    pub fn active(&self) -> usize {
        self.slots.iter().filter(|s| s.is_some()).count()
    }

    pub fn tracks(&self) -> impl Iterator<Item = &TrackState<F>> {
        self.slots.iter().flatten()
    }

    pub fn tracks_mut(&mut self) -> impl Iterator<Item = &mut TrackState<F>> {
        self.slots.iter_mut().flatten()
    }

    pub(crate) fn slots_mut(&mut self) -> &mut [Option<TrackState<F>>] {
        &mut self.slots
    }

    pub fn is_tracking(&self, id: ClusterId) -> bool {
        self.tracks().any(|t| t.cluster == id)
    }

    /// Ends every track whose cluster has no buffered events left, then
    /// fills free slots with the highest-priority untracked clusters.
    /// Running tracks are never preempted. Returns the number of tracks
    /// ended.
    pub fn assign_trackers(&mut self, priority: &[ClusterId], pool: &mut ClusterPool) -> usize {
        let mut ended = 0;
        for slot in self.slots.iter_mut() {
            if let Some(track) = slot {
                if pool.get(track.cluster).size == 0 {
                    pool.set_tracked(track.cluster, false);
                    self.spare.push(slot.take().expect("slot is occupied"));
                    ended += 1;
                }
            }
        }
        let mut candidates = priority.iter().copied();
        for slot in self.slots.iter_mut().filter(|s| s.is_none()) {
            let Some(id) = candidates.find(|&id| !pool.get(id).tracked) else {
                break;
            };
            let mut track = self
                .spare
                .pop()
                .unwrap_or_else(|| TrackState::with_capacity(id, self.samples_per_track));
            track.reset(id);
            pool.set_tracked(id, true);
            *slot = Some(track);
        }
        ended
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SEC: Micros = 1_000_000;

    #[test]
    fn first_sample() {
        let mut t = TrackState::<f64>::new(ClusterId(0));
        t.sample(5, Vec2::new(1.0, 2.0), 3 * SEC);
        assert_eq!(t.history().copied().collect::<Vec<_>>(), vec![(5, Vec2::new(1.0, 2.0))]);
    }

    #[test]
    fn retention_drops_samples_older_than_window() {
        let mut t = TrackState::<f64>::new(ClusterId(0));
        // samples every 100 ms from 0 to 3.1 s
        for k in 0..=31 {
            t.sample(k * 100_000, Vec2::new(k as f64, 0.0), 3 * SEC);
        }
        let ages: Vec<_> = t.history().map(|(ts, _)| 3_100_000 - ts).collect();
        assert_eq!(*ages.first().unwrap(), 3 * SEC);
        assert_eq!(ages.len(), 31);
        assert_eq!(t.span(), 3 * SEC);
    }

    #[test]
    fn stationary_history_and_zero_velocity() {
        let mut t = TrackState::<f64>::new(ClusterId(0));
        for k in 0..40 {
            t.sample(k * 100_000, Vec2::new(12.5, 7.0), 3 * SEC);
        }
        assert!(t.history().all(|(_, c)| *c == Vec2::new(12.5, 7.0)));
        let v = t.velocities(3 * SEC, 2 * SEC).unwrap();
        assert_eq!(v.long, Vec2::zero());
        assert_eq!(v.short, Vec2::zero());
    }

    #[test]
    fn long_velocity_by_direct_arithmetic() {
        let mut t = TrackState::<f64>::new(ClusterId(0));
        t.sample(0, Vec2::new(4.0, 4.0), 3 * SEC);
        t.sample(3 * SEC, Vec2::new(10.0, 10.0), 3 * SEC);
        let v = t.velocities(3 * SEC, 2 * SEC).unwrap();
        assert_eq!(v.long, Vec2::new(2.0, 2.0));
    }

    #[test]
    fn linear_motion_gives_exact_velocities() {
        // centroid moves (3, 0) px/s, sampled every 100 ms for 4 s
        let mut t = TrackState::<f64>::new(ClusterId(0));
        for k in 0..=40u64 {
            let secs = k as f64 * 0.1;
            t.sample(k * 100_000, Vec2::new(20.0 + 3.0 * secs, 50.0), 3 * SEC);
        }
        let v = t.velocities(3 * SEC, 2 * SEC).unwrap();
        assert!((v.long - Vec2::new(3.0, 0.0)).norm() < 1e-9);
        assert!((v.short - Vec2::new(3.0, 0.0)).norm() < 1e-9);
    }

    #[test]
    fn warm_up_lasts_the_long_window() {
        let mut t = TrackState::<f32>::new(ClusterId(0));
        for k in 0..30 {
            t.sample(k * 100_000, Vec2::new(k as f32, 0.0), 3 * SEC);
            assert!(t.velocities(3 * SEC, 2 * SEC).is_none());
        }
        assert_eq!(t.span(), 2_900_000);
        t.sample(3 * SEC, Vec2::new(30.0, 0.0), 3 * SEC);
        let v = t.velocities(3 * SEC, 2 * SEC).unwrap();
        assert_eq!(v.long, Vec2::new(10.0, 0.0));
        assert_eq!(v.short, Vec2::new(10.0, 0.0));
    }

    #[test]
    fn window_not_multiple_of_tick_still_warms_up() {
        // 700 ms ticks never give a span of exactly 3 s
        let mut t = TrackState::<f64>::new(ClusterId(0));
        for k in 0..=5u64 {
            t.sample(k * 700_000, Vec2::new(k as f64 * 0.7, 0.0), 3 * SEC);
        }
        assert_eq!(t.span(), 3_500_000 - 700_000);
        let v = t.velocities(3 * SEC, 2 * SEC).unwrap();
        assert!((v.long.x - 1.0).abs() < 1e-12);
        assert!((v.short.x - 1.0).abs() < 1e-12);
    }

    #[test]
    fn short_reference_tie_prefers_older_sample() {
        let mut t = TrackState::<f64>::new(ClusterId(0));
        t.sample(0, Vec2::new(0.0, 0.0), 4 * SEC);
        t.sample(SEC, Vec2::new(1.0, 0.0), 4 * SEC);
        t.sample(3 * SEC, Vec2::new(9.0, 0.0), 4 * SEC);
        t.sample(4 * SEC, Vec2::new(10.0, 0.0), 4 * SEC);
        // ages 4 s, 3 s, 1 s; target 2 s ties between 3 s and 1 s
        let v = t.velocities(4 * SEC, 2 * SEC).unwrap();
        assert_eq!(v.short, Vec2::new(3.0, 0.0));
    }

    #[test]
    fn history_length_is_bounded() {
        let (long, tick) = (3 * SEC, 100_000);
        let mut t = TrackState::<f64>::new(ClusterId(0));
        for k in 0..200 {
            t.sample(k * tick, Vec2::zero(), long);
            assert!(t.history().len() as u64 <= long.div_ceil(tick) + 1);
        }
    }

    #[test]
    fn assignment_fills_top_and_never_preempts() {
        let mut pool = ClusterPool::new(8);
        let ids: Vec<_> = (0..4).map(|i| pool.allocate(i, 0, i as u64).unwrap()).collect();
        let mut bank = TrackerBank::<f64>::new(2, 8);
        assert_eq!(bank.assign_trackers(&ids, &mut pool), 0);
        assert!(bank.is_tracking(ids[0]) && bank.is_tracking(ids[1]));
        assert!(!bank.is_tracking(ids[2]));

        // priority changes do not displace running tracks
        let reordered = [ids[3], ids[2], ids[1], ids[0]];
        bank.assign_trackers(&reordered, &mut pool);
        assert!(bank.is_tracking(ids[0]) && bank.is_tracking(ids[1]));

        // size reaching zero ends the track and frees the slot for the best untracked
        pool.remove(ids[0], 0, 0);
        assert!(!pool.is_free(ids[0]));
        let priority = [ids[3], ids[2], ids[1]];
        assert_eq!(bank.assign_trackers(&priority, &mut pool), 1);
        assert!(pool.is_free(ids[0]));
        assert!(bank.is_tracking(ids[3]) && bank.is_tracking(ids[1]));
        assert_eq!(bank.active(), 2);
    }
}
