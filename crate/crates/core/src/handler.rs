//! Per-event processing: temporal filter, neighborhood noise filter and
//! cluster assignment.

use crate::buffer::{BufferedEvent, ClusterId, EventBuffer};
use crate::cluster::ClusterPool;
use crate::event::{Event, Micros};
use crate::params::Params;

/// What happened to one input event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EventOutcome {
    /// Discarded because the partition's handler was busy.
    Dropped,
    /// Discarded by the per-pixel temporal filter.
    Rejected,
    /// Buffered without a cluster (too few neighbors).
    Unclustered,
    /// Buffered and added to an existing cluster.
    Joined(ClusterId),
    /// Buffered as the first member of a new cluster.
    Created(ClusterId),
    /// Would have started a cluster but the pool was full; buffered unclustered.
    Exhausted,
}

impl EventOutcome {
    pub fn cluster(self) -> Option<ClusterId> {
        match self {
            EventOutcome::Joined(id) | EventOutcome::Created(id) => Some(id),
            _ => None,
        }
    }

    pub fn is_buffered(self) -> bool {
        !matches!(self, EventOutcome::Dropped | EventOutcome::Rejected)
    }
}

/// Passes unless the pixel's newest buffered event is strictly less than
/// `refractory` µs old.
#[inline]
pub fn temporal_filter(event: &Event, buffer: &EventBuffer, refractory: Micros) -> bool {
    match buffer.top(event.x, event.y) {
        Some(top) => event.t.saturating_sub(top.t) >= refractory,
        None => true,
    }
}

/// The up-to-8 pixels adjacent to `(x, y)` inside a `width x height` sensor.
pub fn neighbors(x: u16, y: u16, width: u16, height: u16) -> impl Iterator<Item = (u16, u16)> {
    const OFFSETS: [(i32, i32); 8] = [(-1, -1), (0, -1), (1, -1), (-1, 0), (1, 0), (-1, 1), (0, 1), (1, 1)];
    OFFSETS.iter().filter_map(move |&(dx, dy)| {
        let nx = x as i32 + dx;
        let ny = y as i32 + dy;
        (nx >= 0 && ny >= 0 && nx < width as i32 && ny < height as i32).then_some((nx as u16, ny as u16))
    })
}

/// Counts buffered neighbor events within `filter_window` of the event and
/// collects the distinct cluster ids of neighbors within `cluster_window`
/// into `adjacent` (cleared first, in discovery order).
pub fn count_adjacent(
    event: &Event,
    buffer: &EventBuffer,
    filter_window: Micros,
    cluster_window: Micros,
    adjacent: &mut Vec<ClusterId>,
) -> u32 {
    adjacent.clear();
    let mut count = 0;
    for (nx, ny) in neighbors(event.x, event.y, buffer.width(), buffer.height()) {
        for b in buffer.iter_at(nx, ny) {
            let age = event.t.saturating_sub(b.t);
            if age <= filter_window {
                count += 1;
            }
            if age <= cluster_window {
                if let Some(id) = b.cluster {
                    if !adjacent.contains(&id) {
                        adjacent.push(id);
                    }
                }
            }
        }
    }
    count
}

/// Chooses the oldest (smallest `created_at`, then lowest id) candidate whose
/// centroid is within `max_distance` Manhattan pixels of the event.
pub fn select_cluster(
    event: &Event,
    adjacent: &[ClusterId],
    pool: &ClusterPool,
    max_distance: u32,
) -> Option<ClusterId> {
    adjacent
        .iter()
        .map(|&id| pool.get(id))
        .filter(|c| c.centroid_within(event.x, event.y, max_distance))
        .min_by_key(|c| (c.created_at, c.id))
        .map(|c| c.id)
}

/// Assigns the event to a cluster (or none) and updates the pool. The
/// event is not yet in the buffer.
pub fn assign_cluster(
    event: &Event,
    adjacent_count: u32,
    adjacent: &[ClusterId],
    pool: &mut ClusterPool,
    params: &Params,
) -> EventOutcome {
    if adjacent_count <= params.min_adjacent {
        return EventOutcome::Unclustered;
    }
    if let Some(id) = select_cluster(event, adjacent, pool, params.max_centroid_distance) {
        pool.add(id, event.x, event.y);
        return EventOutcome::Joined(id);
    }
    match pool.allocate(event.x, event.y, event.t) {
        Some(id) => EventOutcome::Created(id),
        None => EventOutcome::Exhausted,
    }
}

/// Owns the scratch space for handling events; one per worker.
#[derive(Debug, Default)]
pub struct EventHandler {
    adjacent: Vec<ClusterId>,
}

impl EventHandler {
    pub fn new() -> Self {
        Self {
            adjacent: Vec::with_capacity(64),
        }
    }

    /// Runs an admitted event through every per-event stage and buffers it.
    /// A full pixel ring evicts its oldest entry after the new event has
    /// been assigned.
    pub fn handle(
        &mut self,
        event: &Event,
        buffer: &mut EventBuffer,
        pool: &mut ClusterPool,
        params: &Params,
    ) -> EventOutcome {
        if !temporal_filter(event, buffer, params.refractory_us) {
            return EventOutcome::Rejected;
        }
        let count = count_adjacent(
            event,
            buffer,
            params.filter_window_us,
            params.cluster_window_us,
            &mut self.adjacent,
        );
        let outcome = assign_cluster(event, count, &self.adjacent, pool, params);
        let entry = BufferedEvent {
            t: event.t,
            cluster: outcome.cluster(),
        };
        if let Some(evicted) = buffer.push(event.x, event.y, entry) {
            if let Some(id) = evicted.cluster {
                pool.remove(id, event.x, event.y);
            }
        }
        outcome
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> Params {
        Params {
            sensor_width: 20,
            sensor_height: 20,
            ..Params::default()
        }
    }

    fn setup() -> (EventBuffer, ClusterPool, Params) {
        let p = params();
        (EventBuffer::new(p.sensor_width, p.sensor_height, p.pixel_depth), ClusterPool::new(16), p)
    }

    fn put(buf: &mut EventBuffer, pool: &mut ClusterPool, x: u16, y: u16, t: Micros, cluster: Option<ClusterId>) {
        if let Some(id) = cluster {
            pool.add(id, x, y);
        }
        buf.push(x, y, BufferedEvent { t, cluster });
    }

    #[test]
    fn temporal_filter_cases() {
        let (mut buf, _, p) = setup();
        let e = |t| Event::new(t, 3, 3, true);
        assert!(temporal_filter(&e(5), &buf, p.refractory_us));
        buf.push(3, 3, BufferedEvent { t: 1_000_000, cluster: None });
        assert!(!temporal_filter(&e(1_050_000), &buf, 100_000));
        assert!(temporal_filter(&e(1_100_000), &buf, 100_000));
        assert!(!temporal_filter(&e(1_099_999), &buf, 100_000));
    }

    #[test]
    fn neighbors_are_clipped() {
        assert_eq!(neighbors(0, 0, 5, 5).count(), 3);
        assert_eq!(neighbors(4, 2, 5, 5).count(), 5);
        assert_eq!(neighbors(2, 2, 5, 5).count(), 8);
        assert!(neighbors(2, 2, 5, 5).all(|p| p != (2, 2)));
    }

    #[test]
    fn isolated_event_has_no_neighbors() {
        let (buf, _, p) = setup();
        let mut adj = Vec::new();
        let n = count_adjacent(&Event::new(10, 5, 5, false), &buf, p.filter_window_us, p.cluster_window_us, &mut adj);
        assert_eq!(n, 0);
        assert!(adj.is_empty());
    }

    #[test]
    fn five_fresh_neighbors_in_one_cluster() {
        let (mut buf, mut pool, p) = setup();
        let c = pool.allocate(4, 4, 0).unwrap();
        buf.push(4, 4, BufferedEvent { t: 0, cluster: Some(c) });
        for &(x, y) in &[(5, 4), (6, 4), (4, 5), (6, 6)] {
            put(&mut buf, &mut pool, x, y, 1000, Some(c));
        }
        let mut adj = Vec::new();
        let n = count_adjacent(&Event::new(50_000, 5, 5, false), &buf, p.filter_window_us, p.cluster_window_us, &mut adj);
        assert_eq!(n, 5);
        assert_eq!(adj, vec![c]);
    }

    #[test]
    fn filter_and_cluster_windows_apply_independently() {
        let (mut buf, mut pool, _) = setup();
        let c1 = pool.allocate(0, 0, 0).unwrap();
        let c2 = pool.allocate(0, 1, 0).unwrap();
        let now = 1_000_000;
        // two events older than the filter window but inside the cluster window
        put(&mut buf, &mut pool, 4, 4, now - 150_000, Some(c1));
        put(&mut buf, &mut pool, 6, 6, now - 150_000, Some(c2));
        // four fresh unclustered events
        for &(x, y) in &[(5, 4), (6, 4), (4, 6), (5, 6)] {
            put(&mut buf, &mut pool, x, y, now - 10_000, None);
        }
        let mut adj = Vec::new();
        let n = count_adjacent(&Event::new(now, 5, 5, false), &buf, 100_000, 200_000, &mut adj);
        assert_eq!(n, 4);
        adj.sort();
        assert_eq!(adj, vec![c1, c2]);
    }

    #[test]
    fn four_neighbors_is_not_enough() {
        let (_, mut pool, p) = setup();
        let out = assign_cluster(&Event::new(0, 1, 1, false), 4, &[], &mut pool, &p);
        assert_eq!(out, EventOutcome::Unclustered);
        assert_eq!(pool.in_use(), 0);
    }

    #[test]
    fn no_candidates_creates_cluster() {
        let (_, mut pool, p) = setup();
        let out = assign_cluster(&Event::new(7, 3, 9, false), 5, &[], &mut pool, &p);
        let EventOutcome::Created(id) = out else { panic!("{out:?}") };
        let c = pool.get(id);
        assert_eq!((c.size, c.sum_x, c.sum_y, c.created_at), (1, 3, 9, 7));
    }

    #[test]
    fn oldest_in_range_wins() {
        let p = Params {
            sensor_width: 100,
            sensor_height: 100,
            ..Params::default()
        };
        let mut pool = ClusterPool::new(8);
        let old = pool.allocate(90, 50, 100).unwrap(); // distance 40 from (50, 50)
        let young = pool.allocate(52, 50, 900).unwrap(); // distance 2
        let event = Event::new(1000, 50, 50, false);
        assert_eq!(assign_cluster(&event, 5, &[old, young], &mut pool, &p), EventOutcome::Joined(young));
        // when both are in range the older one is chosen
        let older = pool.allocate(49, 50, 50).unwrap();
        assert_eq!(assign_cluster(&event, 5, &[young, older, old], &mut pool, &p), EventOutcome::Joined(older));
    }

    #[test]
    fn age_ties_break_on_lower_id() {
        let mut pool = ClusterPool::new(8);
        let a = pool.allocate(10, 10, 5).unwrap();
        let b = pool.allocate(11, 10, 5).unwrap();
        let e = Event::new(10, 10, 11, false);
        assert_eq!(select_cluster(&e, &[b, a], &pool, 30), Some(a));
    }

    #[test]
    fn exhausted_pool_buffers_unclustered() {
        let p = params();
        let mut buf = EventBuffer::new(20, 20, 8);
        let mut pool = ClusterPool::new(1);
        pool.allocate(0, 0, 0).unwrap();
        let out = assign_cluster(&Event::new(1, 15, 15, false), 6, &[], &mut pool, &p);
        assert_eq!(out, EventOutcome::Exhausted);
        assert_eq!(pool.exhausted(), 1);
        let mut h = EventHandler::new();
        assert_eq!(h.handle(&Event::new(2, 15, 15, false), &mut buf, &mut pool, &p), EventOutcome::Unclustered);
        assert_eq!(buf.top(15, 15), Some(BufferedEvent { t: 2, cluster: None }));
    }

    #[test]
    fn eviction_updates_cluster_bookkeeping() {
        let p = Params {
            sensor_width: 10,
            sensor_height: 10,
            pixel_depth: 2,
            refractory_us: 1,
            ..Params::default()
        };
        let mut buf = EventBuffer::new(10, 10, 2);
        let mut pool = ClusterPool::new(4);
        let c = pool.allocate(5, 5, 0).unwrap();
        buf.push(5, 5, BufferedEvent { t: 0, cluster: Some(c) });
        put(&mut buf, &mut pool, 5, 5, 1, Some(c));
        let mut h = EventHandler::new();
        // no neighbors: unclustered, evicts the t=0 member of c
        assert_eq!(h.handle(&Event::new(10, 5, 5, false), &mut buf, &mut pool, &p), EventOutcome::Unclustered);
        assert_eq!(pool.get(c).size, 1);
        assert_eq!(h.handle(&Event::new(20, 5, 5, false), &mut buf, &mut pool, &p), EventOutcome::Unclustered);
        assert_eq!(pool.get(c).size, 0);
        assert!(pool.is_free(c));
    }
}
