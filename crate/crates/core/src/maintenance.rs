//! Periodic buffer flushing and cluster prioritisation.

use rayon::prelude::*;

use crate::buffer::{ClusterId, EventBuffer};
use crate::cluster::ClusterPool;
use crate::event::{BBox, Micros};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FlushReport {
    pub removed: usize,
    pub deactivated: usize,
}

/// Expires old events and restores exact cluster bboxes. Reuses its
/// scratch space across calls.
#[derive(Debug, Default)]
pub struct Flusher {
    shrunk: Vec<ClusterId>,
    extents: Vec<BBox>,
}

impl Flusher {
    pub fn new() -> Self {
        Self::default()
    }

    /// Removes every buffered event strictly older than `retention` relative
    /// to `now` and updates the affected clusters. Afterwards every active
    /// cluster's bbox is the exact extent of its members.
    ///
    /// Bboxes only grow between flushes, so only clusters that lost members
    /// need a rescan, limited to their current bbox. With a thread pool the
    /// rescans run in parallel; the result does not depend on it.
    pub fn flush(
        &mut self,
        buffer: &mut EventBuffer,
        pool: &mut ClusterPool,
        now: Micros,
        retention: Micros,
        threads: Option<&rayon::ThreadPool>,
    ) -> FlushReport {
        // now - t > retention  <=>  t < now - retention
        let cutoff = now.saturating_sub(retention);
        let mut deactivated = 0;
        let removed = buffer.expire(cutoff, |x, y, e| {
            if let Some(id) = e.cluster {
                if pool.remove(id, x, y) {
                    deactivated += 1;
                }
            }
        });
        pool.take_shrunk(&mut self.shrunk);
        self.shrunk.retain(|&id| pool.get(id).is_active());

        let (buf, clusters) = (&*buffer, &*pool);
        let extent = |&id: &ClusterId| {
            buf.extent_of(id, clusters.get(id).bbox)
                .expect("an active cluster has buffered members inside its bbox")
        };
        self.extents.clear();
        match threads {
            Some(tp) if self.shrunk.len() > 1 => {
                tp.install(|| self.shrunk.par_iter().map(extent).collect_into_vec(&mut self.extents))
            }
            _ => self.extents.extend(self.shrunk.iter().map(extent)),
        }
        for (&id, &b) in self.shrunk.iter().zip(&self.extents) {
            pool.set_bbox(id, b);
        }
        FlushReport { removed, deactivated }
    }
}

/// Active clusters ordered by descending size, then age (older first), then
/// id. Inactive clusters are excluded.
pub fn sort_clusters(pool: &ClusterPool, out: &mut Vec<ClusterId>) {
    out.clear();
    out.extend(pool.active().map(|c| c.id));
    out.sort_unstable_by_key(|&id| {
        let c = pool.get(id);
        (std::cmp::Reverse(c.size), c.created_at, c.id)
    });
}
