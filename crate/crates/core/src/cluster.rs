//! Fixed-capacity cluster pool with incremental statistics.

use crate::buffer::ClusterId;
use crate::error::{Error, Result};
use crate::event::{BBox, Micros};
use crate::scalar::{Scalar, Vec2};

/// A live group of buffered events.
///
/// `size`, `sum_x` and `sum_y` are exact at all times. `bbox` only grows
/// between flushes and is recomputed exactly on every flush, so it may be
/// a superset of the members' extent after an eviction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cluster {
    pub id: ClusterId,
    pub size: u32,
    pub sum_x: u64,
    pub sum_y: u64,
    pub bbox: BBox,
    pub created_at: Micros,
    pub tracked: bool,
}

impl Cluster {
    fn empty(id: ClusterId) -> Self {
        Self {
            id,
            size: 0,
            sum_x: 0,
            sum_y: 0,
            bbox: BBox::point(0, 0),
            created_at: 0,
            tracked: false,
        }
    }

    pub fn is_active(&self) -> bool {
        self.size > 0
    }

    pub fn centroid<F: Scalar>(&self) -> Result<Vec2<F>> {
        if self.size == 0 {
            return Err(Error::InactiveCluster(self.id.0));
        }
        let n = F::of_u64(self.size as u64);
        Ok(Vec2::new(F::of_u64(self.sum_x) / n, F::of_u64(self.sum_y) / n))
    }

    /// Whether the centroid lies within `d` pixels of `(x, y)` in Manhattan
    /// distance. Evaluated in integers: `|Σx − x·n| + |Σy − y·n| ≤ d·n`.
    pub fn centroid_within(&self, x: u16, y: u16, d: u32) -> bool {
        if self.size == 0 {
            return false;
        }
        let n = self.size as i128;
        let dx = (self.sum_x as i128 - x as i128 * n).abs();
        let dy = (self.sum_y as i128 - y as i128 * n).abs();
        dx + dy <= d as i128 * n
    }
}

#[derive(Debug, Clone)]
pub struct ClusterPool {
    clusters: Vec<Cluster>,
    /// Bit set for every slot with `size == 0 && !tracked`.
    free: Vec<u64>,
    in_use: usize,
    high_water: usize,
    exhausted: u64,
    /// Clusters that lost a member since the last `take_shrunk`; their
    /// bbox may be a superset.
    shrunk: Vec<ClusterId>,
    shrunk_flag: Vec<bool>,
}

impl ClusterPool {
    pub fn new(capacity: u32) -> Self {
        let capacity = capacity as usize;
        let words = capacity.div_ceil(64);
        let mut free = vec![u64::MAX; words];
        if capacity % 64 != 0 {
            free[words - 1] = (1u64 << (capacity % 64)) - 1;
        }
        Self {
            clusters: (0..capacity as u32).map(|i| Cluster::empty(ClusterId(i))).collect(),
            free,
            in_use: 0,
            high_water: 0,
            exhausted: 0,
            shrunk: Vec::new(),
            shrunk_flag: vec![false; capacity],
        }
    }

    pub fn capacity(&self) -> usize {
        self.clusters.len()
    }

    #[inline]
    pub fn get(&self, id: ClusterId) -> &Cluster {
        &self.clusters[id.index()]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Cluster> {
        self.clusters.iter()
    }

    pub fn active(&self) -> impl Iterator<Item = &Cluster> {
        self.clusters.iter().filter(|c| c.is_active())
    }

    /// Slots currently holding an active or tracked cluster.
    pub fn in_use(&self) -> usize {
        self.in_use
    }

    pub fn high_water(&self) -> usize {
        self.high_water
    }

    /// Number of allocations that failed because every slot was in use.
    pub fn exhausted(&self) -> u64 {
        self.exhausted
    }

    fn set_free(&mut self, i: usize, free: bool) {
        let (w, b) = (i / 64, i % 64);
        if free {
            self.free[w] |= 1 << b;
            self.in_use -= 1;
        } else {
            self.free[w] &= !(1 << b);
            self.in_use += 1;
            self.high_water = self.high_water.max(self.in_use);
        }
    }

    pub fn is_free(&self, id: ClusterId) -> bool {
        let i = id.index();
        self.free[i / 64] & (1 << (i % 64)) != 0
    }

    /// Starts a new cluster holding the single event `(x, y, t)` in the
    /// lowest free slot.
    pub fn allocate(&mut self, x: u16, y: u16, t: Micros) -> Option<ClusterId> {
        let Some(word) = self.free.iter().position(|w| *w != 0) else {
            self.exhausted += 1;
            return None;
        };
        let i = word * 64 + self.free[word].trailing_zeros() as usize;
        self.set_free(i, false);
        let c = &mut self.clusters[i];
        c.size = 1;
        c.sum_x = x as u64;
        c.sum_y = y as u64;
        c.bbox = BBox::point(x, y);
        c.created_at = t;
        c.tracked = false;
        Some(c.id)
    }

    #[inline]
    pub fn add(&mut self, id: ClusterId, x: u16, y: u16) {
        let c = &mut self.clusters[id.index()];
        debug_assert!(c.size > 0, "adding to inactive cluster {id}");
        c.size += 1;
        c.sum_x += x as u64;
        c.sum_y += y as u64;
        c.bbox.expand(x, y);
    }

    /// Removes one member at `(x, y)`. Returns true if the cluster became
    /// empty.
    #[inline]
    pub fn remove(&mut self, id: ClusterId, x: u16, y: u16) -> bool {
        let i = id.index();
        let c = &mut self.clusters[i];
        c.size -= 1;
        c.sum_x -= x as u64;
        c.sum_y -= y as u64;
        if !self.shrunk_flag[i] {
            self.shrunk_flag[i] = true;
            self.shrunk.push(id);
        }
        if c.size == 0 {
            if !c.tracked {
                self.set_free(i, true);
            }
            return true;
        }
        false
    }

    /// Moves the clusters that lost members since the previous call into
    /// `out`, in id order.
    pub(crate) fn take_shrunk(&mut self, out: &mut Vec<ClusterId>) {
        out.clear();
        for &id in &self.shrunk {
            self.shrunk_flag[id.index()] = false;
        }
        out.append(&mut self.shrunk);
        out.sort_unstable();
    }

    pub(crate) fn set_bbox(&mut self, id: ClusterId, bbox: BBox) {
        self.clusters[id.index()].bbox = bbox;
    }

    pub fn set_tracked(&mut self, id: ClusterId, tracked: bool) {
        let c = &mut self.clusters[id.index()];
        c.tracked = tracked;
        if !tracked && c.size == 0 && !self.is_free(id) {
            self.set_free(id.index(), true);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cluster_of(points: &[(u16, u16)]) -> Cluster {
        let mut pool = ClusterPool::new(4);
        let id = pool.allocate(points[0].0, points[0].1, 0).unwrap();
        for &(x, y) in &points[1..] {
            pool.add(id, x, y);
        }
        pool.get(id).clone()
    }

    #[test]
    fn centroid_single_point() {
        let c = cluster_of(&[(5, 7)]);
        assert_eq!(c.centroid::<f64>().unwrap(), Vec2::new(5.0, 7.0));
    }

    #[test]
    fn centroid_symmetric_square() {
        let c = cluster_of(&[(0, 0), (2, 0), (0, 2), (2, 2)]);
        assert_eq!(c.centroid::<f64>().unwrap(), Vec2::new(1.0, 1.0));
        assert_eq!(c.centroid::<f32>().unwrap(), Vec2::new(1.0, 1.0));
    }

    #[test]
    fn centroid_matches_arithmetic_mean() {
        let pts = [(10u16, 10u16), (11, 10), (13, 12)];
        let c = cluster_of(&pts);
        // mean: (34/3, 32/3)
        let got = c.centroid::<f64>().unwrap();
        assert_eq!(got, Vec2::new(34.0 / 3.0, 32.0 / 3.0));
        assert_eq!(c.bbox, BBox { min_x: 10, min_y: 10, max_x: 13, max_y: 12 });
    }

    #[test]
    fn centroid_of_empty_cluster_is_an_error() {
        let pool = ClusterPool::new(2);
        assert!(matches!(
            pool.get(ClusterId(1)).centroid::<f64>(),
            Err(Error::InactiveCluster(1))
        ));
    }

    #[test]
    fn manhattan_check_is_exact_at_boundary() {
        // centroid (1, 0.5)
        let c = cluster_of(&[(0, 0), (2, 1)]);
        assert!(c.centroid_within(3, 1, 3)); // 2 + 0.5
        assert!(!c.centroid_within(4, 1, 3)); // 3 + 0.5
        assert!(c.centroid_within(4, 1, 4));
    }

    #[test]
    fn allocation_recycles_lowest_untracked_slot() {
        let mut pool = ClusterPool::new(3);
        let a = pool.allocate(0, 0, 1).unwrap();
        let b = pool.allocate(1, 1, 2).unwrap();
        let c = pool.allocate(2, 2, 3).unwrap();
        assert_eq!((a.0, b.0, c.0), (0, 1, 2));
        assert_eq!(pool.allocate(0, 0, 4), None);
        assert_eq!(pool.exhausted(), 1);

        pool.set_tracked(a, true);
        assert!(pool.remove(a, 0, 0));
        assert!(pool.remove(b, 1, 1));
        // a is empty but still tracked, so b's slot is handed out
        assert_eq!(pool.allocate(5, 5, 9), Some(b));
        pool.set_tracked(a, false);
        assert_eq!(pool.allocate(6, 6, 10), Some(a));
        assert_eq!(pool.get(a).created_at, 10);
        assert_eq!(pool.high_water(), 3);
    }
}
