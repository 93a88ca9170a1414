//! Per-pixel event history.
//!
//! Each pixel owns a fixed ring of `depth` slots holding its most recent
//! buffered events, oldest at the ring start. Storage is allocated once;
//! pushing into a full ring evicts the oldest entry.

use std::collections::VecDeque;

use crate::event::{BBox, Micros};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ClusterId(pub u32);

impl ClusterId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl std::fmt::Display for ClusterId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct BufferedEvent {
    pub t: Micros,
    pub cluster: Option<ClusterId>,
}

#[derive(Debug, Clone)]
pub struct EventBuffer {
    width: u16,
    height: u16,
    depth: u8,
    slots: Vec<BufferedEvent>,
    start: Vec<u8>,
    len: Vec<u8>,
    live: usize,
    /// `(t, pixel)` of every push, oldest first; drives expiry.
    order: VecDeque<(Micros, u32)>,
}

impl EventBuffer {
    pub fn new(width: u16, height: u16, depth: u8) -> Self {
        assert!(depth > 0, "pixel depth must be positive");
        let pixels = width as usize * height as usize;
        Self {
            width,
            height,
            depth,
            slots: vec![BufferedEvent::default(); pixels * depth as usize],
            start: vec![0; pixels],
            len: vec![0; pixels],
            live: 0,
            order: VecDeque::new(),
        }
    }

    pub fn width(&self) -> u16 {
        self.width
    }

    pub fn height(&self) -> u16 {
        self.height
    }

    pub fn depth(&self) -> u8 {
        self.depth
    }

    /// Number of buffered events across all pixels.
    pub fn live(&self) -> usize {
        self.live
    }

    #[inline]
    fn pixel(&self, x: u16, y: u16) -> usize {
        debug_assert!(x < self.width && y < self.height);
        y as usize * self.width as usize + x as usize
    }

    pub fn len_at(&self, x: u16, y: u16) -> usize {
        self.len[self.pixel(x, y)] as usize
    }

    /// Most recent event at the pixel.
    #[inline]
    pub fn top(&self, x: u16, y: u16) -> Option<BufferedEvent> {
        let p = self.pixel(x, y);
        let len = self.len[p];
        if len == 0 {
            return None;
        }
        let depth = self.depth as usize;
        let slot = (self.start[p] as usize + len as usize - 1) % depth;
        Some(self.slots[p * depth + slot])
    }

    /// Events at the pixel, newest first.
    #[inline]
    pub fn iter_at(&self, x: u16, y: u16) -> impl Iterator<Item = BufferedEvent> + '_ {
        let p = self.pixel(x, y);
        let depth = self.depth as usize;
        let start = self.start[p] as usize;
        let len = self.len[p] as usize;
        let ring = &self.slots[p * depth..(p + 1) * depth];
        (0..len).rev().map(move |i| ring[(start + i) % depth])
    }

    /// Pushes a new top entry. Returns the evicted oldest entry when the
    /// pixel was already full.
    #[inline]
    pub fn push(&mut self, x: u16, y: u16, event: BufferedEvent) -> Option<BufferedEvent> {
        let p = self.pixel(x, y);
        let depth = self.depth as usize;
        let base = p * depth;
        let len = self.len[p] as usize;
        let start = self.start[p] as usize;
        self.order.push_back((event.t, p as u32));
        if len < depth {
            self.slots[base + (start + len) % depth] = event;
            self.len[p] += 1;
            self.live += 1;
            None
        } else {
            // Full ring: the oldest slot becomes the newest.
            let evicted = std::mem::replace(&mut self.slots[base + start], event);
            self.start[p] = ((start + 1) % depth) as u8;
            Some(evicted)
        }
    }

    /// Visits every buffered event as `(x, y, event)`, row-major, oldest
    /// first within a pixel.
    pub fn for_each(&self, mut f: impl FnMut(u16, u16, BufferedEvent)) {
        let depth = self.depth as usize;
        for y in 0..self.height {
            for x in 0..self.width {
                let p = self.pixel(x, y);
                let start = self.start[p] as usize;
                for i in 0..self.len[p] as usize {
                    f(x, y, self.slots[p * depth + (start + i) % depth]);
                }
            }
        }
    }

    /// Removes every entry with `t < cutoff`, visiting each as
    /// `(x, y, event)` in timestamp order. Returns the number removed.
    pub fn expire(&mut self, cutoff: Micros, mut visit: impl FnMut(u16, u16, BufferedEvent)) -> usize {
        let depth = self.depth as usize;
        let width = self.width as usize;
        let mut removed = 0;
        while let Some(&(t, p)) = self.order.front() {
            if t >= cutoff {
                break;
            }
            self.order.pop_front();
            // Entries already evicted or expired leave a stale record here.
            let p = p as usize;
            let (x, y) = ((p % width) as u16, (p / width) as u16);
            while self.len[p] > 0 {
                let start = self.start[p] as usize;
                let entry = self.slots[p * depth + start];
                if entry.t >= cutoff {
                    break;
                }
                visit(x, y, entry);
                self.start[p] = ((start + 1) % depth) as u8;
                self.len[p] -= 1;
                removed += 1;
            }
        }
        self.live -= removed;
        removed
    }

    /// Exact extent of the entries belonging to `id`, searching only
    /// `within`.
    pub fn extent_of(&self, id: ClusterId, within: BBox) -> Option<BBox> {
        let depth = self.depth as usize;
        let mut out: Option<BBox> = None;
        for y in within.min_y..=within.max_y.min(self.height - 1) {
            for x in within.min_x..=within.max_x.min(self.width - 1) {
                let p = self.pixel(x, y);
                let start = self.start[p] as usize;
                let ring = &self.slots[p * depth..(p + 1) * depth];
                let member = (0..self.len[p] as usize).any(|i| ring[(start + i) % depth].cluster == Some(id));
                if member {
                    match &mut out {
                        Some(b) => b.expand(x, y),
                        None => out = Some(BBox::point(x, y)),
                    }
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(t: Micros) -> BufferedEvent {
        BufferedEvent { t, cluster: None }
    }

    #[test]
    fn push_orders_newest_first_and_evicts_oldest() {
        let mut buf = EventBuffer::new(4, 3, 3);
        assert_eq!(buf.top(1, 1), None);
        for t in 1..=3 {
            assert_eq!(buf.push(1, 1, ev(t)), None);
        }
        assert_eq!(buf.iter_at(1, 1).map(|e| e.t).collect::<Vec<_>>(), vec![3, 2, 1]);
        assert_eq!(buf.push(1, 1, ev(4)), Some(ev(1)));
        assert_eq!(buf.push(1, 1, ev(5)), Some(ev(2)));
        assert_eq!(buf.iter_at(1, 1).map(|e| e.t).collect::<Vec<_>>(), vec![5, 4, 3]);
        assert_eq!(buf.top(1, 1), Some(ev(5)));
        assert_eq!(buf.live(), 3);
        assert_eq!(buf.len_at(1, 1), 3);
    }

    #[test]
    fn expiry_removes_only_older_entries() {
        let mut buf = EventBuffer::new(5, 7, 4);
        for t in 0..3 {
            for y in 0..7 {
                for x in 0..5 {
                    buf.push(x, y, ev(t * 10 + y as u64));
                }
            }
        }
        let mut seen = Vec::new();
        let removed = buf.expire(10, |x, y, e| seen.push((x, y, e.t)));
        assert_eq!(removed, 35);
        assert!(seen.iter().all(|&(_, y, t)| t == y as u64));
        assert_eq!(buf.live(), 70);
        assert_eq!(buf.iter_at(4, 6).map(|e| e.t).collect::<Vec<_>>(), vec![26, 16]);
        assert_eq!(buf.expire(10, |_, _, _| panic!("nothing left to expire")), 0);
    }

    #[test]
    fn expiry_skips_evicted_entries() {
        let mut buf = EventBuffer::new(2, 2, 2);
        for t in [1, 2, 3] {
            buf.push(0, 0, ev(t));
        }
        let mut seen = Vec::new();
        assert_eq!(buf.expire(3, |_, _, e| seen.push(e.t)), 1);
        assert_eq!(seen, vec![2]);
        assert_eq!(buf.iter_at(0, 0).map(|e| e.t).collect::<Vec<_>>(), vec![3]);
    }

    #[test]
    fn extent_of_one_cluster() {
        let mut buf = EventBuffer::new(10, 10, 2);
        let (a, b) = (ClusterId(0), ClusterId(1));
        buf.push(2, 3, BufferedEvent { t: 0, cluster: Some(a) });
        buf.push(6, 1, BufferedEvent { t: 0, cluster: Some(a) });
        buf.push(4, 8, BufferedEvent { t: 0, cluster: Some(b) });
        let all = BBox { min_x: 0, min_y: 0, max_x: 9, max_y: 9 };
        assert_eq!(buf.extent_of(a, all), Some(BBox { min_x: 2, min_y: 1, max_x: 6, max_y: 3 }));
        assert_eq!(buf.extent_of(b, BBox::point(4, 8)), Some(BBox::point(4, 8)));
        assert_eq!(buf.extent_of(ClusterId(2), all), None);
    }
}
