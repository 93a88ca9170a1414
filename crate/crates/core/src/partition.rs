//! Spatial partitioning and per-partition admission control.

use crate::error::{Error, Result};
use crate::event::{Event, Micros};

/// Balanced `cols x rows` grid over the sensor. Column `floor(x·cols/width)`,
/// row `floor(y·rows/height)`; cell sizes differ by at most one pixel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PartitionGrid {
    pub cols: u16,
    pub rows: u16,
    pub width: u16,
    pub height: u16,
}

impl PartitionGrid {
    pub fn new(cols: u16, rows: u16, width: u16, height: u16) -> Self {
        assert!(cols > 0 && rows > 0 && width > 0 && height > 0);
        Self {
            cols,
            rows,
            width,
            height,
        }
    }

    pub fn len(&self) -> usize {
        self.cols as usize * self.rows as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn partition_of(&self, x: u16, y: u16) -> Option<usize> {
        if x >= self.width || y >= self.height {
            return None;
        }
        let col = x as usize * self.cols as usize / self.width as usize;
        let row = y as usize * self.rows as usize / self.height as usize;
        Some(row * self.cols as usize + col)
    }

    /// Like [`partition_of`](Self::partition_of) but reports out-of-bounds
    /// events as stream corruption.
    pub fn route(&self, event: &Event) -> Result<usize> {
        self.partition_of(event.x, event.y).ok_or(Error::OutOfBounds {
            x: event.x as u32,
            y: event.y as u32,
            t: event.t,
            width: self.width as u32,
            height: self.height as u32,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Admission {
    Admit,
    Drop,
}

/// Event-time busy token of one handler: after admitting an event at `t`,
/// the handler ignores everything before `t + budget`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AdmissionGate {
    busy_until: Micros,
}

impl AdmissionGate {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn busy_until(&self) -> Micros {
        self.busy_until
    }

    #[inline]
    pub fn admit(&mut self, t: Micros, budget: Micros) -> Admission {
        if t >= self.busy_until {
            self.busy_until = t.saturating_add(budget);
            Admission::Admit
        } else {
            Admission::Drop
        }
    }
}
