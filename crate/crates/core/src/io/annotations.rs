use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::event::{BBox, Micros};

const HEADER: &str = "frame_t,xmin,ymin,xmax,ymax,label,difficult";

/// Inclusive integer pixel rectangle; may extend past the sensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Rect {
    pub min_x: i32,
    pub min_y: i32,
    pub max_x: i32,
    pub max_y: i32,
}

impl Rect {
    pub fn new(min_x: i32, min_y: i32, max_x: i32, max_y: i32) -> Self {
        Self {
            min_x,
            min_y,
            max_x,
            max_y,
        }
    }

    /// Whether the rectangles share at least one pixel.
    pub fn intersects(&self, other: &Rect) -> bool {
        self.min_x <= other.max_x && other.min_x <= self.max_x && self.min_y <= other.max_y && other.min_y <= self.max_y
    }
}

impl From<BBox> for Rect {
    fn from(b: BBox) -> Self {
        Rect::new(b.min_x as i32, b.min_y as i32, b.max_x as i32, b.max_y as i32)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundTruthBox {
    pub frame_t: Micros,
    pub rect: Rect,
    pub label: String,
    /// Difficult boxes are parsed but excluded from evaluation.
    pub difficult: bool,
}

/// All annotations sharing one timestamp.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub t: Micros,
    pub boxes: Vec<GroundTruthBox>,
}

/// Parses an annotation file into frames ordered by timestamp. Boxes keep
/// their file order within a frame.
pub fn read_annotations(reader: impl BufRead) -> Result<Vec<Frame>> {
    let mut boxes = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i as u64 + 1;
        if i == 0 {
            if line.trim_end() != HEADER {
                return Err(Error::Annotation {
                    line: 1,
                    reason: format!("expected header '{HEADER}'"),
                });
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let b = parse_line(&line).map_err(|reason| Error::Annotation { line: lineno, reason })?;
        boxes.push(b);
    }
    Ok(group_frames(boxes))
}

/// Groups boxes into frames ordered by timestamp, keeping their relative
/// order within a frame.
pub fn group_frames(boxes: impl IntoIterator<Item = GroundTruthBox>) -> Vec<Frame> {
    let mut frames: std::collections::BTreeMap<Micros, Vec<GroundTruthBox>> = Default::default();
    for b in boxes {
        frames.entry(b.frame_t).or_default().push(b);
    }
    frames.into_iter().map(|(t, boxes)| Frame { t, boxes }).collect()
}

fn parse_line(line: &str) -> std::result::Result<GroundTruthBox, String> {
    let fields: Vec<&str> = line.trim_end_matches('\r').split(',').map(str::trim).collect();
    if fields.len() != 7 {
        return Err(format!("expected 7 fields, found {}", fields.len()));
    }
    let frame_t: Micros = fields[0].parse().map_err(|_| format!("bad frame_t '{}'", fields[0]))?;
    let mut coords = [0i32; 4];
    for (k, c) in coords.iter_mut().enumerate() {
        *c = fields[k + 1]
            .parse()
            .map_err(|_| format!("bad coordinate '{}'", fields[k + 1]))?;
    }
    let rect = Rect::new(coords[0], coords[1], coords[2], coords[3]);
    if rect.max_x < rect.min_x || rect.max_y < rect.min_y {
        return Err("box max is less than min".into());
    }
    let difficult = match fields[6] {
        "0" | "false" => false,
        "1" | "true" => true,
        other => return Err(format!("bad difficult flag '{other}'")),
    };
    Ok(GroundTruthBox {
        frame_t,
        rect,
        label: fields[5].to_string(),
        difficult,
    })
}

pub fn write_annotations<'a>(mut w: impl Write, boxes: impl IntoIterator<Item = &'a GroundTruthBox>) -> Result<()> {
    writeln!(w, "{HEADER}")?;
    for b in boxes {
        if b.label.contains([',', '\n', '\r']) {
            return Err(Error::Annotation {
                line: 0,
                reason: format!("label '{}' contains a separator", b.label),
            });
        }
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            b.frame_t, b.rect.min_x, b.rect.min_y, b.rect.max_x, b.rect.max_y, b.label, b.difficult as u8
        )?;
    }
    Ok(())
}
