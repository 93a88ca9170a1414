use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::event::{BBox, Micros};
use crate::pipeline::DetectionSink;
use crate::scalar::Scalar;
use crate::scorer::Detection;

pub const DETECTION_HEADER: &str = "t,cluster_id,cx,cy,xmin,ymin,xmax,ymax,vx,vy,ux,uy,s,w";

/// Writes detections as fixed six-decimal CSV.
pub struct DetectionWriter<W: Write> {
    inner: W,
}

impl<W: Write> DetectionWriter<W> {
    pub fn new(mut inner: W) -> Result<Self> {
        writeln!(inner, "{DETECTION_HEADER}")?;
        Ok(Self { inner })
    }

    pub fn write<F: Scalar>(&mut self, d: &Detection<F>) -> Result<()> {
        writeln!(
            self.inner,
            "{},{},{:.6},{:.6},{},{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
            d.t,
            d.cluster,
            d.centroid.x,
            d.centroid.y,
            d.bbox.min_x,
            d.bbox.min_y,
            d.bbox.max_x,
            d.bbox.max_y,
            d.long_velocity.x,
            d.long_velocity.y,
            d.short_velocity.x,
            d.short_velocity.y,
            d.stability,
            d.confidence,
        )?;
        Ok(())
    }

    pub fn into_inner(self) -> W {
        self.inner
    }
}

impl<W: Write, F: Scalar> DetectionSink<F> for DetectionWriter<W> {
    fn emit(&mut self, detection: &Detection<F>) -> Result<()> {
        self.write(detection)
    }
}

/// A detection parsed back from a detection file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionRecord {
    pub t: Micros,
    pub cluster: u32,
    pub cx: f64,
    pub cy: f64,
    pub bbox: BBox,
    pub vx: f64,
    pub vy: f64,
    pub ux: f64,
    pub uy: f64,
    pub s: f64,
    pub w: f64,
}

impl<F: Scalar> From<&Detection<F>> for DetectionRecord {
    fn from(d: &Detection<F>) -> Self {
        Self {
            t: d.t,
            cluster: d.cluster.0,
            cx: d.centroid.x.as_f64(),
            cy: d.centroid.y.as_f64(),
            bbox: d.bbox,
            vx: d.long_velocity.x.as_f64(),
            vy: d.long_velocity.y.as_f64(),
            ux: d.short_velocity.x.as_f64(),
            uy: d.short_velocity.y.as_f64(),
            s: d.stability.as_f64(),
            w: d.confidence.as_f64(),
        }
    }
}

pub fn read_detections(reader: impl BufRead) -> Result<Vec<DetectionRecord>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i as u64 + 1;
        if i == 0 {
            if line.trim_end() != DETECTION_HEADER {
                return Err(Error::DetectionRecord {
                    line: 1,
                    reason: "missing header".into(),
                });
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        out.push(parse(&line).map_err(|reason| Error::DetectionRecord { line: lineno, reason })?);
    }
    Ok(out)
}

fn parse(line: &str) -> std::result::Result<DetectionRecord, String> {
    let f: Vec<&str> = line.trim_end_matches('\r').split(',').collect();
    if f.len() != 14 {
        return Err(format!("expected 14 fields, found {}", f.len()));
    }
    fn num<T: std::str::FromStr>(s: &str) -> std::result::Result<T, String> {
        s.trim().parse().map_err(|_| format!("bad number '{s}'"))
    }
    Ok(DetectionRecord {
        t: num(f[0])?,
        cluster: num(f[1])?,
        cx: num(f[2])?,
        cy: num(f[3])?,
        bbox: BBox {
            min_x: num(f[4])?,
            min_y: num(f[5])?,
            max_x: num(f[6])?,
            max_y: num(f[7])?,
        },
        vx: num(f[8])?,
        vy: num(f[9])?,
        ux: num(f[10])?,
        uy: num(f[11])?,
        s: num(f[12])?,
        w: num(f[13])?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::buffer::ClusterId;
    use crate::scalar::Vec2;
    use proptest::prelude::*;
    use std::io::Cursor;

    fn detection(w: f64) -> Detection<f64> {
        Detection {
            t: 1_200_000,
            cluster: ClusterId(4),
            centroid: Vec2::new(10.5, 20.25),
            bbox: BBox { min_x: 1, min_y: 2, max_x: 30, max_y: 40 },
            long_velocity: Vec2::new(3.0, -1.0),
            short_velocity: Vec2::new(2.5, -1.5),
            stability: -12.0,
            confidence: w,
        }
    }

    #[test]
    fn empty_file_is_header_only() {
        let w = DetectionWriter::new(Vec::new()).unwrap();
        assert_eq!(String::from_utf8(w.into_inner()).unwrap(), format!("{DETECTION_HEADER}\n"));
    }

    #[test]
    fn zero_confidence_formats_fixed() {
        let mut w = DetectionWriter::new(Vec::new()).unwrap();
        w.write(&detection(0.0)).unwrap();
        let text = String::from_utf8(w.into_inner()).unwrap();
        let row = text.lines().nth(1).unwrap();
        assert_eq!(
            row,
            "1200000,4,10.500000,20.250000,1,2,30,40,3.000000,-1.000000,2.500000,-1.500000,-12.000000,0.000000"
        );
    }

    proptest! {
        #[test]
        fn fixed_precision_values_round_trip(micro in proptest::collection::vec(-10_000_000_000i64..10_000_000_000, 8)) {
            let g = |i: usize| micro[i] as f64 / 1e6;
            let d = Detection {
                t: 9, cluster: ClusterId(1),
                centroid: Vec2::new(g(0), g(1)),
                bbox: BBox { min_x: 0, min_y: 0, max_x: 1, max_y: 1 },
                long_velocity: Vec2::new(g(2), g(3)),
                short_velocity: Vec2::new(g(4), g(5)),
                stability: g(6), confidence: g(7),
            };
            let mut w = DetectionWriter::new(Vec::new()).unwrap();
            w.write(&d).unwrap();
            let bytes = w.into_inner();
            let back = read_detections(Cursor::new(bytes.clone())).unwrap();
            prop_assert_eq!(back[0], DetectionRecord::from(&d));
        }
    }
}
