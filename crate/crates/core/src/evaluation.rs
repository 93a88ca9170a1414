//! Detection matching, ROC curves and the angle-scale sweep.
//!
//! A ground-truth box counts as a true positive at a threshold when any
//! detection with confidence at or above it intersects the box, otherwise as
//! a false negative. A detection intersecting no box at all is a false
//! positive; one intersecting only difficult boxes is ignored. The false
//! positive axis is normalised by the count at the lowest threshold.

use std::io::Write;

use rayon::prelude::*;

use crate::error::Result;
use crate::event::{Event, Micros};
use crate::io::{DetectionRecord, Frame, GroundTruthBox, Rect};
use crate::params::Params;
use crate::pipeline::Pipeline;
use crate::scalar::Scalar;
use crate::scorer::Detection;

/// Counts at one confidence threshold.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MatchCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl std::ops::AddAssign for MatchCounts {
    fn add_assign(&mut self, o: Self) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.fn_ += o.fn_;
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchTally {
    pub threshold: f64,
    pub counts: MatchCounts,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    pub threshold: f64,
    pub counts: MatchCounts,
    pub tpr: f64,
    pub fpn: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Roc {
    /// Ordered by threshold descending.
    pub points: Vec<RocPoint>,
    pub auc: f64,
}

/// A detection as seen by the matcher.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scored {
    pub rect: Rect,
    pub confidence: f64,
}

/// `0.00, 0.01, …, 1.00`.
pub fn default_thresholds() -> Vec<f64> {
    (0..=100).map(|k| k as f64 / 100.0).collect()
}

/// Matches one frame at one threshold.
pub fn match_frame(detections: &[Scored], truths: &[GroundTruthBox], threshold: f64) -> MatchCounts {
    let live: Vec<&Scored> = detections.iter().filter(|d| d.confidence >= threshold).collect();
    let mut counts = MatchCounts::default();
    for t in truths.iter().filter(|t| !t.difficult) {
        if live.iter().any(|d| d.rect.intersects(&t.rect)) {
            counts.tp += 1;
        } else {
            counts.fn_ += 1;
        }
    }
    counts.fp = live
        .iter()
        .filter(|d| !truths.iter().any(|t| d.rect.intersects(&t.rect)))
        .count() as u64;
    counts
}

/// Per-frame summary from which the counts at every threshold follow:
/// a truth is matched at threshold `h` iff its best intersecting confidence
/// is `>= h`; a stray detection is a false positive iff its confidence is.
#[derive(Debug, Clone, Default)]
struct FrameSummary {
    /// Best intersecting confidence per evaluated truth; `None` if no
    /// detection intersects it.
    best: Vec<Option<f64>>,
    stray: Vec<f64>,
}

fn summarise(detections: &[Scored], truths: &[GroundTruthBox]) -> FrameSummary {
    let best = truths
        .iter()
        .filter(|t| !t.difficult)
        .map(|t| {
            detections
                .iter()
                .filter(|d| d.rect.intersects(&t.rect))
                .map(|d| d.confidence)
                .reduce(f64::max)
        })
        .collect();
    let stray = detections
        .iter()
        .filter(|d| !truths.iter().any(|t| d.rect.intersects(&t.rect)))
        .map(|d| d.confidence)
        .collect();
    FrameSummary { best, stray }
}

/// Counts at every threshold over all frames. `thresholds` must be sorted
/// ascending.
pub fn tally(frames: &[(Vec<Scored>, Vec<GroundTruthBox>)], thresholds: &[f64]) -> Vec<MatchTally> {
    assert!(thresholds.windows(2).all(|w| w[0] <= w[1]), "thresholds must be ascending");
    let n = thresholds.len();
    // Number of thresholds a confidence clears: those are a prefix.
    let cleared = |w: f64| thresholds.partition_point(|&h| h <= w);
    let mut tp_hist = vec![0u64; n + 1];
    let mut fp_hist = vec![0u64; n + 1];
    let mut truths = 0u64;
    for (dets, boxes) in frames {
        let s = summarise(dets, boxes);
        truths += s.best.len() as u64;
        for b in s.best.into_iter().flatten() {
            tp_hist[cleared(b)] += 1;
        }
        for w in s.stray {
            fp_hist[cleared(w)] += 1;
        }
    }
    // A count in bucket c applies to thresholds 0..c.
    let mut out = vec![
        MatchTally {
            threshold: 0.0,
            counts: MatchCounts::default()
        };
        n
    ];
    let (mut tp, mut fp) = (0u64, 0u64);
    for k in (0..n).rev() {
        tp += tp_hist[k + 1];
        fp += fp_hist[k + 1];
        out[k] = MatchTally {
            threshold: thresholds[k],
            counts: MatchCounts { tp, fp, fn_: truths - tp },
        };
    }
    out
}

/// ROC curve and trapezoidal AUC, with the curve extended to `(0, 0)` and
/// `(1, tpr at the lowest threshold)`.
pub fn roc(tallies: &[MatchTally]) -> Roc {
    let mut sorted = tallies.to_vec();
    sorted.sort_by(|a, b| b.threshold.total_cmp(&a.threshold));
    let fp_max = sorted.last().map_or(0, |t| t.counts.fp);
    let points: Vec<RocPoint> = sorted
        .iter()
        .map(|t| {
            let c = t.counts;
            let pos = c.tp + c.fn_;
            RocPoint {
                threshold: t.threshold,
                counts: c,
                tpr: if pos == 0 { 0.0 } else { c.tp as f64 / pos as f64 },
                fpn: if fp_max == 0 { 0.0 } else { c.fp as f64 / fp_max as f64 },
            }
        })
        .collect();
    let mut curve = vec![(0.0, 0.0)];
    curve.extend(points.iter().map(|p| (p.fpn, p.tpr)));
    curve.push((1.0, points.last().map_or(0.0, |p| p.tpr)));
    let auc = curve
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0)
        .sum::<f64>()
        .clamp(0.0, 1.0);
    Roc { points, auc }
}

/// Pairs each annotation frame with the detections representing it: the
/// latest detection per cluster with `t <= frame_t` and
/// `frame_t - t < window`.
pub fn associate(
    detections: &[DetectionRecord],
    frames: &[Frame],
    window: Micros,
) -> Vec<(Vec<Scored>, Vec<GroundTruthBox>)> {
    let mut sorted: Vec<&DetectionRecord> = detections.iter().collect();
    sorted.sort_by_key(|d| d.t);
    frames
        .iter()
        .map(|f| {
            let hi = sorted.partition_point(|d| d.t <= f.t);
            let lo = sorted.partition_point(|d| d.t + window <= f.t);
            let mut latest: Vec<&DetectionRecord> = Vec::new();
            for d in &sorted[lo..hi] {
                match latest.iter_mut().find(|l| l.cluster == d.cluster) {
                    Some(l) => *l = d,
                    None => latest.push(d),
                }
            }
            let scored = latest
                .into_iter()
                .map(|d| Scored {
                    rect: d.bbox.into(),
                    confidence: d.w,
                })
                .collect();
            (scored, f.boxes.clone())
        })
        .collect()
}

pub fn evaluate(detections: &[DetectionRecord], frames: &[Frame], window: Micros, thresholds: &[f64]) -> Roc {
    roc(&tally(&associate(detections, frames, window), thresholds))
}

pub fn write_roc_csv(mut w: impl Write, roc: &Roc) -> Result<()> {
    writeln!(w, "threshold,tp,fp,fn,tpr,fpn")?;
    for p in &roc.points {
        writeln!(
            w,
            "{:.2},{},{},{},{:.6},{:.6}",
            p.threshold, p.counts.tp, p.counts.fp, p.counts.fn_, p.tpr, p.fpn
        )?;
    }
    Ok(())
}

/// Runs the pipeline once on `events` and scores its detections.
pub fn run_and_evaluate<F: Scalar>(events: &[Event], frames: &[Frame], params: &Params) -> Result<Roc> {
    let mut pipeline = Pipeline::<F>::new(params.clone())?;
    let mut detections: Vec<Detection<F>> = Vec::new();
    pipeline.run_events(events, &mut detections)?;
    let records: Vec<DetectionRecord> = detections.iter().map(DetectionRecord::from).collect();
    Ok(evaluate(&records, frames, params.tick_period_us, &default_thresholds()))
}

/// AUC for every angle scale in `grid`, each run independently and in
/// parallel on the current rayon pool.
pub fn sweep_scaling<F: Scalar>(
    events: &[Event],
    frames: &[Frame],
    params: &Params,
    grid: &[f64],
) -> Result<Vec<(f64, f64)>> {
    grid.par_iter()
        .map(|&ca| {
            let p = Params {
                angle_scale: ca,
                ..params.clone()
            };
            run_and_evaluate::<F>(events, frames, &p).map(|r| (ca, r.auc))
        })
        .collect()
}

/// `min, min + step, …` up to `max` inclusive (with a small tolerance for
/// accumulated rounding).
pub fn scaling_grid(min: f64, max: f64, step: f64) -> Vec<f64> {
    if !(step > 0.0) || max < min {
        return vec![min];
    }
    let n = ((max - min) / step + 1e-9).floor() as usize;
    (0..=n).map(|k| min + k as f64 * step).collect()
}

pub fn write_sweep_csv(mut w: impl Write, rows: &[(f64, f64)]) -> Result<()> {
    writeln!(w, "c_a,auc")?;
    for (ca, auc) in rows {
        writeln!(w, "{ca},{auc:.6}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn truth(r: Rect) -> GroundTruthBox {
        GroundTruthBox {
            frame_t: 0,
            rect: r,
            label: "vessel".into(),
            difficult: false,
        }
    }

    fn det(r: Rect, w: f64) -> Scored {
        Scored { rect: r, confidence: w }
    }

    #[test]
    fn single_match() {
        let t = [truth(Rect::new(0, 0, 9, 9))];
        let c = match_frame(&[det(Rect::new(5, 5, 20, 20), 0.9)], &t, 0.5);
        assert_eq!(c, MatchCounts { tp: 1, fp: 0, fn_: 0 });
    }

    #[test]
    fn extra_intersector_is_ignored() {
        let t = [truth(Rect::new(0, 0, 9, 9))];
        let d = [det(Rect::new(0, 0, 2, 2), 0.9), det(Rect::new(8, 8, 12, 12), 0.6)];
        assert_eq!(match_frame(&d, &t, 0.5), MatchCounts { tp: 1, fp: 0, fn_: 0 });
    }

    #[test]
    fn miss_counts_both_ways() {
        let t = [truth(Rect::new(0, 0, 9, 9))];
        let d = [det(Rect::new(50, 50, 60, 60), 0.9)];
        assert_eq!(match_frame(&d, &t, 0.5), MatchCounts { tp: 0, fp: 1, fn_: 1 });
    }

    #[test]
    fn difficult_truths_absorb_detections() {
        let mut t = truth(Rect::new(0, 0, 9, 9));
        t.difficult = true;
        let d = [det(Rect::new(0, 0, 3, 3), 0.9)];
        assert_eq!(match_frame(&d, &[t], 0.0), MatchCounts::default());
    }

    #[test]
    fn perfect_detector_has_unit_auc() {
        let frames: Vec<_> = (0..20)
            .map(|i| {
                let r = Rect::new(i, 0, i + 5, 5);
                (vec![det(r, 1.0)], vec![truth(r)])
            })
            .collect();
        let roc = roc(&tally(&frames, &default_thresholds()));
        assert_eq!(roc.auc, 1.0);
    }

    #[test]
    fn all_missed_has_zero_auc() {
        let frames: Vec<_> = (0..20)
            .map(|i| (vec![det(Rect::new(100, 100, 101, 101), i as f64 / 20.0)], vec![truth(Rect::new(0, 0, 5, 5))]))
            .collect();
        let roc = roc(&tally(&frames, &default_thresholds()));
        assert!(roc.points.iter().all(|p| p.tpr == 0.0));
        assert_eq!(roc.auc, 0.0);
    }

    #[test]
    fn null_model_auc_is_one_half() {
        // Each frame holds one vessel and one clutter blob; both get
        // confidences drawn from the same distribution.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let frames: Vec<_> = (0..1000)
            .map(|_| {
                let vessel = Rect::new(0, 0, 10, 10);
                let clutter = Rect::new(100, 100, 110, 110);
                (
                    vec![det(vessel, rng.random()), det(clutter, rng.random())],
                    vec![truth(vessel)],
                )
            })
            .collect();
        let auc = roc(&tally(&frames, &default_thresholds())).auc;
        assert!((auc - 0.5).abs() < 0.05, "{auc}");
    }

    #[test]
    fn association_takes_latest_per_cluster_inside_window() {
        let rec = |t, cluster, w| DetectionRecord {
            t,
            cluster,
            cx: 0.0,
            cy: 0.0,
            bbox: crate::event::BBox::point(0, 0),
            vx: 0.0,
            vy: 0.0,
            ux: 0.0,
            uy: 0.0,
            s: 0.0,
            w,
        };
        let dets = [rec(100, 1, 0.1), rec(200, 1, 0.2), rec(200, 2, 0.3), rec(250, 1, 0.9), rec(99, 3, 1.0)];
        let frames = [Frame { t: 200, boxes: vec![] }];
        let a = associate(&dets, &frames, 100);
        let ws: Vec<f64> = a[0].0.iter().map(|s| s.confidence).collect();
        assert_eq!(ws, vec![0.2, 0.3]);
    }

    #[test]
    fn grid_includes_endpoints() {
        assert_eq!(scaling_grid(0.0, 1000.0, 100.0).len(), 11);
        assert_eq!(scaling_grid(0.0, 0.3, 0.1).len(), 4);
        assert_eq!(scaling_grid(460.0, 460.0, 10.0), vec![460.0]);
    }

    #[test]
    fn roc_csv_layout() {
        let frames = vec![(vec![det(Rect::new(0, 0, 1, 1), 0.5)], vec![truth(Rect::new(0, 0, 1, 1))])];
        let r = roc(&tally(&frames, &[0.0, 0.5, 1.0]));
        let mut out = Vec::new();
        write_roc_csv(&mut out, &r).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "threshold,tp,fp,fn,tpr,fpn\n1.00,0,0,1,0.000000,0.000000\n0.50,1,0,0,1.000000,0.000000\n0.00,1,0,0,1.000000,0.000000\n"
        );
    }

    fn arb_rect() -> impl Strategy<Value = Rect> {
        (0i32..20, 0i32..20, 0i32..8, 0i32..8).prop_map(|(x, y, w, h)| Rect::new(x, y, x + w, y + h))
    }

    fn arb_frame() -> impl Strategy<Value = (Vec<Scored>, Vec<GroundTruthBox>)> {
        (
            proptest::collection::vec((arb_rect(), 0u32..=100).prop_map(|(r, w)| det(r, w as f64 / 100.0)), 0..6),
            proptest::collection::vec(
                (arb_rect(), any::<bool>()).prop_map(|(r, d)| GroundTruthBox { difficult: d, ..truth(r) }),
                0..4,
            ),
        )
    }

    proptest! {
        #[test]
        fn sweep_matches_per_threshold_matching(frames in proptest::collection::vec(arb_frame(), 0..8)) {
            let thresholds = default_thresholds();
            let fast = tally(&frames, &thresholds);
            for t in &fast {
                let mut slow = MatchCounts::default();
                for (d, g) in &frames {
                    slow += match_frame(d, g, t.threshold);
                }
                prop_assert_eq!(t.counts, slow);
            }
        }

        #[test]
        fn counts_are_monotone(frames in proptest::collection::vec(arb_frame(), 0..8)) {
            let r = roc(&tally(&frames, &default_thresholds()));
            for w in r.points.windows(2) {
                // Descending thresholds.
                prop_assert!(w[1].counts.tp >= w[0].counts.tp);
                prop_assert!(w[1].counts.fp >= w[0].counts.fp);
                prop_assert!(w[1].counts.fn_ <= w[0].counts.fn_);
                prop_assert!(w[1].fpn >= w[0].fpn);
            }
            prop_assert!((0.0..=1.0).contains(&r.auc));
        }
    }
}
