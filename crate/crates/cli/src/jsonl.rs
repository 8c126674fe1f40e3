//! One JSON object per detection:
//!
//! ```text
//! {"frame": 0, "id": 3, "centroid": [x, y], "area": 12,
//!  "mask": [[y, x0, len], ...], "activity": 1.5, "parent": 7}
//! ```
//!
//! `area`, `mask`, `activity` and `parent` are optional. `parent` is the id
//! of the mother in the previous frame, `null` for a cell that appears. A
//! sequence has ground truth iff every detection after frame 0 carries it.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize};
use trackuq_core::model::{Assignment, Detection, Frame, Mask};

use crate::error::{CliError, Result};
use crate::sequence::Sequence;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Record {
    pub frame: usize,
    pub id: u32,
    pub centroid: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub area: Option<u64>,
    /// Runs `[y, x0, len]` covering pixels `x0..x0+len` of row `y`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<Vec<[i64; 3]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub activity: Option<f64>,
    #[serde(default, deserialize_with = "present", skip_serializing_if = "Option::is_none")]
    pub parent: Option<Option<u32>>,
}

// distinguishes `"parent": null` from a missing key
fn present<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Option<Option<u32>>, D::Error> {
    Option::<u32>::deserialize(d).map(Some)
}

fn decode_mask(runs: &[[i64; 3]]) -> std::result::Result<Mask, String> {
    let mut pixels = Vec::new();
    for &[y, x0, len] in runs {
        if len <= 0 {
            return Err(format!("mask run [{y}, {x0}, {len}] has non-positive length"));
        }
        pixels.extend((x0..x0 + len).map(|x| (x, y)));
    }
    Ok(Mask::new(pixels))
}

/// Row-wise run-length encoding of a mask.
pub fn encode_mask(mask: &Mask) -> Vec<[i64; 3]> {
    let mut rows: BTreeMap<i64, Vec<i64>> = BTreeMap::new();
    for (x, y) in mask.pixels() {
        rows.entry(y).or_default().push(x);
    }
    let mut runs = Vec::new();
    for (y, mut xs) in rows {
        xs.sort_unstable();
        let mut start = xs[0];
        let mut prev = xs[0];
        for &x in &xs[1..] {
            if x != prev + 1 {
                runs.push([y, start, prev - start + 1]);
                start = x;
            }
            prev = x;
        }
        runs.push([y, start, prev - start + 1]);
    }
    runs
}

fn to_detection(r: &Record) -> std::result::Result<Detection, String> {
    let mut det = match &r.mask {
        Some(runs) => {
            let mask = decode_mask(runs)?;
            let mut det = Detection::from_mask(r.id, mask).map_err(|e| e.to_string())?;
            det.centroid = r.centroid.clone();
            det
        }
        None => {
            let mut det = Detection::point(r.id, r.centroid.clone());
            det.area = r.area.unwrap_or(0);
            det
        }
    };
    if let (Some(area), Some(_)) = (r.area, &r.mask) {
        if area != det.area {
            return Err(format!("area {area} disagrees with the mask's {} pixels", det.area));
        }
    }
    det.activity = r.activity;
    det.validate().map_err(|e| e.to_string())?;
    Ok(det)
}

pub fn parse_str(text: &str, file: &Path) -> Result<Sequence> {
    let mut frames: BTreeMap<usize, Vec<(usize, Record)>> = BTreeMap::new();
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let rec: Record = serde_json::from_str(raw).map_err(|e| CliError::parse(file, line, e.to_string()))?;
        frames.entry(rec.frame).or_default().push((line, rec));
    }
    let count = frames.keys().next_back().map_or(0, |&t| t + 1);
    let mut out = Vec::with_capacity(count);
    for t in 0..count {
        let recs = frames.get(&t).map(Vec::as_slice).unwrap_or(&[]);
        let dets = recs
            .iter()
            .map(|(line, r)| to_detection(r).map_err(|m| CliError::parse(file, *line, m)))
            .collect::<Result<Vec<_>>>()?;
        let frame = Frame::new(t, dets).map_err(|e| {
            CliError::parse(file, recs.first().map_or(0, |(l, _)| *l), e.to_string())
        })?;
        out.push(frame);
    }

    let later: Vec<&(usize, Record)> = frames.range(1..).flat_map(|(_, v)| v).collect();
    let labeled = later.iter().filter(|(_, r)| r.parent.is_some()).count();
    let ground_truth = if labeled == 0 {
        None
    } else if labeled < later.len() {
        return Err(CliError::Integrity(format!(
            "{}: only {labeled} of {} detections after frame 0 carry a parent",
            file.display(),
            later.len()
        )));
    } else {
        let mut gt = Vec::with_capacity(count.saturating_sub(1));
        for t in 1..count {
            let prev = &out[t - 1];
            let recs = frames.get(&t).map(Vec::as_slice).unwrap_or(&[]);
            let parents = recs
                .iter()
                .map(|(line, r)| match r.parent.flatten() {
                    None => Ok(None),
                    Some(pid) => prev.position_of(pid).map(Some).ok_or_else(|| {
                        CliError::parse(file, *line, format!("parent {pid} is not in frame {}", t - 1))
                    }),
                })
                .collect::<Result<Vec<_>>>()?;
            gt.push(Assignment::from_parents(prev.len(), &parents)?);
        }
        Some(gt)
    };
    Sequence::new(out, ground_truth, file.display().to_string())
}

pub fn load(path: &Path) -> Result<Sequence> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_str(&text, path)
}

/// Records for every detection of `seq`, in frame order.
pub fn records(seq: &Sequence) -> Vec<Record> {
    let mut out = Vec::new();
    for (t, frame) in seq.frames.iter().enumerate() {
        let parents = t.checked_sub(1).and_then(|s| seq.truth(s)).map(Assignment::parents);
        for (j, d) in frame.detections.iter().enumerate() {
            out.push(Record {
                frame: t,
                id: d.id,
                centroid: d.centroid.clone(),
                area: (d.area > 0).then_some(d.area),
                mask: d.mask.as_ref().map(encode_mask),
                activity: d.activity,
                parent: parents
                    .as_ref()
                    .map(|p| p[j].map(|i| seq.frames[t - 1].detections[i].id)),
            });
        }
    }
    out
}

pub fn write(seq: &Sequence, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    for r in records(seq) {
        serde_json::to_writer(&mut buf, &r).expect("records serialize");
        buf.push(b'\n');
    }
    let mut f = fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    f.write_all(&buf).map_err(|e| CliError::io(path, e))
}
