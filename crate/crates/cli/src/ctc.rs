//! Cell Tracking Challenge ground truth: a track table `man_track.txt` with
//! lines `L B E P` plus one label grid per frame, `man_trackNNN.pgm`, in
//! plain (P2) or raw (P5) portable graymap format. Pixel value 0 is
//! background, any other value is the track label.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use trackuq_core::model::{Assignment, Detection, Frame, Mask};

use crate::error::{CliError, Result};
use crate::sequence::Sequence;

pub const TRACK_FILE: &str = "man_track.txt";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Track {
    pub label: u32,
    pub begin: usize,
    pub end: usize,
    /// 0 when the track has no parent.
    pub parent: u32,
}

pub fn parse_track_line(line: &str) -> std::result::Result<Track, String> {
    let fields: Vec<&str> = line.split_whitespace().collect();
    if fields.len() != 4 {
        return Err(format!("expected 4 fields \"L B E P\", found {}", fields.len()));
    }
    let num = |k: usize| -> std::result::Result<u64, String> {
        fields[k]
            .parse::<u64>()
            .map_err(|_| format!("field {} is not a non-negative integer: {:?}", k + 1, fields[k]))
    };
    let (label, begin, end, parent) = (num(0)?, num(1)?, num(2)?, num(3)?);
    if label == 0 || label > u32::MAX as u64 || parent > u32::MAX as u64 {
        return Err(format!("label {label} or parent {parent} out of range"));
    }
    if end < begin {
        return Err(format!("track {label} ends ({end}) before it begins ({begin})"));
    }
    Ok(Track {
        label: label as u32,
        begin: begin as usize,
        end: end as usize,
        parent: parent as u32,
    })
}

pub fn parse_tracks(text: &str, file: &Path) -> Result<BTreeMap<u32, Track>> {
    let mut tracks = BTreeMap::new();
    for (k, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let t = parse_track_line(line).map_err(|m| CliError::parse(file, k + 1, m))?;
        if tracks.insert(t.label, t).is_some() {
            return Err(CliError::parse(file, k + 1, format!("track {} listed twice", t.label)));
        }
    }
    Ok(tracks)
}

/// A label grid, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelGrid {
    pub width: usize,
    pub height: usize,
    pub labels: Vec<u32>,
}

impl LabelGrid {
    pub fn masks(&self) -> BTreeMap<u32, Vec<(i64, i64)>> {
        let mut out: BTreeMap<u32, Vec<(i64, i64)>> = BTreeMap::new();
        for (k, &l) in self.labels.iter().enumerate() {
            if l != 0 {
                out.entry(l)
                    .or_default()
                    .push(((k % self.width) as i64, (k / self.width) as i64));
            }
        }
        out
    }
}

struct Header {
    magic: [u8; 2],
    width: usize,
    height: usize,
    maxval: usize,
    /// Offset of the first raster byte.
    data: usize,
}

/// Reads the next header token, skipping whitespace and `#` comments.
fn token(bytes: &[u8], pos: &mut usize) -> Option<String> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    (start < *pos).then(|| String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
}

fn header(bytes: &[u8]) -> std::result::Result<Header, String> {
    if bytes.len() < 2 || bytes[0] != b'P' || !(bytes[1] == b'2' || bytes[1] == b'5') {
        return Err("not a P2/P5 graymap".into());
    }
    let mut pos = 2;
    let mut num = |what: &str| -> std::result::Result<usize, String> {
        token(bytes, &mut pos)
            .ok_or_else(|| format!("missing {what}"))?
            .parse::<usize>()
            .map_err(|_| format!("bad {what}"))
    };
    let width = num("width")?;
    let height = num("height")?;
    let maxval = num("maxval")?;
    if maxval == 0 || maxval > 65535 {
        return Err(format!("maxval {maxval} out of range"));
    }
    // exactly one whitespace byte separates the header from a raw raster
    Ok(Header {
        magic: [bytes[0], bytes[1]],
        width,
        height,
        maxval,
        data: pos + 1,
    })
}

pub fn parse_pgm(bytes: &[u8]) -> std::result::Result<LabelGrid, String> {
    let h = header(bytes)?;
    let count = h.width * h.height;
    let labels: Vec<u32> = if h.magic[1] == b'5' {
        let depth = if h.maxval > 255 { 2 } else { 1 };
        let raster = bytes.get(h.data..).unwrap_or(&[]);
        if raster.len() < count * depth {
            return Err(format!("raster holds {} bytes, expected {}", raster.len(), count * depth));
        }
        if depth == 1 {
            raster[..count].iter().map(|&b| b as u32).collect()
        } else {
            raster[..2 * count]
                .chunks_exact(2)
                .map(|c| u16::from_be_bytes([c[0], c[1]]) as u32)
                .collect()
        }
    } else {
        let mut pos = h.data - 1;
        let mut out = Vec::with_capacity(count);
        while let Some(tok) = token(bytes, &mut pos) {
            out.push(tok.parse::<u32>().map_err(|_| format!("bad pixel value {tok:?}"))?);
        }
        if out.len() != count {
            return Err(format!("{} pixel values, expected {count}", out.len()));
        }
        out
    };
    if let Some(v) = labels.iter().find(|&&v| v as usize > h.maxval) {
        return Err(format!("pixel value {v} exceeds maxval {}", h.maxval));
    }
    Ok(LabelGrid {
        width: h.width,
        height: h.height,
        labels,
    })
}

/// Plain (P2) encoding, for fixtures and conversions.
pub fn write_pgm(grid: &LabelGrid) -> String {
    let maxval = grid.labels.iter().copied().max().unwrap_or(0).max(1);
    let mut out = format!("P2\n{} {}\n{maxval}\n", grid.width, grid.height);
    for row in grid.labels.chunks(grid.width.max(1)) {
        let line: Vec<String> = row.iter().map(u32::to_string).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}

fn grid_files(dir: &Path) -> Result<BTreeMap<usize, PathBuf>> {
    let mut out = BTreeMap::new();
    let entries = fs::read_dir(dir).map_err(|e| CliError::io(dir, e))?;
    for entry in entries {
        let path = entry.map_err(|e| CliError::io(dir, e))?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
            continue;
        };
        let Some(digits) = name.strip_prefix("man_track").and_then(|r| r.strip_suffix(".pgm")) else {
            continue;
        };
        if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
            continue;
        }
        let t: usize = digits.parse().map_err(|_| CliError::parse(&path, 0, "frame number out of range"))?;
        if let Some(prev) = out.insert(t, path.clone()) {
            return Err(CliError::Integrity(format!(
                "{} and {} both hold frame {t}",
                prev.display(),
                path.display()
            )));
        }
    }
    Ok(out)
}

/// Loads a CTC ground-truth directory. Detections are ordered by label.
/// A daughter is linked to the same label in the previous frame, else to
/// its parent track if that is present there, else it appears.
pub fn load(dir: &Path) -> Result<Sequence> {
    let track_path = dir.join(TRACK_FILE);
    let text = fs::read_to_string(&track_path).map_err(|e| CliError::io(&track_path, e))?;
    let tracks = parse_tracks(&text, &track_path)?;
    for t in tracks.values() {
        if t.parent != 0 && !tracks.contains_key(&t.parent) {
            return Err(CliError::Integrity(format!(
                "track {} names unknown parent {}",
                t.label, t.parent
            )));
        }
    }

    let files = grid_files(dir)?;
    for (k, &t) in files.keys().enumerate() {
        if k != t {
            return Err(CliError::Integrity(format!(
                "label grids are not contiguous from frame 0 (frame {k} missing)"
            )));
        }
    }
    let mut frames = Vec::with_capacity(files.len());
    let mut present: Vec<BTreeSet<u32>> = Vec::with_capacity(files.len());
    for (&t, path) in &files {
        let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
        let grid = parse_pgm(&bytes).map_err(|m| CliError::parse(path, 0, m))?;
        let masks = grid.masks();
        let mut labels = BTreeSet::new();
        let mut dets = Vec::with_capacity(masks.len());
        for (label, pixels) in masks {
            match tracks.get(&label) {
                Some(tr) if (tr.begin..=tr.end).contains(&t) => {}
                _ => {
                    return Err(CliError::Integrity(format!(
                        "label {label} in {} is not active at frame {t} in the track table",
                        path.display()
                    )))
                }
            }
            labels.insert(label);
            dets.push(Detection::from_mask(label, Mask::new(pixels))?);
        }
        frames.push(Frame::new(t, dets)?);
        present.push(labels);
    }
    for tr in tracks.values() {
        for t in (tr.begin..=tr.end).take_while(|&t| t < frames.len()) {
            if !present[t].contains(&tr.label) {
                return Err(CliError::Integrity(format!(
                    "track {} spans frame {t} but is missing from its label grid",
                    tr.label
                )));
            }
        }
    }

    let mut gt = Vec::with_capacity(frames.len().saturating_sub(1));
    for t in 1..frames.len() {
        let prev = &frames[t - 1];
        let parents: Vec<Option<usize>> = frames[t]
            .detections
            .iter()
            .map(|d| {
                prev.position_of(d.id).or_else(|| {
                    let tr = &tracks[&d.id];
                    (tr.begin == t && tr.parent != 0)
                        .then(|| prev.position_of(tr.parent))
                        .flatten()
                })
            })
            .collect();
        gt.push(Assignment::from_parents(prev.len(), &parents)?);
    }
    Sequence::new(frames, Some(gt), dir.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn track_line() {
        let t = parse_track_line("3 0 5 1").unwrap();
        assert_eq!(
            t,
            Track {
                label: 3,
                begin: 0,
                end: 5,
                parent: 1
            }
        );
        assert!(parse_track_line("3 5 0 1").is_err());
        assert!(parse_track_line("3 0 5").is_err());
        assert!(parse_track_line("0 0 5 1").is_err());
        assert!(parse_track_line("3 0 x 1").is_err());
    }

    #[test]
    fn duplicate_track_reports_line() {
        let err = parse_tracks("1 0 2 0\n\n1 0 3 0\n", Path::new("man_track.txt")).unwrap_err();
        assert!(matches!(err, CliError::Parse { line: 3, .. }));
    }

    #[test]
    fn plain_and_raw_graymaps_agree() {
        let plain = b"P2\n# comment\n3 2\n255\n0 1 1\n2 0 0\n";
        let mut raw = b"P5 3 2 255\n".to_vec();
        raw.extend([0u8, 1, 1, 2, 0, 0]);
        let a = parse_pgm(plain).unwrap();
        let b = parse_pgm(&raw).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.masks()[&1], vec![(1, 0), (2, 0)]);

        let mut wide = b"P5 2 1 65535\n".to_vec();
        wide.extend([0x01, 0x00, 0x00, 0x07]);
        assert_eq!(parse_pgm(&wide).unwrap().labels, vec![256, 7]);

        assert_eq!(parse_pgm(write_pgm(&a).as_bytes()).unwrap(), a);
        assert!(parse_pgm(b"P2 2 1 255 0").is_err());
        assert!(parse_pgm(b"P3 1 1 255 0").is_err());
    }
}
